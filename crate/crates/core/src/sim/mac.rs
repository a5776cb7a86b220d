//! Backoff draws and channel-block arithmetic of bonded access.
//!
//! Channel sets are bit masks over the `2^(u-1)` channels of the band.

use rand::Rng;

/// Contention window at `stage`: `2^min(stage, m) * W`.
pub fn contention_window(stage: u32, cw_min: u32, max_stage: u32) -> u32 {
    cw_min << stage.min(max_stage)
}

/// Uniform backoff draw in `[0, W_i - 1]`.
pub fn dcf_backoff_step<R: Rng + ?Sized>(stage: u32, cw_min: u32, max_stage: u32, rng: &mut R) -> u32 {
    rng.gen_range(0..contention_window(stage, cw_min, max_stage))
}

/// Mask of the aligned `2^(c-1)`-channel block holding `primary`.
pub fn block_mask(primary: u8, c: u8) -> u32 {
    let size = 1u32 << (c.max(1) - 1);
    let lo = (primary as u32 / size) * size;
    (((1u64 << size) - 1) as u32) << lo
}

/// The sibling block that doubles `block_mask(primary, c)`, if it fits in
/// `u` levels.
pub fn secondary_mask(primary: u8, c: u8, u: u8) -> Option<u32> {
    if c >= u {
        return None;
    }
    let size = 1u32 << (c.max(1) - 1);
    let lo = (primary as u32 / size) * size;
    Some((((1u64 << size) - 1) as u32) << (lo ^ size))
}

/// Lowest and highest channel index of a non-empty contiguous mask.
pub fn mask_range(mask: u32) -> (u8, u8) {
    (mask.trailing_zeros() as u8, (31 - mask.leading_zeros()) as u8)
}

/// Width class of a mask: `log2(channels) + 1`.
pub fn width_class(mask: u32) -> u8 {
    mask.count_ones().trailing_zeros() as u8 + 1
}

/// The channels a transmission will occupy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AcquirePlan {
    pub mask: u32,
    /// Level that was contended for.
    pub level: u8,
    /// Width class actually used.
    pub width: u8,
    /// The request could not be met in full.
    pub fallback: bool,
}

/// Bonded access at level `c`: the level-`c` block was won by backoff; the
/// sibling block is added if it was idle for the PIFS window. `idle`
/// answers that question for a mask.
pub fn dbca_acquire(primary: u8, c: u8, u: u8, idle: impl Fn(u32) -> bool) -> AcquirePlan {
    let block = block_mask(primary, c);
    match secondary_mask(primary, c, u) {
        Some(sec) if idle(sec) => AcquirePlan {
            mask: block | sec,
            level: c,
            width: c + 1,
            fallback: false,
        },
        Some(_) => AcquirePlan {
            mask: block,
            level: c,
            width: c,
            fallback: true,
        },
        None => AcquirePlan {
            mask: block,
            level: c,
            width: c,
            fallback: false,
        },
    }
}

/// Standard dynamic bandwidth access: the 20 MHz primary was won by
/// backoff, and the width doubles through each idle sibling block in turn
/// up to the whole band.
pub fn cascade_acquire(primary: u8, u: u8, idle: impl Fn(u32) -> bool) -> AcquirePlan {
    let mut mask = block_mask(primary, 1);
    let mut width = 1;
    while let Some(sec) = secondary_mask(primary, width, u) {
        if !idle(sec) {
            break;
        }
        mask |= sec;
        width += 1;
    }
    AcquirePlan {
        mask,
        level: u,
        width,
        fallback: width < u,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn backoff_range_and_cap() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            assert!(dcf_backoff_step(0, 16, 6, &mut rng) < 16);
        }
        assert_eq!(contention_window(6 + 3, 16, 6), 16 << 6);
        let n = 100_000;
        let mean = (0..n)
            .map(|_| dcf_backoff_step(0, 16, 6, &mut rng) as f64)
            .sum::<f64>()
            / n as f64;
        assert!((mean - 7.5).abs() < 0.1, "{mean}");
    }

    #[test]
    fn blocks() {
        assert_eq!(block_mask(0, 1), 0b1);
        assert_eq!(block_mask(1, 1), 0b10);
        assert_eq!(block_mask(1, 2), 0b11);
        assert_eq!(block_mask(5, 3), 0b1111_0000);
        assert_eq!(block_mask(5, 4), 0xff);
        assert_eq!(secondary_mask(0, 2, 4), Some(0b1100));
        assert_eq!(secondary_mask(5, 3, 4), Some(0b1111));
        assert_eq!(secondary_mask(0, 4, 4), None);
        assert_eq!(mask_range(0b1111_0000), (4, 7));
        assert_eq!(width_class(0xff), 4);
        assert_eq!(width_class(0b1), 1);
    }

    #[test]
    fn acquire() {
        let all = dbca_acquire(0, 2, 4, |_| true);
        assert_eq!(mask_range(all.mask), (0, 3));
        assert!(!all.fallback);
        let busy = dbca_acquire(0, 2, 4, |_| false);
        assert_eq!(mask_range(busy.mask), (0, 1));
        assert!(busy.fallback);
        let top = dbca_acquire(0, 4, 4, |_| false);
        assert_eq!(top.mask, 0xff);
        assert!(!top.fallback);
        let single = dbca_acquire(0, 1, 1, |_| true);
        assert_eq!(single.mask, 1);
    }

    #[test]
    fn cascade() {
        assert_eq!(cascade_acquire(0, 4, |_| true).mask, 0xff);
        let stop = cascade_acquire(0, 4, |m| m != 0b1111_0000);
        assert_eq!(stop.mask, 0b1111);
        assert_eq!(stop.width, 3);
        assert!(stop.fallback);
        let one = cascade_acquire(2, 4, |_| false);
        assert_eq!(one.mask, 0b100);
        assert_eq!(cascade_acquire(0, 1, |_| true).mask, 1);
    }
}
