//! Range model: transmission range shrinks and interference range grows
//! with the bonded width.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryParams {
    /// Transmission range at 20 MHz, m.
    pub tr_base: f64,
    /// Interference range at 20 MHz, m.
    pub ir_base: f64,
    /// TR factor per level step, `< 1`.
    pub tr_shrink: f64,
    /// IR factor per level step, `> 1`.
    pub ir_grow: f64,
    /// Carrier-sense range, m.
    pub cr: f64,
    pub pathloss_exponent: f64,
    /// Link SNR at 1 m on one 20 MHz channel, dB.
    pub snr_ref: f64,
    /// Extra noise above the reference floor per 20 MHz channel, dB.
    pub noise_per_20mhz: f64,
}

impl Default for GeometryParams {
    fn default() -> Self {
        Self {
            tr_base: 60.0,
            ir_base: 55.0,
            tr_shrink: 0.8,
            ir_grow: 1.25,
            cr: 45.0,
            pathloss_exponent: 3.0,
            snr_ref: 72.0,
            noise_per_20mhz: 0.0,
        }
    }
}

impl GeometryParams {
    /// Geometry with width-independent ranges.
    pub fn flat(mut self) -> Self {
        self.tr_shrink = 1.0;
        self.ir_grow = 1.0;
        self
    }

    /// Mean link SNR at distance `d` before any walk.
    pub fn snr_at(&self, d: f64) -> f64 {
        self.snr_ref - self.noise_per_20mhz - 10.0 * self.pathloss_exponent * d.max(1.0).log10()
    }

    /// Distance at which a link with geometric distance `d` currently
    /// behaves, given its instantaneous SNR.
    pub fn effective_distance(&self, d: f64, snr: f64) -> f64 {
        d.max(1.0) * 10f64.powf((self.snr_at(d) - snr) / (10.0 * self.pathloss_exponent))
    }

    /// Widest level whose TR still covers distance `d`, at least 1.
    pub fn max_level_for(&self, d: f64, u: u8) -> u8 {
        (1..=u)
            .rev()
            .find(|&c| d <= ranges_for_level(self, c).0)
            .unwrap_or(1)
    }
}

/// `(tr, ir)` at level `c`: `tr_base * tr_shrink^(c-1)`, `ir_base * ir_grow^(c-1)`.
pub fn ranges_for_level(g: &GeometryParams, c: u8) -> (f64, f64) {
    let steps = c.max(1) as i32 - 1;
    (g.tr_base * g.tr_shrink.powi(steps), g.ir_base * g.ir_grow.powi(steps))
}

pub fn distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        let g = GeometryParams {
            tr_base: 100.0,
            ir_base: 90.0,
            ..Default::default()
        };
        assert_eq!(ranges_for_level(&g, 1), (100.0, 90.0));
        let (tr, ir) = ranges_for_level(&g, 3);
        assert!((tr - 64.0).abs() < 1e-12);
        assert!((ir - 140.625).abs() < 1e-12);
        for c in 1..6 {
            let (t0, i0) = ranges_for_level(&g, c);
            let (t1, i1) = ranges_for_level(&g, c + 1);
            assert!(t1 < t0 && i1 > i0);
        }
    }

    #[test]
    fn effective_distance_tracks_snr() {
        let g = GeometryParams::default();
        let d = 20.0;
        assert!((g.effective_distance(d, g.snr_at(d)) - d).abs() < 1e-9);
        assert!(g.effective_distance(d, g.snr_at(d) - 3.0) > d);
        assert!(g.effective_distance(d, g.snr_at(d) + 3.0) < d);
    }

    #[test]
    fn level_capability() {
        let g = GeometryParams::default();
        assert_eq!(g.max_level_for(10.0, 4), 4);
        assert_eq!(g.max_level_for(45.0, 4), 2);
        assert_eq!(g.max_level_for(500.0, 4), 1);
    }
}
