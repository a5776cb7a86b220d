//! Drive the level-selection policy against a synthetic environment where
//! level 3 pays best at high SNR and level 1 at low SNR.

use ibac::policy::{BucketConfig, PolicyState, StatTable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn reward(snr: f64, level: u8) -> f64 {
    let best = if snr > 40.0 { 3 } else { 1 };
    let base = 0.6 - 0.15 * (level as f64 - best as f64).abs();
    base.max(0.05)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let table = StatTable::new(BucketConfig::default(), 4)?;
    let mut state = PolicyState::new(table, 20, 7);
    let mut env = ChaCha8Rng::seed_from_u64(99);
    let mut picks = [[0u32; 4]; 2];
    for round in 0..4000 {
        let snr = if env.gen_bool(0.5) { 30.0 } else { 50.0 };
        let d = state.decide(snr);
        let r = (reward(snr, d.level) + env.gen_range(-0.1..0.1)).clamp(0.0, 1.0);
        state.update(snr, d.level, r)?;
        if round >= 3000 {
            picks[(snr > 40.0) as usize][d.level as usize - 1] += 1;
        }
    }
    for (name, row) in ["snr 30", "snr 50"].iter().zip(picks) {
        println!("{name}: last 1000 rounds by level {row:?}");
    }
    Ok(())
}
