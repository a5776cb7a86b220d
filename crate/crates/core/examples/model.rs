//! Solve the analytic model across station counts and print throughput and
//! the bonding probability of every level.

use ibac::markov::{bonding_prob, solve_fixed_point, MacTiming, ModelParams, SolverConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let timing = MacTiming::ieee80211ax(77.16);
    println!("{:>5} {:>3} {:>10} {:>8} {:>10} {:>7}  bonding P(c), c = 1..4", "kappa", "n", "upsilon_c", "nu", "S", "clamped");
    for (kappa, n) in [0.0, 0.1].into_iter().flat_map(|k| [1, 2, 5, 10, 20, 30].map(|n| (k, n))) {
        let params = ModelParams::new(n, 16, 6, 4, kappa).with_channel_state(0.3, 0.5);
        let sol = solve_fixed_point(&params, &timing, &SolverConfig::default())?;
        let levels: Vec<String> = (1..=4)
            .map(|c| bonding_prob(&params, c).map(|p| format!("{p:.3}")))
            .collect::<Result<_, _>>()?;
        println!(
            "{kappa:>5} {n:>3} {:>10.5} {:>8.5} {:>10.5} {:>7}  {}",
            sol.upsilon_c,
            sol.nu,
            sol.throughput,
            sol.clamped,
            levels.join(" ")
        );
    }
    Ok(())
}
