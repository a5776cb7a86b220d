//! Compare the analytic throughput against a single-BSS simulation with the
//! conditional collision probability fitted from the run.

use ibac::harness::crosscheck::crosscheck;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("{:>3} {:>8} {:>10} {:>10} {:>8}", "n", "kappa", "analytic", "simulated", "err %");
    for n in [1, 5, 10, 20, 30] {
        let row = crosscheck(n, 2, 1_000_000.0)?;
        println!(
            "{n:>3} {:>8.4} {:>10.5} {:>10.5} {:>8.3}",
            row.kappa_hat,
            row.analytic,
            row.simulated,
            100.0 * row.rel_err
        );
    }
    Ok(())
}
