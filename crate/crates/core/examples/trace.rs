//! Print the first attempts of a run and tally outcomes per width.

use ibac::sim::config::PolicyConfig;
use ibac::sim::{run_with_trace, Outcome, SimConfig, TxAttempt};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = SimConfig {
        duration: 100_000.0,
        ..SimConfig::two_bss(90.0, 6, PolicyConfig::default(), 3)
    };
    let (rec, trace) = run_with_trace(&cfg)?;
    println!("{}", TxAttempt::trace_header());
    for a in trace.iter().take(12) {
        println!("{}", a.trace_line());
    }
    let mut tally = [[0u64; 2]; 4];
    for a in &trace {
        tally[a.width as usize - 1][(a.outcome != Outcome::Success) as usize] += 1;
    }
    for (w, [ok, lost]) in tally.iter().enumerate().filter(|(_, t)| t[0] + t[1] > 0) {
        println!("{:>3} MHz: {ok} delivered, {lost} lost", 20 << w);
    }
    println!("plr {:.2}%", rec.plr);
    Ok(())
}
