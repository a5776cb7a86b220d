//! Compare every policy on the two-BSS layout at a few AP separations.

use ibac::sim::config::PolicyConfig;
use ibac::sim::{run, SimConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let policies = [
        PolicyConfig::default(),
        PolicyConfig::General,
        PolicyConfig::default_threshold(),
        PolicyConfig::WidestCommon,
        PolicyConfig::Static { level: 1 },
    ];
    println!("{:<20} {:>5} {:>10} {:>7} {:>6}", "policy", "dap", "tput Mbps", "plr %", "wide");
    for p in &policies {
        for dap in [80.0, 120.0, 160.0] {
            let cfg = SimConfig {
                duration: 300_000.0,
                ..SimConfig::two_bss(dap, 10, p.clone(), 1)
            };
            let r = run(&cfg)?;
            println!(
                "{:<20} {dap:>5} {:>10.2} {:>7.2} {:>6.3}",
                p.label(),
                r.throughput_mbps,
                r.plr,
                r.wide_fraction()
            );
        }
    }
    Ok(())
}
