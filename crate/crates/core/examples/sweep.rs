//! A small sweep written to a temporary directory, then read back.

use ibac::harness::io::read_csv;
use ibac::harness::scenario::ScenarioSpec;
use ibac::harness::sweep::{sweep, PlrRow};
use ibac::sim::config::PolicyConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = ScenarioSpec {
        policies: vec![PolicyConfig::default(), PolicyConfig::General],
        stations: vec![5, 15],
        daps: vec![80.0, 160.0],
        seeds: vec![0, 1],
        duration_us: 200_000.0,
        ..Default::default()
    };
    let set = sweep(&spec, 1)?;
    let dir = std::env::temp_dir().join("ibac-example-sweep");
    let files = set.write(&dir, &spec)?;
    println!("{} cells, wrote {} to {}", set.records.len(), files.join(", "), dir.display());
    for row in read_csv::<PlrRow>(&dir.join("plr_vs_dap.csv"))? {
        println!("{:<10} dap {:>5}  plr {:6.2}%", row.policy, row.dap, row.plr_mean);
    }
    Ok(())
}
