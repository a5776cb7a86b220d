//! Two hidden BSSs in a line: wide transmissions grow the interference
//! range of the first receiver until the second AP corrupts it.

use ibac::harness::scenario::owrp_replica;
use ibac::sim::config::PolicyConfig;
use ibac::sim::run;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for level in 1..=4 {
        let mut owrp = 0;
        let mut plr = 0.0;
        for seed in 0..5 {
            let r = run(&owrp_replica(PolicyConfig::Static { level }, seed))?;
            owrp += r.owrp_count;
            plr += r.plr / 5.0;
        }
        println!("static level {level}: owrp collisions {owrp:>6}  mean plr {plr:6.2}%");
    }
    let mut flat = owrp_replica(PolicyConfig::Static { level: 3 }, 0);
    flat.geometry.ir_grow = 1.0;
    println!("level 3, no range growth: owrp collisions {}", run(&flat)?.owrp_count);
    Ok(())
}
