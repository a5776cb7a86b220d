use std::collections::BTreeMap;

use ibac::harness::scenario::owrp_replica;
use ibac::sim::config::{AmbientSource, PolicyConfig, Traffic};
use ibac::sim::{run, run_with_trace, Outcome, SimConfig};
use proptest::prelude::*;

fn policy(k: u8) -> PolicyConfig {
    match k {
        0 => PolicyConfig::default(),
        1 => PolicyConfig::General,
        2 => PolicyConfig::default_threshold(),
        3 => PolicyConfig::WidestCommon,
        c => PolicyConfig::Static { level: c - 3 },
    }
}

fn small(dap: f64, n: u32, k: u8, seed: u64) -> SimConfig {
    SimConfig {
        duration: 60_000.0,
        ..SimConfig::two_bss(dap, n, policy(k), seed)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn records_are_consistent(dap in 20.0f64..200.0, n in 2u32..16, k in 0u8..8, seed in any::<u64>(), down in any::<bool>()) {
        let mut cfg = small(dap, n, k, seed);
        if down {
            cfg.traffic = Traffic::Downlink;
        }
        let r = run(&cfg).unwrap();
        prop_assert!(r.is_consistent());
        if r.attempts > 0 {
            let plr = 100.0 * (r.attempts - r.delivered) as f64 / r.attempts as f64;
            prop_assert_eq!(r.plr, plr);
            prop_assert!((r.bandwidth_pdf.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!((r.level_pdf.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let width_attempts: u64 = r.per_width.iter().map(|w| w.attempts).sum();
        prop_assert_eq!(width_attempts, r.attempts);
        let failures: u64 = r.per_width.iter().map(|w| w.failures).sum();
        prop_assert_eq!(failures, r.attempts - r.delivered);
        let station_attempts: u64 = r.per_station.iter().map(|s| s.attempts).sum();
        prop_assert_eq!(station_attempts, r.attempts);
        if let Some(j) = r.jain {
            let k = r.per_station.len() as f64;
            prop_assert!(j >= 1.0 / k - 1e-12 && j <= 1.0);
        }
        prop_assert!((0.0..=1.0).contains(&r.normalized_throughput));
    }

    #[test]
    fn traces_respect_channel_and_time_rules(dap in 40.0f64..160.0, n in 2u32..12, k in 0u8..8, seed in any::<u64>()) {
        let mut cfg = small(dap, n, k, seed);
        cfg.ambient.push(AmbientSource {
            channel: 2,
            position: (0.0, 10.0),
            anchor: Some(0),
            busy_us: 300.0,
            idle_us: 500.0,
        });
        let (r, trace) = run_with_trace(&cfg).unwrap();
        prop_assert_eq!(trace.len() as u64, r.attempts);
        let u = cfg.mac.levels;
        let band = 1u32 << (u - 1);
        let mut last_end: BTreeMap<u32, f64> = BTreeMap::new();
        let mut counts = [0u64; 4];
        for a in &trace {
            prop_assert!(a.end > a.start);
            let (lo, hi) = a.channels;
            prop_assert!(lo <= hi && (hi as u32) < band);
            let count = (hi - lo + 1) as u32;
            prop_assert_eq!(count, 1 << (a.width - 1));
            prop_assert_eq!(lo as u32 % count, 0);
            if !matches!(cfg.policy, PolicyConfig::General) {
                let c = a.level as u32;
                prop_assert!(count == 1 << (c - 1) || (c < u as u32 && count == 1 << c));
            }
            if let Some(prev) = last_end.insert(a.src, a.end) {
                prop_assert!(a.start >= prev);
            }
            counts[match a.outcome {
                Outcome::Success => 0,
                Outcome::Owrp => 1,
                Outcome::Simultaneous => 2,
                Outcome::OutOfRange => 3,
            }] += 1;
        }
        prop_assert_eq!(counts, [r.delivered, r.collisions_owrp, r.collisions_simultaneous, r.out_of_range]);
    }

    #[test]
    fn no_owrp_without_range_growth(dap in 40.0f64..160.0, n in 2u32..12, k in 0u8..8, seed in any::<u64>()) {
        let mut cfg = small(dap, n, k, seed);
        cfg.geometry.ir_grow = 1.0;
        prop_assert_eq!(run(&cfg).unwrap().owrp_count, 0);
    }

    #[test]
    fn fixed_seed_is_bit_identical(seed in any::<u64>(), k in 0u8..8) {
        let cfg = small(100.0, 8, k, seed);
        let a = serde_json::to_string(&run(&cfg).unwrap()).unwrap();
        let b = serde_json::to_string(&run(&cfg).unwrap()).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn distinct_seeds_give_distinct_traces() {
    let traces: Vec<Vec<String>> = (0..5)
        .map(|s| {
            let (_, t) = run_with_trace(&small(100.0, 10, 0, s)).unwrap();
            t.iter().map(|a| a.trace_line()).collect()
        })
        .collect();
    for i in 0..traces.len() {
        for j in i + 1..traces.len() {
            assert_ne!(traces[i], traces[j], "seeds {i} and {j}");
        }
    }
}

#[test]
fn replica_owrp_tags_follow_the_grown_range() {
    let (r, trace) = run_with_trace(&owrp_replica(PolicyConfig::Static { level: 3 }, 1)).unwrap();
    assert!(r.owrp_count > 0);
    // Most tags land on the link whose receiver sits in the grown range.
    let tagged: Vec<_> = trace.iter().filter(|a| a.outcome == Outcome::Owrp).collect();
    let near = tagged.iter().filter(|a| a.dst == 2).count();
    assert!(2 * near > tagged.len(), "{near} of {}", tagged.len());
    let narrow = run(&owrp_replica(PolicyConfig::Static { level: 1 }, 1)).unwrap();
    assert!(narrow.owrp_count < r.owrp_count);
}

#[test]
fn lone_station_never_loses_a_frame() {
    for seed in 0..5 {
        let r = run(&small(100.0, 1, 0, seed)).unwrap();
        assert!(r.attempts > 0);
        assert_eq!(r.plr, 0.0);
    }
}

/// Mean PLR per DAP for one policy under `tweak`.
fn plr_by_dap(k: u8, tweak: &dyn Fn(&mut SimConfig)) -> Vec<f64> {
    [80.0, 100.0, 120.0, 140.0, 160.0]
        .iter()
        .map(|&dap| {
            let mut sum = 0.0;
            let mut cells = 0.0;
            for n in [10, 20, 30] {
                for seed in 0..10 {
                    let mut cfg = SimConfig {
                        duration: 500_000.0,
                        ..SimConfig::two_bss(dap, n, policy(k), seed)
                    };
                    tweak(&mut cfg);
                    sum += run(&cfg).unwrap().plr;
                    cells += 1.0;
                }
            }
            sum / cells
        })
        .collect()
}

#[test]
fn plr_falls_with_ap_separation_across_range_knobs() {
    let knobs: [(&str, Box<dyn Fn(&mut SimConfig)>); 5] = [
        ("default", Box::new(|_| {})),
        ("ir_grow -20%", Box::new(|c| c.geometry.ir_grow = 1.2)),
        ("ir_grow +20%", Box::new(|c| c.geometry.ir_grow = 1.3)),
        ("tr_shrink -20%", Box::new(|c| c.geometry.tr_shrink = 0.76)),
        ("tr_shrink +20%", Box::new(|c| c.geometry.tr_shrink = 0.84)),
    ];
    for (name, tweak) in &knobs {
        let ibac = plr_by_dap(0, tweak.as_ref());
        let general = plr_by_dap(1, tweak.as_ref());
        for (label, series) in [("ibac", &ibac), ("general", &general)] {
            assert!(
                series.windows(2).all(|w| w[1] <= w[0]),
                "{name}: {label} PLR by DAP {series:?}"
            );
        }
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        assert!(mean(&ibac) < mean(&general), "{name}: ibac {ibac:?} general {general:?}");
    }
}
