//! Analytic model against the simulator on a single co-located BSS.
//!
//! All stations sit within a few metres of the AP on a single 20 MHz
//! channel (`Static(1)`, `u = 1`), with width-independent ranges. The simulator has
//! no `κ`, so the model is fitted to the run: `p` and `γ` come from the
//! channel monitor, `κ̂` is calibrated so that the model's collision
//! probability equals the observed failure fraction, and `𝒯` is then
//! evaluated at that state and compared with the measured share of time
//! spent on successful payload.

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, ModelError};
use crate::markov::{calibrate_kappa, evaluate_at_channel_state, KappaFit, ModelParams};
use crate::sim::config::{NodeKind, NodeSpec, PolicyConfig, SimConfig};
use crate::sim::run;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossCheckRow {
    pub n: u32,
    pub seeds: u64,
    pub busy_prob: f64,
    pub access_prob: f64,
    pub collision_fraction: f64,
    pub kappa_hat: f64,
    pub kappa_reached: bool,
    pub analytic: f64,
    pub simulated: f64,
    pub rel_err: f64,
}

/// The single-BSS configuration the cross-check runs.
pub fn crosscheck_config(n: u32, seed: u64, duration_us: f64) -> SimConfig {
    let mut nodes = vec![NodeSpec {
        id: 0,
        kind: NodeKind::Ap,
        position: (0.0, 0.0),
        bss: 0,
        primary: 0,
    }];
    for k in 0..n {
        let phi = std::f64::consts::TAU * k as f64 / n as f64;
        nodes.push(NodeSpec {
            id: k + 1,
            kind: NodeKind::Sta,
            position: (5.0 * phi.cos(), 5.0 * phi.sin()),
            bss: 0,
            primary: 0,
        });
    }
    let mut cfg = SimConfig::explicit(nodes, PolicyConfig::Static { level: 1 }, seed);
    cfg.duration = duration_us;
    cfg.geometry.ir_grow = 1.0;
    cfg.geometry.tr_shrink = 1.0;
    cfg.mac.retry_limit = None;
    cfg.mac.levels = 1;
    cfg
}

/// Run `seeds` replications for `n` stations and compare.
pub fn crosscheck(n: u32, seeds: u64, duration_us: f64) -> Result<CrossCheckRow, HarnessError> {
    if n == 0 || seeds == 0 {
        return Err(HarnessError::InvalidScenario(
            "cross-check needs at least one station and one seed".into(),
        ));
    }
    let mut acc = [0.0; 4];
    let mut template = None;
    for seed in 0..seeds {
        let cfg = crosscheck_config(n, seed, duration_us);
        let rec = run(&cfg)?;
        acc[0] += rec.observed.busy_prob;
        acc[1] += rec.observed.access_prob;
        acc[2] += rec.observed.collision_fraction;
        acc[3] += rec.normalized_throughput;
        template.get_or_insert(cfg);
    }
    let k = seeds as f64;
    let [p, gamma, fail, simulated] = acc.map(|x| x / k);
    let cfg = template.expect("at least one seed");
    let mac = &cfg.mac;
    let params = ModelParams::new(n, mac.cw_min, mac.max_stage, 1, 0.0)
        .with_channel_state(p.clamp(0.0, 1.0), gamma.clamp(0.0, 1.0));
    // A lone station never sees a busy slot after an idle one.
    let fit = match calibrate_kappa(&params, fail) {
        Err(ModelError::DegenerateDenominator) => KappaFit {
            kappa: 0.0,
            reached: true,
        },
        other => other?,
    };
    let timing = mac.timing.with_payload(mac.payload_us(1));
    let sol = evaluate_at_channel_state(&ModelParams { kappa: fit.kappa, ..params }, &timing)?;
    Ok(CrossCheckRow {
        n,
        seeds,
        busy_prob: p,
        access_prob: gamma,
        collision_fraction: fail,
        kappa_hat: fit.kappa,
        kappa_reached: fit.reached,
        analytic: sol.throughput,
        simulated,
        rel_err: (sol.throughput - simulated).abs() / simulated,
    })
}
