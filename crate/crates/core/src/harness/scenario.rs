//! Sweep specifications and the fixed topologies used by the checks.

use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::HarnessError;
use crate::sim::config::{NodeKind, NodeSpec, PolicyConfig, SimConfig, Traffic};

pub const DEFAULT_DAPS: [f64; 5] = [80.0, 100.0, 120.0, 140.0, 160.0];
pub const DEFAULT_STATIONS: [u32; 6] = [5, 10, 15, 20, 25, 30];
pub const DEFAULT_SEEDS: u64 = 10;

/// The cross product to run: every policy at every station count, AP
/// separation and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub policies: Vec<PolicyConfig>,
    pub stations: Vec<u32>,
    pub daps: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Simulated time per cell, µs.
    pub duration_us: f64,
    /// Merged into every generated `SimConfig`, e.g. `geometry.cr = 50`.
    pub overrides: toml::Table,
    pub out: Option<PathBuf>,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            policies: vec![
                PolicyConfig::default(),
                PolicyConfig::General,
                PolicyConfig::default_threshold(),
                PolicyConfig::WidestCommon,
            ],
            stations: DEFAULT_STATIONS.to_vec(),
            daps: DEFAULT_DAPS.to_vec(),
            seeds: (0..DEFAULT_SEEDS).collect(),
            duration_us: 1_000_000.0,
            overrides: toml::Table::new(),
            out: None,
        }
    }
}

/// One point of the cross product. `policy` indexes `ScenarioSpec::policies`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Cell {
    pub policy: usize,
    pub stations: u32,
    pub dap: f64,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::InvalidScenario(m));
        if self.policies.is_empty() || self.stations.is_empty() || self.daps.is_empty() || self.seeds.is_empty() {
            return bad("policies, stations, daps and seeds must all be non-empty".into());
        }
        if let Some(n) = self.stations.iter().find(|n| !(2..=30).contains(*n)) {
            return bad(format!("station count {n} outside 2..=30"));
        }
        if let Some(d) = self.daps.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
            return bad(format!("AP separation {d} must be finite and > 0"));
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return bad("seeds must be distinct".into());
        }
        if !(self.duration_us.is_finite() && self.duration_us > 0.0) {
            return bad("duration_us must be finite and > 0".into());
        }
        Ok(())
    }

    /// Cells in canonical order: policy, stations, DAP, seed.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::with_capacity(
            self.policies.len() * self.stations.len() * self.daps.len() * self.seeds.len(),
        );
        for policy in 0..self.policies.len() {
            for &stations in &self.stations {
                for &dap in &self.daps {
                    for &seed in &self.seeds {
                        out.push(Cell {
                            policy,
                            stations,
                            dap,
                            seed,
                        });
                    }
                }
            }
        }
        out
    }

    /// The simulator configuration of one cell, overrides applied.
    pub fn config_for(&self, cell: &Cell) -> Result<SimConfig, HarnessError> {
        let mut cfg = SimConfig::two_bss(
            cell.dap,
            cell.stations,
            self.policies[cell.policy].clone(),
            cell.seed,
        );
        cfg.duration = self.duration_us;
        if self.overrides.is_empty() {
            return Ok(cfg);
        }
        let mut value = serde_json::to_value(&cfg).map_err(|e| HarnessError::Parse(e.to_string()))?;
        let patch = serde_json::to_value(&self.overrides).map_err(|e| HarnessError::Parse(e.to_string()))?;
        merge(&mut value, patch);
        serde_json::from_value(value).map_err(|e| HarnessError::Parse(format!("overrides: {e}")))
    }

    /// SHA-256 of the canonical JSON form.
    pub fn config_hash(&self) -> String {
        hash_json(self)
    }
}

pub fn hash_json<T: Serialize>(value: &T) -> String {
    use sha2::{Digest, Sha256};
    let text = serde_json::to_string(value).expect("configs serialize");
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn merge(base: &mut serde_json::Value, patch: serde_json::Value) {
    match (base, patch) {
        (serde_json::Value::Object(b), serde_json::Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Two downlink BSSs in a line. AP1 serves STA1 20 m away; AP2 sits 70 m
/// beyond STA1, too far to sense AP1 but inside the interference range
/// STA1 has at level 3 and outside the one it has at level 1. AP2 serves
/// STA2 further out.
pub fn owrp_replica(policy: PolicyConfig, seed: u64) -> SimConfig {
    let node = |id, kind, x: f64, bss| NodeSpec {
        id,
        kind,
        position: (x, 0.0),
        bss,
        primary: 0,
    };
    let nodes = vec![
        node(0, NodeKind::Ap, 0.0, 0),
        node(1, NodeKind::Ap, 90.0, 1),
        node(2, NodeKind::Sta, 20.0, 0),
        node(3, NodeKind::Sta, 110.0, 1),
    ];
    let mut cfg = SimConfig::explicit(nodes, policy, seed);
    cfg.traffic = Traffic::Downlink;
    cfg
}
