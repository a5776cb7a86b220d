//! Simulation configuration and its validation.

use serde::{Deserialize, Serialize};

use crate::baselines::PolicySpec;
use crate::error::{FieldIssue, SimError};
use crate::markov::MacTiming;
use crate::policy::BucketConfig;

use super::geometry::GeometryParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Ap,
    Sta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: u32,
    pub kind: NodeKind,
    pub position: (f64, f64),
    /// Id of the AP this node belongs to. An AP names itself.
    pub bss: u32,
    /// Primary 20 MHz channel of the BSS. Only read on APs.
    #[serde(default)]
    pub primary: u8,
}

/// Inter-frame spaces and frame durations, µs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimingConfig {
    pub sigma: f64,
    pub sifs: f64,
    pub difs: f64,
    pub header: f64,
    pub ack: f64,
    pub delta: f64,
}

impl Default for TimingConfig {
    fn default() -> Self {
        let t = MacTiming::ieee80211ax(1.0);
        Self {
            sigma: t.sigma,
            sifs: t.sifs,
            difs: t.difs,
            header: t.header,
            ack: t.ack,
            delta: t.delta,
        }
    }
}

impl TimingConfig {
    pub fn with_payload(&self, payload: f64) -> MacTiming {
        MacTiming {
            sigma: self.sigma,
            sifs: self.sifs,
            difs: self.difs,
            header: self.header,
            ack: self.ack,
            delta: self.delta,
            payload,
        }
    }

    pub fn pifs(&self) -> f64 {
        self.sifs + self.sigma
    }
}

/// Channels an ACK occupies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AckWidth {
    /// The 20 MHz primary of the BSS.
    Primary,
    /// The same channels as the data frame.
    Data,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MacConfig {
    /// Minimum contention window `W`.
    pub cw_min: u32,
    /// Maximum backoff stage `m`.
    pub max_stage: u32,
    /// Number of bonding levels `u`; the band has `2^(u-1)` channels.
    pub levels: u8,
    /// Retransmissions before a frame is dropped. `None` retries forever.
    pub retry_limit: Option<u32>,
    pub payload_bytes: u32,
    /// PHY rate on one 20 MHz channel, Mbit/s. Scales with the width.
    pub rate_20mhz_mbps: f64,
    pub ack_width: AckWidth,
    pub timing: TimingConfig,
}

impl Default for MacConfig {
    fn default() -> Self {
        Self {
            cw_min: 16,
            max_stage: 6,
            levels: 4,
            retry_limit: Some(7),
            payload_bytes: 1448,
            rate_20mhz_mbps: 150.125,
            ack_width: AckWidth::Primary,
            timing: TimingConfig::default(),
        }
    }
}

impl MacConfig {
    pub fn channel_count(&self) -> u32 {
        1 << (self.levels.max(1) - 1)
    }

    /// Payload airtime on `channels` channels, µs.
    pub fn payload_us(&self, channels: u32) -> f64 {
        self.payload_bytes as f64 * 8.0 / (self.rate_20mhz_mbps * channels as f64)
    }
}

/// Which analytic or measured quantity feeds the controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    Analytic,
    Measured,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IbacConfig {
    pub t_init: u64,
    pub buckets: BucketConfig,
    pub history_len: usize,
    pub reward: RewardMode,
    /// Outcomes kept per (bucket, level) for the failure estimate.
    pub failure_window: usize,
}

impl Default for IbacConfig {
    fn default() -> Self {
        Self {
            t_init: crate::policy::DEFAULT_T_INIT,
            buckets: BucketConfig::default(),
            history_len: crate::policy::HISTORY_LEN,
            reward: RewardMode::Analytic,
            failure_window: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyConfig {
    Ibac(IbacConfig),
    General,
    Threshold { thresholds: Vec<f64> },
    WidestCommon,
    Static { level: u8 },
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig::Ibac(IbacConfig::default())
    }
}

impl PolicyConfig {
    pub fn baseline(&self) -> Option<PolicySpec> {
        match self {
            PolicyConfig::Ibac(_) => None,
            PolicyConfig::General => Some(PolicySpec::General),
            PolicyConfig::Threshold { thresholds } => Some(PolicySpec::Threshold {
                thresholds: thresholds.clone(),
            }),
            PolicyConfig::WidestCommon => Some(PolicySpec::WidestCommon),
            PolicyConfig::Static { level } => Some(PolicySpec::Static { level: *level }),
        }
    }

    pub fn label(&self) -> String {
        self.baseline().map_or_else(|| "ibac".into(), |b| b.label())
    }

    pub fn default_threshold() -> Self {
        PolicyConfig::Threshold {
            thresholds: vec![30.0, 38.0, 45.0],
        }
    }
}

/// Per-link SNR random walk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SnrProcess {
    pub snr_min: f64,
    pub snr_max: f64,
    pub step_db: f64,
    pub step_interval_us: f64,
}

impl Default for SnrProcess {
    fn default() -> Self {
        Self {
            snr_min: 25.0,
            snr_max: 50.0,
            step_db: 1.0,
            step_interval_us: 10_000.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Traffic {
    /// Every STA sends to its AP.
    Uplink,
    /// Every AP sends to its STAs in turn.
    Downlink,
}

/// Parameters of the generated two-AP layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayoutConfig {
    /// STAs are placed uniformly in a disk of this radius around their AP.
    pub sta_radius: f64,
    /// Primary channel of the second BSS.
    pub primary_offset: u8,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        Self {
            sta_radius: 20.0,
            primary_offset: 0,
        }
    }
}

/// A legacy 20 MHz transmitter outside the simulated BSSs. After an
/// exponentially distributed idle gap it waits for its channel to be
/// sensed idle, then holds it for an exponentially distributed burst.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmbientSource {
    pub channel: u8,
    /// Offset from the anchor AP, or absolute when there is no anchor.
    pub position: (f64, f64),
    /// Id of the AP the position is relative to.
    #[serde(default)]
    pub anchor: Option<u32>,
    /// Mean burst length, µs.
    pub busy_us: f64,
    /// Mean gap between bursts, µs.
    pub idle_us: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// Sampling period of the cumulative PLR series, µs.
    pub plr_sample_us: f64,
    pub convergence_window_ms: f64,
    pub convergence_var_threshold: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            plr_sample_us: 5_000.0,
            convergence_window_ms: 20.0,
            convergence_var_threshold: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    /// Simulated time, µs.
    pub duration: f64,
    /// Explicit topology. When empty, a two-AP layout is generated from
    /// `dap` and `stations`.
    #[serde(default)]
    pub nodes: Vec<NodeSpec>,
    /// AP separation for the generated layout, m.
    #[serde(default)]
    pub dap: Option<f64>,
    /// Total STAs of the generated layout, split between the two BSSs.
    #[serde(default)]
    pub stations: Option<u32>,
    #[serde(default)]
    pub layout: LayoutConfig,
    #[serde(default = "default_traffic")]
    pub traffic: Traffic,
    #[serde(default)]
    pub ambient: Vec<AmbientSource>,
    #[serde(default)]
    pub geometry: GeometryParams,
    #[serde(default)]
    pub mac: MacConfig,
    #[serde(default)]
    pub policy: PolicyConfig,
    #[serde(default)]
    pub snr_process: SnrProcess,
    #[serde(default)]
    pub metrics: MetricsConfig,
}

fn default_traffic() -> Traffic {
    Traffic::Uplink
}

impl SimConfig {
    /// Two-AP layout with default parameters.
    pub fn two_bss(dap: f64, stations: u32, policy: PolicyConfig, seed: u64) -> Self {
        Self {
            seed,
            duration: 1_000_000.0,
            nodes: Vec::new(),
            dap: Some(dap),
            stations: Some(stations),
            layout: LayoutConfig::default(),
            traffic: Traffic::Uplink,
            ambient: Vec::new(),
            geometry: GeometryParams::default(),
            mac: MacConfig::default(),
            policy,
            snr_process: SnrProcess::default(),
            metrics: MetricsConfig::default(),
        }
    }

    /// Explicit topology with default parameters.
    pub fn explicit(nodes: Vec<NodeSpec>, policy: PolicyConfig, seed: u64) -> Self {
        Self {
            nodes,
            dap: None,
            stations: None,
            ..Self::two_bss(0.0, 0, policy, seed)
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// Every problem with the configuration, keyed by field path.
    pub fn issues(&self) -> Vec<FieldIssue> {
        let mut out = Vec::new();
        let mut bad = |path: &str, reason: String| {
            out.push(FieldIssue {
                path: path.into(),
                reason,
            })
        };
        if !(self.duration.is_finite() && self.duration > 0.0) {
            bad("duration", "must be finite and > 0".into());
        }

        let g = &self.geometry;
        for (path, v) in [
            ("geometry.tr_base", g.tr_base),
            ("geometry.ir_base", g.ir_base),
            ("geometry.cr", g.cr),
            ("geometry.pathloss_exponent", g.pathloss_exponent),
        ] {
            if !(v.is_finite() && v > 0.0) {
                bad(path, "must be finite and > 0".into());
            }
        }
        if !(g.tr_shrink > 0.0 && g.tr_shrink <= 1.0) {
            bad("geometry.tr_shrink", "must lie in (0, 1]".into());
        }
        if !(g.ir_grow >= 1.0 && g.ir_grow.is_finite()) {
            bad("geometry.ir_grow", "must be finite and >= 1".into());
        }
        for (path, v) in [
            ("geometry.snr_ref", g.snr_ref),
            ("geometry.noise_per_20mhz", g.noise_per_20mhz),
        ] {
            if !v.is_finite() {
                bad(path, "must be finite".into());
            }
        }

        let mac = &self.mac;
        if mac.cw_min < 1 {
            bad("mac.cw_min", "must be >= 1".into());
        }
        if mac.max_stage > 16 {
            bad("mac.max_stage", "must be <= 16".into());
        }
        if !(1..=6).contains(&mac.levels) {
            bad("mac.levels", "must lie in 1..=6".into());
        }
        if mac.payload_bytes == 0 {
            bad("mac.payload_bytes", "must be > 0".into());
        }
        if !(mac.rate_20mhz_mbps.is_finite() && mac.rate_20mhz_mbps > 0.0) {
            bad("mac.rate_20mhz_mbps", "must be finite and > 0".into());
        }
        if let Err(e) = mac.timing.with_payload(1.0).validate() {
            bad("mac.timing", e.to_string());
        }

        match &self.policy {
            PolicyConfig::Ibac(ib) => {
                if let Err(e) = ib.buckets.validate() {
                    bad("policy.buckets", e.to_string());
                }
                if ib.history_len == 0 {
                    bad("policy.history_len", "must be >= 1".into());
                }
                if ib.failure_window == 0 {
                    bad("policy.failure_window", "must be >= 1".into());
                }
            }
            other => {
                if let Some(spec) = other.baseline() {
                    for reason in spec.issues(mac.levels) {
                        bad("policy", reason);
                    }
                }
            }
        }

        let s = &self.snr_process;
        if !(s.snr_min.is_finite() && s.snr_max.is_finite() && s.snr_min < s.snr_max) {
            bad("snr_process", "need finite snr_min < snr_max".into());
        }
        if !(s.step_db.is_finite() && s.step_db >= 0.0) {
            bad("snr_process.step_db", "must be finite and >= 0".into());
        }
        if !(s.step_interval_us.is_finite() && s.step_interval_us > 0.0) {
            bad("snr_process.step_interval_us", "must be finite and > 0".into());
        }

        let m = &self.metrics;
        if !(m.plr_sample_us.is_finite() && m.plr_sample_us > 0.0) {
            bad("metrics.plr_sample_us", "must be finite and > 0".into());
        }
        if !(m.convergence_window_ms.is_finite() && m.convergence_window_ms > 0.0) {
            bad("metrics.convergence_window_ms", "must be finite and > 0".into());
        }
        if !(m.convergence_var_threshold.is_finite() && m.convergence_var_threshold >= 0.0) {
            bad("metrics.convergence_var_threshold", "must be finite and >= 0".into());
        }

        let channels = mac.channel_count();
        for (i, a) in self.ambient.iter().enumerate() {
            if a.channel as u32 >= channels {
                bad(&format!("ambient[{i}].channel"), format!("must be < {channels}"));
            }
            if !(a.position.0.is_finite() && a.position.1.is_finite()) {
                bad(&format!("ambient[{i}].position"), "must be finite".into());
            }
            if let Some(id) = a.anchor {
                let known = if self.nodes.is_empty() {
                    id < 2
                } else {
                    self.nodes.iter().any(|x| x.id == id && x.kind == NodeKind::Ap)
                };
                if !known {
                    bad(&format!("ambient[{i}].anchor"), format!("no AP with id {id}"));
                }
            }
            for (field, v) in [("busy_us", a.busy_us), ("idle_us", a.idle_us)] {
                if !(v.is_finite() && v > 0.0) {
                    bad(&format!("ambient[{i}].{field}"), "must be finite and > 0".into());
                }
            }
        }
        if self.nodes.is_empty() {
            match self.dap {
                Some(d) if d.is_finite() && d >= 0.0 => {}
                Some(_) => bad("dap", "must be finite and >= 0".into()),
                None => bad("dap", "required when nodes is empty".into()),
            }
            match self.stations {
                Some(n) if n >= 1 => {}
                _ => bad("stations", "required and >= 1 when nodes is empty".into()),
            }
            let l = &self.layout;
            if !(l.sta_radius.is_finite() && l.sta_radius >= 0.0) {
                bad("layout.sta_radius", "must be finite and >= 0".into());
            }
            if l.primary_offset as u32 >= channels {
                bad("layout.primary_offset", format!("must be < {channels}"));
            }
        } else {
            if self.dap.is_some() || self.stations.is_some() {
                bad("nodes", "explicit nodes exclude dap and stations".into());
            }
            let mut ids = std::collections::BTreeSet::new();
            for (i, n) in self.nodes.iter().enumerate() {
                if !ids.insert(n.id) {
                    bad(&format!("nodes[{i}].id"), format!("duplicate id {}", n.id));
                }
                if !(n.position.0.is_finite() && n.position.1.is_finite()) {
                    bad(&format!("nodes[{i}].position"), "must be finite".into());
                }
            }
            for (i, n) in self.nodes.iter().enumerate() {
                let ap = self
                    .nodes
                    .iter()
                    .find(|a| a.id == n.bss && a.kind == NodeKind::Ap);
                match (n.kind, ap) {
                    (NodeKind::Ap, _) if n.bss != n.id => {
                        bad(&format!("nodes[{i}].bss"), "an AP must name itself".into())
                    }
                    (NodeKind::Ap, _) if n.primary as u32 >= channels => bad(
                        &format!("nodes[{i}].primary"),
                        format!("must be < {channels}"),
                    ),
                    (NodeKind::Sta, None) => bad(
                        &format!("nodes[{i}].bss"),
                        format!("no AP with id {}", n.bss),
                    ),
                    _ => {}
                }
            }
            let senders = self.nodes.iter().any(|n| match self.traffic {
                Traffic::Uplink => n.kind == NodeKind::Sta,
                Traffic::Downlink => {
                    n.kind == NodeKind::Ap
                        && self
                            .nodes
                            .iter()
                            .any(|s| s.kind == NodeKind::Sta && s.bss == n.id)
                }
            });
            if !senders {
                bad("nodes", "no node has traffic to send".into());
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let issues = self.issues();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(SimError::InvalidConfig(issues))
        }
    }
}
