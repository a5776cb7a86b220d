//! Per-run metrics and the statistics computed over them.

use serde::{Deserialize, Serialize};

use crate::error::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationMetrics {
    pub id: u32,
    pub attempts: u64,
    pub successes: u64,
    pub bytes_delivered: u64,
    pub throughput_mbps: f64,
    pub delay_proxy_us: Option<f64>,
}

/// Attempts and failures at one width class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WidthStats {
    pub width: u8,
    pub attempts: u64,
    pub failures: u64,
}

impl WidthStats {
    pub fn plr(&self) -> Option<f64> {
        (self.attempts > 0).then(|| 100.0 * self.failures as f64 / self.attempts as f64)
    }
}

/// Slot statistics seen by the first AP on its primary channel. A busy
/// period counts as one slot, as in the analytic model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct ChannelObservation {
    pub virtual_slots: u64,
    pub busy_slots: u64,
    /// Fraction of virtual slots that were busy.
    pub busy_prob: f64,
    /// Attempts per contending station per virtual slot, first BSS only.
    pub access_prob: f64,
    /// Failed attempts over all attempts.
    pub collision_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub policy: String,
    pub seed: u64,
    pub stations: u32,
    pub dap: Option<f64>,
    pub duration_us: f64,
    pub attempts: u64,
    pub delivered: u64,
    pub collisions_owrp: u64,
    pub collisions_simultaneous: u64,
    pub out_of_range: u64,
    /// Attempts that got less than the requested width.
    pub fallbacks: u64,
    pub dropped_frames: u64,
    /// Network goodput, Mbit/s.
    pub throughput_mbps: f64,
    /// Mean per-station goodput, Mbit/s.
    pub avg_throughput_mbps: f64,
    /// Fraction of time carrying successful payload, per BSS, averaged.
    pub normalized_throughput: f64,
    /// `100 (attempts - delivered) / attempts`.
    pub plr: f64,
    pub delay_proxy_us: Option<f64>,
    pub jain: Option<f64>,
    /// Fraction of attempts per requested level, index `c - 1`.
    pub level_pdf: Vec<f64>,
    /// Fraction of attempts per used width class, index `c - 1`.
    pub bandwidth_pdf: Vec<f64>,
    pub per_width: Vec<WidthStats>,
    pub owrp_count: u64,
    pub convergence_latency_ms: Option<f64>,
    /// Cumulative PLR sampled over time, `(ms, %)`.
    pub plr_series: Vec<(f64, f64)>,
    pub observed: ChannelObservation,
    pub per_station: Vec<StationMetrics>,
}

impl MetricsRecord {
    /// Conservation of outcomes.
    pub fn is_consistent(&self) -> bool {
        self.attempts
            == self.delivered + self.collisions_owrp + self.collisions_simultaneous + self.out_of_range
    }

    /// Share of attempts on the two widest width classes.
    pub fn wide_fraction(&self) -> f64 {
        let k = self.bandwidth_pdf.len();
        self.bandwidth_pdf[k.saturating_sub(2)..].iter().sum()
    }
}

/// `(Σx)² / (n Σx²)`; absent for an empty or all-zero input.
pub fn jain_index(xs: &[f64]) -> Option<f64> {
    let sum: f64 = xs.iter().sum();
    let sq: f64 = xs.iter().map(|x| x * x).sum();
    if xs.is_empty() || sq == 0.0 {
        return None;
    }
    Some((sum * sum / (xs.len() as f64 * sq)).min(1.0))
}

fn variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n
}

/// Earliest sample time `t` after which the variance of every full window
/// `[s, s + window]` with `s >= t` stays below `var_threshold`. `None` if
/// the last window is still too noisy. The series is `(ms, value)` in
/// increasing time.
pub fn convergence_latency(
    series: &[(f64, f64)],
    window_ms: f64,
    var_threshold: f64,
) -> Result<Option<f64>, HarnessError> {
    let span = match (series.first(), series.last()) {
        (Some(a), Some(b)) => b.0 - a.0,
        _ => 0.0,
    };
    if span < 2.0 * window_ms {
        return Err(HarnessError::InsufficientData {
            have: span,
            need: 2.0 * window_ms,
        });
    }
    let end = series.last().map(|p| p.0).unwrap_or(0.0);
    let mut latest_bad: Option<usize> = None;
    let mut last_start = 0;
    for (i, &(t, _)) in series.iter().enumerate() {
        if t + window_ms > end + 1e-9 {
            break;
        }
        last_start = i;
        let values: Vec<f64> = series[i..]
            .iter()
            .take_while(|p| p.0 <= t + window_ms + 1e-9)
            .map(|p| p.1)
            .collect();
        if variance(&values) >= var_threshold {
            latest_bad = Some(i);
        }
    }
    Ok(match latest_bad {
        None => Some(series[0].0),
        Some(i) if i < last_start => Some(series[i + 1].0),
        Some(_) => None,
    })
}
