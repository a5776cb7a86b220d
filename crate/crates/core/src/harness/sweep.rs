//! Runs every cell of a [`ScenarioSpec`] and reduces the records to the
//! tables the figures are drawn from.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::io::{write_csv, Manifest};
use super::metrics::MetricsRecord;
use super::scenario::{Cell, ScenarioSpec};
use crate::error::HarnessError;
use crate::sim::run;

pub const CDF_POINTS: usize = 100;

/// Every cell's result, in canonical cell order.
#[derive(Debug, Clone)]
pub struct RunSet {
    pub labels: Vec<String>,
    pub records: Vec<(Cell, MetricsRecord)>,
    pub failures: Vec<(Cell, String)>,
}

/// Run one cell; a panic is reported as a failure.
pub fn run_cell(spec: &ScenarioSpec, cell: &Cell) -> Result<MetricsRecord, String> {
    let cfg = spec.config_for(cell).map_err(|e| e.to_string())?;
    match catch_unwind(AssertUnwindSafe(|| run(&cfg))) {
        Ok(Ok(rec)) => Ok(rec),
        Ok(Err(e)) => Err(e.to_string()),
        Err(p) => Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into())),
    }
}

/// Run all cells on `workers` threads. Results come back in canonical
/// order whatever order the cells finish in.
pub fn sweep(spec: &ScenarioSpec, workers: usize) -> Result<RunSet, HarnessError> {
    spec.validate()?;
    let cells = spec.cells();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| HarnessError::InvalidScenario(e.to_string()))?;
    let results: Vec<Result<MetricsRecord, String>> =
        pool.install(|| cells.par_iter().map(|c| run_cell(spec, c)).collect());
    Ok(collect_results(spec, cells.into_iter().zip(results)))
}

/// Order results canonically. Used by [`sweep`], and by tests that feed
/// cells in a shuffled order.
pub fn collect_results(
    spec: &ScenarioSpec,
    results: impl IntoIterator<Item = (Cell, Result<MetricsRecord, String>)>,
) -> RunSet {
    let mut all: Vec<_> = results.into_iter().collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("cells are finite"));
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (cell, r) in all {
        match r {
            Ok(rec) => records.push((cell, rec)),
            Err(e) => failures.push((cell, e)),
        }
    }
    RunSet {
        labels: spec.policies.iter().map(|p| p.label()).collect(),
        records,
        failures,
    }
}

/// Scalar fields of one record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRow {
    pub policy: String,
    pub stations: u32,
    pub dap: f64,
    pub seed: u64,
    pub attempts: u64,
    pub delivered: u64,
    pub collisions_owrp: u64,
    pub collisions_simultaneous: u64,
    pub out_of_range: u64,
    pub fallbacks: u64,
    pub dropped_frames: u64,
    pub throughput_mbps: f64,
    pub avg_throughput_mbps: f64,
    pub normalized_throughput: f64,
    pub plr: f64,
    pub delay_proxy_us: Option<f64>,
    pub jain: Option<f64>,
    pub wide_fraction: f64,
    pub convergence_latency_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellWidthRow {
    pub policy: String,
    pub stations: u32,
    pub dap: f64,
    pub seed: u64,
    pub width: u8,
    pub fraction: f64,
    pub attempts: u64,
    pub failures: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRow {
    pub policy: String,
    pub stations: u32,
    pub dap: f64,
    pub seed: u64,
    pub error: String,
}

/// Mean and sample standard deviation over seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub sd: Option<f64>,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Stat {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sd = (xs.len() > 1)
            .then(|| (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
        Stat { mean, sd }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputRow {
    pub policy: String,
    pub stations: u32,
    pub seeds: usize,
    pub avg_throughput_mean: f64,
    pub avg_throughput_sd: Option<f64>,
    pub throughput_mean: f64,
    pub throughput_sd: Option<f64>,
    pub normalized_mean: f64,
    pub normalized_sd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlrRow {
    pub policy: String,
    pub dap: f64,
    pub seeds: usize,
    pub plr_mean: f64,
    pub plr_sd: Option<f64>,
    pub owrp_mean: f64,
    pub owrp_sd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidthPdfRow {
    pub policy: String,
    pub width: u8,
    pub fraction_mean: f64,
    pub fraction_sd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfRow {
    pub policy: String,
    pub quantile: f64,
    pub avg_throughput_mbps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidthPlrRow {
    pub policy: String,
    pub width: u8,
    pub attempts: u64,
    pub failures: u64,
    pub plr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub policy: String,
    pub cells: usize,
    pub plr_mean: f64,
    pub plr_sd: Option<f64>,
    pub avg_throughput_mean: f64,
    pub avg_throughput_sd: Option<f64>,
    pub jain_mean: Option<f64>,
    pub wide_fraction_mean: f64,
    pub owrp_mean: f64,
    pub converged_fraction: f64,
    pub convergence_latency_mean_ms: Option<f64>,
}

/// All aggregate tables of a run set.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Aggregates {
    pub throughput_vs_stations: Vec<ThroughputRow>,
    pub plr_vs_dap: Vec<PlrRow>,
    pub width_pdf: Vec<WidthPdfRow>,
    pub throughput_cdf: Vec<CdfRow>,
    pub per_width_plr: Vec<WidthPlrRow>,
    pub summary: Vec<SummaryRow>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Empirical CDF at `points` evenly spaced quantiles `k / points`.
pub fn empirical_cdf(values: &[f64], points: usize) -> Vec<(f64, f64)> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return Vec::new();
    }
    (1..=points)
        .map(|k| {
            let q = k as f64 / points as f64;
            let idx = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1;
            (q, v[idx])
        })
        .collect()
}

/// Mean over the cells sharing `(policy, key, seed)`, then mean and
/// standard deviation across seeds, per `(policy, key)`.
fn by_seed<K: Ord + Copy>(
    records: &[&(Cell, MetricsRecord)],
    key: impl Fn(&Cell) -> K,
    value: impl Fn(&MetricsRecord) -> f64,
) -> BTreeMap<(usize, K), Stat> {
    let mut groups: BTreeMap<(usize, K), BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
    for (cell, rec) in records {
        groups
            .entry((cell.policy, key(cell)))
            .or_default()
            .entry(cell.seed)
            .or_default()
            .push(value(rec));
    }
    groups
        .into_iter()
        .map(|(k, seeds)| {
            let per_seed: Vec<f64> = seeds.values().map(|xs| mean(xs)).collect();
            (k, Stat::of(&per_seed))
        })
        .collect()
}

/// Ordered key for DAP values, which are finite.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
struct Dap(f64);
impl Eq for Dap {}
impl Ord for Dap {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl RunSet {
    pub fn cell_rows(&self) -> Vec<CellRow> {
        self.records
            .iter()
            .map(|(c, r)| CellRow {
                policy: self.labels[c.policy].clone(),
                stations: c.stations,
                dap: c.dap,
                seed: c.seed,
                attempts: r.attempts,
                delivered: r.delivered,
                collisions_owrp: r.collisions_owrp,
                collisions_simultaneous: r.collisions_simultaneous,
                out_of_range: r.out_of_range,
                fallbacks: r.fallbacks,
                dropped_frames: r.dropped_frames,
                throughput_mbps: r.throughput_mbps,
                avg_throughput_mbps: r.avg_throughput_mbps,
                normalized_throughput: r.normalized_throughput,
                plr: r.plr,
                delay_proxy_us: r.delay_proxy_us,
                jain: r.jain,
                wide_fraction: r.wide_fraction(),
                convergence_latency_ms: r.convergence_latency_ms,
            })
            .collect()
    }

    pub fn cell_width_rows(&self) -> Vec<CellWidthRow> {
        self.records
            .iter()
            .flat_map(|(c, r)| {
                r.per_width.iter().map(move |w| CellWidthRow {
                    policy: self.labels[c.policy].clone(),
                    stations: c.stations,
                    dap: c.dap,
                    seed: c.seed,
                    width: w.width,
                    fraction: r.bandwidth_pdf[w.width as usize - 1],
                    attempts: w.attempts,
                    failures: w.failures,
                })
            })
            .collect()
    }

    pub fn failure_rows(&self) -> Vec<FailureRow> {
        self.failures
            .iter()
            .map(|(c, e)| FailureRow {
                policy: self.labels[c.policy].clone(),
                stations: c.stations,
                dap: c.dap,
                seed: c.seed,
                error: e.clone(),
            })
            .collect()
    }

    /// Records of one policy.
    pub fn of_policy(&self, policy: usize) -> impl Iterator<Item = &MetricsRecord> {
        self.records.iter().filter(move |(c, _)| c.policy == policy).map(|(_, r)| r)
    }

    pub fn aggregate(&self) -> Aggregates {
        let all: Vec<&(Cell, MetricsRecord)> = self.records.iter().collect();
        let label = |p: usize| self.labels[p].clone();
        let mut out = Aggregates::default();

        let seeds_of = |p: usize| {
            let mut s: Vec<u64> = all.iter().filter(|(c, _)| c.policy == p).map(|(c, _)| c.seed).collect();
            s.sort_unstable();
            s.dedup();
            s.len()
        };

        let avg = by_seed(&all, |c| c.stations, |r| r.avg_throughput_mbps);
        let tot = by_seed(&all, |c| c.stations, |r| r.throughput_mbps);
        let norm = by_seed(&all, |c| c.stations, |r| r.normalized_throughput);
        for (&(p, n), a) in &avg {
            let (t, z) = (tot[&(p, n)], norm[&(p, n)]);
            out.throughput_vs_stations.push(ThroughputRow {
                policy: label(p),
                stations: n,
                seeds: seeds_of(p),
                avg_throughput_mean: a.mean,
                avg_throughput_sd: a.sd,
                throughput_mean: t.mean,
                throughput_sd: t.sd,
                normalized_mean: z.mean,
                normalized_sd: z.sd,
            });
        }

        let plr = by_seed(&all, |c| Dap(c.dap), |r| r.plr);
        let owrp = by_seed(&all, |c| Dap(c.dap), |r| r.owrp_count as f64);
        for (&(p, d), s) in &plr {
            let o = owrp[&(p, d)];
            out.plr_vs_dap.push(PlrRow {
                policy: label(p),
                dap: d.0,
                seeds: seeds_of(p),
                plr_mean: s.mean,
                plr_sd: s.sd,
                owrp_mean: o.mean,
                owrp_sd: o.sd,
            });
        }

        let widths = all.iter().map(|(_, r)| r.bandwidth_pdf.len()).max().unwrap_or(0);
        for w in 0..widths {
            let pdf = by_seed(&all, |_| (), |r| r.bandwidth_pdf.get(w).copied().unwrap_or(0.0));
            for (&(p, ()), s) in &pdf {
                out.width_pdf.push(WidthPdfRow {
                    policy: label(p),
                    width: w as u8 + 1,
                    fraction_mean: s.mean,
                    fraction_sd: s.sd,
                });
            }
        }
        out.width_pdf.sort_by(|a, b| (self.index_of(&a.policy), a.width).cmp(&(self.index_of(&b.policy), b.width)));

        for p in 0..self.labels.len() {
            let recs: Vec<&MetricsRecord> = self.of_policy(p).collect();
            if recs.is_empty() {
                continue;
            }
            let tputs: Vec<f64> = recs.iter().map(|r| r.avg_throughput_mbps).collect();
            for (q, v) in empirical_cdf(&tputs, CDF_POINTS) {
                out.throughput_cdf.push(CdfRow {
                    policy: label(p),
                    quantile: q,
                    avg_throughput_mbps: v,
                });
            }
            for w in 0..widths {
                let (a, f) = recs.iter().filter_map(|r| r.per_width.get(w)).fold((0, 0), |(a, f), s| {
                    (a + s.attempts, f + s.failures)
                });
                out.per_width_plr.push(WidthPlrRow {
                    policy: label(p),
                    width: w as u8 + 1,
                    attempts: a,
                    failures: f,
                    plr: (a > 0).then(|| 100.0 * f as f64 / a as f64),
                });
            }
            let plrs: Vec<f64> = recs.iter().map(|r| r.plr).collect();
            let jains: Vec<f64> = recs.iter().filter_map(|r| r.jain).collect();
            let lat: Vec<f64> = recs.iter().filter_map(|r| r.convergence_latency_ms).collect();
            let ps = Stat::of(&plrs);
            let ts = Stat::of(&tputs);
            out.summary.push(SummaryRow {
                policy: label(p),
                cells: recs.len(),
                plr_mean: ps.mean,
                plr_sd: ps.sd,
                avg_throughput_mean: ts.mean,
                avg_throughput_sd: ts.sd,
                jain_mean: (!jains.is_empty()).then(|| mean(&jains)),
                wide_fraction_mean: mean(&recs.iter().map(|r| r.wide_fraction()).collect::<Vec<_>>()),
                owrp_mean: mean(&recs.iter().map(|r| r.owrp_count as f64).collect::<Vec<_>>()),
                converged_fraction: lat.len() as f64 / recs.len() as f64,
                convergence_latency_mean_ms: (!lat.is_empty()).then(|| mean(&lat)),
            });
        }
        out
    }

    fn index_of(&self, label: &str) -> usize {
        self.labels.iter().position(|l| l == label).unwrap_or(usize::MAX)
    }

    /// Write per-cell tables, aggregate tables and manifests into `dir`.
    /// Returns the files written.
    pub fn write(&self, dir: &Path, spec: &ScenarioSpec) -> Result<Vec<String>, HarnessError> {
        let m = Manifest::new(&spec.config_hash(), &spec.seeds);
        let agg = self.aggregate();
        let mut files = Vec::new();
        let mut put = |name: &str, f: &dyn Fn(&Path) -> Result<(), HarnessError>| {
            f(&dir.join(name))?;
            files.push(name.to_string());
            Ok::<_, HarnessError>(())
        };
        put("cells.csv", &|p| write_csv(p, &self.cell_rows(), &m))?;
        put("cell_widths.csv", &|p| write_csv(p, &self.cell_width_rows(), &m))?;
        put("throughput_vs_stations.csv", &|p| write_csv(p, &agg.throughput_vs_stations, &m))?;
        put("plr_vs_dap.csv", &|p| write_csv(p, &agg.plr_vs_dap, &m))?;
        put("width_pdf.csv", &|p| write_csv(p, &agg.width_pdf, &m))?;
        put("throughput_cdf.csv", &|p| write_csv(p, &agg.throughput_cdf, &m))?;
        put("per_width_plr.csv", &|p| write_csv(p, &agg.per_width_plr, &m))?;
        put("summary.csv", &|p| write_csv(p, &agg.summary, &m))?;
        if !self.failures.is_empty() {
            put("failures.csv", &|p| write_csv(p, &self.failure_rows(), &m))?;
        }
        Ok(files)
    }
}
