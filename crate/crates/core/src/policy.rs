//! Thompson-sampling bonding-level controller.
//!
//! Each AP keeps a statistical table keyed by SNR bucket. A bucket holds,
//! per bonding level, how often the level was used and a bounded history
//! of the normalized throughput it earned. After an exploration phase the
//! controller picks the level maximizing `K * likelihood * prior`, where
//! the prior is the level's share of uses in the bucket and the
//! likelihood is the mean of its recorded throughputs.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::PolicyError;

/// Throughput values kept per (bucket, level).
pub const HISTORY_LEN: usize = 64;

/// Rounds of pure exploration before the posterior is consulted.
pub const DEFAULT_T_INIT: u64 = 50;

/// SNR bucketing: `[snr_min, snr_max]` split into width-`d` buckets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BucketConfig {
    pub snr_min: f64,
    pub snr_max: f64,
    pub d: f64,
}

impl Default for BucketConfig {
    fn default() -> Self {
        Self {
            snr_min: 25.0,
            snr_max: 50.0,
            d: 5.0,
        }
    }
}

impl BucketConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if !(self.snr_min.is_finite() && self.snr_max.is_finite() && self.d.is_finite()) {
            return Err(PolicyError::InvalidBuckets("bounds must be finite".into()));
        }
        if self.snr_min >= self.snr_max {
            return Err(PolicyError::InvalidBuckets(format!(
                "snr_min {} must be below snr_max {}",
                self.snr_min, self.snr_max
            )));
        }
        if self.d <= 0.0 {
            return Err(PolicyError::InvalidBuckets(format!("width d = {} must be positive", self.d)));
        }
        Ok(())
    }

    /// Number of buckets, `ceil((snr_max - snr_min) / d)`.
    pub fn count(&self) -> usize {
        (((self.snr_max - self.snr_min) / self.d).ceil() as usize).max(1)
    }
}

/// A bucket lookup. `clamped` is set when the SNR fell outside the
/// configured range and was pulled back onto it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BucketIndex {
    pub index: usize,
    pub clamped: bool,
}

/// Half-open buckets `[min + jd, min + (j+1)d)`; the last is closed.
pub fn bucket_of(config: &BucketConfig, snr: f64) -> BucketIndex {
    let clamped = !(config.snr_min..=config.snr_max).contains(&snr);
    let snr = if snr.is_nan() {
        config.snr_min
    } else {
        snr.clamp(config.snr_min, config.snr_max)
    };
    let last = config.count() - 1;
    let index = (((snr - config.snr_min) / config.d).floor() as usize).min(last);
    BucketIndex { index, clamped }
}

/// History of one bonding level inside one bucket.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelRecord {
    pub level: u8,
    pub uses: u64,
    pub throughput_sum: f64,
    pub history: VecDeque<f64>,
}

impl LevelRecord {
    fn new(level: u8) -> Self {
        Self {
            level,
            uses: 0,
            throughput_sum: 0.0,
            history: VecDeque::new(),
        }
    }

    pub fn mean(&self) -> Option<f64> {
        if self.history.is_empty() {
            None
        } else {
            Some(self.history.iter().sum::<f64>() / self.history.len() as f64)
        }
    }
}

/// The statistical table: bucket index to per-level records.
#[derive(Debug, Clone, PartialEq)]
pub struct StatTable {
    pub config: BucketConfig,
    pub u: u8,
    pub history_len: usize,
    buckets: BTreeMap<usize, BTreeMap<u8, LevelRecord>>,
}

impl StatTable {
    pub fn new(config: BucketConfig, u: u8) -> Result<Self, PolicyError> {
        config.validate()?;
        if u == 0 {
            return Err(PolicyError::LevelOutOfRange { level: 0, max: 0 });
        }
        Ok(Self {
            config,
            u,
            history_len: HISTORY_LEN,
            buckets: BTreeMap::new(),
        })
    }

    pub fn with_history_len(mut self, len: usize) -> Self {
        self.history_len = len.max(1);
        self
    }

    pub fn bucket(&self, j: usize) -> Option<&BTreeMap<u8, LevelRecord>> {
        self.buckets.get(&j)
    }

    pub fn record(&self, j: usize, level: u8) -> Option<&LevelRecord> {
        self.buckets.get(&j)?.get(&level)
    }

    pub fn buckets(&self) -> impl Iterator<Item = (usize, &BTreeMap<u8, LevelRecord>)> {
        self.buckets.iter().map(|(j, b)| (*j, b))
    }

    fn check_level(&self, level: u8) -> Result<(), PolicyError> {
        if level == 0 || level > self.u {
            return Err(PolicyError::LevelOutOfRange { level, max: self.u });
        }
        Ok(())
    }

    /// Append one throughput observation for `(j, level)`.
    pub fn observe(&mut self, j: usize, level: u8, throughput: f64) -> Result<(), PolicyError> {
        self.check_level(level)?;
        if !(0.0..=1.0).contains(&throughput) {
            return Err(PolicyError::ThroughputOutOfRange(throughput));
        }
        let cap = self.history_len;
        let rec = self
            .buckets
            .entry(j)
            .or_default()
            .entry(level)
            .or_insert_with(|| LevelRecord::new(level));
        rec.uses += 1;
        rec.throughput_sum += throughput;
        if rec.history.len() == cap {
            rec.history.pop_front();
        }
        rec.history.push_back(throughput);
        Ok(())
    }

    /// Share of bucket `j`'s uses that went to `level`.
    pub fn prior(&self, j: usize, level: u8) -> Result<f64, PolicyError> {
        self.check_level(level)?;
        let bucket = self
            .buckets
            .get(&j)
            .filter(|b| !b.is_empty())
            .ok_or(PolicyError::NoHistory { bucket: j })?;
        let total: u64 = bucket.values().map(|r| r.uses).sum();
        let uses = bucket.get(&level).map_or(0, |r| r.uses);
        Ok(uses as f64 / total as f64)
    }

    /// Mean recorded throughput of `level` in bucket `j`.
    pub fn likelihood(&self, j: usize, level: u8) -> Result<f64, PolicyError> {
        self.check_level(level)?;
        self.record(j, level)
            .and_then(LevelRecord::mean)
            .ok_or(PolicyError::NoRecord { bucket: j, level })
    }

    /// `K * likelihood * prior` with `K = u`.
    pub fn posterior(&self, j: usize, level: u8) -> Result<f64, PolicyError> {
        Ok(self.u as f64 * self.likelihood(j, level)? * self.prior(j, level)?)
    }

    /// Level with the largest posterior in bucket `j`; exact ties go to the
    /// lower level.
    pub fn posterior_select(&self, j: usize) -> Result<u8, PolicyError> {
        let bucket = self.buckets.get(&j).ok_or(PolicyError::NoHistory { bucket: j })?;
        let mut best: Option<(u8, f64)> = None;
        for (&level, rec) in bucket {
            if rec.history.is_empty() {
                continue;
            }
            let score = self.posterior(j, level)?;
            if best.map_or(true, |(_, s)| score > s) {
                best = Some((level, score));
            }
        }
        best.map(|(l, _)| l).ok_or(PolicyError::NoHistory { bucket: j })
    }

    /// Line-oriented snapshot: a header line, then one line per record,
    /// `bucket level uses throughput_sum v1 v2 ...`.
    pub fn to_snapshot(&self) -> String {
        let c = &self.config;
        let mut out = format!(
            "# ibac-table snr_min={} snr_max={} d={} u={} R={}\n",
            c.snr_min, c.snr_max, c.d, self.u, self.history_len
        );
        for (j, bucket) in &self.buckets {
            for rec in bucket.values() {
                let _ = write!(out, "{} {} {} {}", j, rec.level, rec.uses, rec.throughput_sum);
                for v in &rec.history {
                    let _ = write!(out, " {v}");
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn from_snapshot(text: &str) -> Result<Self, PolicyError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(PolicyError::Snapshot {
            line: 1,
            reason: "empty snapshot".into(),
        })?;
        let bad = |line: usize, reason: &str| PolicyError::Snapshot {
            line: line + 1,
            reason: reason.to_string(),
        };
        let mut fields = BTreeMap::new();
        let mut header_words = header.split_whitespace();
        if header_words.next() != Some("#") || header_words.next() != Some("ibac-table") {
            return Err(bad(0, "missing `# ibac-table` header"));
        }
        for word in header_words {
            let (k, v) = word.split_once('=').ok_or_else(|| bad(0, "expected key=value"))?;
            fields.insert(k, v);
        }
        let get = |k: &str| -> Result<&str, PolicyError> {
            fields.get(k).copied().ok_or_else(|| bad(0, &format!("missing `{k}`")))
        };
        let num = |k: &str| -> Result<f64, PolicyError> {
            get(k)?.parse().map_err(|_| bad(0, &format!("bad `{k}`")))
        };
        let config = BucketConfig {
            snr_min: num("snr_min")?,
            snr_max: num("snr_max")?,
            d: num("d")?,
        };
        let u: u8 = get("u")?.parse().map_err(|_| bad(0, "bad `u`"))?;
        let r: usize = get("R")?.parse().map_err(|_| bad(0, "bad `R`"))?;
        let mut table = StatTable::new(config, u)?.with_history_len(r);

        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let mut w = line.split_whitespace();
            let mut next = |what: &str| w.next().ok_or_else(|| bad(i, &format!("missing {what}")));
            let j: usize = next("bucket")?.parse().map_err(|_| bad(i, "bad bucket"))?;
            let level: u8 = next("level")?.parse().map_err(|_| bad(i, "bad level"))?;
            let uses: u64 = next("uses")?.parse().map_err(|_| bad(i, "bad uses"))?;
            let sum: f64 = next("sum")?.parse().map_err(|_| bad(i, "bad sum"))?;
            let history = w
                .map(|v| v.parse::<f64>().map_err(|_| bad(i, "bad history value")))
                .collect::<Result<VecDeque<_>, _>>()?;
            table.check_level(level).map_err(|e| bad(i, &e.to_string()))?;
            if history.len() > r || (history.len() as u64) > uses {
                return Err(bad(i, "history longer than R or uses"));
            }
            if history.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(bad(i, "history value outside [0, 1]"));
            }
            let rec = LevelRecord {
                level,
                uses,
                throughput_sum: sum,
                history,
            };
            if table.buckets.entry(j).or_default().insert(level, rec).is_some() {
                return Err(bad(i, "duplicate record"));
            }
        }
        Ok(table)
    }
}

/// Outcome of one `decide` call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    pub level: u8,
    pub bucket: BucketIndex,
    pub explored: bool,
}

/// One AP's controller state.
#[derive(Debug, Clone)]
pub struct PolicyState {
    pub table: StatTable,
    pub t: u64,
    pub t_init: u64,
    pub seed: u64,
    rng: ChaCha8Rng,
    decks: BTreeMap<usize, Vec<u8>>,
    rounds: BTreeMap<usize, u64>,
}

impl PolicyState {
    pub fn new(table: StatTable, t_init: u64, seed: u64) -> Self {
        Self {
            table,
            t: 0,
            t_init,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            decks: BTreeMap::new(),
            rounds: BTreeMap::new(),
        }
    }

    /// Decisions taken so far in bucket `j`.
    pub fn rounds_in(&self, j: usize) -> u64 {
        self.rounds.get(&j).copied().unwrap_or(0)
    }

    /// Uniform exploration draw. Levels are dealt from shuffled decks of
    /// `1..=u`, one per bucket, so each draw is uniform but the counts
    /// within a bucket stay balanced.
    fn explore_level(&mut self, bucket: usize) -> u8 {
        let deck = self.decks.entry(bucket).or_default();
        if deck.is_empty() {
            *deck = (1..=self.table.u).collect();
            deck.shuffle(&mut self.rng);
        }
        deck.pop().expect("deck refilled above")
    }

    /// Pick a level for the next transmission at `snr`. Each SNR bucket
    /// explores for its first `t_init` rounds.
    pub fn decide(&mut self, snr: f64) -> Decision {
        self.t += 1;
        let bucket = bucket_of(&self.table.config, snr);
        let rounds = self.rounds.entry(bucket.index).or_insert(0);
        *rounds += 1;
        let exploit = if *rounds > self.t_init {
            self.table.posterior_select(bucket.index).ok()
        } else {
            None
        };
        match exploit {
            Some(level) => Decision {
                level,
                bucket,
                explored: false,
            },
            None => Decision {
                level: self.explore_level(bucket.index),
                bucket,
                explored: true,
            },
        }
    }

    /// Record the normalized throughput earned by `level` at `snr`.
    pub fn update(&mut self, snr: f64, level: u8, throughput: f64) -> Result<(), PolicyError> {
        let j = bucket_of(&self.table.config, snr).index;
        self.table.observe(j, level, throughput)
    }
}
