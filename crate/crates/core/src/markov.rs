//! Closed-form Markov-chain model of dynamic bandwidth channel access.
//!
//! The model extends the saturated single-channel backoff chain with a
//! bonding-aware collision probability: a station bonding `2^(c-1)` primary
//! channels (plus the same number of secondary channels when idle) collides
//! with a probability that grows with the interference range of the bonded
//! width. That conditional collision probability `Υ_C` drives the backoff
//! chain, whose stationary solution gives the per-slot transmission
//! probability `ν` and from it the normalized saturation throughput `𝒯`.
//!
//! The model leaves the channel-busy probability `p` and the access
//! probability `γ` exogenous. [`solve_fixed_point`] closes the loop with
//! `p = 1 - (1 - ν)^n` and `γ = ν` and iterates to a self-consistent `ν`.
//!
//! All durations are microseconds; all probabilities are dimensionless.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Half-width of the window around `Υ_C = 1/2` where the removable
/// singularity of the transmission probability is replaced by its limit.
pub const SINGULARITY_EPS: f64 = 1e-9;

/// Largest supported bonding level (`2^(u-1)` channels).
pub const MAX_BONDING_LEVEL: u32 = 6;

/// Symbols of the analytic model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Number of contending stations.
    pub n: u32,
    /// Minimum contention window `CW_min`, in slots.
    #[serde(rename = "W")]
    pub cw_min: u32,
    /// Maximum backoff stage; `CW_max = 2^m * CW_min`.
    pub m: u32,
    /// Maximum bonding level; `2^(u-1)` channels exist.
    pub u: u32,
    /// Interference-range proportionality constant.
    pub kappa: f64,
    /// Probability that a channel is busy in a random slot.
    #[serde(default)]
    pub p: f64,
    /// Probability that a station accesses the channel after an idle slot.
    #[serde(default)]
    pub gamma: f64,
}

impl ModelParams {
    pub fn new(n: u32, cw_min: u32, m: u32, u: u32, kappa: f64) -> Self {
        Self {
            n,
            cw_min,
            m,
            u,
            kappa,
            p: 0.0,
            gamma: 0.0,
        }
    }

    pub fn with_channel_state(mut self, p: f64, gamma: f64) -> Self {
        self.p = p;
        self.gamma = gamma;
        self
    }

    /// Total number of 20 MHz channels.
    pub fn channel_count(&self) -> u32 {
        1 << (self.u - 1)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |field, reason: &str| {
            Err(ModelError::InvalidParam {
                field,
                reason: reason.to_string(),
            })
        };
        if self.n < 1 {
            return bad("n", "at least one station is required");
        }
        if self.cw_min < 2 || !self.cw_min.is_power_of_two() {
            return bad("W", "must be a power of two >= 2");
        }
        if self.m > 16 {
            return bad("m", "backoff stage above 16 overflows the window");
        }
        if self.u < 1 || self.u > MAX_BONDING_LEVEL {
            return bad("u", "must be in 1..=6");
        }
        for (field, v) in [("kappa", self.kappa), ("p", self.p), ("gamma", self.gamma)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(field, "must lie in [0, 1]");
            }
        }
        Ok(())
    }

    fn check_level(&self, c: u32) -> Result<(), ModelError> {
        if c < 1 || c > self.u {
            Err(ModelError::LevelOutOfRange {
                level: c,
                max: self.u,
            })
        } else {
            Ok(())
        }
    }
}

/// Interframe spaces and frame durations of the basic access method, µs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacTiming {
    /// Empty slot duration.
    pub sigma: f64,
    pub sifs: f64,
    pub difs: f64,
    /// PHY plus MAC header transmission time.
    pub header: f64,
    pub ack: f64,
    /// Propagation delay.
    pub delta: f64,
    /// Payload transmission time `E[P]`.
    pub payload: f64,
}

impl MacTiming {
    /// HE-style constants: 9 µs slots, 16 µs SIFS, DIFS = SIFS + 2σ.
    pub fn ieee80211ax(payload: f64) -> Self {
        Self {
            sigma: 9.0,
            sifs: 16.0,
            difs: 34.0,
            header: 40.0,
            ack: 32.0,
            delta: 1.0,
            payload,
        }
    }

    /// Secondary-channel idle check window.
    pub fn pifs(&self) -> f64 {
        self.sifs + self.sigma
    }

    pub fn with_payload(mut self, payload: f64) -> Self {
        self.payload = payload;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fields = [
            ("sigma", self.sigma),
            ("sifs", self.sifs),
            ("difs", self.difs),
            ("header", self.header),
            ("ack", self.ack),
            ("delta", self.delta),
            ("payload", self.payload),
        ];
        for (field, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(ModelError::InvalidParam {
                    field,
                    reason: "durations must be finite and strictly positive".into(),
                });
            }
        }
        if self.difs <= self.sifs {
            return Err(ModelError::InvalidParam {
                field: "difs",
                reason: "DIFS must exceed SIFS".into(),
            });
        }
        Ok(())
    }
}

/// Knobs of the fixed-point solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub tolerance: f64,
    /// Damping factor λ in `ν ← (1-λ)ν + λ f(ν)`.
    pub damping: f64,
    pub max_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            damping: 0.5,
            max_iterations: 500,
        }
    }
}

/// `Υ_C` together with the clamping diagnostic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionEstimate {
    pub value: f64,
    /// The raw ratio exceeded 1 and was clamped.
    pub clamped: bool,
}

/// Self-consistent solution of the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSolution {
    pub upsilon_c: f64,
    pub nu: f64,
    pub b00: f64,
    pub p_one: f64,
    pub p_s: f64,
    /// Normalized saturation throughput.
    pub throughput: f64,
    pub iterations: usize,
    pub residual: f64,
    /// `Υ_C` was clamped to 1 at the fixed point.
    pub clamped: bool,
}

impl ModelSolution {
    /// Throughput in Mbit/s for a payload of `payload_bits` sent in
    /// `timing.payload` µs.
    pub fn throughput_mbps(&self, payload_bits: f64, timing: &MacTiming) -> f64 {
        self.throughput * payload_bits / timing.payload
    }
}

/// Probability that a station ends up using bonding level `c`: its primary
/// and secondary blocks are both idle, or all `2^(u-1)` channels at `c = u`.
pub fn bonding_prob(params: &ModelParams, c: u32) -> Result<f64, ModelError> {
    params.check_level(c)?;
    let idle = 1.0 - params.p;
    let channels = if c < params.u { 1u32 << c } else { 1u32 << (params.u - 1) };
    Ok(idle.powi(channels as i32))
}

/// Probability that at least one of the `2^(c-1)` bonded channels collides,
/// with a per-channel collision probability proportional to the bonded
/// share of the band.
pub fn bonded_collision_prob(params: &ModelParams, c: u32) -> Result<f64, ModelError> {
    params.check_level(c)?;
    let block = (1u32 << (c - 1)) as f64;
    let per_channel = params.kappa * block / params.channel_count() as f64;
    Ok(1.0 - (1.0 - per_channel).powi(block as i32))
}

/// Probability that the previous slot was idle and at least one other
/// station becomes active in the current one.
pub fn idle_then_busy_prob(params: &ModelParams) -> f64 {
    let others = params.n.saturating_sub(1) as i32;
    (1.0 - params.p) * (1.0 - (1.0 - params.gamma).powi(others))
}

/// Conditional collision probability `Υ_C` of a bonding station given an
/// idle previous slot, clamped to `[0, 1]`.
pub fn owrp_collision_prob(params: &ModelParams) -> Result<CollisionEstimate, ModelError> {
    let r = idle_then_busy_prob(params);
    if r <= 0.0 {
        return Err(ModelError::DegenerateDenominator);
    }
    let mut numerator = 0.0;
    for c in 1..=params.u {
        numerator += bonding_prob(params, c)? * bonded_collision_prob(params, c)?;
    }
    let raw = numerator / r;
    Ok(CollisionEstimate {
        value: raw.clamp(0.0, 1.0),
        clamped: raw > 1.0,
    })
}

/// Per-slot transmission probability `ν` of the backoff chain for a given
/// conditional collision probability.
pub fn transmission_prob(upsilon_c: f64, cw_min: u32, m: u32) -> f64 {
    let w = cw_min as f64;
    let x = upsilon_c;
    let one_minus_2x = 1.0 - 2.0 * x;
    if one_minus_2x.abs() < SINGULARITY_EPS {
        return 4.0 / (2.0 * (w + 1.0) + m as f64 * w);
    }
    2.0 * one_minus_2x / (one_minus_2x * (w + 1.0) + x * w * (1.0 - (2.0 * x).powi(m as i32)))
}

/// Stationary probability of state `(0, 0)` from the normalization
/// condition. Satisfies `ν = b00 / (1 - Υ_C)`.
pub fn stationary_b00(upsilon_c: f64, cw_min: u32, m: u32) -> f64 {
    let w = cw_min as f64;
    let x = upsilon_c;
    let one_minus_2x = 1.0 - 2.0 * x;
    if one_minus_2x.abs() < SINGULARITY_EPS {
        return 2.0 / (2.0 * (w + 1.0) + m as f64 * w);
    }
    2.0 * one_minus_2x * (1.0 - x)
        / (one_minus_2x * (w + 1.0) + x * w * (1.0 - (2.0 * x).powi(m as i32)))
}

/// Full stationary vector `b[i][k]`, `i` in `0..=m`, `k` in `0..W_i`.
///
/// Counter-zero states follow `b[i][0] = Υ^i b00` below the last stage and
/// `b[m][0] = Υ^m / (1 - Υ) b00` at it; every other state is
/// `b[i][k] = (W_i - k) / W_i * b[i][0]`. With `m = 0` the single stage is
/// the last one, so `b[0][0] = b00 / (1 - Υ)`.
pub fn stationary_distribution(upsilon_c: f64, cw_min: u32, m: u32) -> Vec<Vec<f64>> {
    let b00 = stationary_b00(upsilon_c, cw_min, m);
    (0..=m)
        .map(|i| {
            let window = cw_min as usize * (1usize << i);
            let head = if i == m {
                upsilon_c.powi(m as i32) / (1.0 - upsilon_c) * b00
            } else {
                upsilon_c.powi(i as i32) * b00
            };
            (0..window)
                .map(|k| (window - k) as f64 / window as f64 * head)
                .collect()
        })
        .collect()
}

/// `P_one`, the probability of at least one transmission in a slot, and
/// `P_s`, the probability that such a slot carries exactly one.
pub fn success_probs(nu: f64, n: u32) -> (f64, f64) {
    let p_one = 1.0 - (1.0 - nu).powi(n as i32);
    if p_one <= 0.0 {
        return (0.0, 0.0);
    }
    let p_s = n as f64 * nu * (1.0 - nu).powi(n as i32 - 1) / p_one;
    (p_one, p_s.min(1.0))
}

/// Busy durations `(T_s, T_c)` of a successful and a collided exchange.
pub fn slot_durations(timing: &MacTiming) -> (f64, f64) {
    let t = timing;
    let t_s = t.header + t.payload + t.sifs + t.delta + t.ack + t.difs + t.delta;
    let t_c = t.header + t.payload + t.difs + t.delta;
    (t_s, t_c)
}

/// Fraction of time spent carrying successful payload.
pub fn normalized_throughput(p_one: f64, p_s: f64, timing: &MacTiming) -> f64 {
    let (t_s, t_c) = slot_durations(timing);
    let busy_success = p_one * p_s;
    let denom =
        (1.0 - p_one) * timing.sigma + busy_success * t_s + p_one * (1.0 - p_s) * t_c;
    if denom <= 0.0 {
        return 0.0;
    }
    busy_success * timing.payload / denom
}

/// `Υ_C` under the closure `p = 1 - (1-ν)^n`, `γ = ν`. A zero
/// idle-then-busy probability means nobody else can activate, so no
/// collision is possible.
pub fn closed_collision_prob(params: &ModelParams, nu: f64) -> CollisionEstimate {
    let closed = params.with_channel_state(1.0 - (1.0 - nu).powi(params.n as i32), nu);
    match owrp_collision_prob(&closed) {
        Ok(est) => est,
        Err(_) => CollisionEstimate {
            value: 0.0,
            clamped: false,
        },
    }
}

/// The fixed-point map `ν ↦ transmission_prob(Υ_C(ν))`.
pub fn fixed_point_map(params: &ModelParams, nu: f64) -> f64 {
    let upsilon = closed_collision_prob(params, nu).value;
    transmission_prob(upsilon, params.cw_min, params.m)
}

/// Solve for the self-consistent `ν` and evaluate the throughput chain.
///
/// Damped iteration starts from the collision-free value `2/(W+1)`, an
/// upper bound of the map, so it settles on the largest fixed point. If it
/// stalls, bisection on `f(ν) - ν` over `[0, 1]` takes over.
pub fn solve_fixed_point(
    params: &ModelParams,
    timing: &MacTiming,
    solver: &SolverConfig,
) -> Result<ModelSolution, ModelError> {
    params.validate()?;
    timing.validate()?;
    let tol = solver.tolerance;
    let lambda = solver.damping;

    let mut nu = 2.0 / (params.cw_min as f64 + 1.0);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < solver.max_iterations {
        iterations += 1;
        let next = fixed_point_map(params, nu);
        if (next - nu).abs() < tol {
            converged = true;
            break;
        }
        nu = (1.0 - lambda) * nu + lambda * next;
    }

    if !converged {
        let g = |x: f64| fixed_point_map(params, x) - x;
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        for _ in 0..200 {
            iterations += 1;
            let mid = 0.5 * (lo + hi);
            let gm = g(mid);
            nu = mid;
            if gm.abs() < tol {
                converged = true;
                break;
            }
            if gm > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if !converged {
            return Err(ModelError::NoConvergence {
                residual: g(nu).abs(),
            });
        }
    }

    let residual = (fixed_point_map(params, nu) - nu).abs();
    let collision = closed_collision_prob(params, nu);
    let b00 = stationary_b00(collision.value, params.cw_min, params.m);
    let (p_one, p_s) = success_probs(nu, params.n);
    Ok(ModelSolution {
        upsilon_c: collision.value,
        nu,
        b00,
        p_one,
        p_s,
        throughput: normalized_throughput(p_one, p_s, timing),
        iterations,
        residual,
        clamped: collision.clamped,
    })
}

/// Evaluate the model at the channel state carried by `params` (`p`, `γ`)
/// instead of closing the loop. Used when `p` and `γ` are measured.
pub fn evaluate_at_channel_state(
    params: &ModelParams,
    timing: &MacTiming,
) -> Result<ModelSolution, ModelError> {
    params.validate()?;
    timing.validate()?;
    let collision = match owrp_collision_prob(params) {
        Ok(est) => est,
        Err(ModelError::DegenerateDenominator) => CollisionEstimate {
            value: 0.0,
            clamped: false,
        },
        Err(e) => return Err(e),
    };
    let nu = transmission_prob(collision.value, params.cw_min, params.m);
    let (p_one, p_s) = success_probs(nu, params.n);
    Ok(ModelSolution {
        upsilon_c: collision.value,
        nu,
        b00: stationary_b00(collision.value, params.cw_min, params.m),
        p_one,
        p_s,
        throughput: normalized_throughput(p_one, p_s, timing),
        iterations: 0,
        residual: 0.0,
        clamped: collision.clamped,
    })
}

/// Result of fitting `κ` to an observed collision probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KappaFit {
    pub kappa: f64,
    /// False when even `κ = 1` falls short of the target.
    pub reached: bool,
}

/// The `κ` in `[0, 1]` for which the conditional collision probability at
/// the channel state of `params` equals `target`. The unclamped
/// probability is increasing in `κ`, so bisection applies.
pub fn calibrate_kappa(params: &ModelParams, target: f64) -> Result<KappaFit, ModelError> {
    let r = idle_then_busy_prob(params);
    if r <= 0.0 {
        return Err(ModelError::DegenerateDenominator);
    }
    let raw = |kappa: f64| -> f64 {
        let trial = ModelParams { kappa, ..*params };
        (1..=params.u)
            .map(|c| bonding_prob(&trial, c).unwrap_or(0.0) * bonded_collision_prob(&trial, c).unwrap_or(0.0))
            .sum::<f64>()
            / r
    };
    if target <= 0.0 {
        return Ok(KappaFit {
            kappa: 0.0,
            reached: true,
        });
    }
    if raw(1.0) < target {
        return Ok(KappaFit {
            kappa: 1.0,
            reached: false,
        });
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if raw(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(KappaFit {
        kappa: 0.5 * (lo + hi),
        reached: true,
    })
}

/// Invert the bonded collision probability of one level: the `κ` for
/// which `q_level` equals the observed failure fraction. At level 1 this
/// is the fraction scaled by `2^(u-1)`.
pub fn kappa_from_level_failure(failure: f64, level: u32, u: u32) -> f64 {
    let f = failure.clamp(0.0, 1.0);
    let block = (1u64 << (level.max(1) - 1)) as f64;
    let total = (1u64 << (u.max(1) - 1)) as f64;
    let per_channel = 1.0 - (1.0 - f).powf(1.0 / block);
    (per_channel * total / block).clamp(0.0, 1.0)
}
