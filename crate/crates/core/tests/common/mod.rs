//! Independent oracles shared by the integration suites.
//!
//! Nothing here calls into the closed-form paths of `ibac::markov`; each
//! oracle re-derives its value by a different route (exact rationals,
//! numerical solution of the chain, bisection, Monte-Carlo).

#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rat(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

fn pow(x: &BigRational, e: u32) -> BigRational {
    let mut acc = BigRational::one();
    for _ in 0..e {
        acc *= x;
    }
    acc
}

pub fn to_f64(x: &BigRational) -> f64 {
    x.to_f64().unwrap()
}

/// The OWRP-conditioned collision probability, summed term by term in
/// exact arithmetic.
pub fn exact_owrp_collision(
    p: &BigRational,
    gamma: &BigRational,
    kappa: &BigRational,
    n: u32,
    u: u32,
) -> BigRational {
    let one = BigRational::one();
    let idle = &one - p;
    let total = BigRational::from_integer(BigInt::from(1u64 << (u - 1)));
    let mut numerator = BigRational::zero();
    for c in 1..=u {
        let p_c = if c < u {
            pow(&idle, 1 << (c - 1)) * pow(&idle, 1 << (c - 1))
        } else {
            pow(&idle, 1 << (u - 1))
        };
        let block = BigRational::from_integer(BigInt::from(1u64 << (c - 1)));
        let q = kappa * &block / &total;
        let q_c = &one - pow(&(&one - q), 1 << (c - 1));
        numerator += p_c * q_c;
    }
    let r = &idle * (&one - pow(&(&one - gamma), n - 1));
    numerator / r
}

/// The legacy DCF transmission probability, transcribed directly:
/// `τ = 2(1-2p) / ((1-2p)(W+1) + pW(1-(2p)^m))`.
pub fn exact_dcf_tau(p: &BigRational, w: u32, m: u32) -> BigRational {
    let one = BigRational::one();
    let two = BigRational::from_integer(BigInt::from(2));
    let wr = BigRational::from_integer(BigInt::from(w));
    let a = &one - &two * p;
    let num = &two * &a;
    let den = &a * (&wr + &one) + p * &wr * (&one - pow(&(&two * p), m));
    num / den
}

/// Stationary distribution of the backoff chain obtained numerically from
/// its one-step transition probabilities (Gauss-Seidel on `π = πP`).
pub struct ChainSolution {
    pub windows: Vec<usize>,
    pub pi: Vec<Vec<f64>>,
}

impl ChainSolution {
    pub fn b00(&self) -> f64 {
        self.pi[0][0]
    }
    pub fn nu(&self) -> f64 {
        self.pi.iter().map(|stage| stage[0]).sum()
    }
    pub fn total(&self) -> f64 {
        self.pi.iter().flatten().sum()
    }
}

pub fn solve_backoff_chain(upsilon: f64, w: u32, m: u32) -> ChainSolution {
    let windows: Vec<usize> = (0..=m).map(|i| w as usize * (1 << i)).collect();
    let mut offset = vec![0usize; windows.len()];
    for i in 1..windows.len() {
        offset[i] = offset[i - 1] + windows[i - 1];
    }
    let n_states: usize = windows.iter().sum();
    let idx = |i: usize, k: usize| offset[i] + k;

    // incoming[j] = list of (i, P_ij)
    let mut incoming: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_states];
    for (i, &wi) in windows.iter().enumerate() {
        for k in 0..wi - 1 {
            incoming[idx(i, k)].push((idx(i, k + 1), 1.0));
        }
        // success from (i, 0) restarts at stage 0
        for k in 0..windows[0] {
            incoming[idx(0, k)].push((idx(i, 0), (1.0 - upsilon) / windows[0] as f64));
        }
        // collision moves one stage up, capped at m
        let next = (i + 1).min(m as usize);
        for k in 0..windows[next] {
            incoming[idx(next, k)].push((idx(i, 0), upsilon / windows[next] as f64));
        }
    }

    let mut pi = vec![1.0 / n_states as f64; n_states];
    let order: Vec<usize> = (0..windows.len())
        .flat_map(|i| (0..windows[i]).rev().map(move |k| (i, k)))
        .map(|(i, k)| idx(i, k))
        .collect();
    for _sweep in 0..100_000 {
        let mut delta: f64 = 0.0;
        for &j in &order {
            let mut inflow = 0.0;
            let mut self_loop = 0.0;
            for &(i, prob) in &incoming[j] {
                if i == j {
                    self_loop += prob;
                } else {
                    inflow += pi[i] * prob;
                }
            }
            let new = inflow / (1.0 - self_loop);
            delta = delta.max((new - pi[j]).abs());
            pi[j] = new;
        }
        let sum: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|x| *x /= sum);
        if delta < 1e-16 {
            break;
        }
    }
    let pi = windows
        .iter()
        .enumerate()
        .map(|(i, &wi)| pi[offset[i]..offset[i] + wi].to_vec())
        .collect();
    ChainSolution { windows, pi }
}

/// Independent transcription of the closed-loop map `ν ↦ ν(Υ_C(ν))`.
pub fn oracle_map(n: u32, w: u32, m: u32, u: u32, kappa: f64, nu: f64) -> f64 {
    let p = 1.0 - (1.0 - nu).powi(n as i32);
    let gamma = nu;
    let r = (1.0 - p) * (1.0 - (1.0 - gamma).powi(n as i32 - 1));
    let upsilon = if r <= 0.0 {
        0.0
    } else {
        let total = (1u64 << (u - 1)) as f64;
        let mut num = 0.0;
        for c in 1..=u {
            let exp = if c < u { 1u64 << c } else { 1u64 << (u - 1) };
            let p_c = (1.0 - p).powf(exp as f64);
            let block = (1u64 << (c - 1)) as f64;
            let q_c = 1.0 - (1.0 - kappa * block / total).powf(block);
            num += p_c * q_c;
        }
        (num / r).min(1.0)
    };
    let wf = w as f64;
    let a = 1.0 - 2.0 * upsilon;
    if a.abs() < 1e-9 {
        return 4.0 / (2.0 * (wf + 1.0) + m as f64 * wf);
    }
    2.0 * a / (a * (wf + 1.0) + upsilon * wf * (1.0 - (2.0 * upsilon).powf(m as f64)))
}

/// Plain bisection on `g(ν) = f(ν) - ν` over `[0, 1]`. `g(0) > 0` and
/// `g(1) < 0` always hold, so the bracket is valid from the start.
pub fn bisection_fixed_point(n: u32, w: u32, m: u32, u: u32, kappa: f64) -> f64 {
    let g = |x: f64| oracle_map(n, w, m, u, kappa, x) - x;
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Count sign changes of `g` on a uniform grid, to detect multiple roots.
pub fn fixed_point_sign_changes(n: u32, w: u32, m: u32, u: u32, kappa: f64) -> usize {
    let g = |x: f64| oracle_map(n, w, m, u, kappa, x) - x;
    let steps = 20_000;
    let mut changes = 0;
    let mut prev = g(1e-12);
    for s in 1..=steps {
        let x = s as f64 / steps as f64;
        let cur = g(x);
        if (prev > 0.0) != (cur > 0.0) {
            changes += 1;
        }
        prev = cur;
    }
    changes
}

/// Timing used by the Monte-Carlo oracle, µs.
#[derive(Clone, Copy)]
pub struct McTiming {
    pub sigma: f64,
    pub t_s: f64,
    pub t_c: f64,
    pub payload: f64,
}

/// Slot-level Monte-Carlo of `n` stations each running the backoff chain
/// with an exogenous collision probability `upsilon` for its stage
/// transitions. Slot outcomes come from the number of simultaneous
/// transmitters. Returns the fraction of time carrying successful payload.
pub fn monte_carlo_throughput(
    n: u32,
    w: u32,
    m: u32,
    upsilon: f64,
    timing: McTiming,
    slots: u64,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stage = vec![0u32; n as usize];
    let mut counter: Vec<u64> = (0..n).map(|_| rng.gen_range(0..w as u64)).collect();
    let mut busy_payload = 0.0;
    let mut elapsed = 0.0;
    let mut transmitters = Vec::with_capacity(n as usize);
    for _ in 0..slots {
        transmitters.clear();
        for (s, c) in counter.iter_mut().enumerate() {
            if *c == 0 {
                transmitters.push(s);
            } else {
                *c -= 1;
            }
        }
        match transmitters.len() {
            0 => elapsed += timing.sigma,
            1 => {
                elapsed += timing.t_s;
                busy_payload += timing.payload;
            }
            _ => elapsed += timing.t_c,
        }
        for &s in &transmitters {
            stage[s] = if rng.gen::<f64>() < upsilon {
                (stage[s] + 1).min(m)
            } else {
                0
            };
            let window = (w as u64) << stage[s];
            counter[s] = rng.gen_range(0..window);
        }
    }
    busy_payload / elapsed
}

/// Reward means of the synthetic bandit: level 3 dominates by 0.2.
pub const BANDIT_MEANS: [f64; 4] = [0.3, 0.4, 0.6, 0.35];

/// One bucket, four levels, additive Uniform(-0.15, 0.15) noise clipped to
/// `[0, 1]`. Returns the dominant level's share of the `rounds` decisions
/// that follow the `t_init` exploration rounds.
pub fn bandit_dominant_share(seed: u64, t_init: u64, rounds: u64) -> f64 {
    use ibac::policy::{BucketConfig, PolicyState, StatTable};
    let table = StatTable::new(BucketConfig::default(), 4).unwrap();
    let mut state = PolicyState::new(table, t_init, seed);
    let mut env = ChaCha8Rng::seed_from_u64(seed);
    env.set_stream(1);
    let snr = 30.0;
    let mut hits = 0;
    for t in 1..=t_init + rounds {
        let level = state.decide(snr).level;
        let reward = (BANDIT_MEANS[level as usize - 1] + env.gen_range(-0.15..0.15)).clamp(0.0, 1.0);
        state.update(snr, level, reward).unwrap();
        if t > t_init && level == 3 {
            hits += 1;
        }
    }
    hits as f64 / rounds as f64
}
