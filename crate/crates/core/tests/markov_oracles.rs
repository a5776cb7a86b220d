mod common;

use common::*;
use ibac::markov::*;
use proptest::prelude::*;

fn params(p: f64, gamma: f64, kappa: f64, n: u32, u: u32) -> ModelParams {
    ModelParams::new(n, 16, 3, u, kappa).with_channel_state(p, gamma)
}

#[test]
fn owrp_collision_matches_exact_sum() {
    let exact = exact_owrp_collision(&rat(3, 10), &rat(1, 5), &rat(1, 2), 10, 4);
    assert_eq!(exact, rat(8_399_043_625, 27_705_032_704));
    let got = owrp_collision_prob(&params(0.3, 0.2, 0.5, 10, 4)).unwrap();
    assert!((got.value - to_f64(&exact)).abs() < 1e-12);
    assert!(!got.clamped);
}

#[test]
fn owrp_collision_single_level_saturates() {
    let exact = exact_owrp_collision(&rat(0, 1), &rat(1, 1), &rat(1, 1), 2, 1);
    assert_eq!(exact, rat(1, 1));
    let got = owrp_collision_prob(&params(0.0, 1.0, 1.0, 2, 1)).unwrap();
    assert!((got.value - 1.0).abs() < 1e-15);
}

#[test]
fn transmission_prob_exact_fractions() {
    assert_eq!(exact_dcf_tau(&rat(1, 4), 32, 5), rat(4, 97));
    assert!((transmission_prob(0.25, 32, 5) - 4.0 / 97.0).abs() < 1e-15);
    assert!((transmission_prob(0.0, 16, 3) - 2.0 / 17.0).abs() < 1e-15);
    assert!((transmission_prob(0.5, 16, 3) - 4.0 / 82.0).abs() < 1e-15);
    for x in [0.5 - 1e-6, 0.5 + 1e-6] {
        assert!((transmission_prob(x, 16, 3) - 4.0 / 82.0).abs() < 1e-4);
    }
}

#[test]
fn transmission_prob_is_the_dcf_formula() {
    for w in [8u32, 16, 32, 64, 128] {
        for m in 0..=6u32 {
            for k in 0..40i64 {
                if k == 20 {
                    continue;
                }
                let exact = to_f64(&exact_dcf_tau(&rat(k, 40), w, m));
                let got = transmission_prob(k as f64 / 40.0, w, m);
                assert!((got - exact).abs() < 1e-12, "W={w} m={m} k={k}");
            }
        }
    }
}

#[test]
fn b00_matches_numerical_chain() {
    for (ups, w, m, frozen) in [
        (0.25, 16, 3, 0.0625),
        (0.4, 32, 5, 1.578_355_900_315_25e-2),
    ] {
        let chain = solve_backoff_chain(ups, w, m);
        assert!((chain.total() - 1.0).abs() < 1e-12);
        assert!((chain.b00() - frozen).abs() < 1e-12);
        assert!((stationary_b00(ups, w, m) - chain.b00()).abs() < 1e-12);
        assert!((transmission_prob(ups, w, m) - chain.nu()).abs() < 1e-12);
        let closed = stationary_distribution(ups, w, m);
        for (stage_c, stage_o) in closed.iter().zip(&chain.pi) {
            for (a, b) in stage_c.iter().zip(stage_o) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn chain_oracle_agrees_across_grid() {
    for ups in [0.05, 0.3, 0.55, 0.8] {
        for (w, m) in [(8u32, 0u32), (8, 2), (16, 4), (32, 6)] {
            let chain = solve_backoff_chain(ups, w, m);
            assert!((transmission_prob(ups, w, m) - chain.nu()).abs() < 1e-10);
            let closed = stationary_distribution(ups, w, m);
            let flat: Vec<f64> = closed.into_iter().flatten().collect();
            let oracle: Vec<f64> = chain.pi.into_iter().flatten().collect();
            for (a, b) in flat.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }
}

fn normalization_grid() -> Vec<f64> {
    (1..=19)
        .filter(|&k| k != 10)
        .map(|k| k as f64 * 0.05)
        .collect()
}

#[test]
fn stationary_vector_sums_to_one() {
    for ups in normalization_grid() {
        for w in [8u32, 16, 32, 64] {
            for m in 0..=6u32 {
                let total: f64 = stationary_distribution(ups, w, m).iter().flatten().sum();
                assert!((total - 1.0).abs() < 1e-10, "Υ={ups} W={w} m={m}");
            }
        }
    }
}

#[test]
fn nu_times_complement_is_b00() {
    for ups in normalization_grid().into_iter().chain([0.0, 0.5]) {
        for w in [8u32, 16, 32, 64] {
            for m in 0..=6u32 {
                let lhs = transmission_prob(ups, w, m) * (1.0 - ups);
                assert!((lhs - stationary_b00(ups, w, m)).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn kappa_zero_reduces_to_collision_free_chain() {
    let timing = MacTiming::ieee80211ax(200.0);
    for w in [8u32, 16, 32, 64, 128] {
        for m in 0..=6u32 {
            for n in [1u32, 2, 10] {
                let p = ModelParams::new(n, w, m, 4, 0.0);
                let sol = solve_fixed_point(&p, &timing, &SolverConfig::default()).unwrap();
                assert!((sol.nu - 2.0 / (w as f64 + 1.0)).abs() < 1e-12);
                assert_eq!(sol.upsilon_c, 0.0);
            }
        }
    }
}

#[test]
fn fixed_point_matches_bisection() {
    let timing = MacTiming::ieee80211ax(200.0);
    let cases = [(5u32, 16u32, 3u32, 0.5), (30, 16, 6, 0.8), (10, 16, 3, 0.3), (2, 32, 5, 0.6)];
    for (n, w, m, kappa) in cases {
        let p = ModelParams::new(n, w, m, 4, kappa);
        let sol = solve_fixed_point(&p, &timing, &SolverConfig::default()).unwrap();
        let oracle = bisection_fixed_point(n, w, m, 4, kappa);
        assert!((sol.nu - oracle).abs() < 1e-9, "n={n}: {} vs {oracle}", sol.nu);
        assert!((fixed_point_map(&p, sol.nu) - sol.nu).abs() < 1e-10);
        assert!(sol.residual < 1e-10);
    }
}

#[test]
fn closure_admits_several_fixed_points() {
    // The conditional collision probability grows without bound as ν → 0,
    // so every κ > 0 has a clamped root at Υ_C = 1. A second stable root
    // near the collision-free value appears once n is large enough.
    assert_eq!(fixed_point_sign_changes(5, 16, 3, 4, 0.5), 1);
    assert_eq!(fixed_point_sign_changes(30, 16, 6, 4, 0.8), 3);
    let timing = MacTiming::ieee80211ax(200.0);
    let lone = solve_fixed_point(&ModelParams::new(5, 16, 3, 4, 0.5), &timing, &Default::default())
        .unwrap();
    assert!(lone.clamped);
    assert!((lone.nu - 2.0 / 129.0).abs() < 1e-9);
}

#[test]
fn analytic_throughput_matches_monte_carlo() {
    let timing = MacTiming::ieee80211ax(200.0);
    let p = ModelParams::new(5, 16, 3, 4, 0.5);
    let sol = solve_fixed_point(&p, &timing, &SolverConfig::default()).unwrap();
    let (t_s, t_c) = slot_durations(&timing);
    let mc = monte_carlo_throughput(
        5,
        16,
        3,
        sol.upsilon_c,
        McTiming {
            sigma: timing.sigma,
            t_s,
            t_c,
            payload: timing.payload,
        },
        10_000_000,
        11,
    );
    let rel = (sol.throughput - mc).abs() / mc;
    assert!(rel < 0.02, "analytic {} mc {mc}", sol.throughput);
}

#[test]
fn solver_nu_non_increasing_in_kappa() {
    let timing = MacTiming::ieee80211ax(200.0);
    for n in [2u32, 5, 10, 20, 30] {
        for (w, m) in [(16u32, 3u32), (16, 6), (32, 5)] {
            let mut prev = f64::INFINITY;
            for k in 0..=20 {
                let kappa = k as f64 / 20.0;
                let sol = solve_fixed_point(
                    &ModelParams::new(n, w, m, 4, kappa),
                    &timing,
                    &SolverConfig::default(),
                )
                .unwrap();
                assert!(sol.nu <= prev + 1e-9, "n={n} W={w} m={m} κ={kappa}");
                prev = sol.nu;
            }
        }
    }
}

#[test]
fn throughput_can_rise_with_kappa_when_crowded() {
    // A larger κ lowers ν. With many stations the collision-free ν is far
    // above the throughput-optimal access rate, so backing off helps.
    let timing = MacTiming::ieee80211ax(200.0);
    let solve = |kappa: f64| {
        solve_fixed_point(&ModelParams::new(10, 16, 3, 4, kappa), &timing, &Default::default())
            .unwrap()
    };
    assert!(solve(0.6).throughput > solve(0.0).throughput);
    // With two stations it falls, as intuition suggests.
    let pair = |kappa: f64| {
        solve_fixed_point(&ModelParams::new(2, 16, 3, 4, kappa), &timing, &Default::default())
            .unwrap()
    };
    assert!(pair(0.6).throughput < pair(0.0).throughput);
}

proptest! {
    #[test]
    fn nu_strictly_decreasing_in_upsilon(a in 0.0f64..0.999, b in 0.0f64..0.999, w in 1u32..8, m in 1u32..7) {
        prop_assume!((a - b).abs() > 1e-6);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let w = 1u32 << w;
        prop_assert!(transmission_prob(lo, w, m) > transmission_prob(hi, w, m));
    }

    #[test]
    fn single_stage_nu_ignores_upsilon(x in 0.0f64..0.999, w in 1u32..8) {
        // With m = 0 a collision cannot widen the window.
        let w = 1u32 << w;
        prop_assert!((transmission_prob(x, w, 0) - 2.0 / (w as f64 + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn q_monotone_in_level_and_kappa(k1 in 0.0f64..=1.0, k2 in 0.0f64..=1.0, u in 1u32..=6) {
        let (lo, hi) = if k1 < k2 { (k1, k2) } else { (k2, k1) };
        for c in 1..=u {
            let q_lo = bonded_collision_prob(&params(0.0, 0.0, lo, 2, u), c).unwrap();
            let q_hi = bonded_collision_prob(&params(0.0, 0.0, hi, 2, u), c).unwrap();
            prop_assert!(q_lo <= q_hi + 1e-15);
            if c > 1 {
                let q_prev = bonded_collision_prob(&params(0.0, 0.0, hi, 2, u), c - 1).unwrap();
                prop_assert!(q_prev <= q_hi + 1e-15);
            }
        }
    }

    #[test]
    fn p_c_non_increasing_in_p(p1 in 0.0f64..=1.0, p2 in 0.0f64..=1.0, u in 1u32..=6) {
        let (lo, hi) = if p1 < p2 { (p1, p2) } else { (p2, p1) };
        for c in 1..=u {
            let a = bonding_prob(&params(lo, 0.0, 0.0, 2, u), c).unwrap();
            let b = bonding_prob(&params(hi, 0.0, 0.0, 2, u), c).unwrap();
            prop_assert!(b <= a + 1e-15);
        }
    }

    #[test]
    fn solution_fields_are_probabilities(n in 1u32..40, w in 1u32..7, m in 0u32..7, kappa in 0.0f64..=1.0) {
        let timing = MacTiming::ieee80211ax(200.0);
        let sol = solve_fixed_point(&ModelParams::new(n, 1 << w, m, 4, kappa), &timing, &Default::default()).unwrap();
        for v in [sol.upsilon_c, sol.nu, sol.b00, sol.p_one, sol.p_s, sol.throughput] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        let (t_s, _) = slot_durations(&timing);
        prop_assert!(sol.throughput <= timing.payload / t_s + 1e-12);
        prop_assert!(sol.residual < 1e-10);
    }
}
