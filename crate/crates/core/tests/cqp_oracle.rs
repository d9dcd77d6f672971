use lifestyle_core::cqp::{solve_cqp, MeanVariance};
use lifestyle_core::linalg::{cholesky, quad_form, symmetric_eigenvalues};
use lifestyle_core::MarketParams;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MESH: f64 = 1e-3;

fn objective(excess: &[f64], cov: &[f64], pi: &[f64], rho: f64) -> f64 {
    let d = excess.len();
    let mean: f64 = pi.iter().zip(excess).map(|(p, e)| p * e).sum();
    mean - 0.5 * rho * quad_form(cov, d, pi)
}

/// Exhaustive search over the mesh points of `{pi >= 0, sum pi <= alpha}`.
/// The first `d - 1` weights run over the mesh; along the last one the
/// objective is a concave parabola, so its best mesh point is one of the two
/// neighbours of the clipped vertex.
fn brute_force(excess: &[f64], cov: &[f64], alpha: f64, rho: f64) -> Vec<f64> {
    let d = excess.len();
    let steps = (alpha / MESH + 1e-9).floor() as usize;
    let mut best = vec![0.0; d];
    let mut best_val = f64::NEG_INFINITY;
    let mut pi = vec![0.0; d];
    let mut idx = vec![0usize; d - 1];
    loop {
        let used: usize = idx.iter().sum();
        if used <= steps {
            for (p, &i) in pi.iter_mut().zip(&idx) {
                *p = i as f64 * MESH;
            }
            let last = d - 1;
            let cross: f64 = (0..last).map(|j| cov[last * d + j] * pi[j]).sum();
            let vertex = (excess[last] - rho * cross) / (rho * cov[last * d + last]);
            let room = steps - used;
            let k = (vertex / MESH).floor().clamp(0.0, room as f64) as usize;
            for cand in [k, (k + 1).min(room)] {
                pi[last] = cand as f64 * MESH;
                let v = objective(excess, cov, &pi, rho);
                if v > best_val {
                    best_val = v;
                    best.copy_from_slice(&pi);
                }
            }
        }
        let mut k = 0;
        loop {
            if k == d - 1 {
                return best;
            }
            idx[k] += 1;
            if idx[k] <= steps {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

fn random_market(rng: &mut ChaCha8Rng, d: usize) -> MarketParams {
    loop {
        let vols: Vec<f64> = (0..d).map(|_| rng.random_range(0.04..0.35)).collect();
        let mut corr = vec![0.0; d * d];
        for i in 0..d {
            corr[i * d + i] = 1.0;
            for j in 0..i {
                let c = rng.random_range(-0.6..0.6);
                corr[i * d + j] = c;
                corr[j * d + i] = c;
            }
        }
        let mut cov = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] = corr[i * d + j] * vols[i] * vols[j];
            }
        }
        if cholesky(&cov, d).is_none() {
            continue;
        }
        let r = 0.01;
        let mut drifts: Vec<f64> = (0..d).map(|_| r + rng.random_range(-0.02..0.10)).collect();
        if drifts.iter().all(|&m| m <= r) {
            drifts[0] = r + 0.03;
        }
        if let Ok(p) = MarketParams::new(r, drifts, cov) {
            return p;
        }
    }
}

fn condition_number(cov: &[f64], d: usize) -> f64 {
    let eig = symmetric_eigenvalues(cov, d);
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e), hi.max(e)));
    hi / lo
}

#[test]
fn matches_brute_force_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(20240917);
    let mut compared = 0;
    let mut n = 0;
    while compared < 1200 {
        n += 1;
        let d = if n % 2 == 0 { 2 } else { 3 };
        let params = random_market(&mut rng, d);
        let alpha = rng.random_range(0.0..1.0);
        let rho = rng.random_range(0.5..10.0);
        let mv = MeanVariance::new(&params).unwrap();
        let alloc = mv.solve(alpha, rho).unwrap();
        assert!(mv.kkt_residual(&alloc, rho) < 1e-10, "instance {n}");
        let grid = brute_force(mv.excess(), mv.covariance(), alpha, rho);
        let (fs, fg) = (
            objective(mv.excess(), mv.covariance(), &alloc.weights, rho),
            objective(mv.excess(), mv.covariance(), &grid, rho),
        );
        assert!(fs >= fg - 1e-15, "instance {n}: grid point beats solver, {fg} > {fs}");
        // the distance between mesh and true optimum grows with the
        // condition number; weights are compared on well-conditioned cases
        if condition_number(mv.covariance(), d) > 100.0 {
            continue;
        }
        compared += 1;
        for (a, b) in alloc.weights.iter().zip(&grid) {
            assert!((a - b).abs() < 2e-3, "instance {n}: {:?} vs {:?}", alloc.weights, grid);
        }
    }
}

#[test]
fn brute_force_recovers_baseline_allocation() {
    let mv = MeanVariance::new(&MarketParams::paper_baseline()).unwrap();
    let grid = brute_force(mv.excess(), mv.covariance(), 1.0, 8.0);
    assert!((grid[0] - 0.546).abs() < 1.5e-3 && (grid[1] - 0.186).abs() < 1.5e-3, "{grid:?}");
}

fn market_strategy() -> impl Strategy<Value = MarketParams> {
    (any::<u64>(), prop::sample::select(vec![1usize, 2, 3, 4]))
        .prop_map(|(seed, d)| random_market(&mut ChaCha8Rng::seed_from_u64(seed), d))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn self_similarity(params in market_strategy(), alpha in 0.001f64..1.0, rho in 0.05f64..20.0) {
        let mv = MeanVariance::new(&params).unwrap();
        let lhs = mv.solve(alpha, rho).unwrap();
        let rhs = mv.solve(1.0, alpha * rho).unwrap();
        for (a, b) in lhs.weights.iter().zip(&rhs.weights) {
            prop_assert!((a - alpha * b).abs() < 1e-9);
        }
    }

    #[test]
    fn kkt_certificate(params in market_strategy(), alpha in 0.0f64..1.5, rho in 0.05f64..20.0) {
        let mv = MeanVariance::new(&params).unwrap();
        let a = mv.solve(alpha, rho).unwrap();
        prop_assert!(mv.kkt_residual(&a, rho) < 1e-10);
        prop_assert!(a.weights.iter().all(|&w| w >= -1e-12));
        prop_assert!(a.total() <= alpha + 1e-12);
        prop_assert!(a.multipliers.iter().all(|&m| m >= -1e-10));
        for &i in a.active_set.zeros() {
            prop_assert!(a.weights[i].abs() < 1e-12);
        }
        if a.active_set.budget_full() {
            prop_assert!((a.total() - alpha).abs() < 1e-12);
        }
    }

    #[test]
    fn value_nonincreasing_in_risk_aversion(params in market_strategy(), alpha in 0.0f64..1.0,
                                            rho in 0.05f64..20.0, bump in 0.0f64..5.0) {
        let mv = MeanVariance::new(&params).unwrap();
        prop_assert!(mv.value(alpha, rho).unwrap() + 1e-15 >= mv.value(alpha, rho + bump).unwrap());
    }

    #[test]
    fn heuristics_respect_constraints(params in market_strategy(), alpha in 0.0f64..1.0, gamma in 0.2f64..15.0) {
        let mv = MeanVariance::new(&params).unwrap();
        // pi0 only rescales the Samuelson weights, which may be short
        prop_assert!(mv.pi0(gamma).unwrap().total() <= 1.0 + 1e-12);
        for a in [mv.pi1(gamma).unwrap(), mv.pi2(alpha, gamma).unwrap(), mv.pi3(alpha, gamma).unwrap()] {
            prop_assert!(a.weights.iter().all(|&w| w >= -1e-12));
            prop_assert!(a.total() <= 1.0 + 1e-12);
        }
        if alpha > 0.0 {
            let lhs = mv.pi3(alpha, gamma).unwrap();
            let rhs = mv.solve(alpha, gamma).unwrap();
            for (a, b) in lhs.weights.iter().zip(&rhs.weights) {
                prop_assert!((alpha * a - b).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn envelope_against_finite_differences() {
    let params = MarketParams::paper_baseline();
    let mv = MeanVariance::new(&params).unwrap();
    for k in 1..=100 {
        let rho = 0.1 * k as f64;
        let h = 1e-5 * rho;
        let fd = (mv.g(rho + h).unwrap() - mv.g(rho - h).unwrap()) / (2.0 * h);
        let exact = mv.g_prime(rho).unwrap();
        assert!(((fd - exact) / exact).abs() < 1e-5, "rho {rho}: {fd} vs {exact}");
        assert!(exact < 0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..50 {
        let p = random_market(&mut rng, 3);
        let mv = MeanVariance::new(&p).unwrap();
        for k in 1..=100 {
            let rho = 0.1 * k as f64;
            let h = 1e-5 * rho;
            let fd = (mv.g(rho + h).unwrap() - mv.g(rho - h).unwrap()) / (2.0 * h);
            let exact = mv.g_prime(rho).unwrap();
            assert!(((fd - exact) / exact).abs() < 1e-5, "rho {rho}: {fd} vs {exact}");
        }
    }
}

#[test]
fn envelope_matches_free_function() {
    let p = MarketParams::paper_baseline();
    let a = solve_cqp(1.0, 8.0, &p).unwrap();
    let mv = MeanVariance::new(&p).unwrap();
    let expected = -0.5 * quad_form(mv.covariance(), 2, &a.weights);
    assert!((lifestyle_core::cqp::g_prime(8.0, &p).unwrap() - expected).abs() < 1e-15);
    assert!((expected + 1.38e-3).abs() < 0.01e-3, "{expected}");
}

#[test]
fn positivity_bound_on_risk_aversion_grid() {
    let mv = MeanVariance::new(&MarketParams::paper_baseline()).unwrap();
    for gamma in [1.0, 2.0, 5.0, 8.0] {
        let mut lowest = f64::INFINITY;
        for k in 1..=1000 {
            let rho = gamma * k as f64 / 1000.0;
            let a = mv.solve(1.0, rho).unwrap();
            lowest = lowest.min(quad_form(mv.covariance(), 2, &a.weights));
        }
        // bounded below by the variance of the fully invested mix at rho = gamma
        assert!(lowest > 1e-3, "gamma {gamma}: {lowest}");
    }
}

#[test]
fn lifestyle_weights_bounded_below_on_state_grid() {
    let p = MarketParams::paper_baseline();
    let mv = MeanVariance::new(&p).unwrap();
    let s = lifestyle_core::ContributionSchedule::paper_baseline();
    for gamma in [2.0, 8.0] {
        let mut lowest = f64::INFINITY;
        for ti in 0..=40 {
            let t = ti as f64;
            for zi in 0..=180 {
                let x = (-12.0 + 0.1 * zi as f64).exp();
                let alpha = lifestyle_core::market::capital_ratio(t, x, &s, 0.01).unwrap();
                for a in [mv.pi0(gamma).unwrap(), mv.pi1(gamma).unwrap(), mv.pi2(alpha, gamma).unwrap(), mv.pi3(alpha, gamma).unwrap()] {
                    lowest = lowest.min(quad_form(mv.covariance(), 2, &a.weights));
                }
            }
        }
        assert!(lowest > 1e-3, "gamma {gamma}: {lowest}");
    }
}
