use lifestyle_core::hjb::{solve_rho, SolverOptions};
use lifestyle_core::welfare::{
    certainty_equivalent_pde, compare_strategies, irr, monte_carlo_ce, paired_gap, value_pde, McOptions, Method,
    PathSimulator,
};
use lifestyle_core::{ContributionSchedule, Fidelity, GridSpec, MarketParams, Strategy, StrategyKind};

const GAMMAS: [f64; 3] = [2.0, 5.0, 8.0];
// pi0, pi1, pi2, pi3, optimal
const CE_REFERENCE: [[f64; 5]; 3] = [
    [2.2584, 3.3353, 3.3353, 3.6496, 3.6501],
    [1.9720, 2.0153, 2.0153, 2.1774, 2.1782],
    [1.6872, 1.6872, 1.7510, 1.8161, 1.8164],
];
const IRR_REFERENCE: [[f64; 5]; 3] = [
    [0.0364, 0.0516, 0.0516, 0.0550, 0.0550],
    [0.0308, 0.0317, 0.0317, 0.0349, 0.0349],
    [0.0242, 0.0242, 0.0258, 0.0274, 0.0274],
];

fn setup() -> (MarketParams, ContributionSchedule, GridSpec) {
    (
        MarketParams::paper_baseline(),
        ContributionSchedule::paper_baseline(),
        GridSpec::preset(Fidelity::Desk, 40.0),
    )
}

#[test]
fn lognormal_closed_form() {
    let params = MarketParams::paper_baseline();
    let schedule = ContributionSchedule::constant(40.0, 0.0).unwrap();
    let strategy = Strategy::Fixed(vec![0.0, 1.0]);
    // constant weights and no contributions: every step is exact, so a
    // coarse step loses nothing
    let opts = McOptions { n_paths: 200_000, dt_sim: 1.0, seed: 11 };
    let est = monte_carlo_ce(&strategy, &params, &schedule, 2.0, 1.0, &opts).unwrap();
    let exact = 1.5f64.exp();
    assert!((est.ce - exact).abs() < 3.0 * est.stderr, "{} +- {} vs {exact}", est.ce, est.stderr);
    // relative error of E[1/W] is sqrt(e^2.5 - 1) / sqrt(n)
    let expected_se = exact * ((2.5f64.exp() - 1.0) / 200_000.0).sqrt();
    assert!((est.stderr / expected_se - 1.0).abs() < 0.2, "{} vs {expected_se}", est.stderr);

    let (_, _, grid) = setup();
    let pde = value_pde(&strategy, &params, &schedule, 2.0, &grid).unwrap();
    assert!((pde.ce_at(1.0) - exact).abs() < 2e-3 * exact, "{}", pde.ce_at(1.0));
}

#[test]
fn lognormal_closed_form_other_utilities() {
    let params = MarketParams::paper_baseline();
    let schedule = ContributionSchedule::constant(40.0, 0.0).unwrap();
    let strategy = Strategy::Fixed(vec![0.3, 0.5]);
    let (pi, excess) = ([0.3, 0.5], params.excess_returns());
    let cov = params.covariance();
    let q = pi[0] * pi[0] * cov[0] + 2.0 * pi[0] * pi[1] * cov[1] + pi[1] * pi[1] * cov[3];
    let drift = 0.01 + pi[0] * excess[0] + pi[1] * excess[1];
    let opts = McOptions { n_paths: 100_000, dt_sim: 4.0, seed: 3 };
    for gamma in [0.5, 1.0, 3.0] {
        let exact = ((drift - 0.5 * gamma * q) * 40.0).exp();
        let est = monte_carlo_ce(&strategy, &params, &schedule, gamma, 1.0, &opts).unwrap();
        assert!((est.ce - exact).abs() < 3.0 * est.stderr, "gamma {gamma}: {} vs {exact}", est.ce);
    }
}

#[test]
fn riskless_strategy_is_the_annuity() {
    let (params, schedule, grid) = setup();
    let annuity = schedule.accumulated_value(0.01);
    assert!((annuity - (0.4f64.exp() - 1.0) / 0.4).abs() < 1e-12);
    let strategy = Strategy::Fixed(vec![0.0, 0.0]);
    let opts = McOptions { n_paths: 64, dt_sim: 0.5, seed: 99 };
    for gamma in [0.5, 1.0, 2.0, 8.0] {
        let est = monte_carlo_ce(&strategy, &params, &schedule, gamma, 0.0, &opts).unwrap();
        assert!((est.ce - annuity).abs() < 1e-12 * annuity, "{}", est.ce);
        assert!(est.stderr < 1e-12);
        let curve = value_pde(&strategy, &params, &schedule, gamma, &grid).unwrap();
        for j in (0..grid.space_nodes()).step_by(97) {
            let x = grid.z(j).exp();
            let exact = 0.4f64.exp() * x + annuity;
            assert!((curve.ce_at(x) - exact).abs() < 1e-12 * exact, "{x}");
        }
        // the zero-wealth value comes from a fit, exact to the fit's own error
        let pde = certainty_equivalent_pde(&strategy, &params, &schedule, gamma, &grid).unwrap();
        assert!((pde - annuity).abs() < 5e-5, "{pde}");
    }
}

#[test]
fn heuristics_and_optimum_on_desk_grid() {
    let (params, schedule, grid) = setup();
    let options = SolverOptions::default();
    let mut worst = 0.0f64;
    for (g, &gamma) in GAMMAS.iter().enumerate() {
        let surface = solve_rho(&params, &schedule, gamma, &grid, &options).unwrap();
        let strategies = [
            Strategy::Pi0,
            Strategy::Pi1,
            Strategy::Pi2,
            Strategy::Pi3,
            Strategy::Optimal(&surface),
        ];
        let report = compare_strategies(
            &strategies,
            &params,
            &schedule,
            gamma,
            &[Method::Pde],
            &grid,
            &McOptions::default(),
            &|| 0.0,
        )
        .unwrap();
        assert_eq!(report.rows.len(), 5);
        let ces: Vec<f64> = report.rows.iter().map(|r| r.ce).collect();
        for (k, row) in report.rows.iter().enumerate() {
            assert_eq!(row.method, Method::Pde);
            assert_eq!(row.stderr, None);
            let err = (row.ce - CE_REFERENCE[g][k]).abs();
            worst = worst.max(err);
            assert!(err < 0.03, "gamma {gamma} {}: {} vs {}", row.strategy.name(), row.ce, CE_REFERENCE[g][k]);
            assert!((row.irr - IRR_REFERENCE[g][k]).abs() < 0.0015, "gamma {gamma}: irr {}", row.irr);
        }
        // ordering, with the ties in the reference values
        for w in ces.windows(2) {
            assert!(w[0] <= w[1] + 1e-3, "gamma {gamma}: {ces:?}");
        }
        // the optimum dominates every heuristic
        for &ce in &ces[..4] {
            assert!(ce <= ces[4] * (1.0 + 1e-3));
        }
        let gap = (ces[4] - ces[3]) / ces[4];
        assert!((0.0..0.002).contains(&gap), "gamma {gamma}: gap {gap}");
    }
    assert!(worst < 0.01, "{worst}");
}

#[test]
fn irr_reference_points() {
    let s = ContributionSchedule::paper_baseline();
    assert!((irr(3.6501, &s).unwrap() - 0.0550).abs() < 1e-4);
    assert!((irr(1.8164, &s).unwrap() - 0.0274).abs() < 1e-4);
    assert!(irr(1.0, &s).unwrap().abs() < 1e-9);
}

#[test]
fn pde_and_monte_carlo_agree() {
    let (params, schedule, grid) = setup();
    let gamma = 5.0;
    let surface = solve_rho(&params, &schedule, gamma, &grid, &SolverOptions::default()).unwrap();
    let opts = McOptions { n_paths: 40_000, dt_sim: 0.02, seed: 2024 };
    let strategies = [
        Strategy::Pi0,
        Strategy::Pi1,
        Strategy::Pi2,
        Strategy::Pi3,
        Strategy::Optimal(&surface),
    ];
    for s in &strategies {
        let pde = certainty_equivalent_pde(s, &params, &schedule, gamma, &grid).unwrap();
        let mc = monte_carlo_ce(s, &params, &schedule, gamma, 0.0, &opts).unwrap();
        assert!(mc.stderr < 0.01, "{}: stderr {}", s.kind().name(), mc.stderr);
        // the time step adds a bias of a few 1e-4 on top of the sampling error
        assert!(
            (pde - mc.ce).abs() < 3.0 * mc.stderr + 2e-3,
            "{}: pde {pde} vs mc {} +- {}",
            s.kind().name(),
            mc.ce,
            mc.stderr
        );
    }
}

#[test]
fn common_random_numbers_shrink_the_gap_error() {
    let (params, schedule, _) = setup();
    let gamma = 5.0;
    let (n, dt, seed) = (20_000, 0.05, 77);
    let mut a = PathSimulator::new(&Strategy::Pi3, &params, &schedule, gamma, dt).unwrap();
    let mut b = PathSimulator::new(&Strategy::Pi1, &params, &schedule, gamma, dt).unwrap();
    let wa: Vec<f64> = (0..n).map(|i| a.terminal_wealth(0.0, seed, i).unwrap()).collect();
    let wb: Vec<f64> = (0..n).map(|i| b.terminal_wealth(0.0, seed, i).unwrap()).collect();
    let gap = paired_gap(&wa, &wb, gamma).unwrap();
    assert!(gap.stderr_paired < gap.stderr_independent, "{gap:?}");
    assert!(gap.gap > 0.0);
    assert!((gap.gap - (2.1774 - 2.0153)).abs() < 3.0 * gap.stderr_paired + 0.01, "{gap:?}");
}

#[test]
fn simulation_is_reproducible_and_order_free() {
    let (params, schedule, _) = setup();
    let mut sim = PathSimulator::new(&Strategy::Pi2, &params, &schedule, 8.0, 0.1).unwrap();
    let forward: Vec<f64> = (0..50).map(|i| sim.terminal_wealth(0.0, 5, i).unwrap()).collect();
    let backward: Vec<f64> = (0..50).rev().map(|i| sim.terminal_wealth(0.0, 5, i).unwrap()).collect();
    for (x, y) in forward.iter().zip(backward.iter().rev()) {
        assert_eq!(x.to_bits(), y.to_bits());
    }
    let other = sim.terminal_wealth(0.0, 6, 0).unwrap();
    assert_ne!(other, forward[0]);
}

#[test]
fn log_and_low_risk_aversion() {
    let (params, schedule, grid) = setup();
    for gamma in [0.5, 1.0] {
        let ce: Vec<f64> = StrategyKind::HEURISTICS
            .iter()
            .map(|&k| {
                let s = Strategy::heuristic(k).unwrap();
                certainty_equivalent_pde(&s, &params, &schedule, gamma, &grid).unwrap()
            })
            .collect();
        assert!(ce.iter().all(|c| c.is_finite() && *c > 1.0), "gamma {gamma}: {ce:?}");
        let opts = McOptions { n_paths: 20_000, dt_sim: 0.05, seed: 1 };
        let mc = monte_carlo_ce(&Strategy::Pi1, &params, &schedule, gamma, 0.0, &opts).unwrap();
        assert!((mc.ce - ce[1]).abs() < 3.0 * mc.stderr + 5e-3, "gamma {gamma}: {} vs {}", mc.ce, ce[1]);
    }
}

#[test]
fn rejects_mismatched_inputs() {
    let (params, schedule, _) = setup();
    let short = GridSpec::preset(Fidelity::Desk, 20.0);
    assert!(value_pde(&Strategy::Pi1, &params, &schedule, 2.0, &short).is_err());
    let opts = McOptions { n_paths: 1, dt_sim: 0.1, seed: 0 };
    assert!(monte_carlo_ce(&Strategy::Pi1, &params, &schedule, 2.0, 0.0, &opts).is_err());
    assert!(PathSimulator::new(&Strategy::Pi1, &params, &schedule, 2.0, 0.0).is_err());
    let a = [1.0, 2.0];
    assert!(paired_gap(&a, &a[..1], 2.0).is_err());
}
