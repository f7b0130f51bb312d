use feller_ldp::front::{FrontScenario, RatePieces};
use feller_ldp::rde::{solve_rde, Initial, Interpolation, McParams, RdeGrid, RdeScenario, Reaction, SolveParams};
use feller_ldp::{ScalePair, SeedSpec};
use statrs::distribution::{ContinuousCDF, Normal};

fn linear_scenario(g: Initial) -> RdeScenario {
    let front = FrontScenario::new(ScalePair::wiener(), RatePieces::constant(1.0).unwrap());
    RdeScenario { front, g, reaction: Reaction::Linear }
}

#[test]
fn linear_reaction_on_constant_data_is_exponential() {
    let (eps, t) = (0.5, 1.0);
    let sc = linear_scenario(Initial::Constant { value: 1.0 });
    let grid = RdeGrid::new(t, 8, -1.0, 1.0, 11).unwrap();
    let mc = McParams { n_mc: 50, ..McParams::default() };
    let f = solve_rde(&sc, eps, grid, &mc, &SolveParams::default(), SeedSpec::new(21)).unwrap();
    // the first sweep is exact and the second confirms it
    assert!(f.converged && f.iteration_count == 2, "{:?}", f.residual_trace);
    for (k, tk) in f.output_times().into_iter().enumerate() {
        let exact = (tk / eps).exp();
        for &v in f.output_row(k) {
            assert!((v - exact).abs() < 1e-9 * exact, "t = {tk}: {v} vs {exact}");
        }
    }
}

#[test]
fn linear_reaction_on_a_step_matches_the_heat_kernel() {
    // f = e^{ct/ε} P_x(X_t ≤ 0) and X is Brownian motion with variance εt
    let (eps, t) = (0.5, 1.0);
    let sc = linear_scenario(Initial::Indicator { at: 0.0 });
    let grid = RdeGrid::new(t, 10, -2.0, 2.0, 41).unwrap();
    let mc = McParams { n_mc: 2000, ..McParams::default() };
    let f = solve_rde(&sc, eps, grid, &mc, &SolveParams::default(), SeedSpec::new(22)).unwrap();
    assert!(f.converged);
    let times = f.output_times();
    let mut worst = 0.0f64;
    for k in [2, 5, 10] {
        let tk = times[k];
        let normal = Normal::new(0.0, (eps * tk).sqrt()).unwrap();
        for (j, &x) in f.xs().iter().enumerate() {
            let p = normal.cdf(-x);
            worst = worst.max((f.value(k, j) / (tk / eps).exp() - p).abs());
        }
    }
    assert!(worst < 0.05, "worst probability error {worst}");
}

#[test]
fn larger_data_gives_larger_solution() {
    let front = FrontScenario::new(ScalePair::delay_corner(1.0, 3.0, 0.5, 1.0, 2.0).unwrap(), RatePieces::two_piece(1.0, 1.0, 2.0).unwrap());
    let grid = RdeGrid::new(1.0, 10, -1.0, 3.0, 41).unwrap();
    let mc = McParams { n_mc: 300, n_mollify: 1000, interpolation: Interpolation::Linear, ..McParams::default() };
    let solve = |at: f64| {
        let sc = RdeScenario { front: front.clone(), g: Initial::Indicator { at }, reaction: Reaction::Kpp };
        solve_rde(&sc, 0.2, grid, &mc, &SolveParams::default(), SeedSpec::new(23)).unwrap()
    };
    let (lo, hi) = (solve(0.0), solve(0.5));
    assert!(lo.converged && hi.converged);
    for k in 0..=10 {
        for (a, b) in lo.output_row(k).iter().zip(hi.output_row(k)) {
            // the slab map is monotone only up to 1; above it lives Monte Carlo overshoot
            assert!(a.min(1.0) <= b.min(1.0) + 1e-6, "row {k}: {a} > {b}");
            assert!((0.0..=1.0 + 1e-3).contains(a));
        }
    }
}
