//! W(t, x) against two independent oracles: a Lagrange-multiplier solve of
//! each route and a dynamic program over discretized paths.

use feller_ldp::front::{front_time, quasi_distance, w_value, FrontScenario, RatePieces};
use feller_ldp::ScalePair;
use proptest::prelude::*;

/// `(p, c)` per piece and the waiting rate.
struct Route {
    pieces: Vec<(f64, f64)>,
    c_wait: Option<f64>,
}

fn kkt_value(r: &Route, t: f64) -> f64 {
    let r = &Route { pieces: r.pieces.iter().copied().filter(|p| p.0 > 0.0).collect(), c_wait: r.c_wait };
    let cmax = r.pieces.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let durations = |lam: f64| -> Vec<f64> { r.pieces.iter().map(|&(p, c)| (p / (lam - c)).sqrt()).collect() };
    let value = |mu: &[f64], w: f64| -> f64 {
        r.pieces.iter().zip(mu).map(|(&(p, c), &m)| c * m - p / m).sum::<f64>() + r.c_wait.unwrap_or(0.0) * w
    };
    if let Some(cz) = r.c_wait {
        if cz > cmax {
            let mu = durations(cz);
            let used: f64 = mu.iter().sum();
            if used <= t {
                return value(&mu, t - used);
            }
        }
    }
    // Σ μ_i(λ) = t, decreasing in λ
    let (mut lo, mut hi) = (cmax, cmax + 1.0);
    while durations(hi).iter().sum::<f64>() > t {
        hi = cmax + 2.0 * (hi - cmax);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if durations(mid).iter().sum::<f64>() > t {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    value(&durations(0.5 * (lo + hi)), 0.0)
}

/// Wiener pair (`p = L²/2`), rate `c1` below `xs` and `c2` above, `x > 0`.
fn two_piece_oracle(xs: f64, c1: f64, c2: f64, t: f64, x: f64) -> f64 {
    let p = |l: f64| 0.5 * l * l;
    let cz = c1.max(c2);
    let mut routes = Vec::new();
    if x > xs {
        routes.push(Route { pieces: vec![(p(x - xs), c2), (p(xs), c1)], c_wait: None });
        routes.push(Route { pieces: vec![(p(x - xs), c2), (p(xs), c1)], c_wait: Some(cz) });
        routes.push(Route { pieces: vec![(p(x - xs), c2), (p(xs), c1)], c_wait: Some(c2) });
    } else {
        routes.push(Route { pieces: vec![(p(x), c1)], c_wait: None });
        routes.push(Route { pieces: vec![(p(xs - x), c1), (p(xs), c1)], c_wait: Some(cz) });
    }
    routes.iter().map(|r| kkt_value(r, t)).fold(f64::NEG_INFINITY, f64::max)
}

fn wiener_two_piece(xs: f64, c1: f64, c2: f64) -> FrontScenario {
    FrontScenario::new(ScalePair::wiener(), RatePieces::two_piece(xs, c1, c2).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn inner_solver_matches_kkt(c2 in 0.3..5.0f64, t in 0.2..3.0f64, x in 0.05..3.0f64) {
        let sc = wiener_two_piece(1.0, 1.0, c2);
        let w = w_value(&sc, t, x).unwrap();
        let oracle = two_piece_oracle(1.0, 1.0, c2, t, x);
        prop_assert!((w - oracle).abs() <= 1e-8 * (1.0 + oracle.abs()), "W = {w}, oracle {oracle}");
    }

    #[test]
    fn homogeneous_reduction(t in 0.05..5.0f64, x in -1.0..6.0f64) {
        let sc = FrontScenario::new(ScalePair::delay_corner(1.0, 3.0, 0.5, 1.0, 2.0).unwrap(), RatePieces::constant(1.0).unwrap());
        let d = quasi_distance(&sc.sp, 0.0, x.max(0.0)).unwrap();
        let exact = t - d * d / (4.0 * t);
        let w = w_value(&sc, t, x).unwrap();
        prop_assert!((w - exact).abs() <= 1e-6 * exact.abs().max(1e-12), "{w} vs {exact}");
    }
}

#[test]
fn front_time_matches_kkt_root() {
    for c2 in [0.5, 1.5, 2.5, 4.0] {
        let sc = wiener_two_piece(1.0, 1.0, c2);
        for x in [0.5, 1.0, 1.5, 2.5] {
            let (mut lo, mut hi) = (1e-6, 50.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if two_piece_oracle(1.0, 1.0, c2, mid, x) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let t = front_time(&sc, x).unwrap();
            assert!((t - lo).abs() < 1e-9 * lo.max(1.0), "c2={c2}, x={x}: {t} vs {lo}");
        }
    }
}

/// Value `lo_c` below `xs`, `hi_c` from `xs` on.
#[derive(Clone, Copy)]
struct Step {
    xs: f64,
    lo_c: f64,
    hi_c: f64,
}

impl Step {
    /// Average over the straight segment from `x` to `y`.
    fn mean(&self, x: f64, y: f64) -> f64 {
        let (a, b) = (x.min(y), x.max(y));
        if b - a < 1e-14 {
            return if a < self.xs { self.lo_c } else { self.hi_c };
        }
        let below = (self.xs.clamp(a, b) - a) / (b - a);
        below * self.lo_c + (1.0 - below) * self.hi_c
    }
}

/// Backward dynamic program on a lattice: one step of length `h` moves
/// straight from `x` to `y` at constant speed, collects `h` times the mean
/// rate on the segment and pays `(y - x)² ā / (4h)` with `ā` the mean of
/// `v'`, the action of that move for `u = x`.
fn dp_oracle(c: Step, a: Step, t: f64, xs_query: &[f64]) -> Vec<f64> {
    let (lo, hi, dx, h): (f64, f64, f64, f64) = (-1.0, 4.5, 0.001, 0.02);
    let n = ((hi - lo) / dx).round() as usize + 1;
    let grid: Vec<f64> = (0..n).map(|i| lo + dx * i as f64).collect();
    let reach = (0.6 / dx) as usize;
    let mut w: Vec<f64> = grid.iter().map(|&x| if x <= 0.0 { 0.0 } else { f64::NEG_INFINITY }).collect();
    let steps = (t / h).round() as usize;
    for _ in 0..steps {
        let next: Vec<f64> = (0..n)
            .map(|i| {
                let x = grid[i];
                let (j0, j1) = (i.saturating_sub(reach), (i + reach).min(n - 1));
                let mut best = f64::NEG_INFINITY;
                for j in j0..=j1 {
                    if w[j] == f64::NEG_INFINITY {
                        continue;
                    }
                    let y = grid[j];
                    let v = w[j] + h * c.mean(x, y) - (y - x) * (y - x) * a.mean(x, y) / (4.0 * h);
                    best = best.max(v);
                }
                best
            })
            .collect();
        w = next;
    }
    xs_query.iter().map(|&x| w[((x - lo) / dx).round() as usize]).collect()
}

#[test]
fn route_family_matches_dynamic_program() {
    // Wiener pair: v' = 2
    for c2 in [1.5, 4.0] {
        let sc = wiener_two_piece(1.0, 1.0, c2);
        let c = Step { xs: 1.0, lo_c: 1.0, hi_c: c2 };
        let xs = [0.5, 1.0, 1.5, 2.0];
        let t = 1.2;
        let dp = dp_oracle(c, Step { xs: 0.0, lo_c: 2.0, hi_c: 2.0 }, t, &xs);
        for (x, d) in xs.iter().zip(dp) {
            let w = w_value(&sc, t, *x).unwrap();
            assert!((w - d).abs() < 0.005, "c2={c2}, x={x}: W = {w}, dp {d}");
        }
    }
    // example pair: v' = 1 below 2 and 4 above, jump at 1 ignored by the action
    let sc = FrontScenario::new(ScalePair::delay_corner(1.0, 3.0, 2.0, 1.0, 2.0).unwrap(), RatePieces::two_piece(1.5, 1.0, 3.0).unwrap());
    let c = Step { xs: 1.5, lo_c: 1.0, hi_c: 3.0 };
    let a = Step { xs: 2.0, lo_c: 1.0, hi_c: 4.0 };
    let xs = [0.5, 1.25, 2.0, 3.0];
    let t = 1.0;
    let dp = dp_oracle(c, a, t, &xs);
    for (x, d) in xs.iter().zip(dp) {
        let w = w_value(&sc, t, *x).unwrap();
        assert!((w - d).abs() < 0.005, "x={x}: W = {w}, dp {d}");
    }
}
