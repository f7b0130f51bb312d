use std::sync::{Arc, OnceLock};

use feller_ldp::action::{action, reduced_action};
use feller_ldp::scale::CoefficientOptions;
use feller_ldp::time_change::sigma;
use feller_ldp::{PiecewisePath, ScalePair};
use proptest::prelude::*;

fn smooth_pair() -> &'static ScalePair {
    static SP: OnceLock<ScalePair> = OnceLock::new();
    SP.get_or_init(|| {
        let a = |x: f64| 1.0 + 0.5 * x.sin();
        let b = |x: f64| 0.3 * x.cos();
        ScalePair::from_diffusion_coefficients(Arc::new(a), Some(Arc::new(b)), CoefficientOptions::on(-4.0, 4.0)).unwrap()
    })
}

fn delay(kappa: f64) -> ScalePair {
    ScalePair::delay_corner(1.0, 3.0, kappa, 1.0, 2.0).unwrap()
}

/// Nodes on the structure points of the delay fixture show up often.
fn node_value() -> impl Strategy<Value = f64> {
    prop_oneof![3 => -2.5..3.0f64, 1 => prop::sample::select(vec![1.0, 2.0])]
}

fn path() -> impl Strategy<Value = PiecewisePath> {
    prop::collection::vec((0.05..1.0f64, node_value(), prop::bool::weighted(0.2)), 1..7).prop_map(|steps| {
        let mut nodes = vec![(0.0, 0.5)];
        let mut t = 0.0;
        for (dt, x, rest) in steps {
            t += dt;
            nodes.push((t, x));
            if rest {
                t += dt;
                nodes.push((t, x));
            }
        }
        PiecewisePath::new(nodes).unwrap()
    })
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn action_is_nonnegative_and_finite(p in path(), kappa in 0.0..2.0f64) {
        let s = action(&delay(kappa), &p, p.start()).unwrap();
        prop_assert!(s.value >= 0.0 && s.value.is_finite());
    }

    #[test]
    fn jumps_do_not_change_the_action(p in path(), kappa in 0.01..2.0f64) {
        let a = action(&delay(0.0), &p, p.start()).unwrap().value;
        let b = action(&delay(kappa), &p, p.start()).unwrap().value;
        prop_assert!(rel(a, b) < 1e-10, "{a} vs {b}");
    }

    #[test]
    fn reduced_form_agrees_without_jumps(p in path()) {
        let sp = delay(0.0);
        let a = action(&sp, &p, p.start()).unwrap().value;
        let b = reduced_action(&sp, &p, p.start()).unwrap().value;
        prop_assert!(rel(a, b) < 1e-10, "{a} vs {b}");
        let a = action(smooth_pair(), &p, p.start()).unwrap().value;
        let b = reduced_action(smooth_pair(), &p, p.start()).unwrap().value;
        prop_assert!(rel(a, b) < 1e-8, "smooth pair: {a} vs {b}");
    }

    #[test]
    fn time_scaling(p in path(), c in 0.2..5.0f64) {
        let sp = delay(0.5);
        let a = action(&sp, &p, p.start()).unwrap().value;
        let b = action(&sp, &p.time_rescaled(c).unwrap(), p.start()).unwrap().value;
        prop_assert!(rel(a / c, b) < 1e-12, "{} vs {b}", a / c);
    }

    #[test]
    fn refinement_and_rests_cost_nothing(p in path(), k in 2usize..5, at in 0.0..1.0f64, dur in 0.01..1.0f64) {
        for sp in [delay(0.5), smooth_pair().clone()] {
            let a = action(&sp, &p, p.start()).unwrap().value;
            let refined = action(&sp, &p.refined(k), p.start()).unwrap().value;
            prop_assert!(rel(a, refined) < 1e-9, "refined: {a} vs {refined}");
            let waited = p.with_wait(at * p.horizon(), dur).unwrap();
            let w = action(&sp, &waited, p.start()).unwrap().value;
            prop_assert!(rel(a, w) < 1e-9, "rest: {a} vs {w}");
        }
    }

    #[test]
    fn wrong_start_is_infinite(p in path(), shift in 0.01..1.0f64) {
        prop_assert!(action(&delay(0.5), &p, p.start() + shift).unwrap().value.is_infinite());
    }

    #[test]
    fn clock_inverses(p in path(), kappa in 0.0..2.0f64, levels in prop::collection::vec(0.0..1.0f64, 1..20)) {
        let map = sigma(&delay(kappa), &p).unwrap();
        let total = map.total();
        for l in levels {
            let s = l * total;
            let g = map.gamma(s).unwrap();
            let gl = map.gamma_left(s).unwrap();
            prop_assert!(gl <= g);
            prop_assert!((map.value(g).unwrap() - s).abs() <= 1e-9 * (1.0 + total), "σ(γ(s)) = {} for s = {s}", map.value(g).unwrap());
            prop_assert!((map.value(gl).unwrap() - s).abs() <= 1e-9 * (1.0 + total));
        }
        // σ is non-decreasing
        let ts: Vec<f64> = (0..=200).map(|i| p.horizon() * i as f64 / 200.0).collect();
        let vals: Vec<f64> = ts.iter().map(|&t| map.value(t).unwrap()).collect();
        prop_assert!(vals.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    }

    #[test]
    fn path_csv_round_trip(p in path()) {
        prop_assert_eq!(PiecewisePath::from_csv(&p.to_csv()).unwrap(), p);
    }
}

#[test]
fn rests_at_a_jump_point_are_flat_in_the_clock() {
    let p = PiecewisePath::new(vec![(0.0, 0.0), (1.0, 1.0), (2.0, 1.0), (3.0, 1.5)]).unwrap();
    let map = sigma(&delay(0.5), &p).unwrap();
    let flat = map.flat_intervals();
    assert_eq!(flat.len(), 1);
    assert!((flat[0].0 - 1.0).abs() < 1e-12 && (flat[0].1 - 2.0).abs() < 1e-12);
    assert!(sigma(&delay(0.0), &p).unwrap().is_strictly_increasing());
}
