//! The action functional `S_{0T}(φ) = ½ ∫ |d u(φ(γ_φ(s)))/ds|² ds` and its
//! reduced and classical forms.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::Quadrature;
use crate::path::PiecewisePath;
use crate::scale::ScalePair;
use crate::time_change::{self, Coord, Leg, MonotoneTimeMap, SegmentShape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ActionMethod {
    Reduced,
    TimeChanged,
    Classical,
}

impl ActionMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            ActionMethod::Reduced => "reduced",
            ActionMethod::TimeChanged => "time_changed",
            ActionMethod::Classical => "classical",
        }
    }
}

/// Contribution of one leg `[t0, t1]` (clock `[s0, s1]`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SegmentContribution {
    pub t0: f64,
    pub t1: f64,
    pub s0: f64,
    pub s1: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActionValue {
    /// Nonnegative, possibly `+∞`.
    pub value: f64,
    pub method: ActionMethod,
    pub breakdown: Vec<SegmentContribution>,
    pub diagnostic: Option<String>,
}

impl ActionValue {
    fn infinite(method: ActionMethod, why: String) -> Self {
        Self { value: f64::INFINITY, method, breakdown: Vec::new(), diagnostic: Some(why) }
    }

    fn from_parts(method: ActionMethod, breakdown: Vec<SegmentContribution>) -> Self {
        let value = breakdown.iter().map(|c| c.value).sum();
        Self { value, method, breakdown, diagnostic: None }
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }
}

fn starts_at(path: &PiecewisePath, x0: f64) -> bool {
    (path.start() - x0).abs() <= 1e-12 * (1.0 + x0.abs())
}

fn quad() -> Quadrature {
    Quadrature::with_tol(1e-13)
}

/// Integrates the squared speed of `u ∘ φ ∘ γ` leg by leg over the clock.
/// Legs with an affine clock piece use the closed form `½ ΔU² / Δs`.
fn time_changed(sp: &ScalePair, legs: &[Leg], map: &MonotoneTimeMap) -> Vec<SegmentContribution> {
    let q = quad();
    legs.iter()
        .zip(map.segments())
        .map(|(leg, seg)| {
            let value = if leg.rest {
                0.0
            } else {
                match &seg.shape {
                    SegmentShape::Flat => 0.0,
                    SegmentShape::Affine => {
                        let du = match (leg.coord, leg.affine) {
                            (Coord::Y, _) => leg.p1 - leg.p0,
                            (Coord::X, Some((slope, _))) => slope * (leg.p1 - leg.p0),
                            (Coord::X, None) => sp.u().value(leg.p1) - sp.u().value(leg.p0),
                        };
                        0.5 * du * du / (seg.s1 - seg.s0)
                    }
                    SegmentShape::Curved(_) => {
                        let m = leg.slope();
                        q.integrate(
                            |t| {
                                let x = leg.x_at(sp, t);
                                let speed = match leg.coord {
                                    Coord::X => sp.du(x) * m,
                                    Coord::Y => m,
                                };
                                0.5 * speed * speed / sp.cell_clock_rate(x)
                            },
                            leg.t0,
                            leg.t1,
                        )
                    }
                }
            };
            SegmentContribution { t0: leg.t0, t1: leg.t1, s0: seg.s0, s1: seg.s1, value }
        })
        .collect()
}

/// General evaluator through the time-changed parameterization.
pub fn action(sp: &ScalePair, path: &PiecewisePath, x0: f64) -> Result<ActionValue> {
    if !starts_at(path, x0) {
        return Ok(ActionValue::infinite(
            ActionMethod::TimeChanged,
            format!("path starts at {} instead of {x0}", path.start()),
        ));
    }
    let legs = time_change::legs(sp, path, Coord::X)?;
    let map = time_change::map_from_legs(sp, &legs, &|x| time_change::point_rate(sp, x));
    Ok(ActionValue::from_parts(ActionMethod::TimeChanged, time_changed(sp, &legs, &map)))
}

/// `S^Y_{0T}(ψ)` for a path in natural scale `y = u(x)`.
pub fn action_y(sp: &ScalePair, psi: &PiecewisePath, y0: f64) -> Result<ActionValue> {
    if !starts_at(psi, y0) {
        return Ok(ActionValue::infinite(
            ActionMethod::TimeChanged,
            format!("path starts at {} instead of {y0}", psi.start()),
        ));
    }
    let legs = time_change::legs(sp, psi, Coord::Y)?;
    let map = time_change::map_from_legs(sp, &legs, &|x| time_change::point_rate(sp, x));
    Ok(ActionValue::from_parts(ActionMethod::TimeChanged, time_changed(sp, &legs, &map)))
}

/// `¼ ∫ (u∘φ)' (v∘φ)' ds`, valid when `v` is continuous along the path.
pub fn reduced_action(sp: &ScalePair, path: &PiecewisePath, x0: f64) -> Result<ActionValue> {
    let (lo, hi) = (path.min_value(), path.max_value());
    for b in sp.v().breakpoints().into_iter().filter(|&b| b >= lo && b <= hi) {
        if sp.point_info(b)?.in_vd {
            return Err(Error::precondition(format!(
                "v jumps at {b} inside the path range; use the time-changed evaluator"
            )));
        }
    }
    if !starts_at(path, x0) {
        return Ok(ActionValue::infinite(
            ActionMethod::Reduced,
            format!("path starts at {} instead of {x0}", path.start()),
        ));
    }
    let legs = time_change::legs(sp, path, Coord::X)?;
    let q = quad();
    let breakdown = legs
        .iter()
        .map(|leg| {
            let dt = leg.t1 - leg.t0;
            let value = if leg.rest {
                0.0
            } else if let Some((du, dv)) = leg.affine {
                let dx = leg.p1 - leg.p0;
                0.25 * (du * dx) * (dv * dx) / dt
            } else {
                let m = leg.slope();
                q.integrate(|t| {
                    let x = leg.x_at(sp, t);
                    0.25 * m * m * sp.du(x) * sp.dv(x)
                }, leg.t0, leg.t1)
            };
            SegmentContribution { t0: leg.t0, t1: leg.t1, s0: f64::NAN, s1: f64::NAN, value }
        })
        .collect();
    Ok(ActionValue::from_parts(ActionMethod::Reduced, breakdown))
}

/// `½ ∫ φ̇² / a(φ) ds` for the smooth driftless case.
pub fn classical_action(a: &dyn Fn(f64) -> f64, path: &PiecewisePath, x0: f64) -> ActionValue {
    if !starts_at(path, x0) {
        return ActionValue::infinite(ActionMethod::Classical, format!("path starts at {} instead of {x0}", path.start()));
    }
    let q = Quadrature::with_tol(1e-10);
    let breakdown = path
        .segments()
        .map(|(t0, t1, x0, x1)| {
            let m = (x1 - x0) / (t1 - t0);
            let value = if m == 0.0 { 0.0 } else { q.integrate(|t| 0.5 * m * m / a(x0 + m * (t - t0)), t0, t1) };
            SegmentContribution { t0, t1, s0: f64::NAN, s1: f64::NAN, value }
        })
        .collect();
    ActionValue::from_parts(ActionMethod::Classical, breakdown)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReductionReport {
    pub reduced: f64,
    pub classical: f64,
    pub discrepancy: f64,
}

impl ReductionReport {
    pub fn passes(&self) -> bool {
        self.discrepancy < 1e-8
    }
}

/// Relative gap between the reduced action on `sp` (built from `a` with no
/// drift) and the classical action.
pub fn reduction_check(sp: &ScalePair, a: &dyn Fn(f64) -> f64, path: &PiecewisePath) -> Result<ReductionReport> {
    let reduced = reduced_action(sp, path, path.start())?.value;
    let classical = classical_action(a, path, path.start()).value;
    let discrepancy = (reduced - classical).abs() / classical.max(1e-15);
    Ok(ReductionReport { reduced, classical, discrepancy })
}

/// Envelope `√(2s) √(C₀ h)` for increments of natural-scale paths whose
/// action is at most `s`.
pub fn holder_modulus(s_level: f64, h: f64, c0: f64) -> f64 {
    (2.0 * s_level).sqrt() * (c0 * h).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scale::{CoefficientOptions, PiecewiseMonotone};
    use std::sync::Arc;

    fn example(kappa: f64) -> ScalePair {
        ScalePair::delay_corner(1.0, 3.0, kappa, 1.0, 2.0).unwrap()
    }

    #[test]
    fn wiener_action() {
        let sp = ScalePair::wiener();
        let p = PiecewisePath::linear(0.0, 1.0, 1.0).unwrap();
        assert!((action(&sp, &p, 0.0).unwrap().value - 0.5).abs() < 1e-15);
        assert!((reduced_action(&sp, &p, 0.0).unwrap().value - 0.5).abs() < 1e-15);
        assert!((classical_action(&|_| 1.0, &p, 0.0).value - 0.5).abs() < 1e-15);
        assert!((classical_action(&|_| 2.0, &p, 0.0).value - 0.25).abs() < 1e-15);
    }

    #[test]
    fn linear_speed_closed_form() {
        for &(a, x, t) in &[(1.0, 1.5, 0.75), (3.0, 2.0, 1.3), (0.5, 0.2, 4.0)] {
            let sp = ScalePair::linear(1.0, a).unwrap();
            let p = PiecewisePath::linear(x, 0.0, t).unwrap();
            let s = action(&sp, &p, x).unwrap().value;
            let exact = a / 4.0 * x * x / t;
            assert!((s - exact).abs() < 1e-14 * exact);
        }
    }

    #[test]
    fn waiting_route_closed_form() {
        let (x, mu0, mu1, t) = (0.8, 0.3, 0.9, 1.6);
        let sp = ScalePair::delay_corner(1.0, 3.0, 0.5, 0.5, 2.0).unwrap();
        let x1 = 0.5;
        let p = PiecewisePath::new(vec![(0.0, x), (mu0, x1), (mu1, x1), (t, 0.0)]).unwrap();
        let s = action(&sp, &p, x).unwrap();
        let exact = 0.25 * (x - x1) * (x - x1) / mu0 + 0.25 * x1 * x1 / (t - mu1);
        assert!((s.value - exact).abs() < 1e-14, "{} vs {exact}", s.value);
        assert!(matches!(reduced_action(&sp, &p, x), Err(Error::Precondition(_))));
    }

    #[test]
    fn wrong_start_is_infinite() {
        let sp = ScalePair::wiener();
        let p = PiecewisePath::linear(0.0, 1.0, 1.0).unwrap();
        let s = action(&sp, &p, 0.5).unwrap();
        assert!(s.value.is_infinite() && s.diagnostic.is_some());
        assert!(action_y(&sp, &p, 0.1).unwrap().value.is_infinite());
    }

    #[test]
    fn reduced_matches_piecewise_oracle() {
        // v slope 1 then 4 at x = 2, u = x, path crossing x = 2 with slope 1
        let v = PiecewiseMonotone::piecewise_affine(&[2.0], &[1.0, 4.0], &[0.0], (0.0, 0.0)).unwrap();
        let sp = ScalePair::new(PiecewiseMonotone::affine(1.0).unwrap(), v, None).unwrap();
        let p = PiecewisePath::linear(1.0, 3.0, 2.0).unwrap();
        let r = reduced_action(&sp, &p, 1.0).unwrap();
        let n = 100_000;
        let h = 2.0 / n as f64;
        let oracle: f64 = (0..n).map(|i| if 1.0 + (i as f64 + 0.5) * h < 2.0 { 0.25 } else { 1.0 }).sum::<f64>() * h;
        assert!((r.value - 1.25).abs() < 1e-14);
        assert!((r.value - oracle).abs() < 1e-9);
        assert_eq!(r.breakdown.len(), 2);
        assert!((r.breakdown[0].value - 0.25).abs() < 1e-15);
        assert!((r.breakdown[1].value - 1.0).abs() < 1e-15);
        assert!((action(&sp, &p, 1.0).unwrap().value - r.value).abs() < 1e-14);
        assert_eq!(reduced_action(&sp, &PiecewisePath::constant(2.0, 1.0).unwrap(), 2.0).unwrap().value, 0.0);
    }

    #[test]
    fn action_y_examples() {
        let sp = ScalePair::linear(1.0, 2.0).unwrap();
        let p = PiecewisePath::new(vec![(0.0, 0.0), (0.5, 1.0), (1.2, -0.3)]).unwrap();
        let a = action(&sp, &p, 0.0).unwrap().value;
        assert!((action_y(&sp, &p, 0.0).unwrap().value - a).abs() < 1e-15);
        let sp2 = ScalePair::linear(2.0, 2.0).unwrap();
        let psi = PiecewisePath::linear(0.0, 2.0, 1.0).unwrap();
        let phi = PiecewisePath::linear(0.0, 1.0, 1.0).unwrap();
        let sy = action_y(&sp2, &psi, 0.0).unwrap().value;
        let sx = action(&sp2, &phi, 0.0).unwrap().value;
        assert!((sy - sx).abs() < 1e-15);
    }

    #[test]
    fn classical_quadrature_oracle() {
        let a = |x: f64| 1.0 + 0.5 * x.sin();
        let p = PiecewisePath::linear(0.0, 2.0, 2.0).unwrap();
        // composite Simpson with many panels as the independent oracle
        let n = 20_000;
        let h = 2.0 / n as f64;
        let f = |t: f64| 0.5 / a(t);
        let mut sum = f(0.0) + f(2.0);
        for i in 1..n {
            sum += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
        }
        let oracle = sum * h / 3.0;
        assert!((classical_action(&a, &p, 0.0).value - oracle).abs() < 1e-9);
    }

    #[test]
    fn reduction_examples() {
        let p = PiecewisePath::new(vec![(0.0, 0.0), (0.4, 1.1), (1.0, -0.7), (1.7, 0.2)]).unwrap();
        for c in [1.0, 2.0] {
            let sp = ScalePair::from_diffusion_coefficients(Arc::new(move |_| c), None, CoefficientOptions::on(-3.0, 3.0)).unwrap();
            let r = reduction_check(&sp, &|_| c, &p).unwrap();
            assert!(r.discrepancy < 1e-12, "{r:?}");
        }
        let a = |x: f64| 1.0 + 0.5 * x.sin();
        let sp = ScalePair::from_diffusion_coefficients(Arc::new(a), None, CoefficientOptions::on(-3.0, 3.0)).unwrap();
        let r = reduction_check(&sp, &a, &p).unwrap();
        assert!(r.passes(), "{r:?}");
    }

    #[test]
    fn holder_examples() {
        assert_eq!(holder_modulus(0.0, 0.3, 2.0), 0.0);
        assert_eq!(holder_modulus(0.5, 1.0, 1.0), 1.0);
    }

    #[test]
    fn resting_at_corner_contributes_zero() {
        let sp = example(0.5);
        let p = PiecewisePath::new(vec![(0.0, 3.0), (1.0, 2.0), (2.0, 2.0), (2.5, 1.5)]).unwrap();
        let s = action(&sp, &p, 3.0).unwrap();
        assert_eq!(s.breakdown.iter().filter(|c| c.t0 == 1.0).map(|c| c.value).sum::<f64>(), 0.0);
        let r = reduced_action(&sp, &p, 3.0);
        assert!(r.is_ok());
    }

    #[test]
    fn jump_immunity() {
        let sp = example(0.5);
        let p = PiecewisePath::new(vec![(0.0, 1.7), (0.6, 1.0), (1.2, 0.0)]).unwrap();
        let base = action(&sp, &p, 1.7).unwrap().value;
        for d in [0.1, 1.0, 7.5] {
            let w = p.with_wait(0.6, d).unwrap();
            // node times are shifted, so only rounding may differ
            assert!((action(&sp, &w, 1.7).unwrap().value - base).abs() <= 1e-14 * base);
        }
    }
}
