//! Scale and speed functions of a generalized diffusion.
//!
//! A [`ScalePair`] holds the continuous scale function `u` and the
//! right-continuous speed function `v` of an operator `D_v D_u`. Both are
//! stored piecewise: every piece is a closed-form monotone map (affine, a
//! monotone cubic table, or the primitive of a positive density), so values
//! at breakpoints and per-piece integrals stay exact or quadrature-accurate.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numerics::{Hermite, Quadrature};

/// Real function handle used for diffusion coefficients and densities.
pub type Coefficient = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

const CORNER_RTOL: f64 = 1e-10;
const CONTINUITY_RTOL: f64 = 1e-11;
const BOUND_SAMPLES: usize = 64;

/// Which one-sided limit to take at a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Primitive of a positive density, tabulated on panels for fast evaluation.
#[derive(Clone)]
pub struct DensityShape {
    density: Coefficient,
    nodes: Vec<f64>,
    cumulative: Vec<f64>,
    quad: Quadrature,
}

impl fmt::Debug for DensityShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DensityShape")
            .field("interval", &(self.nodes[0], self.nodes[self.nodes.len() - 1]))
            .field("panels", &(self.nodes.len() - 1))
            .finish()
    }
}

impl DensityShape {
    pub fn new(density: Coefficient, lo: f64, hi: f64, panels: usize) -> Self {
        let panels = panels.max(1);
        let quad = Quadrature::default();
        let h = (hi - lo) / panels as f64;
        let nodes: Vec<f64> = (0..=panels)
            .map(|k| if k == panels { hi } else { lo + k as f64 * h })
            .collect();
        let mut cumulative = Vec::with_capacity(nodes.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for w in nodes.windows(2) {
            acc += quad.integrate(|x| density(x), w[0], w[1]);
            cumulative.push(acc);
        }
        Self { density, nodes, cumulative, quad }
    }

    /// Integral of the density from the left end of the table to `x`.
    pub fn primitive(&self, x: f64) -> f64 {
        let k = self.nodes.partition_point(|&n| n <= x).clamp(1, self.nodes.len() - 1) - 1;
        let d = &self.density;
        self.cumulative[k] + self.quad.integrate(|s| d(s), self.nodes[k], x)
    }

    pub fn density(&self, x: f64) -> f64 {
        (self.density)(x)
    }

    fn interval(&self) -> (f64, f64) {
        (self.nodes[0], self.nodes[self.nodes.len() - 1])
    }
}

/// Closed-form monotone map used on one piece.
#[derive(Debug, Clone)]
pub enum Shape {
    Affine { slope: f64 },
    /// Monotone cubic interpolation of a table of `(x, y)` values.
    Tabulated(Hermite),
    /// Primitive of a positive density.
    Density(DensityShape),
}

impl Shape {
    pub fn affine(slope: f64) -> Self {
        Shape::Affine { slope }
    }

    pub fn tabulated(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() < 2 || xs.len() != ys.len() {
            return Err(Error::construction("tabulated piece needs at least two (x, y) pairs of equal length"));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) || ys.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::construction("tabulated piece must be strictly increasing in x and y"));
        }
        Ok(Shape::Tabulated(Hermite::monotone(xs, ys)))
    }

    /// `F(to) - F(from)` for the shape's primitive `F`.
    fn delta(&self, from: f64, to: f64) -> f64 {
        match self {
            Shape::Affine { slope } => slope * (to - from),
            Shape::Tabulated(h) => h.value(to) - h.value(from),
            Shape::Density(d) => d.primitive(to) - d.primitive(from),
        }
    }

    fn derivative(&self, x: f64) -> f64 {
        match self {
            Shape::Affine { slope } => *slope,
            Shape::Tabulated(h) => h.derivative(x),
            Shape::Density(d) => d.density(x),
        }
    }

    pub fn affine_slope(&self) -> Option<f64> {
        match self {
            Shape::Affine { slope } => Some(*slope),
            _ => None,
        }
    }

    fn covers(&self, lo: f64, hi: f64) -> bool {
        let tol = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
        match self {
            Shape::Affine { .. } => true,
            Shape::Tabulated(h) => {
                h.xs()[0] <= lo + tol && h.xs()[h.xs().len() - 1] >= hi - tol
            }
            Shape::Density(d) => {
                let (a, b) = d.interval();
                a <= lo + tol && b >= hi - tol
            }
        }
    }
}

/// One piece of a [`PiecewiseMonotone`] function as supplied by a caller.
#[derive(Debug, Clone)]
pub struct PieceSpec {
    pub lo: f64,
    pub hi: f64,
    pub shape: Shape,
    /// `f(lo+) - f(lo-)`; ignored for the first piece.
    pub jump: f64,
}

impl PieceSpec {
    pub fn new(lo: f64, hi: f64, shape: Shape) -> Self {
        Self { lo, hi, shape, jump: 0.0 }
    }

    pub fn with_jump(mut self, jump: f64) -> Self {
        self.jump = jump;
        self
    }
}

#[derive(Debug, Clone)]
struct Piece {
    lo: f64,
    hi: f64,
    x_ref: f64,
    y_ref: f64,
    shape: Shape,
}

impl Piece {
    fn value(&self, x: f64) -> f64 {
        self.y_ref + self.shape.delta(self.x_ref, x)
    }

    fn inverse(&self, y: f64) -> f64 {
        match &self.shape {
            Shape::Affine { slope } => self.x_ref + (y - self.y_ref) / slope,
            Shape::Tabulated(h) => h.inverse(y - self.y_ref + h.value(self.x_ref)),
            Shape::Density(_) => {
                let (mut a, mut b) = (self.lo, self.hi);
                let mut x = 0.5 * (a + b);
                for _ in 0..200 {
                    let fx = self.value(x) - y;
                    if fx == 0.0 {
                        return x;
                    }
                    if fx < 0.0 {
                        a = x;
                    } else {
                        b = x;
                    }
                    let mut next = x - fx / self.shape.derivative(x);
                    if !(next > a && next < b) {
                        next = 0.5 * (a + b);
                    }
                    if (next - x).abs() <= 4.0 * f64::EPSILON * x.abs().max(1e-300) || b - a <= f64::EPSILON * x.abs() {
                        return next;
                    }
                    x = next;
                }
                x
            }
        }
    }
}

/// Strictly increasing function assembled from pieces `[lo_k, hi_k)`.
///
/// The function is right-continuous; a piece may start with an upward jump.
#[derive(Debug, Clone)]
pub struct PiecewiseMonotone {
    pieces: Vec<Piece>,
}

impl PiecewiseMonotone {
    /// Assembles the pieces and pins the additive constant with `anchor`,
    /// the right-continuous value `f(anchor.0) = anchor.1`.
    pub fn new(specs: Vec<PieceSpec>, anchor: (f64, f64)) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::construction("a monotone function needs at least one piece"));
        }
        let last = specs.len() - 1;
        for (k, p) in specs.iter().enumerate() {
            if p.lo.is_nan() || p.hi.is_nan() || p.lo >= p.hi {
                return Err(Error::construction(format!("piece {k} has an empty interval [{}, {}]", p.lo, p.hi)));
            }
            if (p.lo.is_infinite() && k != 0) || (p.hi.is_infinite() && k != last) {
                return Err(Error::construction("only the outermost pieces may be unbounded"));
            }
            if (p.lo.is_infinite() || p.hi.is_infinite()) && p.shape.affine_slope().is_none() {
                return Err(Error::construction("unbounded pieces must be affine"));
            }
            if !p.shape.covers(p.lo, p.hi) {
                return Err(Error::construction(format!("piece {k} shape does not cover [{}, {}]", p.lo, p.hi)));
            }
            if k > 0 {
                if specs[k - 1].hi != p.lo {
                    return Err(Error::construction(format!("pieces {} and {k} are not contiguous", k - 1)));
                }
                if !(p.jump >= 0.0) || !p.jump.is_finite() {
                    return Err(Error::construction(format!("jump at {} must be finite and nonnegative", p.lo)));
                }
            }
            if let Some(s) = p.shape.affine_slope() {
                if !(s > 0.0) || !s.is_finite() {
                    return Err(Error::construction(format!("affine slope {s} must be positive")));
                }
            }
        }
        let (ax, ay) = anchor;
        if !ax.is_finite() || !ay.is_finite() {
            return Err(Error::construction("anchor must be finite"));
        }
        let dom = (specs[0].lo, specs[last].hi);
        if ax < dom.0 || ax > dom.1 {
            return Err(Error::construction(format!("anchor {ax} outside the domain")));
        }
        let a = specs.partition_point(|p| p.lo <= ax).max(1) - 1;

        let mut pieces: Vec<Option<Piece>> = vec![None; specs.len()];
        let ref_point = |p: &PieceSpec| {
            if p.lo.is_finite() {
                p.lo
            } else if p.hi.is_finite() {
                p.hi
            } else {
                0.0
            }
        };
        {
            let p = &specs[a];
            let x_ref = ref_point(p);
            let y_ref = ay - p.shape.delta(x_ref, ax);
            pieces[a] = Some(Piece { lo: p.lo, hi: p.hi, x_ref, y_ref, shape: p.shape.clone() });
        }
        for k in a + 1..specs.len() {
            let prev = pieces[k - 1].as_ref().expect("assembled left to right");
            let start = prev.value(specs[k].lo) + specs[k].jump;
            let p = &specs[k];
            pieces[k] = Some(Piece { lo: p.lo, hi: p.hi, x_ref: p.lo, y_ref: start, shape: p.shape.clone() });
        }
        for k in (0..a).rev() {
            let next = pieces[k + 1].as_ref().expect("assembled right to left");
            let left_limit = next.value(next.lo) - specs[k + 1].jump;
            let p = &specs[k];
            let x_ref = ref_point(p);
            let y_ref = left_limit + p.shape.delta(p.hi, x_ref);
            pieces[k] = Some(Piece { lo: p.lo, hi: p.hi, x_ref, y_ref, shape: p.shape.clone() });
        }
        let pieces = pieces.into_iter().map(|p| p.expect("every piece assembled")).collect();
        Ok(Self { pieces })
    }

    /// Piecewise-affine function on the whole line.
    ///
    /// `breakpoints` are the interior breakpoints, `slopes` has one more
    /// entry than `breakpoints`, and `jumps[k]` is the jump at `breakpoints[k]`.
    pub fn piecewise_affine(breakpoints: &[f64], slopes: &[f64], jumps: &[f64], anchor: (f64, f64)) -> Result<Self> {
        if slopes.len() != breakpoints.len() + 1 || jumps.len() != breakpoints.len() {
            return Err(Error::construction("piecewise_affine needs len(slopes) = len(breakpoints) + 1 = len(jumps) + 1"));
        }
        let mut edges = vec![f64::NEG_INFINITY];
        edges.extend_from_slice(breakpoints);
        edges.push(f64::INFINITY);
        let specs = slopes
            .iter()
            .enumerate()
            .map(|(k, &s)| {
                let jump = if k == 0 { 0.0 } else { jumps[k - 1] };
                PieceSpec::new(edges[k], edges[k + 1], Shape::affine(s)).with_jump(jump)
            })
            .collect();
        Self::new(specs, anchor)
    }

    pub fn affine(slope: f64) -> Result<Self> {
        Self::piecewise_affine(&[], &[slope], &[], (0.0, 0.0))
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.pieces[0].lo, self.pieces[self.pieces.len() - 1].hi)
    }

    fn contains(&self, x: f64) -> bool {
        let (lo, hi) = self.domain();
        x >= lo && x <= hi
    }

    fn locate(&self, x: f64) -> usize {
        self.pieces.partition_point(|p| p.lo <= x).max(1) - 1
    }

    /// Interior breakpoints, in increasing order.
    pub fn breakpoints(&self) -> Vec<f64> {
        self.pieces.iter().skip(1).map(|p| p.lo).collect()
    }

    pub fn piece_count(&self) -> usize {
        self.pieces.len()
    }

    /// Right-continuous value. Points outside the domain are extrapolated
    /// from the outermost pieces; callers check the domain.
    pub fn value(&self, x: f64) -> f64 {
        self.pieces[self.locate(x)].value(x)
    }

    pub fn left_limit(&self, x: f64) -> f64 {
        let k = self.locate(x);
        if k > 0 && self.pieces[k].lo == x {
            self.pieces[k - 1].value(x)
        } else {
            self.pieces[k].value(x)
        }
    }

    pub fn jump_at(&self, x: f64) -> f64 {
        self.value(x) - self.left_limit(x)
    }

    pub fn derivative(&self, x: f64, side: Side) -> f64 {
        let k = self.locate(x);
        let k = if side == Side::Left && k > 0 && self.pieces[k].lo == x { k - 1 } else { k };
        self.pieces[k].shape.derivative(x)
    }

    /// Affine slope of the piece containing the open interval `(a, b)`, if
    /// that piece is affine.
    pub fn affine_slope_between(&self, a: f64, b: f64) -> Option<f64> {
        let mid = if a.is_finite() && b.is_finite() { 0.5 * (a + b) } else if a.is_finite() { a + 1.0 } else { b - 1.0 };
        self.pieces[self.locate(mid)].shape.affine_slope()
    }

    /// Inverse; a value inside a jump gap maps to the jump point.
    pub fn inverse(&self, y: f64) -> f64 {
        let k = self.pieces.partition_point(|p| p.lo.is_infinite() || p.value(p.lo) <= y).max(1) - 1;
        let p = &self.pieces[k];
        p.inverse(y).clamp(p.lo, p.hi)
    }

    fn range(&self) -> (f64, f64) {
        let (lo, hi) = self.domain();
        let a = if lo.is_finite() { self.value(lo) } else { f64::NEG_INFINITY };
        let b = if hi.is_finite() { self.left_limit(hi).max(self.value(hi)) } else { f64::INFINITY };
        (a, b)
    }

    /// Sample points used to check bounds: piece ends plus an interior grid.
    fn derivative_samples(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for p in &self.pieces {
            match p.shape {
                Shape::Affine { slope } => out.push(slope),
                _ => {
                    for i in 0..=BOUND_SAMPLES {
                        let x = p.lo + (p.hi - p.lo) * i as f64 / BOUND_SAMPLES as f64;
                        out.push(p.shape.derivative(x));
                    }
                }
            }
        }
        out
    }

    /// Removes every jump and spreads its mass uniformly over the matching
    /// ramp `(lo, hi, mass)`. Ramps must lie inside the domain.
    pub(crate) fn with_ramps(&self, ramps: &[(f64, f64, f64)]) -> Result<Self> {
        let (dlo, dhi) = self.domain();
        let mut cuts: Vec<f64> = self.breakpoints();
        for &(lo, hi, _) in ramps {
            if !(lo > dlo && hi < dhi && lo < hi) {
                return Err(Error::construction(format!("ramp [{lo}, {hi}] does not fit inside the domain")));
            }
            cuts.push(lo);
            cuts.push(hi);
        }
        cuts.sort_by(|a, b| a.total_cmp(b));
        cuts.dedup();
        let mut edges = vec![dlo];
        edges.extend(cuts);
        edges.push(dhi);
        let mut specs = Vec::with_capacity(edges.len());
        for w in edges.windows(2) {
            let (a, b) = (w[0], w[1]);
            let extra: f64 = ramps.iter().filter(|r| r.0 <= a && r.1 >= b).map(|r| r.2 / (r.1 - r.0)).sum();
            let mid = if a.is_finite() && b.is_finite() { 0.5 * (a + b) } else if a.is_finite() { a + 1.0 } else { b - 1.0 };
            let piece = &self.pieces[self.locate(mid)];
            let shape = match &piece.shape {
                Shape::Affine { slope } => Shape::affine(slope + extra),
                other if extra == 0.0 => other.clone(),
                other => {
                    let base = other.clone();
                    Shape::Density(DensityShape::new(Arc::new(move |x| base.derivative(x) + extra), a, b, 16))
                }
            };
            specs.push(PieceSpec::new(a, b, shape));
        }
        let first_ramp = ramps.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
        let mut anchor_x = if dlo.is_finite() { dlo } else { edges[1].min(first_ramp) - 1.0 };
        if !anchor_x.is_finite() {
            anchor_x = 0.0;
        }
        Self::new(specs, (anchor_x, self.value(anchor_x)))
    }

    /// Canonical description of the pieces, for echoing configurations.
    /// `None` if some piece is defined by a density closure.
    pub fn describe(&self) -> Option<Vec<PieceDescription>> {
        self.pieces
            .iter()
            .enumerate()
            .map(|(k, p)| {
                let jump = if k == 0 { 0.0 } else { p.value(p.lo) - self.pieces[k - 1].value(p.lo) };
                let kind = match &p.shape {
                    Shape::Affine { slope } => PieceKind::Affine { slope: *slope },
                    Shape::Tabulated(h) => PieceKind::Tabulated { xs: h.xs().to_vec(), ys: h.ys().to_vec() },
                    Shape::Density(_) => return None,
                };
                Some(PieceDescription { lo: p.lo, hi: p.hi, kind, jump, value_at_ref: (p.x_ref, p.y_ref) })
            })
            .collect()
    }
}

/// Serializable view of one piece, see [`PiecewiseMonotone::describe`].
#[derive(Debug, Clone, PartialEq)]
pub struct PieceDescription {
    pub lo: f64,
    pub hi: f64,
    pub kind: PieceKind,
    pub jump: f64,
    pub value_at_ref: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum PieceKind {
    Affine { slope: f64 },
    Tabulated { xs: Vec<f64>, ys: Vec<f64> },
}

/// Classification of a point with respect to the non-smoothness sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum PointClass {
    Smooth,
    /// Derivative of `u` does not exist.
    CornerU,
    /// `v` continuous but not differentiable.
    CornerV,
    /// `v` jumps.
    JumpV,
}

impl PointClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            PointClass::Smooth => "smooth",
            PointClass::CornerU => "corner_u",
            PointClass::CornerV => "corner_v",
            PointClass::JumpV => "jump_v",
        }
    }
}

/// Membership of a point in each of the sets `U`, `V`, `V_d`.
///
/// The sets can overlap (a `u` corner may also be a jump of `v`); the single
/// [`PointClass`] tag applies the precedence `JumpV > CornerU > CornerV`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointInfo {
    pub x: f64,
    pub in_u: bool,
    pub in_v: bool,
    pub in_vd: bool,
    pub jump: f64,
    pub du: (f64, f64),
    pub dv: (f64, f64),
}

impl PointInfo {
    pub fn class(&self) -> PointClass {
        if self.in_vd {
            PointClass::JumpV
        } else if self.in_u {
            PointClass::CornerU
        } else if self.in_v {
            PointClass::CornerV
        } else {
            PointClass::Smooth
        }
    }

    /// Member of `E = (U ∪ V) \ V_d`.
    pub fn in_e(&self) -> bool {
        (self.in_u || self.in_v) && !self.in_vd
    }
}

/// Extended nonnegative value of `dv/du`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpeedRatio {
    Finite(f64),
    /// Sentinel for points where `v` jumps.
    Infinite,
}

impl SpeedRatio {
    /// `[½ dv/du]⁻¹`, the density of the deterministic time change. Exactly
    /// zero at the infinite sentinel.
    pub fn clock_rate(&self) -> f64 {
        match self {
            SpeedRatio::Finite(r) => 2.0 / r,
            SpeedRatio::Infinite => 0.0,
        }
    }

    pub fn finite(&self) -> Option<f64> {
        match self {
            SpeedRatio::Finite(r) => Some(*r),
            SpeedRatio::Infinite => None,
        }
    }
}

/// Data of the gluing condition `P_r f'(0+) - P_l f'(0-) = κ D_v D_u f(0)`
/// for pairs built from sided coefficient limits.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GluingData {
    pub point: f64,
    pub p_right: f64,
    pub p_left: f64,
    pub kappa: f64,
}

impl GluingData {
    /// Residual of the gluing condition for given one-sided derivatives and
    /// generator value at the gluing point.
    pub fn residual(&self, df_right: f64, df_left: f64, generator_value: f64) -> f64 {
        self.p_right * df_right - self.p_left * df_left - self.kappa * generator_value
    }
}

impl fmt::Display for GluingData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} f'({}+) - {} f'({}-) = {} DvDu f({})",
            self.p_right, self.point, self.p_left, self.point, self.kappa, self.point
        )
    }
}

/// The pair `(u, v)` of an operator `D_v D_u`.
#[derive(Debug, Clone)]
pub struct ScalePair {
    u: PiecewiseMonotone,
    v: PiecewiseMonotone,
    c1_bound: f64,
    c2_bound: f64,
    gluing: Option<GluingData>,
}

impl ScalePair {
    /// Validates and assembles a pair. When `bounds` is `None` the tightest
    /// sampled bounds `c1 = sup u'`, `c2 = inf v'` are used.
    pub fn new(u: PiecewiseMonotone, v: PiecewiseMonotone, bounds: Option<(f64, f64)>) -> Result<Self> {
        let (ulo, uhi) = u.domain();
        let (vlo, vhi) = v.domain();
        if ulo != vlo || uhi != vhi {
            return Err(Error::construction(format!(
                "u domain [{ulo}, {uhi}] differs from v domain [{vlo}, {vhi}]"
            )));
        }
        for b in u.breakpoints() {
            let jump = u.jump_at(b);
            let scale = 1.0 + u.value(b).abs();
            if jump.abs() > CONTINUITY_RTOL * scale {
                return Err(Error::construction(format!("u must be continuous but jumps by {jump} at {b}")));
            }
        }
        let du = u.derivative_samples();
        let dv = v.derivative_samples();
        if let Some(bad) = du.iter().chain(dv.iter()).find(|d| !(**d > 0.0) || !d.is_finite()) {
            return Err(Error::construction(format!("derivatives must be positive and finite, found {bad}")));
        }
        let sup_du = du.iter().cloned().fold(0.0, f64::max);
        let inf_dv = dv.iter().cloned().fold(f64::INFINITY, f64::min);
        let (c1, c2) = match bounds {
            None => (sup_du, inf_dv),
            Some((c1, c2)) => {
                if !(c1 > 0.0 && c2 > 0.0) {
                    return Err(Error::construction("c1 and c2 bounds must be positive"));
                }
                if sup_du > c1 * (1.0 + 1e-12) {
                    return Err(Error::construction(format!("u' reaches {sup_du}, above c1 = {c1}")));
                }
                if inf_dv < c2 * (1.0 - 1e-12) {
                    return Err(Error::construction(format!("v' drops to {inf_dv}, below c2 = {c2}")));
                }
                (c1, c2)
            }
        };
        Ok(Self { u, v, c1_bound: c1, c2_bound: c2, gluing: None })
    }

    /// `u(x) = u_slope·x`, `v(x) = v_slope·x` on the whole line.
    pub fn linear(u_slope: f64, v_slope: f64) -> Result<Self> {
        Self::new(PiecewiseMonotone::affine(u_slope)?, PiecewiseMonotone::affine(v_slope)?, None)
    }

    /// Standard Wiener process: `u = x`, `v = 2x`.
    pub fn wiener() -> Self {
        Self::linear(1.0, 2.0).expect("valid constant pair")
    }

    /// `u = x` and a speed function that jumps by `kappa` at `x1` and gains
    /// the extra slope `b` beyond `x2`:
    ///
    /// `v = a·x` for `x < x1`, `κ + a·x` on `[x1, x2)`, `κ + a·x + b(x - x2)` beyond.
    pub fn delay_corner(a: f64, b: f64, kappa: f64, x1: f64, x2: f64) -> Result<Self> {
        if !(x1 < x2) {
            return Err(Error::construction("delay_corner needs x1 < x2"));
        }
        let anchor_x = (x1 - 1.0).min(0.0);
        let v = PiecewiseMonotone::piecewise_affine(&[x1, x2], &[a, a, a + b], &[kappa, 0.0], (anchor_x, a * anchor_x))?;
        Self::new(PiecewiseMonotone::affine(1.0)?, v, None)
    }

    /// Pair of a smooth operator `½ a(x) f'' + b(x) f'` on `[lo, hi]`:
    ///
    /// `u(x) = ∫ exp(-∫ 2b/a)`, `v(x) = ∫ (2/a) exp(∫ 2b/a)`, both integrated
    /// from `reference`.
    pub fn from_diffusion_coefficients(
        a: Coefficient,
        b: Option<Coefficient>,
        options: CoefficientOptions,
    ) -> Result<Self> {
        let CoefficientOptions { reference, domain: (lo, hi), panels } = options;
        check_finite_domain(lo, hi)?;
        if reference < lo || reference > hi {
            return Err(Error::construction("reference point outside the domain"));
        }
        check_positive(&a, lo, hi)?;
        let exponent = drift_exponent(&a, b.as_ref(), lo, hi, reference, panels);
        let (u_shape, v_shape) = coefficient_shapes(&a, exponent.clone(), lo, hi, panels, 1.0, 1.0);
        let u = PiecewiseMonotone::new(vec![PieceSpec::new(lo, hi, u_shape)], (reference, 0.0))?;
        let v = PiecewiseMonotone::new(vec![PieceSpec::new(lo, hi, v_shape)], (reference, 0.0))?;
        Self::new(u, v, None)
    }

    /// Limit pair of coefficients with different one-sided limits at 0,
    /// exit ratios `P_r`, `P_l` and delay coefficient `κ`.
    ///
    /// `u` carries the factors `1/P_r` (x ≥ 0) and `1/P_l` (x < 0); `v`
    /// carries `P_r` and `P_l` and jumps by `κ` at 0.
    pub fn from_sided_limits(sided: SidedCoefficients, p_right: f64, p_left: f64, kappa: f64, options: CoefficientOptions) -> Result<Self> {
        if !(p_right > 0.0 && p_left > 0.0) || (p_right + p_left - 1.0).abs() > 1e-12 {
            return Err(Error::construction(format!(
                "exit probabilities must be positive and sum to 1, got {p_right} + {p_left}"
            )));
        }
        if !(kappa >= 0.0) || !kappa.is_finite() {
            return Err(Error::construction("kappa must be finite and nonnegative"));
        }
        let (lo, hi) = options.domain;
        check_finite_domain(lo, hi)?;
        if !(lo < 0.0 && hi > 0.0) {
            return Err(Error::construction("domain must contain 0 in its interior"));
        }
        check_positive(&sided.a_plus, 0.0, hi)?;
        check_positive(&sided.a_minus, lo, 0.0)?;
        let panels = options.panels;
        let e_plus = drift_exponent(&sided.a_plus, sided.b_plus.as_ref(), 0.0, hi, 0.0, panels);
        let e_minus = drift_exponent(&sided.a_minus, sided.b_minus.as_ref(), lo, 0.0, 0.0, panels);
        let (u_plus, v_plus) = coefficient_shapes(&sided.a_plus, e_plus, 0.0, hi, panels, 1.0 / p_right, p_right);
        let (u_minus, v_minus) = coefficient_shapes(&sided.a_minus, e_minus, lo, 0.0, panels, 1.0 / p_left, p_left);
        let u = PiecewiseMonotone::new(
            vec![PieceSpec::new(lo, 0.0, u_minus), PieceSpec::new(0.0, hi, u_plus)],
            (0.0, 0.0),
        )?;
        let v = PiecewiseMonotone::new(
            vec![PieceSpec::new(lo, 0.0, v_minus), PieceSpec::new(0.0, hi, v_plus).with_jump(kappa)],
            (0.0, kappa),
        )?;
        let mut pair = Self::new(u, v, None)?;
        pair.gluing = Some(GluingData { point: 0.0, p_right, p_left, kappa });
        Ok(pair)
    }

    pub fn u(&self) -> &PiecewiseMonotone {
        &self.u
    }

    pub fn v(&self) -> &PiecewiseMonotone {
        &self.v
    }

    pub fn c1_bound(&self) -> f64 {
        self.c1_bound
    }

    pub fn c2_bound(&self) -> f64 {
        self.c2_bound
    }

    pub fn gluing(&self) -> Option<&GluingData> {
        self.gluing.as_ref()
    }

    pub fn domain(&self) -> (f64, f64) {
        self.u.domain()
    }

    pub fn contains(&self, x: f64) -> bool {
        self.u.contains(x)
    }

    pub(crate) fn check_domain(&self, x: f64) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            let (lo, hi) = self.domain();
            Err(Error::Domain { x, lo, hi })
        }
    }

    pub fn eval_u(&self, x: f64) -> Result<f64> {
        self.check_domain(x)?;
        Ok(self.u.value(x))
    }

    /// Right-continuous value `v(x+)`.
    pub fn eval_v(&self, x: f64) -> Result<f64> {
        self.check_domain(x)?;
        Ok(self.v.value(x))
    }

    pub fn u_inverse(&self, y: f64) -> Result<f64> {
        let (lo, hi) = self.u.range();
        if !(y >= lo && y <= hi) {
            return Err(Error::Range { y, lo, hi });
        }
        Ok(self.u.inverse(y))
    }

    /// Sorted union of the breakpoints of `u` and `v`.
    pub fn structure_points(&self) -> Vec<f64> {
        let mut pts = self.u.breakpoints();
        pts.extend(self.v.breakpoints());
        pts.sort_by(|a, b| a.total_cmp(b));
        pts.dedup();
        pts
    }

    pub fn point_info(&self, x: f64) -> Result<PointInfo> {
        self.check_domain(x)?;
        let du = (self.u.derivative(x, Side::Left), self.u.derivative(x, Side::Right));
        let dv = (self.v.derivative(x, Side::Left), self.v.derivative(x, Side::Right));
        let jump = self.v.jump_at(x);
        let in_vd = jump > CONTINUITY_RTOL * (1.0 + self.v.value(x).abs());
        let differs = |(l, r): (f64, f64)| (l - r).abs() > CORNER_RTOL * l.abs().max(r.abs());
        Ok(PointInfo { x, in_u: differs(du), in_v: !in_vd && differs(dv), in_vd, jump: if in_vd { jump } else { 0.0 }, du, dv })
    }

    pub fn classify_point(&self, x: f64) -> Result<PointClass> {
        Ok(self.point_info(x)?.class())
    }

    /// Size of the jump of `v` at `x` (zero at continuity points).
    pub fn jump_size(&self, x: f64) -> Result<f64> {
        Ok(self.point_info(x)?.jump)
    }

    /// `dv/du` at `x`: the ratio of derivatives at smooth points, the
    /// minimum of the one-sided ratios at corners, and the infinite sentinel
    /// at jumps of `v`.
    pub fn dv_du(&self, x: f64) -> Result<SpeedRatio> {
        let info = self.point_info(x)?;
        if info.in_vd {
            return Ok(SpeedRatio::Infinite);
        }
        let left = info.dv.0 / info.du.0;
        let right = info.dv.1 / info.du.1;
        Ok(SpeedRatio::Finite(left.min(right)))
    }

    /// `u'(x) / v'(x)` scaled by two: the time-change density at a point
    /// inside a smooth cell.
    pub(crate) fn cell_clock_rate(&self, x: f64) -> f64 {
        2.0 * self.u.derivative(x, Side::Right) / self.v.derivative(x, Side::Right)
    }

    pub(crate) fn du(&self, x: f64) -> f64 {
        self.u.derivative(x, Side::Right)
    }

    pub(crate) fn dv(&self, x: f64) -> f64 {
        self.v.derivative(x, Side::Right)
    }

    /// Both slopes if `u` and `v` are affine on the open interval `(a, b)`,
    /// which must not contain a structure point.
    pub(crate) fn affine_cell(&self, a: f64, b: f64) -> Option<(f64, f64)> {
        Some((self.u.affine_slope_between(a, b)?, self.v.affine_slope_between(a, b)?))
    }

    /// Same pair with `u ↦ c·u`, `v ↦ v/c`.
    pub fn rescaled(&self, c: f64) -> Result<Self> {
        let scale = |f: &PiecewiseMonotone, k: f64| PiecewiseMonotone {
            pieces: f
                .pieces
                .iter()
                .map(|p| Piece {
                    lo: p.lo,
                    hi: p.hi,
                    x_ref: p.x_ref,
                    y_ref: k * p.y_ref,
                    shape: match &p.shape {
                        Shape::Affine { slope } => Shape::Affine { slope: k * slope },
                        Shape::Tabulated(h) => Shape::Tabulated(Hermite::new(
                            h.xs().to_vec(),
                            h.ys().iter().map(|y| k * y).collect(),
                            h.slopes().iter().map(|d| k * d).collect(),
                        )),
                        Shape::Density(d) => {
                            let inner = d.density.clone();
                            let (lo, hi) = d.interval();
                            Shape::Density(DensityShape::new(Arc::new(move |x| k * inner(x)), lo, hi, d.nodes.len() - 1))
                        }
                    },
                })
                .collect(),
        };
        let mut out = Self::new(scale(&self.u, c), scale(&self.v, 1.0 / c), None)?;
        out.gluing = self.gluing;
        Ok(out)
    }

    /// Same `u` and bounds with a new speed function.
    pub(crate) fn with_v(&self, v: PiecewiseMonotone) -> Result<Self> {
        let mut out = Self::new(self.u.clone(), v, Some((self.c1_bound, self.c2_bound)))?;
        out.gluing = self.gluing;
        Ok(out)
    }
}

/// Settings for the coefficient constructions.
#[derive(Debug, Clone, Copy)]
pub struct CoefficientOptions {
    /// Integration origin; `u` and `v` vanish there.
    pub reference: f64,
    pub domain: (f64, f64),
    /// Panels of the cumulative quadrature tables.
    pub panels: usize,
}

impl CoefficientOptions {
    pub fn on(lo: f64, hi: f64) -> Self {
        Self { reference: 0.0, domain: (lo, hi), panels: 256 }
    }
}

/// One-sided diffusion and drift coefficients around 0.
#[derive(Clone)]
pub struct SidedCoefficients {
    pub a_plus: Coefficient,
    pub a_minus: Coefficient,
    pub b_plus: Option<Coefficient>,
    pub b_minus: Option<Coefficient>,
}

impl SidedCoefficients {
    pub fn constant(a_plus: f64, a_minus: f64) -> Self {
        Self { a_plus: Arc::new(move |_| a_plus), a_minus: Arc::new(move |_| a_minus), b_plus: None, b_minus: None }
    }
}

fn check_finite_domain(lo: f64, hi: f64) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::construction("coefficient constructions need a bounded domain lo < hi"));
    }
    Ok(())
}

fn check_positive(a: &Coefficient, lo: f64, hi: f64) -> Result<()> {
    let n = 4096;
    for i in 0..=n {
        let x = lo + (hi - lo) * i as f64 / n as f64;
        let ax = a(x);
        if !(ax > 0.0) || !ax.is_finite() {
            return Err(Error::construction(format!("diffusion coefficient a({x}) = {ax} is not positive")));
        }
    }
    Ok(())
}

/// `x ↦ ∫_reference^x 2b/a`, or `None` when there is no drift.
fn drift_exponent(a: &Coefficient, b: Option<&Coefficient>, lo: f64, hi: f64, reference: f64, panels: usize) -> Option<Coefficient> {
    let b = b?.clone();
    let a = a.clone();
    let table = DensityShape::new(Arc::new(move |x| 2.0 * b(x) / a(x)), lo, hi, panels);
    let offset = table.primitive(reference);
    Some(Arc::new(move |x| table.primitive(x) - offset))
}

fn coefficient_shapes(
    a: &Coefficient,
    exponent: Option<Coefficient>,
    lo: f64,
    hi: f64,
    panels: usize,
    u_factor: f64,
    v_factor: f64,
) -> (Shape, Shape) {
    let a = a.clone();
    match exponent {
        None => {
            let v = DensityShape::new(Arc::new(move |x| v_factor * 2.0 / a(x)), lo, hi, panels);
            (Shape::affine(u_factor), Shape::Density(v))
        }
        Some(e) => {
            let e2 = e.clone();
            let u = DensityShape::new(Arc::new(move |x| u_factor * (-e(x)).exp()), lo, hi, panels);
            let v = DensityShape::new(Arc::new(move |x| v_factor * 2.0 / a(x) * e2(x).exp()), lo, hi, panels);
            (Shape::Density(u), Shape::Density(v))
        }
    }
}
