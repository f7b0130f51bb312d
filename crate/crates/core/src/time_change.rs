//! Deterministic time change `σ_φ(t) = ∫ [½ dv/du(φ_s)]⁻¹ ds` along a path,
//! its generalized inverse, and mollified speed functions.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{Hermite, Quadrature};
use crate::path::PiecewisePath;
use crate::scale::{ScalePair, Side};

/// Nodes of the cubic table used on cells where `u` or `v` is curved.
const CURVED_NODES: usize = 32;

/// Coordinate a path is expressed in: the natural `x` or `y = u(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Coord {
    X,
    Y,
}

/// A piece of a path on which the integrand is smooth: either a rest at one
/// point or a move inside a single cell between structure points.
#[derive(Debug, Clone)]
pub(crate) struct Leg {
    pub t0: f64,
    pub t1: f64,
    pub p0: f64,
    pub p1: f64,
    pub coord: Coord,
    pub rest: bool,
    /// `(u', v')` when both are affine on the cell.
    pub affine: Option<(f64, f64)>,
}

impl Leg {
    pub fn x_at(&self, sp: &ScalePair, t: f64) -> f64 {
        let p = if self.rest { self.p0 } else { self.p0 + (self.p1 - self.p0) * (t - self.t0) / (self.t1 - self.t0) };
        match self.coord {
            Coord::X => p,
            Coord::Y => sp.u().inverse(p),
        }
    }

    pub fn slope(&self) -> f64 {
        if self.rest {
            0.0
        } else {
            (self.p1 - self.p0) / (self.t1 - self.t0)
        }
    }
}

/// Splits `path` at every crossing of a structure point of `sp`.
pub(crate) fn legs(sp: &ScalePair, path: &PiecewisePath, coord: Coord) -> Result<Vec<Leg>> {
    let structure: Vec<f64> = match coord {
        Coord::X => sp.structure_points(),
        Coord::Y => sp.structure_points().into_iter().map(|x| sp.u().value(x)).collect(),
    };
    let to_x = |p: f64| -> Result<f64> {
        match coord {
            Coord::X => {
                sp.check_domain(p)?;
                Ok(p)
            }
            Coord::Y => sp.u_inverse(p),
        }
    };
    let mut out = Vec::with_capacity(path.len() + structure.len());
    for (t0, t1, p0, p1) in path.segments() {
        let x0 = to_x(p0)?;
        let x1 = to_x(p1)?;
        if p0 == p1 {
            out.push(Leg { t0, t1, p0, p1, coord, rest: true, affine: None });
            continue;
        }
        let (lo, hi) = (p0.min(p1), p0.max(p1));
        let mut cuts: Vec<f64> = structure.iter().cloned().filter(|&q| q > lo && q < hi).collect();
        if p1 < p0 {
            cuts.reverse();
        }
        let mut prev = (t0, p0, x0);
        let mut push = |t: f64, p: f64, x: f64, prev: &mut (f64, f64, f64)| {
            if t > prev.0 {
                let affine = sp.affine_cell(prev.2.min(x), prev.2.max(x));
                out.push(Leg { t0: prev.0, t1: t, p0: prev.1, p1: p, coord, rest: false, affine });
                *prev = (t, p, x);
            }
        };
        for q in cuts {
            let tc = t0 + (q - p0) / (p1 - p0) * (t1 - t0);
            let xq = to_x(q)?;
            if tc < t1 {
                push(tc, q, xq, &mut prev);
            }
        }
        push(t1, p1, x1, &mut prev);
    }
    Ok(out)
}

/// Shape of one segment of a [`MonotoneTimeMap`].
#[derive(Debug, Clone, PartialEq)]
pub enum SegmentShape {
    Affine,
    Flat,
    /// Curved cell: exact node values with quadrature in between.
    Curved(CurvedSegment),
}

pub(crate) type RateFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct CurvedSegment {
    table: Hermite,
    rate: RateFn,
}

impl CurvedSegment {
    pub fn nodes(&self) -> &[f64] {
        self.table.xs()
    }

    fn value(&self, t: f64) -> f64 {
        let xs = self.table.xs();
        let k = xs.partition_point(|&x| x <= t).clamp(1, xs.len() - 1) - 1;
        let rate = &self.rate;
        self.table.ys()[k] + Quadrature::default().integrate(|s| rate(s), xs[k], t)
    }

    fn inverse(&self, s: f64) -> f64 {
        let xs = self.table.xs();
        let (mut lo, mut hi) = (xs[0], xs[xs.len() - 1]);
        let mut t = self.table.inverse(s).clamp(lo, hi);
        for _ in 0..60 {
            let f = self.value(t) - s;
            if f == 0.0 {
                return t;
            }
            if f < 0.0 {
                lo = t;
            } else {
                hi = t;
            }
            let mut next = t - f / (self.rate)(t);
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - t).abs() <= 1e-15 * (1.0 + t.abs()) {
                return next;
            }
            t = next;
        }
        t
    }
}

impl std::fmt::Debug for CurvedSegment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CurvedSegment").field("nodes", &self.table.xs().len()).finish()
    }
}

impl PartialEq for CurvedSegment {
    fn eq(&self, other: &Self) -> bool {
        self.table == other.table
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapSegment {
    pub t0: f64,
    pub t1: f64,
    pub s0: f64,
    pub s1: f64,
    pub shape: SegmentShape,
}

impl MapSegment {
    fn value(&self, t: f64) -> f64 {
        match &self.shape {
            SegmentShape::Flat => self.s0,
            SegmentShape::Affine => self.s0 + (self.s1 - self.s0) * (t - self.t0) / (self.t1 - self.t0),
            SegmentShape::Curved(c) => c.value(t),
        }
    }

    fn inverse(&self, s: f64) -> f64 {
        match &self.shape {
            SegmentShape::Flat => self.t0,
            SegmentShape::Affine => self.t0 + (s - self.s0) / (self.s1 - self.s0) * (self.t1 - self.t0),
            SegmentShape::Curved(c) => c.inverse(s).clamp(self.t0, self.t1),
        }
    }

    fn slope(&self, t: f64) -> f64 {
        match &self.shape {
            SegmentShape::Flat => 0.0,
            SegmentShape::Affine => (self.s1 - self.s0) / (self.t1 - self.t0),
            SegmentShape::Curved(c) => (c.rate)(t),
        }
    }
}

/// Continuous non-decreasing map `[0, T] → [0, σ(T)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneTimeMap {
    segments: Vec<MapSegment>,
}

impl MonotoneTimeMap {
    /// Piecewise-affine map through `(t_k, s_k)`; used for hand-built maps.
    pub fn from_affine_nodes(ts: &[f64], ss: &[f64]) -> Result<Self> {
        if ts.len() < 2 || ts.len() != ss.len() || ts[0] != 0.0 || ss[0] != 0.0 {
            return Err(Error::construction("a time map needs at least two nodes starting at (0, 0)"));
        }
        if ts.windows(2).any(|w| w[1] <= w[0]) || ss.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::construction("time map nodes must be increasing in t and non-decreasing in s"));
        }
        let segments = (0..ts.len() - 1)
            .map(|k| MapSegment {
                t0: ts[k],
                t1: ts[k + 1],
                s0: ss[k],
                s1: ss[k + 1],
                shape: if ss[k + 1] == ss[k] { SegmentShape::Flat } else { SegmentShape::Affine },
            })
            .collect();
        Ok(Self { segments })
    }

    pub fn segments(&self) -> &[MapSegment] {
        &self.segments
    }

    pub fn horizon(&self) -> f64 {
        self.segments[self.segments.len() - 1].t1
    }

    pub fn total(&self) -> f64 {
        self.segments[self.segments.len() - 1].s1
    }

    fn locate(&self, t: f64) -> usize {
        self.segments.partition_point(|s| s.t1 <= t).min(self.segments.len() - 1)
    }

    pub fn value(&self, t: f64) -> Result<f64> {
        let h = self.horizon();
        if !(t >= 0.0 && t <= h * (1.0 + 1e-14)) {
            return Err(Error::Range { y: t, lo: 0.0, hi: h });
        }
        Ok(self.eval(t))
    }

    pub(crate) fn eval(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, self.horizon());
        self.segments[self.locate(t)].value(t)
    }

    /// Right derivative of `σ` at `t`.
    pub fn slope_at(&self, t: f64) -> f64 {
        self.segments[self.locate(t)].slope(t)
    }

    fn check_level(&self, s: f64) -> Result<()> {
        let total = self.total();
        if !(s >= 0.0 && s <= total) {
            return Err(Error::Range { y: s, lo: 0.0, hi: total });
        }
        Ok(())
    }

    /// `γ(s) = inf{t : σ(t) > s}`, with `γ(σ(T)) = T`.
    pub fn gamma(&self, s: f64) -> Result<f64> {
        self.check_level(s)?;
        let k = self.segments.partition_point(|seg| seg.s1 <= s);
        if k == self.segments.len() {
            return Ok(self.horizon());
        }
        Ok(self.segments[k].inverse(s))
    }

    /// `γ⁻(s) = inf{t : σ(t) ≥ s}`, the left limit of `γ`.
    pub fn gamma_left(&self, s: f64) -> Result<f64> {
        self.check_level(s)?;
        if s == 0.0 {
            return Ok(0.0);
        }
        let k = self.segments.partition_point(|seg| seg.s1 < s).min(self.segments.len() - 1);
        let seg = &self.segments[k];
        if seg.s0 >= s {
            return Ok(seg.t0);
        }
        Ok(seg.inverse(s))
    }

    /// Maximal intervals `(t0, t1, level)` on which the map is constant.
    pub fn flat_intervals(&self) -> Vec<(f64, f64, f64)> {
        let mut out: Vec<(f64, f64, f64)> = Vec::new();
        for seg in self.segments.iter().filter(|s| s.s1 == s.s0) {
            match out.last_mut() {
                Some(last) if last.1 == seg.t0 => last.1 = seg.t1,
                _ => out.push((seg.t0, seg.t1, seg.s0)),
            }
        }
        out
    }

    pub fn is_strictly_increasing(&self) -> bool {
        self.segments.iter().all(|s| s.s1 > s.s0)
    }

    /// Sup-distance to another map over the common horizon, evaluated at
    /// every node of both maps (exact for piecewise-affine maps).
    pub fn sup_distance(&self, other: &MonotoneTimeMap) -> Result<f64> {
        let (a, b) = (self.horizon(), other.horizon());
        if (a - b).abs() > 1e-12 * (1.0 + a) {
            return Err(Error::HorizonMismatch(a, b));
        }
        let d = self
            .nodes()
            .chain(other.nodes())
            .map(|t| (self.eval(t) - other.eval(t)).abs())
            .fold(0.0, f64::max);
        Ok(d)
    }

    fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        self.segments.iter().flat_map(|seg| {
            let inner: Vec<f64> = match &seg.shape {
                SegmentShape::Curved(c) => c.nodes().to_vec(),
                _ => vec![seg.t0],
            };
            inner.into_iter().chain(std::iter::once(seg.t1))
        })
    }

    /// CSV of `(t, σ(t))` on a uniform grid merged with the exact breakpoints.
    pub fn to_csv(&self, grid: usize) -> String {
        let h = self.horizon();
        let mut ts: Vec<f64> = (0..=grid.max(1)).map(|i| h * i as f64 / grid.max(1) as f64).collect();
        ts.extend(self.segments.iter().map(|s| s.t0));
        ts.sort_by(|a, b| a.total_cmp(b));
        ts.dedup();
        let mut out = String::from("t,sigma\n");
        for t in ts {
            let _ = writeln!(out, "{t:.16e},{:.16e}", self.eval(t));
        }
        out
    }
}

/// `σ_φ` for the pair `sp`.
pub fn sigma(sp: &ScalePair, path: &PiecewisePath) -> Result<MonotoneTimeMap> {
    let legs = legs(sp, path, Coord::X)?;
    Ok(map_from_legs(sp, &legs, &|x| point_rate(sp, x)))
}

/// `σ` of the path `u⁻¹ ∘ ψ` for a path `ψ` in natural scale.
pub fn sigma_y(sp: &ScalePair, psi: &PiecewisePath) -> Result<MonotoneTimeMap> {
    let legs = legs(sp, psi, Coord::Y)?;
    Ok(map_from_legs(sp, &legs, &|x| point_rate(sp, x)))
}

/// Clock rate of a rest at `x`: `2 / (dv/du)` with the min convention,
/// zero at jumps of `v`.
pub(crate) fn point_rate(sp: &ScalePair, x: f64) -> f64 {
    sp.dv_du(x).map(|r| r.clock_rate()).unwrap_or(0.0)
}

pub(crate) fn map_from_legs(sp: &ScalePair, legs: &[Leg], rest_rate: &dyn Fn(f64) -> f64) -> MonotoneTimeMap {
    let quad = Quadrature::default();
    let shared = Arc::new(sp.clone());
    let mut segments = Vec::with_capacity(legs.len());
    let mut s = 0.0;
    for leg in legs {
        let dt = leg.t1 - leg.t0;
        let (shape, s1) = if leg.rest {
            let r = rest_rate(leg.x_at(sp, leg.t0));
            if r == 0.0 {
                (SegmentShape::Flat, s)
            } else {
                (SegmentShape::Affine, s + r * dt)
            }
        } else if let Some((du, dv)) = leg.affine {
            (SegmentShape::Affine, s + 2.0 * du / dv * dt)
        } else {
            let (pair, l) = (shared.clone(), leg.clone());
            let rate: RateFn = Arc::new(move |t: f64| pair.cell_clock_rate(l.x_at(&pair, t)));
            let ts: Vec<f64> = (0..=CURVED_NODES)
                .map(|i| if i == CURVED_NODES { leg.t1 } else { leg.t0 + dt * i as f64 / CURVED_NODES as f64 })
                .collect();
            let mut ss = Vec::with_capacity(ts.len());
            let mut acc = s;
            ss.push(acc);
            for w in ts.windows(2) {
                acc += quad.integrate(|t| rate(t), w[0], w[1]);
                ss.push(acc);
            }
            let ds = ts.iter().map(|&t| rate(t)).collect();
            let end = acc;
            (SegmentShape::Curved(CurvedSegment { table: Hermite::new(ts, ss, ds), rate }), end)
        };
        segments.push(MapSegment { t0: leg.t0, t1: leg.t1, s0: s, s1, shape });
        s = s1;
    }
    MonotoneTimeMap { segments }
}

/// Placement of the ramp that replaces a jump of `v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
pub enum RampPlacement {
    /// `[x - 1/n, x]`; the jump point is the right end of its ramp.
    Left,
    /// `[x - 1/(2n), x + 1/(2n)]`.
    Centered,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Ramp {
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
    pub mass: f64,
}

/// Pair whose speed function has its jumps replaced by steep affine ramps.
#[derive(Debug, Clone)]
pub struct MollifiedPair {
    n: usize,
    pair: ScalePair,
    ramp_width: f64,
    placement: RampPlacement,
    ramps: Vec<Ramp>,
}

impl MollifiedPair {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pair(&self) -> &ScalePair {
        &self.pair
    }

    pub fn ramp_width(&self) -> f64 {
        self.ramp_width
    }

    pub fn placement(&self) -> RampPlacement {
        self.placement
    }

    pub fn ramps(&self) -> &[Ramp] {
        &self.ramps
    }

    /// Rest rate with the jump point owning the ramp's slope when the ramp is
    /// placed to its left.
    pub fn rest_rate(&self, x: f64) -> f64 {
        if self.placement == RampPlacement::Left && self.ramps.iter().any(|r| r.point == x) {
            let u = self.pair.u();
            let v = self.pair.v();
            return 2.0 * u.derivative(x, Side::Left) / v.derivative(x, Side::Left);
        }
        point_rate(&self.pair, x)
    }
}

/// Left-placed mollification at scale `n`.
pub fn mollify(sp: &ScalePair, n: usize) -> Result<MollifiedPair> {
    mollify_with(sp, n, RampPlacement::Left)
}

pub fn mollify_with(sp: &ScalePair, n: usize, placement: RampPlacement) -> Result<MollifiedPair> {
    if n == 0 {
        return Err(Error::precondition("mollifier scale n must be at least 1"));
    }
    let w = 1.0 / n as f64;
    let mut ramps = Vec::new();
    for b in sp.v().breakpoints() {
        let info = sp.point_info(b)?;
        if info.in_vd {
            let (lo, hi) = match placement {
                RampPlacement::Left => (b - w, b),
                RampPlacement::Centered => (b - 0.5 * w, b + 0.5 * w),
            };
            ramps.push(Ramp { point: b, lo, hi, mass: info.jump });
        }
    }
    let pair = if ramps.is_empty() {
        sp.clone()
    } else {
        let spec: Vec<(f64, f64, f64)> = ramps.iter().map(|r| (r.lo, r.hi, r.mass)).collect();
        sp.with_v(sp.v().with_ramps(&spec)?)?
    };
    Ok(MollifiedPair { n, pair, ramp_width: w, placement, ramps })
}

/// `σⁿ_φ` for a mollified pair.
pub fn sigma_n(mp: &MollifiedPair, path: &PiecewisePath) -> Result<MonotoneTimeMap> {
    let legs = legs(&mp.pair, path, Coord::X)?;
    Ok(map_from_legs(&mp.pair, &legs, &|x| mp.rest_rate(x)))
}

/// A discontinuity of `γ` and the behaviour of the path across it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaJump {
    pub level: f64,
    pub t_left: f64,
    pub t_right: f64,
    pub path_min: f64,
    pub path_max: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ConstancyReport {
    pub jumps: Vec<GammaJump>,
    pub violations: Vec<GammaJump>,
}

impl ConstancyReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// For every jump of `γ`, checks that the path is constant on
/// `[γ⁻(t), γ(t)]`.
pub fn check_constancy_on_gamma_jump(path: &PiecewisePath, map: &MonotoneTimeMap) -> ConstancyReport {
    let mut report = ConstancyReport::default();
    for (a, b, level) in map.flat_intervals() {
        let mut lo = path.eval_clamped(a).min(path.eval_clamped(b));
        let mut hi = path.eval_clamped(a).max(path.eval_clamped(b));
        for (t, x) in path.nodes() {
            if t > a && t < b {
                lo = lo.min(x);
                hi = hi.max(x);
            }
        }
        let jump = GammaJump { level, t_left: a, t_right: b, path_min: lo, path_max: hi };
        if hi - lo > 1e-12 * (1.0 + lo.abs()) {
            report.violations.push(jump.clone());
        }
        report.jumps.push(jump);
    }
    report
}

/// Lipschitz constant `2 c₁ / c₂` bounding the clock rate.
pub fn rate_bound(sp: &ScalePair) -> f64 {
    2.0 * sp.c1_bound() / sp.c2_bound()
}
