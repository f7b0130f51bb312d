//! Continuous piecewise-linear paths on `[0, T]`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scale::{PointClass, ScalePair};

/// Piecewise-linear interpolation of nodes `(t_k, x_k)` with `t_0 = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewisePath {
    ts: Vec<f64>,
    xs: Vec<f64>,
}

impl PiecewisePath {
    pub fn new(nodes: Vec<(f64, f64)>) -> Result<Self> {
        let (ts, xs) = nodes.into_iter().unzip();
        Self::from_parts(ts, xs)
    }

    pub fn from_parts(ts: Vec<f64>, xs: Vec<f64>) -> Result<Self> {
        if ts.len() < 2 || ts.len() != xs.len() {
            return Err(Error::construction("a path needs at least two nodes"));
        }
        if ts[0] != 0.0 {
            return Err(Error::construction(format!("first node time must be 0, got {}", ts[0])));
        }
        if ts.iter().chain(xs.iter()).any(|v| !v.is_finite()) {
            return Err(Error::construction("path nodes must be finite"));
        }
        if let Some(w) = ts.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::construction(format!("node times must increase strictly, found {} then {}", w[0], w[1])));
        }
        Ok(Self { ts, xs })
    }

    /// Straight line from `x0` to `x1` over `[0, horizon]`.
    pub fn linear(x0: f64, x1: f64, horizon: f64) -> Result<Self> {
        Self::from_parts(vec![0.0, horizon], vec![x0, x1])
    }

    pub fn constant(x: f64, horizon: f64) -> Result<Self> {
        Self::linear(x, x, horizon)
    }

    pub fn times(&self) -> &[f64] {
        &self.ts
    }

    pub fn values(&self) -> &[f64] {
        &self.xs
    }

    pub fn nodes(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.ts.iter().cloned().zip(self.xs.iter().cloned())
    }

    pub fn len(&self) -> usize {
        self.ts.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn horizon(&self) -> f64 {
        self.ts[self.ts.len() - 1]
    }

    pub fn start(&self) -> f64 {
        self.xs[0]
    }

    pub fn end(&self) -> f64 {
        self.xs[self.xs.len() - 1]
    }

    pub fn min_value(&self) -> f64 {
        self.xs.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Value at `t`; the path is extended constantly outside `[0, T]` only
    /// within rounding, otherwise an error.
    pub fn eval(&self, t: f64) -> Result<f64> {
        let h = self.horizon();
        let slack = 1e-12 * (1.0 + h);
        if !(t >= -slack && t <= h + slack) {
            return Err(Error::precondition(format!("time {t} outside [0, {h}]")));
        }
        Ok(self.eval_clamped(t))
    }

    pub(crate) fn eval_clamped(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return self.xs[0];
        }
        let n = self.ts.len();
        if t >= self.ts[n - 1] {
            return self.xs[n - 1];
        }
        let k = self.ts.partition_point(|&s| s <= t) - 1;
        let (t0, t1, x0, x1) = (self.ts[k], self.ts[k + 1], self.xs[k], self.xs[k + 1]);
        x0 + (x1 - x0) * (t - t0) / (t1 - t0)
    }

    /// Segments `(t0, t1, x0, x1)`.
    pub fn segments(&self) -> impl Iterator<Item = (f64, f64, f64, f64)> + '_ {
        (0..self.ts.len() - 1).map(move |k| (self.ts[k], self.ts[k + 1], self.xs[k], self.xs[k + 1]))
    }

    /// Uniform supremum distance. Both paths are piecewise linear, so the
    /// maximum is attained at a node of one of them.
    pub fn sup_distance(&self, other: &PiecewisePath) -> Result<f64> {
        let (a, b) = (self.horizon(), other.horizon());
        if (a - b).abs() > 1e-12 * (1.0 + a.abs()) {
            return Err(Error::HorizonMismatch(a, b));
        }
        let d = self
            .ts
            .iter()
            .chain(other.ts.iter())
            .map(|&t| (self.eval_clamped(t) - other.eval_clamped(t)).abs())
            .fold(0.0, f64::max);
        Ok(d)
    }

    /// `u ∘ φ`, with nodes added where `φ` crosses a breakpoint of `u`.
    /// Exact when `u` is piecewise affine.
    pub fn compose_u(&self, sp: &ScalePair) -> Result<PiecewisePath> {
        let breaks = sp.u().breakpoints();
        let mut ts = Vec::with_capacity(self.ts.len());
        let mut ys = Vec::with_capacity(self.ts.len());
        ts.push(self.ts[0]);
        ys.push(sp.eval_u(self.xs[0])?);
        for (t0, t1, x0, x1) in self.segments() {
            let (lo, hi) = (x0.min(x1), x0.max(x1));
            let mut crossings: Vec<f64> = breaks.iter().cloned().filter(|&b| b > lo && b < hi).collect();
            if x1 < x0 {
                crossings.reverse();
            }
            for b in crossings {
                let tc = t0 + (b - x0) / (x1 - x0) * (t1 - t0);
                if tc > *ts.last().expect("nonempty") && tc < t1 {
                    ts.push(tc);
                    ys.push(sp.eval_u(b)?);
                }
            }
            ts.push(t1);
            ys.push(sp.eval_u(x1)?);
        }
        PiecewisePath::from_parts(ts, ys)
    }

    /// Maps a path in natural scale back through `u⁻¹`, node by node.
    pub fn from_natural_scale(sp: &ScalePair, y: &PiecewisePath) -> Result<PiecewisePath> {
        let xs = y.xs.iter().map(|&v| sp.u_inverse(v)).collect::<Result<Vec<_>>>()?;
        PiecewisePath::from_parts(y.ts.clone(), xs)
    }

    /// `t ↦ φ(t / factor)` on `[0, factor·T]`.
    pub fn time_rescaled(&self, factor: f64) -> Result<PiecewisePath> {
        if !(factor > 0.0) {
            return Err(Error::precondition("time scaling factor must be positive"));
        }
        PiecewisePath::from_parts(self.ts.iter().map(|t| t * factor).collect(), self.xs.clone())
    }

    /// Inserts a rest of length `duration` at time `at`; later nodes are
    /// shifted by `duration`.
    pub fn with_wait(&self, at: f64, duration: f64) -> Result<PiecewisePath> {
        if !(duration > 0.0) {
            return Err(Error::precondition("wait duration must be positive"));
        }
        let x_at = self.eval(at)?;
        let mut ts = Vec::with_capacity(self.ts.len() + 2);
        let mut xs = Vec::with_capacity(self.ts.len() + 2);
        for (t, x) in self.nodes() {
            if t < at {
                ts.push(t);
                xs.push(x);
            }
        }
        ts.push(at);
        xs.push(x_at);
        ts.push(at + duration);
        xs.push(x_at);
        for (t, x) in self.nodes() {
            if t > at {
                ts.push(t + duration);
                xs.push(x);
            }
        }
        PiecewisePath::from_parts(ts, xs)
    }

    /// Splits every segment into `k` equal pieces.
    pub fn refined(&self, k: usize) -> PiecewisePath {
        let k = k.max(1);
        let mut ts = vec![self.ts[0]];
        let mut xs = vec![self.xs[0]];
        for (t0, t1, x0, x1) in self.segments() {
            for i in 1..=k {
                let s = i as f64 / k as f64;
                ts.push(if i == k { t1 } else { t0 + s * (t1 - t0) });
                xs.push(if i == k { x1 } else { x0 + s * (x1 - x0) });
            }
        }
        PiecewisePath { ts, xs }
    }

    /// Occupation of the non-smooth points of `sp` by the path.
    ///
    /// A piecewise-linear path spends positive time at a point only on a
    /// stationary segment, so occupations are sums of stationary durations.
    pub fn regularity_report(&self, sp: &ScalePair) -> Result<PathRegularityReport> {
        let structure = sp.structure_points();
        let mut visited: BTreeMap<u64, VisitedPoint> = BTreeMap::new();
        let mut report = PathRegularityReport { horizon: self.horizon(), ..Default::default() };
        let key = |x: f64| x.to_bits();
        let mut visit = |x: f64, dt: f64| -> Result<()> {
            let info = sp.point_info(x)?;
            let entry = visited.entry(key(x)).or_insert(VisitedPoint { x, class: info.class(), occupation: 0.0 });
            entry.occupation += dt;
            Ok(())
        };
        for (t0, t1, x0, x1) in self.segments() {
            sp.check_domain(x0)?;
            sp.check_domain(x1)?;
            let dt = t1 - t0;
            if x0 == x1 {
                let info = sp.point_info(x0)?;
                if info.in_u {
                    report.time_in_u += dt;
                }
                if info.in_v {
                    report.time_in_v += dt;
                }
                if info.in_vd {
                    report.time_in_vd += dt;
                }
                if info.in_e() {
                    report.time_in_e += dt;
                }
                if info.class() == PointClass::Smooth {
                    report.resting_smooth_time += dt;
                } else {
                    visit(x0, dt)?;
                    report.constancy_intervals.push((t0, t1, x0));
                }
            } else {
                report.moving_time += dt;
                let (lo, hi) = (x0.min(x1), x0.max(x1));
                for &b in structure.iter().filter(|&&b| b >= lo && b <= hi) {
                    if sp.classify_point(b)? != PointClass::Smooth {
                        visit(b, 0.0)?;
                    }
                }
            }
        }
        report.visited = visited.into_values().collect();
        report.visited.sort_by(|a, b| a.x.total_cmp(&b.x));
        Ok(report)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,x\n");
        for (t, x) in self.nodes() {
            let _ = writeln!(out, "{t:.16e},{x:.16e}");
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut nodes = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (i == 0 && line.starts_with('t')) {
                continue;
            }
            let mut parts = line.split(',');
            let parse = |p: Option<&str>| -> Result<f64> {
                p.ok_or_else(|| Error::Config(format!("line {}: expected t,x", i + 1)))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))
            };
            let t = parse(parts.next())?;
            let x = parse(parts.next())?;
            nodes.push((t, x));
        }
        Self::new(nodes)
    }
}

/// A non-smooth point touched by a path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VisitedPoint {
    pub x: f64,
    pub class: PointClass,
    pub occupation: f64,
}

/// Lebesgue measures of `U_φ`, `V_φ`, `V_d,φ` and `E_φ` together with the
/// remaining moving and resting time.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PathRegularityReport {
    pub horizon: f64,
    pub time_in_u: f64,
    pub time_in_v: f64,
    pub time_in_vd: f64,
    pub time_in_e: f64,
    pub resting_smooth_time: f64,
    pub moving_time: f64,
    pub visited: Vec<VisitedPoint>,
    /// Stationary stretches `(t0, t1, x)` at non-smooth points.
    pub constancy_intervals: Vec<(f64, f64, f64)>,
}

impl PathRegularityReport {
    /// `|E_φ| + |V_d,φ| + resting + moving - T`; zero up to rounding.
    pub fn partition_defect(&self) -> f64 {
        self.time_in_e + self.time_in_vd + self.resting_smooth_time + self.moving_time - self.horizon
    }
}
