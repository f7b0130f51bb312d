//! KPP front propagation: `W(t, x) = sup{∫₀ᵗ c(φ_s) ds - S_{0t}(φ) : φ₀ = x, φ_t ≤ 0}`
//! for piecewise-constant rates, and the front time `t*(x)` with `W(t*, x) = 0`.
//!
//! Candidate paths are monotone between structure points and may wait at
//! one point `z`. Moving across a piece `i` in time `μ_i` costs at least
//! `p_i / μ_i` with `p_i = ¼ (∫ √(u'v'))²`, so every route reduces to
//! maximizing `Σ (c_i μ_i - p_i/μ_i) + c_z w` subject to `Σ μ_i + w = t`.

use serde::Serialize;

use crate::action;
use crate::error::{Error, Result};
use crate::numerics::{golden_section_max, Quadrature};
use crate::path::PiecewisePath;
use crate::scale::ScalePair;

/// Piecewise-constant nonnegative rate. At a breakpoint the larger one-sided
/// value is used, which is what a path hovering there can collect.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct RatePieces {
    breaks: Vec<f64>,
    values: Vec<f64>,
}

impl RatePieces {
    pub fn new(breaks: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.len() != breaks.len() + 1 {
            return Err(Error::construction("a rate with k breakpoints needs k + 1 values"));
        }
        if breaks.windows(2).any(|w| w[1] <= w[0]) || breaks.iter().any(|b| !b.is_finite()) {
            return Err(Error::construction("rate breakpoints must be finite and increasing"));
        }
        if values.iter().any(|c| !(*c >= 0.0) || !c.is_finite()) {
            return Err(Error::construction("rates must be finite and nonnegative"));
        }
        Ok(Self { breaks, values })
    }

    pub fn constant(c: f64) -> Result<Self> {
        Self::new(Vec::new(), vec![c])
    }

    /// `c1` below `x_star`, `c2` from `x_star` on.
    pub fn two_piece(x_star: f64, c1: f64, c2: f64) -> Result<Self> {
        Self::new(vec![x_star], vec![c1, c2])
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_homogeneous(&self) -> bool {
        self.values.iter().all(|&c| c == self.values[0])
    }

    fn index(&self, x: f64) -> usize {
        self.breaks.partition_point(|&b| b <= x)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let k = self.index(x);
        if k > 0 && self.breaks[k - 1] == x {
            self.values[k].max(self.values[k - 1])
        } else {
            self.values[k]
        }
    }

    /// Rate on the open interval `(a, b)`, which must not contain a break.
    fn on(&self, a: f64, b: f64) -> f64 {
        self.values[self.index(0.5 * (a + b))]
    }
}

#[derive(Debug, Clone)]
pub struct FrontScenario {
    pub sp: ScalePair,
    pub c: RatePieces,
    /// Largest time searched for `t*`.
    pub horizon: f64,
}

impl FrontScenario {
    pub fn new(sp: ScalePair, c: RatePieces) -> Self {
        Self { sp, c, horizon: 1e4 }
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    /// Positive rates with at most two pieces; the families for which the
    /// condition (N) heuristic is offered.
    pub fn is_kpp_family(&self) -> bool {
        self.c.values.iter().all(|&c| c > 0.0) && self.c.values.len() <= 2
    }
}

/// `∫ₓʸ √(u'v')`; jumps of `v` contribute nothing.
pub fn quasi_distance(sp: &ScalePair, x: f64, y: f64) -> Result<f64> {
    sp.check_domain(x)?;
    sp.check_domain(y)?;
    let (a, b) = (x.min(y), x.max(y));
    let mut cuts: Vec<f64> = sp.structure_points().into_iter().filter(|&p| p > a && p < b).collect();
    cuts.insert(0, a);
    cuts.push(b);
    Ok(cuts.windows(2).map(|w| piece_distance(sp, w[0], w[1])).sum())
}

fn piece_distance(sp: &ScalePair, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    match sp.affine_cell(a, b) {
        Some((du, dv)) => (du * dv).sqrt() * (b - a),
        None => Quadrature::with_tol(1e-13).integrate(|s| (sp.du(s) * sp.dv(s)).sqrt(), a, b),
    }
}

/// One monotone piece of a route: from `from` to `to` inside one cell of the
/// merged structure, with cost coefficient `p` and rate `c`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct RoutePiece {
    from: f64,
    to: f64,
    p: f64,
    c: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct Route {
    z: f64,
    c_wait: f64,
    pieces: Vec<RoutePiece>,
    /// Index of the first piece after the wait.
    wait_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct RouteSolution {
    objective: f64,
    mu: Vec<f64>,
    wait: f64,
}

fn split(sp: &ScalePair, c: &RatePieces, from: f64, to: f64) -> Vec<RoutePiece> {
    if from == to {
        return Vec::new();
    }
    let (a, b) = (from.min(to), from.max(to));
    let mut cuts: Vec<f64> = sp
        .structure_points()
        .into_iter()
        .chain(c.breaks.iter().cloned())
        .filter(|&p| p > a && p < b)
        .collect();
    cuts.sort_by(|p, q| p.total_cmp(q));
    cuts.dedup();
    cuts.insert(0, a);
    cuts.push(b);
    let mut pieces: Vec<RoutePiece> = cuts
        .windows(2)
        .map(|w| {
            let d = piece_distance(sp, w[0], w[1]);
            RoutePiece { from: w[0], to: w[1], p: 0.25 * d * d, c: c.on(w[0], w[1]) }
        })
        .collect();
    if to < from {
        pieces.reverse();
        for p in &mut pieces {
            std::mem::swap(&mut p.from, &mut p.to);
        }
    }
    pieces
}

fn routes(sc: &FrontScenario, x: f64) -> Result<Vec<Route>> {
    let sp = &sc.sp;
    sp.check_domain(x)?;
    let mut zs = vec![x, 0.0_f64.min(x)];
    if x > 0.0 {
        zs.push(0.0);
    }
    zs.extend(sc.c.breaks.iter().cloned());
    for b in sp.v().breakpoints() {
        if sp.point_info(b)?.in_vd {
            zs.push(b);
        }
    }
    zs.retain(|&z| sp.contains(z));
    zs.sort_by(|a, b| a.total_cmp(b));
    zs.dedup();
    let mut out = Vec::with_capacity(zs.len());
    for z in zs {
        let mut pieces = split(sp, &sc.c, x, z);
        let wait_index = pieces.len();
        if z > 0.0 {
            pieces.extend(split(sp, &sc.c, z, 0.0));
        }
        out.push(Route { z, c_wait: sc.c.eval(z), pieces, wait_index });
    }
    Ok(out)
}

fn piece_value(p: &RoutePiece, mu: f64) -> f64 {
    if mu <= 0.0 {
        f64::NEG_INFINITY
    } else {
        p.c * mu - p.p / mu
    }
}

const GOLDEN_TOL: f64 = 1e-10;
const MAX_SWEEPS: usize = 200;

/// Maximizes a route's objective for total time `t`.
///
/// Homogeneous routes (all rates equal, waiting no better) use the closed
/// form `c t - (Σ √p_i)² / t`; the rest use pairwise coordinate ascent with
/// golden-section line searches, warm-started at `μ_i ∝ √p_i`.
fn solve_route(route: &Route, t: f64) -> RouteSolution {
    let m = route.pieces.len();
    if m == 0 {
        return RouteSolution { objective: route.c_wait * t, mu: Vec::new(), wait: t };
    }
    let roots: Vec<f64> = route.pieces.iter().map(|p| p.p.sqrt()).collect();
    let total_root: f64 = roots.iter().sum();
    let mut mu: Vec<f64> = roots.iter().map(|r| t * r / total_root).collect();
    let c0 = route.pieces[0].c;
    if route.pieces.iter().all(|p| p.c == c0) && route.c_wait <= c0 {
        return RouteSolution { objective: c0 * t - total_root * total_root / t, mu, wait: 0.0 };
    }
    let mut wait = 0.0;
    let objective = |mu: &[f64], wait: f64| -> f64 {
        route.pieces.iter().zip(mu).map(|(p, &m)| piece_value(p, m)).sum::<f64>() + route.c_wait * wait
    };
    let mut best = objective(&mu, wait);
    for _ in 0..MAX_SWEEPS {
        for i in 0..m {
            for j in i + 1..=m {
                let (a, b) = (mu[i], if j == m { wait } else { mu[j] });
                let total = a + b;
                if total <= 0.0 {
                    continue;
                }
                let pi = route.pieces[i];
                let f = |s: f64| {
                    let other = total - s;
                    let second = if j == m { route.c_wait * other } else { piece_value(&route.pieces[j], other) };
                    piece_value(&pi, s) + second
                };
                let (s, _) = golden_section_max(f, 0.0, total, GOLDEN_TOL * total.max(1e-300), 400);
                mu[i] = s;
                if j == m {
                    wait = total - s;
                } else {
                    mu[j] = total - s;
                }
            }
        }
        let now = objective(&mu, wait);
        let done = now - best <= 1e-15 * (1.0 + now.abs());
        best = best.max(now);
        if done {
            break;
        }
    }
    // the flat direction at equal rates resolves toward no waiting
    if wait <= GOLDEN_TOL * t {
        let extra = wait;
        wait = 0.0;
        let k = mu.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(k, _)| k).unwrap_or(0);
        mu[k] += extra;
        best = objective(&mu, wait);
    }
    RouteSolution { objective: best, mu, wait }
}

fn best_route(sc: &FrontScenario, t: f64, x: f64) -> Result<(Route, RouteSolution)> {
    if !(t > 0.0) {
        return Err(Error::precondition(format!("W(t, x) needs t > 0, got {t}")));
    }
    let mut best: Option<(Route, RouteSolution)> = None;
    for r in routes(sc, x)? {
        let sol = solve_route(&r, t);
        let better = match &best {
            None => true,
            Some((br, bs)) => {
                let tol = 1e-13 * (1.0 + sol.objective.abs());
                sol.objective > bs.objective + tol
                    || ((sol.objective - bs.objective).abs() <= tol && sol.wait < bs.wait - tol && br.z != r.z)
            }
        };
        if better {
            best = Some((r, sol));
        }
    }
    best.ok_or_else(|| Error::precondition("no admissible route"))
}

/// `W(t, x)`.
pub fn w_value(sc: &FrontScenario, t: f64, x: f64) -> Result<f64> {
    Ok(best_route(sc, t, x)?.1.objective)
}

/// Passage of the optimal path through a point where `v` jumps or where it
/// waits: `[mu0, mu1]` is the time spent there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WaitInterval {
    pub point: f64,
    pub mu0: f64,
    pub mu1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaitSchedule {
    /// The waiting point of the route and its interval (`mu0 = mu1` when the
    /// optimum does not wait).
    pub wait: WaitInterval,
    /// Every crossing of a jump point of `v`.
    pub jump_crossings: Vec<WaitInterval>,
}

#[derive(Debug, Clone)]
pub struct OptimalPath {
    pub path: PiecewisePath,
    pub schedule: WaitSchedule,
    pub objective: f64,
    /// `∫ c(φ) - S(φ)` re-evaluated on the returned path.
    pub recomputed: f64,
}

/// Sub-nodes used to keep the natural speed constant across curved cells.
const CURVED_SUBNODES: usize = 32;

/// The argmax path of `W(t, x)` with its waiting schedule.
pub fn optimize_path(sc: &FrontScenario, t: f64, x: f64) -> Result<OptimalPath> {
    let (route, sol) = best_route(sc, t, x)?;
    let sp = &sc.sp;
    let mut nodes = vec![(0.0, x)];
    let mut s = 0.0;
    let mut wait = WaitInterval { point: route.z, mu0: 0.0, mu1: 0.0 };
    let mut jumps = Vec::new();
    let mut collected = 0.0;
    let record_jump = |pt: f64, at: f64, until: f64, jumps: &mut Vec<WaitInterval>| -> Result<()> {
        if sp.point_info(pt)?.in_vd {
            jumps.push(WaitInterval { point: pt, mu0: at, mu1: until });
        }
        Ok(())
    };
    for (k, (piece, &mu)) in route.pieces.iter().zip(&sol.mu).enumerate() {
        if k == route.wait_index {
            wait.mu0 = s;
            if sol.wait > 0.0 {
                s += sol.wait;
                nodes.push((s, route.z));
                collected += route.c_wait * sol.wait;
            }
            wait.mu1 = s;
            record_jump(route.z, wait.mu0, wait.mu1, &mut jumps)?;
        } else if k > 0 {
            record_jump(piece.from, s, s, &mut jumps)?;
        }
        if sp.affine_cell(piece.from.min(piece.to), piece.from.max(piece.to)).is_some() {
            s += mu;
            nodes.push((s, piece.to));
        } else {
            let (lo, hi) = (piece.from.min(piece.to), piece.from.max(piece.to));
            let total = piece_distance(sp, lo, hi);
            for i in 1..=CURVED_SUBNODES {
                let frac = i as f64 / CURVED_SUBNODES as f64;
                let xi = if i == CURVED_SUBNODES {
                    piece.to
                } else {
                    // distance from the piece start grows toward `to`
                    let gap = |y: f64| piece_distance(sp, piece.from.min(y), piece.from.max(y)) - frac * total;
                    crate::numerics::bisect(gap, lo, hi, 1e-14 * (1.0 + hi.abs()))
                };
                nodes.push((s + mu * frac, xi));
            }
            s += mu;
        }
        collected += piece.c * mu;
    }
    if route.wait_index == route.pieces.len() {
        wait.mu0 = s;
        if sol.wait > 0.0 {
            s += sol.wait;
            nodes.push((s, route.z));
            collected += route.c_wait * sol.wait;
        }
        wait.mu1 = s;
        if !route.pieces.is_empty() || sol.wait > 0.0 {
            record_jump(route.z, wait.mu0, wait.mu1, &mut jumps)?;
        }
    }
    if nodes.len() == 1 {
        nodes.push((t, x));
    }
    let last = nodes.len() - 1;
    nodes[last].0 = t;
    let path = PiecewisePath::new(nodes)?;
    let recomputed = collected - action::action(sp, &path, x)?.value;
    Ok(OptimalPath { path, schedule: WaitSchedule { wait, jump_crossings: jumps }, objective: sol.objective, recomputed })
}

/// Root of `W(·, x)` by bisection; the bracket grows geometrically from 1e-6.
pub fn front_time(sc: &FrontScenario, x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::precondition(format!("front time needs x > 0, got {x}")));
    }
    let w = |t: f64| w_value(sc, t, x);
    let mut lo = 1e-6;
    if w(lo)? >= 0.0 {
        return Ok(lo);
    }
    let mut hi = 2.0 * lo;
    while w(hi)? < 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > sc.horizon {
            if w(sc.horizon)? < 0.0 {
                return Err(Error::Horizon { x, horizon: sc.horizon });
            }
            hi = sc.horizon;
            break;
        }
    }
    while hi - lo > 1e-9 * hi.max(1.0) * 1e-3 {
        let mid = 0.5 * (lo + hi);
        if w(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrontPoint {
    pub x: f64,
    pub t_star: f64,
    pub wait: WaitInterval,
}

pub fn front_profile(sc: &FrontScenario, xs: &[f64]) -> Result<Vec<FrontPoint>> {
    xs.iter()
        .map(|&x| {
            let t_star = front_time(sc, x)?;
            let wait = optimize_path(sc, t_star, x)?.schedule.wait;
            Ok(FrontPoint { x, t_star, wait })
        })
        .collect()
}

/// x-intervals swept by the front at a single time: flat stretches of
/// `m(x) = min_{y ≥ x} t*(y)`, the first time the front reaches beyond `x`.
///
/// Points just left of every rate break inside the grid are added, since the
/// swept interval ends at a break and can be narrower than the spacing. The
/// left end of each stretch is refined by bisection.
pub fn front_jump_detector(sc: &FrontScenario, xs: &[f64]) -> Result<Vec<(f64, f64)>> {
    let mut grid: Vec<f64> = xs.to_vec();
    if let (Some(&first), Some(&last)) = (xs.first(), xs.last()) {
        for &b in &sc.c.breaks {
            let before = b - 1e-9 * (1.0 + b.abs());
            if before > first && b <= last {
                grid.push(before);
                grid.push(b);
            }
        }
    }
    grid.sort_by(|a, b| a.total_cmp(b));
    grid.dedup();
    let ts: Vec<f64> = grid.iter().map(|&x| front_time(sc, x)).collect::<Result<_>>()?;
    let mut m = ts.clone();
    for k in (0..m.len().saturating_sub(1)).rev() {
        m[k] = m[k].min(m[k + 1]);
    }
    let flat = |i: usize| (m[i + 1] - m[i]).abs() <= 1e-7 * (1.0 + m[i].abs());
    let mut out: Vec<(f64, f64)> = Vec::new();
    let mut k = 0;
    while k + 1 < m.len() {
        if !flat(k) {
            k += 1;
            continue;
        }
        let start = k;
        while k + 1 < m.len() && flat(k) {
            k += 1;
        }
        let level = m[start];
        let mut left = grid[start];
        if start > 0 && m[start - 1] < level {
            let (mut lo, mut hi) = (grid[start - 1], grid[start]);
            while hi - lo > 1e-10 * (1.0 + hi.abs()) {
                let mid = 0.5 * (lo + hi);
                if front_time(sc, mid)? < level {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            left = hi;
        }
        let right = grid[k];
        if right - left > 1e-8 * (1.0 + right.abs()) {
            out.push((left, right));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionNReport {
    pub in_family: bool,
    pub note: Option<String>,
    pub checked: usize,
    /// `(x, s, W(t* - s, φ_s))` with a positive value.
    pub violations: Vec<(f64, f64, f64)>,
    pub max_w: f64,
}

/// Grid heuristic for condition (N): along the optimal path to a front
/// point, the remaining value `W(t* - s, φ_s)` must not be positive.
pub fn condition_n_check(sc: &FrontScenario, xs: &[f64]) -> Result<ConditionNReport> {
    if !sc.is_kpp_family() {
        return Ok(ConditionNReport {
            in_family: false,
            note: Some("rate must be positive with at most two pieces".into()),
            checked: 0,
            violations: Vec::new(),
            max_w: f64::NAN,
        });
    }
    let mut report = ConditionNReport { in_family: true, note: None, checked: 0, violations: Vec::new(), max_w: f64::NEG_INFINITY };
    for &x in xs {
        let t_star = front_time(sc, x)?;
        let opt = optimize_path(sc, t_star, x)?;
        let tol = 1e-7 * (1.0 + t_star);
        for i in 1..20 {
            let s = t_star * i as f64 / 20.0;
            let y = opt.path.eval(s)?;
            let w = w_value(sc, t_star - s, y)?;
            report.checked += 1;
            report.max_w = report.max_w.max(w);
            if w > tol {
                report.violations.push((x, s, w));
            }
        }
    }
    Ok(report)
}

/// `(t, x, W)` triples on a grid, for contour plots.
pub fn w_grid(sc: &FrontScenario, ts: &[f64], xs: &[f64]) -> Result<Vec<(f64, f64, f64)>> {
    let mut out = Vec::with_capacity(ts.len() * xs.len());
    for &t in ts {
        for &x in xs {
            out.push((t, x, w_value(sc, t, x)?));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example(kappa: f64) -> FrontScenario {
        FrontScenario::new(ScalePair::delay_corner(1.0, 3.0, kappa, 1.0, 2.0).unwrap(), RatePieces::constant(1.0).unwrap())
    }

    #[test]
    fn quasi_distance_examples() {
        let sp = ScalePair::linear(1.0, 1.0).unwrap();
        assert!((quasi_distance(&sp, 0.0, 2.5).unwrap() - 2.5).abs() < 1e-15);
        let ex = example(0.5);
        assert!((quasi_distance(&ex.sp, 0.0, 3.0).unwrap() - 4.0).abs() < 1e-14);
        assert_eq!(quasi_distance(&ex.sp, 1.3, 1.3).unwrap(), 0.0);
        assert_eq!(quasi_distance(&ex.sp, 3.0, 0.5).unwrap(), quasi_distance(&ex.sp, 0.5, 3.0).unwrap());
    }

    #[test]
    fn homogeneous_w() {
        let sc = FrontScenario::new(ScalePair::linear(1.0, 1.0).unwrap(), RatePieces::constant(1.0).unwrap());
        for &(t, x) in &[(0.5, 1.0), (2.0, 3.0), (1.0, 0.1)] {
            let w = w_value(&sc, t, x).unwrap();
            assert!((w - (t - x * x / (4.0 * t))).abs() < 1e-14);
        }
        assert!((w_value(&sc, 1.7, -0.5).unwrap() - 1.7).abs() < 1e-15);
        assert!(w_value(&sc, 0.0, 1.0).is_err());
    }

    #[test]
    fn example_front_times() {
        let sc = example(0.5);
        assert!((front_time(&sc, 1.5).unwrap() - 0.75).abs() < 1e-9);
        assert!((front_time(&sc, 3.0).unwrap() - 2.0).abs() < 1e-9);
        let (a, b) = (front_time(&sc, 0.5).unwrap(), front_time(&sc, 0.9).unwrap());
        assert!(((0.9 - 0.5) / (b - a) - 2.0).abs() < 1e-6);
    }

    #[test]
    fn no_waiting_at_the_jump() {
        let sc = example(0.5);
        let (t, x) = (1.0, 1.6);
        let opt = optimize_path(&sc, t, x).unwrap();
        let crossing = opt.schedule.jump_crossings.iter().find(|c| c.point == 1.0).expect("crosses x1");
        assert_eq!(crossing.mu0, crossing.mu1);
        assert!((crossing.mu0 - t * (x - 1.0) / x).abs() < 1e-12);
        assert!((opt.objective - opt.recomputed).abs() < 1e-12);
    }

    #[test]
    fn high_rate_region_induces_waiting() {
        let sc = FrontScenario::new(ScalePair::linear(1.0, 1.0).unwrap(), RatePieces::two_piece(1.0, 1.0, 4.0).unwrap());
        let opt = optimize_path(&sc, 3.0, 0.8).unwrap();
        assert!(opt.schedule.wait.mu1 > opt.schedule.wait.mu0);
        assert_eq!(opt.schedule.wait.point, 1.0);
        assert!((opt.objective - opt.recomputed).abs() < 1e-9, "{} {}", opt.objective, opt.recomputed);
    }

    #[test]
    fn jump_detector_examples() {
        let xs: Vec<f64> = (1..=40).map(|i| 0.1 * i as f64).collect();
        assert!(front_jump_detector(&example(0.5), &xs).unwrap().is_empty());
        let lin = ScalePair::linear(1.0, 1.0).unwrap();
        let strong = FrontScenario::new(lin.clone(), RatePieces::two_piece(1.0, 1.0, 4.0).unwrap());
        assert!(!front_jump_detector(&strong, &xs).unwrap().is_empty());
        let weak = FrontScenario::new(lin, RatePieces::two_piece(1.0, 1.0, 1.5).unwrap());
        assert!(front_jump_detector(&weak, &xs).unwrap().is_empty());
        // just above the threshold the swept interval is [2 t*(1), 1]
        let near = FrontScenario::new(ScalePair::linear(1.0, 1.0).unwrap(), RatePieces::two_piece(1.0, 1.0, 2.5).unwrap());
        let jumps = front_jump_detector(&near, &xs).unwrap();
        assert_eq!(jumps.len(), 1);
        let t1 = front_time(&near, 1.0).unwrap();
        assert!((jumps[0].0 - 2.0 * t1).abs() < 1e-8 && (jumps[0].1 - 1.0).abs() < 1e-15, "{jumps:?}");
    }

    #[test]
    fn condition_n_examples() {
        let xs = [0.5, 1.5, 2.5, 3.5];
        let r = condition_n_check(&example(0.5), &xs).unwrap();
        assert!(r.in_family && r.violations.is_empty(), "{r:?}");
        let weak = FrontScenario::new(ScalePair::linear(1.0, 1.0).unwrap(), RatePieces::two_piece(1.0, 1.0, 1.5).unwrap());
        assert!(condition_n_check(&weak, &xs).unwrap().violations.is_empty());
        let degenerate = FrontScenario::new(ScalePair::linear(1.0, 1.0).unwrap(), RatePieces::two_piece(1.0, 1.0, 0.0).unwrap());
        assert!(!condition_n_check(&degenerate, &xs).unwrap().in_family);
    }
}
