//! Monte Carlo for `X^ε = u⁻¹(√ε W_τ)`, where the random clock `τ` solves
//! `∫₀^τ ½ (dv/du)(u⁻¹(√ε W_s)) ds = t`.
//!
//! The clock is accumulated along the linear interpolation of the Wiener
//! path. On each step the density integral has the closed form
//! `Δs · ½ (V(y₁) - V(y₀)) / (y₁ - y₀)` with `V = v ∘ u⁻¹`, so ramps narrower
//! than a step still contribute their full mass.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::path::PiecewisePath;
use crate::rng::SeedSpec;
use crate::scale::{PointClass, ScalePair, Side};
use crate::time_change::{self, MollifiedPair};

/// Settings shared by the samplers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig {
    pub eps: f64,
    /// Step of the Wiener grid.
    pub dt: f64,
    /// Mollifier scale for jumps of `v`.
    pub n_mollify: usize,
    pub seed: SeedSpec,
    /// Per-path cap on Wiener steps.
    pub max_steps: u64,
}

impl SimConfig {
    pub fn new(eps: f64, dt: f64, seed: u64) -> Self {
        Self { eps, dt, n_mollify: 10_000, seed: SeedSpec::new(seed), max_steps: 100_000_000 }
    }

    pub fn with_mollify(mut self, n: usize) -> Self {
        self.n_mollify = n;
        self
    }

    pub fn with_seed(mut self, seed: SeedSpec) -> Self {
        self.seed = seed;
        self
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::precondition("epsilon must be positive"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::precondition("dt must be positive"));
        }
        if self.n_mollify == 0 {
            return Err(Error::precondition("mollifier scale must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
enum Cell {
    Affine { y_ref: f64, w_ref: f64, ratio: f64 },
    Curved,
}

/// `V(y) = v(u⁻¹(y))` with per-cell closed forms where both are affine.
#[derive(Debug, Clone)]
pub struct NaturalSpeed {
    pair: ScalePair,
    ys: Vec<f64>,
    w_left: Vec<f64>,
    cells: Vec<Cell>,
    range: (f64, f64),
}

impl NaturalSpeed {
    pub fn new(pair: &ScalePair) -> Self {
        let pts = pair.structure_points();
        let u = pair.u();
        let v = pair.v();
        let ys: Vec<f64> = pts.iter().map(|&x| u.value(x)).collect();
        let (lo, hi) = pair.domain();
        let mut edges = vec![lo];
        edges.extend(pts.iter().cloned());
        edges.push(hi);
        let mut cells = Vec::with_capacity(edges.len() - 1);
        let mut w_left = Vec::with_capacity(edges.len() - 1);
        for w in edges.windows(2) {
            let (a, b) = (w[0], w[1]);
            let wl = if a.is_finite() { v.value(a) } else { f64::NEG_INFINITY };
            w_left.push(wl);
            let cell = match pair.affine_cell(a, b) {
                Some((du, dv)) => {
                    let (x_ref, w_ref) = if a.is_finite() {
                        (a, v.value(a))
                    } else if b.is_finite() {
                        (b, v.left_limit(b))
                    } else {
                        (0.0, v.value(0.0))
                    };
                    Cell::Affine { y_ref: u.value(x_ref), w_ref, ratio: dv / du }
                }
                None => Cell::Curved,
            };
            cells.push(cell);
        }
        let ylo = if lo.is_finite() { u.value(lo) } else { f64::NEG_INFINITY };
        let yhi = if hi.is_finite() { u.value(hi) } else { f64::INFINITY };
        Self { pair: pair.clone(), ys, w_left, cells, range: (ylo, yhi) }
    }

    pub fn pair(&self) -> &ScalePair {
        &self.pair
    }

    pub fn range(&self) -> (f64, f64) {
        self.range
    }

    fn cell_of(&self, y: f64, hint: &mut usize) -> usize {
        let k = *hint;
        let lo_ok = k == 0 || self.ys[k - 1] <= y;
        let hi_ok = k == self.ys.len() || y < self.ys[k];
        if !(lo_ok && hi_ok) {
            *hint = self.ys.partition_point(|&b| b <= y);
        }
        *hint
    }

    fn value_hint(&self, y: f64, hint: &mut usize) -> f64 {
        match self.cells[self.cell_of(y, hint)] {
            Cell::Affine { y_ref, w_ref, ratio } => w_ref + ratio * (y - y_ref),
            Cell::Curved => self.pair.v().value(self.pair.u().inverse(y)),
        }
    }

    pub fn value(&self, y: f64) -> f64 {
        let mut hint = 0;
        self.value_hint(y, &mut hint)
    }

    /// `y` with `V(y) = w`; values in a jump gap map to the jump point.
    pub fn inverse(&self, w: f64) -> f64 {
        let k = self.w_left.partition_point(|&wl| wl <= w).max(1) - 1;
        let lo = if k == 0 { self.range.0 } else { self.ys[k - 1] };
        let hi = if k == self.ys.len() { self.range.1 } else { self.ys[k] };
        let y = match self.cells[k] {
            Cell::Affine { y_ref, w_ref, ratio } => y_ref + (w - w_ref) / ratio,
            Cell::Curved => self.pair.u().value(self.pair.v().inverse(w)),
        };
        y.clamp(lo, hi)
    }

    /// `½ dv/du` at `u⁻¹(y)` with the minimum convention.
    pub fn point_density(&self, y: f64) -> f64 {
        let x = self.pair.u().inverse(y);
        match self.pair.dv_du(x) {
            Ok(r) => 0.5 * r.finite().unwrap_or(f64::MAX),
            Err(_) => f64::NAN,
        }
    }

    /// Clock increment over a Wiener step of length `ds` from `y0` to `y1`
    /// along the straight line; `(w0, w1) = (V(y0), V(y1))`.
    fn increment(&self, y0: f64, y1: f64, w0: f64, w1: f64, ds: f64) -> f64 {
        if y1 == y0 {
            ds * self.point_density(y0)
        } else {
            0.5 * ds * (w1 - w0) / (y1 - y0)
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Step {
    y0: f64,
    y1: f64,
    w0: f64,
    s0: f64,
    s1: f64,
    t0: f64,
    t1: f64,
}

impl Step {
    /// Position and Wiener time at which the clock reaches `t ∈ [t0, t1]`.
    fn at_time(&self, speed: &NaturalSpeed, t: f64) -> (f64, f64) {
        if self.t1 == self.t0 {
            return (self.y0, self.s0);
        }
        if self.y1 == self.y0 {
            let s = self.s0 + (self.s1 - self.s0) * (t - self.t0) / (self.t1 - self.t0);
            return (self.y0, s);
        }
        let ds = self.s1 - self.s0;
        let target = self.w0 + 2.0 * (t - self.t0) * (self.y1 - self.y0) / ds;
        let (lo, hi) = (self.y0.min(self.y1), self.y0.max(self.y1));
        let y = speed.inverse(target).clamp(lo, hi);
        let s = self.s0 + ds * (y - self.y0) / (self.y1 - self.y0);
        (y, s)
    }
}

struct Walker<'a> {
    speed: &'a NaturalSpeed,
    rng: ChaCha8Rng,
    sd: f64,
    ds: f64,
    y: f64,
    w: f64,
    s: f64,
    t: f64,
    hint: usize,
    steps: u64,
    max_steps: u64,
}

impl<'a> Walker<'a> {
    fn new(speed: &'a NaturalSpeed, y0: f64, cfg: &SimConfig, seed: SeedSpec) -> Self {
        let mut hint = 0;
        let w = speed.value_hint(y0, &mut hint);
        Self {
            speed,
            rng: seed.rng(),
            sd: (cfg.eps * cfg.dt).sqrt(),
            ds: cfg.dt,
            y: y0,
            w,
            s: 0.0,
            t: 0.0,
            hint,
            steps: 0,
            max_steps: cfg.max_steps,
        }
    }

    fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    fn step(&mut self) -> Result<Step> {
        self.steps += 1;
        if self.steps > self.max_steps {
            return Err(Error::PathTooShort { achieved: self.t, target: f64::NAN });
        }
        let z: f64 = self.normal();
        let y1 = self.y + self.sd * z;
        let (lo, hi) = self.speed.range;
        if !(y1 >= lo && y1 <= hi) {
            return Err(Error::Range { y: y1, lo, hi });
        }
        let w1 = self.speed.value_hint(y1, &mut self.hint);
        let dt = self.speed.increment(self.y, y1, self.w, w1, self.ds);
        let st = Step { y0: self.y, y1, w0: self.w, s0: self.s, s1: self.s + self.ds, t0: self.t, t1: self.t + dt };
        self.y = y1;
        self.w = w1;
        self.s = st.s1;
        self.t = st.t1;
        Ok(st)
    }
}

pub(crate) fn mollified(sp: &ScalePair, n: usize) -> Result<MollifiedPair> {
    time_change::mollify(sp, n)
}

fn par_paths<T: Send>(n: usize, seed: SeedSpec, f: impl Fn(SeedSpec) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..n as u64).into_par_iter().map(|i| f(seed.stream(i))).collect()
}

/// Discretely sampled standard Wiener path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WienerPath {
    pub dt: f64,
    pub values: Vec<f64>,
    pub seed: SeedSpec,
}

pub fn sample_wiener(horizon: f64, dt: f64, seed: SeedSpec) -> Result<WienerPath> {
    if !(dt > 0.0) || !(horizon >= dt) || !horizon.is_finite() {
        return Err(Error::precondition(format!("invalid Wiener grid: T = {horizon}, dt = {dt}")));
    }
    let n = (horizon / dt).round() as usize;
    let mut rng = seed.rng();
    let sd = dt.sqrt();
    let mut values = Vec::with_capacity(n + 1);
    let mut w = 0.0;
    values.push(w);
    for _ in 0..n {
        let z: f64 = rng.sample(StandardNormal);
        w += sd * z;
        values.push(w);
    }
    Ok(WienerPath { dt, values, seed })
}

/// Realized clock on an output grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClockPath {
    pub times: Vec<f64>,
    /// Wiener time `τ(t)` reached at each output time.
    pub tau: Vec<f64>,
    /// `Y(t) = y₀ + √ε W_{τ(t)}`.
    pub y: Vec<f64>,
}

/// Inverts the clock of `mp` along a given Wiener path started at `x0`.
pub fn random_time_change(mp: &MollifiedPair, w: &WienerPath, eps: f64, x0: f64, times: &[f64]) -> Result<ClockPath> {
    if times.windows(2).any(|p| p[1] < p[0]) || times.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::precondition("output times must be non-decreasing and nonnegative"));
    }
    let speed = NaturalSpeed::new(mp.pair());
    let y_start = mp.pair().eval_u(x0)?;
    let scale = eps.sqrt();
    let mut out = ClockPath { times: times.to_vec(), tau: Vec::with_capacity(times.len()), y: Vec::with_capacity(times.len()) };
    let mut next = 0;
    let mut hint = 0;
    let mut t = 0.0;
    let mut y0 = y_start;
    let mut w0 = speed.value_hint(y0, &mut hint);
    for k in 0..w.values.len() {
        if k == 0 {
            while next < times.len() && times[next] == 0.0 {
                out.tau.push(0.0);
                out.y.push(y_start);
                next += 1;
            }
            continue;
        }
        let y1 = y_start + scale * w.values[k];
        let w1 = speed.value_hint(y1, &mut hint);
        let dt = speed.increment(y0, y1, w0, w1, w.dt);
        let st = Step { y0, y1, w0, s0: (k - 1) as f64 * w.dt, s1: k as f64 * w.dt, t0: t, t1: t + dt };
        while next < times.len() && times[next] <= st.t1 {
            let (y, s) = st.at_time(&speed, times[next]);
            out.tau.push(s);
            out.y.push(y);
            next += 1;
        }
        t = st.t1;
        y0 = y1;
        w0 = w1;
        if next == times.len() {
            return Ok(out);
        }
    }
    if next < times.len() {
        return Err(Error::PathTooShort { achieved: t, target: times[times.len() - 1] });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplePathRecord {
    pub epsilon: f64,
    pub n_mollify: usize,
    pub seed: SeedSpec,
    pub times: Vec<f64>,
    pub clock: Vec<f64>,
    pub x_values: Vec<f64>,
    pub y_values: Vec<f64>,
}

impl SamplePathRecord {
    pub fn to_csv(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::from("t,tau,x,y\n");
        for i in 0..self.times.len() {
            let _ = writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e}",
                self.times[i], self.clock[i], self.x_values[i], self.y_values[i]
            );
        }
        out
    }
}

fn output_grid(horizon: f64, step: f64) -> Vec<f64> {
    let n = (horizon / step).round().max(1.0) as usize;
    (0..=n).map(|k| if k == n { horizon } else { horizon * k as f64 / n as f64 }).collect()
}

/// One path of `X^ε` on `[0, T]`, reported every `out_step` units of time.
pub fn sample_process(sp: &ScalePair, x0: f64, horizon: f64, out_step: f64, cfg: &SimConfig) -> Result<SamplePathRecord> {
    cfg.validate()?;
    let mp = mollified(sp, cfg.n_mollify)?;
    let speed = NaturalSpeed::new(mp.pair());
    let times = output_grid(horizon, out_step);
    let (clock, y_values) = walk_grid(&speed, sp.eval_u(x0)?, &times, cfg, cfg.seed)?;
    let x_values = y_values.iter().map(|&y| sp.u().inverse(y)).collect();
    Ok(SamplePathRecord { epsilon: cfg.eps, n_mollify: cfg.n_mollify, seed: cfg.seed, times, clock, x_values, y_values })
}

pub(crate) fn walk_grid(speed: &NaturalSpeed, y0: f64, times: &[f64], cfg: &SimConfig, seed: SeedSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut walker = Walker::new(speed, y0, cfg, seed);
    let mut clock = Vec::with_capacity(times.len());
    let mut ys = Vec::with_capacity(times.len());
    let mut next = 0;
    while next < times.len() && times[next] <= 0.0 {
        clock.push(0.0);
        ys.push(y0);
        next += 1;
    }
    while next < times.len() {
        let st = walker.step()?;
        while next < times.len() && times[next] <= st.t1 {
            let (y, s) = st.at_time(speed, times[next]);
            clock.push(s);
            ys.push(y);
            next += 1;
        }
    }
    Ok((clock, ys))
}

/// Position `Y^ε_T`, walking until the clock passes `T`.
fn terminal_y(speed: &NaturalSpeed, y0: f64, horizon: f64, cfg: &SimConfig, seed: SeedSpec) -> Result<f64> {
    let mut walker = Walker::new(speed, y0, cfg, seed);
    loop {
        let st = walker.step()?;
        if st.t1 >= horizon {
            return Ok(st.at_time(speed, horizon).0);
        }
    }
}

/// Samples of `X^ε_T` from `x0`, one stream per path.
pub fn terminal_values(sp: &ScalePair, x0: f64, horizon: f64, n_paths: usize, cfg: &SimConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let mp = mollified(sp, cfg.n_mollify)?;
    let speed = NaturalSpeed::new(mp.pair());
    let y0 = sp.eval_u(x0)?;
    par_paths(n_paths, cfg.seed, |seed| terminal_y(&speed, y0, horizon, cfg, seed).map(|y| sp.u().inverse(y)))
}

/// Exit law `(u(x) - u(a)) / (u(b) - u(a))` of leaving `(a, b)` through `b`.
pub fn exit_probability_exact(sp: &ScalePair, x: f64, a: f64, b: f64) -> Result<f64> {
    if !(a < x && x < b) {
        return Err(Error::precondition(format!("need a < x < b, got {a}, {x}, {b}")));
    }
    let (ua, ux, ub) = (sp.eval_u(a)?, sp.eval_u(x)?, sp.eval_u(b)?);
    Ok((ux - ua) / (ub - ua))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExitStats {
    pub interval: (f64, f64),
    pub start: f64,
    pub hit_right: u64,
    pub hit_left: u64,
    pub n_total: u64,
    pub estimate: f64,
    pub std_error: f64,
}

impl ExitStats {
    fn from_counts(a: f64, b: f64, x: f64, right: u64, n: u64) -> Self {
        let p = right as f64 / n as f64;
        Self {
            interval: (a, b),
            start: x,
            hit_right: right,
            hit_left: n - right,
            n_total: n,
            estimate: p,
            std_error: (p * (1.0 - p) / n as f64).sqrt(),
        }
    }

    /// `|estimate - p| ≤ k·SE`; a zero SE falls back to one binomial SE of `p`.
    pub fn brackets(&self, p: f64, k: f64) -> bool {
        let se = if self.std_error > 0.0 { self.std_error } else { (p * (1.0 - p) / self.n_total as f64).sqrt() };
        (self.estimate - p).abs() <= k * se
    }
}

/// `exp(-2 (c - a)(c - b) / var)`: probability that a Brownian bridge from
/// `a` to `b` with variance `var` touches the level `c` (both on one side).
fn bridge_cross(a: f64, b: f64, c: f64, var: f64) -> f64 {
    (-2.0 * (c - a) * (c - b) / var).exp()
}

/// Monte Carlo exit location from `(a, b)`. Crossings between grid points
/// are detected with the Brownian-bridge probability, so the location law
/// carries no discretization bias. The exit location does not depend on
/// the clock, which therefore is not accumulated here.
pub fn exit_probability_mc(sp: &ScalePair, x: f64, a: f64, b: f64, n_paths: usize, cfg: &SimConfig) -> Result<ExitStats> {
    cfg.validate()?;
    exit_probability_exact(sp, x, a, b)?;
    let (ya, yx, yb) = (sp.eval_u(a)?, sp.eval_u(x)?, sp.eval_u(b)?);
    let var = cfg.eps * cfg.dt;
    let sd = var.sqrt();
    let hits = par_paths(n_paths, cfg.seed, |seed| {
        let mut rng = seed.rng();
        let mut y = yx;
        for _ in 0..cfg.max_steps {
            let z: f64 = rng.sample(StandardNormal);
            let y1 = y + sd * z;
            if y1 >= yb {
                return Ok(1u64);
            }
            if y1 <= ya {
                return Ok(0u64);
            }
            let up = bridge_cross(y, y1, yb, var);
            let down = bridge_cross(y, y1, ya, var);
            let u: f64 = rng.random();
            if u < up {
                return Ok(1);
            }
            if u < up + down {
                return Ok(0);
            }
            y = y1;
        }
        Err(Error::PathTooShort { achieved: f64::NAN, target: f64::NAN })
    })?;
    let right = hits.iter().sum::<u64>();
    Ok(ExitStats::from_counts(a, b, x, right, n_paths as u64))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TubeReport {
    /// Tube radii in decreasing order.
    pub deltas: Vec<f64>,
    pub hits: Vec<u64>,
    pub n_paths: u64,
    pub estimates: Vec<f64>,
    /// `-ε log p̂`, `None` when no path stayed in the tube.
    pub rate_proxy: Vec<Option<f64>>,
    pub action_y: f64,
}

/// Probability that `Y^ε` stays within `δ` of `ψ` on `[0, T]`, for several
/// radii at once with common random numbers (so estimates are nested).
pub fn tube_probability(sp: &ScalePair, x0: f64, psi: &PiecewisePath, deltas: &[f64], n_paths: usize, cfg: &SimConfig) -> Result<TubeReport> {
    cfg.validate()?;
    if deltas.is_empty() || deltas.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::precondition("tube radii must be positive"));
    }
    let y0 = sp.eval_u(x0)?;
    if (psi.start() - y0).abs() > 1e-12 * (1.0 + y0.abs()) {
        return Err(Error::precondition(format!("ψ(0) = {} but u(x0) = {y0}", psi.start())));
    }
    let mut ds: Vec<f64> = deltas.to_vec();
    ds.sort_by(|a, b| b.total_cmp(a));
    let mp = mollified(sp, cfg.n_mollify)?;
    let speed = NaturalSpeed::new(mp.pair());
    let horizon = psi.horizon();
    let var = cfg.eps * cfg.dt;
    let survived = par_paths(n_paths, cfg.seed, |seed| {
        let mut walker = Walker::new(&speed, y0, cfg, seed);
        let mut alive = ds.len();
        let mut d0 = 0.0;
        loop {
            let st = match walker.step() {
                Ok(st) => st,
                Err(Error::Range { .. }) => return Ok(0usize),
                Err(e) => return Err(e),
            };
            let (y1, t1, v) = if st.t1 >= horizon {
                let (y, s) = st.at_time(&speed, horizon);
                (y, horizon, cfg.eps * (s - st.s0))
            } else {
                (st.y1, st.t1, var)
            };
            let d1 = y1 - psi.eval_clamped(t1);
            let u = walker.uniform();
            while alive > 0 {
                let delta = ds[alive - 1];
                let out = d1.abs() >= delta
                    || (v > 0.0 && u < bridge_cross(d0, d1, delta, v) + bridge_cross(d0, d1, -delta, v));
                if out {
                    alive -= 1;
                } else {
                    break;
                }
            }
            if alive == 0 || t1 >= horizon {
                return Ok(alive);
            }
            d0 = d1;
        }
    })?;
    let n = n_paths as u64;
    let hits: Vec<u64> = (0..ds.len()).map(|j| survived.iter().filter(|&&a| a > j).count() as u64).collect();
    let estimates: Vec<f64> = hits.iter().map(|&h| h as f64 / n as f64).collect();
    let rate_proxy = estimates.iter().map(|&p| if p > 0.0 { Some(-cfg.eps * p.ln()) } else { None }).collect();
    let action_y = crate::action::action_y(sp, psi, y0)?.value;
    Ok(TubeReport { deltas: ds, hits, n_paths: n, estimates, rate_proxy, action_y })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailEstimate {
    pub level: f64,
    pub hits: u64,
    pub n_paths: u64,
    pub estimate: f64,
    pub std_error: f64,
    pub rate_proxy: Option<f64>,
}

/// `P(X^ε_T ≥ level)` by plain Monte Carlo.
pub fn terminal_tail(sp: &ScalePair, x0: f64, horizon: f64, level: f64, n_paths: usize, cfg: &SimConfig) -> Result<TailEstimate> {
    let values = terminal_values(sp, x0, horizon, n_paths, cfg)?;
    let hits = values.iter().filter(|&&x| x >= level).count() as u64;
    let n = n_paths as u64;
    let p = hits as f64 / n as f64;
    Ok(TailEstimate {
        level,
        hits,
        n_paths: n,
        estimate: p,
        std_error: (p * (1.0 - p) / n as f64).sqrt(),
        rate_proxy: if hits > 0 { Some(-cfg.eps * p.ln()) } else { None },
    })
}

/// Per-path time spent by `X^ε` in `(center - band, center + band)` on
/// `[0, T]`, integrated exactly along the interpolated path.
pub fn band_occupation(sp: &ScalePair, x0: f64, center: f64, band: f64, horizon: f64, n_paths: usize, cfg: &SimConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if !(band > 0.0) {
        return Err(Error::precondition("band must be positive"));
    }
    let mp = mollified(sp, cfg.n_mollify)?;
    let speed = NaturalSpeed::new(mp.pair());
    let y0 = sp.eval_u(x0)?;
    let (yl, yr) = (sp.eval_u(center - band)?, sp.eval_u(center + band)?);
    par_paths(n_paths, cfg.seed, |seed| {
        let mut walker = Walker::new(&speed, y0, cfg, seed);
        let mut occ = 0.0;
        loop {
            let st = walker.step()?;
            let done = st.t1 >= horizon;
            let (y1, s1, t1) = if done {
                let (y, s) = st.at_time(&speed, horizon);
                (y, s, horizon)
            } else {
                (st.y1, st.s1, st.t1)
            };
            if y1 == st.y0 {
                if st.y0 > yl && st.y0 < yr {
                    occ += t1 - st.t0;
                }
            } else {
                let lo = st.y0.min(y1).max(yl);
                let hi = st.y0.max(y1).min(yr);
                if hi > lo {
                    let slope = (s1 - st.s0) / (y1 - st.y0).abs();
                    occ += 0.5 * slope * (speed.value(hi) - speed.value(lo));
                }
            }
            if done {
                return Ok(occ);
            }
        }
    })
}

/// Band occupation around a jump point of `v`.
pub fn delay_occupation(sp: &ScalePair, x0: f64, x_jump: f64, band: f64, horizon: f64, n_paths: usize, cfg: &SimConfig) -> Result<Vec<f64>> {
    if sp.classify_point(x_jump)? != PointClass::JumpV {
        return Err(Error::precondition(format!("{x_jump} is not a jump point of v")));
    }
    band_occupation(sp, x0, x_jump, band, horizon, n_paths, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BootstrapInterval {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
    pub confidence: f64,
}

/// Percentile bootstrap for the mean of paired differences `b - a`.
pub fn paired_bootstrap(a: &[f64], b: &[f64], reps: usize, confidence: f64, seed: SeedSpec) -> Result<BootstrapInterval> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::precondition("paired samples must have equal nonzero length"));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    let n = diffs.len();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let mut rng = seed.rng();
    let mut means: Vec<f64> = (0..reps)
        .map(|_| (0..n).map(|_| diffs[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(|x, y| x.total_cmp(y));
    let alpha = 1.0 - confidence;
    let idx = |q: f64| ((q * reps as f64).floor() as usize).min(reps - 1);
    Ok(BootstrapInterval { mean, lo: means[idx(alpha / 2.0)], hi: means[idx(1.0 - alpha / 2.0)], confidence })
}

/// Fraction of paths whose natural-scale modulus of continuity at lag `h`
/// exceeds `level` on `[0, T]`.
pub fn modulus_exceedance(sp: &ScalePair, x0: f64, horizon: f64, h: f64, level: f64, n_paths: usize, cfg: &SimConfig) -> Result<f64> {
    cfg.validate()?;
    let mp = mollified(sp, cfg.n_mollify)?;
    let speed = NaturalSpeed::new(mp.pair());
    let y0 = sp.eval_u(x0)?;
    let sub = 10usize;
    let times = output_grid(horizon, h / sub as f64);
    let flags = par_paths(n_paths, cfg.seed, |seed| {
        let (_, ys) = walk_grid(&speed, y0, &times, cfg, seed)?;
        let exceeded = (0..ys.len().saturating_sub(sub)).any(|k| (ys[k + sub] - ys[k]).abs() > level);
        Ok(exceeded as u64)
    })?;
    Ok(flags.iter().sum::<u64>() as f64 / n_paths as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub critical_value: f64,
    pub alpha: f64,
}

impl KsResult {
    pub fn passes(&self) -> bool {
        self.statistic < self.critical_value
    }
}

/// Two-sample Kolmogorov–Smirnov statistic with the asymptotic critical
/// value `√(-ln(α/2)/2) · √((n+m)/(nm))`.
pub fn ks_two_sample(a: &[f64], b: &[f64], alpha: f64) -> KsResult {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(|p, q| p.total_cmp(q));
    y.sort_by(|p, q| p.total_cmp(q));
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let v = x[i].min(y[j]);
        while i < n && x[i] <= v {
            i += 1;
        }
        while j < m && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let (nf, mf) = (n as f64, m as f64);
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    KsResult { statistic: d, critical_value: c * ((nf + mf) / (nf * mf)).sqrt(), alpha }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MollifierDiagnostic {
    pub n: usize,
    pub ks: KsResult,
    pub mean_n: f64,
    pub mean_2n: f64,
    /// Fractions of terminal values inside a ramp.
    pub in_ramp_n: f64,
    pub in_ramp_2n: f64,
}

/// Terminal laws at mollifier scales `n` and `2n` on common random numbers.
///
/// A value inside a ramp is mapped to the ramp's jump point before the KS
/// statistic is taken. Without this an atom of the limit law at a sticky
/// point is spread over `[x - 1/n, x]` in one sample and `[x - 1/2n, x]` in
/// the other, and the statistic stays at about half the atom for every `n`.
pub fn mollifier_doubling(sp: &ScalePair, x0: f64, horizon: f64, n_paths: usize, cfg: &SimConfig) -> Result<MollifierDiagnostic> {
    let cfg_2n = cfg.with_mollify(2 * cfg.n_mollify);
    let a = terminal_values(sp, x0, horizon, n_paths, cfg)?;
    let b = terminal_values(sp, x0, horizon, n_paths, &cfg_2n)?;
    let snap = |v: &[f64], n: usize| -> Result<(Vec<f64>, f64)> {
        let mp = mollified(sp, n)?;
        let mut inside = 0usize;
        let out = v
            .iter()
            .map(|&x| match mp.ramps().iter().find(|r| x >= r.lo && x <= r.hi) {
                Some(r) => {
                    inside += 1;
                    r.point
                }
                None => x,
            })
            .collect();
        Ok((out, inside as f64 / v.len() as f64))
    };
    let (sa, in_a) = snap(&a, cfg.n_mollify)?;
    let (sb, in_b) = snap(&b, cfg_2n.n_mollify)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(MollifierDiagnostic {
        n: cfg.n_mollify,
        ks: ks_two_sample(&sa, &sb, 0.01),
        mean_n: mean(&a),
        mean_2n: mean(&b),
        in_ramp_n: in_a,
        in_ramp_2n: in_b,
    })
}

/// Left-side clock density at a point, exposed for inspection.
pub fn clock_density(sp: &ScalePair, x: f64) -> Result<f64> {
    let info = sp.point_info(x)?;
    Ok(0.5 * sp.v().derivative(x, Side::Left) / info.du.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scale::PiecewiseMonotone;

    fn kinked() -> ScalePair {
        let u = PiecewiseMonotone::piecewise_affine(&[0.0], &[1.0, 2.0], &[0.0], (0.0, 0.0)).unwrap();
        ScalePair::new(u, PiecewiseMonotone::affine(2.0).unwrap(), None).unwrap()
    }

    #[test]
    fn wiener_reproducible_and_starts_at_zero() {
        let s = SeedSpec::new(11).stream(4);
        let a = sample_wiener(1.0, 0.01, s).unwrap();
        let b = sample_wiener(1.0, 0.01, s).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.values[0], 0.0);
        assert_eq!(a.values.len(), 101);
        assert!(sample_wiener(0.001, 0.01, s).is_err());
        assert!(sample_wiener(1.0, 0.0, s).is_err());
    }

    #[test]
    fn wiener_terminal_variance() {
        let n = 100_000;
        let seed = SeedSpec::new(3);
        let vals: Vec<f64> = (0..n as u64).map(|i| *sample_wiener(1.0, 0.25, seed.stream(i)).unwrap().values.last().unwrap()).collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var - 1.0).abs() < 4.0 * (2.0 / n as f64).sqrt(), "{var}");
    }

    #[test]
    fn identity_and_constant_clocks() {
        let w = sample_wiener(3.0, 1e-3, SeedSpec::new(5)).unwrap();
        let times = [0.0, 0.25, 0.5, 1.0];
        let mp = time_change::mollify(&ScalePair::wiener(), 10).unwrap();
        let c = random_time_change(&mp, &w, 1.0, 0.0, &times).unwrap();
        for (t, tau) in times.iter().zip(&c.tau) {
            assert!((t - tau).abs() < 1e-12);
        }
        let a = 3.0;
        let mp = time_change::mollify(&ScalePair::linear(1.0, 2.0 * a).unwrap(), 10).unwrap();
        let c = random_time_change(&mp, &w, 1.0, 0.0, &times).unwrap();
        for (t, tau) in times.iter().zip(&c.tau) {
            assert!((t / a - tau).abs() < 1e-12);
        }
        let short = random_time_change(&mp, &w, 1.0, 0.0, &[100.0]);
        assert!(matches!(short, Err(Error::PathTooShort { .. })));
    }

    #[test]
    fn clock_slows_on_the_ramp() {
        let sp = ScalePair::delay_corner(1.0, 0.0, 1.0, 0.0, 5.0).unwrap();
        let mp = time_change::mollify(&sp, 100).unwrap();
        // slope of τ in t is 1/ρ; ρ is large on the ramp
        let away = 1.0 / (0.5 * 1.0);
        let on_ramp = 1.0 / (0.5 * (1.0 + 100.0));
        let speed = NaturalSpeed::new(mp.pair());
        let inc_on = speed.increment(-0.009, -0.001, speed.value(-0.009), speed.value(-0.001), 1.0);
        let inc_off = speed.increment(-0.5, -0.4, speed.value(-0.5), speed.value(-0.4), 1.0);
        assert!((1.0 / inc_on - on_ramp).abs() < 1e-12);
        assert!((1.0 / inc_off - away).abs() < 1e-12);
        assert!(1.0 / inc_on < 1.0 / inc_off);
    }

    #[test]
    fn record_is_consistent_and_reproducible() {
        let sp = ScalePair::delay_corner(1.0, 3.0, 0.5, 1.0, 2.0).unwrap();
        let cfg = SimConfig::new(0.5, 1e-3, 9).with_mollify(1000);
        let a = sample_process(&sp, 1.2, 1.0, 0.01, &cfg).unwrap();
        let b = sample_process(&sp, 1.2, 1.0, 0.01, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.clock.windows(2).all(|w| w[1] >= w[0]));
        for (x, y) in a.x_values.iter().zip(&a.y_values) {
            assert!((sp.u().inverse(*y) - x).abs() < 1e-10);
        }
        assert_eq!(a.times.len(), 101);
    }

    #[test]
    fn exit_exact_examples() {
        assert!((exit_probability_exact(&ScalePair::wiener(), 0.0, -1.0, 2.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((exit_probability_exact(&kinked(), 0.0, -1.0, 1.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let p = exit_probability_exact(&ScalePair::wiener(), 2.0 - 1e-12, -1.0, 2.0).unwrap();
        assert!((p - 1.0).abs() < 1e-11);
        assert!(exit_probability_exact(&ScalePair::wiener(), 3.0, -1.0, 2.0).is_err());
    }

    #[test]
    fn exit_mc_small_run() {
        let cfg = SimConfig::new(1.0, 1e-2, 21);
        let st = exit_probability_mc(&kinked(), 0.0, -1.0, 1.0, 20_000, &cfg).unwrap();
        assert_eq!(st.hit_left + st.hit_right, st.n_total);
        assert!(st.brackets(1.0 / 3.0, 4.0), "{st:?}");
    }

    #[test]
    fn ks_identical_and_shifted() {
        let a: Vec<f64> = (0..1000).map(|i| i as f64 / 1000.0).collect();
        let r = ks_two_sample(&a, &a, 0.01);
        assert_eq!(r.statistic, 0.0);
        let b: Vec<f64> = a.iter().map(|x| x * x + 0.5).collect();
        let r = ks_two_sample(&a, &b, 0.01);
        // brute-force oracle over all sample points
        let ecdf = |v: &[f64], t: f64| v.iter().filter(|&&z| z <= t).count() as f64 / v.len() as f64;
        let brute = a.iter().chain(&b).map(|&t| (ecdf(&a, t) - ecdf(&b, t)).abs()).fold(0.0, f64::max);
        assert_eq!(r.statistic, brute);
        assert!(!r.passes());
        assert!((r.critical_value - 1.6276 * (2.0f64 / 1000.0).sqrt()).abs() < 1e-4);
    }

    #[test]
    fn delay_occupation_requires_jump() {
        let sp = ScalePair::delay_corner(1.0, 3.0, 0.5, 1.0, 2.0).unwrap();
        let cfg = SimConfig::new(1.0, 1e-3, 1);
        assert!(matches!(delay_occupation(&sp, 1.0, 2.0, 0.1, 1.0, 10, &cfg), Err(Error::Precondition(_))));
        let occ = delay_occupation(&sp, 1.0, 1.0, 0.1, 1.0, 10, &cfg).unwrap();
        assert!(occ.iter().all(|&o| (0.0..=1.0 + 1e-12).contains(&o)));
    }

    #[test]
    fn full_mass_tube() {
        let sp = ScalePair::wiener();
        let psi = PiecewisePath::constant(0.0, 1.0).unwrap();
        let cfg = SimConfig::new(0.01, 1e-2, 2);
        let r = tube_probability(&sp, 0.0, &psi, &[5.0], 2000, &cfg).unwrap();
        assert_eq!(r.estimates[0], 1.0);
        assert_eq!(r.rate_proxy[0], Some(0.0));
    }
}
