//! Run configuration. One JSON file; polymorphic blocks carry a `kind` tag.

use std::sync::Arc;

use feller_ldp::front::{FrontScenario, RatePieces};
use feller_ldp::rde::{Initial, Interpolation, McParams, Reaction, RdeGrid, RdeScenario, SolveParams};
use feller_ldp::scale::{CoefficientOptions, PiecewiseMonotone};
use feller_ldp::{PiecewisePath, ScalePair};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{}{message}", location(*.line, *.column))]
pub struct ConfigError {
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub message: String,
}

fn location(line: Option<usize>, column: Option<usize>) -> String {
    match (line, column) {
        (Some(l), Some(c)) => format!("line {l}, column {c}: "),
        (Some(l), None) => format!("line {l}: "),
        _ => String::new(),
    }
}

impl ConfigError {
    fn plain(message: impl Into<String>) -> Self {
        Self { line: None, column: None, message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineSpec {
    #[serde(default)]
    pub breaks: Vec<f64>,
    pub slopes: Vec<f64>,
    /// Jump at each break; zeros when omitted.
    #[serde(default)]
    pub jumps: Vec<f64>,
    /// `(x, value)` fixing the additive constant.
    #[serde(default)]
    pub anchor: (f64, f64),
}

impl AffineSpec {
    fn build(&self) -> feller_ldp::Result<PiecewiseMonotone> {
        let jumps = if self.jumps.is_empty() { vec![0.0; self.breaks.len()] } else { self.jumps.clone() };
        PiecewiseMonotone::piecewise_affine(&self.breaks, &self.slopes, &jumps, self.anchor)
    }
}

/// Coefficient `a(x)` or `b(x)` of a classical diffusion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientSpec {
    Constant { value: f64 },
    /// `base + amplitude sin(frequency x)`
    Sine { base: f64, amplitude: f64, #[serde(default = "one")] frequency: f64 },
}

fn one() -> f64 {
    1.0
}

impl CoefficientSpec {
    fn build(&self) -> feller_ldp::scale::Coefficient {
        match *self {
            CoefficientSpec::Constant { value } => Arc::new(move |_| value),
            CoefficientSpec::Sine { base, amplitude, frequency } => Arc::new(move |x| base + amplitude * (frequency * x).sin()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScaleSpec {
    #[default]
    Wiener,
    Linear { u_slope: f64, v_slope: f64 },
    /// `u = x`, `v = A x` below `x2`, slope `A + B` above, jump `kappa` at `x1`.
    DelayCorner { a: f64, b: f64, kappa: f64, x1: f64, x2: f64 },
    Piecewise { u: AffineSpec, v: AffineSpec },
    Diffusion {
        a: CoefficientSpec,
        #[serde(default)]
        b: Option<CoefficientSpec>,
        lo: f64,
        hi: f64,
        #[serde(default = "default_panels")]
        panels: usize,
    },
}

fn default_panels() -> usize {
    256
}

impl ScaleSpec {
    pub fn build(&self) -> feller_ldp::Result<ScalePair> {
        match self {
            ScaleSpec::Wiener => Ok(ScalePair::wiener()),
            ScaleSpec::Linear { u_slope, v_slope } => ScalePair::linear(*u_slope, *v_slope),
            ScaleSpec::DelayCorner { a, b, kappa, x1, x2 } => ScalePair::delay_corner(*a, *b, *kappa, *x1, *x2),
            ScaleSpec::Piecewise { u, v } => ScalePair::new(u.build()?, v.build()?, None),
            ScaleSpec::Diffusion { a, b, lo, hi, panels } => {
                let opts = CoefficientOptions { panels: *panels, ..CoefficientOptions::on(*lo, *hi) };
                ScalePair::from_diffusion_coefficients(a.build(), b.as_ref().map(|b| b.build()), opts)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PathSpec {
    /// `(t, x)` pairs starting at `t = 0`.
    Nodes { nodes: Vec<(f64, f64)> },
    Linear { from: f64, to: f64, horizon: f64 },
    Constant { at: f64, horizon: f64 },
}

impl PathSpec {
    pub fn build(&self) -> feller_ldp::Result<PiecewisePath> {
        match self {
            PathSpec::Nodes { nodes } => PiecewisePath::new(nodes.clone()),
            PathSpec::Linear { from, to, horizon } => PiecewisePath::linear(*from, *to, *horizon),
            PathSpec::Constant { at, horizon } => PiecewisePath::constant(*at, *horizon),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSpec {
    #[serde(default)]
    pub breaks: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    #[serde(default = "unit_rate")]
    pub rate: RateSpec,
    #[serde(default = "default_initial")]
    pub g: Initial,
    #[serde(default = "default_reaction")]
    pub reaction: Reaction,
    /// Upper bound for the front-time search.
    #[serde(default = "default_front_horizon")]
    pub front_horizon: f64,
}

fn unit_rate() -> RateSpec {
    RateSpec { breaks: vec![], values: vec![1.0] }
}

fn default_initial() -> Initial {
    Initial::Indicator { at: 0.0 }
}

fn default_reaction() -> Reaction {
    Reaction::Kpp
}

fn default_front_horizon() -> f64 {
    1e4
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self { rate: unit_rate(), g: default_initial(), reaction: default_reaction(), front_horizon: default_front_horizon() }
    }
}

impl ScenarioSpec {
    pub fn front(&self, sp: ScalePair) -> feller_ldp::Result<FrontScenario> {
        let c = RatePieces::new(self.rate.breaks.clone(), self.rate.values.clone())?;
        Ok(FrontScenario::new(sp, c).with_horizon(self.front_horizon))
    }

    pub fn rde(&self, sp: ScalePair) -> feller_ldp::Result<RdeScenario> {
        Ok(RdeScenario { front: self.front(sp)?, g: self.g, reaction: self.reaction })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Numerics {
    pub eps: f64,
    /// Horizon `T` of simulated paths.
    pub horizon: f64,
    /// Wiener step.
    pub dt: f64,
    pub n_paths: usize,
    pub n_mollify: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for Numerics {
    fn default() -> Self {
        Self { eps: 0.1, horizon: 1.0, dt: 1e-3, n_paths: 10_000, n_mollify: 10_000, tol: 1e-6, max_iter: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyBlock {
    /// Points to classify in addition to the structure points.
    #[serde(default)]
    pub points: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeChangeBlock {
    /// Uniform grid size of the `σ` CSV.
    #[serde(default = "default_tc_grid")]
    pub grid: usize,
    /// Mollifier scales at which `sup |σⁿ - σ|` is reported.
    #[serde(default)]
    pub mollify: Vec<usize>,
}

fn default_tc_grid() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateBlock {
    pub x0: f64,
    /// Output spacing of each recorded path.
    pub out_step: f64,
    /// Number of full paths written to CSV; the rest only feed the summary.
    #[serde(default = "default_records")]
    pub records: usize,
    /// Also run the `n` versus `2n` mollifier comparison.
    #[serde(default)]
    pub doubling: bool,
}

fn default_records() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExitBlock {
    pub x: f64,
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailBlock {
    pub x0: f64,
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TubeBlock {
    /// Start point in original coordinates; `psi` is in natural scale.
    pub x0: f64,
    pub psi: PathSpec,
    pub deltas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LdpBlock {
    #[serde(default)]
    pub tail: Option<TailBlock>,
    #[serde(default)]
    pub tube: Option<TubeBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayBlock {
    pub x0: f64,
    pub x_jump: f64,
    pub bands: Vec<f64>,
    /// Jump sizes compared on paired seeds; only for a `delay_corner` scale.
    #[serde(default)]
    pub kappas: Vec<f64>,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
    #[serde(default = "default_reps")]
    pub bootstrap_reps: usize,
}

fn default_confidence() -> f64 {
    0.99
}

fn default_reps() -> usize {
    2000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Range {
    pub fn points(&self) -> Vec<f64> {
        if self.n == 1 {
            return vec![self.lo];
        }
        (0..self.n).map(|i| self.lo + (self.hi - self.lo) * i as f64 / (self.n - 1) as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrontBlock {
    pub xs: Range,
    /// Lattice for `W(t, x)`, written with `--w-grid`.
    #[serde(default)]
    pub w_ts: Option<Range>,
    #[serde(default)]
    pub w_xs: Option<Range>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RdeBlock {
    pub t_max: f64,
    pub nt: usize,
    pub x_lo: f64,
    pub x_hi: f64,
    pub nx: usize,
    pub n_mc: usize,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_interp")]
    pub interpolation: Interpolation,
    #[serde(default = "default_margin")]
    pub margin: f64,
}

fn default_lambda() -> f64 {
    1.0
}

fn default_interp() -> Interpolation {
    Interpolation::MonotoneCubic
}

fn default_margin() -> f64 {
    0.2
}

impl RdeBlock {
    pub fn grid(&self) -> feller_ldp::Result<RdeGrid> {
        RdeGrid::new(self.t_max, self.nt, self.x_lo, self.x_hi, self.nx)
    }

    pub fn mc(&self, n: &Numerics) -> McParams {
        McParams { n_mc: self.n_mc, dt: n.dt, n_mollify: n.n_mollify, interpolation: self.interpolation, ..McParams::default() }
    }

    pub fn solve(&self, n: &Numerics) -> SolveParams {
        SolveParams { tol: n.tol, max_iter: n.max_iter, lambda: self.lambda, ..SolveParams::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyBlock {
    /// Criterion ids; all when empty.
    #[serde(default)]
    pub criteria: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub scale: ScaleSpec,
    #[serde(default)]
    pub paths: Vec<PathSpec>,
    #[serde(default)]
    pub scenario: ScenarioSpec,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classify: Option<ClassifyBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_change: Option<TimeChangeBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exit: Option<ExitBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ldp: Option<LdpBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay: Option<DelayBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub front: Option<FrontBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rde: Option<RdeBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifyBlock>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: String,
}

fn default_seed() -> u64 {
    2024
}

fn default_out() -> String {
    "out".to_string()
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults parse")
    }
}

/// Line of the first `"key"` in `text`, used to point validation errors at
/// the offending block.
fn line_of(text: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
}

/// serde_json appends " at line L column C"; the position is reported
/// separately.
fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg.to_string(),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| ConfigError {
            line: Some(e.line()),
            column: Some(e.column()),
            message: strip_position(&e.to_string()),
        })?;
        cfg.validate().map_err(|(key, message)| ConfigError { line: line_of(text, key), column: None, message })?;
        Ok(cfg)
    }

    pub fn canonical(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks ranges and builds every configured object once. The error
    /// names the key it concerns.
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        let n = &self.numerics;
        let positive = [("eps", n.eps), ("horizon", n.horizon), ("dt", n.dt), ("tol", n.tol)];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err((key, format!("numerics.{key} must be positive and finite, got {v}")));
            }
        }
        for (key, v) in [("n_paths", n.n_paths), ("n_mollify", n.n_mollify), ("max_iter", n.max_iter)] {
            if v == 0 {
                return Err((key, format!("numerics.{key} must be at least 1")));
            }
        }
        let sp = self.scale.build().map_err(|e| ("scale", e.to_string()))?;
        for p in &self.paths {
            p.build().map_err(|e| ("paths", e.to_string()))?;
        }
        self.scenario.front(sp).map_err(|e| ("scenario", e.to_string()))?;
        if !(self.scenario.front_horizon > 0.0) {
            return Err(("front_horizon", "scenario.front_horizon must be positive".into()));
        }
        if let Some(s) = &self.simulate {
            if !(s.out_step > 0.0) {
                return Err(("out_step", "simulate.out_step must be positive".into()));
            }
        }
        if let Some(l) = &self.ldp {
            if let Some(t) = &l.tube {
                t.psi.build().map_err(|e| ("psi", e.to_string()))?;
                if t.deltas.is_empty() || t.deltas.iter().any(|d| !(*d > 0.0)) {
                    return Err(("deltas", "ldp.tube.deltas must be positive".into()));
                }
            }
        }
        if let Some(d) = &self.delay {
            if d.bands.is_empty() || d.bands.iter().any(|b| !(*b > 0.0)) {
                return Err(("bands", "delay.bands must be positive".into()));
            }
            if !(d.confidence > 0.0 && d.confidence < 1.0) || d.bootstrap_reps == 0 {
                return Err(("confidence", "delay.confidence must lie in (0, 1) with at least one replicate".into()));
            }
            if !d.kappas.is_empty() && !matches!(self.scale, ScaleSpec::DelayCorner { .. }) {
                return Err(("kappas", "delay.kappas needs a delay_corner scale".into()));
            }
        }
        if let Some(f) = &self.front {
            for (key, r) in [("xs", Some(&f.xs)), ("w_ts", f.w_ts.as_ref()), ("w_xs", f.w_xs.as_ref())] {
                if let Some(r) = r {
                    if r.n == 0 || !(r.hi >= r.lo) {
                        return Err((key, format!("front.{key} needs n ≥ 1 and lo ≤ hi")));
                    }
                }
            }
        }
        if let Some(r) = &self.rde {
            r.grid().map_err(|e| ("rde", e.to_string()))?;
            if r.n_mc == 0 || !(r.lambda > 0.0) || !(r.margin >= 0.0) {
                return Err(("rde", "rde needs n_mc ≥ 1, lambda > 0 and margin ≥ 0".into()));
            }
        }
        if let Some(v) = &self.verify {
            if let Some(bad) = v.criteria.iter().find(|&&c| !(1..=11).contains(&c)) {
                return Err(("criteria", format!("unknown criterion {bad}")));
            }
        }
        Ok(())
    }
}

pub fn load(path: &std::path::Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::plain(format!("cannot read {}: {e}", path.display())))?;
    RunConfig::parse(&text)
}
