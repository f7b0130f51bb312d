//! Acceptance gate. Each check runs from a fixed seed and reports what it
//! measured next to its tolerance.

use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::action::{action, action_y, holder_modulus, reduction_check};
use crate::front::{front_time, FrontScenario, RatePieces};
use crate::path::PiecewisePath;
use crate::rde::{dichotomy_check, solve_rde, McParams, RdeGrid, RdeScenario, SolveParams};
use crate::rng::SeedSpec;
use crate::scale::{CoefficientOptions, PiecewiseMonotone, ScalePair};
use crate::simulator::{
    band_occupation, exit_probability_exact, exit_probability_mc, ks_two_sample, paired_bootstrap, terminal_tail,
    terminal_values, tube_probability, SimConfig,
};
use crate::time_change::{mollify, mollify_with, rate_bound, sigma, sigma_n, RampPlacement};
use crate::Result;

pub const DEFAULT_SEED: u64 = 2024;

pub const CRITERIA: [(usize, &str); 11] = [
    (1, "front closed forms"),
    (2, "front jump immunity"),
    (3, "classical reduction"),
    (4, "time-change convergence"),
    (5, "exit probabilities"),
    (6, "gaussian rate"),
    (7, "tube probability"),
    (8, "epsilon scaling"),
    (9, "delay stickiness"),
    (10, "rde dichotomy"),
    (11, "action properties"),
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Outcome {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl Outcome {
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} {:<24} {} ({:.1} s) {}",
            self.id,
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.seconds,
            self.detail
        )
    }
}

/// Runs criterion `id` (1 to 11). Module errors count as failures.
pub fn run(id: usize, seed: u64) -> Option<Outcome> {
    let &(_, name) = CRITERIA.iter().find(|(k, _)| *k == id)?;
    let start = Instant::now();
    let res = match id {
        1 => front_closed_forms(),
        2 => front_jump_immunity(),
        3 => classical_reduction(seed),
        4 => time_change_convergence(),
        5 => exit_probabilities(seed),
        6 => gaussian_rate(seed),
        7 => tube(seed),
        8 => eps_scaling(seed),
        9 => delay_stickiness(seed),
        10 => rde_dichotomy(seed),
        _ => action_properties(seed),
    };
    let seconds = start.elapsed().as_secs_f64();
    let (passed, detail) = match res {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    Some(Outcome { id, name, passed, detail, seconds })
}

pub fn run_all(seed: u64) -> Vec<Outcome> {
    CRITERIA.iter().filter_map(|&(id, _)| run(id, seed)).collect()
}

type Check = Result<(bool, String)>;

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn example_front(kappa: f64) -> Result<FrontScenario> {
    Ok(FrontScenario::new(ScalePair::delay_corner(1.0, 3.0, kappa, 1.0, 2.0)?, RatePieces::constant(1.0)?))
}

fn front_oracle(x: f64) -> f64 {
    // A = 1, B = 3, c = 1, x2 = 2
    let k = (1.0f64 / 4.0).sqrt();
    if x < 2.0 {
        k * x
    } else {
        k * (2.0 + (4.0f64).sqrt() * (x - 2.0))
    }
}

fn front_closed_forms() -> Check {
    let start = Instant::now();
    let sc = example_front(0.5)?;
    let mut worst = 0.0f64;
    for x in linspace(0.1, 5.0, 100) {
        let t = front_time(&sc, x)?;
        let exact = front_oracle(x);
        worst = worst.max((t - exact).abs() / exact);
    }
    let secs = start.elapsed().as_secs_f64();
    Ok((worst < 1e-6 && secs < 5.0, format!("max rel err {worst:.2e} (< 1e-6), solve {secs:.2} s (< 5 s)")))
}

fn front_jump_immunity() -> Check {
    let xs = linspace(0.1, 5.0, 100);
    let profile = |kappa: f64| -> Result<Vec<f64>> {
        let sc = example_front(kappa)?;
        xs.iter().map(|&x| front_time(&sc, x)).collect()
    };
    let base = profile(0.0)?;
    let mut worst = 0.0f64;
    for kappa in [0.5, 2.0] {
        for (a, b) in profile(kappa)?.iter().zip(&base) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok((worst <= 1e-9, format!("max |Δt*| over κ ∈ {{0, 0.5, 2}} {worst:.2e} (≤ 1e-9)")))
}

fn random_path(rng: &mut ChaCha8Rng, lo: f64, hi: f64, max_nodes: usize) -> Result<PiecewisePath> {
    let n = rng.random_range(2..=max_nodes);
    let mut t = 0.0;
    let mut nodes = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 {
            t += rng.random_range(0.1..1.0);
        }
        nodes.push((t, rng.random_range(lo..hi)));
    }
    PiecewisePath::new(nodes)
}

fn classical_reduction(seed: u64) -> Check {
    let a = |x: f64| 1.0 + 0.5 * x.sin();
    let sp = ScalePair::from_diffusion_coefficients(Arc::new(a), None, CoefficientOptions::on(-4.0, 4.0))?;
    let mut rng = SeedSpec::new(seed).family(3).rng();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let p = random_path(&mut rng, -3.0, 3.0, 8)?;
        worst = worst.max(reduction_check(&sp, &a, &p)?.discrepancy);
    }
    Ok((worst < 1e-8, format!("max rel discrepancy {worst:.2e} over 100 paths (< 1e-8)")))
}

/// `u = x`, `v = x` below 0 and `1 + 3x` above.
fn jump_fixture() -> Result<ScalePair> {
    let v = PiecewiseMonotone::piecewise_affine(&[0.0], &[1.0, 3.0], &[1.0], (-1.0, -1.0))?;
    ScalePair::new(PiecewiseMonotone::affine(1.0)?, v, None)
}

fn time_change_convergence() -> Check {
    let sp = jump_fixture()?;
    let p = PiecewisePath::linear(-1.0, 1.0, 2.0)?;
    let exact = sigma(&sp, &p)?;
    let mut errs = Vec::new();
    for n in [100usize, 1000, 10_000] {
        errs.push(sigma_n(&mollify(&sp, n)?, &p)?.sup_distance(&exact)?);
    }
    let left = sigma_n(&mollify_with(&sp, 10_000, RampPlacement::Left)?, &p)?;
    let centered = sigma_n(&mollify_with(&sp, 10_000, RampPlacement::Centered)?, &p)?;
    let gap = left.sup_distance(&centered)?;
    let decreasing = errs.windows(2).all(|w| w[1] < w[0]);
    let ok = decreasing && errs[2] < 1e-3 && gap < 2e-3;
    Ok((
        ok,
        format!(
            "sup err {:.2e}, {:.2e}, {:.2e} (decreasing, last < 1e-3); left vs centered {gap:.2e} (< 2e-3)",
            errs[0], errs[1], errs[2]
        ),
    ))
}

fn kinked() -> Result<ScalePair> {
    let u = PiecewiseMonotone::piecewise_affine(&[0.0], &[1.0, 2.0], &[0.0], (0.0, 0.0))?;
    ScalePair::new(u, PiecewiseMonotone::affine(2.0)?, None)
}

fn exit_probabilities(seed: u64) -> Check {
    let start = Instant::now();
    let fixtures = [("wiener", ScalePair::wiener(), 2.0), ("kinked", kinked()?, 1.0)];
    let mut ok = true;
    let mut parts = Vec::new();
    for (k, (name, sp, b)) in fixtures.iter().enumerate() {
        let exact = exit_probability_exact(sp, 0.0, -1.0, *b)?;
        let cfg = SimConfig::new(1.0, 1e-3, seed).with_seed(SeedSpec::new(seed).family(5 + k as u64));
        let st = exit_probability_mc(sp, 0.0, -1.0, *b, 100_000, &cfg)?;
        let z = (st.estimate - exact) / st.std_error;
        ok &= st.brackets(exact, 3.0);
        parts.push(format!("{name} {:.5} vs {exact:.5} ({z:+.2} SE)", st.estimate));
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 60.0;
    Ok((ok, format!("{}; within 3 SE, {secs:.1} s (< 60 s)", parts.join(", "))))
}

fn gaussian_rate(seed: u64) -> Check {
    // u = x, v = 2x: X^ε_1 is Gaussian with variance ε
    let sp = ScalePair::linear(1.0, 2.0)?;
    let target = 0.5;
    let eps = 0.01;
    let analytic = -eps * gaussian_tail(eps, 1.0).ln();
    let analytic_ok = (analytic - target).abs() <= 0.15 * target;
    let cfg = SimConfig::new(0.05, 1e-2, seed).with_seed(SeedSpec::new(seed).family(6));
    let est = terminal_tail(&sp, 0.0, 1.0, 1.0, 1_000_000, &cfg)?;
    let (mc_ok, mc) = match est.rate_proxy {
        Some(r) => ((r - target).abs() <= 0.3 * target, format!("{r:.4} from {} hits", est.hits)),
        None => (false, "no hits".to_string()),
    };
    Ok((
        analytic_ok && mc_ok,
        format!("analytic rate {analytic:.4} at ε=0.01 (within 15% of 0.5); MC rate {mc} at ε=0.05 (within 30%)"),
    ))
}

fn tube(seed: u64) -> Check {
    let sp = ScalePair::wiener();
    let psi = PiecewisePath::linear(0.0, 1.0, 1.0)?;
    let cfg = SimConfig::new(0.05, 1e-3, seed).with_seed(SeedSpec::new(seed).family(7));
    let r = tube_probability(&sp, 0.0, &psi, &[0.5, 0.25, 0.1], 1_000_000, &cfg)?;
    let monotone = r.estimates.windows(2).all(|w| w[1] <= w[0]);
    let target = 0.5;
    let (rate_ok, rate) = match r.rate_proxy[1] {
        Some(p) => ((p - target).abs() <= 0.3 * target, format!("{p:.4}")),
        None => (false, "undefined".to_string()),
    };
    Ok((
        monotone && rate_ok,
        format!(
            "rate at δ=0.25 {rate} (within 30% of 0.5, S^Y = {:.3}); p̂ over δ 0.5/0.25/0.1: {:.2e}/{:.2e}/{:.2e} (non-increasing)",
            r.action_y, r.estimates[0], r.estimates[1], r.estimates[2]
        ),
    ))
}

fn eps_scaling(seed: u64) -> Check {
    let fixtures = [
        ("wiener", ScalePair::wiener(), 0.0),
        ("kinked", kinked()?, 0.0),
        ("delay", ScalePair::delay_corner(1.0, 3.0, 0.5, 1.0, 2.0)?, 1.2),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (k, (name, sp, x0)) in fixtures.iter().enumerate() {
        let base = SeedSpec::new(seed).family(8 + 2 * k as u64);
        let a = terminal_values(sp, *x0, 1.0, 10_000, &SimConfig::new(0.25, 1e-3, seed).with_seed(base))?;
        let b = terminal_values(sp, *x0, 0.25, 10_000, &SimConfig::new(1.0, 1e-3, seed).with_seed(base.family(1)))?;
        let ks = ks_two_sample(&a, &b, 0.01);
        ok &= ks.passes();
        parts.push(format!("{name} D={:.4}", ks.statistic));
    }
    let crit = ks_two_sample(&[0.0; 10_000], &[0.0; 10_000], 0.01).critical_value;
    Ok((ok, format!("{} (critical {crit:.4})", parts.join(", "))))
}

fn delay_stickiness(seed: u64) -> Check {
    let kappas = [0.0, 0.5, 1.0];
    let cfg = SimConfig::new(0.1, 1e-3, seed).with_seed(SeedSpec::new(seed).family(14));
    let mut occ = Vec::new();
    for &kappa in &kappas {
        let sp = ScalePair::delay_corner(1.0, 3.0, kappa, 1.0, 2.0)?;
        occ.push(band_occupation(&sp, 1.0, 1.0, 0.1, 1.0, 10_000, &cfg)?);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let mut ok = true;
    let mut parts = vec![format!("means {:.4}/{:.4}/{:.4}", mean(&occ[0]), mean(&occ[1]), mean(&occ[2]))];
    for k in 0..2 {
        let bi = paired_bootstrap(&occ[k], &occ[k + 1], 2000, 0.99, SeedSpec::new(seed).family(15 + k as u64))?;
        ok &= bi.lo > 0.0;
        parts.push(format!("κ {}→{}: 99% CI [{:.4}, {:.4}]", kappas[k], kappas[k + 1], bi.lo, bi.hi));
    }
    Ok((ok, format!("{} (lower ends > 0)", parts.join("; "))))
}

/// Window used for the dichotomy; see the README for the resolution
/// sensitivity on wider windows.
pub fn dichotomy_grid() -> Result<RdeGrid> {
    RdeGrid::new(2.0, 40, -0.5, 3.5, 80)
}

fn rde_dichotomy(seed: u64) -> Check {
    let start = Instant::now();
    let front = example_front(0.5)?;
    let sc = RdeScenario::kpp(front.clone());
    let field = solve_rde(&sc, 0.02, dichotomy_grid()?, &McParams::default(), &SolveParams::default(), SeedSpec::new(seed))?;
    let r = dichotomy_check(&field, &front, 0.2)?;
    let secs = start.elapsed().as_secs_f64();
    let ok = r.passes(0.95) && secs < 600.0 && field.converged;
    Ok((
        ok,
        format!(
            "high {}/{} = {:.3}, low {}/{} = {:.3} (≥ 0.95), {} sweeps, {secs:.0} s (< 600 s)",
            r.high_ok,
            r.n_high,
            r.high_fraction(),
            r.low_ok,
            r.n_low,
            r.low_fraction(),
            field.iteration_count
        ),
    ))
}

/// Random piecewise-affine pair: up to three corners of `u`, up to three
/// breakpoints of `v`, about half of them jumps.
fn random_pair(rng: &mut ChaCha8Rng) -> Result<ScalePair> {
    let breaks = |rng: &mut ChaCha8Rng| {
        let k = rng.random_range(0..=3);
        let mut b: Vec<f64> = (0..k).map(|_| (rng.random_range(-2.0..2.0) * 8.0f64).round() / 8.0).collect();
        b.sort_by(|x, y| x.total_cmp(y));
        b.dedup();
        b
    };
    let ub = breaks(rng);
    let us: Vec<f64> = (0..=ub.len()).map(|_| rng.random_range(0.5..2.0)).collect();
    let u = PiecewiseMonotone::piecewise_affine(&ub, &us, &vec![0.0; ub.len()], (0.0, 0.0))?;
    let vb = breaks(rng);
    let vs: Vec<f64> = (0..=vb.len()).map(|_| rng.random_range(0.5..3.0)).collect();
    let vj: Vec<f64> = vb.iter().map(|_| if rng.random_bool(0.5) { rng.random_range(0.1..1.0) } else { 0.0 }).collect();
    let v = PiecewiseMonotone::piecewise_affine(&vb, &vs, &vj, (0.0, 0.0))?;
    ScalePair::new(u, v, None)
}

/// Random path that visits structure points and sometimes rests there.
fn random_fixture_path(rng: &mut ChaCha8Rng, sp: &ScalePair) -> Result<PiecewisePath> {
    let pts = sp.structure_points();
    let n = rng.random_range(2..=7);
    let mut t = 0.0;
    let mut nodes = Vec::with_capacity(2 * n);
    for i in 0..n {
        if i > 0 {
            t += rng.random_range(0.05..1.0);
        }
        let x = if !pts.is_empty() && rng.random_bool(0.4) {
            pts[rng.random_range(0..pts.len())]
        } else {
            rng.random_range(-2.5..2.5)
        };
        nodes.push((t, x));
        if rng.random_bool(0.25) {
            t += rng.random_range(0.05..0.5);
            nodes.push((t, x));
        }
    }
    PiecewisePath::new(nodes)
}

/// `φ` with its interior node at `tc` replaced by the chord over
/// `[tc - w, tc + w]`.
fn round_corner(path: &PiecewisePath, tc: f64, w: f64) -> Result<PiecewisePath> {
    let mut nodes: Vec<(f64, f64)> = path.nodes().filter(|(t, _)| (t - tc).abs() > w).collect();
    nodes.push((tc - w, path.eval(tc - w)?));
    nodes.push((tc + w, path.eval(tc + w)?));
    nodes.sort_by(|a, b| a.0.total_cmp(&b.0));
    PiecewisePath::new(nodes)
}

fn action_properties(seed: u64) -> Check {
    let mut rng = SeedSpec::new(seed).family(11).rng();
    let mut failures = Vec::new();
    let mut contraction = 0.0f64;
    let mut scaling = 0.0f64;
    let mut holder_ratio = 0.0f64;
    let mut min_action = f64::INFINITY;
    for _ in 0..200 {
        let sp = random_pair(&mut rng)?;
        let p = random_fixture_path(&mut rng, &sp)?;
        let s = action(&sp, &p, p.start())?.value;
        min_action = min_action.min(s);
        if !(s >= 0.0) || !s.is_finite() {
            failures.push(format!("action {s}"));
            continue;
        }
        let psi = p.compose_u(&sp)?;
        let sy = action_y(&sp, &psi, psi.start())?.value;
        contraction = contraction.max((s - sy).abs());
        for c in [0.5, 2.0, 3.7] {
            let sc = action(&sp, &p.time_rescaled(c)?, p.start())?.value;
            scaling = scaling.max((sc - s / c).abs() / s.max(1e-300));
        }
        let c0 = rate_bound(&sp);
        let horizon = psi.horizon();
        for _ in 0..100 {
            let h = rng.random_range(0.0..horizon) * rng.random::<f64>();
            let t = rng.random_range(0.0..(horizon - h).max(f64::MIN_POSITIVE));
            if h <= 0.0 {
                continue;
            }
            let inc = (psi.eval(t + h)? - psi.eval(t)?).abs();
            let env = holder_modulus(sy, h, c0);
            if env > 0.0 {
                holder_ratio = holder_ratio.max(inc / env);
            } else if inc > 1e-12 {
                holder_ratio = f64::INFINITY;
            }
        }
        for x in sp.structure_points().into_iter().chain([rng.random_range(-3.0..3.0)]) {
            let z = action(&sp, &PiecewisePath::constant(x, rng.random_range(0.1..2.0))?, x)?.value;
            if z != 0.0 {
                failures.push(format!("constant at {x}: {z}"));
            }
        }
    }
    let holder_ok = holder_ratio <= 1.0 + 1e-12;
    if contraction >= 1e-10 {
        failures.push(format!("contraction {contraction:.2e}"));
    }
    if scaling > 1e-12 {
        failures.push(format!("time scaling {scaling:.2e}"));
    }
    if !holder_ok {
        failures.push(format!("Hölder ratio {holder_ratio}"));
    }
    let lsc = lsc_families()?;
    let lsc_worst = lsc.iter().cloned().fold(f64::INFINITY, f64::min);
    if lsc_worst < -1e-9 {
        failures.push(format!("LSC deficit {lsc_worst:.2e}"));
    }
    let detail = format!(
        "min S {min_action:.3e} (≥ 0), constants 0, contraction {contraction:.2e} (< 1e-10, 200 fixtures), \
         time scaling {scaling:.1e}, Hölder ratio {holder_ratio:.3} (≤ 1), LSC margin {lsc_worst:.1e} (≥ -1e-9){}",
        if failures.is_empty() { String::new() } else { format!("; failed: {}", failures.join(", ")) }
    );
    Ok((failures.is_empty(), detail))
}

/// `lim S(φⁿ) - S(φ)` for corner-rounding families, with the limit
/// extrapolated from the last two widths (the defect is linear in `w`).
pub fn lsc_families() -> Result<Vec<f64>> {
    let wiener = ScalePair::wiener();
    let example = ScalePair::delay_corner(1.0, 3.0, 0.5, 1.0, 2.0)?;
    let families = [
        // V-shaped corner
        (wiener.clone(), PiecewisePath::new(vec![(0.0, 0.0), (0.5, 1.0), (1.0, -0.5)])?, 0.5),
        // corner of v at x2 = 2
        (example.clone(), PiecewisePath::new(vec![(0.0, 3.0), (1.0, 2.0), (2.0, 2.5)])?, 1.0),
        // end of a wait at the jump point x1 = 1
        (example, PiecewisePath::new(vec![(0.0, 1.7), (0.6, 1.0), (1.2, 1.0), (1.8, 0.0)])?, 1.2),
    ];
    let mut margins = Vec::new();
    for (sp, p, tc) in &families {
        let s = action(sp, p, p.start())?.value;
        let mut seq = Vec::new();
        for k in 2..=8 {
            let w = 10f64.powi(-k);
            seq.push(action(sp, &round_corner(p, *tc, w)?, p.start())?.value);
        }
        let n = seq.len();
        let limit = (10.0 * seq[n - 1] - seq[n - 2]) / 9.0;
        margins.push(limit - s);
    }
    Ok(margins)
}

/// Gaussian-tail oracle `P(N(0, var) ≥ level)`.
pub fn gaussian_tail(var: f64, level: f64) -> f64 {
    Normal::new(0.0, var.sqrt()).expect("valid normal").sf(level)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_values() {
        assert!((front_oracle(1.5) - 0.75).abs() < 1e-15);
        assert!((front_oracle(3.0) - 2.0).abs() < 1e-15);
        // Φ̄(10) ≈ 7.62e-24
        assert!((gaussian_tail(1.0, 10.0) / 7.619853024160526e-24 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn corner_rounding_converges() {
        for m in lsc_families().unwrap() {
            assert!(m.abs() < 1e-9, "{m}");
        }
    }

    #[test]
    fn unknown_criterion() {
        assert!(run(12, 1).is_none());
    }
}
