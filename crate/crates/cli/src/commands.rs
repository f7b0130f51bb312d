//! Command implementations. Each returns rendered artifacts and summary
//! lines; nothing here touches the filesystem.

use feller_ldp::acceptance;
use feller_ldp::action::{action, action_y, reduced_action};
use feller_ldp::front::{condition_n_check, front_jump_detector, front_profile, w_grid};
use feller_ldp::rde::{dichotomy_check, solve_rde};
use feller_ldp::simulator::{
    band_occupation, delay_occupation, exit_probability_exact, exit_probability_mc, mollifier_doubling, paired_bootstrap,
    sample_process, terminal_tail, terminal_values, tube_probability, SimConfig,
};
use feller_ldp::time_change::{check_constancy_on_gamma_jump, mollify, sigma, sigma_n};
use feller_ldp::{Error, ScalePair, SeedSpec};
use serde::Serialize;
use serde_json::json;

use crate::config::{RunConfig, ScaleSpec};
use crate::output::{csv, num, Artifact};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Classify,
    TimeChange,
    Action,
    Simulate,
    Exit,
    Ldp,
    Delay,
    Front,
    Rde,
    Verify,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Classify => "classify",
            Command::TimeChange => "time-change",
            Command::Action => "action",
            Command::Simulate => "simulate",
            Command::Exit => "exit",
            Command::Ldp => "ldp",
            Command::Delay => "delay",
            Command::Front => "front",
            Command::Rde => "rde",
            Command::Verify => "verify",
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Options {
    pub w_grid: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Failure {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => Failure::Config(m),
            other => Failure::Numerical(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub artifacts: Vec<Artifact>,
    pub summary: Vec<String>,
    /// Nonzero when the run finished but a check failed (4 for `verify`,
    /// 3 for a non-converged field).
    pub status: i32,
}

type Res = Result<RunOutput, Failure>;

fn missing(block: &str) -> Failure {
    Failure::Config(format!("the command needs a \"{block}\" block"))
}

fn sim_config(cfg: &RunConfig) -> SimConfig {
    let n = &cfg.numerics;
    SimConfig::new(n.eps, n.dt, cfg.seed).with_mollify(n.n_mollify)
}

pub fn dispatch(cmd: Command, cfg: &RunConfig, opts: &Options) -> Res {
    if cmd == Command::Verify {
        return verify(cfg);
    }
    let sp = cfg.scale.build()?;
    match cmd {
        Command::Classify => classify(cfg, &sp),
        Command::TimeChange => time_change(cfg, &sp),
        Command::Action => run_action(cfg, &sp),
        Command::Simulate => simulate(cfg, &sp),
        Command::Exit => exit(cfg, &sp),
        Command::Ldp => ldp(cfg, &sp),
        Command::Delay => delay(cfg, &sp),
        Command::Front => front(cfg, sp, opts),
        Command::Rde => rde(cfg, sp),
        Command::Verify => unreachable!(),
    }
}

fn classify(cfg: &RunConfig, sp: &ScalePair) -> Res {
    let mut xs = sp.structure_points();
    if let Some(b) = &cfg.classify {
        xs.extend(&b.points);
    }
    xs.sort_by(|a, b| a.total_cmp(b));
    xs.dedup();
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for &x in &xs {
        let info = sp.point_info(x)?;
        let rate = sp.dv_du(x)?.clock_rate();
        let class = info.class();
        rows.push(vec![
            num(x),
            class.as_str().to_string(),
            info.in_e().to_string(),
            num(sp.eval_u(x)?),
            num(sp.eval_v(x)?),
            num(info.jump),
            num(info.du.0),
            num(info.du.1),
            num(info.dv.0),
            num(info.dv.1),
            num(rate),
        ]);
        summary.push(format!("x = {x}: {}", class.as_str()));
    }
    let header = "x,class,in_e,u,v,jump,du_left,du_right,dv_left,dv_right,clock_rate";
    Ok(RunOutput { artifacts: vec![Artifact::new("classify.csv", csv(header, rows))], summary, status: 0 })
}

fn paths(cfg: &RunConfig) -> Result<Vec<feller_ldp::PiecewisePath>, Failure> {
    if cfg.paths.is_empty() {
        return Err(missing("paths"));
    }
    cfg.paths.iter().map(|p| p.build().map_err(Failure::from)).collect()
}

fn time_change(cfg: &RunConfig, sp: &ScalePair) -> Res {
    let block = cfg.time_change.clone().unwrap_or(crate::config::TimeChangeBlock { grid: 200, mollify: vec![] });
    let mut out = RunOutput::default();
    let mut reports = Vec::new();
    for (i, p) in paths(cfg)?.iter().enumerate() {
        let m = sigma(sp, p)?;
        let mut mollified = Vec::new();
        for &n in &block.mollify {
            let d = sigma_n(&mollify(sp, n)?, p)?.sup_distance(&m)?;
            mollified.push(json!({ "n": n, "sup_distance": d }));
        }
        let constancy = check_constancy_on_gamma_jump(p, &m);
        reports.push(json!({
            "path": i,
            "total": m.total(),
            "strictly_increasing": m.is_strictly_increasing(),
            "flat_intervals": m.flat_intervals(),
            "constancy_ok": constancy.ok(),
            "regularity": p.regularity_report(sp)?,
            "mollified": mollified,
        }));
        out.summary.push(format!("path {i}: σ(T) = {}, {} flat interval(s)", m.total(), m.flat_intervals().len()));
        out.artifacts.push(Artifact::new(format!("sigma_{i}.csv"), m.to_csv(block.grid)));
    }
    out.artifacts.push(Artifact::json("time_change.json", &json!({ "paths": reports })));
    Ok(out)
}

fn run_action(cfg: &RunConfig, sp: &ScalePair) -> Res {
    let mut out = RunOutput::default();
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for (i, p) in paths(cfg)?.iter().enumerate() {
        let s = action(sp, p, p.start())?;
        let reduced = match reduced_action(sp, p, p.start()) {
            Ok(r) => Some(r.value),
            Err(Error::Precondition(_)) => None,
            Err(e) => return Err(e.into()),
        };
        let natural = action_y(sp, &p.compose_u(sp)?, sp.eval_u(p.start())?)?.value;
        rows.push(vec![
            i.to_string(),
            num(s.value),
            reduced.map(num).unwrap_or_default(),
            num(natural),
        ]);
        out.summary.push(format!("path {i}: action {}", s.value));
        reports.push(json!({ "path": i, "action": s, "reduced": reduced, "natural_scale": natural }));
    }
    out.artifacts.push(Artifact::new("action.csv", csv("path,action,reduced,natural_scale", rows)));
    out.artifacts.push(Artifact::json("action.json", &json!({ "paths": reports })));
    Ok(out)
}

#[derive(Serialize)]
struct Moments {
    n: usize,
    mean: f64,
    variance: f64,
    min: f64,
    max: f64,
}

fn moments(v: &[f64]) -> Moments {
    let n = v.len();
    let mean = v.iter().sum::<f64>() / n as f64;
    let variance = if n > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
    Moments {
        n,
        mean,
        variance,
        min: v.iter().cloned().fold(f64::INFINITY, f64::min),
        max: v.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    }
}

fn simulate(cfg: &RunConfig, sp: &ScalePair) -> Res {
    let block = cfg.simulate.as_ref().ok_or_else(|| missing("simulate"))?;
    let n = &cfg.numerics;
    let sim = sim_config(cfg);
    let seed = SeedSpec::new(cfg.seed);
    let mut rows = Vec::new();
    for i in 0..block.records {
        let rec = sample_process(sp, block.x0, n.horizon, block.out_step, &sim.with_seed(seed.family(1).stream(i as u64)))?;
        for k in 0..rec.times.len() {
            rows.push(vec![i.to_string(), num(rec.times[k]), num(rec.clock[k]), num(rec.x_values[k]), num(rec.y_values[k])]);
        }
    }
    let terminal = terminal_values(sp, block.x0, n.horizon, n.n_paths, &sim)?;
    let m = moments(&terminal);
    let doubling = if block.doubling { Some(mollifier_doubling(sp, block.x0, n.horizon, n.n_paths, &sim)?) } else { None };
    let summary = vec![format!("X_T over {} paths: mean {}, variance {}", m.n, m.mean, m.variance)];
    let report = json!({ "x0": block.x0, "horizon": n.horizon, "terminal": m, "mollifier_doubling": doubling });
    Ok(RunOutput {
        artifacts: vec![Artifact::new("paths.csv", csv("path,t,tau,x,y", rows)), Artifact::json("simulate.json", &report)],
        summary,
        status: 0,
    })
}

fn exit(cfg: &RunConfig, sp: &ScalePair) -> Res {
    let b = cfg.exit.as_ref().ok_or_else(|| missing("exit"))?;
    let exact = exit_probability_exact(sp, b.x, b.a, b.b)?;
    let st = exit_probability_mc(sp, b.x, b.a, b.b, cfg.numerics.n_paths, &sim_config(cfg))?;
    let within = st.brackets(exact, 3.0);
    let summary = vec![format!("P(exit at b): estimate {} ± {} (SE), exact {exact}, within 3 SE: {within}", st.estimate, st.std_error)];
    let report = json!({ "exact": exact, "mc": st, "within_3se": within });
    Ok(RunOutput { artifacts: vec![Artifact::json("exit.json", &report)], summary, status: 0 })
}

fn ldp(cfg: &RunConfig, sp: &ScalePair) -> Res {
    let b = cfg.ldp.as_ref().ok_or_else(|| missing("ldp"))?;
    if b.tail.is_none() && b.tube.is_none() {
        return Err(Failure::Config("the ldp block needs \"tail\" or \"tube\"".into()));
    }
    let n = &cfg.numerics;
    let sim = sim_config(cfg);
    let mut summary = Vec::new();
    let tail = match &b.tail {
        Some(t) => {
            let est = terminal_tail(sp, t.x0, n.horizon, t.level, n.n_paths, &sim.with_seed(SeedSpec::new(cfg.seed).family(1)))?;
            summary.push(format!("P(X_T ≥ {}) ≈ {}, rate proxy {:?}", t.level, est.estimate, est.rate_proxy));
            Some(est)
        }
        None => None,
    };
    let tube = match &b.tube {
        Some(t) => {
            let psi = t.psi.build()?;
            let r = tube_probability(sp, t.x0, &psi, &t.deltas, n.n_paths, &sim.with_seed(SeedSpec::new(cfg.seed).family(2)))?;
            summary.push(format!("tube estimates {:?}, rate proxies {:?}, S^Y(ψ) = {}", r.estimates, r.rate_proxy, r.action_y));
            Some(r)
        }
        None => None,
    };
    let report = json!({ "epsilon": n.eps, "tail": tail, "tube": tube });
    Ok(RunOutput { artifacts: vec![Artifact::json("ldp.json", &report)], summary, status: 0 })
}

fn delay(cfg: &RunConfig, sp: &ScalePair) -> Res {
    let b = cfg.delay.as_ref().ok_or_else(|| missing("delay"))?;
    let n = &cfg.numerics;
    let sim = sim_config(cfg);
    let mut summary = Vec::new();
    let mut bands = Vec::new();
    for &band in &b.bands {
        let occ = delay_occupation(sp, b.x0, b.x_jump, band, n.horizon, n.n_paths, &sim)?;
        let m = moments(&occ);
        summary.push(format!("band {band}: mean occupation {}", m.mean));
        bands.push(json!({ "band": band, "occupation": m }));
    }
    let mut comparisons = Vec::new();
    if let ScaleSpec::DelayCorner { a, b: bb, x1, x2, .. } = cfg.scale {
        // paired seeds: every κ reuses the same streams
        let mut runs = Vec::new();
        for &kappa in &b.kappas {
            let pair = ScalePair::delay_corner(a, bb, kappa, x1, x2)?;
            let occ = band_occupation(&pair, b.x0, b.x_jump, b.bands[0], n.horizon, n.n_paths, &sim)?;
            runs.push((kappa, occ));
        }
        for (k, w) in runs.windows(2).enumerate() {
            let bi = paired_bootstrap(&w[0].1, &w[1].1, b.bootstrap_reps, b.confidence, SeedSpec::new(cfg.seed).family(3 + k as u64))?;
            summary.push(format!("κ {} → {}: mean difference {} in [{}, {}]", w[0].0, w[1].0, bi.mean, bi.lo, bi.hi));
            comparisons.push(json!({ "kappa_from": w[0].0, "kappa_to": w[1].0, "band": b.bands[0], "difference": bi, "increases": bi.lo > 0.0 }));
        }
        let means: Vec<_> = runs.iter().map(|(k, o)| json!({ "kappa": k, "mean": moments(o).mean })).collect();
        comparisons.insert(0, json!({ "means": means }));
    }
    let report = json!({ "x_jump": b.x_jump, "bands": bands, "kappa_comparisons": comparisons });
    Ok(RunOutput { artifacts: vec![Artifact::json("delay.json", &report)], summary, status: 0 })
}

fn front(cfg: &RunConfig, sp: ScalePair, opts: &Options) -> Res {
    let b = cfg.front.as_ref().ok_or_else(|| missing("front"))?;
    let sc = cfg.scenario.front(sp)?;
    let xs = b.xs.points();
    let profile = front_profile(&sc, &xs)?;
    let rows = profile.iter().map(|p| vec![num(p.x), num(p.t_star), num(p.wait.point), num(p.wait.mu0), num(p.wait.mu1)]);
    let mut artifacts = vec![Artifact::new("front.csv", csv("x,t_star,wait_point,wait_start,wait_end", rows))];
    let jumps = front_jump_detector(&sc, &xs)?;
    let cond = condition_n_check(&sc, &xs)?;
    let mut summary: Vec<String> = profile.iter().map(|p| format!("t*({}) = {}", p.x, p.t_star)).collect();
    summary.push(format!("front jumps: {jumps:?}"));
    artifacts.push(Artifact::json("front.json", &json!({ "profile": profile, "jumps": jumps, "condition_n": cond })));
    if opts.w_grid {
        let (ts, wx) = match (&b.w_ts, &b.w_xs) {
            (Some(t), Some(x)) => (t.points(), x.points()),
            _ => return Err(Failure::Config("--w-grid needs front.w_ts and front.w_xs".into())),
        };
        let rows = w_grid(&sc, &ts, &wx)?.into_iter().map(|(t, x, w)| vec![num(t), num(x), num(w)]);
        artifacts.push(Artifact::new("w_grid.csv", csv("t,x,w", rows)));
    }
    Ok(RunOutput { artifacts, summary, status: 0 })
}

fn rde(cfg: &RunConfig, sp: ScalePair) -> Res {
    let b = cfg.rde.as_ref().ok_or_else(|| missing("rde"))?;
    let sc = cfg.scenario.rde(sp)?;
    let n = &cfg.numerics;
    let field = solve_rde(&sc, n.eps, b.grid()?, &b.mc(n), &b.solve(n), SeedSpec::new(cfg.seed))?;
    let report = dichotomy_check(&field, &sc.front, b.margin)?;
    let crossings: Vec<_> = field
        .output_times()
        .iter()
        .enumerate()
        .map(|(k, t)| json!({ "t": t, "x_half": field.level_crossing(k, 0.5) }))
        .collect();
    let mut summary = vec![
        format!(
            "{} sweeps, residual {}, converged {}; high {}/{}, low {}/{}",
            field.iteration_count, field.residual, field.converged, report.high_ok, report.n_high, report.low_ok, report.n_low
        ),
    ];
    let status = if field.converged {
        0
    } else {
        summary.push("iteration did not reach the tolerance".into());
        3
    };
    let diag = json!({
        "epsilon": field.eps,
        "iterations": field.iteration_count,
        "residual": field.residual,
        "residual_trace": field.residual_trace,
        "converged": field.converged,
        "clamp_events": field.clamp_events,
        "refine": field.grid.refine,
        "dichotomy": {
            "report": report,
            "high_fraction": report.high_fraction(),
            "low_fraction": report.low_fraction(),
            "passes_95": report.passes(0.95),
        },
        "half_level": crossings,
    });
    Ok(RunOutput {
        artifacts: vec![Artifact::new("field.csv", field.to_csv()), Artifact::json("rde.json", &diag)],
        summary,
        status,
    })
}

fn verify(cfg: &RunConfig) -> Res {
    let ids: Vec<usize> = match &cfg.verify {
        Some(v) if !v.criteria.is_empty() => v.criteria.clone(),
        _ => acceptance::CRITERIA.iter().map(|c| c.0).collect(),
    };
    let mut outcomes = Vec::new();
    let mut summary = Vec::new();
    for id in ids {
        let o = acceptance::run(id, cfg.seed).ok_or_else(|| Failure::Config(format!("unknown criterion {id}")))?;
        summary.push(o.line());
        outcomes.push(o);
    }
    let passed = outcomes.iter().filter(|o| o.passed).count();
    summary.push(format!("{passed} of {} criteria passed", outcomes.len()));
    let status = if passed == outcomes.len() { 0 } else { 4 };
    Ok(RunOutput { artifacts: vec![Artifact::json("verify.json", &json!({ "seed": cfg.seed, "outcomes": outcomes }))], summary, status })
}
