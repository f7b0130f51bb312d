use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use feller_ldp_cli::commands::{dispatch, Command, Options};
use feller_ldp_cli::config::{self, RunConfig};
use feller_ldp_cli::output::{write_atomic, Manifest};

#[derive(Parser)]
#[command(name = "feller-ldp", version, about = "Large deviations, time changes and KPP fronts for D_v D_u diffusions")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// JSON run configuration; defaults apply to omitted blocks.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Number of Monte Carlo paths.
    #[arg(long, global = true)]
    paths: Option<usize>,
    /// Wiener step.
    #[arg(long, global = true)]
    dt: Option<f64>,
    #[arg(long = "mollify-n", global = true)]
    mollify_n: Option<usize>,
    #[arg(long, global = true)]
    eps: Option<f64>,
    /// Print nothing on success.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Classify structure points of the scale pair.
    Classify,
    /// Deterministic time change σ along each configured path.
    TimeChange,
    /// Action functional of each configured path.
    Action,
    /// Sample paths and terminal statistics.
    Simulate,
    /// Exit location probability, Monte Carlo against the scale ratio.
    Exit,
    /// Tail and tube rate proxies.
    Ldp,
    /// Occupation near a jump point of v.
    Delay,
    /// Front times t*(x), front jumps and condition (N).
    Front {
        /// Also write W on the configured (t, x) lattice.
        #[arg(long = "w-grid")]
        w_grid: bool,
    },
    /// Generalized solution of the reaction-diffusion equation.
    Rde,
    /// Run the acceptance suite.
    Verify,
}

impl Cmd {
    fn split(self) -> (Command, Options) {
        let plain = Options::default();
        match self {
            Cmd::Classify => (Command::Classify, plain),
            Cmd::TimeChange => (Command::TimeChange, plain),
            Cmd::Action => (Command::Action, plain),
            Cmd::Simulate => (Command::Simulate, plain),
            Cmd::Exit => (Command::Exit, plain),
            Cmd::Ldp => (Command::Ldp, plain),
            Cmd::Delay => (Command::Delay, plain),
            Cmd::Front { w_grid } => (Command::Front, Options { w_grid }),
            Cmd::Rde => (Command::Rde, plain),
            Cmd::Verify => (Command::Verify, plain),
        }
    }
}

fn load(cli: &Cli) -> Result<RunConfig, String> {
    let mut cfg = match &cli.config {
        Some(p) => config::load(p).map_err(|e| format!("{}: {e}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.display().to_string();
    }
    if let Some(n) = cli.paths {
        cfg.numerics.n_paths = n;
    }
    if let Some(dt) = cli.dt {
        cfg.numerics.dt = dt;
    }
    if let Some(n) = cli.mollify_n {
        cfg.numerics.n_mollify = n;
    }
    if let Some(e) = cli.eps {
        cfg.numerics.eps = e;
    }
    cfg.validate().map_err(|(_, m)| format!("after command-line overrides: {m}"))?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    let (command, opts) = cli.command.split();
    let run = match dispatch(command, &cfg, &opts) {
        Ok(r) => r,
        Err(f) => {
            eprintln!("{f}");
            return ExitCode::from(f.exit_code() as u8);
        }
    };
    let dir = PathBuf::from(&cfg.out);
    let mut outputs = Vec::new();
    for a in &run.artifacts {
        if let Err(e) = write_atomic(&dir, &a.name, &a.contents) {
            eprintln!("cannot write {}: {e}", dir.join(&a.name).display());
            return ExitCode::from(3);
        }
        outputs.push(a.name.clone());
    }
    let manifest = Manifest {
        command: command.name(),
        tool_version: env!("CARGO_PKG_VERSION"),
        library_version: feller_ldp::VERSION,
        seed: cfg.seed,
        config: serde_json::to_value(&cfg).expect("config serializes"),
        outputs,
        wall_time_s: start.elapsed().as_secs_f64(),
        exit_code: run.status,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    if let Err(e) = write_atomic(&dir, "manifest.json", &text) {
        eprintln!("cannot write manifest: {e}");
        return ExitCode::from(3);
    }
    if !cli.quiet || run.status != 0 {
        for line in &run.summary {
            println!("{line}");
        }
    }
    ExitCode::from(run.status as u8)
}
