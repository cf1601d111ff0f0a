//! `hardylab` — command-line runner for Hardy–Poincaré quotient experiments.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod plot;
mod run;
mod store;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use config::{parse_chart, parse_domain, parse_field, RunConfig, Task};
use store::{DirLock, Manifest, CSV_NAME};

#[derive(Parser, Debug)]
#[command(name = "hardylab", version, about = "Hardy–Poincaré quotients with a boundary singularity")]
struct Cli {
    /// Output directory (default: $HARDYLAB_OUT, else ./hardylab-out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Reuse stored results whose config hash matches (default).
    #[arg(long, global = true, overrides_with = "no_cache")]
    cache: bool,
    #[arg(long, global = true)]
    no_cache: bool,
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    quiet: bool,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Reserved; every algorithm is deterministic.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// μ^h along the refinement chain.
    Mu(ProblemArgs),
    /// μ^h over a list of λ on the finest mesh.
    Sweep(ProblemArgs),
    /// Bisection for the attainment threshold λ*_h on each level.
    LambdaStar(ProblemArgs),
    /// Quotients of a pushed-forward half-plane profile as ε ↓ 0.
    ScalingBound(ProblemArgs),
    /// Remainder constant of the local improved Hardy inequality.
    ImprovedHardy(ProblemArgs),
    /// μ₀^h of exterior caps over a list of radii.
    ExteriorScan(ProblemArgs),
    /// Sign scan of the barrier operator ratio.
    BarrierCheck(ProblemArgs),
    /// Mesh statistics along the refinement chain.
    MeshInfo(ProblemArgs),
    /// Runs a JSON config file.
    Run {
        config: PathBuf,
    },
    /// Built-in self-checks; exit 0 iff all pass.
    Verify {
        #[arg(value_enum, default_value = "all")]
        suite: verify::Suite,
    },
    /// SVG line plot of two CSV columns.
    Plot {
        csv: PathBuf,
        x: String,
        y: String,
        out: PathBuf,
        /// Horizontal reference line, e.g. at N²/4 = 1.
        #[arg(long)]
        reference: Option<f64>,
        #[arg(long)]
        title: Option<String>,
    },
}

#[derive(Args, Debug, Default)]
struct ProblemArgs {
    /// JSON config; the flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// half_disk | sector | fermi_half_ball | exterior_cap
    #[arg(long)]
    domain: Option<String>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    /// plane | sphere_exterior | sphere_interior
    #[arg(long)]
    chart: Option<String>,
    #[arg(long)]
    hole_radius: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    lambda: Option<f64>,
    /// Weight fields: one, r2, 1+r2, 1+x1 or a constant.
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    q: Option<String>,
    #[arg(long)]
    eta: Option<String>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Number of mesh levels (the base mesh counts as one).
    #[arg(long)]
    refine: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// Comma-separated sweep values.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    lambdas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    radii: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    a: Option<Vec<f64>>,
    #[arg(long = "k", value_delimiter = ',', allow_negative_numbers = true)]
    k: Option<Vec<f64>>,
    #[arg(long)]
    eps_detect: Option<f64>,
    #[arg(long)]
    bisect_tol: Option<f64>,
    #[arg(long, value_delimiter = ',', num_args = 2, allow_negative_numbers = true)]
    bracket: Option<Vec<f64>>,
    /// Leave out the distance term of the improved Hardy inequality.
    #[arg(long)]
    no_distance_term: bool,
    #[arg(long)]
    h_rel: Option<f64>,
    #[arg(long)]
    grid: Option<usize>,
}

impl ProblemArgs {
    fn into_config(self, task: Task) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("cannot read config {}", p.display()))?;
                RunConfig::from_json(&text, Some(task))?
            }
            None => RunConfig::defaults(task),
        };
        let chart = self.chart.as_deref().map(parse_chart).transpose()?;
        if let Some(ch) = chart {
            c.options.chart = ch;
        }
        if let Some(hr) = self.hole_radius {
            c.options.hole_radius = hr;
        }
        if self.domain.is_some() || self.r.is_some() || self.theta.is_some() {
            let kind = self.domain.clone().unwrap_or_else(|| c.domain.name().to_string());
            let r = self.r.unwrap_or(match &c.domain {
                hardylab::DomainSpec::HalfDisk { r }
                | hardylab::DomainSpec::Sector { r, .. }
                | hardylab::DomainSpec::FermiHalfBall { r, .. }
                | hardylab::DomainSpec::ExteriorCap { r, .. } => *r,
                hardylab::DomainSpec::Polygon { .. } => 0.5,
            });
            let theta = self.theta.or(match &c.domain {
                hardylab::DomainSpec::Sector { theta, .. } => Some(*theta),
                _ => None,
            });
            c.domain = parse_domain(&kind, r, theta, chart, c.options.hole_radius)?;
        }
        if let Some(l) = self.lambda {
            c.lambda = l;
        }
        if let Some(s) = &self.p {
            c.p = parse_field("p", s)?;
        }
        if let Some(s) = &self.q {
            c.q = parse_field("q", s)?;
        }
        if let Some(s) = &self.eta {
            c.eta = parse_field("eta", s)?;
        }
        if let Some(h) = self.h {
            c.mesh.h = h;
        }
        if let Some(b) = self.beta {
            c.mesh.beta = b;
        }
        if let Some(k) = self.refine {
            if k == 0 {
                bail!("invalid value for field `refine`: at least one mesh level is needed");
            }
            c.mesh.refinements = k - 1;
        }
        if let Some(t) = self.tol {
            c.solver.tol = t;
        }
        if let Some(v) = self.lambdas {
            c.sweep.lambda = v;
        }
        if let Some(v) = self.radii {
            c.sweep.r = v;
        }
        if let Some(v) = self.eps {
            c.sweep.eps = v;
        }
        if let Some(v) = self.a {
            c.sweep.a = v;
        }
        if let Some(v) = self.k {
            c.sweep.k = v;
        }
        if let Some(v) = self.eps_detect {
            c.options.eps_detect = v;
        }
        if let Some(v) = self.bisect_tol {
            c.options.bisect_tol = v;
        }
        if let Some(v) = self.bracket {
            c.options.bracket = [v[0], v[1]];
        }
        if self.no_distance_term {
            c.options.distance_term = false;
        }
        if let Some(v) = self.h_rel {
            c.options.h_rel = v;
        }
        if let Some(v) = self.grid {
            c.options.grid = v;
        }
        c.validate()?;
        Ok(c)
    }
}

struct Global {
    out: Option<PathBuf>,
    cache: bool,
    verbosity: i8,
}

fn say(g: &Global, msg: impl AsRef<str>) {
    if g.verbosity >= 0 {
        println!("{}", msg.as_ref());
    }
}

fn info(g: &Global, msg: impl AsRef<str>) {
    if g.verbosity > 0 {
        eprintln!("{}", msg.as_ref());
    }
}

fn execute_config(g: &Global, mut cfg: RunConfig) -> Result<()> {
    if g.out.is_some() {
        cfg.out = g.out.clone();
    }
    let cache = g.cache && cfg.cache;
    let out = store::resolve_out(cfg.out.clone());
    let _lock = DirLock::acquire(&out)?;
    let dir = store::run_dir(&out, &cfg);
    let hash = cfg.hash();
    info(g, format!("config hash {hash}"));
    if cache {
        if let Some(m) = store::lookup(&dir, &cfg) {
            say(g, format!("cache hit: {} ({} rows)", dir.join(&m.csv).display(), m.rows));
            return Ok(());
        }
    }
    let t0 = Instant::now();
    let res = run::execute(&cfg)?;
    let csv = res.to_csv()?;
    for w in &res.warnings {
        eprintln!("warning: {w}");
    }
    let manifest = Manifest {
        code_version: config::CODE_VERSION.into(),
        config_hash: hash,
        config: cfg,
        csv: CSV_NAME.into(),
        rows: res.rows.len(),
        columns: res.columns.clone(),
        wall_seconds: t0.elapsed().as_secs_f64(),
        warnings: res.warnings.clone(),
        result: res.result,
    };
    store::write_run(&dir, &manifest, &csv)?;
    say(g, format!("wrote {} ({} rows, {:.2} s)", dir.join(CSV_NAME).display(), manifest.rows, manifest.wall_seconds));
    if g.verbosity > 0 {
        eprint!("{}", String::from_utf8_lossy(&csv));
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    let g = Global {
        out: cli.out,
        cache: !cli.no_cache,
        verbosity: if cli.quiet { -1 } else { cli.verbose as i8 },
    };
    let _ = cli.seed;
    let (task, args) = match cli.command {
        Command::Verify { suite } => {
            let checks = verify::run(suite)?;
            let mut ok = true;
            for c in &checks {
                ok &= c.passed;
                if g.verbosity >= 0 || !c.passed {
                    println!("[{}] {}: {} — {}", if c.passed { "PASS" } else { "FAIL" }, c.suite, c.name, c.detail);
                }
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            say(&g, format!("{} checks, {failed} failed", checks.len()));
            return Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) });
        }
        Command::Plot { csv, x, y, out, reference, title } => {
            let pts = plot::read_columns(&csv, &x, &y)?;
            let title = title.unwrap_or_else(|| format!("{y} vs {x}"));
            let svg = plot::render(&pts, &x, &y, &title, reference)?;
            std::fs::write(&out, svg).with_context(|| format!("cannot write {}", out.display()))?;
            say(&g, format!("wrote {}", out.display()));
            return Ok(ExitCode::SUCCESS);
        }
        Command::Run { config } => {
            let text = std::fs::read_to_string(&config).with_context(|| format!("cannot read config {}", config.display()))?;
            let cfg = RunConfig::from_json(&text, None)?;
            execute_config(&g, cfg)?;
            return Ok(ExitCode::SUCCESS);
        }
        Command::Mu(a) => (Task::Mu, a),
        Command::Sweep(a) => (Task::Sweep, a),
        Command::LambdaStar(a) => (Task::LambdaStar, a),
        Command::ScalingBound(a) => (Task::ScalingBound, a),
        Command::ImprovedHardy(a) => (Task::ImprovedHardy, a),
        Command::ExteriorScan(a) => (Task::ExteriorScan, a),
        Command::BarrierCheck(a) => (Task::BarrierCheck, a),
        Command::MeshInfo(a) => (Task::MeshInfo, a),
    };
    let cfg = args.into_config(task)?;
    execute_config(&g, cfg)?;
    Ok(ExitCode::SUCCESS)
}

/// 2 for solver non-convergence, 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    let diverged = err
        .chain()
        .any(|e| matches!(e.downcast_ref::<hardylab::Error>(), Some(hardylab::Error::NotConverged { .. })));
    if diverged {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
