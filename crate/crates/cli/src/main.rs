//! `l1priv`: designs disclosure mechanisms from a JSON run configuration.
//!
//! Exit status: 0 success, 2 configuration error, 3 infeasible or
//! out-of-scope instance, 4 internal numerical failure.

mod config;
mod run;
mod table;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use l1priv::lp::RECOVERY_TOL;
use l1priv::tol::TOL_PRIVACY;
use l1priv::watermark::{watermark_instance, WatermarkParams};
use l1priv::{check_privacy, Distribution, ErrorKind, LogBase, Mechanism, SolverRegistry};
use serde::Serialize;
use thiserror::Error;

use config::{Alphas, Num, RunConfig, SolverChoice};
use run::{range_report, run_plan, Plan, RunDocument};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: l1priv::Error,
    },
    #[error("rejected: {0}")]
    Rejected(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core { source, .. } => match source.kind() {
                ErrorKind::Input => 2,
                ErrorKind::OutOfScope => 3,
                ErrorKind::Numerical => 4,
            },
            CliError::Rejected(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

#[derive(Parser)]
#[command(name = "l1priv", version, about = "Disclosure mechanisms under a per-letter l1 privacy constraint")]
struct Cli {
    /// Worker threads for sweeps and searches (0 = one per core).
    #[arg(long, global = true, env = "L1PRIV_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a single (instance, epsilon) point.
    Solve(RunArgs),
    /// Sweep epsilon on one instance.
    SweepEps(RunArgs),
    /// Sweep the watermark parameter at one epsilon.
    SweepAlpha(RunArgs),
    /// Compare the approximate design with the exhaustive oracle.
    Oracle {
        #[command(flatten)]
        run: RunArgs,
        /// Also evaluate the l1/chi-square sandwich at every point.
        #[arg(long)]
        sandwich: bool,
    },
    /// Report index sets, base points and the epsilon validity range.
    EpsRange(RunArgs),
    /// Check a config, and optionally a mechanism file against it.
    Validate {
        #[command(flatten)]
        run: RunArgs,
        /// JSON with `p_u` and `posteriors` (one row per output symbol).
        #[arg(long)]
        mechanism: Option<PathBuf>,
    },
    /// Print a watermark instance as an instance file.
    Watermark {
        #[arg(long)]
        alpha: String,
        #[arg(long, default_value = "e")]
        log_base: String,
    },
}

/// Flags override the matching config fields.
#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    solver: Option<String>,
    /// Replaces `epsilon` and `epsilon_sweep`.
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long)]
    log_base: Option<String>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    force_hxy: bool,
    #[arg(long)]
    combination_cap: Option<u64>,
    #[arg(long)]
    ordered: bool,
}

fn parse_log_base(text: &str) -> Result<LogBase, CliError> {
    serde_json::from_value(serde_json::Value::String(text.into()))
        .map_err(|_| CliError::Config(format!("log_base: expected \"2\" or \"e\", got '{text}'")))
}

impl RunArgs {
    /// `threads` comes from the command line or environment and wins over the config.
    fn load(&self, threads: Option<usize>) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::load(&self.config)?;
        cfg.threads = threads.or(cfg.threads);
        if let Some(s) = &self.solver {
            cfg.solver = SolverChoice(s.clone());
        }
        if let Some(e) = &self.epsilon {
            cfg.epsilon = Some(Num(Num::parse(e).map_err(|m| CliError::Config(format!("--epsilon: {m}")))?));
            cfg.epsilon_sweep = None;
        }
        if let Some(b) = &self.log_base {
            cfg.log_base = parse_log_base(b)?;
        }
        if let Some(o) = &self.output {
            cfg.output = Some(o.clone());
        }
        cfg.force_hxy |= self.force_hxy;
        cfg.ordered |= self.ordered;
        if let Some(cap) = self.combination_cap {
            cfg.combination_cap = Some(cap);
        }
        Ok(cfg)
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn write_outputs(dir: &Path, files: &[(&str, &str)]) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    for (name, contents) in files {
        fs::write(dir.join(name), contents)?;
    }
    Ok(())
}

#[derive(Clone, Copy, PartialEq)]
enum Shape {
    Single,
    EpsilonSweep,
    AlphaSweep,
    Any,
}

fn check_shape(cfg: &RunConfig, shape: Shape) -> Result<(), CliError> {
    let alpha_list = matches!(&cfg.alpha, Some(Alphas::Many(v)) if v.len() > 1);
    match shape {
        Shape::Single if cfg.epsilon_sweep.is_some() || alpha_list => Err(CliError::Config(
            "solve takes one instance and one epsilon; use sweep-eps or sweep-alpha".into(),
        )),
        Shape::EpsilonSweep if cfg.epsilon_sweep.is_none() || alpha_list => Err(CliError::Config(
            "sweep-eps needs epsilon_sweep and a single instance".into(),
        )),
        Shape::AlphaSweep if cfg.alpha.is_none() || cfg.epsilon_sweep.is_some() => Err(CliError::Config(
            "sweep-alpha needs a watermark alpha list and a single epsilon".into(),
        )),
        _ => Ok(()),
    }
}

fn run_command(name: &str, cfg: &RunConfig, shape: Shape, configure: impl FnOnce(&mut Plan)) -> Result<(), CliError> {
    check_shape(cfg, shape)?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("threads: {e}")))?;
    }
    let registry = SolverRegistry::with_builtins();
    let mut plan = Plan::from_config(cfg, &registry)?;
    configure(&mut plan);
    let (points, rows) = run_plan(&plan, &registry)?;
    let csv = table::render(&rows);
    if let Some(dir) = &cfg.output {
        let doc = RunDocument {
            command: name,
            config: cfg,
            points,
        };
        write_outputs(dir, &[("result.json", &to_json(&doc)), ("table.csv", &csv)])?;
    }
    print!("{csv}");
    Ok(())
}

fn eps_range(cfg: &RunConfig) -> Result<(), CliError> {
    let reports = cfg
        .instances()?
        .iter()
        .map(range_report)
        .collect::<Result<Vec<_>, _>>()?;
    let text = to_json(&reports);
    if let Some(dir) = &cfg.output {
        write_outputs(dir, &[("eps_range.json", &text)])?;
    }
    print!("{text}");
    Ok(())
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct MechanismFile {
    p_u: Vec<Num>,
    posteriors: Vec<Vec<Num>>,
}

fn validate(cfg: &RunConfig, mechanism: Option<&Path>) -> Result<(), CliError> {
    let registry = SolverRegistry::with_builtins();
    let plan = Plan::from_config(cfg, &registry)?;
    let source = cfg.source()?;
    println!(
        "config ok: {source}, {} instance(s), {} epsilon value(s), solvers {}",
        plan.instances.len(),
        plan.epsilons.len(),
        plan.solvers.join(",")
    );
    let Some(path) = mechanism else {
        return Ok(());
    };
    let [eps] = plan.epsilons.as_slice() else {
        return Err(CliError::Config("mechanism checks need a single epsilon".into()));
    };
    if plan.instances.len() != 1 {
        return Err(CliError::Config("mechanism checks need a single instance".into()));
    }
    let inst = &plan.instances[0].instance;
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let file: MechanismFile =
        config::parse_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mech_err = |e| CliError::Config(format!("{}: {e}", path.display()));
    let p_u = Distribution::new(file.p_u.iter().map(|n| n.0).collect()).map_err(mech_err)?;
    let posteriors = file
        .posteriors
        .iter()
        .map(|row| Distribution::new(row.iter().map(|n| n.0).collect()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(mech_err)?;
    let mechanism = Mechanism::from_posteriors(inst, p_u, posteriors, *eps).map_err(mech_err)?;
    let report = check_privacy(&mechanism, inst, eps + TOL_PRIVACY);
    print!("{}", to_json(&report));
    mechanism
        .validate(inst, *eps, RECOVERY_TOL)
        .map_err(|e| CliError::Rejected(e.to_string()))?;
    if !report.passes {
        return Err(CliError::Rejected(format!(
            "outputs {:?} exceed epsilon {eps}",
            report.violating
        )));
    }
    println!("mechanism ok");
    Ok(())
}

#[derive(Serialize)]
struct InstanceDoc {
    p_x_given_y: Vec<Vec<f64>>,
    p_y: Vec<f64>,
    x_values: Vec<f64>,
    y_values: Vec<f64>,
}

fn watermark(alpha: &str, log_base: &str) -> Result<(), CliError> {
    let alpha = Num::parse(alpha).map_err(|m| CliError::Config(format!("--alpha: {m}")))?;
    let params = WatermarkParams::new(alpha).map_err(|e| CliError::Config(format!("--alpha: {e}")))?;
    let wm = watermark_instance(params, parse_log_base(log_base)?).map_err(|e| CliError::Core {
        context: format!("watermark alpha {alpha}"),
        source: e,
    })?;
    let inst = &wm.instance;
    let doc = InstanceDoc {
        p_x_given_y: inst.leakage().rows(),
        p_y: inst.p_y().probs().to_vec(),
        x_values: inst.x_values.clone().unwrap_or_default(),
        y_values: inst.y_values.clone().unwrap_or_default(),
    };
    print!("{}", to_json(&doc));
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let t = cli.threads;
    match cli.command {
        Command::Solve(a) => run_command("solve", &a.load(t)?, Shape::Single, |_| {}),
        Command::SweepEps(a) => run_command("sweep-eps", &a.load(t)?, Shape::EpsilonSweep, |_| {}),
        Command::SweepAlpha(a) => run_command("sweep-alpha", &a.load(t)?, Shape::AlphaSweep, |_| {}),
        Command::Oracle { run, sandwich } => {
            let mut cfg = run.load(t)?;
            if run.solver.is_none() {
                cfg.solver = SolverChoice("oracle".into());
            }
            run_command("oracle", &cfg, Shape::Any, |plan| {
                for name in ["oracle", "approx"] {
                    if !plan.solvers.iter().any(|s| s == name) {
                        plan.solvers.insert(0, name.into());
                    }
                }
                plan.sandwich = sandwich;
            })
        }
        Command::EpsRange(a) => eps_range(&a.load(t)?),
        Command::Validate { run, mechanism } => validate(&run.load(t)?, mechanism.as_deref()),
        Command::Watermark { alpha, log_base } => watermark(&alpha, &log_base),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
