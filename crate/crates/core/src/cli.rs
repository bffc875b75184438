//! Command-line experiment runner.
//!
//! Exit codes: 0 success, 1 malformed config or arguments (nothing is
//! written), 2 numerical failure, 3 `validate` found failing criteria.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::acceptance;
use crate::asympt::{approx_ruin, pickands_sweep};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::montecarlo::{Estimator, RuinKind, RuinSimulation, Target, LOW_CONFIDENCE_ESS};
use crate::special::VarianceModel;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_CRITERIA: i32 = 3;

/// Environment variable that overrides the config seed.
pub const SEED_ENV: &str = "RUIN_SEED";

#[derive(Debug, Parser)]
#[command(
    name = "ruin",
    version,
    about = "Parisian and classical ruin probabilities for integrated Gaussian risk processes"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Worker threads (default: available parallelism). Results do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Table of σ²(t), its derivative and the closed form where known.
    Variance { config: PathBuf },
    /// Gaussian-tail approximation per initial reserve.
    Approx { config: PathBuf },
    /// Classical and Parisian ruin estimates per initial reserve.
    Simulate { config: PathBuf },
    /// Empirical against limiting conditional ruin-time law.
    Ruintime { config: PathBuf },
    /// Pickands- and Piterbarg-type constant estimates.
    Pickands { config: PathBuf },
    /// Runs the acceptance suite and prints one line per criterion.
    Validate,
}

/// Runs the CLI with `RUIN_SEED` taken from the environment.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let seed = std::env::var(SEED_ENV).ok();
    run_with_seed_override(args, seed.as_deref())
}

/// Runs the CLI with an explicit seed override string in place of the
/// environment.
pub fn run_with_seed_override<I, T>(args: I, seed_override: Option<&str>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.workers {
        if n == 0 {
            eprintln!("error: --workers must be at least 1");
            return EXIT_CONFIG;
        }
        builder = builder.num_threads(n);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return EXIT_NUMERICAL;
        }
    };
    pool.install(|| dispatch(&cli.command, seed_override))
}

fn dispatch(command: &Command, seed_override: Option<&str>) -> i32 {
    if let Command::Validate = command {
        let reports = acceptance::run_all();
        for r in &reports {
            println!("{r}");
        }
        let failed = reports.iter().filter(|r| !r.pass).count();
        println!(
            "{} of {} criteria passed",
            reports.len() - failed,
            reports.len()
        );
        return if failed == 0 { EXIT_OK } else { EXIT_CRITERIA };
    }
    let path = match command {
        Command::Variance { config }
        | Command::Approx { config }
        | Command::Simulate { config }
        | Command::Ruintime { config }
        | Command::Pickands { config } => config,
        Command::Validate => unreachable!(),
    };
    let config = match load_config(path, seed_override) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let (name, table) = match command {
        Command::Variance { .. } => ("variance", variance_table(&config)),
        Command::Approx { .. } => ("approx", approx_table(&config)),
        Command::Simulate { .. } => ("simulate", simulate_table(&config)),
        Command::Ruintime { .. } => ("ruintime", ruintime_table(&config)),
        Command::Pickands { .. } => ("pickands", pickands_table(&config)),
        Command::Validate => unreachable!(),
    };
    let table = match table {
        Ok(t) => t,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
        Err(e) => {
            eprintln!("numerical failure: {e}");
            return EXIT_NUMERICAL;
        }
    };
    match write_outputs(&config, name, &table) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: cannot write output: {e}");
            EXIT_NUMERICAL
        }
    }
}

/// Reads and validates a config, applying the seed override.
pub fn load_config(path: &Path, seed_override: Option<&str>) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut config = ExperimentConfig::from_json(&text)?;
    if let Some(s) = seed_override {
        config.seed = s.trim().parse().map_err(|_| {
            Error::Config(format!("{SEED_ENV} must be an unsigned integer, got {s:?}"))
        })?;
    }
    Ok(config)
}

#[derive(Serialize)]
struct Sidecar<'a> {
    subcommand: &'a str,
    config_hash: String,
    seed: u64,
    version: &'a str,
    output: &'a Path,
}

/// Path of the JSON sidecar next to a CSV output.
pub fn sidecar_path(output: &Path) -> PathBuf {
    if output.extension().is_some_and(|e| e == "json") {
        let mut name = output.as_os_str().to_owned();
        name.push(".meta.json");
        PathBuf::from(name)
    } else {
        output.with_extension("json")
    }
}

fn write_outputs(config: &ExperimentConfig, subcommand: &str, table: &str) -> std::io::Result<()> {
    if let Some(parent) = config.output.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(&config.output, table)?;
    let sidecar = Sidecar {
        subcommand,
        config_hash: config.hash(),
        seed: config.seed,
        version: env!("CARGO_PKG_VERSION"),
        output: &config.output,
    };
    let mut text = serde_json::to_string_pretty(&sidecar).map_err(std::io::Error::other)?;
    text.push('\n');
    std::fs::write(sidecar_path(&config.output), text)
}

/// Float in 17 significant digits.
fn f(v: f64) -> String {
    format!("{v:.16e}")
}

fn model(config: &ExperimentConfig) -> Result<VarianceModel> {
    VarianceModel::new(config.kernel.to_kernel()?, config.discount.clone())
}

pub fn variance_table(config: &ExperimentConfig) -> Result<String> {
    let model = model(config)?;
    let times = config.t_grid.clone().unwrap_or_else(|| {
        (1..=10)
            .map(|i| config.s_horizon * i as f64 / 10.0)
            .collect()
    });
    let mut out = String::from("t,sigma2,sigma2_derivative,closed_form\n");
    for t in times {
        let var = model.sigma2_quadrature(t)?;
        let deriv = if t > 0.0 {
            f(model.sigma2_derivative(t)?)
        } else {
            String::new()
        };
        let closed = model.closed_form(t).map(f).unwrap_or_default();
        writeln!(out, "{},{},{},{}", f(t), f(var), deriv, closed).expect("write to string");
    }
    Ok(out)
}

pub fn approx_table(config: &ExperimentConfig) -> Result<String> {
    let model = model(config)?;
    let mut out =
        String::from("u,t_u,g,psi_approx,log_psi_approx,log_scale_limit,ruin_time_rate\n");
    for &u in &config.u_values {
        let a = approx_ruin(&model, config.c, u, config.s_horizon)?;
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            f(u),
            f(config.window.t_u(u)),
            f(a.g),
            f(a.psi_approx),
            f(a.log_psi_approx),
            f(a.log_scale_limit),
            f(a.ruin_time_rate)
        )
        .expect("write to string");
    }
    Ok(out)
}

fn config_targets(config: &ExperimentConfig) -> Vec<Target> {
    config
        .u_values
        .iter()
        .map(|&u| Target {
            u,
            windows: vec![config.window.t_u(u)],
        })
        .collect()
}

pub fn simulate_table(config: &ExperimentConfig) -> Result<String> {
    let model = model(config)?;
    let sim = RuinSimulation::from_config(config)?;
    let targets = config_targets(config);
    let run = sim.run(&targets, config.estimator, config.reps, config.seed)?;
    let mut out = String::from(
        "u,t_u,kind,estimate,std_error,ci_low,ci_high,reps,effective_sample_size,seed,g,log_psi_approx,ratio\n",
    );
    for (k, t) in targets.iter().enumerate() {
        let a = approx_ruin(&model, config.c, t.u, config.s_horizon)?;
        for kind in [RuinKind::Classical, RuinKind::Parisian] {
            let e = run.estimate(k, 0, kind)?;
            let label = match kind {
                RuinKind::Classical => "classical",
                RuinKind::Parisian => "parisian",
            };
            if e.estimate == 0.0 && config.estimator == Estimator::Crude {
                eprintln!(
                    "warning: crude {label} estimate is 0 at u={} (g={:.3}); the event is too rare for {} replications, use estimator \"importance\"",
                    t.u, a.g, config.reps
                );
            } else if config.estimator == Estimator::Importance && e.ess_below(0.01) {
                eprintln!(
                    "warning: {label} estimate at u={} has effective sample size {:.1} (< 1% of {} replications)",
                    t.u, e.effective_sample_size, config.reps
                );
            }
            let ratio = if e.estimate > 0.0 {
                (e.estimate.ln() - a.log_psi_approx).exp()
            } else {
                0.0
            };
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                f(t.u),
                f(t.windows[0]),
                label,
                f(e.estimate),
                f(e.std_error),
                f(e.ci_low),
                f(e.ci_high),
                e.reps,
                f(e.effective_sample_size),
                e.seed,
                f(a.g),
                f(a.log_psi_approx),
                f(ratio)
            )
            .expect("write to string");
        }
    }
    Ok(out)
}

pub fn ruintime_table(config: &ExperimentConfig) -> Result<String> {
    let x_grid = config
        .x_grid
        .clone()
        .unwrap_or_else(|| (0..=20).map(|i| 0.05 * i as f64).collect());
    let model = model(config)?;
    let rate = model.ruin_time_rate(config.s_horizon)?;
    let sim = RuinSimulation::from_config(config)?;
    let targets = config_targets(config);
    let run = sim.run(&targets, Estimator::Importance, config.reps, config.seed)?;
    let mut out = String::from(
        "u,t_u,x,empirical_cdf,limit_cdf,sup_distance,conditional_ess,samples,low_confidence\n",
    );
    for k in 0..targets.len() {
        let r = run.ruin_time(k, 0, &x_grid, rate)?;
        if r.low_confidence {
            eprintln!(
                "warning: ruin-time law at u={} rests on an effective sample size of {:.1} (< {LOW_CONFIDENCE_ESS}); low confidence",
                r.u, r.conditional_ess
            );
        }
        for (i, &x) in r.x_grid.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                f(r.u),
                f(r.window),
                f(x),
                f(r.empirical[i]),
                f(r.limit[i]),
                f(r.sup_distance),
                f(r.conditional_ess),
                r.samples,
                r.low_confidence
            )
            .expect("write to string");
        }
    }
    Ok(out)
}

pub fn pickands_table(config: &ExperimentConfig) -> Result<String> {
    let spec = config.pickands.as_ref().ok_or_else(|| {
        Error::Config("the pickands subcommand needs a `pickands` section".into())
    })?;
    let mut out = String::from("alpha,horizon,drift,estimate,std_error,ci_low,ci_high,reps,seed\n");
    for &alpha in &spec.alphas {
        let run = pickands_sweep(
            alpha,
            &spec.horizons,
            &spec.drifts,
            config.reps,
            config.grid_n,
            config.seed,
        )?;
        for (h, &horizon) in spec.horizons.iter().enumerate() {
            for (q, &drift) in spec.drifts.iter().enumerate() {
                let e = run.estimate(h, q)?;
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{}",
                    f(alpha),
                    f(horizon),
                    f(drift),
                    f(e.estimate),
                    f(e.std_error),
                    f(e.ci_low),
                    f(e.ci_high),
                    e.reps,
                    e.seed
                )
                .expect("write to string");
            }
        }
    }
    Ok(out)
}
