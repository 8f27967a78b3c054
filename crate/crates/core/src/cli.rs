//! Command-line front end. Progress goes to stderr; each command prints one
//! JSON summary line on stdout. Exit codes: 0 success, 1 configuration or
//! input error, 2 numeric failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;
use serde_json::{json, Value};

use crate::commutator::{calibrate_coefficient, CalibrationConfig};
use crate::error::{Error, Result};
use crate::experiments::{
    load_value, resolve_output_dir, run_experiment, scan_stored_trajectory, ExperimentConfig, ExperimentKind,
};

pub const OUTPUT_DIR_ENV: &str = "MIXFLOW_OUTPUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "mixflow", version, about = "Training-order effects in multi-domain gradient flows")]
pub struct Cli {
    /// Only log warnings and errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Experiment config (JSON).
    pub config: PathBuf,
    /// Override a config value, e.g. `--set num_seeds=10` or `--set gd.learning_rate=0.05`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment and write its CSVs and manifest.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(short, long, env = OUTPUT_DIR_ENV)]
        output_dir: Option<PathBuf>,
        /// Overwrite an existing manifest.
        #[arg(long)]
        force: bool,
    },
    /// Check a config (or the config echoed in a manifest) without running it.
    ValidateConfig {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// List experiment names.
    ListExperiments,
    /// Scan a stored trajectory (from an `optimality_scan` run) for improvable reorderings.
    Scan {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Directory holding trajectory.csv and trajectory.gcm.
        #[arg(long)]
        trajectory_dir: PathBuf,
        /// Where to write violations.csv (default: the trajectory directory).
        #[arg(short, long)]
        output_dir: Option<PathBuf>,
    },
    /// Fit the excess-loss coefficient on random quadratic pairs.
    Calibrate {
        /// Calibration settings (JSON); defaults when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Numeric { .. } | Error::Internal(_) => 2,
        _ => 1,
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Argument(_) => "argument",
        Error::Numeric { .. } => "numeric",
        Error::Unsupported(_) => "unsupported",
        Error::Config(_) => "config",
        Error::Io { .. } => "io",
        Error::Internal(_) => "internal",
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = if cli.quiet { "warn" } else { "info" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    match execute(&cli.command) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            println!(
                "{}",
                json!({"status": "error", "kind": error_kind(&e), "message": e.to_string()})
            );
            exit_code(&e)
        }
    }
}

/// A manifest's echoed config, or the file itself.
fn config_value(args: &ConfigArgs) -> Result<Value> {
    let mut value = load_value(&args.config, &[])?;
    if value.get("outputs").is_some() {
        if let Some(inner) = value.get_mut("config") {
            value = inner.take();
        }
    }
    for o in &args.overrides {
        crate::experiments::apply_override(&mut value, o)?;
    }
    Ok(value)
}

fn default_output(experiment: ExperimentKind) -> PathBuf {
    Path::new("out").join(experiment.name())
}

pub fn execute(cmd: &Command) -> Result<Value> {
    match cmd {
        Command::Run { cfg, output_dir, force } => {
            let config = ExperimentConfig::from_value(config_value(cfg)?)?;
            let dir = resolve_output_dir(output_dir.clone(), &config, default_output(config.experiment));
            info!("running {} into {}", config.experiment, dir.display());
            let manifest = run_experiment(&config, &dir, *force)?;
            Ok(json!({
                "status": "ok",
                "experiment": manifest.experiment,
                "output_dir": dir,
                "outputs": manifest.outputs,
                "summary": manifest.summary,
            }))
        }
        Command::ValidateConfig { cfg } => {
            let config = ExperimentConfig::from_value(config_value(cfg)?)?;
            Ok(json!({"status": "valid", "experiment": config.experiment.name()}))
        }
        Command::ListExperiments => {
            for k in ExperimentKind::ALL {
                eprintln!("{:<18} {}", k.name(), k.description());
            }
            Ok(json!({"status": "ok", "experiments": ExperimentKind::names()}))
        }
        Command::Scan {
            cfg,
            trajectory_dir,
            output_dir,
        } => {
            let config = ExperimentConfig::from_value(config_value(cfg)?)?;
            if config.experiment != ExperimentKind::OptimalityScan {
                return Err(Error::Config(format!(
                    "scan needs an optimality_scan config, got {}",
                    config.experiment
                )));
            }
            let out = output_dir.clone().unwrap_or_else(|| trajectory_dir.clone());
            let (_, summary) = scan_stored_trajectory(&config, trajectory_dir, &out)?;
            info!("{} violations in {} records", summary.violations, summary.records);
            Ok(json!({"status": "ok", "output_dir": out, "scan": summary}))
        }
        Command::Calibrate { config, overrides } => {
            let mut value = match config {
                Some(p) => load_value(p, &[])?,
                None => serde_json::to_value(CalibrationConfig::default()).expect("serializable"),
            };
            for o in overrides {
                crate::experiments::apply_override(&mut value, o)?;
            }
            let cfg: CalibrationConfig =
                serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
            let rep = calibrate_coefficient(&cfg)?;
            for (eps, r) in rep.eps_values.iter().zip(rep.median_ratios) {
                eprintln!("eps = {eps:e}: median ratio at c = 1 is {r:.6}");
            }
            eprintln!("fitted coefficient c = {:.3}", rep.coefficient);
            Ok(json!({"status": "ok", "calibration": rep}))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numeric_errors_exit_with_two() {
        assert_eq!(exit_code(&Error::numeric("nan")), 2);
        assert_eq!(exit_code(&Error::Config("x".into())), 1);
        assert_eq!(exit_code(&Error::arg("x")), 1);
    }

    #[test]
    fn parses_every_subcommand() {
        for args in [
            vec!["mixflow", "run", "c.json", "--set", "seed=3", "--force"],
            vec!["mixflow", "validate-config", "c.json"],
            vec!["mixflow", "list-experiments"],
            vec!["mixflow", "scan", "c.json", "--trajectory-dir", "d"],
            vec!["mixflow", "calibrate", "--set", "num_seeds=3"],
        ] {
            Cli::try_parse_from(args.clone()).unwrap_or_else(|e| panic!("{args:?}: {e}"));
        }
    }
}
