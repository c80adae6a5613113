use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use super::config::{ExperimentConfig, Method};
use super::gradcheck::gradcheck;
use super::scenarios::{complete, run_experiment, GRADCHECK_INSTANCES};
use crate::dataio::{load_grid_csv, write_grid_csv, GroundTruth, ObservationSet};
use crate::error::{Error, Result};
use crate::models::{query_many_with, ModelConfig, ModelKind};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "contin-sense", version, about = "Sparse spatiotemporal completion on a continuous timeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Complete a grid CSV and write the estimate.
    Complete {
        #[arg(long)]
        input: PathBuf,
        /// dmf, rnn-dmf, time-dmf, mc[:rank], knn-s[:k], gp[:shrinkage] or linear.
        #[arg(long)]
        method: Method,
        /// Model configuration JSON.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Optional `area_id,x,y` coordinates for knn-s.
        #[arg(long)]
        coords: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate full columns at arbitrary timestamps inside the span.
    Query {
        #[arg(long)]
        input: PathBuf,
        /// Query time in seconds; repeat for several.
        #[arg(long, required = true)]
        at: Vec<f64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "time-dmf")]
        model: ModelKind,
    },
    /// Run an experiment config and write its result files.
    Experiment {
        #[arg(long)]
        config: PathBuf,
    },
    /// Compare tape gradients with central finite differences.
    Gradcheck {
        #[arg(long)]
        model: ModelKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = GRADCHECK_INSTANCES)]
        instances: usize,
    },
}

/// Parses `args` (program name first), runs the command and returns the exit
/// code: 0 success, 1 configuration error, 2 runtime failure.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let informational = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            if informational {
                let _ = write!(out, "{}", e.render());
                return EXIT_OK;
            }
            let _ = write!(err, "{}", e.render());
            return EXIT_CONFIG;
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if e.is_config() {
                EXIT_CONFIG
            } else {
                EXIT_RUNTIME
            }
        }
    }
}

fn model_config(path: Option<&Path>) -> Result<ModelConfig> {
    let cfg = match path {
        None => ModelConfig::default(),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
    };
    cfg.validate()?;
    Ok(cfg)
}

fn load_observations(input: &Path, coords: Option<&Path>) -> Result<ObservationSet> {
    Ok(load_grid_csv(input, coords)?.into_observations())
}

#[derive(Serialize)]
struct CompleteReport<'a> {
    method: String,
    input: &'a Path,
    subareas: usize,
    columns: usize,
    observed: usize,
    epochs: Option<usize>,
    parameter_count: Option<usize>,
    flags: &'a [String],
}

fn dispatch(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let w = |e: std::io::Error| Error::io("<stdout>", e);
    match cmd {
        Command::Complete {
            input,
            method,
            config,
            coords,
            out: dir,
        } => {
            let cfg = model_config(config.as_deref())?;
            let obs = load_observations(&input, coords.as_deref())?;
            let c = complete(method, &obs, &cfg)?;
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let gt = GroundTruth::new(c.estimate, obs.times.clone(), obs.meta.clone())?;
            let est_path = dir.join("estimate.csv");
            write_grid_csv(&est_path, &gt)?;
            let report = CompleteReport {
                method: method.to_string(),
                input: &input,
                subareas: obs.n_subareas(),
                columns: obs.n_columns(),
                observed: obs.observed_count(),
                epochs: c.epochs,
                parameter_count: c.parameter_count,
                flags: &c.flags,
            };
            let rep_path = dir.join("report.json");
            let mut json = serde_json::to_vec_pretty(&report)?;
            json.push(b'\n');
            std::fs::write(&rep_path, json).map_err(|e| Error::io(&rep_path, e))?;
            writeln!(out, "wrote {}", est_path.display()).map_err(w)?;
            Ok(EXIT_OK)
        }
        Command::Query {
            input,
            at,
            config,
            model,
        } => {
            let cfg = model_config(config.as_deref())?;
            let obs = load_observations(&input, None)?;
            let res = query_many_with(&obs, &cfg, model, &at)?;
            let mut csv = csv::Writer::from_writer(Vec::new());
            let enc = |e: csv::Error| Error::Input(format!("csv encoding: {e}"));
            let mut header = vec!["time".to_string()];
            header.extend(obs.meta.area_ids.iter().cloned());
            csv.write_record(&header).map_err(enc)?;
            for (q, t) in at.iter().enumerate() {
                let mut row = vec![t.to_string()];
                row.extend(res.values.column(q).iter().map(|v| v.to_string()));
                csv.write_record(&row).map_err(enc)?;
            }
            let bytes = csv.into_inner().map_err(|e| Error::Input(format!("csv encoding: {e}")))?;
            out.write_all(&bytes).map_err(w)?;
            Ok(EXIT_OK)
        }
        Command::Experiment { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let res = run_experiment(&cfg)?;
            writeln!(
                out,
                "{} cells, {} failed; results in {}",
                res.records.len(),
                res.failures(),
                cfg.out_dir.display()
            )
            .map_err(w)?;
            for r in res.records.iter().filter(|r| r.failed()) {
                let _ = writeln!(
                    err,
                    "{} {} seed {}: {}",
                    r.method,
                    r.setting,
                    r.seed,
                    r.error.as_deref().unwrap_or_default()
                );
            }
            Ok(if res.failures() == 0 { EXIT_OK } else { EXIT_RUNTIME })
        }
        Command::Gradcheck { model, seed, instances } => {
            if instances == 0 {
                return Err(Error::Config("instances must be at least 1".into()));
            }
            let rep = gradcheck(model, seed, instances)?;
            writeln!(
                out,
                "{model} seed {seed}: max relative error {:e}, largest absolute gap {:e}, over {} instances ({} coordinates)",
                rep.max_rel_error, rep.max_abs_error, rep.instances, rep.coordinates
            )
            .map_err(w)?;
            if rep.passed() {
                Ok(EXIT_OK)
            } else {
                let _ = writeln!(err, "gradient check failed");
                Ok(EXIT_RUNTIME)
            }
        }
    }
}
