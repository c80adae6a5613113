use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{mode_label, DatasetSource, ExperimentConfig, Method, Scenario};
use super::emit::emit_results;
use super::gradcheck::{gradcheck, GRADCHECK_TOL};
use super::metrics::{epsilon_metric, rmse};
use crate::baselines::{gp_complete, knn_s_complete, linear_predict_many, mc_complete, GpConfig, McConfig, SpatialIndex};
use crate::dataio::{
    delete_columns, discretize_merge, generate_synthetic, load_grid_csv, mask_columns, GridData, GroundTruth,
    MaskMode, MaskSpec, ObservationSet,
};
use crate::error::{Error, Result};
use crate::models::{query_many_with, train, ModelConfig, ModelKind};
use crate::numkit::DenseMatrix;

/// Held-out timestamps per generation cell.
pub const GENERATION_QUERIES: usize = 20;
/// Random instances per gradcheck cell.
pub const GRADCHECK_INSTANCES: usize = 20;
/// Environment variable capping the number of cells run in parallel.
pub const THREADS_ENV: &str = "CONTIN_SENSE_THREADS";

pub const EVALUATION: &str = "rmse over cells outside the sensing mask; epsilon = sum of absolute differences over all cells";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub scenario: Scenario,
    pub dataset: String,
    pub method: String,
    pub setting: String,
    pub seed: u64,
    pub rmse: Option<f64>,
    pub epsilon: Option<f64>,
    pub epochs: Option<usize>,
    pub wall_ms: f64,
    pub parameter_count: Option<usize>,
    /// Gradcheck cells only.
    pub max_rel_error: Option<f64>,
    pub flags: Vec<String>,
    /// Set when the cell failed; metrics are then absent.
    pub error: Option<String>,
}

impl CellRecord {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub evaluation: String,
    pub records: Vec<CellRecord>,
}

impl ExperimentResult {
    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| r.failed()).count()
    }

    /// Records of one method and setting, in seed order.
    pub fn select(&self, method: &str, setting: &str) -> Vec<&CellRecord> {
        self.records
            .iter()
            .filter(|r| r.method == method && r.setting == setting)
            .collect()
    }
}

/// One (method, setting, seed) cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub method: Method,
    pub setting: Setting,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Setting {
    Mask(MaskMode),
    Delete(f64),
    Queries(usize),
    Instances(usize),
}

impl Setting {
    pub fn label(&self) -> String {
        match *self {
            Setting::Mask(m) => mode_label(m),
            Setting::Delete(r) => format!("delete={r}"),
            Setting::Queries(q) => format!("queries={q}"),
            Setting::Instances(n) => format!("instances={n}"),
        }
    }
}

/// Loaded dataset shared by every cell.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub name: String,
    pub truth: Option<GroundTruth>,
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let truth = match &cfg.dataset {
        None => None,
        Some(DatasetSource::Synthetic(spec)) => Some(generate_synthetic(spec)?),
        Some(DatasetSource::Path(p)) => match load_grid_csv(p, None)? {
            GridData::Complete(gt) => Some(gt),
            GridData::Sparse(_) => {
                return Err(Error::Config(format!(
                    "{} has missing cells; experiments need a complete grid as ground truth",
                    p.display()
                )))
            }
        },
    };
    let name = truth.as_ref().map(|g| g.meta.name.clone()).unwrap_or_else(|| "random".into());
    Ok(Prepared { name, truth })
}

/// Every cell of the experiment in emission order: settings, then methods,
/// then seeds.
pub fn cells(cfg: &ExperimentConfig) -> Result<Vec<Cell>> {
    let modes = cfg.mask.modes()?;
    let settings: Vec<Setting> = match cfg.scenario {
        Scenario::SparsitySweep => modes.iter().map(|&m| Setting::Mask(m)).collect(),
        Scenario::DeletionAblation => cfg.delete_ratios.iter().map(|&r| Setting::Delete(r)).collect(),
        Scenario::DiscreteVsContinuous if cfg.delete_ratios.is_empty() => vec![Setting::Delete(0.0)],
        Scenario::DiscreteVsContinuous => cfg.delete_ratios.iter().map(|&r| Setting::Delete(r)).collect(),
        Scenario::Generation => vec![Setting::Queries(GENERATION_QUERIES)],
        Scenario::Gradcheck => vec![Setting::Instances(GRADCHECK_INSTANCES)],
    };
    let mut out = Vec::new();
    for &setting in &settings {
        for &method in &cfg.methods {
            for &seed in &cfg.seeds {
                out.push(Cell { method, setting, seed });
            }
        }
    }
    Ok(out)
}

/// Worker threads for the cell pool: `CONTIN_SENSE_THREADS` when set to a
/// positive integer, otherwise rayon's default.
pub fn thread_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(rayon::current_num_threads)
}

/// Runs every cell, writes the result files into `cfg.out_dir`, and returns
/// the records. Cell failures are recorded and do not stop the run.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let res = run_cells(cfg)?;
    emit_results(&res, &cfg.out_dir)?;
    Ok(res)
}

/// [`run_experiment`] without writing files.
pub fn run_cells(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let data = prepare(cfg)?;
    let cells = cells(cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count())
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let records = pool.install(|| cells.par_iter().map(|c| run_cell(cfg, &data, c)).collect());
    Ok(ExperimentResult {
        config: cfg.clone(),
        evaluation: EVALUATION.into(),
        records,
    })
}

/// Output of one cell before it becomes a record.
#[derive(Debug, Default)]
struct Outcome {
    rmse: Option<f64>,
    epsilon: Option<f64>,
    epochs: Option<usize>,
    parameter_count: Option<usize>,
    max_rel_error: Option<f64>,
    flags: Vec<String>,
}

/// Runs one cell in isolation; depends only on the config, the dataset and
/// the cell itself.
pub fn run_cell(cfg: &ExperimentConfig, data: &Prepared, cell: &Cell) -> CellRecord {
    let start = Instant::now();
    let outcome = run_outcome(cfg, data, cell);
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    let mut rec = CellRecord {
        scenario: cfg.scenario,
        dataset: data.name.clone(),
        method: cell.method.to_string(),
        setting: cell.setting.label(),
        seed: cell.seed,
        rmse: None,
        epsilon: None,
        epochs: None,
        wall_ms,
        parameter_count: None,
        max_rel_error: None,
        flags: Vec::new(),
        error: None,
    };
    match outcome {
        Ok(o) => {
            rec.rmse = o.rmse;
            rec.epsilon = o.epsilon;
            rec.epochs = o.epochs;
            rec.parameter_count = o.parameter_count;
            rec.max_rel_error = o.max_rel_error;
            rec.flags = o.flags;
        }
        Err(e) => rec.error = Some(e.to_string()),
    }
    rec
}

fn truth(data: &Prepared) -> Result<&GroundTruth> {
    data.truth
        .as_ref()
        .ok_or_else(|| Error::Config("scenario needs a dataset".into()))
}

fn single_mode(cfg: &ExperimentConfig) -> Result<MaskMode> {
    Ok(cfg.mask.modes()?[0])
}

fn run_outcome(cfg: &ExperimentConfig, data: &Prepared, cell: &Cell) -> Result<Outcome> {
    let seed = cell.seed;
    let model_cfg = cfg.model.to_config(seed);
    match (cfg.scenario, cell.setting) {
        (Scenario::Gradcheck, Setting::Instances(n)) => {
            let kind = cell
                .method
                .model_kind()
                .ok_or_else(|| Error::Config("gradcheck accepts model methods only".into()))?;
            let rep = gradcheck(kind, seed, n)?;
            let mut flags = Vec::new();
            if !rep.passed() {
                flags.push(format!("max relative error above {GRADCHECK_TOL}"));
            }
            Ok(Outcome {
                max_rel_error: Some(rep.max_rel_error),
                flags,
                ..Default::default()
            })
        }
        (Scenario::SparsitySweep, Setting::Mask(mode)) => {
            let gt = truth(data)?;
            let obs = mask_columns(gt, &MaskSpec { mode, seed })?;
            completion_outcome(cell.method, &obs, gt, &model_cfg)
        }
        (Scenario::DeletionAblation, Setting::Delete(ratio)) => {
            let gt = delete_columns(truth(data)?, ratio, seed)?;
            let obs = mask_columns(&gt, &MaskSpec::new(single_mode(cfg)?, seed))?;
            completion_outcome(cell.method, &obs, &gt, &model_cfg)
        }
        (Scenario::DiscreteVsContinuous, Setting::Delete(ratio)) => {
            let gt = delete_columns(truth(data)?, ratio, seed)?;
            let obs = mask_columns(&gt, &MaskSpec::new(single_mode(cfg)?, seed))?;
            let unit = cfg
                .unit_length_seconds
                .ok_or_else(|| Error::Config("unit_length_seconds missing".into()))?;
            if cell.method == Method::Model(ModelKind::TimeDmf) {
                completion_outcome(cell.method, &obs, &gt, &model_cfg)
            } else {
                let merged = discretize_merge(&obs, unit)?;
                let merged_obs = merged.to_observation_set(&obs);
                let mut c = complete(cell.method, &merged_obs, &model_cfg)?;
                c.estimate = merged.expand(&c.estimate);
                c.flags.push(format!("merged into {} units of {unit} s", merged.units));
                score(c, &obs, &gt)
            }
        }
        (Scenario::Generation, Setting::Queries(q)) => generation_outcome(cfg, data, cell, q, &model_cfg),
        (s, setting) => Err(Error::Config(format!("setting {} does not belong to {s}", setting.label()))),
    }
}

/// Estimate on the instance's own columns plus bookkeeping.
#[derive(Debug)]
pub struct Completion {
    pub estimate: DenseMatrix,
    pub epochs: Option<usize>,
    pub parameter_count: Option<usize>,
    pub flags: Vec<String>,
}

/// Completes `obs` with any method.
pub fn complete(method: Method, obs: &ObservationSet, model_cfg: &ModelConfig) -> Result<Completion> {
    match method {
        Method::Model(kind) => {
            let r = train(obs, model_cfg, kind)?;
            let mut flags = Vec::new();
            if !r.report.converged {
                flags.push(format!("stopped at max_epochs {}", model_cfg.max_epochs));
            }
            Ok(Completion {
                estimate: r.estimate,
                epochs: Some(r.report.epochs),
                parameter_count: Some(r.report.parameter_count),
                flags,
            })
        }
        Method::Mc { rank } => {
            let r = mc_complete(
                obs,
                rank,
                &McConfig {
                    seed: model_cfg.seed,
                    ..Default::default()
                },
            )?;
            Ok(Completion {
                estimate: r.estimate,
                epochs: Some(r.report.epochs),
                parameter_count: Some(rank * (obs.n_subareas() + obs.n_columns())),
                flags: r.report.flags,
            })
        }
        Method::KnnS { k } => {
            let r = knn_s_complete(obs, k, &SpatialIndex::for_instance(obs))?;
            Ok(Completion {
                estimate: r.estimate,
                epochs: None,
                parameter_count: None,
                flags: r.report.flags,
            })
        }
        Method::Gp { shrinkage } => {
            let r = gp_complete(
                obs,
                &GpConfig {
                    shrinkage,
                    ..Default::default()
                },
            )?;
            Ok(Completion {
                estimate: r.estimate,
                epochs: None,
                parameter_count: None,
                flags: r.report.flags,
            })
        }
        Method::Linear => {
            let p = linear_predict_many(obs, &obs.times)?;
            let mut estimate = p.values;
            for i in 0..obs.n_subareas() {
                for j in 0..obs.n_columns() {
                    if obs.is_observed(i, j) {
                        estimate[(i, j)] = obs.values[(i, j)];
                    }
                }
            }
            let flags = p
                .flagged
                .iter()
                .map(|i| format!("subarea {i} has fewer than 2 observations; mean used"))
                .collect();
            Ok(Completion {
                estimate,
                epochs: None,
                parameter_count: None,
                flags,
            })
        }
    }
}

fn score(c: Completion, obs: &ObservationSet, gt: &GroundTruth) -> Result<Outcome> {
    Ok(Outcome {
        rmse: Some(rmse(&c.estimate, &gt.values, &obs.unobserved_mask())?),
        epsilon: Some(epsilon_metric(&c.estimate, &gt.values)?),
        epochs: c.epochs,
        parameter_count: c.parameter_count,
        max_rel_error: None,
        flags: c.flags,
    })
}

fn completion_outcome(method: Method, obs: &ObservationSet, gt: &GroundTruth, model_cfg: &ModelConfig) -> Result<Outcome> {
    let c = complete(method, obs, model_cfg)?;
    score(c, obs, gt)
}

/// Interior columns held out for generation, sorted.
pub fn held_out_columns(m: usize, q: usize, seed: u64) -> Result<Vec<usize>> {
    if m < q + 2 {
        return Err(Error::Config(format!("generation needs at least {} columns, got {m}", q + 2)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_9e4e);
    let mut picked: Vec<usize> = crate::dataio::sample_indices(&mut rng, m - 2, q)
        .into_iter()
        .map(|j| j + 1)
        .collect();
    picked.sort_unstable();
    Ok(picked)
}

fn generation_outcome(
    cfg: &ExperimentConfig,
    data: &Prepared,
    cell: &Cell,
    q: usize,
    model_cfg: &ModelConfig,
) -> Result<Outcome> {
    let gt = truth(data)?;
    let held = held_out_columns(gt.n_columns(), q, cell.seed)?;
    let keep: Vec<usize> = (0..gt.n_columns()).filter(|j| held.binary_search(j).is_err()).collect();
    let train_gt = gt.select_columns(&keep);
    let obs = mask_columns(&train_gt, &MaskSpec::new(single_mode(cfg)?, cell.seed))?;
    let ts: Vec<f64> = held.iter().map(|&j| gt.times[j]).collect();
    let truth_cols = gt.values.select_columns(&held);
    let (estimate, epochs, parameter_count, flags) = match cell.method {
        Method::Model(kind) => {
            let r = query_many_with(&obs, model_cfg, kind, &ts)?;
            (r.values, Some(r.report.epochs), Some(r.report.parameter_count), Vec::new())
        }
        Method::Linear => {
            let p = linear_predict_many(&obs, &ts)?;
            let flags = p.flagged.iter().map(|i| format!("subarea {i}: mean used")).collect();
            (p.values, None, None, flags)
        }
        other => return Err(Error::Config(format!("{other} cannot generate unseen timestamps"))),
    };
    let all = DenseMatrix::filled(truth_cols.rows(), truth_cols.cols(), 1.0);
    Ok(Outcome {
        rmse: Some(rmse(&estimate, &truth_cols, &all)?),
        epsilon: Some(epsilon_metric(&estimate, &truth_cols)?),
        epochs,
        parameter_count,
        max_rel_error: None,
        flags,
    })
}
