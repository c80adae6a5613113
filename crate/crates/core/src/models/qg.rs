//! Query-generate: estimates at timestamps that have no column yet.

use super::config::{ModelConfig, ModelKind};
use super::encoder::LatentPath;
use super::model::{insertion_index, Model};
use super::train::{fit, TrainingReport};
use crate::dataio::{normalize, ObservationSet, SENTINEL};
use crate::error::{Error, Result};
use crate::numkit::DenseMatrix;

/// Instance and latent path after inserting a query column.
#[derive(Debug, Clone, PartialEq)]
pub struct Insertion {
    pub obs: ObservationSet,
    pub path: LatentPath,
    pub index: usize,
    /// False when the timestamp already existed and nothing changed.
    pub inserted: bool,
}

/// Inserts an empty column (all-zero mask, sentinel values) at the sorted
/// position of `t_query` and the vector `latent` at the same index of the
/// path. An existing timestamp returns its index unchanged.
pub fn qg_insert(obs: &ObservationSet, path: &LatentPath, t_query: f64, latent: &[f64]) -> Result<Insertion> {
    if path.len() != obs.n_columns() {
        return Err(Error::Dimension {
            op: "qg_insert",
            lhs: obs.values.shape(),
            rhs: path.x.shape(),
        });
    }
    if let Some(index) = obs.times.iter().position(|&t| t == t_query) {
        return Ok(Insertion {
            obs: obs.clone(),
            path: path.clone(),
            index,
            inserted: false,
        });
    }
    if latent.len() != path.x.rows() {
        return Err(Error::Dimension {
            op: "qg_insert latent",
            lhs: path.x.shape(),
            rhs: (latent.len(), 1),
        });
    }
    let k = insertion_index(&obs.times, t_query)?;
    let n = obs.n_subareas();
    let mut aug = obs.clone();
    aug.values = obs.values.insert_column(k, &vec![SENTINEL; n]);
    aug.mask = obs.mask.insert_column(k, &vec![0.0; n]);
    aug.times.insert(k, t_query);
    let mut p = path.clone();
    p.x = path.x.insert_column(k, latent);
    Ok(Insertion {
        obs: aug,
        path: p,
        index: k,
        inserted: true,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    /// N × Q, one column per requested timestamp, in the input's units.
    pub values: DenseMatrix,
    /// Column of each query in the augmented instance.
    pub indices: Vec<usize>,
    pub report: TrainingReport,
}

/// Answers several timestamps with one training run: every query column is
/// inserted, the model is fitted on the augmented instance, and the decoder
/// outputs at the query columns are returned.
///
/// With `cfg.warm_start` the model is first fitted on the original instance
/// and training resumes after insertion.
pub fn query_many_with(obs: &ObservationSet, cfg: &ModelConfig, kind: ModelKind, ts: &[f64]) -> Result<QueryResult> {
    obs.validate()?;
    if ts.is_empty() {
        return Err(Error::Input("no query timestamps".into()));
    }
    let (norm, transform) = normalize(obs)?;
    let mut model = Model::new(kind, cfg, obs.n_subareas(), &obs.times)?;
    if cfg.warm_start {
        fit(&mut model, &norm)?;
    }
    let mut aug = norm;
    for &t in ts {
        let (k, inserted) = model.insert_query(t)?;
        if inserted {
            let n = aug.n_subareas();
            aug.values = aug.values.insert_column(k, &vec![SENTINEL; n]);
            aug.mask = aug.mask.insert_column(k, &vec![0.0; n]);
            aug.times.insert(k, t);
        }
    }
    let report = fit(&mut model, &aug)?;
    let (est, _) = model.predict()?;
    let indices: Vec<usize> = ts
        .iter()
        .map(|t| model.times().iter().position(|x| x == t).expect("inserted above"))
        .collect();
    let n = obs.n_subareas();
    let values = DenseMatrix::from_fn(n, ts.len(), |i, q| transform.invert(est[(i, indices[q])]));
    Ok(QueryResult {
        values,
        indices,
        report,
    })
}

pub fn query_many(obs: &ObservationSet, cfg: &ModelConfig, ts: &[f64]) -> Result<QueryResult> {
    query_many_with(obs, cfg, ModelKind::TimeDmf, ts)
}

/// TIME-DMF estimate of the full column at `t_query`.
pub fn query(obs: &ObservationSet, cfg: &ModelConfig, t_query: f64) -> Result<Vec<f64>> {
    Ok(query_many(obs, cfg, &[t_query])?.values.column(0))
}
