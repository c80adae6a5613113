use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dataio::{MaskMode, SyntheticSpec};
use crate::error::{Error, Result};
use crate::models::{ModelConfig, ModelKind, TauMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    SparsitySweep,
    DeletionAblation,
    Generation,
    DiscreteVsContinuous,
    Gradcheck,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::SparsitySweep => "sparsity-sweep",
            Scenario::DeletionAblation => "deletion-ablation",
            Scenario::Generation => "generation",
            Scenario::DiscreteVsContinuous => "discrete-vs-continuous",
            Scenario::Gradcheck => "gradcheck",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    /// Grid CSV with a complete ground truth.
    Path(PathBuf),
    Synthetic(SyntheticSpec),
}

pub const DEFAULT_KNN_K: usize = 3;
pub const DEFAULT_MC_RANK: usize = 4;
pub const DEFAULT_GP_SHRINKAGE: f64 = 0.1;

/// A completion method. Baselines accept an optional parameter after a colon:
/// `knn-s:5` (neighbours), `mc:4` (rank), `gp:0.2` (shrinkage).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Model(ModelKind),
    Mc { rank: usize },
    KnnS { k: usize },
    Gp { shrinkage: f64 },
    Linear,
}

impl Method {
    pub fn model_kind(&self) -> Option<ModelKind> {
        match self {
            Method::Model(k) => Some(*k),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Model(k) => write!(f, "{k}"),
            Method::Mc { rank } if *rank == DEFAULT_MC_RANK => f.write_str("mc"),
            Method::Mc { rank } => write!(f, "mc:{rank}"),
            Method::KnnS { k } if *k == DEFAULT_KNN_K => f.write_str("knn-s"),
            Method::KnnS { k } => write!(f, "knn-s:{k}"),
            Method::Gp { shrinkage } if *shrinkage == DEFAULT_GP_SHRINKAGE => f.write_str("gp"),
            Method::Gp { shrinkage } => write!(f, "gp:{shrinkage}"),
            Method::Linear => f.write_str("linear"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let (name, arg) = match lower.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (lower.as_str(), None),
        };
        let bad = || Error::Config(format!("bad method parameter in '{s}'"));
        let method = match name {
            "mc" => Method::Mc {
                rank: arg.map(|a| a.parse().map_err(|_| bad())).transpose()?.unwrap_or(DEFAULT_MC_RANK),
            },
            "knn-s" | "knn" | "knn_s" => Method::KnnS {
                k: arg.map(|a| a.parse().map_err(|_| bad())).transpose()?.unwrap_or(DEFAULT_KNN_K),
            },
            "gp" => Method::Gp {
                shrinkage: arg
                    .map(|a| a.parse().map_err(|_| bad()))
                    .transpose()?
                    .unwrap_or(DEFAULT_GP_SHRINKAGE),
            },
            "linear" if arg.is_none() => Method::Linear,
            other if arg.is_none() => Method::Model(other.parse()?),
            _ => return Err(bad()),
        };
        match method {
            Method::Mc { rank: 0 } | Method::KnnS { k: 0 } => Err(bad()),
            Method::Gp { shrinkage } if !(0.0..=1.0).contains(&shrinkage) => Err(bad()),
            m => Ok(m),
        }
    }
}

impl Serialize for Method {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A scalar or a list of scalars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskKind {
    #[serde(alias = "keep_k", alias = "k")]
    KeepK,
    Ratio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskConfig {
    pub mode: MaskKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<OneOrMany<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio: Option<OneOrMany<f64>>,
}

impl Default for MaskConfig {
    fn default() -> Self {
        Self {
            mode: MaskKind::KeepK,
            k: Some(OneOrMany::One(1)),
            ratio: None,
        }
    }
}

impl MaskConfig {
    /// Every masking level listed, in order.
    pub fn modes(&self) -> Result<Vec<MaskMode>> {
        let modes: Vec<MaskMode> = match self.mode {
            MaskKind::KeepK => self
                .k
                .as_ref()
                .ok_or_else(|| Error::Config("mask mode keep-k needs 'k'".into()))?
                .to_vec()
                .into_iter()
                .map(MaskMode::KeepKPerColumn)
                .collect(),
            MaskKind::Ratio => self
                .ratio
                .as_ref()
                .ok_or_else(|| Error::Config("mask mode ratio needs 'ratio'".into()))?
                .to_vec()
                .into_iter()
                .map(MaskMode::KeepRatio)
                .collect(),
        };
        if modes.is_empty() {
            return Err(Error::Config("mask lists no levels".into()));
        }
        for m in &modes {
            match *m {
                MaskMode::KeepKPerColumn(0) => return Err(Error::Config("mask k must be at least 1".into())),
                MaskMode::KeepRatio(r) if !(r > 0.0 && r <= 1.0) => {
                    return Err(Error::Config(format!("mask ratio must be in (0, 1], got {r}")))
                }
                _ => {}
            }
        }
        Ok(modes)
    }
}

pub fn mode_label(mode: MaskMode) -> String {
    match mode {
        MaskMode::KeepKPerColumn(k) => format!("k={k}"),
        MaskMode::KeepRatio(r) => format!("ratio={r}"),
    }
}

/// The `model` block; absent keys keep the library defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decoder_layers: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_epochs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_mode: Option<TauMode>,
}

impl ModelSection {
    pub fn to_config(&self, seed: u64) -> ModelConfig {
        let d = ModelConfig::default();
        ModelConfig {
            latent_dim: self.latent_dim.unwrap_or(d.latent_dim),
            hidden_dim: self.hidden_dim.unwrap_or(d.hidden_dim),
            decoder_layers: self.decoder_layers.clone().unwrap_or(d.decoder_layers.clone()),
            lr: self.lr.unwrap_or(d.lr),
            max_epochs: self.max_epochs.unwrap_or(d.max_epochs),
            tol: self.tol.unwrap_or(d.tol),
            tau_mode: self.tau_mode.unwrap_or(d.tau_mode),
            seed,
            ..d
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    /// Required by every scenario except gradcheck.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetSource>,
    pub methods: Vec<Method>,
    #[serde(default)]
    pub mask: MaskConfig,
    #[serde(default)]
    pub delete_ratios: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit_length_seconds: Option<f64>,
    #[serde(default)]
    pub model: ModelSection,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("experiment config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.methods.is_empty() {
            return fail("method list is empty".into());
        }
        if self.seeds.is_empty() {
            return fail("seed list is empty".into());
        }
        if let Some(r) = self.delete_ratios.iter().find(|r| !(0.0..1.0).contains(*r)) {
            return fail(format!("deletion ratio {r} outside [0, 1)"));
        }
        self.mask.modes()?;
        self.model.to_config(0).validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.scenario != Scenario::Gradcheck && self.dataset.is_none() {
            return fail(format!("scenario {} needs a dataset", self.scenario));
        }
        let single = matches!(
            self.scenario,
            Scenario::DeletionAblation | Scenario::Generation | Scenario::DiscreteVsContinuous
        );
        if single && self.mask.modes()?.len() != 1 {
            return fail(format!("{} takes a single mask level", self.scenario));
        }
        match self.scenario {
            Scenario::DeletionAblation if self.delete_ratios.is_empty() => {
                fail("deletion-ablation needs delete_ratios".into())
            }
            Scenario::DiscreteVsContinuous => match self.unit_length_seconds {
                Some(u) if u > 0.0 && u.is_finite() => Ok(()),
                _ => fail("discrete-vs-continuous needs a positive unit_length_seconds".into()),
            },
            Scenario::Gradcheck if self.methods.iter().any(|m| m.model_kind().is_none()) => {
                fail("gradcheck accepts model methods only".into())
            }
            Scenario::Generation
                if self
                    .methods
                    .iter()
                    .any(|m| !matches!(m, Method::Model(_) | Method::Linear)) =>
            {
                fail("generation accepts model methods and linear only".into())
            }
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
        "scenario": "sparsity-sweep",
        "dataset": {"synthetic": {"kind": "smooth-field", "n": 30, "m": 300, "span_seconds": 604800, "seed": 7}},
        "methods": ["dmf", "rnn-dmf", "knn-s:5", "mc"],
        "mask": {"mode": "keep-k", "k": [1, 2, 3]},
        "delete_ratios": [],
        "unit_length_seconds": 3600,
        "model": {"latent_dim": 4, "hidden_dim": 16, "decoder_layers": [32], "lr": 0.01, "max_epochs": 100, "tol": 1e-5, "tau_mode": "mean-gap"},
        "seeds": [0, 1],
        "out_dir": "out"
    }"#;

    #[test]
    fn parses_the_documented_schema() {
        let cfg = ExperimentConfig::from_json(SAMPLE).unwrap();
        assert_eq!(cfg.methods[2], Method::KnnS { k: 5 });
        assert_eq!(cfg.methods[3], Method::Mc { rank: DEFAULT_MC_RANK });
        assert_eq!(cfg.mask.modes().unwrap().len(), 3);
        assert_eq!(cfg.model.to_config(3).hidden_dim, 16);
        let back: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn scalar_k_is_accepted() {
        let text = SAMPLE.replace("[1, 2, 3]", "2");
        let cfg = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(cfg.mask.modes().unwrap(), vec![MaskMode::KeepKPerColumn(2)]);
    }

    #[test]
    fn rejects_empty_methods_and_unknown_keys() {
        let empty = SAMPLE.replace(r#"["dmf", "rnn-dmf", "knn-s:5", "mc"]"#, "[]");
        assert!(matches!(ExperimentConfig::from_json(&empty), Err(Error::Config(_))));
        let extra = SAMPLE.replace(r#""seeds""#, r#""colour": 1, "seeds""#);
        assert!(ExperimentConfig::from_json(&extra).is_err());
        let bad_ratio = SAMPLE.replace(r#""delete_ratios": []"#, r#""delete_ratios": [1.0]"#);
        assert!(ExperimentConfig::from_json(&bad_ratio).is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for s in ["dmf", "rnn-dmf", "time-dmf", "mc", "mc:2", "knn-s", "knn-s:1", "gp", "gp:0.5", "linear"] {
            assert_eq!(s.parse::<Method>().unwrap().to_string(), s);
        }
        assert!("mc:0".parse::<Method>().is_err());
        assert!("wnn".parse::<Method>().is_err());
    }
}
