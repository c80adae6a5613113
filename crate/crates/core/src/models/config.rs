use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::numkit::Activation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Dmf,
    RnnDmf,
    TimeDmf,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Dmf, ModelKind::RnnDmf, ModelKind::TimeDmf];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Dmf => "dmf",
            ModelKind::RnnDmf => "rnn-dmf",
            ModelKind::TimeDmf => "time-dmf",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dmf" => Ok(ModelKind::Dmf),
            "rnn-dmf" | "rnn_dmf" | "rnndmf" => Ok(ModelKind::RnnDmf),
            "time-dmf" | "time_dmf" | "timedmf" => Ok(ModelKind::TimeDmf),
            other => Err(Error::Config(format!("unknown model kind '{other}'"))),
        }
    }
}

/// Scale τ of the interval squashing `σ_Δt(x) = sigmoid(x / τ)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum TauMode {
    /// τ = mean inter-arrival gap of the instance.
    #[default]
    MeanGap,
    /// τ fixed, in seconds.
    Fixed(f64),
}

impl Serialize for TauMode {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            TauMode::MeanGap => s.serialize_str("mean-gap"),
            TauMode::Fixed(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for TauMode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Name(String),
            Seconds(f64),
        }
        match Raw::deserialize(d)? {
            Raw::Name(s) if s == "mean-gap" || s == "mean_gap" => Ok(TauMode::MeanGap),
            Raw::Name(s) => Err(serde::de::Error::custom(format!(
                "tau_mode must be \"mean-gap\" or a number of seconds, got \"{s}\""
            ))),
            Raw::Seconds(v) => Ok(TauMode::Fixed(v)),
        }
    }
}

/// Architecture and optimization settings shared by the three models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// r, width of the latent vectors.
    pub latent_dim: usize,
    /// Hidden width of the recurrent encoders.
    pub hidden_dim: usize,
    /// Hidden decoder widths between r and N. The output width N comes from
    /// the instance.
    pub decoder_layers: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
    pub lr: f64,
    pub max_epochs: usize,
    /// Relative loss improvement over `patience` epochs below which training stops.
    pub tol: f64,
    pub patience: usize,
    pub tau_mode: TauMode,
    /// Bound of the uniform init of latent vectors and initial memories.
    pub latent_init: f64,
    pub seed: u64,
    /// Query training continues from a model fitted on the original instance
    /// instead of starting from scratch.
    pub warm_start: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            latent_dim: 8,
            hidden_dim: 32,
            decoder_layers: vec![64],
            hidden_activation: Activation::Tanh,
            output_activation: Activation::Identity,
            lr: 3e-3,
            max_epochs: 3000,
            tol: 1e-5,
            patience: 20,
            tau_mode: TauMode::MeanGap,
            latent_init: 0.1,
            seed: 0,
            warm_start: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::Config("latent_dim must be at least 1".into()));
        }
        if self.hidden_dim == 0 {
            return Err(Error::Config("hidden_dim must be at least 1".into()));
        }
        if self.decoder_layers.contains(&0) {
            return Err(Error::Config("decoder layer widths must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if self.tol < 0.0 || !self.tol.is_finite() {
            return Err(Error::Config(format!("tol must be non-negative, got {}", self.tol)));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if let TauMode::Fixed(t) = self.tau_mode {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Config(format!("tau must be positive, got {t}")));
            }
        }
        if !(self.latent_init > 0.0 && self.latent_init.is_finite()) {
            return Err(Error::Config("latent_init must be positive".into()));
        }
        Ok(())
    }

    /// Layer widths `[r, h₁, …, N]` of the decoder for `n` subareas.
    pub fn decoder_widths(&self, n: usize) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.decoder_layers.len() + 2);
        w.push(self.latent_dim);
        w.extend_from_slice(&self.decoder_layers);
        w.push(n);
        w
    }
}
