//! The DMF decoder: a stack of affine layers with per-layer activations that
//! maps latent columns to full N-dimensional columns.

use rand::RngCore;

use crate::error::{Error, Result};
use crate::numkit::{init_params, Activation, DenseMatrix, InitScheme, ParamId, ParamStore, Tape, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderLayer {
    pub weight: DenseMatrix,
    pub bias: DenseMatrix,
    pub activation: Activation,
}

/// Plain-value decoder weights `W*, b*, g*`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderWeights {
    pub layers: Vec<DecoderLayer>,
}

impl DecoderWeights {
    pub fn input_dim(&self) -> Option<usize> {
        self.layers.first().map(|l| l.weight.cols())
    }

    pub fn output_dim(&self) -> Option<usize> {
        self.layers.last().map(|l| l.weight.rows())
    }
}

/// Decodes one latent vector.
pub fn dmf_decode(z: &[f64], w: &DecoderWeights) -> Result<Vec<f64>> {
    if w.layers.is_empty() {
        return Err(Error::Config("decoder has no layers".into()));
    }
    let mut tape = Tape::new();
    let mut h = tape.constant(DenseMatrix::column_vector(z));
    for layer in &w.layers {
        let (out, inp) = layer.weight.shape();
        if layer.bias.shape() != (out, 1) || tape.value(h).rows() != inp {
            return Err(Error::Config(format!(
                "decoder layer {:?} cannot take input of height {} with bias {:?}",
                layer.weight.shape(),
                tape.value(h).rows(),
                layer.bias.shape()
            )));
        }
        let wv = tape.constant(layer.weight.clone());
        let bv = tape.constant(layer.bias.clone());
        h = apply_layer(&mut tape, wv, bv, layer.activation, h)?;
    }
    Ok(tape.value(h).as_slice().to_vec())
}

fn apply_layer(tape: &mut Tape, w: Var, b: Var, act: Activation, input: Var) -> Result<Var> {
    let lin = tape.matmul(w, input)?;
    let aff = tape.add_bias(lin, b)?;
    Ok(tape.activate(aff, act))
}

/// Decoder whose weights live in a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Decoder {
    layers: Vec<(ParamId, ParamId, Activation)>,
}

impl Decoder {
    /// Xavier-uniform weights, zero biases. `widths = [r, h₁, …, N]`; hidden
    /// layers use `hidden`, the last layer `output`.
    pub fn init(
        store: &mut ParamStore,
        widths: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut impl RngCore,
    ) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::Config("decoder needs an input and an output width".into()));
        }
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for (k, pair) in widths.windows(2).enumerate() {
            let (inp, out) = (pair[0], pair[1]);
            let w = store.add(
                format!("decoder.w{}", k + 1),
                init_params((out, inp), InitScheme::XavierUniform, rng)?,
                true,
            );
            let b = store.add(format!("decoder.b{}", k + 1), DenseMatrix::zeros(out, 1), true);
            let act = if k + 2 == widths.len() { output } else { hidden };
            layers.push((w, b, act));
        }
        Ok(Self { layers })
    }

    /// Decodes every column of `z` (r×M) at once.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, z: Var) -> Result<Var> {
        let mut h = z;
        for &(w, b, act) in &self.layers {
            let wv = tape.param(store, w);
            let bv = tape.param(store, b);
            h = apply_layer(tape, wv, bv, act, h)?;
        }
        Ok(h)
    }

    pub fn weights(&self, store: &ParamStore) -> DecoderWeights {
        DecoderWeights {
            layers: self
                .layers
                .iter()
                .map(|&(w, b, activation)| DecoderLayer {
                    weight: store.value(w).clone(),
                    bias: store.value(b).clone(),
                    activation,
                })
                .collect(),
        }
    }

    pub fn param_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.layers.iter().flat_map(|&(w, b, _)| [w, b])
    }
}

/// Σ (in·out + out) over consecutive widths.
pub fn decoder_parameter_count(widths: &[usize]) -> usize {
    widths.windows(2).map(|p| p[0] * p[1] + p[1]).sum()
}
