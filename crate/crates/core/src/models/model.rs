use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ModelConfig, ModelKind, TauMode};
use super::decoder::{decoder_parameter_count, Decoder, DecoderWeights};
use super::encoder::{
    intervals, rnn_forward, time_forward, EncoderVars, EncoderWeights, GateVars, GateWeights, InitialState,
    LatentPath,
};
use crate::dataio::{mean_gap, ObservationSet};
use crate::error::{Error, Result};
use crate::numkit::{gradients, init_params, DenseMatrix, GradientMap, InitScheme, ParamId, ParamStore, Tape, Var};

const QUERY_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, Copy, PartialEq)]
struct GateIds {
    wx: ParamId,
    wt: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct EncoderIds {
    u: ParamId,
    w: ParamId,
    v: ParamId,
    gates: Option<[GateIds; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum StateIds {
    None,
    Rnn(ParamId),
    Time { local: ParamId, global: ParamId },
}

/// Where a latent column comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
enum LatentSlot {
    /// Column of the trainable latent matrix.
    Base(usize),
    /// A query vector. Frozen: it feeds the forward pass but never moves.
    Query(ParamId),
}

/// Output nodes of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct Forward {
    /// N × M estimate in normalized units.
    pub estimate: Var,
    /// r × M latent columns fed to the decoder.
    pub z: Var,
}

/// One of the three completion models with its parameters.
#[derive(Debug, Clone)]
pub struct Model {
    kind: ModelKind,
    cfg: ModelConfig,
    n: usize,
    store: ParamStore,
    latents: ParamId,
    slots: Vec<LatentSlot>,
    state: StateIds,
    encoder: Option<EncoderIds>,
    decoder: Decoder,
    times: Vec<f64>,
    tau: f64,
    first_gap: f64,
}

impl Model {
    /// Initializes every parameter from `cfg.seed`: latents and initial
    /// states uniform in ±`latent_init`, weight matrices Xavier-uniform,
    /// biases zero.
    pub fn new(kind: ModelKind, cfg: &ModelConfig, n: usize, times: &[f64]) -> Result<Self> {
        cfg.validate()?;
        if n == 0 {
            return Err(Error::Input("instance has no subareas".into()));
        }
        if times.is_empty() {
            return Err(Error::Input("instance has no columns".into()));
        }
        intervals(times, 1.0)?;
        let (r, h, m) = (cfg.latent_dim, cfg.hidden_dim, times.len());
        let gap = mean_gap(times);
        let tau = match cfg.tau_mode {
            TauMode::MeanGap => gap,
            TauMode::Fixed(t) => t,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut store = ParamStore::new();
        let latent = InitScheme::Uniform(cfg.latent_init);

        let latents = store.add("latents", init_params((r, m), latent, &mut rng)?, true);
        let state = match kind {
            ModelKind::Dmf => StateIds::None,
            ModelKind::RnnDmf => StateIds::Rnn(store.add("s0", init_params((h, 1), latent, &mut rng)?, true)),
            ModelKind::TimeDmf => StateIds::Time {
                local: store.add("local0", init_params((h, 1), latent, &mut rng)?, true),
                global: store.add("global0", init_params((h, 1), latent, &mut rng)?, true),
            },
        };
        let encoder = match kind {
            ModelKind::Dmf => None,
            _ => {
                let xavier = InitScheme::XavierUniform;
                let u = store.add("encoder.u", init_params((h, r), xavier, &mut rng)?, true);
                // Identity recurrence: memories carry over between steps at init.
                let w = store.add("encoder.w", DenseMatrix::identity(h), true);
                let v = store.add("encoder.v", init_params((r, h), xavier, &mut rng)?, true);
                let gates = if kind == ModelKind::TimeDmf {
                    let mut gate = |k: usize| -> Result<GateIds> {
                        Ok(GateIds {
                            wx: store.add(format!("gate{k}.wx"), init_params((h, r), xavier, &mut rng)?, true),
                            wt: store.add(format!("gate{k}.wt"), init_params((h, 1), xavier, &mut rng)?, true),
                            b: store.add(format!("gate{k}.b"), DenseMatrix::zeros(h, 1), true),
                        })
                    };
                    Some([gate(1)?, gate(2)?])
                } else {
                    None
                };
                Some(EncoderIds { u, w, v, gates })
            }
        };
        let decoder = Decoder::init(
            &mut store,
            &cfg.decoder_widths(n),
            cfg.hidden_activation,
            cfg.output_activation,
            &mut rng,
        )?;
        Ok(Self {
            kind,
            cfg: cfg.clone(),
            n,
            store,
            latents,
            slots: (0..m).map(LatentSlot::Base).collect(),
            state,
            encoder,
            decoder,
            times: times.to_vec(),
            tau,
            first_gap: gap,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn n_subareas(&self) -> usize {
        self.n
    }

    pub fn n_columns(&self) -> usize {
        self.slots.len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// τ of the interval squashing, fixed at construction.
    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Δt₁, fixed at construction.
    pub fn first_gap(&self) -> f64 {
        self.first_gap
    }

    pub fn latent_id(&self) -> ParamId {
        self.latents
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Trainable scalars currently in the store.
    pub fn parameter_count(&self) -> usize {
        self.store.trainable_scalars()
    }

    /// Column indices holding frozen query vectors.
    pub fn query_columns(&self) -> Vec<usize> {
        self.slots
            .iter()
            .enumerate()
            .filter(|(_, s)| matches!(s, LatentSlot::Query(_)))
            .map(|(j, _)| j)
            .collect()
    }

    /// Inserts a frozen query vector at `t`. Returns the column index and
    /// whether a column was added; an existing timestamp is left untouched.
    pub fn insert_query(&mut self, t: f64) -> Result<(usize, bool)> {
        if let Some(j) = self.times.iter().position(|&x| x == t) {
            return Ok((j, false));
        }
        let k = insertion_index(&self.times, t)?;
        let x = query_latent(&self.cfg, t)?;
        let id = self.store.add(format!("query@{t}"), x, false);
        self.slots.insert(k, LatentSlot::Query(id));
        self.times.insert(k, t);
        Ok((k, true))
    }

    fn latent_var(&self, tape: &mut Tape, store: &ParamStore) -> Result<Var> {
        let base = tape.param(store, self.latents);
        let in_order = self
            .slots
            .iter()
            .enumerate()
            .all(|(j, s)| *s == LatentSlot::Base(j));
        if in_order && tape.value(base).cols() == self.slots.len() {
            return Ok(base);
        }
        let mut cols = Vec::with_capacity(self.slots.len());
        for slot in &self.slots {
            cols.push(match *slot {
                LatentSlot::Base(j) => tape.column(base, j)?,
                LatentSlot::Query(id) => tape.param(store, id),
            });
        }
        tape.hstack(&cols)
    }

    fn encoder_vars(&self, tape: &mut Tape, store: &ParamStore) -> Option<EncoderVars> {
        let ids = self.encoder?;
        let gates = ids.gates.map(|gs| {
            gs.map(|g| GateVars {
                wx: tape.param(store, g.wx),
                wt: tape.param(store, g.wt),
                b: tape.param(store, g.b),
            })
        });
        Some(EncoderVars {
            u: tape.param(store, ids.u),
            w: tape.param(store, ids.w),
            v: tape.param(store, ids.v),
            gates,
        })
    }

    /// Records the forward pass using the parameter values in `store`, which
    /// must share this model's layout.
    pub fn forward_with(&self, store: &ParamStore, tape: &mut Tape) -> Result<Forward> {
        let x = self.latent_var(tape, store)?;
        let z = match (self.state, self.encoder_vars(tape, store)) {
            (StateIds::None, _) => x,
            (StateIds::Rnn(s0), Some(enc)) => {
                let s0 = tape.param(store, s0);
                rnn_forward(tape, &enc, x, s0)?.z
            }
            (StateIds::Time { local, global }, Some(enc)) => {
                let l0 = tape.param(store, local);
                let g0 = tape.param(store, global);
                let scaled = self.scaled_intervals()?;
                time_forward(tape, &enc, x, l0, g0, &scaled)?.z
            }
            _ => unreachable!("recurrent state without encoder weights"),
        };
        let estimate = self.decoder.forward(tape, store, z)?;
        Ok(Forward { estimate, z })
    }

    pub fn forward(&self, tape: &mut Tape) -> Result<Forward> {
        self.forward_with(&self.store, tape)
    }

    fn scaled_intervals(&self) -> Result<Vec<f64>> {
        Ok(intervals(&self.times, self.first_gap)?
            .into_iter()
            .map(|d| d / self.tau)
            .collect())
    }

    fn check_instance(&self, obs: &ObservationSet) -> Result<()> {
        if obs.values.shape() != (self.n, self.slots.len()) {
            return Err(Error::Dimension {
                op: "model instance",
                lhs: (self.n, self.slots.len()),
                rhs: obs.values.shape(),
            });
        }
        Ok(())
    }

    /// Records forward pass plus masked loss against `obs`.
    pub fn loss_node(&self, store: &ParamStore, tape: &mut Tape, obs: &ObservationSet) -> Result<(Forward, Var)> {
        self.check_instance(obs)?;
        let fwd = self.forward_with(store, tape)?;
        let y = tape.constant(obs.values.clone());
        let c = tape.constant(obs.mask.clone());
        let loss = tape.masked_loss(fwd.estimate, y, c)?;
        Ok((fwd, loss))
    }

    /// Training loss for arbitrary parameter values; the finite-difference
    /// oracle evaluates this.
    pub fn loss_with(&self, store: &ParamStore, obs: &ObservationSet) -> Result<f64> {
        let mut tape = Tape::new();
        let (_, loss) = self.loss_node(store, &mut tape, obs)?;
        Ok(tape.scalar(loss))
    }

    pub fn loss(&self, obs: &ObservationSet) -> Result<f64> {
        self.loss_with(&self.store, obs)
    }

    pub fn loss_and_gradients(&self, obs: &ObservationSet) -> Result<(f64, GradientMap)> {
        let mut tape = Tape::new();
        let (_, loss) = self.loss_node(&self.store, &mut tape, obs)?;
        let grads = gradients(&tape, loss, &self.store)?;
        Ok((tape.scalar(loss), grads))
    }

    /// Current estimate and latent columns, normalized units.
    pub fn predict(&self) -> Result<(DenseMatrix, DenseMatrix)> {
        let mut tape = Tape::new();
        let fwd = self.forward(&mut tape)?;
        Ok((tape.value(fwd.estimate).clone(), tape.value(fwd.z).clone()))
    }

    pub fn latent_path(&self) -> LatentPath {
        let base = self.store.value(self.latents);
        let r = base.rows();
        let mut x = DenseMatrix::zeros(r, self.slots.len());
        for (j, slot) in self.slots.iter().enumerate() {
            let col = match *slot {
                LatentSlot::Base(b) => base.column(b),
                LatentSlot::Query(id) => self.store.value(id).column(0),
            };
            x.set_column(j, &col);
        }
        let init = match self.state {
            StateIds::None => InitialState::None,
            StateIds::Rnn(s0) => InitialState::Rnn {
                s0: self.store.value(s0).clone(),
            },
            StateIds::Time { local, global } => InitialState::Time {
                local: self.store.value(local).clone(),
                global: self.store.value(global).clone(),
            },
        };
        LatentPath { x, init }
    }

    pub fn encoder_weights(&self) -> Option<EncoderWeights> {
        let ids = self.encoder?;
        let v = |id: ParamId| self.store.value(id).clone();
        Some(EncoderWeights {
            u: v(ids.u),
            w: v(ids.w),
            v: v(ids.v),
            gates: ids.gates.map(|gs| {
                gs.map(|g| GateWeights {
                    wx: v(g.wx),
                    wt: v(g.wt),
                    b: v(g.b),
                })
            }),
        })
    }

    pub fn decoder_weights(&self) -> DecoderWeights {
        self.decoder.weights(&self.store)
    }
}

/// Sorted position of `t` among `times`, which must be strictly inside the
/// open span.
pub(crate) fn insertion_index(times: &[f64], t: f64) -> Result<usize> {
    let (start, end) = match (times.first(), times.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Err(Error::Input("cannot insert into an empty instance".into())),
    };
    if !(t > start && t < end) {
        return Err(Error::Range { t, start, end });
    }
    Ok(times.partition_point(|&x| x < t))
}

/// Initial value of the query vector at `t`. Drawn from its own stream so the
/// shared parameters initialize exactly as without the query.
pub fn query_latent(cfg: &ModelConfig, t: f64) -> Result<DenseMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ t.to_bits() ^ QUERY_STREAM);
    init_params((cfg.latent_dim, 1), InitScheme::Uniform(cfg.latent_init), &mut rng)
}

/// Trainable scalar count of a freshly built model, from shapes alone.
pub fn closed_form_parameter_count(kind: ModelKind, cfg: &ModelConfig, n: usize, m: usize) -> usize {
    let (r, h) = (cfg.latent_dim, cfg.hidden_dim);
    let decoder = decoder_parameter_count(&cfg.decoder_widths(n));
    let latents = r * m;
    match kind {
        ModelKind::Dmf => latents + decoder,
        ModelKind::RnnDmf => latents + h + (h * r + h * h + r * h) + decoder,
        ModelKind::TimeDmf => latents + 2 * h + (h * r + h * h + r * h) + 2 * (h * r + 2 * h) + decoder,
    }
}
