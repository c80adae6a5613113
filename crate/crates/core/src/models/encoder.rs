//! Recurrent encoders that turn the primary latent path into the latent
//! columns fed to the decoder.
//!
//! Both encoders run left to right over the columns. The gate pre-activations
//! and the input projection `U·X` do not depend on the recurrence, so they are
//! computed for all columns in one matmul and sliced per step.

use crate::error::{Error, Result};
use crate::numkit::{DenseMatrix, Tape, Var};

/// Plain-value time gate `T = σ(W_x x + σ_Δt(Δt W_t) + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GateWeights {
    /// hidden × r
    pub wx: DenseMatrix,
    /// hidden × 1
    pub wt: DenseMatrix,
    /// hidden × 1
    pub b: DenseMatrix,
}

/// Plain-value encoder weights. `gates` is present for the time-gated encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderWeights {
    /// hidden × r
    pub u: DenseMatrix,
    /// hidden × hidden
    pub w: DenseMatrix,
    /// r × hidden
    pub v: DenseMatrix,
    pub gates: Option<[GateWeights; 2]>,
}

impl EncoderWeights {
    pub fn hidden_dim(&self) -> usize {
        self.u.rows()
    }

    pub fn latent_dim(&self) -> usize {
        self.u.cols()
    }

    fn check(&self) -> Result<()> {
        let (h, r) = self.u.shape();
        let expect = |m: &DenseMatrix, shape: (usize, usize), name: &str| {
            if m.shape() != shape {
                Err(Error::Config(format!(
                    "encoder weight {name} has shape {:?}, expected {:?}",
                    m.shape(),
                    shape
                )))
            } else {
                Ok(())
            }
        };
        expect(&self.w, (h, h), "W")?;
        expect(&self.v, (r, h), "V")?;
        if let Some(gates) = &self.gates {
            for g in gates {
                expect(&g.wx, (h, r), "W_x")?;
                expect(&g.wt, (h, 1), "W_t")?;
                expect(&g.b, (h, 1), "b")?;
            }
        }
        Ok(())
    }
}

/// Initial states of the recurrence.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    None,
    Rnn { s0: DenseMatrix },
    Time { local: DenseMatrix, global: DenseMatrix },
}

/// Primary vectors X (r × M) plus the initial recurrent state.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPath {
    pub x: DenseMatrix,
    pub init: InitialState,
}

impl LatentPath {
    pub fn len(&self) -> usize {
        self.x.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.x.cols() == 0
    }
}

/// Per-step state of an encoder run.
#[derive(Debug, Clone, PartialEq)]
pub enum EncoderState {
    Rnn {
        s: Vec<f64>,
    },
    Time {
        local: Vec<f64>,
        global: Vec<f64>,
        candidate: Vec<f64>,
        gate1: Vec<f64>,
        gate2: Vec<f64>,
        dt: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderTrace {
    /// r × M, one latent column per step.
    pub z: DenseMatrix,
    pub states: Vec<EncoderState>,
}

/// Intervals `Δt_m = t_m − t_{m−1}` with `Δt₁ = first_gap`.
pub fn intervals(times: &[f64], first_gap: f64) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(times.len());
    for (m, &t) in times.iter().enumerate() {
        if !t.is_finite() {
            return Err(Error::Input(format!("time at column {m} is not finite")));
        }
        if m == 0 {
            out.push(first_gap);
        } else {
            let dt = t - times[m - 1];
            if dt <= 0.0 {
                return Err(Error::Input(format!(
                    "times not strictly increasing at column {m}: {t} after {}",
                    times[m - 1]
                )));
            }
            out.push(dt);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct GateVars {
    pub wx: Var,
    pub wt: Var,
    pub b: Var,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct EncoderVars {
    pub u: Var,
    pub w: Var,
    pub v: Var,
    pub gates: Option<[GateVars; 2]>,
}

pub(crate) struct RnnOut {
    pub z: Var,
    pub states: Vec<Var>,
}

pub(crate) struct TimeOut {
    pub z: Var,
    pub local: Vec<Var>,
    pub global: Vec<Var>,
    pub candidate: Vec<Var>,
    /// hidden × M gate activations
    pub gate1: Var,
    pub gate2: Var,
}

/// `S_t = tanh(U x_t + W S_{t−1})`, `z_t = V S_t`.
pub(crate) fn rnn_forward(tape: &mut Tape, enc: &EncoderVars, x: Var, s0: Var) -> Result<RnnOut> {
    let m = tape.value(x).cols();
    let ux = tape.matmul(enc.u, x)?;
    let mut prev = s0;
    let mut states = Vec::with_capacity(m);
    for t in 0..m {
        let ux_t = tape.column(ux, t)?;
        let ws = tape.matmul(enc.w, prev)?;
        let pre = tape.add(ux_t, ws)?;
        prev = tape.tanh(pre);
        states.push(prev);
    }
    let s_all = tape.hstack(&states)?;
    let z = tape.matmul(enc.v, s_all)?;
    Ok(RnnOut { z, states })
}

/// `σ(W_x X + σ(W_t · (Δt/τ)ᵀ) + b)` for all columns at once.
fn gate_matrix(tape: &mut Tape, g: &GateVars, x: Var, dt_row: Var) -> Result<Var> {
    let wx = tape.matmul(g.wx, x)?;
    let wt = tape.matmul(g.wt, dt_row)?;
    let inner = tape.sigmoid(wt);
    let pre = tape.add(wx, inner)?;
    let pre = tape.add_bias(pre, g.b)?;
    Ok(tape.sigmoid(pre))
}

/// Time-gated recurrence. `scaled_dt[m] = Δt_m / τ`.
pub(crate) fn time_forward(
    tape: &mut Tape,
    enc: &EncoderVars,
    x: Var,
    local0: Var,
    global0: Var,
    scaled_dt: &[f64],
) -> Result<TimeOut> {
    let m = tape.value(x).cols();
    if scaled_dt.len() != m {
        return Err(Error::Dimension {
            op: "time encoder intervals",
            lhs: tape.value(x).shape(),
            rhs: (scaled_dt.len(), 1),
        });
    }
    let [g1, g2] = enc
        .gates
        .ok_or_else(|| Error::Config("time encoder needs gate weights".into()))?;
    let dt_row = tape.constant(DenseMatrix::from_vec(1, m, scaled_dt.to_vec())?);
    let gate1 = gate_matrix(tape, &g1, x, dt_row)?;
    let gate2 = gate_matrix(tape, &g2, x, dt_row)?;
    let keep1 = tape.one_minus(gate1);
    let keep2 = tape.one_minus(gate2);
    let ux = tape.matmul(enc.u, x)?;

    let mut local_prev = local0;
    let mut global_prev = global0;
    let mut local = Vec::with_capacity(m);
    let mut global = Vec::with_capacity(m);
    let mut candidate = Vec::with_capacity(m);
    for t in 0..m {
        let ux_t = tape.column(ux, t)?;
        let wc = tape.matmul(enc.w, local_prev)?;
        let pre = tape.add(ux_t, wc)?;
        let a = tape.tanh(pre);

        let t1 = tape.column(gate1, t)?;
        let k1 = tape.column(keep1, t)?;
        let t2 = tape.column(gate2, t)?;
        let k2 = tape.column(keep2, t)?;

        let old1 = tape.hadamard(global_prev, t1)?;
        let new1 = tape.hadamard(a, k1)?;
        let sum1 = tape.add(old1, new1)?;
        let l = tape.tanh(sum1);

        let old2 = tape.hadamard(global_prev, t2)?;
        let new2 = tape.hadamard(a, k2)?;
        let sum2 = tape.add(old2, new2)?;
        let g = tape.tanh(sum2);

        candidate.push(a);
        local.push(l);
        global.push(g);
        local_prev = l;
        global_prev = g;
    }
    let l_all = tape.hstack(&local)?;
    let vz = tape.matmul(enc.v, l_all)?;
    let z = tape.tanh(vz);
    Ok(TimeOut {
        z,
        local,
        global,
        candidate,
        gate1,
        gate2,
    })
}

fn weight_vars(tape: &mut Tape, w: &EncoderWeights) -> EncoderVars {
    let gates = w.gates.as_ref().map(|[a, b]| {
        let mut g = |gw: &GateWeights| GateVars {
            wx: tape.constant(gw.wx.clone()),
            wt: tape.constant(gw.wt.clone()),
            b: tape.constant(gw.b.clone()),
        };
        [g(a), g(b)]
    });
    EncoderVars {
        u: tape.constant(w.u.clone()),
        w: tape.constant(w.w.clone()),
        v: tape.constant(w.v.clone()),
        gates,
    }
}

fn check_path(path: &LatentPath, w: &EncoderWeights) -> Result<()> {
    w.check()?;
    if path.is_empty() {
        return Err(Error::Input("latent path is empty".into()));
    }
    if path.x.rows() != w.latent_dim() {
        return Err(Error::Dimension {
            op: "encoder input",
            lhs: w.u.shape(),
            rhs: path.x.shape(),
        });
    }
    Ok(())
}

fn state_vector(m: &DenseMatrix, h: usize, name: &str) -> Result<DenseMatrix> {
    if m.shape() != (h, 1) {
        return Err(Error::Config(format!(
            "initial state {name} has shape {:?}, expected ({h}, 1)",
            m.shape()
        )));
    }
    Ok(m.clone())
}

/// Runs the plain recurrent encoder over `path`.
pub fn rnn_encode(path: &LatentPath, w: &EncoderWeights) -> Result<EncoderTrace> {
    check_path(path, w)?;
    let h = w.hidden_dim();
    let s0 = match &path.init {
        InitialState::Rnn { s0 } => state_vector(s0, h, "S0")?,
        InitialState::None => DenseMatrix::zeros(h, 1),
        InitialState::Time { .. } => {
            return Err(Error::Config("recurrent encoder got time-encoder memories".into()))
        }
    };
    let mut tape = Tape::new();
    let vars = weight_vars(&mut tape, w);
    let x = tape.constant(path.x.clone());
    let s0 = tape.constant(s0);
    let out = rnn_forward(&mut tape, &vars, x, s0)?;
    Ok(EncoderTrace {
        z: tape.value(out.z).clone(),
        states: out
            .states
            .iter()
            .map(|&s| EncoderState::Rnn {
                s: tape.value(s).as_slice().to_vec(),
            })
            .collect(),
    })
}

/// Runs the time-gated encoder. `tau` scales intervals inside the gates and
/// `first_gap` stands in for the undefined first interval.
pub fn time_encode(
    path: &LatentPath,
    times: &[f64],
    w: &EncoderWeights,
    tau: f64,
    first_gap: f64,
) -> Result<EncoderTrace> {
    check_path(path, w)?;
    if times.len() != path.len() {
        return Err(Error::Dimension {
            op: "time encoder times",
            lhs: path.x.shape(),
            rhs: (times.len(), 1),
        });
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Config(format!("tau must be positive, got {tau}")));
    }
    let h = w.hidden_dim();
    let (l0, g0) = match &path.init {
        InitialState::Time { local, global } => (state_vector(local, h, "local")?, state_vector(global, h, "global")?),
        InitialState::None => (DenseMatrix::zeros(h, 1), DenseMatrix::zeros(h, 1)),
        InitialState::Rnn { .. } => {
            return Err(Error::Config("time encoder got a single recurrent state".into()))
        }
    };
    let dts = intervals(times, first_gap)?;
    let scaled: Vec<f64> = dts.iter().map(|d| d / tau).collect();

    let mut tape = Tape::new();
    let vars = weight_vars(&mut tape, w);
    let x = tape.constant(path.x.clone());
    let l0 = tape.constant(l0);
    let g0 = tape.constant(g0);
    let out = time_forward(&mut tape, &vars, x, l0, g0, &scaled)?;
    let gate1 = tape.value(out.gate1);
    let gate2 = tape.value(out.gate2);
    let states = (0..path.len())
        .map(|t| EncoderState::Time {
            local: tape.value(out.local[t]).as_slice().to_vec(),
            global: tape.value(out.global[t]).as_slice().to_vec(),
            candidate: tape.value(out.candidate[t]).as_slice().to_vec(),
            gate1: gate1.column(t),
            gate2: gate2.column(t),
            dt: dts[t],
        })
        .collect();
    Ok(EncoderTrace {
        z: tape.value(out.z).clone(),
        states,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::sigmoid;

    fn scalar(v: f64) -> DenseMatrix {
        DenseMatrix::filled(1, 1, v)
    }

    fn scalar_rnn(w: f64) -> EncoderWeights {
        EncoderWeights {
            u: scalar(1.0),
            w: scalar(w),
            v: scalar(1.0),
            gates: None,
        }
    }

    fn gate(wx: f64, wt: f64, b: f64) -> GateWeights {
        GateWeights {
            wx: scalar(wx),
            wt: scalar(wt),
            b: scalar(b),
        }
    }

    fn path(xs: &[f64], init: InitialState) -> LatentPath {
        LatentPath {
            x: DenseMatrix::from_vec(1, xs.len(), xs.to_vec()).unwrap(),
            init,
        }
    }

    #[test]
    fn scalar_rnn_one_step() {
        let p = path(&[0.5], InitialState::Rnn { s0: scalar(0.0) });
        let tr = rnn_encode(&p, &scalar_rnn(1.0)).unwrap();
        assert!((tr.z[(0, 0)] - 0.46211716).abs() < 1e-8);
    }

    #[test]
    fn scalar_rnn_two_steps() {
        let p = path(&[1.0, 0.0], InitialState::Rnn { s0: scalar(0.0) });
        let tr = rnn_encode(&p, &scalar_rnn(1.0)).unwrap();
        assert!((tr.z[(0, 1)] - 1f64.tanh().tanh()).abs() < 1e-15);
        assert!((tr.z[(0, 1)] - 0.642_014_992_0).abs() < 1e-9);
    }

    #[test]
    fn decoupled_rnn_is_permutation_equivariant() {
        let xs = [0.3, -1.2, 0.8, 2.0];
        let perm = [2, 0, 3, 1];
        let w = scalar_rnn(0.0);
        let a = rnn_encode(&path(&xs, InitialState::None), &w).unwrap();
        let px: Vec<f64> = perm.iter().map(|&j| xs[j]).collect();
        let b = rnn_encode(&path(&px, InitialState::None), &w).unwrap();
        for (k, &j) in perm.iter().enumerate() {
            assert_eq!(b.z[(0, k)], a.z[(0, j)]);
        }
    }

    fn time_weights(g1: GateWeights, g2: GateWeights) -> EncoderWeights {
        EncoderWeights {
            u: scalar(1.0),
            w: scalar(1.0),
            v: scalar(1.0),
            gates: Some([g1, g2]),
        }
    }

    fn time_init() -> InitialState {
        InitialState::Time {
            local: scalar(0.0),
            global: scalar(0.0),
        }
    }

    fn first_gate(tr: &EncoderTrace) -> f64 {
        match &tr.states[0] {
            EncoderState::Time { gate1, .. } => gate1[0],
            _ => unreachable!(),
        }
    }

    #[test]
    fn all_zero_gate_keeps_inner_interval_term() {
        // W_t = 0 makes σ_Δt(0) = 0.5, which still enters the outer sigmoid.
        let w = time_weights(gate(0.0, 0.0, 0.0), gate(0.0, 0.0, 0.0));
        let tr = time_encode(&path(&[0.0], time_init()), &[0.0], &w, 1.0, 1.0).unwrap();
        assert!((first_gate(&tr) - sigmoid(0.5)).abs() < 1e-15);
    }

    #[test]
    fn nested_sigmoid_gate() {
        // Δt/τ = 0 via a zero first gap.
        let w = time_weights(gate(0.0, 1.0, 0.0), gate(0.0, 1.0, 0.0));
        let tr = time_encode(&path(&[0.0], time_init()), &[0.0], &w, 1.0, 0.0).unwrap();
        assert!((first_gate(&tr) - 0.62245933).abs() < 1e-8);
    }

    #[test]
    fn saturated_local_gate_ignores_candidate() {
        let w = time_weights(gate(0.0, 0.0, 60.0), gate(0.0, 0.0, 0.0));
        let init = InitialState::Time {
            local: scalar(0.0),
            global: scalar(0.7),
        };
        let p = path(&[3.0, -2.0], init);
        let tr = time_encode(&p, &[0.0, 1.0], &w, 1.0, 1.0).unwrap();
        let EncoderState::Time { local, global, .. } = &tr.states[0] else { unreachable!() };
        assert!((local[0] - 0.7f64.tanh()).abs() < 1e-12);
        let g0 = global[0];
        let EncoderState::Time { local, .. } = &tr.states[1] else { unreachable!() };
        assert!((local[0] - g0.tanh()).abs() < 1e-12);
    }

    #[test]
    fn hand_evaluated_time_step() {
        let w = EncoderWeights {
            u: scalar(0.8),
            w: scalar(-0.5),
            v: scalar(1.3),
            gates: Some([gate(0.4, -1.0, 0.2), gate(-0.3, 0.6, -0.1)]),
        };
        let init = InitialState::Time {
            local: scalar(0.2),
            global: scalar(-0.4),
        };
        let (tau, gap) = (2.0, 3.0);
        let xs = [0.5, -0.25];
        let times = [10.0, 11.0];
        let tr = time_encode(&path(&xs, init), &times, &w, tau, gap).unwrap();

        let (mut l, mut g) = (0.2f64, -0.4f64);
        for (m, dt) in [gap, 1.0].into_iter().enumerate() {
            let x = xs[m];
            let t1 = sigmoid(0.4 * x + sigmoid(-1.0 * dt / tau) + 0.2);
            let t2 = sigmoid(-0.3 * x + sigmoid(0.6 * dt / tau) - 0.1);
            let a = (0.8 * x - 0.5 * l).tanh();
            let nl = (g * t1 + a * (1.0 - t1)).tanh();
            let ng = (g * t2 + a * (1.0 - t2)).tanh();
            l = nl;
            g = ng;
            assert!((tr.z[(0, m)] - (1.3 * l).tanh()).abs() < 1e-14);
        }
    }

    #[test]
    fn intervals_use_first_gap() {
        assert_eq!(intervals(&[1.0, 3.0, 7.0], 3.0).unwrap(), vec![3.0, 2.0, 4.0]);
        assert!(matches!(intervals(&[1.0, 1.0], 1.0), Err(Error::Input(_))));
    }

    #[test]
    fn non_increasing_times_rejected() {
        let w = time_weights(gate(0.0, 0.0, 0.0), gate(0.0, 0.0, 0.0));
        let r = time_encode(&path(&[0.0, 1.0], time_init()), &[2.0, 1.0], &w, 1.0, 1.0);
        assert!(matches!(r, Err(Error::Input(_))));
    }
}
