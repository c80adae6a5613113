//! Reverse-mode differentiation over a closed set of matrix operations.
//!
//! A [`Tape`] records every intermediate [`DenseMatrix`] of one forward pass.
//! [`Tape::backward`] then walks the records in reverse and accumulates
//! adjoints. Parameters enter the tape through [`Tape::param`], which remembers
//! the [`ParamId`] so [`gradients`] can hand back a [`GradientMap`].
//!
//! The op set is deliberately small: matmul, elementwise add/sub/hadamard,
//! scalar scaling, `1 - x`, column-broadcast bias, the three activations,
//! horizontal stacking of column vectors, and the masked squared loss.

use serde::{Deserialize, Serialize};

use super::matrix::{gemm_nt, gemm_tn};
use super::{DenseMatrix, GradientMap, ParamId, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation output `y`.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Elementwise activation outside of any tape. Rejects non-finite input.
pub fn activation(kind: Activation, a: &DenseMatrix) -> Result<DenseMatrix> {
    a.ensure_finite("activation input")?;
    Ok(a.map(|v| kind.apply(v)))
}

/// `(1/2n) · Σ ((estimate − observed) ⊙ mask)²`.
///
/// `n` counts the columns that carry at least one observation, so appending an
/// all-zero mask column (a query column) leaves the loss unchanged. When every
/// column is observed this is the plain column count.
pub fn masked_loss(estimate: &DenseMatrix, observed: &DenseMatrix, mask: &DenseMatrix) -> Result<f64> {
    estimate.check_same(observed, "masked_loss")?;
    estimate.check_same(mask, "masked_loss")?;
    Ok(masked_loss_unchecked(estimate, observed, mask))
}

/// Number of columns with a nonzero mask entry, at least 1.
pub fn observed_columns(mask: &DenseMatrix) -> usize {
    let (r, c) = mask.shape();
    let m = mask.as_slice();
    (0..c)
        .filter(|&j| (0..r).any(|i| m[i * c + j] != 0.0))
        .count()
        .max(1)
}

fn masked_loss_unchecked(estimate: &DenseMatrix, observed: &DenseMatrix, mask: &DenseMatrix) -> f64 {
    let n = observed_columns(mask) as f64;
    let mut acc = 0.0;
    for ((e, o), m) in estimate
        .as_slice()
        .iter()
        .zip(observed.as_slice())
        .zip(mask.as_slice())
    {
        if *m != 0.0 {
            let d = (e - o) * m;
            acc += d * d;
        }
    }
    acc / (2.0 * n)
}

/// Node handle on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf(Option<ParamId>),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Hadamard(Var, Var),
    Scale(Var, f64),
    OneMinus(Var),
    AddBias(Var, Var),
    Activate(Var, Activation),
    HStack(Vec<Var>),
    Column(Var, usize),
    MaskedLoss {
        estimate: Var,
        observed: Var,
        mask: Var,
    },
}

#[derive(Debug, Clone)]
struct Node {
    value: DenseMatrix,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            nodes: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &DenseMatrix {
        &self.nodes[v.0].value
    }

    /// Scalar value of a 1×1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.as_slice()[0]
    }

    fn push(&mut self, value: DenseMatrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn constant(&mut self, value: DenseMatrix) -> Var {
        self.push(value, Op::Leaf(None))
    }

    /// Records the current value of a stored parameter.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Leaf(Some(id)))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).sub(self.value(b))?;
        Ok(self.push(value, Op::Sub(a, b)))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).hadamard(self.value(b))?;
        Ok(self.push(value, Op::Hadamard(a, b)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).scale(s);
        self.push(value, Op::Scale(a, s))
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| 1.0 - v);
        self.push(value, Op::OneMinus(a))
    }

    /// `a + bias·1ᵀ` where `bias` is a column vector with `a.rows` entries.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (r, c) = self.shape(a);
        if self.shape(bias) != (r, 1) {
            return Err(Error::Dimension {
                op: "add_bias",
                lhs: (r, c),
                rhs: self.shape(bias),
            });
        }
        let b = self.value(bias).as_slice();
        let mut value = self.value(a).clone();
        for (row, chunk) in value.as_mut_slice().chunks_mut(c.max(1)).enumerate().take(r) {
            for x in chunk {
                *x += b[row];
            }
        }
        Ok(self.push(value, Op::AddBias(a, bias)))
    }

    pub fn activate(&mut self, a: Var, kind: Activation) -> Var {
        if kind == Activation::Identity {
            let value = self.value(a).clone();
            return self.push(value, Op::Activate(a, kind));
        }
        let value = self.value(a).map(|v| kind.apply(v));
        self.push(value, Op::Activate(a, kind))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.activate(a, Activation::Sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.activate(a, Activation::Tanh)
    }

    /// Concatenates column vectors of equal height into one matrix.
    pub fn hstack(&mut self, cols: &[Var]) -> Result<Var> {
        let first = cols
            .first()
            .ok_or_else(|| Error::Input("hstack of zero columns".into()))?;
        let r = self.shape(*first).0;
        for &c in cols {
            if self.shape(c) != (r, 1) {
                return Err(Error::Dimension {
                    op: "hstack",
                    lhs: (r, 1),
                    rhs: self.shape(c),
                });
            }
        }
        let m = cols.len();
        let mut value = DenseMatrix::zeros(r, m);
        for (j, &c) in cols.iter().enumerate() {
            let src = self.nodes[c.0].value.as_slice();
            let dst = value.as_mut_slice();
            for i in 0..r {
                dst[i * m + j] = src[i];
            }
        }
        Ok(self.push(value, Op::HStack(cols.to_vec())))
    }

    /// Column `j` of `a` as an r×1 vector.
    pub fn column(&mut self, a: Var, j: usize) -> Result<Var> {
        let (r, c) = self.shape(a);
        if j >= c {
            return Err(Error::Dimension {
                op: "column",
                lhs: (r, c),
                rhs: (j, 1),
            });
        }
        let value = DenseMatrix::column_vector(&self.value(a).column(j));
        Ok(self.push(value, Op::Column(a, j)))
    }

    pub fn masked_loss(&mut self, estimate: Var, observed: Var, mask: Var) -> Result<Var> {
        let e = self.value(estimate);
        let o = self.value(observed);
        let m = self.value(mask);
        e.check_same(o, "masked_loss")?;
        e.check_same(m, "masked_loss")?;
        let value = DenseMatrix::filled(1, 1, masked_loss_unchecked(e, o, m));
        Ok(self.push(
            value,
            Op::MaskedLoss {
                estimate,
                observed,
                mask,
            },
        ))
    }

    /// Reverse sweep from a scalar node. Every node gets an adjoint, zero when
    /// the node does not influence `loss`.
    pub fn backward(&self, loss: Var) -> Result<Adjoints> {
        if self.shape(loss) != (1, 1) {
            return Err(Error::Gradient(format!(
                "backward needs a 1x1 loss node, got {:?}",
                self.shape(loss)
            )));
        }
        let mut adj: Vec<Option<DenseMatrix>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(DenseMatrix::filled(1, 1, 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf(_) => {}
                Op::MatMul(a, b) => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    let ga = slot(&mut adj, *a, av.shape());
                    gemm_nt(&g, bv, ga);
                    let gb = slot(&mut adj, *b, bv.shape());
                    gemm_tn(av, &g, gb);
                }
                Op::Add(a, b) => {
                    slot(&mut adj, *a, g.shape()).add_assign(&g);
                    slot(&mut adj, *b, g.shape()).add_assign(&g);
                }
                Op::Sub(a, b) => {
                    slot(&mut adj, *a, g.shape()).add_assign(&g);
                    let gb = slot(&mut adj, *b, g.shape());
                    for (x, y) in gb.as_mut_slice().iter_mut().zip(g.as_slice()) {
                        *x -= y;
                    }
                }
                Op::Hadamard(a, b) => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    let ga = slot(&mut adj, *a, g.shape());
                    for ((x, gi), bi) in ga.as_mut_slice().iter_mut().zip(g.as_slice()).zip(bv.as_slice()) {
                        *x += gi * bi;
                    }
                    let gb = slot(&mut adj, *b, g.shape());
                    for ((x, gi), ai) in gb.as_mut_slice().iter_mut().zip(g.as_slice()).zip(av.as_slice()) {
                        *x += gi * ai;
                    }
                }
                Op::Scale(a, s) => {
                    let ga = slot(&mut adj, *a, g.shape());
                    for (x, gi) in ga.as_mut_slice().iter_mut().zip(g.as_slice()) {
                        *x += gi * s;
                    }
                }
                Op::OneMinus(a) => {
                    let ga = slot(&mut adj, *a, g.shape());
                    for (x, gi) in ga.as_mut_slice().iter_mut().zip(g.as_slice()) {
                        *x -= gi;
                    }
                }
                Op::AddBias(a, bias) => {
                    slot(&mut adj, *a, g.shape()).add_assign(&g);
                    let (r, c) = g.shape();
                    let gb = slot(&mut adj, *bias, (r, 1));
                    let gs = g.as_slice();
                    for (i, x) in gb.as_mut_slice().iter_mut().enumerate() {
                        *x += gs[i * c..(i + 1) * c].iter().sum::<f64>();
                    }
                }
                Op::Activate(a, kind) => {
                    let y = &node.value;
                    let ga = slot(&mut adj, *a, g.shape());
                    for ((x, gi), yi) in ga.as_mut_slice().iter_mut().zip(g.as_slice()).zip(y.as_slice()) {
                        *x += gi * kind.derivative_from_output(*yi);
                    }
                }
                Op::HStack(cols) => {
                    let (r, m) = g.shape();
                    let gs = g.as_slice();
                    for (j, c) in cols.iter().enumerate() {
                        let gc = slot(&mut adj, *c, (r, 1));
                        for (i, x) in gc.as_mut_slice().iter_mut().enumerate() {
                            *x += gs[i * m + j];
                        }
                    }
                }
                Op::Column(a, j) => {
                    let (r, c) = self.shape(*a);
                    let ga = slot(&mut adj, *a, (r, c));
                    let dst = ga.as_mut_slice();
                    for (i, gi) in g.as_slice().iter().enumerate() {
                        dst[i * c + j] += gi;
                    }
                }
                Op::MaskedLoss {
                    estimate,
                    observed,
                    mask,
                } => {
                    let up = g.as_slice()[0];
                    let e = self.value(*estimate);
                    let o = self.value(*observed);
                    let m = self.value(*mask);
                    let n = observed_columns(m) as f64;
                    let shape = e.shape();
                    // d/de = m²(e − o)/n, d/do = −d/de, d/dm = m(e − o)²/n
                    let mut de = DenseMatrix::zeros(shape.0, shape.1);
                    let mut dm = DenseMatrix::zeros(shape.0, shape.1);
                    for (k, ((ei, oi), mi)) in e
                        .as_slice()
                        .iter()
                        .zip(o.as_slice())
                        .zip(m.as_slice())
                        .enumerate()
                    {
                        if *mi != 0.0 {
                            let d = ei - oi;
                            de.as_mut_slice()[k] = up * mi * mi * d / n;
                            dm.as_mut_slice()[k] = up * mi * d * d / n;
                        }
                    }
                    let go = slot(&mut adj, *observed, shape);
                    for (x, d) in go.as_mut_slice().iter_mut().zip(de.as_slice()) {
                        *x -= d;
                    }
                    slot(&mut adj, *mask, shape).add_assign(&dm);
                    slot(&mut adj, *estimate, shape).add_assign(&de);
                }
            }
            adj[idx] = Some(g);
        }
        Ok(Adjoints { adj })
    }

    pub(crate) fn leaf_param(&self, v: Var) -> Option<ParamId> {
        match self.nodes[v.0].op {
            Op::Leaf(p) => p,
            _ => None,
        }
    }
}

fn slot(adj: &mut [Option<DenseMatrix>], v: Var, shape: (usize, usize)) -> &mut DenseMatrix {
    adj[v.0].get_or_insert_with(|| DenseMatrix::zeros(shape.0, shape.1))
}

/// Adjoints of every node preceding (and including) the loss.
#[derive(Debug)]
pub struct Adjoints {
    adj: Vec<Option<DenseMatrix>>,
}

impl Adjoints {
    /// Adjoint of `v`, or `None` when `v` does not reach the loss.
    pub fn get(&self, v: Var) -> Option<&DenseMatrix> {
        self.adj.get(v.0).and_then(Option::as_ref)
    }
}

/// Exact reverse-mode gradient of `loss` w.r.t. every trainable parameter of
/// `store`. Trainable parameters the loss does not reach get zero entries.
pub fn gradients(tape: &Tape, loss: Var, store: &ParamStore) -> Result<GradientMap> {
    let adj = tape.backward(loss)?;
    let mut map = GradientMap::new();
    let mut connected = false;
    for idx in 0..=loss.0 {
        let v = Var(idx);
        let Some(pid) = tape.leaf_param(v) else { continue };
        if !store.contains(pid) {
            return Err(Error::Gradient(format!(
                "tape references parameter {} not present in the store",
                pid.0
            )));
        }
        let Some(g) = adj.get(v) else { continue };
        connected = true;
        if !store.get(pid).trainable {
            continue;
        }
        match map.get(pid) {
            Some(prev) => {
                let mut acc = prev.clone();
                acc.add_assign(g);
                map.insert(pid, acc);
            }
            None => map.insert(pid, g.clone()),
        }
    }
    if !connected {
        return Err(Error::Gradient(
            "loss is not connected to any parameter of the store".into(),
        ));
    }
    for id in store.trainable_ids() {
        if map.get(id).is_none() {
            let (r, c) = store.value(id).shape();
            map.insert(id, DenseMatrix::zeros(r, c));
        }
    }
    Ok(map)
}
