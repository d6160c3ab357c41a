//! Reverse-mode differentiation over a recorded operation list.
//!
//! A [`Graph`] is built by calling operation methods; every call appends one
//! node whose inputs are earlier nodes, so the node list is already in
//! topological order. [`Graph::backward`] walks it once in reverse.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TensorError};
use crate::params::{ParamId, ParamStore};
use crate::tensor::{log_softmax_row, masked_softmax_row, Tensor};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// How duplicate columns are merged by [`Graph::scatter_aggregate`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregate {
    Sum,
    Max,
}

/// Smallest probability fed to a logarithm.
pub const PROB_FLOOR: f64 = 1e-300;

enum Value {
    Owned(Tensor),
    Param(ParamId),
}

enum Op {
    Leaf,
    Matmul(Var, Var),
    MatmulNt(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MulConst(Var, Tensor),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Exp(Var),
    Softmax { x: Var, axis: usize },
    MaskedSoftmax(Var),
    LogSoftmax(Var),
    Transpose(Var),
    Reshape(Var),
    SliceCols { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    SliceRows { x: Var, start: usize },
    ConcatRows(Vec<Var>),
    Embedding { table: Var, ids: Vec<usize> },
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Tensor, inv_std: Vec<f64> },
    Sum(Var),
    NllSum { logits: Var, targets: Vec<Option<usize>>, probs: Tensor },
    ProbNllSum { probs: Var, targets: Vec<Option<usize>> },
    ScatterAggregate { x: Var, groups: Vec<usize>, mode: Aggregate, argmax: Vec<usize> },
    ScatterColumns { x: Var, map: Vec<usize> },
}

struct Node {
    value: Value,
    op: Op,
    needs_grad: bool,
}

/// A single-owner record of one forward computation.
pub struct Graph<'s> {
    store: Option<&'s ParamStore>,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
    training: bool,
    rng: ChaCha8Rng,
}

impl Default for Graph<'static> {
    fn default() -> Self {
        Graph::new()
    }
}

impl Graph<'static> {
    /// A graph without a parameter store.
    pub fn new() -> Self {
        Graph {
            store: None,
            nodes: Vec::new(),
            param_vars: Vec::new(),
            training: false,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }
}

impl<'s> Graph<'s> {
    /// A graph whose parameter nodes read from `store` without copying.
    pub fn with_params(store: &'s ParamStore) -> Self {
        Graph {
            store: Some(store),
            nodes: Vec::new(),
            param_vars: vec![None; store.len()],
            training: false,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    /// Enables dropout, drawing masks from a generator seeded with `seed`.
    pub fn training(mut self, seed: u64) -> Self {
        self.training = true;
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match &self.nodes[v.0].value {
            Value::Owned(t) => t,
            Value::Param(id) => self
                .store
                .expect("parameter node without a store")
                .get(*id),
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var], op_name: &'static str) -> Result<Var> {
        if !value.all_finite() {
            return Err(TensorError::contract(op_name, "produced a non-finite value"));
        }
        let needs_grad = inputs.iter().any(|&v| self.needs(v));
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// A leaf that does not receive gradients.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(value),
            op: Op::Leaf,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that receives gradients.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(value),
            op: Op::Leaf,
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// The node for parameter `id`, created on first use.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.index()] {
            return v;
        }
        self.nodes.push(Node {
            value: Value::Param(id),
            op: Op::Leaf,
            needs_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id.index()] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        self.push(out, Op::Matmul(a, b), &[a, b], "matmul")
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul_nt(self.value(b))?;
        self.push(out, Op::MatmulNt(a, b), &[a, b], "matmul_nt")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_with(self.value(b), "add", |x, y| x + y)?;
        self.push(out, Op::Add(a, b), &[a, b], "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_with(self.value(b), "sub", |x, y| x - y)?;
        self.push(out, Op::Sub(a, b), &[a, b], "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_with(self.value(b), "mul", |x, y| x * y)?;
        self.push(out, Op::Mul(a, b), &[a, b], "mul")
    }

    /// Adds the row vector `bias` to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(bias));
        let cols = av.cols();
        if bv.numel() != cols {
            return Err(TensorError::shape("add_row", av.shape(), bv.shape()));
        }
        let mut out = av.clone();
        for row in out.data_mut().chunks_mut(cols) {
            for (o, b) in row.iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        self.push(out, Op::AddRow(a, bias), &[a, bias], "add_row")
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let out = self.value(a).map(|x| x * factor);
        self.push(out, Op::Scale(a, factor), &[a], "scale")
    }

    /// Element-wise product with a constant tensor.
    pub fn mul_const(&mut self, a: Var, c: Tensor) -> Result<Var> {
        let out = self.value(a).zip_with(&c, "mul_const", |x, y| x * y)?;
        self.push(out, Op::MulConst(a, c), &[a], "mul_const")
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a), &[a], "sigmoid")
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(f64::tanh);
        self.push(out, Op::Tanh(a), &[a], "tanh")
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(|x| x.max(0.0));
        self.push(out, Op::Relu(a), &[a], "relu")
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(f64::exp);
        self.push(out, Op::Exp(a), &[a], "exp")
    }

    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let out = self.value(a).softmax(axis)?;
        self.push(out, Op::Softmax { x: a, axis }, &[a], "softmax")
    }

    /// Softmax over the last axis; `mask[i] == true` excludes element `i`,
    /// which then receives probability 0. A fully masked row is an error.
    pub fn masked_softmax(&mut self, a: Var, mask: &[bool]) -> Result<Var> {
        let x = self.value(a);
        if mask.len() != x.numel() {
            return Err(TensorError::shape("masked_softmax", x.shape(), &[mask.len()]));
        }
        let cols = x.cols();
        let mut out = Vec::with_capacity(x.numel());
        for (r, row) in x.data().chunks(cols).enumerate() {
            let m = &mask[r * cols..(r + 1) * cols];
            let probs = masked_softmax_row(row, Some(m)).ok_or_else(|| {
                TensorError::contract("masked_softmax", format!("row {r} has every position masked"))
            })?;
            out.extend(probs);
        }
        let out = Tensor::from_parts(x.shape().to_vec(), out);
        self.push(out, Op::MaskedSoftmax(a), &[a], "masked_softmax")
    }

    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let cols = x.cols();
        let data = x.data().chunks(cols).flat_map(log_softmax_row).collect();
        let out = Tensor::from_parts(x.shape().to_vec(), data);
        self.push(out, Op::LogSoftmax(a), &[a], "log_softmax")
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).transpose()?;
        self.push(out, Op::Transpose(a), &[a], "transpose")
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let out = self.value(a).reshape(shape)?;
        self.push(out, Op::Reshape(a), &[a], "reshape")
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let x = self.value(a);
        let (rows, cols) = matrix_dims(x, "slice_cols")?;
        if len == 0 || start + len > cols {
            return Err(TensorError::contract(
                "slice_cols",
                format!("columns {start}..{} out of range for {cols}", start + len),
            ));
        }
        let mut data = Vec::with_capacity(rows * len);
        for row in x.data().chunks(cols) {
            data.extend_from_slice(&row[start..start + len]);
        }
        let out = Tensor::from_parts(vec![rows, len], data);
        self.push(out, Op::SliceCols { x: a, start }, &[a], "slice_cols")
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| TensorError::contract("concat_cols", "no inputs"))?;
        let rows = matrix_dims(self.value(first), "concat_cols")?.0;
        let mut total = 0;
        for &p in parts {
            let (r, c) = matrix_dims(self.value(p), "concat_cols")?;
            if r != rows {
                return Err(TensorError::shape("concat_cols", self.shape(first), self.shape(p)));
            }
            total += c;
        }
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row_slice(r));
            }
        }
        let out = Tensor::from_parts(vec![rows, total], data);
        self.push(out, Op::ConcatCols(parts.to_vec()), parts, "concat_cols")
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let x = self.value(a);
        let (rows, cols) = matrix_dims(x, "slice_rows")?;
        if len == 0 || start + len > rows {
            return Err(TensorError::contract(
                "slice_rows",
                format!("rows {start}..{} out of range for {rows}", start + len),
            ));
        }
        let data = x.data()[start * cols..(start + len) * cols].to_vec();
        let out = Tensor::from_parts(vec![len, cols], data);
        self.push(out, Op::SliceRows { x: a, start }, &[a], "slice_rows")
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| TensorError::contract("concat_rows", "no inputs"))?;
        let cols = matrix_dims(self.value(first), "concat_rows")?.1;
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let (r, c) = matrix_dims(self.value(p), "concat_rows")?;
            if c != cols {
                return Err(TensorError::shape("concat_rows", self.shape(first), self.shape(p)));
            }
            rows += r;
            data.extend_from_slice(self.value(p).data());
        }
        let out = Tensor::from_parts(vec![rows, cols], data);
        self.push(out, Op::ConcatRows(parts.to_vec()), parts, "concat_rows")
    }

    /// Gathers rows of `table` ([vocab × dim]) for each id.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let t = self.value(table);
        let (vocab, dim) = matrix_dims(t, "embedding")?;
        if ids.is_empty() {
            return Err(TensorError::contract("embedding", "empty id sequence"));
        }
        let mut data = Vec::with_capacity(ids.len() * dim);
        for &id in ids {
            if id >= vocab {
                return Err(TensorError::Data(format!("embedding id {id} outside vocabulary of {vocab}")));
            }
            data.extend_from_slice(t.row_slice(id));
        }
        let out = Tensor::from_parts(vec![ids.len(), dim], data);
        self.push(out, Op::Embedding { table, ids: ids.to_vec() }, &[table], "embedding")
    }

    /// Per-row normalisation to zero mean and unit variance, then `γ·x̂ + β`.
    pub fn layer_norm(&mut self, a: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let x = self.value(a);
        let cols = x.cols();
        for p in [gamma, beta] {
            if self.value(p).numel() != cols {
                return Err(TensorError::shape("layer_norm", x.shape(), self.shape(p)));
            }
        }
        let mut xhat = Vec::with_capacity(x.numel());
        let mut inv_std = Vec::with_capacity(x.rows());
        for row in x.data().chunks(cols) {
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std.push(is);
            xhat.extend(row.iter().map(|v| (v - mean) * is));
        }
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let out: Vec<f64> = xhat
            .iter()
            .enumerate()
            .map(|(i, &h)| g[i % cols] * h + b[i % cols])
            .collect();
        let shape = x.shape().to_vec();
        let out = Tensor::from_parts(shape.clone(), out);
        let xhat = Tensor::from_parts(shape, xhat);
        self.push(
            out,
            Op::LayerNorm { x: a, gamma, beta, xhat, inv_std },
            &[a, gamma, beta],
            "layer_norm",
        )
    }

    /// Inverted dropout. The identity when not training or when `rate == 0`.
    pub fn dropout(&mut self, a: Var, rate: f64) -> Result<Var> {
        if !self.training || rate <= 0.0 {
            return Ok(a);
        }
        if rate >= 1.0 {
            return Err(TensorError::Config(format!("dropout rate {rate} must be < 1")));
        }
        let keep = 1.0 - rate;
        let shape = self.shape(a).to_vec();
        let n: usize = shape.iter().product();
        let mask: Vec<f64> = (0..n)
            .map(|_| if self.rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        self.mul_const(a, Tensor::from_parts(shape, mask))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(out, Op::Sum(a), &[a], "sum")
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).numel() as f64;
        let s = self.sum(a)?;
        self.scale(s, 1.0 / n)
    }

    /// Summed negative log-likelihood of `targets` under row-wise softmax of
    /// `logits`; `None` targets are skipped.
    pub fn nll_sum(&mut self, logits: Var, targets: &[Option<usize>]) -> Result<Var> {
        let x = self.value(logits);
        let (rows, vocab) = matrix_dims(x, "nll_sum")?;
        if targets.len() != rows {
            return Err(TensorError::shape("nll_sum", x.shape(), &[targets.len()]));
        }
        let mut probs = Vec::with_capacity(rows * vocab);
        let mut total = 0.0;
        for (row, t) in x.data().chunks(vocab).zip(targets) {
            let lp = log_softmax_row(row);
            if let Some(t) = *t {
                if t >= vocab {
                    return Err(TensorError::Data(format!("target id {t} outside vocabulary of {vocab}")));
                }
                total -= lp[t];
            }
            probs.extend(lp.iter().map(|v| v.exp()));
        }
        let probs = Tensor::from_parts(vec![rows, vocab], probs);
        self.push(
            Tensor::scalar(total),
            Op::NllSum { logits, targets: targets.to_vec(), probs },
            &[logits],
            "nll_sum",
        )
    }

    /// Mean negative log-likelihood over non-pad targets.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], pad_id: usize) -> Result<Var> {
        let targets: Vec<Option<usize>> = targets.iter().map(|&t| (t != pad_id).then_some(t)).collect();
        let count = targets.iter().flatten().count();
        if count == 0 {
            return Err(TensorError::contract("cross_entropy", "every target is padding"));
        }
        let total = self.nll_sum(logits, &targets)?;
        self.scale(total, 1.0 / count as f64)
    }

    /// Summed `-ln p[target]` for rows of an explicit probability matrix.
    pub fn prob_nll_sum(&mut self, probs: Var, targets: &[Option<usize>]) -> Result<Var> {
        let p = self.value(probs);
        let (rows, vocab) = matrix_dims(p, "prob_nll_sum")?;
        if targets.len() != rows {
            return Err(TensorError::shape("prob_nll_sum", p.shape(), &[targets.len()]));
        }
        let mut total = 0.0;
        for (r, t) in targets.iter().enumerate() {
            if let Some(t) = *t {
                if t >= vocab {
                    return Err(TensorError::Data(format!("target id {t} outside distribution of {vocab}")));
                }
                total -= p.get(r, t).max(PROB_FLOOR).ln();
            }
        }
        self.push(
            Tensor::scalar(total),
            Op::ProbNllSum { probs, targets: targets.to_vec() },
            &[probs],
            "prob_nll_sum",
        )
    }

    /// Merges columns of `a` ([rows × n]) that share a group id:
    /// `out[r, u] = agg { a[r, j] : groups[j] == u }`. Every group in
    /// `0..n_groups` must be non-empty.
    pub fn scatter_aggregate(&mut self, a: Var, groups: &[usize], n_groups: usize, mode: Aggregate) -> Result<Var> {
        let x = self.value(a);
        let (rows, cols) = matrix_dims(x, "scatter_aggregate")?;
        if groups.len() != cols {
            return Err(TensorError::contract(
                "scatter_aggregate",
                format!("{} group ids for {cols} columns", groups.len()),
            ));
        }
        let mut seen = vec![false; n_groups];
        for &g in groups {
            if g >= n_groups {
                return Err(TensorError::contract("scatter_aggregate", format!("group {g} >= {n_groups}")));
            }
            seen[g] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(TensorError::contract("scatter_aggregate", "empty group"));
        }
        let (out, argmax) = aggregate_columns(x.data(), rows, cols, groups, n_groups, mode);
        let out = Tensor::from_parts(vec![rows, n_groups], out);
        self.push(
            out,
            Op::ScatterAggregate { x: a, groups: groups.to_vec(), mode, argmax },
            &[a],
            "scatter_aggregate",
        )
    }

    /// Adds column `j` of `a` into column `map[j]` of a `[rows × out_cols]` result.
    pub fn scatter_columns(&mut self, a: Var, map: &[usize], out_cols: usize) -> Result<Var> {
        let x = self.value(a);
        let (rows, cols) = matrix_dims(x, "scatter_columns")?;
        if map.len() != cols || map.iter().any(|&m| m >= out_cols) {
            return Err(TensorError::contract("scatter_columns", "column map does not fit the output"));
        }
        let mut out = vec![0.0; rows * out_cols];
        for r in 0..rows {
            for (j, &m) in map.iter().enumerate() {
                out[r * out_cols + m] += x.data()[r * cols + j];
            }
        }
        let out = Tensor::from_parts(vec![rows, out_cols], out);
        self.push(out, Op::ScatterColumns { x: a, map: map.to_vec() }, &[a], "scatter_columns")
    }

    /// Gradients of the scalar `loss` with respect to every node that
    /// depends on a gradient-requiring leaf.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).numel() != 1 {
            return Err(TensorError::contract(
                "backward",
                format!("loss must be scalar, got shape {:?}", self.shape(loss)),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(self.shape(loss), 1.0));
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(Var(i), &g, &mut grads)?;
            grads[i] = Some(g);
        }
        Ok(Gradients {
            grads,
            param_vars: self.param_vars.clone(),
        })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.needs(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    fn backprop_node(&self, node: Var, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let out = self.value(node);
        match &self.nodes[node.0].op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                if self.needs(*a) {
                    self.accumulate(grads, *a, g.matmul_nt(self.value(*b))?);
                }
                if self.needs(*b) {
                    self.accumulate(grads, *b, self.value(*a).matmul_tn(g)?);
                }
            }
            Op::MatmulNt(a, b) => {
                if self.needs(*a) {
                    self.accumulate(grads, *a, g.matmul(self.value(*b))?);
                }
                if self.needs(*b) {
                    self.accumulate(grads, *b, g.matmul_tn(self.value(*a))?);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                if self.needs(*a) {
                    self.accumulate(grads, *a, g.zip_with(self.value(*b), "mul'", |x, y| x * y)?);
                }
                if self.needs(*b) {
                    self.accumulate(grads, *b, g.zip_with(self.value(*a), "mul'", |x, y| x * y)?);
                }
            }
            Op::AddRow(a, bias) => {
                self.accumulate(grads, *a, g.clone());
                if self.needs(*bias) {
                    let cols = g.cols();
                    let mut gb = vec![0.0; cols];
                    for row in g.data().chunks(cols) {
                        for (s, v) in gb.iter_mut().zip(row) {
                            *s += v;
                        }
                    }
                    let shape = self.shape(*bias).to_vec();
                    self.accumulate(grads, *bias, Tensor::from_parts(shape, gb));
                }
            }
            Op::Scale(a, f) => self.accumulate(grads, *a, g.map(|v| v * f)),
            Op::MulConst(a, c) => self.accumulate(grads, *a, g.zip_with(c, "mul_const'", |x, y| x * y)?),
            Op::Sigmoid(a) => self.accumulate(grads, *a, g.zip_with(out, "sigmoid'", |gv, y| gv * y * (1.0 - y))?),
            Op::Tanh(a) => self.accumulate(grads, *a, g.zip_with(out, "tanh'", |gv, y| gv * (1.0 - y * y))?),
            Op::Relu(a) => {
                let gx = g.zip_with(self.value(*a), "relu'", |gv, x| if x > 0.0 { gv } else { 0.0 })?;
                self.accumulate(grads, *a, gx)
            }
            Op::Exp(a) => self.accumulate(grads, *a, g.zip_with(out, "exp'", |gv, y| gv * y)?),
            Op::Softmax { x, axis } => {
                let (outer, n, inner) = out.axis_split("softmax'", *axis)?;
                let (y, gd) = (out.data(), g.data());
                let mut gx = vec![0.0; y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |j: usize| (o * n + j) * inner + i;
                        let dot: f64 = (0..n).map(|j| gd[idx(j)] * y[idx(j)]).sum();
                        for j in 0..n {
                            gx[idx(j)] = y[idx(j)] * (gd[idx(j)] - dot);
                        }
                    }
                }
                self.accumulate(grads, *x, Tensor::from_parts(out.shape().to_vec(), gx));
            }
            Op::MaskedSoftmax(x) => {
                let cols = out.cols();
                let mut gx = Vec::with_capacity(out.numel());
                for (y, gr) in out.data().chunks(cols).zip(g.data().chunks(cols)) {
                    let dot: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                    gx.extend(y.iter().zip(gr).map(|(yv, gv)| yv * (gv - dot)));
                }
                self.accumulate(grads, *x, Tensor::from_parts(out.shape().to_vec(), gx));
            }
            Op::LogSoftmax(x) => {
                let cols = out.cols();
                let mut gx = Vec::with_capacity(out.numel());
                for (y, gr) in out.data().chunks(cols).zip(g.data().chunks(cols)) {
                    let total: f64 = gr.iter().sum();
                    gx.extend(y.iter().zip(gr).map(|(yv, gv)| gv - yv.exp() * total));
                }
                self.accumulate(grads, *x, Tensor::from_parts(out.shape().to_vec(), gx));
            }
            Op::Transpose(x) => self.accumulate(grads, *x, g.transpose()?),
            Op::Reshape(x) => {
                let shape = self.shape(*x).to_vec();
                self.accumulate(grads, *x, g.reshape(shape)?)
            }
            Op::SliceCols { x, start } => {
                let (rows, cols) = matrix_dims(self.value(*x), "slice_cols'")?;
                let len = g.cols();
                let mut gx = vec![0.0; rows * cols];
                for (r, row) in g.data().chunks(len).enumerate() {
                    gx[r * cols + start..r * cols + start + len].copy_from_slice(row);
                }
                self.accumulate(grads, *x, Tensor::from_parts(vec![rows, cols], gx));
            }
            Op::ConcatCols(parts) => {
                let total = g.cols();
                let mut offset = 0;
                for &p in parts {
                    let (rows, c) = matrix_dims(self.value(p), "concat_cols'")?;
                    if self.needs(p) {
                        let mut gp = Vec::with_capacity(rows * c);
                        for row in g.data().chunks(total) {
                            gp.extend_from_slice(&row[offset..offset + c]);
                        }
                        self.accumulate(grads, p, Tensor::from_parts(vec![rows, c], gp));
                    }
                    offset += c;
                }
            }
            Op::SliceRows { x, start } => {
                let (rows, cols) = matrix_dims(self.value(*x), "slice_rows'")?;
                let mut gx = vec![0.0; rows * cols];
                gx[start * cols..start * cols + g.numel()].copy_from_slice(g.data());
                self.accumulate(grads, *x, Tensor::from_parts(vec![rows, cols], gx));
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.value(p).numel();
                    if self.needs(p) {
                        let shape = self.shape(p).to_vec();
                        let gp = g.data()[offset..offset + n].to_vec();
                        self.accumulate(grads, p, Tensor::from_parts(shape, gp));
                    }
                    offset += n;
                }
            }
            Op::Embedding { table, ids } => {
                let (vocab, dim) = matrix_dims(self.value(*table), "embedding'")?;
                let mut gt = vec![0.0; vocab * dim];
                for (row, &id) in g.data().chunks(dim).zip(ids) {
                    for (t, v) in gt[id * dim..(id + 1) * dim].iter_mut().zip(row) {
                        *t += v;
                    }
                }
                self.accumulate(grads, *table, Tensor::from_parts(vec![vocab, dim], gt));
            }
            Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                let cols = out.cols();
                let gam = self.value(*gamma).data();
                let mut gx = Vec::with_capacity(out.numel());
                let mut ggamma = vec![0.0; cols];
                let mut gbeta = vec![0.0; cols];
                let n = cols as f64;
                for ((gr, xh), is) in g.data().chunks(cols).zip(xhat.data().chunks(cols)).zip(inv_std) {
                    let dxhat: Vec<f64> = gr.iter().zip(gam).map(|(a, b)| a * b).collect();
                    let sum_d: f64 = dxhat.iter().sum();
                    let sum_dx: f64 = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum();
                    gx.extend(
                        dxhat
                            .iter()
                            .zip(xh)
                            .map(|(d, h)| is / n * (n * d - sum_d - h * sum_dx)),
                    );
                    for j in 0..cols {
                        ggamma[j] += gr[j] * xh[j];
                        gbeta[j] += gr[j];
                    }
                }
                self.accumulate(grads, *x, Tensor::from_parts(out.shape().to_vec(), gx));
                let gshape = self.shape(*gamma).to_vec();
                self.accumulate(grads, *gamma, Tensor::from_parts(gshape, ggamma));
                let bshape = self.shape(*beta).to_vec();
                self.accumulate(grads, *beta, Tensor::from_parts(bshape, gbeta));
            }
            Op::Sum(x) => {
                let shape = self.shape(*x).to_vec();
                self.accumulate(grads, *x, Tensor::filled(&shape, g.data()[0]));
            }
            Op::NllSum { logits, targets, probs } => {
                let scale = g.data()[0];
                let vocab = probs.cols();
                let mut gx = vec![0.0; probs.numel()];
                for (r, t) in targets.iter().enumerate() {
                    if let Some(t) = *t {
                        let row = &mut gx[r * vocab..(r + 1) * vocab];
                        row.copy_from_slice(probs.row_slice(r));
                        row[t] -= 1.0;
                        row.iter_mut().for_each(|v| *v *= scale);
                    }
                }
                self.accumulate(grads, *logits, Tensor::from_parts(probs.shape().to_vec(), gx));
            }
            Op::ProbNllSum { probs, targets } => {
                let scale = g.data()[0];
                let p = self.value(*probs);
                let vocab = p.cols();
                let mut gx = vec![0.0; p.numel()];
                for (r, t) in targets.iter().enumerate() {
                    if let Some(t) = *t {
                        let pv = p.get(r, t);
                        if pv > PROB_FLOOR {
                            gx[r * vocab + t] = -scale / pv;
                        }
                    }
                }
                self.accumulate(grads, *probs, Tensor::from_parts(p.shape().to_vec(), gx));
            }
            Op::ScatterAggregate { x, groups, mode, argmax } => {
                let (rows, cols) = matrix_dims(self.value(*x), "scatter_aggregate'")?;
                let n_groups = g.cols();
                let mut gx = vec![0.0; rows * cols];
                for r in 0..rows {
                    match mode {
                        Aggregate::Sum => {
                            for (j, &u) in groups.iter().enumerate() {
                                gx[r * cols + j] = g.data()[r * n_groups + u];
                            }
                        }
                        Aggregate::Max => {
                            for u in 0..n_groups {
                                gx[r * cols + argmax[r * n_groups + u]] += g.data()[r * n_groups + u];
                            }
                        }
                    }
                }
                self.accumulate(grads, *x, Tensor::from_parts(vec![rows, cols], gx));
            }
            Op::ScatterColumns { x, map } => {
                let (rows, cols) = matrix_dims(self.value(*x), "scatter_columns'")?;
                let out_cols = g.cols();
                let mut gx = vec![0.0; rows * cols];
                for r in 0..rows {
                    for (j, &m) in map.iter().enumerate() {
                        gx[r * cols + j] = g.data()[r * out_cols + m];
                    }
                }
                self.accumulate(grads, *x, Tensor::from_parts(vec![rows, cols], gx));
            }
        }
        Ok(())
    }
}

/// Column aggregation shared by the graph op and plain-tensor callers.
/// Returns the merged values and, per output cell, the winning source
/// column (first maximum for `Max`; unused for `Sum`).
pub fn aggregate_columns(
    data: &[f64],
    rows: usize,
    cols: usize,
    groups: &[usize],
    n_groups: usize,
    mode: Aggregate,
) -> (Vec<f64>, Vec<usize>) {
    let init = match mode {
        Aggregate::Sum => 0.0,
        Aggregate::Max => f64::NEG_INFINITY,
    };
    let mut out = vec![init; rows * n_groups];
    let mut argmax = vec![0; rows * n_groups];
    for r in 0..rows {
        for (j, &u) in groups.iter().enumerate() {
            let v = data[r * cols + j];
            let cell = r * n_groups + u;
            match mode {
                Aggregate::Sum => out[cell] += v,
                Aggregate::Max => {
                    if v > out[cell] {
                        out[cell] = v;
                        argmax[cell] = j;
                    }
                }
            }
        }
    }
    (out, argmax)
}

fn matrix_dims(t: &Tensor, op: &'static str) -> Result<(usize, usize)> {
    match t.shape() {
        [r, c] => Ok((*r, *c)),
        s => Err(TensorError::contract(op, format!("expected a matrix, got shape {s:?}"))),
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Gradients produced by [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    param_vars: Vec<Option<Var>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for parameter `id`, or `None` when it did not take part.
    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.param_vars
            .get(id.index())
            .copied()
            .flatten()
            .and_then(|v| self.get(v))
    }

    /// Gradients aligned with the store's parameter order.
    pub fn for_params(&self, store: &ParamStore) -> Vec<Option<Tensor>> {
        store.ids().map(|id| self.param(id).cloned()).collect()
    }
}
