//! The finite-difference battery: every graph op and every layer, each on
//! several seeded random shapes. Shared by the crate's tests and the
//! workspace acceptance run.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::gradcheck::{check, DEFAULT_STEP};
use crate::graph::{Aggregate, Graph, Var};
use crate::layers::{causal_mask, global_attention, FeedForward, LayerNorm, Linear, LstmCell, MultiHeadAttention};
use crate::params::ParamStore;
use crate::tensor::Tensor;

/// Acceptance threshold on the relative error.
pub const TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct Case {
    pub label: &'static str,
    pub seed: u64,
    /// Shapes of the free inputs, then of the parameters.
    pub shapes: Vec<Vec<usize>>,
    pub max_error: f64,
}

#[derive(Default)]
struct Recorder {
    seed: u64,
    cases: Vec<Case>,
}

impl Recorder {
    fn run<F>(&mut self, label: &'static str, store: &ParamStore, inputs: &[Tensor], f: F) -> Result<()>
    where
        F: for<'a, 's> Fn(&'a mut Graph<'s>, &'a [Var]) -> Result<Var>,
    {
        let report = check(store, inputs, f, DEFAULT_STEP)?;
        let shapes = inputs
            .iter()
            .map(|t| t.shape().to_vec())
            .chain(store.iter().map(|(_, _, t)| t.shape().to_vec()))
            .collect();
        self.cases.push(Case { label, seed: self.seed, shapes, max_error: report.max_error() });
        Ok(())
    }
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("shape matches data")
}

fn dims(rng: &mut ChaCha8Rng) -> (usize, usize, usize) {
    (rng.gen_range(1..5), rng.gen_range(1..6), rng.gen_range(1..5))
}

fn binary_ops(r: &mut Recorder, rng: &mut ChaCha8Rng) -> Result<()> {
    let empty = ParamStore::new();
    let (m, k, n) = dims(rng);
    let a = rand_tensor(rng, &[m, k]);
    let b = rand_tensor(rng, &[k, n]);
    let c = rand_tensor(rng, &[m, k]);
    let bt = rand_tensor(rng, &[n, k]);
    let row = rand_tensor(rng, &[k]);
    let mask = rand_tensor(rng, &[m, k]);
    r.run("matmul", &empty, &[a.clone(), b], |g, v| g.matmul(v[0], v[1]))?;
    r.run("matmul_nt", &empty, &[a.clone(), bt], |g, v| g.matmul_nt(v[0], v[1]))?;
    r.run("add", &empty, &[a.clone(), c.clone()], |g, v| g.add(v[0], v[1]))?;
    r.run("sub", &empty, &[a.clone(), c.clone()], |g, v| g.sub(v[0], v[1]))?;
    r.run("mul", &empty, &[a.clone(), c], |g, v| g.mul(v[0], v[1]))?;
    r.run("add_row", &empty, &[a.clone(), row], |g, v| g.add_row(v[0], v[1]))?;
    r.run("self-mul fan-out", &empty, &[a.clone()], |g, v| g.mul(v[0], v[0]))?;
    r.run("mul_const", &empty, &[a], move |g, v| g.mul_const(v[0], mask.clone()))
}

fn unary_ops(r: &mut Recorder, rng: &mut ChaCha8Rng) -> Result<()> {
    let empty = ParamStore::new();
    let (m, k, _) = dims(rng);
    let a = rand_tensor(rng, &[m, k]);
    r.run("scale", &empty, &[a.clone()], |g, v| g.scale(v[0], -1.7))?;
    r.run("sigmoid", &empty, &[a.clone()], |g, v| g.sigmoid(v[0]))?;
    r.run("tanh", &empty, &[a.clone()], |g, v| g.tanh(v[0]))?;
    r.run("exp", &empty, &[a.clone()], |g, v| g.exp(v[0]))?;
    let away_from_kink = a.map(|x| if x.abs() < 0.05 { x + 0.1 } else { x });
    r.run("relu", &empty, &[away_from_kink], |g, v| g.relu(v[0]))?;
    r.run("transpose", &empty, &[a.clone()], |g, v| g.transpose(v[0]))?;
    r.run("reshape", &empty, &[a.clone()], |g, v| {
        let n = g.shape(v[0]).iter().product();
        g.reshape(v[0], vec![n])
    })?;
    r.run("sum", &empty, &[a.clone()], |g, v| g.sum(v[0]))?;
    r.run("mean", &empty, &[a], |g, v| g.mean(v[0]))
}

fn normalisers(r: &mut Recorder, rng: &mut ChaCha8Rng) -> Result<()> {
    let empty = ParamStore::new();
    let (m, k, _) = dims(rng);
    let k = k + 1;
    let a = rand_tensor(rng, &[m, k]);
    r.run("softmax axis 1", &empty, &[a.clone()], |g, v| g.softmax(v[0], 1))?;
    r.run("softmax axis 0", &empty, &[a.clone()], |g, v| g.softmax(v[0], 0))?;
    r.run("log_softmax", &empty, &[a.clone()], |g, v| g.log_softmax(v[0]))?;
    let mask: Vec<bool> = (0..m * k).map(|i| i % k != 0 && rng.gen_bool(0.3)).collect();
    r.run("masked_softmax", &empty, &[a], move |g, v| g.masked_softmax(v[0], &mask))?;
    let gamma = rand_tensor(rng, &[k]);
    let beta = rand_tensor(rng, &[k]);
    let x = rand_tensor(rng, &[m, k]).map(|v| 3.0 * v);
    r.run("layer_norm", &empty, &[x, gamma, beta], |g, v| g.layer_norm(v[0], v[1], v[2], 1e-5))
}

fn structural_ops(r: &mut Recorder, rng: &mut ChaCha8Rng) -> Result<()> {
    let empty = ParamStore::new();
    let (m, k, n) = dims(rng);
    let a = rand_tensor(rng, &[m, k + 2]);
    let b = rand_tensor(rng, &[m, n]);
    let c = rand_tensor(rng, &[n, k + 2]);
    r.run("slice_cols", &empty, &[a.clone()], |g, v| g.slice_cols(v[0], 1, 2))?;
    r.run("slice_rows", &empty, &[a.clone()], |g, v| {
        let rows = g.shape(v[0])[0];
        g.slice_rows(v[0], rows - 1, 1)
    })?;
    r.run("concat_cols", &empty, &[a.clone(), b], |g, v| g.concat_cols(&[v[0], v[1], v[0]]))?;
    r.run("concat_rows", &empty, &[a, c], |g, v| g.concat_rows(&[v[0], v[1]]))?;
    let vocab = rng.gen_range(3..8);
    let table = rand_tensor(rng, &[vocab, k]);
    let ids: Vec<usize> = (0..m + 2).map(|_| rng.gen_range(0..vocab)).collect();
    r.run("embedding", &empty, &[table], move |g, v| g.embedding(v[0], &ids))
}

fn losses_and_copy_ops(r: &mut Recorder, rng: &mut ChaCha8Rng) -> Result<()> {
    let empty = ParamStore::new();
    let rows = rng.gen_range(1..5);
    let vocab = rng.gen_range(2..7);
    let logits = rand_tensor(rng, &[rows, vocab]).map(|v| 2.0 * v);
    let targets: Vec<usize> = (0..rows).map(|_| rng.gen_range(0..vocab)).collect();
    let mut padded = targets.clone();
    padded[0] = 0;
    let t1 = targets.clone();
    r.run("cross_entropy", &empty, &[logits.clone()], move |g, v| g.cross_entropy(v[0], &t1, usize::MAX))?;
    if padded.iter().any(|&t| t != 0) {
        r.run("cross_entropy with pad", &empty, &[logits.clone()], move |g, v| g.cross_entropy(v[0], &padded, 0))?;
    }
    let t3: Vec<Option<usize>> = targets.iter().map(|&t| Some(t)).collect();
    r.run("prob_nll_sum", &empty, &[logits], move |g, v| {
        let p = g.softmax(v[0], 1)?;
        g.prob_nll_sum(p, &t3)
    })?;

    // copy channel: 5 source positions over 3 distinct words
    let scores = rand_tensor(rng, &[rows, 5]);
    let groups = vec![0, 1, 0, 2, 1];
    let g1 = groups.clone();
    r.run("scatter_aggregate sum", &empty, &[scores.clone()], move |g, v| {
        g.scatter_aggregate(v[0], &g1, 3, Aggregate::Sum)
    })?;
    r.run("scatter_aggregate max", &empty, &[scores.clone()], move |g, v| {
        g.scatter_aggregate(v[0], &groups, 3, Aggregate::Max)
    })?;
    let map = vec![2, 0, 2, 1, 3];
    r.run("scatter_columns", &empty, &[scores], move |g, v| g.scatter_columns(v[0], &map, 4))
}

fn recurrent_layers(r: &mut Recorder, rng: &mut ChaCha8Rng) -> Result<()> {
    let d_in = rng.gen_range(1..5);
    let hidden = rng.gen_range(1..4);

    let mut store = ParamStore::new();
    let lin = Linear::new(&mut store, rng, "lin", d_in, hidden, true)?;
    let x = rand_tensor(rng, &[3, d_in]);
    r.run("linear", &store, &[x], move |g, v| lin.forward(g, v[0]))?;

    let mut store = ParamStore::new();
    let cell = LstmCell::new(&mut store, rng, "lstm", d_in, hidden)?;
    // nonzero biases so every gate path is exercised
    let bias = rand_tensor(rng, &[4 * hidden]);
    store.set(cell.bias, bias)?;
    let x = rand_tensor(rng, &[1, d_in]);
    let h = rand_tensor(rng, &[1, hidden]);
    let c = rand_tensor(rng, &[1, hidden]);
    let cell2 = cell.clone();
    r.run("lstm h", &store, &[x.clone(), h.clone(), c.clone()], move |g, v| {
        Ok(cell2.step(g, v[0], v[1], v[2])?.0)
    })?;
    r.run("lstm c", &store, &[x, h, c], move |g, v| Ok(cell.step(g, v[0], v[1], v[2])?.1))?;

    let d = rng.gen_range(1..4);
    let s = rng.gen_range(2..5);
    let q = rand_tensor(rng, &[2, d]);
    let keys = rand_tensor(rng, &[s, d]);
    let vals = rand_tensor(rng, &[s, d + 1]);
    let empty = ParamStore::new();
    r.run("global_attention", &empty, &[q.clone(), keys.clone(), vals.clone()], |g, v| {
        Ok(global_attention(g, v[0], v[1], v[2], None)?.context)
    })?;
    let mut mask = vec![false; s];
    mask[0] = true;
    r.run("global_attention masked", &empty, &[q, keys, vals], move |g, v| {
        Ok(global_attention(g, v[0], v[1], v[2], Some(&mask))?.context)
    })
}

fn transformer_layers(r: &mut Recorder, rng: &mut ChaCha8Rng, heads: usize) -> Result<()> {
    let d_model = heads * rng.gen_range(1..3);
    let tq = rng.gen_range(1..4);
    let tk = rng.gen_range(1..4);

    let mut store = ParamStore::new();
    let mha = MultiHeadAttention::new(&mut store, rng, "mha", d_model, heads)?;
    let q = rand_tensor(rng, &[tq, d_model]);
    let kv = rand_tensor(rng, &[tk, d_model]);
    let m2 = mha.clone();
    r.run("mha", &store, &[q.clone(), kv], move |g, v| Ok(m2.forward(g, v[0], v[1], v[1], None, 0.0)?.output))?;
    let mask = causal_mask(tq);
    r.run("mha causal self-attention", &store, &[q], move |g, v| {
        Ok(mha.forward(g, v[0], v[0], v[0], Some(&mask), 0.0)?.output)
    })?;

    let mut store = ParamStore::new();
    let ffn = FeedForward::new(&mut store, rng, "ffn", d_model, 2 * d_model + 1)?;
    let x = rand_tensor(rng, &[tq, d_model]);
    r.run("ffn", &store, &[x], move |g, v| ffn.forward(g, v[0], 0.0))?;

    let mut store = ParamStore::new();
    let ln = LayerNorm::new(&mut store, rng, "ln", d_model + 1)?;
    let x = rand_tensor(rng, &[tq, d_model + 1]).map(|v| v * 2.0);
    r.run("layer_norm layer", &store, &[x], move |g, v| ln.forward(g, v[0]))
}

pub type Group = fn(&mut Vec<Case>, u64) -> Result<()>;

macro_rules! group {
    ($name:ident, $body:expr) => {
        pub fn $name(out: &mut Vec<Case>, seed: u64) -> Result<()> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut r = Recorder { seed, cases: Vec::new() };
            #[allow(clippy::redundant_closure_call)]
            ($body)(&mut r, &mut rng)?;
            out.append(&mut r.cases);
            Ok(())
        }
    };
}

group!(binary, binary_ops);
group!(unary, unary_ops);
group!(normalising, normalisers);
group!(structural, structural_ops);
group!(losses, losses_and_copy_ops);
group!(recurrent, recurrent_layers);
group!(transformer, |r: &mut Recorder, rng: &mut ChaCha8Rng| {
    let heads = [1, 2, 4][(r.seed % 3) as usize];
    transformer_layers(r, rng, heads)
});

/// Every group on `seeds_per_group` consecutive seeds.
pub fn run_all(seeds_per_group: u64) -> Result<Vec<Case>> {
    let groups: [Group; 7] = [binary, unary, normalising, structural, losses, recurrent, transformer];
    let mut out = Vec::new();
    for (g, run) in groups.iter().enumerate() {
        for s in 0..seeds_per_group {
            run(&mut out, 10 * g as u64 + s)?;
        }
    }
    Ok(out)
}
