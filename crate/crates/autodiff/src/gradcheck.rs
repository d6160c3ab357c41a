//! Central finite-difference oracle for checking analytic gradients.
//!
//! The oracle only ever evaluates the forward pass; it shares no code with
//! [`Graph::backward`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::params::ParamStore;
use crate::tensor::Tensor;

pub const DEFAULT_STEP: f64 = 1e-5;

/// Relative errors between analytic and numeric gradients.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// One entry per free input, in order.
    pub inputs: Vec<f64>,
    /// One entry per parameter of the store, in store order.
    pub params: Vec<(String, f64)>,
}

impl GradCheckReport {
    pub fn max_error(&self) -> f64 {
        self.inputs
            .iter()
            .copied()
            .chain(self.params.iter().map(|(_, e)| *e))
            .fold(0.0, f64::max)
    }
}

/// `‖a − n‖ / max(‖a‖, ‖n‖)`, falling back to the absolute difference when
/// both gradients are essentially zero.
pub fn relative_error(analytic: &Tensor, numeric: &Tensor) -> f64 {
    let diff = analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(a, n)| (a - n) * (a - n))
        .sum::<f64>()
        .sqrt();
    let scale = analytic.norm().max(numeric.norm());
    if scale < 1e-8 {
        diff
    } else {
        diff / scale
    }
}

/// Checks `f` against finite differences w.r.t. every input and every
/// parameter in `store`. Non-scalar outputs are reduced with fixed random
/// weights so that no output direction is left unchecked.
pub fn check<F>(store: &ParamStore, inputs: &[Tensor], f: F, step: f64) -> Result<GradCheckReport>
where
    F: for<'a, 's> Fn(&'a mut Graph<'s>, &'a [Var]) -> Result<Var>,
{
    let weights = |shape: &[usize]| {
        let mut rng = ChaCha8Rng::seed_from_u64(0x9e37);
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(0.5..1.5)).collect())
    };
    let reduce = |g: &mut Graph, out: Var| -> Result<Var> {
        let w = weights(g.shape(out))?;
        let wv = g.constant(w);
        let weighted = g.mul(out, wv)?;
        g.sum(weighted)
    };
    let eval = |store: &ParamStore, inputs: &[Tensor]| -> Result<f64> {
        let mut g = Graph::with_params(store);
        let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        let loss = reduce(&mut g, out)?;
        g.value(loss).item()
    };

    let mut g = Graph::with_params(store);
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect();
    for id in store.ids() {
        g.param(id);
    }
    let out = f(&mut g, &vars)?;
    let loss = reduce(&mut g, out)?;
    let grads = g.backward(loss)?;

    let mut report = GradCheckReport {
        inputs: Vec::new(),
        params: Vec::new(),
    };
    for (i, input) in inputs.iter().enumerate() {
        let analytic = grads.get(vars[i]).cloned().unwrap_or_else(|| Tensor::zeros(input.shape()));
        let mut numeric = Tensor::zeros(input.shape());
        let mut perturbed = inputs.to_vec();
        for j in 0..input.numel() {
            let orig = input.data()[j];
            perturbed[i].data_mut()[j] = orig + step;
            let plus = eval(store, &perturbed)?;
            perturbed[i].data_mut()[j] = orig - step;
            let minus = eval(store, &perturbed)?;
            perturbed[i].data_mut()[j] = orig;
            numeric.data_mut()[j] = (plus - minus) / (2.0 * step);
        }
        report.inputs.push(relative_error(&analytic, &numeric));
    }
    let mut scratch = store.clone();
    for id in store.ids() {
        let original = store.get(id).clone();
        let analytic = grads.param(id).cloned().unwrap_or_else(|| Tensor::zeros(original.shape()));
        let mut numeric = Tensor::zeros(original.shape());
        for j in 0..original.numel() {
            let orig = original.data()[j];
            scratch.get_mut(id).data_mut()[j] = orig + step;
            let plus = eval(&scratch, inputs)?;
            scratch.get_mut(id).data_mut()[j] = orig - step;
            let minus = eval(&scratch, inputs)?;
            scratch.get_mut(id).data_mut()[j] = orig;
            numeric.data_mut()[j] = (plus - minus) / (2.0 * step);
        }
        report.params.push((store.name(id).to_string(), relative_error(&analytic, &numeric)));
    }
    Ok(report)
}
