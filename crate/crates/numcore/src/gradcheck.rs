//! Central finite-difference gradient checking in 64-bit.

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::params::ParamStore;
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckOptions {
    pub eps: f64,
    pub tol: f64,
    /// Check at most this many randomly chosen elements per tensor.
    pub max_per_tensor: Option<usize>,
    pub seed: u64,
    /// Smallest denominator of the relative error. Gradients far below the
    /// finite-difference rounding noise are compared on this scale.
    pub floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            tol: 1e-4,
            max_per_tensor: None,
            seed: 0,
            floor: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// max |analytic - numeric| / max(|analytic|, |numeric|, floor)
    pub max_rel_err: f64,
    pub pass: bool,
    pub checked: usize,
    /// (tensor index, element index) of the worst element.
    pub worst: Option<(usize, usize)>,
}

fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn pick_elements(len: usize, max: Option<usize>, rng: &mut Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..len).collect();
    if let Some(m) = max {
        if m < len {
            rng.shuffle(&mut idx);
            idx.truncate(m);
            idx.sort_unstable();
        }
    }
    idx
}

/// Compares the tape gradient of scalar `f` at `x` against central differences.
pub fn grad_check<F>(f: F, x: &Tensor<f64>, eps: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, Var) -> Result<Var>,
{
    let opts = GradCheckOptions {
        eps,
        tol,
        ..Default::default()
    };
    grad_check_inputs(|g, vs| f(g, vs[0]), std::slice::from_ref(x), &opts)
}

/// Gradient check over several input tensors at once.
pub fn grad_check_inputs<F>(
    f: F,
    xs: &[Tensor<f64>],
    opts: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let eval = |inputs: &[Tensor<f64>], grads: bool| -> Result<(f64, Vec<Vec<f64>>)> {
        let mut g = Graph::new();
        let vars = inputs
            .iter()
            .map(|t| g.leaf(t.clone(), grads))
            .collect::<Result<Vec<_>>>()?;
        let y = f(&mut g, &vars)?;
        let value = g.scalar(y);
        let mut out = Vec::new();
        if grads {
            g.backward(y)?;
            for (v, t) in vars.iter().zip(inputs) {
                out.push(g.grad(*v).map(|s| s.to_vec()).unwrap_or(vec![0.0; t.len()]));
            }
        }
        Ok((value, out))
    };

    let (first, analytic) = eval(xs, true)?;
    let (second, _) = eval(xs, false)?;
    if first.to_bits() != second.to_bits() {
        return Err(Error::NonDeterministic { first, second });
    }

    let mut rng = Rng::new(opts.seed);
    let mut work = xs.to_vec();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        pass: true,
        checked: 0,
        worst: None,
    };
    for ti in 0..work.len() {
        for ei in pick_elements(work[ti].len(), opts.max_per_tensor, &mut rng) {
            let orig = work[ti].data()[ei];
            work[ti].data_mut()[ei] = orig + opts.eps;
            let (plus, _) = eval(&work, false)?;
            work[ti].data_mut()[ei] = orig - opts.eps;
            let (minus, _) = eval(&work, false)?;
            work[ti].data_mut()[ei] = orig;
            let numeric = (plus - minus) / (2.0 * opts.eps);
            let err = rel_err(analytic[ti][ei], numeric, opts.floor);
            report.checked += 1;
            if err > report.max_rel_err || report.worst.is_none() {
                report.max_rel_err = err;
                report.worst = Some((ti, ei));
            }
        }
    }
    report.pass = report.max_rel_err < opts.tol;
    Ok(report)
}

/// Gradient check over every tensor in a parameter store. `f` builds the
/// scalar objective on a tape bound to the (possibly perturbed) store.
pub fn grad_check_params<F>(
    store: &ParamStore<f64>,
    f: F,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>) -> Result<Var>,
{
    let eval = |s: &ParamStore<f64>, grads: bool| -> Result<(f64, Vec<(usize, Vec<f64>)>)> {
        let mut g = if grads {
            Graph::with_params(s)
        } else {
            Graph::inference(s)
        };
        let y = f(&mut g)?;
        let value = g.scalar(y);
        let mut out = Vec::new();
        if grads {
            g.backward(y)?;
            out = g
                .param_grads()
                .into_iter()
                .map(|(id, gr)| (id.index(), gr.to_vec()))
                .collect();
        }
        Ok((value, out))
    };

    let (first, analytic) = eval(store, true)?;
    let (second, _) = eval(store, false)?;
    if first.to_bits() != second.to_bits() {
        return Err(Error::NonDeterministic { first, second });
    }

    let mut rng = Rng::new(opts.seed);
    let mut work = store.clone();
    let ids: Vec<_> = store.ids().collect();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        pass: true,
        checked: 0,
        worst: None,
    };
    for id in ids {
        let grad = analytic
            .iter()
            .find(|(i, _)| *i == id.index())
            .map(|(_, g)| g.clone())
            .unwrap_or_else(|| vec![0.0; store.get(id).len()]);
        for ei in pick_elements(store.get(id).len(), opts.max_per_tensor, &mut rng) {
            let orig = work.get(id).data()[ei];
            work.get_mut(id).data_mut()[ei] = orig + opts.eps;
            let (plus, _) = eval(&work, false)?;
            work.get_mut(id).data_mut()[ei] = orig - opts.eps;
            let (minus, _) = eval(&work, false)?;
            work.get_mut(id).data_mut()[ei] = orig;
            let numeric = (plus - minus) / (2.0 * opts.eps);
            let err = rel_err(grad[ei], numeric, opts.floor);
            report.checked += 1;
            if err > report.max_rel_err || report.worst.is_none() {
                report.max_rel_err = err;
                report.worst = Some((id.index(), ei));
            }
        }
    }
    report.pass = report.max_rel_err < opts.tol;
    Ok(report)
}
