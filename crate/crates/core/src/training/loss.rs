use std::f64::consts::LN_10;

use numcore::{CustomOp, Graph, Real, Tensor, Var};

use crate::error::{Error, Result};

/// Numerical floor inside the negative-SNR objective.
pub const SNR_EPS: f64 = 1e-8;

fn energies<T: Real>(est: &[T], reference: &[T]) -> Result<(f64, f64)> {
    if est.len() != reference.len() {
        return Err(Error::Dim {
            context: "loss signal length",
            expected: reference.len(),
            actual: est.len(),
        });
    }
    let r: f64 = reference.iter().map(|v| v.as_f64().powi(2)).sum();
    if r == 0.0 {
        return Err(Error::ZeroReference);
    }
    let e: f64 = est
        .iter()
        .zip(reference)
        .map(|(a, b)| (b.as_f64() - a.as_f64()).powi(2))
        .sum();
    Ok((r, e))
}

/// `-10 log10(|ref|^2 / (|ref - est|^2 + eps) + eps)` in dB.
pub fn neg_snr<T: Real>(est: &[T], reference: &[T]) -> Result<f64> {
    let (r, e) = energies(est, reference)?;
    Ok(-10.0 * (r / (e + SNR_EPS) + SNR_EPS).log10())
}

struct NegSnrOp {
    reference: Vec<f64>,
    r: f64,
    e: f64,
}

impl<T: Real> CustomOp<T> for NegSnrOp {
    fn name(&self) -> &'static str {
        "neg_snr"
    }

    fn backward(&self, inputs: &[&Tensor<T>], _output: &Tensor<T>, grad_out: &[T]) -> Vec<Option<Vec<T>>> {
        let q = self.r / (self.e + SNR_EPS);
        let k = grad_out[0].as_f64() * 20.0 / LN_10 * self.r / ((q + SNR_EPS) * (self.e + SNR_EPS).powi(2));
        let g = inputs[0]
            .data()
            .iter()
            .zip(&self.reference)
            .map(|(a, b)| T::lit(k * (a.as_f64() - b)))
            .collect();
        vec![Some(g)]
    }
}

/// Negative SNR of a waveform var against a fixed reference, on the tape.
pub fn neg_snr_loss<T: Real>(g: &mut Graph<T>, est: Var, reference: &[T]) -> Result<Var> {
    let (r, e) = energies(g.value(est).data(), reference)?;
    let value = -10.0 * (r / (e + SNR_EPS) + SNR_EPS).log10();
    let op = NegSnrOp {
        reference: reference.iter().map(|v| v.as_f64()).collect(),
        r,
        e,
    };
    Ok(g.custom(&[est], Tensor::scalar(T::lit(value)), Box::new(op))?)
}
