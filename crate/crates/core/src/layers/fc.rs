use numcore::{Graph, ParamId, ParamStore, Real, Rng, Var};

use super::{init_uniform, SequenceFeature};
use crate::error::{Error, Result};

/// Fully-connected layer applied to the last axis.
#[derive(Clone, Debug, PartialEq)]
pub struct FcParams {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl FcParams {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut Rng,
    ) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let weight = store.add(format!("{name}.weight"), init_uniform(&[out_dim, in_dim], bound, rng));
        let bias = store.add(format!("{name}.bias"), init_uniform(&[out_dim], bound, rng));
        Self {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    pub fn num_params(&self) -> usize {
        (self.in_dim + 1) * self.out_dim
    }

    /// `x[..., in] -> x[..., out]`.
    pub fn forward<T: Real>(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        let shape = g.shape(x).to_vec();
        let last = *shape.last().ok_or(Error::EmptySequence)?;
        if last != self.in_dim {
            return Err(Error::Dim {
                context: "fc input",
                expected: self.in_dim,
                actual: last,
            });
        }
        let rows = shape[..shape.len() - 1].iter().product();
        let flat = g.reshape(x, &[rows, self.in_dim])?;
        let w = g.param(self.weight)?;
        let b = g.param(self.bias)?;
        let y = g.matmul_nt(flat, w)?;
        let y = g.add_bias(y, b)?;
        let mut out_shape = shape;
        *out_shape.last_mut().expect("non-empty") = self.out_dim;
        Ok(g.reshape(y, &out_shape)?)
    }
}

/// Per-frame affine map of a sequence feature.
pub fn fc_forward<T: Real>(
    store: &ParamStore<T>,
    p: &FcParams,
    x: &SequenceFeature<T>,
) -> Result<SequenceFeature<T>> {
    let mut g = Graph::inference(store);
    let v = g.constant(x.data.clone())?;
    let y = p.forward(&mut g, v)?;
    SequenceFeature::new(g.value(y).clone(), x.frame_hop_ms)
}

#[cfg(test)]
mod tests {
    use numcore::Tensor;

    use super::*;

    fn setup(w: Vec<f64>, b: Vec<f64>, i: usize, o: usize) -> (ParamStore<f64>, FcParams) {
        let mut store = ParamStore::new();
        let p = FcParams::new(&mut store, "fc", i, o, &mut Rng::new(0));
        store.get_mut(p.weight).data_mut().copy_from_slice(&w);
        store.get_mut(p.bias).data_mut().copy_from_slice(&b);
        (store, p)
    }

    #[test]
    fn identity_weight_is_identity() {
        let (store, p) = setup(vec![1., 0., 0., 1.], vec![0., 0.], 2, 2);
        let x = SequenceFeature::from_frames(&[vec![1.5, -2.0], vec![0.25, 3.0]], 8.0).unwrap();
        assert_eq!(fc_forward(&store, &p, &x).unwrap(), x);
    }

    #[test]
    fn zero_weight_gives_bias() {
        let (store, p) = setup(vec![0.; 6], vec![0.5, -1.0, 2.0], 2, 3);
        let x = SequenceFeature::from_frames(&[vec![1.5, -2.0], vec![0.25, 3.0]], 8.0).unwrap();
        let y = fc_forward(&store, &p, &x).unwrap();
        for k in 0..2 {
            assert_eq!(y.frame(k), &[0.5, -1.0, 2.0]);
        }
    }

    #[test]
    fn matches_scalar_affine_oracle() {
        let mut rng = Rng::new(3);
        let w: Vec<f64> = (0..6).map(|_| rng.uniform(-1., 1.)).collect();
        let b: Vec<f64> = (0..2).map(|_| rng.uniform(-1., 1.)).collect();
        let (store, p) = setup(w.clone(), b.clone(), 3, 2);
        let x = Tensor::uniform(&[4, 3], -1.0, 1.0, &mut rng);
        let feat = SequenceFeature::new(x.clone(), 1.0).unwrap();
        let y = fc_forward(&store, &p, &feat).unwrap();
        for k in 0..4 {
            for o in 0..2 {
                let mut acc = b[o];
                for i in 0..3 {
                    acc += w[o * 3 + i] * x.data()[k * 3 + i];
                }
                assert!((y.frame(k)[o] - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn input_dim_mismatch() {
        let (store, p) = setup(vec![0.; 6], vec![0.; 3], 2, 3);
        let x = SequenceFeature::from_frames(&[vec![1.0, 2.0, 3.0]], 8.0).unwrap();
        assert!(matches!(fc_forward(&store, &p, &x), Err(Error::Dim { .. })));
    }
}
