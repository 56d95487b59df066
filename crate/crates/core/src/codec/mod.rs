//! Signal encoders and decoders: STFT magnitude analysis with mixture-phase
//! resynthesis, and a learnable strided convolution codec.

mod conv;
mod stft;

pub use conv::{conv_decode, conv_encode, frame_signal, overlap_add, ConvCodecParams};
pub use stft::{hann, istft, istft_synthesize, stft_analyze, Spectrogram, StftConfig};

use numcore::{Graph, Real, Var};

use crate::dualpath::PathSelector;
use crate::error::{Error, Result};
use crate::layers::{NormKind, NormParams};

/// Normalizes an encoder output `frames x N` with gLN or cLN.
///
/// gLN is rejected on the online path since its statistics span the future.
pub fn encoder_norm<T: Real>(
    g: &mut Graph<T>,
    norm: &NormParams,
    feat: Var,
    kind: NormKind,
    path: PathSelector,
) -> Result<Var> {
    if kind == NormKind::Gln && path == PathSelector::Online {
        return Err(Error::NonCausalNorm("encoder output"));
    }
    norm.forward(g, feat, kind.default_mode())
}

#[cfg(test)]
mod tests {
    use numcore::{ParamStore, Rng, Tensor};

    use super::*;

    fn run(kind: NormKind, x: &Tensor<f64>) -> Tensor<f64> {
        let mut store = ParamStore::new();
        let p = NormParams::new(&mut store, "enc", x.shape()[1]);
        let mut g = Graph::inference(&store);
        let v = g.constant(x.clone()).unwrap();
        let y = encoder_norm(&mut g, &p, v, kind, PathSelector::Offline).unwrap();
        g.value(y).clone()
    }

    #[test]
    fn cumulative_mode_is_causal() {
        let mut rng = Rng::new(0);
        let x = Tensor::uniform(&[6, 4], -1.0, 1.0, &mut rng);
        let mut y = x.clone();
        for v in &mut y.data_mut()[12..] {
            *v = rng.uniform(-5.0, 5.0);
        }
        let (a, b) = (run(NormKind::Cln, &x), run(NormKind::Cln, &y));
        assert_eq!(a.data()[..12], b.data()[..12]);
    }

    #[test]
    fn modes_agree_on_last_frame() {
        let x = Tensor::uniform(&[5, 3], -1.0, 1.0, &mut Rng::new(1));
        let (a, b) = (run(NormKind::Cln, &x), run(NormKind::Gln, &x));
        for j in 12..15 {
            assert!((a.data()[j] - b.data()[j]).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_feature_maps_to_beta() {
        let x = Tensor::full(&[4, 3], 2.5);
        assert!(run(NormKind::Gln, &x).data().iter().all(|v| *v == 0.0));
        assert!(run(NormKind::Cln, &x).data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn global_norm_rejected_online() {
        let mut store = ParamStore::<f64>::new();
        let p = NormParams::new(&mut store, "enc", 2);
        let mut g = Graph::inference(&store);
        let v = g.constant(Tensor::zeros(&[2, 2])).unwrap();
        assert!(encoder_norm(&mut g, &p, v, NormKind::Gln, PathSelector::Online).is_err());
    }
}
