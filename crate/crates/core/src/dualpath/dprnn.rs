use numcore::{Graph, ParamStore, Real, Rng, Var};

use super::{DualBlock, PathSelector, Scheme};
use crate::error::{Error, Result};
use crate::layers::{NormKind, NormMode};

/// Intra-chunk plus inter-chunk processing of a `C x K_c x N` tensor.
///
/// The intra block is always a standard bidirectional block with gLN. The
/// inter block carries the online/offline distinction.
#[derive(Clone, Debug, PartialEq)]
pub struct DprnnBlock {
    pub intra: DualBlock,
    pub inter: DualBlock,
}

impl DprnnBlock {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        scheme: Scheme,
        channels: usize,
        hidden: usize,
        inter_norm: NormKind,
        rng: &mut Rng,
    ) -> Self {
        let intra = DualBlock::new(
            store,
            &format!("{name}.intra"),
            Scheme::Standard,
            channels,
            hidden,
            NormKind::Gln,
            rng,
        );
        let inter = DualBlock::new(store, &format!("{name}.inter"), scheme, channels, hidden, inter_norm, rng);
        Self { intra, inter }
    }

    pub fn num_params(&self) -> usize {
        self.intra.num_params() + self.inter.num_params()
    }

    /// `c (chunks x chunk_len x N) -> same shape`.
    ///
    /// Online, the intra gLN statistics are taken per chunk so nothing leaks
    /// from later chunks.
    pub fn forward<T: Real>(&self, g: &mut Graph<T>, c: Var, path: PathSelector) -> Result<Var> {
        if g.shape(c).len() != 3 {
            return Err(Error::Config(format!(
                "dual-path block expects chunks x chunk_len x N, got {:?}",
                g.shape(c)
            )));
        }
        let intra_mode = match path {
            PathSelector::Online => NormMode::PerRow,
            PathSelector::Offline => NormMode::Global,
        };
        let y = self.intra.forward_with(g, c, PathSelector::Offline, intra_mode, false)?;
        let inter_mode = match (self.inter.norm_kind, path) {
            (NormKind::Cln, _) => NormMode::Cumulative,
            (NormKind::Gln, PathSelector::Offline) => NormMode::Global,
            (NormKind::Gln, PathSelector::Online) => return Err(Error::NonCausalNorm("inter-chunk block")),
        };
        self.inter.forward_with(g, y, path, inter_mode, true)
    }

    /// The same parameters with a standard inter block.
    pub fn as_standard(&self) -> DprnnBlock {
        DprnnBlock {
            intra: self.intra.clone(),
            inter: self.inter.as_standard(),
        }
    }
}

pub fn dprnn_stack_forward<T: Real>(
    g: &mut Graph<T>,
    blocks: &[DprnnBlock],
    c: Var,
    path: PathSelector,
) -> Result<Var> {
    let mut y = c;
    for b in blocks {
        y = b.forward(g, y, path)?;
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use numcore::Tensor;

    use super::*;

    fn build(scheme: Scheme, n: usize, h: usize, seed: u64) -> (ParamStore<f64>, DprnnBlock) {
        let mut store = ParamStore::new();
        let b = DprnnBlock::new(&mut store, "d", scheme, n, h, NormKind::Cln, &mut Rng::new(seed));
        (store, b)
    }

    fn run(store: &ParamStore<f64>, b: &DprnnBlock, x: &Tensor<f64>, path: PathSelector) -> Tensor<f64> {
        let mut g = Graph::inference(store);
        let v = g.constant(x.clone()).unwrap();
        let y = b.forward(&mut g, v, path).unwrap();
        g.value(y).clone()
    }

    #[test]
    fn single_chunk_paths_agree() {
        let (store, b) = build(Scheme::Reorganized, 3, 4, 0);
        let x = Tensor::uniform(&[1, 6, 3], -1.0, 1.0, &mut Rng::new(1));
        let on = run(&store, &b, &x, PathSelector::Online);
        let off = run(&store, &b, &x, PathSelector::Offline);
        assert!(on.max_abs_diff(&off) < 1e-12);
    }

    #[test]
    fn zero_weights_are_identity() {
        for scheme in [Scheme::Decomposed, Scheme::Reorganized] {
            let (mut store, b) = build(scheme, 3, 2, 2);
            let keep = [b.intra.norm.gamma, b.inter.norm.gamma];
            let ids: Vec<_> = store.ids().collect();
            for id in ids {
                if !keep.contains(&id) {
                    store.get_mut(id).data_mut().fill(0.0);
                }
            }
            let x = Tensor::uniform(&[3, 4, 3], -1.0, 1.0, &mut Rng::new(3));
            for path in [PathSelector::Online, PathSelector::Offline] {
                assert_eq!(run(&store, &b, &x, path), x);
            }
        }
    }

    #[test]
    fn online_path_is_chunk_causal() {
        for scheme in [Scheme::Decomposed, Scheme::Reorganized] {
            let (store, b) = build(scheme, 3, 4, 4);
            let mut rng = Rng::new(5);
            let x = Tensor::uniform(&[5, 4, 3], -1.0, 1.0, &mut rng);
            let base = run(&store, &b, &x, PathSelector::Online);
            for c in 0..4 {
                let mut y = x.clone();
                let w = 4 * 3;
                for v in &mut y.data_mut()[(c + 1) * w..] {
                    *v += rng.uniform(-3.0, 3.0);
                }
                let out = run(&store, &b, &y, PathSelector::Online);
                let upto = (c + 1) * w;
                let d = base.data()[..upto]
                    .iter()
                    .zip(&out.data()[..upto])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                assert!(d < 1e-7, "scheme {scheme}, chunk {c}: {d}");
            }
        }
    }

    #[test]
    fn offline_path_matches_standard_rebuild() {
        let (store, b) = build(Scheme::Decomposed, 3, 4, 6);
        let x = Tensor::uniform(&[3, 4, 3], -1.0, 1.0, &mut Rng::new(7));
        let a = run(&store, &b, &x, PathSelector::Offline);
        let s = run(&store, &b.as_standard(), &x, PathSelector::Offline);
        assert_eq!(a, s);
    }

    #[test]
    fn gln_inter_block_has_no_online_path() {
        let mut store = ParamStore::<f64>::new();
        let b = DprnnBlock::new(&mut store, "d", Scheme::Reorganized, 2, 2, NormKind::Gln, &mut Rng::new(0));
        let mut g = Graph::inference(&store);
        let v = g.constant(Tensor::zeros(&[2, 2, 2])).unwrap();
        assert!(matches!(
            b.forward(&mut g, v, PathSelector::Online),
            Err(Error::NonCausalNorm(_))
        ));
    }
}
