use numcore::{CustomOp, Graph, ParamId, ParamStore, Real, Tensor, Var};

use super::SequenceFeature;
use crate::error::{Error, Result};

/// Which normalization a layer is configured with.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    /// Global layer normalization.
    Gln,
    /// Cumulative layer normalization.
    Cln,
}

impl NormKind {
    pub fn default_mode(self) -> NormMode {
        match self {
            NormKind::Gln => NormMode::Global,
            NormKind::Cln => NormMode::Cumulative,
        }
    }
}

/// Statistics domain for row `t` of a tensor whose leading axis is time.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormMode {
    /// Every element of the tensor.
    Global,
    /// Every element of rows `0..=t`.
    Cumulative,
    /// Only the elements of row `t`.
    PerRow,
}

/// Shared scale/shift of a normalization layer.
#[derive(Clone, Debug, PartialEq)]
pub struct NormParams {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub eps: f64,
    pub channels: usize,
}

pub const DEFAULT_NORM_EPS: f64 = 1e-8;

impl NormParams {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, channels: usize) -> Self {
        let gamma = store.add(format!("{name}.gamma"), Tensor::full(&[channels], T::one()));
        let beta = store.add(format!("{name}.beta"), Tensor::zeros(&[channels]));
        Self {
            gamma,
            beta,
            eps: DEFAULT_NORM_EPS,
            channels,
        }
    }

    pub fn num_params(&self) -> usize {
        2 * self.channels
    }

    /// Normalizes `x (rows x ... x N)`; `gamma`/`beta` act on the last axis.
    pub fn forward<T: Real>(&self, g: &mut Graph<T>, x: Var, mode: NormMode) -> Result<Var> {
        let shape = g.shape(x).to_vec();
        if shape.len() < 2 {
            return Err(Error::Config(format!(
                "normalization input needs a time axis and a channel axis, got {shape:?}"
            )));
        }
        let n = *shape.last().expect("checked");
        if n != self.channels {
            return Err(Error::Dim {
                context: "norm channels",
                expected: self.channels,
                actual: n,
            });
        }
        let rows = shape[0];
        if rows == 0 {
            return Err(Error::EmptySequence);
        }
        let gamma = g.param(self.gamma)?;
        let beta = g.param(self.beta)?;
        let xs = g.value(x).data();
        let width = xs.len() / rows;
        let stats = row_stats(xs, rows, width, mode, self.eps);

        let gm = g.value(gamma).data();
        let bt = g.value(beta).data();
        let mut out = Vec::with_capacity(xs.len());
        for t in 0..rows {
            let (mu, r) = (stats.mean[t], stats.rstd[t]);
            for (k, v) in xs[t * width..(t + 1) * width].iter().enumerate() {
                let j = k % n;
                let xh = (v.as_f64() - mu) * r;
                out.push(T::lit(xh * gm[j].as_f64() + bt[j].as_f64()));
            }
        }
        let out = Tensor::new(&shape, out)?;
        let op = NormOp {
            mode,
            rows,
            width,
            channels: n,
            stats,
        };
        Ok(g.custom(&[x, gamma, beta], out, Box::new(op))?)
    }
}

struct RowStats {
    mean: Vec<f64>,
    rstd: Vec<f64>,
    /// number of elements in each row's statistics domain
    count: Vec<f64>,
}

fn row_stats<T: Real>(xs: &[T], rows: usize, width: usize, mode: NormMode, eps: f64) -> RowStats {
    let mut mean = Vec::with_capacity(rows);
    let mut rstd = Vec::with_capacity(rows);
    let mut count = Vec::with_capacity(rows);
    let two_pass = |s: &[T]| -> (f64, f64) {
        let n = s.len() as f64;
        let m = s.iter().map(|v| v.as_f64()).sum::<f64>() / n;
        let var = s.iter().map(|v| (v.as_f64() - m).powi(2)).sum::<f64>() / n;
        (m, var)
    };
    match mode {
        NormMode::Global => {
            let (m, var) = two_pass(xs);
            for _ in 0..rows {
                mean.push(m);
                rstd.push(1.0 / (var + eps).sqrt());
                count.push(xs.len() as f64);
            }
        }
        NormMode::PerRow => {
            for t in 0..rows {
                let (m, var) = two_pass(&xs[t * width..(t + 1) * width]);
                mean.push(m);
                rstd.push(1.0 / (var + eps).sqrt());
                count.push(width as f64);
            }
        }
        NormMode::Cumulative => {
            let mut acc = CumulativeStats::default();
            for t in 0..rows {
                acc.push(&xs[t * width..(t + 1) * width]);
                let (m, var) = acc.mean_var();
                mean.push(m);
                rstd.push(1.0 / (var + eps).sqrt());
                count.push(acc.count);
            }
        }
    }
    RowStats { mean, rstd, count }
}

/// Running sums of values and squares over every frame seen so far.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CumulativeStats {
    pub count: f64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl CumulativeStats {
    pub fn push<T: Real>(&mut self, frame: &[T]) {
        for v in frame {
            let v = v.as_f64();
            self.sum += v;
            self.sum_sq += v * v;
        }
        self.count += frame.len() as f64;
    }

    /// Mean and biased variance of all values pushed so far.
    pub fn mean_var(&self) -> (f64, f64) {
        let m = self.sum / self.count;
        (m, (self.sum_sq / self.count - m * m).max(0.0))
    }
}

struct NormOp {
    mode: NormMode,
    rows: usize,
    width: usize,
    channels: usize,
    stats: RowStats,
}

impl<T: Real> CustomOp<T> for NormOp {
    fn name(&self) -> &'static str {
        "layer_norm"
    }

    fn backward(&self, inputs: &[&Tensor<T>], _output: &Tensor<T>, grad_out: &[T]) -> Vec<Option<Vec<T>>> {
        let (rows, width, n) = (self.rows, self.width, self.channels);
        let xs = inputs[0].data();
        let gamma = inputs[1].data();
        let s = &self.stats;

        let mut dgamma = vec![0.0; n];
        let mut dbeta = vec![0.0; n];
        // per-row sums of gxh * (x - mu) and gxh
        let mut a = vec![0.0; rows];
        let mut b = vec![0.0; rows];
        for t in 0..rows {
            for k in 0..width {
                let i = t * width + k;
                let j = k % n;
                let gy = grad_out[i].as_f64();
                let xc = xs[i].as_f64() - s.mean[t];
                dgamma[j] += gy * xc * s.rstd[t];
                dbeta[j] += gy;
                let gxh = gy * gamma[j].as_f64();
                a[t] += gxh * xc;
                b[t] += gxh;
            }
        }
        if self.mode == NormMode::Global {
            let (at, bt): (f64, f64) = (a.iter().sum(), b.iter().sum());
            a.fill(0.0);
            b.fill(0.0);
            a[0] = at;
            b[0] = bt;
        }
        // d(mean)/n and d(mean of squares)/n for each statistics row
        let mut dmu = vec![0.0; rows];
        let mut dm2 = vec![0.0; rows];
        for t in 0..rows {
            let r = s.rstd[t];
            let dvar = -0.5 * r * r * r * a[t];
            dmu[t] = (-r * b[t] - 2.0 * s.mean[t] * dvar) / s.count[t];
            dm2[t] = dvar / s.count[t];
        }
        // p[s], q[s]: summed over statistics rows whose domain contains row s
        let (p, q) = match self.mode {
            NormMode::PerRow => (dmu, dm2),
            NormMode::Global => (vec![dmu[0]; rows], vec![dm2[0]; rows]),
            NormMode::Cumulative => {
                let mut p = vec![0.0; rows];
                let mut q = vec![0.0; rows];
                let (mut ps, mut qs) = (0.0, 0.0);
                for t in (0..rows).rev() {
                    ps += dmu[t];
                    qs += dm2[t];
                    p[t] = ps;
                    q[t] = qs;
                }
                (p, q)
            }
        };
        let mut dx = Vec::with_capacity(xs.len());
        for t in 0..rows {
            for k in 0..width {
                let i = t * width + k;
                let gxh = grad_out[i].as_f64() * gamma[k % n].as_f64();
                let x = xs[i].as_f64();
                dx.push(T::lit(gxh * s.rstd[t] + p[t] + 2.0 * x * q[t]));
            }
        }
        let cast = |v: Vec<f64>| v.into_iter().map(T::lit).collect::<Vec<T>>();
        vec![Some(dx), Some(cast(dgamma)), Some(cast(dbeta))]
    }
}

/// Normalizes a sequence feature on an inference tape.
pub fn norm_forward<T: Real>(
    store: &ParamStore<T>,
    p: &NormParams,
    f: &SequenceFeature<T>,
    mode: NormMode,
) -> Result<SequenceFeature<T>> {
    let mut g = Graph::inference(store);
    let v = g.constant(f.data.clone())?;
    let y = p.forward(&mut g, v, mode)?;
    SequenceFeature::new(g.value(y).clone(), f.frame_hop_ms)
}

/// Global layer normalization: statistics over all frames and channels.
pub fn gln_forward<T: Real>(
    store: &ParamStore<T>,
    p: &NormParams,
    f: &SequenceFeature<T>,
) -> Result<SequenceFeature<T>> {
    norm_forward(store, p, f, NormMode::Global)
}

/// Cumulative layer normalization: frame `k` uses statistics of frames `1..=k`.
pub fn cln_forward<T: Real>(
    store: &ParamStore<T>,
    p: &NormParams,
    f: &SequenceFeature<T>,
) -> Result<SequenceFeature<T>> {
    norm_forward(store, p, f, NormMode::Cumulative)
}

/// Frame-by-frame cumulative normalization with O(1) state per frame.
#[derive(Clone, Debug)]
pub struct ClnStream {
    gamma: Vec<f64>,
    beta: Vec<f64>,
    eps: f64,
    stats: CumulativeStats,
}

impl ClnStream {
    pub fn new<T: Real>(store: &ParamStore<T>, p: &NormParams) -> Self {
        Self {
            gamma: store.get(p.gamma).data().iter().map(|v| v.as_f64()).collect(),
            beta: store.get(p.beta).data().iter().map(|v| v.as_f64()).collect(),
            eps: p.eps,
            stats: CumulativeStats::default(),
        }
    }

    pub fn frames_seen(&self) -> usize {
        self.stats.count as usize / self.gamma.len().max(1)
    }

    pub fn push<T: Real>(&mut self, frame: &[T]) -> Result<Vec<T>> {
        if frame.len() != self.gamma.len() {
            return Err(Error::Dim {
                context: "cln stream frame",
                expected: self.gamma.len(),
                actual: frame.len(),
            });
        }
        self.stats.push(frame);
        let (m, var) = self.stats.mean_var();
        let r = 1.0 / (var + self.eps).sqrt();
        Ok(frame
            .iter()
            .enumerate()
            .map(|(j, v)| T::lit((v.as_f64() - m) * r * self.gamma[j] + self.beta[j]))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use numcore::Rng;

    use super::*;

    fn setup(n: usize) -> (ParamStore<f64>, NormParams) {
        let mut store = ParamStore::new();
        let p = NormParams::new(&mut store, "norm", n);
        (store, p)
    }

    fn feat(frames: &[Vec<f64>]) -> SequenceFeature<f64> {
        SequenceFeature::from_frames(frames, 1.0).unwrap()
    }

    #[test]
    fn cln_worked_example() {
        let (store, p) = setup(2);
        let y = cln_forward(&store, &p, &feat(&[vec![1.0, 3.0], vec![5.0, 7.0]])).unwrap();
        // frame 1: mean 2, var 1; frame 2: mean 4, var 5
        let want = [
            -1.0 / (1.0f64 + 1e-8).sqrt(),
            1.0 / (1.0f64 + 1e-8).sqrt(),
            1.0 / (5.0f64 + 1e-8).sqrt(),
            3.0 / (5.0f64 + 1e-8).sqrt(),
        ];
        for (a, b) in y.data.data().iter().zip(want) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        assert!((y.frame(1)[0] - 0.4472).abs() < 1e-4);
        assert!((y.frame(1)[1] - 1.3416).abs() < 1e-4);
    }

    #[test]
    fn gln_worked_example() {
        let (store, p) = setup(2);
        let y = gln_forward(&store, &p, &feat(&[vec![1.0, 3.0], vec![5.0, 7.0]])).unwrap();
        let want = [-1.3416, -0.4472, 0.4472, 1.3416];
        for (a, b) in y.data.data().iter().zip(want) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn constant_input_normalizes_to_beta() {
        let (mut store, p) = setup(3);
        store.get_mut(p.beta).data_mut().copy_from_slice(&[0.5, -1.0, 2.0]);
        let f = feat(&[vec![2.0; 3], vec![2.0; 3], vec![2.0; 3]]);
        for mode in [NormMode::Global, NormMode::Cumulative, NormMode::PerRow] {
            let y = norm_forward(&store, &p, &f, mode).unwrap();
            for k in 0..3 {
                assert_eq!(y.frame(k), &[0.5, -1.0, 2.0]);
            }
        }
    }

    #[test]
    fn beta_shift_is_affine() {
        let (mut store, p) = setup(2);
        let f = feat(&[vec![1.0, -3.0], vec![0.5, 7.0], vec![2.0, 2.5]]);
        let base = gln_forward(&store, &p, &f).unwrap();
        store.get_mut(p.beta).data_mut().copy_from_slice(&[0.25, -0.75]);
        let shifted = gln_forward(&store, &p, &f).unwrap();
        for k in 0..3 {
            assert!((shifted.frame(k)[0] - base.frame(k)[0] - 0.25).abs() < 1e-12);
            assert!((shifted.frame(k)[1] - base.frame(k)[1] + 0.75).abs() < 1e-12);
        }
    }

    #[test]
    fn cln_last_frame_equals_gln_last_frame() {
        let (store, p) = setup(4);
        let x = Tensor::uniform(&[7, 4], -2.0, 3.0, &mut Rng::new(5));
        let f = SequenceFeature::new(x, 1.0).unwrap();
        let c = cln_forward(&store, &p, &f).unwrap();
        let g = gln_forward(&store, &p, &f).unwrap();
        for (a, b) in c.frame(6).iter().zip(g.frame(6)) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn gln_output_has_unit_statistics() {
        let (store, p) = setup(5);
        let x = Tensor::uniform(&[9, 5], -2.0, 3.0, &mut Rng::new(1));
        let y = gln_forward(&store, &p, &SequenceFeature::new(x, 1.0).unwrap()).unwrap();
        let d = y.data.data();
        let m = d.iter().sum::<f64>() / d.len() as f64;
        let v = d.iter().map(|v| (v - m).powi(2)).sum::<f64>() / d.len() as f64;
        assert!(m.abs() < 1e-9);
        assert!((v - 1.0).abs() < 1e-3);
    }

    #[test]
    fn stream_matches_batch() {
        let (mut store, p) = setup(3);
        store.get_mut(p.gamma).data_mut().copy_from_slice(&[1.5, 0.5, -1.0]);
        let x = Tensor::uniform(&[6, 3], -1.0, 1.0, &mut Rng::new(2));
        let f = SequenceFeature::new(x, 1.0).unwrap();
        let batch = cln_forward(&store, &p, &f).unwrap();
        let mut s = ClnStream::new(&store, &p);
        for k in 0..6 {
            let y = s.push(f.frame(k)).unwrap();
            for (a, b) in y.iter().zip(batch.frame(k)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        assert_eq!(s.frames_seen(), 6);
    }

    #[test]
    fn channel_mismatch() {
        let (store, p) = setup(3);
        assert!(matches!(
            cln_forward(&store, &p, &feat(&[vec![1.0, 2.0]])),
            Err(Error::Dim { .. })
        ));
    }
}
