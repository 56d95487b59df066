use numcore::{gemm, CustomOp, Graph, ParamId, ParamStore, Real, Rng, Tensor, Var};

use super::{init_uniform, SequenceFeature};
use crate::error::{Error, Result};

/// LSTM weights with gates stacked in the order (input, forget, cell, output).
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// `4H x in`
    pub w: ParamId,
    /// `4H x H`
    pub u: ParamId,
    /// `4H`
    pub b: ParamId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn sig<T: Real>(x: T) -> T {
    T::lit(sigmoid(x.as_f64()))
}

impl LstmParams {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        input_dim: usize,
        hidden_dim: usize,
        rng: &mut Rng,
    ) -> Self {
        let bound = 1.0 / (hidden_dim as f64).sqrt();
        let g = 4 * hidden_dim;
        let w = store.add(format!("{name}.w"), init_uniform(&[g, input_dim], bound, rng));
        let u = store.add(format!("{name}.u"), init_uniform(&[g, hidden_dim], bound, rng));
        let b = store.add(format!("{name}.b"), init_uniform(&[g], bound, rng));
        Self {
            input_dim,
            hidden_dim,
            w,
            u,
            b,
        }
    }

    pub fn num_params(&self) -> usize {
        4 * self.hidden_dim * (self.input_dim + self.hidden_dim + 1)
    }

    /// Forward-in-time scan over `x (T x B x in)` from a zero state; returns `T x B x H`.
    pub fn scan<T: Real>(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        let shape = g.shape(x).to_vec();
        if shape.len() != 3 {
            return Err(Error::Config(format!(
                "lstm input must be time x batch x channels, got {shape:?}"
            )));
        }
        let (steps, batch, in_dim) = (shape[0], shape[1], shape[2]);
        if steps == 0 {
            return Err(Error::EmptySequence);
        }
        if in_dim != self.input_dim {
            return Err(Error::Dim {
                context: "lstm input",
                expected: self.input_dim,
                actual: in_dim,
            });
        }
        let w = g.param(self.w)?;
        let u = g.param(self.u)?;
        let b = g.param(self.b)?;
        let h = self.hidden_dim;
        let gh = 4 * h;

        let xs = g.value(x).data();
        let mut pre = vec![T::zero(); steps * batch * gh];
        gemm(
            false,
            true,
            steps * batch,
            gh,
            in_dim,
            T::one(),
            xs,
            g.value(w).data(),
            T::zero(),
            &mut pre,
        );
        let bias = g.value(b).data();
        for row in pre.chunks_mut(gh) {
            row.iter_mut().zip(bias).for_each(|(z, b)| *z += *b);
        }

        let uw = g.value(u).data();
        let mut gates = pre;
        let mut cells = vec![T::zero(); steps * batch * h];
        let mut hidden = vec![T::zero(); steps * batch * h];
        let mut tanh_c = vec![T::zero(); steps * batch * h];
        for t in 0..steps {
            let z = &mut gates[t * batch * gh..(t + 1) * batch * gh];
            if t > 0 {
                let hp = &hidden[(t - 1) * batch * h..t * batch * h];
                gemm(false, true, batch, gh, h, T::one(), hp, uw, T::one(), z);
            }
            for bi in 0..batch {
                let zr = &mut z[bi * gh..(bi + 1) * gh];
                let off = (t * batch + bi) * h;
                for j in 0..h {
                    let i_g = sig(zr[j]);
                    let f_g = sig(zr[h + j]);
                    let g_g = zr[2 * h + j].tanh();
                    let o_g = sig(zr[3 * h + j]);
                    zr[j] = i_g;
                    zr[h + j] = f_g;
                    zr[2 * h + j] = g_g;
                    zr[3 * h + j] = o_g;
                    let c_prev = if t > 0 {
                        cells[off - batch * h + j]
                    } else {
                        T::zero()
                    };
                    let c = f_g * c_prev + i_g * g_g;
                    let tc = c.tanh();
                    cells[off + j] = c;
                    tanh_c[off + j] = tc;
                    hidden[off + j] = o_g * tc;
                }
            }
        }
        let out = Tensor::new(&[steps, batch, h], hidden)?;
        let op = LstmScanOp {
            steps,
            batch,
            in_dim,
            hidden: h,
            gates,
            cells,
            tanh_c,
        };
        Ok(g.custom(&[x, w, u, b], out, Box::new(op))?)
    }
}

struct LstmScanOp<T> {
    steps: usize,
    batch: usize,
    in_dim: usize,
    hidden: usize,
    /// post-activation gates, `T x B x 4H`
    gates: Vec<T>,
    cells: Vec<T>,
    tanh_c: Vec<T>,
}

impl<T: Real> CustomOp<T> for LstmScanOp<T> {
    fn name(&self) -> &'static str {
        "lstm_scan"
    }

    fn backward(&self, inputs: &[&Tensor<T>], output: &Tensor<T>, grad_out: &[T]) -> Vec<Option<Vec<T>>> {
        let (steps, batch, h, in_dim) = (self.steps, self.batch, self.hidden, self.in_dim);
        let gh = 4 * h;
        let (x, w, u) = (inputs[0].data(), inputs[1].data(), inputs[2].data());
        let hs = output.data();
        let one = T::one();
        // sigmoid derivative sign, flipped under the fault-injection hook
        let sd = if numcore::fault_injection_enabled() { -one } else { one };

        let mut dz = vec![T::zero(); steps * batch * gh];
        let mut dh_next = vec![T::zero(); batch * h];
        let mut dc_next = vec![T::zero(); batch * h];
        for t in (0..steps).rev() {
            for bi in 0..batch {
                let off = (t * batch + bi) * h;
                let goff = (t * batch + bi) * gh;
                let gt = &self.gates[goff..goff + gh];
                for j in 0..h {
                    let (i_g, f_g, g_g, o_g) = (gt[j], gt[h + j], gt[2 * h + j], gt[3 * h + j]);
                    let tc = self.tanh_c[off + j];
                    let dh = grad_out[off + j] + dh_next[bi * h + j];
                    let d_o = dh * tc;
                    let dc = dh * o_g * (one - tc * tc) + dc_next[bi * h + j];
                    let c_prev = if t > 0 {
                        self.cells[off - batch * h + j]
                    } else {
                        T::zero()
                    };
                    dc_next[bi * h + j] = dc * f_g;
                    let dzr = &mut dz[goff..goff + gh];
                    dzr[j] = sd * dc * g_g * i_g * (one - i_g);
                    dzr[h + j] = sd * dc * c_prev * f_g * (one - f_g);
                    dzr[2 * h + j] = dc * i_g * (one - g_g * g_g);
                    dzr[3 * h + j] = sd * d_o * o_g * (one - o_g);
                }
            }
            let dzt = &dz[t * batch * gh..(t + 1) * batch * gh];
            gemm(false, false, batch, h, gh, one, dzt, u, T::zero(), &mut dh_next);
        }

        let rows = steps * batch;
        let mut dx = vec![T::zero(); rows * in_dim];
        gemm(false, false, rows, in_dim, gh, one, &dz, w, T::zero(), &mut dx);
        let mut dw = vec![T::zero(); gh * in_dim];
        gemm(true, false, gh, in_dim, rows, one, &dz, x, T::zero(), &mut dw);
        let mut du = vec![T::zero(); gh * h];
        if steps > 1 {
            let prev = &hs[..(steps - 1) * batch * h];
            let dz_tail = &dz[batch * gh..];
            gemm(true, false, gh, h, (steps - 1) * batch, one, dz_tail, prev, T::zero(), &mut du);
        }
        let mut db = vec![T::zero(); gh];
        for row in dz.chunks(gh) {
            db.iter_mut().zip(row).for_each(|(a, b)| *a += *b);
        }
        vec![Some(dx), Some(dw), Some(du), Some(db)]
    }
}

/// One LSTM cell update on plain vectors: returns `(h_t, c_t)`.
pub fn lstm_step<T: Real>(
    store: &ParamStore<T>,
    p: &LstmParams,
    x_t: &[T],
    h_prev: &[T],
    c_prev: &[T],
) -> Result<(Vec<T>, Vec<T>)> {
    let h = p.hidden_dim;
    for (ctx, want, got) in [
        ("lstm_step input", p.input_dim, x_t.len()),
        ("lstm_step hidden", h, h_prev.len()),
        ("lstm_step cell", h, c_prev.len()),
    ] {
        if want != got {
            return Err(Error::Dim {
                context: ctx,
                expected: want,
                actual: got,
            });
        }
    }
    let (w, u, b) = (store.get(p.w).data(), store.get(p.u).data(), store.get(p.b).data());
    let pre = |r: usize| -> f64 {
        let mut z = b[r].as_f64();
        for (k, xv) in x_t.iter().enumerate() {
            z += w[r * p.input_dim + k].as_f64() * xv.as_f64();
        }
        for (k, hv) in h_prev.iter().enumerate() {
            z += u[r * h + k].as_f64() * hv.as_f64();
        }
        z
    };
    let mut h_t = Vec::with_capacity(h);
    let mut c_t = Vec::with_capacity(h);
    for j in 0..h {
        let i_g = sigmoid(pre(j));
        let f_g = sigmoid(pre(h + j));
        let g_g = pre(2 * h + j).tanh();
        let o_g = sigmoid(pre(3 * h + j));
        let c = f_g * c_prev[j].as_f64() + i_g * g_g;
        c_t.push(T::lit(c));
        h_t.push(T::lit(o_g * c.tanh()));
    }
    Ok((h_t, c_t))
}

/// Runs one LSTM over `x (T x B x in)` in the given direction.
///
/// The backward direction is `reverse_time . forward scan . reverse_time`.
pub fn lstm_sequence<T: Real>(
    g: &mut Graph<T>,
    p: &LstmParams,
    x: Var,
    direction: Direction,
) -> Result<Var> {
    match direction {
        Direction::Forward => p.scan(g, x),
        Direction::Backward => {
            let r = g.reverse_time(x)?;
            let y = p.scan(g, r)?;
            Ok(g.reverse_time(y)?)
        }
    }
}

/// Bidirectional LSTM: `[forward || backward]` on the channel axis.
pub fn bilstm_forward<T: Real>(
    g: &mut Graph<T>,
    pf: &LstmParams,
    pb: &LstmParams,
    x: Var,
) -> Result<Var> {
    if pf.hidden_dim != pb.hidden_dim {
        return Err(Error::Dim {
            context: "bilstm hidden",
            expected: pf.hidden_dim,
            actual: pb.hidden_dim,
        });
    }
    let f = lstm_sequence(g, pf, x, Direction::Forward)?;
    let b = lstm_sequence(g, pb, x, Direction::Backward)?;
    Ok(g.concat(&[f, b], 2)?)
}

impl<T: Real> SequenceFeature<T> {
    /// Views a `K x N` feature as `K x 1 x N` on the tape.
    pub fn to_var(&self, g: &mut Graph<T>) -> Result<Var> {
        let v = g.constant(self.data.clone())?;
        Ok(g.reshape(v, &[self.frames(), 1, self.channels()])?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn make(input: usize, hidden: usize, seed: u64) -> (ParamStore<f64>, LstmParams) {
        let mut store = ParamStore::new();
        let p = LstmParams::new(&mut store, "lstm", input, hidden, &mut Rng::new(seed));
        (store, p)
    }

    fn run(store: &ParamStore<f64>, p: &LstmParams, x: &Tensor<f64>, dir: Direction) -> Tensor<f64> {
        let mut g = Graph::inference(store);
        let v = g.constant(x.clone()).unwrap();
        let y = lstm_sequence(&mut g, p, v, dir).unwrap();
        g.value(y).clone()
    }

    #[test]
    fn zero_weights_zero_state() {
        let (mut store, p) = make(3, 2, 0);
        for id in [p.w, p.u, p.b] {
            store.get_mut(id).data_mut().fill(0.0);
        }
        let (h, c) = lstm_step(&store, &p, &[0.3, -0.2, 1.0], &[0.0; 2], &[0.0; 2]).unwrap();
        assert_eq!(h, vec![0.0; 2]);
        assert_eq!(c, vec![0.0; 2]);
    }

    #[test]
    fn scalar_cell_matches_hand_oracle() {
        let (store, p) = make(1, 1, 17);
        let w = store.get(p.w).data().to_vec();
        let u = store.get(p.u).data().to_vec();
        let b = store.get(p.b).data().to_vec();
        let (x, hp, cp) = (0.7, -0.3, 0.5);
        let s = |v: f64| 1.0 / (1.0 + (-v).exp());
        let i = s(w[0] * x + u[0] * hp + b[0]);
        let f = s(w[1] * x + u[1] * hp + b[1]);
        let gg = (w[2] * x + u[2] * hp + b[2]).tanh();
        let o = s(w[3] * x + u[3] * hp + b[3]);
        let c = f * cp + i * gg;
        let h = o * c.tanh();
        let (h_t, c_t) = lstm_step(&store, &p, &[x], &[hp], &[cp]).unwrap();
        assert!((h_t[0] - h).abs() < 1e-14);
        assert!((c_t[0] - c).abs() < 1e-14);
    }

    #[test]
    fn saturated_forget_gate_keeps_cell() {
        let (mut store, p) = make(2, 3, 5);
        let h = 3;
        {
            let w = store.get_mut(p.w).data_mut();
            w[..h * 2].fill(0.0);
        }
        {
            let u = store.get_mut(p.u).data_mut();
            u[..h * h].fill(0.0);
            u[h * h..2 * h * h].fill(0.0);
        }
        {
            let b = store.get_mut(p.b).data_mut();
            b[..h].fill(-10.0);
            b[h..2 * h].fill(10.0);
        }
        let c_prev = [0.4, -0.8, 0.1];
        let (_, c) = lstm_step(&store, &p, &[0.5, -0.5], &[0.1, 0.2, 0.3], &c_prev).unwrap();
        for (a, b) in c.iter().zip(c_prev) {
            assert!((a - b).abs() < 1e-4, "{a} vs {b}");
        }
    }

    #[test]
    fn scan_agrees_with_step() {
        let (store, p) = make(3, 4, 9);
        let x = Tensor::uniform(&[5, 1, 3], -1.0, 1.0, &mut Rng::new(1));
        let y = run(&store, &p, &x, Direction::Forward);
        let (mut h, mut c) = (vec![0.0; 4], vec![0.0; 4]);
        for t in 0..5 {
            let (h2, c2) = lstm_step(&store, &p, x.row(t), &h, &c).unwrap();
            h = h2;
            c = c2;
            for j in 0..4 {
                assert!((y.row(t)[j] - h[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_frame_directions_agree() {
        let (store, p) = make(3, 4, 2);
        let x = Tensor::uniform(&[1, 2, 3], -1.0, 1.0, &mut Rng::new(1));
        assert_eq!(
            run(&store, &p, &x, Direction::Forward),
            run(&store, &p, &x, Direction::Backward)
        );
    }

    #[test]
    fn forward_scan_is_causal() {
        let (store, p) = make(2, 3, 4);
        let x = Tensor::uniform(&[8, 1, 2], -1.0, 1.0, &mut Rng::new(1));
        let y = run(&store, &p, &x, Direction::Forward);
        let mut x2 = x.clone();
        for v in &mut x2.data_mut()[5 * 2..] {
            *v += 3.0;
        }
        let y2 = run(&store, &p, &x2, Direction::Forward);
        assert_eq!(&y.data()[..5 * 3], &y2.data()[..5 * 3]);
        assert_ne!(&y.data()[5 * 3..], &y2.data()[5 * 3..]);
    }

    #[test]
    fn bilstm_halves_are_independent_scans() {
        let (mut store, pf) = make(3, 2, 1);
        let pb = LstmParams::new(&mut store, "back", 3, 2, &mut Rng::new(8));
        let x = Tensor::uniform(&[6, 2, 3], -1.0, 1.0, &mut Rng::new(4));
        let f = run(&store, &pf, &x, Direction::Forward);
        let b = run(&store, &pb, &x, Direction::Backward);
        let mut g = Graph::inference(&store);
        let v = g.constant(x).unwrap();
        let y = bilstm_forward(&mut g, &pf, &pb, v).unwrap();
        let y = g.value(y);
        assert_eq!(y.shape(), &[6, 2, 4]);
        for r in 0..12 {
            assert_eq!(&y.data()[r * 4..r * 4 + 2], &f.data()[r * 2..r * 2 + 2]);
            assert_eq!(&y.data()[r * 4 + 2..r * 4 + 4], &b.data()[r * 2..r * 2 + 2]);
        }
    }

    #[test]
    fn empty_sequence_is_an_error() {
        let (store, p) = make(3, 2, 0);
        let mut g = Graph::inference(&store);
        let v = g.constant(Tensor::zeros(&[0, 1, 3])).unwrap();
        assert!(matches!(p.scan(&mut g, v), Err(Error::EmptySequence)));
    }
}
