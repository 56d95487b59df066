use numcore::{ParamStore, Real};

/// Scales every gradient by `max_norm / norm` when the global L2 norm
/// exceeds `max_norm`. Returns the factor applied (1 when unchanged).
pub fn clip_gradients<T: Real>(store: &mut ParamStore<T>, max_norm: f64) -> f64 {
    let norm = store.grad_norm();
    if norm <= max_norm || norm == 0.0 {
        return 1.0;
    }
    let scale = max_norm / norm;
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        if let Some(g) = store.get_mut(id).grad_mut() {
            for v in g {
                *v = T::lit(v.as_f64() * scale);
            }
        }
    }
    scale
}

/// Bias-corrected Adam with moments kept in f64.
#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Default for Adam {
    fn default() -> Self {
        Self::new(0.9, 0.999, 1e-8)
    }
}

impl Adam {
    pub fn new(beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// One update of every parameter that has a gradient slot.
    pub fn step<T: Real>(&mut self, store: &mut ParamStore<T>, lr: f64) {
        if self.m.is_empty() {
            self.m = store.iter().map(|(_, p)| vec![0.0; p.tensor.len()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let b1t = 1.0 - self.beta1.powi(self.step as i32);
        let b2t = 1.0 - self.beta2.powi(self.step as i32);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let i = id.index();
            let t = store.get_mut(id);
            let Some(grad) = t.grad().map(|g| g.iter().map(|v| v.as_f64()).collect::<Vec<_>>()) else {
                continue;
            };
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (k, p) in t.data_mut().iter_mut().enumerate() {
                let gk = grad[k];
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * gk;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * gk * gk;
                let mh = m[k] / b1t;
                let vh = v[k] / b2t;
                *p = T::lit(p.as_f64() - lr * mh / (vh.sqrt() + self.eps));
            }
        }
    }
}

/// Multiplies the learning rate by `factor` once `patience` consecutive
/// observations bring no new minimum.
#[derive(Clone, Debug, PartialEq)]
pub struct PlateauSchedule {
    pub lr: f64,
    pub factor: f64,
    pub patience: usize,
    best: f64,
    stagnant: usize,
}

impl PlateauSchedule {
    pub fn new(lr: f64, factor: f64, patience: usize) -> Self {
        Self {
            lr,
            factor,
            patience,
            best: f64::INFINITY,
            stagnant: 0,
        }
    }

    /// Records one epoch's loss and returns the learning rate for the next.
    pub fn observe(&mut self, loss: f64) -> f64 {
        if loss < self.best {
            self.best = loss;
            self.stagnant = 0;
        } else {
            self.stagnant += 1;
            if self.stagnant >= self.patience {
                self.lr *= self.factor;
                self.stagnant = 0;
            }
        }
        self.lr
    }
}

/// Signals a stop once `patience` consecutive observations bring no new minimum.
#[derive(Clone, Debug, PartialEq)]
pub struct EarlyStopper {
    pub patience: usize,
    best: f64,
    stagnant: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            stagnant: 0,
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    /// Returns `(improved, stop)`.
    pub fn observe(&mut self, loss: f64) -> (bool, bool) {
        if loss < self.best {
            self.best = loss;
            self.stagnant = 0;
            (true, false)
        } else {
            self.stagnant += 1;
            (false, self.stagnant >= self.patience)
        }
    }
}

#[cfg(test)]
mod tests {
    use numcore::{ParamId, Tensor};

    use super::*;

    fn store_with_grads(grads: &[&[f64]]) -> (ParamStore<f64>, Vec<ParamId>) {
        let mut s = ParamStore::new();
        let ids: Vec<_> = grads
            .iter()
            .enumerate()
            .map(|(i, g)| {
                let id = s.add(format!("p{i}"), Tensor::zeros(&[g.len()]));
                s.get_mut(id).accumulate_grad(g).unwrap();
                id
            })
            .collect();
        (s, ids)
    }

    #[test]
    fn clipping_scales_to_max_norm() {
        let (mut s, _) = store_with_grads(&[&[6.0, 8.0]]);
        assert_eq!(clip_gradients(&mut s, 5.0), 0.5);
        assert!((s.grad_norm() - 5.0).abs() < 1e-12);
        let (mut s, ids) = store_with_grads(&[&[3.0, 0.0]]);
        assert_eq!(clip_gradients(&mut s, 5.0), 1.0);
        assert_eq!(s.get(ids[0]).grad().unwrap(), &[3.0, 0.0]);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let (mut s, ids) = store_with_grads(&[&[0.0, 0.0]]);
        s.get_mut(ids[0]).data_mut().copy_from_slice(&[1.0, -2.0]);
        Adam::default().step(&mut s, 0.1);
        assert_eq!(s.get(ids[0]).data(), &[1.0, -2.0]);
    }

    #[test]
    fn matches_scalar_adam_oracle() {
        let (mut s, ids) = store_with_grads(&[&[4.0]]);
        let mut adam = Adam::default();
        let lr = 0.01;
        adam.step(&mut s, lr);
        // first bias-corrected step moves by lr * g / (|g| + eps)
        assert!((s.get(ids[0]).data()[0] + lr * 4.0 / (4.0 + 1e-8)).abs() < 1e-15);
        adam.step(&mut s, lr);
        let (mut m, mut v, mut th) = (0.0f64, 0.0f64, 0.0f64);
        for t in 1..=2 {
            m = 0.9 * m + 0.1 * 4.0;
            v = 0.999 * v + 0.001 * 16.0;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            th -= lr * mh / (vh.sqrt() + 1e-8);
        }
        assert!((s.get(ids[0]).data()[0] - th).abs() < 1e-15);
    }

    #[test]
    fn plateau_halves_after_three_stagnant_epochs() {
        let mut p = PlateauSchedule::new(1e-3, 0.5, 3);
        assert_eq!(p.observe(1.0), 1e-3);
        assert_eq!(p.observe(1.0), 1e-3);
        assert_eq!(p.observe(2.0), 1e-3);
        assert_eq!(p.observe(1.5), 5e-4);
        assert_eq!(p.observe(0.5), 5e-4);
    }

    #[test]
    fn early_stop_after_patience() {
        let mut e = EarlyStopper::new(15);
        assert_eq!(e.observe(1.0), (true, false));
        for _ in 0..14 {
            assert_eq!(e.observe(1.0), (false, false));
        }
        assert_eq!(e.observe(1.0), (false, true));
    }
}
