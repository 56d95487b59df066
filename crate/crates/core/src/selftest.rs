//! Built-in correctness suites: gradient checks, normalization, path
//! equivalence, causality, permutation search and codec round trips.

use std::time::Instant;

use numcore::{grad_check_params, GradCheckOptions, Graph, ParamStore, Rng, Tensor, Var};

use crate::codec::{istft_synthesize, stft_analyze, ConvCodecParams, StftConfig};
use crate::dualpath::{chunk_merge, chunk_split, DprnnBlock, DualBlock, PathSelector, Scheme};
use crate::error::Result;
use crate::layers::{lstm_sequence, Direction, FcParams, LstmParams, NormKind, NormMode, NormParams, SequenceFeature};
use crate::models::{FdConfig, Model, ModelConfig, TdConfig};
use crate::training::{neg_snr_loss, permutations, pit_loss, pit_neg_snr};

pub const LAYER_TOL: f64 = 1e-4;
pub const MODEL_TOL: f64 = 1e-3;

/// Outcome of one named check. `value` is the measured error and passes
/// when it is below `tol`.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub suite: &'static str,
    pub name: String,
    pub value: f64,
    pub tol: f64,
    pub pass: bool,
    pub detail: Option<String>,
}

impl Check {
    fn measured(suite: &'static str, name: impl Into<String>, value: f64, tol: f64) -> Self {
        Self {
            suite,
            name: name.into(),
            value,
            tol,
            pass: value < tol,
            detail: None,
        }
    }

    fn from_result(suite: &'static str, name: impl Into<String>, tol: f64, r: Result<f64>) -> Self {
        match r {
            Ok(v) => Self::measured(suite, name, v, tol),
            Err(e) => Self {
                suite,
                name: name.into(),
                value: f64::NAN,
                tol,
                pass: false,
                detail: Some(e.to_string()),
            },
        }
    }

    pub fn line(&self) -> String {
        let status = if self.pass { "PASS" } else { "FAIL" };
        let mut s = format!("{status} {}/{}: {:.3e} (tol {:.0e})", self.suite, self.name, self.value, self.tol);
        if let Some(d) = &self.detail {
            s.push_str(&format!(" [{d}]"));
        }
        s
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SelftestOptions {
    /// Flips the sigmoid backward sign so gradient checks must fail.
    pub inject_fault: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelftestSummary {
    pub checks: Vec<Check>,
    pub seconds: f64,
}

impl SelftestSummary {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.pass).count()
    }
}

/// Runs every suite, reporting each check as it completes.
pub fn run_selftest(opts: SelftestOptions, mut report: impl FnMut(&Check)) -> SelftestSummary {
    let start = Instant::now();
    let mut checks = Vec::new();
    let mut push_all = |cs: Vec<Check>, checks: &mut Vec<Check>| {
        for c in cs {
            report(&c);
            checks.push(c);
        }
    };
    numcore::set_fault_injection(opts.inject_fault);
    let grads = grad_suite();
    numcore::set_fault_injection(false);
    push_all(grads, &mut checks);
    push_all(norm_suite(), &mut checks);
    push_all(path_equivalence_suite(100, 0), &mut checks);
    push_all(causality_suite(), &mut checks);
    push_all(pit_suite(1000, 0), &mut checks);
    push_all(codec_suite(), &mut checks);
    SelftestSummary {
        checks,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn rand(shape: &[usize], rng: &mut Rng) -> Tensor<f64> {
    Tensor::uniform(shape, -1.0, 1.0, rng)
}

/// `sum(y * r)` for a fixed random `r`, so every output element matters.
fn probe(g: &mut Graph<f64>, y: Var, seed: u64) -> numcore::Result<Var> {
    let r = rand(g.shape(y), &mut Rng::new(seed ^ 0x5eed));
    let r = g.constant(r)?;
    let p = g.mul(y, r)?;
    g.sum(p)
}

/// Relative-error floor for whole-model checks, whose losses are large
/// enough that central differences carry about 1e-9 of rounding noise.
pub const MODEL_FLOOR: f64 = 1e-6;

fn param_check<F>(name: &str, store: &ParamStore<f64>, tol: f64, max_per_tensor: Option<usize>, f: F) -> Check
where
    F: Fn(&mut Graph<f64>) -> Result<Var>,
{
    let opts = GradCheckOptions {
        eps: 1e-5,
        tol,
        max_per_tensor,
        seed: 1,
        floor: if tol >= MODEL_TOL { MODEL_FLOOR } else { 1e-8 },
    };
    let r = grad_check_params(store, |g| f(g).map_err(Into::into), &opts)
        .map(|rep| rep.max_rel_err)
        .map_err(Into::into);
    Check::from_result("grad", name, tol, r)
}

/// Tiny 64-bit models used by the end-to-end gradient checks.
pub fn tiny_td(scheme: Scheme) -> TdConfig {
    TdConfig {
        sample_rate: 2000,
        kernel_ms: 2.0,
        n_kernels: 6,
        n_blocks: 2,
        hidden: 3,
        chunk: 6,
        scheme,
        ..TdConfig::tiny()
    }
}

pub fn tiny_fd(scheme: Scheme) -> FdConfig {
    FdConfig {
        sample_rate: 2000,
        n_layers: 2,
        hidden: 4,
        scheme,
        ..FdConfig::tiny()
    }
}

/// Gradient checks of layers, blocks, codecs, the loss and whole models.
pub fn grad_suite() -> Vec<Check> {
    let mut out = Vec::new();
    let mut rng = Rng::new(11);

    let mut s = ParamStore::new();
    let x = s.add("x", rand(&[3, 2, 4], &mut rng));
    let fc = FcParams::new(&mut s, "fc", 4, 3, &mut rng);
    out.push(param_check("fc", &s, LAYER_TOL, None, |g| {
        let xv = g.param(x)?;
        let y = fc.forward(g, xv)?;
        Ok(probe(g, y, 1)?)
    }));

    let mut s = ParamStore::new();
    let x = s.add("x", rand(&[5, 2, 3], &mut rng));
    let lstm = LstmParams::new(&mut s, "lstm", 3, 4, &mut rng);
    for dir in [Direction::Forward, Direction::Backward] {
        out.push(param_check(&format!("lstm_{dir:?}").to_lowercase(), &s, LAYER_TOL, None, |g| {
            let xv = g.param(x)?;
            let y = lstm_sequence(g, &lstm, xv, dir)?;
            Ok(probe(g, y, 2)?)
        }));
    }

    let mut s = ParamStore::new();
    let x = s.add("x", rand(&[6, 2, 3], &mut rng));
    let norm = NormParams::new(&mut s, "norm", 3);
    *s.get_mut(norm.gamma) = rand(&[3], &mut rng);
    *s.get_mut(norm.beta) = rand(&[3], &mut rng);
    for mode in [NormMode::Global, NormMode::Cumulative, NormMode::PerRow] {
        out.push(param_check(&format!("norm_{mode:?}").to_lowercase(), &s, LAYER_TOL, None, |g| {
            let xv = g.param(x)?;
            let y = norm.forward(g, xv, mode)?;
            Ok(probe(g, y, 3)?)
        }));
    }

    for scheme in [Scheme::Decomposed, Scheme::Reorganized] {
        let mut s = ParamStore::new();
        let x = s.add("x", rand(&[5, 2, 3], &mut rng));
        let b = DualBlock::new(&mut s, "blk", scheme, 3, 2, NormKind::Cln, &mut rng);
        for path in [PathSelector::Online, PathSelector::Offline] {
            out.push(param_check(&format!("block_{scheme}_{path}"), &s, LAYER_TOL, None, |g| {
                let xv = g.param(x)?;
                let y = b.forward(g, xv, path)?;
                Ok(probe(g, y, 4)?)
            }));
        }
        let mut s = ParamStore::new();
        let x = s.add("x", rand(&[3, 4, 3], &mut rng));
        let d = DprnnBlock::new(&mut s, "dp", scheme, 3, 2, NormKind::Cln, &mut rng);
        for path in [PathSelector::Online, PathSelector::Offline] {
            out.push(param_check(&format!("dprnn_{scheme}_{path}"), &s, LAYER_TOL, None, |g| {
                let xv = g.param(x)?;
                let y = d.forward(g, xv, path)?;
                Ok(probe(g, y, 5)?)
            }));
        }
    }

    let cfg = StftConfig {
        sample_rate: 1000,
        win_ms: 16.0,
        hop_ms: 4.0,
    };
    let wav: Vec<f64> = rand(&[48], &mut rng).data().to_vec();
    if let Ok(spec) = stft_analyze(&cfg, &wav) {
        let mut s = ParamStore::new();
        let m = s.add("mag", spec.magnitude.data.clone());
        out.push(param_check("istft", &s, LAYER_TOL, None, |g| {
            let mv = g.param(m)?;
            let y = crate::codec::istft(g, &cfg, mv, &spec.phase)?;
            Ok(probe(g, y, 6)?)
        }));
    }

    let mut s = ParamStore::new();
    let w = s.add("wav", rand(&[20], &mut rng));
    if let Ok(codec) = ConvCodecParams::new(&mut s, "codec", 3, 4, &mut rng) {
        out.push(param_check("conv_codec", &s, LAYER_TOL, None, |g| {
            let wv = g.param(w)?;
            let f = codec.encode(g, wv)?;
            let f = g.tanh(f)?;
            let y = codec.decode(g, f)?;
            Ok(probe(g, y, 7)?)
        }));
    }

    let mut s = ParamStore::new();
    let e = s.add("est", rand(&[16], &mut rng));
    let reference = rand(&[16], &mut rng).data().to_vec();
    out.push(param_check("neg_snr", &s, LAYER_TOL, None, |g| {
        let ev = g.param(e)?;
        neg_snr_loss(g, ev, &reference)
    }));

    for (name, cfg) in [
        ("td", ModelConfig::Td(tiny_td(Scheme::Reorganized))),
        ("td_decomposed", ModelConfig::Td(tiny_td(Scheme::Decomposed))),
        ("fd", ModelConfig::Fd(tiny_fd(Scheme::Decomposed))),
        ("fd_reorganized", ModelConfig::Fd(tiny_fd(Scheme::Reorganized))),
    ] {
        let model = match Model::<f64>::new(cfg, 3) {
            Ok(m) => m,
            Err(e) => {
                out.push(Check::from_result("grad", format!("model_{name}"), MODEL_TOL, Err(e)));
                continue;
            }
        };
        let mut r = Rng::new(21);
        let mix: Vec<f64> = rand(&[100], &mut r).data().iter().map(|v| 0.3 * v).collect();
        let refs: Vec<Vec<f64>> = (0..2).map(|_| rand(&[100], &mut r).data().to_vec()).collect();
        for path in [PathSelector::Online, PathSelector::Offline] {
            out.push(param_check(&format!("model_{name}_{path}"), &model.params, MODEL_TOL, Some(6), |g| {
                let ests = model.separate(g, &mix, path)?;
                Ok(pit_neg_snr(g, &ests, &refs)?.0)
            }));
        }
    }
    out
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn norm_rows(x: &Tensor<f64>, mode: NormMode) -> Result<Tensor<f64>> {
    let mut s = ParamStore::new();
    let p = NormParams::new(&mut s, "n", x.shape()[1]);
    let f = SequenceFeature::new(x.clone(), 1.0)?;
    Ok(crate::layers::norm_forward(&s, &p, &f, mode)?.data)
}

/// Cumulative normalization oracle: plain loops over frames `0..=k`.
fn cln_oracle(frames: &[Vec<f64>], eps: f64) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for k in 0..frames.len() {
        let seen: Vec<f64> = frames[..=k].iter().flatten().copied().collect();
        let n = seen.len() as f64;
        let mean = seen.iter().sum::<f64>() / n;
        let var = seen.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        out.push(frames[k].iter().map(|v| (v - mean) / (var + eps).sqrt()).collect());
    }
    out
}

/// Causality, cumulative-equals-global at the last frame, and a worked
/// two-frame example.
pub fn norm_suite() -> Vec<Check> {
    const SUITE: &str = "norm";
    let mut out = Vec::new();
    let mut rng = Rng::new(5);
    let (k_frames, n) = (12, 5);
    let x = rand(&[k_frames, n], &mut rng);

    let causal = (|| -> Result<f64> {
        let base = norm_rows(&x, NormMode::Cumulative)?;
        let mut worst: f64 = 0.0;
        for k in 0..k_frames - 1 {
            let mut y = x.clone();
            for v in &mut y.data_mut()[(k + 1) * n..] {
                *v += 10.0 * rng.uniform(-1.0, 1.0);
            }
            let pert = norm_rows(&y, NormMode::Cumulative)?;
            worst = worst.max(max_abs_diff(&base.data()[..(k + 1) * n], &pert.data()[..(k + 1) * n]));
        }
        Ok(worst)
    })();
    out.push(Check::from_result(SUITE, "cln_causality", 1e-7, causal));

    let last = (|| -> Result<f64> {
        let c = norm_rows(&x, NormMode::Cumulative)?;
        let g = norm_rows(&x, NormMode::Global)?;
        let tail = (k_frames - 1) * n;
        Ok(max_abs_diff(&c.data()[tail..], &g.data()[tail..]))
    })();
    out.push(Check::from_result(SUITE, "cln_last_equals_gln", 1e-6, last));

    let worked = (|| -> Result<f64> {
        let frames = vec![vec![1.0, 3.0], vec![5.0, 7.0]];
        let x = Tensor::new(&[2, 2], frames.concat())?;
        let got = norm_rows(&x, NormMode::Cumulative)?;
        let want: Vec<f64> = cln_oracle(&frames, crate::layers::DEFAULT_NORM_EPS).concat();
        Ok(max_abs_diff(got.data(), &want))
    })();
    out.push(Check::from_result(SUITE, "cln_worked_example", 1e-6, worked));

    let random = (|| -> Result<f64> {
        let frames: Vec<Vec<f64>> = (0..k_frames).map(|k| x.data()[k * n..(k + 1) * n].to_vec()).collect();
        let got = norm_rows(&x, NormMode::Cumulative)?;
        Ok(max_abs_diff(got.data(), &cln_oracle(&frames, crate::layers::DEFAULT_NORM_EPS).concat()))
    })();
    out.push(Check::from_result(SUITE, "cln_matches_oracle", 1e-6, random));
    out
}

/// Offline outputs of decomposed and reorganized blocks against a standard
/// rebuild sharing the same weights, over `n` random configurations.
pub fn path_equivalence_suite(n: usize, seed: u64) -> Vec<Check> {
    let mut rng = Rng::new(seed);
    let mut worst: f64 = 0.0;
    let mut err = None;
    for i in 0..n {
        let scheme = if i % 2 == 0 { Scheme::Decomposed } else { Scheme::Reorganized };
        let ch = 1 + rng.below(6);
        let hid = 1 + rng.below(6);
        let r = (|| -> Result<f64> {
            let mut s = ParamStore::<f64>::new();
            let mut prng = rng.fork(i as u64);
            if i % 4 < 2 {
                let b = DualBlock::new(&mut s, "b", scheme, ch, hid, NormKind::Cln, &mut prng);
                let x = rand(&[1 + rng.below(8), 1 + rng.below(3), ch], &mut prng);
                let run = |blk: &DualBlock| -> Result<Vec<f64>> {
                    let mut g = Graph::inference(&s);
                    let v = g.constant(x.clone())?;
                    let y = blk.forward(&mut g, v, PathSelector::Offline)?;
                    Ok(g.value(y).data().to_vec())
                };
                Ok(max_abs_diff(&run(&b)?, &run(&b.as_standard())?))
            } else {
                let b = DprnnBlock::new(&mut s, "d", scheme, ch, hid, NormKind::Cln, &mut prng);
                let x = rand(&[1 + rng.below(4), 2 * (1 + rng.below(3)), ch], &mut prng);
                let run = |blk: &DprnnBlock| -> Result<Vec<f64>> {
                    let mut g = Graph::inference(&s);
                    let v = g.constant(x.clone())?;
                    let y = blk.forward(&mut g, v, PathSelector::Offline)?;
                    Ok(g.value(y).data().to_vec())
                };
                Ok(max_abs_diff(&run(&b)?, &run(&b.as_standard())?))
            }
        })();
        match r {
            Ok(d) => worst = worst.max(d),
            Err(e) => {
                err = Some(e);
                break;
            }
        }
    }
    let r = match err {
        Some(e) => Err(e),
        None => Ok(worst),
    };
    vec![Check::from_result("paths", format!("offline_equals_standard_x{n}"), 1e-6, r)]
}

/// Largest change of online outputs at samples `0..=t` when inputs after
/// `t + lookahead` are perturbed, over several cut points.
pub fn online_leak(model: &Model<f64>, len: usize, seed: u64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let lookahead = model.latency().lookahead_samples(model.config.sample_rate());
    let mix: Vec<f64> = (0..len).map(|_| 0.3 * rng.uniform(-1.0, 1.0)).collect();
    let base = model.infer(&mix, PathSelector::Online)?;
    let mut worst: f64 = 0.0;
    for t in [0, len / 4, len / 2, len.saturating_sub(lookahead + 2)] {
        let cut = t + lookahead + 1;
        if cut >= len {
            continue;
        }
        let mut y = mix.clone();
        for v in &mut y[cut..] {
            *v += rng.uniform(-1.0, 1.0);
        }
        let pert = model.infer(&y, PathSelector::Online)?;
        for (a, b) in base.iter().zip(&pert) {
            worst = worst.max(max_abs_diff(&a[..=t], &b[..=t]));
        }
    }
    Ok(worst)
}

/// Online models ignore inputs beyond their stated lookahead.
pub fn causality_suite() -> Vec<Check> {
    let mut out = Vec::new();
    for (name, cfg) in [
        ("td_reorganized", ModelConfig::Td(tiny_td(Scheme::Reorganized))),
        ("td_decomposed", ModelConfig::Td(tiny_td(Scheme::Decomposed))),
        ("fd_decomposed", ModelConfig::Fd(tiny_fd(Scheme::Decomposed))),
        ("fd_reorganized", ModelConfig::Fd(tiny_fd(Scheme::Reorganized))),
    ] {
        let r = Model::<f64>::new(cfg, 4).and_then(|m| online_leak(&m, 300, 9));
        out.push(Check::from_result("causality", name, 1e-9, r));
    }
    out
}

/// Brute-force minimum over every assignment, by explicit recursion.
fn brute_force_min(m: &[Vec<f64>]) -> f64 {
    fn go(m: &[Vec<f64>], row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
        if row == m.len() {
            *best = best.min(acc / m.len() as f64);
            return;
        }
        for j in 0..m.len() {
            if !used[j] {
                used[j] = true;
                go(m, row + 1, used, acc + m[row][j], best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    go(m, 0, &mut vec![false; m.len()], 0.0, &mut best);
    best
}

/// Permutation search against brute force on `n` random matrices each for
/// two and three sources. The error is the count of mismatches.
pub fn pit_suite(n: usize, seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    let mut rng = Rng::new(seed);
    for s in [2usize, 3] {
        let mut mismatches = 0;
        for _ in 0..n {
            let m: Vec<Vec<f64>> = (0..s).map(|_| (0..s).map(|_| rng.uniform(-30.0, 30.0)).collect()).collect();
            let ok = match pit_loss(&m) {
                Ok((loss, perm)) => {
                    let direct = perm.iter().enumerate().map(|(i, &j)| m[i][j]).sum::<f64>() / s as f64;
                    loss == brute_force_min(&m) && loss == direct && permutations(s).contains(&perm)
                }
                Err(_) => false,
            };
            if !ok {
                mismatches += 1;
            }
        }
        out.push(Check::measured("pit", format!("brute_force_{s}x{n}"), mismatches as f64, 0.5));
    }
    out
}

/// STFT and chunking round trips.
pub fn codec_suite() -> Vec<Check> {
    let mut out = Vec::new();
    let mut rng = Rng::new(13);
    let cfg = StftConfig::default();
    let stft = (|| -> Result<f64> {
        let wav: Vec<f64> = (0..4000).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let spec = stft_analyze(&cfg, &wav)?;
        let y = istft_synthesize(&cfg, &spec.magnitude.data, &spec.phase)?;
        let w = cfg.win_len();
        let end = y.len().min(wav.len()).saturating_sub(w);
        Ok(max_abs_diff(&y[w..end], &wav[w..end]))
    })();
    out.push(Check::from_result("codec", "istft_stft_identity", 1e-6, stft));

    let chunk = (|| -> Result<f64> {
        let mut worst: f64 = 0.0;
        for (frames, hop) in [(1, 1), (37, 5), (100, 50), (151, 50), (64, 3)] {
            let x = SequenceFeature::new(rand(&[frames, 4], &mut rng), 1.0)?;
            let y = chunk_merge(&chunk_split(&x, 2 * hop, hop)?)?;
            worst = worst.max(max_abs_diff(y.data.data(), x.data.data()));
        }
        Ok(worst)
    })();
    out.push(Check::from_result("codec", "chunk_merge_split_identity", 1e-6, chunk));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brute_force_oracle_is_exhaustive() {
        // assignments: 10, 3, 0 (the minimum), 15, 2, 18
        let m = vec![vec![1.0, 0.0, 5.0], vec![0.0, 9.0, 1.0], vec![3.0, 1.0, 0.0]];
        assert_eq!(brute_force_min(&m), 0.0);
        assert_eq!(brute_force_min(&[vec![2.0, 1.0], vec![4.0, 6.0]]), 2.5);
    }

    #[test]
    fn fast_suites_pass() {
        for c in norm_suite()
            .into_iter()
            .chain(path_equivalence_suite(20, 1))
            .chain(pit_suite(200, 2))
            .chain(codec_suite())
        {
            assert!(c.pass, "{}", c.line());
        }
    }

    #[test]
    fn injected_fault_fails_gradient_checks() {
        let mut s = ParamStore::new();
        let mut rng = Rng::new(0);
        let x = s.add("x", rand(&[4, 1, 2], &mut rng));
        let lstm = LstmParams::new(&mut s, "l", 2, 2, &mut rng);
        let run = || {
            param_check("lstm", &s, LAYER_TOL, None, |g| {
                let xv = g.param(x)?;
                let y = lstm_sequence(g, &lstm, xv, Direction::Forward)?;
                Ok(probe(g, y, 0)?)
            })
        };
        assert!(run().pass);
        numcore::set_fault_injection(true);
        let faulty = run();
        numcore::set_fault_injection(false);
        assert!(!faulty.pass, "{}", faulty.line());
    }
}
