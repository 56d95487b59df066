//! Scale-invariant SDR, energy-ratio SDR and their improvements over the
//! unprocessed mixture.

use std::io::Write;
use std::path::Path;

use numcore::Real;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::Utterance;
use crate::dualpath::PathSelector;
use crate::error::{Error, Result};
use crate::models::Model;
use crate::training::permutations;

/// Reported values are clamped to `[-CLAMP_DB, CLAMP_DB]`.
pub const CLAMP_DB: f64 = 60.0;

fn clamp_ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        return if num == 0.0 { -CLAMP_DB } else { CLAMP_DB };
    }
    if num == 0.0 {
        return -CLAMP_DB;
    }
    (10.0 * (num / den).log10()).clamp(-CLAMP_DB, CLAMP_DB)
}

fn check<T: Real>(est: &[T], reference: &[T]) -> Result<()> {
    if est.len() != reference.len() {
        return Err(Error::Dim {
            context: "metric signal length",
            expected: reference.len(),
            actual: est.len(),
        });
    }
    Ok(())
}

fn zero_mean<T: Real>(x: &[T]) -> Vec<f64> {
    let m = x.iter().map(|v| v.as_f64()).sum::<f64>() / x.len().max(1) as f64;
    x.iter().map(|v| v.as_f64() - m).collect()
}

/// SI-SDR before clamping, in dB. Infinite for a perfect estimate.
pub fn si_sdr_raw<T: Real>(est: &[T], reference: &[T]) -> Result<f64> {
    check(est, reference)?;
    let (e, r) = (zero_mean(est), zero_mean(reference));
    let rr: f64 = r.iter().map(|v| v * v).sum();
    if rr == 0.0 {
        return Err(Error::ZeroReference);
    }
    let alpha = e.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() / rr;
    let target: f64 = alpha * alpha * rr;
    let resid: f64 = e.iter().zip(&r).map(|(a, b)| (a - alpha * b).powi(2)).sum();
    Ok(10.0 * (target / resid).log10())
}

/// Scale-invariant signal-to-distortion ratio in dB, clamped to +-60.
pub fn si_sdr<T: Real>(est: &[T], reference: &[T]) -> Result<f64> {
    check(est, reference)?;
    let (e, r) = (zero_mean(est), zero_mean(reference));
    let rr: f64 = r.iter().map(|v| v * v).sum();
    if rr == 0.0 {
        return Err(Error::ZeroReference);
    }
    let alpha = e.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() / rr;
    let resid: f64 = e.iter().zip(&r).map(|(a, b)| (a - alpha * b).powi(2)).sum();
    Ok(clamp_ratio(alpha * alpha * rr, resid))
}

/// Energy-ratio SDR `10 log10(|ref|^2 / |ref - est|^2)` in dB, clamped to +-60.
pub fn sdr<T: Real>(est: &[T], reference: &[T]) -> Result<f64> {
    check(est, reference)?;
    let rr: f64 = reference.iter().map(|v| v.as_f64().powi(2)).sum();
    if rr == 0.0 {
        return Err(Error::ZeroReference);
    }
    let err: f64 = est
        .iter()
        .zip(reference)
        .map(|(a, b)| (b.as_f64() - a.as_f64()).powi(2))
        .sum();
    Ok(clamp_ratio(rr, err))
}

/// Metrics of one utterance under its best assignment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtteranceMetrics {
    pub index: usize,
    /// Estimate `i` is scored against reference `permutation[i]`.
    pub permutation: Vec<usize>,
    pub si_sdr: Vec<f64>,
    pub si_sdri: Vec<f64>,
    #[serde(rename = "snr_sdr")]
    pub sdr: Vec<f64>,
    #[serde(rename = "snr_sdri")]
    pub sdri: Vec<f64>,
}

/// Means over a set of scored utterances. SDR here is the energy-ratio
/// variant, reported as "SNR-SDR".
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub path: PathSelector,
    pub count: usize,
    pub si_sdr: f64,
    pub si_sdri: f64,
    #[serde(rename = "snr_sdr")]
    pub sdr: f64,
    #[serde(rename = "snr_sdri")]
    pub sdri: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub utterances: Vec<UtteranceMetrics>,
    pub summary: EvalSummary,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n.max(1) as f64
}

/// Scores estimates against references, choosing the permutation with the
/// highest mean SI-SDR.
pub fn score_utterance<T: Real>(
    index: usize,
    ests: &[Vec<T>],
    refs: &[Vec<T>],
    mixture: &[T],
) -> Result<UtteranceMetrics> {
    if ests.len() != refs.len() || refs.is_empty() {
        return Err(Error::Dim {
            context: "estimate count",
            expected: refs.len(),
            actual: ests.len(),
        });
    }
    let n = refs.len();
    let table: Vec<Vec<f64>> = ests
        .iter()
        .map(|e| refs.iter().map(|r| si_sdr(e, r)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let mut best: Option<(f64, Vec<usize>)> = None;
    for p in permutations(n) {
        let v = mean(p.iter().enumerate().map(|(i, &j)| table[i][j]));
        if best.as_ref().is_none_or(|(b, _)| v > *b) {
            best = Some((v, p));
        }
    }
    let (_, perm) = best.expect("at least one permutation");
    let mut m = UtteranceMetrics {
        index,
        permutation: perm.clone(),
        si_sdr: Vec::with_capacity(n),
        si_sdri: Vec::with_capacity(n),
        sdr: Vec::with_capacity(n),
        sdri: Vec::with_capacity(n),
    };
    for (i, &j) in perm.iter().enumerate() {
        let (s, d) = (table[i][j], sdr(&ests[i], &refs[j])?);
        m.si_sdr.push(s);
        m.si_sdri.push(s - si_sdr(mixture, &refs[j])?);
        m.sdr.push(d);
        m.sdri.push(d - sdr(mixture, &refs[j])?);
    }
    Ok(m)
}

pub fn summarize(path: PathSelector, utterances: Vec<UtteranceMetrics>) -> EvalReport {
    let flat = |f: fn(&UtteranceMetrics) -> &Vec<f64>| mean(utterances.iter().map(|u| mean(f(u).iter().copied())));
    let summary = EvalSummary {
        path,
        count: utterances.len(),
        si_sdr: flat(|u| &u.si_sdr),
        si_sdri: flat(|u| &u.si_sdri),
        sdr: flat(|u| &u.sdr),
        sdri: flat(|u| &u.sdri),
    };
    EvalReport { utterances, summary }
}

/// Runs `model` on every utterance and scores the outputs.
pub fn evaluate<T: Real>(model: &Model<T>, data: &[Utterance], path: PathSelector) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(Error::Config("evaluation set is empty".into()));
    }
    model.check_path(path)?;
    let utterances = data
        .par_iter()
        .enumerate()
        .map(|(i, u)| {
            let mix: Vec<T> = u.mixture.iter().map(|v| T::lit(*v as f64)).collect();
            let refs: Vec<Vec<T>> = u
                .sources
                .iter()
                .map(|s| s.iter().map(|v| T::lit(*v as f64)).collect())
                .collect();
            let ests = model.infer(&mix, path)?;
            score_utterance(i, &ests, &refs, &mix)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(path, utterances))
}

impl EvalReport {
    /// One JSON record per utterance followed by a `{"summary": ...}` line.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        for u in &self.utterances {
            let line = serde_json::to_string(u).map_err(|e| Error::Config(e.to_string()))?;
            writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
        }
        let summary = serde_json::json!({ "summary": self.summary });
        writeln!(f, "{summary}").map_err(|e| Error::io(path, e))
    }

    pub fn summary_line(&self) -> String {
        let s = &self.summary;
        format!(
            "{} path, {} utterances: SI-SDR {:.2} dB, SI-SDRi {:.2} dB, SNR-SDR {:.2} dB, SNR-SDRi {:.2} dB",
            s.path, s.count, s.si_sdr, s.si_sdri, s.sdr, s.sdri
        )
    }
}
