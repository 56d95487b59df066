use numcore::{Graph, Real, Var};

use super::loss::{neg_snr, neg_snr_loss};
use crate::error::{Error, Result};

/// Largest source count for which permutations are enumerated.
pub const MAX_PIT_SOURCES: usize = 4;

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(n), &mut vec![false; n], &mut out);
    out
}

/// Minimum over assignments of the mean pairwise loss.
///
/// `losses[i][j]` is the loss of estimate `i` against reference `j`. Returns
/// the minimum and `perm` with estimate `i` assigned to reference `perm[i]`;
/// ties go to the lexicographically first permutation.
pub fn pit_loss(losses: &[Vec<f64>]) -> Result<(f64, Vec<usize>)> {
    let n = losses.len();
    if n == 0 || n > MAX_PIT_SOURCES {
        return Err(Error::Config(format!(
            "permutation search supports 1 to {MAX_PIT_SOURCES} sources, got {n}"
        )));
    }
    if let Some(row) = losses.iter().find(|r| r.len() != n) {
        return Err(Error::Dim {
            context: "loss matrix row",
            expected: n,
            actual: row.len(),
        });
    }
    let mut best = (f64::INFINITY, Vec::new());
    for p in permutations(n) {
        let v = p.iter().enumerate().map(|(i, &j)| losses[i][j]).sum::<f64>() / n as f64;
        if v < best.0 {
            best = (v, p);
        }
    }
    Ok(best)
}

/// Pairwise negative-SNR matrix between estimates and references.
pub fn neg_snr_matrix<E: AsRef<[T]>, R: AsRef<[T]>, T: Real>(ests: &[E], refs: &[R]) -> Result<Vec<Vec<f64>>> {
    if ests.len() != refs.len() {
        return Err(Error::Dim {
            context: "estimate count",
            expected: refs.len(),
            actual: ests.len(),
        });
    }
    ests.iter()
        .map(|e| refs.iter().map(|r| neg_snr(e.as_ref(), r.as_ref())).collect())
        .collect()
}

/// PIT negative-SNR objective on the tape. Returns the loss var and the
/// chosen permutation.
pub fn pit_neg_snr<T: Real>(g: &mut Graph<T>, ests: &[Var], refs: &[Vec<T>]) -> Result<(Var, Vec<usize>)> {
    let values: Vec<Vec<T>> = ests.iter().map(|v| g.value(*v).data().to_vec()).collect();
    let (_, perm) = pit_loss(&neg_snr_matrix(&values, refs)?)?;
    let mut total = None;
    for (i, &j) in perm.iter().enumerate() {
        let l = neg_snr_loss(g, ests[i], &refs[j])?;
        total = Some(match total {
            None => l,
            Some(t) => g.add(t, l)?,
        });
    }
    let total = total.expect("at least one source");
    let mean = g.scale(total, T::lit(1.0 / perm.len() as f64))?;
    Ok((mean, perm))
}
