use numcore::{Graph, ParamId, ParamStore, Real, Rng, Var};

use super::{PathSelector, Scheme};
use crate::error::{Error, Result};
use crate::layers::{lstm_sequence, Direction, FcParams, LstmParams, NormKind, NormMode, NormParams};

/// A recurrent block with normalization and residual connection that can run
/// on an online and an offline path.
///
/// `rnn1` is the forward recurrence. `rnn2` is the backward recurrence of
/// the standard and decomposed schemes, and the second recurrence of the
/// reorganized scheme.
#[derive(Clone, Debug, PartialEq)]
pub struct DualBlock {
    pub scheme: Scheme,
    pub rnn1: LstmParams,
    pub rnn2: LstmParams,
    /// `2H -> N`, shared by both paths in the reorganized scheme.
    pub fc_offline: FcParams,
    /// `H -> N`, decomposed scheme only.
    pub fc_online: Option<FcParams>,
    pub norm: NormParams,
    pub norm_kind: NormKind,
}

impl DualBlock {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        scheme: Scheme,
        channels: usize,
        hidden: usize,
        norm_kind: NormKind,
        rng: &mut Rng,
    ) -> Self {
        let rnn1 = LstmParams::new(store, &format!("{name}.rnn1"), channels, hidden, rng);
        let rnn2 = LstmParams::new(store, &format!("{name}.rnn2"), channels, hidden, rng);
        let fc_offline = FcParams::new(store, &format!("{name}.fc_offline"), 2 * hidden, channels, rng);
        let fc_online = (scheme == Scheme::Decomposed)
            .then(|| FcParams::new(store, &format!("{name}.fc_online"), hidden, channels, rng));
        let norm = NormParams::new(store, &format!("{name}.norm"), channels);
        Self {
            scheme,
            rnn1,
            rnn2,
            fc_offline,
            fc_online,
            norm,
            norm_kind,
        }
    }

    pub fn channels(&self) -> usize {
        self.norm.channels
    }

    pub fn hidden(&self) -> usize {
        self.rnn1.hidden_dim
    }

    pub fn num_params(&self) -> usize {
        self.rnn1.num_params()
            + self.rnn2.num_params()
            + self.fc_offline.num_params()
            + self.fc_online.as_ref().map_or(0, |f| f.num_params())
            + self.norm.num_params()
    }

    pub fn check_path(&self, path: PathSelector) -> Result<()> {
        if path == PathSelector::Online && self.scheme == Scheme::Standard {
            return Err(Error::NoOnlinePath("standard"));
        }
        Ok(())
    }

    /// Recurrence plus projection on a time-major `T x B x N` input, before
    /// normalization and the residual connection.
    pub fn transform<T: Real>(&self, g: &mut Graph<T>, x: Var, path: PathSelector) -> Result<Var> {
        self.check_path(path)?;
        let n = g.shape(x).last().copied().unwrap_or(0);
        if n != self.channels() {
            return Err(Error::Dim {
                context: "dual block input",
                expected: self.channels(),
                actual: n,
            });
        }
        let h1 = lstm_sequence(g, &self.rnn1, x, Direction::Forward)?;
        match (self.scheme, path) {
            (Scheme::Decomposed, PathSelector::Online) => {
                let fc = self.fc_online.as_ref().ok_or_else(|| {
                    Error::Config("decomposed block is missing its online projection".into())
                })?;
                fc.forward(g, h1)
            }
            (_, PathSelector::Offline) => {
                let h2 = lstm_sequence(g, &self.rnn2, x, Direction::Backward)?;
                let cat = g.concat(&[h1, h2], 2)?;
                self.fc_offline.forward(g, cat)
            }
            (Scheme::Reorganized, PathSelector::Online) => {
                let h2 = lstm_sequence(g, &self.rnn2, x, Direction::Forward)?;
                let cat = g.concat(&[h1, h2], 2)?;
                self.fc_offline.forward(g, cat)
            }
            (Scheme::Standard, PathSelector::Online) => unreachable!("rejected by check_path"),
        }
    }

    /// `x + norm(transform(x))` on a time-major input, using the statistics
    /// domain implied by the configured normalization.
    pub fn forward<T: Real>(&self, g: &mut Graph<T>, x: Var, path: PathSelector) -> Result<Var> {
        if path == PathSelector::Online && self.norm_kind == NormKind::Gln {
            return Err(Error::NonCausalNorm("dual block"));
        }
        self.forward_with(g, x, path, self.norm_kind.default_mode(), true)
    }

    /// Like [`DualBlock::forward`] with an explicit statistics domain.
    ///
    /// When `time_major` is false the input is `B x T x N`; the recurrence
    /// runs along axis 1 and normalization rows are taken along axis 0.
    pub fn forward_with<T: Real>(
        &self,
        g: &mut Graph<T>,
        x: Var,
        path: PathSelector,
        mode: NormMode,
        time_major: bool,
    ) -> Result<Var> {
        let y = if time_major {
            self.transform(g, x, path)?
        } else {
            let xt = g.transpose01(x)?;
            let y = self.transform(g, xt, path)?;
            g.transpose01(y)?
        };
        let y = self.norm.forward(g, y, mode)?;
        Ok(g.add(x, y)?)
    }

    /// Parameters touched by one path.
    pub fn path_params(&self, path: PathSelector) -> Vec<ParamId> {
        let lstm = |p: &LstmParams| [p.w, p.u, p.b];
        let mut ids: Vec<ParamId> = lstm(&self.rnn1).to_vec();
        match (self.scheme, path) {
            (Scheme::Decomposed, PathSelector::Online) => {
                if let Some(fc) = &self.fc_online {
                    ids.extend([fc.weight, fc.bias]);
                }
            }
            (Scheme::Standard, PathSelector::Online) => {}
            _ => {
                ids.extend(lstm(&self.rnn2));
                ids.extend([self.fc_offline.weight, self.fc_offline.bias]);
            }
        }
        ids.extend([self.norm.gamma, self.norm.beta]);
        ids.sort();
        ids
    }

    /// The same parameters viewed as a standard bidirectional block.
    pub fn as_standard(&self) -> DualBlock {
        DualBlock {
            scheme: Scheme::Standard,
            fc_online: None,
            ..self.clone()
        }
    }
}

/// Applies `blocks` in sequence with one path selector for all of them.
pub fn stack_forward<T: Real>(
    g: &mut Graph<T>,
    blocks: &[DualBlock],
    x: Var,
    path: PathSelector,
) -> Result<Var> {
    let mut y = x;
    for b in blocks {
        y = b.forward(g, y, path)?;
    }
    Ok(y)
}
