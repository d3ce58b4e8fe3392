use std::borrow::Cow;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{Normalization, Stage1Dataset};
use super::scheme::ClosureScheme;
use crate::error::{Error, Result};
use crate::nn::{init_xavier, AdamConfig, AdamState, MlpParameters, MlpSpec, Tape};

/// A learned closure: one network per closing quantity plus the feature
/// scaling it was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedClosure {
    pub scheme: ClosureScheme,
    pub spec: MlpSpec,
    pub nets: Vec<MlpParameters>,
    pub norm: Normalization,
    /// Sum-of-squares loss at the start of each epoch.
    pub history: Vec<f64>,
}

impl TrainedClosure {
    /// Fresh Xavier networks; network `k` is seeded with `spec.seed + k`.
    pub fn init(scheme: ClosureScheme, spec: &MlpSpec, norm: Normalization) -> Result<Self> {
        scheme.check_spec(spec)?;
        let nets = (0..scheme.n_targets())
            .map(|k| {
                init_xavier(&MlpSpec {
                    seed: spec.seed.wrapping_add(k as u64),
                    ..spec.clone()
                })
            })
            .collect();
        Ok(Self {
            scheme,
            spec: spec.clone(),
            nets,
            norm,
            history: Vec::new(),
        })
    }

    pub fn epochs(&self) -> usize {
        self.history.len()
    }

    /// Closing values for raw feature rows, `n_rows x n_targets`.
    pub fn predict(&self, net_raw: &[f64], combo_raw: &[f64]) -> Result<Vec<f64>> {
        let n_in = self.scheme.n_net_inputs();
        if net_raw.len() % n_in != 0 {
            return Err(Error::SchemeArity {
                scheme: self.scheme.name(),
                expected: n_in,
                got: net_raw.len() % n_in,
            });
        }
        let n = net_raw.len() / n_in;
        if combo_raw.len() != n * self.scheme.n_combo() {
            return Err(Error::SchemeArity {
                scheme: self.scheme.name(),
                expected: self.scheme.n_combo(),
                got: if n == 0 { combo_raw.len() } else { combo_raw.len() / n },
            });
        }
        let x = self.norm.normalize_net(net_raw);
        let c = self.norm.normalize_combo(combo_raw);
        let nt = self.scheme.n_targets();
        let mut out = vec![0.0; n * nt];
        let mut tape = Tape::new();
        for (k, net) in self.nets.iter().enumerate() {
            tape.forward(net, &x, &[])?;
            let pred = combine(&self.scheme, tape.value(), &c, self.norm.target_scale[k]);
            for (r, p) in pred.into_iter().enumerate() {
                out[r * nt + k] = p;
            }
        }
        Ok(out)
    }

    pub fn predict_dataset(&self, data: &Stage1Dataset) -> Result<Vec<f64>> {
        self.predict(&data.net_features, &data.combo_features)
    }
}

/// Physical prediction from network outputs and normalized combination features.
fn combine(scheme: &ClosureScheme, out: &[f64], combo: &[f64], target_scale: f64) -> Vec<f64> {
    let k = scheme.n_combo();
    if k == 0 {
        out.iter().map(|o| target_scale * o).collect()
    } else {
        out.chunks_exact(k)
            .zip(combo.chunks_exact(k))
            .map(|(o, c)| target_scale * o.iter().zip(c).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }
}

/// Sum over rows (and closing quantities) of squared prediction errors.
pub fn stage1_loss(closure: &TrainedClosure, data: &Stage1Dataset) -> Result<f64> {
    let pred = closure.predict_dataset(data)?;
    Ok(sum_sq_error(&pred, &data.targets))
}

pub fn sum_sq_error(pred: &[f64], targets: &[f64]) -> f64 {
    pred.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[derive(Default)]
pub struct Stage1Optimizer {
    pub adam: AdamConfig,
    /// Rows per Adam step; `None` means full batch.
    pub batch_size: Option<usize>,
    /// Seed for minibatch shuffling.
    pub shuffle_seed: u64,
}


/// Resumable Adam training of a [`TrainedClosure`] on a fixed dataset.
pub struct Stage1Trainer<'a> {
    data: &'a Stage1Dataset,
    closure: TrainedClosure,
    adam: Vec<AdamState>,
    opt: Stage1Optimizer,
    x: Vec<f64>,
    c: Vec<f64>,
    tape: Tape,
}

impl<'a> Stage1Trainer<'a> {
    pub fn new(data: &'a Stage1Dataset, spec: &MlpSpec, opt: Stage1Optimizer) -> Result<Self> {
        let closure = TrainedClosure::init(data.scheme, spec, data.norm.clone())?;
        let adam = closure
            .nets
            .iter()
            .map(|n| AdamState::new(n.len(), opt.adam))
            .collect();
        Self::resume(data, closure, adam, opt)
    }

    /// Continue from a checkpointed closure and optimizer states.
    pub fn resume(
        data: &'a Stage1Dataset,
        closure: TrainedClosure,
        adam: Vec<AdamState>,
        opt: Stage1Optimizer,
    ) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::InvalidArgument("stage-1 dataset is empty".into()));
        }
        if closure.scheme != data.scheme {
            return Err(Error::SpecMismatch(format!(
                "closure is {}, dataset is {}",
                closure.scheme.name(),
                data.scheme.name()
            )));
        }
        if adam.len() != closure.nets.len()
            || adam.iter().zip(&closure.nets).any(|(a, n)| a.m.len() != n.len())
        {
            return Err(Error::SpecMismatch("optimizer state does not match networks".into()));
        }
        let x = closure.norm.normalize_net(&data.net_features);
        let c = closure.norm.normalize_combo(&data.combo_features);
        Ok(Self {
            data,
            closure,
            adam,
            opt,
            x,
            c,
            tape: Tape::new(),
        })
    }

    pub fn closure(&self) -> &TrainedClosure {
        &self.closure
    }

    pub fn optimizer_states(&self) -> &[AdamState] {
        &self.adam
    }

    pub fn into_parts(self) -> (TrainedClosure, Vec<AdamState>) {
        (self.closure, self.adam)
    }

    /// Loss and gradient of network `k` on the given rows (all rows if `None`).
    fn loss_grad(&mut self, k: usize, rows: Option<&[usize]>, grad: &mut [f64]) -> Result<f64> {
        let scheme = self.data.scheme;
        let (n_in, n_c, nt) = (scheme.n_net_inputs(), scheme.n_combo(), scheme.n_targets());
        let (x, c, idx): (Cow<[f64]>, Cow<[f64]>, Cow<[usize]>) = match rows {
            None => (
                Cow::Borrowed(&self.x),
                Cow::Borrowed(&self.c),
                Cow::Owned((0..self.data.len()).collect()),
            ),
            Some(r) => (
                Cow::Owned(r.iter().flat_map(|&i| self.x[i * n_in..(i + 1) * n_in].iter().copied()).collect()),
                Cow::Owned(r.iter().flat_map(|&i| self.c[i * n_c..(i + 1) * n_c].iter().copied()).collect()),
                Cow::Borrowed(r),
            ),
        };
        let net = &self.closure.nets[k];
        self.tape.forward(net, &x, &[])?;
        let s = self.closure.norm.target_scale[k];
        let pred = combine(&scheme, self.tape.value(), &c, s);
        let n_out = scheme.n_net_outputs();
        let mut bar = vec![0.0; idx.len() * n_out];
        let mut loss = 0.0;
        for (r, &i) in idx.iter().enumerate() {
            let e = pred[r] - self.data.targets[i * nt + k];
            loss += e * e;
            if n_c == 0 {
                bar[r] = 2.0 * e * s;
            } else {
                for q in 0..n_c {
                    bar[r * n_out + q] = 2.0 * e * s * c[r * n_c + q];
                }
            }
        }
        grad.iter_mut().for_each(|g| *g = 0.0);
        self.tape.backward(net, &bar, grad)?;
        Ok(loss)
    }

    /// Run `epochs` more epochs. The recorded loss of an epoch is the summed
    /// loss at the parameters each step started from.
    pub fn run(&mut self, epochs: usize) -> Result<()> {
        let n = self.data.len();
        let batch = self.opt.batch_size.filter(|b| *b > 0 && *b < n);
        let mut grads: Vec<Vec<f64>> = self.closure.nets.iter().map(|p| vec![0.0; p.len()]).collect();
        for _ in 0..epochs {
            let epoch = self.closure.history.len();
            let mut total = 0.0;
            match batch {
                None => {
                    for k in 0..self.closure.nets.len() {
                        total += self.loss_grad(k, None, &mut grads[k])?;
                    }
                    self.step(&grads, epoch, total)?;
                }
                Some(b) => {
                    let mut order: Vec<usize> = (0..n).collect();
                    let mut rng = ChaCha8Rng::seed_from_u64(
                        self.opt.shuffle_seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
                    );
                    order.shuffle(&mut rng);
                    for chunk in order.chunks(b) {
                        let mut part = 0.0;
                        for k in 0..self.closure.nets.len() {
                            part += self.loss_grad(k, Some(chunk), &mut grads[k])?;
                        }
                        total += part;
                        self.step(&grads, epoch, part)?;
                    }
                }
            }
            if !total.is_finite() {
                return Err(Error::Diverged { epoch, loss: total });
            }
            self.closure.history.push(total);
        }
        Ok(())
    }

    fn step(&mut self, grads: &[Vec<f64>], epoch: usize, loss: f64) -> Result<()> {
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, loss });
        }
        for (k, g) in grads.iter().enumerate() {
            self.adam[k]
                .update(&mut self.closure.nets[k].values, g)
                .map_err(|e| match e {
                    Error::NonFiniteGradient { .. } => Error::Diverged { epoch, loss },
                    other => other,
                })?;
        }
        Ok(())
    }
}

/// Full training run from fresh Xavier networks.
pub fn train_stage1(
    data: &Stage1Dataset,
    spec: &MlpSpec,
    opt: Stage1Optimizer,
    epochs: usize,
) -> Result<TrainedClosure> {
    let mut trainer = Stage1Trainer::new(data, spec, opt)?;
    trainer.run(epochs)?;
    Ok(trainer.into_parts().0)
}
