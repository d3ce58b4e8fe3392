use serde::{Deserialize, Serialize};

use super::diagnostics::{energy_diagnostic, MomentSnapshot};
use super::loss::{LossBreakdown, LossEvaluator, Stage2Problem};
use super::model::Stage2Nets;
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, AdamState, MlpSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage2Optimizer {
    pub adam: AdamConfig,
    /// Energy checkpoints every this many epochs; 0 disables them.
    pub checkpoint_every: usize,
}

impl Default for Stage2Optimizer {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            checkpoint_every: 100,
        }
    }
}

/// Loss and error energy at the start of a checkpoint epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointSummary {
    pub epoch: usize,
    pub total_loss: f64,
    /// `E(t)` at each reference snapshot.
    pub energy: Vec<f64>,
}

impl CheckpointSummary {
    pub fn max_energy(&self) -> f64 {
        self.energy.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage2Solution {
    pub nets: Stage2Nets,
    /// Breakdown at the start of each epoch.
    pub history: Vec<LossBreakdown>,
    pub checkpoints: Vec<CheckpointSummary>,
}

impl Stage2Solution {
    pub fn epochs(&self) -> usize {
        self.history.len()
    }

    pub fn total_history(&self) -> Vec<f64> {
        self.history.iter().map(|h| h.total).collect()
    }
}

/// Resumable full-batch Adam on the Stage-2 risk, one optimizer per network.
pub struct Stage2Trainer<'a> {
    problem: &'a Stage2Problem,
    refs: &'a [MomentSnapshot],
    solution: Stage2Solution,
    adam: Vec<AdamState>,
    opt: Stage2Optimizer,
    eval: LossEvaluator,
}

impl<'a> Stage2Trainer<'a> {
    pub fn new(problem: &'a Stage2Problem, spec: &MlpSpec, opt: Stage2Optimizer, refs: &'a [MomentSnapshot]) -> Result<Self> {
        let nets = Stage2Nets::init(problem.domain.clone(), spec, problem.n_moments())?;
        let adam = nets.nets.iter().map(|n| AdamState::new(n.len(), opt.adam)).collect();
        let solution = Stage2Solution {
            nets,
            history: Vec::new(),
            checkpoints: Vec::new(),
        };
        Self::resume(problem, solution, adam, opt, refs)
    }

    pub fn resume(
        problem: &'a Stage2Problem,
        solution: Stage2Solution,
        adam: Vec<AdamState>,
        opt: Stage2Optimizer,
        refs: &'a [MomentSnapshot],
    ) -> Result<Self> {
        if solution.nets.nets.len() != problem.n_moments() || solution.nets.domain != problem.domain {
            return Err(Error::SpecMismatch("networks do not match the stage-2 problem".into()));
        }
        if adam.len() != solution.nets.nets.len()
            || adam.iter().zip(&solution.nets.nets).any(|(a, n)| a.m.len() != n.len())
        {
            return Err(Error::SpecMismatch("optimizer state does not match networks".into()));
        }
        Ok(Self {
            eval: LossEvaluator::new(problem),
            problem,
            refs,
            solution,
            adam,
            opt,
        })
    }

    pub fn solution(&self) -> &Stage2Solution {
        &self.solution
    }

    pub fn optimizer_states(&self) -> &[AdamState] {
        &self.adam
    }

    pub fn into_parts(self) -> (Stage2Solution, Vec<AdamState>) {
        (self.solution, self.adam)
    }

    pub fn run(&mut self, epochs: usize) -> Result<()> {
        let mut grads: Vec<Vec<f64>> = self.solution.nets.nets.iter().map(|n| vec![0.0; n.len()]).collect();
        for _ in 0..epochs {
            let epoch = self.solution.history.len();
            let b = self.eval.evaluate(self.problem, &self.solution.nets, Some(&mut grads))?;
            if !b.total.is_finite() {
                return Err(Error::Diverged { epoch, loss: b.total });
            }
            let every = self.opt.checkpoint_every;
            if every > 0 && epoch % every == 0 && !self.refs.is_empty() {
                self.solution.checkpoints.push(CheckpointSummary {
                    epoch,
                    total_loss: b.total,
                    energy: energy_diagnostic(&self.solution.nets, self.refs)?,
                });
            }
            for (k, g) in grads.iter().enumerate() {
                self.adam[k]
                    .update(&mut self.solution.nets.nets[k].values, g)
                    .map_err(|e| match e {
                        Error::NonFiniteGradient { .. } => Error::Diverged { epoch, loss: b.total },
                        other => other,
                    })?;
            }
            self.solution.history.push(b);
        }
        Ok(())
    }
}

/// Train fresh networks for `epochs` epochs.
pub fn train_stage2(
    problem: &Stage2Problem,
    spec: &MlpSpec,
    opt: Stage2Optimizer,
    refs: &[MomentSnapshot],
    epochs: usize,
) -> Result<Stage2Solution> {
    let mut tr = Stage2Trainer::new(problem, spec, opt, refs)?;
    tr.run(epochs)?;
    Ok(tr.into_parts().0)
}
