//! Residual training of the closed moment system with a frozen closure.

mod collocation;
mod diagnostics;
mod loss;
mod model;
mod residual;
mod train;

pub use collocation::{BoundaryKind, BoundarySpec, CollocationCounts, CollocationSet, LossWeights};
pub use diagnostics::{energy_diagnostic, spearman, MomentSnapshot};
pub use loss::{boundary_loss, initial_loss, total_loss, LossBreakdown, Stage2Problem};
pub use model::{MomentSurrogate, NetOutputs, SpaceTimeBox, Stage2Nets};
pub use residual::{residual_1d, residual_2d, ForceForm};
pub use train::{train_stage2, CheckpointSummary, Stage2Optimizer, Stage2Solution, Stage2Trainer};

#[cfg(test)]
mod tests;
