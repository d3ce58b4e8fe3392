//! Learning the closing moment derivative from lower moments.

mod closure;
mod dataset;
mod field;
mod scheme;

pub use closure::{stage1_loss, sum_sq_error, train_stage1, Stage1Optimizer, Stage1Trainer, TrainedClosure};
pub use dataset::{assemble_dataset, assemble_dataset_2d, Normalization, Stage1Dataset};
pub use field::{evaluate_closure, ClosureField1D, ClosureField2D};
pub use scheme::ClosureScheme;
