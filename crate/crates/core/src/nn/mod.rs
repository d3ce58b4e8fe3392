//! Fully connected tanh networks with exact parameter and input derivatives,
//! and the Adam optimizer.

mod adam;
mod linalg;
mod mlp;
mod tape;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use mlp::{
    backward, forward, init_xavier, input_jacobian, tanh, GradientBundle, MlpParameters, MlpSpec,
};
pub use tape::Tape;
