//! Kinetic reference solvers and moment extraction.

pub mod analytic;
pub mod deposit;
pub mod fv;
pub mod grid;
pub mod initial;
pub mod kernel;
pub mod particles;
pub mod potential;
pub mod stencil;

pub use analytic::{analytic_two_branch, overlap_moments, RegularizedTwoBranch, TwoBranchSolution};
pub use deposit::{deposit_moments, deposit_moments_2d, Moment2D, MomentField1D, MomentField2D};
pub use fv::{finite_volume_step_2d, PhaseSpaceDensity};
pub use grid::{Grid1D, Grid2D, PhaseSpaceGrid2D};
pub use initial::{InitialData, InitialData2D, Profile};
pub use kernel::{KernelKind, ShapeKernel};
pub use particles::{push_particles, sample_single_phase, sample_single_phase_2d, Integrator, ParticleEnsemble};
pub use potential::Potential;
pub use stencil::{spatial_derivative, spatial_derivative_2d};
