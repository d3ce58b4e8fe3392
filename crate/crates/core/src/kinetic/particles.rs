//! Weighted phase-space particles, their initial sampling and transport
//! along the characteristics `dX/dt = V`, `dV/dt = -grad Phi(X)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::grid::{Grid1D, Grid2D};
use super::initial::{InitialData, InitialData2D};
use super::potential::Potential;
use crate::error::{Error, Result};

/// Structure-of-arrays particle set in `dim` spatial dimensions (1 or 2).
/// Particle `k` occupies `positions[k*dim..(k+1)*dim]` and likewise for
/// `velocities`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    dim: usize,
    pub positions: Vec<f64>,
    pub velocities: Vec<f64>,
    pub weights: Vec<f64>,
    pub time: f64,
}

impl ParticleEnsemble {
    pub fn new(
        dim: usize,
        positions: Vec<f64>,
        velocities: Vec<f64>,
        weights: Vec<f64>,
        time: f64,
    ) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::InvalidArgument(format!(
                "particles must live in 1 or 2 dimensions, got {dim}"
            )));
        }
        let n = weights.len();
        if positions.len() != n * dim || velocities.len() != n * dim {
            return Err(Error::DimensionMismatch {
                expected: n * dim,
                got: positions.len().max(velocities.len()),
                context: "particle coordinates vs weights",
            });
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "particle weights must be nonnegative, found {w}"
            )));
        }
        Ok(Self {
            dim,
            positions,
            velocities,
            weights,
            time,
        })
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            positions: Vec::new(),
            velocities: Vec::new(),
            weights: Vec::new(),
            time: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// Closed-form phase-space rotation; harmonic potentials only.
    ExactHarmonic,
    VelocityVerlet,
}

/// Stratified monokinetic sampling on a 1D grid: `particles_per_cell` strata
/// per cell with one seeded uniform jitter each, `v = u0(x)` exactly and weight
/// `rho0(x_cell) dx / particles_per_cell`, so that the total mass is the
/// midpoint rule of `rho0`.
pub fn sample_single_phase(
    init: &InitialData,
    grid: &Grid1D,
    particles_per_cell: usize,
    seed: u64,
) -> Result<ParticleEnsemble> {
    if particles_per_cell == 0 {
        return Err(Error::InvalidArgument(
            "particles_per_cell must be at least 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = grid.n_cells() * particles_per_cell;
    let mut positions = Vec::with_capacity(n);
    let mut velocities = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    let dx = grid.dx();
    let inv_ppc = 1.0 / particles_per_cell as f64;
    for j in 0..grid.n_cells() {
        let xc = grid.center(j);
        let rho = init.density(xc);
        if !(rho >= 0.0) {
            return Err(Error::NegativeDensity {
                x: vec![xc],
                value: rho,
            });
        }
        let w = rho * dx * inv_ppc;
        for k in 0..particles_per_cell {
            let jitter: f64 = rng.random();
            let x = grid.x_min() + (j as f64 + (k as f64 + jitter) * inv_ppc) * dx;
            positions.push(x);
            velocities.push(init.velocity(x));
            weights.push(w);
        }
    }
    ParticleEnsemble::new(1, positions, velocities, weights, 0.0)
}

/// 2D analogue of [`sample_single_phase`]; `particles_per_cell` must be a
/// perfect square so each cell holds an `n x n` jittered lattice.
pub fn sample_single_phase_2d(
    init: &InitialData2D,
    grid: &Grid2D,
    particles_per_cell: usize,
    seed: u64,
) -> Result<ParticleEnsemble> {
    let side = (particles_per_cell as f64).sqrt().round() as usize;
    if particles_per_cell == 0 || side * side != particles_per_cell {
        return Err(Error::InvalidArgument(format!(
            "2D sampling needs a positive square particles_per_cell, got {particles_per_cell}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n1, n2) = grid.shape();
    let (dx1, dx2) = (grid.x1.dx(), grid.x2.dx());
    let n = n1 * n2 * particles_per_cell;
    let mut positions = Vec::with_capacity(2 * n);
    let mut velocities = Vec::with_capacity(2 * n);
    let mut weights = Vec::with_capacity(n);
    let inv_side = 1.0 / side as f64;
    for i1 in 0..n1 {
        for i2 in 0..n2 {
            let (c1, c2) = (grid.x1.center(i1), grid.x2.center(i2));
            let rho = init.density(c1, c2);
            if !(rho >= 0.0) {
                return Err(Error::NegativeDensity {
                    x: vec![c1, c2],
                    value: rho,
                });
            }
            let w = rho * dx1 * dx2 / particles_per_cell as f64;
            for a in 0..side {
                for b in 0..side {
                    let j1: f64 = rng.random();
                    let j2: f64 = rng.random();
                    let x1 = grid.x1.x_min() + (i1 as f64 + (a as f64 + j1) * inv_side) * dx1;
                    let x2 = grid.x2.x_min() + (i2 as f64 + (b as f64 + j2) * inv_side) * dx2;
                    let u = init.velocity(x1, x2);
                    positions.extend_from_slice(&[x1, x2]);
                    velocities.extend_from_slice(&u);
                    weights.push(w);
                }
            }
        }
    }
    ParticleEnsemble::new(2, positions, velocities, weights, 0.0)
}

/// Advance every particle by `n_steps` steps of size `dt`. Weights are never
/// touched, so the total mass is bit-identical before and after.
pub fn push_particles(
    ens: &ParticleEnsemble,
    pot: &Potential,
    dt: f64,
    n_steps: usize,
    integrator: Integrator,
) -> Result<ParticleEnsemble> {
    let mut out = ens.clone();
    advance(&mut out, pot, dt, n_steps, integrator)?;
    Ok(out)
}

/// In-place form of [`push_particles`].
pub fn advance(
    ens: &mut ParticleEnsemble,
    pot: &Potential,
    dt: f64,
    n_steps: usize,
    integrator: Integrator,
) -> Result<()> {
    let total = dt * n_steps as f64;
    if !dt.is_finite() || total < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "need dt * n_steps >= 0, got dt = {dt}, n_steps = {n_steps}"
        )));
    }
    if n_steps == 0 || total == 0.0 {
        return Ok(());
    }
    let dim = ens.dim;
    match integrator {
        Integrator::ExactHarmonic => {
            let c = pot
                .harmonic_coefficient()
                .ok_or_else(|| Error::NonHarmonicPotential(pot.name()))?;
            if c < 0.0 {
                return Err(Error::NonHarmonicPotential(pot.name()));
            }
            if c == 0.0 {
                for (x, v) in ens.positions.iter_mut().zip(&ens.velocities) {
                    *x += v * total;
                }
            } else {
                let omega = c.sqrt();
                let (s, co) = (omega * total).sin_cos();
                for (x, v) in ens.positions.iter_mut().zip(ens.velocities.iter_mut()) {
                    let (x0, v0) = (*x, *v);
                    *x = x0 * co + v0 * s / omega;
                    *v = -x0 * omega * s + v0 * co;
                }
            }
        }
        Integrator::VelocityVerlet => {
            let mut g = [0.0f64; 2];
            let half = 0.5 * dt;
            for k in 0..ens.len() {
                let x = &mut ens.positions[k * dim..(k + 1) * dim];
                let v = &mut ens.velocities[k * dim..(k + 1) * dim];
                pot.gradient(x, &mut g[..dim]);
                for _ in 0..n_steps {
                    for a in 0..dim {
                        v[a] -= half * g[a];
                        x[a] += dt * v[a];
                    }
                    pot.gradient(x, &mut g[..dim]);
                    for a in 0..dim {
                        v[a] -= half * g[a];
                    }
                }
            }
        }
    }
    ens.time += total;
    Ok(())
}
