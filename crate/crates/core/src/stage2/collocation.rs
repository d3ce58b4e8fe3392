//! Collocation points, boundary conditions and penalty weights.

use serde::{Deserialize, Serialize};

use super::model::SpaceTimeBox;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    /// Matching values at opposite faces.
    Periodic,
    /// Prescribed normal derivative on every face.
    Neumann,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundarySpec {
    pub kind: BoundaryKind,
    /// Normal-derivative target per moment (Neumann only).
    pub neumann_targets: Vec<f64>,
}

impl BoundarySpec {
    pub fn periodic() -> Self {
        Self {
            kind: BoundaryKind::Periodic,
            neumann_targets: Vec::new(),
        }
    }

    /// Zero normal derivative for each of `n_moments` fields.
    pub fn neumann(n_moments: usize) -> Self {
        Self {
            kind: BoundaryKind::Neumann,
            neumann_targets: vec![0.0; n_moments],
        }
    }

    pub fn validate(&self, n_moments: usize) -> Result<()> {
        match self.kind {
            BoundaryKind::Periodic => Ok(()),
            BoundaryKind::Neumann => {
                if self.neumann_targets.len() != n_moments {
                    return Err(Error::DimensionMismatch {
                        expected: n_moments,
                        got: self.neumann_targets.len(),
                        context: "neumann targets vs moments",
                    });
                }
                if self.neumann_targets.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidArgument("neumann targets must be finite".into()));
                }
                Ok(())
            }
        }
    }

    pub fn target(&self, k: usize) -> f64 {
        self.neumann_targets.get(k).copied().unwrap_or(0.0)
    }
}

/// Boundary penalties `lambda_1..lambda_n` followed by initial penalties
/// `lambda_{n+1}..lambda_{2n}` for `n` moment networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambdas: Vec<f64>,
}

impl LossWeights {
    pub fn ones(n_moments: usize) -> Self {
        Self {
            lambdas: vec![1.0; 2 * n_moments],
        }
    }

    pub fn new(lambdas: Vec<f64>) -> Result<Self> {
        if lambdas.is_empty() || lambdas.len() % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "need an even, nonzero number of penalty weights, got {}",
                lambdas.len()
            )));
        }
        if let Some(l) = lambdas.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
            return Err(Error::InvalidArgument(format!("penalty weight {l} must be finite and >= 0")));
        }
        Ok(Self { lambdas })
    }

    pub fn n_moments(&self) -> usize {
        self.lambdas.len() / 2
    }

    pub fn bc(&self, k: usize) -> f64 {
        self.lambdas[k]
    }

    pub fn ic(&self, k: usize) -> f64 {
        self.lambdas[self.n_moments() + k]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollocationCounts {
    pub n_t: usize,
    /// Interior samples per space axis.
    pub n_x: [usize; 2],
}

/// Sample points, all as `(t, x...)` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CollocationSet {
    pub dim: usize,
    /// Residual points, strictly inside the box.
    pub interior: Vec<f64>,
    /// Boundary points on lower faces; `right[i]` is the partner of `left[i]`
    /// on the opposite face along `axis[i]`.
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    pub axis: Vec<usize>,
    /// Points at `t = 0`.
    pub initial: Vec<f64>,
    /// `initial_targets[k][p]`, moment `k` at initial point `p`.
    pub initial_targets: Vec<Vec<f64>>,
}

/// `n` evenly spaced midpoints of `[a, b]`.
fn midpoints(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (i as f64 + 0.5) * (b - a) / n as f64).collect()
}

impl CollocationSet {
    /// Tensor-product interior grid over `[0, T] x inner box`, boundary pairs
    /// on the faces of `domain` at the same times and tangential samples, and
    /// the given initial points.
    pub fn tensor(
        domain: &SpaceTimeBox,
        inner_lower: &[f64],
        inner_upper: &[f64],
        counts: CollocationCounts,
        initial: Vec<f64>,
        initial_targets: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let dim = domain.dim();
        if inner_lower.len() != dim || inner_upper.len() != dim {
            return Err(Error::InvalidArgument("interior box arity differs from domain".into()));
        }
        if counts.n_t == 0 || counts.n_x[..dim].contains(&0) {
            return Err(Error::InvalidArgument("collocation counts must be positive".into()));
        }
        for i in 0..dim {
            if !(inner_lower[i] >= domain.lower[i] && inner_upper[i] <= domain.upper[i] && inner_upper[i] > inner_lower[i]) {
                return Err(Error::InvalidGrid(format!("interior axis {i} is not inside the domain")));
            }
        }
        let n_in = 1 + dim;
        if initial.len() % n_in != 0 || initial_targets.iter().any(|t| t.len() * n_in != initial.len()) {
            return Err(Error::DimensionMismatch {
                expected: initial.len() / n_in,
                got: initial_targets.first().map_or(0, |t| t.len()),
                context: "initial points vs targets",
            });
        }
        if initial.chunks_exact(n_in).any(|p| p[0] != 0.0) {
            return Err(Error::InvalidArgument("initial points must sit at t = 0".into()));
        }
        let ts = midpoints(0.0, domain.t_final, counts.n_t);
        let axes: Vec<Vec<f64>> = (0..dim)
            .map(|i| midpoints(inner_lower[i], inner_upper[i], counts.n_x[i]))
            .collect();
        let mut interior = Vec::new();
        let (mut left, mut right, mut axis) = (Vec::new(), Vec::new(), Vec::new());
        for &t in &ts {
            match dim {
                1 => {
                    for &x in &axes[0] {
                        interior.extend_from_slice(&[t, x]);
                    }
                    left.extend_from_slice(&[t, domain.lower[0]]);
                    right.extend_from_slice(&[t, domain.upper[0]]);
                    axis.push(0);
                }
                _ => {
                    for &x1 in &axes[0] {
                        for &x2 in &axes[1] {
                            interior.extend_from_slice(&[t, x1, x2]);
                        }
                    }
                    for &x2 in &axes[1] {
                        left.extend_from_slice(&[t, domain.lower[0], x2]);
                        right.extend_from_slice(&[t, domain.upper[0], x2]);
                        axis.push(0);
                    }
                    for &x1 in &axes[0] {
                        left.extend_from_slice(&[t, x1, domain.lower[1]]);
                        right.extend_from_slice(&[t, x1, domain.upper[1]]);
                        axis.push(1);
                    }
                }
            }
        }
        Ok(Self {
            dim,
            interior,
            left,
            right,
            axis,
            initial,
            initial_targets,
        })
    }

    pub fn n_inputs(&self) -> usize {
        1 + self.dim
    }

    pub fn n_interior(&self) -> usize {
        self.interior.len() / self.n_inputs()
    }

    pub fn n_boundary_pairs(&self) -> usize {
        self.axis.len()
    }

    pub fn n_initial(&self) -> usize {
        self.initial.len() / self.n_inputs()
    }

    /// All points stacked: interior, left faces, right faces, initial.
    pub fn stacked(&self) -> Vec<f64> {
        let mut all = Vec::with_capacity(self.interior.len() + 2 * self.left.len() + self.initial.len());
        all.extend_from_slice(&self.interior);
        all.extend_from_slice(&self.left);
        all.extend_from_slice(&self.right);
        all.extend_from_slice(&self.initial);
        all
    }
}
