//! Kernel deposition of particle velocity moments onto cell centres.

use super::grid::{Grid1D, Grid2D};
use super::kernel::ShapeKernel;
use super::particles::ParticleEnsemble;
use super::stencil::{spatial_derivative, spatial_derivative_2d};
use crate::error::{Error, Result};

pub const MAX_MOMENT_ORDER: usize = 12;

/// Moments `m_l`, `l = 0..=max_order`, and their spatial derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentField1D {
    pub grid: Grid1D,
    pub time: f64,
    pub moments: Vec<Vec<f64>>,
    pub derivatives: Vec<Vec<f64>>,
}

impl MomentField1D {
    pub fn from_moments(grid: Grid1D, time: f64, moments: Vec<Vec<f64>>) -> Result<Self> {
        let derivatives = moments
            .iter()
            .map(|m| spatial_derivative(m, &grid))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid,
            time,
            moments,
            derivatives,
        })
    }

    pub fn max_order(&self) -> usize {
        self.moments.len() - 1
    }

    pub fn m(&self, l: usize) -> Result<&[f64]> {
        self.moments
            .get(l)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingMoment(format!("m{l}")))
    }

    pub fn dm(&self, l: usize) -> Result<&[f64]> {
        self.derivatives
            .get(l)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingMoment(format!("d/dx m{l}")))
    }
}

/// The 2D moment quantities kept on the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Moment2D {
    M0,
    M11,
    M12,
    M21,
    M22,
    M2,
    MCross,
}

impl Moment2D {
    pub const ALL: [Moment2D; 7] = [
        Moment2D::M0,
        Moment2D::M11,
        Moment2D::M12,
        Moment2D::M21,
        Moment2D::M22,
        Moment2D::M2,
        Moment2D::MCross,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Moment2D::M0 => "m0",
            Moment2D::M11 => "m11",
            Moment2D::M12 => "m12",
            Moment2D::M21 => "m21",
            Moment2D::M22 => "m22",
            Moment2D::M2 => "m2",
            Moment2D::MCross => "m_cross",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|q| q.name() == s)
            .ok_or_else(|| Error::UnknownQuantity(s.to_string()))
    }

    fn slot(self) -> usize {
        self as usize
    }
}

/// Values and both first partials of every [`Moment2D`] on an x1-major grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentField2D {
    pub grid: Grid2D,
    pub time: f64,
    values: [Vec<f64>; 7],
    d1: [Vec<f64>; 7],
    d2: [Vec<f64>; 7],
}

impl MomentField2D {
    /// Builds the field from `m0, m11, m12, m21, m22, m_cross`; `m2` is
    /// formed as `m21 + m22`.
    pub fn from_parts(
        grid: Grid2D,
        time: f64,
        m0: Vec<f64>,
        m11: Vec<f64>,
        m12: Vec<f64>,
        m21: Vec<f64>,
        m22: Vec<f64>,
        m_cross: Vec<f64>,
    ) -> Result<Self> {
        let m2: Vec<f64> = m21.iter().zip(&m22).map(|(a, b)| a + b).collect();
        let values = [m0, m11, m12, m21, m22, m2, m_cross];
        let mut d1: [Vec<f64>; 7] = Default::default();
        let mut d2: [Vec<f64>; 7] = Default::default();
        for (k, v) in values.iter().enumerate() {
            d1[k] = spatial_derivative_2d(v, &grid, 0)?;
            d2[k] = spatial_derivative_2d(v, &grid, 1)?;
        }
        Ok(Self {
            grid,
            time,
            values,
            d1,
            d2,
        })
    }

    pub fn value(&self, q: Moment2D) -> &[f64] {
        &self.values[q.slot()]
    }

    /// `d q / d x_{axis+1}`.
    pub fn partial(&self, q: Moment2D, axis: usize) -> &[f64] {
        if axis == 0 {
            &self.d1[q.slot()]
        } else {
            &self.d2[q.slot()]
        }
    }
}

fn check_kernel(kernel: &ShapeKernel, dx: f64) -> Result<()> {
    if kernel.radius() < dx {
        return Err(Error::InvalidKernel(format!(
            "kernel support radius {} is smaller than the cell size {dx}",
            kernel.radius()
        )));
    }
    Ok(())
}

/// Cell range touched by a kernel centred at `x` and the kernel values there.
fn stencil_weights(kernel: &ShapeKernel, grid: &Grid1D, x: f64, buf: &mut Vec<(usize, f64)>) {
    buf.clear();
    let r = kernel.radius();
    let dx = grid.dx();
    let lo = ((x - r - grid.x_min()) / dx - 0.5).ceil().max(0.0);
    let hi = ((x + r - grid.x_min()) / dx - 0.5).floor();
    if hi < 0.0 || lo > (grid.n_cells() - 1) as f64 {
        return;
    }
    let hi = hi.min((grid.n_cells() - 1) as f64) as usize;
    for j in lo as usize..=hi {
        let w = kernel.eval(grid.center(j) - x);
        if w != 0.0 {
            buf.push((j, w));
        }
    }
}

/// `m_l(x_j) = sum_k w_k phi(x_j - X_k) E[(V_k + alpha Z)^l]`, i.e. the
/// velocity moments of the particle distribution regularized by the kernel in
/// both x and v.
pub fn deposit_moments(
    ens: &ParticleEnsemble,
    kernel: &ShapeKernel,
    grid: &Grid1D,
    max_order: usize,
) -> Result<MomentField1D> {
    if max_order > MAX_MOMENT_ORDER {
        return Err(Error::MomentOrderTooLarge(max_order));
    }
    if ens.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: ens.dim(),
            context: "1D deposition",
        });
    }
    check_kernel(kernel, grid.dx())?;
    let n = grid.n_cells();
    let mut moments = vec![vec![0.0; n]; max_order + 1];
    let mut powers = [0.0f64; MAX_MOMENT_ORDER + 1];
    let mut buf = Vec::new();
    for k in 0..ens.len() {
        let w = ens.weights[k];
        if w == 0.0 {
            continue;
        }
        kernel.smeared_powers(ens.velocities[k], max_order, &mut powers);
        stencil_weights(kernel, grid, ens.positions[k], &mut buf);
        for &(j, phi) in &buf {
            let wp = w * phi;
            for (l, m) in moments.iter_mut().enumerate() {
                m[j] += wp * powers[l];
            }
        }
    }
    MomentField1D::from_moments(*grid, ens.time, moments)
}

/// 2D deposition with a tensor-product kernel in x and independent velocity
/// smearing per axis.
pub fn deposit_moments_2d(
    ens: &ParticleEnsemble,
    kernel: &ShapeKernel,
    grid: &Grid2D,
) -> Result<MomentField2D> {
    if ens.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: ens.dim(),
            context: "2D deposition",
        });
    }
    check_kernel(kernel, grid.x1.dx().max(grid.x2.dx()))?;
    let len = grid.len();
    let mut m0 = vec![0.0; len];
    let mut m11 = vec![0.0; len];
    let mut m12 = vec![0.0; len];
    let mut m21 = vec![0.0; len];
    let mut m22 = vec![0.0; len];
    let mut mc = vec![0.0; len];
    let s2 = kernel.scaled_moment(2);
    let (mut b1, mut b2) = (Vec::new(), Vec::new());
    for k in 0..ens.len() {
        let w = ens.weights[k];
        if w == 0.0 {
            continue;
        }
        let (x1, x2) = (ens.positions[2 * k], ens.positions[2 * k + 1]);
        let (v1, v2) = (ens.velocities[2 * k], ens.velocities[2 * k + 1]);
        stencil_weights(kernel, &grid.x1, x1, &mut b1);
        stencil_weights(kernel, &grid.x2, x2, &mut b2);
        let (q21, q22, qc) = (v1 * v1 + s2, v2 * v2 + s2, v1 * v2);
        for &(i1, p1) in &b1 {
            for &(i2, p2) in &b2 {
                let idx = grid.index(i1, i2);
                let wp = w * p1 * p2;
                m0[idx] += wp;
                m11[idx] += wp * v1;
                m12[idx] += wp * v2;
                m21[idx] += wp * q21;
                m22[idx] += wp * q22;
                mc[idx] += wp * qc;
            }
        }
    }
    MomentField2D::from_parts(*grid, ens.time, m0, m11, m12, m21, m22, mc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinetic::initial::{colliding_beams, colliding_beams_2d};
    use crate::kinetic::particles::{sample_single_phase, sample_single_phase_2d};

    fn gauss(alpha: f64) -> ShapeKernel {
        ShapeKernel::gaussian(alpha, 6.0).unwrap()
    }

    #[test]
    fn empty_ensemble_gives_zero_moments() {
        let g = Grid1D::new(0.0, 1.0, 20).unwrap();
        let f = deposit_moments(&ParticleEnsemble::empty(1), &gauss(0.1), &g, 3).unwrap();
        assert!(f.moments.iter().flatten().all(|m| *m == 0.0));
        let g2 = Grid2D::square(0.0, 1.0, 6).unwrap();
        let f2 = deposit_moments_2d(&ParticleEnsemble::empty(2), &gauss(0.2), &g2).unwrap();
        for q in Moment2D::ALL {
            assert!(f2.value(q).iter().all(|m| *m == 0.0));
        }
    }

    #[test]
    fn single_particle_momentum_is_recovered() {
        let g = Grid1D::new(-1.0, 1.0, 200).unwrap();
        let ens = ParticleEnsemble::new(1, vec![0.0], vec![2.0], vec![1.0], 0.0).unwrap();
        let f = deposit_moments(&ens, &gauss(2.0 * g.dx()), &g, 2).unwrap();
        let p: f64 = f.moments[1].iter().sum::<f64>() * g.dx();
        assert!((p - 2.0).abs() < 1e-6, "{p}");
    }

    #[test]
    fn order_guard() {
        let g = Grid1D::new(0.0, 1.0, 20).unwrap();
        assert!(matches!(
            deposit_moments(&ParticleEnsemble::empty(1), &gauss(0.1), &g, 13),
            Err(Error::MomentOrderTooLarge(13))
        ));
    }

    #[test]
    fn narrow_kernel_is_rejected() {
        let g = Grid1D::new(0.0, 1.0, 10).unwrap();
        let k = ShapeKernel::gaussian(0.01, 1.0).unwrap();
        assert!(deposit_moments(&ParticleEnsemble::empty(1), &k, &g, 1).is_err());
    }

    #[test]
    fn colliding_beams_initial_moments() {
        let g = Grid1D::new(-0.5, 0.5, 300).unwrap();
        let ens = sample_single_phase(&colliding_beams(), &g.padded(0.3), 32, 5).unwrap();
        let k = gauss(2.0 * g.dx());
        let f = deposit_moments(&ens, &k, &g, 2).unwrap();
        for (j, x) in g.centers().iter().enumerate() {
            if x.abs() >= 3.0 * k.alpha() {
                assert!((f.moments[0][j] - 1.0).abs() < 5e-3, "m0 at {x}");
                assert!((f.moments[1][j] + x.signum()).abs() < 5e-3, "m1 at {x}");
            }
        }
    }

    #[test]
    fn colliding_beams_2d_initial_moments() {
        let g = Grid2D::square(-0.5, 0.5, 40).unwrap();
        let ens = sample_single_phase_2d(&colliding_beams_2d(), &g.padded(0.2), 64, 5).unwrap();
        let k = gauss(g.x1.dx());
        let f = deposit_moments_2d(&ens, &k, &g).unwrap();
        let s2 = k.scaled_moment(2);
        let (n1, n2) = g.shape();
        for i1 in 0..n1 {
            for i2 in 0..n2 {
                let (x1, x2) = (g.x1.center(i1), g.x2.center(i2));
                if x1.abs() < 3.0 * k.alpha() || x2.abs() < 3.0 * k.alpha() {
                    continue;
                }
                let idx = g.index(i1, i2);
                let m0 = f.value(Moment2D::M0)[idx];
                assert!((m0 - 1.0).abs() < 5e-3, "m0 = {m0}");
                assert!((f.value(Moment2D::M21)[idx] - (1.0 + s2)).abs() < 5e-3);
                assert!((f.value(Moment2D::M22)[idx] - (1.0 + s2)).abs() < 5e-3);
            }
        }
        for (idx, m2) in f.value(Moment2D::M2).iter().enumerate() {
            assert_eq!(*m2, f.value(Moment2D::M21)[idx] + f.value(Moment2D::M22)[idx]);
        }
    }
}
