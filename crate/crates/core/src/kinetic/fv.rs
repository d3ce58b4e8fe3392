//! First-order upwind finite-volume solver for the 2D Vlasov equation on a
//! phase-space grid.

use serde::{Deserialize, Serialize};

use super::deposit::MomentField2D;
use super::grid::PhaseSpaceGrid2D;
use super::initial::InitialData2D;
use super::potential::Potential;
use crate::error::{Error, Result};

/// Treatment of the spatial boundary faces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpatialBoundary {
    /// Zero-gradient ghost cells: outgoing mass leaves, incoming mass is
    /// copied from the boundary cell.
    #[default]
    Neumann,
    /// No flux through the spatial boundary; total mass is conserved exactly.
    ZeroFlux,
}

/// Cell averages of `w(x1, x2, v1, v2)` in [`PhaseSpaceGrid2D::index`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSpaceDensity {
    pub grid: PhaseSpaceGrid2D,
    pub values: Vec<f64>,
    pub time: f64,
    pub boundary: SpatialBoundary,
}

impl PhaseSpaceDensity {
    pub fn new(
        grid: PhaseSpaceGrid2D,
        values: Vec<f64>,
        boundary: SpatialBoundary,
    ) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: values.len(),
                context: "phase-space values vs grid",
            });
        }
        Ok(Self {
            grid,
            values,
            time: 0.0,
            boundary,
        })
    }

    /// Monokinetic data: the mass `rho0(x)` of each spatial cell sits in the
    /// velocity cell containing `u0(x)`.
    pub fn from_initial(
        init: &InitialData2D,
        grid: PhaseSpaceGrid2D,
        boundary: SpatialBoundary,
    ) -> Result<Self> {
        let mut values = vec![0.0; grid.len()];
        let (n1, n2) = grid.space.shape();
        let dv = grid.v1.dx() * grid.v2.dx();
        for i1 in 0..n1 {
            for i2 in 0..n2 {
                let (x1, x2) = (grid.space.x1.center(i1), grid.space.x2.center(i2));
                let rho = init.density(x1, x2);
                if !(rho >= 0.0) {
                    return Err(Error::NegativeDensity {
                        x: vec![x1, x2],
                        value: rho,
                    });
                }
                let u = init.velocity(x1, x2);
                let k1 = velocity_cell(&grid.v1, u[0])?;
                let k2 = velocity_cell(&grid.v2, u[1])?;
                values[grid.index(i1, i2, k1, k2)] = rho / dv;
            }
        }
        Self::new(grid, values, boundary)
    }

    pub fn total_mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    /// Largest summed Courant number over all four directions.
    pub fn courant_number(&self, pot: &Potential, dt: f64) -> f64 {
        let g = &self.grid;
        let vmax = |ax: &super::grid::Grid1D| {
            ax.center(0).abs().max(ax.center(ax.n_cells() - 1).abs())
        };
        let (n1, n2) = g.space.shape();
        let mut amax = [0.0f64; 2];
        let mut grad = [0.0; 2];
        for i1 in 0..n1 {
            for i2 in 0..n2 {
                pot.gradient(&[g.space.x1.center(i1), g.space.x2.center(i2)], &mut grad);
                amax[0] = amax[0].max(grad[0].abs());
                amax[1] = amax[1].max(grad[1].abs());
            }
        }
        dt * (vmax(&g.v1) / g.space.x1.dx()
            + vmax(&g.v2) / g.space.x2.dx()
            + amax[0] / g.v1.dx()
            + amax[1] / g.v2.dx())
    }

    /// Grid moments `m0, m11, m12, m21, m22, m_cross` by midpoint quadrature
    /// in velocity.
    pub fn moments(&self) -> Result<MomentField2D> {
        let g = &self.grid;
        let len = g.space.len();
        let (nv1, nv2) = (g.v1.n_cells(), g.v2.n_cells());
        let dv = g.v1.dx() * g.v2.dx();
        let mut m = [(); 6].map(|_| vec![0.0; len]);
        for (s, block) in self.values.chunks_exact(nv1 * nv2).enumerate() {
            for k1 in 0..nv1 {
                let v1 = g.v1.center(k1);
                for k2 in 0..nv2 {
                    let v2 = g.v2.center(k2);
                    let w = block[k1 * nv2 + k2] * dv;
                    m[0][s] += w;
                    m[1][s] += w * v1;
                    m[2][s] += w * v2;
                    m[3][s] += w * v1 * v1;
                    m[4][s] += w * v2 * v2;
                    m[5][s] += w * v1 * v2;
                }
            }
        }
        let [m0, m11, m12, m21, m22, mc] = m;
        MomentField2D::from_parts(g.space, self.time, m0, m11, m12, m21, m22, mc)
    }

    /// Advance to `t_final` with steps no longer than `dt`.
    pub fn advance_to(&self, pot: &Potential, t_final: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || t_final < self.time {
            return Err(Error::InvalidArgument(format!(
                "cannot advance from t = {} to {t_final} with dt = {dt}",
                self.time
            )));
        }
        let span = t_final - self.time;
        let n = (span / dt - 1e-9).ceil().max(0.0) as usize;
        let mut state = self.clone();
        if n == 0 {
            return Ok(state);
        }
        let h = span / n as f64;
        for _ in 0..n {
            state = finite_volume_step_2d(&state, pot, h)?;
        }
        state.time = t_final;
        Ok(state)
    }
}

fn velocity_cell(axis: &super::grid::Grid1D, v: f64) -> Result<usize> {
    let j = (axis.fractional_index(v) + 0.5).floor();
    if j < 0.0 || j >= axis.n_cells() as f64 {
        return Err(Error::InvalidGrid(format!(
            "initial velocity {v} outside the velocity box [{}, {}]",
            axis.x_min(),
            axis.x_max()
        )));
    }
    Ok(j as usize)
}

/// One unsplit conservative upwind step of
/// `w_t + v . grad_x w - grad Phi . grad_v w = 0`.
pub fn finite_volume_step_2d(
    state: &PhaseSpaceDensity,
    pot: &Potential,
    dt: f64,
) -> Result<PhaseSpaceDensity> {
    if !(dt >= 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be >= 0, got {dt}")));
    }
    let ratio = state.courant_number(pot, dt);
    if ratio > 1.0 {
        return Err(Error::CflViolation {
            ratio,
            detail: format!("dt = {dt}, summed over x1, x2, v1, v2"),
        });
    }
    let g = &state.grid;
    let (n1, n2) = g.space.shape();
    let (nv1, nv2) = (g.v1.n_cells(), g.v2.n_cells());
    let nv = nv1 * nv2;
    let w = &state.values;
    let mut out = w.clone();
    let l1 = dt / g.space.x1.dx();
    let l2 = dt / g.space.x2.dx();
    let mu1 = dt / g.v1.dx();
    let mu2 = dt / g.v2.dx();
    let v1c: Vec<f64> = g.v1.centers();
    let v2c: Vec<f64> = g.v2.centers();
    let open = state.boundary == SpatialBoundary::Neumann;

    let upwind = |a: f64, left: f64, right: f64| if a > 0.0 { a * left } else { a * right };

    // x1 faces
    for i2 in 0..n2 {
        for k1 in 0..nv1 {
            let v = v1c[k1];
            for k2 in 0..nv2 {
                let at = |i1: usize| (i1 * n2 + i2) * nv + k1 * nv2 + k2;
                for i1 in 0..n1 - 1 {
                    let f = l1 * upwind(v, w[at(i1)], w[at(i1 + 1)]);
                    out[at(i1)] -= f;
                    out[at(i1 + 1)] += f;
                }
                if open {
                    out[at(0)] += l1 * v * w[at(0)];
                    out[at(n1 - 1)] -= l1 * v * w[at(n1 - 1)];
                }
            }
        }
    }
    // x2 faces
    for i1 in 0..n1 {
        for k in 0..nv {
            let v = v2c[k % nv2];
            let at = |i2: usize| (i1 * n2 + i2) * nv + k;
            for i2 in 0..n2 - 1 {
                let f = l2 * upwind(v, w[at(i2)], w[at(i2 + 1)]);
                out[at(i2)] -= f;
                out[at(i2 + 1)] += f;
            }
            if open {
                out[at(0)] += l2 * v * w[at(0)];
                out[at(n2 - 1)] -= l2 * v * w[at(n2 - 1)];
            }
        }
    }
    // velocity faces, zero flux at the velocity box edges
    let mut grad = [0.0; 2];
    for i1 in 0..n1 {
        for i2 in 0..n2 {
            pot.gradient(&[g.space.x1.center(i1), g.space.x2.center(i2)], &mut grad);
            let (a1, a2) = (-grad[0], -grad[1]);
            let base = (i1 * n2 + i2) * nv;
            if a1 != 0.0 {
                for k2 in 0..nv2 {
                    for k1 in 0..nv1 - 1 {
                        let (p, q) = (base + k1 * nv2 + k2, base + (k1 + 1) * nv2 + k2);
                        let f = mu1 * upwind(a1, w[p], w[q]);
                        out[p] -= f;
                        out[q] += f;
                    }
                }
            }
            if a2 != 0.0 {
                for k1 in 0..nv1 {
                    for k2 in 0..nv2 - 1 {
                        let (p, q) = (base + k1 * nv2 + k2, base + k1 * nv2 + k2 + 1);
                        let f = mu2 * upwind(a2, w[p], w[q]);
                        out[p] -= f;
                        out[q] += f;
                    }
                }
            }
        }
    }
    Ok(PhaseSpaceDensity {
        grid: state.grid,
        values: out,
        time: state.time + dt,
        boundary: state.boundary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinetic::grid::Grid2D;
    use crate::kinetic::initial::colliding_beams_2d;

    fn small_grid() -> PhaseSpaceGrid2D {
        PhaseSpaceGrid2D::symmetric(Grid2D::square(-0.5, 0.5, 10).unwrap(), 2.0, 0.5).unwrap()
    }

    #[test]
    fn uniform_state_is_steady_without_force() {
        let g = small_grid();
        let s = PhaseSpaceDensity::new(g, vec![0.7; g.len()], SpatialBoundary::Neumann).unwrap();
        let next = finite_volume_step_2d(&s, &Potential::zero(), 0.005).unwrap();
        assert_eq!(next.values, s.values);
    }

    #[test]
    fn zero_flux_conserves_mass() {
        let g = small_grid();
        let init = colliding_beams_2d();
        let mut s = PhaseSpaceDensity::from_initial(&init, g, SpatialBoundary::ZeroFlux).unwrap();
        let pot = Potential::harmonic(1.0);
        for _ in 0..10 {
            let m = s.total_mass();
            s = finite_volume_step_2d(&s, &pot, 0.005).unwrap();
            assert!((s.total_mass() - m).abs() <= 1e-12 * m);
        }
    }

    #[test]
    fn cfl_violation_reports_ratio() {
        let g = small_grid();
        let s = PhaseSpaceDensity::new(g, vec![0.0; g.len()], SpatialBoundary::Neumann).unwrap();
        match finite_volume_step_2d(&s, &Potential::harmonic(1.0), 0.5) {
            Err(Error::CflViolation { ratio, .. }) => assert!(ratio > 1.0),
            other => panic!("expected CFL error, got {other:?}"),
        }
    }

    #[test]
    fn initial_moments() {
        let g = small_grid();
        let s = PhaseSpaceDensity::from_initial(&colliding_beams_2d(), g, SpatialBoundary::Neumann)
            .unwrap();
        let m = s.moments().unwrap();
        use crate::kinetic::deposit::Moment2D;
        for v in m.value(Moment2D::M0) {
            assert!((v - 1.0).abs() < 1e-12);
        }
        for v in m.value(Moment2D::M21) {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }
}
