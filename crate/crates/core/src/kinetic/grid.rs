//! Uniform cell-centred grids in physical and phase space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform 1D grid of `n_cells` cells on `[x_min, x_max]`; values live at cell centres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    x_min: f64,
    x_max: f64,
    n_cells: usize,
}

impl Grid1D {
    pub fn new(x_min: f64, x_max: f64, n_cells: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite()) || x_max <= x_min {
            return Err(Error::InvalidGrid(format!(
                "need finite bounds with x_max > x_min, got [{x_min}, {x_max}]"
            )));
        }
        if n_cells < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 cells, got {n_cells}"
            )));
        }
        Ok(Self {
            x_min,
            x_max,
            n_cells,
        })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn len(&self) -> usize {
        self.n_cells
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.n_cells as f64
    }

    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn center(&self, j: usize) -> f64 {
        self.x_min + (j as f64 + 0.5) * self.dx()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_cells).map(|j| self.center(j)).collect()
    }

    /// Same spacing, extended by (at least) `pad` on both sides.
    pub fn padded(&self, pad: f64) -> Self {
        let dx = self.dx();
        let extra = (pad / dx).ceil().max(0.0) as usize;
        Self {
            x_min: self.x_min - extra as f64 * dx,
            x_max: self.x_max + extra as f64 * dx,
            n_cells: self.n_cells + 2 * extra,
        }
    }

    /// Fractional cell-centre coordinate of `x`: 0.0 at the first centre.
    pub fn fractional_index(&self, x: f64) -> f64 {
        (x - self.x_min) / self.dx() - 0.5
    }
}

/// Tensor product of two [`Grid1D`]s. Fields are stored x1-major:
/// index `i1 * n2 + i2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub x1: Grid1D,
    pub x2: Grid1D,
}

impl Grid2D {
    pub fn new(x1: Grid1D, x2: Grid1D) -> Self {
        Self { x1, x2 }
    }

    pub fn square(min: f64, max: f64, n: usize) -> Result<Self> {
        let g = Grid1D::new(min, max, n)?;
        Ok(Self { x1: g, x2: g })
    }

    pub fn len(&self) -> usize {
        self.x1.n_cells() * self.x2.n_cells()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.x1.n_cells(), self.x2.n_cells())
    }

    pub fn index(&self, i1: usize, i2: usize) -> usize {
        i1 * self.x2.n_cells() + i2
    }

    pub fn cell_area(&self) -> f64 {
        self.x1.dx() * self.x2.dx()
    }

    pub fn axis(&self, axis: usize) -> &Grid1D {
        match axis {
            0 => &self.x1,
            1 => &self.x2,
            _ => panic!("Grid2D has axes 0 and 1, got {axis}"),
        }
    }

    pub fn padded(&self, pad: f64) -> Self {
        Self {
            x1: self.x1.padded(pad),
            x2: self.x2.padded(pad),
        }
    }
}

/// Spatial [`Grid2D`] times a cell-centred velocity grid in (v1, v2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpaceGrid2D {
    pub space: Grid2D,
    pub v1: Grid1D,
    pub v2: Grid1D,
}

impl PhaseSpaceGrid2D {
    pub fn new(space: Grid2D, v1: Grid1D, v2: Grid1D) -> Self {
        Self { space, v1, v2 }
    }

    /// Velocity box `[-v_max, v_max]` per axis with spacing close to `dv`; the
    /// cell count is made odd so that v = 0 is a cell centre.
    pub fn symmetric(space: Grid2D, v_max: f64, dv: f64) -> Result<Self> {
        if !(v_max > 0.0 && dv > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "velocity half-width and spacing must be positive, got {v_max}, {dv}"
            )));
        }
        let mut n = (2.0 * v_max / dv).round() as usize;
        if n % 2 == 0 {
            n += 1;
        }
        let half = 0.5 * n as f64 * dv;
        let v = Grid1D::new(-half, half, n)?;
        Ok(Self { space, v1: v, v2: v })
    }

    pub fn n_velocity(&self) -> usize {
        self.v1.n_cells() * self.v2.n_cells()
    }

    pub fn len(&self) -> usize {
        self.space.len() * self.n_velocity()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Flat index of phase-space cell (i1, i2, k1, k2); velocity is fastest.
    pub fn index(&self, i1: usize, i2: usize, k1: usize, k2: usize) -> usize {
        (self.space.index(i1, i2) * self.v1.n_cells() + k1) * self.v2.n_cells() + k2
    }

    pub fn cell_volume(&self) -> f64 {
        self.space.cell_area() * self.v1.dx() * self.v2.dx()
    }
}
