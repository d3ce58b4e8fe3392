//! Second-order finite differences on cell-centred data.

use super::grid::{Grid1D, Grid2D};
use crate::error::{Error, Result};

/// Central differences in the interior and second-order one-sided
/// differences at the two end cells.
pub fn spatial_derivative(values: &[f64], grid: &Grid1D) -> Result<Vec<f64>> {
    if values.len() != grid.n_cells() {
        return Err(Error::DimensionMismatch {
            expected: grid.n_cells(),
            got: values.len(),
            context: "field vs grid",
        });
    }
    let mut out = vec![0.0; values.len()];
    derivative_strided(values, 0, 1, values.len(), grid.dx(), &mut out)?;
    Ok(out)
}

/// Partial derivative along `axis` (0 or 1) of an x1-major 2D field.
pub fn spatial_derivative_2d(values: &[f64], grid: &Grid2D, axis: usize) -> Result<Vec<f64>> {
    if values.len() != grid.len() {
        return Err(Error::DimensionMismatch {
            expected: grid.len(),
            got: values.len(),
            context: "field vs 2D grid",
        });
    }
    let (n1, n2) = grid.shape();
    let mut out = vec![0.0; values.len()];
    match axis {
        0 => {
            for i2 in 0..n2 {
                derivative_strided(values, i2, n2, n1, grid.x1.dx(), &mut out)?;
            }
        }
        1 => {
            for i1 in 0..n1 {
                derivative_strided(values, i1 * n2, 1, n2, grid.x2.dx(), &mut out)?;
            }
        }
        _ => {
            return Err(Error::InvalidArgument(format!(
                "axis must be 0 or 1, got {axis}"
            )))
        }
    }
    Ok(out)
}

fn derivative_strided(
    f: &[f64],
    start: usize,
    stride: usize,
    n: usize,
    dx: f64,
    out: &mut [f64],
) -> Result<()> {
    if n < 3 {
        return Err(Error::InvalidGrid(format!(
            "derivative stencil needs at least 3 cells, got {n}"
        )));
    }
    let at = |j: usize| f[start + j * stride];
    let inv2 = 0.5 / dx;
    out[start] = (-3.0 * at(0) + 4.0 * at(1) - at(2)) * inv2;
    for j in 1..n - 1 {
        out[start + j * stride] = (at(j + 1) - at(j - 1)) * inv2;
    }
    out[start + (n - 1) * stride] = (3.0 * at(n - 1) - 4.0 * at(n - 2) + at(n - 3)) * inv2;
    Ok(())
}
