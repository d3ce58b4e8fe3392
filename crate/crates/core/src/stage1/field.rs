//! Closing fields frozen on (snapshot time, grid cell) nodes, with
//! multilinear interpolation in between.

use super::closure::TrainedClosure;
use super::scheme::ClosureScheme;
use crate::error::{Error, Result};
use crate::kinetic::{Grid1D, Grid2D, Moment2D, MomentField1D, MomentField2D};

const HULL_SLACK: f64 = 1e-12;

/// Bracketing index and weight of `q` in the increasing node list `nodes`.
fn bracket(nodes: &[f64], q: f64) -> Option<(usize, f64)> {
    let (first, last) = (nodes[0], *nodes.last().unwrap());
    let slack = HULL_SLACK * (1.0 + first.abs().max(last.abs()));
    if !(q >= first - slack && q <= last + slack) {
        return None;
    }
    if nodes.len() == 1 {
        return Some((0, 0.0));
    }
    let q = q.clamp(first, last);
    let i = nodes.partition_point(|n| *n <= q).clamp(1, nodes.len() - 1) - 1;
    let w = (q - nodes[i]) / (nodes[i + 1] - nodes[i]);
    Some((i, w))
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() || times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument(
            "snapshot times must be nonempty and strictly increasing".into(),
        ));
    }
    Ok(())
}

/// `d/dx m2` on `times x cells`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosureField1D {
    pub grid: Grid1D,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    centers: Vec<f64>,
}

impl ClosureField1D {
    pub fn new(grid: Grid1D, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        check_times(&times)?;
        if values.len() != times.len() * grid.n_cells() {
            return Err(Error::DimensionMismatch {
                expected: times.len() * grid.n_cells(),
                got: values.len(),
                context: "closure field values vs times x cells",
            });
        }
        Ok(Self {
            grid,
            centers: grid.centers(),
            times,
            values,
        })
    }

    /// Closure network applied to the reference features of every snapshot.
    pub fn from_closure(closure: &TrainedClosure, fields: &[MomentField1D]) -> Result<Self> {
        let first = fields.first().ok_or_else(|| Error::InvalidArgument("no snapshots".into()))?;
        let mut values = Vec::with_capacity(fields.len() * first.grid.n_cells());
        for f in fields {
            if f.grid != first.grid {
                return Err(Error::InvalidGrid("snapshots live on different grids".into()));
            }
            let (mut net, mut combo) = (Vec::new(), Vec::new());
            for j in 0..f.grid.n_cells() {
                closure
                    .scheme
                    .split_features(&ClosureScheme::full_features_1d(f, j)?, &mut net, &mut combo)?;
            }
            values.extend(closure.predict(&net, &combo)?);
        }
        Self::new(first.grid, fields.iter().map(|f| f.time).collect(), values)
    }

    /// The reference data's own `d/dx m2`.
    pub fn from_data(fields: &[MomentField1D]) -> Result<Self> {
        let first = fields.first().ok_or_else(|| Error::InvalidArgument("no snapshots".into()))?;
        let mut values = Vec::new();
        for f in fields {
            values.extend_from_slice(f.dm(2)?);
        }
        Self::new(first.grid, fields.iter().map(|f| f.time).collect(), values)
    }

    /// Values at snapshot `k`.
    pub fn snapshot(&self, k: usize) -> &[f64] {
        let n = self.grid.n_cells();
        &self.values[k * n..(k + 1) * n]
    }

    pub fn at(&self, t: f64, x: f64) -> Result<f64> {
        let hull = || Error::OutsideDataHull { t, x: vec![x] };
        let (k, wt) = bracket(&self.times, t).ok_or_else(hull)?;
        let (j, wx) = bracket(&self.centers, x).ok_or_else(hull)?;
        let n = self.grid.n_cells();
        let k1 = (k + 1).min(self.times.len() - 1);
        let v = |kk: usize, jj: usize| self.values[kk * n + jj];
        let lerp = |kk: usize| v(kk, j) * (1.0 - wx) + if wx > 0.0 { v(kk, j + 1) * wx } else { 0.0 };
        let a = lerp(k);
        Ok(if wt > 0.0 { a * (1.0 - wt) + lerp(k1) * wt } else { a })
    }
}

/// `d/dx1 m21` and `d/dx2 m22` on `times x cells`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosureField2D {
    pub grid: Grid2D,
    pub times: Vec<f64>,
    /// `times x cells x 2`.
    pub values: Vec<f64>,
    c1: Vec<f64>,
    c2: Vec<f64>,
}

impl ClosureField2D {
    pub fn new(grid: Grid2D, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        check_times(&times)?;
        if values.len() != times.len() * grid.len() * 2 {
            return Err(Error::DimensionMismatch {
                expected: times.len() * grid.len() * 2,
                got: values.len(),
                context: "2D closure field values vs times x cells x 2",
            });
        }
        Ok(Self {
            grid,
            c1: grid.x1.centers(),
            c2: grid.x2.centers(),
            times,
            values,
        })
    }

    pub fn from_closure(closure: &TrainedClosure, fields: &[MomentField2D]) -> Result<Self> {
        let first = fields.first().ok_or_else(|| Error::InvalidArgument("no snapshots".into()))?;
        let mut values = Vec::new();
        for f in fields {
            if f.grid != first.grid {
                return Err(Error::InvalidGrid("snapshots live on different grids".into()));
            }
            let (mut net, mut combo) = (Vec::new(), Vec::new());
            for idx in 0..f.grid.len() {
                closure
                    .scheme
                    .split_features(&ClosureScheme::full_features_2d(f, idx), &mut net, &mut combo)?;
            }
            values.extend(closure.predict(&net, &combo)?);
        }
        Self::new(first.grid, fields.iter().map(|f| f.time).collect(), values)
    }

    pub fn from_data(fields: &[MomentField2D]) -> Result<Self> {
        let first = fields.first().ok_or_else(|| Error::InvalidArgument("no snapshots".into()))?;
        let mut values = Vec::new();
        for f in fields {
            for (a, b) in f.partial(Moment2D::M21, 0).iter().zip(f.partial(Moment2D::M22, 1)) {
                values.push(*a);
                values.push(*b);
            }
        }
        Self::new(first.grid, fields.iter().map(|f| f.time).collect(), values)
    }

    /// Component `q` (0 or 1) at snapshot `k`.
    pub fn snapshot(&self, k: usize, q: usize) -> Vec<f64> {
        let n = self.grid.len();
        self.values[k * n * 2..(k + 1) * n * 2].iter().skip(q).step_by(2).copied().collect()
    }

    pub fn at(&self, t: f64, x1: f64, x2: f64) -> Result<[f64; 2]> {
        let hull = || Error::OutsideDataHull { t, x: vec![x1, x2] };
        let (k, wt) = bracket(&self.times, t).ok_or_else(hull)?;
        let (i, w1) = bracket(&self.c1, x1).ok_or_else(hull)?;
        let (j, w2) = bracket(&self.c2, x2).ok_or_else(hull)?;
        let n = self.grid.len();
        let (n1, n2) = self.grid.shape();
        let mut out = [0.0; 2];
        for (dk, ww) in [(0usize, 1.0 - wt), (1, wt)] {
            if ww == 0.0 {
                continue;
            }
            let kk = (k + dk).min(self.times.len() - 1);
            for (di, wi) in [(0usize, 1.0 - w1), (1, w1)] {
                if wi == 0.0 {
                    continue;
                }
                let ii = (i + di).min(n1 - 1);
                for (dj, wj) in [(0usize, 1.0 - w2), (1, w2)] {
                    if wj == 0.0 {
                        continue;
                    }
                    let jj = (j + dj).min(n2 - 1);
                    let base = (kk * n + ii * n2 + jj) * 2;
                    let w = ww * wi * wj;
                    out[0] += w * self.values[base];
                    out[1] += w * self.values[base + 1];
                }
            }
        }
        Ok(out)
    }
}

/// Closure values at arbitrary `(t, x)` queries.
pub fn evaluate_closure(
    closure: &TrainedClosure,
    fields: &[MomentField1D],
    queries: &[(f64, f64)],
) -> Result<Vec<f64>> {
    let field = ClosureField1D::from_closure(closure, fields)?;
    queries.iter().map(|&(t, x)| field.at(t, x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_on_nodes_and_linear_between() {
        let g = Grid1D::new(0.0, 1.0, 4).unwrap();
        let times = vec![0.0, 0.1, 0.3];
        let f = |t: f64, x: f64| 2.0 * t - 3.0 * x + 1.0;
        let c = g.centers();
        let values: Vec<f64> = times.iter().flat_map(|&t| c.iter().map(move |&x| f(t, x))).collect();
        let field = ClosureField1D::new(g, times.clone(), values).unwrap();
        for &t in &times {
            for &x in &c {
                assert_eq!(field.at(t, x).unwrap(), f(t, x));
            }
        }
        assert!((field.at(0.2, 0.5).unwrap() - f(0.2, 0.5)).abs() < 1e-14);
        assert!(matches!(field.at(0.31, 0.5), Err(Error::OutsideDataHull { .. })));
        assert!(field.at(0.1, 0.01).is_err());
    }

    #[test]
    fn two_dimensional_trilinear() {
        let g = Grid2D::square(-0.5, 0.5, 5).unwrap();
        let times = vec![0.0, 0.05, 0.1];
        let f = |t: f64, a: f64, b: f64| [t + a - 2.0 * b, 3.0 * a * 0.0 + b - t];
        let mut values = Vec::new();
        for &t in &times {
            for i in 0..5 {
                for j in 0..5 {
                    let v = f(t, g.x1.center(i), g.x2.center(j));
                    values.extend_from_slice(&v);
                }
            }
        }
        let field = ClosureField2D::new(g, times, values).unwrap();
        let q = field.at(0.07, 0.13, -0.21).unwrap();
        let e = f(0.07, 0.13, -0.21);
        assert!((q[0] - e[0]).abs() < 1e-14 && (q[1] - e[1]).abs() < 1e-14);
        assert!(field.at(0.07, 0.45, 0.0).is_err());
        assert_eq!(field.snapshot(2, 1).len(), 25);
    }

    #[test]
    fn times_must_increase() {
        let g = Grid1D::new(0.0, 1.0, 4).unwrap();
        assert!(ClosureField1D::new(g, vec![0.1, 0.1], vec![0.0; 8]).is_err());
    }
}
