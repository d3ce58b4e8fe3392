use serde::{Deserialize, Serialize};

use super::scheme::ClosureScheme;
use crate::error::{Error, Result};
use crate::kinetic::{Moment2D, MomentField1D, MomentField2D};

/// Feature and target scaling. Network inputs are shifted and scaled to zero
/// mean and unit variance; combination features and targets are only scaled
/// (by their root mean square) so the linear schemes stay exactly linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub net_shift: Vec<f64>,
    pub net_scale: Vec<f64>,
    pub combo_scale: Vec<f64>,
    pub target_scale: Vec<f64>,
}

fn column_stats(data: &[f64], width: usize, center: bool) -> (Vec<f64>, Vec<f64>) {
    let n = if width == 0 { 0 } else { data.len() / width };
    let mut shift = vec![0.0; width];
    let mut scale = vec![1.0; width];
    if n == 0 {
        return (shift, scale);
    }
    for c in 0..width {
        let mean = if center {
            data.iter().skip(c).step_by(width).sum::<f64>() / n as f64
        } else {
            0.0
        };
        let var = data
            .iter()
            .skip(c)
            .step_by(width)
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / n as f64;
        shift[c] = mean;
        let sd = var.sqrt();
        // constant columns are left unscaled
        scale[c] = if sd > 1e-300 && sd.is_finite() { sd } else { 1.0 };
    }
    (shift, scale)
}

impl Normalization {
    pub fn fit(scheme: &ClosureScheme, net: &[f64], combo: &[f64], targets: &[f64]) -> Self {
        let (net_shift, net_scale) = column_stats(net, scheme.n_net_inputs(), true);
        let (_, combo_scale) = column_stats(combo, scheme.n_combo(), false);
        let (_, target_scale) = column_stats(targets, scheme.n_targets(), false);
        Self {
            net_shift,
            net_scale,
            combo_scale,
            target_scale,
        }
    }

    pub fn normalize_net(&self, raw: &[f64]) -> Vec<f64> {
        let w = self.net_shift.len();
        raw.chunks_exact(w)
            .flat_map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(c, v)| (v - self.net_shift[c]) / self.net_scale[c])
            })
            .collect()
    }

    pub fn normalize_combo(&self, raw: &[f64]) -> Vec<f64> {
        let w = self.combo_scale.len();
        if w == 0 {
            return Vec::new();
        }
        raw.chunks_exact(w)
            .flat_map(|row| row.iter().enumerate().map(|(c, v)| v / self.combo_scale[c]))
            .collect()
    }
}

/// Training rows: one per (snapshot, grid cell).
#[derive(Debug, Clone, PartialEq)]
pub struct Stage1Dataset {
    pub scheme: ClosureScheme,
    pub times: Vec<f64>,
    /// `n_rows x dim` cell-centre coordinates.
    pub coords: Vec<f64>,
    /// Raw network inputs, `n_rows x n_net_inputs`.
    pub net_features: Vec<f64>,
    /// Raw combination features, `n_rows x n_combo`.
    pub combo_features: Vec<f64>,
    /// `n_rows x n_targets`.
    pub targets: Vec<f64>,
    pub norm: Normalization,
}

impl Stage1Dataset {
    /// Build from full feature rows (see [`ClosureScheme::split_features`]).
    pub fn from_rows(
        scheme: ClosureScheme,
        times: Vec<f64>,
        coords: Vec<f64>,
        full_features: &[f64],
        targets: Vec<f64>,
    ) -> Result<Self> {
        let n = times.len();
        let n_full = if scheme.dim == 1 { 4 } else { 9 };
        if full_features.len() != n * n_full {
            return Err(Error::SchemeArity {
                scheme: scheme.name(),
                expected: n_full,
                got: if n == 0 { full_features.len() } else { full_features.len() / n },
            });
        }
        if coords.len() != n * scheme.dim || targets.len() != n * scheme.n_targets() {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: coords.len() / scheme.dim,
                context: "dataset rows",
            });
        }
        let mut net = Vec::with_capacity(n * scheme.n_net_inputs());
        let mut combo = Vec::with_capacity(n * scheme.n_combo());
        for row in full_features.chunks_exact(n_full) {
            scheme.split_features(row, &mut net, &mut combo)?;
        }
        let all_finite = times
            .iter()
            .chain(&coords)
            .chain(&net)
            .chain(&combo)
            .chain(&targets)
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::InvalidArgument("dataset contains non-finite entries".into()));
        }
        let norm = Normalization::fit(&scheme, &net, &combo, &targets);
        Ok(Self {
            scheme,
            times,
            coords,
            net_features: net,
            combo_features: combo,
            targets,
            norm,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn target(&self, row: usize, k: usize) -> f64 {
        self.targets[row * self.scheme.n_targets() + k]
    }
}

/// Rows from 1D snapshots; targets are the stencil derivative `d/dx m2` of
/// the reference data.
pub fn assemble_dataset(fields: &[MomentField1D], scheme: ClosureScheme) -> Result<Stage1Dataset> {
    if scheme.dim != 1 {
        return Err(Error::InvalidArgument(format!(
            "{} needs 2D fields",
            scheme.name()
        )));
    }
    let mut times = Vec::new();
    let mut coords = Vec::new();
    let mut full = Vec::new();
    let mut targets = Vec::new();
    for f in fields {
        let dm2 = f.dm(2)?;
        for j in 0..f.grid.n_cells() {
            times.push(f.time);
            coords.push(f.grid.center(j));
            full.extend_from_slice(&ClosureScheme::full_features_1d(f, j)?);
            targets.push(dm2[j]);
        }
    }
    Stage1Dataset::from_rows(scheme, times, coords, &full, targets)
}

/// Rows from 2D snapshots; targets are `d/dx1 m21` and `d/dx2 m22`.
pub fn assemble_dataset_2d(fields: &[MomentField2D], scheme: ClosureScheme) -> Result<Stage1Dataset> {
    if scheme.dim != 2 {
        return Err(Error::InvalidArgument(format!(
            "{} needs 1D fields",
            scheme.name()
        )));
    }
    let mut times = Vec::new();
    let mut coords = Vec::new();
    let mut full = Vec::new();
    let mut targets = Vec::new();
    for f in fields {
        let (n1, n2) = f.grid.shape();
        let t1 = f.partial(Moment2D::M21, 0);
        let t2 = f.partial(Moment2D::M22, 1);
        for i1 in 0..n1 {
            for i2 in 0..n2 {
                let idx = f.grid.index(i1, i2);
                times.push(f.time);
                coords.push(f.grid.x1.center(i1));
                coords.push(f.grid.x2.center(i2));
                full.extend_from_slice(&ClosureScheme::full_features_2d(f, idx));
                targets.push(t1[idx]);
                targets.push(t2[idx]);
            }
        }
    }
    Stage1Dataset::from_rows(scheme, times, coords, &full, targets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinetic::Grid1D;

    fn field(t: f64) -> MomentField1D {
        let g = Grid1D::new(0.0, 1.0, 300).unwrap();
        let xs = g.centers();
        let m: Vec<Vec<f64>> = (0..3)
            .map(|l| xs.iter().map(|x| (x + t).powi(l + 1)).collect())
            .collect();
        MomentField1D::from_moments(g, t, m).unwrap()
    }

    #[test]
    fn one_row_per_cell() {
        let s = ClosureScheme::new(1, 1).unwrap();
        let d = assemble_dataset(&[field(0.1)], s).unwrap();
        assert_eq!(d.len(), 300);
        assert_eq!(d.net_features.len(), 1200);
        let s2 = ClosureScheme::new(2, 1).unwrap();
        let d2 = assemble_dataset(&[field(0.0), field(0.1)], s2).unwrap();
        assert_eq!(d2.len(), 600);
        assert_eq!(d2.net_features.len() / d2.len(), 2);
    }

    #[test]
    fn missing_order_is_reported() {
        let g = Grid1D::new(0.0, 1.0, 10).unwrap();
        let f = MomentField1D::from_moments(g, 0.0, vec![vec![1.0; 10], vec![0.0; 10]]).unwrap();
        assert!(matches!(
            assemble_dataset(&[f], ClosureScheme::new(1, 1).unwrap()),
            Err(Error::MissingMoment(_))
        ));
    }

    #[test]
    fn normalization_statistics() {
        let s = ClosureScheme::new(3, 1).unwrap();
        let d = assemble_dataset(&[field(0.0)], s).unwrap();
        let z = d.norm.normalize_net(&d.net_features);
        for c in 0..2 {
            let col: Vec<f64> = z.iter().skip(c).step_by(2).copied().collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|v| v * v).sum::<f64>() / col.len() as f64;
            assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-10);
        }
        let c = d.norm.normalize_combo(&d.combo_features);
        let rms = (c.iter().step_by(2).map(|v| v * v).sum::<f64>() / 300.0).sqrt();
        assert!((rms - 1.0).abs() < 1e-12);
    }

    #[test]
    fn non_finite_rows_are_rejected() {
        let s = ClosureScheme::new(2, 1).unwrap();
        let r = Stage1Dataset::from_rows(s, vec![0.0], vec![0.0], &[1.0, 1.0, f64::NAN, 1.0], vec![0.0]);
        assert!(r.is_err());
    }
}
