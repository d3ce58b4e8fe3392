//! Energy of the moment error and rank correlation.

use super::model::Stage2Nets;
use crate::error::{Error, Result};
use crate::kinetic::{Moment2D, MomentField1D, MomentField2D};

/// Reference moments of one snapshot at cell centres, in network order.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSnapshot {
    pub time: f64,
    pub dim: usize,
    /// `n x dim`.
    pub coords: Vec<f64>,
    /// `n x n_moments`.
    pub values: Vec<f64>,
    pub n_moments: usize,
    pub cell_measure: f64,
}

impl MomentSnapshot {
    /// `m0, m1` of a 1D field.
    pub fn from_1d(f: &MomentField1D) -> Result<Self> {
        let (m0, m1) = (f.m(0)?, f.m(1)?);
        Ok(Self {
            time: f.time,
            dim: 1,
            coords: f.grid.centers(),
            values: m0.iter().zip(m1).flat_map(|(a, b)| [*a, *b]).collect(),
            n_moments: 2,
            cell_measure: f.grid.dx(),
        })
    }

    /// `m0, m11, m12` of a 2D field.
    pub fn from_2d(f: &MomentField2D) -> Self {
        let (c1, c2) = (f.grid.x1.centers(), f.grid.x2.centers());
        let coords = c1.iter().flat_map(|a| c2.iter().flat_map(move |b| [*a, *b])).collect();
        let (m0, m11, m12) = (f.value(Moment2D::M0), f.value(Moment2D::M11), f.value(Moment2D::M12));
        let values = (0..f.grid.len()).flat_map(|i| [m0[i], m11[i], m12[i]]).collect();
        Self {
            time: f.time,
            dim: 2,
            coords,
            values,
            n_moments: 3,
            cell_measure: f.grid.cell_area(),
        }
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// `(t, x...)` rows at the cell centres.
    pub fn points(&self) -> Vec<f64> {
        self.coords
            .chunks_exact(self.dim)
            .flat_map(|c| std::iter::once(self.time).chain(c.iter().copied()))
            .collect()
    }

    /// Moment `k` over all cells.
    pub fn moment(&self, k: usize) -> Vec<f64> {
        self.values.iter().skip(k).step_by(self.n_moments).copied().collect()
    }
}

/// `E(t) = 1/2 sum_cells sum_k (m_k^NN - m_k)^2 * cell measure` per snapshot.
pub fn energy_diagnostic(nets: &Stage2Nets, refs: &[MomentSnapshot]) -> Result<Vec<f64>> {
    refs.iter()
        .map(|s| {
            if s.n_moments != nets.nets.len() || s.dim != nets.domain.dim() {
                return Err(Error::SpecMismatch("reference snapshot does not match the networks".into()));
            }
            let pred = nets.predict(&s.points())?;
            let sq: f64 = pred.iter().zip(&s.values).map(|(p, r)| (p - r) * (p - r)).sum();
            Ok(0.5 * sq * s.cell_measure)
        })
        .collect()
}

/// Ranks starting at 1, ties share their average rank.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|a, b| v[*a].total_cmp(&v[*b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation: Pearson correlation of the ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
            context: "rank correlation samples",
        });
    }
    if a.len() < 2 || a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::UndefinedMetric("rank correlation needs >= 2 finite pairs".into()));
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        return Err(Error::UndefinedMetric("rank correlation of a constant sample".into()));
    }
    Ok(cov / (va * vb).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinetic::Grid1D;
    use crate::nn::MlpSpec;
    use crate::stage2::SpaceTimeBox;

    fn flat_nets(c0: f64, c1: f64) -> Stage2Nets {
        let d = SpaceTimeBox::new(1.0, vec![0.0], vec![2.0]).unwrap();
        let spec = MlpSpec::uniform(2, 1, 3, 1, 0).unwrap();
        let mut n = Stage2Nets::init(d, &spec, 2).unwrap();
        for (net, c) in n.nets.iter_mut().zip([c0, c1]) {
            net.values.iter_mut().for_each(|v| *v = 0.0);
            let last = net.widths().len() - 2;
            net.bias_mut(last)[0] = c;
        }
        n
    }

    #[test]
    fn energy_of_constant_offset() {
        let g = Grid1D::new(0.0, 2.0, 50).unwrap();
        let f = MomentField1D::from_moments(g, 0.3, vec![vec![1.0; 50], vec![0.5; 50]]).unwrap();
        let s = MomentSnapshot::from_1d(&f).unwrap();
        let e = energy_diagnostic(&flat_nets(1.0, 0.5), std::slice::from_ref(&s)).unwrap();
        assert_eq!(e, vec![0.0]);
        let delta = 0.1;
        let e = energy_diagnostic(&flat_nets(1.0 + delta, 0.5), &[s]).unwrap();
        assert!((e[0] - 0.5 * 2.0 * delta * delta).abs() < 1e-14);
    }

    #[test]
    fn spearman_basics() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 35.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(ranks(&[5.0, 1.0, 5.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
        assert!(spearman(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }
}
