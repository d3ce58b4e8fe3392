//! Delimited text tables for plotting.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::kinetic::{Moment2D, MomentField1D, MomentField2D};
use crate::stage2::{LossBreakdown, Stage2Nets};

/// Named quantities on the points of one snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotField {
    pub time: f64,
    pub dim: usize,
    /// Point coordinates, `n x dim`.
    pub coords: Vec<f64>,
    pub quantities: Vec<(String, Vec<f64>)>,
}

impl PlotField {
    /// `m0..mL` and `dx_m0..dx_mL`.
    pub fn from_1d(f: &MomentField1D) -> Self {
        let mut q = Vec::new();
        for (l, m) in f.moments.iter().enumerate() {
            q.push((format!("m{l}"), m.clone()));
        }
        for (l, d) in f.derivatives.iter().enumerate() {
            q.push((format!("dx_m{l}"), d.clone()));
        }
        Self {
            time: f.time,
            dim: 1,
            coords: f.grid.centers(),
            quantities: q,
        }
    }

    /// Every moment and its two partials, `dx1_m21` style.
    pub fn from_2d(f: &MomentField2D) -> Self {
        let (n1, n2) = f.grid.shape();
        let mut coords = Vec::with_capacity(2 * n1 * n2);
        for i1 in 0..n1 {
            for i2 in 0..n2 {
                coords.extend_from_slice(&[f.grid.x1.center(i1), f.grid.x2.center(i2)]);
            }
        }
        let mut q = Vec::new();
        for m in Moment2D::ALL {
            q.push((m.name().to_string(), f.value(m).to_vec()));
        }
        for m in Moment2D::ALL {
            for a in 0..2 {
                q.push((format!("dx{}_{}", a + 1, m.name()), f.partial(m, a).to_vec()));
            }
        }
        Self {
            time: f.time,
            dim: 2,
            coords,
            quantities: q,
        }
    }

    /// Network predictions at this field's points and time, named `nn_<moment>`.
    pub fn add_predictions(&mut self, nets: &Stage2Nets, names: &[&str]) -> Result<()> {
        let n = self.len();
        let mut pts = Vec::with_capacity(n * (self.dim + 1));
        for p in self.coords.chunks_exact(self.dim) {
            pts.push(self.time);
            pts.extend_from_slice(p);
        }
        let pred = nets.predict(&pts)?;
        let nm = names.len();
        for (k, name) in names.iter().enumerate() {
            self.quantities
                .push((format!("nn_{name}"), pred.iter().skip(k).step_by(nm).copied().collect()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn quantity(&self, name: &str) -> Result<&[f64]> {
        self.quantities
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| Error::UnknownQuantity(name.into()))
    }
}

fn header(test: &str, quantity: &str, time: Option<f64>) -> String {
    let mut h = format!("# test = {test}\n# quantity = {quantity}\n");
    if let Some(t) = time {
        let _ = writeln!(h, "# time = {t}");
    }
    h
}

fn file_stem(quantity: &str, time: f64) -> String {
    format!("{quantity}_t{time:.4}")
}

/// One file per (field, quantity): `x, q` columns in 1D, long-format
/// `x1, x2, q` in 2D, preceded by `#` lines naming test, quantity and time.
/// All quantity names are checked before anything is written.
pub fn emit_plot_data(dir: &Path, test: &str, fields: &[PlotField], quantities: &[String], delimiter: char) -> Result<Vec<PathBuf>> {
    for f in fields {
        for q in quantities {
            f.quantity(q)?;
        }
    }
    if fields.is_empty() || quantities.is_empty() {
        return Ok(Vec::new());
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let d = delimiter;
    for f in fields {
        for q in quantities {
            let vals = f.quantity(q)?;
            let mut s = header(test, q, Some(f.time));
            if f.dim == 1 {
                let _ = writeln!(s, "x{d}{q}");
            } else {
                let _ = writeln!(s, "x1{d}x2{d}{q}");
            }
            for (p, v) in f.coords.chunks_exact(f.dim).zip(vals) {
                for c in p {
                    let _ = write!(s, "{c:?}{d}");
                }
                let _ = writeln!(s, "{v:?}");
            }
            let path = dir.join(format!("{}.csv", file_stem(q, f.time)));
            fs::write(&path, s).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Loss history, one column per component and moment.
pub fn emit_loss_history(dir: &Path, test: &str, history: &[LossBreakdown], delimiter: char) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let nm = history.first().map_or(0, |h| h.ge.len());
    let d = delimiter;
    let mut s = header(test, "loss_history", None);
    s.push_str("epoch");
    for part in ["ge", "bc", "ic"] {
        for k in 0..nm {
            let _ = write!(s, "{d}{part}{}", k + 1);
        }
    }
    let _ = writeln!(s, "{d}total");
    for (e, h) in history.iter().enumerate() {
        let _ = write!(s, "{e}");
        for v in h.ge.iter().chain(&h.bc).chain(&h.ic) {
            let _ = write!(s, "{d}{v:?}");
        }
        let _ = writeln!(s, "{d}{:?}", h.total);
    }
    let path = dir.join("loss_history.csv");
    fs::write(&path, s).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
