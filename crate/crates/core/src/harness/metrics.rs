//! Error metrics and the per-run report.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::persist::{read_bundle, write_bundle, Bundle};

pub const KIND_REPORT: &str = "metric_report";
const KIND_TIMINGS: &str = "timings";

fn same_len(pred: &[f64], reference: &[f64]) -> Result<()> {
    if pred.len() != reference.len() {
        return Err(Error::DimensionMismatch {
            expected: reference.len(),
            got: pred.len(),
            context: "prediction vs reference",
        });
    }
    Ok(())
}

/// `sqrt(sum |p - r|^2 / sum |r|^2)`.
pub fn relative_l2(pred: &[f64], reference: &[f64]) -> Result<f64> {
    same_len(pred, reference)?;
    let den: f64 = reference.iter().map(|r| r * r).sum();
    if !(den > 0.0) {
        return Err(Error::UndefinedMetric("relative l2 against an all-zero reference".into()));
    }
    let num: f64 = pred.iter().zip(reference).map(|(p, r)| (p - r) * (p - r)).sum();
    Ok((num / den).sqrt())
}

/// `(1/N) sum |p - r|^2`.
pub fn mse(pred: &[f64], reference: &[f64]) -> Result<f64> {
    same_len(pred, reference)?;
    if reference.is_empty() {
        return Err(Error::UndefinedMetric("mean squared error of an empty field".into()));
    }
    let s: f64 = pred.iter().zip(reference).map(|(p, r)| (p - r) * (p - r)).sum();
    Ok(s / reference.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    /// `stage1` or `stage2`.
    pub stage: String,
    /// Closure scheme id; 0 when Stage 2 ran on data or the exact closure.
    pub scheme: u8,
    pub quantity: String,
    pub time: f64,
    pub rel_l2: f64,
    pub mse: f64,
}

impl MetricRow {
    pub fn new(stage: &str, scheme: u8, quantity: &str, time: f64, pred: &[f64], reference: &[f64]) -> Result<Self> {
        Ok(Self {
            stage: stage.into(),
            scheme,
            quantity: quantity.into(),
            time,
            rel_l2: relative_l2(pred, reference)?,
            mse: mse(pred, reference)?,
        })
    }
}

/// Metrics of one run. Equality ignores the wall-clock timings.
#[derive(Debug, Clone, Default)]
pub struct MetricReport {
    pub test: String,
    pub config_hash: String,
    pub rows: Vec<MetricRow>,
    /// `(stage, seconds)`.
    pub timings: Vec<(String, f64)>,
}

impl PartialEq for MetricReport {
    fn eq(&self, other: &Self) -> bool {
        self.test == other.test && self.config_hash == other.config_hash && self.rows == other.rows
    }
}

impl MetricReport {
    pub fn new(test: &str, config_hash: &str) -> Self {
        Self {
            test: test.into(),
            config_hash: config_hash.into(),
            ..Self::default()
        }
    }

    pub fn find(&self, stage: &str, scheme: u8, quantity: &str, time: f64) -> Option<&MetricRow> {
        self.rows.iter().find(|r| {
            r.stage == stage && r.scheme == scheme && r.quantity == quantity && (r.time - time).abs() < 1e-9
        })
    }

    pub fn timing(&self, stage: &str) -> Option<f64> {
        self.timings.iter().find(|(s, _)| s == stage).map(|(_, v)| *v)
    }

    /// Stage-1 schemes ordered by mean relative l2 over all their rows, best first.
    pub fn stage1_ranking(&self) -> Vec<(u8, f64)> {
        let mut ids: Vec<u8> = self.rows.iter().filter(|r| r.stage == "stage1").map(|r| r.scheme).collect();
        ids.sort_unstable();
        ids.dedup();
        let mut out: Vec<(u8, f64)> = ids
            .into_iter()
            .map(|id| {
                let e: Vec<f64> = self
                    .rows
                    .iter()
                    .filter(|r| r.stage == "stage1" && r.scheme == id)
                    .map(|r| r.rel_l2)
                    .collect();
                (id, e.iter().sum::<f64>() / e.len() as f64)
            })
            .collect();
        out.sort_by(|a, b| a.1.total_cmp(&b.1));
        out
    }

    /// Text tables: one row per (stage, scheme, quantity), one column per time,
    /// first relative l2 then MSE.
    pub fn to_tables(&self) -> String {
        let mut times: Vec<f64> = self.rows.iter().map(|r| r.time).collect();
        times.sort_by(f64::total_cmp);
        times.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        let mut keys: Vec<(String, u8, String)> = Vec::new();
        for r in &self.rows {
            let k = (r.stage.clone(), r.scheme, r.quantity.clone());
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
        let mut out = String::new();
        let _ = writeln!(out, "test {}  config {}", self.test, self.config_hash);
        for (title, pick) in [("relative l2", 0), ("mse", 1)] {
            let _ = write!(out, "\n{title:<28}");
            for t in &times {
                let _ = write!(out, "  t = {t:<7}");
            }
            out.push('\n');
            for (stage, scheme, q) in &keys {
                let label = if *scheme > 0 {
                    format!("{stage} scheme {scheme} {q}")
                } else {
                    format!("{stage} {q}")
                };
                let _ = write!(out, "{label:<28}");
                for &t in &times {
                    match self.find(stage, *scheme, q, t) {
                        Some(r) => {
                            let v = if pick == 0 { r.rel_l2 } else { r.mse };
                            let _ = write!(out, "  {v:<11.3e}");
                        }
                        None => {
                            let _ = write!(out, "  {:<11}", "-");
                        }
                    }
                }
                out.push('\n');
            }
        }
        let ranking = self.stage1_ranking();
        if ranking.len() > 1 {
            out.push_str("\nstage1 ranking (mean relative l2)\n");
            for (i, (id, e)) in ranking.iter().enumerate() {
                let _ = writeln!(out, "{:>2}. scheme {id}  {e:.3e}", i + 1);
            }
        }
        if !self.timings.is_empty() {
            out.push_str("\nwall clock\n");
            for (s, v) in &self.timings {
                let _ = writeln!(out, "{s:<12}{v:>10.2} s");
            }
        }
        out
    }
}

/// Write the report as `<name>` and its timings as `<name>_timings`, so that
/// the report files are identical across reruns.
pub fn save_report(dir: &Path, name: &str, r: &MetricReport) -> Result<()> {
    let mut b = Bundle::new(KIND_REPORT, &r.config_hash);
    b.set_meta("test", &r.test)?;
    b.set_meta("stage", r.rows.iter().map(|x| x.stage.clone()).collect::<Vec<_>>())?;
    b.set_meta("quantity", r.rows.iter().map(|x| x.quantity.clone()).collect::<Vec<_>>())?;
    b.push_vec("scheme", r.rows.iter().map(|x| x.scheme as f64).collect())?;
    b.push_vec("time", r.rows.iter().map(|x| x.time).collect())?;
    b.push_vec("rel_l2", r.rows.iter().map(|x| x.rel_l2).collect())?;
    b.push_vec("mse", r.rows.iter().map(|x| x.mse).collect())?;
    write_bundle(dir, name, &b)?;
    let mut t = Bundle::new(KIND_TIMINGS, &r.config_hash);
    t.set_meta("stage", r.timings.iter().map(|x| x.0.clone()).collect::<Vec<_>>())?;
    t.push_vec("seconds", r.timings.iter().map(|x| x.1).collect())?;
    write_bundle(dir, &format!("{name}_timings"), &t).map(|_| ())
}

pub fn load_report(dir: &Path, name: &str) -> Result<MetricReport> {
    let b = read_bundle(dir, name, Some(KIND_REPORT))?;
    let stage: Vec<String> = b.meta("stage")?;
    let quantity: Vec<String> = b.meta("quantity")?;
    let n = stage.len();
    let scheme = b.array_len("scheme", n)?;
    let time = b.array_len("time", n)?;
    let rel = b.array_len("rel_l2", n)?;
    let m = b.array_len("mse", n)?;
    if quantity.len() != n {
        return Err(Error::ShapeMismatch {
            entry: "quantity".into(),
            detail: format!("{} names for {n} rows", quantity.len()),
        });
    }
    let rows = (0..n)
        .map(|i| MetricRow {
            stage: stage[i].clone(),
            scheme: scheme[i] as u8,
            quantity: quantity[i].clone(),
            time: time[i],
            rel_l2: rel[i],
            mse: m[i],
        })
        .collect();
    let timings = match read_bundle(dir, &format!("{name}_timings"), Some(KIND_TIMINGS)) {
        Ok(t) => {
            let s: Vec<String> = t.meta("stage")?;
            let v = t.array_len("seconds", s.len())?;
            s.into_iter().zip(v.iter().copied()).collect()
        }
        Err(_) => Vec::new(),
    };
    Ok(MetricReport {
        test: b.meta("test")?,
        config_hash: b.config_hash,
        rows,
        timings,
    })
}
