//! Reference moment snapshots from the kinetic solvers.

use std::path::{Path, PathBuf};

use super::config::{ExperimentConfig, InitialKind, KernelChoice, ReferenceMethod};
use crate::error::{Error, Result};
use crate::kinetic::fv::SpatialBoundary;
use crate::kinetic::initial::{colliding_beams, colliding_beams_2d, smooth_bump};
use crate::kinetic::particles::advance;
use crate::kinetic::{
    deposit_moments, deposit_moments_2d, sample_single_phase, sample_single_phase_2d, Grid1D, Grid2D,
    MomentField1D, MomentField2D, PhaseSpaceDensity, PhaseSpaceGrid2D, Potential, ShapeKernel,
};
use crate::persist::{load_field_1d, load_field_2d, read_bundle, read_manifest, write_bundle, Bundle};
use crate::persist::{bundle_paths, save_field_1d, save_field_2d};

pub const REFERENCE_DIR: &str = "reference";
const INDEX: &str = "index";
const KIND_INDEX: &str = "reference_index";

/// Moment snapshots at increasing times on one grid.
#[derive(Debug, Clone, PartialEq)]
pub enum Snapshots {
    OneD(Vec<MomentField1D>),
    TwoD(Vec<MomentField2D>),
}

impl Snapshots {
    pub fn len(&self) -> usize {
        match self {
            Snapshots::OneD(f) => f.len(),
            Snapshots::TwoD(f) => f.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        match self {
            Snapshots::OneD(_) => 1,
            Snapshots::TwoD(_) => 2,
        }
    }

    pub fn times(&self) -> Vec<f64> {
        match self {
            Snapshots::OneD(f) => f.iter().map(|s| s.time).collect(),
            Snapshots::TwoD(f) => f.iter().map(|s| s.time).collect(),
        }
    }

    /// Index of the snapshot at time `t`.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        self.times()
            .iter()
            .position(|s| (s - t).abs() < 1e-9)
            .ok_or_else(|| Error::InvalidArgument(format!("no snapshot at t = {t}")))
    }

    /// Every `stride`-th snapshot, starting with the first.
    pub fn strided(&self, stride: usize) -> Snapshots {
        let s = stride.max(1);
        match self {
            Snapshots::OneD(f) => Snapshots::OneD(f.iter().step_by(s).cloned().collect()),
            Snapshots::TwoD(f) => Snapshots::TwoD(f.iter().step_by(s).cloned().collect()),
        }
    }
}

fn kernel(cfg: &ExperimentConfig, dx: f64) -> Result<ShapeKernel> {
    let alpha = cfg.reference.alpha_cells * dx;
    match cfg.reference.kernel {
        KernelChoice::Gaussian => ShapeKernel::gaussian(alpha, cfg.reference.truncation),
        KernelChoice::BSpline => ShapeKernel::b_spline(alpha, cfg.reference.bspline_degree),
    }
}

/// Run the configured kinetic solver and return the stored snapshots.
pub fn compute_reference(cfg: &ExperimentConfig) -> Result<Snapshots> {
    let d = &cfg.domain;
    let r = &cfg.reference;
    let pot = Potential::harmonic(r.potential);
    let steps = cfg.snapshot_steps();
    let dt = cfg.time.dt;
    if d.dim == 1 {
        let grid = Grid1D::new(d.x_min, d.x_max, d.n_cells)?;
        let sample = if r.pad > 0.0 { grid.padded(r.pad) } else { grid };
        let init = match r.initial {
            InitialKind::SmoothBump => smooth_bump(),
            InitialKind::CollidingBeams => colliding_beams(),
        };
        let ppc = r.particles.div_ceil(sample.n_cells());
        let mut ens = sample_single_phase(&init, &sample, ppc, cfg.experiment.seed)?;
        let k = kernel(cfg, grid.dx())?;
        let mut out = Vec::with_capacity(steps.len());
        let mut done = 0;
        for &s in &steps {
            advance(&mut ens, &pot, dt, s - done, cfg.integrator())?;
            done = s;
            ens.time = s as f64 * dt;
            out.push(deposit_moments(&ens, &k, &grid, 2)?);
        }
        return Ok(Snapshots::OneD(out));
    }
    let grid = Grid2D::square(d.x_min, d.x_max, d.n_cells)?;
    let init = colliding_beams_2d();
    let mut out = Vec::with_capacity(steps.len());
    match r.method {
        ReferenceMethod::Pic => {
            let sample = if r.pad > 0.0 { grid.padded(r.pad) } else { grid };
            let per_cell = r.particles.div_ceil(sample.len());
            let side = (per_cell as f64).sqrt().ceil() as usize;
            let mut ens = sample_single_phase_2d(&init, &sample, side * side, cfg.experiment.seed)?;
            let k = kernel(cfg, grid.x1.dx())?;
            let mut done = 0;
            for &s in &steps {
                advance(&mut ens, &pot, dt, s - done, cfg.integrator())?;
                done = s;
                ens.time = s as f64 * dt;
                out.push(deposit_moments_2d(&ens, &k, &grid)?);
            }
        }
        ReferenceMethod::FiniteVolume => {
            let ps = PhaseSpaceGrid2D::symmetric(grid, r.fv_v_max, r.fv_dv)?;
            let mut w = PhaseSpaceDensity::from_initial(&init, ps, SpatialBoundary::Neumann)?;
            for &s in &steps {
                let t = s as f64 * dt;
                if t > w.time {
                    w = w.advance_to(&pot, t, dt)?;
                }
                w.time = t;
                out.push(w.moments()?);
            }
        }
    }
    Ok(Snapshots::TwoD(out))
}

fn snapshot_name(k: usize) -> String {
    format!("snap_{k:04}")
}

pub fn reference_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.experiment.outdir.join(REFERENCE_DIR)
}

/// Persist snapshots as `snap_NNNN` bundles plus an index listing the times.
pub fn save_snapshots(dir: &Path, snaps: &Snapshots, hash: &str) -> Result<()> {
    match snaps {
        Snapshots::OneD(f) => {
            for (k, s) in f.iter().enumerate() {
                save_field_1d(dir, &snapshot_name(k), s, hash)?;
            }
        }
        Snapshots::TwoD(f) => {
            for (k, s) in f.iter().enumerate() {
                save_field_2d(dir, &snapshot_name(k), s, hash)?;
            }
        }
    }
    let mut b = Bundle::new(KIND_INDEX, hash);
    b.set_meta("dim", snaps.dim() as i64)?;
    b.push_vec("times", snaps.times())?;
    write_bundle(dir, INDEX, &b).map(|_| ())
}

pub fn load_snapshots(dir: &Path) -> Result<Snapshots> {
    let b = read_bundle(dir, INDEX, Some(KIND_INDEX))?;
    let n = b.array("times")?.len();
    let dim: i64 = b.meta("dim")?;
    Ok(if dim == 1 {
        Snapshots::OneD((0..n).map(|k| load_field_1d(dir, &snapshot_name(k))).collect::<Result<_>>()?)
    } else {
        Snapshots::TwoD((0..n).map(|k| load_field_2d(dir, &snapshot_name(k))).collect::<Result<_>>()?)
    })
}

/// Config hash recorded in the artifact index under `dir`, if present.
pub fn stored_hash(dir: &Path, name: &str) -> Option<String> {
    let (man, _) = bundle_paths(dir, name);
    read_manifest(&man).ok().map(|m| m.config_hash)
}

/// Compute and persist the reference snapshots under `<outdir>/reference`.
pub fn run_reference(cfg: &ExperimentConfig) -> Result<Snapshots> {
    let snaps = compute_reference(cfg)?;
    save_snapshots(&reference_dir(cfg), &snaps, &cfg.stage_hash("reference"))?;
    Ok(snaps)
}

/// Persisted snapshots when their hash matches the config, otherwise a fresh
/// run. The flag reports a cache hit.
pub fn load_or_run_reference(cfg: &ExperimentConfig) -> Result<(Snapshots, bool)> {
    let dir = reference_dir(cfg);
    if stored_hash(&dir, INDEX).as_deref() == Some(cfg.stage_hash("reference").as_str()) {
        if let Ok(s) = load_snapshots(&dir) {
            return Ok((s, true));
        }
    }
    run_reference(cfg).map(|s| (s, false))
}
