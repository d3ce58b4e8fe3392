//! Stage runners and the end-to-end pipeline.

use std::path::PathBuf;
use std::time::Instant;

use super::config::{ClosureSource, ExperimentConfig};
use super::metrics::{save_report, MetricReport, MetricRow};
use super::reference::{load_or_run_reference, stored_hash, Snapshots};
use crate::error::{Error, Result};
use crate::kinetic::{Potential, RegularizedTwoBranch};
use crate::nn::{AdamConfig, MlpSpec};
use crate::persist::{load_closure, load_stage2, save_closure, save_stage2};
use crate::stage1::{
    assemble_dataset, assemble_dataset_2d, ClosureField1D, ClosureField2D, ClosureScheme, Stage1Dataset,
    Stage1Optimizer, Stage1Trainer, TrainedClosure,
};
use crate::stage2::{
    BoundaryKind, BoundarySpec, CollocationCounts, LossWeights, MomentSnapshot, Stage2Optimizer, Stage2Problem,
    Stage2Solution, Stage2Trainer,
};

pub const STAGE1_DIR: &str = "stage1";
pub const STAGE2_DIR: &str = "stage2";
pub const METRICS_DIR: &str = "metrics";
pub const REPORT_NAME: &str = "report";
const SOLUTION_NAME: &str = "solution";

/// Offset between the experiment seed and the Stage-2 network seeds.
const STAGE2_SEED_OFFSET: u64 = 1000;

fn stage_dir(cfg: &ExperimentConfig, stage: &str) -> PathBuf {
    cfg.experiment.outdir.join(stage)
}

fn closure_name(id: u8) -> String {
    format!("closure_{id}")
}

/// Names of the closing quantities, in prediction order.
pub fn closure_quantities(dim: usize) -> &'static [&'static str] {
    if dim == 1 {
        &["dx_m2"]
    } else {
        &["dx1_m21", "dx2_m22"]
    }
}

/// Names of the Stage-2 moments, in network order.
pub fn stage2_quantities(dim: usize) -> &'static [&'static str] {
    if dim == 1 {
        &["m0", "m1"]
    } else {
        &["m0", "m11", "m12"]
    }
}

fn dataset(snaps: &Snapshots, scheme: ClosureScheme) -> Result<Stage1Dataset> {
    match snaps {
        Snapshots::OneD(f) => assemble_dataset(f, scheme),
        Snapshots::TwoD(f) => assemble_dataset_2d(f, scheme),
    }
}

fn single(snaps: &Snapshots, k: usize) -> Snapshots {
    match snaps {
        Snapshots::OneD(f) => Snapshots::OneD(vec![f[k].clone()]),
        Snapshots::TwoD(f) => Snapshots::TwoD(vec![f[k].clone()]),
    }
}

/// Train one closure scheme on the configured snapshot subset.
pub fn train_closure(cfg: &ExperimentConfig, snaps: &Snapshots, id: u8) -> Result<(TrainedClosure, Vec<crate::nn::AdamState>)> {
    let s1 = &cfg.stage1;
    let scheme = ClosureScheme::new(id, snaps.dim())?;
    let data = dataset(&snaps.strided(s1.stride), scheme)?;
    let spec = scheme.mlp_spec(s1.hidden_layers, s1.width, cfg.experiment.seed)?;
    let opt = Stage1Optimizer {
        adam: AdamConfig {
            decay: s1.lr_decay,
            ..AdamConfig::with_lr(s1.lr)
        },
        batch_size: (s1.batch_size > 0).then_some(s1.batch_size),
        shuffle_seed: cfg.experiment.seed,
    };
    let mut tr = Stage1Trainer::new(&data, &spec, opt)?;
    tr.run(s1.epochs)?;
    Ok(tr.into_parts())
}

/// Per-time relative l2 and MSE of a closure against the reference
/// derivatives at the configured evaluation times.
pub fn closure_metrics(cfg: &ExperimentConfig, snaps: &Snapshots, c: &TrainedClosure) -> Result<Vec<MetricRow>> {
    let names = closure_quantities(snaps.dim());
    let mut rows = Vec::new();
    for &t in &cfg.metrics.eval_times {
        let d = dataset(&single(snaps, snaps.index_of(t)?), c.scheme)?;
        let pred = c.predict_dataset(&d)?;
        let nt = names.len();
        for (k, q) in names.iter().enumerate() {
            let p: Vec<f64> = pred.iter().skip(k).step_by(nt).copied().collect();
            let r: Vec<f64> = d.targets.iter().skip(k).step_by(nt).copied().collect();
            rows.push(MetricRow::new("stage1", c.scheme.id, q, t, &p, &r)?);
        }
    }
    Ok(rows)
}

/// Every configured closure scheme, loaded from `<outdir>/stage1` when the
/// stored hash matches, trained and saved otherwise. The flag is true when
/// all schemes came from the cache.
pub fn run_stage1(cfg: &ExperimentConfig, snaps: &Snapshots) -> Result<(Vec<TrainedClosure>, bool)> {
    let dir = stage_dir(cfg, STAGE1_DIR);
    let hash = cfg.stage_hash("stage1");
    let mut all_cached = true;
    let mut out = Vec::new();
    for &id in &cfg.stage1.schemes {
        let name = closure_name(id);
        let scheme = ClosureScheme::new(id, snaps.dim())?;
        if stored_hash(&dir, &name).as_deref() == Some(hash.as_str()) {
            if let Ok((c, _)) = load_closure(&dir, &name, Some(scheme)) {
                out.push(c);
                continue;
            }
        }
        all_cached = false;
        let (c, adam) = train_closure(cfg, snaps, id)?;
        save_closure(&dir, &name, &c, Some(&adam), &hash)?;
        out.push(c);
    }
    Ok((out, all_cached))
}

fn exact_closure(cfg: &ExperimentConfig, snaps: &Snapshots) -> Result<ClosureField1D> {
    let Snapshots::OneD(f) = snaps else {
        return Err(Error::InvalidArgument("the exact closure is one-dimensional".into()));
    };
    let grid = f[0].grid;
    let model = RegularizedTwoBranch::new(cfg.reference.alpha_cells * grid.dx())?;
    let mut values = Vec::with_capacity(f.len() * grid.n_cells());
    for s in f {
        for x in grid.centers() {
            values.push(model.eval(s.time, x)?.dm2);
        }
    }
    ClosureField1D::new(grid, snaps.times(), values)
}

/// Stage-2 problem for the configured closure source.
pub fn stage2_problem(cfg: &ExperimentConfig, snaps: &Snapshots, closures: &[TrainedClosure]) -> Result<Stage2Problem> {
    let s2 = &cfg.stage2;
    let learned = || {
        closures
            .iter()
            .find(|c| c.scheme.id == s2.scheme)
            .ok_or_else(|| Error::InvalidArgument(format!("no trained closure for scheme {}", s2.scheme)))
    };
    let pot = Potential::harmonic(cfg.reference.potential);
    let nm = snaps.dim() + 1;
    let boundary = match cfg.boundary_kind() {
        BoundaryKind::Periodic => BoundarySpec::periodic(),
        BoundaryKind::Neumann => BoundarySpec::neumann(nm),
    };
    let weights = LossWeights::new(s2.lambdas.clone())?;
    match snaps {
        Snapshots::OneD(f) => {
            let closure = match s2.closure {
                ClosureSource::Learned => ClosureField1D::from_closure(learned()?, f)?,
                ClosureSource::Data => ClosureField1D::from_data(f)?,
                ClosureSource::Exact => exact_closure(cfg, snaps)?,
            };
            let counts = CollocationCounts { n_t: s2.n_t, n_x: [s2.n_x, 0] };
            Stage2Problem::new_1d(&closure, &f[0], pot, cfg.time.t_final, counts, boundary, weights)
        }
        Snapshots::TwoD(f) => {
            let closure = match s2.closure {
                ClosureSource::Learned => ClosureField2D::from_closure(learned()?, f)?,
                ClosureSource::Data => ClosureField2D::from_data(f)?,
                ClosureSource::Exact => {
                    return Err(Error::InvalidArgument("the exact closure is one-dimensional".into()))
                }
            };
            let counts = CollocationCounts { n_t: s2.n_t, n_x: [s2.n_x, s2.n_x] };
            Stage2Problem::new_2d(&closure, f, pot, cfg.time.t_final, counts, boundary, weights, cfg.force_form())
        }
    }
}

pub fn reference_snapshots(snaps: &Snapshots) -> Result<Vec<MomentSnapshot>> {
    match snaps {
        Snapshots::OneD(f) => f.iter().map(MomentSnapshot::from_1d).collect(),
        Snapshots::TwoD(f) => Ok(f.iter().map(MomentSnapshot::from_2d).collect()),
    }
}

pub fn stage2_spec(cfg: &ExperimentConfig, dim: usize) -> Result<MlpSpec> {
    let s2 = &cfg.stage2;
    MlpSpec::uniform(dim + 1, s2.hidden_layers, s2.width, 1, cfg.experiment.seed + STAGE2_SEED_OFFSET)
}

/// Stage 2 from `<outdir>/stage2` on a hash match, otherwise trained and saved.
pub fn run_stage2(cfg: &ExperimentConfig, snaps: &Snapshots, closures: &[TrainedClosure]) -> Result<(Stage2Solution, bool)> {
    let dir = stage_dir(cfg, STAGE2_DIR);
    let hash = cfg.stage_hash("stage2");
    let spec = stage2_spec(cfg, snaps.dim())?;
    if stored_hash(&dir, SOLUTION_NAME).as_deref() == Some(hash.as_str()) {
        if let Ok((s, _)) = load_stage2(&dir, SOLUTION_NAME, Some(&spec)) {
            return Ok((s, true));
        }
    }
    let problem = stage2_problem(cfg, snaps, closures)?;
    let refs = reference_snapshots(snaps)?;
    let opt = Stage2Optimizer {
        adam: AdamConfig {
            decay: cfg.stage2.lr_decay,
            ..AdamConfig::with_lr(cfg.stage2.lr)
        },
        checkpoint_every: cfg.stage2.checkpoint_every,
    };
    let mut tr = Stage2Trainer::new(&problem, &spec, opt, &refs)?;
    tr.run(cfg.stage2.epochs)?;
    let (solution, adam) = tr.into_parts();
    save_stage2(&dir, SOLUTION_NAME, &solution, Some(&adam), &hash)?;
    Ok((solution, false))
}

/// Load the persisted Stage-2 solution regardless of its hash.
pub fn load_stage2_solution(cfg: &ExperimentConfig) -> Result<Stage2Solution> {
    load_stage2(&stage_dir(cfg, STAGE2_DIR), SOLUTION_NAME, None).map(|(s, _)| s)
}

/// Per-time relative l2 and MSE of the Stage-2 networks per moment.
pub fn stage2_metrics(cfg: &ExperimentConfig, snaps: &Snapshots, sol: &Stage2Solution) -> Result<Vec<MetricRow>> {
    let refs = reference_snapshots(snaps)?;
    let names = stage2_quantities(snaps.dim());
    let scheme = if cfg.stage2.closure == ClosureSource::Learned { cfg.stage2.scheme } else { 0 };
    let mut rows = Vec::new();
    for &t in &cfg.metrics.eval_times {
        let r = &refs[snaps.index_of(t)?];
        let pred = sol.nets.predict(&r.points())?;
        let nm = names.len();
        for (k, q) in names.iter().enumerate() {
            let p: Vec<f64> = pred.iter().skip(k).step_by(nm).copied().collect();
            rows.push(MetricRow::new("stage2", scheme, q, t, &p, &r.moment(k))?);
        }
    }
    Ok(rows)
}

/// Everything a pipeline run produced.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub report: MetricReport,
    pub snapshots: Snapshots,
    pub closures: Vec<TrainedClosure>,
    pub stage2: Stage2Solution,
    /// Cache hits of the reference, Stage 1 and Stage 2.
    pub cached: [bool; 3],
}

/// Reference, Stage 1, Stage 2 and metrics, with every artifact persisted.
/// Errors carry the failing stage.
pub fn run_pipeline_full(cfg: &ExperimentConfig) -> Result<PipelineOutput> {
    let cfg = cfg.clone().validated().map_err(|e| e.in_stage("config"))?;
    let mut report = MetricReport::new(cfg.experiment.test.as_str(), &cfg.hash());
    let clock = Instant::now();
    let (snapshots, c0) = load_or_run_reference(&cfg).map_err(|e| e.in_stage("reference"))?;
    report.timings.push(("reference".into(), clock.elapsed().as_secs_f64()));

    let clock = Instant::now();
    let (closures, c1) = run_stage1(&cfg, &snapshots).map_err(|e| e.in_stage("stage1"))?;
    report.timings.push(("stage1".into(), clock.elapsed().as_secs_f64()));
    for c in &closures {
        report
            .rows
            .extend(closure_metrics(&cfg, &snapshots, c).map_err(|e| e.in_stage("metrics"))?);
    }

    let clock = Instant::now();
    let (stage2, c2) = run_stage2(&cfg, &snapshots, &closures).map_err(|e| e.in_stage("stage2"))?;
    report.timings.push(("stage2".into(), clock.elapsed().as_secs_f64()));
    report
        .rows
        .extend(stage2_metrics(&cfg, &snapshots, &stage2).map_err(|e| e.in_stage("metrics"))?);

    save_report(&stage_dir(&cfg, METRICS_DIR), REPORT_NAME, &report).map_err(|e| e.in_stage("metrics"))?;
    Ok(PipelineOutput {
        report,
        snapshots,
        closures,
        stage2,
        cached: [c0, c1, c2],
    })
}

pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<MetricReport> {
    run_pipeline_full(cfg).map(|o| o.report)
}
