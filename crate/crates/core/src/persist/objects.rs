//! Typed save/load on top of bundles.

use std::path::Path;

use super::bundle::{read_bundle, write_bundle, Bundle};
use crate::error::{Error, Result};
use crate::kinetic::{Grid1D, Grid2D, Moment2D, MomentField1D, MomentField2D};
use crate::nn::{AdamConfig, AdamState, MlpParameters, MlpSpec};
use crate::stage1::{ClosureScheme, Normalization, Stage1Dataset, TrainedClosure};
use crate::stage2::{CheckpointSummary, LossBreakdown, SpaceTimeBox, Stage2Nets, Stage2Solution};

pub const KIND_FIELD_1D: &str = "moment_field_1d";
pub const KIND_FIELD_2D: &str = "moment_field_2d";
pub const KIND_CHECKPOINT: &str = "checkpoint";
pub const KIND_CLOSURE: &str = "stage1_closure";
pub const KIND_DATASET: &str = "stage1_dataset";
pub const KIND_STAGE2: &str = "stage2_solution";

fn put_grid(b: &mut Bundle, prefix: &str, g: &Grid1D) -> Result<()> {
    b.set_meta(&format!("{prefix}x_min"), g.x_min())?;
    b.set_meta(&format!("{prefix}x_max"), g.x_max())?;
    b.set_meta(&format!("{prefix}n_cells"), g.n_cells() as i64)
}

fn get_grid(b: &Bundle, prefix: &str) -> Result<Grid1D> {
    let n: i64 = b.meta(&format!("{prefix}n_cells"))?;
    Grid1D::new(
        b.meta(&format!("{prefix}x_min"))?,
        b.meta(&format!("{prefix}x_max"))?,
        usize::try_from(n).map_err(|_| Error::InvalidGrid(format!("cell count {n}")))?,
    )
}

pub fn save_field_1d(dir: &Path, name: &str, f: &MomentField1D, config_hash: &str) -> Result<()> {
    let mut b = Bundle::new(KIND_FIELD_1D, config_hash);
    put_grid(&mut b, "", &f.grid)?;
    b.set_meta("time", f.time)?;
    b.set_meta("max_order", f.max_order() as i64)?;
    for l in 0..=f.max_order() {
        b.push_vec(format!("m{l}"), f.m(l)?.to_vec())?;
    }
    write_bundle(dir, name, &b).map(|_| ())
}

pub fn load_field_1d(dir: &Path, name: &str) -> Result<MomentField1D> {
    let b = read_bundle(dir, name, Some(KIND_FIELD_1D))?;
    let grid = get_grid(&b, "")?;
    let order: i64 = b.meta("max_order")?;
    let moments = (0..=order)
        .map(|l| b.array_len(&format!("m{l}"), grid.n_cells()).map(<[f64]>::to_vec))
        .collect::<Result<Vec<_>>>()?;
    MomentField1D::from_moments(grid, b.meta("time")?, moments)
}

const FIELD_2D_PARTS: [Moment2D; 6] = [
    Moment2D::M0,
    Moment2D::M11,
    Moment2D::M12,
    Moment2D::M21,
    Moment2D::M22,
    Moment2D::MCross,
];

pub fn save_field_2d(dir: &Path, name: &str, f: &MomentField2D, config_hash: &str) -> Result<()> {
    let mut b = Bundle::new(KIND_FIELD_2D, config_hash);
    put_grid(&mut b, "x1_", &f.grid.x1)?;
    put_grid(&mut b, "x2_", &f.grid.x2)?;
    b.set_meta("time", f.time)?;
    let (n1, n2) = f.grid.shape();
    for q in FIELD_2D_PARTS {
        b.push(q.name(), vec![n1, n2], f.value(q).to_vec())?;
    }
    write_bundle(dir, name, &b).map(|_| ())
}

pub fn load_field_2d(dir: &Path, name: &str) -> Result<MomentField2D> {
    let b = read_bundle(dir, name, Some(KIND_FIELD_2D))?;
    let grid = Grid2D::new(get_grid(&b, "x1_")?, get_grid(&b, "x2_")?);
    let n = grid.len();
    let get = |q: Moment2D| b.array_len(q.name(), n).map(<[f64]>::to_vec);
    MomentField2D::from_parts(
        grid,
        b.meta("time")?,
        get(Moment2D::M0)?,
        get(Moment2D::M11)?,
        get(Moment2D::M12)?,
        get(Moment2D::M21)?,
        get(Moment2D::M22)?,
        get(Moment2D::MCross)?,
    )
}

/// Networks sharing one spec, with optional optimizer state and step count.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointRecord {
    pub role: String,
    pub spec: MlpSpec,
    pub nets: Vec<MlpParameters>,
    pub adam: Option<Vec<AdamState>>,
    pub step: usize,
}

fn put_record(b: &mut Bundle, r: &CheckpointRecord) -> Result<()> {
    b.set_meta("role", &r.role)?;
    b.set_meta("widths", r.spec.widths.iter().map(|w| *w as i64).collect::<Vec<_>>())?;
    b.set_meta("seed", r.spec.seed.to_string())?;
    b.set_meta("n_nets", r.nets.len() as i64)?;
    b.set_meta("step", r.step as i64)?;
    for (k, net) in r.nets.iter().enumerate() {
        for l in 0..r.spec.n_layers() {
            let (fo, fi) = (r.spec.widths[l + 1], r.spec.widths[l]);
            b.push(format!("net{k}.layer{l}.w"), vec![fo, fi], net.weights(l).to_vec())?;
            b.push(format!("net{k}.layer{l}.b"), vec![fo], net.bias(l).to_vec())?;
        }
    }
    if let Some(adam) = &r.adam {
        let c = adam.first().map(|a| a.config).unwrap_or_default();
        b.set_meta("adam", c)?;
        for (k, a) in adam.iter().enumerate() {
            b.set_meta(&format!("adam{k}_step"), a.step.to_string())?;
            b.push_vec(format!("adam{k}.m"), a.m.clone())?;
            b.push_vec(format!("adam{k}.v"), a.v.clone())?;
        }
    }
    Ok(())
}

fn get_record(b: &Bundle) -> Result<CheckpointRecord> {
    let widths: Vec<i64> = b.meta("widths")?;
    let seed: String = b.meta("seed")?;
    let spec = MlpSpec::new(
        widths.iter().map(|w| *w as usize).collect(),
        seed.parse().map_err(|_| Error::ShapeMismatch {
            entry: "seed".into(),
            detail: format!("not an integer: {seed}"),
        })?,
    )?;
    let n_nets: i64 = b.meta("n_nets")?;
    let mut nets = Vec::new();
    for k in 0..n_nets as usize {
        let mut values = Vec::with_capacity(spec.n_params());
        for l in 0..spec.n_layers() {
            let (fo, fi) = (spec.widths[l + 1], spec.widths[l]);
            values.extend_from_slice(b.array_len(&format!("net{k}.layer{l}.w"), fo * fi)?);
            values.extend_from_slice(b.array_len(&format!("net{k}.layer{l}.b"), fo)?);
        }
        nets.push(MlpParameters::from_values(&spec, values)?);
    }
    let adam = if b.meta.contains_key("adam") {
        let config: AdamConfig = b.meta("adam")?;
        let mut states = Vec::new();
        for (k, net) in nets.iter().enumerate() {
            let step: String = b.meta(&format!("adam{k}_step"))?;
            states.push(AdamState {
                config,
                m: b.array_len(&format!("adam{k}.m"), net.len())?.to_vec(),
                v: b.array_len(&format!("adam{k}.v"), net.len())?.to_vec(),
                step: step.parse().map_err(|_| Error::ShapeMismatch {
                    entry: format!("adam{k}_step"),
                    detail: step.clone(),
                })?,
            });
        }
        Some(states)
    } else {
        None
    };
    let step: i64 = b.meta("step")?;
    Ok(CheckpointRecord {
        role: b.meta("role")?,
        spec,
        nets,
        adam,
        step: step as usize,
    })
}

fn check_expected(r: &CheckpointRecord, role: Option<&str>, spec: Option<&MlpSpec>) -> Result<()> {
    if let Some(role) = role {
        if r.role != role {
            return Err(Error::SpecMismatch(format!("checkpoint is for `{}`, expected `{role}`", r.role)));
        }
    }
    if let Some(s) = spec {
        if s.widths != r.spec.widths {
            return Err(Error::SpecMismatch(format!(
                "checkpoint widths {:?}, expected {:?}",
                r.spec.widths, s.widths
            )));
        }
    }
    Ok(())
}

pub fn save_checkpoint(dir: &Path, name: &str, record: &CheckpointRecord, config_hash: &str) -> Result<()> {
    let mut b = Bundle::new(KIND_CHECKPOINT, config_hash);
    put_record(&mut b, record)?;
    write_bundle(dir, name, &b).map(|_| ())
}

/// Load a checkpoint, rejecting a different role or network shape.
pub fn load_checkpoint(dir: &Path, name: &str, role: Option<&str>, spec: Option<&MlpSpec>) -> Result<CheckpointRecord> {
    let b = read_bundle(dir, name, Some(KIND_CHECKPOINT))?;
    let r = get_record(&b)?;
    check_expected(&r, role, spec)?;
    Ok(r)
}

pub fn save_closure(
    dir: &Path,
    name: &str,
    c: &TrainedClosure,
    adam: Option<&[AdamState]>,
    config_hash: &str,
) -> Result<()> {
    let mut b = Bundle::new(KIND_CLOSURE, config_hash);
    put_record(
        &mut b,
        &CheckpointRecord {
            role: c.scheme.name(),
            spec: c.spec.clone(),
            nets: c.nets.clone(),
            adam: adam.map(<[AdamState]>::to_vec),
            step: c.epochs(),
        },
    )?;
    b.set_meta("scheme_id", c.scheme.id as i64)?;
    b.set_meta("scheme_dim", c.scheme.dim as i64)?;
    b.push_vec("norm.net_shift", c.norm.net_shift.clone())?;
    b.push_vec("norm.net_scale", c.norm.net_scale.clone())?;
    b.push_vec("norm.combo_scale", c.norm.combo_scale.clone())?;
    b.push_vec("norm.target_scale", c.norm.target_scale.clone())?;
    b.push_vec("history", c.history.clone())?;
    write_bundle(dir, name, &b).map(|_| ())
}

/// Load a closure; `expected` rejects a different scheme.
pub fn load_closure(
    dir: &Path,
    name: &str,
    expected: Option<ClosureScheme>,
) -> Result<(TrainedClosure, Option<Vec<AdamState>>)> {
    let b = read_bundle(dir, name, Some(KIND_CLOSURE))?;
    let r = get_record(&b)?;
    let (id, dim): (i64, i64) = (b.meta("scheme_id")?, b.meta("scheme_dim")?);
    let scheme = ClosureScheme::new(id as u8, dim as usize)?;
    if let Some(e) = expected {
        if e != scheme {
            return Err(Error::SpecMismatch(format!("closure is {}, expected {}", scheme.name(), e.name())));
        }
    }
    scheme.check_spec(&r.spec)?;
    let norm = Normalization {
        net_shift: b.array_len("norm.net_shift", scheme.n_net_inputs())?.to_vec(),
        net_scale: b.array_len("norm.net_scale", scheme.n_net_inputs())?.to_vec(),
        combo_scale: b.array_len("norm.combo_scale", scheme.n_combo())?.to_vec(),
        target_scale: b.array_len("norm.target_scale", scheme.n_targets())?.to_vec(),
    };
    let history = b.array_len("history", r.step)?.to_vec();
    Ok((
        TrainedClosure {
            scheme,
            spec: r.spec,
            nets: r.nets,
            norm,
            history,
        },
        r.adam,
    ))
}

pub fn save_dataset(dir: &Path, name: &str, d: &Stage1Dataset, config_hash: &str) -> Result<()> {
    let mut b = Bundle::new(KIND_DATASET, config_hash);
    let s = d.scheme;
    b.set_meta("scheme_id", s.id as i64)?;
    b.set_meta("scheme_dim", s.dim as i64)?;
    let n = d.len();
    b.push_vec("times", d.times.clone())?;
    b.push("coords", vec![n, s.dim], d.coords.clone())?;
    b.push("net_features", vec![n, s.n_net_inputs()], d.net_features.clone())?;
    b.push("combo_features", vec![n, s.n_combo()], d.combo_features.clone())?;
    b.push("targets", vec![n, s.n_targets()], d.targets.clone())?;
    b.push_vec("norm.net_shift", d.norm.net_shift.clone())?;
    b.push_vec("norm.net_scale", d.norm.net_scale.clone())?;
    b.push_vec("norm.combo_scale", d.norm.combo_scale.clone())?;
    b.push_vec("norm.target_scale", d.norm.target_scale.clone())?;
    write_bundle(dir, name, &b).map(|_| ())
}

pub fn load_dataset(dir: &Path, name: &str) -> Result<Stage1Dataset> {
    let b = read_bundle(dir, name, Some(KIND_DATASET))?;
    let (id, dim): (i64, i64) = (b.meta("scheme_id")?, b.meta("scheme_dim")?);
    let scheme = ClosureScheme::new(id as u8, dim as usize)?;
    let times = b.array("times")?.to_vec();
    let n = times.len();
    Ok(Stage1Dataset {
        scheme,
        coords: b.array_len("coords", n * scheme.dim)?.to_vec(),
        net_features: b.array_len("net_features", n * scheme.n_net_inputs())?.to_vec(),
        combo_features: b.array_len("combo_features", n * scheme.n_combo())?.to_vec(),
        targets: b.array_len("targets", n * scheme.n_targets())?.to_vec(),
        norm: Normalization {
            net_shift: b.array_len("norm.net_shift", scheme.n_net_inputs())?.to_vec(),
            net_scale: b.array_len("norm.net_scale", scheme.n_net_inputs())?.to_vec(),
            combo_scale: b.array_len("norm.combo_scale", scheme.n_combo())?.to_vec(),
            target_scale: b.array_len("norm.target_scale", scheme.n_targets())?.to_vec(),
        },
        times,
    })
}

pub fn save_stage2(
    dir: &Path,
    name: &str,
    s: &Stage2Solution,
    adam: Option<&[AdamState]>,
    config_hash: &str,
) -> Result<()> {
    let mut b = Bundle::new(KIND_STAGE2, config_hash);
    put_record(
        &mut b,
        &CheckpointRecord {
            role: format!("stage2-{}d", s.nets.domain.dim()),
            spec: s.nets.spec.clone(),
            nets: s.nets.nets.clone(),
            adam: adam.map(<[AdamState]>::to_vec),
            step: s.epochs(),
        },
    )?;
    b.set_meta("t_final", s.nets.domain.t_final)?;
    b.set_meta("lower", s.nets.domain.lower.clone())?;
    b.set_meta("upper", s.nets.domain.upper.clone())?;
    let nm = s.nets.nets.len();
    let e = s.epochs();
    b.push("history.ge", vec![e, nm], s.history.iter().flat_map(|h| h.ge.clone()).collect())?;
    b.push("history.bc", vec![e, nm], s.history.iter().flat_map(|h| h.bc.clone()).collect())?;
    b.push("history.ic", vec![e, nm], s.history.iter().flat_map(|h| h.ic.clone()).collect())?;
    b.push_vec("history.total", s.history.iter().map(|h| h.total).collect())?;
    let nc = s.checkpoints.len();
    let nr = s.checkpoints.first().map_or(0, |c| c.energy.len());
    b.push_vec("checkpoints.epoch", s.checkpoints.iter().map(|c| c.epoch as f64).collect())?;
    b.push_vec("checkpoints.total_loss", s.checkpoints.iter().map(|c| c.total_loss).collect())?;
    b.push(
        "checkpoints.energy",
        vec![nc, nr],
        s.checkpoints.iter().flat_map(|c| c.energy.clone()).collect(),
    )?;
    write_bundle(dir, name, &b).map(|_| ())
}

pub fn load_stage2(dir: &Path, name: &str, spec: Option<&MlpSpec>) -> Result<(Stage2Solution, Option<Vec<AdamState>>)> {
    let b = read_bundle(dir, name, Some(KIND_STAGE2))?;
    let r = get_record(&b)?;
    check_expected(&r, None, spec)?;
    let domain = SpaceTimeBox::new(b.meta("t_final")?, b.meta("lower")?, b.meta("upper")?)?;
    let nm = r.nets.len();
    let e = r.step;
    let ge = b.array_len("history.ge", e * nm)?;
    let bc = b.array_len("history.bc", e * nm)?;
    let ic = b.array_len("history.ic", e * nm)?;
    let total = b.array_len("history.total", e)?;
    let history = (0..e)
        .map(|i| LossBreakdown {
            ge: ge[i * nm..(i + 1) * nm].to_vec(),
            bc: bc[i * nm..(i + 1) * nm].to_vec(),
            ic: ic[i * nm..(i + 1) * nm].to_vec(),
            total: total[i],
        })
        .collect();
    let epochs = b.array("checkpoints.epoch")?;
    let losses = b.array_len("checkpoints.total_loss", epochs.len())?;
    let energy = b.array("checkpoints.energy")?;
    let nr = if epochs.is_empty() { 0 } else { energy.len() / epochs.len() };
    let checkpoints = (0..epochs.len())
        .map(|i| CheckpointSummary {
            epoch: epochs[i] as usize,
            total_loss: losses[i],
            energy: energy[i * nr..(i + 1) * nr].to_vec(),
        })
        .collect();
    let nets = Stage2Nets::from_parts(domain, r.spec, r.nets)?;
    Ok((
        Stage2Solution {
            nets,
            history,
            checkpoints,
        },
        r.adam,
    ))
}
