//! Experiment configuration, presets and the text format.

use std::fmt::Display;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kinetic::Integrator;
use crate::persist::ini::{parse_lenient, Document, Entry};
use crate::stage2::{BoundaryKind, ForceForm};

macro_rules! text_enum {
    ($(#[$m:meta])* $name:ident { $($var:ident => $txt:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
        pub enum $name { $($var),+ }

        impl $name {
            pub const NAMES: &'static [&'static str] = &[$($txt),+];

            pub fn as_str(self) -> &'static str {
                match self { $($name::$var => $txt),+ }
            }
        }

        impl FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s {
                    $($txt => Ok($name::$var),)+
                    _ => Err(format!("expected one of {}, got `{s}`", Self::NAMES.join(" | "))),
                }
            }
        }

        impl Display for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

text_enum!(TestId { I => "test1", II => "test2", III => "test3", Custom => "custom" });
text_enum!(InitialKind { SmoothBump => "smooth_bump", CollidingBeams => "colliding_beams" });
text_enum!(ReferenceMethod { Pic => "pic", FiniteVolume => "fv" });
text_enum!(KernelChoice { Gaussian => "gaussian", BSpline => "bspline" });
text_enum!(
    /// Where Stage 2 takes the closing field from.
    ClosureSource { Learned => "learned", Data => "data", Exact => "exact" }
);
text_enum!(BoundaryText { Periodic => "periodic", Neumann => "neumann" });
text_enum!(IntegratorText { ExactHarmonic => "exact_harmonic", VelocityVerlet => "velocity_verlet" });
text_enum!(ForceText { Derived => "derived", Printed => "printed" });

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSection {
    pub test: TestId,
    pub seed: u64,
    pub outdir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSection {
    pub dim: usize,
    /// Same bounds and cell count on every axis.
    pub x_min: f64,
    pub x_max: f64,
    pub n_cells: usize,
    pub boundary: BoundaryText,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSection {
    pub dt: f64,
    pub t_final: f64,
    /// Keep every `snapshot_every`-th step.
    pub snapshot_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSection {
    pub method: ReferenceMethod,
    pub initial: InitialKind,
    pub potential: f64,
    pub particles: usize,
    /// Sampling margin outside the grid on each side.
    pub pad: f64,
    pub integrator: IntegratorText,
    pub kernel: KernelChoice,
    /// Smoothing length in cells.
    pub alpha_cells: f64,
    /// Gaussian cut-off in standard deviations.
    pub truncation: f64,
    pub bspline_degree: u32,
    pub fv_dv: f64,
    pub fv_v_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage1Section {
    pub schemes: Vec<u8>,
    pub hidden_layers: usize,
    pub width: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Learning-rate factor per 1000 Adam steps.
    pub lr_decay: f64,
    /// 0 means full batch.
    pub batch_size: usize,
    /// Train on every `stride`-th snapshot.
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage2Section {
    pub closure: ClosureSource,
    /// Scheme whose closure feeds Stage 2 when `closure = learned`.
    pub scheme: u8,
    pub hidden_layers: usize,
    pub width: usize,
    pub epochs: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub n_t: usize,
    pub n_x: usize,
    pub lambdas: Vec<f64>,
    pub checkpoint_every: usize,
    pub force_form: ForceText,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSection {
    pub eval_times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub domain: DomainSection,
    pub time: TimeSection,
    pub reference: ReferenceSection,
    pub stage1: Stage1Section,
    pub stage2: Stage2Section,
    pub metrics: MetricsSection,
}

impl ExperimentConfig {
    /// Desk-scale preset of a test; `Custom` starts from the Test II values.
    pub fn preset(test: TestId) -> Self {
        let mut c = Self::test2();
        match test {
            TestId::I => c = Self::test1(),
            TestId::II => {}
            TestId::III => c = Self::test3(),
            TestId::Custom => c.experiment.test = TestId::Custom,
        }
        c
    }

    fn test2() -> Self {
        Self {
            experiment: ExperimentSection {
                test: TestId::II,
                seed: 1,
                outdir: PathBuf::from("runs/test2"),
            },
            domain: DomainSection {
                dim: 1,
                x_min: -0.5,
                x_max: 0.5,
                n_cells: 300,
                boundary: BoundaryText::Neumann,
            },
            time: TimeSection { dt: 0.005, t_final: 0.2, snapshot_every: 1 },
            reference: ReferenceSection {
                method: ReferenceMethod::Pic,
                initial: InitialKind::CollidingBeams,
                potential: 1.0,
                particles: 100_000,
                pad: 0.3,
                integrator: IntegratorText::ExactHarmonic,
                kernel: KernelChoice::Gaussian,
                alpha_cells: 2.0,
                truncation: 6.0,
                bspline_degree: 3,
                fv_dv: 0.2,
                fv_v_max: 2.0,
            },
            stage1: Stage1Section {
                schemes: vec![1],
                hidden_layers: 10,
                width: 64,
                epochs: 20_000,
                lr: 1e-3,
                lr_decay: 0.85,
                batch_size: 0,
                stride: 5,
            },
            stage2: Stage2Section {
                closure: ClosureSource::Learned,
                scheme: 1,
                hidden_layers: 4,
                width: 64,
                epochs: 5_000,
                lr: 1e-3,
                lr_decay: 0.7,
                n_t: 32,
                n_x: 128,
                lambdas: vec![1.0; 4],
                checkpoint_every: 100,
                force_form: ForceText::Derived,
            },
            metrics: MetricsSection {
                eval_times: vec![0.05, 0.1, 0.15, 0.2],
            },
        }
    }

    fn test1() -> Self {
        let mut c = Self::test2();
        c.experiment.test = TestId::I;
        c.experiment.outdir = PathBuf::from("runs/test1");
        c.domain = DomainSection {
            dim: 1,
            x_min: 0.0,
            x_max: 2.0,
            n_cells: 300,
            boundary: BoundaryText::Periodic,
        };
        c.time = TimeSection { dt: 0.01, t_final: 0.5, snapshot_every: 1 };
        c.reference.initial = InitialKind::SmoothBump;
        c.reference.pad = 0.0;
        c.reference.alpha_cells = 1.0;
        c.stage1.schemes = vec![1, 2, 3];
        c.stage1.hidden_layers = 4;
        c.stage1.width = 128;
        c.stage2.n_t = 32;
        c.metrics.eval_times = vec![0.1, 0.2, 0.3, 0.4, 0.5];
        c
    }

    fn test3() -> Self {
        let mut c = Self::test2();
        c.experiment.test = TestId::III;
        c.experiment.outdir = PathBuf::from("runs/test3");
        c.domain = DomainSection {
            dim: 2,
            x_min: -0.5,
            x_max: 0.5,
            n_cells: 40,
            boundary: BoundaryText::Neumann,
        };
        c.time = TimeSection { dt: 0.005, t_final: 0.1, snapshot_every: 1 };
        c.reference.pad = 0.2;
        c.reference.alpha_cells = 1.0;
        c.stage1.hidden_layers = 4;
        c.stage1.width = 64;
        c.stage1.epochs = 3_000;
        c.stage1.lr_decay = 0.7;
        c.stage1.stride = 2;
        c.stage2.n_t = 16;
        c.stage2.n_x = 32;
        c.stage2.hidden_layers = 4;
        c.stage2.width = 64;
        c.stage2.epochs = 1_500;
        c.stage2.lr_decay = 1.0;
        c.stage2.lambdas = vec![1.0; 6];
        c.metrics.eval_times = vec![0.05, 0.1];
        c
    }

    /// Number of time steps, `t_final / dt` rounded.
    pub fn n_steps(&self) -> usize {
        (self.time.t_final / self.time.dt).round() as usize
    }

    /// Step indices of the stored snapshots: every `snapshot_every`-th step
    /// and always the final one.
    pub fn snapshot_steps(&self) -> Vec<usize> {
        let n = self.n_steps();
        let mut s: Vec<usize> = (0..=n).step_by(self.time.snapshot_every.max(1)).collect();
        if s.last() != Some(&n) {
            s.push(n);
        }
        s
    }

    pub fn snapshot_times(&self) -> Vec<f64> {
        self.snapshot_steps().into_iter().map(|k| k as f64 * self.time.dt).collect()
    }

    pub fn boundary_kind(&self) -> BoundaryKind {
        match self.domain.boundary {
            BoundaryText::Periodic => BoundaryKind::Periodic,
            BoundaryText::Neumann => BoundaryKind::Neumann,
        }
    }

    pub fn integrator(&self) -> Integrator {
        match self.reference.integrator {
            IntegratorText::ExactHarmonic => Integrator::ExactHarmonic,
            IntegratorText::VelocityVerlet => Integrator::VelocityVerlet,
        }
    }

    pub fn force_form(&self) -> ForceForm {
        match self.stage2.force_form {
            ForceText::Derived => ForceForm::Derived,
            ForceText::Printed => ForceForm::Printed,
        }
    }

    /// SHA-256 of the canonical serialization, independent of key order in
    /// the source text. The output directory is excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.experiment.outdir = PathBuf::new();
        let value = serde_json::to_value(&c).expect("config serializes");
        hex(&Sha256::digest(value.to_string().as_bytes()))[..16].to_string()
    }

    /// Hash of the sections that determine the artifacts of `stage`
    /// (`reference`, `stage1` or `stage2`), for cache lookups.
    pub fn stage_hash(&self, stage: &str) -> String {
        let mut v = serde_json::json!({
            "seed": self.experiment.seed,
            "domain": self.domain,
            "time": self.time,
            "reference": self.reference,
        });
        if stage != "reference" {
            v["stage1"] = serde_json::to_value(&self.stage1).expect("config serializes");
        }
        if stage == "stage2" {
            v["stage2"] = serde_json::to_value(&self.stage2).expect("config serializes");
        }
        v["stage"] = stage.into();
        hex(&Sha256::digest(v.to_string().as_bytes()))[..16].to_string()
    }

    /// Every violated constraint, one message per problem.
    pub fn validate(&self) -> Vec<String> {
        let mut e = Vec::new();
        let mut check = |ok: bool, msg: String| {
            if !ok {
                e.push(msg)
            }
        };
        let d = &self.domain;
        check(d.dim == 1 || d.dim == 2, format!("domain.dim = {}: must be 1 or 2", d.dim));
        check(
            d.x_min.is_finite() && d.x_max.is_finite() && d.x_max > d.x_min,
            format!("domain.x_max = {} must exceed domain.x_min = {}", d.x_max, d.x_min),
        );
        check(d.n_cells >= 3, format!("domain.n_cells = {}: must be >= 3", d.n_cells));
        let t = &self.time;
        check(t.dt > 0.0 && t.dt.is_finite(), format!("time.dt = {}: must be > 0", t.dt));
        check(t.snapshot_every >= 1, "time.snapshot_every = 0: must be >= 1".into());
        check(t.t_final >= 0.0 && t.t_final.is_finite(), format!("time.t_final = {}: must be >= 0", t.t_final));
        if t.dt > 0.0 {
            let k = t.t_final / t.dt;
            check(
                (k - k.round()).abs() < 1e-9 * k.max(1.0),
                format!("time.t_final = {} is not a whole number of steps of {}", t.t_final, t.dt),
            );
        }
        if self.reference.initial == InitialKind::CollidingBeams && self.reference.integrator == IntegratorText::ExactHarmonic {
            check(
                t.t_final < std::f64::consts::FRAC_PI_2,
                format!("time.t_final = {}: must stay below pi/2", t.t_final),
            );
        }
        let r = &self.reference;
        check(r.particles >= 1, "reference.particles = 0: must be >= 1".into());
        check(r.pad >= 0.0 && r.pad.is_finite(), format!("reference.pad = {}: must be >= 0", r.pad));
        check(r.potential.is_finite() && r.potential >= 0.0, format!("reference.potential = {}: must be >= 0", r.potential));
        check(r.alpha_cells >= 1.0 && r.alpha_cells.is_finite(), format!("reference.alpha_cells = {}: must be >= 1", r.alpha_cells));
        check(r.truncation > 0.0, format!("reference.truncation = {}: must be > 0", r.truncation));
        check((1..=5).contains(&r.bspline_degree), format!("reference.bspline_degree = {}: must be in 1..=5", r.bspline_degree));
        check(r.fv_dv > 0.0 && r.fv_v_max > 0.0, "reference.fv_dv and reference.fv_v_max must be > 0".into());
        check(
            !(r.method == ReferenceMethod::FiniteVolume && d.dim != 2),
            "reference.method = fv requires domain.dim = 2".into(),
        );
        check(
            !(r.initial == InitialKind::SmoothBump && d.dim == 2),
            "reference.initial = smooth_bump is one-dimensional".into(),
        );
        let s1 = &self.stage1;
        check(!s1.schemes.is_empty(), "stage1.schemes: must list at least one scheme".into());
        for s in &s1.schemes {
            check((1..=4).contains(s), format!("stage1.schemes: {s} is not in 1..=4"));
        }
        check(s1.width >= 1, "stage1.width = 0: must be >= 1".into());
        check(s1.lr > 0.0 && s1.lr.is_finite(), format!("stage1.lr = {}: must be > 0", s1.lr));
        check(
            s1.lr_decay > 0.0 && s1.lr_decay <= 1.0,
            format!("stage1.lr_decay = {}: must lie in (0, 1]", s1.lr_decay),
        );
        check(s1.stride >= 1, "stage1.stride = 0: must be >= 1".into());
        let s2 = &self.stage2;
        check((1..=4).contains(&s2.scheme), format!("stage2.scheme = {}: must be in 1..=4", s2.scheme));
        check(
            s2.closure != ClosureSource::Learned || s1.schemes.contains(&s2.scheme),
            format!("stage2.scheme = {} is not among stage1.schemes", s2.scheme),
        );
        check(
            s2.closure != ClosureSource::Exact || (d.dim == 1 && r.initial == InitialKind::CollidingBeams && r.potential == 1.0),
            "stage2.closure = exact needs the 1D colliding-beam data with potential = 1".into(),
        );
        check(s2.width >= 1, "stage2.width = 0: must be >= 1".into());
        check(s2.lr > 0.0 && s2.lr.is_finite(), format!("stage2.lr = {}: must be > 0", s2.lr));
        check(
            s2.lr_decay > 0.0 && s2.lr_decay <= 1.0,
            format!("stage2.lr_decay = {}: must lie in (0, 1]", s2.lr_decay),
        );
        check(s2.n_t >= 1 && s2.n_x >= 1, "stage2.n_t and stage2.n_x must be >= 1".into());
        check(
            s2.lambdas.len() == 2 * (d.dim + 1),
            format!("stage2.lambdas: need {} values, got {}", 2 * (d.dim + 1), s2.lambdas.len()),
        );
        for l in &s2.lambdas {
            check(l.is_finite() && *l >= 0.0, format!("stage2.lambdas: {l} must be finite and >= 0"));
        }
        let steps_ok = t.dt > 0.0 && t.t_final.is_finite() && t.t_final / t.dt <= 1e6;
        check(steps_ok || !(t.dt > 0.0), "time: more than 1e6 steps".into());
        if steps_ok && t.snapshot_every >= 1 {
            let times = self.snapshot_times();
            for &te in &self.metrics.eval_times {
                check(
                    times.iter().any(|s| (s - te).abs() < 1e-9),
                    format!("metrics.eval_times: {te} is not a stored snapshot time"),
                );
            }
        }
        e
    }

    pub fn validated(self) -> Result<Self> {
        let e = self.validate();
        if e.is_empty() {
            Ok(self)
        } else {
            Err(Error::Config(e))
        }
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

trait ConfigValue: Sized {
    fn parse_text(s: &str) -> std::result::Result<Self, String>;
    fn render(&self) -> String;
}

impl ConfigValue for f64 {
    fn parse_text(s: &str) -> std::result::Result<Self, String> {
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| format!("expected a finite number, got `{s}`"))
    }
    fn render(&self) -> String {
        format!("{self:?}")
    }
}

macro_rules! int_value {
    ($($t:ty),*) => {$(
        impl ConfigValue for $t {
            fn parse_text(s: &str) -> std::result::Result<Self, String> {
                let v: i128 = s.replace('_', "").parse().map_err(|_| format!("expected an integer, got `{s}`"))?;
                <$t>::try_from(v).map_err(|_| format!("{v} is outside [{}, {}]", <$t>::MIN, <$t>::MAX))
            }
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}
int_value!(u8, u32, u64, usize);

impl<T: ConfigValue> ConfigValue for Vec<T> {
    fn parse_text(s: &str) -> std::result::Result<Self, String> {
        if s.trim().is_empty() {
            return Ok(Vec::new());
        }
        s.split(',').map(|p| T::parse_text(p.trim())).collect()
    }
    fn render(&self) -> String {
        self.iter().map(T::render).collect::<Vec<_>>().join(", ")
    }
}

impl ConfigValue for PathBuf {
    fn parse_text(s: &str) -> std::result::Result<Self, String> {
        if s.is_empty() {
            Err("expected a path".into())
        } else {
            Ok(PathBuf::from(s))
        }
    }
    fn render(&self) -> String {
        self.display().to_string()
    }
}

macro_rules! enum_value {
    ($($t:ty),*) => {$(
        impl ConfigValue for $t {
            fn parse_text(s: &str) -> std::result::Result<Self, String> {
                s.parse()
            }
            fn render(&self) -> String {
                self.as_str().to_string()
            }
        }
    )*};
}
enum_value!(TestId, InitialKind, ReferenceMethod, KernelChoice, ClosureSource, BoundaryText, IntegratorText, ForceText);

/// One configurable key: its location, help text, and accessors.
pub struct FieldDef {
    pub section: &'static str,
    pub key: &'static str,
    pub help: &'static str,
    get: fn(&ExperimentConfig) -> String,
    set: fn(&mut ExperimentConfig, &str) -> std::result::Result<(), String>,
}

impl FieldDef {
    pub fn get(&self, c: &ExperimentConfig) -> String {
        (self.get)(c)
    }

    pub fn set(&self, c: &mut ExperimentConfig, text: &str) -> std::result::Result<(), String> {
        (self.set)(c, text)
    }

    /// `section.key`, the flag spelling on the command line.
    pub fn path(&self) -> String {
        format!("{}.{}", self.section, self.key)
    }
}

macro_rules! fields {
    ($($sec:ident . $key:ident : $ty:ty $([>= $min:literal])? = $help:literal;)*) => {
        pub static FIELDS: &[FieldDef] = &[$(
            FieldDef {
                section: stringify!($sec),
                key: stringify!($key),
                help: $help,
                get: |c| <$ty as ConfigValue>::render(&c.$sec.$key),
                set: |c, s| {
                    $(check_min(s, $min as f64)?;)?
                    c.$sec.$key = <$ty as ConfigValue>::parse_text(s)?;
                    Ok(())
                },
            },
        )*];
    };
}

/// Range check on the raw text, so a negative count reports its bound
/// rather than a parse failure.
fn check_min(text: &str, min: f64) -> std::result::Result<(), String> {
    for part in text.split(',') {
        if let Ok(v) = part.trim().replace('_', "").parse::<f64>() {
            if v < min {
                return Err(format!("{} is out of range: must be >= {min}", part.trim()));
            }
        }
    }
    Ok(())
}

fields! {
    experiment.test: TestId = "preset: test1 | test2 | test3 | custom";
    experiment.seed: u64 = "seed for particle sampling and network initialization";
    experiment.outdir: PathBuf = "output directory";
    domain.dim: usize [>= 1] = "space dimension, 1 or 2";
    domain.x_min: f64 = "lower bound of every space axis";
    domain.x_max: f64 = "upper bound of every space axis";
    domain.n_cells: usize [>= 3] = "cells per space axis";
    domain.boundary: BoundaryText = "periodic | neumann";
    time.dt: f64 = "time step";
    time.t_final: f64 = "final time";
    time.snapshot_every: usize [>= 1] = "store every n-th time step";
    reference.method: ReferenceMethod = "pic | fv (fv only in 2D)";
    reference.initial: InitialKind = "smooth_bump | colliding_beams";
    reference.potential: f64 [>= 0] = "harmonic coefficient c in Phi = c |x|^2 / 2";
    reference.particles: usize [>= 1] = "total particle count (PIC)";
    reference.pad: f64 [>= 0] = "sampling margin outside the grid on each side";
    reference.integrator: IntegratorText = "exact_harmonic | velocity_verlet";
    reference.kernel: KernelChoice = "gaussian | bspline";
    reference.alpha_cells: f64 [>= 1] = "kernel smoothing length in cells";
    reference.truncation: f64 = "gaussian cut-off in standard deviations";
    reference.bspline_degree: u32 [>= 1] = "b-spline degree";
    reference.fv_dv: f64 = "finite-volume velocity spacing";
    reference.fv_v_max: f64 = "finite-volume velocity half-width";
    stage1.schemes: Vec<u8> [>= 1] = "closure schemes to train, comma separated";
    stage1.hidden_layers: usize = "hidden layers per closure network";
    stage1.width: usize [>= 1] = "neurons per hidden layer";
    stage1.epochs: usize = "training epochs";
    stage1.lr: f64 = "Adam learning rate";
    stage1.lr_decay: f64 = "learning-rate factor per 1000 steps, 1 for constant";
    stage1.batch_size: usize = "rows per step, 0 for full batch";
    stage1.stride: usize [>= 1] = "train on every stride-th snapshot";
    stage2.closure: ClosureSource = "learned | data | exact";
    stage2.scheme: u8 [>= 1] = "scheme whose learned closure feeds stage 2";
    stage2.hidden_layers: usize = "hidden layers per moment network";
    stage2.width: usize [>= 1] = "neurons per hidden layer";
    stage2.epochs: usize = "training epochs";
    stage2.lr: f64 = "Adam learning rate";
    stage2.lr_decay: f64 = "learning-rate factor per 1000 steps, 1 for constant";
    stage2.n_t: usize [>= 1] = "interior collocation times";
    stage2.n_x: usize [>= 1] = "interior collocation points per space axis";
    stage2.lambdas: Vec<f64> [>= 0] = "boundary penalties per moment, then initial penalties per moment";
    stage2.checkpoint_every: usize = "epochs between energy checkpoints, 0 disables";
    stage2.force_form: ForceText = "2D force terms: derived | printed";
    metrics.eval_times: Vec<f64> = "snapshot times reported in the metric tables";
}

pub fn field(path: &str) -> Option<&'static FieldDef> {
    FIELDS.iter().find(|f| f.path() == path)
}

/// Parse a configuration document. `experiment.test` picks the preset the
/// other keys override; for `custom` the domain, time and initial-data keys
/// are required.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    parse_config_with(text, &[])
}

/// Parse `text` (empty when absent) with `overrides` (`section.key`,
/// value) replacing or adding entries, as command-line flags do.
pub fn parse_config_with(text: &str, overrides: &[(String, String)]) -> Result<ExperimentConfig> {
    let (mut doc, mut errors) = parse_lenient(text);
    for (path, value) in overrides {
        let Some((section, key)) = path.split_once('.') else {
            errors.push(format!("flag --{path}: expected section.key"));
            continue;
        };
        doc.entries.retain(|e| !(e.section == section && e.key == key));
        doc.entries.push(Entry {
            section: section.into(),
            key: key.into(),
            value: value.clone(),
            line: 0,
        });
    }
    match config_from_document(&doc) {
        Ok(c) if errors.is_empty() => Ok(c),
        Ok(_) => Err(Error::Config(errors)),
        Err(Error::Config(more)) => {
            errors.extend(more);
            Err(Error::Config(errors))
        }
        Err(e) => Err(e),
    }
}

fn location(e: &Entry) -> String {
    if e.line == 0 {
        format!("flag --{}.{}", e.section, e.key)
    } else {
        format!("line {}", e.line)
    }
}

const CUSTOM_REQUIRED: &[&str] = &[
    "domain.dim",
    "domain.x_min",
    "domain.x_max",
    "domain.n_cells",
    "domain.boundary",
    "time.dt",
    "time.t_final",
    "reference.initial",
];

fn config_from_document(doc: &Document) -> Result<ExperimentConfig> {
    let mut errors = Vec::new();
    let test = match doc.get("experiment", "test") {
        None => {
            errors.push("missing required key experiment.test".to_string());
            TestId::II
        }
        Some(e) => e.value.parse().unwrap_or_else(|m| {
            errors.push(format!("{}: experiment.test: {m}", location(e)));
            TestId::II
        }),
    };
    let mut c = ExperimentConfig::preset(test);
    if test == TestId::Custom {
        for req in CUSTOM_REQUIRED {
            let (s, k) = req.split_once('.').unwrap();
            if doc.get(s, k).is_none() {
                errors.push(format!("missing required key {req} (experiment.test = custom)"));
            }
        }
    }
    for e in &doc.entries {
        let path = format!("{}.{}", e.section, e.key);
        match field(&path) {
            None => errors.push(format!("{}: unknown key {path}", location(e))),
            Some(f) => {
                if let Err(m) = f.set(&mut c, &e.value) {
                    errors.push(format!("{}: {path}: {m}", location(e)));
                }
            }
        }
    }
    errors.extend(c.validate());
    if errors.is_empty() {
        Ok(c)
    } else {
        Err(Error::Config(errors))
    }
}

/// Canonical text: every key, grouped by section, in declaration order.
pub fn config_to_text(c: &ExperimentConfig) -> String {
    let mut out = String::new();
    let mut section = "";
    for f in FIELDS {
        if f.section != section {
            if !section.is_empty() {
                out.push('\n');
            }
            out.push_str(&format!("[{}]\n", f.section));
            section = f.section;
        }
        out.push_str(&format!("{} = {}\n", f.key, f.get(c)));
    }
    out
}

/// Canonical text with each key preceded by its help line.
pub fn config_to_annotated_text(c: &ExperimentConfig) -> String {
    let mut out = String::new();
    let mut section = "";
    for f in FIELDS {
        if f.section != section {
            if !section.is_empty() {
                out.push('\n');
            }
            out.push_str(&format!("[{}]\n", f.section));
            section = f.section;
        }
        out.push_str(&format!("# {}\n{} = {}\n", f.help, f.key, f.get(c)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for t in [TestId::I, TestId::II, TestId::III, TestId::Custom] {
            let c = ExperimentConfig::preset(t);
            assert!(c.validate().is_empty(), "{t}: {:?}", c.validate());
            let text = config_to_text(&c);
            let back = parse_config(&text).unwrap();
            assert_eq!(back, c);
            assert_eq!(config_to_text(&back), text);
        }
    }

    #[test]
    fn minimal_preset_reference() {
        let c = parse_config("[experiment]\ntest = test2\n").unwrap();
        assert_eq!(c, ExperimentConfig::preset(TestId::II));
        assert_eq!(c.n_steps(), 40);
        assert_eq!(c.stage1.hidden_layers, 10);
    }

    #[test]
    fn errors_are_collected() {
        let text = "[experiment]\ntest = test2\n[reference]\nparticles = -5\nkernal = gaussian\n[stage1]\nlr = fast\nlr = 2\n";
        match parse_config(text) {
            Err(Error::Config(e)) => {
                assert_eq!(e.len(), 4, "{e:?}");
                assert!(e[0].contains("line 8") && e[0].contains("line 7"));
            }
            other => panic!("{other:?}"),
        }
        let text = "[experiment]\ntest = test2\n[reference]\nparticles = -5\nkernal = gaussian\n[stage1]\nlr = fast\n";
        match parse_config(text) {
            Err(Error::Config(e)) => {
                assert_eq!(e.len(), 3, "{e:?}");
                assert!(e[0].contains("reference.particles") && e[0].contains("line 4") && e[0].contains(">= 1"), "{}", e[0]);
                assert!(e[1].contains("unknown key reference.kernal"));
                assert!(e[2].contains("stage1.lr"));
            }
            other => panic!("{other:?}"),
        }
        match parse_config("[experiment]\ntest = custom\n") {
            Err(Error::Config(e)) => assert_eq!(e.len(), CUSTOM_REQUIRED.len()),
            other => panic!("{other:?}"),
        }
        match parse_config("[experiment]\ntest = test2\n[time]\ndt = -1\n[domain]\nn_cells = 2\n") {
            Err(Error::Config(e)) => assert!(e.len() >= 2, "{e:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn hash_ignores_key_order_and_outdir() {
        let a = parse_config("[experiment]\ntest = test2\nseed = 4\n[stage1]\nepochs = 10\n").unwrap();
        let b = parse_config("[stage1]\nepochs = 10\n[experiment]\nseed = 4\ntest = test2\noutdir = elsewhere\n").unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = parse_config("[experiment]\ntest = test2\nseed = 5\n").unwrap();
        assert_ne!(a.hash(), c.hash());
    }
}
