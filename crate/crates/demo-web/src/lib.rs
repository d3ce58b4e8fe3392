//! Browser bindings: colliding-beam phase space, deposited moments against
//! the smoothed analytic solution, and a small closure network trained in
//! steps. Layouts of the returned arrays are documented per function.

use wasm_bindgen::prelude::*;

use moment_closure::kinetic::initial::colliding_beams;
use moment_closure::kinetic::particles::advance;
use moment_closure::kinetic::{
    deposit_moments, sample_single_phase, Grid1D, Integrator, MomentField1D, ParticleEnsemble, Potential,
    RegularizedTwoBranch, ShapeKernel,
};
use moment_closure::nn::{AdamConfig, AdamState};
use moment_closure::stage1::{
    assemble_dataset, ClosureScheme, Stage1Dataset, Stage1Optimizer, Stage1Trainer, TrainedClosure,
};

const X_MIN: f64 = -0.5;
const X_MAX: f64 = 0.5;
const N_CELLS: usize = 200;
const PAD: f64 = 0.3;
const MAX_SCATTER: usize = 4000;

fn ensemble(particles: usize, seed: u32) -> Result<(Grid1D, ParticleEnsemble), String> {
    let grid = Grid1D::new(X_MIN, X_MAX, N_CELLS).map_err(|e| e.to_string())?;
    let sample = grid.padded(PAD);
    let ppc = particles.max(1).div_ceil(sample.n_cells());
    let ens = sample_single_phase(&colliding_beams(), &sample, ppc, seed as u64).map_err(|e| e.to_string())?;
    Ok((grid, ens))
}

fn push_to(ens: &mut ParticleEnsemble, t: f64) -> Result<(), String> {
    if !(0.0..1.5).contains(&t) {
        return Err(format!("time must lie in [0, 1.5), got {t}"));
    }
    let dt = t - ens.time;
    advance(ens, &Potential::harmonic(1.0), dt, 1, Integrator::ExactHarmonic).map_err(|e| e.to_string())?;
    ens.time = t;
    Ok(())
}

/// Particles inside the grid at time `t`, thinned to at most 4000, as
/// interleaved `[x0, v0, x1, v1, ...]`.
pub fn phase_space(t: f64, particles: usize, seed: u32) -> Result<Vec<f64>, String> {
    let (_, mut ens) = ensemble(particles, seed)?;
    push_to(&mut ens, t)?;
    let inside: Vec<usize> = (0..ens.len())
        .filter(|&k| (X_MIN..=X_MAX).contains(&ens.positions[k]))
        .collect();
    let step = inside.len().div_ceil(MAX_SCATTER).max(1);
    Ok(inside
        .iter()
        .step_by(step)
        .flat_map(|&k| [ens.positions[k], ens.velocities[k]])
        .collect())
}

/// Deposited and analytic moments at time `t`: seven blocks of `N` values,
/// `x, m0, m1, dx_m2` from particles, then `m0, m1, dx_m2` of the smoothed
/// two-branch solution.
pub fn moment_profiles(t: f64, particles: usize, alpha_cells: f64, seed: u32) -> Result<Vec<f64>, String> {
    let (grid, mut ens) = ensemble(particles, seed)?;
    push_to(&mut ens, t)?;
    let alpha = alpha_cells * grid.dx();
    let kernel = ShapeKernel::gaussian(alpha, 6.0).map_err(|e| e.to_string())?;
    let f = deposit_moments(&ens, &kernel, &grid, 2).map_err(|e| e.to_string())?;
    let exact = RegularizedTwoBranch::new(alpha).map_err(|e| e.to_string())?;
    let xs = grid.centers();
    let mut out = xs.clone();
    out.extend_from_slice(&f.moments[0]);
    out.extend_from_slice(&f.moments[1]);
    out.extend_from_slice(&f.derivatives[2]);
    let e: Vec<_> = xs.iter().map(|&x| exact.eval(t, x)).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    out.extend(e.iter().map(|s| s.m0));
    out.extend(e.iter().map(|s| s.m1));
    out.extend(e.iter().map(|s| s.dm2));
    Ok(out)
}

/// Stage-1 closure training on colliding-beam snapshots, advanced in chunks.
pub struct ClosureSession {
    data: Stage1Dataset,
    fields: Vec<MomentField1D>,
    closure: TrainedClosure,
    adam: Vec<AdamState>,
    opt: Stage1Optimizer,
}

impl ClosureSession {
    pub fn new(scheme: u8, hidden_layers: usize, width: usize, particles: usize) -> Result<Self, String> {
        let scheme = ClosureScheme::new(scheme, 1).map_err(|e| e.to_string())?;
        let (grid, mut ens) = ensemble(particles, 1)?;
        let kernel = ShapeKernel::gaussian(2.0 * grid.dx(), 6.0).map_err(|e| e.to_string())?;
        let mut fields = Vec::new();
        for k in 0..=8 {
            push_to(&mut ens, 0.025 * k as f64)?;
            fields.push(deposit_moments(&ens, &kernel, &grid, 2).map_err(|e| e.to_string())?);
        }
        let data = assemble_dataset(&fields, scheme).map_err(|e| e.to_string())?;
        let spec = scheme.mlp_spec(hidden_layers, width, 7).map_err(|e| e.to_string())?;
        let opt = Stage1Optimizer {
            adam: AdamConfig::with_lr(3e-3),
            ..Default::default()
        };
        let (closure, adam) = Stage1Trainer::new(&data, &spec, opt).map_err(|e| e.to_string())?.into_parts();
        Ok(Self {
            data,
            fields,
            closure,
            adam,
            opt,
        })
    }

    /// Run `epochs` more epochs; returns the latest loss.
    pub fn train(&mut self, epochs: usize) -> Result<f64, String> {
        let mut tr = Stage1Trainer::resume(&self.data, self.closure.clone(), self.adam.clone(), self.opt)
            .map_err(|e| e.to_string())?;
        tr.run(epochs).map_err(|e| e.to_string())?;
        (self.closure, self.adam) = tr.into_parts();
        Ok(self.closure.history.last().copied().unwrap_or(f64::NAN))
    }

    pub fn epochs(&self) -> usize {
        self.closure.epochs()
    }

    /// `x`, data `dx_m2` and predicted `dx_m2` for snapshot `k` (0..=8,
    /// t = 0.025 k), three blocks of `N`.
    pub fn profile(&self, k: usize) -> Result<Vec<f64>, String> {
        let f = self.fields.get(k).ok_or_else(|| format!("snapshot {k} out of range"))?;
        let d = assemble_dataset(std::slice::from_ref(f), self.closure.scheme).map_err(|e| e.to_string())?;
        let pred = self.closure.predict_dataset(&d).map_err(|e| e.to_string())?;
        let mut out = f.grid.centers();
        out.extend_from_slice(&d.targets);
        out.extend(pred);
        Ok(out)
    }

    pub fn rows(&self) -> usize {
        self.data.len()
    }
}

#[wasm_bindgen(js_name = phaseSpace)]
pub fn js_phase_space(t: f64, particles: usize, seed: u32) -> Result<Vec<f64>, JsValue> {
    phase_space(t, particles, seed).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = momentProfiles)]
pub fn js_moment_profiles(t: f64, particles: usize, alpha_cells: f64, seed: u32) -> Result<Vec<f64>, JsValue> {
    moment_profiles(t, particles, alpha_cells, seed).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = ClosureSession)]
pub struct JsClosureSession(ClosureSession);

#[wasm_bindgen(js_class = ClosureSession)]
impl JsClosureSession {
    #[wasm_bindgen(constructor)]
    pub fn new(scheme: u8, hidden_layers: usize, width: usize, particles: usize) -> Result<JsClosureSession, JsValue> {
        ClosureSession::new(scheme, hidden_layers, width, particles)
            .map(JsClosureSession)
            .map_err(|e| JsValue::from_str(&e))
    }

    pub fn train(&mut self, epochs: usize) -> Result<f64, JsValue> {
        self.0.train(epochs).map_err(|e| JsValue::from_str(&e))
    }

    pub fn epochs(&self) -> usize {
        self.0.epochs()
    }

    pub fn rows(&self) -> usize {
        self.0.rows()
    }

    pub fn profile(&self, k: usize) -> Result<Vec<f64>, JsValue> {
        self.0.profile(k).map_err(|e| JsValue::from_str(&e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phase_space_is_interleaved_and_inside() {
        let p = phase_space(0.3, 20_000, 1).unwrap();
        assert!(!p.is_empty() && p.len() % 2 == 0 && p.len() <= 2 * MAX_SCATTER);
        assert!(p.chunks_exact(2).all(|c| (X_MIN..=X_MAX).contains(&c[0])));
        assert!(phase_space(2.0, 100, 1).is_err());
    }

    #[test]
    fn profiles_track_the_analytic_density() {
        let p = moment_profiles(0.1, 40_000, 2.0, 3).unwrap();
        assert_eq!(p.len(), 7 * N_CELLS);
        let (pic, exact) = (&p[N_CELLS..2 * N_CELLS], &p[4 * N_CELLS..5 * N_CELLS]);
        let err: f64 = pic.iter().zip(exact).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = exact.iter().map(|b| b * b).sum::<f64>().sqrt();
        assert!(err / norm < 5e-2, "{}", err / norm);
    }

    #[test]
    fn session_trains_and_reports() {
        let mut s = ClosureSession::new(1, 2, 16, 10_000).unwrap();
        let first = s.train(1).unwrap();
        let later = s.train(200).unwrap();
        assert!(later < first);
        assert_eq!(s.epochs(), 201);
        assert_eq!(s.profile(4).unwrap().len(), 3 * N_CELLS);
        assert!(s.profile(9).is_err());
    }
}
