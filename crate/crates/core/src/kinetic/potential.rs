//! External potentials `Phi(x)` and their gradients.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Potential {
    /// `Phi = c |x|^2 / 2`.
    Harmonic { coefficient: f64 },
    /// `Phi = c |x|^2 / 2 + q |x|^4 / 4`.
    Anharmonic { coefficient: f64, quartic: f64 },
}

impl Potential {
    pub fn harmonic(coefficient: f64) -> Self {
        Potential::Harmonic { coefficient }
    }

    pub fn zero() -> Self {
        Potential::Harmonic { coefficient: 0.0 }
    }

    pub fn name(&self) -> String {
        match self {
            Potential::Harmonic { coefficient } => format!("harmonic(c = {coefficient})"),
            Potential::Anharmonic {
                coefficient,
                quartic,
            } => format!("anharmonic(c = {coefficient}, q = {quartic})"),
        }
    }

    /// Oscillator coefficient when the potential is purely harmonic.
    pub fn harmonic_coefficient(&self) -> Option<f64> {
        match *self {
            Potential::Harmonic { coefficient } => Some(coefficient),
            Potential::Anharmonic {
                coefficient,
                quartic,
            } if quartic == 0.0 => Some(coefficient),
            _ => None,
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        match *self {
            Potential::Harmonic { coefficient } => 0.5 * coefficient * r2,
            Potential::Anharmonic {
                coefficient,
                quartic,
            } => 0.5 * coefficient * r2 + 0.25 * quartic * r2 * r2,
        }
    }

    pub fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let factor = match *self {
            Potential::Harmonic { coefficient } => coefficient,
            Potential::Anharmonic {
                coefficient,
                quartic,
            } => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                coefficient + quartic * r2
            }
        };
        for (o, xi) in out.iter_mut().zip(x) {
            *o = factor * xi;
        }
    }

    /// `d Phi / d x_axis` at `x`.
    pub fn partial(&self, x: &[f64], axis: usize) -> f64 {
        let mut g = [0.0; 3];
        self.gradient(x, &mut g[..x.len()]);
        g[axis]
    }
}
