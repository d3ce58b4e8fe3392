//! Monokinetic (WKB-limit) initial data `w(0, x, v) = rho0(x) delta(v - u0(x))`.

use serde::{Deserialize, Serialize};

/// Scalar profile of one spatial variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    Constant { value: f64 },
    /// `amplitude * exp(-rate (x - center)^2)`.
    Gaussian {
        amplitude: f64,
        center: f64,
        rate: f64,
    },
    /// `left` for x < at, `right` for x > at, `mid` exactly at the jump.
    Step {
        left: f64,
        right: f64,
        at: f64,
        mid: f64,
    },
    /// Gradient of the phase `S0 = -(1/k) ln(e^{k(x-c)} + e^{-k(x-c)})`,
    /// i.e. `-tanh(k (x - c))`.
    LogCoshPhase { center: f64, sharpness: f64 },
}

impl Profile {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Profile::Constant { value } => value,
            Profile::Gaussian {
                amplitude,
                center,
                rate,
            } => amplitude * (-rate * (x - center).powi(2)).exp(),
            Profile::Step {
                left,
                right,
                at,
                mid,
            } => {
                if x < at {
                    left
                } else if x > at {
                    right
                } else {
                    mid
                }
            }
            Profile::LogCoshPhase { center, sharpness } => -(sharpness * (x - center)).tanh(),
        }
    }

    /// Phase `S0` whose derivative is this profile, where one is defined in
    /// closed form.
    pub fn phase(&self, x: f64) -> Option<f64> {
        match *self {
            Profile::LogCoshPhase { center, sharpness } => {
                let z = sharpness * (x - center);
                // ln(e^z + e^-z) computed without overflow
                let a = z.abs();
                Some(-(a + (-2.0 * a).exp().ln_1p()) / sharpness)
            }
            Profile::Constant { value } => Some(value * x),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialData {
    pub density: Profile,
    pub velocity: Profile,
}

impl InitialData {
    pub fn density(&self, x: f64) -> f64 {
        self.density.eval(x)
    }

    pub fn velocity(&self, x: f64) -> f64 {
        self.velocity.eval(x)
    }
}

/// Separable 2D data: `rho0 = rho_1(x1) rho_2(x2)`, `u0 = (u_1(x1), u_2(x2))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialData2D {
    pub density: [Profile; 2],
    pub velocity: [Profile; 2],
}

impl InitialData2D {
    pub fn density(&self, x1: f64, x2: f64) -> f64 {
        self.density[0].eval(x1) * self.density[1].eval(x2)
    }

    pub fn velocity(&self, x1: f64, x2: f64) -> [f64; 2] {
        [self.velocity[0].eval(x1), self.velocity[1].eval(x2)]
    }
}

/// Gaussian bump with log-cosh phase on [0, 2].
pub fn smooth_bump() -> InitialData {
    InitialData {
        density: Profile::Gaussian {
            amplitude: 1.0,
            center: 1.0,
            rate: 100.0,
        },
        velocity: Profile::LogCoshPhase {
            center: 1.0,
            sharpness: 5.0,
        },
    }
}

/// Uniform density with two counter-propagating half-lines: u0 = +1 for x < 0,
/// -1 for x > 0 and 0 exactly at the origin.
pub fn colliding_beams() -> InitialData {
    InitialData {
        density: Profile::Constant { value: 1.0 },
        velocity: Profile::Step {
            left: 1.0,
            right: -1.0,
            at: 0.0,
            mid: 0.0,
        },
    }
}

pub fn colliding_beams_2d() -> InitialData2D {
    let b = colliding_beams();
    InitialData2D {
        density: [b.density, b.density],
        velocity: [b.velocity, b.velocity],
    }
}
