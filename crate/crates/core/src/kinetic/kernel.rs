//! Shape functions that regularise particle Dirac masses.
//!
//! A kernel is `phi_alpha(z) = phi(z / alpha) / alpha` for a nonnegative, even,
//! unit-mass profile `phi` with compact support.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelKind {
    /// Standard normal profile cut at `truncation` standard deviations and
    /// renormalised to unit mass.
    Gaussian { truncation: f64 },
    /// Centred cardinal B-spline of the given degree (support `degree + 1`).
    BSpline { degree: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeKernel {
    kind: KernelKind,
    alpha: f64,
    /// Unit-scale even moments `E[Z^k]` for k = 0..=12 (odd entries are zero).
    moments: [f64; 13],
    norm: f64,
}

impl ShapeKernel {
    pub fn gaussian(alpha: f64, truncation: f64) -> Result<Self> {
        if !(truncation.is_finite() && truncation >= 1.0) {
            return Err(Error::InvalidKernel(format!(
                "gaussian truncation must be >= 1 standard deviation, got {truncation}"
            )));
        }
        Self::build(KernelKind::Gaussian { truncation }, alpha)
    }

    pub fn b_spline(alpha: f64, degree: u32) -> Result<Self> {
        if !(1..=7).contains(&degree) {
            return Err(Error::InvalidKernel(format!(
                "B-spline degree must be in 1..=7, got {degree}"
            )));
        }
        Self::build(KernelKind::BSpline { degree }, alpha)
    }

    pub fn new(kind: KernelKind, alpha: f64) -> Result<Self> {
        match kind {
            KernelKind::Gaussian { truncation } => Self::gaussian(alpha, truncation),
            KernelKind::BSpline { degree } => Self::b_spline(alpha, degree),
        }
    }

    fn build(kind: KernelKind, alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidKernel(format!(
                "smoothing length must be positive, got {alpha}"
            )));
        }
        let (moments, norm) = match kind {
            KernelKind::Gaussian { truncation } => gaussian_moments(truncation),
            KernelKind::BSpline { degree } => (bspline_moments(degree), 1.0),
        };
        Ok(Self {
            kind,
            alpha,
            moments,
            norm,
        })
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Support radius in physical units.
    pub fn radius(&self) -> f64 {
        self.alpha * self.unit_radius()
    }

    fn unit_radius(&self) -> f64 {
        match self.kind {
            KernelKind::Gaussian { truncation } => truncation,
            KernelKind::BSpline { degree } => 0.5 * (degree as f64 + 1.0),
        }
    }

    /// Unit-scale profile `phi(s)`.
    pub fn profile(&self, s: f64) -> f64 {
        match self.kind {
            KernelKind::Gaussian { truncation } => {
                if s.abs() > truncation {
                    0.0
                } else {
                    INV_SQRT_2PI * (-0.5 * s * s).exp() / self.norm
                }
            }
            KernelKind::BSpline { degree } => cardinal_bspline(degree, s),
        }
    }

    /// `phi_alpha(z)`.
    pub fn eval(&self, z: f64) -> f64 {
        self.profile(z / self.alpha) / self.alpha
    }

    /// `E[(alpha Z)^k]` for the scaled kernel, k <= 12.
    pub fn scaled_moment(&self, k: usize) -> f64 {
        self.moments[k] * self.alpha.powi(k as i32)
    }

    /// Velocity moments `E[(v + alpha Z)^l]`, l = 0..=max_order, of a particle
    /// with velocity `v` smeared by this kernel.
    pub fn smeared_powers(&self, v: f64, max_order: usize, out: &mut [f64]) {
        let mut vpow = [0.0f64; 13];
        vpow[0] = 1.0;
        for i in 1..=max_order {
            vpow[i] = vpow[i - 1] * v;
        }
        for (l, slot) in out.iter_mut().enumerate().take(max_order + 1) {
            let mut acc = 0.0;
            let mut binom = 1.0;
            for i in 0..=l {
                if i > 0 {
                    binom = binom * (l - i + 1) as f64 / i as f64;
                }
                if i % 2 == 0 {
                    acc += binom * vpow[l - i] * self.scaled_moment(i);
                }
            }
            *slot = acc;
        }
    }
}

fn gaussian_moments(c: f64) -> ([f64; 13], f64) {
    let p = libm::erf(c / std::f64::consts::SQRT_2);
    let edge = INV_SQRT_2PI * (-0.5 * c * c).exp();
    let mut m = [0.0; 13];
    m[0] = 1.0;
    for k in (2..=12).step_by(2) {
        m[k] = (k as f64 - 1.0) * m[k - 2] - 2.0 * c.powi(k as i32 - 1) * edge / p;
    }
    (m, p)
}

/// Moments of a sum of `degree + 1` iid U(-1/2, 1/2) variables, which is the
/// distribution whose density is the centred cardinal B-spline.
fn bspline_moments(degree: u32) -> [f64; 13] {
    let mut uniform = [0.0; 13];
    for (i, u) in uniform.iter_mut().enumerate() {
        if i % 2 == 0 {
            *u = 0.5f64.powi(i as i32) / (i as f64 + 1.0);
        }
    }
    let mut acc = uniform;
    for _ in 0..degree {
        let mut next = [0.0; 13];
        for (k, slot) in next.iter_mut().enumerate() {
            let mut binom = 1.0;
            let mut s = 0.0;
            for i in 0..=k {
                if i > 0 {
                    binom = binom * (k - i + 1) as f64 / i as f64;
                }
                s += binom * acc[i] * uniform[k - i];
            }
            *slot = s;
        }
        acc = next;
    }
    acc
}

fn cardinal_bspline(degree: u32, s: f64) -> f64 {
    let p = degree as i32;
    let half = 0.5 * (p as f64 + 1.0);
    if s.abs() >= half {
        return 0.0;
    }
    // evaluate on the left half: fewer alternating terms and exact evenness
    let s = -s.abs();
    let mut fact = 1.0;
    for i in 2..=p {
        fact *= i as f64;
    }
    let mut sum = 0.0;
    let mut binom = 1.0;
    for k in 0..=(p + 1) {
        if k > 0 {
            binom = binom * (p + 2 - k) as f64 / k as f64;
        }
        let arg = s + half - k as f64;
        if arg > 0.0 {
            let term = binom * arg.powi(p);
            if k % 2 == 0 {
                sum += term;
            } else {
                sum -= term;
            }
        }
    }
    (sum / fact).max(0.0)
}
