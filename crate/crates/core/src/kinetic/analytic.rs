//! Closed-form two-branch solution for colliding beams in the harmonic
//! potential `Phi = x^2 / 2` with `rho0 = 1` on the whole line and
//! `u0 = +1` for `x < 0`, `-1` for `x > 0`.
//!
//! Branch 1 starts at `v = +1`, branch 2 at `v = -1`. Branch 1 covers
//! `x < sin t`, branch 2 covers `x > -sin t`; both carry density `sec t`.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2};

use crate::error::{Error, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Pointwise evaluation of the two-branch solution at `(t, x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoBranchSolution {
    pub t: f64,
    pub x: f64,
    pub u1: f64,
    pub u2: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub branch1: bool,
    pub branch2: bool,
    pub m0: f64,
    pub m1: f64,
    pub m2: f64,
    /// Pointwise `d/dx m2`, ignoring the jumps at the fronts `x = +-sin t`.
    pub dm2: f64,
}

impl TwoBranchSolution {
    /// Both branches present.
    pub fn in_overlap(&self) -> bool {
        self.branch1 && self.branch2
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(0.0..FRAC_PI_2).contains(&t) {
        return Err(Error::OutsideAnalyticRange(t));
    }
    Ok(())
}

pub fn analytic_two_branch(t: f64, x: f64) -> Result<TwoBranchSolution> {
    check_time(t)?;
    let (s, c) = t.sin_cos();
    let (sec, tan) = (1.0 / c, s / c);
    let u1 = -x * tan + sec;
    let u2 = -x * tan - sec;
    let branch1 = x < s;
    let branch2 = x > -s;
    let (mut m0, mut m1, mut m2, mut dm2) = (0.0, 0.0, 0.0, 0.0);
    for (present, u) in [(branch1, u1), (branch2, u2)] {
        if present {
            m0 += sec;
            m1 += sec * u;
            m2 += sec * u * u;
            dm2 += -2.0 * sec * tan * u;
        }
    }
    Ok(TwoBranchSolution {
        t,
        x,
        u1,
        u2,
        rho1: sec,
        rho2: sec,
        branch1,
        branch2,
        m0,
        m1,
        m2,
        dm2,
    })
}

/// Overlap-region formulas (both branches present), smooth in `(t, x)`.
/// Returns `[m0, m1, m2, dm0/dt, dm1/dt, dm1/dx, dm2/dx]`.
pub fn overlap_moments(t: f64, x: f64) -> Result<[f64; 7]> {
    check_time(t)?;
    let (s, c) = t.sin_cos();
    let (sec, tan) = (1.0 / c, s / c);
    let m0 = 2.0 * sec;
    let m1 = -2.0 * x * tan * sec;
    let m2 = 2.0 * sec * (x * x * tan * tan + sec * sec);
    let dm0_dt = 2.0 * sec * tan;
    // d/dt (tan sec) = sec^3 + tan^2 sec
    let dm1_dt = -2.0 * x * (sec * sec * sec + tan * tan * sec);
    let dm1_dx = -2.0 * tan * sec;
    let dm2_dx = 4.0 * x * tan * tan * sec;
    Ok([m0, m1, m2, dm0_dt, dm1_dt, dm1_dx, dm2_dx])
}

/// The two-branch solution convolved with an untruncated Gaussian of standard
/// deviation `alpha` in both x and v, i.e. what kernel deposition of an exact
/// particle run converges to. Because the harmonic flow is a rotation of
/// phase space and the smoothing is isotropic, these moments solve the moment
/// system exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizedTwoBranch {
    pub alpha: f64,
}

/// Smoothed moments and their first x-derivatives at one point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SmoothedMoments {
    pub m0: f64,
    pub m1: f64,
    pub m2: f64,
    pub dm0: f64,
    pub dm1: f64,
    pub dm2: f64,
}

fn norm_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

fn norm_pdf(z: f64) -> f64 {
    if z.is_infinite() {
        0.0
    } else {
        INV_SQRT_2PI * (-0.5 * z * z).exp()
    }
}

impl RegularizedTwoBranch {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidKernel(format!(
                "smoothing length must be positive, got {alpha}"
            )));
        }
        Ok(Self { alpha })
    }

    pub fn eval(&self, t: f64, x: f64) -> Result<SmoothedMoments> {
        check_time(t)?;
        let a = self.alpha;
        let (s, c) = t.sin_cos();
        let (sec, tan) = (1.0 / c, s / c);
        let slope = -tan;
        let mut out = SmoothedMoments::default();
        // Substituting y = x - a z, branch 1 (y < sin t) is z > (x - sin t)/a
        // and branch 2 (y > -sin t) is z < (x + sin t)/a.
        let branches = [
            (sec, (x - s) / a, f64::INFINITY),
            (-sec, f64::NEG_INFINITY, (x + s) / a),
        ];
        for (offset, lo, hi) in branches {
            let u = slope * x + offset;
            let (pl, ph) = (norm_pdf(lo), norm_pdf(hi));
            let i0 = norm_cdf(hi) - norm_cdf(lo);
            let i1 = pl - ph;
            let lo_term = if lo.is_finite() { lo * pl } else { 0.0 };
            let hi_term = if hi.is_finite() { hi * ph } else { 0.0 };
            let i2 = i0 + lo_term - hi_term;
            // velocity at y = x - a z is u - slope a z
            let sa = slope * a;
            out.m0 += sec * i0;
            out.m1 += sec * (u * i0 - sa * i1);
            out.m2 += sec * ((u * u + a * a) * i0 - 2.0 * u * sa * i1 + sa * sa * i2);
            // interior part of d/dx
            out.dm1 += sec * slope * i0;
            out.dm2 += sec * 2.0 * slope * (u * i0 - sa * i1);
            // moving integration limits, both with d/dx = 1/a
            let g = |z: f64| -> [f64; 3] {
                let v = u - sa * z;
                [1.0, v, v * v + a * a]
            };
            let mut edge = [0.0; 3];
            if hi.is_finite() {
                let gv = g(hi);
                for k in 0..3 {
                    edge[k] += ph * gv[k];
                }
            }
            if lo.is_finite() {
                let gv = g(lo);
                for k in 0..3 {
                    edge[k] -= pl * gv[k];
                }
            }
            out.dm0 += sec * edge[0] / a;
            out.dm1 += sec * edge[1] / a;
            out.dm2 += sec * edge[2] / a;
        }
        Ok(out)
    }
}
