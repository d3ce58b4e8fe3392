//! Residuals of the closed moment system.
//!
//! Every residual is affine in the networks' values and first derivatives:
//! `r_e = forcing_e + sum coef * stream`, so one table drives both pointwise
//! evaluation and the batched loss gradient.

use serde::{Deserialize, Serialize};

use super::model::MomentSurrogate;
use crate::error::{Error, Result};
use crate::kinetic::Potential;

/// Force term of the two momentum equations in 2D.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForceForm {
    /// `+ Phi_x1 m0` and `+ Phi_x2 m0`, from integrating the kinetic equation.
    #[default]
    Derived,
    /// `+ Phi_x1 m11` and `- Phi_x2 m12`.
    Printed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Coef {
    One,
    /// `sign * d Phi / d x_axis` at the point.
    Force { axis: usize, sign: f64 },
}

/// `coef * stream` of network `net`; stream 0 is the value, `a + 1` the
/// derivative along input `a` (`t`, then `x_i`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Term {
    pub eq: usize,
    pub net: usize,
    pub stream: usize,
    pub coef: Coef,
}

const fn term(eq: usize, net: usize, stream: usize, coef: Coef) -> Term {
    Term { eq, net, stream, coef }
}

/// Equations and their terms for `dim` space dimensions. Nets are
/// `[m0, m1]` in 1D and `[m0, m11, m12]` in 2D.
pub(crate) fn system_terms(dim: usize, form: ForceForm) -> Vec<Term> {
    use Coef::*;
    match dim {
        1 => vec![
            term(0, 0, 1, One),
            term(0, 1, 2, One),
            term(1, 1, 1, One),
            term(1, 0, 0, Force { axis: 0, sign: 1.0 }),
        ],
        _ => {
            let mut t = vec![
                term(0, 0, 1, One),
                term(0, 1, 2, One),
                term(0, 2, 3, One),
                term(1, 1, 1, One),
                term(2, 2, 1, One),
            ];
            match form {
                ForceForm::Derived => {
                    t.push(term(1, 0, 0, Force { axis: 0, sign: 1.0 }));
                    t.push(term(2, 0, 0, Force { axis: 1, sign: 1.0 }));
                }
                ForceForm::Printed => {
                    t.push(term(1, 1, 0, Force { axis: 0, sign: 1.0 }));
                    t.push(term(2, 2, 0, Force { axis: 1, sign: -1.0 }));
                }
            }
            t
        }
    }
}

pub(crate) fn coef_value(c: Coef, grad_phi: &[f64]) -> f64 {
    match c {
        Coef::One => 1.0,
        Coef::Force { axis, sign } => sign * grad_phi[axis],
    }
}

/// Residuals at one point from per-moment jets and the per-equation forcing
/// (zero for the continuity equation).
pub(crate) fn residual_from_jets(terms: &[Term], jets: &[Vec<f64>], grad_phi: &[f64], forcing: &[f64]) -> Vec<f64> {
    let mut r = forcing.to_vec();
    for t in terms {
        r[t.eq] += coef_value(t.coef, grad_phi) * jets[t.net][t.stream];
    }
    r
}

fn jets_at(model: &impl MomentSurrogate, t: f64, x: &[f64]) -> Result<Vec<Vec<f64>>> {
    (0..model.n_moments()).map(|k| model.jet(k, t, x)).collect()
}

/// `(r1, r2)` with `r1 = dt m0 + dx m1` and
/// `r2 = dt m1 + closure + m0 dPhi/dx`.
pub fn residual_1d<M, C>(model: &M, closure: C, t: f64, x: f64, pot: &Potential) -> Result<[f64; 2]>
where
    M: MomentSurrogate,
    C: Fn(f64, f64) -> Result<f64>,
{
    if model.dim() != 1 || model.n_moments() != 2 {
        return Err(Error::SpecMismatch("1D residual needs two 1D moment models".into()));
    }
    let c = closure(t, x)?;
    let jets = jets_at(model, t, &[x])?;
    let g = [pot.partial(&[x], 0)];
    let r = residual_from_jets(&system_terms(1, ForceForm::Derived), &jets, &g, &[0.0, c]);
    Ok([r[0], r[1]])
}

/// `(r1, r2, r3)` of the 2D system. `closure` returns
/// `[dx1 m21, dx2 m22]` and `cross` returns `[dx1 m_cross, dx2 m_cross]`.
pub fn residual_2d<M, C, X>(
    model: &M,
    closure: C,
    cross: X,
    t: f64,
    x: [f64; 2],
    pot: &Potential,
    form: ForceForm,
) -> Result<[f64; 3]>
where
    M: MomentSurrogate,
    C: Fn(f64, f64, f64) -> Result<[f64; 2]>,
    X: Fn(f64, f64, f64) -> Result<[f64; 2]>,
{
    if model.dim() != 2 || model.n_moments() != 3 {
        return Err(Error::SpecMismatch("2D residual needs three 2D moment models".into()));
    }
    let c = closure(t, x[0], x[1])?;
    let k = cross(t, x[0], x[1])?;
    let jets = jets_at(model, t, &x)?;
    let g = [pot.partial(&x, 0), pot.partial(&x, 1)];
    let r = residual_from_jets(&system_terms(2, form), &jets, &g, &[0.0, c[0] + k[1], c[1] + k[0]]);
    Ok([r[0], r[1], r[2]])
}
