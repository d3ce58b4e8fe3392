use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinetic::{Moment2D, MomentField1D, MomentField2D};
use crate::nn::MlpSpec;

/// One of the four closure signatures, in one or two space dimensions.
///
/// | id | network input                 | output                               |
/// |----|-------------------------------|--------------------------------------|
/// | 1  | moments and first derivatives | closing value                        |
/// | 2  | first derivatives             | closing value                        |
/// | 3  | moments                       | coefficients on the derivatives      |
/// | 4  | moments and first derivatives | coefficients on the same features    |
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClosureScheme {
    pub id: u8,
    pub dim: usize,
}

impl ClosureScheme {
    pub fn new(id: u8, dim: usize) -> Result<Self> {
        if !(1..=4).contains(&id) {
            return Err(Error::InvalidArgument(format!("scheme id must be 1..=4, got {id}")));
        }
        if !(dim == 1 || dim == 2) {
            return Err(Error::InvalidArgument(format!("scheme dimension must be 1 or 2, got {dim}")));
        }
        Ok(Self { id, dim })
    }

    pub fn name(&self) -> String {
        format!("scheme{}-{}d", self.id, self.dim)
    }

    /// Closing quantities predicted: `d/dx m2` in 1D; `d/dx1 m21`, `d/dx2 m22` in 2D.
    pub fn n_targets(&self) -> usize {
        self.dim
    }

    fn n_moments(&self) -> usize {
        if self.dim == 1 {
            2
        } else {
            3
        }
    }

    fn n_derivatives(&self) -> usize {
        if self.dim == 1 {
            2
        } else {
            6
        }
    }

    /// Width of each network's input.
    pub fn n_net_inputs(&self) -> usize {
        match self.id {
            1 | 4 => self.n_moments() + self.n_derivatives(),
            2 => self.n_derivatives(),
            _ => self.n_moments(),
        }
    }

    /// Number of features the network output multiplies (0 for direct maps).
    pub fn n_combo(&self) -> usize {
        match self.id {
            3 => self.n_derivatives(),
            4 => self.n_moments() + self.n_derivatives(),
            _ => 0,
        }
    }

    pub fn is_linear(&self) -> bool {
        self.n_combo() > 0
    }

    /// Width of each network's output.
    pub fn n_net_outputs(&self) -> usize {
        self.n_combo().max(1)
    }

    /// Network spec with `hidden_layers` tanh layers of `width` and this
    /// scheme's input/output widths.
    pub fn mlp_spec(&self, hidden_layers: usize, width: usize, seed: u64) -> Result<MlpSpec> {
        MlpSpec::uniform(self.n_net_inputs(), hidden_layers, width, self.n_net_outputs(), seed)
    }

    pub fn check_spec(&self, spec: &MlpSpec) -> Result<()> {
        if spec.n_inputs() != self.n_net_inputs() {
            return Err(Error::SchemeArity {
                scheme: self.name(),
                expected: self.n_net_inputs(),
                got: spec.n_inputs(),
            });
        }
        if spec.n_outputs() != self.n_net_outputs() {
            return Err(Error::SchemeArity {
                scheme: self.name(),
                expected: self.n_net_outputs(),
                got: spec.n_outputs(),
            });
        }
        Ok(())
    }

    /// Split a full per-cell feature vector, ordered as
    /// `moments ++ derivatives` (1D: `m0, m1, dm0, dm1`; 2D: `m0, d1m0, d2m0,
    /// m11, d1m11, d2m11, m12, d1m12, d2m12`), into network input and
    /// combination features.
    pub fn split_features(&self, full: &[f64], net: &mut Vec<f64>, combo: &mut Vec<f64>) -> Result<()> {
        let n_full = self.n_moments() + self.n_derivatives();
        if full.len() != n_full {
            return Err(Error::SchemeArity {
                scheme: self.name(),
                expected: n_full,
                got: full.len(),
            });
        }
        let moments: Vec<f64>;
        let derivs: Vec<f64>;
        if self.dim == 1 {
            moments = full[..2].to_vec();
            derivs = full[2..].to_vec();
        } else {
            moments = vec![full[0], full[3], full[6]];
            derivs = vec![full[1], full[2], full[4], full[5], full[7], full[8]];
        }
        match self.id {
            1 => net.extend_from_slice(full),
            2 => net.extend_from_slice(&derivs),
            3 => {
                net.extend_from_slice(&moments);
                combo.extend_from_slice(&derivs);
            }
            _ => {
                net.extend_from_slice(full);
                combo.extend_from_slice(full);
            }
        }
        Ok(())
    }

    pub(crate) fn full_features_1d(field: &MomentField1D, j: usize) -> Result<[f64; 4]> {
        Ok([field.m(0)?[j], field.m(1)?[j], field.dm(0)?[j], field.dm(1)?[j]])
    }

    pub(crate) fn full_features_2d(field: &MomentField2D, idx: usize) -> [f64; 9] {
        let mut out = [0.0; 9];
        for (k, q) in [Moment2D::M0, Moment2D::M11, Moment2D::M12].into_iter().enumerate() {
            out[3 * k] = field.value(q)[idx];
            out[3 * k + 1] = field.partial(q, 0)[idx];
            out[3 * k + 2] = field.partial(q, 1)[idx];
        }
        out
    }
}
