//! Moment networks over a space-time box, with inputs mapped to `[-1, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{init_xavier, input_jacobian, MlpParameters, MlpSpec, Tape};

/// `[0, T] x prod [lower_i, upper_i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeBox {
    pub t_final: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl SpaceTimeBox {
    pub fn new(t_final: f64, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(Error::InvalidArgument(format!("horizon must be positive, got {t_final}")));
        }
        if lower.is_empty() || lower.len() != upper.len() || lower.len() > 2 {
            return Err(Error::InvalidArgument("space box must have 1 or 2 matching axes".into()));
        }
        if lower.iter().zip(&upper).any(|(a, b)| !(b > a)) {
            return Err(Error::InvalidGrid("space box has an empty axis".into()));
        }
        Ok(Self { t_final, lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Network input width, `1 + dim`.
    pub fn n_inputs(&self) -> usize {
        1 + self.dim()
    }

    /// `d(unit input)/d(physical coordinate)` for `t, x_1, ...`.
    pub fn scales(&self) -> Vec<f64> {
        std::iter::once(2.0 / self.t_final)
            .chain(self.lower.iter().zip(&self.upper).map(|(a, b)| 2.0 / (b - a)))
            .collect()
    }

    /// Map physical `(t, x...)` rows to unit inputs.
    pub fn to_unit(&self, points: &[f64]) -> Vec<f64> {
        let n_in = self.n_inputs();
        let mut out = Vec::with_capacity(points.len());
        for p in points.chunks_exact(n_in) {
            out.push(2.0 * p[0] / self.t_final - 1.0);
            for i in 0..self.dim() {
                let (a, b) = (self.lower[i], self.upper[i]);
                out.push(2.0 * (p[1 + i] - a) / (b - a) - 1.0);
            }
        }
        out
    }
}

/// Anything that yields moment values and first derivatives at a point.
pub trait MomentSurrogate {
    fn n_moments(&self) -> usize;
    fn dim(&self) -> usize;
    /// Value of moment `k` followed by its `t` and `x_i` derivatives.
    fn jet(&self, k: usize, t: f64, x: &[f64]) -> Result<Vec<f64>>;
}

/// One scalar network per retained moment.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage2Nets {
    pub domain: SpaceTimeBox,
    pub spec: MlpSpec,
    pub nets: Vec<MlpParameters>,
}

/// Values and physical derivatives of every network at a batch of points.
#[derive(Debug, Clone, PartialEq)]
pub struct NetOutputs {
    pub n_points: usize,
    /// `values[k][p]`.
    pub values: Vec<Vec<f64>>,
    /// `derivs[k][a][p]` with `a = 0` for `t`, `a = i + 1` for `x_i`.
    pub derivs: Vec<Vec<Vec<f64>>>,
}

impl Stage2Nets {
    /// Fresh Xavier networks; network `k` uses seed `spec.seed + k`.
    pub fn init(domain: SpaceTimeBox, spec: &MlpSpec, n_moments: usize) -> Result<Self> {
        Self::check_spec(&domain, spec)?;
        let nets = (0..n_moments)
            .map(|k| {
                init_xavier(&MlpSpec {
                    seed: spec.seed.wrapping_add(k as u64),
                    ..spec.clone()
                })
            })
            .collect();
        Ok(Self {
            domain,
            spec: spec.clone(),
            nets,
        })
    }

    pub fn from_parts(domain: SpaceTimeBox, spec: MlpSpec, nets: Vec<MlpParameters>) -> Result<Self> {
        Self::check_spec(&domain, &spec)?;
        if nets.iter().any(|n| n.widths() != spec.widths.as_slice()) {
            return Err(Error::SpecMismatch("network shapes differ from the spec".into()));
        }
        Ok(Self { domain, spec, nets })
    }

    fn check_spec(domain: &SpaceTimeBox, spec: &MlpSpec) -> Result<()> {
        if spec.n_inputs() != domain.n_inputs() || spec.n_outputs() != 1 {
            return Err(Error::SpecMismatch(format!(
                "moment networks need {} inputs and 1 output, spec has {} and {}",
                domain.n_inputs(),
                spec.n_inputs(),
                spec.n_outputs()
            )));
        }
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        self.nets.iter().map(|n| n.len()).sum()
    }

    /// Values only, `n_points x n_moments`.
    pub fn predict(&self, points: &[f64]) -> Result<Vec<f64>> {
        let z = self.unit_inputs(points)?;
        let n = z.len() / self.domain.n_inputs();
        let nm = self.nets.len();
        let mut out = vec![0.0; n * nm];
        let mut tape = Tape::new();
        for (k, net) in self.nets.iter().enumerate() {
            tape.forward(net, &z, &[])?;
            for (p, v) in tape.value().iter().enumerate() {
                out[p * nm + k] = *v;
            }
        }
        Ok(out)
    }

    /// Values and all first derivatives at `(t, x...)` rows.
    pub fn evaluate(&self, points: &[f64]) -> Result<NetOutputs> {
        let z = self.unit_inputs(points)?;
        let n_in = self.domain.n_inputs();
        let n = z.len() / n_in;
        let scales = self.domain.scales();
        let dirs: Vec<usize> = (0..n_in).collect();
        let mut tape = Tape::new();
        let mut values = Vec::new();
        let mut derivs = Vec::new();
        for net in &self.nets {
            tape.forward(net, &z, &dirs)?;
            values.push(tape.value().to_vec());
            derivs.push(
                (0..n_in)
                    .map(|a| tape.tangent(a).iter().map(|d| d * scales[a]).collect())
                    .collect(),
            );
        }
        Ok(NetOutputs {
            n_points: n,
            values,
            derivs,
        })
    }

    fn unit_inputs(&self, points: &[f64]) -> Result<Vec<f64>> {
        let n_in = self.domain.n_inputs();
        if points.len() % n_in != 0 {
            return Err(Error::DimensionMismatch {
                expected: n_in,
                got: points.len() % n_in,
                context: "point list is not a multiple of 1 + dim",
            });
        }
        Ok(self.domain.to_unit(points))
    }
}

impl MomentSurrogate for Stage2Nets {
    fn n_moments(&self) -> usize {
        self.nets.len()
    }

    fn dim(&self) -> usize {
        self.domain.dim()
    }

    fn jet(&self, k: usize, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        let net = self
            .nets
            .get(k)
            .ok_or_else(|| Error::InvalidArgument(format!("no moment network {k}")))?;
        let mut p = vec![t];
        p.extend_from_slice(x);
        let z = self.unit_inputs(&p)?;
        let value = crate::nn::forward(net, &z)?[0];
        let jac = input_jacobian(net, &z)?;
        let scales = self.domain.scales();
        Ok(std::iter::once(value)
            .chain(jac.iter().zip(&scales).map(|(d, s)| d * s))
            .collect())
    }
}
