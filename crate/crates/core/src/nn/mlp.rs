use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tape::Tape;
use crate::error::{Error, Result};

/// Layer widths `[input, hidden.., output]`; tanh on hidden layers, identity
/// on the output layer.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct LayerShape {
    pub fan_in: usize,
    pub fan_out: usize,
    pub w: usize,
    pub b: usize,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, seed: u64) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "a network needs at least input and output widths, got {widths:?}"
            )));
        }
        if widths.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "layer widths must be >= 1, got {widths:?}"
            )));
        }
        Ok(Self { widths, seed })
    }

    /// `hidden_layers` tanh layers of equal `width`.
    pub fn uniform(
        n_in: usize,
        hidden_layers: usize,
        width: usize,
        n_out: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut widths = vec![n_in];
        widths.extend(std::iter::repeat(width).take(hidden_layers));
        widths.push(n_out);
        Self::new(widths, seed)
    }

    pub fn n_inputs(&self) -> usize {
        self.widths[0]
    }

    pub fn n_outputs(&self) -> usize {
        *self.widths.last().unwrap()
    }

    /// Number of affine layers.
    pub fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn n_params(&self) -> usize {
        self.widths.windows(2).map(|w| w[1] * (w[0] + 1)).sum()
    }

    pub(crate) fn layers(&self) -> Vec<LayerShape> {
        layer_shapes(&self.widths)
    }
}

pub(crate) fn layer_shapes(widths: &[usize]) -> Vec<LayerShape> {
    let mut off = 0;
    widths
        .windows(2)
        .map(|w| {
            let s = LayerShape {
                fan_in: w[0],
                fan_out: w[1],
                w: off,
                b: off + w[0] * w[1],
            };
            off += w[1] * (w[0] + 1);
            s
        })
        .collect()
}

/// Flat parameter vector: for each layer the `fan_out x fan_in` row-major
/// weight matrix followed by the bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParameters {
    widths: Vec<usize>,
    pub values: Vec<f64>,
}

impl MlpParameters {
    pub fn zeros(spec: &MlpSpec) -> Self {
        Self {
            widths: spec.widths.clone(),
            values: vec![0.0; spec.n_params()],
        }
    }

    pub fn from_values(spec: &MlpSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.n_params() {
            return Err(Error::DimensionMismatch {
                expected: spec.n_params(),
                got: values.len(),
                context: "parameter vector vs network spec",
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "parameter {i} is not finite"
            )));
        }
        Ok(Self {
            widths: spec.widths.clone(),
            values,
        })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn n_inputs(&self) -> usize {
        self.widths[0]
    }

    pub fn n_outputs(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub(crate) fn layers(&self) -> Vec<LayerShape> {
        layer_shapes(&self.widths)
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        let s = self.layers()[layer];
        &self.values[s.w..s.b]
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        let s = self.layers()[layer];
        &self.values[s.b..s.b + s.fan_out]
    }

    pub fn weights_mut(&mut self, layer: usize) -> &mut [f64] {
        let s = self.layers()[layer];
        &mut self.values[s.w..s.b]
    }

    pub fn bias_mut(&mut self, layer: usize) -> &mut [f64] {
        let s = self.layers()[layer];
        &mut self.values[s.b..s.b + s.fan_out]
    }
}

/// Uniform weights on `+-sqrt(6 / (fan_in + fan_out))`, zero biases.
pub fn init_xavier(spec: &MlpSpec) -> MlpParameters {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut p = MlpParameters::zeros(spec);
    for s in spec.layers() {
        let bound = (6.0 / (s.fan_in + s.fan_out) as f64).sqrt();
        for w in &mut p.values[s.w..s.b] {
            *w = rng.random_range(-bound..bound);
        }
    }
    p
}

/// Parameter gradient and, when requested, the input Jacobian
/// (`n_out x n_in`, row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub params: Vec<f64>,
    pub input_jacobian: Option<Vec<f64>>,
}

/// Branch-free `tanh` built on a polynomial `expm1`; vectorizes and agrees
/// with the libm routine to a few ulp.
#[inline(always)]
pub fn tanh(x: f64) -> f64 {
    const MAGIC: f64 = 6755399441055744.0;
    const LN2_HI: f64 = 6.931_471_803_691_238e-1;
    const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
    let ax = x.abs();
    let ax = if ax > 20.0 { 20.0 } else { ax };
    let y = -2.0 * ax;
    // y = k ln2 + r, |r| <= ln2 / 2
    let t = y * std::f64::consts::LOG2_E + MAGIC;
    let k = t - MAGIC;
    let r = (y - k * LN2_HI) - k * LN2_LO;
    let mut p = 1.0 / 6_227_020_800.0;
    for c in [
        1.0 / 479_001_600.0,
        1.0 / 39_916_800.0,
        1.0 / 3_628_800.0,
        1.0 / 362_880.0,
        1.0 / 40_320.0,
        1.0 / 5_040.0,
        1.0 / 720.0,
        1.0 / 120.0,
        1.0 / 24.0,
        1.0 / 6.0,
        0.5,
        1.0,
    ] {
        p = p * r + c;
    }
    let em1_r = p * r;
    let scale = f64::from_bits(t.to_bits().wrapping_add(1023) << 52);
    let em1 = scale * em1_r + (scale - 1.0);
    (-em1 / (em1 + 2.0)).copysign(x)
}

/// `tanh` applied elementwise.
pub(crate) fn tanh_in_place(v: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    if std::is_x86_feature_detected!("avx2") {
        // SAFETY: the required CPU feature was detected at runtime.
        unsafe { tanh_in_place_avx2(v) };
        return;
    }
    tanh_in_place_generic(v);
}

#[inline(always)]
fn tanh_in_place_generic(v: &mut [f64]) {
    for x in v.iter_mut() {
        *x = tanh(*x);
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn tanh_in_place_avx2(v: &mut [f64]) {
    tanh_in_place_generic(v)
}

pub fn forward(params: &MlpParameters, input: &[f64]) -> Result<Vec<f64>> {
    check_input(params, input)?;
    let mut tape = Tape::new();
    tape.forward(params, input, &[])?;
    Ok(tape.value().to_vec())
}

/// Gradient of `upstream . forward(params, input)` with respect to the
/// parameters.
pub fn backward(params: &MlpParameters, input: &[f64], upstream: &[f64]) -> Result<GradientBundle> {
    check_input(params, input)?;
    if upstream.len() != params.n_outputs() {
        return Err(Error::DimensionMismatch {
            expected: params.n_outputs(),
            got: upstream.len(),
            context: "upstream gradient vs network output",
        });
    }
    let mut tape = Tape::new();
    tape.forward(params, input, &[])?;
    let mut grad = vec![0.0; params.len()];
    tape.backward(params, upstream, &mut grad)?;
    Ok(GradientBundle {
        params: grad,
        input_jacobian: None,
    })
}

/// Exact `d output_i / d input_j` by forward-mode tangents.
pub fn input_jacobian(params: &MlpParameters, input: &[f64]) -> Result<Vec<f64>> {
    check_input(params, input)?;
    let (n_in, n_out) = (params.n_inputs(), params.n_outputs());
    let dirs: Vec<usize> = (0..n_in).collect();
    let mut tape = Tape::new();
    tape.forward(params, input, &dirs)?;
    let mut jac = vec![0.0; n_out * n_in];
    for j in 0..n_in {
        for (i, d) in tape.tangent(j).iter().enumerate() {
            jac[i * n_in + j] = *d;
        }
    }
    Ok(jac)
}

fn check_input(params: &MlpParameters, input: &[f64]) -> Result<()> {
    if input.len() != params.n_inputs() {
        return Err(Error::DimensionMismatch {
            expected: params.n_inputs(),
            got: input.len(),
            context: "network input",
        });
    }
    Ok(())
}
