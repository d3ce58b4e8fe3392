//! Batched evaluation with forward-mode input tangents and a reverse sweep
//! through both the value and the tangent streams.
//!
//! For a batch of `B` points and `T` tangent directions every layer works on
//! a stacked `(1 + T) B x width` block: the first `B` rows are values, then
//! one `B`-row block per direction. One product per layer serves all streams.

use super::linalg::{acc_atb, mul_ab, mul_abt};
use super::mlp::{tanh_in_place, LayerShape, MlpParameters};
use crate::error::{Error, Result};

#[derive(Debug, Default, Clone)]
pub struct Tape {
    batch: usize,
    dirs: Vec<usize>,
    layers: Vec<LayerShape>,
    // inputs[0] is the raw batch; inputs[l], l >= 1, the stacked block fed to layer l
    inputs: Vec<Vec<f64>>,
    // tangent pre-activations of hidden layers
    zt: Vec<Vec<f64>>,
    output: Vec<f64>,
    abar: Vec<f64>,
    zbar: Vec<f64>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn n_tangents(&self) -> usize {
        self.dirs.len()
    }

    fn n_out(&self) -> usize {
        self.layers.last().map_or(0, |s| s.fan_out)
    }

    /// Network outputs, `B x n_out`.
    pub fn value(&self) -> &[f64] {
        &self.output[..self.batch * self.n_out()]
    }

    /// Derivatives of the outputs along input direction `dirs[j]`, `B x n_out`.
    pub fn tangent(&self, j: usize) -> &[f64] {
        let n = self.batch * self.n_out();
        &self.output[(1 + j) * n..(2 + j) * n]
    }

    /// Evaluate `inputs` (`B x n_in`, row-major) together with the
    /// derivatives along the unit input directions listed in `dirs`.
    pub fn forward(&mut self, params: &MlpParameters, inputs: &[f64], dirs: &[usize]) -> Result<()> {
        let n_in = params.n_inputs();
        if inputs.len() % n_in != 0 {
            return Err(Error::DimensionMismatch {
                expected: n_in,
                got: inputs.len() % n_in,
                context: "batch length is not a multiple of the input width",
            });
        }
        if let Some(d) = dirs.iter().find(|d| **d >= n_in) {
            return Err(Error::InvalidArgument(format!(
                "tangent direction {d} out of range for {n_in} inputs"
            )));
        }
        let b = inputs.len() / n_in;
        let t = dirs.len();
        let rows = (1 + t) * b;
        self.batch = b;
        self.dirs.clear();
        self.dirs.extend_from_slice(dirs);
        self.layers = params.layers();
        let n_layers = self.layers.len();
        self.inputs.resize_with(n_layers, Vec::new);
        self.zt.resize_with(n_layers, Vec::new);
        self.inputs[0].clear();
        self.inputs[0].extend_from_slice(inputs);

        for l in 0..n_layers {
            let s = self.layers[l];
            let w = &params.values[s.w..s.b];
            let bias = &params.values[s.b..s.b + s.fan_out];
            let mut z = std::mem::take(if l + 1 < n_layers {
                &mut self.inputs[l + 1]
            } else {
                &mut self.output
            });
            z.resize(rows * s.fan_out, 0.0);
            if l == 0 {
                mul_abt(b, s.fan_in, s.fan_out, &self.inputs[0], w, 0.0, &mut z);
                for (j, &d) in self.dirs.iter().enumerate() {
                    let block = &mut z[(1 + j) * b * s.fan_out..(2 + j) * b * s.fan_out];
                    for row in block.chunks_exact_mut(s.fan_out) {
                        for (o, v) in row.iter_mut().enumerate() {
                            *v = w[o * s.fan_in + d];
                        }
                    }
                }
            } else {
                mul_abt(rows, s.fan_in, s.fan_out, &self.inputs[l], w, 0.0, &mut z);
            }
            for row in z[..b * s.fan_out].chunks_exact_mut(s.fan_out) {
                for (v, bb) in row.iter_mut().zip(bias) {
                    *v += bb;
                }
            }
            if l + 1 < n_layers {
                let n = b * s.fan_out;
                let zt = &mut self.zt[l];
                zt.clear();
                zt.extend_from_slice(&z[n..]);
                let (val, tan) = z.split_at_mut(n);
                tanh_in_place(val);
                for block in tan.chunks_exact_mut(n) {
                    for (d, a) in block.iter_mut().zip(val.iter()) {
                        *d *= 1.0 - a * a;
                    }
                }
                self.inputs[l + 1] = z;
            } else {
                self.output = z;
            }
        }
        Ok(())
    }

    /// Accumulate into `grad` the parameter gradient of
    /// `sum(out_bar * stacked_output)`, where `out_bar` is laid out like the
    /// stacked output (values, then one block per tangent direction).
    pub fn backward(&mut self, params: &MlpParameters, out_bar: &[f64], grad: &mut [f64]) -> Result<()> {
        let n_layers = self.layers.len();
        if n_layers == 0 {
            return Err(Error::InvalidArgument("backward called before forward".into()));
        }
        let b = self.batch;
        let t = self.dirs.len();
        let rows = (1 + t) * b;
        let n_out = self.n_out();
        if out_bar.len() != rows * n_out {
            return Err(Error::DimensionMismatch {
                expected: rows * n_out,
                got: out_bar.len(),
                context: "output adjoint vs stacked tape output",
            });
        }
        if grad.len() != params.len() {
            return Err(Error::DimensionMismatch {
                expected: params.len(),
                got: grad.len(),
                context: "gradient buffer vs parameters",
            });
        }
        let mut abar = std::mem::take(&mut self.abar);
        let mut zbar = std::mem::take(&mut self.zbar);
        abar.clear();
        abar.extend_from_slice(out_bar);

        for l in (0..n_layers).rev() {
            let s = self.layers[l];
            let n = b * s.fan_out;
            if l + 1 < n_layers {
                // abar holds the adjoint of this layer's activations; turn it
                // into the adjoint of the pre-activations in place.
                let act = &self.inputs[l + 1][..n];
                let zt = &self.zt[l];
                let (val, tan) = abar.split_at_mut(n);
                for i in 0..n {
                    let a = act[i];
                    let sd = 1.0 - a * a;
                    let mut sbar = 0.0;
                    for j in 0..t {
                        let k = j * n + i;
                        sbar += tan[k] * zt[k];
                        tan[k] *= sd;
                    }
                    val[i] = sd * (val[i] - 2.0 * a * sbar);
                }
            }
            std::mem::swap(&mut abar, &mut zbar);
            let (gw, rest) = grad[s.w..].split_at_mut(s.b - s.w);
            let gb = &mut rest[..s.fan_out];
            if l == 0 {
                acc_atb(b, s.fan_out, s.fan_in, &zbar[..n], &self.inputs[0], gw);
                for (j, &d) in self.dirs.iter().enumerate() {
                    for row in zbar[(1 + j) * n..(2 + j) * n].chunks_exact(s.fan_out) {
                        for (o, v) in row.iter().enumerate() {
                            gw[o * s.fan_in + d] += v;
                        }
                    }
                }
            } else {
                acc_atb(rows, s.fan_out, s.fan_in, &zbar, &self.inputs[l], gw);
            }
            for row in zbar[..n].chunks_exact(s.fan_out) {
                for (g, v) in gb.iter_mut().zip(row) {
                    *g += v;
                }
            }
            if l > 0 {
                let w = &params.values[s.w..s.b];
                abar.resize(rows * s.fan_in, 0.0);
                mul_ab(rows, s.fan_out, s.fan_in, &zbar, w, &mut abar);
            }
        }
        self.abar = abar;
        self.zbar = zbar;
        Ok(())
    }
}
