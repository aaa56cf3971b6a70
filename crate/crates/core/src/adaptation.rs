//! Domain-adaptation head: a sigmoid selection gate over the input features
//! and an affine remap of the core formant outputs plus a gated additive
//! correction. With identity initialization the adapted network is exactly
//! the core network.

use crate::error::{Error, Result};
use crate::features::FEATURE_DIM;
use crate::nn::CoreModel;

/// Sigmoid inputs are clamped here before exponentiation; the derivative uses
/// the unclamped algebraic form s(1-s).
const GATE_CLAMP: f64 = 500.0;

/// Parameters of the adaptation head.
///
/// `gate_weights`/`gate_bias` feed the selection gate; `mix` (4x4) and `bias`
/// remap the core outputs; `gate_gain` scales the gate's additive correction
/// per formant.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptationLayer {
    pub gate_weights: Vec<f64>,
    pub gate_bias: f64,
    pub mix: [[f64; 4]; 4],
    pub bias: [f64; 4],
    pub gate_gain: [f64; 4],
}

/// Gradients of the adapter parameters plus the gradient passed back to the
/// core outputs.
#[derive(Debug, Clone)]
pub struct AdapterGradients {
    pub gate_weights: Vec<f64>,
    pub gate_bias: f64,
    pub mix: [[f64; 4]; 4],
    pub bias: [f64; 4],
    pub gate_gain: [f64; 4],
    pub d_core_output: [f64; 4],
}

/// Number of scalar parameters in the adapter.
pub const ADAPTER_PARAM_COUNT: usize = FEATURE_DIM + 1 + 16 + 4 + 4;

/// Identity configuration: the adapted estimate equals the core estimate
/// exactly for every input, and the gate sits at 0.5.
pub fn identity_init() -> AdaptationLayer {
    let mut mix = [[0.0; 4]; 4];
    for (i, row) in mix.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    AdaptationLayer {
        gate_weights: vec![0.0; FEATURE_DIM],
        gate_bias: 0.0,
        mix,
        bias: [0.0; 4],
        gate_gain: [0.0; 4],
    }
}

/// s = sigmoid(gate_weights . c + gate_bias), strictly inside (0, 1).
pub fn selection_gate(c: &[f64], layer: &AdaptationLayer) -> Result<f64> {
    if c.len() != layer.gate_weights.len() {
        return Err(Error::ShapeMismatch(format!(
            "gate input length {} != {}",
            c.len(),
            layer.gate_weights.len()
        )));
    }
    let mut z = layer.gate_bias;
    for (w, x) in layer.gate_weights.iter().zip(c.iter()) {
        z += w * x;
    }
    let z = z.clamp(-GATE_CLAMP, GATE_CLAMP);
    // 1/(1+e^-z) rounds to 1.0 for z beyond ~37, so pin the output just
    // inside (0, 1); the derivative stays the algebraic s(1-s)
    let s = 1.0 / (1.0 + (-z).exp());
    Ok(s.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
}

/// g_i = sum_j mix[i][j] f_j + bias_i + gate_gain_i * s(c).
pub fn adapted_estimate(f: &[f64; 4], c: &[f64], layer: &AdaptationLayer) -> Result<[f64; 4]> {
    let s = selection_gate(c, layer)?;
    Ok(adapted_estimate_with_gate(f, s, layer))
}

/// Same as `adapted_estimate` with the gate value already computed.
pub fn adapted_estimate_with_gate(f: &[f64; 4], s: f64, layer: &AdaptationLayer) -> [f64; 4] {
    let mut g = [0.0; 4];
    for i in 0..4 {
        let mut acc = layer.bias[i];
        for j in 0..4 {
            acc += layer.mix[i][j] * f[j];
        }
        g[i] = acc + layer.gate_gain[i] * s;
    }
    g
}

/// Exact gradients of the adapter given the forward quantities.
pub fn adapter_backward(
    f: &[f64; 4],
    c: &[f64],
    s: f64,
    d_g: &[f64; 4],
    layer: &AdaptationLayer,
) -> Result<AdapterGradients> {
    if c.len() != layer.gate_weights.len() {
        return Err(Error::ShapeMismatch(format!(
            "gate input length {} != {}",
            c.len(),
            layer.gate_weights.len()
        )));
    }
    let mut d_mix = [[0.0; 4]; 4];
    let mut d_core = [0.0; 4];
    let mut d_gain = [0.0; 4];
    // d loss / d s, accumulated over the 4 outputs
    let mut d_s = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            d_mix[i][j] = d_g[i] * f[j];
            d_core[j] += d_g[i] * layer.mix[i][j];
        }
        d_gain[i] = d_g[i] * s;
        d_s += d_g[i] * layer.gate_gain[i];
    }
    let d_z = d_s * s * (1.0 - s);
    let d_gate_weights = c.iter().map(|&x| d_z * x).collect();
    Ok(AdapterGradients {
        gate_weights: d_gate_weights,
        gate_bias: d_z,
        mix: d_mix,
        bias: *d_g,
        gate_gain: d_gain,
        d_core_output: d_core,
    })
}

impl AdaptationLayer {
    /// Flatten in the declared order: mix (row-major), bias, gate_gain,
    /// gate_weights, gate_bias.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(ADAPTER_PARAM_COUNT);
        for row in &self.mix {
            out.extend_from_slice(row);
        }
        out.extend_from_slice(&self.bias);
        out.extend_from_slice(&self.gate_gain);
        out.extend_from_slice(&self.gate_weights);
        out.push(self.gate_bias);
        out
    }

    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if flat.len() != ADAPTER_PARAM_COUNT {
            return Err(Error::ShapeMismatch(format!(
                "adapter parameter count {} != {}",
                flat.len(),
                ADAPTER_PARAM_COUNT
            )));
        }
        let mut mix = [[0.0; 4]; 4];
        for (i, row) in mix.iter_mut().enumerate() {
            row.copy_from_slice(&flat[i * 4..(i + 1) * 4]);
        }
        let mut bias = [0.0; 4];
        bias.copy_from_slice(&flat[16..20]);
        let mut gate_gain = [0.0; 4];
        gate_gain.copy_from_slice(&flat[20..24]);
        let gate_weights = flat[24..24 + FEATURE_DIM].to_vec();
        Ok(AdaptationLayer {
            gate_weights,
            gate_bias: flat[24 + FEATURE_DIM],
            mix,
            bias,
            gate_gain,
        })
    }
}

impl AdapterGradients {
    pub fn to_flat(&self) -> Vec<f64> {
        let layer = AdaptationLayer {
            gate_weights: self.gate_weights.clone(),
            gate_bias: self.gate_bias,
            mix: self.mix,
            bias: self.bias,
            gate_gain: self.gate_gain,
        };
        layer.to_flat()
    }
}

/// Core network plus adaptation head.
#[derive(Debug, Clone, PartialEq)]
pub struct DaModel {
    pub core: CoreModel,
    pub adapter: AdaptationLayer,
}

impl DaModel {
    /// (core estimate f, adapted estimate g, gate s), all in kHz, from a
    /// normalized feature vector.
    pub fn predict_khz(&self, c_normalized: &[f64]) -> Result<([f64; 4], [f64; 4], f64)> {
        let f = self.core.predict_khz(c_normalized)?;
        let s = selection_gate(c_normalized, &self.adapter)?;
        let g = adapted_estimate_with_gate(&f, s, &self.adapter);
        Ok((f, g, s))
    }
}
