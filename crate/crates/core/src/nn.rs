//! Minimal dense feed-forward network with exact backpropagation, Adam, and
//! per-parameter freeze masks. Everything runs in f64; training with a fixed
//! seed and data order is bitwise reproducible.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::Normalizer;

/// Layer sizes of the core formant network.
pub const CORE_ARCH: [usize; 5] = [350, 1024, 512, 256, 4];

/// Above this weight count a layer's matrix products run on the rayon pool.
/// Each output element is still computed by one sequential dot product, so
/// results do not depend on the thread count.
const PAR_THRESHOLD: usize = 1 << 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn apply(&self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Identity => z,
        }
    }

    /// Derivative with respect to z, given both z and a = apply(z).
    pub fn derivative(&self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Identity => 1.0,
        }
    }
}

/// Fully connected layer; weights are row-major (out x in).
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
}

/// Pre- and post-activation values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub input: Vec<f64>,
    pub pre_activations: Vec<Vec<f64>>,
    pub activations: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct LayerGradients {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct MlpGradients {
    pub layers: Vec<LayerGradients>,
}

impl MlpGradients {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        MlpGradients {
            layers: mlp
                .layers
                .iter()
                .map(|l| LayerGradients {
                    weights: vec![0.0; l.weights.len()],
                    biases: vec![0.0; l.biases.len()],
                })
                .collect(),
        }
    }

    pub fn accumulate(&mut self, other: &MlpGradients) {
        for (a, b) in self.layers.iter_mut().zip(other.layers.iter()) {
            for (x, y) in a.weights.iter_mut().zip(b.weights.iter()) {
                *x += y;
            }
            for (x, y) in a.biases.iter_mut().zip(b.biases.iter()) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in self.layers.iter_mut() {
            for x in l.weights.iter_mut() {
                *x *= s;
            }
            for x in l.biases.iter_mut() {
                *x *= s;
            }
        }
    }
}

/// He-uniform initialization: weights ~ U(-sqrt(6/fan_in), sqrt(6/fan_in)),
/// biases zero. Deterministic given the seed.
pub fn mlp_init(sizes: &[usize], activations: &[Activation], seed: u64) -> Mlp {
    assert_eq!(sizes.len(), activations.len() + 1, "one activation per layer");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = sizes
        .windows(2)
        .zip(activations.iter())
        .map(|(w, &activation)| {
            let (in_dim, out_dim) = (w[0], w[1]);
            let bound = (6.0 / in_dim as f64).sqrt();
            let weights = (0..in_dim * out_dim)
                .map(|_| rng.gen_range(-bound..bound))
                .collect();
            DenseLayer {
                in_dim,
                out_dim,
                weights,
                biases: vec![0.0; out_dim],
                activation,
            }
        })
        .collect();
    Mlp { layers }
}

fn affine(layer: &DenseLayer, x: &[f64], out: &mut [f64]) {
    let compute = |i: usize| -> f64 {
        let row = &layer.weights[i * layer.in_dim..(i + 1) * layer.in_dim];
        let mut acc = layer.biases[i];
        for (w, xv) in row.iter().zip(x.iter()) {
            acc += w * xv;
        }
        acc
    };
    if layer.weights.len() >= PAR_THRESHOLD {
        out.par_iter_mut()
            .enumerate()
            .for_each(|(i, o)| *o = compute(i));
    } else {
        for (i, o) in out.iter_mut().enumerate() {
            *o = compute(i);
        }
    }
}

impl Mlp {
    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }

    /// Forward pass keeping the cache needed by `backward`.
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        self.check_input(x)?;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len());
        let mut cur = x.to_vec();
        for layer in &self.layers {
            let mut z = vec![0.0; layer.out_dim];
            affine(layer, &cur, &mut z);
            let a: Vec<f64> = z.iter().map(|&zi| layer.activation.apply(zi)).collect();
            pre.push(z);
            cur = a.clone();
            post.push(a);
        }
        Ok((
            cur,
            ForwardCache {
                input: x.to_vec(),
                pre_activations: pre,
                activations: post,
            },
        ))
    }

    /// Forward pass without a cache.
    pub fn forward_only(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        for layer in &self.layers {
            let mut z = vec![0.0; layer.out_dim];
            affine(layer, &cur, &mut z);
            for zi in z.iter_mut() {
                *zi = layer.activation.apply(*zi);
            }
            cur = z;
        }
        Ok(cur)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "input length {} != network input dim {}",
                x.len(),
                self.input_dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(())
    }

    /// Exact gradients of the composed function; also returns d_loss/d_input.
    pub fn backward(&self, cache: &ForwardCache, d_output: &[f64]) -> Result<(MlpGradients, Vec<f64>)> {
        let mut acc = MlpGradients::zeros_like(self);
        let d_input = self.backward_into(cache, d_output, &mut acc)?;
        Ok((acc, d_input))
    }

    /// Like [`Mlp::backward`] but adds the gradients into `acc`, avoiding a
    /// full-size allocation per sample in the training loops.
    pub fn backward_into(
        &self,
        cache: &ForwardCache,
        d_output: &[f64],
        acc: &mut MlpGradients,
    ) -> Result<Vec<f64>> {
        if d_output.len() != self.output_dim() {
            return Err(Error::ShapeMismatch(format!(
                "output gradient length {} != network output dim {}",
                d_output.len(),
                self.output_dim()
            )));
        }
        if cache.activations.len() != self.layers.len() {
            return Err(Error::ShapeMismatch(
                "cache does not match network depth".into(),
            ));
        }

        let mut d_act = d_output.to_vec();
        for (li, layer) in self.layers.iter().enumerate().rev() {
            let z = &cache.pre_activations[li];
            let a = &cache.activations[li];
            let dz: Vec<f64> = d_act
                .iter()
                .zip(z.iter().zip(a.iter()))
                .map(|(d, (&zi, &ai))| d * layer.activation.derivative(zi, ai))
                .collect();
            let prev: &[f64] = if li == 0 {
                &cache.input
            } else {
                &cache.activations[li - 1]
            };

            let lg = &mut acc.layers[li];
            let add_row = |i: usize, row: &mut [f64]| {
                let dzi = dz[i];
                for (slot, p) in row.iter_mut().zip(prev.iter()) {
                    *slot += dzi * p;
                }
            };
            if layer.weights.len() >= PAR_THRESHOLD {
                lg.weights
                    .par_chunks_mut(layer.in_dim)
                    .enumerate()
                    .for_each(|(i, row)| add_row(i, row));
            } else {
                for (i, row) in lg.weights.chunks_mut(layer.in_dim).enumerate() {
                    add_row(i, row);
                }
            }
            for (slot, &dzi) in lg.biases.iter_mut().zip(dz.iter()) {
                *slot += dzi;
            }

            // row-major traversal keeps the weight reads contiguous; the sum
            // over rows runs in ascending order for every column, so the
            // result is independent of the traversal scheme
            let mut dx = vec![0.0; layer.in_dim];
            for (i, &dzi) in dz.iter().enumerate() {
                let row = &layer.weights[i * layer.in_dim..(i + 1) * layer.in_dim];
                for (slot, &w) in dx.iter_mut().zip(row.iter()) {
                    *slot += w * dzi;
                }
            }
            d_act = dx;
        }
        Ok(d_act)
    }
}

/// Loss selection for training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Mae,
    Mse,
}

/// Masked loss over the 4 formant outputs and its gradient. Masked-out
/// components contribute zero loss and zero gradient; the MAE subgradient at
/// zero is zero.
pub fn loss_and_grad(
    pred: &[f64; 4],
    target: &[f64; 4],
    mask: &[bool; 4],
    kind: LossKind,
) -> Result<(f64, [f64; 4])> {
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    let k = count as f64;
    let mut loss = 0.0;
    let mut grad = [0.0; 4];
    for i in 0..4 {
        if !mask[i] {
            continue;
        }
        let d = pred[i] - target[i];
        match kind {
            LossKind::Mae => {
                loss += d.abs() / k;
                grad[i] = if d == 0.0 { 0.0 } else { d.signum() / k };
            }
            LossKind::Mse => {
                loss += d * d / k;
                grad[i] = 2.0 * d / k;
            }
        }
    }
    Ok((loss, grad))
}

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment accumulators over a flat parameter vector. Callers
/// address disjoint blocks of it via `update_block`.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub cfg: AdamConfig,
    pub step: u64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

impl AdamState {
    pub fn new(cfg: AdamConfig, param_count: usize) -> Self {
        AdamState {
            cfg,
            step: 0,
            first_moment: vec![0.0; param_count],
            second_moment: vec![0.0; param_count],
        }
    }

    /// Advance the shared step counter; call once before the blocks of a step.
    pub fn begin_step(&mut self) {
        self.step += 1;
    }

    /// Adam update for one parameter block starting at `offset` in the flat
    /// layout. Where `freeze` marks a parameter frozen, the parameter and its
    /// moments stay bitwise unchanged.
    pub fn update_block(
        &mut self,
        offset: usize,
        params: &mut [f64],
        grads: &[f64],
        freeze: Option<&[bool]>,
    ) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::ShapeMismatch(format!(
                "params len {} != grads len {}",
                params.len(),
                grads.len()
            )));
        }
        if offset + params.len() > self.first_moment.len() {
            return Err(Error::ShapeMismatch(format!(
                "block [{}, {}) exceeds optimizer capacity {}",
                offset,
                offset + params.len(),
                self.first_moment.len()
            )));
        }
        if let Some(f) = freeze {
            if f.len() != params.len() {
                return Err(Error::ShapeMismatch("freeze mask length".into()));
            }
        }
        let t = self.step as i32;
        let bc1 = 1.0 - self.cfg.beta1.powi(t);
        let bc2 = 1.0 - self.cfg.beta2.powi(t);
        for i in 0..params.len() {
            if let Some(f) = freeze {
                if f[i] {
                    continue;
                }
            }
            let g = grads[i];
            let m = &mut self.first_moment[offset + i];
            *m = self.cfg.beta1 * *m + (1.0 - self.cfg.beta1) * g;
            let v = &mut self.second_moment[offset + i];
            *v = self.cfg.beta2 * *v + (1.0 - self.cfg.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            params[i] -= self.cfg.learning_rate * m_hat / (v_hat.sqrt() + self.cfg.epsilon);
        }
        Ok(())
    }
}

/// Apply one Adam step to every parameter of an MLP. `frozen` skips the whole
/// network while still keeping the step counter consistent for other blocks.
pub fn adam_step_mlp(
    state: &mut AdamState,
    base_offset: usize,
    mlp: &mut Mlp,
    grads: &MlpGradients,
    frozen: bool,
) -> Result<()> {
    if frozen {
        return Ok(());
    }
    let mut offset = base_offset;
    for (layer, g) in mlp.layers.iter_mut().zip(grads.layers.iter()) {
        state.update_block(offset, &mut layer.weights, &g.weights, None)?;
        offset += layer.weights.len();
        state.update_block(offset, &mut layer.biases, &g.biases, None)?;
        offset += layer.biases.len();
    }
    Ok(())
}

/// Echo of the configuration a model was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub seed: u64,
    pub epochs: u32,
    pub batch_size: u32,
    pub learning_rate: f64,
    pub loss: LossKind,
}

impl Default for Provenance {
    fn default() -> Self {
        Provenance {
            seed: 0,
            epochs: 0,
            batch_size: 0,
            learning_rate: 0.0,
            loss: LossKind::Mae,
        }
    }
}

/// Training configuration shared by all three regimes.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub freeze_core: bool,
    pub loss: LossKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 42,
            freeze_core: false,
            loss: LossKind::Mae,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 || self.batch_size < 1 || !(self.learning_rate >= 0.0) {
            return Err(Error::InvalidSpec(format!(
                "bad train config: epochs {}, batch {}, lr {}",
                self.epochs, self.batch_size, self.learning_rate
            )));
        }
        Ok(())
    }
}

/// The core formant estimation network plus the feature normalizer it was
/// trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct CoreModel {
    pub mlp: Mlp,
    pub normalizer: Normalizer,
    pub provenance: Provenance,
}

impl CoreModel {
    /// Fresh He-initialized core network with the fixed architecture.
    pub fn init(normalizer: Normalizer, seed: u64) -> Self {
        let mlp = mlp_init(
            &CORE_ARCH,
            &[
                Activation::Relu,
                Activation::Relu,
                Activation::Relu,
                Activation::Identity,
            ],
            seed,
        );
        CoreModel {
            mlp,
            normalizer,
            provenance: Provenance {
                seed,
                ..Provenance::default()
            },
        }
    }

    /// Raw formant estimate in kHz from a normalized feature vector.
    pub fn predict_khz(&self, c_normalized: &[f64]) -> Result<[f64; 4]> {
        let out = self.mlp.forward_only(c_normalized)?;
        Ok([out[0], out[1], out[2], out[3]])
    }
}
