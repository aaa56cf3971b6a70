//! Training orchestration: step-1 core training, step-2 frozen-core
//! adaptation training, and the joint-training baseline. All regimes are
//! deterministic under a fixed seed and manifest order.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::adaptation::{
    adapted_estimate_with_gate, adapter_backward, identity_init, selection_gate, DaModel,
    ADAPTER_PARAM_COUNT,
};
use crate::data_io;
use crate::error::{Error, Result};
use crate::features::{self, FeatureVector};
use crate::nn::{
    adam_step_mlp, loss_and_grad, AdamConfig, AdamState, CoreModel, MlpGradients, Provenance,
    TrainConfig,
};
use crate::signal::{self, FormantTargets, Segment};

/// One labeled audio span in a dataset listing.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    /// Audio path, resolved against the manifest's base directory when
    /// relative.
    pub path: PathBuf,
    pub start_s: f64,
    pub end_s: f64,
    pub targets_hz: [f64; 4],
    pub mask: [bool; 4],
    pub domain: String,
}

/// A dataset listing: audio spans with ground-truth formants and domain
/// labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub name: String,
    /// Directory relative entry paths are resolved against.
    pub base_dir: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl ManifestEntry {
    pub fn resolved_path(&self, base_dir: &Path) -> PathBuf {
        if self.path.is_absolute() {
            self.path.clone()
        } else {
            base_dir.join(&self.path)
        }
    }
}

/// A feature-extracted training or evaluation example.
#[derive(Debug, Clone)]
pub struct Example {
    pub features: FeatureVector,
    pub targets_hz: [f64; 4],
    pub mask: [bool; 4],
    pub domain: String,
}

/// Read, slice, and preprocess the audio span of one manifest entry.
pub fn load_segment(entry: &ManifestEntry, base_dir: &Path) -> Result<Segment> {
    let path = entry.resolved_path(base_dir);
    let (samples, rate) = data_io::read_wav(&path)?;
    let start = (entry.start_s * rate as f64).round() as usize;
    let end = ((entry.end_s * rate as f64).round() as usize).min(samples.len());
    if start >= end {
        return Err(Error::InvalidSpec(format!(
            "{}: span [{}, {}) s is empty for a {}-sample file",
            path.display(),
            entry.start_s,
            entry.end_s,
            samples.len()
        )));
    }
    let mut seg = signal::preprocess(&samples[start..end], rate)?;
    seg.domain_label = Some(entry.domain.clone());
    seg.targets = Some(FormantTargets {
        hz: entry.targets_hz,
        mask: entry.mask,
    });
    Ok(seg)
}

/// Feature-extract every entry of a manifest. Extraction is pure per entry
/// and runs on the rayon pool; output order follows the manifest.
pub fn load_examples(manifest: &Manifest) -> Result<Vec<Example>> {
    manifest
        .entries
        .par_iter()
        .map(|entry| {
            if entry.mask.iter().all(|&m| !m) {
                return Err(Error::EmptyMask);
            }
            let seg = load_segment(entry, &manifest.base_dir)?;
            let features = features::extract_features(&seg)?;
            Ok(Example {
                features,
                targets_hz: entry.targets_hz,
                mask: entry.mask,
                domain: entry.domain.clone(),
            })
        })
        .collect()
}

fn pooled_examples(manifests: &[Manifest]) -> Result<Vec<Example>> {
    if manifests.is_empty() {
        return Err(Error::EmptyCollection);
    }
    let mut all = Vec::new();
    for m in manifests {
        all.extend(load_examples(m)?);
    }
    if all.is_empty() {
        return Err(Error::EmptyCollection);
    }
    Ok(all)
}

/// Normalized features plus kHz targets, the representation the training
/// loops consume.
struct PreparedExample {
    input: Vec<f64>,
    target_khz: [f64; 4],
    mask: [bool; 4],
}

fn prepare(examples: &[Example], normalizer: &crate::features::Normalizer) -> Vec<PreparedExample> {
    examples
        .iter()
        .map(|e| PreparedExample {
            input: features::apply_normalizer(normalizer, &e.features),
            target_khz: e.targets_hz.map(|t| t * normalizer.target_scale),
            mask: e.mask,
        })
        .collect()
}

fn shuffle_rng(seed: u64) -> ChaCha8Rng {
    // separate stream from parameter initialization
    ChaCha8Rng::seed_from_u64(seed ^ 0x9E37_79B9_7F4A_7C15)
}

/// Step-1 training: fit the normalizer and the core network on one manifest.
pub fn train_core(manifest: &Manifest, cfg: &TrainConfig) -> Result<CoreModel> {
    cfg.validate()?;
    let examples = load_examples(manifest)?;
    if examples.is_empty() {
        return Err(Error::EmptyCollection);
    }
    let feature_vecs: Vec<FeatureVector> = examples.iter().map(|e| e.features.clone()).collect();
    let normalizer = features::fit_normalizer(&feature_vecs)?;
    let prepared = prepare(&examples, &normalizer);

    let mut model = CoreModel::init(normalizer, cfg.seed);
    model.provenance = Provenance {
        seed: cfg.seed,
        epochs: cfg.epochs as u32,
        batch_size: cfg.batch_size as u32,
        learning_rate: cfg.learning_rate,
        loss: cfg.loss,
    };

    let mut adam = AdamState::new(
        AdamConfig::with_learning_rate(cfg.learning_rate),
        model.mlp.param_count(),
    );
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let mut rng = shuffle_rng(cfg.seed);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = MlpGradients::zeros_like(&model.mlp);
            for &idx in batch {
                let ex = &prepared[idx];
                let (out, cache) = model.mlp.forward(&ex.input)?;
                let pred = [out[0], out[1], out[2], out[3]];
                let (loss, d_pred) = loss_and_grad(&pred, &ex.target_khz, &ex.mask, cfg.loss)?;
                epoch_loss += loss;
                model.mlp.backward_into(&cache, &d_pred, &mut grads)?;
            }
            grads.scale(1.0 / batch.len() as f64);
            adam.begin_step();
            adam_step_mlp(&mut adam, 0, &mut model.mlp, &grads, false)?;
        }
        log::info!(
            "core epoch {}/{}: mean loss {:.6} kHz",
            epoch + 1,
            cfg.epochs,
            epoch_loss / prepared.len() as f64
        );
    }
    Ok(model)
}

/// Step-2 training: freeze the core, start the adapter at identity, and train
/// only the adapter parameters on the pooled manifests.
pub fn train_adaptation(
    core: &CoreModel,
    manifests: &[Manifest],
    cfg: &TrainConfig,
) -> Result<DaModel> {
    cfg.validate()?;
    if !cfg.freeze_core {
        return Err(Error::InvalidSpec(
            "train_adaptation requires freeze_core = true".into(),
        ));
    }
    let examples = pooled_examples(manifests)?;
    // the normalizer is the core's, never refit here
    let prepared = prepare(&examples, &core.normalizer);

    // core outputs are constant under the freeze, compute them once
    let core_outputs: Vec<[f64; 4]> = prepared
        .par_iter()
        .map(|ex| core.predict_khz(&ex.input))
        .collect::<Result<Vec<_>>>()?;

    let mut adapter = identity_init();
    let mut adam = AdamState::new(
        AdamConfig::with_learning_rate(cfg.learning_rate),
        ADAPTER_PARAM_COUNT,
    );
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let mut rng = shuffle_rng(cfg.seed);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = vec![0.0f64; ADAPTER_PARAM_COUNT];
            for &idx in batch {
                let ex = &prepared[idx];
                let f = core_outputs[idx];
                let s = selection_gate(&ex.input, &adapter)?;
                let g = adapted_estimate_with_gate(&f, s, &adapter);
                let (loss, d_g) = loss_and_grad(&g, &ex.target_khz, &ex.mask, cfg.loss)?;
                epoch_loss += loss;
                let ag = adapter_backward(&f, &ex.input, s, &d_g, &adapter)?;
                for (slot, v) in grads.iter_mut().zip(ag.to_flat()) {
                    *slot += v;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for g in grads.iter_mut() {
                *g *= scale;
            }
            let mut flat = adapter.to_flat();
            adam.begin_step();
            adam.update_block(0, &mut flat, &grads, None)?;
            adapter = crate::adaptation::AdaptationLayer::from_flat(&flat)?;
        }
        log::info!(
            "adapter epoch {}/{}: mean loss {:.6} kHz",
            epoch + 1,
            cfg.epochs,
            epoch_loss / prepared.len() as f64
        );
    }
    Ok(DaModel {
        core: core.clone(),
        adapter,
    })
}

/// Joint baseline: core (random init) and adapter (identity init) trained
/// simultaneously on the pooled manifests.
pub fn train_joint(manifests: &[Manifest], cfg: &TrainConfig) -> Result<DaModel> {
    cfg.validate()?;
    let examples = pooled_examples(manifests)?;
    let feature_vecs: Vec<FeatureVector> = examples.iter().map(|e| e.features.clone()).collect();
    let normalizer = features::fit_normalizer(&feature_vecs)?;
    let prepared = prepare(&examples, &normalizer);

    let mut core = CoreModel::init(normalizer, cfg.seed);
    core.provenance = Provenance {
        seed: cfg.seed,
        epochs: cfg.epochs as u32,
        batch_size: cfg.batch_size as u32,
        learning_rate: cfg.learning_rate,
        loss: cfg.loss,
    };
    let mut adapter = identity_init();

    let core_param_count = core.mlp.param_count();
    let mut adam = AdamState::new(
        AdamConfig::with_learning_rate(cfg.learning_rate),
        core_param_count + ADAPTER_PARAM_COUNT,
    );
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let mut rng = shuffle_rng(cfg.seed);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut core_grads = MlpGradients::zeros_like(&core.mlp);
            let mut adapter_grads = vec![0.0f64; ADAPTER_PARAM_COUNT];
            for &idx in batch {
                let ex = &prepared[idx];
                let (out, cache) = core.mlp.forward(&ex.input)?;
                let f = [out[0], out[1], out[2], out[3]];
                let s = selection_gate(&ex.input, &adapter)?;
                let g = adapted_estimate_with_gate(&f, s, &adapter);
                let (loss, d_g) = loss_and_grad(&g, &ex.target_khz, &ex.mask, cfg.loss)?;
                epoch_loss += loss;
                let ag = adapter_backward(&f, &ex.input, s, &d_g, &adapter)?;
                for (slot, v) in adapter_grads.iter_mut().zip(ag.to_flat()) {
                    *slot += v;
                }
                core.mlp.backward_into(&cache, &ag.d_core_output, &mut core_grads)?;
            }
            let scale = 1.0 / batch.len() as f64;
            core_grads.scale(scale);
            for g in adapter_grads.iter_mut() {
                *g *= scale;
            }
            adam.begin_step();
            adam_step_mlp(&mut adam, 0, &mut core.mlp, &core_grads, false)?;
            let mut flat = adapter.to_flat();
            adam.update_block(core_param_count, &mut flat, &adapter_grads, None)?;
            adapter = crate::adaptation::AdaptationLayer::from_flat(&flat)?;
        }
        log::info!(
            "joint epoch {}/{}: mean loss {:.6} kHz",
            epoch + 1,
            cfg.epochs,
            epoch_loss / prepared.len() as f64
        );
    }
    Ok(DaModel { core, adapter })
}
