//! Assembly of the 350-dimensional feature vector: LPC cepstra for model
//! orders 8..17 (30 coefficients each, order-major) followed by the first 50
//! DCT coefficients of the quasi pitch-synchronous log spectrum. Also holds
//! the z-score normalizer shared by the core and adaptation subnetworks.

use crate::error::{Error, Result};
use crate::signal::{self, Segment, PREEMPHASIS, TARGET_RATE};

/// Lowest and highest LPC model orders contributing cepstra.
pub const LPC_ORDER_MIN: usize = 8;
pub const LPC_ORDER_MAX: usize = 17;

/// Cepstral coefficients kept per LPC order.
pub const CEPSTRUM_ORDER: usize = 30;

/// Spectral DCT coefficients kept.
pub const DCT_COUNT: usize = 50;

/// Total feature dimension.
pub const FEATURE_DIM: usize = (LPC_ORDER_MAX - LPC_ORDER_MIN + 1) * CEPSTRUM_ORDER + DCT_COUNT;

/// Targets are trained in kHz and reported in Hz.
pub const TARGET_SCALE: f64 = 1e-3;

/// Floor for per-dimension standard deviations.
pub const STD_FLOOR: f64 = 1e-8;

/// The 350-dimensional input vector of the estimation network.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() != FEATURE_DIM {
            return Err(Error::ShapeMismatch(format!(
                "feature vector has {} values, expected {}",
                values.len(),
                FEATURE_DIM
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(FeatureVector { values })
    }
}

/// Per-dimension z-score statistics plus the fixed target scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
    pub target_scale: f64,
}

/// Extract the full feature vector from a preprocessed 16 kHz segment.
pub fn extract_features(seg: &Segment) -> Result<FeatureVector> {
    if seg.sample_rate != TARGET_RATE {
        return Err(Error::UnsupportedRate(seg.sample_rate));
    }

    let mut values = Vec::with_capacity(FEATURE_DIM);

    // LPC branch: pre-emphasis and a Hamming window over the whole segment,
    // one autocorrelation shared by all model orders.
    let mut windowed = signal::preemphasize(&seg.samples, PREEMPHASIS);
    signal::hamming_window(&mut windowed);
    let r = signal::autocorrelation(&windowed, LPC_ORDER_MAX)?;
    for order in LPC_ORDER_MIN..=LPC_ORDER_MAX {
        let model = signal::levinson_durbin(&r, order)?;
        values.extend(signal::lpc_to_cepstrum(&model, CEPSTRUM_ORDER));
    }

    // Spectral branch on the unemphasized segment.
    let period = signal::estimate_median_pitch(seg)?;
    let spectrum = signal::pitch_sync_spectrum(seg, period)?;
    values.extend(signal::dct_ii(&spectrum.values, DCT_COUNT)?);

    FeatureVector::new(values)
}

/// Population mean and standard deviation per dimension, std floored.
pub fn fit_normalizer(vectors: &[FeatureVector]) -> Result<Normalizer> {
    if vectors.is_empty() {
        return Err(Error::EmptyCollection);
    }
    let n = vectors.len() as f64;
    let mut mean = vec![0.0f64; FEATURE_DIM];
    for v in vectors {
        for (m, x) in mean.iter_mut().zip(v.values.iter()) {
            *m += x;
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    let mut var = vec![0.0f64; FEATURE_DIM];
    for v in vectors {
        for ((s, x), m) in var.iter_mut().zip(v.values.iter()).zip(mean.iter()) {
            let d = x - m;
            *s += d * d;
        }
    }
    let std = var
        .into_iter()
        .map(|s| (s / n).sqrt().max(STD_FLOOR))
        .collect();
    Ok(Normalizer {
        feature_mean: mean,
        feature_std: std,
        target_scale: TARGET_SCALE,
    })
}

/// (v - mean) / std, elementwise.
pub fn apply_normalizer(n: &Normalizer, v: &FeatureVector) -> Vec<f64> {
    v.values
        .iter()
        .zip(n.feature_mean.iter())
        .zip(n.feature_std.iter())
        .map(|((x, m), s)| (x - m) / s)
        .collect()
}

/// Inverse of `apply_normalizer`.
pub fn invert_normalizer(n: &Normalizer, v: &[f64]) -> Vec<f64> {
    v.iter()
        .zip(n.feature_mean.iter())
        .zip(n.feature_std.iter())
        .map(|((x, m), s)| x * s + m)
        .collect()
}
