//! Source-filter vowel synthesizer: an impulse-train source through a cascade
//! of four second-order all-pole resonators, with exact ground-truth formant
//! frequencies. Built-in "adult_male" and "child" domains give two corpora
//! with deliberately different formant ranges.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data_io;
use crate::error::{Error, Result};
use crate::signal::TARGET_RATE;
use crate::training::{Manifest, ManifestEntry};

/// Minimum spacing enforced between sampled neighbouring formants.
pub const MIN_FORMANT_SEPARATION: f64 = 150.0;

/// Rejection-sampling attempt budget.
pub const MAX_SAMPLE_ATTEMPTS: usize = 1000;

/// Ground truth for one synthetic vowel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VowelSpec {
    pub f0: f64,
    pub formants: [f64; 4],
    pub bandwidths: [f64; 4],
    pub duration: f64,
    pub noise_snr_db: Option<f64>,
}

impl VowelSpec {
    pub fn validate(&self) -> Result<()> {
        if !(60.0..=400.0).contains(&self.f0) {
            return Err(Error::InvalidSpec(format!("f0 {} outside [60, 400]", self.f0)));
        }
        let nyquist_margin = 7600.0;
        let mut prev = 0.0;
        for (i, &f) in self.formants.iter().enumerate() {
            if f <= prev || f >= nyquist_margin {
                return Err(Error::InvalidSpec(format!(
                    "formant {} = {} Hz not strictly increasing below {} Hz",
                    i + 1,
                    f,
                    nyquist_margin
                )));
            }
            prev = f;
        }
        for &b in &self.bandwidths {
            if !(20.0..=500.0).contains(&b) {
                return Err(Error::InvalidSpec(format!("bandwidth {b} outside [20, 500]")));
            }
        }
        if self.duration <= 0.0 {
            return Err(Error::InvalidSpec(format!(
                "duration {} must be positive",
                self.duration
            )));
        }
        Ok(())
    }
}

/// Parameter ranges a domain's vowels are drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub name: String,
    pub f0_range: (f64, f64),
    pub formant_ranges: [(f64, f64); 4],
    pub bandwidth_ranges: [(f64, f64); 4],
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    #[serde(default)]
    pub noise_snr_db: Option<f64>,
}

fn default_duration() -> f64 {
    0.35
}

/// Adult-male-like ranges, the stand-in for the core-training domain.
pub fn adult_male_domain() -> DomainSpec {
    DomainSpec {
        name: "adult_male".into(),
        f0_range: (80.0, 160.0),
        formant_ranges: [
            (260.0, 860.0),
            (850.0, 2300.0),
            (1900.0, 3200.0),
            (3200.0, 4200.0),
        ],
        bandwidth_ranges: [
            (50.0, 120.0),
            (60.0, 140.0),
            (80.0, 180.0),
            (100.0, 250.0),
        ],
        duration_s: default_duration(),
        noise_snr_db: None,
    }
}

/// Child-like ranges: higher pitch, much higher formants.
pub fn child_domain() -> DomainSpec {
    DomainSpec {
        name: "child".into(),
        f0_range: (200.0, 400.0),
        formant_ranges: [
            (380.0, 1200.0),
            (1200.0, 3200.0),
            (2800.0, 4300.0),
            (4000.0, 5500.0),
        ],
        bandwidth_ranges: [
            (50.0, 120.0),
            (60.0, 140.0),
            (80.0, 180.0),
            (100.0, 250.0),
        ],
        duration_s: default_duration(),
        noise_snr_db: None,
    }
}

/// Look up a built-in domain by name.
pub fn builtin_domain(name: &str) -> Option<DomainSpec> {
    match name {
        "adult_male" => Some(adult_male_domain()),
        "child" => Some(child_domain()),
        _ => None,
    }
}

/// Impulse train with period round(rate/f0): amplitude 1 at impulses, 0
/// elsewhere.
pub fn make_source(f0: f64, duration: f64, rate: u32) -> Result<Vec<f64>> {
    let n = (duration * rate as f64).round() as usize;
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let period = (rate as f64 / f0).round() as usize;
    let mut out = vec![0.0; n];
    let mut i = 0;
    while i < n {
        out[i] = 1.0;
        i += period;
    }
    Ok(out)
}

/// Cascade of four second-order all-pole resonators; the output is
/// peak-normalized. Pole radius exp(-pi B / rate), pole angle 2 pi F / rate.
pub fn resonator_cascade(source: &[f64], spec: &VowelSpec, rate: u32) -> Result<Vec<f64>> {
    spec.validate()?;
    let rate = rate as f64;
    let mut y: Vec<f64> = source.to_vec();
    for (&f, &b) in spec.formants.iter().zip(spec.bandwidths.iter()) {
        let r = (-PI * b / rate).exp();
        let theta = 2.0 * PI * f / rate;
        let c1 = 2.0 * r * theta.cos();
        let c2 = -r * r;
        let mut y1 = 0.0;
        let mut y2 = 0.0;
        for s in y.iter_mut() {
            let out = *s + c1 * y1 + c2 * y2;
            y2 = y1;
            y1 = out;
            *s = out;
        }
    }
    let peak = y.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    if peak > 0.0 {
        for v in y.iter_mut() {
            *v /= peak;
        }
    }
    Ok(y)
}

/// Full synthesis: source, resonator cascade, optional additive white noise at
/// the configured SNR, then peak normalization.
pub fn synthesize(spec: &VowelSpec, rate: u32, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let source = make_source(spec.f0, spec.duration, rate)?;
    let mut y = resonator_cascade(&source, spec, rate)?;
    if let Some(snr_db) = spec.noise_snr_db {
        let sig_power = y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64;
        let noise_power = sig_power / 10f64.powf(snr_db / 10.0);
        let sigma = noise_power.sqrt();
        for v in y.iter_mut() {
            // Box-Muller from two uniforms, deterministic under the seed
            let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            *v += sigma * (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos();
        }
        let peak = y.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        if peak > 0.0 {
            for v in y.iter_mut() {
                *v /= peak;
            }
        }
    }
    Ok(y)
}

/// Uniform sampling per range, rejection-resampled until the formants are
/// strictly increasing with at least `MIN_FORMANT_SEPARATION` Hz between
/// neighbours.
pub fn sample_domain(d: &DomainSpec, rng: &mut ChaCha8Rng) -> Result<VowelSpec> {
    let sample_range = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| -> f64 {
        if lo == hi {
            lo
        } else {
            rng.gen_range(lo..hi)
        }
    };
    for _ in 0..MAX_SAMPLE_ATTEMPTS {
        let f0 = sample_range(rng, d.f0_range);
        let mut formants = [0.0; 4];
        for (slot, &range) in formants.iter_mut().zip(d.formant_ranges.iter()) {
            *slot = sample_range(rng, range);
        }
        let separated = formants
            .windows(2)
            .all(|w| w[1] - w[0] >= MIN_FORMANT_SEPARATION);
        if !separated {
            continue;
        }
        let mut bandwidths = [0.0; 4];
        for (slot, &range) in bandwidths.iter_mut().zip(d.bandwidth_ranges.iter()) {
            *slot = sample_range(rng, range);
        }
        let spec = VowelSpec {
            f0,
            formants,
            bandwidths,
            duration: d.duration_s,
            noise_snr_db: d.noise_snr_db,
        };
        spec.validate()?;
        return Ok(spec);
    }
    Err(Error::RejectionFailure(MAX_SAMPLE_ATTEMPTS))
}

/// Generate `n` vowels, write them as 16-bit PCM WAV files under `out_dir`,
/// and return (and write) the manifest with exact ground truth. Target
/// frequencies are rounded to 0.01 Hz so the CSV round-trips exactly.
pub fn generate_corpus(d: &DomainSpec, n: usize, seed: u64, out_dir: &Path) -> Result<Manifest> {
    if n == 0 {
        return Err(Error::EmptyCollection);
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::Io {
        path: out_dir.to_path_buf(),
        source: e,
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::with_capacity(n);
    for i in 0..n {
        let spec = sample_domain(d, &mut rng)?;
        let samples = synthesize(&spec, TARGET_RATE, &mut rng)?;
        let file_name = format!("{}_{:05}.wav", d.name, i);
        data_io::write_wav(&out_dir.join(&file_name), &samples, TARGET_RATE)?;
        let targets = spec.formants.map(|f| (f * 100.0).round() / 100.0);
        entries.push(ManifestEntry {
            path: file_name.into(),
            start_s: 0.0,
            end_s: spec.duration,
            targets_hz: targets,
            mask: [true; 4],
            domain: d.name.clone(),
        });
    }
    let manifest = Manifest {
        name: d.name.clone(),
        base_dir: out_dir.to_path_buf(),
        entries,
    };
    data_io::save_manifest(&manifest, &out_dir.join("manifest.csv"))?;
    Ok(manifest)
}
