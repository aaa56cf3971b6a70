//! Domain-adaptive formant estimation.
//!
//! The pipeline: LPC-cepstral and quasi pitch-synchronous spectral features
//! ([`features`]) feed a small fully connected network ([`nn`]) whose four
//! outputs are corrected per input domain by a sigmoid-gated adaptation layer
//! ([`adaptation`]). Training regimes live in [`training`], evaluation and a
//! classical LPC-root baseline in [`eval`], and a source-filter vowel
//! synthesizer in [`synth`] supplies corpora with exact ground truth.

pub mod adaptation;
pub mod data_io;
pub mod error;
pub mod eval;
pub mod features;
pub mod nn;
pub mod signal;
pub mod synth;
pub mod training;

pub use adaptation::{AdaptationLayer, DaModel};
pub use data_io::Model;
pub use error::{Error, Result};
pub use features::{FeatureVector, Normalizer};
pub use nn::{CoreModel, LossKind, TrainConfig};
pub use signal::{LogSpectrum, LpcModel, Segment};
pub use synth::{DomainSpec, VowelSpec};
pub use training::{Manifest, ManifestEntry};
