//! Audio, manifest, and model persistence. The WAV path handles RIFF/PCM16
//! mono; manifests are CSV; models are little-endian binary with a short
//! header so that save/load round trips are byte-identical.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::adaptation::{AdaptationLayer, DaModel, ADAPTER_PARAM_COUNT};
use crate::error::{Error, Result};
use crate::features::{Normalizer, FEATURE_DIM};
use crate::nn::{Activation, CoreModel, DenseLayer, LossKind, Mlp, Provenance};
use crate::signal::FormantTargets;
use crate::training::{Manifest, ManifestEntry};

/// Magic bytes of the model file format.
pub const MODEL_MAGIC: &[u8; 4] = b"FDA1";

/// Current model format version.
pub const MODEL_VERSION: u32 = 1;

/// Manifest CSV header.
pub const MANIFEST_HEADER: &str = "path,start_s,end_s,f1,f2,f3,f4,domain";

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

/// Write `bytes` to `path` via a temp file in the same directory and an
/// atomic rename, so failures never leave partial artifacts.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(path))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.flush().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

// ---------------------------------------------------------------------------
// WAV
// ---------------------------------------------------------------------------

/// Read a PCM 16-bit mono WAV file; samples are scaled by 1/32768.
pub fn read_wav(path: &Path) -> Result<(Vec<f64>, u32)> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let fail = |msg: &str| Error::WavFormat {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    };
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(fail("not a RIFF/WAVE file"));
    }

    let mut pos = 12;
    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_end = pos + 8 + size;
        if body_end > bytes.len() {
            return Err(fail("truncated chunk"));
        }
        let body = &bytes[pos + 8..body_end];
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(fail("fmt chunk too small"));
                }
                let format = u16::from_le_bytes(body[0..2].try_into().unwrap());
                let channels = u16::from_le_bytes(body[2..4].try_into().unwrap());
                let rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
                let bits = u16::from_le_bytes(body[14..16].try_into().unwrap());
                fmt = Some((format, channels, rate, bits));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // chunks are word-aligned
        pos = body_end + (size & 1);
    }

    let (format, channels, rate, bits) = fmt.ok_or_else(|| fail("missing fmt chunk"))?;
    if format != 1 || bits != 16 {
        return Err(fail(&format!(
            "unsupported encoding: format {format}, {bits} bits (need PCM 16-bit)"
        )));
    }
    if channels != 1 {
        return Err(fail(&format!("{channels} channels (need mono)")));
    }
    let data = data.ok_or_else(|| fail("missing data chunk"))?;
    if data.len() % 2 != 0 {
        return Err(fail("odd data chunk size"));
    }
    let samples = data
        .chunks_exact(2)
        .map(|b| i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0)
        .collect();
    Ok((samples, rate))
}

/// Write a PCM 16-bit mono WAV file with round-half-away quantization.
pub fn write_wav(path: &Path, samples: &[f64], rate: u32) -> Result<()> {
    let n = samples.len();
    let data_len = (n * 2) as u32;
    let mut out = Vec::with_capacity(44 + n * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&rate.to_le_bytes());
    out.extend_from_slice(&(rate * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes()); // bits per sample
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in samples {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    atomic_write(path, &out)
}

// ---------------------------------------------------------------------------
// Manifest CSV
// ---------------------------------------------------------------------------

/// Serialize a manifest. Formant cells are Hz with two decimals; a
/// masked-out formant is an empty cell.
pub fn save_manifest(m: &Manifest, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(MANIFEST_HEADER);
    out.push('\n');
    for e in &m.entries {
        let cell = |i: usize| {
            if e.mask[i] {
                format!("{:.2}", e.targets_hz[i])
            } else {
                String::new()
            }
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            e.path.display(),
            e.start_s,
            e.end_s,
            cell(0),
            cell(1),
            cell(2),
            cell(3),
            e.domain
        ));
    }
    atomic_write(path, out.as_bytes())
}

/// Parse a manifest CSV. Empty formant cells become masked-out formants;
/// malformed rows are reported with their line number.
pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let fail = |line: usize, msg: String| Error::Manifest {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == MANIFEST_HEADER => {}
        Some((_, header)) => {
            return Err(fail(1, format!("bad header {header:?}, expected {MANIFEST_HEADER:?}")))
        }
        None => return Err(fail(1, "empty file, expected a header".into())),
    }

    let mut entries = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(fail(line_no, format!("expected 8 fields, got {}", fields.len())));
        }
        let num = |s: &str, what: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|_| fail(line_no, format!("bad {what}: {s:?}")))
        };
        let start_s = num(fields[1], "start_s")?;
        let end_s = num(fields[2], "end_s")?;
        if end_s <= start_s {
            return Err(fail(line_no, format!("end_s {end_s} <= start_s {start_s}")));
        }
        let mut targets_hz = [0.0; 4];
        let mut mask = [false; 4];
        for i in 0..4 {
            let cell = fields[3 + i].trim();
            if !cell.is_empty() {
                targets_hz[i] = num(cell, &format!("f{}", i + 1))?;
                mask[i] = true;
            }
        }
        let targets = FormantTargets { hz: targets_hz, mask };
        targets
            .validate()
            .map_err(|e| fail(line_no, e.to_string()))?;
        entries.push(ManifestEntry {
            path: PathBuf::from(fields[0]),
            start_s,
            end_s,
            targets_hz,
            mask,
            domain: fields[7].trim().to_string(),
        });
    }

    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let base_dir = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    Ok(Manifest {
        name,
        base_dir,
        entries,
    })
}

// ---------------------------------------------------------------------------
// Model files
// ---------------------------------------------------------------------------

/// Either flavour of persisted model.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Core(CoreModel),
    Da(DaModel),
}

impl Model {
    pub fn core(&self) -> &CoreModel {
        match self {
            Model::Core(m) => m,
            Model::Da(m) => &m.core,
        }
    }
}

struct ModelWriter {
    buf: Vec<u8>,
}

impl ModelWriter {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, vs: &[f64]) {
        for &v in vs {
            self.f64(v);
        }
    }
}

fn activation_tag(a: Activation) -> u8 {
    match a {
        Activation::Relu => 0,
        Activation::Sigmoid => 1,
        Activation::Identity => 2,
    }
}

fn activation_from_tag(t: u8) -> Option<Activation> {
    match t {
        0 => Some(Activation::Relu),
        1 => Some(Activation::Sigmoid),
        2 => Some(Activation::Identity),
        _ => None,
    }
}

/// Serialize a model to its canonical byte representation.
pub fn model_to_bytes(m: &Model) -> Vec<u8> {
    let mut w = ModelWriter { buf: Vec::new() };
    w.buf.extend_from_slice(MODEL_MAGIC);
    w.u32(MODEL_VERSION);
    w.u8(match m {
        Model::Core(_) => 0,
        Model::Da(_) => 1,
    });

    let core = m.core();
    w.u32(core.mlp.layers.len() as u32);
    for l in &core.mlp.layers {
        w.u32(l.in_dim as u32);
        w.u32(l.out_dim as u32);
        w.u8(activation_tag(l.activation));
    }

    let p = &core.provenance;
    w.u64(p.seed);
    w.u32(p.epochs);
    w.u32(p.batch_size);
    w.f64(p.learning_rate);
    w.u8(match p.loss {
        LossKind::Mae => 0,
        LossKind::Mse => 1,
    });

    let n = &core.normalizer;
    w.u32(n.feature_mean.len() as u32);
    w.f64s(&n.feature_mean);
    w.f64s(&n.feature_std);
    w.f64(n.target_scale);

    for l in &core.mlp.layers {
        w.f64s(&l.weights);
        w.f64s(&l.biases);
    }
    if let Model::Da(da) = m {
        w.f64s(&da.adapter.to_flat());
    }
    w.buf
}

struct ModelReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: PathBuf,
}

impl<'a> ModelReader<'a> {
    fn fail(&self, msg: impl Into<String>) -> Error {
        Error::ModelFormat {
            path: self.path.clone(),
            msg: msg.into(),
        }
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(self.fail(format!(
                "truncated file: wanted {} bytes at offset {}, have {}",
                n,
                self.pos,
                self.bytes.len()
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect())
    }
}

/// Deserialize a model from bytes; `origin` only labels errors.
pub fn model_from_bytes(bytes: &[u8], origin: &Path) -> Result<Model> {
    let mut r = ModelReader {
        bytes,
        pos: 0,
        path: origin.to_path_buf(),
    };
    if r.take(4)? != MODEL_MAGIC {
        return Err(r.fail("bad magic, not a model file"));
    }
    let version = r.u32()?;
    if version != MODEL_VERSION {
        return Err(r.fail(format!("version {version}, expected {MODEL_VERSION}")));
    }
    let kind = r.u8()?;
    if kind > 1 {
        return Err(r.fail(format!("unknown model kind {kind}")));
    }

    let n_layers = r.u32()? as usize;
    if n_layers == 0 || n_layers > 64 {
        return Err(r.fail(format!("implausible layer count {n_layers}")));
    }
    let mut dims = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let in_dim = r.u32()? as usize;
        let out_dim = r.u32()? as usize;
        if in_dim == 0 || out_dim == 0 || in_dim > 1 << 20 || out_dim > 1 << 20 {
            return Err(r.fail(format!("implausible layer dims {in_dim}x{out_dim}")));
        }
        let act = activation_from_tag(r.u8()?)
            .ok_or_else(|| r.fail("unknown activation tag"))?;
        dims.push((in_dim, out_dim, act));
    }

    let seed = r.u64()?;
    let epochs = r.u32()?;
    let batch_size = r.u32()?;
    let learning_rate = r.f64()?;
    let loss = match r.u8()? {
        0 => LossKind::Mae,
        1 => LossKind::Mse,
        t => return Err(r.fail(format!("unknown loss tag {t}"))),
    };

    let norm_dim = r.u32()? as usize;
    if norm_dim != FEATURE_DIM {
        return Err(r.fail(format!(
            "normalizer dimension {norm_dim}, expected {FEATURE_DIM}"
        )));
    }
    let feature_mean = r.f64s(norm_dim)?;
    let feature_std = r.f64s(norm_dim)?;
    let target_scale = r.f64()?;

    let mut layers = Vec::with_capacity(n_layers);
    for &(in_dim, out_dim, activation) in &dims {
        let weights = r.f64s(in_dim * out_dim)?;
        let biases = r.f64s(out_dim)?;
        layers.push(DenseLayer {
            in_dim,
            out_dim,
            weights,
            biases,
            activation,
        });
    }

    let core = CoreModel {
        mlp: Mlp { layers },
        normalizer: Normalizer {
            feature_mean,
            feature_std,
            target_scale,
        },
        provenance: Provenance {
            seed,
            epochs,
            batch_size,
            learning_rate,
            loss,
        },
    };

    let model = if kind == 1 {
        let flat = r.f64s(ADAPTER_PARAM_COUNT)?;
        Model::Da(DaModel {
            core,
            adapter: AdaptationLayer::from_flat(&flat)?,
        })
    } else {
        Model::Core(core)
    };

    if r.pos != bytes.len() {
        return Err(r.fail(format!(
            "parameter count mismatch: {} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    Ok(model)
}

pub fn save_model(m: &Model, path: &Path) -> Result<()> {
    atomic_write(path, &model_to_bytes(m))
}

pub fn load_model(path: &Path) -> Result<Model> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(io_err(path))?;
    model_from_bytes(&bytes, path)
}
