//! Evaluation: per-domain MAE reports in Hz, the gate-activation histogram,
//! and a classical LPC-root formant baseline.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex;
use rayon::prelude::*;

use crate::adaptation::selection_gate;
use crate::data_io::Model;
use crate::error::{Error, Result};
use crate::features::apply_normalizer;
use crate::signal::{self, Segment};
use crate::training::{load_examples, load_segment, Manifest};

/// LPC order used by the root baseline.
pub const BASELINE_LPC_ORDER: usize = 12;

/// Frequency window for qualifying baseline roots, Hz.
pub const BASELINE_FREQ_RANGE: (f64, f64) = (90.0, 4000.0);

/// Bandwidth cutoff for qualifying baseline roots, Hz.
pub const BASELINE_MAX_BANDWIDTH: f64 = 400.0;

/// Milder pre-emphasis than the feature front end; 0.97 tilts the spectrum
/// enough to bias F1 upward by 40-60 Hz on all-pole vowels.
pub const BASELINE_PREEMPHASIS: f64 = 0.5;

/// Per-domain, per-formant mean absolute error in Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalCell {
    pub domain: String,
    /// MAE per formant; F4 is computed but flagged non-evaluative.
    pub mae_hz: [f64; 4],
    /// Segments contributing to each formant's MAE.
    pub counts: [usize; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub method: String,
    pub cells: Vec<EvalCell>,
}

impl EvalReport {
    /// Cell for one domain, if evaluated.
    pub fn cell(&self, domain: &str) -> Option<&EvalCell> {
        self.cells.iter().find(|c| c.domain == domain)
    }

    /// MAE pooled over all domains for formant `i` (0-based).
    pub fn pooled_mae(&self, i: usize) -> Option<f64> {
        let total: usize = self.cells.iter().map(|c| c.counts[i]).sum();
        if total == 0 {
            return None;
        }
        let sum: f64 = self
            .cells
            .iter()
            .map(|c| c.mae_hz[i] * c.counts[i] as f64)
            .sum();
        Some(sum / total as f64)
    }

    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("method,domain,f1_mae_hz,f2_mae_hz,f3_mae_hz,f4_mae_hz,n1,n2,n3,n4\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{:.4},{:.4},{:.4},{:.4},{},{},{},{}\n",
                self.method,
                c.domain,
                c.mae_hz[0],
                c.mae_hz[1],
                c.mae_hz[2],
                c.mae_hz[3],
                c.counts[0],
                c.counts[1],
                c.counts[2],
                c.counts[3]
            ));
        }
        out
    }

    /// Aligned text table; the F4 column is labeled non-evaluative.
    pub fn to_table(&self) -> String {
        let mut out = format!("{:<14} {:>10} {:>10} {:>10} {:>12}\n", "domain", "F1", "F2", "F3", "F4 (n/e)");
        out.push_str(&format!("method: {}\n", self.method));
        for c in &self.cells {
            out.push_str(&format!(
                "{:<14} {:>10.1} {:>10.1} {:>10.1} {:>12.1}\n",
                c.domain, c.mae_hz[0], c.mae_hz[1], c.mae_hz[2], c.mae_hz[3]
            ));
        }
        out
    }
}

/// Gate activations bucketed into 10 equal bins over [0, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct GateHistogram {
    pub domain: String,
    pub counts: [usize; 10],
}

impl GateHistogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Fraction of mass in the best window of 3 adjacent buckets.
    pub fn concentration(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let best: usize = (0..8)
            .map(|i| self.counts[i] + self.counts[i + 1] + self.counts[i + 2])
            .max()
            .unwrap();
        best as f64 / total as f64
    }

    pub fn occupied_buckets(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bucket_lo,bucket_hi,count\n");
        for (i, &c) in self.counts.iter().enumerate() {
            out.push_str(&format!("{:.1},{:.1},{}\n", i as f64 / 10.0, (i + 1) as f64 / 10.0, c));
        }
        out
    }
}

/// Per-formant absolute errors in Hz grouped by domain, summed in a fixed
/// order so the report does not depend on manifest ordering.
fn accumulate_errors(
    per_entry: Vec<(String, [Option<f64>; 4])>,
    method: &str,
) -> EvalReport {
    let mut by_domain: BTreeMap<String, [Vec<f64>; 4]> = BTreeMap::new();
    for (domain, errs) in per_entry {
        let slot = by_domain.entry(domain).or_default();
        for i in 0..4 {
            if let Some(e) = errs[i] {
                slot[i].push(e);
            }
        }
    }
    let cells = by_domain
        .into_iter()
        .map(|(domain, mut errs)| {
            let mut mae = [0.0; 4];
            let mut counts = [0usize; 4];
            for i in 0..4 {
                errs[i].sort_by(f64::total_cmp);
                counts[i] = errs[i].len();
                if counts[i] > 0 {
                    mae[i] = errs[i].iter().sum::<f64>() / counts[i] as f64;
                }
            }
            EvalCell {
                domain,
                mae_hz: mae,
                counts,
            }
        })
        .collect();
    EvalReport {
        method: method.to_string(),
        cells,
    }
}

/// Per-formant MAE of a trained model over a manifest. DA models are scored
/// on the adapted estimate g; core models on f.
pub fn mae_report(model: &Model, manifest: &Manifest) -> Result<EvalReport> {
    if manifest.entries.is_empty() {
        return Err(Error::EmptyCollection);
    }
    let examples = load_examples(manifest)?;
    let normalizer = &model.core().normalizer;
    let per_entry: Vec<(String, [Option<f64>; 4])> = examples
        .par_iter()
        .map(|e| {
            let input = apply_normalizer(normalizer, &e.features);
            let pred_khz = match model {
                Model::Core(core) => core.predict_khz(&input)?,
                Model::Da(da) => da.predict_khz(&input)?.1,
            };
            let mut errs = [None; 4];
            for i in 0..4 {
                if e.mask[i] {
                    let pred_hz = pred_khz[i] / normalizer.target_scale;
                    errs[i] = Some((pred_hz - e.targets_hz[i]).abs());
                }
            }
            Ok((e.domain.clone(), errs))
        })
        .collect::<Result<Vec<_>>>()?;
    let method = match model {
        Model::Core(_) => "core",
        Model::Da(_) => "domain_adaptation",
    };
    Ok(accumulate_errors(per_entry, method))
}

/// Gate activation histogram of a DA model over a manifest.
pub fn s_histogram(da: &crate::adaptation::DaModel, manifest: &Manifest) -> Result<GateHistogram> {
    if manifest.entries.is_empty() {
        return Err(Error::EmptyCollection);
    }
    let examples = load_examples(manifest)?;
    let mut counts = [0usize; 10];
    for e in &examples {
        let input = apply_normalizer(&da.core.normalizer, &e.features);
        let s = selection_gate(&input, &da.adapter)?;
        let bucket = ((s * 10.0).floor() as usize).min(9);
        counts[bucket] += 1;
    }
    Ok(GateHistogram {
        domain: manifest.name.clone(),
        counts,
    })
}

/// Roots of the monic polynomial z^p + c[0] z^{p-1} + ... + c[p-1], via the
/// companion matrix.
fn monic_roots(coeffs: &[f64]) -> Result<Vec<Complex<f64>>> {
    let p = coeffs.len();
    if p == 0 {
        return Ok(Vec::new());
    }
    if coeffs.iter().any(|c| !c.is_finite()) {
        return Err(Error::RootFinding("non-finite coefficient".into()));
    }
    let mut m = DMatrix::<f64>::zeros(p, p);
    for (j, &c) in coeffs.iter().enumerate() {
        m[(0, j)] = -c;
    }
    for i in 1..p {
        m[(i, i - 1)] = 1.0;
    }
    Ok(m.complex_eigenvalues().iter().copied().collect())
}

/// Classical formant baseline: order-12 LPC on the pre-emphasized,
/// Hamming-windowed segment; qualifying roots (positive imaginary part,
/// 90-4000 Hz, bandwidth < 400 Hz) sorted ascending give F1-F3. Missing
/// slots are reported absent.
pub fn lpc_root_baseline(seg: &Segment) -> Result<[Option<f64>; 3]> {
    let mut windowed = signal::preemphasize(&seg.samples, BASELINE_PREEMPHASIS);
    signal::hamming_window(&mut windowed);
    let r = signal::autocorrelation(&windowed, BASELINE_LPC_ORDER)?;
    let model = signal::levinson_durbin(&r, BASELINE_LPC_ORDER)?;

    let roots = match monic_roots(&model.coefficients) {
        Ok(r) => r,
        Err(_) => return Ok([None; 3]),
    };
    let rate = seg.sample_rate as f64;
    let mut formants: Vec<f64> = roots
        .into_iter()
        .filter(|z| z.im > 0.0)
        .filter_map(|z| {
            let freq = z.arg() * rate / (2.0 * std::f64::consts::PI);
            let bandwidth = -z.norm().ln() * rate / std::f64::consts::PI;
            if freq >= BASELINE_FREQ_RANGE.0
                && freq <= BASELINE_FREQ_RANGE.1
                && bandwidth < BASELINE_MAX_BANDWIDTH
            {
                Some(freq)
            } else {
                None
            }
        })
        .collect();
    formants.sort_by(f64::total_cmp);
    let mut out = [None; 3];
    for (slot, f) in out.iter_mut().zip(formants.iter()) {
        *slot = Some(*f);
    }
    Ok(out)
}

/// MAE report of the LPC-root baseline over a manifest (F1-F3 only; slots the
/// baseline misses are skipped).
pub fn baseline_report(manifest: &Manifest) -> Result<EvalReport> {
    if manifest.entries.is_empty() {
        return Err(Error::EmptyCollection);
    }
    let per_entry: Vec<(String, [Option<f64>; 4])> = manifest
        .entries
        .par_iter()
        .map(|entry| {
            let seg = load_segment(entry, &manifest.base_dir)?;
            let est = lpc_root_baseline(&seg)?;
            let mut errs = [None; 4];
            for i in 0..3 {
                if entry.mask[i] {
                    if let Some(f) = est[i] {
                        errs[i] = Some((f - entry.targets_hz[i]).abs());
                    }
                }
            }
            Ok((entry.domain.clone(), errs))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(accumulate_errors(per_entry, "lpc_root"))
}
