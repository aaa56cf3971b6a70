//! Deterministic DSP primitives: preprocessing, autocorrelation, Levinson-Durbin
//! LPC, the LPC-to-cepstrum recursion, median-pitch estimation, the quasi
//! pitch-synchronous spectrum, and an orthonormal DCT-II.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// All analysis runs at this rate; `preprocess` resamples everything else.
pub const TARGET_RATE: u32 = 16_000;

/// Input rates accepted by `preprocess`.
pub const SUPPORTED_RATES: [u32; 6] = [8000, 11025, 16000, 22050, 44100, 48000];

/// Zero-padded transform size used by the pitch-synchronous spectrum.
pub const FFT_SIZE: usize = 512;

/// Number of spectrum bins, covering 0..TARGET_RATE/2 uniformly.
pub const SPECTRUM_BINS: usize = FFT_SIZE / 2 + 1;

/// Floor applied to magnitudes before taking the log.
pub const LOG_FLOOR: f64 = 1e-10;

/// Pre-emphasis coefficient applied before LPC analysis.
pub const PREEMPHASIS: f64 = 0.97;

/// Pitch search range, in Hz.
pub const PITCH_MIN_HZ: f64 = 60.0;
pub const PITCH_MAX_HZ: f64 = 400.0;

/// Normalized-autocorrelation threshold below which a frame counts as unvoiced.
pub const VOICING_THRESHOLD: f64 = 0.3;

/// Fallback pitch period (100 Hz at 16 kHz) when no frame is voiced.
pub const FALLBACK_PERIOD: usize = 160;

/// Minimum segment length for pitch estimation: one 30 ms frame.
pub const MIN_PITCH_SAMPLES: usize = 480;

/// Ground-truth formant frequencies attached to a segment, with a
/// per-formant present/absent mask.
#[derive(Debug, Clone, PartialEq)]
pub struct FormantTargets {
    pub hz: [f64; 4],
    pub mask: [bool; 4],
}

impl FormantTargets {
    /// Masked-in targets must be positive and strictly increasing.
    pub fn validate(&self) -> Result<()> {
        let mut prev = 0.0;
        for i in 0..4 {
            if self.mask[i] {
                if !self.hz[i].is_finite() || self.hz[i] <= prev {
                    return Err(Error::InvalidSpec(format!(
                        "formant targets must be positive and strictly increasing, got {:?}",
                        self.hz
                    )));
                }
                prev = self.hz[i];
            }
        }
        Ok(())
    }
}

/// A mono audio span assumed stationary over its whole duration.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub domain_label: Option<String>,
    pub targets: Option<FormantTargets>,
}

impl Segment {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyInput);
        }
        if sample_rate == 0 {
            return Err(Error::UnsupportedRate(sample_rate));
        }
        Ok(Segment {
            samples,
            sample_rate,
            domain_label: None,
            targets: None,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Forward linear predictor with the convention
/// A(z) = 1 + sum_{k=1}^{p} a_k z^{-k}.
#[derive(Debug, Clone, PartialEq)]
pub struct LpcModel {
    pub order: usize,
    /// a_1..a_p.
    pub coefficients: Vec<f64>,
    /// Final prediction-error power.
    pub gain: f64,
}

/// Log-magnitude spectrum on `SPECTRUM_BINS` uniform bins over 0..8 kHz.
#[derive(Debug, Clone, PartialEq)]
pub struct LogSpectrum {
    pub values: Vec<f64>,
}

impl LogSpectrum {
    /// Bin width in Hz.
    pub fn bin_hz() -> f64 {
        TARGET_RATE as f64 / FFT_SIZE as f64
    }
}

/// Resample to 16 kHz, remove DC, and peak-normalize.
pub fn preprocess(raw: &[f64], rate: u32) -> Result<Segment> {
    if raw.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !SUPPORTED_RATES.contains(&rate) {
        return Err(Error::UnsupportedRate(rate));
    }
    let mut samples = if rate == TARGET_RATE {
        raw.to_vec()
    } else {
        resample_sinc(raw, rate, TARGET_RATE)
    };

    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    for s in samples.iter_mut() {
        *s -= mean;
    }
    let peak = samples.iter().fold(0.0f64, |m, &s| m.max(s.abs()));
    if peak > 0.0 {
        for s in samples.iter_mut() {
            *s /= peak;
        }
    }
    Segment::new(samples, TARGET_RATE)
}

/// Windowed-sinc resampler. Cutoff sits at the lower of the two Nyquist
/// frequencies; a Hann window of `half_width` input samples bounds the kernel.
fn resample_sinc(input: &[f64], from: u32, to: u32) -> Vec<f64> {
    let ratio = to as f64 / from as f64;
    let out_len = ((input.len() as u64 * to as u64 + (from as u64 / 2)) / from as u64) as usize;
    let cutoff = 0.5 * ratio.min(1.0); // cycles per input sample
    let half_width = 32.0f64;
    let n = input.len() as isize;

    let mut out = Vec::with_capacity(out_len);
    for m in 0..out_len {
        let t = m as f64 / ratio; // position in input samples
        let lo = (t - half_width).ceil() as isize;
        let hi = (t + half_width).floor() as isize;
        let mut acc = 0.0;
        for k in lo.max(0)..=hi.min(n - 1) {
            let tau = k as f64 - t;
            let win = 0.5 * (1.0 + (PI * tau / half_width).cos());
            acc += input[k as usize] * sinc_lp(tau, cutoff) * win;
        }
        out.push(acc);
    }
    out
}

/// 2*fc*sinc(2*fc*tau), the ideal low-pass impulse response.
fn sinc_lp(tau: f64, fc: f64) -> f64 {
    let x = 2.0 * fc * tau;
    if x.abs() < 1e-12 {
        2.0 * fc
    } else {
        2.0 * fc * (PI * x).sin() / (PI * x)
    }
}

/// Biased, unnormalized autocorrelation r_k = sum_n x_n x_{n+k}, k = 0..max_lag.
pub fn autocorrelation(frame: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    if max_lag >= frame.len() {
        return Err(Error::LagTooLarge {
            max_lag,
            len: frame.len(),
        });
    }
    let mut r = Vec::with_capacity(max_lag + 1);
    for k in 0..=max_lag {
        let mut acc = 0.0;
        for n in 0..frame.len() - k {
            acc += frame[n] * frame[n + k];
        }
        r.push(acc);
    }
    Ok(r)
}

/// Levinson-Durbin recursion solving the Yule-Walker equations for a forward
/// predictor of order `p`. Returns the coefficients and the final
/// prediction-error power.
pub fn levinson_durbin(r: &[f64], p: usize) -> Result<LpcModel> {
    if p + 1 > r.len() {
        return Err(Error::LagTooLarge {
            max_lag: p,
            len: r.len(),
        });
    }
    if r[0] <= 0.0 {
        return Err(Error::SilentFrame);
    }

    let mut a = vec![0.0f64; p];
    let mut err = r[0];
    for m in 1..=p {
        let mut acc = r[m];
        for i in 1..m {
            acc += a[i - 1] * r[m - i];
        }
        let k = -acc / err;
        if k.abs() >= 1.0 + 1e-9 {
            return Err(Error::UnstableRecursion {
                order: m,
                magnitude: k.abs(),
            });
        }
        a[m - 1] = k;
        for i in 1..=(m - 1) / 2 {
            let tmp = a[i - 1] + k * a[m - 1 - i];
            a[m - 1 - i] += k * a[i - 1];
            a[i - 1] = tmp;
        }
        if (m - 1) % 2 == 1 {
            let mid = (m - 1) / 2 + 1;
            a[mid - 1] += k * a[mid - 1];
        }
        err *= 1.0 - k * k;
    }

    Ok(LpcModel {
        order: p,
        coefficients: a,
        gain: err,
    })
}

/// LPC cepstral coefficients c_1..c_n by the Atal recursion, for the
/// convention A(z) = 1 + sum a_k z^{-k}. The gain term c_0 is excluded.
pub fn lpc_to_cepstrum(model: &LpcModel, n: usize) -> Vec<f64> {
    let p = model.order;
    let a = &model.coefficients;
    let mut c = vec![0.0f64; n];
    for m in 1..=n {
        let mut acc = if m <= p { -a[m - 1] } else { 0.0 };
        let k_lo = if m > p { m - p } else { 1 };
        for k in k_lo..m {
            acc -= (k as f64 / m as f64) * c[k - 1] * a[m - k - 1];
        }
        c[m - 1] = acc;
    }
    c
}

/// Median pitch period over 30 ms frames with a 10 ms hop. Frames whose peak
/// normalized autocorrelation in the 60-400 Hz lag range falls below the
/// voicing threshold are skipped; with no voiced frame the fallback period
/// (100 Hz) is returned.
pub fn estimate_median_pitch(seg: &Segment) -> Result<usize> {
    if seg.len() < MIN_PITCH_SAMPLES {
        return Err(Error::SegmentTooShort {
            got: seg.len(),
            need: MIN_PITCH_SAMPLES,
        });
    }
    let rate = seg.sample_rate as f64;
    let lag_min = (rate / PITCH_MAX_HZ).round() as usize; // 40 at 16 kHz
    let lag_max = (rate / PITCH_MIN_HZ).round() as usize; // 267 at 16 kHz
    let frame_len = MIN_PITCH_SAMPLES;
    let hop = 160;

    let mut periods = Vec::new();
    let mut start = 0;
    while start + frame_len <= seg.len() {
        let frame = &seg.samples[start..start + frame_len];
        let r = autocorrelation(frame, lag_max)?;
        if r[0] > 0.0 {
            let mut best_lag = 0;
            let mut best = f64::NEG_INFINITY;
            for lag in lag_min..=lag_max {
                let v = r[lag] / r[0];
                if v > best {
                    best = v;
                    best_lag = lag;
                }
            }
            if best >= VOICING_THRESHOLD {
                periods.push(best_lag);
            }
        }
        start += hop;
    }

    if periods.is_empty() {
        return Ok(FALLBACK_PERIOD);
    }
    periods.sort_unstable();
    let n = periods.len();
    let median = if n % 2 == 1 {
        periods[n / 2] as f64
    } else {
        (periods[n / 2 - 1] + periods[n / 2]) as f64 / 2.0
    };
    Ok(median.round() as usize)
}

/// Quasi pitch-synchronous log spectrum: non-overlapping frames of exactly
/// `period` samples (last partial frame dropped), each zero-padded to 512 and
/// transformed; magnitude spectra averaged before the floored log.
pub fn pitch_sync_spectrum(seg: &Segment, period: usize) -> Result<LogSpectrum> {
    if period < 16 || period > FFT_SIZE {
        return Err(Error::BadPeriod {
            period,
            min: 16,
            max: FFT_SIZE,
        });
    }
    if seg.len() < period {
        return Err(Error::SegmentTooShort {
            got: seg.len(),
            need: period,
        });
    }

    let n_frames = seg.len() / period;
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(FFT_SIZE);

    let mut avg = vec![0.0f64; SPECTRUM_BINS];
    let mut buf = vec![Complex::new(0.0, 0.0); FFT_SIZE];
    for f in 0..n_frames {
        for (i, slot) in buf.iter_mut().enumerate() {
            let x = if i < period {
                seg.samples[f * period + i]
            } else {
                0.0
            };
            *slot = Complex::new(x, 0.0);
        }
        fft.process(&mut buf);
        for (k, slot) in buf.iter().take(SPECTRUM_BINS).enumerate() {
            avg[k] += slot.norm();
        }
    }
    let scale = 1.0 / n_frames as f64;
    let values = avg
        .into_iter()
        .map(|m| (m * scale).max(LOG_FLOOR).ln())
        .collect();
    Ok(LogSpectrum { values })
}

/// Orthonormal DCT-II, first `n_out` coefficients.
pub fn dct_ii(x: &[f64], n_out: usize) -> Result<Vec<f64>> {
    let n = x.len();
    if n_out > n {
        return Err(Error::DctLength { n_out, len: n });
    }
    let s0 = (1.0 / n as f64).sqrt();
    let sk = (2.0 / n as f64).sqrt();
    let mut out = Vec::with_capacity(n_out);
    for k in 0..n_out {
        let mut acc = 0.0;
        for (i, &xi) in x.iter().enumerate() {
            acc += xi * (PI * k as f64 * (2.0 * i as f64 + 1.0) / (2.0 * n as f64)).cos();
        }
        out.push(acc * if k == 0 { s0 } else { sk });
    }
    Ok(out)
}

/// Full-length inverse of `dct_ii` (orthonormal DCT-III).
pub fn dct_iii(coeffs: &[f64]) -> Vec<f64> {
    let n = coeffs.len();
    let s0 = (1.0 / n as f64).sqrt();
    let sk = (2.0 / n as f64).sqrt();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut acc = coeffs[0] * s0;
        for (k, &ck) in coeffs.iter().enumerate().skip(1) {
            acc += ck * sk * (PI * k as f64 * (2.0 * i as f64 + 1.0) / (2.0 * n as f64)).cos();
        }
        out.push(acc);
    }
    out
}

/// Pre-emphasis filter y_n = x_n - coeff * x_{n-1}.
pub fn preemphasize(x: &[f64], coeff: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    let mut prev = 0.0;
    for &s in x {
        out.push(s - coeff * prev);
        prev = s;
    }
    out
}

/// Hamming window applied in place.
pub fn hamming_window(x: &mut [f64]) {
    let n = x.len();
    if n < 2 {
        return;
    }
    for (i, s) in x.iter_mut().enumerate() {
        *s *= 0.54 - 0.46 * (2.0 * PI * i as f64 / (n - 1) as f64).cos();
    }
}
