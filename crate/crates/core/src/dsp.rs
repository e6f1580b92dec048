//! Signal conditioning and automated SEMA.
//!
//! Spectra are single-sided amplitude spectra: a sinusoid of amplitude `A`
//! centred on a bin shows up as `A` in that bin. With `N` samples and
//! magnitudes `m`, Parseval reads
//! `sum x^2 = N * (m[0]^2 + sum_{0<k<N/2} m[k]^2 / 2 + m[N/2]^2)`, the last
//! term only for even `N` (see [`Spectrum::energy`]).

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::traces::{Trace, TraceSet};

/// Raised-cosine skirt width used when none is given.
pub const DEFAULT_TRANSITION_HZ: f64 = 1.0e6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Window {
    /// No taper. Exact for bin-centred tones and required for Parseval.
    #[default]
    Rectangular,
    Hann,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub magnitudes: Vec<f64>,
    /// Hz per bin.
    pub freq_resolution: f64,
    n_samples: usize,
}

impl Spectrum {
    pub fn n_bins(&self) -> usize {
        self.magnitudes.len()
    }

    pub fn frequency(&self, bin: usize) -> f64 {
        bin as f64 * self.freq_resolution
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    /// Time-domain energy implied by the spectrum (rectangular window only).
    pub fn energy(&self) -> f64 {
        let n = self.n_samples;
        let last = self.magnitudes.len() - 1;
        let mut e = self.magnitudes[0].powi(2);
        for (k, m) in self.magnitudes.iter().enumerate().skip(1) {
            if n % 2 == 0 && k == last {
                e += m * m;
            } else {
                e += m * m / 2.0;
            }
        }
        e * n as f64
    }

    /// Index of the largest bin, DC excluded.
    pub fn peak_bin(&self) -> usize {
        (1..self.magnitudes.len())
            .max_by(|&a, &b| self.magnitudes[a].total_cmp(&self.magnitudes[b]))
            .unwrap_or(0)
    }
}

fn forward(samples: &[f32], window: Window) -> Vec<Complex<f64>> {
    let n = samples.len();
    let mut buf: Vec<Complex<f64>> = match window {
        Window::Rectangular => samples
            .iter()
            .map(|&x| Complex::new(x as f64, 0.0))
            .collect(),
        Window::Hann => samples
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let w = 0.5 - 0.5 * libm::cos(2.0 * std::f64::consts::PI * i as f64 / n as f64);
                Complex::new(x as f64 * w, 0.0)
            })
            .collect(),
    };
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf
}

pub fn fft_magnitude(trace: &Trace, window: Window) -> Result<Spectrum> {
    let n = trace.samples.len();
    if n < 2 {
        return Err(Error::Geometry(format!(
            "{n} samples is too short for an FFT"
        )));
    }
    let bins = forward(&trace.samples, window);
    // Coherent gain of the window, so tone amplitudes survive tapering.
    let gain = match window {
        Window::Rectangular => 1.0,
        Window::Hann => 0.5,
    };
    let n_bins = n / 2 + 1;
    let magnitudes = (0..n_bins)
        .map(|k| {
            let scale = if k == 0 || (n % 2 == 0 && k == n / 2) {
                1.0
            } else {
                2.0
            };
            scale * bins[k].norm() / (n as f64 * gain)
        })
        .collect();
    Ok(Spectrum {
        magnitudes,
        freq_resolution: trace.sample_rate / n as f64,
        n_samples: n,
    })
}

/// Zero-phase frequency-domain bandpass with raised-cosine skirts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BandpassFilter {
    pub lo: f64,
    pub hi: f64,
    /// Width of each skirt outside `[lo, hi]`; 0 gives a brick wall.
    pub transition: f64,
}

impl BandpassFilter {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            transition: DEFAULT_TRANSITION_HZ,
        }
    }

    pub fn with_transition(mut self, transition: f64) -> Self {
        self.transition = transition;
        self
    }

    fn validate(&self, sample_rate: f64) -> Result<()> {
        let nyquist = sample_rate / 2.0;
        if !(self.lo >= 0.0 && self.lo < self.hi && self.hi <= nyquist) {
            return Err(Error::InvalidBand {
                lo: self.lo,
                hi: self.hi,
                nyquist,
            });
        }
        if !(self.transition.is_finite() && self.transition >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "transition width {}",
                self.transition
            )));
        }
        Ok(())
    }

    /// Gain at frequency `f` (Hz, non-negative).
    pub fn gain(&self, f: f64) -> f64 {
        let tw = self.transition;
        if f >= self.lo && f <= self.hi {
            1.0
        } else if tw > 0.0 && f > self.hi && f < self.hi + tw {
            0.5 * (1.0 + libm::cos(std::f64::consts::PI * (f - self.hi) / tw))
        } else if tw > 0.0 && f < self.lo && f > self.lo - tw {
            0.5 * (1.0 + libm::cos(std::f64::consts::PI * (self.lo - f) / tw))
        } else {
            0.0
        }
    }

    pub fn apply(&self, ts: &TraceSet) -> Result<TraceSet> {
        self.validate(ts.sample_rate())?;
        let n = ts.n_samples();
        let df = ts.sample_rate() / n as f64;
        let mask: Vec<f64> = (0..n)
            .map(|k| self.gain(k.min(n - k) as f64 * df))
            .collect();
        let mut planner = FftPlanner::new();
        let fwd: Arc<dyn Fft<f64>> = planner.plan_fft_forward(n);
        let inv: Arc<dyn Fft<f64>> = planner.plan_fft_inverse(n);
        let samples: Vec<f32> = ts
            .samples()
            .par_chunks(n)
            .flat_map_iter(|row| {
                let mut buf: Vec<Complex<f64>> =
                    row.iter().map(|&x| Complex::new(x as f64, 0.0)).collect();
                fwd.process(&mut buf);
                for (c, m) in buf.iter_mut().zip(&mask) {
                    *c *= *m;
                }
                inv.process(&mut buf);
                buf.into_iter().map(move |c| (c.re / n as f64) as f32)
            })
            .collect();
        Ok(ts.with_samples(samples))
    }
}

pub fn bandpass(ts: &TraceSet, f_lo: f64, f_hi: f64) -> Result<TraceSet> {
    BandpassFilter::new(f_lo, f_hi).apply(ts)
}

/// Lag of `trace` relative to `reference`: the `L` in `[-max_shift,
/// max_shift]` maximising `sum_s ref[s] * trace[(s + L) mod n]` over
/// mean-removed samples. Ties go to the smaller `|L|`, negative first.
fn best_lag(reference: &[f64], trace: &[f32], max_shift: usize) -> isize {
    let n = trace.len();
    let mean = trace.iter().map(|&v| v as f64).sum::<f64>() / n as f64;
    let x: Vec<f64> = trace.iter().map(|&v| v as f64 - mean).collect();
    let score = |lag: isize| -> f64 {
        let off = lag.rem_euclid(n as isize) as usize;
        reference
            .iter()
            .enumerate()
            .map(|(s, r)| r * x[(s + off) % n])
            .sum()
    };
    let mut best = (0isize, score(0));
    for m in 1..=max_shift as isize {
        for lag in [-m, m] {
            let sc = score(lag);
            if sc > best.1 {
                best = (lag, sc);
            }
        }
    }
    best.0
}

/// Circular lags that [`align`] would remove, one per trace.
pub fn alignment_lags(ts: &TraceSet, reference: usize, max_shift: usize) -> Result<Vec<isize>> {
    if reference >= ts.n_traces() {
        return Err(Error::IndexOutOfRange {
            index: reference,
            len: ts.n_traces(),
        });
    }
    let n = ts.n_samples();
    if 2 * max_shift >= n {
        return Err(Error::InvalidArgument(format!(
            "max_shift {max_shift} must be below n_samples / 2 = {}",
            n / 2
        )));
    }
    let r = ts.row(reference);
    let mean = r.iter().map(|&v| v as f64).sum::<f64>() / n as f64;
    let r: Vec<f64> = r.iter().map(|&v| v as f64 - mean).collect();
    Ok(ts
        .samples()
        .par_chunks(n)
        .map(|row| best_lag(&r, row, max_shift))
        .collect())
}

/// Circularly shifts every trace onto the reference trace.
pub fn align(ts: &TraceSet, reference: usize, max_shift: usize) -> Result<TraceSet> {
    let lags = alignment_lags(ts, reference, max_shift)?;
    let n = ts.n_samples();
    let mut samples = Vec::with_capacity(ts.samples().len());
    for (row, lag) in ts.rows().zip(lags) {
        let off = lag.rem_euclid(n as isize) as usize;
        samples.extend_from_slice(&row[off..]);
        samples.extend_from_slice(&row[..off]);
    }
    Ok(ts.with_samples(samples))
}

/// Per-sample mean. The result carries an all-zero plaintext.
pub fn average(ts: &TraceSet) -> Trace {
    let mut acc = vec![0.0f64; ts.n_samples()];
    for row in ts.rows() {
        for (a, &v) in acc.iter_mut().zip(row) {
            *a += v as f64;
        }
    }
    let n = ts.n_traces() as f64;
    Trace {
        samples: acc.into_iter().map(|a| (a / n) as f32).collect(),
        plaintext: [0; 8],
        sample_rate: ts.sample_rate(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralLine {
    pub freq_hz: f64,
    pub magnitude: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmplifiedLine {
    pub freq_hz: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralDiffReport {
    pub new_components: Vec<SpectralLine>,
    pub amplified_components: Vec<AmplifiedLine>,
    /// Multiple of the idle noise floor a line must exceed.
    pub threshold_used: f64,
    pub amp_ratio: f64,
    /// Median idle magnitude, DC excluded.
    pub noise_floor: f64,
    pub freq_resolution: f64,
    pub mean_amplitude_enc: f64,
    pub mean_amplitude_idle: f64,
}

/// Groups runs of flagged bins and keeps the strongest bin of each run.
fn cluster_peaks(flags: &[bool], score: &[f64]) -> Vec<usize> {
    let mut peaks = Vec::new();
    let mut k = 0;
    while k < flags.len() {
        if !flags[k] {
            k += 1;
            continue;
        }
        let mut best = k;
        while k < flags.len() && flags[k] {
            if score[k] > score[best] {
                best = k;
            }
            k += 1;
        }
        peaks.push(best);
    }
    peaks
}

/// Compares averaged encryption and idle spectra.
///
/// The idle noise floor is the median idle magnitude (DC excluded). A bin is
/// considered present in the idle capture when it exceeds
/// `new_ratio * floor`. Bins absent from idle but above that level in the
/// encryption spectrum are new; bins present in both whose magnitude ratio
/// is at least `amp_ratio` are amplified. Contiguous runs are reported once,
/// at their strongest bin.
pub fn spectral_diff(
    enc: &TraceSet,
    idle: &TraceSet,
    new_ratio: f64,
    amp_ratio: f64,
) -> Result<SpectralDiffReport> {
    if enc.n_samples() != idle.n_samples() || enc.sample_rate() != idle.sample_rate() {
        return Err(Error::Geometry(format!(
            "encryption set {}@{} Hz vs idle set {}@{} Hz",
            enc.n_samples(),
            enc.sample_rate(),
            idle.n_samples(),
            idle.sample_rate()
        )));
    }
    if !(new_ratio > 0.0 && amp_ratio > 0.0) {
        return Err(Error::InvalidArgument("ratios must be positive".into()));
    }
    let enc_avg = average(enc);
    let idle_avg = average(idle);
    let es = fft_magnitude(&enc_avg, Window::Rectangular)?;
    let is = fft_magnitude(&idle_avg, Window::Rectangular)?;

    let mut sorted: Vec<f64> = is.magnitudes[1..].to_vec();
    sorted.sort_by(f64::total_cmp);
    let floor = sorted[sorted.len() / 2].max(f64::MIN_POSITIVE);
    let level = new_ratio * floor;

    let bins = es.n_bins();
    let mut new_flags = vec![false; bins];
    let mut amp_flags = vec![false; bins];
    let mut ratio = vec![0.0; bins];
    for k in 1..bins {
        let (e, i) = (es.magnitudes[k], is.magnitudes[k]);
        if i < level {
            new_flags[k] = e > level;
        } else {
            ratio[k] = e / i;
            amp_flags[k] = ratio[k] >= amp_ratio;
        }
    }
    let nyquist = enc.sample_rate() / 2.0;
    let new_components = cluster_peaks(&new_flags, &es.magnitudes)
        .into_iter()
        .map(|k| SpectralLine {
            freq_hz: es.frequency(k),
            magnitude: es.magnitudes[k],
        })
        .filter(|l| l.freq_hz < nyquist)
        .collect();
    let amplified_components = cluster_peaks(&amp_flags, &ratio)
        .into_iter()
        .map(|k| AmplifiedLine {
            freq_hz: es.frequency(k),
            ratio: ratio[k],
        })
        .filter(|l| l.freq_hz < nyquist)
        .collect();
    let mean =
        |t: &Trace| t.samples.iter().map(|&v| v as f64).sum::<f64>() / t.samples.len() as f64;
    Ok(SpectralDiffReport {
        new_components,
        amplified_components,
        threshold_used: new_ratio,
        amp_ratio,
        noise_floor: floor,
        freq_resolution: es.freq_resolution,
        mean_amplitude_enc: mean(&enc_avg),
        mean_amplitude_idle: mean(&idle_avg),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traces::Provenance;

    const FS: f64 = 1000.0;

    fn tone(n: usize, bin: f64, amp: f64) -> Vec<f32> {
        (0..n)
            .map(|i| (amp * (2.0 * std::f64::consts::PI * bin * i as f64 / n as f64).sin()) as f32)
            .collect()
    }

    fn set(rows: Vec<Vec<f32>>) -> TraceSet {
        let n = rows[0].len();
        let count = rows.len();
        TraceSet::new(
            rows.concat(),
            n,
            vec![[0; 8]; count],
            FS,
            Provenance::default(),
        )
        .unwrap()
    }

    fn trace(samples: Vec<f32>) -> Trace {
        Trace {
            samples,
            plaintext: [0; 8],
            sample_rate: FS,
        }
    }

    #[test]
    fn bin_centred_tone() {
        let s = fft_magnitude(&trace(tone(1000, 50.0, 2.0)), Window::Rectangular).unwrap();
        assert_eq!(s.n_bins(), 501);
        assert_eq!(s.peak_bin(), 50);
        assert!((s.magnitudes[50] - 2.0).abs() < 1e-5);
        let side = s
            .magnitudes
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != 50)
            .map(|(_, &m)| m)
            .fold(0.0, f64::max);
        assert!(20.0 * (side / s.magnitudes[50]).log10() <= -60.0);
    }

    #[test]
    fn constant_and_zero_traces() {
        let s = fft_magnitude(&trace(vec![3.0; 64]), Window::Rectangular).unwrap();
        assert!((s.magnitudes[0] - 3.0).abs() < 1e-12);
        assert!(s.magnitudes[1..].iter().all(|&m| m < 1e-12));
        let z = fft_magnitude(&trace(vec![0.0; 64]), Window::Rectangular).unwrap();
        assert!(z.magnitudes.iter().all(|&m| m == 0.0));
        assert!(fft_magnitude(&trace(vec![1.0]), Window::Rectangular).is_err());
    }

    #[test]
    fn hann_keeps_tone_amplitude() {
        let s = fft_magnitude(&trace(tone(1000, 100.0, 1.0)), Window::Hann).unwrap();
        assert_eq!(s.peak_bin(), 100);
        assert!((s.magnitudes[100] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn parseval_odd_and_even() {
        for n in [255usize, 256] {
            let x: Vec<f32> = (0..n).map(|i| ((i * 37 % 11) as f32) - 4.5).collect();
            let s = fft_magnitude(&trace(x.clone()), Window::Rectangular).unwrap();
            let e: f64 = x.iter().map(|&v| (v as f64).powi(2)).sum();
            assert!((s.energy() - e).abs() / e < 1e-6);
        }
    }

    #[test]
    fn bandpass_passes_and_rejects() {
        let n = 1000;
        let ts = set(vec![tone(n, 100.0, 1.0), tone(n, 300.0, 1.0)]);
        let out = BandpassFilter::new(80.0, 120.0)
            .with_transition(10.0)
            .apply(&ts)
            .unwrap();
        let pass = fft_magnitude(&out.trace(0), Window::Rectangular).unwrap();
        assert!((pass.magnitudes[100] - 1.0).abs() < 0.01);
        let stop = fft_magnitude(&out.trace(1), Window::Rectangular).unwrap();
        assert!(20.0 * stop.magnitudes[300].max(1e-300).log10() <= -60.0);
    }

    #[test]
    fn full_band_is_identity() {
        let x: Vec<f32> = (0..128).map(|i| ((i * 7919) % 97) as f32 / 10.0).collect();
        let ts = set(vec![x.clone()]);
        let out = bandpass(&ts, 0.0, FS / 2.0).unwrap();
        for (a, b) in out.row(0).iter().zip(&x) {
            assert!((a - b).abs() <= 1e-5 * b.abs().max(1.0));
        }
    }

    #[test]
    fn invalid_band_rejected() {
        let ts = set(vec![vec![0.0; 16]]);
        assert!(matches!(
            bandpass(&ts, 100.0, 50.0),
            Err(Error::InvalidBand { .. })
        ));
        assert!(bandpass(&ts, 0.0, 600.0).is_err());
        assert!(bandpass(&ts, -1.0, 100.0).is_err());
    }

    #[test]
    fn align_recovers_known_lags() {
        let n = 200;
        let base: Vec<f32> = (0..n)
            .map(|i| {
                if (50..60).contains(&i) {
                    1.0 + (i - 50) as f32
                } else {
                    0.0
                }
            })
            .collect();
        let lags = [0isize, 3, -4, 7, -7];
        let rows = lags
            .iter()
            .map(|&l| {
                (0..n)
                    .map(|i| base[(i as isize - l).rem_euclid(n as isize) as usize])
                    .collect()
            })
            .collect();
        let ts = set(rows);
        assert_eq!(alignment_lags(&ts, 0, 8).unwrap(), lags);
        let aligned = align(&ts, 0, 8).unwrap();
        for row in aligned.rows() {
            assert_eq!(row, base.as_slice());
        }
        assert!(align(&ts, 9, 8).is_err());
        assert!(align(&ts, 0, 100).is_err());
    }

    #[test]
    fn aligned_set_unchanged() {
        let ts = set(vec![tone(64, 3.0, 1.0); 3]);
        assert_eq!(align(&ts, 1, 5).unwrap(), ts);
    }

    #[test]
    fn average_examples() {
        let t: Vec<f32> = (0..10).map(|i| i as f32 - 3.0).collect();
        let single = set(vec![t.clone()]);
        assert_eq!(average(&single).samples, t);
        let neg: Vec<f32> = t.iter().map(|v| -v).collect();
        let pair = set(vec![t, neg]);
        assert!(average(&pair).samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn spectral_diff_identical_sets_empty() {
        let noise: Vec<Vec<f32>> = (0..4)
            .map(|r| {
                (0..256)
                    .map(|i| (((i * 31 + r * 17) % 13) as f32 - 6.0) / 6.0)
                    .collect()
            })
            .collect();
        let a = set(noise);
        let report = spectral_diff(&a, &a, 10.0, 1.5).unwrap();
        assert!(report.new_components.is_empty());
        assert!(report.amplified_components.is_empty());
    }

    #[test]
    fn spectral_diff_geometry_checked() {
        let a = set(vec![vec![0.0; 16]]);
        let b = set(vec![vec![0.0; 32]]);
        assert!(matches!(
            spectral_diff(&a, &b, 10.0, 2.0),
            Err(Error::Geometry(_))
        ));
    }
}
