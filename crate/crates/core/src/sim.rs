//! Seeded synthesis of EM-like trace sets.
//!
//! Each trace is `baseline + noise` everywhere, plus for every state byte `j`
//! a rectangular pulse of height `gain * HW(round-1 S-box output byte j)`
//! starting at `leak_indices[j]`. In carrier mode the pulses are multiplied
//! by `sin(2 pi f n / fs)` evaluated at the absolute sample index `n`. The
//! pulse pattern is moved by a uniform jitter per repetition, and the
//! emitted trace is the mean of `repetitions` independent draws.
//!
//! Every (trace, repetition) pair draws from its own stream keyed by the
//! config seed, so output does not depend on evaluation order or threading.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::leakage::{LeakParams, ROUND1_HW};
use crate::present::{KeyRegister, State64};
use crate::rng::{Stream, DOMAIN_ENCRYPT, DOMAIN_IDLE};
use crate::traces::{Provenance, Trace, TraceSet};

pub const STATE_BYTES: usize = 8;

/// A constant sinusoid present in both encryption and idle captures.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AmbientTone {
    pub freq: f64,
    pub amplitude: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub n_samples: usize,
    /// Hz.
    pub sample_rate: f64,
    pub leak: LeakParams,
    /// Per-sample Gaussian noise standard deviation, before averaging.
    pub noise_std: f64,
    /// Pulse start for each state byte's round-1 S-box output.
    pub leak_indices: [usize; STATE_BYTES],
    pub leak_width: usize,
    /// Hz; `None` is baseband mode.
    pub carrier_freq: Option<f64>,
    /// Maximum pulse displacement in samples (clock-jitter countermeasure).
    pub jitter_max: usize,
    pub repetitions: usize,
    pub ambient: Vec<AmbientTone>,
    pub key: KeyRegister,
    pub seed: u64,
}

/// The bundled example key: `AC DE FB 21 F9 23 43 75 C0 E6`.
pub fn example_key() -> KeyRegister {
    KeyRegister::from_hex("ACDEFB21F9234375C0E6").expect("valid literal")
}

pub const DEFAULT_CARRIER_HZ: f64 = 45.08e6;

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_samples: 5000,
            sample_rate: 250e6,
            leak: LeakParams::default(),
            noise_std: 1.0,
            leak_indices: [500, 1000, 1500, 2000, 2500, 3000, 3500, 4000],
            leak_width: 20,
            carrier_freq: None,
            jitter_max: 0,
            repetitions: 5,
            ambient: Vec::new(),
            key: example_key(),
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_samples < 2 {
            return bad(format!("n_samples = {} (need at least 2)", self.n_samples));
        }
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return bad(format!("sample_rate = {}", self.sample_rate));
        }
        if !self.leak.gain.is_finite() || !self.leak.baseline.is_finite() {
            return bad("gain and baseline must be finite".into());
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return bad(format!("noise_std = {}", self.noise_std));
        }
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1".into());
        }
        if self.leak_width == 0 {
            return bad("leak_width must be at least 1".into());
        }
        let max_leak = *self.leak_indices.iter().max().unwrap();
        let min_leak = *self.leak_indices.iter().min().unwrap();
        if max_leak >= self.n_samples {
            return bad(format!(
                "leak index {max_leak} outside 0..{}",
                self.n_samples
            ));
        }
        if self.jitter_max + max_leak + self.leak_width > self.n_samples {
            return bad(format!(
                "jitter_max + max(leak_indices) + leak_width = {} exceeds n_samples = {}",
                self.jitter_max + max_leak + self.leak_width,
                self.n_samples
            ));
        }
        if min_leak < self.jitter_max {
            return bad(format!(
                "leak index {min_leak} is closer than jitter_max = {} to the trace start",
                self.jitter_max
            ));
        }
        let nyquist = self.sample_rate / 2.0;
        if let Some(f) = self.carrier_freq {
            if !(f.is_finite() && f > 0.0 && f < nyquist) {
                return bad(format!("carrier_freq {f} Hz outside (0, {nyquist})"));
            }
        }
        for tone in &self.ambient {
            if !(tone.freq >= 0.0 && tone.freq < nyquist && tone.amplitude.is_finite()) {
                return bad(format!("ambient tone {} Hz invalid", tone.freq));
            }
        }
        Ok(())
    }

    /// True when two pulse windows share a sample. Allowed, but reported in
    /// provenance notes.
    pub fn has_overlapping_leaks(&self) -> bool {
        let mut starts = self.leak_indices;
        starts.sort_unstable();
        starts.windows(2).any(|w| w[1] - w[0] < self.leak_width)
    }

    /// Sample range that can hold byte `j`'s pulse under any jitter, for
    /// each byte position. This is the simulator's stand-in for a trigger
    /// that localises each S-box lookup.
    pub fn leak_windows(&self) -> [std::ops::Range<usize>; 8] {
        std::array::from_fn(|j| {
            let at = self.leak_indices[j];
            at.saturating_sub(self.jitter_max)
                ..(at + self.leak_width + self.jitter_max).min(self.n_samples)
        })
    }

    fn summary(&self, idle: bool) -> String {
        let mut s = format!(
            "sim{}: n_samples={} sample_rate={} gain={} baseline={} noise_std={} \
             leak_width={} jitter_max={} repetitions={} carrier={}",
            if idle { " (idle)" } else { "" },
            self.n_samples,
            self.sample_rate,
            self.leak.gain,
            self.leak.baseline,
            self.noise_std,
            self.leak_width,
            self.jitter_max,
            self.repetitions,
            self.carrier_freq
                .map_or_else(|| "none".to_string(), |f| f.to_string()),
        );
        if !idle && self.has_overlapping_leaks() {
            s.push_str(" [overlapping leaks]");
        }
        s
    }
}

/// The plaintext sweep: 256 states where every byte of state `i` equals `i`.
pub fn default_sweep() -> Vec<State64> {
    (0..=255u8).map(|i| State64::from_bytes([i; 8])).collect()
}

/// Validated config with precomputed per-sample waveforms.
pub struct Simulator {
    cfg: SimConfig,
    k1: [u8; 8],
    carrier: Option<Vec<f64>>,
    /// Baseline plus ambient tones.
    background: Vec<f64>,
}

fn sinusoid(freq: f64, sample_rate: f64, n: usize) -> impl Iterator<Item = f64> {
    let w = 2.0 * std::f64::consts::PI * freq / sample_rate;
    (0..n).map(move |i| libm::sin(w * i as f64))
}

impl Simulator {
    pub fn new(cfg: SimConfig) -> Result<Self> {
        cfg.validate()?;
        let k1 = cfg.key.first_round_key().to_bytes();
        let carrier = cfg
            .carrier_freq
            .map(|f| sinusoid(f, cfg.sample_rate, cfg.n_samples).collect());
        let mut background = vec![cfg.leak.baseline; cfg.n_samples];
        for tone in &cfg.ambient {
            for (b, v) in
                background
                    .iter_mut()
                    .zip(sinusoid(tone.freq, cfg.sample_rate, cfg.n_samples))
            {
                *b += tone.amplitude * v;
            }
        }
        Ok(Self {
            cfg,
            k1,
            carrier,
            background,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    fn draw(&self, plaintext: Option<[u8; 8]>, domain: u64, trace_index: usize) -> Vec<f32> {
        let cfg = &self.cfg;
        let n = cfg.n_samples;
        let mut acc = vec![0.0f64; n];
        let heights = plaintext.map(|p| {
            let mut h = [0.0f64; STATE_BYTES];
            for j in 0..STATE_BYTES {
                h[j] = cfg.leak.gain * ROUND1_HW[(p[j] ^ self.k1[j]) as usize] as f64;
            }
            h
        });
        for rep in 0..cfg.repetitions {
            let mut rng = Stream::new(cfg.seed, &[domain, trace_index as u64, rep as u64]);
            let shift = rng.symmetric(cfg.jitter_max);
            for (a, b) in acc.iter_mut().zip(&self.background) {
                *a += b;
            }
            if cfg.noise_std > 0.0 {
                for a in acc.iter_mut() {
                    *a += cfg.noise_std * rng.gaussian();
                }
            }
            if let Some(h) = heights {
                for (j, &start) in cfg.leak_indices.iter().enumerate() {
                    let start = (start as isize + shift) as usize;
                    for s in start..start + cfg.leak_width {
                        let c = self.carrier.as_ref().map_or(1.0, |c| c[s]);
                        acc[s] += h[j] * c;
                    }
                }
            }
        }
        let reps = cfg.repetitions as f64;
        acc.into_iter().map(|a| (a / reps) as f32).collect()
    }

    pub fn trace(&self, p: State64, trace_index: usize) -> Trace {
        let plaintext = p.to_bytes();
        Trace {
            samples: self.draw(Some(plaintext), DOMAIN_ENCRYPT, trace_index),
            plaintext,
            sample_rate: self.cfg.sample_rate,
        }
    }

    pub fn set(&self, plaintexts: &[State64]) -> Result<TraceSet> {
        if plaintexts.is_empty() {
            return Err(Error::Empty("plaintext list"));
        }
        let samples: Vec<f32> = plaintexts
            .par_iter()
            .enumerate()
            .flat_map_iter(|(i, p)| self.draw(Some(p.to_bytes()), DOMAIN_ENCRYPT, i))
            .collect();
        TraceSet::new(
            samples,
            self.cfg.n_samples,
            plaintexts.iter().map(|p| p.to_bytes()).collect(),
            self.cfg.sample_rate,
            Provenance {
                idle: false,
                seed: self.cfg.seed,
                key: None,
                note: self.cfg.summary(false),
            },
        )
    }

    pub fn idle_set(&self, n_traces: usize) -> Result<TraceSet> {
        if n_traces == 0 {
            return Err(Error::Empty("idle trace set"));
        }
        let samples: Vec<f32> = (0..n_traces)
            .into_par_iter()
            .flat_map_iter(|i| self.draw(None, DOMAIN_IDLE, i))
            .collect();
        TraceSet::new(
            samples,
            self.cfg.n_samples,
            vec![[0u8; 8]; n_traces],
            self.cfg.sample_rate,
            Provenance {
                idle: true,
                seed: self.cfg.seed,
                key: None,
                note: self.cfg.summary(true),
            },
        )
    }
}

pub fn simulate_trace(p: State64, cfg: &SimConfig, trace_index: usize) -> Result<Trace> {
    Ok(Simulator::new(cfg.clone())?.trace(p, trace_index))
}

pub fn simulate_set(plaintexts: &[State64], cfg: &SimConfig) -> Result<TraceSet> {
    Simulator::new(cfg.clone())?.set(plaintexts)
}

pub fn simulate_idle_set(n_traces: usize, cfg: &SimConfig) -> Result<TraceSet> {
    Simulator::new(cfg.clone())?.idle_set(n_traces)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet() -> SimConfig {
        SimConfig {
            n_samples: 400,
            leak_indices: [20, 60, 100, 140, 180, 220, 260, 300],
            leak_width: 1,
            noise_std: 0.0,
            repetitions: 1,
            key: KeyRegister::new_80(0).unwrap(),
            ..SimConfig::default()
        }
    }

    #[test]
    fn noiseless_zero_key_leaks_four() {
        let t = simulate_trace(State64(0), &quiet(), 0).unwrap();
        let cfg = quiet();
        for (i, &v) in t.samples.iter().enumerate() {
            let expected = if cfg.leak_indices.contains(&i) {
                4.0
            } else {
                0.0
            };
            assert_eq!(v, expected, "sample {i}");
        }
    }

    #[test]
    fn baseline_offsets_everything() {
        let mut cfg = quiet();
        cfg.leak.baseline = 2.0;
        let t = simulate_trace(State64(0), &cfg, 0).unwrap();
        assert_eq!(t.samples[0], 2.0);
        assert_eq!(t.samples[20], 6.0);
    }

    #[test]
    fn averaging_reduces_variance() {
        let mut cfg = quiet();
        cfg.n_samples = 10_400;
        cfg.noise_std = 1.0;
        cfg.repetitions = 25;
        let t = simulate_trace(State64(0), &cfg, 3).unwrap();
        let off: Vec<f64> = t.samples[400..].iter().map(|&v| v as f64).collect();
        let n = off.len() as f64;
        let mean = off.iter().sum::<f64>() / n;
        let var = off.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var - 1.0 / 25.0).abs() < 0.2 / 25.0, "var {var}");
    }

    #[test]
    fn default_sweep_shape() {
        let sweep = default_sweep();
        assert_eq!(sweep.len(), 256);
        assert_eq!(sweep[0x0A].to_bytes(), [0x0A; 8]);
        let ts = simulate_set(&sweep, &quiet()).unwrap();
        assert_eq!(ts.n_traces(), 256);
        assert_eq!(ts.plaintexts()[0x0A], [0x0A; 8]);
    }

    #[test]
    fn single_plaintext_set() {
        let ts = simulate_set(&[State64(1)], &quiet()).unwrap();
        assert_eq!(ts.n_traces(), 1);
        assert!(matches!(simulate_set(&[], &quiet()), Err(Error::Empty(_))));
    }

    #[test]
    fn deterministic_and_order_independent() {
        let mut cfg = quiet();
        cfg.noise_std = 1.0;
        cfg.jitter_max = 5;
        cfg.repetitions = 3;
        let sweep = default_sweep();
        let a = simulate_set(&sweep, &cfg).unwrap();
        let b = simulate_set(&sweep, &cfg).unwrap();
        assert_eq!(a, b);
        let single = simulate_trace(sweep[17], &cfg, 17).unwrap();
        assert_eq!(single.samples, a.row(17));
        cfg.seed = 1;
        assert_ne!(simulate_set(&sweep, &cfg).unwrap().samples(), a.samples());
    }

    #[test]
    fn jitter_moves_whole_pattern() {
        let mut cfg = quiet();
        cfg.jitter_max = 10;
        let ts = simulate_set(&default_sweep(), &cfg).unwrap();
        let mut shifts = std::collections::HashSet::new();
        for row in ts.rows() {
            // Plaintext 0x55.. under the zero key leaks HW 0 everywhere.
            let Some(first) = row.iter().position(|&v| v != 0.0) else {
                continue;
            };
            let first = first as isize;
            let base = cfg.leak_indices.iter().map(|&i| i as isize);
            let shift = base.map(|b| first - b).find(|d| d.abs() <= 10).unwrap();
            shifts.insert(shift);
        }
        assert!(shifts.len() > 5);
    }

    #[test]
    fn idle_is_constant_without_noise() {
        let mut cfg = quiet();
        cfg.leak.baseline = 1.5;
        let ts = simulate_idle_set(4, &cfg).unwrap();
        assert!(ts.samples().iter().all(|&v| v == 1.5));
        assert!(ts.provenance().idle);
        assert!(ts.plaintexts().iter().all(|p| *p == [0; 8]));
    }

    #[test]
    fn idle_mean_close_to_baseline() {
        let mut cfg = quiet();
        cfg.noise_std = 2.0;
        cfg.leak.baseline = -3.0;
        let n = 64;
        let ts = simulate_idle_set(n, &cfg).unwrap();
        let total = ts.samples().len() as f64;
        let mean = ts.samples().iter().map(|&v| v as f64).sum::<f64>() / total;
        assert!((mean + 3.0).abs() < 3.0 * 2.0 / total.sqrt());
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = quiet();
        cfg.repetitions = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = quiet();
        cfg.leak_indices[3] = 400;
        assert!(cfg.validate().is_err());
        let mut cfg = quiet();
        cfg.jitter_max = 100;
        assert!(cfg.validate().is_err());
        let mut cfg = quiet();
        cfg.carrier_freq = Some(125e6);
        assert!(cfg.validate().is_err());
        let mut cfg = quiet();
        cfg.noise_std = -1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn overlap_flagged() {
        let mut cfg = quiet();
        assert!(!cfg.has_overlapping_leaks());
        cfg.leak_width = 50;
        assert!(cfg.has_overlapping_leaks());
        let ts = simulate_set(&[State64(0)], &cfg).unwrap();
        assert!(ts.provenance().note.contains("overlapping"));
    }
}
