use std::ops::Range;

use crate::error::{Error, Result};
use crate::present::{KeyRegister, State64};

/// A single sampled waveform and the plaintext that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub samples: Vec<f32>,
    pub plaintext: [u8; 8],
    pub sample_rate: f64,
}

/// Where a trace set came from.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Provenance {
    /// No encryption activity (null-control set).
    pub idle: bool,
    pub seed: u64,
    /// Only present for white-box evaluation sets.
    pub key: Option<KeyRegister>,
    pub note: String,
}

/// `n_traces x n_samples` waveforms stored row-major, with per-trace
/// plaintexts.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceSet {
    samples: Vec<f32>,
    n_samples: usize,
    plaintexts: Vec<[u8; 8]>,
    sample_rate: f64,
    provenance: Provenance,
}

impl TraceSet {
    pub fn new(
        samples: Vec<f32>,
        n_samples: usize,
        plaintexts: Vec<[u8; 8]>,
        sample_rate: f64,
        provenance: Provenance,
    ) -> Result<Self> {
        if plaintexts.is_empty() {
            return Err(Error::Empty("trace set"));
        }
        if n_samples == 0 {
            return Err(Error::Geometry("traces have zero samples".into()));
        }
        if samples.len() != n_samples * plaintexts.len() {
            return Err(Error::Geometry(format!(
                "{} samples for {} traces of {} samples",
                samples.len(),
                plaintexts.len(),
                n_samples
            )));
        }
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::Geometry(format!("sample rate {sample_rate}")));
        }
        Ok(Self {
            samples,
            n_samples,
            plaintexts,
            sample_rate,
            provenance,
        })
    }

    pub fn from_traces(traces: Vec<Trace>, provenance: Provenance) -> Result<Self> {
        let first = traces.first().ok_or(Error::Empty("trace set"))?;
        let n_samples = first.samples.len();
        let sample_rate = first.sample_rate;
        let mut samples = Vec::with_capacity(n_samples * traces.len());
        let mut plaintexts = Vec::with_capacity(traces.len());
        for t in &traces {
            if t.samples.len() != n_samples {
                return Err(Error::Geometry("ragged traces".into()));
            }
            if t.sample_rate != sample_rate {
                return Err(Error::Geometry("mixed sample rates".into()));
            }
            samples.extend_from_slice(&t.samples);
            plaintexts.push(t.plaintext);
        }
        Self::new(samples, n_samples, plaintexts, sample_rate, provenance)
    }

    pub fn n_traces(&self) -> usize {
        self.plaintexts.len()
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.samples[i * self.n_samples..(i + 1) * self.n_samples]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.samples.chunks_exact(self.n_samples)
    }

    pub fn plaintexts(&self) -> &[[u8; 8]] {
        &self.plaintexts
    }

    pub fn plaintext(&self, i: usize) -> State64 {
        State64::from_bytes(self.plaintexts[i])
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn provenance_mut(&mut self) -> &mut Provenance {
        &mut self.provenance
    }

    pub fn trace(&self, i: usize) -> Trace {
        Trace {
            samples: self.row(i).to_vec(),
            plaintext: self.plaintexts[i],
            sample_rate: self.sample_rate,
        }
    }

    /// Same plaintexts and metadata, new samples of identical geometry.
    pub(crate) fn with_samples(&self, samples: Vec<f32>) -> Self {
        debug_assert_eq!(samples.len(), self.samples.len());
        Self {
            samples,
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> Self {
        Self {
            samples: Vec::new(),
            n_samples: self.n_samples,
            plaintexts: self.plaintexts.clone(),
            sample_rate: self.sample_rate,
            provenance: self.provenance.clone(),
        }
    }

    /// Restricts every trace to the sample range `window`.
    pub fn window(&self, window: Range<usize>) -> Result<Self> {
        if window.start >= window.end || window.end > self.n_samples {
            return Err(Error::InvalidArgument(format!(
                "window {}..{} outside 0..{}",
                window.start, window.end, self.n_samples
            )));
        }
        let width = window.end - window.start;
        let mut samples = Vec::with_capacity(width * self.n_traces());
        for row in self.rows() {
            samples.extend_from_slice(&row[window.clone()]);
        }
        Ok(Self {
            samples,
            n_samples: width,
            ..self.clone_meta()
        })
    }

    /// The first `n` traces.
    pub fn head(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.n_traces() {
            return Err(Error::IndexOutOfRange {
                index: n,
                len: self.n_traces(),
            });
        }
        Ok(Self {
            samples: self.samples[..n * self.n_samples].to_vec(),
            n_samples: self.n_samples,
            plaintexts: self.plaintexts[..n].to_vec(),
            sample_rate: self.sample_rate,
            provenance: self.provenance.clone(),
        })
    }
}
