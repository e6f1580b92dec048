//! Correlation electromagnetic analysis of the first PRESENT round.
//!
//! For one state byte position, every key-byte guess `k` predicts the
//! Hamming weight of the round-1 S-box output for each trace. Those
//! predictions are correlated against every sample column of the trace set,
//! and guesses are ranked by their strongest absolute correlation.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::BandpassFilter;
use crate::error::{Error, Result};
use crate::leakage::ROUND1_HW;
use crate::present::{encrypt_with_schedule, key_schedule, KeyRegister, State64};
use crate::traces::TraceSet;

pub const GUESSES: usize = 256;

/// Traces folded into the co-moments per parallel pass.
const CHUNK: usize = 64;

/// `hw[k][t] = HW(S(p_t[byte] ^ k))`, stored row-major by guess.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HypothesisMatrix {
    hw: Vec<u8>,
    n_traces: usize,
    byte_index: usize,
}

impl HypothesisMatrix {
    pub fn n_traces(&self) -> usize {
        self.n_traces
    }

    pub fn byte_index(&self) -> usize {
        self.byte_index
    }

    pub fn row(&self, guess: usize) -> &[u8] {
        &self.hw[guess * self.n_traces..(guess + 1) * self.n_traces]
    }

    pub fn get(&self, guess: usize, trace: usize) -> u8 {
        self.hw[guess * self.n_traces + trace]
    }

    /// All 256 predictions for one trace, the layout [`CorrelationAccumulator::update`] takes.
    pub fn column(&self, trace: usize) -> [u8; GUESSES] {
        std::array::from_fn(|k| self.get(k, trace))
    }
}

pub fn build_hypotheses(plaintexts: &[[u8; 8]], byte_index: usize) -> Result<HypothesisMatrix> {
    if byte_index >= 8 {
        return Err(Error::IndexOutOfRange {
            index: byte_index,
            len: 8,
        });
    }
    let n = plaintexts.len();
    let mut hw = vec![0u8; GUESSES * n];
    for (k, row) in hw.chunks_exact_mut(n.max(1)).enumerate().take(GUESSES) {
        for (h, p) in row.iter_mut().zip(plaintexts) {
            *h = ROUND1_HW[(p[byte_index] ^ k as u8) as usize];
        }
    }
    Ok(HypothesisMatrix {
        hw,
        n_traces: n,
        byte_index,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pearson {
    pub rho: f64,
    /// One of the inputs had zero variance; `rho` is then 0.
    pub degenerate: bool,
}

/// Sample Pearson correlation, two-pass.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Pearson> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Geometry(format!(
            "pearson needs equal lengths >= 2, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(Pearson {
            rho: 0.0,
            degenerate: true,
        });
    }
    Ok(Pearson {
        rho: (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0),
        degenerate: false,
    })
}

/// One-pass correlation state for all 256 guesses against every sample.
///
/// Keeps running means and centred second moments (Welford updates) instead
/// of raw power sums, so the result does not suffer from cancellation when
/// traces sit on a large baseline. Traces can be fed in any number of
/// chunks; the result depends only on trace order.
#[derive(Clone, Debug)]
pub struct CorrelationAccumulator {
    n_samples: usize,
    count: usize,
    mean_x: Vec<f64>,
    m2_x: Vec<f64>,
    mean_h: Vec<f64>,
    m2_h: Vec<f64>,
    /// `GUESSES x n_samples` co-moments.
    comoment: Vec<f64>,
}

impl CorrelationAccumulator {
    pub fn new(n_samples: usize) -> Self {
        Self {
            n_samples,
            count: 0,
            mean_x: vec![0.0; n_samples],
            m2_x: vec![0.0; n_samples],
            mean_h: vec![0.0; GUESSES],
            m2_h: vec![0.0; GUESSES],
            comoment: vec![0.0; GUESSES * n_samples],
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Folds in `rows.len() / n_samples` traces; `hyps[t][k]` is guess
    /// `k`'s prediction for trace `t` of the chunk.
    pub fn update(&mut self, rows: &[f32], hyps: &[[u8; GUESSES]]) -> Result<()> {
        let s = self.n_samples;
        if rows.len() != hyps.len() * s {
            return Err(Error::Geometry(format!(
                "{} samples for {} hypothesis columns of {} samples",
                rows.len(),
                hyps.len(),
                s
            )));
        }
        let m = hyps.len();
        // Centred sample deviations (against the updated mean) per trace.
        let mut dev = vec![0.0f64; m * s];
        let mut counts = Vec::with_capacity(m);
        for (row, d) in rows.chunks_exact(s).zip(dev.chunks_exact_mut(s)) {
            self.count += 1;
            let n = self.count as f64;
            counts.push(n);
            for i in 0..s {
                let x = row[i] as f64;
                let delta = x - self.mean_x[i];
                self.mean_x[i] += delta / n;
                let d_new = x - self.mean_x[i];
                self.m2_x[i] += delta * d_new;
                d[i] = d_new;
            }
        }
        self.comoment
            .par_chunks_mut(s)
            .zip(self.mean_h.par_iter_mut())
            .zip(self.m2_h.par_iter_mut())
            .enumerate()
            .for_each(|(k, ((co, mean), m2))| {
                for t in 0..m {
                    let h = hyps[t][k] as f64;
                    let delta = h - *mean;
                    *mean += delta / counts[t];
                    *m2 += delta * (h - *mean);
                    if delta != 0.0 {
                        for (c, d) in co.iter_mut().zip(&dev[t * s..(t + 1) * s]) {
                            *c += delta * d;
                        }
                    }
                }
            });
        Ok(())
    }

    pub fn finalize(&self, byte_index: usize) -> CorrelationSurface {
        let s = self.n_samples;
        let mut rho = vec![0.0; GUESSES * s];
        let mut degenerate = vec![false; GUESSES * s];
        rho.par_chunks_mut(s)
            .zip(degenerate.par_chunks_mut(s))
            .enumerate()
            .for_each(|(k, (r, dg))| {
                let vh = self.m2_h[k];
                for i in 0..s {
                    let vx = self.m2_x[i];
                    if vh <= 0.0 || vx <= 0.0 {
                        dg[i] = true;
                    } else {
                        let c = self.comoment[k * s + i];
                        r[i] = (c / (vh.sqrt() * vx.sqrt())).clamp(-1.0, 1.0);
                    }
                }
            });
        CorrelationSurface {
            byte_index,
            n_samples: s,
            rho,
            degenerate,
        }
    }
}

/// `GUESSES x n_samples` Pearson coefficients for one byte position.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationSurface {
    pub byte_index: usize,
    n_samples: usize,
    rho: Vec<f64>,
    /// Cells where the guess row or the sample column had zero variance.
    degenerate: Vec<bool>,
}

impl CorrelationSurface {
    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn row(&self, guess: usize) -> &[f64] {
        &self.rho[guess * self.n_samples..(guess + 1) * self.n_samples]
    }

    pub fn get(&self, guess: usize, sample: usize) -> f64 {
        self.rho[guess * self.n_samples + sample]
    }

    pub fn is_degenerate(&self, guess: usize, sample: usize) -> bool {
        self.degenerate[guess * self.n_samples + sample]
    }

    pub fn max_abs(&self) -> f64 {
        self.rho.iter().fold(0.0, |m, r| m.max(r.abs()))
    }
}

pub fn correlate(ts: &TraceSet, h: &HypothesisMatrix) -> Result<CorrelationSurface> {
    if ts.n_traces() != h.n_traces() {
        return Err(Error::Geometry(format!(
            "{} traces but {} hypothesis columns",
            ts.n_traces(),
            h.n_traces()
        )));
    }
    if ts.n_traces() < 2 {
        return Err(Error::Geometry(
            "correlation needs at least 2 traces".into(),
        ));
    }
    let s = ts.n_samples();
    let mut acc = CorrelationAccumulator::new(s);
    for start in (0..ts.n_traces()).step_by(CHUNK) {
        let end = (start + CHUNK).min(ts.n_traces());
        let hyps: Vec<[u8; GUESSES]> = (start..end).map(|t| h.column(t)).collect();
        acc.update(&ts.samples()[start * s..end * s], &hyps)?;
    }
    Ok(acc.finalize(h.byte_index()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub key_byte: u8,
    /// Largest `|rho|` over the analysed samples.
    pub score: f64,
    /// Sample index of that peak, in original trace coordinates.
    pub sample: usize,
    /// Sign of `rho` at the peak (+1 or -1; 0 when the row is all zero).
    pub sign: i8,
}

/// Candidates for one byte position, best first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyRanking {
    pub byte_index: usize,
    pub entries: Vec<RankEntry>,
}

impl KeyRanking {
    pub fn best(&self) -> &RankEntry {
        &self.entries[0]
    }

    /// 0-based position of `key_byte` in the ranking.
    pub fn rank_of(&self, key_byte: u8) -> usize {
        self.entries
            .iter()
            .position(|e| e.key_byte == key_byte)
            .expect("ranking covers all 256 guesses")
    }
}

pub fn rank_keys(surface: &CorrelationSurface) -> KeyRanking {
    rank_with_offset(surface, 0)
}

fn rank_with_offset(surface: &CorrelationSurface, offset: usize) -> KeyRanking {
    let mut entries: Vec<RankEntry> = (0..GUESSES)
        .map(|k| {
            let (mut best, mut at) = (0.0f64, 0usize);
            for (i, r) in surface.row(k).iter().enumerate() {
                if r.abs() > best {
                    best = r.abs();
                    at = i;
                }
            }
            let r = surface.get(k, at);
            RankEntry {
                key_byte: k as u8,
                score: best,
                sample: at + offset,
                sign: if r > 0.0 {
                    1
                } else if r < 0.0 {
                    -1
                } else {
                    0
                },
            }
        })
        .collect();
    // Stable sort keeps ascending key order among equal scores.
    entries.sort_by(|a, b| b.score.total_cmp(&a.score));
    KeyRanking {
        byte_index: surface.byte_index,
        entries,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackOptions {
    pub band: Option<BandpassFilter>,
    /// Sample range analysed after filtering (trigger-based localisation).
    pub window: Option<Range<usize>>,
    /// Per-position windows in original sample coordinates, indexed by
    /// byte position. Used instead of `window` when set; this is what keeps
    /// a byte's hypotheses from matching another byte's leak when
    /// plaintext bytes are correlated, as in the default sweep.
    pub byte_windows: Option<[Range<usize>; 8]>,
    /// State byte positions to attack.
    pub bytes: Vec<usize>,
    pub keep_surfaces: bool,
}

impl Default for AttackOptions {
    fn default() -> Self {
        Self {
            band: None,
            window: None,
            byte_windows: None,
            bytes: (0..8).collect(),
            keep_surfaces: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub traces_used: usize,
    pub samples_used: usize,
    pub window_start: usize,
    pub band_hz: Option<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackResult {
    /// One ranking per attacked byte position, in ascending position order.
    pub rankings: Vec<KeyRanking>,
    /// K1 assembled from rank-1 guesses; only when all 8 bytes were attacked.
    pub round_key: Option<State64>,
    pub full_key: Option<KeyRegister>,
    pub surfaces: Vec<CorrelationSurface>,
    pub diagnostics: Diagnostics,
}

impl AttackResult {
    pub fn ranking(&self, byte_index: usize) -> Option<&KeyRanking> {
        self.rankings.iter().find(|r| r.byte_index == byte_index)
    }
}

/// Bits of the 80-bit key register that state byte `j` of K1 comes from,
/// as `(high, low)`: byte 0 is register bits 79..72.
pub fn register_bits(byte_index: usize) -> (u32, u32) {
    let hi = 79 - 8 * byte_index as u32;
    (hi, hi - 7)
}

pub fn attack_round_key(ts: &TraceSet, options: &AttackOptions) -> Result<AttackResult> {
    if ts.n_traces() < 2 {
        return Err(Error::Geometry("attack needs at least 2 traces".into()));
    }
    let mut bytes = options.bytes.clone();
    bytes.sort_unstable();
    bytes.dedup();
    if bytes.is_empty() {
        return Err(Error::Empty("byte selection"));
    }
    if let Some(&b) = bytes.iter().find(|&&b| b >= 8) {
        return Err(Error::IndexOutOfRange { index: b, len: 8 });
    }
    if options.window.is_some() && options.byte_windows.is_some() {
        return Err(Error::InvalidArgument(
            "a global window and per-byte windows are mutually exclusive".into(),
        ));
    }
    let filtered;
    let ts = match &options.band {
        Some(f) => {
            filtered = f.apply(ts)?;
            &filtered
        }
        None => ts,
    };
    let windowed;
    let (ts, offset) = match &options.window {
        Some(w) => {
            windowed = ts.window(w.clone())?;
            (&windowed, w.start)
        }
        None => (ts, 0),
    };
    let per_byte: Vec<(KeyRanking, CorrelationSurface)> = bytes
        .par_iter()
        .map(|&b| {
            let h = build_hypotheses(ts.plaintexts(), b)?;
            match &options.byte_windows {
                Some(windows) => {
                    let w = &windows[b];
                    let surface = correlate(&ts.window(w.clone())?, &h)?;
                    Ok((rank_with_offset(&surface, w.start), surface))
                }
                None => {
                    let surface = correlate(ts, &h)?;
                    Ok((rank_with_offset(&surface, offset), surface))
                }
            }
        })
        .collect::<Result<_>>()?;
    let (rankings, surfaces): (Vec<_>, Vec<_>) = per_byte.into_iter().unzip();
    let round_key = (rankings.len() == 8)
        .then(|| State64::from_bytes(std::array::from_fn(|j| rankings[j].best().key_byte)));
    Ok(AttackResult {
        rankings,
        round_key,
        full_key: None,
        surfaces: if options.keep_surfaces {
            surfaces
        } else {
            Vec::new()
        },
        diagnostics: Diagnostics {
            traces_used: ts.n_traces(),
            samples_used: ts.n_samples(),
            window_start: offset,
            band_hz: options.band.map(|f| (f.lo, f.hi)),
        },
    })
}

#[derive(Debug, Error, PartialEq)]
pub enum KeySearchError {
    #[error("no 80-bit key with this round key matches the known pair")]
    NotFound,
    #[error("{} keys match the known pair", .0.len())]
    Ambiguous(Vec<KeyRegister>),
}

/// Number of register bits not covered by K1 in PRESENT-80.
pub const UNKNOWN_KEY_BITS: u32 = 16;

/// Candidate 80-bit keys whose leftmost 64 bits equal `k1`.
pub fn key_candidates(k1: State64) -> impl ParallelIterator<Item = KeyRegister> {
    (0..1u32 << UNKNOWN_KEY_BITS)
        .into_par_iter()
        .map(move |low| {
            KeyRegister::new_80(((k1.0 as u128) << UNKNOWN_KEY_BITS) | low as u128)
                .expect("80-bit value")
        })
}

/// Completes K1 to the full PRESENT-80 key with one known
/// plaintext/ciphertext pair by trying all 2^16 low register bits.
pub fn recover_full_key(
    k1: State64,
    plaintext: State64,
    ciphertext: State64,
) -> std::result::Result<KeyRegister, KeySearchError> {
    let mut hits: Vec<KeyRegister> = key_candidates(k1)
        .filter(|key| encrypt_with_schedule(plaintext, &key_schedule(key)) == ciphertext)
        .collect();
    match hits.len() {
        0 => Err(KeySearchError::NotFound),
        1 => Ok(hits.remove(0)),
        _ => Err(KeySearchError::Ambiguous(hits)),
    }
}
