//! Repeated seeded attack experiments and their summary statistics.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::cema::{attack_round_key, AttackOptions, KeyRanking};
use crate::error::{Error, Result};
use crate::present::State64;
use crate::rng::{stream_key, Stream, DOMAIN_TRIAL};
use crate::sim::{SimConfig, Simulator};

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

/// Below this many successes or failures the CI switches to Clopper-Pearson.
const EXACT_CI_BELOW: f64 = 5.0;

/// Binomial proportion with a 95% confidence interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub exact: bool,
}

impl Proportion {
    pub fn new(successes: usize, n: usize) -> Self {
        assert!(n > 0 && successes <= n);
        let nf = n as f64;
        let x = successes as f64;
        let p = x / nf;
        if x < EXACT_CI_BELOW || nf - x < EXACT_CI_BELOW {
            let (ci_low, ci_high) = clopper_pearson(successes, n, 0.05);
            Self {
                rate: p,
                ci_low,
                ci_high,
                exact: true,
            }
        } else {
            let hw = Z95 * (p * (1.0 - p) / nf).sqrt();
            Self {
                rate: p,
                ci_low: (p - hw).max(0.0),
                ci_high: (p + hw).min(1.0),
                exact: false,
            }
        }
    }

    pub fn half_width(&self) -> f64 {
        (self.ci_high - self.ci_low) / 2.0
    }
}

/// Exact two-sided binomial interval at level `1 - alpha`.
/// Beta(a, b) quantile by bisection on the regularised incomplete beta
/// function. `Beta::inverse_cdf` stops at about 1e-5, too coarse for
/// pinned interval bounds.
fn beta_quantile(a: f64, b: f64, p: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if beta_reg(a, b, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn clopper_pearson(successes: usize, n: usize, alpha: f64) -> (f64, f64) {
    let x = successes as f64;
    let nf = n as f64;
    let lo = if successes == 0 {
        0.0
    } else {
        beta_quantile(x, nf - x + 1.0, alpha / 2.0)
    };
    let hi = if successes == n {
        1.0
    } else {
        beta_quantile(x + 1.0, nf - x, 1.0 - alpha / 2.0)
    };
    (lo, hi)
}

/// Outcome of one simulated attack.
#[derive(Clone, Debug, PartialEq)]
pub struct Trial {
    pub trace_count: usize,
    pub index: usize,
    /// 0-based rank of the true key byte, per state byte position.
    pub ranks: [usize; 8],
    pub rankings: Vec<KeyRanking>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ByteStats {
    pub success: Proportion,
    pub mean_rank: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub trace_count: usize,
    /// Pooled over all byte positions and trials.
    pub success: Proportion,
    pub mean_rank: f64,
    pub per_byte: Vec<ByteStats>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuccessCurve {
    pub trials: usize,
    pub seed: u64,
    pub points: Vec<CurvePoint>,
}

impl SuccessCurve {
    pub fn trace_counts(&self) -> Vec<usize> {
        self.points.iter().map(|p| p.trace_count).collect()
    }

    pub const CSV_HEADER: &'static str = "trace_count,trials,success_rate,ci_low,ci_high,\
        mean_rank,success_b0,success_b1,success_b2,success_b3,success_b4,success_b5,\
        success_b6,success_b7,rank_b0,rank_b1,rank_b2,rank_b3,rank_b4,rank_b5,rank_b6,rank_b7";

    /// One row per trace count; columns as in [`Self::CSV_HEADER`].
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for p in &self.points {
            write!(
                out,
                "{},{},{:.6},{:.6},{:.6},{:.4}",
                p.trace_count,
                self.trials,
                p.success.rate,
                p.success.ci_low,
                p.success.ci_high,
                p.mean_rank
            )
            .unwrap();
            for b in &p.per_byte {
                write!(out, ",{:.6}", b.success.rate).unwrap();
            }
            for b in &p.per_byte {
                write!(out, ",{:.4}", b.mean_rank).unwrap();
            }
            out.push('\n');
        }
        out
    }
}

fn trial_plaintexts(seed: u64, trace_count: usize, trial: usize) -> Vec<State64> {
    let mut rng = Stream::new(seed, &[DOMAIN_TRIAL, trace_count as u64, trial as u64, 0]);
    (0..trace_count).map(|_| State64(rng.next_u64())).collect()
}

/// Runs `trials` independent attacks per trace count. Trial `i` at count
/// `n` simulates with seed `stream_key(seed, [TRIAL, n, i])` on uniformly
/// random plaintexts from a sibling stream, so the whole run is a pure
/// function of its arguments.
pub fn collect_trials(
    cfg: &SimConfig,
    trace_counts: &[usize],
    trials: usize,
    seed: u64,
    options: &AttackOptions,
) -> Result<Vec<Trial>> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    if trace_counts.is_empty() {
        return Err(Error::Empty("trace counts"));
    }
    if trace_counts.iter().any(|&n| n < 2) {
        return Err(Error::InvalidArgument(
            "every trace count must be at least 2".into(),
        ));
    }
    if trace_counts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "trace counts must be strictly ascending".into(),
        ));
    }
    cfg.validate()?;
    let options = AttackOptions {
        bytes: (0..8).collect(),
        keep_surfaces: false,
        ..options.clone()
    };
    let true_k1 = cfg.key.first_round_key().to_bytes();
    let jobs: Vec<(usize, usize)> = trace_counts
        .iter()
        .flat_map(|&n| (0..trials).map(move |i| (n, i)))
        .collect();
    jobs.par_iter()
        .map(|&(n, i)| {
            let trial_cfg = SimConfig {
                seed: stream_key(seed, &[DOMAIN_TRIAL, n as u64, i as u64]),
                ..cfg.clone()
            };
            let ts = Simulator::new(trial_cfg)?.set(&trial_plaintexts(seed, n, i))?;
            let res = attack_round_key(&ts, &options)?;
            let ranks = std::array::from_fn(|j| res.rankings[j].rank_of(true_k1[j]));
            Ok(Trial {
                trace_count: n,
                index: i,
                ranks,
                rankings: res.rankings,
            })
        })
        .collect()
}

/// Aggregates trials (as produced by [`collect_trials`]) into a curve.
pub fn success_curve(trials: &[Trial], seed: u64) -> Result<SuccessCurve> {
    if trials.is_empty() {
        return Err(Error::Empty("trials"));
    }
    let mut counts: Vec<usize> = trials.iter().map(|t| t.trace_count).collect();
    counts.dedup();
    let per_count = trials.len() / counts.len();
    let points = counts
        .iter()
        .map(|&n| {
            let group: Vec<&Trial> = trials.iter().filter(|t| t.trace_count == n).collect();
            let m = group.len();
            let per_byte: Vec<ByteStats> = (0..8)
                .map(|j| {
                    let hits = group.iter().filter(|t| t.ranks[j] == 0).count();
                    let rank_sum: usize = group.iter().map(|t| t.ranks[j]).sum();
                    ByteStats {
                        success: Proportion::new(hits, m),
                        mean_rank: rank_sum as f64 / m as f64,
                    }
                })
                .collect();
            let hits: usize = group
                .iter()
                .map(|t| t.ranks.iter().filter(|&&r| r == 0).count())
                .sum();
            let mean_rank =
                per_byte.iter().map(|b| b.mean_rank).sum::<f64>() / per_byte.len() as f64;
            CurvePoint {
                trace_count: n,
                success: Proportion::new(hits, 8 * m),
                mean_rank,
                per_byte,
            }
        })
        .collect();
    Ok(SuccessCurve {
        trials: per_count,
        seed,
        points,
    })
}

pub fn run_trials(
    cfg: &SimConfig,
    trace_counts: &[usize],
    trials: usize,
    seed: u64,
) -> Result<SuccessCurve> {
    run_trials_with(cfg, trace_counts, trials, seed, &AttackOptions::default())
}

pub fn run_trials_with(
    cfg: &SimConfig,
    trace_counts: &[usize],
    trials: usize,
    seed: u64,
    options: &AttackOptions,
) -> Result<SuccessCurve> {
    success_curve(
        &collect_trials(cfg, trace_counts, trials, seed, options)?,
        seed,
    )
}

fn rank_matrix(rankings: &[Vec<KeyRanking>], true_key: &[u8; 8]) -> Result<Vec<[usize; 8]>> {
    if rankings.is_empty() {
        return Err(Error::Empty("trials"));
    }
    rankings
        .iter()
        .map(|trial| {
            let mut ranks = [0usize; 8];
            for (j, r) in ranks.iter_mut().enumerate() {
                let ranking = trial
                    .iter()
                    .find(|k| k.byte_index == j)
                    .ok_or_else(|| Error::InvalidArgument(format!("trial lacks byte {j}")))?;
                *r = ranking.rank_of(true_key[j]);
            }
            Ok(ranks)
        })
        .collect()
}

/// Mean 0-based rank of the true byte per position.
pub fn guessing_entropy(rankings: &[Vec<KeyRanking>], true_key: &[u8; 8]) -> Result<[f64; 8]> {
    let ranks = rank_matrix(rankings, true_key)?;
    let n = ranks.len() as f64;
    Ok(std::array::from_fn(|j| {
        ranks.iter().map(|r| r[j] as f64).sum::<f64>() / n
    }))
}

/// How often the true key bytes land within the top `top_r` candidates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub top_r: usize,
    pub trials: usize,
    pub key_bytes: [u8; 8],
    /// Per byte position.
    pub marginal: [f64; 8],
    /// `exactly[k]`: fraction of trials with exactly `k` bytes leaking.
    pub exactly: [f64; 9],
    /// Per-trial leak masks, bit `j` set when byte `j` leaked.
    pub masks: Vec<u8>,
}

const COUNT_WORDS: [&str; 9] = [
    "Zero", "One", "Two", "Three", "Four", "Five", "Six", "Seven", "Eight",
];

impl LeakageReport {
    /// Fraction of trials in which every byte position in `bytes` leaked.
    pub fn joint(&self, bytes: &[usize]) -> f64 {
        let mask = bytes.iter().fold(0u8, |m, &b| m | 1 << b);
        let hits = self.masks.iter().filter(|&&m| m & mask == mask).count();
        hits as f64 / self.trials as f64
    }

    /// Aligned text rendering in the shape of a leakage-probability table.
    pub fn to_text(&self) -> String {
        let pct = |p: f64| format!("{:.2}%", 100.0 * p);
        let mut out = String::new();
        writeln!(
            out,
            "Probability of Leakage (true byte within top {}, {} trials)",
            self.top_r, self.trials
        )
        .unwrap();
        let mut pos = format!("{:<14}", "Byte position");
        let mut key = format!("{:<14}", "Key byte");
        let mut prob = format!("{:<14}", "Probability");
        for j in 0..8 {
            write!(pos, "|{:>8} ", j).unwrap();
            write!(key, "|{:>8} ", format!("{:02X}", self.key_bytes[j])).unwrap();
            write!(prob, "|{:>8} ", pct(self.marginal[j])).unwrap();
        }
        writeln!(out, "{pos}\n{key}\n{prob}").unwrap();
        writeln!(out, "Probability of Leakage at a Time").unwrap();
        let cells: Vec<String> = (1..=8)
            .rev()
            .map(|k| {
                let noun = if k == 1 { "byte" } else { "bytes" };
                format!("{} {noun}: {}", COUNT_WORDS[k], pct(self.exactly[k]))
            })
            .collect();
        for row in cells.chunks(4) {
            writeln!(
                out,
                "{}",
                row.iter()
                    .map(|c| format!("{c:<22}"))
                    .collect::<String>()
                    .trim_end()
            )
            .unwrap();
        }
        writeln!(out, "No byte: {}", pct(self.exactly[0])).unwrap();
        out
    }

    pub const CSV_HEADER: &'static str = "section,label,key_byte,probability";

    /// Long-format CSV: `marginal` rows per byte position, then `at_a_time`
    /// rows for 8 down to 0 bytes.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for j in 0..8 {
            writeln!(
                out,
                "marginal,{j},{:02X},{:.6}",
                self.key_bytes[j], self.marginal[j]
            )
            .unwrap();
        }
        for k in (0..=8).rev() {
            writeln!(out, "at_a_time,{k},,{:.6}", self.exactly[k]).unwrap();
        }
        out
    }
}

pub fn leakage_probability_report(
    rankings: &[Vec<KeyRanking>],
    true_key: &[u8; 8],
    top_r: usize,
) -> Result<LeakageReport> {
    if top_r == 0 {
        return Err(Error::InvalidArgument("top_r must be at least 1".into()));
    }
    let ranks = rank_matrix(rankings, true_key)?;
    let masks: Vec<u8> = ranks
        .iter()
        .map(|r| (0..8).fold(0u8, |m, j| if r[j] < top_r { m | 1 << j } else { m }))
        .collect();
    let n = masks.len() as f64;
    let marginal =
        std::array::from_fn(|j| masks.iter().filter(|&&m| m & (1 << j) != 0).count() as f64 / n);
    let mut exactly = [0.0; 9];
    for m in &masks {
        exactly[m.count_ones() as usize] += 1.0 / n;
    }
    Ok(LeakageReport {
        top_r,
        trials: masks.len(),
        key_bytes: *true_key,
        marginal,
        exactly,
        masks,
    })
}
