//! Flat `key = value` simulation config files.
//!
//! Blank lines and `#` comments are ignored; each key may appear once and
//! unknown keys are errors. Every key is optional and falls back to
//! [`SimConfig::default`].
//!
//! | key            | value                                                  |
//! |----------------|--------------------------------------------------------|
//! | `n_samples`    | samples per trace                                      |
//! | `sample_rate`  | Hz                                                     |
//! | `gain`         | amplitude per unit Hamming weight                      |
//! | `baseline`     | constant offset                                        |
//! | `noise_std`    | Gaussian noise per sample, before averaging            |
//! | `leak_indices` | 8 comma-separated sample positions                     |
//! | `leak_width`   | pulse width in samples                                 |
//! | `carrier_freq` | Hz, or `none`                                          |
//! | `jitter_max`   | samples                                                |
//! | `repetitions`  | draws averaged per trace                               |
//! | `ambient`      | `freq:amplitude` list, or `none`                       |
//! | `key`          | 20 or 32 hex digits                                    |
//! | `seed`         | u64 (decimal or `0x` hex)                              |
//! | `plaintexts`   | `sweep` or `random:<count>`                            |
//! | `idle_traces`  | traces in an idle set                                  |

use std::collections::HashSet;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::present::{KeyRegister, State64};
use crate::rng::Stream;
use crate::sim::{default_sweep, AmbientTone, SimConfig};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PlaintextSource {
    Sweep,
    Random(usize),
}

impl PlaintextSource {
    /// Random plaintexts come from a dedicated stream of `seed`.
    pub fn generate(&self, seed: u64) -> Vec<State64> {
        match *self {
            PlaintextSource::Sweep => default_sweep(),
            PlaintextSource::Random(n) => {
                let mut rng = Stream::new(seed, &[0x504C_4149_4E54]);
                (0..n).map(|_| State64(rng.next_u64())).collect()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimFile {
    pub sim: SimConfig,
    /// `None` when the file has no `seed` line.
    pub seed: Option<u64>,
    pub plaintexts: PlaintextSource,
    pub idle_traces: usize,
}

impl SimFile {
    /// The config with the seed resolved from the file or `fallback`.
    pub fn resolve(&self, fallback: Option<u64>) -> Result<SimConfig> {
        let seed = self.seed.or(fallback).ok_or_else(|| {
            Error::InvalidConfig("no seed given (set `seed` or CEMATK_SEED)".into())
        })?;
        let cfg = SimConfig {
            seed,
            ..self.sim.clone()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

pub const KEYS: [&str; 15] = [
    "n_samples",
    "sample_rate",
    "gain",
    "baseline",
    "noise_std",
    "leak_indices",
    "leak_width",
    "carrier_freq",
    "jitter_max",
    "repetitions",
    "ambient",
    "key",
    "seed",
    "plaintexts",
    "idle_traces",
];

fn num<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::ConfigSyntax {
        line,
        msg: format!("{key}: cannot parse {v:?}"),
    })
}

pub fn parse_u64(v: &str) -> Option<u64> {
    match v.strip_prefix("0x").or_else(|| v.strip_prefix("0X")) {
        Some(h) => u64::from_str_radix(h, 16).ok(),
        None => v.parse().ok(),
    }
}

pub fn parse_sim_config(text: &str) -> Result<SimFile> {
    let mut sim = SimConfig::default();
    let mut seed = None;
    let mut plaintexts = PlaintextSource::Sweep;
    let mut idle_traces = 256;
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap().trim();
        if content.is_empty() {
            continue;
        }
        let syntax = |msg: String| Error::ConfigSyntax { line, msg };
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| syntax(format!("expected `key = value`, got {content:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(syntax(format!("unknown key {key:?}")));
        }
        if !seen.insert(key.to_string()) {
            return Err(syntax(format!("duplicate key {key:?}")));
        }
        match key {
            "n_samples" => sim.n_samples = num(line, key, value)?,
            "sample_rate" => sim.sample_rate = num(line, key, value)?,
            "gain" => sim.leak.gain = num(line, key, value)?,
            "baseline" => sim.leak.baseline = num(line, key, value)?,
            "noise_std" => sim.noise_std = num(line, key, value)?,
            "leak_indices" => {
                let parts: Vec<usize> = value
                    .split(',')
                    .map(|p| num(line, key, p.trim()))
                    .collect::<Result<_>>()?;
                sim.leak_indices = parts
                    .try_into()
                    .map_err(|_| syntax("leak_indices needs exactly 8 values".into()))?;
            }
            "leak_width" => sim.leak_width = num(line, key, value)?,
            "carrier_freq" => {
                sim.carrier_freq = if value.eq_ignore_ascii_case("none") {
                    None
                } else {
                    Some(num(line, key, value)?)
                }
            }
            "jitter_max" => sim.jitter_max = num(line, key, value)?,
            "repetitions" => sim.repetitions = num(line, key, value)?,
            "ambient" => {
                sim.ambient = if value.eq_ignore_ascii_case("none") {
                    Vec::new()
                } else {
                    value
                        .split(',')
                        .map(|tone| {
                            let (f, a) = tone
                                .trim()
                                .split_once(':')
                                .ok_or_else(|| syntax(format!("ambient tone {tone:?}")))?;
                            Ok(AmbientTone {
                                freq: num(line, key, f.trim())?,
                                amplitude: num(line, key, a.trim())?,
                            })
                        })
                        .collect::<Result<_>>()?
                }
            }
            "key" => {
                sim.key = KeyRegister::from_hex(value).map_err(|e| syntax(format!("key: {e}")))?
            }
            "seed" => {
                seed = Some(parse_u64(value).ok_or_else(|| syntax(format!("seed: {value:?}")))?)
            }
            "plaintexts" => {
                plaintexts = if value == "sweep" {
                    PlaintextSource::Sweep
                } else if let Some(n) = value.strip_prefix("random:") {
                    let n: usize = num(line, key, n.trim())?;
                    if n == 0 {
                        return Err(syntax("random plaintext count must be positive".into()));
                    }
                    PlaintextSource::Random(n)
                } else {
                    return Err(syntax(format!("plaintexts: {value:?}")));
                }
            }
            "idle_traces" => idle_traces = num(line, key, value)?,
            _ => unreachable!(),
        }
    }
    if let Some(s) = seed {
        sim.seed = s;
    }
    Ok(SimFile {
        sim,
        seed,
        plaintexts,
        idle_traces,
    })
}

pub fn load_sim_config(path: impl AsRef<std::path::Path>) -> Result<SimFile> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_sim_config(&text)
}
