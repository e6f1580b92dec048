use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, Context};
use cematk_core::cema::{
    attack_round_key, recover_full_key, AttackOptions, Diagnostics, KeyRanking,
};
use cematk_core::config::{load_sim_config, SimFile};
use cematk_core::dsp::{average, fft_magnitude, spectral_diff, BandpassFilter, Window};
use cematk_core::eval::{collect_trials, leakage_probability_report, success_curve};
use cematk_core::present::{
    encrypt_block, encrypt_rounds, key_schedule, KeyRegister, Stage, State64,
};
use cematk_core::sim::Simulator;
use cematk_core::tracefile::{read_traceset, write_traceset};
use serde::{Deserialize, Serialize};

use crate::args::{
    AttackArgs, AttackSelection, EncryptArgs, EvalArgs, FilterArgs, KeyschedArgs, ReportArgs,
    SemaArgs, SimArgs,
};

pub const SEED_ENV: &str = "CEMATK_SEED";

/// Usage problems exit with 1, everything else with 2.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Data(e.into())
    }
}

pub type Outcome = Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn env_seed() -> Result<Option<u64>, Failure> {
    match std::env::var(SEED_ENV) {
        Ok(v) => crate::args::parse_seed(&v)
            .map(Some)
            .map_err(|e| usage(format!("{SEED_ENV}: {e}"))),
        Err(_) => Ok(None),
    }
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn parse_state(s: &str, what: &str) -> Result<State64, Failure> {
    State64::from_hex(s).map_err(|e| usage(format!("{what}: {e}")))
}

fn parse_key(s: &str) -> Result<KeyRegister, Failure> {
    KeyRegister::from_hex(s).map_err(|e| usage(format!("key: {e}")))
}

pub fn encrypt(a: &EncryptArgs) -> Outcome {
    let pt = parse_state(&a.pt, "plaintext")?;
    let key = parse_key(&a.key)?;
    match a.rounds {
        None => println!("{}", encrypt_block(pt, &key)),
        Some(n) => {
            let out = encrypt_rounds(pt, &key, n as usize, &Stage::ALL)?;
            for c in &out.captured {
                println!("round {:>2} {:<12} {}", c.round, c.stage.name(), c.value);
            }
            println!("state {}", out.state);
        }
    }
    Ok(())
}

pub fn keysched(a: &KeyschedArgs) -> Outcome {
    let key = parse_key(&a.key)?;
    for (i, k) in key_schedule(&key).round_keys().iter().enumerate() {
        println!("K{:02} {}", i + 1, k);
    }
    Ok(())
}

fn load_config(path: &Path) -> Result<SimFile, Failure> {
    Ok(load_sim_config(path)?)
}

pub fn sim(a: &SimArgs) -> Outcome {
    let file = load_config(&a.config)?;
    let seed = a.seed.or(file.seed).or(env_seed()?).ok_or_else(|| {
        usage(format!(
            "no seed: use --seed, `seed =` in the config or {SEED_ENV}"
        ))
    })?;
    let cfg = cematk_core::SimConfig {
        seed,
        ..file.sim.clone()
    };
    cfg.validate()?;
    let sim = Simulator::new(cfg.clone())?;
    let mut ts = if a.idle {
        sim.idle_set(file.idle_traces)?
    } else {
        sim.set(&file.plaintexts.generate(seed))?
    };
    if a.embed_key {
        ts.provenance_mut().key = Some(cfg.key);
    }
    write_traceset(&ts, &a.out)?;
    println!(
        "wrote {} {} traces x {} samples to {}",
        ts.n_traces(),
        if a.idle { "idle" } else { "encryption" },
        ts.n_samples(),
        a.out.display()
    );
    Ok(())
}

pub fn sema(a: &SemaArgs) -> Outcome {
    let enc = read_traceset(&a.enc)?;
    let idle = read_traceset(&a.idle)?;
    let report = spectral_diff(&enc, &idle, a.new_ratio, a.amp_ratio)?;
    write_json(&a.out, &report)?;
    if let Some(path) = &a.spectrum_csv {
        let es = fft_magnitude(&average(&enc), Window::Rectangular)?;
        let is = fft_magnitude(&average(&idle), Window::Rectangular)?;
        let mut csv = String::from("bin,freq_hz,enc_magnitude,idle_magnitude\n");
        for k in 0..es.n_bins() {
            writeln!(
                csv,
                "{k},{},{},{}",
                es.frequency(k),
                es.magnitudes[k],
                is.magnitudes[k]
            )
            .unwrap();
        }
        write_text(path, &csv)?;
    }
    println!(
        "{} new and {} amplified components (noise floor {:.6e})",
        report.new_components.len(),
        report.amplified_components.len(),
        report.noise_floor
    );
    let mut strongest: Vec<_> = report.new_components.iter().collect();
    strongest.sort_by(|a, b| b.magnitude.total_cmp(&a.magnitude));
    for line in strongest.iter().take(10) {
        println!(
            "new {:.6} MHz magnitude {:.6e}",
            line.freq_hz / 1e6,
            line.magnitude
        );
    }
    if strongest.len() > 10 {
        println!("({} more in {})", strongest.len() - 10, a.out.display());
    }
    Ok(())
}

pub fn filter(a: &FilterArgs) -> Outcome {
    let ts = read_traceset(&a.traces)?;
    let mut f = BandpassFilter::new(a.lo, a.hi);
    if let Some(t) = a.transition {
        f = f.with_transition(t);
    }
    let out = f.apply(&ts)?;
    write_traceset(&out, &a.out)?;
    println!("filtered {} traces to {}", out.n_traces(), a.out.display());
    Ok(())
}

fn attack_options(sel: &AttackSelection, bytes: Vec<usize>) -> Result<AttackOptions, Failure> {
    let byte_windows = match (&sel.byte_windows, &sel.localize) {
        (Some(w), _) => Some(w.0.clone()),
        (None, Some(path)) => Some(load_config(path)?.sim.leak_windows()),
        (None, None) => None,
    };
    Ok(AttackOptions {
        band: sel.band.map(|(lo, hi)| BandpassFilter::new(lo, hi)),
        window: sel.window.clone(),
        byte_windows,
        bytes,
        keep_surfaces: false,
    })
}

/// JSON layout of an `attack` result.
#[derive(Debug, Serialize, Deserialize)]
pub struct AttackOutput {
    pub n_traces: usize,
    pub n_samples: usize,
    pub diagnostics: Diagnostics,
    /// First round key, 16 hex digits; only when all 8 bytes were attacked.
    pub round_key: Option<String>,
    /// Full 80-bit key, when a known pair was given and matched.
    pub full_key: Option<String>,
    pub rankings: Vec<KeyRanking>,
}

pub fn attack(a: &AttackArgs) -> Outcome {
    let ts = read_traceset(&a.traces)?;
    let mut options = attack_options(&a.selection, a.bytes.0.clone())?;
    options.keep_surfaces = a.dump_surface.is_some();
    let pair = match &a.known_pair {
        Some((pt, ct)) => Some((
            parse_state(pt, "plaintext")?,
            parse_state(ct, "ciphertext")?,
        )),
        None => None,
    };
    let res = attack_round_key(&ts, &options)?;
    let full_key = match (pair, res.round_key) {
        (Some((pt, ct)), Some(k1)) => {
            Some(recover_full_key(k1, pt, ct).map_err(|e| anyhow!("full key search: {e}"))?)
        }
        (Some(_), None) => return Err(usage("--known-pair needs all 8 byte positions")),
        _ => None,
    };
    if let Some(path) = &a.dump_surface {
        let file = File::create(path).with_context(|| format!("writing {}", path.display()))?;
        let mut w = BufWriter::new(file);
        writeln!(w, "byte_index,key_guess,sample,rho")?;
        for s in &res.surfaces {
            let offset = match &options.byte_windows {
                Some(windows) => windows[s.byte_index].start,
                None => res.diagnostics.window_start,
            };
            for k in 0..256 {
                for (i, rho) in s.row(k).iter().enumerate() {
                    writeln!(w, "{},{k},{},{rho}", s.byte_index, i + offset)?;
                }
            }
        }
        w.flush()?;
    }
    for r in &res.rankings {
        let best = r.best();
        println!(
            "byte {} best {:02X} |rho| {:.6} at sample {}",
            r.byte_index, best.key_byte, best.score, best.sample
        );
    }
    if let Some(k1) = res.round_key {
        println!("round key {k1}");
    }
    if let Some(key) = &full_key {
        println!("full key {}", key.to_hex());
    }
    let out = AttackOutput {
        n_traces: ts.n_traces(),
        n_samples: ts.n_samples(),
        diagnostics: res.diagnostics,
        round_key: res.round_key.map(|k| k.to_string()),
        full_key: full_key.map(|k| k.to_hex()),
        rankings: res.rankings,
    };
    write_json(&a.out, &out)?;
    Ok(())
}

/// JSON layout of `eval --rankings-out`.
#[derive(Debug, Serialize, Deserialize)]
pub struct SavedTrials {
    pub seed: u64,
    pub round_key: String,
    pub trials: Vec<SavedTrial>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SavedTrial {
    pub trace_count: usize,
    pub index: usize,
    pub ranks: [usize; 8],
    pub rankings: Vec<KeyRanking>,
}

pub fn eval(a: &EvalArgs) -> Outcome {
    let file = load_config(&a.config)?;
    let seed = a.seed.or(file.seed).or(env_seed()?).ok_or_else(|| {
        usage(format!(
            "no seed: use --seed, `seed =` in the config or {SEED_ENV}"
        ))
    })?;
    let cfg = cematk_core::SimConfig {
        seed,
        ..file.sim.clone()
    };
    let options = attack_options(&a.selection, (0..8).collect())?;
    let trials = collect_trials(&cfg, &a.trace_counts, a.trials, seed, &options)?;
    let curve = success_curve(&trials, seed)?;
    write_text(&a.out, &curve.to_csv())?;
    if let Some(path) = &a.json {
        write_json(path, &curve)?;
    }
    if let Some(path) = &a.rankings_out {
        let saved = SavedTrials {
            seed,
            round_key: cfg.key.first_round_key().to_string(),
            trials: trials
                .into_iter()
                .map(|t| SavedTrial {
                    trace_count: t.trace_count,
                    index: t.index,
                    ranks: t.ranks,
                    rankings: t.rankings,
                })
                .collect(),
        };
        write_json(path, &saved)?;
    }
    for p in &curve.points {
        println!(
            "{:>6} traces: success {:.4} [{:.4}, {:.4}] mean rank {:.2}",
            p.trace_count, p.success.rate, p.success.ci_low, p.success.ci_high, p.mean_rank
        );
    }
    Ok(())
}

fn true_round_key(hex: &str) -> Result<State64, Failure> {
    let digits = hex.chars().filter(|c| !c.is_whitespace()).count();
    if digits == 16 {
        parse_state(hex, "round key")
    } else {
        Ok(parse_key(hex)?.first_round_key())
    }
}

pub fn report(a: &ReportArgs) -> Outcome {
    let (rankings, k1): (Vec<Vec<KeyRanking>>, State64) = match &a.rankings {
        Some(path) => {
            let saved: SavedTrials = read_json(path)?;
            let mut counts: Vec<usize> = saved.trials.iter().map(|t| t.trace_count).collect();
            counts.dedup();
            let count = match (a.trace_count, counts.as_slice()) {
                (Some(n), _) if counts.contains(&n) => n,
                (Some(n), _) => {
                    return Err(usage(format!("no trials at {n} traces; have {counts:?}")))
                }
                (None, [n]) => *n,
                (None, _) => {
                    return Err(usage(format!("pick one of {counts:?} with --trace-count")))
                }
            };
            let k1 = match &a.key {
                Some(k) => true_round_key(k)?,
                None => State64::from_hex(&saved.round_key)?,
            };
            let rankings = saved
                .trials
                .into_iter()
                .filter(|t| t.trace_count == count)
                .map(|t| t.rankings)
                .collect();
            (rankings, k1)
        }
        None => {
            let key = a
                .key
                .as_deref()
                .ok_or_else(|| usage("--attack needs --key"))?;
            let k1 = true_round_key(key)?;
            let rankings = a
                .attack
                .iter()
                .map(|p| read_json::<AttackOutput>(p).map(|o| o.rankings))
                .collect::<anyhow::Result<_>>()?;
            (rankings, k1)
        }
    };
    let report = leakage_probability_report(&rankings, &k1.to_bytes(), a.top_r as usize)?;
    match &a.out {
        Some(path) => write_text(path, &report.to_text())?,
        None => print!("{}", report.to_text()),
    }
    if let Some(path) = &a.csv {
        write_text(path, &report.to_csv())?;
    }
    Ok(())
}
