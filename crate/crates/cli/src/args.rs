use std::ops::Range;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "cematk",
    version,
    about = "PRESENT cipher, EM trace simulation and correlation EM analysis",
    arg_required_else_help = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Encrypt one block, optionally printing round-reduced intermediates.
    Encrypt(EncryptArgs),
    /// Print the 32 round keys of a key.
    Keysched(KeyschedArgs),
    /// Simulate an encryption or idle trace set.
    Sim(SimArgs),
    /// Compare the spectra of an encryption set and an idle set.
    Sema(SemaArgs),
    /// Zero-phase bandpass filter a trace set.
    Filter(FilterArgs),
    /// Recover the first round key by correlation analysis.
    Attack(AttackArgs),
    /// Measure attack success over many simulated trials.
    Eval(EvalArgs),
    /// Tabulate leakage probabilities from saved rankings.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct EncryptArgs {
    /// Plaintext, 16 hex digits.
    #[arg(long)]
    pub pt: String,
    /// Key, 20 (80-bit) or 32 (128-bit) hex digits.
    #[arg(long)]
    pub key: String,
    /// Run only the first N rounds and print every intermediate state.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=31))]
    pub rounds: Option<u32>,
}

#[derive(Args, Debug)]
pub struct KeyschedArgs {
    #[arg(long)]
    pub key: String,
}

#[derive(Args, Debug)]
pub struct SimArgs {
    /// Simulation config (flat `key = value` file).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Simulate idle (non-encryption) captures instead.
    #[arg(long)]
    pub idle: bool,
    /// Overrides the config seed and CEMATK_SEED.
    #[arg(long, value_parser = parse_seed)]
    pub seed: Option<u64>,
    /// Store the key in the file header (white-box evaluation only).
    #[arg(long)]
    pub embed_key: bool,
}

#[derive(Args, Debug)]
pub struct SemaArgs {
    #[arg(long)]
    pub enc: PathBuf,
    #[arg(long)]
    pub idle: PathBuf,
    /// JSON report.
    #[arg(long)]
    pub out: PathBuf,
    /// New-component threshold, as a multiple of the idle noise floor.
    #[arg(long, default_value_t = 3.0)]
    pub new_ratio: f64,
    /// Enc/idle magnitude ratio that marks a shared line as amplified.
    #[arg(long, default_value_t = 2.0)]
    pub amp_ratio: f64,
    /// Also write both averaged spectra as CSV.
    #[arg(long)]
    pub spectrum_csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FilterArgs {
    #[arg(long)]
    pub traces: PathBuf,
    /// Lower passband edge in Hz.
    #[arg(long)]
    pub lo: f64,
    /// Upper passband edge in Hz.
    #[arg(long)]
    pub hi: f64,
    /// Raised-cosine skirt width in Hz; 0 gives a brick-wall filter.
    #[arg(long)]
    pub transition: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Filtering and localisation shared by `attack` and `eval`.
#[derive(Args, Debug, Clone)]
pub struct AttackSelection {
    /// Bandpass before correlating, `lo:hi` in Hz.
    #[arg(long, value_parser = parse_band)]
    pub band: Option<(f64, f64)>,
    /// Analyse only samples `lo:hi` (or `lo..hi`).
    #[arg(long, value_parser = parse_range, conflicts_with_all = ["byte_windows", "localize"])]
    pub window: Option<Range<usize>>,
    /// One sample window per byte position, comma-separated `lo:hi` list of 8.
    #[arg(long, value_parser = parse_byte_windows, conflicts_with = "localize")]
    pub byte_windows: Option<ByteWindows>,
    /// Per-byte windows from a simulation config's leak positions.
    #[arg(long)]
    pub localize: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AttackArgs {
    #[arg(long)]
    pub traces: PathBuf,
    #[command(flatten)]
    pub selection: AttackSelection,
    /// Byte positions to attack: `0-7`, `3`, or `0,2,5`.
    #[arg(long, value_parser = parse_bytes, default_value = "0-7")]
    pub bytes: ByteList,
    /// Known plaintext:ciphertext pair used to complete the 80-bit key.
    #[arg(long, value_parser = parse_pair)]
    pub known_pair: Option<(String, String)>,
    /// JSON result with full rankings.
    #[arg(long)]
    pub out: PathBuf,
    /// Write every correlation coefficient as CSV.
    #[arg(long)]
    pub dump_surface: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "32,64,128,256")]
    pub trace_counts: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    /// Master seed for all trials; falls back to the config seed, then CEMATK_SEED.
    #[arg(long, value_parser = parse_seed)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub selection: AttackSelection,
    /// Success curve CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the curve as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Save every trial's rankings for `report`.
    #[arg(long)]
    pub rankings_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Rankings file written by `eval --rankings-out`.
    #[arg(long, conflicts_with = "attack", required_unless_present = "attack")]
    pub rankings: Option<PathBuf>,
    /// Select one trace count from a rankings file.
    #[arg(long, requires = "rankings")]
    pub trace_count: Option<usize>,
    /// Attack result files, one per trial.
    #[arg(long, num_args = 1.., requires = "key")]
    pub attack: Vec<PathBuf>,
    /// True key (or first round key, 16 hex digits) for attack results.
    #[arg(long)]
    pub key: Option<String>,
    /// A byte leaks when the true value is within the top R candidates.
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..=256))]
    pub top_r: u64,
    /// Write the table as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Write the text table to a file instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ByteWindows(pub [Range<usize>; 8]);

#[derive(Clone, Debug, PartialEq)]
pub struct ByteList(pub Vec<usize>);

pub fn parse_seed(s: &str) -> Result<u64, String> {
    cematk_core::config::parse_u64(s.trim()).ok_or_else(|| format!("invalid seed {s:?}"))
}

fn parse_f64(s: &str) -> Result<f64, String> {
    s.trim()
        .parse()
        .map_err(|_| format!("invalid number {s:?}"))
}

fn parse_band(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(':').ok_or("expected lo:hi")?;
    Ok((parse_f64(lo)?, parse_f64(hi)?))
}

fn parse_range(s: &str) -> Result<Range<usize>, String> {
    let (lo, hi) = s
        .split_once("..")
        .or_else(|| s.split_once(':'))
        .ok_or("expected lo:hi or lo..hi")?;
    let lo: usize = lo
        .trim()
        .parse()
        .map_err(|_| format!("invalid start {lo:?}"))?;
    let hi: usize = hi
        .trim()
        .parse()
        .map_err(|_| format!("invalid end {hi:?}"))?;
    if lo >= hi {
        return Err(format!("empty window {lo}..{hi}"));
    }
    Ok(lo..hi)
}

fn parse_byte_windows(s: &str) -> Result<ByteWindows, String> {
    let ranges: Vec<Range<usize>> = s.split(',').map(parse_range).collect::<Result<_, _>>()?;
    let n = ranges.len();
    ranges
        .try_into()
        .map(ByteWindows)
        .map_err(|_| format!("expected 8 windows, got {n}"))
}

fn parse_bytes(s: &str) -> Result<ByteList, String> {
    let byte = |t: &str| -> Result<usize, String> {
        match t.trim().parse() {
            Ok(b) if b < 8 => Ok(b),
            _ => Err(format!("byte position {t:?} not in 0-7")),
        }
    };
    let mut out = Vec::new();
    for part in s.split(',') {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b) = (byte(a)?, byte(b)?);
                if a > b {
                    return Err(format!("descending range {part:?}"));
                }
                out.extend(a..=b);
            }
            None => out.push(byte(part)?),
        }
    }
    out.sort_unstable();
    out.dedup();
    Ok(ByteList(out))
}

fn parse_pair(s: &str) -> Result<(String, String), String> {
    let (pt, ct) = s.split_once(':').ok_or("expected plaintext:ciphertext")?;
    Ok((pt.trim().to_string(), ct.trim().to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn clap_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn value_parsers() {
        assert_eq!(parse_range("10..50"), Ok(10..50));
        assert_eq!(parse_range("10:50"), Ok(10..50));
        assert!(parse_range("50:10").is_err());
        assert_eq!(parse_bytes("0-7").unwrap().0, (0..8).collect::<Vec<_>>());
        assert_eq!(parse_bytes("5,1,1-2").unwrap().0, vec![1, 2, 5]);
        assert!(parse_bytes("8").is_err());
        assert_eq!(parse_band("40e6:50e6"), Ok((40e6, 50e6)));
        assert_eq!(parse_seed("0x10"), Ok(16));
        let w = parse_byte_windows("0:1,1:2,2:3,3:4,4:5,5:6,6:7,7:8").unwrap();
        assert_eq!(w.0[7], 7..8);
        assert!(parse_byte_windows("0:1").is_err());
    }
}
