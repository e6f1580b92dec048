//! Correlation electromagnetic analysis of the PRESENT block cipher.
//!
//! The crate bundles a bit-exact PRESENT implementation with round-reduced
//! execution ([`present`]), a Hamming-weight leakage model ([`leakage`]), a
//! seeded EM trace simulator ([`sim`]), signal conditioning and spectral
//! comparison ([`dsp`]), the correlation attack itself ([`cema`]), and an
//! evaluation harness ([`eval`]). Trace sets are exchanged through the
//! `.cemt` format in [`tracefile`].
//!
//! ```
//! use cematk_core::{attack_round_key, default_sweep, simulate_set, AttackOptions, SimConfig};
//!
//! let cfg = SimConfig {
//!     n_samples: 96,
//!     leak_indices: [4, 16, 28, 40, 52, 64, 76, 88],
//!     leak_width: 2,
//!     noise_std: 0.0,
//!     ..SimConfig::default()
//! };
//! let traces = simulate_set(&default_sweep(), &cfg).unwrap();
//! let options = AttackOptions {
//!     byte_windows: Some(cfg.leak_windows()),
//!     ..AttackOptions::default()
//! };
//! let result = attack_round_key(&traces, &options).unwrap();
//! assert_eq!(result.round_key, Some(cfg.key.first_round_key()));
//! ```

pub mod cema;
pub mod config;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod leakage;
pub mod present;
pub mod rng;
pub mod sim;
pub mod tracefile;
pub mod traces;

pub use cema::{
    attack_round_key, build_hypotheses, correlate, pearson, rank_keys, recover_full_key,
    AttackOptions, AttackResult, CorrelationSurface, HypothesisMatrix, KeyRanking, KeySearchError,
};
pub use dsp::{align, average, bandpass, fft_magnitude, spectral_diff, BandpassFilter, Spectrum};
pub use error::{Error, Result};
pub use eval::{
    guessing_entropy, leakage_probability_report, run_trials, LeakageReport, SuccessCurve,
};
pub use leakage::{hamming_distance, hamming_weight, leak_energy, LeakParams};
pub use present::{decrypt_block, encrypt_block, encrypt_rounds, KeyRegister, Stage, State64};
pub use sim::{default_sweep, simulate_idle_set, simulate_set, simulate_trace, SimConfig};
pub use traces::{Provenance, Trace, TraceSet};
