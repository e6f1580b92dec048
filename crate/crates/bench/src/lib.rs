//! Shared fixtures for the criterion benchmarks in `benches/`.

use cematk_core::{default_sweep, simulate_set, SimConfig, TraceSet};

/// The default geometry with the given sample count, leaks spread evenly.
pub fn config(n_samples: usize) -> SimConfig {
    let step = n_samples / 9;
    SimConfig {
        n_samples,
        leak_indices: std::array::from_fn(|j| step * (j + 1)),
        leak_width: (step / 4).max(1),
        ..SimConfig::default()
    }
}

/// The 256-plaintext sweep simulated with [`config`].
pub fn sweep_set(n_samples: usize) -> TraceSet {
    simulate_set(&default_sweep(), &config(n_samples)).expect("valid benchmark config")
}
