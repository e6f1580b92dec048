//! The streaming correlation engine against a textbook two-pass Pearson.

use cematk_core::cema::{build_hypotheses, correlate, pearson, CorrelationAccumulator};
use cematk_core::rng::Stream;
use cematk_core::{Provenance, TraceSet};
use proptest::prelude::*;

fn naive_rho(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        0.0
    } else {
        cov / (vx * vy).sqrt()
    }
}

fn random_set(seed: u64, n: usize, s: usize, offset: f64) -> TraceSet {
    let mut rng = Stream::new(seed, &[7]);
    let pts = (0..n).map(|_| rng.next_u64().to_be_bytes()).collect();
    let samples = (0..n * s)
        .map(|_| (offset + 2.0 * rng.gaussian()) as f32)
        .collect();
    TraceSet::new(samples, s, pts, 1e6, Provenance::default()).unwrap()
}

fn check_against_naive(ts: &TraceSet, byte: usize, tol: f64) {
    let h = build_hypotheses(ts.plaintexts(), byte).unwrap();
    let surface = correlate(ts, &h).unwrap();
    for k in 0..256 {
        let y: Vec<f64> = (0..ts.n_traces()).map(|t| h.get(k, t) as f64).collect();
        for i in 0..ts.n_samples() {
            let x: Vec<f64> = ts.rows().map(|r| r[i] as f64).collect();
            let want = naive_rho(&x, &y);
            let got = surface.get(k, i);
            assert!((got - want).abs() < tol, "k={k} i={i}: {got} vs {want}");
        }
    }
}

#[test]
fn matches_naive_across_chunk_boundaries() {
    // 150 traces span three internal chunks, the last one partial.
    check_against_naive(&random_set(1, 150, 6, 0.0), 3, 1e-12);
}

#[test]
fn large_baseline_does_not_cancel() {
    // Offsets this large wreck naive raw power sums in f64.
    check_against_naive(&random_set(2, 64, 4, 1.0e6), 5, 1e-9);
}

#[test]
fn split_updates_equal_one_shot() {
    let ts = random_set(3, 40, 5, 3.0);
    let h = build_hypotheses(ts.plaintexts(), 0).unwrap();
    let cols: Vec<[u8; 256]> = (0..40).map(|t| h.column(t)).collect();
    let mut one = CorrelationAccumulator::new(5);
    one.update(ts.samples(), &cols).unwrap();
    let mut split = CorrelationAccumulator::new(5);
    for (a, b) in [(0, 1), (1, 17), (17, 40)] {
        split
            .update(&ts.samples()[a * 5..b * 5], &cols[a..b])
            .unwrap();
    }
    assert_eq!(split.count(), 40);
    let (x, y) = (one.finalize(0), split.finalize(0));
    for k in 0..256 {
        for i in 0..5 {
            assert!((x.get(k, i) - y.get(k, i)).abs() < 1e-12);
        }
    }
}

#[test]
fn constant_column_is_degenerate() {
    let mut ts = random_set(4, 10, 3, 0.0);
    let mut samples = ts.samples().to_vec();
    for t in 0..10 {
        samples[t * 3 + 1] = 5.0;
    }
    ts = TraceSet::new(
        samples,
        3,
        ts.plaintexts().to_vec(),
        1e6,
        Provenance::default(),
    )
    .unwrap();
    let s = correlate(&ts, &build_hypotheses(ts.plaintexts(), 0).unwrap()).unwrap();
    for k in 0..256 {
        assert!(s.is_degenerate(k, 1));
        assert_eq!(s.get(k, 1), 0.0);
    }
}

#[test]
fn pearson_examples() {
    let x = [1.0, 2.0, 3.0, 4.0];
    assert!((pearson(&x, &[2.0, 4.0, 6.0, 8.0]).unwrap().rho - 1.0).abs() < 1e-15);
    assert!((pearson(&x, &[4.0, 3.0, 2.0, 1.0]).unwrap().rho + 1.0).abs() < 1e-15);
    assert!(pearson(&x, &[1.0; 4]).unwrap().degenerate);
    assert!(pearson(&x, &[1.0; 3]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn random_instances_match_naive(seed in any::<u64>(), n in 2usize..48, s in 1usize..8, byte in 0usize..8) {
        check_against_naive(&random_set(seed, n, s, 0.0), byte, 1e-12);
    }
}
