//! Cross-checks the table-driven cipher against a deliberately naive
//! bit-list implementation written straight from the algorithm description.

use cematk_core::present::{
    encrypt_block, encrypt_rounds, key_schedule, p_layer, sbox_layer, KeyRegister, Stage, State64,
};
use proptest::prelude::*;

const S: [u8; 16] = [
    0xC, 0x5, 0x6, 0xB, 0x9, 0x0, 0xA, 0xD, 0x3, 0xE, 0xF, 0x8, 0x4, 0x7, 0x1, 0x2,
];

/// Bit `i` of the vector is bit `i` of the value (bit 0 least significant).
fn bits(v: u128, n: usize) -> Vec<u8> {
    (0..n).map(|i| ((v >> i) & 1) as u8).collect()
}

fn value(b: &[u8]) -> u128 {
    b.iter().enumerate().map(|(i, &x)| (x as u128) << i).sum()
}

fn nibble_sub(state: &mut [u8], at: usize) {
    let n = value(&state[at..at + 4]) as usize;
    state[at..at + 4].copy_from_slice(&bits(S[n] as u128, 4));
}

fn naive_round_keys(key: u128, width: usize) -> Vec<u64> {
    let (sboxed, counter_at) = if width == 80 { (1, 15) } else { (2, 62) };
    let mut k = bits(key, width);
    let mut out = Vec::new();
    for round in 1..=32u128 {
        out.push(value(&k[width - 64..]) as u64);
        // Rotate left by 61: new bit i is old bit (i - 61) mod width.
        k = (0..width).map(|i| k[(i + width - 61) % width]).collect();
        for n in 1..=sboxed {
            nibble_sub(&mut k, width - 4 * n);
        }
        for (j, c) in bits(round, 5).iter().enumerate() {
            k[counter_at + j] ^= c;
        }
    }
    out
}

fn naive_permute(s: &[u8]) -> Vec<u8> {
    let mut p = vec![0u8; 64];
    for (i, &b) in s.iter().enumerate() {
        let dest = if i == 63 { 63 } else { (16 * i) % 63 };
        p[dest] = b;
    }
    p
}

fn naive_round(state: &[u8], rk: u64) -> Vec<u8> {
    let mut s: Vec<u8> = state
        .iter()
        .zip(bits(rk as u128, 64))
        .map(|(a, b)| a ^ b)
        .collect();
    for n in 0..16 {
        nibble_sub(&mut s, 4 * n);
    }
    naive_permute(&s)
}

fn naive_encrypt(pt: u64, key: u128, width: usize) -> u64 {
    let rks = naive_round_keys(key, width);
    let mut s = bits(pt as u128, 64);
    for rk in &rks[..31] {
        s = naive_round(&s, *rk);
    }
    (value(&s) as u64) ^ rks[31]
}

const ONES_80: u128 = (1 << 80) - 1;

#[test]
fn naive_reference_reproduces_published_vectors() {
    let cases = [
        (0u64, 0u128, 0x5579_C138_7B22_8445u64),
        (0, ONES_80, 0xE72C_46C0_F594_5049),
        (u64::MAX, 0, 0xA112_FFC7_2F68_417B),
        (u64::MAX, ONES_80, 0x3333_DCD3_2132_10D2),
    ];
    for (p, k, c) in cases {
        assert_eq!(naive_encrypt(p, k, 80), c, "{p:016X}/{k:020X}");
        assert_eq!(
            encrypt_block(State64(p), &KeyRegister::new_80(k).unwrap()),
            State64(c)
        );
    }
    assert_eq!(naive_encrypt(0, 0, 128), 0x96DB_702A_2E69_00AF);
    assert_eq!(
        naive_encrypt(u64::MAX, u128::MAX, 128),
        0x628D_9FBD_4218_E5B4
    );
}

#[test]
fn zero_key_schedule_matches_naive() {
    let naive = naive_round_keys(0, 80);
    let fast = key_schedule(&KeyRegister::new_80(0).unwrap());
    for r in 1..=32 {
        assert_eq!(fast.round_key(r).0, naive[r - 1], "K{r}");
    }
    assert_eq!(naive[1], 0xC000_0000_0000_0000);
    assert_eq!(naive[2], 0x5000_1800_0000_0001);
    assert_eq!(naive[31], 0x6DAB_3174_4F41_D700);
}

#[test]
fn p_layer_moves_single_bits() {
    for i in 0..64 {
        let expected = if i == 63 { 63 } else { (16 * i) % 63 };
        assert_eq!(p_layer(State64(1 << i)), State64(1 << expected), "bit {i}");
        let mut v = vec![0u8; 64];
        v[i] = 1;
        assert_eq!(value(&naive_permute(&v)) as u64, 1 << expected);
    }
}

#[test]
fn sbox_layer_matches_naive() {
    for p in [0u64, u64::MAX, 0x0123_4567_89AB_CDEF, 0xDEAD_BEEF_0BAD_F00D] {
        let mut s = bits(p as u128, 64);
        for n in 0..16 {
            nibble_sub(&mut s, 4 * n);
        }
        assert_eq!(sbox_layer(State64(p)).0, value(&s) as u64);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn table_cipher_matches_naive_80(p in any::<u64>(), k in 0u128..(1 << 80)) {
        let key = KeyRegister::new_80(k).unwrap();
        prop_assert_eq!(encrypt_block(State64(p), &key).0, naive_encrypt(p, k, 80));
    }

    #[test]
    fn table_cipher_matches_naive_128(p in any::<u64>(), k in any::<u128>()) {
        let key = KeyRegister::new_128(k);
        prop_assert_eq!(encrypt_block(State64(p), &key).0, naive_encrypt(p, k, 128));
    }

    #[test]
    fn round_reduced_matches_naive(p in any::<u64>(), k in 0u128..(1 << 80), n in 1usize..=31) {
        let key = KeyRegister::new_80(k).unwrap();
        let out = encrypt_rounds(State64(p), &key, n, &[Stage::SboxOutput]).unwrap();
        let rks = naive_round_keys(k, 80);
        let mut s = bits(p as u128, 64);
        for rk in &rks[..n] {
            s = naive_round(&s, *rk);
        }
        prop_assert_eq!(out.state.0, value(&s) as u64);
        prop_assert_eq!(out.captured.len(), n);
    }
}
