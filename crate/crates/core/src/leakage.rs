//! Hamming-weight / Hamming-distance leakage and the linear energy model
//! `E = a * HW(D) + b`.
//!
//! Here `b` is a deterministic baseline. Stochastic noise is added by the
//! simulator, not by this model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::present::SBOX_BYTE;

/// Parameters of the affine leakage model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeakParams {
    /// Trace amplitude per unit of Hamming weight.
    pub gain: f64,
    /// Constant offset added to every sample.
    pub baseline: f64,
}

impl Default for LeakParams {
    fn default() -> Self {
        Self {
            gain: 1.0,
            baseline: 0.0,
        }
    }
}

/// Round-1 S-box output byte at a given state position.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Intermediate {
    pub value: u8,
    byte_index: u8,
}

impl Intermediate {
    pub fn new(value: u8, byte_index: usize) -> Result<Self> {
        if byte_index >= 8 {
            return Err(Error::IndexOutOfRange {
                index: byte_index,
                len: 8,
            });
        }
        Ok(Self {
            value,
            byte_index: byte_index as u8,
        })
    }

    pub fn byte_index(&self) -> usize {
        self.byte_index as usize
    }
}

fn check_width(v: u64, width: u32) -> Result<()> {
    if width > 64 || (width < 64 && v >> width != 0) {
        return Err(Error::WidthOverflow { value: v, width });
    }
    Ok(())
}

pub fn hamming_weight(v: u64, width: u32) -> Result<u32> {
    check_width(v, width)?;
    Ok(v.count_ones())
}

pub fn hamming_distance(x: u64, y: u64, width: u32) -> Result<u32> {
    check_width(x, width)?;
    check_width(y, width)?;
    Ok((x ^ y).count_ones())
}

pub fn leak_energy(d: Intermediate, params: LeakParams) -> f64 {
    params.gain * d.value.count_ones() as f64 + params.baseline
}

/// S-box output for one state byte after the first key addition.
pub fn round1_intermediate_byte(p_byte: u8, k_byte: u8) -> u8 {
    SBOX_BYTE[(p_byte ^ k_byte) as usize]
}

/// `HW(round1_intermediate_byte(v, 0))` for every `v`; index with `p ^ k`.
pub(crate) const ROUND1_HW: [u8; 256] = {
    let mut t = [0u8; 256];
    let mut v = 0;
    while v < 256 {
        t[v] = SBOX_BYTE[v].count_ones() as u8;
        v += 1;
    }
    t
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::present::{encrypt_rounds, KeyRegister, Stage, State64};
    use proptest::prelude::*;

    #[test]
    fn hw_examples() {
        assert_eq!(hamming_weight(0xB2, 8).unwrap(), 4);
        assert_eq!(hamming_weight(0x00, 8).unwrap(), 0);
        assert_eq!(hamming_weight(0xFF, 8).unwrap(), 8);
        assert_eq!(hamming_weight(u64::MAX, 64).unwrap(), 64);
    }

    #[test]
    fn width_overflow_rejected() {
        assert!(matches!(
            hamming_weight(0x100, 8),
            Err(Error::WidthOverflow {
                value: 0x100,
                width: 8
            })
        ));
        assert!(hamming_weight(1, 65).is_err());
        assert!(hamming_distance(0, 0x1FF, 8).is_err());
    }

    #[test]
    fn hd_examples() {
        assert_eq!(hamming_distance(0x5A, 0x5A, 8).unwrap(), 0);
        assert_eq!(hamming_distance(0x00, 0xFF, 8).unwrap(), 8);
        assert_eq!(hamming_distance(0xB2, 0x00, 8).unwrap(), 4);
    }

    #[test]
    fn energy_examples() {
        let unit = LeakParams {
            gain: 1.0,
            baseline: 0.0,
        };
        let d = |v| Intermediate::new(v, 0).unwrap();
        assert_eq!(leak_energy(d(0x00), unit), 0.0);
        assert_eq!(leak_energy(d(0xB2), unit), 4.0);
        let p = LeakParams {
            gain: 0.5,
            baseline: 2.0,
        };
        assert_eq!(leak_energy(d(0xFF), p), 6.0);
        assert!(Intermediate::new(0, 8).is_err());
    }

    #[test]
    fn round1_examples() {
        assert_eq!(round1_intermediate_byte(0x00, 0x00), 0xCC);
        assert_eq!(round1_intermediate_byte(0xFF, 0xFF), 0xCC);
        assert_eq!(round1_intermediate_byte(0x0F, 0x00), 0xC2);
    }

    #[test]
    fn round1_matches_cipher_exhaustively() {
        // Put the key byte at every position of K1 and compare with the
        // cipher's captured round-1 S-box output.
        for j in 0..8 {
            for k in 0..=255u8 {
                let mut reg = [0u8; 10];
                reg[j] = k;
                let key = KeyRegister::from_bytes(&reg).unwrap();
                for p in 0..=255u8 {
                    let mut pt = [0u8; 8];
                    pt[j] = p;
                    let out =
                        encrypt_rounds(State64::from_bytes(pt), &key, 1, &[Stage::SboxOutput])
                            .unwrap();
                    assert_eq!(
                        out.captured[0].value.byte(j),
                        round1_intermediate_byte(p, k)
                    );
                }
            }
        }
    }

    proptest! {
        #[test]
        fn hw_bounded(v in any::<u64>(), w in 1u32..=64) {
            let v = if w == 64 { v } else { v & ((1 << w) - 1) };
            let hw = hamming_weight(v, w).unwrap();
            prop_assert!(hw <= w);
        }

        #[test]
        fn hd_is_hw_of_xor(x in any::<u8>(), y in any::<u8>()) {
            prop_assert_eq!(
                hamming_distance(x as u64, y as u64, 8).unwrap(),
                hamming_weight((x ^ y) as u64, 8).unwrap()
            );
        }

        #[test]
        fn energy_affine_in_hw(a in -10.0f64..10.0, b in -10.0f64..10.0, x in any::<u8>(), y in any::<u8>()) {
            let p = LeakParams { gain: a, baseline: b };
            let dx = Intermediate::new(x, 0).unwrap();
            let dy = Intermediate::new(y, 0).unwrap();
            let lhs = leak_energy(dx, p) - leak_energy(dy, p);
            let rhs = a * (x.count_ones() as f64 - y.count_ones() as f64);
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }
    }
}
