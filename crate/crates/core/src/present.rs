//! PRESENT block cipher (64-bit block, 80- or 128-bit key, 31 rounds).
//!
//! Bit numbering follows the original cipher description: bit 63 of a
//! [`State64`] is the leftmost, most significant bit, and state byte 0 is the
//! most significant byte. Plaintext byte `i` therefore lands in state byte
//! `i`, which is also the byte position the round-1 attack targets.
//!
//! Besides full encryption and decryption this module exposes round-reduced
//! execution with capture of the per-round intermediates.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ROUNDS: usize = 31;
pub const ROUND_KEYS: usize = ROUNDS + 1;

pub(crate) const SBOX: [u8; 16] = [
    0xC, 0x5, 0x6, 0xB, 0x9, 0x0, 0xA, 0xD, 0x3, 0xE, 0xF, 0x8, 0x4, 0x7, 0x1, 0x2,
];

const SBOX_INV: [u8; 16] = invert_sbox(&SBOX);

/// Both nibbles of a byte pushed through the S-box.
pub(crate) const SBOX_BYTE: [u8; 256] = byte_table(&SBOX);
const SBOX_BYTE_INV: [u8; 256] = byte_table(&SBOX_INV);

/// `PERM[i]` is the destination of bit `i`: `16 i mod 63`, with bit 63 fixed.
const PERM: [u8; 64] = build_perm();
const PERM_INV: [u8; 64] = invert_perm(&PERM);

const fn invert_sbox(s: &[u8; 16]) -> [u8; 16] {
    let mut inv = [0u8; 16];
    let mut i = 0;
    while i < 16 {
        inv[s[i] as usize] = i as u8;
        i += 1;
    }
    inv
}

const fn byte_table(s: &[u8; 16]) -> [u8; 256] {
    let mut t = [0u8; 256];
    let mut v = 0;
    while v < 256 {
        t[v] = (s[v >> 4] << 4) | s[v & 0xF];
        v += 1;
    }
    t
}

const fn build_perm() -> [u8; 64] {
    let mut p = [0u8; 64];
    let mut i = 0;
    while i < 63 {
        p[i] = ((i * 16) % 63) as u8;
        i += 1;
    }
    p[63] = 63;
    p
}

const fn invert_perm(p: &[u8; 64]) -> [u8; 64] {
    let mut inv = [0u8; 64];
    let mut i = 0;
    while i < 64 {
        inv[p[i] as usize] = i as u8;
        i += 1;
    }
    inv
}

/// 64-bit cipher state. Bit 63 is the leftmost bit.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct State64(pub u64);

impl State64 {
    /// Byte `i` counted from the most significant end.
    pub fn byte(self, i: usize) -> u8 {
        self.to_bytes()[i]
    }

    pub fn to_bytes(self) -> [u8; 8] {
        self.0.to_be_bytes()
    }

    pub fn from_bytes(bytes: [u8; 8]) -> Self {
        Self(u64::from_be_bytes(bytes))
    }

    /// Parses 16 hex digits, most significant byte first.
    pub fn from_hex(s: &str) -> Result<Self> {
        let mut buf = [0u8; 8];
        hex::decode_to_slice(s.trim(), &mut buf)
            .map_err(|e| Error::InvalidArgument(format!("state {s:?}: {e}")))?;
        Ok(Self::from_bytes(buf))
    }
}

impl From<u64> for State64 {
    fn from(v: u64) -> Self {
        Self(v)
    }
}

impl fmt::Display for State64 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016X}", self.0)
    }
}

impl fmt::Debug for State64 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "State64({:016X})", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KeyWidth {
    Bits80,
    Bits128,
}

impl KeyWidth {
    pub fn bits(self) -> u32 {
        match self {
            KeyWidth::Bits80 => 80,
            KeyWidth::Bits128 => 128,
        }
    }

    pub fn from_bits(bits: u32) -> Result<Self> {
        match bits {
            80 => Ok(KeyWidth::Bits80),
            128 => Ok(KeyWidth::Bits128),
            other => Err(Error::UnsupportedKeyWidth(other)),
        }
    }

    fn mask(self) -> u128 {
        match self {
            KeyWidth::Bits80 => (1u128 << 80) - 1,
            KeyWidth::Bits128 => u128::MAX,
        }
    }
}

/// The cipher key register; `bits` holds the key right-aligned.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct KeyRegister {
    bits: u128,
    width: KeyWidth,
}

impl KeyRegister {
    pub fn new(bits: u128, width: KeyWidth) -> Result<Self> {
        if bits & !width.mask() != 0 {
            return Err(Error::KeyOverflow {
                width: width.bits(),
            });
        }
        Ok(Self { bits, width })
    }

    pub fn new_80(bits: u128) -> Result<Self> {
        Self::new(bits, KeyWidth::Bits80)
    }

    pub fn new_128(bits: u128) -> Self {
        Self {
            bits,
            width: KeyWidth::Bits128,
        }
    }

    /// Key bytes, most significant first (10 or 16 bytes).
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let width = match bytes.len() {
            10 => KeyWidth::Bits80,
            16 => KeyWidth::Bits128,
            n => return Err(Error::UnsupportedKeyWidth(8 * n as u32)),
        };
        let bits = bytes.iter().fold(0u128, |acc, &b| (acc << 8) | b as u128);
        Self::new(bits, width)
    }

    /// Parses 20 or 32 hex digits; whitespace between bytes is ignored.
    pub fn from_hex(s: &str) -> Result<Self> {
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let bytes =
            hex::decode(&compact).map_err(|e| Error::InvalidArgument(format!("key {s:?}: {e}")))?;
        Self::from_bytes(&bytes)
    }

    pub fn bits(&self) -> u128 {
        self.bits
    }

    pub fn width(&self) -> KeyWidth {
        self.width
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.width.bits() as usize / 8;
        self.bits.to_be_bytes()[16 - n..].to_vec()
    }

    pub fn to_hex(&self) -> String {
        hex::encode_upper(self.to_bytes())
    }

    /// Leftmost 64 bits of the register, i.e. the first round key.
    pub fn first_round_key(&self) -> State64 {
        State64((self.bits >> (self.width.bits() - 64)) as u64)
    }
}

impl fmt::Debug for KeyRegister {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "KeyRegister{}({})", self.width.bits(), self.to_hex())
    }
}

impl fmt::Display for KeyRegister {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// Round keys K1..K32.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoundKeySchedule {
    round_keys: [State64; ROUND_KEYS],
}

impl RoundKeySchedule {
    pub fn round_keys(&self) -> &[State64; ROUND_KEYS] {
        &self.round_keys
    }

    /// 1-based, so `round_key(1)` is K1.
    pub fn round_key(&self, round: usize) -> State64 {
        self.round_keys[round - 1]
    }
}

pub fn sbox(x: u8) -> Result<u8> {
    if x > 0xF {
        return Err(Error::NibbleOutOfRange { value: x });
    }
    Ok(SBOX[x as usize])
}

pub fn sbox_inv(y: u8) -> Result<u8> {
    if y > 0xF {
        return Err(Error::NibbleOutOfRange { value: y });
    }
    Ok(SBOX_INV[y as usize])
}

fn map_bytes(s: State64, table: &[u8; 256]) -> State64 {
    State64::from_bytes(s.to_bytes().map(|b| table[b as usize]))
}

pub fn sbox_layer(s: State64) -> State64 {
    map_bytes(s, &SBOX_BYTE)
}

pub fn sbox_inv_layer(s: State64) -> State64 {
    map_bytes(s, &SBOX_BYTE_INV)
}

fn permute(s: State64, table: &[u8; 64]) -> State64 {
    let mut out = 0u64;
    let mut rest = s.0;
    while rest != 0 {
        let i = rest.trailing_zeros();
        rest &= rest - 1;
        out |= 1 << table[i as usize];
    }
    State64(out)
}

pub fn p_layer(s: State64) -> State64 {
    permute(s, &PERM)
}

pub fn p_layer_inv(s: State64) -> State64 {
    permute(s, &PERM_INV)
}

/// Destination bit of bit `i` under the permutation layer.
pub fn p_index(i: usize) -> usize {
    PERM[i] as usize
}

pub fn add_round_key(s: State64, k: State64) -> State64 {
    State64(s.0 ^ k.0)
}

pub fn key_schedule(key: &KeyRegister) -> RoundKeySchedule {
    let mut round_keys = [State64(0); ROUND_KEYS];
    let mut reg = key.bits;
    match key.width {
        KeyWidth::Bits80 => {
            let mask = KeyWidth::Bits80.mask();
            for (i, slot) in round_keys.iter_mut().enumerate() {
                *slot = State64((reg >> 16) as u64);
                reg = ((reg << 61) | (reg >> 19)) & mask;
                let top = SBOX[(reg >> 76) as usize] as u128;
                reg = (reg & !(0xF << 76)) | (top << 76);
                reg ^= ((i + 1) as u128) << 15;
            }
        }
        KeyWidth::Bits128 => {
            for (i, slot) in round_keys.iter_mut().enumerate() {
                *slot = State64((reg >> 64) as u64);
                reg = reg.rotate_left(61);
                let top = SBOX_BYTE[(reg >> 120) as usize] as u128;
                reg = (reg & !(0xFF << 120)) | (top << 120);
                reg ^= ((i + 1) as u128) << 62;
            }
        }
    }
    RoundKeySchedule { round_keys }
}

pub fn encrypt_with_schedule(p: State64, ks: &RoundKeySchedule) -> State64 {
    let mut s = p;
    for k in &ks.round_keys[..ROUNDS] {
        s = p_layer(sbox_layer(add_round_key(s, *k)));
    }
    add_round_key(s, ks.round_keys[ROUNDS])
}

pub fn decrypt_with_schedule(c: State64, ks: &RoundKeySchedule) -> State64 {
    let mut s = add_round_key(c, ks.round_keys[ROUNDS]);
    for k in ks.round_keys[..ROUNDS].iter().rev() {
        s = add_round_key(sbox_inv_layer(p_layer_inv(s)), *k);
    }
    s
}

pub fn encrypt_block(p: State64, key: &KeyRegister) -> State64 {
    encrypt_with_schedule(p, &key_schedule(key))
}

pub fn decrypt_block(c: State64, key: &KeyRegister) -> State64 {
    decrypt_with_schedule(c, &key_schedule(key))
}

/// A point inside a round where the state can be captured.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    /// State after XOR with the round key, i.e. the S-box input.
    AddRoundKey,
    /// S-box layer output; the round-1 value is the attack target.
    SboxOutput,
    /// Permutation layer output (end of round).
    PLayerOutput,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::AddRoundKey, Stage::SboxOutput, Stage::PLayerOutput];

    pub fn name(self) -> &'static str {
        match self {
            Stage::AddRoundKey => "addroundkey",
            Stage::SboxOutput => "sbox",
            Stage::PLayerOutput => "player",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Captured {
    pub round: usize,
    pub stage: Stage,
    pub value: State64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoundReduced {
    /// State after the last executed round's permutation layer. No final key
    /// addition is applied: for 31 rounds, `state ^ K32` is the ciphertext.
    pub state: State64,
    pub captured: Vec<Captured>,
}

/// Runs the first `n_rounds` rounds, recording the requested stages in
/// round order.
pub fn encrypt_rounds(
    p: State64,
    key: &KeyRegister,
    n_rounds: usize,
    capture: &[Stage],
) -> Result<RoundReduced> {
    if !(1..=ROUNDS).contains(&n_rounds) {
        return Err(Error::InvalidRounds(n_rounds));
    }
    let ks = key_schedule(key);
    let mut captured = Vec::with_capacity(n_rounds * capture.len());
    let mut keep = |round: usize, stage: Stage, value: State64| {
        if capture.contains(&stage) {
            captured.push(Captured {
                round,
                stage,
                value,
            });
        }
    };
    let mut s = p;
    for round in 1..=n_rounds {
        s = add_round_key(s, ks.round_key(round));
        keep(round, Stage::AddRoundKey, s);
        s = sbox_layer(s);
        keep(round, Stage::SboxOutput, s);
        s = p_layer(s);
        keep(round, Stage::PLayerOutput, s);
    }
    Ok(RoundReduced { state: s, captured })
}
