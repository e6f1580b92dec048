//! The `.cemt` binary trace-set format.
//!
//! All integers and floats are little-endian.
//!
//! | offset | size | field                                         |
//! |-------:|-----:|-----------------------------------------------|
//! | 0      | 4    | magic `CEMT`                                  |
//! | 4      | 4    | version (u32, = 1)                            |
//! | 8      | 4    | n_traces (u32, > 0)                           |
//! | 12     | 4    | n_samples (u32, > 0)                          |
//! | 16     | 8    | sample_rate (f64, Hz)                         |
//! | 24     | 4    | flags (u32): bit 0 idle set, bit 1 key stored |
//! | 28     | 8    | seed (u64)                                    |
//! | 36     | 28   | reserved; with flag bit 1: key (u128) at 36, key width in bits (u32) at 52; zero otherwise |
//!
//! The 64-byte header is followed by `n_traces x 8` plaintext bytes and then
//! `n_traces x n_samples` f32 samples, row-major.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::present::{KeyRegister, KeyWidth};
use crate::traces::{Provenance, TraceSet};

pub const MAGIC: [u8; 4] = *b"CEMT";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 64;

pub const FLAG_IDLE: u32 = 1;
pub const FLAG_KEY: u32 = 1 << 1;

/// Exact file size for a given geometry.
pub fn file_len(n_traces: usize, n_samples: usize) -> u64 {
    HEADER_LEN as u64 + 8 * n_traces as u64 + 4 * n_traces as u64 * n_samples as u64
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceFileHeader {
    pub version: u32,
    pub n_traces: u32,
    pub n_samples: u32,
    pub sample_rate: f64,
    pub flags: u32,
    pub seed: u64,
    pub key: Option<KeyRegister>,
}

impl TraceFileHeader {
    fn encode(&self) -> [u8; HEADER_LEN] {
        let mut h = [0u8; HEADER_LEN];
        h[0..4].copy_from_slice(&MAGIC);
        h[4..8].copy_from_slice(&self.version.to_le_bytes());
        h[8..12].copy_from_slice(&self.n_traces.to_le_bytes());
        h[12..16].copy_from_slice(&self.n_samples.to_le_bytes());
        h[16..24].copy_from_slice(&self.sample_rate.to_le_bytes());
        h[24..28].copy_from_slice(&self.flags.to_le_bytes());
        h[28..36].copy_from_slice(&self.seed.to_le_bytes());
        if let Some(key) = self.key {
            h[36..52].copy_from_slice(&key.bits().to_le_bytes());
            h[52..56].copy_from_slice(&key.width().bits().to_le_bytes());
        }
        h
    }

    fn decode(path: &Path, h: &[u8]) -> Result<Self> {
        let corrupt = |msg: &str| Error::Corrupt {
            path: path.to_path_buf(),
            msg: msg.to_string(),
        };
        if h.len() < HEADER_LEN {
            return Err(corrupt("truncated header"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(h[o..o + 4].try_into().unwrap());
        let magic: [u8; 4] = h[0..4].try_into().unwrap();
        if magic != MAGIC {
            return Err(Error::BadMagic {
                path: path.to_path_buf(),
                found: magic,
            });
        }
        let version = u32_at(4);
        if version != VERSION {
            return Err(Error::VersionMismatch {
                path: path.to_path_buf(),
                found: version,
            });
        }
        let n_traces = u32_at(8);
        let n_samples = u32_at(12);
        if n_traces == 0 || n_samples == 0 {
            return Err(corrupt("zero trace or sample count"));
        }
        let sample_rate = f64::from_le_bytes(h[16..24].try_into().unwrap());
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(corrupt("invalid sample rate"));
        }
        let flags = u32_at(24);
        if flags & !(FLAG_IDLE | FLAG_KEY) != 0 {
            return Err(corrupt("unknown flag bits"));
        }
        let seed = u64::from_le_bytes(h[28..36].try_into().unwrap());
        let key = if flags & FLAG_KEY != 0 {
            let bits = u128::from_le_bytes(h[36..52].try_into().unwrap());
            let width = KeyWidth::from_bits(u32_at(52)).map_err(|_| corrupt("bad key width"))?;
            if h[56..64].iter().any(|&b| b != 0) {
                return Err(corrupt("nonzero reserved bytes"));
            }
            Some(KeyRegister::new(bits, width).map_err(|_| corrupt("key exceeds width"))?)
        } else {
            if h[36..64].iter().any(|&b| b != 0) {
                return Err(corrupt("nonzero reserved bytes"));
            }
            None
        };
        Ok(Self {
            version,
            n_traces,
            n_samples,
            sample_rate,
            flags,
            seed,
            key,
        })
    }
}

pub fn header_for(ts: &TraceSet) -> Result<TraceFileHeader> {
    let count = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| Error::Geometry(format!("{what} {v} exceeds u32")))
    };
    let p = ts.provenance();
    let mut flags = 0;
    if p.idle {
        flags |= FLAG_IDLE;
    }
    if p.key.is_some() {
        flags |= FLAG_KEY;
    }
    Ok(TraceFileHeader {
        version: VERSION,
        n_traces: count(ts.n_traces(), "n_traces")?,
        n_samples: count(ts.n_samples(), "n_samples")?,
        sample_rate: ts.sample_rate(),
        flags,
        seed: p.seed,
        key: p.key,
    })
}

/// Writes the set. The provenance note is not stored; the key only when
/// present in the provenance.
pub fn write_traceset(ts: &TraceSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let header = header_for(ts)?;
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    w.write_all(&header.encode()).map_err(io)?;
    for p in ts.plaintexts() {
        w.write_all(p).map_err(io)?;
    }
    for chunk in ts.samples().chunks(8192) {
        let bytes: Vec<u8> = chunk.iter().flat_map(|v| v.to_le_bytes()).collect();
        w.write_all(&bytes).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_header(path: impl AsRef<Path>) -> Result<TraceFileHeader> {
    use std::io::Read;
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(HEADER_LEN);
    File::open(path)
        .and_then(|f| f.take(HEADER_LEN as u64).read_to_end(&mut buf))
        .map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
    TraceFileHeader::decode(path, &buf)
}

pub fn read_traceset(path: impl AsRef<Path>) -> Result<TraceSet> {
    let path = path.as_ref();
    let data = std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let header = TraceFileHeader::decode(path, &data)?;
    let n = header.n_traces as usize;
    let s = header.n_samples as usize;
    let expected = file_len(n, s);
    if data.len() as u64 != expected {
        return Err(Error::LengthMismatch {
            path: path.to_path_buf(),
            expected,
            actual: data.len() as u64,
        });
    }
    let body = &data[HEADER_LEN..];
    let plaintexts: Vec<[u8; 8]> = body[..8 * n]
        .chunks_exact(8)
        .map(|c| c.try_into().unwrap())
        .collect();
    let samples: Vec<f32> = body[8 * n..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::Corrupt {
            path: path.to_path_buf(),
            msg: "non-finite sample".into(),
        });
    }
    TraceSet::new(
        samples,
        s,
        plaintexts,
        header.sample_rate,
        Provenance {
            idle: header.flags & FLAG_IDLE != 0,
            seed: header.seed,
            key: header.key,
            note: String::new(),
        },
    )
}
