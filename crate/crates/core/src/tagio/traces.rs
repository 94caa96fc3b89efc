//! Trace files: a 28-byte header followed by `f32` samples, trace-major.
//!
//! ```text
//! "CPLTRC01" | sample_rate u64 | trace_length u32 | n_traces u32 | trigger_index u32
//! ```

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;

use crate::homodyne::TraceSet;

pub const TRACE_MAGIC: &[u8; 8] = b"CPLTRC01";
const HEADER_LEN: usize = 28;

#[derive(Debug, thiserror::Error)]
pub enum TraceIoError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic {0:?}")]
    BadMagic([u8; 8]),
    #[error("truncated header ({0} of 28 bytes)")]
    TruncatedHeader(usize),
    #[error("file is {actual} bytes, header implies {expected}")]
    SizeMismatch { expected: u128, actual: u64 },
    #[error("invalid geometry: {0}")]
    BadGeometry(String),
    #[error("sample {0} is not finite")]
    NonFinite(usize),
    #[error("sample rate {0} is not a whole number of Hz")]
    FractionalSampleRate(f64),
}

impl TraceIoError {
    pub fn code(&self) -> &'static str {
        match self {
            TraceIoError::Io(_) => "io",
            TraceIoError::BadMagic(_) => "bad_magic",
            TraceIoError::TruncatedHeader(_) => "truncated_header",
            TraceIoError::SizeMismatch { .. } => "size_mismatch",
            TraceIoError::BadGeometry(_) => "bad_geometry",
            TraceIoError::NonFinite(_) => "non_finite",
            TraceIoError::FractionalSampleRate(_) => "fractional_sample_rate",
        }
    }
}

struct Header {
    sample_rate: u64,
    trace_length: u32,
    n_traces: u32,
    trigger_index: u32,
}

impl Header {
    fn payload_len(&self) -> u128 {
        4 * self.trace_length as u128 * self.n_traces as u128
    }
}

fn header_of(set: &TraceSet) -> Result<[u8; HEADER_LEN], TraceIoError> {
    let rate = set.sample_rate();
    if rate.fract() != 0.0 || rate > u64::MAX as f64 {
        return Err(TraceIoError::FractionalSampleRate(rate));
    }
    let u32_of = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| TraceIoError::BadGeometry(format!("{what} {v} exceeds 32 bits")))
    };
    let mut h = [0u8; HEADER_LEN];
    h[..8].copy_from_slice(TRACE_MAGIC);
    h[8..16].copy_from_slice(&(rate as u64).to_le_bytes());
    h[16..20].copy_from_slice(&u32_of(set.trace_length(), "trace_length")?.to_le_bytes());
    h[20..24].copy_from_slice(&u32_of(set.n_traces(), "n_traces")?.to_le_bytes());
    h[24..28].copy_from_slice(&u32_of(set.trigger_index(), "trigger_index")?.to_le_bytes());
    Ok(h)
}

fn parse_header(bytes: &[u8]) -> Result<Header, TraceIoError> {
    if bytes.len() >= 8 && &bytes[..8] != TRACE_MAGIC {
        return Err(TraceIoError::BadMagic(bytes[..8].try_into().unwrap()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(TraceIoError::TruncatedHeader(bytes.len()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let h = Header {
        sample_rate: u64::from_le_bytes(bytes[8..16].try_into().unwrap()),
        trace_length: u32_at(16),
        n_traces: u32_at(20),
        trigger_index: u32_at(24),
    };
    if h.sample_rate == 0 {
        return Err(TraceIoError::BadGeometry("sample rate is zero".into()));
    }
    if h.trace_length == 0 || h.trigger_index >= h.trace_length {
        return Err(TraceIoError::BadGeometry(format!(
            "trigger_index {} outside trace of length {}",
            h.trigger_index, h.trace_length
        )));
    }
    Ok(h)
}

fn build(h: &Header, payload: &[u8]) -> Result<TraceSet, TraceIoError> {
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(TraceIoError::NonFinite(i));
    }
    TraceSet::new(
        h.sample_rate as f64,
        h.trace_length as usize,
        h.trigger_index as usize,
        data,
    )
    .map_err(|e| TraceIoError::BadGeometry(e.to_string()))
}

pub fn encode_traces(set: &TraceSet) -> Result<Vec<u8>, TraceIoError> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * set.samples().len());
    out.extend_from_slice(&header_of(set)?);
    for v in set.samples() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Validates the header and exact size before touching the payload.
pub fn decode_traces(bytes: &[u8]) -> Result<TraceSet, TraceIoError> {
    let h = parse_header(bytes)?;
    if h.payload_len() + HEADER_LEN as u128 != bytes.len() as u128 {
        return Err(TraceIoError::SizeMismatch {
            expected: h.payload_len() + HEADER_LEN as u128,
            actual: bytes.len() as u64,
        });
    }
    build(&h, &bytes[HEADER_LEN..])
}

pub fn write_traces(path: &Path, set: &TraceSet) -> Result<(), TraceIoError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&header_of(set)?)?;
    for v in set.samples() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_traces(path: &Path) -> Result<TraceSet, TraceIoError> {
    let mut f = File::open(path)?;
    let actual = f.metadata()?.len();
    let mut head = Vec::with_capacity(HEADER_LEN);
    (&mut f).take(HEADER_LEN as u64).read_to_end(&mut head)?;
    let h = parse_header(&head)?;
    let expected = h.payload_len() + HEADER_LEN as u128;
    if expected != actual as u128 {
        return Err(TraceIoError::SizeMismatch { expected, actual });
    }
    let mut payload = Vec::with_capacity(h.payload_len() as usize);
    f.read_to_end(&mut payload)?;
    if payload.len() as u128 != h.payload_len() {
        return Err(TraceIoError::SizeMismatch {
            expected,
            actual: (HEADER_LEN + payload.len()) as u64,
        });
    }
    build(&h, &payload)
}
