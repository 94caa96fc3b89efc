//! Tag files: a 16-byte header followed by 16-byte records.
//!
//! ```text
//! header: "CPLTAG01" | tick_ps u32 | channel_count u8 | 3 zero bytes
//! record: ticks u64  | channel u8  | 7 zero bytes
//! ```
//!
//! All integers are little-endian. Channels are interleaved in time order.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::stream::{TagStream, TICK_PS};

pub const TAG_MAGIC: &[u8; 8] = b"CPLTAG01";
const HEADER_LEN: usize = 16;
const RECORD_LEN: usize = 16;

#[derive(Debug, thiserror::Error)]
pub enum TagIoError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic {0:?}")]
    BadMagic([u8; 8]),
    #[error("truncated header ({0} of 16 bytes)")]
    TruncatedHeader(usize),
    #[error("unsupported resolution: {0} ps per tick")]
    UnsupportedResolution(u32),
    #[error("header reserved bytes are not zero")]
    ReservedNonZero,
    #[error("truncated record {record} ({got} of 16 bytes)")]
    TruncatedRecord { record: u64, got: usize },
    #[error("record {record}: channel {channel} out of range for {channel_count} channels")]
    BadChannel {
        record: u64,
        channel: u8,
        channel_count: u8,
    },
    #[error("record {record}: padding bytes are not zero")]
    BadPadding { record: u64 },
    #[error("record {record}: channel {channel} ticks decrease")]
    NonMonotonic { record: u64, channel: u8 },
    #[error("channel {0} appears in more than one stream")]
    DuplicateChannel(u8),
}

impl TagIoError {
    /// Short stable identifier of the failure class.
    pub fn code(&self) -> &'static str {
        match self {
            TagIoError::Io(_) => "io",
            TagIoError::BadMagic(_) => "bad_magic",
            TagIoError::TruncatedHeader(_) => "truncated_header",
            TagIoError::UnsupportedResolution(_) => "unsupported_resolution",
            TagIoError::ReservedNonZero => "reserved_nonzero",
            TagIoError::TruncatedRecord { .. } => "truncated_record",
            TagIoError::BadChannel { .. } => "bad_channel",
            TagIoError::BadPadding { .. } => "bad_padding",
            TagIoError::NonMonotonic { .. } => "non_monotonic",
            TagIoError::DuplicateChannel(_) => "duplicate_channel",
        }
    }
}

/// Writes `streams` time-ordered; ties go to the stream listed first.
/// The header declares `max channel + 1` channels.
pub fn write_tags_to<W: Write>(mut w: W, streams: &[TagStream]) -> Result<(), TagIoError> {
    let mut seen = [false; 256];
    for s in streams {
        if std::mem::replace(&mut seen[s.channel() as usize], true) {
            return Err(TagIoError::DuplicateChannel(s.channel()));
        }
    }
    let channel_count = streams.iter().map(|s| s.channel() as usize + 1).max().unwrap_or(0);
    let channel_count = u8::try_from(channel_count).map_err(|_| TagIoError::BadChannel {
        record: 0,
        channel: u8::MAX,
        channel_count: u8::MAX,
    })?;

    let mut header = [0u8; HEADER_LEN];
    header[..8].copy_from_slice(TAG_MAGIC);
    header[8..12].copy_from_slice(&TICK_PS.to_le_bytes());
    header[12] = channel_count;
    w.write_all(&header)?;

    let mut pos = vec![0usize; streams.len()];
    let mut rec = [0u8; RECORD_LEN];
    loop {
        let next = (0..streams.len())
            .filter(|&k| pos[k] < streams[k].len())
            .min_by_key(|&k| (streams[k].ticks()[pos[k]], k));
        let Some(k) = next else { break };
        rec[..8].copy_from_slice(&streams[k].ticks()[pos[k]].to_le_bytes());
        rec[8] = streams[k].channel();
        w.write_all(&rec)?;
        pos[k] += 1;
    }
    w.flush()?;
    Ok(())
}

pub fn write_tags(path: &Path, streams: &[TagStream]) -> Result<(), TagIoError> {
    write_tags_to(BufWriter::new(File::create(path)?), streams)
}

/// Reads until `buf` is full or the input ends; returns the bytes read.
fn fill<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) => break,
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(got)
}

/// Decodes a whole tag file into one stream per declared channel.
pub fn read_tags_from<R: Read>(mut r: R) -> Result<Vec<TagStream>, TagIoError> {
    let mut header = [0u8; HEADER_LEN];
    let got = fill(&mut r, &mut header)?;
    if got < HEADER_LEN {
        if got >= 8 && &header[..8] != TAG_MAGIC {
            return Err(TagIoError::BadMagic(header[..8].try_into().unwrap()));
        }
        return Err(TagIoError::TruncatedHeader(got));
    }
    if &header[..8] != TAG_MAGIC {
        return Err(TagIoError::BadMagic(header[..8].try_into().unwrap()));
    }
    let tick_ps = u32::from_le_bytes(header[8..12].try_into().unwrap());
    if tick_ps != TICK_PS {
        return Err(TagIoError::UnsupportedResolution(tick_ps));
    }
    let channel_count = header[12];
    if header[13..].iter().any(|&b| b != 0) {
        return Err(TagIoError::ReservedNonZero);
    }

    let mut ticks: Vec<Vec<u64>> = vec![Vec::new(); channel_count as usize];
    let mut rec = [0u8; RECORD_LEN];
    let mut record = 0u64;
    loop {
        let got = fill(&mut r, &mut rec)?;
        if got == 0 {
            break;
        }
        if got < RECORD_LEN {
            return Err(TagIoError::TruncatedRecord { record, got });
        }
        let t = u64::from_le_bytes(rec[..8].try_into().unwrap());
        let channel = rec[8];
        if channel >= channel_count {
            return Err(TagIoError::BadChannel {
                record,
                channel,
                channel_count,
            });
        }
        if rec[9..].iter().any(|&b| b != 0) {
            return Err(TagIoError::BadPadding { record });
        }
        let list = &mut ticks[channel as usize];
        if list.last().is_some_and(|&prev| t < prev) {
            return Err(TagIoError::NonMonotonic { record, channel });
        }
        list.push(t);
        record += 1;
    }
    Ok(ticks
        .into_iter()
        .enumerate()
        .map(|(c, t)| TagStream::new(c as u8, t).expect("checked monotonic"))
        .collect())
}

pub fn read_tags(path: &Path) -> Result<Vec<TagStream>, TagIoError> {
    read_tags_from(BufReader::new(File::open(path)?))
}

pub fn encode_tags(streams: &[TagStream]) -> Result<Vec<u8>, TagIoError> {
    let mut out = Vec::with_capacity(HEADER_LEN + RECORD_LEN * streams.iter().map(|s| s.len()).sum::<usize>());
    write_tags_to(&mut out, streams)?;
    Ok(out)
}

pub fn decode_tags(bytes: &[u8]) -> Result<Vec<TagStream>, TagIoError> {
    read_tags_from(bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn streams() -> Vec<TagStream> {
        vec![
            TagStream::new(0, vec![0, 5, 9, 9, u64::MAX]).unwrap(),
            TagStream::new(1, vec![5, 6]).unwrap(),
            TagStream::new(2, vec![]).unwrap(),
        ]
    }

    #[test]
    fn round_trip() {
        let bytes = encode_tags(&streams()).unwrap();
        assert_eq!(bytes.len(), 16 + 16 * 7);
        assert_eq!(decode_tags(&bytes).unwrap(), streams());
    }

    #[test]
    fn layout_is_exact() {
        let bytes = encode_tags(&[TagStream::new(1, vec![0x0102]).unwrap()]).unwrap();
        let mut want = b"CPLTAG01".to_vec();
        want.extend_from_slice(&[125, 0, 0, 0, 2, 0, 0, 0]);
        want.extend_from_slice(&[2, 1, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(bytes, want);
    }

    #[test]
    fn empty_file_has_no_channels() {
        let bytes = encode_tags(&[]).unwrap();
        assert_eq!(bytes.len(), 16);
        assert!(decode_tags(&bytes).unwrap().is_empty());
    }

    #[test]
    fn distinct_errors() {
        let good = encode_tags(&streams()).unwrap();

        let mut b = good.clone();
        b.truncate(good.len() - 3);
        assert!(matches!(
            decode_tags(&b),
            Err(TagIoError::TruncatedRecord { record: 6, got: 13 })
        ));

        let mut b = good.clone();
        b[8..12].copy_from_slice(&250u32.to_le_bytes());
        assert!(matches!(decode_tags(&b), Err(TagIoError::UnsupportedResolution(250))));

        let mut b = good.clone();
        b[0] = b'X';
        assert!(matches!(decode_tags(&b), Err(TagIoError::BadMagic(_))));

        assert!(matches!(decode_tags(&good[..10]), Err(TagIoError::TruncatedHeader(10))));

        let mut b = good.clone();
        b[15] = 1;
        assert!(matches!(decode_tags(&b), Err(TagIoError::ReservedNonZero)));

        let mut b = good.clone();
        b[16 + 8] = 7;
        assert!(matches!(
            decode_tags(&b),
            Err(TagIoError::BadChannel {
                record: 0,
                channel: 7,
                ..
            })
        ));

        let mut b = good.clone();
        b[16 + 15] = 1;
        assert!(matches!(decode_tags(&b), Err(TagIoError::BadPadding { record: 0 })));

        // Swap the tick values of the first two channel-0 records.
        let mut b = good.clone();
        b[16..24].copy_from_slice(&100u64.to_le_bytes());
        assert!(matches!(
            decode_tags(&b),
            Err(TagIoError::NonMonotonic { channel: 0, .. })
        ));

        let dup = [TagStream::empty(1), TagStream::empty(1)];
        assert!(matches!(encode_tags(&dup), Err(TagIoError::DuplicateChannel(1))));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.bin");
        write_tags(&p, &streams()).unwrap();
        assert_eq!(read_tags(&p).unwrap(), streams());
        assert!(matches!(read_tags(&dir.path().join("missing")), Err(TagIoError::Io(_))));
    }
}
