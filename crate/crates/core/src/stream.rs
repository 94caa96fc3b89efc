//! Time-tag streams, the common currency of the correlation pipeline.

/// Duration of one time-tag tick in picoseconds.
pub const TICK_PS: u32 = 125;
/// Ticks per nanosecond.
pub const TICKS_PER_NS: f64 = 1000.0 / TICK_PS as f64;

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
#[error("channel {channel}: tag {index} ({tick}) precedes its predecessor ({prev})")]
pub struct UnsortedStream {
    pub channel: u8,
    pub index: usize,
    pub tick: u64,
    pub prev: u64,
}

/// Detection timestamps of one channel, in 125 ps ticks, non-decreasing.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TagStream {
    channel: u8,
    ticks: Vec<u64>,
}

impl TagStream {
    /// Wraps a tick vector, checking that it is sorted.
    pub fn new(channel: u8, ticks: Vec<u64>) -> Result<Self, UnsortedStream> {
        if let Some(i) = ticks.windows(2).position(|w| w[1] < w[0]) {
            return Err(UnsortedStream {
                channel,
                index: i + 1,
                tick: ticks[i + 1],
                prev: ticks[i],
            });
        }
        Ok(Self { channel, ticks })
    }

    /// Sorts the ticks first.
    pub fn from_unsorted(channel: u8, mut ticks: Vec<u64>) -> Self {
        ticks.sort_unstable();
        Self { channel, ticks }
    }

    pub fn empty(channel: u8) -> Self {
        Self {
            channel,
            ticks: Vec::new(),
        }
    }

    pub fn channel(&self) -> u8 {
        self.channel
    }

    pub fn with_channel(mut self, channel: u8) -> Self {
        self.channel = channel;
        self
    }

    pub fn ticks(&self) -> &[u64] {
        &self.ticks
    }

    pub fn into_ticks(self) -> Vec<u64> {
        self.ticks
    }

    pub fn len(&self) -> usize {
        self.ticks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ticks.is_empty()
    }

    /// Shifts every tag by `shift` ticks, dropping tags that would land
    /// below zero.
    pub fn shifted(&self, shift: i64) -> Self {
        let ticks = if shift >= 0 {
            self.ticks.iter().map(|&t| t + shift as u64).collect()
        } else {
            let s = shift.unsigned_abs();
            self.ticks.iter().filter(|&&t| t >= s).map(|&t| t - s).collect()
        };
        Self {
            channel: self.channel,
            ticks,
        }
    }

    /// Merges two sorted streams into one labelled `channel`.
    pub fn merged(&self, other: &TagStream, channel: u8) -> Self {
        let (a, b) = (&self.ticks, &other.ticks);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            if a[i] <= b[j] {
                out.push(a[i]);
                i += 1;
            } else {
                out.push(b[j]);
                j += 1;
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend_from_slice(&b[j..]);
        Self { channel, ticks: out }
    }
}

/// Converts nanoseconds to an exact tick count, if it is one.
pub fn ns_to_ticks_exact(ns: f64) -> Option<i64> {
    let t = ns * TICKS_PER_NS;
    let r = t.round();
    if t.is_finite() && (t - r).abs() <= 1e-9 * r.abs().max(1.0) {
        Some(r as i64)
    } else {
        None
    }
}

pub fn ticks_to_ns(ticks: i64) -> f64 {
    ticks as f64 / TICKS_PER_NS
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unsorted() {
        let e = TagStream::new(2, vec![1, 5, 3]).unwrap_err();
        assert_eq!(e.index, 2);
        assert!(TagStream::new(0, vec![1, 1, 2]).is_ok());
    }

    #[test]
    fn tick_conversion() {
        assert_eq!(ns_to_ticks_exact(30.0), Some(240));
        assert_eq!(ns_to_ticks_exact(-31.0), Some(-248));
        assert_eq!(ns_to_ticks_exact(0.1), None);
        assert_eq!(ticks_to_ns(16), 2.0);
    }

    #[test]
    fn shift_and_merge() {
        let a = TagStream::new(0, vec![2, 10, 20]).unwrap();
        assert_eq!(a.shifted(-5).ticks(), &[5, 15]);
        assert_eq!(a.shifted(3).ticks(), &[5, 13, 23]);
        let b = TagStream::new(1, vec![1, 10, 30]).unwrap();
        assert_eq!(a.merged(&b, 9).ticks(), &[1, 2, 10, 10, 20, 30]);
    }
}
