//! Time-tag container and its on-disk format.
//!
//! TTAG v1 layout, all fields little-endian:
//!   bytes 0..4   magic "TTAG"
//!   bytes 4..6   version (1)
//!   bytes 6..8   reserved (0)
//!   bytes 8..16  record count
//!   bytes 16..32 reserved (0)
//! followed by 16-byte records: t_ps u64, channel u16, flags u16, 4 reserved
//! bytes (0). An empty stream is exactly the 32-byte header.

use crate::error::{Error, Result};
use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const TTAG_MAGIC: [u8; 4] = *b"TTAG";
pub const TTAG_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 32;
pub const RECORD_LEN: usize = 16;

/// One detection event. `flags` bit 0 marks a dark count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeTag {
    pub t_ps: u64,
    pub channel: u16,
    pub flags: u16,
}

impl TimeTag {
    pub const FLAG_DARK: u16 = 1;

    pub fn is_dark(&self) -> bool {
        self.flags & Self::FLAG_DARK != 0
    }
}

/// An ordered tag sequence, possibly spanning several channels. The stored
/// order must be non-decreasing in time within each channel.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TagStream {
    pub tags: Vec<TimeTag>,
}

impl TagStream {
    pub fn new(tags: Vec<TimeTag>) -> Result<Self> {
        let s = TagStream { tags };
        s.validate()?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    /// Check the per-channel time ordering invariant.
    pub fn validate(&self) -> Result<()> {
        let mut last: HashMap<u16, u64> = HashMap::new();
        for (index, tag) in self.tags.iter().enumerate() {
            if let Some(&prev) = last.get(&tag.channel) {
                if tag.t_ps < prev {
                    return Err(Error::UnsortedStream {
                        index,
                        prev,
                        next: tag.t_ps,
                    });
                }
            }
            last.insert(tag.channel, tag.t_ps);
        }
        Ok(())
    }

    /// Times of all tags on one channel, in stored order.
    pub fn channel_times(&self, channel: u16) -> Vec<u64> {
        self.tags
            .iter()
            .filter(|t| t.channel == channel)
            .map(|t| t.t_ps)
            .collect()
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        self.validate()?;
        let mut header = [0u8; HEADER_LEN];
        header[0..4].copy_from_slice(&TTAG_MAGIC);
        header[4..6].copy_from_slice(&TTAG_VERSION.to_le_bytes());
        header[8..16].copy_from_slice(&(self.tags.len() as u64).to_le_bytes());
        w.write_all(&header)?;
        for tag in &self.tags {
            let mut rec = [0u8; RECORD_LEN];
            rec[0..8].copy_from_slice(&tag.t_ps.to_le_bytes());
            rec[8..10].copy_from_slice(&tag.channel.to_le_bytes());
            rec[10..12].copy_from_slice(&tag.flags.to_le_bytes());
            w.write_all(&rec)?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut header = [0u8; HEADER_LEN];
        let got = read_up_to(r, &mut header)?;
        if got < HEADER_LEN {
            return Err(Error::TruncatedHeader {
                got,
                want: HEADER_LEN,
            });
        }
        if header[0..4] != TTAG_MAGIC {
            return Err(Error::BadMagic);
        }
        let version = u16::from_le_bytes([header[4], header[5]]);
        if version != TTAG_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let count = u64::from_le_bytes(header[8..16].try_into().expect("8 bytes"));
        let mut tags = Vec::with_capacity(count.min(1 << 22) as usize);
        let mut rec = [0u8; RECORD_LEN];
        for index in 0..count {
            let got = read_up_to(r, &mut rec)?;
            if got < RECORD_LEN {
                return Err(Error::TruncatedRecord {
                    index,
                    got,
                    want: RECORD_LEN,
                });
            }
            tags.push(TimeTag {
                t_ps: u64::from_le_bytes(rec[0..8].try_into().expect("8 bytes")),
                channel: u16::from_le_bytes([rec[8], rec[9]]),
                flags: u16::from_le_bytes([rec[10], rec[11]]),
            });
        }
        let mut extra = 0u64;
        let mut sink = [0u8; 4096];
        loop {
            let n = r.read(&mut sink)?;
            if n == 0 {
                break;
            }
            extra += n as u64;
        }
        if extra > 0 {
            return Err(Error::TrailingBytes(extra));
        }
        Self::new(tags)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = BufReader::new(std::fs::File::open(path)?);
        Self::read_from(&mut r)
    }
}

fn read_up_to(r: &mut impl Read, buf: &mut [u8]) -> Result<usize> {
    let mut got = 0;
    while got < buf.len() {
        let n = r.read(&mut buf[got..])?;
        if n == 0 {
            break;
        }
        got += n;
    }
    Ok(got)
}

/// Merge streams into one globally ordered stream, sorted by (t_ps, channel),
/// stable with respect to input order. K-way heap merge.
pub fn merge_sorted(streams: &[TagStream]) -> Result<TagStream> {
    for s in streams {
        s.validate()?;
    }
    let total = streams.iter().map(|s| s.tags.len()).sum();
    let mut out = Vec::with_capacity(total);
    // Key carries (t, channel, stream index) so ties preserve input order.
    let mut heap: BinaryHeap<Reverse<(u64, u16, usize)>> = BinaryHeap::new();
    let mut cursors = vec![0usize; streams.len()];
    for (i, s) in streams.iter().enumerate() {
        if let Some(tag) = s.tags.first() {
            heap.push(Reverse((tag.t_ps, tag.channel, i)));
        }
    }
    while let Some(Reverse((_, _, i))) = heap.pop() {
        let tag = streams[i].tags[cursors[i]];
        out.push(tag);
        cursors[i] += 1;
        if let Some(next) = streams[i].tags.get(cursors[i]) {
            heap.push(Reverse((next.t_ps, next.channel, i)));
        }
    }
    Ok(TagStream { tags: out })
}
