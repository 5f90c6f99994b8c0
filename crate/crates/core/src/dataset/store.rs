//! Binary container for preprocessed segments.
//!
//! Layout, all integers little-endian:
//! `b"PHONSEGS"`, u32 version, u32 bands, u32 frames, u64 count,
//! `count · bands · frames` f64 values, `count` label bytes,
//! u32 clip-id count, each id as u32 length + UTF-8 bytes,
//! then per segment a u32 clip index and a u32 frame offset.

use std::collections::HashMap;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{DatasetError, PhonationMode, Segment, SegmentOrigin};

const MAGIC: &[u8; 8] = b"PHONSEGS";
const VERSION: u32 = 1;

/// Segments sharing one `bands × frames` shape.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentSet {
    pub bands: usize,
    pub frames: usize,
    pub segments: Vec<Segment>,
}

fn corrupt(msg: impl Into<String>) -> DatasetError {
    DatasetError::Corrupt(msg.into())
}

fn read_exact<const N: usize>(r: &mut impl Read) -> Result<[u8; N], DatasetError> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => corrupt("truncated"),
        _ => DatasetError::Io(e),
    })?;
    Ok(buf)
}

fn read_u32(r: &mut impl Read) -> Result<u32, DatasetError> {
    read_exact::<4>(r).map(u32::from_le_bytes)
}

fn to_u32(n: usize, what: &str) -> Result<u32, DatasetError> {
    u32::try_from(n).map_err(|_| DatasetError::InvalidConfig(format!("{what} {n} exceeds u32")))
}

impl SegmentSet {
    pub fn new(bands: usize, frames: usize) -> Self {
        Self {
            bands,
            frames,
            segments: Vec::new(),
        }
    }

    /// Builds a set from segments that must all share one shape.
    pub fn from_segments(segments: Vec<Segment>) -> Result<Self, DatasetError> {
        let (bands, frames) = segments.first().map_or((0, 0), |s| (s.bands, s.frames));
        let mut set = Self::new(bands, frames);
        for s in segments {
            set.push(s)?;
        }
        Ok(set)
    }

    pub fn push(&mut self, segment: Segment) -> Result<(), DatasetError> {
        if segment.bands != self.bands || segment.frames != self.frames {
            return Err(DatasetError::InvalidConfig(format!(
                "segment is {}×{}, set holds {}×{}",
                segment.bands, segment.frames, self.bands, self.frames
            )));
        }
        self.segments.push(segment);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn class_counts(&self) -> [usize; 4] {
        let mut counts = [0; 4];
        for s in &self.segments {
            counts[s.mode.index()] += 1;
        }
        counts
    }

    pub fn write_to(&self, w: impl Write) -> Result<(), DatasetError> {
        let mut w = BufWriter::new(w);
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&to_u32(self.bands, "bands")?.to_le_bytes())?;
        w.write_all(&to_u32(self.frames, "frames")?.to_le_bytes())?;
        w.write_all(&(self.segments.len() as u64).to_le_bytes())?;
        for s in &self.segments {
            for v in &s.values {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        for s in &self.segments {
            w.write_all(&[s.mode.index() as u8])?;
        }
        let mut ids: Vec<&str> = Vec::new();
        let mut index: HashMap<&str, u32> = HashMap::new();
        let mut refs = Vec::with_capacity(self.segments.len());
        for s in &self.segments {
            let id = s.origin.clip_id.as_str();
            let i = *index.entry(id).or_insert_with(|| {
                ids.push(id);
                (ids.len() - 1) as u32
            });
            refs.push((i, to_u32(s.origin.frame_offset, "frame offset")?));
        }
        w.write_all(&to_u32(ids.len(), "clip count")?.to_le_bytes())?;
        for id in ids {
            w.write_all(&to_u32(id.len(), "clip id length")?.to_le_bytes())?;
            w.write_all(id.as_bytes())?;
        }
        for (i, off) in refs {
            w.write_all(&i.to_le_bytes())?;
            w.write_all(&off.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from(r: impl Read) -> Result<Self, DatasetError> {
        let mut r = BufReader::new(r);
        if &read_exact::<8>(&mut r)? != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(corrupt(format!("unsupported version {version}")));
        }
        let bands = read_u32(&mut r)? as usize;
        let frames = read_u32(&mut r)? as usize;
        let count = usize::try_from(u64::from_le_bytes(read_exact::<8>(&mut r)?))
            .map_err(|_| corrupt("segment count overflows"))?;
        let per = bands * frames;
        let mut values = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let mut v = Vec::with_capacity(per);
            for _ in 0..per {
                let x = f64::from_le_bytes(read_exact::<8>(&mut r)?);
                if !x.is_finite() {
                    return Err(corrupt("non-finite value"));
                }
                v.push(x);
            }
            values.push(v);
        }
        let mut modes = Vec::with_capacity(values.len());
        for _ in 0..count {
            let [b] = read_exact::<1>(&mut r)?;
            modes.push(PhonationMode::from_index(b as usize).ok_or_else(|| corrupt(format!("label byte {b}")))?);
        }
        let n_ids = read_u32(&mut r)? as usize;
        let mut ids = Vec::with_capacity(n_ids.min(1 << 16));
        for _ in 0..n_ids {
            let len = read_u32(&mut r)? as usize;
            let mut buf = vec![0u8; len];
            r.read_exact(&mut buf).map_err(|_| corrupt("truncated clip id"))?;
            ids.push(String::from_utf8(buf).map_err(|_| corrupt("clip id is not UTF-8"))?);
        }
        let mut segments = Vec::with_capacity(values.len());
        for (values, mode) in values.into_iter().zip(modes) {
            let clip = read_u32(&mut r)? as usize;
            let frame_offset = read_u32(&mut r)? as usize;
            let clip_id = ids.get(clip).ok_or_else(|| corrupt("clip index out of range"))?.clone();
            segments.push(Segment {
                bands,
                frames,
                values,
                mode,
                origin: SegmentOrigin { clip_id, frame_offset },
            });
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(corrupt("trailing bytes"));
        }
        Ok(Self {
            bands,
            frames,
            segments,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        self.write_to(std::fs::File::create(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        Self::read_from(std::fs::File::open(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(id: &str, offset: usize, mode: PhonationMode, base: f64) -> Segment {
        Segment {
            bands: 2,
            frames: 3,
            values: (0..6).map(|i| base + i as f64 * 0.5).collect(),
            mode,
            origin: SegmentOrigin {
                clip_id: id.into(),
                frame_offset: offset,
            },
        }
    }

    fn sample() -> SegmentSet {
        SegmentSet::from_segments(vec![
            seg("a.wav", 4, PhonationMode::Flow, 0.0),
            seg("a.wav", 13, PhonationMode::Flow, 1.0),
            seg("b.wav", 4, PhonationMode::Pressed, -2.0),
        ])
        .unwrap()
    }

    #[test]
    fn round_trip() {
        let set = sample();
        let mut buf = Vec::new();
        set.write_to(&mut buf).unwrap();
        assert_eq!(SegmentSet::read_from(buf.as_slice()).unwrap(), set);
        assert_eq!(set.class_counts(), [0, 0, 2, 1]);
    }

    #[test]
    fn truncation_and_magic() {
        let mut buf = Vec::new();
        sample().write_to(&mut buf).unwrap();
        for cut in [0, 7, 30, buf.len() - 1] {
            assert!(matches!(
                SegmentSet::read_from(&buf[..cut]),
                Err(DatasetError::Corrupt(_))
            ));
        }
        buf[0] = b'X';
        assert!(matches!(SegmentSet::read_from(buf.as_slice()), Err(DatasetError::Corrupt(_))));
    }

    #[test]
    fn mixed_shapes_rejected() {
        let mut other = seg("c", 0, PhonationMode::Neutral, 0.0);
        other.frames = 2;
        other.values.truncate(4);
        let mut set = sample();
        assert!(set.push(other).is_err());
    }
}
