//! `.rgcd` recording container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! offset  size  field
//!      0     4  magic "RGCD"
//!      4     2  version (1)
//!      6     1  frame dtype (0 = u8)
//!      7     1  response dtype (0 = f32)
//!      8     8  T, number of frames
//!     16     4  H (50)
//!     20     4  W (50)
//!     24     4  n, response channels
//!     28     4  footer length in bytes
//!     32  T·H·W  frames, row-major
//!      …  T·n·4  responses, row-major f32
//!      …  footer JSON: {"train":[a,b],"validation":[a,b],"test":[a,b]}
//! ```

use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::FRAME_SIDE;
use crate::tensor::ByteReader;

pub const MAGIC: &[u8; 4] = b"RGCD";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 32;
const FRAME_DTYPE_U8: u8 = 0;
const RESPONSE_DTYPE_F32: u8 = 0;

pub const FRAME_PIXELS: usize = FRAME_SIDE * FRAME_SIDE;

/// Train/validation/test frame ranges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Splits {
    #[serde(with = "pair")]
    pub train: Range<usize>,
    #[serde(with = "pair")]
    pub validation: Range<usize>,
    #[serde(with = "pair")]
    pub test: Range<usize>,
}

/// Ranges as `[start, end]` arrays.
mod pair {
    use std::ops::Range;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(r: &Range<usize>, s: S) -> Result<S::Ok, S::Error> {
        [r.start, r.end].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Range<usize>, D::Error> {
        let [a, b] = <[usize; 2]>::deserialize(d)?;
        Ok(a..b)
    }
}

impl Splits {
    /// Test is the trailing 20% of the recording; validation is the trailing
    /// 20% of what remains, training the rest.
    pub fn default_for(t: usize) -> Self {
        let test_start = t * 4 / 5;
        let val_start = test_start * 4 / 5;
        Self {
            train: 0..val_start,
            validation: val_start..test_start,
            test: test_start..t,
        }
    }

    fn check(&self, t: usize) -> std::result::Result<(), String> {
        for (name, r) in [("train", &self.train), ("validation", &self.validation), ("test", &self.test)] {
            if r.start > r.end || r.end > t {
                return Err(format!("{name} range {r:?} outside 0..{t}"));
            }
        }
        if self.train.is_empty() {
            return Err("train range is empty".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordingSet {
    frames: Vec<u8>,
    responses: Vec<f32>,
    channels: usize,
    pub splits: Splits,
}

impl RecordingSet {
    pub fn new(frames: Vec<u8>, responses: Vec<f32>, channels: usize, splits: Splits) -> Result<Self> {
        if channels == 0 {
            return Err(Error::Invalid("recording needs at least one channel".into()));
        }
        if !frames.len().is_multiple_of(FRAME_PIXELS) {
            return Err(Error::Invalid(format!("frame buffer of {} bytes is not a whole number of 50x50 frames", frames.len())));
        }
        let t = frames.len() / FRAME_PIXELS;
        if responses.len() != t * channels {
            return Err(Error::Invalid(format!(
                "{} responses do not match {t} frames x {channels} channels",
                responses.len()
            )));
        }
        if let Some(i) = responses.iter().position(|r| !(*r >= 0.0) || !r.is_finite()) {
            return Err(Error::Invalid(format!("response {} at index {i} is not a finite non-negative rate", responses[i])));
        }
        splits.check(t).map_err(Error::Invalid)?;
        Ok(Self {
            frames,
            responses,
            channels,
            splits,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len() / FRAME_PIXELS
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `(T, H, W, n)`.
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.len(), FRAME_SIDE, FRAME_SIDE, self.channels)
    }

    pub fn frames(&self) -> &[u8] {
        &self.frames
    }

    pub fn frame(&self, t: usize) -> &[u8] {
        &self.frames[t * FRAME_PIXELS..(t + 1) * FRAME_PIXELS]
    }

    pub fn responses(&self) -> &[f32] {
        &self.responses
    }

    pub fn response(&self, t: usize) -> &[f32] {
        &self.responses[t * self.channels..(t + 1) * self.channels]
    }

    pub fn range(&self, split: Split) -> Range<usize> {
        match split {
            Split::Train => self.splits.train.clone(),
            Split::Validation => self.splits.validation.clone(),
            Split::Test => self.splits.test.clone(),
        }
    }

    /// Same responses and splits with replaced frames (noise studies).
    pub fn with_frames(&self, frames: Vec<u8>) -> Result<Self> {
        Self::new(frames, self.responses.clone(), self.channels, self.splits.clone())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let footer = serde_json::to_vec(&self.splits).expect("splits serialize");
        let mut out = Vec::with_capacity(HEADER_LEN + self.frames.len() + self.responses.len() * 4 + footer.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(FRAME_DTYPE_U8);
        out.push(RESPONSE_DTYPE_F32);
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        out.extend_from_slice(&(FRAME_SIDE as u32).to_le_bytes());
        out.extend_from_slice(&(FRAME_SIDE as u32).to_le_bytes());
        out.extend_from_slice(&(self.channels as u32).to_le_bytes());
        out.extend_from_slice(&(footer.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.frames);
        for r in &self.responses {
            out.extend_from_slice(&r.to_le_bytes());
        }
        out.extend_from_slice(&footer);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rd = ByteReader::new(bytes);
        let fmt = |offset: usize, reason: String| Error::Format { offset, reason };
        let magic = rd.take(4)?;
        if magic != MAGIC {
            return Err(fmt(0, format!("bad magic {magic:?}")));
        }
        let version = rd.u16()?;
        if version != VERSION {
            return Err(fmt(4, format!("unsupported version {version}")));
        }
        let frame_dtype = rd.u8()?;
        if frame_dtype != FRAME_DTYPE_U8 {
            return Err(fmt(6, format!("unsupported frame dtype {frame_dtype}")));
        }
        let resp_dtype = rd.u8()?;
        if resp_dtype != RESPONSE_DTYPE_F32 {
            return Err(fmt(7, format!("unsupported response dtype {resp_dtype}")));
        }
        let t = rd.u64()?;
        let h = rd.u32()? as usize;
        let w = rd.u32()? as usize;
        if h != FRAME_SIDE || w != FRAME_SIDE {
            return Err(fmt(16, format!("frames must be 50x50, header says {h}x{w}")));
        }
        let n = rd.u32()? as usize;
        if n == 0 {
            return Err(fmt(24, "zero response channels".into()));
        }
        let footer_len = rd.u32()? as usize;
        let t = usize::try_from(t).map_err(|_| fmt(8, format!("frame count {t} too large")))?;
        let frame_bytes = t
            .checked_mul(FRAME_PIXELS)
            .ok_or_else(|| fmt(8, format!("frame count {t} overflows")))?;
        let resp_bytes = t
            .checked_mul(n)
            .and_then(|v| v.checked_mul(4))
            .ok_or_else(|| fmt(24, format!("response block for T={t}, n={n} overflows")))?;
        let frames = rd.take(frame_bytes)?.to_vec();
        let resp_offset = rd.offset();
        let raw = rd.take(resp_bytes)?;
        let responses: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        if let Some(i) = responses.iter().position(|r| !(*r >= 0.0) || !r.is_finite()) {
            return Err(fmt(resp_offset + 4 * i, format!("response {} is not a finite non-negative rate", responses[i])));
        }
        let footer_offset = rd.offset();
        let footer = rd.take(footer_len)?;
        if rd.remaining() != 0 {
            return Err(fmt(rd.offset(), format!("{} trailing bytes after footer", rd.remaining())));
        }
        let splits: Splits =
            serde_json::from_slice(footer).map_err(|e| fmt(footer_offset, format!("footer: {e}")))?;
        splits.check(t).map_err(|e| fmt(footer_offset, e))?;
        Ok(Self {
            frames,
            responses,
            channels: n,
            splits,
        })
    }
}

pub fn save_recording(rec: &RecordingSet, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, rec.to_bytes())?;
    Ok(())
}

pub fn load_recording(path: impl AsRef<Path>) -> Result<RecordingSet> {
    RecordingSet::from_bytes(&std::fs::read(path)?)
}

/// Writes `t,ch0,ch1,…` rows for the given frame range.
pub fn responses_csv(rec: &RecordingSet, range: Range<usize>) -> String {
    let mut out = String::from("t");
    for c in 0..rec.channels() {
        out.push_str(&format!(",ch{c}"));
    }
    out.push('\n');
    for t in range {
        out.push_str(&t.to_string());
        for r in rec.response(t) {
            out.push_str(&format!(",{r}"));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(t: usize, n: usize) -> RecordingSet {
        let frames = (0..t * FRAME_PIXELS).map(|i| (i * 7 % 256) as u8).collect();
        let responses = (0..t * n).map(|i| (i % 5) as f32 * 0.25).collect();
        RecordingSet::new(frames, responses, n, Splits::default_for(t)).unwrap()
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let rec = tiny(12, 3);
        let back = RecordingSet::from_bytes(&rec.to_bytes()).unwrap();
        assert_eq!(back, rec);
    }

    #[test]
    fn default_splits_nest() {
        let s = Splits::default_for(1000);
        assert_eq!(s.train, 0..640);
        assert_eq!(s.validation, 640..800);
        assert_eq!(s.test, 800..1000);
    }

    #[test]
    fn truncation_reports_offset() {
        let bytes = tiny(4, 2).to_bytes();
        for cut in [3, 20, 100, bytes.len() - 1] {
            let err = RecordingSet::from_bytes(&bytes[..cut]).unwrap_err();
            assert!(err.to_string().contains("unexpected end of stream"), "{cut}: {err}");
        }
    }

    #[test]
    fn bad_magic_and_version() {
        let mut bytes = tiny(5, 1).to_bytes();
        bytes[0] = b'X';
        assert!(RecordingSet::from_bytes(&bytes).unwrap_err().to_string().contains("offset 0"));
        let mut bytes = tiny(5, 1).to_bytes();
        bytes[4] = 9;
        assert!(RecordingSet::from_bytes(&bytes).unwrap_err().to_string().contains("version"));
    }

    #[test]
    fn negative_response_is_rejected() {
        let mut bytes = tiny(5, 1).to_bytes();
        let off = HEADER_LEN + 5 * FRAME_PIXELS;
        bytes[off..off + 4].copy_from_slice(&(-1.0f32).to_le_bytes());
        let err = RecordingSet::from_bytes(&bytes).unwrap_err();
        assert!(err.to_string().contains(&format!("offset {off}")), "{err}");
    }

    #[test]
    fn csv_has_header_and_rows() {
        let rec = tiny(3, 2);
        let csv = responses_csv(&rec, 0..3);
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.starts_with("t,ch0,ch1\n"));
    }
}
