use std::ops::Range;

use crate::error::{Error, Result};
use crate::layers::FRAME_SIDE;
use crate::sequence::SequencePlan;
use crate::tensor::Tensor;

use super::normalize::ChannelNormalizer;
use super::recording::{RecordingSet, FRAME_PIXELS};

/// One input window and its next-step target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample<'a> {
    /// First input frame index.
    pub start: usize,
    /// Response index predicted from the window (last input frame + 1).
    pub target_index: usize,
    pub frames: &'a [u8],
    pub target: &'a [f32],
}

/// All stride-1 windows of a plan inside one frame range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Windows {
    pub range: Range<usize>,
    pub frames: usize,
}

impl Windows {
    pub fn len(&self) -> usize {
        self.range.len() - self.frames
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// First frame of window `i`.
    pub fn start(&self, i: usize) -> usize {
        self.range.start + i
    }

    pub fn target_index(&self, i: usize) -> usize {
        self.range.start + i + self.frames
    }

    pub fn sample<'a>(&self, rec: &'a RecordingSet, i: usize) -> Sample<'a> {
        let start = self.start(i);
        let target_index = self.target_index(i);
        Sample {
            start,
            target_index,
            frames: &rec.frames()[start * FRAME_PIXELS..target_index * FRAME_PIXELS],
            target: rec.response(target_index),
        }
    }

    pub fn iter<'a>(&'a self, rec: &'a RecordingSet) -> impl Iterator<Item = Sample<'a>> + 'a {
        (0..self.len()).map(move |i| self.sample(rec, i))
    }

    /// Model input `[B, F, 50, 50]` with pixels mapped to `[-1, 1]`.
    pub fn batch_frames(&self, rec: &RecordingSet, indices: &[usize]) -> Tensor {
        let per = self.frames * FRAME_PIXELS;
        let mut data = Vec::with_capacity(indices.len() * per);
        for &i in indices {
            data.extend(self.sample(rec, i).frames.iter().map(|&p| pixel_input(p)));
        }
        Tensor::new(vec![indices.len(), self.frames, FRAME_SIDE, FRAME_SIDE], data).expect("window batch shape")
    }

    /// Raw targets `[B·n]`, normalised when a normaliser is given.
    pub fn batch_targets(&self, rec: &RecordingSet, indices: &[usize], norm: Option<&ChannelNormalizer>) -> Vec<f64> {
        let mut out = Vec::with_capacity(indices.len() * rec.channels());
        for &i in indices {
            let y: Vec<f64> = self.sample(rec, i).target.iter().map(|&v| v as f64).collect();
            match norm {
                Some(n) => out.extend(n.normalize(&y)),
                None => out.extend(y),
            }
        }
        out
    }
}

/// Centres 8-bit intensities on zero: 0 → −1, 255 → 1.
pub fn pixel_input(p: u8) -> f64 {
    p as f64 / 127.5 - 1.0
}

/// Windows for `plan` over `range`: `range.len() − F` samples.
pub fn make_windows(rec: &RecordingSet, plan: &SequencePlan, range: Range<usize>) -> Result<Windows> {
    plan.validate()?;
    let frames = plan.total_frames();
    if range.end > rec.len() || range.start > range.end {
        return Err(Error::Invalid(format!("range {range:?} outside recording of {} frames", rec.len())));
    }
    if range.len() < frames + 1 {
        return Err(Error::RangeTooShort { len: range.len(), frames });
    }
    Ok(Windows { range, frames })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::recording::Splits;

    fn rec(t: usize) -> RecordingSet {
        let frames = (0..t).flat_map(|i| std::iter::repeat_n((i % 256) as u8, FRAME_PIXELS)).collect();
        let responses = (0..t).map(|i| i as f32).collect();
        RecordingSet::new(frames, responses, 1, Splits::default_for(t)).unwrap()
    }

    #[test]
    fn counts_and_first_target() {
        let r = rec(100);
        let w = make_windows(&r, &SequencePlan::default(), 0..100).unwrap();
        assert_eq!(w.len(), 60);
        assert_eq!(w.sample(&r, 0).target_index, 40);
        let r = rec(41);
        assert_eq!(make_windows(&r, &SequencePlan::default(), 0..41).unwrap().len(), 1);
        assert!(matches!(
            make_windows(&r, &SequencePlan::default(), 0..40),
            Err(Error::RangeTooShort { .. })
        ));
    }

    #[test]
    fn multiscale_windows_consume_forty_frames() {
        let r = rec(100);
        let plan = SequencePlan::new(4, 10, 0).unwrap();
        let w = make_windows(&r, &plan, 0..100).unwrap();
        assert_eq!(w.len(), 60);
        for s in w.iter(&r) {
            assert_eq!(s.frames.len(), 40 * FRAME_PIXELS);
            assert_eq!(s.target_index, s.start + 40);
        }
    }

    #[test]
    fn targets_tile_the_tail_of_the_range() {
        let r = rec(90);
        let w = make_windows(&r, &SequencePlan::new(2, 5, 1).unwrap(), 10..90).unwrap();
        let idx: Vec<usize> = (0..w.len()).collect();
        let t = w.batch_targets(&r, &idx, None);
        let expected: Vec<f64> = (10 + 9..90).map(|i| i as f64).collect();
        assert_eq!(t, expected);
    }

    #[test]
    fn last_frame_precedes_target() {
        let r = rec(60);
        let w = make_windows(&r, &SequencePlan::new(1, 10, 0).unwrap(), 0..60).unwrap();
        let s = w.sample(&r, 7);
        assert_eq!(s.frames[s.frames.len() - 1] as usize, s.target_index - 1);
        assert_eq!(s.target[0] as usize, s.target_index);
    }
}
