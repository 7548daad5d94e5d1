use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};

/// Zeroed frame interval `[start, end)` inside a sequence of `length` frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mask {
    pub length: usize,
    pub start: usize,
    pub end: usize,
}

impl Mask {
    pub fn new(length: usize, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > length {
            return Err(Error::invalid(format!(
                "mask span [{start}, {end}) invalid for {length} frames"
            )));
        }
        Ok(Self { length, start, end })
    }

    pub fn span_len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_masked(&self, frame: usize) -> bool {
        (self.start..self.end).contains(&frame)
    }

    /// Frames outside the span, in order.
    pub fn complement(&self) -> Vec<usize> {
        (0..self.length).filter(|&f| !self.is_masked(f)).collect()
    }

    /// Copy of a `T x D` matrix with the span rows zeroed (the visible part).
    pub fn hide(&self, m: &Array2<f64>) -> Array2<f64> {
        let mut out = m.clone();
        for f in self.start..self.end {
            out.row_mut(f).fill(0.0);
        }
        out
    }

    /// Copy of a `T x D` matrix with everything outside the span zeroed.
    pub fn keep_span(&self, m: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros(m.raw_dim());
        for f in self.start..self.end {
            out.row_mut(f).assign(&m.row(f));
        }
        out
    }
}

/// Span length uniform in `[0.5T, 0.9T]`, start uniform over valid offsets.
pub fn sample_mask(frames: usize, rng: &mut impl Rng) -> Result<Mask> {
    if frames < 4 {
        return Err(Error::TooShort { len: frames, need: 4 });
    }
    let frac: f64 = rng.gen_range(0.5..=0.9);
    let len = ((frac * frames as f64).round() as usize).clamp(1, frames - 1);
    let start = rng.gen_range(0..=frames - len);
    Mask::new(frames, start, start + len)
}
