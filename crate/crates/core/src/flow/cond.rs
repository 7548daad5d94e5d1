use ndarray::{s, Array1, Array2, Axis};

use crate::dsp::N_CEPSTRA;
use crate::error::{Error, Result};

/// Unmasked conditioning tracks: cepstral proxy, MIDI notes and loudness.
#[derive(Debug, Clone, PartialEq)]
pub struct CondTracks {
    /// `T x 13`.
    pub linguistic: Array2<f64>,
    pub midi: Vec<u8>,
    /// Loudness in dB.
    pub loudness: Vec<f64>,
}

impl CondTracks {
    pub fn new(linguistic: Array2<f64>, midi: Vec<u8>, loudness: Vec<f64>) -> Result<Self> {
        let c = Self { linguistic, midi, loudness };
        c.validate()?;
        Ok(c)
    }

    pub fn frames(&self) -> usize {
        self.midi.len()
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.midi.len();
        if self.linguistic.ncols() != N_CEPSTRA {
            return Err(Error::ShapeMismatch {
                expected: format!("{N_CEPSTRA} linguistic columns"),
                got: self.linguistic.ncols().to_string(),
            });
        }
        for other in [self.linguistic.nrows(), self.loudness.len()] {
            if other != t {
                return Err(Error::FrameMismatch { a: t, b: other });
            }
        }
        if self.midi.iter().any(|&n| n > 127) {
            return Err(Error::invalid("MIDI note above 127"));
        }
        Ok(())
    }

    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self {
            linguistic: self.linguistic.slice(s![start..end, ..]).to_owned(),
            midi: self.midi[start..end].to_vec(),
            loudness: self.loudness[start..end].to_vec(),
        }
    }

    /// Time concatenation `self || other`.
    pub fn concat(&self, other: &Self) -> Self {
        let linguistic = ndarray::concatenate(Axis(0), &[self.linguistic.view(), other.linguistic.view()])
            .expect("same column count");
        let mut midi = self.midi.clone();
        midi.extend_from_slice(&other.midi);
        let mut loudness = self.loudness.clone();
        loudness.extend_from_slice(&other.loudness);
        Self { linguistic, midi, loudness }
    }

    /// Loudness mapped from roughly [-60, 0] dB to [-1, 1].
    pub(crate) fn loudness_channel(&self) -> Array1<f64> {
        self.loudness.iter().map(|db| (db + 30.0) / 30.0).collect()
    }
}

/// Everything the vector-field network sees besides the flow sample.
/// Mel-valued matrices are `T x D` in normalized model space.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditioningBundle {
    pub tracks: CondTracks,
    /// Visible mel with the mask span set to zero.
    pub masked_mel: Array2<f64>,
    pub prior: Array2<f64>,
    pub style: Array1<f64>,
}

impl ConditioningBundle {
    pub fn frames(&self) -> usize {
        self.tracks.frames()
    }

    pub fn validate(&self, n_mels: usize, style_dim: usize) -> Result<()> {
        self.tracks.validate()?;
        let t = self.frames();
        for m in [&self.masked_mel, &self.prior] {
            if m.nrows() != t {
                return Err(Error::FrameMismatch { a: t, b: m.nrows() });
            }
            if m.ncols() != n_mels {
                return Err(Error::ShapeMismatch {
                    expected: format!("{n_mels} mel channels"),
                    got: m.ncols().to_string(),
                });
            }
        }
        if self.style.len() != style_dim {
            return Err(Error::ShapeMismatch {
                expected: format!("style of length {style_dim}"),
                got: self.style.len().to_string(),
            });
        }
        Ok(())
    }
}
