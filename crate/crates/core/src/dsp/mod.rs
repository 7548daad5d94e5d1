//! Deterministic signal analysis: framing, log-mel spectrogram, YIN pitch,
//! MIDI quantization, loudness, cepstral linguistic proxy and Griffin-Lim
//! mel inversion.
//!
//! Every analysis emits the same number of frames for a given
//! [`FrameConfig`]: frame `i` covers samples `[i*hop, i*hop + fft_size)`, so a
//! waveform of `n` samples yields `(n - fft_size) / hop + 1` frames.

mod features;
mod frames;
mod griffin_lim;
mod mel;
mod pitch;
pub mod wav;

use ndarray::Array2;

use crate::error::{Error, Result};

pub use features::{extract_linguistic, extract_loudness, LOUDNESS_FLOOR_DB, N_CEPSTRA};
pub use frames::{frame_count, hann_window, FrameConfig, Stft};
pub(crate) use frames::fill_hermitian;
pub use griffin_lim::{griffin_lim_invert, MelInverter, DEFAULT_GL_ITERS};
pub use mel::{hz_to_mel, mel_filterbank, mel_to_hz, stft_mel, LOG_FLOOR};
pub use pitch::{
    extract_f0, hz_to_midi, midi_quantize, midi_to_hz, F0_MAX_HZ, F0_MIN_HZ, VOICING_THRESHOLD,
};
pub(crate) use pitch::Yin;

/// Sample rate of all pipeline audio.
pub const SAMPLE_RATE: u32 = 24_000;

/// Mono audio.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn silence(len: usize, sample_rate: u32) -> Self {
        Self::new(vec![0.0; len], sample_rate)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        (self.samples.iter().map(|x| x * x).sum::<f64>() / self.samples.len() as f64).sqrt()
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self::new(
            self.samples.iter().map(|x| x * gain).collect(),
            self.sample_rate,
        )
    }

    /// Checks that all samples are finite.
    pub fn validate(&self) -> Result<()> {
        match self.samples.iter().position(|x| !x.is_finite()) {
            Some(i) => Err(Error::NonFinite(i)),
            None => Ok(()),
        }
    }

    /// Clamps samples into `[-1, 1]`.
    pub fn clipped(mut self) -> Self {
        for x in &mut self.samples {
            *x = x.clamp(-1.0, 1.0);
        }
        self
    }
}

/// T x D matrix of natural-log mel magnitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub data: Array2<f64>,
    pub hop: usize,
}

impl MelSpectrogram {
    pub fn new(data: Array2<f64>, hop: usize) -> Self {
        Self { data, hop }
    }

    pub fn frames(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_mels(&self) -> usize {
        self.data.ncols()
    }

    /// Frames `[start, end)`.
    pub fn slice_frames(&self, start: usize, end: usize) -> Self {
        Self::new(
            self.data.slice(ndarray::s![start..end, ..]).to_owned(),
            self.hop,
        )
    }
}

/// Per-frame fundamental frequency in Hz; `0.0` marks an unvoiced frame.
#[derive(Debug, Clone, PartialEq)]
pub struct F0Track {
    pub values: Vec<f64>,
}

impl F0Track {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_voiced(&self, i: usize) -> bool {
        self.values[i] > 0.0
    }

    pub fn voiced_count(&self) -> usize {
        self.values.iter().filter(|&&f| f > 0.0).count()
    }

    pub fn voiced_fraction(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.voiced_count() as f64 / self.values.len() as f64
    }

    /// Median over voiced frames, if any.
    pub fn median_voiced(&self) -> Option<f64> {
        let mut v: Vec<f64> = self.values.iter().copied().filter(|&f| f > 0.0).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let n = v.len();
        Some(if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        })
    }

    pub fn truncated(&self, frames: usize) -> Self {
        Self::new(self.values[..frames.min(self.values.len())].to_vec())
    }
}

/// Per-frame MIDI note numbers; `0` is a rest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MidiTrack {
    pub notes: Vec<u8>,
}

impl MidiTrack {
    /// Note sequence with repeats collapsed and rests dropped.
    pub fn note_sequence(&self) -> Vec<u8> {
        let mut out: Vec<u8> = Vec::new();
        let mut prev = 0u8;
        for &n in &self.notes {
            if n != 0 && n != prev {
                out.push(n);
            }
            prev = n;
        }
        out
    }
}

/// Per-frame RMS level in dB, floored at -60.
#[derive(Debug, Clone, PartialEq)]
pub struct LoudnessTrack {
    pub values: Vec<f64>,
}

/// T x L matrix of cepstral coefficients c1..cL.
#[derive(Debug, Clone, PartialEq)]
pub struct LinguisticFeatures {
    pub data: Array2<f64>,
}
