use crate::dsp::{
    extract_f0, extract_linguistic, extract_loudness, midi_quantize, stft_mel, F0Track, FrameConfig,
    MelSpectrogram, Waveform, N_CEPSTRA,
};
use crate::error::{Error, Result};
use crate::flow::CondTracks;
use crate::formats::{read_srnf, write_srnf};
use ndarray::{s, Array2};
use std::path::Path;

// Columns after the mel bands: cepstra, MIDI note, loudness, F0.
const TRACK_COLUMNS: usize = N_CEPSTRA + 3;

/// Frame-aligned analysis of one waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipFeatures {
    pub mel: MelSpectrogram,
    pub tracks: CondTracks,
    pub f0: F0Track,
}

impl ClipFeatures {
    pub fn frames(&self) -> usize {
        self.mel.frames()
    }

    /// One row per frame: `[mel | cepstra | midi | loudness dB | f0 Hz]`.
    pub fn to_matrix(&self) -> Array2<f64> {
        let (t, d) = (self.frames(), self.mel.n_mels());
        let mut m = Array2::zeros((t, d + TRACK_COLUMNS));
        m.slice_mut(s![.., ..d]).assign(&self.mel.data);
        m.slice_mut(s![.., d..d + N_CEPSTRA]).assign(&self.tracks.linguistic);
        for i in 0..t {
            m[[i, d + N_CEPSTRA]] = self.tracks.midi[i] as f64;
            m[[i, d + N_CEPSTRA + 1]] = self.tracks.loudness[i];
            m[[i, d + N_CEPSTRA + 2]] = self.f0.values[i];
        }
        m
    }

    pub fn from_matrix(m: &Array2<f64>, hop: usize) -> Result<Self> {
        if m.ncols() <= TRACK_COLUMNS {
            return Err(Error::ShapeMismatch {
                expected: format!("more than {TRACK_COLUMNS} feature columns"),
                got: m.ncols().to_string(),
            });
        }
        let d = m.ncols() - TRACK_COLUMNS;
        let col = |k: usize| m.column(d + k).to_vec();
        let midi = col(N_CEPSTRA)
            .into_iter()
            .map(|v| if (0.0..=127.0).contains(&v) && v.fract() == 0.0 { Ok(v as u8) } else { Err(Error::invalid(format!("bad MIDI value {v}"))) })
            .collect::<Result<Vec<u8>>>()?;
        let tracks = CondTracks::new(m.slice(s![.., d..d + N_CEPSTRA]).to_owned(), midi, col(N_CEPSTRA + 1))?;
        Ok(Self {
            mel: MelSpectrogram::new(m.slice(s![.., ..d]).to_owned(), hop),
            tracks,
            f0: F0Track::new(col(N_CEPSTRA + 2)),
        })
    }

    /// Stored as one SRNF matrix (values rounded to f32).
    pub fn save(&self, path: &Path) -> Result<()> {
        write_srnf(path, &self.to_matrix())
    }

    pub fn load(path: &Path, hop: usize) -> Result<Self> {
        Self::from_matrix(&read_srnf(path)?, hop)
    }
}

/// Log-mel plus the unmasked conditioning tracks (cepstra, MIDI, loudness).
pub fn extract_features(wav: &Waveform, cfg: &FrameConfig) -> Result<ClipFeatures> {
    wav.validate()?;
    let mel = stft_mel(wav, cfg)?;
    let f0 = extract_f0(wav, cfg);
    let midi = midi_quantize(&f0, cfg);
    let loud = extract_loudness(wav, cfg);
    let ling = extract_linguistic(wav, cfg);
    let tracks = CondTracks::new(ling.data, midi.notes, loud.values)?;
    Ok(ClipFeatures { mel, tracks, f0 })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Provenance {
    Natural,
    /// Conditioning taken from `source` converted with the style of `reference`.
    Cyclic { source: String, reference: String },
}

/// A target mel with its conditioning tracks.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingItem {
    pub id: String,
    pub mel: MelSpectrogram,
    pub tracks: CondTracks,
    pub style_label: String,
    pub provenance: Provenance,
}

impl TrainingItem {
    pub fn natural(id: impl Into<String>, style_label: impl Into<String>, feat: &ClipFeatures) -> Self {
        Self {
            id: id.into(),
            mel: feat.mel.clone(),
            tracks: feat.tracks.clone(),
            style_label: style_label.into(),
            provenance: Provenance::Natural,
        }
    }

    pub fn frames(&self) -> usize {
        self.mel.frames()
    }

    pub fn validate(&self) -> Result<()> {
        self.tracks.validate()?;
        if self.tracks.frames() != self.mel.frames() {
            return Err(Error::FrameMismatch { a: self.mel.frames(), b: self.tracks.frames() });
        }
        Ok(())
    }
}
