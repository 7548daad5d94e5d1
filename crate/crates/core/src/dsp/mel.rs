use ndarray::Array2;

use super::{FrameConfig, MelSpectrogram, Stft, Waveform};
use crate::error::Result;

/// Natural-log floor applied to every mel cell (ln 1e-5).
pub const LOG_FLOOR: f64 = -11.5;

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filterbank with unit peaks, shape `n_mels x (fft_size/2+1)`.
pub fn mel_filterbank(cfg: &FrameConfig) -> Array2<f64> {
    let n_bins = cfg.n_bins();
    let lo = hz_to_mel(cfg.fmin);
    let hi = hz_to_mel(cfg.fmax);
    let edges: Vec<f64> = (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64))
        .collect();
    let bin_hz = cfg.bin_hz();
    let mut fb = Array2::zeros((cfg.n_mels, n_bins));
    for m in 0..cfg.n_mels {
        let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
        for k in 0..n_bins {
            let f = k as f64 * bin_hz;
            let w = if f > l && f <= c {
                (f - l) / (c - l)
            } else if f > c && f < r {
                (r - f) / (r - c)
            } else {
                0.0
            };
            fb[[m, k]] = w;
        }
    }
    fb
}

/// Log-mel magnitude spectrogram (T x n_mels).
pub fn stft_mel(wav: &Waveform, cfg: &FrameConfig) -> Result<MelSpectrogram> {
    cfg.validate()?;
    wav.validate()?;
    cfg.check_length(wav)?;
    let fb = mel_filterbank(cfg);
    let stft = Stft::new(cfg.fft_size);
    let mags = stft.magnitudes(&wav.samples, cfg.hop);
    Ok(MelSpectrogram::new(mags_to_log_mel(&mags, &fb), cfg.hop))
}

pub(crate) fn mags_to_log_mel(mags: &[Vec<f64>], fb: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((mags.len(), fb.nrows()));
    for (t, mag) in mags.iter().enumerate() {
        for m in 0..fb.nrows() {
            let row = fb.row(m);
            let e: f64 = row.iter().zip(mag).map(|(w, a)| w * a).sum();
            out[[t, m]] = if e > 0.0 { e.ln().max(LOG_FLOOR) } else { LOG_FLOOR };
        }
    }
    out
}
