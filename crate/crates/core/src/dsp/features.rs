use ndarray::Array2;
use rustfft::num_complex::Complex64;

use super::{FrameConfig, LinguisticFeatures, LoudnessTrack, Stft, Waveform};

pub const LOUDNESS_FLOOR_DB: f64 = -60.0;
pub const N_CEPSTRA: usize = 13;
const SILENT_FRAME_RMS: f64 = 1e-8;
const LOG_MAG_FLOOR: f64 = 1e-5;

/// Frame RMS in dB, floored at -60.
pub fn extract_loudness(wav: &Waveform, cfg: &FrameConfig) -> LoudnessTrack {
    let t = cfg.frames_for(wav.len());
    let values = (0..t)
        .map(|i| {
            let frame = &wav.samples[i * cfg.hop..i * cfg.hop + cfg.fft_size];
            let rms = (frame.iter().map(|x| x * x).sum::<f64>() / frame.len() as f64).sqrt();
            if rms > 0.0 {
                (20.0 * rms.log10()).clamp(LOUDNESS_FLOOR_DB, 0.0)
            } else {
                LOUDNESS_FLOOR_DB
            }
        })
        .collect();
    LoudnessTrack { values }
}

/// Real cepstrum coefficients c1..c13 of each Hann-windowed frame.
/// Silent frames produce zero rows.
pub fn extract_linguistic(wav: &Waveform, cfg: &FrameConfig) -> LinguisticFeatures {
    let t = cfg.frames_for(wav.len());
    let n = cfg.fft_size;
    let stft = Stft::new(n);
    let mut data = Array2::zeros((t, N_CEPSTRA));
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for i in 0..t {
        let frame = &wav.samples[i * cfg.hop..i * cfg.hop + n];
        let rms = (frame.iter().map(|x| x * x).sum::<f64>() / n as f64).sqrt();
        if rms < SILENT_FRAME_RMS {
            continue;
        }
        let spec = stft.spectrum(frame);
        for (b, c) in buf.iter_mut().zip(&spec) {
            *b = Complex64::new(c.norm().max(LOG_MAG_FLOOR).ln(), 0.0);
        }
        stft.ifft_in_place(&mut buf);
        for k in 0..N_CEPSTRA {
            data[[i, k]] = buf[k + 1].re;
        }
    }
    LinguisticFeatures { data }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::SAMPLE_RATE;
    use std::f64::consts::PI;

    #[test]
    fn loudness_reference_levels() {
        let cfg = FrameConfig::default();
        let square = Waveform::new(
            (0..24_000).map(|i| if (i / 50) % 2 == 0 { 1.0 } else { -1.0 }).collect(),
            SAMPLE_RATE,
        );
        assert!(extract_loudness(&square, &cfg).values.iter().all(|v| v.abs() < 1e-9));
        let silent = extract_loudness(&Waveform::silence(24_000, SAMPLE_RATE), &cfg);
        assert!(silent.values.iter().all(|&v| v == LOUDNESS_FLOOR_DB));
        let amp = 10f64.powf(-20.0 / 20.0);
        let sine = Waveform::new(
            (0..24_000)
                .map(|i| amp * (2.0 * PI * 1000.0 * i as f64 / 24_000.0).sin())
                .collect(),
            SAMPLE_RATE,
        );
        // closed form: 20 log10(amp / sqrt 2)
        let expected = 20.0 * (amp / 2f64.sqrt()).log10();
        assert!((expected + 23.0103).abs() < 1e-3);
        for v in extract_loudness(&sine, &cfg).values {
            assert!((v - expected).abs() < 0.1);
        }
    }

    /// Pulse train at `f0` shaped by a two-pole resonance at `formant` Hz.
    fn shaped_pulses(f0: f64, formant: f64) -> Waveform {
        let sr = SAMPLE_RATE as f64;
        let period = sr / f0;
        let mut x = vec![0.0; 24_000];
        let mut pos = 0.0;
        while (pos as usize) < x.len() {
            x[pos as usize] = 1.0;
            pos += period;
        }
        let r: f64 = 0.97;
        let theta = 2.0 * PI * formant / sr;
        let (a1, a2) = (2.0 * r * theta.cos(), -r * r);
        let mut y = vec![0.0; x.len()];
        for i in 0..x.len() {
            let y1 = if i >= 1 { y[i - 1] } else { 0.0 };
            let y2 = if i >= 2 { y[i - 2] } else { 0.0 };
            y[i] = 0.05 * x[i] + a1 * y1 + a2 * y2;
        }
        Waveform::new(y, SAMPLE_RATE)
    }

    fn mean_row_distance(a: &LinguisticFeatures, b: &LinguisticFeatures) -> f64 {
        let t = a.data.nrows().min(b.data.nrows());
        (0..t)
            .map(|i| {
                (a.data.row(i).to_owned() - b.data.row(i))
                    .mapv(|v| v * v)
                    .sum()
                    .sqrt()
            })
            .sum::<f64>()
            / t as f64
    }

    #[test]
    fn envelope_dominates_pitch() {
        let cfg = FrameConfig::default();
        let low = extract_linguistic(&shaped_pulses(200.0, 800.0), &cfg);
        let high = extract_linguistic(&shaped_pulses(400.0, 800.0), &cfg);
        let other = extract_linguistic(&shaped_pulses(200.0, 2500.0), &cfg);
        assert!(mean_row_distance(&low, &high) < mean_row_distance(&low, &other));
    }

    #[test]
    fn deterministic_and_silent() {
        let cfg = FrameConfig::default();
        let w = shaped_pulses(300.0, 1000.0);
        assert_eq!(extract_linguistic(&w, &cfg), extract_linguistic(&w, &cfg));
        let s = extract_linguistic(&Waveform::silence(24_000, SAMPLE_RATE), &cfg);
        assert_eq!(s.data.ncols(), N_CEPSTRA);
        assert!(s.data.iter().all(|&v| v == 0.0));
    }
}
