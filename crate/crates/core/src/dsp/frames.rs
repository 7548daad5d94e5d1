use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{Waveform, SAMPLE_RATE};
use crate::error::{Error, Result};

/// Framing and mel-axis parameters shared by every frame-level analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameConfig {
    pub sample_rate: u32,
    pub fft_size: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self {
            sample_rate: SAMPLE_RATE,
            fft_size: 1024,
            hop: 256,
            n_mels: 80,
            fmin: 0.0,
            fmax: 12_000.0,
        }
    }
}

impl FrameConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hop == 0 || self.hop > self.fft_size {
            return Err(Error::invalid(format!(
                "hop {} must be in 1..={}",
                self.hop, self.fft_size
            )));
        }
        if self.n_mels == 0 {
            return Err(Error::invalid("n_mels must be at least 1"));
        }
        if self.fmax > self.sample_rate as f64 / 2.0 || self.fmin < 0.0 || self.fmin >= self.fmax {
            return Err(Error::invalid(format!(
                "mel range {}..{} Hz invalid for {} Hz audio",
                self.fmin, self.fmax, self.sample_rate
            )));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn bin_hz(&self) -> f64 {
        self.sample_rate as f64 / self.fft_size as f64
    }

    /// Number of frames for a waveform of `len` samples.
    pub fn frames_for(&self, len: usize) -> usize {
        frame_count(len, self.fft_size, self.hop)
    }

    /// Waveform length whose analysis yields exactly `frames` frames.
    pub fn samples_for(&self, frames: usize) -> usize {
        if frames == 0 {
            0
        } else {
            (frames - 1) * self.hop + self.fft_size
        }
    }

    /// Sample index at the center of frame `i`.
    pub fn frame_center(&self, i: usize) -> usize {
        i * self.hop + self.fft_size / 2
    }

    /// Minimum waveform length accepted by [`crate::dsp::stft_mel`].
    pub(crate) fn check_length(&self, wav: &Waveform) -> Result<()> {
        if wav.len() < self.fft_size {
            return Err(Error::TooShort {
                len: wav.len(),
                need: self.fft_size,
            });
        }
        Ok(())
    }
}

pub fn frame_count(len: usize, fft_size: usize, hop: usize) -> usize {
    if len < fft_size {
        0
    } else {
        (len - fft_size) / hop + 1
    }
}

/// Periodic Hann window.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Reads `len` samples starting at `start` (possibly negative or past the
/// end), reflecting around the signal edges.
pub(crate) fn reflect_segment(samples: &[f64], start: isize, len: usize) -> Vec<f64> {
    let n = samples.len() as isize;
    if n == 0 {
        return vec![0.0; len];
    }
    (0..len as isize)
        .map(|k| {
            let mut i = start + k;
            if n == 1 {
                return samples[0];
            }
            let period = 2 * (n - 1);
            i = i.rem_euclid(period);
            if i >= n {
                i = period - i;
            }
            samples[i as usize]
        })
        .collect()
}

/// Windowed short-time Fourier transform on the shared frame grid.
#[derive(Clone)]
pub struct Stft {
    size: usize,
    window: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Stft {
    pub fn new(size: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            size,
            window: hann_window(size),
            forward: planner.plan_fft_forward(size),
            inverse: planner.plan_fft_inverse(size),
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    /// Full complex spectrum of one windowed frame.
    pub fn spectrum(&self, frame: &[f64]) -> Vec<Complex64> {
        debug_assert_eq!(frame.len(), self.size);
        let mut buf: Vec<Complex64> = frame
            .iter()
            .zip(&self.window)
            .map(|(x, w)| Complex64::new(x * w, 0.0))
            .collect();
        self.forward.process(&mut buf);
        buf
    }

    /// Unwindowed FFT of a full-size buffer, in place.
    pub fn fft_in_place(&self, buf: &mut [Complex64]) {
        self.forward.process(buf);
    }

    /// Inverse FFT scaled by `1/size`, in place.
    pub fn ifft_in_place(&self, buf: &mut [Complex64]) {
        self.inverse.process(buf);
        let s = 1.0 / self.size as f64;
        for c in buf.iter_mut() {
            *c *= s;
        }
    }

    /// One-sided magnitude spectra for every frame of `samples`.
    pub fn magnitudes(&self, samples: &[f64], hop: usize) -> Vec<Vec<f64>> {
        let t = frame_count(samples.len(), self.size, hop);
        (0..t)
            .map(|i| {
                let start = i * hop;
                let spec = self.spectrum(&samples[start..start + self.size]);
                spec[..self.size / 2 + 1].iter().map(|c| c.norm()).collect()
            })
            .collect()
    }

    /// Complex one-sided spectra for every frame.
    pub fn analyze(&self, samples: &[f64], hop: usize) -> Vec<Vec<Complex64>> {
        let t = frame_count(samples.len(), self.size, hop);
        (0..t)
            .map(|i| {
                let start = i * hop;
                let mut spec = self.spectrum(&samples[start..start + self.size]);
                spec.truncate(self.size / 2 + 1);
                spec
            })
            .collect()
    }

    /// Weighted overlap-add inverse of one-sided spectra, normalized by the
    /// summed squared window.
    pub fn synthesize(&self, frames: &[Vec<Complex64>], hop: usize) -> Vec<f64> {
        if frames.is_empty() {
            return Vec::new();
        }
        let n = self.size;
        let len = (frames.len() - 1) * hop + n;
        let mut out = vec![0.0; len];
        let mut norm = vec![0.0; len];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for (i, half) in frames.iter().enumerate() {
            fill_hermitian(half, &mut buf);
            self.ifft_in_place(&mut buf);
            let start = i * hop;
            for k in 0..n {
                let w = self.window[k];
                out[start + k] += buf[k].re * w;
                norm[start + k] += w * w;
            }
        }
        for (o, w) in out.iter_mut().zip(&norm) {
            if *w > 1e-3 {
                *o /= w;
            } else {
                *o = 0.0;
            }
        }
        out
    }
}

/// Expands a one-sided spectrum of `n/2+1` bins into a full Hermitian buffer.
pub(crate) fn fill_hermitian(half: &[Complex64], buf: &mut [Complex64]) {
    let n = buf.len();
    let nb = n / 2 + 1;
    debug_assert_eq!(half.len(), nb);
    buf[..nb].copy_from_slice(half);
    buf[0].im = 0.0;
    if n.is_multiple_of(2) {
        buf[n / 2].im = 0.0;
    }
    for k in nb..n {
        buf[k] = half[n - k].conj();
    }
}
