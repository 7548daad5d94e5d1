use nalgebra::DMatrix;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

use super::{mel_filterbank, FrameConfig, MelSpectrogram, Stft, Waveform, LOG_FLOOR};

pub const DEFAULT_GL_ITERS: usize = 60;
const NNLS_ITERS: usize = 30;
const MOMENTUM: f64 = 0.99;
const PHASE_SEED: u64 = 0x6c_696d;

/// Mel pseudo-inverse plus fast Griffin-Lim phase recovery.
pub struct MelInverter {
    cfg: FrameConfig,
    pinv: Array2<f64>,
    fb: Array2<f64>,
    stft: Stft,
}

impl MelInverter {
    pub fn new(cfg: &FrameConfig) -> Self {
        let fb = mel_filterbank(cfg);
        let m = DMatrix::from_fn(fb.nrows(), fb.ncols(), |i, j| fb[[i, j]]);
        let p = m
            .pseudo_inverse(1e-10)
            .expect("filterbank pseudo-inverse");
        let pinv = Array2::from_shape_fn((p.nrows(), p.ncols()), |(i, j)| p[(i, j)]);
        Self {
            cfg: cfg.clone(),
            pinv,
            fb,
            stft: Stft::new(cfg.fft_size),
        }
    }

    /// Linear magnitudes (T x bins) from log-mel: pseudo-inverse clamped to
    /// be non-negative, then refined by multiplicative non-negative least
    /// squares updates against the mel filterbank.
    pub fn linear_magnitudes(&self, mel: &MelSpectrogram) -> Vec<Vec<f64>> {
        let floor_mag = LOG_FLOOR.exp();
        let target = mel
            .data
            .mapv(|v| if v <= LOG_FLOOR { 0.0 } else { v.exp() - floor_mag });
        // (T x mels) . (mels x bins)
        let mut mag = target.dot(&self.pinv.t()).mapv(|v| v.max(0.0) + 1e-12);
        let numer = target.dot(&self.fb);
        for _ in 0..NNLS_ITERS {
            let denom = mag.dot(&self.fb.t()).dot(&self.fb);
            ndarray::Zip::from(&mut mag)
                .and(&numer)
                .and(&denom)
                .for_each(|m, &n, &d| {
                    *m = if d > 1e-30 { *m * n / d } else { 0.0 };
                });
        }
        mag.outer_iter().map(|r| r.to_vec()).collect()
    }

    pub fn invert(&self, mel: &MelSpectrogram, iters: usize) -> Waveform {
        let sr = self.cfg.sample_rate;
        let hop = self.cfg.hop;
        let mags = self.linear_magnitudes(mel);
        if mags.is_empty() {
            return Waveform::new(Vec::new(), sr);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(PHASE_SEED);
        let mut spec: Vec<Vec<Complex64>> = mags
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&a| Complex64::from_polar(a, rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI)))
                    .collect()
            })
            .collect();
        let silent = self.silent_samples(mel);
        let gate = |mut x: Vec<f64>| {
            for (v, &s) in x.iter_mut().zip(&silent) {
                if s {
                    *v = 0.0;
                }
            }
            x
        };
        let mut prev: Option<Vec<Vec<Complex64>>> = None;
        for _ in 0..iters.max(1) {
            let x = gate(self.stft.synthesize(&spec, hop));
            let rebuilt = self.stft.analyze(&x, hop);
            // fast Griffin-Lim: extrapolate the consistent estimate
            let accel: Vec<Vec<Complex64>> = match &prev {
                Some(p) => rebuilt
                    .iter()
                    .zip(p)
                    .map(|(c, q)| c.iter().zip(q).map(|(a, b)| a + (a - b) * MOMENTUM).collect())
                    .collect(),
                None => rebuilt.clone(),
            };
            prev = Some(rebuilt);
            for ((row, acc), mag) in spec.iter_mut().zip(&accel).zip(&mags) {
                for ((s, a), m) in row.iter_mut().zip(acc).zip(mag) {
                    let n = a.norm();
                    *s = if n > 1e-12 { a * (m / n) } else { Complex64::new(*m, 0.0) };
                }
            }
        }
        let samples = gate(self.stft.synthesize(&spec, hop));
        Waveform::new(samples, sr).clipped()
    }

    /// Samples covered by a frame whose mel is entirely at the floor; such a
    /// frame can only come from silence across its whole support.
    fn silent_samples(&self, mel: &MelSpectrogram) -> Vec<bool> {
        let n = self.cfg.samples_for(mel.frames());
        let mut silent = vec![false; n];
        for (i, row) in mel.data.outer_iter().enumerate() {
            if row.iter().all(|&v| v <= LOG_FLOOR) {
                let start = i * self.cfg.hop;
                silent[start..start + self.cfg.fft_size].fill(true);
            }
        }
        silent
    }
}

pub fn griffin_lim_invert(mel: &MelSpectrogram, cfg: &FrameConfig, iters: usize) -> Waveform {
    MelInverter::new(cfg).invert(mel, iters)
}
