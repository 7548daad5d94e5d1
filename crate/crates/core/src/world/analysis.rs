use std::f64::consts::PI;

use ndarray::Array2;

use super::{WorldFeatures, BAP_BANDS_HZ, ENV_LOG_FLOOR, MCEP_ORDER, WARP_POINTS};
use crate::dsp::{extract_f0, hz_to_mel, mel_to_hz, FrameConfig, Stft, Waveform};

/// Analyzes a waveform into pitch, warped-cepstral envelope and band
/// aperiodicity on the shared frame grid.
pub fn world_analyze(wav: &Waveform, cfg: &FrameConfig) -> WorldFeatures {
    let f0 = extract_f0(wav, cfg);
    let t = f0.len();
    let sr = wav.sample_rate as f64;
    let stft = Stft::new(cfg.fft_size);
    let win_power: f64 = stft.window().iter().map(|w| w * w).sum();
    let bin_hz = sr / cfg.fft_size as f64;
    let warp = WarpAxis::new(sr, cfg.fft_size);

    let mut mcep = Array2::zeros((t, MCEP_ORDER + 1));
    let mut bap = Array2::from_elem((t, BAP_BANDS_HZ.len()), 1.0);
    for i in 0..t {
        let frame = &wav.samples[i * cfg.hop..i * cfg.hop + cfg.fft_size];
        let spec = stft.spectrum(frame);
        let power: Vec<f64> = spec[..cfg.n_bins()].iter().map(|c| c.norm_sqr()).collect();
        let f0_i = f0.values[i];
        let width_hz = if f0_i > 0.0 { f0_i } else { UNVOICED_SMOOTH_HZ };
        let smooth = smooth_spectrum(&power, width_hz / bin_hz);
        let log_env: Vec<f64> = smooth
            .iter()
            .map(|&p| {
                let psd = 2.0 * p / (sr * win_power);
                if psd > 0.0 {
                    psd.ln().max(ENV_LOG_FLOOR)
                } else {
                    ENV_LOG_FLOOR
                }
            })
            .collect();
        let coeffs = warp.to_cepstrum(&log_env);
        for (k, c) in coeffs.iter().enumerate() {
            mcep[[i, k]] = *c;
        }
        if f0_i > 0.0 {
            for (b, &(lo, hi)) in BAP_BANDS_HZ.iter().enumerate() {
                if let Some(split) = harmonic_noise_split(&power, bin_hz, f0_i, lo, hi) {
                    bap[[i, b]] = split.aperiodicity();
                }
            }
        }
    }
    let bap = settle_transitions(&f0.values, &bap);
    WorldFeatures { f0, mcep, bap }
}

/// Frames this close to a note change share an analysis window with the
/// other note, whose harmonics land in the valleys and read as noise.
const TRANSITION_REACH: usize = 2;
const TRANSITION_CENTS: f64 = 100.0;

/// Aperiodicity of frames near a note change: the least noisy estimate among
/// the voiced frames within reach.
fn settle_transitions(f0: &[f64], raw: &Array2<f64>) -> Array2<f64> {
    let mut out = raw.clone();
    for i in 0..f0.len() {
        if f0[i] <= 0.0 {
            continue;
        }
        let lo = i.saturating_sub(TRANSITION_REACH);
        let hi = (i + TRANSITION_REACH + 1).min(f0.len());
        let near: Vec<usize> = (lo..hi).filter(|&j| f0[j] > 0.0).collect();
        let changing = near.iter().any(|&j| (1200.0 * (f0[j] / f0[i]).log2()).abs() > TRANSITION_CENTS);
        if changing {
            for b in 0..raw.ncols() {
                out[[i, b]] = near.iter().map(|&j| raw[[j, b]]).fold(f64::INFINITY, f64::min);
            }
        }
    }
    out
}

const UNVOICED_SMOOTH_HZ: f64 = 300.0;

/// Boxcar smoothing with a fractional width (in bins), computed from the
/// linearly interpolated cumulative sum of a mirror-extended spectrum.
pub(crate) fn smooth_spectrum(power: &[f64], width_bins: f64) -> Vec<f64> {
    let n = power.len();
    let width = width_bins.max(1.0);
    let pad = width.ceil() as usize + 2;
    // mirror around DC and Nyquist
    let ext: Vec<f64> = (0..n + 2 * pad)
        .map(|j| {
            let k = j as isize - pad as isize;
            let idx = if k < 0 {
                (-k) as usize
            } else if k as usize >= n {
                2 * (n - 1) - k as usize
            } else {
                k as usize
            };
            power[idx.min(n - 1)]
        })
        .collect();
    // cumulative integral where bin j covers [j - 0.5, j + 0.5)
    let mut cum = vec![0.0; ext.len() + 1];
    for j in 0..ext.len() {
        cum[j + 1] = cum[j] + ext[j];
    }
    let integral = |x: f64| -> f64 {
        // x in extended-bin coordinates, edge of bin j is at j - 0.5
        let u = (x + 0.5).clamp(0.0, ext.len() as f64);
        let j = (u.floor() as usize).min(ext.len() - 1);
        cum[j] + (u - j as f64) * ext[j]
    };
    (0..n)
        .map(|k| {
            let c = (k + pad) as f64;
            (integral(c + width / 2.0) - integral(c - width / 2.0)) / width
        })
        .collect()
}

/// Harmonic-versus-valley energy split of one power spectrum.
#[derive(Debug, Clone, Copy)]
pub(crate) struct HarmonicSplit {
    pub valley_density: f64,
    pub harmonic_density: f64,
    pub total_power: f64,
    pub n_bins: usize,
}

impl HarmonicSplit {
    /// Fraction of band power attributable to the noise floor.
    pub fn aperiodicity(&self) -> f64 {
        if self.total_power <= 0.0 {
            return 1.0;
        }
        (self.valley_density * self.n_bins as f64 / self.total_power).clamp(0.0, 1.0)
    }
}

const HARMONIC_REGION: f64 = 0.25;
const VALLEY_REGION: f64 = 0.35;

/// Classifies the bins of `[lo_hz, hi_hz)` by their distance to the nearest
/// harmonic of `f0` (in units of f0): below 0.25 is harmonic, above 0.35 is
/// valley.
pub(crate) fn harmonic_noise_split(
    power: &[f64],
    bin_hz: f64,
    f0: f64,
    lo_hz: f64,
    hi_hz: f64,
) -> Option<HarmonicSplit> {
    let (mut hs, mut hn, mut vs, mut vn, mut total, mut n) = (0.0, 0usize, 0.0, 0usize, 0.0, 0usize);
    let first = ((lo_hz.max(f0 * 0.5)) / bin_hz).ceil() as usize;
    let last = ((hi_hz / bin_hz).floor() as usize).min(power.len().saturating_sub(1));
    for (k, &p) in power.iter().enumerate().take(last + 1).skip(first) {
        let ratio = k as f64 * bin_hz / f0;
        let d = (ratio - ratio.round()).abs();
        total += p;
        n += 1;
        if d < HARMONIC_REGION {
            hs += p;
            hn += 1;
        } else if d > VALLEY_REGION {
            vs += p;
            vn += 1;
        }
    }
    if hn == 0 || vn == 0 {
        return None;
    }
    Some(HarmonicSplit {
        valley_density: vs / vn as f64,
        harmonic_density: hs / hn as f64,
        total_power: total,
        n_bins: n,
    })
}

/// Maps linear-frequency log envelopes to and from a truncated cosine
/// expansion over a mel-warped frequency axis.
pub(crate) struct WarpAxis {
    /// fractional linear bin index of each warped point
    positions: Vec<f64>,
    /// warped coordinate (in points) of each linear bin
    inverse: Vec<f64>,
}

impl WarpAxis {
    pub fn new(sr: f64, fft_size: usize) -> Self {
        let nyq = sr / 2.0;
        let top = hz_to_mel(nyq);
        let bin_hz = sr / fft_size as f64;
        let positions = (0..WARP_POINTS)
            .map(|m| {
                let mel = top * (m as f64 + 0.5) / WARP_POINTS as f64;
                mel_to_hz(mel) / bin_hz
            })
            .collect();
        let inverse = (0..fft_size / 2 + 1)
            .map(|k| hz_to_mel(k as f64 * bin_hz) / top * WARP_POINTS as f64 - 0.5)
            .collect();
        Self { positions, inverse }
    }

    pub fn to_cepstrum(&self, log_env: &[f64]) -> Vec<f64> {
        let m = WARP_POINTS;
        let warped: Vec<f64> = self.positions.iter().map(|&p| interp(log_env, p)).collect();
        (0..=MCEP_ORDER)
            .map(|k| {
                warped
                    .iter()
                    .enumerate()
                    .map(|(j, v)| v * (PI * k as f64 * (j as f64 + 0.5) / m as f64).cos())
                    .sum::<f64>()
                    / m as f64
            })
            .collect()
    }

    pub fn to_log_envelope(&self, coeffs: &[f64]) -> Vec<f64> {
        let m = WARP_POINTS;
        let warped: Vec<f64> = (0..m)
            .map(|j| {
                coeffs[0]
                    + 2.0
                        * coeffs
                            .iter()
                            .enumerate()
                            .skip(1)
                            .map(|(k, c)| c * (PI * k as f64 * (j as f64 + 0.5) / m as f64).cos())
                            .sum::<f64>()
            })
            .collect();
        self.inverse.iter().map(|&p| interp(&warped, p)).collect()
    }
}

fn interp(v: &[f64], pos: f64) -> f64 {
    let p = pos.clamp(0.0, (v.len() - 1) as f64);
    let i = (p.floor() as usize).min(v.len() - 2);
    let frac = p - i as f64;
    v[i] * (1.0 - frac) + v[i + 1] * frac
}
