use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::dsp::wav::resample;
use crate::dsp::{extract_f0, FrameConfig, Stft, Waveform, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::world::harmonic_noise_split;

const ANALYSIS_WINDOW: usize = 2048;
const NHR_BAND_HZ: (f64, f64) = (100.0, 8000.0);
const VIBRATO_BAND_HZ: (f64, f64) = (4.0, 8.0);
const CONTOUR_MEDIAN: usize = 33;
const TILT_BAND_HZ: (f64, f64) = (200.0, 8000.0);
/// NHR skips frames whose neighbors move by more than this: a window holding
/// two notes has no clean harmonic valleys.
const STEADY_CENTS: f64 = 50.0;

/// Objective style measurements of one recording.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StyleMetrics {
    /// Noise-to-harmonic amplitude ratio; 1.0 when nothing is voiced.
    pub nhr: f64,
    /// Peak F0 excursion in the 4-8 Hz band, in cents.
    pub vibrato_depth_cents: f64,
    /// Slope of the harmonic peaks in dB per octave.
    pub tilt_db_per_oct: f64,
}

/// Measures breathiness, vibrato depth and spectral tilt.
pub fn style_proxy_metrics(wav: &Waveform) -> Result<StyleMetrics> {
    let wav = if wav.sample_rate == SAMPLE_RATE { wav.clone() } else { resample(wav, SAMPLE_RATE) };
    let need = SAMPLE_RATE as usize / 2;
    if wav.len() < need {
        return Err(Error::TooShort { len: wav.len(), need });
    }
    wav.validate()?;
    let cfg = FrameConfig::default();
    let f0 = extract_f0(&wav, &cfg);

    let stft = Stft::new(ANALYSIS_WINDOW);
    let bin_hz = cfg.sample_rate as f64 / ANALYSIS_WINDOW as f64;
    let half = ANALYSIS_WINDOW / 2;
    let (mut valley, mut harmonic) = (0.0, 0.0);
    let mut tilt = TiltAccumulator::default();
    for (i, &f) in f0.values.iter().enumerate() {
        let c = cfg.frame_center(i);
        if f <= 0.0 || c < half || c + half > wav.len() {
            continue;
        }
        let spec = stft.spectrum(&wav.samples[c - half..c + half]);
        let power: Vec<f64> = spec[..=half].iter().map(|z| z.norm_sqr()).collect();
        tilt.add_frame(&power, bin_hz, f);
        let steady = |j: Option<usize>| {
            j.and_then(|j| f0.values.get(j)).is_some_and(|&g| g > 0.0 && (1200.0 * (g / f).log2()).abs() < STEADY_CENTS)
        };
        if !(steady(i.checked_sub(1)) && steady(Some(i + 1))) {
            continue;
        }
        if let Some(split) = harmonic_noise_split(&power, bin_hz, f, NHR_BAND_HZ.0, NHR_BAND_HZ.1) {
            valley += split.valley_density;
            harmonic += split.harmonic_density;
        }
    }
    let nhr = if harmonic > 0.0 { (valley / harmonic).sqrt() } else { 1.0 };
    Ok(StyleMetrics {
        nhr,
        vibrato_depth_cents: vibrato_depth(&f0.values, cfg.sample_rate as f64 / cfg.hop as f64),
        tilt_db_per_oct: tilt.slope(),
    })
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Depth of the vibrato-band component of each long voiced run, weighted
/// by run length. Note steps are removed with a running median first.
fn vibrato_depth(f0: &[f64], frame_rate: f64) -> f64 {
    let mut runs = Vec::new();
    let mut start = None;
    for i in 0..=f0.len() {
        let voiced = i < f0.len() && f0[i] > 0.0;
        match (voiced, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                if i - s >= CONTOUR_MEDIAN {
                    runs.push(s..i);
                }
                start = None;
            }
            _ => {}
        }
    }
    let (mut weighted, mut frames) = (0.0, 0usize);
    let mut planner = FftPlanner::new();
    for run in runs {
        let cents: Vec<f64> = f0[run.clone()].iter().map(|f| 1200.0 * f.log2()).collect();
        let n = cents.len();
        let h = CONTOUR_MEDIAN / 2;
        let resid: Vec<f64> = (0..n)
            .map(|i| {
                let mut w = cents[i.saturating_sub(h)..(i + h + 1).min(n)].to_vec();
                cents[i] - median(&mut w)
            })
            .collect();
        let mean = resid.iter().sum::<f64>() / n as f64;
        let size = (4 * n).next_power_of_two();
        let mut buf: Vec<Complex64> = (0..size)
            .map(|i| Complex64::new(if i < n { resid[i] - mean } else { 0.0 }, 0.0))
            .collect();
        planner.plan_fft_forward(size).process(&mut buf);
        for (k, z) in buf.iter_mut().enumerate() {
            let bin = k.min(size - k);
            let hz = bin as f64 * frame_rate / size as f64;
            if !(VIBRATO_BAND_HZ.0..=VIBRATO_BAND_HZ.1).contains(&hz) {
                *z = Complex64::new(0.0, 0.0);
            }
        }
        planner.plan_fft_inverse(size).process(&mut buf);
        let rms = (buf[..n].iter().map(|z| (z.re / size as f64).powi(2)).sum::<f64>() / n as f64).sqrt();
        weighted += rms * std::f64::consts::SQRT_2 * n as f64;
        frames += n;
    }
    if frames == 0 {
        0.0
    } else {
        weighted / frames as f64
    }
}

/// Pooled within-frame regression of harmonic peak levels (dB) on
/// log2 frequency.
#[derive(Default)]
struct TiltAccumulator {
    sxy: f64,
    sxx: f64,
}

impl TiltAccumulator {
    fn add_frame(&mut self, power: &[f64], bin_hz: f64, f0: f64) {
        let mut pts = Vec::new();
        let mut k = 1.0;
        while k * f0 < TILT_BAND_HZ.1 {
            let f = k * f0;
            k += 1.0;
            if f < TILT_BAND_HZ.0 {
                continue;
            }
            let lo = ((f - 0.25 * f0) / bin_hz).ceil() as usize;
            let hi = (((f + 0.25 * f0) / bin_hz).floor() as usize).min(power.len() - 1);
            let peak = power[lo..=hi].iter().copied().fold(0.0, f64::max);
            if peak > 0.0 {
                pts.push((f.log2(), 10.0 * peak.log10()));
            }
        }
        if pts.len() < 2 {
            return;
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        for (x, y) in pts {
            self.sxy += (x - mx) * (y - my);
            self.sxx += (x - mx) * (x - mx);
        }
    }

    fn slope(&self) -> f64 {
        if self.sxx > 0.0 {
            self.sxy / self.sxx
        } else {
            0.0
        }
    }
}
