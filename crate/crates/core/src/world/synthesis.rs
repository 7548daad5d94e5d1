use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use super::analysis::WarpAxis;
use super::{WorldFeatures, BAP_BANDS_HZ, ENV_LOG_FLOOR};
use crate::dsp::{fill_hermitian, FrameConfig, Stft, Waveform, Yin, F0_MAX_HZ, F0_MIN_HZ};

const NOISE_SEED: u64 = 0x5_eed0_f401;
/// Envelope power up to this many nepers above the analysis floor renders as
/// silence, so cepstral ripple around the floor stays silent too.
const FLOOR_MARGIN: f64 = 2.0;

const PITCH_PASSES: usize = 8;
const PITCH_TOLERANCE_CENTS: f64 = 1.0;
/// Frames already this close to the requested pitch are left alone.
const SETTLED_CENTS: f64 = 0.25;
/// Score charged for a requested voiced frame that re-analyzes as unvoiced.
const VOICING_PENALTY_CENTS: f64 = 100.0;
/// A frame lying between neighbors that each differ from it by more than this
/// is a note-change candidate.
const TRANSITION_CENTS: f64 = 100.0;
/// A note-change frame must differ from both neighbors by at least this much.
const MIN_STEP_CENTS: f64 = 10.0;
/// Local error above which a smooth candidate is retried as an abrupt change.
const RETRY_CENTS: f64 = 10.0;
/// Duration of a rendered note change, in samples.
const CHANGE_SAMPLES: f64 = 128.0;
/// Frames around an edit whose raw pitch must be re-measured.
const EDIT_REACH: usize = 4;

/// Pulse-plus-noise resynthesis. Both excitations have a flat power spectral
/// density of `2/sr` per Hz. Each frame owns a raised-cosine slice of the
/// excitation two hops long (slices sum to one), mixes pulse and noise per
/// aperiodicity band, and shapes the slice with its zero-phase cepstral
/// envelope inside a zero-padded buffer.
///
/// Pitch is closed-loop: analysis windows straddling a note change measure a
/// blend of both notes, so the rendered contour is corrected until
/// re-analysis agrees with the requested track. Each note change is rendered
/// either as a glide through the blended frame or as an abrupt change inside
/// it, whichever re-analyzes closer.
pub fn world_synthesize(feat: &WorldFeatures, cfg: &FrameConfig) -> Waveform {
    let t = feat.frames();
    if t == 0 {
        return Waveform::new(Vec::new(), cfg.sample_rate);
    }
    let plan = Plan::new(feat, cfg);
    let target = &feat.f0.values;
    let mut contour = Contour::new(target);
    let n_voiced = target.iter().filter(|&&f| f > 0.0).count();
    if n_voiced == 0 {
        return plan.render(&contour);
    }
    let yin = Yin::new(cfg, cfg.sample_rate);
    let hop = cfg.hop as f64;
    let mut raw = vec![0.0; t];
    let mut dirty = vec![true; t];
    let mut best: Option<(f64, Waveform)> = None;
    for pass in 0..PITCH_PASSES {
        let wav = plan.render(&contour);
        let fresh: Vec<(usize, f64)> =
            (0..t).into_par_iter().filter(|&i| dirty[i]).map(|i| (i, yin.frame(&wav, i))).collect();
        for (i, f) in fresh {
            raw[i] = f;
        }
        let measured = Yin::smooth(&raw);
        let err: Vec<f64> = (0..t)
            .map(|i| match (target[i] > 0.0, measured[i] > 0.0) {
                (true, true) => 1200.0 * (measured[i] / target[i]).log2(),
                (true, false) => VOICING_PENALTY_CENTS,
                _ => 0.0,
            })
            .collect();
        let score = (err.iter().map(|e| e * e).sum::<f64>() / n_voiced as f64).sqrt();
        if best.as_ref().is_none_or(|(b, _)| score < *b) {
            best = Some((score, wav));
        }
        if score < PITCH_TOLERANCE_CENTS || pass + 1 == PITCH_PASSES {
            break;
        }

        let mut edited = vec![false; t];
        for cand in contour.candidates.iter_mut() {
            let i = cand.frame;
            let local = err[i.saturating_sub(2)..(i + 3).min(t)].iter().map(|e| e * e).sum::<f64>();
            if cand.abrupt.is_some() {
                cand.best_abrupt = cand.best_abrupt.min(local);
                cand.abrupt_passes += 1;
            } else {
                cand.best_smooth = cand.best_smooth.min(local);
            }
            match cand.abrupt {
                None if !cand.retried && pass >= 1 && local > RETRY_CENTS * RETRY_CENTS => {
                    let (a, b, c) = (target[i - 1], target[i], target[i + 1]);
                    cand.abrupt = Some((0.5 - (b / a).ln() / (c / a).ln()) * hop);
                    cand.retried = true;
                    edited[i] = true;
                }
                Some(_) if cand.abrupt_passes >= 2 && cand.best_abrupt > cand.best_smooth => {
                    cand.abrupt = None;
                    edited[i] = true;
                }
                _ => {}
            }
        }
        for i in 0..t {
            if target[i] <= 0.0 || measured[i] <= 0.0 || err[i].abs() < SETTLED_CENTS {
                continue;
            }
            match contour.abrupt_at(i) {
                Some(cand) => {
                    // a later change leaves more of the earlier note in the window
                    let span = (target[i + 1] / target[i - 1]).ln();
                    let offset = cand.abrupt.unwrap() + (measured[i] / target[i]).ln() / span * hop;
                    cand.abrupt = Some(offset.clamp(-hop, hop));
                }
                None => contour.f0[i] = (contour.f0[i] * target[i] / measured[i]).clamp(F0_MIN_HZ, F0_MAX_HZ),
            }
            edited[i] = true;
        }
        dirty.iter_mut().for_each(|d| *d = false);
        for i in (0..t).filter(|&i| edited[i]) {
            for d in dirty.iter_mut().take((i + EDIT_REACH + 1).min(t)).skip(i.saturating_sub(EDIT_REACH)) {
                *d = true;
            }
        }
    }
    best.map(|(_, w)| w).expect("at least one pass")
}

struct Candidate {
    frame: usize,
    /// Offset of the abrupt change from the frame center, in samples.
    abrupt: Option<f64>,
    retried: bool,
    abrupt_passes: usize,
    best_smooth: f64,
    best_abrupt: f64,
}

/// Frame pitches plus the rendering of each note-change candidate.
struct Contour {
    f0: Vec<f64>,
    candidates: Vec<Candidate>,
}

impl Contour {
    fn new(f0: &[f64]) -> Self {
        let mut candidates: Vec<Candidate> = Vec::new();
        for i in 1..f0.len().saturating_sub(1) {
            let (a, b, c) = (f0[i - 1], f0[i], f0[i + 1]);
            if a <= 0.0 || b <= 0.0 || c <= 0.0 || candidates.last().is_some_and(|p| p.frame + 1 == i) {
                continue;
            }
            let (up, down) = (1200.0 * (b / a).log2(), 1200.0 * (c / b).log2());
            let between = up.signum() == down.signum() && up.abs().min(down.abs()) > MIN_STEP_CENTS;
            if between && (up + down).abs() > 2.0 * TRANSITION_CENTS {
                candidates.push(Candidate {
                    frame: i,
                    abrupt: None,
                    retried: false,
                    abrupt_passes: 0,
                    best_smooth: f64::INFINITY,
                    best_abrupt: f64::INFINITY,
                });
            }
        }
        Self { f0: f0.to_vec(), candidates }
    }

    fn abrupt_at(&mut self, i: usize) -> Option<&mut Candidate> {
        self.candidates.iter_mut().find(|c| c.frame == i && c.abrupt.is_some())
    }

    /// Per-sample pitch: geometric interpolation between frame centers, with
    /// abrupt candidates jumping between their neighbors inside their hop.
    fn per_sample(&self, cfg: &FrameConfig, len: usize) -> Vec<f64> {
        let mut out = sample_f0(&self.f0, cfg, len);
        for cand in &self.candidates {
            if let Some(offset) = cand.abrupt {
                let i = cand.frame;
                let at = cfg.frame_center(i) as f64 + offset;
                let lo = cfg.frame_center(i - 1).min(len);
                let hi = cfg.frame_center(i + 1).min(len);
                let (from, to) = (self.f0[i - 1].ln(), self.f0[i + 1].ln());
                let half = CHANGE_SAMPLES / 2.0;
                for (n, v) in out.iter_mut().enumerate().take(hi).skip(lo) {
                    let u = ((n as f64 - at + half) / CHANGE_SAMPLES).clamp(0.0, 1.0);
                    let w = 0.5 - 0.5 * (PI * u).cos();
                    *v = (from + (to - from) * w).exp();
                }
            }
        }
        out
    }
}

/// Everything about a resynthesis that does not depend on the pitch contour.
struct Plan<'a> {
    cfg: &'a FrameConfig,
    stft: Stft,
    len: usize,
    /// Per frame: amplitude response applied to the pulse slice.
    pulse_gain: Vec<Vec<f64>>,
    /// Per frame: shaped, band-mixed noise spectrum.
    noise: Vec<Vec<Complex64>>,
}

impl<'a> Plan<'a> {
    fn new(feat: &WorldFeatures, cfg: &'a FrameConfig) -> Self {
        let t = feat.frames();
        let sr = cfg.sample_rate as f64;
        let len = cfg.samples_for(t);
        let n = (2 * cfg.fft_size).next_power_of_two();
        let stft = Stft::new(n);
        let warp = WarpAxis::new(sr, n);
        let n_bins = n / 2 + 1;
        let bin_hz = sr / n as f64;
        let band_of: Vec<usize> = (0..n_bins)
            .map(|k| {
                let f = k as f64 * bin_hz;
                BAP_BANDS_HZ.iter().position(|&(_, hi)| f < hi).unwrap_or(BAP_BANDS_HZ.len() - 1)
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(NOISE_SEED);
        let noise: Vec<f64> = (0..len).map(|_| StandardNormal.sample(&mut rng)).collect();
        let plan = Self { cfg, stft, len, pulse_gain: Vec::new(), noise: Vec::new() };
        let (pulse_gain, noise) = (0..t)
            .into_par_iter()
            .map(|i| {
                let log_env = warp.to_log_envelope(&feat.mcep.row(i).to_vec());
                let voiced = feat.f0.values[i] > 0.0;
                let q = plan.slice_spectrum(&noise, i);
                let mut pg = vec![0.0; n_bins];
                let mut ns = vec![Complex64::new(0.0, 0.0); n_bins];
                for k in 0..n_bins {
                    // envelope at the analysis floor renders as silence
                    let gain = ((log_env[k].exp() - (ENV_LOG_FLOOR + FLOOR_MARGIN).exp()).max(0.0) * sr / 2.0).sqrt();
                    let a = if voiced { feat.bap[[i, band_of[k]]].clamp(0.0, 1.0) } else { 1.0 };
                    pg[k] = gain * (1.0 - a).sqrt();
                    ns[k] = q[k] * gain * a.sqrt();
                }
                (pg, ns)
            })
            .unzip();
        Self { pulse_gain, noise, ..plan }
    }

    fn buffer_size(&self) -> usize {
        self.stft.size()
    }

    /// First sample covered by frame `i`'s buffer.
    fn origin(&self, i: usize) -> isize {
        self.cfg.frame_center(i) as isize - (self.buffer_size() / 2) as isize
    }

    /// Spectrum of frame `i`'s raised-cosine slice of `x`, zero-padded.
    fn slice_spectrum(&self, x: &[f64], i: usize) -> Vec<Complex64> {
        let t = self.cfg.frames_for(self.len);
        let hop = self.cfg.hop as isize;
        let c = self.cfg.frame_center(i) as isize;
        let lo = if i == 0 { 0 } else { c - hop };
        let hi = if i + 1 == t { self.len as isize } else { c + hop };
        let origin = self.origin(i);
        let mut buf = vec![Complex64::new(0.0, 0.0); self.buffer_size()];
        for m in lo.max(0)..hi.min(self.len as isize) {
            let w = if (i == 0 && m < c) || (i + 1 == t && m >= c) {
                1.0
            } else {
                0.5 + 0.5 * (PI * (m - c) as f64 / hop as f64).cos()
            };
            buf[(m - origin) as usize].re = x[m as usize] * w;
        }
        self.stft.fft_in_place(&mut buf);
        buf
    }

    fn render(&self, contour: &Contour) -> Waveform {
        let sr = self.cfg.sample_rate as f64;
        let pulses = pulse_excitation(&contour.per_sample(self.cfg, self.len), sr);
        let n = self.buffer_size();
        let slices: Vec<Vec<f64>> = (0..self.pulse_gain.len())
            .into_par_iter()
            .map(|i| {
                let p = self.slice_spectrum(&pulses, i);
                let mut half: Vec<Complex64> =
                    (0..n / 2 + 1).map(|k| p[k] * self.pulse_gain[i][k] + self.noise[i][k]).collect();
                half[0].im = 0.0;
                let mut buf = vec![Complex64::new(0.0, 0.0); n];
                fill_hermitian(&half, &mut buf);
                self.stft.ifft_in_place(&mut buf);
                buf.into_iter().map(|z| z.re).collect()
            })
            .collect();
        let mut samples = vec![0.0; self.len];
        for (i, buf) in slices.into_iter().enumerate() {
            let origin = self.origin(i);
            for (b, v) in buf.into_iter().enumerate() {
                let m = origin + b as isize;
                if (0..self.len as isize).contains(&m) {
                    samples[m as usize] += v;
                }
            }
        }
        Waveform::new(samples, self.cfg.sample_rate).clipped()
    }
}

/// Per-sample F0 by linear interpolation between frame centers; zero where
/// neither neighboring frame is voiced.
fn sample_f0(f0: &[f64], cfg: &FrameConfig, len: usize) -> Vec<f64> {
    let t = f0.len();
    (0..len)
        .map(|n| {
            let pos = (n as f64 - (cfg.fft_size / 2) as f64) / cfg.hop as f64;
            let pos = pos.clamp(0.0, (t - 1) as f64);
            let i = pos.floor() as usize;
            let j = (i + 1).min(t - 1);
            let frac = pos - i as f64;
            match (f0[i] > 0.0, f0[j] > 0.0) {
                (true, true) => {
                    // geometric interpolation keeps glides linear in pitch
                    (f0[i].ln() * (1.0 - frac) + f0[j].ln() * frac).exp()
                }
                (true, false) if frac < 0.5 => f0[i],
                (false, true) if frac >= 0.5 => f0[j],
                _ => 0.0,
            }
        })
        .collect()
}

/// Band-limited pulse train whose harmonics each carry power `2 f0 / sr`.
fn pulse_excitation(per_sample: &[f64], sr: f64) -> Vec<f64> {
    let mut phase = 0.0f64;
    let mut last_f0 = per_sample.iter().copied().find(|&f| f > 0.0).unwrap_or(100.0);
    per_sample
        .iter()
        .map(|&f| {
            let active = f > 0.0;
            let freq = if active { f } else { last_f0 };
            last_f0 = freq;
            phase = (phase + 2.0 * PI * freq / sr) % (2.0 * PI);
            if !active {
                return 0.0;
            }
            let harmonics = ((0.5 * sr * 0.98) / freq).floor() as usize;
            let amp = 2.0 * (freq / sr).sqrt();
            // Chebyshev recurrence for cos(h * phase)
            let c1 = phase.cos();
            let (mut prev, mut cur) = (1.0, c1);
            let mut acc = 0.0;
            for _ in 0..harmonics {
                acc += cur;
                let next = 2.0 * c1 * cur - prev;
                prev = cur;
                cur = next;
            }
            amp * acc
        })
        .collect()
}
