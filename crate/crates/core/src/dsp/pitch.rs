use super::frames::reflect_segment;
use super::{F0Track, FrameConfig, MidiTrack, Waveform};
use crate::error::{Error, Result};

pub const F0_MIN_HZ: f64 = 50.0;
pub const F0_MAX_HZ: f64 = 1100.0;
/// Cumulative-mean-normalized difference below which a frame is voiced.
pub const VOICING_THRESHOLD: f64 = 0.35;
const MEDIAN_WIDTH: usize = 5;
const OCTAVE_RATIO: f64 = 0.5;
const OCTAVE_GAP: f64 = 0.1;
const SUBHARMONIC_MARGIN: f64 = 0.05;
const MIN_NOTE_SECS: f64 = 0.05;
const SILENCE_RMS: f64 = 1e-5;

pub fn hz_to_midi(hz: f64) -> Result<f64> {
    if !(hz > 0.0) || !hz.is_finite() {
        return Err(Error::invalid(format!("frequency must be positive, got {hz}")));
    }
    Ok(69.0 + 12.0 * (hz / 440.0).log2())
}

pub fn midi_to_hz(midi: f64) -> f64 {
    440.0 * 2f64.powf((midi - 69.0) / 12.0)
}

/// YIN pitch track on the shared frame grid, median-smoothed over 5 frames.
pub fn extract_f0(wav: &Waveform, cfg: &FrameConfig) -> F0Track {
    let yin = Yin::new(cfg, wav.sample_rate);
    let raw: Vec<f64> = (0..cfg.frames_for(wav.len())).map(|i| yin.frame(wav, i)).collect();
    F0Track::new(median_smooth(&raw, MEDIAN_WIDTH))
}

/// Per-frame YIN estimator; lets callers re-measure only some frames.
pub(crate) struct Yin {
    cfg: FrameConfig,
    sr: f64,
    tau_min: usize,
    tau_max: usize,
    width: usize,
    half: usize,
}

impl Yin {
    pub(crate) fn new(cfg: &FrameConfig, sample_rate: u32) -> Self {
        let sr = sample_rate as f64;
        let tau_max = (sr / F0_MIN_HZ).ceil() as usize;
        let tau_min = ((sr / F0_MAX_HZ).floor() as usize).max(2);
        let width = (cfg.fft_size / 2).max(tau_max / 2);
        let half = (width + tau_max + 2) / 2 + 1;
        Self { cfg: cfg.clone(), sr, tau_min, tau_max, width, half }
    }

    /// Unsmoothed F0 of frame `i` (0 when unvoiced).
    pub(crate) fn frame(&self, wav: &Waveform, i: usize) -> f64 {
        let (half, width) = (self.half, self.width);
        let center = self.cfg.frame_center(i) as isize;
        let seg = reflect_segment(&wav.samples, center - half as isize, 2 * half);
        let mid = &seg[half - width / 2..half + width / 2];
        let energy = mid.iter().map(|x| x * x).sum::<f64>() / mid.len() as f64;
        if energy.sqrt() < SILENCE_RMS {
            return 0.0;
        }
        let diff = difference_function(&seg, half, width, self.tau_max + 2);
        pick_period(&diff, self.tau_min, self.tau_max)
            .map(|tau| self.sr / tau)
            .filter(|f| (F0_MIN_HZ..=F0_MAX_HZ).contains(f))
            .unwrap_or(0.0)
    }

    pub(crate) fn smooth(raw: &[f64]) -> Vec<f64> {
        median_smooth(raw, MEDIAN_WIDTH)
    }
}

/// d(tau) = sum_{j<width} (x_{s+j} - x_{s+j+tau})^2 with the compared pair
/// of windows centered on `center` for every lag.
fn difference_function(seg: &[f64], center: usize, width: usize, n_lags: usize) -> Vec<f64> {
    (0..n_lags)
        .map(|tau| {
            let s = center - (width + tau) / 2;
            let a = &seg[s..s + width];
            let b = &seg[s + tau..s + tau + width];
            a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
        })
        .collect()
}

/// Cumulative-mean normalization, absolute threshold, local-minimum descent
/// and parabolic refinement on the raw difference function.
fn pick_period(diff: &[f64], tau_min: usize, tau_max: usize) -> Option<f64> {
    let mut cmnd = vec![1.0; diff.len()];
    let mut running = 0.0;
    for tau in 1..diff.len() {
        running += diff[tau];
        cmnd[tau] = if running > 0.0 {
            diff[tau] * tau as f64 / running
        } else {
            1.0
        };
    }
    let mut tau = tau_min;
    while tau < tau_max {
        if cmnd[tau] < VOICING_THRESHOLD {
            while tau + 1 < tau_max && cmnd[tau + 1] < cmnd[tau] {
                tau += 1;
            }
            // Octave check: a strong second harmonic can dip below the threshold
            // at half the period; the true period then shows a much deeper dip.
            while let Some(double) = deepest_near(&cmnd, 2 * tau, tau_max) {
                if cmnd[double] < OCTAVE_RATIO * cmnd[tau] && cmnd[tau] - cmnd[double] > OCTAVE_GAP {
                    tau = double;
                } else {
                    break;
                }
            }
            // Subharmonic check: in noisy frames the true period can miss the
            // threshold narrowly while a multiple of it passes.
            for k in [3, 2] {
                if tau / k < tau_min + 2 {
                    continue;
                }
                if let Some(sub) = deepest_near(&cmnd, tau / k, tau_max) {
                    if sub > tau_min && cmnd[sub] < cmnd[sub - 1] && cmnd[sub] <= cmnd[sub + 1]
                        && cmnd[sub] < cmnd[tau] + SUBHARMONIC_MARGIN
                    {
                        tau = sub;
                        break;
                    }
                }
            }
            let (l, c, r) = (diff[tau - 1], diff[tau], diff[tau + 1]);
            let denom = l - 2.0 * c + r;
            let shift = if denom > 0.0 {
                (0.5 * (l - r) / denom).clamp(-0.5, 0.5)
            } else {
                0.0
            };
            return Some(tau as f64 + shift);
        }
        tau += 1;
    }
    None
}

/// Lowest point of `cmnd` within two lags of `center`, if that stays below `tau_max`.
fn deepest_near(cmnd: &[f64], center: usize, tau_max: usize) -> Option<usize> {
    if center + 2 >= tau_max {
        return None;
    }
    (center - 2..=center + 2).min_by(|&a, &b| cmnd[a].total_cmp(&cmnd[b]))
}

/// Voicing by majority vote over the window; voiced values replaced by the
/// median of voiced neighbors (for an even count, the middle value nearer the
/// frame's own estimate).
fn median_smooth(raw: &[f64], width: usize) -> Vec<f64> {
    let half = width / 2;
    (0..raw.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(raw.len());
            let mut voiced: Vec<f64> = raw[lo..hi].iter().copied().filter(|&f| f > 0.0).collect();
            if 2 * voiced.len() <= hi - lo {
                return 0.0;
            }
            voiced.sort_by(f64::total_cmp);
            let n = voiced.len();
            if n % 2 == 1 {
                return voiced[n / 2];
            }
            // Averaging the two middle values would invent a pitch between two
            // notes; keep whichever is nearer this frame's own estimate.
            let (lo, hi) = (voiced[n / 2 - 1], voiced[n / 2]);
            if raw[i] > 0.0 && (raw[i] / lo).ln().abs() < (hi / raw[i]).ln().abs() {
                lo
            } else {
                hi
            }
        })
        .collect()
}

/// Rounds each voiced frame to the nearest MIDI note and merges segments
/// shorter than 50 ms into their longer neighbor.
pub fn midi_quantize(f0: &F0Track, cfg: &FrameConfig) -> MidiTrack {
    let notes: Vec<u8> = f0
        .values
        .iter()
        .map(|&f| {
            if f > 0.0 {
                hz_to_midi(f).map(|m| m.round().clamp(1.0, 127.0) as u8).unwrap_or(0)
            } else {
                0
            }
        })
        .collect();
    let min_frames = (MIN_NOTE_SECS * cfg.sample_rate as f64 / cfg.hop as f64).ceil() as usize;
    MidiTrack {
        notes: merge_short_segments(notes, min_frames),
    }
}

fn merge_short_segments(notes: Vec<u8>, min_frames: usize) -> Vec<u8> {
    // (value, length) runs
    let mut runs: Vec<(u8, usize)> = Vec::new();
    for n in notes {
        match runs.last_mut() {
            Some((v, len)) if *v == n => *len += 1,
            _ => runs.push((n, 1)),
        }
    }
    loop {
        if runs.len() < 2 {
            break;
        }
        let shortest = (0..runs.len())
            .filter(|&i| runs[i].1 < min_frames)
            .min_by_key(|&i| (runs[i].1, i));
        let Some(i) = shortest else { break };
        let left = i.checked_sub(1).map(|j| runs[j].1);
        let right = runs.get(i + 1).map(|r| r.1);
        let target = match (left, right) {
            (Some(l), Some(r)) => {
                if r > l {
                    i + 1
                } else {
                    i - 1
                }
            }
            (Some(_), None) => i - 1,
            (None, Some(_)) => i + 1,
            (None, None) => break,
        };
        let len = runs[i].1;
        runs[target].1 += len;
        runs.remove(i);
        // coalesce equal neighbors created by the removal
        let mut j = 1;
        while j < runs.len() {
            if runs[j].0 == runs[j - 1].0 {
                runs[j - 1].1 += runs[j].1;
                runs.remove(j);
            } else {
                j += 1;
            }
        }
    }
    runs.into_iter()
        .flat_map(|(v, len)| std::iter::repeat_n(v, len))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::SAMPLE_RATE;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    pub(crate) fn sawtooth(freq: f64, amp: f64, secs: f64) -> Waveform {
        let n = (secs * SAMPLE_RATE as f64) as usize;
        let sr = SAMPLE_RATE as f64;
        let harmonics = (sr / 2.0 / freq) as usize;
        Waveform::new(
            (0..n)
                .map(|i| {
                    let ph = 2.0 * PI * freq * i as f64 / sr;
                    amp * (1..=harmonics)
                        .map(|h| (h as f64 * ph).sin() / h as f64)
                        .sum::<f64>()
                        * 2.0
                        / PI
                })
                .collect(),
            SAMPLE_RATE,
        )
    }

    #[test]
    fn midi_reference_points() {
        assert_eq!(hz_to_midi(440.0).unwrap(), 69.0);
        assert_eq!(hz_to_midi(220.0).unwrap(), 57.0);
        assert!((hz_to_midi(261.6256).unwrap() - 60.0).abs() < 1e-3);
        assert!(hz_to_midi(0.0).is_err());
        assert!(hz_to_midi(-3.0).is_err());
    }

    #[test]
    fn sawtooth_220() {
        let cfg = FrameConfig::default();
        let f0 = extract_f0(&sawtooth(220.0, 0.5, 1.0), &cfg);
        assert_eq!(f0.len(), 90);
        assert!((f0.median_voiced().unwrap() - 220.0).abs() < 1.0);
        assert!(f0.voiced_fraction() > 0.95);
    }

    #[test]
    fn white_noise_unvoiced() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let wav = Waveform::new(
            (0..24_000).map(|_| rng.gen_range(-0.5..0.5)).collect(),
            SAMPLE_RATE,
        );
        let f0 = extract_f0(&wav, &FrameConfig::default());
        assert!(f0.voiced_fraction() <= 0.05, "{}", f0.voiced_fraction());
    }

    #[test]
    fn silence_unvoiced() {
        let f0 = extract_f0(&Waveform::silence(24_000, SAMPLE_RATE), &FrameConfig::default());
        assert_eq!(f0.voiced_count(), 0);
    }

    #[test]
    fn quantize_constant_and_unvoiced() {
        let cfg = FrameConfig::default();
        let m = midi_quantize(&F0Track::new(vec![440.0; 40]), &cfg);
        assert!(m.notes.iter().all(|&n| n == 69));
        let m = midi_quantize(&F0Track::new(vec![0.0; 40]), &cfg);
        assert!(m.notes.iter().all(|&n| n == 0));
    }

    #[test]
    fn quantize_absorbs_40_cent_vibrato() {
        let cfg = FrameConfig::default();
        let frame_secs = cfg.hop as f64 / cfg.sample_rate as f64;
        let track: Vec<f64> = (0..200)
            .map(|i| 440.0 * 2f64.powf(40.0 / 1200.0 * (2.0 * PI * 5.5 * i as f64 * frame_secs).sin()))
            .collect();
        // oracle: every frame's rounded value is already 69
        assert!(track.iter().all(|&f| (hz_to_midi(f).unwrap()).round() == 69.0));
        let m = midi_quantize(&F0Track::new(track), &cfg);
        assert!(m.notes.iter().all(|&n| n == 69));
    }

    #[test]
    fn short_segments_merge() {
        let cfg = FrameConfig::default();
        let mut v = vec![440.0; 20];
        v.extend(vec![466.16; 2]);
        v.extend(vec![440.0; 20]);
        let m = midi_quantize(&F0Track::new(v), &cfg);
        assert!(m.notes.iter().all(|&n| n == 69));
        let mut v = vec![440.0; 20];
        v.extend(vec![0.0; 3]);
        v.extend(vec![493.88; 30]);
        let m = midi_quantize(&F0Track::new(v), &cfg);
        assert_eq!(m.note_sequence(), vec![69, 71]);
        assert!(!m.notes.contains(&0));
    }

    proptest::proptest! {
        #[test]
        fn octave_adds_twelve(f in 1.0f64..5000.0) {
            let a = hz_to_midi(f).unwrap();
            let b = hz_to_midi(2.0 * f).unwrap();
            proptest::prop_assert!((b - a - 12.0).abs() < 1e-12);
        }

        #[test]
        fn strictly_monotonic(f in 1.0f64..5000.0, d in 1e-6f64..100.0) {
            proptest::prop_assert!(hz_to_midi(f + d).unwrap() > hz_to_midi(f).unwrap());
        }
    }
}
