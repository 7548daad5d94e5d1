//! Deterministic synthetic singing corpus with parametric styles, and the
//! objective style measurements used to check conversions.

mod metrics;

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::dsp::wav::write_wav;
use crate::dsp::{midi_to_hz, FrameConfig, Waveform};
use crate::error::{Error, Result};
use crate::infill::manifest::{write_manifest, ClipRecord};

pub use metrics::{style_proxy_metrics, StyleMetrics};

/// Silence before the first and after the last note, in seconds.
pub const EDGE_SILENCE_SECS: f64 = 0.08;
/// RMS level of the voiced part of every render.
pub const TARGET_RMS: f64 = 0.1;
const FADE_SECS: f64 = 0.005;
const GLIDE_SECS: f64 = 0.005;
const FORMANTS: [(f64, f64, f64); 3] = [(700.0, 130.0, 1.0), (1220.0, 120.0, 0.7), (2600.0, 160.0, 0.4)];
const NOISE_FIR_TAPS: usize = 511;
/// The slope applies above this frequency; the envelope is flat below.
const SLOPE_KNEE_HZ: f64 = 300.0;

/// Measurable voice-quality settings of one synthetic style.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StyleParams {
    pub vibrato_rate: f64,
    /// Peak vibrato excursion in cents.
    pub vibrato_depth: f64,
    /// Noise-to-harmonic RMS ratio.
    pub breathiness: f64,
    /// Extra spectral slope in dB per octave.
    pub tilt: f64,
    /// Semitones added to every note.
    pub key_offset: i32,
}

impl StyleParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=8.0).contains(&self.vibrato_rate)
            || !(0.0..=200.0).contains(&self.vibrato_depth)
            || !(0.0..=1.0).contains(&self.breathiness)
            || !self.tilt.is_finite()
        {
            return Err(Error::invalid(format!("style parameters out of range: {self:?}")));
        }
        Ok(())
    }
}

/// The four default styles: clear, breathy, falsetto-like and pressed.
pub fn default_styles() -> Vec<(String, StyleParams)> {
    let base = StyleParams { vibrato_rate: 5.5, vibrato_depth: 20.0, breathiness: 0.05, tilt: 0.0, key_offset: 0 };
    vec![
        ("clear".into(), base),
        ("breathy".into(), StyleParams { breathiness: 0.5, ..base }),
        ("falsetto".into(), StyleParams { key_offset: 12, breathiness: 0.2, tilt: -12.0, ..base }),
        ("pressed".into(), StyleParams { tilt: 6.0, vibrato_depth: 60.0, ..base }),
    ]
}

/// A melody: `(midi note, seconds)` pairs and a global transposition.
#[derive(Debug, Clone, PartialEq)]
pub struct SongSpec {
    pub notes: Vec<(u8, f64)>,
    pub key_offset: i32,
}

impl SongSpec {
    pub fn validate(&self) -> Result<()> {
        if self.notes.is_empty() {
            return Err(Error::invalid("song has no notes"));
        }
        for &(n, d) in &self.notes {
            if !(36..=84).contains(&n) || !(d > 0.0 && d.is_finite()) {
                return Err(Error::invalid(format!("bad note ({n}, {d})")));
            }
        }
        Ok(())
    }

    pub fn duration_secs(&self) -> f64 {
        self.notes.iter().map(|n| n.1).sum()
    }

    /// Random melody of `n_notes` notes in 55..=67 lasting 0.25-0.4 s each.
    pub fn random(n_notes: usize, rng: &mut impl Rng) -> Self {
        let notes = (0..n_notes).map(|_| (rng.gen_range(55..=67u8), rng.gen_range(0.25..0.4))).collect();
        Self { notes, key_offset: 0 }
    }
}

/// Linear amplitude of the fixed vocal-tract envelope plus slope.
fn envelope(freq: f64, slope_db_oct: f64) -> f64 {
    let formants: f64 = FORMANTS
        .iter()
        .map(|&(fc, bw, g)| g / (1.0 + ((freq - fc) / bw).powi(2)))
        .sum();
    let shape = 0.15 + formants;
    let octaves = (freq.max(SLOPE_KNEE_HZ) / SLOPE_KNEE_HZ).log2();
    shape * 10f64.powf(slope_db_oct * octaves / 20.0)
}

/// Stable seed from the render inputs so each clip has its own noise.
fn render_seed(spec: &SongSpec, style: &StyleParams) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    let mut mix = |v: u64| {
        h ^= v;
        h = h.wrapping_mul(0x100000001b3);
    };
    for &(n, d) in &spec.notes {
        mix(n as u64);
        mix(d.to_bits());
    }
    mix(spec.key_offset as u64);
    for v in [style.vibrato_rate, style.vibrato_depth, style.breathiness, style.tilt] {
        mix(v.to_bits());
    }
    mix(style.key_offset as u64);
    h
}

/// Per-sample F0 with glides between notes and sinusoidal vibrato, and
/// the matching amplitude gate.
fn pitch_and_gate(spec: &SongSpec, style: &StyleParams, sr: f64) -> (Vec<f64>, Vec<f64>) {
    let lead = (EDGE_SILENCE_SECS * sr).round() as usize;
    let voiced: usize = spec.notes.iter().map(|n| (n.1 * sr).round() as usize).sum();
    let total = 2 * lead + voiced;
    let mut f0 = vec![0.0; total];
    let mut gate = vec![0.0; total];
    let glide = (-1.0 / (GLIDE_SECS * sr)).exp();
    let fade = (FADE_SECS * sr) as usize;
    let shift = spec.key_offset + style.key_offset;
    let mut pos = lead;
    let mut log_f = (midi_to_hz(spec.notes[0].0 as f64 + shift as f64)).ln();
    for &(note, dur) in &spec.notes {
        let target = midi_to_hz(note as f64 + shift as f64).ln();
        let n = (dur * sr).round() as usize;
        for i in pos..pos + n {
            log_f = target + (log_f - target) * glide;
            let t = (i - lead) as f64 / sr;
            let vib = style.vibrato_depth / 1200.0 * (2.0 * PI * style.vibrato_rate * t).sin();
            f0[i] = log_f.exp() * 2f64.powf(vib);
            let from_start = i - lead;
            let to_end = lead + voiced - 1 - i;
            let edge = from_start.min(to_end);
            gate[i] = if edge < fade { 0.5 - 0.5 * (PI * edge as f64 / fade as f64).cos() } else { 1.0 };
        }
        pos += n;
    }
    (f0, gate)
}

fn harmonic_part(f0: &[f64], gate: &[f64], slope: f64, sr: f64) -> Vec<f64> {
    const BLOCK: usize = 32;
    let nyq_limit = 0.46 * sr;
    let mut out = vec![0.0; f0.len()];
    let mut phase = 0.0f64;
    let mut amps: Vec<f64> = Vec::new();
    for (start, chunk) in f0.chunks(BLOCK).enumerate().map(|(b, c)| (b * BLOCK, c)) {
        let f_ref = chunk.iter().copied().fold(0.0, f64::max);
        if f_ref <= 0.0 {
            continue;
        }
        let n_harm = (nyq_limit / f_ref).floor() as usize;
        amps.clear();
        amps.extend((1..=n_harm).map(|k| envelope(k as f64 * f_ref, slope)));
        for (j, &f) in chunk.iter().enumerate() {
            if f <= 0.0 {
                continue;
            }
            phase = (phase + 2.0 * PI * f / sr) % (2.0 * PI);
            let g = gate[start + j];
            let mut acc = 0.0;
            for (k, a) in amps.iter().enumerate() {
                acc += a * ((k + 1) as f64 * phase).sin();
            }
            out[start + j] = g * acc;
        }
    }
    out
}

/// White noise filtered by the same envelope through a linear-phase FIR.
fn noise_part(len: usize, gate: &[f64], slope: f64, sr: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let taps = NOISE_FIR_TAPS;
    let n_fft = (len + taps).next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n_fft);
    let inv = planner.plan_fft_inverse(n_fft);

    let mut h = vec![Complex64::new(0.0, 0.0); n_fft];
    let half = taps / 2;
    for (i, slot) in h.iter_mut().enumerate().take(taps) {
        let m = i as f64 - half as f64;
        // windowed sum of cosines sampled on a 1024-point grid
        let mut acc = 0.0;
        let grid = 512;
        for k in 0..=grid {
            let f = k as f64 / grid as f64 * sr / 2.0;
            let w = if k == 0 || k == grid { 1.0 } else { 2.0 };
            acc += w * envelope(f.max(1.0), slope) * (PI * k as f64 * m / grid as f64).cos();
        }
        let win = 0.5 - 0.5 * (2.0 * PI * i as f64 / (taps - 1) as f64).cos();
        *slot = Complex64::new(acc / (2.0 * grid as f64) * win, 0.0);
    }
    let mut x: Vec<Complex64> = (0..n_fft)
        .map(|i| if i < len { Complex64::new(rng.sample(StandardNormal), 0.0) } else { Complex64::new(0.0, 0.0) })
        .collect();
    fwd.process(&mut h);
    fwd.process(&mut x);
    for (a, b) in x.iter_mut().zip(&h) {
        *a *= b;
    }
    inv.process(&mut x);
    (0..len).map(|i| x[i + half].re / n_fft as f64 * gate[i]).collect()
}

fn rms_where(x: &[f64], gate: &[f64]) -> f64 {
    let (s, n) = x
        .iter()
        .zip(gate)
        .filter(|(_, &g)| g > 0.0)
        .fold((0.0, 0usize), |(s, n), (v, _)| (s + v * v, n + 1));
    if n == 0 {
        0.0
    } else {
        (s / n as f64).sqrt()
    }
}

/// Sings `spec` in `style`: band-limited harmonics with vibrato plus noise
/// at the breathiness ratio, both shaped by a three-formant envelope with
/// a -6 dB/octave base slope and the style's tilt.
pub fn render_voice(spec: &SongSpec, style: &StyleParams, cfg: &FrameConfig) -> Result<Waveform> {
    spec.validate()?;
    style.validate()?;
    cfg.validate()?;
    let sr = cfg.sample_rate as f64;
    let (f0, gate) = pitch_and_gate(spec, style, sr);
    let slope = -6.0 + style.tilt;
    let harm = harmonic_part(&f0, &gate, slope, sr);
    let h_rms = rms_where(&harm, &gate);
    let mut rng = ChaCha8Rng::seed_from_u64(render_seed(spec, style));
    let noise = noise_part(f0.len(), &gate, slope, sr, &mut rng);
    let n_rms = rms_where(&noise, &gate).max(1e-12);
    let noise_gain = style.breathiness * h_rms / n_rms;
    let mix: Vec<f64> = harm.iter().zip(&noise).map(|(h, n)| h + noise_gain * n).collect();
    let level = rms_where(&mix, &gate).max(1e-12);
    let samples = mix.iter().map(|v| v * TARGET_RMS / level).collect();
    Ok(Waveform::new(samples, cfg.sample_rate).clipped())
}

/// One rendered corpus clip.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusClip {
    pub record: ClipRecord,
    pub song: SongSpec,
    pub wav: Waveform,
}

/// Renders every song in every style (parallel renditions share a spec).
pub fn render_corpus(
    n_songs: usize,
    notes_per_song: usize,
    styles: &[(String, StyleParams)],
    rng: &mut impl Rng,
    cfg: &FrameConfig,
) -> Result<Vec<CorpusClip>> {
    if n_songs == 0 || styles.len() < 2 {
        return Err(Error::invalid("corpus needs at least one song and two styles"));
    }
    let songs: Vec<SongSpec> = (0..n_songs).map(|_| SongSpec::random(notes_per_song, rng)).collect();
    let jobs: Vec<(usize, usize)> = (0..n_songs).flat_map(|s| (0..styles.len()).map(move |k| (s, k))).collect();
    jobs.par_iter()
        .map(|&(s, k)| {
            let (name, style) = &styles[k];
            let clip_id = format!("song{s:02}_{name}");
            let wav = render_voice(&songs[s], style, cfg)?;
            Ok(CorpusClip {
                record: ClipRecord {
                    clip_id: clip_id.clone(),
                    wav_path: format!("wav/{clip_id}.wav"),
                    style: name.clone(),
                    song_id: format!("song{s:02}"),
                    phrase_id: 0,
                },
                song: songs[s].clone(),
                wav,
            })
        })
        .collect()
}

/// Renders the corpus and writes `wav/*.wav` plus `manifest.tsv` under `dir`.
pub fn make_corpus(
    dir: &Path,
    n_songs: usize,
    notes_per_song: usize,
    styles: &[(String, StyleParams)],
    rng: &mut impl Rng,
    cfg: &FrameConfig,
) -> Result<Vec<ClipRecord>> {
    let clips = render_corpus(n_songs, notes_per_song, styles, rng, cfg)?;
    for c in &clips {
        write_wav(&dir.join(&c.record.wav_path), &c.wav)?;
    }
    let records: Vec<ClipRecord> = clips.into_iter().map(|c| c.record).collect();
    write_manifest(&dir.join("manifest.tsv"), &records)?;
    Ok(records)
}
