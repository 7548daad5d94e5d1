//! Synthetic test signals shared by unit tests.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dsp::{Waveform, SAMPLE_RATE};

/// Band-limited sawtooth whose F0 follows `f0_at(seconds)`.
pub fn sawtooth_with(f0_at: impl Fn(f64) -> f64, amp: f64, secs: f64) -> Waveform {
    let sr = SAMPLE_RATE as f64;
    let n = (secs * sr) as usize;
    let mut phase = 0.0f64;
    Waveform::new(
        (0..n)
            .map(|i| {
                let f = f0_at(i as f64 / sr);
                phase += 2.0 * PI * f / sr;
                let harmonics = (0.45 * sr / f) as usize;
                amp * 2.0 / PI
                    * (1..=harmonics)
                        .map(|h| (h as f64 * phase).sin() / h as f64)
                        .sum::<f64>()
            })
            .collect(),
        SAMPLE_RATE,
    )
}

pub fn sawtooth(freq: f64, amp: f64, secs: f64) -> Waveform {
    sawtooth_with(|_| freq, amp, secs)
}

pub fn white_noise(amp: f64, secs: f64, seed: u64) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (secs * SAMPLE_RATE as f64) as usize;
    Waveform::new((0..n).map(|_| rng.gen_range(-amp..amp)).collect(), SAMPLE_RATE)
}

/// RMS pitch difference in cents over frames voiced in both tracks.
pub fn cents_rmse(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a
        .iter()
        .zip(b)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0)
        .map(|(x, y)| 1200.0 * (x / y).log2())
        .collect();
    assert!(!d.is_empty(), "no co-voiced frames");
    (d.iter().map(|v| v * v).sum::<f64>() / d.len() as f64).sqrt()
}

pub fn vuv_disagreement(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    (0..n).filter(|&i| (a[i] > 0.0) != (b[i] > 0.0)).count() as f64 / n as f64
}
