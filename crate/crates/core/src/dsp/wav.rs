//! 16-bit PCM mono WAV files, resampled to 24 kHz on load.

use std::f64::consts::PI;
use std::path::Path;

use super::{Waveform, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::formats::write_atomic;

const SINC_TAPS: usize = 32;

pub fn read_wav(path: &Path) -> Result<Waveform> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::format(path, format!("{} channels, expected mono", spec.channels)));
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()?,
        (fmt, bits) => {
            return Err(Error::format(path, format!("unsupported {bits}-bit {fmt:?} samples")))
        }
    };
    let wav = Waveform::new(samples, spec.sample_rate);
    Ok(resample(&wav, SAMPLE_RATE))
}

fn encode(wav: &Waveform) -> Result<Vec<u8>> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: wav.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut cursor = std::io::Cursor::new(Vec::new());
    {
        let mut writer = hound::WavWriter::new(&mut cursor, spec)?;
        for &x in &wav.samples {
            writer.write_sample(to_i16(x))?;
        }
        writer.finalize()?;
    }
    Ok(cursor.into_inner())
}

fn to_i16(x: f64) -> i16 {
    (x.clamp(-1.0, 1.0) * 32767.0).round() as i16
}

/// Writes via a temporary file and rename.
pub fn write_wav(path: &Path, wav: &Waveform) -> Result<()> {
    wav.validate()?;
    write_atomic(path, &encode(wav)?)
}

/// Rounds samples through 16-bit PCM, matching what a write/read cycle yields.
pub fn quantize_pcm16(wav: &Waveform) -> Waveform {
    Waveform::new(
        wav.samples.iter().map(|&x| to_i16(x) as f64 / 32768.0).collect(),
        wav.sample_rate,
    )
}

/// Windowed-sinc resampler with 32 Blackman-windowed taps, low-passed at the
/// lower of the two Nyquist frequencies.
pub fn resample(wav: &Waveform, target_rate: u32) -> Waveform {
    if wav.sample_rate == target_rate || wav.is_empty() {
        return Waveform::new(wav.samples.clone(), target_rate);
    }
    let ratio = target_rate as f64 / wav.sample_rate as f64;
    let cutoff = ratio.min(1.0);
    let out_len = (wav.len() as f64 * ratio).round() as usize;
    let half = (SINC_TAPS / 2) as isize;
    let scale = 1.0 / cutoff;
    let samples = (0..out_len)
        .map(|j| {
            let pos = j as f64 / ratio;
            let base = pos.floor() as isize;
            let mut acc = 0.0;
            let mut wsum = 0.0;
            for k in (base - half + 1)..=(base + half) {
                let d = pos - k as f64;
                let arg = d * cutoff;
                let sinc = if arg.abs() < 1e-12 { 1.0 } else { (PI * arg).sin() / (PI * arg) };
                let u = (d / (scale * half as f64) + 1.0) * 0.5;
                if !(0.0..=1.0).contains(&u) {
                    continue;
                }
                let win = 0.42 - 0.5 * (2.0 * PI * u).cos() + 0.08 * (4.0 * PI * u).cos();
                let w = sinc * win;
                wsum += w;
                if k >= 0 && (k as usize) < wav.len() {
                    acc += w * wav.samples[k as usize];
                }
            }
            if wsum.abs() > 1e-12 {
                acc / wsum
            } else {
                0.0
            }
        })
        .collect();
    Waveform::new(samples, target_rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, rate: u32, secs: f64) -> Waveform {
        let n = (secs * rate as f64) as usize;
        Waveform::new(
            (0..n)
                .map(|i| 0.5 * (2.0 * PI * freq * i as f64 / rate as f64).sin())
                .collect(),
            rate,
        )
    }

    #[test]
    fn write_read_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let w = tone(440.0, SAMPLE_RATE, 0.1);
        write_wav(&path, &w).unwrap();
        let r = read_wav(&path).unwrap();
        assert_eq!(r, quantize_pcm16(&w));
    }

    #[test]
    fn resample_preserves_tone() {
        let src = tone(440.0, 16_000, 0.5);
        let out = resample(&src, SAMPLE_RATE);
        assert_eq!(out.len(), 12_000);
        let expected = tone(440.0, SAMPLE_RATE, 0.5);
        // compare away from the edges
        let err = (1000..11_000)
            .map(|i| (out.samples[i] - expected.samples[i]).abs())
            .fold(0.0, f64::max);
        assert!(err < 0.01, "{err}");
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            read_wav(Path::new("/nonexistent/x.wav")),
            Err(Error::MissingFile(_))
        ));
    }
}
