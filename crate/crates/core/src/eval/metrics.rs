use crate::dsp::{F0Track, MelSpectrogram};
use crate::error::{Error, Result};
use crate::synthdata::StyleMetrics;

/// Largest frame-count difference tolerated before metrics refuse to compare.
pub const FRAME_SLACK: usize = 1;

// Scales that put the style proxies on comparable footing.
const NHR_SCALE: f64 = 0.1;
const VIBRATO_SCALE_CENTS: f64 = 25.0;
const TILT_SCALE_DB: f64 = 3.0;

fn common_frames(a: usize, b: usize) -> Result<usize> {
    if a.abs_diff(b) > FRAME_SLACK {
        return Err(Error::FrameMismatch { a, b });
    }
    Ok(a.min(b))
}

/// Mean absolute log-mel difference over the common frames.
pub fn mel_distance(a: &MelSpectrogram, b: &MelSpectrogram) -> Result<f64> {
    if a.n_mels() != b.n_mels() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} mel bands", a.n_mels()),
            got: format!("{} mel bands", b.n_mels()),
        });
    }
    let t = common_frames(a.frames(), b.frames())?;
    if t == 0 {
        return Err(Error::invalid("mel_distance of empty spectrograms"));
    }
    let sa = a.data.slice(ndarray::s![..t, ..]);
    let sb = b.data.slice(ndarray::s![..t, ..]);
    let sum: f64 = sa.iter().zip(sb.iter()).map(|(x, y)| (x - y).abs()).sum();
    Ok(sum / (t * a.n_mels()) as f64)
}

/// RMS pitch difference in cents over frames voiced in both tracks.
pub fn f0_rmse_cents(a: &F0Track, b: &F0Track) -> Result<f64> {
    let t = common_frames(a.len(), b.len())?;
    let mut acc = 0.0;
    let mut n = 0usize;
    for (&fa, &fb) in a.values[..t].iter().zip(&b.values[..t]) {
        if fa > 0.0 && fb > 0.0 {
            acc += (1200.0 * (fa / fb).log2()).powi(2);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::NoCoVoicedFrames);
    }
    Ok((acc / n as f64).sqrt())
}

/// Fraction of common frames whose voicing decisions disagree.
pub fn vuv_error(a: &F0Track, b: &F0Track) -> Result<f64> {
    let t = common_frames(a.len(), b.len())?;
    if t == 0 {
        return Err(Error::invalid("vuv_error of empty tracks"));
    }
    let wrong = (0..t).filter(|&i| a.is_voiced(i) != b.is_voiced(i)).count();
    Ok(wrong as f64 / t as f64)
}

/// Euclidean distance between scaled (NHR, vibrato depth, tilt) vectors.
pub fn style_proxy_distance(a: &StyleMetrics, b: &StyleMetrics) -> f64 {
    let dn = (a.nhr - b.nhr) / NHR_SCALE;
    let dv = (a.vibrato_depth_cents - b.vibrato_depth_cents) / VIBRATO_SCALE_CENTS;
    let dt = (a.tilt_db_per_oct - b.tilt_db_per_oct) / TILT_SCALE_DB;
    (dn * dn + dv * dv + dt * dt).sqrt()
}
