//! Source-filter analysis and resynthesis, log-F0 mean-variance shifting,
//! the F0-swap post-processor and pitch-shift augmentation.

mod analysis;
mod synthesis;

use std::path::Path;

use ndarray::Array2;

use crate::dsp::{F0Track, FrameConfig, Waveform};
use crate::error::{Error, Result};
use crate::formats::{decode_srnf, encode_srnf, read_u32, write_atomic};

pub use analysis::world_analyze;
pub(crate) use analysis::harmonic_noise_split;
pub use synthesis::world_synthesize;

/// Highest mel-cepstral index; `mcep` rows hold c0..=c24.
pub const MCEP_ORDER: usize = 24;
pub const WARP_POINTS: usize = 128;
/// Floor for the natural-log power spectral density of the envelope.
pub const ENV_LOG_FLOOR: f64 = -30.0;
/// Aperiodicity bands in Hz.
pub const BAP_BANDS_HZ: [(f64, f64); 4] = [
    (0.0, 3000.0),
    (3000.0, 6000.0),
    (6000.0, 9000.0),
    (9000.0, 12000.0),
];

#[derive(Debug, Clone, PartialEq)]
pub struct WorldFeatures {
    pub f0: F0Track,
    /// T x 25 cepstral coefficients of the log envelope on a mel-warped axis.
    pub mcep: Array2<f64>,
    /// T x 4 noise power fractions in [0, 1].
    pub bap: Array2<f64>,
}

impl WorldFeatures {
    pub fn frames(&self) -> usize {
        self.f0.len()
    }

    pub fn truncated(&self, frames: usize) -> Self {
        let t = frames.min(self.frames());
        Self {
            f0: self.f0.truncated(t),
            mcep: self.mcep.slice(ndarray::s![..t, ..]).to_owned(),
            bap: self.bap.slice(ndarray::s![..t, ..]).to_owned(),
        }
    }
}

/// Voiced-frame statistics of natural-log F0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F0Stats {
    pub mean_logf0: f64,
    pub std_logf0: f64,
    pub voiced_count: usize,
}

pub fn f0_stats(f0: &F0Track) -> Result<F0Stats> {
    let logs: Vec<f64> = f0.values.iter().filter(|&&f| f > 0.0).map(|f| f.ln()).collect();
    if logs.len() < 2 {
        return Err(Error::InsufficientVoicing(logs.len()));
    }
    let n = logs.len() as f64;
    let mean = logs.iter().sum::<f64>() / n;
    let var = logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n;
    Ok(F0Stats {
        mean_logf0: mean,
        std_logf0: var.sqrt(),
        voiced_count: logs.len(),
    })
}

/// Affine map of one log-F0 value from `src` statistics onto `target`.
/// A flat source (zero deviation) collapses onto the target mean.
pub fn shift_log_f0(log_f0: f64, src: &F0Stats, target: &F0Stats) -> f64 {
    let scale = if src.std_logf0 > 0.0 {
        target.std_logf0 / src.std_logf0
    } else {
        0.0
    };
    target.mean_logf0 + (log_f0 - src.mean_logf0) * scale
}

/// Shifts voiced frames of `src` so their log-F0 mean and deviation match
/// `ref_stats`; unvoiced frames stay 0.
pub fn mean_variance_shift_f0(src: &F0Track, ref_stats: &F0Stats) -> Result<F0Track> {
    if !(ref_stats.std_logf0 >= 0.0) || !ref_stats.mean_logf0.is_finite() {
        return Err(Error::invalid("reference F0 statistics are not valid"));
    }
    let stats = f0_stats(src)?;
    Ok(F0Track::new(
        src.values
            .iter()
            .map(|&f| {
                if f > 0.0 {
                    shift_log_f0(f.ln(), &stats, ref_stats).exp()
                } else {
                    0.0
                }
            })
            .collect(),
    ))
}

/// Resynthesizes with the source pitch (shifted onto `ref_stats`) and the
/// converted waveform's envelope and aperiodicity.
pub fn postprocess_swap(
    src_wav: &Waveform,
    cvt_wav: &Waveform,
    ref_stats: &F0Stats,
    cfg: &FrameConfig,
) -> Result<Waveform> {
    let src = world_analyze(src_wav, cfg);
    let cvt = world_analyze(cvt_wav, cfg);
    let (ts, tc) = (src.frames(), cvt.frames());
    if ts.abs_diff(tc) > 1 {
        return Err(Error::FrameMismatch { a: ts, b: tc });
    }
    let t = ts.min(tc);
    if t == 0 {
        return Err(Error::invalid("source and converted audio have no overlapping frames"));
    }
    let f0 = mean_variance_shift_f0(&src.f0.truncated(t), ref_stats)?;
    let cvt = cvt.truncated(t);
    let feat = WorldFeatures {
        f0,
        mcep: cvt.mcep,
        bap: cvt.bap,
    };
    Ok(world_synthesize(&feat, cfg))
}

/// Shifts pitch by whole semitones, keeping envelope and aperiodicity.
pub fn pitch_shift_augment(wav: &Waveform, semitones: i32, cfg: &FrameConfig) -> Result<Waveform> {
    if !(-12..=12).contains(&semitones) {
        return Err(Error::invalid(format!(
            "pitch shift of {semitones} semitones outside -12..=12"
        )));
    }
    let mut feat = world_analyze(wav, cfg);
    let ratio = 2f64.powf(semitones as f64 / 12.0);
    for f in feat.f0.values.iter_mut() {
        if *f > 0.0 {
            *f *= ratio;
        }
    }
    Ok(world_synthesize(&feat, cfg))
}

pub const SRNW_MAGIC: [u8; 4] = *b"SRNW";
pub const SRNW_VERSION: u32 = 1;

/// SRNW container: magic, u32 version, then f0 (T x 1), mcep and bap as
/// SRNF blocks.
pub fn encode_srnw(feat: &WorldFeatures) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&SRNW_MAGIC);
    out.extend_from_slice(&SRNW_VERSION.to_le_bytes());
    let f0 = Array2::from_shape_vec((feat.frames(), 1), feat.f0.values.clone())
        .expect("column vector");
    encode_srnf(&mut out, &f0);
    encode_srnf(&mut out, &feat.mcep);
    encode_srnf(&mut out, &feat.bap);
    out
}

pub fn decode_srnw(bytes: &[u8], path: &Path) -> Result<WorldFeatures> {
    let mut r = bytes;
    if r.len() < 8 || r[..4] != SRNW_MAGIC {
        return Err(Error::format(path, "bad SRNW magic"));
    }
    r = &r[4..];
    let version = read_u32(&mut r)?;
    if version != SRNW_VERSION {
        return Err(Error::format(path, format!("unsupported SRNW version {version}")));
    }
    let f0 = decode_srnf(&mut r, path)?;
    let mcep = decode_srnf(&mut r, path)?;
    let bap = decode_srnf(&mut r, path)?;
    if f0.ncols() != 1 || mcep.nrows() != f0.nrows() || bap.nrows() != f0.nrows() {
        return Err(Error::format(path, "SRNW blocks disagree on frame count"));
    }
    Ok(WorldFeatures {
        f0: F0Track::new(f0.column(0).to_vec()),
        mcep,
        bap,
    })
}

pub fn write_srnw(path: &Path, feat: &WorldFeatures) -> Result<()> {
    write_atomic(path, &encode_srnw(feat))
}

pub fn read_srnw(path: &Path) -> Result<WorldFeatures> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    decode_srnw(&std::fs::read(path)?, path)
}

#[cfg(test)]
mod tests;
