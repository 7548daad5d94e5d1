use ndarray::{concatenate, s, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::items::{extract_features, ClipFeatures};
use crate::dsp::{FrameConfig, MelInverter, MelSpectrogram, Waveform, DEFAULT_GL_ITERS};
use crate::error::{Error, Result};
use crate::flow::FlowModel;
use crate::world::{f0_stats, postprocess_swap};

pub const MIN_CONVERSION_SECS: f64 = 0.5;

/// Inference settings shared by every conversion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvertSettings {
    pub euler_steps: usize,
    pub gl_iters: usize,
    pub postprocess: bool,
    /// Seed of the initial Gaussian sample.
    pub seed: u64,
}

impl Default for ConvertSettings {
    fn default() -> Self {
        Self { euler_steps: 32, gl_iters: DEFAULT_GL_ITERS, postprocess: false, seed: 0 }
    }
}

/// Source and reference audio for one conversion.
#[derive(Debug, Clone, PartialEq)]
pub struct ConversionRequest {
    pub source: Waveform,
    pub reference: Waveform,
    pub settings: ConvertSettings,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conversion {
    pub mel: MelSpectrogram,
    pub wav: Waveform,
}

fn check_duration(w: &Waveform) -> Result<()> {
    let need = (MIN_CONVERSION_SECS * w.sample_rate as f64).ceil() as usize;
    if w.len() < need {
        return Err(Error::TooShort { len: w.len(), need });
    }
    Ok(())
}

/// Generates the source part of `[reference || source]` with the source
/// mel hidden, in log-mel units. Output has exactly the source frame count.
pub fn convert_features(
    model: &FlowModel,
    source: &ClipFeatures,
    reference: &ClipFeatures,
    euler_steps: usize,
    seed: u64,
) -> Result<MelSpectrogram> {
    let (tr, ts) = (reference.frames(), source.frames());
    if tr == 0 || ts == 0 {
        return Err(Error::invalid("conversion needs non-empty source and reference"));
    }
    let ref_mel = model.norm.apply(&reference.mel.data);
    let style = model.style_forward(&ref_mel)?;
    let visible = concatenate(Axis(0), &[ref_mel.view(), Array2::zeros((ts, ref_mel.ncols())).view()])
        .expect("equal mel widths");
    let tracks = reference.tracks.concat(&source.tracks);
    let cond = model.bundle(tracks, visible, style)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0 = Array2::from_shape_simple_fn((tr + ts, model.cfg.n_mels), || rng.sample(StandardNormal));
    let out = model.generate(&cond, &x0, euler_steps)?;
    let generated = out.slice(s![tr.., ..]).to_owned();
    Ok(MelSpectrogram::new(model.norm.invert(&generated), source.mel.hop))
}

fn fit_length(mut w: Waveform, len: usize) -> Waveform {
    w.samples.resize(len, 0.0);
    w
}

/// Converts with precomputed features; waveforms are only needed for
/// the optional pitch post-processing and the output length.
pub fn convert_with_features(
    model: &FlowModel,
    source_wav: &Waveform,
    source: &ClipFeatures,
    reference: &ClipFeatures,
    settings: &ConvertSettings,
    cfg: &FrameConfig,
) -> Result<Conversion> {
    let mel = convert_features(model, source, reference, settings.euler_steps, settings.seed)?;
    let wav = MelInverter::new(cfg).invert(&mel, settings.gl_iters.max(1));
    let mut wav = fit_length(wav, source_wav.len());
    if settings.postprocess {
        let stats = f0_stats(&reference.f0)?;
        wav = fit_length(postprocess_swap(source_wav, &wav, &stats, cfg)?, source_wav.len());
    }
    Ok(Conversion { mel, wav })
}

/// Full conversion from audio: features, generation, Griffin-Lim and
/// optional F0 swap with the source pitch shifted onto the reference.
pub fn convert(req: &ConversionRequest, model: &FlowModel, cfg: &FrameConfig) -> Result<Conversion> {
    check_duration(&req.source)?;
    check_duration(&req.reference)?;
    let src = extract_features(&req.source, cfg)?;
    let reference = extract_features(&req.reference, cfg)?;
    convert_with_features(model, &req.source, &src, &reference, &req.settings, cfg)
}
