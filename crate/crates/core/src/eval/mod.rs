//! Objective conversion metrics, the all-pairs protocol and reports.

mod fad;
mod metrics;
mod report;

use rayon::prelude::*;

use crate::dsp::{extract_f0, stft_mel, FrameConfig, Waveform};
use crate::error::{Error, Result};
use crate::flow::FlowModel;
use crate::infill::{convert_with_features, ClipFeatures, Conversion, ConvertSettings};
use crate::synthdata::{style_proxy_metrics, StyleMetrics};
use crate::world::{f0_stats, mean_variance_shift_f0};

pub use fad::{embedding_fad, frechet_distance, load_embeddings};
pub use metrics::{f0_rmse_cents, mel_distance, style_proxy_distance, vuv_error, FRAME_SLACK};
pub use report::{EvalReport, MetricSummary, PairFailure, PairRecord};

/// One clip of a parallel test corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalClip {
    pub id: String,
    pub song_id: String,
    pub style: String,
    pub wav: Waveform,
    pub features: ClipFeatures,
}

/// A planned conversion of `source` (index into the test clips) towards
/// `target_style`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalPair {
    pub source: usize,
    pub target_style: String,
}

/// Every clip towards every other style present in the set, in clip order
/// and then style order: `clips × (styles − 1)` pairs.
pub fn all_pairs(clips: &[EvalClip]) -> Vec<EvalPair> {
    let mut styles: Vec<&str> = clips.iter().map(|c| c.style.as_str()).collect();
    styles.sort_unstable();
    styles.dedup();
    clips
        .iter()
        .enumerate()
        .flat_map(|(i, c)| {
            styles
                .iter()
                .filter(move |s| **s != c.style)
                .map(move |s| EvalPair { source: i, target_style: s.to_string() })
        })
        .collect()
}

fn evaluate_pair(
    model: &FlowModel,
    src: &EvalClip,
    reference: &EvalClip,
    target: &EvalClip,
    ref_metrics: &StyleMetrics,
    src_metrics: &StyleMetrics,
    settings: &ConvertSettings,
    cfg: &FrameConfig,
) -> Result<(PairRecord, Conversion)> {
    let conversion = convert_with_features(model, &src.wav, &src.features, &reference.features, settings, cfg)?;
    let out_mel = stft_mel(&conversion.wav, cfg)?;
    let out_f0 = extract_f0(&conversion.wav, cfg);
    let shifted = mean_variance_shift_f0(&src.features.f0, &f0_stats(&reference.features.f0)?)?;
    let m = style_proxy_metrics(&conversion.wav)?;
    let record = PairRecord {
        source: src.id.clone(),
        target_style: target.style.clone(),
        reference: reference.id.clone(),
        target: target.id.clone(),
        mel_distance: mel_distance(&out_mel, &target.features.mel)?,
        f0_rmse_cents: f0_rmse_cents(&out_f0, &target.features.f0)?,
        vuv_error: vuv_error(&out_f0, &target.features.f0)?,
        f0_rmse_shifted_cents: f0_rmse_cents(&out_f0, &shifted)?,
        style_proxy_distance_to_ref: style_proxy_distance(&m, ref_metrics),
        style_proxy_distance_to_src: style_proxy_distance(&m, src_metrics),
        output_nhr: m.nhr,
    };
    if record.metrics().iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::NonFinite(0));
    }
    Ok((record, conversion))
}

/// Converts every pair with the fixed reference of its target style and
/// scores the output against the parallel target rendition and the source.
/// Pair-level failures are recorded, not raised; pair `k` uses seed
/// `settings.seed + k`.
pub fn evaluate_conversion(
    test: &[EvalClip],
    pairs: &[EvalPair],
    references: &[EvalClip],
    model: &FlowModel,
    settings: &ConvertSettings,
    cfg: &FrameConfig,
) -> Result<EvalReport> {
    evaluate_with_outputs(test, pairs, references, model, settings, cfg).map(|(r, _)| r)
}

/// As [`evaluate_conversion`], also returning each successful conversion
/// (in record order) for export to external embedding models.
pub fn evaluate_with_outputs(
    test: &[EvalClip],
    pairs: &[EvalPair],
    references: &[EvalClip],
    model: &FlowModel,
    settings: &ConvertSettings,
    cfg: &FrameConfig,
) -> Result<(EvalReport, Vec<Conversion>)> {
    for p in pairs {
        if p.source >= test.len() {
            return Err(Error::invalid(format!("pair source {} out of range", p.source)));
        }
        if !references.iter().any(|r| r.style == p.target_style) {
            return Err(Error::invalid(format!("no reference clip for style {:?}", p.target_style)));
        }
    }
    let metrics_of = |c: &EvalClip| style_proxy_metrics(&c.wav).map_err(|e| format!("{}: {e}", c.id));
    let ref_metrics: Vec<_> = references.par_iter().map(metrics_of).collect();
    let src_metrics: Vec<_> = test.par_iter().map(metrics_of).collect();

    let results: Vec<std::result::Result<(PairRecord, Conversion), PairFailure>> = pairs
        .par_iter()
        .enumerate()
        .map(|(k, p)| {
            let src = &test[p.source];
            let fail = |reason: String| PairFailure {
                source: src.id.clone(),
                target_style: p.target_style.clone(),
                reason,
            };
            let ri = references.iter().position(|r| r.style == p.target_style).expect("checked above");
            let target = test
                .iter()
                .find(|c| c.song_id == src.song_id && c.style == p.target_style)
                .ok_or_else(|| fail(format!("no {} rendition of {}", p.target_style, src.song_id)))?;
            let rm = ref_metrics[ri].as_ref().map_err(|e| fail(e.clone()))?;
            let sm = src_metrics[p.source].as_ref().map_err(|e| fail(e.clone()))?;
            let s = ConvertSettings { seed: settings.seed.wrapping_add(k as u64), ..*settings };
            evaluate_pair(model, src, &references[ri], target, rm, sm, &s, cfg)
                .map_err(|e| fail(e.to_string()))
        })
        .collect();

    let mut report = EvalReport::default();
    let mut outputs = Vec::new();
    for r in results {
        match r {
            Ok((rec, conv)) => {
                report.records.push(rec);
                outputs.push(conv);
            }
            Err(f) => {
                log::warn!("pair {} failed: {}", report::pair_id(&f.source, &f.target_style), f.reason);
                report.failures.push(f);
            }
        }
    }
    Ok((report, outputs))
}

#[cfg(test)]
mod tests;
