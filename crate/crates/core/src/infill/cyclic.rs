use rand::Rng;
use rayon::prelude::*;

use super::convert::{convert_with_features, ConvertSettings};
use super::items::{extract_features, ClipFeatures, Provenance, TrainingItem};
use crate::dsp::{FrameConfig, Waveform};
use crate::error::{Error, Result};
use crate::flow::FlowModel;

/// A corpus clip with its audio and analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEntry {
    pub item: TrainingItem,
    pub wav: Waveform,
    pub features: ClipFeatures,
}

/// One cyclic training item with the converted audio it was analysed from.
#[derive(Debug, Clone, PartialEq)]
pub struct CyclicOutput {
    pub item: TrainingItem,
    pub wav: Waveform,
}

/// Converts every item with a reference drawn uniformly from a uniformly
/// chosen other style, and pairs the converted conditioning tracks with
/// the original source mel. Items whose conversion fails are skipped.
pub fn generate_cyclic_set(
    model: &FlowModel,
    corpus: &[CorpusEntry],
    settings: &ConvertSettings,
    cfg: &FrameConfig,
    rng: &mut impl Rng,
) -> Result<Vec<TrainingItem>> {
    Ok(generate_cyclic_outputs(model, corpus, settings, cfg, rng)?.into_iter().map(|o| o.item).collect())
}

/// As [`generate_cyclic_set`], keeping each converted waveform.
pub fn generate_cyclic_outputs(
    model: &FlowModel,
    corpus: &[CorpusEntry],
    settings: &ConvertSettings,
    cfg: &FrameConfig,
    rng: &mut impl Rng,
) -> Result<Vec<CyclicOutput>> {
    let mut styles: Vec<&str> = corpus.iter().map(|e| e.item.style_label.as_str()).collect();
    styles.sort_unstable();
    styles.dedup();
    if styles.len() < 2 {
        return Err(Error::invalid("cyclic generation needs at least two styles"));
    }
    let mut plan = Vec::with_capacity(corpus.len());
    for (i, e) in corpus.iter().enumerate() {
        let others: Vec<&str> = styles.iter().copied().filter(|s| *s != e.item.style_label).collect();
        let style = others[rng.gen_range(0..others.len())];
        let refs: Vec<usize> = (0..corpus.len()).filter(|&j| corpus[j].item.style_label == style).collect();
        let r = refs[rng.gen_range(0..refs.len())];
        plan.push((i, r, rng.gen::<u64>()));
    }
    let out: Vec<Option<CyclicOutput>> = plan
        .par_iter()
        .map(|&(i, r, seed)| {
            let (src, reference) = (&corpus[i], &corpus[r]);
            let s = ConvertSettings { seed, postprocess: false, ..*settings };
            let converted = convert_with_features(model, &src.wav, &src.features, &reference.features, &s, cfg)
                .and_then(|c| extract_features(&c.wav, cfg).map(|f| (c.wav, f)));
            let (wav, feat) = match converted {
                Ok(x) => x,
                Err(e) => {
                    log::warn!("cyclic conversion of {} with {} failed: {e}", src.item.id, reference.item.id);
                    return None;
                }
            };
            let t = src.item.frames();
            if feat.frames().abs_diff(t) > 1 {
                log::warn!("cyclic item {} has {} frames, source {t}", src.item.id, feat.frames());
                return None;
            }
            let n = t.min(feat.frames());
            let item = TrainingItem {
                id: format!("{}__{}", src.item.id, reference.item.id),
                mel: src.item.mel.slice_frames(0, n),
                tracks: feat.tracks.slice(0, n),
                style_label: src.item.style_label.clone(),
                provenance: Provenance::Cyclic { source: src.item.id.clone(), reference: reference.item.id.clone() },
            };
            Some(CyclicOutput { item, wav })
        })
        .collect();
    Ok(out.into_iter().flatten().collect())
}
