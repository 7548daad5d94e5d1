use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;
use singstyle_core::dsp::wav::read_wav;
use singstyle_core::dsp::{FrameConfig, Waveform};
use singstyle_core::infill::manifest::{read_manifest, ClipRecord};
use singstyle_core::infill::{extract_features, ClipFeatures, CorpusEntry, TrainingItem};

pub const MANIFEST: &str = "manifest.tsv";

#[derive(Debug, Clone)]
pub struct LoadedClip {
    pub record: ClipRecord,
    pub wav: Waveform,
    pub features: ClipFeatures,
}

impl LoadedClip {
    pub fn item(&self) -> TrainingItem {
        TrainingItem::natural(&self.record.clip_id, &self.record.style, &self.features)
    }

    pub fn entry(&self) -> CorpusEntry {
        CorpusEntry { item: self.item(), wav: self.wav.clone(), features: self.features.clone() }
    }
}

pub fn feature_path(cache: &Path, clip_id: &str) -> PathBuf {
    cache.join(format!("{clip_id}.srnf"))
}

/// Reads the manifest and audio of `dir`; features come from `cache` when
/// given, otherwise they are extracted.
pub fn load_corpus(dir: &Path, cache: Option<&Path>, cfg: &FrameConfig) -> Result<Vec<LoadedClip>> {
    let records = read_manifest(&dir.join(MANIFEST)).with_context(|| format!("corpus {}", dir.display()))?;
    records
        .into_par_iter()
        .map(|record| {
            let path = dir.join(&record.wav_path);
            let wav = read_wav(&path).with_context(|| format!("clip {}", record.clip_id))?;
            let features = match cache {
                Some(c) => ClipFeatures::load(&feature_path(c, &record.clip_id), cfg.hop),
                None => extract_features(&wav, cfg),
            }
            .with_context(|| format!("features of {}", record.clip_id))?;
            Ok(LoadedClip { record, wav, features })
        })
        .collect()
}
