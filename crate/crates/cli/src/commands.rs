use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use singstyle_core::dsp::wav::{read_wav, write_wav};
use singstyle_core::dsp::{extract_f0, Waveform};
use singstyle_core::eval::{all_pairs, embedding_fad, evaluate_with_outputs, EvalClip};
use singstyle_core::flow::{Checkpoint, LossParts};
use singstyle_core::formats::write_srnf;
use singstyle_core::infill::manifest::{read_cyclic_manifest, write_cyclic_manifest, ClipRecord, CyclicRecord};
use singstyle_core::infill::{
    convert, finetune_cyclic, generate_cyclic_outputs, init_checkpoint, train_steps, ClipFeatures,
    ConversionRequest, Provenance, TrainingItem,
};
use singstyle_core::synthdata::{default_styles, make_corpus};
use singstyle_core::world::{f0_stats, pitch_shift_augment, postprocess_swap};

use crate::config::RunConfig;
use crate::corpus::{feature_path, load_corpus, LoadedClip};
use crate::exit::Usage;

pub const CYCLIC_MANIFEST: &str = "cyclic.tsv";

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| Usage(format!("no {what} given (flag or config key)")).into())
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn last_loss(history: &[LossParts]) -> String {
    let tail = &history[history.len().saturating_sub(100)..];
    if tail.is_empty() {
        return "no steps".into();
    }
    let m = LossParts::mean(tail);
    format!("mean loss over last {} steps {:.4} (cfm {:.4}, prior {:.4})", tail.len(), m.total, m.cfm, m.prior)
}

pub fn synth_corpus(cfg: &RunConfig) -> Result<()> {
    let dir = required(&cfg.corpus_dir, "output directory")?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let records = make_corpus(dir, cfg.n_songs, cfg.notes_per_song, &default_styles(), &mut rng, &cfg.frame)?;
    println!("wrote {} clips to {}", records.len(), dir.display());
    Ok(())
}

pub fn extract(cfg: &RunConfig) -> Result<()> {
    let dir = required(&cfg.corpus_dir, "corpus directory")?;
    let cache = required(&cfg.cache_dir, "cache directory")?;
    let clips = load_corpus(dir, None, &cfg.frame)?;
    clips
        .par_iter()
        .map(|c| c.features.save(&feature_path(cache, &c.record.clip_id)))
        .collect::<singstyle_core::Result<Vec<()>>>()?;
    println!("extracted features of {} clips into {}", clips.len(), cache.display());
    Ok(())
}

fn natural_items(cfg: &RunConfig) -> Result<Vec<LoadedClip>> {
    let dir = required(&cfg.corpus_dir, "corpus directory")?;
    load_corpus(dir, cfg.cache_dir.as_deref(), &cfg.frame)
}

pub fn train(cfg: &RunConfig, resume: bool) -> Result<()> {
    let out = required(&cfg.checkpoint, "checkpoint path")?;
    let items: Vec<TrainingItem> = natural_items(cfg)?.iter().map(LoadedClip::item).collect();
    let mut ckpt = if resume && out.exists() {
        let c = load_checkpoint(out)?;
        log::info!("resuming from step {}", c.steps());
        c
    } else {
        init_checkpoint(&items, cfg.model, cfg.seed)?
    };
    train_steps(&mut ckpt, &items, &[], &cfg.train_config(), cfg.steps)?;
    ckpt.save(out)?;
    println!("trained to step {}: {}", ckpt.steps(), last_loss(&ckpt.history));
    Ok(())
}

pub fn cycle_gen(cfg: &RunConfig, out: &Path) -> Result<()> {
    let ckpt = load_checkpoint(required(&cfg.checkpoint, "checkpoint path")?)?;
    let clips = natural_items(cfg)?;
    let entries: Vec<_> = clips.iter().map(LoadedClip::entry).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let settings = cfg.convert_settings();
    let outputs = generate_cyclic_outputs(&ckpt.model, &entries, &settings, &cfg.frame, &mut rng)?;
    let mut records = Vec::with_capacity(outputs.len());
    for o in &outputs {
        let Provenance::Cyclic { source, reference } = &o.item.provenance else { unreachable!("cyclic output") };
        let src = &clips.iter().find(|c| &c.record.clip_id == source).expect("source clip").record;
        let wav_path = format!("wav/{}.wav", o.item.id);
        write_wav(&out.join(&wav_path), &o.wav)?;
        let features = ClipFeatures {
            mel: o.item.mel.clone(),
            tracks: o.item.tracks.clone(),
            f0: extract_f0(&o.wav, &cfg.frame).truncated(o.item.frames()),
        };
        features.save(&feature_path(&out.join("feat"), &o.item.id))?;
        records.push(CyclicRecord {
            clip: ClipRecord { clip_id: o.item.id.clone(), wav_path, style: src.style.clone(), song_id: src.song_id.clone(), phrase_id: src.phrase_id },
            source_clip: source.clone(),
            reference_clip: reference.clone(),
        });
    }
    write_cyclic_manifest(&out.join(CYCLIC_MANIFEST), &records)?;
    println!("generated {} of {} cyclic items in {}", records.len(), entries.len(), out.display());
    Ok(())
}

pub fn load_cyclic(dir: &Path, hop: usize) -> Result<Vec<TrainingItem>> {
    read_cyclic_manifest(&dir.join(CYCLIC_MANIFEST))?
        .into_iter()
        .map(|r| {
            let f = ClipFeatures::load(&feature_path(&dir.join("feat"), &r.clip.clip_id), hop)?;
            Ok(TrainingItem {
                id: r.clip.clip_id,
                mel: f.mel,
                tracks: f.tracks,
                style_label: r.clip.style,
                provenance: Provenance::Cyclic { source: r.source_clip, reference: r.reference_clip },
            })
        })
        .collect()
}

pub fn finetune(cfg: &RunConfig, cyclic_dir: &Path, out: &Path) -> Result<()> {
    let ckpt = load_checkpoint(required(&cfg.checkpoint, "checkpoint path")?)?;
    let natural: Vec<TrainingItem> = natural_items(cfg)?.iter().map(LoadedClip::item).collect();
    let cyclic = load_cyclic(cyclic_dir, cfg.frame.hop)?;
    let tuned = finetune_cyclic(&ckpt, &natural, &cyclic, &cfg.train_config(), cfg.finetune_steps)?;
    tuned.save(out)?;
    println!("fine-tuned to step {}: {}", tuned.steps(), last_loss(&tuned.history));
    Ok(())
}

fn fit_length(mut w: Waveform, len: usize) -> Waveform {
    w.samples.resize(len, 0.0);
    w
}

pub fn convert_cmd(cfg: &RunConfig, src: &Path, reference: &Path, out: &Path, mel_out: Option<&Path>) -> Result<()> {
    let ckpt = load_checkpoint(required(&cfg.checkpoint, "checkpoint path")?)?;
    let req = ConversionRequest { source: read_wav(src)?, reference: read_wav(reference)?, settings: cfg.convert_settings() };
    let result = convert(&req, &ckpt.model, &cfg.frame)?;
    write_wav(out, &result.wav.clipped())?;
    if let Some(p) = mel_out {
        write_srnf(p, &result.mel.data)?;
    }
    println!("wrote {} ({:.2} s)", out.display(), req.source.duration_secs());
    Ok(())
}

pub fn postprocess(cfg: &RunConfig, src: &Path, converted: &Path, reference: &Path, out: &Path) -> Result<()> {
    let (s, c, r) = (read_wav(src)?, read_wav(converted)?, read_wav(reference)?);
    let stats = f0_stats(&extract_f0(&r, &cfg.frame)).context("reference pitch statistics")?;
    let w = fit_length(postprocess_swap(&s, &c, &stats, &cfg.frame)?, s.len());
    write_wav(out, &w.clipped())?;
    println!("wrote {}", out.display());
    Ok(())
}

pub struct EvalArgs<'a> {
    pub test_dir: &'a Path,
    pub refs_dir: Option<&'a Path>,
    pub report: &'a Path,
    pub csv: Option<&'a Path>,
    pub export: Option<&'a Path>,
    pub embeddings: Option<&'a Path>,
}

fn eval_clips(dir: &Path, cfg: &RunConfig) -> Result<Vec<EvalClip>> {
    Ok(load_corpus(dir, None, &cfg.frame)?
        .into_iter()
        .map(|c| EvalClip { id: c.record.clip_id, song_id: c.record.song_id, style: c.record.style, wav: c.wav, features: c.features })
        .collect())
}

/// The first clip of each style, in manifest order.
fn fixed_references(clips: &[EvalClip]) -> Vec<EvalClip> {
    let mut refs: Vec<EvalClip> = Vec::new();
    for c in clips {
        if !refs.iter().any(|r| r.style == c.style) {
            refs.push(c.clone());
        }
    }
    refs
}

pub fn evaluate(cfg: &RunConfig, args: &EvalArgs) -> Result<()> {
    let ckpt = load_checkpoint(required(&cfg.checkpoint, "checkpoint path")?)?;
    let test = eval_clips(args.test_dir, cfg)?;
    let refs = match args.refs_dir {
        Some(d) => fixed_references(&eval_clips(d, cfg)?),
        None => fixed_references(&test),
    };
    let pairs = all_pairs(&test);
    let (mut report, outputs) = evaluate_with_outputs(&test, &pairs, &refs, &ckpt.model, &cfg.convert_settings(), &cfg.frame)?;
    if let Some(dir) = args.export {
        for (r, conv) in report.records.iter().zip(&outputs) {
            write_wav(&dir.join(format!("{}.wav", r.pair_id())), &conv.wav.clone().clipped())?;
        }
    }
    if let Some(dir) = args.embeddings {
        let converted: Vec<String> = report.records.iter().map(|r| r.pair_id()).collect();
        let natural: Vec<String> = test.iter().map(|c| c.id.clone()).collect();
        report.fad = Some(embedding_fad(dir, &converted, &natural)?);
    }
    report.write_tsv(args.report)?;
    if let Some(p) = args.csv {
        report.write_csv(p)?;
    }
    println!("evaluated {} pairs ({} failed) into {}", report.attempted(), report.failures.len(), args.report.display());
    Ok(())
}

pub fn augment(cfg: &RunConfig, input: &Path, semitones: i32, out: &Path) -> Result<()> {
    let wav = read_wav(input)?;
    let shifted = pitch_shift_augment(&wav, semitones, &cfg.frame)?;
    write_wav(out, &shifted.clipped())?;
    println!("wrote {} shifted by {semitones} semitones", out.display());
    Ok(())
}
