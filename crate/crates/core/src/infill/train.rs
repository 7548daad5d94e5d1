use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::items::TrainingItem;
use super::mask::sample_mask;
use crate::error::{Error, Result};
use crate::flow::{grad_step, CFMConfig, Checkpoint, CondTracks, FlowModel, LossParts, MelNorm, TrainSample};

const STEP_SEED_MIX: u64 = 0x9e37_79b9_7f4a_7c15;

/// Batch and data settings of the training loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Training crops are at most this many frames long.
    pub crop_frames: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { batch_size: 4, crop_frames: 128, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.crop_frames < 4 {
            return Err(Error::invalid("batch_size must be >= 1 and crop_frames >= 4"));
        }
        Ok(())
    }
}

/// The random stream of one optimizer step depends only on the seed and
/// the step number, so resumed runs replay unbroken ones.
fn step_rng(seed: u64, step: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ step.wrapping_mul(STEP_SEED_MIX))
}

/// An item with its mel already standardized.
struct Prepared {
    mel: Array2<f64>,
    tracks: CondTracks,
}

fn prepare(items: &[TrainingItem], norm: &MelNorm) -> Result<Vec<Prepared>> {
    items
        .iter()
        .map(|it| {
            it.validate()?;
            Ok(Prepared { mel: norm.apply(&it.mel.data), tracks: it.tracks.clone() })
        })
        .collect()
}

fn make_sample(p: &Prepared, crop: usize, rng: &mut impl Rng) -> Result<TrainSample> {
    let total = p.mel.nrows();
    let len = total.min(crop);
    let start = rng.gen_range(0..=total - len);
    let x1 = p.mel.slice(s![start..start + len, ..]).to_owned();
    let mask = sample_mask(len, rng)?;
    let x0 = Array2::from_shape_simple_fn(x1.raw_dim(), || rng.sample(StandardNormal));
    let t = rng.gen_range(0.0..1.0);
    Ok(TrainSample {
        x1,
        tracks: p.tracks.slice(start, start + len),
        style_mel: p.mel.clone(),
        mask,
        x0,
        t,
    })
}

/// Per item: random crop, random mask span, Gaussian `x0` and uniform `t`.
/// The visible mel is derived from the crop inside the loss; the tracks are
/// copied unmasked and the style source is the item's full mel.
pub fn assemble_batch(
    items: &[&TrainingItem],
    norm: &MelNorm,
    cfg: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<Vec<TrainSample>> {
    items
        .iter()
        .map(|it| {
            it.validate()?;
            let p = Prepared { mel: norm.apply(&it.mel.data), tracks: it.tracks.clone() };
            make_sample(&p, cfg.crop_frames, rng)
        })
        .collect()
}

fn batch_step(ckpt: &mut Checkpoint, samples: &[TrainSample]) -> Result<LossParts> {
    let model = &ckpt.model;
    let results: Vec<_> = samples.par_iter().map(|s| model.loss_and_grads(s)).collect();
    let mut losses = Vec::with_capacity(results.len());
    let mut total = None;
    for r in results {
        let (l, g) = r?;
        losses.push(l);
        match &mut total {
            None => total = Some(g),
            Some(acc) => acc.add_assign(&g),
        }
    }
    let mut grads = total.ok_or_else(|| Error::invalid("empty batch"))?;
    grads.scale(1.0 / samples.len() as f64);
    let lr = ckpt.model.cfg.learning_rate;
    grad_step(&mut ckpt.model.params, &grads, &mut ckpt.adam, lr)?;
    Ok(LossParts::mean(&losses))
}

/// Continues training. With a non-empty `cyclic` set, odd batch slots draw
/// from it and even slots from `natural`; otherwise every slot is natural.
pub fn train_steps(
    ckpt: &mut Checkpoint,
    natural: &[TrainingItem],
    cyclic: &[TrainingItem],
    cfg: &TrainConfig,
    steps: usize,
) -> Result<()> {
    cfg.validate()?;
    if natural.is_empty() {
        return Err(Error::invalid("training needs at least one natural item"));
    }
    let norm = ckpt.model.norm;
    let nat = prepare(natural, &norm)?;
    let cyc = prepare(cyclic, &norm)?;
    for _ in 0..steps {
        let step = ckpt.adam.step + 1;
        let mut rng = step_rng(cfg.seed, step);
        let mut samples = Vec::with_capacity(cfg.batch_size);
        for slot in 0..cfg.batch_size {
            let pool = if !cyc.is_empty() && slot % 2 == 1 { &cyc } else { &nat };
            let p = &pool[rng.gen_range(0..pool.len())];
            samples.push(make_sample(p, cfg.crop_frames, &mut rng)?);
        }
        let loss = batch_step(ckpt, &samples).map_err(|e| match e {
            Error::Numeric(msg) => Error::Numeric(format!("training step {step}: {msg}")),
            other => other,
        })?;
        if !loss.total.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss at training step {step}")));
        }
        if step.is_multiple_of(100) {
            log::info!("step {step}: loss {:.4} (cfm {:.4}, prior {:.4})", loss.total, loss.cfm, loss.prior);
        }
        let r = |v: f64| v as f32 as f64;
        ckpt.history.push(LossParts { total: r(loss.total), cfm: r(loss.cfm), prior: r(loss.prior) });
    }
    Ok(())
}

/// Fresh model whose mel normalization is fitted on `items`.
pub fn init_checkpoint(items: &[TrainingItem], cfg: CFMConfig, seed: u64) -> Result<Checkpoint> {
    if items.is_empty() {
        return Err(Error::invalid("corpus is empty"));
    }
    let mut model = FlowModel::new(cfg, seed)?;
    if let Some(it) = items.iter().find(|it| it.mel.n_mels() != cfg.n_mels) {
        return Err(Error::ShapeMismatch {
            expected: format!("{} mel channels", cfg.n_mels),
            got: format!("{} in {}", it.mel.n_mels(), it.id),
        });
    }
    model.norm = MelNorm::fit(items.iter().map(|it| &it.mel))?;
    Ok(Checkpoint::new(model))
}

/// Trains a fresh model for `steps` steps.
pub fn train(items: &[TrainingItem], cfg: CFMConfig, tcfg: &TrainConfig, steps: usize) -> Result<Checkpoint> {
    let mut ckpt = init_checkpoint(items, cfg, tcfg.seed)?;
    train_steps(&mut ckpt, items, &[], tcfg, steps)?;
    Ok(ckpt)
}

/// Fine-tunes on a 1:1 mix of natural and cyclic items.
pub fn finetune_cyclic(
    ckpt: &Checkpoint,
    natural: &[TrainingItem],
    cyclic: &[TrainingItem],
    tcfg: &TrainConfig,
    steps: usize,
) -> Result<Checkpoint> {
    let mut out = ckpt.clone();
    train_steps(&mut out, natural, cyclic, tcfg, steps)?;
    Ok(out)
}

/// Mean masked losses over fixed random crops, masks, noise and times.
pub fn held_out_loss(
    model: &FlowModel,
    items: &[TrainingItem],
    tcfg: &TrainConfig,
    draws: usize,
    seed: u64,
) -> Result<LossParts> {
    if items.is_empty() || draws == 0 {
        return Err(Error::invalid("held-out evaluation needs items and draws"));
    }
    let prepared = prepare(items, &model.norm)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::new();
    for p in &prepared {
        for _ in 0..draws {
            samples.push(make_sample(p, tcfg.crop_frames, &mut rng)?);
        }
    }
    let losses: Result<Vec<LossParts>> = samples.par_iter().map(|s| model.evaluate(s)).collect();
    Ok(LossParts::mean(&losses?))
}
