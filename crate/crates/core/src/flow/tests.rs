use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::*;
use crate::infill::Mask;

fn small_cfg() -> CFMConfig {
    CFMConfig {
        n_mels: 6,
        channels: 8,
        style_dim: 5,
        style_tokens: 4,
        head_dim: 8,
        ..CFMConfig::default()
    }
}

fn normal(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((r, c), || rng.sample(StandardNormal))
}

fn tracks(rng: &mut ChaCha8Rng, t: usize) -> CondTracks {
    CondTracks::new(
        normal(rng, t, 13),
        (0..t).map(|_| rng.gen_range(55..70)).collect(),
        (0..t).map(|_| rng.gen_range(-60.0..0.0)).collect(),
    )
    .unwrap()
}

fn sample(rng: &mut ChaCha8Rng, t: usize, d: usize) -> TrainSample {
    TrainSample {
        x1: normal(rng, t, d),
        tracks: tracks(rng, t),
        style_mel: normal(rng, t + 3, d),
        mask: Mask::new(t, 2, t - 1).unwrap(),
        x0: normal(rng, t, d),
        t: rng.gen_range(0.0..1.0),
    }
}

/// Every parameter jittered so no gradient path is trivially zero.
fn randomized_model(seed: u64) -> FlowModel {
    let mut m = FlowModel::new(small_cfg(), seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    for id in m.params.ids().collect::<Vec<_>>() {
        m.params.get_mut(id).mapv_inplace(|v| v + 0.3 * rng.gen_range(-1.0..1.0));
    }
    m
}

fn directional_errors(net: &str, probes: usize) -> Vec<f64> {
    let mut model = randomized_model(7);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let ids = model.network_params(net);
    let mut errs = Vec::new();
    for _ in 0..probes {
        let s = sample(&mut rng, 9, 6);
        let (_, grads) = model.loss_and_grads(&s).unwrap();
        let dirs: Vec<Array2<f64>> = ids
            .iter()
            .map(|&id| normal(&mut rng, model.params.get(id).nrows(), model.params.get(id).ncols()))
            .collect();
        let analytic: f64 = ids.iter().zip(&dirs).map(|(&id, d)| (grads.get(id) * d).sum()).sum();
        let h = 1e-4;
        let mut shifted = |sign: f64| {
            for (&id, d) in ids.iter().zip(&dirs) {
                model.params.get_mut(id).scaled_add(sign * h, d);
            }
            let parts = model.evaluate(&s).unwrap();
            // The prior feeds the field detached, so its gradient is that of its own loss.
            let l = if net == "prior" { parts.prior } else { parts.total };
            for (&id, d) in ids.iter().zip(&dirs) {
                model.params.get_mut(id).scaled_add(-sign * h, d);
            }
            l
        };
        let numeric = (shifted(1.0) - shifted(-1.0)) / (2.0 * h);
        errs.push((analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8));
    }
    errs
}

#[test]
fn vector_field_gradients() {
    let errs = directional_errors("vf", 12);
    assert!(errs.iter().all(|&e| e < 1e-4), "{errs:?}");
}

#[test]
fn prior_gradients() {
    let errs = directional_errors("prior", 12);
    assert!(errs.iter().all(|&e| e < 1e-4), "{errs:?}");
}

#[test]
fn style_gradients() {
    let errs = directional_errors("style", 12);
    assert!(errs.iter().all(|&e| e < 1e-4), "{errs:?}");
}

fn bundle_for(model: &FlowModel, rng: &mut ChaCha8Rng, t: usize) -> ConditioningBundle {
    let d = model.cfg.n_mels;
    let style = Array1::from_iter((0..model.cfg.style_dim).map(|_| rng.gen_range(-1.0..1.0)));
    model.bundle(tracks(rng, t), normal(rng, t, d), style).unwrap()
}

#[test]
fn fresh_model_outputs_zero() {
    let model = FlowModel::new(small_cfg(), 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cond = bundle_for(&model, &mut rng, 11);
    let x = normal(&mut rng, 11, 6);
    let v = model.vf_forward(&x, 0.3, &cond).unwrap();
    assert_eq!(v.dim(), (11, 6));
    assert!(v.iter().all(|&a| a == 0.0));
}

#[test]
fn forward_deterministic_and_shape_preserving() {
    let model = randomized_model(4);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for t in [1usize, 2, 5, 16] {
        let cond = bundle_for(&model, &mut rng, t);
        let x = normal(&mut rng, t, 6);
        let a = model.vf_forward(&x, 0.5, &cond).unwrap();
        let b = model.vf_forward(&x, 0.5, &cond).unwrap();
        assert_eq!(a.dim(), x.dim());
        assert_eq!(a, b);
        let mut c2 = cond.clone();
        c2.style = &c2.style + 0.0;
        assert_eq!(model.vf_forward(&x, 0.5, &c2).unwrap(), a);
    }
    let m2 = randomized_model(4);
    assert_eq!(model, m2);
}

#[test]
fn frame_misalignment_rejected() {
    let model = FlowModel::new(small_cfg(), 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cond = bundle_for(&model, &mut rng, 10);
    let x = normal(&mut rng, 9, 6);
    assert!(matches!(model.vf_forward(&x, 0.1, &cond), Err(crate::Error::FrameMismatch { .. })));
}

#[test]
fn zero_net_cfm_loss() {
    let cfg = CFMConfig { sigma_min: 0.0, ..small_cfg() };
    let model = FlowModel::new(cfg, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (x0, x1) = (normal(&mut rng, 10, 6), normal(&mut rng, 10, 6));
    let mask = Mask::new(10, 3, 8).unwrap();
    let cond = bundle_for(&model, &mut rng, 10);
    let loss = cfm_loss(&model, &x1, &cond, &mask, &x0, 0.4).unwrap();
    let mut expect = 0.0;
    for f in 3..8 {
        for d in 0..6 {
            expect += (x1[[f, d]] - x0[[f, d]]).powi(2);
        }
    }
    expect /= 30.0;
    assert!((loss - expect).abs() < 1e-12);
}

#[test]
fn cfm_loss_ignores_unmasked_target() {
    // At t = 0 the field input is x0 alone, so only the reduction sees x1.
    let model = randomized_model(6);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (x0, x1) = (normal(&mut rng, 10, 6), normal(&mut rng, 10, 6));
    let mask = Mask::new(10, 2, 7).unwrap();
    let cond = bundle_for(&model, &mut rng, 10);
    let mut x1b = x1.clone();
    for f in [0, 1, 7, 8, 9] {
        x1b.row_mut(f).fill(123.0);
    }
    let a = cfm_loss(&model, &x1, &cond, &mask, &x0, 0.0).unwrap();
    let b = cfm_loss(&model, &x1b, &cond, &mask, &x0, 0.0).unwrap();
    assert_eq!(a, b);
}

#[test]
fn checkpoint_round_trip() {
    let mut ck = Checkpoint::new(randomized_model(12));
    // Parameters are f32-representable after any optimizer step.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let s = sample(&mut rng, 8, 6);
    let (l, g) = ck.model.loss_and_grads(&s).unwrap();
    grad_step(&mut ck.model.params, &g, &mut ck.adam, 1e-3).unwrap();
    ck.history.push(LossParts { total: 0.5, cfm: 0.25, prior: 0.25 });
    ck.model.norm = MelNorm { mean: -4.5, std: 2.25 };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.srnc");
    ck.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert!(l.total.is_finite());
    assert_eq!(back, ck);
}

#[test]
fn checkpoint_rejects_garbage() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.srnc");
    std::fs::write(&path, b"SRNCxxxx").unwrap();
    assert!(matches!(Checkpoint::load(&path), Err(crate::Error::Format { .. })));
    let ck = Checkpoint::new(FlowModel::new(small_cfg(), 1).unwrap());
    let bytes = ck.encode();
    assert!(Checkpoint::decode(&bytes[..bytes.len() - 3], &path).is_err());
    assert!(matches!(Checkpoint::load(&dir.path().join("none")), Err(crate::Error::MissingFile(_))));
}
