use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::flow::{CFMConfig, FlowModel};
use crate::infill::extract_features;
use crate::synthdata::{default_styles, render_corpus};

fn clips(n_songs: usize, seed: u64) -> Vec<EvalClip> {
    let cfg = FrameConfig::default();
    render_corpus(n_songs, 3, &default_styles(), &mut ChaCha8Rng::seed_from_u64(seed), &cfg)
        .unwrap()
        .into_iter()
        .map(|c| EvalClip {
            id: c.record.clip_id,
            song_id: c.record.song_id,
            style: c.record.style,
            features: extract_features(&c.wav, &cfg).unwrap(),
            wav: c.wav,
        })
        .collect()
}

#[test]
fn all_pairs_count() {
    let c = clips(2, 1);
    let pairs = all_pairs(&c);
    assert_eq!(pairs.len(), 2 * 4 * 3);
    assert!(pairs.iter().all(|p| c[p.source].style != p.target_style));
}

#[test]
fn untrained_model_report_is_complete_and_deterministic() {
    let test = clips(1, 1);
    let refs = clips(1, 2);
    let cfg = FrameConfig::default();
    let model = FlowModel::new(CFMConfig { channels: 8, style_dim: 4, head_dim: 8, ..CFMConfig::default() }, 3).unwrap();
    let settings = ConvertSettings { euler_steps: 2, gl_iters: 4, ..ConvertSettings::default() };
    let pairs: Vec<EvalPair> = all_pairs(&test).into_iter().take(3).collect();
    let a = evaluate_conversion(&test, &pairs, &refs, &model, &settings, &cfg).unwrap();
    let b = evaluate_conversion(&test, &pairs, &refs, &model, &settings, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.attempted(), 3);
    for r in &a.records {
        assert!(r.metrics().iter().all(|v| v.is_finite() && *v >= 0.0));
        assert_eq!(test.iter().find(|c| c.id == r.target).unwrap().style, r.target_style);
    }
}

#[test]
fn missing_parallel_target_is_recorded() {
    let mut test = clips(1, 1);
    test.retain(|c| c.style != "pressed");
    let refs = clips(1, 2);
    let model = FlowModel::new(CFMConfig { channels: 8, style_dim: 4, head_dim: 8, ..CFMConfig::default() }, 3).unwrap();
    let settings = ConvertSettings { euler_steps: 1, gl_iters: 1, ..ConvertSettings::default() };
    let pairs = vec![EvalPair { source: 0, target_style: "pressed".into() }];
    let r = evaluate_conversion(&test, &pairs, &refs, &model, &settings, &FrameConfig::default()).unwrap();
    assert_eq!(r.failures.len(), 1);
    assert!(r.records.is_empty());
    let bad = vec![EvalPair { source: 0, target_style: "whisper".into() }];
    assert!(evaluate_conversion(&test, &bad, &refs, &model, &settings, &FrameConfig::default()).is_err());
}
