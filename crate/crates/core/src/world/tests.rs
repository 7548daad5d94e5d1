use super::*;
use crate::dsp::extract_f0;
use crate::test_signals::{cents_rmse, sawtooth, sawtooth_with, vuv_disagreement, white_noise};
use proptest::prelude::*;
use std::f64::consts::PI;

fn cfg() -> FrameConfig {
    FrameConfig::default()
}

#[test]
fn analyze_sawtooth() {
    let feat = world_analyze(&sawtooth(220.0, 0.5, 1.0), &cfg());
    let med = feat.f0.median_voiced().unwrap();
    assert!((med - 220.0).abs() < 1.0);
    let voiced: Vec<usize> = (0..feat.frames()).filter(|&i| feat.f0.is_voiced(i)).collect();
    let mean_bap0 = voiced.iter().map(|&i| feat.bap[[i, 0]]).sum::<f64>() / voiced.len() as f64;
    assert!(mean_bap0 < 0.2, "{mean_bap0}");
    assert_eq!(feat.mcep.ncols(), MCEP_ORDER + 1);
    assert_eq!(feat.bap.ncols(), 4);
}

#[test]
fn analyze_noise_and_silence() {
    let feat = world_analyze(&white_noise(0.5, 1.0, 3), &cfg());
    assert!(feat.f0.voiced_fraction() < 0.05);
    for i in 0..feat.frames() {
        if !feat.f0.is_voiced(i) {
            assert!(feat.bap.row(i).iter().all(|&b| b == 1.0));
        }
    }
    let silent = world_analyze(&Waveform::silence(24_000, 24_000), &cfg());
    assert_eq!(silent.f0.voiced_count(), 0);
    assert!(silent.mcep.column(0).iter().all(|&c| (c - ENV_LOG_FLOOR).abs() < 1e-9));
}

#[test]
fn noise_voiced_frames_are_aperiodic() {
    // bap of a voiced frame analysed with a wrong f0 over noise is near 1
    let wav = white_noise(0.5, 0.2, 11);
    let stft = crate::dsp::Stft::new(1024);
    let spec = stft.spectrum(&wav.samples[..1024]);
    let power: Vec<f64> = spec[..513].iter().map(|c| c.norm_sqr()).collect();
    for (lo, hi) in BAP_BANDS_HZ {
        let split = harmonic_noise_split(&power, 24_000.0 / 1024.0, 220.0, lo, hi).unwrap();
        assert!(split.aperiodicity() > 0.8, "{}", split.aperiodicity());
    }
}

#[test]
fn round_trip_sawtooth() {
    let wav = sawtooth(220.0, 0.5, 1.0);
    let feat = world_analyze(&wav, &cfg());
    let out = world_synthesize(&feat, &cfg());
    assert_eq!(out.len(), cfg().samples_for(feat.frames()));
    let f0 = extract_f0(&out, &cfg());
    assert!(cents_rmse(&f0.values, &feat.f0.values) < 5.0);
    assert!(vuv_disagreement(&f0.values, &feat.f0.values) < 0.05);
}

#[test]
fn round_trip_preserves_level() {
    let wav = sawtooth(220.0, 0.3, 1.0);
    let out = world_synthesize(&world_analyze(&wav, &cfg()), &cfg());
    let ratio = out.rms() / wav.rms();
    assert!((0.7..1.4).contains(&ratio), "{ratio}");
}

#[test]
fn unvoiced_and_empty_synthesis() {
    let mut feat = world_analyze(&sawtooth(220.0, 0.5, 1.0), &cfg());
    feat.f0 = F0Track::new(vec![0.0; feat.frames()]);
    let out = world_synthesize(&feat, &cfg());
    assert!(extract_f0(&out, &cfg()).voiced_fraction() <= 0.05);
    let empty = feat.truncated(0);
    assert!(world_synthesize(&empty, &cfg()).is_empty());
}

#[test]
fn stats_examples() {
    let s = f0_stats(&F0Track::new(vec![440.0; 10])).unwrap();
    assert!((s.mean_logf0 - 440f64.ln()).abs() < 1e-12);
    assert!(s.std_logf0 < 1e-12);
    let s = f0_stats(&F0Track::new(vec![220.0, 0.0, 880.0])).unwrap();
    assert!((s.mean_logf0 - 440f64.ln()).abs() < 1e-12);
    assert!((s.std_logf0 - 2f64.ln()).abs() < 1e-12);
    assert_eq!(s.voiced_count, 2);
    assert!(matches!(
        f0_stats(&F0Track::new(vec![0.0; 5])),
        Err(Error::InsufficientVoicing(0))
    ));
}

#[test]
fn shift_formula() {
    let src = F0Stats { mean_logf0: 5.0, std_logf0: 0.2, voiced_count: 10 };
    let tgt = F0Stats { mean_logf0: 5.5, std_logf0: 0.1, voiced_count: 10 };
    assert!((shift_log_f0(5.2, &src, &tgt) - 5.6).abs() < 1e-12);
    let flat = F0Stats { std_logf0: 0.0, ..src };
    assert_eq!(shift_log_f0(5.3, &flat, &tgt), 5.5);
}

#[test]
fn shift_identity_and_flat_source() {
    let track = F0Track::new(vec![200.0, 0.0, 210.0, 190.0, 0.0, 205.0]);
    let stats = f0_stats(&track).unwrap();
    let out = mean_variance_shift_f0(&track, &stats).unwrap();
    for (a, b) in out.values.iter().zip(&track.values) {
        assert!((a - b).abs() < 1e-9 * b.max(1.0));
    }
    let flat = F0Track::new(vec![300.0; 4]);
    let out = mean_variance_shift_f0(&flat, &stats).unwrap();
    assert!(out.values.iter().all(|&f| (f.ln() - stats.mean_logf0).abs() < 1e-12));
    assert!(mean_variance_shift_f0(&F0Track::new(vec![0.0, 100.0]), &stats).is_err());
}

fn voiced_track() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), 60.0f64..1000.0], 3..60)
        .prop_filter("two distinct voiced values", |v| {
            let voiced: Vec<f64> = v.iter().copied().filter(|&f| f > 0.0).collect();
            voiced.len() >= 2 && voiced.iter().any(|&f| (f - voiced[0]).abs() > 1e-3)
        })
}

proptest! {
    #[test]
    fn shift_matches_reference_stats(v in voiced_track(), mean in 4.0f64..7.0, std in 0.01f64..0.5) {
        let target = F0Stats { mean_logf0: mean, std_logf0: std, voiced_count: 2 };
        let out = mean_variance_shift_f0(&F0Track::new(v.clone()), &target).unwrap();
        let got = f0_stats(&out).unwrap();
        prop_assert!(((got.mean_logf0 - mean) / mean).abs() < 1e-9);
        prop_assert!(((got.std_logf0 - std) / std).abs() < 1e-9);
        for (a, b) in out.values.iter().zip(&v) {
            prop_assert_eq!(*a > 0.0, *b > 0.0);
        }
        // idempotent
        let again = mean_variance_shift_f0(&out, &target).unwrap();
        for (a, b) in again.values.iter().zip(&out.values) {
            prop_assert!((a - b).abs() <= 1e-9 * b.max(1.0));
        }
        // invertible with the original statistics
        let orig = f0_stats(&F0Track::new(v.clone())).unwrap();
        let back = mean_variance_shift_f0(&out, &orig).unwrap();
        for (a, b) in back.values.iter().zip(&v) {
            prop_assert!((a - b).abs() <= 1e-9 * b.max(1.0));
        }
    }
}

#[test]
fn swap_identity() {
    let wav = sawtooth(220.0, 0.4, 1.0);
    let stats = f0_stats(&extract_f0(&wav, &cfg())).unwrap();
    let out = postprocess_swap(&wav, &wav, &stats, &cfg()).unwrap();
    let a = extract_f0(&wav, &cfg());
    let b = extract_f0(&out, &cfg());
    assert!(cents_rmse(&b.values, &a.values) < 10.0);
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn swap_follows_source_contour() {
    let src = sawtooth_with(|t| 220.0 * 2f64.powf(0.5 / 12.0 * (2.0 * PI * 5.0 * t).sin()), 0.4, 1.0);
    let cvt = sawtooth(260.0, 0.4, 1.0);
    let ref_stats = F0Stats { mean_logf0: 250f64.ln(), std_logf0: 0.02, voiced_count: 10 };
    let out = postprocess_swap(&src, &cvt, &ref_stats, &cfg()).unwrap();
    let shifted = mean_variance_shift_f0(&extract_f0(&src, &cfg()), &ref_stats).unwrap();
    let got = extract_f0(&out, &cfg());
    let idx: Vec<usize> = (0..got.len()).filter(|&i| got.is_voiced(i) && shifted.is_voiced(i)).collect();
    assert!(idx.len() > 60);
    let a: Vec<f64> = idx.iter().map(|&i| got.values[i].ln()).collect();
    let b: Vec<f64> = idx.iter().map(|&i| shifted.values[i].ln()).collect();
    assert!(correlation(&a, &b) > 0.9, "{}", correlation(&a, &b));
}

#[test]
fn swap_rejects_bad_overlap() {
    let stats = F0Stats { mean_logf0: 5.0, std_logf0: 0.1, voiced_count: 2 };
    let a = sawtooth(220.0, 0.4, 1.0);
    let short = Waveform::silence(100, 24_000);
    assert!(postprocess_swap(&short, &short, &stats, &cfg()).is_err());
    let b = sawtooth(220.0, 0.4, 0.5);
    assert!(matches!(
        postprocess_swap(&a, &b, &stats, &cfg()),
        Err(Error::FrameMismatch { .. })
    ));
}

#[test]
fn pitch_shift_examples() {
    let c = cfg();
    let up = pitch_shift_augment(&sawtooth(220.0, 0.4, 1.0), 12, &c).unwrap();
    let f = extract_f0(&up, &c).median_voiced().unwrap();
    assert!((f / 440.0 - 1.0).abs() < 0.01, "{f}");

    let down = pitch_shift_augment(&sawtooth(440.0, 0.4, 1.0), -4, &c).unwrap();
    let f = extract_f0(&down, &c).median_voiced().unwrap();
    let want = 440.0 * 2f64.powf(-4.0 / 12.0);
    assert!((want - 349.2).abs() < 0.1);
    assert!((f / want - 1.0).abs() < 0.01, "{f}");

    let wav = sawtooth(220.0, 0.4, 1.0);
    let same = pitch_shift_augment(&wav, 0, &c).unwrap();
    assert!(cents_rmse(&extract_f0(&same, &c).values, &extract_f0(&wav, &c).values) < 5.0);

    assert!(pitch_shift_augment(&wav, 13, &c).is_err());
    assert!(pitch_shift_augment(&wav, -13, &c).is_err());
}

#[test]
fn pitch_shift_up_then_down() {
    let c = cfg();
    let wav = sawtooth_with(|t| 247.0 * 2f64.powf(0.2 / 12.0 * (2.0 * PI * 5.0 * t).sin()), 0.4, 1.0);
    for k in [2, 4] {
        let up = pitch_shift_augment(&wav, k, &c).unwrap();
        let back = pitch_shift_augment(&up, -k, &c).unwrap();
        let r = cents_rmse(&extract_f0(&back, &c).values, &extract_f0(&wav, &c).values);
        assert!(r < 5.0, "k={k}: {r}");
    }
}

#[test]
fn srnw_round_trip() {
    let feat = world_analyze(&sawtooth(220.0, 0.5, 0.3), &cfg());
    let bytes = encode_srnw(&feat);
    assert_eq!(&bytes[..4], b"SRNW");
    let back = decode_srnw(&bytes, Path::new("x")).unwrap();
    assert_eq!(back.frames(), feat.frames());
    for (a, b) in back.mcep.iter().zip(feat.mcep.iter()) {
        assert_eq!(*a, *b as f32 as f64);
    }
}

