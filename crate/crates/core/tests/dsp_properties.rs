use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use singstyle_core::dsp::{
    extract_f0, extract_linguistic, extract_loudness, griffin_lim_invert, hz_to_midi, midi_quantize, stft_mel,
    FrameConfig, Waveform, DEFAULT_GL_ITERS, LOG_FLOOR, SAMPLE_RATE,
};
use singstyle_core::synthdata::{default_styles, render_corpus};

fn sawtooth(f0: f64, secs: f64, amp: f64) -> Waveform {
    let n = (secs * SAMPLE_RATE as f64) as usize;
    let samples = (0..n)
        .map(|i| {
            let ph = (i as f64 * f0 / SAMPLE_RATE as f64).fract();
            amp * (2.0 * ph - 1.0)
        })
        .collect();
    Waveform::new(samples, SAMPLE_RATE)
}

#[test]
fn sawtooth_median_f0() {
    let f0 = extract_f0(&sawtooth(220.0, 1.0, 0.5), &FrameConfig::default());
    assert!((f0.median_voiced().unwrap() - 220.0).abs() < 1.0);
}

#[test]
fn griffin_lim_round_trip_on_corpus() {
    let cfg = FrameConfig::default();
    let clips = render_corpus(2, 4, &default_styles(), &mut ChaCha8Rng::seed_from_u64(1), &cfg).unwrap();
    for c in &clips {
        let mel = stft_mel(&c.wav, &cfg).unwrap();
        let back = stft_mel(&griffin_lim_invert(&mel, &cfg, DEFAULT_GL_ITERS), &cfg).unwrap();
        let t = mel.frames().min(back.frames());
        let err = (&mel.data.slice(ndarray::s![..t, ..]) - &back.data.slice(ndarray::s![..t, ..]))
            .mapv(f64::abs)
            .mean()
            .unwrap();
        assert!(err < 0.35, "{}: {err}", c.record.clip_id);
    }
}

#[test]
fn amplitude_covariance_on_clean_tone() {
    let cfg = FrameConfig::default();
    let base = sawtooth(233.0, 0.8, 0.2);
    let mel0 = stft_mel(&base, &cfg).unwrap();
    let loud0 = extract_loudness(&base, &cfg);
    let f00 = extract_f0(&base, &cfg);
    let midi0 = midi_quantize(&f00, &cfg);
    for g in [0.5, 2.0] {
        let w = base.scaled(g);
        let mel = stft_mel(&w, &cfg).unwrap();
        for (a, b) in mel0.data.iter().zip(mel.data.iter()) {
            if *a > LOG_FLOOR + 1.0 && *b > LOG_FLOOR + 1.0 {
                assert!((b - a - g.ln()).abs() < 1e-9);
            }
        }
        for (a, b) in loud0.values.iter().zip(&extract_loudness(&w, &cfg).values) {
            assert!((b - a - 20.0 * g.log10()).abs() < 1e-9);
        }
        let f0 = extract_f0(&w, &cfg);
        assert_eq!(f0.values.iter().map(|&v| v > 0.0).collect::<Vec<_>>(), f00.values.iter().map(|&v| v > 0.0).collect::<Vec<_>>());
        assert_eq!(midi_quantize(&f0, &cfg), midi0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn all_analyses_share_frame_count(len in 1024usize..12_000, f0 in 100.0f64..600.0) {
        let cfg = FrameConfig::default();
        let w = sawtooth(f0, len as f64 / SAMPLE_RATE as f64, 0.3);
        let w = Waveform::new(w.samples[..len.min(w.len())].to_vec(), SAMPLE_RATE);
        let t = cfg.frames_for(w.len());
        prop_assert_eq!(stft_mel(&w, &cfg).unwrap().frames(), t);
        let f0t = extract_f0(&w, &cfg);
        prop_assert_eq!(f0t.len(), t);
        prop_assert_eq!(extract_loudness(&w, &cfg).values.len(), t);
        prop_assert_eq!(extract_linguistic(&w, &cfg).data.nrows(), t);
        prop_assert_eq!(midi_quantize(&f0t, &cfg).notes.len(), t);
    }

    #[test]
    fn midi_octave_exact(f in 50.0f64..1100.0) {
        prop_assert!((hz_to_midi(2.0 * f).unwrap() - hz_to_midi(f).unwrap() - 12.0).abs() < 1e-12);
    }
}
