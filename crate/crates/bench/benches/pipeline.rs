use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use singstyle_core::dsp::{extract_f0, griffin_lim_invert, stft_mel, FrameConfig};
use singstyle_core::flow::{CFMConfig, FlowModel};
use singstyle_core::infill::{assemble_batch, extract_features, init_checkpoint, TrainConfig, TrainingItem};
use singstyle_core::synthdata::{render_voice, SongSpec, StyleParams};
use singstyle_core::world::{world_analyze, world_synthesize};

fn clip() -> singstyle_core::dsp::Waveform {
    let spec = SongSpec::random(6, &mut ChaCha8Rng::seed_from_u64(1));
    let style = StyleParams { vibrato_rate: 5.5, vibrato_depth: 20.0, breathiness: 0.2, tilt: 0.0, key_offset: 0 };
    render_voice(&spec, &style, &FrameConfig::default()).unwrap()
}

fn dsp(c: &mut Criterion) {
    let cfg = FrameConfig::default();
    let wav = clip();
    let mel = stft_mel(&wav, &cfg).unwrap();
    c.bench_function("stft_mel", |b| b.iter(|| stft_mel(&wav, &cfg).unwrap()));
    c.bench_function("extract_f0", |b| b.iter(|| extract_f0(&wav, &cfg)));
    c.bench_function("griffin_lim_8", |b| b.iter(|| griffin_lim_invert(&mel, &cfg, 8)));
    let feat = world_analyze(&wav, &cfg);
    c.bench_function("world_analyze", |b| b.iter(|| world_analyze(&wav, &cfg)));
    c.bench_function("world_synthesize", |b| b.iter(|| world_synthesize(&feat, &cfg)));
}

fn flow(c: &mut Criterion) {
    let cfg = FrameConfig::default();
    let feat = extract_features(&clip(), &cfg).unwrap();
    let items = vec![TrainingItem::natural("a", "clear", &feat)];
    let ck = init_checkpoint(&items, CFMConfig::default(), 0).unwrap();
    let refs: Vec<&TrainingItem> = items.iter().collect();
    let tc = TrainConfig::default();
    let sample = assemble_batch(&refs, &ck.model.norm, &tc, &mut ChaCha8Rng::seed_from_u64(2)).unwrap().remove(0);
    c.bench_function("loss_and_grads_128", |b| b.iter(|| ck.model.loss_and_grads(&sample).unwrap()));
    let model = FlowModel::new(CFMConfig::default(), 0).unwrap();
    let style = model.style_forward(&sample.style_mel).unwrap();
    let cond = model.bundle(sample.tracks.clone(), sample.x1.clone(), style).unwrap();
    c.bench_function("vf_forward_128", |b| {
        b.iter_batched(|| Array2::<f64>::zeros(sample.x1.dim()), |x| model.vf_forward(&x, 0.5, &cond).unwrap(), BatchSize::SmallInput)
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = dsp, flow
}
criterion_main!(benches);
