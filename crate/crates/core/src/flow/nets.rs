//! Vector-field UNet, prior encoder and style encoder.

use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;

use super::cond::{CondTracks, ConditioningBundle};
use super::layers::*;
use super::params::{Grads, ParamStore};
use crate::dsp::N_CEPSTRA;

pub const MIDI_EMBED_DIM: usize = 16;
pub const TIME_EMBED_DIM: usize = 32;
/// Channel count of the unmasked conditioning tracks once embedded.
pub const TRACK_CHANNELS: usize = N_CEPSTRA + MIDI_EMBED_DIM + 1;

/// Sizes shared by all three networks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arch {
    pub n_mels: usize,
    pub channels: usize,
    pub style_dim: usize,
    pub style_tokens: usize,
    pub head_dim: usize,
}

fn track_input(emb: &Embedding, store: &ParamStore, tracks: &CondTracks) -> Array2<f64> {
    let ling = tracks.linguistic.t().to_owned();
    let midi = emb.forward(store, &tracks.midi);
    let loud = tracks.loudness_channel().insert_axis(Axis(0));
    concat_rows(&[&ling, &midi, &loud])
}

/// Conditional UNet over `(channels, frames)` activations.
#[derive(Debug, Clone)]
pub struct VectorFieldNet {
    midi: Embedding,
    t1: Dense,
    t2: Dense,
    down1: ResBlock,
    down2: ResBlock,
    mid1: ResBlock,
    attn: Attention,
    mid2: ResBlock,
    up2: ResBlock,
    up1: ResBlock,
    out: Conv1d,
    arch: Arch,
}

pub struct VfCache {
    tfeat: Array1<f64>,
    ta: Array1<f64>,
    ts: Array1<f64>,
    tb: Array1<f64>,
    temb: Array1<f64>,
    d1: ResCache,
    d2: ResCache,
    m1: ResCache,
    at: AttnCache,
    m2: ResCache,
    u2: ResCache,
    u1: ResCache,
    co: ConvCache,
    frames: [usize; 3],
}

impl VectorFieldNet {
    pub fn new(store: &mut ParamStore, arch: Arch, rng: &mut impl Rng) -> Self {
        let c = arch.channels;
        let c_in = 3 * arch.n_mels + TRACK_CHANNELS;
        let (td, sd) = (c, arch.style_dim);
        Self {
            midi: Embedding::new(store, "vf.midi", 128, MIDI_EMBED_DIM, rng),
            t1: Dense::new(store, "vf.time1", TIME_EMBED_DIM, c, rng),
            t2: Dense::new(store, "vf.time2", c, c, rng),
            down1: ResBlock::new(store, "vf.down1", c_in, c, td, sd, rng),
            down2: ResBlock::new(store, "vf.down2", c, c, td, sd, rng),
            mid1: ResBlock::new(store, "vf.mid1", c, c, td, sd, rng),
            attn: Attention::new(store, "vf.attn", c, arch.head_dim, rng),
            mid2: ResBlock::new(store, "vf.mid2", c, c, td, sd, rng),
            up2: ResBlock::new(store, "vf.up2", 2 * c, c, td, sd, rng),
            up1: ResBlock::new(store, "vf.up1", 2 * c, c, td, sd, rng),
            out: Conv1d::zeroed(store, "vf.out", c, arch.n_mels),
            arch,
        }
    }

    /// `x` and the result are `T x D`.
    pub fn forward(
        &self,
        store: &ParamStore,
        x: &Array2<f64>,
        t: f64,
        cond: &ConditioningBundle,
    ) -> (Array2<f64>, VfCache) {
        let frames = x.nrows();
        let half = frames.div_ceil(2);
        let quarter = half.div_ceil(2);
        let tracks = track_input(&self.midi, store, &cond.tracks);
        let xin = concat_rows(&[
            &x.t().to_owned(),
            &cond.masked_mel.t().to_owned(),
            &cond.prior.t().to_owned(),
            &tracks,
        ]);
        let tfeat = time_features(t, TIME_EMBED_DIM);
        let ta = self.t1.forward(store, &tfeat);
        let ts = silu_vec(&ta);
        let tb = self.t2.forward(store, &ts);
        let temb = silu_vec(&tb);
        let style = &cond.style;

        let (h1, d1) = self.down1.forward(store, &xin, &temb, style);
        let (h2, d2) = self.down2.forward(store, &pool2(&h1), &temb, style);
        let (a, m1) = self.mid1.forward(store, &pool2(&h2), &temb, style);
        let (a, at) = self.attn.forward(store, &a);
        let (a, m2) = self.mid2.forward(store, &a, &temb, style);
        let cat2 = concat_rows(&[&upsample2(&a, half), &h2]);
        let (g2, u2) = self.up2.forward(store, &cat2, &temb, style);
        let cat1 = concat_rows(&[&upsample2(&g2, frames), &h1]);
        let (g1, u1) = self.up1.forward(store, &cat1, &temb, style);
        let (y, co) = self.out.forward(store, &g1);
        let cache = VfCache {
            tfeat,
            ta,
            ts,
            tb,
            temb,
            d1,
            d2,
            m1,
            at,
            m2,
            u2,
            u1,
            co,
            frames: [frames, half, quarter],
        };
        (y.t().to_owned(), cache)
    }

    /// Accumulates parameter gradients for output gradient `dy` (`T x D`)
    /// and returns the gradient with respect to the style vector.
    pub fn backward(
        &self,
        store: &ParamStore,
        grads: &mut Grads,
        cache: &VfCache,
        cond: &ConditioningBundle,
        dy: &Array2<f64>,
    ) -> Array1<f64> {
        let c = self.arch.channels;
        let [frames, half, quarter] = cache.frames;
        let style = &cond.style;
        let temb = &cache.temb;
        let mut dtemb = Array1::zeros(temb.len());
        let mut dstyle = Array1::zeros(style.len());

        let dg1 = self.out.backward(store, grads, &cache.co, &dy.t().to_owned());
        let dcat1 = self.up1.backward(store, grads, &cache.u1, temb, style, &dg1, &mut dtemb, &mut dstyle);
        let mut dh1 = dcat1.slice(s![c.., ..]).to_owned();
        let dg2 = upsample2_backward(&dcat1.slice(s![..c, ..]).to_owned(), half);
        let dcat2 = self.up2.backward(store, grads, &cache.u2, temb, style, &dg2, &mut dtemb, &mut dstyle);
        let mut dh2 = dcat2.slice(s![c.., ..]).to_owned();
        let da = upsample2_backward(&dcat2.slice(s![..c, ..]).to_owned(), quarter);
        let da = self.mid2.backward(store, grads, &cache.m2, temb, style, &da, &mut dtemb, &mut dstyle);
        let da = self.attn.backward(store, grads, &cache.at, &da);
        let dp2 = self.mid1.backward(store, grads, &cache.m1, temb, style, &da, &mut dtemb, &mut dstyle);
        dh2 += &pool2_backward(&dp2, half);
        let dp1 = self.down2.backward(store, grads, &cache.d2, temb, style, &dh2, &mut dtemb, &mut dstyle);
        dh1 += &pool2_backward(&dp1, frames);
        let dxin = self.down1.backward(store, grads, &cache.d1, temb, style, &dh1, &mut dtemb, &mut dstyle);

        let d = self.arch.n_mels;
        let emb_rows = 3 * d + N_CEPSTRA;
        let demb = dxin.slice(s![emb_rows..emb_rows + MIDI_EMBED_DIM, ..]).to_owned();
        self.midi.backward(grads, &cond.tracks.midi, &demb);

        let dtb = silu_vec_backward(&cache.tb, &dtemb);
        let dts = self.t2.backward(store, grads, &cache.ts, &dtb);
        let dta = silu_vec_backward(&cache.ta, &dts);
        self.t1.backward(store, grads, &cache.tfeat, &dta);
        dstyle
    }
}

/// Small conv stack mapping the conditioning tracks to a mel prior.
#[derive(Debug, Clone)]
pub struct PriorEncoder {
    midi: Embedding,
    c1: Conv1d,
    c2: Conv1d,
    c3: Conv1d,
}

pub struct PriorCache {
    k1: ConvCache,
    a1: Array2<f64>,
    k2: ConvCache,
    a2: Array2<f64>,
    k3: ConvCache,
}

impl PriorEncoder {
    pub fn new(store: &mut ParamStore, arch: Arch, rng: &mut impl Rng) -> Self {
        let c = arch.channels;
        Self {
            midi: Embedding::new(store, "prior.midi", 128, MIDI_EMBED_DIM, rng),
            c1: Conv1d::new(store, "prior.conv1", TRACK_CHANNELS, c, 3, rng),
            c2: Conv1d::new(store, "prior.conv2", c, c, 3, rng),
            c3: Conv1d::new(store, "prior.conv3", c, arch.n_mels, 1, rng),
        }
    }

    /// `T x D` prior.
    pub fn forward(&self, store: &ParamStore, tracks: &CondTracks) -> (Array2<f64>, PriorCache) {
        let x = track_input(&self.midi, store, tracks);
        let (a1, k1) = self.c1.forward(store, &x);
        let (a2, k2) = self.c2.forward(store, &silu(&a1));
        let (y, k3) = self.c3.forward(store, &silu(&a2));
        (y.t().to_owned(), PriorCache { k1, a1, k2, a2, k3 })
    }

    pub fn backward(
        &self,
        store: &ParamStore,
        grads: &mut Grads,
        cache: &PriorCache,
        tracks: &CondTracks,
        dy: &Array2<f64>,
    ) {
        let ds2 = self.c3.backward(store, grads, &cache.k3, &dy.t().to_owned());
        let ds1 = self.c2.backward(store, grads, &cache.k2, &silu_backward(&cache.a2, &ds2));
        let dx = self.c1.backward(store, grads, &cache.k1, &silu_backward(&cache.a1, &ds1));
        let demb = dx.slice(s![N_CEPSTRA..N_CEPSTRA + MIDI_EMBED_DIM, ..]).to_owned();
        self.midi.backward(grads, &tracks.midi, &demb);
    }
}

/// Reference encoder followed by attention over learned style tokens.
#[derive(Debug, Clone)]
pub struct StyleEncoder {
    c1: Conv1d,
    c2: Conv1d,
    query: Dense,
    tokens: super::params::ParamId,
    style_dim: usize,
}

pub struct StyleCache {
    k1: ConvCache,
    a1: Array2<f64>,
    k2: ConvCache,
    a2: Array2<f64>,
    pooled_frames: usize,
    h: Array1<f64>,
    q: Array1<f64>,
    keys: Array2<f64>,
    w: Array1<f64>,
}

impl StyleEncoder {
    pub fn new(store: &mut ParamStore, arch: Arch, rng: &mut impl Rng) -> Self {
        let c = arch.channels;
        Self {
            c1: Conv1d::new(store, "style.conv1", arch.n_mels, c, 3, rng),
            c2: Conv1d::new(store, "style.conv2", c, c, 3, rng),
            query: Dense::new(store, "style.query", c, arch.style_dim, rng),
            tokens: store.add_uniform("style.tokens", (arch.style_tokens, arch.style_dim), 1, rng),
            style_dim: arch.style_dim,
        }
    }

    /// Style vector of a normalized `T x D` mel.
    pub fn forward(&self, store: &ParamStore, mel: &Array2<f64>) -> (Array1<f64>, StyleCache) {
        let (a1, k1) = self.c1.forward(store, &mel.t().to_owned());
        let (a2, k2) = self.c2.forward(store, &pool2(&silu(&a1)));
        let p = pool2(&silu(&a2));
        let h = p.mean_axis(Axis(1)).expect("at least one frame");
        let q = self.query.forward(store, &h);
        let keys = store.get(self.tokens).mapv(f64::tanh);
        let scale = 1.0 / (self.style_dim as f64).sqrt();
        let scores = keys.dot(&q) * scale;
        let m = scores.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let e = scores.mapv(|s| (s - m).exp());
        let w = &e / e.sum();
        let style = keys.t().dot(&w);
        let cache = StyleCache { k1, a1, k2, a2, pooled_frames: p.ncols(), h, q, keys, w };
        (style, cache)
    }

    pub fn backward(&self, store: &ParamStore, grads: &mut Grads, cache: &StyleCache, dstyle: &Array1<f64>) {
        let scale = 1.0 / (self.style_dim as f64).sqrt();
        let w = &cache.w;
        let keys = &cache.keys;
        let outer = |a: &Array1<f64>, b: &Array1<f64>| {
            a.view().insert_axis(Axis(1)).dot(&b.view().insert_axis(Axis(0)))
        };
        let dw = keys.dot(dstyle);
        let ds = w * &(&dw - w.dot(&dw));
        let mut dkeys = outer(w, dstyle);
        dkeys += &(outer(&ds, &cache.q) * scale);
        let dq = keys.t().dot(&ds) * scale;
        let dtok = &dkeys * &keys.mapv(|k| 1.0 - k * k);
        *grads.get_mut(self.tokens) += &dtok;

        let dh = self.query.backward(store, grads, &cache.h, &dq);
        let n = cache.pooled_frames;
        let dp = Array2::from_shape_fn((dh.len(), n), |(c, _)| dh[c] / n as f64);
        let ds2 = pool2_backward(&dp, cache.a2.ncols());
        let dp1 = self.c2.backward(store, grads, &cache.k2, &silu_backward(&cache.a2, &ds2));
        let ds1 = pool2_backward(&dp1, cache.a1.ncols());
        self.c1.backward(store, grads, &cache.k1, &silu_backward(&cache.a1, &ds1));
    }
}
