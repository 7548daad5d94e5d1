//! Layers with explicit forward caches and hand-written backward passes.
//! Activations are `(channels, frames)` matrices.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;

use super::params::{Grads, ParamId, ParamStore};

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn silu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v * sigmoid(v))
}

pub fn silu_vec(x: &Array1<f64>) -> Array1<f64> {
    x.mapv(|v| v * sigmoid(v))
}

fn silu_grad(v: f64) -> f64 {
    let s = sigmoid(v);
    s * (1.0 + v * (1.0 - s))
}

/// Gradient through SiLU given its pre-activation input.
pub fn silu_backward(pre: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
    let mut dx = dy.clone();
    ndarray::Zip::from(&mut dx)
        .and(pre)
        .for_each(|d, &v| *d *= silu_grad(v));
    dx
}

pub fn silu_vec_backward(pre: &Array1<f64>, dy: &Array1<f64>) -> Array1<f64> {
    let mut dx = dy.clone();
    ndarray::Zip::from(&mut dx)
        .and(pre)
        .for_each(|d, &v| *d *= silu_grad(v));
    dx
}

/// 1-D convolution with "same" zero padding and odd kernel size.
#[derive(Debug, Clone)]
pub struct Conv1d {
    pub w: ParamId,
    pub b: ParamId,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
}

pub struct ConvCache {
    cols: Array2<f64>,
    frames: usize,
}

impl Conv1d {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        rng: &mut impl Rng,
    ) -> Self {
        debug_assert!(kernel % 2 == 1);
        let w = store.add_uniform(format!("{name}.w"), (c_out, c_in * kernel), c_in * kernel, rng);
        let b = store.add_zeros(format!("{name}.b"), (1, c_out));
        Self { w, b, c_in, c_out, kernel }
    }

    pub fn zeroed(store: &mut ParamStore, name: &str, c_in: usize, c_out: usize) -> Self {
        let w = store.add_zeros(format!("{name}.w"), (c_out, c_in));
        let b = store.add_zeros(format!("{name}.b"), (1, c_out));
        Self { w, b, c_in, c_out, kernel: 1 }
    }

    fn im2col(&self, x: &Array2<f64>) -> Array2<f64> {
        let t = x.ncols();
        if self.kernel == 1 {
            return x.clone();
        }
        let pad = self.kernel / 2;
        let mut cols = Array2::zeros((self.c_in * self.kernel, t));
        for ci in 0..self.c_in {
            let xr = x.row(ci);
            for j in 0..self.kernel {
                let mut row = cols.row_mut(ci * self.kernel + j);
                // output frame f reads input frame f + j - pad
                let lo = pad.saturating_sub(j);
                let hi = (t + pad).saturating_sub(j).min(t);
                if lo < hi {
                    row.slice_mut(s![lo..hi])
                        .assign(&xr.slice(s![lo + j - pad..hi + j - pad]));
                }
            }
        }
        cols
    }

    pub fn forward(&self, store: &ParamStore, x: &Array2<f64>) -> (Array2<f64>, ConvCache) {
        debug_assert_eq!(x.nrows(), self.c_in);
        let cols = self.im2col(x);
        let mut y = store.get(self.w).dot(&cols);
        let b = store.get(self.b).row(0).to_owned();
        y += &b.insert_axis(Axis(1));
        (y, ConvCache { cols, frames: x.ncols() })
    }

    pub fn backward(
        &self,
        store: &ParamStore,
        grads: &mut Grads,
        cache: &ConvCache,
        dy: &Array2<f64>,
    ) -> Array2<f64> {
        general_mat_mul(1.0, dy, &cache.cols.t(), 1.0, grads.get_mut(self.w));
        {
            let db = dy.sum_axis(Axis(1));
            let mut gb = grads.get_mut(self.b).row_mut(0);
            gb += &db;
        }
        let dcols = store.get(self.w).t().dot(dy);
        if self.kernel == 1 {
            return dcols;
        }
        let t = cache.frames;
        let pad = self.kernel / 2;
        let mut dx = Array2::zeros((self.c_in, t));
        for ci in 0..self.c_in {
            let mut dxr = dx.row_mut(ci);
            for j in 0..self.kernel {
                let row = dcols.row(ci * self.kernel + j);
                let lo = pad.saturating_sub(j);
                let hi = (t + pad).saturating_sub(j).min(t);
                if lo < hi {
                    let mut dst = dxr.slice_mut(s![lo + j - pad..hi + j - pad]);
                    dst += &row.slice(s![lo..hi]);
                }
            }
        }
        dx
    }
}

/// Affine map on vectors.
#[derive(Debug, Clone)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
}

impl Dense {
    pub fn new(store: &mut ParamStore, name: &str, d_in: usize, d_out: usize, rng: &mut impl Rng) -> Self {
        let w = store.add_uniform(format!("{name}.w"), (d_out, d_in), d_in, rng);
        let b = store.add_zeros(format!("{name}.b"), (1, d_out));
        Self { w, b }
    }

    pub fn forward(&self, store: &ParamStore, x: &Array1<f64>) -> Array1<f64> {
        store.get(self.w).dot(x) + store.get(self.b).row(0)
    }

    pub fn backward(
        &self,
        store: &ParamStore,
        grads: &mut Grads,
        x: &Array1<f64>,
        dy: &Array1<f64>,
    ) -> Array1<f64> {
        {
            let gw = grads.get_mut(self.w);
            general_mat_mul(
                1.0,
                &dy.view().insert_axis(Axis(1)),
                &x.view().insert_axis(Axis(0)),
                1.0,
                gw,
            );
        }
        {
            let mut gb = grads.get_mut(self.b).row_mut(0);
            gb += dy;
        }
        store.get(self.w).t().dot(dy)
    }
}

/// Average of frame pairs; an odd trailing frame is kept alone.
pub fn pool2(x: &Array2<f64>) -> Array2<f64> {
    let t = x.ncols();
    let out_t = t.div_ceil(2);
    Array2::from_shape_fn((x.nrows(), out_t), |(c, i)| {
        let a = 2 * i;
        if a + 1 < t {
            0.5 * (x[[c, a]] + x[[c, a + 1]])
        } else {
            x[[c, a]]
        }
    })
}

pub fn pool2_backward(dy: &Array2<f64>, in_frames: usize) -> Array2<f64> {
    Array2::from_shape_fn((dy.nrows(), in_frames), |(c, f)| {
        let i = f / 2;
        let paired = 2 * i + 1 < in_frames;
        if paired {
            0.5 * dy[[c, i]]
        } else {
            dy[[c, i]]
        }
    })
}

/// Nearest-neighbor upsampling by 2, cropped to `frames`.
pub fn upsample2(x: &Array2<f64>, frames: usize) -> Array2<f64> {
    Array2::from_shape_fn((x.nrows(), frames), |(c, f)| x[[c, (f / 2).min(x.ncols() - 1)]])
}

pub fn upsample2_backward(dy: &Array2<f64>, in_frames: usize) -> Array2<f64> {
    let mut dx = Array2::zeros((dy.nrows(), in_frames));
    for f in 0..dy.ncols() {
        let i = (f / 2).min(in_frames - 1);
        let mut col = dx.column_mut(i);
        col += &dy.column(f);
    }
    dx
}

pub fn concat_rows(parts: &[&Array2<f64>]) -> Array2<f64> {
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    ndarray::concatenate(Axis(0), &views).expect("equal frame counts")
}

/// Residual block: conv, time bias, SiLU, conv, skip, then a per-channel
/// affine modulation `y = r * (1 + gamma) + beta` from the style vector.
#[derive(Debug, Clone)]
pub struct ResBlock {
    conv1: Conv1d,
    conv2: Conv1d,
    skip: Option<Conv1d>,
    time: Dense,
    style: Dense,
    c_out: usize,
}

pub struct ResCache {
    c1: ConvCache,
    h1: Array2<f64>,
    c2: ConvCache,
    skip: Option<ConvCache>,
    r: Array2<f64>,
    gamma: Array1<f64>,
}

impl ResBlock {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        time_dim: usize,
        style_dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let conv1 = Conv1d::new(store, &format!("{name}.conv1"), c_in, c_out, 3, rng);
        let conv2 = Conv1d::new(store, &format!("{name}.conv2"), c_out, c_out, 3, rng);
        let skip = (c_in != c_out).then(|| Conv1d::new(store, &format!("{name}.skip"), c_in, c_out, 1, rng));
        let time = Dense::new(store, &format!("{name}.time"), time_dim, c_out, rng);
        let style = Dense::new(store, &format!("{name}.style"), style_dim, 2 * c_out, rng);
        Self { conv1, conv2, skip, time, style, c_out }
    }

    /// `temb` is the already-activated time embedding.
    pub fn forward(
        &self,
        store: &ParamStore,
        x: &Array2<f64>,
        temb: &Array1<f64>,
        style: &Array1<f64>,
    ) -> (Array2<f64>, ResCache) {
        let (mut h1, c1) = self.conv1.forward(store, x);
        let tb = self.time.forward(store, temb);
        h1 += &tb.view().insert_axis(Axis(1));
        let a1 = silu(&h1);
        let (h2, c2) = self.conv2.forward(store, &a1);
        let (r, skip) = match &self.skip {
            Some(conv) => {
                let (sx, sc) = conv.forward(store, x);
                (h2 + sx, Some(sc))
            }
            None => (h2 + x, None),
        };
        let film = self.style.forward(store, style);
        let gamma = film.slice(s![..self.c_out]).to_owned();
        let beta = film.slice(s![self.c_out..]).to_owned();
        let scale = gamma.mapv(|g| 1.0 + g);
        let y = &r * &scale.view().insert_axis(Axis(1)) + &beta.view().insert_axis(Axis(1));
        (y, ResCache { c1, h1, c2, skip, r, gamma })
    }

    /// Returns the input gradient; accumulates into `dtemb` and `dstyle`.
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &self,
        store: &ParamStore,
        grads: &mut Grads,
        cache: &ResCache,
        temb: &Array1<f64>,
        style: &Array1<f64>,
        dy: &Array2<f64>,
        dtemb: &mut Array1<f64>,
        dstyle: &mut Array1<f64>,
    ) -> Array2<f64> {
        let scale = cache.gamma.mapv(|g| 1.0 + g);
        let dr = dy * &scale.view().insert_axis(Axis(1));
        let dgamma = (dy * &cache.r).sum_axis(Axis(1));
        let dbeta = dy.sum_axis(Axis(1));
        let mut dfilm = Array1::zeros(2 * self.c_out);
        dfilm.slice_mut(s![..self.c_out]).assign(&dgamma);
        dfilm.slice_mut(s![self.c_out..]).assign(&dbeta);
        *dstyle += &self.style.backward(store, grads, style, &dfilm);

        let mut dx = match (&self.skip, &cache.skip) {
            (Some(conv), Some(sc)) => conv.backward(store, grads, sc, &dr),
            _ => dr.clone(),
        };
        let da1 = self.conv2.backward(store, grads, &cache.c2, &dr);
        let dh1 = silu_backward(&cache.h1, &da1);
        let dtb = dh1.sum_axis(Axis(1));
        *dtemb += &self.time.backward(store, grads, temb, &dtb);
        dx += &self.conv1.backward(store, grads, &cache.c1, &dh1);
        dx
    }
}

/// Single-head self-attention over frames with a residual connection.
#[derive(Debug, Clone)]
pub struct Attention {
    q: Conv1d,
    k: Conv1d,
    v: Conv1d,
    o: Conv1d,
    dim: usize,
}

pub struct AttnCache {
    cq: ConvCache,
    ck: ConvCache,
    cv: ConvCache,
    co: ConvCache,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    a: Array2<f64>,
}

impl Attention {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize, head_dim: usize, rng: &mut impl Rng) -> Self {
        Self {
            q: Conv1d::new(store, &format!("{name}.q"), channels, head_dim, 1, rng),
            k: Conv1d::new(store, &format!("{name}.k"), channels, head_dim, 1, rng),
            v: Conv1d::new(store, &format!("{name}.v"), channels, head_dim, 1, rng),
            o: Conv1d::new(store, &format!("{name}.o"), head_dim, channels, 1, rng),
            dim: head_dim,
        }
    }

    pub fn forward(&self, store: &ParamStore, x: &Array2<f64>) -> (Array2<f64>, AttnCache) {
        let (q, cq) = self.q.forward(store, x);
        let (k, ck) = self.k.forward(store, x);
        let (v, cv) = self.v.forward(store, x);
        let scale = 1.0 / (self.dim as f64).sqrt();
        // scores[i, j] = q_i . k_j / sqrt(d)
        let mut a = q.t().dot(&k) * scale;
        for mut row in a.rows_mut() {
            let m = row.fold(f64::NEG_INFINITY, |acc, &v| acc.max(v));
            row.mapv_inplace(|v| (v - m).exp());
            let z = row.sum();
            row.mapv_inplace(|v| v / z);
        }
        let ctx = v.dot(&a.t());
        let (out, co) = self.o.forward(store, &ctx);
        (x + &out, AttnCache { cq, ck, cv, co, q, k, v, a })
    }

    pub fn backward(
        &self,
        store: &ParamStore,
        grads: &mut Grads,
        cache: &AttnCache,
        dy: &Array2<f64>,
    ) -> Array2<f64> {
        let dctx = self.o.backward(store, grads, &cache.co, dy);
        let dv = dctx.dot(&cache.a);
        let da = dctx.t().dot(&cache.v);
        // softmax backward, row-wise
        let mut ds = &cache.a * &da;
        let row_sums = ds.sum_axis(Axis(1));
        ds -= &(&cache.a * &row_sums.view().insert_axis(Axis(1)));
        let scale = 1.0 / (self.dim as f64).sqrt();
        let dq = cache.k.dot(&ds.t()) * scale;
        let dk = cache.q.dot(&ds) * scale;
        let mut dx = dy.clone();
        dx += &self.q.backward(store, grads, &cache.cq, &dq);
        dx += &self.k.backward(store, grads, &cache.ck, &dk);
        dx += &self.v.backward(store, grads, &cache.cv, &dv);
        dx
    }
}

/// Lookup table mapping MIDI numbers to learned vectors.
#[derive(Debug, Clone)]
pub struct Embedding {
    pub table: ParamId,
    pub dim: usize,
}

impl Embedding {
    pub fn new(store: &mut ParamStore, name: &str, entries: usize, dim: usize, rng: &mut impl Rng) -> Self {
        let table = store.add_uniform(format!("{name}.table"), (entries, dim), 1, rng);
        Self { table, dim }
    }

    /// `(dim, frames)` embedding of a note track.
    pub fn forward(&self, store: &ParamStore, notes: &[u8]) -> Array2<f64> {
        let table = store.get(self.table);
        let mut out = Array2::zeros((self.dim, notes.len()));
        for (f, &n) in notes.iter().enumerate() {
            out.column_mut(f).assign(&table.row(n as usize));
        }
        out
    }

    pub fn backward(&self, grads: &mut Grads, notes: &[u8], dy: &Array2<f64>) {
        let g = grads.get_mut(self.table);
        for (f, &n) in notes.iter().enumerate() {
            let mut row = g.row_mut(n as usize);
            row += &dy.column(f);
        }
    }
}

/// Sinusoidal features of a flow time in [0, 1].
pub fn time_features(t: f64, dim: usize) -> Array1<f64> {
    let half = dim / 2;
    let mut out = Array1::zeros(dim);
    for i in 0..half {
        let freq = (-(10_000f64.ln()) * i as f64 / half as f64).exp();
        let arg = 1000.0 * t * freq;
        out[i] = arg.sin();
        out[half + i] = arg.cos();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
        Array2::from_shape_simple_fn((r, c), || rng.gen_range(-1.0..1.0))
    }

    /// Scalar objective sum(weight * f(x)) for finite-difference checks.
    fn check_input_grad(
        f: impl Fn(&Array2<f64>) -> Array2<f64>,
        df: impl Fn(&Array2<f64>, &Array2<f64>) -> Array2<f64>,
        x: &Array2<f64>,
        rng: &mut ChaCha8Rng,
    ) {
        let y = f(x);
        let w = rand_mat(rng, y.nrows(), y.ncols());
        let dx = df(x, &w);
        let h = 1e-5;
        for _ in 0..10 {
            let (i, j) = (rng.gen_range(0..x.nrows()), rng.gen_range(0..x.ncols()));
            let mut xp = x.clone();
            xp[[i, j]] += h;
            let mut xm = x.clone();
            xm[[i, j]] -= h;
            let num = ((&f(&xp) * &w).sum() - (&f(&xm) * &w).sum()) / (2.0 * h);
            assert!((num - dx[[i, j]]).abs() < 1e-6 * (1.0 + num.abs()), "{num} vs {}", dx[[i, j]]);
        }
    }

    #[test]
    fn conv_input_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let conv = Conv1d::new(&mut store, "c", 3, 4, 3, &mut rng);
        let x = rand_mat(&mut rng, 3, 7);
        check_input_grad(
            |x| conv.forward(&store, x).0,
            |x, w| {
                let (_, cache) = conv.forward(&store, x);
                let mut g = store.zeros_like();
                conv.backward(&store, &mut g, &cache, w)
            },
            &x,
            &mut rng,
        );
    }

    #[test]
    fn conv_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParamStore::new();
        let conv = Conv1d::new(&mut store, "c", 2, 3, 3, &mut rng);
        let x = rand_mat(&mut rng, 2, 5);
        let (y, _) = conv.forward(&store, &x);
        let w = store.get(conv.w);
        for o in 0..3 {
            for t in 0..5 {
                let mut acc = 0.0;
                for c in 0..2 {
                    for j in 0..3 {
                        let src = t as isize + j as isize - 1;
                        if (0..5).contains(&src) {
                            acc += w[[o, c * 3 + j]] * x[[c, src as usize]];
                        }
                    }
                }
                assert!((acc - y[[o, t]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn attention_input_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        let attn = Attention::new(&mut store, "a", 4, 4, &mut rng);
        let x = rand_mat(&mut rng, 4, 6);
        check_input_grad(
            |x| attn.forward(&store, x).0,
            |x, w| {
                let (_, cache) = attn.forward(&store, x);
                let mut g = store.zeros_like();
                attn.backward(&store, &mut g, &cache, w)
            },
            &x,
            &mut rng,
        );
    }

    #[test]
    fn pool_and_upsample_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for t in [5usize, 6] {
            let x = rand_mat(&mut rng, 2, t);
            check_input_grad(pool2, |x, w| pool2_backward(w, x.ncols()), &x, &mut rng);
            let half = t.div_ceil(2);
            let z = rand_mat(&mut rng, 2, half);
            check_input_grad(|z| upsample2(z, t), |z, w| upsample2_backward(w, z.ncols()), &z, &mut rng);
        }
    }

    #[test]
    fn silu_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = rand_mat(&mut rng, 3, 4) * 3.0;
        check_input_grad(silu, silu_backward, &x, &mut rng);
    }
}
