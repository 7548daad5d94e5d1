use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::cond::{CondTracks, ConditioningBundle};
use super::loss::masked_mse;
use super::nets::{Arch, PriorEncoder, StyleEncoder, VectorFieldNet};
use super::params::{round32, Grads, ParamId, ParamStore};
use super::path::{euler_integrate, flow_point, flow_target, VectorField};
use crate::dsp::MelSpectrogram;
use crate::error::{Error, Result};
use crate::infill::Mask;

/// Hyperparameters of the flow model and its optimizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CFMConfig {
    pub sigma_min: f64,
    pub euler_steps: usize,
    pub learning_rate: f64,
    pub style_dim: usize,
    pub channels: usize,
    pub n_mels: usize,
    pub style_tokens: usize,
    pub head_dim: usize,
}

impl Default for CFMConfig {
    fn default() -> Self {
        Self {
            sigma_min: 1e-4,
            euler_steps: 32,
            learning_rate: 1e-3,
            style_dim: 64,
            channels: 128,
            n_mels: 80,
            style_tokens: 8,
            head_dim: 64,
        }
    }
}

impl CFMConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.sigma_min) {
            return Err(Error::invalid(format!("sigma_min {} outside [0, 1)", self.sigma_min)));
        }
        if self.euler_steps == 0 {
            return Err(Error::invalid("euler_steps must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        for (name, v) in [
            ("style_dim", self.style_dim),
            ("channels", self.channels),
            ("n_mels", self.n_mels),
            ("style_tokens", self.style_tokens),
            ("head_dim", self.head_dim),
        ] {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Real-valued fields rounded to f32 so the config survives a checkpoint.
    pub(crate) fn stored(mut self) -> Self {
        self.sigma_min = round32(self.sigma_min);
        self.learning_rate = round32(self.learning_rate);
        self
    }

    fn arch(&self) -> Arch {
        Arch {
            n_mels: self.n_mels,
            channels: self.channels,
            style_dim: self.style_dim,
            style_tokens: self.style_tokens,
            head_dim: self.head_dim,
        }
    }
}

/// Scalar standardization of log-mel values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MelNorm {
    pub mean: f64,
    pub std: f64,
}

impl Default for MelNorm {
    fn default() -> Self {
        Self { mean: 0.0, std: 1.0 }
    }
}

impl MelNorm {
    pub fn fit<'a>(mels: impl IntoIterator<Item = &'a MelSpectrogram>) -> Result<Self> {
        let (mut n, mut s, mut ss) = (0usize, 0.0, 0.0);
        for m in mels {
            for &v in m.data.iter() {
                n += 1;
                s += v;
                ss += v * v;
            }
        }
        if n == 0 {
            return Err(Error::invalid("cannot fit normalization on empty corpus"));
        }
        let mean = s / n as f64;
        let std = (ss / n as f64 - mean * mean).max(0.0).sqrt().max(1e-3);
        Ok(Self { mean: round32(mean), std: round32(std) })
    }

    pub fn apply(&self, mel: &Array2<f64>) -> Array2<f64> {
        mel.mapv(|v| (v - self.mean) / self.std)
    }

    pub fn invert(&self, x: &Array2<f64>) -> Array2<f64> {
        x.mapv(|v| v * self.std + self.mean)
    }
}

/// Loss components of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub total: f64,
    pub cfm: f64,
    pub prior: f64,
}

impl LossParts {
    pub fn mean(parts: &[LossParts]) -> LossParts {
        let n = parts.len().max(1) as f64;
        let mut out = LossParts::default();
        for p in parts {
            out.total += p.total / n;
            out.cfm += p.cfm / n;
            out.prior += p.prior / n;
        }
        out
    }
}

/// One training example in model space.
#[derive(Debug, Clone)]
pub struct TrainSample {
    /// Target mel crop, `T x D`.
    pub x1: Array2<f64>,
    pub tracks: CondTracks,
    /// Full-length mel the style vector is computed from.
    pub style_mel: Array2<f64>,
    pub mask: Mask,
    pub x0: Array2<f64>,
    pub t: f64,
}

/// Vector-field network, prior encoder and style encoder sharing one
/// parameter store.
#[derive(Debug, Clone)]
pub struct FlowModel {
    pub cfg: CFMConfig,
    pub seed: u64,
    pub params: ParamStore,
    pub norm: MelNorm,
    vf: VectorFieldNet,
    prior: PriorEncoder,
    style: StyleEncoder,
}

impl PartialEq for FlowModel {
    fn eq(&self, other: &Self) -> bool {
        self.cfg == other.cfg && self.seed == other.seed && self.params == other.params && self.norm == other.norm
    }
}

impl FlowModel {
    pub fn new(cfg: CFMConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let cfg = cfg.stored();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let arch = cfg.arch();
        let vf = VectorFieldNet::new(&mut params, arch, &mut rng);
        let prior = PriorEncoder::new(&mut params, arch, &mut rng);
        let style = StyleEncoder::new(&mut params, arch, &mut rng);
        Ok(Self { cfg, seed, params, norm: MelNorm::default(), vf, prior, style })
    }

    /// Parameter blocks belonging to one network: `"vf"`, `"prior"` or `"style"`.
    pub fn network_params(&self, net: &str) -> Vec<ParamId> {
        let prefix = format!("{net}.");
        self.params.ids().filter(|&id| self.params.name(id).starts_with(&prefix)).collect()
    }

    fn check_mel(&self, m: &Array2<f64>) -> Result<()> {
        if m.ncols() != self.cfg.n_mels {
            return Err(Error::ShapeMismatch {
                expected: format!("{} mel channels", self.cfg.n_mels),
                got: m.ncols().to_string(),
            });
        }
        if m.nrows() == 0 {
            return Err(Error::invalid("empty mel"));
        }
        Ok(())
    }

    /// Field value `v_t(x; cond)`; `x` is `T x D` in model space.
    pub fn vf_forward(&self, x: &Array2<f64>, t: f64, cond: &ConditioningBundle) -> Result<Array2<f64>> {
        self.check_mel(x)?;
        cond.validate(self.cfg.n_mels, self.cfg.style_dim)?;
        if cond.frames() != x.nrows() {
            return Err(Error::FrameMismatch { a: x.nrows(), b: cond.frames() });
        }
        Ok(self.vf.forward(&self.params, x, t, cond).0)
    }

    pub fn prior_forward(&self, tracks: &CondTracks) -> Result<Array2<f64>> {
        tracks.validate()?;
        if tracks.frames() == 0 {
            return Err(Error::invalid("empty conditioning"));
        }
        Ok(self.prior.forward(&self.params, tracks).0)
    }

    /// Style vector of a model-space mel.
    pub fn style_forward(&self, mel: &Array2<f64>) -> Result<Array1<f64>> {
        self.check_mel(mel)?;
        Ok(self.style.forward(&self.params, mel).0)
    }

    /// Parameter gradient of `dstyle . style_forward(mel)`.
    pub fn style_vjp(&self, mel: &Array2<f64>, dstyle: &Array1<f64>) -> Result<Grads> {
        self.check_mel(mel)?;
        if dstyle.len() != self.cfg.style_dim {
            return Err(Error::ShapeMismatch {
                expected: format!("{} style dims", self.cfg.style_dim),
                got: dstyle.len().to_string(),
            });
        }
        let (_, cache) = self.style.forward(&self.params, mel);
        let mut grads = self.params.zeros_like();
        self.style.backward(&self.params, &mut grads, &cache, dstyle);
        Ok(grads)
    }

    /// Style vector of a log-mel spectrogram.
    pub fn style_encode(&self, mel: &MelSpectrogram) -> Result<Array1<f64>> {
        self.style_forward(&self.norm.apply(&mel.data))
    }

    /// Conditioning for generation: computes the prior from `tracks`.
    pub fn bundle(&self, tracks: CondTracks, masked_mel: Array2<f64>, style: Array1<f64>) -> Result<ConditioningBundle> {
        let prior = self.prior_forward(&tracks)?;
        let cond = ConditioningBundle { tracks, masked_mel, prior, style };
        cond.validate(self.cfg.n_mels, self.cfg.style_dim)?;
        Ok(cond)
    }

    /// Integrates the learned field from `x0` to `t = 1`.
    pub fn generate(&self, cond: &ConditioningBundle, x0: &Array2<f64>, steps: usize) -> Result<Array2<f64>> {
        let field = ConditionedField { model: self, cond };
        euler_integrate(&field, x0, steps)
    }

    /// Losses of one sample without gradients.
    pub fn evaluate(&self, s: &TrainSample) -> Result<LossParts> {
        let style = self.style_forward(&s.style_mel)?;
        let prior = self.prior_forward(&s.tracks)?;
        let cond = ConditioningBundle { tracks: s.tracks.clone(), masked_mel: s.mask.hide(&s.x1), prior, style };
        let sigma = self.cfg.sigma_min;
        let xt = flow_point(&s.x0, &s.x1, s.t, sigma)?;
        let u = flow_target(&s.x0, &s.x1, sigma)?;
        let v = self.vf_forward(&xt, s.t, &cond)?;
        let cfm = masked_mse(&v, &u, &s.mask)?.0;
        let prior = masked_mse(&cond.prior, &s.x1, &s.mask)?.0;
        Ok(LossParts { total: cfm + prior, cfm, prior })
    }

    /// Losses and gradients of one sample. The prior enters the vector
    /// field as a detached input and is trained by its own loss.
    pub fn loss_and_grads(&self, s: &TrainSample) -> Result<(LossParts, Grads)> {
        self.check_mel(&s.x1)?;
        self.check_mel(&s.style_mel)?;
        s.tracks.validate()?;
        if s.tracks.frames() != s.x1.nrows() {
            return Err(Error::FrameMismatch { a: s.x1.nrows(), b: s.tracks.frames() });
        }
        let p = &self.params;
        let (style, sc) = self.style.forward(p, &s.style_mel);
        let (prior, pc) = self.prior.forward(p, &s.tracks);
        let cond = ConditioningBundle { tracks: s.tracks.clone(), masked_mel: s.mask.hide(&s.x1), prior, style };
        let sigma = self.cfg.sigma_min;
        let xt = flow_point(&s.x0, &s.x1, s.t, sigma)?;
        let u = flow_target(&s.x0, &s.x1, sigma)?;
        let (v, vc) = self.vf.forward(p, &xt, s.t, &cond);
        let (cfm, dv) = masked_mse(&v, &u, &s.mask)?;
        let (prior_l, dprior) = masked_mse(&cond.prior, &s.x1, &s.mask)?;
        let mut grads = p.zeros_like();
        let dstyle = self.vf.backward(p, &mut grads, &vc, &cond, &dv);
        self.style.backward(p, &mut grads, &sc, &dstyle);
        self.prior.backward(p, &mut grads, &pc, &s.tracks, &dprior);
        let parts = LossParts { total: cfm + prior_l, cfm, prior: prior_l };
        if !parts.total.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss {}", parts.total)));
        }
        Ok((parts, grads))
    }
}

struct ConditionedField<'a> {
    model: &'a FlowModel,
    cond: &'a ConditioningBundle,
}

impl VectorField for ConditionedField<'_> {
    fn eval(&self, x: &Array2<f64>, t: f64) -> Result<Array2<f64>> {
        self.model.vf_forward(x, t, self.cond)
    }
}
