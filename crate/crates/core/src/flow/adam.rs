use ndarray::Array2;

use super::params::{round32, Grads, ParamStore};
use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Adaptive-moment optimizer state. Parameters and moments are kept
/// representable in `f32` so checkpoints restore them exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub m: Vec<Array2<f64>>,
    pub v: Vec<Array2<f64>>,
    pub step: u64,
}

impl Adam {
    pub fn new(params: &ParamStore) -> Self {
        let zeros = params.zeros_like().0;
        Self { m: zeros.clone(), v: zeros, step: 0 }
    }
}

/// One update. Non-finite gradients abort the step and leave all state untouched.
pub fn grad_step(params: &mut ParamStore, grads: &Grads, state: &mut Adam, lr: f64) -> Result<()> {
    if grads.0.len() != params.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} gradient blocks", params.len()),
            got: grads.0.len().to_string(),
        });
    }
    for (id, g) in params.ids().zip(&grads.0) {
        if params.get(id).dim() != g.dim() {
            return Err(Error::ShapeMismatch {
                expected: format!("{:?} for {}", params.get(id).dim(), params.name(id)),
                got: format!("{:?}", g.dim()),
            });
        }
    }
    if !grads.is_finite() {
        return Err(Error::Numeric(format!("non-finite gradient at step {}", state.step + 1)));
    }
    state.step += 1;
    let bc1 = 1.0 - BETA1.powi(state.step as i32);
    let bc2 = 1.0 - BETA2.powi(state.step as i32);
    for (i, id) in params.ids().collect::<Vec<_>>().into_iter().enumerate() {
        let g = &grads.0[i];
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        let w = params.get_mut(id);
        ndarray::Zip::from(w).and(m).and(v).and(g).for_each(|w, m, v, &g| {
            *m = round32(BETA1 * *m + (1.0 - BETA1) * g);
            *v = round32(BETA2 * *v + (1.0 - BETA2) * g * g);
            let mh = *m / bc1;
            let vh = *v / bc2;
            *w = round32(*w - lr * mh / (vh.sqrt() + EPSILON));
        });
    }
    Ok(())
}
