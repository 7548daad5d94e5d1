//! Optimal-transport conditional flow matching: the linear probability
//! path and its target field, the conditional vector-field UNet with
//! per-block style modulation, prior and style encoders, masked losses,
//! Adam updates, Euler integration and SRNC checkpoints.

mod adam;
mod checkpoint;
mod cond;
pub mod layers;
mod loss;
mod model;
pub mod nets;
mod params;
mod path;

pub use adam::{grad_step, Adam, BETA1, BETA2, EPSILON};
pub use checkpoint::{Checkpoint, SRNC_MAGIC, SRNC_VERSION};
pub use cond::{CondTracks, ConditioningBundle};
pub use loss::{cfm_loss, masked_mse, prior_loss};
pub use model::{CFMConfig, FlowModel, LossParts, MelNorm, TrainSample};
pub use params::{Grads, ParamId, ParamStore};
pub use path::{euler_integrate, flow_point, flow_target, FlowState, VectorField};

#[cfg(test)]
mod tests;
