//! Audio-infilling training and conversion: mask sampling, batch assembly,
//! the training loop, concatenation-based conversion, and cyclic data
//! generation and fine-tuning.

mod convert;
mod cyclic;
mod items;
pub mod manifest;
mod mask;
mod train;

pub use crate::flow::ConditioningBundle;
pub use convert::{
    convert, convert_features, convert_with_features, Conversion, ConversionRequest, ConvertSettings,
    MIN_CONVERSION_SECS,
};
pub use cyclic::{generate_cyclic_outputs, generate_cyclic_set, CorpusEntry, CyclicOutput};
pub use items::{extract_features, ClipFeatures, Provenance, TrainingItem};
pub use mask::{sample_mask, Mask};
pub use train::{
    assemble_batch, finetune_cyclic, held_out_loss, init_checkpoint, train, train_steps, TrainConfig,
};
