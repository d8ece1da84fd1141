//! The forgery-localization expert: cross-modal reasoning between patch
//! features and class prompts, multi-stage attention fusion with the
//! vocabulary tower, the convolutional decoder, dice loss and training.

mod decoder;
mod fusion;
mod loss;
mod model;
mod train;

pub use decoder::{decode_mask, prob_to_score_map, DecoderNet};
pub use fusion::{
    attention_fusion, attention_fusion_graph, cross_modal_graph, cross_modal_reasoning,
    CrossModalMap, FusedFeature,
};
pub use loss::{dice_loss, dice_loss_graph, mask_tensor, DICE_SMOOTHING};
pub use model::{
    checkpoint_config, flexpert_forward, ExpertModel, ExpertVars, EXPERT_PREFIXES, EXPERT_TRAINABLE,
};
pub use train::{
    load_training_set, train_expert, train_flexpert, EpochLog, TrainOptions, TrainReport,
    TrainingItem,
};

pub(crate) use model::{config_from_meta, streams};
pub(crate) use train::{check_options, epoch_order};
