//! Losses and training loops for the codec.

pub mod losses;
pub mod posttrain;
pub mod train;

pub use losses::{
    clip_loss, cosine_matrix, cosine_similarity, infonce, infonce_from_similarity, l1_penalty,
    tcl_loss, vq_loss, vq_loss_weighted,
};
pub use posttrain::{rvq_posttrain, PostTrainAudit, PostTrainOutcome};
pub use train::{
    train_codec, train_tokenizer, write_train_log, LossWeights, TrainConfig, TrainLogRow,
    TrainOutcome,
};
