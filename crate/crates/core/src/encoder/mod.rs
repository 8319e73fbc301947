//! From-scratch transformer encoder with MLM pretraining and TLM
//! fine-tuning. All intermediate layer outputs are exposed so sentence
//! embeddings can be pooled from any depth.
//!
//! Architecture: post-norm blocks with GELU feed-forwards, learned absolute
//! position embeddings, and language-id embeddings added to the token and
//! position embeddings. The MLM output projection is tied to the token
//! embedding table. Dropout is active only when a training context supplies
//! an RNG; inference forwards are pure.

pub mod adam;
pub mod backward;
pub mod config;
pub mod forward;
pub mod gradcheck;
pub mod masking;
pub mod params;
pub mod train;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use backward::{loss_and_grads, loss_only};
pub use config::EncoderConfig;
pub use forward::{forward, Dropout, LayerActivations};
pub use gradcheck::{grad_check, GradCheckReport};
pub use masking::{
    apply_mlm_masking, build_tlm_example, plain_batch, MaskedBatch, MaskedExample, MaskingPolicy,
    TokenBatch,
};
pub use params::{init_params, EncoderParams};
pub use train::{train, StepLog, TrainSchedule};
