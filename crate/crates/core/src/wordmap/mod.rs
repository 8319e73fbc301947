//! Word Mapping baseline: per-language static word embeddings aligned into a
//! shared space with an orthogonal map learned by Procrustes self-learning,
//! then mean-pooled into sentence embeddings. The pooled output is an
//! ordinary `EmbeddingSet`, so the miner and matcher treat this baseline
//! exactly like the encoder systems.

pub mod align;
pub mod io;
pub mod pool;
pub mod vectors;

pub use align::{
    orthogonal_procrustes, self_learning_align, translation_precision, AlignInit, AlignResult,
    OrthogonalMap,
};
pub use pool::{compute_idf, pool_word_embeddings, sentence_embeddings};
pub use vectors::{train_word_vectors, WordVecAlgorithm, WordVecConfig, WordVecTable};
