//! babelmine: a desk-scale laboratory for multilingual sentence embeddings
//! and parallel corpus mining.
//!
//! The pipeline mirrors the full-scale recipe at benchtop size: pretrain a
//! small masked-LM transformer on monolingual corpora of several synthetic
//! cipher languages, fine-tune it with a translation language-model objective
//! on a small (optionally noisy) parallel set, pool per-layer activations
//! into sentence embeddings, and use those for margin-based parallel corpus
//! mining and parallel sentence matching. Cipher languages provide exact
//! gold alignments, so every directional claim is checkable.

pub mod embedder;
pub mod encoder;
pub mod error;
pub mod harness;
pub mod hashutil;
pub mod matcher;
pub mod miner;
pub mod synthlang;
pub mod tokenizer;
pub mod vecmath;
pub mod wordmap;

pub use error::{Error, Result};
