//! Synthetic cipher languages with exact translation ground truth.
//!
//! A shared base grammar generates abstract sentences; each language renders
//! them through a bijective word cipher, a windowed reordering rule and
//! per-class suffixes. Because every language expresses the same base
//! sentence, gold alignments for mining and matching tasks are known exactly.

pub mod grammar;
pub mod io;
pub mod language;
pub mod parallel;
pub mod task;

pub use grammar::{generate_base_corpus, generate_unique_base_corpus, BaseGrammar, WORD_CLASSES};
pub use language::{de_render, derive_language, render, surface_overlap, LanguageRecord, LanguageSpec};
pub use parallel::{build_parallel_set, render_corpus, BaseSentence, RenderedSentence, SentencePair};
pub use task::{build_mining_task, MiningTask, Split};
