//! Parallel sets: pairs of renderings of the same base sentence.
//!
//! The source side is always rendered noiselessly; the target side carries
//! the configured noise rate. Rate 0 models authentic translations, a
//! positive rate models imperfect machine-translated output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::synthlang::language::{render, LanguageSpec};

/// A base sentence tagged with its global index.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseSentence {
    pub idx: usize,
    pub words: Vec<u32>,
}

/// A rendered sentence that remembers which base sentence produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedSentence {
    pub base_idx: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentencePair {
    pub src: String,
    pub tgt: String,
    pub base_idx: usize,
}

/// Render a monolingual corpus, keeping base indices.
pub fn render_corpus(
    bases: &[BaseSentence],
    spec: &LanguageSpec,
    noise_rate: f64,
    seed: u64,
) -> Result<Vec<RenderedSentence>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    bases
        .iter()
        .map(|b| {
            Ok(RenderedSentence {
                base_idx: b.idx,
                text: render(&b.words, spec, noise_rate, &mut rng)?,
            })
        })
        .collect()
}

/// Build `n_pairs` sentence pairs from the leading base sentences.
pub fn build_parallel_set(
    bases: &[BaseSentence],
    spec_src: &LanguageSpec,
    spec_tgt: &LanguageSpec,
    n_pairs: usize,
    noise_rate: f64,
    seed: u64,
) -> Result<Vec<SentencePair>> {
    if n_pairs > bases.len() {
        return Err(Error::config(format!(
            "requested {} pairs from a corpus of {} sentences",
            n_pairs,
            bases.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    bases[..n_pairs]
        .iter()
        .map(|b| {
            Ok(SentencePair {
                src: render(&b.words, spec_src, 0.0, &mut rng)?,
                tgt: render(&b.words, spec_tgt, noise_rate, &mut rng)?,
                base_idx: b.idx,
            })
        })
        .collect()
}
