//! Static word embeddings per language: skip-gram with negative sampling,
//! or a deterministic PPMI + truncated-SVD factorization as a fallback.

use std::collections::HashMap;

use nalgebra::DMatrix;
use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WordVecAlgorithm {
    SkipGram,
    PpmiSvd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WordVecConfig {
    pub dim: usize,
    pub epochs: usize,
    pub window: usize,
    pub negatives: usize,
    pub min_count: u64,
    pub algorithm: WordVecAlgorithm,
    pub learning_rate: f64,
}

impl Default for WordVecConfig {
    fn default() -> Self {
        WordVecConfig {
            dim: 32,
            epochs: 3,
            window: 5,
            negatives: 5,
            min_count: 2,
            algorithm: WordVecAlgorithm::SkipGram,
            learning_rate: 0.025,
        }
    }
}

/// Vocabulary-ordered word vectors. Words are sorted by (count desc, word
/// asc), so index equals frequency rank.
#[derive(Debug, Clone, PartialEq)]
pub struct WordVecTable {
    pub words: Vec<String>,
    index: HashMap<String, usize>,
    pub vectors: Array2<f32>,
    pub counts: Vec<u64>,
}

impl WordVecTable {
    pub fn new(words: Vec<String>, vectors: Array2<f32>, counts: Vec<u64>) -> Result<Self> {
        if words.len() != vectors.nrows() || words.len() != counts.len() {
            return Err(Error::data("table sizes disagree"));
        }
        if vectors.iter().any(|x| !x.is_finite()) {
            return Err(Error::numeric("word vectors contain non-finite values"));
        }
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Ok(WordVecTable { words, index, vectors, counts })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        self.vectors.row(i).to_slice().expect("standard layout")
    }

    /// Unit-normalize all rows in place (zero rows stay zero).
    pub fn normalize(&mut self) {
        for mut row in self.vectors.rows_mut() {
            let norm = crate::vecmath::norm_f64(row.as_slice().expect("standard layout"));
            if norm > 0.0 {
                let inv = (1.0 / norm) as f32;
                row.mapv_inplace(|x| x * inv);
            }
        }
    }
}

fn count_vocab(corpus: &[String], min_count: u64) -> Result<(Vec<String>, Vec<u64>)> {
    let mut counts: HashMap<String, u64> = HashMap::new();
    for line in corpus {
        for w in line.split_whitespace() {
            *counts.entry(w.to_string()).or_insert(0) += 1;
        }
    }
    let mut kept: Vec<(String, u64)> =
        counts.into_iter().filter(|&(_, c)| c >= min_count).collect();
    if kept.is_empty() {
        return Err(Error::data("vocabulary empty after min-count filtering"));
    }
    kept.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(kept.into_iter().unzip())
}

fn sentences_as_ids(corpus: &[String], index: &HashMap<String, usize>) -> Vec<Vec<usize>> {
    corpus
        .iter()
        .map(|line| line.split_whitespace().filter_map(|w| index.get(w).copied()).collect())
        .collect()
}

#[inline]
fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

fn train_sgns(
    sentences: &[Vec<usize>],
    vocab: usize,
    counts: &[u64],
    cfg: &WordVecConfig,
    seed: u64,
) -> Array2<f32> {
    let dim = cfg.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut input = Array2::<f32>::from_shape_fn((vocab, dim), |_| {
        (rng.random_range(0.0f32..1.0) - 0.5) / dim as f32
    });
    let mut output = Array2::<f32>::zeros((vocab, dim));

    // Unigram^{3/4} cumulative table for negative sampling.
    let weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(0.75)).collect();
    let total: f64 = weights.iter().sum();
    let mut cumulative = Vec::with_capacity(vocab);
    let mut acc = 0.0;
    for w in &weights {
        acc += w / total;
        cumulative.push(acc);
    }
    let sample_negative = |rng: &mut ChaCha8Rng| -> usize {
        let r: f64 = rng.random_range(0.0..1.0);
        cumulative.partition_point(|&c| c < r).min(vocab - 1)
    };

    let total_tokens: usize = sentences.iter().map(|s| s.len()).sum::<usize>() * cfg.epochs;
    let mut processed = 0usize;
    let lr0 = cfg.learning_rate as f32;
    let mut grad_in = vec![0.0f32; dim];

    for _ in 0..cfg.epochs {
        for sentence in sentences {
            for (c, &center) in sentence.iter().enumerate() {
                processed += 1;
                let lr = (lr0 * (1.0 - processed as f32 / (total_tokens as f32 + 1.0)))
                    .max(lr0 * 1e-4);
                let span = rng.random_range(1..=cfg.window);
                let lo = c.saturating_sub(span);
                let hi = (c + span).min(sentence.len() - 1);
                for t in lo..=hi {
                    if t == c {
                        continue;
                    }
                    let context = sentence[t];
                    grad_in.fill(0.0);
                    // Positive example plus negatives, classic SGNS updates.
                    for neg in 0..=cfg.negatives {
                        let (target, label) = if neg == 0 {
                            (context, 1.0f32)
                        } else {
                            let mut cand = sample_negative(&mut rng);
                            if cand == context {
                                cand = (cand + 1) % vocab;
                            }
                            (cand, 0.0f32)
                        };
                        let dot: f32 = (0..dim)
                            .map(|d| input[[center, d]] * output[[target, d]])
                            .sum();
                        let g = (label - sigmoid(dot)) * lr;
                        for d in 0..dim {
                            grad_in[d] += g * output[[target, d]];
                            output[[target, d]] += g * input[[center, d]];
                        }
                    }
                    for d in 0..dim {
                        input[[center, d]] += grad_in[d];
                    }
                }
            }
        }
    }
    input
}

/// Symmetric within-window co-occurrence counts.
pub fn cooccurrence_counts(sentences: &[Vec<usize>], vocab: usize, window: usize) -> Array2<f64> {
    let mut counts = Array2::<f64>::zeros((vocab, vocab));
    for sentence in sentences {
        for (c, &center) in sentence.iter().enumerate() {
            let lo = c.saturating_sub(window);
            let hi = (c + window).min(sentence.len().saturating_sub(1));
            for t in lo..=hi {
                if t != c {
                    counts[[center, sentence[t]]] += 1.0;
                }
            }
        }
    }
    counts
}

/// Positive pointwise mutual information of a co-occurrence matrix.
pub fn ppmi_matrix(cooc: &Array2<f64>) -> Array2<f64> {
    let total: f64 = cooc.sum();
    if total == 0.0 {
        return cooc.clone();
    }
    let row_sums: Vec<f64> = cooc.rows().into_iter().map(|r| r.sum()).collect();
    let col_sums: Vec<f64> = (0..cooc.ncols()).map(|j| cooc.column(j).sum()).collect();
    Array2::from_shape_fn(cooc.raw_dim(), |(i, j)| {
        let joint = cooc[[i, j]];
        if joint == 0.0 || row_sums[i] == 0.0 || col_sums[j] == 0.0 {
            0.0
        } else {
            ((joint * total) / (row_sums[i] * col_sums[j])).ln().max(0.0)
        }
    })
}

/// Rank-k SVD factors (U_k, S_k, V_k^T), singular values descending.
pub fn truncated_svd(m: &Array2<f64>, k: usize) -> (Array2<f64>, Vec<f64>, Array2<f64>) {
    let (rows, cols) = m.dim();
    let dm = DMatrix::from_fn(rows, cols, |i, j| m[[i, j]]);
    let mut svd = dm.svd(true, true);
    svd.sort_by_singular_values();
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    let k = k.min(svd.singular_values.len());
    let s: Vec<f64> = svd.singular_values.iter().take(k).copied().collect();
    let u_k = Array2::from_shape_fn((rows, k), |(i, j)| u[(i, j)]);
    let vt_k = Array2::from_shape_fn((k, cols), |(i, j)| vt[(i, j)]);
    (u_k, s, vt_k)
}

/// Learn word vectors for one language. Deterministic per seed.
pub fn train_word_vectors(
    corpus: &[String],
    cfg: &WordVecConfig,
    seed: u64,
) -> Result<WordVecTable> {
    if corpus.is_empty() {
        return Err(Error::data("empty corpus for word vector training"));
    }
    let (words, counts) = count_vocab(corpus, cfg.min_count)?;
    let index: HashMap<String, usize> =
        words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
    let sentences = sentences_as_ids(corpus, &index);
    let vectors = match cfg.algorithm {
        WordVecAlgorithm::SkipGram => train_sgns(&sentences, words.len(), &counts, cfg, seed),
        WordVecAlgorithm::PpmiSvd => {
            let cooc = cooccurrence_counts(&sentences, words.len(), cfg.window);
            let ppmi = ppmi_matrix(&cooc);
            let (u, s, _) = truncated_svd(&ppmi, cfg.dim.min(words.len()));
            Array2::from_shape_fn((words.len(), s.len()), |(i, j)| {
                (u[[i, j]] * s[j].sqrt()) as f32
            })
        }
    };
    WordVecTable::new(words, vectors, counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vecmath::{cosine, norm_f64};

    fn cyclic_corpus(n: usize) -> Vec<String> {
        // Three words, two sentence shapes cycling an anchor word: wa and wb
        // occupy the same slot, so their window-1 contexts are identical
        // ({wc, wc} everywhere); wc is the shared anchor.
        (0..n)
            .map(|i| {
                if i % 2 == 0 {
                    "wc wa wc wa wc wa wc wa wc".to_string()
                } else {
                    "wc wb wc wb wc wb wc wb wc".to_string()
                }
            })
            .collect()
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let corpus = cyclic_corpus(50);
        let cfg = WordVecConfig { dim: 8, epochs: 2, ..Default::default() };
        let a = train_word_vectors(&corpus, &cfg, 9).unwrap();
        let b = train_word_vectors(&corpus, &cfg, 9).unwrap();
        assert_eq!(a, b);
        let c = train_word_vectors(&corpus, &cfg, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn identical_context_words_align_in_the_cyclic_corpus() {
        let corpus = cyclic_corpus(400);
        let cfg = WordVecConfig { dim: 16, epochs: 5, min_count: 1, window: 1, ..Default::default() };
        let table = train_word_vectors(&corpus, &cfg, 3).unwrap();
        let i = table.index_of("wa").unwrap();
        let j = table.index_of("wb").unwrap();
        let (a, b) = (table.vector(i), table.vector(j));
        let cos = cosine(a, b, norm_f64(a), norm_f64(b));
        assert!(cos > 0.9, "cos(wa,wb) = {}", cos);
    }

    #[test]
    fn min_count_filters_and_empty_vocab_errors() {
        let corpus = vec!["one two two".to_string()];
        let cfg = WordVecConfig { min_count: 2, ..Default::default() };
        let table = train_word_vectors(&corpus, &cfg, 1).unwrap();
        assert_eq!(table.words, vec!["two".to_string()]);
        let strict = WordVecConfig { min_count: 5, ..Default::default() };
        assert!(matches!(train_word_vectors(&corpus, &strict, 1), Err(Error::Data(_))));
    }

    #[test]
    fn words_are_ordered_by_frequency_then_name() {
        let corpus = vec!["b a b c c c".to_string()];
        let cfg = WordVecConfig { min_count: 1, ..Default::default() };
        let table = train_word_vectors(&corpus, &cfg, 1).unwrap();
        assert_eq!(table.words, vec!["c".to_string(), "b".to_string(), "a".to_string()]);
        assert_eq!(table.counts, vec![3, 2, 1]);
    }

    #[test]
    fn ppmi_svd_reconstructs_a_two_word_matrix() {
        // Two alternating words: the PPMI matrix is 2x2 and rank <= 2, so the
        // rank-2 factorization must reproduce it (nearly) exactly.
        let corpus: Vec<String> = (0..50).map(|_| "wx wy wx wy wx wy".to_string()).collect();
        let cfg = WordVecConfig { min_count: 1, window: 1, ..Default::default() };
        let (words, _counts) = count_vocab(&corpus, cfg.min_count).unwrap();
        assert_eq!(words.len(), 2);
        let index: HashMap<String, usize> =
            words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        let sentences = sentences_as_ids(&corpus, &index);
        let cooc = cooccurrence_counts(&sentences, 2, cfg.window);
        let ppmi = ppmi_matrix(&cooc);
        let (u, s, vt) = truncated_svd(&ppmi, 2);
        let mut recon = Array2::<f64>::zeros((2, 2));
        for i in 0..2 {
            for j in 0..2 {
                for r in 0..s.len() {
                    recon[[i, j]] += u[[i, r]] * s[r] * vt[[r, j]];
                }
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                assert!(
                    (recon[[i, j]] - ppmi[[i, j]]).abs() < 1e-6,
                    "recon {:?} vs ppmi {:?}",
                    recon,
                    ppmi
                );
            }
        }
    }
}
