//! Masked-batch construction for MLM pretraining and TLM fine-tuning.
//!
//! MLM rows are single sentences (BOS ... SEP). TLM rows concatenate a
//! sentence pair as BOS src SEP tgt SEP; position ids restart at zero for the
//! target group and language ids mark each group, so masked tokens can be
//! filled from either side's context.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tokenizer::{BOS_ID, MASK_ID, PAD_ID, SEP_ID};

/// Token-selection policy: each candidate token is selected with probability
/// `select_prob`; a selected token is replaced by MASK, replaced by a random
/// regular token, or kept, with the given fractions.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MaskingPolicy {
    pub select_prob: f64,
    pub mask_frac: f64,
    pub random_frac: f64,
}

impl Default for MaskingPolicy {
    fn default() -> Self {
        // 15% selection with the 80/10/10 replacement scheme.
        MaskingPolicy { select_prob: 0.15, mask_frac: 0.8, random_frac: 0.1 }
    }
}

impl MaskingPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.select_prob) {
            return Err(Error::config("select_prob must be in [0,1]"));
        }
        if self.mask_frac < 0.0 || self.random_frac < 0.0 || self.mask_frac + self.random_frac > 1.0 {
            return Err(Error::config("mask_frac + random_frac must stay within [0,1]"));
        }
        Ok(())
    }
}

/// One training row before batching.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedExample {
    pub tokens: Vec<u32>,
    pub positions: Vec<u32>,
    pub languages: Vec<u32>,
    /// (index into tokens, original token id) per prediction position.
    pub labels: Vec<(usize, u32)>,
}

/// Inputs to a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenBatch {
    pub tokens: Array2<u32>,
    pub positions: Array2<u32>,
    pub languages: Array2<u32>,
    /// true at real positions, false at padding.
    pub mask: Array2<bool>,
}

impl TokenBatch {
    pub fn batch_size(&self) -> usize {
        self.tokens.nrows()
    }

    pub fn seq_len(&self) -> usize {
        self.tokens.ncols()
    }
}

/// A forward batch plus prediction positions and their original labels.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedBatch {
    pub batch: TokenBatch,
    /// (row, column, original token id).
    pub predictions: Vec<(usize, usize, u32)>,
}

/// Apply masking in place over `tokens[maskable]`, returning (index, label)
/// pairs. Forces one prediction position when selection comes up empty.
fn mask_positions(
    tokens: &mut [u32],
    maskable: &[usize],
    policy: &MaskingPolicy,
    first_regular_id: u32,
    vocab_size: u32,
    rng: &mut ChaCha8Rng,
) -> Vec<(usize, u32)> {
    let mut selected: Vec<usize> = maskable
        .iter()
        .copied()
        .filter(|_| rng.random_bool(policy.select_prob))
        .collect();
    if selected.is_empty() && !maskable.is_empty() {
        selected.push(maskable[rng.random_range(0..maskable.len())]);
    }
    let mut labels = Vec::with_capacity(selected.len());
    for idx in selected {
        let original = tokens[idx];
        labels.push((idx, original));
        let roll: f64 = rng.random_range(0.0..1.0);
        if roll < policy.mask_frac {
            tokens[idx] = MASK_ID;
        } else if roll < policy.mask_frac + policy.random_frac {
            tokens[idx] = rng.random_range(first_regular_id..vocab_size);
        }
        // else: keep the original token; it still carries a label.
    }
    labels
}

/// Build one MLM row: BOS sentence SEP, positions 0..len, constant language.
pub fn apply_mlm_masking(
    sentence: &[u32],
    lang_id: u32,
    policy: &MaskingPolicy,
    first_regular_id: u32,
    vocab_size: u32,
    rng: &mut ChaCha8Rng,
) -> Result<MaskedExample> {
    policy.validate()?;
    if sentence.is_empty() {
        return Err(Error::data("cannot mask an empty sentence"));
    }
    let mut tokens = Vec::with_capacity(sentence.len() + 2);
    tokens.push(BOS_ID);
    tokens.extend_from_slice(sentence);
    tokens.push(SEP_ID);
    let maskable: Vec<usize> = (1..=sentence.len()).filter(|&i| tokens[i] >= first_regular_id).collect();
    let labels = mask_positions(&mut tokens, &maskable, policy, first_regular_id, vocab_size, rng);
    let len = tokens.len();
    Ok(MaskedExample {
        tokens,
        positions: (0..len as u32).collect(),
        languages: vec![lang_id; len],
        labels,
    })
}

/// Build one TLM row: BOS src SEP tgt SEP. The leading group (BOS src SEP)
/// is numbered 0..=len_src+1 and carries the source language id; the target
/// group (tgt SEP) restarts numbering at 0 and carries the target language
/// id. Masking applies across both sentences; specials are never selected.
#[allow(clippy::too_many_arguments)]
pub fn build_tlm_example(
    src_tokens: &[u32],
    tgt_tokens: &[u32],
    src_lang: u32,
    tgt_lang: u32,
    policy: &MaskingPolicy,
    first_regular_id: u32,
    vocab_size: u32,
    max_positions: usize,
    rng: &mut ChaCha8Rng,
) -> Result<MaskedExample> {
    policy.validate()?;
    let total = src_tokens.len() + tgt_tokens.len() + 3;
    if total > max_positions {
        return Err(Error::data(format!(
            "TLM example of length {} exceeds max_positions {}",
            total, max_positions
        )));
    }
    let mut tokens = Vec::with_capacity(total);
    tokens.push(BOS_ID);
    tokens.extend_from_slice(src_tokens);
    tokens.push(SEP_ID);
    let tgt_start = tokens.len();
    tokens.extend_from_slice(tgt_tokens);
    tokens.push(SEP_ID);

    let mut positions = Vec::with_capacity(total);
    positions.extend(0..(src_tokens.len() + 2) as u32);
    positions.extend(0..(tgt_tokens.len() + 1) as u32);

    let mut languages = vec![src_lang; tgt_start];
    languages.extend(vec![tgt_lang; tgt_tokens.len() + 1]);

    let maskable: Vec<usize> = (1..tokens.len())
        .filter(|&i| tokens[i] >= first_regular_id)
        .collect();
    if maskable.is_empty() {
        return Err(Error::data("TLM pair has no maskable tokens"));
    }
    let labels = mask_positions(&mut tokens, &maskable, policy, first_regular_id, vocab_size, rng);
    Ok(MaskedExample { tokens, positions, languages, labels })
}

impl MaskedBatch {
    /// Stack rows into a padded batch. Requires at least one prediction
    /// position overall.
    pub fn from_examples(examples: &[MaskedExample]) -> Result<MaskedBatch> {
        if examples.is_empty() {
            return Err(Error::data("cannot build an empty batch"));
        }
        let b = examples.len();
        let t = examples.iter().map(|e| e.tokens.len()).max().unwrap();
        let mut tokens = Array2::<u32>::from_elem((b, t), PAD_ID);
        let mut positions = Array2::<u32>::zeros((b, t));
        let mut languages = Array2::<u32>::zeros((b, t));
        let mut mask = Array2::<bool>::from_elem((b, t), false);
        let mut predictions = Vec::new();
        for (row, ex) in examples.iter().enumerate() {
            let pad_lang = *ex.languages.last().unwrap_or(&0);
            for col in 0..t {
                if col < ex.tokens.len() {
                    tokens[[row, col]] = ex.tokens[col];
                    positions[[row, col]] = ex.positions[col];
                    languages[[row, col]] = ex.languages[col];
                    mask[[row, col]] = true;
                } else {
                    languages[[row, col]] = pad_lang;
                }
            }
            for &(idx, label) in &ex.labels {
                predictions.push((row, idx, label));
            }
        }
        if predictions.is_empty() {
            return Err(Error::data("batch has no prediction positions"));
        }
        Ok(MaskedBatch {
            batch: TokenBatch { tokens, positions, languages, mask },
            predictions,
        })
    }
}

/// Unmasked single-segment batch for embedding extraction.
pub fn plain_batch(sentences: &[Vec<u32>], lang_id: u32) -> Result<TokenBatch> {
    if sentences.is_empty() {
        return Err(Error::data("cannot build an empty batch"));
    }
    let b = sentences.len();
    let t = sentences.iter().map(|s| s.len() + 2).max().unwrap();
    let mut tokens = Array2::<u32>::from_elem((b, t), PAD_ID);
    let mut positions = Array2::<u32>::zeros((b, t));
    let languages = Array2::<u32>::from_elem((b, t), lang_id);
    let mut mask = Array2::<bool>::from_elem((b, t), false);
    for (row, s) in sentences.iter().enumerate() {
        let len = s.len() + 2;
        tokens[[row, 0]] = BOS_ID;
        for (i, &id) in s.iter().enumerate() {
            tokens[[row, i + 1]] = id;
        }
        tokens[[row, len - 1]] = SEP_ID;
        for col in 0..len {
            positions[[row, col]] = col as u32;
            mask[[row, col]] = true;
        }
    }
    Ok(TokenBatch { tokens, positions, languages, mask })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    const FIRST_REGULAR: u32 = 5;
    const VOCAB: u32 = 40;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn zero_select_prob_forces_one_prediction() {
        let policy = MaskingPolicy { select_prob: 0.0, ..MaskingPolicy::default() };
        let ex = apply_mlm_masking(&[7, 8, 9], 1, &policy, FIRST_REGULAR, VOCAB, &mut rng(3)).unwrap();
        assert_eq!(ex.labels.len(), 1);
        let (idx, label) = ex.labels[0];
        assert!(idx >= 1 && idx <= 3);
        assert_eq!(label, [7, 8, 9][idx - 1]);
    }

    #[test]
    fn full_selection_all_mask_replaces_everything() {
        let policy = MaskingPolicy { select_prob: 1.0, mask_frac: 1.0, random_frac: 0.0 };
        let sentence = [7u32, 8, 9, 10];
        let ex = apply_mlm_masking(&sentence, 1, &policy, FIRST_REGULAR, VOCAB, &mut rng(3)).unwrap();
        assert_eq!(ex.labels.len(), sentence.len());
        for i in 1..=sentence.len() {
            assert_eq!(ex.tokens[i], MASK_ID);
        }
        let mut labels = ex.labels.clone();
        labels.sort_unstable();
        assert_eq!(labels, vec![(1, 7), (2, 8), (3, 9), (4, 10)]);
        // Specials survive untouched.
        assert_eq!(ex.tokens[0], BOS_ID);
        assert_eq!(*ex.tokens.last().unwrap(), SEP_ID);
    }

    #[test]
    fn selection_count_is_binomial() {
        let sentence: Vec<u32> = (0..10_000).map(|i| FIRST_REGULAR + (i % 30)).collect();
        let policy = MaskingPolicy::default();
        let ex = apply_mlm_masking(&sentence, 0, &policy, FIRST_REGULAR, VOCAB, &mut rng(11)).unwrap();
        let n = sentence.len() as f64;
        let expected = n * policy.select_prob;
        let sigma = (n * policy.select_prob * (1.0 - policy.select_prob)).sqrt();
        let count = ex.labels.len() as f64;
        assert!(
            (count - expected).abs() <= 3.0 * sigma,
            "selected {} vs expected {} +- {}",
            count,
            expected,
            3.0 * sigma
        );
    }

    #[test]
    fn labels_match_originals_and_inputs_differ_only_at_predictions() {
        let sentence: Vec<u32> = (0..200).map(|i| FIRST_REGULAR + (i % 30)).collect();
        let ex = apply_mlm_masking(&sentence, 0, &MaskingPolicy::default(), FIRST_REGULAR, VOCAB, &mut rng(5)).unwrap();
        let labelled: std::collections::HashSet<usize> = ex.labels.iter().map(|&(i, _)| i).collect();
        for (i, &tok) in ex.tokens.iter().enumerate() {
            if i == 0 || i == ex.tokens.len() - 1 {
                continue;
            }
            let original = sentence[i - 1];
            if labelled.contains(&i) {
                let (_, label) = ex.labels.iter().find(|&&(j, _)| j == i).unwrap();
                assert_eq!(*label, original);
            } else {
                assert_eq!(tok, original, "unselected position {} changed", i);
            }
        }
    }

    #[test]
    fn tlm_layout_positions_and_languages() {
        let policy = MaskingPolicy { select_prob: 0.0, ..MaskingPolicy::default() };
        let ex = build_tlm_example(&[10, 11, 12], &[20, 21], 0, 1, &policy, FIRST_REGULAR, VOCAB, 64, &mut rng(2)).unwrap();
        assert_eq!(ex.tokens.len(), 8);
        assert_eq!(ex.tokens[0], BOS_ID);
        assert_eq!(ex.tokens[4], SEP_ID);
        assert_eq!(ex.tokens[7], SEP_ID);
        // Leading group counts 0..=4, target group restarts at 0.
        assert_eq!(ex.positions, vec![0, 1, 2, 3, 4, 0, 1, 2]);
        assert_eq!(ex.languages, vec![0, 0, 0, 0, 0, 1, 1, 1]);
        // Specials were never selected: the single forced label is a payload position.
        for &(idx, _) in &ex.labels {
            assert!(ex.tokens[idx] != BOS_ID || idx != 0);
            assert!(![0usize, 4, 7].contains(&idx));
        }
    }

    #[test]
    fn tlm_overflow_is_a_data_error() {
        let long: Vec<u32> = vec![9; 40];
        let res = build_tlm_example(&long, &long, 0, 1, &MaskingPolicy::default(), FIRST_REGULAR, VOCAB, 64, &mut rng(2));
        assert!(matches!(res, Err(Error::Data(_))));
    }

    #[test]
    fn batch_padding_masks_out_short_rows() {
        let policy = MaskingPolicy { select_prob: 0.0, ..MaskingPolicy::default() };
        let e1 = apply_mlm_masking(&[7, 8, 9, 10, 11], 0, &policy, FIRST_REGULAR, VOCAB, &mut rng(1)).unwrap();
        let e2 = apply_mlm_masking(&[7, 8], 1, &policy, FIRST_REGULAR, VOCAB, &mut rng(2)).unwrap();
        let batch = MaskedBatch::from_examples(&[e1, e2]).unwrap();
        assert_eq!(batch.batch.seq_len(), 7);
        assert!(batch.batch.mask[[0, 6]]);
        assert!(!batch.batch.mask[[1, 4]]);
        assert_eq!(batch.batch.tokens[[1, 5]], PAD_ID);
        assert!(batch.predictions.len() >= 2);
    }
}
