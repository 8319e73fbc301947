//! Parallel sentence matching: recover a shuffled bijection between two
//! equal-size embedding pools by nearest-neighbor search.
//!
//! Plain cosine is the scoring rule; a margin-scored mode exists behind a
//! flag for ablations only. Accuracy is averaged over both directions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedder::EmbeddingSet;
use crate::error::{Error, Result};
use crate::miner::{margin_scores, ExtractionStrategy, MarginSpec};
use crate::vecmath::{cosine, row_norms, ArgMax};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsmReport {
    pub acc_fwd: f64,
    pub acc_bwd: f64,
    pub acc_mean: f64,
    pub n: usize,
}

fn argmax_rows(queries: &EmbeddingSet, keys: &EmbeddingSet) -> Vec<usize> {
    let qn = row_norms(queries.matrix.view());
    let kn = row_norms(keys.matrix.view());
    let rows: Vec<usize> = (0..queries.len()).collect();
    rows.par_chunks(128)
        .map(|chunk| {
            chunk
                .iter()
                .map(|&i| {
                    let q = queries.row(i);
                    let mut best = ArgMax::new();
                    for j in 0..keys.len() {
                        best.push(cosine(q, keys.row(j), qn[i], kn[j]), j);
                    }
                    best.index.expect("keys are non-empty")
                })
                .collect::<Vec<_>>()
        })
        .flatten()
        .collect()
}

fn validate(set_a: &EmbeddingSet, set_b: &EmbeddingSet, gold: &[usize]) -> Result<()> {
    if set_a.len() != set_b.len() || set_a.len() != gold.len() {
        return Err(Error::data(format!(
            "PSM needs equal sizes: |A|={}, |B|={}, |gold|={}",
            set_a.len(),
            set_b.len(),
            gold.len()
        )));
    }
    if set_a.dim() != set_b.dim() {
        return Err(Error::data(format!("embedding dims differ: {} vs {}", set_a.dim(), set_b.dim())));
    }
    let mut seen = vec![false; gold.len()];
    for &g in gold {
        if g >= gold.len() || seen[g] {
            return Err(Error::data("gold map is not a bijection"));
        }
        seen[g] = true;
    }
    Ok(())
}

/// Nearest-neighbor matching accuracy in both directions under cosine.
/// `gold[i]` is the index in B of the translation of row i of A.
pub fn psm_accuracy(set_a: &EmbeddingSet, set_b: &EmbeddingSet, gold: &[usize]) -> Result<PsmReport> {
    validate(set_a, set_b, gold)?;
    let n = gold.len();
    let fwd_pick = argmax_rows(set_a, set_b);
    let bwd_pick = argmax_rows(set_b, set_a);
    let mut inverse = vec![0usize; n];
    for (i, &g) in gold.iter().enumerate() {
        inverse[g] = i;
    }
    let fwd_hits = fwd_pick.iter().enumerate().filter(|&(i, &j)| gold[i] == j).count();
    let bwd_hits = bwd_pick.iter().enumerate().filter(|&(j, &i)| inverse[j] == i).count();
    let acc_fwd = fwd_hits as f64 / n as f64;
    let acc_bwd = bwd_hits as f64 / n as f64;
    Ok(PsmReport { acc_fwd, acc_bwd, acc_mean: (acc_fwd + acc_bwd) / 2.0, n })
}

/// Ablation-only variant: use margin scores for the argmax instead of plain
/// cosine.
pub fn psm_accuracy_margin(
    set_a: &EmbeddingSet,
    set_b: &EmbeddingSet,
    gold: &[usize],
    spec: &MarginSpec,
) -> Result<PsmReport> {
    validate(set_a, set_b, gold)?;
    let n = gold.len();
    let fwd = margin_scores(set_a, set_b, &MarginSpec { strategy: ExtractionStrategy::Forward, ..*spec })?;
    let bwd = margin_scores(set_a, set_b, &MarginSpec { strategy: ExtractionStrategy::Backward, ..*spec })?;
    let mut inverse = vec![0usize; n];
    for (i, &g) in gold.iter().enumerate() {
        inverse[g] = i;
    }
    let index_of = |ids: &[String], id: &str| ids.iter().position(|x| x == id).unwrap();
    let fwd_hits = fwd
        .candidates
        .iter()
        .filter(|c| gold[index_of(&set_a.ids, &c.id_a)] == index_of(&set_b.ids, &c.id_b))
        .count();
    let bwd_hits = bwd
        .candidates
        .iter()
        .filter(|c| inverse[index_of(&set_b.ids, &c.id_b)] == index_of(&set_a.ids, &c.id_a))
        .count();
    let acc_fwd = fwd_hits as f64 / n as f64;
    let acc_bwd = bwd_hits as f64 / n as f64;
    Ok(PsmReport { acc_fwd, acc_bwd, acc_mean: (acc_fwd + acc_bwd) / 2.0, n })
}
