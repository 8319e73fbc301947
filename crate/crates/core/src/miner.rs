//! Margin-based parallel corpus mining: exact cosine kNN, margin scoring,
//! candidate extraction, threshold tuning and F1 evaluation.
//!
//! All similarity arithmetic goes through `vecmath::dot_f64`, so the blocked
//! scans here are bit-identical to naive brute-force rescans. Searches are
//! parallel over query blocks; merges are total-order deterministic.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedder::EmbeddingSet;
use crate::error::{Error, Result};
use crate::vecmath::{cosine, row_norms, ArgMax, TopK};

const ROW_BLOCK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarginVariant {
    Absolute,
    Distance,
    Ratio,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtractionStrategy {
    Forward,
    Backward,
    Intersection,
    MaxUnion,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginSpec {
    pub variant: MarginVariant,
    /// Neighborhood size for the margin penalty.
    pub k: usize,
    pub strategy: ExtractionStrategy,
}

impl Default for MarginSpec {
    fn default() -> Self {
        MarginSpec { variant: MarginVariant::Ratio, k: 4, strategy: ExtractionStrategy::MaxUnion }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub id_a: String,
    pub id_b: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCandidates {
    pub candidates: Vec<Candidate>,
    /// Ratio scores whose denominator collapsed to zero (reported as +inf).
    pub degenerate_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiningReport {
    pub threshold: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn check_dims(a: &EmbeddingSet, b: &EmbeddingSet) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::data(format!("embedding dims differ: {} vs {}", a.dim(), b.dim())));
    }
    Ok(())
}

/// Exact top-k cosine neighbors of every query among the keys, sorted by
/// (cosine desc, key index asc). Blockwise over queries, identical to a
/// naive scan.
pub fn knn(queries: &EmbeddingSet, keys: &EmbeddingSet, k: usize) -> Result<Vec<Vec<(usize, f64)>>> {
    check_dims(queries, keys)?;
    if k == 0 || k > keys.len() {
        return Err(Error::config(format!("k={} outside 1..={} keys", k, keys.len())));
    }
    let qn = row_norms(queries.matrix.view());
    let kn = row_norms(keys.matrix.view());
    let rows: Vec<usize> = (0..queries.len()).collect();
    let out: Vec<Vec<(usize, f64)>> = rows
        .par_chunks(ROW_BLOCK)
        .map(|chunk| {
            chunk
                .iter()
                .map(|&i| {
                    let q = queries.row(i);
                    let mut top = TopK::new(k);
                    for j in 0..keys.len() {
                        top.push(cosine(q, keys.row(j), qn[i], kn[j]), j);
                    }
                    top.into_sorted().into_iter().map(|(c, j)| (j, c)).collect()
                })
                .collect::<Vec<Vec<(usize, f64)>>>()
        })
        .flatten()
        .collect();
    Ok(out)
}

/// One pass over all pairs collecting top-k lists in both directions.
fn dual_topk(a: &EmbeddingSet, b: &EmbeddingSet, k: usize) -> (Vec<TopK>, Vec<TopK>) {
    let an = row_norms(a.matrix.view());
    let bn = row_norms(b.matrix.view());
    let rows: Vec<usize> = (0..a.len()).collect();
    let partials: Vec<(Vec<TopK>, Vec<TopK>)> = rows
        .par_chunks(ROW_BLOCK)
        .map(|chunk| {
            let mut row_tops: Vec<TopK> = chunk.iter().map(|_| TopK::new(k)).collect();
            let mut col_tops: Vec<TopK> = (0..b.len()).map(|_| TopK::new(k)).collect();
            for (ci, &i) in chunk.iter().enumerate() {
                let q = a.row(i);
                for j in 0..b.len() {
                    let c = cosine(q, b.row(j), an[i], bn[j]);
                    row_tops[ci].push(c, j);
                    col_tops[j].push(c, i);
                }
            }
            (row_tops, col_tops)
        })
        .collect();
    let mut row_tops: Vec<TopK> = Vec::with_capacity(a.len());
    let mut col_tops: Vec<TopK> = (0..b.len()).map(|_| TopK::new(k)).collect();
    for (rows_part, cols_part) in partials {
        row_tops.extend(rows_part);
        for (acc, part) in col_tops.iter_mut().zip(&cols_part) {
            acc.merge(part);
        }
    }
    (row_tops, col_tops)
}

fn apply_variant(variant: MarginVariant, a: f64, b: f64) -> (f64, bool) {
    match variant {
        MarginVariant::Absolute => (a, false),
        MarginVariant::Distance => (a - b, false),
        MarginVariant::Ratio => {
            if b == 0.0 {
                (f64::INFINITY, true)
            } else {
                (a / b, false)
            }
        }
    }
}

/// Score and extract candidate pairs.
///
/// For a pair (x, y): a = cos(x, y) and b averages the k-nearest-neighbor
/// cosines of both sides, b = sum_NNk(x)/2k + sum_NNk(y)/2k. The variant
/// maps (a, b) to a score: a, a - b, or a / b. Extraction keeps each row's
/// best-scoring column (forward), each column's best row (backward), mutual
/// bests (intersection), or the union of forward and backward (max-union).
pub fn margin_scores(
    set_a: &EmbeddingSet,
    set_b: &EmbeddingSet,
    spec: &MarginSpec,
) -> Result<ScoredCandidates> {
    check_dims(set_a, set_b)?;
    if spec.k == 0 || spec.k > set_a.len() || spec.k > set_b.len() {
        return Err(Error::config(format!(
            "margin k={} outside both pool sizes ({}, {})",
            spec.k,
            set_a.len(),
            set_b.len()
        )));
    }
    let (row_tops, col_tops) = dual_topk(set_a, set_b, spec.k);
    let two_k = 2.0 * spec.k as f64;
    let half_a: Vec<f64> = row_tops
        .iter()
        .map(|t| t.as_slice().iter().map(|&(c, _)| c).sum::<f64>() / two_k)
        .collect();
    let half_b: Vec<f64> = col_tops
        .iter()
        .map(|t| t.as_slice().iter().map(|&(c, _)| c).sum::<f64>() / two_k)
        .collect();

    let an = row_norms(set_a.matrix.view());
    let bn = row_norms(set_b.matrix.view());
    let rows: Vec<usize> = (0..set_a.len()).collect();
    let partials: Vec<(Vec<ArgMax>, Vec<ArgMax>, usize)> = rows
        .par_chunks(ROW_BLOCK)
        .map(|chunk| {
            let mut row_best: Vec<ArgMax> = chunk.iter().map(|_| ArgMax::new()).collect();
            let mut col_best: Vec<ArgMax> = (0..set_b.len()).map(|_| ArgMax::new()).collect();
            let mut degenerate = 0usize;
            for (ci, &i) in chunk.iter().enumerate() {
                let q = set_a.row(i);
                for j in 0..set_b.len() {
                    let a = cosine(q, set_b.row(j), an[i], bn[j]);
                    let (score, is_degenerate) =
                        apply_variant(spec.variant, a, half_a[i] + half_b[j]);
                    if is_degenerate {
                        degenerate += 1;
                    }
                    row_best[ci].push(score, j);
                    col_best[j].push(score, i);
                }
            }
            (row_best, col_best, degenerate)
        })
        .collect();

    let mut row_best: Vec<ArgMax> = Vec::with_capacity(set_a.len());
    let mut col_best: Vec<ArgMax> = (0..set_b.len()).map(|_| ArgMax::new()).collect();
    let mut degenerate_count = 0usize;
    for (rows_part, cols_part, deg) in partials {
        row_best.extend(rows_part);
        degenerate_count += deg;
        for (acc, part) in col_best.iter_mut().zip(&cols_part) {
            acc.merge(part);
        }
    }

    let forward: Vec<(usize, usize, f64)> = row_best
        .iter()
        .enumerate()
        .map(|(i, m)| (i, m.index.expect("pools are non-empty"), m.score))
        .collect();
    let backward: Vec<(usize, usize, f64)> = col_best
        .iter()
        .enumerate()
        .map(|(j, m)| (m.index.expect("pools are non-empty"), j, m.score))
        .collect();

    let mut pairs: Vec<(usize, usize, f64)> = match spec.strategy {
        ExtractionStrategy::Forward => forward,
        ExtractionStrategy::Backward => backward,
        ExtractionStrategy::Intersection => forward
            .into_iter()
            .filter(|&(i, j, _)| backward[j].0 == i)
            .collect(),
        ExtractionStrategy::MaxUnion => {
            let mut set: BTreeSet<(usize, usize)> = BTreeSet::new();
            let mut merged = Vec::new();
            for (i, j, s) in forward.into_iter().chain(backward) {
                if set.insert((i, j)) {
                    merged.push((i, j, s));
                }
            }
            merged
        }
    };
    pairs.sort_unstable_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));

    let candidates = pairs
        .into_iter()
        .map(|(i, j, score)| Candidate {
            id_a: set_a.ids[i].clone(),
            id_b: set_b.ids[j].clone(),
            score,
        })
        .collect();
    Ok(ScoredCandidates { candidates, degenerate_count })
}

/// Maximize F1 over every distinct candidate score used as the keep
/// threshold (keep pairs scoring >= t). Ties prefer the higher threshold.
/// Empty candidates yield (+inf, 0).
pub fn tune_threshold(
    candidates: &[Candidate],
    gold: &BTreeSet<(String, String)>,
) -> Result<(f64, f64)> {
    if gold.is_empty() {
        return Err(Error::data("cannot tune a threshold against an empty gold set"));
    }
    if candidates.is_empty() {
        return Ok((f64::INFINITY, 0.0));
    }
    let mut scored: Vec<(f64, bool)> = candidates
        .iter()
        .map(|c| (c.score, gold.contains(&(c.id_a.clone(), c.id_b.clone()))))
        .collect();
    scored.sort_unstable_by(|a, b| b.0.partial_cmp(&a.0).expect("scores are not NaN"));

    let gold_size = gold.len();
    let mut best = (f64::INFINITY, 0.0f64);
    let mut tp = 0usize;
    let mut kept = 0usize;
    let mut idx = 0usize;
    while idx < scored.len() {
        let threshold = scored[idx].0;
        // Absorb the whole tie group: threshold >= t keeps all of them.
        while idx < scored.len() && scored[idx].0 == threshold {
            kept += 1;
            if scored[idx].1 {
                tp += 1;
            }
            idx += 1;
        }
        let f1 = f1_score(tp, kept - tp, gold_size - tp).2;
        if f1 > best.1 {
            best = (threshold, f1);
        }
    }
    Ok(best)
}

fn f1_score(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

/// Count predictions at a fixed threshold against the gold pairs.
pub fn evaluate_mining(
    candidates: &[Candidate],
    threshold: f64,
    gold: &BTreeSet<(String, String)>,
) -> MiningReport {
    let mut tp = 0usize;
    let mut fp = 0usize;
    for c in candidates {
        if c.score >= threshold {
            if gold.contains(&(c.id_a.clone(), c.id_b.clone())) {
                tp += 1;
            } else {
                fp += 1;
            }
        }
    }
    let fn_ = gold.len() - tp;
    let (precision, recall, f1) = f1_score(tp, fp, fn_);
    MiningReport { threshold, tp, fp, fn_, precision, recall, f1 }
}

/// Candidates file: "id_a<TAB>id_b<TAB>score", scores at 6 decimal places.
pub fn write_candidates(path: &Path, candidates: &[Candidate]) -> Result<()> {
    let mut out = String::new();
    for c in candidates {
        out.push_str(&format!("{}\t{}\t{:.6}\n", c.id_a, c.id_b, c.score));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_candidates(path: &Path) -> Result<Vec<Candidate>> {
    fs::read_to_string(path)?
        .lines()
        .map(|line| {
            let mut parts = line.split('\t');
            let id_a = parts.next().map(str::to_string);
            let id_b = parts.next().map(str::to_string);
            let score = parts.next().and_then(|s| s.parse::<f64>().ok());
            match (id_a, id_b, score) {
                (Some(id_a), Some(id_b), Some(score)) => Ok(Candidate { id_a, id_b, score }),
                _ => Err(Error::format(format!("bad candidate line: {:?}", line))),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn set_from(matrix: Array2<f32>, prefix: &str) -> EmbeddingSet {
        let ids = (0..matrix.nrows()).map(|i| format!("{}-{:06}", prefix, i)).collect();
        EmbeddingSet::new(ids, matrix).unwrap()
    }

    fn random_set(rows: usize, dim: usize, seed: u64, prefix: &str) -> EmbeddingSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let matrix = Array2::from_shape_fn((rows, dim), |_| rng.random_range(-1.0f32..1.0));
        set_from(matrix, prefix)
    }

    /// Brute-force oracle: full cosine matrix, full sorts, direct sums.
    mod oracle {
        use super::*;

        pub fn cosine_matrix(a: &EmbeddingSet, b: &EmbeddingSet) -> Vec<Vec<f64>> {
            let an = row_norms(a.matrix.view());
            let bn = row_norms(b.matrix.view());
            (0..a.len())
                .map(|i| (0..b.len()).map(|j| cosine(a.row(i), b.row(j), an[i], bn[j])).collect())
                .collect()
        }

        pub fn knn(a: &EmbeddingSet, b: &EmbeddingSet, k: usize) -> Vec<Vec<(usize, f64)>> {
            cosine_matrix(a, b)
                .into_iter()
                .map(|row| {
                    let mut indexed: Vec<(usize, f64)> = row.into_iter().enumerate().collect();
                    indexed.sort_by(|x, y| {
                        y.1.partial_cmp(&x.1).unwrap().then(x.0.cmp(&y.0))
                    });
                    indexed.truncate(k);
                    indexed.into_iter().map(|(j, c)| (j, c)).collect()
                })
                .collect()
        }

        pub fn margin(
            a: &EmbeddingSet,
            b: &EmbeddingSet,
            spec: &MarginSpec,
        ) -> Vec<(usize, usize, f64)> {
            let cm = cosine_matrix(a, b);
            let k = spec.k;
            let sum_a: Vec<f64> = (0..a.len())
                .map(|i| {
                    let mut row = cm[i].clone();
                    row.sort_by(|x, y| y.partial_cmp(x).unwrap());
                    row[..k].iter().sum::<f64>()
                })
                .collect();
            let sum_b: Vec<f64> = (0..b.len())
                .map(|j| {
                    let mut col: Vec<f64> = (0..a.len()).map(|i| cm[i][j]).collect();
                    col.sort_by(|x, y| y.partial_cmp(x).unwrap());
                    col[..k].iter().sum::<f64>()
                })
                .collect();
            let score = |i: usize, j: usize| {
                let aij = cm[i][j];
                let bij = sum_a[i] / (2.0 * k as f64) + sum_b[j] / (2.0 * k as f64);
                match spec.variant {
                    MarginVariant::Absolute => aij,
                    MarginVariant::Distance => aij - bij,
                    MarginVariant::Ratio => {
                        if bij == 0.0 {
                            f64::INFINITY
                        } else {
                            aij / bij
                        }
                    }
                }
            };
            let argmax_row = |i: usize| {
                let mut best = (f64::NEG_INFINITY, 0usize);
                for j in 0..b.len() {
                    let s = score(i, j);
                    if s > best.0 {
                        best = (s, j);
                    }
                }
                best
            };
            let argmax_col = |j: usize| {
                let mut best = (f64::NEG_INFINITY, 0usize);
                for i in 0..a.len() {
                    let s = score(i, j);
                    if s > best.0 {
                        best = (s, i);
                    }
                }
                best
            };
            let forward: Vec<(usize, usize, f64)> =
                (0..a.len()).map(|i| (i, argmax_row(i).1, argmax_row(i).0)).collect();
            let backward: Vec<(usize, usize, f64)> =
                (0..b.len()).map(|j| (argmax_col(j).1, j, argmax_col(j).0)).collect();
            let mut out: Vec<(usize, usize, f64)> = match spec.strategy {
                ExtractionStrategy::Forward => forward,
                ExtractionStrategy::Backward => backward,
                ExtractionStrategy::Intersection => forward
                    .into_iter()
                    .filter(|&(i, j, _)| backward[j].0 == i)
                    .collect(),
                ExtractionStrategy::MaxUnion => {
                    let mut seen = BTreeSet::new();
                    let mut merged = Vec::new();
                    for (i, j, s) in forward.into_iter().chain(backward) {
                        if seen.insert((i, j)) {
                            merged.push((i, j, s));
                        }
                    }
                    merged
                }
            };
            out.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
            out
        }
    }

    #[test]
    fn self_match_has_cosine_one() {
        let keys = random_set(10, 8, 3, "B");
        let mut q = Array2::<f32>::zeros((1, 8));
        q.row_mut(0).assign(&keys.matrix.row(4));
        let queries = set_from(q, "A");
        let result = knn(&queries, &keys, 1).unwrap();
        assert_eq!(result[0][0].0, 4);
        assert!((result[0][0].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_vectors_have_cosine_zero() {
        let queries = set_from(array![[1.0f32, 0.0]], "A");
        let keys = set_from(array![[0.0f32, 1.0]], "B");
        let result = knn(&queries, &keys, 1).unwrap();
        assert_eq!(result[0][0].1, 0.0);
    }

    #[test]
    fn knn_matches_full_sort_oracle_exactly() {
        let a = random_set(50, 16, 7, "A");
        let b = random_set(60, 16, 8, "B");
        let ours = knn(&a, &b, 5).unwrap();
        let expected = oracle::knn(&a, &b, 5);
        assert_eq!(ours, expected);
    }

    #[test]
    fn knn_tie_order_prefers_lower_index() {
        // Duplicate keys force exact ties.
        let a = set_from(array![[1.0f32, 1.0]], "A");
        let b = set_from(array![[2.0f32, 2.0], [1.0, 1.0], [1.0, 0.0]], "B");
        let result = knn(&a, &b, 2).unwrap();
        assert_eq!(result[0][0].0, 0);
        assert_eq!(result[0][1].0, 1);
    }

    #[test]
    fn dim_mismatch_is_a_data_error() {
        let a = random_set(3, 8, 1, "A");
        let b = random_set(3, 16, 2, "B");
        assert!(matches!(knn(&a, &b, 1), Err(Error::Data(_))));
    }

    #[test]
    fn ratio_margin_matches_hand_computation() {
        let a = set_from(array![[1.0f32, 0.0], [0.8, 0.6]], "A");
        let b = set_from(array![[1.0f32, 0.0], [0.6, 0.8]], "B");
        let spec = MarginSpec { variant: MarginVariant::Ratio, k: 2, strategy: ExtractionStrategy::Forward };
        let scored = margin_scores(&a, &b, &spec).unwrap();
        let x1y1 = scored
            .candidates
            .iter()
            .find(|c| c.id_a == "A-000000" && c.id_b == "B-000000")
            .expect("x1 should pick y1");
        assert!((x1y1.score - 1.0 / 0.85).abs() < 1e-9, "score {}", x1y1.score);
    }

    #[test]
    fn absolute_variant_is_plain_cosine() {
        let a = set_from(array![[1.0f32, 0.0], [0.8, 0.6]], "A");
        let b = set_from(array![[1.0f32, 0.0], [0.6, 0.8]], "B");
        let spec = MarginSpec { variant: MarginVariant::Absolute, k: 2, strategy: ExtractionStrategy::Forward };
        let scored = margin_scores(&a, &b, &spec).unwrap();
        assert!((scored.candidates[0].score - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scaling_embeddings_leaves_scores_and_candidates_unchanged() {
        let a = random_set(30, 8, 11, "A");
        let b = random_set(40, 8, 12, "B");
        let scaled_a = set_from(a.matrix.map(|&x| x * 3.7), "A");
        let scaled_b = set_from(b.matrix.map(|&x| x * 3.7), "B");
        for variant in [MarginVariant::Absolute, MarginVariant::Distance, MarginVariant::Ratio] {
            let spec = MarginSpec { variant, k: 3, strategy: ExtractionStrategy::MaxUnion };
            let plain = margin_scores(&a, &b, &spec).unwrap();
            let scaled = margin_scores(&scaled_a, &scaled_b, &spec).unwrap();
            let pairs = |s: &ScoredCandidates| {
                s.candidates.iter().map(|c| (c.id_a.clone(), c.id_b.clone())).collect::<Vec<_>>()
            };
            assert_eq!(pairs(&plain), pairs(&scaled));
            // Entries of the scaled matrix are themselves rounded to f32,
            // so scores agree to f32 precision rather than exactly.
            for (x, y) in plain.candidates.iter().zip(&scaled.candidates) {
                assert!((x.score - y.score).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn margin_matches_brute_force_oracle_on_random_instances() {
        for seed in 0..3u64 {
            let a = random_set(50, 8 + 8 * seed as usize, 100 + seed, "A");
            let b = random_set(60, 8 + 8 * seed as usize, 200 + seed, "B");
            for variant in [MarginVariant::Absolute, MarginVariant::Distance, MarginVariant::Ratio] {
                for strategy in [
                    ExtractionStrategy::Forward,
                    ExtractionStrategy::Backward,
                    ExtractionStrategy::Intersection,
                    ExtractionStrategy::MaxUnion,
                ] {
                    let spec = MarginSpec { variant, k: 4, strategy };
                    let ours = margin_scores(&a, &b, &spec).unwrap();
                    let expected = oracle::margin(&a, &b, &spec);
                    assert_eq!(ours.candidates.len(), expected.len(), "{:?}/{:?}", variant, strategy);
                    for (c, &(i, j, s)) in ours.candidates.iter().zip(&expected) {
                        assert_eq!(c.id_a, a.ids[i]);
                        assert_eq!(c.id_b, b.ids[j]);
                        assert!((c.score - s).abs() < 1e-6, "score {} vs {}", c.score, s);
                    }
                }
            }
        }
    }

    #[test]
    fn strategy_set_relations_hold() {
        let a = random_set(40, 12, 5, "A");
        let b = random_set(45, 12, 6, "B");
        let with = |strategy| {
            let spec = MarginSpec { variant: MarginVariant::Ratio, k: 4, strategy };
            margin_scores(&a, &b, &spec)
                .unwrap()
                .candidates
                .into_iter()
                .map(|c| (c.id_a, c.id_b))
                .collect::<BTreeSet<_>>()
        };
        let fwd = with(ExtractionStrategy::Forward);
        let bwd = with(ExtractionStrategy::Backward);
        let inter = with(ExtractionStrategy::Intersection);
        let union = with(ExtractionStrategy::MaxUnion);
        assert!(inter.is_subset(&fwd));
        assert!(inter.is_subset(&bwd));
        assert!(union.len() <= fwd.len() + bwd.len());
        assert!(fwd.is_subset(&union));
        assert!(bwd.is_subset(&union));
    }

    fn gold(pairs: &[(&str, &str)]) -> BTreeSet<(String, String)> {
        pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    fn cand(id_a: &str, id_b: &str, score: f64) -> Candidate {
        Candidate { id_a: id_a.into(), id_b: id_b.into(), score }
    }

    #[test]
    fn threshold_sweep_matches_hand_case() {
        // t=0.9 keeps one gold of two: F1 = 2/3. t=0.8 adds a miss: 0.5.
        // t=0.7 keeps both golds and one miss: 0.8.
        let candidates = vec![
            cand("a1", "b1", 0.9),
            cand("a2", "b2", 0.8),
            cand("a3", "b3", 0.7),
        ];
        let g = gold(&[("a1", "b1"), ("a3", "b3")]);
        let (t, f1) = tune_threshold(&candidates, &g).unwrap();
        assert_eq!(t, 0.7);
        assert!((f1 - 0.8).abs() < 1e-12);
    }

    #[test]
    fn perfect_candidates_reach_f1_one() {
        let candidates = vec![cand("a1", "b1", 0.5), cand("a2", "b2", 0.4)];
        let g = gold(&[("a1", "b1"), ("a2", "b2")]);
        let (_, f1) = tune_threshold(&candidates, &g).unwrap();
        assert_eq!(f1, 1.0);
    }

    #[test]
    fn tuned_f1_beats_random_probe_thresholds() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let candidates: Vec<Candidate> = (0..1000)
            .map(|i| cand(&format!("a{}", i), &format!("b{}", i), rng.random_range(-1.0..2.0)))
            .collect();
        let g: BTreeSet<(String, String)> = (0..1000)
            .filter(|_| rng.random_bool(0.3))
            .map(|i| (format!("a{}", i), format!("b{}", i)))
            .collect();
        let g = if g.is_empty() { gold(&[("a0", "b0")]) } else { g };
        let (_, best) = tune_threshold(&candidates, &g).unwrap();
        for _ in 0..1000 {
            let t = rng.random_range(-1.5..2.5);
            let f1 = evaluate_mining(&candidates, t, &g).f1;
            assert!(best >= f1 - 1e-12, "probe t={} beat tuned F1 {} with {}", t, best, f1);
        }
    }

    #[test]
    fn empty_candidates_give_infinite_threshold() {
        let g = gold(&[("a", "b")]);
        let (t, f1) = tune_threshold(&[], &g).unwrap();
        assert!(t.is_infinite() && t > 0.0);
        assert_eq!(f1, 0.0);
    }

    #[test]
    fn evaluation_counts_match_hand_case() {
        let candidates = vec![
            cand("a1", "b1", 0.9),
            cand("a2", "b9", 0.9),
            cand("a3", "b3", 0.9),
            cand("a4", "b4", 0.9),
        ];
        let g = gold(&[("a1", "b1"), ("a2", "b2"), ("a3", "b3")]);
        let report = evaluate_mining(&candidates, 0.5, &g);
        assert_eq!((report.tp, report.fp, report.fn_), (2, 2, 1));
        assert!((report.precision - 0.5).abs() < 1e-12);
        assert!((report.recall - 2.0 / 3.0).abs() < 1e-12);
        assert!((report.f1 - 4.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn empty_predictions_use_zero_conventions() {
        let g = gold(&[("a", "b")]);
        let report = evaluate_mining(&[], 0.0, &g);
        assert_eq!((report.precision, report.recall, report.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn candidates_tsv_round_trips_byte_identically() {
        let dir = tempfile::tempdir().unwrap();
        let candidates = vec![
            cand("A-000001", "B-000009", 1.234567891),
            cand("A-000002", "B-000003", -0.25),
            cand("A-000004", "B-000005", f64::INFINITY),
        ];
        let p1 = dir.path().join("c1.tsv");
        let p2 = dir.path().join("c2.tsv");
        write_candidates(&p1, &candidates).unwrap();
        let back = read_candidates(&p1).unwrap();
        write_candidates(&p2, &back).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
        assert_eq!(back[2].score, f64::INFINITY);
    }
}
