//! Sentence embeddings from static word vectors: (optionally mapped and
//! IDF-weighted) mean of in-vocabulary word vectors.

use std::collections::HashMap;

use ndarray::Array2;

use crate::embedder::EmbeddingSet;
use crate::error::{Error, Result};
use crate::vecmath::norm_f64;
use crate::wordmap::align::OrthogonalMap;
use crate::wordmap::vectors::WordVecTable;

/// Inverse document frequency over sentences: idf(w) = ln(N / df(w)).
pub fn compute_idf(corpus: &[String]) -> HashMap<String, f64> {
    let n = corpus.len() as f64;
    let mut df: HashMap<String, usize> = HashMap::new();
    for line in corpus {
        let mut seen: Vec<&str> = line.split_whitespace().collect();
        seen.sort_unstable();
        seen.dedup();
        for w in seen {
            *df.entry(w.to_string()).or_insert(0) += 1;
        }
    }
    df.into_iter().map(|(w, d)| (w, (n / d as f64).ln())).collect()
}

/// Weighted mean of mapped word vectors; out-of-vocabulary words are
/// skipped. Errors when every word is out of vocabulary.
pub fn pool_word_embeddings(
    table: &WordVecTable,
    map: Option<&OrthogonalMap>,
    sentence: &str,
    idf: Option<&HashMap<String, f64>>,
) -> Result<Vec<f32>> {
    let dim = table.dim();
    let mut acc = vec![0.0f64; dim];
    let mut total_weight = 0.0f64;
    for word in sentence.split_whitespace() {
        let Some(i) = table.index_of(word) else {
            continue;
        };
        let weight = idf.and_then(|m| m.get(word).copied()).unwrap_or(1.0);
        let v = table.vector(i);
        match map {
            Some(m) => {
                for c in 0..dim {
                    let mut mapped = 0.0f64;
                    for r in 0..dim {
                        mapped += v[r] as f64 * m.w[[r, c]];
                    }
                    acc[c] += weight * mapped;
                }
            }
            None => {
                for c in 0..dim {
                    acc[c] += weight * v[c] as f64;
                }
            }
        }
        total_weight += weight;
    }
    if total_weight == 0.0 {
        return Err(Error::data(format!("all words out of vocabulary: {:?}", sentence)));
    }
    Ok(acc.into_iter().map(|x| (x / total_weight) as f32).collect())
}

/// Pool a whole id-tagged sentence list into an EmbeddingSet (the same type
/// the encoder-based embedder produces, so the miner and matcher consume
/// both identically).
pub fn sentence_embeddings(
    table: &WordVecTable,
    map: Option<&OrthogonalMap>,
    sentences: &[(String, String)],
    idf: Option<&HashMap<String, f64>>,
    normalize: bool,
) -> Result<EmbeddingSet> {
    if sentences.is_empty() {
        return Err(Error::data("no sentences to embed"));
    }
    let mut matrix = Array2::<f32>::zeros((sentences.len(), table.dim()));
    for (row, (id, text)) in sentences.iter().enumerate() {
        let pooled = pool_word_embeddings(table, map, text, idf)
            .map_err(|e| Error::data(format!("sentence {}: {}", id, e)))?;
        let mut out = matrix.row_mut(row);
        for (o, v) in out.iter_mut().zip(&pooled) {
            *o = *v;
        }
        if normalize {
            let norm = norm_f64(out.as_slice().expect("standard layout"));
            if norm > 0.0 {
                let inv = (1.0 / norm) as f32;
                out.mapv_inplace(|x| x * inv);
            }
        }
    }
    let ids = sentences.iter().map(|(id, _)| id.clone()).collect();
    EmbeddingSet::new(ids, matrix)
}
