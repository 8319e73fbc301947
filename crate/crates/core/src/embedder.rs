//! Sentence embeddings: pool one layer's token activations into a fixed
//! vector per sentence.
//!
//! Specials (BOS/SEP) and padding are excluded from pooling; mean pooling is
//! the default, max pooling exists for comparison. Rows are L2-normalized by
//! default so cosine similarity reduces to a dot product downstream.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::{forward, plain_batch, EncoderParams};
use crate::error::{Error, Result};
use crate::tokenizer::BpeModel;
use crate::vecmath::norm_f64;

pub const EMBEDDING_MAGIC: &[u8; 4] = b"EMB1";
const EMBED_CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolingMethod {
    Mean,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolingSpec {
    /// Layer index: 0 is the embedding-layer output, 1..=L the block outputs.
    pub layer: usize,
    pub method: PoolingMethod,
    pub normalize: bool,
}

impl PoolingSpec {
    /// Default layer for a stack of `n_layers` blocks: the 5th-to-last
    /// output, clamped into the transformer stack (never the raw embedding
    /// layer). A 16-layer stack yields layer 12.
    pub fn default_for_depth(n_layers: usize) -> Self {
        PoolingSpec {
            layer: n_layers.saturating_sub(4).max(1),
            method: PoolingMethod::Mean,
            normalize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub ids: Vec<String>,
    /// Row i is the embedding of ids[i].
    pub matrix: Array2<f32>,
}

impl EmbeddingSet {
    pub fn new(ids: Vec<String>, matrix: Array2<f32>) -> Result<Self> {
        if ids.len() != matrix.nrows() {
            return Err(Error::data(format!(
                "{} ids but {} embedding rows",
                ids.len(),
                matrix.nrows()
            )));
        }
        let mut seen = std::collections::HashSet::with_capacity(ids.len());
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::data(format!("duplicate sentence id {:?}", id)));
            }
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(Error::numeric("embedding matrix contains non-finite values"));
        }
        Ok(EmbeddingSet { ids, matrix })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        self.matrix.row(i).to_slice().expect("standard layout")
    }

    /// Binary matrix file plus a sidecar text file of ids in row order.
    pub fn save(&self, matrix_path: &Path, ids_path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(12 + self.matrix.len() * 4);
        buf.extend_from_slice(EMBEDDING_MAGIC);
        buf.extend_from_slice(&(self.len() as u32).to_le_bytes());
        buf.extend_from_slice(&(self.dim() as u32).to_le_bytes());
        for x in self.matrix.iter() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        fs::File::create(matrix_path)?.write_all(&buf)?;
        let mut ids = String::new();
        for id in &self.ids {
            ids.push_str(id);
            ids.push('\n');
        }
        fs::write(ids_path, ids)?;
        Ok(())
    }

    pub fn load(matrix_path: &Path, ids_path: &Path) -> Result<EmbeddingSet> {
        let mut bytes = Vec::new();
        fs::File::open(matrix_path)?.read_to_end(&mut bytes)?;
        if bytes.len() < 12 || &bytes[0..4] != EMBEDDING_MAGIC {
            return Err(Error::format("not an EMB1 embedding file"));
        }
        let count = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        if bytes.len() != 12 + count * dim * 4 {
            return Err(Error::format(format!(
                "embedding payload length {} does not match {}x{}",
                bytes.len() - 12,
                count,
                dim
            )));
        }
        let mut matrix = Array2::<f32>::zeros((count, dim));
        let slice = matrix.as_slice_mut().unwrap();
        for (i, chunk) in bytes[12..].chunks_exact(4).enumerate() {
            slice[i] = f32::from_le_bytes(chunk.try_into().unwrap());
        }
        let ids: Vec<String> = fs::read_to_string(ids_path)?.lines().map(|l| l.to_string()).collect();
        EmbeddingSet::new(ids, matrix)
    }
}

/// Pool a (tokens x dim) activation block into one vector.
pub fn pool_rows(rows: ArrayView2<'_, f32>, method: PoolingMethod) -> Vec<f32> {
    let dim = rows.ncols();
    let mut out = vec![0.0f32; dim];
    match method {
        PoolingMethod::Mean => {
            let inv = 1.0 / rows.nrows() as f32;
            for row in rows.rows() {
                for (o, &v) in out.iter_mut().zip(row.iter()) {
                    *o += v;
                }
            }
            for o in out.iter_mut() {
                *o *= inv;
            }
        }
        PoolingMethod::Max => {
            out.fill(f32::NEG_INFINITY);
            for row in rows.rows() {
                for (o, &v) in out.iter_mut().zip(row.iter()) {
                    if v > *o {
                        *o = v;
                    }
                }
            }
        }
    }
    out
}

fn l2_normalize(row: &mut [f32]) {
    let norm = norm_f64(row);
    if norm > 0.0 {
        let inv = (1.0 / norm) as f32;
        for x in row.iter_mut() {
            *x *= inv;
        }
    }
}

/// Embed sentences at several layers in one forward pass per chunk.
/// Row order always equals input order regardless of parallel scheduling.
pub fn embed_layers(
    params: &EncoderParams<f32>,
    sentences: &[(String, String)],
    lang_id: u32,
    layers: &[usize],
    method: PoolingMethod,
    normalize: bool,
    tokenizer: &BpeModel,
) -> Result<Vec<EmbeddingSet>> {
    if sentences.is_empty() {
        return Err(Error::data("no sentences to embed"));
    }
    let n_layers = params.config.n_layers;
    for &l in layers {
        if l > n_layers {
            return Err(Error::data(format!("layer {} out of range 0..={}", l, n_layers)));
        }
    }
    let max_payload = params.config.max_positions - 2;
    let mut token_seqs = Vec::with_capacity(sentences.len());
    let mut empties = Vec::new();
    for (id, text) in sentences {
        let mut ids = tokenizer.encode(text);
        ids.truncate(max_payload);
        if ids.is_empty() {
            empties.push(id.clone());
        }
        token_seqs.push(ids);
    }
    if !empties.is_empty() {
        return Err(Error::data(format!(
            "sentences tokenized to zero non-special tokens: {}",
            empties.join(", ")
        )));
    }

    let dim = params.config.d_model;
    let chunks: Vec<&[Vec<u32>]> = token_seqs.chunks(EMBED_CHUNK).collect();
    let pooled_chunks: Vec<Result<Vec<Array2<f32>>>> = chunks
        .par_iter()
        .map(|chunk| {
            let batch = plain_batch(chunk, lang_id)?;
            let acts = forward(params, &batch)?;
            let mut per_layer = Vec::with_capacity(layers.len());
            for &l in layers {
                let mut pooled = Array2::<f32>::zeros((chunk.len(), dim));
                let view = acts.layer(l);
                for (row, tokens) in chunk.iter().enumerate() {
                    // Payload occupies positions 1..=len; BOS and SEP are not
                    // subwords of the sentence and padding is garbage.
                    let block = view.slice(ndarray::s![row, 1..=tokens.len(), ..]);
                    let vec = pool_rows(block, method);
                    pooled.row_mut(row).assign(&ndarray::Array1::from_vec(vec));
                }
                per_layer.push(pooled);
            }
            Ok(per_layer)
        })
        .collect();

    let mut matrices: Vec<Array2<f32>> =
        layers.iter().map(|_| Array2::<f32>::zeros((sentences.len(), dim))).collect();
    let mut offset = 0usize;
    for chunk_result in pooled_chunks {
        let per_layer = chunk_result?;
        let rows = per_layer[0].nrows();
        for (li, pooled) in per_layer.into_iter().enumerate() {
            matrices[li].slice_mut(ndarray::s![offset..offset + rows, ..]).assign(&pooled);
        }
        offset += rows;
    }

    let ids: Vec<String> = sentences.iter().map(|(id, _)| id.clone()).collect();
    matrices
        .into_iter()
        .map(|mut m| {
            if normalize {
                for mut row in m.rows_mut() {
                    l2_normalize(row.as_slice_mut().expect("standard layout"));
                }
            }
            EmbeddingSet::new(ids.clone(), m)
        })
        .collect()
}

/// Embed sentences with a single pooling spec.
pub fn embed(
    params: &EncoderParams<f32>,
    sentences: &[(String, String)],
    lang_id: u32,
    spec: &PoolingSpec,
    tokenizer: &BpeModel,
) -> Result<EmbeddingSet> {
    let mut sets = embed_layers(
        params,
        sentences,
        lang_id,
        &[spec.layer],
        spec.method,
        spec.normalize,
        tokenizer,
    )?;
    Ok(sets.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{init_params, EncoderConfig};
    use crate::tokenizer::learn_bpe;
    use ndarray::array;

    fn setup() -> (EncoderParams<f32>, BpeModel) {
        let corpus: Vec<String> = vec![
            "ka mo zu ta ri ba".into(),
            "mo ka ka zu".into(),
            "ta ri ba mo ka zu".into(),
        ];
        let tok = learn_bpe(&corpus, 12).unwrap();
        let cfg = EncoderConfig {
            n_layers: 3,
            n_heads: 2,
            d_model: 16,
            d_ff: 32,
            max_positions: 32,
            n_languages: 2,
            vocab_size: tok.vocab_size(),
            dropout: 0.0,
        };
        (init_params::<f32>(&cfg, 5).unwrap(), tok)
    }

    #[test]
    fn pooling_arithmetic_matches_hand_values() {
        let block = array![[1.0f32, 2.0], [3.0, 4.0]];
        assert_eq!(pool_rows(block.view(), PoolingMethod::Mean), vec![2.0, 3.0]);
        assert_eq!(pool_rows(block.view(), PoolingMethod::Max), vec![3.0, 4.0]);
    }

    #[test]
    fn pooling_is_order_invariant_and_idempotent_on_copies() {
        let fwd = array![[1.0f32, -2.0, 0.5], [0.0, 7.0, -3.0], [2.0, 2.0, 2.0]];
        let rev = array![[2.0f32, 2.0, 2.0], [0.0, 7.0, -3.0], [1.0, -2.0, 0.5]];
        for m in [PoolingMethod::Mean, PoolingMethod::Max] {
            assert_eq!(pool_rows(fwd.view(), m), pool_rows(rev.view(), m));
        }
        let copies = array![[0.25f32, -1.5], [0.25, -1.5], [0.25, -1.5]];
        assert_eq!(pool_rows(copies.view(), PoolingMethod::Mean), vec![0.25, -1.5]);
        assert_eq!(pool_rows(copies.view(), PoolingMethod::Max), vec![0.25, -1.5]);
    }

    #[test]
    fn one_token_sentence_embeds_to_its_activation() {
        let (params, tok) = setup();
        let sents = vec![("s0".to_string(), "ka".to_string())];
        let spec = PoolingSpec { layer: 2, method: PoolingMethod::Mean, normalize: false };
        let set = embed(&params, &sents, 0, &spec, &tok).unwrap();
        // Direct forward: the single payload token sits at position 1.
        let ids = tok.encode("ka");
        let batch = plain_batch(&[ids], 0).unwrap();
        let acts = forward(&params, &batch).unwrap();
        let expected = acts.layer(2);
        let expected = expected.slice(ndarray::s![0, 1, ..]);
        for (a, b) in set.row(0).iter().zip(expected.iter()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn normalized_rows_have_unit_norm() {
        let (params, tok) = setup();
        let sents: Vec<(String, String)> = vec![
            ("a".into(), "ka mo zu".into()),
            ("b".into(), "ta ri".into()),
            ("c".into(), "ba mo ka zu ta".into()),
        ];
        let spec = PoolingSpec { layer: 3, method: PoolingMethod::Mean, normalize: true };
        let set = embed(&params, &sents, 1, &spec, &tok).unwrap();
        for i in 0..set.len() {
            let norm = norm_f64(set.row(i));
            assert!((norm - 1.0).abs() < 1e-5, "row {} norm {}", i, norm);
        }
    }

    #[test]
    fn embedding_is_independent_of_batch_companions() {
        let (params, tok) = setup();
        let spec = PoolingSpec { layer: 2, method: PoolingMethod::Mean, normalize: true };
        let alone = embed(
            &params,
            &[("x".to_string(), "ka mo zu".to_string())],
            0,
            &spec,
            &tok,
        )
        .unwrap();
        let together = embed(
            &params,
            &[
                ("x".to_string(), "ka mo zu".to_string()),
                ("y".to_string(), "ta ri ba mo ka zu".to_string()),
            ],
            0,
            &spec,
            &tok,
        )
        .unwrap();
        for (a, b) in alone.row(0).iter().zip(together.row(0).iter()) {
            assert!((a - b).abs() < 1e-6, "{} vs {}", a, b);
        }
    }

    #[test]
    fn empty_tokenization_lists_the_offending_id() {
        let (params, tok) = setup();
        let sents = vec![("bad-id".to_string(), "".to_string())];
        let spec = PoolingSpec::default_for_depth(params.config.n_layers);
        match embed(&params, &sents, 0, &spec, &tok) {
            Err(Error::Data(msg)) => assert!(msg.contains("bad-id")),
            other => panic!("expected data error, got {:?}", other.map(|s| s.len())),
        }
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let m = Array2::<f32>::zeros((2, 3));
        assert!(EmbeddingSet::new(vec!["a".into(), "a".into()], m).is_err());
    }

    #[test]
    fn default_layer_is_fifth_from_last_clamped() {
        assert_eq!(PoolingSpec::default_for_depth(16).layer, 12);
        assert_eq!(PoolingSpec::default_for_depth(4).layer, 1);
        assert_eq!(PoolingSpec::default_for_depth(6).layer, 2);
    }

    #[test]
    fn embedding_file_round_trips_byte_identically() {
        let dir = tempfile::tempdir().unwrap();
        let matrix = Array2::from_shape_fn((3, 4), |(i, j)| (i * 4 + j) as f32 * 0.37 - 1.0);
        let set = EmbeddingSet::new(vec!["a".into(), "b".into(), "c".into()], matrix).unwrap();
        let m1 = dir.path().join("e1.emb");
        let i1 = dir.path().join("e1.ids");
        let m2 = dir.path().join("e2.emb");
        let i2 = dir.path().join("e2.ids");
        set.save(&m1, &i1).unwrap();
        let back = EmbeddingSet::load(&m1, &i1).unwrap();
        back.save(&m2, &i2).unwrap();
        assert_eq!(fs::read(&m1).unwrap(), fs::read(&m2).unwrap());
        assert_eq!(fs::read(&i1).unwrap(), fs::read(&i2).unwrap());
        assert_eq!(set, back);
    }
}
