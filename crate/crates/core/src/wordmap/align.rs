//! Cross-lingual alignment of word embedding spaces: the orthogonal
//! Procrustes solution, CSLS similarity, and iterative self-learning with
//! mutual-nearest-neighbor dictionary induction.

use nalgebra::DMatrix;
use ndarray::Array2;

use crate::error::{Error, Result};
use crate::vecmath::{dot_f64, ArgMax, TopK};
use crate::wordmap::vectors::WordVecTable;

const DEGENERATE_SV: f64 = 1e-9;

/// An orthogonal linear map between embedding spaces (columns act on the
/// source space). Kept in f64 so WᵀW = I holds to solver precision.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalMap {
    pub w: Array2<f64>,
    /// Set when the cross-covariance was rank-deficient.
    pub degenerate: bool,
}

impl OrthogonalMap {
    pub fn identity(dim: usize) -> Self {
        OrthogonalMap { w: Array2::eye(dim), degenerate: false }
    }

    pub fn dim(&self) -> usize {
        self.w.nrows()
    }

    /// Frobenius norm of WᵀW - I.
    pub fn orthogonality_error(&self) -> f64 {
        let wtw = self.w.t().dot(&self.w);
        let mut err = 0.0;
        for i in 0..wtw.nrows() {
            for j in 0..wtw.ncols() {
                let target = if i == j { 1.0 } else { 0.0 };
                let d = wtw[[i, j]] - target;
                err += d * d;
            }
        }
        err.sqrt()
    }

    /// Map a set of f32 row vectors through W.
    pub fn apply(&self, vectors: &Array2<f32>) -> Array2<f32> {
        let x = vectors.map(|&v| v as f64);
        x.dot(&self.w).map(|&v| v as f32)
    }
}

/// Solve min_W ||X W - Y||_F over orthogonal W via the SVD of XᵀY.
/// Rank deficiency is flagged but still yields a valid orthogonal map.
pub fn orthogonal_procrustes(x: &Array2<f32>, y: &Array2<f32>) -> Result<OrthogonalMap> {
    if x.dim() != y.dim() {
        return Err(Error::data(format!("paired shapes differ: {:?} vs {:?}", x.dim(), y.dim())));
    }
    if x.nrows() == 0 {
        return Err(Error::data("cannot solve Procrustes on zero pairs"));
    }
    let d = x.ncols();
    let mut m = DMatrix::<f64>::zeros(d, d);
    for r in 0..x.nrows() {
        for i in 0..d {
            let xi = x[[r, i]] as f64;
            for j in 0..d {
                m[(i, j)] += xi * y[[r, j]] as f64;
            }
        }
    }
    let mut svd = m.svd(true, true);
    svd.sort_by_singular_values();
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let degenerate = svd.singular_values.iter().any(|&s| s < DEGENERATE_SV);
    let w_na = u * vt;
    let w = Array2::from_shape_fn((d, d), |(i, j)| w_na[(i, j)]);
    Ok(OrthogonalMap { w, degenerate })
}

#[derive(Debug, Clone)]
pub enum AlignInit {
    /// Ground-truth word pairs (source word, target word).
    SeedDictionary(Vec<(String, String)>),
    /// Pair the `pairs` most frequent words of each language by rank.
    FrequencyRank { pairs: usize },
}

#[derive(Debug, Clone)]
pub struct AlignResult {
    pub map: OrthogonalMap,
    /// Final induced dictionary as (source index, target index).
    pub dictionary: Vec<(usize, usize)>,
    /// Dictionary size after each induction round (index 0 is the seed).
    pub dict_sizes: Vec<usize>,
    /// Candidate pool size used by each induction round.
    pub pool_sizes: Vec<usize>,
    pub converged: bool,
}

/// CSLS similarities between mapped source rows and target rows:
/// csls(x, y) = 2 cos(x, y) - r_tgt(x) - r_src(y), with r the mean cosine of
/// the k nearest neighbors on the opposite side.
fn csls_mutual_neighbors(
    mapped_src: &Array2<f64>,
    tgt: &Array2<f64>,
    k: usize,
) -> Vec<(usize, usize)> {
    let n = mapped_src.nrows();
    let m = tgt.nrows();
    let k = k.min(m).min(n).max(1);
    // Unit-normalize rows so that cosine = dot.
    let normalize = |m: &Array2<f64>| {
        let mut out = m.clone();
        for mut row in out.rows_mut() {
            let norm = row.iter().map(|&v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.mapv_inplace(|v| v / norm);
            }
        }
        out
    };
    let a = normalize(mapped_src);
    let b = normalize(tgt);
    let sims = a.dot(&b.t());

    let mut r_src = vec![0.0f64; n];
    let mut top_b_of_a: Vec<TopK> = (0..n).map(|_| TopK::new(k)).collect();
    let mut top_a_of_b: Vec<TopK> = (0..m).map(|_| TopK::new(k)).collect();
    for i in 0..n {
        for j in 0..m {
            let s = sims[[i, j]];
            top_b_of_a[i].push(s, j);
            top_a_of_b[j].push(s, i);
        }
    }
    for (i, t) in top_b_of_a.iter().enumerate() {
        r_src[i] = t.as_slice().iter().map(|&(s, _)| s).sum::<f64>() / k as f64;
    }
    let r_tgt: Vec<f64> = top_a_of_b
        .iter()
        .map(|t| t.as_slice().iter().map(|&(s, _)| s).sum::<f64>() / k as f64)
        .collect();

    let mut best_tgt: Vec<ArgMax> = (0..n).map(|_| ArgMax::new()).collect();
    let mut best_src: Vec<ArgMax> = (0..m).map(|_| ArgMax::new()).collect();
    for i in 0..n {
        for j in 0..m {
            let csls = 2.0 * sims[[i, j]] - r_src[i] - r_tgt[j];
            best_tgt[i].push(csls, j);
            best_src[j].push(csls, i);
        }
    }
    (0..n)
        .filter_map(|i| {
            let j = best_tgt[i].index?;
            if best_src[j].index == Some(i) {
                Some((i, j))
            } else {
                None
            }
        })
        .collect()
}

/// Iteratively align two embedding spaces: solve Procrustes on the current
/// dictionary, re-induce the dictionary by mutual nearest neighbors under
/// CSLS (k = 10) over a growing frequency-ranked candidate pool, and stop
/// when the dictionary is stable or `max_iters` is reached.
pub fn self_learning_align(
    table_src: &WordVecTable,
    table_tgt: &WordVecTable,
    init: &AlignInit,
    max_iters: usize,
) -> Result<AlignResult> {
    if table_src.dim() != table_tgt.dim() {
        return Err(Error::data(format!(
            "embedding dims differ: {} vs {}",
            table_src.dim(),
            table_tgt.dim()
        )));
    }
    let mut src = table_src.clone();
    let mut tgt = table_tgt.clone();
    src.normalize();
    tgt.normalize();
    let src64 = src.vectors.map(|&v| v as f64);
    let tgt64 = tgt.vectors.map(|&v| v as f64);

    let mut dictionary: Vec<(usize, usize)> = match init {
        AlignInit::SeedDictionary(pairs) => {
            let resolved: Vec<(usize, usize)> = pairs
                .iter()
                .filter_map(|(a, b)| Some((src.index_of(a)?, tgt.index_of(b)?)))
                .collect();
            if resolved.is_empty() {
                return Err(Error::data("no seed dictionary pair resolves in both vocabularies"));
            }
            resolved
        }
        AlignInit::FrequencyRank { pairs } => {
            let n = (*pairs).min(src.len()).min(tgt.len());
            if n == 0 {
                return Err(Error::data("frequency-rank init needs at least one pair"));
            }
            (0..n).map(|i| (i, i)).collect()
        }
    };

    let gather = |m: &Array2<f64>, rows: &[usize]| {
        let mut out = Array2::<f32>::zeros((rows.len(), m.ncols()));
        for (r, &i) in rows.iter().enumerate() {
            for c in 0..m.ncols() {
                out[[r, c]] = m[[i, c]] as f32;
            }
        }
        out
    };

    let mut dict_sizes = vec![dictionary.len()];
    let mut pool_sizes = Vec::new();
    let mut converged = false;
    let mut map = OrthogonalMap::identity(src.dim());
    let full = src.len().min(tgt.len());
    let mut pool = dictionary.len().max(200).min(full);
    for _ in 0..max_iters.max(1) {
        let rows_a: Vec<usize> = dictionary.iter().map(|&(a, _)| a).collect();
        let rows_b: Vec<usize> = dictionary.iter().map(|&(_, b)| b).collect();
        map = orthogonal_procrustes(&gather(&src64, &rows_a), &gather(&tgt64, &rows_b))?;

        let mapped = src64.slice(ndarray::s![..pool.min(src.len()), ..]).dot(&map.w);
        let pool_tgt = tgt64.slice(ndarray::s![..pool.min(tgt.len()), ..]).to_owned();
        let induced = csls_mutual_neighbors(&mapped, &pool_tgt, 10);
        if induced.is_empty() {
            return Err(Error::data("dictionary induction produced no mutual neighbors"));
        }
        let stable = induced == dictionary;
        dictionary = induced;
        dict_sizes.push(dictionary.len());
        pool_sizes.push(pool);
        if stable && pool == full {
            converged = true;
            break;
        }
        pool = (pool * 2).min(full);
    }

    Ok(AlignResult { map, dictionary, dict_sizes, pool_sizes, converged })
}

/// Word-translation precision@1: fraction of (source word, target word)
/// pairs whose mapped source vector has the target word as cosine nearest
/// neighbor over the full target vocabulary.
pub fn translation_precision(
    table_src: &WordVecTable,
    table_tgt: &WordVecTable,
    map: &OrthogonalMap,
    test_pairs: &[(String, String)],
) -> Result<f64> {
    if test_pairs.is_empty() {
        return Err(Error::data("no test pairs"));
    }
    let mut src = table_src.clone();
    let mut tgt = table_tgt.clone();
    src.normalize();
    tgt.normalize();
    let mapped = map.apply(&src.vectors);
    let mut hits = 0usize;
    let mut evaluated = 0usize;
    for (a, b) in test_pairs {
        let (Some(ia), Some(ib)) = (src.index_of(a), tgt.index_of(b)) else {
            continue;
        };
        evaluated += 1;
        let q = mapped.row(ia);
        let q = q.to_slice().expect("standard layout");
        let mut best = ArgMax::new();
        for j in 0..tgt.len() {
            best.push(dot_f64(q, tgt.vector(j)), j);
        }
        if best.index == Some(ib) {
            hits += 1;
        }
    }
    if evaluated == 0 {
        return Err(Error::data("no test pair resolves in both vocabularies"));
    }
    Ok(hits as f64 / evaluated as f64)
}
