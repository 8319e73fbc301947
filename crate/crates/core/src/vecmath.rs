//! Similarity primitives shared by the miner, matcher and wordmap.
//!
//! All cosine arithmetic accumulates in f64 with a fixed lane order so that
//! blocked implementations and naive oracles produce bit-identical values.

use ndarray::ArrayView2;

/// Dot product of two f32 slices accumulated in f64.
///
/// Eight independent accumulators over interleaved lanes, combined in a fixed
/// tree order. Every caller (blocked scans and brute-force oracles alike) goes
/// through this function, so equal inputs give bit-equal sums everywhere.
#[inline]
pub fn dot_f64(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    let mut acc = [0.0f64; 8];
    let chunks = n / 8;
    for c in 0..chunks {
        let i = c * 8;
        for l in 0..8 {
            acc[l] += a[i + l] as f64 * b[i + l] as f64;
        }
    }
    let mut tail = 0.0f64;
    for i in chunks * 8..n {
        tail += a[i] as f64 * b[i] as f64;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

/// L2 norm of a row, f64-accumulated.
#[inline]
pub fn norm_f64(a: &[f32]) -> f64 {
    dot_f64(a, a).sqrt()
}

/// Cosine similarity with zero-norm rows mapped to 0.
#[inline]
pub fn cosine(a: &[f32], b: &[f32], norm_a: f64, norm_b: f64) -> f64 {
    if norm_a == 0.0 || norm_b == 0.0 {
        return 0.0;
    }
    dot_f64(a, b) / (norm_a * norm_b)
}

/// Row norms of a matrix.
pub fn row_norms(m: ArrayView2<'_, f32>) -> Vec<f64> {
    m.rows().into_iter().map(|r| norm_f64(r.to_slice().expect("contiguous row"))).collect()
}

/// A fixed-capacity top-k accumulator ordered by (score desc, index asc).
#[derive(Debug, Clone)]
pub struct TopK {
    k: usize,
    /// Sorted best-first; at most k entries.
    entries: Vec<(f64, usize)>,
}

impl TopK {
    pub fn new(k: usize) -> Self {
        TopK { k, entries: Vec::with_capacity(k + 1) }
    }

    #[inline]
    fn better(a: (f64, usize), b: (f64, usize)) -> bool {
        a.0 > b.0 || (a.0 == b.0 && a.1 < b.1)
    }

    #[inline]
    pub fn push(&mut self, score: f64, index: usize) {
        if self.entries.len() == self.k {
            let worst = *self.entries.last().unwrap();
            if !Self::better((score, index), worst) {
                return;
            }
            self.entries.pop();
        }
        let pos = self
            .entries
            .iter()
            .position(|&e| Self::better((score, index), e))
            .unwrap_or(self.entries.len());
        self.entries.insert(pos, (score, index));
    }

    /// Merge another accumulator into this one (used when row blocks are
    /// scanned by independent workers). The result is independent of the
    /// partitioning because ordering is a total order on (score, index).
    pub fn merge(&mut self, other: &TopK) {
        for &(s, i) in &other.entries {
            self.push(s, i);
        }
    }

    pub fn into_sorted(self) -> Vec<(f64, usize)> {
        self.entries
    }

    pub fn as_slice(&self) -> &[(f64, usize)] {
        &self.entries
    }
}

/// Best single entry under (score desc, index asc), mergeable across blocks.
#[derive(Debug, Clone, Copy)]
pub struct ArgMax {
    pub score: f64,
    pub index: Option<usize>,
}

impl ArgMax {
    pub fn new() -> Self {
        ArgMax { score: f64::NEG_INFINITY, index: None }
    }

    #[inline]
    pub fn push(&mut self, score: f64, index: usize) {
        match self.index {
            None => {
                self.score = score;
                self.index = Some(index);
            }
            Some(cur) => {
                if score > self.score || (score == self.score && index < cur) {
                    self.score = score;
                    self.index = Some(index);
                }
            }
        }
    }

    pub fn merge(&mut self, other: &ArgMax) {
        if let Some(i) = other.index {
            self.push(other.score, i);
        }
    }
}

impl Default for ArgMax {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_matches_sequential_reference() {
        let a: Vec<f32> = (0..37).map(|i| (i as f32 * 0.31).sin()).collect();
        let b: Vec<f32> = (0..37).map(|i| (i as f32 * 0.17).cos()).collect();
        let reference: f64 = a.iter().zip(&b).map(|(&x, &y)| x as f64 * y as f64).sum();
        assert!((dot_f64(&a, &b) - reference).abs() < 1e-12);
    }

    #[test]
    fn topk_orders_by_score_then_index() {
        let mut t = TopK::new(3);
        for (s, i) in [(0.5, 4), (0.9, 2), (0.5, 1), (0.9, 7), (0.1, 0)] {
            t.push(s, i);
        }
        assert_eq!(t.into_sorted(), vec![(0.9, 2), (0.9, 7), (0.5, 1)]);
    }

    #[test]
    fn topk_merge_is_partition_independent() {
        let items: Vec<(f64, usize)> = (0..40).map(|i| (((i * 13) % 7) as f64, i)).collect();
        let mut whole = TopK::new(5);
        for &(s, i) in &items {
            whole.push(s, i);
        }
        let mut left = TopK::new(5);
        let mut right = TopK::new(5);
        for &(s, i) in &items[..17] {
            left.push(s, i);
        }
        for &(s, i) in &items[17..] {
            right.push(s, i);
        }
        left.merge(&right);
        assert_eq!(left.into_sorted(), whole.into_sorted());
    }

    #[test]
    fn argmax_prefers_lower_index_on_tie() {
        let mut m = ArgMax::new();
        m.push(1.0, 5);
        m.push(1.0, 2);
        m.push(0.5, 0);
        assert_eq!(m.index, Some(2));
    }
}
