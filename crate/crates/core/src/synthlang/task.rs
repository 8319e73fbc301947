//! BUCC-style mining tasks: two shuffled pools with sparse gold alignments.

use std::collections::{BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synthlang::parallel::{RenderedSentence, SentencePair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Test => write!(f, "test"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MiningTask {
    /// (id, sentence) per pool, ids opaque ("A-%06d" / "B-%06d").
    pub pool_a: Vec<(String, String)>,
    pub pool_b: Vec<(String, String)>,
    pub gold: BTreeSet<(String, String)>,
    pub split: Split,
}

/// Assemble a mining task from translation pairs and monolingual fillers.
///
/// Pools are shuffled unions of fillers and pair sides; gold links the pair
/// sides across pools. Base sentences must not leak between the pairs and
/// either filler pool, and the two filler pools must not share base sentences
/// with each other, or unlabeled true translations would corrupt the gold.
pub fn build_mining_task(
    pairs: &[SentencePair],
    mono_a: &[RenderedSentence],
    mono_b: &[RenderedSentence],
    split: Split,
    seed: u64,
) -> Result<MiningTask> {
    let pair_bases: HashSet<usize> = pairs.iter().map(|p| p.base_idx).collect();
    let mono_a_bases: HashSet<usize> = mono_a.iter().map(|m| m.base_idx).collect();
    let mono_b_bases: HashSet<usize> = mono_b.iter().map(|m| m.base_idx).collect();
    if let Some(x) = pair_bases.intersection(&mono_a_bases).next() {
        return Err(Error::data(format!(
            "base sentence {} appears in both the gold pairs and pool A fillers",
            x
        )));
    }
    if let Some(x) = pair_bases.intersection(&mono_b_bases).next() {
        return Err(Error::data(format!(
            "base sentence {} appears in both the gold pairs and pool B fillers",
            x
        )));
    }
    if let Some(x) = mono_a_bases.intersection(&mono_b_bases).next() {
        return Err(Error::data(format!(
            "base sentence {} appears in both filler pools (hidden translation pair)",
            x
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // marker: Some(pair index) for gold members, None for fillers.
    let mut side_a: Vec<(Option<usize>, &str)> = Vec::with_capacity(mono_a.len() + pairs.len());
    side_a.extend(mono_a.iter().map(|m| (None, m.text.as_str())));
    side_a.extend(pairs.iter().enumerate().map(|(i, p)| (Some(i), p.src.as_str())));
    side_a.shuffle(&mut rng);

    let mut side_b: Vec<(Option<usize>, &str)> = Vec::with_capacity(mono_b.len() + pairs.len());
    side_b.extend(mono_b.iter().map(|m| (None, m.text.as_str())));
    side_b.extend(pairs.iter().enumerate().map(|(i, p)| (Some(i), p.tgt.as_str())));
    side_b.shuffle(&mut rng);

    let mut id_a_of_pair = vec![String::new(); pairs.len()];
    let pool_a: Vec<(String, String)> = side_a
        .iter()
        .enumerate()
        .map(|(pos, (marker, text))| {
            let id = format!("A-{:06}", pos);
            if let Some(pair) = marker {
                id_a_of_pair[*pair] = id.clone();
            }
            (id, text.to_string())
        })
        .collect();

    let mut id_b_of_pair = vec![String::new(); pairs.len()];
    let pool_b: Vec<(String, String)> = side_b
        .iter()
        .enumerate()
        .map(|(pos, (marker, text))| {
            let id = format!("B-{:06}", pos);
            if let Some(pair) = marker {
                id_b_of_pair[*pair] = id.clone();
            }
            (id, text.to_string())
        })
        .collect();

    let gold: BTreeSet<(String, String)> =
        id_a_of_pair.into_iter().zip(id_b_of_pair).collect();

    Ok(MiningTask { pool_a, pool_b, gold, split })
}

impl MiningTask {
    /// Check that every gold id resolves in its pool.
    pub fn validate(&self) -> Result<()> {
        let ids_a: HashSet<&str> = self.pool_a.iter().map(|(id, _)| id.as_str()).collect();
        let ids_b: HashSet<&str> = self.pool_b.iter().map(|(id, _)| id.as_str()).collect();
        for (a, b) in &self.gold {
            if !ids_a.contains(a.as_str()) {
                return Err(Error::data(format!("gold id {} missing from pool A", a)));
            }
            if !ids_b.contains(b.as_str()) {
                return Err(Error::data(format!("gold id {} missing from pool B", b)));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthlang::grammar::{generate_unique_base_corpus, BaseGrammar};
    use crate::synthlang::language::derive_language;
    use crate::synthlang::parallel::{build_parallel_set, render_corpus, BaseSentence};

    fn fixtures(n_pairs: usize, n_mono: usize) -> (Vec<SentencePair>, Vec<RenderedSentence>, Vec<RenderedSentence>) {
        let g = BaseGrammar::default();
        let la = derive_language(&g, 0, 11).unwrap();
        let lb = derive_language(&g, 1, 12).unwrap();
        let bases: Vec<BaseSentence> = generate_unique_base_corpus(&g, n_pairs + 2 * n_mono, 3)
            .unwrap()
            .into_iter()
            .enumerate()
            .map(|(idx, words)| BaseSentence { idx, words })
            .collect();
        let pairs = build_parallel_set(&bases[..n_pairs], &la, &lb, n_pairs, 0.0, 5).unwrap();
        let mono_a = render_corpus(&bases[n_pairs..n_pairs + n_mono], &la, 0.0, 6).unwrap();
        let mono_b = render_corpus(&bases[n_pairs + n_mono..], &lb, 0.0, 7).unwrap();
        (pairs, mono_a, mono_b)
    }

    #[test]
    fn pool_sizes_and_gold_size_add_up() {
        let (pairs, mono_a, mono_b) = fixtures(50, 400);
        let task = build_mining_task(&pairs, &mono_a, &mono_b, Split::Train, 9).unwrap();
        assert_eq!(task.pool_a.len(), 450);
        assert_eq!(task.pool_b.len(), 450);
        assert_eq!(task.gold.len(), 50);
        task.validate().unwrap();
    }

    #[test]
    fn task_is_deterministic_per_seed() {
        let (pairs, mono_a, mono_b) = fixtures(20, 100);
        let t1 = build_mining_task(&pairs, &mono_a, &mono_b, Split::Train, 9).unwrap();
        let t2 = build_mining_task(&pairs, &mono_a, &mono_b, Split::Train, 9).unwrap();
        assert_eq!(t1.pool_a, t2.pool_a);
        assert_eq!(t1.pool_b, t2.pool_b);
        assert_eq!(t1.gold, t2.gold);
        let t3 = build_mining_task(&pairs, &mono_a, &mono_b, Split::Train, 10).unwrap();
        assert_ne!(t1.pool_a, t3.pool_a);
    }

    #[test]
    fn gold_ids_point_at_the_pair_texts() {
        let (pairs, mono_a, mono_b) = fixtures(20, 100);
        let task = build_mining_task(&pairs, &mono_a, &mono_b, Split::Test, 9).unwrap();
        let by_id_a: std::collections::HashMap<&str, &str> =
            task.pool_a.iter().map(|(i, s)| (i.as_str(), s.as_str())).collect();
        let by_id_b: std::collections::HashMap<&str, &str> =
            task.pool_b.iter().map(|(i, s)| (i.as_str(), s.as_str())).collect();
        let srcs: HashSet<&str> = pairs.iter().map(|p| p.src.as_str()).collect();
        let tgts: HashSet<&str> = pairs.iter().map(|p| p.tgt.as_str()).collect();
        for (a, b) in &task.gold {
            assert!(srcs.contains(by_id_a[a.as_str()]));
            assert!(tgts.contains(by_id_b[b.as_str()]));
        }
    }

    #[test]
    fn base_overlap_is_rejected() {
        let (pairs, mono_a, mono_b) = fixtures(20, 100);
        // Leak a pair base into pool A.
        let mut leaked = mono_a.clone();
        leaked[0].base_idx = pairs[3].base_idx;
        assert!(matches!(
            build_mining_task(&pairs, &leaked, &mono_b, Split::Train, 9),
            Err(Error::Data(_))
        ));
        // Hidden translation between the filler pools.
        let mut leaked_b = mono_b.clone();
        leaked_b[5].base_idx = mono_a[5].base_idx;
        assert!(matches!(
            build_mining_task(&pairs, &mono_a, &leaked_b, Split::Train, 9),
            Err(Error::Data(_))
        ));
    }
}
