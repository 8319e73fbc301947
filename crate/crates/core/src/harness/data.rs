//! Deterministic construction of every dataset an experiment needs:
//! languages, monolingual corpora, fine-tuning pairs, mining tasks and PSM
//! pools, all carved from disjoint base-sentence ranges so no evaluation
//! item leaks into training and no hidden translations corrupt gold sets.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::harness::config::ExperimentConfig;
use crate::synthlang::{
    build_mining_task, build_parallel_set, derive_language, generate_unique_base_corpus, render,
    render_corpus, BaseSentence, LanguageSpec, MiningTask, SentencePair, Split,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LangPair(pub usize, pub usize);

impl std::fmt::Display for LangPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "L{}-L{}", self.0 + 1, self.1 + 1)
    }
}

/// A PSM instance: equal-size pools with a known index bijection.
#[derive(Debug, Clone)]
pub struct PsmSet {
    pub pool_a: Vec<(String, String)>,
    pub pool_b: Vec<(String, String)>,
    /// gold[i] = index in pool_b of the translation of pool_a[i].
    pub gold: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct PairTasks {
    pub pair: LangPair,
    pub train: MiningTask,
    pub test: MiningTask,
    pub psm: PsmSet,
}

#[derive(Debug)]
pub struct DataBundle {
    pub languages: Vec<LanguageSpec>,
    /// Monolingual corpora (plain text) per language, for MLM and word
    /// vectors.
    pub mono: Vec<Vec<String>>,
    /// Fine-tuning pairs (first two languages), at the configured noise.
    pub finetune: Vec<SentencePair>,
    /// Fine-tuning pairs rendered from the same bases at the alternate noise
    /// rate (0 if the configured rate is positive, 0.1 otherwise).
    pub finetune_alt: Vec<SentencePair>,
    pub alt_noise: f64,
    pub tasks: Vec<PairTasks>,
}

pub fn evaluated_pairs(n_languages: usize) -> Vec<LangPair> {
    let mut pairs = Vec::new();
    for i in 0..n_languages {
        for j in i + 1..n_languages {
            pairs.push(LangPair(i, j));
        }
    }
    pairs
}

fn build_psm_set(
    bases: &[BaseSentence],
    lang_a: &LanguageSpec,
    lang_b: &LanguageSpec,
    pair: LangPair,
    seed: u64,
) -> Result<PsmSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut render_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9999);
    let texts_a: Vec<String> = bases
        .iter()
        .map(|b| render(&b.words, lang_a, 0.0, &mut render_rng))
        .collect::<Result<_>>()?;
    let texts_b: Vec<String> = bases
        .iter()
        .map(|b| render(&b.words, lang_b, 0.0, &mut render_rng))
        .collect::<Result<_>>()?;
    // Shuffle the target side; gold maps source row -> shuffled target row.
    let mut order: Vec<usize> = (0..bases.len()).collect();
    order.shuffle(&mut rng);
    let mut gold = vec![0usize; bases.len()];
    let mut pool_b = vec![(String::new(), String::new()); bases.len()];
    for (new_pos, &orig) in order.iter().enumerate() {
        gold[orig] = new_pos;
        pool_b[new_pos] = (format!("P{}-B-{:06}", pair, new_pos), texts_b[orig].clone());
    }
    let pool_a = texts_a
        .into_iter()
        .enumerate()
        .map(|(i, t)| (format!("P{}-A-{:06}", pair, i), t))
        .collect();
    Ok(PsmSet { pool_a, pool_b, gold })
}

/// Generate everything. Pure function of the config.
pub fn generate_data(config: &ExperimentConfig) -> Result<DataBundle> {
    config.validate()?;
    let grammar = &config.grammar;
    let languages: Vec<LanguageSpec> = config
        .lang_seeds()
        .iter()
        .enumerate()
        .map(|(i, &seed)| derive_language(grammar, i, seed))
        .collect::<Result<_>>()?;

    // Disjoint-vocabulary sanity across every language pair.
    for i in 0..languages.len() {
        for j in i + 1..languages.len() {
            let sample = grammar.vocab_size.min(1000);
            let overlap = crate::synthlang::surface_overlap(&languages[i], &languages[j], sample);
            if overlap * 100 > sample {
                return Err(crate::error::Error::data(format!(
                    "languages {} and {} share {}/{} surface words",
                    i, j, overlap, sample
                )));
            }
        }
    }

    // Monolingual corpora: independent samples per language, each with its
    // own topic prior (the domain-mismatch analog of real monolingual
    // crawls) and a sprinkle of code-switched words (the loanword analog).
    let mono: Vec<Vec<String>> = languages
        .iter()
        .map(|lang| {
            let seed = config.stage_seed(&format!("mono-{}", lang.lang_id));
            let prior = crate::synthlang::grammar::topic_prior(lang.lang_seed);
            let bases = crate::synthlang::grammar::generate_base_corpus_biased(
                grammar,
                config.mono_sentences,
                seed,
                &prior,
            )?;
            let others: Vec<&LanguageSpec> =
                languages.iter().filter(|l| l.lang_id != lang.lang_id).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x77);
            bases
                .iter()
                .map(|b| {
                    crate::synthlang::language::render_mixed(
                        b,
                        lang,
                        &others,
                        config.code_switch_rate,
                        &mut rng,
                    )
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    // Evaluation and fine-tuning bases: one unique pool, sliced disjointly.
    let pairs = evaluated_pairs(config.n_languages);
    let per_pair = 2 * (config.mining_gold + 2 * config.mining_fill) + config.psm_pairs;
    let total = pairs.len() * per_pair + config.finetune_pairs;
    let bases: Vec<BaseSentence> =
        generate_unique_base_corpus(grammar, total, config.stage_seed("eval-bases"))?
            .into_iter()
            .enumerate()
            .map(|(idx, words)| BaseSentence { idx, words })
            .collect();

    let mut cursor = 0usize;
    let mut take = |n: usize| {
        let slice = &bases[cursor..cursor + n];
        cursor += n;
        slice
    };

    let finetune_bases = take(config.finetune_pairs).to_vec();
    let finetune = build_parallel_set(
        &finetune_bases,
        &languages[0],
        &languages[1],
        config.finetune_pairs,
        config.finetune_noise,
        config.stage_seed("finetune-pairs"),
    )?;
    let alt_noise = if config.finetune_noise > 0.0 { 0.0 } else { 0.1 };
    let finetune_alt = build_parallel_set(
        &finetune_bases,
        &languages[0],
        &languages[1],
        config.finetune_pairs,
        alt_noise,
        config.stage_seed("finetune-pairs-alt"),
    )?;

    let mut tasks = Vec::new();
    for pair in pairs {
        let (la, lb) = (&languages[pair.0], &languages[pair.1]);
        let mut task_for = |split: Split| -> Result<MiningTask> {
            let gold_bases = take(config.mining_gold);
            let fill_a = take(config.mining_fill);
            let fill_b = take(config.mining_fill);
            let seed = config.stage_seed(&format!("mining-{}-{}", pair, split));
            let gold_pairs =
                build_parallel_set(gold_bases, la, lb, config.mining_gold, 0.0, seed ^ 1)?;
            let mono_a = render_corpus(fill_a, la, 0.0, seed ^ 2)?;
            let mono_b = render_corpus(fill_b, lb, 0.0, seed ^ 3)?;
            build_mining_task(&gold_pairs, &mono_a, &mono_b, split, seed ^ 4)
        };
        let train = task_for(Split::Train)?;
        let test = task_for(Split::Test)?;
        let psm_bases = take(config.psm_pairs);
        let psm = build_psm_set(psm_bases, la, lb, pair, config.stage_seed(&format!("psm-{}", pair)))?;
        tasks.push(PairTasks { pair, train, test, psm });
    }

    Ok(DataBundle { languages, mono, finetune, finetune_alt, alt_noise, tasks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoke_bundle_has_expected_shapes() {
        let config = ExperimentConfig::smoke();
        let bundle = generate_data(&config).unwrap();
        assert_eq!(bundle.languages.len(), 3);
        assert_eq!(bundle.mono.len(), 3);
        assert_eq!(bundle.mono[0].len(), config.mono_sentences);
        assert_eq!(bundle.finetune.len(), config.finetune_pairs);
        assert_eq!(bundle.tasks.len(), 3);
        for t in &bundle.tasks {
            assert_eq!(t.train.pool_a.len(), config.mining_gold + config.mining_fill);
            assert_eq!(t.train.gold.len(), config.mining_gold);
            assert_eq!(t.psm.pool_a.len(), config.psm_pairs);
            t.train.validate().unwrap();
            t.test.validate().unwrap();
        }
        assert_eq!(bundle.alt_noise, 0.0);
    }

    #[test]
    fn generation_is_deterministic() {
        let config = ExperimentConfig::smoke();
        let a = generate_data(&config).unwrap();
        let b = generate_data(&config).unwrap();
        assert_eq!(a.mono, b.mono);
        assert_eq!(a.finetune, b.finetune);
        assert_eq!(a.tasks[0].train.pool_a, b.tasks[0].train.pool_a);
        assert_eq!(a.tasks[2].psm.gold, b.tasks[2].psm.gold);
    }

    #[test]
    fn psm_gold_points_at_the_right_sentences() {
        let config = ExperimentConfig::smoke();
        let bundle = generate_data(&config).unwrap();
        let task = &bundle.tasks[0];
        let (la, lb) = (&bundle.languages[0], &bundle.languages[1]);
        for (i, &j) in task.psm.gold.iter().enumerate() {
            let src = crate::synthlang::de_render(&task.psm.pool_a[i].1, la).unwrap();
            let tgt = crate::synthlang::de_render(&task.psm.pool_b[j].1, lb).unwrap();
            assert_eq!(src, tgt, "psm gold mismatch at {}", i);
        }
    }
}
