//! Base grammar and base-corpus generation.
//!
//! Base sentences are sequences of abstract word ids drawn from a Zipfian
//! vocabulary, arranged by sentence templates over a small set of word
//! classes. Every sentence carries a latent topic; each word has a fixed
//! pseudo-random topic profile that tilts its sampling weight, so words get
//! distinctive, statistically estimable context distributions (frequency,
//! class and topical signature) for distributional methods to latch onto.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hashutil::{fnv1a64_with, splitmix64, FNV_OFFSET};

/// Number of part-of-speech-like word classes. Word `w` belongs to class
/// `w % WORD_CLASSES`.
pub const WORD_CLASSES: usize = 4;

/// Number of latent sentence topics.
pub const TOPICS: usize = 8;

/// Baseline weight every word keeps in every topic; the remaining mass
/// follows the word's topic profile.
const TOPIC_FLOOR: f64 = 0.25;

/// Predecessor words are hashed into this many groups; each word carries a
/// binary affinity signature over the groups. The signature is coarse enough
/// to estimate from a few hundred occurrences yet word-specific.
pub const AFFINITY_GROUPS: usize = 16;

/// Number of universal words rendered identically in every derived language
/// (the analog of digits and proper names in natural corpora). Kept below 1%
/// of the vocabulary so cross-language surface overlap stays within the
/// disjointness budget.
pub const UNIVERSAL_WORDS: usize = 4;

/// Weight multiplier when the predecessor's group is in the word's
/// signature.
const AFFINITY_BOOST: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BaseGrammar {
    /// Number of base word types.
    pub vocab_size: usize,
    /// Zipf exponent for word frequencies (> 0).
    pub zipf_exponent: f64,
    /// Sentence length bounds in words.
    pub len_min: usize,
    pub len_max: usize,
    /// Number of sentence templates (class sequences).
    pub template_count: usize,
}

impl Default for BaseGrammar {
    fn default() -> Self {
        BaseGrammar {
            vocab_size: 2000,
            zipf_exponent: 1.0,
            len_min: 4,
            len_max: 12,
            template_count: 12,
        }
    }
}

impl BaseGrammar {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 50 {
            return Err(Error::config(format!(
                "vocab_size must be >= 50, got {}",
                self.vocab_size
            )));
        }
        if !(self.zipf_exponent > 0.0) {
            return Err(Error::config(format!(
                "zipf_exponent must be > 0, got {}",
                self.zipf_exponent
            )));
        }
        if self.len_min < 1 || self.len_min > self.len_max || self.len_max > 64 {
            return Err(Error::config(format!(
                "sentence length bounds must satisfy 1 <= len_min <= len_max <= 64, got {}..{}",
                self.len_min, self.len_max
            )));
        }
        if self.template_count == 0 {
            return Err(Error::config("template_count must be >= 1"));
        }
        Ok(())
    }

    /// Stable fingerprint over all grammar fields.
    pub fn fingerprint(&self) -> u64 {
        let mut h = FNV_OFFSET;
        h = fnv1a64_with(h, &(self.vocab_size as u64).to_le_bytes());
        h = fnv1a64_with(h, &self.zipf_exponent.to_bits().to_le_bytes());
        h = fnv1a64_with(h, &(self.len_min as u64).to_le_bytes());
        h = fnv1a64_with(h, &(self.len_max as u64).to_le_bytes());
        h = fnv1a64_with(h, &(self.template_count as u64).to_le_bytes());
        h
    }

    /// Sentence templates are a pure function of the grammar: same grammar,
    /// same templates, regardless of corpus seed.
    pub fn templates(&self) -> Vec<Vec<usize>> {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(self.fingerprint()));
        (0..self.template_count)
            .map(|_| {
                let len = rng.random_range(self.len_min..=self.len_max);
                (0..len).map(|_| rng.random_range(0..WORD_CLASSES)).collect()
            })
            .collect()
    }

    pub fn word_class(&self, word: u32) -> usize {
        word as usize % WORD_CLASSES
    }

    /// Base words that every derived language renders with the same surface
    /// form: the analog of punctuation, digits and names, which natural
    /// corpora share across languages. Frequencies are chosen so the shared
    /// tokens carry roughly the token mass punctuation, digits and names
    /// have in news text (~10%), while the type count stays within the <= 1%
    /// vocabulary-overlap budget.
    pub fn universal_words(&self) -> Vec<u32> {
        let v = self.vocab_size as u32;
        let mut ids: Vec<u32> = [2u32, 5, 9, 14, 20, 33, 50, 90, 160]
            .into_iter()
            .map(|w| w.min(v - 1))
            .collect();
        ids.sort_unstable();
        ids.dedup();
        // Stay under 1% of any frequency-ranked vocabulary sample.
        let budget = (self.vocab_size / 120).max(2);
        ids.truncate(budget);
        ids
    }
}

/// Fixed pseudo-random topic profile of a word: nonnegative, sums to 1.
/// Squaring the raw hash draws sharpens profiles so most words lean toward a
/// couple of topics.
pub fn topic_profile(word: u32) -> [f64; TOPICS] {
    let mut raw = [0.0f64; TOPICS];
    let mut sum = 0.0;
    for (t, slot) in raw.iter_mut().enumerate() {
        let h = splitmix64((word as u64).wrapping_mul(0x9E3779B97F4A7C15) ^ (t as u64).wrapping_mul(0xD1B54A32D192ED03));
        let u = (h >> 11) as f64 / (1u64 << 53) as f64;
        *slot = u * u;
        sum += *slot;
    }
    for slot in raw.iter_mut() {
        *slot /= sum;
    }
    raw
}

/// Group a predecessor word falls into for affinity lookups.
#[inline]
pub fn affinity_group(word: u32) -> usize {
    (splitmix64((word as u64).wrapping_mul(0xBF58476D1CE4E5B9) ^ 0xA076_1D64) % AFFINITY_GROUPS as u64) as usize
}

/// Whether `word` is boosted after a predecessor of `group` (a fixed
/// pseudo-random signature, about half the groups per word).
#[inline]
pub fn affinity_bit(word: u32, group: usize) -> bool {
    let h = splitmix64((word as u64).wrapping_mul(0x94D049BB133111EB) ^ (group as u64).wrapping_mul(0x2545F4914F6CDD1D));
    h & 3 == 1
}

/// Per-(class, topic, predecessor-group) cumulative sampling tables. Group
/// index AFFINITY_GROUPS is the sentence-initial case (no affinity factor).
struct ClassTable {
    /// members[c] = word ids of class c, ascending.
    members: Vec<Vec<u32>>,
    /// cumulative[c][t][g] = cumulative weights of members[c].
    cumulative: Vec<Vec<Vec<Vec<f64>>>>,
}

impl ClassTable {
    fn build(grammar: &BaseGrammar) -> Self {
        let mut members = vec![Vec::new(); WORD_CLASSES];
        for w in 0..grammar.vocab_size as u32 {
            members[grammar.word_class(w)].push(w);
        }
        let cumulative = members
            .iter()
            .map(|words| {
                (0..TOPICS)
                    .map(|t| {
                        (0..=AFFINITY_GROUPS)
                            .map(|g| {
                                let mut acc = 0.0;
                                words
                                    .iter()
                                    .map(|&w| {
                                        let zipf =
                                            1.0 / ((w as f64) + 1.0).powf(grammar.zipf_exponent);
                                        let topical = TOPIC_FLOOR + topic_profile(w)[t];
                                        let affine = if g < AFFINITY_GROUPS && affinity_bit(w, g) {
                                            1.0 + AFFINITY_BOOST
                                        } else {
                                            1.0
                                        };
                                        acc += zipf * topical * affine;
                                        acc
                                    })
                                    .collect()
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        ClassTable { members, cumulative }
    }

    fn sample(&self, class: usize, topic: usize, prev: Option<u32>, rng: &mut ChaCha8Rng) -> u32 {
        let group = prev.map(affinity_group).unwrap_or(AFFINITY_GROUPS);
        let cum = &self.cumulative[class][topic][group];
        let total = *cum.last().expect("class is non-empty for vocab_size >= 50");
        let target = rng.random_range(0.0..total);
        let idx = cum.partition_point(|&c| c <= target).min(cum.len() - 1);
        self.members[class][idx]
    }
}

/// A language- or domain-specific prior over sentence topics, normalized.
/// Deterministic per seed; seed 0 gives the uniform prior. Monolingual
/// corpora of different languages use different priors, mirroring the domain
/// mismatch between real monolingual crawls.
pub fn topic_prior(seed: u64) -> [f64; TOPICS] {
    let mut weights = [1.0f64; TOPICS];
    if seed != 0 {
        let mut sum = 0.0;
        for (t, w) in weights.iter_mut().enumerate() {
            let h = splitmix64(seed.wrapping_mul(0x9E3779B97F4A7C15) ^ (t as u64).wrapping_mul(0xD1B54A32D192ED03));
            let u = (h >> 11) as f64 / (1u64 << 53) as f64;
            *w = 0.25 + 2.0 * u * u;
            sum += *w;
        }
        for w in weights.iter_mut() {
            *w /= sum;
        }
    } else {
        for w in weights.iter_mut() {
            *w = 1.0 / TOPICS as f64;
        }
    }
    weights
}

/// Generate `n` base sentences (word-id sequences). Each sentence draws a
/// latent topic from the prior, picks a template, and fills slots with class
/// words tilted by the topic and by affinity with the preceding word.
/// Deterministic per seed.
pub fn generate_base_corpus_biased(
    grammar: &BaseGrammar,
    n: usize,
    seed: u64,
    prior: &[f64; TOPICS],
) -> Result<Vec<Vec<u32>>> {
    grammar.validate()?;
    if n == 0 {
        return Err(Error::config("corpus size must be >= 1"));
    }
    let templates = grammar.templates();
    let table = ClassTable::build(grammar);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cum = [0.0f64; TOPICS];
    let mut acc = 0.0;
    for (t, &p) in prior.iter().enumerate() {
        acc += p;
        cum[t] = acc;
    }
    let mut corpus = Vec::with_capacity(n);
    for _ in 0..n {
        let r = rng.random_range(0.0..acc);
        let topic = cum.partition_point(|&c| c <= r).min(TOPICS - 1);
        let template = &templates[rng.random_range(0..templates.len())];
        let mut prev = None;
        let mut sentence = Vec::with_capacity(template.len());
        for &class in template {
            let w = table.sample(class, topic, prev, &mut rng);
            sentence.push(w);
            prev = Some(w);
        }
        corpus.push(sentence);
    }
    Ok(corpus)
}

/// Uniform-topic corpus generation.
pub fn generate_base_corpus(grammar: &BaseGrammar, n: usize, seed: u64) -> Result<Vec<Vec<u32>>> {
    generate_base_corpus_biased(grammar, n, seed, &topic_prior(0))
}

/// Generate at least `n` pairwise-distinct base sentences by oversampling.
/// Used where downstream tasks need duplicate-free pools.
pub fn generate_unique_base_corpus(
    grammar: &BaseGrammar,
    n: usize,
    seed: u64,
) -> Result<Vec<Vec<u32>>> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(n);
    let mut round = 0u64;
    while out.len() < n {
        let want = (n - out.len()) * 5 / 4 + 16;
        let batch = generate_base_corpus(grammar, want, splitmix64(seed ^ round))?;
        for s in batch {
            if out.len() == n {
                break;
            }
            if seen.insert(s.clone()) {
                out.push(s);
            }
        }
        round += 1;
        if round > 64 {
            return Err(Error::data(format!(
                "could not collect {} unique sentences; grammar space too small",
                n
            )));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_respects_length_bounds() {
        let grammar = BaseGrammar { vocab_size: 50, ..Default::default() };
        let corpus = generate_base_corpus(&grammar, 3, 7).unwrap();
        assert_eq!(corpus.len(), 3);
        for s in &corpus {
            assert!(s.len() >= grammar.len_min && s.len() <= grammar.len_max);
            assert!(s.iter().all(|&w| (w as usize) < grammar.vocab_size));
        }
    }

    #[test]
    fn corpus_is_deterministic() {
        let grammar = BaseGrammar::default();
        let a = generate_base_corpus(&grammar, 100, 7).unwrap();
        let b = generate_base_corpus(&grammar, 100, 7).unwrap();
        assert_eq!(a, b);
        let c = generate_base_corpus(&grammar, 100, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_grammar_is_rejected() {
        let grammar = BaseGrammar { vocab_size: 10, ..Default::default() };
        assert!(matches!(generate_base_corpus(&grammar, 5, 1), Err(Error::Config(_))));
        let grammar = BaseGrammar { len_min: 9, len_max: 3, ..Default::default() };
        assert!(grammar.validate().is_err());
    }

    /// Independent oracle: ordinary least squares of log(freq) on log(rank)
    /// over words with nonzero counts.
    fn zipf_slope(counts: &mut Vec<usize>) -> f64 {
        counts.sort_unstable_by(|a, b| b.cmp(a));
        let points: Vec<(f64, f64)> = counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| (((i + 1) as f64).ln(), (c as f64).ln()))
            .collect();
        let n = points.len() as f64;
        let sx: f64 = points.iter().map(|p| p.0).sum();
        let sy: f64 = points.iter().map(|p| p.1).sum();
        let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
        (n * sxy - sx * sy) / (n * sxx - sx * sx)
    }

    #[test]
    fn rank_frequency_follows_zipf_exponent() {
        let grammar = BaseGrammar { vocab_size: 500, zipf_exponent: 1.0, ..Default::default() };
        let corpus = generate_base_corpus(&grammar, 10_000, 1).unwrap();
        let mut counts = vec![0usize; grammar.vocab_size];
        for s in &corpus {
            for &w in s {
                counts[w as usize] += 1;
            }
        }
        let slope = zipf_slope(&mut counts);
        assert!(
            (slope + grammar.zipf_exponent).abs() < 0.2,
            "log-log slope {} too far from -{}",
            slope,
            grammar.zipf_exponent
        );
    }

    #[test]
    fn templates_are_a_pure_function_of_grammar() {
        let grammar = BaseGrammar::default();
        assert_eq!(grammar.templates(), grammar.templates());
        let other = BaseGrammar { template_count: 13, ..Default::default() };
        assert_ne!(grammar.templates(), other.templates());
    }

    #[test]
    fn unique_corpus_has_no_duplicates() {
        let grammar = BaseGrammar::default();
        let corpus = generate_unique_base_corpus(&grammar, 2000, 3).unwrap();
        assert_eq!(corpus.len(), 2000);
        let set: std::collections::HashSet<_> = corpus.iter().collect();
        assert_eq!(set.len(), corpus.len());
    }
}
