//! Shared subword vocabulary: greedy byte-pair encoding learned over the
//! concatenation of all languages' corpora.
//!
//! Words are split into character symbols with an end-of-word marker fused
//! onto the final character, so merges never cross word boundaries and
//! encoding is reversible. Merge selection is by pair frequency with ties
//! broken by lexicographic pair order.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const MASK_ID: u32 = 2;
pub const BOS_ID: u32 = 3;
pub const SEP_ID: u32 = 4;

const SPECIAL_SYMBOLS: [&str; 5] = ["<pad>", "<unk>", "<mask>", "<s>", "</s>"];
const EOW: &str = "</w>";
const UNK_GLYPH: &str = "\u{fffd}";

pub type TokenSeq = Vec<u32>;

#[derive(Debug, Clone, PartialEq)]
pub struct BpeModel {
    /// Ordered merge rules (left symbol, right symbol).
    merges: Vec<(String, String)>,
    /// symbol -> id; specials occupy ids 0..=4.
    vocab: HashMap<String, u32>,
    /// id -> symbol, same order as the vocab file.
    symbols: Vec<String>,
}

/// Split one word into its initial character symbols, the final character
/// carrying the end-of-word marker.
fn word_symbols(word: &str) -> Vec<String> {
    let chars: Vec<char> = word.chars().collect();
    let n = chars.len();
    chars
        .iter()
        .enumerate()
        .map(|(i, c)| {
            if i + 1 == n {
                format!("{}{}", c, EOW)
            } else {
                c.to_string()
            }
        })
        .collect()
}

/// Learn a BPE model. Merging stops after `n_merges` rules or when no
/// adjacent pair occurs at least twice.
pub fn learn_bpe(corpus: &[String], n_merges: usize) -> Result<BpeModel> {
    let mut word_counts: HashMap<String, u64> = HashMap::new();
    for line in corpus {
        for word in line.split_whitespace() {
            *word_counts.entry(word.to_string()).or_insert(0) += 1;
        }
    }
    if word_counts.is_empty() {
        return Err(Error::data("empty corpus: no words to learn BPE from"));
    }

    let mut words: Vec<(Vec<String>, u64)> = {
        let mut sorted: Vec<(String, u64)> = word_counts.into_iter().collect();
        sorted.sort_unstable();
        sorted.into_iter().map(|(w, c)| (word_symbols(&w), c)).collect()
    };

    let mut merges: Vec<(String, String)> = Vec::with_capacity(n_merges);
    for _ in 0..n_merges {
        let best = {
            let mut pair_counts: HashMap<(&str, &str), u64> = HashMap::new();
            for (symbols, count) in &words {
                for pair in symbols.windows(2) {
                    *pair_counts.entry((pair[0].as_str(), pair[1].as_str())).or_insert(0) += count;
                }
            }
            let mut best: Option<((&str, &str), u64)> = None;
            for (pair, count) in pair_counts {
                best = match best {
                    Some((bp, bc)) if count < bc || (count == bc && pair >= bp) => Some((bp, bc)),
                    _ => Some((pair, count)),
                };
            }
            best.map(|((l, r), c)| ((l.to_string(), r.to_string()), c))
        };
        let (pair, count) = match best {
            Some(p) => p,
            None => break,
        };
        if count < 2 {
            break;
        }
        for (symbols, _) in &mut words {
            apply_merge(symbols, &pair);
        }
        merges.push(pair);
    }

    // Alphabet = all single-character symbols (with and without the marker)
    // observed in the corpus, sorted for a stable id assignment.
    let mut alphabet: Vec<String> = {
        let mut set: std::collections::BTreeSet<String> = std::collections::BTreeSet::new();
        for (symbols, _) in &words {
            for s in symbols {
                set.insert(s.clone());
            }
        }
        // Merged symbols are added in merge order below; only keep the base
        // characters here.
        for (l, r) in &merges {
            set.remove(&format!("{}{}", l, r));
        }
        set.into_iter().collect()
    };
    // Characters hidden inside merged symbols still need base entries (a
    // merge can consume every free occurrence of a character).
    {
        let mut extra: std::collections::BTreeSet<String> = std::collections::BTreeSet::new();
        for (symbols, _) in &words {
            for s in symbols {
                let bare = s.strip_suffix(EOW).unwrap_or(s);
                for c in bare.chars() {
                    extra.insert(c.to_string());
                }
            }
            if let Some(last) = symbols.last() {
                let bare = last.strip_suffix(EOW).unwrap_or(last);
                if let Some(c) = bare.chars().last() {
                    extra.insert(format!("{}{}", c, EOW));
                }
            }
        }
        for s in extra {
            if !alphabet.contains(&s) {
                alphabet.push(s);
            }
        }
        alphabet.sort_unstable();
        alphabet.dedup();
    }

    let mut symbols: Vec<String> = SPECIAL_SYMBOLS.iter().map(|s| s.to_string()).collect();
    symbols.extend(alphabet);
    for (l, r) in &merges {
        let merged = format!("{}{}", l, r);
        if !symbols.contains(&merged) {
            symbols.push(merged);
        }
    }
    let vocab: HashMap<String, u32> =
        symbols.iter().enumerate().map(|(i, s)| (s.clone(), i as u32)).collect();

    Ok(BpeModel { merges, vocab, symbols })
}

/// Replace every adjacent occurrence of `pair` left to right.
fn apply_merge(symbols: &mut Vec<String>, pair: &(String, String)) {
    let mut i = 0;
    while i + 1 < symbols.len() {
        if symbols[i] == pair.0 && symbols[i + 1] == pair.1 {
            let merged = format!("{}{}", symbols[i], symbols[i + 1]);
            symbols[i] = merged;
            symbols.remove(i + 1);
        } else {
            i += 1;
        }
    }
}

impl BpeModel {
    pub fn vocab_size(&self) -> usize {
        self.symbols.len()
    }

    pub fn merge_count(&self) -> usize {
        self.merges.len()
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn id_of(&self, symbol: &str) -> Option<u32> {
        self.vocab.get(symbol).copied()
    }

    /// First id that may appear as a real subword; everything below is a
    /// special token.
    pub fn first_regular_id(&self) -> u32 {
        SPECIAL_SYMBOLS.len() as u32
    }

    pub fn encode(&self, sentence: &str) -> TokenSeq {
        let mut ids = Vec::new();
        for word in sentence.split_whitespace() {
            // None marks an unknown character (emitted as UNK, never merged).
            let mut symbols: Vec<Option<String>> = word_symbols(word)
                .into_iter()
                .map(|s| if self.vocab.contains_key(&s) { Some(s) } else { None })
                .collect();
            for (l, r) in &self.merges {
                let mut i = 0;
                while i + 1 < symbols.len() {
                    let matches = match (&symbols[i], &symbols[i + 1]) {
                        (Some(a), Some(b)) => a == l && b == r,
                        _ => false,
                    };
                    if matches {
                        let merged = format!("{}{}", l, r);
                        symbols[i] = Some(merged);
                        symbols.remove(i + 1);
                    } else {
                        i += 1;
                    }
                }
            }
            for s in symbols {
                match s {
                    Some(sym) => ids.push(self.vocab[&sym]),
                    None => ids.push(UNK_ID),
                }
            }
        }
        ids
    }

    pub fn decode(&self, ids: &[u32]) -> Result<String> {
        let mut out = String::new();
        let mut word = String::new();
        for &id in ids {
            let symbol = self
                .symbols
                .get(id as usize)
                .ok_or_else(|| Error::data(format!("token id {} out of range (vocab {})", id, self.symbols.len())))?;
            if id == UNK_ID {
                word.push_str(UNK_GLYPH);
                continue;
            }
            if id < self.first_regular_id() {
                if !word.is_empty() {
                    out.push_str(&word);
                    out.push(' ');
                    word.clear();
                }
                out.push_str(symbol);
                out.push(' ');
                continue;
            }
            if let Some(stripped) = symbol.strip_suffix(EOW) {
                word.push_str(stripped);
                out.push_str(&word);
                out.push(' ');
                word.clear();
            } else {
                word.push_str(symbol);
            }
        }
        if !word.is_empty() {
            out.push_str(&word);
            out.push(' ');
        }
        Ok(out.trim_end().to_string())
    }

    /// Serialize: header line "BPE1 <n_merges> <n_vocab>", merge lines
    /// "left<TAB>right", then vocab lines "symbol<TAB>id" in id order.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str(&format!("BPE1 {} {}\n", self.merges.len(), self.symbols.len()));
        for (l, r) in &self.merges {
            out.push_str(&format!("{}\t{}\n", l, r));
        }
        for (i, s) in self.symbols.iter().enumerate() {
            out.push_str(&format!("{}\t{}\n", s, i));
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<BpeModel> {
        let text = fs::read_to_string(path)?;
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::format("empty BPE model file"))?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some("BPE1") {
            return Err(Error::format("BPE model file missing BPE1 header"));
        }
        let n_merges: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format("bad merge count in BPE header"))?;
        let n_vocab: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format("bad vocab count in BPE header"))?;
        let mut merges = Vec::with_capacity(n_merges);
        for _ in 0..n_merges {
            let line = lines.next().ok_or_else(|| Error::format("truncated merge list"))?;
            let (l, r) = line
                .split_once('\t')
                .ok_or_else(|| Error::format(format!("merge line without tab: {:?}", line)))?;
            merges.push((l.to_string(), r.to_string()));
        }
        let mut symbols = vec![String::new(); n_vocab];
        for _ in 0..n_vocab {
            let line = lines.next().ok_or_else(|| Error::format("truncated vocab list"))?;
            let (sym, id) = line
                .split_once('\t')
                .ok_or_else(|| Error::format(format!("vocab line without tab: {:?}", line)))?;
            let id: usize = id.parse().map_err(|_| Error::format(format!("bad vocab id: {:?}", id)))?;
            if id >= n_vocab {
                return Err(Error::format(format!("vocab id {} out of range", id)));
            }
            symbols[id] = sym.to_string();
        }
        let vocab = symbols.iter().enumerate().map(|(i, s)| (s.clone(), i as u32)).collect();
        Ok(BpeModel { merges, vocab, symbols })
    }
}
