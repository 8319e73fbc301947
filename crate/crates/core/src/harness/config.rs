//! Experiment configuration: one flat record driving every stage, with a
//! canonical text serialization whose hash is embedded in all reports.

use std::fmt::Write as _;
use std::path::Path;

use crate::embedder::{PoolingMethod, PoolingSpec};
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::hashutil::fnv1a64;
use crate::miner::{ExtractionStrategy, MarginSpec, MarginVariant};
use crate::synthlang::BaseGrammar;
use crate::wordmap::{WordVecAlgorithm, WordVecConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Number of synthetic languages (the first two form the fine-tune pair).
    pub n_languages: usize,
    pub grammar: BaseGrammar,
    /// Monolingual sentences per language for MLM pretraining.
    pub mono_sentences: usize,
    /// Fraction of monolingual-corpus words realized in another family
    /// language (loanword analog).
    pub code_switch_rate: f64,
    pub bpe_merges: usize,

    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub max_positions: usize,
    pub dropout: f32,

    pub pretrain_epochs: usize,
    pub pretrain_batch: usize,
    pub pretrain_lr: f64,

    pub finetune_pairs: usize,
    pub finetune_noise: f64,
    pub finetune_epochs: usize,
    pub finetune_batch: usize,
    pub finetune_lr: f64,

    /// Pooling layer; usize::MAX means "default for depth".
    pub pooling_layer: usize,
    pub pooling_method: PoolingMethod,
    pub normalize_embeddings: bool,

    pub margin_variant: MarginVariant,
    pub margin_k: usize,
    pub margin_strategy: ExtractionStrategy,

    pub mining_gold: usize,
    pub mining_fill: usize,
    pub psm_pairs: usize,

    pub wordvec_dim: usize,
    pub wordvec_epochs: usize,
    pub wordvec_algorithm: WordVecAlgorithm,
    pub align_iters: usize,

    /// Run the authentic-vs-synthetic fine-tuning ablation stage.
    pub noise_ablation: bool,

    pub master_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n_languages: 3,
            grammar: BaseGrammar::default(),
            mono_sentences: 30_000,
            code_switch_rate: 0.02,
            bpe_merges: 2000,
            n_layers: 4,
            n_heads: 4,
            d_model: 128,
            d_ff: 512,
            max_positions: 128,
            dropout: 0.1,
            pretrain_epochs: 2,
            pretrain_batch: 32,
            pretrain_lr: 3e-4,
            finetune_pairs: 2000,
            finetune_noise: 0.1,
            finetune_epochs: 1,
            finetune_batch: 8,
            finetune_lr: 1e-4,
            pooling_layer: usize::MAX,
            pooling_method: PoolingMethod::Mean,
            normalize_embeddings: true,
            margin_variant: MarginVariant::Ratio,
            margin_k: 4,
            margin_strategy: ExtractionStrategy::MaxUnion,
            mining_gold: 500,
            mining_fill: 10_000,
            psm_pairs: 500,
            wordvec_dim: 32,
            wordvec_epochs: 3,
            wordvec_algorithm: WordVecAlgorithm::SkipGram,
            align_iters: 8,
            noise_ablation: true,
            master_seed: 42,
        }
    }
}

impl ExperimentConfig {
    /// A scaled-down configuration exercising every stage in seconds.
    pub fn smoke() -> Self {
        ExperimentConfig {
            mono_sentences: 2500,
            bpe_merges: 400,
            n_layers: 2,
            n_heads: 2,
            d_model: 32,
            d_ff: 128,
            pretrain_epochs: 1,
            finetune_pairs: 300,
            mining_gold: 50,
            mining_fill: 400,
            psm_pairs: 80,
            wordvec_epochs: 2,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grammar.validate()?;
        if self.n_languages < 2 {
            return Err(Error::config("need at least 2 languages"));
        }
        if self.mono_sentences == 0 || self.finetune_pairs == 0 {
            return Err(Error::config("corpus sizes must be positive"));
        }
        if self.mining_gold == 0 || self.psm_pairs == 0 {
            return Err(Error::config("evaluation sizes must be positive"));
        }
        if !(0.0..=1.0).contains(&self.finetune_noise) {
            return Err(Error::config("finetune_noise must be in [0,1]"));
        }
        if !(0.0..=1.0).contains(&self.code_switch_rate) {
            return Err(Error::config("code_switch_rate must be in [0,1]"));
        }
        if self.margin_k == 0 {
            return Err(Error::config("margin k must be >= 1"));
        }
        self.encoder_shape(1).validate()?;
        Ok(())
    }

    /// Encoder config once the tokenizer's vocabulary size is known.
    pub fn encoder_shape(&self, vocab_size: usize) -> EncoderConfig {
        EncoderConfig {
            n_layers: self.n_layers,
            n_heads: self.n_heads,
            d_model: self.d_model,
            d_ff: self.d_ff,
            max_positions: self.max_positions,
            n_languages: self.n_languages,
            vocab_size,
            dropout: self.dropout,
        }
    }

    pub fn pooling_spec(&self) -> PoolingSpec {
        let mut spec = PoolingSpec::default_for_depth(self.n_layers);
        if self.pooling_layer != usize::MAX {
            spec.layer = self.pooling_layer;
        }
        spec.method = self.pooling_method;
        spec.normalize = self.normalize_embeddings;
        spec
    }

    pub fn margin_spec(&self) -> MarginSpec {
        MarginSpec { variant: self.margin_variant, k: self.margin_k, strategy: self.margin_strategy }
    }

    pub fn wordvec_config(&self) -> WordVecConfig {
        WordVecConfig {
            dim: self.wordvec_dim,
            epochs: self.wordvec_epochs,
            algorithm: self.wordvec_algorithm,
            ..Default::default()
        }
    }

    /// Language derivation seeds; seed 0 is reserved for the identity
    /// language and never produced here.
    pub fn lang_seeds(&self) -> Vec<u64> {
        (0..self.n_languages).map(|i| self.stage_seed(&format!("language-{}", i))).collect()
    }

    /// Deterministic per-stage seed derived from the master seed and a name.
    pub fn stage_seed(&self, stage: &str) -> u64 {
        let mut bytes = self.master_seed.to_le_bytes().to_vec();
        bytes.extend_from_slice(stage.as_bytes());
        fnv1a64(&bytes).max(1)
    }

    /// Canonical flat key-value serialization (fixed key order).
    pub fn to_canonical_string(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{} = {}", k, v);
        };
        kv("n_languages", self.n_languages.to_string());
        kv("grammar.vocab_size", self.grammar.vocab_size.to_string());
        kv("grammar.zipf_exponent", format!("{}", self.grammar.zipf_exponent));
        kv("grammar.len_min", self.grammar.len_min.to_string());
        kv("grammar.len_max", self.grammar.len_max.to_string());
        kv("grammar.template_count", self.grammar.template_count.to_string());
        kv("mono_sentences", self.mono_sentences.to_string());
        kv("code_switch_rate", format!("{}", self.code_switch_rate));
        kv("bpe_merges", self.bpe_merges.to_string());
        kv("n_layers", self.n_layers.to_string());
        kv("n_heads", self.n_heads.to_string());
        kv("d_model", self.d_model.to_string());
        kv("d_ff", self.d_ff.to_string());
        kv("max_positions", self.max_positions.to_string());
        kv("dropout", format!("{}", self.dropout));
        kv("pretrain_epochs", self.pretrain_epochs.to_string());
        kv("pretrain_batch", self.pretrain_batch.to_string());
        kv("pretrain_lr", format!("{}", self.pretrain_lr));
        kv("finetune_pairs", self.finetune_pairs.to_string());
        kv("finetune_noise", format!("{}", self.finetune_noise));
        kv("finetune_epochs", self.finetune_epochs.to_string());
        kv("finetune_batch", self.finetune_batch.to_string());
        kv("finetune_lr", format!("{}", self.finetune_lr));
        kv(
            "pooling_layer",
            if self.pooling_layer == usize::MAX {
                "default".to_string()
            } else {
                self.pooling_layer.to_string()
            },
        );
        kv(
            "pooling_method",
            match self.pooling_method {
                PoolingMethod::Mean => "mean".into(),
                PoolingMethod::Max => "max".into(),
            },
        );
        kv("normalize_embeddings", self.normalize_embeddings.to_string());
        kv(
            "margin_variant",
            match self.margin_variant {
                MarginVariant::Absolute => "absolute".into(),
                MarginVariant::Distance => "distance".into(),
                MarginVariant::Ratio => "ratio".into(),
            },
        );
        kv("margin_k", self.margin_k.to_string());
        kv(
            "margin_strategy",
            match self.margin_strategy {
                ExtractionStrategy::Forward => "forward".into(),
                ExtractionStrategy::Backward => "backward".into(),
                ExtractionStrategy::Intersection => "intersection".into(),
                ExtractionStrategy::MaxUnion => "max-union".into(),
            },
        );
        kv("mining_gold", self.mining_gold.to_string());
        kv("mining_fill", self.mining_fill.to_string());
        kv("psm_pairs", self.psm_pairs.to_string());
        kv("wordvec_dim", self.wordvec_dim.to_string());
        kv("wordvec_epochs", self.wordvec_epochs.to_string());
        kv(
            "wordvec_algorithm",
            match self.wordvec_algorithm {
                WordVecAlgorithm::SkipGram => "skip-gram".into(),
                WordVecAlgorithm::PpmiSvd => "ppmi-svd".into(),
            },
        );
        kv("align_iters", self.align_iters.to_string());
        kv("noise_ablation", self.noise_ablation.to_string());
        kv("master_seed", self.master_seed.to_string());
        s
    }

    pub fn hash(&self) -> String {
        format!("{:016x}", fnv1a64(self.to_canonical_string().as_bytes()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_canonical_string())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Parse the flat key-value format; unknown keys are errors, missing keys
    /// keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::format(format!("line {}: expected key = value", lineno + 1)))?;
            let key = key.trim();
            let value = value.trim();
            let bad = |what: &str| Error::format(format!("line {}: bad {} value {:?}", lineno + 1, what, value));
            match key {
                "n_languages" => cfg.n_languages = value.parse().map_err(|_| bad(key))?,
                "grammar.vocab_size" => cfg.grammar.vocab_size = value.parse().map_err(|_| bad(key))?,
                "grammar.zipf_exponent" => cfg.grammar.zipf_exponent = value.parse().map_err(|_| bad(key))?,
                "grammar.len_min" => cfg.grammar.len_min = value.parse().map_err(|_| bad(key))?,
                "grammar.len_max" => cfg.grammar.len_max = value.parse().map_err(|_| bad(key))?,
                "grammar.template_count" => cfg.grammar.template_count = value.parse().map_err(|_| bad(key))?,
                "mono_sentences" => cfg.mono_sentences = value.parse().map_err(|_| bad(key))?,
                "code_switch_rate" => cfg.code_switch_rate = value.parse().map_err(|_| bad(key))?,
                "bpe_merges" => cfg.bpe_merges = value.parse().map_err(|_| bad(key))?,
                "n_layers" => cfg.n_layers = value.parse().map_err(|_| bad(key))?,
                "n_heads" => cfg.n_heads = value.parse().map_err(|_| bad(key))?,
                "d_model" => cfg.d_model = value.parse().map_err(|_| bad(key))?,
                "d_ff" => cfg.d_ff = value.parse().map_err(|_| bad(key))?,
                "max_positions" => cfg.max_positions = value.parse().map_err(|_| bad(key))?,
                "dropout" => cfg.dropout = value.parse().map_err(|_| bad(key))?,
                "pretrain_epochs" => cfg.pretrain_epochs = value.parse().map_err(|_| bad(key))?,
                "pretrain_batch" => cfg.pretrain_batch = value.parse().map_err(|_| bad(key))?,
                "pretrain_lr" => cfg.pretrain_lr = value.parse().map_err(|_| bad(key))?,
                "finetune_pairs" => cfg.finetune_pairs = value.parse().map_err(|_| bad(key))?,
                "finetune_noise" => cfg.finetune_noise = value.parse().map_err(|_| bad(key))?,
                "finetune_epochs" => cfg.finetune_epochs = value.parse().map_err(|_| bad(key))?,
                "finetune_batch" => cfg.finetune_batch = value.parse().map_err(|_| bad(key))?,
                "finetune_lr" => cfg.finetune_lr = value.parse().map_err(|_| bad(key))?,
                "pooling_layer" => {
                    cfg.pooling_layer = if value == "default" {
                        usize::MAX
                    } else {
                        value.parse().map_err(|_| bad(key))?
                    }
                }
                "pooling_method" => {
                    cfg.pooling_method = match value {
                        "mean" => PoolingMethod::Mean,
                        "max" => PoolingMethod::Max,
                        _ => return Err(bad(key)),
                    }
                }
                "normalize_embeddings" => cfg.normalize_embeddings = value.parse().map_err(|_| bad(key))?,
                "margin_variant" => {
                    cfg.margin_variant = match value {
                        "absolute" => MarginVariant::Absolute,
                        "distance" => MarginVariant::Distance,
                        "ratio" => MarginVariant::Ratio,
                        _ => return Err(bad(key)),
                    }
                }
                "margin_k" => cfg.margin_k = value.parse().map_err(|_| bad(key))?,
                "margin_strategy" => {
                    cfg.margin_strategy = match value {
                        "forward" => ExtractionStrategy::Forward,
                        "backward" => ExtractionStrategy::Backward,
                        "intersection" => ExtractionStrategy::Intersection,
                        "max-union" => ExtractionStrategy::MaxUnion,
                        _ => return Err(bad(key)),
                    }
                }
                "mining_gold" => cfg.mining_gold = value.parse().map_err(|_| bad(key))?,
                "mining_fill" => cfg.mining_fill = value.parse().map_err(|_| bad(key))?,
                "psm_pairs" => cfg.psm_pairs = value.parse().map_err(|_| bad(key))?,
                "wordvec_dim" => cfg.wordvec_dim = value.parse().map_err(|_| bad(key))?,
                "wordvec_epochs" => cfg.wordvec_epochs = value.parse().map_err(|_| bad(key))?,
                "wordvec_algorithm" => {
                    cfg.wordvec_algorithm = match value {
                        "skip-gram" => WordVecAlgorithm::SkipGram,
                        "ppmi-svd" => WordVecAlgorithm::PpmiSvd,
                        _ => return Err(bad(key)),
                    }
                }
                "align_iters" => cfg.align_iters = value.parse().map_err(|_| bad(key))?,
                "noise_ablation" => cfg.noise_ablation = value.parse().map_err(|_| bad(key))?,
                "master_seed" => cfg.master_seed = value.parse().map_err(|_| bad(key))?,
                other => return Err(Error::format(format!("unknown config key {:?}", other))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
