//! The experiment pipeline: data generation, shared-BPE learning, MLM
//! pretraining, TLM fine-tuning, three-system evaluation (word mapping,
//! vanilla, fine-tuned), the noise ablation and the layer sweep.
//!
//! Every stage persists its artifact under the output directory and is
//! skipped on rerun when the artifact already exists for the same config
//! hash. All randomness derives from the master seed, so a full rerun
//! reproduces every metric bitwise.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::embedder::{embed, EmbeddingSet, PoolingSpec};
use crate::encoder::{
    apply_mlm_masking, build_tlm_example, train, EncoderParams, MaskedBatch, MaskedExample,
    MaskingPolicy, TrainSchedule,
};
use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::data::{generate_data, DataBundle, LangPair, PairTasks};
use crate::harness::metrics::{append_jsonl, write_canonical, MetricsRecord};
use crate::harness::sweep::layer_sweep_stage;
use crate::matcher::psm_accuracy;
use crate::miner::{evaluate_mining, margin_scores, tune_threshold, write_candidates};
use crate::synthlang::{io as task_io, MiningTask, SentencePair};
use crate::tokenizer::{learn_bpe, BpeModel};
use crate::wordmap::{
    self_learning_align, sentence_embeddings, train_word_vectors, AlignInit, OrthogonalMap,
    WordVecTable,
};

pub struct Pipeline {
    pub config: ExperimentConfig,
    pub out_dir: PathBuf,
    pub records: Vec<MetricsRecord>,
    config_hash: String,
}

/// One embedding interface for all three systems: the miner and matcher see
/// only `EmbeddingSet`s.
pub enum System<'a> {
    Encoder { name: &'static str, params: &'a EncoderParams<f32>, bpe: &'a BpeModel, pooling: PoolingSpec },
    WordMap { name: &'static str, tables: &'a [WordVecTable], maps: &'a [Option<OrthogonalMap>] },
}

impl System<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            System::Encoder { name, .. } => name,
            System::WordMap { name, .. } => name,
        }
    }

    pub fn embed_pool(&self, sentences: &[(String, String)], lang: usize) -> Result<EmbeddingSet> {
        match self {
            System::Encoder { params, bpe, pooling, .. } => {
                embed(params, sentences, lang as u32, pooling, bpe)
            }
            System::WordMap { tables, maps, .. } => {
                sentence_embeddings(&tables[lang], maps[lang].as_ref(), sentences, None, true)
            }
        }
    }
}

impl Pipeline {
    pub fn new(config: ExperimentConfig, out_dir: &Path) -> Result<Pipeline> {
        config.validate()?;
        fs::create_dir_all(out_dir)?;
        fs::create_dir_all(out_dir.join("tasks"))?;
        fs::create_dir_all(out_dir.join("candidates"))?;
        let config_path = out_dir.join("config.txt");
        if config_path.exists() {
            let existing = ExperimentConfig::load(&config_path)?;
            if existing != config {
                return Err(Error::config(format!(
                    "output dir {} holds a different config (hash {} vs {})",
                    out_dir.display(),
                    existing.hash(),
                    config.hash()
                )));
            }
        } else {
            config.save(&config_path)?;
        }
        let config_hash = config.hash();
        Ok(Pipeline { config, out_dir: out_dir.to_path_buf(), records: Vec::new(), config_hash })
    }

    fn record(&mut self, stage: &str, started: Instant) -> &mut MetricsRecord {
        let mut rec = MetricsRecord::new(stage, &self.config_hash, self.config.master_seed);
        rec.stamp(started.elapsed().as_secs_f64());
        self.records.push(rec);
        self.records.last_mut().unwrap()
    }

    pub(crate) fn flush_record(&self) -> Result<()> {
        if let Some(last) = self.records.last() {
            append_jsonl(&self.out_dir.join("metrics.jsonl"), last)?;
        }
        Ok(())
    }

    /// Stage 1: languages, corpora, tasks. Regeneration is cheap and
    /// deterministic; files are written once for external consumers.
    pub fn stage_data(&mut self) -> Result<DataBundle> {
        let started = Instant::now();
        let bundle = generate_data(&self.config)?;
        let marker = self.out_dir.join("data.done");
        if !marker.exists() {
            let records: Vec<_> =
                bundle.languages.iter().map(|l| l.record(&self.config.grammar)).collect();
            fs::write(
                self.out_dir.join("langs.json"),
                serde_json::to_string_pretty(&records).expect("records serialize") + "\n",
            )?;
            for (i, corpus) in bundle.mono.iter().enumerate() {
                task_io::write_corpus(&self.out_dir.join(format!("mono-L{}.txt", i + 1)), corpus)?;
            }
            write_pairs(&self.out_dir.join("finetune.tsv"), &bundle.finetune)?;
            write_pairs(&self.out_dir.join("finetune-alt.tsv"), &bundle.finetune_alt)?;
            for t in &bundle.tasks {
                task_io::write_task(&self.out_dir.join("tasks"), &format!("{}.train", t.pair), &t.train)?;
                task_io::write_task(&self.out_dir.join("tasks"), &format!("{}.test", t.pair), &t.test)?;
                write_psm(&self.out_dir.join("tasks"), &format!("{}.psm", t.pair), &t.psm)?;
            }
            fs::write(&marker, "ok\n")?;
        }
        let rec = self.record("data", started);
        rec.put("languages", bundle.languages.len() as f64);
        rec.put("mono_sentences_per_lang", bundle.mono[0].len() as f64);
        rec.put("finetune_pairs", bundle.finetune.len() as f64);
        rec.put("evaluated_pairs", bundle.tasks.len() as f64);
        self.flush_record()?;
        Ok(bundle)
    }

    /// Stage 2: one shared subword vocabulary over all languages.
    pub fn stage_bpe(&mut self, bundle: &DataBundle) -> Result<BpeModel> {
        let started = Instant::now();
        let path = self.out_dir.join("bpe.model");
        let model = if path.exists() {
            BpeModel::load(&path)?
        } else {
            let combined: Vec<String> = bundle.mono.iter().flatten().cloned().collect();
            let model = learn_bpe(&combined, self.config.bpe_merges)?;
            model.save(&path)?;
            model
        };
        let rec = self.record("bpe", started);
        rec.put("vocab_size", model.vocab_size() as f64);
        rec.put("merges", model.merge_count() as f64);
        self.flush_record()?;
        Ok(model)
    }

    fn mlm_batches(&self, bundle: &DataBundle, bpe: &BpeModel) -> (Vec<MaskedBatch>, usize) {
        let max_payload = self.config.max_positions - 2;
        let mut sentences: Vec<(u32, Vec<u32>)> = Vec::new();
        for (lang, corpus) in bundle.mono.iter().enumerate() {
            for text in corpus {
                let mut ids = bpe.encode(text);
                ids.truncate(max_payload);
                if !ids.is_empty() {
                    sentences.push((lang as u32, ids));
                }
            }
        }
        let policy = MaskingPolicy::default();
        let vocab = bpe.vocab_size() as u32;
        let first_regular = bpe.first_regular_id();
        let mut batches = Vec::new();
        for epoch in 0..self.config.pretrain_epochs {
            let seed = self.config.stage_seed(&format!("pretrain-epoch-{}", epoch));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut order: Vec<usize> = (0..sentences.len()).collect();
            order.shuffle(&mut rng);
            // Group similar lengths within shuffled windows so batch rows pad
            // to nearly uniform length.
            for window in order.chunks_mut(self.config.pretrain_batch * 8) {
                window.sort_by_key(|&i| sentences[i].1.len());
            }
            for chunk in order.chunks(self.config.pretrain_batch) {
                let examples: Vec<MaskedExample> = chunk
                    .iter()
                    .map(|&i| {
                        let (lang, ids) = &sentences[i];
                        apply_mlm_masking(ids, *lang, &policy, first_regular, vocab, &mut rng)
                    })
                    .collect::<Result<_>>()
                    .expect("mono sentences are non-empty");
                batches.push(MaskedBatch::from_examples(&examples).expect("non-empty batch"));
            }
        }
        let count = batches.len();
        (batches, count)
    }

    /// Stage 3: MLM pretraining over the mixed-language monolingual stream.
    pub fn stage_pretrain(&mut self, bundle: &DataBundle, bpe: &BpeModel) -> Result<EncoderParams<f32>> {
        let started = Instant::now();
        let path = self.out_dir.join("pretrained.ckpt");
        if path.exists() {
            let params = EncoderParams::<f32>::load(&path)?;
            let rec = self.record("pretrain", started);
            rec.put("resumed", 1.0);
            self.flush_record()?;
            return Ok(params);
        }
        let encoder_config = self.config.encoder_shape(bpe.vocab_size());
        let params = crate::encoder::init_params::<f32>(&encoder_config, self.config.stage_seed("init"))?;
        let (batches, total_steps) = self.mlm_batches(bundle, bpe);
        let mut schedule = TrainSchedule::new(self.config.pretrain_lr, total_steps);
        schedule.abort_checkpoint = Some(self.out_dir.join("pretrain-abort.ckpt"));
        let mut log = fs::File::create(self.out_dir.join("pretrain.log.jsonl"))?;
        let (params, logs) = train(
            params,
            batches,
            &schedule,
            self.config.dropout as f64,
            self.config.stage_seed("pretrain"),
            Some(&mut log),
        )?;
        params.save(&path)?;
        let first = mean_loss(&logs[..logs.len().min(50)]);
        let last = mean_loss(&logs[logs.len().saturating_sub(50)..]);
        let rec = self.record("pretrain", started);
        rec.put("steps", total_steps as f64);
        rec.put("initial_loss", first);
        rec.put("final_loss", last);
        self.flush_record()?;
        Ok(params)
    }

    fn tlm_batches(
        &self,
        pairs: &[SentencePair],
        bpe: &BpeModel,
        stage: &str,
    ) -> (Vec<MaskedBatch>, usize, usize) {
        let policy = MaskingPolicy::default();
        let vocab = bpe.vocab_size() as u32;
        let first_regular = bpe.first_regular_id();
        let mut skipped = 0usize;
        let mut batches = Vec::new();
        for epoch in 0..self.config.finetune_epochs {
            let seed = self.config.stage_seed(&format!("{}-epoch-{}", stage, epoch));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut order: Vec<usize> = (0..pairs.len()).collect();
            order.shuffle(&mut rng);
            for window in order.chunks_mut(self.config.finetune_batch * 8) {
                window.sort_by_key(|&i| pairs[i].src.len() + pairs[i].tgt.len());
            }
            let mut examples = Vec::with_capacity(self.config.finetune_batch);
            for &i in &order {
                let pair = &pairs[i];
                let src = bpe.encode(&pair.src);
                let tgt = bpe.encode(&pair.tgt);
                match build_tlm_example(
                    &src,
                    &tgt,
                    0,
                    1,
                    &policy,
                    first_regular,
                    vocab,
                    self.config.max_positions,
                    &mut rng,
                ) {
                    Ok(ex) => examples.push(ex),
                    Err(_) => {
                        skipped += 1;
                        continue;
                    }
                }
                if examples.len() == self.config.finetune_batch {
                    batches.push(MaskedBatch::from_examples(&examples).expect("non-empty"));
                    examples.clear();
                }
            }
            if !examples.is_empty() {
                batches.push(MaskedBatch::from_examples(&examples).expect("non-empty"));
            }
        }
        let steps = batches.len();
        (batches, steps, skipped)
    }

    /// Stage 4/ablation: TLM fine-tuning on a parallel set.
    pub fn stage_finetune(
        &mut self,
        pretrained: &EncoderParams<f32>,
        pairs: &[SentencePair],
        bpe: &BpeModel,
        stage: &'static str,
        checkpoint: &str,
    ) -> Result<EncoderParams<f32>> {
        let started = Instant::now();
        let path = self.out_dir.join(checkpoint);
        if path.exists() {
            let params = EncoderParams::<f32>::load(&path)?;
            let rec = self.record(stage, started);
            rec.put("resumed", 1.0);
            self.flush_record()?;
            return Ok(params);
        }
        let (batches, total_steps, skipped) = self.tlm_batches(pairs, bpe, stage);
        if batches.is_empty() {
            return Err(Error::data("no usable TLM pairs (all overflowed max_positions)"));
        }
        let mut schedule = TrainSchedule::new(self.config.finetune_lr, total_steps);
        schedule.abort_checkpoint = Some(self.out_dir.join(format!("{}-abort.ckpt", stage)));
        let mut log = fs::File::create(self.out_dir.join(format!("{}.log.jsonl", stage)))?;
        let (params, logs) = train(
            pretrained.clone(),
            batches,
            &schedule,
            self.config.dropout as f64,
            self.config.stage_seed(stage),
            Some(&mut log),
        )?;
        params.save(&path)?;
        let rec = self.record(stage, started);
        rec.put("steps", total_steps as f64);
        rec.put("skipped_pairs", skipped as f64);
        rec.put("final_loss", mean_loss(&logs[logs.len().saturating_sub(20)..]));
        self.flush_record()?;
        Ok(params)
    }

    /// Mining + PSM evaluation of one system over one pair's tasks.
    fn eval_pair(&mut self, system: &System<'_>, tasks: &PairTasks) -> Result<MetricsRecord> {
        let pair = tasks.pair;
        let mine = |task: &MiningTask| -> Result<(Vec<crate::miner::Candidate>, usize)> {
            let set_a = system.embed_pool(&task.pool_a, pair.0)?;
            let set_b = system.embed_pool(&task.pool_b, pair.1)?;
            let scored = margin_scores(&set_a, &set_b, &self.config.margin_spec())?;
            Ok((scored.candidates, scored.degenerate_count))
        };
        let (train_candidates, train_degenerate) = mine(&tasks.train)?;
        let (threshold, train_f1) = tune_threshold(&train_candidates, &tasks.train.gold)?;
        let (test_candidates, test_degenerate) = mine(&tasks.test)?;
        let report = evaluate_mining(&test_candidates, threshold, &tasks.test.gold);
        write_candidates(
            &self.out_dir.join("candidates").join(format!("{}-{}.test.tsv", system.name(), pair)),
            &test_candidates,
        )?;

        let psm_a = system.embed_pool(&tasks.psm.pool_a, pair.0)?;
        let psm_b = system.embed_pool(&tasks.psm.pool_b, pair.1)?;
        let psm = psm_accuracy(&psm_a, &psm_b, &tasks.psm.gold)?;

        let mut rec = MetricsRecord::new(
            &format!("eval/{}/{}", system.name(), pair),
            &self.config_hash,
            self.config.master_seed,
        );
        rec.put("mining_train_f1", train_f1);
        rec.put("mining_threshold", threshold);
        rec.put("mining_f1", report.f1);
        rec.put("mining_precision", report.precision);
        rec.put("mining_recall", report.recall);
        rec.put("mining_tp", report.tp as f64);
        rec.put("mining_fp", report.fp as f64);
        rec.put("mining_fn", report.fn_ as f64);
        rec.put("degenerate_scores", (train_degenerate + test_degenerate) as f64);
        rec.put("psm_acc_fwd", psm.acc_fwd);
        rec.put("psm_acc_bwd", psm.acc_bwd);
        rec.put("psm_acc_mean", psm.acc_mean);
        Ok(rec)
    }

    /// Evaluate a system on every language pair (mining train/test + PSM).
    pub fn stage_eval(&mut self, system: &System<'_>, bundle: &DataBundle) -> Result<()> {
        for tasks in &bundle.tasks {
            let started = Instant::now();
            let mut rec = self.eval_pair(system, tasks)?;
            rec.stamp(started.elapsed().as_secs_f64());
            self.records.push(rec);
            self.flush_record()?;
        }
        Ok(())
    }

    /// Stage 5: word-mapping baseline. Tables per language, every non-pivot
    /// language aligned into language 0's space by unsupervised
    /// frequency-rank self-learning.
    pub fn stage_wordmap(&mut self, bundle: &DataBundle) -> Result<(Vec<WordVecTable>, Vec<Option<OrthogonalMap>>)> {
        let started = Instant::now();
        let cfg = self.config.wordvec_config();
        let tables: Vec<WordVecTable> = bundle
            .mono
            .iter()
            .enumerate()
            .map(|(i, corpus)| {
                train_word_vectors(corpus, &cfg, self.config.stage_seed(&format!("wordvec-{}", i)))
            })
            .collect::<Result<_>>()?;
        let mut maps: Vec<Option<OrthogonalMap>> = vec![None; tables.len()];
        let mut dict_total = 0usize;
        for i in 1..tables.len() {
            let result = self_learning_align(
                &tables[i],
                &tables[0],
                &AlignInit::FrequencyRank { pairs: 100 },
                self.config.align_iters,
            )?;
            dict_total += result.dictionary.len();
            crate::wordmap::io::write_map(
                &self.out_dir.join(format!("wordmap-L{}-to-L1.orth", i + 1)),
                &result.map,
            )?;
            maps[i] = Some(result.map);
        }
        for (i, table) in tables.iter().enumerate() {
            crate::wordmap::io::write_word_vectors(
                &self.out_dir.join(format!("wordvec-L{}.vec", i + 1)),
                table,
            )?;
        }
        let rec = self.record("wordmap", started);
        rec.put("vocab_l1", tables[0].len() as f64);
        rec.put("induced_dictionary_total", dict_total as f64);
        self.flush_record()?;
        Ok((tables, maps))
    }

    pub fn write_reports(&mut self) -> Result<()> {
        write_canonical(&self.out_dir.join("metrics.json"), &self.records)?;
        // Paper-shaped grids: one row per system, one column per pair.
        let pairs: Vec<LangPair> =
            crate::harness::data::evaluated_pairs(self.config.n_languages);
        for (file, metric) in [("mining_f1.csv", "mining_f1"), ("psm_acc.csv", "psm_acc_mean")] {
            let mut csv = String::from("system");
            for p in &pairs {
                csv.push_str(&format!(",{}", p));
            }
            csv.push('\n');
            for system in ["wordmap", "vanilla", "finetuned"] {
                csv.push_str(system);
                for p in &pairs {
                    let stage = format!("eval/{}/{}", system, p);
                    let value = self
                        .records
                        .iter()
                        .find(|r| r.stage == stage)
                        .and_then(|r| r.metrics.get(metric))
                        .copied();
                    match value {
                        Some(v) => csv.push_str(&format!(",{:.6}", v)),
                        None => csv.push_str(",NA"),
                    }
                }
                csv.push('\n');
            }
            fs::write(self.out_dir.join(file), csv)?;
        }
        Ok(())
    }

    pub fn metric(&self, stage: &str, key: &str) -> Option<f64> {
        self.records.iter().find(|r| r.stage == stage).and_then(|r| r.metrics.get(key)).copied()
    }
}

fn mean_loss(logs: &[crate::encoder::StepLog]) -> f64 {
    if logs.is_empty() {
        return f64::NAN;
    }
    logs.iter().map(|l| l.loss).sum::<f64>() / logs.len() as f64
}

fn write_pairs(path: &Path, pairs: &[SentencePair]) -> Result<()> {
    let mut out = String::new();
    for p in pairs {
        out.push_str(&format!("{}\t{}\t{}\n", p.base_idx, p.src, p.tgt));
    }
    fs::write(path, out)?;
    Ok(())
}

fn write_psm(dir: &Path, stem: &str, psm: &crate::harness::data::PsmSet) -> Result<()> {
    task_io::write_pool(&dir.join(format!("{}.a", stem)), &psm.pool_a)?;
    task_io::write_pool(&dir.join(format!("{}.b", stem)), &psm.pool_b)?;
    let mut gold = String::new();
    for (i, &j) in psm.gold.iter().enumerate() {
        gold.push_str(&format!("{}\t{}\n", psm.pool_a[i].0, psm.pool_b[j].0));
    }
    fs::write(dir.join(format!("{}.gold", stem)), gold)?;
    Ok(())
}

/// The full experiment. Returns every metrics record; artifacts and reports
/// land in `out_dir`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<Vec<MetricsRecord>> {
    let mut pipe = Pipeline::new(config.clone(), out_dir)?;
    let bundle = pipe.stage_data()?;
    let bpe = pipe.stage_bpe(&bundle)?;
    let pretrained = pipe.stage_pretrain(&bundle, &bpe)?;

    let pooling = pipe.config.pooling_spec();
    let vanilla = System::Encoder { name: "vanilla", params: &pretrained, bpe: &bpe, pooling };
    pipe.stage_eval(&vanilla, &bundle)?;

    let finetuned =
        pipe.stage_finetune(&pretrained, &bundle.finetune, &bpe, "finetune", "finetuned.ckpt")?;
    let ft_system = System::Encoder { name: "finetuned", params: &finetuned, bpe: &bpe, pooling };
    pipe.stage_eval(&ft_system, &bundle)?;

    let (tables, maps) = pipe.stage_wordmap(&bundle)?;
    let wm_system = System::WordMap { name: "wordmap", tables: &tables, maps: &maps };
    pipe.stage_eval(&wm_system, &bundle)?;

    if pipe.config.noise_ablation {
        let alt = pipe.stage_finetune(
            &pretrained,
            &bundle.finetune_alt,
            &bpe,
            "finetune-alt",
            "finetuned-alt.ckpt",
        )?;
        let started = Instant::now();
        let alt_system = System::Encoder { name: "finetuned-alt", params: &alt, bpe: &bpe, pooling };
        let mut rec = pipe.eval_pair(&alt_system, &bundle.tasks[0])?;
        rec.stage = format!("eval/finetuned-alt/{}", bundle.tasks[0].pair);
        rec.put("alt_noise", bundle.alt_noise);
        rec.stamp(started.elapsed().as_secs_f64());
        pipe.records.push(rec);
        pipe.flush_record()?;
    }

    layer_sweep_stage(&mut pipe, &pretrained, &finetuned, &bpe, &bundle)?;

    // Summary: deltas and orderings the acceptance criteria read off.
    let started = Instant::now();
    let pairs = crate::harness::data::evaluated_pairs(pipe.config.n_languages);
    let mut summary = MetricsRecord::new("summary", &pipe.config.hash(), pipe.config.master_seed);
    let mut psm_gains = Vec::new();
    for p in &pairs {
        let vanilla_f1 = pipe.metric(&format!("eval/vanilla/{}", p), "mining_f1").unwrap_or(f64::NAN);
        let ft_f1 = pipe.metric(&format!("eval/finetuned/{}", p), "mining_f1").unwrap_or(f64::NAN);
        let wm_f1 = pipe.metric(&format!("eval/wordmap/{}", p), "mining_f1").unwrap_or(f64::NAN);
        let vanilla_psm = pipe.metric(&format!("eval/vanilla/{}", p), "psm_acc_mean").unwrap_or(f64::NAN);
        let ft_psm = pipe.metric(&format!("eval/finetuned/{}", p), "psm_acc_mean").unwrap_or(f64::NAN);
        summary.put(&format!("mining_f1_gain/{}", p), ft_f1 - vanilla_f1);
        summary.put(&format!("psm_gain/{}", p), ft_psm - vanilla_psm);
        summary.put(&format!("wordmap_below_vanilla/{}", p), if wm_f1 < vanilla_f1 { 1.0 } else { 0.0 });
        psm_gains.push(ft_psm - vanilla_psm);
    }
    summary.put("psm_gain_mean", psm_gains.iter().sum::<f64>() / psm_gains.len() as f64);
    if pipe.config.noise_ablation {
        let pair0 = pairs[0];
        let main_f1 = pipe.metric(&format!("eval/finetuned/{}", pair0), "mining_f1").unwrap_or(f64::NAN);
        let alt_f1 =
            pipe.metric(&format!("eval/finetuned-alt/{}", pair0), "mining_f1").unwrap_or(f64::NAN);
        summary.put("noise_ablation_f1_delta", (main_f1 - alt_f1).abs());
    }
    summary.stamp(started.elapsed().as_secs_f64());
    pipe.records.push(summary);
    pipe.flush_record()?;

    pipe.write_reports()?;
    Ok(pipe.records)
}
