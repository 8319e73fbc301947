//! Command-line front door: run pipeline stages against an output directory,
//! or use the file-level utilities (embed / mine / psm) on their own.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use babelmine::embedder::{embed, EmbeddingSet, PoolingMethod, PoolingSpec};
use babelmine::encoder::EncoderParams;
use babelmine::error::Result;
use babelmine::harness::{run_experiment, ExperimentConfig, Pipeline, System};
use babelmine::miner::{evaluate_mining, margin_scores, read_candidates, tune_threshold, write_candidates};
use babelmine::tokenizer::BpeModel;

#[derive(Parser)]
#[command(name = "babelmine", about = "Desk-scale multilingual embedding and bitext mining laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Experiment config file (flat `key = value` lines).
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override single config keys, e.g. --set pretrain_epochs=4.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Master seed shortcut (same as --set master_seed=N).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for artifacts and reports.
    #[arg(short, long, default_value = "runs/default")]
    out: PathBuf,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut text = match &self.config {
            Some(path) => std::fs::read_to_string(path)?,
            None => String::new(),
        };
        for s in &self.sets {
            text.push('\n');
            text.push_str(s);
        }
        if let Some(seed) = self.seed {
            text.push_str(&format!("\nmaster_seed = {}", seed));
        }
        ExperimentConfig::parse(&text)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Derive languages and write corpora, fine-tune pairs and tasks.
    GenLangs(ConfigArgs),
    /// Learn the shared BPE vocabulary over all languages.
    LearnBpe(ConfigArgs),
    /// MLM-pretrain the encoder on the monolingual corpora.
    Pretrain(ConfigArgs),
    /// TLM fine-tune the pretrained encoder on the L1-L2 parallel set.
    Finetune(ConfigArgs),
    /// Train and align the word-mapping baseline, then evaluate it.
    BaselineWordmap(ConfigArgs),
    /// Produce the per-layer PSM accuracy table for both checkpoints.
    Layers(ConfigArgs),
    /// Run the full experiment pipeline.
    RunAll {
        #[command(flatten)]
        config: ConfigArgs,
        /// Assert the hard acceptance conditions; exit non-zero on failure.
        #[arg(long)]
        check: bool,
    },
    /// Embed a corpus file (one sentence per line) with a checkpoint.
    Embed {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        bpe: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Language id fed to the language embedding table.
        #[arg(long, default_value_t = 0)]
        lang: u32,
        /// Layer to pool; defaults to the depth-derived layer.
        #[arg(long)]
        layer: Option<usize>,
        #[arg(long, default_value = "mean")]
        method: String,
        #[arg(long)]
        out_matrix: PathBuf,
        #[arg(long)]
        out_ids: PathBuf,
    },
    /// Margin-score two embedding files and tune/evaluate against gold.
    Mine {
        #[arg(long)]
        emb_a: PathBuf,
        #[arg(long)]
        ids_a: PathBuf,
        #[arg(long)]
        emb_b: PathBuf,
        #[arg(long)]
        ids_b: PathBuf,
        /// Gold file of "id_a<TAB>id_b" lines; enables threshold tuning.
        #[arg(long)]
        gold: Option<PathBuf>,
        /// Fixed threshold (skips tuning).
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long, default_value_t = 4)]
        k: usize,
        #[arg(long, default_value = "ratio")]
        variant: String,
        #[arg(long, default_value = "max-union")]
        strategy: String,
        #[arg(long)]
        out_candidates: PathBuf,
    },
    /// Parallel sentence matching accuracy between two embedding files.
    Psm {
        #[arg(long)]
        emb_a: PathBuf,
        #[arg(long)]
        ids_a: PathBuf,
        #[arg(long)]
        emb_b: PathBuf,
        #[arg(long)]
        ids_b: PathBuf,
        /// Gold file of "id_a<TAB>id_b" lines.
        #[arg(long)]
        gold: PathBuf,
    },
}

fn parse_variant(s: &str) -> Result<babelmine::miner::MarginVariant> {
    use babelmine::miner::MarginVariant::*;
    Ok(match s {
        "absolute" => Absolute,
        "distance" => Distance,
        "ratio" => Ratio,
        other => return Err(babelmine::Error::config(format!("unknown variant {:?}", other))),
    })
}

fn parse_strategy(s: &str) -> Result<babelmine::miner::ExtractionStrategy> {
    use babelmine::miner::ExtractionStrategy::*;
    Ok(match s {
        "forward" => Forward,
        "backward" => Backward,
        "intersection" => Intersection,
        "max-union" => MaxUnion,
        other => return Err(babelmine::Error::config(format!("unknown strategy {:?}", other))),
    })
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::GenLangs(args) => {
            let config = args.load()?;
            let mut pipe = Pipeline::new(config, &args.out)?;
            pipe.stage_data()?;
            println!("languages, corpora and tasks written to {}", args.out.display());
        }
        Command::LearnBpe(args) => {
            let config = args.load()?;
            let mut pipe = Pipeline::new(config, &args.out)?;
            let bundle = pipe.stage_data()?;
            let bpe = pipe.stage_bpe(&bundle)?;
            println!("BPE model: {} merges, vocab {}", bpe.merge_count(), bpe.vocab_size());
        }
        Command::Pretrain(args) => {
            let config = args.load()?;
            let mut pipe = Pipeline::new(config, &args.out)?;
            let bundle = pipe.stage_data()?;
            let bpe = pipe.stage_bpe(&bundle)?;
            pipe.stage_pretrain(&bundle, &bpe)?;
            println!("pretrained checkpoint at {}", args.out.join("pretrained.ckpt").display());
        }
        Command::Finetune(args) => {
            let config = args.load()?;
            let mut pipe = Pipeline::new(config, &args.out)?;
            let bundle = pipe.stage_data()?;
            let bpe = pipe.stage_bpe(&bundle)?;
            let pretrained = pipe.stage_pretrain(&bundle, &bpe)?;
            pipe.stage_finetune(&pretrained, &bundle.finetune, &bpe, "finetune", "finetuned.ckpt")?;
            println!("fine-tuned checkpoint at {}", args.out.join("finetuned.ckpt").display());
        }
        Command::BaselineWordmap(args) => {
            let config = args.load()?;
            let mut pipe = Pipeline::new(config, &args.out)?;
            let bundle = pipe.stage_data()?;
            let (tables, maps) = pipe.stage_wordmap(&bundle)?;
            let system = System::WordMap { name: "wordmap", tables: &tables, maps: &maps };
            pipe.stage_eval(&system, &bundle)?;
            pipe.write_reports()?;
            println!("wordmap baseline evaluated; reports in {}", args.out.display());
        }
        Command::Layers(args) => {
            let config = args.load()?;
            let mut pipe = Pipeline::new(config, &args.out)?;
            let bundle = pipe.stage_data()?;
            let bpe = pipe.stage_bpe(&bundle)?;
            let pretrained = pipe.stage_pretrain(&bundle, &bpe)?;
            let finetuned = pipe.stage_finetune(
                &pretrained,
                &bundle.finetune,
                &bpe,
                "finetune",
                "finetuned.ckpt",
            )?;
            babelmine::harness::sweep::layer_sweep_stage(&mut pipe, &pretrained, &finetuned, &bpe, &bundle)?;
            println!("layer table at {}", args.out.join("layers.csv").display());
        }
        Command::RunAll { config: args, check } => {
            let config = args.load()?;
            let started = Instant::now();
            let records = run_experiment(&config, &args.out)?;
            let elapsed = started.elapsed().as_secs_f64();
            println!("pipeline finished in {:.1}s; reports in {}", elapsed, args.out.display());
            if check {
                let ok = babelmine::harness::check::report(&records, elapsed, &mut std::io::stdout())?;
                return Ok(ok);
            }
        }
        Command::Embed { checkpoint, bpe, input, lang, layer, method, out_matrix, out_ids } => {
            let params = EncoderParams::<f32>::load(&checkpoint)?;
            let model = BpeModel::load(&bpe)?;
            let lines = std::fs::read_to_string(&input)?;
            let sentences: Vec<(String, String)> = lines
                .lines()
                .enumerate()
                .map(|(i, l)| (format!("s{:06}", i), l.to_string()))
                .collect();
            let mut spec = PoolingSpec::default_for_depth(params.config.n_layers);
            if let Some(l) = layer {
                spec.layer = l;
            }
            spec.method = match method.as_str() {
                "mean" => PoolingMethod::Mean,
                "max" => PoolingMethod::Max,
                other => return Err(babelmine::Error::config(format!("unknown pooling {:?}", other))),
            };
            let set = embed(&params, &sentences, lang, &spec, &model)?;
            set.save(&out_matrix, &out_ids)?;
            println!("embedded {} sentences at layer {}", set.len(), spec.layer);
        }
        Command::Mine {
            emb_a,
            ids_a,
            emb_b,
            ids_b,
            gold,
            threshold,
            k,
            variant,
            strategy,
            out_candidates,
        } => {
            let set_a = EmbeddingSet::load(&emb_a, &ids_a)?;
            let set_b = EmbeddingSet::load(&emb_b, &ids_b)?;
            let spec = babelmine::miner::MarginSpec {
                variant: parse_variant(&variant)?,
                k,
                strategy: parse_strategy(&strategy)?,
            };
            let scored = margin_scores(&set_a, &set_b, &spec)?;
            write_candidates(&out_candidates, &scored.candidates)?;
            println!("{} candidates written", scored.candidates.len());
            if let Some(gold_path) = gold {
                let gold = babelmine::synthlang::io::read_gold(&gold_path)?;
                let t = match threshold {
                    Some(t) => t,
                    None => {
                        let (t, f1) = tune_threshold(&scored.candidates, &gold)?;
                        println!("tuned threshold {} (train F1 {:.4})", t, f1);
                        t
                    }
                };
                let report = evaluate_mining(&scored.candidates, t, &gold);
                println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            } else if let Some(t) = threshold {
                let kept = read_candidates(&out_candidates)?
                    .into_iter()
                    .filter(|c| c.score >= t)
                    .count();
                println!("{} candidates above threshold {}", kept, t);
            }
        }
        Command::Psm { emb_a, ids_a, emb_b, ids_b, gold } => {
            let set_a = EmbeddingSet::load(&emb_a, &ids_a)?;
            let set_b = EmbeddingSet::load(&emb_b, &ids_b)?;
            let gold_pairs = babelmine::synthlang::io::read_gold(&gold)?;
            let index_b: std::collections::HashMap<&str, usize> =
                set_b.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
            let mut gold_map = vec![usize::MAX; set_a.len()];
            for (a, b) in &gold_pairs {
                let ia = set_a
                    .ids
                    .iter()
                    .position(|x| x == a)
                    .ok_or_else(|| babelmine::Error::data(format!("gold id {} not in set A", a)))?;
                let ib = *index_b
                    .get(b.as_str())
                    .ok_or_else(|| babelmine::Error::data(format!("gold id {} not in set B", b)))?;
                gold_map[ia] = ib;
            }
            if gold_map.iter().any(|&g| g == usize::MAX) {
                return Err(babelmine::Error::data("gold does not cover every row of set A"));
            }
            let report = babelmine::matcher::psm_accuracy(&set_a, &set_b, &gold_map)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::FAILURE
        }
    }
}
