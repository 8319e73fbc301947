// Temporary diagnostic playground. Not part of the deliverable.

use babelmine::embedder::{embed_layers, PoolingMethod};
use babelmine::encoder::{
    build_tlm_example, init_params, train, EncoderParams, MaskedBatch, MaskingPolicy,
    TrainSchedule,
};
use babelmine::harness::{ExperimentConfig, Pipeline};
use babelmine::matcher::psm_accuracy;
use babelmine::tokenizer::BpeModel;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;

fn tlm_batches(
    config: &ExperimentConfig,
    pairs: &[babelmine::synthlang::SentencePair],
    bpe: &BpeModel,
    epochs: usize,
    select_prob: f64,
) -> Vec<MaskedBatch> {
    let policy = MaskingPolicy { select_prob, ..Default::default() };
    let mut batches = Vec::new();
    for epoch in 0..epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(5000 + epoch as u64);
        let mut items: Vec<(usize, bool)> = (0..pairs.len()).map(|i| (i, false)).collect();
        items.extend((0..pairs.len()).map(|i| (i, true)));
        items.shuffle(&mut rng);
        let mut examples = Vec::new();
        for &(i, flip) in &items {
            let p = &pairs[i];
            let (src, tgt, sl, tl) = if flip {
                (bpe.encode(&p.tgt), bpe.encode(&p.src), 1, 0)
            } else {
                (bpe.encode(&p.src), bpe.encode(&p.tgt), 0, 1)
            };
            if let Ok(ex) = build_tlm_example(
                &src,
                &tgt,
                sl,
                tl,
                &policy,
                bpe.first_regular_id(),
                bpe.vocab_size() as u32,
                config.max_positions,
                &mut rng,
            ) {
                examples.push(ex);
            }
            if examples.len() == config.finetune_batch {
                batches.push(MaskedBatch::from_examples(&examples).unwrap());
                examples.clear();
            }
        }
    }
    batches
}

fn psm_by_layer(
    tag: &str,
    params: &EncoderParams<f32>,
    bpe: &BpeModel,
    bundle: &babelmine::harness::DataBundle,
) {
    let layers: Vec<usize> = (0..=params.config.n_layers).collect();
    for tasks in bundle.tasks.iter().take(1) {
        let sa = embed_layers(params, &tasks.psm.pool_a, tasks.pair.0 as u32, &layers, PoolingMethod::Mean, true, bpe).unwrap();
        let sb = embed_layers(params, &tasks.psm.pool_b, tasks.pair.1 as u32, &layers, PoolingMethod::Mean, true, bpe).unwrap();
        let accs: Vec<String> = layers
            .iter()
            .map(|&l| format!("{:.3}", psm_accuracy(&sa[l], &sb[l], &tasks.psm.gold).unwrap().acc_mean))
            .collect();
        println!("{} psm[{}] by layer: {}", tag, tasks.pair, accs.join(" "));
    }
}

fn main() {
    let d_model: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(32);
    let pretrain_epochs: usize =
        std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(8);
    let config = ExperimentConfig {
        mono_sentences: 10_000,
        mining_gold: 200,
        mining_fill: 2_000,
        psm_pairs: 200,
        finetune_pairs: 1_000,
        bpe_merges: 400,
        pretrain_epochs,
        d_model,
        d_ff: d_model * 4,
        ..Default::default()
    };
    let out = format!("/tmp/bm-cap-d{}-e{}", d_model, pretrain_epochs);
    let out = Path::new(&out);
    std::fs::create_dir_all(out).unwrap();
    let mut pipe = Pipeline::new(config.clone(), out).unwrap();
    let bundle = pipe.stage_data().unwrap();
    let bpe = pipe.stage_bpe(&bundle).unwrap();
    let t0 = std::time::Instant::now();
    let pretrained = pipe.stage_pretrain(&bundle, &bpe).unwrap();
    println!("pretrain {:.0}s", t0.elapsed().as_secs_f64());
    psm_by_layer("vanilla", &pretrained, &bpe, &bundle);

    for (tag, start, epochs, select, lr) in [
        ("ft 1ep 15%", Some(&pretrained), 1usize, 0.15f64, 1e-4f64),
        ("ft 3ep 15%", Some(&pretrained), 3, 0.15, 3e-4),
        ("ft 3ep 40%", Some(&pretrained), 3, 0.4, 3e-4),
    ] {
        let batches = tlm_batches(&config, &bundle.finetune, &bpe, epochs, select);
        let steps = batches.len();
        let schedule = TrainSchedule::new(lr, steps);
        let init = match start {
            Some(p) => (*p).clone(),
            None => init_params::<f32>(&pretrained.config, 1).unwrap(),
        };
        let t0 = std::time::Instant::now();
        let (ft, logs) = train(init, batches, &schedule, 0.1, 99, None).unwrap();
        let tail = logs[logs.len().saturating_sub(30)..].iter().map(|l| l.loss).sum::<f64>()
            / logs.len().min(30) as f64;
        println!(
            "\n{}: epochs={} select={} lr={} steps={} tail loss {:.3} ({:.0}s)",
            tag, epochs, select, lr, steps, tail, t0.elapsed().as_secs_f64()
        );
        psm_by_layer(&format!("  {}", tag), &ft, &bpe, &bundle);
    }
}
