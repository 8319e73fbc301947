//! Layer sweep: mean PSM accuracy per layer for the vanilla and fine-tuned
//! checkpoints, averaged over all evaluated language pairs.

use std::fs;
use std::time::Instant;

use crate::embedder::embed_layers;
use crate::encoder::EncoderParams;
use crate::error::{Error, Result};
use crate::harness::data::DataBundle;
use crate::harness::stages::Pipeline;
use crate::matcher::psm_accuracy;
use crate::tokenizer::BpeModel;

/// Per-layer mean PSM accuracy for one checkpoint over all pairs.
fn sweep_system(
    pipe: &Pipeline,
    params: &EncoderParams<f32>,
    bpe: &BpeModel,
    bundle: &DataBundle,
) -> Result<Vec<f64>> {
    let n_layers = params.config.n_layers;
    let layers: Vec<usize> = (0..=n_layers).collect();
    let method = pipe.config.pooling_spec().method;
    let normalize = pipe.config.pooling_spec().normalize;
    let mut sums = vec![0.0f64; n_layers + 1];
    for tasks in &bundle.tasks {
        let sets_a = embed_layers(
            params,
            &tasks.psm.pool_a,
            tasks.pair.0 as u32,
            &layers,
            method,
            normalize,
            bpe,
        )?;
        let sets_b = embed_layers(
            params,
            &tasks.psm.pool_b,
            tasks.pair.1 as u32,
            &layers,
            method,
            normalize,
            bpe,
        )?;
        for (l, (a, b)) in sets_a.iter().zip(&sets_b).enumerate() {
            sums[l] += psm_accuracy(a, b, &tasks.psm.gold)?.acc_mean;
        }
    }
    Ok(sums.into_iter().map(|s| s / bundle.tasks.len() as f64).collect())
}

/// Run the sweep for both checkpoints, write layers.csv, and record the
/// depth-profile metrics (including the deepest-third vs shallowest-third
/// fine-tuning delta, logged as a soft check).
pub fn layer_sweep_stage(
    pipe: &mut Pipeline,
    vanilla: &EncoderParams<f32>,
    finetuned: &EncoderParams<f32>,
    bpe: &BpeModel,
    bundle: &DataBundle,
) -> Result<()> {
    if vanilla.config != finetuned.config {
        return Err(Error::data("layer sweep needs checkpoints with identical encoder configs"));
    }
    let started = Instant::now();
    let acc_vanilla = sweep_system(pipe, vanilla, bpe, bundle)?;
    let acc_finetuned = sweep_system(pipe, finetuned, bpe, bundle)?;

    let mut csv = String::from("layer,system,mean_psm_accuracy\n");
    for (l, acc) in acc_vanilla.iter().enumerate() {
        csv.push_str(&format!("{},vanilla,{:.6}\n", l, acc));
    }
    for (l, acc) in acc_finetuned.iter().enumerate() {
        csv.push_str(&format!("{},finetuned,{:.6}\n", l, acc));
    }
    fs::write(pipe.out_dir.join("layers.csv"), csv)?;

    let n = acc_vanilla.len();
    let third = (n / 3).max(1);
    let delta: Vec<f64> =
        acc_finetuned.iter().zip(&acc_vanilla).map(|(f, v)| f - v).collect();
    let shallow: f64 = delta[..third].iter().sum::<f64>() / third as f64;
    let deep: f64 = delta[n - third..].iter().sum::<f64>() / third as f64;

    let hash = pipe.config.hash();
    let seed = pipe.config.master_seed;
    let mut rec = crate::harness::metrics::MetricsRecord::new("layers", &hash, seed);
    for (l, (v, f)) in acc_vanilla.iter().zip(&acc_finetuned).enumerate() {
        rec.put(&format!("vanilla/layer{}", l), *v);
        rec.put(&format!("finetuned/layer{}", l), *f);
    }
    rec.put("layers_reported", n as f64);
    rec.put("delta_shallow_third", shallow);
    rec.put("delta_deep_third", deep);
    rec.put("deep_delta_dominates", if deep >= shallow { 1.0 } else { 0.0 });
    rec.stamp(started.elapsed().as_secs_f64());
    pipe.records.push(rec);
    pipe.flush_record()?;
    Ok(())
}
