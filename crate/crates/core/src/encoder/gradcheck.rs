//! Central finite-difference verification of the analytic gradients.
//!
//! Runs in f64 on a micro configuration. Relative error per coordinate is
//! |analytic - numeric| / max(|analytic|, |numeric|, 1e-6); the floor keeps
//! near-zero gradients from amplifying finite-difference rounding noise.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoder::backward::{loss_and_grads, loss_only};
use crate::encoder::config::EncoderConfig;
use crate::encoder::masking::{apply_mlm_masking, MaskedBatch, MaskingPolicy};
use crate::encoder::params::{init_params, EncoderParams};
use crate::error::{Error, Result};

const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub mean_rel_error: f64,
    pub checked: usize,
}

fn micro_batch(config: &EncoderConfig, seed: u64) -> Result<MaskedBatch> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first_regular = 5u32;
    let lens = [5usize, 7];
    let examples: Vec<_> = lens
        .iter()
        .map(|&len| {
            let sentence: Vec<u32> = (0..len)
                .map(|_| rng.random_range(first_regular..config.vocab_size as u32))
                .collect();
            apply_mlm_masking(
                &sentence,
                rng.random_range(0..config.n_languages as u32),
                &MaskingPolicy::default(),
                first_regular,
                config.vocab_size as u32,
                &mut rng,
            )
        })
        .collect::<Result<_>>()?;
    MaskedBatch::from_examples(&examples)
}

fn read_flat(params: &EncoderParams<f64>, flat: usize) -> f64 {
    let mut remaining = flat;
    for slice in params.tensor_slices() {
        if remaining < slice.len() {
            return slice[remaining];
        }
        remaining -= slice.len();
    }
    unreachable!("flat index within n_scalars")
}

fn write_flat(params: &mut EncoderParams<f64>, flat: usize, value: f64) {
    let mut remaining = flat;
    for slice in params.tensor_slices_mut() {
        if remaining < slice.len() {
            slice[remaining] = value;
            return;
        }
        remaining -= slice.len();
    }
    unreachable!("flat index within n_scalars")
}

/// Compare analytic gradients against central differences with step `h` on
/// `n_samples` randomly chosen parameter coordinates.
pub fn grad_check(config: &EncoderConfig, seed: u64, n_samples: usize, h: f64) -> Result<GradCheckReport> {
    if config.n_layers > 2 || config.d_model > 16 || config.vocab_size > 32 {
        return Err(Error::config(
            "grad_check wants a micro config: <= 2 layers, d_model <= 16, vocab <= 32",
        ));
    }
    config.validate()?;
    let mut params = init_params::<f64>(config, seed)?;
    let batch = micro_batch(config, seed ^ 0xB47C)?;
    let (_, grads) = loss_and_grads(&params, &batch, None)?;

    let total = params.n_scalars();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xF1D0);
    let mut max_rel = 0.0f64;
    let mut sum_rel = 0.0f64;
    for _ in 0..n_samples {
        let flat = rng.random_range(0..total);
        let analytic = read_flat(&grads, flat);
        let original = read_flat(&params, flat);
        write_flat(&mut params, flat, original + h);
        let plus = loss_only(&params, &batch)?;
        write_flat(&mut params, flat, original - h);
        let minus = loss_only(&params, &batch)?;
        write_flat(&mut params, flat, original);
        let numeric = (plus - minus) / (2.0 * h);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR);
        sum_rel += rel;
        if rel > max_rel {
            max_rel = rel;
        }
    }
    Ok(GradCheckReport {
        max_rel_error: max_rel,
        mean_rel_error: sum_rel / n_samples.max(1) as f64,
        checked: n_samples,
    })
}
