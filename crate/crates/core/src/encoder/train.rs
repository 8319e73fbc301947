//! Single-stream training loop shared by MLM pretraining and TLM
//! fine-tuning. Batch order is the caller's; everything here is
//! deterministic given (params, batches, schedule, seed).

use std::io::Write;
use std::path::PathBuf;

use ndarray::NdFloat;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoder::adam::{adam_step, AdamHyper, AdamState};
use crate::encoder::backward::loss_and_grads;
use crate::encoder::forward::Dropout;
use crate::encoder::masking::MaskedBatch;
use crate::encoder::params::EncoderParams;
use crate::error::{Error, Result};
use crate::hashutil::splitmix64;

#[derive(Debug, Clone)]
pub struct TrainSchedule {
    pub hyper: AdamHyper,
    /// Fraction of total steps spent in linear warmup (default 0.1).
    pub warmup_frac: f64,
    pub total_steps: usize,
    pub log_every: usize,
    /// Where to save parameters if the loss diverges.
    pub abort_checkpoint: Option<PathBuf>,
}

impl TrainSchedule {
    pub fn new(lr: f64, total_steps: usize) -> Self {
        TrainSchedule {
            hyper: AdamHyper { lr, ..Default::default() },
            warmup_frac: 0.1,
            total_steps,
            log_every: 50,
            abort_checkpoint: None,
        }
    }

    /// Linear warmup to the base rate, then constant.
    pub fn lr_at(&self, step: usize) -> f64 {
        let warmup = ((self.total_steps as f64 * self.warmup_frac).ceil() as usize).max(1);
        if step <= warmup {
            self.hyper.lr * step as f64 / warmup as f64
        } else {
            self.hyper.lr
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
}

/// Run the optimizer over a batch stream. Returns updated parameters and the
/// per-step loss log; optionally mirrors the log as JSON lines.
pub fn train<F: NdFloat>(
    mut params: EncoderParams<F>,
    batches: impl IntoIterator<Item = MaskedBatch>,
    schedule: &TrainSchedule,
    dropout_rate: f64,
    seed: u64,
    mut log_sink: Option<&mut dyn Write>,
) -> Result<(EncoderParams<F>, Vec<StepLog>)> {
    let mut state = AdamState::new(&params);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0x7261_696e)); // "rain"
    let mut logs = Vec::new();
    let mut step = 0usize;
    for batch in batches {
        step += 1;
        let dropout = if dropout_rate > 0.0 {
            Some(Dropout { rate: dropout_rate, rng: &mut dropout_rng })
        } else {
            None
        };
        let (loss, grads) = match loss_and_grads(&params, &batch, dropout) {
            Ok(ok) => ok,
            Err(Error::Numeric(msg)) => {
                if let Some(path) = &schedule.abort_checkpoint {
                    params.save(path)?;
                }
                return Err(Error::numeric(format!("diverged at step {}: {}", step, msg)));
            }
            Err(other) => return Err(other),
        };
        let loss64 = loss.to_f64().unwrap();
        if !loss64.is_finite() {
            if let Some(path) = &schedule.abort_checkpoint {
                params.save(path)?;
            }
            return Err(Error::numeric(format!("diverged at step {}: loss {}", step, loss64)));
        }
        let lr = schedule.lr_at(step);
        let hyper = AdamHyper { lr, ..schedule.hyper };
        adam_step(&mut params, &grads, &mut state, &hyper);
        let record = StepLog { step, loss: loss64, lr };
        if let Some(sink) = log_sink.as_deref_mut() {
            if step % schedule.log_every == 0 || step == 1 || step == schedule.total_steps {
                let line = serde_json::to_string(&record).expect("step log serializes");
                writeln!(sink, "{}", line)?;
            }
        }
        logs.push(record);
    }
    Ok((params, logs))
}
