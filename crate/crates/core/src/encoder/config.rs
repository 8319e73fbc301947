use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Transformer encoder hyperparameters.
///
/// The desk default is 4 layers, 4 heads, d_model 128, d_ff 512; the
/// full-scale reference point this miniaturizes is 16 layers, 16 heads,
/// hidden size 1280.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub max_positions: usize,
    pub n_languages: usize,
    pub vocab_size: usize,
    pub dropout: f32,
}

impl EncoderConfig {
    pub fn desk_default(vocab_size: usize, n_languages: usize) -> Self {
        EncoderConfig {
            n_layers: 4,
            n_heads: 4,
            d_model: 128,
            d_ff: 512,
            max_positions: 128,
            n_languages,
            vocab_size,
            dropout: 0.1,
        }
    }

    /// Tiny double-precision configuration for gradient checking.
    pub fn micro(vocab_size: usize) -> Self {
        EncoderConfig {
            n_layers: 2,
            n_heads: 2,
            d_model: 16,
            d_ff: 32,
            max_positions: 16,
            n_languages: 2,
            vocab_size: vocab_size.min(32),
            dropout: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_layers == 0
            || self.n_heads == 0
            || self.d_model == 0
            || self.d_ff == 0
            || self.max_positions == 0
            || self.n_languages == 0
            || self.vocab_size == 0
        {
            return Err(Error::config("encoder dimensions must all be positive"));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::config(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!("dropout must be in [0,1), got {}", self.dropout)));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}
