//! Encoder parameters: embedding tables, per-layer weights, and the MLM
//! output bias. The MLM output projection is tied to the token embedding
//! table. A flat-tensor view in a fixed declared order backs the optimizer,
//! the checkpoint format and the gradient checker.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, NdFloat};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::encoder::config::EncoderConfig;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"XLMT";
pub const CHECKPOINT_VERSION: u32 = 1;

const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<F> {
    pub wq: Array2<F>,
    pub bq: Array1<F>,
    pub wk: Array2<F>,
    pub bk: Array1<F>,
    pub wv: Array2<F>,
    pub bv: Array1<F>,
    pub wo: Array2<F>,
    pub bo: Array1<F>,
    pub ln1_gain: Array1<F>,
    pub ln1_bias: Array1<F>,
    pub w1: Array2<F>,
    pub b1: Array1<F>,
    pub w2: Array2<F>,
    pub b2: Array1<F>,
    pub ln2_gain: Array1<F>,
    pub ln2_bias: Array1<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams<F> {
    pub config: EncoderConfig,
    pub token_embedding: Array2<F>,
    pub position_embedding: Array2<F>,
    pub language_embedding: Array2<F>,
    pub embed_ln_gain: Array1<F>,
    pub embed_ln_bias: Array1<F>,
    pub layers: Vec<LayerParams<F>>,
    pub output_bias: Array1<F>,
}

fn sample_matrix<F: NdFloat>(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<F> {
    let normal = Normal::new(0.0f64, INIT_STD).expect("valid normal");
    Array2::from_shape_fn((rows, cols), |_| F::from(normal.sample(rng)).unwrap())
}

/// Initialize parameters: weights from N(0, 0.02), layer norms at identity,
/// biases zero. Deterministic per seed; the draw sequence is the declared
/// tensor order, so two inits with the same seed are bitwise identical.
pub fn init_params<F: NdFloat>(config: &EncoderConfig, seed: u64) -> Result<EncoderParams<F>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = config.d_model;
    let zero1 = |n: usize| Array1::<F>::zeros(n);
    let one1 = |n: usize| Array1::<F>::from_elem(n, F::one());

    let token_embedding = sample_matrix(config.vocab_size, d, &mut rng);
    let position_embedding = sample_matrix(config.max_positions, d, &mut rng);
    let language_embedding = sample_matrix(config.n_languages, d, &mut rng);
    let layers = (0..config.n_layers)
        .map(|_| LayerParams {
            wq: sample_matrix(d, d, &mut rng),
            bq: zero1(d),
            wk: sample_matrix(d, d, &mut rng),
            bk: zero1(d),
            wv: sample_matrix(d, d, &mut rng),
            bv: zero1(d),
            wo: sample_matrix(d, d, &mut rng),
            bo: zero1(d),
            ln1_gain: one1(d),
            ln1_bias: zero1(d),
            w1: sample_matrix(d, config.d_ff, &mut rng),
            b1: zero1(config.d_ff),
            w2: sample_matrix(config.d_ff, d, &mut rng),
            b2: zero1(d),
            ln2_gain: one1(d),
            ln2_bias: zero1(d),
        })
        .collect();

    Ok(EncoderParams {
        config: config.clone(),
        token_embedding,
        position_embedding,
        language_embedding,
        embed_ln_gain: one1(d),
        embed_ln_bias: zero1(d),
        layers,
        output_bias: zero1(config.vocab_size),
    })
}

enum TensorRef<'a, F> {
    M(&'a Array2<F>),
    V(&'a Array1<F>),
}

impl<F: NdFloat> EncoderParams<F> {
    fn tensor_refs(&self) -> Vec<TensorRef<'_, F>> {
        let mut out = vec![
            TensorRef::M(&self.token_embedding),
            TensorRef::M(&self.position_embedding),
            TensorRef::M(&self.language_embedding),
            TensorRef::V(&self.embed_ln_gain),
            TensorRef::V(&self.embed_ln_bias),
        ];
        for l in &self.layers {
            out.push(TensorRef::M(&l.wq));
            out.push(TensorRef::V(&l.bq));
            out.push(TensorRef::M(&l.wk));
            out.push(TensorRef::V(&l.bk));
            out.push(TensorRef::M(&l.wv));
            out.push(TensorRef::V(&l.bv));
            out.push(TensorRef::M(&l.wo));
            out.push(TensorRef::V(&l.bo));
            out.push(TensorRef::V(&l.ln1_gain));
            out.push(TensorRef::V(&l.ln1_bias));
            out.push(TensorRef::M(&l.w1));
            out.push(TensorRef::V(&l.b1));
            out.push(TensorRef::M(&l.w2));
            out.push(TensorRef::V(&l.b2));
            out.push(TensorRef::V(&l.ln2_gain));
            out.push(TensorRef::V(&l.ln2_bias));
        }
        out.push(TensorRef::V(&self.output_bias));
        out
    }

    /// All parameter tensors as contiguous slices, in the declared order.
    pub fn tensor_slices(&self) -> Vec<&[F]> {
        self.tensor_refs()
            .into_iter()
            .map(|t| match t {
                TensorRef::M(m) => m.as_slice().expect("standard layout"),
                TensorRef::V(v) => v.as_slice().expect("standard layout"),
            })
            .collect()
    }

    pub fn tensor_slices_mut(&mut self) -> Vec<&mut [F]> {
        let mut out: Vec<&mut [F]> = vec![
            self.token_embedding.as_slice_mut().expect("standard layout"),
            self.position_embedding.as_slice_mut().expect("standard layout"),
            self.language_embedding.as_slice_mut().expect("standard layout"),
            self.embed_ln_gain.as_slice_mut().expect("standard layout"),
            self.embed_ln_bias.as_slice_mut().expect("standard layout"),
        ];
        for l in &mut self.layers {
            out.push(l.wq.as_slice_mut().expect("standard layout"));
            out.push(l.bq.as_slice_mut().expect("standard layout"));
            out.push(l.wk.as_slice_mut().expect("standard layout"));
            out.push(l.bk.as_slice_mut().expect("standard layout"));
            out.push(l.wv.as_slice_mut().expect("standard layout"));
            out.push(l.bv.as_slice_mut().expect("standard layout"));
            out.push(l.wo.as_slice_mut().expect("standard layout"));
            out.push(l.bo.as_slice_mut().expect("standard layout"));
            out.push(l.ln1_gain.as_slice_mut().expect("standard layout"));
            out.push(l.ln1_bias.as_slice_mut().expect("standard layout"));
            out.push(l.w1.as_slice_mut().expect("standard layout"));
            out.push(l.b1.as_slice_mut().expect("standard layout"));
            out.push(l.w2.as_slice_mut().expect("standard layout"));
            out.push(l.b2.as_slice_mut().expect("standard layout"));
            out.push(l.ln2_gain.as_slice_mut().expect("standard layout"));
            out.push(l.ln2_bias.as_slice_mut().expect("standard layout"));
        }
        out.push(self.output_bias.as_slice_mut().expect("standard layout"));
        out
    }

    pub fn n_scalars(&self) -> usize {
        self.tensor_slices().iter().map(|s| s.len()).sum()
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for s in z.tensor_slices_mut() {
            for x in s.iter_mut() {
                *x = F::zero();
            }
        }
        z
    }

    /// True if any parameter is NaN or infinite.
    pub fn any_non_finite(&self) -> bool {
        self.tensor_slices().iter().any(|s| s.iter().any(|x| !x.is_finite()))
    }

    /// Convert the precision of every tensor (used to run the gradient
    /// checker in f64 on f32-trained shapes and vice versa).
    pub fn cast<G: NdFloat>(&self) -> EncoderParams<G> {
        let conv2 = |m: &Array2<F>| m.map(|&x| G::from(x.to_f64().unwrap()).unwrap());
        let conv1 = |v: &Array1<F>| v.map(|&x| G::from(x.to_f64().unwrap()).unwrap());
        EncoderParams {
            config: self.config.clone(),
            token_embedding: conv2(&self.token_embedding),
            position_embedding: conv2(&self.position_embedding),
            language_embedding: conv2(&self.language_embedding),
            embed_ln_gain: conv1(&self.embed_ln_gain),
            embed_ln_bias: conv1(&self.embed_ln_bias),
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    wq: conv2(&l.wq),
                    bq: conv1(&l.bq),
                    wk: conv2(&l.wk),
                    bk: conv1(&l.bk),
                    wv: conv2(&l.wv),
                    bv: conv1(&l.bv),
                    wo: conv2(&l.wo),
                    bo: conv1(&l.bo),
                    ln1_gain: conv1(&l.ln1_gain),
                    ln1_bias: conv1(&l.ln1_bias),
                    w1: conv2(&l.w1),
                    b1: conv1(&l.b1),
                    w2: conv2(&l.w2),
                    b2: conv1(&l.b2),
                    ln2_gain: conv1(&l.ln2_gain),
                    ln2_bias: conv1(&l.ln2_bias),
                })
                .collect(),
            output_bias: conv1(&self.output_bias),
        }
    }

    /// Write a checkpoint: magic, version, config block, then every tensor in
    /// declared order as 32-bit little-endian floats.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let c = &self.config;
        for v in [
            c.n_layers,
            c.n_heads,
            c.d_model,
            c.d_ff,
            c.max_positions,
            c.n_languages,
            c.vocab_size,
        ] {
            buf.extend_from_slice(&(v as u32).to_le_bytes());
        }
        buf.extend_from_slice(&c.dropout.to_le_bytes());
        for slice in self.tensor_slices() {
            for x in slice {
                buf.extend_from_slice(&(x.to_f64().unwrap() as f32).to_le_bytes());
            }
        }
        let mut file = fs::File::create(path)?;
        file.write_all(&buf)?;
        Ok(())
    }
}

impl EncoderParams<f32> {
    pub fn load(path: &Path) -> Result<EncoderParams<f32>> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        if bytes.len() < 8 + 7 * 4 + 4 || &bytes[0..4] != CHECKPOINT_MAGIC {
            return Err(Error::format("not a XLMT checkpoint"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::format(format!("unsupported checkpoint version {}", version)));
        }
        let mut off = 8;
        let mut next_u32 = || {
            let v = u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
            off += 4;
            v
        };
        let config = EncoderConfig {
            n_layers: next_u32() as usize,
            n_heads: next_u32() as usize,
            d_model: next_u32() as usize,
            d_ff: next_u32() as usize,
            max_positions: next_u32() as usize,
            n_languages: next_u32() as usize,
            vocab_size: next_u32() as usize,
            dropout: f32::from_bits(next_u32()),
        };
        config.validate()?;
        let mut params: EncoderParams<f32> = init_params(&config, 0)?;
        let expected = params.n_scalars();
        let payload = &bytes[off..];
        if payload.len() != expected * 4 {
            return Err(Error::format(format!(
                "checkpoint payload holds {} floats, config implies {}",
                payload.len() / 4,
                expected
            )));
        }
        let mut cursor = 0;
        for slice in params.tensor_slices_mut() {
            for x in slice.iter_mut() {
                *x = f32::from_le_bytes(payload[cursor..cursor + 4].try_into().unwrap());
                cursor += 4;
            }
        }
        Ok(params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn micro() -> EncoderConfig {
        EncoderConfig::micro(32)
    }

    #[test]
    fn same_seed_inits_bitwise_identical() {
        let a: EncoderParams<f32> = init_params(&micro(), 7).unwrap();
        let b: EncoderParams<f32> = init_params(&micro(), 7).unwrap();
        assert_eq!(a, b);
        let c: EncoderParams<f32> = init_params(&micro(), 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn layer_norm_gains_start_at_one() {
        let p: EncoderParams<f32> = init_params(&micro(), 7).unwrap();
        assert!(p.embed_ln_gain.iter().all(|&g| g == 1.0));
        assert!(p.layers[0].ln1_gain.iter().all(|&g| g == 1.0));
        assert!(p.layers[0].bq.iter().all(|&b| b == 0.0));
        assert!(p.output_bias.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn weight_sample_std_is_near_configured() {
        let cfg = EncoderConfig::desk_default(500, 3);
        let p: EncoderParams<f64> = init_params(&cfg, 7).unwrap();
        // Sample statistics over the d_model=128 QKV weights of layer 0.
        let w = &p.layers[0].wq;
        let n = w.len() as f64;
        let mean: f64 = w.iter().sum::<f64>() / n;
        let var: f64 = w.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        assert!((0.015..=0.025).contains(&std), "sample std {}", std);
    }

    #[test]
    fn n_scalars_counts_everything() {
        let cfg = micro();
        let p: EncoderParams<f32> = init_params(&cfg, 1).unwrap();
        let d = cfg.d_model;
        let per_layer = 4 * d * d + 4 * d + 2 * d + 2 * (d * cfg.d_ff) + cfg.d_ff + d + 2 * d;
        let expected = cfg.vocab_size * d
            + cfg.max_positions * d
            + cfg.n_languages * d
            + 2 * d
            + cfg.n_layers * per_layer
            + cfg.vocab_size;
        assert_eq!(p.n_scalars(), expected);
    }

    #[test]
    fn checkpoint_round_trips_byte_identically() {
        let dir = tempfile::tempdir().unwrap();
        let p: EncoderParams<f32> = init_params(&micro(), 7).unwrap();
        let path1 = dir.path().join("a.ckpt");
        let path2 = dir.path().join("b.ckpt");
        p.save(&path1).unwrap();
        let q = EncoderParams::<f32>::load(&path1).unwrap();
        q.save(&path2).unwrap();
        assert_eq!(fs::read(&path1).unwrap(), fs::read(&path2).unwrap());
        assert_eq!(p, q);
    }

    #[test]
    fn truncated_checkpoint_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p: EncoderParams<f32> = init_params(&micro(), 7).unwrap();
        let path = dir.path().join("a.ckpt");
        p.save(&path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        assert!(EncoderParams::<f32>::load(&path).is_err());
    }
}
