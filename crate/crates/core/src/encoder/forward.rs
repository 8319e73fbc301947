//! Forward pass of the post-norm transformer encoder.
//!
//! Every intermediate layer output is exposed: index 0 is the embedding-layer
//! output (token + position + language embeddings, layer-normed), indices
//! 1..=L are the block outputs. Attention is computed per batch row and head
//! with a padding-aware softmax: padded keys receive exactly zero weight.

use ndarray::{s, Array1, Array2, Array4, ArrayView2, ArrayView3, Axis, NdFloat};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::encoder::masking::TokenBatch;
use crate::encoder::params::{EncoderParams, LayerParams};
use crate::error::{Error, Result};

pub(crate) const LN_EPS: f64 = 1e-5;

/// All layer outputs of one forward pass, stored as (B*T, d) matrices.
#[derive(Debug, Clone)]
pub struct LayerActivations<F> {
    pub(crate) data: Vec<Array2<F>>,
    pub batch_size: usize,
    pub seq_len: usize,
}

impl<F: NdFloat> LayerActivations<F> {
    /// Number of stored layers: n_layers + 1.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Layer `l` as a (B, T, d) view.
    pub fn layer(&self, l: usize) -> ArrayView3<'_, F> {
        let d = self.data[l].ncols();
        self.data[l]
            .view()
            .into_shape_with_order((self.batch_size, self.seq_len, d))
            .expect("standard layout")
    }

    /// The d-dimensional vector at (row, position) of layer `l`.
    pub fn token(&self, l: usize, row: usize, pos: usize) -> ArrayView2<'_, F> {
        self.data[l].slice(s![row * self.seq_len + pos..row * self.seq_len + pos + 1, ..])
    }
}

pub(crate) struct EmbedCache<F> {
    pub xhat: Array2<F>,
    pub inv_std: Array1<F>,
    pub drop: Option<Array2<F>>,
}

pub(crate) struct LayerCache<F> {
    pub q: Array2<F>,
    pub k: Array2<F>,
    pub v: Array2<F>,
    pub probs: Array4<F>,
    pub ctx: Array2<F>,
    pub drop_attn: Option<Array2<F>>,
    pub xhat1: Array2<F>,
    pub inv_std1: Array1<F>,
    pub z: Array2<F>,
    pub ff_pre: Array2<F>,
    pub ff_act: Array2<F>,
    pub drop_ff: Option<Array2<F>>,
    pub xhat2: Array2<F>,
    pub inv_std2: Array1<F>,
}

pub(crate) struct ForwardPass<F> {
    pub activations: LayerActivations<F>,
    pub embed: EmbedCache<F>,
    pub layers: Vec<LayerCache<F>>,
}

/// Dropout context for training-mode forwards.
pub struct Dropout<'r> {
    pub rate: f64,
    pub rng: &'r mut ChaCha8Rng,
}

#[inline]
pub(crate) fn cast<F: NdFloat>(x: f64) -> F {
    F::from(x).unwrap()
}

pub(crate) fn layer_norm_fwd<F: NdFloat>(
    x: &Array2<F>,
    gain: &Array1<F>,
    bias: &Array1<F>,
) -> (Array2<F>, Array2<F>, Array1<F>) {
    let d = cast::<F>(x.ncols() as f64);
    let eps = cast::<F>(LN_EPS);
    let mut xhat = x.clone();
    let mut inv_std = Array1::<F>::zeros(x.nrows());
    for (mut row, istd) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / d;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|&v| v * v).fold(F::zero(), |a, b| a + b) / d;
        let s = (var + eps).sqrt();
        *istd = F::one() / s;
        row.mapv_inplace(|v| v * *istd);
    }
    let y = &xhat * &gain.view().insert_axis(Axis(0)) + &bias.view().insert_axis(Axis(0));
    (y, xhat, inv_std)
}

pub(crate) fn gelu<F: NdFloat>(x: F) -> F {
    let c = cast::<F>(0.797_884_560_802_865_4); // sqrt(2/pi)
    let a = cast::<F>(0.044715);
    let u = c * (x + a * x * x * x);
    cast::<F>(0.5) * x * (F::one() + u.tanh())
}

pub(crate) fn gelu_grad<F: NdFloat>(x: F) -> F {
    let c = cast::<F>(0.797_884_560_802_865_4);
    let a = cast::<F>(0.044715);
    let half = cast::<F>(0.5);
    let u = c * (x + a * x * x * x);
    let t = u.tanh();
    half * (F::one() + t) + half * x * (F::one() - t * t) * c * (F::one() + cast::<F>(3.0) * a * x * x)
}

fn linear<F: NdFloat>(x: &Array2<F>, w: &Array2<F>, b: &Array1<F>) -> Array2<F> {
    x.dot(w) + &b.view().insert_axis(Axis(0))
}

fn dropout_mask<F: NdFloat>(shape: (usize, usize), ctx: &mut Dropout<'_>) -> Array2<F> {
    let keep = 1.0 - ctx.rate;
    let scale = cast::<F>(1.0 / keep);
    Array2::from_shape_fn(shape, |_| {
        if ctx.rng.random_bool(keep) {
            scale
        } else {
            F::zero()
        }
    })
}

fn validate_batch<F: NdFloat>(params: &EncoderParams<F>, batch: &TokenBatch) -> Result<()> {
    let cfg = &params.config;
    if batch.seq_len() > cfg.max_positions {
        return Err(Error::data(format!(
            "sequence length {} exceeds max_positions {}",
            batch.seq_len(),
            cfg.max_positions
        )));
    }
    for &tok in batch.tokens.iter() {
        if tok as usize >= cfg.vocab_size {
            return Err(Error::data(format!("token id {} out of vocabulary {}", tok, cfg.vocab_size)));
        }
    }
    for &p in batch.positions.iter() {
        if p as usize >= cfg.max_positions {
            return Err(Error::data(format!("position id {} out of range {}", p, cfg.max_positions)));
        }
    }
    for &l in batch.languages.iter() {
        if l as usize >= cfg.n_languages {
            return Err(Error::data(format!("language id {} out of range {}", l, cfg.n_languages)));
        }
    }
    Ok(())
}

/// Softmax over each row of `scores`, restricted to `valid` key positions.
/// Invalid keys get exactly zero probability.
fn masked_softmax_rows<F: NdFloat>(scores: &mut Array2<F>, valid: &[bool]) {
    for mut row in scores.rows_mut() {
        let mut max = F::neg_infinity();
        for (j, &ok) in valid.iter().enumerate() {
            if ok && row[j] > max {
                max = row[j];
            }
        }
        let mut sum = F::zero();
        for (j, &ok) in valid.iter().enumerate() {
            if ok {
                let e = (row[j] - max).exp();
                row[j] = e;
                sum += e;
            } else {
                row[j] = F::zero();
            }
        }
        if sum > F::zero() {
            let inv = F::one() / sum;
            row.mapv_inplace(|v| v * inv);
        }
    }
}

pub(crate) fn forward_pass<F: NdFloat>(
    params: &EncoderParams<F>,
    batch: &TokenBatch,
    mut dropout: Option<Dropout<'_>>,
) -> Result<ForwardPass<F>> {
    validate_batch(params, batch)?;
    let cfg = &params.config;
    let (b, t) = (batch.batch_size(), batch.seq_len());
    let n = b * t;
    let d = cfg.d_model;
    let heads = cfg.n_heads;
    let dk = cfg.head_dim();
    let scale = cast::<F>(1.0 / (dk as f64).sqrt());

    // Embedding sum + norm.
    let mut x0 = Array2::<F>::zeros((n, d));
    for row in 0..b {
        for pos in 0..t {
            let idx = row * t + pos;
            let tok = batch.tokens[[row, pos]] as usize;
            let p = batch.positions[[row, pos]] as usize;
            let lang = batch.languages[[row, pos]] as usize;
            let mut out = x0.row_mut(idx);
            let te = params.token_embedding.row(tok);
            let pe = params.position_embedding.row(p);
            let le = params.language_embedding.row(lang);
            for c in 0..d {
                out[c] = te[c] + pe[c] + le[c];
            }
        }
    }
    let (mut h, xhat0, inv_std0) = layer_norm_fwd(&x0, &params.embed_ln_gain, &params.embed_ln_bias);
    let drop0 = dropout.as_mut().map(|ctx| dropout_mask::<F>((n, d), ctx));
    if let Some(mask) = &drop0 {
        h = &h * mask;
    }

    let mut activations = vec![h];
    let mut layer_caches = Vec::with_capacity(cfg.n_layers);

    for layer in &params.layers {
        let x = activations.last().unwrap();
        let (y, cache) = block_forward(layer, x, batch, b, t, d, heads, dk, scale, &mut dropout);
        activations.push(y);
        layer_caches.push(cache);
    }

    Ok(ForwardPass {
        activations: LayerActivations { data: activations, batch_size: b, seq_len: t },
        embed: EmbedCache { xhat: xhat0, inv_std: inv_std0, drop: drop0 },
        layers: layer_caches,
    })
}

#[allow(clippy::too_many_arguments)]
fn block_forward<F: NdFloat>(
    layer: &LayerParams<F>,
    x: &Array2<F>,
    batch: &TokenBatch,
    b: usize,
    t: usize,
    d: usize,
    heads: usize,
    dk: usize,
    scale: F,
    dropout: &mut Option<Dropout<'_>>,
) -> (Array2<F>, LayerCache<F>) {
    let n = b * t;
    let q = linear(x, &layer.wq, &layer.bq);
    let k = linear(x, &layer.wk, &layer.bk);
    let v = linear(x, &layer.wv, &layer.bv);

    let mut probs = Array4::<F>::zeros((b, heads, t, t));
    let mut ctx = Array2::<F>::zeros((n, d));
    for row in 0..b {
        let valid: Vec<bool> = (0..t).map(|j| batch.mask[[row, j]]).collect();
        let q_r = q.slice(s![row * t..(row + 1) * t, ..]);
        let k_r = k.slice(s![row * t..(row + 1) * t, ..]);
        let v_r = v.slice(s![row * t..(row + 1) * t, ..]);
        for h in 0..heads {
            let cols = s![.., h * dk..(h + 1) * dk];
            let qh = q_r.slice(&cols);
            let kh = k_r.slice(&cols);
            let vh = v_r.slice(&cols);
            let mut scores = qh.dot(&kh.t());
            scores.mapv_inplace(|s| s * scale);
            masked_softmax_rows(&mut scores, &valid);
            let ctx_h = scores.dot(&vh);
            ctx.slice_mut(s![row * t..(row + 1) * t, h * dk..(h + 1) * dk]).assign(&ctx_h);
            probs.slice_mut(s![row, h, .., ..]).assign(&scores);
        }
    }

    let mut attn_out = linear(&ctx, &layer.wo, &layer.bo);
    let drop_attn = dropout.as_mut().map(|ctx| dropout_mask::<F>((n, d), ctx));
    if let Some(mask) = &drop_attn {
        attn_out = &attn_out * mask;
    }
    let resid1 = x + &attn_out;
    let (z, xhat1, inv_std1) = layer_norm_fwd(&resid1, &layer.ln1_gain, &layer.ln1_bias);

    let ff_pre = linear(&z, &layer.w1, &layer.b1);
    let ff_act = ff_pre.map(|&u| gelu(u));
    let mut ff_out = linear(&ff_act, &layer.w2, &layer.b2);
    let drop_ff = dropout.as_mut().map(|ctx| dropout_mask::<F>((n, d), ctx));
    if let Some(mask) = &drop_ff {
        ff_out = &ff_out * mask;
    }
    let resid2 = &z + &ff_out;
    let (y, xhat2, inv_std2) = layer_norm_fwd(&resid2, &layer.ln2_gain, &layer.ln2_bias);

    let cache = LayerCache {
        q,
        k,
        v,
        probs,
        ctx,
        drop_attn,
        xhat1,
        inv_std1,
        z,
        ff_pre,
        ff_act,
        drop_ff,
        xhat2,
        inv_std2,
    };
    (y, cache)
}

/// Inference-mode forward: all L+1 layer outputs, no dropout.
pub fn forward<F: NdFloat>(params: &EncoderParams<F>, batch: &TokenBatch) -> Result<LayerActivations<F>> {
    Ok(forward_pass(params, batch, None)?.activations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::config::EncoderConfig;
    use crate::encoder::masking::{apply_mlm_masking, MaskedBatch, MaskingPolicy};
    use crate::encoder::params::init_params;
    use rand::SeedableRng;

    fn micro_batch(cfg: &EncoderConfig, lens: &[usize], seed: u64) -> MaskedBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let examples: Vec<_> = lens
            .iter()
            .map(|&len| {
                let sentence: Vec<u32> = (0..len)
                    .map(|_| rng.random_range(5..cfg.vocab_size as u32))
                    .collect();
                apply_mlm_masking(
                    &sentence,
                    rng.random_range(0..cfg.n_languages as u32),
                    &MaskingPolicy::default(),
                    5,
                    cfg.vocab_size as u32,
                    &mut rng,
                )
                .unwrap()
            })
            .collect();
        MaskedBatch::from_examples(&examples).unwrap()
    }

    #[test]
    fn forward_returns_all_layer_outputs_with_right_shapes() {
        let cfg = EncoderConfig { n_layers: 4, ..EncoderConfig::micro(32) };
        let params = init_params::<f64>(&cfg, 3).unwrap();
        let batch = micro_batch(&cfg, &[3, 3], 5);
        let acts = forward(&params, &batch.batch).unwrap();
        assert_eq!(acts.len(), cfg.n_layers + 1);
        for l in 0..acts.len() {
            assert_eq!(acts.layer(l).shape(), &[2, 5, cfg.d_model]);
        }
    }

    #[test]
    fn attention_rows_sum_to_one_and_pads_get_zero() {
        let cfg = EncoderConfig::micro(32);
        let params = init_params::<f64>(&cfg, 3).unwrap();
        let batch = micro_batch(&cfg, &[7, 3], 5);
        let pass = forward_pass(&params, &batch.batch, None).unwrap();
        let t = batch.batch.seq_len();
        for (layer, cache) in pass.layers.iter().enumerate() {
            for row in 0..2 {
                for h in 0..cfg.n_heads {
                    for i in 0..t {
                        let mut sum = 0.0;
                        for j in 0..t {
                            let p = cache.probs[[row, h, i, j]];
                            if !batch.batch.mask[[row, j]] {
                                assert_eq!(p, 0.0, "pad key got weight at layer {}", layer);
                            }
                            sum += p;
                        }
                        assert!((sum - 1.0).abs() < 1e-5, "row sum {} at layer {}", sum, layer);
                    }
                }
            }
        }
    }

    #[test]
    fn overlong_sequence_is_a_data_error() {
        let cfg = EncoderConfig::micro(32);
        let params = init_params::<f64>(&cfg, 3).unwrap();
        let batch = micro_batch(&cfg, &[cfg.max_positions + 1], 5);
        assert!(matches!(forward(&params, &batch.batch), Err(Error::Data(_))));
    }

    #[test]
    fn gelu_grad_matches_finite_difference() {
        for &x in &[-3.0f64, -0.7, 0.0, 0.4, 2.5] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((gelu_grad(x) - fd).abs() < 1e-8, "x={}", x);
        }
    }

    #[test]
    fn layer_norm_output_is_normalized() {
        let x = Array2::from_shape_fn((4, 8), |(i, j)| (i * 8 + j) as f64 * 0.37 - 1.0);
        let gain = Array1::from_elem(8, 1.0);
        let bias = Array1::zeros(8);
        let (y, _, _) = layer_norm_fwd(&x, &gain, &bias);
        for row in y.rows() {
            let mean: f64 = row.sum() / 8.0;
            let var: f64 = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / 8.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }
}
