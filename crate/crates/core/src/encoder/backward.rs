//! Masked-LM loss and full analytic gradients.
//!
//! The loss is mean cross-entropy over the batch's prediction positions; the
//! output projection is the transposed token embedding table, so its gradient
//! flows both into the hidden states and back into the embeddings.

use ndarray::{s, Array1, Array2, Axis, NdFloat};

use crate::encoder::forward::{cast, forward_pass, gelu_grad, Dropout, ForwardPass};
use crate::encoder::masking::MaskedBatch;
use crate::encoder::params::EncoderParams;
use crate::error::{Error, Result};

fn layer_norm_bwd<F: NdFloat>(
    dy: &Array2<F>,
    xhat: &Array2<F>,
    inv_std: &Array1<F>,
    gain: &Array1<F>,
) -> (Array2<F>, Array1<F>, Array1<F>) {
    let d = cast::<F>(dy.ncols() as f64);
    let dgain = (dy * xhat).sum_axis(Axis(0));
    let dbias = dy.sum_axis(Axis(0));
    let dxhat = dy * &gain.view().insert_axis(Axis(0));
    let mut dx = Array2::<F>::zeros(dy.raw_dim());
    for ((mut dx_row, dxhat_row), (xhat_row, &istd)) in dx
        .rows_mut()
        .into_iter()
        .zip(dxhat.rows())
        .zip(xhat.rows().into_iter().zip(inv_std.iter()))
    {
        let m1 = dxhat_row.sum() / d;
        let m2 = dxhat_row
            .iter()
            .zip(xhat_row.iter())
            .map(|(&a, &b)| a * b)
            .fold(F::zero(), |acc, v| acc + v)
            / d;
        for j in 0..dx_row.len() {
            dx_row[j] = istd * (dxhat_row[j] - m1 - xhat_row[j] * m2);
        }
    }
    (dx, dgain, dbias)
}

struct HeadOutput<F> {
    loss: F,
    /// d(loss)/d(logits), already divided by the prediction count.
    dlogits: Array2<F>,
    /// Gathered final-layer hidden states at prediction positions.
    hidden: Array2<F>,
}

/// Cross-entropy over prediction positions with a log-sum-exp stable softmax.
fn mlm_head<F: NdFloat>(
    params: &EncoderParams<F>,
    pass: &ForwardPass<F>,
    predictions: &[(usize, usize, u32)],
    want_grads: bool,
) -> Result<HeadOutput<F>> {
    if predictions.is_empty() {
        return Err(Error::data("batch has no prediction positions"));
    }
    let t = pass.activations.seq_len;
    let d = params.config.d_model;
    let np = predictions.len();
    let last = pass.activations.data.last().unwrap();
    let mut hidden = Array2::<F>::zeros((np, d));
    for (i, &(row, pos, _)) in predictions.iter().enumerate() {
        hidden.row_mut(i).assign(&last.row(row * t + pos));
    }
    let mut logits = hidden.dot(&params.token_embedding.t());
    logits += &params.output_bias.view().insert_axis(Axis(0));

    let inv_np = cast::<F>(1.0 / np as f64);
    let mut loss = F::zero();
    let mut dlogits = if want_grads {
        Array2::<F>::zeros(logits.raw_dim())
    } else {
        Array2::<F>::zeros((0, 0))
    };
    for (i, &(_, _, label)) in predictions.iter().enumerate() {
        let row = logits.row(i);
        let max = row.iter().cloned().fold(F::neg_infinity(), F::max);
        let sum_exp = row.iter().map(|&l| (l - max).exp()).fold(F::zero(), |a, b| a + b);
        let lse = max + sum_exp.ln();
        loss += lse - row[label as usize];
        if want_grads {
            let mut drow = dlogits.row_mut(i);
            for j in 0..drow.len() {
                drow[j] = (row[j] - lse).exp() * inv_np;
            }
            drow[label as usize] -= inv_np;
        }
    }
    loss *= inv_np;
    if !loss.is_finite() {
        return Err(Error::numeric(format!(
            "non-finite MLM loss over {} predictions (forward blew up)",
            np
        )));
    }
    Ok(HeadOutput { loss, dlogits, hidden })
}

/// Forward + loss without gradients (used by the finite-difference oracle).
pub fn loss_only<F: NdFloat>(params: &EncoderParams<F>, batch: &MaskedBatch) -> Result<F> {
    let pass = forward_pass(params, &batch.batch, None)?;
    Ok(mlm_head(params, &pass, &batch.predictions, false)?.loss)
}

/// Mean cross-entropy over prediction positions plus gradients for every
/// parameter tensor. `dropout` enables training-mode noise; gradients are
/// exact for the realized dropout masks.
pub fn loss_and_grads<F: NdFloat>(
    params: &EncoderParams<F>,
    batch: &MaskedBatch,
    dropout: Option<Dropout<'_>>,
) -> Result<(F, EncoderParams<F>)> {
    let pass = forward_pass(params, &batch.batch, dropout)?;
    let head = mlm_head(params, &pass, &batch.predictions, true)?;

    let cfg = &params.config;
    let (b, t) = (pass.activations.batch_size, pass.activations.seq_len);
    let n = b * t;
    let d = cfg.d_model;
    let heads = cfg.n_heads;
    let dk = cfg.head_dim();
    let scale = cast::<F>(1.0 / (dk as f64).sqrt());

    let mut grads = params.zeros_like();

    // Head: logits = H E^T + b.
    grads.output_bias = head.dlogits.sum_axis(Axis(0));
    grads.token_embedding = head.dlogits.t().dot(&head.hidden);
    let dhidden = head.dlogits.dot(&params.token_embedding);

    // Scatter hidden-state gradients back to the final layer output.
    let mut dy = Array2::<F>::zeros((n, d));
    for (i, &(row, pos, _)) in batch.predictions.iter().enumerate() {
        let mut target = dy.row_mut(row * t + pos);
        let src = dhidden.row(i);
        for c in 0..d {
            target[c] += src[c];
        }
    }

    // Blocks, deepest first.
    for l in (0..cfg.n_layers).rev() {
        let x = &pass.activations.data[l];
        let cache = &pass.layers[l];
        let layer = &params.layers[l];
        let g = &mut grads.layers[l];

        // LN2 closes the block: y = ln2(z + ff_out).
        let (d_resid2, dg2, db2) = layer_norm_bwd(&dy, &cache.xhat2, &cache.inv_std2, &layer.ln2_gain);
        g.ln2_gain = dg2;
        g.ln2_bias = db2;

        let mut d_ff_out = d_resid2.clone();
        if let Some(mask) = &cache.drop_ff {
            d_ff_out = &d_ff_out * mask;
        }
        g.w2 = cache.ff_act.t().dot(&d_ff_out);
        g.b2 = d_ff_out.sum_axis(Axis(0));
        let d_ff_act = d_ff_out.dot(&layer.w2.t());
        let mut d_ff_pre = d_ff_act;
        d_ff_pre.zip_mut_with(&cache.ff_pre, |dv, &u| *dv = *dv * gelu_grad(u));
        g.w1 = cache.z.t().dot(&d_ff_pre);
        g.b1 = d_ff_pre.sum_axis(Axis(0));
        let dz = d_ff_pre.dot(&layer.w1.t()) + &d_resid2;

        let (d_resid1, dg1, db1) = layer_norm_bwd(&dz, &cache.xhat1, &cache.inv_std1, &layer.ln1_gain);
        g.ln1_gain = dg1;
        g.ln1_bias = db1;

        let mut d_attn_out = d_resid1.clone();
        if let Some(mask) = &cache.drop_attn {
            d_attn_out = &d_attn_out * mask;
        }
        g.wo = cache.ctx.t().dot(&d_attn_out);
        g.bo = d_attn_out.sum_axis(Axis(0));
        let d_ctx = d_attn_out.dot(&layer.wo.t());

        let mut dq = Array2::<F>::zeros((n, d));
        let mut dkm = Array2::<F>::zeros((n, d));
        let mut dv = Array2::<F>::zeros((n, d));
        for row in 0..b {
            let rows = s![row * t..(row + 1) * t, ..];
            let q_r = cache.q.slice(&rows);
            let k_r = cache.k.slice(&rows);
            let v_r = cache.v.slice(&rows);
            let d_ctx_r = d_ctx.slice(&rows);
            for h in 0..heads {
                let cols = s![.., h * dk..(h + 1) * dk];
                let qh = q_r.slice(&cols);
                let kh = k_r.slice(&cols);
                let vh = v_r.slice(&cols);
                let d_ctx_h = d_ctx_r.slice(&cols);
                let probs = cache.probs.slice(s![row, h, .., ..]);

                let dp = d_ctx_h.dot(&vh.t());
                let dvh = probs.t().dot(&d_ctx_h);
                // Softmax backward per query row.
                let mut ds = Array2::<F>::zeros((t, t));
                for i in 0..t {
                    let mut r = F::zero();
                    for j in 0..t {
                        r += dp[[i, j]] * probs[[i, j]];
                    }
                    for j in 0..t {
                        ds[[i, j]] = probs[[i, j]] * (dp[[i, j]] - r) * scale;
                    }
                }
                let dqh = ds.dot(&kh);
                let dkh = ds.t().dot(&qh);
                dq.slice_mut(s![row * t..(row + 1) * t, h * dk..(h + 1) * dk]).assign(&dqh);
                dkm.slice_mut(s![row * t..(row + 1) * t, h * dk..(h + 1) * dk]).assign(&dkh);
                dv.slice_mut(s![row * t..(row + 1) * t, h * dk..(h + 1) * dk]).assign(&dvh);
            }
        }

        g.wq = x.t().dot(&dq);
        g.bq = dq.sum_axis(Axis(0));
        g.wk = x.t().dot(&dkm);
        g.bk = dkm.sum_axis(Axis(0));
        g.wv = x.t().dot(&dv);
        g.bv = dv.sum_axis(Axis(0));

        let mut dx = d_resid1;
        dx += &dq.dot(&layer.wq.t());
        dx += &dkm.dot(&layer.wk.t());
        dx += &dv.dot(&layer.wv.t());
        dy = dx;
    }

    // Embedding stack: dropout, then LN, then table scatters.
    if let Some(mask) = &pass.embed.drop {
        dy = &dy * mask;
    }
    let (dx0, dg0, db0) = layer_norm_bwd(&dy, &pass.embed.xhat, &pass.embed.inv_std, &params.embed_ln_gain);
    grads.embed_ln_gain = dg0;
    grads.embed_ln_bias = db0;
    for row in 0..b {
        for pos in 0..t {
            let idx = row * t + pos;
            let src = dx0.row(idx);
            let tok = batch.batch.tokens[[row, pos]] as usize;
            let p = batch.batch.positions[[row, pos]] as usize;
            let lang = batch.batch.languages[[row, pos]] as usize;
            let mut tgt = grads.token_embedding.row_mut(tok);
            for c in 0..d {
                tgt[c] += src[c];
            }
            let mut tgt = grads.position_embedding.row_mut(p);
            for c in 0..d {
                tgt[c] += src[c];
            }
            let mut tgt = grads.language_embedding.row_mut(lang);
            for c in 0..d {
                tgt[c] += src[c];
            }
        }
    }

    Ok((head.loss, grads))
}
