//! ViT forward pass and manual backward pass.
//!
//! Layout convention: token activations are `[tokens, dim]`, weights are
//! `[in, out]`, so every layer is `y = x.dot(w) + b`. The backward pass mirrors
//! the forward exactly and accumulates parameter gradients into an
//! `EncoderParams` gradient buffer of the same shape.

use ndarray::{s, Array1, Array2, Array3, Axis};

use super::{BlockParams, EncoderParams, Pooling, Real};
use crate::error::{Error, Result};

const LN_EPS: f64 = 1e-6;

/// Rearrange a `[3, H, W]` tensor into row-major flattened patch vectors.
pub fn patchify<F: Real>(tensor: &Array3<F>, patch_px: usize) -> Result<Array2<F>> {
    let (c, h, w) = tensor.dim();
    if c != 3 {
        return Err(Error::Model(format!("expected 3 channels, got {c}")));
    }
    if patch_px == 0 || h % patch_px != 0 || w % patch_px != 0 {
        return Err(Error::Model(format!(
            "input {h}x{w} not divisible by patch size {patch_px}"
        )));
    }
    let rows = h / patch_px;
    let cols = w / patch_px;
    let mut out = Array2::zeros((rows * cols, 3 * patch_px * patch_px));
    for pr in 0..rows {
        for pc in 0..cols {
            let patch = pr * cols + pc;
            let mut at = 0;
            for ch in 0..3 {
                for y in 0..patch_px {
                    for x in 0..patch_px {
                        out[[patch, at]] = tensor[[ch, pr * patch_px + y, pc * patch_px + x]];
                        at += 1;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Inverse of [`patchify`]; exact rearrangement.
pub fn unpatchify<F: Real>(
    patches: &Array2<F>,
    height: usize,
    width: usize,
    patch_px: usize,
) -> Result<Array3<F>> {
    let rows = height / patch_px;
    let cols = width / patch_px;
    if patches.nrows() != rows * cols || patches.ncols() != 3 * patch_px * patch_px {
        return Err(Error::Model(format!(
            "patch array {:?} does not match {height}x{width} at patch {patch_px}",
            patches.shape()
        )));
    }
    let mut out = Array3::zeros((3, height, width));
    for pr in 0..rows {
        for pc in 0..cols {
            let patch = pr * cols + pc;
            let mut at = 0;
            for ch in 0..3 {
                for y in 0..patch_px {
                    for x in 0..patch_px {
                        out[[ch, pr * patch_px + y, pc * patch_px + x]] = patches[[patch, at]];
                        at += 1;
                    }
                }
            }
        }
    }
    Ok(out)
}

pub(crate) struct LnCache<F> {
    xhat: Array2<F>,
    inv_std: Array1<F>,
}

fn layer_norm<F: Real>(x: &Array2<F>, gamma: &Array1<F>, beta: &Array1<F>) -> (Array2<F>, LnCache<F>) {
    let (t, d) = x.dim();
    let eps = F::from_f64(LN_EPS).unwrap();
    let dim = F::from_usize(d).unwrap();
    let mut xhat = Array2::zeros((t, d));
    let mut inv_std = Array1::zeros(t);
    let mut y = Array2::zeros((t, d));
    for row in 0..t {
        let xr = x.row(row);
        let mu = xr.sum() / dim;
        let mut var = F::zero();
        for &v in xr {
            let dv = v - mu;
            var += dv * dv;
        }
        var /= dim;
        let inv = F::one() / (var + eps).sqrt();
        inv_std[row] = inv;
        for col in 0..d {
            let xh = (x[[row, col]] - mu) * inv;
            xhat[[row, col]] = xh;
            y[[row, col]] = xh * gamma[col] + beta[col];
        }
    }
    (y, LnCache { xhat, inv_std })
}

fn layer_norm_backward<F: Real>(
    dy: &Array2<F>,
    cache: &LnCache<F>,
    gamma: &Array1<F>,
    dgamma: &mut Array1<F>,
    dbeta: &mut Array1<F>,
) -> Array2<F> {
    let (t, d) = dy.dim();
    let dim = F::from_usize(d).unwrap();
    let mut dx = Array2::zeros((t, d));
    for row in 0..t {
        let mut mean_g = F::zero();
        let mut mean_gx = F::zero();
        for col in 0..d {
            let g = dy[[row, col]] * gamma[col];
            mean_g += g;
            mean_gx += g * cache.xhat[[row, col]];
            dgamma[col] += dy[[row, col]] * cache.xhat[[row, col]];
            dbeta[col] += dy[[row, col]];
        }
        mean_g /= dim;
        mean_gx /= dim;
        let inv = cache.inv_std[row];
        for col in 0..d {
            let g = dy[[row, col]] * gamma[col];
            dx[[row, col]] = inv * (g - mean_g - cache.xhat[[row, col]] * mean_gx);
        }
    }
    dx
}

fn gelu<F: Real>(x: F) -> F {
    let c = F::from_f64(0.7978845608028654).unwrap(); // sqrt(2/pi)
    let a = F::from_f64(0.044715).unwrap();
    let half = F::from_f64(0.5).unwrap();
    let u = c * (x + a * x * x * x);
    half * x * (F::one() + u.tanh())
}

fn gelu_grad<F: Real>(x: F) -> F {
    let c = F::from_f64(0.7978845608028654).unwrap();
    let a = F::from_f64(0.044715).unwrap();
    let half = F::from_f64(0.5).unwrap();
    let three = F::from_f64(3.0).unwrap();
    let u = c * (x + a * x * x * x);
    let th = u.tanh();
    let sech2 = F::one() - th * th;
    half * (F::one() + th) + half * x * sech2 * c * (F::one() + three * a * x * x)
}

fn softmax_rows_inplace<F: Real>(m: &mut Array2<F>) {
    for mut row in m.rows_mut() {
        let mut max = row[0];
        for &v in row.iter() {
            if v > max {
                max = v;
            }
        }
        let mut sum = F::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

struct BlockCache<F> {
    x_in: Array2<F>,
    n1: Array2<F>,
    ln1: LnCache<F>,
    qkv: Array2<F>,
    probs: Vec<Array2<F>>,
    attn: Array2<F>,
    n2: Array2<F>,
    ln2: LnCache<F>,
    h_pre: Array2<F>,
    a_act: Array2<F>,
}

fn block_forward<F: Real>(x: Array2<F>, p: &BlockParams<F>, heads: usize) -> (Array2<F>, BlockCache<F>) {
    let d = x.ncols();
    let head_dim = d / heads;
    let scale = F::from_f64(1.0 / (head_dim as f64).sqrt()).unwrap();

    let (n1, ln1) = layer_norm(&x, &p.norm1.gamma, &p.norm1.beta);
    let qkv = n1.dot(&p.qkv_w) + &p.qkv_b;
    let mut attn = Array2::zeros(x.raw_dim());
    let mut probs = Vec::with_capacity(heads);
    for h in 0..heads {
        let q = qkv.slice(s![.., h * head_dim..(h + 1) * head_dim]);
        let k = qkv.slice(s![.., d + h * head_dim..d + (h + 1) * head_dim]);
        let v = qkv.slice(s![.., 2 * d + h * head_dim..2 * d + (h + 1) * head_dim]);
        let mut scores = q.dot(&k.t());
        scores.mapv_inplace(|s| s * scale);
        softmax_rows_inplace(&mut scores);
        let ctx = scores.dot(&v);
        attn.slice_mut(s![.., h * head_dim..(h + 1) * head_dim])
            .assign(&ctx);
        probs.push(scores);
    }
    let attn_out = attn.dot(&p.out_w) + &p.out_b;
    let x1 = &x + &attn_out;

    let (n2, ln2) = layer_norm(&x1, &p.norm2.gamma, &p.norm2.beta);
    let h_pre = n2.dot(&p.mlp_w1) + &p.mlp_b1;
    let a_act = h_pre.mapv(gelu);
    let mlp_out = a_act.dot(&p.mlp_w2) + &p.mlp_b2;
    let x2 = &x1 + &mlp_out;

    (
        x2,
        BlockCache {
            x_in: x,
            n1,
            ln1,
            qkv,
            probs,
            attn,
            n2,
            ln2,
            h_pre,
            a_act,
        },
    )
}

fn block_backward<F: Real>(
    dx2: &Array2<F>,
    cache: &BlockCache<F>,
    p: &BlockParams<F>,
    g: &mut BlockParams<F>,
    heads: usize,
) -> Array2<F> {
    let d = cache.x_in.ncols();
    let head_dim = d / heads;
    let scale = F::from_f64(1.0 / (head_dim as f64).sqrt()).unwrap();

    // MLP branch: x2 = x1 + mlp(n2)
    let da = dx2.dot(&p.mlp_w2.t());
    g.mlp_w2 += &cache.a_act.t().dot(dx2);
    g.mlp_b2 += &dx2.sum_axis(Axis(0));
    let mut dh = da;
    dh.zip_mut_with(&cache.h_pre, |dv, &h| *dv *= gelu_grad(h));
    let dn2 = dh.dot(&p.mlp_w1.t());
    g.mlp_w1 += &cache.n2.t().dot(&dh);
    g.mlp_b1 += &dh.sum_axis(Axis(0));
    let dx1_mlp = layer_norm_backward(
        &dn2,
        &cache.ln2,
        &p.norm2.gamma,
        &mut g.norm2.gamma,
        &mut g.norm2.beta,
    );
    let dx1 = dx2 + &dx1_mlp;

    // attention branch: x1 = x_in + attn(n1)
    let d_attn_concat = dx1.dot(&p.out_w.t());
    g.out_w += &cache.attn.t().dot(&dx1);
    g.out_b += &dx1.sum_axis(Axis(0));
    let mut d_qkv = Array2::zeros(cache.qkv.raw_dim());
    for h in 0..heads {
        let q = cache.qkv.slice(s![.., h * head_dim..(h + 1) * head_dim]);
        let k = cache
            .qkv
            .slice(s![.., d + h * head_dim..d + (h + 1) * head_dim]);
        let v = cache
            .qkv
            .slice(s![.., 2 * d + h * head_dim..2 * d + (h + 1) * head_dim]);
        let probs = &cache.probs[h];
        let d_ctx = d_attn_concat.slice(s![.., h * head_dim..(h + 1) * head_dim]);
        let mut d_probs = d_ctx.dot(&v.t());
        let dv = probs.t().dot(&d_ctx);
        // softmax backward per row
        for (mut dp_row, p_row) in d_probs.rows_mut().into_iter().zip(probs.rows()) {
            let dot = dp_row
                .iter()
                .zip(p_row.iter())
                .fold(F::zero(), |acc, (&a, &b)| acc + a * b);
            for (dpv, &pv) in dp_row.iter_mut().zip(p_row.iter()) {
                *dpv = pv * (*dpv - dot);
            }
        }
        d_probs.mapv_inplace(|x| x * scale);
        let dq = d_probs.dot(&k);
        let dk = d_probs.t().dot(&q);
        d_qkv
            .slice_mut(s![.., h * head_dim..(h + 1) * head_dim])
            .assign(&dq);
        d_qkv
            .slice_mut(s![.., d + h * head_dim..d + (h + 1) * head_dim])
            .assign(&dk);
        d_qkv
            .slice_mut(s![.., 2 * d + h * head_dim..2 * d + (h + 1) * head_dim])
            .assign(&dv);
    }
    let dn1 = d_qkv.dot(&p.qkv_w.t());
    g.qkv_w += &cache.n1.t().dot(&d_qkv);
    g.qkv_b += &d_qkv.sum_axis(Axis(0));
    let dx_attn = layer_norm_backward(
        &dn1,
        &cache.ln1,
        &p.norm1.gamma,
        &mut g.norm1.gamma,
        &mut g.norm1.beta,
    );
    dx1 + &dx_attn
}

/// Everything the backward pass needs from one forward evaluation.
pub struct EncodeCache<F> {
    patches: Array2<F>,
    blocks: Vec<BlockCache<F>>,
    lnf: LnCache<F>,
    pooled: Array1<F>,
    z_norm: F,
    f: Array1<F>,
}

impl<F: Real> EncodeCache<F> {
    pub fn embedding(&self) -> &Array1<F> {
        &self.f
    }
}

/// Forward pass keeping intermediate activations for backward.
pub fn encode_cached<F: Real>(
    params: &EncoderParams<F>,
    tensor: &Array3<F>,
) -> Result<(Array1<F>, EncodeCache<F>)> {
    let cfg = &params.cfg;
    let (c, h, w) = tensor.dim();
    if c != 3 || h != cfg.input_px || w != cfg.input_px {
        return Err(Error::Model(format!(
            "input tensor {c}x{h}x{w} does not match configured {}x{} input",
            cfg.input_px, cfg.input_px
        )));
    }
    let patches = patchify(tensor, cfg.patch_px)?;
    let projected = patches.dot(&params.patch_w) + &params.patch_b;
    let t = cfg.n_tokens();
    let d = cfg.embed_dim;
    let mut tokens = Array2::zeros((t, d));
    tokens.row_mut(0).assign(&params.class_token);
    tokens.slice_mut(s![1.., ..]).assign(&projected);
    tokens += &params.pos_embed;

    let mut blocks = Vec::with_capacity(cfg.depth);
    let mut x = tokens;
    for block in &params.blocks {
        let (next, cache) = block_forward(x, block, cfg.heads);
        blocks.push(cache);
        x = next;
    }
    let (nf, lnf) = layer_norm(&x, &params.final_norm.gamma, &params.final_norm.beta);
    let pooled = match cfg.pooling {
        Pooling::ClassToken => nf.row(0).to_owned(),
        Pooling::MeanPatch => {
            let patch_rows = nf.slice(s![1.., ..]);
            let inv = F::one() / F::from_usize(t - 1).unwrap();
            patch_rows.sum_axis(Axis(0)) * inv
        }
    };
    let z = pooled.dot(&params.proj_w);
    let z_norm = z.iter().fold(F::zero(), |acc, &v| acc + v * v).sqrt();
    if z_norm == F::zero() {
        return Err(Error::NonFiniteActivations);
    }
    let f = z.mapv(|v| v / z_norm);
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteActivations);
    }
    Ok((
        f.clone(),
        EncodeCache {
            patches,
            blocks,
            lnf,
            pooled,
            z_norm,
            f,
        },
    ))
}

/// Deterministic eval-mode embedding: unit-norm `proj_dim` vector.
pub fn encode<F: Real>(params: &EncoderParams<F>, tensor: &Array3<F>) -> Result<Array1<F>> {
    encode_cached(params, tensor).map(|(f, _)| f)
}

/// Backward from an embedding gradient, accumulating into `grads`.
pub fn encode_backward<F: Real>(
    params: &EncoderParams<F>,
    cache: &EncodeCache<F>,
    d_f: &Array1<F>,
    grads: &mut EncoderParams<F>,
) {
    let cfg = &params.cfg;
    let t = cfg.n_tokens();
    // through L2 normalization: f = z / |z|
    let f_dot = cache
        .f
        .iter()
        .zip(d_f.iter())
        .fold(F::zero(), |acc, (&a, &b)| acc + a * b);
    let dz = d_f
        .iter()
        .zip(cache.f.iter())
        .map(|(&g, &fv)| (g - fv * f_dot) / cache.z_norm)
        .collect::<Array1<F>>();
    // projection: z = pooled . proj_w
    let dpooled = params.proj_w.dot(&dz);
    {
        let pooled_col = cache.pooled.view().insert_axis(Axis(1));
        let dz_row = dz.view().insert_axis(Axis(0));
        grads.proj_w += &pooled_col.dot(&dz_row);
    }
    // pooling
    let d = cfg.embed_dim;
    let mut dnf = Array2::zeros((t, d));
    match cfg.pooling {
        Pooling::ClassToken => dnf.row_mut(0).assign(&dpooled),
        Pooling::MeanPatch => {
            let inv = F::one() / F::from_usize(t - 1).unwrap();
            let share = dpooled.mapv(|v| v * inv);
            for row in 1..t {
                dnf.row_mut(row).assign(&share);
            }
        }
    }
    let mut dx = layer_norm_backward(
        &dnf,
        &cache.lnf,
        &params.final_norm.gamma,
        &mut grads.final_norm.gamma,
        &mut grads.final_norm.beta,
    );
    for (block_cache, (block_params, block_grads)) in cache
        .blocks
        .iter()
        .zip(params.blocks.iter().zip(grads.blocks.iter_mut()))
        .rev()
    {
        dx = block_backward(&dx, block_cache, block_params, block_grads, cfg.heads);
    }
    // tokens = [class; patches.W + b] + pos
    grads.pos_embed += &dx;
    grads.class_token += &dx.row(0);
    let d_proj = dx.slice(s![1.., ..]);
    grads.patch_w += &cache.patches.t().dot(&d_proj);
    grads.patch_b += &d_proj.sum_axis(Axis(0));
}
