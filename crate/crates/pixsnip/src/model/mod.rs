//! Compact vision-transformer encoder with hand-written backward pass.
//!
//! The encoder is a standard pre-norm ViT: patch projection, class token,
//! learned positional embeddings, `depth` attention/MLP blocks, a final norm,
//! and a linear projection whose output is L2-normalized. Everything is
//! generic over `f32` (training) and `f64` (gradient checking).

mod checkpoint;
mod gradcheck;
mod loss;
mod optim;
mod train;
mod vit;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::{grad_check, loss_grad_check, GradCheckReport};
pub use loss::{contrastive_loss, contrastive_loss_full, LossOutput};
pub use optim::{AdamW, OptimConfig};
pub use train::{train, TrainConfig, TrainResult};
pub use vit::{encode, encode_cached, patchify, unpatchify, EncodeCache};

use ndarray::{Array1, Array2, NdFloat};
use num_traits::FromPrimitive;
use rand::distributions::uniform::SampleUniform;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Floating-point element type for model math.
pub trait Real: NdFloat + FromPrimitive + SampleUniform {}
impl Real for f32 {}
impl Real for f64 {}

/// Standard normal draw computed in f64 for cross-precision determinism.
pub(crate) fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; u1 in (0, 1] avoids ln(0)
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Truncated normal (|z| <= 2 std) used for weight init.
fn trunc_normal(rng: &mut ChaCha8Rng, std: f64) -> f64 {
    loop {
        let z = standard_normal(rng);
        if z.abs() <= 2.0 {
            return z * std;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pooling {
    /// Class-token output feeds the projection (CLIP style).
    ClassToken,
    /// Mean over patch-token outputs feeds the projection.
    MeanPatch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub input_px: usize,
    pub patch_px: usize,
    pub embed_dim: usize,
    pub depth: usize,
    pub heads: usize,
    pub mlp_ratio: f64,
    pub proj_dim: usize,
    pub temperature: f64,
    pub learnable_tau: bool,
    pub pooling: Pooling,
}

impl Default for ModelConfig {
    /// Desk-scale defaults: 64px input, 2 blocks, 64-dim embedding.
    fn default() -> Self {
        ModelConfig {
            input_px: 64,
            patch_px: 16,
            embed_dim: 64,
            depth: 2,
            heads: 4,
            mlp_ratio: 4.0,
            proj_dim: 32,
            temperature: 0.07,
            learnable_tau: false,
            pooling: Pooling::ClassToken,
        }
    }
}

impl ModelConfig {
    /// ViT-B/16 at 448px input, the full-scale shape.
    pub fn vit_b_448() -> Self {
        ModelConfig {
            input_px: 448,
            patch_px: 16,
            embed_dim: 768,
            depth: 12,
            heads: 12,
            mlp_ratio: 4.0,
            proj_dim: 512,
            ..ModelConfig::default()
        }
    }

    /// Tiny shape (<= 10^4 parameters) for finite-difference checks.
    pub fn tiny() -> Self {
        ModelConfig {
            input_px: 32,
            patch_px: 16,
            embed_dim: 8,
            depth: 1,
            heads: 2,
            mlp_ratio: 4.0,
            proj_dim: 4,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_px == 0 || self.patch_px == 0 || self.input_px % self.patch_px != 0 {
            return Err(Error::Model(format!(
                "input_px {} must be a positive multiple of patch_px {}",
                self.input_px, self.patch_px
            )));
        }
        if self.embed_dim == 0 || self.heads == 0 || self.embed_dim % self.heads != 0 {
            return Err(Error::Model(format!(
                "embed_dim {} must be a positive multiple of heads {}",
                self.embed_dim, self.heads
            )));
        }
        if self.depth == 0 || self.proj_dim == 0 {
            return Err(Error::Model("depth and proj_dim must be positive".into()));
        }
        if self.mlp_ratio <= 0.0 {
            return Err(Error::Model(format!("mlp_ratio {} must be positive", self.mlp_ratio)));
        }
        if self.temperature <= 0.0 {
            return Err(Error::InvalidTemperature(self.temperature));
        }
        Ok(())
    }

    pub fn patches_per_side(&self) -> usize {
        self.input_px / self.patch_px
    }

    pub fn n_patches(&self) -> usize {
        self.patches_per_side() * self.patches_per_side()
    }

    pub fn n_tokens(&self) -> usize {
        self.n_patches() + 1
    }

    pub fn patch_dim(&self) -> usize {
        3 * self.patch_px * self.patch_px
    }

    pub fn mlp_hidden(&self) -> usize {
        (self.embed_dim as f64 * self.mlp_ratio).round() as usize
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.heads
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormParams<F> {
    pub gamma: Array1<F>,
    pub beta: Array1<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams<F> {
    pub norm1: NormParams<F>,
    pub qkv_w: Array2<F>,
    pub qkv_b: Array1<F>,
    pub out_w: Array2<F>,
    pub out_b: Array1<F>,
    pub norm2: NormParams<F>,
    pub mlp_w1: Array2<F>,
    pub mlp_b1: Array1<F>,
    pub mlp_w2: Array2<F>,
    pub mlp_b2: Array1<F>,
}

/// All encoder parameters, including the (optionally learnable) temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams<F> {
    pub cfg: ModelConfig,
    pub patch_w: Array2<F>,
    pub patch_b: Array1<F>,
    pub class_token: Array1<F>,
    pub pos_embed: Array2<F>,
    pub blocks: Vec<BlockParams<F>>,
    pub final_norm: NormParams<F>,
    pub proj_w: Array2<F>,
    pub log_tau: F,
}

/// Borrowed view of one parameter tensor.
pub enum TensorView<'a, F> {
    A1(&'a Array1<F>),
    A2(&'a Array2<F>),
    Scalar(&'a F),
}

pub enum TensorViewMut<'a, F> {
    A1(&'a mut Array1<F>),
    A2(&'a mut Array2<F>),
    Scalar(&'a mut F),
}

impl<'a, F: Real> TensorView<'a, F> {
    pub fn rank(&self) -> usize {
        match self {
            TensorView::A1(_) => 1,
            TensorView::A2(_) => 2,
            TensorView::Scalar(_) => 0,
        }
    }

    pub fn dims(&self) -> Vec<usize> {
        match self {
            TensorView::A1(a) => vec![a.len()],
            TensorView::A2(a) => a.shape().to_vec(),
            TensorView::Scalar(_) => Vec::new(),
        }
    }

    pub fn as_slice(&self) -> &[F] {
        match self {
            TensorView::A1(a) => a.as_slice().expect("contiguous"),
            TensorView::A2(a) => a.as_slice().expect("contiguous"),
            TensorView::Scalar(s) => std::slice::from_ref(s),
        }
    }
}

impl<'a, F: Real> TensorViewMut<'a, F> {
    pub fn rank(&self) -> usize {
        match self {
            TensorViewMut::A1(_) => 1,
            TensorViewMut::A2(_) => 2,
            TensorViewMut::Scalar(_) => 0,
        }
    }

    pub fn as_slice_mut(&mut self) -> &mut [F] {
        match self {
            TensorViewMut::A1(a) => a.as_slice_mut().expect("contiguous"),
            TensorViewMut::A2(a) => a.as_slice_mut().expect("contiguous"),
            TensorViewMut::Scalar(s) => std::slice::from_mut(s),
        }
    }
}

impl<F: Real> EncoderParams<F> {
    /// Random initialization: truncated-normal weights (std 0.02), zero biases.
    pub fn init(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        let normal_mat = |rows: usize, cols: usize, rng: &mut ChaCha8Rng| {
            Array2::from_shape_fn((rows, cols), |_| {
                F::from_f64(trunc_normal(rng, 0.02)).unwrap()
            })
        };
        let d = cfg.embed_dim;
        let hidden = cfg.mlp_hidden();
        let blocks = (0..cfg.depth)
            .map(|_| BlockParams {
                norm1: NormParams {
                    gamma: Array1::ones(d),
                    beta: Array1::zeros(d),
                },
                qkv_w: normal_mat(d, 3 * d, rng),
                qkv_b: Array1::zeros(3 * d),
                out_w: normal_mat(d, d, rng),
                out_b: Array1::zeros(d),
                norm2: NormParams {
                    gamma: Array1::ones(d),
                    beta: Array1::zeros(d),
                },
                mlp_w1: normal_mat(d, hidden, rng),
                mlp_b1: Array1::zeros(hidden),
                mlp_w2: normal_mat(hidden, d, rng),
                mlp_b2: Array1::zeros(d),
            })
            .collect();
        Ok(EncoderParams {
            patch_w: normal_mat(cfg.patch_dim(), d, rng),
            patch_b: Array1::zeros(d),
            class_token: Array1::from_shape_fn(d, |_| F::from_f64(trunc_normal(rng, 0.02)).unwrap()),
            pos_embed: normal_mat(cfg.n_tokens(), d, rng),
            blocks,
            final_norm: NormParams {
                gamma: Array1::ones(d),
                beta: Array1::zeros(d),
            },
            proj_w: normal_mat(d, cfg.proj_dim, rng),
            log_tau: F::from_f64(cfg.temperature.ln()).unwrap(),
            cfg: cfg.clone(),
        })
    }

    /// Zero-valued tensors with the same shapes (gradient / moment buffers).
    pub fn zeros_like(other: &Self) -> Self {
        Self::zeros(&other.cfg)
    }

    /// Zero-valued parameters for a config (checkpoint loading target).
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let cfg = cfg.clone();
        let d = cfg.embed_dim;
        let hidden = cfg.mlp_hidden();
        EncoderParams {
            patch_w: Array2::zeros((cfg.patch_dim(), d)),
            patch_b: Array1::zeros(d),
            class_token: Array1::zeros(d),
            pos_embed: Array2::zeros((cfg.n_tokens(), d)),
            blocks: (0..cfg.depth)
                .map(|_| BlockParams {
                    norm1: NormParams {
                        gamma: Array1::zeros(d),
                        beta: Array1::zeros(d),
                    },
                    qkv_w: Array2::zeros((d, 3 * d)),
                    qkv_b: Array1::zeros(3 * d),
                    out_w: Array2::zeros((d, d)),
                    out_b: Array1::zeros(d),
                    norm2: NormParams {
                        gamma: Array1::zeros(d),
                        beta: Array1::zeros(d),
                    },
                    mlp_w1: Array2::zeros((d, hidden)),
                    mlp_b1: Array1::zeros(hidden),
                    mlp_w2: Array2::zeros((hidden, d)),
                    mlp_b2: Array1::zeros(d),
                })
                .collect(),
            final_norm: NormParams {
                gamma: Array1::zeros(d),
                beta: Array1::zeros(d),
            },
            proj_w: Array2::zeros((d, cfg.proj_dim)),
            log_tau: F::zero(),
            cfg,
        }
    }

    pub fn tau(&self) -> F {
        self.log_tau.exp()
    }

    /// Parameter tensors in canonical order.
    pub fn tensors(&self) -> Vec<(String, TensorView<'_, F>)> {
        let mut out: Vec<(String, TensorView<'_, F>)> = vec![
            ("patch_w".into(), TensorView::A2(&self.patch_w)),
            ("patch_b".into(), TensorView::A1(&self.patch_b)),
            ("class_token".into(), TensorView::A1(&self.class_token)),
            ("pos_embed".into(), TensorView::A2(&self.pos_embed)),
        ];
        for (i, b) in self.blocks.iter().enumerate() {
            out.push((format!("block{i}.norm1.gamma"), TensorView::A1(&b.norm1.gamma)));
            out.push((format!("block{i}.norm1.beta"), TensorView::A1(&b.norm1.beta)));
            out.push((format!("block{i}.qkv_w"), TensorView::A2(&b.qkv_w)));
            out.push((format!("block{i}.qkv_b"), TensorView::A1(&b.qkv_b)));
            out.push((format!("block{i}.out_w"), TensorView::A2(&b.out_w)));
            out.push((format!("block{i}.out_b"), TensorView::A1(&b.out_b)));
            out.push((format!("block{i}.norm2.gamma"), TensorView::A1(&b.norm2.gamma)));
            out.push((format!("block{i}.norm2.beta"), TensorView::A1(&b.norm2.beta)));
            out.push((format!("block{i}.mlp_w1"), TensorView::A2(&b.mlp_w1)));
            out.push((format!("block{i}.mlp_b1"), TensorView::A1(&b.mlp_b1)));
            out.push((format!("block{i}.mlp_w2"), TensorView::A2(&b.mlp_w2)));
            out.push((format!("block{i}.mlp_b2"), TensorView::A1(&b.mlp_b2)));
        }
        out.push(("final_norm.gamma".into(), TensorView::A1(&self.final_norm.gamma)));
        out.push(("final_norm.beta".into(), TensorView::A1(&self.final_norm.beta)));
        out.push(("proj_w".into(), TensorView::A2(&self.proj_w)));
        out.push(("log_tau".into(), TensorView::Scalar(&self.log_tau)));
        out
    }

    /// Mutable parameter tensors, same canonical order as [`Self::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<(String, TensorViewMut<'_, F>)> {
        let mut out: Vec<(String, TensorViewMut<'_, F>)> = vec![
            ("patch_w".into(), TensorViewMut::A2(&mut self.patch_w)),
            ("patch_b".into(), TensorViewMut::A1(&mut self.patch_b)),
            ("class_token".into(), TensorViewMut::A1(&mut self.class_token)),
            ("pos_embed".into(), TensorViewMut::A2(&mut self.pos_embed)),
        ];
        for (i, b) in self.blocks.iter_mut().enumerate() {
            out.push((format!("block{i}.norm1.gamma"), TensorViewMut::A1(&mut b.norm1.gamma)));
            out.push((format!("block{i}.norm1.beta"), TensorViewMut::A1(&mut b.norm1.beta)));
            out.push((format!("block{i}.qkv_w"), TensorViewMut::A2(&mut b.qkv_w)));
            out.push((format!("block{i}.qkv_b"), TensorViewMut::A1(&mut b.qkv_b)));
            out.push((format!("block{i}.out_w"), TensorViewMut::A2(&mut b.out_w)));
            out.push((format!("block{i}.out_b"), TensorViewMut::A1(&mut b.out_b)));
            out.push((format!("block{i}.norm2.gamma"), TensorViewMut::A1(&mut b.norm2.gamma)));
            out.push((format!("block{i}.norm2.beta"), TensorViewMut::A1(&mut b.norm2.beta)));
            out.push((format!("block{i}.mlp_w1"), TensorViewMut::A2(&mut b.mlp_w1)));
            out.push((format!("block{i}.mlp_b1"), TensorViewMut::A1(&mut b.mlp_b1)));
            out.push((format!("block{i}.mlp_w2"), TensorViewMut::A2(&mut b.mlp_w2)));
            out.push((format!("block{i}.mlp_b2"), TensorViewMut::A1(&mut b.mlp_b2)));
        }
        out.push(("final_norm.gamma".into(), TensorViewMut::A1(&mut self.final_norm.gamma)));
        out.push(("final_norm.beta".into(), TensorViewMut::A1(&mut self.final_norm.beta)));
        out.push(("proj_w".into(), TensorViewMut::A2(&mut self.proj_w)));
        out.push(("log_tau".into(), TensorViewMut::Scalar(&mut self.log_tau)));
        out
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.as_slice().len()).sum()
    }

    /// Element-wise `self += other` over every tensor.
    pub fn add_assign(&mut self, other: &Self) {
        let mut mine = self.tensors_mut();
        let theirs = other.tensors();
        for ((_, m), (_, t)) in mine.iter_mut().zip(theirs.iter()) {
            let dst = m.as_slice_mut();
            let src = t.as_slice();
            for (d, s) in dst.iter_mut().zip(src) {
                *d += *s;
            }
        }
    }

    /// Convert element type (used by checkpoint io).
    pub fn convert<G: Real>(&self) -> EncoderParams<G> {
        let conv1 = |a: &Array1<F>| a.mapv(|v| G::from_f64(v.to_f64().unwrap()).unwrap());
        let conv2 = |a: &Array2<F>| a.mapv(|v| G::from_f64(v.to_f64().unwrap()).unwrap());
        EncoderParams {
            cfg: self.cfg.clone(),
            patch_w: conv2(&self.patch_w),
            patch_b: conv1(&self.patch_b),
            class_token: conv1(&self.class_token),
            pos_embed: conv2(&self.pos_embed),
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockParams {
                    norm1: NormParams {
                        gamma: conv1(&b.norm1.gamma),
                        beta: conv1(&b.norm1.beta),
                    },
                    qkv_w: conv2(&b.qkv_w),
                    qkv_b: conv1(&b.qkv_b),
                    out_w: conv2(&b.out_w),
                    out_b: conv1(&b.out_b),
                    norm2: NormParams {
                        gamma: conv1(&b.norm2.gamma),
                        beta: conv1(&b.norm2.beta),
                    },
                    mlp_w1: conv2(&b.mlp_w1),
                    mlp_b1: conv1(&b.mlp_b1),
                    mlp_w2: conv2(&b.mlp_w2),
                    mlp_b2: conv1(&b.mlp_b2),
                })
                .collect(),
            final_norm: NormParams {
                gamma: conv1(&self.final_norm.gamma),
                beta: conv1(&self.final_norm.beta),
            },
            proj_w: conv2(&self.proj_w),
            log_tau: G::from_f64(self.log_tau.to_f64().unwrap()).unwrap(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn tiny_config_stays_under_budget() {
        let cfg = ModelConfig::tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let params = EncoderParams::<f64>::init(&cfg, &mut rng).unwrap();
        assert!(params.n_params() <= 10_000, "tiny model has {} params", params.n_params());
    }

    #[test]
    fn visitor_orders_match() {
        let cfg = ModelConfig::tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut params = EncoderParams::<f32>::init(&cfg, &mut rng).unwrap();
        let names: Vec<String> = params.tensors().into_iter().map(|(n, _)| n).collect();
        let names_mut: Vec<String> = params.tensors_mut().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, names_mut);
        assert_eq!(names.first().map(String::as_str), Some("patch_w"));
        assert_eq!(names.last().map(String::as_str), Some("log_tau"));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = ModelConfig::default();
        cfg.input_px = 65;
        assert!(cfg.validate().is_err());
        let mut cfg = ModelConfig::default();
        cfg.heads = 5;
        assert!(cfg.validate().is_err());
        let mut cfg = ModelConfig::default();
        cfg.temperature = 0.0;
        assert!(matches!(cfg.validate(), Err(Error::InvalidTemperature(_))));
    }

    #[test]
    fn init_is_seed_deterministic() {
        let cfg = ModelConfig::default();
        let a = EncoderParams::<f32>::init(&cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = EncoderParams::<f32>::init(&cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        let c = EncoderParams::<f32>::init(&cfg, &mut ChaCha8Rng::seed_from_u64(10)).unwrap();
        assert_ne!(a, c);
    }
}
