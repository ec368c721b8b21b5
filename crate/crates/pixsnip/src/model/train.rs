//! Contrastive training loop.
//!
//! Per step: assemble a pair batch, encode both sides, apply the contrastive
//! loss, and take one optimizer step. Documents reshuffle every epoch. The
//! whole loop is a pure function of (corpus, configs, seed): forward/backward
//! fan-out is chunked with a fixed chunk size and reduced in order, so loss
//! curves and checkpoints are bit-identical at any thread count.

use std::path::Path;

use ndarray::{Array2, Array3};

use super::vit::{encode_backward, encode_cached};
use super::{contrastive_loss_full, AdamW, EncoderParams, ModelConfig, OptimConfig, Real};
use crate::augment::AugmentConfig;
use crate::corpus::PreparedCorpus;
use crate::error::{Error, Result};
use crate::exec;
use crate::font::FontTable;
use crate::render::LayoutConfig;
use crate::sampler::{build_batch_for_docs, usable_docs, PairPolicy};
use crate::seed::rng_for_indexed;

/// Samples per gradient-accumulation chunk; fixed so the reduction order
/// never depends on the worker count.
const GRAD_CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub warmup_steps: usize,
    pub batch_size: usize,
    pub epochs: usize,
    /// Optional hard cap on optimizer steps (stops mid-epoch).
    pub max_steps: Option<usize>,
    pub seed: u64,
    /// Add the key-to-query softmax term, CLIP style. Off matches the
    /// one-directional objective.
    pub symmetric_loss: bool,
    pub checkpoint_every_epochs: usize,
    pub policy: PairPolicy,
    pub augment: AugmentConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            weight_decay: 0.05,
            warmup_steps: 0,
            batch_size: 64,
            epochs: 1,
            max_steps: None,
            seed: 0,
            symmetric_loss: false,
            checkpoint_every_epochs: 1,
            policy: PairPolicy::OMNI,
            augment: AugmentConfig::default(),
        }
    }
}

pub struct TrainResult<F> {
    pub params: EncoderParams<F>,
    /// One (step, loss) record per optimizer step.
    pub loss_curve: Vec<(usize, f64)>,
}

/// Write a loss curve as one `step,loss` record per line.
pub(crate) fn format_loss_curve(curve: &[(usize, f64)]) -> String {
    let mut out = String::new();
    for (step, loss) in curve {
        out.push_str(&format!("{step},{loss}\n"));
    }
    out
}

pub fn train<F: Real>(
    corpus: &PreparedCorpus,
    model_cfg: &ModelConfig,
    layout: &LayoutConfig,
    font: &FontTable,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainResult<F>> {
    model_cfg.validate()?;
    layout.validate()?;
    cfg.policy.validate()?;
    cfg.augment.validate()?;
    if layout.canvas_width() != model_cfg.input_px || layout.canvas_height() != model_cfg.input_px
    {
        return Err(Error::Config(format!(
            "layout canvas {}x{} does not match model input {}",
            layout.canvas_width(),
            layout.canvas_height(),
            model_cfg.input_px
        )));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(Error::Config("batch_size and epochs must be positive".into()));
    }
    let usable = usable_docs(corpus);
    if usable.len() < cfg.batch_size {
        return Err(Error::InsufficientCorpus {
            required: cfg.batch_size,
            available: usable.len(),
        });
    }
    let steps_per_epoch = usable.len() / cfg.batch_size;
    let planned = cfg.epochs * steps_per_epoch;
    let total_steps = cfg.max_steps.map_or(planned, |cap| planned.min(cap));
    if total_steps == 0 {
        return Err(Error::Config("training schedule has zero steps".into()));
    }

    let mut params =
        EncoderParams::<F>::init(model_cfg, &mut rng_for_indexed(cfg.seed, "model-init", 0))?;
    let mut opt = AdamW::new(
        OptimConfig {
            lr: cfg.lr,
            weight_decay: cfg.weight_decay,
            warmup_steps: cfg.warmup_steps,
            total_steps,
            ..OptimConfig::default()
        },
        &params,
    );
    let mut loss_curve = Vec::with_capacity(total_steps);
    let mut step = 0;

    'epochs: for epoch in 0..cfg.epochs {
        let mut order = usable.clone();
        let mut shuffle_rng = rng_for_indexed(cfg.seed, "epoch-shuffle", epoch as u64);
        partial_shuffle(&mut order, &mut shuffle_rng);
        for chunk in order.chunks_exact(cfg.batch_size) {
            if step >= total_steps {
                break 'epochs;
            }
            let mut batch_rng = rng_for_indexed(cfg.seed, "train-step", step as u64);
            let batch = build_batch_for_docs(
                corpus,
                chunk,
                &cfg.policy,
                &cfg.augment,
                layout,
                font,
                &mut batch_rng,
            )?;
            let loss = train_step(&mut params, &mut opt, &batch.query, &batch.key, cfg)?;
            if !loss.is_finite() {
                if let Some(dir) = out_dir {
                    super::write_checkpoint(&dir.join("checkpoint_last_good.bin"), &params)?;
                }
                return Err(Error::Diverged { step });
            }
            loss_curve.push((step, loss));
            step += 1;
        }
        let at_boundary = (epoch + 1) % cfg.checkpoint_every_epochs.max(1) == 0;
        if let Some(dir) = out_dir {
            if at_boundary {
                super::write_checkpoint(&dir.join(format!("checkpoint_epoch{epoch:04}.bin")), &params)?;
            }
        }
    }
    if let Some(dir) = out_dir {
        super::write_checkpoint(&dir.join("checkpoint_final.bin"), &params)?;
        std::fs::write(dir.join("loss_curve.csv"), format_loss_curve(&loss_curve))?;
    }
    Ok(TrainResult { params, loss_curve })
}

fn partial_shuffle(order: &mut [usize], rng: &mut rand_chacha::ChaCha8Rng) {
    use rand::Rng;
    for i in 0..order.len().saturating_sub(1) {
        let j = i + rng.gen_range(0..order.len() - i);
        order.swap(i, j);
    }
}

/// Encode both sides, evaluate the loss, backprop, and update. Returns the
/// step loss. Gradients reduce chunk-by-chunk in sample order.
fn train_step<F: Real>(
    params: &mut EncoderParams<F>,
    opt: &mut AdamW<F>,
    query_canvases: &[Array3<f32>],
    key_canvases: &[Array3<f32>],
    cfg: &TrainConfig,
) -> Result<f64> {
    let n = query_canvases.len();
    let tensors: Vec<Array3<F>> = exec::map_indexed(2 * n, |i| {
        let src = if i < n {
            &query_canvases[i]
        } else {
            &key_canvases[i - n]
        };
        src.mapv(|v| F::from_f32(v).unwrap())
    });
    let forward: Vec<_> = {
        let p = &*params;
        exec::map_ordered(&tensors, |t| encode_cached(p, t))
    };
    let mut caches = Vec::with_capacity(2 * n);
    let proj = params.cfg.proj_dim;
    let mut fq = Array2::zeros((n, proj));
    let mut fk = Array2::zeros((n, proj));
    for (i, item) in forward.into_iter().enumerate() {
        let (f, cache) = item?;
        if i < n {
            fq.row_mut(i).assign(&f);
        } else {
            fk.row_mut(i - n).assign(&f);
        }
        caches.push(cache);
    }
    let out = contrastive_loss_full(&fq, &fk, params.tau(), cfg.symmetric_loss)?;
    let loss = out.loss.to_f64().unwrap();
    if !loss.is_finite() {
        return Ok(loss);
    }

    let n_chunks = (2 * n).div_ceil(GRAD_CHUNK);
    let chunk_grads: Vec<EncoderParams<F>> = {
        let p = &*params;
        let caches = &caches;
        let gq = &out.grad_query;
        let gk = &out.grad_key;
        exec::map_indexed(n_chunks, move |c| {
            let mut grads = EncoderParams::zeros_like(p);
            let lo = c * GRAD_CHUNK;
            let hi = (lo + GRAD_CHUNK).min(2 * n);
            for i in lo..hi {
                let df = if i < n {
                    gq.row(i).to_owned()
                } else {
                    gk.row(i - n).to_owned()
                };
                encode_backward(p, &caches[i], &df, &mut grads);
            }
            grads
        })
    };
    let mut grads = EncoderParams::zeros_like(params);
    for chunk in &chunk_grads {
        grads.add_assign(chunk);
    }
    grads.log_tau = out.grad_log_tau;
    opt.step(params, &grads);
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{PreparedDoc, SentenceSpan, Snippet};
    use crate::font::FontTable;

    fn tiny_corpus(n_docs: usize) -> PreparedCorpus {
        PreparedCorpus {
            docs: (0..n_docs)
                .map(|d| PreparedDoc {
                    doc_id: format!("doc{d}"),
                    snippets: (0..3)
                        .map(|i| {
                            let text = format!("Doc {d} line {i}.");
                            Snippet {
                                doc_id: format!("doc{d}"),
                                index: i,
                                text: text.clone(),
                                images: Vec::new(),
                                sentence_spans: vec![SentenceSpan {
                                    start: 0,
                                    end: text.len(),
                                    sentence_index: i,
                                }],
                            }
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    fn test_font() -> FontTable {
        let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/testfont.hex");
        FontTable::from_hex_file(&path).unwrap()
    }

    fn desk_setup() -> (ModelConfig, LayoutConfig, TrainConfig) {
        let model = ModelConfig::default();
        let layout = LayoutConfig::desk();
        let train = TrainConfig {
            lr: 1e-3,
            batch_size: 4,
            epochs: 2,
            max_steps: Some(4),
            seed: 123,
            ..TrainConfig::default()
        };
        (model, layout, train)
    }

    #[test]
    fn same_seed_replays_identical_loss_curves() {
        let corpus = tiny_corpus(8);
        let font = test_font();
        let (model, layout, cfg) = desk_setup();
        let a = train::<f32>(&corpus, &model, &layout, &font, &cfg, None).unwrap();
        let b = train::<f32>(&corpus, &model, &layout, &font, &cfg, None).unwrap();
        assert_eq!(a.loss_curve, b.loss_curve);
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn zero_lr_keeps_initial_params() {
        let corpus = tiny_corpus(8);
        let font = test_font();
        let (model, layout, mut cfg) = desk_setup();
        cfg.lr = 0.0;
        cfg.weight_decay = 0.0;
        let result = train::<f32>(&corpus, &model, &layout, &font, &cfg, None).unwrap();
        let initial =
            EncoderParams::<f32>::init(&model, &mut rng_for_indexed(cfg.seed, "model-init", 0))
                .unwrap();
        assert_eq!(result.params, initial);
    }

    #[test]
    fn insufficient_corpus_is_an_error() {
        let corpus = tiny_corpus(2);
        let font = test_font();
        let (model, layout, cfg) = desk_setup();
        assert!(matches!(
            train::<f32>(&corpus, &model, &layout, &font, &cfg, None),
            Err(Error::InsufficientCorpus { .. })
        ));
    }

    #[test]
    fn checkpoints_and_curve_written() {
        let corpus = tiny_corpus(8);
        let font = test_font();
        let (model, layout, cfg) = desk_setup();
        let dir = tempfile::tempdir().unwrap();
        train::<f32>(&corpus, &model, &layout, &font, &cfg, Some(dir.path())).unwrap();
        assert!(dir.path().join("checkpoint_epoch0000.bin").exists());
        assert!(dir.path().join("checkpoint_final.bin").exists());
        let curve = std::fs::read_to_string(dir.path().join("loss_curve.csv")).unwrap();
        assert_eq!(curve.lines().count(), 4);
        assert!(curve.lines().next().unwrap().starts_with("0,"));
    }
}
