//! Decoupled-weight-decay adaptive-moment optimizer with warmup + cosine decay.

use super::{EncoderParams, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct OptimConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            lr: 1e-4,
            weight_decay: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            warmup_steps: 0,
            total_steps: 0,
        }
    }
}

impl OptimConfig {
    /// Linear warmup then cosine decay to zero; constant when total_steps is 0.
    pub fn lr_at(&self, step: usize) -> f64 {
        if self.warmup_steps > 0 && step < self.warmup_steps {
            return self.lr * (step + 1) as f64 / self.warmup_steps as f64;
        }
        if self.total_steps <= self.warmup_steps {
            return self.lr;
        }
        let progress =
            (step - self.warmup_steps) as f64 / (self.total_steps - self.warmup_steps) as f64;
        let progress = progress.min(1.0);
        self.lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}

pub struct AdamW<F> {
    cfg: OptimConfig,
    m: EncoderParams<F>,
    v: EncoderParams<F>,
    step: usize,
    update_tau: bool,
}

impl<F: Real> AdamW<F> {
    pub fn new(cfg: OptimConfig, params: &EncoderParams<F>) -> Self {
        AdamW {
            cfg,
            m: EncoderParams::zeros_like(params),
            v: EncoderParams::zeros_like(params),
            step: 0,
            update_tau: params.cfg.learnable_tau,
        }
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    /// One optimizer step. Weight decay applies to rank-2 tensors only;
    /// log_tau is skipped entirely unless the temperature is learnable.
    pub fn step(&mut self, params: &mut EncoderParams<F>, grads: &EncoderParams<F>) {
        let lr = F::from_f64(self.cfg.lr_at(self.step)).unwrap();
        self.step += 1;
        let b1 = F::from_f64(self.cfg.beta1).unwrap();
        let b2 = F::from_f64(self.cfg.beta2).unwrap();
        let eps = F::from_f64(self.cfg.eps).unwrap();
        let wd = F::from_f64(self.cfg.weight_decay).unwrap();
        let one = F::one();
        let bias1 = one - b1.powi(self.step as i32);
        let bias2 = one - b2.powi(self.step as i32);

        let mut p_tensors = params.tensors_mut();
        let g_tensors = grads.tensors();
        let mut m_tensors = self.m.tensors_mut();
        let mut v_tensors = self.v.tensors_mut();
        for idx in 0..p_tensors.len() {
            let (name, p) = &mut p_tensors[idx];
            if name == "log_tau" && !self.update_tau {
                continue;
            }
            let rank = p.rank();
            let p_slice = p.as_slice_mut();
            let g_slice = g_tensors[idx].1.as_slice();
            let m_slice = m_tensors[idx].1.as_slice_mut();
            let v_slice = v_tensors[idx].1.as_slice_mut();
            for i in 0..p_slice.len() {
                let g = g_slice[i];
                m_slice[i] = b1 * m_slice[i] + (one - b1) * g;
                v_slice[i] = b2 * v_slice[i] + (one - b2) * g * g;
                let m_hat = m_slice[i] / bias1;
                let v_hat = v_slice[i] / bias2;
                let mut update = m_hat / (v_hat.sqrt() + eps);
                if rank == 2 {
                    update += wd * p_slice[i];
                }
                p_slice[i] -= lr * update;
            }
        }
        if self.update_tau {
            // clamp tau to a sane range, CLIP-style
            let min_log = F::from_f64((0.01f64).ln()).unwrap();
            let max_log = F::from_f64((1.0f64).ln()).unwrap();
            if params.log_tau < min_log {
                params.log_tau = min_log;
            }
            if params.log_tau > max_log {
                params.log_tau = max_log;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn schedule_warms_up_then_decays() {
        let cfg = OptimConfig {
            lr: 1.0,
            warmup_steps: 10,
            total_steps: 110,
            ..OptimConfig::default()
        };
        assert!((cfg.lr_at(0) - 0.1).abs() < 1e-12);
        assert!((cfg.lr_at(9) - 1.0).abs() < 1e-12);
        assert!(cfg.lr_at(60) < 1.0);
        assert!(cfg.lr_at(109) < cfg.lr_at(60));
        assert!(cfg.lr_at(109) >= 0.0);
    }

    #[test]
    fn zero_lr_leaves_params_bit_identical() {
        let model_cfg = ModelConfig::tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut params = EncoderParams::<f32>::init(&model_cfg, &mut rng).unwrap();
        let reference = params.clone();
        let mut grads = EncoderParams::zeros_like(&params);
        grads.patch_w.fill(0.5);
        grads.proj_w.fill(-1.0);
        let mut opt = AdamW::new(
            OptimConfig {
                lr: 0.0,
                warmup_steps: 0,
                total_steps: 0,
                ..OptimConfig::default()
            },
            &params,
        );
        for _ in 0..5 {
            opt.step(&mut params, &grads);
        }
        assert_eq!(params, reference);
    }

    #[test]
    fn fixed_tau_is_never_updated() {
        let model_cfg = ModelConfig::tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut params = EncoderParams::<f64>::init(&model_cfg, &mut rng).unwrap();
        let before = params.log_tau;
        let mut grads = EncoderParams::zeros_like(&params);
        grads.log_tau = 123.0;
        let mut opt = AdamW::new(
            OptimConfig {
                lr: 0.1,
                ..OptimConfig::default()
            },
            &params,
        );
        opt.step(&mut params, &grads);
        assert_eq!(params.log_tau, before);
    }

    #[test]
    fn learnable_tau_moves_and_clamps() {
        let mut model_cfg = ModelConfig::tiny();
        model_cfg.learnable_tau = true;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut params = EncoderParams::<f64>::init(&model_cfg, &mut rng).unwrap();
        let before = params.log_tau;
        let mut grads = EncoderParams::zeros_like(&params);
        grads.log_tau = 1.0;
        let mut opt = AdamW::new(
            OptimConfig {
                lr: 0.1,
                ..OptimConfig::default()
            },
            &params,
        );
        opt.step(&mut params, &grads);
        assert!(params.log_tau < before);
        assert!(params.tau() >= 0.01 && params.tau() <= 1.0);
    }
}
