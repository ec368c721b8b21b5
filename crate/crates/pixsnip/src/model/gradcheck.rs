//! Finite-difference verification of the analytic backward pass.

use ndarray::{Array2, Array3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::vit::{encode_backward, encode_cached};
use super::{contrastive_loss, contrastive_loss_full, EncoderParams};
use crate::error::Result;

/// Per-parameter-group maximum relative error between analytic gradients and
/// central finite differences.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub groups: Vec<(String, f64)>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.groups.iter().map(|(_, e)| *e).fold(0.0, f64::max)
    }
}

/// Relative error with a floored denominator: elements far below the working
/// gradient scale are judged on absolute error, so central-difference noise
/// (~1e-10 here) on a zero gradient does not read as a huge relative error.
fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn pipeline_loss(
    params: &EncoderParams<f64>,
    queries: &[Array3<f64>],
    keys: &[Array3<f64>],
    symmetric: bool,
) -> Result<f64> {
    let n = queries.len();
    let proj = params.cfg.proj_dim;
    let mut fq = Array2::zeros((n, proj));
    let mut fk = Array2::zeros((n, proj));
    for i in 0..n {
        fq.row_mut(i).assign(&encode_cached(params, &queries[i])?.0);
        fk.row_mut(i).assign(&encode_cached(params, &keys[i])?.0);
    }
    let (loss, _, _) = contrastive_loss(&fq, &fk, params.tau(), symmetric)?;
    Ok(loss)
}

/// Check every parameter of the encoder (including log_tau) against central
/// finite differences through the full encode-plus-loss pipeline. Double
/// precision only; intended for tiny models.
pub fn grad_check(
    params: &mut EncoderParams<f64>,
    queries: &[Array3<f64>],
    keys: &[Array3<f64>],
    symmetric: bool,
    epsilon: f64,
) -> Result<GradCheckReport> {
    let n = queries.len();
    let proj = params.cfg.proj_dim;

    // analytic gradients through the full pipeline
    let mut analytic = EncoderParams::zeros_like(params);
    {
        let mut fq = Array2::zeros((n, proj));
        let mut fk = Array2::zeros((n, proj));
        let mut caches = Vec::with_capacity(2 * n);
        for q in queries {
            let (f, cache) = encode_cached(params, q)?;
            fq.row_mut(caches.len()).assign(&f);
            caches.push(cache);
        }
        for (i, k) in keys.iter().enumerate() {
            let (f, cache) = encode_cached(params, k)?;
            fk.row_mut(i).assign(&f);
            caches.push(cache);
        }
        let out = contrastive_loss_full(&fq, &fk, params.tau(), symmetric)?;
        for i in 0..n {
            encode_backward(params, &caches[i], &out.grad_query.row(i).to_owned(), &mut analytic);
            encode_backward(
                params,
                &caches[n + i],
                &out.grad_key.row(i).to_owned(),
                &mut analytic,
            );
        }
        analytic.log_tau = out.grad_log_tau;
    }

    let layout: Vec<(String, usize)> = params
        .tensors()
        .into_iter()
        .map(|(name, view)| (name, view.as_slice().len()))
        .collect();
    let analytic_slices: Vec<Vec<f64>> = analytic
        .tensors()
        .into_iter()
        .map(|(_, view)| view.as_slice().to_vec())
        .collect();

    let mut groups = Vec::with_capacity(layout.len());
    for (tensor_idx, (name, len)) in layout.iter().enumerate() {
        let mut worst = 0.0f64;
        for elem in 0..*len {
            let nudge = |params: &mut EncoderParams<f64>, delta: f64| {
                params.tensors_mut()[tensor_idx].1.as_slice_mut()[elem] += delta;
            };
            nudge(params, epsilon);
            let plus = pipeline_loss(params, queries, keys, symmetric)?;
            nudge(params, -2.0 * epsilon);
            let minus = pipeline_loss(params, queries, keys, symmetric)?;
            nudge(params, epsilon);
            let numeric = (plus - minus) / (2.0 * epsilon);
            worst = worst.max(rel_err(analytic_slices[tensor_idx][elem], numeric, 1e-5));
        }
        groups.push((name.clone(), worst));
    }
    Ok(GradCheckReport { groups })
}

/// Loss-level check: analytic embedding gradients vs central differences on
/// random unit embeddings. Returns the max relative error.
pub fn loss_grad_check(
    n: usize,
    dim: usize,
    tau: f64,
    symmetric: bool,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let random_unit = |rng: &mut ChaCha8Rng| {
        let mut m = Array2::from_shape_fn((n, dim), |_| rng.gen_range(-1.0..1.0f64));
        for mut row in m.rows_mut() {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            row.mapv_inplace(|v| v / norm);
        }
        m
    };
    let fq = random_unit(rng);
    let fk = random_unit(rng);
    let out = contrastive_loss_full(&fq, &fk, tau, symmetric)?;
    let eps = 1e-5;
    let mut worst = 0.0f64;
    for side in 0..2 {
        let (base, grad) = if side == 0 {
            (&fq, &out.grad_query)
        } else {
            (&fk, &out.grad_key)
        };
        for i in 0..n {
            for j in 0..dim {
                let mut plus = base.clone();
                plus[[i, j]] += eps;
                let mut minus = base.clone();
                minus[[i, j]] -= eps;
                let (lp, lm) = if side == 0 {
                    (
                        contrastive_loss(&plus, &fk, tau, symmetric)?.0,
                        contrastive_loss(&minus, &fk, tau, symmetric)?.0,
                    )
                } else {
                    (
                        contrastive_loss(&fq, &plus, tau, symmetric)?.0,
                        contrastive_loss(&fq, &minus, tau, symmetric)?.0,
                    )
                };
                let numeric = (lp - lm) / (2.0 * eps);
                worst = worst.max(rel_err(grad[[i, j]], numeric, 1e-3));
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use rand::SeedableRng;

    fn random_batch(px: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<Array3<f64>> {
        (0..n)
            .map(|_| Array3::from_shape_fn((3, px, px), |_| rng.gen_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn loss_level_check_is_tight() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = loss_grad_check(6, 8, 1.0, false, &mut rng).unwrap();
        assert!(err < 1e-6, "loss-level max rel err {err}");
        // sharper temperatures inflate higher-order finite-difference terms
        let err = loss_grad_check(6, 8, 0.07, true, &mut rng).unwrap();
        assert!(err < 1e-4, "sharp-temperature max rel err {err}");
    }

    #[test]
    fn tiny_model_full_check_passes() {
        let cfg = ModelConfig::tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut params = EncoderParams::<f64>::init(&cfg, &mut rng).unwrap();
        let queries = random_batch(cfg.input_px, 2, &mut rng);
        let keys = random_batch(cfg.input_px, 2, &mut rng);
        let report = grad_check(&mut params, &queries, &keys, false, 1e-4).unwrap();
        assert!(
            report.max_rel_err() < 1e-4,
            "max rel err {}: {:?}",
            report.max_rel_err(),
            report.groups
        );
    }

    #[test]
    fn learnable_tau_gradient_checks_too() {
        let mut cfg = ModelConfig::tiny();
        cfg.learnable_tau = true;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut params = EncoderParams::<f64>::init(&cfg, &mut rng).unwrap();
        let queries = random_batch(cfg.input_px, 2, &mut rng);
        let keys = random_batch(cfg.input_px, 2, &mut rng);
        let report = grad_check(&mut params, &queries, &keys, true, 1e-4).unwrap();
        let tau_group = report
            .groups
            .iter()
            .find(|(name, _)| name == "log_tau")
            .unwrap();
        assert!(tau_group.1 < 1e-4, "log_tau rel err {}", tau_group.1);
    }
}
