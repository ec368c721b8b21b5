//! Contrastive objective over paired embeddings.
//!
//! Cross-entropy of the row-wise softmax over the temperature-scaled
//! similarity matrix `S = Fq Fk^T / tau`, with positives on the diagonal. The
//! optional symmetric form averages in the column-wise (key-to-query) term.
//! Returns analytic gradients with respect to both embedding sets and the
//! temperature.

use ndarray::Array2;

use super::Real;
use crate::error::{Error, Result};

pub struct LossOutput<F> {
    pub loss: F,
    pub grad_query: Array2<F>,
    pub grad_key: Array2<F>,
    /// d loss / d log(tau); zero-cost to carry, used when tau is learnable.
    pub grad_log_tau: F,
}

/// Loss plus gradients w.r.t. the query and key embeddings.
pub fn contrastive_loss<F: Real>(
    queries: &Array2<F>,
    keys: &Array2<F>,
    tau: F,
    symmetric: bool,
) -> Result<(F, Array2<F>, Array2<F>)> {
    contrastive_loss_full(queries, keys, tau, symmetric)
        .map(|out| (out.loss, out.grad_query, out.grad_key))
}

/// Full loss output including the temperature gradient.
pub fn contrastive_loss_full<F: Real>(
    queries: &Array2<F>,
    keys: &Array2<F>,
    tau: F,
    symmetric: bool,
) -> Result<LossOutput<F>> {
    if tau <= F::zero() {
        return Err(Error::InvalidTemperature(tau.to_f64().unwrap_or(f64::NAN)));
    }
    let n = queries.nrows();
    if n == 0 || keys.nrows() != n || queries.ncols() != keys.ncols() {
        return Err(Error::DimMismatch(format!(
            "query set {:?} and key set {:?} must be same-shaped and non-empty",
            queries.shape(),
            keys.shape()
        )));
    }
    let inv_n = F::one() / F::from_usize(n).unwrap();
    let scores = queries.dot(&keys.t()).mapv(|v| v / tau);

    // row direction: each query classifies its own key
    let (loss_row, mut d_scores) = softmax_ce_rows(&scores, inv_n);
    let mut loss = loss_row;
    if symmetric {
        let (loss_col, d_scores_col) = softmax_ce_rows(&scores.t().to_owned(), inv_n);
        let half = F::from_f64(0.5).unwrap();
        loss = half * (loss_row + loss_col);
        d_scores.zip_mut_with(&d_scores_col.t().to_owned(), |a, &b| {
            *a = half * (*a + b);
        });
    }

    // d loss / d log tau = -sum(dL/dS * S): S carries the 1/tau already
    let mut grad_log_tau = F::zero();
    for (ds, s) in d_scores.iter().zip(scores.iter()) {
        grad_log_tau -= *ds * *s;
    }

    let inv_tau = F::one() / tau;
    let grad_query = d_scores.dot(keys).mapv(|v| v * inv_tau);
    let grad_key = d_scores.t().dot(queries).mapv(|v| v * inv_tau);
    Ok(LossOutput {
        loss,
        grad_query,
        grad_key,
        grad_log_tau,
    })
}

/// Mean cross-entropy with diagonal targets over matrix rows; returns the
/// gradient w.r.t. the logits, `(P - I) / n`.
fn softmax_ce_rows<F: Real>(scores: &Array2<F>, inv_n: F) -> (F, Array2<F>) {
    let n = scores.nrows();
    let mut grad = Array2::zeros(scores.raw_dim());
    let mut loss = F::zero();
    for i in 0..n {
        let row = scores.row(i);
        let mut max = row[0];
        for &v in row.iter() {
            if v > max {
                max = v;
            }
        }
        let mut sum = F::zero();
        for &v in row.iter() {
            sum += (v - max).exp();
        }
        let log_sum = sum.ln() + max;
        loss += (log_sum - row[i]) * inv_n;
        for j in 0..n {
            let p = (row[j] - max).exp() / sum;
            let target = if i == j { F::one() } else { F::zero() };
            grad[[i, j]] = (p - target) * inv_n;
        }
    }
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr2, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_unit_rows(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0..1.0));
        for mut row in m.rows_mut() {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            row.mapv_inplace(|v| v / norm);
        }
        m
    }

    #[test]
    fn all_equal_similarities_give_ln_n() {
        for n in [1usize, 2, 8, 64] {
            let mut fq = Array2::<f64>::zeros((n, 4));
            fq.column_mut(0).fill(1.0);
            let fk = fq.clone();
            let (loss, _, _) = contrastive_loss(&fq, &fk, 0.07, false).unwrap();
            assert!(
                (loss - (n as f64).ln()).abs() < 1e-9,
                "n={n}: loss {loss} vs ln n {}",
                (n as f64).ln()
            );
        }
    }

    #[test]
    fn single_pair_has_zero_loss() {
        let fq = arr2(&[[1.0f64, 0.0]]);
        let fk = arr2(&[[0.0, 1.0]]);
        let (loss, _, _) = contrastive_loss(&fq, &fk, 1.0, false).unwrap();
        assert!(loss.abs() < 1e-12);
    }

    #[test]
    fn orthonormal_two_pair_value() {
        let fq = arr2(&[[1.0, 0.0], [0.0, 1.0]]);
        let (loss, _, _) = contrastive_loss(&fq, &fq.clone(), 1.0, false).unwrap();
        let expected = (1.0 + (-1.0f64).exp()).ln();
        assert!((loss - expected).abs() < 1e-9, "loss {loss} vs {expected}");
        // symmetric form has the same value here by symmetry of S
        let (sym, _, _) = contrastive_loss(&fq, &fq.clone(), 1.0, true).unwrap();
        assert!((sym - expected).abs() < 1e-9);
    }

    #[test]
    fn loss_is_nonnegative_and_permutation_invariant() {
        let fq = random_unit_rows(6, 8, 1);
        let fk = random_unit_rows(6, 8, 2);
        let (loss, _, _) = contrastive_loss(&fq, &fk, 0.1, false).unwrap();
        assert!(loss >= 0.0);
        // same permutation on both sides leaves the loss unchanged
        let perm = [3usize, 0, 5, 1, 4, 2];
        let pq = Array2::from_shape_fn((6, 8), |(i, j)| fq[[perm[i], j]]);
        let pk = Array2::from_shape_fn((6, 8), |(i, j)| fk[[perm[i], j]]);
        let (ploss, _, _) = contrastive_loss(&pq, &pk, 0.1, false).unwrap();
        assert!((loss - ploss).abs() < 1e-12);
    }

    #[test]
    fn invalid_temperature_rejected() {
        let fq = random_unit_rows(2, 4, 3);
        assert!(matches!(
            contrastive_loss(&fq, &fq.clone(), 0.0, false),
            Err(Error::InvalidTemperature(_))
        ));
        assert!(matches!(
            contrastive_loss(&fq, &fq.clone(), -1.0, false),
            Err(Error::InvalidTemperature(_))
        ));
    }

    #[test]
    fn gradients_match_finite_differences_on_embeddings() {
        // independent oracle: central differences through the loss value only
        for symmetric in [false, true] {
            let fq = random_unit_rows(5, 6, 10);
            let fk = random_unit_rows(5, 6, 11);
            let tau = 0.3;
            let out = contrastive_loss_full(&fq, &fk, tau, symmetric).unwrap();
            let eps = 1e-6;
            let mut max_rel = 0.0f64;
            for (target, grad) in [(&fq, &out.grad_query), (&fk, &out.grad_key)] {
                for i in 0..target.nrows() {
                    for j in 0..target.ncols() {
                        let mut plus = target.clone();
                        plus[[i, j]] += eps;
                        let mut minus = target.clone();
                        minus[[i, j]] -= eps;
                        let (lp, lm) = if std::ptr::eq(target, &fq) {
                            (
                                contrastive_loss(&plus, &fk, tau, symmetric).unwrap().0,
                                contrastive_loss(&minus, &fk, tau, symmetric).unwrap().0,
                            )
                        } else {
                            (
                                contrastive_loss(&fq, &plus, tau, symmetric).unwrap().0,
                                contrastive_loss(&fq, &minus, tau, symmetric).unwrap().0,
                            )
                        };
                        let numeric = (lp - lm) / (2.0 * eps);
                        let analytic = grad[[i, j]];
                        let rel = (analytic - numeric).abs()
                            / analytic.abs().max(numeric.abs()).max(1e-6);
                        max_rel = max_rel.max(rel);
                    }
                }
            }
            assert!(max_rel < 1e-6, "symmetric={symmetric}: max rel err {max_rel}");
        }
    }

    #[test]
    fn tau_gradient_matches_finite_differences() {
        let fq = random_unit_rows(4, 6, 20);
        let fk = random_unit_rows(4, 6, 21);
        let log_tau = (0.2f64).ln();
        let out = contrastive_loss_full(&fq, &fk, log_tau.exp(), true).unwrap();
        let eps = 1e-6;
        let lp = contrastive_loss(&fq, &fk, (log_tau + eps).exp(), true).unwrap().0;
        let lm = contrastive_loss(&fq, &fk, (log_tau - eps).exp(), true).unwrap().0;
        let numeric = (lp - lm) / (2.0 * eps);
        assert!(
            (out.grad_log_tau - numeric).abs() < 1e-7,
            "analytic {} vs numeric {numeric}",
            out.grad_log_tau
        );
    }

    #[test]
    fn separated_pairs_at_small_tau_have_near_zero_gradient() {
        let fq = arr2(&[[1.0f64, 0.0], [0.0, 1.0]]);
        let out = contrastive_loss_full(&fq, &fq.clone(), 0.05, false).unwrap();
        assert!(out.loss < 1e-8);
        for g in out.grad_query.iter().chain(out.grad_key.iter()) {
            assert!(g.abs() < 1e-7, "gradient {g} not near zero");
        }
    }
}
