//! Fused softmax + cross-entropy via the log-sum-exp route.

use super::scalar::Scalar;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Mean negative log probability of the true class, plus the softmax
/// probabilities. Stable for arbitrary finite logits.
pub fn softmax_cross_entropy<S: Scalar>(
    logits: &Tensor<S>,
    labels: &[usize],
) -> Result<(f64, Tensor<S>)> {
    let (loss, probs, _) = softmax_cross_entropy_impl(logits, labels, false)?;
    Ok((loss, probs))
}

/// Same, also returning `d loss / d logits` for the mean-reduced loss.
pub fn softmax_cross_entropy_with_grad<S: Scalar>(
    logits: &Tensor<S>,
    labels: &[usize],
) -> Result<(f64, Tensor<S>, Tensor<S>)> {
    let (loss, probs, grad) = softmax_cross_entropy_impl(logits, labels, true)?;
    Ok((loss, probs, grad.expect("grad requested")))
}

fn softmax_cross_entropy_impl<S: Scalar>(
    logits: &Tensor<S>,
    labels: &[usize],
    want_grad: bool,
) -> Result<(f64, Tensor<S>, Option<Tensor<S>>)> {
    let (b, k) = match logits.shape() {
        [b, k] => (*b, *k),
        other => {
            return Err(Error::shape(format!(
                "softmax_cross_entropy expects [batch, K] logits, got {other:?}"
            )))
        }
    };
    if labels.len() != b {
        return Err(Error::shape(format!(
            "{} labels for batch of {b}",
            labels.len()
        )));
    }
    for (pos, &label) in labels.iter().enumerate() {
        if label >= k {
            return Err(Error::Index {
                position: pos,
                detail: format!("label {label} out of range for {k} classes"),
            });
        }
    }

    let mut probs = logits.clone();
    let mut grad = want_grad.then(|| Tensor::zeros(&[b, k]));
    let mut total = 0.0f64;
    for (row_idx, row) in probs.data_mut().chunks_exact_mut(k).enumerate() {
        let mut max = row[0];
        for &v in row.iter() {
            max = max.max(v);
        }
        let mut sum = S::ZERO;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        let log_sum = sum.to_f64().ln();
        let label = labels[row_idx];
        let shifted_true = row[label].to_f64().ln(); // = logit - max
        total += log_sum - shifted_true;
        for v in row.iter_mut() {
            *v = *v / sum;
        }
        if let Some(g) = grad.as_mut() {
            let grow = &mut g.data_mut()[row_idx * k..(row_idx + 1) * k];
            let inv_b = S::from_f64(1.0 / b as f64);
            for (gv, &pv) in grow.iter_mut().zip(row.iter()) {
                *gv = pv * inv_b;
            }
            grow[label] -= inv_b;
        }
    }
    Ok((total / b as f64, probs, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_over_285_classes() {
        let logits = Tensor::<f64>::zeros(&[4, 285]);
        let (loss, probs) = softmax_cross_entropy(&logits, &[0, 17, 141, 284]).unwrap();
        assert!((loss - (285.0f64).ln()).abs() < 1e-12, "loss {loss}");
        for &p in probs.data() {
            assert!((p - 1.0 / 285.0).abs() < 1e-12);
        }
    }

    #[test]
    fn saturated_logit_wins() {
        let mut logits = Tensor::<f64>::zeros(&[1, 5]);
        logits.data_mut()[2] = 1000.0;
        let (loss, probs) = softmax_cross_entropy(&logits, &[2]).unwrap();
        assert!(loss.abs() < 1e-9);
        assert!((probs.data()[2] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rows_sum_to_one() {
        let logits =
            Tensor::<f32>::from_vec(&[2, 3], vec![3.0, -2.0, 0.5, 100.0, 99.0, -100.0]).unwrap();
        let (_, probs) = softmax_cross_entropy(&logits, &[0, 1]).unwrap();
        for row in probs.data().chunks_exact(3) {
            let s: f32 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn label_out_of_range_reports_position() {
        let logits = Tensor::<f32>::zeros(&[3, 4]);
        let err = softmax_cross_entropy(&logits, &[0, 9, 1]).unwrap_err();
        match err {
            Error::Index { position, .. } => assert_eq!(position, 1),
            other => panic!("expected index error, got {other}"),
        }
    }

    #[test]
    fn grad_is_probs_minus_onehot_over_batch() {
        let logits =
            Tensor::<f64>::from_vec(&[2, 3], vec![0.3, -0.1, 0.7, 1.0, 2.0, 3.0]).unwrap();
        let (_, probs, grad) = softmax_cross_entropy_with_grad(&logits, &[2, 0]).unwrap();
        for i in 0..2 {
            for j in 0..3 {
                let onehot = if (i == 0 && j == 2) || (i == 1 && j == 0) { 1.0 } else { 0.0 };
                let want = (probs.data()[i * 3 + j] - onehot) / 2.0;
                assert!((grad.data()[i * 3 + j] - want).abs() < 1e-12);
            }
        }
    }
}
