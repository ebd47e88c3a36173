//! Softmax cross-entropy over two classes, computed with log-sum-exp for
//! numerical stability.

use super::{cast, Mat, Scalar};
use crate::error::{Error, Result};

/// Mean cross-entropy loss of the batch and the gradient with respect to the
/// logits, `(softmax - onehot) / batch`.
pub fn softmax_cross_entropy<F: Scalar>(logits: &Mat<F>, labels: &[u8]) -> Result<(F, Mat<F>)> {
    let (batch, classes) = (logits.rows(), logits.cols());
    if labels.len() != batch {
        return Err(Error::Shape(format!(
            "{} labels for a batch of {batch} logits rows",
            labels.len()
        )));
    }
    if batch == 0 {
        return Err(Error::Domain("empty batch".into()));
    }
    if let Some(bad) = labels.iter().find(|&&l| usize::from(l) >= classes) {
        return Err(Error::Domain(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    if logits.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite logits".into()));
    }

    let inv_b = F::one() / cast::<F>(batch as f64);
    let mut dlogits = Mat::zeros(batch, classes);
    let mut loss = F::zero();
    for b in 0..batch {
        let row = logits.row(b);
        let max = row.iter().copied().fold(F::neg_infinity(), F::max);
        let mut sum = F::zero();
        for &z in row {
            sum += (z - max).exp();
        }
        let lse = max + sum.ln();
        loss += (lse - row[usize::from(labels[b])]) * inv_b;
        let d_row = dlogits.row_mut(b);
        for (k, &z) in row.iter().enumerate() {
            let p = (z - lse).exp();
            d_row[k] = p * inv_b;
        }
        d_row[usize::from(labels[b])] -= inv_b;
    }
    Ok((loss, dlogits))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_cost_ln_two() {
        let logits = Mat::from_rows(&[vec![0.0f64, 0.0]]);
        let (loss, dlogits) = softmax_cross_entropy(&logits, &[1]).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((dlogits.get(0, 0) - 0.5).abs() < 1e-12);
        assert!((dlogits.get(0, 1) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_prediction_has_tiny_loss() {
        // high-precision scalar oracle: log(1 + e^-20)
        let logits = Mat::from_rows(&[vec![10.0f64, -10.0]]);
        let (loss, _) = softmax_cross_entropy(&logits, &[0]).unwrap();
        let expected = (-20.0f64).exp().ln_1p();
        assert!((loss - expected).abs() < 1e-15);
        assert!((loss - 2.061e-9).abs() < 1e-11);
    }

    #[test]
    fn softmax_rows_are_probabilities() {
        let logits = Mat::from_rows(&[vec![3.0f64, -1.5], vec![-40.0, 42.0], vec![0.1, 0.1]]);
        let labels = [0u8, 1, 0];
        let (_, dlogits) = softmax_cross_entropy(&logits, &labels).unwrap();
        let batch = 3.0;
        for b in 0..3 {
            // recover softmax from dlogits: p = d*B + onehot
            let mut sum = 0.0;
            for k in 0..2 {
                let onehot = if k == usize::from(labels[b]) { 1.0 } else { 0.0 };
                let p = dlogits.get(b, k) * batch + onehot;
                assert!(p >= 0.0);
                sum += p;
            }
            assert!((sum - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let logits = Mat::from_rows(&[vec![f64::NAN, 0.0]]);
        assert!(matches!(
            softmax_cross_entropy(&logits, &[0]),
            Err(Error::Numeric(_))
        ));
        let logits = Mat::from_rows(&[vec![0.0f64, 0.0]]);
        assert!(softmax_cross_entropy(&logits, &[2]).is_err());
        assert!(softmax_cross_entropy(&logits, &[0, 1]).is_err());
    }
}
