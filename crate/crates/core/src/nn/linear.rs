//! Fully-connected classification head and the ReLU activation.

use super::{Mat, Scalar};
use crate::error::{Error, Result};

/// Head parameters: `weight` is `out_dim x hidden` (a row per class),
/// `bias` is `out_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct FcParams<F> {
    pub weight: Mat<F>,
    pub bias: Vec<F>,
}

impl<F: Scalar> FcParams<F> {
    pub fn zeros(out_dim: usize, hidden: usize) -> Self {
        FcParams {
            weight: Mat::zeros(out_dim, hidden),
            bias: vec![F::zero(); out_dim],
        }
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn map<G: Scalar>(&self, f: impl Fn(F) -> G + Copy) -> FcParams<G> {
        FcParams {
            weight: self.weight.map(f),
            bias: self.bias.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// `logits = a W^T + bias`.
pub fn fc_forward<F: Scalar>(a: &Mat<F>, params: &FcParams<F>) -> Result<Mat<F>> {
    if a.cols() != params.weight.cols() {
        return Err(Error::Shape(format!(
            "fc input has {} features, weight expects {}",
            a.cols(),
            params.weight.cols()
        )));
    }
    let (batch, out_dim) = (a.rows(), params.out_dim());
    let mut logits = Mat::zeros(batch, out_dim);
    for b in 0..batch {
        let a_row = a.row(b);
        let out = logits.row_mut(b);
        for (k, o) in out.iter_mut().enumerate() {
            let w_row = params.weight.row(k);
            let mut acc = params.bias[k];
            for (&w, &av) in w_row.iter().zip(a_row) {
                acc += w * av;
            }
            *o = acc;
        }
    }
    Ok(logits)
}

/// Gradients for the weight, bias, and input.
pub fn fc_backward<F: Scalar>(
    dlogits: &Mat<F>,
    a: &Mat<F>,
    params: &FcParams<F>,
) -> (FcParams<F>, Mat<F>) {
    let (batch, out_dim, hidden) = (a.rows(), params.out_dim(), a.cols());
    let mut grads = FcParams::zeros(out_dim, hidden);
    let mut da = Mat::zeros(batch, hidden);
    for b in 0..batch {
        let a_row = a.row(b);
        let d_row = dlogits.row(b);
        let da_row = da.row_mut(b);
        for (k, &d) in d_row.iter().enumerate() {
            grads.bias[k] += d;
            let gw_row = grads.weight.row_mut(k);
            let w_row = params.weight.row(k);
            for j in 0..hidden {
                gw_row[j] += d * a_row[j];
                da_row[j] += d * w_row[j];
            }
        }
    }
    (grads, da)
}

/// Elementwise `max(z, 0)`.
pub fn relu<F: Scalar>(z: &Mat<F>) -> Mat<F> {
    let mut out = z.clone();
    for v in out.as_mut_slice() {
        if *v < F::zero() {
            *v = F::zero();
        }
    }
    out
}

/// Gradient passes where the forward input was positive.
pub fn relu_backward<F: Scalar>(dout: &Mat<F>, input: &Mat<F>) -> Mat<F> {
    let mut dz = dout.clone();
    for (d, &z) in dz.as_mut_slice().iter_mut().zip(input.as_slice()) {
        if z <= F::zero() {
            *d = F::zero();
        }
    }
    dz
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weight_head_emits_bias() {
        let mut params = FcParams::<f64>::zeros(2, 3);
        params.bias = vec![1.0, -1.0];
        let a = Mat::from_rows(&[vec![0.4, 0.5, 0.6], vec![7.0, 8.0, 9.0]]);
        let logits = fc_forward(&a, &params).unwrap();
        for b in 0..2 {
            assert_eq!(logits.row(b), &[1.0, -1.0]);
        }
    }

    #[test]
    fn identity_like_weight_copies_inputs() {
        let mut params = FcParams::<f64>::zeros(2, 2);
        params.weight.set(0, 0, 1.0);
        params.weight.set(1, 1, 1.0);
        let a = Mat::from_rows(&[vec![0.25, -0.75]]);
        let logits = fc_forward(&a, &params).unwrap();
        assert_eq!(logits.row(0), &[0.25, -0.75]);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let params = FcParams::<f32>::zeros(2, 3);
        let a = Mat::zeros(1, 4);
        assert!(matches!(
            fc_forward(&a, &params),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn relu_clamps_negatives() {
        let z = Mat::from_rows(&[vec![-1.0f32, 0.0, 2.0]]);
        assert_eq!(relu(&z).row(0), &[0.0, 0.0, 2.0]);
        let all_negative = Mat::from_rows(&[vec![-3.0f32, -0.5]]);
        assert!(relu(&all_negative).as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn relu_backward_gates_on_input_sign() {
        let z = Mat::from_rows(&[vec![-1.0f64, 0.0, 2.0]]);
        let d = Mat::from_rows(&[vec![5.0f64, 5.0, 5.0]]);
        assert_eq!(relu_backward(&d, &z).row(0), &[0.0, 0.0, 5.0]);
    }
}
