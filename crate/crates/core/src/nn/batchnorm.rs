//! Batch normalization over the hidden features.
//!
//! Training normalizes by the batch mean and population variance and updates
//! the running statistics; evaluation normalizes by the frozen running
//! statistics, making the op a deterministic affine map.

use super::{cast, Mat, Mode, Scalar};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams<F> {
    pub gamma: Vec<F>,
    pub beta: Vec<F>,
    pub running_mean: Vec<F>,
    pub running_var: Vec<F>,
}

impl<F: Scalar> BatchNormParams<F> {
    pub fn new(dim: usize) -> Self {
        BatchNormParams {
            gamma: vec![F::one(); dim],
            beta: vec![F::zero(); dim],
            running_mean: vec![F::zero(); dim],
            running_var: vec![F::one(); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    pub fn map<G: Scalar>(&self, f: impl Fn(F) -> G + Copy) -> BatchNormParams<G> {
        BatchNormParams {
            gamma: self.gamma.iter().map(|&v| f(v)).collect(),
            beta: self.beta.iter().map(|&v| f(v)).collect(),
            running_mean: self.running_mean.iter().map(|&v| f(v)).collect(),
            running_var: self.running_var.iter().map(|&v| f(v)).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BatchNormTape<F> {
    pub mode: Mode,
    pub x_hat: Mat<F>,
    pub inv_std: Vec<F>,
}

/// Forward pass. Training mode requires a batch of at least 2 rows and
/// mutates the running statistics; eval mode leaves them untouched.
pub fn batchnorm_forward<F: Scalar>(
    x: &Mat<F>,
    params: &mut BatchNormParams<F>,
    mode: Mode,
    momentum: f64,
    eps: f64,
) -> Result<(Mat<F>, BatchNormTape<F>)> {
    let (batch, dim) = (x.rows(), x.cols());
    if dim != params.dim() {
        return Err(Error::Shape(format!(
            "batchnorm input has {dim} features, parameters have {}",
            params.dim()
        )));
    }
    if mode == Mode::Train && batch < 2 {
        return Err(Error::Domain(
            "batch normalization cannot train on a batch of fewer than 2 rows".into(),
        ));
    }
    let eps = cast::<F>(eps);

    let (mean, var) = match mode {
        Mode::Train => {
            let inv_b = F::one() / cast::<F>(batch as f64);
            let mut mean = vec![F::zero(); dim];
            for b in 0..batch {
                for (m, &v) in mean.iter_mut().zip(x.row(b)) {
                    *m += v;
                }
            }
            for m in &mut mean {
                *m *= inv_b;
            }
            let mut var = vec![F::zero(); dim];
            for b in 0..batch {
                for ((vv, &v), &m) in var.iter_mut().zip(x.row(b)).zip(&mean) {
                    let d = v - m;
                    *vv += d * d;
                }
            }
            for v in &mut var {
                *v *= inv_b;
            }
            let mom = cast::<F>(momentum);
            let keep = F::one() - mom;
            for (r, &m) in params.running_mean.iter_mut().zip(&mean) {
                *r = keep * *r + mom * m;
            }
            for (r, &v) in params.running_var.iter_mut().zip(&var) {
                *r = keep * *r + mom * v;
            }
            (mean, var)
        }
        Mode::Eval => (params.running_mean.clone(), params.running_var.clone()),
    };

    let inv_std: Vec<F> = var.iter().map(|&v| F::one() / (v + eps).sqrt()).collect();
    let mut x_hat = Mat::zeros(batch, dim);
    let mut y = Mat::zeros(batch, dim);
    for b in 0..batch {
        let x_row = x.row(b);
        let xh_row = x_hat.row_mut(b);
        let y_row = y.row_mut(b);
        for j in 0..dim {
            let xh = (x_row[j] - mean[j]) * inv_std[j];
            xh_row[j] = xh;
            y_row[j] = params.gamma[j] * xh + params.beta[j];
        }
    }

    let tape = BatchNormTape {
        mode,
        x_hat,
        inv_std,
    };
    Ok((y, tape))
}

/// Backward pass: gradients for the input, gamma, and beta.
pub fn batchnorm_backward<F: Scalar>(
    dy: &Mat<F>,
    params: &BatchNormParams<F>,
    tape: &BatchNormTape<F>,
) -> (Mat<F>, Vec<F>, Vec<F>) {
    let (batch, dim) = (dy.rows(), dy.cols());
    let mut dgamma = vec![F::zero(); dim];
    let mut dbeta = vec![F::zero(); dim];
    for b in 0..batch {
        let dy_row = dy.row(b);
        let xh_row = tape.x_hat.row(b);
        for j in 0..dim {
            dgamma[j] += dy_row[j] * xh_row[j];
            dbeta[j] += dy_row[j];
        }
    }

    let mut dx = Mat::zeros(batch, dim);
    match tape.mode {
        Mode::Train => {
            // dx = inv_std/B * (B*dxh - sum(dxh) - x_hat * sum(dxh*x_hat))
            let mut sum_dxh = vec![F::zero(); dim];
            let mut sum_dxh_xh = vec![F::zero(); dim];
            for b in 0..batch {
                let dy_row = dy.row(b);
                let xh_row = tape.x_hat.row(b);
                for j in 0..dim {
                    let dxh = dy_row[j] * params.gamma[j];
                    sum_dxh[j] += dxh;
                    sum_dxh_xh[j] += dxh * xh_row[j];
                }
            }
            let b_f = cast::<F>(batch as f64);
            for b in 0..batch {
                let dy_row = dy.row(b);
                let xh_row = tape.x_hat.row(b);
                let dx_row = dx.row_mut(b);
                for j in 0..dim {
                    let dxh = dy_row[j] * params.gamma[j];
                    dx_row[j] = tape.inv_std[j] / b_f
                        * (b_f * dxh - sum_dxh[j] - xh_row[j] * sum_dxh_xh[j]);
                }
            }
        }
        Mode::Eval => {
            // frozen stats reduce the op to an affine map
            for b in 0..batch {
                let dy_row = dy.row(b);
                let dx_row = dx.row_mut(b);
                for j in 0..dim {
                    dx_row[j] = dy_row[j] * params.gamma[j] * tape.inv_std[j];
                }
            }
        }
    }
    (dx, dgamma, dbeta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_rows_normalize_to_beta() {
        let mut params = BatchNormParams::<f64>::new(2);
        params.gamma = vec![3.0, -2.0];
        let x = Mat::from_rows(&[vec![5.0, 1.0], vec![5.0, 1.0], vec![5.0, 1.0]]);
        let (y, _) = batchnorm_forward(&x, &mut params, Mode::Train, 0.1, 1e-5).unwrap();
        assert!(y.as_slice().iter().all(|&v| v.abs() < 1e-9));
    }

    #[test]
    fn two_row_column_normalizes_to_unit_deviations() {
        let mut params = BatchNormParams::<f64>::new(1);
        let x = Mat::from_rows(&[vec![1.0], vec![3.0]]);
        let (y, _) = batchnorm_forward(&x, &mut params, Mode::Train, 0.1, 1e-12).unwrap();
        // mean 2, population variance 1
        assert!((y.get(0, 0) - (-1.0)).abs() < 1e-6);
        assert!((y.get(1, 0) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn train_batch_of_one_is_rejected() {
        let mut params = BatchNormParams::<f32>::new(1);
        let x = Mat::from_rows(&[vec![1.0]]);
        assert!(matches!(
            batchnorm_forward(&x, &mut params, Mode::Train, 0.1, 1e-5),
            Err(Error::Domain(_))
        ));
        // eval mode is fine with one row
        assert!(batchnorm_forward(&x, &mut params, Mode::Eval, 0.1, 1e-5).is_ok());
    }

    #[test]
    fn eval_mode_is_affine_and_leaves_running_stats_alone() {
        let mut params = BatchNormParams::<f64>::new(1);
        params.running_mean = vec![2.0];
        params.running_var = vec![4.0];
        params.gamma = vec![3.0];
        params.beta = vec![1.0];
        let before = params.clone();
        let x = Mat::from_rows(&[vec![4.0], vec![0.0]]);
        let (y, _) = batchnorm_forward(&x, &mut params, Mode::Eval, 0.1, 0.0).unwrap();
        assert!((y.get(0, 0) - (3.0 * (4.0 - 2.0) / 2.0 + 1.0)).abs() < 1e-12);
        assert!((y.get(1, 0) - (3.0 * (0.0 - 2.0) / 2.0 + 1.0)).abs() < 1e-12);
        assert_eq!(params, before);
    }

    #[test]
    fn running_stats_follow_exponential_moving_average() {
        let mut params = BatchNormParams::<f64>::new(1);
        let x = Mat::from_rows(&[vec![1.0], vec![3.0]]);
        batchnorm_forward(&x, &mut params, Mode::Train, 0.1, 1e-5).unwrap();
        assert!((params.running_mean[0] - 0.2).abs() < 1e-12); // 0.9*0 + 0.1*2
        assert!((params.running_var[0] - (0.9 + 0.1)).abs() < 1e-12); // 0.9*1 + 0.1*1
        assert!(params.running_var.iter().all(|&v| v >= 0.0));
    }
}
