//! Inverted dropout: kept units are scaled by 1/(1-p) during training so
//! evaluation is the exact identity.

use rand::Rng;

use super::{cast, Mat, Mode, Scalar};
use crate::error::{Error, Result};

/// Multipliers applied in the forward pass; `None` means identity (eval mode
/// or p = 0), so backward passes gradients through unchanged.
#[derive(Debug, Clone)]
pub struct DropoutTape<F> {
    pub multiplier: Option<Mat<F>>,
}

pub fn dropout_forward<F: Scalar, R: Rng>(
    y: &Mat<F>,
    p: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<(Mat<F>, DropoutTape<F>)> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Domain(format!(
            "dropout probability must be in [0, 1), got {p}"
        )));
    }
    if mode == Mode::Eval || p == 0.0 {
        return Ok((y.clone(), DropoutTape { multiplier: None }));
    }
    let scale = cast::<F>(1.0 / (1.0 - p));
    let mut multiplier = Mat::zeros(y.rows(), y.cols());
    for m in multiplier.as_mut_slice() {
        if rng.gen::<f64>() >= p {
            *m = scale;
        }
    }
    let mut z = y.clone();
    for (zv, &m) in z.as_mut_slice().iter_mut().zip(multiplier.as_slice()) {
        *zv *= m;
    }
    Ok((z, DropoutTape {
        multiplier: Some(multiplier),
    }))
}

pub fn dropout_backward<F: Scalar>(dz: &Mat<F>, tape: &DropoutTape<F>) -> Mat<F> {
    match &tape.multiplier {
        None => dz.clone(),
        Some(mult) => {
            let mut dy = dz.clone();
            for (d, &m) in dy.as_mut_slice().iter_mut().zip(mult.as_slice()) {
                *d *= m;
            }
            dy
        }
    }
}
