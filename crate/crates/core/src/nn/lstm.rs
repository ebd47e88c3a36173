//! LSTM cell, single timestep: sigmoid input/forget/output gates, tanh cell
//! candidate, `c = f.*c0 + i.*g`, `h = o.*tanh(c)`.
//!
//! The input-side kernels are stored input-major (`in_dim x hidden`) so a
//! sparse count vector projects by accumulating contiguous weight rows.

use super::{sigmoid, Mat, Scalar};
use crate::error::{Error, Result};

pub const GATE_INPUT: usize = 0;
pub const GATE_FORGET: usize = 1;
pub const GATE_CELL: usize = 2;
pub const GATE_OUTPUT: usize = 3;

/// One layer's parameters, gate order input/forget/cell/output.
/// `w_x[g]` is `in_dim x hidden` (input-major), `w_h[g]` is `hidden x hidden`
/// (one row per output unit), `b[g]` is `hidden`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayerParams<F> {
    pub w_x: [Mat<F>; 4],
    pub w_h: [Mat<F>; 4],
    pub b: [Vec<F>; 4],
}

impl<F: Scalar> LstmLayerParams<F> {
    pub fn zeros(in_dim: usize, hidden: usize) -> Self {
        LstmLayerParams {
            w_x: std::array::from_fn(|_| Mat::zeros(in_dim, hidden)),
            w_h: std::array::from_fn(|_| Mat::zeros(hidden, hidden)),
            b: std::array::from_fn(|_| vec![F::zero(); hidden]),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w_x[0].rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_x[0].cols()
    }

    pub fn map<G: Scalar>(&self, f: impl Fn(F) -> G + Copy) -> LstmLayerParams<G> {
        LstmLayerParams {
            w_x: std::array::from_fn(|g| self.w_x[g].map(f)),
            w_h: std::array::from_fn(|g| self.w_h[g].map(f)),
            b: std::array::from_fn(|g| self.b[g].iter().map(|&v| f(v)).collect()),
        }
    }
}

/// Batch input to one layer: dense rows, or sparse (index, value) rows for
/// the count-vector layer. Both produce identical results.
#[derive(Debug, Clone)]
pub enum LstmInput<F> {
    Dense(Mat<F>),
    Sparse { batch: Vec<Vec<(u32, F)>>, dim: usize },
}

impl<F: Scalar> LstmInput<F> {
    pub fn batch_size(&self) -> usize {
        match self {
            LstmInput::Dense(m) => m.rows(),
            LstmInput::Sparse { batch, .. } => batch.len(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            LstmInput::Dense(m) => m.cols(),
            LstmInput::Sparse { dim, .. } => *dim,
        }
    }
}

/// Cached forward state for one layer's backward pass.
#[derive(Debug, Clone)]
pub struct LstmTape<F> {
    pub input: LstmInput<F>,
    pub h0: Mat<F>,
    pub c0: Mat<F>,
    /// Post-activation gate values, order input/forget/cell/output.
    pub gates: [Mat<F>; 4],
    pub c: Mat<F>,
    pub tanh_c: Mat<F>,
}

/// Parameter gradients for one layer, same shapes as the parameters.
pub type LstmLayerGrads<F> = LstmLayerParams<F>;

fn check_dims<F: Scalar>(
    input: &LstmInput<F>,
    params: &LstmLayerParams<F>,
    h0: &Mat<F>,
    c0: &Mat<F>,
) -> Result<()> {
    let batch = input.batch_size();
    let hidden = params.hidden_dim();
    if input.dim() != params.in_dim() {
        return Err(Error::Shape(format!(
            "lstm input dim {} != parameter in_dim {}",
            input.dim(),
            params.in_dim()
        )));
    }
    if h0.rows() != batch || h0.cols() != hidden || c0.rows() != batch || c0.cols() != hidden {
        return Err(Error::Shape(format!(
            "lstm state shape ({}, {}) does not match batch {} x hidden {}",
            h0.rows(),
            h0.cols(),
            batch,
            hidden
        )));
    }
    if let LstmInput::Sparse { batch: rows, dim } = input {
        for row in rows {
            if let Some((idx, _)) = row.iter().find(|(idx, _)| *idx as usize >= *dim) {
                return Err(Error::Shape(format!(
                    "sparse input index {idx} out of range for dim {dim}"
                )));
            }
        }
    }
    Ok(())
}

/// Pre-activations for all four gates: `x W_x + h0 W_h^T + b`.
fn gate_preactivations<F: Scalar>(
    input: &LstmInput<F>,
    params: &LstmLayerParams<F>,
    h0: &Mat<F>,
) -> [Mat<F>; 4] {
    let batch = input.batch_size();
    let hidden = params.hidden_dim();
    std::array::from_fn(|g| {
        let mut pre = Mat::zeros(batch, hidden);
        for b in 0..batch {
            let row = pre.row_mut(b);
            row.copy_from_slice(&params.b[g]);
            match input {
                LstmInput::Dense(x) => {
                    let x_row = x.row(b);
                    for (d, &xv) in x_row.iter().enumerate() {
                        if xv != F::zero() {
                            let w_row = params.w_x[g].row(d);
                            for (r, &w) in row.iter_mut().zip(w_row) {
                                *r += xv * w;
                            }
                        }
                    }
                }
                LstmInput::Sparse { batch: rows, .. } => {
                    for &(idx, val) in &rows[b] {
                        let w_row = params.w_x[g].row(idx as usize);
                        for (r, &w) in row.iter_mut().zip(w_row) {
                            *r += val * w;
                        }
                    }
                }
            }
            let h_row = h0.row(b);
            for j in 0..hidden {
                let wh_row = params.w_h[g].row(j);
                let mut acc = F::zero();
                for (&h, &w) in h_row.iter().zip(wh_row) {
                    acc += h * w;
                }
                row[j] += acc;
            }
        }
        pre
    })
}

pub(crate) fn lstm_forward_with_state<F: Scalar>(
    input: LstmInput<F>,
    params: &LstmLayerParams<F>,
    h0: &Mat<F>,
    c0: &Mat<F>,
) -> Result<(Mat<F>, LstmTape<F>)> {
    check_dims(&input, params, h0, c0)?;
    let batch = input.batch_size();
    let hidden = params.hidden_dim();

    let pre = gate_preactivations(&input, params, h0);
    let mut gates: [Mat<F>; 4] = std::array::from_fn(|_| Mat::zeros(batch, hidden));
    for g in 0..4 {
        let act: fn(F) -> F = if g == GATE_CELL { F::tanh } else { sigmoid };
        for (out, &p) in gates[g]
            .as_mut_slice()
            .iter_mut()
            .zip(pre[g].as_slice().iter())
        {
            *out = act(p);
        }
    }

    let mut c = Mat::zeros(batch, hidden);
    let mut tanh_c = Mat::zeros(batch, hidden);
    let mut h = Mat::zeros(batch, hidden);
    for n in 0..batch * hidden {
        let cv = gates[GATE_FORGET].as_slice()[n] * c0.as_slice()[n]
            + gates[GATE_INPUT].as_slice()[n] * gates[GATE_CELL].as_slice()[n];
        c.as_mut_slice()[n] = cv;
        let t = cv.tanh();
        tanh_c.as_mut_slice()[n] = t;
        h.as_mut_slice()[n] = gates[GATE_OUTPUT].as_slice()[n] * t;
    }

    let tape = LstmTape {
        input,
        h0: h0.clone(),
        c0: c0.clone(),
        gates,
        c,
        tanh_c,
    };
    Ok((h, tape))
}

/// Single-timestep forward over a dense batch. `h0`/`c0` default to zeros
/// when `None`.
pub fn lstm_forward<F: Scalar>(
    x: &Mat<F>,
    params: &LstmLayerParams<F>,
    h0: Option<&Mat<F>>,
    c0: Option<&Mat<F>>,
) -> Result<(Mat<F>, LstmTape<F>)> {
    let batch = x.rows();
    let hidden = params.hidden_dim();
    let zero = Mat::zeros(batch, hidden);
    let h0 = h0.unwrap_or(&zero);
    let c0 = c0.unwrap_or(&zero);
    lstm_forward_with_state(LstmInput::Dense(x.clone()), params, h0, c0)
}

/// Single-timestep forward over sparse (index, value) rows; equal to
/// [`lstm_forward`] on the dense expansion.
pub fn lstm_forward_sparse<F: Scalar>(
    rows: Vec<Vec<(u32, F)>>,
    dim: usize,
    params: &LstmLayerParams<F>,
) -> Result<(Mat<F>, LstmTape<F>)> {
    let batch = rows.len();
    let hidden = params.hidden_dim();
    let zero = Mat::zeros(batch, hidden);
    lstm_forward_with_state(LstmInput::Sparse { batch: rows, dim }, params, &zero, &zero)
}

/// Backward pass. Accumulates parameter gradients and, when `need_dx` is
/// set, the gradient with respect to the layer input (dense). The input
/// gradient is skipped for the count-vector layer, whose input is data.
pub fn lstm_backward<F: Scalar>(
    dh: &Mat<F>,
    params: &LstmLayerParams<F>,
    tape: &LstmTape<F>,
    need_dx: bool,
) -> (LstmLayerGrads<F>, Option<Mat<F>>) {
    let batch = dh.rows();
    let hidden = dh.cols();
    let in_dim = params.in_dim();
    let one = F::one();

    // d(pre-activation) per gate
    let mut dpre: [Mat<F>; 4] = std::array::from_fn(|_| Mat::zeros(batch, hidden));
    for n in 0..batch * hidden {
        let i = tape.gates[GATE_INPUT].as_slice()[n];
        let f = tape.gates[GATE_FORGET].as_slice()[n];
        let g = tape.gates[GATE_CELL].as_slice()[n];
        let o = tape.gates[GATE_OUTPUT].as_slice()[n];
        let t = tape.tanh_c.as_slice()[n];
        let dh_n = dh.as_slice()[n];

        let dc = dh_n * o * (one - t * t);
        dpre[GATE_OUTPUT].as_mut_slice()[n] = dh_n * t * o * (one - o);
        dpre[GATE_FORGET].as_mut_slice()[n] = dc * tape.c0.as_slice()[n] * f * (one - f);
        dpre[GATE_INPUT].as_mut_slice()[n] = dc * g * i * (one - i);
        dpre[GATE_CELL].as_mut_slice()[n] = dc * i * (one - g * g);
    }

    let mut grads = LstmLayerGrads::zeros(in_dim, hidden);
    for g in 0..4 {
        for b in 0..batch {
            let dpre_row = dpre[g].row(b);
            match &tape.input {
                LstmInput::Dense(x) => {
                    let x_row = x.row(b);
                    for (d, &xv) in x_row.iter().enumerate() {
                        if xv != F::zero() {
                            let w_row = grads.w_x[g].row_mut(d);
                            for (w, &dp) in w_row.iter_mut().zip(dpre_row) {
                                *w += xv * dp;
                            }
                        }
                    }
                }
                LstmInput::Sparse { batch: rows, .. } => {
                    for &(idx, val) in &rows[b] {
                        let w_row = grads.w_x[g].row_mut(idx as usize);
                        for (w, &dp) in w_row.iter_mut().zip(dpre_row) {
                            *w += val * dp;
                        }
                    }
                }
            }
            let h_row = tape.h0.row(b);
            for (j, &dp) in dpre_row.iter().enumerate() {
                if dp != F::zero() {
                    let wh_row = grads.w_h[g].row_mut(j);
                    for (w, &h) in wh_row.iter_mut().zip(h_row) {
                        *w += dp * h;
                    }
                }
            }
            for (bias, &dp) in grads.b[g].iter_mut().zip(dpre_row) {
                *bias += dp;
            }
        }
    }

    let dx = need_dx.then(|| {
        let mut dx = Mat::zeros(batch, in_dim);
        for g in 0..4 {
            for b in 0..batch {
                let dpre_row = dpre[g].row(b);
                let dx_row = dx.row_mut(b);
                for (d, out) in dx_row.iter_mut().enumerate() {
                    let w_row = params.w_x[g].row(d);
                    let mut acc = F::zero();
                    for (&w, &dp) in w_row.iter().zip(dpre_row) {
                        acc += w * dp;
                    }
                    *out += acc;
                }
            }
        }
        dx
    });

    (grads, dx)
}
