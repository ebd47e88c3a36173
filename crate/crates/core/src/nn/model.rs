//! The full classifier: count vector -> LSTM (single timestep, optionally
//! stacked) -> batch norm -> ReLU -> dropout -> fully-connected head with
//! two output logits.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;

use super::{
    batchnorm_backward, batchnorm_forward, dropout_backward, dropout_forward, fc_backward,
    fc_forward, lstm_backward, relu, relu_backward, BatchNormParams, BatchNormTape, DropoutTape,
    FcParams, LstmInput, LstmLayerParams, LstmTape, Mat, Mode, Scalar,
};
use crate::error::{Error, Result};
use crate::nn::lstm::GATE_FORGET;
use crate::vectorizer::CountVector;

pub const CHECKPOINT_VERSION: u32 = 1;
const CHECKPOINT_MAGIC: &[u8; 8] = b"LSTMCLF\x01";
const OUTPUT_CLASSES: usize = 2;
const GATE_NAMES: [&str; 4] = ["input", "forget", "cell", "output"];

/// All trainable parameters plus the batch-norm running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmClassifier<F = f32> {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub dropout_p: f64,
    pub bn_momentum: f64,
    pub bn_eps: f64,
    pub layers: Vec<LstmLayerParams<F>>,
    pub bn: BatchNormParams<F>,
    pub fc: FcParams<F>,
    pub vocab_hash: [u8; 32],
}

/// Gradients for every trainable group, shaped like the parameters.
#[derive(Debug, Clone)]
pub struct ModelGrads<F> {
    pub layers: Vec<LstmLayerParams<F>>,
    pub bn_gamma: Vec<F>,
    pub bn_beta: Vec<F>,
    pub fc: FcParams<F>,
}

/// Cached activations from one forward call, consumed by the backward pass.
#[derive(Debug)]
pub struct ModelTape<F> {
    lstm: Vec<LstmTape<F>>,
    bn: BatchNormTape<F>,
    relu_input: Mat<F>,
    dropout: DropoutTape<F>,
    fc_input: Mat<F>,
}

impl<F: Scalar> LstmClassifier<F> {
    /// All-zero weights with identity batch norm; the starting point for
    /// both random initialization and checkpoint loading.
    pub fn zeros(input_dim: usize, hidden_dim: usize, num_layers: usize, dropout_p: f64) -> Self {
        assert!(num_layers >= 1, "at least one LSTM layer is required");
        let layers = (0..num_layers)
            .map(|l| {
                let in_dim = if l == 0 { input_dim } else { hidden_dim };
                LstmLayerParams::zeros(in_dim, hidden_dim)
            })
            .collect();
        LstmClassifier {
            input_dim,
            hidden_dim,
            num_layers,
            dropout_p,
            bn_momentum: 0.1,
            bn_eps: 1e-5,
            layers,
            bn: BatchNormParams::new(hidden_dim),
            fc: FcParams::zeros(OUTPUT_CLASSES, hidden_dim),
            vocab_hash: [0; 32],
        }
    }

    /// Random initialization: weights uniform in (-k, k) with
    /// k = 1/sqrt(hidden_dim), zero biases except the forget gate's +1.
    /// Draws happen in a fixed order so a seed pins the whole model.
    pub fn init<R: Rng>(
        input_dim: usize,
        hidden_dim: usize,
        num_layers: usize,
        dropout_p: f64,
        vocab_hash: [u8; 32],
        rng: &mut R,
    ) -> Self {
        let mut model = Self::zeros(input_dim, hidden_dim, num_layers, dropout_p);
        model.vocab_hash = vocab_hash;
        let k = 1.0 / (hidden_dim as f64).sqrt();
        let mut draw = |slot: &mut F| *slot = F::from_f64(rng.gen_range(-k..k));
        for layer in &mut model.layers {
            for g in 0..4 {
                layer.w_x[g].as_mut_slice().iter_mut().for_each(&mut draw);
                layer.w_h[g].as_mut_slice().iter_mut().for_each(&mut draw);
            }
            layer.b[GATE_FORGET].iter_mut().for_each(|b| *b = F::one());
        }
        model.fc.weight.as_mut_slice().iter_mut().for_each(&mut draw);
        model
    }

    /// Trainable parameter groups in canonical order: per layer, per gate
    /// (w_x, w_h, b); then bn gamma, bn beta, fc weight, fc bias. Running
    /// statistics are not trainable and are excluded.
    pub fn trainable_groups(&self) -> Vec<&[F]> {
        let mut out: Vec<&[F]> = Vec::new();
        for layer in &self.layers {
            for g in 0..4 {
                out.push(layer.w_x[g].as_slice());
                out.push(layer.w_h[g].as_slice());
                out.push(&layer.b[g]);
            }
        }
        out.push(&self.bn.gamma);
        out.push(&self.bn.beta);
        out.push(self.fc.weight.as_slice());
        out.push(&self.fc.bias);
        out
    }

    pub fn trainable_groups_mut(&mut self) -> Vec<&mut [F]> {
        let mut out: Vec<&mut [F]> = Vec::new();
        for layer in &mut self.layers {
            let LstmLayerParams { w_x, w_h, b } = layer;
            for ((wx, wh), bias) in w_x.iter_mut().zip(w_h.iter_mut()).zip(b.iter_mut()) {
                out.push(wx.as_mut_slice());
                out.push(wh.as_mut_slice());
                out.push(bias.as_mut_slice());
            }
        }
        out.push(&mut self.bn.gamma);
        out.push(&mut self.bn.beta);
        out.push(self.fc.weight.as_mut_slice());
        out.push(&mut self.fc.bias);
        out
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.trainable_groups().iter().map(|g| g.len()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.trainable_groups().iter().map(|g| g.len()).sum()
    }

    /// Read one trainable parameter by flat index (canonical group order).
    pub fn param(&self, mut index: usize) -> F {
        for group in self.trainable_groups() {
            if index < group.len() {
                return group[index];
            }
            index -= group.len();
        }
        panic!("parameter index out of range");
    }

    /// Overwrite one trainable parameter by flat index.
    pub fn set_param(&mut self, mut index: usize, value: F) {
        for group in self.trainable_groups_mut() {
            if index < group.len() {
                group[index] = value;
                return;
            }
            index -= group.len();
        }
        panic!("parameter index out of range");
    }

    pub fn to_f64(&self) -> LstmClassifier<f64> {
        LstmClassifier {
            input_dim: self.input_dim,
            hidden_dim: self.hidden_dim,
            num_layers: self.num_layers,
            dropout_p: self.dropout_p,
            bn_momentum: self.bn_momentum,
            bn_eps: self.bn_eps,
            layers: self.layers.iter().map(|l| l.map(|v| v.to_f64())).collect(),
            bn: self.bn.map(|v| v.to_f64()),
            fc: self.fc.map(|v| v.to_f64()),
            vocab_hash: self.vocab_hash,
        }
    }

    /// Checkpoints only run against the vocabulary they were trained with.
    pub fn verify_vocabulary(&self, vocab: &crate::vectorizer::Vocabulary) -> Result<()> {
        if vocab.size() != self.input_dim {
            return Err(Error::Incompatible(format!(
                "vocabulary size {} != model input dimension {}",
                vocab.size(),
                self.input_dim
            )));
        }
        if vocab.content_hash() != self.vocab_hash {
            return Err(Error::Incompatible(
                "vocabulary hash does not match the checkpoint".into(),
            ));
        }
        Ok(())
    }
}

impl<F: Scalar> ModelGrads<F> {
    pub fn groups(&self) -> Vec<&[F]> {
        let mut out: Vec<&[F]> = Vec::new();
        for layer in &self.layers {
            for g in 0..4 {
                out.push(layer.w_x[g].as_slice());
                out.push(layer.w_h[g].as_slice());
                out.push(&layer.b[g]);
            }
        }
        out.push(&self.bn_gamma);
        out.push(&self.bn_beta);
        out.push(self.fc.weight.as_slice());
        out.push(&self.fc.bias);
        out
    }

    /// Read one gradient by flat index, mirroring the parameter order.
    pub fn grad(&self, mut index: usize) -> F {
        for group in self.groups() {
            if index < group.len() {
                return group[index];
            }
            index -= group.len();
        }
        panic!("gradient index out of range");
    }
}

fn sparse_rows<F: Scalar>(batch: &[CountVector], input_dim: usize) -> Result<Vec<Vec<(u32, F)>>> {
    let mut rows = Vec::with_capacity(batch.len());
    for vec in batch {
        if let Some((idx, _)) = vec
            .entries
            .iter()
            .find(|(idx, _)| *idx as usize >= input_dim)
        {
            return Err(Error::Shape(format!(
                "count vector index {idx} out of range for input dimension {input_dim}"
            )));
        }
        rows.push(
            vec.entries
                .iter()
                .map(|&(idx, count)| (idx, F::from_f64(f64::from(count))))
                .collect(),
        );
    }
    Ok(rows)
}

/// Forward pass over a batch of count vectors. Train mode updates batch-norm
/// running statistics and samples dropout from `rng`; eval mode touches
/// neither.
pub fn model_forward<F: Scalar, R: Rng>(
    batch: &[CountVector],
    model: &mut LstmClassifier<F>,
    mode: Mode,
    rng: &mut R,
) -> Result<(Mat<F>, ModelTape<F>)> {
    if batch.is_empty() {
        return Err(Error::Domain("empty batch".into()));
    }
    let rows = sparse_rows::<F>(batch, model.input_dim)?;
    let batch_size = rows.len();
    let hidden = model.hidden_dim;

    let mut lstm_tapes = Vec::with_capacity(model.num_layers);
    let zero_state = Mat::zeros(batch_size, hidden);
    let mut h = {
        let input = LstmInput::Sparse {
            batch: rows,
            dim: model.input_dim,
        };
        let (h, tape) =
            super::lstm::lstm_forward_with_state(input, &model.layers[0], &zero_state, &zero_state)?;
        lstm_tapes.push(tape);
        h
    };
    for layer in &model.layers[1..] {
        let (next, tape) = super::lstm::lstm_forward_with_state(
            LstmInput::Dense(h),
            layer,
            &zero_state,
            &zero_state,
        )?;
        lstm_tapes.push(tape);
        h = next;
    }

    let (y, bn_tape) = batchnorm_forward(&h, &mut model.bn, mode, model.bn_momentum, model.bn_eps)?;
    let r = relu(&y);
    let (z, dropout_tape) = dropout_forward(&r, model.dropout_p, mode, rng)?;
    let logits = fc_forward(&z, &model.fc)?;

    let tape = ModelTape {
        lstm: lstm_tapes,
        bn: bn_tape,
        relu_input: y,
        dropout: dropout_tape,
        fc_input: z,
    };
    Ok((logits, tape))
}

/// Eval-mode forward that leaves the model untouched, for concurrent
/// scoring. Returns logits only.
pub fn model_eval_logits<F: Scalar>(
    batch: &[CountVector],
    model: &LstmClassifier<F>,
) -> Result<Mat<F>> {
    if batch.is_empty() {
        return Err(Error::Domain("empty batch".into()));
    }
    let rows = sparse_rows::<F>(batch, model.input_dim)?;
    let batch_size = rows.len();
    let zero_state = Mat::zeros(batch_size, model.hidden_dim);

    let mut h = {
        let input = LstmInput::Sparse {
            batch: rows,
            dim: model.input_dim,
        };
        let (h, _) =
            super::lstm::lstm_forward_with_state(input, &model.layers[0], &zero_state, &zero_state)?;
        h
    };
    for layer in &model.layers[1..] {
        let (next, _) = super::lstm::lstm_forward_with_state(
            LstmInput::Dense(h),
            layer,
            &zero_state,
            &zero_state,
        )?;
        h = next;
    }
    // eval-mode batch norm never mutates; run it on a scratch copy
    let mut bn = model.bn.clone();
    let (y, _) = batchnorm_forward(&h, &mut bn, Mode::Eval, model.bn_momentum, model.bn_eps)?;
    let r = relu(&y);
    fc_forward(&r, &model.fc)
}

/// Backward pass from the logits gradient down to every trainable group.
pub fn model_backward<F: Scalar>(
    dlogits: &Mat<F>,
    model: &LstmClassifier<F>,
    tape: &ModelTape<F>,
) -> ModelGrads<F> {
    let (fc_grads, dz) = fc_backward(dlogits, &tape.fc_input, &model.fc);
    let dr = dropout_backward(&dz, &tape.dropout);
    let dy = relu_backward(&dr, &tape.relu_input);
    let (mut dh, bn_gamma, bn_beta) = batchnorm_backward(&dy, &model.bn, &tape.bn);

    let mut layer_grads: Vec<Option<LstmLayerParams<F>>> = vec![None; model.num_layers];
    for l in (0..model.num_layers).rev() {
        let (grads, dx) = lstm_backward(&dh, &model.layers[l], &tape.lstm[l], l > 0);
        layer_grads[l] = Some(grads);
        if let Some(dx) = dx {
            dh = dx;
        }
    }

    ModelGrads {
        layers: layer_grads.into_iter().map(Option::unwrap).collect(),
        bn_gamma,
        bn_beta,
        fc: fc_grads,
    }
}

// ---------------------------------------------------------------------------
// checkpoint format: header + named little-endian f32 arrays
// ---------------------------------------------------------------------------

fn array_names(num_layers: usize) -> Vec<String> {
    let mut names = Vec::new();
    for l in 0..num_layers {
        for gate in GATE_NAMES {
            names.push(format!("lstm{l}.{gate}.w_x"));
            names.push(format!("lstm{l}.{gate}.w_h"));
            names.push(format!("lstm{l}.{gate}.b"));
        }
    }
    names.extend(
        ["bn.gamma", "bn.beta", "fc.weight", "fc.bias"]
            .iter()
            .map(|s| s.to_string()),
    );
    names.push("bn.running_mean".into());
    names.push("bn.running_var".into());
    names
}

impl LstmClassifier<f32> {
    fn arrays(&self) -> Vec<(&[f32], Vec<u32>)> {
        let mut out: Vec<(&[f32], Vec<u32>)> = Vec::new();
        for layer in &self.layers {
            for g in 0..4 {
                out.push((
                    layer.w_x[g].as_slice(),
                    vec![layer.w_x[g].rows() as u32, layer.w_x[g].cols() as u32],
                ));
                out.push((
                    layer.w_h[g].as_slice(),
                    vec![layer.w_h[g].rows() as u32, layer.w_h[g].cols() as u32],
                ));
                out.push((&layer.b[g], vec![layer.b[g].len() as u32]));
            }
        }
        out.push((&self.bn.gamma, vec![self.hidden_dim as u32]));
        out.push((&self.bn.beta, vec![self.hidden_dim as u32]));
        out.push((
            self.fc.weight.as_slice(),
            vec![OUTPUT_CLASSES as u32, self.hidden_dim as u32],
        ));
        out.push((&self.fc.bias, vec![OUTPUT_CLASSES as u32]));
        out.push((&self.bn.running_mean, vec![self.hidden_dim as u32]));
        out.push((&self.bn.running_var, vec![self.hidden_dim as u32]));
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(self.input_dim as u32).to_le_bytes())?;
        w.write_all(&(self.hidden_dim as u32).to_le_bytes())?;
        w.write_all(&(self.num_layers as u32).to_le_bytes())?;
        w.write_all(&self.dropout_p.to_le_bytes())?;
        w.write_all(&self.bn_momentum.to_le_bytes())?;
        w.write_all(&self.bn_eps.to_le_bytes())?;
        w.write_all(&self.vocab_hash)?;

        let names = array_names(self.num_layers);
        let arrays = self.arrays();
        w.write_all(&(arrays.len() as u32).to_le_bytes())?;
        for (name, (data, dims)) in names.iter().zip(&arrays) {
            w.write_all(&(name.len() as u16).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&[dims.len() as u8])?;
            for d in dims {
                w.write_all(&d.to_le_bytes())?;
            }
            for v in *data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Incompatible("not a model checkpoint".into()));
        }
        let version = read_u32(&mut r)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Incompatible(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let input_dim = read_u32(&mut r)? as usize;
        let hidden_dim = read_u32(&mut r)? as usize;
        let num_layers = read_u32(&mut r)? as usize;
        if num_layers == 0 {
            return Err(Error::Incompatible("checkpoint has zero layers".into()));
        }
        let dropout_p = read_f64(&mut r)?;
        let bn_momentum = read_f64(&mut r)?;
        let bn_eps = read_f64(&mut r)?;
        let mut vocab_hash = [0u8; 32];
        r.read_exact(&mut vocab_hash)?;

        let mut model = Self::zeros(input_dim, hidden_dim, num_layers, dropout_p);
        model.bn_momentum = bn_momentum;
        model.bn_eps = bn_eps;
        model.vocab_hash = vocab_hash;

        let expected_names = array_names(num_layers);
        let expected_shapes: Vec<Vec<u32>> = model.arrays().iter().map(|(_, d)| d.clone()).collect();
        let count = read_u32(&mut r)? as usize;
        if count != expected_names.len() {
            return Err(Error::Incompatible(format!(
                "checkpoint has {count} arrays, expected {}",
                expected_names.len()
            )));
        }

        let mut loaded: Vec<Vec<f32>> = Vec::with_capacity(count);
        for (name, shape) in expected_names.iter().zip(&expected_shapes) {
            let mut len_buf = [0u8; 2];
            r.read_exact(&mut len_buf)?;
            let name_len = u16::from_le_bytes(len_buf) as usize;
            let mut name_buf = vec![0u8; name_len];
            r.read_exact(&mut name_buf)?;
            let got_name = String::from_utf8(name_buf)
                .map_err(|_| Error::Incompatible("array name is not UTF-8".into()))?;
            if &got_name != name {
                return Err(Error::Incompatible(format!(
                    "array '{got_name}' where '{name}' was expected"
                )));
            }
            let mut ndim = [0u8; 1];
            r.read_exact(&mut ndim)?;
            let mut dims = Vec::with_capacity(ndim[0] as usize);
            for _ in 0..ndim[0] {
                dims.push(read_u32(&mut r)?);
            }
            if &dims != shape {
                return Err(Error::Incompatible(format!(
                    "array '{name}' has shape {dims:?}, expected {shape:?}"
                )));
            }
            let n: usize = dims.iter().map(|&d| d as usize).product();
            let mut data = vec![0f32; n];
            let mut buf = [0u8; 4];
            for v in &mut data {
                r.read_exact(&mut buf)?;
                *v = f32::from_le_bytes(buf);
            }
            loaded.push(data);
        }

        let mut iter = loaded.into_iter();
        for layer in &mut model.layers {
            for g in 0..4 {
                let (rows, cols) = (layer.w_x[g].rows(), layer.w_x[g].cols());
                layer.w_x[g] = Mat::from_vec(rows, cols, iter.next().unwrap());
                let (rows, cols) = (layer.w_h[g].rows(), layer.w_h[g].cols());
                layer.w_h[g] = Mat::from_vec(rows, cols, iter.next().unwrap());
                layer.b[g] = iter.next().unwrap();
            }
        }
        model.bn.gamma = iter.next().unwrap();
        model.bn.beta = iter.next().unwrap();
        model.fc.weight = Mat::from_vec(OUTPUT_CLASSES, hidden_dim, iter.next().unwrap());
        model.fc.bias = iter.next().unwrap();
        model.bn.running_mean = iter.next().unwrap();
        model.bn.running_var = iter.next().unwrap();
        Ok(model)
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}
