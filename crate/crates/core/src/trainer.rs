//! Training orchestration: per-chunk train/test splitting pooled into one
//! training set, per-epoch shuffled batches, the epoch loop, per-epoch
//! evaluation, and the four-cell hyperparameter grid.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::metrics::{score, MetricsReport};
use crate::nn::{
    adam_step, model_backward, model_forward, softmax_cross_entropy, AdamConfig, AdamState,
    LstmClassifier, Mode,
};
use crate::records::LabeledExample;
use crate::seeding::derive_seed;
use crate::vectorizer::{assemble_text, CountVector, Vocabulary, VocabularyBuilder};

pub const DEFAULT_MAX_FEATURES: usize = 65_536;

/// Hyperparameters for one training run. Defaults are the selected
/// configuration: lr 0.0005, weight decay 1e-4, 50 epochs, batch 32,
/// hidden 128, dropout 0.5.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub split_ratio: f64,
    pub seed: u64,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub dropout_p: f64,
    pub max_features: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 5e-4,
            weight_decay: 1e-4,
            epochs: 50,
            batch_size: 32,
            split_ratio: 0.8,
            seed: 42,
            hidden_dim: 128,
            num_layers: 1,
            dropout_p: 0.5,
            max_features: Some(DEFAULT_MAX_FEATURES),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::Domain(format!(
                "split ratio must be in (0, 1), got {}",
                self.split_ratio
            )));
        }
        if self.batch_size < 2 {
            return Err(Error::Domain(
                "batch size must be at least 2 (train-mode batch norm)".into(),
            ));
        }
        if self.epochs < 1 {
            return Err(Error::Domain("at least one epoch is required".into()));
        }
        if self.num_layers < 1 {
            return Err(Error::Domain("at least one LSTM layer is required".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Domain(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout_p
            )));
        }
        Ok(())
    }
}

/// Per-epoch training and held-out metrics; the data behind the
/// accuracy/loss curves.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_loss: f64,
    pub test_accuracy: f64,
}

pub const EPOCH_LOG_HEADER: &str = "epoch,train_loss,train_acc,test_loss,test_acc";

/// Write epoch logs as CSV.
pub fn write_epoch_logs<W: Write>(w: &mut W, logs: &[EpochLog]) -> Result<()> {
    writeln!(w, "{EPOCH_LOG_HEADER}")?;
    for log in logs {
        writeln!(
            w,
            "{},{:.6},{:.6},{:.6},{:.6}",
            log.epoch, log.train_loss, log.train_accuracy, log.test_loss, log.test_accuracy
        )?;
    }
    Ok(())
}

/// Number of examples the train side of a split receives: ceil(n * ratio),
/// with a snap against float error on exact products (44,000 x 0.8 must be
/// 35,200, not 35,201).
fn train_split_len(n: usize, ratio: f64) -> usize {
    let t = n as f64 * ratio;
    (((t * 1e9).round() / 1e9).ceil() as usize).min(n)
}

/// Seeded shuffle, then split: the first ceil(n * ratio) examples train,
/// the rest test. Same seed, same partition.
pub fn split_train_test<T: Clone>(
    examples: &[T],
    ratio: f64,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Domain(format!(
            "split ratio must be in (0, 1), got {ratio}"
        )));
    }
    let mut shuffled: Vec<T> = examples.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffled.shuffle(&mut rng);
    let train_len = train_split_len(shuffled.len(), ratio);
    let test = shuffled.split_off(train_len);
    Ok((shuffled, test))
}

/// Split each chunk at the configured ratio and pool the per-chunk splits
/// into one training set and one test set for a single model.
pub fn split_chunks_pooled<I>(
    chunks: I,
    ratio: f64,
    seed: u64,
) -> Result<(Vec<LabeledExample>, Vec<LabeledExample>)>
where
    I: IntoIterator<Item = Result<crate::records::RecordChunk<LabeledExample>>>,
{
    let mut train = Vec::new();
    let mut test = Vec::new();
    for chunk in chunks {
        let chunk = chunk?;
        let chunk_seed = derive_seed(seed, "split", chunk.index as u64);
        let (tr, te) = split_train_test(&chunk.records, ratio, chunk_seed)?;
        train.extend(tr);
        test.extend(te);
    }
    Ok((train, test))
}

/// Fresh seeded permutation of `0..n`, cut into batches. A trailing batch of
/// size 1 is dropped: train-mode batch norm cannot consume it.
pub fn make_batches(n: usize, batch_size: usize, epoch_seed: u64) -> Vec<Vec<usize>> {
    assert!(batch_size >= 2, "batch size must be at least 2");
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(epoch_seed);
    order.shuffle(&mut rng);
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    if batches.last().is_some_and(|b| b.len() < 2) {
        batches.pop();
    }
    batches
}

/// Build the vocabulary over the training split's assembled texts.
pub fn build_training_vocabulary(
    train: &[LabeledExample],
    max_features: Option<usize>,
) -> Vocabulary {
    let mut builder = VocabularyBuilder::new();
    for example in train {
        builder.add_document(&assemble_text(&example.record));
    }
    builder.build(max_features)
}

/// Vectorize labeled examples against a frozen vocabulary.
pub fn vectorize_examples(
    examples: &[LabeledExample],
    vocab: &Vocabulary,
) -> Vec<(CountVector, u8)> {
    examples
        .iter()
        .map(|ex| (crate::vectorizer::vectorize_record(&ex.record, vocab), ex.is_ai))
        .collect()
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: LstmClassifier<f32>,
    pub logs: Vec<EpochLog>,
}

fn gather_batch(
    data: &[(CountVector, u8)],
    indices: &[usize],
) -> (Vec<CountVector>, Vec<u8>) {
    let mut vectors = Vec::with_capacity(indices.len());
    let mut labels = Vec::with_capacity(indices.len());
    for &i in indices {
        vectors.push(data[i].0.clone());
        labels.push(data[i].1);
    }
    (vectors, labels)
}

fn count_correct(logits: &crate::nn::Mat<f32>, labels: &[u8]) -> u64 {
    let mut correct = 0;
    for (b, &label) in labels.iter().enumerate() {
        let row = logits.row(b);
        let pred = u8::from(row[1] > row[0]);
        if pred == label {
            correct += 1;
        }
    }
    correct
}

/// Evaluate mean loss and accuracy on a labeled set without touching the
/// model (eval mode, fixed accumulation order).
pub fn evaluate(
    model: &LstmClassifier<f32>,
    data: &[(CountVector, u8)],
    batch_size: usize,
) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::Domain("nothing to evaluate".into()));
    }
    let mut total_loss = 0.0f64;
    let mut correct = 0u64;
    for batch in data.chunks(batch_size) {
        let vectors: Vec<CountVector> = batch.iter().map(|(v, _)| v.clone()).collect();
        let labels: Vec<u8> = batch.iter().map(|(_, l)| *l).collect();
        let logits = crate::nn::model_eval_logits(&vectors, model)?;
        let (loss, _) = softmax_cross_entropy(&logits, &labels)?;
        total_loss += f64::from(loss) * labels.len() as f64;
        correct += count_correct(&logits, &labels);
    }
    Ok((
        total_loss / data.len() as f64,
        correct as f64 / data.len() as f64,
    ))
}

/// Predictions of the model over a labeled set, in order.
pub fn predict_labels(
    model: &LstmClassifier<f32>,
    data: &[(CountVector, u8)],
    batch_size: usize,
) -> Result<Vec<u8>> {
    let mut preds = Vec::with_capacity(data.len());
    for batch in data.chunks(batch_size) {
        let vectors: Vec<CountVector> = batch.iter().map(|(v, _)| v.clone()).collect();
        let logits = crate::nn::model_eval_logits(&vectors, model)?;
        for b in 0..vectors.len() {
            let row = logits.row(b);
            preds.push(u8::from(row[1] > row[0]));
        }
    }
    Ok(preds)
}

/// Run the epoch loop: forward, loss, backward, Adam step over shuffled
/// batches, evaluating on the test split after every epoch. Returns the
/// final-epoch model and the full log.
pub fn train(
    config: &TrainConfig,
    vocab: &Vocabulary,
    train_set: &[(CountVector, u8)],
    test_set: &[(CountVector, u8)],
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::Domain("training set is empty".into()));
    }
    if test_set.is_empty() {
        return Err(Error::Domain("test set is empty".into()));
    }

    let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "init", 0));
    let mut model = LstmClassifier::<f32>::init(
        vocab.size(),
        config.hidden_dim,
        config.num_layers,
        config.dropout_p,
        vocab.content_hash(),
        &mut init_rng,
    );
    let mut adam = AdamState::new(
        AdamConfig::new(config.learning_rate, config.weight_decay),
        &model.group_sizes(),
    );

    let mut logs = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let shuffle_seed = derive_seed(config.seed, "shuffle", epoch as u64);
        let mut dropout_rng =
            ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "dropout", epoch as u64));
        let batches = make_batches(train_set.len(), config.batch_size, shuffle_seed);

        let mut epoch_loss = 0.0f64;
        let mut epoch_correct = 0u64;
        let mut seen = 0usize;
        for (batch_idx, batch) in batches.iter().enumerate() {
            let (vectors, labels) = gather_batch(train_set, batch);
            let step = (|| -> Result<f32> {
                let (logits, tape) =
                    model_forward(&vectors, &mut model, Mode::Train, &mut dropout_rng)?;
                let (loss, dlogits) = softmax_cross_entropy(&logits, &labels)?;
                epoch_correct += count_correct(&logits, &labels);
                let grads = model_backward(&dlogits, &model, &tape);
                adam_step(
                    &mut model.trainable_groups_mut(),
                    &grads.groups(),
                    &mut adam,
                )?;
                Ok(loss)
            })();
            let loss = match step {
                Ok(loss) if loss.is_finite() => loss,
                Ok(_) | Err(Error::Numeric(_)) => {
                    return Err(Error::Diverged {
                        epoch,
                        batch: batch_idx,
                    })
                }
                Err(other) => return Err(other),
            };
            epoch_loss += f64::from(loss) * labels.len() as f64;
            seen += labels.len();
        }

        let (test_loss, test_accuracy) = evaluate(&model, test_set, config.batch_size)?;
        logs.push(EpochLog {
            epoch,
            train_loss: if seen > 0 { epoch_loss / seen as f64 } else { 0.0 },
            train_accuracy: if seen > 0 {
                epoch_correct as f64 / seen as f64
            } else {
                0.0
            },
            test_loss,
            test_accuracy,
        });
    }

    Ok(TrainOutcome { model, logs })
}

/// The four grid configurations: learning rate {0.0005, 0.001} crossed with
/// weight decay {1e-4, 5e-4}.
pub const GRID_CELLS: [(f64, f64); 4] = [(5e-4, 1e-4), (5e-4, 5e-4), (1e-3, 1e-4), (1e-3, 5e-4)];

#[derive(Debug)]
pub struct GridCell {
    pub name: String,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub outcome: TrainOutcome,
    pub report: MetricsReport,
}

#[derive(Debug)]
pub struct GridOutcome {
    pub cells: Vec<GridCell>,
    /// Index of the cell with the highest mean of the four metrics.
    pub best: usize,
}

impl GridOutcome {
    /// Comparison table: one row per model, metric columns in fixed order.
    pub fn write_summary_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "Model,{}", MetricsReport::CSV_HEADER)?;
        for cell in &self.cells {
            writeln!(w, "{},{}", cell.name, cell.report.csv_row())?;
        }
        Ok(())
    }
}

fn metric_mean(report: &MetricsReport) -> f64 {
    (report.accuracy + report.precision + report.recall + report.f1) / 4.0
}

/// Train all four grid cells and pick the best by the mean of accuracy,
/// precision, recall, and F1. Cells run in parallel; results are ordered.
pub fn run_grid(
    base: &TrainConfig,
    vocab: &Vocabulary,
    train_set: &[(CountVector, u8)],
    test_set: &[(CountVector, u8)],
) -> Result<GridOutcome> {
    use rayon::prelude::*;

    let cells: Vec<Result<GridCell>> = GRID_CELLS
        .par_iter()
        .enumerate()
        .map(|(i, &(lr, wd))| {
            let config = TrainConfig {
                learning_rate: lr,
                weight_decay: wd,
                ..base.clone()
            };
            let outcome = train(&config, vocab, train_set, test_set)?;
            let preds = predict_labels(&outcome.model, test_set, config.batch_size)?;
            let labels: Vec<u8> = test_set.iter().map(|(_, l)| *l).collect();
            let report = score(&preds, &labels)?;
            Ok(GridCell {
                name: format!("Model{}", i + 1),
                learning_rate: lr,
                weight_decay: wd,
                outcome,
                report,
            })
        })
        .collect();

    let cells: Vec<GridCell> = cells.into_iter().collect::<Result<_>>()?;
    let best = cells
        .iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| {
            metric_mean(&a.report)
                .partial_cmp(&metric_mean(&b.report))
                .unwrap()
        })
        .map(|(i, _)| i)
        .unwrap();
    Ok(GridOutcome { cells, best })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_sizes_follow_the_ceiling_rule() {
        let data: Vec<u32> = (0..10).collect();
        let (train, test) = split_train_test(&data, 0.8, 1).unwrap();
        assert_eq!((train.len(), test.len()), (8, 2));

        assert_eq!(train_split_len(44_000, 0.8), 35_200);
        assert_eq!(train_split_len(0, 0.8), 0);
        assert_eq!(train_split_len(1, 0.8), 1);
        assert_eq!(train_split_len(3, 0.5), 2); // ceil(1.5)
    }

    #[test]
    fn split_is_deterministic_and_a_partition() {
        let data: Vec<u32> = (0..100).collect();
        let (tr1, te1) = split_train_test(&data, 0.8, 99).unwrap();
        let (tr2, te2) = split_train_test(&data, 0.8, 99).unwrap();
        assert_eq!(tr1, tr2);
        assert_eq!(te1, te2);

        let mut union: Vec<u32> = tr1.iter().chain(te1.iter()).copied().collect();
        union.sort_unstable();
        assert_eq!(union, data);
    }

    #[test]
    fn empty_input_splits_into_empty_sets() {
        let (train, test) = split_train_test::<u32>(&[], 0.8, 1).unwrap();
        assert!(train.is_empty() && test.is_empty());
    }

    #[test]
    fn batch_sizes_and_the_short_batch_guard() {
        let sizes: Vec<usize> = make_batches(100, 32, 7).iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![32, 32, 32, 4]);

        let sizes: Vec<usize> = make_batches(33, 32, 7).iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![32]); // trailing singleton dropped

        let a = make_batches(50, 8, derive_seed(42, "shuffle", 0));
        let b = make_batches(50, 8, derive_seed(42, "shuffle", 1));
        assert_ne!(a, b);
        let c = make_batches(50, 8, derive_seed(42, "shuffle", 0));
        assert_eq!(a, c);
    }

    #[test]
    fn batches_cover_every_index_once() {
        let batches = make_batches(40, 8, 3);
        let mut seen: Vec<usize> = batches.into_iter().flatten().collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..40).collect::<Vec<_>>());
    }

    #[test]
    fn config_invariants_are_enforced() {
        let ok = TrainConfig::default();
        ok.validate().unwrap();
        assert!(TrainConfig { split_ratio: 1.0, ..ok.clone() }.validate().is_err());
        assert!(TrainConfig { batch_size: 1, ..ok.clone() }.validate().is_err());
        assert!(TrainConfig { epochs: 0, ..ok.clone() }.validate().is_err());
        assert!(TrainConfig { dropout_p: 1.0, ..ok }.validate().is_err());
    }
}
