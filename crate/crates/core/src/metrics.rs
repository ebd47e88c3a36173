//! Confusion-matrix accounting. The positive class is `is_ai = 1`.

use std::io::Write;
use std::ops::Add;

use crate::error::{Error, Result};

/// Raw confusion counts. Counts from disjoint shards add up, so scoring can
/// be split and merged.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn observe(&mut self, prediction: u8, label: u8) {
        match (prediction, label) {
            (1, 1) => self.tp += 1,
            (1, 0) => self.fp += 1,
            (0, 0) => self.tn += 1,
            (0, 1) => self.fn_ += 1,
            _ => unreachable!("labels are validated to be binary"),
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

impl Add for ConfusionCounts {
    type Output = ConfusionCounts;
    fn add(self, rhs: ConfusionCounts) -> ConfusionCounts {
        ConfusionCounts {
            tp: self.tp + rhs.tp,
            fp: self.fp + rhs.fp,
            tn: self.tn + rhs.tn,
            fn_: self.fn_ + rhs.fn_,
        }
    }
}

/// The four evaluation metrics plus the counts they came from. Ratios are
/// accumulated in 64-bit. Undefined ratios (zero denominators) become 0.0
/// and set `zero_division`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub counts: ConfusionCounts,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub zero_division: bool,
}

impl MetricsReport {
    pub fn from_counts(counts: ConfusionCounts) -> Self {
        let mut zero_division = false;
        let mut ratio = |num: u64, den: u64| -> f64 {
            if den == 0 {
                zero_division = true;
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let accuracy = ratio(counts.tp + counts.tn, counts.total());
        let precision = ratio(counts.tp, counts.tp + counts.fp);
        let recall = ratio(counts.tp, counts.tp + counts.fn_);
        let f1 = if precision + recall == 0.0 {
            zero_division = true;
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        MetricsReport {
            counts,
            accuracy,
            precision,
            recall,
            f1,
            zero_division,
        }
    }

    /// CSV header used by every metrics table.
    pub const CSV_HEADER: &'static str = "Test Accuracy,Precision,Recall,F1-Score";

    pub fn csv_row(&self) -> String {
        format!(
            "{:.4},{:.4},{:.4},{:.4}",
            self.accuracy, self.precision, self.recall, self.f1
        )
    }

    /// Write the one-row CSV table.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        writeln!(w, "{}", self.csv_row())?;
        Ok(())
    }
}

/// Score predictions against labels.
pub fn score(predictions: &[u8], labels: &[u8]) -> Result<MetricsReport> {
    if predictions.len() != labels.len() {
        return Err(Error::Domain(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Domain("nothing to score".into()));
    }
    let mut counts = ConfusionCounts::default();
    for (&p, &l) in predictions.iter().zip(labels) {
        if p > 1 || l > 1 {
            return Err(Error::Domain(format!(
                "predictions and labels must be 0 or 1, got ({p}, {l})"
            )));
        }
        counts.observe(p, l);
    }
    Ok(MetricsReport::from_counts(counts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_two_example_report() {
        let r = score(&[1, 0], &[1, 0]).unwrap();
        assert_eq!((r.counts.tp, r.counts.tn, r.counts.fp, r.counts.fn_), (1, 1, 0, 0));
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.precision, 1.0);
        assert_eq!(r.recall, 1.0);
        assert_eq!(r.f1, 1.0);
        assert!(!r.zero_division);
    }

    #[test]
    fn all_negative_predictions_hit_the_zero_division_rule() {
        let r = score(&[0, 0, 0], &[1, 1, 0]).unwrap();
        assert_eq!(r.precision, 0.0);
        assert_eq!(r.recall, 0.0);
        assert_eq!(r.f1, 0.0);
        assert!(r.zero_division);
    }

    #[test]
    fn length_mismatch_and_empty_are_domain_errors() {
        assert!(score(&[1], &[1, 0]).is_err());
        assert!(score(&[], &[]).is_err());
    }

    #[test]
    fn csv_row_matches_header_layout() {
        let r = score(&[1, 0, 1, 1], &[1, 0, 0, 1]).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "Test Accuracy,Precision,Recall,F1-Score");
        assert_eq!(lines.next().unwrap().split(',').count(), 4);
    }

    fn brute_force(preds: &[u8], labels: &[u8]) -> (u64, u64, u64, u64) {
        let mut tp = 0;
        let mut fp = 0;
        let mut tn = 0;
        let mut fn_ = 0;
        for i in 0..preds.len() {
            if preds[i] == 1 && labels[i] == 1 {
                tp += 1;
            } else if preds[i] == 1 && labels[i] == 0 {
                fp += 1;
            } else if preds[i] == 0 && labels[i] == 0 {
                tn += 1;
            } else {
                fn_ += 1;
            }
        }
        (tp, fp, tn, fn_)
    }

    #[test]
    fn random_pairs_match_brute_force_counter() {
        let mut state = 987654321u64;
        let mut preds = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..500 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            preds.push(((state >> 17) & 1) as u8);
            labels.push(((state >> 41) & 1) as u8);
        }
        let r = score(&preds, &labels).unwrap();
        let (tp, fp, tn, fn_) = brute_force(&preds, &labels);
        assert_eq!((r.counts.tp, r.counts.fp, r.counts.tn, r.counts.fn_), (tp, fp, tn, fn_));
    }

    proptest! {
        #[test]
        fn counts_are_a_monoid(pairs in proptest::collection::vec((0u8..2, 0u8..2), 1..200), split in 0usize..200) {
            let split = split.min(pairs.len());
            let (a, b) = pairs.split_at(split);
            let mut whole = ConfusionCounts::default();
            for &(p, l) in &pairs {
                whole.observe(p, l);
            }
            let mut left = ConfusionCounts::default();
            for &(p, l) in a {
                left.observe(p, l);
            }
            let mut right = ConfusionCounts::default();
            for &(p, l) in b {
                right.observe(p, l);
            }
            prop_assert_eq!(whole, left + right);
        }

        #[test]
        fn score_is_permutation_invariant(pairs in proptest::collection::vec((0u8..2, 0u8..2), 1..100)) {
            let preds: Vec<u8> = pairs.iter().map(|p| p.0).collect();
            let labels: Vec<u8> = pairs.iter().map(|p| p.1).collect();
            let forward = score(&preds, &labels).unwrap();
            let rev_preds: Vec<u8> = preds.iter().rev().copied().collect();
            let rev_labels: Vec<u8> = labels.iter().rev().copied().collect();
            let backward = score(&rev_preds, &rev_labels).unwrap();
            prop_assert_eq!(forward, backward);
        }

        #[test]
        fn swapping_positive_class_swaps_the_confusion_corners(pairs in proptest::collection::vec((0u8..2, 0u8..2), 1..100)) {
            let preds: Vec<u8> = pairs.iter().map(|p| p.0).collect();
            let labels: Vec<u8> = pairs.iter().map(|p| p.1).collect();
            let direct = score(&preds, &labels).unwrap();
            let flipped_preds: Vec<u8> = preds.iter().map(|&p| 1 - p).collect();
            let flipped_labels: Vec<u8> = labels.iter().map(|&l| 1 - l).collect();
            let flipped = score(&flipped_preds, &flipped_labels).unwrap();
            prop_assert_eq!(direct.counts.tp, flipped.counts.tn);
            prop_assert_eq!(direct.counts.fp, flipped.counts.fn_);
            prop_assert_eq!(direct.accuracy, flipped.accuracy);
        }

        #[test]
        fn equal_precision_recall_pins_f1(tp in 1u64..50, shared in 0u64..50) {
            // fp == fn forces precision == recall, and then f1 equals both
            let counts = ConfusionCounts { tp, fp: shared, tn: 3, fn_: shared };
            let r = MetricsReport::from_counts(counts);
            prop_assert!((r.precision - r.recall).abs() < 1e-12);
            prop_assert!((r.f1 - r.precision).abs() < 1e-12);
        }
    }
}
