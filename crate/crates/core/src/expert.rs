//! Expert-ballot aggregation and the model-expert consistency rate.
//!
//! Ballot files are line-delimited JSON with `eid`, `vote_1`, `vote_2`,
//! `vote_3` (each 0 or 1), and an optional `journal` field.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde_json::Value;

use crate::error::{Error, Result};

/// Three expert votes for one paper.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpertBallot {
    pub eid: i64,
    pub votes: [u8; 3],
    pub journal: Option<String>,
}

/// 1 iff at least two of the three votes are 1.
pub fn majority_vote(ballot: &ExpertBallot) -> Result<u8> {
    if let Some(bad) = ballot.votes.iter().find(|&&v| v > 1) {
        return Err(Error::Domain(format!(
            "votes must be 0 or 1, got {bad} for eid {}",
            ballot.eid
        )));
    }
    let ones: u8 = ballot.votes.iter().sum();
    Ok(u8::from(ones >= 2))
}

/// One model-expert disagreement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Disagreement {
    pub eid: i64,
    pub model_label: u8,
    pub expert_label: u8,
}

/// Result of comparing model labels against expert majority labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyReport {
    pub total: u64,
    pub agreements: u64,
    pub rate: f64,
    pub disagreements: Vec<Disagreement>,
}

impl ConsistencyReport {
    pub fn write_disagreements_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "eid,model_label,expert_label")?;
        for d in &self.disagreements {
            writeln!(w, "{},{},{}", d.eid, d.model_label, d.expert_label)?;
        }
        Ok(())
    }
}

/// Agreement rate between model labels and expert labels over identical eid
/// sets. Disagreements come back sorted by eid.
pub fn consistency_rate(
    model_labels: &BTreeMap<i64, u8>,
    expert_labels: &BTreeMap<i64, u8>,
) -> Result<ConsistencyReport> {
    if model_labels.is_empty() {
        return Err(Error::Domain("no papers to compare".into()));
    }
    let only_model: Vec<i64> = model_labels
        .keys()
        .filter(|k| !expert_labels.contains_key(k))
        .copied()
        .collect();
    let only_expert: Vec<i64> = expert_labels
        .keys()
        .filter(|k| !model_labels.contains_key(k))
        .copied()
        .collect();
    if !only_model.is_empty() || !only_expert.is_empty() {
        return Err(Error::Domain(format!(
            "eid sets differ: {} only in model predictions (first: {:?}), {} only in ballots (first: {:?})",
            only_model.len(),
            only_model.first(),
            only_expert.len(),
            only_expert.first()
        )));
    }

    let mut agreements = 0u64;
    let mut disagreements = Vec::new();
    for (eid, &model_label) in model_labels {
        let expert_label = expert_labels[eid];
        if model_label == expert_label {
            agreements += 1;
        } else {
            disagreements.push(Disagreement {
                eid: *eid,
                model_label,
                expert_label,
            });
        }
    }
    let total = model_labels.len() as u64;
    Ok(ConsistencyReport {
        total,
        agreements,
        rate: agreements as f64 / total as f64,
        disagreements,
    })
}

fn integer_field(row: &serde_json::Map<String, Value>, field: &str) -> Result<i64> {
    match row.get(field) {
        Some(Value::Number(n)) => n
            .as_i64()
            .ok_or_else(|| Error::Malformed(format!("non-integer {field}"))),
        Some(Value::String(s)) => s
            .trim()
            .parse()
            .map_err(|_| Error::Malformed(format!("non-integer {field}"))),
        _ => Err(Error::Malformed(format!("missing {field}"))),
    }
}

/// Load a ballot file: one JSON object per line.
pub fn read_ballots(path: &Path) -> Result<Vec<ExpertBallot>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut ballots = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let line_no = i + 1;
        let value: Value = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: format!("invalid JSON: {e}"),
        })?;
        let row = value.as_object().ok_or_else(|| Error::Parse {
            line: line_no,
            message: "row is not a JSON object".into(),
        })?;
        let ballot = (|| -> Result<ExpertBallot> {
            let eid = integer_field(row, "eid")?;
            let mut votes = [0u8; 3];
            for (k, v) in votes.iter_mut().enumerate() {
                let vote = integer_field(row, &format!("vote_{}", k + 1))?;
                if !(0..=1).contains(&vote) {
                    return Err(Error::Malformed(format!(
                        "vote_{} must be 0 or 1, got {vote}",
                        k + 1
                    )));
                }
                *v = vote as u8;
            }
            let journal = row
                .get("journal")
                .and_then(Value::as_str)
                .map(str::to_string);
            Ok(ExpertBallot { eid, votes, journal })
        })()
        .map_err(|e| e.at_line(line_no))?;
        ballots.push(ballot);
    }
    Ok(ballots)
}

/// Load model labels from a classification output file (rows carrying `eid`
/// and `is_ai`).
pub fn read_model_labels(path: &Path) -> Result<BTreeMap<i64, u8>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut labels = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let line_no = i + 1;
        let value: Value = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: format!("invalid JSON: {e}"),
        })?;
        let row = value.as_object().ok_or_else(|| Error::Parse {
            line: line_no,
            message: "row is not a JSON object".into(),
        })?;
        let eid = integer_field(row, "eid").map_err(|e| e.at_line(line_no))?;
        let is_ai = integer_field(row, "is_ai").map_err(|e| e.at_line(line_no))?;
        if !(0..=1).contains(&is_ai) {
            return Err(Error::Parse {
                line: line_no,
                message: format!("is_ai must be 0 or 1, got {is_ai}"),
            });
        }
        labels.insert(eid, is_ai as u8);
    }
    Ok(labels)
}

/// Majority labels for a set of ballots, keyed by eid.
pub fn expert_labels(ballots: &[ExpertBallot]) -> Result<BTreeMap<i64, u8>> {
    let mut labels = BTreeMap::new();
    for ballot in ballots {
        labels.insert(ballot.eid, majority_vote(ballot)?);
    }
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ballot(eid: i64, votes: [u8; 3]) -> ExpertBallot {
        ExpertBallot {
            eid,
            votes,
            journal: None,
        }
    }

    #[test]
    fn majority_truth_table() {
        // all 8 ballots
        let expected = [
            ([0, 0, 0], 0),
            ([0, 0, 1], 0),
            ([0, 1, 0], 0),
            ([0, 1, 1], 1),
            ([1, 0, 0], 0),
            ([1, 0, 1], 1),
            ([1, 1, 0], 1),
            ([1, 1, 1], 1),
        ];
        for (votes, label) in expected {
            assert_eq!(majority_vote(&ballot(1, votes)).unwrap(), label);
        }
    }

    #[test]
    fn bad_votes_are_rejected() {
        assert!(majority_vote(&ballot(1, [0, 2, 1])).is_err());
    }

    #[test]
    fn five_hundred_with_132_disagreements_is_0_736() {
        let mut model = BTreeMap::new();
        let mut expert = BTreeMap::new();
        for eid in 0..500i64 {
            model.insert(eid, 1u8);
            expert.insert(eid, u8::from(eid >= 132));
        }
        let report = consistency_rate(&model, &expert).unwrap();
        assert_eq!(report.total, 500);
        assert_eq!(report.disagreements.len(), 132);
        assert_eq!(report.rate, 368.0 / 500.0);
        assert_eq!(format!("{:.4}", report.rate), "0.7360");
    }

    #[test]
    fn identical_maps_agree_perfectly() {
        let labels: BTreeMap<i64, u8> = (0..10).map(|i| (i, (i % 2) as u8)).collect();
        let report = consistency_rate(&labels, &labels.clone()).unwrap();
        assert_eq!(report.rate, 1.0);
        assert!(report.disagreements.is_empty());
    }

    #[test]
    fn eid_set_mismatch_names_the_difference() {
        let model: BTreeMap<i64, u8> = [(1, 0), (2, 1)].into();
        let expert: BTreeMap<i64, u8> = [(1, 0), (3, 1)].into();
        let err = consistency_rate(&model, &expert).unwrap_err().to_string();
        assert!(err.contains("only in model predictions"), "{err}");
        assert!(err.contains('2') && err.contains('3'), "{err}");
    }

    #[test]
    fn random_instance_matches_brute_force_comparison() {
        let mut state = 5u64;
        let mut model = BTreeMap::new();
        let mut expert = BTreeMap::new();
        for eid in 0..50i64 {
            state = state.wrapping_mul(2862933555777941757).wrapping_add(3037000493);
            model.insert(eid, ((state >> 13) & 1) as u8);
            expert.insert(eid, ((state >> 47) & 1) as u8);
        }
        let report = consistency_rate(&model, &expert).unwrap();
        let matches = (0..50i64).filter(|e| model[e] == expert[e]).count() as u64;
        assert_eq!(report.agreements, matches);
        assert_eq!(report.rate, matches as f64 / 50.0);
    }

    proptest! {
        #[test]
        fn majority_is_permutation_invariant(v1 in 0u8..2, v2 in 0u8..2, v3 in 0u8..2) {
            let base = majority_vote(&ballot(1, [v1, v2, v3])).unwrap();
            for perm in [[v1, v3, v2], [v2, v1, v3], [v2, v3, v1], [v3, v1, v2], [v3, v2, v1]] {
                prop_assert_eq!(majority_vote(&ballot(1, perm)).unwrap(), base);
            }
        }

        #[test]
        fn rate_plus_disagreement_fraction_is_one(labels in proptest::collection::vec((0u8..2, 0u8..2), 1..120)) {
            let model: BTreeMap<i64, u8> = labels.iter().enumerate().map(|(i, l)| (i as i64, l.0)).collect();
            let expert: BTreeMap<i64, u8> = labels.iter().enumerate().map(|(i, l)| (i as i64, l.1)).collect();
            let report = consistency_rate(&model, &expert).unwrap();
            // counts are integers, so this identity is exact
            prop_assert_eq!(report.agreements + report.disagreements.len() as u64, report.total);

            // flipping every label on both sides leaves the rate unchanged
            let flipped_model: BTreeMap<i64, u8> = model.iter().map(|(k, v)| (*k, 1 - v)).collect();
            let flipped_expert: BTreeMap<i64, u8> = expert.iter().map(|(k, v)| (*k, 1 - v)).collect();
            let flipped = consistency_rate(&flipped_model, &flipped_expert).unwrap();
            prop_assert_eq!(report.rate, flipped.rate);
        }
    }
}
