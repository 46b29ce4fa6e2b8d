//! Congressional voting records in the UCI layout: one representative per
//! line, `party,v1,…,v16`, with votes `y`, `n` or `?`.
//!
//! Votes map to `+1`, `−1` and `0`; Democrats are labeled `+1` and
//! Republicans `−1`. Accuracy does not depend on this sign convention.

use std::path::Path;

use super::{read_text, DataError};

pub const VOTING_RECORDS: usize = 435;
pub const VOTING_ISSUES: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct VotingDataset {
    /// `records × 16`, row-major.
    pub features: Vec<f64>,
    pub labels: Vec<f64>,
}

impl VotingDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn record(&self, i: usize) -> &[f64] {
        &self.features[i * VOTING_ISSUES..(i + 1) * VOTING_ISSUES]
    }

    pub fn democrats(&self) -> usize {
        self.labels.iter().filter(|l| **l > 0.0).count()
    }
}

fn vote(field: &str) -> Option<f64> {
    match field {
        "y" | "Y" => Some(1.0),
        "n" | "N" => Some(-1.0),
        "?" => Some(0.0),
        _ => None,
    }
}

/// Parses any number of records.
pub fn parse_voting(text: &str) -> Result<VotingDataset, DataError> {
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| DataError::Parse { line: n + 1, message };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != VOTING_ISSUES + 1 {
            return Err(err(format!("expected {} fields, found {}", VOTING_ISSUES + 1, fields.len())));
        }
        let label = match fields[0].to_ascii_lowercase().as_str() {
            "democrat" => 1.0,
            "republican" => -1.0,
            other => return Err(err(format!("unknown party {other:?}"))),
        };
        for f in &fields[1..] {
            features.push(vote(f).ok_or_else(|| err(format!("unknown vote {f:?}")))?);
        }
        labels.push(label);
    }
    Ok(VotingDataset { features, labels })
}

/// Parses the full data set, enforcing exactly 435 records.
pub fn load_voting(text: &str) -> Result<VotingDataset, DataError> {
    let d = parse_voting(text)?;
    if d.len() != VOTING_RECORDS {
        return Err(DataError::Invalid(format!(
            "expected {VOTING_RECORDS} voting records, found {}",
            d.len()
        )));
    }
    Ok(d)
}

pub fn read_voting_file(path: &Path) -> Result<VotingDataset, DataError> {
    load_voting(&read_text(path)?)
}
