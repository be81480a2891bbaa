//! Sensitivity policies: combine binary per-model votes into one decision per sample.
//!
//! `Any` is the maximally sensitive OR over all models. `All` requires every
//! model to agree, and `AtLeast(k)` fires when k or more models vote present.

use std::fmt;

use crate::ensemble::{Ensemble, EnsembleOutput};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensitivityPolicy {
    Any,
    All,
    AtLeast(usize),
}

impl SensitivityPolicy {
    /// Fails with `BadK` unless `1 <= k <= models` for `AtLeast`.
    pub fn check(&self, models: usize) -> Result<()> {
        match *self {
            SensitivityPolicy::AtLeast(k) if k == 0 || k > models => {
                Err(Error::BadK { k, models })
            }
            _ => Ok(()),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            SensitivityPolicy::Any => "any",
            SensitivityPolicy::All => "all",
            SensitivityPolicy::AtLeast(_) => "at_least",
        }
    }
}

impl fmt::Display for SensitivityPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SensitivityPolicy::AtLeast(k) => write!(f, "at_least(k={k})"),
            other => f.write_str(other.kind()),
        }
    }
}

/// `votes[i][b]` is model i's vote on sample b. Returns one combined vote per sample.
pub fn apply_policy(policy: SensitivityPolicy, votes: &[Vec<u8>]) -> Result<Vec<u8>> {
    let n = votes.len();
    let b = votes.first().map_or(0, Vec::len);
    if n == 0 || b == 0 {
        return Err(Error::EmptyBatch);
    }
    if let Some(row) = votes.iter().position(|r| r.len() != b) {
        return Err(Error::ShapeMismatch(format!(
            "model {row} has {} votes, expected {b}",
            votes[row].len()
        )));
    }
    for (model, row) in votes.iter().enumerate() {
        if let Some((sample, &value)) = row.iter().enumerate().find(|(_, &v)| v > 1) {
            return Err(Error::NotBinary {
                model,
                sample,
                value,
            });
        }
    }
    policy.check(n)?;

    let threshold = match policy {
        SensitivityPolicy::Any => 1,
        SensitivityPolicy::All => n,
        SensitivityPolicy::AtLeast(k) => k,
    };
    Ok((0..b)
        .map(|s| {
            let present = votes.iter().filter(|row| row[s] == 1).count();
            u8::from(present >= threshold)
        })
        .collect())
}

/// Maps each predicted label to a vote: 1 for "present", 0 for "absent".
pub fn votes_from_output(out: &EnsembleOutput, ensemble: &Ensemble) -> Result<Vec<Vec<u8>>> {
    if !ensemble.binary_compatible() {
        return Err(Error::PolicyUnavailable);
    }
    Ok(out
        .per_model
        .iter()
        .map(|row| row.iter().map(|&i| u8::from(i == 1)).collect())
        .collect())
}
