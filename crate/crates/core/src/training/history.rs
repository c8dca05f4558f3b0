use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What an epoch optimised.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Phase {
    Enh,
    Asr,
    Joint,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Enh => "ENH",
            Phase::Asr => "ASR",
            Phase::Joint => "JOINT",
        })
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ENH" => Ok(Phase::Enh),
            "ASR" => Ok(Phase::Asr),
            "JOINT" => Ok(Phase::Joint),
            other => Err(Error::invalid_input(format!("unknown phase tag {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub phase: Phase,
    /// Enhancement weight at the epoch's last update, for joint epochs.
    pub lambda: Option<f64>,
    pub train_enh: f64,
    pub train_asr: f64,
    pub valid_enh: f64,
    pub valid_asr: f64,
    pub valid_per: f64,
}

/// Per-update record of the joint weight and the losses it was computed from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaRecord {
    pub epoch: usize,
    pub l_enh: f64,
    pub l_asr: f64,
    pub lambda: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingHistory {
    pub records: Vec<EpochRecord>,
    pub lambda_trace: Vec<LambdaRecord>,
    /// Optimizer updates applied.
    pub updates: u64,
    /// Utterance visits skipped for infeasible alignments.
    pub skipped: u64,
}

impl TrainingHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn phases(&self) -> Vec<Phase> {
        self.records.iter().map(|r| r.phase).collect()
    }

    /// Index of the first epoch of a different phase than its predecessor.
    pub fn phase_switches(&self) -> Vec<usize> {
        self.records
            .windows(2)
            .filter(|w| w[0].phase != w[1].phase)
            .map(|w| w[1].epoch)
            .collect()
    }
}
