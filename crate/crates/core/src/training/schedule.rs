use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::JointLossConfig;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlateauConfig {
    pub patience: usize,
    /// Relative improvement that counts as progress.
    pub min_delta: f64,
}

impl Default for PlateauConfig {
    fn default() -> Self {
        PlateauConfig {
            patience: 10,
            min_delta: 0.005,
        }
    }
}

/// True once the best value has gone `patience` consecutive epochs without
/// a relative improvement of `min_delta`.
pub fn plateau_detect(history: &[f64], cfg: &PlateauConfig) -> bool {
    let Some((&first, rest)) = history.split_first() else {
        return false;
    };
    let mut best = first;
    let mut stale = 0;
    for &v in rest {
        if v < best * (1.0 - cfg.min_delta) {
            best = v;
            stale = 0;
        } else {
            stale += 1;
        }
    }
    stale >= cfg.patience
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Strategy {
    /// Every epoch minimises `λ·L_enh + L_asr`.
    JointLoss { lambda: JointLossConfig },
    /// Blocks of enhancement epochs and recognition epochs, starting with
    /// enhancement.
    Alternated { epochs_per_phase: usize, freeze: bool },
    /// Enhancement until the validation loss plateaus, then recognition for
    /// the remaining epochs.
    TwoFullPhases {
        freeze: bool,
        #[serde(default)]
        plateau: PlateauConfig,
    },
    /// Recognition loss alone for every epoch.
    AsrOnly {},
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSchedule {
    pub strategy: Strategy,
    pub total_epochs: usize,
    pub seed: u64,
}

impl TrainingSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.total_epochs == 0 {
            return Err(Error::invalid_config("total_epochs must be >= 1"));
        }
        match self.strategy {
            Strategy::JointLoss { lambda } => lambda.validate(),
            Strategy::Alternated {
                epochs_per_phase: 0, ..
            } => Err(Error::invalid_config("epochs_per_phase must be >= 1")),
            Strategy::TwoFullPhases { plateau, .. }
                if plateau.patience == 0 || plateau.min_delta.is_nan() || plateau.min_delta < 0.0 =>
            {
                Err(Error::invalid_config(format!("bad plateau settings {plateau:?}")))
            }
            _ => Ok(()),
        }
    }

    /// Whether the strategy ever optimises the enhancement loss.
    pub fn uses_enhancement(&self) -> bool {
        !matches!(self.strategy, Strategy::AsrOnly {})
    }
}
