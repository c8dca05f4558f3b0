//! Adam, the epoch driver, and the training strategies.

mod adam;
mod epoch;
mod history;
mod schedule;

pub use adam::{adam_step, clip_global_norm, AdamConfig, OptimizerState, UpdateMask};
pub use epoch::{evaluate, measure, run_epoch, EpochStats, EvalStats, Measured, ModelContext, Objective};
pub use history::{EpochRecord, LambdaRecord, Phase, TrainingHistory};
pub use schedule::{plateau_detect, PlateauConfig, Strategy, TrainingSchedule};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::Utterance;
use crate::losses::JointLossConfig;
use crate::net::ParameterStore;

/// Stream of the schedule seed used for utterance shuffling. Weight
/// initialisation uses stream 0.
pub const SHUFFLE_STREAM: u64 = 1;

/// Reported after the last epoch of each phase.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PhaseEnd {
    /// Zero-based phase counter.
    pub index: usize,
    pub phase: Phase,
    pub first_epoch: usize,
    pub last_epoch: usize,
}

/// Receives each phase end with the weights at that point.
pub type PhaseObserver<'a> = dyn FnMut(&PhaseEnd, &ParameterStore) -> Result<()> + 'a;

fn phase_setup(phase: Phase, freeze: bool, joint: Option<JointLossConfig>) -> (Objective, UpdateMask) {
    match phase {
        Phase::Enh => (Objective::Enh, UpdateMask::EnhOnly),
        Phase::Asr if freeze => (Objective::Asr, UpdateMask::AsrOnly),
        Phase::Asr => (Objective::Asr, UpdateMask::All),
        Phase::Joint => (
            Objective::Joint(joint.expect("joint phase has a loss config")),
            UpdateMask::All,
        ),
    }
}

/// Runs `schedule` from `store`, evaluating on `valid` after every epoch.
pub fn run_strategy(
    ctx: &ModelContext,
    schedule: &TrainingSchedule,
    store: &mut ParameterStore,
    optimizer: &mut OptimizerState,
    train: &[Utterance],
    valid: &[Utterance],
    observer: &mut PhaseObserver<'_>,
) -> Result<TrainingHistory> {
    schedule.validate()?;
    optimizer.config.validate()?;
    if schedule.uses_enhancement() && !ctx.config.has_enhancement() {
        return Err(Error::invalid_config(format!(
            "{:?} needs an enhancement model, got {:?}",
            schedule.strategy, ctx.config.architecture
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    rng.set_stream(SHUFFLE_STREAM);

    let (freeze, joint) = match schedule.strategy {
        Strategy::Alternated { freeze, .. } | Strategy::TwoFullPhases { freeze, .. } => (freeze, None),
        Strategy::JointLoss { lambda } => (false, Some(lambda)),
        Strategy::AsrOnly {} => (false, None),
    };

    let mut history = TrainingHistory::default();
    let mut phase_index = 0;
    let mut phase_start = 0;
    let mut enh_valid: Vec<f64> = Vec::new();
    let mut switched = false;
    for epoch in 0..schedule.total_epochs {
        let phase = match schedule.strategy {
            Strategy::JointLoss { .. } => Phase::Joint,
            Strategy::AsrOnly {} => Phase::Asr,
            Strategy::Alternated { epochs_per_phase, .. } => {
                if (epoch / epochs_per_phase) % 2 == 0 {
                    Phase::Enh
                } else {
                    Phase::Asr
                }
            }
            Strategy::TwoFullPhases { .. } => {
                if switched {
                    Phase::Asr
                } else {
                    Phase::Enh
                }
            }
        };
        let (objective, mask) = phase_setup(phase, freeze, joint);
        let stats = run_epoch(ctx, store, train, objective, mask, optimizer, &mut rng, epoch)?;
        let eval = evaluate(ctx, store, valid)?;
        log::info!(
            "epoch {epoch} {phase}: train enh {:.4e} asr {:.4e} | valid enh {:.4e} asr {:.4e} per {:.2}",
            stats.enh,
            stats.asr,
            eval.enh,
            eval.asr,
            eval.per
        );
        if stats.skipped > 0 {
            log::warn!("epoch {epoch}: skipped {} infeasible utterances", stats.skipped);
        }
        history.updates += stats.updates;
        history.skipped += stats.skipped;
        history.lambda_trace.extend(stats.lambdas);
        history.records.push(EpochRecord {
            epoch,
            phase,
            lambda: stats.lambda,
            train_enh: stats.enh,
            train_asr: stats.asr,
            valid_enh: eval.enh,
            valid_asr: eval.asr,
            valid_per: eval.per,
        });

        if let Strategy::TwoFullPhases { plateau, .. } = schedule.strategy {
            if phase == Phase::Enh {
                enh_valid.push(eval.enh);
                if plateau_detect(&enh_valid, &plateau) {
                    log::info!("enhancement plateau after epoch {epoch}");
                    switched = true;
                }
            }
        }
        let next_phase = if epoch + 1 == schedule.total_epochs {
            None
        } else {
            Some(match schedule.strategy {
                Strategy::Alternated { epochs_per_phase, .. } if (epoch + 1) % epochs_per_phase == 0 => {
                    if phase == Phase::Enh {
                        Phase::Asr
                    } else {
                        Phase::Enh
                    }
                }
                Strategy::TwoFullPhases { .. } if switched => Phase::Asr,
                _ => phase,
            })
        };
        if next_phase != Some(phase) {
            let end = PhaseEnd {
                index: phase_index,
                phase,
                first_epoch: phase_start,
                last_epoch: epoch,
            };
            observer(&end, store)?;
            phase_index += 1;
            phase_start = epoch + 1;
        }
    }
    Ok(history)
}
