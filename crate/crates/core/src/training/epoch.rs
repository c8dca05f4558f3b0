use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use super::adam::{adam_step, clip_global_norm, OptimizerState, UpdateMask};
use super::history::LambdaRecord;
use crate::error::{Error, Result};
use crate::eval::{ctc_greedy_decode, score_ids};
use crate::features::{compute_std_vector, MelFilterbank, StdVector, Utterance};
use crate::losses::{ctc_loss, joint_loss, mse_loss, pit_mse, JointLossConfig, LossValue};
use crate::net::{backward, forward, Architecture, GradRequest, ModelConfig, ModelOutput, ParameterStore, Upstream};

/// Everything a forward pass needs besides the weights.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelContext {
    pub config: ModelConfig,
    pub mel: MelFilterbank,
    pub std_vector: StdVector,
}

impl ModelContext {
    pub fn new(config: ModelConfig, std_vector: StdVector) -> Result<Self> {
        config.validate()?;
        if std_vector.len() != config.bins {
            return Err(Error::invalid_config(format!(
                "std vector has {} entries for {} bins",
                std_vector.len(),
                config.bins
            )));
        }
        let mel = config.mel_filterbank()?;
        Ok(ModelContext {
            config,
            mel,
            std_vector,
        })
    }

    /// Context with the std vector of `train`.
    pub fn from_corpus(config: ModelConfig, train: &[Utterance]) -> Result<Self> {
        ModelContext::new(config, compute_std_vector(train)?)
    }

    pub fn forward(&self, store: &ParameterStore, utt: &Utterance) -> Result<ModelOutput> {
        forward(&self.config, store, utt, &self.mel, &self.std_vector)
    }
}

/// Loss optimised during an epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Objective {
    Enh,
    Asr,
    Joint(JointLossConfig),
}

/// Both losses for one utterance. The enhancement gradient is shaped like
/// the raw head output.
pub struct Measured {
    pub output: ModelOutput,
    pub enh: LossValue,
    pub asr: LossValue,
}

/// Forward pass and both losses, or `None` when the labels cannot be
/// aligned to the frames.
pub fn measure(ctx: &ModelContext, store: &ParameterStore, utt: &Utterance) -> Result<Option<Measured>> {
    let output = ctx.forward(store, utt)?;
    let asr = match ctc_loss(&output.logits, &utt.labels) {
        Ok(l) => l,
        Err(Error::InfeasibleAlignment { frames, required }) => {
            log::warn!("skipping {}: {frames} frames cannot align {required} required", utt.id);
            return Ok(None);
        }
        Err(e) => return Err(e),
    };
    let enh = match ctx.config.architecture {
        Architecture::JointPit => {
            let n = ctx.config.bins;
            let streams: Vec<_> = (0..ctx.config.enh_streams())
                .map(|s| output.enhanced.column_block(s * n, n))
                .collect();
            let interferer = utt
                .interferer
                .as_ref()
                .ok_or_else(|| Error::invalid_input(format!("utterance {} has no interferer", utt.id)))?;
            let pit = pit_mse(&streams, &[utt.clean.frames().clone(), interferer.frames().clone()])?;
            LossValue {
                value: pit.value,
                grad: pit.stacked_grad()?,
            }
        }
        _ => mse_loss(&output.y_hat, utt.clean.frames())?,
    };
    Ok(Some(Measured { output, enh, asr }))
}

fn check_routing(cfg: &ModelConfig, objective: Objective, mask: UpdateMask) -> Result<()> {
    let ok = match objective {
        Objective::Enh => cfg.has_enhancement() && mask == UpdateMask::EnhOnly,
        Objective::Asr => mask != UpdateMask::EnhOnly,
        Objective::Joint(_) => cfg.has_enhancement() && mask == UpdateMask::All,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::invalid_config(format!(
            "{objective:?} objective cannot run with mask {mask:?} on a {:?} model",
            cfg.architecture
        )))
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EpochStats {
    /// Mean pre-update enhancement loss.
    pub enh: f64,
    /// Mean pre-update recognition loss.
    pub asr: f64,
    /// Weight used at the last update of a joint epoch.
    pub lambda: Option<f64>,
    pub lambdas: Vec<LambdaRecord>,
    pub updates: u64,
    pub skipped: u64,
}

/// One pass over `corpus` in seeded shuffled order with a per-utterance
/// update. Both losses are measured whichever one is optimised.
#[allow(clippy::too_many_arguments)]
pub fn run_epoch(
    ctx: &ModelContext,
    store: &mut ParameterStore,
    corpus: &[Utterance],
    objective: Objective,
    mask: UpdateMask,
    optimizer: &mut OptimizerState,
    rng: &mut ChaCha8Rng,
    epoch: usize,
) -> Result<EpochStats> {
    check_routing(&ctx.config, objective, mask)?;
    if corpus.is_empty() {
        return Err(Error::invalid_input("empty training corpus"));
    }
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(rng);

    let mut stats = EpochStats::default();
    let (mut enh_sum, mut asr_sum) = (0.0, 0.0);
    for i in order {
        let utt = &corpus[i];
        let Some(m) = measure(ctx, store, utt)? else {
            stats.skipped += 1;
            continue;
        };
        enh_sum += m.enh.value;
        asr_sum += m.asr.value;

        let joint;
        let (upstream, request) = match objective {
            Objective::Enh => (
                Upstream {
                    enhanced: Some(&m.enh.grad),
                    logits: None,
                },
                GradRequest { enh: true, asr: false },
            ),
            Objective::Asr => (
                Upstream {
                    enhanced: None,
                    logits: Some(&m.asr.grad),
                },
                GradRequest {
                    enh: mask == UpdateMask::All && ctx.config.has_enhancement(),
                    asr: true,
                },
            ),
            Objective::Joint(cfg) => {
                joint = joint_loss(&m.enh, &m.asr, &cfg)?;
                stats.lambda = Some(joint.lambda);
                stats.lambdas.push(LambdaRecord {
                    epoch,
                    l_enh: m.enh.value,
                    l_asr: m.asr.value,
                    lambda: joint.lambda,
                });
                (
                    Upstream {
                        enhanced: Some(&joint.enh_grad),
                        logits: Some(&joint.asr_grad),
                    },
                    GradRequest::ALL,
                )
            }
        };
        let mut grads = backward(&ctx.config, store, &ctx.mel, &m.output.cache, upstream, request)?;
        if let Some(max) = optimizer.config.clip_norm {
            clip_global_norm(&mut grads, max);
        }
        adam_step(store, &grads, optimizer, mask)?;
        stats.updates += 1;
    }
    let used = stats.updates as f64;
    if stats.updates == 0 {
        return Err(Error::invalid_input("every utterance was skipped"));
    }
    stats.enh = enh_sum / used;
    stats.asr = asr_sum / used;
    Ok(stats)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalStats {
    pub enh: f64,
    pub asr: f64,
    /// Greedy-decoding phone error rate, percent.
    pub per: f64,
    pub skipped: u64,
}

/// Mean losses and PER of `store` on `corpus`, without updates.
pub fn evaluate(ctx: &ModelContext, store: &ParameterStore, corpus: &[Utterance]) -> Result<EvalStats> {
    if corpus.is_empty() {
        return Err(Error::invalid_input("empty evaluation corpus"));
    }
    let (mut enh, mut asr, mut used, mut skipped) = (0.0, 0.0, 0u64, 0u64);
    let mut hyps = Vec::with_capacity(corpus.len());
    for utt in corpus {
        match measure(ctx, store, utt)? {
            Some(m) => {
                enh += m.enh.value;
                asr += m.asr.value;
                used += 1;
                hyps.push(ctc_greedy_decode(&m.output.logits));
            }
            None => {
                skipped += 1;
                hyps.push(ctc_greedy_decode(&ctx.forward(store, utt)?.logits));
            }
        }
    }
    if used == 0 {
        return Err(Error::invalid_input("every evaluation utterance was skipped"));
    }
    let refs: Vec<_> = corpus.iter().map(|u| &u.labels).collect();
    let per = score_ids(&refs, &hyps)?.per;
    Ok(EvalStats {
        enh: enh / used as f64,
        asr: asr / used as f64,
        per,
        skipped,
    })
}
