use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::{DataSource, ExperimentConfig};
use crate::error::{Error, Result};
use crate::eval::{ctc_greedy_decode, emit_curves, score, PhoneMapping, ScoreReport};
use crate::features::{load_corpus, save_corpus, synth_corpus, CORPUS_MANIFEST};
use crate::losses::LossValue;
use crate::net::{
    backward, grad_check, load_checkpoint, save_checkpoint, Checkpoint, GradCheckOptions, GradCheckReport, GradRequest,
    ParameterStore, Upstream,
};
use crate::training::{measure, run_strategy, ModelContext, OptimizerState, PhaseEnd, TrainingHistory};

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Written next to every command's outputs.
pub const CONFIG_ECHO: &str = "config.json";
pub const HISTORY_FILE: &str = "history.csv";
pub const FINAL_CHECKPOINT: &str = "model";
pub const CHECKPOINT_DIR: &str = "checkpoints";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorpusSummary {
    pub path: PathBuf,
    pub utterances: usize,
    pub bins: usize,
    pub visual_dim: usize,
    pub classes: usize,
    pub total_frames: usize,
    pub manifest_sha256: String,
}

/// Generates the configured synthetic corpus into `out`.
pub fn gen_corpus(cfg: &ExperimentConfig, out: &Path) -> Result<CorpusSummary> {
    let DataSource::Synth { corpus: ccfg, .. } = &cfg.data else {
        return Err(Error::invalid_config("gen-corpus needs a synth data source"));
    };
    let corpus = synth_corpus(ccfg, cfg.seed)?;
    save_corpus(&corpus, out)?;
    let manifest = out.join(CORPUS_MANIFEST);
    let bytes = fs::read(&manifest).map_err(|e| Error::io(&manifest, e))?;
    write_json(&out.join(CONFIG_ECHO), cfg)?;
    Ok(CorpusSummary {
        path: out.to_path_buf(),
        utterances: corpus.len(),
        bins: ccfg.bins,
        visual_dim: ccfg.visual_dim,
        classes: corpus.classes(),
        total_frames: corpus.utterances.iter().map(|u| u.frames()).sum(),
        manifest_sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub history: TrainingHistory,
    /// Stem of the final checkpoint.
    pub checkpoint: PathBuf,
    /// Stems of the end-of-phase checkpoints, in order.
    pub phase_checkpoints: Vec<(PhaseEnd, PathBuf)>,
    pub history_csv: PathBuf,
}

/// Path stem of the checkpoint written at the end of a phase.
pub fn phase_checkpoint_stem(out: &Path, end: &PhaseEnd) -> PathBuf {
    out.join(CHECKPOINT_DIR).join(format!(
        "phase{:03}-{}",
        end.index,
        end.phase.to_string().to_lowercase()
    ))
}

/// Runs the configured strategy and writes the config echo, per-phase and
/// final checkpoints, and the history CSV under the output directory.
pub fn train(cfg: &ExperimentConfig) -> Result<TrainOutcome> {
    let out = &cfg.output_dir;
    create_dir(out)?;
    create_dir(&out.join(CHECKPOINT_DIR))?;
    write_json(&out.join(CONFIG_ECHO), cfg)?;

    let data = cfg.load_data()?;
    let model_cfg = cfg.model_config(&data.train)?;
    let ctx = ModelContext::from_corpus(model_cfg.clone(), &data.train.utterances)?;
    let mut store = ParameterStore::init(&model_cfg, cfg.seed);
    let mut optimizer = OptimizerState::new(&store, cfg.optimizer);
    log::info!(
        "training {:?} with {} parameters on {} utterances ({} validation)",
        model_cfg.architecture,
        store.num_parameters(),
        data.train.len(),
        data.valid().len()
    );

    let mut phase_checkpoints = Vec::new();
    let snapshot = |store: &ParameterStore| Checkpoint {
        config: model_cfg.clone(),
        store: store.clone(),
        std_vector: ctx.std_vector.clone(),
    };
    let history = run_strategy(
        &ctx,
        &cfg.training_schedule(),
        &mut store,
        &mut optimizer,
        &data.train.utterances,
        &data.valid().utterances,
        &mut |end, s| {
            let stem = phase_checkpoint_stem(out, end);
            save_checkpoint(&stem, &snapshot(s))?;
            phase_checkpoints.push((*end, stem));
            Ok(())
        },
    )?;
    let checkpoint = out.join(FINAL_CHECKPOINT);
    save_checkpoint(&checkpoint, &snapshot(&store))?;
    let history_csv = out.join(HISTORY_FILE);
    emit_curves(&history, &history_csv)?;
    Ok(TrainOutcome {
        history,
        checkpoint,
        phase_checkpoints,
        history_csv,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub checkpoint: PathBuf,
    pub corpus: PathBuf,
    pub utterances: usize,
    pub enh_loss: f64,
    pub asr_loss: f64,
    /// PER on the corpus inventory.
    pub per_61: f64,
    /// PER after folding both sides with the mapping.
    pub per_39: Option<f64>,
    pub raw: ScoreReport,
    pub mapped: Option<ScoreReport>,
}

/// Scores a checkpoint on a corpus. Folded scoring needs `mapping`;
/// requesting it without one is a config error.
pub fn eval(checkpoint: &Path, corpus_dir: &Path, mapping: Option<&Path>, per39: bool) -> Result<EvalReport> {
    let mapping = match mapping {
        Some(p) if !p.is_file() => {
            return Err(Error::invalid_config(format!(
                "mapping file {} does not exist",
                p.display()
            )))
        }
        Some(p) => Some(PhoneMapping::load(p)?),
        None if per39 => return Err(Error::invalid_config("folded PER requested without a mapping file")),
        None => None,
    };
    let ckpt = load_checkpoint(checkpoint)?;
    let corpus = load_corpus(corpus_dir)?;
    if corpus.is_empty() {
        return Err(Error::invalid_input("evaluation corpus is empty"));
    }
    let mc = &ckpt.config;
    if corpus.bins() != Some(mc.bins) || corpus.visual_dim() != Some(mc.visual_dim) || corpus.classes() != mc.classes {
        return Err(Error::invalid_input(format!(
            "corpus dims (N={:?}, M={:?}, P={}) do not match the checkpoint (N={}, M={}, P={})",
            corpus.bins(),
            corpus.visual_dim(),
            corpus.classes(),
            mc.bins,
            mc.visual_dim,
            mc.classes
        )));
    }
    let ctx = ModelContext::new(ckpt.config.clone(), ckpt.std_vector.clone())?;
    let (mut enh, mut asr, mut used) = (0.0, 0.0, 0usize);
    let mut refs = Vec::with_capacity(corpus.len());
    let mut hyps = Vec::with_capacity(corpus.len());
    for utt in &corpus.utterances {
        let logits = match measure(&ctx, &ckpt.store, utt)? {
            Some(m) => {
                enh += m.enh.value;
                asr += m.asr.value;
                used += 1;
                m.output.logits
            }
            None => ctx.forward(&ckpt.store, utt)?.logits,
        };
        refs.push(corpus.inventory.to_symbols(&utt.labels)?);
        hyps.push(corpus.inventory.to_symbols(&ctc_greedy_decode(&logits))?);
    }
    let ids = || corpus.utterances.iter().map(|u| u.id.clone());
    let raw = score(&refs, &hyps, None)?.with_ids(ids());
    let mapped = mapping
        .as_ref()
        .map(|m| score(&refs, &hyps, Some(m)).map(|r| r.with_ids(ids())))
        .transpose()?;
    let mean = |s: f64| if used == 0 { 0.0 } else { s / used as f64 };
    Ok(EvalReport {
        checkpoint: checkpoint.to_path_buf(),
        corpus: corpus_dir.to_path_buf(),
        utterances: corpus.len(),
        enh_loss: mean(enh),
        asr_loss: mean(asr),
        per_61: raw.per,
        per_39: mapped.as_ref().map(|r| r.per),
        raw,
        mapped,
    })
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradCheckRequest {
    pub options: GradCheckOptions,
    /// Training utterance to differentiate on.
    pub utterance: usize,
    /// Doubles this array's analytic gradient, to exercise the checker.
    pub corrupt: Option<String>,
}

/// Checks the gradient of `L_enh + L_asr` for the configured model at its
/// initial weights on one training utterance, and writes the report under
/// the output directory.
pub fn grad_check_cmd(cfg: &ExperimentConfig, req: &GradCheckRequest) -> Result<GradCheckReport> {
    let data = cfg.load_data()?;
    let model_cfg = cfg.model_config(&data.train)?;
    let ctx = ModelContext::from_corpus(model_cfg.clone(), &data.train.utterances)?;
    let utt = data
        .train
        .utterances
        .get(req.utterance)
        .ok_or_else(|| Error::invalid_config(format!("utterance {} out of {}", req.utterance, data.train.len())))?;
    let store = ParameterStore::init(&model_cfg, cfg.seed);
    let with_enh = model_cfg.has_enhancement();
    let loss = |s: &ParameterStore| -> Result<Option<(f64, crate::training::Measured)>> {
        Ok(measure(&ctx, s, utt)?.map(|m| {
            let v = m.asr.value + if with_enh { m.enh.value } else { 0.0 };
            (v, m)
        }))
    };
    let infeasible = || Error::invalid_config(format!("utterance {} cannot be aligned", utt.id));
    let (_, m) = loss(&store)?.ok_or_else(infeasible)?;
    let LossValue { grad: enh_grad, .. } = &m.enh;
    let upstream = Upstream {
        enhanced: with_enh.then_some(enh_grad),
        logits: Some(&m.asr.grad),
    };
    let mut grads = backward(
        &model_cfg,
        &store,
        &ctx.mel,
        &m.output.cache,
        upstream,
        GradRequest::ALL,
    )?;
    if let Some(name) = &req.corrupt {
        let k = grads
            .arrays()
            .iter()
            .position(|p| &p.name == name)
            .ok_or_else(|| Error::invalid_config(format!("no parameter array named {name}")))?;
        grads.arrays_mut()[k].1.scale(2.0);
    }
    let report = grad_check(
        |s| loss(s)?.map(|(v, _)| v).ok_or_else(infeasible),
        &store,
        &grads,
        &req.options,
    )?;
    create_dir(&cfg.output_dir)?;
    write_json(&cfg.output_dir.join(CONFIG_ECHO), cfg)?;
    write_json(&cfg.output_dir.join("grad_check.json"), &report)?;
    Ok(report)
}
