use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{load_corpus, synth_corpus, Corpus, CorpusConfig};
use crate::net::{Architecture, AsrInput, ModelConfig, DEFAULT_HEAD_SCALE, DESK_HIDDEN, PAPER_HIDDEN};
use crate::training::{AdamConfig, Strategy, TrainingSchedule};

/// Where utterances come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Generated from the experiment seed. The last `valid_utterances`
    /// utterances form the validation set; with zero, validation reuses
    /// the training set.
    Synth {
        corpus: CorpusConfig,
        valid_utterances: usize,
    },
    /// Corpus directories on disk. Without `valid`, validation reuses the
    /// training set.
    Paths { train: PathBuf, valid: Option<PathBuf> },
}

/// Model settings whose dimensions come from the corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSpec {
    pub architecture: Architecture,
    pub enh_layers: usize,
    pub asr_layers: usize,
    pub hidden: usize,
    pub mel_channels: usize,
    pub head_scale: f64,
    pub asr_input: AsrInput,
    pub sample_rate: f64,
    pub mel_identity: bool,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            architecture: Architecture::Joint,
            enh_layers: 2,
            asr_layers: 2,
            hidden: DESK_HIDDEN,
            mel_channels: 8,
            head_scale: DEFAULT_HEAD_SCALE,
            asr_input: AsrInput::Audio,
            sample_rate: 16000.0,
            mel_identity: false,
        }
    }
}

impl ModelSpec {
    /// Full model config for a corpus with `bins`, `visual_dim` and `classes`.
    pub fn resolve(&self, bins: usize, visual_dim: usize, classes: usize) -> Result<ModelConfig> {
        let cfg = ModelConfig {
            architecture: self.architecture,
            enh_layers: self.enh_layers,
            asr_layers: self.asr_layers,
            hidden: self.hidden,
            bins,
            visual_dim,
            mel_channels: self.mel_channels,
            classes,
            head_scale: self.head_scale,
            asr_input: self.asr_input,
            sample_rate: self.sample_rate,
            mel_identity: self.mel_identity,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub strategy: Strategy,
    pub total_epochs: usize,
}

/// Model size presets selectable from the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// 32 units per direction, two layers per sub-model.
    Desk,
    /// 250 units per direction, two layers per sub-model.
    Paper,
}

impl Preset {
    pub fn apply(&self, model: &mut ModelSpec) {
        model.hidden = match self {
            Preset::Desk => DESK_HIDDEN,
            Preset::Paper => PAPER_HIDDEN,
        };
        model.enh_layers = 2;
        model.asr_layers = 2;
    }
}

/// One experiment. All randomness derives from `seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    #[serde(default)]
    pub model: ModelSpec,
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub optimizer: AdamConfig,
    pub output_dir: PathBuf,
    pub seed: u64,
}

/// Train and validation sets of an experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentData {
    pub train: Corpus,
    /// `None` when validation reuses the training set.
    pub valid: Option<Corpus>,
}

impl ExperimentData {
    pub fn valid(&self) -> &Corpus {
        self.valid.as_ref().unwrap_or(&self.train)
    }
}

impl ExperimentConfig {
    /// Parses and validates a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ExperimentConfig::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::invalid_config(format!("experiment config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies command-line overrides and revalidates.
    pub fn with_overrides(mut self, seed: Option<u64>, out: Option<&Path>, preset: Option<Preset>) -> Result<Self> {
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(o) = out {
            self.output_dir = o.to_path_buf();
        }
        if let Some(p) = preset {
            p.apply(&mut self.model);
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if let DataSource::Synth {
            corpus,
            valid_utterances,
        } = &self.data
        {
            corpus.validate()?;
            if *valid_utterances >= corpus.utterances {
                return Err(Error::invalid_config(format!(
                    "{valid_utterances} validation utterances leave none of {} for training",
                    corpus.utterances
                )));
            }
        }
        self.training_schedule().validate()?;
        self.optimizer.validate()?;
        let uses_enh = self.training_schedule().uses_enhancement();
        let has_enh = self.model.architecture != Architecture::AsrOnly;
        if uses_enh && !has_enh {
            return Err(Error::invalid_config(format!(
                "{:?} trains an enhancement model but the architecture is asr_only",
                self.schedule.strategy
            )));
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(Error::invalid_config("output_dir is empty"));
        }
        Ok(())
    }

    pub fn training_schedule(&self) -> TrainingSchedule {
        TrainingSchedule {
            strategy: self.schedule.strategy,
            total_epochs: self.schedule.total_epochs,
            seed: self.seed,
        }
    }

    pub fn load_data(&self) -> Result<ExperimentData> {
        match &self.data {
            DataSource::Synth {
                corpus,
                valid_utterances,
            } => {
                let mut train = synth_corpus(corpus, self.seed)?;
                let valid = (*valid_utterances > 0).then(|| train.split_off(corpus.utterances - valid_utterances));
                Ok(ExperimentData { train, valid })
            }
            DataSource::Paths { train, valid } => {
                let train = load_corpus(train)?;
                let valid = valid.as_deref().map(load_corpus).transpose()?;
                if let Some(v) = &valid {
                    if v.bins() != train.bins()
                        || v.visual_dim() != train.visual_dim()
                        || v.inventory != train.inventory
                    {
                        return Err(Error::invalid_config(
                            "validation corpus dims or inventory differ from training",
                        ));
                    }
                }
                Ok(ExperimentData { train, valid })
            }
        }
    }

    /// Model config with dimensions taken from `train`.
    pub fn model_config(&self, train: &Corpus) -> Result<ModelConfig> {
        let (bins, dim) = match (train.bins(), train.visual_dim()) {
            (Some(b), Some(m)) => (b, m),
            _ => return Err(Error::invalid_config("training corpus is empty")),
        };
        self.model.resolve(bins, dim, train.classes())
    }
}
