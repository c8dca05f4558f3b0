//! Recurrent models: the BLSTM phone recogniser, the sigmoid-headed
//! enhancement network, their composition, and gradient checking.

mod checkpoint;
mod gradcheck;
mod lstm;
mod model;
mod params;

pub use checkpoint::{checkpoint_paths, load_checkpoint, save_checkpoint, Checkpoint};
pub use gradcheck::{grad_check, ArrayCheck, GradCheckOptions, GradCheckReport};
pub use lstm::{
    blstm_backward, blstm_forward, lstm_backward, lstm_forward, stack_backward, stack_forward, BlstmCache, Direction,
    LstmCache,
};
pub use model::{
    asr_backward, asr_forward, asr_input, backward, enh_backward, enh_forward, enh_input, forward, joint_forward,
    AsrCache, EnhCache, ForwardCache, GradRequest, ModelOutput, Upstream,
};
pub use params::{AsrParams, BlstmParams, EnhParams, Linear, LstmParams, ParamRef, ParameterStore, Partition};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{mel_filterbank, MelFilterbank};

/// Which network is trained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// Audio-visual enhancement feeding the recogniser through the mel warp.
    Joint,
    /// Audio-only two-stream enhancement trained with permutation-invariant
    /// MSE; the stream assigned to the target feeds the recogniser.
    JointPit,
    /// Recogniser alone on unenhanced features.
    AsrOnly,
}

/// Recogniser input for [`Architecture::AsrOnly`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AsrInput {
    /// Mel-warped mixture, width `C`.
    Audio,
    /// Mel-warped mixture stacked with motion vectors, width `C + M`.
    AudioVisual,
    /// Motion vectors alone, width `M`.
    Visual,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub enh_layers: usize,
    pub asr_layers: usize,
    /// Units per direction.
    pub hidden: usize,
    /// Spectrogram bins `N`.
    pub bins: usize,
    /// Visual dimension `M`.
    pub visual_dim: usize,
    /// Mel channels `C`.
    pub mel_channels: usize,
    /// Output classes `P`, blank included.
    pub classes: usize,
    /// Enhancement head scale `k`.
    pub head_scale: f64,
    pub asr_input: AsrInput,
    pub sample_rate: f64,
    /// Use the identity warp; requires `mel_channels == bins`.
    #[serde(default)]
    pub mel_identity: bool,
}

pub const DESK_HIDDEN: usize = 32;
pub const PAPER_HIDDEN: usize = 250;
pub const DEFAULT_HEAD_SCALE: f64 = 3.0;

impl ModelConfig {
    /// Two enhancement and two recognition layers at `hidden` units.
    pub fn new(
        architecture: Architecture,
        hidden: usize,
        bins: usize,
        visual_dim: usize,
        mel_channels: usize,
        classes: usize,
    ) -> Self {
        ModelConfig {
            architecture,
            enh_layers: 2,
            asr_layers: 2,
            hidden,
            bins,
            visual_dim,
            mel_channels,
            classes,
            head_scale: DEFAULT_HEAD_SCALE,
            asr_input: AsrInput::Audio,
            sample_rate: 16000.0,
            mel_identity: false,
        }
    }

    /// Very small dims for unit tests and gradient checks.
    pub fn tiny(architecture: Architecture) -> Self {
        ModelConfig::new(architecture, 3, 6, 2, 3, 4)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::invalid_config(m));
        if self.hidden == 0 || self.asr_layers == 0 || self.bins == 0 || self.visual_dim == 0 || self.mel_channels == 0
        {
            return fail("hidden, asr_layers, bins, visual_dim and mel_channels must be >= 1".into());
        }
        if self.has_enhancement() && self.enh_layers == 0 {
            return fail("enh_layers must be >= 1".into());
        }
        if self.classes < 2 {
            return fail(format!(
                "need at least one phone plus blank, got {} classes",
                self.classes
            ));
        }
        if !(self.head_scale.is_finite() && self.head_scale > 0.0) {
            return fail(format!("head_scale must be positive, got {}", self.head_scale));
        }
        if self.mel_channels > self.bins {
            return fail(format!("{} mel channels exceed {} bins", self.mel_channels, self.bins));
        }
        if self.mel_identity && self.mel_channels != self.bins {
            return fail("identity mel warp needs mel_channels == bins".into());
        }
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return fail(format!("bad sample_rate {}", self.sample_rate));
        }
        if self.has_enhancement() && self.asr_input != AsrInput::Audio {
            return fail("the joint recogniser only reads enhanced audio; asr_input must be audio".into());
        }
        Ok(())
    }

    pub fn has_enhancement(&self) -> bool {
        self.architecture != Architecture::AsrOnly
    }

    /// Output streams of the enhancement head.
    pub fn enh_streams(&self) -> usize {
        match self.architecture {
            Architecture::JointPit => 2,
            _ => 1,
        }
    }

    pub fn enh_input_width(&self) -> usize {
        match self.architecture {
            Architecture::JointPit => self.bins,
            _ => self.bins + self.visual_dim,
        }
    }

    pub fn enh_output_width(&self) -> usize {
        self.enh_streams() * self.bins
    }

    pub fn asr_input_width(&self) -> usize {
        match (self.architecture, self.asr_input) {
            (Architecture::AsrOnly, AsrInput::AudioVisual) => self.mel_channels + self.visual_dim,
            (Architecture::AsrOnly, AsrInput::Visual) => self.visual_dim,
            _ => self.mel_channels,
        }
    }

    pub fn mel_filterbank(&self) -> Result<MelFilterbank> {
        if self.mel_identity {
            Ok(MelFilterbank::identity(self.bins))
        } else {
            mel_filterbank(self.mel_channels, self.bins, self.sample_rate)
        }
    }
}
