//! Model inputs and targets: spectrograms, visual motion features, mel
//! warping, the per-bin scale vector of the enhancement head, and a
//! synthetic two-speaker corpus with its on-disk format.

mod corpus_io;
mod mel;
mod stft;
mod synth;

pub use corpus_io::{load_corpus, save_corpus, CORPUS_MANIFEST};
pub use mel::{hz_to_mel, mel_filterbank, mel_to_hz, mel_warp, MelFilterbank};
pub use stft::{stft_magnitude, DEFAULT_HOP, DEFAULT_WINDOW};
pub use synth::{synth_corpus, CorpusConfig};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::phones::{PhoneInventory, PhoneSequence};

/// Lower bound on every entry of [`StdVector`].
pub const EPSILON_D: f64 = 1e-6;

/// `T×N` nonnegative magnitude frames.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrogram(Matrix);

/// Clean target frames share the spectrogram representation.
pub type CleanTarget = Spectrogram;

impl Spectrogram {
    pub fn new(frames: Matrix) -> Result<Self> {
        if frames.rows() == 0 || frames.cols() == 0 {
            return Err(Error::invalid_input(format!(
                "spectrogram must be at least 1x1, got {}x{}",
                frames.rows(),
                frames.cols()
            )));
        }
        if let Some(v) = frames.as_slice().iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::invalid_input(format!(
                "spectrogram entries must be finite and nonnegative, found {v}"
            )));
        }
        Ok(Spectrogram(frames))
    }

    pub fn frames(&self) -> &Matrix {
        &self.0
    }

    pub fn into_inner(self) -> Matrix {
        self.0
    }

    /// Frame count `T`.
    pub fn len(&self) -> usize {
        self.0.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.rows() == 0
    }

    /// Bin count `N`.
    pub fn bins(&self) -> usize {
        self.0.cols()
    }
}

/// `T×M` landmark motion vectors of the target speaker.
#[derive(Clone, Debug, PartialEq)]
pub struct VisualFeatures(Matrix);

impl VisualFeatures {
    pub fn new(frames: Matrix) -> Result<Self> {
        if frames.cols() == 0 {
            return Err(Error::invalid_input("visual feature dimension must be >= 1"));
        }
        if !frames.is_finite() {
            return Err(Error::invalid_input("visual features must be finite"));
        }
        Ok(VisualFeatures(frames))
    }

    pub fn frames(&self) -> &Matrix {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.0.cols()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub mixture: Spectrogram,
    pub clean: CleanTarget,
    pub visual: VisualFeatures,
    pub labels: PhoneSequence,
    /// Clean interfering source. Only permutation-invariant training needs it.
    pub interferer: Option<CleanTarget>,
}

impl Utterance {
    pub fn new(
        id: impl Into<String>,
        mixture: Spectrogram,
        clean: CleanTarget,
        visual: VisualFeatures,
        labels: PhoneSequence,
        interferer: Option<CleanTarget>,
    ) -> Result<Self> {
        let utt = Utterance {
            id: id.into(),
            mixture,
            clean,
            visual,
            labels,
            interferer,
        };
        utt.validate()?;
        Ok(utt)
    }

    pub fn frames(&self) -> usize {
        self.mixture.len()
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.mixture.len();
        let n = self.mixture.bins();
        let bad = |msg: String| Err(Error::format(self.id.clone(), msg));
        if self.clean.len() != t || self.clean.bins() != n {
            return bad(format!(
                "clean target is {}x{}, mixture is {t}x{n}",
                self.clean.len(),
                self.clean.bins()
            ));
        }
        if self.visual.len() != t {
            return bad(format!("visual has {} frames, mixture has {t}", self.visual.len()));
        }
        if let Some(i) = &self.interferer {
            if i.len() != t || i.bins() != n {
                return bad(format!("interferer is {}x{}, mixture is {t}x{n}", i.len(), i.bins()));
            }
        }
        if self.labels.is_empty() {
            return bad("empty label sequence".into());
        }
        if self.labels.len() >= t || self.labels.min_frames() > t {
            return bad(format!("{} labels cannot be aligned to {t} frames", self.labels.len()));
        }
        Ok(())
    }
}

/// A set of utterances sharing dimensions and a phone inventory.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub inventory: PhoneInventory,
    pub utterances: Vec<Utterance>,
}

impl Corpus {
    pub fn new(inventory: PhoneInventory, utterances: Vec<Utterance>) -> Result<Self> {
        let corpus = Corpus { inventory, utterances };
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    /// `N`, taken from the first utterance.
    pub fn bins(&self) -> Option<usize> {
        self.utterances.first().map(|u| u.mixture.bins())
    }

    /// `M`, taken from the first utterance.
    pub fn visual_dim(&self) -> Option<usize> {
        self.utterances.first().map(|u| u.visual.dim())
    }

    /// `P`, including blank.
    pub fn classes(&self) -> usize {
        self.inventory.classes()
    }

    pub fn validate(&self) -> Result<()> {
        let (n, m) = match (self.bins(), self.visual_dim()) {
            (Some(n), Some(m)) => (n, m),
            _ => return Ok(()),
        };
        for u in &self.utterances {
            u.validate()?;
            if u.mixture.bins() != n || u.visual.dim() != m {
                return Err(Error::format(
                    u.id.clone(),
                    format!(
                        "dims N={} M={} differ from corpus N={n} M={m}",
                        u.mixture.bins(),
                        u.visual.dim()
                    ),
                ));
            }
            u.labels
                .validate(self.classes())
                .map_err(|e| Error::format(u.id.clone(), e.to_string()))?;
        }
        Ok(())
    }

    /// Splits off the utterances from `at` onward.
    pub fn split_off(&mut self, at: usize) -> Corpus {
        Corpus {
            inventory: self.inventory.clone(),
            utterances: self.utterances.split_off(at.min(self.utterances.len())),
        }
    }
}

/// Per-bin standard deviation of the clean training targets.
#[derive(Clone, Debug, PartialEq)]
pub struct StdVector(Vec<f64>);

impl StdVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid_input("std vector must be nonempty"));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= EPSILON_D)) {
            return Err(Error::invalid_input(format!(
                "std vector entries must be finite and >= {EPSILON_D}, found {v}"
            )));
        }
        Ok(StdVector(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Population standard deviation of every clean bin over all frames of all
/// utterances, floored at [`EPSILON_D`].
pub fn compute_std_vector(corpus: &[Utterance]) -> Result<StdVector> {
    let first = corpus
        .first()
        .ok_or_else(|| Error::invalid_input("cannot compute std vector of an empty corpus"))?;
    let n = first.clean.bins();
    // Welford accumulation per bin.
    let mut count = 0usize;
    let mut mean = vec![0.0; n];
    let mut m2 = vec![0.0; n];
    for utt in corpus {
        if utt.clean.bins() != n {
            return Err(Error::invalid_input(format!(
                "utterance {} has {} bins, expected {n}",
                utt.id,
                utt.clean.bins()
            )));
        }
        for frame in utt.clean.frames().iter_rows() {
            count += 1;
            let inv = 1.0 / count as f64;
            for ((x, mu), acc) in frame.iter().zip(mean.iter_mut()).zip(m2.iter_mut()) {
                let delta = x - *mu;
                *mu += delta * inv;
                *acc += delta * (x - *mu);
            }
        }
    }
    let values = m2
        .into_iter()
        .map(|acc| (acc / count as f64).max(0.0).sqrt().max(EPSILON_D))
        .collect();
    StdVector::new(values)
}
