use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Corpus, Spectrogram, Utterance, VisualFeatures};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::phones::{PhoneInventory, PhoneSequence};

/// Synthetic two-speaker corpus parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub utterances: usize,
    pub frames_min: usize,
    pub frames_max: usize,
    /// Frequency bins `N`.
    pub bins: usize,
    /// Visual feature dimension `M`.
    pub visual_dim: usize,
    /// Named phones; the model predicts this many plus the blank.
    pub phones: usize,
    pub phones_min: usize,
    pub phones_max: usize,
    #[serde(default = "default_interferer_gain")]
    pub interferer_gain: f64,
    #[serde(default = "default_visual_noise")]
    pub visual_noise: f64,
    /// Relative per-entry multiplicative jitter of source spectra, in `[0, 1)`.
    #[serde(default = "default_spectral_jitter")]
    pub spectral_jitter: f64,
}

fn default_interferer_gain() -> f64 {
    1.0
}

fn default_visual_noise() -> f64 {
    0.1
}

fn default_spectral_jitter() -> f64 {
    0.05
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            utterances: 60,
            frames_min: 24,
            frames_max: 36,
            bins: 16,
            visual_dim: 4,
            phones: 6,
            phones_min: 3,
            phones_max: 5,
            interferer_gain: default_interferer_gain(),
            visual_noise: default_visual_noise(),
            spectral_jitter: default_spectral_jitter(),
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::invalid_config(m));
        if self.utterances == 0 {
            return fail("corpus needs at least one utterance".into());
        }
        if self.bins == 0 || self.visual_dim == 0 {
            return fail("bins and visual_dim must be >= 1".into());
        }
        if self.phones_min == 0 || self.phones_min > self.phones_max {
            return fail(format!(
                "phones per utterance range {}..={} is empty",
                self.phones_min, self.phones_max
            ));
        }
        if self.frames_min > self.frames_max {
            return fail(format!(
                "frame range {}..={} is empty",
                self.frames_min, self.frames_max
            ));
        }
        if self.frames_min <= self.phones_max {
            return fail(format!(
                "{} phones cannot be aligned to as few as {} frames",
                self.phones_max, self.frames_min
            ));
        }
        if self.phones == 1 && self.phones_max > 1 {
            return fail("a single-phone inventory cannot produce repeat-free sequences".into());
        }
        if !(self.interferer_gain.is_finite() && self.interferer_gain >= 0.0) {
            return fail(format!("bad interferer_gain {}", self.interferer_gain));
        }
        if !(self.visual_noise.is_finite() && self.visual_noise >= 0.0) {
            return fail(format!("bad visual_noise {}", self.visual_noise));
        }
        if !(0.0..1.0).contains(&self.spectral_jitter) {
            return fail(format!("spectral_jitter {} not in [0, 1)", self.spectral_jitter));
        }
        PhoneInventory::timit_prefix(self.phones)?;
        Ok(())
    }
}

/// Per-phone spectral envelopes and visual embeddings shared by all
/// utterances of one corpus.
struct PhoneWorld {
    envelopes: Vec<Vec<f64>>,
    embeddings: Vec<Vec<f64>>,
}

impl PhoneWorld {
    fn sample(cfg: &CorpusConfig, rng: &mut ChaCha8Rng) -> Self {
        let n = cfg.bins as f64;
        let max_width = (n / 8.0).max(1.0);
        let envelopes = (0..cfg.phones)
            .map(|_| {
                let formants: Vec<(f64, f64, f64)> = (0..2)
                    .map(|_| {
                        (
                            rng.random_range(0.0..n),
                            rng.random_range(0.8..=max_width),
                            rng.random_range(0.5..1.0),
                        )
                    })
                    .collect();
                (0..cfg.bins)
                    .map(|b| {
                        0.05 + formants
                            .iter()
                            .map(|&(c, w, h)| h * (-0.5 * ((b as f64 - c) / w).powi(2)).exp())
                            .sum::<f64>()
                    })
                    .collect()
            })
            .collect();
        let embeddings = (0..cfg.phones)
            .map(|_| (0..cfg.visual_dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        PhoneWorld { envelopes, embeddings }
    }
}

struct Speaker {
    gain: f64,
    comb: Vec<f64>,
}

impl Speaker {
    fn sample(bins: usize, rng: &mut ChaCha8Rng) -> Self {
        let spacing: f64 = rng.random_range(2.5..6.0);
        let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let comb = (0..bins)
            .map(|b| 0.55 + 0.45 * (std::f64::consts::TAU * b as f64 / spacing + phase).cos())
            .collect();
        Speaker {
            gain: rng.random_range(0.7..1.3),
            comb,
        }
    }
}

/// Repeat-free phone sequence and its frame-level expansion over `frames`.
fn sample_alignment(cfg: &CorpusConfig, frames: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let count = rng.random_range(cfg.phones_min..=cfg.phones_max);
    let mut phones = Vec::with_capacity(count);
    for i in 0..count {
        let p = loop {
            let p = rng.random_range(0..cfg.phones);
            if i == 0 || p != phones[i - 1] {
                break p;
            }
        };
        phones.push(p);
    }
    let base = (frames / (2 * count)).max(1);
    let mut durations = vec![base; count];
    for _ in 0..frames - base * count {
        durations[rng.random_range(0..count)] += 1;
    }
    let per_frame = phones
        .iter()
        .zip(&durations)
        .flat_map(|(&p, &d)| std::iter::repeat_n(p, d))
        .collect();
    (phones, per_frame)
}

fn render_source(
    world: &PhoneWorld,
    speaker: &Speaker,
    per_frame: &[usize],
    jitter: f64,
    scale: f64,
    rng: &mut ChaCha8Rng,
) -> Matrix {
    let bins = speaker.comb.len();
    let mut m = Matrix::zeros(per_frame.len(), bins);
    for (t, &p) in per_frame.iter().enumerate() {
        let env = &world.envelopes[p];
        for (b, dst) in m.row_mut(t).iter_mut().enumerate() {
            let u: f64 = rng.random_range(-1.0..=1.0);
            *dst = scale * speaker.gain * env[b] * speaker.comb[b] * (1.0 + jitter * u);
        }
    }
    m
}

/// Three-tap smoothing of the per-frame phone embeddings plus Gaussian noise.
fn render_visual(world: &PhoneWorld, per_frame: &[usize], noise: f64, rng: &mut ChaCha8Rng) -> Matrix {
    let t_len = per_frame.len();
    let dim = world.embeddings[0].len();
    let normal = Normal::new(0.0, noise).expect("noise validated nonnegative");
    Matrix::from_fn(t_len, dim, |t, j| {
        let at = |i: usize| world.embeddings[per_frame[i]][j];
        let prev = at(t.saturating_sub(1));
        let next = at((t + 1).min(t_len - 1));
        0.25 * prev + 0.5 * at(t) + 0.25 * next + normal.sample(rng)
    })
}

/// Deterministic synthetic corpus of two-speaker magnitude mixtures.
///
/// Both speakers are drawn from the same distribution, so the audio alone
/// does not say which of them is the target; the visual stream tracks the
/// target's phones.
pub fn synth_corpus(cfg: &CorpusConfig, seed: u64) -> Result<Corpus> {
    cfg.validate()?;
    let inventory = PhoneInventory::timit_prefix(cfg.phones)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let world = PhoneWorld::sample(cfg, &mut rng);

    let mut utterances = Vec::with_capacity(cfg.utterances);
    for i in 0..cfg.utterances {
        let frames = rng.random_range(cfg.frames_min..=cfg.frames_max);
        let target = Speaker::sample(cfg.bins, &mut rng);
        let other = Speaker::sample(cfg.bins, &mut rng);
        let (labels, target_frames) = sample_alignment(cfg, frames, &mut rng);
        let (_, other_frames) = sample_alignment(cfg, frames, &mut rng);

        let clean = render_source(&world, &target, &target_frames, cfg.spectral_jitter, 1.0, &mut rng);
        let interferer = render_source(
            &world,
            &other,
            &other_frames,
            cfg.spectral_jitter,
            cfg.interferer_gain,
            &mut rng,
        );
        let mut mixture = clean.clone();
        mixture.add_assign(&interferer);
        let visual = render_visual(&world, &target_frames, cfg.visual_noise, &mut rng);

        utterances.push(Utterance::new(
            format!("utt{i:04}"),
            Spectrogram::new(mixture)?,
            Spectrogram::new(clean)?,
            VisualFeatures::new(visual)?,
            PhoneSequence::new(labels),
            Some(Spectrogram::new(interferer)?),
        )?);
    }
    Corpus::new(inventory, utterances)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CorpusConfig {
        CorpusConfig {
            utterances: 5,
            ..CorpusConfig::default()
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        let a = synth_corpus(&small(), 3).unwrap();
        let b = synth_corpus(&small(), 3).unwrap();
        assert_eq!(a, b);
        let c = synth_corpus(&small(), 4).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn silent_interferer_leaves_clean_mixture() {
        let cfg = CorpusConfig {
            interferer_gain: 0.0,
            ..small()
        };
        for u in synth_corpus(&cfg, 9).unwrap().utterances {
            assert_eq!(u.mixture, u.clean);
        }
    }

    #[test]
    fn mixture_is_additive() {
        for u in synth_corpus(&small(), 21).unwrap().utterances {
            let residual = u.mixture.frames().sub(u.clean.frames());
            let interferer = u.interferer.as_ref().unwrap().frames();
            assert!(residual.max_abs_diff(interferer) <= 1e-12);
        }
    }

    #[test]
    fn labels_are_repeat_free_and_feasible() {
        for u in synth_corpus(&small(), 5).unwrap().utterances {
            assert_eq!(u.labels.repeats(), 0);
            assert!(u.labels.len() < u.frames());
            assert!((3..=5).contains(&u.labels.len()));
        }
    }

    #[test]
    fn infeasible_configs_are_rejected() {
        let cfg = CorpusConfig {
            frames_min: 5,
            frames_max: 8,
            phones_max: 5,
            ..small()
        };
        assert!(matches!(synth_corpus(&cfg, 0), Err(Error::InvalidConfig(_))));
        let cfg = CorpusConfig { phones: 62, ..small() };
        assert!(synth_corpus(&cfg, 0).is_err());
    }
}
