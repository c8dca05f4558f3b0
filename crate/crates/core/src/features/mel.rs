use super::Spectrogram;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// `C×N` matrix of triangular mel bands.
#[derive(Clone, Debug, PartialEq)]
pub struct MelFilterbank {
    weights: Matrix,
}

impl MelFilterbank {
    pub fn from_weights(weights: Matrix) -> Result<Self> {
        if weights.rows() == 0 || weights.cols() == 0 {
            return Err(Error::invalid_config("filterbank must be at least 1x1"));
        }
        if weights.as_slice().iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid_config(
                "filterbank weights must be finite and nonnegative",
            ));
        }
        if let Some(r) = (0..weights.rows()).find(|&r| weights.row(r).iter().all(|&w| w == 0.0)) {
            return Err(Error::invalid_config(format!("filterbank row {r} is all zero")));
        }
        Ok(MelFilterbank { weights })
    }

    /// Pass-through warp for `C = N`.
    pub fn identity(bins: usize) -> Self {
        MelFilterbank {
            weights: Matrix::identity(bins),
        }
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn channels(&self) -> usize {
        self.weights.rows()
    }

    pub fn bins(&self) -> usize {
        self.weights.cols()
    }

    /// Row `i` of the result is `m · frames_i`.
    pub fn warp(&self, frames: &Matrix) -> Result<Matrix> {
        if frames.cols() != self.bins() {
            return Err(Error::invalid_input(format!(
                "filterbank expects {} bins, frames have {}",
                self.bins(),
                frames.cols()
            )));
        }
        Ok(frames.matmul_transposed(&self.weights))
    }

    /// Pulls a `T×C` gradient back to `T×N`.
    pub fn warp_backward(&self, grad: &Matrix) -> Matrix {
        grad.matmul(&self.weights)
    }
}

/// Triangular filters with centers equally spaced on the mel scale between
/// 0 Hz and `sample_rate / 2`, peak height one.
///
/// Adjacent triangles interpolate linearly between neighbouring centers, so
/// every bin's column sums to at most one. Centers are pushed at least one
/// bin apart so each band covers at least one bin.
pub fn mel_filterbank(channels: usize, bins: usize, sample_rate: f64) -> Result<MelFilterbank> {
    if channels == 0 || bins == 0 {
        return Err(Error::invalid_config("mel filterbank needs C >= 1 and N >= 1"));
    }
    if channels > bins {
        return Err(Error::invalid_config(format!(
            "{channels} mel channels exceed {bins} frequency bins"
        )));
    }
    if !(sample_rate.is_finite() && sample_rate > 0.0) {
        return Err(Error::invalid_config(format!("bad sample rate {sample_rate}")));
    }

    let nyquist = sample_rate / 2.0;
    let top_mel = hz_to_mel(nyquist);
    let last_bin = (bins - 1) as f64;
    let hz_to_bin = |hz: f64| if bins == 1 { 0.0 } else { hz / nyquist * last_bin };

    let mut centers: Vec<f64> = (1..=channels)
        .map(|i| hz_to_bin(mel_to_hz(top_mel * i as f64 / (channels + 1) as f64)))
        .collect();
    for i in 1..channels {
        centers[i] = centers[i].max(centers[i - 1] + 1.0);
    }
    centers[channels - 1] = centers[channels - 1].min(last_bin);
    for i in (0..channels - 1).rev() {
        centers[i] = centers[i].min(centers[i + 1] - 1.0);
    }

    let left_edge = 0f64.min(centers[0] - 1.0);
    let right_edge = last_bin.max(centers[channels - 1] + 1.0);
    let mut weights = Matrix::zeros(channels, bins);
    for c in 0..channels {
        let lo = if c == 0 { left_edge } else { centers[c - 1] };
        let mid = centers[c];
        let hi = if c + 1 == channels { right_edge } else { centers[c + 1] };
        for b in 0..bins {
            let x = b as f64;
            let w = if x <= lo || x >= hi {
                0.0
            } else if x <= mid {
                (x - lo) / (mid - lo)
            } else {
                (hi - x) / (hi - mid)
            };
            weights[(c, b)] = w;
        }
    }
    MelFilterbank::from_weights(weights)
}

/// `T×C` mel representation of `s`.
pub fn mel_warp(m: &MelFilterbank, s: &Spectrogram) -> Result<Matrix> {
    m.warp(s.frames())
}
