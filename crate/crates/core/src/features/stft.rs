use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::Spectrogram;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const DEFAULT_WINDOW: usize = 256;
pub const DEFAULT_HOP: usize = 128;

/// Periodic Hann window of length `len`.
pub(crate) fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
        .collect()
}

/// Hann-windowed short-time Fourier magnitude.
///
/// Produces `1 + (len - window_len) / hop` frames of `window_len / 2 + 1`
/// bins each.
pub fn stft_magnitude(samples: &[f64], window_len: usize, hop: usize) -> Result<Spectrogram> {
    if hop == 0 || window_len < hop {
        return Err(Error::invalid_input(format!(
            "need window_len >= hop >= 1, got window_len={window_len} hop={hop}"
        )));
    }
    if samples.len() < window_len {
        return Err(Error::invalid_input(format!(
            "{} samples is shorter than the {window_len}-sample window",
            samples.len()
        )));
    }
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid_input("samples must be finite"));
    }

    let frames = 1 + (samples.len() - window_len) / hop;
    let bins = window_len / 2 + 1;
    let window = hann(window_len);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(window_len);
    let mut buf = vec![Complex::new(0.0, 0.0); window_len];
    let mut out = Matrix::zeros(frames, bins);

    for t in 0..frames {
        let chunk = &samples[t * hop..t * hop + window_len];
        for ((b, &x), &w) in buf.iter_mut().zip(chunk).zip(&window) {
            *b = Complex::new(x * w, 0.0);
        }
        fft.process(&mut buf);
        for (dst, c) in out.row_mut(t).iter_mut().zip(&buf[..bins]) {
            *dst = c.norm();
        }
    }
    Spectrogram::new(out)
}
