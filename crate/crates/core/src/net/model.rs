use super::lstm::{sigmoid, stack_backward, stack_forward, BlstmCache};
use super::params::{AsrParams, EnhParams, ParameterStore, Partition};
use super::{Architecture, AsrInput, ModelConfig};
use crate::error::{Error, Result};
use crate::features::{MelFilterbank, StdVector, Utterance};
use crate::losses::pit_mse;
use crate::matrix::Matrix;

/// Largest sigmoid value kept, so the head never reaches `k·d` exactly.
const SIGMOID_CEIL: f64 = 1.0 - f64::EPSILON;
const SIGMOID_FLOOR: f64 = 1e-300;

#[derive(Clone, Debug)]
pub struct AsrCache {
    layers: Vec<BlstmCache>,
    top: Matrix,
}

pub fn asr_forward(cfg: &ModelConfig, p: &AsrParams, input: &Matrix) -> Result<(Matrix, AsrCache)> {
    if input.cols() != cfg.asr_input_width() {
        return Err(Error::invalid_input(format!(
            "recogniser expects {} input features for {:?}/{:?}, got {}",
            cfg.asr_input_width(),
            cfg.architecture,
            cfg.asr_input,
            input.cols()
        )));
    }
    let (top, layers) = stack_forward(&p.layers, input)?;
    let logits = p.output.forward(&top);
    Ok((logits, AsrCache { layers, top }))
}

/// Returns `dL/d input`.
pub fn asr_backward(p: &AsrParams, cache: &AsrCache, d_logits: &Matrix, grads: &mut AsrParams) -> Result<Matrix> {
    if d_logits.shape() != [cache.top.rows(), p.output.weight.rows()] {
        return Err(Error::Internal(format!(
            "logit gradient {:?} does not match cached forward",
            d_logits.shape()
        )));
    }
    let d_top = p.output.backward(&cache.top, d_logits, &mut grads.output);
    stack_backward(&p.layers, &cache.layers, d_top, &mut grads.layers)
}

#[derive(Clone, Debug)]
pub struct EnhCache {
    layers: Vec<BlstmCache>,
    top: Matrix,
    sigma: Matrix,
    scale: Vec<f64>,
}

/// `σ(F(x)) ⊙ (k·d)`, one `N`-wide block per output stream.
pub fn enh_forward(cfg: &ModelConfig, p: &EnhParams, x: &Matrix, d: &StdVector) -> Result<(Matrix, EnhCache)> {
    if x.cols() != cfg.enh_input_width() {
        return Err(Error::invalid_input(format!(
            "enhancer expects {} input features, got {}",
            cfg.enh_input_width(),
            x.cols()
        )));
    }
    if d.len() != cfg.bins {
        return Err(Error::invalid_input(format!(
            "std vector has {} bins, model has {}",
            d.len(),
            cfg.bins
        )));
    }
    let (top, layers) = stack_forward(&p.layers, x)?;
    let mut sigma = p.head.forward(&top);
    sigma = sigma.map(|z| sigmoid(z).clamp(SIGMOID_FLOOR, SIGMOID_CEIL));
    let scale: Vec<f64> = d
        .as_slice()
        .iter()
        .map(|dn| cfg.head_scale * dn)
        .cycle()
        .take(cfg.enh_output_width())
        .collect();
    let mut y = sigma.clone();
    for t in 0..y.rows() {
        for (v, s) in y.row_mut(t).iter_mut().zip(&scale) {
            *v *= s;
        }
    }
    Ok((
        y,
        EnhCache {
            layers,
            top,
            sigma,
            scale,
        },
    ))
}

pub fn enh_backward(p: &EnhParams, cache: &EnhCache, d_out: &Matrix, grads: &mut EnhParams) -> Result<()> {
    if d_out.shape() != cache.sigma.shape() {
        return Err(Error::Internal(format!(
            "enhancement gradient {:?} does not match cached output {:?}",
            d_out.shape(),
            cache.sigma.shape()
        )));
    }
    let mut dz = d_out.clone();
    for t in 0..dz.rows() {
        let s = cache.sigma.row(t);
        for ((g, &sv), &k) in dz.row_mut(t).iter_mut().zip(s).zip(&cache.scale) {
            *g *= k * sv * (1.0 - sv);
        }
    }
    let d_top = p.head.backward(&cache.top, &dz, &mut grads.head);
    stack_backward(&p.layers, &cache.layers, d_top, &mut grads.layers)?;
    Ok(())
}

/// Enhancement network input for `utt`: `[s; v]`, or `s` alone for PIT.
pub fn enh_input(cfg: &ModelConfig, utt: &Utterance) -> Result<Matrix> {
    match cfg.architecture {
        Architecture::JointPit => Ok(utt.mixture.frames().clone()),
        _ => utt.mixture.frames().hstack(utt.visual.frames()),
    }
}

/// Recogniser input for an ASR-only model.
pub fn asr_input(cfg: &ModelConfig, utt: &Utterance, mel: &MelFilterbank) -> Result<Matrix> {
    match cfg.asr_input {
        AsrInput::Audio => mel.warp(utt.mixture.frames()),
        AsrInput::AudioVisual => mel.warp(utt.mixture.frames())?.hstack(utt.visual.frames()),
        AsrInput::Visual => Ok(utt.visual.frames().clone()),
    }
}

#[derive(Clone, Debug)]
pub struct ForwardCache {
    enh: Option<EnhCache>,
    asr: AsrCache,
    target_stream: usize,
    frames: usize,
}

#[derive(Clone, Debug)]
pub struct ModelOutput {
    /// Raw head output, `T×(S·N)`. Equal to `y_hat` for a single stream.
    pub enhanced: Matrix,
    /// Target-speaker estimate fed to the recogniser, `T×N`.
    pub y_hat: Matrix,
    pub logits: Matrix,
    /// Stream-to-target assignment chosen by PIT.
    pub assignment: Option<Vec<usize>>,
    pub cache: ForwardCache,
}

/// `F_asr(m · ŷ)` with `ŷ` from the enhancement network.
pub fn joint_forward(
    cfg: &ModelConfig,
    store: &ParameterStore,
    utt: &Utterance,
    mel: &MelFilterbank,
    d: &StdVector,
) -> Result<ModelOutput> {
    let enh_params = match (&store.enh, cfg.has_enhancement()) {
        (Some(p), true) => p,
        _ => {
            return Err(Error::invalid_input(
                "joint forward needs a joint architecture with an enhancement partition",
            ))
        }
    };
    let x = enh_input(cfg, utt)?;
    let (enhanced, enh_cache) = enh_forward(cfg, enh_params, &x, d)?;
    let n = cfg.bins;

    let (y_hat, target_stream, assignment) = if cfg.enh_streams() == 1 {
        (enhanced.clone(), 0, None)
    } else {
        let interferer = utt
            .interferer
            .as_ref()
            .ok_or_else(|| Error::invalid_input(format!("utterance {} has no interferer for PIT", utt.id)))?;
        let streams: Vec<Matrix> = (0..cfg.enh_streams())
            .map(|s| enhanced.column_block(s * n, n))
            .collect();
        let targets = [utt.clean.frames().clone(), interferer.frames().clone()];
        let pit = pit_mse(&streams, &targets)?;
        let stream = pit
            .assignment
            .iter()
            .position(|&k| k == 0)
            .expect("permutation covers target 0");
        (streams[stream].clone(), stream, Some(pit.assignment))
    };

    let warped = mel.warp(&y_hat)?;
    let (logits, asr_cache) = asr_forward(cfg, &store.asr, &warped)?;
    Ok(ModelOutput {
        enhanced,
        y_hat,
        logits,
        assignment,
        cache: ForwardCache {
            enh: Some(enh_cache),
            asr: asr_cache,
            target_stream,
            frames: utt.frames(),
        },
    })
}

/// Forward pass for any architecture.
///
/// An ASR-only model has no enhancement stage; its `y_hat` is the raw
/// mixture so the enhancement loss can still be measured.
pub fn forward(
    cfg: &ModelConfig,
    store: &ParameterStore,
    utt: &Utterance,
    mel: &MelFilterbank,
    d: &StdVector,
) -> Result<ModelOutput> {
    if cfg.has_enhancement() {
        return joint_forward(cfg, store, utt, mel, d);
    }
    let input = asr_input(cfg, utt, mel)?;
    let (logits, asr_cache) = asr_forward(cfg, &store.asr, &input)?;
    let mixture = utt.mixture.frames().clone();
    Ok(ModelOutput {
        enhanced: mixture.clone(),
        y_hat: mixture,
        logits,
        assignment: None,
        cache: ForwardCache {
            enh: None,
            asr: asr_cache,
            target_stream: 0,
            frames: utt.frames(),
        },
    })
}

/// Gradients flowing into the model outputs.
#[derive(Clone, Copy, Debug, Default)]
pub struct Upstream<'a> {
    /// `dL/d enhanced`, shaped like [`ModelOutput::enhanced`].
    pub enhanced: Option<&'a Matrix>,
    pub logits: Option<&'a Matrix>,
}

/// Which partitions to differentiate. Skipped partitions get zero gradients.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GradRequest {
    pub enh: bool,
    pub asr: bool,
}

impl GradRequest {
    pub const ALL: GradRequest = GradRequest { enh: true, asr: true };
}

/// Backpropagation through time over the cached forward pass.
pub fn backward(
    cfg: &ModelConfig,
    store: &ParameterStore,
    mel: &MelFilterbank,
    cache: &ForwardCache,
    upstream: Upstream<'_>,
    request: GradRequest,
) -> Result<ParameterStore> {
    let mut grads = store.zeros_like();
    let n = cfg.bins;
    let mut d_enhanced: Option<Matrix> = upstream.enhanced.cloned();
    if let Some(d) = &d_enhanced {
        if d.shape() != [cache.frames, cfg.enh_output_width()] && cfg.has_enhancement() {
            return Err(Error::Internal(format!(
                "enhancement upstream {:?} does not match forward ({} frames)",
                d.shape(),
                cache.frames
            )));
        }
    }

    if let Some(d_logits) = upstream.logits {
        let needs_input_grad = request.enh && cache.enh.is_some();
        if request.asr || needs_input_grad {
            let d_in = asr_backward(&store.asr, &cache.asr, d_logits, &mut grads.asr)?;
            if needs_input_grad {
                let d_y = mel.warp_backward(&d_in);
                let acc = d_enhanced.get_or_insert_with(|| Matrix::zeros(cache.frames, cfg.enh_output_width()));
                let off = cache.target_stream * n;
                for t in 0..cache.frames {
                    for (a, b) in acc.row_mut(t)[off..off + n].iter_mut().zip(d_y.row(t)) {
                        *a += b;
                    }
                }
            }
        }
        if !request.asr {
            grads.zero_partition(Partition::Asr);
        }
    }

    if request.enh {
        if let (Some(d), Some(enh_cache)) = (&d_enhanced, &cache.enh) {
            let (p, g) = match (&store.enh, &mut grads.enh) {
                (Some(p), Some(g)) => (p, g),
                _ => return Err(Error::Internal("enhancement cache without parameters".into())),
            };
            enh_backward(p, enh_cache, d, g)?;
        }
    }
    Ok(grads)
}
