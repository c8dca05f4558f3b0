//! Loss functions with gradients: CTC, MSE, permutation-invariant MSE, and
//! the weighted joint loss with its adaptive coefficient.

mod ctc;

pub use crate::phones::PhoneSequence;
pub use ctc::{ctc_loss, log_softmax};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// A scalar loss and its gradient with respect to the predicted quantity.
#[derive(Clone, Debug, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub grad: Matrix,
}

/// Mean squared error over all `T·N` entries.
pub fn mse_loss(y_hat: &Matrix, y: &Matrix) -> Result<LossValue> {
    if y_hat.shape() != y.shape() {
        return Err(Error::invalid_input(format!(
            "mse shapes differ: {:?} vs {:?}",
            y_hat.shape(),
            y.shape()
        )));
    }
    if y_hat.is_empty() {
        return Err(Error::invalid_input("mse of an empty matrix"));
    }
    let n = y_hat.len() as f64;
    let diff = y_hat.sub(y);
    let value = diff.sum_squares() / n;
    let mut grad = diff;
    grad.scale(2.0 / n);
    Ok(LossValue { value, grad })
}

/// Result of [`pit_mse`].
#[derive(Clone, Debug, PartialEq)]
pub struct PitLoss {
    pub value: f64,
    /// Gradient per predicted stream.
    pub grads: Vec<Matrix>,
    /// `assignment[s]` is the target matched to stream `s`.
    pub assignment: Vec<usize>,
}

impl PitLoss {
    /// Stream gradients side by side, matching a `T×(S·N)` head output.
    pub fn stacked_grad(&self) -> Result<Matrix> {
        let (first, rest) = self.grads.split_first().expect("at least two streams");
        rest.iter().try_fold(first.clone(), |acc, g| acc.hstack(g))
    }

    /// Stream assigned to target `target`.
    pub fn stream_for(&self, target: usize) -> Option<usize> {
        self.assignment.iter().position(|&t| t == target)
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(n), &mut vec![false; n], &mut out);
    out
}

/// Minimum over stream-to-target assignments of the mean per-stream MSE.
///
/// Permutations are visited in lexicographic order and a later one replaces
/// the incumbent only if strictly better, so ties keep the identity.
pub fn pit_mse(y_hats: &[Matrix], ys: &[Matrix]) -> Result<PitLoss> {
    if y_hats.len() != ys.len() {
        return Err(Error::invalid_input(format!(
            "{} streams but {} targets",
            y_hats.len(),
            ys.len()
        )));
    }
    if y_hats.len() < 2 {
        return Err(Error::invalid_input(
            "permutation-invariant loss needs at least two streams",
        ));
    }
    let streams = y_hats.len();
    // pairwise table: cost[s][t]
    let mut table = Vec::with_capacity(streams);
    for y_hat in y_hats {
        let row = ys.iter().map(|y| mse_loss(y_hat, y)).collect::<Result<Vec<_>>>()?;
        table.push(row);
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for perm in permutations(streams) {
        let value = perm.iter().enumerate().map(|(s, &t)| table[s][t].value).sum::<f64>() / streams as f64;
        if best.as_ref().is_none_or(|(b, _)| value < *b) {
            best = Some((value, perm));
        }
    }
    let (value, assignment) = best.expect("at least one permutation");
    let grads = assignment
        .iter()
        .enumerate()
        .map(|(s, &t)| table[s][t].grad.map(|g| g / streams as f64))
        .collect();
    Ok(PitLoss {
        value,
        grads,
        assignment,
    })
}

/// Smallest positive loss accepted by [`lambda_adapt`].
pub const LAMBDA_FLOOR: f64 = 1e-12;

fn pow10(exp: i32) -> f64 {
    if exp >= 0 {
        10f64.powi(exp)
    } else {
        1.0 / 10f64.powi(-exp)
    }
}

/// `⌊log10 x⌋`, corrected for rounding in `log10` near powers of ten.
pub fn decade(x: f64) -> i32 {
    let mut e = x.log10().floor() as i32;
    if pow10(e) > x {
        e -= 1;
    } else if pow10(e + 1) <= x {
        e += 1;
    }
    e
}

/// Adaptive weight `10^⌊log10 L_asr⌋ / 10^⌊log10 L_enh⌋`.
///
/// Nonpositive or non-finite inputs are clamped to [`LAMBDA_FLOOR`] with a
/// logged warning.
pub fn lambda_adapt(l_asr: f64, l_enh: f64) -> f64 {
    let clamp = |name: &str, v: f64| {
        if v > 0.0 && v.is_finite() {
            v
        } else {
            log::warn!("lambda_adapt: {name} = {v} is not positive, clamped to {LAMBDA_FLOOR:e}");
            LAMBDA_FLOOR
        }
    };
    let (a, e) = (clamp("L_asr", l_asr), clamp("L_enh", l_enh));
    pow10(decade(a) - decade(e))
}

/// Weighting of the enhancement loss in the joint objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum JointLossConfig {
    Fixed { lambda: f64 },
    Adaptive {},
}

impl JointLossConfig {
    pub fn validate(&self) -> Result<()> {
        match *self {
            JointLossConfig::Fixed { lambda } if !(lambda.is_finite() && lambda >= 0.0) => Err(Error::invalid_config(
                format!("fixed lambda must be finite and >= 0, got {lambda}"),
            )),
            _ => Ok(()),
        }
    }

    /// Weight for one utterance given its raw losses.
    pub fn lambda(&self, l_enh: f64, l_asr: f64) -> f64 {
        match *self {
            JointLossConfig::Fixed { lambda } => lambda,
            JointLossConfig::Adaptive {} => lambda_adapt(l_asr, l_enh),
        }
    }
}

/// Combined joint loss with the upstream gradients for both branches.
#[derive(Clone, Debug, PartialEq)]
pub struct JointLoss {
    pub value: f64,
    pub lambda: f64,
    /// `λ·∂L_enh`.
    pub enh_grad: Matrix,
    /// `∂L_asr`.
    pub asr_grad: Matrix,
}

/// `λ·L_enh + L_asr`, with `λ` held constant under differentiation.
pub fn joint_loss(l_enh: &LossValue, l_asr: &LossValue, cfg: &JointLossConfig) -> Result<JointLoss> {
    cfg.validate()?;
    if !(l_enh.value.is_finite() && l_asr.value.is_finite()) {
        return Err(Error::Numeric(format!(
            "joint loss of non-finite parts: enh {}, asr {}",
            l_enh.value, l_asr.value
        )));
    }
    let lambda = cfg.lambda(l_enh.value, l_asr.value);
    Ok(JointLoss {
        value: lambda * l_enh.value + l_asr.value,
        lambda,
        enh_grad: l_enh.grad.map(|g| lambda * g),
        asr_grad: l_asr.grad.clone(),
    })
}
