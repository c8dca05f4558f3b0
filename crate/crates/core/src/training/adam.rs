use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{ParameterStore, Partition};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global-norm gradient clip applied before each step; `None` disables.
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: Some(5.0),
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr.is_finite()
            && self.lr >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.clip_norm.is_none_or(|c| c.is_finite() && c > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::invalid_config(format!("bad optimizer settings {self:?}")))
        }
    }
}

/// Which partitions an update may touch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMask {
    All,
    AsrOnly,
    EnhOnly,
}

impl UpdateMask {
    pub fn allows(&self, part: Partition) -> bool {
        match self {
            UpdateMask::All => true,
            UpdateMask::AsrOnly => part == Partition::Asr,
            UpdateMask::EnhOnly => part == Partition::Enh,
        }
    }
}

/// Adam moments mirroring a [`ParameterStore`].
///
/// Bias correction uses a per-array step count, so arrays that sat out
/// frozen phases resume their own schedule.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub m: ParameterStore,
    pub v: ParameterStore,
    pub array_steps: Vec<u64>,
    /// Number of updates applied.
    pub steps: u64,
}

impl OptimizerState {
    pub fn new(store: &ParameterStore, config: AdamConfig) -> Self {
        OptimizerState {
            config,
            m: store.zeros_like(),
            v: store.zeros_like(),
            array_steps: vec![0; store.arrays().len()],
            steps: 0,
        }
    }
}

/// One Adam update of the arrays allowed by `mask`. Masked arrays and
/// their moments are left untouched.
pub fn adam_step(
    store: &mut ParameterStore,
    grads: &ParameterStore,
    state: &mut OptimizerState,
    mask: UpdateMask,
) -> Result<()> {
    if !store.same_layout(grads) || !store.same_layout(&state.m) {
        return Err(Error::Internal(
            "optimizer state does not match the parameter store".into(),
        ));
    }
    let refs = grads.arrays();
    for g in refs.iter().filter(|g| mask.allows(g.partition)) {
        if !g.array.is_finite() {
            return Err(Error::Numeric(format!("non-finite gradient in {}", g.name)));
        }
    }
    let AdamConfig {
        lr, beta1, beta2, eps, ..
    } = state.config;
    let params = store.arrays_mut();
    let ms = state.m.arrays_mut();
    let vs = state.v.arrays_mut();
    for (k, (((part, p), (_, m)), (_, v))) in params.into_iter().zip(ms).zip(vs).enumerate() {
        if !mask.allows(part) {
            continue;
        }
        state.array_steps[k] += 1;
        let t = state.array_steps[k] as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let g = refs[k].array.as_slice();
        for (((p, m), v), &g) in p
            .as_mut_slice()
            .iter_mut()
            .zip(m.as_mut_slice())
            .zip(v.as_mut_slice())
            .zip(g)
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    state.steps += 1;
    Ok(())
}

/// Scales `grads` down to `max_norm` if its global norm exceeds it.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut ParameterStore, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}
