//! Central finite-difference check of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::params::{ParameterStore, Partition};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckOptions {
    /// Largest relative error accepted.
    pub tolerance: f64,
    /// Base step; the step used for entry `θ` is `step · max(1, |θ|)`.
    pub step: f64,
    /// Denominator floor of the relative error.
    pub floor: f64,
    /// Check at most this many entries per array, chosen by `seed`.
    pub max_entries: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            tolerance: 1e-4,
            step: 1e-4,
            floor: 1e-6,
            max_entries: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ArrayCheck {
    pub name: String,
    pub partition: Partition,
    pub checked: usize,
    pub max_rel_error: f64,
    /// Flat index of the worst entry.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub max_rel_error: f64,
    pub passed: bool,
    pub arrays: Vec<ArrayCheck>,
}

impl GradCheckReport {
    pub fn failed_arrays(&self) -> impl Iterator<Item = &ArrayCheck> {
        self.arrays.iter().filter(|a| !a.passed)
    }
}

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(floor);
    (analytic - numeric).abs() / denom
}

/// Compare `grads` against central differences of `loss` around `store`.
///
/// `grads` must share the layout of `store`. The loss closure is called twice
/// per checked entry on a perturbed copy of the store.
pub fn grad_check<F>(
    mut loss: F,
    store: &ParameterStore,
    grads: &ParameterStore,
    options: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParameterStore) -> Result<f64>,
{
    if !store.same_layout(grads) {
        return Err(Error::invalid_input("gradient store layout differs from parameters"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut probe = store.clone();
    let grad_refs = grads.arrays();
    let names: Vec<(String, Partition, usize)> = store
        .arrays()
        .into_iter()
        .map(|p| (p.name, p.partition, p.array.len()))
        .collect();

    let mut arrays = Vec::with_capacity(names.len());
    for (k, (name, partition, len)) in names.into_iter().enumerate() {
        let indices: Vec<usize> = match options.max_entries {
            Some(m) if m < len => {
                let mut v = sample(&mut rng, len, m).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..len).collect(),
        };
        let mut check = ArrayCheck {
            name,
            partition,
            checked: indices.len(),
            max_rel_error: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
            passed: true,
        };
        for i in indices {
            let theta = probe.arrays_mut()[k].1.as_slice()[i];
            let h = options.step * theta.abs().max(1.0);
            probe.arrays_mut()[k].1.as_mut_slice()[i] = theta + h;
            let plus = loss(&probe)?;
            probe.arrays_mut()[k].1.as_mut_slice()[i] = theta - h;
            let minus = loss(&probe)?;
            probe.arrays_mut()[k].1.as_mut_slice()[i] = theta;
            let numeric = (plus - minus) / (2.0 * h);
            let analytic = grad_refs[k].array.as_slice()[i];
            let rel = relative_error(analytic, numeric, options.floor);
            if !rel.is_finite() || rel > check.max_rel_error {
                check.max_rel_error = if rel.is_finite() { rel } else { f64::INFINITY };
                check.worst_index = i;
                check.analytic = analytic;
                check.numeric = numeric;
            }
        }
        check.passed = check.max_rel_error <= options.tolerance;
        arrays.push(check);
    }
    let max_rel_error = arrays.iter().map(|a| a.max_rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        tolerance: options.tolerance,
        max_rel_error,
        passed: arrays.iter().all(|a| a.passed),
        arrays,
    })
}
