//! Standard LSTM without peepholes, and its bidirectional stacking.
//!
//! ```text
//! a_t = W_x x_t + W_h h_prev + b            gates [i f g o]
//! c_t = σ(f) ⊙ c_prev + σ(i) ⊙ tanh(g)
//! h_t = σ(o) ⊙ tanh(c_t)
//! ```

use super::params::{BlstmParams, LstmParams};
use crate::error::{Error, Result};
use crate::matrix::{axpy, dot, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    /// Time indices in processing order.
    fn order(self, len: usize) -> Box<dyn Iterator<Item = usize>> {
        match self {
            Direction::Forward => Box::new(0..len),
            Direction::Backward => Box::new((0..len).rev()),
        }
    }

    /// The step processed just before `t`, if any.
    fn previous(self, t: usize, len: usize) -> Option<usize> {
        match self {
            Direction::Forward => t.checked_sub(1),
            Direction::Backward => (t + 1 < len).then_some(t + 1),
        }
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Everything the backward pass needs, indexed by input-order time step.
#[derive(Clone, Debug)]
pub struct LstmCache {
    pub direction: Direction,
    pub input: Matrix,
    /// `T×4H` post-activation gates `[σ(i) σ(f) tanh(g) σ(o)]`.
    pub gates: Matrix,
    pub cell: Matrix,
    pub cell_tanh: Matrix,
    pub hidden: Matrix,
}

pub fn lstm_forward(p: &LstmParams, x: &Matrix, direction: Direction) -> Result<(Matrix, LstmCache)> {
    let h = p.hidden();
    if x.cols() != p.input_width() {
        return Err(Error::invalid_input(format!(
            "LSTM expects {} input features, got {}",
            p.input_width(),
            x.cols()
        )));
    }
    let len = x.rows();
    let mut gates = x.matmul_transposed(&p.w_input);
    let mut cell = Matrix::zeros(len, h);
    let mut cell_tanh = Matrix::zeros(len, h);
    let mut hidden = Matrix::zeros(len, h);
    let bias = p.bias.as_slice();

    for t in direction.order(len) {
        if !x.row(t).iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite LSTM input at step {t}")));
        }
        let prev = direction.previous(t, len);
        let a = gates.row_mut(t);
        for (v, b) in a.iter_mut().zip(bias) {
            *v += b;
        }
        if let Some(tp) = prev {
            let hp = hidden.row(tp);
            for (k, v) in a.iter_mut().enumerate() {
                *v += dot(p.w_recurrent.row(k), hp);
            }
        }
        for v in &mut a[..2 * h] {
            *v = sigmoid(*v);
        }
        for v in &mut a[2 * h..3 * h] {
            *v = v.tanh();
        }
        for v in &mut a[3 * h..] {
            *v = sigmoid(*v);
        }
        for j in 0..h {
            let (i, f, g, o) = (a[j], a[h + j], a[2 * h + j], a[3 * h + j]);
            let c_prev = prev.map_or(0.0, |tp| cell[(tp, j)]);
            let c = f * c_prev + i * g;
            let ct = c.tanh();
            cell[(t, j)] = c;
            cell_tanh[(t, j)] = ct;
            hidden[(t, j)] = o * ct;
        }
    }
    if !hidden.is_finite() || !cell.is_finite() {
        return Err(Error::Numeric("non-finite LSTM state".into()));
    }
    Ok((
        hidden.clone(),
        LstmCache {
            direction,
            input: x.clone(),
            gates,
            cell,
            cell_tanh,
            hidden,
        },
    ))
}

/// Backpropagation through time for one direction.
///
/// `dh` is `dL/dh_t` from outside the recurrence. Parameter gradients are
/// accumulated into `grads`; the returned matrix is `dL/dx`.
pub fn lstm_backward(p: &LstmParams, cache: &LstmCache, dh: &Matrix, grads: &mut LstmParams) -> Result<Matrix> {
    let h = p.hidden();
    let len = cache.input.rows();
    if dh.shape() != [len, h] || cache.gates.shape() != [len, 4 * h] {
        return Err(Error::Internal(format!(
            "LSTM backward shape mismatch: dh {:?}, cache T={len}, H={h}",
            dh.shape()
        )));
    }
    let direction = cache.direction;
    let mut d_pre = Matrix::zeros(len, 4 * h);
    let mut dh_rec = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let order: Vec<usize> = direction.order(len).collect();

    for &t in order.iter().rev() {
        let prev = direction.previous(t, len);
        let g = cache.gates.row(t);
        let da = d_pre.row_mut(t);
        for j in 0..h {
            let (i, f, gg, o) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
            let ct = cache.cell_tanh[(t, j)];
            let c_prev = prev.map_or(0.0, |tp| cache.cell[(tp, j)]);
            let dht = dh[(t, j)] + dh_rec[j];
            let d_o = dht * ct;
            let dc = dht * o * (1.0 - ct * ct) + dc_next[j];
            da[j] = dc * gg * i * (1.0 - i);
            da[h + j] = dc * c_prev * f * (1.0 - f);
            da[2 * h + j] = dc * i * (1.0 - gg * gg);
            da[3 * h + j] = d_o * o * (1.0 - o);
            dc_next[j] = dc * f;
        }
        dh_rec.iter_mut().for_each(|v| *v = 0.0);
        if let Some(tp) = prev {
            let hp = cache.hidden.row(tp);
            for (k, &dak) in da.iter().enumerate() {
                if dak != 0.0 {
                    axpy(dak, p.w_recurrent.row(k), &mut dh_rec);
                    axpy(dak, hp, grads.w_recurrent.row_mut(k));
                }
            }
        }
    }

    for t in 0..len {
        let da = d_pre.row(t);
        let xt = cache.input.row(t);
        for (k, &dak) in da.iter().enumerate() {
            if dak != 0.0 {
                axpy(dak, xt, grads.w_input.row_mut(k));
            }
        }
        for (b, &dak) in grads.bias.as_mut_slice().iter_mut().zip(da) {
            *b += dak;
        }
    }
    Ok(d_pre.matmul(&p.w_input))
}

#[derive(Clone, Debug)]
pub struct BlstmCache {
    pub forward: LstmCache,
    pub backward: LstmCache,
}

/// Output columns `0..H` are the forward pass, `H..2H` the backward pass,
/// both in input time order.
pub fn blstm_forward(p: &BlstmParams, x: &Matrix) -> Result<(Matrix, BlstmCache)> {
    let (hf, cf) = lstm_forward(&p.forward, x, Direction::Forward)?;
    let (hb, cb) = lstm_forward(&p.backward, x, Direction::Backward)?;
    Ok((
        hf.hstack(&hb)?,
        BlstmCache {
            forward: cf,
            backward: cb,
        },
    ))
}

pub fn blstm_backward(p: &BlstmParams, cache: &BlstmCache, dh: &Matrix, grads: &mut BlstmParams) -> Result<Matrix> {
    let h = p.forward.hidden();
    if dh.cols() != 2 * h {
        return Err(Error::Internal(format!(
            "BLSTM backward expects {} columns, got {}",
            2 * h,
            dh.cols()
        )));
    }
    let mut dx = lstm_backward(&p.forward, &cache.forward, &dh.column_block(0, h), &mut grads.forward)?;
    let dxb = lstm_backward(
        &p.backward,
        &cache.backward,
        &dh.column_block(h, h),
        &mut grads.backward,
    )?;
    dx.add_assign(&dxb);
    Ok(dx)
}

/// Runs a BLSTM stack, returning the top output and per-layer caches.
pub fn stack_forward(layers: &[BlstmParams], x: &Matrix) -> Result<(Matrix, Vec<BlstmCache>)> {
    let mut caches = Vec::with_capacity(layers.len());
    let mut cur = x.clone();
    for layer in layers {
        let (out, cache) = blstm_forward(layer, &cur)?;
        caches.push(cache);
        cur = out;
    }
    Ok((cur, caches))
}

pub fn stack_backward(
    layers: &[BlstmParams],
    caches: &[BlstmCache],
    d_top: Matrix,
    grads: &mut [BlstmParams],
) -> Result<Matrix> {
    if caches.len() != layers.len() || grads.len() != layers.len() {
        return Err(Error::Internal("BLSTM stack/cache depth mismatch".into()));
    }
    let mut d = d_top;
    for l in (0..layers.len()).rev() {
        d = blstm_backward(&layers[l], &caches[l], &d, &mut grads[l])?;
    }
    Ok(d)
}
