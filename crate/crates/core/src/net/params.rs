use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ModelConfig;
use crate::matrix::Matrix;

/// Which sub-model a parameter array belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Enh,
    Asr,
}

/// One LSTM direction. Gate blocks are stacked `[input, forget, cell, output]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    /// `4H×F`
    pub w_input: Matrix,
    /// `4H×H`
    pub w_recurrent: Matrix,
    /// `1×4H`
    pub bias: Matrix,
}

impl LstmParams {
    pub fn hidden(&self) -> usize {
        self.w_recurrent.cols()
    }

    pub fn input_width(&self) -> usize {
        self.w_input.cols()
    }

    fn zeros(input: usize, hidden: usize) -> Self {
        LstmParams {
            w_input: Matrix::zeros(4 * hidden, input),
            w_recurrent: Matrix::zeros(4 * hidden, hidden),
            bias: Matrix::zeros(1, 4 * hidden),
        }
    }

    fn init(input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut p = LstmParams {
            w_input: uniform(4 * hidden, input, input, rng),
            w_recurrent: uniform(4 * hidden, hidden, hidden, rng),
            bias: Matrix::zeros(1, 4 * hidden),
        };
        for v in &mut p.bias.as_mut_slice()[hidden..2 * hidden] {
            *v = 1.0;
        }
        p
    }

    fn arrays(&self) -> [(&'static str, &Matrix); 3] {
        [
            ("w_input", &self.w_input),
            ("w_recurrent", &self.w_recurrent),
            ("bias", &self.bias),
        ]
    }

    fn arrays_mut(&mut self) -> [&mut Matrix; 3] {
        [&mut self.w_input, &mut self.w_recurrent, &mut self.bias]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlstmParams {
    pub forward: LstmParams,
    pub backward: LstmParams,
}

impl BlstmParams {
    fn zeros(input: usize, hidden: usize) -> Self {
        BlstmParams {
            forward: LstmParams::zeros(input, hidden),
            backward: LstmParams::zeros(input, hidden),
        }
    }

    fn init(input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        BlstmParams {
            forward: LstmParams::init(input, hidden, rng),
            backward: LstmParams::init(input, hidden, rng),
        }
    }
}

/// Affine map `y = W x + b` with `W: out×in`, `b: 1×out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Matrix,
    pub bias: Matrix,
}

impl Linear {
    fn zeros(input: usize, output: usize) -> Self {
        Linear {
            weight: Matrix::zeros(output, input),
            bias: Matrix::zeros(1, output),
        }
    }

    fn init(input: usize, output: usize, rng: &mut ChaCha8Rng) -> Self {
        Linear {
            weight: uniform(output, input, input, rng),
            bias: Matrix::zeros(1, output),
        }
    }

    pub fn forward(&self, x: &Matrix) -> Matrix {
        let mut y = x.matmul_transposed(&self.weight);
        let b = self.bias.as_slice();
        for t in 0..y.rows() {
            for (v, bb) in y.row_mut(t).iter_mut().zip(b) {
                *v += bb;
            }
        }
        y
    }

    /// Accumulates parameter gradients into `grads`, returns `dL/dx`.
    pub fn backward(&self, x: &Matrix, dy: &Matrix, grads: &mut Linear) -> Matrix {
        for t in 0..dy.rows() {
            let g = dy.row(t);
            let xt = x.row(t);
            for (o, &go) in g.iter().enumerate() {
                if go != 0.0 {
                    crate::matrix::axpy(go, xt, grads.weight.row_mut(o));
                }
            }
            for (db, &go) in grads.bias.as_mut_slice().iter_mut().zip(g) {
                *db += go;
            }
        }
        dy.matmul(&self.weight)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnhParams {
    pub layers: Vec<BlstmParams>,
    pub head: Linear,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AsrParams {
    pub layers: Vec<BlstmParams>,
    pub output: Linear,
}

/// All trainable weights, split into the enhancement and recognition
/// partitions. ASR-only baselines carry no enhancement partition.
///
/// The same type stores gradients and optimizer moments.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterStore {
    pub enh: Option<EnhParams>,
    pub asr: AsrParams,
}

/// Borrowed view of one named array.
#[derive(Debug)]
pub struct ParamRef<'a> {
    pub name: String,
    pub partition: Partition,
    pub array: &'a Matrix,
}

fn uniform(rows: usize, cols: usize, fan_in: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let a = 1.0 / (fan_in.max(1) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-a..a))
}

fn stack_widths(first: usize, hidden: usize, layers: usize) -> impl Iterator<Item = usize> {
    (0..layers).map(move |l| if l == 0 { first } else { 2 * hidden })
}

impl ParameterStore {
    /// Seeded uniform(±1/sqrt(fan_in)) initialisation, zero biases except a
    /// forget-gate bias of one.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = cfg.hidden;
        let enh = cfg.has_enhancement().then(|| EnhParams {
            layers: stack_widths(cfg.enh_input_width(), h, cfg.enh_layers)
                .map(|w| BlstmParams::init(w, h, &mut rng))
                .collect(),
            head: Linear::init(2 * h, cfg.enh_output_width(), &mut rng),
        });
        let asr = AsrParams {
            layers: stack_widths(cfg.asr_input_width(), h, cfg.asr_layers)
                .map(|w| BlstmParams::init(w, h, &mut rng))
                .collect(),
            output: Linear::init(2 * h, cfg.classes, &mut rng),
        };
        ParameterStore { enh, asr }
    }

    /// All-zero store shaped for `cfg`.
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let h = cfg.hidden;
        let enh = cfg.has_enhancement().then(|| EnhParams {
            layers: stack_widths(cfg.enh_input_width(), h, cfg.enh_layers)
                .map(|w| BlstmParams::zeros(w, h))
                .collect(),
            head: Linear::zeros(2 * h, cfg.enh_output_width()),
        });
        let asr = AsrParams {
            layers: stack_widths(cfg.asr_input_width(), h, cfg.asr_layers)
                .map(|w| BlstmParams::zeros(w, h))
                .collect(),
            output: Linear::zeros(2 * h, cfg.classes),
        };
        ParameterStore { enh, asr }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, a) in z.arrays_mut() {
            a.fill(0.0);
        }
        z
    }

    /// Every array in a fixed order: enhancement first, then recognition.
    pub fn arrays(&self) -> Vec<ParamRef<'_>> {
        fn push_layers<'a>(
            prefix: &str,
            part: Partition,
            layers: &'a [BlstmParams],
            out: &mut Vec<(String, Partition, &'a Matrix)>,
        ) {
            for (l, layer) in layers.iter().enumerate() {
                for (dir, p) in [("fwd", &layer.forward), ("bwd", &layer.backward)] {
                    for (name, a) in p.arrays() {
                        out.push((format!("{prefix}.blstm{l}.{dir}.{name}"), part, a));
                    }
                }
            }
        }
        let mut out = Vec::new();
        if let Some(enh) = &self.enh {
            push_layers("enh", Partition::Enh, &enh.layers, &mut out);
            out.push(("enh.head.weight".into(), Partition::Enh, &enh.head.weight));
            out.push(("enh.head.bias".into(), Partition::Enh, &enh.head.bias));
        }
        push_layers("asr", Partition::Asr, &self.asr.layers, &mut out);
        out.push(("asr.output.weight".into(), Partition::Asr, &self.asr.output.weight));
        out.push(("asr.output.bias".into(), Partition::Asr, &self.asr.output.bias));
        out.into_iter()
            .map(|(name, partition, array)| ParamRef { name, partition, array })
            .collect()
    }

    /// Mutable arrays in the same order as [`ParameterStore::arrays`].
    pub fn arrays_mut(&mut self) -> Vec<(Partition, &mut Matrix)> {
        let mut out = Vec::new();
        if let Some(enh) = &mut self.enh {
            for layer in &mut enh.layers {
                out.extend(layer.forward.arrays_mut().map(|a| (Partition::Enh, a)));
                out.extend(layer.backward.arrays_mut().map(|a| (Partition::Enh, a)));
            }
            out.push((Partition::Enh, &mut enh.head.weight));
            out.push((Partition::Enh, &mut enh.head.bias));
        }
        for layer in &mut self.asr.layers {
            out.extend(layer.forward.arrays_mut().map(|a| (Partition::Asr, a)));
            out.extend(layer.backward.arrays_mut().map(|a| (Partition::Asr, a)));
        }
        out.push((Partition::Asr, &mut self.asr.output.weight));
        out.push((Partition::Asr, &mut self.asr.output.bias));
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.arrays().iter().map(|p| p.array.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.arrays().iter().all(|p| p.array.is_finite())
    }

    /// Same architecture and array shapes.
    pub fn same_layout(&self, other: &ParameterStore) -> bool {
        let (a, b) = (self.arrays(), other.arrays());
        a.len() == b.len()
            && a.iter()
                .zip(&b)
                .all(|(x, y)| x.name == y.name && x.array.shape() == y.array.shape())
    }

    pub fn partition_equal(&self, other: &ParameterStore, part: Partition) -> bool {
        let bits = |s: &ParameterStore| -> Vec<u64> {
            s.arrays()
                .iter()
                .filter(|p| p.partition == part)
                .flat_map(|p| p.array.as_slice().iter().map(|v| v.to_bits()))
                .collect()
        };
        bits(self) == bits(other)
    }

    /// Euclidean norm over all arrays.
    pub fn global_norm(&self) -> f64 {
        self.arrays().iter().map(|p| p.array.sum_squares()).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        for (_, a) in self.arrays_mut() {
            a.scale(s);
        }
    }

    pub fn zero_partition(&mut self, part: Partition) {
        for (p, a) in self.arrays_mut() {
            if p == part {
                a.fill(0.0);
            }
        }
    }
}
