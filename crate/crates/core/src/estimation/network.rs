//! Single-step LSTM cell with three MLP heads, forward and backward passes.
//!
//! Gate rows of the stacked weight matrices are ordered input, forget,
//! candidate, output. The recurrent state entering a frame is treated as a
//! constant during training, so gradients stop at one cell step.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Fully connected layer `y = W x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Dense {
    fn zeros(outputs: usize, inputs: usize) -> Self {
        Self { weight: DMatrix::zeros(outputs, inputs), bias: DVector::zeros(outputs) }
    }

    fn uniform<R: Rng>(outputs: usize, inputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        Self {
            weight: DMatrix::from_fn(outputs, inputs, |_, _| rng.random_range(-bound..bound)),
            bias: DVector::from_fn(outputs, |_, _| rng.random_range(-bound..bound)),
        }
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.weight * x + &self.bias
    }
}

/// One tanh hidden layer followed by a linear output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub hidden: Dense,
    pub output: Dense,
}

struct MlpCache {
    activation: DVector<f64>,
}

impl Mlp {
    fn zeros(inputs: usize, hidden: usize, outputs: usize) -> Self {
        Self { hidden: Dense::zeros(hidden, inputs), output: Dense::zeros(outputs, hidden) }
    }

    fn uniform<R: Rng>(inputs: usize, hidden: usize, outputs: usize, rng: &mut R) -> Self {
        Self { hidden: Dense::uniform(hidden, inputs, rng), output: Dense::uniform(outputs, hidden, rng) }
    }

    fn forward(&self, x: &DVector<f64>) -> (DVector<f64>, MlpCache) {
        let activation = self.hidden.apply(x).map(f64::tanh);
        let y = self.output.apply(&activation);
        (y, MlpCache { activation })
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    fn backward(&self, x: &DVector<f64>, cache: &MlpCache, dy: &DVector<f64>, grad: &mut Mlp) -> DVector<f64> {
        grad.output.weight.ger(1.0, dy, &cache.activation, 1.0);
        grad.output.bias += dy;
        let da = self.output.weight.tr_mul(dy);
        let dz = da.zip_map(&cache.activation, |d, a| d * (1.0 - a * a));
        grad.hidden.weight.ger(1.0, &dz, x, 1.0);
        grad.hidden.bias += &dz;
        self.hidden.weight.tr_mul(&dz)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmCell {
    /// `4H x D` input weights.
    pub input_weight: DMatrix<f64>,
    /// `4H x H` recurrent weights.
    pub recurrent_weight: DMatrix<f64>,
    /// `4H` gate biases.
    pub bias: DVector<f64>,
}

/// All trainable parameters. The same shape doubles as a gradient buffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub cell: LstmCell,
    pub head_beta: Mlp,
    pub head_beta_per_keypoint: Mlp,
    pub head_depth: Mlp,
}

/// Shape of a [`Network`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetworkShape {
    pub input: usize,
    pub hidden: usize,
    pub head_hidden: usize,
    pub keypoints: usize,
}

/// Result of one forward step.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    /// `[beta2, beta1, beta0]`
    pub beta: DVector<f64>,
    /// Per-keypoint coefficients, keypoint-major (`3M`).
    pub beta_per_keypoint: DVector<f64>,
    /// Direct per-keypoint depth predictions (`M`).
    pub depth: DVector<f64>,
    pub hidden: DVector<f64>,
    pub cell: DVector<f64>,
}

pub(crate) struct ForwardCache {
    input_gate: DVector<f64>,
    forget_gate: DVector<f64>,
    candidate: DVector<f64>,
    output_gate: DVector<f64>,
    tanh_cell: DVector<f64>,
    beta: MlpCache,
    beta_per_keypoint: MlpCache,
    depth: MlpCache,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Network {
    pub fn zeros(shape: NetworkShape) -> Self {
        let NetworkShape { input, hidden, head_hidden, keypoints } = shape;
        Self {
            cell: LstmCell {
                input_weight: DMatrix::zeros(4 * hidden, input),
                recurrent_weight: DMatrix::zeros(4 * hidden, hidden),
                bias: DVector::zeros(4 * hidden),
            },
            head_beta: Mlp::zeros(hidden, head_hidden, 3),
            head_beta_per_keypoint: Mlp::zeros(hidden, head_hidden, 3 * keypoints),
            head_depth: Mlp::zeros(hidden, head_hidden, keypoints),
        }
    }

    /// Uniform `±1/sqrt(fan_in)` weights with the forget-gate bias set to one
    /// and the coefficient heads biased towards the identity scale `(0, 1, 0)`.
    pub fn initialized<R: Rng>(shape: NetworkShape, rng: &mut R) -> Self {
        let NetworkShape { input, hidden, head_hidden, keypoints } = shape;
        let bound = 1.0 / ((input + hidden) as f64).sqrt();
        let mut bias = DVector::from_fn(4 * hidden, |_, _| rng.random_range(-bound..bound));
        for v in bias.rows_mut(hidden, hidden).iter_mut() {
            *v = 1.0;
        }
        let cell = LstmCell {
            input_weight: DMatrix::from_fn(4 * hidden, input, |_, _| rng.random_range(-bound..bound)),
            recurrent_weight: DMatrix::from_fn(4 * hidden, hidden, |_, _| rng.random_range(-bound..bound)),
            bias,
        };
        let mut head_beta = Mlp::uniform(hidden, head_hidden, 3, rng);
        head_beta.output.bias[1] += 1.0;
        let mut head_beta_per_keypoint = Mlp::uniform(hidden, head_hidden, 3 * keypoints, rng);
        for k in 0..keypoints {
            head_beta_per_keypoint.output.bias[3 * k + 1] += 1.0;
        }
        let head_depth = Mlp::uniform(hidden, head_hidden, keypoints, rng);
        Self { cell, head_beta, head_beta_per_keypoint, head_depth }
    }

    pub fn shape(&self) -> NetworkShape {
        NetworkShape {
            input: self.cell.input_weight.ncols(),
            hidden: self.cell.recurrent_weight.ncols(),
            head_hidden: self.head_beta.hidden.weight.nrows(),
            keypoints: self.head_depth.output.weight.nrows(),
        }
    }

    /// Named views of every parameter tensor, in a fixed order.
    pub fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("cell.input_weight", self.cell.input_weight.as_slice()),
            ("cell.recurrent_weight", self.cell.recurrent_weight.as_slice()),
            ("cell.bias", self.cell.bias.as_slice()),
            ("head_beta.hidden.weight", self.head_beta.hidden.weight.as_slice()),
            ("head_beta.hidden.bias", self.head_beta.hidden.bias.as_slice()),
            ("head_beta.output.weight", self.head_beta.output.weight.as_slice()),
            ("head_beta.output.bias", self.head_beta.output.bias.as_slice()),
            ("head_beta_per_keypoint.hidden.weight", self.head_beta_per_keypoint.hidden.weight.as_slice()),
            ("head_beta_per_keypoint.hidden.bias", self.head_beta_per_keypoint.hidden.bias.as_slice()),
            ("head_beta_per_keypoint.output.weight", self.head_beta_per_keypoint.output.weight.as_slice()),
            ("head_beta_per_keypoint.output.bias", self.head_beta_per_keypoint.output.bias.as_slice()),
            ("head_depth.hidden.weight", self.head_depth.hidden.weight.as_slice()),
            ("head_depth.hidden.bias", self.head_depth.hidden.bias.as_slice()),
            ("head_depth.output.weight", self.head_depth.output.weight.as_slice()),
            ("head_depth.output.bias", self.head_depth.output.bias.as_slice()),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.cell.input_weight.as_mut_slice(),
            self.cell.recurrent_weight.as_mut_slice(),
            self.cell.bias.as_mut_slice(),
            self.head_beta.hidden.weight.as_mut_slice(),
            self.head_beta.hidden.bias.as_mut_slice(),
            self.head_beta.output.weight.as_mut_slice(),
            self.head_beta.output.bias.as_mut_slice(),
            self.head_beta_per_keypoint.hidden.weight.as_mut_slice(),
            self.head_beta_per_keypoint.hidden.bias.as_mut_slice(),
            self.head_beta_per_keypoint.output.weight.as_mut_slice(),
            self.head_beta_per_keypoint.output.bias.as_mut_slice(),
            self.head_depth.hidden.weight.as_mut_slice(),
            self.head_depth.hidden.bias.as_mut_slice(),
            self.head_depth.output.weight.as_mut_slice(),
            self.head_depth.output.bias.as_mut_slice(),
        ]
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn squared_norm(&self) -> f64 {
        self.tensors().iter().flat_map(|(_, t)| t.iter()).map(|v| v * v).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub(crate) fn forward_cached(
        &self,
        x: &DVector<f64>,
        h_prev: &DVector<f64>,
        c_prev: &DVector<f64>,
    ) -> (ForwardOutput, ForwardCache) {
        let hsz = h_prev.len();
        let z = &self.cell.input_weight * x + &self.cell.recurrent_weight * h_prev + &self.cell.bias;
        let input_gate = z.rows(0, hsz).map(sigmoid);
        let forget_gate = z.rows(hsz, hsz).map(sigmoid);
        let candidate = z.rows(2 * hsz, hsz).map(f64::tanh);
        let output_gate = z.rows(3 * hsz, hsz).map(sigmoid);
        let cell = forget_gate.component_mul(c_prev) + input_gate.component_mul(&candidate);
        let tanh_cell = cell.map(f64::tanh);
        let hidden = output_gate.component_mul(&tanh_cell);

        let (beta, beta_cache) = self.head_beta.forward(&hidden);
        let (beta_per_keypoint, kp_cache) = self.head_beta_per_keypoint.forward(&hidden);
        let (depth, depth_cache) = self.head_depth.forward(&hidden);
        (
            ForwardOutput { beta, beta_per_keypoint, depth, hidden, cell },
            ForwardCache {
                input_gate,
                forget_gate,
                candidate,
                output_gate,
                tanh_cell,
                beta: beta_cache,
                beta_per_keypoint: kp_cache,
                depth: depth_cache,
            },
        )
    }

    pub fn forward(&self, x: &DVector<f64>, h_prev: &DVector<f64>, c_prev: &DVector<f64>) -> ForwardOutput {
        self.forward_cached(x, h_prev, c_prev).0
    }

    /// Parameter gradients given loss gradients on the three head outputs.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn backward(
        &self,
        x: &DVector<f64>,
        h_prev: &DVector<f64>,
        c_prev: &DVector<f64>,
        out: &ForwardOutput,
        cache: &ForwardCache,
        d_beta: &DVector<f64>,
        d_beta_per_keypoint: &DVector<f64>,
        d_depth: &DVector<f64>,
    ) -> Network {
        let mut grad = Network::zeros(self.shape());
        let h = &out.hidden;
        let mut dh = self.head_beta.backward(h, &cache.beta, d_beta, &mut grad.head_beta);
        dh += self.head_beta_per_keypoint.backward(
            h,
            &cache.beta_per_keypoint,
            d_beta_per_keypoint,
            &mut grad.head_beta_per_keypoint,
        );
        dh += self.head_depth.backward(h, &cache.depth, d_depth, &mut grad.head_depth);

        let hsz = h.len();
        let mut dz = DVector::zeros(4 * hsz);
        for k in 0..hsz {
            let (i, f, g, o, tc) = (
                cache.input_gate[k],
                cache.forget_gate[k],
                cache.candidate[k],
                cache.output_gate[k],
                cache.tanh_cell[k],
            );
            let d_out = dh[k] * tc;
            let dc = dh[k] * o * (1.0 - tc * tc);
            dz[k] = dc * g * i * (1.0 - i);
            dz[hsz + k] = dc * c_prev[k] * f * (1.0 - f);
            dz[2 * hsz + k] = dc * i * (1.0 - g * g);
            dz[3 * hsz + k] = d_out * o * (1.0 - o);
        }
        grad.cell.input_weight.ger(1.0, &dz, x, 0.0);
        grad.cell.recurrent_weight.ger(1.0, &dz, h_prev, 0.0);
        grad.cell.bias = dz;
        grad
    }
}
