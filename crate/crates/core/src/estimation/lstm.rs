//! Online-trained recurrent estimator of the regressor coefficients.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::huber::{huber_grad, huber_loss};
use super::network::{ForwardOutput, Network, NetworkShape};
use crate::error::{Error, Result};
use crate::kinematics::KeypointObservationSet;
use crate::regressor::{design_row, DepthRegressorParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub hidden_size: usize,
    /// Gradient steps per frame.
    pub tau: usize,
    /// Past relative depths kept per keypoint.
    pub history_n: usize,
    pub huber_delta: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    /// Width of the hidden layer in each output head.
    pub head_hidden: usize,
    /// Global gradient-norm ceiling; `0` disables clipping.
    pub grad_clip: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            hidden_size: 128,
            tau: 20,
            history_n: 10,
            huber_delta: 1.0,
            alpha1: 1.0,
            alpha2: 1.0,
            head_hidden: 64,
            grad_clip: 10.0,
            optimizer: OptimizerKind::Sgd,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.learning_rate, self.huber_delta, self.alpha1, self.alpha2];
        if positive.iter().any(|v| !(v.is_finite() && *v >= 0.0))
            || self.learning_rate <= 0.0
            || self.huber_delta <= 0.0
        {
            return Err(Error::Config("training rates and weights must be positive".into()));
        }
        if self.hidden_size == 0 || self.head_hidden == 0 {
            return Err(Error::Config("network widths must be positive".into()));
        }
        if self.grad_clip < 0.0 {
            return Err(Error::Config("gradient clip must be non-negative".into()));
        }
        Ok(())
    }
}

/// Components of the training objective for one frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    /// Huber loss of the shared coefficients.
    pub main: f64,
    /// Weighted Huber loss of the per-keypoint coefficients.
    pub aux_coefficients: f64,
    /// Weighted Huber loss of the direct depth head.
    pub aux_depth: f64,
}

impl LossBreakdown {
    pub fn total(&self) -> f64 {
        self.main + self.aux_coefficients + self.aux_depth
    }
}

/// Loss gradients with respect to the three head outputs.
pub(crate) struct HeadGradients {
    pub beta: DVector<f64>,
    pub beta_per_keypoint: DVector<f64>,
    pub depth: DVector<f64>,
}

/// Training loss over visible keypoints and its gradient on the head outputs.
pub(crate) fn frame_loss(
    cfg: &TrainingConfig,
    out: &ForwardOutput,
    rel: &[f64],
    depths: &[f64],
    visible: &[bool],
) -> (LossBreakdown, HeadGradients) {
    let m = rel.len();
    let delta = cfg.huber_delta;
    let mut loss = LossBreakdown::default();
    let mut g =
        HeadGradients { beta: DVector::zeros(3), beta_per_keypoint: DVector::zeros(3 * m), depth: DVector::zeros(m) };
    let beta = DepthRegressorParams::new(out.beta[0], out.beta[1], out.beta[2]);
    for i in (0..m).filter(|&i| visible[i]) {
        let (r, o) = (rel[i], depths[i]);
        let row = design_row(r);

        let pred = beta.apply(r);
        loss.main += huber_loss(o, pred, delta);
        let d = huber_grad(o, pred, delta);
        for j in 0..3 {
            g.beta[j] += d * row[j];
        }

        let kp = DepthRegressorParams::new(
            out.beta_per_keypoint[3 * i],
            out.beta_per_keypoint[3 * i + 1],
            out.beta_per_keypoint[3 * i + 2],
        );
        let pred_kp = kp.apply(r);
        loss.aux_coefficients += cfg.alpha1 * huber_loss(o, pred_kp, delta);
        let d = cfg.alpha1 * huber_grad(o, pred_kp, delta);
        for j in 0..3 {
            g.beta_per_keypoint[3 * i + j] = d * row[j];
        }

        loss.aux_depth += cfg.alpha2 * huber_loss(o, out.depth[i], delta);
        g.depth[i] = cfg.alpha2 * huber_grad(o, out.depth[i], delta);
    }
    (loss, g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct AdamMoments {
    first: Network,
    second: Network,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub step: u64,
    adam: Option<AdamMoments>,
}

/// Outcome of one training frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub beta: DepthRegressorParams,
    /// Loss of the frame before any gradient step.
    pub initial_loss: LossBreakdown,
    /// Loss of the committed forward pass after training.
    pub final_loss: LossBreakdown,
}

/// Recurrent network plus its recurrent state, input history and optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmEstimator {
    pub config: TrainingConfig,
    pub network: Network,
    pub hidden: DVector<f64>,
    pub cell: DVector<f64>,
    /// Per keypoint, the last `history_n` relative depths, most recent first.
    history: Vec<Vec<f64>>,
    pub optimizer: OptimizerState,
    pub frames: u64,
}

impl LstmEstimator {
    pub fn new(keypoints: usize, config: TrainingConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let network = Network::initialized(Self::shape_for(keypoints, &config), &mut rng);
        Ok(Self::with_network(network, config))
    }

    /// An estimator whose parameters are all zero.
    pub fn zeroed(keypoints: usize, config: TrainingConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self::with_network(Network::zeros(Self::shape_for(keypoints, &config)), config))
    }

    pub fn with_network(network: Network, config: TrainingConfig) -> Self {
        let shape = network.shape();
        Self {
            config,
            hidden: DVector::zeros(shape.hidden),
            cell: DVector::zeros(shape.hidden),
            history: vec![vec![0.0; config.history_n]; shape.keypoints],
            optimizer: OptimizerState { step: 0, adam: None },
            network,
            frames: 0,
        }
    }

    fn shape_for(keypoints: usize, cfg: &TrainingConfig) -> NetworkShape {
        NetworkShape {
            input: keypoints * (cfg.history_n + 1),
            hidden: cfg.hidden_size,
            head_hidden: cfg.head_hidden,
            keypoints,
        }
    }

    pub fn keypoints(&self) -> usize {
        self.history.len()
    }

    pub fn history(&self) -> &[Vec<f64>] {
        &self.history
    }

    /// Network input: per keypoint slot the current relative depth followed by
    /// its history; invisible keypoints contribute a zero current value.
    pub fn assemble_input(&self, rel: &[f64], visible: &[bool]) -> DVector<f64> {
        let n = self.config.history_n;
        let mut x = DVector::zeros(self.keypoints() * (n + 1));
        for (i, hist) in self.history.iter().enumerate() {
            let base = i * (n + 1);
            x[base] = if visible[i] { rel[i] } else { 0.0 };
            for (k, v) in hist.iter().enumerate() {
                x[base + 1 + k] = *v;
            }
        }
        x
    }

    /// Forward pass from the committed recurrent state; does not mutate.
    pub fn forward(&self, input: &DVector<f64>) -> Result<ForwardOutput> {
        if input.len() != self.network.shape().input {
            return Err(Error::Arity { expected: self.network.shape().input, got: input.len() });
        }
        if input.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("network input is not finite".into()));
        }
        let out = self.network.forward(input, &self.hidden, &self.cell);
        if out
            .beta
            .iter()
            .chain(out.beta_per_keypoint.iter())
            .chain(out.depth.iter())
            .chain(out.hidden.iter())
            .chain(out.cell.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::NumericalOverflow);
        }
        Ok(out)
    }

    /// Loss and parameter gradient for one frame from the committed state.
    pub fn loss_and_gradient(
        &self,
        input: &DVector<f64>,
        rel: &[f64],
        depths: &[f64],
        visible: &[bool],
    ) -> (LossBreakdown, Network) {
        let (out, cache) = self.network.forward_cached(input, &self.hidden, &self.cell);
        let (loss, g) = frame_loss(&self.config, &out, rel, depths, visible);
        let grad = self.network.backward(
            input,
            &self.hidden,
            &self.cell,
            &out,
            &cache,
            &g.beta,
            &g.beta_per_keypoint,
            &g.depth,
        );
        (loss, grad)
    }

    /// Loss only, for finite-difference checks.
    pub fn loss(&self, input: &DVector<f64>, rel: &[f64], depths: &[f64], visible: &[bool]) -> LossBreakdown {
        let out = self.network.forward(input, &self.hidden, &self.cell);
        frame_loss(&self.config, &out, rel, depths, visible).0
    }

    fn apply_gradient(&mut self, mut grad: Network) {
        let clip = self.config.grad_clip;
        if clip > 0.0 {
            let norm = grad.squared_norm().sqrt();
            if norm > clip {
                grad.scale(clip / norm);
            }
        }
        self.optimizer.step += 1;
        let lr = self.config.learning_rate;
        match self.config.optimizer {
            OptimizerKind::Sgd => {
                for (p, g) in self.network.tensors_mut().into_iter().zip(grad.tensors()) {
                    for (w, d) in p.iter_mut().zip(g.1) {
                        *w -= lr * d;
                    }
                }
            }
            OptimizerKind::Adam => {
                let (b1, b2, eps) = (0.9, 0.999, 1e-8);
                let shape = self.network.shape();
                let moments = self
                    .optimizer
                    .adam
                    .get_or_insert_with(|| AdamMoments { first: Network::zeros(shape), second: Network::zeros(shape) });
                let t = self.optimizer.step as i32;
                let c1 = 1.0 - f64::powi(b1, t);
                let c2 = 1.0 - f64::powi(b2, t);
                let params = self.network.tensors_mut();
                let firsts = moments.first.tensors_mut();
                let seconds = moments.second.tensors_mut();
                for (((p, m), v), (_, g)) in params.into_iter().zip(firsts).zip(seconds).zip(grad.tensors()) {
                    for k in 0..p.len() {
                        m[k] = b1 * m[k] + (1.0 - b1) * g[k];
                        v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
                        p[k] -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + eps);
                    }
                }
            }
        }
    }

    /// One frame of online training: `tau` gradient steps from the committed
    /// recurrent state, then a forward pass whose state is committed and whose
    /// coefficients are returned. On a non-finite value everything is rolled
    /// back to the frame-entry state.
    pub fn train_step(&mut self, rel: &[f64], obs: &KeypointObservationSet) -> Result<StepOutcome> {
        let m = self.keypoints();
        if rel.len() != m || obs.len() != m {
            return Err(Error::Arity { expected: m, got: rel.len().min(obs.len()) });
        }
        if obs.visible_count() == 0 {
            return Err(Error::NoObservation);
        }
        let snapshot = self.clone();
        match self.train_step_inner(rel, obs) {
            Ok(outcome) => Ok(outcome),
            Err(e) => {
                *self = snapshot;
                Err(e)
            }
        }
    }

    fn train_step_inner(&mut self, rel: &[f64], obs: &KeypointObservationSet) -> Result<StepOutcome> {
        let visible = &obs.visible;
        let depths = &obs.depths;
        let input = self.assemble_input(rel, visible);
        if input.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("relative depth at a visible keypoint is not finite".into()));
        }
        let mut initial = None;
        for _ in 0..self.config.tau {
            let (loss, grad) = self.loss_and_gradient(&input, rel, depths, visible);
            if !loss.total().is_finite() || !grad.is_finite() {
                return Err(Error::NumericalOverflow);
            }
            initial.get_or_insert(loss);
            self.apply_gradient(grad);
        }
        if !self.network.is_finite() {
            return Err(Error::NumericalOverflow);
        }
        let out = self.forward(&input)?;
        let (final_loss, _) = frame_loss(&self.config, &out, rel, depths, visible);
        if !final_loss.total().is_finite() {
            return Err(Error::NumericalOverflow);
        }
        let beta = DepthRegressorParams::new(out.beta[0], out.beta[1], out.beta[2]);
        self.hidden = out.hidden;
        self.cell = out.cell;
        for (i, hist) in self.history.iter_mut().enumerate() {
            if hist.is_empty() {
                continue;
            }
            hist.pop();
            hist.insert(0, if visible[i] { rel[i] } else { 0.0 });
        }
        self.frames += 1;
        Ok(StepOutcome { beta, initial_loss: initial.unwrap_or(final_loss), final_loss })
    }
}
