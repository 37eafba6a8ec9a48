//! Bradley–Terry maximum-likelihood reward learning.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::{ActionId, PreferenceDataset, State};
use crate::envs::{state_action_grid, state_action_input, FeatureMap};
use crate::error::{Error, Result};
use crate::math::{log_sigmoid, sigmoid};
use crate::nn::{Direction, Mlp, OptimizerConfig, OptimizerState, ParamVector};

/// Default ridge on the linear MLE; keeps the optimum finite on separable data.
pub const DEFAULT_RIDGE: f64 = 1e-6;
pub const LINEAR_GRAD_TOL: f64 = 1e-8;
pub const LINEAR_MAX_ITERS: usize = 100_000;
/// Exit gradient norm above which a linear fit is flagged as not converged.
pub const LINEAR_WARN_GRAD: f64 = 1e-6;
pub const DEFAULT_NEURAL_STEPS: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RewardKind {
    Linear { features: FeatureMap, weights: Vec<f64> },
    /// Scores `state ++ one_hot(action)` with a scalar-output network.
    Mlp { net: Mlp, k: usize },
}

/// A learned scorer `r_hat(s, a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardModel {
    pub kind: RewardKind,
    /// Set when training stopped before meeting its convergence criterion.
    pub warning: Option<String>,
}

impl RewardModel {
    pub fn linear(features: FeatureMap, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != features.out_dim() {
            return Err(Error::Shape(format!(
                "{} weights for a {}-dimensional feature map",
                weights.len(),
                features.out_dim()
            )));
        }
        Ok(RewardModel {
            kind: RewardKind::Linear { features, weights },
            warning: None,
        })
    }

    pub fn mlp(net: Mlp, k: usize) -> Result<Self> {
        if net.spec.output_dim() != 1 {
            return Err(Error::Shape("reward network must have a scalar output".into()));
        }
        Ok(RewardModel {
            kind: RewardKind::Mlp { net, k },
            warning: None,
        })
    }

    pub fn params(&self) -> &[f64] {
        match &self.kind {
            RewardKind::Linear { weights, .. } => weights,
            RewardKind::Mlp { net, .. } => &net.params.values,
        }
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        match &mut self.kind {
            RewardKind::Linear { weights, .. } => weights,
            RewardKind::Mlp { net, .. } => &mut net.params.values,
        }
    }

    pub fn score(&self, s: &State, a: ActionId) -> Result<f64> {
        match &self.kind {
            RewardKind::Linear { features, weights } => {
                Ok(features.eval(s, a).iter().zip(weights).map(|(f, w)| f * w).sum())
            }
            RewardKind::Mlp { net, k } => {
                let x = state_action_input(s, a, *k);
                let view = ArrayView2::from_shape((1, x.len()), &x).expect("row");
                Ok(net.forward_batch(view)?[[0, 0]])
            }
        }
    }

    /// Scores of every action at every state, `[states x K]`.
    pub fn score_table(&self, states: &[State], k: usize) -> Result<Array2<f64>> {
        match &self.kind {
            RewardKind::Linear { .. } => {
                let mut t = Array2::zeros((states.len(), k));
                for (i, s) in states.iter().enumerate() {
                    for a in 0..k {
                        t[[i, a]] = self.score(s, ActionId(a))?;
                    }
                }
                Ok(t)
            }
            RewardKind::Mlp { net, k: mk } => {
                if *mk != k {
                    return Err(Error::Shape(format!("model scores {mk} actions, asked for {k}")));
                }
                if states.is_empty() {
                    return Ok(Array2::zeros((0, k)));
                }
                let out = net.forward_batch(state_action_grid(states, k).view())?;
                Ok(out.into_shape_with_order((states.len(), k)).expect("state-major"))
            }
        }
    }

    /// `r_hat(s, winner) - r_hat(s, loser)` per triple.
    pub fn margins(&self, d: &PreferenceDataset) -> Result<Vec<f64>> {
        d.triples()
            .iter()
            .map(|t| Ok(self.score(&t.state, t.winner)? - self.score(&t.state, t.loser)?))
            .collect()
    }

    /// Serialized as a [`ParamVector`] with a kind tag.
    pub fn to_param_vector(&self) -> (&'static str, ParamVector) {
        match &self.kind {
            RewardKind::Linear { weights, .. } => {
                ("reward_linear", ParamVector::new(vec![weights.len()], weights.clone()))
            }
            RewardKind::Mlp { net, .. } => ("reward_mlp", net.params.clone()),
        }
    }
}

/// Negative Bradley–Terry log-likelihood, `-sum_i log sigmoid(margin_i)`.
pub fn bt_loss(model: &RewardModel, d: &PreferenceDataset) -> Result<f64> {
    d.require_nonempty()?;
    Ok(model.margins(d)?.into_iter().map(|m| -log_sigmoid(m)).sum())
}

/// Negative log-likelihood and its gradient with respect to the model parameters.
pub fn bt_loss_and_grad(model: &RewardModel, d: &PreferenceDataset) -> Result<(f64, Vec<f64>)> {
    d.require_nonempty()?;
    match &model.kind {
        RewardKind::Linear { features, weights } => {
            let mut grad = vec![0.0; weights.len()];
            let mut loss = 0.0;
            for t in d.triples() {
                let fw = features.eval(&t.state, t.winner);
                let fl = features.eval(&t.state, t.loser);
                let m: f64 = fw.iter().zip(&fl).zip(weights).map(|((a, b), w)| (a - b) * w).sum();
                loss -= log_sigmoid(m);
                let coef = -sigmoid(-m);
                for ((g, a), b) in grad.iter_mut().zip(&fw).zip(&fl) {
                    *g += coef * (a - b);
                }
            }
            Ok((loss, grad))
        }
        RewardKind::Mlp { net, k } => {
            let n = d.n();
            let width = net.spec.input_dim();
            let mut x = Array2::zeros((2 * n, width));
            for (i, t) in d.triples().iter().enumerate() {
                for (row, a) in [(i, t.winner), (n + i, t.loser)] {
                    let v = state_action_input(&t.state, a, *k);
                    x.row_mut(row).iter_mut().zip(v).for_each(|(dst, src)| *dst = src);
                }
            }
            let (out, cache) = net.forward_cached(x.view())?;
            let mut up = Array2::zeros((2 * n, 1));
            let mut loss = 0.0;
            for i in 0..n {
                let m = out[[i, 0]] - out[[n + i, 0]];
                loss -= log_sigmoid(m);
                let coef = -sigmoid(-m);
                up[[i, 0]] = coef;
                up[[n + i, 0]] = -coef;
            }
            let (g, _) = net.backward_batch(&cache, up.view())?;
            Ok((loss, g.values))
        }
    }
}

/// Fraction of triples the model orders correctly; ties count one half.
pub fn pairwise_accuracy(model: &RewardModel, d: &PreferenceDataset) -> Result<f64> {
    d.require_nonempty()?;
    let score: f64 = model
        .margins(d)?
        .into_iter()
        .map(|m| {
            if m > 0.0 {
                1.0
            } else if m == 0.0 {
                0.5
            } else {
                0.0
            }
        })
        .sum();
    Ok(score / d.n() as f64)
}

/// Outcome of the convex linear fit.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub model: RewardModel,
    /// Objective `bt_loss + ridge * |w|^2` at exit.
    pub objective: f64,
    pub grad_norm: f64,
    pub iterations: usize,
}

fn ridge_objective(features: &FeatureMap, w: &[f64], d: &PreferenceDataset, ridge: f64) -> Result<(f64, Vec<f64>)> {
    let model = RewardModel::linear(features.clone(), w.to_vec())?;
    let (loss, mut grad) = bt_loss_and_grad(&model, d)?;
    let sq: f64 = w.iter().map(|v| v * v).sum();
    grad.iter_mut().zip(w).for_each(|(g, v)| *g += 2.0 * ridge * v);
    Ok((loss + ridge * sq, grad))
}

/// Ridge-regularized Bradley–Terry MLE over a linear reward class, from `w = 0`.
pub fn train_reward_linear(features: &FeatureMap, d: &PreferenceDataset, ridge: f64) -> Result<LinearFit> {
    train_reward_linear_from(features, d, ridge, vec![0.0; features.out_dim()])
}

/// Gradient descent with Armijo backtracking; the step grows after every
/// accepted move. Stops at gradient norm `LINEAR_GRAD_TOL` or `LINEAR_MAX_ITERS`.
pub fn train_reward_linear_from(
    features: &FeatureMap,
    d: &PreferenceDataset,
    ridge: f64,
    init: Vec<f64>,
) -> Result<LinearFit> {
    d.require_nonempty()?;
    if !(ridge >= 0.0) {
        return Err(Error::InvalidArgument(format!("ridge must be >= 0, got {ridge}")));
    }
    let mut w = init;
    let (mut f, mut g) = ridge_objective(features, &w, d, ridge)?;
    let mut step = 1.0;
    let mut iterations = 0;
    let norm = |g: &[f64]| g.iter().map(|v| v * v).sum::<f64>().sqrt();
    while iterations < LINEAR_MAX_ITERS && norm(&g) >= LINEAR_GRAD_TOL {
        iterations += 1;
        let gg: f64 = g.iter().map(|v| v * v).sum();
        let mut accepted = false;
        while step > 1e-300 {
            let trial: Vec<f64> = w.iter().zip(&g).map(|(wi, gi)| wi - step * gi).collect();
            let (ft, gt) = ridge_objective(features, &trial, d, ridge)?;
            if ft <= f - 1e-4 * step * gg {
                w = trial;
                f = ft;
                g = gt;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        step *= 2.0;
    }
    let grad_norm = norm(&g);
    let mut model = RewardModel::linear(features.clone(), w)?;
    if grad_norm > LINEAR_WARN_GRAD {
        model.warning = Some(format!(
            "linear reward fit stopped after {iterations} iterations with gradient norm {grad_norm:e}"
        ));
    }
    Ok(LinearFit {
        model,
        objective: f,
        grad_norm,
        iterations,
    })
}

/// Outcome of neural reward training: final model and the per-step loss.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralFit {
    pub model: RewardModel,
    /// `(step, loss)`, recorded before each update plus once after the last.
    pub trajectory: Vec<(usize, f64)>,
}

/// Full-batch Adam descent on the Bradley–Terry loss for `steps` steps.
pub fn train_reward_neural(
    init: RewardModel,
    d: &PreferenceDataset,
    steps: usize,
    optimizer: OptimizerConfig,
) -> Result<NeuralFit> {
    d.require_nonempty()?;
    if steps == 0 {
        return Err(Error::InvalidArgument("steps must be >= 1".into()));
    }
    let mut model = init;
    let mut opt = OptimizerState::new(optimizer, model.params().len())?;
    let mut trajectory = Vec::with_capacity(steps + 1);
    for step in 0..steps {
        let (loss, grad) = bt_loss_and_grad(&model, d)?;
        if !loss.is_finite() {
            return Err(Error::Divergence { what: "reward loss", step });
        }
        trajectory.push((step, loss));
        opt.step(model.params_mut(), &grad, Direction::Descent)?;
    }
    let last = bt_loss(&model, d)?;
    if !last.is_finite() {
        return Err(Error::Divergence { what: "reward loss", step: steps });
    }
    trajectory.push((steps, last));
    Ok(NeuralFit { model, trajectory })
}

/// CSV `step,loss` for a training curve.
pub fn trajectory_csv(trajectory: &[(usize, f64)]) -> String {
    let mut out = String::from("step,loss\n");
    for (s, l) in trajectory {
        out.push_str(&format!("{s},{l}\n"));
    }
    out
}
