use serde::{Deserialize, Serialize};

use super::objectives::{masked_pair_rewards, DpoObjective, PolicyObjective, RewardObjective};
use super::Policy;
use crate::data::{PreferenceDataset, PromptDataset, State};
use crate::error::{Error, Result};
use crate::nn::{Direction, OptimizerConfig, OptimizerState};
use crate::reward::RewardModel;

/// Which states RMB-PO+ optimizes over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatePool {
    /// Preference states followed by prompt states.
    UnionWithPref,
    /// Prompt states only.
    PromptsOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyOptConfig {
    pub beta: f64,
    pub optimizer: OptimizerConfig,
    pub max_steps: usize,
    /// Stop once `|objective change| < tol` for `patience` consecutive steps.
    pub tol: f64,
    pub patience: usize,
    pub state_pool: StatePool,
}

impl PolicyOptConfig {
    /// AdaGrad 0.1, up to 5e4 steps.
    pub fn linear_default() -> Self {
        PolicyOptConfig {
            beta: 0.01,
            optimizer: OptimizerConfig::adagrad(0.1),
            max_steps: 50_000,
            tol: 1e-10,
            patience: 50,
            state_pool: StatePool::UnionWithPref,
        }
    }

    /// Adam 1e-3, up to 1e4 steps.
    pub fn neural_default() -> Self {
        PolicyOptConfig {
            optimizer: OptimizerConfig::adam(1e-3),
            max_steps: 10_000,
            ..Self::linear_default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0) {
            return Err(Error::InvalidArgument(format!("beta must be >= 0, got {}", self.beta)));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidArgument("max_steps must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub value: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub policy: Policy,
    /// Objective (or loss) before each update, then once at the final parameters.
    pub trace: Vec<TraceRow>,
    pub converged: bool,
}

impl TrainOutcome {
    pub fn initial_value(&self) -> f64 {
        self.trace[0].value
    }

    pub fn final_value(&self) -> f64 {
        self.trace.last().expect("trace is never empty").value
    }

    /// CSV `step,value,grad_norm`.
    pub fn trace_csv(&self) -> String {
        trace_csv(&self.trace)
    }
}

pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from("step,value,grad_norm\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.step, r.value, r.grad_norm));
    }
    out
}

fn optimize<O: PolicyObjective>(
    init: &Policy,
    states: &[State],
    objective: &O,
    cfg: &PolicyOptConfig,
    direction: Direction,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut policy = init.clone();
    let prep = policy.prepare(states);
    let mut opt = OptimizerState::new(cfg.optimizer, policy.params().len())?;

    let eval = |p: &Policy, step: usize| -> Result<(f64, Vec<f64>)> {
        let (logits, cache) = p.logits_prepared(&prep)?;
        let (value, dlogits) = objective.evaluate(logits.view());
        if !value.is_finite() {
            return Err(Error::Divergence { what: "objective", step });
        }
        let grad = p.logit_backward(&prep, cache.as_ref(), dlogits.view())?;
        Ok((value, grad))
    };
    let norm = |g: &[f64]| g.iter().map(|v| v * v).sum::<f64>().sqrt();

    let (mut value, mut grad) = eval(&policy, 0)?;
    let mut trace = Vec::new();
    let mut calm = 0;
    let mut converged = false;
    let mut step = 0;
    while step < cfg.max_steps {
        trace.push(TraceRow { step, value, grad_norm: norm(&grad) });
        opt.step(policy.params_mut(), &grad, direction)?;
        step += 1;
        let (next, next_grad) = eval(&policy, step)?;
        if (next - value).abs() < cfg.tol {
            calm += 1;
        } else {
            calm = 0;
        }
        value = next;
        grad = next_grad;
        if calm >= cfg.patience {
            converged = true;
            break;
        }
    }
    trace.push(TraceRow { step, value, grad_norm: norm(&grad) });
    Ok(TrainOutcome { policy, trace, converged })
}

/// RMB-PO: ascend the exact expected learned reward minus KL at the preference states.
pub fn train_rmb_po(
    init: &Policy,
    r_hat: &RewardModel,
    d: &PreferenceDataset,
    cfg: &PolicyOptConfig,
) -> Result<TrainOutcome> {
    d.require_nonempty()?;
    let states = d.states();
    let rewards = r_hat.score_table(&states, init.k)?;
    optimize(init, &states, &RewardObjective { rewards, beta: cfg.beta }, cfg, Direction::Ascent)
}

/// RMB-PO+: as RMB-PO over the configured pool of preference and prompt states.
pub fn train_rmb_po_plus(
    init: &Policy,
    r_hat: &RewardModel,
    d: &PreferenceDataset,
    prompts: &PromptDataset,
    cfg: &PolicyOptConfig,
) -> Result<TrainOutcome> {
    let states: Vec<State> = match cfg.state_pool {
        StatePool::UnionWithPref => {
            d.require_nonempty()?;
            d.states().into_iter().chain(prompts.states().iter().cloned()).collect()
        }
        StatePool::PromptsOnly => {
            if prompts.m() == 0 {
                return Err(Error::InvalidArgument("prompts-only pool needs m >= 1".into()));
            }
            prompts.states().to_vec()
        }
    };
    let rewards = r_hat.score_table(&states, init.k)?;
    optimize(init, &states, &RewardObjective { rewards, beta: cfg.beta }, cfg, Direction::Ascent)
}

/// RMF-PO: learned reward only at each triple's two observed actions, full KL.
pub fn train_rmf_po(
    init: &Policy,
    r_hat: &RewardModel,
    d: &PreferenceDataset,
    cfg: &PolicyOptConfig,
) -> Result<TrainOutcome> {
    d.require_nonempty()?;
    let rewards = masked_pair_rewards(r_hat, d, init.k)?;
    optimize(init, &d.states(), &RewardObjective { rewards, beta: cfg.beta }, cfg, Direction::Ascent)
}

/// DPO: descend the preference loss directly; no reward model involved.
pub fn train_dpo(init: &Policy, d: &PreferenceDataset, cfg: &PolicyOptConfig) -> Result<TrainOutcome> {
    d.require_nonempty()?;
    if let Some(t) = d.triples().iter().find(|t| t.winner.0 >= init.k || t.loser.0 >= init.k) {
        return Err(Error::InvalidArgument(format!(
            "triple ({}, {}) out of range for {} actions",
            t.winner.0, t.loser.0, init.k
        )));
    }
    optimize(init, &d.states(), &DpoObjective::new(d, cfg.beta), cfg, Direction::Descent)
}
