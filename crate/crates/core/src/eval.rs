//! Policy evaluation under the true reward.
//!
//! Everything here reads the environment's ground-truth reward; the learned
//! reward never enters the metric.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::State;
use crate::envs::Env;
use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub seed: u64,
    pub r_pi: f64,
    pub r_star: f64,
    /// `|r_star - r_pi|`.
    pub gap: f64,
    pub eval_states: usize,
}

/// A fixed sample of evaluation states with their true reward table, shared
/// by every policy evaluated within a seed.
#[derive(Debug, Clone)]
pub struct EvalSet {
    pub states: Vec<State>,
    rewards: Array2<f64>,
}

impl EvalSet {
    pub fn sample(env: &Env, n: usize, rng: &mut RngStream) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("need at least one evaluation state".into()));
        }
        let states: Vec<State> = (0..n).map(|_| env.sample_state(rng)).collect();
        Self::from_states(env, states)
    }

    pub fn from_states(env: &Env, states: Vec<State>) -> Result<Self> {
        let rewards = env.reward_table(&states)?;
        Ok(EvalSet { states, rewards })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Mean over states of `max_a r(s, a)`.
    pub fn optimal_value(&self) -> f64 {
        let total: f64 = self
            .rewards
            .rows()
            .into_iter()
            .map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .sum();
        total / self.len() as f64
    }

    /// Mean over states of the exact expectation `sum_a pi(a|s) r(s, a)`.
    pub fn policy_value(&self, policy: &Policy) -> Result<f64> {
        let probs = policy.probs_table(&self.states)?;
        let total: f64 = (&probs * &self.rewards).sum();
        Ok(total / self.len() as f64)
    }

    pub fn report(&self, policy: &Policy, method: &str, seed: u64) -> Result<EvalReport> {
        let r_pi = self.policy_value(policy)?;
        let r_star = self.optimal_value();
        Ok(EvalReport {
            method: method.to_string(),
            seed,
            r_pi,
            r_star,
            gap: (r_star - r_pi).abs(),
            eval_states: self.len(),
        })
    }
}

/// `r(pi)` estimated on `n` states drawn from `rng`.
pub fn policy_value(policy: &Policy, env: &Env, n: usize, rng: &mut RngStream) -> Result<f64> {
    EvalSet::sample(env, n, rng)?.policy_value(policy)
}

/// `r(pi*)` for the greedy optimal policy, estimated on `n` states drawn from `rng`.
pub fn optimal_value(env: &Env, n: usize, rng: &mut RngStream) -> Result<f64> {
    Ok(EvalSet::sample(env, n, rng)?.optimal_value())
}

/// Paired estimate of `r(pi*)` and `r(pi)` on one shared state sample.
pub fn optimality_gap(policy: &Policy, env: &Env, n: usize, rng: &mut RngStream) -> Result<EvalReport> {
    EvalSet::sample(env, n, rng)?.report(policy, "policy", rng.seed())
}

/// `pi(a|s)` on `grid` evenly spaced states over `[0, 1]`, as `[grid x K]`.
pub fn action_profile(policy: &Policy, env: &Env, grid: usize) -> Result<Array2<f64>> {
    if !matches!(env, Env::Linear(_)) {
        return Err(Error::InvalidArgument(
            "action profiles need a one-dimensional state space".into(),
        ));
    }
    if grid < 2 {
        return Err(Error::InvalidArgument("grid needs at least two points".into()));
    }
    policy.probs_table(&profile_grid(grid))
}

pub fn profile_grid(grid: usize) -> Vec<State> {
    (0..grid)
        .map(|i| State::scalar(i as f64 / (grid - 1) as f64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{FeatureMap, LinearBanditEnv, PolicyFeatureMode};
    use crate::rng::StreamLabel;

    fn linear_env() -> Env {
        Env::Linear(LinearBanditEnv::new(PolicyFeatureMode::Matched))
    }

    fn uniform() -> Policy {
        Policy::linear(FeatureMap::LinearReward, vec![0.0, 0.0], 4).unwrap()
    }

    #[test]
    fn uniform_value_at_zero() {
        let set = EvalSet::from_states(&linear_env(), vec![State::scalar(0.0)]).unwrap();
        assert!((set.policy_value(&uniform()).unwrap() - 2.5).abs() < 1e-12);
        assert_eq!(set.optimal_value(), 4.0);
    }

    #[test]
    fn optimal_value_at_half() {
        let set = EvalSet::from_states(&linear_env(), vec![State::scalar(0.5)]).unwrap();
        assert!((set.optimal_value() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn greedy_policy_has_zero_gap() {
        let env = linear_env();
        let mut rng = RngStream::new(2021, StreamLabel::Evaluation);
        let set = EvalSet::sample(&env, 300, &mut rng).unwrap();
        // a tabular policy that puts all mass on the true argmax at each eval state
        let fm = FeatureMap::Tabular { states: set.states.clone(), k: 4 };
        let mut theta = vec![0.0; fm.out_dim()];
        for (i, s) in set.states.iter().enumerate() {
            let r: Vec<f64> = (0..4)
                .map(|a| env.true_reward(s, crate::data::ActionId(a)).unwrap())
                .collect();
            let best = (0..4).max_by(|&a, &b| r[a].total_cmp(&r[b])).unwrap();
            theta[i * 4 + best] = 2000.0;
        }
        let greedy = Policy::linear(fm, theta, 4).unwrap();
        let rep = set.report(&greedy, "greedy", 2021).unwrap();
        assert!(rep.gap < 1e-12, "gap {}", rep.gap);

        let unif = set.report(&uniform(), "uniform", 2021).unwrap();
        assert!(unif.gap > 0.0);
        assert!(unif.r_star >= unif.r_pi);
    }

    #[test]
    fn gap_invariant_to_state_order() {
        let env = linear_env();
        let mut rng = RngStream::new(7, StreamLabel::Evaluation);
        let set = EvalSet::sample(&env, 64, &mut rng).unwrap();
        let mut rev = set.states.clone();
        rev.reverse();
        let p = Policy::linear(FeatureMap::LinearReward, vec![0.8, -0.3], 4).unwrap();
        let a = set.report(&p, "p", 7).unwrap().gap;
        let b = EvalSet::from_states(&env, rev).unwrap().report(&p, "p", 7).unwrap().gap;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn profile_shape_and_rows() {
        let env = linear_env();
        let prof = action_profile(&uniform(), &env, 11).unwrap();
        assert_eq!(prof.dim(), (11, 4));
        assert!(prof.iter().all(|&v| (v - 0.25).abs() < 1e-15));
        let p = Policy::linear(FeatureMap::LinearReward, vec![3.0, -1.0], 4).unwrap();
        for row in action_profile(&p, &env, 50).unwrap().rows() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
        }
        assert!(action_profile(&p, &env, 1).is_err());
    }

    #[test]
    fn profile_rejects_neural_env() {
        let mut rng = RngStream::new(1, StreamLabel::EnvInit);
        let env = Env::Neural(crate::envs::NeuralBanditEnv::new(&mut rng, 1.0));
        assert!(action_profile(&uniform(), &env, 10).is_err());
    }
}
