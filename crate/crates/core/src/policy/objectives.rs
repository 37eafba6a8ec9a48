use ndarray::{Array2, ArrayView2};

use super::{Policy, ReferencePolicy};
use crate::data::{PreferenceDataset, State};
use crate::error::{Error, Result};
use crate::math::{log_sigmoid, log_softmax, sigmoid};
use crate::reward::RewardModel;

/// An objective over a batch of policy logits: value plus `d value / d logits`.
pub trait PolicyObjective {
    fn evaluate(&self, logits: ArrayView2<'_, f64>) -> (f64, Array2<f64>);
}

/// `sum_a p_a log(K p_a)`, with `0 log 0 = 0`.
pub fn kl_to_uniform(p: &[f64]) -> f64 {
    let k = p.len() as f64;
    p.iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v * (k * v).ln())
        .sum()
}

/// Reward-plus-KL objective with exact action expectations:
/// `sum_i [ sum_a pi(a|s_i) R[i, a] - beta KL(pi(.|s_i) || uniform) ]`.
///
/// For RMB-PO `R` is the learned reward table; for RMF-PO it is the learned
/// reward masked to the two compared actions of each triple (zero elsewhere).
#[derive(Debug, Clone)]
pub struct RewardObjective {
    pub rewards: Array2<f64>,
    pub beta: f64,
}

impl PolicyObjective for RewardObjective {
    fn evaluate(&self, logits: ArrayView2<'_, f64>) -> (f64, Array2<f64>) {
        let k = logits.ncols();
        let ln_k = (k as f64).ln();
        let mut grad = Array2::zeros(logits.raw_dim());
        let mut total = 0.0;
        for (i, z) in logits.rows().into_iter().enumerate() {
            let logp = log_softmax(z.as_slice().expect("row-major logits"));
            let p: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
            // v_a = R_a - beta (log p_a + ln K); value = sum_a p_a v_a
            let v: Vec<f64> = (0..k)
                .map(|a| {
                    let entropy_term = if p[a] > 0.0 { logp[a] + ln_k } else { 0.0 };
                    self.rewards[[i, a]] - self.beta * entropy_term
                })
                .collect();
            let mean: f64 = p.iter().zip(&v).map(|(pa, va)| pa * va).sum();
            total += mean;
            for a in 0..k {
                grad[[i, a]] = p[a] * (v[a] - mean);
            }
        }
        (total, grad)
    }
}

/// DPO loss against the uniform reference. Winner/loser log-ratio is
/// computed from logits, never from probabilities.
#[derive(Debug, Clone)]
pub struct DpoObjective {
    pub winners: Vec<usize>,
    pub losers: Vec<usize>,
    pub beta: f64,
}

impl DpoObjective {
    pub fn new(d: &PreferenceDataset, beta: f64) -> Self {
        DpoObjective {
            winners: d.triples().iter().map(|t| t.winner.0).collect(),
            losers: d.triples().iter().map(|t| t.loser.0).collect(),
            beta,
        }
    }
}

impl PolicyObjective for DpoObjective {
    fn evaluate(&self, logits: ArrayView2<'_, f64>) -> (f64, Array2<f64>) {
        let mut grad = Array2::zeros(logits.raw_dim());
        let mut loss = 0.0;
        for (i, z) in logits.rows().into_iter().enumerate() {
            let logp = log_softmax(z.as_slice().expect("row-major logits"));
            let (w, l) = (self.winners[i], self.losers[i]);
            // the log-partition cancels: d/dz of (logp_w - logp_l) = e_w - e_l
            let u = self.beta * (logp[w] - logp[l]);
            loss -= log_sigmoid(u);
            let coef = -self.beta * sigmoid(-u);
            grad[[i, w]] += coef;
            grad[[i, l]] -= coef;
        }
        (loss, grad)
    }
}

pub(crate) fn masked_pair_rewards(r_hat: &RewardModel, d: &PreferenceDataset, k: usize) -> Result<Array2<f64>> {
    let mut rewards = Array2::zeros((d.n(), k));
    for (i, t) in d.triples().iter().enumerate() {
        if t.winner.0 >= k || t.loser.0 >= k {
            return Err(Error::InvalidArgument(format!("triple {i} names an action >= {k}")));
        }
        rewards[[i, t.winner.0]] = r_hat.score(&t.state, t.winner)?;
        rewards[[i, t.loser.0]] = r_hat.score(&t.state, t.loser)?;
    }
    Ok(rewards)
}

/// Reward-model-based objective over `states`, exact in the action dimension.
pub fn rmb_objective(policy: &Policy, r_hat: &RewardModel, states: &[State], beta: f64) -> Result<f64> {
    if states.is_empty() {
        return Err(Error::InvalidArgument("no states to evaluate".into()));
    }
    let rewards = r_hat.score_table(states, policy.k)?;
    let logits = policy.logits(states)?;
    Ok(RewardObjective { rewards, beta }.evaluate(logits.view()).0)
}

/// Truncated objective: learned reward summed over each triple's two actions only.
pub fn rmf_objective(policy: &Policy, r_hat: &RewardModel, d: &PreferenceDataset, beta: f64) -> Result<f64> {
    d.require_nonempty()?;
    let rewards = masked_pair_rewards(r_hat, d, policy.k)?;
    let logits = policy.logits(&d.states())?;
    Ok(RewardObjective { rewards, beta }.evaluate(logits.view()).0)
}

/// `-sum_i log sigmoid(beta (log pi(w|s) - log pi(l|s)))` for the uniform reference.
pub fn dpo_loss(policy: &Policy, d: &PreferenceDataset, beta: f64) -> Result<f64> {
    d.require_nonempty()?;
    let logits = policy.logits(&d.states())?;
    Ok(DpoObjective::new(d, beta).evaluate(logits.view()).0)
}

/// DPO loss with the reference log-probabilities subtracted explicitly.
pub fn dpo_loss_with_reference(
    policy: &Policy,
    reference: ReferencePolicy,
    d: &PreferenceDataset,
    beta: f64,
) -> Result<f64> {
    d.require_nonempty()?;
    let logits = policy.logits(&d.states())?;
    let mut loss = 0.0;
    for (t, z) in d.triples().iter().zip(logits.rows()) {
        let logp = log_softmax(z.as_slice().expect("row-major logits"));
        let w = logp[t.winner.0] - reference.log_prob();
        let l = logp[t.loser.0] - reference.log_prob();
        loss -= log_sigmoid(beta * w - beta * l);
    }
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ActionId, PreferenceTriple};
    use crate::envs::FeatureMap;
    use crate::math::softmax;
    use std::f64::consts::LN_2;

    #[test]
    fn kl_values() {
        assert_eq!(kl_to_uniform(&[0.25; 4]), 0.0);
        assert!((kl_to_uniform(&[1.0, 0.0, 0.0, 0.0]) - 4f64.ln()).abs() < 1e-15);
        assert!((kl_to_uniform(&[0.5, 0.5, 0.0, 0.0]) - LN_2).abs() < 1e-15);
    }

    fn brute_force(rewards: &[f64], logits: &[f64], beta: f64) -> f64 {
        let p = softmax(logits);
        let mut total = 0.0;
        for a in 0..p.len() {
            total += p[a] * rewards[a];
        }
        total - beta * kl_to_uniform(&p)
    }

    #[test]
    fn reward_objective_matches_enumeration() {
        let rewards = Array2::from_shape_vec((2, 3), vec![0.3, -1.0, 2.0, 0.0, 0.5, 0.1]).unwrap();
        let logits = Array2::from_shape_vec((2, 3), vec![0.2, 1.5, -0.7, 3.0, 0.0, 0.1]).unwrap();
        let beta = 0.37;
        let (v, _) = RewardObjective { rewards: rewards.clone(), beta }.evaluate(logits.view());
        let want: f64 = (0..2)
            .map(|i| {
                brute_force(
                    rewards.row(i).as_slice().unwrap(),
                    logits.row(i).as_slice().unwrap(),
                    beta,
                )
            })
            .sum();
        assert!((v - want).abs() < 1e-12);
    }

    #[test]
    fn uniform_policy_rmb_is_mean_reward() {
        let p = Policy::linear(FeatureMap::LinearReward, vec![0.0, 0.0], 4).unwrap();
        let r = RewardModel::linear(FeatureMap::LinearReward, vec![1.0, 2.0]).unwrap();
        let states = vec![State::scalar(0.0)];
        // r(0, .) = (1, 2, 3, 4)
        let v = rmb_objective(&p, &r, &states, 5.0).unwrap();
        assert!((v - 2.5).abs() < 1e-12);
    }

    #[test]
    fn greedy_one_hot_at_beta_zero() {
        let rewards = Array2::from_shape_vec((1, 3), vec![0.2, 0.9, 0.4]).unwrap();
        let logits = Array2::from_shape_vec((1, 3), vec![-800.0, 0.0, -800.0]).unwrap();
        let (v, _) = RewardObjective { rewards, beta: 0.0 }.evaluate(logits.view());
        assert!((v - 0.9).abs() < 1e-12);
    }

    fn one_triple(w: usize, l: usize) -> PreferenceDataset {
        PreferenceDataset::new(vec![PreferenceTriple {
            state: State::scalar(0.3),
            winner: ActionId(w),
            loser: ActionId(l),
        }])
    }

    #[test]
    fn dpo_at_reference_is_n_log2() {
        let d = PreferenceDataset::new(
            (0..7)
                .map(|i| PreferenceTriple {
                    state: State::scalar(i as f64 / 7.0),
                    winner: ActionId(i % 4),
                    loser: ActionId((i + 2) % 4),
                })
                .collect(),
        );
        let p = Policy::linear(FeatureMap::LinearReward, vec![0.0, 0.0], 4).unwrap();
        assert!((dpo_loss(&p, &d, 0.01).unwrap() - 7.0 * LN_2).abs() < 1e-12);
    }

    #[test]
    fn dpo_single_gap() {
        // tabular logits with log pi(w) - log pi(l) = 10
        let d = one_triple(1, 0);
        let fm = FeatureMap::Tabular { states: vec![State::scalar(0.3)], k: 4 };
        let p = Policy::linear(fm, vec![0.0, 10.0, 0.0, 0.0], 4).unwrap();
        // -ln sigmoid(0.1)
        assert!((dpo_loss(&p, &d, 0.01).unwrap() - 0.644_396_660_073_571_3).abs() < 1e-12);
    }

    #[test]
    fn dpo_shift_invariant_and_reference_cancels() {
        let d = one_triple(2, 3);
        let fm = FeatureMap::Tabular { states: vec![State::scalar(0.3)], k: 4 };
        let a = Policy::linear(fm.clone(), vec![0.4, -1.0, 2.0, 0.3], 4).unwrap();
        let b = Policy::linear(fm, vec![5.4, 4.0, 7.0, 5.3], 4).unwrap();
        let la = dpo_loss(&a, &d, 0.5).unwrap();
        assert!((la - dpo_loss(&b, &d, 0.5).unwrap()).abs() < 1e-12);
        let explicit = dpo_loss_with_reference(&a, ReferencePolicy { k: 4 }, &d, 0.5).unwrap();
        assert!((la - explicit).abs() < 1e-12);
    }

    #[test]
    fn rmf_full_support_equals_full_sum() {
        // actions {0,1} and {2,3} at the same state: truncated sums cover all four
        let s = State::scalar(0.2);
        let d = PreferenceDataset::new(vec![
            PreferenceTriple { state: s.clone(), winner: ActionId(0), loser: ActionId(1) },
            PreferenceTriple { state: s.clone(), winner: ActionId(3), loser: ActionId(2) },
        ]);
        let p = Policy::linear(FeatureMap::LinearReward, vec![0.7, -0.4], 4).unwrap();
        let r = RewardModel::linear(FeatureMap::LinearReward, vec![1.0, 2.0]).unwrap();
        let table = masked_pair_rewards(&r, &d, 4).unwrap();
        let summed: Vec<f64> = (0..4).map(|a| table[[0, a]] + table[[1, a]]).collect();
        for (a, total) in summed.iter().enumerate() {
            assert!((total - r.score(&s, ActionId(a)).unwrap()).abs() < 1e-15);
        }
        // with beta = 0 the two truncated rows add up to the full expectation
        let full = rmb_objective(&p, &r, &[s], 0.0).unwrap();
        assert!((rmf_objective(&p, &r, &d, 0.0).unwrap() - full).abs() < 1e-12);
    }
}
