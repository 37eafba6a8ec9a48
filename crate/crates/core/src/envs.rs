//! Ground-truth contextual bandits and Bradley–Terry preference collection.

use std::f64::consts::PI;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::{ActionId, PreferenceDataset, PreferenceTriple, PromptDataset, State};
use crate::error::{Error, Result};
use crate::math::sigmoid;
use crate::nn::{Activation, Mlp, MlpSpec};
use crate::rng::RngStream;

/// Linear bandit action count.
pub const LINEAR_K: usize = 4;
/// Ground-truth parameter of the linear bandit.
pub const LINEAR_THETA_STAR: [f64; 2] = [1.0, 2.0];
pub const NEURAL_STATE_DIM: usize = 50;
pub const NEURAL_K: usize = 10;
pub const NEURAL_TRUE_HIDDEN: usize = 64;
pub const DEFAULT_TRUE_REWARD_SCALE: f64 = 1.0;

/// `((a+1) cos(pi s), sin(pi s) / (a+1))`.
pub fn reward_features_linear(s: &State, a: ActionId) -> [f64; 2] {
    let x = s.coords()[0] * PI;
    let w = (a.0 + 1) as f64;
    [w * x.cos(), x.sin() / w]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyFeatureMode {
    Matched,
    Flipped,
}

/// Policy features for the linear bandit. The flipped map swaps the roles of
/// sine and cosine: `((a+1) sin(pi s), cos(pi s) / (a+1))`.
pub fn policy_features_linear(s: &State, a: ActionId, mode: PolicyFeatureMode) -> [f64; 2] {
    match mode {
        PolicyFeatureMode::Matched => reward_features_linear(s, a),
        PolicyFeatureMode::Flipped => {
            let x = s.coords()[0] * PI;
            let w = (a.0 + 1) as f64;
            [w * x.sin(), x.cos() / w]
        }
    }
}

/// Feature maps `phi(s, a)` used by linear reward models and linear-softmax policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureMap {
    /// Reward features of the linear bandit.
    LinearReward,
    /// Sine/cosine-swapped policy features of the linear bandit.
    LinearFlipped,
    /// `phi(s, a) = (a)`.
    ActionIndex,
    /// One indicator per (listed state, action): a free logit per entry.
    /// States not in the list map to the zero vector.
    Tabular { states: Vec<State>, k: usize },
}

impl FeatureMap {
    pub fn out_dim(&self) -> usize {
        match self {
            FeatureMap::LinearReward | FeatureMap::LinearFlipped => 2,
            FeatureMap::ActionIndex => 1,
            FeatureMap::Tabular { states, k } => states.len() * k,
        }
    }

    pub fn eval(&self, s: &State, a: ActionId) -> Vec<f64> {
        match self {
            FeatureMap::LinearReward => reward_features_linear(s, a).to_vec(),
            FeatureMap::LinearFlipped => policy_features_linear(s, a, PolicyFeatureMode::Flipped).to_vec(),
            FeatureMap::ActionIndex => vec![a.0 as f64],
            FeatureMap::Tabular { states, k } => {
                let mut v = vec![0.0; states.len() * k];
                if let Some(i) = states.iter().position(|t| t == s) {
                    v[i * k + a.0] = 1.0;
                }
                v
            }
        }
    }

    pub fn for_policy_mode(mode: PolicyFeatureMode) -> Self {
        match mode {
            PolicyFeatureMode::Matched => FeatureMap::LinearReward,
            PolicyFeatureMode::Flipped => FeatureMap::LinearFlipped,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearBanditEnv {
    pub theta_star: [f64; 2],
    pub k: usize,
    pub policy_feature_mode: PolicyFeatureMode,
}

impl LinearBanditEnv {
    pub fn new(policy_feature_mode: PolicyFeatureMode) -> Self {
        LinearBanditEnv {
            theta_star: LINEAR_THETA_STAR,
            k: LINEAR_K,
            policy_feature_mode,
        }
    }

    pub fn reward(&self, s: &State, a: ActionId) -> f64 {
        let f = reward_features_linear(s, a);
        f[0] * self.theta_star[0] + f[1] * self.theta_star[1]
    }
}

/// Neural bandit whose reward is a frozen one-hidden-layer tanh network over
/// the state concatenated with a one-hot action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralBanditEnv {
    pub true_net: Mlp,
    /// Multiplier applied to the network output.
    pub output_scale: f64,
    pub state_dim: usize,
    pub k: usize,
}

impl NeuralBanditEnv {
    /// Draws the ground-truth network from the env-init stream.
    pub fn new(rng: &mut RngStream, output_scale: f64) -> Self {
        let spec = MlpSpec::new(
            vec![NEURAL_STATE_DIM + NEURAL_K, NEURAL_TRUE_HIDDEN, 1],
            Activation::Tanh,
        )
        .expect("static spec");
        let params = spec.init_params(rng);
        NeuralBanditEnv {
            true_net: Mlp::new(spec, params).expect("matching params"),
            output_scale,
            state_dim: NEURAL_STATE_DIM,
            k: NEURAL_K,
        }
    }
}

/// State concatenated with the one-hot encoding of `a`.
pub fn state_action_input(s: &State, a: ActionId, k: usize) -> Vec<f64> {
    let mut v = Vec::with_capacity(s.dim() + k);
    v.extend_from_slice(s.coords());
    v.extend((0..k).map(|j| if j == a.0 { 1.0 } else { 0.0 }));
    v
}

/// Rows `(state_i, action_a)` for every state and action, state-major.
pub fn state_action_grid(states: &[State], k: usize) -> Array2<f64> {
    let d = states.first().map_or(0, State::dim);
    let mut x = Array2::zeros((states.len() * k, d + k));
    for (i, s) in states.iter().enumerate() {
        for a in 0..k {
            let mut row = x.row_mut(i * k + a);
            for (j, c) in s.coords().iter().enumerate() {
                row[j] = *c;
            }
            row[d + a] = 1.0;
        }
    }
    x
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "env", rename_all = "snake_case")]
pub enum Env {
    Linear(LinearBanditEnv),
    Neural(NeuralBanditEnv),
}

impl Env {
    pub fn k(&self) -> usize {
        match self {
            Env::Linear(e) => e.k,
            Env::Neural(e) => e.k,
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            Env::Linear(_) => 1,
            Env::Neural(e) => e.state_dim,
        }
    }

    pub fn actions(&self) -> impl Iterator<Item = ActionId> {
        (0..self.k()).map(ActionId)
    }

    /// Uniform on `[0, 1]` (linear) or `[-1, 1]^50` (neural).
    pub fn sample_state(&self, rng: &mut RngStream) -> State {
        match self {
            Env::Linear(_) => State::scalar(rng.uniform()),
            Env::Neural(e) => {
                State::new((0..e.state_dim).map(|_| rng.uniform_in(-1.0, 1.0)).collect())
                    .expect("finite draws")
            }
        }
    }

    pub fn true_reward(&self, s: &State, a: ActionId) -> Result<f64> {
        self.check(s, a)?;
        match self {
            Env::Linear(e) => Ok(e.reward(s, a)),
            Env::Neural(e) => {
                let x = state_action_input(s, a, e.k);
                let view = ndarray::ArrayView2::from_shape((1, x.len()), &x).expect("row");
                Ok(e.output_scale * e.true_net.forward_batch(view)?[[0, 0]])
            }
        }
    }

    /// True rewards for every state and action, `[states x K]`.
    pub fn reward_table(&self, states: &[State]) -> Result<Array2<f64>> {
        let k = self.k();
        match self {
            Env::Linear(e) => Ok(Array2::from_shape_fn((states.len(), k), |(i, a)| {
                e.reward(&states[i], ActionId(a))
            })),
            Env::Neural(e) => {
                if states.is_empty() {
                    return Ok(Array2::zeros((0, k)));
                }
                let x = state_action_grid(states, k);
                let out = e.true_net.forward_batch(x.view())? * e.output_scale;
                Ok(out
                    .into_shape_with_order((states.len(), k))
                    .expect("state-major layout"))
            }
        }
    }

    fn check(&self, s: &State, a: ActionId) -> Result<()> {
        if a.0 >= self.k() {
            return Err(Error::InvalidArgument(format!("action {} out of range", a.0)));
        }
        if s.dim() != self.state_dim() {
            return Err(Error::Shape(format!(
                "state has {} coordinates, environment expects {}",
                s.dim(),
                self.state_dim()
            )));
        }
        Ok(())
    }

    /// Labels one comparison: `a` wins with probability `sigmoid(r(s,a) - r(s,b))`.
    pub fn label_pair(&self, s: &State, a: ActionId, b: ActionId, rng: &mut RngStream) -> Result<PreferenceTriple> {
        let p = sigmoid(self.true_reward(s, a)? - self.true_reward(s, b)?);
        let (winner, loser) = if rng.bernoulli(p) { (a, b) } else { (b, a) };
        Ok(PreferenceTriple {
            state: s.clone(),
            winner,
            loser,
        })
    }

    /// `n` i.i.d. comparisons under a uniform behavior policy: `s ~ rho`, a
    /// pair of distinct actions drawn uniformly, Bradley–Terry label.
    pub fn collect_preferences(&self, n: usize, rng: &mut RngStream) -> Result<PreferenceDataset> {
        if n == 0 {
            return Err(Error::InvalidArgument("n must be >= 1".into()));
        }
        let k = self.k();
        let mut triples = Vec::with_capacity(n);
        for _ in 0..n {
            let s = self.sample_state(rng);
            let a = rng.index(k);
            let mut b = rng.index(k - 1);
            if b >= a {
                b += 1;
            }
            triples.push(self.label_pair(&s, ActionId(a), ActionId(b), rng)?);
        }
        Ok(PreferenceDataset::new(triples))
    }

    pub fn collect_prompts(&self, m: usize, rng: &mut RngStream) -> PromptDataset {
        PromptDataset::new((0..m).map(|_| self.sample_state(rng)).collect())
    }
}
