//! Softmax policies and the four preference-based policy optimizers.

mod objectives;
mod train;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

pub use objectives::{
    dpo_loss, dpo_loss_with_reference, kl_to_uniform, rmb_objective, rmf_objective, DpoObjective,
    PolicyObjective, RewardObjective,
};
pub use train::{
    trace_csv, train_dpo, train_rmb_po, train_rmb_po_plus, train_rmf_po, PolicyOptConfig, StatePool, TraceRow,
    TrainOutcome,
};

use crate::data::{ActionId, State};
use crate::envs::FeatureMap;
use crate::error::{Error, Result};
use crate::math::softmax;
use crate::nn::{ForwardCache, Mlp, MlpSpec, ParamVector};
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyKind {
    /// `pi(a|s) ∝ exp(phi(s, a) . theta)`.
    LinearSoftmax { features: FeatureMap, theta: Vec<f64> },
    /// Network from state to `K` logits.
    MlpSoftmax { net: Mlp },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub kind: PolicyKind,
    pub k: usize,
}

/// States laid out once for repeated logit evaluation during training.
#[derive(Debug, Clone)]
pub enum PreparedStates {
    /// `[(N*K) x d]` feature rows, state-major.
    Features { rows: Array2<f64>, n: usize },
    /// `[N x d_s]` network inputs.
    Inputs(Array2<f64>),
}

impl PreparedStates {
    pub fn len(&self) -> usize {
        match self {
            PreparedStates::Features { n, .. } => *n,
            PreparedStates::Inputs(x) => x.nrows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Policy {
    pub fn linear(features: FeatureMap, theta: Vec<f64>, k: usize) -> Result<Self> {
        if theta.len() != features.out_dim() {
            return Err(Error::Shape(format!(
                "{} policy weights for a {}-dimensional feature map",
                theta.len(),
                features.out_dim()
            )));
        }
        Ok(Policy {
            kind: PolicyKind::LinearSoftmax { features, theta },
            k,
        })
    }

    pub fn mlp(net: Mlp) -> Self {
        let k = net.spec.output_dim();
        Policy {
            kind: PolicyKind::MlpSoftmax { net },
            k,
        }
    }

    /// Linear policy with weights drawn `U(-1/sqrt(d), 1/sqrt(d))`.
    pub fn init_linear(features: FeatureMap, k: usize, rng: &mut RngStream) -> Self {
        let d = features.out_dim();
        let bound = 1.0 / (d as f64).sqrt();
        let theta = (0..d).map(|_| rng.uniform_in(-bound, bound)).collect();
        Policy::linear(features, theta, k).expect("sized from the feature map")
    }

    pub fn init_mlp(spec: MlpSpec, rng: &mut RngStream) -> Self {
        let params = spec.init_params(rng);
        Policy::mlp(Mlp::new(spec, params).expect("sized from the spec"))
    }

    /// Same structure, every parameter zero (the uniform policy).
    pub fn zeroed(&self) -> Self {
        let mut p = self.clone();
        p.params_mut().iter_mut().for_each(|v| *v = 0.0);
        p
    }

    pub fn params(&self) -> &[f64] {
        match &self.kind {
            PolicyKind::LinearSoftmax { theta, .. } => theta,
            PolicyKind::MlpSoftmax { net } => &net.params.values,
        }
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        match &mut self.kind {
            PolicyKind::LinearSoftmax { theta, .. } => theta,
            PolicyKind::MlpSoftmax { net } => &mut net.params.values,
        }
    }

    pub fn to_param_vector(&self) -> (&'static str, ParamVector) {
        match &self.kind {
            PolicyKind::LinearSoftmax { theta, .. } => {
                ("policy_linear_softmax", ParamVector::new(vec![theta.len()], theta.clone()))
            }
            PolicyKind::MlpSoftmax { net } => ("policy_mlp_softmax", net.params.clone()),
        }
    }

    pub fn prepare(&self, states: &[State]) -> PreparedStates {
        match &self.kind {
            PolicyKind::LinearSoftmax { features, .. } => {
                let d = features.out_dim();
                let mut rows = Array2::zeros((states.len() * self.k, d));
                for (i, s) in states.iter().enumerate() {
                    for a in 0..self.k {
                        let f = features.eval(s, ActionId(a));
                        rows.row_mut(i * self.k + a)
                            .iter_mut()
                            .zip(f)
                            .for_each(|(dst, v)| *dst = v);
                    }
                }
                PreparedStates::Features { rows, n: states.len() }
            }
            PolicyKind::MlpSoftmax { net } => {
                let d = net.spec.input_dim();
                let mut x = Array2::zeros((states.len(), d));
                for (i, s) in states.iter().enumerate() {
                    x.row_mut(i)
                        .iter_mut()
                        .zip(s.coords())
                        .for_each(|(dst, v)| *dst = *v);
                }
                PreparedStates::Inputs(x)
            }
        }
    }

    /// `[N x K]` logits, plus the cache needed by [`Policy::logit_backward`].
    pub fn logits_prepared(&self, prep: &PreparedStates) -> Result<(Array2<f64>, Option<ForwardCache>)> {
        let out = match (&self.kind, prep) {
            (PolicyKind::LinearSoftmax { theta, .. }, PreparedStates::Features { rows, n }) => {
                let flat = rows.dot(&ndarray::ArrayView1::from(theta.as_slice()));
                let z = flat
                    .into_shape_with_order((*n, self.k))
                    .expect("state-major rows");
                (z, None)
            }
            (PolicyKind::MlpSoftmax { net }, PreparedStates::Inputs(x)) => {
                let (z, cache) = net.forward_cached(x.view())?;
                (z, Some(cache))
            }
            _ => return Err(Error::Shape("prepared states do not match the policy kind".into())),
        };
        if out.0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "policy logits" });
        }
        Ok(out)
    }

    /// Parameter gradient of `sum(dlogits * logits)`.
    pub fn logit_backward(
        &self,
        prep: &PreparedStates,
        cache: Option<&ForwardCache>,
        dlogits: ArrayView2<'_, f64>,
    ) -> Result<Vec<f64>> {
        match (&self.kind, prep) {
            (PolicyKind::LinearSoftmax { .. }, PreparedStates::Features { rows, n }) => {
                let flat = dlogits
                    .as_standard_layout()
                    .into_owned()
                    .into_shape_with_order(n * self.k)
                    .expect("contiguous");
                Ok(rows.t().dot(&flat).to_vec())
            }
            (PolicyKind::MlpSoftmax { net }, PreparedStates::Inputs(_)) => {
                let cache = cache.ok_or_else(|| Error::InvalidArgument("missing forward cache".into()))?;
                Ok(net.backward_batch(cache, dlogits)?.0.values)
            }
            _ => Err(Error::Shape("prepared states do not match the policy kind".into())),
        }
    }

    pub fn logits(&self, states: &[State]) -> Result<Array2<f64>> {
        Ok(self.logits_prepared(&self.prepare(states))?.0)
    }

    /// `pi(.|s)` as a length-K probability vector.
    pub fn action_probs(&self, s: &State) -> Result<Vec<f64>> {
        let z = self.logits(std::slice::from_ref(s))?;
        Ok(softmax(z.row(0).as_slice().expect("row-major")))
    }

    /// `[N x K]` action probabilities.
    pub fn probs_table(&self, states: &[State]) -> Result<Array2<f64>> {
        let mut z = self.logits(states)?;
        for mut row in z.rows_mut() {
            let p = softmax(row.as_slice().expect("row-major"));
            row.iter_mut().zip(p).for_each(|(d, v)| *d = v);
        }
        Ok(z)
    }
}

/// The uniform reference policy over `K` actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReferencePolicy {
    pub k: usize,
}

impl ReferencePolicy {
    pub fn prob(&self) -> f64 {
        1.0 / self.k as f64
    }

    pub fn log_prob(&self) -> f64 {
        -(self.k as f64).ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::LINEAR_THETA_STAR;
    use crate::nn::Activation;
    use crate::rng::StreamLabel;

    #[test]
    fn zero_parameters_are_uniform() {
        let p = Policy::linear(FeatureMap::LinearReward, vec![0.0, 0.0], 4).unwrap();
        assert_eq!(p.action_probs(&State::scalar(0.3)).unwrap(), vec![0.25; 4]);
        let mut rng = RngStream::new(1, StreamLabel::ModelInit);
        let net = Policy::init_mlp(MlpSpec::new(vec![3, 5, 6], Activation::Relu).unwrap(), &mut rng).zeroed();
        let probs = net.action_probs(&State::new(vec![0.1, 0.2, 0.3]).unwrap()).unwrap();
        assert!(probs.iter().all(|&v| (v - 1.0 / 6.0).abs() < 1e-15));
    }

    #[test]
    fn large_scale_concentrates_on_greedy() {
        let t = 200.0;
        let p = Policy::linear(
            FeatureMap::LinearReward,
            vec![t * LINEAR_THETA_STAR[0], t * LINEAR_THETA_STAR[1]],
            4,
        )
        .unwrap();
        // r(0, .) = (1, 2, 3, 4); r(0.5, .) = (2, 1, 2/3, 1/2)
        assert!(p.action_probs(&State::scalar(0.0)).unwrap()[3] > 0.999_999);
        assert!(p.action_probs(&State::scalar(0.5)).unwrap()[0] > 0.999_999);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let mut rng = RngStream::new(4, StreamLabel::ModelInit);
        let p = Policy::init_mlp(MlpSpec::new(vec![50, 64, 64, 10], Activation::Relu).unwrap(), &mut rng);
        for _ in 0..20 {
            let s = State::new((0..50).map(|_| rng.uniform_in(-1.0, 1.0)).collect()).unwrap();
            let probs = p.action_probs(&s).unwrap();
            assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(probs.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn mismatched_prep_rejected() {
        let lin = Policy::linear(FeatureMap::LinearReward, vec![0.0, 0.0], 4).unwrap();
        let mut rng = RngStream::new(1, StreamLabel::ModelInit);
        let net = Policy::init_mlp(MlpSpec::new(vec![1, 4], Activation::Relu).unwrap(), &mut rng);
        let prep = net.prepare(&[State::scalar(0.2)]);
        assert!(lin.logits_prepared(&prep).is_err());
    }
}
