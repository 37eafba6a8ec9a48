//! Finite-difference verification of every analytic gradient.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::{ActionId, PreferenceDataset, PreferenceTriple, State};
use crate::envs::FeatureMap;
use crate::error::{Error, Result};
use crate::nn::{central_difference, relative_error, Activation, Mlp, MlpSpec, ParamVector};
use crate::policy::{DpoObjective, Policy, PolicyObjective, PreparedStates, RewardObjective};
use crate::reward::{bt_loss, bt_loss_and_grad, RewardModel};
use crate::rng::{RngStream, StreamLabel};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;
pub const DEFAULT_INSTANCES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Nn,
    BtLoss,
    DpoLoss,
    RmbObjective,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Nn, Suite::BtLoss, Suite::DpoLoss, Suite::RmbObjective];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Nn => "nn",
            Suite::BtLoss => "bt_loss",
            Suite::DpoLoss => "dpo_loss",
            Suite::RmbObjective => "rmb_objective",
        }
    }
}

/// Deliberate gradient corruption, used to show the checker catches bugs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    /// Negates the analytic DPO gradient.
    DpoSign,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheckConfig {
    pub seed: u64,
    pub instances: usize,
    pub step: f64,
    pub tolerance: f64,
    pub fault: Option<Fault>,
}

impl GradCheckConfig {
    pub fn new(seed: u64) -> Self {
        GradCheckConfig {
            seed,
            instances: DEFAULT_INSTANCES,
            step: DEFAULT_STEP,
            tolerance: DEFAULT_TOLERANCE,
            fault: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mismatch {
    pub instance: usize,
    pub coordinate: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub instances: usize,
    pub coordinates: usize,
    pub max_relative_error: f64,
    /// Coordinates above tolerance, in instance/coordinate order.
    pub failures: Vec<Mismatch>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

type ScalarFn = Box<dyn Fn(&[f64]) -> f64>;

/// Analytic gradient and a scalar function of the same parameters.
struct Case {
    params: Vec<f64>,
    analytic: Vec<f64>,
    f: ScalarFn,
}

fn random_vec(rng: &mut RngStream, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.uniform_in(-scale, scale)).collect()
}

fn random_dataset(rng: &mut RngStream, n: usize, dim: usize, k: usize, scalar_box: bool) -> PreferenceDataset {
    let triples = (0..n)
        .map(|_| {
            let coords = if scalar_box {
                vec![rng.uniform()]
            } else {
                random_vec(rng, dim, 1.0)
            };
            let w = rng.index(k);
            let mut l = rng.index(k - 1);
            if l >= w {
                l += 1;
            }
            PreferenceTriple {
                state: State::new(coords).expect("finite"),
                winner: ActionId(w),
                loser: ActionId(l),
            }
        })
        .collect();
    PreferenceDataset::new(triples)
}

/// Small random MLP whose hidden pre-activations stay away from relu kinks
/// on `x` by more than `margin`.
fn smooth_mlp(rng: &mut RngStream, sizes: Vec<usize>, act: Activation, x: &Array2<f64>, margin: f64) -> Result<Mlp> {
    let spec = MlpSpec::new(sizes, act)?;
    loop {
        let params = spec.init_params(rng);
        let net = Mlp::new(spec.clone(), params)?;
        let (_, cache) = net.forward_cached(x.view())?;
        if act == Activation::Tanh || cache.min_abs_hidden_preactivation() > margin {
            return Ok(net);
        }
    }
}

fn nn_case(rng: &mut RngStream, i: usize, h: f64) -> Result<Case> {
    let act = if i.is_multiple_of(2) { Activation::Relu } else { Activation::Tanh };
    let depth = 1 + rng.index(2);
    let mut sizes = vec![2 + rng.index(5)];
    sizes.extend((0..depth).map(|_| 2 + rng.index(6)));
    sizes.push(1 + rng.index(4));
    let batch = 1 + rng.index(4);
    let x = Array2::from_shape_vec((batch, sizes[0]), random_vec(rng, batch * sizes[0], 1.0)).expect("shape");
    let net = smooth_mlp(rng, sizes.clone(), act, &x, 10.0 * h)?;
    let up = Array2::from_shape_vec((batch, *sizes.last().unwrap()), random_vec(rng, batch * sizes.last().unwrap(), 1.0))
        .expect("shape");
    let (_, cache) = net.forward_cached(x.view())?;
    let (g, _) = net.backward_batch(&cache, up.view())?;
    let spec = net.spec.clone();
    Ok(Case {
        params: net.params.values.clone(),
        analytic: g.values,
        f: Box::new(move |p| {
            let probe = Mlp::new(spec.clone(), ParamVector::new(vec![p.len()], p.to_vec())).expect("shape");
            let out = probe.forward_batch(x.view()).expect("finite");
            (&out * &up).sum()
        }),
    })
}

fn bt_case(rng: &mut RngStream, i: usize) -> Result<Case> {
    let k = 2 + rng.index(4);
    let n = 2 + rng.index(6);
    let model = if i.is_multiple_of(2) {
        let d = random_dataset(rng, n, 1, 4, true);
        let m = RewardModel::linear(FeatureMap::LinearReward, random_vec(rng, 2, 2.0))?;
        (m, d)
    } else {
        let dim = 1 + rng.index(3);
        let d = random_dataset(rng, n, dim, k, false);
        let spec = MlpSpec::new(vec![dim + k, 5, 5, 1], Activation::Tanh)?;
        let params = spec.init_params(rng);
        (RewardModel::mlp(Mlp::new(spec, params)?, k)?, d)
    };
    let (model, d) = model;
    let (_, analytic) = bt_loss_and_grad(&model, &d)?;
    Ok(Case {
        params: model.params().to_vec(),
        analytic,
        f: Box::new(move |p| {
            let mut m = model.clone();
            m.params_mut().copy_from_slice(p);
            bt_loss(&m, &d).expect("finite")
        }),
    })
}

/// Random linear (flipped features) or small relu MLP policy and matching states.
fn random_policy(rng: &mut RngStream, i: usize, k: usize, n: usize, h: f64) -> Result<(Policy, Vec<State>)> {
    if i.is_multiple_of(2) {
        let states: Vec<State> = (0..n).map(|_| State::scalar(rng.uniform())).collect();
        let theta = random_vec(rng, 2, 3.0);
        Ok((Policy::linear(FeatureMap::LinearFlipped, theta, 4)?, states))
    } else {
        let dim = 2 + rng.index(3);
        let states: Vec<State> = (0..n)
            .map(|_| State::new(random_vec(rng, dim, 1.0)).expect("finite"))
            .collect();
        let x = Array2::from_shape_fn((n, dim), |(r, c)| states[r].coords()[c]);
        let net = smooth_mlp(rng, vec![dim, 6, 6, k], Activation::Relu, &x, 10.0 * h)?;
        Ok((Policy::mlp(net), states))
    }
}

fn policy_case<O: PolicyObjective + 'static>(policy: Policy, states: Vec<State>, objective: O, negate: bool) -> Result<Case> {
    let prep = policy.prepare(&states);
    let (logits, cache) = policy.logits_prepared(&prep)?;
    let (_, dlogits) = objective.evaluate(logits.view());
    let mut analytic = policy.logit_backward(&prep, cache.as_ref(), dlogits.view())?;
    if negate {
        analytic.iter_mut().for_each(|g| *g = -*g);
    }
    let prep: PreparedStates = prep;
    Ok(Case {
        params: policy.params().to_vec(),
        analytic,
        f: Box::new(move |p| {
            let mut probe = policy.clone();
            probe.params_mut().copy_from_slice(p);
            let (z, _) = probe.logits_prepared(&prep).expect("finite");
            objective.evaluate(z.view()).0
        }),
    })
}

fn dpo_case(rng: &mut RngStream, i: usize, h: f64, fault: Option<Fault>) -> Result<Case> {
    let n = 2 + rng.index(6);
    let k = if i.is_multiple_of(2) { 4 } else { 2 + rng.index(5) };
    let (policy, states) = random_policy(rng, i, k, n, h)?;
    let triples: Vec<PreferenceTriple> = random_dataset(rng, n, 1, k, true)
        .triples()
        .iter()
        .zip(&states)
        .map(|(t, s)| PreferenceTriple { state: s.clone(), ..t.clone() })
        .collect();
    let beta = rng.uniform_in(0.05, 1.0);
    let objective = DpoObjective::new(&PreferenceDataset::new(triples), beta);
    policy_case(policy, states, objective, fault == Some(Fault::DpoSign))
}

fn rmb_case(rng: &mut RngStream, i: usize, h: f64) -> Result<Case> {
    let n = 1 + rng.index(6);
    let k = if i.is_multiple_of(2) { 4 } else { 2 + rng.index(5) };
    let (policy, states) = random_policy(rng, i, k, n, h)?;
    let rewards = Array2::from_shape_fn((n, k), |_| rng.uniform_in(-1.0, 1.0));
    let beta = rng.uniform_in(0.05, 1.0);
    policy_case(policy, states, RewardObjective { rewards, beta }, false)
}

pub fn run_suite(suite: Suite, cfg: &GradCheckConfig) -> Result<SuiteReport> {
    if cfg.instances == 0 || !(cfg.step > 0.0) {
        return Err(Error::InvalidArgument("gradcheck needs instances >= 1 and a positive step".into()));
    }
    let mut rng = RngStream::new(cfg.seed, StreamLabel::ModelInit);
    let mut report = SuiteReport {
        suite,
        instances: cfg.instances,
        coordinates: 0,
        max_relative_error: 0.0,
        failures: Vec::new(),
    };
    for i in 0..cfg.instances {
        let case = match suite {
            Suite::Nn => nn_case(&mut rng, i, cfg.step)?,
            Suite::BtLoss => bt_case(&mut rng, i)?,
            Suite::DpoLoss => dpo_case(&mut rng, i, cfg.step, cfg.fault)?,
            Suite::RmbObjective => rmb_case(&mut rng, i, cfg.step)?,
        };
        let numeric = central_difference(&case.f, &case.params, cfg.step);
        for (c, (a, b)) in case.analytic.iter().zip(&numeric).enumerate() {
            let e = relative_error(*a, *b);
            report.coordinates += 1;
            report.max_relative_error = report.max_relative_error.max(e);
            if !(e < cfg.tolerance) {
                report.failures.push(Mismatch {
                    instance: i,
                    coordinate: c,
                    analytic: *a,
                    numeric: *b,
                    relative_error: e,
                });
            }
        }
    }
    Ok(report)
}

/// Every suite, in [`Suite::ALL`] order.
pub fn run_all(cfg: &GradCheckConfig) -> Result<Vec<SuiteReport>> {
    Suite::ALL.iter().map(|s| run_suite(*s, cfg)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_suites_pass() {
        for r in run_all(&GradCheckConfig::new(7)).unwrap() {
            assert!(r.passed(), "{} failed: {:?}", r.suite.name(), &r.failures[..r.failures.len().min(3)]);
            assert!(r.coordinates > 0);
        }
    }

    #[test]
    fn injected_fault_is_caught() {
        let mut cfg = GradCheckConfig::new(7);
        cfg.fault = Some(Fault::DpoSign);
        let reports = run_all(&cfg).unwrap();
        for r in reports {
            assert_eq!(r.passed(), r.suite != Suite::DpoLoss, "{}", r.suite.name());
        }
    }

    #[test]
    fn same_seed_same_report() {
        let cfg = GradCheckConfig::new(3);
        assert_eq!(run_all(&cfg).unwrap(), run_all(&cfg).unwrap());
    }
}
