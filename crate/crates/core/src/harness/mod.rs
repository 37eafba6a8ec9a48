//! Experiment orchestration: per-seed pipeline, trimmed aggregation, artifacts.

mod config;
pub mod figures;
mod output;

use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{EnvChoice, ExperimentConfig, Method, KNOWN_KEYS};
pub use output::{results_csv, summary_csv, summary_json, write_artifacts};

use crate::data::PreferenceDataset;
use crate::envs::{Env, FeatureMap, LinearBanditEnv, NeuralBanditEnv, PolicyFeatureMode, NEURAL_K, NEURAL_STATE_DIM};
use crate::error::{Error, Result};
use crate::eval::{action_profile, EvalReport, EvalSet};
use crate::nn::{Activation, Mlp, MlpSpec, OptimizerConfig};
use crate::policy::{train_dpo, train_rmb_po, train_rmb_po_plus, train_rmf_po, Policy, TraceRow, TrainOutcome};
use crate::reward::{pairwise_accuracy, train_reward_linear, train_reward_neural, RewardModel};
use crate::rng::{make_streams, RngStream, StreamLabel};

/// Drops one minimum and one maximum and averages the rest.
pub fn trimmed_mean(values: &[f64]) -> Result<f64> {
    if values.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "trimmed mean needs at least 3 values, got {}",
            values.len()
        )));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let inner = &v[1..v.len() - 1];
    Ok(inner.iter().sum::<f64>() / inner.len() as f64)
}

/// One trained-and-evaluated method within a seed. RMB-PO+ yields one entry
/// per prompt-set size; other methods ignore `m` and yield one entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodEntry {
    pub label: String,
    pub method: Method,
    /// Prompt states consumed (0 for methods that use none).
    pub m: usize,
    pub report: EvalReport,
    pub converged: bool,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct SeedResult {
    pub seed: u64,
    pub entries: Vec<MethodEntry>,
    /// Pairwise training accuracy of the learned reward, when one was trained.
    pub reward_accuracy: Option<f64>,
    /// Ordered stage names executed for this seed.
    pub stage_log: Vec<String>,
    pub timings: Vec<StageTiming>,
    pub reward_curve: Option<Vec<(usize, f64)>>,
    pub dataset: PreferenceDataset,
    pub trained: Vec<(String, TrainOutcome)>,
    /// Initial policy parameters shared by every method.
    pub policy_init: Vec<f64>,
    pub reward_model: Option<RewardModel>,
}

fn label_for(cfg: &ExperimentConfig, method: Method, m: usize) -> String {
    if method == Method::RmbPoPlus && cfg.is_sweep() {
        format!("{}(m={m})", method.name())
    } else {
        method.name().to_string()
    }
}

/// Entry labels in output order.
pub fn method_labels(cfg: &ExperimentConfig) -> Vec<(String, Method, usize)> {
    let mut out = Vec::new();
    for &method in &cfg.methods {
        if method == Method::RmbPoPlus {
            for &m in &cfg.m {
                out.push((label_for(cfg, method, m), method, m));
            }
        } else {
            out.push((label_for(cfg, method, 0), method, 0));
        }
    }
    out
}

pub fn build_env(cfg: &ExperimentConfig, rng: &mut RngStream) -> Env {
    match cfg.env {
        EnvChoice::LinearMatched => Env::Linear(LinearBanditEnv::new(PolicyFeatureMode::Matched)),
        EnvChoice::LinearFlipped => Env::Linear(LinearBanditEnv::new(PolicyFeatureMode::Flipped)),
        EnvChoice::Neural => Env::Neural(NeuralBanditEnv::new(rng, cfg.true_reward_scale)),
    }
}

fn reward_spec(hidden: usize) -> MlpSpec {
    MlpSpec::new(vec![NEURAL_STATE_DIM + NEURAL_K, hidden, hidden, 1], Activation::Relu).expect("static spec")
}

fn policy_spec(hidden: usize) -> MlpSpec {
    MlpSpec::new(vec![NEURAL_STATE_DIM, hidden, hidden, NEURAL_K], Activation::Relu).expect("static spec")
}

struct Stages {
    seed: u64,
    log: Vec<String>,
    timings: Vec<StageTiming>,
}

impl Stages {
    fn run<T>(&mut self, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f().map_err(|e| e.at_stage(self.seed, stage))?;
        self.log.push(stage.to_string());
        self.timings.push(StageTiming {
            stage: stage.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        Ok(out)
    }
}

/// Data, reward model, every requested policy optimizer, and paired evaluation for one seed.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedResult> {
    let mut streams = make_streams(seed);
    let mut take = |l: StreamLabel| streams.remove(&l).expect("all labels present");
    let (mut env_rng, mut data_rng, mut init_rng, mut eval_rng) = (
        take(StreamLabel::EnvInit),
        take(StreamLabel::DataCollection),
        take(StreamLabel::ModelInit),
        take(StreamLabel::Evaluation),
    );
    let mut stages = Stages {
        seed,
        log: Vec::new(),
        timings: Vec::new(),
    };

    let env = stages.run("env", || Ok(build_env(cfg, &mut env_rng)))?;
    let k = env.k();
    // preferences first, then prompts, so prompt count never shifts D_pref
    let (dataset, prompts) = stages.run("collect", || {
        let d = env.collect_preferences(cfg.n, &mut data_rng)?;
        let p = env.collect_prompts(cfg.max_m(), &mut data_rng);
        Ok((d, p))
    })?;

    // reward init is drawn before policy init whether or not it is used
    let reward_init = match cfg.env {
        EnvChoice::Neural => {
            let spec = reward_spec(cfg.hidden);
            let params = spec.init_params(&mut init_rng);
            Some(RewardModel::mlp(Mlp::new(spec, params)?, k)?)
        }
        _ => None,
    };
    let policy_init = match cfg.env {
        EnvChoice::LinearMatched => Policy::init_linear(FeatureMap::LinearReward, k, &mut init_rng),
        EnvChoice::LinearFlipped => Policy::init_linear(FeatureMap::LinearFlipped, k, &mut init_rng),
        EnvChoice::Neural => Policy::init_mlp(policy_spec(cfg.hidden), &mut init_rng),
    };

    let needs_reward = cfg.methods.iter().any(|m| m.needs_reward_model());
    let mut reward_curve = None;
    let (reward_model, reward_accuracy) = if needs_reward {
        let model = stages.run("reward", || match reward_init {
            None => Ok(train_reward_linear(&FeatureMap::LinearReward, &dataset, cfg.ridge)?.model),
            Some(init) => {
                let fit = train_reward_neural(
                    init,
                    &dataset,
                    cfg.reward_steps,
                    OptimizerConfig::adam(cfg.reward_step_size),
                )?;
                reward_curve = Some(fit.trajectory);
                Ok(fit.model)
            }
        })?;
        let acc = pairwise_accuracy(&model, &dataset)?;
        (Some(model), Some(acc))
    } else {
        (None, None)
    };

    let eval_set = stages.run("eval_states", || EvalSet::sample(&env, cfg.eval_states, &mut eval_rng))?;
    let opt = cfg.policy_opt();
    let mut entries = Vec::new();
    let mut trained = Vec::new();
    for (label, method, m) in method_labels(cfg) {
        let r_hat = || reward_model.as_ref().expect("reward model trained for this method");
        let stage: &'static str = match method {
            Method::Dpo => "dpo",
            Method::RmfPo => "rmf_po",
            Method::RmbPo => "rmb_po",
            Method::RmbPoPlus => "rmb_po_plus",
        };
        let outcome = stages.run(stage, || match method {
            Method::Dpo => train_dpo(&policy_init, &dataset, &opt),
            Method::RmfPo => train_rmf_po(&policy_init, r_hat(), &dataset, &opt),
            Method::RmbPo => train_rmb_po(&policy_init, r_hat(), &dataset, &opt),
            Method::RmbPoPlus => train_rmb_po_plus(&policy_init, r_hat(), &dataset, &prompts.prefix(m), &opt),
        })?;
        let report = eval_set
            .report(&outcome.policy, &label, seed)
            .map_err(|e| e.at_stage(seed, "evaluate"))?;
        entries.push(MethodEntry {
            label: label.clone(),
            method,
            m,
            report,
            converged: outcome.converged,
            steps: outcome.trace.last().map_or(0, |r| r.step),
        });
        trained.push((label, outcome));
    }

    Ok(SeedResult {
        seed,
        entries,
        reward_accuracy,
        stage_log: stages.log,
        timings: stages.timings,
        reward_curve,
        dataset,
        trained,
        policy_init: policy_init.params().to_vec(),
        reward_model,
    })
}

/// Aggregate optimality-gap statistics for one method entry across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub label: String,
    pub method: Method,
    pub m: usize,
    /// Mean after dropping the best and worst seed; absent below 3 seeds.
    pub trimmed_gap: Option<f64>,
    pub mean_gap: f64,
    pub min_gap: f64,
    pub max_gap: f64,
    pub seeds: usize,
}

/// Per-action probabilities of each trained policy on an evenly spaced grid,
/// for the first seed of a linear run.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSet {
    pub seed: u64,
    pub grid: Vec<f64>,
    /// `(label, [grid x K])`.
    pub profiles: Vec<(String, Array2<f64>)>,
    pub optimal: Array2<f64>,
    pub dataset_states: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub entries: Vec<MethodEntry>,
    pub reward_accuracy: Option<f64>,
    pub stage_log: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    pub env_params: Env,
    pub seeds: Vec<SeedRecord>,
    pub summaries: Vec<MethodSummary>,
    pub failures: Vec<(u64, String)>,
    pub warnings: Vec<String>,
    /// Wall-clock seconds per stage, summed over seeds. Not part of the
    /// reproducible numeric output.
    pub timings: Vec<StageTiming>,
    pub profiles: Option<ProfileSet>,
    /// Reward-model loss curve of the first completed seed (neural only).
    pub reward_curve: Option<Vec<(usize, f64)>>,
    /// Objective traces of the first completed seed, per method entry.
    pub traces: Vec<(String, Vec<TraceRow>)>,
}

impl RunRecord {
    pub fn summary(&self, label: &str) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.label == label)
    }

    /// Trimmed gap when available, otherwise the raw mean.
    pub fn headline_gap(&self, label: &str) -> Option<f64> {
        self.summary(label).map(|s| s.trimmed_gap.unwrap_or(s.mean_gap))
    }
}

fn summarize(cfg: &ExperimentConfig, seeds: &[SeedRecord]) -> Vec<MethodSummary> {
    method_labels(cfg)
        .into_iter()
        .map(|(label, method, m)| {
            let gaps: Vec<f64> = seeds
                .iter()
                .filter_map(|s| s.entries.iter().find(|e| e.label == label))
                .map(|e| e.report.gap)
                .collect();
            let n = gaps.len().max(1) as f64;
            MethodSummary {
                trimmed_gap: trimmed_mean(&gaps).ok(),
                mean_gap: gaps.iter().sum::<f64>() / n,
                min_gap: gaps.iter().copied().fold(f64::INFINITY, f64::min),
                max_gap: gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                seeds: gaps.len(),
                label,
                method,
                m,
            }
        })
        .collect()
}

fn profiles_for(cfg: &ExperimentConfig, env: &Env, first: &SeedResult) -> Result<Option<ProfileSet>> {
    if !cfg.env.is_linear() {
        return Ok(None);
    }
    let grid_states = crate::eval::profile_grid(cfg.profile_grid);
    let mut profiles = Vec::new();
    for (label, outcome) in &first.trained {
        profiles.push((label.clone(), action_profile(&outcome.policy, env, cfg.profile_grid)?));
    }
    let rewards = env.reward_table(&grid_states)?;
    let optimal = Array2::from_shape_fn(rewards.raw_dim(), |(i, a)| {
        let row = rewards.row(i);
        let best = (0..row.len()).fold(0, |b, j| if row[j] > row[b] { j } else { b });
        if a == best {
            1.0
        } else {
            0.0
        }
    });
    Ok(Some(ProfileSet {
        seed: first.seed,
        grid: grid_states.iter().map(|s| s.coords()[0]).collect(),
        profiles,
        optimal,
        dataset_states: first.dataset.triples().iter().map(|t| t.state.coords()[0]).collect(),
    }))
}

/// Runs every seed (on `jobs` threads; `0` = rayon default) and aggregates.
///
/// Failed seeds are recorded; aggregation continues with a warning when at
/// least three seeds completed, otherwise the run fails.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: usize) -> Result<RunRecord> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let results: Vec<Result<SeedResult>> = pool.install(|| cfg.seeds.par_iter().map(|&s| run_seed(cfg, s)).collect());

    let mut seeds = Vec::new();
    let mut failures = Vec::new();
    let mut first_ok = None;
    let mut timings: Vec<StageTiming> = Vec::new();
    for (seed, r) in cfg.seeds.iter().zip(results) {
        match r {
            Ok(res) => {
                for t in &res.timings {
                    match timings.iter_mut().find(|x| x.stage == t.stage) {
                        Some(x) => x.seconds += t.seconds,
                        None => timings.push(t.clone()),
                    }
                }
                seeds.push(SeedRecord {
                    seed: res.seed,
                    entries: res.entries.clone(),
                    reward_accuracy: res.reward_accuracy,
                    stage_log: res.stage_log.clone(),
                });
                if first_ok.is_none() {
                    first_ok = Some(res);
                }
            }
            Err(e) => failures.push((*seed, e.to_string())),
        }
    }
    let mut warnings = Vec::new();
    if !failures.is_empty() {
        if seeds.len() >= 3 {
            warnings.push(format!(
                "{} of {} seeds failed; aggregating over the remaining {}",
                failures.len(),
                cfg.seeds.len(),
                seeds.len()
            ));
        } else {
            let (seed, msg) = &failures[0];
            return Err(Error::InvalidArgument(format!(
                "only {} seeds completed (first failure: seed {seed}: {msg})",
                seeds.len()
            )));
        }
    }
    let first = first_ok.expect("at least one seed completed");
    let env = build_env(cfg, &mut RngStream::new(first.seed, StreamLabel::EnvInit));
    let profiles = profiles_for(cfg, &env, &first)?;
    Ok(RunRecord {
        summaries: summarize(cfg, &seeds),
        config: cfg.clone(),
        // the neural ground truth differs per seed; this is the first seed's
        env_params: env,
        seeds,
        failures,
        warnings,
        timings,
        profiles,
        reward_curve: first.reward_curve,
        traces: first.trained.into_iter().map(|(l, o)| (l, o.trace)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trimmed_mean_examples() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(trimmed_mean(&v).unwrap(), 5.5);
        assert_eq!(trimmed_mean(&[5.0, 5.0, 5.0]).unwrap(), 5.0);
        assert_eq!(trimmed_mean(&[0.0, 0.0, 100.0]).unwrap(), 0.0);
        assert!(trimmed_mean(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn sweep_labels() {
        let mut cfg = ExperimentConfig::defaults(EnvChoice::LinearMatched);
        cfg.methods = vec![Method::RmbPoPlus];
        cfg.m = vec![10, 20, 40];
        let labels: Vec<String> = method_labels(&cfg).into_iter().map(|l| l.0).collect();
        assert_eq!(labels, vec!["rmb_po_plus(m=10)", "rmb_po_plus(m=20)", "rmb_po_plus(m=40)"]);
        cfg.m = vec![200];
        cfg.methods = Method::ALL.to_vec();
        let labels: Vec<String> = method_labels(&cfg).into_iter().map(|l| l.0).collect();
        assert_eq!(labels, vec!["dpo", "rmf_po", "rmb_po", "rmb_po_plus"]);
    }
}
