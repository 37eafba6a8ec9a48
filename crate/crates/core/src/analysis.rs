//! Brute-force verification of the RMB-PO regret bound on small tabular
//! problems with β = 0.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack allowed on every inequality for floating-point rounding.
pub const CHAIN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularInstance {
    pub states: usize,
    pub actions: usize,
    pub rho: Vec<f64>,
    pub rho_hat: Vec<f64>,
    pub r: Array2<f64>,
    pub r_hat: Array2<f64>,
}

/// One observed comparison `(state, action, action)`; order is irrelevant.
pub type ObservedPair = (usize, usize, usize);

fn on_simplex(p: &[f64]) -> bool {
    p.iter().all(|x| *x >= 0.0 && x.is_finite()) && (p.iter().sum::<f64>() - 1.0).abs() < 1e-9
}

impl TabularInstance {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.states == 0 || self.actions == 0 {
            return bad("instance needs at least one state and one action");
        }
        if self.rho.len() != self.states || self.rho_hat.len() != self.states {
            return bad("state distributions must have one entry per state");
        }
        if !on_simplex(&self.rho) || !on_simplex(&self.rho_hat) {
            return bad("rho and rho_hat must lie on the simplex");
        }
        let shape = [self.states, self.actions];
        if self.r.shape() != shape || self.r_hat.shape() != shape {
            return bad("reward tables must be states x actions");
        }
        // the state-substitution steps need rewards that are valid test functions
        if self.r.iter().chain(self.r_hat.iter()).any(|x| !(0.0..=1.0).contains(x)) {
            return bad("reward entries must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn validate_pairs(&self, pairs: &[ObservedPair]) -> Result<()> {
        for &(s, a, b) in pairs {
            if s >= self.states || a >= self.actions || b >= self.actions || a == b {
                return Err(Error::InvalidArgument(format!("invalid pair ({s}, {a}, {b})")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffSupportRule {
    /// Argmin of the true reward.
    AdversarialOnR,
    Uniform,
}

fn argmax_lowest(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

fn fill_off_support(pi: &mut Array2<f64>, s: usize, r: &Array2<f64>, rule: OffSupportRule) {
    let a = pi.ncols();
    match rule {
        OffSupportRule::AdversarialOnR => pi[[s, argmax_lowest(r.row(s).iter().map(|x| -x))]] = 1.0,
        OffSupportRule::Uniform => pi.row_mut(s).fill(1.0 / a as f64),
    }
}

/// Per-state argmax of `r_hat` on `support`, ties to the lowest action.
pub fn solve_tabular_greedy(
    r_hat: &Array2<f64>,
    support: &[bool],
    rule: OffSupportRule,
    r: &Array2<f64>,
) -> Result<Array2<f64>> {
    if !support.iter().any(|s| *s) {
        return Err(Error::InvalidArgument("support must contain at least one state".into()));
    }
    let mut pi = Array2::zeros(r_hat.raw_dim());
    for (s, &on) in support.iter().enumerate() {
        if on {
            pi[[s, argmax_lowest(r_hat.row(s).iter().copied())]] = 1.0;
        } else {
            fill_off_support(&mut pi, s, r, rule);
        }
    }
    Ok(pi)
}

/// Exact β = 0 maximizer of the pair-truncated objective: at each observed
/// state all mass goes to the action maximizing (times observed) · r̂.
pub fn solve_tabular_rmf(
    r_hat: &Array2<f64>,
    pairs: &[ObservedPair],
    rule: OffSupportRule,
    r: &Array2<f64>,
) -> Array2<f64> {
    let (ns, na) = r_hat.dim();
    let mut counts = Array2::<f64>::zeros((ns, na));
    for &(s, a, b) in pairs {
        counts[[s, a]] += 1.0;
        counts[[s, b]] += 1.0;
    }
    let mut pi = Array2::zeros((ns, na));
    for s in 0..ns {
        if counts.row(s).sum() > 0.0 {
            let weighted = (0..na).map(|a| if counts[[s, a]] > 0.0 { counts[[s, a]] * r_hat[[s, a]] } else { f64::NEG_INFINITY });
            pi[[s, argmax_lowest(weighted)]] = 1.0;
        } else {
            fill_off_support(&mut pi, s, r, rule);
        }
    }
    pi
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorTerms {
    pub eps_r: f64,
    pub eps_s: f64,
    pub eps_a_star: f64,
    pub eps_a_hat: f64,
}

/// `Σ_a π(a|s) r̂(s,a)` restricted to the actions of each observed pair at
/// `s`, averaged over those pairs.
fn pair_estimate(pi: &Array2<f64>, r_hat: &Array2<f64>, pairs: &[ObservedPair], s: usize) -> Option<f64> {
    let here: Vec<_> = pairs.iter().filter(|p| p.0 == s).collect();
    if here.is_empty() {
        return None;
    }
    let total: f64 = here
        .iter()
        .map(|&&(_, a, b)| pi[[s, a]] * r_hat[[s, a]] + pi[[s, b]] * r_hat[[s, b]])
        .sum();
    Some(total / here.len() as f64)
}

fn action_error(inst: &TabularInstance, pairs: &[ObservedPair], pi: &Array2<f64>) -> f64 {
    (0..inst.states)
        .filter_map(|s| {
            let est = pair_estimate(pi, &inst.r_hat, pairs, s)?;
            let exact: f64 = (0..inst.actions).map(|a| pi[[s, a]] * inst.r_hat[[s, a]]).sum();
            Some((exact - est).abs())
        })
        .fold(0.0, f64::max)
}

pub fn compute_error_terms(
    inst: &TabularInstance,
    pairs: &[ObservedPair],
    pi_star: &Array2<f64>,
    pi_rmf: &Array2<f64>,
) -> ErrorTerms {
    ErrorTerms {
        eps_r: (&inst.r_hat - &inst.r).iter().fold(0.0, |m, x| f64::max(m, x.abs())),
        eps_s: total_variation(&inst.rho, &inst.rho_hat),
        eps_a_star: action_error(inst, pairs, pi_star),
        eps_a_hat: action_error(inst, pairs, pi_rmf),
    }
}

/// `E_{s∼dist} E_{a∼π} table(s,a)`.
pub fn value(dist: &[f64], pi: &Array2<f64>, table: &Array2<f64>) -> f64 {
    dist.iter()
        .enumerate()
        .map(|(s, w)| w * pi.row(s).dot(&table.row(s)))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainStep {
    pub label: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prop1Report {
    pub regret_rmb: f64,
    pub regret_rmf: f64,
    pub bound_rmb: f64,
    /// Reported only; uses the per-policy action errors.
    pub bound_rmf: f64,
    pub errors: ErrorTerms,
    pub holds: bool,
    pub rmf_within_reported_bound: bool,
    pub chain: Vec<ChainStep>,
    /// Regret minus the sum of the chain terms; zero up to rounding.
    pub telescope_residual: f64,
}

impl Prop1Report {
    pub fn chain_holds(&self) -> bool {
        self.chain.iter().all(|c| c.holds)
    }
}

fn step(label: &str, lhs: f64, rhs: f64) -> ChainStep {
    ChainStep {
        label: label.to_string(),
        lhs,
        rhs,
        holds: lhs <= rhs + CHAIN_TOL,
    }
}

/// Exact regrets of the β = 0 tabular RMB and RMF solutions (adversarial
/// off-support completion) and the five-term decomposition of the RMB regret.
pub fn check_prop1(inst: &TabularInstance, pairs: &[ObservedPair]) -> Result<Prop1Report> {
    inst.validate()?;
    inst.validate_pairs(pairs)?;
    let rule = OffSupportRule::AdversarialOnR;
    let full = vec![true; inst.states];
    let support: Vec<bool> = inst.rho_hat.iter().map(|w| *w > 0.0).collect();
    let pi_star = solve_tabular_greedy(&inst.r, &full, rule, &inst.r)?;
    let pi_rmb = solve_tabular_greedy(&inst.r_hat, &support, rule, &inst.r)?;
    let pi_rmf = solve_tabular_rmf(&inst.r_hat, pairs, rule, &inst.r);
    let errors = compute_error_terms(inst, pairs, &pi_star, &pi_rmf);

    let (rho, rho_hat, r, r_hat) = (&inst.rho, &inst.rho_hat, &inst.r, &inst.r_hat);
    let opt = value(rho, &pi_star, r);
    let regret_rmb = opt - value(rho, &pi_rmb, r);
    let regret_rmf = opt - value(rho, &pi_rmf, r);

    let terms = [
        ("reward_substitution_optimal", value(rho, &pi_star, r) - value(rho, &pi_star, r_hat), errors.eps_r),
        ("state_substitution_optimal", value(rho, &pi_star, r_hat) - value(rho_hat, &pi_star, r_hat), errors.eps_s),
        ("greedy_on_estimate", value(rho_hat, &pi_star, r_hat) - value(rho_hat, &pi_rmb, r_hat), 0.0),
        ("state_substitution_learned", value(rho_hat, &pi_rmb, r_hat) - value(rho, &pi_rmb, r_hat), errors.eps_s),
        ("reward_substitution_learned", value(rho, &pi_rmb, r_hat) - value(rho, &pi_rmb, r), errors.eps_r),
    ];
    let chain: Vec<ChainStep> = terms.iter().map(|(l, lhs, rhs)| step(l, *lhs, *rhs)).collect();
    let telescope_residual = regret_rmb - terms.iter().map(|t| t.1).sum::<f64>();

    let bound_rmb = 2.0 * errors.eps_r + 2.0 * errors.eps_s;
    let bound_rmf = bound_rmb + errors.eps_a_star + errors.eps_a_hat;
    Ok(Prop1Report {
        regret_rmb,
        regret_rmf,
        bound_rmb,
        bound_rmf,
        errors,
        holds: regret_rmb <= bound_rmb + CHAIN_TOL,
        rmf_within_reported_bound: regret_rmf <= bound_rmf + CHAIN_TOL,
        chain,
        telescope_residual,
    })
}

/// Self-contained, replayable record of an instance and its report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub index: usize,
    pub instance: TabularInstance,
    pub pairs: Vec<ObservedPair>,
    pub report: Prop1Report,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub size: usize,
    pub max_states: usize,
    pub max_actions: usize,
    pub max_pairs: usize,
    /// Upper limit of the reward-noise half-width, drawn per instance.
    pub max_noise: f64,
    pub seed: u64,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            size: 10_000,
            max_states: 6,
            max_actions: 5,
            max_pairs: 4,
            max_noise: 0.5,
            seed: 2021,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub config: CampaignConfig,
    pub instances: usize,
    /// Instances where the RMB bound, a chain step, or the telescope failed.
    pub violations: Vec<Counterexample>,
    pub rmf_outside_reported_bound: usize,
    pub max_regret_rmb: f64,
    pub max_abs_telescope_residual: f64,
}

/// Random instance number `index` of a campaign; independent of all others.
pub fn random_instance(cfg: &CampaignConfig, index: usize) -> (TabularInstance, Vec<ObservedPair>) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let ns = rng.gen_range(1..=cfg.max_states);
    let na = rng.gen_range(2..=cfg.max_actions.max(2));
    let raw: Vec<f64> = (0..ns).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let total: f64 = raw.iter().sum();
    let rho: Vec<f64> = raw.iter().map(|x| x / total).collect();
    let n_pairs = rng.gen_range(1..=cfg.max_pairs);
    let mut pairs = Vec::with_capacity(n_pairs);
    let mut counts = vec![0usize; ns];
    for _ in 0..n_pairs {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let s = rho
            .iter()
            .position(|p| {
                acc += p;
                u < acc
            })
            .unwrap_or(ns - 1);
        let a = rng.gen_range(0..na);
        let mut b = rng.gen_range(0..na - 1);
        if b >= a {
            b += 1;
        }
        counts[s] += 1;
        pairs.push((s, a, b));
    }
    let rho_hat = counts.iter().map(|c| *c as f64 / n_pairs as f64).collect();
    let r = Array2::from_shape_fn((ns, na), |_| rng.gen::<f64>());
    let eps = rng.gen::<f64>() * cfg.max_noise;
    let r_hat = r.mapv(|x| (x + rng.gen_range(-1.0..=1.0) * eps).clamp(0.0, 1.0));
    (
        TabularInstance {
            states: ns,
            actions: na,
            rho,
            rho_hat,
            r,
            r_hat,
        },
        pairs,
    )
}

pub fn run_campaign(cfg: &CampaignConfig) -> Result<CampaignReport> {
    if cfg.size == 0 || cfg.max_states == 0 || cfg.max_actions < 2 || cfg.max_pairs == 0 {
        return Err(Error::InvalidArgument(
            "campaign needs size >= 1, max_states >= 1, max_actions >= 2, max_pairs >= 1".into(),
        ));
    }
    let checked: Vec<Counterexample> = (0..cfg.size)
        .into_par_iter()
        .map(|i| {
            let (instance, pairs) = random_instance(cfg, i);
            let report = check_prop1(&instance, &pairs)?;
            Ok(Counterexample {
                index: i,
                instance,
                pairs,
                report,
            })
        })
        .collect::<Result<_>>()?;
    let mut out = CampaignReport {
        config: *cfg,
        instances: checked.len(),
        violations: Vec::new(),
        rmf_outside_reported_bound: 0,
        max_regret_rmb: 0.0,
        max_abs_telescope_residual: 0.0,
    };
    for c in checked {
        let rep = &c.report;
        out.max_regret_rmb = out.max_regret_rmb.max(rep.regret_rmb);
        out.max_abs_telescope_residual = out.max_abs_telescope_residual.max(rep.telescope_residual.abs());
        if !rep.rmf_within_reported_bound {
            out.rmf_outside_reported_bound += 1;
        }
        if !rep.holds || !rep.chain_holds() || rep.telescope_residual.abs() > CHAIN_TOL {
            out.violations.push(c);
        }
    }
    Ok(out)
}

/// Re-checks a serialized counterexample or instance file. Accepts either a
/// full [`Counterexample`] or `{"instance": .., "pairs": ..}`.
pub fn replay(json: &str) -> Result<Prop1Report> {
    #[derive(Deserialize)]
    struct Input {
        instance: TabularInstance,
        pairs: Vec<ObservedPair>,
    }
    let input: Input = serde_json::from_str(json)?;
    check_prop1(&input.instance, &input.pairs)
}
