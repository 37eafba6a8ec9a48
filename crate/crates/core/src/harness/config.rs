//! Experiment configuration: flat `key = value` text with `[section]` headers.
//!
//! Keys are unique across sections, so an override may name a key bare
//! (`m=400`) or qualified (`experiment.m=400`). Unknown keys are rejected.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{OptimizerConfig, OptimizerKind};
use crate::policy::{PolicyOptConfig, StatePool};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvChoice {
    LinearMatched,
    LinearFlipped,
    Neural,
}

impl EnvChoice {
    pub fn name(self) -> &'static str {
        match self {
            EnvChoice::LinearMatched => "linear_matched",
            EnvChoice::LinearFlipped => "linear_flipped",
            EnvChoice::Neural => "neural",
        }
    }

    pub fn is_linear(self) -> bool {
        !matches!(self, EnvChoice::Neural)
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "linear_matched" => Some(EnvChoice::LinearMatched),
            "linear_flipped" => Some(EnvChoice::LinearFlipped),
            "neural" => Some(EnvChoice::Neural),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Dpo,
    RmfPo,
    RmbPo,
    RmbPoPlus,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Dpo, Method::RmfPo, Method::RmbPo, Method::RmbPoPlus];

    pub fn name(self) -> &'static str {
        match self {
            Method::Dpo => "dpo",
            Method::RmfPo => "rmf_po",
            Method::RmbPo => "rmb_po",
            Method::RmbPoPlus => "rmb_po_plus",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Method::ALL.into_iter().find(|m| m.name() == s)
    }

    pub fn needs_reward_model(self) -> bool {
        !matches!(self, Method::Dpo)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub env: EnvChoice,
    pub n: usize,
    /// Prompt-set sizes; more than one entry makes an m-sweep.
    pub m: Vec<usize>,
    pub beta: f64,
    pub seeds: Vec<u64>,
    pub eval_states: usize,
    pub methods: Vec<Method>,
    pub state_pool: StatePool,
    pub profile_grid: usize,
    /// Multiplier on the neural ground-truth network output.
    pub true_reward_scale: f64,
    pub ridge: f64,
    pub reward_steps: usize,
    pub reward_step_size: f64,
    pub hidden: usize,
    pub optimizer: OptimizerKind,
    pub step_size: f64,
    pub max_steps: usize,
    pub tol: f64,
    pub patience: usize,
}

impl ExperimentConfig {
    pub fn defaults(env: EnvChoice) -> Self {
        let linear = env.is_linear();
        ExperimentConfig {
            env,
            n: if linear { 20 } else { 50 },
            m: if linear { vec![200] } else { vec![50, 100, 250, 500, 1000] },
            beta: 0.01,
            seeds: (2021..=2030).collect(),
            eval_states: 5000,
            methods: Method::ALL.to_vec(),
            state_pool: StatePool::UnionWithPref,
            profile_grid: 200,
            true_reward_scale: crate::envs::DEFAULT_TRUE_REWARD_SCALE,
            ridge: crate::reward::DEFAULT_RIDGE,
            reward_steps: crate::reward::DEFAULT_NEURAL_STEPS,
            reward_step_size: 1e-3,
            hidden: 64,
            optimizer: if linear { OptimizerKind::Adagrad } else { OptimizerKind::Adam },
            step_size: if linear { 0.1 } else { 1e-3 },
            max_steps: if linear { 50_000 } else { 10_000 },
            tol: 1e-10,
            patience: 50,
        }
    }

    pub fn is_sweep(&self) -> bool {
        self.m.len() > 1
    }

    pub fn max_m(&self) -> usize {
        self.m.iter().copied().max().unwrap_or(0)
    }

    pub fn policy_opt(&self) -> PolicyOptConfig {
        let optimizer = match self.optimizer {
            OptimizerKind::Adagrad => OptimizerConfig::adagrad(self.step_size),
            OptimizerKind::Adam => OptimizerConfig::adam(self.step_size),
        };
        PolicyOptConfig {
            beta: self.beta,
            optimizer,
            max_steps: self.max_steps,
            tol: self.tol,
            patience: self.patience,
            state_pool: self.state_pool,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: &str| {
            Err(Error::Config {
                line: None,
                message: format!("{key}: {msg}"),
            })
        };
        if self.seeds.is_empty() {
            return bad("seeds", "at least one seed required");
        }
        if self.n == 0 {
            return bad("n", "must be >= 1");
        }
        if self.m.is_empty() {
            return bad("m", "at least one value required");
        }
        if self.eval_states == 0 {
            return bad("eval_states", "must be >= 1");
        }
        if self.methods.is_empty() {
            return bad("methods", "at least one method required");
        }
        if !(self.beta >= 0.0) {
            return bad("beta", "must be >= 0");
        }
        if !(self.step_size > 0.0) {
            return bad("step_size", "must be > 0");
        }
        if self.max_steps == 0 || self.reward_steps == 0 {
            return bad("max_steps", "step budgets must be >= 1");
        }
        if self.profile_grid < 2 {
            return bad("profile_grid", "must be >= 2");
        }
        if !(self.true_reward_scale > 0.0 && self.true_reward_scale.is_finite()) {
            return bad("true_reward_scale", "must be finite and > 0");
        }
        if self.hidden == 0 {
            return bad("hidden", "must be >= 1");
        }
        if self.state_pool == StatePool::PromptsOnly
            && self.methods.contains(&Method::RmbPoPlus)
            && self.m.contains(&0)
        {
            return bad("m", "prompts_only pool needs m >= 1");
        }
        Ok(())
    }

    /// Parses a config document, applies `overrides` (`key=value`), and validates.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut entries = parse_entries(text)?;
        for (i, o) in overrides.iter().enumerate() {
            let (k, v) = o.split_once('=').ok_or_else(|| Error::Config {
                line: None,
                message: format!("override #{} `{o}` is not key=value", i + 1),
            })?;
            let key = canonical_key(k.trim()).ok_or_else(|| Error::Config {
                line: None,
                message: format!("unknown key `{}` in override", k.trim()),
            })?;
            entries.insert(key, (None, v.trim().to_string()));
        }
        let env = match entries.get("env") {
            Some((line, v)) => EnvChoice::parse(v).ok_or_else(|| Error::Config {
                line: *line,
                message: format!("env: unknown environment `{v}`"),
            })?,
            None => EnvChoice::LinearMatched,
        };
        let mut cfg = ExperimentConfig::defaults(env);
        for (key, (line, value)) in &entries {
            cfg.apply(key, value).map_err(|message| Error::Config {
                line: *line,
                message: format!("{key}: {message}"),
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        match key {
            "env" => {}
            "n" => self.n = num(v)?,
            "m" => self.m = list(v, num)?,
            "beta" => self.beta = num(v)?,
            "seeds" => self.seeds = seeds(v)?,
            "eval_states" => self.eval_states = num(v)?,
            "methods" => {
                self.methods = list(v, |s| Method::parse(s).ok_or_else(|| format!("unknown method `{s}`")))?;
                self.methods.sort();
                self.methods.dedup();
            }
            "state_pool" => {
                self.state_pool = match v {
                    "union" | "union_with_pref" => StatePool::UnionWithPref,
                    "prompts_only" => StatePool::PromptsOnly,
                    _ => return Err(format!("unknown pool `{v}`")),
                }
            }
            "profile_grid" => self.profile_grid = num(v)?,
            "true_reward_scale" => self.true_reward_scale = num(v)?,
            "ridge" => self.ridge = num(v)?,
            "reward_steps" => self.reward_steps = num(v)?,
            "reward_step_size" => self.reward_step_size = num(v)?,
            "hidden" => self.hidden = num(v)?,
            "optimizer" => {
                self.optimizer = match v {
                    "adagrad" => OptimizerKind::Adagrad,
                    "adam" => OptimizerKind::Adam,
                    _ => return Err(format!("unknown optimizer `{v}`")),
                }
            }
            "step_size" => self.step_size = num(v)?,
            "max_steps" => self.max_steps = num(v)?,
            "tol" => self.tol = num(v)?,
            "patience" => self.patience = num(v)?,
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    /// Renders every key explicitly; parsing the result reproduces `self`.
    pub fn to_config_text(&self) -> String {
        let join = |v: Vec<String>| v.join(",");
        let mut s = String::new();
        let _ = writeln!(s, "[experiment]");
        let _ = writeln!(s, "env = {}", self.env.name());
        let _ = writeln!(s, "n = {}", self.n);
        let _ = writeln!(s, "m = {}", join(self.m.iter().map(|v| v.to_string()).collect()));
        let _ = writeln!(s, "beta = {}", self.beta);
        let _ = writeln!(s, "seeds = {}", join(self.seeds.iter().map(|v| v.to_string()).collect()));
        let _ = writeln!(s, "eval_states = {}", self.eval_states);
        let _ = writeln!(s, "methods = {}", join(self.methods.iter().map(|m| m.name().to_string()).collect()));
        let pool = match self.state_pool {
            StatePool::UnionWithPref => "union",
            StatePool::PromptsOnly => "prompts_only",
        };
        let _ = writeln!(s, "state_pool = {pool}");
        let _ = writeln!(s, "profile_grid = {}", self.profile_grid);
        let _ = writeln!(s, "true_reward_scale = {}", self.true_reward_scale);
        let _ = writeln!(s, "\n[reward]");
        let _ = writeln!(s, "ridge = {}", self.ridge);
        let _ = writeln!(s, "reward_steps = {}", self.reward_steps);
        let _ = writeln!(s, "reward_step_size = {}", self.reward_step_size);
        let _ = writeln!(s, "hidden = {}", self.hidden);
        let _ = writeln!(s, "\n[policy]");
        let opt = match self.optimizer {
            OptimizerKind::Adagrad => "adagrad",
            OptimizerKind::Adam => "adam",
        };
        let _ = writeln!(s, "optimizer = {opt}");
        let _ = writeln!(s, "step_size = {}", self.step_size);
        let _ = writeln!(s, "max_steps = {}", self.max_steps);
        let _ = writeln!(s, "tol = {}", self.tol);
        let _ = writeln!(s, "patience = {}", self.patience);
        s
    }
}

/// `(section, key)` pairs accepted in config documents.
pub const KNOWN_KEYS: &[(&str, &str)] = &[
    ("experiment", "env"),
    ("experiment", "n"),
    ("experiment", "m"),
    ("experiment", "beta"),
    ("experiment", "seeds"),
    ("experiment", "eval_states"),
    ("experiment", "methods"),
    ("experiment", "state_pool"),
    ("experiment", "profile_grid"),
    ("experiment", "true_reward_scale"),
    ("reward", "ridge"),
    ("reward", "reward_steps"),
    ("reward", "reward_step_size"),
    ("reward", "hidden"),
    ("policy", "optimizer"),
    ("policy", "step_size"),
    ("policy", "max_steps"),
    ("policy", "tol"),
    ("policy", "patience"),
];

fn canonical_key(k: &str) -> Option<String> {
    let bare = match k.split_once('.') {
        Some((section, key)) => {
            KNOWN_KEYS.iter().find(|(s, kk)| *s == section && *kk == key)?;
            key
        }
        None => k,
    };
    KNOWN_KEYS.iter().find(|(_, kk)| *kk == bare).map(|(_, kk)| kk.to_string())
}

fn parse_entries(text: &str) -> Result<BTreeMap<String, (Option<usize>, String)>> {
    let mut section: Option<String> = None;
    let mut out = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim();
            if !KNOWN_KEYS.iter().any(|(s, _)| *s == name) {
                return Err(Error::Config {
                    line: Some(line_no),
                    message: format!("unknown section `[{name}]`"),
                });
            }
            section = Some(name.to_string());
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Config {
            line: Some(line_no),
            message: format!("expected `key = value`, found `{line}`"),
        })?;
        let k = k.trim();
        let qualified = match &section {
            Some(s) if !k.contains('.') => format!("{s}.{k}"),
            _ => k.to_string(),
        };
        let key = canonical_key(&qualified).ok_or_else(|| Error::Config {
            line: Some(line_no),
            message: format!("unknown key `{k}`"),
        })?;
        if out.insert(key.clone(), (Some(line_no), v.trim().to_string())).is_some() {
            return Err(Error::Config {
                line: Some(line_no),
                message: format!("duplicate key `{key}`"),
            });
        }
    }
    Ok(out)
}

fn num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse `{v}`"))
}

fn list<T>(v: &str, f: impl Fn(&str) -> std::result::Result<T, String>) -> std::result::Result<Vec<T>, String> {
    v.split(',').map(|s| s.trim()).filter(|s| !s.is_empty()).map(f).collect()
}

/// Comma list of seeds and inclusive `a-b` ranges.
fn seeds(v: &str) -> std::result::Result<Vec<u64>, String> {
    let mut out = Vec::new();
    for part in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (num(a.trim())?, num(b.trim())?);
                if b < a {
                    return Err(format!("empty seed range `{part}`"));
                }
                out.extend(a..=b);
            }
            None => out.push(num(part)?),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_environment() {
        let l = ExperimentConfig::parse("[experiment]\nenv = linear_flipped\n", &[]).unwrap();
        assert_eq!((l.n, l.m.clone(), l.optimizer, l.step_size), (20, vec![200], OptimizerKind::Adagrad, 0.1));
        assert_eq!(l.seeds, (2021..=2030).collect::<Vec<_>>());
        let n = ExperimentConfig::parse("env = neural", &[]).unwrap();
        assert_eq!((n.n, n.optimizer, n.max_steps), (50, OptimizerKind::Adam, 10_000));
    }

    #[test]
    fn sections_lists_and_ranges() {
        let text = "# comment\n[experiment]\nenv = linear_matched\nm = 50, 100\nseeds = 1-3, 9\nmethods = rmb_po_plus,dpo\n[policy]\nmax_steps = 10 # inline\n";
        let c = ExperimentConfig::parse(text, &[]).unwrap();
        assert_eq!(c.m, vec![50, 100]);
        assert_eq!(c.seeds, vec![1, 2, 3, 9]);
        assert_eq!(c.methods, vec![Method::Dpo, Method::RmbPoPlus]);
        assert_eq!(c.max_steps, 10);
        assert!(c.is_sweep());
    }

    #[test]
    fn overrides_bare_and_qualified() {
        let c = ExperimentConfig::parse("env = linear_matched", &["m=400".into(), "policy.tol = 1e-6".into()]).unwrap();
        assert_eq!(c.m, vec![400]);
        assert_eq!(c.tol, 1e-6);
        assert!(ExperimentConfig::parse("", &["policy.m=4".into()]).is_err());
    }

    #[test]
    fn unknown_key_names_key_and_line() {
        let err = ExperimentConfig::parse("[experiment]\nenv = linear_matched\nbetta = 0.1\n", &[]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("betta"), "{msg}");
        assert!(matches!(err, Error::Config { line: Some(3), .. }));
        let err = ExperimentConfig::parse("", &["betta=1".into()]).unwrap_err();
        assert!(err.to_string().contains("betta"));
    }

    #[test]
    fn bad_values_rejected() {
        for text in ["n = 0", "seeds = 5-2", "methods = ppo", "env = cartpole", "beta = x", "[nope]", "n"] {
            assert!(ExperimentConfig::parse(text, &[]).is_err(), "{text}");
        }
        assert!(ExperimentConfig::parse("n = 3\nn = 4", &[]).is_err());
    }

    #[test]
    fn snapshot_round_trips() {
        let mut c = ExperimentConfig::defaults(EnvChoice::Neural);
        c.beta = 0.1 + 0.2;
        c.seeds = vec![7, 3];
        c.state_pool = StatePool::PromptsOnly;
        let back = ExperimentConfig::parse(&c.to_config_text(), &[]).unwrap();
        assert_eq!(back, c);
    }
}
