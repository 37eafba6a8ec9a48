//! Domain types and dataset containers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A context (prompt) observed by the bandit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct State(Vec<f64>);

impl State {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidArgument("state must have at least one coordinate".into()));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite { what: "state coordinate" });
        }
        Ok(State(coords))
    }

    /// One-dimensional state, as used by the linear bandit.
    pub fn scalar(s: f64) -> Self {
        assert!(s.is_finite(), "state coordinate must be finite");
        State(vec![s])
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Index of a discrete action (response).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionId(pub usize);

impl ActionId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// `(state, winner, loser)` with the preferred action stored first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceTriple {
    #[serde(rename = "s")]
    pub state: State,
    #[serde(rename = "w")]
    pub winner: ActionId,
    #[serde(rename = "l")]
    pub loser: ActionId,
}

#[derive(Serialize, Deserialize)]
struct PreferenceDatasetRepr {
    n: usize,
    triples: Vec<PreferenceTriple>,
}

/// Preference dataset of `n` labeled comparisons.
///
/// The count is always the length of the triple list; the JSON form carries
/// both and is rejected on mismatch.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "PreferenceDatasetRepr", into = "PreferenceDatasetRepr")]
pub struct PreferenceDataset {
    triples: Vec<PreferenceTriple>,
}

impl TryFrom<PreferenceDatasetRepr> for PreferenceDataset {
    type Error = String;

    fn try_from(r: PreferenceDatasetRepr) -> std::result::Result<Self, String> {
        if r.n != r.triples.len() {
            return Err(format!("n = {} but {} triples present", r.n, r.triples.len()));
        }
        Ok(PreferenceDataset { triples: r.triples })
    }
}

impl From<PreferenceDataset> for PreferenceDatasetRepr {
    fn from(d: PreferenceDataset) -> Self {
        PreferenceDatasetRepr {
            n: d.triples.len(),
            triples: d.triples,
        }
    }
}

impl PreferenceDataset {
    pub fn new(triples: Vec<PreferenceTriple>) -> Self {
        PreferenceDataset { triples }
    }

    pub fn n(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn triples(&self) -> &[PreferenceTriple] {
        &self.triples
    }

    pub fn states(&self) -> Vec<State> {
        self.triples.iter().map(|t| t.state.clone()).collect()
    }

    pub(crate) fn require_nonempty(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::InvalidArgument("preference dataset is empty".into()));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct PromptDatasetRepr {
    m: usize,
    states: Vec<State>,
}

/// Preference-free prompt states.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "PromptDatasetRepr", into = "PromptDatasetRepr")]
pub struct PromptDataset {
    states: Vec<State>,
}

impl TryFrom<PromptDatasetRepr> for PromptDataset {
    type Error = String;

    fn try_from(r: PromptDatasetRepr) -> std::result::Result<Self, String> {
        if r.m != r.states.len() {
            return Err(format!("m = {} but {} states present", r.m, r.states.len()));
        }
        Ok(PromptDataset { states: r.states })
    }
}

impl From<PromptDataset> for PromptDatasetRepr {
    fn from(p: PromptDataset) -> Self {
        PromptDatasetRepr {
            m: p.states.len(),
            states: p.states,
        }
    }
}

impl PromptDataset {
    pub fn new(states: Vec<State>) -> Self {
        PromptDataset { states }
    }

    pub fn m(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    /// The first `m` prompts.
    pub fn prefix(&self, m: usize) -> PromptDataset {
        PromptDataset {
            states: self.states[..m.min(self.states.len())].to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TripleViolation {
    WinnerEqualsLoser,
    ActionOutOfRange,
}

/// Problems found by [`validate_dataset`].
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ViolationReport {
    pub empty: bool,
    pub offending: Vec<(usize, TripleViolation)>,
}

/// Checks that the dataset is nonempty and every triple compares two distinct
/// in-range actions. Reports every offending index rather than stopping at the first.
pub fn validate_dataset(d: &PreferenceDataset, k: usize) -> std::result::Result<(), ViolationReport> {
    let mut report = ViolationReport {
        empty: d.is_empty(),
        offending: Vec::new(),
    };
    for (i, t) in d.triples().iter().enumerate() {
        if t.winner.0 >= k || t.loser.0 >= k {
            report.offending.push((i, TripleViolation::ActionOutOfRange));
        } else if t.winner == t.loser {
            report.offending.push((i, TripleViolation::WinnerEqualsLoser));
        }
    }
    if report.empty || !report.offending.is_empty() {
        Err(report)
    } else {
        Ok(())
    }
}
