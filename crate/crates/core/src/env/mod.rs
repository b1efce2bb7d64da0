//! Benchmark environments with known optimal policies and known minimal
//! Moore machines: mode-counter environments and the seven Tomita grammars.
//!
//! Episodes do not depend on the agent's actions in either family, so an
//! episode is sampled up front as an observation sequence plus the
//! teacher's (optimal) action sequence, and actors are scored against it.

pub mod mce;
pub mod tomita;

pub use mce::{MceConfig, MceEnv, MceState};
pub use tomita::{GrammarId, TomitaEnv};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::machine::{MachineError, MooreMachine};
use crate::rng::Stream;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
    #[error("non-binary symbol {0:?} in grammar string")]
    NonBinarySymbol(char),
    #[error("grammar index {0} outside 1..=7")]
    BadGrammar(u8),
    #[error("no string with label {label} exists for grammar {grammar} in lengths {lo}..={hi}")]
    NoFeasibleLength { grammar: u8, label: &'static str, lo: usize, hi: usize },
    #[error("optimal policy is not representable as a finite machine over observation classes: {0}")]
    NotRepresentable(String),
    #[error("machine construction failed: {0}")]
    Machine(#[from] MachineError),
}

/// Raw observation as the environment emits it, before encoding for a network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RawObs {
    Real(f64),
    Symbol(u8),
}

/// A sampled episode: observations plus the optimal action at every step.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvEpisode {
    pub raw: Vec<RawObs>,
    /// Network input per step (scalar for MCE, one-hot for grammars).
    pub encoded: Vec<Vec<f64>>,
    pub teacher: Vec<usize>,
}

impl EnvEpisode {
    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }
}

#[derive(Debug, Clone)]
pub enum Env {
    Mce(MceEnv),
    Tomita(TomitaEnv),
}

impl Env {
    pub fn action_count(&self) -> usize {
        match self {
            Env::Mce(e) => e.config.modes,
            Env::Tomita(_) => 2,
        }
    }

    /// Dimension of the encoded observation fed to a network.
    pub fn obs_dim(&self) -> usize {
        match self {
            Env::Mce(_) => 1,
            Env::Tomita(_) => 2,
        }
    }

    pub fn action_names(&self) -> Vec<String> {
        match self {
            Env::Mce(e) => (0..e.config.modes).map(|m| format!("m{m}")).collect(),
            Env::Tomita(_) => vec!["reject".into(), "accept".into()],
        }
    }

    pub fn sample_episode(&self, stream: &mut Stream) -> EnvEpisode {
        match self {
            Env::Mce(e) => e.sample_episode(stream),
            Env::Tomita(e) => e.sample_episode(stream),
        }
    }

    /// Episode score for an action sequence: 1 only if every action matches
    /// the optimal one (mode counters), or if the final accept/reject
    /// decision is correct (grammars).
    pub fn score(&self, episode: &EnvEpisode, actions: &[usize]) -> f64 {
        assert_eq!(episode.len(), actions.len(), "score: action count mismatch");
        match self {
            Env::Mce(_) => {
                if actions == episode.teacher {
                    1.0
                } else {
                    0.0
                }
            }
            Env::Tomita(_) => {
                if actions.last() == episode.teacher.last() {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// The minimal machine implementing the optimal policy, when one exists.
    pub fn ground_truth_machine(&self) -> Result<MooreMachine, EnvError> {
        match self {
            Env::Mce(e) => mce::ground_truth_machine(&e.config),
            Env::Tomita(e) => Ok(tomita::ground_truth_machine(e.grammar)),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Env::Mce(_) => "mce",
            Env::Tomita(_) => "tomita",
        }
    }
}
