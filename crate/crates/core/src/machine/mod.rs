//! Finite Moore machines: extraction from quantized policies, minimization,
//! equivalence checking, and DOT export.
//!
//! A machine's output at a state is an action label. Because a policy always
//! consumes an observation before acting, the label of the initial state is
//! never exercised by an environment; equivalence and minimization therefore
//! treat machine behavior as the label sequence emitted *after* transitions.
//! [`MooreMachine::run`] still reports the initial label first, classic-style.

mod dot;
mod equiv;
mod extract;
mod minimize;

pub use dot::to_dot;
pub use equiv::{equivalent, same_alphabet_alignment, AlphabetAlignment, Equivalence};
pub use extract::{
    extract, ExtractOptions, ExtractStats, QuantizedStart, QuantizedStep, QuantizedStepper,
};
pub use minimize::{minimize, Minimized};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MachineError {
    #[error("undefined transition from state {state} on observation {obs}")]
    UndefinedTransition { state: String, obs: String },
    #[error("conflicting transitions from state {state} on observation {obs}: {first} vs {second}")]
    ConflictingTransition { state: String, obs: String, first: String, second: String },
    #[error("alphabets cannot be aligned: {0}")]
    UnalignableAlphabets(String),
    #[error("invalid machine: {0}")]
    InvalidMachine(String),
    #[error("observation {obs} out of range for alphabet of size {size}")]
    UnknownObservation { obs: usize, size: usize },
    #[error("extraction did not saturate within {max_episodes} episodes")]
    NoSaturation { max_episodes: usize },
}

/// One transition-table cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub target: usize,
    /// False for don't-care cells completed as self-loops.
    pub witnessed: bool,
}

/// Where a machine's observation symbols came from, for mapping raw
/// environment observations back onto the (possibly merged) alphabet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SourceAlphabet {
    /// Interval classes [c/n, (c+1)/n) over a real observation in [0, 1).
    Intervals { classes: usize },
    /// Binary input symbols 0 and 1.
    Binary,
    /// Ternary bottleneck codes, one per dictionary entry.
    Codes(Vec<Vec<i8>>),
}

impl SourceAlphabet {
    pub fn len(&self) -> usize {
        match self {
            SourceAlphabet::Intervals { classes } => *classes,
            SourceAlphabet::Binary => 2,
            SourceAlphabet::Codes(dict) => dict.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: SourceAlphabet,
    /// Source symbol -> machine observation id, composed through merges.
    /// `None` for source symbols never witnessed.
    pub obs_map: Vec<Option<usize>>,
    /// Hidden-state codes of the originally extracted states, if any.
    pub state_codes: Option<Vec<Vec<i8>>>,
    /// Originally extracted state -> current state, composed through merges.
    pub state_map: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MooreMachine {
    pub initial: usize,
    /// Action label per state.
    pub labels: Vec<usize>,
    /// False when the label was imputed rather than observed in transition
    /// data (only ever the initial state).
    pub label_witnessed: Vec<bool>,
    /// transitions[state][obs]; `None` is an unwitnessed don't-care cell.
    pub transitions: Vec<Vec<Option<Cell>>>,
    pub state_names: Vec<String>,
    pub obs_names: Vec<String>,
    pub action_names: Vec<String>,
    pub provenance: Provenance,
}

impl MooreMachine {
    pub fn state_count(&self) -> usize {
        self.labels.len()
    }

    pub fn obs_count(&self) -> usize {
        self.obs_names.len()
    }

    pub fn defined_cell_count(&self) -> usize {
        self.transitions
            .iter()
            .flat_map(|row| row.iter())
            .filter(|c| c.is_some())
            .count()
    }

    /// Structural sanity: shapes agree, targets and labels are in range,
    /// every state is reachable from the initial one.
    pub fn validate(&self) -> Result<(), MachineError> {
        let n = self.state_count();
        let q = self.obs_count();
        if self.initial >= n {
            return Err(MachineError::InvalidMachine(format!(
                "initial state {} out of range {n}",
                self.initial
            )));
        }
        if self.transitions.len() != n
            || self.label_witnessed.len() != n
            || self.state_names.len() != n
        {
            return Err(MachineError::InvalidMachine("per-state arrays disagree".into()));
        }
        for (s, row) in self.transitions.iter().enumerate() {
            if row.len() != q {
                return Err(MachineError::InvalidMachine(format!(
                    "state {s} has {} cells, expected {q}",
                    row.len()
                )));
            }
            for cell in row.iter().flatten() {
                if cell.target >= n {
                    return Err(MachineError::InvalidMachine(format!(
                        "state {s} points at missing state {}",
                        cell.target
                    )));
                }
            }
        }
        for (s, &l) in self.labels.iter().enumerate() {
            if l >= self.action_names.len() {
                return Err(MachineError::InvalidMachine(format!(
                    "state {s} labeled with unknown action {l}"
                )));
            }
        }
        let reach = self.reachable();
        if let Some(s) = reach.iter().position(|r| !r) {
            return Err(MachineError::InvalidMachine(format!(
                "state {s} unreachable from initial"
            )));
        }
        Ok(())
    }

    pub fn reachable(&self) -> Vec<bool> {
        let mut seen = vec![false; self.state_count()];
        let mut queue = vec![self.initial];
        seen[self.initial] = true;
        while let Some(s) = queue.pop() {
            for cell in self.transitions[s].iter().flatten() {
                if !seen[cell.target] {
                    seen[cell.target] = true;
                    queue.push(cell.target);
                }
            }
        }
        seen
    }

    /// True when the initial state has no incoming transitions (not even
    /// self-loops) and its label was never observed; such a label is a
    /// don't-care for minimization and equivalence.
    pub fn initial_label_is_dont_care(&self) -> bool {
        if self.label_witnessed[self.initial] {
            return false;
        }
        !self
            .transitions
            .iter()
            .flat_map(|row| row.iter().flatten())
            .any(|c| c.target == self.initial)
    }

    /// Fills every undefined cell with an unwitnessed self-loop. Returns the
    /// number of cells completed.
    pub fn complete_with_self_loops(&mut self) -> usize {
        let mut filled = 0;
        for (s, row) in self.transitions.iter_mut().enumerate() {
            for cell in row.iter_mut() {
                if cell.is_none() {
                    *cell = Some(Cell { target: s, witnessed: false });
                    filled += 1;
                }
            }
        }
        filled
    }

    /// Classic Moore run: emits the initial state's label, then the label of
    /// each state reached. Output length is `observations.len() + 1`.
    pub fn run(&self, observations: &[usize]) -> Result<Vec<usize>, MachineError> {
        let mut out = Vec::with_capacity(observations.len() + 1);
        let mut state = self.initial;
        out.push(self.labels[state]);
        for &obs in observations {
            if obs >= self.obs_count() {
                return Err(MachineError::UnknownObservation { obs, size: self.obs_count() });
            }
            match self.transitions[state][obs] {
                Some(cell) => state = cell.target,
                None => {
                    return Err(MachineError::UndefinedTransition {
                        state: self.state_names[state].clone(),
                        obs: self.obs_names[obs].clone(),
                    })
                }
            }
            out.push(self.labels[state]);
        }
        Ok(out)
    }

    /// Single transition step, reporting whether the cell was witnessed.
    pub fn step(&self, state: usize, obs: usize) -> Result<(usize, bool), MachineError> {
        if obs >= self.obs_count() {
            return Err(MachineError::UnknownObservation { obs, size: self.obs_count() });
        }
        match self.transitions[state][obs] {
            Some(cell) => Ok((cell.target, cell.witnessed)),
            None => Err(MachineError::UndefinedTransition {
                state: self.state_names[state].clone(),
                obs: self.obs_names[obs].clone(),
            }),
        }
    }

    /// Machine observation id for a source-alphabet symbol, if witnessed.
    pub fn obs_for_source(&self, source_symbol: usize) -> Option<usize> {
        self.provenance.obs_map.get(source_symbol).copied().flatten()
    }
}

/// Plain constructor used by extraction and the ground-truth builders.
#[derive(Debug, Clone)]
pub struct MachineBuilder {
    pub initial: usize,
    pub labels: Vec<usize>,
    pub label_witnessed: Vec<bool>,
    pub transitions: Vec<Vec<Option<Cell>>>,
    pub state_names: Vec<String>,
    pub obs_names: Vec<String>,
    pub action_names: Vec<String>,
    pub source: SourceAlphabet,
    pub obs_map: Vec<Option<usize>>,
    pub state_codes: Option<Vec<Vec<i8>>>,
}

impl MachineBuilder {
    pub fn build(self) -> Result<MooreMachine, MachineError> {
        let n = self.labels.len();
        let m = MooreMachine {
            initial: self.initial,
            labels: self.labels,
            label_witnessed: self.label_witnessed,
            transitions: self.transitions,
            state_names: self.state_names,
            obs_names: self.obs_names,
            action_names: self.action_names,
            provenance: Provenance {
                source: self.source,
                obs_map: self.obs_map,
                state_codes: self.state_codes,
                state_map: Some((0..n).collect()),
            },
        };
        m.validate()?;
        Ok(m)
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    /// Complete machine over `rows[0].1.len()` symbols from `(label, targets)` rows.
    pub fn machine(initial: usize, rows: &[(usize, &[usize])], actions: usize) -> MooreMachine {
        let n = rows.len();
        let q = rows[0].1.len();
        MooreMachine {
            initial,
            labels: rows.iter().map(|r| r.0).collect(),
            label_witnessed: vec![true; n],
            transitions: rows
                .iter()
                .map(|r| {
                    r.1.iter()
                        .map(|&t| Some(Cell { target: t, witnessed: true }))
                        .collect()
                })
                .collect(),
            state_names: (0..n).map(|i| format!("s{i}")).collect(),
            obs_names: (0..q).map(|i| format!("o{i}")).collect(),
            action_names: (0..actions).map(|i| format!("a{i}")).collect(),
            provenance: Provenance {
                source: SourceAlphabet::Intervals { classes: q },
                obs_map: (0..q).map(Some).collect(),
                state_codes: None,
                state_map: Some((0..n).collect()),
            },
        }
    }
}
