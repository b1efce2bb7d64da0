//! Mode Counter Environments.
//!
//! A partially observable process cycles through `M` modes. The hidden state
//! is (mode, count): the count tracks consecutive steps in the current mode,
//! and when it reaches the mode's lifespan the next mode is drawn from a
//! row-stochastic transition matrix. The agent sees a scalar in [0, 1):
//! drawn from the mode's interval [m/M, (m+1)/M) when the count is in the
//! informative set `C`, uniform noise otherwise. The optimal action is always
//! the current mode, and an episode scores 1 only when every action is right.
//!
//! Modes are 0-indexed so the observation intervals [m/M, (m+1)/M) tile
//! [0, 1) exactly.
//!
//! Three instances exercise different memory regimes: `amnesia` (every step
//! informative, memoryless), `blind` (no step informative, pure counting),
//! and `tracker` (informative only on mode entry, observation plus counting).

use serde::{Deserialize, Serialize};

use super::{EnvEpisode, EnvError, RawObs};
use crate::machine::{minimize, Cell, MachineBuilder, MooreMachine, SourceAlphabet};
use crate::rng::{Stream, StreamSeeder};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MceConfig {
    pub modes: usize,
    /// Distribution over initial modes.
    pub initial_dist: Vec<f64>,
    /// Row-stochastic matrix; row m is the distribution of the mode entered
    /// when mode m's lifespan expires.
    pub transition: Vec<Vec<f64>>,
    /// Lifespan per mode, at least 1.
    pub lifespans: Vec<usize>,
    /// Counts at which the observation reveals the mode; sorted, deduped.
    pub informative_counts: Vec<usize>,
    pub episode_length: usize,
}

impl MceConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let m = self.modes;
        if m == 0 {
            return Err(EnvError::InvalidConfig("modes must be positive".into()));
        }
        if self.episode_length == 0 {
            return Err(EnvError::InvalidConfig("episode_length must be positive".into()));
        }
        if self.initial_dist.len() != m || self.transition.len() != m || self.lifespans.len() != m {
            return Err(EnvError::InvalidConfig("per-mode arrays must have length M".into()));
        }
        let check_row = |row: &[f64], what: &str| -> Result<(), EnvError> {
            if row.len() != m {
                return Err(EnvError::InvalidConfig(format!("{what} must have length M")));
            }
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(EnvError::InvalidConfig(format!("{what} has entries outside [0,1]")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(EnvError::InvalidConfig(format!("{what} sums to {total}, not 1")));
            }
            Ok(())
        };
        check_row(&self.initial_dist, "initial distribution")?;
        for (i, row) in self.transition.iter().enumerate() {
            check_row(row, &format!("transition row {i}"))?;
        }
        if self.lifespans.iter().any(|&d| d == 0) {
            return Err(EnvError::InvalidConfig("lifespans must be at least 1".into()));
        }
        let max_lifespan = *self.lifespans.iter().max().unwrap();
        if self.informative_counts.iter().any(|&c| c >= max_lifespan) {
            return Err(EnvError::InvalidConfig(format!(
                "informative counts must be below the maximum lifespan {max_lifespan}"
            )));
        }
        if self.informative_counts.windows(2).any(|w| w[0] >= w[1]) {
            return Err(EnvError::InvalidConfig("informative counts must be sorted and unique".into()));
        }
        Ok(())
    }

    pub fn is_informative(&self, count: usize) -> bool {
        self.informative_counts.binary_search(&count).is_ok()
    }

    pub fn lifespan(&self, mode: usize) -> usize {
        self.lifespans[mode]
    }

    /// Index of the interval [c/M, (c+1)/M) containing the observation.
    pub fn observation_class(&self, obs: f64) -> usize {
        ((obs * self.modes as f64) as usize).min(self.modes - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MceState {
    pub mode: usize,
    pub count: usize,
}

/// Draws the observation for the current state, then advances the state.
/// Returned as (next state, observation emitted from the current state).
pub fn mce_step(config: &MceConfig, state: &MceState, stream: &mut Stream) -> (MceState, f64) {
    let m = config.modes as f64;
    let obs = if config.is_informative(state.count) {
        stream.uniform_in(state.mode as f64 / m, (state.mode as f64 + 1.0) / m)
    } else {
        stream.uniform()
    };
    let next = if state.count == config.lifespan(state.mode) - 1 {
        MceState { mode: stream.weighted(&config.transition[state.mode]), count: 0 }
    } else {
        MceState { mode: state.mode, count: state.count + 1 }
    };
    (next, obs)
}

/// The optimal action is the active mode.
pub fn optimal_action(state: &MceState) -> usize {
    state.mode
}

#[derive(Debug, Clone)]
pub struct MceEnv {
    pub config: MceConfig,
}

impl MceEnv {
    pub fn new(config: MceConfig) -> Result<Self, EnvError> {
        config.validate()?;
        Ok(MceEnv { config })
    }

    pub fn initial_state(&self, stream: &mut Stream) -> MceState {
        MceState { mode: stream.weighted(&self.config.initial_dist), count: 0 }
    }

    pub fn sample_episode(&self, stream: &mut Stream) -> EnvEpisode {
        let len = self.config.episode_length;
        let mut raw = Vec::with_capacity(len);
        let mut encoded = Vec::with_capacity(len);
        let mut teacher = Vec::with_capacity(len);
        let mut state = self.initial_state(stream);
        for _ in 0..len {
            let (next, obs) = mce_step(&self.config, &state, stream);
            raw.push(RawObs::Real(obs));
            encoded.push(vec![obs]);
            teacher.push(optimal_action(&state));
            state = next;
        }
        EnvEpisode { raw, encoded, teacher }
    }
}

fn random_stochastic_row(modes: usize, stream: &mut Stream) -> Vec<f64> {
    // Weights bounded away from zero keep every transition reasonably likely,
    // so extraction witnesses the full table quickly.
    let weights: Vec<f64> = (0..modes).map(|_| stream.uniform_in(0.5, 1.5)).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// Memoryless instance: every mode lives one step and every observation is
/// informative, so the current observation determines the optimal action.
pub fn amnesia(seeder: &StreamSeeder, episode_length: usize) -> MceConfig {
    let modes = 4;
    let mut stream = seeder.stream("mce-amnesia-setup");
    MceConfig {
        modes,
        initial_dist: random_stochastic_row(modes, &mut stream),
        transition: (0..modes).map(|_| random_stochastic_row(modes, &mut stream)).collect(),
        lifespans: vec![1; modes],
        informative_counts: vec![0],
        episode_length,
    }
}

/// Observation-free instance: the mode sequence is deterministic and cyclic
/// with lifespans (2, 3, 4, 1), and no observation is ever informative, so
/// optimal play is a pure 10-step counter.
pub fn blind(episode_length: usize) -> MceConfig {
    let modes = 4;
    let deterministic = |m: usize| {
        let mut row = vec![0.0; modes];
        row[m] = 1.0;
        row
    };
    MceConfig {
        modes,
        initial_dist: deterministic(0),
        transition: (0..modes).map(|m| deterministic((m + 1) % modes)).collect(),
        lifespans: vec![2, 3, 4, 1],
        informative_counts: vec![],
        episode_length,
    }
}

/// Combined instance: random mode transitions with lifespans (2, 3, 4, 1),
/// informative only on mode entry, so the agent must read the entry
/// observation and then count.
pub fn tracker(seeder: &StreamSeeder, episode_length: usize) -> MceConfig {
    let modes = 4;
    let mut stream = seeder.stream("mce-tracker-setup");
    MceConfig {
        modes,
        initial_dist: random_stochastic_row(modes, &mut stream),
        transition: (0..modes).map(|_| random_stochastic_row(modes, &mut stream)).collect(),
        lifespans: vec![2, 3, 4, 1],
        informative_counts: vec![0],
        episode_length,
    }
}

/// Builds the minimal Moore machine implementing the optimal policy over
/// observation classes.
///
/// States are the reachable (mode, count) pairs plus a pre-observation start
/// state; the start state's label is a don't-care (the machine acts only
/// after consuming an observation) and is merged away by minimization
/// whenever an equivalent state exists. Transitions out of a state follow the
/// observation class only where the environment makes the class informative;
/// everywhere else all classes act alike. Rejected when a stochastic mode
/// change is not revealed by an informative observation, since no
/// deterministic machine over classes can then track the mode.
pub fn ground_truth_machine(config: &MceConfig) -> Result<MooreMachine, EnvError> {
    config.validate()?;
    let m = config.modes;
    let zero_informative = config.is_informative(0);
    let support = |row: &[f64]| -> Vec<usize> {
        row.iter().enumerate().filter(|(_, &p)| p > 0.0).map(|(i, _)| i).collect()
    };

    let init_support = support(&config.initial_dist);
    if init_support.len() > 1 && !zero_informative {
        return Err(EnvError::NotRepresentable(
            "random initial mode with uninformative entry observations".into(),
        ));
    }

    // Reachable modes: closure of the initial support under transitions.
    let mut mode_reachable = vec![false; m];
    let mut stack = init_support.clone();
    for &s in &stack {
        mode_reachable[s] = true;
    }
    while let Some(mode) = stack.pop() {
        for succ in support(&config.transition[mode]) {
            if !mode_reachable[succ] {
                mode_reachable[succ] = true;
                stack.push(succ);
            }
        }
    }
    for mode in (0..m).filter(|&x| mode_reachable[x]) {
        if support(&config.transition[mode]).len() > 1 && !zero_informative {
            return Err(EnvError::NotRepresentable(format!(
                "mode {mode} transitions randomly but entry observations are uninformative"
            )));
        }
    }

    // State 0 is the pre-observation start; (mode, count) pairs follow.
    let mut id_of = vec![Vec::new(); m];
    let mut states: Vec<(usize, usize)> = Vec::new();
    for mode in 0..m {
        id_of[mode] = Vec::with_capacity(config.lifespan(mode));
        for count in 0..config.lifespan(mode) {
            if mode_reachable[mode] {
                id_of[mode].push(1 + states.len());
                states.push((mode, count));
            } else {
                id_of[mode].push(usize::MAX);
            }
        }
    }
    let n = 1 + states.len();

    let mut transitions: Vec<Vec<Option<Cell>>> = vec![vec![None; m]; n];
    let mut set_cell = |row: &mut Vec<Option<Cell>>, class: usize, target: usize| {
        debug_assert!(row[class].is_none() || row[class].unwrap().target == target);
        row[class] = Some(Cell { target, witnessed: true });
    };

    // Entering states (m', 0) after an expired lifespan or at episode start:
    // informative entries key on the class, deterministic ones accept all.
    let mut entry_cells = |row: &mut Vec<Option<Cell>>, succ: &[usize]| {
        if zero_informative {
            for &next_mode in succ {
                set_cell(row, next_mode, id_of[next_mode][0]);
            }
        } else {
            let next_mode = succ[0];
            for class in 0..m {
                set_cell(row, class, id_of[next_mode][0]);
            }
        }
    };

    let mut row0 = std::mem::take(&mut transitions[0]);
    entry_cells(&mut row0, &init_support);
    transitions[0] = row0;

    for (i, &(mode, count)) in states.iter().enumerate() {
        let sid = 1 + i;
        let mut row = std::mem::take(&mut transitions[sid]);
        if count < config.lifespan(mode) - 1 {
            let target = id_of[mode][count + 1];
            if config.is_informative(count + 1) {
                set_cell(&mut row, mode, target);
            } else {
                for class in 0..m {
                    set_cell(&mut row, class, target);
                }
            }
        } else {
            entry_cells(&mut row, &support(&config.transition[mode]));
        }
        transitions[sid] = row;
    }

    let mut labels = vec![0usize];
    let mut label_witnessed = vec![false];
    let mut state_names = vec!["start".to_string()];
    for &(mode, count) in &states {
        labels.push(mode);
        label_witnessed.push(true);
        state_names.push(format!("m{mode}c{count}"));
    }

    let built = MachineBuilder {
        initial: 0,
        labels,
        label_witnessed,
        transitions,
        state_names,
        obs_names: (1..=m).map(|c| format!("o{c}")).collect(),
        action_names: (0..m).map(|a| format!("m{a}")).collect(),
        source: SourceAlphabet::Intervals { classes: m },
        obs_map: (0..m).map(Some).collect(),
        state_codes: None,
    }
    .build()?;

    Ok(minimize(&built).machine)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seeder() -> StreamSeeder {
        StreamSeeder::new(42)
    }

    #[test]
    fn informative_observation_lands_in_mode_interval() {
        let cfg = amnesia(&seeder(), 50);
        let mut stream = seeder().stream("t");
        for mode in 0..4 {
            let state = MceState { mode, count: 0 };
            for _ in 0..200 {
                let (_, obs) = mce_step(&cfg, &state, &mut stream);
                assert_eq!(cfg.observation_class(obs), mode);
            }
        }
    }

    #[test]
    fn lifespan_one_resamples_mode_every_step() {
        let cfg = amnesia(&seeder(), 50);
        let mut stream = seeder().stream("t2");
        let state = MceState { mode: 2, count: 0 };
        let (next, _) = mce_step(&cfg, &state, &mut stream);
        assert_eq!(next.count, 0);
    }

    #[test]
    fn optimal_action_is_the_mode() {
        assert_eq!(optimal_action(&MceState { mode: 3, count: 5 }), 3);
    }

    #[test]
    fn counts_reset_exactly_on_mode_expiry() {
        let cfg = blind(50);
        let mut stream = seeder().stream("t3");
        let mut state = MceState { mode: 0, count: 0 };
        for _ in 0..40 {
            let (next, _) = mce_step(&cfg, &state, &mut stream);
            if state.count == cfg.lifespan(state.mode) - 1 {
                assert_eq!(next.count, 0);
            } else {
                assert_eq!(next.count, state.count + 1);
                assert_eq!(next.mode, state.mode);
            }
            state = next;
        }
    }

    #[test]
    fn ground_truth_sizes_match_the_known_minimal_machines() {
        let a = ground_truth_machine(&amnesia(&seeder(), 50)).unwrap();
        assert_eq!((a.state_count(), a.obs_count()), (4, 4));

        let b = ground_truth_machine(&blind(50)).unwrap();
        assert_eq!((b.state_count(), b.obs_count()), (10, 1));

        let t = ground_truth_machine(&tracker(&seeder(), 50)).unwrap();
        assert_eq!((t.state_count(), t.obs_count()), (10, 4));
    }

    #[test]
    fn amnesia_machine_is_observation_determined() {
        let gt = ground_truth_machine(&amnesia(&seeder(), 50)).unwrap();
        for o in 0..gt.obs_count() {
            let targets: Vec<usize> = (0..gt.state_count())
                .map(|s| gt.transitions[s][o].unwrap().target)
                .collect();
            assert!(targets.windows(2).all(|w| w[0] == w[1]), "class {o}: {targets:?}");
        }
    }

    #[test]
    fn unrepresentable_config_is_rejected() {
        let mut cfg = tracker(&seeder(), 50);
        cfg.informative_counts = vec![1];
        let err = ground_truth_machine(&cfg).unwrap_err();
        assert!(matches!(err, EnvError::NotRepresentable(_)), "{err}");
    }

    #[test]
    fn episodes_are_deterministic_given_a_stream() {
        let env = MceEnv::new(tracker(&seeder(), 50)).unwrap();
        let e1 = env.sample_episode(&mut seeder().stream("ep"));
        let e2 = env.sample_episode(&mut seeder().stream("ep"));
        assert_eq!(e1, e2);
        assert_eq!(e1.len(), 50);
    }
}
