//! Moore machine extraction from a quantized policy.
//!
//! Runs greedy episodes, interning each distinct hidden-state code and
//! observation-feature code, and tabulating every witnessed
//! (state, observation) -> state transition together with the action emitted
//! at the post-transition state. Stops once a minimum episode budget has run
//! and no new state, observation, or transition has appeared for a fixed
//! window of consecutive episodes.

use std::collections::BTreeMap;

use super::{Cell, MachineBuilder, MachineError, MooreMachine, SourceAlphabet};
use crate::env::Env;
use crate::rng::StreamSeeder;
use crate::tensor::Tensor;

/// Start of a quantized rollout: the bottlenecked initial hidden state.
pub struct QuantizedStart {
    pub carrier: Tensor,
    pub code: Vec<i8>,
    /// Action the policy head emits at the initial carrier; recorded as the
    /// initial state's (imputed) label.
    pub label: usize,
}

/// One quantized transition.
pub struct QuantizedStep {
    pub obs_code: Vec<i8>,
    pub state_code: Vec<i8>,
    pub carrier: Tensor,
    pub action: usize,
}

/// Anything that can drive extraction: steps from a continuous carrier but
/// exposes ternary codes whose dynamics must be a deterministic function
/// (code, observation code) -> code.
pub trait QuantizedStepper {
    fn start(&self) -> QuantizedStart;
    fn step(&self, carrier: &Tensor, obs_encoded: &[f64]) -> QuantizedStep;
}

#[derive(Debug, Clone, Copy)]
pub struct ExtractOptions {
    /// Never stop before this many episodes.
    pub min_episodes: usize,
    /// Consecutive episodes with no new state/observation/transition needed
    /// to declare saturation.
    pub saturation_window: usize,
    /// Hard budget; exceeding it without saturating fails the run.
    pub max_episodes: usize,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions { min_episodes: 2_000, saturation_window: 500, max_episodes: 60_000 }
    }
}

/// The raw p x q transition table gathered during extraction.
#[derive(Debug, Clone)]
pub struct TransitionTable {
    pub state_codes: Vec<Vec<i8>>,
    pub obs_codes: Vec<Vec<i8>>,
    /// (state, obs) -> (successor, witness count). A cell is present exactly
    /// when the transition was seen at least once.
    pub cells: BTreeMap<(usize, usize), (usize, u64)>,
}

#[derive(Debug, Clone)]
pub struct ExtractStats {
    pub episodes_run: usize,
    pub saturated: bool,
    pub table: TransitionTable,
}

pub fn extract(
    stepper: &impl QuantizedStepper,
    env: &Env,
    options: &ExtractOptions,
    seeder: &StreamSeeder,
    stream_name: &str,
) -> Result<(MooreMachine, ExtractStats), MachineError> {
    let start = stepper.start();
    let mut state_ids: BTreeMap<Vec<i8>, usize> = BTreeMap::new();
    let mut state_codes: Vec<Vec<i8>> = Vec::new();
    let mut obs_ids: BTreeMap<Vec<i8>, usize> = BTreeMap::new();
    let mut obs_codes: Vec<Vec<i8>> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut label_witnessed: Vec<bool> = Vec::new();
    let mut cells: BTreeMap<(usize, usize), (usize, u64)> = BTreeMap::new();

    state_ids.insert(start.code.clone(), 0);
    state_codes.push(start.code.clone());
    labels.push(start.label);
    label_witnessed.push(false);

    let mut last_growth = 0usize;
    let mut episodes_run = 0usize;
    let mut saturated = false;

    for ep in 0..options.max_episodes {
        let mut stream = seeder.indexed(stream_name, ep);
        let episode = env.sample_episode(&mut stream);
        let mut carrier = start.carrier.clone();
        let mut state = 0usize;
        let mut grew = false;

        for obs in &episode.encoded {
            let step = stepper.step(&carrier, obs);

            let obs_id = match obs_ids.get(&step.obs_code) {
                Some(&id) => id,
                None => {
                    let id = obs_codes.len();
                    obs_ids.insert(step.obs_code.clone(), id);
                    obs_codes.push(step.obs_code.clone());
                    grew = true;
                    id
                }
            };
            let next = match state_ids.get(&step.state_code) {
                Some(&id) => id,
                None => {
                    let id = state_codes.len();
                    state_ids.insert(step.state_code.clone(), id);
                    state_codes.push(step.state_code.clone());
                    labels.push(step.action);
                    label_witnessed.push(true);
                    grew = true;
                    id
                }
            };
            if label_witnessed[next] && labels[next] != step.action {
                return Err(MachineError::InvalidMachine(format!(
                    "state {next} emitted conflicting actions {} and {}",
                    labels[next], step.action
                )));
            }
            labels[next] = step.action;
            label_witnessed[next] = true;

            match cells.get_mut(&(state, obs_id)) {
                Some((target, count)) => {
                    if *target != next {
                        return Err(MachineError::ConflictingTransition {
                            state: format!("h{state}"),
                            obs: format!("x{obs_id}"),
                            first: format!("h{target}"),
                            second: format!("h{next}"),
                        });
                    }
                    *count += 1;
                }
                None => {
                    cells.insert((state, obs_id), (next, 1));
                    grew = true;
                }
            }
            state = next;
            carrier = step.carrier;
        }

        episodes_run = ep + 1;
        if grew {
            last_growth = ep;
        }
        if episodes_run >= options.min_episodes && ep - last_growth >= options.saturation_window {
            saturated = true;
            break;
        }
    }
    if !saturated {
        return Err(MachineError::NoSaturation { max_episodes: options.max_episodes });
    }

    let p = state_codes.len();
    let q = obs_codes.len();
    let mut transitions: Vec<Vec<Option<Cell>>> = vec![vec![None; q]; p];
    for (&(s, o), &(t, _)) in &cells {
        transitions[s][o] = Some(Cell { target: t, witnessed: true });
    }

    let machine = MachineBuilder {
        initial: 0,
        labels,
        label_witnessed,
        transitions,
        state_names: (0..p).map(|i| format!("h{i}")).collect(),
        obs_names: (0..q).map(|i| format!("x{i}")).collect(),
        action_names: env.action_names(),
        source: SourceAlphabet::Codes(obs_codes.clone()),
        obs_map: (0..q).map(Some).collect(),
        state_codes: Some(state_codes.clone()),
    }
    .build()?;

    let stats = ExtractStats {
        episodes_run,
        saturated,
        table: TransitionTable { state_codes, obs_codes, cells },
    };
    Ok((machine, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::tomita::TomitaEnv;
    use crate::env::Env;

    /// A stepper that implements the parity-of-ones machine directly: code
    /// [+1] for even, [-1] for odd; action = 1 when even.
    struct ParityStepper;

    impl QuantizedStepper for ParityStepper {
        fn start(&self) -> QuantizedStart {
            QuantizedStart { carrier: Tensor::vector(vec![1.0]), code: vec![1], label: 1 }
        }

        fn step(&self, carrier: &Tensor, obs_encoded: &[f64]) -> QuantizedStep {
            // One-hot [is_zero, is_one].
            let is_one = obs_encoded[1] > 0.5;
            let even = carrier.data()[0] > 0.0;
            let next_even = if is_one { !even } else { even };
            let v = if next_even { 1.0 } else { -1.0 };
            QuantizedStep {
                obs_code: vec![obs_encoded[0] as i8, obs_encoded[1] as i8],
                state_code: vec![v as i8],
                carrier: Tensor::vector(vec![v]),
                action: if next_even { 1 } else { 0 },
            }
        }
    }

    fn toy_env() -> Env {
        Env::Tomita(TomitaEnv::new(5, 1, 12).unwrap())
    }

    #[test]
    fn extracts_the_parity_machine() {
        let seeder = StreamSeeder::new(11);
        let opts = ExtractOptions { min_episodes: 50, saturation_window: 20, max_episodes: 500 };
        let (m, stats) = extract(&ParityStepper, &toy_env(), &opts, &seeder, "ex").unwrap();
        assert!(stats.saturated);
        assert_eq!(m.state_count(), 2);
        assert_eq!(m.obs_count(), 2);
        // Initial state is revisited, so its label is witnessed.
        assert!(m.label_witnessed[0]);
    }

    #[test]
    fn extraction_is_deterministic() {
        let seeder = StreamSeeder::new(3);
        let opts = ExtractOptions { min_episodes: 30, saturation_window: 10, max_episodes: 500 };
        let (m1, s1) = extract(&ParityStepper, &toy_env(), &opts, &seeder, "d").unwrap();
        let (m2, s2) = extract(&ParityStepper, &toy_env(), &opts, &seeder, "d").unwrap();
        assert_eq!(m1, m2);
        assert_eq!(s1.episodes_run, s2.episodes_run);
    }

    /// Violates the Moore property: the successor depends on a hidden counter
    /// not exposed in the code.
    struct CheatingStepper;

    impl QuantizedStepper for CheatingStepper {
        fn start(&self) -> QuantizedStart {
            QuantizedStart { carrier: Tensor::vector(vec![0.0]), code: vec![0], label: 0 }
        }

        fn step(&self, carrier: &Tensor, _obs: &[f64]) -> QuantizedStep {
            let t = carrier.data()[0];
            let code = if (t as i64) % 3 == 0 { 1i8 } else { -1i8 };
            QuantizedStep {
                obs_code: vec![0],
                state_code: vec![code],
                carrier: Tensor::vector(vec![t + 1.0]),
                action: 0,
            }
        }
    }

    #[test]
    fn conflicting_transitions_are_rejected() {
        let seeder = StreamSeeder::new(4);
        let opts = ExtractOptions { min_episodes: 10, saturation_window: 5, max_episodes: 100 };
        let err = extract(&CheatingStepper, &toy_env(), &opts, &seeder, "c").unwrap_err();
        assert!(matches!(err, MachineError::ConflictingTransition { .. }), "{err}");
    }
}
