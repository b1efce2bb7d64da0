//! The seven Tomita grammars over {0, 1}, treated as accept/reject
//! environments: an episode feeds one string symbol per step and the decision
//! is read at the final symbol.
//!
//! Membership is implemented twice on purpose: closed-form predicates and
//! hand-transcribed reference DFAs. The two routes guard each other against
//! transcription slips (cross-checked exhaustively in tests). Samplers walk
//! the reference DFA with exact path counts, so a requested label and length
//! always yield a uniformly random string of that label.

use serde::{Deserialize, Serialize};

use super::{EnvEpisode, EnvError, RawObs};
use crate::machine::{minimize, Cell, MachineBuilder, MooreMachine, SourceAlphabet};
use crate::rng::Stream;

pub const REJECT: usize = 0;
pub const ACCEPT: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GrammarId(u8);

impl GrammarId {
    pub fn new(index: u8) -> Result<Self, EnvError> {
        if (1..=7).contains(&index) {
            Ok(GrammarId(index))
        } else {
            Err(EnvError::BadGrammar(index))
        }
    }

    pub fn index(&self) -> u8 {
        self.0
    }
}

pub fn parse_binary(s: &str) -> Result<Vec<u8>, EnvError> {
    s.chars()
        .map(|c| match c {
            '0' => Ok(0),
            '1' => Ok(1),
            other => Err(EnvError::NonBinarySymbol(other)),
        })
        .collect()
}

/// Exact membership, by the closed-form definition of each language.
pub fn membership(grammar: GrammarId, s: &[u8]) -> Result<bool, EnvError> {
    if let Some(&bad) = s.iter().find(|&&b| b > 1) {
        return Err(EnvError::NonBinarySymbol((b'0' + bad) as char));
    }
    let ones = s.iter().filter(|&&b| b == 1).count();
    let zeros = s.len() - ones;
    Ok(match grammar.0 {
        // 1*
        1 => s.iter().all(|&b| b == 1),
        // (10)*
        2 => s.len() % 2 == 0 && s.chunks(2).all(|c| c == [1, 0]),
        // no odd run of 0s immediately after an odd run of 1s
        3 => {
            let runs = runs_of(s);
            !runs
                .windows(2)
                .any(|w| w[0].0 == 1 && w[0].1 % 2 == 1 && w[1].0 == 0 && w[1].1 % 2 == 1)
        }
        // no "000" substring
        4 => !s.windows(3).any(|w| w == [0, 0, 0]),
        // both #0 and #1 even
        5 => zeros % 2 == 0 && ones % 2 == 0,
        // #1 - #0 divisible by 3
        6 => (ones as i64 - zeros as i64).rem_euclid(3) == 0,
        // 0*1*0*1*
        7 => {
            let runs = runs_of(s);
            match runs.first() {
                None => true,
                Some(&(0, _)) => runs.len() <= 4,
                Some(_) => runs.len() <= 3,
            }
        }
        _ => unreachable!("GrammarId is validated"),
    })
}

fn runs_of(s: &[u8]) -> Vec<(u8, usize)> {
    let mut runs: Vec<(u8, usize)> = Vec::new();
    for &b in s {
        match runs.last_mut() {
            Some((sym, len)) if *sym == b => *len += 1,
            _ => runs.push((b, 1)),
        }
    }
    runs
}

/// Hand-transcribed minimal DFA for a grammar.
#[derive(Debug, Clone)]
pub struct ReferenceDfa {
    pub initial: usize,
    pub accepting: Vec<bool>,
    /// next[state][symbol]
    pub next: Vec<[usize; 2]>,
}

impl ReferenceDfa {
    pub fn accepts(&self, s: &[u8]) -> bool {
        let mut q = self.initial;
        for &b in s {
            q = self.next[q][b as usize];
        }
        self.accepting[q]
    }

    /// Accept/reject of every prefix, including the empty one.
    pub fn prefix_labels(&self, s: &[u8]) -> Vec<bool> {
        let mut out = Vec::with_capacity(s.len() + 1);
        let mut q = self.initial;
        out.push(self.accepting[q]);
        for &b in s {
            q = self.next[q][b as usize];
            out.push(self.accepting[q]);
        }
        out
    }
}

pub fn reference_dfa(grammar: GrammarId) -> ReferenceDfa {
    // Transcribed state-by-state; tests cross-check against `membership` on
    // every string up to length 14.
    let (accepting, next): (Vec<bool>, Vec<[usize; 2]>) = match grammar.0 {
        1 => (vec![true, false], vec![[1, 0], [1, 1]]),
        2 => (vec![true, false, false], vec![[2, 1], [0, 2], [2, 2]]),
        // q0: safe (even trailing 1-run), q1: odd 1-run, q2: odd 0-run after
        // odd 1-run, q3: even 0-run after odd 1-run, q4: dead.
        3 => (
            vec![true, true, false, true, false],
            vec![[0, 1], [2, 0], [3, 4], [2, 1], [4, 4]],
        ),
        // trailing-zero count 0/1/2, then dead.
        4 => (
            vec![true, true, true, false],
            vec![[1, 0], [2, 0], [3, 0], [3, 3]],
        ),
        // (parity of #0, parity of #1): 0=(e,e) 1=(o,e) 2=(e,o) 3=(o,o).
        5 => (
            vec![true, false, false, false],
            vec![[1, 2], [0, 3], [3, 0], [2, 1]],
        ),
        // (#1 - #0) mod 3.
        6 => (vec![true, false, false], vec![[2, 1], [0, 2], [1, 0]]),
        // phases of 0*1*0*1*, then dead.
        7 => (
            vec![true, true, true, true, false],
            vec![[0, 1], [2, 1], [2, 3], [4, 3], [4, 4]],
        ),
        _ => unreachable!("GrammarId is validated"),
    };
    ReferenceDfa { initial: 0, accepting, next }
}

/// The minimal Moore machine deciding the grammar, states labeled
/// accept/reject, observation alphabet {0, 1}.
pub fn ground_truth_machine(grammar: GrammarId) -> MooreMachine {
    let dfa = reference_dfa(grammar);
    let n = dfa.accepting.len();
    let built = MachineBuilder {
        initial: dfa.initial,
        labels: dfa.accepting.iter().map(|&a| if a { ACCEPT } else { REJECT }).collect(),
        label_witnessed: vec![true; n],
        transitions: dfa
            .next
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&t| Some(Cell { target: t, witnessed: true }))
                    .collect()
            })
            .collect(),
        state_names: (0..n).map(|i| format!("q{i}")).collect(),
        obs_names: vec!["0".into(), "1".into()],
        action_names: vec!["reject".into(), "accept".into()],
        source: SourceAlphabet::Binary,
        obs_map: vec![Some(0), Some(1)],
        state_codes: None,
    }
    .build()
    .expect("reference DFAs are well-formed");
    minimize(&built).machine
}

/// Number of strings of each length from each DFA state that end accepting.
/// counts[len][state]; lengths up to 127 fit in u128.
fn accept_counts(dfa: &ReferenceDfa, max_len: usize) -> Vec<Vec<u128>> {
    let n = dfa.accepting.len();
    let mut counts = vec![vec![0u128; n]; max_len + 1];
    for s in 0..n {
        counts[0][s] = dfa.accepting[s] as u128;
    }
    for len in 1..=max_len {
        for s in 0..n {
            counts[len][s] = counts[len - 1][dfa.next[s][0]] + counts[len - 1][dfa.next[s][1]];
        }
    }
    counts
}

fn below_u128(stream: &mut Stream, n: u128) -> u128 {
    debug_assert!(n > 0);
    let zone = u128::MAX - (u128::MAX % n);
    loop {
        let v = ((stream.next_u64() as u128) << 64) | stream.next_u64() as u128;
        if v < zone {
            return v % n;
        }
    }
}

/// Uniformly random string with the requested label, its length uniform over
/// the feasible lengths in [lo, hi].
pub fn sample(
    grammar: GrammarId,
    accept: bool,
    lo: usize,
    hi: usize,
    stream: &mut Stream,
) -> Result<Vec<u8>, EnvError> {
    assert!(lo <= hi, "empty length range");
    let dfa = reference_dfa(grammar);
    let counts = accept_counts(&dfa, hi);
    let label_count = |state: usize, len: usize| -> u128 {
        if accept {
            counts[len][state]
        } else {
            (1u128 << len) - counts[len][state]
        }
    };
    if !(lo..=hi).any(|len| label_count(dfa.initial, len) > 0) {
        return Err(EnvError::NoFeasibleLength {
            grammar: grammar.0,
            label: if accept { "accept" } else { "reject" },
            lo,
            hi,
        });
    }
    // Uniform over lengths, resampling lengths where the label is impossible
    // (e.g. odd-length accepts of (10)*).
    let len = loop {
        let len = stream.range_inclusive(lo, hi);
        if label_count(dfa.initial, len) > 0 {
            break len;
        }
    };
    let mut out = Vec::with_capacity(len);
    let mut state = dfa.initial;
    for remaining in (1..=len).rev() {
        let w0 = label_count(dfa.next[state][0], remaining - 1);
        let w1 = label_count(dfa.next[state][1], remaining - 1);
        debug_assert!(w0 + w1 > 0);
        let bit = if below_u128(stream, w0 + w1) < w0 { 0u8 } else { 1u8 };
        out.push(bit);
        state = dfa.next[state][bit as usize];
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct TomitaEnv {
    pub grammar: GrammarId,
    pub min_len: usize,
    pub max_len: usize,
}

impl TomitaEnv {
    pub fn new(grammar: u8, min_len: usize, max_len: usize) -> Result<Self, EnvError> {
        let grammar = GrammarId::new(grammar)?;
        if min_len == 0 || min_len > max_len {
            return Err(EnvError::InvalidConfig(format!(
                "bad length range [{min_len}, {max_len}]"
            )));
        }
        // Both labels must be attainable so sampling stays balanced.
        let dfa = reference_dfa(grammar);
        let counts = accept_counts(&dfa, max_len);
        let any_accept = (min_len..=max_len).any(|l| counts[l][dfa.initial] > 0);
        let any_reject = (min_len..=max_len).any(|l| (1u128 << l) > counts[l][dfa.initial]);
        if !any_accept {
            return Err(EnvError::NoFeasibleLength {
                grammar: grammar.0,
                label: "accept",
                lo: min_len,
                hi: max_len,
            });
        }
        if !any_reject {
            return Err(EnvError::NoFeasibleLength {
                grammar: grammar.0,
                label: "reject",
                lo: min_len,
                hi: max_len,
            });
        }
        Ok(TomitaEnv { grammar, min_len, max_len })
    }

    pub fn encode_symbol(symbol: u8) -> Vec<f64> {
        match symbol {
            0 => vec![1.0, 0.0],
            _ => vec![0.0, 1.0],
        }
    }

    /// One episode: a fair coin picks the label, then a string of that label.
    /// The teacher's action at each step is the membership of the prefix
    /// consumed so far.
    pub fn sample_episode(&self, stream: &mut Stream) -> EnvEpisode {
        let accept = stream.bernoulli(0.5);
        let s = sample(self.grammar, accept, self.min_len, self.max_len, stream)
            .expect("TomitaEnv::new verified both labels are feasible");
        self.episode_for(&s)
    }

    pub fn episode_for(&self, s: &[u8]) -> EnvEpisode {
        let dfa = reference_dfa(self.grammar);
        let prefix = dfa.prefix_labels(s);
        EnvEpisode {
            raw: s.iter().map(|&b| RawObs::Symbol(b)).collect(),
            encoded: s.iter().map(|&b| Self::encode_symbol(b)).collect(),
            teacher: prefix[1..]
                .iter()
                .map(|&a| if a { ACCEPT } else { REJECT })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamSeeder;

    fn g(i: u8) -> GrammarId {
        GrammarId::new(i).unwrap()
    }

    #[test]
    fn footnote_examples() {
        assert!(membership(g(1), &parse_binary("111").unwrap()).unwrap());
        assert!(!membership(g(1), &parse_binary("10").unwrap()).unwrap());
        assert!(membership(g(5), &parse_binary("1100").unwrap()).unwrap());
        assert!(!membership(g(4), &parse_binary("1000").unwrap()).unwrap());
        assert!(membership(g(2), &parse_binary("1010").unwrap()).unwrap());
        assert!(!membership(g(7), &parse_binary("10101").unwrap()).unwrap());
        assert!(membership(g(3), &parse_binary("110").unwrap()).unwrap());
        assert!(!membership(g(3), &parse_binary("10").unwrap()).unwrap());
    }

    #[test]
    fn non_binary_symbols_are_rejected() {
        assert!(parse_binary("10x1").is_err());
        assert!(membership(g(1), &[0, 2]).is_err());
    }

    #[test]
    fn predicates_and_reference_dfas_agree_exhaustively() {
        // Every string of length <= 14, all grammars.
        for idx in 1..=7u8 {
            let grammar = g(idx);
            let dfa = reference_dfa(grammar);
            for len in 0..=14usize {
                for bits in 0..(1u32 << len) {
                    let s: Vec<u8> =
                        (0..len).map(|i| ((bits >> i) & 1) as u8).collect();
                    assert_eq!(
                        dfa.accepts(&s),
                        membership(grammar, &s).unwrap(),
                        "grammar {idx}, string {s:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn ground_truth_machines_have_the_known_sizes() {
        let expected = [2, 3, 5, 4, 4, 3, 5];
        for idx in 1..=7u8 {
            let m = ground_truth_machine(g(idx));
            assert_eq!(m.state_count(), expected[idx as usize - 1], "grammar {idx}");
            assert_eq!(m.obs_count(), 2, "grammar {idx}");
        }
    }

    #[test]
    fn ground_truth_machines_decide_like_the_predicates() {
        for idx in 1..=7u8 {
            let grammar = g(idx);
            let machine = ground_truth_machine(grammar);
            for len in 0..=12usize {
                for bits in 0..(1u32 << len) {
                    let s: Vec<u8> = (0..len).map(|i| ((bits >> i) & 1) as u8).collect();
                    let obs: Vec<usize> = s
                        .iter()
                        .map(|&b| machine.obs_for_source(b as usize).unwrap())
                        .collect();
                    let out = machine.run(&obs).unwrap();
                    let decided = *out.last().unwrap() == ACCEPT;
                    assert_eq!(
                        decided,
                        membership(grammar, &s).unwrap(),
                        "grammar {idx}, string {s:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn samples_always_carry_the_requested_label() {
        let seeder = StreamSeeder::new(5);
        let mut stream = seeder.stream("samples");
        for idx in 1..=7u8 {
            let grammar = g(idx);
            for _ in 0..500 {
                let s = sample(grammar, true, 1, 50, &mut stream).unwrap();
                assert!(membership(grammar, &s).unwrap(), "grammar {idx}: {s:?}");
                let r = sample(grammar, false, 1, 50, &mut stream).unwrap();
                assert!(!membership(grammar, &r).unwrap(), "grammar {idx}: {r:?}");
            }
        }
    }

    #[test]
    fn grammar_two_accepts_look_like_alternation() {
        let seeder = StreamSeeder::new(6);
        let mut stream = seeder.stream("g2");
        for _ in 0..50 {
            let s = sample(g(2), true, 1, 50, &mut stream).unwrap();
            assert!(s.len() % 2 == 0 && s.chunks(2).all(|c| c == [1, 0]), "{s:?}");
        }
    }

    #[test]
    fn infeasible_ranges_are_rejected() {
        // Grammar 5 accepts no odd-length string.
        let seeder = StreamSeeder::new(7);
        let mut stream = seeder.stream("bad");
        let err = sample(g(5), true, 1, 1, &mut stream).unwrap_err();
        assert!(matches!(err, EnvError::NoFeasibleLength { .. }));
        assert!(TomitaEnv::new(5, 1, 1).is_err());
    }

    #[test]
    fn sampled_lengths_are_uniform_over_feasible_lengths() {
        // Grammar 5, accepts: feasible lengths in [1, 10] are the even ones.
        let seeder = StreamSeeder::new(8);
        let mut stream = seeder.stream("lens");
        let mut counts = std::collections::BTreeMap::new();
        let n = 10_000usize;
        for _ in 0..n {
            let s = sample(g(5), true, 1, 10, &mut stream).unwrap();
            *counts.entry(s.len()).or_insert(0usize) += 1;
        }
        assert_eq!(counts.keys().copied().collect::<Vec<_>>(), vec![2, 4, 6, 8, 10]);
        let expected = n as f64 / 5.0;
        let sigma = (n as f64 * 0.2 * 0.8).sqrt();
        for (&len, &c) in &counts {
            assert!(
                (c as f64 - expected).abs() < 3.0 * sigma,
                "length {len} count {c} vs {expected}"
            );
        }
    }

    #[test]
    fn teacher_labels_are_prefix_memberships() {
        let env = TomitaEnv::new(4, 1, 50).unwrap();
        let ep = env.episode_for(&parse_binary("10011").unwrap());
        // Prefixes: 1, 10, 100, 1001, 10011 — all lack "000".
        assert_eq!(ep.teacher, vec![ACCEPT; 5]);
        let ep = env.episode_for(&parse_binary("1000").unwrap());
        assert_eq!(ep.teacher, vec![ACCEPT, ACCEPT, ACCEPT, REJECT]);
    }
}
