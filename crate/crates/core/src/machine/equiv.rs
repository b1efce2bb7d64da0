//! Machine equivalence by breadth-first product traversal.
//!
//! Both machines are driven over a shared "common" alphabet; the alignment
//! maps each common symbol to an observation id of each machine (several
//! common symbols may share one machine symbol after observation merging).
//! Behavior is compared on labels emitted after transitions, so the initial
//! states' own labels never count. For complete machines a traversal without
//! a depth cap is a full equivalence proof: the product has at most
//! `|A| * |B|` reachable pairs.

use super::{MachineError, MooreMachine};
use std::collections::{HashMap, VecDeque};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Equivalence {
    Equal,
    /// A shortest common-symbol sequence on which the emitted labels differ.
    Counterexample(Vec<usize>),
}

impl Equivalence {
    pub fn is_equal(&self) -> bool {
        matches!(self, Equivalence::Equal)
    }
}

/// Common symbol -> observation id, one map per machine.
#[derive(Debug, Clone)]
pub struct AlphabetAlignment {
    pub a_map: Vec<usize>,
    pub b_map: Vec<usize>,
}

pub fn same_alphabet_alignment(symbols: usize) -> AlphabetAlignment {
    AlphabetAlignment { a_map: (0..symbols).collect(), b_map: (0..symbols).collect() }
}

pub fn equivalent(
    a: &MooreMachine,
    b: &MooreMachine,
    align: &AlphabetAlignment,
    max_depth: Option<usize>,
) -> Result<Equivalence, MachineError> {
    if align.a_map.len() != align.b_map.len() {
        return Err(MachineError::UnalignableAlphabets(format!(
            "common alphabet sizes differ: {} vs {}",
            align.a_map.len(),
            align.b_map.len()
        )));
    }
    if align.a_map.is_empty() {
        return Err(MachineError::UnalignableAlphabets("empty common alphabet".into()));
    }
    for (&oa, &ob) in align.a_map.iter().zip(&align.b_map) {
        if oa >= a.obs_count() || ob >= b.obs_count() {
            return Err(MachineError::UnalignableAlphabets(format!(
                "alignment entry ({oa}, {ob}) out of range ({}, {})",
                a.obs_count(),
                b.obs_count()
            )));
        }
    }

    // Undefined cells behave as self-loops, matching minimization's
    // don't-care completion.
    let next = |m: &MooreMachine, s: usize, o: usize| -> usize {
        m.transitions[s][o].map(|c| c.target).unwrap_or(s)
    };

    let start = (a.initial, b.initial);
    let mut pred: HashMap<(usize, usize), ((usize, usize), usize)> = HashMap::new();
    let mut depth: HashMap<(usize, usize), usize> = HashMap::new();
    depth.insert(start, 0);
    let mut queue = VecDeque::new();
    queue.push_back(start);

    while let Some(pair) = queue.pop_front() {
        let d = depth[&pair];
        if let Some(cap) = max_depth {
            if d >= cap {
                continue;
            }
        }
        for sym in 0..align.a_map.len() {
            let ta = next(a, pair.0, align.a_map[sym]);
            let tb = next(b, pair.1, align.b_map[sym]);
            if a.labels[ta] != b.labels[tb] {
                // Reconstruct the shortest mismatching sequence.
                let mut seq = vec![sym];
                let mut cur = pair;
                while cur != start {
                    let (prev, s) = pred[&cur];
                    seq.push(s);
                    cur = prev;
                }
                seq.reverse();
                return Ok(Equivalence::Counterexample(seq));
            }
            let tp = (ta, tb);
            if !depth.contains_key(&tp) {
                depth.insert(tp, d + 1);
                pred.insert(tp, (pair, sym));
                queue.push_back(tp);
            }
        }
    }
    Ok(Equivalence::Equal)
}

#[cfg(test)]
mod tests {
    use super::super::testutil::machine;
    use super::*;

    #[test]
    fn machine_equals_itself() {
        let m = machine(0, &[(0, &[1, 0]), (1, &[0, 1])], 2);
        let align = same_alphabet_alignment(2);
        assert!(equivalent(&m, &m, &align, None).unwrap().is_equal());
    }

    #[test]
    fn differing_initial_labels_alone_do_not_distinguish() {
        let a = machine(0, &[(0, &[1]), (1, &[1])], 2);
        let b = machine(0, &[(1, &[1]), (1, &[1])], 2);
        let align = same_alphabet_alignment(1);
        assert!(equivalent(&a, &b, &align, None).unwrap().is_equal());
    }

    #[test]
    fn finds_shortest_counterexample() {
        // Same until the second step.
        let a = machine(0, &[(0, &[1]), (1, &[2]), (0, &[2])], 2);
        let b = machine(0, &[(0, &[1]), (1, &[2]), (1, &[2])], 2);
        let align = same_alphabet_alignment(1);
        match equivalent(&a, &b, &align, None).unwrap() {
            Equivalence::Counterexample(seq) => assert_eq!(seq.len(), 2),
            Equivalence::Equal => panic!("expected a counterexample"),
        }
    }

    #[test]
    fn depth_cap_can_hide_deep_differences() {
        let a = machine(0, &[(0, &[1]), (1, &[2]), (0, &[2])], 2);
        let b = machine(0, &[(0, &[1]), (1, &[2]), (1, &[2])], 2);
        let align = same_alphabet_alignment(1);
        assert!(equivalent(&a, &b, &align, Some(1)).unwrap().is_equal());
    }

    #[test]
    fn mismatched_alignment_is_rejected() {
        let m = machine(0, &[(0, &[1, 0]), (1, &[0, 1])], 2);
        let align = AlphabetAlignment { a_map: vec![0, 1], b_map: vec![0] };
        assert!(equivalent(&m, &m, &align, None).is_err());
    }
}
