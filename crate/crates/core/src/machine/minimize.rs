//! Moore machine minimization.
//!
//! The pass alternates two reductions until neither changes the machine:
//!
//! 1. state minimization by partition refinement, starting from the partition
//!    induced by action labels;
//! 2. observation merging, collapsing symbols whose transition columns are
//!    identical across all states.
//!
//! Unwitnessed don't-care cells are first completed as self-loops, which is
//! sound for every witnessed behavior and keeps the problem tractable (exact
//! minimization of incompletely specified machines is not attempted). An
//! initial state whose label was never witnessed and that has no incoming
//! edges is allowed to join any block with matching transition behavior,
//! since its label is never emitted during an episode.
//!
//! States of the result are renamed in breadth-first order from the initial
//! state so equal machines serialize identically.

use super::{Cell, MooreMachine, Provenance};
use std::collections::BTreeMap;

#[derive(Debug, Clone)]
pub struct Minimized {
    pub machine: MooreMachine,
    /// Input state -> output state; `None` for unreachable inputs that were
    /// dropped.
    pub state_map: Vec<Option<usize>>,
    /// Input observation -> output observation.
    pub obs_map: Vec<usize>,
}

pub fn minimize(input: &MooreMachine) -> Minimized {
    // Restrict to the reachable part and complete don't-cares.
    let reachable = input.reachable();
    let mut old_to_new = vec![None; input.state_count()];
    let mut kept = Vec::new();
    for (s, &r) in reachable.iter().enumerate() {
        if r {
            old_to_new[s] = Some(kept.len());
            kept.push(s);
        }
    }
    let mut m = MooreMachine {
        initial: old_to_new[input.initial].expect("initial is reachable"),
        labels: kept.iter().map(|&s| input.labels[s]).collect(),
        label_witnessed: kept.iter().map(|&s| input.label_witnessed[s]).collect(),
        transitions: kept
            .iter()
            .map(|&s| {
                input.transitions[s]
                    .iter()
                    .map(|c| {
                        c.map(|c| Cell {
                            target: old_to_new[c.target].expect("target of reachable state"),
                            witnessed: c.witnessed,
                        })
                    })
                    .collect()
            })
            .collect(),
        state_names: kept.iter().map(|&s| input.state_names[s].clone()).collect(),
        obs_names: input.obs_names.clone(),
        action_names: input.action_names.clone(),
        provenance: input.provenance.clone(),
    };
    m.complete_with_self_loops();

    let mut state_map: Vec<Option<usize>> = old_to_new;
    let mut obs_map: Vec<usize> = (0..input.obs_count()).collect();

    loop {
        let (next, smap) = refine_states(&m);
        let states_changed = next.state_count() != m.state_count();
        m = next;
        compose_states(&mut state_map, &smap);

        let (next, omap) = merge_observations(&m);
        let obs_changed = next.obs_count() != m.obs_count();
        m = next;
        compose_obs(&mut obs_map, &omap);

        if !states_changed && !obs_changed {
            break;
        }
    }

    let (mut m, bfs_map) = bfs_rename(&m);
    compose_states(&mut state_map, &bfs_map.iter().map(|&x| Some(x)).collect::<Vec<_>>());

    // Compose the provenance dictionaries through everything we just did.
    m.provenance = Provenance {
        source: input.provenance.source.clone(),
        obs_map: input
            .provenance
            .obs_map
            .iter()
            .map(|o| o.map(|o| obs_map[o]))
            .collect(),
        state_codes: input.provenance.state_codes.clone(),
        state_map: input.provenance.state_map.as_ref().map(|orig| {
            orig.iter()
                .map(|&s| state_map[s].expect("originally extracted states are reachable"))
                .collect()
        }),
    };

    Minimized { machine: m, state_map, obs_map }
}

fn compose_states(total: &mut [Option<usize>], step: &[Option<usize>]) {
    for slot in total.iter_mut() {
        *slot = slot.and_then(|s| step[s]);
    }
}

fn compose_obs(total: &mut [usize], step: &[usize]) {
    for slot in total.iter_mut() {
        *slot = step[*slot];
    }
}

/// Partition refinement over a complete machine. Returns the quotient and the
/// state map onto it.
fn refine_states(m: &MooreMachine) -> (MooreMachine, Vec<Option<usize>>) {
    let n = m.state_count();
    let q = m.obs_count();
    let wildcard = m.initial_label_is_dont_care().then_some(m.initial);

    // Initial partition by label; a don't-care initial state sits in a block
    // of its own so its label never splits anyone else.
    let mut block = vec![0usize; n];
    {
        let mut ids: BTreeMap<(bool, usize), usize> = BTreeMap::new();
        for s in 0..n {
            let key = if wildcard == Some(s) { (true, 0) } else { (false, m.labels[s]) };
            let next = ids.len();
            block[s] = *ids.entry(key).or_insert(next);
        }
    }

    loop {
        // Group states by (current block, successor block per observation).
        let mut ids: BTreeMap<(usize, Vec<usize>), usize> = BTreeMap::new();
        let mut next_block = vec![0usize; n];
        for s in 0..n {
            let sig: Vec<usize> = (0..q)
                .map(|o| block[m.transitions[s][o].expect("complete").target])
                .collect();
            let fresh = ids.len();
            next_block[s] = *ids.entry((block[s], sig)).or_insert(fresh);
        }
        // The signature key contains the old block, so the new partition
        // refines the old one; equal block counts mean nothing split.
        let old_count = block.iter().collect::<std::collections::BTreeSet<_>>().len();
        let stable = ids.len() == old_count;
        block = next_block;
        if stable {
            break;
        }
    }

    // A don't-care initial state joins any block with identical transition
    // behavior; nothing references its own block (it has no incoming edges).
    if let Some(init) = wildcard {
        let sig: Vec<usize> = (0..q)
            .map(|o| block[m.transitions[init][o].expect("complete").target])
            .collect();
        let candidate = (0..n)
            .filter(|&s| s != init)
            .find(|&s| {
                (0..q).all(|o| block[m.transitions[s][o].expect("complete").target] == sig[o])
            });
        if let Some(s) = candidate {
            block[init] = block[s];
        }
    }

    // Renumber blocks by smallest member and build the quotient.
    let mut order: BTreeMap<usize, usize> = BTreeMap::new(); // block id -> new id
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for s in 0..n {
        members.entry(block[s]).or_default().push(s);
    }
    let mut blocks_sorted: Vec<(usize, Vec<usize>)> = members.into_iter().collect();
    blocks_sorted.sort_by_key(|(_, ms)| ms[0]);
    for (new_id, (old_block, _)) in blocks_sorted.iter().enumerate() {
        order.insert(*old_block, new_id);
    }

    let k = blocks_sorted.len();
    let mut labels = vec![0usize; k];
    let mut label_witnessed = vec![false; k];
    let mut names = vec![String::new(); k];
    let mut transitions: Vec<Vec<Option<Cell>>> = vec![vec![None; q]; k];
    for (new_id, (_, ms)) in blocks_sorted.iter().enumerate() {
        // Prefer a witnessed label; a wildcard initial contributes its label
        // only if it stayed alone.
        let labeled = ms
            .iter()
            .find(|&&s| m.label_witnessed[s])
            .copied()
            .unwrap_or(ms[0]);
        labels[new_id] = m.labels[labeled];
        label_witnessed[new_id] = m.label_witnessed[labeled];
        names[new_id] = m.state_names[ms[0]].clone();
        for o in 0..q {
            let rep = m.transitions[ms[0]][o].expect("complete");
            let witnessed = ms
                .iter()
                .any(|&s| m.transitions[s][o].expect("complete").witnessed);
            transitions[new_id][o] = Some(Cell {
                target: order[&block[rep.target]],
                witnessed,
            });
        }
    }

    let map: Vec<Option<usize>> = (0..n).map(|s| Some(order[&block[s]])).collect();
    let out = MooreMachine {
        initial: order[&block[m.initial]],
        labels,
        label_witnessed,
        transitions,
        state_names: names,
        obs_names: m.obs_names.clone(),
        action_names: m.action_names.clone(),
        provenance: m.provenance.clone(),
    };
    (out, map)
}

/// Merges observation symbols with identical transition columns.
fn merge_observations(m: &MooreMachine) -> (MooreMachine, Vec<usize>) {
    let n = m.state_count();
    let q = m.obs_count();
    let mut groups: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    let mut map = vec![0usize; q];
    let mut group_members: Vec<Vec<usize>> = Vec::new();
    for o in 0..q {
        let column: Vec<usize> = (0..n)
            .map(|s| m.transitions[s][o].expect("complete").target)
            .collect();
        let fresh = groups.len();
        let id = *groups.entry(column).or_insert(fresh);
        map[o] = id;
        if id == group_members.len() {
            group_members.push(Vec::new());
        }
        group_members[id].push(o);
    }
    let merged = group_members.len();
    let obs_names: Vec<String> = group_members
        .iter()
        .map(|ms| {
            if ms.len() == q && q > 1 {
                "*".to_string()
            } else {
                ms.iter()
                    .map(|&o| m.obs_names[o].as_str())
                    .collect::<Vec<_>>()
                    .join("|")
            }
        })
        .collect();
    let transitions: Vec<Vec<Option<Cell>>> = (0..n)
        .map(|s| {
            group_members
                .iter()
                .map(|ms| {
                    let target = m.transitions[s][ms[0]].expect("complete").target;
                    let witnessed = ms
                        .iter()
                        .any(|&o| m.transitions[s][o].expect("complete").witnessed);
                    Some(Cell { target, witnessed })
                })
                .collect()
        })
        .collect();
    let out = MooreMachine {
        initial: m.initial,
        labels: m.labels.clone(),
        label_witnessed: m.label_witnessed.clone(),
        transitions,
        state_names: m.state_names.clone(),
        obs_names,
        action_names: m.action_names.clone(),
        provenance: m.provenance.clone(),
    };
    debug_assert!(merged <= q);
    (out, map)
}

/// Renames states in breadth-first discovery order from the initial state.
fn bfs_rename(m: &MooreMachine) -> (MooreMachine, Vec<usize>) {
    let n = m.state_count();
    let q = m.obs_count();
    let mut new_id = vec![usize::MAX; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = std::collections::VecDeque::new();
    new_id[m.initial] = 0;
    order.push(m.initial);
    queue.push_back(m.initial);
    while let Some(s) = queue.pop_front() {
        for o in 0..q {
            let t = m.transitions[s][o].expect("complete").target;
            if new_id[t] == usize::MAX {
                new_id[t] = order.len();
                order.push(t);
                queue.push_back(t);
            }
        }
    }
    assert_eq!(order.len(), n, "minimized machine must be fully reachable");

    let out = MooreMachine {
        initial: 0,
        labels: order.iter().map(|&s| m.labels[s]).collect(),
        label_witnessed: order.iter().map(|&s| m.label_witnessed[s]).collect(),
        transitions: order
            .iter()
            .map(|&s| {
                (0..q)
                    .map(|o| {
                        m.transitions[s][o].map(|c| Cell {
                            target: new_id[c.target],
                            witnessed: c.witnessed,
                        })
                    })
                    .collect()
            })
            .collect(),
        state_names: (0..n).map(|i| format!("s{i}")).collect(),
        obs_names: m.obs_names.clone(),
        action_names: m.action_names.clone(),
        provenance: m.provenance.clone(),
    };
    (out, new_id)
}

#[cfg(test)]
mod tests {
    use super::super::testutil::machine;
    use super::*;

    #[test]
    fn merges_duplicate_states() {
        // Two copies of a 2-state toggler.
        let m = machine(0, &[(0, &[1]), (1, &[2]), (0, &[3]), (1, &[0])], 2);
        let min = minimize(&m);
        assert_eq!(min.machine.state_count(), 2);
        assert_eq!(min.state_map[0], min.state_map[2]);
        assert_eq!(min.state_map[1], min.state_map[3]);
    }

    #[test]
    fn merges_identical_observation_columns() {
        // Both observations do the same thing everywhere.
        let m = machine(0, &[(0, &[1, 1]), (1, &[0, 0])], 2);
        let min = minimize(&m);
        assert_eq!(min.machine.obs_count(), 1);
        assert_eq!(min.machine.obs_names[0], "*");
        assert_eq!(min.obs_map, vec![0, 0]);
    }

    #[test]
    fn is_idempotent() {
        let m = machine(
            0,
            &[(0, &[1, 2]), (1, &[2, 0]), (0, &[1, 2]), (1, &[0, 0])],
            2,
        );
        let once = minimize(&m);
        let twice = minimize(&once.machine);
        assert_eq!(once.machine, twice.machine);
    }

    #[test]
    fn never_increases_sizes() {
        let m = machine(0, &[(0, &[1, 0]), (1, &[0, 1])], 2);
        let min = minimize(&m);
        assert!(min.machine.state_count() <= m.state_count());
        assert!(min.machine.obs_count() <= m.obs_count());
    }

    #[test]
    fn dont_care_initial_folds_into_matching_state() {
        // s0 is a pre-observation state with an imputed label and no incoming
        // edges; its transitions match everyone's, so it joins an existing
        // block instead of surviving as an extra state.
        let mut m = machine(0, &[(0, &[1, 2]), (1, &[1, 2]), (0, &[1, 2])], 2);
        m.label_witnessed[0] = false;
        let min = minimize(&m);
        assert_eq!(min.machine.state_count(), 2);
    }

    #[test]
    fn witnessed_initial_label_is_respected() {
        // Same shape, but the initial label was actually observed, so it
        // cannot fold into a state with a different label.
        let m = machine(0, &[(0, &[1]), (1, &[1])], 2);
        let min = minimize(&m);
        assert_eq!(min.machine.state_count(), 2);
    }
}
