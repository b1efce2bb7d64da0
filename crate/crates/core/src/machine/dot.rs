//! Graphviz DOT export.

use super::MooreMachine;
use std::fmt::Write;

/// Renders the machine as a DOT digraph. States are labeled with their action,
/// edges with their (possibly merged) observation symbol, and the initial
/// state is marked with an unlabeled entry arrow.
pub fn to_dot(m: &MooreMachine) -> String {
    let mut out = String::new();
    out.push_str("digraph moore {\n");
    out.push_str("  rankdir=LR;\n");
    out.push_str("  __start [shape=point, label=\"\"];\n");
    let _ = writeln!(out, "  __start -> {};", node(m, m.initial));
    for s in 0..m.state_count() {
        let _ = writeln!(
            out,
            "  {} [label=\"{} / {}\"];",
            node(m, s),
            escape(&m.state_names[s]),
            escape(&m.action_names[m.labels[s]])
        );
    }
    for s in 0..m.state_count() {
        for (o, cell) in m.transitions[s].iter().enumerate() {
            if let Some(cell) = cell {
                let _ = writeln!(
                    out,
                    "  {} -> {} [label=\"{}\"];",
                    node(m, s),
                    node(m, cell.target),
                    escape(&m.obs_names[o])
                );
            }
        }
    }
    out.push_str("}\n");
    out
}

fn node(m: &MooreMachine, s: usize) -> String {
    // Node ids must be DOT identifiers; state names go in labels.
    let _ = m;
    format!("n{s}")
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}
