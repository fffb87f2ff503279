//! Small hand-written instances shared by unit tests, integration tests and
//! the CLI.

use crate::circuit::{Circuit, Kind};
use crate::egraph::{parse_egraph, EGraph};

/// The √/+ e-graph: A = {sqrt(B), plus(A, C)}, B = {2}, C = {0}, root A.
pub const E1: &str = r#"{
  "nodes": {
    "sqrt": { "op": "sqrt", "children": ["two"], "eclass": "A", "cost": 1 },
    "plus": { "op": "+", "children": ["sqrt", "zero"], "eclass": "A", "cost": 1 },
    "two": { "op": "2", "children": [], "eclass": "B", "cost": 1 },
    "zero": { "op": "0", "children": [], "eclass": "C", "cost": 1 }
  },
  "root_eclasses": ["A"]
}"#;

/// E1 without the sqrt branch: the only way to cover A is the cyclic
/// `plus(A, C)`.
pub const CYCLIC_ONLY: &str = r#"{
  "nodes": {
    "plus": { "op": "+", "children": ["plus", "zero"], "eclass": "A", "cost": 1 },
    "zero": { "op": "0", "children": [], "eclass": "C", "cost": 1 }
  },
  "root_eclasses": ["A"]
}"#;

pub fn e1() -> EGraph {
    parse_egraph(E1).expect("fixture parses")
}

pub fn cyclic_only() -> EGraph {
    parse_egraph(CYCLIC_ONLY).expect("fixture parses")
}

/// Class A holds a self-dependent node `loop(A)` and a leaf.
pub fn self_loop_egraph() -> EGraph {
    parse_egraph(
        r#"{
      "nodes": {
        "loop": { "op": "f", "children": ["loop"], "eclass": "A", "cost": 1 },
        "leaf": { "op": "a", "children": [], "eclass": "A", "cost": 5 }
      },
      "root_eclasses": ["A"]
    }"#,
    )
    .expect("fixture parses")
}

/// Root class R with two members: a cheap one whose only route goes through
/// a cycle back into R, and an expensive acyclic leaf.
pub fn cheap_cycle_egraph(cheap: f64, expensive: f64) -> EGraph {
    let text = format!(
        r#"{{
      "nodes": {{
        "r_cyc": {{ "op": "g", "children": ["m"], "eclass": "R", "cost": {cheap} }},
        "m": {{ "op": "h", "children": ["r_cyc"], "eclass": "M", "cost": 0 }},
        "r_leaf": {{ "op": "c", "children": [], "eclass": "R", "cost": {expensive} }}
      }},
      "root_eclasses": ["R"]
    }}"#
    );
    parse_egraph(&text).expect("fixture parses")
}

/// A 6-vertex graph of treewidth 2: two triangles sharing the edge 1-2,
/// with a pendant path 3-4-5 hanging off vertex 3.
pub fn width_two_graph_edges() -> Vec<(usize, usize)> {
    vec![(0, 1), (0, 2), (1, 2), (1, 3), (2, 3), (3, 4), (4, 5)]
}

/// An OR output fed by two AND gates, each guarded by its own input.
pub fn or_of_two(cost_a: f64, cost_b: f64) -> Circuit {
    let mut c = Circuit::new();
    let xa = c.add_input(cost_a);
    let xb = c.add_input(cost_b);
    let a = c.add_gate(Kind::And);
    let b = c.add_gate(Kind::And);
    let o = c.add_gate(Kind::Or);
    for (s, d) in [(xa, a), (xb, b), (a, o), (b, o)] {
        c.add_edge(s, d).expect("fixture edge");
    }
    c.set_output(o);
    c
}
