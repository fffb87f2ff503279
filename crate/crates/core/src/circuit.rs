//! Weighted cyclic monotone circuits, their evaluation semantics, and the
//! translation from e-graphs.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::egraph::{ClassIdx, EGraph, Extraction, NodeIdx};

/// Dense vertex index.
pub type Vertex = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Input,
    And,
    Or,
}

impl Kind {
    pub fn is_gate(self) -> bool {
        self != Kind::Input
    }

    /// Gate semantics on the number of true in-neighbours out of `total`.
    pub fn fires(self, true_in: usize, total: usize) -> bool {
        match self {
            Kind::And => true_in == total,
            Kind::Or => true_in > 0,
            Kind::Input => false,
        }
    }
}

#[derive(Debug, Error)]
pub enum CircuitError {
    #[error("malformed circuit JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("vertex {0} is out of range")]
    OutOfRange(usize),
    #[error("duplicate vertex id {0}")]
    DuplicateId(usize),
    #[error("unknown vertex id {0}")]
    UnknownId(usize),
    #[error("edge {0} -> {1} enters an input vertex")]
    EdgeIntoInput(usize, usize),
    #[error("vertex {id} has invalid cost {cost}")]
    BadCost { id: usize, cost: f64 },
    #[error("classes {class}: more than one true AND gate")]
    AmbiguousChoice { class: String },
}

/// A directed graph of AND/OR gates and cost-bearing inputs with designated
/// outputs. Parallel edges are never stored.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Circuit {
    kinds: Vec<Kind>,
    costs: Vec<f64>,
    ins: Vec<Vec<Vertex>>,
    outs: Vec<Vec<Vertex>>,
    outputs: BTreeSet<Vertex>,
    num_edges: usize,
}

impl Circuit {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a vertex. Gates always get cost 0.
    pub fn add_vertex(&mut self, kind: Kind, cost: f64) -> Vertex {
        let v = self.kinds.len();
        self.kinds.push(kind);
        self.costs.push(if kind == Kind::Input { cost } else { 0.0 });
        self.ins.push(Vec::new());
        self.outs.push(Vec::new());
        v
    }

    pub fn add_input(&mut self, cost: f64) -> Vertex {
        self.add_vertex(Kind::Input, cost)
    }

    pub fn add_gate(&mut self, kind: Kind) -> Vertex {
        assert!(kind.is_gate());
        self.add_vertex(kind, 0.0)
    }

    /// Adds `src -> dst`; returns false if the edge was already present.
    pub fn add_edge(&mut self, src: Vertex, dst: Vertex) -> Result<bool, CircuitError> {
        let n = self.kinds.len();
        if src >= n {
            return Err(CircuitError::OutOfRange(src));
        }
        if dst >= n {
            return Err(CircuitError::OutOfRange(dst));
        }
        if self.kinds[dst] == Kind::Input {
            return Err(CircuitError::EdgeIntoInput(src, dst));
        }
        if self.outs[src].contains(&dst) {
            return Ok(false);
        }
        self.outs[src].push(dst);
        self.ins[dst].push(src);
        self.num_edges += 1;
        Ok(true)
    }

    pub fn set_output(&mut self, v: Vertex) {
        assert!(v < self.kinds.len());
        self.outputs.insert(v);
    }

    pub fn clear_outputs(&mut self) {
        self.outputs.clear();
    }

    pub fn num_vertices(&self) -> usize {
        self.kinds.len()
    }

    pub fn num_edges(&self) -> usize {
        self.num_edges
    }

    pub fn kind(&self, v: Vertex) -> Kind {
        self.kinds[v]
    }

    pub fn cost(&self, v: Vertex) -> f64 {
        self.costs[v]
    }

    pub fn ins(&self, v: Vertex) -> &[Vertex] {
        &self.ins[v]
    }

    pub fn outs(&self, v: Vertex) -> &[Vertex] {
        &self.outs[v]
    }

    pub fn outputs(&self) -> impl Iterator<Item = Vertex> + '_ {
        self.outputs.iter().copied()
    }

    pub fn num_outputs(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_output(&self, v: Vertex) -> bool {
        self.outputs.contains(&v)
    }

    pub fn inputs(&self) -> impl Iterator<Item = Vertex> + '_ {
        (0..self.num_vertices()).filter(|&v| self.kinds[v] == Kind::Input)
    }

    pub fn num_inputs(&self) -> usize {
        self.kinds.iter().filter(|k| **k == Kind::Input).count()
    }

    pub fn edges(&self) -> impl Iterator<Item = (Vertex, Vertex)> + '_ {
        self.outs
            .iter()
            .enumerate()
            .flat_map(|(s, ds)| ds.iter().map(move |&d| (s, d)))
    }

    /// Checks the structural invariants; returns a description of the first
    /// violation found.
    pub fn check_well_formed(&self) -> Result<(), String> {
        let n = self.num_vertices();
        let mut count = 0;
        for v in 0..n {
            if self.kinds[v] == Kind::Input && !self.ins[v].is_empty() {
                return Err(format!("input {v} has in-edges"));
            }
            if !(self.costs[v].is_finite() && self.costs[v] >= 0.0) {
                return Err(format!("vertex {v} has cost {}", self.costs[v]));
            }
            let mut seen = BTreeSet::new();
            for &d in &self.outs[v] {
                if d >= n {
                    return Err(format!("edge {v} -> {d} out of range"));
                }
                if !seen.insert(d) {
                    return Err(format!("parallel edge {v} -> {d}"));
                }
                if !self.ins[d].contains(&v) {
                    return Err(format!("edge {v} -> {d} missing from in-list"));
                }
                count += 1;
            }
            for &s in &self.ins[v] {
                if s >= n || !self.outs[s].contains(&v) {
                    return Err(format!("in-edge {s} -> {v} missing from out-list"));
                }
            }
        }
        if count != self.num_edges {
            return Err(format!("edge count {} != {}", self.num_edges, count));
        }
        if let Some(&o) = self.outputs.iter().find(|&&o| o >= n) {
            return Err(format!("output {o} out of range"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        let doc = CircuitDoc {
            vertices: (0..self.num_vertices())
                .map(|v| VertexDoc {
                    id: v,
                    kind: self.kinds[v],
                    cost: self.costs[v],
                })
                .collect(),
            edges: self.edges().collect(),
            outputs: self.outputs().collect(),
        };
        serde_json::to_value(doc).expect("circuit serializes")
    }

    /// Parses the circuit JSON interchange format. Vertex ids may be any
    /// distinct nonnegative integers; they are renumbered densely in order of
    /// appearance.
    pub fn from_json_str(text: &str) -> Result<Circuit, CircuitError> {
        let doc: CircuitDoc = serde_json::from_str(text)?;
        let mut dense = std::collections::HashMap::new();
        let mut c = Circuit::new();
        for vd in &doc.vertices {
            if !(vd.cost.is_finite() && vd.cost >= 0.0) || (vd.kind.is_gate() && vd.cost != 0.0) {
                return Err(CircuitError::BadCost {
                    id: vd.id,
                    cost: vd.cost,
                });
            }
            let v = c.add_vertex(vd.kind, vd.cost);
            if dense.insert(vd.id, v).is_some() {
                return Err(CircuitError::DuplicateId(vd.id));
            }
        }
        let lookup = |id: usize| dense.get(&id).copied().ok_or(CircuitError::UnknownId(id));
        for &(s, d) in &doc.edges {
            c.add_edge(lookup(s)?, lookup(d)?)?;
        }
        for &o in &doc.outputs {
            c.set_output(lookup(o)?);
        }
        Ok(c)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct VertexDoc {
    id: usize,
    kind: Kind,
    #[serde(default)]
    cost: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct CircuitDoc {
    vertices: Vec<VertexDoc>,
    edges: Vec<(usize, usize)>,
    outputs: Vec<usize>,
}

/// A total 0/1 assignment to the vertices of a circuit.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Evaluation(pub Vec<bool>);

impl Evaluation {
    pub fn zeros(n: usize) -> Self {
        Evaluation(vec![false; n])
    }

    pub fn from_true_set(n: usize, true_set: impl IntoIterator<Item = Vertex>) -> Self {
        let mut e = Self::zeros(n);
        for v in true_set {
            e.0[v] = true;
        }
        e
    }

    pub fn get(&self, v: Vertex) -> bool {
        self.0[v]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn true_vertices(&self) -> Vec<Vertex> {
        (0..self.0.len()).filter(|&v| self.0[v]).collect()
    }

    /// Sum of the costs of the true inputs.
    pub fn cost(&self, c: &Circuit) -> f64 {
        c.inputs().filter(|&v| self.0[v]).map(|v| c.cost(v)).sum()
    }
}

pub fn is_valid_evaluation(c: &Circuit, a: &Evaluation) -> bool {
    if a.len() != c.num_vertices() {
        return false;
    }
    (0..c.num_vertices()).all(|v| {
        let k = c.kind(v);
        if k == Kind::Input {
            return true;
        }
        let t = c.ins(v).iter().filter(|&&u| a.get(u)).count();
        k.fires(t, c.ins(v).len()) == a.get(v)
    })
}

pub fn is_satisfying(c: &Circuit, a: &Evaluation) -> bool {
    c.outputs().all(|o| a.get(o))
}

/// True iff the subgraph induced by the true vertices has no directed cycle
/// (a self-loop on a true vertex counts as a cycle).
pub fn is_acyclic_evaluation(c: &Circuit, a: &Evaluation) -> bool {
    induced_acyclic(c, |v| a.get(v))
}

pub(crate) fn induced_acyclic(c: &Circuit, member: impl Fn(Vertex) -> bool) -> bool {
    let n = c.num_vertices();
    let mut indeg = vec![0usize; n];
    let mut remaining = 0;
    for v in (0..n).filter(|&v| member(v)) {
        remaining += 1;
        indeg[v] = c.ins(v).iter().filter(|&&u| member(u)).count();
    }
    let mut queue: VecDeque<Vertex> = (0..n).filter(|&v| member(v) && indeg[v] == 0).collect();
    while let Some(v) = queue.pop_front() {
        remaining -= 1;
        for &w in c.outs(v) {
            if member(w) {
                indeg[w] -= 1;
                if indeg[w] == 0 {
                    queue.push_back(w);
                }
            }
        }
    }
    remaining == 0
}

/// Result of least-fixpoint evaluation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixpointEval {
    pub evaluation: Evaluation,
    pub acyclic: bool,
}

/// Least fixpoint extension of an input assignment. Only the entries of
/// `inputs` at Input vertices are read. Gates start at 0 and fire once their
/// condition holds; AND gates without in-neighbours fire immediately.
pub fn evaluate_from_inputs(c: &Circuit, inputs: &[bool]) -> FixpointEval {
    let evaluation = least_fixpoint(c, |v| inputs[v], |_| true);
    let acyclic = is_acyclic_evaluation(c, &evaluation);
    FixpointEval {
        evaluation,
        acyclic,
    }
}

/// Least fixpoint where inputs are seeded by `input_true` and only vertices
/// with `allowed(v)` may become true.
pub(crate) fn least_fixpoint(
    c: &Circuit,
    input_true: impl Fn(Vertex) -> bool,
    allowed: impl Fn(Vertex) -> bool,
) -> Evaluation {
    let n = c.num_vertices();
    let mut val = vec![false; n];
    let mut count = vec![0usize; n];
    let mut queue = VecDeque::new();
    for v in 0..n {
        if !allowed(v) {
            continue;
        }
        let fire = match c.kind(v) {
            Kind::Input => input_true(v),
            Kind::And => c.ins(v).is_empty(),
            Kind::Or => false,
        };
        if fire {
            val[v] = true;
            queue.push_back(v);
        }
    }
    while let Some(v) = queue.pop_front() {
        for &w in c.outs(v) {
            if val[w] || !allowed(w) {
                continue;
            }
            count[w] += 1;
            if c.kind(w).fires(count[w], c.ins(w).len()) {
                val[w] = true;
                queue.push_back(w);
            }
        }
    }
    Evaluation(val)
}

/// Greatest fixpoint for a fixed input assignment: gates start at 1 and
/// drop to 0 once their condition fails. This is the largest valid
/// evaluation agreeing with `inputs`, self-justifying cycles included.
pub fn greatest_fixpoint_from_inputs(c: &Circuit, inputs: &[bool]) -> Evaluation {
    let n = c.num_vertices();
    let mut val: Vec<bool> = (0..n)
        .map(|v| c.kind(v).is_gate() || inputs[v])
        .collect();
    let mut true_in: Vec<usize> = (0..n)
        .map(|v| c.ins(v).iter().filter(|&&s| val[s]).count())
        .collect();
    let mut queue = VecDeque::new();
    for v in 0..n {
        if c.kind(v).is_gate() && !c.kind(v).fires(true_in[v], c.ins(v).len()) {
            val[v] = false;
            queue.push_back(v);
        }
    }
    while let Some(v) = queue.pop_front() {
        for &w in c.outs(v) {
            if !val[w] {
                continue;
            }
            true_in[w] -= 1;
            if !c.kind(w).fires(true_in[w], c.ins(w).len()) {
                val[w] = false;
                queue.push_back(w);
            }
        }
    }
    Evaluation(val)
}

/// Linear-time pruning of an acyclic satisfying evaluation: keeps only the
/// inputs used by one derivation of the outputs (every in-neighbour of a
/// needed AND gate, the earliest-firing in-neighbour of a needed OR gate)
/// and returns their least fixpoint. Cost never increases.
pub fn prune_acyclic(c: &Circuit, a: &Evaluation) -> Evaluation {
    let n = c.num_vertices();
    let mut time = vec![usize::MAX; n];
    let mut count = vec![0usize; n];
    let mut queue = VecDeque::new();
    let mut clock = 0;
    for v in 0..n {
        let fire = match c.kind(v) {
            Kind::Input => a.get(v),
            Kind::And => c.ins(v).is_empty(),
            Kind::Or => false,
        };
        if fire {
            time[v] = clock;
            clock += 1;
            queue.push_back(v);
        }
    }
    while let Some(v) = queue.pop_front() {
        for &w in c.outs(v) {
            if time[w] != usize::MAX {
                continue;
            }
            count[w] += 1;
            if c.kind(w).fires(count[w], c.ins(w).len()) {
                time[w] = clock;
                clock += 1;
                queue.push_back(w);
            }
        }
    }
    let mut needed = vec![false; n];
    let mut stack: Vec<Vertex> = c.outputs().filter(|&o| time[o] != usize::MAX).collect();
    while let Some(v) = stack.pop() {
        if std::mem::replace(&mut needed[v], true) {
            continue;
        }
        match c.kind(v) {
            Kind::Input => {}
            Kind::And => stack.extend(c.ins(v).iter().copied().filter(|&w| !needed[w])),
            Kind::Or => {
                if let Some(&w) = c.ins(v).iter().min_by_key(|&&w| time[w]) {
                    if time[w] < time[v] && !needed[w] {
                        stack.push(w);
                    }
                }
            }
        }
    }
    least_fixpoint(c, |v| needed[v], |_| true)
}

/// Drops true inputs of an acyclic satisfying evaluation one at a time
/// (ascending) while the least fixpoint stays satisfying. The result is
/// minimal and its cost is at most the original cost.
pub fn minimize_acyclic(c: &Circuit, a: &Evaluation) -> Evaluation {
    let mut keep: Vec<bool> = (0..c.num_vertices())
        .map(|v| c.kind(v) == Kind::Input && a.get(v))
        .collect();
    let mut best = least_fixpoint(c, |v| keep[v], |_| true);
    for x in c.inputs() {
        if !keep[x] {
            continue;
        }
        keep[x] = false;
        let e = least_fixpoint(c, |v| keep[v], |_| true);
        if is_satisfying(c, &e) {
            best = e;
        } else {
            keep[x] = true;
        }
    }
    best
}

/// Three-way answer of the minimality search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Minimality {
    Minimal,
    NotMinimal,
    /// The branching search exhausted its budget.
    Unknown,
}

const MINIMALITY_BUDGET: usize = 100_000;

/// True iff `a` is a valid satisfying evaluation and no valid satisfying
/// evaluation has a strictly smaller true set. Unknown is reported as false.
pub fn is_minimal(c: &Circuit, a: &Evaluation) -> bool {
    minimality(c, a) == Minimality::Minimal
}

/// Decides minimality of a valid satisfying evaluation.
///
/// For acyclic evaluations it suffices to try dropping each true input and
/// re-running the least fixpoint. In general we search for a valid
/// satisfying evaluation inside the true set that avoids some forbidden
/// vertex: the greatest post-fixpoint below the allowed set is the only
/// candidate, and a forbidden gate that would still fire forces more
/// vertices to be forbidden (all in-neighbours of an OR, one of the
/// in-neighbours of an AND, which is branched on).
pub fn minimality(c: &Circuit, a: &Evaluation) -> Minimality {
    if !is_valid_evaluation(c, a) || !is_satisfying(c, a) {
        return Minimality::NotMinimal;
    }
    let n = c.num_vertices();
    if is_acyclic_evaluation(c, a) {
        let true_inputs: Vec<Vertex> = c.inputs().filter(|&v| a.get(v)).collect();
        for &x in &true_inputs {
            let e = least_fixpoint(c, |v| v != x && a.get(v), |_| true);
            if is_satisfying(c, &e) {
                return Minimality::NotMinimal;
            }
        }
        return Minimality::Minimal;
    }

    let mut budget = MINIMALITY_BUDGET;
    let mut exhausted = false;
    for t in a.true_vertices() {
        let mut forbidden = vec![false; n];
        forbidden[t] = true;
        if search_smaller(c, a, forbidden, &mut budget, &mut exhausted) {
            return Minimality::NotMinimal;
        }
    }
    if exhausted {
        Minimality::Unknown
    } else {
        Minimality::Minimal
    }
}

fn search_smaller(
    c: &Circuit,
    a: &Evaluation,
    mut forbidden: Vec<bool>,
    budget: &mut usize,
    exhausted: &mut bool,
) -> bool {
    loop {
        if *budget == 0 {
            *exhausted = true;
            return false;
        }
        *budget -= 1;
        if c.outputs().any(|o| forbidden[o]) {
            return false;
        }
        let keep = greatest_post_fixpoint(c, |v| a.get(v) && !forbidden[v]);
        if c.outputs().any(|o| !keep[o]) {
            return false;
        }
        // A forbidden gate must evaluate to 0 under `keep`.
        let refiring = (0..c.num_vertices()).find(|&f| {
            forbidden[f] && a.get(f) && c.kind(f).is_gate() && {
                let t = c.ins(f).iter().filter(|&&u| keep[u]).count();
                c.kind(f).fires(t, c.ins(f).len())
            }
        });
        let Some(f) = refiring else {
            return true;
        };
        match c.kind(f) {
            Kind::Or => {
                for &u in c.ins(f) {
                    forbidden[u] = true;
                }
            }
            Kind::And => {
                for &u in c.ins(f) {
                    if keep[u] {
                        let mut branch = forbidden.clone();
                        branch[u] = true;
                        if search_smaller(c, a, branch, budget, exhausted) {
                            return true;
                        }
                    }
                }
                return false;
            }
            Kind::Input => unreachable!(),
        }
    }
}

/// Largest subset of `allowed` in which every gate fires (inputs always stay).
fn greatest_post_fixpoint(c: &Circuit, allowed: impl Fn(Vertex) -> bool) -> Vec<bool> {
    let n = c.num_vertices();
    let mut keep: Vec<bool> = (0..n).map(&allowed).collect();
    let mut count = vec![0usize; n];
    for v in 0..n {
        count[v] = c.ins(v).iter().filter(|&&u| keep[u]).count();
    }
    let mut queue: VecDeque<Vertex> = (0..n)
        .filter(|&v| keep[v] && c.kind(v).is_gate() && !c.kind(v).fires(count[v], c.ins(v).len()))
        .collect();
    for &v in &queue {
        keep[v] = false;
    }
    while let Some(v) = queue.pop_front() {
        for &w in c.outs(v) {
            count[w] -= 1;
            if keep[w] && !c.kind(w).fires(count[w], c.ins(w).len()) {
                keep[w] = false;
                queue.push_back(w);
            }
        }
    }
    keep
}

/// Which e-graph object a circuit vertex stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Var(NodeIdx),
    And(NodeIdx),
    Or(ClassIdx),
}

/// Correspondence between e-graph objects and the vertices of the converted
/// circuit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeMap {
    pub var: Vec<Vertex>,
    pub and: Vec<Vertex>,
    pub or: Vec<Vertex>,
    pub role: Vec<Role>,
}

/// Converts an e-graph into a circuit: every e-node u becomes an input x_u
/// feeding an AND gate, every e-class C an OR gate over its members' AND
/// gates, and each dependency (u, C) the edge from C's OR gate into u's AND
/// gate. Root classes' OR gates are the outputs.
pub fn egraph_to_circuit(g: &EGraph) -> (Circuit, NodeMap) {
    let nn = g.num_nodes();
    let nc = g.num_classes();
    let mut c = Circuit::new();
    let mut role = Vec::with_capacity(2 * nn + nc);
    let mut var = Vec::with_capacity(nn);
    let mut and = Vec::with_capacity(nn);
    for u in 0..nn {
        var.push(c.add_input(g.cost(u)));
        role.push(Role::Var(u));
        and.push(c.add_gate(Kind::And));
        role.push(Role::And(u));
    }
    let or: Vec<Vertex> = (0..nc)
        .map(|cl| {
            role.push(Role::Or(cl));
            c.add_gate(Kind::Or)
        })
        .collect();
    for u in 0..nn {
        c.add_edge(var[u], and[u]).expect("fresh edge");
        c.add_edge(and[u], or[g.class_of(u)]).expect("fresh edge");
        for &d in g.deps(u) {
            c.add_edge(or[d], and[u]).expect("fresh edge");
        }
    }
    for &r in g.roots() {
        c.set_output(or[r]);
    }
    (c, NodeMap { var, and, or, role })
}

/// Maps an extraction to the evaluation that makes exactly the chosen
/// e-nodes' inputs and AND gates true, and the OR gates of chosen classes.
pub fn extraction_to_evaluation(g: &EGraph, m: &NodeMap, x: &Extraction) -> Evaluation {
    let mut a = Evaluation::zeros(m.role.len());
    for (cl, u) in x.iter() {
        a.0[m.var[u]] = true;
        a.0[m.and[u]] = true;
        a.0[m.or[cl]] = true;
    }
    debug_assert_eq!(m.or.len(), g.num_classes());
    a
}

/// Reads the extraction off an evaluation: class C chooses u when u's AND
/// gate is true.
pub fn evaluation_to_extraction(
    g: &EGraph,
    m: &NodeMap,
    a: &Evaluation,
) -> Result<Extraction, CircuitError> {
    let mut x = Extraction::new();
    for u in 0..g.num_nodes() {
        if a.get(m.and[u]) {
            let cl = g.class_of(u);
            if x.choose(cl, u).is_some() {
                return Err(CircuitError::AmbiguousChoice {
                    class: g.class_name(cl).to_string(),
                });
            }
        }
    }
    Ok(x)
}
