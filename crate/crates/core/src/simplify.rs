//! Optimum-preserving circuit rewrites applied to a fixpoint, with a
//! replayable log and recovery of evaluations of the original circuit.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{
    evaluate_from_inputs, greatest_fixpoint_from_inputs, is_satisfying, Circuit, Evaluation, Kind,
    Vertex,
};

/// Maximum BFS depth when looking for a same-gate shortcut path.
pub const SHORTCUT_DEPTH: usize = 64;
const SHORTCUT_VISIT_CAP: usize = 512;
/// Maximum cycle length searched for when removing lone OR loops.
pub const LOOP_DEPTH: usize = 32;
const LOOP_VISIT_CAP: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleId {
    RemoveUnreachable,
    ContractIndegreeOne,
    ContractSameGate,
    SameGateNoShortcut,
    Factoring,
    RemoveLoneOrLoops,
    CollectVariables,
}

impl RuleId {
    pub const ALL: [RuleId; 7] = [
        RuleId::RemoveUnreachable,
        RuleId::ContractIndegreeOne,
        RuleId::ContractSameGate,
        RuleId::SameGateNoShortcut,
        RuleId::Factoring,
        RuleId::RemoveLoneOrLoops,
        RuleId::CollectVariables,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RuleId::RemoveUnreachable => "remove-unreachable",
            RuleId::ContractIndegreeOne => "contract-indegree-one",
            RuleId::ContractSameGate => "contract-same-gate",
            RuleId::SameGateNoShortcut => "same-gate-no-shortcut",
            RuleId::Factoring => "factoring",
            RuleId::RemoveLoneOrLoops => "remove-lone-or-loops",
            RuleId::CollectVariables => "collect-variables",
        }
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RuleId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        if let Ok(k) = norm.parse::<usize>() {
            if (1..=7).contains(&k) {
                return Ok(RuleId::ALL[k - 1]);
            }
        }
        RuleId::ALL
            .into_iter()
            .find(|r| r.name() == norm || r.name().replace('-', "") == norm)
            .ok_or_else(|| format!("unknown rule `{s}`"))
    }
}

/// Parses `all`, `none`, or a comma-separated list of rule names/numbers.
pub fn parse_rule_set(s: &str) -> Result<BTreeSet<RuleId>, String> {
    match s.trim() {
        "all" => Ok(RuleId::ALL.into_iter().collect()),
        "none" | "" => Ok(BTreeSet::new()),
        list => list.split(',').map(RuleId::from_str).collect(),
    }
}

#[derive(Debug, Error)]
pub enum SimplifyError {
    #[error("rewrite log does not apply: {0}")]
    BadLog(String),
    #[error("recovered evaluation does not match: {0}")]
    RecoveryMismatch(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AddedVertex {
    pub id: usize,
    pub kind: Kind,
    pub cost: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Removed {
    /// Removing a vertex also removes its incident edges and output mark.
    pub vertices: Vec<usize>,
    pub edges: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Added {
    pub vertices: Vec<AddedVertex>,
    pub edges: Vec<(usize, usize)>,
    pub outputs: Vec<usize>,
}

/// One rule application, in stable vertex ids. Applying it removes edges,
/// then vertices, then adds vertices, edges and output marks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewriteRecord {
    pub rule: RuleId,
    pub removed: Removed,
    pub added: Added,
    /// Variable provenance delta: old variable to its replacement, or `None`
    /// when the variable is fixed to 0.
    pub provenance: Vec<(usize, Option<usize>)>,
}

impl RewriteRecord {
    fn new(rule: RuleId) -> Self {
        RewriteRecord {
            rule,
            removed: Removed::default(),
            added: Added::default(),
            provenance: Vec::new(),
        }
    }
}

/// Ordered rewrite records. Stable ids below the original vertex count are
/// the original circuit's vertex indices; later ids are fresh vertices
/// numbered in order of creation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RewriteLog {
    pub records: Vec<RewriteRecord>,
}

/// Mutable circuit with stable vertex ids and tombstones.
#[derive(Debug, Clone)]
struct Work {
    kind: Vec<Kind>,
    cost: Vec<f64>,
    alive: Vec<bool>,
    ins: Vec<Vec<Vertex>>,
    outs: Vec<Vec<Vertex>>,
    outputs: BTreeSet<Vertex>,
}

impl Work {
    fn from_circuit(c: &Circuit) -> Self {
        let n = c.num_vertices();
        Work {
            kind: (0..n).map(|v| c.kind(v)).collect(),
            cost: (0..n).map(|v| c.cost(v)).collect(),
            alive: vec![true; n],
            ins: (0..n).map(|v| c.ins(v).to_vec()).collect(),
            outs: (0..n).map(|v| c.outs(v).to_vec()).collect(),
            outputs: c.outputs().collect(),
        }
    }

    fn len(&self) -> usize {
        self.kind.len()
    }

    fn live(&self) -> impl Iterator<Item = Vertex> + '_ {
        (0..self.len()).filter(|&v| self.alive[v])
    }

    fn is_gate(&self, v: Vertex) -> bool {
        self.kind[v].is_gate()
    }

    fn in_range(&self, s: Vertex, d: Vertex) -> Result<(), SimplifyError> {
        if s >= self.len() || d >= self.len() {
            return Err(SimplifyError::BadLog(format!("edge {s} -> {d} out of range")));
        }
        Ok(())
    }

    fn add_edge(&mut self, s: Vertex, d: Vertex) -> Result<(), SimplifyError> {
        self.in_range(s, d)?;
        if !self.alive[s] || !self.alive[d] {
            return Err(SimplifyError::BadLog(format!("edge {s} -> {d} touches a dead vertex")));
        }
        if self.kind[d] == Kind::Input {
            return Err(SimplifyError::BadLog(format!("edge {s} -> {d} enters an input")));
        }
        if !self.outs[s].contains(&d) {
            self.outs[s].push(d);
            self.ins[d].push(s);
        }
        Ok(())
    }

    fn remove_edge(&mut self, s: Vertex, d: Vertex) -> Result<(), SimplifyError> {
        self.in_range(s, d)?;
        let before = self.outs[s].len();
        self.outs[s].retain(|&x| x != d);
        if self.outs[s].len() == before {
            return Err(SimplifyError::BadLog(format!("edge {s} -> {d} is absent")));
        }
        self.ins[d].retain(|&x| x != s);
        Ok(())
    }

    fn remove_vertex(&mut self, v: Vertex) -> Result<(), SimplifyError> {
        if !self.alive.get(v).copied().unwrap_or(false) {
            return Err(SimplifyError::BadLog(format!("vertex {v} is not alive")));
        }
        for d in std::mem::take(&mut self.outs[v]) {
            self.ins[d].retain(|&x| x != v);
        }
        for s in std::mem::take(&mut self.ins[v]) {
            self.outs[s].retain(|&x| x != v);
        }
        self.alive[v] = false;
        self.outputs.remove(&v);
        Ok(())
    }

    fn apply(&mut self, r: &RewriteRecord) -> Result<(), SimplifyError> {
        for &(s, d) in &r.removed.edges {
            self.remove_edge(s, d)?;
        }
        for &v in &r.removed.vertices {
            self.remove_vertex(v)?;
        }
        for av in &r.added.vertices {
            if av.id != self.len() {
                return Err(SimplifyError::BadLog(format!(
                    "added vertex id {} but next id is {}",
                    av.id,
                    self.len()
                )));
            }
            self.kind.push(av.kind);
            self.cost.push(if av.kind == Kind::Input { av.cost } else { 0.0 });
            self.alive.push(true);
            self.ins.push(Vec::new());
            self.outs.push(Vec::new());
        }
        for &(s, d) in &r.added.edges {
            self.add_edge(s, d)?;
        }
        for &o in &r.added.outputs {
            if !self.alive.get(o).copied().unwrap_or(false) {
                return Err(SimplifyError::BadLog(format!("output {o} is not alive")));
            }
            self.outputs.insert(o);
        }
        Ok(())
    }

    /// Dense circuit over surviving vertices in ascending stable id, plus
    /// the stable id of each dense vertex.
    fn compact(&self) -> (Circuit, Vec<Vertex>) {
        let stable: Vec<Vertex> = self.live().collect();
        let mut dense = vec![usize::MAX; self.len()];
        let mut c = Circuit::new();
        for &s in &stable {
            dense[s] = c.add_vertex(self.kind[s], self.cost[s]);
        }
        for &s in &stable {
            for &d in &self.outs[s] {
                c.add_edge(dense[s], dense[d]).expect("live edge");
            }
        }
        for &o in &self.outputs {
            c.set_output(dense[o]);
        }
        (c, stable)
    }

    fn next_id(&self) -> usize {
        self.len()
    }

    /// Strongly connected component id of every live vertex (iterative
    /// Tarjan); dead vertices get `usize::MAX`.
    fn scc(&self) -> Vec<usize> {
        self.scc_within(|_| true)
    }

    /// Like [`Work::scc`] on the subgraph induced by `member`.
    fn scc_within(&self, member: impl Fn(Vertex) -> bool) -> Vec<usize> {
        let n = self.len();
        let mut index = vec![usize::MAX; n];
        let mut low = vec![0; n];
        let mut on_stack = vec![false; n];
        let mut comp = vec![usize::MAX; n];
        let mut stack = Vec::new();
        let mut counter = 0;
        let mut ncomp = 0;
        for root in self.live() {
            if index[root] != usize::MAX || !member(root) {
                continue;
            }
            let mut call: Vec<(Vertex, usize)> = vec![(root, 0)];
            index[root] = counter;
            low[root] = counter;
            counter += 1;
            stack.push(root);
            on_stack[root] = true;
            while let Some(&mut (v, ref mut i)) = call.last_mut() {
                if *i < self.outs[v].len() {
                    let w = self.outs[v][*i];
                    *i += 1;
                    if !member(w) {
                        continue;
                    }
                    if index[w] == usize::MAX {
                        index[w] = counter;
                        low[w] = counter;
                        counter += 1;
                        stack.push(w);
                        on_stack[w] = true;
                        call.push((w, 0));
                    } else if on_stack[w] {
                        low[v] = low[v].min(index[w]);
                    }
                } else {
                    call.pop();
                    if let Some(&(p, _)) = call.last() {
                        low[p] = low[p].min(low[v]);
                    }
                    if low[v] == index[v] {
                        loop {
                            let w = stack.pop().expect("tarjan stack");
                            on_stack[w] = false;
                            comp[w] = ncomp;
                            if w == v {
                                break;
                            }
                        }
                        ncomp += 1;
                    }
                }
            }
        }
        comp
    }
}

/// Bookkeeping that lives for a whole fixpoint run.
#[derive(Debug, Default)]
struct RunState {
    factored: BTreeSet<Vertex>,
}

struct Pass<'a> {
    w: &'a mut Work,
    records: &'a mut Vec<RewriteRecord>,
    touched: BTreeSet<Vertex>,
}

impl Pass<'_> {
    fn commit(&mut self, r: RewriteRecord, touch: impl IntoIterator<Item = Vertex>) {
        self.w.apply(&r).expect("rule produced a consistent record");
        self.records.push(r);
        self.touched.extend(touch);
    }

    fn free(&self, v: Vertex) -> bool {
        self.w.alive[v] && !self.touched.contains(&v)
    }
}

fn run_pass(w: &mut Work, rule: RuleId, state: &mut RunState) -> Vec<RewriteRecord> {
    let mut records = Vec::new();
    let mut p = Pass {
        w,
        records: &mut records,
        touched: BTreeSet::new(),
    };
    match rule {
        RuleId::RemoveUnreachable => remove_unreachable(&mut p),
        RuleId::ContractIndegreeOne => contract_indegree_one(&mut p),
        RuleId::ContractSameGate => contract_same_gate(&mut p),
        RuleId::SameGateNoShortcut => same_gate_no_shortcut(&mut p),
        RuleId::Factoring => factoring(&mut p, state),
        RuleId::RemoveLoneOrLoops => remove_lone_or_loops(&mut p),
        RuleId::CollectVariables => collect_variables(&mut p),
    }
    records
}

/// Removes vertices with no path to an output, except those whose removal
/// could drop a forced true cycle (such cycles make their feeders
/// unusable, which must stay visible to acyclic evaluation).
fn remove_unreachable(p: &mut Pass) {
    let w = &*p.w;
    let n = w.len();
    let mut reaches = vec![false; n];
    let mut queue: VecDeque<Vertex> = w.outputs.iter().copied().collect();
    for &o in &w.outputs {
        reaches[o] = true;
    }
    while let Some(v) = queue.pop_front() {
        for &s in &w.ins[v] {
            if !reaches[s] {
                reaches[s] = true;
                queue.push_back(s);
            }
        }
    }
    let mut doomed: Vec<bool> = (0..n).map(|v| w.alive[v] && !reaches[v]).collect();
    if !doomed.iter().any(|d| *d) {
        return;
    }
    loop {
        // Upper bound on what can become true inside the doomed set when
        // everything outside may be true and doomed inputs are false.
        let mut val = vec![false; n];
        let mut count = vec![0usize; n];
        let mut q = VecDeque::new();
        for v in w.live() {
            let t = if !doomed[v] {
                true
            } else {
                w.kind[v] == Kind::And && w.ins[v].is_empty()
            };
            if t {
                val[v] = true;
                q.push_back(v);
            }
        }
        while let Some(v) = q.pop_front() {
            for &d in &w.outs[v] {
                if val[d] || !doomed[d] {
                    continue;
                }
                count[d] += 1;
                if w.kind[d].fires(count[d], w.ins[d].len()) {
                    val[d] = true;
                    q.push_back(d);
                }
            }
        }
        let on_cycle = cyclic_vertices(w, |v| doomed[v] && val[v]);
        if on_cycle.is_empty() {
            break;
        }
        // Keep every doomed vertex that can reach such a cycle.
        let mut keep: VecDeque<Vertex> = on_cycle.into_iter().collect();
        for &v in &keep {
            doomed[v] = false;
        }
        while let Some(v) = keep.pop_front() {
            for &s in &w.ins[v] {
                if doomed[s] {
                    doomed[s] = false;
                    keep.push_back(s);
                }
            }
        }
        if !doomed.iter().any(|d| *d) {
            return;
        }
    }
    let mut r = RewriteRecord::new(RuleId::RemoveUnreachable);
    for v in (0..n).filter(|&v| doomed[v]) {
        r.removed.vertices.push(v);
        if w.kind[v] == Kind::Input {
            r.provenance.push((v, None));
        }
    }
    let touched = r.removed.vertices.clone();
    p.commit(r, touched);
}

/// Vertices lying on a directed cycle (or carrying a self-loop) of the
/// subgraph induced by `member`.
fn cyclic_vertices(w: &Work, member: impl Fn(Vertex) -> bool) -> Vec<Vertex> {
    let comp = w.scc_within(&member);
    let mut size: HashMap<usize, usize> = HashMap::new();
    for &k in comp.iter().filter(|&&k| k != usize::MAX) {
        *size.entry(k).or_default() += 1;
    }
    (0..w.len())
        .filter(|&v| comp[v] != usize::MAX)
        .filter(|&v| size[&comp[v]] > 1 || w.outs[v].contains(&v))
        .collect()
}

/// Merges a gate u whose only in-neighbour is v into v.
fn contract_indegree_one(p: &mut Pass) {
    for u in 0..p.w.len() {
        if !p.free(u) || !p.w.is_gate(u) || p.w.ins[u].len() != 1 {
            continue;
        }
        let v = p.w.ins[u][0];
        if v == u || !p.free(v) {
            continue;
        }
        let mut r = RewriteRecord::new(RuleId::ContractIndegreeOne);
        r.removed.vertices.push(u);
        for &d in &p.w.outs[u] {
            r.added.edges.push((v, d));
        }
        if p.w.outputs.contains(&u) {
            r.added.outputs.push(v);
        }
        p.commit(r, [u, v]);
    }
}

/// Merges a non-output gate v whose only out-neighbour is a gate u of the
/// same kind into u.
fn contract_same_gate(p: &mut Pass) {
    for v in 0..p.w.len() {
        if !p.free(v) || !p.w.is_gate(v) || p.w.outs[v].len() != 1 || p.w.outputs.contains(&v) {
            continue;
        }
        let u = p.w.outs[v][0];
        if u == v || !p.free(u) || p.w.kind[u] != p.w.kind[v] {
            continue;
        }
        let mut r = RewriteRecord::new(RuleId::ContractSameGate);
        r.removed.vertices.push(v);
        for &s in &p.w.ins[v] {
            r.added.edges.push((s, u));
        }
        p.commit(r, [u, v]);
    }
}

/// Deletes an edge (v, u) when a longer path v -> w1 -> ... -> wn -> u runs
/// entirely through gates of u's kind.
fn same_gate_no_shortcut(p: &mut Pass) {
    for u in 0..p.w.len() {
        if !p.free(u) || !p.w.is_gate(u) {
            continue;
        }
        let kind = p.w.kind[u];
        let candidates: Vec<Vertex> = p.w.ins[u]
            .iter()
            .copied()
            .filter(|&v| v != u && p.w.kind[v] == kind)
            .collect();
        for v in candidates {
            if !p.free(v) {
                continue;
            }
            if has_detour(p.w, v, u, kind) {
                let mut r = RewriteRecord::new(RuleId::SameGateNoShortcut);
                r.removed.edges.push((v, u));
                p.commit(r, [u, v]);
                break;
            }
        }
    }
}

fn has_detour(w: &Work, v: Vertex, u: Vertex, kind: Kind) -> bool {
    let mut seen = BTreeSet::new();
    let mut q = VecDeque::new();
    for &x in &w.outs[v] {
        if x != u && x != v && w.kind[x] == kind && seen.insert(x) {
            q.push_back((x, 1));
        }
    }
    while let Some((x, depth)) = q.pop_front() {
        if w.outs[x].contains(&u) {
            return true;
        }
        if depth >= SHORTCUT_DEPTH || seen.len() >= SHORTCUT_VISIT_CAP {
            continue;
        }
        for &y in &w.outs[x] {
            if y != u && y != v && w.kind[y] == kind && seen.insert(y) {
                q.push_back((y, depth + 1));
            }
        }
    }
    false
}

/// (w ∨ x1) ∧ ... ∧ (w ∨ xn) = w ∨ (x1 ∧ ... ∧ xn), and its dual.
fn factoring(p: &mut Pass, state: &mut RunState) {
    let comp = p.w.scc();
    for u in 0..p.w.len() {
        if !p.free(u) || !p.w.is_gate(u) || state.factored.contains(&u) {
            continue;
        }
        let kind = p.w.kind[u];
        let dual = if kind == Kind::And { Kind::Or } else { Kind::And };
        let vs: Vec<Vertex> = p.w.ins[u]
            .iter()
            .copied()
            .filter(|&v| {
                v != u
                    && p.free(v)
                    && p.w.kind[v] == dual
                    && p.w.outs[v].len() == 1
                    && !p.w.outputs.contains(&v)
                    && p.w.ins[v].len() >= 2
                    && comp[v] != comp[u]
            })
            .collect();
        let mut groups: BTreeMap<Vertex, Vec<Vertex>> = BTreeMap::new();
        for &v in &vs {
            for &x in &p.w.ins[v] {
                if x != u && x != v && p.free(x) {
                    groups.entry(x).or_default().push(v);
                }
            }
        }
        let best = groups
            .into_iter()
            .filter(|(_, g)| g.len() >= 2)
            .fold(None::<(Vertex, Vec<Vertex>)>, |acc, (x, g)| match acc {
                Some((_, ref bg)) if bg.len() >= g.len() => acc,
                _ => Some((x, g)),
            });
        let Some((x, group)) = best else {
            continue;
        };
        let a = p.w.next_id();
        let b = a + 1;
        let mut r = RewriteRecord::new(RuleId::Factoring);
        for &v in &group {
            r.removed.edges.push((x, v));
            r.removed.edges.push((v, u));
        }
        r.added.vertices.push(AddedVertex {
            id: a,
            kind,
            cost: 0.0,
        });
        r.added.vertices.push(AddedVertex {
            id: b,
            kind: dual,
            cost: 0.0,
        });
        for &v in &group {
            r.added.edges.push((v, a));
        }
        r.added.edges.extend([(a, b), (x, b), (b, u)]);
        state.factored.insert(u);
        let mut touch = group.clone();
        touch.extend([u, x, a, b]);
        p.commit(r, touch);
    }
}

/// On a cycle u -> v1 -> ... -> vn -> u with u an OR gate and every vi an
/// AND gate, vn can never be true in an acyclic evaluation. When vn has a
/// private input, vn and that input are deleted, together with every AND
/// gate that is thereby forced false.
fn remove_lone_or_loops(p: &mut Pass) {
    for u in 0..p.w.len() {
        if !p.free(u) || p.w.kind[u] != Kind::Or {
            continue;
        }
        let Some(vn) = find_and_loop(p, u) else {
            continue;
        };
        let private = p.w.ins[vn].iter().copied().find(|&x| {
            p.w.kind[x] == Kind::Input && p.w.outs[x].len() == 1 && !p.w.outputs.contains(&x)
        });
        let Some(private) = private else {
            continue;
        };
        // AND gates downstream of a constant-false gate are false as well.
        let mut dead = BTreeSet::from([vn]);
        let mut q = VecDeque::from([vn]);
        let mut blocked = false;
        while let Some(g) = q.pop_front() {
            if p.w.outputs.contains(&g) || !p.free(g) {
                blocked = true;
                break;
            }
            for &d in &p.w.outs[g] {
                if p.w.kind[d] == Kind::And && dead.insert(d) {
                    q.push_back(d);
                }
            }
        }
        if blocked || !p.free(private) {
            continue;
        }
        let mut r = RewriteRecord::new(RuleId::RemoveLoneOrLoops);
        r.removed.vertices.push(private);
        r.removed.vertices.extend(dead.iter().copied());
        r.provenance.push((private, None));
        let mut touch: Vec<Vertex> = dead.into_iter().collect();
        touch.extend([u, private]);
        p.commit(r, touch);
    }
}

/// Finds vn closing a cycle u -> v1 -> ... -> vn -> u through AND gates.
fn find_and_loop(p: &Pass, u: Vertex) -> Option<Vertex> {
    let w = &*p.w;
    let mut seen = BTreeSet::new();
    let mut q = VecDeque::new();
    for &v in &w.outs[u] {
        if w.kind[v] == Kind::And && p.free(v) && seen.insert(v) {
            q.push_back((v, 1));
        }
    }
    while let Some((v, depth)) = q.pop_front() {
        if w.outs[v].contains(&u) {
            return Some(v);
        }
        if depth >= LOOP_DEPTH || seen.len() >= LOOP_VISIT_CAP {
            continue;
        }
        for &x in &w.outs[v] {
            if w.kind[x] == Kind::And && p.free(x) && seen.insert(x) {
                q.push_back((x, depth + 1));
            }
        }
    }
    None
}

/// Merges non-output variables with identical, nonempty, all-AND
/// out-neighbourhoods into one variable carrying the summed cost.
fn collect_variables(p: &mut Pass) {
    let mut groups: BTreeMap<Vec<Vertex>, Vec<Vertex>> = BTreeMap::new();
    for x in 0..p.w.len() {
        if !p.free(x) || p.w.kind[x] != Kind::Input || p.w.outputs.contains(&x) {
            continue;
        }
        let outs = &p.w.outs[x];
        if outs.is_empty() || outs.iter().any(|&d| p.w.kind[d] != Kind::And) {
            continue;
        }
        let mut key = outs.clone();
        key.sort_unstable();
        groups.entry(key).or_default().push(x);
    }
    let mut ordered: Vec<(Vec<Vertex>, Vec<Vertex>)> =
        groups.into_iter().filter(|(_, g)| g.len() >= 2).collect();
    ordered.sort_by_key(|(_, g)| g[0]);
    for (outs, group) in ordered {
        let id = p.w.next_id();
        let mut r = RewriteRecord::new(RuleId::CollectVariables);
        r.removed.vertices.extend(group.iter().copied());
        r.added.vertices.push(AddedVertex {
            id,
            kind: Kind::Input,
            cost: group.iter().map(|&x| p.w.cost[x]).sum(),
        });
        for &d in &outs {
            r.added.edges.push((id, d));
        }
        for &x in &group {
            r.provenance.push((x, Some(id)));
        }
        let mut touch = group.clone();
        touch.push(id);
        p.commit(r, touch);
    }
}

/// Output of [`simplify_fixpoint`].
#[derive(Debug, Clone)]
pub struct Simplified {
    pub circuit: Circuit,
    pub log: RewriteLog,
    /// Stable id of each vertex of `circuit`.
    pub stable_ids: Vec<Vertex>,
    /// Set when the iteration limit stopped the loop early.
    pub hit_iteration_limit: bool,
    /// Set when the deadline stopped the loop early.
    pub timed_out: bool,
    pub cycles: usize,
}

/// One pass of a single rule.
pub fn apply_rule(c: &Circuit, rule: RuleId) -> (Circuit, Vec<RewriteRecord>) {
    let mut w = Work::from_circuit(c);
    let records = run_pass(&mut w, rule, &mut RunState::default());
    if records.is_empty() {
        return (c.clone(), records);
    }
    (w.compact().0, records)
}

/// Cycles through the enabled rules in declaration order until a full cycle
/// changes nothing.
pub fn simplify_fixpoint(c: &Circuit, enabled: &BTreeSet<RuleId>) -> Simplified {
    simplify_until(c, enabled, None)
}

/// [`simplify_fixpoint`] that stops after the cycle during which `deadline`
/// passes, setting `timed_out`.
pub fn simplify_until(
    c: &Circuit,
    enabled: &BTreeSet<RuleId>,
    deadline: Option<Instant>,
) -> Simplified {
    let limit = 4 * (c.num_vertices() + c.num_edges()) + 100;
    simplify_with_limit(c, enabled, limit, deadline)
}

pub fn simplify_with_limit(
    c: &Circuit,
    enabled: &BTreeSet<RuleId>,
    limit: usize,
    deadline: Option<Instant>,
) -> Simplified {
    let mut w = Work::from_circuit(c);
    let mut state = RunState::default();
    let mut records = Vec::new();
    let mut cycles = 0;
    let mut hit_iteration_limit = false;
    let mut timed_out = false;
    if !enabled.is_empty() {
        loop {
            let mut changed = false;
            for &rule in enabled {
                let rs = run_pass(&mut w, rule, &mut state);
                changed |= !rs.is_empty();
                records.extend(rs);
            }
            cycles += 1;
            if !changed {
                break;
            }
            if cycles >= limit {
                hit_iteration_limit = true;
                break;
            }
            if deadline.is_some_and(|d| Instant::now() >= d) {
                timed_out = true;
                break;
            }
        }
    }
    let (circuit, stable_ids) = if records.is_empty() {
        (c.clone(), (0..c.num_vertices()).collect())
    } else {
        w.compact()
    };
    Simplified {
        circuit,
        log: RewriteLog { records },
        stable_ids,
        hit_iteration_limit,
        timed_out,
        cycles,
    }
}

/// Re-applies a log to the original circuit.
pub fn replay(original: &Circuit, log: &RewriteLog) -> Result<(Circuit, Vec<Vertex>), SimplifyError> {
    let mut w = Work::from_circuit(original);
    for r in &log.records {
        w.apply(r)?;
    }
    Ok(w.compact())
}

/// For each original input, the surviving variable (stable id) it was
/// folded into, or `None` if it was fixed to 0.
pub fn compose_provenance(original: &Circuit, log: &RewriteLog) -> Vec<Option<Vertex>> {
    let mut prov: Vec<Option<Vertex>> = (0..original.num_vertices()).map(Some).collect();
    let mut holders: HashMap<Vertex, Vec<Vertex>> = original.inputs().map(|x| (x, vec![x])).collect();
    for r in &log.records {
        for &(old, new) in &r.provenance {
            let moved = holders.remove(&old).unwrap_or_default();
            for &x in &moved {
                prov[x] = new;
            }
            if let Some(n) = new {
                holders.entry(n).or_default().extend(moved);
            }
        }
    }
    for v in 0..original.num_vertices() {
        if original.kind(v) != Kind::Input {
            prov[v] = None;
        }
    }
    prov
}

/// Maps an optimal evaluation of the simplified circuit back to the
/// original: a true simplified variable makes all its original variables
/// true and removed variables are 0. Gates follow by least fixpoint, or by
/// greatest fixpoint when cyclic evaluations are allowed.
pub fn recover_evaluation(
    original: &Circuit,
    log: &RewriteLog,
    simplified_eval: &Evaluation,
    enforce_acyclic: bool,
) -> Result<Evaluation, SimplifyError> {
    let (simplified, stable) = replay(original, log)?;
    if simplified_eval.len() != simplified.num_vertices() {
        return Err(SimplifyError::RecoveryMismatch(format!(
            "evaluation has {} values, simplified circuit has {} vertices",
            simplified_eval.len(),
            simplified.num_vertices()
        )));
    }
    let mut dense = HashMap::new();
    for (d, &s) in stable.iter().enumerate() {
        dense.insert(s, d);
    }
    let prov = compose_provenance(original, log);
    let mut inputs = vec![false; original.num_vertices()];
    for x in original.inputs() {
        if let Some(s) = prov[x] {
            let d = *dense.get(&s).ok_or_else(|| {
                SimplifyError::RecoveryMismatch(format!("variable {s} does not survive"))
            })?;
            inputs[x] = simplified_eval.get(d);
        }
    }
    let evaluation = if enforce_acyclic {
        let r = evaluate_from_inputs(original, &inputs);
        if !r.acyclic {
            return Err(SimplifyError::RecoveryMismatch("not acyclic".into()));
        }
        r.evaluation
    } else {
        greatest_fixpoint_from_inputs(original, &inputs)
    };
    if !is_satisfying(original, &evaluation) {
        return Err(SimplifyError::RecoveryMismatch("not satisfying".into()));
    }
    let want = simplified_eval.cost(&simplified);
    let got = evaluation.cost(original);
    if (want - got).abs() > 1e-6 * want.abs().max(1.0) {
        return Err(SimplifyError::RecoveryMismatch(format!(
            "cost {got} differs from simplified cost {want}"
        )));
    }
    Ok(evaluation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::egraph_to_circuit;
    use crate::fixtures;
    use crate::oracle::brute_force_circuit;

    fn all() -> BTreeSet<RuleId> {
        RuleId::ALL.into_iter().collect()
    }

    fn optimum(c: &Circuit) -> Option<f64> {
        brute_force_circuit(c, true).unwrap().optimum
    }

    #[test]
    fn rule_names_parse() {
        assert_eq!("1".parse::<RuleId>().unwrap(), RuleId::RemoveUnreachable);
        assert_eq!("factoring".parse::<RuleId>().unwrap(), RuleId::Factoring);
        assert_eq!(
            "remove_lone_or_loops".parse::<RuleId>().unwrap(),
            RuleId::RemoveLoneOrLoops
        );
        assert_eq!(parse_rule_set("all").unwrap().len(), 7);
        assert!(parse_rule_set("none").unwrap().is_empty());
        assert_eq!(parse_rule_set("2,3").unwrap().len(), 2);
        assert!(parse_rule_set("bogus").is_err());
    }

    #[test]
    fn removes_dangling_gate() {
        let (mut c, _) = egraph_to_circuit(&fixtures::e1());
        let x = c.add_input(1.0);
        let d = c.add_gate(Kind::Or);
        c.add_edge(x, d).unwrap();
        let (out, records) = apply_rule(&c, RuleId::RemoveUnreachable);
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].removed.vertices, vec![11, 12]);
        assert_eq!(out.num_vertices(), 11);
    }

    #[test]
    fn keeps_unreachable_forced_cycle() {
        // t feeds an OR pair that can only be true together: using t makes
        // the evaluation cyclic, so the pair must stay.
        let mut c = Circuit::new();
        let t = c.add_input(1.0);
        let u = c.add_input(5.0);
        let o = c.add_gate(Kind::Or);
        let a = c.add_gate(Kind::Or);
        let b = c.add_gate(Kind::Or);
        for (s, d) in [(t, o), (u, o), (t, a), (a, b), (b, a)] {
            c.add_edge(s, d).unwrap();
        }
        c.set_output(o);
        assert_eq!(optimum(&c), Some(5.0));
        let (out, _) = apply_rule(&c, RuleId::RemoveUnreachable);
        assert_eq!(out.num_vertices(), 5);
        assert_eq!(optimum(&out), Some(5.0));
    }

    #[test]
    fn lone_or_loop_on_self_dependency() {
        let g = fixtures::self_loop_egraph();
        let (c, m) = egraph_to_circuit(&g);
        let (out, records) = apply_rule(&c, RuleId::RemoveLoneOrLoops);
        assert_eq!(records.len(), 1);
        let lp = g.node_index("loop").unwrap();
        assert!(records[0].removed.vertices.contains(&m.and[lp]));
        assert_eq!(records[0].provenance, vec![(m.var[lp], None)]);
        assert_eq!(optimum(&out), optimum(&c));
        assert_eq!(optimum(&c), Some(5.0));
    }

    #[test]
    fn factoring_shared_input() {
        // u = AND(v1, v2, ...) with v1 = OR(w, y1), v2 = OR(w, y2).
        let mut c = Circuit::new();
        let w = c.add_input(1.0);
        let y1 = c.add_input(2.0);
        let y2 = c.add_input(3.0);
        let v1 = c.add_gate(Kind::Or);
        let v2 = c.add_gate(Kind::Or);
        let u = c.add_gate(Kind::And);
        for (s, d) in [(w, v1), (y1, v1), (w, v2), (y2, v2), (v1, u), (v2, u)] {
            c.add_edge(s, d).unwrap();
        }
        c.set_output(u);
        let (out, records) = apply_rule(&c, RuleId::Factoring);
        assert_eq!(records.len(), 1);
        assert_eq!(out.num_vertices(), c.num_vertices() + 2);
        let rank = |c: &Circuit| c.num_edges() as i64 - c.num_vertices() as i64;
        assert!(rank(&out) < rank(&c));
        assert_eq!(optimum(&out), optimum(&c));
        assert_eq!(optimum(&c), Some(1.0));
    }

    #[test]
    fn collect_variables_and_recover() {
        let mut c = Circuit::new();
        let xa = c.add_input(2.0);
        let xb = c.add_input(3.0);
        let g = c.add_gate(Kind::And);
        let h = c.add_gate(Kind::And);
        for (s, d) in [(xa, g), (xb, g), (xa, h), (xb, h)] {
            c.add_edge(s, d).unwrap();
        }
        let o = c.add_gate(Kind::Or);
        c.add_edge(g, o).unwrap();
        c.add_edge(h, o).unwrap();
        c.set_output(o);
        let (out, records) = apply_rule(&c, RuleId::CollectVariables);
        assert_eq!(records.len(), 1);
        assert_eq!(out.num_inputs(), 1);
        let merged = out.inputs().next().unwrap();
        assert_eq!(out.cost(merged), 5.0);

        let log = RewriteLog { records };
        let opt = brute_force_circuit(&out, true).unwrap();
        assert_eq!(opt.optimum, Some(5.0));
        let rec = recover_evaluation(&c, &log, &opt.witnesses[0], true).unwrap();
        assert!(rec.get(xa) && rec.get(xb));
        assert_eq!(rec.cost(&c), 5.0);
    }

    #[test]
    fn e1_fixpoint() {
        let (c, _) = egraph_to_circuit(&fixtures::e1());
        let s = simplify_fixpoint(&c, &all());
        assert!(s.circuit.num_vertices() < 11);
        assert!(!s.hit_iteration_limit);
        assert_eq!(optimum(&s.circuit), Some(2.0));
        s.circuit.check_well_formed().unwrap();
        let (replayed, _) = replay(&c, &s.log).unwrap();
        assert_eq!(replayed, s.circuit);
    }

    #[test]
    fn chain_contracts_to_variable() {
        let mut c = Circuit::new();
        let x = c.add_input(4.0);
        let a = c.add_gate(Kind::And);
        let o = c.add_gate(Kind::Or);
        c.add_edge(x, a).unwrap();
        c.add_edge(a, o).unwrap();
        c.set_output(o);
        let s = simplify_fixpoint(&c, &all());
        assert_eq!(s.circuit.num_vertices(), 1);
        assert_eq!(s.circuit.kind(0), Kind::Input);
        assert_eq!(s.circuit.cost(0), 4.0);
        assert!(s.circuit.is_output(0));
    }

    #[test]
    fn empty_rule_set_is_identity() {
        let (c, _) = egraph_to_circuit(&fixtures::e1());
        let s = simplify_fixpoint(&c, &BTreeSet::new());
        assert_eq!(s.circuit, c);
        assert!(s.log.records.is_empty());
        let opt = brute_force_circuit(&c, true).unwrap();
        let rec = recover_evaluation(&c, &s.log, &opt.witnesses[0], true).unwrap();
        assert_eq!(rec, opt.witnesses[0]);
    }

    #[test]
    fn log_serializes() {
        let (c, _) = egraph_to_circuit(&fixtures::e1());
        let s = simplify_fixpoint(&c, &all());
        let text = serde_json::to_string(&s.log).unwrap();
        let back: RewriteLog = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s.log);
        assert!(text.starts_with('['));
        assert!(text.contains("\"rule\":\"contract_indegree_one\""));
    }
}
