//! Heuristic tree decompositions of a circuit's underlying undirected graph,
//! their validation, and conversion to rooted nice decompositions.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::Circuit;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TreewidthError {
    #[error("no bag contains vertex {0}")]
    NoBagContains(usize),
    #[error("decomposition is not a tree")]
    NotATree,
}

/// Simple undirected graph with sorted adjacency lists and no self-loops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UGraph {
    adj: Vec<Vec<usize>>,
}

impl UGraph {
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut sets = vec![BTreeSet::new(); n];
        for (a, b) in edges {
            if a != b {
                sets[a].insert(b);
                sets[b].insert(a);
            }
        }
        UGraph {
            adj: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
        }
    }

    pub fn num_vertices(&self) -> usize {
        self.adj.len()
    }

    pub fn num_edges(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adj
            .iter()
            .enumerate()
            .flat_map(|(a, ns)| ns.iter().filter(move |&&b| a < b).map(move |&b| (a, b)))
    }

    /// 2|E| / |V|, or 0 for the empty graph.
    pub fn average_degree(&self) -> f64 {
        if self.adj.is_empty() {
            0.0
        } else {
            2.0 * self.num_edges() as f64 / self.num_vertices() as f64
        }
    }
}

/// One undirected edge per unordered pair joined by at least one directed
/// edge; self-loops vanish.
pub fn underlying_graph(c: &Circuit) -> UGraph {
    UGraph::from_edges(c.num_vertices(), c.edges())
}

/// Bags (sorted vertex lists) connected by tree edges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeDecomposition {
    pub bags: Vec<Vec<usize>>,
    pub edges: Vec<(usize, usize)>,
}

impl TreeDecomposition {
    /// Largest bag size minus one (0 for decompositions with only empty bags).
    pub fn width(&self) -> usize {
        self.bags
            .iter()
            .map(Vec::len)
            .max()
            .unwrap_or(0)
            .saturating_sub(1)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "bags": self.bags,
            "edges": self.edges,
            "width": self.width(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Heuristic {
    #[default]
    MinDegree,
    MinFill,
}

impl std::str::FromStr for Heuristic {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "min-degree" => Ok(Heuristic::MinDegree),
            "min-fill" => Ok(Heuristic::MinFill),
            other => Err(format!("unknown heuristic `{other}`")),
        }
    }
}

pub fn decompose(g: &UGraph, h: Heuristic) -> TreeDecomposition {
    match h {
        Heuristic::MinDegree => min_degree_decomposition(g),
        Heuristic::MinFill => min_fill_decomposition(g),
    }
}

/// Eliminates a vertex of minimum current degree (lowest index on ties),
/// emitting the bag {v} ∪ N(v) and turning N(v) into a clique.
pub fn min_degree_decomposition(g: &UGraph) -> TreeDecomposition {
    eliminate(g, false, |adj, _| adj.len())
}

/// Eliminates a vertex whose elimination adds the fewest fill edges.
pub fn min_fill_decomposition(g: &UGraph) -> TreeDecomposition {
    eliminate(g, true, fill_in)
}

fn fill_in(adj: &BTreeSet<usize>, sets: &[BTreeSet<usize>]) -> usize {
    let ns: Vec<usize> = adj.iter().copied().collect();
    let mut missing = 0;
    for (i, &a) in ns.iter().enumerate() {
        for &b in &ns[i + 1..] {
            if !sets[a].contains(&b) {
                missing += 1;
            }
        }
    }
    missing
}

fn eliminate(
    g: &UGraph,
    two_hop: bool,
    score: impl Fn(&BTreeSet<usize>, &[BTreeSet<usize>]) -> usize,
) -> TreeDecomposition {
    let n = g.num_vertices();
    if n == 0 {
        return TreeDecomposition {
            bags: vec![Vec::new()],
            edges: Vec::new(),
        };
    }
    let mut sets: Vec<BTreeSet<usize>> = (0..n)
        .map(|v| g.neighbors(v).iter().copied().collect())
        .collect();
    let mut current: Vec<usize> = (0..n).map(|v| score(&sets[v], &sets)).collect();
    let mut queue: BTreeSet<(usize, usize)> = (0..n).map(|v| (current[v], v)).collect();
    let mut position = vec![usize::MAX; n];
    let mut bags = Vec::with_capacity(n);
    let mut order = Vec::with_capacity(n);

    while let Some((_, v)) = queue.pop_first() {
        position[v] = order.len();
        order.push(v);
        let ns: Vec<usize> = sets[v].iter().copied().collect();
        let mut bag = ns.clone();
        bag.push(v);
        bag.sort_unstable();
        bags.push(bag);
        for &a in &ns {
            sets[a].remove(&v);
        }
        for (i, &a) in ns.iter().enumerate() {
            for &b in &ns[i + 1..] {
                sets[a].insert(b);
                sets[b].insert(a);
            }
        }
        sets[v].clear();
        // Degrees change only on N(v); fill counts within distance two.
        let mut touched: BTreeSet<usize> = ns.iter().copied().collect();
        if two_hop {
            for &a in &ns {
                touched.extend(sets[a].iter().copied());
            }
        }
        for w in touched {
            if position[w] != usize::MAX {
                continue;
            }
            let s = score(&sets[w], &sets);
            if s != current[w] {
                queue.remove(&(current[w], w));
                current[w] = s;
                queue.insert((s, w));
            }
        }
    }

    // Bag i belongs to order[i]; its parent is the bag of the neighbour
    // eliminated first after it.
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    let mut roots = Vec::new();
    for (i, bag) in bags.iter().enumerate() {
        let v = order[i];
        let parent = bag
            .iter()
            .filter(|&&u| u != v)
            .map(|&u| position[u])
            .min();
        match parent {
            Some(p) => edges.push((i, p)),
            None => roots.push(i),
        }
    }
    // Separate components have disjoint bags, so chaining their roots keeps
    // the decomposition valid.
    for w in roots.windows(2) {
        edges.push((w[0], w[1]));
    }
    TreeDecomposition { bags, edges }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TdReport {
    pub valid: bool,
    pub width: usize,
    pub violations: Vec<String>,
}

/// Checks vertex and edge coverage, the tree shape, and connectivity of each
/// vertex's occurrence set.
pub fn validate_decomposition(g: &UGraph, t: &TreeDecomposition) -> TdReport {
    let mut violations = Vec::new();
    let n = g.num_vertices();
    let b = t.bags.len();

    let mut occurrences = vec![0usize; n];
    let mut member: Vec<BTreeSet<usize>> = Vec::with_capacity(b);
    for (i, bag) in t.bags.iter().enumerate() {
        let set: BTreeSet<usize> = bag.iter().copied().collect();
        if set.len() != bag.len() {
            violations.push(format!("bag {i} repeats a vertex"));
        }
        for &v in &set {
            if v >= n {
                violations.push(format!("bag {i} holds out-of-range vertex {v}"));
            } else {
                occurrences[v] += 1;
            }
        }
        member.push(set);
    }
    for v in 0..n {
        if occurrences[v] == 0 {
            violations.push(format!("vertex {v} is in no bag"));
        }
    }

    // Edge coverage: index bags by vertex and intersect.
    let mut bags_of = vec![Vec::new(); n];
    for (i, set) in member.iter().enumerate() {
        for &v in set.iter().filter(|&&v| v < n) {
            bags_of[v].push(i);
        }
    }
    for (a, c) in g.edges() {
        let covered = bags_of[a].iter().any(|&i| member[i].contains(&c));
        if !covered {
            violations.push(format!("edge {{{a}, {c}}} is in no bag"));
        }
    }

    // Tree shape.
    let mut tree_ok = b > 0 && t.edges.len() + 1 == b;
    let mut tadj = vec![Vec::new(); b];
    for &(i, j) in &t.edges {
        if i >= b || j >= b || i == j {
            tree_ok = false;
            continue;
        }
        tadj[i].push(j);
        tadj[j].push(i);
    }
    if tree_ok {
        let mut seen = vec![false; b];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = stack.pop() {
            for &j in &tadj[i] {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    stack.push(j);
                }
            }
        }
        tree_ok = count == b;
    }
    if !tree_ok {
        violations.push("bags do not form a tree".to_string());
    } else {
        // In a tree, a vertex's bags are connected iff they span k-1 tree edges.
        let mut shared = vec![0usize; n];
        for &(i, j) in &t.edges {
            for &v in member[i].intersection(&member[j]) {
                if v < n {
                    shared[v] += 1;
                }
            }
        }
        for v in 0..n {
            if occurrences[v] > 0 && shared[v] + 1 != occurrences[v] {
                violations.push(format!("bags containing vertex {v} are not connected"));
            }
        }
    }

    TdReport {
        valid: violations.is_empty(),
        width: t.width(),
        violations,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NiceKind {
    Leaf,
    Insert(usize),
    Forget(usize),
    Join,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NiceNode {
    /// Sorted bag contents.
    pub bag: Vec<usize>,
    pub kind: NiceKind,
    pub children: Vec<usize>,
}

/// Rooted nice tree decomposition. Children always have smaller indices than
/// their parent, so increasing index order is a valid bottom-up order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NiceTreeDecomposition {
    pub nodes: Vec<NiceNode>,
    pub root: usize,
}

impl NiceTreeDecomposition {
    pub fn width(&self) -> usize {
        self.nodes
            .iter()
            .map(|n| n.bag.len())
            .max()
            .unwrap_or(0)
            .saturating_sub(1)
    }

    pub fn parent_of(&self) -> Vec<Option<usize>> {
        let mut parent = vec![None; self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            for &c in &node.children {
                parent[c] = Some(i);
            }
        }
        parent
    }

    /// Plain tree decomposition with the same bags and tree edges.
    pub fn to_decomposition(&self) -> TreeDecomposition {
        let mut edges = Vec::new();
        for (i, node) in self.nodes.iter().enumerate() {
            for &c in &node.children {
                edges.push((c, i));
            }
        }
        TreeDecomposition {
            bags: self.nodes.iter().map(|n| n.bag.clone()).collect(),
            edges,
        }
    }

    /// Checks each bag against its kind's structural equation and that the
    /// root bag is exactly `{root_vertex}`.
    pub fn check_structure(&self, root_vertex: usize) -> Result<(), String> {
        if self.nodes.is_empty() || self.root != self.nodes.len() - 1 {
            return Err("root must be the last node".into());
        }
        if self.nodes[self.root].bag != [root_vertex] {
            return Err(format!(
                "root bag is {:?}, expected [{root_vertex}]",
                self.nodes[self.root].bag
            ));
        }
        let mut has_parent = vec![false; self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            for &c in &node.children {
                if c >= i {
                    return Err(format!("child {c} of node {i} is not earlier"));
                }
                if std::mem::replace(&mut has_parent[c], true) {
                    return Err(format!("node {c} has two parents"));
                }
            }
            let child_bag = |k: usize| &self.nodes[node.children[k]].bag;
            let ok = match node.kind {
                NiceKind::Leaf => node.children.is_empty() && node.bag.is_empty(),
                NiceKind::Insert(v) => {
                    node.children.len() == 1 && {
                        let cb = child_bag(0);
                        !cb.contains(&v) && with(cb, v) == node.bag
                    }
                }
                NiceKind::Forget(v) => {
                    node.children.len() == 1 && {
                        let cb = child_bag(0);
                        cb.contains(&v) && without(cb, v) == node.bag
                    }
                }
                NiceKind::Join => {
                    node.children.len() == 2
                        && *child_bag(0) == node.bag
                        && *child_bag(1) == node.bag
                }
            };
            if !ok {
                return Err(format!("node {i} violates its {:?} equation", node.kind));
            }
        }
        if has_parent.iter().filter(|p| !**p).count() != 1 {
            return Err("nice decomposition is not a single tree".into());
        }
        Ok(())
    }
}

fn with(bag: &[usize], v: usize) -> Vec<usize> {
    let mut b = bag.to_vec();
    let pos = b.binary_search(&v).unwrap_or_else(|p| p);
    b.insert(pos, v);
    b
}

fn without(bag: &[usize], v: usize) -> Vec<usize> {
    bag.iter().copied().filter(|&u| u != v).collect()
}

struct NiceBuilder {
    nodes: Vec<NiceNode>,
}

impl NiceBuilder {
    fn push(&mut self, bag: Vec<usize>, kind: NiceKind, children: Vec<usize>) -> usize {
        self.nodes.push(NiceNode {
            bag,
            kind,
            children,
        });
        self.nodes.len() - 1
    }

    fn insert(&mut self, top: usize, v: usize) -> usize {
        let bag = with(&self.nodes[top].bag, v);
        self.push(bag, NiceKind::Insert(v), vec![top])
    }

    fn forget(&mut self, top: usize, v: usize) -> usize {
        let bag = without(&self.nodes[top].bag, v);
        self.push(bag, NiceKind::Forget(v), vec![top])
    }
}

/// Converts a tree decomposition into a nice one rooted at the first bag
/// containing `must_contain`, then forgets every other root vertex so that
/// the final root bag is exactly `{must_contain}`.
pub fn to_nice(
    t: &TreeDecomposition,
    must_contain: usize,
) -> Result<NiceTreeDecomposition, TreewidthError> {
    let b = t.bags.len();
    let root = t
        .bags
        .iter()
        .position(|bag| bag.contains(&must_contain))
        .ok_or(TreewidthError::NoBagContains(must_contain))?;
    let mut tadj = vec![Vec::new(); b];
    for &(i, j) in &t.edges {
        tadj[i].push(j);
        tadj[j].push(i);
    }
    let mut order = Vec::with_capacity(b);
    let mut parent = vec![usize::MAX; b];
    let mut seen = vec![false; b];
    let mut queue = VecDeque::from([root]);
    seen[root] = true;
    while let Some(i) = queue.pop_front() {
        order.push(i);
        for &j in &tadj[i] {
            if !seen[j] {
                seen[j] = true;
                parent[j] = i;
                queue.push_back(j);
            }
        }
    }
    if order.len() != b {
        return Err(TreewidthError::NotATree);
    }
    let mut children = vec![Vec::new(); b];
    for &i in order.iter().skip(1) {
        children[parent[i]].push(i);
    }

    let sorted: Vec<Vec<usize>> = t
        .bags
        .iter()
        .map(|bag| {
            let mut s = bag.clone();
            s.sort_unstable();
            s.dedup();
            s
        })
        .collect();

    let mut nb = NiceBuilder { nodes: Vec::new() };
    let mut top = vec![usize::MAX; b];
    for &i in order.iter().rev() {
        let bag = &sorted[i];
        let result = if children[i].is_empty() {
            let mut cur = nb.push(Vec::new(), NiceKind::Leaf, Vec::new());
            for &v in bag.iter().rev() {
                cur = nb.insert(cur, v);
            }
            cur
        } else {
            let mut branches = Vec::with_capacity(children[i].len());
            for &c in &children[i] {
                let mut cur = top[c];
                for &v in &sorted[c] {
                    if bag.binary_search(&v).is_err() {
                        cur = nb.forget(cur, v);
                    }
                }
                for &v in bag.iter().rev() {
                    if sorted[c].binary_search(&v).is_err() {
                        cur = nb.insert(cur, v);
                    }
                }
                branches.push(cur);
            }
            let mut acc = branches[0];
            for &next in &branches[1..] {
                acc = nb.push(bag.clone(), NiceKind::Join, vec![acc, next]);
            }
            acc
        };
        top[i] = result;
    }
    let mut cur = top[root];
    for &v in &sorted[root] {
        if v != must_contain {
            cur = nb.forget(cur, v);
        }
    }
    Ok(NiceTreeDecomposition {
        root: cur,
        nodes: nb.nodes,
    })
}
