//! Minimum-cost acyclic satisfying evaluation of a monotone circuit by
//! dynamic programming over a nice tree decomposition.
//!
//! A summary at bag X records the values of the bag vertices, which pending
//! existential obligations are already met (a true OR gate has seen a true
//! in-neighbour, a false AND gate has seen a false one), and the transitive
//! closure of the true subgraph restricted to X. Universal obligations are
//! checked edge by edge when the later endpoint is inserted.

use std::time::Instant;

use indexmap::IndexMap;
use thiserror::Error;

use crate::circuit::{
    is_acyclic_evaluation, is_satisfying, is_valid_evaluation, Circuit, Evaluation, Kind, Vertex,
};
use crate::treewidth::{NiceKind, NiceTreeDecomposition};

/// Bags wider than this cannot be packed into the bitset summaries.
pub const MAX_BAG: usize = 64;

#[derive(Debug, Error, PartialEq)]
pub enum DpError {
    #[error("circuit has no outputs")]
    NoOutputs,
    #[error("bag of {0} vertices exceeds the supported maximum of {MAX_BAG}")]
    BagTooLarge(usize),
    #[error("unsatisfiable: no evaluation sets every output to 1")]
    Unsatisfiable,
    #[error("time budget exceeded")]
    Timeout,
    #[error("decomposition root must be the bag {{{0}}}")]
    BadRoot(Vertex),
    #[error("internal check failed: {0}")]
    Internal(String),
}

/// Adds a fresh AND gate over every output and makes it the only output.
pub fn add_output_gate(c: &Circuit) -> Result<(Circuit, Vertex), DpError> {
    if c.num_outputs() == 0 {
        return Err(DpError::NoOutputs);
    }
    let mut out = c.clone();
    let u_out = out.add_gate(Kind::And);
    let olds: Vec<Vertex> = c.outputs().collect();
    for o in olds {
        out.add_edge(o, u_out).expect("fresh vertex");
    }
    out.clear_outputs();
    out.set_output(u_out);
    Ok((out, u_out))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Summary {
    /// Bit i is the value of the i-th bag vertex (bags are sorted).
    pub values: u64,
    /// Bit i is set unless the i-th vertex is a true OR or a false AND gate
    /// still lacking a witness in-neighbour.
    pub justified: u64,
    /// Row i holds the bag positions reachable from position i through true
    /// vertices. Empty when acyclicity is not enforced.
    pub reach: Box<[u64]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Back {
    Leaf,
    Insert { child: usize, value: bool },
    Forget { child: usize },
    Join { left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub summary: Summary,
    pub cost: f64,
    pub back: Back,
}

/// Summary table: one entry per distinct key, holding the cheapest partial
/// evaluation found so far. Keys are kept in discovery order.
#[derive(Debug, Clone, Default)]
pub struct Table {
    index: IndexMap<Summary, usize>,
    entries: Vec<Entry>,
    ignore_justified: bool,
}

impl Table {
    fn new(ignore_justified: bool) -> Self {
        Table {
            ignore_justified,
            ..Table::default()
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    /// Keeps the cheaper of the existing and the new entry; the first one
    /// discovered wins ties.
    fn offer(&mut self, summary: Summary, cost: f64, back: Back) {
        let key = if self.ignore_justified {
            Summary {
                justified: 0,
                ..summary.clone()
            }
        } else {
            summary.clone()
        };
        match self.index.get(&key) {
            Some(&i) => {
                if cost < self.entries[i].cost {
                    self.entries[i] = Entry {
                        summary,
                        cost,
                        back,
                    };
                }
            }
            None => {
                self.index.insert(key, self.entries.len());
                self.entries.push(Entry {
                    summary,
                    cost,
                    back,
                });
            }
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct DpOptions {
    pub enforce_acyclic: bool,
    /// Test hook: entries that differ only in their justification flags are
    /// merged, as if the flags were not part of the summary.
    pub ignore_justified_in_key: bool,
    /// Keep every table (with summaries) in the result for inspection.
    pub keep_tables: bool,
    pub deadline: Option<Instant>,
}

impl DpOptions {
    pub fn acyclic() -> Self {
        DpOptions {
            enforce_acyclic: true,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DpStats {
    pub bags: usize,
    pub max_table: usize,
    pub max_bag: usize,
    /// Per-bag table sizes in processing order: (bag index, kind, |bag|, entries).
    pub table_sizes: Vec<(usize, NiceKind, usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct OptimalResult {
    pub evaluation: Evaluation,
    pub cost: f64,
    pub acyclic: bool,
    pub stats: DpStats,
    /// Filled when `keep_tables` was requested.
    pub tables: Vec<Table>,
}

fn low(p: usize) -> u64 {
    if p >= 64 {
        u64::MAX
    } else {
        (1u64 << p) - 1
    }
}

fn insert_bit(mask: u64, p: usize, bit: bool) -> u64 {
    (mask & low(p)) | ((bit as u64) << p) | ((mask & !low(p)) << 1)
}

fn remove_bit(mask: u64, p: usize) -> u64 {
    (mask & low(p)) | ((mask >> 1) & !low(p))
}

fn bits(mut m: u64) -> impl Iterator<Item = usize> {
    std::iter::from_fn(move || {
        if m == 0 {
            None
        } else {
            let i = m.trailing_zeros() as usize;
            m &= m - 1;
            Some(i)
        }
    })
}

/// Per-bag masks used by the handlers.
struct BagInfo {
    and: u64,
    or: u64,
    input_cost: Vec<f64>,
}

impl BagInfo {
    fn new(c: &Circuit, bag: &[Vertex]) -> Self {
        let mut and = 0;
        let mut or = 0;
        let mut input_cost = Vec::with_capacity(bag.len());
        for (i, &v) in bag.iter().enumerate() {
            match c.kind(v) {
                Kind::And => and |= 1 << i,
                Kind::Or => or |= 1 << i,
                Kind::Input => {}
            }
            input_cost.push(if c.kind(v) == Kind::Input {
                c.cost(v)
            } else {
                0.0
            });
        }
        BagInfo {
            and,
            or,
            input_cost,
        }
    }
}

/// The dynamic program over one circuit.
pub struct Dp<'a> {
    c: &'a Circuit,
    opts: DpOptions,
}

impl<'a> Dp<'a> {
    pub fn new(c: &'a Circuit, opts: DpOptions) -> Self {
        Dp { c, opts }
    }

    /// Handlers stop early once this holds; the caller then reports a
    /// timeout instead of using the partial table.
    fn expired(&self) -> bool {
        self.opts.deadline.is_some_and(|d| Instant::now() >= d)
    }

    /// The table holding only the empty summary at cost 0.
    pub fn handle_leaf(&self) -> Table {
        let mut t = Table::new(self.opts.ignore_justified_in_key);
        t.offer(
            Summary {
                values: 0,
                justified: 0,
                reach: Box::new([]),
            },
            0.0,
            Back::Leaf,
        );
        t
    }

    /// Extends every child entry with u = 0 and u = 1. `bag` is the new bag
    /// (sorted, containing u).
    pub fn handle_insert(&self, child: &Table, bag: &[Vertex], u: Vertex) -> Table {
        let c = self.c;
        let p = bag.binary_search(&u).expect("inserted vertex is in its bag");
        let info = BagInfo::new(c, bag);
        let mut in_u = 0u64;
        let mut out_u = 0u64;
        let mut self_loop = false;
        for &w in c.ins(u) {
            if w == u {
                self_loop = true;
            } else if let Ok(i) = bag.binary_search(&w) {
                in_u |= 1 << i;
            }
        }
        for &w in c.outs(u) {
            if w != u {
                if let Ok(i) = bag.binary_search(&w) {
                    out_u |= 1 << i;
                }
            }
        }
        let kind = c.kind(u);
        let is_output = c.is_output(u);
        let acyclic = self.opts.enforce_acyclic;
        let mut t = Table::new(self.opts.ignore_justified_in_key);

        for (ei, e) in child.entries.iter().enumerate() {
            if ei % 1024 == 1023 && self.expired() {
                break;
            }
            for b in [false, true] {
                if is_output && !b {
                    continue;
                }
                let vals = insert_bit(e.summary.values, p, b);
                // Universal obligations on edges between u and the bag.
                match (kind, b) {
                    (Kind::And, true) if in_u & !vals != 0 => continue,
                    (Kind::Or, false) if in_u & vals != 0 => continue,
                    _ => {}
                }
                if !b && out_u & info.and & vals != 0 {
                    continue;
                }
                if b && out_u & info.or & !vals != 0 {
                    continue;
                }
                let ju = match (kind, b) {
                    (Kind::Or, true) => self_loop || in_u & vals != 0,
                    (Kind::And, false) => self_loop || in_u & !vals != 0,
                    _ => true,
                };
                let mut just = insert_bit(e.summary.justified, p, ju);
                if b {
                    just |= out_u & info.or & vals;
                } else {
                    just |= out_u & info.and & !vals;
                }

                let reach: Box<[u64]> = if acyclic {
                    let k = bag.len();
                    let mut rows = Vec::with_capacity(k);
                    for i in 0..k {
                        if i == p {
                            rows.push(0);
                        } else {
                            let old = if i < p { i } else { i - 1 };
                            rows.push(insert_bit(e.summary.reach[old], p, false));
                        }
                    }
                    if b {
                        if self_loop {
                            continue;
                        }
                        let preds = in_u & vals;
                        let succs = out_u & vals;
                        let mut reach_u = succs;
                        for w in bits(succs) {
                            reach_u |= rows[w];
                        }
                        let mut reaching_u = preds;
                        for a in 0..k {
                            if rows[a] & preds != 0 {
                                reaching_u |= 1 << a;
                            }
                        }
                        if reaching_u & reach_u != 0 {
                            continue;
                        }
                        for a in bits(reaching_u) {
                            rows[a] |= reach_u | (1 << p);
                        }
                        rows[p] = reach_u;
                    }
                    rows.into_boxed_slice()
                } else {
                    Box::new([])
                };

                let cost = e.cost + if b { info.input_cost[p] } else { 0.0 };
                t.offer(
                    Summary {
                        values: vals,
                        justified: just,
                        reach,
                    },
                    cost,
                    Back::Insert { child: ei, value: b },
                );
            }
        }
        t
    }

    /// Drops entries whose forgotten vertex still owes a witness, then
    /// projects the rest. `child_bag` is the bag before forgetting.
    pub fn handle_forget(&self, child: &Table, child_bag: &[Vertex], u: Vertex) -> Table {
        let p = child_bag
            .binary_search(&u)
            .expect("forgotten vertex is in the child bag");
        let mut t = Table::new(self.opts.ignore_justified_in_key);
        for (ei, e) in child.entries.iter().enumerate() {
            if e.summary.justified >> p & 1 == 0 {
                continue;
            }
            let reach: Box<[u64]> = e
                .summary
                .reach
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != p)
                .map(|(_, &r)| remove_bit(r, p))
                .collect();
            t.offer(
                Summary {
                    values: remove_bit(e.summary.values, p),
                    justified: remove_bit(e.summary.justified, p),
                    reach,
                },
                e.cost,
                Back::Forget { child: ei },
            );
        }
        t
    }

    /// Merges entries of two children with identical bags that agree on the
    /// bag values.
    pub fn handle_join(&self, left: &Table, right: &Table, bag: &[Vertex]) -> Table {
        let info = BagInfo::new(self.c, bag);
        let mut by_values: IndexMap<u64, Vec<usize>> = IndexMap::new();
        for (ri, e) in right.entries.iter().enumerate() {
            by_values.entry(e.summary.values).or_default().push(ri);
        }
        let k = bag.len();
        let mut t = Table::new(self.opts.ignore_justified_in_key);
        let mut work = 0usize;
        for (li, l) in left.entries.iter().enumerate() {
            let Some(matches) = by_values.get(&l.summary.values) else {
                continue;
            };
            work += matches.len();
            if work >= 4096 {
                work = 0;
                if self.expired() {
                    break;
                }
            }
            let shared: f64 = bits(l.summary.values).map(|i| info.input_cost[i]).sum();
            for &ri in matches {
                let r = &right.entries[ri];
                let reach: Box<[u64]> = if self.opts.enforce_acyclic {
                    let mut rows: Vec<u64> = (0..k)
                        .map(|i| l.summary.reach[i] | r.summary.reach[i])
                        .collect();
                    for m in 0..k {
                        let rm = rows[m];
                        for row in rows.iter_mut() {
                            if *row >> m & 1 == 1 {
                                *row |= rm;
                            }
                        }
                    }
                    if (0..k).any(|i| rows[i] >> i & 1 == 1) {
                        continue;
                    }
                    rows.into_boxed_slice()
                } else {
                    Box::new([])
                };
                t.offer(
                    Summary {
                        values: l.summary.values,
                        justified: l.summary.justified | r.summary.justified,
                        reach,
                    },
                    l.cost + r.cost - shared,
                    Back::Join {
                        left: li,
                        right: ri,
                    },
                );
            }
        }
        t
    }
}

/// Runs the dynamic program bottom-up over `ntd`, whose root must be the
/// bag `{u_out}` for the unique output `u_out` of `c`, and reconstructs an
/// optimal evaluation by following back-pointers.
pub fn run_dp(
    c: &Circuit,
    ntd: &NiceTreeDecomposition,
    opts: &DpOptions,
) -> Result<OptimalResult, DpError> {
    let outputs: Vec<Vertex> = c.outputs().collect();
    let [u_out] = outputs[..] else {
        return Err(DpError::NoOutputs);
    };
    if ntd.nodes.is_empty() || ntd.nodes[ntd.root].bag != [u_out] {
        return Err(DpError::BadRoot(u_out));
    }
    if let Some(n) = ntd.nodes.iter().find(|n| n.bag.len() > MAX_BAG) {
        return Err(DpError::BagTooLarge(n.bag.len()));
    }

    let dp = Dp::new(c, opts.clone());
    let nn = ntd.nodes.len();
    let mut live: Vec<Option<Table>> = vec![None; nn];
    let mut backs: Vec<Vec<(f64, Back)>> = vec![Vec::new(); nn];
    let mut kept: Vec<Table> = Vec::new();
    let mut stats = DpStats {
        bags: nn,
        ..DpStats::default()
    };

    let retire = |i: usize, t: Table, backs: &mut [Vec<(f64, Back)>], kept: &mut Vec<Table>| {
        backs[i] = t.entries.iter().map(|e| (e.cost, e.back)).collect();
        if opts.keep_tables {
            kept.push(t);
        }
    };

    for i in 0..nn {
        if let Some(d) = opts.deadline {
            if Instant::now() >= d {
                return Err(DpError::Timeout);
            }
        }
        let node = &ntd.nodes[i];
        let mut take = |j: usize| live[j].take().expect("child processed before parent");
        let table = match node.kind {
            NiceKind::Leaf => dp.handle_leaf(),
            NiceKind::Insert(u) => {
                let child = take(node.children[0]);
                let t = dp.handle_insert(&child, &node.bag, u);
                retire(node.children[0], child, &mut backs, &mut kept);
                t
            }
            NiceKind::Forget(u) => {
                let cj = node.children[0];
                let child = take(cj);
                let t = dp.handle_forget(&child, &ntd.nodes[cj].bag, u);
                retire(cj, child, &mut backs, &mut kept);
                t
            }
            NiceKind::Join => {
                let (lj, rj) = (node.children[0], node.children[1]);
                let left = take(lj);
                let right = take(rj);
                let t = dp.handle_join(&left, &right, &node.bag);
                retire(lj, left, &mut backs, &mut kept);
                retire(rj, right, &mut backs, &mut kept);
                t
            }
        };
        if dp.expired() {
            return Err(DpError::Timeout);
        }
        stats.max_table = stats.max_table.max(table.len());
        stats.max_bag = stats.max_bag.max(node.bag.len());
        stats.table_sizes.push((i, node.kind, node.bag.len(), table.len()));
        live[i] = Some(table);
    }

    let root_table = live[ntd.root].take().expect("root processed");
    let best = root_table
        .entries
        .iter()
        .enumerate()
        .filter(|(_, e)| e.summary.values & 1 == 1 && e.summary.justified & 1 == 1)
        .min_by(|a, b| a.1.cost.total_cmp(&b.1.cost))
        .map(|(i, e)| (i, e.cost));
    retire(ntd.root, root_table, &mut backs, &mut kept);
    let Some((best_idx, best_cost)) = best else {
        return Err(DpError::Unsatisfiable);
    };

    let evaluation = traceback(ntd, &backs, ntd.root, best_idx, c.num_vertices());
    let evaluation = Evaluation(evaluation.into_iter().map(|v| v.unwrap_or(false)).collect());

    if !is_valid_evaluation(c, &evaluation) {
        return Err(DpError::Internal("reconstructed evaluation is invalid".into()));
    }
    if !is_satisfying(c, &evaluation) {
        return Err(DpError::Internal("reconstructed evaluation misses an output".into()));
    }
    let acyclic = is_acyclic_evaluation(c, &evaluation);
    if opts.enforce_acyclic && !acyclic {
        return Err(DpError::Internal("reconstructed evaluation is cyclic".into()));
    }
    let cost = evaluation.cost(c);
    if (cost - best_cost).abs() > 1e-6 * best_cost.abs().max(1.0) {
        return Err(DpError::Internal(format!(
            "reconstructed cost {cost} differs from table cost {best_cost}"
        )));
    }
    if opts.keep_tables {
        // Retirement order differs from node order; sort back by node index.
        let mut order: Vec<usize> = Vec::with_capacity(nn);
        for i in 0..nn {
            for &ch in &ntd.nodes[i].children {
                order.push(ch);
            }
        }
        order.push(ntd.root);
        let mut slots: Vec<Option<Table>> = vec![None; nn];
        for (t, i) in kept.into_iter().zip(order) {
            slots[i] = Some(t);
        }
        kept = slots.into_iter().map(|t| t.expect("every table kept")).collect();
    }
    Ok(OptimalResult {
        evaluation,
        cost: best_cost,
        acyclic,
        stats,
        tables: kept,
    })
}

/// Replays the local decisions below `(node, entry)`; vertices never
/// inserted in that subtree stay `None`.
pub fn traceback(
    ntd: &NiceTreeDecomposition,
    backs: &[Vec<(f64, Back)>],
    node: usize,
    entry: usize,
    num_vertices: usize,
) -> Vec<Option<bool>> {
    let mut values = vec![None; num_vertices];
    let mut stack = vec![(node, entry)];
    while let Some((i, ei)) = stack.pop() {
        let n = &ntd.nodes[i];
        match backs[i][ei].1 {
            Back::Leaf => {}
            Back::Insert { child, value } => {
                if let NiceKind::Insert(u) = n.kind {
                    values[u] = Some(value);
                }
                stack.push((n.children[0], child));
            }
            Back::Forget { child } => stack.push((n.children[0], child)),
            Back::Join { left, right } => {
                stack.push((n.children[0], left));
                stack.push((n.children[1], right));
            }
        }
    }
    values
}

/// Back-pointer arrays of kept tables, for use with [`traceback`].
pub fn backs_of(tables: &[Table]) -> Vec<Vec<(f64, Back)>> {
    tables
        .iter()
        .map(|t| t.entries.iter().map(|e| (e.cost, e.back)).collect())
        .collect()
}
