//! Exhaustive reference solvers for small instances.

use thiserror::Error;

use crate::circuit::{
    evaluate_from_inputs, is_acyclic_evaluation, is_satisfying, is_valid_evaluation, Circuit,
    Evaluation, Kind, Vertex,
};
use crate::egraph::{extraction_cost, ClassIdx, EGraph, Extraction};

/// Upper bound on Π(|C| + 1) for [`brute_force_extract`].
pub const EXTRACT_LIMIT: f64 = 1e7;
/// Upper bound on |V_in| for [`brute_force_circuit`].
pub const CIRCUIT_INPUT_LIMIT: usize = 22;
/// Upper bound on |V| for [`brute_force_circuit_exhaustive`].
pub const EXHAUSTIVE_VERTEX_LIMIT: usize = 18;

const EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("instance too large for the oracle: {what} = {size} exceeds {limit}")]
    TooLarge {
        what: &'static str,
        size: f64,
        limit: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    /// `None` when no candidate qualifies.
    pub optimum: Option<f64>,
    pub witnesses: Vec<Extraction>,
    /// Number of qualifying (closed, satisfying, minimal, optionally acyclic)
    /// extractions examined.
    pub count_satisfying: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CircuitOracleResult {
    pub optimum: Option<f64>,
    pub witnesses: Vec<Evaluation>,
    pub count_satisfying: usize,
}

fn argmin<T: Clone>(items: &[(T, f64)]) -> (Option<f64>, Vec<T>) {
    let Some(best) = items.iter().map(|(_, c)| *c).reduce(f64::min) else {
        return (None, Vec::new());
    };
    let witnesses = items
        .iter()
        .filter(|(_, c)| (c - best).abs() <= EPS * best.abs().max(1.0))
        .map(|(t, _)| t.clone())
        .collect();
    (Some(best), witnesses)
}

/// All minimal satisfying extractions, each with its acyclicity flag.
pub fn minimal_satisfying_extractions(g: &EGraph) -> Result<Vec<(Extraction, bool)>, OracleError> {
    let space: f64 = (0..g.num_classes())
        .map(|c| (g.nodes_of(c).len() + 1) as f64)
        .product();
    if space > EXTRACT_LIMIT {
        return Err(OracleError::TooLarge {
            what: "extraction space",
            size: space,
            limit: EXTRACT_LIMIT,
        });
    }
    let nc = g.num_classes();
    // digit[c] == 0 means unused, k > 0 means the (k-1)-th member.
    let mut digit = vec![0usize; nc];
    let mut found = Vec::new();
    loop {
        if let Some(acyclic) = qualifies(g, &digit) {
            let x = Extraction::from_pairs(
                (0..nc)
                    .filter(|&c| digit[c] > 0)
                    .map(|c| (c, g.nodes_of(c)[digit[c] - 1])),
            );
            found.push((x, acyclic));
        }
        let mut i = 0;
        loop {
            if i == nc {
                return Ok(found);
            }
            digit[i] += 1;
            if digit[i] <= g.nodes_of(i).len() {
                break;
            }
            digit[i] = 0;
            i += 1;
        }
    }
}

/// Returns `Some(acyclic)` when the candidate is a closed, satisfying,
/// minimal extraction.
fn qualifies(g: &EGraph, digit: &[usize]) -> Option<bool> {
    let chosen = |c: ClassIdx| (digit[c] > 0).then(|| g.nodes_of(c)[digit[c] - 1]);
    if g.roots().iter().any(|&r| digit[r] == 0) {
        return None;
    }
    for c in 0..g.num_classes() {
        if let Some(n) = chosen(c) {
            if g.deps(n).iter().any(|&d| digit[d] == 0) {
                return None;
            }
        }
    }
    let nc = g.num_classes();
    let mut reached = vec![false; nc];
    let mut stack: Vec<ClassIdx> = g.roots().to_vec();
    while let Some(c) = stack.pop() {
        if std::mem::replace(&mut reached[c], true) {
            continue;
        }
        stack.extend(g.deps(chosen(c).expect("closed")).iter().copied());
    }
    if (0..nc).any(|c| digit[c] > 0 && !reached[c]) {
        return None;
    }
    // Acyclicity of the selected-path relation via colouring DFS.
    let mut state = vec![0u8; nc];
    let mut acyclic = true;
    'outer: for s in 0..nc {
        if digit[s] == 0 || state[s] != 0 {
            continue;
        }
        let mut stack = vec![(s, 0usize)];
        state[s] = 1;
        while let Some(&mut (c, ref mut i)) = stack.last_mut() {
            let deps = g.deps(chosen(c).expect("closed"));
            if *i < deps.len() {
                let d = deps[*i];
                *i += 1;
                match state[d] {
                    0 => {
                        state[d] = 1;
                        stack.push((d, 0));
                    }
                    1 => {
                        acyclic = false;
                        break 'outer;
                    }
                    _ => {}
                }
            } else {
                state[c] = 2;
                stack.pop();
            }
        }
    }
    Some(acyclic)
}

/// Minimum-cost minimal satisfying extraction by enumerating every map from
/// classes to "unused" or one of their members.
pub fn brute_force_extract(g: &EGraph, require_acyclic: bool) -> Result<OracleResult, OracleError> {
    let all = minimal_satisfying_extractions(g)?;
    let scored: Vec<(Extraction, f64)> = all
        .into_iter()
        .filter(|(_, acyclic)| *acyclic || !require_acyclic)
        .map(|(x, _)| {
            let cost = extraction_cost(g, &x);
            (x, cost)
        })
        .collect();
    let count_satisfying = scored.len();
    let (optimum, witnesses) = argmin(&scored);
    Ok(OracleResult {
        optimum,
        witnesses,
        count_satisfying,
    })
}

/// Minimum-cost satisfying evaluation over all input assignments extended by
/// least fixpoint. With `require_acyclic` only assignments whose fixpoint is
/// acyclic count; these are exactly the acyclic valid evaluations.
pub fn brute_force_circuit(
    c: &Circuit,
    require_acyclic: bool,
) -> Result<CircuitOracleResult, OracleError> {
    let inputs: Vec<Vertex> = c.inputs().collect();
    if inputs.len() > CIRCUIT_INPUT_LIMIT {
        return Err(OracleError::TooLarge {
            what: "input count",
            size: inputs.len() as f64,
            limit: CIRCUIT_INPUT_LIMIT as f64,
        });
    }
    let mut scored = Vec::new();
    let mut assign = vec![false; c.num_vertices()];
    for mask in 0u64..(1u64 << inputs.len()) {
        let mut cost = 0.0;
        for (i, &x) in inputs.iter().enumerate() {
            assign[x] = mask >> i & 1 == 1;
            if assign[x] {
                cost += c.cost(x);
            }
        }
        let r = evaluate_from_inputs(c, &assign);
        if is_satisfying(c, &r.evaluation) && (r.acyclic || !require_acyclic) {
            scored.push((r.evaluation, cost));
        }
    }
    let count_satisfying = scored.len();
    let (optimum, witnesses) = argmin(&scored);
    Ok(CircuitOracleResult {
        optimum,
        witnesses,
        count_satisfying,
    })
}

/// Minimum-cost valid satisfying evaluation over all 2^|V| assignments,
/// optionally restricted to acyclic ones. Unlike [`brute_force_circuit`] this
/// also sees self-justifying cyclic evaluations.
pub fn brute_force_circuit_exhaustive(
    c: &Circuit,
    require_acyclic: bool,
) -> Result<CircuitOracleResult, OracleError> {
    let n = c.num_vertices();
    if n > EXHAUSTIVE_VERTEX_LIMIT {
        return Err(OracleError::TooLarge {
            what: "vertex count",
            size: n as f64,
            limit: EXHAUSTIVE_VERTEX_LIMIT as f64,
        });
    }
    let mut scored = Vec::new();
    for a in all_valid_evaluations(c) {
        if is_satisfying(c, &a) && (!require_acyclic || is_acyclic_evaluation(c, &a)) {
            let cost = a.cost(c);
            scored.push((a, cost));
        }
    }
    let count_satisfying = scored.len();
    let (optimum, witnesses) = argmin(&scored);
    Ok(CircuitOracleResult {
        optimum,
        witnesses,
        count_satisfying,
    })
}

/// Every valid evaluation of a circuit with at most
/// [`EXHAUSTIVE_VERTEX_LIMIT`] vertices.
pub fn all_valid_evaluations(c: &Circuit) -> Vec<Evaluation> {
    let n = c.num_vertices();
    assert!(n <= EXHAUSTIVE_VERTEX_LIMIT, "circuit too large to enumerate");
    (0u64..(1u64 << n))
        .map(|mask| Evaluation((0..n).map(|v| mask >> v & 1 == 1).collect()))
        .filter(|a| is_valid_evaluation(c, a))
        .collect()
}

/// Minimality by definition: no valid satisfying evaluation has a strictly
/// smaller true set. Enumerates subsets of the true set (at most 20 vertices).
pub fn brute_force_is_minimal(c: &Circuit, a: &Evaluation) -> bool {
    if !is_valid_evaluation(c, a) || !is_satisfying(c, a) {
        return false;
    }
    let t = a.true_vertices();
    assert!(t.len() <= 20, "true set too large to enumerate");
    let full = (1u64 << t.len()) - 1;
    for mask in 0..full {
        let mut b = Evaluation::zeros(c.num_vertices());
        for (i, &v) in t.iter().enumerate() {
            b.0[v] = mask >> i & 1 == 1;
        }
        if is_valid_evaluation(c, &b) && is_satisfying(c, &b) {
            return false;
        }
    }
    true
}

/// Cost of a vertex set's true inputs; used by tests to score evaluations.
pub fn input_cost(c: &Circuit, true_set: &[Vertex]) -> f64 {
    true_set
        .iter()
        .filter(|&&v| c.kind(v) == Kind::Input)
        .map(|&v| c.cost(v))
        .sum()
}
