//! Seeded generators for random e-graphs and circuits.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::circuit::{Circuit, Kind};
use crate::egraph::{ClassIdx, EGraph, EGraphBuilder};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy)]
pub struct EGraphParams {
    pub max_classes: usize,
    pub max_nodes_per_class: usize,
    pub max_deps: usize,
    pub max_cost: u32,
    /// Probability that a dependency points to a later class (keeps the
    /// graph mostly acyclic); otherwise the target is uniform.
    pub dag_bias: f64,
}

impl Default for EGraphParams {
    fn default() -> Self {
        EGraphParams {
            max_classes: 8,
            max_nodes_per_class: 3,
            max_deps: 2,
            max_cost: 9,
            dag_bias: 0.85,
        }
    }
}

/// Random small e-graph with class 0 as a root (and sometimes a second root).
pub fn random_egraph(rng: &mut impl Rng, p: &EGraphParams) -> EGraph {
    let k = rng.gen_range(1..=p.max_classes);
    let mut b = EGraphBuilder::new();
    let classes: Vec<ClassIdx> = (0..k).map(|i| b.class(&format!("c{i}"))).collect();
    let mut id = 0;
    for i in 0..k {
        let members = rng.gen_range(1..=p.max_nodes_per_class);
        for _ in 0..members {
            let arity = if i + 1 == k && rng.gen_bool(0.7) {
                0
            } else {
                rng.gen_range(0..=p.max_deps)
            };
            let mut deps = Vec::new();
            for _ in 0..arity {
                let d = if i + 1 < k && rng.gen_bool(p.dag_bias) {
                    rng.gen_range(i + 1..k)
                } else {
                    rng.gen_range(0..k)
                };
                deps.push(classes[d]);
            }
            let cost = rng.gen_range(0..=p.max_cost) as f64;
            b.add_node(&format!("n{id}"), &format!("op{}", deps.len()), classes[i], &deps, cost)
                .expect("fresh node");
            id += 1;
        }
    }
    b.add_root(classes[0]);
    if k > 2 && rng.gen_bool(0.2) {
        b.add_root(classes[rng.gen_range(1..k)]);
    }
    b.build().expect("generated e-graph is well formed")
}

/// Random circuit with at most `max_vertices` vertices, random gate kinds,
/// random edges (self-loops included) and one or two outputs.
pub fn random_circuit(rng: &mut impl Rng, max_vertices: usize) -> Circuit {
    let n = rng.gen_range(2..=max_vertices.max(2));
    let mut c = Circuit::new();
    let n_inputs = rng.gen_range(1..=(n / 2).max(1));
    for _ in 0..n_inputs {
        c.add_input(rng.gen_range(0..=9) as f64);
    }
    for _ in n_inputs..n {
        c.add_gate(if rng.gen_bool(0.5) { Kind::And } else { Kind::Or });
    }
    let density = rng.gen_range(0.1..0.35);
    for s in 0..n {
        for d in n_inputs..n {
            let forward = s < d;
            let prob = if forward { density } else { density / 3.0 };
            if rng.gen_bool(prob) {
                c.add_edge(s, d).expect("edge into gate");
            }
        }
    }
    // Every gate gets at least one in-neighbour so AND gates are not constant.
    for d in n_inputs..n {
        if c.ins(d).is_empty() {
            let s = rng.gen_range(0..d.max(1));
            c.add_edge(s, d).expect("edge into gate");
        }
    }
    let outs = rng.gen_range(1..=2);
    for _ in 0..outs {
        c.set_output(rng.gen_range(n_inputs..n.max(n_inputs + 1)).min(n - 1));
    }
    c
}

/// Random circuit whose structure resembles converted e-graphs (inputs
/// guarding AND gates, OR gates over ANDs), with extra random edges.
pub fn random_egraph_like_circuit(rng: &mut impl Rng, max_vertices: usize) -> Circuit {
    let p = EGraphParams {
        max_classes: 3,
        max_nodes_per_class: 2,
        max_deps: 2,
        max_cost: 9,
        dag_bias: 0.6,
    };
    loop {
        let g = random_egraph(rng, &p);
        let (c, _) = crate::circuit::egraph_to_circuit(&g);
        if c.num_vertices() <= max_vertices {
            return c;
        }
    }
}

/// A chain of `len` classes where class i has two members: one depending on
/// class i+1 and one depending on classes i+1 and i+2. The last two classes
/// are leaves. Width stays constant as `len` grows.
pub fn chain_egraph(len: usize, seed: u64) -> EGraph {
    assert!(len >= 2);
    let mut r = rng(seed);
    let mut b = EGraphBuilder::new();
    let classes: Vec<ClassIdx> = (0..len).map(|i| b.class(&format!("c{i}"))).collect();
    for i in 0..len {
        let c1 = r.gen_range(1..=9) as f64;
        let c2 = r.gen_range(1..=9) as f64;
        if i + 2 < len {
            b.add_node(&format!("a{i}"), "f", classes[i], &[classes[i + 1]], c1)
                .expect("fresh");
            b.add_node(
                &format!("b{i}"),
                "g",
                classes[i],
                &[classes[i + 1], classes[i + 2]],
                c2,
            )
            .expect("fresh");
        } else if i + 1 < len {
            b.add_node(&format!("a{i}"), "f", classes[i], &[classes[i + 1]], c1)
                .expect("fresh");
            b.add_node(&format!("b{i}"), "k", classes[i], &[], c2 + 10.0)
                .expect("fresh");
        } else {
            b.add_node(&format!("a{i}"), "x", classes[i], &[], c1)
                .expect("fresh");
            b.add_node(&format!("b{i}"), "y", classes[i], &[], c2)
                .expect("fresh");
        }
    }
    b.add_root(classes[0]);
    b.build().expect("chain e-graph is well formed")
}

/// A compiler-term-like e-graph with at least `min_nodes` e-nodes: a DAG of
/// expression classes built bottom-up, with local sharing of recent
/// subterms, most classes holding a single e-node and some holding a few
/// equivalent alternatives, occasionally with a rewrite that refers back up
/// the term (a cycle).
pub fn compiler_like_egraph(rng: &mut impl Rng, min_nodes: usize) -> EGraph {
    let mut b = EGraphBuilder::new();
    let mut classes: Vec<ClassIdx> = Vec::new();
    let mut node_count = 0;
    let mut pending_back: Vec<(ClassIdx, ClassIdx)> = Vec::new();
    let ops = ["add", "mul", "sub", "load", "shl", "select"];
    while node_count < min_nodes {
        let i = classes.len();
        let c = b.class(&format!("e{i}"));
        let members = if rng.gen_bool(0.7) {
            1
        } else {
            rng.gen_range(2..=3)
        };
        for _ in 0..members {
            let arity = if i < 4 { 0 } else { rng.gen_range(0..=3) };
            let mut deps = Vec::new();
            for _ in 0..arity {
                let window = 6.min(i);
                let d = if rng.gen_bool(0.9) {
                    i - 1 - rng.gen_range(0..window)
                } else {
                    rng.gen_range(0..i)
                };
                deps.push(classes[d]);
            }
            let op = if deps.is_empty() {
                "const"
            } else {
                ops.choose(rng).copied().unwrap_or("op")
            };
            b.add_node(
                &format!("t{node_count}"),
                op,
                c,
                &deps,
                rng.gen_range(1..=5) as f64,
            )
            .expect("fresh node");
            node_count += 1;
        }
        if i > 8 && rng.gen_bool(0.05) {
            pending_back.push((classes[i - 1 - rng.gen_range(0..4)], c));
        }
        classes.push(c);
    }
    // Rewrites such as x = (x * 1) give an alternative referring to an
    // enclosing class.
    for (k, (child, parent)) in pending_back.into_iter().enumerate() {
        b.add_node(&format!("back{k}"), "id", child, &[parent], 1.0)
            .expect("fresh node");
    }
    b.add_root(*classes.last().expect("nonempty"));
    b.build().expect("generated e-graph is well formed")
}

/// Random e-graph biased towards cheap cyclic alternatives.
pub fn cyclic_egraph(rng: &mut impl Rng) -> EGraph {
    let p = EGraphParams {
        max_classes: 5,
        max_nodes_per_class: 3,
        max_deps: 2,
        max_cost: 9,
        dag_bias: 0.4,
    };
    random_egraph(rng, &p)
}
