//! Acceptance criteria, run one after another so timings are not skewed.
//! Each prints one PASS/FAIL line; any failure makes the binary exit 1.

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use twextract::circuit::{
    egraph_to_circuit, evaluation_to_extraction, extraction_to_evaluation, is_acyclic_evaluation,
    is_satisfying, is_valid_evaluation, minimality, prune_acyclic, Circuit, Minimality,
};
use twextract::dp::{add_output_gate, run_dp, DpOptions};
use twextract::egraph::{extraction_cost, validate_extraction, EGraph};
use twextract::fixtures;
use twextract::gen::{
    chain_egraph, compiler_like_egraph, cyclic_egraph, random_circuit, random_egraph,
    random_egraph_like_circuit, rng, EGraphParams,
};
use twextract::oracle::{all_valid_evaluations, brute_force_circuit, brute_force_extract, minimal_satisfying_extractions};
use twextract::pipeline::{bench_instance, check, extract, summarize, CheckOutcome, RunConfig};
use twextract::simplify::{apply_rule, recover_evaluation, simplify_fixpoint, RuleId};
use twextract::treewidth::{
    min_degree_decomposition, to_nice, underlying_graph, validate_decomposition, NiceKind,
    NiceNode, NiceTreeDecomposition, UGraph,
};


const ORACLE_INSTANCES: u64 = 300;
const SIMPLIFY_CIRCUITS: u64 = 500;
const SIMPLIFY_MAX_VERTICES: usize = 12;
const EFFECT_INSTANCES: u64 = 50;
const EFFECT_MIN_NODES: usize = 200;
const EFFECT_MEDIAN_DV: f64 = -0.40;
const CYCLIC_FIXTURES: usize = 50;
const SCALING_SIZES: [usize; 3] = [1_000, 10_000, 100_000];
const SCALING_MAX_EXPONENT: f64 = 1.5;
const SCALING_BUDGET: Duration = Duration::from_secs(300);
const TD_GRAPHS: u64 = 300;
const BIJECTION_EXHAUSTIVE: usize = 18;
const EPS: f64 = 1e-9;

fn report(name: &str, ok: bool, detail: impl AsRef<str>) {
    let tag = if ok { "PASS" } else { "FAIL" };
    println!("{tag} {name}: {}", detail.as_ref());
}

fn oracle_corpus() -> impl Iterator<Item = (u64, EGraph)> {
    (0..ORACLE_INSTANCES).map(|seed| (seed, random_egraph(&mut rng(seed), &EGraphParams::default())))
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if !n.is_multiple_of(2) {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

fn oracle_equivalence() {
    let t = Instant::now();
    let cfg = RunConfig::default();
    let mut failures = Vec::new();
    let mut compared = 0;
    for (seed, g) in oracle_corpus() {
        match check(&g, &cfg) {
            Ok(CheckOutcome::Match { cost }) => {
                compared += 1;
                if cost.is_some() {
                    let out = extract(&g, &cfg).expect("satisfiable instance extracts");
                    let rep = validate_extraction(&g, &out.extraction);
                    if !rep.all_ok() {
                        failures.push(format!("seed {seed}: {:?}", rep.violations));
                    }
                }
            }
            other => failures.push(format!("seed {seed}: {other:?}")),
        }
    }
    let elapsed = t.elapsed();
    let ok = failures.is_empty() && compared == ORACLE_INSTANCES && elapsed < Duration::from_secs(60);
    report(
        "oracle equivalence",
        ok,
        format!("{compared}/{ORACLE_INSTANCES} equal, {} failures, {elapsed:.1?}", failures.len()),
    );
    assert!(ok, "{failures:?}");
}

fn bijection_suite() {
    let mut checked = 0;
    let mut failures = Vec::new();
    for (seed, g) in oracle_corpus() {
        let (c, m) = egraph_to_circuit(&g);
        for (x, acyclic) in minimal_satisfying_extractions(&g).expect("small instance") {
            checked += 1;
            let a = extraction_to_evaluation(&g, &m, &x);
            let mut bad = Vec::new();
            if !is_valid_evaluation(&c, &a) {
                bad.push("invalid");
            }
            if !is_satisfying(&c, &a) {
                bad.push("not satisfying");
            }
            if minimality(&c, &a) != Minimality::Minimal {
                bad.push("not minimal");
            }
            if (a.cost(&c) - extraction_cost(&g, &x)).abs() > EPS {
                bad.push("cost differs");
            }
            if is_acyclic_evaluation(&c, &a) != acyclic {
                bad.push("acyclicity differs");
            }
            match evaluation_to_extraction(&g, &m, &a) {
                Ok(back) if back == x => {
                    if extraction_to_evaluation(&g, &m, &back) != a {
                        bad.push("evaluation round trip");
                    }
                }
                _ => bad.push("extraction round trip"),
            }
            if !bad.is_empty() {
                failures.push(format!("seed {seed}: {bad:?}"));
            }
        }
    }
    // Evaluation side: every minimal satisfying evaluation maps to an extraction.
    let mut evals = 0;
    for (seed, g) in oracle_corpus() {
        let (c, m) = egraph_to_circuit(&g);
        if c.num_vertices() > BIJECTION_EXHAUSTIVE {
            continue;
        }
        let expected = minimal_satisfying_extractions(&g).unwrap().len();
        let mut found = 0;
        for a in all_valid_evaluations(&c) {
            if !is_satisfying(&c, &a) || minimality(&c, &a) != Minimality::Minimal {
                continue;
            }
            found += 1;
            match evaluation_to_extraction(&g, &m, &a) {
                Ok(x) if extraction_to_evaluation(&g, &m, &x) == a => {}
                _ => failures.push(format!("seed {seed}: evaluation does not round trip")),
            }
        }
        if found != expected {
            failures.push(format!("seed {seed}: {found} minimal evaluations, {expected} extractions"));
        }
        evals += found;
    }
    let ok = failures.is_empty() && checked > 0 && evals > 0;
    report(
        "bijection",
        ok,
        format!(
            "{checked} minimal extractions, {evals} minimal evaluations, {} failures",
            failures.len()
        ),
    );
    assert!(ok, "{failures:?}");
}

fn simplify_corpus() -> impl Iterator<Item = (u64, Circuit)> {
    (0..SIMPLIFY_CIRCUITS).map(|seed| {
        let mut r = rng(seed);
        let c = if seed % 2 == 0 {
            random_circuit(&mut r, SIMPLIFY_MAX_VERTICES)
        } else {
            random_egraph_like_circuit(&mut r, SIMPLIFY_MAX_VERTICES)
        };
        (seed, c)
    })
}

fn same(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => (x - y).abs() <= EPS,
        (None, None) => true,
        _ => false,
    }
}

fn simplification_soundness() {
    let all: BTreeSet<RuleId> = RuleId::ALL.into_iter().collect();
    let mut failures = Vec::new();
    let mut fired = 0;
    let mut recovered = 0;
    for (seed, c) in simplify_corpus() {
        assert!(c.num_vertices() <= SIMPLIFY_MAX_VERTICES);
        let base = brute_force_circuit(&c, true).unwrap().optimum;
        for rule in RuleId::ALL {
            let (one, records) = apply_rule(&c, rule);
            fired += records.len();
            let got = brute_force_circuit(&one, true).unwrap().optimum;
            if !same(base, got) {
                failures.push(format!("seed {seed} {rule} pass: {base:?} -> {got:?}"));
            }
            let only = simplify_fixpoint(&c, &BTreeSet::from([rule]));
            let got = brute_force_circuit(&only.circuit, true).unwrap().optimum;
            if !same(base, got) {
                failures.push(format!("seed {seed} {rule} fixpoint: {base:?} -> {got:?}"));
            }
        }
        let s = simplify_fixpoint(&c, &all);
        let res = brute_force_circuit(&s.circuit, true).unwrap();
        if !same(base, res.optimum) {
            failures.push(format!("seed {seed} fixpoint: {base:?} -> {:?}", res.optimum));
        }
        for w in &res.witnesses {
            let w = prune_acyclic(&s.circuit, w);
            match recover_evaluation(&c, &s.log, &w, true) {
                Ok(orig) if same(Some(orig.cost(&c)), base) => recovered += 1,
                Ok(orig) => failures.push(format!(
                    "seed {seed} recovery cost {} vs {base:?}",
                    orig.cost(&c)
                )),
                Err(e) => failures.push(format!("seed {seed} recovery: {e}")),
            }
        }
    }
    let ok = failures.is_empty();
    report(
        "simplification soundness",
        ok,
        format!(
            "{SIMPLIFY_CIRCUITS} circuits, {fired} single-pass rewrites, {recovered} recoveries, {} discrepancies",
            failures.len()
        ),
    );
    assert!(ok, "{failures:?}");
}

fn simplification_effectiveness() {
    let cfg = RunConfig::default();
    let mut records = Vec::new();
    for seed in 0..EFFECT_INSTANCES {
        let g = compiler_like_egraph(&mut rng(seed), EFFECT_MIN_NODES);
        assert!(g.num_nodes() >= EFFECT_MIN_NODES);
        let text = g.to_json().to_string();
        let r = bench_instance("compiler-like", &format!("c{seed}"), &text, &cfg, false).unwrap();
        assert!(!r.timeout);
        records.push(r);
    }
    let dv = median(records.iter().map(|r| r.delta_v.unwrap()).collect());
    let dw = median(
        records
            .iter()
            .map(|r| r.width_after.unwrap() as f64 - r.width_before.unwrap() as f64)
            .collect(),
    );
    let ok = dv <= EFFECT_MEDIAN_DV && dw <= 0.0;
    report(
        "simplification effectiveness",
        ok,
        format!(
            "{} instances, median Δ|V| {:+.1}%, median Δwidth {dw:+}",
            records.len(),
            100.0 * dv
        ),
    );
    for s in summarize(&records) {
        println!("  {s}");
    }
    assert!(ok);
}

/// or_of_two(3, 10) plus the output gate, decomposed so that the OR gate's
/// first child is forgotten before the second is inserted.
fn known_flag_fixture() -> (Circuit, NiceTreeDecomposition) {
    let base = fixtures::or_of_two(3.0, 10.0);
    let (c, u) = add_output_gate(&base).unwrap();
    let (xa, xb, a, b, o) = (0, 1, 2, 3, 4);
    let mut nodes: Vec<NiceNode> = Vec::new();
    let mut push = |bag: Vec<usize>, kind: NiceKind| {
        let children = if nodes.is_empty() { vec![] } else { vec![nodes.len() - 1] };
        let mut bag = bag;
        bag.sort_unstable();
        nodes.push(NiceNode { bag, kind, children });
    };
    push(vec![], NiceKind::Leaf);
    push(vec![o], NiceKind::Insert(o));
    push(vec![o, xa], NiceKind::Insert(xa));
    push(vec![o, xa, a], NiceKind::Insert(a));
    push(vec![o, a], NiceKind::Forget(xa));
    push(vec![o], NiceKind::Forget(a));
    push(vec![o, xb], NiceKind::Insert(xb));
    push(vec![o, xb, b], NiceKind::Insert(b));
    push(vec![o, b], NiceKind::Forget(xb));
    push(vec![o], NiceKind::Forget(b));
    push(vec![o, u], NiceKind::Insert(u));
    push(vec![u], NiceKind::Forget(o));
    let root = nodes.len() - 1;
    (c, NiceTreeDecomposition { nodes, root })
}

fn known_flag_regression() {
    let (c, ntd) = known_flag_fixture();
    ntd.check_structure(c.outputs().next().unwrap()).unwrap();
    assert!(validate_decomposition(&underlying_graph(&c), &ntd.to_decomposition()).valid);
    let optimum = brute_force_circuit(&c, true).unwrap().optimum.unwrap();
    let with_flag = run_dp(&c, &ntd, &DpOptions::acyclic()).unwrap().cost;
    let hook = DpOptions {
        ignore_justified_in_key: true,
        ..DpOptions::acyclic()
    };
    let without = run_dp(&c, &ntd, &hook);
    let worse = match &without {
        Ok(r) => r.cost > optimum + EPS,
        Err(_) => true,
    };
    let ok = (with_flag - optimum).abs() <= EPS && worse;
    report(
        "known-flag regression",
        ok,
        format!(
            "optimum {optimum}, with flag {with_flag}, without flag {:?}",
            without.map(|r| r.cost)
        ),
    );
    assert!(ok);
}

/// E-graphs whose cheapest satisfying extraction (cycles allowed) is
/// strictly cheaper than every acyclic one, or where only cyclic ones exist.
fn cyclic_fixtures() -> Vec<EGraph> {
    let mut out = Vec::new();
    for k in 1..=10 {
        out.push(fixtures::cheap_cycle_egraph(k as f64, 10.0 + k as f64));
    }
    out.push(fixtures::cyclic_only());
    let mut seed = 0;
    while out.len() < CYCLIC_FIXTURES + 10 {
        let g = cyclic_egraph(&mut rng(seed));
        seed += 1;
        let free = brute_force_extract(&g, false).unwrap().optimum;
        let acyc = brute_force_extract(&g, true).unwrap().optimum;
        let strictly_cyclic = match (free, acyc) {
            (Some(f), Some(a)) => f < a - EPS,
            (Some(_), None) => true,
            _ => false,
        };
        if strictly_cyclic {
            out.push(g);
        }
    }
    out
}

fn acyclicity_enforcement() {
    let fixtures = cyclic_fixtures();
    let strict = RunConfig::default();
    let loose = RunConfig {
        enforce_acyclic: false,
        ..RunConfig::default()
    };
    let mut failures = Vec::new();
    let mut unsat = 0;
    for (i, g) in fixtures.iter().enumerate() {
        let want = brute_force_extract(g, true).unwrap().optimum;
        let got = match extract(g, &strict) {
            Ok(o) => {
                if !o.acyclic || !validate_extraction(g, &o.extraction).all_ok() {
                    failures.push(format!("#{i}: invalid acyclic result"));
                }
                Some(o.cost)
            }
            Err(e) if e.exit_code() == 2 => {
                unsat += 1;
                None
            }
            Err(e) => {
                failures.push(format!("#{i}: {e}"));
                continue;
            }
        };
        if !same(want, got) {
            failures.push(format!("#{i}: acyclic {got:?} vs oracle {want:?}"));
        }
        match extract(g, &loose) {
            Ok(o) => {
                if let Some(w) = want {
                    if o.cost > w + EPS {
                        failures.push(format!("#{i}: cyclic cost {} above {w}", o.cost));
                    }
                }
            }
            Err(e) => failures.push(format!("#{i}: no-acyclic run failed: {e}")),
        }
    }
    let ok = failures.is_empty() && fixtures.len() >= CYCLIC_FIXTURES;
    report(
        "acyclicity enforcement",
        ok,
        format!(
            "{} fixtures ({unsat} unsatisfiable when acyclic), {} failures",
            fixtures.len(),
            failures.len()
        ),
    );
    assert!(ok, "{failures:?}");
}

/// Least-squares slope of log t against log n.
fn fit_exponent(points: &[(f64, f64)]) -> f64 {
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}

fn fixed_width_scaling() {
    let start = Instant::now();
    let cfg = RunConfig {
        timeout: SCALING_BUDGET,
        ..RunConfig::default()
    };
    let mut points = Vec::new();
    let mut widths = Vec::new();
    for &n in &SCALING_SIZES {
        let g = chain_egraph(n / 2, 7);
        assert_eq!(g.num_nodes(), n);
        let t = Instant::now();
        let out = extract(&g, &cfg).expect("chain extracts");
        points.push((n as f64, t.elapsed().as_secs_f64()));
        widths.push(out.record.width_after.unwrap());
    }
    let b = fit_exponent(&points);
    let total = start.elapsed();
    let ok = b <= SCALING_MAX_EXPONENT && total < SCALING_BUDGET;
    let timings: Vec<String> = points
        .iter()
        .map(|(n, t)| format!("n={n} {:.3}s", t))
        .collect();
    report(
        "fixed-width scaling",
        ok,
        format!("b = {b:.2}, widths {widths:?}, {}, total {total:.1?}", timings.join(", ")),
    );
    assert!(ok);
}

fn random_graph(seed: u64) -> UGraph {
    use rand::Rng;
    let mut r = rng(seed);
    if seed % 2 == 0 {
        let n = r.gen_range(1..=30);
        let p = r.gen_range(0.05..0.4);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if r.gen_bool(p) {
                    edges.push((i, j));
                }
            }
        }
        UGraph::from_edges(n, edges)
    } else {
        underlying_graph(&random_circuit(&mut r, 40))
    }
}

fn decomposition_validity() {
    let mut failures = Vec::new();
    for seed in 0..TD_GRAPHS {
        let g = random_graph(seed);
        let td = min_degree_decomposition(&g);
        let rep = validate_decomposition(&g, &td);
        if !rep.valid {
            failures.push(format!("graph {seed}: {:?}", rep.violations));
            continue;
        }
        if g.num_vertices() == 0 {
            continue;
        }
        let nice = match to_nice(&td, 0) {
            Ok(n) => n,
            Err(e) => {
                failures.push(format!("graph {seed}: {e}"));
                continue;
            }
        };
        if let Err(e) = nice.check_structure(0) {
            failures.push(format!("graph {seed} nice structure: {e}"));
        }
        let rep = validate_decomposition(&g, &nice.to_decomposition());
        if !rep.valid || nice.width() > td.width().max(1) {
            failures.push(format!("graph {seed} nice: {:?}", rep.violations));
        }
    }
    let fig = UGraph::from_edges(6, fixtures::width_two_graph_edges());
    let td = min_degree_decomposition(&fig);
    let fig_ok = validate_decomposition(&fig, &td).valid && td.width() == 2;
    let ok = failures.is_empty() && fig_ok;
    report(
        "decomposition validity",
        ok,
        format!(
            "{TD_GRAPHS} graphs, {} failures, example graph width {}",
            failures.len(),
            td.width()
        ),
    );
    assert!(ok, "{failures:?}");
}

fn main() -> ExitCode {
    let criteria: [(&str, fn()); 8] = [
        ("oracle equivalence", oracle_equivalence),
        ("bijection", bijection_suite),
        ("simplification soundness", simplification_soundness),
        ("simplification effectiveness", simplification_effectiveness),
        ("known-flag regression", known_flag_regression),
        ("acyclicity enforcement", acyclicity_enforcement),
        ("fixed-width scaling", fixed_width_scaling),
        ("decomposition validity", decomposition_validity),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        if std::panic::catch_unwind(f).is_err() {
            eprintln!("criterion `{name}` failed");
            failed += 1;
        }
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
