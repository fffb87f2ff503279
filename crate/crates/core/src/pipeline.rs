//! End-to-end extraction pipeline, benchmark records and oracle checks.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::io::Write;
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use crate::circuit::{egraph_to_circuit, prune_acyclic, Evaluation, NodeMap};
use crate::dp::{add_output_gate, run_dp, DpError, DpOptions};
use crate::egraph::{
    extraction_cost, parse_egraph, validate_extraction, EGraph, EGraphError, Extraction,
    ValidityReport,
};
use crate::oracle::{brute_force_extract, OracleError};
use crate::simplify::{recover_evaluation, simplify_until, RewriteLog, RuleId, SimplifyError};
use crate::treewidth::{
    decompose, to_nice, underlying_graph, Heuristic, TreeDecomposition, TreewidthError,
};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(15);

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub timeout: Duration,
    pub rules: BTreeSet<RuleId>,
    pub heuristic: Heuristic,
    pub enforce_acyclic: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            timeout: DEFAULT_TIMEOUT,
            rules: RuleId::ALL.into_iter().collect(),
            heuristic: Heuristic::MinDegree,
            enforce_acyclic: true,
        }
    }
}

impl RunConfig {
    /// Rules actually run: removing lone OR loops relies on acyclicity, so
    /// it is dropped when cyclic evaluations are allowed.
    pub fn effective_rules(&self) -> BTreeSet<RuleId> {
        let mut r = self.rules.clone();
        if !self.enforce_acyclic {
            r.remove(&RuleId::RemoveLoneOrLoops);
        }
        r
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("input error: {0}")]
    Input(#[from] EGraphError),
    #[error("unsatisfiable: no extraction covers every root")]
    Unsatisfiable,
    #[error("timed out during {0}")]
    Timeout(&'static str),
    #[error(transparent)]
    Dp(DpError),
    #[error(transparent)]
    Simplify(#[from] SimplifyError),
    #[error(transparent)]
    Treewidth(#[from] TreewidthError),
    #[error("internal error: {0}")]
    Internal(String),
}

impl From<DpError> for PipelineError {
    fn from(e: DpError) -> Self {
        match e {
            DpError::Unsatisfiable => PipelineError::Unsatisfiable,
            DpError::Timeout => PipelineError::Timeout("dp"),
            other => PipelineError::Dp(other),
        }
    }
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Unsatisfiable => 2,
            PipelineError::Timeout(_) => 3,
            PipelineError::Input(_) => 4,
            _ => 1,
        }
    }
}

/// Cooperative time budget checked between stages.
#[derive(Debug, Clone, Copy)]
pub struct Deadline {
    pub at: Instant,
}

impl Deadline {
    pub fn after(budget: Duration) -> Self {
        Deadline {
            at: Instant::now() + budget,
        }
    }

    pub fn check(&self, stage: &'static str) -> Result<(), PipelineError> {
        if Instant::now() >= self.at {
            Err(PipelineError::Timeout(stage))
        } else {
            Ok(())
        }
    }
}

/// One CSV row per instance. Δ fields are (after − before) / before.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BenchRecord {
    pub source: String,
    pub name: String,
    pub v_before: Option<usize>,
    pub e_before: Option<usize>,
    pub width_before: Option<usize>,
    /// Undirected average degree of the converted circuit.
    pub avg_undirected_degree_before: Option<f64>,
    pub v_after: Option<usize>,
    pub e_after: Option<usize>,
    pub width_after: Option<usize>,
    pub delta_width: Option<f64>,
    pub delta_v: Option<f64>,
    pub delta_e: Option<f64>,
    pub cost: Option<f64>,
    pub t_parse_ms: Option<f64>,
    pub t_convert_ms: Option<f64>,
    pub t_simplify_ms: Option<f64>,
    pub t_decompose_ms: Option<f64>,
    pub t_dp_ms: Option<f64>,
    pub timeout: bool,
}

pub const CSV_HEADER: &str = "source,name,v_before,e_before,width_before,\
avg_undirected_degree_before,v_after,e_after,width_after,delta_width,delta_v,delta_e,\
cost,t_parse_ms,t_convert_ms,t_simplify_ms,t_decompose_ms,t_dp_ms,timeout";

fn rel(before: Option<usize>, after: Option<usize>) -> Option<f64> {
    match (before, after) {
        (Some(b), Some(a)) if b > 0 => Some((a as f64 - b as f64) / b as f64),
        _ => None,
    }
}

impl BenchRecord {
    fn fill_deltas(&mut self) {
        self.delta_v = rel(self.v_before, self.v_after);
        self.delta_e = rel(self.e_before, self.e_after);
        self.delta_width = rel(self.width_before, self.width_after);
    }
}

pub fn write_csv<W: Write>(records: &[BenchRecord], w: W) -> Result<(), csv::Error> {
    let mut wr = csv::Writer::from_writer(w);
    if records.is_empty() {
        wr.write_record(CSV_HEADER.split(','))?;
    }
    for r in records {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

/// Per-source averages over instances that did not time out.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SourceSummary {
    pub source: String,
    pub instances: usize,
    pub avg_delta_width: Option<f64>,
    pub avg_delta_v: Option<f64>,
    pub avg_delta_e: Option<f64>,
    pub pct_timeout: f64,
}

pub fn summarize(records: &[BenchRecord]) -> Vec<SourceSummary> {
    let mut by: BTreeMap<&str, Vec<&BenchRecord>> = BTreeMap::new();
    for r in records {
        by.entry(&r.source).or_default().push(r);
    }
    let avg = |xs: Vec<f64>| {
        (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
    };
    by.into_iter()
        .map(|(source, rs)| {
            let done: Vec<&&BenchRecord> = rs.iter().filter(|r| !r.timeout).collect();
            SourceSummary {
                source: source.to_string(),
                instances: rs.len(),
                avg_delta_width: avg(done.iter().filter_map(|r| r.delta_width).collect()),
                avg_delta_v: avg(done.iter().filter_map(|r| r.delta_v).collect()),
                avg_delta_e: avg(done.iter().filter_map(|r| r.delta_e).collect()),
                pct_timeout: 100.0 * rs.iter().filter(|r| r.timeout).count() as f64
                    / rs.len() as f64,
            }
        })
        .collect()
}

impl fmt::Display for SourceSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pct = |x: Option<f64>| match x {
            Some(v) => format!("{:+.1}%", 100.0 * v),
            None => "n/a".to_string(),
        };
        write!(
            f,
            "{}: {} instances, avg Δwidth {}, avg Δ|V| {}, avg Δ|E| {}, {:.1}% timeout",
            self.source,
            self.instances,
            pct(self.avg_delta_width),
            pct(self.avg_delta_v),
            pct(self.avg_delta_e),
            self.pct_timeout
        )
    }
}

#[derive(Debug, Clone)]
pub struct ExtractOutcome {
    pub extraction: Extraction,
    pub cost: f64,
    pub acyclic: bool,
    pub report: ValidityReport,
    pub record: BenchRecord,
    pub log: RewriteLog,
    pub td: TreeDecomposition,
}

#[derive(Debug, Clone, Copy)]
struct Stages {
    measure_before: bool,
    run_dp: bool,
}

fn ms(t: Instant) -> Option<f64> {
    Some(t.elapsed().as_secs_f64() * 1e3)
}

fn width_of(c: &crate::circuit::Circuit, h: Heuristic) -> Result<(TreeDecomposition, usize), PipelineError> {
    let (with_out, _) = add_output_gate(c)?;
    let td = decompose(&underlying_graph(&with_out), h);
    let w = td.width();
    Ok((td, w))
}

/// Runs the stages on a parsed e-graph, recording metrics into `rec` as
/// they become available. Returns the extraction when the DP ran.
fn pipeline(
    g: &EGraph,
    cfg: &RunConfig,
    deadline: Deadline,
    stages: Stages,
    rec: &mut BenchRecord,
) -> Result<Option<ExtractOutcome>, PipelineError> {
    deadline.check("parse")?;
    let t = Instant::now();
    let (c, m) = egraph_to_circuit(g);
    rec.t_convert_ms = ms(t);
    rec.v_before = Some(c.num_vertices());
    rec.e_before = Some(c.num_edges());
    rec.avg_undirected_degree_before = Some(underlying_graph(&c).average_degree());
    deadline.check("convert")?;

    if stages.measure_before {
        let t = Instant::now();
        let (_, w) = width_of(&c, cfg.heuristic)?;
        rec.width_before = Some(w);
        rec.t_decompose_ms = ms(t);
        deadline.check("decompose")?;
    }

    let t = Instant::now();
    let s = simplify_until(&c, &cfg.effective_rules(), Some(deadline.at));
    rec.t_simplify_ms = ms(t);
    rec.v_after = Some(s.circuit.num_vertices());
    rec.e_after = Some(s.circuit.num_edges());
    rec.fill_deltas();
    if s.timed_out {
        return Err(PipelineError::Timeout("simplify"));
    }
    deadline.check("simplify")?;

    let t = Instant::now();
    let (c2, u_out) = add_output_gate(&s.circuit)?;
    let td = decompose(&underlying_graph(&c2), cfg.heuristic);
    rec.width_after = Some(td.width());
    rec.fill_deltas();
    let nice = to_nice(&td, u_out)?;
    let spent = rec.t_decompose_ms.unwrap_or(0.0);
    rec.t_decompose_ms = ms(t).map(|x| x + spent);
    deadline.check("decompose")?;
    if !stages.run_dp {
        return Ok(None);
    }

    let t = Instant::now();
    let opts = DpOptions {
        enforce_acyclic: cfg.enforce_acyclic,
        deadline: Some(deadline.at),
        ..DpOptions::default()
    };
    let r = run_dp(&c2, &nice, &opts);
    rec.t_dp_ms = ms(t);
    let r = r?;
    let n = s.circuit.num_vertices();
    let simplified_eval = Evaluation(r.evaluation.0[..n].to_vec());
    let simplified_eval = if cfg.enforce_acyclic {
        prune_acyclic(&s.circuit, &simplified_eval)
    } else {
        simplified_eval
    };
    let original = recover_evaluation(&c, &s.log, &simplified_eval, cfg.enforce_acyclic)?;
    let extraction = extraction_from_roots(g, &m, &original)?;
    let report = validate_extraction(g, &extraction);
    let ok = if cfg.enforce_acyclic {
        report.all_ok()
    } else {
        report.is_extraction && report.is_satisfying
    };
    if !ok {
        return Err(PipelineError::Internal(format!(
            "extraction failed validation: {:?}",
            report.violations
        )));
    }
    let cost = extraction_cost(g, &extraction);
    if (cost - r.cost).abs() > 1e-6 * r.cost.abs().max(1.0) {
        return Err(PipelineError::Internal(format!(
            "extraction cost {cost} differs from dp optimum {}",
            r.cost
        )));
    }
    rec.cost = Some(cost);
    Ok(Some(ExtractOutcome {
        extraction,
        cost,
        acyclic: report.is_acyclic,
        report,
        record: rec.clone(),
        log: s.log,
        td,
    }))
}

/// Walks from the roots choosing, for each reached class, its first e-node
/// whose AND gate is true.
pub fn extraction_from_roots(
    g: &EGraph,
    m: &NodeMap,
    a: &Evaluation,
) -> Result<Extraction, PipelineError> {
    let mut x = Extraction::new();
    let mut queue: VecDeque<usize> = g.roots().iter().copied().collect();
    while let Some(cl) = queue.pop_front() {
        if x.contains(cl) {
            continue;
        }
        let u = g
            .nodes_of(cl)
            .iter()
            .copied()
            .find(|&u| a.get(m.and[u]))
            .ok_or_else(|| {
                PipelineError::Internal(format!("class {} has no true e-node", g.class_name(cl)))
            })?;
        x.choose(cl, u);
        queue.extend(g.deps(u).iter().copied());
    }
    Ok(x)
}

/// Full pipeline on a parsed e-graph.
pub fn extract(g: &EGraph, cfg: &RunConfig) -> Result<ExtractOutcome, PipelineError> {
    let mut rec = BenchRecord::default();
    let stages = Stages {
        measure_before: false,
        run_dp: true,
    };
    pipeline(g, cfg, Deadline::after(cfg.timeout), stages, &mut rec)?
        .ok_or_else(|| PipelineError::Internal("dp did not run".into()))
}

/// Parses and extracts, timing the parse as well.
pub fn extract_str(text: &str, cfg: &RunConfig) -> Result<ExtractOutcome, PipelineError> {
    let deadline = Deadline::after(cfg.timeout);
    let t = Instant::now();
    let g = parse_egraph(text)?;
    let parse = ms(t);
    let mut rec = BenchRecord::default();
    let stages = Stages {
        measure_before: false,
        run_dp: true,
    };
    let mut out = pipeline(&g, cfg, deadline, stages, &mut rec)?
        .ok_or_else(|| PipelineError::Internal("dp did not run".into()))?;
    out.record.t_parse_ms = parse;
    Ok(out)
}

/// Metrics for one instance. With `run_dp` the full pipeline runs and the
/// cost is recorded. Timeouts and unsatisfiable instances still produce a
/// row; only unreadable input is an error.
pub fn bench_instance(
    source: &str,
    name: &str,
    text: &str,
    cfg: &RunConfig,
    run_dp: bool,
) -> Result<BenchRecord, PipelineError> {
    let deadline = Deadline::after(cfg.timeout);
    let mut rec = BenchRecord {
        source: source.to_string(),
        name: name.to_string(),
        ..BenchRecord::default()
    };
    let t = Instant::now();
    let g = parse_egraph(text)?;
    rec.t_parse_ms = ms(t);
    let stages = Stages {
        measure_before: true,
        run_dp,
    };
    match pipeline(&g, cfg, deadline, stages, &mut rec) {
        Ok(_) | Err(PipelineError::Unsatisfiable) => Ok(rec),
        Err(PipelineError::Timeout(_)) => {
            rec.timeout = true;
            Ok(rec)
        }
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CheckOutcome {
    /// Both agree; `None` means both found no extraction.
    Match { cost: Option<f64> },
    Mismatch {
        pipeline: Option<f64>,
        oracle: Option<f64>,
    },
    OracleSkipped { cost: Option<f64> },
}

impl CheckOutcome {
    pub fn is_match(&self) -> bool {
        matches!(self, CheckOutcome::Match { .. })
    }
}

fn show(c: Option<f64>) -> String {
    c.map_or_else(|| "unsat".to_string(), |c| c.to_string())
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CheckOutcome::Match { cost } => write!(f, "MATCH cost={}", show(*cost)),
            CheckOutcome::Mismatch { pipeline, oracle } => write!(
                f,
                "MISMATCH pipeline={} oracle={}",
                show(*pipeline),
                show(*oracle)
            ),
            CheckOutcome::OracleSkipped { cost } => {
                write!(f, "oracle skipped: too large (cost={})", show(*cost))
            }
        }
    }
}

/// Compares the pipeline's optimum with the exhaustive oracle.
pub fn check(g: &EGraph, cfg: &RunConfig) -> Result<CheckOutcome, PipelineError> {
    let ours = match extract(g, cfg) {
        Ok(o) => Some(o.cost),
        Err(PipelineError::Unsatisfiable) => None,
        Err(e) => return Err(e),
    };
    match brute_force_extract(g, cfg.enforce_acyclic) {
        Err(OracleError::TooLarge { .. }) => Ok(CheckOutcome::OracleSkipped { cost: ours }),
        Ok(r) => {
            let same = match (ours, r.optimum) {
                (Some(a), Some(b)) => (a - b).abs() <= 1e-6 * b.abs().max(1.0),
                (None, None) => true,
                _ => false,
            };
            Ok(if same {
                CheckOutcome::Match { cost: ours }
            } else {
                CheckOutcome::Mismatch {
                    pipeline: ours,
                    oracle: r.optimum,
                }
            })
        }
    }
}
