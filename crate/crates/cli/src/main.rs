use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use twextract::circuit::{egraph_to_circuit, Circuit};
use twextract::dp::add_output_gate;
use twextract::egraph::{parse_egraph, EGraph};
use twextract::gen::{random_egraph, rng, EGraphParams};
use twextract::pipeline::{
    bench_instance, check, extract_str, summarize, write_csv, BenchRecord, CheckOutcome,
    PipelineError, RunConfig,
};
use twextract::simplify::{parse_rule_set, simplify_fixpoint};
use twextract::treewidth::{decompose, underlying_graph};

const EXIT_ERROR: u8 = 1;
const EXIT_INPUT: u8 = 4;

#[derive(Parser)]
#[command(name = "twextract", version, about = "Optimal e-graph extraction via tree decompositions")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct PipelineOpts {
    /// Per-instance time budget in seconds.
    #[arg(long, default_value_t = 15.0)]
    timeout: f64,
    /// Simplification rules: `all`, `none`, or a comma-separated list.
    #[arg(long, default_value = "all")]
    rules: String,
    #[arg(long, default_value = "min-degree")]
    heuristic: String,
    /// Allow cyclic extractions.
    #[arg(long)]
    no_acyclic: bool,
}

impl PipelineOpts {
    fn config(&self) -> anyhow::Result<RunConfig> {
        if !(self.timeout > 0.0 && self.timeout.is_finite()) {
            bail!("--timeout must be positive");
        }
        Ok(RunConfig {
            timeout: Duration::from_secs_f64(self.timeout),
            rules: parse_rule_set(&self.rules).map_err(anyhow::Error::msg)?,
            heuristic: self.heuristic.parse().map_err(anyhow::Error::msg)?,
            enforce_acyclic: !self.no_acyclic,
        })
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Convert an e-graph JSON file into circuit JSON.
    Convert {
        input: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Simplify a circuit JSON file.
    Simplify {
        input: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long, default_value = "all")]
        rules: String,
        /// Skip rules that assume acyclic evaluations.
        #[arg(long)]
        no_acyclic: bool,
        /// Write the rewrite log as JSON.
        #[arg(long, value_name = "PATH")]
        emit_log: Option<PathBuf>,
    },
    /// Size and width before and after simplification, one CSV row per file.
    Stats {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        opts: PipelineOpts,
        #[arg(long, value_name = "PATH")]
        csv: Option<PathBuf>,
        /// Directory receiving the decomposition of each simplified circuit.
        #[arg(long, value_name = "DIR")]
        emit_td: Option<PathBuf>,
    },
    /// Extract an optimal term from an e-graph.
    Extract {
        input: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        opts: PipelineOpts,
        #[arg(long, value_name = "PATH")]
        emit_td: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        emit_log: Option<PathBuf>,
    },
    /// Run the full pipeline on many files and record per-stage metrics.
    Bench {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        opts: PipelineOpts,
        #[arg(long, value_name = "PATH")]
        csv: Option<PathBuf>,
    },
    /// Compare the pipeline's optimum against the exhaustive oracle, on a
    /// file or on a seeded batch of random e-graphs.
    Check {
        input: Option<PathBuf>,
        #[command(flatten)]
        opts: PipelineOpts,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        count: usize,
    },
}

/// An error carrying its exit code.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure {
            code: e.exit_code() as u8,
            err: e.into(),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(err: anyhow::Error) -> Self {
        Failure {
            code: EXIT_ERROR,
            err,
        }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(err: serde_json::Error) -> Self {
        anyhow::Error::from(err).into()
    }
}

fn input_error(err: anyhow::Error) -> Failure {
    Failure {
        code: EXIT_INPUT,
        err,
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(input_error)
}

fn load_egraph(path: &Path) -> Result<EGraph, Failure> {
    let text = read(path)?;
    parse_egraph(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(input_error)
}

fn write_out(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => fs::write(p, format!("{text}\n")).with_context(|| format!("writing {}", p.display())),
        None => match writeln!(std::io::stdout().lock(), "{text}") {
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
            _ => Ok(()),
        },
    }
}

fn pretty(v: &serde_json::Value) -> anyhow::Result<String> {
    Ok(serde_json::to_string_pretty(v)?)
}

/// Files named on the command line, with directories expanded to their
/// `.json` entries (sorted). Each file's source is its parent directory.
fn collect_inputs(inputs: &[PathBuf]) -> Result<Vec<(String, PathBuf)>, Failure> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut files: Vec<PathBuf> = fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))
                .map_err(input_error)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "json"))
                .collect();
            files.sort();
            out.extend(files.into_iter().map(|f| (source_of(&f), f)));
        } else if p.is_file() {
            out.push((source_of(p), p.clone()));
        } else {
            return Err(input_error(anyhow::anyhow!("no such input: {}", p.display())));
        }
    }
    Ok(out)
}

fn source_of(path: &Path) -> String {
    path.parent()
        .and_then(Path::file_name)
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| ".".into())
}

fn name_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn run_many(
    inputs: &[PathBuf],
    cfg: &RunConfig,
    run_dp: bool,
    csv_path: Option<&Path>,
    emit_td: Option<&Path>,
) -> Result<(), Failure> {
    let files = collect_inputs(inputs)?;
    let mut records: Vec<BenchRecord> = Vec::new();
    let mut failed = 0;
    for (source, path) in &files {
        let text = read(path)?;
        match bench_instance(source, &name_of(path), &text, cfg, run_dp) {
            Ok(r) => {
                if r.timeout {
                    eprintln!("{}: timeout", path.display());
                }
                records.push(r);
            }
            Err(e) => {
                eprintln!("{}: {e}", path.display());
                failed += 1;
                continue;
            }
        }
        if let Some(dir) = emit_td {
            let g = parse_egraph(&text).map_err(|e| input_error(e.into()))?;
            let (c, _) = egraph_to_circuit(&g);
            let s = simplify_fixpoint(&c, &cfg.effective_rules());
            let (with_out, _) = add_output_gate(&s.circuit).map_err(anyhow::Error::from)?;
            let td = decompose(&underlying_graph(&with_out), cfg.heuristic);
            fs::create_dir_all(dir).context("creating td directory")?;
            let file = dir.join(format!("{}.td.json", name_of(path)));
            write_out(Some(&file), &pretty(&td.to_json())?)?;
        }
    }
    match csv_path {
        Some(p) => {
            let f = fs::File::create(p).with_context(|| format!("creating {}", p.display()))?;
            write_csv(&records, f).context("writing csv")?;
        }
        None => write_csv(&records, std::io::stdout()).context("writing csv")?,
    }
    for s in summarize(&records) {
        eprintln!("{s}");
    }
    if failed > 0 {
        return Err(input_error(anyhow::anyhow!("{failed} input(s) could not be read")));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.cmd {
        Cmd::Convert { input, output } => {
            let g = load_egraph(&input)?;
            let (c, _) = egraph_to_circuit(&g);
            write_out(output.as_deref(), &pretty(&c.to_json())?)?;
        }
        Cmd::Simplify {
            input,
            output,
            rules,
            no_acyclic,
            emit_log,
        } => {
            let text = read(&input)?;
            let c = Circuit::from_json_str(&text)
                .with_context(|| format!("parsing {}", input.display()))
                .map_err(input_error)?;
            let mut rules = parse_rule_set(&rules)
                .map_err(|e| input_error(anyhow::anyhow!(e)))?;
            if no_acyclic {
                rules.remove(&twextract::simplify::RuleId::RemoveLoneOrLoops);
            }
            let s = simplify_fixpoint(&c, &rules);
            if s.hit_iteration_limit {
                eprintln!("warning: iteration limit reached before a fixpoint");
            }
            eprintln!(
                "|V| {} -> {}, |E| {} -> {}, {} rewrites",
                c.num_vertices(),
                s.circuit.num_vertices(),
                c.num_edges(),
                s.circuit.num_edges(),
                s.log.records.len()
            );
            write_out(output.as_deref(), &pretty(&s.circuit.to_json())?)?;
            if let Some(p) = emit_log {
                write_out(Some(&p), &pretty(&serde_json::to_value(&s.log)?)?)?;
            }
        }
        Cmd::Stats {
            inputs,
            opts,
            csv,
            emit_td,
        } => {
            let cfg = opts.config().map_err(input_error)?;
            run_many(&inputs, &cfg, false, csv.as_deref(), emit_td.as_deref())?;
        }
        Cmd::Bench { inputs, opts, csv } => {
            let cfg = opts.config().map_err(input_error)?;
            run_many(&inputs, &cfg, true, csv.as_deref(), None)?;
        }
        Cmd::Extract {
            input,
            output,
            opts,
            emit_td,
            emit_log,
        } => {
            let cfg = opts.config().map_err(input_error)?;
            let text = read(&input)?;
            let g = parse_egraph(&text)
                .with_context(|| format!("parsing {}", input.display()))
                .map_err(input_error)?;
            let out = extract_str(&text, &cfg)?;
            write_out(output.as_deref(), &pretty(&out.extraction.to_json(&g, out.acyclic))?)?;
            if let Some(p) = emit_td {
                write_out(Some(&p), &pretty(&out.td.to_json())?)?;
            }
            if let Some(p) = emit_log {
                write_out(Some(&p), &pretty(&serde_json::to_value(&out.log)?)?)?;
            }
        }
        Cmd::Check {
            input,
            opts,
            seed,
            count,
        } => {
            let cfg = opts.config().map_err(input_error)?;
            match input {
                Some(path) => {
                    let g = load_egraph(&path)?;
                    let outcome = check(&g, &cfg)?;
                    println!("{outcome}");
                    if matches!(outcome, CheckOutcome::Mismatch { .. }) {
                        return Err(anyhow::anyhow!("pipeline disagrees with the oracle").into());
                    }
                }
                None => {
                    let mut r = rng(seed);
                    let mut matched = 0;
                    for i in 0..count {
                        let g = random_egraph(&mut r, &EGraphParams::default());
                        let outcome = check(&g, &cfg)?;
                        println!("#{i}: {outcome}");
                        if outcome.is_match() {
                            matched += 1;
                        }
                    }
                    println!("{matched}/{count} match");
                    if matched != count {
                        return Err(anyhow::anyhow!("pipeline disagrees with the oracle").into());
                    }
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}
