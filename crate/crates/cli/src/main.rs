//! `qgraph`: spectra, surgery sequences, experiment suites and sweeps for
//! quantum star graphs with cyclic vertex coupling.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qgraph::experiments::{sweep_csv, sweep_lambda1_vs_length, Family, Suite};
use qgraph::graph::{apply_sequence, validate, GraphError, MetricGraph, SurgeryOp};
use qgraph::secular::{find_spectrum, lowest_eigenvalues, Method, SecularError, SolverOptions, Spectrum};
use serde::Serialize;

const EXIT_INPUT: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_INTERNAL: u8 = 4;

#[derive(Parser)]
#[command(name = "qgraph", version, about = "Quantum graphs with cyclic vertex coupling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Eigenvalues of a graph in a window.
    Spectrum {
        graph: PathBuf,
        /// Spectral window `lo:hi`.
        #[arg(long, allow_hyphen_values = true, value_parser = parse_window)]
        window: (f64, f64),
        #[arg(long, default_value = "edge")]
        method: Method,
        #[command(flatten)]
        format: Format,
    },
    /// Lowest eigenvalues along a sequence of surgery operations.
    Surgery {
        graph: PathBuf,
        /// JSON array of operations.
        ops: PathBuf,
        #[arg(long, default_value_t = 1)]
        track: usize,
        #[command(flatten)]
        format: Format,
    },
    /// Run an experiment suite and write JSON and CSV reports.
    Verify {
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// λ₁ over a parameter grid for a graph family.
    Sweep {
        /// `neumann_star(N)`, `dirichlet_star(N)` or `figure8`.
        family: String,
        /// Grid `lo:hi:n` (n points, both ends included).
        #[arg(long, allow_hyphen_values = true)]
        param: String,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
#[group(multiple = false)]
struct Format {
    #[arg(long)]
    json: bool,
    #[arg(long)]
    csv: bool,
}

/// A failure carrying its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Failure { code: EXIT_INPUT, message: message.into() }
    }

    fn numerical(message: impl Into<String>) -> Self {
        Failure { code: EXIT_NUMERICAL, message: message.into() }
    }
}

impl From<GraphError> for Failure {
    fn from(e: GraphError) -> Self {
        Failure::input(e.to_string())
    }
}

impl From<SecularError> for Failure {
    fn from(e: SecularError) -> Self {
        match e {
            SecularError::InvalidGraph(_) | SecularError::InvalidWindow(..) | SecularError::Unsupported(_) => {
                Failure::input(e.to_string())
            }
            _ => Failure::numerical(e.to_string()),
        }
    }
}

fn parse_window(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(':').ok_or("expected lo:hi")?;
    let lo: f64 = lo.trim().parse().map_err(|_| format!("bad lower bound `{lo}`"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("bad upper bound `{hi}`"))?;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(format!("empty window {lo}:{hi}"));
    }
    Ok((lo, hi))
}

fn parse_grid(s: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, n] = parts[..] else {
        return Err("expected lo:hi:n".into());
    };
    let lo: f64 = lo.parse().map_err(|_| format!("bad lower bound `{lo}`"))?;
    let hi: f64 = hi.parse().map_err(|_| format!("bad upper bound `{hi}`"))?;
    let n: usize = n.parse().map_err(|_| format!("bad point count `{n}`"))?;
    if !(lo.is_finite() && hi.is_finite()) || n == 0 || (n > 1 && lo >= hi) {
        return Err(format!("invalid grid {s}"));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect())
}

fn load_graph(path: &Path) -> Result<MetricGraph, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    let g = MetricGraph::from_json(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    let violations = validate(&g);
    if !violations.is_empty() {
        return Err(GraphError::Invalid(violations).into());
    }
    Ok(g)
}

fn write_output(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn spectrum_csv(s: &Spectrum) -> String {
    let mut out = String::from("lambda,mult,residual,method,rank_tol,kappa_step\n");
    for e in &s.eigenvalues {
        let _ = writeln!(out, "{},{},{},{},{},{}", e.lambda, e.multiplicity, e.residual, s.method, s.tolerances.rank_tol, s.tolerances.kappa_step);
    }
    out
}

fn spectrum_table(s: &Spectrum) -> String {
    let mut out = format!(
        "window [{}, {}]  method {}  rank_tol {:e}  kappa_step {:e}\n{:>22}  {:>4}  {:>10}\n",
        s.window.0, s.window.1, s.method, s.tolerances.rank_tol, s.tolerances.kappa_step, "lambda", "mult", "residual"
    );
    for e in &s.eigenvalues {
        let _ = writeln!(out, "{:>22.15}  {:>4}  {:>10.3e}", e.lambda, e.multiplicity, e.residual);
    }
    for d in &s.diagnostics {
        let _ = writeln!(out, "diagnostic: {d:?}");
    }
    out
}

fn cmd_spectrum(graph: &Path, window: (f64, f64), method: Method, format: &Format) -> Result<u8, Failure> {
    let g = load_graph(graph)?;
    let opts = SolverOptions::default().with_method(method);
    let s = find_spectrum(&g, window, &opts)?;
    if format.json {
        println!("{}", s.to_json());
    } else if format.csv {
        print!("{}", spectrum_csv(&s));
    } else {
        print!("{}", spectrum_table(&s));
    }
    if s.diagnostics.is_empty() {
        Ok(0)
    } else {
        for d in &s.diagnostics {
            eprintln!("warning: {d:?}");
        }
        Ok(EXIT_NUMERICAL)
    }
}

#[derive(Serialize)]
struct SurgeryRow {
    step: usize,
    op: Option<SurgeryOp>,
    total_length: f64,
    lambdas: Vec<f64>,
}

#[derive(Serialize)]
struct SurgeryTable {
    track: usize,
    tolerances: SolverOptions,
    rows: Vec<SurgeryRow>,
}

fn op_label(op: &Option<SurgeryOp>) -> String {
    match op {
        None => "initial".into(),
        Some(SurgeryOp::Transplant { from_edge, to_edge, length }) => format!("transplant {from_edge}->{to_edge} {length}"),
        Some(SurgeryOp::Merge { v1, v2, .. }) => format!("merge {v1}+{v2}"),
        Some(SurgeryOp::Split { vertex, .. }) => format!("split {vertex}"),
        Some(SurgeryOp::AttachEdge { vertex, length, .. }) => format!("attach {vertex} {length}"),
        Some(SurgeryOp::ExtendEdge { edge, delta }) => format!("extend {edge} {delta}"),
    }
}

fn cmd_surgery(graph: &Path, ops: &Path, track: usize, format: &Format) -> Result<u8, Failure> {
    if track == 0 {
        return Err(Failure::input("--track must be at least 1"));
    }
    let g = load_graph(graph)?;
    let text = fs::read_to_string(ops).map_err(|e| Failure::input(format!("{}: {e}", ops.display())))?;
    let ops: Vec<SurgeryOp> =
        serde_json::from_str(&text).map_err(|e| Failure::input(format!("{}: {e}", ops.display())))?;
    let mut graphs = vec![g.clone()];
    graphs.extend(apply_sequence(&g, &ops)?);
    let opts = SolverOptions::default();
    let mut rows = Vec::with_capacity(graphs.len());
    for (step, h) in graphs.iter().enumerate() {
        let lambdas = lowest_eigenvalues(h, track, &opts)?;
        let op = step.checked_sub(1).map(|i| ops[i].clone());
        rows.push(SurgeryRow { step, op, total_length: h.total_length(), lambdas });
    }
    let table = SurgeryTable { track, tolerances: opts, rows };
    if format.json {
        println!("{}", serde_json::to_string_pretty(&table).map_err(|e| Failure::numerical(e.to_string()))?);
        return Ok(0);
    }
    let mut out = String::new();
    let header: Vec<String> = (1..=track).map(|k| format!("lambda{k}")).collect();
    if format.csv {
        let _ = writeln!(out, "step,op,total_length,{},method,rank_tol", header.join(","));
    } else {
        let _ = writeln!(out, "method {}  rank_tol {:e}", opts.method, opts.rank_tol);
        let _ = writeln!(out, "step  {:<28}  {:>10}  {}", "op", "length", header.iter().map(|h| format!("{h:>20}")).collect::<String>());
    }
    for r in &table.rows {
        let label = op_label(&r.op);
        if format.csv {
            let values: Vec<String> = r.lambdas.iter().map(|l| l.to_string()).collect();
            let _ = writeln!(out, "{},\"{}\",{},{},{},{}", r.step, label, r.total_length, values.join(","), opts.method, opts.rank_tol);
        } else {
            let values: String = r.lambdas.iter().map(|l| format!("{l:>20.12}")).collect();
            let _ = writeln!(out, "{:>4}  {:<28}  {:>10.6}  {}", r.step, label, r.total_length, values);
        }
    }
    print!("{out}");
    Ok(0)
}

fn cmd_verify(suite: &str, seed: u64, out: &Path) -> Result<u8, Failure> {
    let suite: Suite = suite.parse().map_err(Failure::input)?;
    fs::create_dir_all(out).map_err(|e| Failure::input(format!("{}: {e}", out.display())))?;
    let report = suite.run(seed, &SolverOptions::default());
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
    let stem = format!("{}-{}-{}", report.experiment, seed, stamp);
    let json = out.join(format!("{stem}.json"));
    let csv = out.join(format!("{stem}.csv"));
    write_output(&json, &report.to_json())?;
    write_output(&csv, &report.to_csv())?;
    let s = report.summary;
    println!(
        "{}: {} cases, {} pass, {} fail, {} inconclusive, {} uncovered",
        report.experiment, s.cases, s.pass, s.fail, s.inconclusive, s.uncovered
    );
    println!("{}", json.display());
    println!("{}", csv.display());
    Ok(if s.fail > 0 || s.inconclusive > 0 { EXIT_NUMERICAL } else { 0 })
}

fn cmd_sweep(family: &str, grid: &str, out: Option<&Path>) -> Result<u8, Failure> {
    let family: Family = family.parse().map_err(Failure::input)?;
    let grid = parse_grid(grid).map_err(Failure::input)?;
    let opts = SolverOptions::default();
    let rows = sweep_lambda1_vs_length(family, &grid, &opts).map_err(Failure::numerical)?;
    let csv = sweep_csv(&rows, &opts);
    match out {
        Some(path) => write_output(path, &csv)?,
        None => print!("{csv}"),
    }
    Ok(0)
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Spectrum { graph, window, method, format } => cmd_spectrum(&graph, window, method, &format),
        Command::Surgery { graph, ops, track, format } => cmd_surgery(&graph, &ops, track, &format),
        Command::Verify { suite, seed, out } => cmd_verify(&suite, seed, &out),
        Command::Sweep { family, param, out } => cmd_sweep(&family, &param, out.as_deref()),
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var("QGRAPH_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::input(format!("QGRAPH_THREADS must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure { code: EXIT_INTERNAL, message: e.to_string() })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = std::panic::catch_unwind(|| configure_threads().and_then(|()| run(cli)));
    match outcome {
        Ok(Ok(code)) => ExitCode::from(code),
        Ok(Err(f)) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
        Err(_) => ExitCode::from(EXIT_INTERNAL),
    }
}
