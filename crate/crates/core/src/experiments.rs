//! Numerical checks of the eigenvalue inequalities for the coupled Laplacian
//! on stars and general graphs, reported case by case.
//!
//! Every suite is deterministic for a given seed. Strict inequalities pass
//! with a margin above [`STRICT_MARGIN`]; smaller margins are reported as
//! inconclusive. Non-strict inequalities pass within [`NONSTRICT_TOL`].

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::Serialize;

use crate::graph::{
    apply_surgery, graph_metrics, make_cycle, make_equilateral_star, make_figure8, make_path, make_star, BoundaryType,
    Edge, EndpointRef, MetricGraph, SurgeryOp, Vertex,
};
use crate::quadform::{build_transplant_trial, rayleigh_quotient, FormOptions};
use crate::secular::{eigenfunction_at, lowest_eigenvalues, SecularError, SolverOptions};

pub const STRICT_MARGIN: f64 = 1e-9;
pub const NONSTRICT_TOL: f64 = 1e-8;
/// Eigenvalues compared in the monotonicity and bound suites.
pub const TRACKED: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
    /// The hypotheses of the claim do not apply; logged only.
    Uncovered,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Inconclusive => "inconclusive",
            Status::Uncovered => "uncovered",
        };
        f.write_str(s)
    }
}

/// One inequality `lhs (<|≤|=) rhs` with its margin.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub claim: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs` for inequalities, `tolerance - |lhs - rhs|` for equalities.
    pub margin: f64,
    pub tolerance: f64,
    pub status: Status,
}

impl Check {
    /// `lhs < rhs`.
    pub fn strict(claim: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        let margin = rhs - lhs;
        let status = if margin > STRICT_MARGIN {
            Status::Pass
        } else if margin < -NONSTRICT_TOL {
            Status::Fail
        } else {
            Status::Inconclusive
        };
        Check { claim: claim.into(), lhs, rhs, margin, tolerance: STRICT_MARGIN, status }
    }

    /// `lhs ≤ rhs`.
    pub fn non_strict(claim: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        let margin = rhs - lhs;
        let status = if margin >= -NONSTRICT_TOL { Status::Pass } else { Status::Fail };
        Check { claim: claim.into(), lhs, rhs, margin, tolerance: NONSTRICT_TOL, status }
    }

    /// `|lhs - rhs| ≤ tol`.
    pub fn equal(claim: impl Into<String>, lhs: f64, rhs: f64, tol: f64) -> Self {
        let margin = tol - (lhs - rhs).abs();
        let status = if margin >= 0.0 { Status::Pass } else { Status::Fail };
        Check { claim: claim.into(), lhs, rhs, margin, tolerance: tol, status }
    }

    pub fn uncovered(claim: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Check { claim: claim.into(), lhs, rhs, margin: rhs - lhs, tolerance: 0.0, status: Status::Uncovered }
    }
}

/// One case: the graphs involved, the eigenvalues computed and the checks.
#[derive(Debug, Clone, Serialize)]
pub struct ReportEntry {
    pub case: usize,
    pub label: String,
    pub graphs: BTreeMap<String, MetricGraph>,
    pub lambdas: BTreeMap<String, Vec<f64>>,
    pub checks: Vec<Check>,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl ReportEntry {
    fn new(label: impl Into<String>) -> Self {
        ReportEntry {
            case: 0,
            label: label.into(),
            graphs: BTreeMap::new(),
            lambdas: BTreeMap::new(),
            checks: Vec::new(),
            status: Status::Uncovered,
            note: None,
        }
    }

    fn graph(mut self, name: &str, g: &MetricGraph) -> Self {
        self.graphs.insert(name.into(), g.clone());
        self
    }

    fn finish(mut self) -> Self {
        let has = |s| self.checks.iter().any(|c| c.status == s);
        self.status = if has(Status::Fail) {
            Status::Fail
        } else if has(Status::Inconclusive) {
            Status::Inconclusive
        } else if has(Status::Pass) {
            Status::Pass
        } else {
            Status::Uncovered
        };
        self
    }

    fn failed(mut self, err: impl fmt::Display) -> Self {
        self.note = Some(format!("solver error: {err}"));
        self.status = Status::Fail;
        self
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Summary {
    pub cases: usize,
    pub checks: usize,
    pub pass: usize,
    pub fail: usize,
    pub inconclusive: usize,
    pub uncovered: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    pub strict_margin: f64,
    pub nonstrict_tol: f64,
    pub solver: SolverOptions,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub experiment: String,
    pub seed: u64,
    pub tolerances: Tolerances,
    pub summary: Summary,
    pub entries: Vec<ReportEntry>,
}

impl Report {
    fn new(experiment: &str, seed: u64, opts: &SolverOptions, entries: Vec<ReportEntry>) -> Self {
        let mut entries = entries;
        let mut summary = Summary { cases: entries.len(), ..Summary::default() };
        for (i, e) in entries.iter_mut().enumerate() {
            e.case = i;
            summary.checks += e.checks.len();
            match e.status {
                Status::Pass => summary.pass += 1,
                Status::Fail => summary.fail += 1,
                Status::Inconclusive => summary.inconclusive += 1,
                Status::Uncovered => summary.uncovered += 1,
            }
        }
        Report {
            experiment: experiment.into(),
            seed,
            tolerances: Tolerances { strict_margin: STRICT_MARGIN, nonstrict_tol: NONSTRICT_TOL, solver: *opts },
            summary,
            entries,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    /// One row per check: `case,label,claim,lhs,rhs,margin,tolerance,status`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["case", "label", "claim", "lhs", "rhs", "margin", "tolerance", "status"])
            .expect("in-memory write");
        for e in &self.entries {
            if e.checks.is_empty() {
                let note = e.note.clone().unwrap_or_default();
                w.write_record([e.case.to_string(), e.label.clone(), note, String::new(), String::new(), String::new(), String::new(), e.status.to_string()])
                    .expect("in-memory write");
            }
            for c in &e.checks {
                w.write_record([
                    e.case.to_string(),
                    e.label.clone(),
                    c.claim.clone(),
                    c.lhs.to_string(),
                    c.rhs.to_string(),
                    c.margin.to_string(),
                    c.tolerance.to_string(),
                    c.status.to_string(),
                ])
                .expect("in-memory write");
            }
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
    }
}

/// Deterministic generator for one seed.
pub fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform sample from `{Σ l_j = total, l_j ≥ 0.05·total}`.
pub fn sample_simplex_lengths<R: Rng>(rng: &mut R, n: usize, total: f64) -> Vec<f64> {
    assert!(n >= 1 && (n as f64) * 0.05 < 1.0, "simplex with floor 0.05 needs fewer than 20 parts");
    let w: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let sum: f64 = w.iter().sum();
    let free = (1.0 - 0.05 * n as f64) * total;
    w.iter().map(|x| 0.05 * total + free * x / sum).collect()
}

/// Connected random graph with `vertices` vertices and `edges ≥ vertices - 1`
/// edges (loops and multiple edges allowed), random orientations and
/// enumerations, Neumann conditions at degree-one vertices.
pub fn random_graph<R: Rng>(rng: &mut R, vertices: usize, edges: usize, lengths: (f64, f64)) -> MetricGraph {
    assert!(vertices >= 1 && edges + 1 >= vertices && edges >= 1);
    let mut ends: Vec<(usize, usize)> = Vec::with_capacity(edges);
    for v in 1..vertices {
        let u = rng.random_range(0..v);
        ends.push(if rng.random_bool(0.5) { (u, v) } else { (v, u) });
    }
    while ends.len() < edges {
        ends.push((rng.random_range(0..vertices), rng.random_range(0..vertices)));
    }
    let mut orders: Vec<Vec<EndpointRef>> = vec![Vec::new(); vertices];
    let mut edge_list = Vec::with_capacity(edges);
    for (j, &(a, b)) in ends.iter().enumerate() {
        let id = format!("e{}", j + 1);
        let l = rng.random_range(lengths.0..lengths.1);
        orders[a].push(EndpointRef::start(id.clone()));
        orders[b].push(EndpointRef::end(id.clone()));
        edge_list.push(Edge::new(id, format!("v{a}"), format!("v{b}"), l));
    }
    let vertex_list = orders
        .into_iter()
        .enumerate()
        .map(|(i, mut order)| {
            order.shuffle(rng);
            let bc = if order.len() == 1 { BoundaryType::Neumann } else { BoundaryType::Coupled };
            Vertex::new(format!("v{i}"), bc, order)
        })
        .collect();
    MetricGraph::new(vertex_list, edge_list).expect("generator builds valid graphs")
}

/// Random graph that is neither a path nor a cycle.
pub fn random_nontrivial_graph<R: Rng>(rng: &mut R, max_edges: usize, lengths: (f64, f64)) -> MetricGraph {
    loop {
        let vertices = rng.random_range(2..=5);
        let edges = rng.random_range((vertices - 1).max(2)..=max_edges.max(vertices));
        let g = random_graph(rng, vertices, edges, lengths);
        if !g.is_path() && !g.is_cycle() {
            return g;
        }
    }
}

/// The same graph with every vertex enumeration randomly permuted.
pub fn permute_enumerations<R: Rng>(g: &MetricGraph, rng: &mut R) -> MetricGraph {
    let vertices = g
        .vertices()
        .iter()
        .map(|v| {
            let mut v = v.clone();
            v.endpoint_order.shuffle(rng);
            v
        })
        .collect();
    MetricGraph::new(vertices, g.edges().to_vec()).expect("permutation keeps the graph valid")
}

/// Fixed set of graphs for cross-checking solvers: stars of both tip
/// types, figure-8s, a cycle, an interval and two seeded random graphs.
pub fn reference_graphs() -> Vec<(String, MetricGraph)> {
    let mut out: Vec<(String, MetricGraph)> = Vec::new();
    let mut push = |name: &str, g: Result<MetricGraph, crate::graph::GraphError>| {
        out.push((name.into(), g.expect("reference graphs are valid")));
    };
    push("neumann_star3", make_equilateral_star(3, 1.0, BoundaryType::Neumann));
    push("neumann_star4", make_equilateral_star(4, 1.0, BoundaryType::Neumann));
    push("neumann_star6", make_equilateral_star(6, 1.0, BoundaryType::Neumann));
    push("dirichlet_star3", make_equilateral_star(3, 1.0, BoundaryType::Dirichlet));
    push("star3_uneven", make_star(&[0.5, 1.2, 2.1], BoundaryType::Neumann));
    push("dirichlet_star4_uneven", make_star(&[0.8, 0.9, 1.3, 0.5], BoundaryType::Dirichlet));
    push("figure8", make_figure8(0.7, 1.3));
    push("figure8_equilateral", make_figure8(0.5, 0.5));
    push("cycle3", make_cycle(&[0.6, 1.0, 0.9]));
    push("path2", make_path(&[0.7, 1.1]));
    let mut rng = rng_for(2024);
    out.push(("random_tree".into(), random_graph(&mut rng, 5, 4, (0.4, 1.5))));
    out.push(("random_cyclic".into(), random_graph(&mut rng, 3, 4, (0.4, 1.5))));
    out
}

/// The `k` lowest eigenvalues with multiplicity.
pub fn eigenvalues(g: &MetricGraph, k: usize, opts: &SolverOptions) -> Result<Vec<f64>, SecularError> {
    lowest_eigenvalues(g, k, opts)
}

fn ground_state(g: &MetricGraph, opts: &SolverOptions) -> Result<f64, SecularError> {
    Ok(lowest_eigenvalues(g, 1, opts)?[0])
}

fn edge_id(j: usize) -> String {
    format!("e{}", j + 1)
}

/// Transplant a segment of length `ell` from edge `from` to edge `to`
/// (0-based) of a Neumann star.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransplantCase {
    pub lengths: Vec<f64>,
    pub from: usize,
    pub to: usize,
    pub ell: f64,
}

pub fn transplantation_cases(seed: u64, count: usize) -> Vec<TransplantCase> {
    let mut cases = vec![
        TransplantCase { lengths: vec![1.0, 1.0, 1.0], from: 0, to: 1, ell: 0.2 },
        TransplantCase { lengths: vec![1.0, 2.0, 3.0], from: 0, to: 2, ell: 0.5 },
        TransplantCase { lengths: vec![1.0, 1.0, 1.0, 1.0], from: 0, to: 1, ell: 1.0 },
    ];
    let mut rng = rng_for(seed);
    while cases.len() < count {
        let n = rng.random_range(3..=6);
        let lengths = sample_simplex_lengths(&mut rng, n, n as f64);
        let (mut j, mut k) = (rng.random_range(0..n), rng.random_range(0..n - 1));
        if k >= j {
            k += 1;
        }
        if lengths[j] > lengths[k] {
            std::mem::swap(&mut j, &mut k);
        }
        let ell = if n % 2 == 0 && rng.random_bool(0.25) {
            lengths[j]
        } else {
            lengths[j] * rng.random_range(0.05..0.95)
        };
        cases.push(TransplantCase { lengths, from: j, to: k, ell });
    }
    cases.truncate(count);
    cases
}

/// λ₁ decreases strictly under transplantation from a shorter to a longer
/// edge; the transplanted eigenfunction is a trial function certifying it.
pub fn verify_transplantation(cases: &[TransplantCase], seed: u64, opts: &SolverOptions) -> Report {
    let entries = cases
        .par_iter()
        .map(|case| {
            let g = make_star(&case.lengths, BoundaryType::Neumann).expect("valid star");
            let (from, to) = (edge_id(case.from), edge_id(case.to));
            let label = format!("N={} {from}->{to} ell={}", case.lengths.len(), case.ell);
            let entry = ReportEntry::new(label).graph("before", &g);
            let op = SurgeryOp::Transplant { from_edge: from.clone(), to_edge: to.clone(), length: case.ell };
            let after = match apply_surgery(&g, &op) {
                Ok(a) => a,
                Err(e) => return entry.failed(e),
            };
            let mut entry = entry.graph("after", &after);
            let result = (|| -> Result<(), String> {
                let before = ground_state(&g, opts).map_err(|e| e.to_string())?;
                let lam_after = ground_state(&after, opts).map_err(|e| e.to_string())?;
                entry.lambdas.insert("lambda1_before".into(), vec![before]);
                entry.lambdas.insert("lambda1_after".into(), vec![lam_after]);
                entry.checks.push(Check::strict("lambda1(after) < lambda1(before)", lam_after, before));
                let psi = eigenfunction_at(&g, before, opts).map_err(|e| e.to_string())?;
                let (trial_graph, trial) =
                    build_transplant_trial(&g, &psi[0], &from, &to, case.ell).map_err(|e| e.to_string())?;
                let q = rayleigh_quotient(&trial_graph, &trial, &FormOptions::default()).map_err(|e| e.to_string())?;
                entry.lambdas.insert("trial_rayleigh".into(), vec![q]);
                entry.checks.push(Check::non_strict("rayleigh(trial) <= lambda1(before)", q, before));
                Ok(())
            })();
            match result {
                Ok(()) => entry.finish(),
                Err(e) => entry.failed(e),
            }
        })
        .collect();
    Report::new("transplantation", seed, opts, entries)
}

fn is_equilateral(lengths: &[f64]) -> bool {
    lengths.iter().all(|&l| (l - lengths[0]).abs() <= 1e-12 * lengths[0])
}

/// λ₁ of `n`-edge stars of total length `total` never exceeds that of the
/// equilateral star, with equality only there. The first sample is the
/// equilateral star itself.
pub fn verify_equilateral_max(n: usize, total: f64, samples: usize, seed: u64, opts: &SolverOptions) -> Report {
    let mut rng = rng_for(seed ^ (n as u64) << 32);
    let mut tuples = vec![vec![total / n as f64; n]];
    while tuples.len() < samples {
        tuples.push(sample_simplex_lengths(&mut rng, n, total));
    }
    let star = make_equilateral_star(n, total / n as f64, BoundaryType::Neumann).expect("valid star");
    let reference = ground_state(&star, opts);
    let entries = tuples.par_iter().map(|l| maximality_entry(l, &star, &reference, "equilateral", opts)).collect();
    Report::new("equilateral-max", seed, opts, entries)
}

fn maximality_entry(
    lengths: &[f64],
    reference_graph: &MetricGraph,
    reference: &Result<f64, SecularError>,
    name: &str,
    opts: &SolverOptions,
) -> ReportEntry {
    let g = make_star(lengths, BoundaryType::Neumann).expect("valid star");
    let entry = ReportEntry::new(format!("N={} vs {name}", lengths.len())).graph("sample", &g).graph(name, reference_graph);
    let reference = match reference {
        Ok(r) => *r,
        Err(e) => return entry.failed(e),
    };
    let mut entry = entry;
    match ground_state(&g, opts) {
        Ok(l) => {
            entry.lambdas.insert("lambda1".into(), vec![l]);
            entry.lambdas.insert(format!("lambda1_{name}"), vec![reference]);
            let same = lengths.len() == reference_graph.num_edges() && is_equilateral(lengths) && {
                let r = reference_graph.edges()[0].length;
                (lengths[0] - r).abs() <= 1e-12 * r
            };
            let claim = format!("lambda1(sample) < lambda1({name})");
            entry.checks.push(if same {
                Check::equal(format!("lambda1(sample) = lambda1({name})"), l, reference, 1e-10)
            } else {
                Check::strict(claim, l, reference)
            });
            entry.finish()
        }
        Err(e) => entry.failed(e),
    }
}

/// Ground-state optimization over stars of total length `total`: for each
/// `N ∈ {3, 4, 5, 6}`, `per_n` samples (the first equilateral) compared with
/// the equilateral `N`-star and with `Γ*₃` (odd `N`) or `Γ*₄` (even `N`).
pub fn verify_ground_state_theorem(total: f64, per_n: usize, seed: u64, opts: &SolverOptions) -> Report {
    let mut rng = rng_for(seed);
    let mut samples: Vec<Vec<f64>> = Vec::new();
    for n in 3..=6 {
        samples.push(vec![total / n as f64; n]);
        for _ in 1..per_n {
            samples.push(sample_simplex_lengths(&mut rng, n, total));
        }
    }
    let refs: Vec<(MetricGraph, Result<f64, SecularError>)> = (3..=6)
        .map(|n| {
            let g = make_equilateral_star(n, total / n as f64, BoundaryType::Neumann).expect("valid star");
            let l = ground_state(&g, opts);
            (g, l)
        })
        .collect();
    let entries = samples
        .par_iter()
        .flat_map_iter(|l| {
            let n = l.len();
            let (eq_g, eq_l) = &refs[n - 3];
            let (opt_g, opt_l, opt_name) = if n % 2 == 1 { (&refs[0].0, &refs[0].1, "star3") } else { (&refs[1].0, &refs[1].1, "star4") };
            [maximality_entry(l, eq_g, eq_l, "equilateral", opts), maximality_entry(l, opt_g, opt_l, opt_name, opts)]
        })
        .collect();
    Report::new("ground-state", seed, opts, entries)
}

/// Comparisons between equilateral stars `Γ*_n` of a common total length.
pub fn verify_star_count_ladder(total: f64, opts: &SolverOptions) -> Report {
    let lambdas: Vec<(usize, MetricGraph, Result<f64, SecularError>)> = (3..=10)
        .into_par_iter()
        .map(|n| {
            let g = make_equilateral_star(n, total / n as f64, BoundaryType::Neumann).expect("valid star");
            let l = ground_state(&g, opts);
            (n, g, l)
        })
        .collect();
    let get = |n: usize| &lambdas[n - 3];
    let mut entries = Vec::new();
    let mut compare = |label: String, lo: usize, hi: usize| {
        // claim: λ₁(Γ*_lo) < λ₁(Γ*_hi)
        let (a, b) = (get(lo), get(hi));
        let mut entry = ReportEntry::new(label.clone()).graph(&format!("star{lo}"), &a.1).graph(&format!("star{hi}"), &b.1);
        entry = match (&a.2, &b.2) {
            (Ok(x), Ok(y)) => {
                entry.lambdas.insert(format!("lambda1_star{lo}"), vec![*x]);
                entry.lambdas.insert(format!("lambda1_star{hi}"), vec![*y]);
                entry.checks.push(Check::strict(label, *x, *y));
                entry.finish()
            }
            (Err(e), _) | (_, Err(e)) => entry.failed(e),
        };
        entries.push(entry);
    };
    for n in 3..=8 {
        compare(format!("lambda1(star{}) < lambda1(star{n})", n + 2), n + 2, n);
    }
    for n in [3, 5, 7] {
        compare(format!("lambda1(star{n}) < lambda1(star{})", n + 1), n, n + 1);
    }
    for n in [4, 6, 8] {
        compare(format!("lambda1(star{}) < lambda1(star{n})", n + 1), n + 1, n);
    }
    Report::new("star-ladder", 0, opts, entries)
}

/// How a surgery is expected to move the eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    /// `λ_k(after) ≤ λ_k(before)` for all tracked `k`.
    Decrease,
    /// Same, only where `λ_k(before) ≥ 0`.
    DecreaseWhereNonnegative,
    /// `λ_k(before) ≤ λ_k(after)` for all tracked `k`.
    Increase,
    /// Edge extension: `λ_k(after) ≤ 0 ⇒ λ_k(before) ≤ λ_k(after)` and
    /// `λ_k(before) ≥ 0 ⇒ λ_k(after) ≤ λ_k(before)`.
    Extension,
}

#[derive(Debug, Clone, Serialize)]
pub struct SurgeryCase {
    pub label: String,
    pub graph: MetricGraph,
    pub ops: Vec<SurgeryOp>,
    pub expectation: Expectation,
}

fn attach_ops<R: Rng>(rng: &mut R, g: &MetricGraph, count: usize) -> Vec<SurgeryOp> {
    let degree = g.vertex("c").map(|v| v.degree()).unwrap_or(0);
    (0..count)
        .map(|i| SurgeryOp::AttachEdge {
            vertex: "c".into(),
            length: rng.random_range(0.3..1.5),
            position: rng.random_range(0..=degree + i),
            edge_id: Some(format!("x{}", i + 1)),
            tip_bc: None,
        })
        .collect()
}

fn parity_pair<R: Rng>(rng: &mut R, g: &MetricGraph, parity: (usize, usize)) -> Option<(String, String)> {
    let mut pairs = Vec::new();
    let vs = g.vertices();
    for a in 0..vs.len() {
        for b in 0..vs.len() {
            if a != b && vs[a].degree() % 2 == parity.0 && vs[b].degree() % 2 == parity.1 {
                pairs.push((vs[a].id.clone(), vs[b].id.clone()));
            }
        }
    }
    if pairs.is_empty() {
        None
    } else {
        Some(pairs.swap_remove(rng.random_range(0..pairs.len())))
    }
}

/// Sixty surgery cases: pendant edges on even and odd stars, pairs of
/// pendant edges on even stars, edge extension on Neumann and Dirichlet
/// stars, and vertex merges of every parity combination on random graphs.
pub fn monotonicity_cases(seed: u64) -> Vec<SurgeryCase> {
    let mut rng = rng_for(seed);
    let mut cases = Vec::new();
    for i in 0..10 {
        let n = [2, 4, 6][i % 3];
        let g = make_star(&sample_simplex_lengths(&mut rng, n, n as f64), BoundaryType::Neumann).unwrap();
        let ops = attach_ops(&mut rng, &g, 1);
        cases.push(SurgeryCase { label: format!("attach 1 edge to even star N={n}"), graph: g, ops, expectation: Expectation::Decrease });
    }
    for i in 0..10 {
        let n = [3, 5][i % 2];
        let g = make_star(&sample_simplex_lengths(&mut rng, n, n as f64), BoundaryType::Neumann).unwrap();
        let ops = attach_ops(&mut rng, &g, 1);
        cases.push(SurgeryCase {
            label: format!("attach 1 edge to odd star N={n}"),
            graph: g,
            ops,
            expectation: Expectation::DecreaseWhereNonnegative,
        });
    }
    for i in 0..10 {
        let n = [2, 4][i % 2];
        let extra = [2, 4][(i / 2) % 2];
        let g = make_star(&sample_simplex_lengths(&mut rng, n, n as f64), BoundaryType::Neumann).unwrap();
        let ops = attach_ops(&mut rng, &g, extra);
        cases.push(SurgeryCase {
            label: format!("attach {extra} edges to even star N={n}"),
            graph: g,
            ops,
            expectation: Expectation::Decrease,
        });
    }
    for bc in [BoundaryType::Neumann, BoundaryType::Dirichlet] {
        for _ in 0..10 {
            let n = rng.random_range(3..=6);
            let g = make_star(&sample_simplex_lengths(&mut rng, n, n as f64), bc).unwrap();
            let edge = edge_id(rng.random_range(0..n));
            let delta = rng.random_range(0.1..1.0);
            let (label, expectation) = match bc {
                BoundaryType::Dirichlet => (format!("extend {edge} of Dirichlet star N={n}"), Expectation::Decrease),
                _ => (format!("extend {edge} of star N={n}"), Expectation::Extension),
            };
            cases.push(SurgeryCase { label, graph: g, ops: vec![SurgeryOp::ExtendEdge { edge, delta }], expectation });
        }
    }
    let parities = [((1, 0), Expectation::Decrease), ((0, 0), Expectation::Decrease), ((1, 1), Expectation::Increase)];
    let mut i = 0;
    while i < 10 {
        let (parity, expectation) = parities[i % 3];
        let (nv, ne) = (rng.random_range(3..=5), rng.random_range(4..=6));
        let g = random_graph(&mut rng, nv, ne, (0.3, 1.5));
        if let Some((v1, v2)) = parity_pair(&mut rng, &g, parity) {
            let kind = match parity {
                (1, 0) => "opposite parity",
                (0, 0) => "even degrees",
                _ => "odd degrees",
            };
            cases.push(SurgeryCase {
                label: format!("merge {v1} and {v2} ({kind})"),
                graph: g,
                ops: vec![SurgeryOp::Merge { v1, v2, merged_id: None }],
                expectation,
            });
            i += 1;
        }
    }
    cases
}

fn monotonicity_checks(before: &[f64], after: &[f64], expectation: Expectation) -> Vec<Check> {
    let mut checks = Vec::new();
    for k in 0..before.len().min(after.len()) {
        let (b, a) = (before[k], after[k]);
        let n = k + 1;
        match expectation {
            Expectation::Decrease => checks.push(Check::non_strict(format!("lambda{n}(after) <= lambda{n}(before)"), a, b)),
            Expectation::Increase => checks.push(Check::non_strict(format!("lambda{n}(before) <= lambda{n}(after)"), b, a)),
            Expectation::DecreaseWhereNonnegative => {
                let claim = format!("lambda{n}(after) <= lambda{n}(before)");
                checks.push(if b >= -NONSTRICT_TOL { Check::non_strict(claim, a, b) } else { Check::uncovered(claim, a, b) });
            }
            Expectation::Extension => {
                let mut covered = false;
                if a <= NONSTRICT_TOL {
                    checks.push(Check::non_strict(format!("lambda{n}(before) <= lambda{n}(after)"), b, a));
                    covered = true;
                }
                if b >= -NONSTRICT_TOL {
                    checks.push(Check::non_strict(format!("lambda{n}(after) <= lambda{n}(before)"), a, b));
                    covered = true;
                }
                if !covered {
                    checks.push(Check::uncovered(format!("lambda{n}(before) < 0 < lambda{n}(after)"), b, a));
                }
            }
        }
    }
    checks
}

pub fn verify_surgery_monotonicity(cases: &[SurgeryCase], seed: u64, opts: &SolverOptions) -> Report {
    let entries = cases
        .par_iter()
        .map(|case| {
            let mut entry = ReportEntry::new(case.label.clone()).graph("before", &case.graph);
            let mut after = case.graph.clone();
            for op in &case.ops {
                match apply_surgery(&after, op) {
                    Ok(g) => after = g,
                    Err(e) => return entry.failed(e),
                }
            }
            entry = entry.graph("after", &after);
            match (eigenvalues(&case.graph, TRACKED, opts), eigenvalues(&after, TRACKED, opts)) {
                (Ok(b), Ok(a)) => {
                    entry.checks = monotonicity_checks(&b, &a, case.expectation);
                    entry.lambdas.insert("before".into(), b);
                    entry.lambdas.insert("after".into(), a);
                    if entry.checks.iter().any(|c| c.status == Status::Uncovered) {
                        entry.note = Some("some eigenvalues fall outside the hypotheses; logged as uncovered".into());
                    }
                    entry.finish()
                }
                (Err(e), _) | (_, Err(e)) => entry.failed(e),
            }
        })
        .collect();
    Report::new("monotonicity", seed, opts, entries)
}

fn diameter_entry(g: &MetricGraph, opts: &SolverOptions) -> ReportEntry {
    let n = g.num_edges();
    let mut entry = ReportEntry::new(format!("diameter bound, star N={n}")).graph("graph", g);
    let metrics = match graph_metrics(g) {
        Ok(m) => m,
        Err(e) => return entry.failed(e),
    };
    let lambdas = match eigenvalues(g, TRACKED, opts) {
        Ok(l) => l,
        Err(e) => return entry.failed(e),
    };
    for (k, &l) in lambdas.iter().enumerate() {
        let j = k as f64; // k - 1 in 1-based numbering
        let by_diam = j * j * PI * PI / metrics.diameter.powi(2);
        let by_mean = j * j * PI * PI / (4.0 * metrics.mean_edge_length.powi(2));
        let by_total = j * j * PI * PI * (n * n) as f64 / (4.0 * metrics.total_length.powi(2));
        entry.checks.push(Check::non_strict(format!("lambda{} <= (k-1)^2 pi^2 / diam^2", k + 1), l, by_diam));
        entry.checks.push(Check::non_strict(format!("(k-1)^2 pi^2 / diam^2 <= (k-1)^2 pi^2 N^2 / 4L^2 [k={}]", k + 1), by_diam, by_total));
        entry.checks.push(Check::equal(format!("N^2 / 4L^2 = 1 / 4A^2 [k={}]", k + 1), by_total, by_mean, 1e-12 * by_mean.max(1.0)));
    }
    entry.lambdas.insert("lambda".into(), lambdas);
    entry.finish()
}

fn general_bound_entry(g: &MetricGraph, sharp: bool, opts: &SolverOptions) -> ReportEntry {
    let mut entry = ReportEntry::new(format!("general bounds, E={} V={}", g.num_edges(), g.vertices().len())).graph("graph", g);
    let lambdas = match eigenvalues(g, 7, opts) {
        Ok(l) => l,
        Err(e) => return entry.failed(e),
    };
    let total = g.total_length();
    entry.checks.push(Check::non_strict("lambda1 <= -1", lambdas[0], -1.0));
    entry.checks.push(Check::non_strict("lambda2 <= 0", lambdas[1], 0.0));
    for k in 1..=3 {
        let bound = 4.0 * (k * k) as f64 * PI * PI / (total * total);
        entry.checks.push(Check::non_strict(format!("lambda{} <= 4 k^2 pi^2 / L^2 [k={k}]", 2 * k + 1), lambdas[2 * k], bound));
    }
    if sharp {
        entry.label = "general bounds, equilateral figure-8".into();
        entry.checks.push(Check::equal("lambda1 = -1", lambdas[0], -1.0, 1e-8));
        entry.checks.push(Check::equal("lambda2 = 0", lambdas[1], 0.0, 1e-8));
        entry.checks.push(Check::equal("lambda3 = 4 pi^2 / L^2", lambdas[2], 4.0 * PI * PI / (total * total), 1e-8));
    }
    entry.lambdas.insert("lambda".into(), lambdas);
    entry.finish()
}

/// Diameter bounds on twenty even stars and the general ground-state bounds on
/// forty graphs (random ones, the equilateral 3-star and the equilateral
/// figure-8, where they are attained).
pub fn verify_bounds(seed: u64, opts: &SolverOptions) -> Report {
    let mut rng = rng_for(seed);
    let mut stars = vec![make_equilateral_star(4, 1.0, BoundaryType::Neumann).unwrap()];
    for i in 0..19 {
        let n = if i % 2 == 0 { 4 } else { 6 };
        stars.push(make_star(&sample_simplex_lengths(&mut rng, n, n as f64), BoundaryType::Neumann).unwrap());
    }
    let mut graphs = vec![(make_figure8(0.5, 0.5).unwrap(), true), (make_equilateral_star(3, 1.0, BoundaryType::Neumann).unwrap(), false)];
    while graphs.len() < 40 {
        graphs.push((random_nontrivial_graph(&mut rng, 6, (0.3, 1.5)), false));
    }
    let mut entries: Vec<ReportEntry> = stars.par_iter().map(|g| diameter_entry(g, opts)).collect();
    entries.extend(graphs.par_iter().map(|(g, sharp)| general_bound_entry(g, *sharp, opts)).collect::<Vec<_>>());
    Report::new("bounds", seed, opts, entries)
}

/// Only the diameter-bound part of [`verify_bounds`].
pub fn verify_diameter_bound(stars: &[MetricGraph], seed: u64, opts: &SolverOptions) -> Report {
    Report::new("diameter-bound", seed, opts, stars.par_iter().map(|g| diameter_entry(g, opts)).collect())
}

/// Only the general-bound part of [`verify_bounds`]; `sharp` marks graphs
/// expected to attain the bounds.
pub fn verify_general_bounds(graphs: &[(MetricGraph, bool)], seed: u64, opts: &SolverOptions) -> Report {
    Report::new("general-bounds", seed, opts, graphs.par_iter().map(|(g, s)| general_bound_entry(g, *s, opts)).collect())
}

/// Named suites runnable from a seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Transplantation,
    GroundState,
    StarLadder,
    Monotonicity,
    Bounds,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::Transplantation, Suite::GroundState, Suite::StarLadder, Suite::Monotonicity, Suite::Bounds];

    pub fn name(&self) -> &'static str {
        match self {
            Suite::Transplantation => "transplantation",
            Suite::GroundState => "ground-state",
            Suite::StarLadder => "star-ladder",
            Suite::Monotonicity => "monotonicity",
            Suite::Bounds => "bounds",
        }
    }

    pub fn run(&self, seed: u64, opts: &SolverOptions) -> Report {
        match self {
            Suite::Transplantation => verify_transplantation(&transplantation_cases(seed, 100), seed, opts),
            Suite::GroundState => verify_ground_state_theorem(3.0, 50, seed, opts),
            Suite::StarLadder => {
                let mut r = verify_star_count_ladder(3.0, opts);
                r.seed = seed;
                r
            }
            Suite::Monotonicity => verify_surgery_monotonicity(&monotonicity_cases(seed), seed, opts),
            Suite::Bounds => verify_bounds(seed, opts),
        }
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "general-bounds" | "diameter-bound" => Ok(Suite::Bounds),
            "ladder" => Ok(Suite::StarLadder),
            _ => Suite::ALL
                .iter()
                .find(|x| x.name() == s)
                .copied()
                .ok_or_else(|| format!("unknown suite `{s}` (known: {})", Suite::ALL.map(|x| x.name()).join(", "))),
        }
    }
}

/// Graph families for λ₁ sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// Equilateral star, parameter = edge length.
    NeumannStar(usize),
    DirichletStar(usize),
    /// Figure-8 with loops `t` and `2t`, parameter = `t`.
    Figure8,
}

impl Family {
    pub fn graph(&self, t: f64) -> Result<MetricGraph, crate::graph::GraphError> {
        match *self {
            Family::NeumannStar(n) => make_equilateral_star(n, t, BoundaryType::Neumann),
            Family::DirichletStar(n) => make_equilateral_star(n, t, BoundaryType::Dirichlet),
            Family::Figure8 => make_figure8(t, 2.0 * t),
        }
    }

    /// Large-length limit of λ₁ where it is known.
    pub fn limit(&self) -> Option<f64> {
        match *self {
            Family::NeumannStar(n) | Family::DirichletStar(n) => match n {
                3 | 6 => Some(-3.0),
                4 => Some(-1.0),
                _ => None,
            },
            Family::Figure8 => Some(-1.0),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::NeumannStar(n) => write!(f, "neumann_star({n})"),
            Family::DirichletStar(n) => write!(f, "dirichlet_star({n})"),
            Family::Figure8 => f.write_str("figure8"),
        }
    }
}

impl FromStr for Family {
    type Err = String;

    /// `figure8`, `neumann_star(N)` / `neumann_star:N`, `dirichlet_star(N)`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "figure8" {
            return Ok(Family::Figure8);
        }
        let (name, arg) = s
            .split_once(['(', ':'])
            .ok_or_else(|| format!("unknown family `{s}`"))?;
        let n: usize = arg
            .trim_end_matches(')')
            .parse()
            .map_err(|_| format!("bad edge count in `{s}`"))?;
        if n < 1 {
            return Err("a star needs at least one edge".into());
        }
        match name {
            "neumann_star" => Ok(Family::NeumannStar(n)),
            "dirichlet_star" => Ok(Family::DirichletStar(n)),
            _ => Err(format!("unknown family `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Up,
    Down,
    Flat,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub parameter: f64,
    pub lambda1: f64,
    pub negative_count: usize,
    pub gap_to_limit: Option<f64>,
    /// Direction of change from the previous row.
    pub trend: Option<Trend>,
}

/// λ₁ along a one-parameter family.
pub fn sweep_lambda1_vs_length(family: Family, grid: &[f64], opts: &SolverOptions) -> Result<Vec<SweepRow>, String> {
    let values: Vec<Result<(f64, usize), String>> = grid
        .par_iter()
        .map(|&t| {
            let g = family.graph(t).map_err(|e| e.to_string())?;
            let l1 = ground_state(&g, opts).map_err(|e| e.to_string())?;
            let neg = crate::secular::count_negative(&g, opts).map_err(|e| e.to_string())?;
            Ok((l1, neg))
        })
        .collect();
    let mut rows: Vec<SweepRow> = Vec::with_capacity(grid.len());
    for (&t, v) in grid.iter().zip(values) {
        let (lambda1, negative_count) = v?;
        let trend = rows.last().map(|prev: &SweepRow| {
            let d = lambda1 - prev.lambda1;
            if d > NONSTRICT_TOL {
                Trend::Up
            } else if d < -NONSTRICT_TOL {
                Trend::Down
            } else {
                Trend::Flat
            }
        });
        let gap_to_limit = family.limit().map(|l| lambda1 - l);
        rows.push(SweepRow { parameter: t, lambda1, negative_count, gap_to_limit, trend });
    }
    Ok(rows)
}

/// Columns: `parameter,lambda1,negative_count,gap_to_limit,trend,method,rank_tol,kappa_step`.
pub fn sweep_csv(rows: &[SweepRow], opts: &SolverOptions) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["parameter", "lambda1", "negative_count", "gap_to_limit", "trend", "method", "rank_tol", "kappa_step"])
        .expect("in-memory write");
    for r in rows {
        let trend = match r.trend {
            Some(Trend::Up) => "up",
            Some(Trend::Down) => "down",
            Some(Trend::Flat) => "flat",
            None => "",
        };
        w.write_record([
            r.parameter.to_string(),
            r.lambda1.to_string(),
            r.negative_count.to_string(),
            r.gap_to_limit.map(|g| g.to_string()).unwrap_or_default(),
            trend.to_string(),
            opts.method.to_string(),
            opts.rank_tol.to_string(),
            opts.kappa_step.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}
