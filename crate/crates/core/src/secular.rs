//! Secular systems, root finding and eigenfunction recovery.
//!
//! On every edge a solution of `-f'' = λ f` is a combination of two basis
//! functions; imposing the vertex conditions on those coefficients gives a
//! square `2E × 2E` matrix `S(λ)` whose nullspace is the eigenspace at `λ`.
//! Eigenvalues are located by scanning the relative smallest singular value
//! `σ_min / σ_max` of `S(λ)` on a grid, refining every local minimum by
//! golden-section search and counting the singular values below the rank
//! tolerance.
//!
//! The Dirichlet-to-Neumann form `-𝒜 + i ℬ M(λ)` is available as a second,
//! independent route; it is undefined where `λ` is a Dirichlet eigenvalue
//! of an edge.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DMatrix, DVector, Matrix2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coupling::{assemble_blocks, BlockConditionSystem};
use crate::graph::{validate, BoundaryType, MetricGraph, Side, Violation};
use crate::quadrature::GaussLegendre;
use crate::C64;

#[derive(Debug, Error)]
pub enum SecularError {
    #[error("invalid graph: {0:?}")]
    InvalidGraph(Vec<Violation>),
    #[error("λ = {lambda} is Dirichlet eigenvalue number {n} of edge `{edge}`; M(λ) is undefined")]
    DtnSingular { edge: String, n: u64, lambda: f64 },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid window [{0}, {1}]")]
    InvalidWindow(f64, f64),
    #[error("roots {0} and {1} are closer than the scan step {2}; rescan with a finer grid")]
    WindowTooCoarse(f64, f64, f64),
    #[error("λ = {lambda} is not an eigenvalue (σ_min/σ_max = {ratio:e})")]
    NotAnEigenvalue { lambda: f64, ratio: f64 },
}

/// How a secular matrix is assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Edgewise solution coefficients; pole-free for every λ.
    #[default]
    #[serde(rename = "edge")]
    EdgeAnsatz,
    /// Dirichlet-to-Neumann form; scanning restricted to λ ≤ 0.
    Dtn,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::EdgeAnsatz => "edge",
            Method::Dtn => "dtn",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "edge" => Ok(Method::EdgeAnsatz),
            "dtn" => Ok(Method::Dtn),
            _ => Err(format!("unknown method `{s}` (expected edge or dtn)")),
        }
    }
}

/// Sign of λ together with the frequency parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Regime {
    /// `λ = -κ²`.
    Negative { kappa: f64 },
    Zero,
    /// `λ = k²`.
    Positive { k: f64 },
}

impl Regime {
    pub fn from_lambda(lambda: f64) -> Self {
        if lambda < 0.0 {
            Regime::Negative { kappa: (-lambda).sqrt() }
        } else if lambda == 0.0 {
            Regime::Zero
        } else {
            Regime::Positive { k: lambda.sqrt() }
        }
    }

    pub fn lambda(&self) -> f64 {
        match *self {
            Regime::Negative { kappa } => -kappa * kappa,
            Regime::Zero => 0.0,
            Regime::Positive { k } => k * k,
        }
    }
}

/// Choice of the two solutions spanning the edge solution space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BasisKind {
    /// `cosh(κx), sinh(κx)` | `1, x` | `cos(kx), sin(kx)`.
    Canonical,
    /// Even/odd functions about the edge midpoint, normalized to be bounded by
    /// one; well conditioned for long edges and continuous through λ = 0.
    #[default]
    Balanced,
}

/// Solution basis of `-f'' = λ f` on `[0, l]`.
#[derive(Debug, Clone, Copy)]
pub struct EdgeBasis {
    pub regime: Regime,
    pub kind: BasisKind,
    pub length: f64,
}

// cosh(a)/cosh(b), sinh(a)/cosh(b), sinh(a)/sinh(b), cosh(a)/sinh(b) for b > 0
// without overflow.
fn cosh_cosh(a: f64, b: f64) -> f64 {
    let x = a.abs();
    (x - b).exp() * (1.0 + (-2.0 * x).exp()) / (1.0 + (-2.0 * b).exp())
}

fn sinh_cosh(a: f64, b: f64) -> f64 {
    let x = a.abs();
    a.signum() * (x - b).exp() * (-(-2.0 * x).exp_m1()) / (1.0 + (-2.0 * b).exp())
}

fn sinh_sinh(a: f64, b: f64) -> f64 {
    let x = a.abs();
    a.signum() * (x - b).exp() * (-(-2.0 * x).exp_m1()) / (-(-2.0 * b).exp_m1())
}

fn cosh_sinh(a: f64, b: f64) -> f64 {
    let x = a.abs();
    (x - b).exp() * (1.0 + (-2.0 * x).exp()) / (-(-2.0 * b).exp_m1())
}

impl EdgeBasis {
    pub fn new(lambda: f64, length: f64, kind: BasisKind) -> Self {
        EdgeBasis { regime: Regime::from_lambda(lambda), kind, length }
    }

    /// `[(value, derivative)]` of both basis functions at `x`.
    pub fn eval(&self, x: f64) -> [(f64, f64); 2] {
        let m = 0.5 * self.length;
        match (self.kind, self.regime) {
            (BasisKind::Canonical, Regime::Negative { kappa }) => {
                let (c, s) = ((kappa * x).cosh(), (kappa * x).sinh());
                [(c, kappa * s), (s, kappa * c)]
            }
            (BasisKind::Canonical, Regime::Zero) => [(1.0, 0.0), (x, 1.0)],
            (BasisKind::Canonical, Regime::Positive { k }) => {
                let (c, s) = ((k * x).cos(), (k * x).sin());
                [(c, -k * s), (s, k * c)]
            }
            (BasisKind::Balanced, Regime::Negative { kappa }) => {
                let (a, b) = (kappa * (x - m), kappa * m);
                [
                    (cosh_cosh(a, b), kappa * sinh_cosh(a, b)),
                    (sinh_sinh(a, b), kappa * cosh_sinh(a, b)),
                ]
            }
            (BasisKind::Balanced, Regime::Zero) => [(1.0, 0.0), ((x - m) / m, 1.0 / m)],
            (BasisKind::Balanced, Regime::Positive { k }) => {
                let scale = (k * m).min(1.0);
                let (c, s) = ((k * (x - m)).cos(), (k * (x - m)).sin());
                [(c, -k * s), (s / scale, k * c / scale)]
            }
        }
    }

    /// Values and inward derivatives of both basis functions at an endpoint.
    pub fn endpoint(&self, side: Side) -> ([f64; 2], [f64; 2]) {
        match side {
            Side::Start => {
                let [(v0, d0), (v1, d1)] = self.eval(0.0);
                ([v0, v1], [d0, d1])
            }
            Side::End => {
                let [(v0, d0), (v1, d1)] = self.eval(self.length);
                ([v0, v1], [-d0, -d1])
            }
        }
    }
}

/// Dirichlet-to-Neumann matrix of `[0, l]` for `λ < 0`: endpoint traces to
/// inward derivatives.
pub fn interval_dtn(length: f64, lambda: f64) -> Matrix2<C64> {
    assert!(lambda < 0.0 && length > 0.0, "interval_dtn needs λ < 0 and l > 0");
    edge_dtn(length, lambda).expect("negative λ is never a Dirichlet eigenvalue").map(|x| C64::new(x, 0.0))
}

/// Dirichlet-to-Neumann matrix of `[0, l]` for any λ off the Dirichlet
/// spectrum `{(nπ/l)², n ≥ 1}`; `Err(n)` on that spectrum.
pub fn edge_dtn(length: f64, lambda: f64) -> Result<Matrix2<f64>, u64> {
    let (diag, off) = match Regime::from_lambda(lambda) {
        Regime::Negative { kappa } => {
            let x = kappa * length;
            // κ coth(κl), κ / sinh(κl)
            (-kappa / x.tanh(), kappa / x.sinh())
        }
        Regime::Zero => (-1.0 / length, 1.0 / length),
        Regime::Positive { k } => {
            let x = k * length;
            let s = x.sin();
            if s.abs() < 1e-12 * x.max(1.0) {
                return Err((x / PI).round() as u64);
            }
            (-k * x.cos() / s, k / s)
        }
    };
    Ok(Matrix2::new(diag, off, off, diag))
}

/// Slot layout of a graph: for every row/column of the block system, the edge
/// index and side of the endpoint.
#[derive(Debug, Clone)]
pub struct SecularSystem {
    blocks: BlockConditionSystem,
    slot_edges: Vec<(usize, Side)>,
    lengths: Vec<f64>,
    edge_ids: Vec<String>,
    total_length: f64,
    method: Method,
}

impl SecularSystem {
    pub fn new(g: &MetricGraph, method: Method) -> Result<Self, SecularError> {
        let violations = validate(g);
        if !violations.is_empty() {
            return Err(SecularError::InvalidGraph(violations));
        }
        let blocks = assemble_blocks(g);
        let slot_edges = blocks
            .slots
            .iter()
            .map(|p| (g.edge_index(&p.edge).expect("validated endpoint"), p.side))
            .collect();
        Ok(SecularSystem {
            blocks,
            slot_edges,
            lengths: g.edges().iter().map(|e| e.length).collect(),
            edge_ids: g.edges().iter().map(|e| e.id.clone()).collect(),
            total_length: g.total_length(),
            method,
        })
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn dimension(&self) -> usize {
        self.slot_edges.len()
    }

    pub fn blocks(&self) -> &BlockConditionSystem {
        &self.blocks
    }

    pub fn matrix(&self, lambda: f64) -> Result<DMatrix<C64>, SecularError> {
        match self.method {
            Method::EdgeAnsatz => Ok(self.edge_matrix(lambda, BasisKind::Balanced)),
            Method::Dtn => self.dtn_matrix(lambda),
        }
    }

    /// Rows are the vertex conditions `-A F + i B F'` applied to the basis
    /// coefficients `(c₀, c₁)` of every edge (columns `2e`, `2e + 1`).
    pub fn edge_matrix(&self, lambda: f64, kind: BasisKind) -> DMatrix<C64> {
        let n = self.dimension();
        let bases: Vec<EdgeBasis> = self.lengths.iter().map(|&l| EdgeBasis::new(lambda, l, kind)).collect();
        let mut values = DMatrix::<C64>::zeros(n, n);
        let mut derivs = DMatrix::<C64>::zeros(n, n);
        for (slot, &(e, side)) in self.slot_edges.iter().enumerate() {
            let (v, d) = bases[e].endpoint(side);
            for c in 0..2 {
                values[(slot, 2 * e + c)] = C64::new(v[c], 0.0);
                derivs[(slot, 2 * e + c)] = C64::new(d[c], 0.0);
            }
        }
        -(&self.blocks.a_block * values) + (&self.blocks.b_block * derivs) * C64::i()
    }

    /// `-𝒜 + i ℬ M(λ)` acting on the stacked endpoint traces.
    pub fn dtn_matrix(&self, lambda: f64) -> Result<DMatrix<C64>, SecularError> {
        let m = self.dtn_map(lambda)?;
        Ok(-self.blocks.a_block.clone() + (&self.blocks.b_block * m) * C64::i())
    }

    /// The Dirichlet-to-Neumann matrix `M(λ)` of the disjoint edges.
    pub fn dtn_map(&self, lambda: f64) -> Result<DMatrix<C64>, SecularError> {
        let n = self.dimension();
        let mut slot_of = vec![[usize::MAX; 2]; self.lengths.len()];
        for (slot, &(e, side)) in self.slot_edges.iter().enumerate() {
            slot_of[e][side as usize] = slot;
        }
        let mut m = DMatrix::<C64>::zeros(n, n);
        for (e, &l) in self.lengths.iter().enumerate() {
            let block = edge_dtn(l, lambda).map_err(|k| SecularError::DtnSingular {
                edge: self.edge_ids[e].clone(),
                n: k,
                lambda,
            })?;
            let [s0, s1] = slot_of[e];
            m[(s0, s0)] = C64::new(block[(0, 0)], 0.0);
            m[(s0, s1)] = C64::new(block[(0, 1)], 0.0);
            m[(s1, s0)] = C64::new(block[(1, 0)], 0.0);
            m[(s1, s1)] = C64::new(block[(1, 1)], 0.0);
        }
        Ok(m)
    }

    /// Singular values of `S(λ)` in ascending order.
    pub fn singular_values(&self, lambda: f64) -> Result<Vec<f64>, SecularError> {
        let mut s: Vec<f64> = self.matrix(lambda)?.singular_values().iter().copied().collect();
        s.sort_by(f64::total_cmp);
        Ok(s)
    }

    /// `σ_min / σ_max`; +∞ where the matrix is undefined.
    pub fn sigma_ratio(&self, lambda: f64) -> f64 {
        match self.singular_values(lambda) {
            Ok(s) => {
                let max = *s.last().unwrap_or(&1.0);
                if max > 0.0 { s[0] / max } else { f64::INFINITY }
            }
            Err(_) => f64::INFINITY,
        }
    }
}

/// Secular matrix of `g` at `λ` with the chosen method.
pub fn build_secular_matrix(g: &MetricGraph, lambda: f64, method: Method) -> Result<DMatrix<C64>, SecularError> {
    SecularSystem::new(g, method)?.matrix(lambda)
}

/// Determinant of the edge-coefficient secular matrix in the given basis.
pub fn secular_determinant(g: &MetricGraph, lambda: f64, kind: BasisKind) -> Result<C64, SecularError> {
    Ok(SecularSystem::new(g, Method::EdgeAnsatz)?.edge_matrix(lambda, kind).determinant())
}

fn star_factors(lengths: &[f64], tip_bc: BoundaryType, kappa: f64) -> Vec<(C64, C64)> {
    lengths
        .iter()
        .map(|&l| {
            let (c, s) = ((kappa * l).cosh(), (kappa * l).sinh());
            match tip_bc {
                BoundaryType::Dirichlet => (C64::new(s, kappa * c), C64::new(-s, kappa * c)),
                _ => (C64::new(c, kappa * s), C64::new(-c, kappa * s)),
            }
        })
        .collect()
}

/// `A₁⋯A_N + (-1)^{N+1} B₁⋯B_N` for a star; zero exactly at negative
/// eigenvalues `-κ²`. Neumann tips: `A = cosh + iκ sinh`, `B = -cosh + iκ sinh`;
/// Dirichlet tips swap `cosh` and `sinh`.
pub fn star_secular_closed_form(lengths: &[f64], tip_bc: BoundaryType, kappa: f64) -> C64 {
    let factors = star_factors(lengths, tip_bc, kappa);
    let pa: C64 = factors.iter().map(|f| f.0).product();
    let pb: C64 = factors.iter().map(|f| f.1).product();
    let sign = if lengths.len() % 2 == 1 { 1.0 } else { -1.0 };
    pa + pb * sign
}

/// Real reduced secular function for the stars where one is known:
/// Neumann tips with `N = 3` (any lengths), `N = 4` or `N = 6` equilateral;
/// Dirichlet tips with `N = 3`.
pub fn star_secular_reduced(lengths: &[f64], tip_bc: BoundaryType, kappa: f64) -> Result<f64, SecularError> {
    let n = lengths.len();
    let equilateral = lengths.iter().all(|&l| (l - lengths[0]).abs() <= 1e-14 * lengths[0]);
    let k2 = kappa * kappa;
    match (tip_bc, n) {
        (BoundaryType::Neumann, 3) => {
            let c: Vec<f64> = lengths.iter().map(|&l| 1.0 / (kappa * l).tanh()).collect();
            Ok(c[0] * c[1] + c[0] * c[2] + c[1] * c[2] - k2)
        }
        (BoundaryType::Neumann, 4) if equilateral => {
            let c = 1.0 / (kappa * lengths[0]).tanh();
            Ok(c * c - k2)
        }
        (BoundaryType::Neumann, 6) if equilateral => {
            let c2 = (1.0 / (kappa * lengths[0]).tanh()).powi(2);
            Ok(3.0 * c2 * c2 - 10.0 * c2 * k2 + 3.0 * k2 * k2)
        }
        (BoundaryType::Dirichlet, 3) => {
            let t: Vec<f64> = lengths.iter().map(|&l| (kappa * l).tanh()).collect();
            Ok(t[0] * t[1] + t[0] * t[2] + t[1] * t[2] - k2)
        }
        _ => Err(SecularError::Unsupported(format!(
            "no reduced secular equation for N = {n} ({tip_bc:?} tips, equilateral = {equilateral})"
        ))),
    }
}

/// Tolerances and grid settings for [`find_spectrum`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverOptions {
    pub method: Method,
    /// Grid step in κ for λ < 0.
    pub kappa_step: f64,
    /// Grid step in λ for λ > 0; `None` selects `min(0.01, (π/L)²/50)`.
    pub lambda_step: Option<f64>,
    /// Relative singular value threshold for rank deficiency.
    pub rank_tol: f64,
    /// Golden-section stopping width in λ (relative to max(1, |λ|)).
    pub refine_tol: f64,
    /// Lower end of the negative search window; `None` selects
    /// [`negative_floor`].
    pub negative_floor: Option<f64>,
    /// Negative eigenvalues in `(-zero_gap, 0)` and positive ones in
    /// `(0, zero_gap)` are not resolved; λ = 0 itself is tested exactly.
    pub zero_gap: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            method: Method::EdgeAnsatz,
            kappa_step: 1e-3,
            lambda_step: None,
            rank_tol: 1e-8,
            refine_tol: 1e-12,
            negative_floor: None,
            zero_gap: 1e-6,
        }
    }
}

impl SolverOptions {
    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    fn positive_step(&self, total_length: f64) -> f64 {
        self.lambda_step.unwrap_or_else(|| (0.01f64).min((PI / total_length).powi(2) / 50.0))
    }
}

/// Lower end of the negative search window: the larger (in magnitude) of the
/// heuristic `(2·d_max)²` and the form bound `2(d-1)/l'` with
/// `l' = min(l_min/2, 1/(d-1))`, which no eigenvalue can undercut.
pub fn negative_floor(g: &MetricGraph) -> f64 {
    let d = g.max_degree() as f64;
    let heuristic = (2.0 * d).powi(2);
    let certified = if d > 1.0 {
        let l = (0.5 * g.min_edge_length()).min(1.0 / (d - 1.0));
        2.0 * (d - 1.0) / l
    } else {
        0.0
    };
    -heuristic.max(certified) * (1.0 + 1e-6) - 1e-6
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralEntry {
    pub lambda: f64,
    #[serde(rename = "mult")]
    pub multiplicity: usize,
    /// `σ_min / σ_max` of the secular matrix at `lambda`.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diagnostic {
    /// A singular value lies within a factor ten of the rank tolerance.
    MultiplicityUncertain { lambda: f64, sigma_ratio: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrum {
    pub eigenvalues: Vec<SpectralEntry>,
    pub window: (f64, f64),
    pub method: Method,
    pub tolerances: SolverOptions,
    pub diagnostics: Vec<Diagnostic>,
}

impl Spectrum {
    /// Eigenvalues repeated according to multiplicity.
    pub fn expanded(&self) -> Vec<f64> {
        self.eigenvalues.iter().flat_map(|e| std::iter::repeat_n(e.lambda, e.multiplicity)).collect()
    }

    pub fn count(&self) -> usize {
        self.eigenvalues.iter().map(|e| e.multiplicity).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spectrum serialization cannot fail")
    }
}

const GOLDEN: f64 = 0.618_033_988_749_894_8;

/// Minimize `f` on `[a, b]` by golden-section search.
fn golden_min<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let mut x1 = b - GOLDEN * (b - a);
    let mut x2 = a + GOLDEN * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..300 {
        if (b - a).abs() <= tol {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - GOLDEN * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + GOLDEN * (b - a);
            f2 = f(x2);
        }
    }
    let mut best = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    for x in [a, b] {
        let fx = f(x);
        if fx < best.1 {
            best = (x, fx);
        }
    }
    best
}

/// Local minima of `f` over `grid`, each refined by golden-section search;
/// returns `(x, f(x))`. A minimum at an end of the grid is dropped when `f`
/// keeps decreasing one step beyond it (the root lies outside the window);
/// `lower_limit` bounds that probe from below.
fn scan_minima<F: Fn(f64) -> f64 + Sync>(
    f: &F,
    grid: &[f64],
    lower_limit: f64,
    tol: &(dyn Fn(f64) -> f64 + Sync),
) -> Vec<(f64, f64)> {
    let n = grid.len();
    if n == 0 {
        return Vec::new();
    }
    let values: Vec<f64> = grid.par_iter().map(|&x| f(x)).collect();
    let step = if n > 1 { grid[1] - grid[0] } else { 0.0 };
    let candidates: Vec<usize> = (0..n)
        .filter(|&i| {
            let left = i == 0 || values[i] <= values[i - 1];
            let right = i + 1 == n || values[i] <= values[i + 1];
            left && right && values[i].is_finite()
        })
        .collect();
    candidates
        .par_iter()
        .filter_map(|&i| {
            let a = grid[i.saturating_sub(1)];
            let b = grid[(i + 1).min(n - 1)];
            let (x, fx) = if a == b { (a, values[i]) } else { golden_min(f, a, b, tol(grid[i])) };
            if n > 1 && i == 0 && f((grid[0] - step).max(0.5 * (grid[0] + lower_limit))) < fx {
                return None;
            }
            if n > 1 && i + 1 == n && f(grid[n - 1] + step) < fx {
                return None;
            }
            Some((x, fx))
        })
        .collect()
}

fn uniform_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    if hi < lo {
        return Vec::new();
    }
    let n = ((hi - lo) / step).ceil().max(1.0) as usize;
    (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect()
}

struct Root {
    lambda: f64,
    ratio: f64,
}

impl SecularSystem {
    fn negative_roots(&self, kappa_lo: f64, kappa_hi: f64, opts: &SolverOptions) -> Vec<Root> {
        let grid = uniform_grid(kappa_lo, kappa_hi, opts.kappa_step);
        let f = |kappa: f64| self.sigma_ratio(-kappa * kappa);
        let refine = opts.refine_tol;
        let tol = move |kappa: f64| refine * (kappa * kappa).max(1.0) / (2.0 * kappa.max(1e-3));
        scan_minima(&f, &grid, 0.0, &tol)
            .into_iter()
            .filter(|&(_, r)| r < opts.rank_tol)
            .map(|(kappa, ratio)| Root { lambda: -kappa * kappa, ratio })
            .collect()
    }

    fn positive_roots(&self, lo: f64, hi: f64, opts: &SolverOptions) -> Vec<Root> {
        let grid = uniform_grid(lo, hi, opts.positive_step(self.total_length));
        let f = |lambda: f64| self.sigma_ratio(lambda);
        let refine = opts.refine_tol;
        let tol = move |lambda: f64| refine * lambda.abs().max(1.0);
        scan_minima(&f, &grid, f64::NEG_INFINITY, &tol)
            .into_iter()
            .filter(|&(_, r)| r < opts.rank_tol)
            .map(|(lambda, ratio)| Root { lambda, ratio })
            .collect()
    }

    /// Count singular values below the rank tolerance and flag borderline ones.
    fn classify(&self, root: &Root, opts: &SolverOptions) -> Result<(SpectralEntry, Option<Diagnostic>), SecularError> {
        let s = self.singular_values(root.lambda)?;
        let max = *s.last().unwrap();
        let ratios: Vec<f64> = s.iter().map(|x| x / max).collect();
        let multiplicity = ratios.iter().filter(|&&r| r < opts.rank_tol).count().max(1);
        let diag = ratios
            .iter()
            .find(|&&r| r >= opts.rank_tol / 10.0 && r <= opts.rank_tol * 10.0)
            .map(|&r| Diagnostic::MultiplicityUncertain { lambda: root.lambda, sigma_ratio: r });
        Ok((SpectralEntry { lambda: root.lambda, multiplicity, residual: root.ratio }, diag))
    }
}

/// All eigenvalues in `[lo, hi]` with multiplicities.
pub fn find_spectrum(g: &MetricGraph, window: (f64, f64), opts: &SolverOptions) -> Result<Spectrum, SecularError> {
    let sys = SecularSystem::new(g, opts.method)?;
    find_spectrum_with(&sys, window, opts)
}

pub fn find_spectrum_with(sys: &SecularSystem, window: (f64, f64), opts: &SolverOptions) -> Result<Spectrum, SecularError> {
    let (lo, hi) = window;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(SecularError::InvalidWindow(lo, hi));
    }
    let mut roots = Vec::new();
    if lo < -opts.zero_gap {
        let kappa_lo = (-hi).max(opts.zero_gap).sqrt();
        let kappa_hi = (-lo).sqrt();
        roots.extend(sys.negative_roots(kappa_lo, kappa_hi, opts));
    }
    if lo <= 0.0 && hi >= 0.0 {
        roots.push(Root { lambda: 0.0, ratio: sys.sigma_ratio(0.0) });
    }
    if hi > opts.zero_gap {
        if sys.method == Method::Dtn {
            return Err(SecularError::Unsupported(
                "the Dirichlet-to-Neumann route scans λ ≤ 0 only; use the edge method for positive windows".into(),
            ));
        }
        roots.extend(sys.positive_roots(lo.max(opts.zero_gap), hi, opts));
    }
    roots.retain(|r| r.ratio < opts.rank_tol);
    assemble_spectrum(sys, roots, window, opts)
}

fn assemble_spectrum(
    sys: &SecularSystem,
    mut roots: Vec<Root>,
    window: (f64, f64),
    opts: &SolverOptions,
) -> Result<Spectrum, SecularError> {
    roots.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    let mut merged: Vec<Root> = Vec::new();
    for r in roots {
        match merged.last_mut() {
            Some(last) if (r.lambda - last.lambda).abs() <= 1e-9 * last.lambda.abs().max(1.0) => {
                if r.ratio < last.ratio || r.lambda == 0.0 {
                    *last = r;
                }
            }
            _ => merged.push(r),
        }
    }
    for pair in merged.windows(2) {
        let (a, b) = (pair[0].lambda, pair[1].lambda);
        let step = if b <= 0.0 {
            2.0 * (-a).sqrt() * opts.kappa_step
        } else {
            opts.positive_step(sys.total_length)
        };
        if b - a < step {
            return Err(SecularError::WindowTooCoarse(a, b, step));
        }
    }
    let mut eigenvalues = Vec::with_capacity(merged.len());
    let mut diagnostics = Vec::new();
    for r in &merged {
        let (entry, diag) = sys.classify(r, opts)?;
        eigenvalues.push(entry);
        diagnostics.extend(diag);
    }
    Ok(Spectrum { eigenvalues, window, method: sys.method, tolerances: *opts, diagnostics })
}

/// Number of negative eigenvalues counted with multiplicity.
pub fn count_negative(g: &MetricGraph, opts: &SolverOptions) -> Result<usize, SecularError> {
    let floor = opts.negative_floor.unwrap_or_else(|| negative_floor(g));
    Ok(find_spectrum(g, (floor, -opts.zero_gap), opts)?.count())
}

/// The `count` lowest eigenvalues, repeated according to multiplicity.
///
/// The negative range is scanned from the bottom in κ-chunks and the positive
/// range upwards in λ-chunks, stopping once enough eigenvalues are known.
pub fn lowest_eigenvalues(g: &MetricGraph, count: usize, opts: &SolverOptions) -> Result<Vec<f64>, SecularError> {
    let sys = SecularSystem::new(g, Method::EdgeAnsatz)?;
    let opts = opts.with_method(Method::EdgeAnsatz);
    let floor = opts.negative_floor.unwrap_or_else(|| negative_floor(g));
    let mut found: Vec<f64> = Vec::new();

    let kappa_top = (-floor).sqrt();
    let kappa_bottom = opts.zero_gap.sqrt();
    let chunk = 1.0;
    let mut upper = kappa_top;
    while upper > kappa_bottom && found.len() < count {
        let lower = (upper - chunk).max(kappa_bottom);
        let spec = find_spectrum_with(&sys, (-upper * upper, -lower * lower), &opts)?;
        merge_sorted(&mut found, spec);
        upper = lower;
    }
    if found.len() < count {
        let zero = find_spectrum_with(&sys, (0.0, 0.0), &opts)?;
        merge_sorted(&mut found, zero);
    }
    let l = sys.total_length;
    let mut width = ((count as f64 + 1.0) * PI / l).powi(2).max(10.0);
    let mut lo = opts.zero_gap;
    let mut guard = 0;
    while found.len() < count {
        let hi = lo + width;
        let spec = find_spectrum_with(&sys, (lo, hi), &opts)?;
        merge_sorted(&mut found, spec);
        lo = hi;
        width *= 2.0;
        guard += 1;
        if guard > 40 {
            return Err(SecularError::Unsupported(format!("could not find {count} eigenvalues")));
        }
    }
    found.truncate(count);
    Ok(found)
}

/// Append a spectrum's eigenvalues, skipping values already present (chunks
/// share their boundary points).
fn merge_sorted(found: &mut Vec<f64>, spec: Spectrum) {
    for e in spec.eigenvalues {
        let dup = found.iter().any(|f| (f - e.lambda).abs() <= 1e-9 * e.lambda.abs().max(1.0));
        if !dup {
            found.extend(std::iter::repeat_n(e.lambda, e.multiplicity));
        }
    }
    found.sort_by(f64::total_cmp);
}

/// Coefficients of one edge component in the balanced basis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeComponent {
    pub edge_id: String,
    pub length: f64,
    pub coefficients: [C64; 2],
}

/// An eigenfunction: per edge, `c₀ b₀(x) + c₁ b₁(x)` in the balanced basis
/// at frequency `regime`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Eigenfunction {
    pub lambda: f64,
    pub regime: Regime,
    pub components: Vec<EdgeComponent>,
}

impl Eigenfunction {
    fn basis(&self, e: usize) -> EdgeBasis {
        EdgeBasis::new(self.lambda, self.components[e].length, BasisKind::Balanced)
    }

    /// Value and derivative on edge `e` at `x ∈ [0, l(e)]`.
    pub fn eval(&self, e: usize, x: f64) -> (C64, C64) {
        let [(v0, d0), (v1, d1)] = self.basis(e).eval(x);
        let [c0, c1] = self.components[e].coefficients;
        (c0 * v0 + c1 * v1, c0 * d0 + c1 * d1)
    }

    /// Coefficients in the canonical basis (`cosh, sinh` | `1, x` | `cos, sin`).
    pub fn canonical_coefficients(&self, e: usize) -> [C64; 2] {
        let l = self.components[e].length;
        let canon = EdgeBasis::new(self.lambda, l, BasisKind::Canonical);
        let bal = self.basis(e);
        // Express both balanced functions through their Cauchy data at x = 0.
        let [(bv0, bd0), (bv1, bd1)] = bal.eval(0.0);
        let [(cv0, cd0), (cv1, cd1)] = canon.eval(0.0);
        let [c0, c1] = self.components[e].coefficients;
        let value = c0 * bv0 + c1 * bv1;
        let deriv = c0 * bd0 + c1 * bd1;
        // Canonical functions at 0 have (v, d) = (1, 0) and (0, d1).
        debug_assert!(cd0 == 0.0 && cv1 == 0.0 && cv0 == 1.0);
        [value, deriv / cd1]
    }

    /// Endpoint traces and inward derivatives at a vertex, in its enumeration.
    pub fn traces(&self, g: &MetricGraph, vertex: &str) -> Option<(DVector<C64>, DVector<C64>)> {
        let v = g.vertex(vertex)?;
        let mut f = DVector::zeros(v.degree());
        let mut df = DVector::zeros(v.degree());
        for (j, p) in v.endpoint_order.iter().enumerate() {
            let e = self.components.iter().position(|c| c.edge_id == p.edge)?;
            let (val, der) = match p.side {
                Side::Start => self.eval(e, 0.0),
                Side::End => {
                    let (a, b) = self.eval(e, self.components[e].length);
                    (a, -b)
                }
            };
            f[j] = val;
            df[j] = der;
        }
        Some((f, df))
    }

    pub fn inner(&self, other: &Eigenfunction, quad: &GaussLegendre) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for (e, comp) in self.components.iter().enumerate() {
            for (x, w) in quad.on_interval(0.0, comp.length) {
                acc += self.eval(e, x).0 * other.eval(e, x).0.conj() * w;
            }
        }
        acc
    }

    fn scale(&mut self, s: C64) {
        for c in self.components.iter_mut() {
            c.coefficients[0] *= s;
            c.coefficients[1] *= s;
        }
    }

    fn axpy(&mut self, a: C64, other: &Eigenfunction) {
        for (c, o) in self.components.iter_mut().zip(&other.components) {
            c.coefficients[0] += a * o.coefficients[0];
            c.coefficients[1] += a * o.coefficients[1];
        }
    }
}

/// L²-orthonormal basis of the eigenspace at `lambda`.
pub fn eigenfunction_at(g: &MetricGraph, lambda: f64, opts: &SolverOptions) -> Result<Vec<Eigenfunction>, SecularError> {
    let sys = SecularSystem::new(g, Method::EdgeAnsatz)?;
    let s = sys.edge_matrix(lambda, BasisKind::Balanced);
    let svd = s.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let max = svd.singular_values.max();
    let mut null: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] < opts.rank_tol * max)
        .collect();
    if null.is_empty() {
        let ratio = svd.singular_values.min() / max;
        return Err(SecularError::NotAnEigenvalue { lambda, ratio });
    }
    null.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));

    let quad = GaussLegendre::new(64);
    let mut basis: Vec<Eigenfunction> = Vec::new();
    for i in null {
        let row = v_t.row(i);
        let mut psi = Eigenfunction {
            lambda,
            regime: Regime::from_lambda(lambda),
            components: g
                .edges()
                .iter()
                .enumerate()
                .map(|(e, edge)| EdgeComponent {
                    edge_id: edge.id.clone(),
                    length: edge.length,
                    coefficients: [row[2 * e].conj(), row[2 * e + 1].conj()],
                })
                .collect(),
        };
        for _ in 0..2 {
            for q in &basis {
                let proj = psi.inner(q, &quad);
                psi.axpy(-proj, q);
            }
        }
        let norm = psi.inner(&psi, &quad).re.sqrt();
        if norm > 1e-12 {
            psi.scale(C64::new(1.0 / norm, 0.0));
            basis.push(psi);
        }
    }
    Ok(basis)
}
