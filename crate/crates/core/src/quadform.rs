//! The quadratic form of the coupled Laplacian on edgewise-smooth functions.
//!
//! ```text
//! a[f, g] = Σ_e ∫ f' conj(g') dx
//!         + i Σ_v Σ_{j>k} (-1)^{j+k} (F_k conj(G_j) - F_j conj(G_k))
//! ```
//!
//! Its domain consists of edgewise `H¹` functions whose traces at every
//! coupled vertex of even degree satisfy `Σ_j (-1)^j F_j = 0` and which
//! vanish at Dirichlet vertices.

use std::collections::HashMap;
use std::sync::Arc;

use thiserror::Error;

use crate::graph::{apply_surgery, BoundaryType, MetricGraph, Side, SurgeryOp};
use crate::quadrature::GaussLegendre;
use crate::secular::Eigenfunction;
use crate::C64;

#[derive(Debug, Error, PartialEq)]
pub enum QuadformError {
    #[error("not in the form domain at vertex `{vertex}`: {constraint} violated by {residual:e}")]
    NotInDomain { vertex: String, constraint: &'static str, residual: f64 },
    #[error("trial function has {got} edge pieces, graph has {expected} edges")]
    EdgeCountMismatch { expected: usize, got: usize },
    #[error("trial function has zero norm")]
    ZeroNorm,
    #[error("trial function is not square integrable on edge `{0}`")]
    NonFinite(String),
    #[error("form value has imaginary part {im:e} (real part {re})")]
    NotHermitian { re: f64, im: f64 },
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
}

/// Value and derivative of a function on one edge, `x ∈ [0, l]`.
pub type EdgeFn = Arc<dyn Fn(f64) -> (C64, C64) + Send + Sync>;

/// A function on one edge, smooth between consecutive breakpoints.
#[derive(Clone)]
pub struct TrialPiece {
    /// Increasing, starting at 0 and ending at the edge length.
    pub breakpoints: Vec<f64>,
    pub func: EdgeFn,
}

impl std::fmt::Debug for TrialPiece {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TrialPiece").field("breakpoints", &self.breakpoints).finish_non_exhaustive()
    }
}

impl TrialPiece {
    pub fn smooth(length: f64, func: EdgeFn) -> Self {
        TrialPiece { breakpoints: vec![0.0, length], func }
    }

    pub fn length(&self) -> f64 {
        *self.breakpoints.last().expect("breakpoints are never empty")
    }
}

/// Edgewise trial function; `pieces[e]` lives on `g.edges()[e]`.
#[derive(Debug, Clone)]
pub struct TrialFunction {
    pub pieces: Vec<TrialPiece>,
}

impl TrialFunction {
    /// One smooth function per edge, in edge order.
    pub fn from_fns(g: &MetricGraph, fns: Vec<EdgeFn>) -> Self {
        let pieces = g.edges().iter().zip(fns).map(|(e, f)| TrialPiece::smooth(e.length, f)).collect();
        TrialFunction { pieces }
    }

    pub fn edgewise_constant(g: &MetricGraph, values: &[C64]) -> Self {
        let fns = values
            .iter()
            .map(|&c| Arc::new(move |_: f64| (c, C64::new(0.0, 0.0))) as EdgeFn)
            .collect();
        Self::from_fns(g, fns)
    }

    pub fn from_eigenfunction(g: &MetricGraph, psi: &Eigenfunction) -> Self {
        let psi = Arc::new(psi.clone());
        let fns = (0..g.num_edges())
            .map(|e| {
                let psi = Arc::clone(&psi);
                Arc::new(move |x: f64| psi.eval(e, x)) as EdgeFn
            })
            .collect();
        Self::from_fns(g, fns)
    }

    /// Carry the function over to `target` by edge id; edges of `target`
    /// unknown to `source` get the zero function.
    pub fn transfer(&self, source: &MetricGraph, target: &MetricGraph) -> Self {
        let by_id: HashMap<&str, &TrialPiece> =
            source.edges().iter().map(|e| e.id.as_str()).zip(&self.pieces).collect();
        let pieces = target
            .edges()
            .iter()
            .map(|e| match by_id.get(e.id.as_str()) {
                Some(p) => (*p).clone(),
                None => TrialPiece::smooth(e.length, Arc::new(|_| (C64::new(0.0, 0.0), C64::new(0.0, 0.0)))),
            })
            .collect();
        TrialFunction { pieces }
    }

    /// Traces at a vertex in its endpoint enumeration.
    pub fn traces(&self, g: &MetricGraph, vertex: &str) -> Vec<C64> {
        let v = g.vertex(vertex).expect("vertex of the graph");
        v.endpoint_order
            .iter()
            .map(|p| {
                let e = g.edge_index(&p.edge).expect("validated endpoint");
                let piece = &self.pieces[e];
                let x = match p.side {
                    Side::Start => 0.0,
                    Side::End => piece.length(),
                };
                (piece.func)(x).0
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FormOptions {
    /// Gauss–Legendre points per smooth segment.
    pub order: usize,
    /// Tolerance for the alternating-sum and Dirichlet constraints.
    pub domain_tol: f64,
}

impl Default for FormOptions {
    fn default() -> Self {
        FormOptions { order: 64, domain_tol: 1e-9 }
    }
}

fn check_shape(g: &MetricGraph, f: &TrialFunction) -> Result<(), QuadformError> {
    if f.pieces.len() != g.num_edges() {
        return Err(QuadformError::EdgeCountMismatch { expected: g.num_edges(), got: f.pieces.len() });
    }
    Ok(())
}

/// Check the domain constraints at every vertex.
pub fn check_domain(g: &MetricGraph, f: &TrialFunction, tol: f64) -> Result<(), QuadformError> {
    check_shape(g, f)?;
    for v in g.vertices() {
        let traces = f.traces(g, &v.id);
        let scale = traces.iter().map(|z| z.norm()).fold(1.0, f64::max);
        match v.boundary {
            BoundaryType::Dirichlet => {
                let r = traces[0].norm();
                if r > tol * scale {
                    return Err(QuadformError::NotInDomain { vertex: v.id.clone(), constraint: "F = 0", residual: r });
                }
            }
            BoundaryType::Coupled if v.degree() % 2 == 0 => {
                let alt: C64 = traces.iter().enumerate().map(|(j, z)| if j % 2 == 0 { *z } else { -*z }).sum();
                if alt.norm() > tol * scale {
                    return Err(QuadformError::NotInDomain {
                        vertex: v.id.clone(),
                        constraint: "Σ (-1)^j F_j = 0",
                        residual: alt.norm(),
                    });
                }
            }
            _ => {}
        }
    }
    Ok(())
}

fn integrate_pieces(
    f: &TrialFunction,
    h: &TrialFunction,
    quad: &GaussLegendre,
    kernel: impl Fn((C64, C64), (C64, C64)) -> C64,
) -> Vec<C64> {
    f.pieces
        .iter()
        .zip(&h.pieces)
        .map(|(pf, ph)| {
            let mut bps: Vec<f64> = pf.breakpoints.iter().chain(&ph.breakpoints).copied().collect();
            bps.sort_by(f64::total_cmp);
            bps.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * b.abs().max(1.0));
            let mut acc = C64::new(0.0, 0.0);
            for w in bps.windows(2) {
                for (x, wt) in quad.on_interval(w[0], w[1]) {
                    acc += kernel((pf.func)(x), (ph.func)(x)) * wt;
                }
            }
            acc
        })
        .collect()
}

/// Vertex contribution `i Σ_{j>k} (-1)^{j+k} (F_k conj(G_j) - F_j conj(G_k))`.
fn vertex_term(fv: &[C64], gv: &[C64]) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for j in 0..fv.len() {
        for k in 0..j {
            let sign = if (j + k) % 2 == 0 { 1.0 } else { -1.0 };
            acc += (fv[k] * gv[j].conj() - fv[j] * gv[k].conj()) * sign;
        }
    }
    acc * C64::i()
}

/// `a[f, h]` without domain checks.
pub fn form_sesquilinear(g: &MetricGraph, f: &TrialFunction, h: &TrialFunction, opts: &FormOptions) -> C64 {
    let quad = GaussLegendre::new(opts.order);
    let kinetic: C64 = integrate_pieces(f, h, &quad, |a, b| a.1 * b.1.conj()).into_iter().sum();
    let boundary: C64 = g
        .vertices()
        .iter()
        .filter(|v| v.boundary == BoundaryType::Coupled && v.degree() >= 2)
        .map(|v| vertex_term(&f.traces(g, &v.id), &h.traces(g, &v.id)))
        .sum();
    kinetic + boundary
}

/// `a[f] = a[f, f]` for `f` in the form domain.
pub fn form_value(g: &MetricGraph, f: &TrialFunction, opts: &FormOptions) -> Result<f64, QuadformError> {
    check_domain(g, f, opts.domain_tol)?;
    let value = form_sesquilinear(g, f, f, opts);
    if !(value.re.is_finite() && value.im.is_finite()) {
        return Err(QuadformError::NonFinite(g.edges()[0].id.clone()));
    }
    if value.im.abs() > 1e-8 * value.re.abs().max(1.0) {
        return Err(QuadformError::NotHermitian { re: value.re, im: value.im });
    }
    Ok(value.re)
}

/// `‖f‖²` in `L²(Γ)`.
pub fn l2_norm_sq(f: &TrialFunction, opts: &FormOptions) -> f64 {
    let quad = GaussLegendre::new(opts.order);
    integrate_pieces(f, f, &quad, |a, b| a.0 * b.0.conj()).into_iter().map(|z| z.re).sum()
}

/// `‖f'‖²` in `L²(Γ)`.
pub fn derivative_norm_sq(f: &TrialFunction, opts: &FormOptions) -> f64 {
    let quad = GaussLegendre::new(opts.order);
    integrate_pieces(f, f, &quad, |a, b| a.1 * b.1.conj()).into_iter().map(|z| z.re).sum()
}

/// `a[f] / ‖f‖²`.
pub fn rayleigh_quotient(g: &MetricGraph, f: &TrialFunction, opts: &FormOptions) -> Result<f64, QuadformError> {
    let norm = l2_norm_sq(f, opts);
    if !norm.is_finite() {
        return Err(QuadformError::NonFinite(g.edges()[0].id.clone()));
    }
    if norm <= 0.0 {
        return Err(QuadformError::ZeroNorm);
    }
    Ok(form_value(g, f, opts)? / norm)
}

/// Lower bound `(1 - 2 d l) ‖f'‖² - (4 d / l) ‖f‖²` for `a[f]`, valid for any
/// `l` not exceeding the shortest edge, `d` the maximal vertex degree.
pub fn form_lower_bound(g: &MetricGraph, f: &TrialFunction, l: f64, opts: &FormOptions) -> f64 {
    let d = g.max_degree() as f64;
    (1.0 - 2.0 * d * l) * derivative_norm_sq(f, opts) - 4.0 * d / l * l2_norm_sq(f, opts)
}

/// Move a segment of length `ell` from the tip of `from_edge` to the tip of
/// `to_edge` of a star and build the corresponding trial function from an
/// eigenfunction `psi` of the original star: `psi` is cut at `l_from - ell`
/// on the shortened edge and the removed piece, rescaled to match
/// continuously, is appended to `to_edge`.
///
/// Requires both edges to start at the same vertex and end at degree-one
/// vertices, `l_from ≤ l_to` and `ell < l_from`, or `ell = l_from` when the
/// central degree is even.
pub fn build_transplant_trial(
    g: &MetricGraph,
    psi: &Eigenfunction,
    from_edge: &str,
    to_edge: &str,
    ell: f64,
) -> Result<(MetricGraph, TrialFunction), QuadformError> {
    let bad = |m: String| QuadformError::PreconditionViolated(m);
    let fi = g.edge_index(from_edge).ok_or_else(|| bad(format!("unknown edge `{from_edge}`")))?;
    let ti = g.edge_index(to_edge).ok_or_else(|| bad(format!("unknown edge `{to_edge}`")))?;
    let (ef, et) = (&g.edges()[fi], &g.edges()[ti]);
    if ef.origin != et.origin {
        return Err(bad("edges must start at the same vertex".into()));
    }
    for e in [ef, et] {
        if g.vertex(&e.terminus).map(|v| v.degree()) != Some(1) {
            return Err(bad(format!("edge `{}` must end at a degree-one vertex", e.id)));
        }
    }
    let (l_from, l_to) = (ef.length, et.length);
    if l_from > l_to {
        return Err(bad(format!("l_from = {l_from} exceeds l_to = {l_to}")));
    }
    let center_degree = g.vertex(&ef.origin).map(|v| v.degree()).unwrap_or(0);
    let whole = ell >= l_from;
    if !(0.0..=l_from).contains(&ell) || (whole && center_degree % 2 == 1) {
        return Err(bad(format!("ℓ = {ell} not admissible for l_from = {l_from}, degree {center_degree}")));
    }
    let op = SurgeryOp::Transplant { from_edge: from_edge.into(), to_edge: to_edge.into(), length: ell };
    let new_g = apply_surgery(g, &op).map_err(|e| bad(e.to_string()))?;

    let psi = Arc::new(psi.clone());
    let cut = l_from - ell;
    let anchor = psi.eval(fi, cut).0;
    if anchor.norm() == 0.0 {
        return Err(bad("eigenfunction vanishes at the cut point".into()));
    }
    let factor = psi.eval(ti, l_to).0 / anchor;

    let mut pieces = Vec::with_capacity(new_g.num_edges());
    for e in new_g.edges() {
        let old = g.edge_index(&e.id).expect("surgery keeps edge ids");
        let p = Arc::clone(&psi);
        let piece = if old == ti {
            let func: EdgeFn = Arc::new(move |x: f64| {
                if x <= l_to {
                    p.eval(ti, x)
                } else {
                    let (v, d) = p.eval(fi, x - l_to + cut);
                    (v * factor, d * factor)
                }
            });
            let mut bps = vec![0.0, l_to];
            if ell > 0.0 {
                bps.push(l_to + ell);
            }
            TrialPiece { breakpoints: bps, func }
        } else {
            TrialPiece::smooth(e.length, Arc::new(move |x: f64| p.eval(old, x)))
        };
        pieces.push(piece);
    }
    Ok((new_g, TrialFunction { pieces }))
}
