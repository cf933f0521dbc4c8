//! Piecewise-linear Galerkin discretization of the quadratic form, used as an
//! independent reference for the secular solver.
//!
//! Every edge carries its own mesh with separate unknowns at both endpoints;
//! the vertex coupling enters only through the Hermitian trace terms of the
//! form and the linear constraints of its domain. Ritz values are upper
//! bounds for the eigenvalues and converge at rate `O(h²)`.
//!
//! Eigenvalues are located by bisection on the Sylvester inertia of
//! `K - σM`: the edge interiors are eliminated edge by edge (tridiagonal
//! LDLᵀ), leaving a small Hermitian Schur complement on the vertex traces.

use nalgebra::DMatrix;
use rayon::prelude::*;
use thiserror::Error;

use crate::graph::{validate, BoundaryType, MetricGraph, Side, Violation};
use crate::C64;

#[derive(Debug, Error)]
pub enum FemError {
    #[error("invalid graph: {0:?}")]
    InvalidGraph(Vec<Violation>),
    #[error("mesh size {h} too coarse for eigenvalue {lambda} (need √λ·h ≤ 1)")]
    MeshTooCoarse { h: f64, lambda: f64 },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

/// Mesh of one edge.
#[derive(Debug, Clone, Copy)]
struct EdgeMesh {
    elements: usize,
    h: f64,
}

/// Trace unknowns after eliminating the domain constraints: `traces = T r`.
#[derive(Debug, Clone)]
struct TraceReduction {
    /// `2E × r`, rows indexed by `2·edge + side`.
    t: DMatrix<f64>,
    /// Vertex terms on the full trace vector.
    h: DMatrix<C64>,
}

fn trace_slot(edge: usize, side: Side) -> usize {
    2 * edge + if side == Side::Start { 0 } else { 1 }
}

fn reduce_traces(g: &MetricGraph) -> TraceReduction {
    let n = 2 * g.num_edges();
    let mut columns: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut h = DMatrix::<C64>::zeros(n, n);
    for v in g.vertices() {
        let slots: Vec<usize> = v
            .endpoint_order
            .iter()
            .map(|p| trace_slot(g.edge_index(&p.edge).expect("validated endpoint"), p.side))
            .collect();
        let d = slots.len();
        match v.boundary {
            BoundaryType::Dirichlet => {}
            BoundaryType::Coupled if d.is_multiple_of(2) => {
                // F₀ = Σ_{j≥1} (-1)^{j+1} F_j; the others are free.
                for (j, &s) in slots.iter().enumerate().skip(1) {
                    let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
                    columns.push(vec![(s, 1.0), (slots[0], sign)]);
                }
            }
            _ => {
                for &s in &slots {
                    columns.push(vec![(s, 1.0)]);
                }
            }
        }
        if v.boundary == BoundaryType::Coupled && d >= 2 {
            for j in 0..d {
                for k in 0..j {
                    let sign = if (j + k) % 2 == 0 { 1.0 } else { -1.0 };
                    // i s (F_k conj(G_j) - F_j conj(G_k)) = Σ conj(G_a) H_ab F_b
                    h[(slots[j], slots[k])] += C64::new(0.0, sign);
                    h[(slots[k], slots[j])] -= C64::new(0.0, sign);
                }
            }
        }
    }
    let mut t = DMatrix::zeros(n, columns.len());
    for (c, col) in columns.iter().enumerate() {
        for &(row, val) in col {
            t[(row, c)] = val;
        }
    }
    TraceReduction { t, h }
}

/// Finite-element model of the form on a graph.
#[derive(Debug, Clone)]
pub struct FemModel {
    meshes: Vec<EdgeMesh>,
    traces: TraceReduction,
    h_max: f64,
    floor: f64,
}

impl FemModel {
    pub fn new(g: &MetricGraph, h: f64) -> Result<Self, FemError> {
        let violations = validate(g);
        if !violations.is_empty() {
            return Err(FemError::InvalidGraph(violations));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(FemError::InvalidRequest(format!("mesh size {h}")));
        }
        let meshes: Vec<EdgeMesh> = g
            .edges()
            .iter()
            .map(|e| {
                let elements = ((e.length / h).ceil() as usize).max(4);
                EdgeMesh { elements, h: e.length / elements as f64 }
            })
            .collect();
        let h_max = meshes.iter().map(|m| m.h).fold(0.0, f64::max);
        // a[f] ≥ -(4d/l)‖f‖² for l ≤ min(l_min, 1/(2d)).
        let d = g.max_degree().max(1) as f64;
        let l = g.min_edge_length().min(1.0 / (2.0 * d));
        Ok(FemModel { meshes, traces: reduce_traces(g), h_max, floor: -4.0 * d / l - 1.0 })
    }

    /// Number of unknowns after constraint elimination.
    pub fn dimension(&self) -> usize {
        self.meshes.iter().map(|m| m.elements - 1).sum::<usize>() + self.traces.t.ncols()
    }

    /// Number of Ritz values strictly below `sigma`.
    pub fn count_below(&self, sigma: f64) -> usize {
        let n = self.traces.t.nrows();
        let per_edge: Vec<(usize, [f64; 3])> = self.meshes.par_iter().map(|m| edge_schur(m, sigma)).collect();
        let mut schur = self.traces.h.clone();
        let mut negatives = 0;
        for (e, (neg, s)) in per_edge.into_iter().enumerate() {
            negatives += neg;
            let (a, b) = (trace_slot(e, Side::Start), trace_slot(e, Side::End));
            schur[(a, a)] += C64::new(s[0], 0.0);
            schur[(a, b)] += C64::new(s[1], 0.0);
            schur[(b, a)] += C64::new(s[1], 0.0);
            schur[(b, b)] += C64::new(s[2], 0.0);
        }
        debug_assert_eq!(schur.nrows(), n);
        let t = self.traces.t.map(|x| C64::new(x, 0.0));
        let reduced = t.adjoint() * schur * &t;
        if reduced.nrows() > 0 {
            negatives += reduced.symmetric_eigenvalues().iter().filter(|&&x| x < 0.0).count();
        }
        negatives
    }

    /// The `m`-th Ritz value (1-based) by bisection on the inertia count.
    pub fn ritz_value(&self, m: usize) -> f64 {
        let mut lo = self.floor;
        let mut hi = 10.0;
        while self.count_below(hi) < m {
            hi = 2.0 * hi + 10.0;
        }
        while hi - lo > 1e-13 * hi.abs().max(lo.abs()).max(1.0) {
            let mid = 0.5 * (lo + hi);
            if self.count_below(mid) >= m {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Eliminate the interior of one edge from `K - σM`: returns the number of
/// negative pivots and the Schur complement `[s00, s01, s11]` on the two
/// endpoint traces.
fn edge_schur(mesh: &EdgeMesh, sigma: f64) -> (usize, [f64; 3]) {
    let h = mesh.h;
    let diag_el = 1.0 / h - sigma * h / 3.0;
    let off = -1.0 / h - sigma * h / 6.0;
    let interior = mesh.elements - 1;
    // Tridiagonal with diagonal 2·diag_el and off-diagonal `off`; right-hand
    // sides are `off` at the first and at the last interior node.
    let mut negatives = 0;
    let mut pivots = Vec::with_capacity(interior);
    let mut y0 = Vec::with_capacity(interior);
    let mut y1 = Vec::with_capacity(interior);
    for i in 0..interior {
        let mut p = 2.0 * diag_el;
        let (mut r0, mut r1) = (if i == 0 { off } else { 0.0 }, if i + 1 == interior { off } else { 0.0 });
        if i > 0 {
            let l = off / pivots[i - 1];
            p -= l * off;
            r0 -= l * y0[i - 1];
            r1 -= l * y1[i - 1];
        }
        if p == 0.0 {
            p = f64::EPSILON * (1.0 / h);
        }
        if p < 0.0 {
            negatives += 1;
        }
        pivots.push(p);
        y0.push(r0);
        y1.push(r1);
    }
    // bᵢᵀ A⁻¹ bⱼ = Σ yᵢ yⱼ / p with A = L D Lᵀ and y = L⁻¹ b.
    let mut q = [0.0; 3];
    for i in 0..interior {
        q[0] += y0[i] * y0[i] / pivots[i];
        q[1] += y0[i] * y1[i] / pivots[i];
        q[2] += y1[i] * y1[i] / pivots[i];
    }
    (negatives, [diag_el - q[0], -q[1], diag_el - q[2]])
}

/// The `count` smallest Ritz values at mesh size `h`, ascending.
pub fn oracle_eigenvalues(g: &MetricGraph, count: usize, h: f64) -> Result<Vec<f64>, FemError> {
    if count == 0 {
        return Err(FemError::InvalidRequest("count must be positive".into()));
    }
    let model = FemModel::new(g, h)?;
    if count > model.dimension() {
        return Err(FemError::InvalidRequest(format!("{count} eigenvalues from {} unknowns", model.dimension())));
    }
    let values: Vec<f64> = (1..=count).into_par_iter().map(|m| model.ritz_value(m)).collect();
    let top = *values.last().expect("count is positive");
    if top.max(0.0).sqrt() * model.h_max > 1.0 {
        return Err(FemError::MeshTooCoarse { h: model.h_max, lambda: top });
    }
    Ok(values)
}

/// Dense matrices of the discretized form on the constrained space.
#[derive(Debug, Clone)]
pub struct Discretization {
    /// Hermitian stiffness including the vertex terms.
    pub stiffness: DMatrix<C64>,
    /// Symmetric positive definite mass matrix.
    pub mass: DMatrix<f64>,
    /// Columns span the constrained space within the unconstrained unknowns
    /// (all edge nodes, endpoints included).
    pub constraints: DMatrix<f64>,
}

/// Dense assembly; intended for small meshes.
pub fn discretize(g: &MetricGraph, h: f64) -> Result<Discretization, FemError> {
    let model = FemModel::new(g, h)?;
    let offsets: Vec<usize> = model
        .meshes
        .iter()
        .scan(0, |acc, m| {
            let o = *acc;
            *acc += m.elements + 1;
            Some(o)
        })
        .collect();
    let n: usize = model.meshes.iter().map(|m| m.elements + 1).sum();
    let mut k = DMatrix::<C64>::zeros(n, n);
    let mut mass = DMatrix::<f64>::zeros(n, n);
    for (e, m) in model.meshes.iter().enumerate() {
        for el in 0..m.elements {
            let (a, b) = (offsets[e] + el, offsets[e] + el + 1);
            let (s, md, mo) = (1.0 / m.h, m.h / 3.0, m.h / 6.0);
            k[(a, a)] += C64::new(s, 0.0);
            k[(b, b)] += C64::new(s, 0.0);
            k[(a, b)] -= C64::new(s, 0.0);
            k[(b, a)] -= C64::new(s, 0.0);
            mass[(a, a)] += md;
            mass[(b, b)] += md;
            mass[(a, b)] += mo;
            mass[(b, a)] += mo;
        }
    }
    let node_of_slot = |slot: usize| {
        let e = slot / 2;
        if slot.is_multiple_of(2) { offsets[e] } else { offsets[e] + model.meshes[e].elements }
    };
    let nt = model.traces.t.nrows();
    for a in 0..nt {
        for b in 0..nt {
            k[(node_of_slot(a), node_of_slot(b))] += model.traces.h[(a, b)];
        }
    }
    let interior: usize = model.meshes.iter().map(|m| m.elements - 1).sum();
    let mut constraints = DMatrix::zeros(n, interior + model.traces.t.ncols());
    let mut col = 0;
    for (e, m) in model.meshes.iter().enumerate() {
        for i in 1..m.elements {
            constraints[(offsets[e] + i, col)] = 1.0;
            col += 1;
        }
    }
    for c in 0..model.traces.t.ncols() {
        for slot in 0..nt {
            constraints[(node_of_slot(slot), col + c)] = model.traces.t[(slot, c)];
        }
    }
    Ok(Discretization { stiffness: k, mass, constraints })
}

impl Discretization {
    /// All eigenvalues of the constrained pencil, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let t = &self.constraints;
        let tc = t.map(|x| C64::new(x, 0.0));
        let k = tc.adjoint() * &self.stiffness * &tc;
        let m = t.transpose() * &self.mass * t;
        let chol = m.cholesky().expect("mass matrix is positive definite");
        let l_inv = chol.l().try_inverse().expect("Cholesky factor is invertible").map(|x| C64::new(x, 0.0));
        let a = &l_inv * k * l_inv.adjoint();
        let a = (&a + a.adjoint()) * C64::new(0.5, 0.0);
        let mut vals: Vec<f64> = a.symmetric_eigenvalues().iter().copied().collect();
        vals.sort_by(f64::total_cmp);
        vals
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{make_equilateral_star, make_figure8, make_star};
    use std::f64::consts::PI;

    #[test]
    fn inertia_count_matches_dense_pencil() {
        for g in [
            make_star(&[0.5, 0.8, 1.1], BoundaryType::Neumann).unwrap(),
            make_equilateral_star(4, 0.6, BoundaryType::Dirichlet).unwrap(),
            make_figure8(0.4, 0.7).unwrap(),
        ] {
            let h = 0.05;
            let dense = discretize(&g, h).unwrap().eigenvalues();
            let model = FemModel::new(&g, h).unwrap();
            assert_eq!(dense.len(), model.dimension());
            for m in 1..=8 {
                let v = model.ritz_value(m);
                assert!((v - dense[m - 1]).abs() < 1e-8 * dense[m - 1].abs().max(1.0), "{v} vs {}", dense[m - 1]);
            }
        }
    }

    #[test]
    fn discretization_is_hermitian() {
        let g = make_figure8(0.4, 0.7).unwrap();
        let d = discretize(&g, 0.1).unwrap();
        assert!((&d.stiffness - d.stiffness.adjoint()).norm() < 1e-15);
        assert!((&d.mass - d.mass.transpose()).norm() < 1e-15);
    }

    #[test]
    fn two_star_matches_interval() {
        let g = make_star(&[0.4, 0.6], BoundaryType::Neumann).unwrap();
        let vals = oracle_eigenvalues(&g, 4, 1e-3).unwrap();
        for (n, v) in vals.iter().enumerate() {
            let exact = (n as f64 * PI).powi(2);
            assert!((v - exact).abs() < 1e-3 * exact.max(1.0), "{v} vs {exact}");
            assert!(*v >= exact - 1e-9);
        }
    }

    #[test]
    fn figure8_ground_state() {
        let g = make_figure8(1.0, 1.0).unwrap();
        let vals = oracle_eigenvalues(&g, 2, 1e-3).unwrap();
        assert!((vals[0] + 1.0).abs() < 1e-5);
        assert!(vals[1].abs() < 1e-9);
    }

    #[test]
    fn coarse_mesh_rejected() {
        let g = make_figure8(0.5, 0.5).unwrap();
        assert!(matches!(oracle_eigenvalues(&g, 8, 0.2), Err(FemError::MeshTooCoarse { .. })));
    }
}
