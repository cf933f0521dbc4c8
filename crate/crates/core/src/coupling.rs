//! Vertex condition matrices and their block-diagonal assembly.
//!
//! At a coupled vertex of degree `d >= 2` with endpoint traces `F` and
//! inward derivatives `F'` (in the stored enumeration) the conditions read
//!
//! ```text
//! (F[j+1] - F[j]) + i (F'[j] + F'[j+1]) = 0,   j = 1..d (cyclic)
//! ```
//!
//! With `A` the circulant difference matrix (1 on the diagonal, -1 on the
//! superdiagonal and in the lower-left corner) and `B` the circulant sum
//! matrix, row `j` of `A F - i B F'` is the negative of condition `j`. The
//! system is therefore `A F - i B F' = 0`; the conjugate form `A F + i B F'`
//! describes the complex-conjugate coupling, which has the same spectrum.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::graph::{BoundaryType, EndpointRef, MetricGraph, Vertex};
use crate::C64;

#[derive(Debug, Error, PartialEq)]
pub enum CouplingError {
    #[error("dimension mismatch: vertex has degree {expected}, got vectors of length {got_f} and {got_df}")]
    DimensionMismatch { expected: usize, got_f: usize, got_df: usize },
}

/// Condition matrices `(A_m, B_m)` for a single vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexConditionPair {
    pub vertex_id: String,
    pub a_matrix: DMatrix<C64>,
    pub b_matrix: DMatrix<C64>,
}

impl VertexConditionPair {
    pub fn degree(&self) -> usize {
        self.a_matrix.nrows()
    }

    /// `A F - i B F'` for traces `F` and inward derivatives `F'`.
    pub fn apply(&self, f: &DVector<C64>, df: &DVector<C64>) -> DVector<C64> {
        &self.a_matrix * f - (&self.b_matrix * df) * C64::i()
    }
}

pub fn build_vertex_pair(v: &Vertex) -> VertexConditionPair {
    let d = v.degree();
    let one = C64::new(1.0, 0.0);
    let (a, b) = match (v.boundary, d) {
        (BoundaryType::Dirichlet, _) => (DMatrix::from_element(1, 1, one), DMatrix::zeros(1, 1)),
        (_, 1) => (DMatrix::zeros(1, 1), DMatrix::from_element(1, 1, one)),
        _ => {
            let mut a = DMatrix::zeros(d, d);
            let mut b = DMatrix::zeros(d, d);
            for j in 0..d {
                let next = (j + 1) % d;
                a[(j, j)] += one;
                a[(j, next)] -= one;
                b[(j, j)] += one;
                b[(j, next)] += one;
            }
            (a, b)
        }
    };
    VertexConditionPair { vertex_id: v.id.clone(), a_matrix: a, b_matrix: b }
}

/// Max-norm of the condition residual `A F - i B F'`.
pub fn vertex_residual(
    pair: &VertexConditionPair,
    f: &DVector<C64>,
    df: &DVector<C64>,
) -> Result<f64, CouplingError> {
    let d = pair.degree();
    if f.len() != d || df.len() != d {
        return Err(CouplingError::DimensionMismatch { expected: d, got_f: f.len(), got_df: df.len() });
    }
    Ok(pair.apply(f, df).iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Block-diagonal condition system over all vertices.
#[derive(Debug, Clone)]
pub struct BlockConditionSystem {
    pub a_block: DMatrix<C64>,
    pub b_block: DMatrix<C64>,
    /// Slot of every edge endpoint in the stacked trace vector.
    pub endpoint_index: HashMap<EndpointRef, usize>,
    /// Inverse of `endpoint_index`.
    pub slots: Vec<EndpointRef>,
    /// `(vertex id, first slot, degree)` per block, in assembly order.
    pub blocks: Vec<(String, usize, usize)>,
}

impl BlockConditionSystem {
    pub fn dimension(&self) -> usize {
        self.slots.len()
    }
}

/// Assemble the block-diagonal `A`, `B` over vertices sorted by id.
pub fn assemble_blocks(g: &MetricGraph) -> BlockConditionSystem {
    let n = 2 * g.num_edges();
    let mut a_block = DMatrix::zeros(n, n);
    let mut b_block = DMatrix::zeros(n, n);
    let mut endpoint_index = HashMap::with_capacity(n);
    let mut slots = Vec::with_capacity(n);
    let mut blocks = Vec::new();
    let mut offset = 0;
    for vi in g.canonical_vertex_order() {
        let v = &g.vertices()[vi];
        let pair = build_vertex_pair(v);
        let d = pair.degree();
        a_block.view_mut((offset, offset), (d, d)).copy_from(&pair.a_matrix);
        b_block.view_mut((offset, offset), (d, d)).copy_from(&pair.b_matrix);
        for (k, p) in v.endpoint_order.iter().enumerate() {
            endpoint_index.insert(p.clone(), offset + k);
            slots.push(p.clone());
        }
        blocks.push((v.id.clone(), offset, d));
        offset += d;
    }
    debug_assert_eq!(offset, n);
    BlockConditionSystem { a_block, b_block, endpoint_index, slots, blocks }
}
