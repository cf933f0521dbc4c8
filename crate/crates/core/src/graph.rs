//! Metric graph data model, validation, JSON I/O and surgery operations.
//!
//! A graph is a finite collection of intervals `[0, l(e)]` glued at their
//! endpoints. Every vertex stores an explicit enumeration of the edge
//! endpoints meeting at it; the cyclic vertex coupling depends on that order,
//! so it is part of the data and is serialized with the graph.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which end of the parametrizing interval `[0, l]` an endpoint refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// `x = 0`, the origin of the edge.
    Start,
    /// `x = l`, the terminus of the edge.
    End,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Start => Side::End,
            Side::End => Side::Start,
        }
    }
}

/// One edge endpoint, i.e. one slot in a vertex enumeration.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(String, Side)", into = "(String, Side)")]
pub struct EndpointRef {
    pub edge: String,
    pub side: Side,
}

impl EndpointRef {
    pub fn new(edge: impl Into<String>, side: Side) -> Self {
        EndpointRef { edge: edge.into(), side }
    }

    pub fn start(edge: impl Into<String>) -> Self {
        Self::new(edge, Side::Start)
    }

    pub fn end(edge: impl Into<String>) -> Self {
        Self::new(edge, Side::End)
    }
}

impl From<(String, Side)> for EndpointRef {
    fn from((edge, side): (String, Side)) -> Self {
        EndpointRef { edge, side }
    }
}

impl From<EndpointRef> for (String, Side) {
    fn from(e: EndpointRef) -> Self {
        (e.edge, e.side)
    }
}

impl fmt::Display for EndpointRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let side = match self.side {
            Side::Start => "start",
            Side::End => "end",
        };
        write!(f, "{}:{}", self.edge, side)
    }
}

/// Vertex condition family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryType {
    /// Cyclic coupling in the stored endpoint order.
    Coupled,
    /// `f'(v) = 0`, degree one only.
    Neumann,
    /// `f(v) = 0`, degree one only.
    Dirichlet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vertex {
    pub id: String,
    #[serde(rename = "bc")]
    pub boundary: BoundaryType,
    #[serde(rename = "order")]
    pub endpoint_order: Vec<EndpointRef>,
}

impl Vertex {
    pub fn new(id: impl Into<String>, boundary: BoundaryType, endpoint_order: Vec<EndpointRef>) -> Self {
        Vertex { id: id.into(), boundary, endpoint_order }
    }

    pub fn degree(&self) -> usize {
        self.endpoint_order.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub id: String,
    #[serde(rename = "from")]
    pub origin: String,
    #[serde(rename = "to")]
    pub terminus: String,
    pub length: f64,
}

impl Edge {
    pub fn new(id: impl Into<String>, origin: impl Into<String>, terminus: impl Into<String>, length: f64) -> Self {
        Edge { id: id.into(), origin: origin.into(), terminus: terminus.into(), length }
    }

    pub fn is_loop(&self) -> bool {
        self.origin == self.terminus
    }

    pub fn vertex_at(&self, side: Side) -> &str {
        match side {
            Side::Start => &self.origin,
            Side::End => &self.terminus,
        }
    }
}

/// An invariant violation reported by [`validate`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Violation {
    EmptyGraph,
    DuplicateVertexId(String),
    DuplicateEdgeId(String),
    NonpositiveLength(String),
    DanglingEndpoint { edge: String, vertex: String },
    BadEnumeration(String),
    IsolatedVertex(String),
    BoundaryDegreeMismatch(String),
    TotalLengthMismatch,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyGraph => write!(f, "graph has no edges"),
            Violation::DuplicateVertexId(v) => write!(f, "duplicate vertex id `{v}`"),
            Violation::DuplicateEdgeId(e) => write!(f, "duplicate edge id `{e}`"),
            Violation::NonpositiveLength(e) => write!(f, "edge `{e}` has non-positive or non-finite length"),
            Violation::DanglingEndpoint { edge, vertex } => {
                write!(f, "edge `{edge}` references unknown vertex `{vertex}`")
            }
            Violation::BadEnumeration(v) => {
                write!(f, "endpoint order of vertex `{v}` is not a permutation of its incident endpoints")
            }
            Violation::IsolatedVertex(v) => write!(f, "vertex `{v}` has no incident edges"),
            Violation::BoundaryDegreeMismatch(v) => {
                write!(f, "vertex `{v}` carries a Neumann/Dirichlet condition but has degree != 1")
            }
            Violation::TotalLengthMismatch => write!(f, "cached total length does not match edge lengths"),
        }
    }
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("invalid length {0}: lengths must be positive and finite")]
    InvalidLength(f64),
    #[error("invalid graph: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("illegal surgery: {0}")]
    IllegalOp(String),
    #[error("graph is not reducible to a figure-8: {0}")]
    NotReducible(String),
    #[error("graph is disconnected")]
    Disconnected,
    #[error("unknown vertex `{0}`")]
    UnknownVertex(String),
    #[error("unknown edge `{0}`")]
    UnknownEdge(String),
    #[error("malformed graph file: {0}")]
    Parse(String),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

/// Compact metric graph. Immutable once built; every operation returns a new value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGraph", into = "RawGraph")]
pub struct MetricGraph {
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
    total_length: f64,
}

#[derive(Serialize, Deserialize)]
struct RawGraph {
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
}

impl TryFrom<RawGraph> for MetricGraph {
    type Error = GraphError;

    fn try_from(raw: RawGraph) -> Result<Self, Self::Error> {
        MetricGraph::new(raw.vertices, raw.edges)
    }
}

impl From<MetricGraph> for RawGraph {
    fn from(g: MetricGraph) -> Self {
        RawGraph { vertices: g.vertices, edges: g.edges }
    }
}

impl MetricGraph {
    /// Assemble a graph without any checks. Use [`validate`] to inspect it.
    pub fn from_parts(vertices: Vec<Vertex>, edges: Vec<Edge>) -> Self {
        let total_length = edges.iter().map(|e| e.length).sum();
        MetricGraph { vertices, edges, total_length }
    }

    /// Assemble and validate a graph. Degree-one `Coupled` vertices are
    /// normalized to `Neumann`.
    pub fn new(mut vertices: Vec<Vertex>, edges: Vec<Edge>) -> Result<Self, GraphError> {
        for v in vertices.iter_mut() {
            if v.boundary == BoundaryType::Coupled && v.degree() == 1 {
                log::warn!("vertex `{}` has degree 1, treating coupled condition as Neumann", v.id);
                v.boundary = BoundaryType::Neumann;
            }
        }
        let g = Self::from_parts(vertices, edges);
        let violations = validate(&g);
        if violations.is_empty() {
            Ok(g)
        } else {
            Err(GraphError::Invalid(violations))
        }
    }

    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        serde_json::from_str(text).map_err(|e| GraphError::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serialization cannot fail")
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn total_length(&self) -> f64 {
        self.total_length
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn vertex_index(&self, id: &str) -> Option<usize> {
        self.vertices.iter().position(|v| v.id == id)
    }

    pub fn edge_index(&self, id: &str) -> Option<usize> {
        self.edges.iter().position(|e| e.id == id)
    }

    pub fn vertex(&self, id: &str) -> Option<&Vertex> {
        self.vertices.iter().find(|v| v.id == id)
    }

    pub fn edge(&self, id: &str) -> Option<&Edge> {
        self.edges.iter().find(|e| e.id == id)
    }

    pub fn max_degree(&self) -> usize {
        self.vertices.iter().map(Vertex::degree).max().unwrap_or(0)
    }

    pub fn min_edge_length(&self) -> f64 {
        self.edges.iter().map(|e| e.length).fold(f64::INFINITY, f64::min)
    }

    /// Vertex indices sorted by id; the canonical vertex order for block assembly.
    pub fn canonical_vertex_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.vertices.len()).collect();
        idx.sort_by(|&a, &b| self.vertices[a].id.cmp(&self.vertices[b].id));
        idx
    }

    pub fn is_connected(&self) -> bool {
        if self.vertices.is_empty() {
            return false;
        }
        let adj = self.adjacency();
        let mut seen = vec![false; self.vertices.len()];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(v) = queue.pop_front() {
            for &(w, _) in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Neighbour lists `(vertex index, edge length)`; loops and parallel edges repeated.
    fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let index: HashMap<&str, usize> =
            self.vertices.iter().enumerate().map(|(i, v)| (v.id.as_str(), i)).collect();
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for e in &self.edges {
            let (Some(&a), Some(&b)) = (index.get(e.origin.as_str()), index.get(e.terminus.as_str())) else {
                continue;
            };
            adj[a].push((b, e.length));
            if a != b {
                adj[b].push((a, e.length));
            }
        }
        adj
    }

    /// Path graph: every vertex has degree at most two and the graph is a tree.
    pub fn is_path(&self) -> bool {
        self.is_connected()
            && self.max_degree() <= 2
            && self.edges.len() + 1 == self.vertices.len()
    }

    /// Cycle graph: connected and every vertex has degree exactly two.
    pub fn is_cycle(&self) -> bool {
        self.is_connected() && self.vertices.iter().all(|v| v.degree() == 2)
    }

    /// Connected, one vertex of degree four and all others of degree two:
    /// a figure-8 up to subdivision of its loops by Kirchhoff points.
    pub fn is_figure8_like(&self) -> bool {
        self.is_connected()
            && self.vertices.iter().filter(|v| v.degree() == 4).count() == 1
            && self.vertices.iter().all(|v| v.degree() == 4 || v.degree() == 2)
    }

    /// Structural fingerprint: sorted degree sequence, loop count and sorted
    /// edge lengths.
    pub fn structure_signature(&self) -> (Vec<usize>, usize, Vec<f64>) {
        let mut degrees: Vec<usize> = self.vertices.iter().map(Vertex::degree).collect();
        degrees.sort_unstable();
        let loops = self.edges.iter().filter(|e| e.is_loop()).count();
        let mut lengths: Vec<f64> = self.edges.iter().map(|e| e.length).collect();
        lengths.sort_by(f64::total_cmp);
        (degrees, loops, lengths)
    }

    fn fresh_vertex_id(&self, base: &str) -> String {
        if self.vertex(base).is_none() {
            return base.to_string();
        }
        (1..).map(|n| format!("{base}_{n}")).find(|id| self.vertex(id).is_none()).unwrap()
    }

    fn fresh_edge_id(&self) -> String {
        (self.edges.len() + 1..).map(|n| format!("e{n}")).find(|id| self.edge(id).is_none()).unwrap()
    }
}

/// Check every graph invariant; returns an empty list iff the graph is well formed.
pub fn validate(g: &MetricGraph) -> Vec<Violation> {
    let mut out = Vec::new();
    if g.edges.is_empty() {
        out.push(Violation::EmptyGraph);
    }

    let mut vertex_ids = HashSet::new();
    for v in &g.vertices {
        if !vertex_ids.insert(v.id.as_str()) {
            out.push(Violation::DuplicateVertexId(v.id.clone()));
        }
    }
    let mut edge_ids = HashSet::new();
    for e in &g.edges {
        if !edge_ids.insert(e.id.as_str()) {
            out.push(Violation::DuplicateEdgeId(e.id.clone()));
        }
        if !(e.length > 0.0 && e.length.is_finite()) {
            out.push(Violation::NonpositiveLength(e.id.clone()));
        }
        for vid in [&e.origin, &e.terminus] {
            if !vertex_ids.contains(vid.as_str()) {
                out.push(Violation::DanglingEndpoint { edge: e.id.clone(), vertex: vid.clone() });
            }
        }
    }

    let mut incident: HashMap<&str, Vec<EndpointRef>> = HashMap::new();
    for e in &g.edges {
        incident.entry(e.origin.as_str()).or_default().push(EndpointRef::start(e.id.clone()));
        incident.entry(e.terminus.as_str()).or_default().push(EndpointRef::end(e.id.clone()));
    }
    for v in &g.vertices {
        let mut expected = incident.get(v.id.as_str()).cloned().unwrap_or_default();
        let mut listed = v.endpoint_order.clone();
        expected.sort();
        listed.sort();
        if expected != listed {
            out.push(Violation::BadEnumeration(v.id.clone()));
        }
        if expected.is_empty() {
            out.push(Violation::IsolatedVertex(v.id.clone()));
        }
        if matches!(v.boundary, BoundaryType::Neumann | BoundaryType::Dirichlet) && v.degree() != 1 {
            out.push(Violation::BoundaryDegreeMismatch(v.id.clone()));
        }
    }

    let sum: f64 = g.edges.iter().map(|e| e.length).sum();
    if (sum - g.total_length).abs() > 1e-12 * sum.abs().max(f64::MIN_POSITIVE) {
        out.push(Violation::TotalLengthMismatch);
    }
    out
}

fn check_length(l: f64) -> Result<f64, GraphError> {
    if l > 0.0 && l.is_finite() {
        Ok(l)
    } else {
        Err(GraphError::InvalidLength(l))
    }
}

/// Star with central vertex `c` (endpoint order `e1..eN`) and tips `t1..tN`.
pub fn make_star(lengths: &[f64], tip_bc: BoundaryType) -> Result<MetricGraph, GraphError> {
    if lengths.is_empty() {
        return Err(GraphError::IllegalOp("a star needs at least one edge".into()));
    }
    if tip_bc == BoundaryType::Coupled {
        return Err(GraphError::IllegalOp("star tips must be Neumann or Dirichlet".into()));
    }
    let n = lengths.len();
    let mut edges = Vec::with_capacity(n);
    let mut vertices = Vec::with_capacity(n + 1);
    let center_bc = if n == 1 { BoundaryType::Neumann } else { BoundaryType::Coupled };
    vertices.push(Vertex::new(
        "c",
        center_bc,
        (1..=n).map(|j| EndpointRef::start(format!("e{j}"))).collect(),
    ));
    for (j, &l) in lengths.iter().enumerate() {
        let l = check_length(l)?;
        let (eid, tid) = (format!("e{}", j + 1), format!("t{}", j + 1));
        vertices.push(Vertex::new(tid.clone(), tip_bc, vec![EndpointRef::end(eid.clone())]));
        edges.push(Edge::new(eid, "c", tid, l));
    }
    MetricGraph::new(vertices, edges)
}

pub fn make_equilateral_star(n: usize, edge_length: f64, tip_bc: BoundaryType) -> Result<MetricGraph, GraphError> {
    make_star(&vec![edge_length; n], tip_bc)
}

/// One vertex `v` with loops `e1`, `e2`; order `(e1 start, e1 end, e2 start, e2 end)`.
pub fn make_figure8(l1: f64, l2: f64) -> Result<MetricGraph, GraphError> {
    let (l1, l2) = (check_length(l1)?, check_length(l2)?);
    MetricGraph::new(
        vec![Vertex::new(
            "v",
            BoundaryType::Coupled,
            vec![
                EndpointRef::start("e1"),
                EndpointRef::end("e1"),
                EndpointRef::start("e2"),
                EndpointRef::end("e2"),
            ],
        )],
        vec![Edge::new("e1", "v", "v", l1), Edge::new("e2", "v", "v", l2)],
    )
}

/// Cycle `v1 -e1-> v2 -e2-> ... -> v1`; each vertex enumerates (incoming end, outgoing start).
pub fn make_cycle(lengths: &[f64]) -> Result<MetricGraph, GraphError> {
    let n = lengths.len();
    if n == 0 {
        return Err(GraphError::IllegalOp("a cycle needs at least one edge".into()));
    }
    let mut edges = Vec::new();
    let mut vertices = Vec::new();
    for (j, &l) in lengths.iter().enumerate() {
        let l = check_length(l)?;
        edges.push(Edge::new(format!("e{}", j + 1), format!("v{}", j + 1), format!("v{}", (j + 1) % n + 1), l));
    }
    for j in 0..n {
        let prev = (j + n - 1) % n;
        vertices.push(Vertex::new(
            format!("v{}", j + 1),
            BoundaryType::Coupled,
            vec![EndpointRef::end(format!("e{}", prev + 1)), EndpointRef::start(format!("e{}", j + 1))],
        ));
    }
    MetricGraph::new(vertices, edges)
}

/// Path `v0 -e1-> v1 -> ... -> vN` with Neumann ends.
pub fn make_path(lengths: &[f64]) -> Result<MetricGraph, GraphError> {
    let n = lengths.len();
    if n == 0 {
        return Err(GraphError::IllegalOp("a path needs at least one edge".into()));
    }
    let mut edges = Vec::new();
    for (j, &l) in lengths.iter().enumerate() {
        edges.push(Edge::new(format!("e{}", j + 1), format!("v{j}"), format!("v{}", j + 1), check_length(l)?));
    }
    let mut vertices = Vec::new();
    for j in 0..=n {
        let mut order = Vec::new();
        if j > 0 {
            order.push(EndpointRef::end(format!("e{j}")));
        }
        if j < n {
            order.push(EndpointRef::start(format!("e{}", j + 1)));
        }
        let bc = if order.len() == 1 { BoundaryType::Neumann } else { BoundaryType::Coupled };
        vertices.push(Vertex::new(format!("v{j}"), bc, order));
    }
    MetricGraph::new(vertices, edges)
}

/// A single graph modification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum SurgeryOp {
    /// Move a segment of length `length` from one edge to another. Removing the
    /// whole edge (`length == l(from_edge)`) deletes it.
    Transplant { from_edge: String, to_edge: String, length: f64 },
    /// Glue two vertices; the merged enumeration lists `v1`'s endpoints first.
    Merge {
        v1: String,
        v2: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        merged_id: Option<String>,
    },
    /// Inverse of `Merge`: partition the endpoint order of `vertex` into two
    /// nonempty order-preserving groups.
    Split {
        vertex: String,
        first: Vec<EndpointRef>,
        second: Vec<EndpointRef>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        ids: Option<(String, String)>,
    },
    /// New pendant edge rooted at `vertex`, inserted at `position` in its order.
    AttachEdge {
        vertex: String,
        length: f64,
        position: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        edge_id: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tip_bc: Option<BoundaryType>,
    },
    /// Lengthen an edge by `delta > 0`.
    ExtendEdge { edge: String, delta: f64 },
}

fn illegal(msg: impl Into<String>) -> GraphError {
    GraphError::IllegalOp(msg.into())
}

fn renormalize(v: &mut Vertex) {
    if v.degree() >= 2 {
        v.boundary = BoundaryType::Coupled;
    } else if v.boundary == BoundaryType::Coupled {
        v.boundary = BoundaryType::Neumann;
    }
}

/// Apply one surgery operation. `g` is left untouched.
pub fn apply_surgery(g: &MetricGraph, op: &SurgeryOp) -> Result<MetricGraph, GraphError> {
    let mut vertices = g.vertices.clone();
    let mut edges = g.edges.clone();
    match op {
        SurgeryOp::Transplant { from_edge, to_edge, length } => {
            let fi = g.edge_index(from_edge).ok_or_else(|| GraphError::UnknownEdge(from_edge.clone()))?;
            let ti = g.edge_index(to_edge).ok_or_else(|| GraphError::UnknownEdge(to_edge.clone()))?;
            if fi == ti {
                return Err(illegal("transplant source and target coincide"));
            }
            let l_from = edges[fi].length;
            let ell = *length;
            if !(ell >= 0.0 && ell.is_finite()) {
                return Err(illegal(format!("transplant length {ell} must be non-negative")));
            }
            if ell > l_from * (1.0 + 1e-12) {
                return Err(illegal(format!("transplant length {ell} exceeds edge length {l_from}")));
            }
            edges[ti].length += ell;
            if ell >= l_from * (1.0 - 1e-12) {
                // Whole edge moved: delete it.
                edges[ti].length = g.edges[ti].length + l_from;
                let removed = edges.remove(fi);
                for v in vertices.iter_mut() {
                    v.endpoint_order.retain(|p| p.edge != removed.id);
                }
                vertices.retain(|v| v.degree() > 0);
                for v in vertices.iter_mut() {
                    if v.degree() == 1 && v.boundary == BoundaryType::Coupled {
                        v.boundary = BoundaryType::Neumann;
                    }
                }
            } else {
                edges[fi].length = l_from - ell;
            }
        }
        SurgeryOp::Merge { v1, v2, merged_id } => {
            if v1 == v2 {
                return Err(illegal("cannot merge a vertex with itself"));
            }
            let i1 = g.vertex_index(v1).ok_or_else(|| GraphError::UnknownVertex(v1.clone()))?;
            let i2 = g.vertex_index(v2).ok_or_else(|| GraphError::UnknownVertex(v2.clone()))?;
            for &i in &[i1, i2] {
                if vertices[i].boundary == BoundaryType::Dirichlet {
                    return Err(illegal(format!("cannot merge Dirichlet vertex `{}`", vertices[i].id)));
                }
            }
            let new_id = match merged_id {
                Some(id) => {
                    if id != v1 && id != v2 && g.vertex(id).is_some() {
                        return Err(illegal(format!("vertex id `{id}` already in use")));
                    }
                    id.clone()
                }
                None => g.fresh_vertex_id(&format!("{v1}+{v2}")),
            };
            let mut order = vertices[i1].endpoint_order.clone();
            order.extend(vertices[i2].endpoint_order.iter().cloned());
            let mut merged = Vertex::new(new_id.clone(), BoundaryType::Coupled, order);
            renormalize(&mut merged);
            for e in edges.iter_mut() {
                if e.origin == *v1 || e.origin == *v2 {
                    e.origin = new_id.clone();
                }
                if e.terminus == *v1 || e.terminus == *v2 {
                    e.terminus = new_id.clone();
                }
            }
            vertices[i1] = merged;
            vertices.remove(i2);
        }
        SurgeryOp::Split { vertex, first, second, ids } => {
            let iv = g.vertex_index(vertex).ok_or_else(|| GraphError::UnknownVertex(vertex.clone()))?;
            let order = &vertices[iv].endpoint_order;
            if first.is_empty() || second.is_empty() {
                return Err(illegal("split groups must be nonempty"));
            }
            let is_subsequence = |group: &[EndpointRef]| {
                let mut it = order.iter();
                group.iter().all(|p| it.any(|q| q == p))
            };
            let mut all: Vec<EndpointRef> = first.iter().chain(second.iter()).cloned().collect();
            let mut sorted_order = order.clone();
            all.sort();
            sorted_order.sort();
            if all != sorted_order {
                return Err(illegal(format!("split groups do not partition the endpoints of `{vertex}`")));
            }
            if !is_subsequence(first) || !is_subsequence(second) {
                return Err(illegal("split groups must preserve the relative endpoint order"));
            }
            let (id1, id2) = match ids {
                Some((a, b)) => {
                    for id in [a, b] {
                        if id != vertex && g.vertex(id).is_some() {
                            return Err(illegal(format!("vertex id `{id}` already in use")));
                        }
                    }
                    if a == b {
                        return Err(illegal("split ids must differ"));
                    }
                    (a.clone(), b.clone())
                }
                None => (g.fresh_vertex_id(&format!("{vertex}.a")), g.fresh_vertex_id(&format!("{vertex}.b"))),
            };
            let mut va = Vertex::new(id1.clone(), BoundaryType::Coupled, first.clone());
            let mut vb = Vertex::new(id2.clone(), BoundaryType::Coupled, second.clone());
            renormalize(&mut va);
            renormalize(&mut vb);
            let in_first: HashSet<&EndpointRef> = first.iter().collect();
            for e in edges.iter_mut() {
                for side in [Side::Start, Side::End] {
                    if e.vertex_at(side) == vertex.as_str() {
                        let p = EndpointRef::new(e.id.clone(), side);
                        let target = if in_first.contains(&p) { id1.clone() } else { id2.clone() };
                        match side {
                            Side::Start => e.origin = target,
                            Side::End => e.terminus = target,
                        }
                    }
                }
            }
            vertices[iv] = va;
            vertices.push(vb);
        }
        SurgeryOp::AttachEdge { vertex, length, position, edge_id, tip_bc } => {
            let iv = g.vertex_index(vertex).ok_or_else(|| GraphError::UnknownVertex(vertex.clone()))?;
            let l = check_length(*length)?;
            if vertices[iv].boundary == BoundaryType::Dirichlet {
                return Err(illegal(format!("cannot attach an edge at Dirichlet vertex `{vertex}`")));
            }
            if *position > vertices[iv].degree() {
                return Err(illegal(format!("insertion position {position} out of range")));
            }
            let eid = match edge_id {
                Some(id) if g.edge(id).is_some() => return Err(illegal(format!("edge id `{id}` already in use"))),
                Some(id) => id.clone(),
                None => g.fresh_edge_id(),
            };
            let bc = tip_bc.unwrap_or(BoundaryType::Neumann);
            if bc == BoundaryType::Coupled {
                return Err(illegal("new tip must be Neumann or Dirichlet"));
            }
            let tip = g.fresh_vertex_id(&format!("t_{eid}"));
            vertices[iv].endpoint_order.insert(*position, EndpointRef::start(eid.clone()));
            renormalize(&mut vertices[iv]);
            vertices.push(Vertex::new(tip.clone(), bc, vec![EndpointRef::end(eid.clone())]));
            edges.push(Edge::new(eid, vertex.clone(), tip, l));
        }
        SurgeryOp::ExtendEdge { edge, delta } => {
            let ie = g.edge_index(edge).ok_or_else(|| GraphError::UnknownEdge(edge.clone()))?;
            if !(*delta > 0.0 && delta.is_finite()) {
                return Err(illegal(format!("extension {delta} must be positive")));
            }
            edges[ie].length += delta;
        }
    }
    MetricGraph::new(vertices, edges)
}

/// Apply a sequence of operations, returning every intermediate graph.
pub fn apply_sequence(g: &MetricGraph, ops: &[SurgeryOp]) -> Result<Vec<MetricGraph>, GraphError> {
    let mut out = Vec::with_capacity(ops.len());
    let mut current = g.clone();
    for op in ops {
        current = apply_surgery(&current, op)?;
        out.push(current.clone());
    }
    Ok(out)
}

/// Surgery sequence turning `g` into a figure-8 (up to degree-two vertices):
/// merge odd-degree vertices pairwise, then split along an Eulerian circuit.
/// Every merge joins two odd vertices, every split yields two even ones.
pub fn reduce_to_figure8(g: &MetricGraph) -> Result<Vec<(SurgeryOp, MetricGraph)>, GraphError> {
    if !g.is_connected() {
        return Err(GraphError::Disconnected);
    }
    if g.max_degree() < 3 {
        let kind = if g.is_cycle() { "cycle graph" } else { "path graph" };
        return Err(GraphError::NotReducible(format!("input is a {kind}")));
    }
    if g.vertices.iter().any(|v| v.boundary == BoundaryType::Dirichlet) {
        return Err(GraphError::NotReducible("Dirichlet vertices cannot be merged".into()));
    }

    let mut steps: Vec<(SurgeryOp, MetricGraph)> = Vec::new();
    let mut current = g.clone();

    loop {
        let mut odd: Vec<&Vertex> = current.vertices.iter().filter(|v| v.degree() % 2 == 1).collect();
        if odd.len() < 2 {
            break;
        }
        odd.sort_by(|a, b| a.id.cmp(&b.id));
        let op = SurgeryOp::Merge { v1: odd[0].id.clone(), v2: odd[1].id.clone(), merged_id: None };
        current = apply_surgery(&current, &op)?;
        steps.push((op, current.clone()));
    }

    // All degrees are even now; pick the hub that keeps degree four.
    let hub = current
        .vertices
        .iter()
        .max_by(|a, b| a.degree().cmp(&b.degree()).then_with(|| b.id.cmp(&a.id)))
        .map(|v| v.id.clone())
        .expect("nonempty graph");

    let circuit = eulerian_circuit(&current);
    let m = circuit.len();
    // Passes through vertices: (arrival endpoint, departure endpoint).
    let mut passes: BTreeMap<String, Vec<(EndpointRef, EndpointRef)>> = BTreeMap::new();
    for i in 0..m {
        let (_, arrive) = &circuit[i];
        let (depart, _) = &circuit[(i + 1) % m];
        let vid = endpoint_vertex(&current, arrive).to_string();
        passes.entry(vid).or_default().push((arrive.clone(), depart.clone()));
    }

    let vertex_ids: Vec<String> = current.vertices.iter().map(|v| v.id.clone()).collect();
    for vid in vertex_ids {
        let target = if vid == hub { 4 } else { 2 };
        let vp = passes.get(&vid).cloned().unwrap_or_default();
        let mut k = 0;
        while current.vertex(&vid).map(Vertex::degree).unwrap_or(0) > target {
            let (a, b) = &vp[k];
            let order = &current.vertex(&vid).expect("vertex present").endpoint_order;
            let first: Vec<EndpointRef> = order.iter().filter(|p| *p == a || *p == b).cloned().collect();
            let second: Vec<EndpointRef> = order.iter().filter(|p| *p != a && *p != b).cloned().collect();
            let split_id = current.fresh_vertex_id(&format!("{vid}#{}", k + 1));
            let op = SurgeryOp::Split { vertex: vid.clone(), first, second, ids: Some((split_id, vid.clone())) };
            current = apply_surgery(&current, &op)?;
            steps.push((op, current.clone()));
            k += 1;
        }
    }
    debug_assert!(current.is_figure8_like());
    Ok(steps)
}

fn endpoint_vertex<'a>(g: &'a MetricGraph, p: &EndpointRef) -> &'a str {
    g.edge(&p.edge).expect("endpoint edge exists").vertex_at(p.side)
}

/// Hierholzer's algorithm on the endpoint multigraph. Each traversal is
/// `(departure endpoint, arrival endpoint)`. Requires all degrees even.
fn eulerian_circuit(g: &MetricGraph) -> Vec<(EndpointRef, EndpointRef)> {
    let mut available: HashMap<&str, Vec<EndpointRef>> = HashMap::new();
    for v in &g.vertices {
        let mut order = v.endpoint_order.clone();
        order.reverse();
        available.insert(v.id.as_str(), order);
    }
    let mut used_edges: HashSet<String> = HashSet::new();
    let start = g.vertices[0].id.as_str();
    let mut stack: Vec<(&str, Option<(EndpointRef, EndpointRef)>)> = vec![(start, None)];
    let mut circuit = Vec::new();
    while let Some((v, _)) = stack.last().cloned() {
        let next = loop {
            match available.get_mut(v).and_then(Vec::pop) {
                Some(p) if used_edges.contains(&p.edge) => continue,
                other => break other,
            }
        };
        match next {
            Some(p) => {
                used_edges.insert(p.edge.clone());
                let q = EndpointRef::new(p.edge.clone(), p.side.opposite());
                let w = endpoint_vertex(g, &q);
                stack.push((w, Some((p, q))));
            }
            None => {
                if let Some((_, Some(t))) = stack.pop() {
                    circuit.push(t);
                }
            }
        }
    }
    circuit.reverse();
    circuit
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GraphMetrics {
    pub total_length: f64,
    pub diameter: f64,
    pub mean_edge_length: f64,
}

/// Total length, metric diameter (over all points, not only vertices) and
/// arithmetic mean of the edge lengths.
pub fn graph_metrics(g: &MetricGraph) -> Result<GraphMetrics, GraphError> {
    if !g.is_connected() {
        return Err(GraphError::Disconnected);
    }
    let n = g.vertices.len();
    let index: HashMap<&str, usize> = g.vertices.iter().enumerate().map(|(i, v)| (v.id.as_str(), i)).collect();
    let mut dist = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in dist.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for e in &g.edges {
        let (a, b) = (index[e.origin.as_str()], index[e.terminus.as_str()]);
        if e.length < dist[a][b] {
            dist[a][b] = e.length;
            dist[b][a] = e.length;
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = dist[i][k] + dist[k][j];
                if via < dist[i][j] {
                    dist[i][j] = via;
                }
            }
        }
    }

    let mut diameter: f64 = 0.0;
    for (ie, e) in g.edges.iter().enumerate() {
        for f in &g.edges[ie..] {
            diameter = diameter.max(edge_pair_max_distance(e, f, &dist, &index));
        }
    }
    Ok(GraphMetrics {
        total_length: g.total_length,
        diameter,
        mean_edge_length: g.total_length / g.edges.len() as f64,
    })
}

/// Half-plane `z <= a*s + b*t + c`.
#[derive(Clone, Copy)]
struct Plane {
    a: f64,
    b: f64,
    c: f64,
}

/// Farthest distance between a point on `e` (parameter s) and a point on `f`
/// (parameter t). The distance is a minimum of affine functions, so the
/// maximum is attained at a vertex of a small linear program which we
/// enumerate exhaustively.
fn edge_pair_max_distance(e: &Edge, f: &Edge, dist: &[Vec<f64>], index: &HashMap<&str, usize>) -> f64 {
    let (ea, eb) = (index[e.origin.as_str()], index[e.terminus.as_str()]);
    let (fa, fb) = (index[f.origin.as_str()], index[f.terminus.as_str()]);
    let (le, lf) = (e.length, f.length);
    // Routes through endpoints: s -> ea|eb -> fa|fb -> t.
    let mut routes = vec![
        Plane { a: 1.0, b: 1.0, c: dist[ea][fa] },
        Plane { a: 1.0, b: -1.0, c: dist[ea][fb] + lf },
        Plane { a: -1.0, b: 1.0, c: le + dist[eb][fa] },
        Plane { a: -1.0, b: -1.0, c: le + dist[eb][fb] + lf },
    ];
    let same = std::ptr::eq(e, f);
    // Region constraints written as 0 <= a*s + b*t + c.
    let mut region = vec![(1.0, 0.0, 0.0), (-1.0, 0.0, le), (0.0, 1.0, 0.0), (0.0, -1.0, lf)];
    if same {
        // Points on the same edge with s <= t also see the direct route.
        routes.push(Plane { a: -1.0, b: 1.0, c: 0.0 });
        region.push((-1.0, 1.0, 0.0));
    }
    // Constraints in (s, t, z): rows (p, q, r, rhs) meaning p*s + q*t + r*z <= rhs.
    let mut rows: Vec<[f64; 4]> = routes.iter().map(|p| [-p.a, -p.b, 1.0, p.c]).collect();
    rows.extend(region.iter().map(|&(a, b, c)| [-a, -b, 0.0, c]));
    let feasible = |x: &[f64; 3]| rows.iter().all(|r| r[0] * x[0] + r[1] * x[1] + r[2] * x[2] <= r[3] + 1e-9);
    let mut best = f64::NEG_INFINITY;
    let m = rows.len();
    for i in 0..m {
        for j in i + 1..m {
            for k in j + 1..m {
                if let Some(x) = solve3(&rows[i], &rows[j], &rows[k]) {
                    if feasible(&x) {
                        best = best.max(x[2]);
                    }
                }
            }
        }
    }
    best.max(0.0)
}

fn solve3(r0: &[f64; 4], r1: &[f64; 4], r2: &[f64; 4]) -> Option<[f64; 3]> {
    let m = nalgebra::Matrix3::new(r0[0], r0[1], r0[2], r1[0], r1[1], r1[2], r2[0], r2[1], r2[2]);
    let rhs = nalgebra::Vector3::new(r0[3], r1[3], r2[3]);
    if m.determinant().abs() < 1e-12 {
        return None;
    }
    m.lu().solve(&rhs).map(|x| [x[0], x[1], x[2]])
}
