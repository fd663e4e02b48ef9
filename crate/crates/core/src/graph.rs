//! Directed multigraphs, their arc graphs, divergence operators and reversal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type VertexId = usize;
pub type EdgeId = usize;
pub type ArcId = usize;

/// A finite, strongly connected directed multigraph with dense edge ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectedGraph {
    n_vertices: usize,
    tails: Vec<VertexId>,
    heads: Vec<VertexId>,
    out_edges: Vec<Vec<EdgeId>>,
    in_edges: Vec<Vec<EdgeId>>,
}

impl DirectedGraph {
    /// Builds a graph from `(tail, head)` pairs; edge `k` gets id `k`.
    ///
    /// Rejects graphs with a source or sink vertex and graphs that are not
    /// strongly connected.
    pub fn new(n_vertices: usize, edges: &[(VertexId, VertexId)]) -> Result<Self> {
        let g = Self::from_edges_unchecked(n_vertices, edges)?;
        g.validate()?;
        Ok(g)
    }

    fn from_edges_unchecked(n_vertices: usize, edges: &[(VertexId, VertexId)]) -> Result<Self> {
        if n_vertices == 0 {
            return Err(Error::Graph("graph has no vertices".into()));
        }
        let mut out_edges = vec![Vec::new(); n_vertices];
        let mut in_edges = vec![Vec::new(); n_vertices];
        let mut tails = Vec::with_capacity(edges.len());
        let mut heads = Vec::with_capacity(edges.len());
        for (id, &(t, h)) in edges.iter().enumerate() {
            if t >= n_vertices || h >= n_vertices {
                return Err(Error::Graph(format!(
                    "edge {id} = ({t}, {h}) references a vertex outside 0..{n_vertices}"
                )));
            }
            tails.push(t);
            heads.push(h);
            out_edges[t].push(id);
            in_edges[h].push(id);
        }
        Ok(Self { n_vertices, tails, heads, out_edges, in_edges })
    }

    fn validate(&self) -> Result<()> {
        for x in 0..self.n_vertices {
            if self.out_edges[x].is_empty() {
                return Err(Error::Graph(format!("vertex {x} is a sink (out-degree 0)")));
            }
            if self.in_edges[x].is_empty() {
                return Err(Error::Graph(format!("vertex {x} is a source (in-degree 0)")));
            }
        }
        if !self.is_strongly_connected() {
            return Err(Error::Graph("graph is not strongly connected".into()));
        }
        Ok(())
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn n_edges(&self) -> usize {
        self.tails.len()
    }

    pub fn tail(&self, e: EdgeId) -> VertexId {
        self.tails[e]
    }

    pub fn head(&self, e: EdgeId) -> VertexId {
        self.heads[e]
    }

    pub fn out_edges(&self, x: VertexId) -> &[EdgeId] {
        &self.out_edges[x]
    }

    pub fn in_edges(&self, x: VertexId) -> &[EdgeId] {
        &self.in_edges[x]
    }

    pub fn edges(&self) -> impl Iterator<Item = (VertexId, VertexId)> + '_ {
        self.tails.iter().copied().zip(self.heads.iter().copied())
    }

    /// The reversed graph; edge `k` of the result is the reversal of edge `k`.
    pub fn reversed(&self) -> Self {
        Self {
            n_vertices: self.n_vertices,
            tails: self.heads.clone(),
            heads: self.tails.clone(),
            out_edges: self.in_edges.clone(),
            in_edges: self.out_edges.clone(),
        }
    }

    pub fn is_strongly_connected(&self) -> bool {
        let reach = |adj: &dyn Fn(VertexId) -> Vec<VertexId>| {
            let mut seen = vec![false; self.n_vertices];
            let mut stack = vec![0];
            seen[0] = true;
            while let Some(x) = stack.pop() {
                for y in adj(x) {
                    if !seen[y] {
                        seen[y] = true;
                        stack.push(y);
                    }
                }
            }
            seen.into_iter().all(|s| s)
        };
        let forward = |x: VertexId| self.out_edges[x].iter().map(|&e| self.heads[e]).collect();
        let backward = |x: VertexId| self.in_edges[x].iter().map(|&e| self.tails[e]).collect();
        reach(&forward) && reach(&backward)
    }

    /// Vertex divergence: outgoing minus incoming mass at every vertex.
    pub fn div_vertex(&self, theta: &[f64]) -> Vec<f64> {
        assert_eq!(theta.len(), self.n_edges(), "theta must be defined on every edge");
        let mut div = vec![0.0; self.n_vertices];
        for (e, &t) in theta.iter().enumerate() {
            div[self.tails[e]] += t;
            div[self.heads[e]] -= t;
        }
        div
    }
}

/// The arc graph of a directed graph: nodes are edges, arcs are succeeding
/// edge pairs `(e, e')` with `head(e) = tail(e')`.
///
/// Arcs built by [`ArcGraph::build`] are numbered by source edge id and then by
/// target edge id. A reversed arc graph keeps arc ids: arc `a = (e, e')`
/// becomes `(e', e)` read as a pair of reversed edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArcGraph {
    src: Vec<EdgeId>,
    dst: Vec<EdgeId>,
    out_arcs: Vec<Vec<ArcId>>,
    in_arcs: Vec<Vec<ArcId>>,
}

impl ArcGraph {
    pub fn build(g: &DirectedGraph) -> Result<Self> {
        for x in 0..g.n_vertices() {
            if g.out_edges(x).is_empty() || g.in_edges(x).is_empty() {
                return Err(Error::Graph(format!("vertex {x} is a source or sink")));
            }
        }
        let n = g.n_edges();
        let mut src = Vec::new();
        let mut dst = Vec::new();
        let mut out_arcs = vec![Vec::new(); n];
        let mut in_arcs = vec![Vec::new(); n];
        for e in 0..n {
            for &f in g.out_edges(g.head(e)) {
                let a = src.len();
                src.push(e);
                dst.push(f);
                out_arcs[e].push(a);
                in_arcs[f].push(a);
            }
        }
        Ok(Self { src, dst, out_arcs, in_arcs })
    }

    pub fn n_nodes(&self) -> usize {
        self.out_arcs.len()
    }

    pub fn n_arcs(&self) -> usize {
        self.src.len()
    }

    pub fn src(&self, a: ArcId) -> EdgeId {
        self.src[a]
    }

    pub fn dst(&self, a: ArcId) -> EdgeId {
        self.dst[a]
    }

    pub fn out_arcs(&self, e: EdgeId) -> &[ArcId] {
        &self.out_arcs[e]
    }

    pub fn in_arcs(&self, e: EdgeId) -> &[ArcId] {
        &self.in_arcs[e]
    }

    pub fn find_arc(&self, e: EdgeId, f: EdgeId) -> Option<ArcId> {
        self.out_arcs.get(e)?.iter().copied().find(|&a| self.dst[a] == f)
    }

    /// Same arc ids, every arc `(e, e')` turned into `(e', e)`.
    pub fn reversed(&self) -> Self {
        Self {
            src: self.dst.clone(),
            dst: self.src.clone(),
            out_arcs: self.in_arcs.clone(),
            in_arcs: self.out_arcs.clone(),
        }
    }

    /// Arc divergence: outgoing minus incoming mass at every edge.
    pub fn div_arc(&self, theta: &[f64]) -> Vec<f64> {
        assert_eq!(theta.len(), self.n_arcs(), "Theta must be defined on every arc");
        let mut div = vec![0.0; self.n_nodes()];
        for (a, &t) in theta.iter().enumerate() {
            div[self.src[a]] += t;
            div[self.dst[a]] -= t;
        }
        div
    }

    /// Total mass leaving each edge, `sum over (e, e')` of `theta`.
    pub fn out_sums(&self, theta: &[f64]) -> Vec<f64> {
        let mut s = vec![0.0; self.n_nodes()];
        for (a, &t) in theta.iter().enumerate() {
            s[self.src[a]] += t;
        }
        s
    }

    /// Total mass entering each edge, `sum over (e', e)` of `theta`.
    pub fn in_sums(&self, theta: &[f64]) -> Vec<f64> {
        let mut s = vec![0.0; self.n_nodes()];
        for (a, &t) in theta.iter().enumerate() {
            s[self.dst[a]] += t;
        }
        s
    }
}

/// A base graph together with its arc graph and optional lattice metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub graph: DirectedGraph,
    pub arcs: ArcGraph,
    pub lattice: Option<crate::lattice::Lattice>,
}

impl Model {
    pub fn new(graph: DirectedGraph) -> Result<Self> {
        let arcs = ArcGraph::build(&graph)?;
        Ok(Self { graph, arcs, lattice: None })
    }

    pub fn from_edges(n_vertices: usize, edges: &[(VertexId, VertexId)]) -> Result<Self> {
        Self::new(DirectedGraph::new(n_vertices, edges)?)
    }

    pub fn n_vertices(&self) -> usize {
        self.graph.n_vertices()
    }

    pub fn n_edges(&self) -> usize {
        self.graph.n_edges()
    }

    pub fn n_arcs(&self) -> usize {
        self.arcs.n_arcs()
    }

    /// The reversed model. Edge and arc ids are preserved, so weight arrays of
    /// the original model are read directly as reversed weights.
    pub fn reversed(&self) -> Self {
        Self { graph: self.graph.reversed(), arcs: self.arcs.reversed(), lattice: None }
    }
}
