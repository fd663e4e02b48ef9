//! Torus and box graphs on the integer lattice.
//!
//! Directions are numbered `0..2d`: direction `k < d` is `+e_k`, direction
//! `k >= d` is `-e_{k-d}`. Vertices are ordered lexicographically by
//! coordinates and the edge leaving vertex `v` in direction `k` has id
//! `v * 2d + k`. Torus coordinates live in `0..N`; box coordinates in
//! `-h..=h` with `h = N / 2`, followed by the boundary vertex and the special
//! edge, which always come last.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DirectedGraph, EdgeId, Model, VertexId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatticeKind {
    Torus,
    Box,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TorusSpec {
    pub d: usize,
    pub n: usize,
    /// Direction of the root edge, which ends at the origin.
    pub root_direction: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxGraphSpec {
    pub d: usize,
    /// Side length; the box is `{|x|_inf <= n / 2}`.
    pub n: usize,
    /// Direction of the root edge `(x0, 0)`, so `x0 = -e_{root_direction}`.
    pub root_direction: usize,
    /// Weight of the special edge leaving the boundary vertex.
    pub special_alpha: f64,
}

/// Coordinates and directions attached to a lattice model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub kind: LatticeKind,
    pub d: usize,
    pub n: usize,
    pub coords: Vec<Vec<i64>>,
    /// Lattice direction of each edge; `None` for the special edge.
    pub edge_dir: Vec<Option<usize>>,
    pub origin: VertexId,
    pub root_edge: EdgeId,
    pub boundary: Option<VertexId>,
    pub special_edge: Option<EdgeId>,
    pub special_alpha: Option<f64>,
}

pub fn opposite(d: usize, k: usize) -> usize {
    if k < d {
        k + d
    } else {
        k - d
    }
}

pub fn step(d: usize, k: usize) -> Vec<i64> {
    let mut v = vec![0; d];
    if k < d {
        v[k] = 1;
    } else {
        v[k - d] = -1;
    }
    v
}

impl Lattice {
    pub fn n_dirs(&self) -> usize {
        2 * self.d
    }

    pub fn vertex_at(&self, x: &[i64]) -> Option<VertexId> {
        match self.kind {
            LatticeKind::Torus => {
                let n = self.n as i64;
                let mut v = 0usize;
                for &c in x {
                    v = v * self.n + c.rem_euclid(n) as usize;
                }
                Some(v)
            }
            LatticeKind::Box => {
                let h = (self.n / 2) as i64;
                let side = (2 * h + 1) as usize;
                let mut v = 0usize;
                for &c in x {
                    if c.abs() > h {
                        return None;
                    }
                    v = v * side + (c + h) as usize;
                }
                Some(v)
            }
        }
    }

    /// Edge leaving vertex `v` in direction `k`.
    pub fn edge_from(&self, v: VertexId, k: usize) -> EdgeId {
        v * self.n_dirs() + k
    }

    /// The edge `(0, e_k)` leaving the origin in direction `k`.
    pub fn origin_edge(&self, k: usize) -> EdgeId {
        self.edge_from(self.origin, k)
    }

    /// The edge `(e_k, 0)`, reverse partner of [`Lattice::origin_edge`].
    pub fn origin_edge_reverse(&self, k: usize) -> Result<EdgeId> {
        let x = step(self.d, k);
        let v = self
            .vertex_at(&x)
            .ok_or_else(|| Error::Graph("neighbor of the origin lies outside the lattice".into()))?;
        Ok(self.edge_from(v, opposite(self.d, k)))
    }
}

fn check_dims(d: usize, n: usize, root_direction: usize) -> Result<()> {
    if d == 0 {
        return Err(Error::Graph("dimension must be at least 1".into()));
    }
    if n < 2 {
        return Err(Error::Graph(format!("side length must be at least 2, got {n}")));
    }
    if root_direction >= 2 * d {
        return Err(Error::Graph(format!("root direction {root_direction} out of range 0..{}", 2 * d)));
    }
    Ok(())
}

fn lex_coords(d: usize, side: usize, offset: i64) -> Vec<Vec<i64>> {
    let total = side.pow(d as u32);
    (0..total)
        .map(|mut v| {
            let mut c = vec![0i64; d];
            for i in (0..d).rev() {
                c[i] = (v % side) as i64 - offset;
                v /= side;
            }
            c
        })
        .collect()
}

pub fn build_torus(spec: TorusSpec) -> Result<Model> {
    let TorusSpec { d, n, root_direction } = spec;
    check_dims(d, n, root_direction)?;
    let coords = lex_coords(d, n, 0);
    let mut lat = Lattice {
        kind: LatticeKind::Torus,
        d,
        n,
        coords,
        edge_dir: Vec::new(),
        origin: 0,
        root_edge: 0,
        boundary: None,
        special_edge: None,
        special_alpha: None,
    };
    let mut edges = Vec::with_capacity(lat.coords.len() * 2 * d);
    for (v, x) in lat.coords.iter().enumerate() {
        for k in 0..2 * d {
            let y: Vec<i64> = x.iter().zip(step(d, k)).map(|(a, b)| a + b).collect();
            edges.push((v, lat.vertex_at(&y).unwrap()));
            lat.edge_dir.push(Some(k));
        }
    }
    let x0 = step(d, opposite(d, root_direction));
    lat.root_edge = lat.edge_from(lat.vertex_at(&x0).unwrap(), root_direction);
    let graph = DirectedGraph::new(lat.coords.len(), &edges)?;
    let mut model = Model::new(graph)?;
    model.lattice = Some(lat);
    Ok(model)
}

pub fn build_box_graph(spec: BoxGraphSpec) -> Result<Model> {
    let BoxGraphSpec { d, n, root_direction, special_alpha } = spec;
    check_dims(d, n, root_direction)?;
    if !(special_alpha > 0.0) {
        return Err(Error::Params("special edge weight must be positive".into()));
    }
    let h = (n / 2) as i64;
    let coords = lex_coords(d, (2 * h + 1) as usize, h);
    let boundary = coords.len();
    let mut lat = Lattice {
        kind: LatticeKind::Box,
        d,
        n,
        coords,
        edge_dir: Vec::new(),
        origin: 0,
        root_edge: 0,
        boundary: Some(boundary),
        special_edge: None,
        special_alpha: Some(special_alpha),
    };
    lat.origin = lat.vertex_at(&vec![0; d]).unwrap();
    let mut edges = Vec::with_capacity(boundary * 2 * d + 1);
    for (v, x) in lat.coords.iter().enumerate() {
        for k in 0..2 * d {
            let y: Vec<i64> = x.iter().zip(step(d, k)).map(|(a, b)| a + b).collect();
            edges.push((v, lat.vertex_at(&y).unwrap_or(boundary)));
            lat.edge_dir.push(Some(k));
        }
    }
    let x0 = lat.vertex_at(&step(d, opposite(d, root_direction))).unwrap();
    lat.root_edge = lat.edge_from(x0, root_direction);
    lat.special_edge = Some(edges.len());
    edges.push((boundary, x0));
    lat.edge_dir.push(None);
    lat.coords.push(Vec::new());
    let graph = DirectedGraph::new(boundary + 1, &edges)?;
    let mut model = Model::new(graph)?;
    model.lattice = Some(lat);
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn torus_counts() {
        let m = build_torus(TorusSpec { d: 1, n: 3, root_direction: 0 }).unwrap();
        assert_eq!((m.n_vertices(), m.n_edges()), (3, 6));
        let m = build_torus(TorusSpec { d: 3, n: 4, root_direction: 0 }).unwrap();
        assert_eq!((m.n_vertices(), m.n_edges()), (64, 384));
        let m = build_torus(TorusSpec { d: 3, n: 2, root_direction: 0 }).unwrap();
        assert_eq!(m.n_arcs(), 288);
        assert!((0..m.n_edges()).all(|e| m.arcs.out_arcs(e).len() == 6));
    }

    #[test]
    fn torus_two_has_parallel_edges() {
        let m = build_torus(TorusSpec { d: 2, n: 2, root_direction: 0 }).unwrap();
        let g = &m.graph;
        assert_eq!(g.n_edges(), 16);
        // +e_1 and -e_1 from the origin reach the same vertex through distinct edges.
        assert_eq!(g.head(0), g.head(2));
        assert_ne!(0, 2);
    }

    #[test]
    fn torus_root_edge_ends_at_origin() {
        let m = build_torus(TorusSpec { d: 3, n: 4, root_direction: 1 }).unwrap();
        let lat = m.lattice.as_ref().unwrap();
        assert_eq!(m.graph.head(lat.root_edge), lat.origin);
        assert_eq!(lat.edge_dir[lat.root_edge], Some(1));
    }

    #[test]
    fn box_structure() {
        let m = build_box_graph(BoxGraphSpec { d: 3, n: 2, root_direction: 0, special_alpha: 1.0 }).unwrap();
        let lat = m.lattice.as_ref().unwrap();
        let b = lat.boundary.unwrap();
        assert_eq!(m.n_vertices(), 27 + 1);
        assert_eq!(m.graph.out_edges(b).len(), 1);
        let s = lat.special_edge.unwrap();
        assert_eq!(m.graph.tail(s), b);
        assert_eq!(m.graph.head(lat.root_edge), lat.origin);
        assert_eq!(m.graph.head(s), m.graph.tail(lat.root_edge));
        assert!(m.graph.is_strongly_connected());
    }
}
