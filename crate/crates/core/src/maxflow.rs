//! Edmonds–Karp maximum flow with a minimum-cut certificate.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::graph::{DirectedGraph, EdgeId, VertexId};

/// Capacitated network; unlike [`DirectedGraph`] it may have sources and sinks.
#[derive(Debug, Clone)]
pub struct FlowNetwork {
    pub n_vertices: usize,
    pub edges: Vec<(VertexId, VertexId)>,
    pub capacity: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct MaxFlow {
    pub flow: Vec<f64>,
    pub value: f64,
    pub cut_value: f64,
    /// Vertices reachable from the source in the final residual network.
    pub source_side: Vec<bool>,
    pub cut_edges: Vec<EdgeId>,
}

impl FlowNetwork {
    pub fn from_graph(g: &DirectedGraph, capacity: &[f64]) -> Self {
        Self { n_vertices: g.n_vertices(), edges: g.edges().collect(), capacity: capacity.to_vec() }
    }
}

/// Maximum flow from `source` to `sink`. Augmenting paths are shortest paths
/// found by breadth-first search scanning residual arcs in edge-id order.
pub fn max_flow(net: &FlowNetwork, source: VertexId, sink: VertexId) -> Result<MaxFlow> {
    let n = net.n_vertices;
    if source == sink {
        return Err(Error::Params("source and sink coincide".into()));
    }
    if source >= n || sink >= n {
        return Err(Error::Params("source or sink out of range".into()));
    }
    if net.capacity.len() != net.edges.len() {
        return Err(Error::Params("one capacity per edge required".into()));
    }
    if let Some(c) = net.capacity.iter().find(|c| !(**c >= 0.0) || !c.is_finite()) {
        return Err(Error::Params(format!("capacities must be finite and nonnegative, got {c}")));
    }
    let cmax = net.capacity.iter().cloned().fold(0.0, f64::max);
    let eps = 1e-12 * cmax.max(1.0);

    // Residual arcs: (edge id, forward?) sorted by edge id per vertex.
    let mut adj: Vec<Vec<(EdgeId, bool)>> = vec![Vec::new(); n];
    for (e, &(t, h)) in net.edges.iter().enumerate() {
        adj[t].push((e, true));
        adj[h].push((e, false));
    }
    for a in adj.iter_mut() {
        a.sort_by_key(|&(e, fwd)| (e, !fwd));
    }

    let mut flow = vec![0.0; net.edges.len()];
    let residual = |flow: &[f64], e: EdgeId, fwd: bool| if fwd { net.capacity[e] - flow[e] } else { flow[e] };
    let mut value = 0.0;
    let mut pred: Vec<Option<(EdgeId, bool)>> = vec![None; n];
    loop {
        pred.iter_mut().for_each(|p| *p = None);
        let mut seen = vec![false; n];
        seen[source] = true;
        let mut queue = VecDeque::from([source]);
        'bfs: while let Some(x) = queue.pop_front() {
            for &(e, fwd) in &adj[x] {
                let y = if fwd { net.edges[e].1 } else { net.edges[e].0 };
                if !seen[y] && residual(&flow, e, fwd) > eps {
                    seen[y] = true;
                    pred[y] = Some((e, fwd));
                    if y == sink {
                        break 'bfs;
                    }
                    queue.push_back(y);
                }
            }
        }
        if !seen[sink] {
            break;
        }
        let mut bottleneck = f64::INFINITY;
        let mut y = sink;
        while let Some((e, fwd)) = pred[y] {
            bottleneck = bottleneck.min(residual(&flow, e, fwd));
            y = if fwd { net.edges[e].0 } else { net.edges[e].1 };
        }
        let mut y = sink;
        while let Some((e, fwd)) = pred[y] {
            if fwd {
                flow[e] = (flow[e] + bottleneck).min(net.capacity[e]);
                y = net.edges[e].0;
            } else {
                flow[e] = (flow[e] - bottleneck).max(0.0);
                y = net.edges[e].1;
            }
        }
        value += bottleneck;
    }

    let mut source_side = vec![false; n];
    source_side[source] = true;
    let mut queue = VecDeque::from([source]);
    while let Some(x) = queue.pop_front() {
        for &(e, fwd) in &adj[x] {
            let y = if fwd { net.edges[e].1 } else { net.edges[e].0 };
            if !source_side[y] && residual(&flow, e, fwd) > eps {
                source_side[y] = true;
                queue.push_back(y);
            }
        }
    }
    let cut_edges: Vec<EdgeId> = (0..net.edges.len())
        .filter(|&e| source_side[net.edges[e].0] && !source_side[net.edges[e].1])
        .collect();
    let cut_value = cut_edges.iter().map(|&e| net.capacity[e]).sum();
    let out: f64 = (0..net.edges.len()).filter(|&e| net.edges[e].0 == source).map(|e| flow[e]).sum();
    let inn: f64 = (0..net.edges.len()).filter(|&e| net.edges[e].1 == source).map(|e| flow[e]).sum();
    let net_value = out - inn;
    if (net_value - value).abs() > 1e-9 * value.max(1.0) {
        return Err(Error::Numerical(format!("flow bookkeeping drift: {net_value} vs {value}")));
    }
    Ok(MaxFlow { flow, value: net_value, cut_value, source_side, cut_edges })
}

/// Maximum flow on a [`DirectedGraph`] with strictly positive capacities.
pub fn max_flow_min_cut(g: &DirectedGraph, capacity: &[f64], source: VertexId, sink: VertexId) -> Result<MaxFlow> {
    if capacity.len() != g.n_edges() {
        return Err(Error::Params("one capacity per edge required".into()));
    }
    if capacity.iter().any(|&c| !(c > 0.0)) {
        return Err(Error::Params("capacities must be strictly positive".into()));
    }
    max_flow(&FlowNetwork::from_graph(g, capacity), source, sink)
}
