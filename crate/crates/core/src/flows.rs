//! Trap strength, min-cuts, and total flows on tori.

use serde::{Deserialize, Serialize};

use crate::chain::reverse_kernel;
use crate::environment::{LatticeWeights, WeightSystem};
use crate::error::{Error, Result};
use crate::graph::{ArcGraph, EdgeId, Model, VertexId};
use crate::lattice::{build_box_graph, opposite, step, BoxGraphSpec, LatticeKind};
use crate::maxflow::{max_flow, max_flow_min_cut, FlowNetwork};
use crate::special::neumaier_sum;

/// `alpha` of the edges leaving the two-point set `{0, e_i}`, `i < d`.
pub fn kappa_direction(lw: &LatticeWeights, i: usize) -> f64 {
    let d = lw.d();
    let set = [vec![0i64; d], step(d, i)];
    set.iter()
        .flat_map(|x| (0..2 * d).map(move |k| (x, k)))
        .filter(|(x, k)| {
            let y: Vec<i64> = x.iter().zip(step(d, *k)).map(|(a, b)| a + b).collect();
            !set.contains(&y)
        })
        .map(|(_, k)| lw.alpha[k])
        .sum()
}

/// `max_i alpha(boundary of {0, e_i})` over the positive directions, by
/// enumerating the edges that leave the two-point set.
pub fn kappa(lw: &LatticeWeights) -> f64 {
    (0..lw.d()).map(|i| kappa_direction(lw, i)).fold(f64::NEG_INFINITY, f64::max)
}

/// The closed-form expression `max_i {2 sum_j alpha_{e_j} - (alpha_{e_i} - alpha_{-e_i})}`,
/// reported next to [`kappa`]; the two differ on symmetric weights.
pub fn kappa_closed_form(lw: &LatticeWeights) -> f64 {
    let d = lw.d();
    let s: f64 = lw.alpha[..d].iter().sum();
    (0..d).map(|i| 2.0 * s - (lw.alpha[i] - lw.alpha[i + d])).fold(f64::NEG_INFINITY, f64::max)
}

/// Smallest single-edge weight.
pub fn kappa_tilde(lw: &LatticeWeights) -> f64 {
    lw.alpha.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Per-edge weights with `kappa` added to the edge leaving the origin in
/// direction `dir`.
pub fn boosted_edge_alpha(model: &Model, lw: &LatticeWeights, dir: usize) -> Result<Vec<f64>> {
    let lat = model.lattice.as_ref().ok_or_else(|| Error::Params("model is not a lattice".into()))?;
    if dir >= 2 * lat.d {
        return Err(Error::Params(format!("direction {dir} out of range")));
    }
    let mut alpha = lw.edge_alpha(model)?;
    alpha[lat.origin_edge(dir)] += kappa(lw);
    Ok(alpha)
}

pub fn alpha_boosted(model: &Model, lw: &LatticeWeights, dir: usize) -> Result<WeightSystem> {
    WeightSystem::new(model, boosted_edge_alpha(model, lw, dir)?, lw.arc_z(model)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinCutReport {
    pub value: f64,
    /// Total capacity leaving the origin.
    pub single_vertex: f64,
    pub cut_edges: Vec<EdgeId>,
}

/// Min-cut separating the origin from the boundary of the box of side `n`,
/// with capacities given by the lattice weights (optionally boosted).
pub fn min_cut_lattice(lw: &LatticeWeights, n: usize, boost: Option<usize>) -> Result<MinCutReport> {
    let model = build_box_graph(BoxGraphSpec { d: lw.d(), n, root_direction: 0, special_alpha: 1.0 })?;
    let cap = match boost {
        Some(dir) => boosted_edge_alpha(&model, lw, dir)?,
        None => lw.edge_alpha(&model)?,
    };
    let lat = model.lattice.as_ref().unwrap();
    let r = max_flow_min_cut(&model.graph, &cap, lat.origin, lat.boundary.unwrap())?;
    if (r.value - r.cut_value).abs() > 1e-9 * r.value.max(1.0) {
        return Err(Error::Numerical("max-flow and cut values disagree".into()));
    }
    let single_vertex = model.graph.out_edges(lat.origin).iter().map(|&e| cap[e]).sum();
    Ok(MinCutReport { value: r.cut_value, single_vertex, cut_edges: r.cut_edges })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexFlow {
    pub theta: Vec<f64>,
    /// Mass `m` injected at the source and spread uniformly over all vertices.
    pub strength: f64,
    pub source: VertexId,
    pub energy: f64,
    pub sweeps: usize,
}

fn torus_cycles(model: &Model) -> Result<Vec<Vec<EdgeId>>> {
    let lat = model.lattice.as_ref().ok_or_else(|| Error::Params("model is not a lattice".into()))?;
    if lat.kind != LatticeKind::Torus {
        return Err(Error::Params("flow construction needs a torus".into()));
    }
    let d = lat.d;
    let shift = |x: &[i64], k: usize| -> Vec<i64> { x.iter().zip(step(d, k)).map(|(a, b)| a + b).collect() };
    let mut cycles = Vec::new();
    for (v, x) in lat.coords.iter().enumerate() {
        for k in 0..d {
            let y = lat.vertex_at(&shift(x, k)).unwrap();
            cycles.push(vec![lat.edge_from(v, k), lat.edge_from(y, opposite(d, k))]);
        }
        for i in 0..d {
            for j in i + 1..d {
                let xi = shift(x, i);
                let xij = shift(&xi, j);
                let xj = shift(x, j);
                cycles.push(vec![
                    lat.edge_from(v, i),
                    lat.edge_from(lat.vertex_at(&xi).unwrap(), j),
                    lat.edge_from(lat.vertex_at(&xij).unwrap(), opposite(d, i)),
                    lat.edge_from(lat.vertex_at(&xj).unwrap(), opposite(d, j)),
                ]);
            }
        }
        for i in 0..d {
            if x[i] == 0 {
                let mut c = Vec::with_capacity(lat.n);
                let mut y = x.clone();
                for _ in 0..lat.n {
                    let w = lat.vertex_at(&y).unwrap();
                    c.push(lat.edge_from(w, i));
                    y = shift(&y, i);
                }
                cycles.push(c);
            }
        }
    }
    Ok(cycles)
}

/// Flow on a torus below the capacities `c` with divergence
/// `(m / N^d) sum_x (delta_0 - delta_x)`, found as a feasible transshipment
/// and then reduced in energy `sum theta^2` by exact line minimization
/// along the cycles of the torus.
pub fn build_vertex_flow(model: &Model, capacities: &[f64], m: f64) -> Result<VertexFlow> {
    let lat = model.lattice.as_ref().ok_or_else(|| Error::Params("model is not a lattice".into()))?;
    if lat.kind != LatticeKind::Torus {
        return Err(Error::Params("flow construction needs a torus".into()));
    }
    if capacities.len() != model.n_edges() || capacities.iter().any(|c| !(*c > 0.0)) {
        return Err(Error::Params("capacities must be positive on every edge".into()));
    }
    if !(m >= 0.0) {
        return Err(Error::Params("strength must be nonnegative".into()));
    }
    let source = lat.origin;
    if m == 0.0 {
        return Ok(VertexFlow { theta: vec![0.0; model.n_edges()], strength: 0.0, source, energy: 0.0, sweeps: 0 });
    }
    let nv = model.n_vertices();
    let demand = m / nv as f64;
    let sink = nv;
    let mut edges: Vec<(usize, usize)> = model.graph.edges().collect();
    let mut capacity = capacities.to_vec();
    for x in (0..nv).filter(|&x| x != source) {
        edges.push((x, sink));
        capacity.push(demand);
    }
    let net = FlowNetwork { n_vertices: nv + 1, edges, capacity };
    let r = max_flow(&net, source, sink)?;
    let required = m - demand;
    if r.value < required * (1.0 - 1e-10) {
        return Err(Error::Numerical(format!(
            "transshipment infeasible: routed {} of {required}",
            r.value
        )));
    }
    let mut theta = r.flow[..model.n_edges()].to_vec();

    let cycles = torus_cycles(model)?;
    let tol = 1e-15 * m.max(1.0);
    let mut sweeps = 0;
    while sweeps < 200_000 {
        sweeps += 1;
        let mut moved: f64 = 0.0;
        for c in &cycles {
            let mean = c.iter().map(|&e| theta[e]).sum::<f64>() / c.len() as f64;
            let lo = c.iter().map(|&e| -theta[e]).fold(f64::NEG_INFINITY, f64::max);
            let hi = c.iter().map(|&e| capacities[e] - theta[e]).fold(f64::INFINITY, f64::min);
            let t = (-mean).clamp(lo, hi);
            if t != 0.0 {
                for &e in c {
                    theta[e] = (theta[e] + t).clamp(0.0, capacities[e]);
                }
                moved = moved.max(t.abs());
            }
        }
        if moved <= tol {
            break;
        }
    }
    let energy = theta.iter().map(|t| t * t).sum();
    Ok(VertexFlow { theta, strength: m, source, energy, sweeps })
}

/// Residual of `div theta = (m / N^d) sum_x (delta_0 - delta_x)`.
pub fn vertex_flow_residual(model: &Model, flow: &VertexFlow) -> f64 {
    let nv = model.n_vertices() as f64;
    let div = model.graph.div_vertex(&flow.theta);
    div.iter()
        .enumerate()
        .map(|(x, d)| {
            let target = if x == flow.source { flow.strength } else { 0.0 } - flow.strength / nv;
            (d - target).abs()
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArcFlow {
    pub theta: Vec<f64>,
    /// `gamma` in `div Theta = gamma sum_e (delta_{e0} - delta_e)`.
    pub strength: f64,
    pub source_edge: EdgeId,
}

impl ArcFlow {
    pub fn scaled(&self, c: f64) -> Self {
        Self { theta: self.theta.iter().map(|t| t * c).collect(), strength: self.strength * c, source_edge: self.source_edge }
    }

    pub fn energy(&self) -> f64 {
        self.theta.iter().map(|t| t * t).sum()
    }

    /// Largest deviation of `div Theta` from the total-flow divergence.
    pub fn total_flow_residual(&self, arcs: &ArcGraph) -> f64 {
        let div = arcs.div_arc(&self.theta);
        let n = div.len() as f64;
        div.iter()
            .enumerate()
            .map(|(e, d)| {
                let target = self.strength * (if e == self.source_edge { n } else { 0.0 } - 1.0);
                (d - target).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Lifts a vertex flow of strength `m` on the torus to an arc flow:
/// `Theta(e, e') = (theta(e) + m 1{e = e0}) (theta(e') + gamma) / (out_theta(head e) + m / N^d)`
/// with `gamma = m / |E|`. The mass leaving `e` is `theta(e) + m 1{e = e0}`
/// and the mass entering `e'` is `theta(e') + gamma`, so `Theta` is a total
/// flow from `e0` of strength `gamma`.
pub fn lift_to_arc_flow(model: &Model, flow: &VertexFlow, e0: EdgeId) -> Result<ArcFlow> {
    let m = flow.strength;
    let n_arcs = model.n_arcs();
    if m == 0.0 {
        return Err(Error::Params("zero-strength flow has degenerate lift denominators".into()));
    }
    if model.graph.head(e0) != flow.source {
        return Err(Error::Params("the root edge must end at the flow source".into()));
    }
    let nv = model.n_vertices() as f64;
    let gamma = m / model.n_edges() as f64;
    let mut out_flow = vec![0.0; model.n_vertices()];
    for (e, &t) in flow.theta.iter().enumerate() {
        out_flow[model.graph.tail(e)] += t;
    }
    let mut theta = vec![0.0; n_arcs];
    for a in 0..n_arcs {
        let (e, f) = (model.arcs.src(a), model.arcs.dst(a));
        let den = out_flow[model.graph.head(e)] + m / nv;
        if !(den > 0.0) {
            return Err(Error::Numerical("zero denominator in the lift".into()));
        }
        let lead = flow.theta[e] + if e == e0 { m } else { 0.0 };
        theta[a] = lead * (flow.theta[f] + gamma) / den;
    }
    Ok(ArcFlow { theta, strength: gamma, source_edge: e0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowIdentity {
    /// `ln (reversed omega^Theta / omega^Theta)`.
    pub ln_ratio: f64,
    /// `sum_e div Theta(e) ln pi(e)`.
    pub ln_pi_div: f64,
    /// `gamma sum_e (ln pi(e0) - ln pi(e))`.
    pub ln_total: f64,
    /// Largest pairwise difference relative to `max(1, |ln_ratio|)`.
    pub rel_error: f64,
}

/// Evaluates both sides of the ratio identity, and the total-flow product,
/// entirely in the log domain.
pub fn flow_identity_check(arcs: &ArcGraph, omega: &[f64], pi: &[f64], flow: &ArcFlow, total: bool) -> FlowIdentity {
    let rev = reverse_kernel(arcs, omega, pi);
    let ln_ratio = neumaier_sum(
        flow.theta.iter().enumerate().filter(|(_, t)| **t != 0.0).map(|(a, t)| t * (rev[a].ln() - omega[a].ln())),
    );
    let div = arcs.div_arc(&flow.theta);
    let ln_pi_div = neumaier_sum(div.iter().zip(pi).map(|(d, p)| d * p.ln()));
    let ln_total = if total {
        let l0 = pi[flow.source_edge].ln();
        flow.strength * neumaier_sum(pi.iter().map(|p| l0 - p.ln()))
    } else {
        f64::NAN
    };
    let scale = ln_ratio.abs().max(1.0);
    let mut rel_error = (ln_ratio - ln_pi_div).abs() / scale;
    if total {
        rel_error = rel_error.max((ln_ratio - ln_total).abs() / scale).max((ln_pi_div - ln_total).abs() / scale);
    }
    FlowIdentity { ln_ratio, ln_pi_div, ln_total, rel_error }
}
