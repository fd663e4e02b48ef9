//! Quenched Markov chains on the arc graph.
//!
//! A kernel is a slice `omega` indexed by arc id; the chain moves from edge
//! `e` to edge `e'` with probability `omega[a]` for `a = (e, e')`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::environment::{moment_exact, EnvironmentSampler, WeightSystem};
use crate::error::{Error, Result};
use crate::graph::{ArcGraph, ArcId, EdgeId, Model};
use crate::hypergeom::Estimate;
use crate::rng::{self, StreamRng};
use crate::solve::{stationary_gth, stationary_power, Eliminator};

/// Arc count above which the stationary law falls back to power iteration.
pub const DIRECT_SOLVE_LIMIT: usize = 200_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryLaw {
    pub pi: Vec<f64>,
    /// `max_e |(pi^T omega)_e - pi_e|`.
    pub residual: f64,
}

fn transitions<'a>(arcs: &'a ArcGraph, omega: &'a [f64]) -> impl Iterator<Item = (usize, usize, f64)> + 'a {
    (0..arcs.n_arcs()).map(move |a| (arcs.src(a), arcs.dst(a), omega[a]))
}

pub fn stationary_residual(arcs: &ArcGraph, omega: &[f64], pi: &[f64]) -> f64 {
    let mut flow = vec![0.0; arcs.n_nodes()];
    for a in 0..arcs.n_arcs() {
        flow[arcs.dst(a)] += pi[arcs.src(a)] * omega[a];
    }
    flow.iter().zip(pi).map(|(f, p)| (f - p).abs()).fold(0.0, f64::max)
}

/// Unique stationary law of the kernel.
pub fn stationary(arcs: &ArcGraph, omega: &[f64]) -> Result<StationaryLaw> {
    if omega.len() != arcs.n_arcs() {
        return Err(Error::Params("omega needs one entry per arc".into()));
    }
    let n = arcs.n_nodes();
    let pi = if arcs.n_arcs() > DIRECT_SOLVE_LIMIT {
        stationary_power(n, transitions(arcs, omega), 1e-15, 10_000_000)?
    } else {
        stationary_gth(n, transitions(arcs, omega))?
    };
    if let Some(e) = pi.iter().position(|&p| !(p > 0.0)) {
        return Err(Error::Numerical(format!("stationary mass of edge {e} is not positive")));
    }
    let residual = stationary_residual(arcs, omega, &pi);
    Ok(StationaryLaw { pi, residual })
}

/// Time-reversed kernel on `arcs.reversed()`, stored under the same arc ids:
/// `omega_rev[a] = pi(e) omega(e, e') / pi(e')` for `a = (e, e')`.
pub fn reverse_kernel(arcs: &ArcGraph, omega: &[f64], pi: &[f64]) -> Vec<f64> {
    (0..arcs.n_arcs()).map(|a| pi[arcs.src(a)] * omega[a] / pi[arcs.dst(a)]).collect()
}

/// A closed walk `e_0, e_1, ..., e_n = e_0` on the arc graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleOnArcs {
    edges: Vec<EdgeId>,
    arcs: Vec<ArcId>,
}

impl CycleOnArcs {
    /// `edges` lists `e_0, ..., e_{n-1}`; the closing step back to `e_0` is implied.
    pub fn new(k: &ArcGraph, edges: Vec<EdgeId>) -> Result<Self> {
        if edges.is_empty() {
            return Err(Error::Params("a cycle needs at least one edge".into()));
        }
        let n = edges.len();
        let mut arcs = Vec::with_capacity(n);
        for i in 0..n {
            let (e, f) = (edges[i], edges[(i + 1) % n]);
            let a = k
                .find_arc(e, f)
                .ok_or_else(|| Error::Params(format!("edges {e} and {f} do not succeed each other")))?;
            arcs.push(a);
        }
        Ok(Self { edges, arcs })
    }

    pub fn edges(&self) -> &[EdgeId] {
        &self.edges
    }

    pub fn arcs(&self) -> &[ArcId] {
        &self.arcs
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// The reversed cycle as a walk on the reversed arc graph (same arc ids).
    pub fn reversed(&self) -> Self {
        let mut edges = self.edges.clone();
        edges.reverse();
        edges.rotate_right(1);
        let mut arcs = self.arcs.clone();
        arcs.reverse();
        Self { edges, arcs }
    }
}

/// Arc multiplicities of a multiset of cycles.
pub fn arc_counts(n_arcs: usize, cycles: &[CycleOnArcs]) -> Vec<f64> {
    let mut xi = vec![0.0; n_arcs];
    for c in cycles {
        for &a in c.arcs() {
            xi[a] += 1.0;
        }
    }
    xi
}

/// Visit counts `N_e` of a multiset of cycles.
pub fn visit_counts(n_edges: usize, cycles: &[CycleOnArcs]) -> Vec<f64> {
    let mut n = vec![0.0; n_edges];
    for c in cycles {
        for &e in c.edges() {
            n[e] += 1.0;
        }
    }
    n
}

pub fn ln_cycle_weight(omega: &[f64], c: &CycleOnArcs) -> f64 {
    c.arcs().iter().map(|&a| omega[a].ln()).sum()
}

/// `omega_C = prod of omega over the arcs of C`.
pub fn cycle_weight(omega: &[f64], c: &CycleOnArcs) -> f64 {
    c.arcs().iter().map(|&a| omega[a]).product()
}

/// `Z_C F(alpha + N) / F(alpha)` for a multiset of cycles.
pub fn cycle_moment_exact(model: &Model, ws: &WeightSystem, cycles: &[CycleOnArcs], tol: f64) -> Result<f64> {
    if cycles.is_empty() {
        return Ok(1.0);
    }
    moment_exact(model, ws, &arc_counts(model.n_arcs(), cycles), tol)
}

/// Two-sided comparison for one cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleComparison {
    pub edges: Vec<EdgeId>,
    /// `E^{(alpha, Z)}[reversed omega over the reversed cycle]`.
    pub forward: Estimate,
    /// `E^{(reversed alpha, reversed Z)}[omega over the reversed cycle]`.
    pub reversed: Estimate,
    pub z_score: f64,
    pub exact_forward: Option<f64>,
    pub exact_reversed: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakReversalReport {
    pub comparisons: Vec<CycleComparison>,
    pub max_abs_z: f64,
    pub max_stationary_residual: f64,
}

/// Checks that the reversed environment under `(alpha, Z)` and the
/// environment under the reversed parameters give the same cycle moments.
///
/// Requires `div(alpha) = 0`. Exact values are added when `exact_tol` is set.
pub fn check_weak_reversal(
    model: &Model,
    ws: &WeightSystem,
    cycles: &[CycleOnArcs],
    n_samples: usize,
    seed: u64,
    exact_tol: Option<f64>,
) -> Result<WeakReversalReport> {
    let div = ws.div_alpha(model);
    let scale = ws.alpha.iter().cloned().fold(1.0, f64::max);
    if div.iter().any(|d| d.abs() > 1e-10 * scale) {
        return Err(Error::Params("div(alpha) must vanish for time reversal".into()));
    }
    if n_samples < 2 {
        return Err(Error::Params("need at least two samples".into()));
    }
    let rev = model.reversed();
    let ws_rev = WeightSystem::new(&rev, ws.alpha.clone(), ws.z.clone())?;
    let fwd_sampler = EnvironmentSampler::new(model, ws)?;
    let rev_sampler = EnvironmentSampler::new(&rev, &ws_rev)?;
    let rev_cycles: Vec<CycleOnArcs> = cycles.iter().map(|c| c.reversed()).collect();

    let mut fwd = vec![Vec::with_capacity(n_samples); cycles.len()];
    let mut bwd = vec![Vec::with_capacity(n_samples); cycles.len()];
    let mut max_res: f64 = 0.0;
    for r in 0..n_samples as u64 {
        let env = fwd_sampler.sample(model, ws, rng::stream_id(seed, &[rng::tags::ENVIRONMENT, r]))?;
        let law = stationary(&model.arcs, &env.omega)?;
        max_res = max_res.max(law.residual);
        let omega_rev = reverse_kernel(&model.arcs, &env.omega, &law.pi);
        let env_b = rev_sampler.sample(&rev, &ws_rev, rng::stream_id(seed, &[rng::tags::REVERSED, r]))?;
        for (i, c) in rev_cycles.iter().enumerate() {
            fwd[i].push(cycle_weight(&omega_rev, c));
            bwd[i].push(cycle_weight(&env_b.omega, c));
        }
    }
    let mut comparisons = Vec::with_capacity(cycles.len());
    let mut max_abs_z: f64 = 0.0;
    for (i, c) in cycles.iter().enumerate() {
        let forward = Estimate::from_samples(&fwd[i]);
        let reversed = Estimate::from_samples(&bwd[i]);
        let z = forward.z_diff(&reversed);
        max_abs_z = max_abs_z.max(z.abs());
        let (exact_forward, exact_reversed) = match exact_tol {
            Some(tol) => (
                Some(cycle_moment_exact(model, ws, std::slice::from_ref(c), tol)?),
                Some(cycle_moment_exact(&rev, &ws_rev, std::slice::from_ref(&rev_cycles[i]), tol)?),
            ),
            None => (None, None),
        };
        comparisons.push(CycleComparison {
            edges: c.edges().to_vec(),
            forward,
            reversed,
            z_score: z,
            exact_forward,
            exact_reversed,
        });
    }
    Ok(WeakReversalReport { comparisons, max_abs_z, max_stationary_residual: max_res })
}

/// Per-environment hitting identity at a root edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HittingCheck {
    pub root: EdgeId,
    /// Predecessor edges `e` with `(e, root)` an arc.
    pub predecessors: Vec<EdgeId>,
    /// `P_root[X_{H+ - 1} = e]` by state elimination.
    pub lhs: Vec<f64>,
    /// Reversed kernel from the reversed root to the reversed `e`.
    pub rhs: Vec<f64>,
    pub max_abs_diff: f64,
}

/// Compares the law of the edge visited just before returning to `root`
/// with one step of the reversed chain.
pub fn hitting_prob_check(arcs: &ArcGraph, omega: &[f64], root: EdgeId) -> Result<HittingCheck> {
    let n = arcs.n_nodes();
    if root >= n {
        return Err(Error::Params("root edge out of range".into()));
    }
    let law = stationary(arcs, omega)?;
    let omega_rev = reverse_kernel(arcs, omega, &law.pi);
    let preds: Vec<ArcId> = arcs.in_arcs(root).to_vec();

    // Every arc into the root is redirected to its own absorbing state; state
    // elimination then gives the law of the arc used to return, without
    // cancellation even when transition probabilities are tiny.
    let sink_of = |pa: ArcId| n + preds.iter().position(|&p| p == pa).expect("predecessor arc");
    let t = (0..arcs.n_arcs()).map(|a| {
        let to = if arcs.dst(a) == root { sink_of(a) } else { arcs.dst(a) };
        (arcs.src(a), to, omega[a])
    });
    let mut el = Eliminator::new(n + preds.len(), t);
    let mut keep = vec![false; n + preds.len()];
    keep[root] = true;
    keep[n..].iter_mut().for_each(|k| *k = true);
    el.eliminate_all_except(&keep)?;
    let weights: Vec<f64> = (0..preds.len()).map(|k| el.weight(root, n + k)).collect();
    let total = crate::special::neumaier_sum(weights.iter().copied());
    if !(total > 0.0) {
        return Err(Error::Numerical("the root is not recurrent".into()));
    }
    let mut lhs = Vec::with_capacity(preds.len());
    let mut rhs = Vec::with_capacity(preds.len());
    let mut predecessors = Vec::with_capacity(preds.len());
    for (k, &pa) in preds.iter().enumerate() {
        predecessors.push(arcs.src(pa));
        lhs.push(weights[k] / total);
        rhs.push(omega_rev[pa]);
    }
    let max_abs_diff = lhs.iter().zip(&rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(HittingCheck { root, predecessors, lhs, rhs, max_abs_diff })
}

/// Reduces the chain to `{root, sink}` after redirecting every transition
/// into a marked edge to a single absorbing sink; returns
/// `(return weight, absorption weight)` from `root`.
fn reduce_to_root(arcs: &ArcGraph, omega: &[f64], root: EdgeId, absorbing: &[bool]) -> Result<(f64, f64)> {
    let n = arcs.n_nodes();
    let sink = n;
    let t = (0..arcs.n_arcs()).filter(|&a| !absorbing[arcs.src(a)] || arcs.src(a) == root).map(|a| {
        let f = arcs.dst(a);
        let to = if absorbing[f] && f != root { sink } else { f };
        (arcs.src(a), to, omega[a])
    });
    let mut el = Eliminator::new(n + 1, t);
    let mut keep = vec![false; n + 1];
    keep[root] = true;
    keep[sink] = true;
    for (e, &ab) in absorbing.iter().enumerate() {
        if ab {
            keep[e] = true;
        }
    }
    el.eliminate_all_except(&keep)?;
    Ok((el.weight(root, root), el.weight(root, sink)))
}

/// Expected number of visits to `root`, counting time 0, before the walk
/// enters an edge marked in `killed`.
pub fn green_function_killed(arcs: &ArcGraph, omega: &[f64], root: EdgeId, killed: &[bool]) -> Result<f64> {
    if killed[root] {
        return Err(Error::Params("the root edge cannot be killed".into()));
    }
    let (ret, esc) = reduce_to_root(arcs, omega, root, killed)?;
    if !(esc > 0.0) {
        return Err(Error::Numerical("killing set unreachable from the root".into()));
    }
    Ok((ret + esc) / esc)
}

/// `P_root[H_target < H+_root]`.
pub fn escape_probability(arcs: &ArcGraph, omega: &[f64], root: EdgeId, target: EdgeId) -> Result<f64> {
    if target == root {
        return Err(Error::Params("target must differ from the root".into()));
    }
    let mut marked = vec![false; arcs.n_nodes()];
    marked[target] = true;
    let (ret, esc) = reduce_to_root(arcs, omega, root, &marked)?;
    Ok(esc / (ret + esc))
}

/// Edges of a box model whose head is the boundary vertex.
pub fn exit_edges(model: &Model) -> Result<Vec<bool>> {
    let lat = model.lattice.as_ref().ok_or_else(|| Error::Params("model is not a lattice".into()))?;
    let b = lat.boundary.ok_or_else(|| Error::Params("model has no boundary vertex".into()))?;
    Ok((0..model.n_edges()).map(|e| model.graph.head(e) == b).collect())
}

/// Pairs each edge with its reverse twin `(head, tail)` when one exists,
/// greedily in edge order.
pub fn reverse_partners(model: &Model) -> Vec<usize> {
    let g = &model.graph;
    let mut partner = vec![usize::MAX; model.n_edges()];
    for e in 0..model.n_edges() {
        if partner[e] != usize::MAX || g.tail(e) == g.head(e) {
            continue;
        }
        if let Some(&f) = g
            .out_edges(g.head(e))
            .iter()
            .find(|&&f| f != e && partner[f] == usize::MAX && g.head(f) == g.tail(e))
        {
            partner[e] = f;
            partner[f] = e;
        }
    }
    partner
}

const GS_TOL: f64 = 1e-15;
const GS_MAX_SWEEPS: usize = 1_000_000;

fn restrict_partners(partner: &[usize], free: &[bool]) -> Vec<usize> {
    (0..partner.len())
        .map(|e| if free[e] && partner[e] != usize::MAX && free[partner[e]] { partner[e] } else { usize::MAX })
        .collect()
}

/// Green function at the root edge of a box model, killed on exit.
///
/// Solved iteratively on the forward equation for the occupation measure
/// `nu = delta_root + nu Q`, where `Q` is the kernel restricted to live edges.
pub fn green_function_box(model: &Model, omega: &[f64]) -> Result<f64> {
    let lat = model.lattice.as_ref().ok_or_else(|| Error::Params("model is not a lattice".into()))?;
    let killed = exit_edges(model)?;
    let arcs = &model.arcs;
    let live: Vec<bool> = killed.iter().map(|k| !k).collect();
    let rows: Vec<Vec<(usize, f64)>> = (0..arcs.n_nodes())
        .map(|f| {
            if !live[f] {
                return Vec::new();
            }
            arcs.in_arcs(f).iter().filter(|&&a| live[arcs.src(a)]).map(|&a| (arcs.src(a), omega[a])).collect()
        })
        .collect();
    let mut b = vec![0.0; arcs.n_nodes()];
    b[lat.root_edge] = 1.0;
    let partner = restrict_partners(&reverse_partners(model), &live);
    let nu = crate::solve::gauss_seidel_pairs(&rows, &b, &partner, GS_TOL, GS_MAX_SWEEPS)?;
    Ok(nu[lat.root_edge])
}

/// `P_{e0}[H_special < H+_{e0}]` on a box model.
///
/// Solved iteratively on the backward equation for
/// `q(e) = P_e[H_special < H_{e0}]`, independently of the killed Green route.
pub fn escape_probability_box(model: &Model, omega: &[f64]) -> Result<f64> {
    let lat = model.lattice.as_ref().ok_or_else(|| Error::Params("model is not a lattice".into()))?;
    let s = lat.special_edge.ok_or_else(|| Error::Params("model has no special edge".into()))?;
    let root = lat.root_edge;
    let arcs = &model.arcs;
    let free: Vec<bool> = (0..arcs.n_nodes()).map(|e| e != root && e != s).collect();
    let mut b = vec![0.0; arcs.n_nodes()];
    let rows: Vec<Vec<(usize, f64)>> = (0..arcs.n_nodes())
        .map(|e| {
            if !free[e] {
                return Vec::new();
            }
            let mut r = Vec::new();
            for &a in arcs.out_arcs(e) {
                let f = arcs.dst(a);
                if f == s {
                    b[e] += omega[a];
                } else if free[f] {
                    r.push((f, omega[a]));
                }
            }
            r
        })
        .collect();
    let partner = restrict_partners(&reverse_partners(model), &free);
    let q = crate::solve::gauss_seidel_pairs(&rows, &b, &partner, GS_TOL, GS_MAX_SWEEPS)?;
    let terms = arcs.out_arcs(root).iter().map(|&a| {
        let f = arcs.dst(a);
        omega[a] * if f == s { 1.0 } else if f == root { 0.0 } else { q[f] }
    });
    Ok(crate::special::neumaier_sum(terms))
}

fn step(arcs: &ArcGraph, omega: &[f64], e: EdgeId, rng: &mut StreamRng) -> EdgeId {
    let x: f64 = rng.random();
    let mut acc = 0.0;
    let outs = arcs.out_arcs(e);
    for &a in outs {
        acc += omega[a];
        if x < acc {
            return arcs.dst(a);
        }
    }
    arcs.dst(*outs.last().expect("every edge has a successor"))
}

/// Simulates the number of crossings of `edge` before the walk started on it
/// leaves the pair `{edge, partner}`.
pub fn trap_time_sample(arcs: &ArcGraph, omega: &[f64], edge: EdgeId, partner: EdgeId, rng: &mut StreamRng) -> u64 {
    let mut t = 1u64;
    loop {
        if step(arcs, omega, edge, rng) != partner {
            return t;
        }
        if step(arcs, omega, partner, rng) != edge {
            return t;
        }
        t += 1;
    }
}

/// [`trap_time_sample`] simulated for at most `cap` crossings; past the cap
/// the remaining count is drawn from its geometric law, which is exact by
/// the memoryless property. Saturates at `u64::MAX`.
pub fn trap_time_sample_capped(
    arcs: &ArcGraph,
    omega: &[f64],
    edge: EdgeId,
    partner: EdgeId,
    rng: &mut StreamRng,
    cap: u64,
) -> u64 {
    for t in 1..=cap {
        if step(arcs, omega, edge, rng) != partner || step(arcs, omega, partner, rng) != edge {
            return t;
        }
    }
    let rho = trap_return_probability(arcs, omega, edge, partner);
    let u: f64 = 1.0 - rng.random::<f64>();
    let extra = 1.0 + (u.ln() / rho.ln()).floor();
    if extra.is_finite() && extra < (u64::MAX - cap) as f64 {
        cap + extra as u64
    } else {
        u64::MAX
    }
}

/// `omega(edge, partner) * omega(partner, edge)`.
pub fn trap_return_probability(arcs: &ArcGraph, omega: &[f64], edge: EdgeId, partner: EdgeId) -> f64 {
    let p = arcs.find_arc(edge, partner).map_or(0.0, |a| omega[a]);
    let q = arcs.find_arc(partner, edge).map_or(0.0, |a| omega[a]);
    p * q
}

/// Quenched mean of the trap time: `1 / (1 - omega(e, e_rev) omega(e_rev, e))`.
pub fn trap_time_mean(arcs: &ArcGraph, omega: &[f64], edge: EdgeId, partner: EdgeId) -> f64 {
    1.0 / (1.0 - trap_return_probability(arcs, omega, edge, partner))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cycle3() -> Model {
        Model::from_edges(3, &[(0, 1), (1, 2), (2, 0)]).unwrap()
    }

    #[test]
    fn deterministic_cycle() {
        let m = cycle3();
        let omega = vec![1.0; 3];
        let law = stationary(&m.arcs, &omega).unwrap();
        for p in &law.pi {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(reverse_kernel(&m.arcs, &omega, &law.pi), vec![1.0; 3]);
        let c = CycleOnArcs::new(&m.arcs, vec![0, 1, 2]).unwrap();
        assert_eq!(cycle_weight(&omega, &c), 1.0);
        let h = hitting_prob_check(&m.arcs, &omega, 0).unwrap();
        assert_eq!(h.lhs, vec![1.0]);
        assert!((h.rhs[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn invalid_cycle_rejected() {
        let m = cycle3();
        assert!(CycleOnArcs::new(&m.arcs, vec![0, 2]).is_err());
        assert!(CycleOnArcs::new(&m.arcs, vec![]).is_err());
    }

    #[test]
    fn reversed_cycle_structure() {
        let m = Model::from_edges(2, &[(0, 1), (1, 0), (0, 0), (1, 0)]).unwrap();
        let c = CycleOnArcs::new(&m.arcs, vec![0, 1, 2]).unwrap();
        let r = c.reversed();
        let rev = m.reversed();
        let again = CycleOnArcs::new(&rev.arcs, r.edges().to_vec()).unwrap();
        assert_eq!(again.arcs(), r.arcs());
    }

    #[test]
    fn green_two_state_gadget() {
        // e0 returns to itself with probability p, else moves to the killed edge.
        let m = Model::from_edges(1, &[(0, 0), (0, 0)]).unwrap();
        let p = 0.37;
        let mut omega = vec![0.0; m.n_arcs()];
        for a in 0..m.n_arcs() {
            omega[a] = if m.arcs.dst(a) == 0 { p } else { 1.0 - p };
        }
        let g = green_function_killed(&m.arcs, &omega, 0, &[false, true]).unwrap();
        assert!((g - 1.0 / (1.0 - p)).abs() < 1e-14);
        let esc = escape_probability(&m.arcs, &omega, 0, 1).unwrap();
        assert!((esc - (1.0 - p)).abs() < 1e-15);
    }

    #[test]
    fn box_iterative_routes_match_elimination() {
        use crate::environment::{EnvironmentSampler, LatticeWeights};
        use crate::lattice::{build_box_graph, BoxGraphSpec};
        let m = build_box_graph(BoxGraphSpec { d: 2, n: 4, root_direction: 0, special_alpha: 1.0 }).unwrap();
        let lat = m.lattice.clone().unwrap();
        let ws = LatticeWeights::symmetric(2, 0.7).weight_system(&m).unwrap();
        let env = EnvironmentSampler::new(&m, &ws).unwrap().sample(&m, &ws, 9).unwrap();
        let g = green_function_box(&m, &env.omega).unwrap();
        let g_direct = green_function_killed(&m.arcs, &env.omega, lat.root_edge, &exit_edges(&m).unwrap()).unwrap();
        assert!((g - g_direct).abs() < 1e-11 * g_direct);
        let p = escape_probability_box(&m, &env.omega).unwrap();
        let p_direct = escape_probability(&m.arcs, &env.omega, lat.root_edge, lat.special_edge.unwrap()).unwrap();
        assert!((p - p_direct).abs() < 1e-11 * p_direct);
        assert!((g * p - 1.0).abs() < 1e-10);
    }

    #[test]
    fn trap_time_forced_exit() {
        let m = cycle3();
        let omega = vec![1.0; 3];
        let mut rng = rng::stream(0, &[]);
        assert_eq!(trap_time_sample(&m.arcs, &omega, 0, 2, &mut rng), 1);
        assert_eq!(trap_time_mean(&m.arcs, &omega, 0, 2), 1.0);
    }
}
