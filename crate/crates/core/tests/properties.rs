//! Structural invariants as property tests.

mod common;

use std::collections::BTreeSet;

use common::*;
use hyperwalk::chain::{cycle_weight, ln_cycle_weight, reverse_kernel, stationary};
use hyperwalk::config::RunConfig;
use hyperwalk::environment::{sample_environment, LatticeWeights, WeightSystem};
use hyperwalk::experiments;
use hyperwalk::flows::{build_vertex_flow, flow_identity_check, kappa, kappa_tilde, lift_to_arc_flow, min_cut_lattice};
use hyperwalk::graph::{ArcGraph, Model};
use hyperwalk::hypergeom::{duality_residual, phi_quadrature, HypergeomParams};
use hyperwalk::lattice::{build_torus, TorusSpec};
use hyperwalk::maxflow::max_flow_min_cut;
use hyperwalk::report::weakest_increase;
use hyperwalk::special::ln_beta_multivariate;
use proptest::prelude::*;

fn graph_strategy(max_vertices: usize, max_arcs: usize) -> impl Strategy<Value = Model> {
    any::<u64>().prop_map(move |s| random_graph(&mut rng(s), max_vertices, max_arcs))
}

/// Graph, edge weights in `[0.3, 3]` and arc weights in `[0.5, 2]`. Wider
/// arc weights on vertices of high in-degree push the rejection sampler
/// below its acceptance floor.
fn weighted_graph(max_vertices: usize, max_arcs: usize) -> impl Strategy<Value = (Model, WeightSystem)> {
    any::<u64>().prop_map(move |s| {
        let mut r = rng(s);
        let m = random_graph(&mut r, max_vertices, max_arcs);
        let ws = WeightSystem::new(&m, uniform_vec(&mut r, m.n_edges(), 0.3, 3.0), uniform_vec(&mut r, m.n_arcs(), 0.5, 2.0))
            .unwrap();
        (m, ws)
    })
}

fn params_strategy(balanced: bool) -> impl Strategy<Value = HypergeomParams> {
    (1usize..=3, 1usize..=3, any::<u64>()).prop_map(move |(n, l, s)| {
        let mut r = rng(s);
        loop {
            let alpha = uniform_vec(&mut r, n, 0.2, 5.0);
            let mut beta = uniform_vec(&mut r, l, 0.2, 5.0);
            if balanced {
                let c = alpha.iter().sum::<f64>() / beta.iter().sum::<f64>();
                beta.iter_mut().for_each(|b| *b *= c);
                if beta.iter().any(|b| !(0.2..=5.0).contains(b)) {
                    continue;
                }
            }
            let z = (0..l).map(|_| uniform_vec(&mut r, n, 0.2, 5.0)).collect();
            return HypergeomParams::new(alpha, beta, z).unwrap();
        }
    })
}

fn arc_pairs(k: &ArcGraph) -> BTreeSet<(usize, usize)> {
    (0..k.n_arcs()).map(|a| (k.src(a), k.dst(a))).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn arc_divergence_sums_to_zero(m in graph_strategy(8, 500), s in any::<u64>()) {
        let mut r = rng(s);
        // integer-valued flows make the sums exact
        let theta: Vec<f64> = (0..m.n_arcs()).map(|_| rand::Rng::random_range(&mut r, 0..100) as f64).collect();
        let div = m.arcs.div_arc(&theta);
        prop_assert_eq!(div.iter().sum::<f64>(), 0.0);
        let rev = m.arcs.reversed();
        let div_rev = rev.div_arc(&theta);
        for (a, b) in div.iter().zip(&div_rev) {
            prop_assert_eq!(*a, -*b);
        }
    }

    #[test]
    fn arc_graph_of_reversed_graph_is_reversed_arc_graph(m in graph_strategy(8, 500)) {
        let from_reversed = ArcGraph::build(&m.graph.reversed()).unwrap();
        prop_assert_eq!(arc_pairs(&from_reversed), arc_pairs(&m.arcs.reversed()));
        prop_assert_eq!(from_reversed.n_arcs(), m.n_arcs());
    }

    #[test]
    fn max_flow_carries_its_cut_certificate(m in graph_strategy(10, 10_000), s in any::<u64>()) {
        let mut r = rng(s);
        let cap = uniform_vec(&mut r, m.n_edges(), 0.1, 4.0);
        let n = m.n_vertices();
        let src = rand::Rng::random_range(&mut r, 0..n);
        let sink = (src + 1) % n;
        let mf = max_flow_min_cut(&m.graph, &cap, src, sink).unwrap();
        prop_assert!(mf.source_side[src] && !mf.source_side[sink]);
        let cut: f64 = mf.cut_edges.iter().map(|&e| cap[e]).sum();
        prop_assert!((cut - mf.value).abs() <= 1e-9);
        prop_assert!((mf.cut_value - mf.value).abs() <= 1e-9);
        for (e, (x, y)) in m.graph.edges().enumerate() {
            if mf.source_side[x] && !mf.source_side[y] {
                prop_assert!(mf.cut_edges.contains(&e));
            }
        }
    }

    #[test]
    fn phi_lies_between_product_bounds(p in params_strategy(false)) {
        let v = phi_quadrature(&p, 1e-10).unwrap();
        let lb = ln_beta_multivariate(p.alpha()).unwrap();
        let lo: f64 = p.beta().iter().zip(p.z()).map(|(b, r)| -b * r.iter().cloned().fold(0.0, f64::max).ln()).sum();
        let hi: f64 = p.beta().iter().zip(p.z()).map(|(b, r)| -b * r.iter().cloned().fold(f64::INFINITY, f64::min).ln()).sum();
        let lv = v.ln() - lb;
        prop_assert!(lv >= lo - 1e-10 && lv <= hi + 1e-10, "{} not in [{}, {}]", lv, lo, hi);
    }

    #[test]
    fn duality_residual_is_small(p in params_strategy(true)) {
        let tol = 1e-8;
        let d = duality_residual(&p, tol).unwrap();
        prop_assert!(d.relative <= 10.0 * tol, "{:?}", d);
    }

    #[test]
    fn sampled_environments_are_stochastic_and_reproducible((m, ws) in weighted_graph(8, 200), seed in any::<u64>()) {
        let env = sample_environment(&m, &ws, seed).unwrap();
        prop_assert!(env.row_sum_error(&m) <= 1e-12);
        let again = sample_environment(&m, &ws, seed).unwrap();
        prop_assert!(env.u.iter().zip(&again.u).all(|(a, b)| a.to_bits() == b.to_bits()));
        prop_assert!(env.omega.iter().zip(&again.omega).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn reversal_preserves_stationary_law_and_cycles((m, ws) in weighted_graph(8, 200), seed in any::<u64>()) {
        let env = sample_environment(&m, &ws, seed).unwrap();
        let law = stationary(&m.arcs, &env.omega).unwrap();
        prop_assert!(law.residual <= 1e-12);
        let rev_arcs = m.arcs.reversed();
        let omega_rev = reverse_kernel(&m.arcs, &env.omega, &law.pi);
        let rev_law = stationary(&rev_arcs, &omega_rev).unwrap();
        prop_assert!(rev_law.residual <= 1e-12);
        for (a, b) in law.pi.iter().zip(&rev_law.pi) {
            prop_assert!((a - b).abs() <= 1e-12, "{} vs {}", a, b);
        }
        let mut r = rng(seed ^ 0x5EED);
        for _ in 0..16 {
            let c = random_cycle(&mut r, &m.arcs, 12);
            let fwd = ln_cycle_weight(&env.omega, &c);
            let bwd = ln_cycle_weight(&omega_rev, &c.reversed());
            prop_assert!((fwd.exp() - bwd.exp()).abs() <= 1e-13 * fwd.exp(), "{} vs {}", fwd, bwd);
            prop_assert!(cycle_weight(&env.omega, &c) > 0.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn lifted_flows_satisfy_identities(d in 2usize..=3, n in 2usize..=3, seed in any::<u64>()) {
        let model = build_torus(TorusSpec { d, n, root_direction: 0 }).unwrap();
        let mut r = rng(seed);
        // Symmetric edge weights keep the torus transshipment feasible at
        // every size; Z is generic so the environment is not Dirichlet.
        let a = rand::Rng::random_range(&mut r, 0.3..=2.0);
        let z = (0..2 * d).map(|_| uniform_vec(&mut r, 2 * d, 0.5, 2.0)).collect();
        let lw = LatticeWeights::new(vec![a; 2 * d], Some(z)).unwrap();
        let cut = min_cut_lattice(&lw, n.max(2), Some(0)).unwrap();
        let cap = hyperwalk::flows::boosted_edge_alpha(&model, &lw, 0).unwrap();
        let vflow = build_vertex_flow(&model, &cap, cut.value).unwrap();
        let e0 = model.lattice.as_ref().unwrap().root_edge;
        let aflow = lift_to_arc_flow(&model, &vflow, e0).unwrap();
        prop_assert!(aflow.total_flow_residual(&model.arcs) <= 1e-9);
        let ws = lw.weight_system(&model).unwrap();
        for s in 0..8 {
            let env = sample_environment(&model, &ws, seed.wrapping_add(s)).unwrap();
            let law = stationary(&model.arcs, &env.omega).unwrap();
            let id = flow_identity_check(&model.arcs, &env.omega, &law.pi, &aflow, true);
            prop_assert!(id.rel_error <= 1e-10, "{:?}", id);
        }
    }
}

#[test]
fn report_flags_are_recomputable_from_estimates() {
    let cfg = RunConfig::from_toml_str(
        "[graph]\nd = 3\n[experiment]\nseed = 3\nn_values = [2, 3]\np_values = [1.0]\nn_environments = 40\n",
    )
    .unwrap();
    let report = experiments::run_by_name("invariant-measure", &cfg).unwrap();
    let ests: Vec<_> = report.points.iter().map(|p| p.estimate).collect();
    let flag = report.flags.iter().find(|f| f.name == "bounded_p=1").unwrap();
    assert_eq!(flag.statistic, weakest_increase(&ests));
    assert_eq!(flag.passed, flag.statistic <= flag.threshold);
    let k = report.metadata["kappa"].as_f64().unwrap();
    let kt = report.metadata["kappa_tilde"].as_f64().unwrap();
    assert!(kt <= k);
}

#[test]
fn kappa_is_homogeneous_and_dominates_kappa_tilde() {
    let mut r = rng(8);
    for _ in 0..50 {
        let d = rand::Rng::random_range(&mut r, 1..=4);
        let lw = LatticeWeights::new(uniform_vec(&mut r, 2 * d, 0.1, 5.0), None).unwrap();
        assert!(kappa_tilde(&lw) <= kappa(&lw));
        let half = lw.scaled(0.5);
        assert!((kappa(&half) - 0.5 * kappa(&lw)).abs() <= 1e-12 * kappa(&lw));
    }
}
