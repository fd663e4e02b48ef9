//! Reproducible experiment drivers.
//!
//! Every driver fills defaults into the configuration, echoes it in the
//! report, and draws all randomness from streams keyed by the master seed
//! and the replica index. Environments are processed in parallel and reduced
//! in replica order, so reports do not depend on the thread count.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{
    self, check_weak_reversal, escape_probability_box, green_function_box, hitting_prob_check, stationary,
    trap_time_mean, trap_time_sample_capped, CycleOnArcs,
};
use crate::config::{GraphKind, PhiMethod, RunConfig};
use crate::environment::{Environment, EnvironmentSampler, LatticeWeights};
use crate::error::{Error, Result};
use crate::flows::{
    build_vertex_flow, flow_identity_check, kappa, kappa_closed_form, kappa_direction, kappa_tilde, lift_to_arc_flow,
    min_cut_lattice, vertex_flow_residual,
};
use crate::graph::{ArcGraph, EdgeId, Model};
use crate::hypergeom::{duality_residual, phi_mc, phi_quadrature, Estimate, HypergeomParams};
use crate::report::{weakest_increase, ExperimentReport, Flag, GridPoint, Provenance, SampleRow, SCHEMA_VERSION};
use crate::rng::{self, stream, stream_id, tags};
use crate::special::ln_beta_multivariate;

/// Level of the one-sided trend tests.
pub const TREND_Z: f64 = 3.0;

fn par_map<T: Send, F: Fn(usize) -> Result<T> + Sync + Send>(n: usize, f: F) -> Result<Vec<T>> {
    (0..n).into_par_iter().map(f).collect()
}

fn check_grid<T>(name: &str, grid: &[T]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Config(format!("grid `{name}` must be nonempty")));
    }
    Ok(())
}

fn check_envs(n: usize) -> Result<usize> {
    if n < 2 {
        return Err(Error::Config(format!("n_environments must be at least 2, got {n}")));
    }
    Ok(n)
}

fn check_tol(tol: f64) -> Result<f64> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::Config(format!("tol must lie in (0, 1), got {tol}")));
    }
    Ok(tol)
}

fn kappa_meta(report: &mut ExperimentReport, lw: &LatticeWeights) {
    report.meta("kappa", kappa(lw));
    report.meta("kappa_closed_form", kappa_closed_form(lw));
    report.meta("kappa_tilde", kappa_tilde(lw));
}

fn rows(seeds: &[u64], values: impl IntoIterator<Item = f64>) -> Vec<SampleRow> {
    seeds
        .iter()
        .zip(values)
        .enumerate()
        .map(|(env_index, (&seed_stream, value))| SampleRow { env_index, seed_stream, value })
        .collect()
}

fn is_symmetric(lw: &LatticeWeights) -> bool {
    let a0 = lw.alpha[0];
    let z0 = lw.z[0][0];
    lw.alpha.iter().all(|&a| a == a0) && lw.z.iter().flatten().all(|&z| z == z0)
}

/// Draws balanced `(alpha, beta, Z)` with entries in `[lo, hi]` by rejection.
fn random_balanced(rng: &mut rng::StreamRng, max_dim: usize, lo: f64, hi: f64) -> Result<HypergeomParams> {
    let n = rng.random_range(1..=max_dim);
    let l = rng.random_range(1..=max_dim);
    for _ in 0..10_000 {
        let alpha: Vec<f64> = (0..n).map(|_| rng.random_range(lo..=hi)).collect();
        let raw: Vec<f64> = (0..l).map(|_| rng.random_range(lo..=hi)).collect();
        let scale = alpha.iter().sum::<f64>() / raw.iter().sum::<f64>();
        let beta: Vec<f64> = raw.iter().map(|b| b * scale).collect();
        if beta.iter().all(|b| (lo..=hi).contains(b)) {
            let z = (0..l).map(|_| (0..n).map(|_| rng.random_range(lo..=hi)).collect()).collect();
            return HypergeomParams::new(alpha, beta, z);
        }
    }
    Err(Error::Config(format!("no balanced parameters with entries in [{lo}, {hi}] for n = {n}, l = {l}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DualityCase {
    alpha: Vec<f64>,
    beta: Vec<f64>,
    z: Vec<Vec<f64>>,
    lhs: f64,
    rhs: f64,
    relative: f64,
}

/// Duality residuals over random balanced parameter sets.
pub fn run_duality_sweep(cfg: &RunConfig) -> Result<ExperimentReport> {
    let mut cfg = cfg.clone();
    let e = &mut cfg.experiment;
    let n_cases = *e.n_cases.get_or_insert(100);
    let max_dim = *e.max_dim.get_or_insert(3);
    let [lo, hi] = *e.entry_range.get_or_insert([0.2, 5.0]);
    let tol = check_tol(*e.tol.get_or_insert(1e-8))?;
    e.seed.get_or_insert(1);
    if n_cases == 0 || max_dim == 0 {
        return Err(Error::Config("n_cases and max_dim must be positive".into()));
    }
    if !(lo > 0.0 && lo < hi) {
        return Err(Error::Config(format!("entry_range must satisfy 0 < lo < hi, got [{lo}, {hi}]")));
    }
    let seed = cfg.seed();
    let seeds: Vec<u64> = (0..n_cases as u64).map(|c| stream_id(seed, &[tags::CASES, c])).collect();
    let cases = par_map(n_cases, |c| {
        let mut rng = stream(seed, &[tags::CASES, c as u64]);
        let p = random_balanced(&mut rng, max_dim, lo, hi)?;
        let r = duality_residual(&p, tol)?;
        Ok(DualityCase {
            alpha: p.alpha().to_vec(),
            beta: p.beta().to_vec(),
            z: p.z().to_vec(),
            lhs: r.lhs,
            rhs: r.rhs,
            relative: r.relative,
        })
    })?;
    let rel: Vec<f64> = cases.iter().map(|c| c.relative).collect();
    let max_rel = rel.iter().cloned().fold(0.0, f64::max);
    let mut report = ExperimentReport::new("duality", cfg);
    report.points.push(
        GridPoint::new("relative_residual", &[("n_cases", n_cases as f64), ("tol", tol)], Estimate::from_samples(&rel))
            .with_extra("max", max_rel)
            .with_samples(rows(&seeds, rel.iter().copied())),
    );
    report.meta("max_relative_residual", max_rel);
    report.meta("cases", &cases);
    report.flags.push(Flag::at_most(
        "duality_residual",
        max_rel,
        100.0 * tol,
        "max relative residual <= 100 * quadrature tol",
    ));
    Ok(report)
}

/// Uniformly random closed walk through a random start edge, of length at
/// most `max_len`, found by restarting walks until one closes.
fn random_cycle(arcs: &ArcGraph, rng: &mut rng::StreamRng, max_len: usize) -> Result<CycleOnArcs> {
    for _ in 0..100_000 {
        let start = rng.random_range(0..arcs.n_nodes());
        let mut edges = vec![start];
        let mut e = start;
        for _ in 0..max_len {
            let outs = arcs.out_arcs(e);
            e = arcs.dst(outs[rng.random_range(0..outs.len())]);
            if e == start {
                return CycleOnArcs::new(arcs, edges);
            }
            edges.push(e);
        }
    }
    Err(Error::Config(format!("no closed walk of length <= {max_len} found")))
}

fn default_graph(cfg: &mut RunConfig, d: usize, n: usize) {
    if cfg.graph.kind != GraphKind::General {
        cfg.graph.d.get_or_insert(d);
        cfg.graph.n.get_or_insert(n);
        cfg.graph.root_direction.get_or_insert(0);
    }
}

/// Two-sided weak-reversal checks on random cycles, plus the per-environment
/// hitting identity.
pub fn run_reversal_suite(cfg: &RunConfig) -> Result<ExperimentReport> {
    let mut cfg = cfg.clone();
    default_graph(&mut cfg, 2, 2);
    let e = &mut cfg.experiment;
    let n_envs = check_envs(*e.n_environments.get_or_insert(10_000))?;
    let n_cycles = *e.n_cycles.get_or_insert(20);
    let max_len = *e.max_cycle_len.get_or_insert(6);
    let n_hit = *e.n_hitting_envs.get_or_insert(200);
    let tol = check_tol(*e.tol.get_or_insert(1e-8))?;
    e.seed.get_or_insert(1);
    let seed = cfg.seed();
    let (model, ws, root) = cfg.model()?;
    let div = ws.div_alpha(&model);
    let max_div = div.iter().map(|d| d.abs()).fold(0.0, f64::max);
    if max_div > 1e-10 * ws.alpha.iter().cloned().fold(1.0, f64::max) {
        return Err(Error::Params(format!("div(alpha) must vanish for time reversal (max |div| = {max_div:e})")));
    }
    let cycles: Vec<CycleOnArcs> = (0..n_cycles)
        .map(|i| random_cycle(&model.arcs, &mut stream(seed, &[tags::CASES, i as u64]), max_len))
        .collect::<Result<_>>()?;
    let max_deg = (0..model.n_vertices()).map(|x| model.graph.out_edges(x).len()).max().unwrap_or(0);
    let exact_tol = (max_deg <= 4).then_some(tol);
    let rev = check_weak_reversal(&model, &ws, &cycles, n_envs, seed, exact_tol)?;

    let hit_seeds: Vec<u64> = (0..n_hit as u64).map(|h| stream_id(seed, &[tags::HITTING, h])).collect();
    let sampler = EnvironmentSampler::new(&model, &ws)?;
    let hits = par_map(n_hit, |h| {
        let env = sampler.sample(&model, &ws, hit_seeds[h])?;
        hitting_prob_check(&model.arcs, &env.omega, root).map(|c| c.max_abs_diff)
    })?;

    let mut report = ExperimentReport::new("reversal", cfg.clone());
    if model.lattice.is_some() {
        kappa_meta(&mut report, &cfg.lattice_weights()?);
    }
    let mut max_exact_gap: f64 = 0.0;
    for (i, c) in rev.comparisons.iter().enumerate() {
        let mut p = GridPoint::new(format!("cycle={i}"), &[("length", c.edges.len() as f64)], c.forward)
            .with_extra("reversed_mean", c.reversed.mean)
            .with_extra("reversed_std_error", c.reversed.std_error)
            .with_extra("z", c.z_score);
        if let (Some(f), Some(r)) = (c.exact_forward, c.exact_reversed) {
            max_exact_gap = max_exact_gap.max((f - r).abs() / f.abs().max(r.abs()));
            p = p.with_extra("exact_forward", f).with_extra("exact_reversed", r);
        }
        report.points.push(p);
    }
    if n_hit > 0 {
        let max_hit = hits.iter().cloned().fold(0.0, f64::max);
        report.points.push(
            GridPoint::new("hitting_identity", &[("root_edge", root as f64)], Estimate::from_samples(&hits))
                .with_extra("max", max_hit)
                .with_samples(rows(&hit_seeds, hits.iter().copied())),
        );
        report.flags.push(Flag::at_most("hitting_identity", max_hit, 1e-9, "max |lhs - rhs| <= 1e-9"));
    }
    report.meta("cycles", cycles.iter().map(|c| c.edges().to_vec()).collect::<Vec<_>>());
    report.meta("max_stationary_residual", rev.max_stationary_residual);
    report.flags.push(Flag::at_most("reversal_z", rev.max_abs_z, 4.0, "max |z| over cycles <= 4"));
    if exact_tol.is_some() {
        report.flags.push(Flag::at_most(
            "exact_cycle_moments",
            max_exact_gap,
            100.0 * tol,
            "max relative gap of exact moments <= 100 * tol",
        ));
    }
    Ok(report)
}

/// Killed Green function moments on boxes of growing size.
pub fn run_green_moment(cfg: &RunConfig) -> Result<ExperimentReport> {
    let mut cfg = cfg.clone();
    if cfg.graph.kind == GraphKind::General {
        return Err(Error::Config("green-moment runs on box graphs".into()));
    }
    default_graph(&mut cfg, 3, 4);
    cfg.graph.kind = GraphKind::Box;
    let lw = cfg.lattice_weights()?;
    let kt = kappa_tilde(&lw);
    let e = &mut cfg.experiment;
    let n_envs = check_envs(*e.n_environments.get_or_insert(200))?;
    let n_values = e.n_values.get_or_insert_with(|| vec![4, 8, 12]).clone();
    let s_values = e.s_values.get_or_insert_with(|| vec![0.5 * kt]).clone();
    e.seed.get_or_insert(1);
    check_grid("n_values", &n_values)?;
    check_grid("s_values", &s_values)?;
    if cfg.d() < 3 {
        return Err(Error::Config("green-moment needs d >= 3".into()));
    }
    if let Some(s) = s_values.iter().find(|s| !(**s >= 0.0 && **s < kt)) {
        return Err(Error::Params(format!("s = {s} outside the Green moment window [0, kappa_tilde = {kt})")));
    }
    let seed = cfg.seed();
    let mut report = ExperimentReport::new("green-moment", cfg.clone());
    kappa_meta(&mut report, &lw);
    let mut per_s: Vec<Vec<Estimate>> = vec![Vec::new(); s_values.len()];
    let mut max_product: f64 = 0.0;
    let mut sizes = Vec::new();
    for &n in &n_values {
        let model = cfg.lattice_model(GraphKind::Box, n)?;
        let ws = lw.weight_system(&model)?;
        let sampler = EnvironmentSampler::new(&model, &ws)?;
        let seeds: Vec<u64> = (0..n_envs as u64).map(|r| stream_id(seed, &[tags::ENVIRONMENT, n as u64, r])).collect();
        let solved = par_map(n_envs, |r| {
            let env = sampler.sample(&model, &ws, seeds[r])?;
            Ok((green_function_box(&model, &env.omega)?, escape_probability_box(&model, &env.omega)?))
        })?;
        let product = solved.iter().map(|(g, p)| g * p).fold(0.0, f64::max);
        max_product = max_product.max(product);
        let mean_g = Estimate::from_samples(&solved.iter().map(|x| x.0).collect::<Vec<_>>());
        for (k, &s) in s_values.iter().enumerate() {
            let vals: Vec<f64> = solved.iter().map(|(g, _)| g.powf(s)).collect();
            let est = Estimate::from_samples(&vals);
            per_s[k].push(est);
            report.points.push(
                GridPoint::new(format!("N={n},s={s}"), &[("N", n as f64), ("s", s)], est)
                    .with_extra("mean_green", mean_g.mean)
                    .with_extra("max_green_times_escape", product)
                    .with_samples(rows(&seeds, vals)),
            );
        }
        sizes.push(serde_json::json!({ "N": n, "edges": model.n_edges(), "arcs": model.n_arcs() }));
    }
    report.meta("sizes", sizes);
    for (k, &s) in s_values.iter().enumerate() {
        report.flags.push(Flag::at_most(
            format!("bounded_s={s}"),
            weakest_increase(&per_s[k]),
            TREND_Z,
            "no monotone increase with every step z > 3 across the three largest N",
        ));
    }
    report.flags.push(Flag::at_most(
        "green_escape_inequality",
        max_product,
        1.0 + 1e-9,
        "max over environments of G * P[escape] <= 1 + 1e-9",
    ));
    Ok(report)
}

/// Moments of the normalized root-edge stationary mass on tori.
pub fn run_invariant_measure(cfg: &RunConfig) -> Result<ExperimentReport> {
    let mut cfg = cfg.clone();
    if cfg.graph.kind == GraphKind::General {
        return Err(Error::Config("invariant-measure runs on tori".into()));
    }
    default_graph(&mut cfg, 3, 2);
    cfg.graph.kind = GraphKind::Torus;
    let lw = cfg.lattice_weights()?;
    let k = kappa(&lw);
    let e = &mut cfg.experiment;
    let n_envs = check_envs(*e.n_environments.get_or_insert(200))?;
    let n_values = e.n_values.get_or_insert_with(|| vec![2, 3, 4]).clone();
    let p_values = e.p_values.get_or_insert_with(|| vec![1.0, 2.0]).clone();
    e.seed.get_or_insert(1);
    check_grid("n_values", &n_values)?;
    check_grid("p_values", &p_values)?;
    if cfg.d() < 3 {
        return Err(Error::Config("invariant-measure needs d >= 3".into()));
    }
    if let Some(p) = p_values.iter().find(|p| !(**p >= 1.0)) {
        return Err(Error::Params(format!("p = {p} must be at least 1")));
    }
    let seed = cfg.seed();
    let dir = cfg.graph.root_direction.unwrap_or(0);
    let mut report = ExperimentReport::new("invariant-measure", cfg.clone());
    kappa_meta(&mut report, &lw);
    let mut per_p: Vec<Vec<Estimate>> = vec![Vec::new(); p_values.len()];
    let mut mean_f = Vec::new();
    let mut max_rel: f64 = 0.0;
    let mut violations = 0usize;
    let mut max_residual: f64 = 0.0;
    let mut flow_meta = Vec::new();
    for &n in &n_values {
        let model = cfg.lattice_model(GraphKind::Torus, n)?;
        if model.n_arcs() > chain::DIRECT_SOLVE_LIMIT {
            return Err(Error::Config(format!("torus N = {n} is too large for the stationary solve")));
        }
        let lat = model.lattice.as_ref().expect("torus is a lattice");
        let e0 = lat.root_edge;
        let ws = lw.weight_system(&model)?;
        let cut = min_cut_lattice(&lw, n, Some(dir))?;
        let cap = crate::flows::boosted_edge_alpha(&model, &lw, dir)?;
        let vflow = build_vertex_flow(&model, &cap, cut.value)?;
        let aflow = lift_to_arc_flow(&model, &vflow, e0)?;
        flow_meta.push(serde_json::json!({
            "N": n,
            "min_cut": cut.value,
            "single_vertex_cut": cut.single_vertex,
            "vertex_flow_energy": vflow.energy,
            "vertex_flow_residual": vertex_flow_residual(&model, &vflow),
            "arc_flow_energy": aflow.energy(),
            "total_flow_residual": aflow.total_flow_residual(&model.arcs),
        }));
        let flows: Vec<_> = p_values.iter().map(|p| aflow.scaled(p / cut.value)).collect();
        let n_edges = model.n_edges() as f64;
        let sampler = EnvironmentSampler::new(&model, &ws)?;
        let seeds: Vec<u64> = (0..n_envs as u64).map(|r| stream_id(seed, &[tags::ENVIRONMENT, n as u64, r])).collect();
        let per_env = par_map(n_envs, |r| {
            let env = sampler.sample(&model, &ws, seeds[r])?;
            let law = stationary(&model.arcs, &env.omega)?;
            let f = n_edges * law.pi[e0];
            let mut rel: f64 = 0.0;
            let mut bad = 0usize;
            for (flow, &p) in flows.iter().zip(&p_values) {
                let id = flow_identity_check(&model.arcs, &env.omega, &law.pi, flow, true);
                rel = rel.max(id.rel_error);
                if p * f.ln() > id.ln_ratio + 1e-9 * id.ln_ratio.abs().max(1.0) {
                    bad += 1;
                }
            }
            let participation = n_edges * law.pi.iter().map(|x| x * x).sum::<f64>();
            Ok((f, rel, bad, participation, law.residual))
        })?;
        let fs: Vec<f64> = per_env.iter().map(|x| x.0).collect();
        let part = Estimate::from_samples(&per_env.iter().map(|x| x.3).collect::<Vec<_>>());
        let n_rel = per_env.iter().map(|x| x.1).fold(0.0, f64::max);
        let n_bad: usize = per_env.iter().map(|x| x.2).sum();
        max_rel = max_rel.max(n_rel);
        violations += n_bad;
        max_residual = per_env.iter().map(|x| x.4).fold(max_residual, f64::max);
        mean_f.push((n, Estimate::from_samples(&fs)));
        for (i, &p) in p_values.iter().enumerate() {
            let vals: Vec<f64> = fs.iter().map(|f| f.powf(p)).collect();
            let est = Estimate::from_samples(&vals);
            per_p[i].push(est);
            report.points.push(
                GridPoint::new(format!("N={n},p={p}"), &[("N", n as f64), ("p", p)], est)
                    .with_extra("participation_ratio", part.mean)
                    .with_extra("participation_ratio_std_error", part.std_error)
                    .with_extra("max_flow_identity_error", n_rel)
                    .with_extra("flow_bound_violations", n_bad as f64)
                    .with_samples(rows(&seeds, vals)),
            );
        }
    }
    report.meta("flows", flow_meta);
    report.meta("max_stationary_residual", max_residual);
    for (i, &p) in p_values.iter().enumerate() {
        let stat = weakest_increase(&per_p[i]);
        if p < k {
            report.flags.push(Flag::at_most(
                format!("bounded_p={p}"),
                stat,
                TREND_Z,
                "p < kappa: no monotone increase with every step z > 3 across the three largest N",
            ));
        } else {
            report.flags.push(Flag::above(
                format!("divergence_probe_p={p}"),
                stat,
                TREND_Z,
                "p >= kappa: every step across the three largest N increases with z > 3",
            ));
        }
    }
    if is_symmetric(&lw) {
        for (n, est) in &mean_f {
            report.flags.push(Flag::at_most(
                format!("mean_f_equals_one_N={n}"),
                est.z_vs(1.0).abs(),
                3.0,
                "symmetric weights: |E[f_N] - 1| <= 3 std errors",
            ));
        }
    }
    report.flags.push(Flag::at_most(
        "flow_identity",
        max_rel,
        1e-10,
        "max relative disagreement of the three log-domain flow expressions <= 1e-10",
    ));
    report.flags.push(Flag::at_most(
        "flow_bound",
        violations as f64,
        0.0,
        "number of samples with p ln f_N > ln(reversed omega^Theta / omega^Theta)",
    ));
    report.flags.push(Flag::at_most("stationary_residual", max_residual, 1e-12, "max stationary residual <= 1e-12"));
    Ok(report)
}


/// Geometric trap times at the origin: annealed tails and quenched means.
pub fn run_trap_times(cfg: &RunConfig) -> Result<ExperimentReport> {
    let mut cfg = cfg.clone();
    if cfg.graph.kind == GraphKind::General {
        return Err(Error::Config("trap-times runs on tori".into()));
    }
    default_graph(&mut cfg, 3, 4);
    cfg.graph.kind = GraphKind::Torus;
    let lw = cfg.lattice_weights()?;
    let d = cfg.d();
    let e = &mut cfg.experiment;
    let n_envs = check_envs(*e.n_environments.get_or_insert(10_000))?;
    let directions = e.directions.get_or_insert_with(|| (0..d).collect()).clone();
    let n_quenched = *e.n_quenched_envs.get_or_insert(3);
    let n_walks = *e.n_walks.get_or_insert(10_000);
    e.seed.get_or_insert(1);
    check_grid("directions", &directions)?;
    if let Some(i) = directions.iter().find(|i| **i >= d) {
        return Err(Error::Config(format!("direction {i} is not a positive direction (< d = {d})")));
    }
    if n_quenched > 0 && n_walks < 2 {
        return Err(Error::Config("n_walks must be at least 2".into()));
    }
    let seed = cfg.seed();
    let model = cfg.lattice_model(GraphKind::Torus, cfg.graph.n.unwrap_or(4))?;
    let ws = lw.weight_system(&model)?;
    let lat = model.lattice.as_ref().expect("torus is a lattice");
    let sampler = EnvironmentSampler::new(&model, &ws)?;
    let mut report = ExperimentReport::new("trap-times", cfg.clone());
    kappa_meta(&mut report, &lw);
    let mut max_quenched_z: f64 = 0.0;
    for &i in &directions {
        let edge = lat.origin_edge(i);
        let partner = lat.origin_edge_reverse(i)?;
        let verts = [model.graph.tail(edge), model.graph.head(edge)];
        let local_omega = |env_seed: u64| -> Result<Vec<f64>> {
            let mut u = vec![0.0; model.n_edges()];
            sampler.sample_vertices(&model, env_seed, &verts, &mut u)?;
            Ok(local_kernel(&model, &ws.z, &u, &[edge, partner]))
        };
        let seeds: Vec<u64> =
            (0..n_envs as u64).map(|r| stream_id(seed, &[tags::ENVIRONMENT, i as u64, r])).collect();
        let times = par_map(n_envs, |r| {
            let omega = local_omega(seeds[r])?;
            let mut walk = stream(seeds[r], &[tags::WALK]);
            Ok(trap_time_sample_capped(&model.arcs, &omega, edge, partner, &mut walk, TRAP_CAP) as f64)
        })?;
        let k_i = kappa_direction(&lw, i);
        let (hill, k) = hill_estimator(&times);
        let hill_se = hill / (k as f64).sqrt();
        let running: Vec<f64> =
            [n_envs / 4, n_envs / 2, n_envs].iter().map(|&m| times[..m.max(1)].iter().sum::<f64>() / m.max(1) as f64).collect();
        report.points.push(
            GridPoint::new(format!("direction={i},annealed"), &[("direction", i as f64)], Estimate::from_samples(&times))
                .with_extra("kappa_direction", k_i)
                .with_extra("tail_index", hill)
                .with_extra("tail_index_std_error", hill_se)
                .with_extra("tail_order_statistics", k as f64)
                .with_extra("running_mean_quarter", running[0])
                .with_extra("running_mean_half", running[1])
                .with_extra("running_mean_full", running[2])
                .with_extra("running_mean_ratio", running[2] / running[1])
                .with_samples(rows(&seeds, times.iter().copied())),
        );
        let name = format!("tail_consistency_direction={i}");
        report.flags.push(if k_i > 1.0 {
            Flag::above(name, hill, 1.0, "kappa_i > 1: Hill tail index > 1 (finite mean)")
        } else {
            Flag::at_most(name, hill - 3.0 * hill_se, 1.0, "kappa_i <= 1: Hill tail index - 3 std errors <= 1")
        });
        report.flags.push(
            Flag::at_most(
                format!("running_mean_direction={i}"),
                (running[2] / running[1] - 1.0).abs(),
                0.1,
                "diagnostic: full-sample and half-sample running means within 10%",
            )
            .diagnostic(),
        );
        for q in 0..n_quenched {
            let env_seed = stream_id(seed, &[tags::QUENCHED, i as u64, q as u64]);
            let omega = local_omega(env_seed)?;
            let mut walk = stream(env_seed, &[tags::WALK]);
            let ts: Vec<f64> = (0..n_walks)
                .map(|_| trap_time_sample_capped(&model.arcs, &omega, edge, partner, &mut walk, TRAP_CAP) as f64)
                .collect();
            let est = Estimate::from_samples(&ts);
            let exact = trap_time_mean(&model.arcs, &omega, edge, partner);
            // Null-hypothesis standard error: Var T = rho / (1 - rho)^2. The
            // empirical one collapses when returns are rare.
            let rho = chain::trap_return_probability(&model.arcs, &omega, edge, partner);
            let null_se = (rho / (n_walks as f64)).sqrt() * exact;
            let z = if null_se > 0.0 { (est.mean - exact) / null_se } else { est.z_vs(exact) };
            max_quenched_z = max_quenched_z.max(z.abs());
            report.points.push(
                GridPoint::new(
                    format!("direction={i},quenched={q}"),
                    &[("direction", i as f64), ("environment", q as f64)],
                    est,
                )
                .with_extra("exact_mean", exact)
                .with_extra("null_std_error", null_se)
                .with_extra("z", z),
            );
        }
    }
    if n_quenched > 0 {
        report.flags.push(Flag::at_most(
            "quenched_geometric_mean",
            max_quenched_z,
            4.0,
            "max |z| of simulated vs exact quenched mean, null-hypothesis std error, <= 4",
        ));
    }
    Ok(report)
}

/// Crossings simulated step by step before switching to the exact
/// geometric remainder.
pub const TRAP_CAP: u64 = 1_000_000;

/// `omega` on the out-arcs of the listed edges only; zero elsewhere.
fn local_kernel(model: &Model, z: &[f64], u: &[f64], edges: &[EdgeId]) -> Vec<f64> {
    let mut omega = vec![0.0; model.n_arcs()];
    for &e in edges {
        let arcs = model.arcs.out_arcs(e);
        let total: f64 = arcs.iter().map(|&a| z[a] * u[model.arcs.dst(a)]).sum();
        for &a in arcs {
            omega[a] = z[a] * u[model.arcs.dst(a)] / total;
        }
    }
    omega
}

/// Hill estimate of the tail index from the `k = max(10, sqrt(n))` largest
/// values; returns `(index, k)`.
pub fn hill_estimator(xs: &[f64]) -> (f64, usize) {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    let k = ((v.len() as f64).sqrt() as usize).max(10).min(v.len().saturating_sub(1));
    if k == 0 {
        return (f64::NAN, 0);
    }
    let base = v[k].ln();
    let h = v[..k].iter().map(|x| x.ln() - base).sum::<f64>() / k as f64;
    (1.0 / h, k)
}

/// Flow construction on tori of growing size.
pub fn run_flow_build(cfg: &RunConfig) -> Result<ExperimentReport> {
    let mut cfg = cfg.clone();
    if cfg.graph.kind == GraphKind::General {
        return Err(Error::Config("flow-build runs on tori".into()));
    }
    default_graph(&mut cfg, 3, 4);
    cfg.graph.kind = GraphKind::Torus;
    let lw = cfg.lattice_weights()?;
    let n_values = cfg.experiment.n_values.get_or_insert_with(|| vec![4, 6, 8]).clone();
    cfg.experiment.seed.get_or_insert(1);
    check_grid("n_values", &n_values)?;
    let mut report = ExperimentReport::new("flow-build", cfg.clone());
    kappa_meta(&mut report, &lw);
    let (mut max_excess, mut max_res) = (f64::NEG_INFINITY, 0.0f64);
    let mut energies = Vec::new();
    for &n in &n_values {
        let model = cfg.lattice_model(GraphKind::Torus, n)?;
        let cap = lw.edge_alpha(&model)?;
        let cut = min_cut_lattice(&lw, n, None)?;
        let flow = build_vertex_flow(&model, &cap, cut.value)?;
        let excess = flow.theta.iter().zip(&cap).map(|(t, c)| t - c).fold(f64::NEG_INFINITY, f64::max);
        let res = vertex_flow_residual(&model, &flow);
        max_excess = max_excess.max(excess);
        max_res = max_res.max(res);
        energies.push(flow.energy);
        let samples = flow
            .theta
            .iter()
            .enumerate()
            .map(|(e, &t)| SampleRow { env_index: e, seed_stream: 0, value: t })
            .collect();
        report.points.push(
            GridPoint::new(format!("N={n}"), &[("N", n as f64)], Estimate::exact(flow.energy))
                .with_extra("min_cut", cut.value)
                .with_extra("single_vertex_cut", cut.single_vertex)
                .with_extra("max_excess_over_capacity", excess)
                .with_extra("divergence_residual", res)
                .with_extra("sweeps", flow.sweeps as f64)
                .with_samples(samples),
        );
    }
    let cmax = lw.alpha.iter().cloned().fold(0.0, f64::max);
    let ratio = energies.iter().cloned().fold(0.0, f64::max) / energies.iter().cloned().fold(f64::INFINITY, f64::min);
    report.meta("energy_ratio", ratio);
    report.flags.push(Flag::at_most(
        "below_capacity",
        max_excess,
        1e-12 * cmax,
        "max (theta - c) <= 1e-12 * max c",
    ));
    report.flags.push(Flag::at_most("divergence", max_res, 1e-9, "max divergence residual <= 1e-9"));
    report.flags.push(Flag::at_most("energy_bounded", ratio, 1.5, "max / min flow energy across N <= 1.5"));
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentReplica {
    pub index: usize,
    pub seed_stream: u64,
    pub u: Vec<f64>,
    pub omega: Vec<f64>,
    pub row_sum_error: f64,
}

/// Serialized environments with the arc list needed to read them back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentDump {
    pub schema_version: String,
    pub experiment: String,
    pub seed: u64,
    pub config: RunConfig,
    pub edges: Vec<[usize; 2]>,
    pub arcs: Vec<[usize; 2]>,
    pub replicas: Vec<EnvironmentReplica>,
    pub provenance: Provenance,
}

impl EnvironmentDump {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("dumps always serialize");
        s.push('\n');
        s
    }

    /// Rebuilds the environment of one replica.
    pub fn environment(&self, index: usize) -> Option<Environment> {
        self.replicas.get(index).map(|r| Environment { u: r.u.clone(), omega: r.omega.clone() })
    }
}

/// Samples `n_environments` (default 1) environments of the configured graph.
pub fn sample_environments(cfg: &RunConfig) -> Result<EnvironmentDump> {
    let mut cfg = cfg.clone();
    default_graph(&mut cfg, 3, 4);
    let n = *cfg.experiment.n_environments.get_or_insert(1);
    cfg.experiment.seed.get_or_insert(1);
    let seed = cfg.seed();
    let (model, ws, _) = cfg.model()?;
    let sampler = EnvironmentSampler::new(&model, &ws)?;
    let replicas = par_map(n, |r| {
        let s = crate::environment::replica_seed(seed, r as u64);
        let env = sampler.sample(&model, &ws, s)?;
        let row_sum_error = env.row_sum_error(&model);
        Ok(EnvironmentReplica { index: r, seed_stream: s, u: env.u, omega: env.omega, row_sum_error })
    })?;
    Ok(EnvironmentDump {
        schema_version: SCHEMA_VERSION.to_string(),
        experiment: "sample-env".to_string(),
        seed,
        config: cfg,
        edges: model.graph.edges().map(|(t, h)| [t, h]).collect(),
        arcs: (0..model.n_arcs()).map(|a| [model.arcs.src(a), model.arcs.dst(a)]).collect(),
        replicas,
        provenance: Provenance::new(seed),
    })
}

/// Summary of a graph and its weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Description {
    pub schema_version: String,
    pub experiment: String,
    pub kind: GraphKind,
    pub vertices: usize,
    pub edges: usize,
    pub arcs: usize,
    pub root_edge: usize,
    pub max_abs_div_alpha: f64,
    pub kappa: Option<f64>,
    pub kappa_closed_form: Option<f64>,
    pub kappa_tilde: Option<f64>,
    pub min_cut: Option<f64>,
    pub min_cut_boosted: Option<f64>,
    pub single_vertex_cut: Option<f64>,
}

pub fn describe(cfg: &RunConfig) -> Result<Description> {
    let mut cfg = cfg.clone();
    default_graph(&mut cfg, 3, 4);
    let (model, ws, root) = cfg.model()?;
    let max_abs_div_alpha = ws.div_alpha(&model).iter().map(|d| d.abs()).fold(0.0, f64::max);
    let mut out = Description {
        schema_version: SCHEMA_VERSION.to_string(),
        experiment: "describe".to_string(),
        kind: cfg.graph.kind,
        vertices: model.n_vertices(),
        edges: model.n_edges(),
        arcs: model.n_arcs(),
        root_edge: root,
        max_abs_div_alpha,
        kappa: None,
        kappa_closed_form: None,
        kappa_tilde: None,
        min_cut: None,
        min_cut_boosted: None,
        single_vertex_cut: None,
    };
    if let Some(lat) = &model.lattice {
        let lw = cfg.lattice_weights()?;
        out.kappa = Some(kappa(&lw));
        out.kappa_closed_form = Some(kappa_closed_form(&lw));
        out.kappa_tilde = Some(kappa_tilde(&lw));
        let cut = min_cut_lattice(&lw, lat.n, None)?;
        out.min_cut = Some(cut.value);
        out.single_vertex_cut = Some(cut.single_vertex);
        let dir = cfg.graph.root_direction.unwrap_or(0);
        out.min_cut_boosted = Some(min_cut_lattice(&lw, lat.n, Some(dir))?.value);
    }
    Ok(out)
}

/// Value of one simplex integral.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiReport {
    pub schema_version: String,
    pub experiment: String,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub z: Vec<Vec<f64>>,
    pub method: PhiMethod,
    pub value: f64,
    /// Quadrature tolerance, or the Monte Carlo standard error.
    pub tol: Option<f64>,
    pub std_error: Option<f64>,
    pub n_samples: Option<usize>,
    /// `B(alpha)`, the value at constant unit rows.
    pub beta_function: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
}

pub fn evaluate_phi(cfg: &RunConfig) -> Result<PhiReport> {
    let p = cfg.phi_params()?;
    let method = cfg.experiment.method.unwrap_or(PhiMethod::Quadrature);
    let b = ln_beta_multivariate(p.alpha())?.exp();
    // B(alpha) prod_j (max_i Z_ji)^{-beta_j} <= Phi <= B(alpha) prod_j (min_i Z_ji)^{-beta_j}
    let bound = |pick: fn(f64, f64) -> f64, init: f64| -> f64 {
        b * p
            .z()
            .iter()
            .zip(p.beta())
            .map(|(row, bj)| row.iter().cloned().fold(init, pick).powf(-bj))
            .product::<f64>()
    };
    let lower_bound = bound(f64::max, 0.0);
    let upper_bound = bound(f64::min, f64::INFINITY);
    let (value, tol, std_error, n_samples) = match method {
        PhiMethod::Quadrature => {
            let tol = check_tol(cfg.experiment.tol.unwrap_or(1e-10))?;
            (phi_quadrature(&p, tol)?, Some(tol), None, None)
        }
        PhiMethod::Mc => {
            let n = cfg.experiment.n_samples.unwrap_or(100_000);
            let est = phi_mc(&p, n, cfg.seed())?;
            (est.mean, None, Some(est.std_error), Some(est.n_samples))
        }
    };
    Ok(PhiReport {
        schema_version: SCHEMA_VERSION.to_string(),
        experiment: "phi".to_string(),
        alpha: p.alpha().to_vec(),
        beta: p.beta().to_vec(),
        z: p.z().to_vec(),
        method,
        value,
        tol,
        std_error,
        n_samples,
        beta_function: b,
        lower_bound,
        upper_bound,
    })
}

/// Runs an experiment by its command name.
pub fn run_by_name(name: &str, cfg: &RunConfig) -> Result<ExperimentReport> {
    match name {
        "duality" => run_duality_sweep(cfg),
        "reversal" => run_reversal_suite(cfg),
        "green-moment" => run_green_moment(cfg),
        "invariant-measure" => run_invariant_measure(cfg),
        "trap-times" => run_trap_times(cfg),
        "flow-build" => run_flow_build(cfg),
        other => Err(Error::Config(format!("unknown experiment `{other}`"))),
    }
}
