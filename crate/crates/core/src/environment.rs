//! Weight systems, environment sampling and the Radon–Nikodym identity.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ArcId, EdgeId, Model, VertexId};
use crate::hypergeom::{ln_f_ratio, Estimate, HypergeomParams};
use crate::rng::{self, DirichletSampler, StreamRng};

/// Edge weights `alpha`, arc weights `Z` and an arc tilt `xi`.
///
/// The tilted exponent of edge `e'` as a simplex coordinate at its tail is
/// `alpha_e' + (xi entering e')`; the exponent of the mixing factor of `e` at
/// its head is `alpha_e + (xi leaving e)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSystem {
    pub alpha: Vec<f64>,
    pub z: Vec<f64>,
    pub xi: Vec<f64>,
    out_exp: Vec<f64>,
    in_exp: Vec<f64>,
}

impl WeightSystem {
    pub fn new(model: &Model, alpha: Vec<f64>, z: Vec<f64>) -> Result<Self> {
        let xi = vec![0.0; model.n_arcs()];
        Self::with_all(model, alpha, z, xi)
    }

    /// Uniform `Z = 1` (the Dirichlet case).
    pub fn dirichlet(model: &Model, alpha: Vec<f64>) -> Result<Self> {
        Self::new(model, alpha, vec![1.0; model.n_arcs()])
    }

    pub fn with_all(model: &Model, alpha: Vec<f64>, z: Vec<f64>, xi: Vec<f64>) -> Result<Self> {
        if alpha.len() != model.n_edges() {
            return Err(Error::Params(format!("alpha has {} entries for {} edges", alpha.len(), model.n_edges())));
        }
        if z.len() != model.n_arcs() || xi.len() != model.n_arcs() {
            return Err(Error::Params(format!("Z and xi need {} arc entries", model.n_arcs())));
        }
        if let Some((e, a)) = alpha.iter().enumerate().find(|(_, a)| !(**a > 0.0) || !a.is_finite()) {
            return Err(Error::Params(format!("alpha must be strictly positive; edge {e} has {a}")));
        }
        if let Some((k, v)) = z.iter().enumerate().find(|(_, v)| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::Params(format!("Z must be strictly positive; arc {k} has {v}")));
        }
        if xi.iter().any(|v| !v.is_finite()) {
            return Err(Error::Params("tilt must be finite".into()));
        }
        let into = model.arcs.in_sums(&xi);
        let out = model.arcs.out_sums(&xi);
        let out_exp: Vec<f64> = alpha.iter().zip(&into).map(|(a, t)| a + t).collect();
        let in_exp: Vec<f64> = alpha.iter().zip(&out).map(|(a, t)| a + t).collect();
        for e in 0..alpha.len() {
            if !(out_exp[e] > 0.0 && in_exp[e] > 0.0) {
                return Err(Error::Params(format!(
                    "tilt makes a parameter of edge {e} nonpositive ({}, {})",
                    out_exp[e], in_exp[e]
                )));
            }
        }
        Ok(Self { alpha, z, xi, out_exp, in_exp })
    }

    pub fn with_tilt(&self, model: &Model, xi: Vec<f64>) -> Result<Self> {
        Self::with_all(model, self.alpha.clone(), self.z.clone(), xi)
    }

    /// Same `Z`, weights `alpha + theta` on edges.
    pub fn with_alpha_shift(&self, model: &Model, theta: &[f64]) -> Result<Self> {
        let alpha = self.alpha.iter().zip(theta).map(|(a, t)| a + t).collect();
        Self::with_all(model, alpha, self.z.clone(), self.xi.clone())
    }

    pub fn out_exponent(&self, e: EdgeId) -> f64 {
        self.out_exp[e]
    }

    pub fn in_exponent(&self, e: EdgeId) -> f64 {
        self.in_exp[e]
    }

    /// Parameters of the density at `x`: simplex over out-edges, mixing rows
    /// over in-edges.
    pub fn vertex_params(&self, model: &Model, x: VertexId) -> Result<HypergeomParams> {
        let outs = model.graph.out_edges(x);
        let ins = model.graph.in_edges(x);
        let alpha = outs.iter().map(|&f| self.out_exp[f]).collect();
        let beta = ins.iter().map(|&e| self.in_exp[e]).collect();
        let z = ins
            .iter()
            .map(|&e| outs.iter().map(|&f| self.z[arc_between(model, e, f)]).collect())
            .collect();
        HypergeomParams::new(alpha, beta, z)
    }

    /// Vertex divergence of `alpha`.
    pub fn div_alpha(&self, model: &Model) -> Vec<f64> {
        model.graph.div_vertex(&self.alpha)
    }
}

fn arc_between(model: &Model, e: EdgeId, f: EdgeId) -> ArcId {
    model.arcs.find_arc(e, f).expect("succeeding edges always form an arc")
}

/// Translation-invariant lattice weights: `alpha` per direction and `Z`
/// indexed by (incoming direction, outgoing direction).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeWeights {
    pub alpha: Vec<f64>,
    pub z: Vec<Vec<f64>>,
}

impl LatticeWeights {
    pub fn new(alpha: Vec<f64>, z: Option<Vec<Vec<f64>>>) -> Result<Self> {
        let k = alpha.len();
        if k == 0 || k % 2 != 0 {
            return Err(Error::Params("lattice alpha needs 2d entries".into()));
        }
        let z = z.unwrap_or_else(|| vec![vec![1.0; k]; k]);
        if z.len() != k || z.iter().any(|r| r.len() != k) {
            return Err(Error::Params(format!("lattice Z must be {k} x {k}")));
        }
        if alpha.iter().any(|a| !(*a > 0.0)) {
            return Err(Error::Params("alpha must be strictly positive".into()));
        }
        if z.iter().flatten().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::Params("Z must be strictly positive".into()));
        }
        Ok(Self { alpha, z })
    }

    pub fn symmetric(d: usize, a: f64) -> Self {
        Self { alpha: vec![a; 2 * d], z: vec![vec![1.0; 2 * d]; 2 * d] }
    }

    pub fn d(&self) -> usize {
        self.alpha.len() / 2
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { alpha: self.alpha.iter().map(|a| a * c).collect(), z: self.z.clone() }
    }

    /// Per-edge `alpha` on a lattice model (special edge gets its own weight).
    pub fn edge_alpha(&self, model: &Model) -> Result<Vec<f64>> {
        let lat = model.lattice.as_ref().ok_or_else(|| Error::Params("model is not a lattice".into()))?;
        if lat.d != self.d() {
            return Err(Error::Params(format!("weights are for d = {}, lattice has d = {}", self.d(), lat.d)));
        }
        Ok(lat
            .edge_dir
            .iter()
            .map(|dir| match dir {
                Some(k) => self.alpha[*k],
                None => lat.special_alpha.unwrap_or(1.0),
            })
            .collect())
    }

    /// Per-arc `Z`; arcs into or out of the special edge get weight 1.
    pub fn arc_z(&self, model: &Model) -> Result<Vec<f64>> {
        let lat = model.lattice.as_ref().ok_or_else(|| Error::Params("model is not a lattice".into()))?;
        Ok((0..model.n_arcs())
            .map(|a| {
                let (e, f) = (model.arcs.src(a), model.arcs.dst(a));
                match (lat.edge_dir[e], lat.edge_dir[f]) {
                    (Some(i), Some(j)) => self.z[i][j],
                    _ => 1.0,
                }
            })
            .collect())
    }

    pub fn weight_system(&self, model: &Model) -> Result<WeightSystem> {
        WeightSystem::new(model, self.edge_alpha(model)?, self.arc_z(model)?)
    }
}

/// Simplex variables per edge and the induced transition kernel per arc.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub u: Vec<f64>,
    pub omega: Vec<f64>,
}

/// `omega(e, e') = Z u_e' / sum_e'' Z u_e''` from stored `u`.
pub fn omega_from_u(model: &Model, z: &[f64], u: &[f64]) -> Vec<f64> {
    let mut omega = vec![0.0; model.n_arcs()];
    for e in 0..model.n_edges() {
        let arcs = model.arcs.out_arcs(e);
        let total: f64 = arcs.iter().map(|&a| z[a] * u[model.arcs.dst(a)]).sum();
        for &a in arcs {
            omega[a] = z[a] * u[model.arcs.dst(a)] / total;
        }
    }
    omega
}

impl Environment {
    pub fn from_u(model: &Model, ws: &WeightSystem, u: Vec<f64>) -> Result<Self> {
        if u.len() != model.n_edges() {
            return Err(Error::Params("u needs one entry per edge".into()));
        }
        let omega = omega_from_u(model, &ws.z, &u);
        Ok(Self { u, omega })
    }

    /// Largest deviation from the two row-sum constraints.
    pub fn row_sum_error(&self, model: &Model) -> f64 {
        let mut err: f64 = 0.0;
        for x in 0..model.n_vertices() {
            let s: f64 = model.graph.out_edges(x).iter().map(|&e| self.u[e]).sum();
            err = err.max((s - 1.0).abs());
        }
        for e in 0..model.n_edges() {
            let s: f64 = model.arcs.out_arcs(e).iter().map(|&a| self.omega[a]).sum();
            err = err.max((s - 1.0).abs());
        }
        err
    }

    /// `ln omega^xi = sum xi(a) ln omega(a)`.
    pub fn ln_power(&self, xi: &[f64]) -> f64 {
        xi.iter().zip(&self.omega).filter(|(x, _)| **x != 0.0).map(|(x, w)| x * w.ln()).sum()
    }
}

/// Exact sampler for the density `phi / Phi` of a single simplex, by
/// rejection from Dirichlet(alpha).
#[derive(Debug, Clone)]
pub struct HypergeomSampler {
    params: HypergeomParams,
    dirichlet: DirichletSampler,
    ln_envelope: f64,
    constant_rows: bool,
}

/// Proposals without a single acceptance after which sampling gives up.
pub const REJECTION_PROBE: usize = 100_000;

impl HypergeomSampler {
    pub fn new(params: HypergeomParams) -> Result<Self> {
        let dirichlet = DirichletSampler::new(params.alpha())?;
        let ln_envelope = params.ln_envelope();
        let constant_rows = params.z().iter().all(|row| row.iter().all(|&v| v == row[0]));
        Ok(Self { params, dirichlet, ln_envelope, constant_rows })
    }

    pub fn params(&self) -> &HypergeomParams {
        &self.params
    }

    /// Acceptance probability of a proposal `u`.
    pub fn acceptance(&self, u: &[f64]) -> f64 {
        (-self.params.ln_mixing(u) - self.ln_envelope).exp().min(1.0)
    }

    /// Draws into `out`; returns the number of proposals used.
    pub fn sample_into(&self, rng: &mut StreamRng, out: &mut [f64], vertex: VertexId) -> Result<usize> {
        if self.params.n() == 1 {
            out[0] = 1.0;
            return Ok(1);
        }
        for tries in 1..=REJECTION_PROBE {
            self.dirichlet.sample_into(rng, out);
            if self.constant_rows || rng.random::<f64>() < self.acceptance(out) {
                return Ok(tries);
            }
        }
        Err(Error::Rejection { vertex, threshold: 1.0 / REJECTION_PROBE as f64 })
    }

    pub fn sample(&self, rng: &mut StreamRng) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.params.n()];
        self.sample_into(rng, &mut out, 0)?;
        Ok(out)
    }
}

/// Per-vertex samplers for one weight system, reusable across replicas.
#[derive(Debug, Clone)]
pub struct EnvironmentSampler {
    samplers: Vec<HypergeomSampler>,
}

/// Seed of replica `r` under master seed `seed`.
pub fn replica_seed(seed: u64, r: u64) -> u64 {
    rng::stream_id(seed, &[rng::tags::ENVIRONMENT, r])
}

impl EnvironmentSampler {
    pub fn new(model: &Model, ws: &WeightSystem) -> Result<Self> {
        let samplers = (0..model.n_vertices())
            .map(|x| HypergeomSampler::new(ws.vertex_params(model, x)?))
            .collect::<Result<_>>()?;
        Ok(Self { samplers })
    }

    pub fn vertex(&self, x: VertexId) -> &HypergeomSampler {
        &self.samplers[x]
    }

    /// Samples `u` at the listed vertices only; other entries of `u` are left
    /// untouched. Vertex `x` always uses the stream `(seed, VERTEX, x)`.
    pub fn sample_vertices(&self, model: &Model, seed: u64, vertices: &[VertexId], u: &mut [f64]) -> Result<()> {
        let mut buf = Vec::new();
        for &x in vertices {
            let mut rng = rng::stream(seed, &[rng::tags::VERTEX, x as u64]);
            let outs = model.graph.out_edges(x);
            buf.resize(outs.len(), 0.0);
            self.samplers[x].sample_into(&mut rng, &mut buf, x)?;
            for (&e, &v) in outs.iter().zip(&buf) {
                u[e] = v;
            }
        }
        Ok(())
    }

    pub fn sample(&self, model: &Model, ws: &WeightSystem, seed: u64) -> Result<Environment> {
        let mut u = vec![0.0; model.n_edges()];
        let all: Vec<VertexId> = (0..model.n_vertices()).collect();
        self.sample_vertices(model, seed, &all, &mut u)?;
        Environment::from_u(model, ws, u)
    }
}

/// One vertex sample with stream `(seed, VERTEX, x)`.
pub fn sample_u_vertex(model: &Model, ws: &WeightSystem, x: VertexId, seed: u64) -> Result<crate::hypergeom::SimplexPoint> {
    let s = HypergeomSampler::new(ws.vertex_params(model, x)?)?;
    let mut rng = rng::stream(seed, &[rng::tags::VERTEX, x as u64]);
    let mut out = vec![0.0; model.graph.out_edges(x).len()];
    s.sample_into(&mut rng, &mut out, x)?;
    crate::hypergeom::SimplexPoint::new(out)
}

pub fn sample_environment(model: &Model, ws: &WeightSystem, seed: u64) -> Result<Environment> {
    EnvironmentSampler::new(model, ws)?.sample(model, ws, seed)
}

/// `ln prod_e u~_e^{-theta_e}` with `u~_e = u_e / sum_{e'} Z_{e,e'} u_{e'}`.
pub fn ln_rn_weight(model: &Model, env: &Environment, ws: &WeightSystem, theta: &[f64]) -> Result<f64> {
    if theta.len() != model.n_edges() {
        return Err(Error::Params("theta needs one entry per edge".into()));
    }
    if theta.iter().any(|t| !(*t >= 0.0)) {
        return Err(Error::Params("theta must be nonnegative".into()));
    }
    let mut acc = 0.0;
    for (e, &t) in theta.iter().enumerate() {
        if t == 0.0 {
            continue;
        }
        let mix: f64 = model.arcs.out_arcs(e).iter().map(|&a| ws.z[a] * env.u[model.arcs.dst(a)]).sum();
        acc -= t * (env.u[e] / mix).ln();
    }
    Ok(acc)
}

pub fn rn_weight(model: &Model, env: &Environment, ws: &WeightSystem, theta: &[f64]) -> Result<f64> {
    ln_rn_weight(model, env, ws, theta).map(f64::exp)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MomentMode {
    Rejection,
    Importance,
}

/// Vertices whose `u` determines `omega` on the support of `xi`.
pub fn vertices_of_arcs(model: &Model, xi: &[f64]) -> Vec<VertexId> {
    let mut seen = vec![false; model.n_vertices()];
    for (a, &v) in xi.iter().enumerate() {
        if v != 0.0 {
            seen[model.graph.head(model.arcs.src(a))] = true;
        }
    }
    (0..model.n_vertices()).filter(|&x| seen[x]).collect()
}

/// Monte Carlo estimate of `E[omega^xi]` under the weight system.
///
/// In importance mode the draws are Dirichlet proposals weighted by the
/// mixing factor and the estimate is self-normalized, with a delta-method
/// standard error.
pub fn moments_mc(
    model: &Model,
    ws: &WeightSystem,
    xi: &[f64],
    n_samples: usize,
    seed: u64,
    mode: MomentMode,
) -> Result<Estimate> {
    if xi.len() != model.n_arcs() {
        return Err(Error::Params("xi needs one entry per arc".into()));
    }
    if n_samples < 2 {
        return Err(Error::Params("need at least two samples".into()));
    }
    // validity of the target tilt
    ws.with_tilt(model, ws.xi.iter().zip(xi).map(|(a, b)| a + b).collect())?;
    let verts = vertices_of_arcs(model, xi);
    if verts.is_empty() {
        return Ok(Estimate { mean: 1.0, std_error: 0.0, n_samples });
    }
    let sampler = EnvironmentSampler::new(model, ws)?;
    let mut u = vec![0.0; model.n_edges()];
    match mode {
        MomentMode::Rejection => {
            let mut xs = Vec::with_capacity(n_samples);
            for r in 0..n_samples {
                let seed_r = rng::stream_id(seed, &[rng::tags::MOMENTS, r as u64]);
                sampler.sample_vertices(model, seed_r, &verts, &mut u)?;
                xs.push(ln_power_local(model, &ws.z, &u, xi).exp());
            }
            Ok(Estimate::from_samples(&xs))
        }
        MomentMode::Importance => {
            let mut ys = Vec::with_capacity(n_samples);
            let mut lws = Vec::with_capacity(n_samples);
            let dirichlets: Vec<Option<DirichletSampler>> = (0..model.n_vertices())
                .map(|x| {
                    if verts.contains(&x) {
                        Some(DirichletSampler::new(sampler.vertex(x).params().alpha()))
                    } else {
                        None
                    }
                    .transpose()
                })
                .collect::<Result<_>>()?;
            for r in 0..n_samples {
                let mut lw = 0.0;
                for &x in &verts {
                    let mut rng = rng::stream(seed, &[rng::tags::MOMENTS, r as u64, x as u64]);
                    let d = dirichlets[x].as_ref().unwrap();
                    let prop = d.sample(&mut rng);
                    lw -= sampler.vertex(x).params().ln_mixing(&prop);
                    for (&e, &v) in model.graph.out_edges(x).iter().zip(&prop) {
                        u[e] = v;
                    }
                }
                lws.push(lw);
                ys.push(ln_power_local(model, &ws.z, &u, xi).exp());
            }
            let m = lws.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = lws.iter().map(|l| (l - m).exp()).collect();
            let sw: f64 = w.iter().sum();
            let mean = w.iter().zip(&ys).map(|(w, y)| w * y).sum::<f64>() / sw;
            let var = w.iter().zip(&ys).map(|(w, y)| (w * (y - mean)).powi(2)).sum::<f64>() / (sw * sw);
            Ok(Estimate { mean, std_error: var.sqrt(), n_samples })
        }
    }
}

/// `ln omega^xi` computed from `u` on the arcs in the support of `xi`.
pub fn ln_power_local(model: &Model, z: &[f64], u: &[f64], xi: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (a, &t) in xi.iter().enumerate() {
        if t == 0.0 {
            continue;
        }
        let e = model.arcs.src(a);
        let total: f64 = model.arcs.out_arcs(e).iter().map(|&b| z[b] * u[model.arcs.dst(b)]).sum();
        acc += t * (z[a] * u[model.arcs.dst(a)] / total).ln();
    }
    acc
}

/// `E[omega^xi] = Z^xi F(alpha; tilt + xi) / F(alpha; tilt)` by quadrature.
pub fn moment_exact(model: &Model, ws: &WeightSystem, xi: &[f64], tol: f64) -> Result<f64> {
    if xi.len() != model.n_arcs() {
        return Err(Error::Params("xi needs one entry per arc".into()));
    }
    let ln_z: f64 = xi.iter().zip(&ws.z).filter(|(x, _)| **x != 0.0).map(|(x, z)| x * z.ln()).sum();
    Ok((ln_z + ln_f_ratio(model, ws, xi, tol)?).exp())
}
