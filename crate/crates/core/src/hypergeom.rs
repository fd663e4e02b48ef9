//! Hypergeometric simplex integrals
//! `Phi(alpha, beta, Z) = int_simplex prod u_i^{alpha_i - 1} prod_j (Z u)_j^{-beta_j} du`,
//! their duality, and the vertex products built from them.

use serde::{Deserialize, Serialize};

use crate::environment::WeightSystem;
use crate::error::{Error, Result};
use crate::graph::{ArcId, Model, VertexId};
use crate::quadrature::dirichlet_expectation;
use crate::rng::{self, DirichletSampler};
use crate::special::ln_beta_multivariate;

pub use crate::special::beta_multivariate;

/// A point of the open simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexPoint(Vec<f64>);

impl SimplexPoint {
    pub fn new(u: Vec<f64>) -> Result<Self> {
        if u.is_empty() {
            return Err(Error::Params("simplex point needs at least one coordinate".into()));
        }
        if let Some(x) = u.iter().find(|x| !(**x > 0.0 && **x <= 1.0)) {
            return Err(Error::Params(format!("simplex coordinates must lie in (0, 1], got {x}")));
        }
        let s: f64 = u.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(Error::Params(format!("simplex coordinates sum to {s}, not 1")));
        }
        Ok(Self(u))
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Parameters `(alpha, beta, Z)` with `Z` an `l x n` matrix stored by rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypergeomParams {
    alpha: Vec<f64>,
    beta: Vec<f64>,
    z: Vec<Vec<f64>>,
}

impl HypergeomParams {
    pub fn new(alpha: Vec<f64>, beta: Vec<f64>, z: Vec<Vec<f64>>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::Params("alpha must be nonempty".into()));
        }
        if let Some(a) = alpha.iter().chain(&beta).find(|a| !(**a > 0.0) || !a.is_finite()) {
            return Err(Error::Params(format!("alpha and beta must be strictly positive, got {a}")));
        }
        if z.len() != beta.len() {
            return Err(Error::Params(format!("Z has {} rows but beta has {} entries", z.len(), beta.len())));
        }
        for row in &z {
            if row.len() != alpha.len() {
                return Err(Error::Params(format!(
                    "Z rows must have {} columns, found {}",
                    alpha.len(),
                    row.len()
                )));
            }
            if let Some(v) = row.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
                return Err(Error::Params(format!("Z entries must be strictly positive, got {v}")));
            }
        }
        Ok(Self { alpha, beta, z })
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn z(&self) -> &[Vec<f64>] {
        &self.z
    }

    pub fn n(&self) -> usize {
        self.alpha.len()
    }

    pub fn l(&self) -> usize {
        self.beta.len()
    }

    pub fn imbalance(&self) -> f64 {
        self.alpha.iter().sum::<f64>() - self.beta.iter().sum::<f64>()
    }

    pub fn is_balanced(&self) -> bool {
        let scale = self.alpha.iter().sum::<f64>().max(1.0);
        self.imbalance().abs() <= 1e-10 * scale
    }

    /// `(beta, alpha, Z^t)`.
    pub fn dual(&self) -> Self {
        let zt = (0..self.n()).map(|i| self.z.iter().map(|row| row[i]).collect()).collect();
        Self { alpha: self.beta.clone(), beta: self.alpha.clone(), z: zt }
    }

    /// `sum_j beta_j ln (Z u)_j`.
    pub fn ln_mixing(&self, u: &[f64]) -> f64 {
        self.z
            .iter()
            .zip(&self.beta)
            .map(|(row, &b)| b * row.iter().zip(u).map(|(z, x)| z * x).sum::<f64>().ln())
            .sum()
    }

    /// `-sum_j beta_j ln min_i Z_ji`: log of the upper envelope of the mixing factor.
    pub fn ln_envelope(&self) -> f64 {
        -self
            .z
            .iter()
            .zip(&self.beta)
            .map(|(row, &b)| b * row.iter().cloned().fold(f64::INFINITY, f64::min).ln())
            .sum::<f64>()
    }

    /// `-sum_j beta_j ln max_i Z_ji`: log of the lower bound of the mixing factor.
    pub fn ln_floor(&self) -> f64 {
        -self
            .z
            .iter()
            .zip(&self.beta)
            .map(|(row, &b)| b * row.iter().cloned().fold(0.0, f64::max).ln())
            .sum::<f64>()
    }
}

/// Monte Carlo scalar summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_samples: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        assert!(n >= 1, "an estimate needs at least one sample");
        let mean = crate::special::neumaier_sum(xs.iter().copied()) / n as f64;
        let std_error = if n >= 2 {
            let ss = crate::special::neumaier_sum(xs.iter().map(|x| (x - mean).powi(2)));
            (ss / (n - 1) as f64).sqrt() / (n as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std_error, n_samples: n }
    }

    pub fn exact(value: f64) -> Self {
        Self { mean: value, std_error: 0.0, n_samples: 1 }
    }

    /// z-score of the difference to a known value.
    pub fn z_vs(&self, value: f64) -> f64 {
        z_score(self.mean - value, self.std_error)
    }

    /// z-score of `other - self` with pooled standard error.
    pub fn z_diff(&self, other: &Estimate) -> f64 {
        z_score(other.mean - self.mean, self.std_error.hypot(other.std_error))
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { mean: self.mean * c, std_error: self.std_error * c.abs(), n_samples: self.n_samples }
    }
}

fn z_score(diff: f64, se: f64) -> f64 {
    if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    }
}

/// `ln phi(alpha, beta, Z; u)`.
pub fn ln_phi_density(p: &HypergeomParams, u: &SimplexPoint) -> Result<f64> {
    let u = u.coords();
    if u.len() != p.n() {
        return Err(Error::Params(format!("point has {} coordinates, expected {}", u.len(), p.n())));
    }
    let mut acc = -p.ln_mixing(u);
    for (&x, &a) in u.iter().zip(p.alpha()) {
        if x <= crate::rng::MIN_COORD && a < 1.0 {
            return Err(Error::Params("density diverges on the simplex boundary".into()));
        }
        acc += (a - 1.0) * x.ln();
    }
    Ok(acc)
}

pub fn phi_density(p: &HypergeomParams, u: &SimplexPoint) -> Result<f64> {
    ln_phi_density(p, u).map(f64::exp)
}

/// `ln Phi` by quadrature, with relative tolerance `tol`.
///
/// The integral is `B(alpha) * c * E_Dir(alpha)[g]` with `c` the envelope and
/// `g = prod (Z u)^{-beta} / c` in `(0, 1]`; the computed expectation is
/// checked against the a priori bounds on `g`.
pub fn ln_phi_quadrature(p: &HypergeomParams, tol: f64) -> Result<f64> {
    let ln_b = ln_beta_multivariate(p.alpha())?;
    let ln_c = p.ln_envelope();
    if p.l() == 0 {
        return Ok(ln_b);
    }
    let constant_rows = p.z().iter().all(|row| row.iter().all(|&v| v == row[0]));
    let value = if constant_rows {
        1.0
    } else {
        dirichlet_expectation(p.alpha(), tol, |u| (-p.ln_mixing(u) - ln_c).exp())?.value
    };
    let lower = (p.ln_floor() - ln_c).exp();
    let slack = 10.0 * tol + 1e-14;
    if value > 1.0 + slack || value < lower * (1.0 - slack) {
        return Err(Error::Numerical(format!(
            "quadrature value {value} outside the a priori bounds [{lower}, 1]"
        )));
    }
    Ok(ln_b + ln_c + value.ln())
}

pub fn phi_quadrature(p: &HypergeomParams, tol: f64) -> Result<f64> {
    ln_phi_quadrature(p, tol).map(f64::exp)
}

/// Unbiased estimator `B(alpha) * mean of prod (Z u)^{-beta}` over
/// Dirichlet(alpha) draws.
pub fn phi_mc(p: &HypergeomParams, n_samples: usize, seed: u64) -> Result<Estimate> {
    if n_samples < 2 {
        return Err(Error::Params("phi_mc needs at least two samples".into()));
    }
    let b = beta_multivariate(p.alpha())?;
    let sampler = DirichletSampler::new(p.alpha())?;
    let mut rng = rng::stream(seed, &[rng::tags::PHI_MC]);
    let mut u = vec![0.0; p.n()];
    let xs: Vec<f64> = (0..n_samples)
        .map(|_| {
            sampler.sample_into(&mut rng, &mut u);
            b * (-p.ln_mixing(&u)).exp()
        })
        .collect();
    Ok(Estimate::from_samples(&xs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualityResidual {
    /// `B(alpha)^{-1} Phi(alpha, beta, Z)`.
    pub lhs: f64,
    /// `B(beta)^{-1} Phi(beta, alpha, Z^t)`.
    pub rhs: f64,
    pub residual: f64,
    pub relative: f64,
}

pub fn duality_residual(p: &HypergeomParams, tol: f64) -> Result<DualityResidual> {
    if !p.is_balanced() {
        return Err(Error::Params(format!(
            "duality needs sum(alpha) = sum(beta); imbalance is {}",
            p.imbalance()
        )));
    }
    let q = p.dual();
    let lhs = (ln_phi_quadrature(p, tol)? - ln_beta_multivariate(p.alpha())?).exp();
    let rhs = (ln_phi_quadrature(&q, tol)? - ln_beta_multivariate(q.alpha())?).exp();
    let residual = lhs - rhs;
    Ok(DualityResidual { lhs, rhs, residual, relative: residual.abs() / lhs.abs().max(rhs.abs()) })
}

/// `ln F(alpha; xi; Z) = sum_x ln Phi_x` for the weight system with tilt `xi`
/// (or the weight system's own tilt when `xi` is `None`).
///
/// Vertices with identical parameters are evaluated once.
pub fn ln_f_product(model: &Model, ws: &WeightSystem, xi: Option<&[f64]>, tol: f64) -> Result<f64> {
    let ws = match xi {
        Some(xi) => ws.with_tilt(model, xi.to_vec())?,
        None => ws.clone(),
    };
    let mut memo: std::collections::BTreeMap<Vec<u64>, f64> = Default::default();
    let mut total = 0.0;
    for x in 0..model.n_vertices() {
        let p = ws.vertex_params(model, x)?;
        let key: Vec<u64> = p
            .alpha()
            .iter()
            .chain(p.beta())
            .chain(p.z().iter().flatten())
            .map(|v| v.to_bits())
            .chain([p.n() as u64])
            .collect();
        let v = match memo.get(&key) {
            Some(&v) => v,
            None => {
                let v = ln_phi_quadrature(&p, tol)?;
                memo.insert(key, v);
                v
            }
        };
        total += v;
    }
    Ok(total)
}

pub fn f_product(model: &Model, ws: &WeightSystem, xi: Option<&[f64]>, tol: f64) -> Result<f64> {
    ln_f_product(model, ws, xi, tol).map(f64::exp)
}

/// `ln [Phi_x(tilted) / Phi_x(base)]` summed over the vertices touched by `xi`.
pub fn ln_f_ratio(model: &Model, ws: &WeightSystem, xi: &[f64], tol: f64) -> Result<f64> {
    let tilted = ws.with_tilt(model, ws.xi.iter().zip(xi).map(|(a, b)| a + b).collect())?;
    let mut touched = vec![false; model.n_vertices()];
    for (a, &v) in xi.iter().enumerate() {
        if v != 0.0 {
            touched[model.graph.head(model.arcs.src(a))] = true;
        }
    }
    let mut total = 0.0;
    for x in (0..model.n_vertices()).filter(|&x| touched[x]) {
        total += ln_phi_quadrature(&tilted.vertex_params(model, x)?, tol)?;
        total -= ln_phi_quadrature(&ws.vertex_params(model, x)?, tol)?;
    }
    Ok(total)
}

/// `E[omega(a)^s] = Z_a^s Phi_x(alpha + s delta_a) / Phi_x(alpha)` where the
/// tilt `s delta_a` raises the exponent of the target edge and the weight of
/// the source edge at the shared vertex.
pub fn marginal_moment(model: &Model, ws: &WeightSystem, arc: ArcId, s: f64, tol: f64) -> Result<f64> {
    let e = model.arcs.src(arc);
    let f = model.arcs.dst(arc);
    let window = ws.in_exponent(e).min(ws.out_exponent(f));
    if !(s > -window) {
        return Err(Error::Params(format!("moment order {s} outside the finiteness window (-{window}, inf)")));
    }
    if s == 0.0 {
        return Ok(1.0);
    }
    let mut xi = vec![0.0; model.n_arcs()];
    xi[arc] = s;
    Ok((s * ws.z[arc].ln() + ln_f_ratio(model, ws, &xi, tol)?).exp())
}

/// The vertex at which arc `a` is taken.
pub fn arc_vertex(model: &Model, a: ArcId) -> VertexId {
    model.graph.head(model.arcs.src(a))
}
