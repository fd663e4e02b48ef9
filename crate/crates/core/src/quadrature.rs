//! Gauss–Jacobi rules and tensor quadrature over the simplex.
//!
//! The stick-breaking map `u_k = t_k * prod_{m<k} (1 - t_m)` turns the weight
//! `prod u_i^{alpha_i - 1} du` into the product of the Beta weights
//! `t_k^{alpha_k - 1} (1 - t_k)^{S_k - 1}` with `S_k = sum_{i>k} alpha_i`, so
//! boundary singularities are carried by the rule weights and the remaining
//! integrand is smooth.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Gauss rule on `[0, 1]` for the probability weight
/// `t^{a-1} (1-t)^{b-1} / B(a, b)`.
#[derive(Debug, Clone)]
pub struct BetaRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl BetaRule {
    pub fn new(a: f64, b: f64, m: usize) -> Self {
        assert!(a > 0.0 && b > 0.0 && m > 0);
        // Jacobi weight (1-x)^p (1+x)^q on [-1, 1] with t = (1 + x) / 2.
        let p = b - 1.0;
        let q = a - 1.0;
        let mut jac = DMatrix::<f64>::zeros(m, m);
        for k in 0..m {
            let kf = k as f64;
            let s = 2.0 * kf + p + q;
            jac[(k, k)] = if k == 0 { (q - p) / (p + q + 2.0) } else { (q * q - p * p) / (s * (s + 2.0)) };
            if k + 1 < m {
                let k1 = kf + 1.0;
                let s1 = 2.0 * k1 + p + q;
                let beta = if k == 0 {
                    4.0 * (1.0 + p) * (1.0 + q) / ((2.0 + p + q).powi(2) * (3.0 + p + q))
                } else {
                    4.0 * k1 * (k1 + p) * (k1 + q) * (k1 + p + q) / (s1 * s1 * (s1 + 1.0) * (s1 - 1.0))
                };
                jac[(k, k + 1)] = beta.sqrt();
                jac[(k + 1, k)] = beta.sqrt();
            }
        }
        let eig = SymmetricEigen::new(jac);
        let mut pairs: Vec<(f64, f64)> = (0..m)
            .map(|i| ((1.0 + eig.eigenvalues[i]) / 2.0, eig.eigenvectors[(0, i)].powi(2)))
            .collect();
        pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        Self {
            nodes: pairs.iter().map(|p| p.0.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)).collect(),
            weights: pairs.iter().map(|p| p.1 / total).collect(),
        }
    }
}

thread_local! {
    static RULES: RefCell<HashMap<(u64, u64, usize), Rc<BetaRule>>> = RefCell::new(HashMap::new());
}

fn cached_rule(a: f64, b: f64, m: usize) -> Rc<BetaRule> {
    RULES.with(|cache| {
        let mut cache = cache.borrow_mut();
        if cache.len() > 4096 {
            cache.clear();
        }
        cache.entry((a.to_bits(), b.to_bits(), m)).or_insert_with(|| Rc::new(BetaRule::new(a, b, m))).clone()
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    /// Expectation of the integrand under the Dirichlet(alpha) law.
    pub value: f64,
    pub error_estimate: f64,
    /// Rule order per dimension at convergence.
    pub order: usize,
}

const MAX_NODES: usize = 1 << 22;

fn max_order(dims: usize) -> usize {
    let mut m: usize = 8;
    while m < 1024 && (2 * m).checked_pow(dims as u32).is_some_and(|t| t <= MAX_NODES) {
        m *= 2;
    }
    m
}

/// Tensor rule evaluation of `E_{Dirichlet(alpha)}[f(u)]` at a fixed order.
pub fn dirichlet_expectation_fixed<F: FnMut(&[f64]) -> f64>(alpha: &[f64], m: usize, f: &mut F) -> f64 {
    let n = alpha.len();
    if n == 1 {
        return f(&[1.0]);
    }
    let rules: Vec<Rc<BetaRule>> = (0..n - 1)
        .map(|k| cached_rule(alpha[k], alpha[k + 1..].iter().sum(), m))
        .collect();
    let mut u = vec![0.0; n];
    let mut idx = vec![0usize; n - 1];
    let mut total = 0.0;
    loop {
        let mut rest = 1.0;
        let mut w = 1.0;
        for k in 0..n - 1 {
            let t = rules[k].nodes[idx[k]];
            w *= rules[k].weights[idx[k]];
            u[k] = rest * t;
            rest *= 1.0 - t;
        }
        u[n - 1] = rest;
        total += w * f(&u);
        // odometer
        let mut k = n - 1;
        loop {
            if k == 0 {
                return total;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < m {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// `E_{Dirichlet(alpha)}[f(u)]` with order doubling until two successive
/// estimates agree to relative tolerance `tol`.
pub fn dirichlet_expectation<F: FnMut(&[f64]) -> f64>(alpha: &[f64], tol: f64, mut f: F) -> Result<QuadResult> {
    if !(tol > 0.0) {
        return Err(Error::Params("quadrature tolerance must be positive".into()));
    }
    if let Some(a) = alpha.iter().find(|a| !(**a > 0.0)) {
        return Err(Error::Params(format!("Dirichlet parameters must be positive, got {a}")));
    }
    let n = alpha.len();
    if n == 0 {
        return Err(Error::Params("empty simplex".into()));
    }
    if n == 1 {
        return Ok(QuadResult { value: f(&[1.0]), error_estimate: 0.0, order: 0 });
    }
    let dims = n - 1;
    let cap = max_order(dims);
    let mut m = 8;
    let mut prev = dirichlet_expectation_fixed(alpha, m, &mut f);
    let mut last_err = f64::INFINITY;
    while 2 * m <= cap {
        m *= 2;
        let cur = dirichlet_expectation_fixed(alpha, m, &mut f);
        last_err = (cur - prev).abs();
        if last_err <= tol * cur.abs() {
            return Ok(QuadResult { value: cur, error_estimate: last_err, order: m });
        }
        prev = cur;
    }
    Err(Error::Quadrature { tol, estimate: last_err / prev.abs(), dim: n })
}
