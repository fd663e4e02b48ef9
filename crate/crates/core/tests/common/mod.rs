//! Independent numerical oracles shared by the integration tests.
//!
//! Nothing here calls the crate's quadrature or solvers: the integrals use
//! double-exponential rules, the linear algebra is dense.
#![allow(dead_code)]

use std::f64::consts::FRAC_PI_2;

use hyperwalk::chain::CycleOnArcs;
use hyperwalk::graph::{ArcGraph, Model};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Tanh-sinh rule on `[0, 1]`. The integrand receives `(x, 1 - x)` with both
/// coordinates accurate near the endpoints.
pub fn tanh_sinh<F: FnMut(f64, f64) -> f64>(mut f: F) -> f64 {
    let h = 1.0 / 64.0;
    let mut acc = 0.0;
    let kmax = (4.5 / h) as i64;
    for k in -kmax..=kmax {
        let t = k as f64 * h;
        let s = FRAC_PI_2 * t.sinh();
        let x = 1.0 / (1.0 + (-2.0 * s).exp());
        let y = 1.0 / (1.0 + (2.0 * s).exp());
        if x <= 0.0 || y <= 0.0 {
            continue;
        }
        let w = FRAC_PI_2 * t.cosh() * 2.0 * x * y;
        acc += w * f(x, y);
    }
    acc * h
}

/// Exp-sinh rule on `[0, inf)`.
pub fn exp_sinh<F: FnMut(f64) -> f64>(mut f: F) -> f64 {
    let h = 1.0 / 64.0;
    let mut acc = 0.0;
    let kmax = (5.0 / h) as i64;
    for k in -kmax..=kmax {
        let t = k as f64 * h;
        let v = (FRAC_PI_2 * t.sinh()).exp();
        if v == 0.0 || !v.is_finite() {
            continue;
        }
        let fv = f(v);
        if fv != 0.0 {
            acc += fv * v * FRAC_PI_2 * t.cosh();
        }
    }
    acc * h
}

/// `ln prod_j (Z_j . u)^{-beta_j}`.
fn ln_mixing(beta: &[f64], z: &[Vec<f64>], u: &[f64]) -> f64 {
    beta.iter().zip(z).map(|(b, row)| -b * row.iter().zip(u).map(|(a, c)| a * c).sum::<f64>().ln()).sum()
}

/// Unnormalized density of `u_1` for `n = 2`, from `(u_1, u_2)`.
pub fn density2(alpha: &[f64], beta: &[f64], z: &[Vec<f64>], x: f64, y: f64) -> f64 {
    ((alpha[0] - 1.0) * x.ln() + (alpha[1] - 1.0) * y.ln() + ln_mixing(beta, z, &[x, y])).exp()
}

/// `Phi(alpha, beta, Z)` for `n <= 3` by nested tanh-sinh rules.
pub fn phi_oracle(alpha: &[f64], beta: &[f64], z: &[Vec<f64>]) -> f64 {
    match alpha.len() {
        1 => ln_mixing(beta, z, &[1.0]).exp(),
        2 => tanh_sinh(|x, y| density2(alpha, beta, z, x, y)),
        3 => tanh_sinh(|x, xc| {
            // u = (x, xc * y, xc * (1 - y)), Jacobian xc
            let inner = tanh_sinh(|y, yc| {
                let u = [x, xc * y, xc * yc];
                let ln = (alpha[0] - 1.0) * u[0].ln()
                    + (alpha[1] - 1.0) * u[1].ln()
                    + (alpha[2] - 1.0) * u[2].ln()
                    + ln_mixing(beta, z, &u);
                ln.exp()
            });
            inner * xc
        }),
        n => panic!("oracle supports n <= 3, got {n}"),
    }
}

pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

/// `prod Gamma(a_i) / Gamma(sum a_i)`.
pub fn beta_fn(a: &[f64]) -> f64 {
    (a.iter().map(|&x| ln_gamma(x)).sum::<f64>() - ln_gamma(a.iter().sum())).exp()
}

pub fn transpose(z: &[Vec<f64>]) -> Vec<Vec<f64>> {
    (0..z[0].len()).map(|i| z.iter().map(|r| r[i]).collect()).collect()
}

/// Stationary law by a dense solve of `pi (I - P) = 0`, `sum pi = 1`.
pub fn stationary_dense(arcs: &ArcGraph, omega: &[f64]) -> Vec<f64> {
    let n = arcs.n_nodes();
    let mut a = DMatrix::<f64>::zeros(n, n);
    for k in 0..arcs.n_arcs() {
        // row j of (I - P)^T
        a[(arcs.dst(k), arcs.src(k))] -= omega[k];
    }
    for i in 0..n {
        a[(i, i)] += 1.0;
    }
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    a.lu().solve(&b).expect("irreducible chain").iter().copied().collect()
}

/// Expected visits to `root` (time 0 included) before entering a killed edge.
pub fn green_dense(arcs: &ArcGraph, omega: &[f64], root: usize, killed: &[bool]) -> f64 {
    let n = arcs.n_nodes();
    let mut a = DMatrix::<f64>::identity(n, n);
    for k in 0..arcs.n_arcs() {
        let (e, f) = (arcs.src(k), arcs.dst(k));
        if !killed[e] && !killed[f] {
            a[(e, f)] -= omega[k];
        }
    }
    let mut b = DVector::<f64>::zeros(n);
    b[root] = 1.0;
    // G(root, root) = ((I - Q)^{-1})_{root, root}
    a.lu().solve(&b).expect("transient chain")[root]
}

/// `P_root[H_target < H+_root]` by a dense first-step solve.
pub fn escape_dense(arcs: &ArcGraph, omega: &[f64], root: usize, target: usize) -> f64 {
    let n = arcs.n_nodes();
    let mut a = DMatrix::<f64>::identity(n, n);
    let mut b = DVector::<f64>::zeros(n);
    for k in 0..arcs.n_arcs() {
        let (e, f) = (arcs.src(k), arcs.dst(k));
        if e == target || e == root {
            continue;
        }
        if f == target {
            b[e] += omega[k];
        } else if f != root {
            a[(e, f)] -= omega[k];
        }
    }
    let q = a.lu().solve(&b).expect("nonsingular");
    arcs.out_arcs(root)
        .iter()
        .map(|&k| {
            let f = arcs.dst(k);
            omega[k] * if f == target { 1.0 } else if f == root { 0.0 } else { q[f] }
        })
        .sum()
}

/// Random strongly connected multigraph: a Hamiltonian cycle plus extra
/// edges (loops and parallel edges allowed), with at most `max_arcs` arcs.
pub fn random_graph<R: Rng>(rng: &mut R, max_vertices: usize, max_arcs: usize) -> Model {
    loop {
        let n = rng.random_range(2..=max_vertices);
        let mut edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        let extra = rng.random_range(0..=2 * n);
        for _ in 0..extra {
            edges.push((rng.random_range(0..n), rng.random_range(0..n)));
        }
        let m = Model::from_edges(n, &edges).expect("cycle makes it strongly connected");
        if m.n_arcs() <= max_arcs {
            return m;
        }
    }
}

/// Random closed walk of length at most `max_len` through a random edge.
pub fn random_cycle<R: Rng>(rng: &mut R, arcs: &ArcGraph, max_len: usize) -> CycleOnArcs {
    loop {
        let start = rng.random_range(0..arcs.n_nodes());
        let mut edges = vec![start];
        let mut e = start;
        for _ in 0..max_len {
            let outs = arcs.out_arcs(e);
            e = arcs.dst(outs[rng.random_range(0..outs.len())]);
            if e == start {
                return CycleOnArcs::new(arcs, edges).unwrap();
            }
            edges.push(e);
        }
    }
}

pub fn uniform_vec<R: Rng>(rng: &mut R, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..=hi)).collect()
}
