//! Linear algebra for finite Markov chains.
//!
//! [`Eliminator`] performs sparse state elimination (the Grassmann–Taksar–
//! Heyman variant of Gaussian elimination) with a dynamic minimum-Markowitz
//! ordering. It never subtracts, so stationary laws and absorption
//! probabilities keep full relative accuracy even when transition
//! probabilities span hundreds of orders of magnitude.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const NONE: usize = usize::MAX;

struct Record {
    state: usize,
    out_mass: f64,
    preds: Vec<(usize, f64)>,
}

/// Sparse transition structure undergoing state elimination.
pub struct Eliminator {
    out: Vec<Vec<(usize, f64)>>,
    inn: Vec<Vec<usize>>,
    diag: Vec<f64>,
    alive: Vec<bool>,
    records: Vec<Record>,
    pos: Vec<usize>,
}

impl Eliminator {
    /// `transitions` yields `(from, to, probability)`; repeated pairs add up.
    pub fn new<I: IntoIterator<Item = (usize, usize, f64)>>(n: usize, transitions: I) -> Self {
        let mut out: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let mut inn: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut diag = vec![0.0; n];
        let mut pos = vec![NONE; n];
        let mut buckets: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, j, p) in transitions {
            buckets[i].push((j, p));
        }
        for (i, b) in buckets.into_iter().enumerate() {
            for (j, p) in b {
                if p == 0.0 {
                    continue;
                }
                if i == j {
                    diag[i] += p;
                } else if pos[j] != NONE {
                    out[i][pos[j]].1 += p;
                } else {
                    pos[j] = out[i].len();
                    out[i].push((j, p));
                    inn[j].push(i);
                }
            }
            for &(j, _) in &out[i] {
                pos[j] = NONE;
            }
        }
        Self { out, inn, diag, alive: vec![true; n], records: Vec::new(), pos }
    }

    fn cost(&self, k: usize) -> usize {
        self.inn[k].len().saturating_mul(self.out[k].len())
    }

    fn eliminate(&mut self, k: usize) -> Result<()> {
        let row = std::mem::take(&mut self.out[k]);
        let s: f64 = row.iter().map(|p| p.1).sum();
        if !(s > 0.0) {
            return Err(Error::Numerical(format!("state {k} has no exit during elimination")));
        }
        let preds_idx = std::mem::take(&mut self.inn[k]);
        let mut preds = Vec::with_capacity(preds_idx.len());
        for &i in &preds_idx {
            let r = &mut self.out[i];
            let at = r.iter().position(|p| p.0 == k).expect("in-list and out-list agree");
            let p_ik = r.swap_remove(at).1;
            preds.push((i, p_ik));
            for (idx, &(j, _)) in r.iter().enumerate() {
                self.pos[j] = idx;
            }
            for &(j, p_kj) in &row {
                let v = p_ik * (p_kj / s);
                if j == i {
                    self.diag[i] += v;
                } else if self.pos[j] != NONE {
                    r[self.pos[j]].1 += v;
                } else {
                    self.pos[j] = r.len();
                    r.push((j, v));
                    self.inn[j].push(i);
                }
            }
            for &(j, _) in r.iter() {
                self.pos[j] = NONE;
            }
        }
        for &(j, _) in &row {
            let l = &mut self.inn[j];
            if let Some(at) = l.iter().position(|&i| i == k) {
                l.swap_remove(at);
            }
        }
        self.alive[k] = false;
        self.records.push(Record { state: k, out_mass: s, preds });
        Ok(())
    }

    /// Eliminates every state not marked in `keep`, cheapest first.
    /// When `keep` is empty, eliminates all but one state.
    pub fn eliminate_all_except(&mut self, keep: &[bool]) -> Result<()> {
        let n = self.alive.len();
        let keep_any = keep.iter().any(|&k| k);
        let mut heap: BinaryHeap<Reverse<(usize, usize)>> = (0..n)
            .filter(|&k| self.alive[k] && !keep.get(k).copied().unwrap_or(false))
            .map(|k| Reverse((self.cost(k), k)))
            .collect();
        let mut remaining = (0..n).filter(|&k| self.alive[k] && !keep.get(k).copied().unwrap_or(false)).count();
        let stop = if keep_any { 0 } else { 1 };
        while remaining > stop {
            let Reverse((c, k)) = heap.pop().expect("heap holds every live state");
            if !self.alive[k] || c != self.cost(k) {
                continue;
            }
            let touched: Vec<usize> = self.inn[k].iter().copied().chain(self.out[k].iter().map(|p| p.0)).collect();
            self.eliminate(k)?;
            remaining -= 1;
            for t in touched {
                if self.alive[t] && !keep.get(t).copied().unwrap_or(false) {
                    heap.push(Reverse((self.cost(t), t)));
                }
            }
        }
        Ok(())
    }

    /// Reduced transition weight `from -> to` among the live states.
    pub fn weight(&self, from: usize, to: usize) -> f64 {
        if from == to {
            return self.diag[from];
        }
        self.out[from].iter().find(|p| p.0 == to).map_or(0.0, |p| p.1)
    }

    /// Back substitution after reducing to a single state.
    fn stationary(&self) -> Vec<f64> {
        let n = self.alive.len();
        let mut pi = vec![0.0; n];
        for k in 0..n {
            if self.alive[k] {
                pi[k] = 1.0;
            }
        }
        for rec in self.records.iter().rev() {
            let v: f64 = rec.preds.iter().map(|&(i, p)| pi[i] * p).sum();
            pi[rec.state] = v / rec.out_mass;
        }
        pi
    }
}

/// Stationary law of an irreducible chain by state elimination.
pub fn stationary_gth<I: IntoIterator<Item = (usize, usize, f64)>>(n: usize, transitions: I) -> Result<Vec<f64>> {
    let mut el = Eliminator::new(n, transitions);
    el.eliminate_all_except(&[])?;
    let mut pi = el.stationary();
    let total = crate::special::neumaier_sum(pi.iter().copied());
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Numerical("stationary solve produced no mass".into()));
    }
    for p in pi.iter_mut() {
        *p /= total;
    }
    Ok(pi)
}

/// Power iteration on the lazy chain `(I + P) / 2`.
pub fn stationary_power<I: IntoIterator<Item = (usize, usize, f64)>>(
    n: usize,
    transitions: I,
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let t: Vec<(usize, usize, f64)> = transitions.into_iter().collect();
    let mut pi = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    for _ in 0..max_iter {
        next.iter_mut().zip(&pi).for_each(|(x, p)| *x = 0.5 * p);
        for &(i, j, p) in &t {
            next[j] += 0.5 * pi[i] * p;
        }
        let s: f64 = next.iter().sum();
        let diff = next.iter().zip(&pi).map(|(a, b)| (a / s - b).abs()).fold(0.0, f64::max);
        for (p, x) in pi.iter_mut().zip(&next) {
            *p = x / s;
        }
        if diff < tol {
            return Ok(pi);
        }
    }
    Err(Error::Numerical("power iteration did not converge".into()))
}

/// Solves `x = W x + b` by symmetric Gauss–Seidel sweeps. Each state may
/// name a partner (or `usize::MAX`); partnered pairs are updated jointly by
/// an exact 2x2 solve, which removes the slow mode of a nearly closed
/// two-state trap. `rows[i]` lists `(j, W_ij)`.
pub fn gauss_seidel_pairs(
    rows: &[Vec<(usize, f64)>],
    b: &[f64],
    partner: &[usize],
    tol: f64,
    max_sweeps: usize,
) -> Result<Vec<f64>> {
    let n = rows.len();
    if b.len() != n || partner.len() != n {
        return Err(Error::Params("rows, b and partner must have equal length".into()));
    }
    if (0..n).any(|i| partner[i] != NONE && (partner[i] == i || partner[partner[i]] != i)) {
        return Err(Error::Params("partner map must be a symmetric matching".into()));
    }
    let coef = |i: usize, j: usize| rows[i].iter().filter(|p| p.0 == j).map(|p| p.1).sum::<f64>();
    let diag: Vec<f64> = (0..n).map(|i| coef(i, i)).collect();
    let pw: Vec<f64> = (0..n).map(|i| if partner[i] == NONE { 0.0 } else { coef(i, partner[i]) }).collect();
    let mut x = b.to_vec();
    let rest = |x: &[f64], i: usize, skip: usize| -> f64 {
        let mut s = b[i];
        for &(j, w) in &rows[i] {
            if j != i && j != skip {
                s += w * x[j];
            }
        }
        s
    };
    for sweep in 0..max_sweeps {
        let mut change: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for step in 0..n {
            let i = if sweep % 2 == 0 { step } else { n - 1 - step };
            let j = partner[i];
            if j == NONE {
                let v = rest(&x, i, NONE) / (1.0 - diag[i]);
                change = change.max((v - x[i]).abs());
                scale = scale.max(v.abs());
                x[i] = v;
            } else if (sweep % 2 == 0) == (i < j) {
                let (ri, rj) = (rest(&x, i, j), rest(&x, j, i));
                let (ai, aj) = (1.0 - diag[i], 1.0 - diag[j]);
                let det = ai * aj - pw[i] * pw[j];
                let vi = (ri * aj + pw[i] * rj) / det;
                let vj = (rj * ai + pw[j] * ri) / det;
                change = change.max((vi - x[i]).abs()).max((vj - x[j]).abs());
                scale = scale.max(vi.abs()).max(vj.abs());
                x[i] = vi;
                x[j] = vj;
            }
        }
        if !change.is_finite() {
            return Err(Error::Numerical("Gauss-Seidel iteration diverged".into()));
        }
        if change <= tol * scale.max(f64::MIN_POSITIVE) {
            return Ok(x);
        }
    }
    Err(Error::Numerical(format!("Gauss-Seidel did not converge in {max_sweeps} sweeps")))
}

/// Dense LU solve of `a x = b`.
pub fn dense_solve(a: DMatrix<f64>, b: DVector<f64>) -> Result<DVector<f64>> {
    a.lu().solve(&b).ok_or_else(|| Error::Numerical("singular linear system".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_state_closed_form() {
        let (p, q) = (0.3, 0.05);
        let pi = stationary_gth(2, [(0, 1, p), (0, 0, 1.0 - p), (1, 0, q), (1, 1, 1.0 - q)]).unwrap();
        assert!((pi[0] - q / (p + q)).abs() < 1e-15);
        assert!((pi[1] - p / (p + q)).abs() < 1e-15);
    }

    #[test]
    fn matches_dense_solve_on_random_chain() {
        let n = 7;
        let mut t = Vec::new();
        let mut x = 0.123f64;
        for i in 0..n {
            let mut row = Vec::new();
            for j in 0..n {
                x = (x * 3.7 + 0.31).fract();
                if x > 0.4 || j == (i + 1) % n {
                    row.push((j, x + 0.01));
                }
            }
            let s: f64 = row.iter().map(|r| r.1).sum();
            t.extend(row.into_iter().map(|(j, v)| (i, j, v / s)));
        }
        let pi = stationary_gth(n, t.clone()).unwrap();
        let mut a = DMatrix::<f64>::zeros(n, n);
        for &(i, j, p) in &t {
            a[(j, i)] += p;
        }
        for i in 0..n {
            a[(i, i)] -= 1.0;
        }
        for j in 0..n {
            a[(n - 1, j)] = 1.0;
        }
        let mut b = DVector::zeros(n);
        b[n - 1] = 1.0;
        let dense = dense_solve(a, b).unwrap();
        for i in 0..n {
            assert!((pi[i] - dense[i]).abs() < 1e-13);
        }
        let power = stationary_power(n, t, 1e-15, 100_000).unwrap();
        for i in 0..n {
            assert!((pi[i] - power[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn gauss_seidel_matches_dense() {
        // x = W x + b with a strongly coupled pair (0, 1).
        let rows = vec![
            vec![(1, 0.9), (2, 0.05)],
            vec![(0, 0.95), (2, 0.01)],
            vec![(0, 0.2), (1, 0.3), (2, 0.1)],
        ];
        let b = [0.05, 0.04, 0.4];
        let mut a = DMatrix::<f64>::identity(3, 3);
        for (i, r) in rows.iter().enumerate() {
            for &(j, w) in r {
                a[(i, j)] -= w;
            }
        }
        let dense = dense_solve(a, DVector::from_row_slice(&b)).unwrap();
        for partner in [[NONE, NONE, NONE], [1, 0, NONE]] {
            let x = gauss_seidel_pairs(&rows, &b, &partner, 1e-15, 100_000).unwrap();
            for i in 0..3 {
                assert!((x[i] - dense[i]).abs() < 1e-12 * dense[i]);
            }
        }
    }

    #[test]
    fn reduction_to_two_states() {
        // 0 -> 1 -> {0, 2}, 2 absorbing
        let mut el = Eliminator::new(3, [(0, 1, 1.0), (1, 0, 0.25), (1, 2, 0.75)]);
        let mut keep = vec![false; 3];
        keep[0] = true;
        keep[2] = true;
        el.eliminate_all_except(&keep).unwrap();
        assert!((el.weight(0, 0) - 0.25).abs() < 1e-16);
        assert!((el.weight(0, 2) - 0.75).abs() < 1e-16);
    }
}
