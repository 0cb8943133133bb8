//! Lanczos iteration with full reorthogonalization for the dominant
//! eigenpair of an operator that is self-adjoint in a `B` inner product.

use alloc::vec;
use alloc::vec::Vec;

use super::scalar::{dotc, Scalar};

/// Converged dominant Ritz pair.
#[derive(Debug, Clone)]
pub struct RitzPair<S> {
    pub theta: f64,
    pub vector: Vec<S>,
    /// `|β_j s_j|`: residual norm estimate in the `B` norm.
    pub residual: f64,
    pub steps: usize,
}

/// Largest eigenvalue of the `B`-self-adjoint operator `op`, where
/// `b_apply` computes `B x` and `B` is positive definite. Stops when the
/// residual estimate drops below `tol·|θ|`.
pub fn dominant<S: Scalar>(
    n: usize,
    start: &[S],
    mut op: impl FnMut(&[S]) -> Vec<S>,
    mut b_apply: impl FnMut(&[S]) -> Vec<S>,
    tol: f64,
    max_steps: usize,
) -> Option<RitzPair<S>> {
    let max_steps = max_steps.min(n).max(1);
    let mut basis: Vec<Vec<S>> = Vec::with_capacity(max_steps);
    let mut bbasis: Vec<Vec<S>> = Vec::with_capacity(max_steps);
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let bs = b_apply(start);
    let nrm = libm::sqrt(dotc(start, &bs).re());
    if !(nrm > 0.0) || !nrm.is_finite() {
        return None;
    }
    basis.push(start.iter().map(|x| *x * (1.0 / nrm)).collect());
    bbasis.push(bs.iter().map(|x| *x * (1.0 / nrm)).collect());
    let mut best: Option<(f64, Vec<f64>, f64)> = None;
    for j in 0..max_steps {
        let mut w = op(&basis[j]);
        let a = dotc(&bbasis[j], &w).re();
        alpha.push(a);
        for i in 0..w.len() {
            w[i] -= basis[j][i] * a;
            if j > 0 {
                w[i] -= basis[j - 1][i] * beta[j - 1];
            }
        }
        // two passes of classical Gram–Schmidt against the whole basis
        for _ in 0..2 {
            for (v, bv) in basis.iter().zip(&bbasis) {
                let c = dotc(bv, &w);
                for i in 0..w.len() {
                    w[i] -= v[i] * c;
                }
            }
        }
        let bw = b_apply(&w);
        let bj = libm::sqrt(dotc(&w, &bw).re().max(0.0));
        let (theta, s) = tridiagonal_top(&alpha, &beta);
        let res = bj * s[j].abs();
        best = Some((theta, s, res));
        if res <= tol * theta.abs() || bj <= f64::EPSILON * theta.abs() || j + 1 == max_steps {
            break;
        }
        beta.push(bj);
        basis.push(w.iter().map(|x| *x * (1.0 / bj)).collect());
        bbasis.push(bw.iter().map(|x| *x * (1.0 / bj)).collect());
    }
    let (theta, s, residual) = best?;
    let mut vector = vec![S::zero(); n];
    for (v, &c) in basis.iter().zip(&s) {
        for i in 0..n {
            vector[i] += v[i] * c;
        }
    }
    Some(RitzPair { theta, vector, residual, steps: alpha.len() })
}

/// Number of eigenvalues of the symmetric tridiagonal `(a, b)` below `x`.
fn sturm_count(a: &[f64], b: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0f64;
    for i in 0..a.len() {
        let off = if i > 0 { b[i - 1] * b[i - 1] } else { 0.0 };
        q = a[i] - x - if i > 0 { off / q } else { 0.0 };
        if q == 0.0 {
            q = -f64::EPSILON * (a[i].abs() + 1.0);
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Largest eigenvalue and unit eigenvector of the symmetric tridiagonal
/// matrix with diagonal `a` and off-diagonal `b`.
pub fn tridiagonal_top(a: &[f64], b: &[f64]) -> (f64, Vec<f64>) {
    let k = a.len();
    let mut r = 0.0f64;
    for i in 0..k {
        let l = if i > 0 { b[i - 1].abs() } else { 0.0 };
        let u = if i + 1 < k { b[i].abs() } else { 0.0 };
        r = r.max(a[i].abs() + l + u);
    }
    let (mut lo, mut hi) = (-r - 1.0, r + 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(a, b, mid) >= k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let theta = 0.5 * (lo + hi);
    // inverse iteration on T − θ I, slightly perturbed to stay nonsingular
    let shift = theta + 1e-14 * (1.0 + theta.abs());
    let mut s = vec![1.0; k];
    for _ in 0..3 {
        s = tridiagonal_solve(a, b, shift, &s);
        let nrm = libm::sqrt(s.iter().map(|x| x * x).sum::<f64>());
        s.iter_mut().for_each(|x| *x /= nrm);
    }
    (theta, s)
}

/// Solve `(T − σ I) x = r` by Gaussian elimination with partial pivoting.
fn tridiagonal_solve(a: &[f64], b: &[f64], sigma: f64, r: &[f64]) -> Vec<f64> {
    let k = a.len();
    // rows stored as (sub, diag, sup, sup2) after pivoting
    let mut d: Vec<f64> = a.iter().map(|x| x - sigma).collect();
    let mut up: Vec<f64> = (0..k).map(|i| if i + 1 < k { b[i] } else { 0.0 }).collect();
    let mut up2 = vec![0.0; k];
    let mut sub: Vec<f64> = (0..k).map(|i| if i > 0 { b[i - 1] } else { 0.0 }).collect();
    let mut x = r.to_vec();
    for i in 0..k.saturating_sub(1) {
        let l = sub[i + 1];
        if l.abs() > d[i].abs() {
            // swap rows i and i+1
            let (di, ui, u2i) = (d[i], up[i], up2[i]);
            d[i] = l;
            up[i] = d[i + 1];
            up2[i] = up[i + 1];
            sub[i + 1] = di;
            d[i + 1] = ui;
            up[i + 1] = u2i;
            x.swap(i, i + 1);
        }
        let piv = if d[i] == 0.0 { f64::MIN_POSITIVE } else { d[i] };
        let m = sub[i + 1] / piv;
        d[i + 1] -= m * up[i];
        up[i + 1] -= m * up2[i];
        x[i + 1] -= m * x[i];
    }
    for i in (0..k).rev() {
        let mut v = x[i];
        if i + 1 < k {
            v -= up[i] * x[i + 1];
        }
        if i + 2 < k {
            v -= up2[i] * x[i + 2];
        }
        let piv = if d[i] == 0.0 { f64::MIN_POSITIVE } else { d[i] };
        x[i] = v / piv;
    }
    x
}
