//! Up-looking sparse LDLᴴ factorization (no pivoting) for symmetric or
//! Hermitian matrices.
//!
//! The symbolic phase (ordering, elimination tree, column counts) depends only
//! on the sparsity pattern and is shared by every numeric factorization of a
//! mesh, including the complex Bloch-reduced matrices.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::ordering::minimum_degree;
use super::scalar::Scalar;

const NONE: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum LdlError {
    #[error("zero or non-finite pivot at column {0}")]
    BadPivot(usize),
    #[error("value array has length {got}, pattern needs {expected}")]
    Shape { expected: usize, got: usize },
}

/// Pattern, ordering and elimination tree of a symmetric sparse matrix.
#[derive(Debug, Clone)]
pub struct SymbolicLdl {
    n: usize,
    perm: Vec<usize>,
    iperm: Vec<usize>,
    /// Upper-triangular CSC pattern of the permuted matrix.
    ap: Vec<usize>,
    ai: Vec<u32>,
    parent: Vec<usize>,
    lp: Vec<usize>,
}

impl SymbolicLdl {
    /// Build from a list of cliques (each a list of dof indices that couple
    /// to each other, e.g. the reduced dofs of one element). `group_of[d]`
    /// clusters dofs that should stay adjacent in the ordering (the two
    /// components of a node); ordering runs on the group graph.
    pub fn from_cliques<'a, I>(n: usize, group_of: &[usize], cliques: I) -> Self
    where
        I: IntoIterator<Item = &'a [usize]> + Clone,
    {
        assert_eq!(group_of.len(), n);
        let n_groups = group_of.iter().copied().max().map_or(0, |g| g + 1);
        let mut gadj: Vec<Vec<usize>> = vec![Vec::new(); n_groups];
        let mut gs: Vec<usize> = Vec::new();
        for c in cliques.clone() {
            gs.clear();
            gs.extend(c.iter().map(|&d| group_of[d]));
            gs.sort_unstable();
            gs.dedup();
            for &a in &gs {
                gadj[a].extend(gs.iter().copied().filter(|&b| b != a));
            }
        }
        for a in gadj.iter_mut() {
            a.sort_unstable();
            a.dedup();
        }
        let gorder = minimum_degree(&gadj);
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_groups];
        for (d, &g) in group_of.iter().enumerate() {
            members[g].push(d);
        }
        let mut perm = Vec::with_capacity(n);
        for g in gorder {
            perm.extend_from_slice(&members[g]);
        }
        debug_assert_eq!(perm.len(), n);
        let mut iperm = vec![0; n];
        for (k, &d) in perm.iter().enumerate() {
            iperm[d] = k;
        }

        let mut cols: Vec<Vec<u32>> = (0..n).map(|k| vec![k as u32]).collect();
        for c in cliques {
            for &a in c {
                for &b in c {
                    let (pa, pb) = (iperm[a], iperm[b]);
                    if pa < pb {
                        cols[pb].push(pa as u32);
                    }
                }
            }
        }
        let mut ap = Vec::with_capacity(n + 1);
        let mut ai = Vec::new();
        ap.push(0);
        for col in cols.iter_mut() {
            col.sort_unstable();
            col.dedup();
            ai.extend_from_slice(col);
            ap.push(ai.len());
        }

        // elimination tree and column counts
        let mut parent = vec![NONE; n];
        let mut flag = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        for k in 0..n {
            flag[k] = k;
            for p in ap[k]..ap[k + 1] {
                let mut i = ai[p] as usize;
                if i < k {
                    while flag[i] != k {
                        if parent[i] == NONE {
                            parent[i] = k;
                        }
                        lnz[i] += 1;
                        flag[i] = k;
                        i = parent[i];
                    }
                }
            }
        }
        let mut lp = vec![0usize; n + 1];
        for k in 0..n {
            lp[k + 1] = lp[k] + lnz[k];
        }
        SymbolicLdl { n, perm, iperm, ap, ai, parent, lp }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored matrix entries (upper triangle incl. diagonal).
    pub fn nnz(&self) -> usize {
        self.ai.len()
    }

    /// Off-diagonal nonzeros of the factor.
    pub fn factor_nnz(&self) -> usize {
        self.lp[self.n]
    }

    /// Slot of entry (i, j) in the value array, if it lies in the stored
    /// (upper, permuted) triangle. For Hermitian assembly add `A_ij` only
    /// when this returns `Some`; the mirrored entry is implied.
    #[inline]
    pub fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let (pi, pj) = (self.iperm[i], self.iperm[j]);
        if pi > pj {
            return None;
        }
        let rows = &self.ai[self.ap[pj]..self.ap[pj + 1]];
        rows.binary_search(&(pi as u32)).ok().map(|p| self.ap[pj] + p)
    }

    pub fn zeros<S: Scalar>(&self) -> Vec<S> {
        vec![S::zero(); self.nnz()]
    }
}

/// Numeric factor `P A Pᵀ = L D Lᴴ`.
#[derive(Debug, Clone)]
pub struct LdlFactor<S> {
    sym: Arc<SymbolicLdl>,
    li: Vec<u32>,
    lx: Vec<S>,
    d: Vec<f64>,
}

impl<S: Scalar> LdlFactor<S> {
    pub fn new(sym: &Arc<SymbolicLdl>, ax: &[S]) -> Result<Self, LdlError> {
        let s = &**sym;
        let n = s.n;
        if ax.len() != s.nnz() {
            return Err(LdlError::Shape { expected: s.nnz(), got: ax.len() });
        }
        let nl = s.lp[n];
        let mut li = vec![0u32; nl];
        let mut lx = vec![S::zero(); nl];
        let mut d = vec![0.0f64; n];
        let mut y = vec![S::zero(); n];
        let mut pattern = vec![0usize; n];
        let mut flag = vec![NONE; n];
        let mut lnz = vec![0usize; n];

        for k in 0..n {
            let mut top = n;
            flag[k] = k;
            for p in s.ap[k]..s.ap[k + 1] {
                let mut i = s.ai[p] as usize;
                y[i] += ax[p];
                let mut len = 0;
                while flag[i] != k {
                    pattern[len] = i;
                    len += 1;
                    flag[i] = k;
                    i = s.parent[i];
                }
                while len > 0 {
                    top -= 1;
                    len -= 1;
                    pattern[top] = pattern[len];
                }
            }
            let mut dk = y[k].re();
            y[k] = S::zero();
            while top < n {
                let i = pattern[top];
                top += 1;
                let yi = y[i];
                y[i] = S::zero();
                let p0 = s.lp[i];
                let p1 = p0 + lnz[i];
                for p in p0..p1 {
                    let r = li[p] as usize;
                    y[r] -= lx[p] * yi;
                }
                let lki = yi.conj() * (1.0 / d[i]);
                dk -= (lki * yi).re();
                li[p1] = k as u32;
                lx[p1] = lki;
                lnz[i] += 1;
            }
            if dk == 0.0 || !dk.is_finite() {
                return Err(LdlError::BadPivot(k));
            }
            d[k] = dk;
        }
        Ok(LdlFactor { sym: sym.clone(), li, lx, d })
    }

    pub fn dim(&self) -> usize {
        self.sym.n
    }

    /// Number of negative pivots, which by Sylvester's law equals the number
    /// of negative eigenvalues.
    pub fn negative_pivots(&self) -> usize {
        self.d.iter().filter(|&&x| x < 0.0).count()
    }

    pub fn min_abs_pivot(&self) -> f64 {
        self.d.iter().fold(f64::INFINITY, |a, &x| a.min(x.abs()))
    }

    /// Solve `A x = b` in place (original ordering).
    pub fn solve_in_place(&self, b: &mut [S]) {
        let s = &*self.sym;
        let n = s.n;
        let mut y: Vec<S> = (0..n).map(|k| b[s.perm[k]]).collect();
        for j in 0..n {
            let yj = y[j];
            for p in s.lp[j]..s.lp[j + 1] {
                y[self.li[p] as usize] -= self.lx[p] * yj;
            }
        }
        for j in 0..n {
            y[j] = y[j] * (1.0 / self.d[j]);
        }
        for j in (0..n).rev() {
            let mut acc = y[j];
            for p in s.lp[j]..s.lp[j + 1] {
                acc -= self.lx[p].conj() * y[self.li[p] as usize];
            }
            y[j] = acc;
        }
        for k in 0..n {
            b[s.perm[k]] = y[k];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::scalar::Complex64;

    fn grid_cliques(n: usize) -> Vec<Vec<usize>> {
        // 1-D chain of 2-dof "elements" closed into a ring plus long links
        let mut c = Vec::new();
        for i in 0..n {
            c.push(vec![i, (i + 1) % n]);
            c.push(vec![i, (i + 5) % n]);
        }
        c
    }

    fn dense_from<S: Scalar>(n: usize, cl: &[Vec<usize>], val: impl Fn(usize, usize) -> S) -> Vec<Vec<S>> {
        let mut a = vec![vec![S::zero(); n]; n];
        for c in cl {
            for &i in c {
                for &j in c {
                    a[i][j] = val(i, j);
                }
            }
        }
        for i in 0..n {
            a[i][i] = val(i, i);
        }
        a
    }

    fn check<S: Scalar>(val: impl Fn(usize, usize) -> S, rhs: impl Fn(usize) -> S) {
        let n = 23;
        let cl = grid_cliques(n);
        let group: Vec<usize> = (0..n).map(|d| d / 2).collect();
        let sym = Arc::new(SymbolicLdl::from_cliques(n, &group, cl.iter().map(|c| c.as_slice())));
        let a = dense_from(n, &cl, &val);
        let mut ax = sym.zeros::<S>();
        for i in 0..n {
            for j in 0..n {
                if a[i][j] != S::zero() {
                    if let Some(s) = sym.slot(i, j) {
                        ax[s] = a[i][j];
                    }
                }
            }
        }
        let f = LdlFactor::new(&sym, &ax).unwrap();
        let b: Vec<S> = (0..n).map(&rhs).collect();
        let mut x = b.clone();
        f.solve_in_place(&mut x);
        for i in 0..n {
            let mut r = S::zero();
            for j in 0..n {
                r += a[i][j] * x[j];
            }
            assert!((r - b[i]).norm_sqr() < 1e-22, "row {i}");
        }
    }

    #[test]
    fn real_spd_solve() {
        check(|i, j| if i == j { 10.0 + i as f64 } else { -1.0 / (1.0 + (i + j) as f64) }, |i| i as f64 - 3.0);
    }

    #[test]
    fn real_indefinite_solve_and_inertia() {
        let val = |i: usize, j: usize| if i == j { if i % 3 == 0 { -7.0 } else { 9.0 } } else { 0.5 };
        check(val, |i| 1.0 + i as f64);
        let n = 6;
        let cl = vec![(0..n).collect::<Vec<_>>()];
        let group: Vec<usize> = (0..n).collect();
        let sym = Arc::new(SymbolicLdl::from_cliques(n, &group, cl.iter().map(|c| c.as_slice())));
        let mut ax = sym.zeros::<f64>();
        for i in 0..n {
            ax[sym.slot(i, i).unwrap()] = if i < 2 { -3.0 } else { 5.0 };
        }
        let f = LdlFactor::new(&sym, &ax).unwrap();
        assert_eq!(f.negative_pivots(), 2);
    }

    #[test]
    fn hermitian_solve() {
        let val = |i: usize, j: usize| {
            if i == j {
                Complex64::new(12.0, 0.0)
            } else {
                let z = Complex64::new(0.3 * (i as f64 - j as f64), 0.7);
                if i < j { z } else { z.conj() }
            }
        };
        // make strictly Hermitian: A_ji = conj(A_ij)
        let herm = move |i: usize, j: usize| if i <= j { val(i, j) } else { val(j, i).conj() };
        check(herm, |i| Complex64::new(i as f64, -1.0));
    }

    #[test]
    fn zero_pivot_is_reported() {
        let n = 2;
        let cl = vec![vec![0, 1]];
        let sym = Arc::new(SymbolicLdl::from_cliques(n, &[0, 1], cl.iter().map(|c| c.as_slice())));
        let ax = sym.zeros::<f64>();
        assert!(matches!(LdlFactor::new(&sym, &ax), Err(LdlError::BadPivot(_))));
    }
}
