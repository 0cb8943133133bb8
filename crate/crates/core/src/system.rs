//! Reduced sparse systems: a map from full dofs to reduced unknowns plus the
//! precomputed scatter of element matrices into the factorization pattern.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::element::ElemMat;
use crate::sparse::{Complex64, LdlFactor, Scalar, SymbolicLdl};

pub const UNMAPPED: u32 = u32::MAX;

/// Full dof → reduced unknown (or `UNMAPPED` for eliminated/prescribed dofs).
#[derive(Debug, Clone)]
pub struct DofMap {
    pub map: Vec<u32>,
    pub n_reduced: usize,
    /// Ordering group of each reduced dof (its node class).
    pub group_of: Vec<usize>,
}

impl DofMap {
    #[inline]
    pub fn get(&self, d: usize) -> Option<usize> {
        let r = self.map[d];
        (r != UNMAPPED).then_some(r as usize)
    }

    /// Node-class map: dofs of node `n` go to the two unknowns of
    /// `class_of[n]` (or nowhere if `None`).
    pub fn from_node_classes(class_of: &[Option<usize>]) -> Self {
        let mut idx: Vec<Option<usize>> = Vec::new();
        let mut next = 0usize;
        let mut map = vec![UNMAPPED; 2 * class_of.len()];
        let mut group_of = Vec::new();
        for (n, c) in class_of.iter().enumerate() {
            if let Some(c) = *c {
                if c >= idx.len() {
                    idx.resize(c + 1, None);
                }
                let r = *idx[c].get_or_insert_with(|| {
                    let r = next;
                    next += 2;
                    group_of.push(c);
                    group_of.push(c);
                    r
                });
                map[2 * n] = r as u32;
                map[2 * n + 1] = (r + 1) as u32;
            }
        }
        DofMap { map, n_reduced: next, group_of }
    }
}

/// Scatter plan of a set of elements into a reduced symmetric/Hermitian
/// matrix.
#[derive(Debug, Clone)]
pub struct SparseSystem {
    pub dofs: DofMap,
    pub sym: Arc<SymbolicLdl>,
    /// Per element, the slot of local entry (a, b) or `UNMAPPED`.
    pub scatter: Vec<[u32; 64]>,
    /// Which elements contribute.
    pub active: Vec<usize>,
}

impl SparseSystem {
    pub fn new(element_dofs: &[[usize; 8]], active: Vec<usize>, dofs: DofMap) -> Self {
        let cliques: Vec<Vec<usize>> = active
            .iter()
            .map(|&e| {
                let mut c: Vec<usize> = element_dofs[e].iter().filter_map(|&d| dofs.get(d)).collect();
                c.sort_unstable();
                c.dedup();
                c
            })
            .collect();
        let sym = Arc::new(SymbolicLdl::from_cliques(
            dofs.n_reduced,
            &dofs.group_of,
            cliques.iter().map(|c| c.as_slice()),
        ));
        let scatter = active
            .iter()
            .map(|&e| {
                let ed = &element_dofs[e];
                let mut s = [UNMAPPED; 64];
                for a in 0..8 {
                    for b in 0..8 {
                        if let (Some(i), Some(j)) = (dofs.get(ed[a]), dofs.get(ed[b])) {
                            if let Some(p) = sym.slot(i, j) {
                                s[8 * a + b] = p as u32;
                            }
                        }
                    }
                }
                s
            })
            .collect();
        SparseSystem { dofs, sym, scatter, active }
    }

    pub fn dim(&self) -> usize {
        self.dofs.n_reduced
    }

    /// `Tᵀ K T` for real element matrices indexed by element id.
    pub fn assemble(&self, ke: &[ElemMat]) -> Vec<f64> {
        let mut ax = self.sym.zeros::<f64>();
        for (k, &e) in self.active.iter().enumerate() {
            let s = &self.scatter[k];
            let m = &ke[e];
            for a in 0..8 {
                for b in 0..8 {
                    let p = s[8 * a + b];
                    if p != UNMAPPED {
                        ax[p as usize] += m[a][b];
                    }
                }
            }
        }
        ax
    }

    /// `Tᴴ K T` where full dof `d` carries the factor `phase[d]`.
    pub fn assemble_phased(&self, element_dofs: &[[usize; 8]], ke: &[ElemMat], phase: &[Complex64]) -> Vec<Complex64> {
        let mut ax = self.sym.zeros::<Complex64>();
        for (k, &e) in self.active.iter().enumerate() {
            let s = &self.scatter[k];
            let m = &ke[e];
            let ph: [Complex64; 8] = core::array::from_fn(|a| phase[element_dofs[e][a]]);
            for a in 0..8 {
                let ca = ph[a].conj();
                for b in 0..8 {
                    let p = s[8 * a + b];
                    if p != UNMAPPED {
                        ax[p as usize] += ca * ph[b] * m[a][b];
                    }
                }
            }
        }
        ax
    }

    pub fn factor<S: Scalar>(&self, ax: &[S]) -> Result<LdlFactor<S>, crate::sparse::LdlError> {
        LdlFactor::new(&self.sym, ax)
    }
}

/// `y += K x` over full dofs using element matrices.
pub fn element_matvec(element_dofs: &[[usize; 8]], active: &[usize], ke: &[ElemMat], x: &[f64], y: &mut [f64]) {
    for &e in active {
        let d = &element_dofs[e];
        let xe: [f64; 8] = core::array::from_fn(|a| x[d[a]]);
        if xe.iter().all(|&v| v == 0.0) {
            continue;
        }
        let m = &ke[e];
        for a in 0..8 {
            let mut acc = 0.0;
            for b in 0..8 {
                acc += m[a][b] * xe[b];
            }
            y[d[a]] += acc;
        }
    }
}
