//! Finite N×N tiling of a thresholded cell under uniaxial loading, as a
//! check on the homogenized Poisson ratio without periodicity.
//!
//! The outer faces of the bottom and top element rows are clamped axially
//! (uniform `u_y`, free `u_x`); one bottom node is also fixed laterally. Sides are traction free.
//! The Poisson ratio is read off the central tiles from the mean
//! displacement jumps across the block, which is exact for a periodic
//! fluctuation field.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::element::{element_response, ElemMat, ElementCache, ElementModuli};
use crate::error::{Error, Result};
use crate::fem::{element_moduli, Design, SolverSettings, StiffnessMode};
use crate::material::{InterpolationParams, MaterialSet};
use crate::mesh::{CellShape, RveMesh};
use crate::par;
use crate::sparse::{dotc, LdlFactor};
use crate::stability::{solid_components, Connectivity};
use crate::system::{element_matvec, DofMap, SparseSystem, UNMAPPED};
use crate::tensor::{Mat2, Vec2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TileSpec {
    /// Tiles per direction.
    pub n: usize,
    /// Applied stretch between the clamped bands.
    pub lambda2: f64,
    pub threshold: f64,
    /// Equal load increments (halved on failure).
    pub steps: usize,
}

impl Default for TileSpec {
    fn default() -> Self {
        TileSpec { n: 4, lambda2: 1.2, threshold: crate::stability::SOLID_THRESHOLD, steps: 20 }
    }
}

#[derive(Debug, Clone)]
pub struct TileResult {
    /// `−ε_xx / ε_yy` of the central block.
    pub nu: f64,
    pub strain_lateral: f64,
    pub strain_axial: f64,
    /// Mean displacement gradient of the central block.
    pub h: Mat2,
    /// Tiles per direction in the central block.
    pub central: usize,
    pub n_elements: usize,
    /// Solid elements not connected to the loaded component.
    pub dropped: usize,
    pub n_dofs: usize,
    pub newton_iterations: usize,
}

/// The tiled mesh with node `(tile lattice) → index` bookkeeping.
#[derive(Debug, Clone)]
pub struct TiledMesh {
    pub nodes: Vec<Vec2>,
    pub elements: Vec<[usize; 4]>,
    /// Element id in the unit cell of each tiled element.
    pub source: Vec<usize>,
    /// Fractional coordinates of each node w.r.t. the tiled lattice
    /// `(a1, a2)`, origin at the lower-left corner of the block.
    pub frac: Vec<Vec2>,
    pub resolution: usize,
}

/// Tile the elements listed in `keep` `n × n` times, merging coincident
/// nodes.
pub fn tile_mesh(mesh: &RveMesh, keep: &[usize], n: usize) -> TiledMesh {
    let l = &mesh.lattice;
    let res = mesh.resolution as f64;
    let mut index: BTreeMap<(i64, i64), usize> = BTreeMap::new();
    let mut nodes = Vec::new();
    let mut frac = Vec::new();
    let mut elements = Vec::with_capacity(keep.len() * n * n);
    let mut source = Vec::with_capacity(keep.len() * n * n);
    for i in 0..n {
        for j in 0..n {
            for &e in keep {
                let el = mesh.elements[e].map(|v| {
                    let f = l.fractional(mesh.nodes[v]);
                    let g = [f[0] + 0.5 + i as f64, f[1] + 0.5 + j as f64];
                    // structured meshes put nodes on a 1/res grid in lattice coordinates
                    let key = (libm::round(g[0] * res * 1e3) as i64, libm::round(g[1] * res * 1e3) as i64);
                    *index.entry(key).or_insert_with(|| {
                        let t = l.translate([i as i32, j as i32]);
                        let x = mesh.nodes[v];
                        nodes.push([x[0] + t[0], x[1] + t[1]]);
                        frac.push(g);
                        nodes.len() - 1
                    })
                });
                elements.push(el);
                source.push(e);
            }
        }
    }
    TiledMesh { nodes, elements, source, frac, resolution: mesh.resolution }
}

/// Run the tiled test on the thresholded `design`.
pub fn tile_test(
    mesh: &RveMesh,
    set: &MaterialSet,
    design: &Design,
    ip: &InterpolationParams,
    spec: &TileSpec,
    st: &SolverSettings,
) -> Result<TileResult> {
    design.validate(mesh.n_elements())?;
    if matches!(mesh.shape, CellShape::Hexagon) {
        return Err(Error::InvalidInput("tile test supports square and parallelogram cells".into()));
    }
    if spec.n == 0 || !(spec.lambda2 > 0.0) || spec.lambda2 == 1.0 || spec.steps == 0 {
        return Err(Error::InvalidInput("tile test needs n ≥ 1, steps ≥ 1 and lambda2 ≠ 1".into()));
    }
    let design = design.thresholded(spec.threshold);
    let solid: Vec<usize> = (0..mesh.n_elements()).filter(|&e| design.rho1[e] > 0.5).collect();
    if solid.is_empty() {
        return Err(Error::Topology("thresholded design is empty".into()));
    }
    let full = tile_mesh(mesh, &solid, spec.n);
    let res = full.resolution as f64;
    let top = spec.n as f64;
    let tol = 1e-6 / res;
    // bands: the outer faces of the bottom and top element rows
    let in_bottom = |v: usize| full.frac[v][1] <= tol;
    let in_top = |v: usize| full.frac[v][1] >= top - tol;

    // keep the edge-connected component carrying the load
    let tiled_rve = pseudo_mesh(&full);
    let all: Vec<usize> = (0..full.elements.len()).collect();
    let (label, count) = solid_components(&tiled_rve, &all, Connectivity::Edge);
    let mut touches = vec![(false, false); count];
    for (e, el) in full.elements.iter().enumerate() {
        for &v in el {
            touches[label[e]].0 |= in_bottom(v);
            touches[label[e]].1 |= in_top(v);
        }
    }
    let main = (0..count)
        .filter(|&c| touches[c].0 && touches[c].1)
        .max_by_key(|&c| label.iter().filter(|&&l| l == c).count())
        .ok_or_else(|| Error::Topology("no connected load path between the clamped bands".into()))?;
    let kept: Vec<usize> = (0..full.elements.len()).filter(|&e| label[e] == main).collect();
    let dropped = full.elements.len() - kept.len();

    // per-element data of the kept elements, renumbered densely
    let mut used = vec![false; full.nodes.len()];
    for &e in &kept {
        for &v in &full.elements[e] {
            used[v] = true;
        }
    }
    let elements: Vec<[usize; 4]> = kept.iter().map(|&e| full.elements[e]).collect();
    let caches: Vec<ElementCache> = elements
        .iter()
        .enumerate()
        .map(|(k, el)| {
            ElementCache::new(&el.map(|v| full.nodes[v]), 0.2)
                .ok_or_else(|| Error::Mesh(format!("tiled element {k} is degenerate")))
        })
        .collect::<Result<_>>()?;
    let mods: Vec<ElementModuli> = kept
        .iter()
        .map(|&e| {
            let s = full.source[e];
            element_moduli(set, ip, design.rho1[s], design.rho2[s], StiffnessMode::Interpolated)
        })
        .collect();
    let element_dofs: Vec<[usize; 8]> =
        elements.iter().map(|el| core::array::from_fn(|k| 2 * el[k / 2] + k % 2)).collect();

    // prescribed dofs
    let n_dofs = 2 * full.nodes.len();
    let mut axial = vec![None; n_dofs];
    let mut anchor = None;
    for v in 0..full.nodes.len() {
        if !used[v] {
            continue;
        }
        if in_bottom(v) {
            axial[2 * v + 1] = Some(0.0);
            if anchor.is_none_or(|a: usize| full.frac[v][0] < full.frac[a][0]) {
                anchor = Some(v);
            }
        } else if in_top(v) {
            axial[2 * v + 1] = Some(1.0);
        }
    }
    let anchor = anchor.ok_or_else(|| Error::Topology("no material in the bottom band".into()))?;
    axial[2 * anchor] = Some(0.0);
    // the top band moves by (λ − 1) times the block height
    let delta = (spec.lambda2 - 1.0) * top * mesh.lattice.a2[1];

    let mut map = vec![UNMAPPED; n_dofs];
    let mut group_of = Vec::new();
    let mut next = 0u32;
    for d in 0..n_dofs {
        if used[d / 2] && axial[d].is_none() {
            map[d] = next;
            next += 1;
            group_of.push(d / 2);
        }
    }
    let dofs = DofMap { map, n_reduced: next as usize, group_of };
    let sys = SparseSystem::new(&element_dofs, (0..elements.len()).collect(), dofs);

    let mut u = vec![0.0; n_dofs];
    let mut t = 0.0;
    let mut newton_total = 0;
    let step = 1.0 / spec.steps as f64;
    let mut dt = step;
    while t < 1.0 - 1e-14 {
        let target = (t + dt).min(1.0);
        let mut trial = u.clone();
        match tile_newton(&sys, &caches, &mods, &element_dofs, &axial, delta * target, &mut trial, st) {
            Ok(it) => {
                newton_total += it;
                u = trial;
                t = target;
                dt = step.min(1.0 - t).max(0.0);
            }
            Err(e) if e.is_recoverable() => {
                dt *= 0.5;
                if dt < st.min_ratio {
                    return Err(Error::LoadPath { lambda2: 1.0 + (spec.lambda2 - 1.0) * target, reason: format!("{e}") });
                }
            }
            Err(e) => return Err(e),
        }
    }

    // central block measurement
    let lo = spec.n / 4;
    let hi = spec.n - lo;
    let span = (hi - lo) as f64;
    let mut at: BTreeMap<(i64, i64), usize> = BTreeMap::new();
    for v in 0..full.nodes.len() {
        if used[v] {
            let f = full.frac[v];
            at.insert((libm::round(f[0] * res) as i64, libm::round(f[1] * res) as i64), v);
        }
    }
    let r = full.resolution as i64;
    let (lo_i, hi_i) = (lo as i64 * r, hi as i64 * r);
    let jump = |dir: usize| -> Result<Vec2> {
        let mut acc = [0.0; 2];
        let mut cnt = 0usize;
        for s in lo_i..=hi_i {
            let (a, b) = if dir == 0 { ((lo_i, s), (hi_i, s)) } else { ((s, lo_i), (s, hi_i)) };
            if let (Some(&va), Some(&vb)) = (at.get(&a), at.get(&b)) {
                acc[0] += u[2 * vb] - u[2 * va];
                acc[1] += u[2 * vb + 1] - u[2 * va + 1];
                cnt += 1;
            }
        }
        if cnt == 0 {
            return Err(Error::Topology("central block has no material on its boundary".into()));
        }
        Ok([acc[0] / cnt as f64, acc[1] / cnt as f64])
    };
    let d1 = jump(0)?;
    let d2 = jump(1)?;
    let l = &mesh.lattice;
    let (l1, l2) = ([span * l.a1[0], span * l.a1[1]], [span * l.a2[0], span * l.a2[1]]);
    let lm = Mat2::new(l1[0], l2[0], l1[1], l2[1]);
    let dm = Mat2::new(d1[0], d2[0], d1[1], d2[1]);
    let h = dm.matmul(&lm.inverse().ok_or_else(|| Error::Mesh("degenerate lattice".into()))?);
    let (exx, eyy) = (h.get(0, 0), h.get(1, 1));
    Ok(TileResult {
        nu: -exx / eyy,
        strain_lateral: exx,
        strain_axial: eyy,
        h,
        central: hi - lo,
        n_elements: kept.len(),
        dropped,
        n_dofs: sys.dim(),
        newton_iterations: newton_total,
    })
}

/// A non-periodic stand-in so the connectivity helper can be reused.
fn pseudo_mesh(t: &TiledMesh) -> RveMesh {
    RveMesh {
        shape: CellShape::Square,
        resolution: t.resolution,
        cell_size: 1.0,
        lattice: crate::mesh::LatticeBasis { a1: [1.0, 0.0], a2: [0.0, 1.0] },
        nodes: t.nodes.clone(),
        elements: t.elements.clone(),
        pairs: Vec::new(),
        master_of: (0..t.nodes.len()).collect(),
        fixed_node: 0,
        element_area: Vec::new(),
        centroids: Vec::new(),
        volume: 0.0,
    }
}

/// Newton solve with the axial band displacement at `top`. Returns the
/// iteration count.
#[allow(clippy::too_many_arguments)]
fn tile_newton(
    sys: &SparseSystem,
    caches: &[ElementCache],
    mods: &[ElementModuli],
    element_dofs: &[[usize; 8]],
    prescribed: &[Option<f64>],
    top: f64,
    u: &mut [f64],
    st: &SolverSettings,
) -> Result<usize> {
    // impose the new boundary values, predicting the interior linearly
    let mut jump = vec![0.0; u.len()];
    for (d, p) in prescribed.iter().enumerate() {
        if let Some(s) = p {
            jump[d] = s * top - u[d];
        }
    }
    let (f, ke) = tile_assemble(caches, mods, element_dofs, u, u.len())?;
    let mut kj = vec![0.0; u.len()];
    let active: Vec<usize> = (0..caches.len()).collect();
    element_matvec(element_dofs, &active, &ke, &jump, &mut kj);
    let mut rhs: Vec<f64> = vec![0.0; sys.dim()];
    for d in 0..u.len() {
        if let Some(i) = sys.dofs.get(d) {
            rhs[i] = -(f[d] + kj[d]);
        }
    }
    let factor: LdlFactor<f64> = sys.factor(&sys.assemble(&ke))?;
    factor.solve_in_place(&mut rhs);
    for d in 0..u.len() {
        u[d] += jump[d];
        if let Some(i) = sys.dofs.get(d) {
            u[d] += rhs[i];
        }
    }
    let mut e_ref = 0.0f64;
    for it in 1..=st.max_newton {
        let (f, ke) = tile_assemble(caches, mods, element_dofs, u, u.len())?;
        let mut r: Vec<f64> = vec![0.0; sys.dim()];
        for d in 0..u.len() {
            if let Some(i) = sys.dofs.get(d) {
                r[i] = -f[d];
            }
        }
        let factor: LdlFactor<f64> = sys.factor(&sys.assemble(&ke))?;
        let mut du = r.clone();
        factor.solve_in_place(&mut du);
        if du.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotConverged("non-finite increment".into()));
        }
        let energy = dotc(&du, &r).abs();
        e_ref = e_ref.max(energy);
        for d in 0..u.len() {
            if let Some(i) = sys.dofs.get(d) {
                u[d] += du[i];
            }
        }
        if energy <= st.energy_tol * e_ref + st.energy_floor && it > 1 {
            return Ok(it);
        }
        if it >= 3 && energy > 1e3 * e_ref {
            return Err(Error::NotConverged(format!("diverging (|Δ·R| = {energy:.3e})")));
        }
    }
    Err(Error::NotConverged(format!("no convergence in {} iterations", st.max_newton)))
}

fn tile_assemble(
    caches: &[ElementCache],
    mods: &[ElementModuli],
    element_dofs: &[[usize; 8]],
    u: &[f64],
    n_dofs: usize,
) -> Result<(Vec<f64>, Vec<ElemMat>)> {
    let res = par::map(caches.len(), |e| {
        let ue = core::array::from_fn(|a| u[element_dofs[e][a]]);
        let mut k = [[0.0; 8]; 8];
        element_response(&caches[e].geom, &caches[e].k_lin_unit, &ue, &mods[e], Some(&mut k))
            .map(|f| (f, k))
            .map_err(|det| Error::NonPhysical { element: e, det })
    });
    let mut f = vec![0.0; n_dofs];
    let mut ke = Vec::with_capacity(caches.len());
    for (e, r) in res.into_iter().enumerate() {
        let (fe, k) = r?;
        for a in 0..8 {
            f[element_dofs[e][a]] += fe[a];
        }
        ke.push(k);
    }
    Ok((f, ke))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_mesh;

    #[test]
    fn tiling_merges_shared_nodes() {
        let mesh = build_mesh(CellShape::Square, 3, 1.0).unwrap();
        let all: Vec<usize> = (0..9).collect();
        let t = tile_mesh(&mesh, &all, 2);
        assert_eq!(t.elements.len(), 36);
        assert_eq!(t.nodes.len(), 49);
        let p = build_mesh(CellShape::Parallelogram { angle_deg: 60.0 }, 2, 1.0).unwrap();
        let t = tile_mesh(&p, &[0, 1, 2, 3], 3);
        assert_eq!(t.nodes.len(), 49);
    }
}
