//! Periodic unit-cell meshes, periodic pairing, the density filter and the
//! constraint operators that tie boundary fluctuations together.
//!
//! Nodes are stored as `[x, y]` with the cell centroid at the origin. Each
//! node belongs to a *periodic class* (nodes related by lattice translations);
//! the lowest-numbered node of a class is its master and every other member
//! appears once in [`RveMesh::pairs`].

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::tensor::{Mat2, Vec2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CellShape {
    Square,
    /// Parallelogram with unit-cell edges of equal length and the given
    /// angle (degrees) between the lattice vectors.
    Parallelogram { angle_deg: f64 },
    /// Regular hexagon, `cell_size` is the side length.
    Hexagon,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeBasis {
    pub a1: Vec2,
    pub a2: Vec2,
}

impl LatticeBasis {
    pub fn translate(&self, c: [i32; 2]) -> Vec2 {
        let (c1, c2) = (c[0] as f64, c[1] as f64);
        [c1 * self.a1[0] + c2 * self.a2[0], c1 * self.a1[1] + c2 * self.a2[1]]
    }

    /// Reciprocal vectors, `a_i · b_j = 2π δ_ij`.
    pub fn reciprocal(&self) -> (Vec2, Vec2) {
        let det = self.a1[0] * self.a2[1] - self.a1[1] * self.a2[0];
        let s = 2.0 * core::f64::consts::PI / det;
        ([s * self.a2[1], -s * self.a2[0]], [-s * self.a1[1], s * self.a1[0]])
    }

    /// Physical wave vector of reciprocal coordinates `k`.
    pub fn wave_vector(&self, k: [f64; 2]) -> Vec2 {
        let (b1, b2) = self.reciprocal();
        [k[0] * b1[0] + k[1] * b2[0], k[0] * b1[1] + k[1] * b2[1]]
    }

    pub fn area(&self) -> f64 {
        (self.a1[0] * self.a2[1] - self.a1[1] * self.a2[0]).abs()
    }

    /// Shortest nonzero lattice translation.
    pub fn min_period(&self) -> f64 {
        let mut best = f64::INFINITY;
        for c1 in -2..=2 {
            for c2 in -2..=2 {
                if c1 == 0 && c2 == 0 {
                    continue;
                }
                let t = self.translate([c1, c2]);
                best = best.min(libm::hypot(t[0], t[1]));
            }
        }
        best
    }

    /// Fractional coordinates of `x` in the basis.
    pub fn fractional(&self, x: Vec2) -> Vec2 {
        let m = Mat2::new(self.a1[0], self.a2[0], self.a1[1], self.a2[1]);
        m.inverse().expect("degenerate lattice").apply(x)
    }
}

/// `slave` sits at `X_master + shift`, with `shift` a lattice translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodicPair {
    pub slave: usize,
    pub master: usize,
    pub cells: [i32; 2],
    pub shift: Vec2,
}

#[derive(Debug, Clone)]
pub struct RveMesh {
    pub shape: CellShape,
    pub resolution: usize,
    pub cell_size: f64,
    pub lattice: LatticeBasis,
    pub nodes: Vec<Vec2>,
    /// Counter-clockwise node lists.
    pub elements: Vec<[usize; 4]>,
    pub pairs: Vec<PeriodicPair>,
    /// Master node of each node's periodic class (itself for masters).
    pub master_of: Vec<usize>,
    /// Corner master whose displacement is fixed.
    pub fixed_node: usize,
    pub element_area: Vec<f64>,
    pub centroids: Vec<Vec2>,
    /// Cell area |a1 × a2|.
    pub volume: f64,
}

impl RveMesh {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }
    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }
    pub fn n_dofs(&self) -> usize {
        2 * self.nodes.len()
    }
    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }
    pub fn element_dofs(&self, e: usize) -> [usize; 8] {
        let n = self.elements[e];
        core::array::from_fn(|k| 2 * n[k / 2] + k % 2)
    }

    pub fn constraints(&self) -> ConstraintMatrices {
        ConstraintMatrices::new(self)
    }
}

/// Build the mesh of a unit cell. `resolution` counts elements per lattice
/// edge (per hexagon side for hexagons).
pub fn build_mesh(shape: CellShape, resolution: usize, cell_size: f64) -> Result<RveMesh> {
    if resolution == 0 {
        return Err(Error::InvalidInput("resolution must be positive".into()));
    }
    if !(cell_size > 0.0 && cell_size.is_finite()) {
        return Err(Error::InvalidInput(format!("cell size must be positive, got {cell_size}")));
    }
    let n = resolution;
    let mut builder = NodeBuilder::new(cell_size);
    let mut elements = Vec::new();
    let lattice;
    match shape {
        CellShape::Square | CellShape::Parallelogram { .. } => {
            let angle = match shape {
                CellShape::Parallelogram { angle_deg } => angle_deg,
                _ => 90.0,
            };
            if !(angle > 10.0 && angle < 170.0) {
                return Err(Error::InvalidInput(format!("parallelogram angle {angle} out of range")));
            }
            let th = angle * PI / 180.0;
            let a1 = [cell_size, 0.0];
            let a2 = if shape == CellShape::Square {
                [0.0, cell_size]
            } else {
                [cell_size * libm::cos(th), cell_size * libm::sin(th)]
            };
            lattice = LatticeBasis { a1, a2 };
            let origin = [-(a1[0] + a2[0]) / 2.0, -(a1[1] + a2[1]) / 2.0];
            patch(&mut builder, &mut elements, origin, a1, a2, n);
        }
        CellShape::Hexagon => {
            let s = cell_size;
            let r3 = libm::sqrt(3.0);
            lattice = LatticeBasis { a1: [r3 * s, 0.0], a2: [r3 * s / 2.0, 1.5 * s] };
            let v = |k: usize| {
                let t = (30.0 + 60.0 * k as f64) * PI / 180.0;
                [s * libm::cos(t), s * libm::sin(t)]
            };
            for k in [0usize, 2, 4] {
                patch(&mut builder, &mut elements, [0.0, 0.0], v(k), v((k + 2) % 6), n);
            }
        }
    }
    let mut nodes = builder.nodes;

    let (pairs, master_of) = periodic_pairs(&nodes, &elements, &lattice, cell_size)?;
    for p in &pairs {
        let xm = nodes[p.master];
        nodes[p.slave] = [xm[0] + p.shift[0], xm[1] + p.shift[1]];
    }
    // the fixed node: master of the largest class (a corner), lowest index
    let mut class_size = vec![0usize; nodes.len()];
    for &m in &master_of {
        class_size[m] += 1;
    }
    let fixed_node = (0..nodes.len())
        .filter(|&i| master_of[i] == i)
        .max_by(|&a, &b| class_size[a].cmp(&class_size[b]).then(b.cmp(&a)))
        .ok_or_else(|| Error::Mesh("empty mesh".into()))?;

    let mut element_area = Vec::with_capacity(elements.len());
    let mut centroids = Vec::with_capacity(elements.len());
    for el in &elements {
        let x: [Vec2; 4] = core::array::from_fn(|k| nodes[el[k]]);
        let mut a = 0.0;
        for k in 0..4 {
            let (p, q) = (x[k], x[(k + 1) % 4]);
            a += p[0] * q[1] - q[0] * p[1];
        }
        if a <= 0.0 {
            return Err(Error::Mesh("element with non-positive area".into()));
        }
        element_area.push(0.5 * a);
        centroids.push([
            0.25 * (x[0][0] + x[1][0] + x[2][0] + x[3][0]),
            0.25 * (x[0][1] + x[1][1] + x[2][1] + x[3][1]),
        ]);
    }
    let volume = lattice.area();
    let total: f64 = element_area.iter().sum();
    if (total - volume).abs() > 1e-9 * volume {
        return Err(Error::Mesh(format!("element areas sum to {total}, cell area is {volume}")));
    }
    Ok(RveMesh {
        shape,
        resolution,
        cell_size,
        lattice,
        nodes,
        elements,
        pairs,
        master_of,
        fixed_node,
        element_area,
        centroids,
        volume,
    })
}

struct NodeBuilder {
    nodes: Vec<Vec2>,
    index: BTreeMap<(i64, i64), usize>,
    quantum: f64,
}

impl NodeBuilder {
    fn new(cell_size: f64) -> Self {
        NodeBuilder { nodes: Vec::new(), index: BTreeMap::new(), quantum: 1e-9 * cell_size }
    }

    /// Node at `x`, merging with an existing node at the same place.
    fn node(&mut self, x: Vec2) -> usize {
        let kx = libm::round(x[0] / self.quantum) as i64;
        let ky = libm::round(x[1] / self.quantum) as i64;
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(&i) = self.index.get(&(kx + dx, ky + dy)) {
                    return i;
                }
            }
        }
        let i = self.nodes.len();
        self.nodes.push(x);
        self.index.insert((kx, ky), i);
        i
    }
}

fn patch(b: &mut NodeBuilder, elements: &mut Vec<[usize; 4]>, o: Vec2, e1: Vec2, e2: Vec2, n: usize) {
    let mut ids = vec![0usize; (n + 1) * (n + 1)];
    for j in 0..=n {
        for i in 0..=n {
            let (s, t) = (i as f64 / n as f64, j as f64 / n as f64);
            ids[j * (n + 1) + i] =
                b.node([o[0] + s * e1[0] + t * e2[0], o[1] + s * e1[1] + t * e2[1]]);
        }
    }
    for j in 0..n {
        for i in 0..n {
            let k = j * (n + 1) + i;
            elements.push([ids[k], ids[k + 1], ids[k + n + 2], ids[k + n + 1]]);
        }
    }
}

fn periodic_pairs(
    nodes: &[Vec2],
    elements: &[[usize; 4]],
    lattice: &LatticeBasis,
    cell_size: f64,
) -> Result<(Vec<PeriodicPair>, Vec<usize>)> {
    // boundary nodes: endpoints of edges used by exactly one element
    let mut edge_count: BTreeMap<(usize, usize), u32> = BTreeMap::new();
    for el in elements {
        for k in 0..4 {
            let (a, b) = (el[k], el[(k + 1) % 4]);
            *edge_count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    let mut on_boundary = vec![false; nodes.len()];
    for (&(a, b), &c) in &edge_count {
        if c == 1 {
            on_boundary[a] = true;
            on_boundary[b] = true;
        }
    }
    let bnodes: Vec<usize> = (0..nodes.len()).filter(|&i| on_boundary[i]).collect();

    let tol = 1e-7 * cell_size;
    let mut parent: Vec<usize> = (0..nodes.len()).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    let shifts: Vec<[i32; 2]> = (-1..=1)
        .flat_map(|a| (-1..=1).map(move |b| [a, b]))
        .filter(|c| *c != [0, 0])
        .collect();
    for (ia, &a) in bnodes.iter().enumerate() {
        for &b in &bnodes[ia + 1..] {
            let d = [nodes[b][0] - nodes[a][0], nodes[b][1] - nodes[a][1]];
            for &c in &shifts {
                let t = lattice.translate(c);
                if (d[0] - t[0]).abs() < tol && (d[1] - t[1]).abs() < tol {
                    let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                    if ra != rb {
                        parent[ra.max(rb)] = ra.min(rb);
                    }
                }
            }
        }
    }
    let mut master_of: Vec<usize> = (0..nodes.len()).map(|i| find(&mut parent, i)).collect();
    // master = lowest index in class (union by min keeps roots minimal)
    for i in 0..nodes.len() {
        let r = master_of[i];
        debug_assert!(r <= i);
        master_of[i] = r;
    }
    let mut pairs = Vec::new();
    for s in 0..nodes.len() {
        let m = master_of[s];
        if m == s {
            continue;
        }
        let d = [nodes[s][0] - nodes[m][0], nodes[s][1] - nodes[m][1]];
        let f = lattice.fractional(d);
        let cells = [libm::round(f[0]) as i32, libm::round(f[1]) as i32];
        let shift = lattice.translate(cells);
        if (shift[0] - d[0]).abs() > tol || (shift[1] - d[1]).abs() > tol {
            return Err(Error::Mesh(format!("node {s} is not a lattice image of {m}")));
        }
        pairs.push(PeriodicPair { slave: s, master: m, cells, shift });
    }
    if pairs.is_empty() {
        return Err(Error::Mesh("no periodic boundary pairs found".into()));
    }
    Ok((pairs, master_of))
}

/// Minimum-image distance between two points of the periodic cell.
pub fn periodic_distance(lattice: &LatticeBasis, a: Vec2, b: Vec2) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1]];
    let mut best = f64::INFINITY;
    for c1 in -1..=1 {
        for c2 in -1..=1 {
            let t = lattice.translate([c1, c2]);
            best = best.min(libm::hypot(d[0] + t[0], d[1] + t[1]));
        }
    }
    best
}

/// Row-normalized linear density filter `ρ = W x` in CSR form.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterMatrix {
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

impl FilterMatrix {
    pub fn identity(n: usize) -> Self {
        FilterMatrix { indptr: (0..=n).collect(), indices: (0..n).collect(), weights: vec![1.0; n] }
    }

    pub fn n(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n())
            .map(|i| {
                (self.indptr[i]..self.indptr[i + 1]).map(|p| self.weights[p] * x[self.indices[p]]).sum()
            })
            .collect()
    }

    /// `Wᵀ g`: pulls a density gradient back to the design variables.
    pub fn apply_transpose(&self, g: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        for i in 0..self.n() {
            for p in self.indptr[i]..self.indptr[i + 1] {
                out[self.indices[p]] += self.weights[p] * g[i];
            }
        }
        out
    }
}

/// Cone-weighted periodic filter with radius `r_min`.
pub fn build_filter(mesh: &RveMesh, r_min: f64) -> Result<FilterMatrix> {
    let ne = mesh.n_elements();
    if r_min <= 0.0 {
        return Ok(FilterMatrix::identity(ne));
    }
    let half = 0.5 * mesh.lattice.min_period();
    if r_min >= half {
        return Err(Error::InvalidInput(format!(
            "filter radius {r_min} must be below half the lattice period ({half})"
        )));
    }
    // bin element centroids in fractional coordinates
    let lat = &mesh.lattice;
    let inv = Mat2::new(lat.a1[0], lat.a2[0], lat.a1[1], lat.a2[1]).inverse().unwrap();
    let nb: [usize; 2] = core::array::from_fn(|k| {
        let row = libm::hypot(inv.get(k, 0), inv.get(k, 1));
        let w = r_min * row; // fractional half-width of the search disc
        ((1.0 / w) as usize).clamp(1, 4096)
    });
    let frac: Vec<Vec2> = mesh
        .centroids
        .iter()
        .map(|&c| {
            let f = lat.fractional(c);
            [f[0] - libm::floor(f[0]), f[1] - libm::floor(f[1])]
        })
        .collect();
    let bin_of = |f: Vec2| -> [usize; 2] {
        core::array::from_fn(|k| ((f[k] * nb[k] as f64) as usize).min(nb[k] - 1))
    };
    let mut bins: Vec<Vec<usize>> = vec![Vec::new(); nb[0] * nb[1]];
    for (e, &f) in frac.iter().enumerate() {
        let b = bin_of(f);
        bins[b[0] * nb[1] + b[1]].push(e);
    }
    let mut indptr = vec![0];
    let mut indices = Vec::new();
    let mut weights = Vec::new();
    let mut cand: Vec<usize> = Vec::new();
    for i in 0..ne {
        let b = bin_of(frac[i]);
        cand.clear();
        for d0 in -1i64..=1 {
            for d1 in -1i64..=1 {
                let b0 = (b[0] as i64 + d0).rem_euclid(nb[0] as i64) as usize;
                let b1 = (b[1] as i64 + d1).rem_euclid(nb[1] as i64) as usize;
                cand.push(b0 * nb[1] + b1);
            }
        }
        cand.sort_unstable();
        cand.dedup();
        let start = indices.len();
        for &bin in &cand {
            for &j in &bins[bin] {
                let d = periodic_distance(lat, mesh.centroids[i], mesh.centroids[j]);
                if d < r_min {
                    indices.push(j);
                    weights.push((r_min - d) * mesh.element_area[j]);
                }
            }
        }
        // deterministic column order
        let mut row: Vec<(usize, f64)> =
            indices[start..].iter().copied().zip(weights[start..].iter().copied()).collect();
        row.sort_by_key(|r| r.0);
        let sum: f64 = row.iter().map(|r| r.1).sum();
        for (k, (j, w)) in row.into_iter().enumerate() {
            indices[start + k] = j;
            weights[start + k] = w / sum;
        }
        indptr.push(indices.len());
    }
    Ok(FilterMatrix { indptr, indices, weights })
}

/// Explicit forms of the fixed-node rows `M1`, the periodic rows `M2`, and
/// the macro-coupling matrix `L_M` (one pair of rows per periodic pair).
#[derive(Debug, Clone)]
pub struct ConstraintMatrices {
    pub n_dofs: usize,
    /// The two fixed dofs (rows of M1).
    pub fixed_dofs: [usize; 2],
    /// `(slave_dof, master_dof)` for each of the 2m rows of M2
    /// (+1 on the slave, −1 on the master).
    pub periodic_rows: Vec<(usize, usize)>,
    /// Rows of L_M (2m × 4), acting on `[F̄ − I]`.
    pub l_m: Vec<[f64; 4]>,
}

impl ConstraintMatrices {
    pub fn new(mesh: &RveMesh) -> Self {
        let mut periodic_rows = Vec::with_capacity(2 * mesh.n_pairs());
        let mut l_m = Vec::with_capacity(2 * mesh.n_pairs());
        for p in &mesh.pairs {
            let [lx, ly] = p.shift;
            periodic_rows.push((2 * p.slave, 2 * p.master));
            periodic_rows.push((2 * p.slave + 1, 2 * p.master + 1));
            l_m.push([lx, 0.0, ly, 0.0]);
            l_m.push([0.0, lx, 0.0, ly]);
        }
        ConstraintMatrices {
            n_dofs: mesh.n_dofs(),
            fixed_dofs: [2 * mesh.fixed_node, 2 * mesh.fixed_node + 1],
            periodic_rows,
            l_m,
        }
    }

    pub fn m(&self) -> usize {
        self.periodic_rows.len() / 2
    }

    /// `M2 u`.
    pub fn m2_apply(&self, u: &[f64]) -> Vec<f64> {
        self.periodic_rows.iter().map(|&(s, m)| u[s] - u[m]).collect()
    }

    /// `out += M2ᵀ μ`.
    pub fn m2t_add(&self, mu: &[f64], out: &mut [f64]) {
        for (&(s, m), &v) in self.periodic_rows.iter().zip(mu) {
            out[s] += v;
            out[m] -= v;
        }
    }

    /// `b = L_M [F̄ − I]`.
    pub fn b(&self, f_bar: &Mat2) -> Vec<f64> {
        let g = (*f_bar - Mat2::IDENTITY).0;
        self.l_m.iter().map(|r| r[0] * g[0] + r[1] * g[1] + r[2] * g[2] + r[3] * g[3]).collect()
    }

    /// `L_Mᵀ μ`.
    pub fn lt_apply(&self, mu: &[f64]) -> [f64; 4] {
        let mut out = [0.0; 4];
        for (r, &v) in self.l_m.iter().zip(mu) {
            for k in 0..4 {
                out[k] += r[k] * v;
            }
        }
        out
    }
}
