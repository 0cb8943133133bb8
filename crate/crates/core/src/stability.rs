//! Stability of loaded cells.
//!
//! Microscopic: the Bloch indicator `β_k`, the smallest eigenvalue of the
//! Hermitian pencil `(K, G)` on Bloch-periodic fields `u⁺ = e^{2πi k·c} u⁻`,
//! where `K` is the tangent stiffness of the loaded cell, `G` the gradient
//! Gram matrix and `k` the wave vector in reciprocal coordinates. At `k = 0`
//! rigid translations are in the kernel of both matrices; they are removed
//! by fixing one node class, which leaves the pencil on the quotient space
//! unchanged.
//!
//! Macroscopic: the rank-one indicator `B = min (m⊗M):Ā:(m⊗M)` over unit
//! directions.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::element::{gradient_gram, ElemMat};
use crate::error::{Error, Result};
use crate::fem::{design_moduli, Design, RveModel, SolverSettings, StiffnessMode};
use crate::homogenization::{uniaxial_drive_partial, LoadCase};
use crate::material::{InterpolationParams, MaterialSet};
use crate::mesh::RveMesh;
use crate::par;
use crate::sparse::lanczos;
use crate::sparse::Complex64;
use crate::system::{DofMap, SparseSystem};
use crate::tensor::{bilinear4, Mat4};

/// Density above which an element counts as solid in stability runs.
pub const SOLID_THRESHOLD: f64 = 0.6;

// ---------------------------------------------------------------------------
// connectivity

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    /// Elements sharing a node are connected.
    Node,
    /// Elements must share an edge.
    Edge,
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Component label of each element in `active` (same order), counting
/// periodic images as the same node. Returns `(labels, count)`.
pub fn solid_components(mesh: &RveMesh, active: &[usize], conn: Connectivity) -> (Vec<usize>, usize) {
    let n = active.len();
    let mut parent: Vec<usize> = (0..n).collect();
    let mut owner: alloc::collections::BTreeMap<(usize, usize), usize> = alloc::collections::BTreeMap::new();
    for (k, &e) in active.iter().enumerate() {
        let nodes = mesh.elements[e].map(|v| mesh.master_of[v]);
        let keys: Vec<(usize, usize)> = match conn {
            Connectivity::Node => nodes.iter().map(|&v| (v, usize::MAX)).collect(),
            Connectivity::Edge => (0..4)
                .map(|i| {
                    let (a, b) = (nodes[i], nodes[(i + 1) % 4]);
                    (a.min(b), a.max(b))
                })
                .collect(),
        };
        for key in keys {
            match owner.get(&key) {
                Some(&o) => {
                    let (ra, rb) = (find(&mut parent, o), find(&mut parent, k));
                    if ra != rb {
                        parent[ra.max(rb)] = ra.min(rb);
                    }
                }
                None => {
                    owner.insert(key, k);
                }
            }
        }
    }
    let mut label = vec![usize::MAX; n];
    let mut count = 0;
    let mut root_label = vec![usize::MAX; n];
    for k in 0..n {
        let r = find(&mut parent, k);
        if root_label[r] == usize::MAX {
            root_label[r] = count;
            count += 1;
        }
        label[k] = root_label[r];
    }
    (label, count)
}

/// Elements taking part in a stability analysis: all of them, or those at
/// or above `threshold`.
pub fn active_elements(design: &Design, threshold: Option<f64>) -> Vec<usize> {
    match threshold {
        None => (0..design.len()).collect(),
        Some(t) => (0..design.len()).filter(|&e| design.rho1[e] >= t).collect(),
    }
}

// ---------------------------------------------------------------------------
// rank-one convexity

#[derive(Debug, Clone, PartialEq)]
pub struct RankOneResult {
    /// `min (m⊗M):Ā:(m⊗M)`.
    pub b: f64,
    /// Angles of `m = (cos φ, sin φ)` and `M = (cos α, sin α)` at the minimum.
    pub phi: f64,
    pub alpha: f64,
    /// `(α, min_φ (m⊗M):Ā:(m⊗M))`.
    pub curve: Vec<(f64, f64)>,
}

/// `(m⊗M):Ā:(m⊗M)` with unit vectors at angles `phi`, `alpha`.
pub fn acoustic_form(a: &Mat4, phi: f64, alpha: f64) -> f64 {
    let (m1, m2) = (libm::cos(phi), libm::sin(phi));
    let (n1, n2) = (libm::cos(alpha), libm::sin(alpha));
    let v = [m1 * n1, m2 * n1, m1 * n2, m2 * n2];
    bilinear4(&v, a, &v)
}

/// Brute-force minimum over the product grid of angles in `[0, π)` with
/// spacing `step` (rounded so that the grid closes on π).
pub fn rank_one_indicator(a: &Mat4, step: f64) -> RankOneResult {
    let n = libm::round(PI / step).max(1.0) as usize;
    let h = PI / n as f64;
    let rows = par::map(n, |j| {
        let alpha = j as f64 * h;
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..n {
            let phi = i as f64 * h;
            let v = acoustic_form(a, phi, alpha);
            if v < best.0 {
                best = (v, phi);
            }
        }
        (alpha, best)
    });
    let mut out = RankOneResult { b: f64::INFINITY, phi: 0.0, alpha: 0.0, curve: Vec::with_capacity(n) };
    for (alpha, (v, phi)) in rows {
        out.curve.push((alpha, v));
        if v < out.b {
            out.b = v;
            out.phi = phi;
            out.alpha = alpha;
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Brillouin zone sampling

/// Base grid over `[0, 1)²` plus midpoint grids in the three strips next to
/// the origin (`k1` small, `k2` small, both small).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BzGrid {
    pub base: usize,
    pub refine: usize,
    /// Width of the refinement strips.
    pub zone: f64,
}

impl Default for BzGrid {
    fn default() -> Self {
        BzGrid { base: 40, refine: 20, zone: 0.025 }
    }
}

impl BzGrid {
    /// Sample points; `(0, 0)` comes first.
    pub fn samples(&self) -> Vec<[f64; 2]> {
        let mut s = Vec::with_capacity(self.base * self.base + 3 * self.refine * self.refine);
        for i in 0..self.base {
            for j in 0..self.base {
                s.push([i as f64 / self.base as f64, j as f64 / self.base as f64]);
            }
        }
        if self.refine > 0 && self.zone > 0.0 {
            let r = self.refine as f64;
            let z = self.zone;
            let small = |i: usize| (i as f64 + 0.5) * z / r;
            let large = |i: usize| z + (i as f64 + 0.5) * (1.0 - z) / r;
            for i in 0..self.refine {
                for j in 0..self.refine {
                    s.push([small(i), large(j)]);
                }
            }
            for i in 0..self.refine {
                for j in 0..self.refine {
                    s.push([large(i), small(j)]);
                }
            }
            for i in 0..self.refine {
                for j in 0..self.refine {
                    s.push([small(i), small(j)]);
                }
            }
        }
        s
    }
}

/// `‖k‖∞` after wrapping each coordinate into `(−½, ½]`.
pub fn wrapped_norm(k: [f64; 2]) -> f64 {
    k.iter().map(|&c| (c - libm::round(c)).abs()).fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Bloch pencil

/// Converged Bloch eigenpair.
#[derive(Debug, Clone)]
pub struct BlochEigen {
    pub beta: f64,
    /// Mode over the full (unreduced) dofs, with slaves carrying their phase.
    pub mode: Vec<Complex64>,
    pub residual: f64,
    pub steps: usize,
    pub shift: f64,
}

/// The pencil of one loaded state, reusable over wave vectors.
#[derive(Debug, Clone)]
pub struct BlochProblem<'a> {
    model: &'a RveModel,
    active: Vec<usize>,
    stiff: Vec<ElemMat>,
    gram: Vec<ElemMat>,
    /// Lattice offset of each node from its master.
    cells: Vec<[i32; 2]>,
    pinned: SparseSystem,
    free: SparseSystem,
    scale: f64,
    /// Largest `|K − Kᵀ|` relative to `max |K|` over the active elements.
    pub asymmetry: f64,
}

const HERMITIAN_TOL: f64 = 1e-8;
const LANCZOS_TOL: f64 = 1e-10;
const LANCZOS_ACCEPT: f64 = 1e-6;

impl<'a> BlochProblem<'a> {
    /// `stiff` holds element tangents indexed by element id; only those in
    /// `active` are used.
    pub fn new(model: &'a RveModel, mut stiff: Vec<ElemMat>, active: Vec<usize>) -> Result<Self> {
        let mesh = &model.mesh;
        if active.is_empty() {
            return Err(Error::Topology("no solid elements".into()));
        }
        if stiff.len() != mesh.n_elements() {
            return Err(Error::InvalidInput("one tangent per element expected".into()));
        }
        let (_, comps) = solid_components(mesh, &active, Connectivity::Node);
        if comps != 1 {
            return Err(Error::Topology(format!("solid phase has {comps} disconnected parts")));
        }
        let mut asym = 0.0f64;
        let mut kmax = 0.0f64;
        for &e in &active {
            let k = &mut stiff[e];
            for a in 0..8 {
                for b in 0..8 {
                    asym = asym.max((k[a][b] - k[b][a]).abs());
                    kmax = kmax.max(k[a][b].abs());
                }
            }
            for a in 0..8 {
                for b in a + 1..8 {
                    let s = 0.5 * (k[a][b] + k[b][a]);
                    k[a][b] = s;
                    k[b][a] = s;
                }
            }
        }
        let asymmetry = if kmax > 0.0 { asym / kmax } else { 0.0 };
        if !(asymmetry <= HERMITIAN_TOL) {
            return Err(Error::Eigen(format!("tangent is not symmetric (relative defect {asymmetry:.2e})")));
        }
        let mut gram = vec![[[0.0; 8]; 8]; mesh.n_elements()];
        let (mut tk, mut tg) = (0.0, 0.0);
        for &e in &active {
            gram[e] = gradient_gram(&model.cache[e].geom);
            for a in 0..8 {
                tk += stiff[e][a][a].abs();
                tg += gram[e][a][a];
            }
        }
        let scale = if tk > 0.0 && tg > 0.0 { tk / tg } else { 1.0 };

        let mut cells = vec![[0i32; 2]; mesh.n_nodes()];
        for p in &mesh.pairs {
            cells[p.slave] = p.cells;
        }
        let mut in_solid = vec![false; mesh.n_nodes()];
        for &e in &active {
            for &v in &mesh.elements[e] {
                in_solid[v] = true;
            }
        }
        let class_of = |pin: Option<usize>| -> Vec<Option<usize>> {
            (0..mesh.n_nodes())
                .map(|v| {
                    let m = mesh.master_of[v];
                    (in_solid[v] && Some(m) != pin).then_some(m)
                })
                .collect()
        };
        let pin = mesh.master_of[mesh.elements[active[0]][0]];
        let pinned = SparseSystem::new(&model.element_dofs, active.clone(), DofMap::from_node_classes(&class_of(Some(pin))));
        let free = SparseSystem::new(&model.element_dofs, active.clone(), DofMap::from_node_classes(&class_of(None)));
        Ok(BlochProblem { model, active, stiff, gram, cells, pinned, free, scale, asymmetry })
    }

    /// Pencil of the converged displacement `u` of `design` (already
    /// thresholded if requested); `threshold` selects the solid elements.
    pub fn at_state(
        model: &'a RveModel,
        set: &MaterialSet,
        design: &Design,
        ip: &InterpolationParams,
        u: &[f64],
        threshold: Option<f64>,
    ) -> Result<Self> {
        let mods = design_moduli(set, ip, design, StiffnessMode::Interpolated);
        let asm = model.assemble(u, &mods, true)?;
        Self::new(model, asm.ke, active_elements(design, threshold))
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    /// Reduced dimension at `k`.
    pub fn dim(&self, k: [f64; 2]) -> usize {
        self.system(k).dim()
    }

    fn system(&self, k: [f64; 2]) -> &SparseSystem {
        if wrapped_norm(k) == 0.0 {
            &self.pinned
        } else {
            &self.free
        }
    }

    /// Phase carried by each full dof.
    pub fn phases(&self, k: [f64; 2]) -> Vec<Complex64> {
        let mut ph = Vec::with_capacity(2 * self.cells.len());
        for c in &self.cells {
            let arg = 2.0 * PI * (k[0] * c[0] as f64 + k[1] * c[1] as f64);
            let z = Complex64::new(libm::cos(arg), libm::sin(arg));
            ph.push(z);
            ph.push(z);
        }
        ph
    }

    /// `Tᴴ M T x` for element matrices `mats`.
    fn apply(&self, sys: &SparseSystem, ph: &[Complex64], mats: &[ElemMat], x: &[Complex64]) -> Vec<Complex64> {
        let zero = Complex64::new(0.0, 0.0);
        let mut out = vec![zero; sys.dim()];
        for &e in &self.active {
            let d = &self.model.element_dofs[e];
            let r: [Option<usize>; 8] = core::array::from_fn(|a| sys.dofs.get(d[a]));
            let xe: [Complex64; 8] = core::array::from_fn(|a| r[a].map_or(zero, |i| ph[d[a]] * x[i]));
            let m = &mats[e];
            for a in 0..8 {
                if let Some(i) = r[a] {
                    let mut acc = zero;
                    for b in 0..8 {
                        acc += xe[b] * m[a][b];
                    }
                    out[i] += ph[d[a]].conj() * acc;
                }
            }
        }
        out
    }

    /// Smallest eigenvalue of the Bloch pencil at `k`.
    pub fn solve(&self, k: [f64; 2]) -> Result<BlochEigen> {
        let sys = self.system(k);
        let n = sys.dim();
        if n == 0 {
            return Err(Error::Eigen("empty Bloch system".into()));
        }
        let ph = self.phases(k);
        let el = &self.model.element_dofs;
        // shift below the spectrum, checked by inertia
        let mut sigma = -1e-3 * self.scale;
        let mut factor = None;
        for _ in 0..60 {
            let mut shifted = vec![[[0.0; 8]; 8]; self.stiff.len()];
            for &e in &self.active {
                for a in 0..8 {
                    for b in 0..8 {
                        shifted[e][a][b] = self.stiff[e][a][b] - sigma * self.gram[e][a][b];
                    }
                }
            }
            match sys.factor(&sys.assemble_phased(el, &shifted, &ph)) {
                Ok(f) if f.negative_pivots() == 0 => {
                    factor = Some(f);
                    break;
                }
                _ => sigma *= 4.0,
            }
        }
        let factor = factor.ok_or_else(|| Error::Eigen("no admissible shift below the spectrum".into()))?;
        let start = start_vector(n);
        let ritz = lanczos::dominant(
            n,
            &start,
            |x: &[Complex64]| {
                let mut y = self.apply(sys, &ph, &self.gram, x);
                factor.solve_in_place(&mut y);
                y
            },
            |x: &[Complex64]| self.apply(sys, &ph, &self.gram, x),
            LANCZOS_TOL,
            n.min(150),
        )
        .ok_or_else(|| Error::Eigen("degenerate start vector".into()))?;
        if !(ritz.theta > 0.0) || ritz.residual > LANCZOS_ACCEPT * ritz.theta {
            return Err(Error::Eigen(format!(
                "Lanczos stalled at k = ({:.4}, {:.4}): θ = {:.3e}, residual {:.2e}",
                k[0], k[1], ritz.theta, ritz.residual
            )));
        }
        let mut mode = vec![Complex64::new(0.0, 0.0); ph.len()];
        for (d, m) in mode.iter_mut().enumerate() {
            if let Some(i) = sys.dofs.get(d) {
                *m = ph[d] * ritz.vector[i];
            }
        }
        Ok(BlochEigen { beta: sigma + 1.0 / ritz.theta, mode, residual: ritz.residual, steps: ritz.steps, shift: sigma })
    }

    pub fn beta(&self, k: [f64; 2]) -> Result<f64> {
        self.solve(k).map(|e| e.beta)
    }

    /// Evaluate every sample of `grid`; failures are recorded, not fatal.
    pub fn sweep(&self, grid: &BzGrid) -> BlochResult {
        let k = grid.samples();
        let vals = par::map(k.len(), |i| self.beta(k[i]));
        BlochResult::collect(k, vals, grid.zone)
    }
}

/// Fixed pseudo-random start so results are reproducible.
fn start_vector(n: usize) -> Vec<Complex64> {
    let mut s: u64 = 0x9E37_79B9_7F4A_7C15;
    let mut next = || {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    (0..n).map(|_| Complex64::new(next(), next())).collect()
}

/// `β_k` at one wave vector for the converged displacement `u`.
#[allow(clippy::too_many_arguments)]
pub fn bloch_indicator(
    model: &RveModel,
    set: &MaterialSet,
    design: &Design,
    ip: &InterpolationParams,
    u: &[f64],
    k: [f64; 2],
    threshold: Option<f64>,
) -> Result<f64> {
    BlochProblem::at_state(model, set, design, ip, u, threshold)?.beta(k)
}

#[derive(Debug, Clone)]
pub struct BlochResult {
    pub k: Vec<[f64; 2]>,
    pub beta: Vec<Option<f64>>,
    pub failures: Vec<(usize, String)>,
    /// Minimum over all successful samples and where it occurs.
    pub min_beta: f64,
    pub argmin: [f64; 2],
    pub beta_zero: Option<f64>,
    /// Minimum over nonzero samples with wrapped `‖k‖∞ ≤ zone`.
    pub beta_long: Option<f64>,
    pub k_long: [f64; 2],
}

impl BlochResult {
    fn collect(k: Vec<[f64; 2]>, vals: Vec<Result<f64>>, zone: f64) -> Self {
        let mut r = BlochResult {
            beta: Vec::with_capacity(k.len()),
            failures: Vec::new(),
            min_beta: f64::INFINITY,
            argmin: [0.0; 2],
            beta_zero: None,
            beta_long: None,
            k_long: [0.0; 2],
            k,
        };
        for (i, v) in vals.into_iter().enumerate() {
            let ki = r.k[i];
            match v {
                Ok(b) => {
                    if b < r.min_beta {
                        r.min_beta = b;
                        r.argmin = ki;
                    }
                    let w = wrapped_norm(ki);
                    if w == 0.0 {
                        r.beta_zero = Some(b);
                    } else if w <= zone * (1.0 + 1e-12) && r.beta_long.is_none_or(|l| b < l) {
                        r.beta_long = Some(b);
                        r.k_long = ki;
                    }
                    r.beta.push(Some(b));
                }
                Err(e) => {
                    r.failures.push((i, format!("{e}")));
                    r.beta.push(None);
                }
            }
        }
        r
    }

    /// `min β ≤ β(k → 0) ≤ β(k = 0)`, up to `tol` relative.
    pub fn chain_holds(&self, tol: f64) -> bool {
        let (Some(z), Some(l)) = (self.beta_zero, self.beta_long) else {
            return false;
        };
        let s = z.abs().max(l.abs()).max(self.min_beta.abs());
        self.min_beta <= l + tol * s && l <= z + tol * s
    }
}

// ---------------------------------------------------------------------------
// scans along a load path

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityOptions {
    /// Threshold for the solid phase; `None` analyses the raw density field.
    pub threshold: Option<f64>,
    pub grid: BzGrid,
    pub angle_step: f64,
    /// Run the Bloch sweep at each checkpoint (rank-one only otherwise).
    pub sweep: bool,
}

impl Default for StabilityOptions {
    fn default() -> Self {
        StabilityOptions { threshold: Some(SOLID_THRESHOLD), grid: BzGrid::default(), angle_step: PI / 720.0, sweep: true }
    }
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub lambda1: f64,
    pub lambda2: f64,
    pub rank_one: RankOneResult,
    pub bloch: Option<BlochResult>,
    /// Set when the Bloch pencil could not be built.
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct StabilityReport {
    pub checkpoints: Vec<Checkpoint>,
    /// Linear-energy threshold of the forward path.
    pub c: f64,
    /// Forward failure that cut the scan short.
    pub truncated: Option<Error>,
}

impl StabilityReport {
    /// First checkpoint with `B ≤ 0`.
    pub fn first_macro_loss(&self) -> Option<usize> {
        self.checkpoints.iter().position(|c| c.rank_one.b <= 0.0)
    }

    /// First checkpoint with `min β ≤ 0`.
    pub fn first_micro_loss(&self) -> Option<usize> {
        self.checkpoints.iter().position(|c| c.bloch.as_ref().is_some_and(|b| b.min_beta <= 0.0))
    }

    /// First checkpoint whose long-wavelength `β` is `≤ 0`.
    pub fn first_long_wave_loss(&self) -> Option<usize> {
        self.checkpoints
            .iter()
            .position(|c| c.bloch.as_ref().and_then(|b| b.beta_long).is_some_and(|b| b <= 0.0))
    }

    /// The ordering chain at every swept checkpoint.
    pub fn chain_holds(&self, tol: f64) -> bool {
        self.checkpoints.iter().filter_map(|c| c.bloch.as_ref()).all(|b| b.chain_holds(tol))
    }

    /// Loss of rank-one convexity and long-wavelength loss of `β` occur
    /// within one checkpoint of each other (or neither occurs).
    pub fn long_wave_consistent(&self) -> bool {
        match (self.first_macro_loss(), self.first_long_wave_loss()) {
            (None, None) => true,
            (Some(a), Some(b)) => a.abs_diff(b) <= 1,
            (Some(a), None) | (None, Some(a)) => a + 1 >= self.checkpoints.len(),
        }
    }
}

/// Drive `design` along `load` with `load.steps` equally spaced checkpoints and
/// evaluate both indicators at each checkpoint.
pub fn stability_scan(
    model: &RveModel,
    set: &MaterialSet,
    design: &Design,
    ip: &InterpolationParams,
    load: &LoadCase,
    st: &SolverSettings,
    opts: &StabilityOptions,
) -> Result<StabilityReport> {
    let design = match opts.threshold {
        Some(t) => design.thresholded(t),
        None => design.clone(),
    };
    // one recorded step per checkpoint
    let st = SolverSettings { min_steps: load.steps.max(1), ..*st };
    let (path, truncated) = uniaxial_drive_partial(model, set, &design, ip, load, &st)?;
    let ip = InterpolationParams { c: path.c, ..*ip };
    let mut checkpoints = Vec::with_capacity(path.steps.len());
    for s in &path.steps {
        let rank_one = rank_one_indicator(&s.a_bar, opts.angle_step);
        let (bloch, error) = if opts.sweep {
            // the design is already 0/1 when thresholded
            match BlochProblem::at_state(model, set, &design, &ip, &s.u, opts.threshold.map(|_| 0.5)) {
                Ok(p) => (Some(p.sweep(&opts.grid)), None),
                Err(e) => (None, Some(format!("{e}"))),
            }
        } else {
            (None, None)
        };
        checkpoints.push(Checkpoint { lambda1: s.lambda1, lambda2: s.lambda2, rank_one, bloch, error });
    }
    Ok(StabilityReport { checkpoints, c: path.c, truncated })
}
