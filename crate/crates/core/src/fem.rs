//! Constrained finite-element solution of the periodic cell.
//!
//! Unknowns are the nodal displacement fluctuation-inclusive field `u`, the
//! multipliers `λ` of the fixed node and `μ` of the periodic pairs. The
//! residual is
//!
//! ```text
//! R = [ F_int(u) − M1ᵀλ − M2ᵀμ ;  −M1 u ;  −M2 u + L_M [F̄ − I] ]
//! ```
//!
//! Linear systems with the Jacobian are solved by eliminating the fixed
//! node and the slave nodes (each slave becomes its master plus a known
//! jump), factoring the reduced stiffness, and recovering the multipliers
//! from the residual of the eliminated rows.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::element::{element_response, work_conjugate_stress, ElemMat, ElemVec, ElementCache, ElementModuli};
use crate::error::{Error, Result};
use crate::material::{effective_moduli, gamma, linear_elastic_moduli, InterpolationParams, MaterialSet};
use crate::mesh::{ConstraintMatrices, RveMesh};
use crate::par;
use crate::sparse::LdlFactor;
use crate::system::{element_matvec, DofMap, SparseSystem};
use crate::tensor::{Mat2, Mat4};

/// Physical (filtered) densities, one per element. `rho2` is ignored by
/// single-material sets.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub rho1: Vec<f64>,
    pub rho2: Vec<f64>,
}

impl Design {
    pub fn uniform(n: usize, rho1: f64, rho2: f64) -> Self {
        Design { rho1: vec![rho1; n], rho2: vec![rho2; n] }
    }

    pub fn solid(n: usize) -> Self {
        Self::uniform(n, 1.0, 1.0)
    }

    pub fn len(&self) -> usize {
        self.rho1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho1.is_empty()
    }

    pub fn validate(&self, n_elements: usize) -> Result<()> {
        if self.rho1.len() != n_elements || self.rho2.len() != n_elements {
            return Err(Error::InvalidInput(format!(
                "design has {} / {} densities, mesh has {} elements",
                self.rho1.len(),
                self.rho2.len(),
                n_elements
            )));
        }
        if self.rho1.iter().chain(&self.rho2).any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::InvalidInput("densities must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Snap to 0/1 at `threshold`.
    pub fn thresholded(&self, threshold: f64) -> Design {
        let t = |r: &f64| if *r >= threshold { 1.0 } else { 0.0 };
        Design { rho1: self.rho1.iter().map(t).collect(), rho2: self.rho2.iter().map(t).collect() }
    }
}

/// Which interpolation feeds the element moduli.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StiffnessMode {
    /// Forward analysis: linear-energy blend with switch γ(ρ1).
    Interpolated,
    /// Reference-state stiffness for the stiffness constraints: γ ≡ 1, no
    /// linear term.
    Reference,
}

pub fn element_moduli(set: &MaterialSet, ip: &InterpolationParams, rho1: f64, rho2: f64, mode: StiffnessMode) -> ElementModuli {
    let eff = effective_moduli(set, ip, rho1, rho2);
    let mut m = ElementModuli {
        gamma: 1.0,
        dgamma: 0.0,
        kappa: eff.kappa,
        mu: eff.mu,
        dkappa_d1: eff.dkappa_d1,
        dmu_d1: eff.dmu_d1,
        dkappa_d2: eff.dkappa_d2,
        dmu_d2: eff.dmu_d2,
        e_lin: 0.0,
        de_lin: 0.0,
    };
    if mode == StiffnessMode::Interpolated {
        let (g, dg) = gamma(rho1, ip.beta, ip.c);
        let (el, del) = linear_elastic_moduli(rho1, ip.pl, set.linear_e0, ip.eps_e);
        m.gamma = g;
        m.dgamma = dg;
        m.e_lin = el;
        m.de_lin = del;
    }
    m
}

pub fn design_moduli(set: &MaterialSet, ip: &InterpolationParams, design: &Design, mode: StiffnessMode) -> Vec<ElementModuli> {
    design
        .rho1
        .iter()
        .zip(&design.rho2)
        .map(|(&a, &b)| element_moduli(set, ip, a, b, mode))
        .collect()
}

/// Newton and load-stepping controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    /// Relative tolerance on |Δ·R|.
    pub energy_tol: f64,
    /// Absolute floor on |Δ·R|.
    pub energy_floor: f64,
    pub max_newton: usize,
    pub initial_ratio: f64,
    pub max_ratio: f64,
    pub min_ratio: f64,
    /// Minimum number of recorded steps on a load path.
    pub min_steps: usize,
    /// Absolute tolerance on the lateral stress of the mixed driver.
    pub outer_tol: f64,
    pub max_outer: usize,
    pub c_increment: f64,
    /// c-updates are allowed while c stays below this.
    pub c_limit: f64,
    pub allow_c_update: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            energy_tol: 1e-12,
            energy_floor: 1e-28,
            max_newton: 25,
            initial_ratio: 0.05,
            max_ratio: 0.05,
            min_ratio: 0.001,
            min_steps: 20,
            outer_tol: 1e-9,
            max_outer: 30,
            c_increment: 0.05,
            c_limit: 1.0,
            allow_c_update: true,
        }
    }
}

/// Converged (or trial) constrained state.
#[derive(Debug, Clone, PartialEq)]
pub struct RveState {
    pub u: Vec<f64>,
    pub lambda: [f64; 2],
    pub mu: Vec<f64>,
    pub f_bar: Mat2,
}

impl RveState {
    pub fn reference(model: &RveModel) -> Self {
        RveState {
            u: vec![0.0; model.mesh.n_dofs()],
            lambda: [0.0; 2],
            mu: vec![0.0; 2 * model.mesh.n_pairs()],
            f_bar: Mat2::IDENTITY,
        }
    }
}

/// Solution of one Jacobian system.
#[derive(Debug, Clone, PartialEq)]
pub struct SaddleSolution {
    pub u: Vec<f64>,
    pub lambda: [f64; 2],
    pub mu: Vec<f64>,
}

/// Internal forces and element tangents at one state.
#[derive(Debug, Clone)]
pub struct Assembly {
    pub f_int: Vec<f64>,
    pub ke: Vec<ElemMat>,
}

/// Assembly plus the factorization of the reduced stiffness.
#[derive(Debug, Clone)]
pub struct Linearization {
    pub asm: Assembly,
    pub factor: LdlFactor<f64>,
}

/// Homogenized tangent and the columns `J⁻¹ L̂ e_j`.
#[derive(Debug, Clone)]
pub struct TangentColumns {
    pub a_bar: Mat4,
    pub z: [SaddleSolution; 4],
}

/// One Newton iteration as logged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonRecord {
    pub iteration: usize,
    pub energy: f64,
}

/// Mesh, element caches, constraints and the reduced-system plan.
#[derive(Debug, Clone)]
pub struct RveModel {
    pub mesh: RveMesh,
    pub cache: Vec<ElementCache>,
    pub cons: ConstraintMatrices,
    pub element_dofs: Vec<[usize; 8]>,
    pub sys: SparseSystem,
    /// Slave pairs whose master is the fixed node.
    fixed_slaves: Vec<usize>,
}

impl RveModel {
    pub fn new(mesh: RveMesh) -> Result<Self> {
        let cache = mesh
            .elements
            .iter()
            .enumerate()
            .map(|(e, el)| {
                let x = core::array::from_fn(|k| mesh.nodes[el[k]]);
                ElementCache::new(&x, 0.2).ok_or_else(|| Error::Mesh(format!("element {e} is degenerate")))
            })
            .collect::<Result<Vec<_>>>()?;
        let cons = mesh.constraints();
        let element_dofs: Vec<[usize; 8]> = (0..mesh.n_elements()).map(|e| mesh.element_dofs(e)).collect();
        let class_of: Vec<Option<usize>> = (0..mesh.n_nodes())
            .map(|n| {
                let m = mesh.master_of[n];
                (m != mesh.fixed_node).then_some(m)
            })
            .collect();
        let dofs = DofMap::from_node_classes(&class_of);
        let sys = SparseSystem::new(&element_dofs, (0..mesh.n_elements()).collect(), dofs);
        let fixed_slaves = mesh
            .pairs
            .iter()
            .enumerate()
            .filter(|(_, p)| p.master == mesh.fixed_node)
            .map(|(q, _)| q)
            .collect();
        Ok(RveModel { mesh, cache, cons, element_dofs, sys, fixed_slaves })
    }

    pub fn n_elements(&self) -> usize {
        self.mesh.n_elements()
    }

    fn gather(&self, e: usize, u: &[f64]) -> ElemVec {
        let d = &self.element_dofs[e];
        core::array::from_fn(|a| u[d[a]])
    }

    /// Internal force and element tangents at `u`.
    pub fn assemble(&self, u: &[f64], mods: &[ElementModuli], tangent: bool) -> Result<Assembly> {
        let res = par::map(self.n_elements(), |e| {
            let ue = self.gather(e, u);
            let c = &self.cache[e];
            let mut k = [[0.0; 8]; 8];
            let f = element_response(&c.geom, &c.k_lin_unit, &ue, &mods[e], tangent.then_some(&mut k));
            f.map(|f| (f, k)).map_err(|det| Error::NonPhysical { element: e, det })
        });
        let mut f_int = vec![0.0; self.mesh.n_dofs()];
        let mut ke = Vec::with_capacity(if tangent { self.n_elements() } else { 0 });
        for (e, r) in res.into_iter().enumerate() {
            let (f, k) = r?;
            for (a, &d) in self.element_dofs[e].iter().enumerate() {
                f_int[d] += f[a];
            }
            if tangent {
                ke.push(k);
            }
        }
        Ok(Assembly { f_int, ke })
    }

    pub fn linearize(&self, u: &[f64], mods: &[ElementModuli]) -> Result<Linearization> {
        let asm = self.assemble(u, mods, true)?;
        let factor = self.sys.factor(&self.sys.assemble(&asm.ke))?;
        Ok(Linearization { asm, factor })
    }

    /// Reference-state stiffness built from the per-unit-modulus caches.
    pub fn reference_linearization(&self, mods: &[ElementModuli]) -> Result<Linearization> {
        let ke: Vec<ElemMat> = (0..self.n_elements())
            .map(|e| {
                let c = &self.cache[e];
                let (k, m) = (mods[e].kappa, mods[e].mu);
                core::array::from_fn(|i| core::array::from_fn(|j| k * c.k0_kappa[i][j] + m * c.k0_mu[i][j]))
            })
            .collect();
        let factor = self.sys.factor(&self.sys.assemble(&ke))?;
        Ok(Linearization { asm: Assembly { f_int: vec![0.0; self.mesh.n_dofs()], ke }, factor })
    }

    /// Solve `J_T [x; yλ; yμ] = [r1; r2; r3]`.
    pub fn solve_saddle(&self, lin: &Linearization, r1: &[f64], r2: [f64; 2], r3: &[f64]) -> SaddleSolution {
        let n = self.mesh.n_dofs();
        let fixed = self.cons.fixed_dofs;
        // particular part g: fixed node and its slaves, then jumps on slaves
        let mut g = vec![0.0; n];
        g[fixed[0]] = -r2[0];
        g[fixed[1]] = -r2[1];
        for (q, p) in self.mesh.pairs.iter().enumerate() {
            for c in 0..2 {
                let base = if p.master == self.mesh.fixed_node { -r2[c] } else { 0.0 };
                g[2 * p.slave + c] = base - r3[2 * q + c];
            }
        }
        let mut kg = vec![0.0; n];
        element_matvec(&self.element_dofs, &self.sys.active, &lin.asm.ke, &g, &mut kg);
        let dofs = &self.sys.dofs;
        let mut w = vec![0.0; dofs.n_reduced];
        for d in 0..n {
            if let Some(j) = dofs.get(d) {
                w[j] += r1[d] - kg[d];
            }
        }
        lin.factor.solve_in_place(&mut w);
        let mut x = g;
        for d in 0..n {
            if let Some(j) = dofs.get(d) {
                x[d] += w[j];
            }
        }
        let mut s = vec![0.0; n];
        element_matvec(&self.element_dofs, &self.sys.active, &lin.asm.ke, &x, &mut s);
        for d in 0..n {
            s[d] -= r1[d];
        }
        let mut mu = vec![0.0; 2 * self.mesh.n_pairs()];
        for (q, p) in self.mesh.pairs.iter().enumerate() {
            mu[2 * q] = s[2 * p.slave];
            mu[2 * q + 1] = s[2 * p.slave + 1];
        }
        let mut lambda = [s[fixed[0]], s[fixed[1]]];
        for &q in &self.fixed_slaves {
            lambda[0] += mu[2 * q];
            lambda[1] += mu[2 * q + 1];
        }
        SaddleSolution { u: x, lambda, mu }
    }

    /// Residual blocks at `state` for macro-gradient `f_bar`.
    pub fn residual(&self, state: &RveState, f_int: &[f64], f_bar: &Mat2) -> (Vec<f64>, [f64; 2], Vec<f64>) {
        let mut r1 = f_int.to_vec();
        let fixed = self.cons.fixed_dofs;
        r1[fixed[0]] -= state.lambda[0];
        r1[fixed[1]] -= state.lambda[1];
        let neg_mu: Vec<f64> = state.mu.iter().map(|v| -v).collect();
        self.cons.m2t_add(&neg_mu, &mut r1);
        let r2 = [-state.u[fixed[0]], -state.u[fixed[1]]];
        let b = self.cons.b(f_bar);
        let mu_u = self.cons.m2_apply(&state.u);
        let r3 = b.iter().zip(&mu_u).map(|(b, m)| b - m).collect();
        (r1, r2, r3)
    }

    /// Newton iteration at fixed `f_bar`, starting from `state`. `reuse`, if
    /// given, must be the linearization at the current `state.u`; it replaces
    /// the first assembly. Returns the linearization used in the last
    /// iteration. `e_ref` is the energy scale of the load path (updated on
    /// first use).
    pub fn newton(
        &self,
        state: &mut RveState,
        f_bar: Mat2,
        mods: &[ElementModuli],
        st: &SolverSettings,
        e_ref: &mut f64,
        mut reuse: Option<Linearization>,
        log: &mut Vec<NewtonRecord>,
    ) -> Result<Linearization> {
        state.f_bar = f_bar;
        let mut e0 = 0.0;
        for it in 0..st.max_newton {
            let lin = match reuse.take() {
                Some(l) if it == 0 => l,
                _ => self.linearize(&state.u, mods)?,
            };
            let (r1, r2, r3) = self.residual(state, &lin.asm.f_int, &f_bar);
            let n1: Vec<f64> = r1.iter().map(|v| -v).collect();
            let n3: Vec<f64> = r3.iter().map(|v| -v).collect();
            let d = self.solve_saddle(&lin, &n1, [-r2[0], -r2[1]], &n3);
            let energy = (d.u.iter().zip(&r1).map(|(a, b)| a * b).sum::<f64>()
                + d.lambda[0] * r2[0]
                + d.lambda[1] * r2[1]
                + d.mu.iter().zip(&r3).map(|(a, b)| a * b).sum::<f64>())
            .abs();
            log.push(NewtonRecord { iteration: it, energy });
            if !energy.is_finite() {
                return Err(Error::NotConverged("non-finite Newton increment".into()));
            }
            if it == 0 {
                e0 = energy;
                if *e_ref <= 0.0 {
                    *e_ref = energy;
                }
            }
            for (a, b) in state.u.iter_mut().zip(&d.u) {
                *a += b;
            }
            state.lambda[0] += d.lambda[0];
            state.lambda[1] += d.lambda[1];
            for (a, b) in state.mu.iter_mut().zip(&d.mu) {
                *a += b;
            }
            let scale = e0.max(*e_ref);
            if energy <= st.energy_tol * scale || energy <= st.energy_floor {
                return Ok(lin);
            }
            if it >= 3 && energy > 1e3 * e0 {
                return Err(Error::NotConverged(format!("diverging (|Δ·R| = {energy:.3e})")));
            }
        }
        Err(Error::NotConverged(format!("no convergence in {} iterations", st.max_newton)))
    }

    /// `P̄ = (1/V) L_Mᵀ μ`.
    pub fn homogenized_stress(&self, state: &RveState) -> Mat2 {
        Mat2(self.cons.lt_apply(&state.mu)).scale(1.0 / self.mesh.volume)
    }

    /// `Ā = −(1/V) L̂ᵀ J⁻¹ L̂` from the given linearization.
    pub fn homogenized_tangent(&self, lin: &Linearization) -> TangentColumns {
        let n = self.mesh.n_dofs();
        let zero = vec![0.0; n];
        let mut a_bar = [[0.0; 4]; 4];
        let z: [SaddleSolution; 4] = core::array::from_fn(|j| {
            let r3: Vec<f64> = self.cons.l_m.iter().map(|row| row[j]).collect();
            let z = self.solve_saddle(lin, &zero, [0.0; 2], &r3);
            let p = self.cons.lt_apply(&z.mu);
            for i in 0..4 {
                a_bar[i][j] = -p[i] / self.mesh.volume;
            }
            z
        });
        TangentColumns { a_bar, z }
    }

    /// Volume average of the work-conjugate point stress.
    pub fn average_point_stress(&self, state: &RveState, mods: &[ElementModuli]) -> Result<Mat2> {
        let mut acc = [0.0; 4];
        for e in 0..self.n_elements() {
            let c = &self.cache[e];
            let ue = self.gather(e, &state.u);
            let p = work_conjugate_stress(&c.geom, &ue, &mods[e]).map_err(|det| Error::NonPhysical { element: e, det })?;
            for s in 0..4 {
                for k in 0..4 {
                    acc[k] += c.geom.w[s] * p[s][k];
                }
            }
        }
        Ok(Mat2(acc).scale(1.0 / self.mesh.volume))
    }

    pub fn element_displacement(&self, e: usize, u: &[f64]) -> ElemVec {
        self.gather(e, u)
    }
}

/// One attempted increment of an adaptive load path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubstepRecord {
    pub t: f64,
    pub dt: f64,
    pub newton_iterations: usize,
    pub converged: bool,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordedState {
    pub t: f64,
    pub f_bar: Mat2,
    pub p_bar: Mat2,
}

#[derive(Debug, Clone)]
pub struct RveSolveResult {
    pub state: RveState,
    pub p_bar: Mat2,
    pub recorded: Vec<RecordedState>,
    pub trail: Vec<SubstepRecord>,
    pub newton_log: Vec<NewtonRecord>,
    /// Linear-energy threshold after any c-updates.
    pub c: f64,
    /// Final linearization (for tangents).
    pub lin: Linearization,
}

/// Deformation-driven solve from the reference state to `f_target` with
/// adaptive load ratios; on persistent failure the linear-energy threshold
/// is raised and the whole path is re-solved.
pub fn solve_rve(
    model: &RveModel,
    set: &MaterialSet,
    design: &Design,
    ip: &InterpolationParams,
    f_target: Mat2,
    st: &SolverSettings,
) -> Result<RveSolveResult> {
    design.validate(model.n_elements())?;
    let mut ip = *ip;
    let mut trail = Vec::new();
    loop {
        let mods = design_moduli(set, &ip, design, StiffnessMode::Interpolated);
        match solve_path(model, &mods, f_target, st, ip.c, &mut trail) {
            Ok((state, recorded, newton_log, lin)) => {
                let p_bar = model.homogenized_stress(&state);
                return Ok(RveSolveResult { state, p_bar, recorded, trail, newton_log, c: ip.c, lin });
            }
            Err(e) if e.is_recoverable() && st.allow_c_update && ip.c + st.c_increment < st.c_limit => {
                ip.c += st.c_increment;
            }
            Err(e) => return Err(e),
        }
    }
}

#[allow(clippy::type_complexity)]
fn solve_path(
    model: &RveModel,
    mods: &[ElementModuli],
    f_target: Mat2,
    st: &SolverSettings,
    c: f64,
    trail: &mut Vec<SubstepRecord>,
) -> Result<(RveState, Vec<RecordedState>, Vec<NewtonRecord>, Linearization)> {
    let mut state = RveState::reference(model);
    let mut lin = model.linearize(&state.u, mods)?;
    let cap = st.max_ratio.min(1.0 / st.min_steps.max(1) as f64);
    let mut dt = st.initial_ratio.min(cap);
    let mut t = 0.0;
    let mut e_ref = 0.0;
    let mut recorded = Vec::new();
    let mut log = Vec::new();
    let f_at = |t: f64| Mat2::IDENTITY + (f_target - Mat2::IDENTITY).scale(t);
    while t < 1.0 - 1e-12 {
        let step = dt.min(1.0 - t);
        let mut trial = state.clone();
        let before = log.len();
        match model.newton(&mut trial, f_at(t + step), mods, st, &mut e_ref, Some(lin.clone()), &mut log) {
            Ok(l) => {
                trail.push(SubstepRecord { t: t + step, dt: step, newton_iterations: log.len() - before, converged: true, c });
                t += step;
                if (1.0 - t).abs() < 1e-12 {
                    t = 1.0;
                }
                state = trial;
                // refresh the linearization at the converged point
                lin = model.linearize(&state.u, mods).unwrap_or(l);
                recorded.push(RecordedState { t, f_bar: state.f_bar, p_bar: model.homogenized_stress(&state) });
                dt = (2.0 * dt).min(cap);
            }
            Err(e) if e.is_recoverable() => {
                trail.push(SubstepRecord { t: t + step, dt: step, newton_iterations: log.len() - before, converged: false, c });
                dt = 0.5 * step;
                if dt < st.min_ratio {
                    return Err(e);
                }
            }
            Err(e) => return Err(e),
        }
    }
    Ok((state, recorded, log, lin))
}
