//! Macroscopic loading: principal-stretch parametrization of F̄, the mixed
//! uniaxial driver and the effective Poisson's ratio.
//!
//! The driver prescribes the stretch λ̄2 along the rotated axis `θ + 90°`
//! and solves for λ̄1 such that the rotated lateral stress P̄11^Q vanishes.
//! Each Newton iteration solves the constrained cell system bordered by the
//! lateral-stress equation; the Schur complement is qᵀĀq.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fem::{
    design_moduli, Design, Linearization, RveModel, RveState, SaddleSolution, SolverSettings,
    StiffnessMode, SubstepRecord,
};
use crate::element::ElementModuli;
use crate::material::{InterpolationParams, MaterialSet};
use crate::tensor::{bilinear4, dot4, Mat2, Mat4, Vec4};

/// `F̄ = Q diag(λ1, λ2) Qᵀ` with `Q` the rotation by `theta` (radians).
pub fn macro_f(lambda1: f64, lambda2: f64, theta: f64) -> Mat2 {
    let (s, c) = libm::sincos(theta);
    let off = (lambda1 - lambda2) * c * s;
    Mat2::new(lambda1 * c * c + lambda2 * s * s, off, off, lambda1 * s * s + lambda2 * c * c)
}

/// `∂F̄/∂λ1` (vectorised); also the row of the rotation operator that
/// extracts the 11-component in the rotated frame.
pub fn axis_q(theta: f64) -> Vec4 {
    let (s, c) = libm::sincos(theta);
    [c * c, c * s, c * s, s * s]
}

/// `∂F̄/∂λ2`.
pub fn axis_q2(theta: f64) -> Vec4 {
    let (s, c) = libm::sincos(theta);
    [s * s, -c * s, -c * s, c * c]
}

/// Operator `R` with `[X^Q] = R [X]` for `X^Q = Qᵀ X Q`; tangents rotate
/// as `[A^Q] = R [A] Rᵀ`.
pub fn rotation_operator(theta: f64) -> Mat4 {
    let (s, c) = libm::sincos(theta);
    let q = [[c, -s], [s, c]];
    core::array::from_fn(|a| {
        let (i, j) = (a % 2, a / 2);
        core::array::from_fn(|b| {
            let (k, l) = (b % 2, b / 2);
            q[l][j] * q[k][i]
        })
    })
}

pub fn rotate_tangent(a: &Mat4, theta: f64) -> Mat4 {
    let r = rotation_operator(theta);
    core::array::from_fn(|i| core::array::from_fn(|j| bilinear4(&r[i], a, &r[j])))
}

/// `P̄11^Q`: the stress component along the rotated 1-axis.
pub fn rotated_axial_stress(p: &Mat2, theta: f64) -> f64 {
    dot4(&axis_q(theta), &p.0)
}

/// `∂P̄11^Q/∂λ1 = qᵀ Ā q`.
pub fn outer_jacobian(a_bar: &Mat4, theta: f64) -> f64 {
    let q = axis_q(theta);
    bilinear4(&q, a_bar, &q)
}

/// `ν̄ = −(λ̄1 − 1)/(λ̄2 − 1)`; undefined at λ̄2 = 1.
pub fn poisson_ratio(lambda1: f64, lambda2: f64) -> Option<f64> {
    let e2 = lambda2 - 1.0;
    (e2 != 0.0).then(|| -(lambda1 - 1.0) / e2)
}

/// Mixed uniaxial load case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadCase {
    /// Target stretch along the loaded axis.
    pub lambda2: f64,
    /// Orientation of the lateral axis, degrees.
    pub theta_deg: f64,
    /// Recorded steps (at least the solver's `min_steps`).
    pub steps: usize,
}

impl LoadCase {
    pub fn theta(&self) -> f64 {
        self.theta_deg * core::f64::consts::PI / 180.0
    }
}

/// Converged state at one recorded step.
#[derive(Debug, Clone)]
pub struct PathStep {
    pub lambda1: f64,
    pub lambda2: f64,
    pub f_bar: Mat2,
    pub p_bar: Mat2,
    pub a_bar: Mat4,
    /// Residual lateral stress P̄11^Q.
    pub lateral: f64,
    /// `qᵀĀq`.
    pub j_ot: f64,
    pub u: Vec<f64>,
    /// Displacement part of `J⁻¹ h`, `h = L̂ q / V`.
    pub z_u: Vec<f64>,
    pub nu: Option<f64>,
}

/// One bordered Newton iteration as logged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveRecord {
    pub step: usize,
    pub lambda2: f64,
    pub iteration: usize,
    pub energy: f64,
    pub lateral: f64,
}

#[derive(Debug, Clone)]
pub struct LoadPath {
    pub steps: Vec<PathStep>,
    /// Linear-energy threshold actually used.
    pub c: f64,
    /// Number of forward analyses run (restarts after c-updates included).
    pub analyses: usize,
    pub substeps: Vec<SubstepRecord>,
    pub log: Vec<DriveRecord>,
    /// Final state, for exports.
    pub state: RveState,
}

impl LoadPath {
    pub fn final_poisson(&self) -> Option<f64> {
        self.steps.last().and_then(|s| s.nu)
    }
}

/// Drive the cell along the mixed uniaxial path.
pub fn uniaxial_drive(
    model: &RveModel,
    set: &MaterialSet,
    design: &Design,
    ip: &InterpolationParams,
    load: &LoadCase,
    st: &SolverSettings,
) -> Result<LoadPath> {
    match drive(model, set, design, ip, load, st)? {
        (path, None) => Ok(path),
        (_, Some(e)) => Err(e),
    }
}

/// Like [`uniaxial_drive`], but a failure part-way returns the steps
/// recorded so far together with the error.
pub fn uniaxial_drive_partial(
    model: &RveModel,
    set: &MaterialSet,
    design: &Design,
    ip: &InterpolationParams,
    load: &LoadCase,
    st: &SolverSettings,
) -> Result<(LoadPath, Option<Error>)> {
    drive(model, set, design, ip, load, st)
}

fn drive(
    model: &RveModel,
    set: &MaterialSet,
    design: &Design,
    ip: &InterpolationParams,
    load: &LoadCase,
    st: &SolverSettings,
) -> Result<(LoadPath, Option<Error>)> {
    design.validate(model.n_elements())?;
    if !(load.lambda2 > 0.0) || load.lambda2 == 1.0 {
        return Err(Error::InvalidInput(format!("lambda2 = {} is not a valid target", load.lambda2)));
    }
    let mut ip = *ip;
    let mut analyses = 0;
    let mut substeps = Vec::new();
    let mut log = Vec::new();
    loop {
        analyses += 1;
        let mods = design_moduli(set, &ip, design, StiffnessMode::Interpolated);
        match drive_once(model, &mods, load, st, ip.c, &mut substeps, &mut log) {
            Ok((steps, state)) => return Ok((LoadPath { steps, c: ip.c, analyses, substeps, log, state }, None)),
            Err((e, _, _)) if e.is_recoverable() && st.allow_c_update && ip.c + st.c_increment < st.c_limit => {
                ip.c += st.c_increment;
            }
            Err((e, at, (steps, state))) => {
                let err = match e {
                    Error::InvalidInput(_) | Error::Mesh(_) => return Err(e),
                    other => Error::LoadPath { lambda2: at, reason: format!("{other}") },
                };
                return Ok((LoadPath { steps, c: ip.c, analyses, substeps, log, state }, Some(err)));
            }
        }
    }
}

struct Converged {
    lin: Linearization,
    cols: [SaddleSolution; 4],
    a_bar: Mat4,
}

#[allow(clippy::type_complexity)]
fn drive_once(
    model: &RveModel,
    mods: &[ElementModuli],
    load: &LoadCase,
    st: &SolverSettings,
    c: f64,
    substeps: &mut Vec<SubstepRecord>,
    log: &mut Vec<DriveRecord>,
) -> core::result::Result<(Vec<PathStep>, RveState), (Error, f64, (Vec<PathStep>, RveState))> {
    let n = load.steps.max(st.min_steps).max(1);
    let theta = load.theta();
    let total = load.lambda2 - 1.0;
    let mut state = RveState::reference(model);
    let mut lambda1 = 1.0;
    let mut lambda2 = 1.0;
    let mut lin = match model.linearize(&state.u, mods) {
        Ok(l) => l,
        Err(e) => return Err((e, 1.0, (Vec::new(), state))),
    };
    let mut e_ref = 0.0;
    let mut steps = Vec::with_capacity(n);
    for k in 1..=n {
        let target = 1.0 + total * k as f64 / n as f64;
        let mut dl = target - lambda2;
        loop {
            let l2 = if (lambda2 + dl - target).abs() < 1e-14 { target } else { lambda2 + dl };
            let mut trial = state.clone();
            let mut l1 = lambda1;
            let before = log.len();
            let res = bordered_newton(model, mods, st, &mut trial, &mut l1, l2, theta, &mut e_ref, lin.clone(), k, log);
            let iters = log.len() - before;
            match res {
                Ok(conv) => {
                    substeps.push(SubstepRecord { t: l2, dt: l2 - lambda2, newton_iterations: iters, converged: true, c });
                    state = trial;
                    lambda1 = l1;
                    lambda2 = l2;
                    lin = conv.lin;
                    if l2 == target {
                        let q = axis_q(theta);
                        let p_bar = model.homogenized_stress(&state);
                        let v = model.mesh.volume;
                        let z_u = (0..state.u.len())
                            .map(|i| (0..4).map(|j| q[j] * conv.cols[j].u[i]).sum::<f64>() / v)
                            .collect();
                        steps.push(PathStep {
                            lambda1,
                            lambda2,
                            f_bar: state.f_bar,
                            p_bar,
                            a_bar: conv.a_bar,
                            lateral: rotated_axial_stress(&p_bar, theta),
                            j_ot: outer_jacobian(&conv.a_bar, theta),
                            u: state.u.clone(),
                            z_u,
                            nu: poisson_ratio(lambda1, lambda2),
                        });
                        break;
                    }
                    dl = target - lambda2;
                }
                Err(e) if e.is_recoverable() => {
                    substeps.push(SubstepRecord { t: l2, dt: l2 - lambda2, newton_iterations: iters, converged: false, c });
                    dl *= 0.5;
                    if dl.abs() < st.min_ratio * total.abs() {
                        return Err((e, l2, (steps, state)));
                    }
                }
                Err(e) => return Err((e, l2, (steps, state))),
            }
        }
    }
    Ok((steps, state))
}

#[allow(clippy::too_many_arguments)]
fn bordered_newton(
    model: &RveModel,
    mods: &[ElementModuli],
    st: &SolverSettings,
    state: &mut RveState,
    lambda1: &mut f64,
    lambda2: f64,
    theta: f64,
    e_ref: &mut f64,
    reuse: Linearization,
    step: usize,
    log: &mut Vec<DriveRecord>,
) -> Result<Converged> {
    let q = axis_q(theta);
    let v = model.mesh.volume;
    let mut reuse = Some(reuse);
    let mut e0 = 0.0;
    for it in 0..st.max_newton {
        let (lin, r1) = match reuse.take() {
            // previous equilibrium: R1 vanishes to tolerance, only the
            // macro jump changes, so this iteration is the tangent predictor
            Some(l) => (l, None),
            None => {
                let l = model.linearize(&state.u, mods)?;
                (l, Some(()))
            }
        };
        let f_bar = macro_f(*lambda1, lambda2, theta);
        let (mut r1v, r2, r3) = model.residual(state, &lin.asm.f_int, &f_bar);
        if r1.is_none() {
            r1v.iter_mut().for_each(|x| *x = 0.0);
        }
        let n1: Vec<f64> = r1v.iter().map(|x| -x).collect();
        let n3: Vec<f64> = r3.iter().map(|x| -x).collect();
        let d0 = model.solve_saddle(&lin, &n1, [-r2[0], -r2[1]], &n3);
        let tc = model.homogenized_tangent(&lin);
        let j_ot = bilinear4(&q, &tc.a_bar, &q);
        if !(j_ot.abs() > 0.0) || !j_ot.is_finite() {
            return Err(Error::NotConverged("singular lateral-stress Jacobian".into()));
        }
        let h = dot4(&q, &model.cons.lt_apply(&state.mu)) / v;
        let dh = dot4(&q, &model.cons.lt_apply(&d0.mu)) / v;
        let dl1 = -(h + dh) / j_ot;
        // δx = δx0 − w δλ1, w = Σ q_j z_j
        let comb = |a: &[f64], sel: fn(&SaddleSolution) -> &[f64]| -> Vec<f64> {
            a.iter()
                .enumerate()
                .map(|(i, &x0)| x0 - dl1 * (0..4).map(|j| q[j] * sel(&tc.z[j])[i]).sum::<f64>())
                .collect()
        };
        let du = comb(&d0.u, |z| &z.u);
        let dmu = comb(&d0.mu, |z| &z.mu);
        let dlam = comb(&d0.lambda, |z| &z.lambda);
        let energy = (du.iter().zip(&r1v).map(|(a, b)| a * b).sum::<f64>()
            + dlam[0] * r2[0]
            + dlam[1] * r2[1]
            + dmu.iter().zip(&r3).map(|(a, b)| a * b).sum::<f64>())
        .abs();
        if !energy.is_finite() || !dl1.is_finite() {
            return Err(Error::NotConverged("non-finite increment".into()));
        }
        for (a, b) in state.u.iter_mut().zip(&du) {
            *a += b;
        }
        state.lambda[0] += dlam[0];
        state.lambda[1] += dlam[1];
        for (a, b) in state.mu.iter_mut().zip(&dmu) {
            *a += b;
        }
        *lambda1 += dl1;
        state.f_bar = macro_f(*lambda1, lambda2, theta);
        let lateral = dot4(&q, &model.cons.lt_apply(&state.mu)) / v;
        log.push(DriveRecord { step, lambda2, iteration: it, energy, lateral });
        if it == 0 {
            e0 = energy;
            if *e_ref <= 0.0 {
                *e_ref = energy;
            }
            continue;
        }
        if energy <= st.energy_tol * e0.max(*e_ref) || energy <= st.energy_floor {
            if lateral.abs() > st.outer_tol {
                continue;
            }
            return Ok(Converged { lin, a_bar: tc.a_bar, cols: tc.z });
        }
        if it >= 3 && energy > 1e3 * e0.max(*e_ref) {
            return Err(Error::NotConverged(format!("diverging (|Δ·R| = {energy:.3e})")));
        }
    }
    Err(Error::NotConverged(format!("no convergence in {} iterations", st.max_newton)))
}

/// Predicted state recorder used by exports: `(λ̄2, λ̄1, ν̄, P̄)` per step.
pub fn path_rows(path: &LoadPath) -> Vec<(f64, f64, Option<f64>, Mat2)> {
    path.steps.iter().map(|s| (s.lambda2, s.lambda1, s.nu, s.p_bar)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::HyperelasticPhase;
    use crate::mesh::{build_mesh, CellShape};

    #[test]
    fn macro_f_example() {
        let f = macro_f(1.2, 0.8, core::f64::consts::FRAC_PI_4);
        assert!((f.get(0, 0) - 1.0).abs() < 1e-15);
        assert!((f.get(0, 1) - 0.2).abs() < 1e-15);
        assert!((f.get(1, 0) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn rotated_stress_example() {
        let p = Mat2::new(1.0, 2.0, 2.0, 3.0);
        let v = rotated_axial_stress(&p, 30f64.to_radians());
        assert!((v - 3.2320508075688776).abs() < 1e-12);
    }

    #[test]
    fn rotation_operator_matches_explicit_rotation() {
        let th = 0.37;
        let (s, c) = libm::sincos(th);
        let q = Mat2::new(c, -s, s, c);
        let x = Mat2::new(0.3, -1.2, 0.7, 2.1);
        let xq = q.transpose().matmul(&x).matmul(&q);
        let r = rotation_operator(th);
        for a in 0..4 {
            assert!((dot4(&r[a], &x.0) - xq.0[a]).abs() < 1e-14);
        }
        assert_eq!(r[0], axis_q(th));
        for k in 0..4 {
            assert!((r[3][k] - axis_q2(th)[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn poisson_example() {
        let nu = poisson_ratio(1.25, 1.2).unwrap();
        // f0 term for ν_T = −1
        let r: f64 = 1.25 + (-1.0) * 1.2 - (-1.0) - 1.0;
        assert!((r * r - 2.5e-3).abs() < 1e-15);
        assert!((nu + 1.25).abs() < 1e-12);
        assert!(poisson_ratio(1.1, 1.0).is_none());
    }

    #[test]
    fn homogeneous_uniaxial_matches_material_point() {
        // solid cell: lateral stress free uniaxial response of the law itself
        let model = RveModel::new(build_mesh(CellShape::Square, 3, 1.0).unwrap()).unwrap();
        let set = MaterialSet::single(HyperelasticPhase::new(100.0, 0.49));
        let design = Design::solid(model.n_elements());
        let load = LoadCase { lambda2: 1.1, theta_deg: 25.0, steps: 20 };
        let path = uniaxial_drive(&model, &set, &design, &InterpolationParams::default(), &load, &SolverSettings::default()).unwrap();
        assert_eq!(path.steps.len(), 20);
        let last = path.steps.last().unwrap();
        let law = set.phase1.law();
        let p = law.stress(&last.f_bar).unwrap();
        assert!((p - last.p_bar).norm() < 1e-8 * p.norm());
        assert!(last.lateral.abs() < 1e-9);
        // near-incompressible plane strain: ν close to 1
        assert!(last.nu.unwrap() > 0.8);
    }
}
