//! The design loop: filtered densities → mixed-driver analysis → Poisson
//! objective with stiffness and material-usage constraints → MMA update,
//! with penalty continuation.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fem::{Design, RveModel, SolverSettings};
use crate::homogenization::{uniaxial_drive, LoadCase, LoadPath};
use crate::material::{InterpolationParams, MaterialSet};
use crate::mesh::{periodic_distance, FilterMatrix, RveMesh};
use crate::mma::{MmaParams, MmaState};
use crate::sensitivity::{adjoint_path, mass_ratio, objective_f0, stiffness_constraints, volume_fraction, DesignGradient};

/// `start + step·⌊iter/every⌋` clamped to `[lo, hi]`, in tenths so that the
/// schedule values are exact decimals.
fn stepped(start_tenths: i64, dir: i64, iter: usize, offset: usize, lo_tenths: i64, hi_tenths: i64) -> f64 {
    let k = if iter < offset { 0 } else { ((iter - offset) / 20) as i64 };
    let t = (start_tenths + dir * k).clamp(lo_tenths, hi_tenths);
    t as f64 / 10.0
}

/// Penalties of the forward analysis at `iter`: `p_e`, `p` 1→3, `p_L` 4→6,
/// `p_ν` 3→1, each moved by 0.1 every 20 iterations.
pub fn forward_schedule(iter: usize, base: &InterpolationParams) -> InterpolationParams {
    let pe = stepped(10, 1, iter, 0, 10, 30);
    InterpolationParams {
        pe,
        p: pe,
        pl: stepped(40, 1, iter, 0, 40, 60),
        pnu: stepped(30, -1, iter, 0, 10, 30),
        ..*base
    }
}

/// Penalties of the reference-stiffness constraints: `p_e = p = 3` before
/// iteration 50, then +0.1 every 20 iterations up to 5; `p_ν = 1`.
pub fn reference_schedule(iter: usize, base: &InterpolationParams) -> InterpolationParams {
    let pe = if iter < 50 { 3.0 } else { stepped(30, 1, iter, 50, 30, 50) };
    InterpolationParams { pe, p: pe, pnu: 1.0, ..*base }
}

/// Iteration at which every continuation has reached its final value.
pub fn schedules_settled(iter: usize) -> bool {
    iter >= 400 && reference_schedule(iter, &InterpolationParams::default()).pe >= 5.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Formulation {
    /// Single material, volume fraction capped at `v_t`.
    Volume { v_t: f64 },
    /// Two materials, mass capped at `ω* V`.
    Mass { omega_star: f64 },
}

/// Everything that defines a design problem.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub formulation: Formulation,
    pub set: MaterialSet,
    pub nu_target: f64,
    pub k_bar: f64,
    /// Weight of the material-usage term once active.
    pub alpha: f64,
    pub alpha_activation_iter: usize,
    pub load: LoadCase,
    pub r_min: f64,
    pub max_iters: usize,
    /// Stop once `‖Δx‖∞` stays below this for `stop_window` iterations.
    pub stop_tol: f64,
    pub stop_window: usize,
    pub solver: SolverSettings,
    pub mma: MmaParams,
    /// Base interpolation constants (β, initial c, ε's).
    pub interp: InterpolationParams,
    /// Objective multiplier seen by MMA (reported values are unscaled).
    pub objective_scale: f64,
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.into()));
        if !(self.k_bar > 0.0) {
            return bad("k_bar must be positive");
        }
        match self.formulation {
            Formulation::Volume { v_t } if !(v_t > 0.0 && v_t <= 1.0) => return bad("V_T must lie in (0, 1]"),
            Formulation::Mass { omega_star } if !(omega_star > 0.0) => return bad("omega_star must be positive"),
            Formulation::Mass { .. } if !self.set.is_multimaterial() => {
                return bad("the mass formulation needs two solid phases")
            }
            _ => {}
        }
        if !(self.alpha >= 0.0) {
            return bad("alpha must be non-negative");
        }
        if !(self.load.lambda2 > 0.0) || self.load.lambda2 == 1.0 {
            return bad("lambda2 must be positive and different from 1");
        }
        if !(self.r_min > 0.0) {
            return bad("r_min must be positive");
        }
        if !(self.objective_scale > 0.0) {
            return bad("objective_scale must be positive");
        }
        Ok(())
    }

    fn two_fields(&self) -> bool {
        matches!(self.formulation, Formulation::Mass { .. })
    }
}

/// Parametric initial designs, evaluated in fractional lattice coordinates
/// so that every pattern is compatible with the periodicity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialDesign {
    Uniform { rho: f64 },
    /// `cells × cells` blocks alternating between `high` and `low`.
    Checkerboard { cells: usize, high: f64, low: f64 },
    /// Solid cell with a centered circular void occupying `1 − fill` of the
    /// area.
    CenteredVoid { fill: f64 },
    /// Void at the cell corners (a centered solid disc of area `fill`).
    CornerVoid { fill: f64 },
    /// `k × k` array of circular voids of relative radius `radius` (in
    /// units of the sub-cell period).
    VoidArray { k: usize, radius: f64, solid: f64 },
}

impl InitialDesign {
    pub fn generate(&self, mesh: &RveMesh) -> Vec<f64> {
        mesh.centroids
            .iter()
            .map(|&x| {
                let f = mesh.lattice.fractional(x);
                // shift to [0, 1)
                let s = [f[0] + 0.5 - libm::floor(f[0] + 0.5), f[1] + 0.5 - libm::floor(f[1] + 0.5)];
                match *self {
                    InitialDesign::Uniform { rho } => rho,
                    InitialDesign::Checkerboard { cells, high, low } => {
                        let c = cells.max(1) as f64;
                        let i = libm::floor(s[0] * c) as i64 + libm::floor(s[1] * c) as i64;
                        if i % 2 == 0 {
                            high
                        } else {
                            low
                        }
                    }
                    InitialDesign::CenteredVoid { fill } => {
                        let r = libm::sqrt((1.0 - fill) * mesh.volume / core::f64::consts::PI);
                        if periodic_distance(&mesh.lattice, x, [0.0, 0.0]) < r {
                            0.0
                        } else {
                            1.0
                        }
                    }
                    InitialDesign::CornerVoid { fill } => {
                        let r = libm::sqrt(fill * mesh.volume / core::f64::consts::PI);
                        if periodic_distance(&mesh.lattice, x, [0.0, 0.0]) < r {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    InitialDesign::VoidArray { k, radius, solid } => {
                        let k = k.max(1) as f64;
                        let u = [s[0] * k - libm::floor(s[0] * k) - 0.5, s[1] * k - libm::floor(s[1] * k) - 0.5];
                        let p = [
                            (u[0] * mesh.lattice.a1[0] + u[1] * mesh.lattice.a2[0]) / k,
                            (u[0] * mesh.lattice.a1[1] + u[1] * mesh.lattice.a2[1]) / k,
                        ];
                        let r = radius * mesh.lattice.min_period() / k;
                        if libm::hypot(p[0], p[1]) < r {
                            0.0
                        } else {
                            solid
                        }
                    }
                }
            })
            .collect()
    }
}

/// One row of the optimization history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub f0: f64,
    /// `f0 + α·(V_f or M_f)` with the α in effect.
    pub objective: f64,
    /// `V_f` (volume formulation) or `M_f` (mass formulation).
    pub measure: f64,
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
    /// Cumulative number of forward analyses.
    pub fea_calls: usize,
    pub c: f64,
    /// `‖x_new − x‖∞` of the update taken after this evaluation.
    pub change: f64,
    pub alpha: f64,
    pub pe: f64,
    pub pl: f64,
    pub pnu: f64,
    pub p_ref: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StopReason {
    MaxIterations,
    Converged,
    /// The forward analysis failed for good; the message is the error.
    AnalysisFailed(alloc::string::String),
}

#[derive(Debug, Clone)]
pub struct OptimizationResult {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    /// Physical (filtered) densities of the last iterate.
    pub design: Design,
    pub history: Vec<IterationRecord>,
    pub stop: StopReason,
    /// Linear-energy threshold at the end.
    pub c: f64,
}

/// Objective, constraints and gradients w.r.t. physical densities at one
/// design.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub f0: f64,
    pub measure: f64,
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
    pub grad_f0: DesignGradient,
    pub grad_measure: DesignGradient,
    pub grad_f1: DesignGradient,
    pub grad_f2: DesignGradient,
    pub path: LoadPath,
}

/// Evaluate the problem at filtered densities `design` with the penalties
/// of iteration `iter` and the linear-energy threshold `c`.
pub fn evaluate(model: &RveModel, spec: &ProblemSpec, design: &Design, iter: usize, c: f64) -> Result<Evaluation> {
    let ip = InterpolationParams { c, ..forward_schedule(iter, &spec.interp) };
    let path = uniaxial_drive(model, &spec.set, design, &ip, &spec.load, &spec.solver)?;
    let f0 = objective_f0(&path, spec.nu_target);
    let grad_f0 = adjoint_path(model, &spec.set, design, &ip, &path, spec.nu_target)?;
    let ipr = reference_schedule(iter, &spec.interp);
    let sc = stiffness_constraints(model, &spec.set, design, &ipr, spec.load.theta(), spec.k_bar, true)?;
    let (measure, grad_measure, f3) = usage(model, spec, design);
    Ok(Evaluation {
        f0,
        measure,
        f1: sc.f1,
        f2: sc.f2,
        f3,
        grad_f0,
        grad_measure,
        grad_f1: sc.grad_f1.unwrap_or_else(|| DesignGradient::zeros(design.len())),
        grad_f2: sc.grad_f2.unwrap_or_else(|| DesignGradient::zeros(design.len())),
        path,
    })
}

/// Material usage (volume fraction or mass ratio), its gradient and the
/// constraint value `f3`.
fn usage(model: &RveModel, spec: &ProblemSpec, design: &Design) -> (f64, DesignGradient, f64) {
    match spec.formulation {
        Formulation::Volume { v_t } => {
            let (v, g) = volume_fraction(&model.mesh, &design.rho1);
            let n = g.len();
            (v, DesignGradient { d1: g, d2: vec![0.0; n] }, v - v_t)
        }
        Formulation::Mass { omega_star } => {
            let (p1, p2) = (spec.set.phase1.density, spec.set.phase2.map_or(0.0, |p| p.density));
            let (m, g) = mass_ratio(&model.mesh, design, p1, p2, omega_star * model.mesh.volume);
            (m, g, m - 1.0)
        }
    }
}

/// `[f0, f1, f2, f3]` without sensitivities.
pub fn function_values(model: &RveModel, spec: &ProblemSpec, design: &Design, iter: usize, c: f64) -> Result<[f64; 4]> {
    let ip = InterpolationParams { c, ..forward_schedule(iter, &spec.interp) };
    let path = uniaxial_drive(model, &spec.set, design, &ip, &spec.load, &spec.solver)?;
    let ipr = reference_schedule(iter, &spec.interp);
    let sc = stiffness_constraints(model, &spec.set, design, &ipr, spec.load.theta(), spec.k_bar, false)?;
    Ok([objective_f0(&path, spec.nu_target), sc.f1, sc.f2, usage(model, spec, design).2])
}

/// One sampled entry of a gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSample {
    /// 0..=3 for f0..f3.
    pub function: usize,
    /// 1 for ρ1, 2 for ρ2.
    pub field: usize,
    pub element: usize,
    pub analytic: f64,
    pub fd: f64,
    /// `|analytic − fd|` over the largest analytic magnitude among the
    /// samples of the same function and field.
    pub rel_error: f64,
}

/// Compare the analytic gradients w.r.t. the filtered densities with
/// central differences of full re-solves at `elements`. Use a fixed step
/// count and a tight Newton tolerance in `spec.solver`, otherwise the FD
/// quotient picks up solver noise.
pub fn gradient_check(
    model: &RveModel,
    spec: &ProblemSpec,
    design: &Design,
    elements: &[usize],
    h: f64,
) -> Result<Vec<GradientSample>> {
    let c = spec.interp.c;
    let ev = evaluate(model, spec, design, 0, c)?;
    let fields: &[usize] = if spec.two_fields() { &[1, 2] } else { &[1] };
    let grads = [&ev.grad_f0, &ev.grad_f1, &ev.grad_f2, &ev.grad_measure];
    let mut out = Vec::new();
    for &field in fields {
        let mut fd = Vec::with_capacity(elements.len());
        for &e in elements {
            let shifted = |s: f64| {
                let mut d = design.clone();
                let v = if field == 1 { &mut d.rho1 } else { &mut d.rho2 };
                v[e] += s;
                function_values(model, spec, &d, 0, c)
            };
            let (p, m) = (shifted(h)?, shifted(-h)?);
            fd.push(core::array::from_fn::<f64, 4, _>(|i| (p[i] - m[i]) / (2.0 * h)));
        }
        for (function, g) in grads.iter().enumerate() {
            let col = if field == 1 { &g.d1 } else { &g.d2 };
            let scale = elements.iter().fold(0.0f64, |m, &e| m.max(col[e].abs()));
            for (k, &e) in elements.iter().enumerate() {
                let err = (col[e] - fd[k][function]).abs();
                let rel_error = if scale > 0.0 { err / scale } else { err };
                out.push(GradientSample { function, field, element: e, analytic: col[e], fd: fd[k][function], rel_error });
            }
        }
    }
    Ok(out)
}

/// Filtered densities of the raw variables; single-material problems keep
/// `ρ2 ≡ 1`.
pub fn physical_design(spec: &ProblemSpec, w: &FilterMatrix, x1: &[f64], x2: &[f64]) -> Design {
    let clamp = |v: Vec<f64>| v.into_iter().map(|r| r.clamp(0.0, 1.0)).collect();
    let rho1 = clamp(w.apply(x1));
    let rho2 = if spec.two_fields() { clamp(w.apply(x2)) } else { vec![1.0; x1.len()] };
    Design { rho1, rho2 }
}

/// Run the design loop. `observer` sees every history row as it is produced.
pub fn run_optimization(
    model: &RveModel,
    w: &FilterMatrix,
    spec: &ProblemSpec,
    x1_init: &[f64],
    x2_init: &[f64],
    observer: &mut dyn FnMut(&IterationRecord, &Design),
) -> Result<OptimizationResult> {
    spec.validate()?;
    let n = model.n_elements();
    if x1_init.len() != n || x2_init.len() != n || w.n() != n {
        return Err(Error::InvalidInput(format!("initial design must have {n} entries")));
    }
    if x1_init.iter().chain(x2_init).any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidInput("initial design values must lie in [0, 1]".into()));
    }
    if x1_init.iter().all(|&v| v == 0.0) {
        return Err(Error::InvalidInput("initial design is empty".into()));
    }
    let two = spec.two_fields();
    let nv = if two { 2 * n } else { n };
    let mut x: Vec<f64> = x1_init.iter().chain(if two { x2_init } else { &[] }).copied().collect();
    let mut mma = MmaState::new(nv, 3, &x, spec.mma);
    let (xmin, xmax) = (vec![0.0; nv], vec![1.0; nv]);
    let mut c = spec.interp.c;
    let mut fea_calls = 0;
    let mut history = Vec::new();
    let mut quiet = 0;
    let split = |x: &[f64]| -> (Vec<f64>, Vec<f64>) {
        if two {
            (x[..n].to_vec(), x[n..].to_vec())
        } else {
            (x.to_vec(), x2_init.to_vec())
        }
    };
    let mut stop = StopReason::MaxIterations;
    for iter in 0..spec.max_iters {
        let (x1, x2) = split(&x);
        let design = physical_design(spec, w, &x1, &x2);
        let ev = match evaluate(model, spec, &design, iter, c) {
            Ok(ev) => ev,
            Err(e) => {
                stop = StopReason::AnalysisFailed(format!("iteration {iter}: {e}"));
                break;
            }
        };
        fea_calls += ev.path.analyses;
        c = ev.path.c;
        let alpha = if iter >= spec.alpha_activation_iter { spec.alpha } else { 0.0 };
        let s = spec.objective_scale;
        let mut g0 = ev.grad_f0.clone();
        g0.add_scaled(alpha, &ev.grad_measure);
        let to_vars = |g: &DesignGradient, scale: f64| -> Vec<f64> {
            let gx = g.to_design_variables(w);
            let mut v: Vec<f64> = gx.d1.iter().map(|a| a * scale).collect();
            if two {
                v.extend(gx.d2.iter().map(|a| a * scale));
            }
            v
        };
        let df0 = to_vars(&g0, s);
        // volume constraint handed to MMA in relative form
        let (f3_mma, f3_scale) = match spec.formulation {
            Formulation::Volume { v_t } => (ev.f3 / v_t, 1.0 / v_t),
            Formulation::Mass { .. } => (ev.f3, 1.0),
        };
        let mut dfdx = to_vars(&ev.grad_f1, 1.0);
        dfdx.extend(to_vars(&ev.grad_f2, 1.0));
        dfdx.extend(to_vars(&ev.grad_measure, f3_scale));
        let objective = ev.f0 + alpha * ev.measure;
        if !objective.is_finite() || df0.iter().chain(&dfdx).any(|v| !v.is_finite()) {
            stop = StopReason::AnalysisFailed(format!("iteration {iter}: non-finite objective or gradient"));
            break;
        }
        let step = mma.update(&x, &xmin, &xmax, s * objective, &df0, &[ev.f1, ev.f2, f3_mma], &dfdx);
        let xnew: Vec<f64> = step.x.iter().map(|v| v.clamp(0.0, 1.0)).collect();
        let change = xnew.iter().zip(&x).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let ipf = forward_schedule(iter, &spec.interp);
        let rec = IterationRecord {
            iter,
            f0: ev.f0,
            objective,
            measure: ev.measure,
            f1: ev.f1,
            f2: ev.f2,
            f3: ev.f3,
            fea_calls,
            c,
            change,
            alpha,
            pe: ipf.pe,
            pl: ipf.pl,
            pnu: ipf.pnu,
            p_ref: reference_schedule(iter, &spec.interp).pe,
        };
        observer(&rec, &design);
        history.push(rec);
        x = xnew;
        let settled = schedules_settled(iter) && (spec.alpha == 0.0 || iter >= spec.alpha_activation_iter);
        quiet = if change < spec.stop_tol { quiet + 1 } else { 0 };
        if settled && quiet >= spec.stop_window {
            stop = StopReason::Converged;
            break;
        }
    }
    let (x1, x2) = split(&x);
    let design = physical_design(spec, w, &x1, &x2);
    Ok(OptimizationResult { x1, x2, design, history, stop, c })
}

/// `Σ ρ(1 − ρ) / n`: zero for a black-and-white design.
pub fn discreteness(rho: &[f64]) -> f64 {
    rho.iter().map(|r| r * (1.0 - r)).sum::<f64>() / rho.len().max(1) as f64
}
