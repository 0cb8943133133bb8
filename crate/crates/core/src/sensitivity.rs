//! Design sensitivities: the Poisson objective along the load path (adjoint),
//! the reference-state stiffness constraints (direct) and the material
//! usage measures.
//!
//! Each recorded step is in equilibrium, `R(x, λ̄1; ρ) = 0`, with the lateral
//! stress condition `H(x) = qᵀL_Mᵀμ / V = 0`. Eliminating `x` through the
//! symmetric Jacobian gives
//!
//! ```text
//! dλ̄1/dρ = (z_uᵀ ∂F_int/∂ρ) / (qᵀĀq),   z = J⁻¹ L̂ q / V
//! ```
//!
//! so the adjoint vector of a step is `(∂f0/∂λ̄1 / qᵀĀq) z` and only
//! element-local force derivatives are needed.

use alloc::vec;
use alloc::vec::Vec;

use crate::element::{element_density_derivative, ElementModuli};
use crate::error::{Error, Result};
use crate::fem::{design_moduli, Design, RveModel, StiffnessMode};
use crate::homogenization::{axis_q, axis_q2, LoadPath};
use crate::material::{InterpolationParams, MaterialSet};
use crate::mesh::{FilterMatrix, RveMesh};
use crate::par;
use crate::tensor::{bilinear4, Mat4};

/// Per-element derivatives w.r.t. the two physical density fields.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignGradient {
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
}

impl DesignGradient {
    pub fn zeros(n: usize) -> Self {
        DesignGradient { d1: vec![0.0; n], d2: vec![0.0; n] }
    }

    /// `self + s·other`.
    pub fn add_scaled(&mut self, s: f64, other: &DesignGradient) {
        for (a, b) in self.d1.iter_mut().zip(&other.d1) {
            *a += s * b;
        }
        for (a, b) in self.d2.iter_mut().zip(&other.d2) {
            *a += s * b;
        }
    }

    /// Chain rule through the density filter (`ρ = W x`).
    pub fn to_design_variables(&self, w: &FilterMatrix) -> DesignGradient {
        DesignGradient { d1: filter_chain(&self.d1, w), d2: filter_chain(&self.d2, w) }
    }
}

/// `∂g/∂x = Wᵀ ∂g/∂ρ`.
pub fn filter_chain(grad_rho: &[f64], w: &FilterMatrix) -> Vec<f64> {
    w.apply_transpose(grad_rho)
}

/// Residual of the Poisson target at one step: `λ̄1 + ν_T λ̄2 − ν_T − 1`.
#[inline]
pub fn poisson_residual(lambda1: f64, lambda2: f64, nu_t: f64) -> f64 {
    lambda1 + nu_t * lambda2 - nu_t - 1.0
}

/// `f0 = Σ_k (λ̄1ᵏ + ν_T λ̄2ᵏ − ν_T − 1)²`.
pub fn objective_f0(path: &LoadPath, nu_t: f64) -> f64 {
    path.steps
        .iter()
        .map(|s| {
            let r = poisson_residual(s.lambda1, s.lambda2, nu_t);
            r * r
        })
        .sum()
}

/// Gradient of `f0` w.r.t. the physical densities. `design` and `ip` must
/// be those of the forward run; the switch threshold is taken from the path.
pub fn adjoint_path(
    model: &RveModel,
    set: &MaterialSet,
    design: &Design,
    ip: &InterpolationParams,
    path: &LoadPath,
    nu_t: f64,
) -> Result<DesignGradient> {
    if path.steps.is_empty() {
        return Err(Error::InvalidInput("load path has no recorded steps".into()));
    }
    let ip = InterpolationParams { c: path.c, ..*ip };
    let mods = design_moduli(set, &ip, design, StiffnessMode::Interpolated);
    // scalar adjoint weight of each step
    let weights: Vec<f64> = path
        .steps
        .iter()
        .map(|s| 2.0 * poisson_residual(s.lambda1, s.lambda2, nu_t) / s.j_ot)
        .collect();
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::NotConverged("singular bordered adjoint system".into()));
    }
    let per = par::map(model.n_elements(), |e| element_path_sensitivity(model, &mods[e], e, path, &weights));
    let mut g = DesignGradient::zeros(model.n_elements());
    for (e, r) in per.into_iter().enumerate() {
        let (a, b) = r?;
        g.d1[e] = a;
        g.d2[e] = b;
    }
    if !set.is_multimaterial() {
        g.d2.iter_mut().for_each(|v| *v = 0.0);
    }
    Ok(g)
}

fn element_path_sensitivity(
    model: &RveModel,
    m: &ElementModuli,
    e: usize,
    path: &LoadPath,
    weights: &[f64],
) -> Result<(f64, f64)> {
    let c = &model.cache[e];
    let dofs = &model.element_dofs[e];
    let (mut a, mut b) = (0.0, 0.0);
    for (s, &wk) in path.steps.iter().zip(weights) {
        if wk == 0.0 {
            continue;
        }
        let ue = model.element_displacement(e, &s.u);
        let (d1, d2) = element_density_derivative(&c.geom, &c.k_lin_unit, &ue, m)
            .map_err(|det| Error::NonPhysical { element: e, det })?;
        for k in 0..8 {
            let z = s.z_u[dofs[k]];
            a += wk * z * d1[k];
            b += wk * z * d2[k];
        }
    }
    Ok((a, b))
}

/// Reference-state stiffness constraints `f1 = 1 − [Ā0^Q]11/k̄`,
/// `f2 = 1 − [Ā0^Q]44/k̄`, with gradients when requested.
#[derive(Debug, Clone)]
pub struct StiffnessConstraints {
    pub a0: Mat4,
    pub a11: f64,
    pub a44: f64,
    pub f1: f64,
    pub f2: f64,
    pub grad_f1: Option<DesignGradient>,
    pub grad_f2: Option<DesignGradient>,
}

pub fn stiffness_constraints(
    model: &RveModel,
    set: &MaterialSet,
    design: &Design,
    ip: &InterpolationParams,
    theta: f64,
    k_bar: f64,
    with_gradient: bool,
) -> Result<StiffnessConstraints> {
    design.validate(model.n_elements())?;
    if !(k_bar > 0.0) {
        return Err(Error::InvalidInput("k_bar must be positive".into()));
    }
    let mods = design_moduli(set, ip, design, StiffnessMode::Reference);
    let lin = model.reference_linearization(&mods)?;
    let tc = model.homogenized_tangent(&lin);
    let q = axis_q(theta);
    let q2 = axis_q2(theta);
    let a11 = bilinear4(&q, &tc.a_bar, &q);
    let a44 = bilinear4(&q2, &tc.a_bar, &q2);
    if !a11.is_finite() || !a44.is_finite() {
        return Err(Error::Topology("reference stiffness is singular".into()));
    }
    let mut out = StiffnessConstraints {
        a0: tc.a_bar,
        a11,
        a44,
        f1: 1.0 - a11 / k_bar,
        f2: 1.0 - a44 / k_bar,
        grad_f1: None,
        grad_f2: None,
    };
    if with_gradient {
        let n = model.mesh.n_dofs();
        let comb = |q: &[f64; 4]| -> Vec<f64> { (0..n).map(|i| (0..4).map(|j| q[j] * tc.z[j].u[i]).sum()).collect() };
        let w1 = comb(&q);
        let w2 = comb(&q2);
        let scale = -1.0 / (k_bar * model.mesh.volume);
        let per = par::map(model.n_elements(), |e| {
            let c = &model.cache[e];
            let m = &mods[e];
            let w1e = model.element_displacement(e, &w1);
            let w2e = model.element_displacement(e, &w2);
            let form = |w: &[f64; 8], k: &[[f64; 8]; 8]| -> f64 {
                (0..8).map(|i| w[i] * (0..8).map(|j| k[i][j] * w[j]).sum::<f64>()).sum()
            };
            let (k1, m1) = (form(&w1e, &c.k0_kappa), form(&w1e, &c.k0_mu));
            let (k2, m2) = (form(&w2e, &c.k0_kappa), form(&w2e, &c.k0_mu));
            [
                scale * (m.dkappa_d1 * k1 + m.dmu_d1 * m1),
                scale * (m.dkappa_d2 * k1 + m.dmu_d2 * m1),
                scale * (m.dkappa_d1 * k2 + m.dmu_d1 * m2),
                scale * (m.dkappa_d2 * k2 + m.dmu_d2 * m2),
            ]
        });
        let ne = model.n_elements();
        let mut g1 = DesignGradient::zeros(ne);
        let mut g2 = DesignGradient::zeros(ne);
        for (e, v) in per.into_iter().enumerate() {
            g1.d1[e] = v[0];
            g1.d2[e] = v[1];
            g2.d1[e] = v[2];
            g2.d2[e] = v[3];
        }
        if !set.is_multimaterial() {
            g1.d2.iter_mut().for_each(|v| *v = 0.0);
            g2.d2.iter_mut().for_each(|v| *v = 0.0);
        }
        out.grad_f1 = Some(g1);
        out.grad_f2 = Some(g2);
    }
    Ok(out)
}

/// `V_f = Σ ρ1ᵉ vₑ / V` and its gradient.
pub fn volume_fraction(mesh: &RveMesh, rho1: &[f64]) -> (f64, Vec<f64>) {
    let v = mesh.volume;
    let grad: Vec<f64> = mesh.element_area.iter().map(|a| a / v).collect();
    let val = rho1.iter().zip(&grad).map(|(r, g)| r * g).sum();
    (val, grad)
}

/// `M_f = Σ [ω1 ρ1 ρ2 + ω2 ρ1 (1 − ρ2)] vₑ / M*` and its gradient.
pub fn mass_ratio(mesh: &RveMesh, design: &Design, omega1: f64, omega2: f64, m_star: f64) -> (f64, DesignGradient) {
    let n = design.len();
    let mut g = DesignGradient::zeros(n);
    let mut val = 0.0;
    for e in 0..n {
        let (r1, r2) = (design.rho1[e], design.rho2[e]);
        let s = mesh.element_area[e] / m_star;
        val += s * (omega1 * r1 * r2 + omega2 * r1 * (1.0 - r2));
        g.d1[e] = s * (omega1 * r2 + omega2 * (1.0 - r2));
        g.d2[e] = s * r1 * (omega1 - omega2);
    }
    (val, g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_filter, build_mesh, CellShape};

    #[test]
    fn mass_ratio_examples() {
        let mesh = build_mesh(CellShape::Square, 4, 1.0).unwrap();
        let d = Design::solid(16);
        let (m, _) = mass_ratio(&mesh, &d, 2100.0, 1000.0, 500.0);
        assert!((m - 4.2).abs() < 1e-12);
        let (v, _) = volume_fraction(&mesh, &d.rho1);
        assert!((v - 1.0).abs() < 1e-12);
        let z = Design::uniform(16, 0.0, 0.5);
        assert_eq!(mass_ratio(&mesh, &z, 2100.0, 1000.0, 500.0).0, 0.0);
        assert_eq!(volume_fraction(&mesh, &z.rho1).0, 0.0);
    }

    #[test]
    fn mass_ratio_gradient_fd() {
        let mesh = build_mesh(CellShape::Hexagon, 2, 1.0).unwrap();
        let n = mesh.n_elements();
        let d = Design {
            rho1: (0..n).map(|e| 0.2 + 0.05 * e as f64).collect(),
            rho2: (0..n).map(|e| 0.9 - 0.06 * e as f64).collect(),
        };
        let (_, g) = mass_ratio(&mesh, &d, 2100.0, 1000.0, 900.0);
        let h = 1e-6;
        for e in [0, 5, n - 1] {
            for which in 0..2 {
                let mut p = d.clone();
                let mut m = d.clone();
                let (pv, mv) = if which == 0 { (&mut p.rho1, &mut m.rho1) } else { (&mut p.rho2, &mut m.rho2) };
                pv[e] += h;
                mv[e] -= h;
                let fd = (mass_ratio(&mesh, &p, 2100.0, 1000.0, 900.0).0 - mass_ratio(&mesh, &m, 2100.0, 1000.0, 900.0).0) / (2.0 * h);
                let an = if which == 0 { g.d1[e] } else { g.d2[e] };
                assert!((fd - an).abs() < 1e-8, "{e} {which}: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn filter_chain_is_transpose() {
        let mesh = build_mesh(CellShape::Square, 6, 1.0).unwrap();
        let w = build_filter(&mesh, 0.3).unwrap();
        let n = mesh.n_elements();
        let x: Vec<f64> = (0..n).map(|i| libm::sin(i as f64 * 0.7)).collect();
        let g: Vec<f64> = (0..n).map(|i| libm::cos(i as f64 * 1.3)).collect();
        // g·(Wx) is linear in x, so its gradient Wᵀg is exact
        let wx = w.apply(&x);
        let gx = filter_chain(&g, &w);
        let lhs: f64 = g.iter().zip(&wx).map(|(a, b)| a * b).sum();
        let rhs: f64 = gx.iter().zip(&x).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
        let id = FilterMatrix::identity(n);
        assert_eq!(filter_chain(&g, &id), g);
    }

    #[test]
    fn f0_example() {
        let r = poisson_residual(1.25, 1.2, -1.0);
        assert!((r * r - 2.5e-3).abs() < 1e-15);
    }
}
