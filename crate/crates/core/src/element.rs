//! Four-node quadrilateral with F-bar stabilization and the linear-energy
//! blend used for low-density elements.
//!
//! At each of the 2×2 Gauss points the modified gradient is
//! `F^b = (J0/J)^{1/2} F`, with `F0` taken at the element centre. The point
//! energy `ψ(F^b(F, F0))` is differentiated exactly, so forces and tangent
//! derive from one potential and the tangent is symmetric. The element
//! energy for displacement gradients `g = B u` is
//!
//! ```text
//! Π_e = Σ_gp w [ ψ(F^b(I + γ g, I + γ g0)) + (1 − γ²) ½ g·C_L g ]
//! ```

use crate::material::{linear_tangent, neo_hookean_parts, NeoHookeanParts};
use crate::tensor::{dot4, Mat2, Mat4, Vec2, Vec4, CM};

pub const GP: f64 = 0.577_350_269_189_625_8;
const GAUSS: [[f64; 2]; 4] = [[-GP, -GP], [GP, -GP], [GP, GP], [-GP, GP]];
const REF: [[f64; 2]; 4] = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];

pub type ElemVec = [f64; 8];
pub type ElemMat = [[f64; 8]; 8];

/// Shape-function gradients and weights of one quad.
#[derive(Debug, Clone, Copy)]
pub struct QuadGeometry {
    /// `dn[gp][a] = ∇N_a` at Gauss point `gp`.
    pub dn: [[Vec2; 4]; 4],
    pub w: [f64; 4],
    /// `∇N_a` at the element centre.
    pub dn0: [Vec2; 4],
}

impl QuadGeometry {
    pub fn new(x: &[Vec2; 4]) -> Option<Self> {
        let grads = |xi: f64, eta: f64| -> Option<([Vec2; 4], f64)> {
            let dxi: [Vec2; 4] = core::array::from_fn(|a| {
                [0.25 * REF[a][0] * (1.0 + REF[a][1] * eta), 0.25 * REF[a][1] * (1.0 + REF[a][0] * xi)]
            });
            let mut jm = [[0.0; 2]; 2];
            for a in 0..4 {
                for i in 0..2 {
                    for k in 0..2 {
                        jm[i][k] += x[a][i] * dxi[a][k];
                    }
                }
            }
            let det = jm[0][0] * jm[1][1] - jm[0][1] * jm[1][0];
            if !(det > 0.0) {
                return None;
            }
            let inv = [[jm[1][1] / det, -jm[0][1] / det], [-jm[1][0] / det, jm[0][0] / det]];
            let dn = core::array::from_fn(|a| {
                [
                    dxi[a][0] * inv[0][0] + dxi[a][1] * inv[1][0],
                    dxi[a][0] * inv[0][1] + dxi[a][1] * inv[1][1],
                ]
            });
            Some((dn, det))
        };
        let mut dn = [[[0.0; 2]; 4]; 4];
        let mut w = [0.0; 4];
        for (s, g) in GAUSS.iter().enumerate() {
            let (d, j) = grads(g[0], g[1])?;
            dn[s] = d;
            w[s] = j;
        }
        let (dn0, _) = grads(0.0, 0.0)?;
        Some(QuadGeometry { dn, w, dn0 })
    }

    pub fn area(&self) -> f64 {
        self.w.iter().sum()
    }
}

/// Displacement gradient (vectorised) from nodal gradients.
#[inline]
pub fn grad(dn: &[Vec2; 4], u: &ElemVec) -> Vec4 {
    let mut g = [0.0; 4];
    for a in 0..4 {
        let (ux, uy) = (u[2 * a], u[2 * a + 1]);
        g[0] += dn[a][0] * ux;
        g[1] += dn[a][0] * uy;
        g[2] += dn[a][1] * ux;
        g[3] += dn[a][1] * uy;
    }
    g
}

/// `out += Bᵀ v * s`.
#[inline]
fn grad_t_add(dn: &[Vec2; 4], v: &Vec4, s: f64, out: &mut ElemVec) {
    for a in 0..4 {
        out[2 * a] += s * (dn[a][0] * v[0] + dn[a][1] * v[2]);
        out[2 * a + 1] += s * (dn[a][0] * v[1] + dn[a][1] * v[3]);
    }
}

/// Dense B (4×8).
fn bmat(dn: &[Vec2; 4]) -> [[f64; 8]; 4] {
    let mut b = [[0.0; 8]; 4];
    for a in 0..4 {
        b[0][2 * a] = dn[a][0];
        b[1][2 * a + 1] = dn[a][0];
        b[2][2 * a] = dn[a][1];
        b[3][2 * a + 1] = dn[a][1];
    }
    b
}

/// Point quantities of the F-bar potential φ(F, F0) = ψ(s F), s = (J0/J)^{1/2}.
#[derive(Debug, Clone, Copy)]
pub struct FbarPoint {
    /// `(∂φ/∂F, ∂φ/∂F0)`.
    pub grad: [f64; 8],
    /// Hessian w.r.t. `(F, F0)`; only filled when requested.
    pub hess: ElemMat,
    /// `∂F^b/∂(F, F0)` (4×8).
    pub d: [[f64; 8]; 4],
    pub fbar: Mat2,
    pub parts: NeoHookeanParts,
}

/// Evaluate the F-bar potential at `(F, F0)`. Returns the offending
/// determinant on failure.
pub fn fbar_point(f: &Mat2, f0: &Mat2, kappa: f64, mu: f64, want_hess: bool) -> Result<FbarPoint, f64> {
    let j = f.det();
    let j0 = f0.det();
    if !(j > 0.0) || !j.is_finite() {
        return Err(j);
    }
    if !(j0 > 0.0) || !j0.is_finite() {
        return Err(j0);
    }
    let s = libm::sqrt(j0 / j);
    let fb = f.scale(s);
    let parts = neo_hookean_parts(&fb).ok_or(fb.det())?;
    let pb = parts.stress(kappa, mu);
    let cof = f.cofactor().0;
    let cof0 = f0.cofactor().0;
    // a = ∇ ln s
    let a: [f64; 8] = core::array::from_fn(|k| if k < 4 { -0.5 * cof[k] / j } else { 0.5 * cof0[k - 4] / j0 });
    let fv = f.0;
    let pi = dot4(&pb, &fv);
    // D = s [I 0] + F ⊗ (s a)
    let d: [[f64; 8]; 4] = core::array::from_fn(|r| {
        core::array::from_fn(|k| s * fv[r] * a[k] + if k == r { s } else { 0.0 })
    });
    let mut grad = [0.0; 8];
    for k in 0..8 {
        for r in 0..4 {
            grad[k] += d[r][k] * pb[r];
        }
    }
    let mut hess = [[0.0; 8]; 8];
    if want_hess {
        let ab = parts.tangent(kappa, mu);
        // A D (4×8)
        let mut ad = [[0.0; 8]; 4];
        for r in 0..4 {
            for k in 0..8 {
                ad[r][k] = (0..4).map(|q| ab[r][q] * d[q][k]).sum();
            }
        }
        for k in 0..8 {
            for l in k..8 {
                let mut h = 0.0;
                for r in 0..4 {
                    h += d[r][k] * ad[r][l];
                }
                // π ∇²s = π s (a⊗a + ∇a)
                let mut h2 = a[k] * a[l];
                if k < 4 && l < 4 {
                    h2 += -0.5 * (CM[k][l] / j - cof[k] * cof[l] / (j * j));
                } else if k >= 4 && l >= 4 {
                    h2 += 0.5 * (CM[k - 4][l - 4] / j0 - cof0[k - 4] * cof0[l - 4] / (j0 * j0));
                }
                h += pi * s * h2;
                // p ⊗ ∇s + ∇s ⊗ p, p = (P^b, 0)
                let pk = if k < 4 { pb[k] } else { 0.0 };
                let pl = if l < 4 { pb[l] } else { 0.0 };
                h += s * (pk * a[l] + a[k] * pl);
                hess[k][l] = h;
                hess[l][k] = h;
            }
        }
    }
    Ok(FbarPoint { grad, hess, d, fbar: fb, parts })
}

/// Material data of one element in the current interpolation state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ElementModuli {
    pub gamma: f64,
    pub dgamma: f64,
    pub kappa: f64,
    pub mu: f64,
    pub dkappa_d1: f64,
    pub dmu_d1: f64,
    pub dkappa_d2: f64,
    pub dmu_d2: f64,
    /// Young's modulus of the linear term; zero disables the term.
    pub e_lin: f64,
    pub de_lin: f64,
}

/// Precomputed per-element matrices.
#[derive(Debug, Clone)]
pub struct ElementCache {
    pub geom: QuadGeometry,
    /// Σ w Bᵀ C_L B for unit Young's modulus.
    pub k_lin_unit: ElemMat,
    /// Reference-state stiffness per unit κ and unit μ (γ = 1, no linear term).
    pub k0_kappa: ElemMat,
    pub k0_mu: ElemMat,
}

impl ElementCache {
    pub fn new(x: &[Vec2; 4], nu_lin: f64) -> Option<Self> {
        let geom = QuadGeometry::new(x)?;
        let c = linear_tangent(1.0, nu_lin);
        let mut k_lin_unit = [[0.0; 8]; 8];
        for s in 0..4 {
            let b = bmat(&geom.dn[s]);
            add_btdb(&b, &c, geom.w[s], &mut k_lin_unit);
        }
        let zero = [0.0; 8];
        let unit = |kappa: f64, mu: f64| {
            let m = ElementModuli { gamma: 1.0, kappa, mu, ..Default::default() };
            let mut k = [[0.0; 8]; 8];
            element_response(&geom, &k_lin_unit, &zero, &m, Some(&mut k)).expect("reference state");
            k
        };
        let k0_kappa = unit(1.0, 0.0);
        let k0_mu = unit(0.0, 1.0);
        Some(ElementCache { geom, k_lin_unit, k0_kappa, k0_mu })
    }
}

fn add_btdb(b: &[[f64; 8]; 4], c: &Mat4, w: f64, out: &mut ElemMat) {
    let mut cb = [[0.0; 8]; 4];
    for r in 0..4 {
        for k in 0..8 {
            cb[r][k] = (0..4).map(|q| c[r][q] * b[q][k]).sum();
        }
    }
    for k in 0..8 {
        for l in 0..8 {
            out[k][l] += w * (0..4).map(|r| b[r][k] * cb[r][l]).sum::<f64>();
        }
    }
}

#[inline]
fn g_mat(dn: &[Vec2; 4], dn0: &[Vec2; 4]) -> ElemMat {
    let b = bmat(dn);
    let b0 = bmat(dn0);
    core::array::from_fn(|r| if r < 4 { b[r] } else { b0[r - 4] })
}

#[inline]
fn matvec8(k: &ElemMat, u: &ElemVec) -> ElemVec {
    core::array::from_fn(|i| (0..8).map(|j| k[i][j] * u[j]).sum())
}

#[inline]
fn kin(dn: &[Vec2; 4], dn0: &[Vec2; 4], u: &ElemVec, gamma: f64) -> (Vec4, Vec4, Mat2, Mat2) {
    let gs = grad(dn, u);
    let g0 = grad(dn0, u);
    let f = Mat2(core::array::from_fn(|k| crate::tensor::I4[0][k] + crate::tensor::I4[3][k] + gamma * gs[k]));
    let f0 = Mat2(core::array::from_fn(|k| crate::tensor::I4[0][k] + crate::tensor::I4[3][k] + gamma * g0[k]));
    (gs, g0, f, f0)
}

/// Internal force and (optionally) tangent of one element. On failure the
/// offending determinant is returned.
pub fn element_response(
    geom: &QuadGeometry,
    k_lin_unit: &ElemMat,
    u: &ElemVec,
    m: &ElementModuli,
    tangent: Option<&mut ElemMat>,
) -> Result<ElemVec, f64> {
    let want = tangent.is_some();
    let mut f = [0.0; 8];
    let mut kt = [[0.0; 8]; 8];
    let g2 = m.gamma * m.gamma;
    for s in 0..4 {
        let w = geom.w[s];
        let (_, _, ff, f0) = kin(&geom.dn[s], &geom.dn0, u, m.gamma);
        let pt = fbar_point(&ff, &f0, m.kappa, m.mu, want)?;
        let vf: Vec4 = core::array::from_fn(|k| pt.grad[k]);
        let v0: Vec4 = core::array::from_fn(|k| pt.grad[k + 4]);
        grad_t_add(&geom.dn[s], &vf, w * m.gamma, &mut f);
        grad_t_add(&geom.dn0, &v0, w * m.gamma, &mut f);
        if want {
            let g = g_mat(&geom.dn[s], &geom.dn0);
            // Gᵀ H G
            let mut hg = [[0.0; 8]; 8];
            for i in 0..8 {
                for j in 0..8 {
                    let mut acc = 0.0;
                    for q in 0..8 {
                        acc += pt.hess[i][q] * g[q][j];
                    }
                    hg[i][j] = acc;
                }
            }
            let sc = w * g2;
            for i in 0..8 {
                for j in i..8 {
                    let mut acc = 0.0;
                    for q in 0..8 {
                        acc += g[q][i] * hg[q][j];
                    }
                    kt[i][j] += sc * acc;
                }
            }
        }
    }
    let lin = (1.0 - g2) * m.e_lin;
    if lin != 0.0 {
        let fl = matvec8(k_lin_unit, u);
        for i in 0..8 {
            f[i] += lin * fl[i];
        }
    }
    if let Some(out) = tangent {
        for i in 0..8 {
            for j in i..8 {
                let v = kt[i][j] + lin * k_lin_unit[i][j];
                out[i][j] = v;
                out[j][i] = v;
            }
        }
    }
    Ok(f)
}

/// Element energy; the potential whose gradient is [`element_response`].
pub fn element_energy(geom: &QuadGeometry, k_lin_unit: &ElemMat, u: &ElemVec, m: &ElementModuli) -> Result<f64, f64> {
    let mut e = 0.0;
    for s in 0..4 {
        let (_, _, ff, f0) = kin(&geom.dn[s], &geom.dn0, u, m.gamma);
        let j = ff.det();
        let j0 = f0.det();
        if !(j > 0.0) {
            return Err(j);
        }
        if !(j0 > 0.0) {
            return Err(j0);
        }
        let fb = ff.scale(libm::sqrt(j0 / j));
        let psi = crate::material::NeoHookean { kappa: m.kappa, mu: m.mu }.energy(&fb).ok_or(fb.det())?;
        e += geom.w[s] * psi;
    }
    let ku = matvec8(k_lin_unit, u);
    let quad: f64 = (0..8).map(|i| u[i] * ku[i]).sum();
    Ok(e + 0.5 * (1.0 - m.gamma * m.gamma) * m.e_lin * quad)
}

/// Partial derivatives of the element force w.r.t. the element's two
/// densities at fixed displacement.
pub fn element_density_derivative(
    geom: &QuadGeometry,
    k_lin_unit: &ElemMat,
    u: &ElemVec,
    m: &ElementModuli,
) -> Result<(ElemVec, ElemVec), f64> {
    let mut d1 = [0.0; 8];
    let mut d2 = [0.0; 8];
    let need_h = m.dgamma != 0.0;
    for s in 0..4 {
        let w = geom.w[s];
        let (gs, g0, ff, f0) = kin(&geom.dn[s], &geom.dn0, u, m.gamma);
        let pt = fbar_point(&ff, &f0, m.kappa, m.mu, need_h)?;
        // z-space vector: γ' ∇φ + γ H (γ' G u) + γ Dᵀ ∂P
        let gu: [f64; 8] = core::array::from_fn(|k| if k < 4 { gs[k] } else { g0[k - 4] });
        let dp1 = pt.parts.stress(m.dkappa_d1, m.dmu_d1);
        let dp2 = pt.parts.stress(m.dkappa_d2, m.dmu_d2);
        let mut v1 = [0.0; 8];
        let mut v2 = [0.0; 8];
        for k in 0..8 {
            let mut dt1 = 0.0;
            let mut dt2 = 0.0;
            for r in 0..4 {
                dt1 += pt.d[r][k] * dp1[r];
                dt2 += pt.d[r][k] * dp2[r];
            }
            let mut hgu = 0.0;
            if need_h {
                for q in 0..8 {
                    hgu += pt.hess[k][q] * gu[q];
                }
            }
            v1[k] = m.dgamma * pt.grad[k] + m.gamma * m.dgamma * hgu + m.gamma * dt1;
            v2[k] = m.gamma * dt2;
        }
        for (v, out) in [(&v1, &mut d1), (&v2, &mut d2)] {
            let vf: Vec4 = core::array::from_fn(|k| v[k]);
            let v0: Vec4 = core::array::from_fn(|k| v[k + 4]);
            grad_t_add(&geom.dn[s], &vf, w, out);
            grad_t_add(&geom.dn0, &v0, w, out);
        }
    }
    if m.e_lin != 0.0 || m.de_lin != 0.0 {
        let ku = matvec8(k_lin_unit, u);
        let g2 = m.gamma * m.gamma;
        let c = -2.0 * m.gamma * m.dgamma * m.e_lin + (1.0 - g2) * m.de_lin;
        for i in 0..8 {
            d1[i] += c * ku[i];
        }
    }
    Ok((d1, d2))
}

/// Stress work-conjugate to the displacement gradient at each Gauss point:
/// `Σ_gp w P_eff : δg = δu·f_e` holds for any increment that is affine
/// over the element.
pub fn work_conjugate_stress(geom: &QuadGeometry, u: &ElemVec, m: &ElementModuli) -> Result<[Vec4; 4], f64> {
    let c = linear_tangent(m.e_lin, 0.2);
    let mut out = [[0.0; 4]; 4];
    for s in 0..4 {
        let (gs, _, ff, f0) = kin(&geom.dn[s], &geom.dn0, u, m.gamma);
        let pt = fbar_point(&ff, &f0, m.kappa, m.mu, false)?;
        let lin = crate::tensor::mat4_vec(&c, &gs);
        out[s] = core::array::from_fn(|k| {
            m.gamma * (pt.grad[k] + pt.grad[k + 4]) + (1.0 - m.gamma * m.gamma) * lin[k]
        });
    }
    Ok(out)
}

/// `Σ w Bᵀ B`: the gradient Gram matrix used as the Bloch mass-like operator.
pub fn gradient_gram(geom: &QuadGeometry) -> ElemMat {
    let mut g = [[0.0; 8]; 8];
    for s in 0..4 {
        let b = bmat(&geom.dn[s]);
        add_btdb(&b, &crate::tensor::I4, geom.w[s], &mut g);
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    fn skew_quad() -> [Vec2; 4] {
        [[0.0, 0.0], [0.11, 0.01], [0.13, 0.1], [0.02, 0.09]]
    }

    fn moduli(gamma: f64, e_lin: f64) -> ElementModuli {
        ElementModuli {
            gamma,
            dgamma: 0.0,
            kappa: 1100.0,
            mu: 33.0,
            e_lin,
            ..Default::default()
        }
    }

    fn disp() -> ElemVec {
        [0.0, 0.0, 0.011, -0.004, 0.006, 0.013, -0.003, 0.008]
    }

    #[test]
    fn force_is_energy_gradient() {
        let c = ElementCache::new(&skew_quad(), 0.2).unwrap();
        for (gamma, el) in [(1.0, 0.0), (0.6, 50.0), (6.7e-5, 1e-6)] {
            let m = moduli(gamma, el);
            let u = disp();
            let f = element_response(&c.geom, &c.k_lin_unit, &u, &m, None).unwrap();
            let h = if gamma < 1e-3 { 1e-4 } else { 1e-7 };
            let scale = f.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            for i in 0..8 {
                let (mut up, mut um) = (u, u);
                up[i] += h;
                um[i] -= h;
                let fd = (element_energy(&c.geom, &c.k_lin_unit, &up, &m).unwrap()
                    - element_energy(&c.geom, &c.k_lin_unit, &um, &m).unwrap())
                    / (2.0 * h);
                // near-identity energies lose digits to cancellation in I1 − 3
                let tol = if gamma < 1e-3 { 1e-4 } else { 1e-6 };
                assert!((fd - f[i]).abs() < tol * scale, "γ={gamma} dof {i}: {fd} vs {}", f[i]);
            }
        }
    }

    #[test]
    fn tangent_is_force_jacobian_and_symmetric() {
        let c = ElementCache::new(&skew_quad(), 0.2).unwrap();
        let m = moduli(0.8, 20.0);
        let u = disp();
        let mut k = [[0.0; 8]; 8];
        element_response(&c.geom, &c.k_lin_unit, &u, &m, Some(&mut k)).unwrap();
        let h = 1e-7;
        let scale = k.iter().flatten().fold(0.0f64, |a, x| a.max(x.abs()));
        for j in 0..8 {
            let (mut up, mut um) = (u, u);
            up[j] += h;
            um[j] -= h;
            let fp = element_response(&c.geom, &c.k_lin_unit, &up, &m, None).unwrap();
            let fm = element_response(&c.geom, &c.k_lin_unit, &um, &m, None).unwrap();
            for i in 0..8 {
                let fd = (fp[i] - fm[i]) / (2.0 * h);
                assert!((fd - k[i][j]).abs() < 1e-6 * scale, "({i},{j}) {fd} vs {}", k[i][j]);
                assert_eq!(k[i][j], k[j][i]);
            }
        }
    }

    #[test]
    fn density_derivative_matches_fd() {
        use crate::material::{effective_moduli, gamma, linear_elastic_moduli, HyperelasticPhase, InterpolationParams, MaterialSet};
        let set = MaterialSet::two_phase(HyperelasticPhase::new(300.0, 0.49), HyperelasticPhase::new(100.0, 0.49));
        let ip = InterpolationParams { pe: 2.0, p: 2.5, pnu: 2.0, pl: 5.0, c: 0.3, beta: 20.0, ..Default::default() };
        let mods = |r1: f64, r2: f64| {
            let e = effective_moduli(&set, &ip, r1, r2);
            let (g, dg) = gamma(r1, ip.beta, ip.c);
            let (el, del) = linear_elastic_moduli(r1, ip.pl, set.linear_e0, ip.eps_e);
            ElementModuli {
                gamma: g,
                dgamma: dg,
                kappa: e.kappa,
                mu: e.mu,
                dkappa_d1: e.dkappa_d1,
                dmu_d1: e.dmu_d1,
                dkappa_d2: e.dkappa_d2,
                dmu_d2: e.dmu_d2,
                e_lin: el,
                de_lin: del,
            }
        };
        let c = ElementCache::new(&skew_quad(), 0.2).unwrap();
        let u = disp();
        let (r1, r2, h) = (0.31, 0.57, 1e-6);
        let (d1, d2) = element_density_derivative(&c.geom, &c.k_lin_unit, &u, &mods(r1, r2)).unwrap();
        let f = |a: f64, b: f64| element_response(&c.geom, &c.k_lin_unit, &u, &mods(a, b), None).unwrap();
        let (p1, m1) = (f(r1 + h, r2), f(r1 - h, r2));
        let (p2, m2) = (f(r1, r2 + h), f(r1, r2 - h));
        let s1 = d1.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let s2 = d2.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        for i in 0..8 {
            assert!(((p1[i] - m1[i]) / (2.0 * h) - d1[i]).abs() < 1e-6 * s1, "d1 {i}");
            assert!(((p2[i] - m2[i]) / (2.0 * h) - d2[i]).abs() < 1e-6 * s2, "d2 {i}");
        }
    }

    #[test]
    fn rigid_translation_is_force_free() {
        let c = ElementCache::new(&skew_quad(), 0.2).unwrap();
        let m = moduli(0.7, 10.0);
        let u = [0.3, -0.2, 0.3, -0.2, 0.3, -0.2, 0.3, -0.2];
        let f = element_response(&c.geom, &c.k_lin_unit, &u, &m, None).unwrap();
        assert!(f.iter().all(|x| x.abs() < 1e-10));
    }

    #[test]
    fn void_element_nonlinear_part_scaled_by_gamma() {
        // with e_lin = 0 the force is γ times the force of the gradient-scaled state
        let c = ElementCache::new(&skew_quad(), 0.2).unwrap();
        let (g, _) = crate::material::gamma(0.0, 120.0, 0.08);
        let u = disp();
        let f = element_response(&c.geom, &c.k_lin_unit, &u, &moduli(g, 0.0), None).unwrap();
        let us: ElemVec = core::array::from_fn(|i| g * u[i]);
        let f1 = element_response(&c.geom, &c.k_lin_unit, &us, &moduli(1.0, 0.0), None).unwrap();
        for i in 0..8 {
            assert!((f[i] - g * f1[i]).abs() < 1e-12 * (1.0 + f1[i].abs()));
        }
    }

    #[test]
    fn work_conjugate_stress_reproduces_force() {
        let c = ElementCache::new(&skew_quad(), 0.2).unwrap();
        let m = moduli(0.9, 30.0);
        let u = disp();
        let f = element_response(&c.geom, &c.k_lin_unit, &u, &m, None).unwrap();
        let p = work_conjugate_stress(&c.geom, &u, &m).unwrap();
        // affine test increment δu = H X
        let x = skew_quad();
        let hm = [0.3, -0.7, 0.2, 1.1];
        let du: ElemVec = core::array::from_fn(|k| {
            let (a, i) = (k / 2, k % 2);
            hm[i] * x[a][0] + hm[i + 2] * x[a][1]
        });
        let lhs: f64 = (0..8).map(|i| f[i] * du[i]).sum();
        let rhs: f64 = (0..4).map(|s| c.geom.w[s] * dot4(&p[s], &hm)).sum();
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
    }
}
