//! Constitutive laws and material interpolation.
//!
//! The hyperelastic law is a compressible neo-Hookean solid evaluated on the
//! plane-strain completion of the 2-D deformation gradient (F33 = 1):
//!
//! ```text
//! ψ(F) = κ/2 (J − 1)² + μ/2 (J^{-2/3} I1 − 3),   J = det F,  I1 = tr FᵀF + 1
//! ```
//!
//! Because κ and μ enter linearly, stress and tangent are returned split into
//! their κ- and μ-parts; density interpolation then only rescales the parts.

use crate::tensor::{outer4, Mat2, Mat4, Vec4, CM, I4};

/// One isotropic hyperelastic phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperelasticPhase {
    /// Initial Young's modulus.
    pub e: f64,
    /// Initial Poisson's ratio.
    pub nu: f64,
    /// Mass density (only used by mass constraints).
    pub density: f64,
}

impl HyperelasticPhase {
    pub const fn new(e: f64, nu: f64) -> Self {
        HyperelasticPhase { e, nu, density: 1.0 }
    }
    pub fn kappa(&self) -> f64 {
        bulk(self.e, self.nu)
    }
    pub fn mu(&self) -> f64 {
        shear(self.e, self.nu)
    }
    pub fn law(&self) -> NeoHookean {
        NeoHookean { kappa: self.kappa(), mu: self.mu() }
    }
}

#[inline]
pub fn bulk(e: f64, nu: f64) -> f64 {
    e / (3.0 * (1.0 - 2.0 * nu))
}

#[inline]
pub fn shear(e: f64, nu: f64) -> f64 {
    e / (2.0 * (1.0 + nu))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeoHookean {
    pub kappa: f64,
    pub mu: f64,
}

/// Stress and tangent of the neo-Hookean law per unit κ and unit μ.
#[derive(Debug, Clone, Copy)]
pub struct NeoHookeanParts {
    pub p_kappa: Vec4,
    pub p_mu: Vec4,
    pub a_kappa: Mat4,
    pub a_mu: Mat4,
}

impl NeoHookeanParts {
    pub fn stress(&self, kappa: f64, mu: f64) -> Vec4 {
        core::array::from_fn(|i| kappa * self.p_kappa[i] + mu * self.p_mu[i])
    }
    pub fn tangent(&self, kappa: f64, mu: f64) -> Mat4 {
        core::array::from_fn(|i| {
            core::array::from_fn(|j| kappa * self.a_kappa[i][j] + mu * self.a_mu[i][j])
        })
    }
}

/// Unit parts at `F`; `None` if det F ≤ 0.
pub fn neo_hookean_parts(f: &Mat2) -> Option<NeoHookeanParts> {
    let j = f.det();
    if !(j > 0.0) || !j.is_finite() {
        return None;
    }
    let fv = f.0;
    let cof = f.cofactor().0;
    let i1 = f.ddot(f) + 1.0;
    let j23 = libm::cbrt(j * j).recip(); // J^{-2/3}
    let j53 = j23 / j; // J^{-5/3}
    let j83 = j53 / j; // J^{-8/3}

    let p_kappa = core::array::from_fn(|a| (j - 1.0) * cof[a]);
    let p_mu = core::array::from_fn(|a| j23 * fv[a] - (i1 / 3.0) * j53 * cof[a]);

    let cc = outer4(&cof, &cof);
    let a_kappa = core::array::from_fn(|a| core::array::from_fn(|b| cc[a][b] + (j - 1.0) * CM[a][b]));
    let a_mu = core::array::from_fn(|a| {
        core::array::from_fn(|b| {
            j23 * I4[a][b] - (2.0 / 3.0) * j53 * (fv[a] * cof[b] + cof[a] * fv[b])
                + (5.0 / 9.0) * i1 * j83 * cc[a][b]
                - (1.0 / 3.0) * i1 * j53 * CM[a][b]
        })
    });
    Some(NeoHookeanParts { p_kappa, p_mu, a_kappa, a_mu })
}

impl NeoHookean {
    pub fn energy(&self, f: &Mat2) -> Option<f64> {
        let j = f.det();
        if !(j > 0.0) {
            return None;
        }
        let i1 = f.ddot(f) + 1.0;
        let j23 = libm::cbrt(j * j).recip();
        Some(0.5 * self.kappa * (j - 1.0) * (j - 1.0) + 0.5 * self.mu * (j23 * i1 - 3.0))
    }

    /// First Piola–Kirchhoff stress (vectorised).
    pub fn stress(&self, f: &Mat2) -> Option<Mat2> {
        neo_hookean_parts(f).map(|p| Mat2(p.stress(self.kappa, self.mu)))
    }

    pub fn tangent(&self, f: &Mat2) -> Option<Mat4> {
        neo_hookean_parts(f).map(|p| p.tangent(self.kappa, self.mu))
    }
}

/// Plane-strain small-strain isotropic tangent acting on the vectorised
/// displacement gradient (the symmetrization is built in).
pub fn linear_tangent(e: f64, nu: f64) -> Mat4 {
    let lam = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
    let mu = shear(e, nu);
    let mut c = [[0.0; 4]; 4];
    c[0][0] = lam + 2.0 * mu;
    c[3][3] = lam + 2.0 * mu;
    c[0][3] = lam;
    c[3][0] = lam;
    for a in 1..3 {
        for b in 1..3 {
            c[a][b] = mu;
        }
    }
    c
}

/// Penalization exponents and interpolation constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterpolationParams {
    /// Young's modulus exponent of the E–ν rule.
    pub pe: f64,
    /// Exponent between the two hyperelastic phases.
    pub p: f64,
    /// Poisson exponent of the E–ν rule.
    pub pnu: f64,
    /// Exponent of the linear-energy Young's modulus.
    pub pl: f64,
    pub eps_nu: f64,
    pub eps_e: f64,
    /// Sharpness of the linear-energy switch.
    pub beta: f64,
    /// Threshold of the linear-energy switch.
    pub c: f64,
}

impl Default for InterpolationParams {
    fn default() -> Self {
        InterpolationParams {
            pe: 3.0,
            p: 3.0,
            pnu: 1.0,
            pl: 6.0,
            eps_nu: 0.4,
            eps_e: 1e-8,
            beta: 120.0,
            c: 0.08,
        }
    }
}

/// Penalized `(E, ν)` of a phase at density `rho` and their derivatives.
pub fn e_nu_interpolation(rho: f64, phase: &HyperelasticPhase, pe: f64, pnu: f64, eps_nu: f64) -> [f64; 4] {
    let e = libm::pow(rho, pe) * phase.e;
    let de = pe * libm::pow(rho, pe - 1.0) * phase.e;
    let q = 1.0 - rho;
    let nu = (eps_nu + (1.0 - eps_nu) * (1.0 - libm::pow(q, pnu))) * phase.nu;
    let dnu = (1.0 - eps_nu) * pnu * libm::pow(q, pnu - 1.0) * phase.nu;
    [e, nu, de, dnu]
}

/// Penalized `(κ, μ, dκ/dρ, dμ/dρ)` of a phase.
fn penalized_moduli(rho: f64, phase: &HyperelasticPhase, ip: &InterpolationParams) -> [f64; 4] {
    let [e, nu, de, dnu] = e_nu_interpolation(rho, phase, ip.pe, ip.pnu, ip.eps_nu);
    let s = 1.0 - 2.0 * nu;
    let t = 1.0 + nu;
    let k = e / (3.0 * s);
    let m = e / (2.0 * t);
    let dk = de / (3.0 * s) + e * 2.0 * dnu / (3.0 * s * s);
    let dm = de / (2.0 * t) - e * dnu / (2.0 * t * t);
    [k, m, dk, dm]
}

/// Linear-energy Young's modulus `[ε + (1−ε)ρ^{pL}] E0` and its derivative.
pub fn linear_elastic_moduli(rho: f64, pl: f64, e0: f64, eps_e: f64) -> (f64, f64) {
    let e = (eps_e + (1.0 - eps_e) * libm::pow(rho, pl)) * e0;
    let de = (1.0 - eps_e) * pl * libm::pow(rho, pl - 1.0) * e0;
    (e, de)
}

/// Linear-energy switch γ(ρ) = 1/(1 + exp(β(c − ρ))) and dγ/dρ.
pub fn gamma(rho: f64, beta: f64, c: f64) -> (f64, f64) {
    let g = 1.0 / (1.0 + libm::exp(beta * (c - rho)));
    (g, beta * g * (1.0 - g))
}

/// Phases of a design problem. With `phase2 = None` the second density
/// field is ignored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialSet {
    pub void: HyperelasticPhase,
    pub phase1: HyperelasticPhase,
    pub phase2: Option<HyperelasticPhase>,
    /// Young's modulus of the linear-energy term (the softest solid phase).
    pub linear_e0: f64,
    pub linear_nu: f64,
}

impl MaterialSet {
    pub const VOID: HyperelasticPhase = HyperelasticPhase { e: 1e-6, nu: 0.2, density: 0.0 };

    pub fn single(solid: HyperelasticPhase) -> Self {
        MaterialSet { void: Self::VOID, phase1: solid, phase2: None, linear_e0: solid.e, linear_nu: 0.2 }
    }

    pub fn two_phase(m1: HyperelasticPhase, m2: HyperelasticPhase) -> Self {
        MaterialSet {
            void: Self::VOID,
            phase1: m1,
            phase2: Some(m2),
            linear_e0: m1.e.min(m2.e),
            linear_nu: 0.2,
        }
    }

    pub fn is_multimaterial(&self) -> bool {
        self.phase2.is_some()
    }
}

/// Effective neo-Hookean moduli of a mixed element and their density
/// derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EffectiveModuli {
    pub kappa: f64,
    pub mu: f64,
    pub dkappa_d1: f64,
    pub dmu_d1: f64,
    pub dkappa_d2: f64,
    pub dmu_d2: f64,
}

pub fn effective_moduli(set: &MaterialSet, ip: &InterpolationParams, rho1: f64, rho2: f64) -> EffectiveModuli {
    let w = libm::pow(rho1, ip.pe);
    let dw = ip.pe * libm::pow(rho1, ip.pe - 1.0);
    let (kv, mv) = (set.void.kappa(), set.void.mu());
    let [k1, m1, dk1, dm1] = penalized_moduli(rho1, &set.phase1, ip);
    let mut out = EffectiveModuli {
        kappa: (1.0 - w) * kv,
        mu: (1.0 - w) * mv,
        dkappa_d1: -dw * kv,
        dmu_d1: -dw * mv,
        ..Default::default()
    };
    match &set.phase2 {
        None => {
            out.kappa += k1;
            out.mu += m1;
            out.dkappa_d1 += dk1;
            out.dmu_d1 += dm1;
        }
        Some(ph2) => {
            let [k2, m2, dk2, dm2] = penalized_moduli(rho1, ph2, ip);
            let a = libm::pow(rho2, ip.p);
            let da = ip.p * libm::pow(rho2, ip.p - 1.0);
            let b = libm::pow(1.0 - rho2, ip.p);
            let db = -ip.p * libm::pow(1.0 - rho2, ip.p - 1.0);
            out.kappa += a * k1 + b * k2;
            out.mu += a * m1 + b * m2;
            out.dkappa_d1 += a * dk1 + b * dk2;
            out.dmu_d1 += a * dm1 + b * dm2;
            out.dkappa_d2 = da * k1 + db * k2;
            out.dmu_d2 = da * m1 + db * m2;
        }
    }
    out
}

/// Interpolated point energy of the linear-energy scheme for a displacement
/// gradient `g` (vectorised): ψ(I + γ g) + (1 − γ²) ψ_L(g).
pub fn interpolate_energy(set: &MaterialSet, ip: &InterpolationParams, g: &Vec4, rho1: f64, rho2: f64) -> Option<f64> {
    let (gm, _) = gamma(rho1, ip.beta, ip.c);
    let eff = effective_moduli(set, ip, rho1, rho2);
    let f = Mat2(core::array::from_fn(|a| I4[0][a] + I4[3][a] + gm * g[a]));
    let psi = NeoHookean { kappa: eff.kappa, mu: eff.mu }.energy(&f)?;
    let (el, _) = linear_elastic_moduli(rho1, ip.pl, set.linear_e0, ip.eps_e);
    let c = linear_tangent(el, set.linear_nu);
    let lin = 0.5 * crate::tensor::bilinear4(g, &c, g);
    Some(psi + (1.0 - gm * gm) * lin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::mat4_asymmetry;

    fn law() -> NeoHookean {
        HyperelasticPhase::new(100.0, 0.49).law()
    }

    #[test]
    fn stress_free_reference() {
        let p = law().stress(&Mat2::IDENTITY).unwrap();
        assert!(p.norm() < 1e-12);
    }

    #[test]
    fn stress_is_energy_gradient() {
        let nh = law();
        let f = Mat2::new(1.2, 0.1, -0.05, 0.9);
        let p = nh.stress(&f).unwrap();
        let h = 1e-6;
        for a in 0..4 {
            let (mut fp, mut fm) = (f, f);
            fp.0[a] += h;
            fm.0[a] -= h;
            let fd = (nh.energy(&fp).unwrap() - nh.energy(&fm).unwrap()) / (2.0 * h);
            assert!((fd - p.0[a]).abs() < 1e-5 * (1.0 + p.0[a].abs()), "{a}: {fd} vs {}", p.0[a]);
        }
    }

    #[test]
    fn tangent_matches_small_strain_at_identity() {
        let ph = HyperelasticPhase::new(100.0, 0.49);
        let a = ph.law().tangent(&Mat2::IDENTITY).unwrap();
        let c = linear_tangent(ph.e, ph.nu);
        for i in 0..4 {
            for j in 0..4 {
                assert!((a[i][j] - c[i][j]).abs() < 1e-9 * ph.kappa(), "{i}{j}");
            }
        }
        assert!(mat4_asymmetry(&a) < 1e-12);
    }

    #[test]
    fn rejects_inverted() {
        assert!(law().stress(&Mat2::new(-1.0, 0.0, 0.0, 1.0)).is_none());
    }

    #[test]
    fn gamma_at_void() {
        let (g, _) = gamma(0.0, 120.0, 0.08);
        assert!((g - 6.7724e-5).abs() < 1e-8);
    }

    #[test]
    fn e_nu_rule_example() {
        let ph = HyperelasticPhase::new(100.0, 0.49);
        let [e, nu, _, _] = e_nu_interpolation(0.5, &ph, 3.0, 3.0, 0.4);
        assert!((e - 12.5).abs() < 1e-12);
        assert!((nu - 0.45325).abs() < 1e-12);
    }

    #[test]
    fn linear_modulus_example() {
        let (e, _) = linear_elastic_moduli(0.5, 4.0, 100.0, 1e-8);
        assert!((e - 6.250000937).abs() < 1e-8);
    }

    #[test]
    fn effective_moduli_derivatives() {
        let set = MaterialSet::two_phase(
            HyperelasticPhase { e: 300.0, nu: 0.49, density: 2100.0 },
            HyperelasticPhase { e: 100.0, nu: 0.49, density: 500.0 },
        );
        let ip = InterpolationParams { pe: 2.3, p: 1.7, pnu: 2.1, ..Default::default() };
        let (r1, r2, h) = (0.43, 0.61, 1e-6);
        let m = effective_moduli(&set, &ip, r1, r2);
        let d1 = |f: fn(&EffectiveModuli) -> f64| {
            (f(&effective_moduli(&set, &ip, r1 + h, r2)) - f(&effective_moduli(&set, &ip, r1 - h, r2))) / (2.0 * h)
        };
        let d2 = |f: fn(&EffectiveModuli) -> f64| {
            (f(&effective_moduli(&set, &ip, r1, r2 + h)) - f(&effective_moduli(&set, &ip, r1, r2 - h))) / (2.0 * h)
        };
        assert!((d1(|m| m.kappa) - m.dkappa_d1).abs() < 1e-5 * m.dkappa_d1.abs());
        assert!((d1(|m| m.mu) - m.dmu_d1).abs() < 1e-5 * m.dmu_d1.abs());
        assert!((d2(|m| m.kappa) - m.dkappa_d2).abs() < 1e-5 * m.dkappa_d2.abs());
        assert!((d2(|m| m.mu) - m.dmu_d2).abs() < 1e-5 * m.dmu_d2.abs());
    }

    #[test]
    fn full_density_is_pure_phase() {
        let ph = HyperelasticPhase::new(100.0, 0.49);
        let set = MaterialSet::single(ph);
        let m = effective_moduli(&set, &InterpolationParams::default(), 1.0, 1.0);
        assert!((m.kappa - ph.kappa()).abs() < 1e-12 * ph.kappa());
        assert!((m.mu - ph.mu()).abs() < 1e-12);
    }
}
