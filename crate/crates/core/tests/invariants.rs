//! Property tests of identities the numerics must respect.

use auxetic_core::fem::{Design, RveModel, SolverSettings};
use auxetic_core::homogenization::{rotate_tangent, uniaxial_drive, LoadCase};
use auxetic_core::material::{e_nu_interpolation, gamma, linear_tangent, HyperelasticPhase, InterpolationParams, MaterialSet};
use auxetic_core::mesh::{build_filter, build_mesh, periodic_distance, CellShape};
use auxetic_core::stability::rank_one_indicator;
use auxetic_core::tensor::{mat4_asymmetry, mat4_max_abs, Mat2};
use proptest::prelude::*;
use std::f64::consts::PI;

fn rot(t: f64) -> Mat2 {
    Mat2::new(t.cos(), -t.sin(), t.sin(), t.cos())
}

fn deformation() -> impl Strategy<Value = Mat2> {
    prop::array::uniform4(-0.35f64..0.35)
        .prop_map(|d| Mat2::new(1.0 + d[0], d[1], d[2], 1.0 + d[3]))
        .prop_filter("det > 0.2", |f| f.det() > 0.2)
}

fn shape() -> impl Strategy<Value = CellShape> {
    prop_oneof![
        Just(CellShape::Square),
        (40.0f64..140.0).prop_map(|a| CellShape::Parallelogram { angle_deg: a }),
        Just(CellShape::Hexagon),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn energy_is_objective_and_isotropic(f in deformation(), t in 0.0f64..(2.0 * PI), e in 1.0f64..500.0, nu in 0.0f64..0.495) {
        let law = HyperelasticPhase::new(e, nu).law();
        let w = law.energy(&f).unwrap();
        let q = rot(t);
        prop_assert!((law.energy(&q.matmul(&f)).unwrap() - w).abs() <= 1e-11 * w.abs().max(1e-12 * e));
        prop_assert!((law.energy(&f.matmul(&q)).unwrap() - w).abs() <= 1e-11 * w.abs().max(1e-12 * e));
        // P(QF) = Q P(F)
        let p = law.stress(&f).unwrap();
        let pq = law.stress(&q.matmul(&f)).unwrap();
        let qp = q.matmul(&p);
        for k in 0..4 {
            prop_assert!((pq.0[k] - qp.0[k]).abs() <= 1e-10 * e);
        }
    }

    #[test]
    fn tangent_has_major_symmetry(f in deformation(), e in 1.0f64..500.0, nu in 0.0f64..0.495) {
        let a = HyperelasticPhase::new(e, nu).law().tangent(&f).unwrap();
        prop_assert!(mat4_asymmetry(&a) <= 1e-12 * mat4_max_abs(&a));
    }

    #[test]
    fn rank_one_of_isotropic_moduli_is_the_shear_modulus(e in 1.0f64..500.0, nu in 0.0f64..0.49, t in 0.0f64..PI) {
        let a = rotate_tangent(&linear_tangent(e, nu), t);
        let mu = e / (2.0 * (1.0 + nu));
        let b = rank_one_indicator(&a, PI / 360.0).b;
        prop_assert!((b - mu).abs() <= 1e-9 * mu, "{} vs {}", b, mu);
    }

    #[test]
    fn interpolation_is_monotone_and_bounded(r in 0.0f64..1.0, dr in 1e-3f64..0.5, pe in 1.0f64..5.0, pnu in 1.0f64..3.0) {
        let phase = HyperelasticPhase::new(100.0, 0.45);
        let s = (r + dr).min(1.0);
        let a = e_nu_interpolation(r, &phase, pe, pnu, 0.4);
        let b = e_nu_interpolation(s, &phase, pe, pnu, 0.4);
        prop_assert!(a[0] <= b[0] && a[1] <= b[1]);
        prop_assert!(b[0] <= phase.e && b[1] <= phase.nu + 1e-15);
        let (g, dg) = gamma(r, 120.0, 0.08);
        prop_assert!((0.0..=1.0).contains(&g) && dg >= 0.0);
    }

    #[test]
    fn filter_rows_are_averages(sh in shape(), res in 3usize..9, frac in 0.05f64..0.45) {
        let mesh = build_mesh(sh, res, 1.0).unwrap();
        let w = build_filter(&mesh, frac * mesh.lattice.min_period()).unwrap();
        let ones = w.apply(&vec![1.0; mesh.n_elements()]);
        for v in ones {
            prop_assert!((v - 1.0).abs() < 1e-12);
        }
        prop_assert!(w.weights.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn periodic_distance_is_a_metric(sh in shape(), f in prop::array::uniform4(-0.5f64..0.5)) {
        let mesh = build_mesh(sh, 2, 1.0).unwrap();
        let lat = &mesh.lattice;
        let at = |u: f64, v: f64| [u * lat.a1[0] + v * lat.a2[0], u * lat.a1[1] + v * lat.a2[1]];
        let (a, b) = (at(f[0], f[1]), at(f[2], f[3]));
        let d = periodic_distance(lat, a, b);
        prop_assert!((d - periodic_distance(lat, b, a)).abs() < 1e-12);
        prop_assert!(d <= (a[0] - b[0]).hypot(a[1] - b[1]) + 1e-12);
        // a point and its periodic image are the same point
        let t = lat.translate([1, 0]);
        prop_assert!((periodic_distance(lat, a, [a[0] + t[0], a[1] + t[1]])).abs() < 1e-12);
        prop_assert!(d <= 0.5 * (lat.a1[0].hypot(lat.a1[1]) + lat.a2[0].hypot(lat.a2[1])) + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    /// A uniform cell's response does not depend on its mesh, shape or orientation.
    #[test]
    fn uniform_cells_share_one_poisson_ratio(sh in shape(), rho in 0.5f64..1.0, theta in 0.0f64..90.0, lambda2 in 0.9f64..1.15) {
        prop_assume!((lambda2 - 1.0).abs() > 0.01);
        let set = MaterialSet::single(HyperelasticPhase::new(100.0, 0.3));
        let ip = InterpolationParams::default();
        let load = LoadCase { lambda2, theta_deg: theta, steps: 3 };
        let st = SolverSettings { min_steps: 3, ..SolverSettings::default() };
        let nu = |shape: CellShape, res: usize, theta_deg: f64| {
            let model = RveModel::new(build_mesh(shape, res, 1.0).unwrap()).unwrap();
            let d = Design::uniform(model.n_elements(), rho, 1.0);
            uniaxial_drive(&model, &set, &d, &ip, &LoadCase { theta_deg, ..load }, &st).unwrap().final_poisson().unwrap()
        };
        let reference = nu(CellShape::Square, 1, 0.0);
        let other = nu(sh, 3, theta);
        prop_assert!((reference - other).abs() < 1e-8, "{} vs {}", reference, other);
    }
}
