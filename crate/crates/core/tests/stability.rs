//! Bloch and rank-one indicators against dense eigensolves and brute force.

use auxetic_core::element::gradient_gram;
use auxetic_core::fem::{design_moduli, Design, RveModel, SolverSettings, StiffnessMode};
use auxetic_core::homogenization::{uniaxial_drive, LoadCase};
use auxetic_core::material::{HyperelasticPhase, InterpolationParams, MaterialSet};
use auxetic_core::mesh::{build_mesh, CellShape};
use auxetic_core::stability::{
    active_elements, rank_one_indicator, stability_scan, BlochProblem, BzGrid, StabilityOptions,
};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::f64::consts::PI;

/// Dense smallest eigenvalue of the Bloch pencil with translations (at k = 0)
/// projected out.
fn dense_beta(model: &RveModel, ke: &[[[f64; 8]; 8]], active: &[usize], k: [f64; 2]) -> f64 {
    let mesh = &model.mesh;
    let mut in_solid = vec![false; mesh.n_nodes()];
    for &e in active {
        for &v in &mesh.elements[e] {
            in_solid[v] = true;
        }
    }
    let mut class = vec![usize::MAX; mesh.n_nodes()];
    let mut n_cls = 0;
    for v in 0..mesh.n_nodes() {
        let m = mesh.master_of[v];
        if in_solid[v] && class[m] == usize::MAX {
            class[m] = n_cls;
            n_cls += 1;
        }
    }
    let mut cells = vec![[0i32; 2]; mesh.n_nodes()];
    for p in &mesh.pairs {
        cells[p.slave] = p.cells;
    }
    let n = 2 * n_cls;
    let mut kk = DMatrix::<Complex64>::zeros(n, n);
    let mut gg = DMatrix::<Complex64>::zeros(n, n);
    for &e in active {
        let g = gradient_gram(&model.cache[e].geom);
        let nodes = mesh.elements[e];
        let idx: Vec<(usize, Complex64)> = (0..8)
            .map(|a| {
                let v = nodes[a / 2];
                let c = cells[v];
                let arg = 2.0 * PI * (k[0] * c[0] as f64 + k[1] * c[1] as f64);
                (2 * class[mesh.master_of[v]] + a % 2, Complex64::new(arg.cos(), arg.sin()))
            })
            .collect();
        for a in 0..8 {
            for b in 0..8 {
                let w = idx[a].1.conj() * idx[b].1;
                kk[(idx[a].0, idx[b].0)] += w * ke[e][a][b];
                gg[(idx[a].0, idx[b].0)] += w * g[a][b];
            }
        }
    }
    let kk = (&kk + kk.adjoint()) * Complex64::new(0.5, 0.0);
    let (kk, gg) = if k == [0.0, 0.0] {
        // orthonormal complement of the two translations
        let mut t = DMatrix::<f64>::zeros(n, 2);
        for c in 0..n_cls {
            t[(2 * c, 0)] = 1.0;
            t[(2 * c + 1, 1)] = 1.0;
        }
        let p = DMatrix::<f64>::identity(n, n) - &t * (t.transpose() * &t).try_inverse().unwrap() * t.transpose();
        let eig = p.symmetric_eigen();
        let cols: Vec<DVector<f64>> =
            (0..n).filter(|&i| eig.eigenvalues[i] > 0.5).map(|i| eig.eigenvectors.column(i).into_owned()).collect();
        let q = DMatrix::from_columns(&cols).map(|x| Complex64::new(x, 0.0));
        (q.adjoint() * &kk * &q, q.adjoint() * &gg * &q)
    } else {
        (kk, gg)
    };
    let l = gg.cholesky().expect("Gram matrix must be positive definite").l();
    let li = l.try_inverse().unwrap();
    let c = &li * kk * li.adjoint();
    let c = (&c + c.adjoint()) * Complex64::new(0.5, 0.0);
    c.symmetric_eigen().eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

fn porous_6x6() -> (RveModel, Design) {
    let model = RveModel::new(build_mesh(CellShape::Square, 6, 1.0).unwrap()).unwrap();
    let rho1 = (0..36)
        .map(|e| {
            let c = model.mesh.centroids[e];
            if c[0].abs() < 0.2 && c[1].abs() < 0.2 { 0.0 } else { 1.0 }
        })
        .collect();
    (model, Design { rho1, rho2: vec![1.0; 36] })
}

fn loaded_pencil<'a>(model: &'a RveModel, design: &Design, lambda2: f64) -> (BlochProblem<'a>, Vec<[[f64; 8]; 8]>, Vec<usize>) {
    let set = MaterialSet::single(HyperelasticPhase::new(100.0, 0.45));
    let ip = InterpolationParams::default();
    let path = uniaxial_drive(model, &set, design, &ip, &LoadCase { lambda2, theta_deg: 0.0, steps: 4 }, &SolverSettings::default()).unwrap();
    let ip = InterpolationParams { c: path.c, ..ip };
    let u = &path.steps.last().unwrap().u;
    let mods = design_moduli(&set, &ip, design, StiffnessMode::Interpolated);
    let ke = model.assemble(u, &mods, true).unwrap().ke;
    let active = active_elements(design, Some(0.5));
    let p = BlochProblem::new(model, ke.clone(), active.clone()).unwrap();
    (p, ke, active)
}

#[test]
fn k_zero_matches_dense_deflated_eigensolve() {
    for (model, design) in [
        {
            let m = RveModel::new(build_mesh(CellShape::Square, 6, 1.0).unwrap()).unwrap();
            (m, Design::solid(36))
        },
        porous_6x6(),
    ] {
        let (p, ke, active) = loaded_pencil(&model, &design, 0.93);
        let b = p.beta([0.0, 0.0]).unwrap();
        let d = dense_beta(&model, &ke, &active, [0.0, 0.0]);
        assert!((b - d).abs() <= 1e-8 * d.abs(), "sparse {b:.12e} dense {d:.12e}");
    }
}

#[test]
fn nonzero_k_matches_dense_hermitian_eigensolve() {
    let (model, design) = porous_6x6();
    let (p, ke, active) = loaded_pencil(&model, &design, 0.93);
    for k in [[0.25, 0.1], [0.5, 0.5], [0.01, 0.97]] {
        let b = p.beta(k).unwrap();
        let d = dense_beta(&model, &ke, &active, k);
        assert!((b - d).abs() <= 1e-8 * d.abs(), "k {k:?}: sparse {b:.12e} dense {d:.12e}");
    }
}

#[test]
fn hexagon_cell_matches_dense() {
    let model = RveModel::new(build_mesh(CellShape::Hexagon, 2, 1.0).unwrap()).unwrap();
    let n = model.n_elements();
    let design = Design::solid(n);
    let (p, ke, active) = loaded_pencil(&model, &design, 1.05);
    for k in [[0.0, 0.0], [0.3, 0.6]] {
        let b = p.beta(k).unwrap();
        let d = dense_beta(&model, &ke, &active, k);
        assert!((b - d).abs() <= 1e-8 * d.abs(), "k {k:?}: sparse {b:.12e} dense {d:.12e}");
    }
}

#[test]
fn time_reversal_symmetry() {
    let (model, design) = porous_6x6();
    let (p, _, _) = loaded_pencil(&model, &design, 0.95);
    for k in [[0.3, 0.15], [0.05, 0.8], [0.5, 0.25]] {
        let a = p.beta(k).unwrap();
        let b = p.beta([1.0 - k[0], 1.0 - k[1]]).unwrap();
        assert!((a - b).abs() <= 1e-10 * a.abs(), "{a} vs {b}");
    }
}

#[test]
fn undeformed_homogeneous_cell_is_stable() {
    let model = RveModel::new(build_mesh(CellShape::Square, 4, 1.0).unwrap()).unwrap();
    let set = MaterialSet::single(HyperelasticPhase::new(100.0, 0.3));
    let design = Design::solid(16);
    let ip = InterpolationParams::default();
    let u = vec![0.0; model.mesh.n_dofs()];
    let p = BlochProblem::at_state(&model, &set, &design, &ip, &u, Some(0.6)).unwrap();
    let r = p.sweep(&BzGrid { base: 8, refine: 2, zone: 0.1 });
    assert!(r.failures.is_empty(), "{:?}", r.failures);
    assert!(r.min_beta > 0.0);
    assert!(r.chain_holds(1e-8));
}

#[test]
fn rank_one_of_homogeneous_cell_is_shear_modulus() {
    let model = RveModel::new(build_mesh(CellShape::Square, 4, 1.0).unwrap()).unwrap();
    let phase = HyperelasticPhase::new(100.0, 0.3);
    let set = MaterialSet::single(phase);
    let mods = design_moduli(&set, &InterpolationParams::default(), &Design::solid(16), StiffnessMode::Reference);
    let a = model.homogenized_tangent(&model.reference_linearization(&mods).unwrap()).a_bar;
    let coarse = rank_one_indicator(&a, PI / 720.0);
    let fine = rank_one_indicator(&a, PI / 7200.0);
    assert!((coarse.b - phase.mu()).abs() <= 1e-6 * phase.mu(), "{} vs {}", coarse.b, phase.mu());
    assert!((coarse.b - fine.b).abs() <= 1e-6 * phase.mu());
}

#[test]
fn rank_one_rotates_with_the_moduli() {
    // square-symmetric cell: a 90° rotation of Ā leaves B unchanged
    let (model, design) = porous_6x6();
    let set = MaterialSet::single(HyperelasticPhase::new(100.0, 0.3));
    let mods = design_moduli(&set, &InterpolationParams::default(), &design, StiffnessMode::Reference);
    let a = model.homogenized_tangent(&model.reference_linearization(&mods).unwrap()).a_bar;
    let r = auxetic_core::homogenization::rotate_tangent(&a, PI / 2.0);
    let b0 = rank_one_indicator(&a, PI / 360.0).b;
    let b1 = rank_one_indicator(&r, PI / 360.0).b;
    assert!((b0 - b1).abs() <= 1e-10 * b0.abs());
}

#[test]
fn neo_hookean_tension_stays_elliptic() {
    let model = RveModel::new(build_mesh(CellShape::Square, 3, 1.0).unwrap()).unwrap();
    let set = MaterialSet::single(HyperelasticPhase::new(100.0, 0.3));
    let opts = StabilityOptions { sweep: false, ..Default::default() };
    let rep = stability_scan(
        &model,
        &set,
        &Design::solid(9),
        &InterpolationParams::default(),
        &LoadCase { lambda2: 1.3, theta_deg: 20.0, steps: 6 },
        &SolverSettings::default(),
        &opts,
    )
    .unwrap();
    assert_eq!(rep.checkpoints.len(), 6);
    assert!(rep.checkpoints.iter().all(|c| c.rank_one.b > 0.0));
    assert_eq!(rep.first_macro_loss(), None);
}
