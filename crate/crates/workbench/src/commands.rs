//! The five workbench commands. Each validates its inputs completely,
//! runs, writes its files under `out` and returns a short summary.

use std::path::{Path, PathBuf};

use auxetic_core::fem::{Design, RveModel, SolverSettings};
use auxetic_core::homogenization::{uniaxial_drive, LoadPath};
use auxetic_core::material::InterpolationParams;
use auxetic_core::mesh::{build_filter, build_mesh};
use auxetic_core::optimizer::{discreteness, gradient_check, physical_design, run_optimization, Formulation, StopReason};
use auxetic_core::stability::{active_elements, stability_scan};
use auxetic_core::tile::tile_test;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{FormulationKind, InitialDesignConfig, JobConfig};
use crate::density::DensityField;
use crate::error::CliError;
use crate::export::{num, opt, write_vtk, CellData, Table};

/// Largest mesh accepted by `check-grad`.
pub const CHECK_GRAD_MAX_RESOLUTION: usize = 12;

/// Tolerance of the ordering check reported per checkpoint.
const CHAIN_TOL: f64 = 1e-8;

pub struct Outcome {
    pub summary: String,
    pub files: Vec<PathBuf>,
}

struct Job {
    cfg: JobConfig,
    model: RveModel,
    seed: u64,
    out: PathBuf,
    files: Vec<PathBuf>,
}

impl Job {
    fn new(cfg: &JobConfig, out: &Path) -> Result<Self, CliError> {
        let mesh = build_mesh(cfg.cell_shape(), cfg.resolution, cfg.cell_size)?;
        let model = RveModel::new(mesh)?;
        std::fs::create_dir_all(out)?;
        Ok(Job { cfg: cfg.clone(), model, seed: cfg.seed, out: out.to_path_buf(), files: Vec::new() })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.out.join(name);
        self.files.push(p.clone());
        p
    }

    fn two_fields(&self) -> bool {
        self.cfg.formulation == FormulationKind::Mass
    }

    /// The design to analyse: `design` if set, else the initial design.
    fn design(&self) -> Result<Design, CliError> {
        match &self.cfg.design {
            Some(p) => self.read_design(p),
            None => self.initial_design(),
        }
    }

    fn read_design(&self, p: &Path) -> Result<Design, CliError> {
        let f = DensityField::read(p)?;
        f.check_mesh(&self.model.mesh)?;
        Ok(f.design())
    }

    fn initial_design(&self) -> Result<Design, CliError> {
        let n = self.model.n_elements();
        let rho2 = if self.two_fields() { vec![self.cfg.initial_rho2; n] } else { vec![1.0; n] };
        match &self.cfg.initial_design {
            InitialDesignConfig::File { path } => self.read_design(path),
            InitialDesignConfig::Random { low, high } => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                let rho1 = (0..n).map(|_| rng.gen_range(*low..=*high)).collect();
                Ok(Design { rho1, rho2 })
            }
            _ => {
                let g = self.cfg.generator().expect("non-file, non-random designs have generators");
                Ok(Design { rho1: g.generate(&self.model.mesh), rho2 })
            }
        }
    }

    fn write_path(&mut self, name: &str, path: &LoadPath) -> Result<(), CliError> {
        let p = self.path(name);
        let mut t = Table::create(
            &p,
            &["step", "lambda1", "lambda2", "nu", "P11", "P12", "P21", "P22", "lateral_stress", "outer_jacobian"],
        )?;
        for (k, s) in path.steps.iter().enumerate() {
            let pb = &s.p_bar;
            t.row([
                (k + 1).to_string(),
                num(s.lambda1),
                num(s.lambda2),
                opt(s.nu),
                num(pb.get(0, 0)),
                num(pb.get(0, 1)),
                num(pb.get(1, 0)),
                num(pb.get(1, 1)),
                num(s.lateral),
                num(s.j_ot),
            ])?;
        }
        t.finish()
    }

    fn write_design(&mut self, name: &str, d: &Design) -> Result<(), CliError> {
        let p = self.path(name);
        DensityField::from_design(&self.model.mesh, d, self.two_fields()).write(&p)
    }

    fn finish(self, summary: String) -> Outcome {
        Outcome { summary, files: self.files }
    }
}

fn reject_empty(d: &Design) -> Result<(), CliError> {
    if d.rho1.iter().all(|&r| r == 0.0) {
        return Err(CliError::Config("the design contains no material".into()));
    }
    Ok(())
}

/// Drive the design along the configured load case.
pub fn homogenize(cfg: &JobConfig, out: &Path) -> Result<Outcome, CliError> {
    let mut job = Job::new(cfg, out)?;
    let design = job.design()?;
    reject_empty(&design)?;
    let set = cfg.material_set();
    if cfg.lambda2 == 1.0 {
        // nothing to drive: the reference state is the whole path
        let p = job.path("path.csv");
        let mut t = Table::create(&p, &["step", "lambda1", "lambda2", "nu"])?;
        t.row(["0", "1.0", "1.0", ""])?;
        t.finish()?;
        return Ok(job.finish("lambda2 = 1: reference state only".into()));
    }
    let path = uniaxial_drive(&job.model, &set, &design, &InterpolationParams::default(), &cfg.load_case(), &cfg.solver())?;
    job.write_path("path.csv", &path)?;
    for (k, s) in path.steps.iter().enumerate() {
        let p = job.path(&format!("deformed_{:03}.vtk", k + 1));
        let title = format!("lambda2 = {}", num(s.lambda2));
        let data = [CellData { name: "rho1", values: &design.rho1 }, CellData { name: "rho2", values: &design.rho2 }];
        write_vtk(&p, &title, &job.model.mesh, Some(&s.u), None, &data)?;
    }
    let last = path.steps.last().expect("a completed path has steps");
    let summary = format!(
        "{} steps, lambda1 = {:.6}, lambda2 = {:.6}, nu = {}, c = {}",
        path.steps.len(),
        last.lambda1,
        last.lambda2,
        last.nu.map_or("-".into(), |v| format!("{v:.6}")),
        path.c
    );
    Ok(job.finish(summary))
}

/// Run the design loop and persist the history and the designs.
pub fn optimize(cfg: &JobConfig, out: &Path) -> Result<Outcome, CliError> {
    let mut job = Job::new(cfg, out)?;
    let spec = cfg.problem();
    spec.validate()?;
    let w = build_filter(&job.model.mesh, spec.r_min)?;
    let init = job.initial_design()?;
    reject_empty(&init)?;
    let p = job.path("history.csv");
    let mut hist = Table::create(
        &p,
        &[
            "iter", "f0", "Vf_or_Mf", "f1", "f2", "f3", "fea_calls", "c_value", "objective", "change", "alpha", "pe", "pl",
            "pnu", "p_ref", "discreteness",
        ],
    )?;
    let mut io_error = None;
    let result = run_optimization(&job.model, &w, &spec, &init.rho1, &init.rho2, &mut |r, d| {
        let row = [
            r.iter.to_string(),
            num(r.f0),
            num(r.measure),
            num(r.f1),
            num(r.f2),
            num(r.f3),
            r.fea_calls.to_string(),
            num(r.c),
            num(r.objective),
            num(r.change),
            num(r.alpha),
            num(r.pe),
            num(r.pl),
            num(r.pnu),
            num(r.p_ref),
            num(discreteness(&d.rho1)),
        ];
        if let Err(e) = hist.row(row) {
            io_error.get_or_insert(e);
        }
    })?;
    hist.finish()?;
    if let Some(e) = io_error {
        return Err(e);
    }
    let raw = Design { rho1: result.x1.clone(), rho2: result.x2.clone() };
    job.write_design("design_raw.txt", &raw)?;
    job.write_design("design.txt", &result.design)?;
    let d = &result.design;
    let data = [CellData { name: "rho1", values: &d.rho1 }, CellData { name: "rho2", values: &d.rho2 }];
    let p = job.path("design.vtk");
    write_vtk(&p, "filtered design", &job.model.mesh, None, None, &data)?;
    let solid = active_elements(d, Some(cfg.stability.threshold));
    let p = job.path("design_thresholded.vtk");
    write_vtk(&p, "thresholded design", &job.model.mesh, None, Some(&solid), &data)?;
    let last = result.history.last();
    let measure = match spec.formulation {
        Formulation::Volume { .. } => "V_f",
        Formulation::Mass { .. } => "M_f",
    };
    let summary = format!(
        "{} iterations ({:?}), f0 = {}, {measure} = {}, f1 = {}, f2 = {}, discreteness = {:.4}",
        result.history.len(),
        result.stop,
        last.map_or("-".into(), |r| format!("{:.4e}", r.f0)),
        last.map_or("-".into(), |r| format!("{:.4}", r.measure)),
        last.map_or("-".into(), |r| format!("{:.4}", r.f1)),
        last.map_or("-".into(), |r| format!("{:.4}", r.f2)),
        discreteness(&d.rho1)
    );
    if let StopReason::AnalysisFailed(why) = &result.stop {
        return Err(CliError::Solver(auxetic_core::error::Error::NotConverged(format!(
            "{why} (history and last design written to {})",
            out.display()
        ))));
    }
    Ok(job.finish(summary))
}

/// Rank-one and Bloch indicators along the load path.
pub fn stability(cfg: &JobConfig, out: &Path) -> Result<Outcome, CliError> {
    let mut job = Job::new(cfg, out)?;
    let design = job.design()?;
    reject_empty(&design)?;
    if cfg.lambda2 == 1.0 {
        return Err(CliError::Config("stability needs lambda2 ≠ 1".into()));
    }
    let opts = cfg.stability_options();
    let rep = stability_scan(
        &job.model,
        &cfg.material_set(),
        &design,
        &InterpolationParams::default(),
        &cfg.load_case(),
        &cfg.solver(),
        &opts,
    )?;
    let p = job.path("stability.csv");
    let mut t = Table::create(
        &p,
        &[
            "checkpoint", "lambda1", "lambda2", "B", "phi", "alpha", "min_beta", "argmin_k1", "argmin_k2", "beta_zero",
            "beta_long", "k_long1", "k_long2", "chain_holds", "failed_samples", "error",
        ],
    )?;
    for (i, c) in rep.checkpoints.iter().enumerate() {
        let r = &c.rank_one;
        let b = c.bloch.as_ref();
        t.row([
            (i + 1).to_string(),
            num(c.lambda1),
            num(c.lambda2),
            num(r.b),
            num(r.phi),
            num(r.alpha),
            opt(b.map(|b| b.min_beta)),
            opt(b.map(|b| b.argmin[0])),
            opt(b.map(|b| b.argmin[1])),
            opt(b.and_then(|b| b.beta_zero)),
            opt(b.and_then(|b| b.beta_long)),
            opt(b.map(|b| b.k_long[0])),
            opt(b.map(|b| b.k_long[1])),
            b.map_or(String::new(), |b| b.chain_holds(CHAIN_TOL).to_string()),
            b.map_or(String::new(), |b| b.failures.len().to_string()),
            c.error.clone().unwrap_or_default(),
        ])?;
    }
    t.finish()?;
    for (i, c) in rep.checkpoints.iter().enumerate() {
        let p = job.path(&format!("rank_one_{:03}.csv", i + 1));
        let mut t = Table::create(&p, &["alpha", "min_phi_B"])?;
        for &(a, v) in &c.rank_one.curve {
            t.row([num(a), num(v)])?;
        }
        t.finish()?;
        if let Some(b) = &c.bloch {
            let p = job.path(&format!("bz_{:03}.csv", i + 1));
            let mut t = Table::create(&p, &["k1", "k2", "beta"])?;
            for (k, v) in b.k.iter().zip(&b.beta) {
                t.row([num(k[0]), num(k[1]), opt(*v)])?;
            }
            t.finish()?;
        }
    }
    let at = |i: Option<usize>| i.map_or("none".to_string(), |i| format!("checkpoint {} (lambda2 = {:.6})", i + 1, rep.checkpoints[i].lambda2));
    let mut summary = format!(
        "{} checkpoints; rank-one loss: {}; Bloch loss: {}; long-wave loss: {}; ordering holds: {}; long-wave consistent: {}",
        rep.checkpoints.len(),
        at(rep.first_macro_loss()),
        at(rep.first_micro_loss()),
        at(rep.first_long_wave_loss()),
        rep.chain_holds(CHAIN_TOL),
        rep.long_wave_consistent()
    );
    if let Some(e) = rep.truncated {
        summary.push_str(&format!("; scan truncated: {e}"));
        eprintln!("{summary}");
        return Err(CliError::Solver(e));
    }
    Ok(job.finish(summary))
}

/// Tiled block versus the single cell.
pub fn tile(cfg: &JobConfig, out: &Path) -> Result<Outcome, CliError> {
    let mut job = Job::new(cfg, out)?;
    let design = job.design()?;
    reject_empty(&design)?;
    let set = cfg.material_set();
    let ip = InterpolationParams::default();
    let spec = cfg.tile_spec();
    let tiled = tile_test(&job.model.mesh, &set, &design, &ip, &spec, &cfg.solver())?;
    let load = auxetic_core::homogenization::LoadCase { lambda2: spec.lambda2, theta_deg: 0.0, steps: cfg.steps };
    let cell = uniaxial_drive(&job.model, &set, &design.thresholded(spec.threshold), &ip, &load, &cfg.solver())?;
    job.write_path("cell_path.csv", &cell)?;
    let nu_cell = cell.final_poisson().expect("lambda2 ≠ 1");
    let rel = (tiled.nu - nu_cell).abs() / nu_cell.abs().max(f64::MIN_POSITIVE);
    let p = job.path("tile.csv");
    let mut t = Table::create(
        &p,
        &[
            "n", "strain", "nu_tile", "nu_cell", "rel_diff", "strain_lateral", "strain_axial", "central_tiles", "elements",
            "dropped_elements", "dofs",
        ],
    )?;
    t.row([
        spec.n.to_string(),
        num(cfg.tile.strain),
        num(tiled.nu),
        num(nu_cell),
        num(rel),
        num(tiled.strain_lateral),
        num(tiled.strain_axial),
        tiled.central.to_string(),
        tiled.n_elements.to_string(),
        tiled.dropped.to_string(),
        tiled.n_dofs.to_string(),
    ])?;
    t.finish()?;
    let summary = format!(
        "{n}x{n} tiles: nu = {:.5}, single cell nu = {:.5}, relative difference {:.3} (tolerance {})",
        tiled.nu,
        nu_cell,
        rel,
        cfg.tile.tolerance,
        n = spec.n
    );
    if rel > cfg.tile.tolerance {
        return Err(CliError::Validation(summary));
    }
    Ok(job.finish(summary))
}

/// Analytic gradients against central differences on a random design.
pub fn check_grad(cfg: &JobConfig, out: &Path) -> Result<Outcome, CliError> {
    if cfg.resolution > CHECK_GRAD_MAX_RESOLUTION {
        return Err(CliError::Config(format!(
            "check-grad runs on meshes up to {CHECK_GRAD_MAX_RESOLUTION}x{CHECK_GRAD_MAX_RESOLUTION}"
        )));
    }
    let g = cfg.check_grad.clone();
    let mut job = Job::new(cfg, out)?;
    let mut spec = cfg.problem();
    spec.validate()?;
    // fixed steps and a tight tolerance keep solver noise out of the quotients
    spec.solver = SolverSettings {
        energy_tol: 1e-24,
        min_steps: cfg.steps,
        outer_tol: 1e-12,
        allow_c_update: false,
        ..SolverSettings::default()
    };
    let n = job.model.n_elements();
    let mut rng = ChaCha8Rng::seed_from_u64(job.seed);
    let rho1: Vec<f64> = (0..n).map(|_| rng.gen_range(g.low..=g.high)).collect();
    let rho2: Vec<f64> =
        if job.two_fields() { (0..n).map(|_| rng.gen_range(g.low..=g.high)).collect() } else { vec![1.0; n] };
    let design = physical_design(&spec, &auxetic_core::mesh::FilterMatrix::identity(n), &rho1, &rho2);
    let mut elements: Vec<usize> = rand::seq::index::sample(&mut rng, n, g.samples.min(n)).into_vec();
    elements.sort_unstable();
    let samples = gradient_check(&job.model, &spec, &design, &elements, g.step)?;
    job.write_design("design.txt", &design)?;
    let p = job.path("gradients.csv");
    let mut t = Table::create(&p, &["function", "field", "element", "analytic", "fd", "rel_error"])?;
    for s in &samples {
        t.row([
            format!("f{}", s.function),
            format!("rho{}", s.field),
            s.element.to_string(),
            num(s.analytic),
            num(s.fd),
            num(s.rel_error),
        ])?;
    }
    t.finish()?;
    let worst = samples.iter().map(|s| s.rel_error).fold(0.0f64, f64::max);
    let summary = format!("{} samples, max relative error {worst:.3e} (tolerance {:e})", samples.len(), g.tolerance);
    if !(worst <= g.tolerance) {
        return Err(CliError::Validation(summary));
    }
    Ok(job.finish(summary))
}
