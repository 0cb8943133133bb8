//! Plain-text density fields.
//!
//! ```text
//! auxetic-density 1
//! shape square
//! resolution 40
//! cell_size 1
//! a1 1 0
//! a2 0 1
//! fields 2
//! elements 1600
//! 0.25 1
//! ...
//! ```
//!
//! One line per element in mesh order. Values are written in Rust's
//! shortest round-trip form, so write→read is exact.

use std::fmt::Write as _;
use std::path::Path;

use auxetic_core::fem::Design;
use auxetic_core::mesh::{CellShape, RveMesh};

use crate::error::CliError;

const MAGIC: &str = "auxetic-density 1";

#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub shape: CellShape,
    pub resolution: usize,
    pub cell_size: f64,
    pub a1: [f64; 2],
    pub a2: [f64; 2],
    pub rho1: Vec<f64>,
    /// `None` for single-field files (ρ2 ≡ 1).
    pub rho2: Option<Vec<f64>>,
}

fn shape_name(s: CellShape) -> String {
    match s {
        CellShape::Square => "square".into(),
        CellShape::Parallelogram { angle_deg } => format!("parallelogram {angle_deg:?}"),
        CellShape::Hexagon => "hexagon".into(),
    }
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl DensityField {
    pub fn from_design(mesh: &RveMesh, design: &Design, two_fields: bool) -> Self {
        DensityField {
            shape: mesh.shape,
            resolution: mesh.resolution,
            cell_size: mesh.cell_size,
            a1: mesh.lattice.a1,
            a2: mesh.lattice.a2,
            rho1: design.rho1.clone(),
            rho2: two_fields.then(|| design.rho2.clone()),
        }
    }

    pub fn design(&self) -> Design {
        Design { rho1: self.rho1.clone(), rho2: self.rho2.clone().unwrap_or_else(|| vec![1.0; self.rho1.len()]) }
    }

    /// Check that the field belongs to `mesh`.
    pub fn check_mesh(&self, mesh: &RveMesh) -> Result<(), CliError> {
        if self.shape != mesh.shape || self.resolution != mesh.resolution || self.rho1.len() != mesh.n_elements() {
            return Err(bad(format!(
                "density field ({} at resolution {}, {} elements) does not match the configured cell ({} at resolution {}, {} elements)",
                shape_name(self.shape),
                self.resolution,
                self.rho1.len(),
                shape_name(mesh.shape),
                mesh.resolution,
                mesh.n_elements()
            )));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let fields = if self.rho2.is_some() { 2 } else { 1 };
        let _ = writeln!(s, "{MAGIC}");
        let _ = writeln!(s, "shape {}", shape_name(self.shape));
        let _ = writeln!(s, "resolution {}", self.resolution);
        let _ = writeln!(s, "cell_size {:?}", self.cell_size);
        let _ = writeln!(s, "a1 {:?} {:?}", self.a1[0], self.a1[1]);
        let _ = writeln!(s, "a2 {:?} {:?}", self.a2[0], self.a2[1]);
        let _ = writeln!(s, "fields {fields}");
        let _ = writeln!(s, "elements {}", self.rho1.len());
        for (e, r) in self.rho1.iter().enumerate() {
            match &self.rho2 {
                Some(r2) => writeln!(s, "{r:?} {:?}", r2[e]),
                None => writeln!(s, "{r:?}"),
            }
            .expect("writing to a String cannot fail");
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let mut next = |what: &str| -> Result<(usize, Vec<&str>), CliError> {
            let (i, l) = lines.next().ok_or_else(|| bad(format!("density file ends before {what}")))?;
            Ok((i + 1, l.split_whitespace().collect()))
        };
        let num = |line: usize, s: &str| -> Result<f64, CliError> {
            s.parse::<f64>().map_err(|_| bad(format!("density file line {line}: cannot parse {s:?}")))
        };
        let (_, magic) = next("the header")?;
        if magic.join(" ") != MAGIC {
            return Err(bad("not a density file (missing header line)"));
        }
        let mut keyed = |key: &str, n: usize| -> Result<(usize, Vec<String>), CliError> {
            let (line, w) = next(key)?;
            if w.first() != Some(&key) || w.len() < n + 1 {
                return Err(bad(format!("density file line {line}: expected `{key}`")));
            }
            Ok((line, w[1..].iter().map(|s| s.to_string()).collect()))
        };
        let (line, sh) = keyed("shape", 1)?;
        let shape = match sh[0].as_str() {
            "square" => CellShape::Square,
            "hexagon" => CellShape::Hexagon,
            "parallelogram" if sh.len() == 2 => CellShape::Parallelogram { angle_deg: num(line, &sh[1])? },
            other => return Err(bad(format!("density file line {line}: unknown shape {other:?}"))),
        };
        let (line, r) = keyed("resolution", 1)?;
        let resolution = r[0].parse().map_err(|_| bad(format!("density file line {line}: bad resolution")))?;
        let (line, c) = keyed("cell_size", 1)?;
        let cell_size = num(line, &c[0])?;
        let (line, a) = keyed("a1", 2)?;
        let a1 = [num(line, &a[0])?, num(line, &a[1])?];
        let (line, a) = keyed("a2", 2)?;
        let a2 = [num(line, &a[0])?, num(line, &a[1])?];
        let (line, f) = keyed("fields", 1)?;
        let fields: usize = f[0].parse().map_err(|_| bad(format!("density file line {line}: bad field count")))?;
        if !(1..=2).contains(&fields) {
            return Err(bad(format!("density file line {line}: field count must be 1 or 2")));
        }
        let (line, n) = keyed("elements", 1)?;
        let n: usize = n[0].parse().map_err(|_| bad(format!("density file line {line}: bad element count")))?;
        let mut rho1 = Vec::with_capacity(n);
        let mut rho2 = Vec::with_capacity(if fields == 2 { n } else { 0 });
        for _ in 0..n {
            let (line, w) = next("the last element")?;
            if w.len() != fields {
                return Err(bad(format!("density file line {line}: expected {fields} values")));
            }
            for (k, s) in w.iter().enumerate() {
                let v = num(line, s)?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(bad(format!("density file line {line}: value {v} outside [0, 1]")));
                }
                if k == 0 {
                    rho1.push(v);
                } else {
                    rho2.push(v);
                }
            }
        }
        if let Ok((line, _)) = next("") {
            return Err(bad(format!("density file line {line}: more values than the header's {n} elements")));
        }
        Ok(DensityField { shape, resolution, cell_size, a1, a2, rho1, rho2: (fields == 2).then_some(rho2) })
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        Ok(std::fs::write(path, self.to_text())?)
    }
}
