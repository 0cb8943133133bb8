//! Legacy-VTK meshes and CSV tables.

use std::fmt::Write as _;
use std::path::Path;

use auxetic_core::mesh::RveMesh;

use crate::error::CliError;

/// Shortest round-trip text of a float; `NaN` and infinities are spelled
/// out so every reader can parse them.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:?}")
    }
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// A CSV file with a fixed header.
pub struct Table {
    w: csv::Writer<std::fs::File>,
}

impl Table {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self, CliError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(header)?;
        Ok(Table { w })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        Ok(self.w.write_record(fields)?)
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        Ok(self.w.flush()?)
    }
}

/// Cell fields attached to a VTK export.
pub struct CellData<'a> {
    pub name: &'a str,
    pub values: &'a [f64],
}

/// Write the elements in `keep` (all if `None`) of `mesh`, displaced by
/// `u` (nodal, interleaved) if given.
pub fn write_vtk(
    path: &Path,
    title: &str,
    mesh: &RveMesh,
    u: Option<&[f64]>,
    keep: Option<&[usize]>,
    data: &[CellData<'_>],
) -> Result<(), CliError> {
    let all: Vec<usize>;
    let keep = match keep {
        Some(k) => k,
        None => {
            all = (0..mesh.n_elements()).collect();
            &all
        }
    };
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0");
    let _ = writeln!(s, "{}", title.replace('\n', " "));
    let _ = writeln!(s, "ASCII");
    let _ = writeln!(s, "DATASET UNSTRUCTURED_GRID");
    let _ = writeln!(s, "POINTS {} double", mesh.n_nodes());
    for (v, x) in mesh.nodes.iter().enumerate() {
        let d = u.map_or([0.0, 0.0], |u| [u[2 * v], u[2 * v + 1]]);
        let _ = writeln!(s, "{} {} 0", num(x[0] + d[0]), num(x[1] + d[1]));
    }
    let _ = writeln!(s, "CELLS {} {}", keep.len(), 5 * keep.len());
    for &e in keep {
        let n = mesh.elements[e];
        let _ = writeln!(s, "4 {} {} {} {}", n[0], n[1], n[2], n[3]);
    }
    let _ = writeln!(s, "CELL_TYPES {}", keep.len());
    for _ in keep {
        let _ = writeln!(s, "9");
    }
    if !data.is_empty() {
        let _ = writeln!(s, "CELL_DATA {}", keep.len());
        for d in data {
            let _ = writeln!(s, "SCALARS {} double 1", d.name);
            let _ = writeln!(s, "LOOKUP_TABLE default");
            for &e in keep {
                let _ = writeln!(s, "{}", num(d.values[e]));
            }
        }
    }
    Ok(std::fs::write(path, s)?)
}
