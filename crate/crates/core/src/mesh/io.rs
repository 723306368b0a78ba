use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FillEstimate, MeshRecipe, ScatteredMesh};
use crate::error::{Error, Result};
use crate::io::{fmt_f64, parse_f64};

/// JSON metadata written next to a mesh CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshSidecar {
    pub dim: usize,
    pub n: usize,
    /// `null` for a single-node mesh.
    pub separation: Option<f64>,
    pub fill_estimate: Option<FillEstimate>,
    pub recipe: Option<MeshRecipe>,
    pub seed: Option<u64>,
    pub clamped: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

impl MeshSidecar {
    pub fn describe(mesh: &ScatteredMesh) -> Self {
        Self {
            dim: mesh.dim(),
            n: mesh.len(),
            separation: mesh.separation().is_finite().then_some(mesh.separation()),
            fill_estimate: mesh.fill_estimate(),
            recipe: mesh.recipe().cloned(),
            seed: mesh.recipe().and_then(MeshRecipe::seed),
            clamped: mesh.clamped_count(),
            config_hash: None,
        }
    }
}

/// Writes `<stem>.csv` (header `x0,...,x{d-1}`, one node per row) and
/// `<stem>.json`.
pub fn write_mesh(mesh: &ScatteredMesh, csv_path: &Path, config_hash: Option<&str>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(csv_path)?);
    let header: Vec<String> = (0..mesh.dim()).map(|a| format!("x{a}")).collect();
    writeln!(w, "{}", header.join(","))?;
    for p in mesh.points() {
        let row: Vec<String> = p.iter().map(|v| fmt_f64(*v)).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    let mut side = MeshSidecar::describe(mesh);
    side.config_hash = config_hash.map(str::to_owned);
    fs::write(csv_path.with_extension("json"), serde_json::to_string_pretty(&side)?)?;
    Ok(())
}

/// Reads a mesh CSV and, when present, its JSON sidecar.
pub fn read_mesh(csv_path: &Path) -> Result<ScatteredMesh> {
    let text = fs::read_to_string(csv_path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty mesh file".into()))?;
    let dim = header.split(',').count();
    for (a, name) in header.split(',').enumerate() {
        if name.trim() != format!("x{a}") {
            return Err(Error::Parse(format!("unexpected mesh header column {name:?}")));
        }
    }
    let mut coords = Vec::new();
    for (row, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let before = coords.len();
        for field in line.split(',') {
            coords.push(parse_f64(field)?);
        }
        if coords.len() - before != dim {
            return Err(Error::Parse(format!("row {} has {} columns, expected {dim}", row + 1, coords.len() - before)));
        }
    }
    let mut mesh = ScatteredMesh::from_flat(dim, coords)?;
    let side_path = csv_path.with_extension("json");
    if side_path.exists() {
        let side: MeshSidecar = serde_json::from_str(&fs::read_to_string(side_path)?)?;
        if side.n != mesh.len() || side.dim != dim {
            return Err(Error::Parse("mesh sidecar does not match the CSV".into()));
        }
        mesh.set_fill_estimate(side.fill_estimate);
        mesh.clamped = side.clamped;
        if let Some(r) = side.recipe {
            mesh = mesh.with_recipe(r);
        }
    }
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::BoxDomain;

    #[test]
    fn round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let dom = BoxDomain::cube(2, -1.0, 1.0).unwrap();
        let recipe = MeshRecipe::RandomClustered {
            domain: dom.clone(),
            n: 30,
            pool_size: 900,
            kmeans_iters: 20,
            seed: 3,
        };
        let mut mesh = recipe.build(None).unwrap();
        mesh.estimate_fill(&dom, 1000, 1).unwrap();
        let path = dir.path().join("mesh.csv");
        write_mesh(&mesh, &path, Some("abc")).unwrap();
        let back = read_mesh(&path).unwrap();
        assert_eq!(back, mesh);
        assert_eq!(back.fill_estimate(), mesh.fill_estimate());
        assert_eq!(back.recipe(), Some(&recipe));
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("x0,x1\n"));
    }
}
