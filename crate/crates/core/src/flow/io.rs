//! Snapshot dumps: little-endian `f64` grids with JSON sidecars and an index.

use super::Trajectory;
use crate::error::{Error, Result};
use crate::geometry::{ChartGrid, SurfaceKind};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

/// Sidecar of one dumped grid. `R` is absent on the sphere, where `n` is the degree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub surface: SurfaceKind,
    #[serde(rename = "R")]
    pub radius: Option<f64>,
    pub n: usize,
    pub t: f64,
    /// Row-major shape `[rows, cols]` of the binary file.
    pub shape: [usize; 2],
    /// Layout of the rows: `cartesian` (y rows), `log_polar` (θ rows) or `sphere` (latitude rows).
    pub layout: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub t: f64,
    pub data: String,
    pub sidecar: String,
}

fn chart_shape(grid: &ChartGrid) -> (Option<f64>, usize, [usize; 2], &'static str) {
    match grid {
        ChartGrid::Cartesian(g) => (Some(g.radius()), g.n(), [g.nodes_per_axis(), g.nodes_per_axis()], "cartesian"),
        ChartGrid::LogPolar(g) => (Some(g.r_max()), g.n_s(), [g.n_theta(), g.n_s() + 1], "log_polar"),
        ChartGrid::Sphere(g) => (None, g.degree(), [g.nlat(), g.nlon()], "sphere"),
    }
}

/// Writes every snapshot of `traj` into `dir` and returns the index path.
pub fn write_trajectory(traj: &Trajectory, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let (radius, n, shape, layout) = chart_shape(&traj.grid);
    let mut index = Vec::with_capacity(traj.snapshots.len());
    for (k, s) in traj.snapshots.iter().enumerate() {
        let data = format!("snap_{k:04}.bin");
        let sidecar = format!("snap_{k:04}.json");
        let bytes: Vec<u8> = s.u.iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(dir.join(&data), bytes)?;
        let meta = SnapshotMeta { surface: traj.surface, radius, n, t: s.t, shape, layout: layout.to_string() };
        fs::write(dir.join(&sidecar), serde_json::to_string_pretty(&meta)?)?;
        index.push(IndexEntry { t: s.t, data, sidecar });
    }
    let path = dir.join("index.json");
    fs::write(&path, serde_json::to_string_pretty(&index)?)?;
    Ok(path)
}

/// Reads a binary grid and its sidecar (same stem, `.json`).
pub fn read_snapshot(data: &Path) -> Result<(SnapshotMeta, Vec<f64>)> {
    let meta: SnapshotMeta = serde_json::from_str(&fs::read_to_string(data.with_extension("json"))?)?;
    let bytes = fs::read(data)?;
    if bytes.len() % 8 != 0 || bytes.len() / 8 != meta.shape[0] * meta.shape[1] {
        return Err(Error::Parse(format!(
            "{} holds {} bytes, sidecar expects {}×{} values",
            data.display(),
            bytes.len(),
            meta.shape[0],
            meta.shape[1]
        )));
    }
    let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Ok((meta, values))
}

pub fn read_index(path: &Path) -> Result<Vec<IndexEntry>> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}
