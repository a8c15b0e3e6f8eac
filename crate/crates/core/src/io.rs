//! Field dumps: a JSON header with a little-endian `f64` sidecar, and CSV export.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ChartGrid, ScalarField};

/// Header written next to the raw values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldHeader {
    pub name: String,
    pub n: usize,
    pub shape: Vec<usize>,
    pub lengths: Vec<f64>,
    pub periodic: Vec<bool>,
    pub dtype: String,
    /// File name of the sidecar, relative to the header.
    pub data_file: String,
}

fn sidecar(header_path: &Path) -> PathBuf {
    header_path.with_extension("bin")
}

/// Writes `<path>` (JSON header) and `<path>` with extension `bin` (raw values).
pub fn write_field(path: &Path, name: &str, field: &ScalarField) -> Result<()> {
    let grid = field.grid();
    let data_path = sidecar(path);
    let header = FieldHeader {
        name: name.to_string(),
        n: grid.dim(),
        shape: grid.shape().to_vec(),
        lengths: grid.lengths().to_vec(),
        periodic: grid.periodic().to_vec(),
        dtype: "f64le".into(),
        data_file: data_path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    let bytes: Vec<u8> = field.values().iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(&data_path, bytes)?;
    fs::write(path, serde_json::to_string_pretty(&header)?)?;
    Ok(())
}

/// Reads a field written by [`write_field`] onto `grid`.
pub fn read_field(path: &Path, grid: &Arc<ChartGrid>) -> Result<(FieldHeader, ScalarField)> {
    let header: FieldHeader = serde_json::from_str(&fs::read_to_string(path)?)?;
    if header.dtype != "f64le" {
        return Err(Error::InvalidArgument(format!("unsupported dtype {}", header.dtype)));
    }
    if header.shape != grid.shape() || header.periodic != grid.periodic() {
        return Err(Error::GridMismatch);
    }
    let data_path = path.parent().unwrap_or(Path::new(".")).join(&header.data_file);
    let bytes = fs::read(data_path)?;
    if bytes.len() != 8 * grid.node_count() {
        return Err(Error::LengthMismatch {
            expected: 8 * grid.node_count(),
            found: bytes.len(),
        });
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of eight bytes")))
        .collect();
    Ok((header, ScalarField::new(grid.clone(), values)?))
}

/// CSV with one row per node: coordinates, then one column per field.
pub fn write_csv(path: &Path, columns: &[(&str, &ScalarField)]) -> Result<()> {
    let Some((_, first)) = columns.first() else {
        return Err(Error::InvalidArgument("no columns to write".into()));
    };
    let grid = first.grid();
    for (_, f) in columns {
        f.ensure_grid(grid)?;
    }
    let mut out = Vec::new();
    let mut head: Vec<String> = (0..grid.dim()).map(|i| format!("x{i}")).collect();
    head.extend(columns.iter().map(|(name, _)| name.to_string()));
    writeln!(out, "{}", head.join(","))?;
    for k in 0..grid.node_count() {
        let mut row: Vec<String> = grid.coordinates(k).iter().map(|x| format!("{x:.17e}")).collect();
        row.extend(columns.iter().map(|(_, f)| format!("{:.17e}", f.get(k))));
        writeln!(out, "{}", row.join(","))?;
    }
    fs::write(path, out)?;
    Ok(())
}
