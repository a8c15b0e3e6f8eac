//! Mid-plane slices of dumped fields as CSV.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;
use yamabe_core::geometry::{build_slab_grid, build_torus_grid, ChartGrid, ScalarField};
use yamabe_core::io::{read_field, FieldHeader};

use crate::report::RunReport;

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("cannot read {path}: {reason}")]
    Read { path: String, reason: String },
    #[error("report lists no field dumps; rerun with --dump-fields")]
    NoDumps,
    #[error("slice index {index} out of range for axis {axis} with {len} nodes")]
    IndexOutOfRange { axis: usize, index: usize, len: usize },
    #[error(transparent)]
    Core(#[from] yamabe_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Values on the plane spanned by axes 0 and 1. The last axis sits at `index`
/// (its midpoint by default); any other axes sit at their midpoints.
pub fn slice_rows(field: &ScalarField, index: Option<usize>) -> Result<Vec<[f64; 3]>, PlotError> {
    let grid = field.grid();
    let shape = grid.shape();
    let last = shape.len() - 1;
    let mut fixed: Vec<usize> = shape.iter().map(|&m| m / 2).collect();
    if let Some(i) = index {
        if i >= shape[last] {
            return Err(PlotError::IndexOutOfRange {
                axis: last,
                index: i,
                len: shape[last],
            });
        }
        fixed[last] = i;
    }
    let mut rows = Vec::with_capacity(shape[0] * shape[1]);
    for i in 0..shape[0] {
        for j in 0..shape[1] {
            let mut idx = fixed.clone();
            idx[0] = i;
            idx[1] = j;
            let k = grid.index_of(&idx);
            rows.push([grid.coordinate(k, 0), grid.coordinate(k, 1), field.get(k)]);
        }
    }
    Ok(rows)
}

pub fn write_slice_csv(path: &Path, rows: &[[f64; 3]]) -> Result<(), PlotError> {
    let mut out = String::from("x,y,value\n");
    for [x, y, v] in rows {
        writeln!(out, "{x:.17e},{y:.17e},{v:.17e}").expect("writing to a string");
    }
    fs::write(path, out)?;
    Ok(())
}

fn grid_of(header: &FieldHeader) -> Result<Arc<ChartGrid>, PlotError> {
    let grid = if header.periodic.iter().all(|&p| p) {
        build_torus_grid(header.n, &header.shape, &header.lengths)?
    } else {
        build_slab_grid(header.n, &header.shape, &header.lengths)?
    };
    Ok(grid)
}

/// Reads the dumps listed in a report and writes one slice CSV per field into `out_dir`.
pub fn emit_plots(report_path: &Path, out_dir: &Path, index: Option<usize>) -> Result<Vec<PathBuf>, PlotError> {
    let read_err = |path: &Path, reason: String| PlotError::Read {
        path: path.display().to_string(),
        reason,
    };
    let text = fs::read_to_string(report_path).map_err(|e| read_err(report_path, e.to_string()))?;
    let report: RunReport = serde_json::from_str(&text).map_err(|e| read_err(report_path, e.to_string()))?;
    if report.dumps.is_empty() {
        return Err(PlotError::NoDumps);
    }
    let base = report_path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for dump in &report.dumps {
        let header_path = base.join(&dump.path);
        let header_text = fs::read_to_string(&header_path).map_err(|e| read_err(&header_path, e.to_string()))?;
        let header: FieldHeader =
            serde_json::from_str(&header_text).map_err(|e| read_err(&header_path, e.to_string()))?;
        let grid = grid_of(&header)?;
        let (_, field) = read_field(&header_path, &grid)?;
        let rows = slice_rows(&field, index)?;
        let path = out_dir.join(format!("{}_slice.csv", dump.name));
        write_slice_csv(&path, &rows)?;
        written.push(path);
    }
    Ok(written)
}
