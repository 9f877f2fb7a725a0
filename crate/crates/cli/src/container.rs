//! On-disk matrix container: a JSON sidecar header next to a raw
//! little-endian f64 payload, plus the neighborhood/weight persistence of the
//! spatial operator.
//!
//! `<name>.json` carries `{rows, cols, dtype, order, name}`; `<name>.bin`
//! holds `rows * cols * 8` bytes of row-major values. Round trips are
//! bit-exact.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use hibcd::{DenseMatrix, SpatialDecimationOperator};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixHeader {
    pub rows: usize,
    pub cols: usize,
    pub dtype: String,
    pub order: String,
    pub name: String,
}

fn header_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.json"))
}

fn payload_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.bin"))
}

/// Writes `<dir>/<name>.json` + `<dir>/<name>.bin`.
pub fn write_matrix(dir: &Path, name: &str, matrix: &DenseMatrix, semantic: &str) -> CliResult<()> {
    let header = MatrixHeader {
        rows: matrix.rows(),
        cols: matrix.cols(),
        dtype: "f64le".to_string(),
        order: "row-major".to_string(),
        name: semantic.to_string(),
    };
    let hp = header_path(dir, name);
    let text =
        serde_json::to_string_pretty(&header).map_err(|e| CliError::format(&hp, e.to_string()))?;
    fs::write(&hp, text).map_err(|e| CliError::io(&hp, e))?;

    let mut bytes = Vec::with_capacity(matrix.as_slice().len() * 8);
    for v in matrix.as_slice() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let pp = payload_path(dir, name);
    fs::write(&pp, bytes).map_err(|e| CliError::io(&pp, e))?;
    Ok(())
}

/// Reads a container pair written by [`write_matrix`]. The header is parsed
/// and validated before the payload is touched.
pub fn read_matrix(dir: &Path, name: &str) -> CliResult<(DenseMatrix, MatrixHeader)> {
    let hp = header_path(dir, name);
    let text = fs::read_to_string(&hp).map_err(|e| CliError::io(&hp, e))?;
    let header: MatrixHeader =
        serde_json::from_str(&text).map_err(|e| CliError::format(&hp, e.to_string()))?;
    if header.dtype != "f64le" {
        return Err(CliError::format(
            &hp,
            format!("unsupported dtype {}", header.dtype),
        ));
    }
    if header.order != "row-major" {
        return Err(CliError::format(
            &hp,
            format!("unsupported order {}", header.order),
        ));
    }
    let pp = payload_path(dir, name);
    let bytes = fs::read(&pp).map_err(|e| CliError::io(&pp, e))?;
    let expected = header.rows * header.cols * 8;
    if bytes.len() != expected {
        return Err(CliError::format(
            &pp,
            format!("payload is {} bytes, expected {expected}", bytes.len()),
        ));
    }
    let mut data = Vec::with_capacity(header.rows * header.cols);
    for chunk in bytes.chunks_exact(8) {
        data.push(f64::from_le_bytes(chunk.try_into().unwrap()));
    }
    let matrix = DenseMatrix::from_vec(header.rows, header.cols, data)
        .map_err(|e| CliError::format(&pp, e.to_string()))?;
    Ok((matrix, header))
}

/// Spatial operator persisted as per-column neighborhoods + weights, never
/// densely.
#[derive(Debug, Serialize, Deserialize)]
pub struct OperatorFile {
    pub l_x: usize,
    pub l_y: usize,
    pub factor: usize,
    pub kernel_width: usize,
    pub columns: Vec<OperatorColumn>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct OperatorColumn {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

pub fn write_operator(dir: &Path, name: &str, g: &SpatialDecimationOperator) -> CliResult<()> {
    let (l_x, l_y) = g.image_dims();
    let columns = (0..g.output_len())
        .map(|i| {
            let (idx, w) = g.column(i);
            OperatorColumn {
                indices: idx.to_vec(),
                weights: w.to_vec(),
            }
        })
        .collect();
    let file = OperatorFile {
        l_x,
        l_y,
        factor: g.factor(),
        kernel_width: g.kernel_width(),
        columns,
    };
    let path = dir.join(format!("{name}.json"));
    let text = serde_json::to_string(&file).map_err(|e| CliError::format(&path, e.to_string()))?;
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    Ok(())
}

pub fn read_operator(dir: &Path, name: &str) -> CliResult<SpatialDecimationOperator> {
    let path = dir.join(format!("{name}.json"));
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let file: OperatorFile =
        serde_json::from_str(&text).map_err(|e| CliError::format(&path, e.to_string()))?;
    let columns: Vec<(Vec<usize>, Vec<f64>)> = file
        .columns
        .into_iter()
        .map(|c| (c.indices, c.weights))
        .collect();
    SpatialDecimationOperator::from_columns(
        file.l_x,
        file.l_y,
        file.factor,
        file.kernel_width,
        &columns,
    )
    .map_err(|e| CliError::format(&path, e.to_string()))
}
