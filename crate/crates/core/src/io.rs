//! Plain-text formats: CSV with a header row, LF line endings and floats in
//! `{:.16e}` (17 significant digits, lossless), JSON via serde.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::dynamics::{DomainBox, SnapshotData, SystemDescriptor};
use crate::error::{Error, Result};
use crate::states::StateMatrix;

/// Lossless decimal rendering of a float.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Row-major nested arrays.
pub fn mat_to_rows(m: &Mat<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn mat_from_rows(rows: &[Vec<f64>]) -> Result<Mat<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().find(|r| r.len() != ncols) {
        return Err(Error::Format(format!(
            "ragged matrix: expected {ncols} columns, found {}",
            bad.len()
        )));
    }
    Ok(Mat::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(File::create(path)?)))
}

fn parse_float(field: &str, path: &Path) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::Format(format!("{}: `{field}` is not a number", path.display())))
}

/// A table of preformatted fields under `header`; empty strings stay empty
/// fields.
pub fn write_table<I, R>(path: &Path, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv_writer(path)?;
    w.write_record(header)?;
    for row in rows {
        let row: Vec<String> = row.into_iter().collect();
        if row.len() != header.len() {
            return Err(Error::mismatch("table row width", header.len(), row.len()));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Dense matrix as CSV with header `c0,c1,…`.
pub fn write_matrix_csv(path: &Path, m: &Mat<f64>) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record((0..m.ncols()).map(|j| format!("c{j}")))?;
    for i in 0..m.nrows() {
        w.write_record((0..m.ncols()).map(|j| format_float(m[(i, j)])))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_csv(path: &Path) -> Result<Mat<f64>> {
    let mut r = csv::ReaderBuilder::new().from_path(path)?;
    let ncols = r.headers()?.len();
    let mut rows = Vec::new();
    for record in r.records() {
        let record = record?;
        let row = record
            .iter()
            .map(|f| parse_float(f, path))
            .collect::<Result<Vec<_>>>()?;
        if row.len() != ncols {
            return Err(Error::Format(format!("{}: ragged row", path.display())));
        }
        rows.push(row);
    }
    let m = mat_from_rows(&rows)?;
    if rows.is_empty() {
        return Ok(Mat::zeros(0, ncols));
    }
    Ok(m)
}

/// Sidecar describing how a snapshot CSV was produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub system: SystemDescriptor,
    pub state_dim: usize,
    pub n_samples: usize,
    pub seed: Option<u64>,
    pub domain: Option<DomainBox>,
}

/// Path of the metadata sidecar for a snapshot CSV: `data.csv` becomes
/// `data.meta.json`.
pub fn meta_path(csv_path: &Path) -> std::path::PathBuf {
    csv_path.with_extension("meta.json")
}

/// One row per sample: `x1..xn,tx1..txn`, plus the metadata sidecar.
pub fn write_snapshots(csv_path: &Path, data: &SnapshotData) -> Result<()> {
    let n = data.state_dim();
    let mut w = csv_writer(csv_path)?;
    let header: Vec<String> = (1..=n)
        .map(|i| format!("x{i}"))
        .chain((1..=n).map(|i| format!("tx{i}")))
        .collect();
    w.write_record(&header)?;
    for (x, tx) in data.x.iter().zip(data.tx.iter()) {
        w.write_record(x.iter().chain(tx).map(|v| format_float(*v)))?;
    }
    w.flush()?;
    let meta = SnapshotMeta {
        system: data.system.clone(),
        state_dim: n,
        n_samples: data.len(),
        seed: data.seed,
        domain: data.domain.clone(),
    };
    write_json(&meta_path(csv_path), &meta)
}

pub fn read_snapshots(csv_path: &Path) -> Result<SnapshotData> {
    let meta: SnapshotMeta = read_json(&meta_path(csv_path))?;
    let n = meta.state_dim;
    let mut r = csv::ReaderBuilder::new().from_path(csv_path)?;
    if r.headers()?.len() != 2 * n {
        return Err(Error::mismatch("snapshot CSV columns", 2 * n, r.headers()?.len()));
    }
    let mut x = Vec::with_capacity(meta.n_samples * n);
    let mut tx = Vec::with_capacity(meta.n_samples * n);
    for record in r.records() {
        let record = record?;
        for (k, field) in record.iter().enumerate() {
            let v = parse_float(field, csv_path)?;
            if k < n {
                x.push(v);
            } else {
                tx.push(v);
            }
        }
    }
    let x = StateMatrix::new(n, x)?;
    let tx = StateMatrix::new(n, tx)?;
    if x.len() != meta.n_samples {
        return Err(Error::mismatch("snapshot rows", meta.n_samples, x.len()));
    }
    Ok(SnapshotData {
        x,
        tx,
        system: meta.system,
        seed: meta.seed,
        domain: meta.domain,
    })
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let mut s = String::new();
    File::open(path)?.read_to_string(&mut s)?;
    Ok(serde_json::from_str(&s)?)
}
