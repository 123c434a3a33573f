//! File formats.
//!
//! Market states and signals are JSON objects `{"n", "d", "q0"}` with `d`
//! row-major; signals add `"is_signal": true`. Matrices may also come from a
//! headerless CSV with `q0` in a single-column sibling file. Every write goes
//! to a temporary file in the target directory and is renamed into place.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{Intervention, MarketState};
use crate::signal::Signal;

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut b = serde_json::to_vec_pretty(value)?;
    b.push(b'\n');
    Ok(b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFile {
    pub n: usize,
    pub d: Vec<f64>,
    pub q0: Vec<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub is_signal: bool,
}

impl StateFile {
    fn from_parts(d: &DMatrix<f64>, q0: &DVector<f64>, is_signal: bool) -> Self {
        let n = q0.len();
        // nalgebra is column-major; the transpose's storage is row-major.
        Self {
            n,
            d: d.transpose().as_slice().to_vec(),
            q0: q0.as_slice().to_vec(),
            is_signal,
        }
    }

    fn into_parts(self) -> Result<(DMatrix<f64>, DVector<f64>)> {
        let n = self.n;
        if self.d.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, got: self.d.len() });
        }
        if self.q0.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: self.q0.len() });
        }
        Ok((DMatrix::from_row_slice(n, n, &self.d), DVector::from_vec(self.q0)))
    }
}

pub fn state_to_json(state: &MarketState) -> Result<Vec<u8>> {
    to_json_bytes(&StateFile::from_parts(&state.d, &state.q0, false))
}

pub fn write_state_json(state: &MarketState, path: &Path) -> Result<()> {
    write_atomic(path, &state_to_json(state)?)
}

pub fn signal_to_json(signal: &Signal) -> Result<Vec<u8>> {
    to_json_bytes(&StateFile::from_parts(&signal.d_hat, &signal.q0_hat, true))
}

pub fn write_signal_json(signal: &Signal, path: &Path) -> Result<()> {
    write_atomic(path, &signal_to_json(signal)?)
}

/// Reads a state or signal file; the flag says which it was.
pub fn read_state_file(path: &Path) -> Result<(DMatrix<f64>, DVector<f64>, bool)> {
    let text = std::fs::read_to_string(path)?;
    let file: StateFile = serde_json::from_str(&text)?;
    let is_signal = file.is_signal;
    let (d, q0) = file.into_parts()?;
    Ok((d, q0, is_signal))
}

pub fn read_state_json(path: &Path) -> Result<MarketState> {
    let (d, q0, _) = read_state_file(path)?;
    MarketState::new(d, q0)
}

/// A state file read as a signal; a true state becomes its noiseless signal.
pub fn read_signal_json(path: &Path) -> Result<Signal> {
    let (d_hat, q0_hat, _) = read_state_file(path)?;
    if d_hat.iter().chain(q0_hat.iter()).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("signal"));
    }
    Ok(Signal { d_hat, q0_hat })
}

fn read_csv_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| Error::Parse(format!("{}: '{s}': {e}", path.display()))))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let rows = read_csv_rows(path)?;
    let n = rows.len();
    for row in &rows {
        if row.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: row.len() });
        }
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

pub fn read_vector_csv(path: &Path) -> Result<DVector<f64>> {
    let rows = read_csv_rows(path)?;
    let mut v = Vec::with_capacity(rows.len());
    for row in rows {
        if row.len() != 1 {
            return Err(Error::Parse(format!("{}: expected one column", path.display())));
        }
        v.push(row[0]);
    }
    Ok(DVector::from_vec(v))
}

pub fn read_state_csv(matrix: &Path, q0: &Path) -> Result<MarketState> {
    MarketState::new(read_matrix_csv(matrix)?, read_vector_csv(q0)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionFile {
    pub sigma: Vec<f64>,
    pub predicted_expenditure: f64,
    pub rule: String,
    #[serde(default)]
    pub thresholds: BTreeMap<String, f64>,
}

impl InterventionFile {
    pub fn intervention(&self) -> Result<Intervention> {
        Intervention::new(DVector::from_vec(self.sigma.clone()))
    }
}

pub fn write_intervention_json(file: &InterventionFile, path: &Path) -> Result<()> {
    write_atomic(path, &to_json_bytes(file)?)
}

pub fn write_intervention_csv(sigma: &Intervention, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for x in sigma.sigma.iter() {
        w.write_record([x.to_string()]).map_err(|e| Error::Parse(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    write_atomic(path, &bytes)
}

/// JSON intervention file, or a single-column CSV when the extension is `csv`.
pub fn read_intervention(path: &Path) -> Result<Intervention> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        return Intervention::new(read_vector_csv(path)?);
    }
    let text = std::fs::read_to_string(path)?;
    let file: InterventionFile = serde_json::from_str(&text)?;
    file.intervention()
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    write_atomic(path, &to_json_bytes(value)?)
}
