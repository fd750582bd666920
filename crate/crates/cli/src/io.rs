//! Matrix, pair and problem files.
//!
//! A matrix is `{"n": 3, "entries": [[re, im], ...]}` in row-major order.
//! Rectangular matrices (minimizers) carry an extra `"cols"` field.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use pencil_core::{
    validate_hermitian, CMat, HermitianMatrix, MatrixPair, ProblemInstance, Tolerances,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::format::to_json_string;
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cols: Option<usize>,
    pub entries: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairJson {
    #[serde(rename = "A")]
    pub a: MatrixJson,
    #[serde(rename = "B")]
    pub b: MatrixJson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemJson {
    #[serde(rename = "A")]
    pub a: MatrixJson,
    #[serde(rename = "B")]
    pub b: MatrixJson,
    #[serde(rename = "Ahat")]
    pub ahat: MatrixJson,
    #[serde(rename = "Bhat")]
    pub bhat: MatrixJson,
}

impl MatrixJson {
    pub fn from_matrix(m: &CMat) -> Self {
        let (rows, cols) = m.shape();
        let mut entries = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                let z = m[(i, j)];
                entries.push([z.re, z.im]);
            }
        }
        MatrixJson {
            n: rows,
            cols: (rows != cols).then_some(cols),
            entries,
        }
    }

    pub fn to_matrix(&self, what: &str) -> Result<CMat, CliError> {
        let cols = self.cols.unwrap_or(self.n);
        if self.n == 0 || cols == 0 {
            return Err(CliError::Invalid(format!("{what}: empty matrix")));
        }
        if self.entries.len() != self.n * cols {
            return Err(CliError::Invalid(format!(
                "{what}: {} entries for a {}x{} matrix",
                self.entries.len(),
                self.n,
                cols
            )));
        }
        if self.entries.iter().flatten().any(|v| !v.is_finite()) {
            return Err(CliError::Invalid(format!("{what}: non-finite entry")));
        }
        Ok(DMatrix::from_fn(self.n, cols, |i, j| {
            let [re, im] = self.entries[i * cols + j];
            Complex64::new(re, im)
        }))
    }

    pub fn to_hermitian(&self, what: &str, tol: &Tolerances) -> Result<HermitianMatrix, CliError> {
        let m = self.to_matrix(what)?;
        validate_hermitian(&m, tol.herm).map_err(|e| CliError::matrix(what, e))
    }
}

impl PairJson {
    pub fn from_pair(p: &MatrixPair) -> Self {
        PairJson {
            a: MatrixJson::from_matrix(p.a.matrix()),
            b: MatrixJson::from_matrix(p.b.matrix()),
        }
    }

    pub fn to_pair(&self, tol: &Tolerances) -> Result<MatrixPair, CliError> {
        let a = self.a.to_hermitian("A", tol)?;
        let b = self.b.to_hermitian("B", tol)?;
        MatrixPair::new(a, b).map_err(|e| CliError::matrix("pair", e))
    }
}

impl ProblemJson {
    pub fn from_problem(p: &ProblemInstance) -> Self {
        ProblemJson {
            a: MatrixJson::from_matrix(p.pair.a.matrix()),
            b: MatrixJson::from_matrix(p.pair.b.matrix()),
            ahat: MatrixJson::from_matrix(p.hat.a.matrix()),
            bhat: MatrixJson::from_matrix(p.hat.b.matrix()),
        }
    }

    pub fn to_problem(&self, tol: &Tolerances) -> Result<ProblemInstance, CliError> {
        let pair = MatrixPair::new(
            self.a.to_hermitian("A", tol)?,
            self.b.to_hermitian("B", tol)?,
        )
        .map_err(|e| CliError::matrix("(A, B)", e))?;
        let hat = MatrixPair::new(
            self.ahat.to_hermitian("Ahat", tol)?,
            self.bhat.to_hermitian("Bhat", tol)?,
        )
        .map_err(|e| CliError::matrix("(Ahat, Bhat)", e))?;
        ProblemInstance::new(pair, hat, *tol).map_err(|e| CliError::matrix("problem", e))
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = to_json_string(value).map_err(|e| CliError::Internal(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn read_pair(path: &Path, tol: &Tolerances) -> Result<MatrixPair, CliError> {
    read_json::<PairJson>(path)?.to_pair(tol)
}

pub fn read_problem(path: &Path, tol: &Tolerances) -> Result<ProblemInstance, CliError> {
    read_json::<ProblemJson>(path)?.to_problem(tol)
}
