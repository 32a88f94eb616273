//! Matrix documents: JSON objects with explicit `rows`, `cols` and a row-major
//! `data` array of `[re, im]` pairs.
//!
//! ```json
//! { "rows": 2, "cols": 2, "data": [[1, 0], [0, 0], [0, 0], [4, 0]] }
//! ```
//!
//! Vectors are `n x 1` (or `1 x n`) documents.

use std::fs;
use std::path::Path;

use cblue_core::{CMatrix, CVector};
use num_complex::Complex64;
use serde::Deserialize;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixFile {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<[f64; 2]>,
}

impl MatrixFile {
    pub fn parse(text: &str) -> Result<Self, String> {
        let file: Self = serde_json::from_str(text).map_err(|e| e.to_string())?;
        file.check()?;
        Ok(file)
    }

    pub fn read(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    fn check(&self) -> Result<(), String> {
        if self.rows == 0 || self.cols == 0 {
            return Err(format!("empty matrix ({}x{})", self.rows, self.cols));
        }
        if self.data.len() != self.rows * self.cols {
            return Err(format!(
                "data has {} entries, expected rows x cols = {}",
                self.data.len(),
                self.rows * self.cols
            ));
        }
        if let Some(i) = self
            .data
            .iter()
            .position(|[re, im]| !re.is_finite() || !im.is_finite())
        {
            return Err(format!("entry {i} is not finite"));
        }
        Ok(())
    }

    pub fn to_matrix(&self) -> CMatrix {
        CMatrix::from_row_iterator(
            self.rows,
            self.cols,
            self.data.iter().map(|&[re, im]| Complex64::new(re, im)),
        )
    }

    pub fn to_vector(&self) -> Result<CVector, String> {
        if self.rows != 1 && self.cols != 1 {
            return Err(format!("expected a vector, got a {}x{} matrix", self.rows, self.cols));
        }
        Ok(CVector::from_iterator(
            self.data.len(),
            self.data.iter().map(|&[re, im]| Complex64::new(re, im)),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_row_major_pairs() {
        let f = MatrixFile::parse(r#"{"rows":2,"cols":3,"data":[[1,0],[2,0],[3,1],[4,0],[5,0],[6,-1]]}"#)
            .unwrap();
        let m = f.to_matrix();
        assert_eq!(m[(0, 2)], Complex64::new(3.0, 1.0));
        assert_eq!(m[(1, 0)], Complex64::new(4.0, 0.0));
        assert_eq!((m.nrows(), m.ncols()), (2, 3));
    }

    #[test]
    fn vectors_accept_rows_or_columns() {
        let col = MatrixFile::parse(r#"{"rows":2,"cols":1,"data":[[1,0],[2,0]]}"#).unwrap();
        let row = MatrixFile::parse(r#"{"rows":1,"cols":2,"data":[[1,0],[2,0]]}"#).unwrap();
        assert_eq!(col.to_vector().unwrap(), row.to_vector().unwrap());
        let m = MatrixFile::parse(r#"{"rows":2,"cols":2,"data":[[1,0],[2,0],[3,0],[4,0]]}"#).unwrap();
        assert!(m.to_vector().is_err());
    }

    #[test]
    fn rejects_malformed_documents() {
        for bad in [
            r#"{"rows":2,"cols":2,"data":[[1,0]]}"#,
            r#"{"rows":0,"cols":2,"data":[]}"#,
            r#"{"rows":1,"cols":1,"data":[[1]]}"#,
            r#"{"rows":1,"cols":1,"data":[[1,0]],"extra":true}"#,
            r#"{"rows":1,"cols":1}"#,
            "not json",
        ] {
            assert!(MatrixFile::parse(bad).is_err(), "{bad}");
        }
    }
}
