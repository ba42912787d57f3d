//! Matrix interchange formats: row-major `(re, im)` JSON arrays with a
//! dimension header, and CSV export of real/imaginary parts for plotting.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// JSON shape of a complex matrix: `dim` header plus row-major `[re, im]`
/// pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub dim: [usize; 2],
    pub data: Vec<[f64; 2]>,
}

impl MatrixJson {
    pub fn from_matrix(m: &DMatrix<Complex64>) -> Self {
        let mut data = Vec::with_capacity(m.nrows() * m.ncols());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                data.push([m[(r, c)].re, m[(r, c)].im]);
            }
        }
        Self { dim: [m.nrows(), m.ncols()], data }
    }

    pub fn to_matrix(&self) -> Result<DMatrix<Complex64>> {
        if self.data.len() != self.dim[0] * self.dim[1] {
            return Err(CoreError::DimensionMismatch {
                expected: self.dim[0] * self.dim[1],
                got: self.data.len(),
            });
        }
        let mut m = DMatrix::from_element(self.dim[0], self.dim[1], Complex64::new(0.0, 0.0));
        for r in 0..self.dim[0] {
            for c in 0..self.dim[1] {
                let [re, im] = self.data[r * self.dim[1] + c];
                m[(r, c)] = Complex64::new(re, im);
            }
        }
        Ok(m)
    }
}

/// CSV rendering of one real part (or one imaginary part) of a matrix,
/// with optional header labels.
pub fn matrix_csv(m: &DMatrix<Complex64>, part: MatrixPart, labels: Option<&[String]>) -> String {
    let mut out = String::new();
    if let Some(labels) = labels {
        out.push_str(&labels.join(","));
        out.push('\n');
    }
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols())
            .map(|c| {
                let v = match part {
                    MatrixPart::Real => m[(r, c)].re,
                    MatrixPart::Imaginary => m[(r, c)].im,
                };
                format!("{v:.12e}")
            })
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatrixPart {
    Real,
    Imaginary,
}
