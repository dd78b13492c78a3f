//! Dense row-major matrices and the small kernel set shared by every pipeline.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::error::{Error, Result};
use crate::precision::Precision;

/// Dense row-major matrix of binary64 scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Entry distribution for [`matrix_from_seed`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Dist {
    /// Standard normal N(0, 1).
    #[default]
    Normal,
    /// Uniform on the closed interval [-1, 1].
    Uniform,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(rows, cols)?;
        if data.len() != rows * cols {
            return Err(Error::DataLength {
                rows,
                cols,
                actual: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        check_dims(rows, cols)?;
        Ok(Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        })
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut m = Self::zeros(n, n)?;
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        Ok(m)
    }

    /// Build from nested rows; all rows must share one length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, |r| r.as_ref().len());
        check_dims(n_rows, n_cols)?;
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != n_cols {
                return Err(Error::DimensionMismatch {
                    op: "from_rows",
                    expected: n_cols,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: n_rows,
            cols: n_cols,
            data,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        assert!(r < self.rows && c < self.cols, "index out of bounds");
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        assert!(r < self.rows && c < self.cols, "index out of bounds");
        self.data[r * self.cols + c] = value;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let cols = self.cols;
        &mut self.data[r * cols..(r + 1) * cols]
    }

    /// Copy of rows `start..end`.
    pub fn row_block(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.rows {
            return Err(Error::DimensionMismatch {
                op: "row_block",
                expected: self.rows,
                actual: end,
            });
        }
        Ok(Self {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        })
    }

    /// Copy of columns `start..end`.
    pub fn col_block(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.cols {
            return Err(Error::DimensionMismatch {
                op: "col_block",
                expected: self.cols,
                actual: end,
            });
        }
        let width = end - start;
        let mut data = Vec::with_capacity(self.rows * width);
        for r in 0..self.rows {
            data.extend_from_slice(&self.row(r)[start..end]);
        }
        Ok(Self {
            rows: self.rows,
            cols: width,
            data,
        })
    }

    /// Stack `self` on top of `below`.
    pub fn vstack(&self, below: &Matrix) -> Result<Self> {
        if self.cols != below.cols {
            return Err(Error::DimensionMismatch {
                op: "vstack",
                expected: self.cols,
                actual: below.cols,
            });
        }
        let mut data = Vec::with_capacity(self.data.len() + below.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&below.data);
        Ok(Self {
            rows: self.rows + below.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn transpose(&self) -> Self {
        let mut data = vec![0.0; self.data.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Apply the operand rounding of `precision` to every entry.
    pub fn rounded(&self, precision: Precision) -> Self {
        self.map(|x| precision.operand(x))
    }

    /// Largest absolute entrywise difference. NaN anywhere yields NaN.
    pub fn max_abs_diff(&self, other: &Matrix) -> Result<f64> {
        check_same_shape("max_abs_diff", self, other)?;
        let mut worst = 0.0f64;
        for (a, b) in self.data.iter().zip(&other.data) {
            let d = (a - b).abs();
            if d.is_nan() {
                return Ok(f64::NAN);
            }
            worst = worst.max(d);
        }
        Ok(worst)
    }
}

fn check_dims(rows: usize, cols: usize) -> Result<()> {
    if rows == 0 {
        return Err(Error::ZeroDimension { what: "rows" });
    }
    if cols == 0 {
        return Err(Error::ZeroDimension { what: "cols" });
    }
    Ok(())
}

fn check_same_shape(op: &'static str, a: &Matrix, b: &Matrix) -> Result<()> {
    if a.rows != b.rows {
        return Err(Error::DimensionMismatch {
            op,
            expected: a.rows,
            actual: b.rows,
        });
    }
    if a.cols != b.cols {
        return Err(Error::DimensionMismatch {
            op,
            expected: a.cols,
            actual: b.cols,
        });
    }
    Ok(())
}

/// Deterministic random matrix.
///
/// The generator is ChaCha8 seeded through `SeedableRng::seed_from_u64`,
/// entries are drawn in row-major order. Normal entries use
/// `rand_distr::StandardNormal`; uniform entries use a closed [-1, 1] range.
pub fn matrix_from_seed(rows: usize, cols: usize, seed: u64, dist: Dist) -> Result<Matrix> {
    check_dims(rows, cols)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rows * cols;
    let data: Vec<f64> = match dist {
        Dist::Normal => (0..n).map(|_| StandardNormal.sample(&mut rng)).collect(),
        Dist::Uniform => {
            let uniform = Uniform::new_inclusive(-1.0f64, 1.0).expect("finite bounds");
            (0..n).map(|_| uniform.sample(&mut rng)).collect()
        }
    };
    Ok(Matrix { rows, cols, data })
}

/// General matrix product `op(A) * op(B)` where `op` optionally transposes.
///
/// Each output entry is one dot product accumulated in ascending inner index
/// order. `Exact64` accumulates in binary64; `Fp32` rounds operands to binary32
/// and accumulates in binary32; `Fp16Emu` rounds operands to binary16 and
/// accumulates in binary32 (binary16 products are exact in binary32).
pub fn gemm(
    a: &Matrix,
    b: &Matrix,
    trans_a: bool,
    trans_b: bool,
    precision: Precision,
) -> Result<Matrix> {
    // Normalize to lhs (m x k) row-major and rhs_t (n x k) row-major so every
    // dot product walks two contiguous rows.
    let lhs = if trans_a { a.transpose() } else { a.clone() };
    let rhs_t = if trans_b { b.clone() } else { b.transpose() };
    if lhs.cols != rhs_t.cols {
        return Err(Error::DimensionMismatch {
            op: "gemm",
            expected: lhs.cols,
            actual: rhs_t.cols,
        });
    }
    let (m, n) = (lhs.rows, rhs_t.rows);
    let mut out = vec![0.0; m * n];
    match precision {
        Precision::Exact64 => {
            for i in 0..m {
                let x = lhs.row(i);
                for j in 0..n {
                    out[i * n + j] = dot_f64(x, rhs_t.row(j));
                }
            }
        }
        Precision::Fp32 | Precision::Fp16Emu => {
            let lhs: Vec<f32> = lhs
                .data
                .iter()
                .map(|&x| precision.operand(x) as f32)
                .collect();
            let rhs: Vec<f32> = rhs_t
                .data
                .iter()
                .map(|&x| precision.operand(x) as f32)
                .collect();
            let k = rhs_t.cols;
            for i in 0..m {
                let x = &lhs[i * k..(i + 1) * k];
                for j in 0..n {
                    out[i * n + j] = dot_f32(x, &rhs[j * k..(j + 1) * k]) as f64;
                }
            }
        }
    }
    Ok(Matrix {
        rows: m,
        cols: n,
        data: out,
    })
}

#[inline]
fn dot_f64(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (a, b) in x.iter().zip(y) {
        acc += a * b;
    }
    acc
}

#[inline]
fn dot_f32(x: &[f32], y: &[f32]) -> f32 {
    let mut acc = 0.0f32;
    for (a, b) in x.iter().zip(y) {
        acc += a * b;
    }
    acc
}

/// Root-mean-square difference over all entries.
pub fn rmse(a: &Matrix, b: &Matrix) -> Result<f64> {
    check_same_shape("rmse", a, b)?;
    let sum: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(libm::sqrt(sum / a.data.len() as f64))
}
