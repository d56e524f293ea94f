//! KV cache and query containers for a single attention head.
//!
//! Matrices are dense row-major `f64`. Constructors enforce the shape and
//! finiteness invariants, so a `KvCache` or `QueryBatch` that exists is valid
//! on its own; [`validate_cache`] additionally checks that the two agree on the
//! head dimension.

use crate::error::{Error, MatrixKind, Result};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows.checked_mul(cols) != Some(data.len()) {
            return Err(Error::ShapeMismatch {
                expected: format!("{rows}x{cols} = {} entries", rows.saturating_mul(cols)),
                got: format!("{} entries", data.len()),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from row vectors; all rows must have the same length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::ShapeMismatch {
                    expected: format!("row of width {cols}"),
                    got: format!("row {i} of width {}", r.len()),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
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
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    fn first_non_finite(&self) -> Option<(usize, usize)> {
        self.data
            .iter()
            .position(|x| !x.is_finite())
            .map(|p| (p / self.cols, p % self.cols))
    }
}

fn check_finite(m: &Matrix, kind: MatrixKind) -> Result<()> {
    match m.first_non_finite() {
        Some((row, col)) => Err(Error::NonFiniteEntry {
            matrix: kind,
            row,
            col,
        }),
        None => Ok(()),
    }
}

/// Keys and values of one attention head: the population attention sums over.
#[derive(Debug, Clone, PartialEq)]
pub struct KvCache {
    keys: Matrix,
    values: Matrix,
}

impl KvCache {
    pub fn new(keys: Matrix, values: Matrix) -> Result<Self> {
        if keys.rows() == 0 || keys.cols() == 0 {
            return Err(Error::EmptyCache);
        }
        if keys.rows() != values.rows() || keys.cols() != values.cols() {
            return Err(Error::ShapeMismatch {
                expected: format!("values {}x{}", keys.rows(), keys.cols()),
                got: format!("values {}x{}", values.rows(), values.cols()),
            });
        }
        check_finite(&keys, MatrixKind::Keys)?;
        check_finite(&values, MatrixKind::Values)?;
        Ok(Self { keys, values })
    }

    /// Token count.
    #[inline]
    pub fn n(&self) -> usize {
        self.keys.rows()
    }

    /// Head dimension.
    #[inline]
    pub fn d(&self) -> usize {
        self.keys.cols()
    }

    pub fn keys(&self) -> &Matrix {
        &self.keys
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    #[inline]
    pub fn key(&self, i: usize) -> &[f64] {
        self.keys.row(i)
    }

    #[inline]
    pub fn value(&self, i: usize) -> &[f64] {
        self.values.row(i)
    }

    pub fn into_parts(self) -> (Matrix, Matrix) {
        (self.keys, self.values)
    }
}

/// A batch of `m` query vectors, each evaluated independently against a cache.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryBatch {
    queries: Matrix,
}

impl QueryBatch {
    pub fn new(queries: Matrix) -> Result<Self> {
        if queries.rows() == 0 || queries.cols() == 0 {
            return Err(Error::EmptyCache);
        }
        check_finite(&queries, MatrixKind::Queries)?;
        Ok(Self { queries })
    }

    /// Query count.
    pub fn m(&self) -> usize {
        self.queries.rows()
    }

    pub fn d(&self) -> usize {
        self.queries.cols()
    }

    pub fn query(&self, j: usize) -> &[f64] {
        self.queries.row(j)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.queries
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        (0..self.m()).map(move |j| self.query(j))
    }
}

/// Checks every invariant of a cache/query pair, including that the query
/// width matches the head dimension.
pub fn validate_cache(cache: &KvCache, queries: &QueryBatch) -> Result<()> {
    if cache.n() == 0 || queries.m() == 0 {
        return Err(Error::EmptyCache);
    }
    if queries.d() != cache.d() {
        return Err(Error::ShapeMismatch {
            expected: format!("query width {}", cache.d()),
            got: format!("query width {}", queries.d()),
        });
    }
    check_finite(&cache.keys, MatrixKind::Keys)?;
    check_finite(&cache.values, MatrixKind::Values)?;
    check_finite(&queries.queries, MatrixKind::Queries)
}

pub(crate) fn check_query(cache: &KvCache, q: &[f64]) -> Result<()> {
    if q.len() != cache.d() {
        return Err(Error::ShapeMismatch {
            expected: format!("query width {}", cache.d()),
            got: format!("query width {}", q.len()),
        });
    }
    if let Some(col) = q.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFiniteEntry {
            matrix: MatrixKind::Queries,
            row: 0,
            col,
        });
    }
    Ok(())
}
