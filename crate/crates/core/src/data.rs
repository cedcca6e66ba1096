//! Row-major observation matrix shared by every stage of the pipeline.

use crate::error::{Error, Result};

/// An `n x p` matrix of observations stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n: usize,
    p: usize,
    data: Vec<f64>,
}

impl Dataset {
    pub fn new(n: usize, p: usize, data: Vec<f64>) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidInput("dimension p must be at least 1".into()));
        }
        if data.len() != n * p {
            return Err(Error::InvalidInput(format!(
                "buffer of length {} does not hold {n} x {p} values",
                data.len()
            )));
        }
        Ok(Self { n, p, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let p = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * p);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != p {
                return Err(Error::InvalidInput(format!(
                    "row {i} has {} columns, expected {p}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), p, data)
    }

    /// A single-column dataset.
    pub fn from_column(values: Vec<f64>) -> Self {
        Self {
            n: values.len(),
            p: 1,
            data: values,
        }
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn ncols(&self) -> usize {
        self.p
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.p..(i + 1) * self.p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.p)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.p + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    /// Rows selected by `idx`, in that order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.p);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            n: idx.len(),
            p: self.p,
            data,
        }
    }

    /// Columns selected by `cols`, in that order.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        let mut data = Vec::with_capacity(self.n * cols.len());
        for r in self.rows() {
            data.extend(cols.iter().map(|&c| r[c]));
        }
        Self {
            n: self.n,
            p: cols.len(),
            data,
        }
    }

    /// Applies `f` to every entry in row-major order.
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        Self {
            n: self.n,
            p: self.p,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn ensure_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(pos) => Err(Error::InvalidInput(format!(
                "non-finite value at row {}, column {}",
                pos / self.p,
                pos % self.p
            ))),
        }
    }
}
