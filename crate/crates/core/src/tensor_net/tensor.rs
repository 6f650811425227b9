use crate::error::{Error, Result};

/// Dense row-major array of finite `f64` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.iter().any(|&d| d == 0) {
            return Err(Error::Shape(format!("tensor dimensions must be positive, got {shape:?}")));
        }
        let size: usize = shape.iter().product();
        if size != values.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {size} values, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("tensor value at flat index {i} is {}", values[i])));
        }
        Ok(Self { shape, values })
    }

    /// Matrix constructor. Values are trusted to be finite.
    pub(crate) fn from_parts(rows: usize, cols: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(rows * cols, values.len());
        Self {
            shape: vec![rows, cols],
            values,
        }
    }

    pub fn matrix(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], values)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_parts(rows, cols, vec![0.0; rows * cols])
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::matrix(rows.len(), cols, rows.concat())
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n, n);
        for i in 0..n {
            t.values[i * n + i] = 1.0;
        }
        t
    }

    pub fn scalar(v: f64) -> Result<Self> {
        Self::new(vec![1, 1], vec![v])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Rows of a 2-D tensor (or 1 for a vector).
    pub fn rows(&self) -> usize {
        if self.shape.len() == 1 {
            1
        } else {
            self.shape[0]
        }
    }

    /// Trailing dimension.
    pub fn cols(&self) -> usize {
        *self.shape.last().expect("shape is never empty")
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.values[i * c..(i + 1) * c]
    }

    pub(crate) fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.values[i * c..(i + 1) * c]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols() + j]
    }

    pub fn select_rows(&self, indices: &[usize]) -> Tensor {
        let c = self.cols();
        let mut values = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Self::from_parts(indices.len(), c, values)
    }

    /// Rows `start..end`.
    pub fn slice_rows(&self, start: usize, end: usize) -> Tensor {
        let c = self.cols();
        Self::from_parts(end - start, c, self.values[start * c..end * c].to_vec())
    }

    pub fn vstack(a: &Tensor, b: &Tensor) -> Result<Tensor> {
        if a.cols() != b.cols() {
            return Err(Error::Shape(format!("cannot stack {} and {} columns", a.cols(), b.cols())));
        }
        let mut values = Vec::with_capacity(a.len() + b.len());
        values.extend_from_slice(&a.values);
        values.extend_from_slice(&b.values);
        Ok(Self::from_parts(a.rows() + b.rows(), a.cols(), values))
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub(crate) fn same_shape(&self, other: &Tensor) -> bool {
        self.shape == other.shape
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }

    pub fn transpose(&self) -> Tensor {
        let (r, c) = (self.rows(), self.cols());
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.values[i * c + j];
            }
        }
        Self::from_parts(c, r, out)
    }
}

/// `a (n x k) * b (k x m)`, accumulating over `k` in increasing order.
pub(crate) fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    let (n, k, m) = (a.rows(), a.cols(), b.cols());
    debug_assert_eq!(k, b.rows());
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let dst = &mut out[i * m..(i + 1) * m];
        for (p, &x) in a.row(i).iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for (d, &w) in dst.iter_mut().zip(&b.values[p * m..(p + 1) * m]) {
                *d += x * w;
            }
        }
    }
    Tensor::from_parts(n, m, out)
}

/// `a^T (k x n) * g (n x m)` without materializing the transpose.
pub(crate) fn matmul_tn(a: &Tensor, g: &Tensor) -> Tensor {
    let (n, k, m) = (a.rows(), a.cols(), g.cols());
    debug_assert_eq!(n, g.rows());
    let mut out = vec![0.0; k * m];
    for i in 0..n {
        let grow = g.row(i);
        for (p, &x) in a.row(i).iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for (d, &v) in out[p * m..(p + 1) * m].iter_mut().zip(grow) {
                *d += x * v;
            }
        }
    }
    Tensor::from_parts(k, m, out)
}

/// `g (n x m) * w^T (m x k)`.
pub(crate) fn matmul_nt(g: &Tensor, w: &Tensor) -> Tensor {
    matmul(g, &w.transpose())
}
