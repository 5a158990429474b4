use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix with an optional gradient accumulator of the same shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor2D {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grad: Option<Vec<f64>>,
}

impl Tensor2D {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
            grad: None,
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape {
                context: "Tensor2D::from_vec",
                expected: (rows, cols),
                actual: (data.len(), 1),
            });
        }
        Ok(Self {
            rows,
            cols,
            data,
            grad: None,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Shape {
                    context: "Tensor2D::from_rows",
                    expected: (i, cols),
                    actual: (i, r.len()),
                });
            }
            data.extend_from_slice(r);
        }
        Self::from_vec(rows.len(), cols, data)
    }

    /// A `1 × n` row vector.
    pub fn row_vector(values: &[f64]) -> Self {
        Self {
            rows: 1,
            cols: values.len(),
            data: values.to_vec(),
            grad: None,
        }
    }

    pub fn with_grad(mut self) -> Self {
        self.ensure_grad();
        self
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
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let c = self.cols;
        &mut self.data[r * c..(r + 1) * c]
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> &mut [f64] {
        self.ensure_grad();
        self.grad.as_mut().expect("grad allocated")
    }

    /// Splits into the value slice and the (allocated) gradient slice.
    pub fn data_and_grad_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        self.ensure_grad();
        (&mut self.data, self.grad.as_mut().expect("grad allocated"))
    }

    pub fn ensure_grad(&mut self) {
        if self.grad.is_none() {
            self.grad = Some(vec![0.0; self.data.len()]);
        }
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    /// Adds `src` into the gradient accumulator.
    pub fn accumulate_grad(&mut self, src: &[f64]) -> Result<()> {
        if src.len() != self.data.len() {
            return Err(Error::Shape {
                context: "Tensor2D::accumulate_grad",
                expected: self.shape(),
                actual: (src.len(), 1),
            });
        }
        for (g, s) in self.grad_mut().iter_mut().zip(src) {
            *g += s;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Gathers the given rows into a new tensor.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            cols: self.cols,
            data,
            grad: None,
        }
    }

    /// Stacks tensors with equal column counts vertically.
    pub fn vstack(parts: &[&Tensor2D]) -> Result<Self> {
        let cols = parts.first().map_or(0, |t| t.cols);
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            if p.cols != cols {
                return Err(Error::Shape {
                    context: "Tensor2D::vstack",
                    expected: (p.rows, cols),
                    actual: p.shape(),
                });
            }
            data.extend_from_slice(&p.data);
            rows += p.rows;
        }
        Self::from_vec(rows, cols, data)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
            grad: None,
        }
    }

    /// Drops the gradient slot, returning a plain value tensor.
    pub fn detached(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.clone(),
            grad: None,
        }
    }

    pub(crate) fn check_shape(&self, context: &'static str, expected: (usize, usize)) -> Result<()> {
        if self.shape() != expected {
            return Err(Error::Shape {
                context,
                expected,
                actual: self.shape(),
            });
        }
        Ok(())
    }
}

/// `y = x · w + b` with `x: n×k`, `w: k×m`, `b: 1×m`.
///
/// Every output element is `b_j` followed by the products over `k` added in
/// index order, so results do not depend on how callers split the batch.
pub fn affine(x: &Tensor2D, w: &Tensor2D, b: &Tensor2D) -> Result<Tensor2D> {
    let (n, k) = x.shape();
    if w.rows != k {
        return Err(Error::Shape {
            context: "affine weight",
            expected: (k, w.cols),
            actual: w.shape(),
        });
    }
    let m = w.cols;
    b.check_shape("affine bias", (1, m))?;
    Tensor2D::from_vec(n, m, matmul(&x.data, n, k, &w.data, m, Some(&b.data)))
}

const RB: usize = 8;
const CB: usize = 16;

/// Row-major `x (n×k) · w (k×m)`, optionally seeded with a bias row.
/// Computed in `RB × CB` register tiles; each element accumulates over `k` in order.
fn matmul(x: &[f64], n: usize, k: usize, w: &[f64], m: usize, bias: Option<&[f64]>) -> Vec<f64> {
    let mut y = vec![0.0; n * m];
    let seed = |j: usize| bias.map_or(0.0, |b| b[j]);
    let full_rows = n - n % RB;
    let full_cols = m - m % CB;
    let mut xp = vec![[0.0f64; RB]; k];
    for i in (0..full_rows).step_by(RB) {
        for (kk, slot) in xp.iter_mut().enumerate() {
            for (r, v) in slot.iter_mut().enumerate() {
                *v = x[(i + r) * k + kk];
            }
        }
        for j in (0..full_cols).step_by(CB) {
            let mut acc = [[0.0f64; CB]; RB];
            for row in acc.iter_mut() {
                for (c, v) in row.iter_mut().enumerate() {
                    *v = seed(j + c);
                }
            }
            for (xa, wrow) in xp.iter().zip(w.chunks_exact(m)) {
                let wr: &[f64; CB] = wrow[j..j + CB].try_into().expect("tile");
                for r in 0..RB {
                    let a = xa[r];
                    for c in 0..CB {
                        acc[r][c] += a * wr[c];
                    }
                }
            }
            for (r, row) in acc.iter().enumerate() {
                y[(i + r) * m + j..(i + r) * m + j + CB].copy_from_slice(row);
            }
        }
        for r in i..i + RB {
            scalar_row(x, k, w, m, &seed, r, full_cols, &mut y);
        }
    }
    for r in full_rows..n {
        scalar_row(x, k, w, m, &seed, r, 0, &mut y);
    }
    y
}

#[inline]
fn scalar_row(
    x: &[f64],
    k: usize,
    w: &[f64],
    m: usize,
    seed: &impl Fn(usize) -> f64,
    r: usize,
    from: usize,
    y: &mut [f64],
) {
    let xr = &x[r * k..(r + 1) * k];
    for j in from..m {
        let mut s = seed(j);
        for (kk, &a) in xr.iter().enumerate() {
            s += a * w[kk * m + j];
        }
        y[r * m + j] = s;
    }
}

/// `dw += xᵀ · dy`, `db += Σ_rows dy`, accumulating over rows in order.
pub(crate) fn accumulate_affine_param_grads(x: &Tensor2D, dy: &Tensor2D, w: &mut Tensor2D, b: &mut Tensor2D) {
    let (n, k) = x.shape();
    let m = dy.cols;
    {
        let dw = w.grad_mut();
        let full_k = k - k % RB;
        let full_m = m - m % CB;
        for kk in (0..full_k).step_by(RB) {
            for j in (0..full_m).step_by(CB) {
                let mut acc = [[0.0f64; CB]; RB];
                for (r, row) in acc.iter_mut().enumerate() {
                    row.copy_from_slice(&dw[(kk + r) * m + j..(kk + r) * m + j + CB]);
                }
                for i in 0..n {
                    let d: &[f64; CB] = dy.data[i * m + j..i * m + j + CB].try_into().expect("tile");
                    for (r, row) in acc.iter_mut().enumerate() {
                        let a = x.data[i * k + kk + r];
                        for c in 0..CB {
                            row[c] += a * d[c];
                        }
                    }
                }
                for (r, row) in acc.iter().enumerate() {
                    dw[(kk + r) * m + j..(kk + r) * m + j + CB].copy_from_slice(row);
                }
            }
        }
        for kk in 0..k {
            let from = if kk < full_k { full_m } else { 0 };
            for j in from..m {
                let mut s = dw[kk * m + j];
                for i in 0..n {
                    s += x.data[i * k + kk] * dy.data[i * m + j];
                }
                dw[kk * m + j] = s;
            }
        }
    }
    let db = b.grad_mut();
    for i in 0..n {
        for (g, &d) in db.iter_mut().zip(&dy.data[i * m..(i + 1) * m]) {
            *g += d;
        }
    }
}

/// `dx = dy · wᵀ`.
pub(crate) fn affine_input_grad(dy: &Tensor2D, w: &Tensor2D) -> Tensor2D {
    let (n, m) = dy.shape();
    let k = w.rows;
    let mut wt = vec![0.0; m * k];
    for kk in 0..k {
        for j in 0..m {
            wt[j * k + kk] = w.data[kk * m + j];
        }
    }
    Tensor2D {
        rows: n,
        cols: k,
        data: matmul(&dy.data, n, m, &wt, k, None),
        grad: None,
    }
}
