//! Dense row-major tensors.
//!
//! Rank is at most 2 for matrix operations; elementwise operations accept any
//! shape. Vectors are represented as `[1, C]` matrices and scalars as `[1, 1]`.

use crate::error::{Error, Result};
use crate::scalar::{real, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<R> {
    shape: Vec<usize>,
    data: Vec<R>,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// How two shapes combine in a binary elementwise op.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Broadcast {
    Same,
    ScalarLhs,
    ScalarRhs,
    RowLhs,
    RowRhs,
}

fn broadcast_kind(a: &[usize], b: &[usize]) -> Option<Broadcast> {
    if a == b {
        return Some(Broadcast::Same);
    }
    if numel(b) == 1 {
        return Some(Broadcast::ScalarRhs);
    }
    if numel(a) == 1 {
        return Some(Broadcast::ScalarLhs);
    }
    if a.len() == 2 && b.len() == 2 && a[1] == b[1] {
        if b[0] == 1 {
            return Some(Broadcast::RowRhs);
        }
        if a[0] == 1 {
            return Some(Broadcast::RowLhs);
        }
    }
    None
}

impl<R: Real> Tensor<R> {
    pub fn new(shape: Vec<usize>, data: Vec<R>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::Shape(format!("zero dimension in shape {shape:?}")));
        }
        if numel(&shape) != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} does not match data length {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![R::zero(); numel(shape)],
        }
    }

    pub fn ones(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![R::one(); numel(shape)],
        }
    }

    pub fn full(shape: &[usize], v: R) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![v; numel(shape)],
        }
    }

    pub fn scalar(v: R) -> Self {
        Tensor {
            shape: vec![1, 1],
            data: vec![v],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> R) -> Self {
        let n = numel(shape);
        Tensor {
            shape: shape.to_vec(),
            data: (0..n).map(|i| f(i)).collect(),
        }
    }

    /// Build a `[rows.len(), rows[0].len()]` matrix from row slices.
    pub fn from_rows(rows: &[Vec<R>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Shape("from_rows: empty input".into()));
        }
        let c = rows[0].len();
        if rows.iter().any(|r| r.len() != c) {
            return Err(Error::Shape("from_rows: ragged rows".into()));
        }
        let data: Vec<R> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Tensor::new(vec![rows.len(), c], data)
    }

    /// Row vector `[1, v.len()]`.
    pub fn row(v: Vec<R>) -> Result<Self> {
        let n = v.len();
        Tensor::new(vec![1, n], v)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[R] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [R] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn rows(&self) -> usize {
        assert_eq!(self.shape.len(), 2, "rows() on non-matrix");
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        assert_eq!(self.shape.len(), 2, "cols() on non-matrix");
        self.shape[1]
    }

    pub fn at(&self, r: usize, c: usize) -> R {
        self.data[r * self.cols() + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: R) {
        let cols = self.cols();
        self.data[r * cols + c] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn check_finite(&self, what: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::Numeric(format!("non-finite values in {what}")))
        }
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Self> {
        if numel(&shape) != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} to {shape:?}",
                self.shape
            )));
        }
        Ok(Tensor {
            shape,
            data: self.data.clone(),
        })
    }

    pub fn map(&self, f: impl Fn(R) -> R) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip(&self, other: &Self, f: impl Fn(R, R) -> R) -> Result<Self> {
        let kind = broadcast_kind(&self.shape, &other.shape).ok_or_else(|| {
            Error::Shape(format!(
                "incompatible shapes {:?} and {:?}",
                self.shape, other.shape
            ))
        })?;
        let out = match kind {
            Broadcast::Same => Tensor {
                shape: self.shape.clone(),
                data: self
                    .data
                    .iter()
                    .zip(other.data.iter())
                    .map(|(&a, &b)| f(a, b))
                    .collect(),
            },
            Broadcast::ScalarRhs => {
                let b = other.data[0];
                self.map(|a| f(a, b))
            }
            Broadcast::ScalarLhs => {
                let a = self.data[0];
                other.map(|b| f(a, b))
            }
            Broadcast::RowRhs => {
                let c = self.shape[1];
                Tensor {
                    shape: self.shape.clone(),
                    data: self
                        .data
                        .iter()
                        .enumerate()
                        .map(|(i, &a)| f(a, other.data[i % c]))
                        .collect(),
                }
            }
            Broadcast::RowLhs => {
                let c = other.shape[1];
                Tensor {
                    shape: other.shape.clone(),
                    data: other
                        .data
                        .iter()
                        .enumerate()
                        .map(|(i, &b)| f(self.data[i % c], b))
                        .collect(),
                }
            }
        };
        Ok(out)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a * b)
    }

    pub fn scale(&self, c: R) -> Self {
        self.map(|x| x * c)
    }

    pub fn neg(&self) -> Self {
        self.map(|x| -x)
    }

    pub fn abs(&self) -> Self {
        self.map(|x| x.abs())
    }

    /// Elementwise sign with sign(0) = 0.
    pub fn signum0(&self) -> Self {
        self.map(|x| {
            if x > R::zero() {
                R::one()
            } else if x < R::zero() {
                -R::one()
            } else {
                R::zero()
            }
        })
    }

    pub fn relu(&self) -> Self {
        self.map(|x| if x > R::zero() { x } else { R::zero() })
    }

    pub fn exp(&self) -> Self {
        self.map(|x| x.exp())
    }

    pub fn ln(&self) -> Self {
        self.map(|x| x.ln())
    }

    pub fn sin(&self) -> Self {
        self.map(|x| x.sin())
    }

    pub fn cos(&self) -> Self {
        self.map(|x| x.cos())
    }

    pub fn sigmoid(&self) -> Self {
        self.map(|x| R::one() / (R::one() + (-x).exp()))
    }

    /// |x|^p for integer p >= 1.
    pub fn powi_abs(&self, p: i32) -> Self {
        self.map(|x| x.abs().powi(p))
    }

    /// exp(p * ln(|x| + eps)): smooth |x|^p usable with a learnable exponent.
    pub fn pow_scalar(&self, p: R, eps: R) -> Self {
        self.map(|x| (p * (x.abs() + eps).ln()).exp())
    }

    pub fn sum(&self) -> R {
        self.data.iter().copied().sum()
    }

    pub fn max_value(&self) -> R {
        self.data
            .iter()
            .copied()
            .fold(R::neg_infinity(), |a, b| if b > a { b } else { a })
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.shape.len() != 2 || other.shape.len() != 2 {
            return Err(Error::Shape("matmul requires rank-2 tensors".into()));
        }
        let (m, k) = (self.shape[0], self.shape[1]);
        let (k2, n) = (other.shape[0], other.shape[1]);
        if k != k2 {
            return Err(Error::Shape(format!(
                "matmul inner dims disagree: {:?} x {:?}",
                self.shape, other.shape
            )));
        }
        let mut out = vec![R::zero(); m * n];
        for i in 0..m {
            for l in 0..k {
                let a = self.data[i * k + l];
                if a == R::zero() {
                    continue;
                }
                let brow = &other.data[l * n..(l + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for j in 0..n {
                    orow[j] = orow[j] + a * brow[j];
                }
            }
        }
        Tensor::new(vec![m, n], out)
    }

    pub fn transpose(&self) -> Result<Self> {
        if self.shape.len() != 2 {
            return Err(Error::Shape("transpose requires rank-2 tensor".into()));
        }
        let (m, n) = (self.shape[0], self.shape[1]);
        let mut out = vec![R::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Tensor::new(vec![n, m], out)
    }

    /// Column sums as a `[1, C]` row.
    pub fn col_sum(&self) -> Self {
        let (m, n) = (self.rows(), self.cols());
        let mut out = vec![R::zero(); n];
        for i in 0..m {
            for j in 0..n {
                out[j] = out[j] + self.data[i * n + j];
            }
        }
        Tensor {
            shape: vec![1, n],
            data: out,
        }
    }

    /// Row sums as a `[R, 1]` column.
    pub fn row_sum(&self) -> Self {
        let (m, n) = (self.rows(), self.cols());
        let out: Vec<R> = (0..m)
            .map(|i| self.data[i * n..(i + 1) * n].iter().copied().sum())
            .collect();
        Tensor {
            shape: vec![m, 1],
            data: out,
        }
    }

    /// Numerically stable row-wise softmax.
    pub fn softmax_rows(&self) -> Self {
        let (m, n) = (self.rows(), self.cols());
        let mut out = vec![R::zero(); m * n];
        for i in 0..m {
            let row = &self.data[i * n..(i + 1) * n];
            let mx = row
                .iter()
                .copied()
                .fold(R::neg_infinity(), |a, b| if b > a { b } else { a });
            let mut z = R::zero();
            for j in 0..n {
                let e = (row[j] - mx).exp();
                out[i * n + j] = e;
                z = z + e;
            }
            for j in 0..n {
                out[i * n + j] = out[i * n + j] / z;
            }
        }
        Tensor {
            shape: vec![m, n],
            data: out,
        }
    }

    /// Per-row layer normalization followed by the affine `gamma * xhat + beta`.
    /// `gamma` and `beta` must have C elements each.
    pub fn layer_norm(&self, gamma: &Self, beta: &Self, eps: R) -> Result<Self> {
        let (m, n) = (self.rows(), self.cols());
        if gamma.len() != n || beta.len() != n {
            return Err(Error::Shape(format!(
                "layer_norm: gamma/beta length must be {n}"
            )));
        }
        let nr = real::<R>(n as f64);
        let mut out = vec![R::zero(); m * n];
        for i in 0..m {
            let row = &self.data[i * n..(i + 1) * n];
            let mean = row.iter().copied().sum::<R>() / nr;
            let var = row
                .iter()
                .map(|&x| (x - mean) * (x - mean))
                .sum::<R>()
                / nr;
            let inv = R::one() / (var + eps).sqrt();
            for j in 0..n {
                let xhat = (row[j] - mean) * inv;
                out[i * n + j] = gamma.data[j] * xhat + beta.data[j];
            }
        }
        Tensor::new(vec![m, n], out)
    }

    /// Per-channel max over non-overlapping windows of `stride` rows.
    /// The final partial window is pooled as-is. Returns the pooled tensor and
    /// the source row index of each output element (ties to lowest index).
    pub fn max_pool_stride(&self, stride: usize) -> Result<(Self, Vec<usize>)> {
        if stride == 0 {
            return Err(Error::Shape("max_pool_stride: stride must be >= 1".into()));
        }
        let (m, n) = (self.rows(), self.cols());
        let out_rows = m.div_ceil(stride);
        let mut out = vec![R::zero(); out_rows * n];
        let mut arg = vec![0usize; out_rows * n];
        for w in 0..out_rows {
            let lo = w * stride;
            let hi = (lo + stride).min(m);
            for j in 0..n {
                let mut best = self.data[lo * n + j];
                let mut bi = lo;
                for r in lo + 1..hi {
                    let v = self.data[r * n + j];
                    if v > best {
                        best = v;
                        bi = r;
                    }
                }
                out[w * n + j] = best;
                arg[w * n + j] = bi;
            }
        }
        Ok((Tensor::new(vec![out_rows, n], out)?, arg))
    }

    pub fn gather_rows(&self, idx: &[usize]) -> Result<Self> {
        let (m, n) = (self.rows(), self.cols());
        let mut out = Vec::with_capacity(idx.len() * n);
        for &i in idx {
            if i >= m {
                return Err(Error::Shape(format!(
                    "gather_rows: index {i} out of range for {m} rows"
                )));
            }
            out.extend_from_slice(&self.data[i * n..(i + 1) * n]);
        }
        Tensor::new(vec![idx.len(), n], out)
    }

    /// Scatter-add rows of `self` (shape [idx.len(), C]) into a zero matrix
    /// with `n_rows` rows. Used as the adjoint of `gather_rows`.
    pub fn scatter_add_rows(&self, idx: &[usize], n_rows: usize) -> Self {
        let n = self.cols();
        let mut out = vec![R::zero(); n_rows * n];
        for (k, &i) in idx.iter().enumerate() {
            for j in 0..n {
                out[i * n + j] = out[i * n + j] + self.data[k * n + j];
            }
        }
        Tensor {
            shape: vec![n_rows, n],
            data: out,
        }
    }

    /// Repeat each row `k` times consecutively: [M, C] -> [M*k, C].
    pub fn repeat_rows_interleave(&self, k: usize) -> Self {
        let (m, n) = (self.rows(), self.cols());
        let mut out = Vec::with_capacity(m * k * n);
        for i in 0..m {
            for _ in 0..k {
                out.extend_from_slice(&self.data[i * n..(i + 1) * n]);
            }
        }
        Tensor {
            shape: vec![m * k, n],
            data: out,
        }
    }

    /// Sum consecutive groups of `k` rows: [M*k, C] -> [M, C].
    /// Adjoint of `repeat_rows_interleave`.
    pub fn sum_row_groups(&self, k: usize) -> Self {
        let (mk, n) = (self.rows(), self.cols());
        assert_eq!(mk % k, 0, "sum_row_groups: rows not divisible by k");
        let m = mk / k;
        let mut out = vec![R::zero(); m * n];
        for i in 0..mk {
            let g = i / k;
            for j in 0..n {
                out[g * n + j] = out[g * n + j] + self.data[i * n + j];
            }
        }
        Tensor {
            shape: vec![m, n],
            data: out,
        }
    }

    pub fn concat_rows(parts: &[&Self]) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::Shape("concat_rows: no inputs".into()));
        }
        let n = parts[0].cols();
        if parts.iter().any(|p| p.cols() != n) {
            return Err(Error::Shape("concat_rows: column counts differ".into()));
        }
        let m: usize = parts.iter().map(|p| p.rows()).sum();
        let mut data = Vec::with_capacity(m * n);
        for p in parts {
            data.extend_from_slice(&p.data);
        }
        Tensor::new(vec![m, n], data)
    }

    pub fn concat_cols(parts: &[&Self]) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::Shape("concat_cols: no inputs".into()));
        }
        let m = parts[0].rows();
        if parts.iter().any(|p| p.rows() != m) {
            return Err(Error::Shape("concat_cols: row counts differ".into()));
        }
        let n: usize = parts.iter().map(|p| p.cols()).sum();
        let mut data = Vec::with_capacity(m * n);
        for i in 0..m {
            for p in parts {
                let c = p.cols();
                data.extend_from_slice(&p.data[i * c..(i + 1) * c]);
            }
        }
        Tensor::new(vec![m, n], data)
    }

    /// L2-normalize each row with `y = x / sqrt(sum x^2 + eps)`.
    pub fn row_l2_normalize(&self, eps: R) -> Self {
        let (m, n) = (self.rows(), self.cols());
        let mut out = vec![R::zero(); m * n];
        for i in 0..m {
            let row = &self.data[i * n..(i + 1) * n];
            let s: R = row.iter().map(|&x| x * x).sum();
            let inv = R::one() / (s + eps).sqrt();
            for j in 0..n {
                out[i * n + j] = row[j] * inv;
            }
        }
        Tensor {
            shape: vec![m, n],
            data: out,
        }
    }

    /// Sum `self` down to `shape`, undoing a broadcast. Supports the same
    /// broadcast patterns as `zip`.
    pub fn reduce_to(&self, shape: &[usize]) -> Self {
        if self.shape == shape {
            return self.clone();
        }
        if numel(shape) == 1 {
            return Tensor {
                shape: shape.to_vec(),
                data: vec![self.sum()],
            };
        }
        if shape.len() == 2 && shape[0] == 1 && self.shape.len() == 2 && self.shape[1] == shape[1] {
            return self.col_sum();
        }
        panic!(
            "reduce_to: cannot reduce {:?} to {:?}",
            self.shape, shape
        );
    }

    pub fn to_f64(&self) -> Tensor<f64> {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|x| x.to_f64().expect("scalar convertible to f64"))
                .collect(),
        }
    }

    pub fn from_f64(t: &Tensor<f64>) -> Self {
        Tensor {
            shape: t.shape.clone(),
            data: t.data.iter().map(|&x| real::<R>(x)).collect(),
        }
    }
}

/// Relative difference between two tensors:
/// `||a - b|| / (||a|| + ||b|| + tiny)`. Zero for identical inputs.
pub fn relative_error<R: Real>(a: &Tensor<R>, b: &Tensor<R>) -> f64 {
    assert_eq!(a.shape(), b.shape(), "relative_error: shape mismatch");
    let mut diff = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for (&x, &y) in a.data().iter().zip(b.data().iter()) {
        let (x, y) = (x.to_f64().unwrap(), y.to_f64().unwrap());
        diff += (x - y) * (x - y);
        na += x * x;
        nb += y * y;
    }
    diff.sqrt() / (na.sqrt() + nb.sqrt() + 1e-300)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let a = t(&[2, 2], &[3.0, -1.0, 2.5, 7.0]);
        let i = t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(i.matmul(&a).unwrap(), a);
    }

    #[test]
    fn matmul_forced() {
        let a = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let b = t(&[2, 1], &[1.0, 1.0]);
        assert_eq!(a.matmul(&b).unwrap(), t(&[2, 1], &[3.0, 7.0]));
    }

    #[test]
    fn matmul_shape_mismatch() {
        let a = t(&[2, 3], &[0.0; 6]);
        let b = t(&[2, 2], &[0.0; 4]);
        assert!(a.matmul(&b).is_err());
    }

    #[test]
    fn abs_and_sign() {
        let x = t(&[1, 3], &[-3.0, 0.0, 2.0]);
        assert_eq!(x.abs(), t(&[1, 3], &[3.0, 0.0, 2.0]));
        assert_eq!(x.signum0(), t(&[1, 3], &[-1.0, 0.0, 1.0]));
    }

    #[test]
    fn pow_scalar_example() {
        let x = t(&[1, 1], &[2.0]);
        let y = x.pow_scalar(3.0, 1e-8);
        assert!((y.data()[0] - 8.0).abs() < 1e-6);
    }

    #[test]
    fn sigmoid_values() {
        let x = t(&[1, 2], &[0.0, 50.0]);
        let y = x.sigmoid();
        assert_eq!(y.data()[0], 0.5);
        assert!((y.data()[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_constant_row() {
        let x = t(&[1, 3], &[4.2, 4.2, 4.2]);
        let y = x.softmax_rows();
        for &v in y.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_forced() {
        let x = t(&[1, 2], &[0.0, 2.0f64.ln()]);
        let y = x.softmax_rows();
        assert!((y.data()[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((y.data()[1] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn layer_norm_constant_row() {
        let x = t(&[1, 4], &[1.0, 1.0, 1.0, 1.0]);
        let g = Tensor::ones(&[1, 4]);
        let b = Tensor::zeros(&[1, 4]);
        let y = x.layer_norm(&g, &b, 1e-5).unwrap();
        for &v in y.data() {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn layer_norm_already_normalized() {
        let x = t(&[1, 2], &[-1.0, 1.0]);
        let g = Tensor::ones(&[1, 2]);
        let b = Tensor::zeros(&[1, 2]);
        let y = x.layer_norm(&g, &b, 1e-5).unwrap();
        assert!((y.data()[0] + 1.0).abs() < 1e-4);
        assert!((y.data()[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn max_pool_basic() {
        let x = t(&[4, 1], &[1.0, 3.0, 2.0, 0.0]);
        let (y, arg) = x.max_pool_stride(2).unwrap();
        assert_eq!(y, t(&[2, 1], &[3.0, 2.0]));
        assert_eq!(arg, vec![1, 2]);
    }

    #[test]
    fn max_pool_global() {
        let x = t(&[3, 2], &[1.0, 9.0, 5.0, 2.0, 3.0, 4.0]);
        let (y, _) = x.max_pool_stride(10).unwrap();
        assert_eq!(y, t(&[1, 2], &[5.0, 9.0]));
    }

    #[test]
    fn max_pool_row_count() {
        let x = Tensor::<f64>::zeros(&[2048, 4]);
        let (y, _) = x.max_pool_stride(32).unwrap();
        assert_eq!(y.rows(), 64);
    }

    #[test]
    fn max_pool_tie_lowest_index() {
        let x = t(&[3, 1], &[2.0, 2.0, 2.0]);
        let (_, arg) = x.max_pool_stride(3).unwrap();
        assert_eq!(arg, vec![0]);
    }

    #[test]
    fn row_broadcast_add() {
        let x = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let b = t(&[1, 2], &[10.0, 20.0]);
        assert_eq!(x.add(&b).unwrap(), t(&[2, 2], &[11.0, 22.0, 13.0, 24.0]));
        let g = t(&[2, 2], &[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(g.reduce_to(&[1, 2]), t(&[1, 2], &[2.0, 2.0]));
    }

    #[test]
    fn row_l2_normalize_unit_norm() {
        let x = t(&[1, 2], &[3.0, 4.0]);
        let y = x.row_l2_normalize(0.0);
        assert!((y.data()[0] - 0.6).abs() < 1e-12);
        assert!((y.data()[1] - 0.8).abs() < 1e-12);
    }
}
