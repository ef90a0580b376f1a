//! Dense row-major complex arrays with numpy-style broadcasting.
//!
//! Real data is stored as complex values with zero imaginary part; the
//! tape tracks realness separately.

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

#[derive(Debug, Clone, PartialEq)]
pub struct Array {
    shape: Vec<usize>,
    data: Vec<C64>,
}

impl Array {
    pub fn new(shape: Vec<usize>, data: Vec<C64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Domain(format!(
                "shape {:?} needs {} elements, got {}",
                shape,
                n,
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn from_real(shape: Vec<usize>, data: &[f64]) -> Result<Self> {
        Self::new(shape, data.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, C64::new(0.0, 0.0))
    }

    pub fn full(shape: &[usize], value: C64) -> Self {
        let n: usize = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn scalar(value: C64) -> Self {
        Self {
            shape: vec![],
            data: vec![value],
        }
    }

    pub fn eye(n: usize) -> Self {
        let mut a = Self::zeros(&[n, n]);
        for i in 0..n {
            a.data[i * n + i] = C64::new(1.0, 0.0);
        }
        a
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    /// Real parts, row-major.
    pub fn re(&self) -> Vec<f64> {
        self.data.iter().map(|z| z.re).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::shape("reshape", shape, &self.shape));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(C64, C64) -> C64) -> Self {
        debug_assert_eq!(self.shape, other.shape);
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub(crate) fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn broadcast_to(&self, shape: &[usize]) -> Result<Self> {
        if self.shape == shape {
            return Ok(self.clone());
        }
        let map = broadcast_map(&self.shape, shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: map.iter().map(|&i| self.data[i]).collect(),
        })
    }

    /// Reverse of [`Array::broadcast_to`]: sums over broadcast axes.
    pub fn sum_to(&self, shape: &[usize]) -> Result<Self> {
        if self.shape == shape {
            return Ok(self.clone());
        }
        let map = broadcast_map(shape, &self.shape)?;
        let mut out = Self::zeros(shape);
        for (src, &dst) in self.data.iter().zip(&map) {
            out.data[dst] += src;
        }
        Ok(out)
    }

    /// Swaps the last two axes (no conjugation).
    pub fn transpose_last(&self) -> Result<Self> {
        let r = self.shape.len();
        if r < 2 {
            return Err(Error::shape("transpose", &[0, 0], &self.shape));
        }
        let (rows, cols) = (self.shape[r - 2], self.shape[r - 1]);
        let batch = self.data.len() / (rows * cols).max(1);
        let mut shape = self.shape.clone();
        shape.swap(r - 2, r - 1);
        let mut data = vec![C64::new(0.0, 0.0); self.data.len()];
        for b in 0..batch {
            let off = b * rows * cols;
            for i in 0..rows {
                for j in 0..cols {
                    data[off + j * rows + i] = self.data[off + i * cols + j];
                }
            }
        }
        Ok(Self { shape, data })
    }

    pub fn conj(&self) -> Self {
        self.map(|z| z.conj())
    }

    /// Conjugate transpose of the last two axes.
    pub fn adjoint(&self) -> Result<Self> {
        Ok(self.transpose_last()?.conj())
    }

    /// Batched matrix product over the last two axes; leading axes must match.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        let (ra, rb) = (self.shape.len(), other.shape.len());
        if ra < 2 || rb < 2 || self.shape[..ra - 2] != other.shape[..rb - 2] {
            return Err(Error::shape("matmul", &self.shape, &other.shape));
        }
        let (n, k) = (self.shape[ra - 2], self.shape[ra - 1]);
        let (k2, p) = (other.shape[rb - 2], other.shape[rb - 1]);
        if k != k2 {
            return Err(Error::shape("matmul", &self.shape, &other.shape));
        }
        let batch: usize = self.shape[..ra - 2].iter().product();
        let mut shape = self.shape[..ra - 2].to_vec();
        shape.extend([n, p]);
        let mut data = vec![C64::new(0.0, 0.0); batch * n * p];
        for b in 0..batch {
            let a = &self.data[b * n * k..(b + 1) * n * k];
            let bm = &other.data[b * k * p..(b + 1) * k * p];
            let c = &mut data[b * n * p..(b + 1) * n * p];
            for i in 0..n {
                for l in 0..k {
                    let ail = a[i * k + l];
                    if ail == C64::new(0.0, 0.0) {
                        continue;
                    }
                    for j in 0..p {
                        c[i * p + j] += ail * bm[l * p + j];
                    }
                }
            }
        }
        Ok(Self { shape, data })
    }
}

/// For each flat index of `to`, the flat index of the element of `from`
/// it was broadcast from.
pub(crate) fn broadcast_map(from: &[usize], to: &[usize]) -> Result<Vec<usize>> {
    if from.len() > to.len() {
        return Err(Error::shape("broadcast", to, from));
    }
    let pad = to.len() - from.len();
    let mut strides = vec![0usize; to.len()];
    let mut s = 1usize;
    for i in (0..from.len()).rev() {
        let d = from[i];
        let t = to[pad + i];
        if d == t {
            strides[pad + i] = if d == 1 { 0 } else { s };
        } else if d == 1 {
            strides[pad + i] = 0;
        } else {
            return Err(Error::shape("broadcast", to, from));
        }
        s *= d;
    }
    let n: usize = to.iter().product();
    let mut out = Vec::with_capacity(n);
    let mut idx = vec![0usize; to.len()];
    let mut cur = 0usize;
    for _ in 0..n {
        out.push(cur);
        for ax in (0..to.len()).rev() {
            idx[ax] += 1;
            cur += strides[ax];
            if idx[ax] < to[ax] {
                break;
            }
            cur -= strides[ax] * idx[ax];
            idx[ax] = 0;
        }
    }
    Ok(out)
}

pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let r = a.len().max(b.len());
    let mut out = vec![0; r];
    for i in 0..r {
        let da = if i < r - a.len() { 1 } else { a[i - (r - a.len())] };
        let db = if i < r - b.len() { 1 } else { b[i - (r - b.len())] };
        out[i] = if da == db || db == 1 {
            da
        } else if da == 1 {
            db
        } else {
            return Err(Error::shape("broadcast", a, b));
        };
    }
    Ok(out)
}

/// Small dense complex linear algebra used by the per-bin solve and inverse.
pub(crate) mod dense {
    use super::C64;

    /// In-place LU with partial pivoting. Returns `false` on an exactly zero pivot.
    pub fn lu_factor(a: &mut [C64], n: usize, piv: &mut [usize]) -> bool {
        for (i, p) in piv.iter_mut().enumerate() {
            *p = i;
        }
        for k in 0..n {
            let mut best = k;
            let mut best_abs = a[k * n + k].norm();
            for i in k + 1..n {
                let v = a[i * n + k].norm();
                if v > best_abs {
                    best = i;
                    best_abs = v;
                }
            }
            if best_abs == 0.0 {
                return false;
            }
            if best != k {
                for j in 0..n {
                    a.swap(k * n + j, best * n + j);
                }
                piv.swap(k, best);
            }
            let pivot = a[k * n + k];
            for i in k + 1..n {
                let f = a[i * n + k] / pivot;
                a[i * n + k] = f;
                for j in k + 1..n {
                    let akj = a[k * n + j];
                    a[i * n + j] -= f * akj;
                }
            }
        }
        true
    }

    /// Solves `A X = B` given the LU factors of `A`; `b` is `n × cols`.
    pub fn lu_solve(lu: &[C64], n: usize, piv: &[usize], b: &[C64], cols: usize) -> Vec<C64> {
        let mut x = vec![C64::new(0.0, 0.0); n * cols];
        for i in 0..n {
            for c in 0..cols {
                x[i * cols + c] = b[piv[i] * cols + c];
            }
        }
        for c in 0..cols {
            for i in 0..n {
                let mut s = x[i * cols + c];
                for j in 0..i {
                    s -= lu[i * n + j] * x[j * cols + c];
                }
                x[i * cols + c] = s;
            }
            for i in (0..n).rev() {
                let mut s = x[i * cols + c];
                for j in i + 1..n {
                    s -= lu[i * n + j] * x[j * cols + c];
                }
                x[i * cols + c] = s / lu[i * n + i];
            }
        }
        x
    }

    pub fn identity(n: usize) -> Vec<C64> {
        let mut e = vec![C64::new(0.0, 0.0); n * n];
        for i in 0..n {
            e[i * n + i] = C64::new(1.0, 0.0);
        }
        e
    }

    /// Max absolute column sum.
    pub fn norm1(a: &[C64], n: usize) -> f64 {
        (0..n)
            .map(|j| (0..n).map(|i| a[i * n + j].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Inverse and 1-norm condition number; `None` if exactly singular.
    pub fn inverse_with_cond(a: &[C64], n: usize) -> Option<(Vec<C64>, f64)> {
        let mut lu = a.to_vec();
        let mut piv = vec![0; n];
        if !lu_factor(&mut lu, n, &mut piv) {
            return None;
        }
        let inv = lu_solve(&lu, n, &piv, &identity(n), n);
        let cond = norm1(a, n) * norm1(&inv, n);
        Some((inv, cond))
    }
}
