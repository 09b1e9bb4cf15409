use std::fmt;

use num_complex::Complex;

use crate::error::{dim_err, Error, Result};
use crate::numkit::Tensor;
use crate::Scalar;

/// Dense complex matrix stored as separate real and imaginary row-major planes.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix<T> {
    rows: usize,
    cols: usize,
    re: Vec<T>,
    im: Vec<T>,
}

impl<T: Scalar> fmt::Debug for ComplexMatrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                let z = self.get(i, j);
                write!(f, "{:+.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl<T: Scalar> ComplexMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            re: vec![T::zero(); rows * cols],
            im: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.re[i * n + i] = T::one();
        }
        m
    }

    pub fn from_parts(rows: usize, cols: usize, re: Vec<T>, im: Vec<T>) -> Result<Self> {
        if re.len() != rows * cols || im.len() != rows * cols {
            return Err(dim_err(format!(
                "{rows}x{cols} complex matrix from planes of length {} / {}",
                re.len(),
                im.len()
            )));
        }
        Ok(Self { rows, cols, re, im })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex<T>) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn re(&self) -> &[T] {
        &self.re
    }

    pub fn im(&self) -> &[T] {
        &self.im
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex<T> {
        let k = i * self.cols + j;
        Complex::new(self.re[k], self.im[k])
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, z: Complex<T>) {
        let k = i * self.cols + j;
        self.re[k] = z.re;
        self.im[k] = z.im;
    }

    pub fn map(&self, f: impl Fn(Complex<T>) -> Complex<T>) -> Self {
        Self::from_fn(self.rows, self.cols, |i, j| f(self.get(i, j)))
    }

    pub fn is_finite(&self) -> bool {
        self.re.iter().chain(&self.im).all(|x| x.is_finite())
    }

    /// Conjugate transpose.
    pub fn h(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i).conj())
    }

    /// Plain transpose.
    pub fn t(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn conj(&self) -> Self {
        self.map(|z| z.conj())
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(dim_err(format!(
                "complex matmul of {}x{} and {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for p in 0..self.cols {
                let a = self.get(i, p);
                for j in 0..other.cols {
                    let k = i * other.cols + j;
                    let b = other.get(p, j);
                    out.re[k] += a.re * b.re - a.im * b.im;
                    out.im[k] += a.re * b.im + a.im * b.re;
                }
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a - b)
    }

    fn zip(&self, other: &Self, f: impl Fn(Complex<T>, Complex<T>) -> Complex<T>) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(dim_err(format!(
                "element-wise op on {}x{} and {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(Self::from_fn(self.rows, self.cols, |i, j| f(self.get(i, j), other.get(i, j))))
    }

    pub fn scale(&self, c: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            re: self.re.iter().map(|&x| x * c).collect(),
            im: self.im.iter().map(|&x| x * c).collect(),
        }
    }

    pub fn col(&self, j: usize) -> Vec<Complex<T>> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn set_col(&mut self, j: usize, v: &[Complex<T>]) {
        for (i, &z) in v.iter().enumerate() {
            self.set(i, j, z);
        }
    }

    pub fn col_norm_sq(&self, j: usize) -> T {
        (0..self.rows).map(|i| self.get(i, j).norm_sqr()).sum()
    }

    /// `Tr(AᴴA)`, the squared Frobenius norm.
    pub fn frobenius_sq(&self) -> T {
        self.re.iter().chain(&self.im).map(|&x| x * x).sum()
    }

    pub fn trace(&self) -> Complex<T> {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.re
            .iter()
            .zip(&other.re)
            .chain(self.im.iter().zip(&other.im))
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    /// Solves `self · X = rhs` by Gaussian elimination with partial pivoting.
    pub fn solve(&self, rhs: &Self) -> Result<Self> {
        let n = self.rows;
        if self.cols != n || rhs.rows != n {
            return Err(dim_err(format!(
                "solve with {}x{} system and {}x{} right-hand side",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let m = rhs.cols;
        let mut a: Vec<Complex<T>> = (0..n * n).map(|k| self.get(k / n, k % n)).collect();
        let mut b: Vec<Complex<T>> = (0..n * m).map(|k| rhs.get(k / m, k % m)).collect();
        let scale = a.iter().fold(T::zero(), |s, z| s.max(z.norm()));
        for c in 0..n {
            let piv = (c..n)
                .max_by(|&x, &y| a[x * n + c].norm().partial_cmp(&a[y * n + c].norm()).unwrap())
                .unwrap();
            let pv = a[piv * n + c];
            if pv.norm() <= scale * T::epsilon() * T::of(n as f64) || pv.norm() == T::zero() {
                return Err(Error::Numeric(format!("singular system at column {c}")));
            }
            if piv != c {
                for j in 0..n {
                    a.swap(c * n + j, piv * n + j);
                }
                for j in 0..m {
                    b.swap(c * m + j, piv * m + j);
                }
            }
            let inv = pv.inv();
            for r in c + 1..n {
                let f = a[r * n + c] * inv;
                if f == Complex::new(T::zero(), T::zero()) {
                    continue;
                }
                for j in c..n {
                    let t = a[c * n + j];
                    a[r * n + j] -= f * t;
                }
                for j in 0..m {
                    let t = b[c * m + j];
                    b[r * m + j] -= f * t;
                }
            }
        }
        let mut x = vec![Complex::new(T::zero(), T::zero()); n * m];
        for j in 0..m {
            for r in (0..n).rev() {
                let mut s = b[r * m + j];
                for c in r + 1..n {
                    s -= a[r * n + c] * x[c * m + j];
                }
                x[r * m + j] = s / a[r * n + r];
            }
        }
        Ok(Self::from_fn(n, m, |i, j| x[i * m + j]))
    }

    pub fn inverse(&self) -> Result<Self> {
        self.solve(&Self::identity(self.rows))
    }

    /// Real embedding `[[Re, -Im], [Im, Re]]` of size `2r × 2c`.
    pub fn real_embedding(&self) -> Tensor<T> {
        let (r, c) = (self.rows, self.cols);
        Tensor::from_fn(&[2 * r, 2 * c], |k| {
            let (i, j) = (k / (2 * c), k % (2 * c));
            let z = self.get(i % r, j % c);
            match (i < r, j < c) {
                (true, true) | (false, false) => z.re,
                (true, false) => -z.im,
                (false, true) => z.im,
            }
        })
    }
}

/// `aᴴ b` for complex vectors.
pub fn inner<T: Scalar>(a: &[Complex<T>], b: &[Complex<T>]) -> Complex<T> {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}
