//! Small dense and banded direct solvers.

use num_complex::Complex;
use num_traits::NumAssign;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Scalars the banded factorization can work in.
pub trait BandScalar: Copy + NumAssign + Send + Sync + std::fmt::Debug + 'static {
    fn modulus(self) -> f64;
}

macro_rules! band_real {
    ($($t:ty),*) => {$(
        impl BandScalar for $t {
            #[inline]
            fn modulus(self) -> f64 {
                (self as f64).abs()
            }
        }
    )*};
}
band_real!(f32, f64);

impl<T: Real> BandScalar for Complex<T> {
    #[inline]
    fn modulus(self) -> f64 {
        self.norm().to_f64_lossy()
    }
}

/// `A = L D L^T` for a symmetric (not Hermitian) banded matrix, without
/// pivoting.
///
/// Row `i` of `L` stores entries `k = i-b .. i-1` contiguously.
#[derive(Debug, Clone)]
pub struct BandedLdlt<S> {
    n: usize,
    b: usize,
    band: Vec<S>,
    d: Vec<S>,
}

impl<S: BandScalar> BandedLdlt<S> {
    /// Factors the `n x n` matrix with half-bandwidth `b`, where
    /// `entry(i, k)` returns `A[i][k]` for `i - b <= k <= i`.
    ///
    /// Fails when `max|d| / min|d|` exceeds `max_pivot_ratio`.
    pub fn factor(n: usize, b: usize, entry: impl Fn(usize, usize) -> S, max_pivot_ratio: f64) -> Result<Self> {
        let b = b.max(1);
        let mut band = vec![S::zero(); n * b];
        let mut d = vec![S::zero(); n];
        let mut w = vec![S::zero(); b];
        for i in 0..n {
            let lo = i.saturating_sub(b);
            let width = i - lo;
            for jj in 0..width {
                let j = lo + jj;
                let mut s = entry(i, j);
                let row_j = &band[j * b + (lo + b - j)..j * b + b];
                let mut acc = S::zero();
                for (x, y) in w[..jj].iter().zip(row_j) {
                    acc += *x * *y;
                }
                s -= acc;
                w[jj] = s;
                band[i * b + (j + b - i)] = s / d[j];
            }
            let row_i = &band[i * b + (b - width)..i * b + b];
            let mut acc = S::zero();
            for (x, y) in w[..width].iter().zip(row_i) {
                acc += *x * *y;
            }
            d[i] = entry(i, i) - acc;
            let m = d[i].modulus();
            if m == 0.0 || !m.is_finite() {
                return Err(Error::Singular(format!("zero pivot at unknown {i} of {n}")));
            }
        }
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for v in &d {
            let m = v.modulus();
            lo = lo.min(m);
            hi = hi.max(m);
        }
        if hi / lo > max_pivot_ratio {
            return Err(Error::Singular(format!(
                "pivot ratio {:.3e} exceeds {:.1e}",
                hi / lo,
                max_pivot_ratio
            )));
        }
        Ok(Self { n, b, band, d })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Ratio of the largest to the smallest pivot magnitude.
    pub fn pivot_ratio(&self) -> f64 {
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for v in &self.d {
            lo = lo.min(v.modulus());
            hi = hi.max(v.modulus());
        }
        hi / lo
    }

    /// Overwrites `x` (the right-hand side) with `A^{-1} x`.
    pub fn solve_in_place(&self, x: &mut [S]) {
        assert_eq!(x.len(), self.n);
        let b = self.b;
        for i in 0..self.n {
            let lo = i.saturating_sub(b);
            let row = &self.band[i * b + (lo + b - i)..i * b + b];
            let mut acc = S::zero();
            for (l, y) in row.iter().zip(&x[lo..i]) {
                acc += *l * *y;
            }
            x[i] -= acc;
        }
        for (v, d) in x.iter_mut().zip(&self.d) {
            *v /= *d;
        }
        for i in (0..self.n).rev() {
            let lo = i.saturating_sub(b);
            let xi = x[i];
            let row = &self.band[i * b + (lo + b - i)..i * b + b];
            for (l, y) in row.iter().zip(&mut x[lo..i]) {
                *y -= *l * xi;
            }
        }
    }
}

/// Cholesky factor of a small dense symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    n: usize,
    l: Vec<T>,
}

impl<T: Real> Cholesky<T> {
    /// Factors the row-major `n x n` matrix `a`.
    pub fn new(a: &[T], n: usize) -> Result<Self> {
        assert_eq!(a.len(), n * n);
        let mut l = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s = s - l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if !(s > T::zero()) {
                        return Err(Error::Singular(format!("matrix not positive definite at row {i}")));
                    }
                    l[i * n + i] = s.sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        Ok(Self { n, l })
    }

    /// Solves `A x = rhs` for a complex right-hand side.
    pub fn solve(&self, rhs: &[Complex<T>]) -> Vec<Complex<T>> {
        let n = self.n;
        let mut x = rhs.to_vec();
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s = s - x[k] * self.l[i * n + k];
            }
            x[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s = s - x[k] * self.l[k * n + i];
            }
            x[i] = s / self.l[i * n + i];
        }
        x
    }
}
