//! Wirtinger derivatives and the solid Cauchy transforms
//! `dbar_inv g(z) = (1/pi) ∫ g(ζ) / (z - ζ) dA(ζ)` and its conjugate
//! `dz_inv g(z) = (1/pi) ∫ g(ζ) / conj(z - ζ) dA(ζ)`.

use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::grid::{ComplexField, Grid2D};
use crate::scalar::Real;

/// Which of the two transforms to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    /// Inverse of `∂_z̄`, kernel `1/(π(z-ζ))`.
    DbarInv,
    /// Inverse of `∂_z`, kernel `1/(π conj(z-ζ))`.
    DzInv,
}

/// Cauchy kernel sampled on the difference lattice of a grid, with its
/// zero-padded 2D transform cached for fast convolution.
pub struct CauchyKernelTable<T: Real> {
    grid: Grid2D<T>,
    px: usize,
    py: usize,
    /// Kernel samples `k[(dj + ny-1)*(2nx-1) + di + nx-1]` for offsets
    /// `(di, dj)`, already multiplied by the cell area.
    samples: Vec<Complex<T>>,
    /// Transformed kernels, stored transposed (`px` rows of length `py`).
    hat_dbar: Vec<Complex<T>>,
    hat_dz: Vec<Complex<T>>,
    fx: Arc<dyn Fft<T>>,
    ifx: Arc<dyn Fft<T>>,
    fy: Arc<dyn Fft<T>>,
    ify: Arc<dyn Fft<T>>,
}

impl<T: Real> std::fmt::Debug for CauchyKernelTable<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CauchyKernelTable")
            .field("grid", &self.grid)
            .field("px", &self.px)
            .field("py", &self.py)
            .finish()
    }
}

/// Smallest `m >= n` whose only prime factors are 2, 3 and 5.
pub fn smooth_size(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

/// `∫∫_{[x1,x2]x[y1,y2]} dA / (x + i y)` in closed form.
///
/// Uses the antiderivative `G(z) = -i (z log z - z)` with `∂x ∂y G = 1/z`,
/// evaluated on the closed right half-plane, reflecting or splitting the
/// rectangle so the branch cut is never crossed.
pub fn rect_integral_inv<T: Real>(x1: T, x2: T, y1: T, y2: T) -> Complex<T> {
    if x1 >= T::zero() {
        let g = |x: T, y: T| -> Complex<T> {
            let z = Complex::new(x, y);
            if z.norm() == T::zero() {
                return Complex::new(T::zero(), T::zero());
            }
            (z * z.ln() - z) * Complex::new(T::zero(), -T::one())
        };
        g(x2, y2) - g(x1, y2) - g(x2, y1) + g(x1, y1)
    } else if x2 <= T::zero() {
        -rect_integral_inv(-x2, -x1, -y2, -y1)
    } else {
        rect_integral_inv(x1, T::zero(), y1, y2) + rect_integral_inv(T::zero(), x2, y1, y2)
    }
}

/// Average of `1/(π ζ)` over the `hx x hy` cell centred at `c`.
pub fn cell_average_kernel<T: Real>(c: Complex<T>, hx: T, hy: T) -> Complex<T> {
    let half = T::lit(0.5);
    let i = rect_integral_inv(c.re - half * hx, c.re + half * hx, c.im - half * hy, c.im + half * hy);
    i / (T::PI() * hx * hy)
}

impl<T: Real> CauchyKernelTable<T> {
    pub fn new(grid: Grid2D<T>) -> Self {
        let (nx, ny) = (grid.nx, grid.ny);
        let (wx, wy) = (2 * nx - 1, 2 * ny - 1);
        let px = smooth_size(wx);
        let py = smooth_size(wy);
        let area = grid.cell_area();
        let zero = Complex::new(T::zero(), T::zero());
        let singular = cell_average_kernel(zero, grid.hx, grid.hy) * area;
        let mut samples = vec![zero; wx * wy];
        for b in 0..wy {
            for a in 0..wx {
                let di = a as isize - (nx as isize - 1);
                let dj = b as isize - (ny as isize - 1);
                samples[b * wx + a] = if di == 0 && dj == 0 {
                    singular
                } else {
                    let d = Complex::new(T::of(di.unsigned_abs()) * grid.hx, T::of(dj.unsigned_abs()) * grid.hy);
                    let d = Complex::new(
                        if di < 0 { -d.re } else { d.re },
                        if dj < 0 { -d.im } else { d.im },
                    );
                    d.inv() * (area / T::PI())
                };
            }
        }
        let mut planner = FftPlanner::new();
        let fx = planner.plan_fft_forward(px);
        let ifx = planner.plan_fft_inverse(px);
        let fy = planner.plan_fft_forward(py);
        let ify = planner.plan_fft_inverse(py);
        let mut table = Self {
            grid,
            px,
            py,
            samples,
            hat_dbar: Vec::new(),
            hat_dz: Vec::new(),
            fx,
            ifx,
            fy,
            ify,
        };
        for conj in [false, true] {
            let mut buf = vec![zero; px * py];
            for b in 0..wy {
                let dj = b as isize - (ny as isize - 1);
                let row = dj.rem_euclid(py as isize) as usize;
                for a in 0..wx {
                    let di = a as isize - (nx as isize - 1);
                    let col = di.rem_euclid(px as isize) as usize;
                    let k = table.samples[b * wx + a];
                    buf[row * px + col] = if conj { k.conj() } else { k };
                }
            }
            let hat = table.forward(buf, py);
            if conj {
                table.hat_dz = hat;
            } else {
                table.hat_dbar = hat;
            }
        }
        table
    }

    pub fn grid(&self) -> &Grid2D<T> {
        &self.grid
    }

    /// Padded transform sizes `(px, py)`.
    pub fn padded_size(&self) -> (usize, usize) {
        (self.px, self.py)
    }

    /// Kernel value (times cell area) at lattice offset `(di, dj)`.
    pub fn sample(&self, di: isize, dj: isize) -> Complex<T> {
        let wx = 2 * self.grid.nx - 1;
        let a = (di + self.grid.nx as isize - 1) as usize;
        let b = (dj + self.grid.ny as isize - 1) as usize;
        self.samples[b * wx + a]
    }

    /// Row FFTs over the first `rows` rows, then a transpose and column FFTs.
    /// Returns the spectrum in transposed layout.
    fn forward(&self, mut buf: Vec<Complex<T>>, rows: usize) -> Vec<Complex<T>> {
        let (px, py) = (self.px, self.py);
        self.fx.process(&mut buf[..rows * px]);
        let mut t = transpose(&buf, py, px);
        self.fy.process(&mut t);
        t
    }

    fn convolve(&self, g: &ComplexField<T>, which: Transform) -> ComplexField<T> {
        assert_eq!(g.grid, self.grid, "field and kernel table live on different grids");
        let (nx, ny, px, py) = (self.grid.nx, self.grid.ny, self.px, self.py);
        let zero = Complex::new(T::zero(), T::zero());
        let mut buf = vec![zero; px * py];
        for j in 0..ny {
            buf[j * px..j * px + nx].copy_from_slice(&g.values[j * nx..(j + 1) * nx]);
        }
        let mut spec = self.forward(buf, ny);
        let hat = match which {
            Transform::DbarInv => &self.hat_dbar,
            Transform::DzInv => &self.hat_dz,
        };
        for (s, k) in spec.iter_mut().zip(hat) {
            *s = *s * *k;
        }
        self.ify.process(&mut spec);
        let mut back = transpose(&spec, px, py);
        self.ifx.process(&mut back[..ny * px]);
        let norm = T::one() / T::of(px * py);
        let mut values = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            values.extend(back[j * px..j * px + nx].iter().map(|v| *v * norm));
        }
        ComplexField { grid: self.grid, values }
    }

    /// Solid Cauchy transform `∂_z̄⁻¹ g` on the whole grid rectangle.
    pub fn dbar_inv(&self, g: &ComplexField<T>) -> ComplexField<T> {
        self.convolve(g, Transform::DbarInv)
    }

    /// Conjugate transform `∂_z⁻¹ g`.
    pub fn dz_inv(&self, g: &ComplexField<T>) -> ComplexField<T> {
        self.convolve(g, Transform::DzInv)
    }

    pub fn apply(&self, g: &ComplexField<T>, which: Transform) -> ComplexField<T> {
        self.convolve(g, which)
    }

    /// Direct `O(N^2)` summation with the same kernel samples.
    pub fn apply_dense(&self, g: &ComplexField<T>, which: Transform) -> ComplexField<T> {
        let grid = self.grid;
        let (nx, ny) = (grid.nx, grid.ny);
        let zero = Complex::new(T::zero(), T::zero());
        let mut out = vec![zero; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let mut s = zero;
                for jj in 0..ny {
                    for ii in 0..nx {
                        let v = g.values[jj * nx + ii];
                        if v == zero {
                            continue;
                        }
                        let k = self.sample(i as isize - ii as isize, j as isize - jj as isize);
                        let k = if which == Transform::DzInv { k.conj() } else { k };
                        s = s + v * k;
                    }
                }
                out[j * nx + i] = s;
            }
        }
        ComplexField { grid, values: out }
    }
}

fn transpose<T: Copy>(a: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(a.len());
    for c in 0..cols {
        out.extend((0..rows).map(|r| a[r * cols + c]));
    }
    out
}

/// Second-order partial derivatives `(∂x f, ∂y f)`; one-sided at the edges.
pub fn gradient<T: Real>(f: &ComplexField<T>) -> (ComplexField<T>, ComplexField<T>) {
    let g = f.grid;
    let diff = |get: &dyn Fn(usize) -> Complex<T>, k: usize, n: usize, h: T| -> Complex<T> {
        let two_h = T::lit(2.0) * h;
        if k == 0 {
            (get(1) * T::lit(4.0) - get(0) * T::lit(3.0) - get(2)) / two_h
        } else if k == n - 1 {
            (get(n - 1) * T::lit(3.0) - get(n - 2) * T::lit(4.0) + get(n - 3)) / two_h
        } else {
            (get(k + 1) - get(k - 1)) / two_h
        }
    };
    let mut fx = Vec::with_capacity(g.len());
    let mut fy = Vec::with_capacity(g.len());
    for j in 0..g.ny {
        for i in 0..g.nx {
            fx.push(diff(&|a| f.at(a, j), i, g.nx, g.hx));
            fy.push(diff(&|b| f.at(i, b), j, g.ny, g.hy));
        }
    }
    (ComplexField { grid: g, values: fx }, ComplexField { grid: g, values: fy })
}

/// `∂_z̄ f = (∂x f + i ∂y f) / 2`.
pub fn dbar<T: Real>(f: &ComplexField<T>) -> ComplexField<T> {
    let (fx, fy) = gradient(f);
    let half = T::lit(0.5);
    fx.zip(&fy, |a, b| (a + b * Complex::i()) * half)
}

/// `∂_z f = (∂x f - i ∂y f) / 2`.
pub fn dz<T: Real>(f: &ComplexField<T>) -> ComplexField<T> {
    let (fx, fy) = gradient(f);
    let half = T::lit(0.5);
    fx.zip(&fy, |a, b| (a - b * Complex::i()) * half)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{sample_potential, PotentialSpec};

    fn max_err(a: &ComplexField<f64>, f: impl Fn(Complex<f64>) -> Complex<f64>) -> f64 {
        let g = a.grid;
        let mut m = 0.0f64;
        for j in 0..g.ny {
            for i in 0..g.nx {
                m = m.max((a.at(i, j) - f(g.z(i, j))).norm());
            }
        }
        m
    }

    #[test]
    fn wirtinger_on_linear_functions() {
        let g = Grid2D::<f64>::square(17, 1.0).unwrap();
        let z = ComplexField::from_fn(g, |z| z);
        let zb = ComplexField::from_fn(g, |z| z.conj());
        let one = |_| Complex::new(1.0, 0.0);
        let zero = |_| Complex::new(0.0, 0.0);
        assert!(max_err(&dbar(&zb), one) < 1e-10);
        assert!(max_err(&dbar(&z), zero) < 1e-10);
        assert!(max_err(&dz(&z), one) < 1e-10);
        assert!(max_err(&dz(&zb), zero) < 1e-10);
    }

    #[test]
    fn wirtinger_second_order() {
        let mut errs = Vec::new();
        for n in [33, 65, 129] {
            let g = Grid2D::<f64>::square(n, 1.0).unwrap();
            let f = ComplexField::from_fn(g, |z| (z.conj() * z.conj()).exp());
            let e1 = max_err(&dbar(&f), |z| z.conj() * 2.0 * (z.conj() * z.conj()).exp());
            let f2 = ComplexField::from_fn(g, |z| z * z);
            let e2 = max_err(&dz(&f2), |z| z * 2.0);
            errs.push(e1);
            assert!(e2 < 1e-10);
        }
        for w in errs.windows(2) {
            let r = w[0] / w[1];
            assert!(r > 3.5 && r < 4.5, "ratio {r}");
        }
    }

    #[test]
    fn singular_cell_average_is_zero_and_matches_quadrature() {
        let z = Complex::new(0.0, 0.0);
        let (hx, hy) = (0.02, 0.03);
        let closed = cell_average_kernel(z, hx, hy);
        let quad = |c: Complex<f64>| {
            let m = 100;
            let mut s = Complex::new(0.0, 0.0);
            for b in 0..m {
                for a in 0..m {
                    let p = Complex::new(
                        c.re - hx / 2.0 + (a as f64 + 0.5) * hx / m as f64,
                        c.im - hy / 2.0 + (b as f64 + 0.5) * hy / m as f64,
                    );
                    s += p.inv();
                }
            }
            s / (std::f64::consts::PI * (m * m) as f64)
        };
        assert!((closed - quad(z)).norm() < 1e-10);
        assert!(closed.norm() < 1e-10);
        // Off-centre cell: the midpoint rule is only O(1e-5) accurate here.
        let c = Complex::new(0.03, -0.05);
        let (a, b) = (cell_average_kernel(c, hx, hy), quad(c));
        assert!((a - b).norm() / a.norm() < 1e-4);
        // Far cell approaches the point value.
        let far = Complex::new(3.0, 4.0);
        let v = cell_average_kernel(far, hx, hy) * std::f64::consts::PI;
        assert!((v - far.inv()).norm() < 1e-6);
    }

    #[test]
    fn fast_path_matches_dense_sum() {
        let g = Grid2D::<f64>::square(65, 1.0).unwrap();
        let k = CauchyKernelTable::new(g);
        let f = sample_potential(&PotentialSpec::gaussian(1.0, [0.1, -0.2], 0.3), g)
            .unwrap()
            .zip(&ComplexField::from_fn(g, |z| Complex::new(z.im.cos(), z.re)), |a, b| a * b);
        for which in [Transform::DbarInv, Transform::DzInv] {
            let fast = k.apply(&f, which);
            let slow = k.apply_dense(&f, which);
            let rel = fast.sub(&slow).norm_l2() / slow.norm_l2();
            assert!(rel < 1e-11, "{which:?}: {rel}");
        }
    }

    #[test]
    fn conjugation_symmetry() {
        let g = Grid2D::<f64>::new(33, 41, [-1.0, 1.0, -0.5, 1.5]).unwrap();
        let k = CauchyKernelTable::new(g);
        let f = ComplexField::from_fn(g, |z| Complex::new((3.0 * z.re).sin(), z.im * z.re));
        let a = k.dz_inv(&f);
        let b = k.dbar_inv(&f.conj()).conj();
        assert!(a.sub(&b).max_abs() < 1e-13);
        assert_eq!(k.dbar_inv(&ComplexField::zeros(g)).max_abs(), 0.0);
    }

    #[test]
    fn smooth_sizes() {
        assert_eq!(smooth_size(513), 540);
        assert_eq!(smooth_size(257), 270);
        assert_eq!(smooth_size(7), 8);
    }
}
