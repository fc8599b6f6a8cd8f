//! Five-point finite-difference solver for `(Δ + q) u = 0` with Dirichlet
//! data, Neumann traces and Dirichlet-to-Neumann matrices in a
//! trigonometric boundary basis.
//!
//! Boundary nodes run counterclockwise from the bottom-left corner: bottom
//! side `i = 0..nx-1`, right side `j = 1..ny-1`, top side `i = nx-2..0`,
//! left side `j = ny-2..1`.

use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{
    read_complex_pairs, read_grid_header, read_u32, truncated, write_complex_pairs, write_grid_header, ComplexField,
    Grid2D, CGO2_MAGIC,
};
use crate::linalg::{BandedLdlt, Cholesky};
use crate::scalar::Real;

/// Pivot ratio above which the discrete operator is treated as singular.
pub const MAX_PIVOT_RATIO: f64 = 1e12;

/// Boundary node indices in counterclockwise order.
pub fn boundary_nodes<T: Real>(g: &Grid2D<T>) -> Vec<(usize, usize)> {
    let (nx, ny) = (g.nx, g.ny);
    let mut b = Vec::with_capacity(2 * (nx + ny) - 4);
    b.extend((0..nx).map(|i| (i, 0)));
    b.extend((1..ny).map(|j| (nx - 1, j)));
    b.extend((0..nx - 1).rev().map(|i| (i, ny - 1)));
    b.extend((1..ny - 1).rev().map(|j| (0, j)));
    b
}

fn is_corner(i: usize, j: usize, nx: usize, ny: usize) -> bool {
    (i == 0 || i == nx - 1) && (j == 0 || j == ny - 1)
}

/// Arc-length weight of each boundary node: the spacing along the side,
/// `(hx + hy)/2` at corners.
pub fn boundary_weights<T: Real>(g: &Grid2D<T>) -> Vec<T> {
    boundary_nodes(g)
        .into_iter()
        .map(|(i, j)| {
            if is_corner(i, j, g.nx, g.ny) {
                T::lit(0.5) * (g.hx + g.hy)
            } else if j == 0 || j == g.ny - 1 {
                g.hx
            } else {
                g.hy
            }
        })
        .collect()
}

/// Arc-length position of each boundary node and the perimeter.
pub fn arc_length<T: Real>(g: &Grid2D<T>) -> (Vec<T>, T) {
    let lx = g.xmax - g.xmin;
    let ly = g.ymax - g.ymin;
    let s = boundary_nodes(g)
        .into_iter()
        .enumerate()
        .map(|(k, (i, j))| {
            if k < g.nx {
                T::of(i) * g.hx
            } else if k < g.nx + g.ny - 1 {
                lx + T::of(j) * g.hy
            } else if k < 2 * g.nx + g.ny - 2 {
                lx + ly + T::of(g.nx - 1 - i) * g.hx
            } else {
                lx + lx + ly + T::of(g.ny - 1 - j) * g.hy
            }
        })
        .collect();
    (s, T::lit(2.0) * (lx + ly))
}

/// Values on the ordered boundary nodes with arc-length weights.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryFunction<T> {
    pub grid: Grid2D<T>,
    pub values: Vec<Complex<T>>,
    pub weights: Vec<T>,
}

impl<T: Real> BoundaryFunction<T> {
    pub fn new(grid: Grid2D<T>, values: Vec<Complex<T>>) -> Result<Self> {
        let weights = boundary_weights(&grid);
        if values.len() != weights.len() {
            return Err(Error::InvalidParameter(format!(
                "boundary function has {} values, grid has {} boundary nodes",
                values.len(),
                weights.len()
            )));
        }
        Ok(Self { grid, values, weights })
    }

    pub fn from_fn(grid: Grid2D<T>, f: impl Fn(Complex<T>) -> Complex<T>) -> Self {
        let values = boundary_nodes(&grid).into_iter().map(|(i, j)| f(grid.z(i, j))).collect();
        Self { grid, values, weights: boundary_weights(&grid) }
    }

    /// Restriction of a field to the boundary.
    pub fn trace(u: &ComplexField<T>) -> Self {
        let g = u.grid;
        let values = boundary_nodes(&g).into_iter().map(|(i, j)| u.at(i, j)).collect();
        Self { grid: g, values, weights: boundary_weights(&g) }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Weighted L^2 norm along the boundary.
    pub fn norm(&self) -> T {
        self.values
            .iter()
            .zip(&self.weights)
            .fold(T::zero(), |a, (v, w)| a + v.norm_sqr() * *w)
            .sqrt()
    }

    /// Bilinear pairing `Σ w f g` (no conjugation).
    pub fn pair(&self, other: &Self) -> Complex<T> {
        self.values
            .iter()
            .zip(&other.values)
            .zip(&self.weights)
            .fold(Complex::new(T::zero(), T::zero()), |a, ((f, g), w)| a + *f * *g * *w)
    }
}

/// Trigonometric modes in the arc-length parameter: `1`, then
/// `cos(2πms/P), sin(2πms/P)` for `m = 1, 2, ...`.
#[derive(Debug, Clone)]
pub struct BoundaryBasis<T: Real> {
    pub grid: Grid2D<T>,
    pub modes: usize,
    /// Row-major `nb x M` samples.
    phi: Vec<T>,
    weights: Vec<T>,
    gram: Vec<T>,
    chol: Cholesky<T>,
}

impl<T: Real> BoundaryBasis<T> {
    pub fn new(grid: Grid2D<T>, modes: usize) -> Result<Self> {
        let nb = 2 * (grid.nx + grid.ny) - 4;
        if modes == 0 || modes > nb / 4 {
            return Err(Error::InvalidParameter(format!(
                "mode count {modes} must be in 1..={} for {nb} boundary nodes",
                nb / 4
            )));
        }
        let (s, p) = arc_length(&grid);
        let two_pi = T::lit(2.0) * T::PI();
        let mut phi = vec![T::zero(); nb * modes];
        for (r, sv) in s.iter().enumerate() {
            for k in 0..modes {
                let m = T::of(k.div_ceil(2));
                let arg = two_pi * m * *sv / p;
                phi[r * modes + k] = if k == 0 {
                    T::one()
                } else if k % 2 == 1 {
                    arg.cos()
                } else {
                    arg.sin()
                };
            }
        }
        let weights = boundary_weights(&grid);
        let mut gram = vec![T::zero(); modes * modes];
        for a in 0..modes {
            for b in 0..modes {
                let mut acc = T::zero();
                for r in 0..nb {
                    acc = acc + phi[r * modes + a] * phi[r * modes + b] * weights[r];
                }
                gram[a * modes + b] = acc;
            }
        }
        let chol = Cholesky::new(&gram, modes)?;
        Ok(Self { grid, modes, phi, weights, gram, chol })
    }

    /// Human-readable description of the basis ordering.
    pub fn descriptor(&self) -> String {
        format!("trig_arclength(const,cos1,sin1,...;M={})", self.modes)
    }

    pub fn mode(&self, k: usize) -> BoundaryFunction<T> {
        let nb = self.weights.len();
        let values = (0..nb).map(|r| Complex::new(self.phi[r * self.modes + k], T::zero())).collect();
        BoundaryFunction { grid: self.grid, values, weights: self.weights.clone() }
    }

    /// Weighted least-squares coefficients `G^{-1} Φ^T W f`.
    pub fn project(&self, f: &BoundaryFunction<T>) -> Result<Vec<Complex<T>>> {
        if f.grid != self.grid {
            return Err(Error::BasisMismatch("boundary function lives on another grid".into()));
        }
        let m = self.modes;
        let mut rhs = vec![Complex::new(T::zero(), T::zero()); m];
        for (r, (v, w)) in f.values.iter().zip(&self.weights).enumerate() {
            let vw = *v * *w;
            for (k, acc) in rhs.iter_mut().enumerate() {
                *acc = *acc + vw * self.phi[r * m + k];
            }
        }
        Ok(self.chol.solve(&rhs))
    }

    pub fn reconstruct(&self, coeffs: &[Complex<T>]) -> BoundaryFunction<T> {
        let m = self.modes;
        let nb = self.weights.len();
        let values = (0..nb)
            .map(|r| {
                coeffs
                    .iter()
                    .enumerate()
                    .fold(Complex::new(T::zero(), T::zero()), |a, (k, c)| a + *c * self.phi[r * m + k])
            })
            .collect();
        BoundaryFunction { grid: self.grid, values, weights: self.weights.clone() }
    }

    /// Relative weighted error of projecting `f` onto the basis.
    pub fn projection_error(&self, f: &BoundaryFunction<T>) -> Result<T> {
        let c = self.project(f)?;
        let r = self.reconstruct(&c);
        let mut num = T::zero();
        for ((a, b), w) in f.values.iter().zip(&r.values).zip(&self.weights) {
            num = num + (*a - *b).norm_sqr() * *w;
        }
        let den = f.norm();
        Ok(if den > T::zero() { num.sqrt() / den } else { T::zero() })
    }

    /// Gram matrix `Φ^T W Φ` (row-major).
    pub fn gram(&self) -> &[T] {
        &self.gram
    }

    /// `a^T G b`.
    pub fn pair_coeffs(&self, a: &[Complex<T>], b: &[Complex<T>]) -> Complex<T> {
        let m = self.modes;
        let mut s = Complex::new(T::zero(), T::zero());
        for r in 0..m {
            let mut row = Complex::new(T::zero(), T::zero());
            for c in 0..m {
                row = row + b[c] * self.gram[r * m + c];
            }
            s = s + a[r] * row;
        }
        s
    }
}

enum Factor<T: Real> {
    Real(BandedLdlt<T>),
    Complex(BandedLdlt<Complex<T>>),
}

/// Factorization of the interior five-point operator `Δ_h + q`.
pub struct DirichletSolver<T: Real> {
    grid: Grid2D<T>,
    q: Vec<Complex<T>>,
    /// Interior unknowns are numbered along the shorter axis first.
    x_fast: bool,
    factor: Factor<T>,
}

impl<T: Real> DirichletSolver<T> {
    pub fn new(q: &ComplexField<T>) -> Result<Self> {
        let g = q.grid;
        let (mx, my) = (g.nx - 2, g.ny - 2);
        let x_fast = mx <= my;
        let (nf, ns) = if x_fast { (mx, my) } else { (my, mx) };
        let (hf, hs) = if x_fast { (g.hx, g.hy) } else { (g.hy, g.hx) };
        let (cf, cs) = (T::one() / (hf * hf), T::one() / (hs * hs));
        let diag = -(cf + cs) * T::lit(2.0);
        let node = move |p: usize| -> (usize, usize) {
            let (a, b) = (p % nf + 1, p / nf + 1);
            if x_fast {
                (a, b)
            } else {
                (b, a)
            }
        };
        let n = nf * ns;
        let factor = if q.is_real() {
            let entry = |p: usize, k: usize| -> T {
                if p == k {
                    let (i, j) = node(p);
                    diag + q.at(i, j).re
                } else if p - k == 1 && p % nf != 0 {
                    cf
                } else if p - k == nf {
                    cs
                } else {
                    T::zero()
                }
            };
            Factor::Real(BandedLdlt::factor(n, nf, entry, MAX_PIVOT_RATIO)?)
        } else {
            let zero = Complex::new(T::zero(), T::zero());
            let entry = |p: usize, k: usize| -> Complex<T> {
                if p == k {
                    let (i, j) = node(p);
                    q.at(i, j) + diag
                } else if p - k == 1 && p % nf != 0 {
                    Complex::new(cf, T::zero())
                } else if p - k == nf {
                    Complex::new(cs, T::zero())
                } else {
                    zero
                }
            };
            Factor::Complex(BandedLdlt::factor(n, nf, entry, MAX_PIVOT_RATIO)?)
        };
        Ok(Self { grid: g, q: q.values.clone(), x_fast, factor })
    }

    pub fn grid(&self) -> Grid2D<T> {
        self.grid
    }

    fn interior_index(&self, i: usize, j: usize) -> usize {
        let (mx, my) = (self.grid.nx - 2, self.grid.ny - 2);
        if self.x_fast {
            (j - 1) * mx + (i - 1)
        } else {
            (i - 1) * my + (j - 1)
        }
    }

    /// Solution with boundary values `f`; the interior satisfies the
    /// five-point scheme.
    pub fn solve(&self, f: &BoundaryFunction<T>) -> Result<ComplexField<T>> {
        let g = self.grid;
        if f.grid != g {
            return Err(Error::IncompatibleGrids("boundary data lives on another grid".into()));
        }
        let mut u = ComplexField::zeros(g);
        for ((i, j), v) in boundary_nodes(&g).into_iter().zip(&f.values) {
            u.values[g.idx(i, j)] = *v;
        }
        let (cx, cy) = (T::one() / (g.hx * g.hx), T::one() / (g.hy * g.hy));
        let n = (g.nx - 2) * (g.ny - 2);
        let zero = Complex::new(T::zero(), T::zero());
        let mut rhs = vec![zero; n];
        for j in 1..g.ny - 1 {
            for i in 1..g.nx - 1 {
                let mut r = zero;
                if i == 1 {
                    r = r - u.at(0, j) * cx;
                }
                if i == g.nx - 2 {
                    r = r - u.at(g.nx - 1, j) * cx;
                }
                if j == 1 {
                    r = r - u.at(i, 0) * cy;
                }
                if j == g.ny - 2 {
                    r = r - u.at(i, g.ny - 1) * cy;
                }
                rhs[self.interior_index(i, j)] = r;
            }
        }
        match &self.factor {
            Factor::Real(f) => {
                let mut re: Vec<T> = rhs.iter().map(|v| v.re).collect();
                f.solve_in_place(&mut re);
                let mut im: Vec<T> = rhs.iter().map(|v| v.im).collect();
                if im.iter().any(|v| *v != T::zero()) {
                    f.solve_in_place(&mut im);
                }
                for (r, (a, b)) in rhs.iter_mut().zip(re.into_iter().zip(im)) {
                    *r = Complex::new(a, b);
                }
            }
            Factor::Complex(f) => f.solve_in_place(&mut rhs),
        }
        for j in 1..g.ny - 1 {
            for i in 1..g.nx - 1 {
                u.values[g.idx(i, j)] = rhs[self.interior_index(i, j)];
            }
        }
        Ok(u)
    }

    /// Neumann trace of a solution computed with this solver's potential.
    pub fn neumann_trace(&self, u: &ComplexField<T>) -> Result<BoundaryFunction<T>> {
        let q = ComplexField { grid: self.grid, values: self.q.clone() };
        neumann_trace(u, &q)
    }
}

/// Solves `(Δ_h + q) u = 0`, `u = f` on the boundary.
pub fn solve_dirichlet<T: Real>(q: &ComplexField<T>, f: &BoundaryFunction<T>) -> Result<ComplexField<T>> {
    DirichletSolver::new(q)?.solve(f)
}

/// Outward normal derivative by a half-cell flux balance.
///
/// At a side node the flux through the half cell is balanced against the
/// interior neighbour, the two tangential neighbours and `q u` on the half
/// cell; corners use the quarter cell and divide by `(hx + hy)/2`. With this
/// trace the discrete Green identity holds exactly, so the DtN matrix of a
/// real potential is symmetric to rounding.
pub fn neumann_trace<T: Real>(u: &ComplexField<T>, q: &ComplexField<T>) -> Result<BoundaryFunction<T>> {
    let g = u.grid;
    if q.grid != g {
        return Err(Error::IncompatibleGrids("potential and solution grids differ".into()));
    }
    let (nx, ny) = (g.nx, g.ny);
    let half = T::lit(0.5);
    let mut values = Vec::with_capacity(2 * (nx + ny) - 4);
    for (i, j) in boundary_nodes(&g) {
        let ub = u.at(i, j);
        let qb = q.at(i, j);
        let v = if is_corner(i, j, nx, ny) {
            let si = if i == 0 { 1 } else { nx - 2 };
            let sj = if j == 0 { 1 } else { ny - 2 };
            let f = -(qb * ub * (g.hx * g.hy * T::lit(0.25)))
                - (u.at(si, j) - ub) * (half * g.hy / g.hx)
                - (u.at(i, sj) - ub) * (half * g.hx / g.hy);
            f / (half * (g.hx + g.hy))
        } else {
            // Normal spacing, tangential spacing, interior and tangential neighbours.
            let (hn, ht, inner, t1, t2) = if j == 0 {
                (g.hy, g.hx, u.at(i, 1), u.at(i - 1, j), u.at(i + 1, j))
            } else if j == ny - 1 {
                (g.hy, g.hx, u.at(i, ny - 2), u.at(i - 1, j), u.at(i + 1, j))
            } else if i == 0 {
                (g.hx, g.hy, u.at(1, j), u.at(i, j - 1), u.at(i, j + 1))
            } else {
                (g.hx, g.hy, u.at(nx - 2, j), u.at(i, j - 1), u.at(i, j + 1))
            };
            -(qb * ub * (hn * half)) - (inner - ub) / hn - (t1 + t2 - ub * T::lit(2.0)) * (hn / (T::lit(2.0) * ht * ht))
        };
        values.push(v);
    }
    BoundaryFunction::new(g, values)
}

/// One-sided second-order normal difference; corners average the two side
/// normals. Kept for comparison with [`neumann_trace`].
pub fn neumann_trace_one_sided<T: Real>(u: &ComplexField<T>) -> BoundaryFunction<T> {
    let g = u.grid;
    let (nx, ny) = (g.nx, g.ny);
    let d = |b: Complex<T>, p1: Complex<T>, p2: Complex<T>, h: T| (b * T::lit(3.0) - p1 * T::lit(4.0) + p2) / (h * T::lit(2.0));
    let bottom = |i: usize| d(u.at(i, 0), u.at(i, 1), u.at(i, 2), g.hy);
    let top = |i: usize| d(u.at(i, ny - 1), u.at(i, ny - 2), u.at(i, ny - 3), g.hy);
    let left = |j: usize| d(u.at(0, j), u.at(1, j), u.at(2, j), g.hx);
    let right = |j: usize| d(u.at(nx - 1, j), u.at(nx - 2, j), u.at(nx - 3, j), g.hx);
    let half = T::lit(0.5);
    let values = boundary_nodes(&g)
        .into_iter()
        .map(|(i, j)| match (i, j) {
            (0, 0) => (bottom(0) + left(0)) * half,
            (i, 0) if i == nx - 1 => (bottom(i) + right(0)) * half,
            (0, j) if j == ny - 1 => (top(0) + left(j)) * half,
            (i, j) if i == nx - 1 && j == ny - 1 => (top(i) + right(j)) * half,
            (i, 0) => bottom(i),
            (i, j) if j == ny - 1 => top(i),
            (0, j) => left(j),
            (_, j) => right(j),
        })
        .collect();
    BoundaryFunction { grid: g, values, weights: boundary_weights(&g) }
}

/// Dirichlet-to-Neumann matrix: column `k` holds the basis coefficients of
/// the Neumann trace of the solution with Dirichlet data equal to mode `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct DtNMap<T> {
    pub grid: Grid2D<T>,
    pub modes: usize,
    /// Row-major `M x M`.
    pub matrix: Vec<Complex<T>>,
}

impl<T: Real> DtNMap<T> {
    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Complex<T> {
        self.matrix[r * self.modes + c]
    }

    pub fn basis(&self) -> Result<BoundaryBasis<T>> {
        BoundaryBasis::new(self.grid, self.modes)
    }

    pub fn same_basis(&self, other: &Self) -> bool {
        self.grid == other.grid && self.modes == other.modes
    }

    /// `Λ a`.
    pub fn apply(&self, a: &[Complex<T>]) -> Vec<Complex<T>> {
        let m = self.modes;
        (0..m)
            .map(|r| (0..m).fold(Complex::new(T::zero(), T::zero()), |s, c| s + self.get(r, c) * a[c]))
            .collect()
    }

    /// Coefficient norm of column `k`.
    pub fn column_norm(&self, k: usize) -> T {
        (0..self.modes).fold(T::zero(), |s, r| s + self.get(r, k).norm_sqr()).sqrt()
    }

    pub fn frobenius_distance(&self, other: &Self) -> Result<T> {
        if !self.same_basis(other) {
            return Err(Error::BasisMismatch("DtN maps use different bases".into()));
        }
        Ok(self
            .matrix
            .iter()
            .zip(&other.matrix)
            .fold(T::zero(), |s, (a, b)| s + (*a - *b).norm_sqr())
            .sqrt())
    }

    pub fn frobenius_norm(&self) -> T {
        self.matrix.iter().fold(T::zero(), |s, a| s + a.norm_sqr()).sqrt()
    }

    /// Relative asymmetry of the boundary form `(Λ a)^T G b` over all mode
    /// pairs.
    pub fn relative_asymmetry(&self) -> Result<T> {
        let basis = self.basis()?;
        let m = self.modes;
        let g = basis.gram();
        // S = G Λ; the form is symmetric iff S is.
        let mut s = vec![Complex::new(T::zero(), T::zero()); m * m];
        for r in 0..m {
            for c in 0..m {
                let mut acc = Complex::new(T::zero(), T::zero());
                for k in 0..m {
                    acc = acc + self.get(k, c) * g[r * m + k];
                }
                s[r * m + c] = acc;
            }
        }
        let mut num = T::zero();
        let mut den = T::zero();
        for r in 0..m {
            for c in 0..m {
                num = num + (s[r * m + c] - s[c * m + r]).norm_sqr();
                den = den + s[r * m + c].norm_sqr();
            }
        }
        Ok(if den > T::zero() { (num / den).sqrt() } else { T::zero() })
    }

    pub fn csv_header(&self) -> String {
        let g = &self.grid;
        format!(
            "# M={} basis=trig_arclength(const,cos1,sin1,...) nx={} ny={} bounds={:.16e},{:.16e},{:.16e},{:.16e}",
            self.modes,
            g.nx,
            g.ny,
            g.xmin.to_f64_lossy(),
            g.xmax.to_f64_lossy(),
            g.ymin.to_f64_lossy(),
            g.ymax.to_f64_lossy()
        )
    }

    /// Row-major CSV; each row lists `re,im` for every column.
    pub fn to_csv(&self) -> String {
        let m = self.modes;
        let mut s = self.csv_header();
        s.push('\n');
        let cols: Vec<String> = (0..m).flat_map(|c| [format!("re_{c}"), format!("im_{c}")]).collect();
        s.push_str(&cols.join(","));
        s.push('\n');
        for r in 0..m {
            let row: Vec<String> = (0..m)
                .flat_map(|c| {
                    let v = self.get(r, c);
                    [format!("{:.16e}", v.re.to_f64_lossy()), format!("{:.16e}", v.im.to_f64_lossy())]
                })
                .collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }

    /// CGO2 container with a `DTN1` sub-magic, the mode count, the grid
    /// header and the matrix entries.
    pub fn write_binary<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(CGO2_MAGIC)?;
        w.write_all(DTN_MAGIC)?;
        w.write_all(&(self.modes as u32).to_le_bytes())?;
        write_grid_header(w, &self.grid)?;
        write_complex_pairs(w, &self.matrix)
    }

    pub fn read_binary<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic[..4] != CGO2_MAGIC || &magic[4..] != DTN_MAGIC {
            return Err(Error::Format(format!("wrong magic {magic:?}")));
        }
        let modes = read_u32(r)? as usize;
        let grid = read_grid_header::<T, R>(r)?;
        let matrix = read_complex_pairs(r, modes * modes)?;
        Ok(Self { grid, modes, matrix })
    }

    pub fn write_binary_file(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_binary(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

const DTN_MAGIC: &[u8; 4] = b"DTN1";

/// Assembles the `M x M` DtN matrix of `q` on `q.grid`.
pub fn assemble_dtn<T: Real>(q: &ComplexField<T>, modes: usize) -> Result<DtNMap<T>> {
    let basis = BoundaryBasis::new(q.grid, modes)?;
    let solver = DirichletSolver::new(q).map_err(|e| annotate(e, "factorization"))?;
    assemble_dtn_with(&solver, &basis)
}

fn annotate(e: Error, what: &str) -> Error {
    match e {
        Error::Singular(m) => Error::Singular(format!("{what}: {m}")),
        other => other,
    }
}

/// Columns are solved in parallel against the shared factorization.
pub fn assemble_dtn_with<T: Real>(solver: &DirichletSolver<T>, basis: &BoundaryBasis<T>) -> Result<DtNMap<T>> {
    let m = basis.modes;
    let columns: Vec<Result<Vec<Complex<T>>>> = (0..m)
        .into_par_iter()
        .map(|k| {
            let u = solver.solve(&basis.mode(k)).map_err(|e| annotate(e, &format!("mode {k}")))?;
            let n = solver.neumann_trace(&u)?;
            basis.project(&n)
        })
        .collect();
    let mut matrix = vec![Complex::new(T::zero(), T::zero()); m * m];
    for (k, col) in columns.into_iter().enumerate() {
        let col = col?;
        for r in 0..m {
            matrix[r * m + k] = col[r];
        }
    }
    Ok(DtNMap { grid: basis.grid, modes: m, matrix })
}

/// Errors of the manufactured solution `u* = 2 + sin(πx1) sin(πx2)` with
/// `q = -Δu*/u*` on one grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManufacturedError<T> {
    pub n: usize,
    /// Interior L^2 error of `u`.
    pub solution: T,
    /// Weighted boundary L^2 error of the Neumann trace.
    pub trace: T,
}

pub fn manufactured_error<T: Real>(n: usize, half_side: T) -> Result<ManufacturedError<T>> {
    let g = Grid2D::square(n, half_side)?;
    let pi = T::PI();
    let s = pi / half_side;
    let exact = |z: Complex<T>| T::lit(2.0) + (s * z.re).sin() * (s * z.im).sin();
    let q = ComplexField::from_fn(g, |z| {
        let sn = (s * z.re).sin() * (s * z.im).sin();
        Complex::new(T::lit(2.0) * s * s * sn / exact(z), T::zero())
    });
    let f = BoundaryFunction::from_fn(g, |z| Complex::new(exact(z), T::zero()));
    let solver = DirichletSolver::new(&q)?;
    let u = solver.solve(&f)?;
    let err = u.zip(&ComplexField::from_fn(g, |z| Complex::new(exact(z), T::zero())), |a, b| a - b);
    let trace = solver.neumann_trace(&u)?;
    let exact_trace = BoundaryFunction::from_fn(g, |z| {
        // Outward normal derivative; at corners the two sides vanish alike.
        let dx = s * (s * z.re).cos() * (s * z.im).sin();
        let dy = s * (s * z.re).sin() * (s * z.im).cos();
        let eps = T::lit(1e-9) * half_side;
        let nx = if fabs_pos(z.re - half_side) < eps {
            T::one()
        } else if fabs_pos(z.re + half_side) < eps {
            -T::one()
        } else {
            T::zero()
        };
        let ny = if fabs_pos(z.im - half_side) < eps {
            T::one()
        } else if fabs_pos(z.im + half_side) < eps {
            -T::one()
        } else {
            T::zero()
        };
        Complex::new(dx * nx + dy * ny, T::zero())
    });
    let mut tr = T::zero();
    for ((a, b), w) in trace.values.iter().zip(&exact_trace.values).zip(&trace.weights) {
        tr = tr + (*a - *b).norm_sqr() * *w;
    }
    Ok(ManufacturedError { n, solution: err.norm_l2(), trace: tr.sqrt() })
}

fn fabs_pos<T: Real>(x: T) -> T {
    crate::scalar::fabs(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{sample_potential, PotentialSpec};

    #[test]
    fn boundary_ordering() {
        let g = Grid2D::<f64>::new(8, 9, [0.0, 1.0, 0.0, 2.0]).unwrap();
        let b = boundary_nodes(&g);
        assert_eq!(b.len(), 2 * (8 + 9) - 4);
        assert_eq!(b[0], (0, 0));
        assert_eq!(b[7], (7, 0));
        assert_eq!(b[8], (7, 1));
        assert_eq!(b[15], (7, 8));
        assert_eq!(b[16], (6, 8));
        assert_eq!(*b.last().unwrap(), (0, 1));
        let mut seen = b.clone();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), b.len());
        let total: f64 = boundary_weights(&g).iter().sum();
        assert!((total - 6.0).abs() < 1e-12);
        let (s, p) = arc_length(&g);
        assert_eq!(p, 6.0);
        assert!(s.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn linear_and_constant_data_are_reproduced() {
        let g = Grid2D::<f64>::new(17, 13, [-1.0, 1.0, -0.5, 1.0]).unwrap();
        let q = ComplexField::zeros(g);
        let f = BoundaryFunction::from_fn(g, |z| Complex::new(z.re, 0.0));
        let u = solve_dirichlet(&q, &f).unwrap();
        for j in 0..g.ny {
            for i in 0..g.nx {
                assert!((u.at(i, j) - Complex::new(g.x(i), 0.0)).norm() < 1e-10);
            }
        }
        let n = neumann_trace(&u, &q).unwrap();
        for ((i, j), v) in boundary_nodes(&g).into_iter().zip(&n.values) {
            if is_corner(i, j, g.nx, g.ny) {
                continue;
            }
            let expect = if i == 0 { -1.0 } else if i == g.nx - 1 { 1.0 } else { 0.0 };
            assert!((v.re - expect).abs() < 1e-10, "({i},{j}) {v}");
        }
        let one = BoundaryFunction::from_fn(g, |_| Complex::new(1.0, 0.0));
        let u1 = solve_dirichlet(&q, &one).unwrap();
        assert!(u1.values.iter().all(|v| (v - Complex::new(1.0, 0.0)).norm() < 1e-12));
        assert!(neumann_trace(&u1, &q).unwrap().values.iter().all(|v| v.norm() < 1e-10));
        let os = neumann_trace_one_sided(&u);
        assert!((os.values[g.nx + 3].re - 1.0).abs() < 1e-10);
    }

    #[test]
    fn complex_potential_path() {
        let g = Grid2D::<f64>::square(15, 1.0).unwrap();
        let q = ComplexField::from_fn(g, |z| Complex::new(1.0 + z.re, 0.5 * z.im));
        let f = BoundaryFunction::from_fn(g, |z| Complex::new(z.im, z.re));
        let u = solve_dirichlet(&q, &f).unwrap();
        let (cx, cy) = (1.0 / (g.hx * g.hx), 1.0 / (g.hy * g.hy));
        for j in 1..g.ny - 1 {
            for i in 1..g.nx - 1 {
                let lap = (u.at(i + 1, j) + u.at(i - 1, j) - u.at(i, j) * 2.0) * cx
                    + (u.at(i, j + 1) + u.at(i, j - 1) - u.at(i, j) * 2.0) * cy;
                assert!((lap + q.at(i, j) * u.at(i, j)).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn eigenvalue_collision_is_reported() {
        let n = 17;
        let g = Grid2D::<f64>::square(n, 1.0).unwrap();
        let h = g.hx;
        let lam = 2.0 * (4.0 / (h * h)) * (std::f64::consts::PI * h / 4.0).sin().powi(2);
        let q = ComplexField::constant(g, Complex::new(lam, 0.0));
        let f = BoundaryFunction::from_fn(g, |_| Complex::new(1.0, 0.0));
        assert!(matches!(solve_dirichlet(&q, &f), Err(Error::Singular(_))));
    }

    #[test]
    fn dtn_zero_potential_constant_mode() {
        let g = Grid2D::<f64>::square(33, 1.0).unwrap();
        let d = assemble_dtn(&ComplexField::zeros(g), 16).unwrap();
        assert!(d.column_norm(0) < 1e-8);
        assert!(d.relative_asymmetry().unwrap() < 1e-10);
        assert!(assemble_dtn(&ComplexField::zeros(g), 33).is_err());
    }

    #[test]
    fn dtn_binary_and_csv() {
        let g = Grid2D::<f64>::square(17, 1.0).unwrap();
        let q = sample_potential(&PotentialSpec::gaussian(1.0, [0.0, 0.0], 0.3), g).unwrap();
        let d = assemble_dtn(&q, 8).unwrap();
        let mut buf = Vec::new();
        d.write_binary(&mut buf).unwrap();
        let back = DtNMap::<f64>::read_binary(&mut buf.as_slice()).unwrap();
        assert_eq!(back, d);
        assert!(DtNMap::<f64>::read_binary(&mut &buf[..buf.len() - 1]).is_err());
        let csv = d.to_csv();
        assert!(csv.starts_with("# M=8 basis="));
        assert_eq!(csv.lines().count(), 2 + 8);
    }

    #[test]
    fn projection_is_exact_on_modes() {
        let g = Grid2D::<f64>::square(33, 1.0).unwrap();
        let b = BoundaryBasis::new(g, 12).unwrap();
        let mut f = b.mode(5);
        for (v, m) in f.values.iter_mut().zip(&b.mode(2).values) {
            *v = *v * 2.0 + *m * Complex::new(0.0, 1.0);
        }
        let c = b.project(&f).unwrap();
        for (k, v) in c.iter().enumerate() {
            let e = match k {
                5 => Complex::new(2.0, 0.0),
                2 => Complex::new(0.0, 1.0),
                _ => Complex::new(0.0, 0.0),
            };
            assert!((v - e).norm() < 1e-12);
        }
        assert!(b.projection_error(&f).unwrap() < 1e-12);
    }
}
