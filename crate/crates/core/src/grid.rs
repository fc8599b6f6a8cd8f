//! Uniform tensor grids, sampled complex fields, potentials, mollification
//! and zero-extension.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::{fabs, Real};

/// Uniform node grid on `[xmin, xmax] x [ymin, ymax]`.
///
/// Node `(i, j)` sits at `(xmin + i*hx, ymin + j*hy)`; fields store it at
/// `j*nx + i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D<T> {
    pub nx: usize,
    pub ny: usize,
    pub xmin: T,
    pub xmax: T,
    pub ymin: T,
    pub ymax: T,
    pub hx: T,
    pub hy: T,
}

impl<T: Real> Grid2D<T> {
    /// Builds a grid from node counts and `[xmin, xmax, ymin, ymax]`.
    pub fn new(nx: usize, ny: usize, bounds: [T; 4]) -> Result<Self> {
        let [xmin, xmax, ymin, ymax] = bounds;
        if nx < 8 || ny < 8 {
            return Err(Error::InvalidGrid(format!("need nx, ny >= 8, got {nx} x {ny}")));
        }
        if !bounds.iter().all(|b| b.is_finite()) {
            return Err(Error::InvalidGrid("non-finite bounds".into()));
        }
        if !(xmax > xmin && ymax > ymin) {
            return Err(Error::InvalidGrid(format!(
                "degenerate bounds [{xmin}, {xmax}] x [{ymin}, {ymax}]"
            )));
        }
        Ok(Self {
            nx,
            ny,
            xmin,
            xmax,
            ymin,
            ymax,
            hx: (xmax - xmin) / T::of(nx - 1),
            hy: (ymax - ymin) / T::of(ny - 1),
        })
    }

    /// Square grid `(-k, k)^2` with `n` nodes per side.
    pub fn square(n: usize, k: T) -> Result<Self> {
        Self::new(n, n, [-k, k, -k, k])
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn x(&self, i: usize) -> T {
        self.xmin + T::of(i) * self.hx
    }

    #[inline]
    pub fn y(&self, j: usize) -> T {
        self.ymin + T::of(j) * self.hy
    }

    /// Node position as a complex number `x1 + i x2`.
    #[inline]
    pub fn z(&self, i: usize, j: usize) -> Complex<T> {
        Complex::new(self.x(i), self.y(j))
    }

    #[inline]
    pub fn cell_area(&self) -> T {
        self.hx * self.hy
    }

    /// Trapezoid (dual-cell) quadrature weight of node `(i, j)`.
    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> T {
        let half = T::lit(0.5);
        let wx = if i == 0 || i == self.nx - 1 { half } else { T::one() };
        let wy = if j == 0 || j == self.ny - 1 { half } else { T::one() };
        wx * wy * self.cell_area()
    }

    pub fn max_spacing(&self) -> T {
        self.hx.max(self.hy)
    }

    /// Distance from `p` to the nearest side of the grid rectangle
    /// (negative outside).
    pub fn distance_to_boundary(&self, p: Complex<T>) -> T {
        let dx = (p.re - self.xmin).min(self.xmax - p.re);
        let dy = (p.im - self.ymin).min(self.ymax - p.im);
        dx.min(dy)
    }

    /// Index of the node nearest to `p` (clamped to the grid).
    pub fn nearest_node(&self, p: Complex<T>) -> (usize, usize) {
        let fi = ((p.re - self.xmin) / self.hx).round();
        let fj = ((p.im - self.ymin) / self.hy).round();
        let clamp = |f: T, n: usize| -> usize {
            if f <= T::zero() {
                0
            } else {
                f.to_usize().unwrap_or(n - 1).min(n - 1)
            }
        };
        (clamp(fi, self.nx), clamp(fj, self.ny))
    }

    /// Offset `(di, dj)` of `small`'s first node inside this grid's lattice,
    /// if the two node sets are compatible.
    pub fn lattice_offset(&self, small: &Grid2D<T>) -> Result<(usize, usize)> {
        let tol = T::lit(1e-12).max(T::epsilon() * T::lit(64.0));
        if fabs(self.hx - small.hx) > tol * self.hx || fabs(self.hy - small.hy) > tol * self.hy {
            return Err(Error::IncompatibleGrids(format!(
                "spacings differ: ({}, {}) vs ({}, {})",
                self.hx, self.hy, small.hx, small.hy
            )));
        }
        let fi = (small.xmin - self.xmin) / self.hx;
        let fj = (small.ymin - self.ymin) / self.hy;
        let (ri, rj) = (fi.round(), fj.round());
        if fabs(fi - ri) > tol || fabs(fj - rj) > tol || ri < T::zero() || rj < T::zero() {
            return Err(Error::IncompatibleGrids("node lattices are not aligned".into()));
        }
        let di = ri.to_usize().unwrap_or(usize::MAX);
        let dj = rj.to_usize().unwrap_or(usize::MAX);
        if di.saturating_add(small.nx) > self.nx || dj.saturating_add(small.ny) > self.ny {
            return Err(Error::IncompatibleGrids("grid is not contained in the larger one".into()));
        }
        Ok((di, dj))
    }
}

/// Complex samples on a [`Grid2D`], row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField<T> {
    pub grid: Grid2D<T>,
    pub values: Vec<Complex<T>>,
}

impl<T: Real> ComplexField<T> {
    pub fn new(grid: Grid2D<T>, values: Vec<Complex<T>>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidParameter(format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if !values.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::InvalidParameter("field contains non-finite values".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid2D<T>) -> Self {
        Self { grid, values: vec![Complex::new(T::zero(), T::zero()); grid.len()] }
    }

    pub fn constant(grid: Grid2D<T>, v: Complex<T>) -> Self {
        Self { grid, values: vec![v; grid.len()] }
    }

    /// Samples `f(z)` at every node.
    pub fn from_fn(grid: Grid2D<T>, f: impl Fn(Complex<T>) -> Complex<T>) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                values.push(f(grid.z(i, j)));
            }
        }
        Self { grid, values }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> Complex<T> {
        self.values[self.grid.idx(i, j)]
    }

    /// Value at the node nearest to `p`.
    pub fn at_point(&self, p: Complex<T>) -> Complex<T> {
        let (i, j) = self.grid.nearest_node(p);
        self.at(i, j)
    }

    pub fn map(&self, f: impl Fn(Complex<T>) -> Complex<T>) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// Pointwise combination with a field on the same grid.
    pub fn zip(&self, other: &Self, f: impl Fn(Complex<T>, Complex<T>) -> Complex<T>) -> Self {
        debug_assert_eq!(self.grid, other.grid);
        Self {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn conj(&self) -> Self {
        self.map(|v| v.conj())
    }

    pub fn scale(&self, s: Complex<T>) -> Self {
        self.map(|v| v * s)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a * b)
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.norm()))
    }

    /// Trapezoid-weighted integral over the grid rectangle.
    pub fn integral(&self) -> Complex<T> {
        let g = &self.grid;
        let mut s = Complex::new(T::zero(), T::zero());
        for j in 0..g.ny {
            for i in 0..g.nx {
                s = s + self.at(i, j) * g.weight(i, j);
            }
        }
        s
    }

    /// Node sum times cell area.
    pub fn mass(&self) -> Complex<T> {
        let s = self.values.iter().fold(Complex::new(T::zero(), T::zero()), |a, &v| a + v);
        s * self.grid.cell_area()
    }

    /// Trapezoid-weighted discrete L^p norm.
    pub fn norm_lp(&self, p: T) -> T {
        let g = &self.grid;
        let mut s = T::zero();
        for j in 0..g.ny {
            for i in 0..g.nx {
                s = s + self.at(i, j).norm().powf(p) * g.weight(i, j);
            }
        }
        s.powf(T::one() / p)
    }

    /// Trapezoid-weighted discrete L^2 norm.
    pub fn norm_l2(&self) -> T {
        self.norm_l2_where(|_| true)
    }

    /// L^2 norm restricted to nodes at distance at least `margin` from the
    /// grid boundary.
    pub fn norm_l2_interior(&self, margin: T) -> T {
        let g = self.grid;
        self.norm_l2_where(move |z| g.distance_to_boundary(z) >= margin - T::epsilon())
    }

    pub fn norm_l2_where(&self, keep: impl Fn(Complex<T>) -> bool) -> T {
        let g = &self.grid;
        let mut s = T::zero();
        for j in 0..g.ny {
            for i in 0..g.nx {
                if keep(g.z(i, j)) {
                    s = s + self.at(i, j).norm_sqr() * g.weight(i, j);
                }
            }
        }
        s.sqrt()
    }

    pub fn is_real(&self) -> bool {
        self.values.iter().all(|v| v.im == T::zero())
    }
}

/// Analytic potential families.
#[derive(Debug, Clone, PartialEq)]
pub enum PotentialSpec<T> {
    Zero,
    /// `A exp(-|x-c|^2 / w^2)`.
    Gaussian { amplitude: T, center: [T; 2], width: T },
    /// `A (g(x-c) + g(x+c))` with `g` the unit gaussian of width `w`.
    TwoBumps { amplitude: T, center: [T; 2], width: T },
    /// `A` on the closed disk `|x-c| <= r`, zero elsewhere.
    DiskIndicator { amplitude: T, center: [T; 2], radius: T },
    /// Real field stored in a CGO2 file.
    File(PathBuf),
}

impl<T: Real> PotentialSpec<T> {
    pub fn gaussian(amplitude: f64, center: [f64; 2], width: f64) -> Self {
        Self::Gaussian {
            amplitude: T::lit(amplitude),
            center: [T::lit(center[0]), T::lit(center[1])],
            width: T::lit(width),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |xs: &[T]| xs.iter().all(|x| x.is_finite());
        match self {
            Self::Zero | Self::File(_) => Ok(()),
            Self::Gaussian { amplitude, center, width } | Self::TwoBumps { amplitude, center, width } => {
                if !finite(&[*amplitude, center[0], center[1], *width]) {
                    Err(Error::InvalidParameter("non-finite potential parameter".into()))
                } else if *width <= T::zero() {
                    Err(Error::InvalidParameter("width must be positive".into()))
                } else {
                    Ok(())
                }
            }
            Self::DiskIndicator { amplitude, center, radius } => {
                if !finite(&[*amplitude, center[0], center[1], *radius]) {
                    Err(Error::InvalidParameter("non-finite potential parameter".into()))
                } else if *radius <= T::zero() {
                    Err(Error::InvalidParameter("radius must be positive".into()))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Pointwise value for the analytic kinds (`None` for files).
    pub fn value_at(&self, z: Complex<T>) -> Option<T> {
        let g = |c: [T; 2], w: T| {
            let dx = z.re - c[0];
            let dy = z.im - c[1];
            (-(dx * dx + dy * dy) / (w * w)).exp()
        };
        match self {
            Self::Zero => Some(T::zero()),
            Self::Gaussian { amplitude, center, width } => Some(*amplitude * g(*center, *width)),
            Self::TwoBumps { amplitude, center, width } => {
                Some(*amplitude * (g(*center, *width) + g([-center[0], -center[1]], *width)))
            }
            Self::DiskIndicator { amplitude, center, radius } => {
                let dx = z.re - center[0];
                let dy = z.im - center[1];
                Some(if dx * dx + dy * dy <= *radius * *radius { *amplitude } else { T::zero() })
            }
            Self::File(_) => None,
        }
    }
}

/// Samples a potential at the nodes of `grid`. The result is real-valued.
///
/// File potentials must live on `grid` itself, on a sub-lattice of it
/// (zero-extended) or on a super-lattice (restricted).
pub fn sample_potential<T: Real>(spec: &PotentialSpec<T>, grid: Grid2D<T>) -> Result<ComplexField<T>> {
    spec.validate()?;
    if let PotentialSpec::File(path) = spec {
        let f = read_cgo2_file::<T>(path)?;
        if !f.is_real() {
            return Err(Error::InvalidParameter(format!(
                "potential file {} has non-zero imaginary parts",
                path.display()
            )));
        }
        if f.grid == grid {
            return Ok(f);
        }
        return match grid.lattice_offset(&f.grid) {
            Ok(_) => extend_zero(&f, grid),
            Err(_) => restrict(&f, grid),
        };
    }
    Ok(ComplexField::from_fn(grid, |z| {
        Complex::new(spec.value_at(z).unwrap_or_else(T::zero), T::zero())
    }))
}

/// Convolution with the discretely normalized bump `exp(1/(|x/eps|^2 - 1))`.
///
/// Values outside the grid are treated as zero.
pub fn mollify<T: Real>(q: &ComplexField<T>, epsilon: T) -> Result<ComplexField<T>> {
    let g = q.grid;
    if !(epsilon > T::zero()) || !epsilon.is_finite() {
        return Err(Error::InvalidParameter("epsilon must be positive".into()));
    }
    if epsilon < T::lit(2.0) * g.max_spacing() {
        return Err(Error::Resolution(format!(
            "epsilon {} below grid resolution (needs >= 2 * max spacing = {})",
            epsilon,
            T::lit(2.0) * g.max_spacing()
        )));
    }
    let ri = (epsilon / g.hx).floor().to_usize().unwrap_or(0);
    let rj = (epsilon / g.hy).floor().to_usize().unwrap_or(0);
    let (wi, wj) = (2 * ri + 1, 2 * rj + 1);
    let mut kernel = vec![T::zero(); wi * wj];
    let mut total = T::zero();
    for b in 0..wj {
        for a in 0..wi {
            let dx = T::of(a) * g.hx - T::of(ri) * g.hx;
            let dy = T::of(b) * g.hy - T::of(rj) * g.hy;
            let r2 = (dx * dx + dy * dy) / (epsilon * epsilon);
            if r2 < T::one() {
                let v = (T::one() / (r2 - T::one())).exp();
                kernel[b * wi + a] = v;
                total = total + v;
            }
        }
    }
    for k in kernel.iter_mut() {
        *k = *k / total;
    }
    let zero = Complex::new(T::zero(), T::zero());
    let mut out = vec![zero; g.len()];
    for j in 0..g.ny {
        for i in 0..g.nx {
            let mut s = zero;
            for b in 0..wj {
                let jj = j as isize + b as isize - rj as isize;
                if jj < 0 || jj >= g.ny as isize {
                    continue;
                }
                for a in 0..wi {
                    let k = kernel[b * wi + a];
                    if k == T::zero() {
                        continue;
                    }
                    let ii = i as isize + a as isize - ri as isize;
                    if ii < 0 || ii >= g.nx as isize {
                        continue;
                    }
                    s = s + q.values[g.idx(ii as usize, jj as usize)] * k;
                }
            }
            out[g.idx(i, j)] = s;
        }
    }
    Ok(ComplexField { grid: g, values: out })
}

/// Copies `q` onto the nodes of `big` it shares, zero elsewhere.
pub fn extend_zero<T: Real>(q: &ComplexField<T>, big: Grid2D<T>) -> Result<ComplexField<T>> {
    let (di, dj) = big.lattice_offset(&q.grid)?;
    let mut out = ComplexField::zeros(big);
    let s = q.grid;
    for j in 0..s.ny {
        let src = &q.values[s.idx(0, j)..s.idx(0, j) + s.nx];
        let start = big.idx(di, dj + j);
        out.values[start..start + s.nx].copy_from_slice(src);
    }
    Ok(out)
}

/// Restricts `q` to the nodes of the sub-grid `small`.
pub fn restrict<T: Real>(q: &ComplexField<T>, small: Grid2D<T>) -> Result<ComplexField<T>> {
    let (di, dj) = q.grid.lattice_offset(&small)?;
    let mut values = Vec::with_capacity(small.len());
    for j in 0..small.ny {
        let start = q.grid.idx(di, dj + j);
        values.extend_from_slice(&q.values[start..start + small.nx]);
    }
    Ok(ComplexField { grid: small, values })
}

pub(crate) const CGO2_MAGIC: &[u8; 4] = b"CGO2";

pub(crate) fn write_grid_header<T: Real, W: Write>(w: &mut W, g: &Grid2D<T>) -> Result<()> {
    w.write_all(&(g.nx as u32).to_le_bytes())?;
    w.write_all(&(g.ny as u32).to_le_bytes())?;
    for v in [g.xmin, g.xmax, g.ymin, g.ymax, g.hx, g.hy] {
        w.write_all(&v.to_f64_lossy().to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(f64::from_le_bytes(b))
}

pub(crate) fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("truncated payload".into())
    } else {
        Error::Io(e)
    }
}

pub(crate) fn read_grid_header<T: Real, R: Read>(r: &mut R) -> Result<Grid2D<T>> {
    let nx = read_u32(r)? as usize;
    let ny = read_u32(r)? as usize;
    let mut b = [0.0f64; 6];
    for v in b.iter_mut() {
        *v = read_f64(r)?;
    }
    let g = Grid2D::new(nx, ny, [T::lit(b[0]), T::lit(b[1]), T::lit(b[2]), T::lit(b[3])])
        .map_err(|e| Error::Format(format!("bad grid header: {e}")))?;
    Ok(g)
}

pub(crate) fn write_complex_pairs<T: Real, W: Write>(w: &mut W, v: &[Complex<T>]) -> Result<()> {
    let mut buf = Vec::with_capacity(v.len() * 16);
    for z in v {
        buf.extend_from_slice(&z.re.to_f64_lossy().to_le_bytes());
        buf.extend_from_slice(&z.im.to_f64_lossy().to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub(crate) fn read_complex_pairs<T: Real, R: Read>(r: &mut R, n: usize) -> Result<Vec<Complex<T>>> {
    let mut buf = vec![0u8; n * 16];
    r.read_exact(&mut buf).map_err(truncated)?;
    Ok(buf
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            Complex::new(T::lit(re), T::lit(im))
        })
        .collect())
}

/// Serializes a field in the CGO2 container.
pub fn write_cgo2<T: Real, W: Write>(w: &mut W, f: &ComplexField<T>) -> Result<()> {
    w.write_all(CGO2_MAGIC)?;
    write_grid_header(w, &f.grid)?;
    write_complex_pairs(w, &f.values)
}

/// Parses a CGO2 field, rejecting a wrong magic or a short payload.
pub fn read_cgo2<T: Real, R: Read>(r: &mut R) -> Result<ComplexField<T>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != CGO2_MAGIC {
        return Err(Error::Format(format!("wrong magic {magic:?}")));
    }
    let grid = read_grid_header::<T, R>(r)?;
    let values = read_complex_pairs(r, grid.len())?;
    ComplexField::new(grid, values).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_cgo2_file<T: Real>(path: &Path, f: &ComplexField<T>) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_cgo2(&mut w, f)?;
    w.flush()?;
    Ok(())
}

pub fn read_cgo2_file<T: Real>(path: &Path) -> Result<ComplexField<T>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Format(format!("cannot open {}: {e}", path.display())))?;
    read_cgo2(&mut std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn spacing_is_exact() {
        let g = Grid2D::<f64>::square(8, 1.0).unwrap();
        assert_eq!(g.hx, 2.0 / 7.0);
        let g = Grid2D::<f64>::square(257, 1.0).unwrap();
        assert_eq!(g.hx, 1.0 / 128.0);
        assert_eq!(g.x(128), 0.0);
        assert_eq!(g.x(256), 1.0);
    }

    #[test]
    fn rejects_small_and_degenerate() {
        assert!(Grid2D::<f64>::new(4, 8, [-1.0, 1.0, -1.0, 1.0]).is_err());
        assert!(Grid2D::<f64>::new(8, 8, [1.0, 1.0, -1.0, 1.0]).is_err());
        assert!(Grid2D::<f64>::new(8, 8, [-1.0, 1.0, 0.0, f64::NAN]).is_err());
    }

    #[test]
    fn potential_values() {
        let g = Grid2D::<f64>::square(65, 1.0).unwrap();
        let q = sample_potential(&PotentialSpec::gaussian(1.0, [0.0, 0.0], 0.3), g).unwrap();
        assert_eq!(q.at(32, 32), Complex::new(1.0, 0.0));
        assert!(q.is_real());
        let d = PotentialSpec::DiskIndicator { amplitude: 2.0, center: [0.2, 0.0], radius: 0.3 };
        assert_eq!(d.value_at(Complex::new(0.2, 0.0)), Some(2.0));
        assert_eq!(d.value_at(Complex::new(0.9, 0.9)), Some(0.0));
        let z = sample_potential(&PotentialSpec::Zero, g).unwrap();
        assert!(z.values.iter().all(|v| *v == Complex::new(0.0, 0.0)));
        assert!(sample_potential(&PotentialSpec::gaussian(1.0, [0.0, 0.0], -1.0), g).is_err());
    }

    #[test]
    fn mollify_fixes_constants_and_zero() {
        let g = Grid2D::<f64>::square(81, 1.0).unwrap();
        let c = ComplexField::constant(g, Complex::new(3.0, -1.0));
        let m = mollify(&c, 0.1).unwrap();
        for j in 0..g.ny {
            for i in 0..g.nx {
                if g.distance_to_boundary(g.z(i, j)) > 0.1 + 1e-12 {
                    assert!((m.at(i, j) - Complex::new(3.0, -1.0)).norm() < 1e-12);
                }
            }
        }
        let z = mollify(&ComplexField::zeros(g), 0.1).unwrap();
        assert_eq!(z.max_abs(), 0.0);
        assert!(mollify(&c, 0.02).is_err());
    }

    #[test]
    fn mollify_preserves_mass_and_converges() {
        let g = Grid2D::<f64>::square(129, 1.0).unwrap();
        let spec = PotentialSpec::DiskIndicator { amplitude: 1.0, center: [0.1, 0.0], radius: 0.4 };
        let q = sample_potential(&spec, g).unwrap();
        let mut prev = f64::INFINITY;
        for eps in [0.2, 0.1, 0.05] {
            let m = mollify(&q, eps).unwrap();
            let rel = (m.mass() - q.mass()).norm() / q.mass().norm();
            assert!(rel < 1e-10, "mass drift {rel}");
            let d = m.sub(&q).norm_l2();
            assert!(d < prev);
            prev = d;
        }
    }

    #[test]
    fn extend_preserves_mass() {
        let small = Grid2D::<f64>::square(129, 1.0).unwrap();
        let big = Grid2D::<f64>::square(257, 2.0).unwrap();
        let q = sample_potential(&PotentialSpec::gaussian(1.0, [0.0, 0.0], 0.3), small).unwrap();
        let e = extend_zero(&q, big).unwrap();
        assert!((e.mass() - q.mass()).norm() / q.mass().norm() < 1e-12);
        assert_eq!(extend_zero(&q, small).unwrap(), q);
        let off = Grid2D::<f64>::new(257, 257, [-2.001, 2.0, -2.0, 2.0]).unwrap();
        assert!(extend_zero(&q, off).is_err());
    }

    #[test]
    fn cgo2_rejects_bad_input() {
        let g = Grid2D::<f64>::square(9, 1.0).unwrap();
        let f = ComplexField::from_fn(g, |z| z * z);
        let mut buf = Vec::new();
        write_cgo2(&mut buf, &f).unwrap();
        assert_eq!(buf.len(), 4 + 8 + 48 + 81 * 16);
        let back: ComplexField<f64> = read_cgo2(&mut buf.as_slice()).unwrap();
        assert_eq!(back, f);
        let mut bad = buf.clone();
        bad[3] = b'3';
        assert!(matches!(read_cgo2::<f64, _>(&mut bad.as_slice()), Err(Error::Format(_))));
        let short = &buf[..buf.len() - 5];
        assert!(matches!(read_cgo2::<f64, _>(&mut &short[..]), Err(Error::Format(_))));
    }

    proptest! {
        #[test]
        fn extend_then_restrict_is_identity(n in 8usize..20, di in 0usize..6, dj in 0usize..6, seed in 0u64..1000) {
            let h = 0.125;
            let small = Grid2D::<f64>::new(n, n + 1, [0.0, h * (n - 1) as f64, 0.0, h * n as f64]).unwrap();
            let big = Grid2D::<f64>::new(n + 8, n + 9, [-h * di as f64, h * (n + 7 - di) as f64, -h * dj as f64, h * (n + 8 - dj) as f64]).unwrap();
            let f = ComplexField::from_fn(small, |z| Complex::new((z.re * 7.1 + seed as f64).sin(), z.im.cos()));
            let e = extend_zero(&f, big).unwrap();
            let r = restrict(&e, small).unwrap();
            prop_assert_eq!(r, f);
        }

        #[test]
        fn sampling_is_deterministic(a in -3.0f64..3.0, cx in -0.5f64..0.5, w in 0.05f64..1.0) {
            let g = Grid2D::<f64>::square(17, 1.0).unwrap();
            let spec = PotentialSpec::TwoBumps { amplitude: a, center: [cx, 0.1], width: w };
            let p = sample_potential(&spec, g).unwrap();
            let q = sample_potential(&spec, g).unwrap();
            prop_assert!(p.values.iter().zip(&q.values).all(|(x, y)| x.re.to_bits() == y.re.to_bits() && x.im == 0.0));
        }
    }
}
