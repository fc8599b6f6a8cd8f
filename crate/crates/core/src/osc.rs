//! The oscillatory integral operator
//! `T_τ f(x) = ∫ e^{-iτψ(x,y)} χ(x)χ(y) f(y) dy`, `ψ(x,y) = 2(x1-y1)(x2-y2)`,
//! its norm decay, and stationary-phase integrals `∫ q e^{τ(Φ-Φ̄)}`.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::fit::{loglog_fit, richardson};
use crate::grid::{ComplexField, Grid2D};
use crate::scalar::{cis, fabs, Real};

/// `ψ(x, y) = 2 (x1 - y1)(x2 - y2)`.
#[inline]
pub fn psi<T: Real>(x: Complex<T>, y: Complex<T>) -> T {
    T::lit(2.0) * (x.re - y.re) * (x.im - y.im)
}

/// Mixed Hessian `∂²ψ / ∂x_a ∂y_b`, constant in `(x, y)`.
pub fn psi_mixed_hessian<T: Real>() -> [[T; 2]; 2] {
    let m2 = T::lit(-2.0);
    [[T::zero(), m2], [m2, T::zero()]]
}

/// Smooth transition from 1 (`t <= 0`) to 0 (`t >= 1`).
pub fn smooth_step_down<T: Real>(t: T) -> T {
    if t <= T::zero() {
        return T::one();
    }
    if t >= T::one() {
        return T::zero();
    }
    let a = (-T::one() / t).exp();
    let b = (-T::one() / (T::one() - t)).exp();
    b / (a + b)
}

/// Exponent convention of the kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PhaseConvention {
    /// `e^{-iτψ}`.
    #[default]
    Psi,
    /// `e^{τ(Φ-Φ̄)} = e^{2iτψ}` with `Φ` centred at `y`.
    PhiWeight,
}

impl PhaseConvention {
    fn factor<T: Real>(self) -> T {
        match self {
            Self::Psi => -T::one(),
            Self::PhiWeight => T::lit(2.0),
        }
    }
}

/// Fraction of the side of `Π` reserved as the zero margin of the window.
pub const WINDOW_MARGIN: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct OscillatoryOperator<T> {
    pub grid: Grid2D<T>,
    pub tau: T,
    pub convention: PhaseConvention,
    /// `Ω = [x0, x1] x [y0, y1]`, where the window equals one.
    pub omega: [T; 4],
    chi_x: Vec<T>,
    chi_y: Vec<T>,
    /// Index ranges where the window is non-zero.
    support_x: std::ops::Range<usize>,
    support_y: std::ops::Range<usize>,
}

fn support<T: Real>(chi: &[T]) -> std::ops::Range<usize> {
    let lo = chi.iter().position(|c| *c > T::zero()).unwrap_or(0);
    let hi = chi.iter().rposition(|c| *c > T::zero()).map_or(lo, |k| k + 1);
    lo..hi
}

fn window_1d<T: Real>(t: T, lo: T, hi: T, zlo: T, zhi: T) -> T {
    if t < lo {
        smooth_step_down((lo - t) / (lo - zlo))
    } else if t > hi {
        smooth_step_down((t - hi) / (zhi - hi))
    } else {
        T::one()
    }
}

impl<T: Real> OscillatoryOperator<T> {
    /// Window `χ = 1` on `omega`, `0` within `0.1 × side` of the grid edge.
    pub fn new(grid: Grid2D<T>, tau: T, omega: [T; 4], convention: PhaseConvention) -> Result<Self> {
        if !(tau >= T::zero()) || !tau.is_finite() {
            return Err(Error::InvalidParameter(format!("tau must be non-negative, got {tau}")));
        }
        let m = T::lit(WINDOW_MARGIN);
        let (zx0, zx1) = (grid.xmin + m * (grid.xmax - grid.xmin), grid.xmax - m * (grid.xmax - grid.xmin));
        let (zy0, zy1) = (grid.ymin + m * (grid.ymax - grid.ymin), grid.ymax - m * (grid.ymax - grid.ymin));
        let [ox0, ox1, oy0, oy1] = omega;
        if !(ox0 > zx0 && ox1 < zx1 && oy0 > zy0 && oy1 < zy1 && ox1 > ox0 && oy1 > oy0) {
            return Err(Error::InvalidParameter(
                "omega must lie strictly inside the window support".into(),
            ));
        }
        let chi_x: Vec<T> = (0..grid.nx).map(|i| window_1d(grid.x(i), ox0, ox1, zx0, zx1)).collect();
        let chi_y: Vec<T> = (0..grid.ny).map(|j| window_1d(grid.y(j), oy0, oy1, zy0, zy1)).collect();
        let (support_x, support_y) = (support(&chi_x), support(&chi_y));
        let op = Self { grid, tau, convention, omega, chi_x, chi_y, support_x, support_y };
        op.check_resolution()?;
        Ok(op)
    }

    /// `Ω` centred in `Π` with the given half-side.
    pub fn centered(grid: Grid2D<T>, tau: T, omega_half: T) -> Result<Self> {
        let cx = T::lit(0.5) * (grid.xmin + grid.xmax);
        let cy = T::lit(0.5) * (grid.ymin + grid.ymax);
        Self::new(
            grid,
            tau,
            [cx - omega_half, cx + omega_half, cy - omega_half, cy + omega_half],
            PhaseConvention::Psi,
        )
    }

    #[inline]
    pub fn chi(&self, i: usize, j: usize) -> T {
        self.chi_x[i] * self.chi_y[j]
    }

    /// Largest coordinate magnitude on the window support.
    fn support_radius(&self) -> T {
        let g = &self.grid;
        let mut r = T::zero();
        for (i, c) in self.chi_x.iter().enumerate() {
            if *c > T::zero() {
                r = r.max(fabs(g.x(i)));
            }
        }
        for (j, c) in self.chi_y.iter().enumerate() {
            if *c > T::zero() {
                r = r.max(fabs(g.y(j)));
            }
        }
        r
    }

    /// The bilinear factors `e^{i s τ 2 x_a y_b}` must advance by less than
    /// `0.8 π` per cell on the window support.
    fn check_resolution(&self) -> Result<()> {
        let s = fabs(self.convention.factor::<T>());
        let step = s * T::lit(2.0) * self.tau * self.support_radius() * self.grid.max_spacing();
        let limit = T::lit(0.8) * T::PI();
        if step > limit {
            return Err(Error::Resolution(format!(
                "tau = {} needs a phase step {} per cell > {}; refine the grid",
                self.tau, step, limit
            )));
        }
        Ok(())
    }

    fn kernel_phase(&self, x: Complex<T>, y: Complex<T>, adjoint: bool) -> Complex<T> {
        let s = self.convention.factor::<T>() * if adjoint { -T::one() } else { T::one() };
        cis(s * self.tau * psi(x, y))
    }

    /// `O(n^3)` application using the factorization
    /// `e^{isτψ} = c(x) c(y) e^{-2isτ x1 y2} e^{-2isτ x2 y1}`, `c(p) = e^{2isτ p1 p2}`.
    /// Only nodes where the window is non-zero take part.
    fn apply_impl(&self, f: &ComplexField<T>, adjoint: bool) -> ComplexField<T> {
        let g = self.grid;
        let (sx, sy) = (self.support_x.clone(), self.support_y.clone());
        let (mx, my) = (sx.len(), sy.len());
        let s = self.convention.factor::<T>() * if adjoint { -T::one() } else { T::one() };
        let two = T::lit(2.0);
        let chirp = |z: Complex<T>| cis(s * two * self.tau * z.re * z.im);
        let zero = Complex::new(T::zero(), T::zero());
        let mut out = ComplexField::zeros(g);
        if mx == 0 || my == 0 {
            return out;
        }
        // F[y2][y1] = w χ c f on the support.
        let mut fw = vec![zero; mx * my];
        for (b, j) in sy.clone().enumerate() {
            for (a, i) in sx.clone().enumerate() {
                let z = g.z(i, j);
                fw[b * mx + a] = f.at(i, j) * chirp(z) * (g.weight(i, j) * self.chi(i, j));
            }
        }
        // A[x2][y1] = e^{-2isτ x2 y1}, B[x1][y2] = e^{-2isτ x1 y2}.
        let k = -s * two * self.tau;
        let xs: Vec<T> = sx.clone().map(|i| g.x(i)).collect();
        let ys: Vec<T> = sy.clone().map(|j| g.y(j)).collect();
        let a: Vec<Complex<T>> = ys.iter().flat_map(|&x2| xs.iter().map(move |&y1| cis(k * x2 * y1))).collect();
        let bm: Vec<Complex<T>> = xs.iter().flat_map(|&x1| ys.iter().map(move |&y2| cis(k * x1 * y2))).collect();
        // Ht[x2][y2] = Σ_{y1} F[y2][y1] A[x2][y1].
        let mut ht = vec![zero; my * my];
        for jy in 0..my {
            let frow = &fw[jy * mx..(jy + 1) * mx];
            for jx in 0..my {
                let arow = &a[jx * mx..(jx + 1) * mx];
                ht[jx * my + jy] = dot(frow, arow);
            }
        }
        // out[x2][x1] = Σ_{y2} B[x1][y2] Ht[x2][y2].
        for (jx, j) in sy.clone().enumerate() {
            let hrow = &ht[jx * my..(jx + 1) * my];
            for (ix, i) in sx.clone().enumerate() {
                let acc = dot(hrow, &bm[ix * my..(ix + 1) * my]);
                out.values[g.idx(i, j)] = acc * chirp(g.z(i, j)) * self.chi(i, j);
            }
        }
        out
    }

    /// Direct `O(N^2)` quadrature of the kernel integral.
    pub fn apply_dense(&self, f: &ComplexField<T>) -> ComplexField<T> {
        let g = self.grid;
        let zero = Complex::new(T::zero(), T::zero());
        let mut out = vec![zero; g.len()];
        for j in 0..g.ny {
            for i in 0..g.nx {
                let x = g.z(i, j);
                let mut acc = zero;
                for jj in 0..g.ny {
                    for ii in 0..g.nx {
                        let w = g.weight(ii, jj) * self.chi(ii, jj);
                        if w == T::zero() {
                            continue;
                        }
                        acc = acc + self.kernel_phase(x, g.z(ii, jj), false) * f.at(ii, jj) * w;
                    }
                }
                out[g.idx(i, j)] = acc * self.chi(i, j);
            }
        }
        ComplexField { grid: g, values: out }
    }

    /// Adjoint with respect to the cell-weighted inner product.
    pub fn apply_adjoint(&self, f: &ComplexField<T>) -> ComplexField<T> {
        self.apply_impl(f, true)
    }
}

/// Complex dot product with four interleaved partial sums (fixed order).
#[inline]
fn dot<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> Complex<T> {
    let mut re = [T::zero(); 4];
    let mut im = [T::zero(); 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (p, q) in ca.zip(cb) {
        for k in 0..4 {
            re[k] = re[k] + p[k].re * q[k].re - p[k].im * q[k].im;
            im[k] = im[k] + p[k].re * q[k].im + p[k].im * q[k].re;
        }
    }
    for (p, q) in ra.iter().zip(rb) {
        re[0] = re[0] + p.re * q.re - p.im * q.im;
        im[0] = im[0] + p.re * q.im + p.im * q.re;
    }
    Complex::new((re[0] + re[1]) + (re[2] + re[3]), (im[0] + im[1]) + (im[2] + im[3]))
}

/// Cell-weighted quadrature of `T_τ f` at every node.
pub fn apply_t_tau<T: Real>(f: &ComplexField<T>, op: &OscillatoryOperator<T>) -> ComplexField<T> {
    assert_eq!(f.grid, op.grid, "field and operator live on different grids");
    op.apply_impl(f, false)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormEstimate<T> {
    pub norm: T,
    pub iterations: usize,
    /// Relative change between the last two iterates.
    pub gap: T,
}

/// Relative change of the estimate below which power iteration stops.
pub const POWER_TOL: f64 = 1e-6;

/// Power iteration on `T*T` from the all-ones vector.
pub fn estimate_op_norm<T: Real>(op: &OscillatoryOperator<T>, iters: usize) -> Result<NormEstimate<T>> {
    if iters < 20 {
        return Err(Error::InvalidParameter(format!("need at least 20 iterations, got {iters}")));
    }
    let g = op.grid;
    let mut v = ComplexField::constant(g, Complex::new(T::one(), T::zero()));
    let mut prev = T::zero();
    let mut gap = T::infinity();
    for k in 1..=iters {
        let nv = v.norm_l2();
        if nv == T::zero() {
            return Ok(NormEstimate { norm: T::zero(), iterations: k, gap: T::zero() });
        }
        v = v.scale(Complex::new(T::one() / nv, T::zero()));
        let tv = apply_t_tau(&v, op);
        let est = tv.norm_l2();
        gap = if est > T::zero() { fabs(est - prev) / est } else { T::zero() };
        if k > 1 && gap <= T::lit(POWER_TOL) {
            return Ok(NormEstimate { norm: est, iterations: k, gap });
        }
        prev = est;
        v = op.apply_adjoint(&tv);
    }
    Err(Error::NonConvergence(format!(
        "power iteration at tau = {} did not settle in {iters} iterations (last gap {gap:e}, estimate {prev})",
        op.tau
    )))
}

/// Limits for stationary-phase evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaryPhaseOptions<T> {
    /// Minimum distance from `y` to the grid boundary.
    pub interior_margin: T,
    /// Radius around `y` on which the oscillation must be resolved
    /// (`4 τ r h <= π`).
    pub resolved_radius: T,
}

impl<T: Real> Default for StationaryPhaseOptions<T> {
    fn default() -> Self {
        Self { interior_margin: T::lit(0.2), resolved_radius: T::lit(0.3) }
    }
}

impl<T: Real> StationaryPhaseOptions<T> {
    /// Largest `τ` the grid resolves.
    pub fn max_tau(&self, grid: &Grid2D<T>) -> T {
        T::PI() / (T::lit(4.0) * grid.max_spacing() * self.resolved_radius)
    }

    pub fn check(&self, grid: &Grid2D<T>, y: Complex<T>, tau: T) -> Result<()> {
        if !(tau > T::zero()) || !tau.is_finite() {
            return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
        }
        let d = grid.distance_to_boundary(y);
        if d < self.interior_margin {
            return Err(Error::NotInterior(format!(
                "y = ({}, {}) is {} from the boundary, need {}",
                y.re, y.im, d, self.interior_margin
            )));
        }
        if tau > self.max_tau(grid) {
            return Err(Error::Resolution(format!(
                "tau = {} exceeds {} for spacing {} and resolved radius {}",
                tau,
                self.max_tau(grid),
                grid.max_spacing(),
                self.resolved_radius
            )));
        }
        Ok(())
    }
}

/// `∫ q e^{τ(Φ-Φ̄)} dx`, `Φ = (z - y)^2`, by the trapezoid rule.
pub fn stationary_phase_integral<T: Real>(q: &ComplexField<T>, y: Complex<T>, tau: T) -> Result<Complex<T>> {
    stationary_phase_integral_with(q, y, tau, &StationaryPhaseOptions::default())
}

pub fn stationary_phase_integral_with<T: Real>(
    q: &ComplexField<T>,
    y: Complex<T>,
    tau: T,
    opts: &StationaryPhaseOptions<T>,
) -> Result<Complex<T>> {
    let g = q.grid;
    opts.check(&g, y, tau)?;
    let four_tau = T::lit(4.0) * tau;
    let mut acc = Complex::new(T::zero(), T::zero());
    for j in 0..g.ny {
        let dy = g.y(j) - y.im;
        for i in 0..g.nx {
            let v = q.at(i, j);
            if v.re == T::zero() && v.im == T::zero() {
                continue;
            }
            let dx = g.x(i) - y.re;
            acc = acc + v * cis(four_tau * dx * dy) * g.weight(i, j);
        }
    }
    Ok(acc)
}

/// Measured stationary-phase constant.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantEstimate<T> {
    /// Real part of the extrapolated limit of `τ I(τ, y) / q(y)`.
    pub value: T,
    pub extrapolated: Complex<T>,
    pub taus: Vec<T>,
    /// `τ I(τ, y) / q(y)` per `τ`.
    pub scaled: Vec<Complex<T>>,
    /// `(max - min) / |mean|` of the real parts over the three largest `τ`.
    pub spread: T,
}

/// The textbook value `2π` often quoted for `τ I(τ, y) / q(y)`; compare
/// with [`extract_constant`].
pub fn two_pi_constant<T: Real>() -> T {
    T::lit(2.0) * T::PI()
}

/// Default error order for extrapolation: for a real potential the real
/// part of `τ I` has an expansion in even powers of `1/τ`.
pub const RICHARDSON_ORDER: f64 = 2.0;

/// Limit of `τ I(τ, y) / q(y)` as `τ -> ∞`, extrapolated from the two largest
/// `τ` values.
pub fn extract_constant<T: Real>(q: &ComplexField<T>, y: Complex<T>, taus: &[T]) -> Result<ConstantEstimate<T>> {
    extract_constant_with(q, y, taus, T::lit(RICHARDSON_ORDER), &StationaryPhaseOptions::default())
}

pub fn extract_constant_with<T: Real>(
    q: &ComplexField<T>,
    y: Complex<T>,
    taus: &[T],
    order: T,
    opts: &StationaryPhaseOptions<T>,
) -> Result<ConstantEstimate<T>> {
    if taus.len() < 3 {
        return Err(Error::InvalidParameter("need at least three tau values".into()));
    }
    if taus.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("tau values must increase".into()));
    }
    let qy = q.at_point(y);
    if qy.norm() <= T::epsilon() * q.max_abs().max(T::min_positive_value()) {
        return Err(Error::ZeroValue(format!("q vanishes at y = ({}, {})", y.re, y.im)));
    }
    let mut scaled = Vec::with_capacity(taus.len());
    for &tau in taus {
        let i = stationary_phase_integral_with(q, y, tau, opts)?;
        scaled.push(i * tau / qy);
    }
    let n = taus.len();
    let extrapolated = richardson(&taus[n - 2..], &scaled[n - 2..], order)?;
    let top: Vec<T> = scaled[n - 3..].iter().map(|v| v.re).collect();
    let (lo, hi) = top.iter().fold((T::infinity(), T::neg_infinity()), |(a, b), v| (a.min(*v), b.max(*v)));
    let mean = top.iter().fold(T::zero(), |a, v| a + *v) / T::of(top.len());
    let spread = (hi - lo) / fabs(mean);
    Ok(ConstantEstimate { value: extrapolated.re, extrapolated, taus: taus.to_vec(), scaled, spread })
}

/// One row per `τ`: `tau,norm_estimate,slope`.
pub fn norm_study_csv<T: Real>(taus: &[T], norms: &[T]) -> String {
    let xs: Vec<f64> = taus.iter().map(|t| t.to_f64_lossy()).collect();
    let ys: Vec<f64> = norms.iter().map(|t| t.to_f64_lossy()).collect();
    let pos: Vec<usize> = (0..xs.len()).filter(|&k| xs[k] > 0.0).collect();
    let slope = loglog_fit(
        &pos.iter().map(|&k| xs[k]).collect::<Vec<_>>(),
        &pos.iter().map(|&k| ys[k]).collect::<Vec<_>>(),
    )
    .map(|f| f.slope)
    .unwrap_or(f64::NAN);
    let mut s = String::from("tau,norm_estimate,slope\n");
    for (t, v) in xs.iter().zip(&ys) {
        s.push_str(&format!("{t:.16e},{v:.16e},{slope:.16e}\n"));
    }
    s
}

pub const PHASE_CSV_HEADER: &str =
    "tau,y_re,y_im,integral_re,integral_im,tau_times_integral_re,tau_times_integral_im";

pub fn phase_csv_row<T: Real>(tau: T, y: Complex<T>, integral: Complex<T>) -> String {
    let ti = integral * tau;
    format!(
        "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
        tau.to_f64_lossy(),
        y.re.to_f64_lossy(),
        y.im.to_f64_lossy(),
        integral.re.to_f64_lossy(),
        integral.im.to_f64_lossy(),
        ti.re.to_f64_lossy(),
        ti.im.to_f64_lossy()
    )
}
