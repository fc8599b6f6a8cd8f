//! Holomorphic phase, the weighted Cauchy operators `R̃_τ`, `R_τ` and the
//! Neumann-series construction of CGO solutions
//! `u1 = e^{τΦ} Σ (-1)^j U_j` and `v = e^{-τΦ̄} Σ (-1)^j V_j`.

use num_complex::Complex;

use crate::cauchy::CauchyKernelTable;
use crate::error::{Error, Result};
use crate::grid::{ComplexField, Grid2D};
use crate::scalar::{cis, Real};

/// `Φ(z) = (z - y)^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseFunction<T> {
    pub y: Complex<T>,
}

impl<T: Real> PhaseFunction<T> {
    pub fn new(y: Complex<T>) -> Self {
        Self { y }
    }

    #[inline]
    pub fn phi(&self, z: Complex<T>) -> Complex<T> {
        let d = z - self.y;
        d * d
    }

    /// `∂_z Φ = 2 (z - y)`.
    #[inline]
    pub fn dphi(&self, z: Complex<T>) -> Complex<T> {
        (z - self.y) * T::lit(2.0)
    }

    /// `Im Φ = 2 (x1 - y1)(x2 - y2)`.
    #[inline]
    pub fn im_phi(&self, z: Complex<T>) -> T {
        T::lit(2.0) * (z.re - self.y.re) * (z.im - self.y.im)
    }

    /// `e^{τ(Φ - Φ̄)} = e^{4iτ(x1-y1)(x2-y2)}`.
    #[inline]
    pub fn weight(&self, z: Complex<T>, tau: T) -> Complex<T> {
        cis(T::lit(2.0) * tau * self.im_phi(z))
    }

    /// `Φ` and `∂_z Φ` at every node.
    pub fn eval(&self, g: Grid2D<T>) -> (ComplexField<T>, ComplexField<T>) {
        (ComplexField::from_fn(g, |z| self.phi(z)), ComplexField::from_fn(g, |z| self.dphi(z)))
    }

    /// The oscillatory weight sampled on a grid.
    pub fn weight_field(&self, g: Grid2D<T>, tau: T) -> ComplexField<T> {
        ComplexField::from_fn(g, |z| self.weight(z, tau))
    }
}

/// Inner weight used by `R_τ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RWeight {
    /// `R_τ g = ½ e^{τ(Φ-Φ̄)} ∂_z̄⁻¹(g e^{τ(Φ̄-Φ)})`.
    #[default]
    Antisymmetric,
    /// `R_τ g = ½ e^{τ(Φ-Φ̄)} ∂_z̄⁻¹(g)`: the inner weight `e^{τ(Φ̄-Φ̄)} = 1`.
    Literal,
}

/// Factor applied inside `R_{-τ}` when building the `V_j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VScaling {
    /// `V_1 = R_{-τ}(½(∂_z⁻¹q2 - β2))`, mirroring `U_1`; `v` then solves
    /// `(Δ + q2) v = 0`.
    #[default]
    Half,
    /// `V_1 = R_{-τ}(∂_z⁻¹q2 - β2)` without the factor ½.
    Unit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeumannSeriesConfig<T> {
    pub tau: T,
    pub max_terms: usize,
    pub tail_tol: T,
    pub beta1: Complex<T>,
    pub beta2: Complex<T>,
    pub r_weight: RWeight,
    pub v_scaling: VScaling,
}

impl<T: Real> NeumannSeriesConfig<T> {
    /// `J = 8`, `tail_tol = 1e-6`, `β1 = β2 = 0`.
    pub fn new(tau: T) -> Self {
        Self {
            tau,
            max_terms: 8,
            tail_tol: T::lit(1e-6),
            beta1: Complex::new(T::zero(), T::zero()),
            beta2: Complex::new(T::zero(), T::zero()),
            r_weight: RWeight::default(),
            v_scaling: VScaling::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > T::zero()) || !self.tau.is_finite() {
            return Err(Error::InvalidParameter(format!("tau must be positive, got {}", self.tau)));
        }
        if self.max_terms < 2 {
            return Err(Error::InvalidParameter("max_terms must be at least 2".into()));
        }
        if !(self.tail_tol > T::zero()) {
            return Err(Error::InvalidParameter("tail_tol must be positive".into()));
        }
        Ok(())
    }
}

/// Truncated CGO series.
#[derive(Debug, Clone)]
pub struct CgoSolution<T> {
    pub phase: PhaseFunction<T>,
    pub tau: T,
    /// `terms[0] = 1`, then `U_1, U_2, ...` (or the `V_j`).
    pub terms: Vec<ComplexField<T>>,
    /// `Σ (-1)^j terms[j]`.
    pub amplitude: ComplexField<T>,
    /// `+1` for `e^{τΦ}`, `-1` for `e^{-τΦ̄}`.
    pub sign: i8,
    pub term_norms: Vec<T>,
    /// `max_j ‖term_{j+1}‖ / ‖term_j‖` over `j >= 1`.
    pub max_ratio: T,
    /// Whether the last term fell below `tail_tol * ‖term_1‖`.
    pub converged: bool,
}

impl<T: Real> CgoSolution<T> {
    pub fn grid(&self) -> Grid2D<T> {
        self.amplitude.grid
    }

    /// `e^{τΦ}` or `e^{-τΦ̄}` at `z`.
    pub fn exponential(&self, z: Complex<T>) -> Complex<T> {
        let p = self.phase.phi(z) * self.tau;
        if self.sign > 0 {
            p.exp()
        } else {
            (-p.conj()).exp()
        }
    }

    /// The solution itself, `e^{±…} × amplitude`, on `g` (a sub-grid of the
    /// series grid, or the series grid).
    pub fn solution_on(&self, g: Grid2D<T>) -> Result<ComplexField<T>> {
        let a = crate::grid::restrict(&self.amplitude, g)?;
        let mut out = a;
        for j in 0..g.ny {
            for i in 0..g.nx {
                let k = g.idx(i, j);
                out.values[k] = out.values[k] * self.exponential(g.z(i, j));
            }
        }
        Ok(out)
    }

    /// Consecutive ratios `‖term_{j+1}‖ / ‖term_j‖`, `j >= 1`.
    pub fn ratios(&self) -> Vec<T> {
        self.term_norms[1..]
            .windows(2)
            .map(|w| if w[0] > T::zero() { w[1] / w[0] } else { T::zero() })
            .collect()
    }

    /// Every ratio from `j = 1` on is at most ½.
    pub fn is_geometric(&self) -> bool {
        self.ratios().iter().all(|r| *r <= T::lit(0.5))
    }

    /// `‖Σ_{j>=2} (-1)^j term_j‖`.
    pub fn tail_norm(&self) -> T {
        let mut acc = ComplexField::zeros(self.grid());
        for (j, t) in self.terms.iter().enumerate().skip(2) {
            let s = if j % 2 == 0 { T::one() } else { -T::one() };
            acc = acc.zip(t, |a, b| a + b * s);
        }
        acc.norm_l2()
    }

    /// `Σ_{j>=2} ‖term_j‖`.
    pub fn tail_norm_sum(&self) -> T {
        self.term_norms.iter().skip(2).fold(T::zero(), |a, b| a + *b)
    }

    /// CSV rows `tau,y_re,y_im,j,term_norm,ratio` for `j >= 1`.
    pub fn diagnostics_rows(&self) -> Vec<String> {
        (1..self.term_norms.len())
            .map(|j| {
                let prev = self.term_norms[j - 1];
                let ratio = if prev > T::zero() { self.term_norms[j] / prev } else { T::zero() };
                format!(
                    "{:.16e},{:.16e},{:.16e},{},{:.16e},{:.16e}",
                    self.tau.to_f64_lossy(),
                    self.phase.y.re.to_f64_lossy(),
                    self.phase.y.im.to_f64_lossy(),
                    j,
                    self.term_norms[j].to_f64_lossy(),
                    ratio.to_f64_lossy()
                )
            })
            .collect()
    }
}

pub const DIAGNOSTICS_HEADER: &str = "tau,y_re,y_im,j,term_norm,ratio";

fn check_tau<T: Real>(tau: T) -> Result<()> {
    if !tau.is_finite() {
        return Err(Error::InvalidParameter("tau must be finite".into()));
    }
    Ok(())
}

/// `R̃_τ g = ½ e^{τ(Φ̄-Φ)} ∂_z⁻¹(g e^{τ(Φ-Φ̄)})`.
///
/// Negative `tau` gives `R̃_{-τ}`.
pub fn r_tilde_tau<T: Real>(
    kernel: &CauchyKernelTable<T>,
    g: &ComplexField<T>,
    phase: &PhaseFunction<T>,
    tau: T,
) -> Result<ComplexField<T>> {
    check_tau(tau)?;
    let w = phase.weight_field(g.grid, tau);
    let inner = kernel.dz_inv(&g.mul(&w));
    let half = T::lit(0.5);
    Ok(inner.zip(&w, |a, w| a * w.conj() * half))
}

/// `R_τ g = ½ e^{τ(Φ-Φ̄)} ∂_z̄⁻¹(g e^{τ(Φ̄-Φ)})`, or the literal variant.
///
/// Negative `tau` gives `R_{-τ}`.
pub fn r_tau<T: Real>(
    kernel: &CauchyKernelTable<T>,
    g: &ComplexField<T>,
    phase: &PhaseFunction<T>,
    tau: T,
    convention: RWeight,
) -> Result<ComplexField<T>> {
    check_tau(tau)?;
    let w = phase.weight_field(g.grid, tau);
    let inner = match convention {
        RWeight::Antisymmetric => kernel.dbar_inv(&g.zip(&w, |a, w| a * w.conj())),
        RWeight::Literal => kernel.dbar_inv(g),
    };
    let half = T::lit(0.5);
    Ok(inner.zip(&w, |a, w| a * w * half))
}

fn run_series<T: Real>(
    first_arg: ComplexField<T>,
    q: &ComplexField<T>,
    cfg: &NeumannSeriesConfig<T>,
    y: Complex<T>,
    sign: i8,
    mut step: impl FnMut(&ComplexField<T>) -> Result<ComplexField<T>>,
    mut inner: impl FnMut(&ComplexField<T>) -> ComplexField<T>,
) -> Result<CgoSolution<T>> {
    let grid = q.grid;
    let one = ComplexField::constant(grid, Complex::new(T::one(), T::zero()));
    let mut terms = vec![one.clone()];
    let mut norms = vec![one.norm_l2()];
    let u1 = step(&first_arg)?;
    norms.push(u1.norm_l2());
    terms.push(u1);
    let n1 = norms[1];
    let mut converged = n1 == T::zero();
    let mut max_ratio = T::zero();
    while !converged && terms.len() <= cfg.max_terms {
        let prev = terms.last().expect("non-empty");
        let next = step(&inner(&q.mul(prev)))?;
        let nn = next.norm_l2();
        let ratio = nn / norms[norms.len() - 1];
        max_ratio = max_ratio.max(ratio);
        norms.push(nn);
        terms.push(next);
        if ratio >= T::one() {
            return Err(Error::NonConvergence(format!(
                "series ratio {} >= 1 at tau = {}, y = ({}, {})",
                ratio, cfg.tau, y.re, y.im
            )));
        }
        converged = nn <= cfg.tail_tol * n1;
    }
    let mut amplitude = ComplexField::zeros(grid);
    for (j, t) in terms.iter().enumerate() {
        let s = if j % 2 == 0 { T::one() } else { -T::one() };
        amplitude = amplitude.zip(t, |a, b| a + b * s);
    }
    Ok(CgoSolution {
        phase: PhaseFunction::new(y),
        tau: cfg.tau,
        terms,
        amplitude,
        sign,
        term_norms: norms,
        max_ratio,
        converged,
    })
}

/// `U_0 = 1`, `U_1 = R̃_τ(½(∂_z̄⁻¹q1 - β1))`, `U_j = R̃_τ(½ ∂_z̄⁻¹(q1 U_{j-1}))`.
///
/// Terms are added until `‖U_j‖ <= tail_tol ‖U_1‖` or `j = J`; a ratio of
/// one or more is an error.
pub fn build_u1_series<T: Real>(
    kernel: &CauchyKernelTable<T>,
    q1: &ComplexField<T>,
    cfg: &NeumannSeriesConfig<T>,
    y: Complex<T>,
) -> Result<CgoSolution<T>> {
    cfg.validate()?;
    build_u1_series_signed(kernel, q1, cfg, y, cfg.tau)
}

/// As [`build_u1_series`] but with an arbitrary (possibly negative) `tau`.
pub fn build_u1_series_signed<T: Real>(
    kernel: &CauchyKernelTable<T>,
    q1: &ComplexField<T>,
    cfg: &NeumannSeriesConfig<T>,
    y: Complex<T>,
    tau: T,
) -> Result<CgoSolution<T>> {
    let phase = PhaseFunction::new(y);
    let half = T::lit(0.5);
    let first = kernel.dbar_inv(q1).map(|v| (v - cfg.beta1) * half);
    let mut sol = run_series(
        first,
        q1,
        &NeumannSeriesConfig { tau, ..*cfg },
        y,
        1,
        |g| r_tilde_tau(kernel, g, &phase, tau),
        |g| kernel.dbar_inv(g).map(|v| v * half),
    )?;
    sol.tau = tau;
    Ok(sol)
}

/// `V_0 = 1`, `V_1 = R_{-τ}(s(∂_z⁻¹q2 - β2))`, `V_j = R_{-τ}(s ∂_z⁻¹(q2 V_{j-1}))`
/// with `s` from [`VScaling`].
pub fn build_v_series<T: Real>(
    kernel: &CauchyKernelTable<T>,
    q2: &ComplexField<T>,
    cfg: &NeumannSeriesConfig<T>,
    y: Complex<T>,
) -> Result<CgoSolution<T>> {
    cfg.validate()?;
    let phase = PhaseFunction::new(y);
    let s = match cfg.v_scaling {
        VScaling::Half => T::lit(0.5),
        VScaling::Unit => T::one(),
    };
    let first = kernel.dz_inv(q2).map(|v| (v - cfg.beta2) * s);
    run_series(
        first,
        q2,
        cfg,
        y,
        -1,
        |g| r_tau(kernel, g, &phase, -cfg.tau, cfg.r_weight),
        |g| kernel.dz_inv(g).map(|v| v * s),
    )
}

/// Smallest `tau` in `taus` (ascending order assumed) whose series is
/// geometric with ratio at most ½.
pub fn measure_tau0<T: Real>(
    kernel: &CauchyKernelTable<T>,
    q1: &ComplexField<T>,
    cfg: &NeumannSeriesConfig<T>,
    y: Complex<T>,
    taus: &[T],
) -> Option<T> {
    taus.iter().copied().find(|&tau| {
        build_u1_series(kernel, q1, &NeumannSeriesConfig { tau, ..*cfg }, y)
            .map(|s| s.is_geometric())
            .unwrap_or(false)
    })
}

/// Five-point Laplacian at interior node `(i, j)`.
#[inline]
fn laplacian_at<T: Real>(f: &ComplexField<T>, i: usize, j: usize) -> Complex<T> {
    let g = &f.grid;
    let c = f.at(i, j) * T::lit(2.0);
    (f.at(i + 1, j) + f.at(i - 1, j) - c) / (g.hx * g.hx) + (f.at(i, j + 1) + f.at(i, j - 1) - c) / (g.hy * g.hy)
}

/// Default distance from `∂Π` below which residuals are not measured.
pub const RESIDUAL_MARGIN: f64 = 0.15;

/// Relative interior residual of `(Δ + q)` applied to the CGO solution.
///
/// The exponential is handled analytically:
/// `e^{-τΦ}(Δ + q)(e^{τΦ}A) = ΔA + 4τΦ'∂_z̄A + qA` (and the mirror for `v`),
/// so only the amplitude is differenced. Normalized by `‖qA‖`, or by `‖A‖`
/// when `q A` vanishes.
pub fn schrodinger_residual<T: Real>(sol: &CgoSolution<T>, q: &ComplexField<T>) -> Result<T> {
    schrodinger_residual_with_margin(sol, q, T::lit(RESIDUAL_MARGIN))
}

pub fn schrodinger_residual_with_margin<T: Real>(
    sol: &CgoSolution<T>,
    q: &ComplexField<T>,
    margin: T,
) -> Result<T> {
    let g = sol.grid();
    if q.grid != g {
        return Err(Error::IncompatibleGrids("potential and solution grids differ".into()));
    }
    let a = &sol.amplitude;
    let tau4 = sol.tau * T::lit(4.0);
    let two = T::lit(2.0);
    let (mut rr, mut qa, mut aa) = (T::zero(), T::zero(), T::zero());
    for j in 1..g.ny - 1 {
        for i in 1..g.nx - 1 {
            let z = g.z(i, j);
            if g.distance_to_boundary(z) < margin - T::epsilon() {
                continue;
            }
            let ax = (a.at(i + 1, j) - a.at(i - 1, j)) / (two * g.hx);
            let ay = (a.at(i, j + 1) - a.at(i, j - 1)) / (two * g.hy);
            let drift = if sol.sign > 0 {
                let dbar = (ax + ay * Complex::i()) / two;
                sol.phase.dphi(z) * dbar * tau4
            } else {
                let dz = (ax - ay * Complex::i()) / two;
                -(sol.phase.dphi(z).conj() * dz * tau4)
            };
            let qv = q.at(i, j) * a.at(i, j);
            let r = laplacian_at(a, i, j) + drift + qv;
            rr = rr + r.norm_sqr();
            qa = qa + qv.norm_sqr();
            aa = aa + a.at(i, j).norm_sqr();
        }
    }
    let den = if qa > T::zero() { qa } else { aa };
    if den == T::zero() {
        return Ok(T::zero());
    }
    Ok((rr / den).sqrt())
}

/// Relative interior residual computed by differencing the full solution
/// `e^{±…}A` with the five-point Laplacian; includes the discretization
/// error of the exponential itself. Normalized by `τ² ‖u‖`.
pub fn schrodinger_residual_direct<T: Real>(sol: &CgoSolution<T>, q: &ComplexField<T>, margin: T) -> Result<T> {
    let g = sol.grid();
    let u = sol.solution_on(g)?;
    let (mut rr, mut uu) = (T::zero(), T::zero());
    for j in 1..g.ny - 1 {
        for i in 1..g.nx - 1 {
            if g.distance_to_boundary(g.z(i, j)) < margin - T::epsilon() {
                continue;
            }
            let r = laplacian_at(&u, i, j) + q.at(i, j) * u.at(i, j);
            rr = rr + r.norm_sqr();
            uu = uu + u.at(i, j).norm_sqr();
        }
    }
    if uu == T::zero() {
        return Ok(T::zero());
    }
    Ok((rr / uu).sqrt() / (sol.tau * sol.tau))
}
