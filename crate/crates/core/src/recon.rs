//! Boundary pairing of CGO traces against DtN differences, pointwise
//! recovery of the potential and the decay studies.

use std::io::Write;
use std::path::Path;

use num_complex::Complex;
use rayon::prelude::*;

use crate::cauchy::CauchyKernelTable;
use crate::cgo::{build_u1_series, build_v_series, r_tilde_tau, NeumannSeriesConfig, PhaseFunction};
use crate::error::{Error, Result};
use crate::fit::{loglog_fit, richardson, LogLogFit};
use crate::forward::{BoundaryBasis, BoundaryFunction, DirichletSolver, DtNMap};
use crate::grid::{extend_zero, mollify, sample_potential, write_complex_pairs, ComplexField, Grid2D, PotentialSpec, CGO2_MAGIC};
use crate::osc::{
    estimate_op_norm, extract_constant, two_pi_constant, stationary_phase_integral, OscillatoryOperator,
};
use crate::scalar::{fabs, Real};

/// Boundary traces projected onto a DtN basis.
#[derive(Debug, Clone)]
pub struct ProjectedTraces<T> {
    pub f: Vec<Complex<T>>,
    pub g: Vec<Complex<T>>,
    /// Relative projection errors of the two traces.
    pub error_f: T,
    pub error_g: T,
}

pub fn project_traces<T: Real>(
    basis: &BoundaryBasis<T>,
    f: &BoundaryFunction<T>,
    g: &BoundaryFunction<T>,
) -> Result<ProjectedTraces<T>> {
    Ok(ProjectedTraces {
        f: basis.project(f)?,
        g: basis.project(g)?,
        error_f: basis.projection_error(f)?,
        error_g: basis.projection_error(g)?,
    })
}

/// `⟨(Λ1 - Λ2) f, g⟩` for coefficient vectors in the shared basis.
pub fn pairing_coeffs<T: Real>(
    dtn1: &DtNMap<T>,
    dtn2: &DtNMap<T>,
    basis: &BoundaryBasis<T>,
    f: &[Complex<T>],
    g: &[Complex<T>],
) -> Result<Complex<T>> {
    if !dtn1.same_basis(dtn2) || dtn1.grid != basis.grid || dtn1.modes != basis.modes {
        return Err(Error::BasisMismatch(format!(
            "DtN maps with {} and {} modes on {}x{} and {}x{} grids",
            dtn1.modes, dtn2.modes, dtn1.grid.nx, dtn1.grid.ny, dtn2.grid.nx, dtn2.grid.ny
        )));
    }
    let a = dtn1.apply(f);
    let b = dtn2.apply(f);
    let d: Vec<Complex<T>> = a.iter().zip(&b).map(|(x, y)| *x - *y).collect();
    Ok(basis.pair_coeffs(&d, g))
}

/// `⟨(Λ1 - Λ2) f, g⟩` with arc-length weighting, where `f` and `g` are
/// projected onto the maps' boundary basis first.
pub fn boundary_pairing<T: Real>(
    dtn1: &DtNMap<T>,
    dtn2: &DtNMap<T>,
    u_trace: &BoundaryFunction<T>,
    v_trace: &BoundaryFunction<T>,
) -> Result<Complex<T>> {
    if !dtn1.same_basis(dtn2) {
        return Err(Error::BasisMismatch("DtN maps use different bases".into()));
    }
    let basis = dtn1.basis()?;
    let p = project_traces(&basis, u_trace, v_trace)?;
    pairing_coeffs(dtn1, dtn2, &basis, &p.f, &p.g)
}

/// `∫ (q2 - q1) u1 u2` with `u_k` the interior solutions for potential `q_k`
/// and Dirichlet data given by basis coefficients. Equals the boundary
/// pairing of the same data.
pub fn volume_integral_oracle<T: Real>(
    q1: &ComplexField<T>,
    q2: &ComplexField<T>,
    basis: &BoundaryBasis<T>,
    f: &[Complex<T>],
    g: &[Complex<T>],
) -> Result<Complex<T>> {
    let u1 = DirichletSolver::new(q1)?.solve(&basis.reconstruct(f))?;
    let u2 = DirichletSolver::new(q2)?.solve(&basis.reconstruct(g))?;
    let dq = q2.sub(q1);
    Ok(dq.mul(&u1).mul(&u2).integral())
}

/// Where the centring constants of the correction term come from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaSource<T> {
    /// `β1 = ∂_z̄⁻¹q1(ŷ)`, `β2 = ∂_z⁻¹q2(ŷ)`.
    Centered,
    Zero,
    Fixed(Complex<T>, Complex<T>),
}

/// Centred constants `(∂_z̄⁻¹q1(ŷ), ∂_z⁻¹q2(ŷ))`; `ŷ` is the node nearest `y`.
pub fn centered_betas<T: Real>(
    kernel: &CauchyKernelTable<T>,
    q1: &ComplexField<T>,
    q2: &ComplexField<T>,
    y: Complex<T>,
) -> (Complex<T>, Complex<T>) {
    let b1 = kernel.dbar_inv(q1).at_point(y);
    let b2 = kernel.dz_inv(q2).at_point(y);
    (b1, b2)
}

/// `g = ¼[∂_z⁻¹q (∂_z̄⁻¹q1 - β1) + ∂_z̄⁻¹q (∂_z⁻¹q2 - β2)]` with `q = q1 - q2`.
///
/// The pairing is chosen so that every product matches the leading terms of
/// `u1` and `v`; with centred constants `g` vanishes at the node nearest `y`.
pub fn correction_terms<T: Real>(
    q1: &ComplexField<T>,
    q2: &ComplexField<T>,
    y: Complex<T>,
    beta: BetaSource<T>,
) -> Result<ComplexField<T>> {
    if q1.grid != q2.grid {
        return Err(Error::IncompatibleGrids("correction terms need a common grid".into()));
    }
    let kernel = CauchyKernelTable::new(q1.grid);
    correction_terms_with(&kernel, q1, q2, y, beta)
}

pub fn correction_terms_with<T: Real>(
    kernel: &CauchyKernelTable<T>,
    q1: &ComplexField<T>,
    q2: &ComplexField<T>,
    y: Complex<T>,
    beta: BetaSource<T>,
) -> Result<ComplexField<T>> {
    let (b1, b2) = match beta {
        BetaSource::Centered => centered_betas(kernel, q1, q2, y),
        BetaSource::Zero => (Complex::new(T::zero(), T::zero()), Complex::new(T::zero(), T::zero())),
        BetaSource::Fixed(a, b) => (a, b),
    };
    let q = q1.sub(q2);
    let a1 = kernel.dbar_inv(q1).map(|v| v - b1);
    let a2 = kernel.dz_inv(q2).map(|v| v - b2);
    let t1 = kernel.dz_inv(&q).mul(&a1);
    let t2 = kernel.dbar_inv(&q).mul(&a2);
    let quarter = Complex::new(T::lit(0.25), T::zero());
    Ok(t1.add(&t2).scale(quarter))
}

/// Source of the stationary-phase constant `c` in `τ I(τ, y) -> c q(y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConstantSource<T> {
    /// Measured on a reference gaussian by [`calibrate_constant`].
    Measured,
    /// `2π`.
    TwoPi,
    Fixed(T),
}

/// Calibration: unit gaussian of width 0.2 on `(-1,1)^2` with 257 nodes per
/// side, `τ ∈ {40, 80, 160, 320}`, centre point. Wider profiles alias at the
/// largest `τ`, where the trapezoid rule stops resolving `e^{4iτ x1 x2}`.
pub fn calibrate_constant<T: Real>() -> Result<T> {
    let g = Grid2D::square(257, T::one())?;
    let q = sample_potential(&PotentialSpec::gaussian(1.0, [0.0, 0.0], 0.2), g)?;
    let taus = [40.0, 80.0, 160.0, 320.0].map(T::lit);
    Ok(extract_constant(&q, Complex::new(T::zero(), T::zero()), &taus)?.value)
}

#[derive(Debug, Clone)]
pub struct RecoveryConfig<T> {
    /// Increasing, at least three values.
    pub taus: Vec<T>,
    pub points: Vec<Complex<T>>,
    /// Mollification radius applied to the potential used for the CGO
    /// amplitude and for the reported truth.
    pub epsilon: Option<T>,
    pub constant: ConstantSource<T>,
    /// Neumann-series settings; `tau` and `beta1` are set per point.
    pub series: NeumannSeriesConfig<T>,
    /// Error order of the extrapolation in `1/τ`.
    pub richardson_order: T,
    /// Minimum distance from a recovery point to `∂Ω`, as a fraction of the
    /// smaller half-side of `Ω`.
    pub interior_fraction: T,
    /// Grid on which the CGO series is built; must contain `Ω` on the same
    /// lattice. `None` builds it on `Ω` itself.
    pub cgo_grid: Option<Grid2D<T>>,
}

impl<T: Real> RecoveryConfig<T> {
    pub fn new(taus: Vec<T>, points: Vec<Complex<T>>) -> Self {
        let mut series = NeumannSeriesConfig::new(taus.first().copied().unwrap_or(T::one()));
        series.max_terms = 6;
        Self {
            taus,
            points,
            epsilon: None,
            constant: ConstantSource::Measured,
            series,
            richardson_order: T::lit(2.0),
            interior_fraction: T::lit(0.2),
            cgo_grid: None,
        }
    }

    pub fn validate(&self, omega: &Grid2D<T>) -> Result<()> {
        if self.taus.len() < 3 {
            return Err(Error::InvalidParameter("recovery needs at least three tau values".into()));
        }
        if self.taus.iter().any(|t| !(*t > T::zero()) || !t.is_finite()) || self.taus.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("tau values must be positive and increasing".into()));
        }
        if self.points.is_empty() {
            return Err(Error::InvalidParameter("no recovery points".into()));
        }
        let half = (omega.xmax - omega.xmin).min(omega.ymax - omega.ymin) * T::lit(0.5);
        let margin = self.interior_fraction * half;
        for y in &self.points {
            let d = omega.distance_to_boundary(*y);
            if d < margin {
                return Err(Error::NotInterior(format!(
                    "recovery point ({}, {}) is {} from the boundary, need {}",
                    y.re, y.im, d, margin
                )));
            }
        }
        // Oscillation 4τ|x - y| must stay resolved across the CGO grid.
        let g = self.cgo_grid.unwrap_or(*omega);
        let diam = ((g.xmax - g.xmin).powi(2) + (g.ymax - g.ymin).powi(2)).sqrt();
        let tau_max = *self.taus.last().expect("non-empty");
        let phase_step = T::lit(4.0) * tau_max * diam * g.max_spacing();
        if phase_step > T::PI() {
            return Err(Error::Resolution(format!(
                "tau = {tau_max} needs phase step {phase_step} <= pi on the CGO grid"
            )));
        }
        if let Some(e) = self.epsilon {
            if !(e > T::zero()) {
                return Err(Error::InvalidParameter("epsilon must be positive".into()));
            }
        }
        self.series.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveredPoint<T> {
    /// Requested point.
    pub y: Complex<T>,
    /// Grid node actually used.
    pub node: Complex<T>,
    pub qhat: Complex<T>,
    pub truth: T,
    pub rel_err: T,
    /// `(max - min) / |mean|` of the real parts of the per-τ estimates.
    pub tau_spread: T,
    pub per_tau: Vec<Complex<T>>,
    /// Largest relative projection error of the traces over τ.
    pub projection_error: T,
    /// Set when some τ failed; the point then carries no estimate.
    pub flag: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RecoveryResult<T> {
    pub constant: T,
    pub taus: Vec<T>,
    pub points: Vec<RecoveredPoint<T>>,
}

pub const RECOVERY_CSV_HEADER: &str = "y_re,y_im,qhat_re,qhat_im,truth,rel_err,tau_spread";

impl<T: Real> RecoveryResult<T> {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(RECOVERY_CSV_HEADER);
        s.push('\n');
        for p in &self.points {
            let f = |v: T| format!("{:.16e}", v.to_f64_lossy());
            s.push_str(&[f(p.y.re), f(p.y.im), f(p.qhat.re), f(p.qhat.im), f(p.truth), f(p.rel_err), f(p.tau_spread)].join(","));
            s.push('\n');
        }
        s
    }

    /// One row per `(y, τ)`: the raw estimate before extrapolation.
    pub fn per_tau_csv(&self) -> String {
        let mut s = String::from("y_re,y_im,tau,qhat_re,qhat_im\n");
        for p in &self.points {
            for (t, v) in self.taus.iter().zip(&p.per_tau) {
                s.push_str(&format!(
                    "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                    p.y.re.to_f64_lossy(),
                    p.y.im.to_f64_lossy(),
                    t.to_f64_lossy(),
                    v.re.to_f64_lossy(),
                    v.im.to_f64_lossy()
                ));
            }
        }
        s
    }

    /// CGO2 container with a `YPT1` sub-magic: point count, then `(y, q̂)`
    /// pairs. Recovery grids are usually too small for a field header.
    pub fn write_binary<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(CGO2_MAGIC)?;
        w.write_all(b"YPT1")?;
        w.write_all(&(self.points.len() as u32).to_le_bytes())?;
        let pairs: Vec<Complex<T>> = self.points.iter().flat_map(|p| [p.y, p.qhat]).collect();
        write_complex_pairs(w, &pairs)
    }

    pub fn write_binary_file(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_binary(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

/// Resolves the constant for a configuration.
pub fn resolve_constant<T: Real>(src: ConstantSource<T>) -> Result<T> {
    match src {
        ConstantSource::Measured => calibrate_constant(),
        ConstantSource::TwoPi => Ok(two_pi_constant()),
        ConstantSource::Fixed(c) => Ok(c),
    }
}

/// `q̂(y) = -(τ/c) ⟨(Λ_q - Λ_0) u1|, v|⟩` extrapolated over the τ list,
/// where `u1` is the CGO solution built from `q` (the synthetic truth) with
/// centred `β1` and `v = e^{-τΦ̄}`.
///
/// The minus sign follows from `⟨(Λ1 - Λ2) f, g⟩ = ∫ (q2 - q1) u1 u2`.
/// Swapping the two maps negates every estimate.
pub fn recover_pointwise<T: Real>(
    dtn_q: &DtNMap<T>,
    dtn_0: &DtNMap<T>,
    q: &ComplexField<T>,
    cfg: &RecoveryConfig<T>,
) -> Result<RecoveryResult<T>> {
    let omega = dtn_q.grid;
    if !dtn_q.same_basis(dtn_0) {
        return Err(Error::BasisMismatch("DtN maps use different bases".into()));
    }
    if q.grid != omega {
        return Err(Error::IncompatibleGrids("potential must live on the DtN grid".into()));
    }
    cfg.validate(&omega)?;
    let c = resolve_constant(cfg.constant)?;
    let q_eff = match cfg.epsilon {
        Some(e) => mollify(q, e)?,
        None => q.clone(),
    };
    let cgo_grid = cfg.cgo_grid.unwrap_or(omega);
    let q_cgo = if cgo_grid == omega { q_eff.clone() } else { extend_zero(&q_eff, cgo_grid)? };
    let kernel = CauchyKernelTable::new(cgo_grid);
    let dbar_q = kernel.dbar_inv(&q_cgo);
    let zero_q = ComplexField::zeros(cgo_grid);
    let basis = dtn_q.basis()?;
    let points: Vec<RecoveredPoint<T>> = cfg
        .points
        .par_iter()
        .map(|&y| {
            let (i, j) = omega.nearest_node(y);
            let node = omega.z(i, j);
            let truth = q_eff.at(i, j).re;
            let mut per_tau = Vec::with_capacity(cfg.taus.len());
            let mut proj = T::zero();
            let mut flag = None;
            for &tau in &cfg.taus {
                let est = (|| -> Result<(Complex<T>, T)> {
                    let sc = NeumannSeriesConfig { tau, beta1: dbar_q.at_point(node), ..cfg.series };
                    let u = build_u1_series(&kernel, &q_cgo, &sc, node)?;
                    let v = build_v_series(&kernel, &zero_q, &NeumannSeriesConfig::new(tau), node)?;
                    let f = BoundaryFunction::trace(&u.solution_on(omega)?);
                    let g = BoundaryFunction::trace(&v.solution_on(omega)?);
                    let p = project_traces(&basis, &f, &g)?;
                    let pair = pairing_coeffs(dtn_q, dtn_0, &basis, &p.f, &p.g)?;
                    Ok((pair * (-tau / c), p.error_f.max(p.error_g)))
                })();
                match est {
                    Ok((v, e)) => {
                        per_tau.push(v);
                        proj = proj.max(e);
                    }
                    Err(e) => {
                        flag = Some(format!("tau = {tau}, y = ({}, {}): {e}", y.re, y.im));
                        break;
                    }
                }
            }
            let nan = T::nan();
            if flag.is_some() {
                return RecoveredPoint {
                    y,
                    node,
                    qhat: Complex::new(nan, nan),
                    truth,
                    rel_err: nan,
                    tau_spread: nan,
                    per_tau,
                    projection_error: proj,
                    flag,
                };
            }
            let qhat = richardson(&cfg.taus, &per_tau, cfg.richardson_order).unwrap_or(Complex::new(nan, nan));
            let res: Vec<T> = per_tau.iter().map(|v| v.re).collect();
            let (lo, hi) = res.iter().fold((T::infinity(), T::neg_infinity()), |(a, b), v| (a.min(*v), b.max(*v)));
            let mean = res.iter().fold(T::zero(), |a, v| a + *v) / T::of(res.len());
            let tau_spread = if hi > lo { (hi - lo) / fabs(mean) } else { T::zero() };
            let rel_err = if truth != T::zero() {
                (qhat - Complex::new(truth, T::zero())).norm() / fabs(truth)
            } else {
                qhat.norm()
            };
            RecoveredPoint { y, node, qhat, truth, rel_err, tau_spread, per_tau, projection_error: proj, flag }
        })
        .collect();
    Ok(RecoveryResult { constant: c, taus: cfg.taus.clone(), points })
}

/// Quantity measured by a decay study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayKind {
    /// `‖R̃_τ g‖ / ‖g‖`.
    RTau,
    /// `‖T_τ‖` by power iteration.
    TTau,
    /// `‖Σ_{j>=2} (-1)^j U_j‖`.
    Tail,
    /// `|∫ g e^{τ(Φ-Φ̄)}|` for the centred correction term `g`.
    Correction,
}

impl DecayKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::RTau => "rtau",
            Self::TTau => "ttau",
            Self::Tail => "tail",
            Self::Correction => "correction",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "rtau" => Some(Self::RTau),
            "ttau" => Some(Self::TTau),
            "tail" => Some(Self::Tail),
            "correction" => Some(Self::Correction),
            _ => None,
        }
    }

    pub fn target(self) -> DecayTarget {
        match self {
            Self::RTau => DecayTarget::SlopeAtMost(-0.8),
            Self::TTau => DecayTarget::SlopeWithin(-1.15, -0.85),
            Self::Tail | Self::Correction => DecayTarget::ScaledDecreasing,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecayTarget {
    SlopeAtMost(f64),
    SlopeWithin(f64, f64),
    /// `τ × value` strictly decreasing along the τ grid.
    ScaledDecreasing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    /// The log-log fit is too poor to judge a slope.
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Pass => "pass",
            Self::Fail => "fail",
            Self::Inconclusive => "inconclusive",
        }
    }
}

/// RMS log-space residual above which a slope verdict is inconclusive.
pub const FIT_RESIDUAL_LIMIT: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct DecayStudy {
    pub quantity: String,
    pub taus: Vec<f64>,
    pub values: Vec<f64>,
    pub fit: LogLogFit,
    pub target: DecayTarget,
    pub verdict: Verdict,
}

impl DecayStudy {
    /// Fits and judges a set of measurements.
    pub fn from_measurements(quantity: &str, target: DecayTarget, taus: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if taus.len() < 4 {
            return Err(Error::InvalidParameter(format!("decay study needs at least 4 tau values, got {}", taus.len())));
        }
        let fit = loglog_fit(&taus, &values)?;
        let verdict = match target {
            DecayTarget::SlopeAtMost(_) | DecayTarget::SlopeWithin(..) if fit.rms_residual > FIT_RESIDUAL_LIMIT => {
                Verdict::Inconclusive
            }
            DecayTarget::SlopeAtMost(m) => {
                if fit.slope <= m {
                    Verdict::Pass
                } else {
                    Verdict::Fail
                }
            }
            DecayTarget::SlopeWithin(lo, hi) => {
                if (lo..=hi).contains(&fit.slope) {
                    Verdict::Pass
                } else {
                    Verdict::Fail
                }
            }
            DecayTarget::ScaledDecreasing => {
                let scaled: Vec<f64> = taus.iter().zip(&values).map(|(t, v)| t * v).collect();
                if scaled.windows(2).all(|w| w[1] < w[0]) {
                    Verdict::Pass
                } else {
                    Verdict::Fail
                }
            }
        };
        Ok(Self { quantity: quantity.to_string(), taus, values, fit, target, verdict })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("quantity,tau,value,tau_times_value,slope,fit_rms,verdict\n");
        for (t, v) in self.taus.iter().zip(&self.values) {
            s.push_str(&format!(
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}\n",
                self.quantity,
                t,
                v,
                t * v,
                self.fit.slope,
                self.fit.rms_residual,
                self.verdict.as_str()
            ));
        }
        s
    }

    pub fn summary_line(&self) -> String {
        let target = match self.target {
            DecayTarget::SlopeAtMost(m) => format!("slope <= {m}"),
            DecayTarget::SlopeWithin(a, b) => format!("slope in [{a}, {b}]"),
            DecayTarget::ScaledDecreasing => "tau*value decreasing".to_string(),
        };
        format!(
            "{}: {} (slope {:.4}, fit rms {:.2e}, target {})",
            self.quantity,
            self.verdict.as_str().to_uppercase(),
            self.fit.slope,
            self.fit.rms_residual,
            target
        )
    }
}

/// Inputs to [`run_decay_study`].
#[derive(Debug, Clone)]
pub struct DecayConfig<T> {
    pub taus: Vec<T>,
    /// Test function `g` for `rtau`, potential `q1` for `tail` and
    /// `correction`; only its grid is used by `ttau`.
    pub field: ComplexField<T>,
    /// `q2` for `correction` (zero when absent).
    pub field2: Option<ComplexField<T>>,
    pub y: Complex<T>,
    /// Half-side of `Ω` for `ttau`.
    pub omega_half: T,
    pub power_iters: usize,
    pub series: NeumannSeriesConfig<T>,
}

impl<T: Real> DecayConfig<T> {
    pub fn new(taus: Vec<T>, field: ComplexField<T>) -> Self {
        let series = NeumannSeriesConfig::new(taus.first().copied().unwrap_or(T::one()));
        Self {
            taus,
            field,
            field2: None,
            y: Complex::new(T::zero(), T::zero()),
            omega_half: T::lit(0.45),
            power_iters: 400,
            series,
        }
    }
}

/// Measures one quantity over the τ grid and judges it against its target.
pub fn run_decay_study<T: Real>(kind: DecayKind, cfg: &DecayConfig<T>) -> Result<DecayStudy> {
    if cfg.taus.len() < 4 {
        return Err(Error::InvalidParameter(format!("decay study needs at least 4 tau values, got {}", cfg.taus.len())));
    }
    let g = cfg.field.grid;
    let values: Vec<T> = match kind {
        DecayKind::RTau => {
            let kernel = CauchyKernelTable::new(g);
            let phase = PhaseFunction::new(cfg.y);
            let n0 = cfg.field.norm_l2();
            if n0 == T::zero() {
                return Err(Error::ZeroValue("rtau study needs a non-zero field".into()));
            }
            cfg.taus
                .iter()
                .map(|&t| Ok(r_tilde_tau(&kernel, &cfg.field, &phase, t)?.norm_l2() / n0))
                .collect::<Result<_>>()?
        }
        DecayKind::TTau => cfg
            .taus
            .par_iter()
            .map(|&t| {
                let op = OscillatoryOperator::centered(g, t, cfg.omega_half)?;
                Ok(estimate_op_norm(&op, cfg.power_iters)?.norm)
            })
            .collect::<Result<_>>()?,
        DecayKind::Tail => {
            let kernel = CauchyKernelTable::new(g);
            cfg.taus
                .iter()
                .map(|&t| {
                    let sc = NeumannSeriesConfig { tau: t, ..cfg.series };
                    Ok(build_u1_series(&kernel, &cfg.field, &sc, cfg.y)?.tail_norm())
                })
                .collect::<Result<_>>()?
        }
        DecayKind::Correction => {
            let q2 = cfg.field2.clone().unwrap_or_else(|| ComplexField::zeros(g));
            let (i, j) = g.nearest_node(cfg.y);
            let node = g.z(i, j);
            let gc = correction_terms(&cfg.field, &q2, node, BetaSource::Centered)?;
            cfg.taus
                .iter()
                .map(|&t| Ok(stationary_phase_integral(&gc, node, t)?.norm()))
                .collect::<Result<_>>()?
        }
    };
    DecayStudy::from_measurements(
        kind.name(),
        kind.target(),
        cfg.taus.iter().map(|t| t.to_f64_lossy()).collect(),
        values.iter().map(|v| v.to_f64_lossy()).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::assemble_dtn;

    #[test]
    fn constant_input_fails_every_target() {
        let taus = vec![10.0, 20.0, 40.0, 80.0];
        for kind in [DecayKind::RTau, DecayKind::TTau, DecayKind::Tail, DecayKind::Correction] {
            let s = DecayStudy::from_measurements(kind.name(), kind.target(), taus.clone(), vec![1.0; 4]).unwrap();
            assert_eq!(s.verdict, Verdict::Fail, "{}", kind.name());
        }
        assert!(DecayStudy::from_measurements("x", DecayTarget::ScaledDecreasing, vec![1.0, 2.0, 3.0], vec![1.0; 3]).is_err());
    }

    #[test]
    fn noisy_fit_is_inconclusive() {
        let taus = vec![10.0, 20.0, 40.0, 80.0];
        let s = DecayStudy::from_measurements("rtau", DecayTarget::SlopeAtMost(-0.8), taus, vec![1.0, 0.01, 0.5, 0.004]).unwrap();
        assert_eq!(s.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn correction_vanishes_for_equal_potentials_and_at_node() {
        let g = Grid2D::<f64>::square(33, 1.0).unwrap();
        let q = sample_potential(&PotentialSpec::gaussian(1.0, [0.1, 0.0], 0.3), g).unwrap();
        let z = correction_terms(&q, &q, Complex::new(0.0, 0.0), BetaSource::Centered).unwrap();
        assert!(z.max_abs() == 0.0);
        let zero = ComplexField::zeros(g);
        let y = g.z(20, 14);
        let c = correction_terms(&q, &zero, y, BetaSource::Centered).unwrap();
        assert!(c.at(20, 14).norm() < 1e-14);
        assert!(c.max_abs() > 1e-3);
    }

    #[test]
    fn pairing_basics() {
        let g = Grid2D::<f64>::square(33, 0.5).unwrap();
        let q = sample_potential(&PotentialSpec::gaussian(2.0, [0.0, 0.0], 0.2), g).unwrap();
        let d1 = assemble_dtn(&q, 16).unwrap();
        let d0 = assemble_dtn(&ComplexField::zeros(g), 16).unwrap();
        let f = BoundaryFunction::from_fn(g, |z| (z * 1.5).exp());
        let h = BoundaryFunction::from_fn(g, |z| (z.conj() * -1.5).exp());
        assert!(boundary_pairing(&d1, &d1, &f, &h).unwrap().norm() <= 1e-10);
        let a = boundary_pairing(&d1, &d0, &f, &h).unwrap();
        let b = boundary_pairing(&d0, &d1, &f, &h).unwrap();
        assert!((a + b).norm() <= 1e-10);
        let basis = d1.basis().unwrap();
        let p = project_traces(&basis, &f, &h).unwrap();
        let vol = volume_integral_oracle(&q, &ComplexField::zeros(g), &basis, &p.f, &p.g).unwrap();
        assert!((a - vol).norm() <= 1e-8 * vol.norm());
        let d8 = assemble_dtn(&q, 8).unwrap();
        assert!(matches!(boundary_pairing(&d1, &d8, &f, &h), Err(Error::BasisMismatch(_))));
    }
}
