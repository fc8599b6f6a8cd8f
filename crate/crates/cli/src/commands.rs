//! Subcommand drivers. Each returns the artifacts to write and the checks
//! that decide the exit code; nothing here touches the filesystem.

use cgo_core::cauchy::{CauchyKernelTable, Transform};
use cgo_core::cgo::{
    build_u1_series, build_v_series, measure_tau0, schrodinger_residual, schrodinger_residual_direct,
    NeumannSeriesConfig, DIAGNOSTICS_HEADER, RESIDUAL_MARGIN,
};
use cgo_core::forward::{assemble_dtn, manufactured_error, BoundaryFunction, DtNMap};
use cgo_core::grid::{mollify, write_cgo2, sample_potential, ComplexField, Grid2D, PotentialSpec};
use cgo_core::osc::{extract_constant, two_pi_constant, phase_csv_row, PHASE_CSV_HEADER};
use cgo_core::recon::{
    boundary_pairing, centered_betas, project_traces, recover_pointwise, run_decay_study, volume_integral_oracle,
    DecayConfig, DecayKind, DecayStudy, RecoveryConfig, Verdict,
};
use num_complex::Complex;

use crate::config::RunConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    /// File name and contents.
    pub artifacts: Vec<(String, Vec<u8>)>,
}

impl Outcome {
    fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check { name: name.into(), passed, detail: detail.into() });
    }

    fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    fn file(&mut self, name: &str, body: impl Into<Vec<u8>>) {
        self.artifacts.push((name.to_string(), body.into()));
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Plain-text report, one line per check.
    pub fn summary(&self, command: &str) -> String {
        let mut s = format!("cgo-calderon {command}\n");
        for c in &self.checks {
            s.push_str(&format!("{} {}: {}\n", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail));
        }
        for n in &self.notes {
            s.push_str(&format!("INFO {n}\n"));
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        s.push_str(&format!("{} checks, {} failed\n", self.checks.len(), failed));
        s
    }
}

pub type CmdResult = Result<Outcome, cgo_core::Error>;

fn e(x: f64) -> String {
    format!("{x:.16e}")
}

fn potential_on(spec: &PotentialSpec<f64>, g: Grid2D<f64>, eps: Option<f64>) -> Result<ComplexField<f64>, cgo_core::Error> {
    let q = sample_potential(spec, g)?;
    match eps {
        Some(e) => mollify(&q, e),
        None => Ok(q),
    }
}

pub fn forward(cfg: &RunConfig) -> CmdResult {
    let mut out = Outcome::default();
    let g = cfg.omega();
    let q = potential_on(&cfg.potential, g, cfg.epsilon)?;
    let dq = assemble_dtn(&q, cfg.modes)?;
    let d0 = assemble_dtn(&ComplexField::zeros(g), cfg.modes)?;
    let c0 = d0.column_norm(0);
    out.check("zero potential, constant Dirichlet data", c0 <= 1e-8, format!("Neumann coefficient norm {c0:.3e} (<= 1e-8)"));
    if q.is_real() {
        let a = dq.relative_asymmetry()?;
        out.check("DtN symmetry", a <= 1e-6, format!("relative asymmetry {a:.3e} (<= 1e-6)"));
    }
    out.note(format!("||Lambda_q - Lambda_0||_F = {:.6e}", dq.frobenius_distance(&d0)?));
    out.file("dtn_q.csv", dq.to_csv());
    out.file("dtn_0.csv", d0.to_csv());
    let mut bin = Vec::new();
    dq.write_binary(&mut bin)?;
    out.file("dtn_q.bin", bin);
    if !cfg.manufactured.is_empty() {
        let errs = cfg
            .manufactured
            .iter()
            .map(|&n| manufactured_error::<f64>(n, cfg.half_side))
            .collect::<Result<Vec<_>, _>>()?;
        let mut csv = String::from("n,solution_error,trace_error,solution_ratio,trace_ratio\n");
        for (k, m) in errs.iter().enumerate() {
            let (rs, rt) = if k > 0 {
                (errs[k - 1].solution / m.solution, errs[k - 1].trace / m.trace)
            } else {
                (f64::NAN, f64::NAN)
            };
            csv.push_str(&format!("{},{},{},{},{}\n", m.n, e(m.solution), e(m.trace), e(rs), e(rt)));
            if k > 0 {
                let ok = (3.5..=4.5).contains(&rs) && (3.5..=4.5).contains(&rt);
                out.check(
                    format!("manufactured refinement {} -> {}", errs[k - 1].n, m.n),
                    ok,
                    format!("solution ratio {rs:.3}, trace ratio {rt:.3} (in [3.5, 4.5])"),
                );
            }
        }
        out.file("manufactured.csv", csv);
    }
    Ok(out)
}

fn series_cfg(cfg: &RunConfig, tau: f64) -> NeumannSeriesConfig<f64> {
    NeumannSeriesConfig { tau, ..cfg.series }
}

pub fn cgo(cfg: &RunConfig) -> CmdResult {
    let mut out = Outcome::default();
    let g = cfg.pi();
    let q1 = potential_on(&cfg.potential, g, cfg.epsilon)?;
    let q2 = potential_on(&cfg.potential2, g, cfg.epsilon)?;
    let kernel = CauchyKernelTable::new(g);
    let zero_q = q1.max_abs() == 0.0;
    let y0 = cfg.points[0];
    let tau0 = if zero_q { Some(0.0) } else { measure_tau0(&kernel, &q1, &cfg.series, y0, &cfg.tau0_candidates) };
    match tau0 {
        Some(t) => out.note(format!("measured tau0 = {t} at y = ({}, {})", y0.re, y0.im)),
        None => out.check("tau0", false, "no candidate tau gives ratios <= 1/2"),
    }
    let mut terms = format!("series,{DIAGNOSTICS_HEADER}\n");
    let mut res = String::from("series,tau,y_re,y_im,terms,max_ratio,residual,residual_direct\n");
    for &tau in &cfg.taus {
        for &y in &cfg.points {
            let mut sc = series_cfg(cfg, tau);
            if cfg.centered_beta {
                let (b1, b2) = centered_betas(&kernel, &q1, &q2, y);
                sc.beta1 = b1;
                sc.beta2 = b2;
            }
            let at = format!("tau = {tau}, y = ({}, {})", y.re, y.im);
            for (name, q) in [("u", &q1), ("v", &q2)] {
                let sol = if name == "u" { build_u1_series(&kernel, q, &sc, y) } else { build_v_series(&kernel, q, &sc, y) };
                let sol = match sol {
                    Ok(s) => s,
                    Err(err) => {
                        out.check(format!("{name} series at {at}"), false, err.to_string());
                        continue;
                    }
                };
                for row in sol.diagnostics_rows() {
                    terms.push_str(&format!("{name},{row}\n"));
                }
                if tau == cfg.taus[0] && y == y0 {
                    let mut bin = Vec::new();
                    write_cgo2(&mut bin, &sol.amplitude)?;
                    out.file(&format!("{name}_amplitude.cgo2"), bin);
                }
                let r = schrodinger_residual(&sol, q)?;
                let rd = schrodinger_residual_direct(&sol, q, RESIDUAL_MARGIN)?;
                res.push_str(&format!(
                    "{name},{},{},{},{},{},{},{}\n",
                    e(tau),
                    e(y.re),
                    e(y.im),
                    sol.terms.len() - 1,
                    e(sol.max_ratio),
                    e(r),
                    e(rd)
                ));
                if q.max_abs() == 0.0 {
                    out.check(
                        format!("{name} exact-solution case at {at}"),
                        r == 0.0,
                        format!("q = 0, amplitude 1, residual {r:.3e}"),
                    );
                } else if tau0.is_some_and(|t| tau >= t) {
                    let ratios = sol.ratios();
                    let worst = ratios.iter().cloned().fold(0.0, f64::max);
                    out.check(
                        format!("{name} series geometric at {at}"),
                        sol.is_geometric(),
                        format!("largest consecutive ratio {worst:.4} (<= 0.5), residual {r:.3e}"),
                    );
                }
            }
        }
    }
    out.file("cgo_terms.csv", terms);
    out.file("cgo_residual.csv", res);
    Ok(out)
}

pub fn decay(cfg: &RunConfig) -> CmdResult {
    let mut out = Outcome::default();
    let g = cfg.pi();
    let field = match cfg.decay_kind {
        DecayKind::TTau => ComplexField::zeros(g),
        _ => potential_on(&cfg.potential, g, cfg.epsilon)?,
    };
    let mut dc = DecayConfig::new(cfg.taus.clone(), field);
    dc.field2 = Some(potential_on(&cfg.potential2, g, cfg.epsilon)?);
    dc.y = cfg.points[0];
    dc.omega_half = cfg.omega_half;
    dc.power_iters = cfg.power_iters;
    dc.series = cfg.series;
    let study = run_decay_study(cfg.decay_kind, &dc)?;
    record_study(&mut out, &study);
    Ok(out)
}

fn record_study(out: &mut Outcome, s: &DecayStudy) {
    out.check(format!("decay {}", s.quantity), s.verdict == Verdict::Pass, s.summary_line());
    out.file(&format!("decay_{}.csv", s.quantity), s.to_csv());
}

pub fn phase(cfg: &RunConfig) -> CmdResult {
    let mut out = Outcome::default();
    let g = cfg.pi();
    let q = potential_on(&cfg.potential, g, cfg.epsilon)?;
    let mut rows = format!("{PHASE_CSV_HEADER}\n");
    let mut consts = String::from("y_re,y_im,constant,spread,two_pi,ratio_to_two_pi\n");
    let mut values = Vec::new();
    for &y in &cfg.points {
        let est = extract_constant(&q, y, &cfg.taus)?;
        let qy = q.at_point(y);
        for (t, s) in est.taus.iter().zip(&est.scaled) {
            rows.push_str(&phase_csv_row(*t, y, *s * qy / *t));
            rows.push('\n');
        }
        let p = two_pi_constant::<f64>();
        consts.push_str(&format!("{},{},{},{},{},{}\n", e(y.re), e(y.im), e(est.value), e(est.spread), e(p), e(est.value / p)));
        out.check(
            format!("tau*I convergence at y = ({}, {})", y.re, y.im),
            est.spread <= cfg.max_spread,
            format!("spread {:.4} over the top three taus (<= {})", est.spread, cfg.max_spread),
        );
        out.note(format!(
            "constant {:.6} at y = ({}, {}); the stated 2*pi = {:.6}, ratio {:.4}",
            est.value,
            y.re,
            y.im,
            p,
            est.value / p
        ));
        values.push(est.value);
    }
    if values.len() > 1 {
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let dev = values.iter().map(|v| (v - mean).abs() / mean.abs()).fold(0.0, f64::max);
        out.check("constant independent of the point", dev <= 0.05, format!("max relative deviation {dev:.4} (<= 0.05)"));
    }
    out.file("phase.csv", rows);
    out.file("constant.csv", consts);
    Ok(out)
}

pub fn pair(cfg: &RunConfig) -> CmdResult {
    let mut out = Outcome::default();
    let g = cfg.omega();
    let q1 = potential_on(&cfg.potential, g, cfg.epsilon)?;
    let q2 = potential_on(&cfg.potential2, g, cfg.epsilon)?;
    let d1 = assemble_dtn(&q1, cfg.modes)?;
    let d2 = assemble_dtn(&q2, cfg.modes)?;
    let basis = d1.basis()?;
    let kernel = CauchyKernelTable::new(g);
    let mut csv = String::from(
        "tau,y_re,y_im,pairing_re,pairing_im,volume_re,volume_im,rel_err,projection_error_u,projection_error_v\n",
    );
    for &tau in &cfg.taus {
        for &y in &cfg.points {
            let sc = series_cfg(cfg, tau);
            let u = build_u1_series(&kernel, &q1, &sc, y)?;
            let v = build_v_series(&kernel, &q2, &sc, y)?;
            let f = BoundaryFunction::trace(&u.solution_on(g)?);
            let h = BoundaryFunction::trace(&v.solution_on(g)?);
            let p = boundary_pairing(&d1, &d2, &f, &h)?;
            let t = project_traces(&basis, &f, &h)?;
            let vol = volume_integral_oracle(&q1, &q2, &basis, &t.f, &t.g)?;
            let rel = if vol.norm() > 0.0 { (p - vol).norm() / vol.norm() } else { p.norm() };
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                e(tau),
                e(y.re),
                e(y.im),
                e(p.re),
                e(p.im),
                e(vol.re),
                e(vol.im),
                e(rel),
                e(t.error_f),
                e(t.error_g)
            ));
            let at = format!("tau = {tau}, y = ({}, {})", y.re, y.im);
            out.check(
                format!("pairing equals volume integral at {at}"),
                rel <= cfg.pair_tolerance,
                format!("relative error {rel:.3e} (<= {})", cfg.pair_tolerance),
            );
            let same = boundary_pairing(&d1, &d1, &f, &h)?.norm();
            out.check(format!("identical maps at {at}"), same <= 1e-10, format!("|pairing| {same:.3e} (<= 1e-10)"));
            let swap = (boundary_pairing(&d2, &d1, &f, &h)? + p).norm();
            out.check(format!("swapping potentials at {at}"), swap <= 1e-10, format!("|P12 + P21| {swap:.3e} (<= 1e-10)"));
        }
    }
    out.file("pair.csv", csv);
    Ok(out)
}

pub fn recover(cfg: &RunConfig) -> CmdResult {
    let mut out = Outcome::default();
    let g = cfg.omega();
    let q = sample_potential(&cfg.potential, g)?;
    let dq = assemble_dtn(&q, cfg.modes)?;
    let d0 = assemble_dtn(&ComplexField::zeros(g), cfg.modes)?;
    let rc = recovery_config(cfg);
    let r = recover_pointwise(&dq, &d0, &q, &rc)?;
    out.note(format!("stationary-phase constant {:.6} (stated 2*pi = {:.6})", r.constant, two_pi_constant::<f64>()));
    let flagged: Vec<&String> = r.points.iter().filter_map(|p| p.flag.as_ref()).collect();
    out.check(
        "every point recovered",
        flagged.is_empty(),
        if flagged.is_empty() { format!("{} points", r.points.len()) } else { flagged.iter().map(|s| s.as_str()).collect::<Vec<_>>().join("; ") },
    );
    let peak = r.points.iter().map(|p| p.truth.abs()).fold(0.0, f64::max);
    if peak == 0.0 {
        let m = r.points.iter().map(|p| p.qhat.norm()).fold(0.0, f64::max);
        out.check("zero potential recovers zero", m <= 1e-6, format!("max |qhat| {m:.3e} (<= 1e-6)"));
    } else {
        for p in r.points.iter().filter(|p| p.flag.is_none() && p.truth.abs() >= 0.5 * peak) {
            out.check(
                format!("recovery at y = ({}, {})", p.y.re, p.y.im),
                p.rel_err <= 0.2,
                format!("qhat {:.4} vs truth {:.4}, relative error {:.4} (<= 0.2), tau spread {:.3}", p.qhat.re, p.truth, p.rel_err, p.tau_spread),
            );
        }
    }
    let proj = r.points.iter().map(|p| p.projection_error).fold(0.0, f64::max);
    out.note(format!("largest trace projection error {proj:.3e}"));
    out.file("recovery.csv", r.to_csv());
    out.file("recovery_tau.csv", r.per_tau_csv());
    let mut bin = Vec::new();
    r.write_binary(&mut bin)?;
    out.file("recovery.bin", bin);
    Ok(out)
}

pub fn recovery_config(cfg: &RunConfig) -> RecoveryConfig<f64> {
    let mut rc = RecoveryConfig::new(cfg.taus.clone(), cfg.points.clone());
    rc.epsilon = cfg.epsilon;
    rc.constant = cfg.constant;
    rc.series = cfg.series;
    rc.richardson_order = cfg.richardson_order;
    rc.interior_fraction = cfg.interior_fraction;
    rc
}

/// Fast internal consistency checks on small grids.
pub fn selftest(cfg: &RunConfig) -> CmdResult {
    let mut out = Outcome::default();
    let n = cfg.n.min(33);
    let g = Grid2D::square(n, 1.0)?;
    let q = sample_potential(&PotentialSpec::gaussian(1.0, [0.1, -0.1], 0.3), g)?;
    let kernel = CauchyKernelTable::new(g);
    let fast = kernel.apply(&q, Transform::DbarInv);
    let dense = kernel.apply_dense(&q, Transform::DbarInv);
    let d = fast.sub(&dense).max_abs() / dense.max_abs();
    out.check("fast Cauchy transform matches dense sum", d <= 1e-11, format!("relative difference {d:.3e}"));
    let d0 = assemble_dtn(&ComplexField::zeros(g), 8)?;
    let c0 = d0.column_norm(0);
    out.check("constant mode is harmonic", c0 <= 1e-8, format!("coefficient norm {c0:.3e}"));
    let again: DtNMap<f64> = assemble_dtn(&ComplexField::zeros(g), 8)?;
    out.check("DtN assembly is repeatable", again == d0, "bit-identical matrices".to_string());
    let flat = DecayStudy::from_measurements(
        "synthetic",
        DecayKind::RTau.target(),
        vec![10.0, 20.0, 40.0, 80.0],
        vec![1.0; 4],
    )?;
    out.check(
        "non-decaying input is rejected",
        flat.verdict == Verdict::Fail,
        format!("verdict {} for slope {:.2}", flat.verdict.as_str(), flat.fit.slope),
    );
    let zero_sol = build_u1_series(&kernel, &ComplexField::zeros(g), &NeumannSeriesConfig::new(5.0), Complex::new(0.0, 0.0))?;
    let r = schrodinger_residual(&zero_sol, &ComplexField::zeros(g))?;
    out.check("q = 0 CGO solution is exact", r == 0.0, format!("residual {r:.3e}"));
    Ok(out)
}
