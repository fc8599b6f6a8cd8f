//! Line-oriented `section.key = value` configuration.
//!
//! `#` starts a comment. Every key must appear in [`SCHEMA`]; a repeated key
//! is an error. All values are checked before any computation runs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use cgo_core::cgo::{NeumannSeriesConfig, RWeight, VScaling};
use cgo_core::grid::{Grid2D, PotentialSpec};
use cgo_core::recon::{ConstantSource, DecayKind};
use num_complex::Complex;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` given twice")]
    Duplicate { line: usize, key: String },
    #[error("missing required key `{0}`")]
    Missing(String),
    #[error("key `{key}`{at}: {msg}")]
    Invalid { key: String, at: String, msg: String },
    #[error("cannot read config {path}: {msg}")]
    Read { path: String, msg: String },
}

/// Every accepted key with a one-line description.
pub const SCHEMA: &[(&str, &str)] = &[
    ("grid.n", "nodes per side (required, >= 8)"),
    ("grid.half_side", "half-side a of the domain (-a, a)^2 used for DtN maps, default 1"),
    ("grid.K", "half-side of the CGO/operator domain Pi, default 1.5"),
    ("potential.kind", "zero | gaussian | two_bumps | disk_indicator | file"),
    ("potential.amplitude", "amplitude, default 1"),
    ("potential.center", "x1, x2 (default 0, 0)"),
    ("potential.width", "gaussian width, default 0.3"),
    ("potential.radius", "disk radius, default 0.5"),
    ("potential.path", "CGO2 file for kind = file, relative to the config"),
    ("potential2.kind", "second potential, default zero"),
    ("potential2.amplitude", ""),
    ("potential2.center", ""),
    ("potential2.width", ""),
    ("potential2.radius", ""),
    ("potential2.path", ""),
    ("tau.list", "comma-separated increasing tau values"),
    ("y.points", "evaluation points `x1 x2; x1 x2; ...`, default the origin"),
    ("y.grid", "`n, half`: n x n points filling (-half, half)^2 (overrides y.points)"),
    ("dtn.modes", "boundary modes M, default min(32, n - 1)"),
    ("mollify.epsilon", "mollification radius (off by default)"),
    ("series.max_terms", "Neumann-series terms J, default 8"),
    ("series.tail_tol", "relative tail tolerance, default 1e-6"),
    ("series.r_weight", "antisymmetric | literal"),
    ("series.v_scaling", "half | unit"),
    ("series.beta", "zero | centered"),
    ("series.tau0_candidates", "taus scanned for the geometric threshold"),
    ("recover.constant", "measured | two_pi"),
    ("recover.richardson_order", "error order of the tau extrapolation, default 2"),
    ("recover.interior_fraction", "minimum point distance to the boundary over the half-side, default 0.2"),
    ("decay.kind", "rtau | ttau | tail | correction"),
    ("decay.omega_half", "half-side of the window plateau for ttau, default 0.45"),
    ("decay.power_iters", "power-iteration budget, default 400"),
    ("phase.max_spread", "allowed spread of tau*I over the top three taus, default 0.05"),
    ("forward.manufactured", "node counts for the manufactured-solution table"),
    ("pair.tolerance", "relative pairing-vs-volume tolerance, default 1e-3"),
    ("run.threads", "worker threads, default 1"),
];

fn known(key: &str) -> bool {
    SCHEMA.iter().any(|(k, _)| *k == key)
}

/// Raw key/value pairs with their line numbers.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, (usize, String)>,
    base: PathBuf,
}

impl RawConfig {
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                msg: format!("expected `section.key = value`, got `{body}`"),
            })?;
            let key = key.trim();
            if !key.contains('.') {
                return Err(ConfigError::Syntax { line, msg: format!("key `{key}` has no section") });
            }
            if !known(key) {
                return Err(ConfigError::UnknownKey { line, key: key.to_string() });
            }
            if entries.insert(key.to_string(), (line, value.trim().to_string())).is_some() {
                return Err(ConfigError::Duplicate { line, key: key.to_string() });
            }
        }
        Ok(Self { entries, base: base.to_path_buf() })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Read { path: path.display().to_string(), msg: e.to_string() })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    fn get(&self, key: &str) -> Option<&(usize, String)> {
        self.entries.get(key)
    }

    fn invalid(&self, key: &str, msg: impl Into<String>) -> ConfigError {
        let at = self.get(key).map(|(l, _)| format!(" (line {l})")).unwrap_or_default();
        ConfigError::Invalid { key: key.to_string(), at, msg: msg.into() }
    }

    fn float(&self, key: &str, default: Option<f64>) -> Result<f64, ConfigError> {
        match self.get(key) {
            Some((_, v)) => {
                let x: f64 = v.parse().map_err(|_| self.invalid(key, format!("`{v}` is not a number")))?;
                if !x.is_finite() {
                    return Err(self.invalid(key, "value must be finite"));
                }
                Ok(x)
            }
            None => default.ok_or_else(|| ConfigError::Missing(key.to_string())),
        }
    }

    fn int(&self, key: &str, default: Option<usize>) -> Result<usize, ConfigError> {
        match self.get(key) {
            Some((_, v)) => v.parse().map_err(|_| self.invalid(key, format!("`{v}` is not a non-negative integer"))),
            None => default.ok_or_else(|| ConfigError::Missing(key.to_string())),
        }
    }

    fn floats(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        let Some((_, v)) = self.get(key) else { return Ok(None) };
        v.split(',')
            .map(|s| {
                let s = s.trim();
                s.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| self.invalid(key, format!("`{s}` is not a number")))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    fn word<'a>(&'a self, key: &str, default: &'a str, allowed: &[&str]) -> Result<&'a str, ConfigError> {
        let v = self.get(key).map(|(_, v)| v.as_str()).unwrap_or(default);
        if allowed.contains(&v) {
            Ok(v)
        } else {
            Err(self.invalid(key, format!("`{v}` is not one of {}", allowed.join(", "))))
        }
    }

    fn has(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }
}

/// Validated configuration shared by every subcommand.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub n: usize,
    pub half_side: f64,
    pub k: f64,
    pub potential: PotentialSpec<f64>,
    pub potential2: PotentialSpec<f64>,
    pub taus: Vec<f64>,
    pub points: Vec<Complex<f64>>,
    pub modes: usize,
    pub epsilon: Option<f64>,
    pub series: NeumannSeriesConfig<f64>,
    pub centered_beta: bool,
    pub tau0_candidates: Vec<f64>,
    pub constant: ConstantSource<f64>,
    pub richardson_order: f64,
    pub interior_fraction: f64,
    pub decay_kind: DecayKind,
    pub omega_half: f64,
    pub power_iters: usize,
    pub max_spread: f64,
    pub manufactured: Vec<usize>,
    pub pair_tolerance: f64,
    pub threads: usize,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_raw(&RawConfig::load(path)?)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::from_raw(&RawConfig::parse(text, Path::new("."))?)
    }

    pub fn from_raw(raw: &RawConfig) -> Result<Self, ConfigError> {
        let n = raw.int("grid.n", None)?;
        if n < 8 {
            return Err(raw.invalid("grid.n", format!("need at least 8 nodes, got {n}")));
        }
        let half_side = raw.float("grid.half_side", Some(1.0))?;
        let k = raw.float("grid.K", Some(1.5))?;
        for (key, v) in [("grid.half_side", half_side), ("grid.K", k)] {
            if v <= 0.0 {
                return Err(raw.invalid(key, "must be positive"));
            }
        }
        let potential = potential_spec(raw, "potential", "gaussian")?;
        let potential2 = potential_spec(raw, "potential2", "zero")?;
        let taus = raw.floats("tau.list")?.unwrap_or_else(|| vec![10.0, 20.0, 40.0, 80.0]);
        if taus.is_empty() || taus.iter().any(|t| *t <= 0.0) || taus.windows(2).any(|w| w[1] <= w[0]) {
            return Err(raw.invalid("tau.list", "tau values must be positive and strictly increasing"));
        }
        let points = points(raw)?;
        let nb = 4 * (n - 1);
        let modes = raw.int("dtn.modes", Some(32.min(nb / 4)))?;
        if modes == 0 || modes > nb / 4 {
            return Err(raw.invalid("dtn.modes", format!("must be in 1..={} for grid.n = {n}", nb / 4)));
        }
        let epsilon = if raw.has("mollify.epsilon") { Some(raw.float("mollify.epsilon", None)?) } else { None };
        if let Some(e) = epsilon {
            let h = 2.0 * half_side / (n - 1) as f64;
            if e < 2.0 * h {
                return Err(raw.invalid("mollify.epsilon", format!("must be at least 2h = {}", 2.0 * h)));
            }
        }
        let mut series = NeumannSeriesConfig::new(taus[0]);
        series.max_terms = raw.int("series.max_terms", Some(8))?;
        series.tail_tol = raw.float("series.tail_tol", Some(1e-6))?;
        series.r_weight = match raw.word("series.r_weight", "antisymmetric", &["antisymmetric", "literal"])? {
            "literal" => RWeight::Literal,
            _ => RWeight::Antisymmetric,
        };
        series.v_scaling = match raw.word("series.v_scaling", "half", &["half", "unit"])? {
            "unit" => VScaling::Unit,
            _ => VScaling::Half,
        };
        series.validate().map_err(|e| raw.invalid("series.max_terms", e.to_string()))?;
        let centered_beta = raw.word("series.beta", "zero", &["zero", "centered"])? == "centered";
        let tau0_candidates =
            raw.floats("series.tau0_candidates")?.unwrap_or_else(|| vec![1.0, 2.5, 5.0, 10.0, 20.0, 40.0, 80.0]);
        let constant = match raw.word("recover.constant", "measured", &["measured", "two_pi"])? {
            "two_pi" => ConstantSource::TwoPi,
            _ => ConstantSource::Measured,
        };
        let richardson_order = raw.float("recover.richardson_order", Some(2.0))?;
        let interior_fraction = raw.float("recover.interior_fraction", Some(0.2))?;
        let kind = raw.word("decay.kind", "rtau", &["rtau", "ttau", "tail", "correction"])?;
        let decay_kind = DecayKind::parse(kind).expect("checked against the allowed list");
        let omega_half = raw.float("decay.omega_half", Some(0.45))?;
        let power_iters = raw.int("decay.power_iters", Some(400))?;
        if power_iters < 20 {
            return Err(raw.invalid("decay.power_iters", "need at least 20 iterations"));
        }
        let max_spread = raw.float("phase.max_spread", Some(0.05))?;
        let manufactured = match raw.floats("forward.manufactured")? {
            Some(v) => v
                .iter()
                .map(|x| {
                    if *x >= 8.0 && x.fract() == 0.0 {
                        Ok(*x as usize)
                    } else {
                        Err(raw.invalid("forward.manufactured", format!("`{x}` is not a node count >= 8")))
                    }
                })
                .collect::<Result<_, _>>()?,
            None => Vec::new(),
        };
        let pair_tolerance = raw.float("pair.tolerance", Some(1e-3))?;
        let threads = raw.int("run.threads", Some(1))?;
        if threads == 0 {
            return Err(raw.invalid("run.threads", "need at least one thread"));
        }
        Ok(Self {
            n,
            half_side,
            k,
            potential,
            potential2,
            taus,
            points,
            modes,
            epsilon,
            series,
            centered_beta,
            tau0_candidates,
            constant,
            richardson_order,
            interior_fraction,
            decay_kind,
            omega_half,
            power_iters,
            max_spread,
            manufactured,
            pair_tolerance,
            threads,
        })
    }

    /// `Ω = (-a, a)^2`.
    pub fn omega(&self) -> Grid2D<f64> {
        Grid2D::square(self.n, self.half_side).expect("validated")
    }

    /// `Π = (-K, K)^2`.
    pub fn pi(&self) -> Grid2D<f64> {
        Grid2D::square(self.n, self.k).expect("validated")
    }
}

fn potential_spec(raw: &RawConfig, section: &str, default: &str) -> Result<PotentialSpec<f64>, ConfigError> {
    let key = |k: &str| format!("{section}.{k}");
    let kind = raw.word(&key("kind"), default, &["zero", "gaussian", "two_bumps", "disk_indicator", "file"])?;
    let amplitude = raw.float(&key("amplitude"), Some(1.0))?;
    let center = match raw.floats(&key("center"))? {
        Some(v) if v.len() == 2 => [v[0], v[1]],
        Some(_) => return Err(raw.invalid(&key("center"), "expected two numbers")),
        None => [0.0, 0.0],
    };
    let width = raw.float(&key("width"), Some(0.3))?;
    let radius = raw.float(&key("radius"), Some(0.5))?;
    let spec = match kind {
        "zero" => PotentialSpec::Zero,
        "gaussian" => PotentialSpec::Gaussian { amplitude, center, width },
        "two_bumps" => PotentialSpec::TwoBumps { amplitude, center, width },
        "disk_indicator" => PotentialSpec::DiskIndicator { amplitude, center, radius },
        _ => {
            let (_, p) = raw.get(&key("path")).ok_or_else(|| ConfigError::Missing(key("path")))?;
            PotentialSpec::File(raw.base.join(p))
        }
    };
    spec.validate().map_err(|e| raw.invalid(&key("kind"), e.to_string()))?;
    if let PotentialSpec::File(p) = &spec {
        if !p.is_file() {
            return Err(raw.invalid(&key("path"), format!("{} does not exist", p.display())));
        }
    }
    Ok(spec)
}

fn points(raw: &RawConfig) -> Result<Vec<Complex<f64>>, ConfigError> {
    if let Some(v) = raw.floats("y.grid")? {
        if v.len() != 2 || v[0] < 1.0 || v[0].fract() != 0.0 || v[1] < 0.0 {
            return Err(raw.invalid("y.grid", "expected `n, half` with n >= 1"));
        }
        let m = v[0] as usize;
        let coord = |k: usize| if m == 1 { 0.0 } else { -v[1] + 2.0 * v[1] * k as f64 / (m - 1) as f64 };
        return Ok((0..m).flat_map(|j| (0..m).map(move |i| Complex::new(coord(i), coord(j)))).collect());
    }
    let Some((_, text)) = raw.get("y.points") else { return Ok(vec![Complex::new(0.0, 0.0)]) };
    text.split(';')
        .map(|p| {
            let xs: Vec<f64> = p.split_whitespace().filter_map(|s| s.parse().ok()).collect();
            if xs.len() == 2 && p.split_whitespace().count() == 2 {
                Ok(Complex::new(xs[0], xs[1]))
            } else {
                Err(raw.invalid("y.points", format!("`{}` is not a point `x1 x2`", p.trim())))
            }
        })
        .collect()
}
