//! Flat `key = value` scenario files.
//!
//! Every key is listed in [`KEYS`] with its default. Unknown keys and
//! malformed values are rejected with the offending key named, and
//! [`ScenarioConfig::to_text`] prints a complete file that parses back to
//! the same configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::delay::{DelayFunctional, InnerMap};
use crate::error::{Result, SddError};
use crate::export::CsvColumns;
use crate::history::InitialFunction;
use crate::integrator::{ProblemSpec, SolverMode, SolverOptions};
use crate::nonlinearity::{BirthFunction, Kernel};
use crate::spectral::{ModalVector, SpectralOperator};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    Float,
    OptFloat,
    Int,
    OptInt,
    FloatList,
    Text,
    Choice(&'static [&'static str]),
}

/// Known keys with their defaults.
pub const KEYS: &[(&str, &str)] = &[
    ("domain.L", "pi"),
    ("spectral.N", "32"),
    ("spectral.grid", ""),
    ("d", "0"),
    ("r", "1"),
    ("delay.variant", "point"),
    ("delay.map", "affine_norm"),
    ("delay.a", "0"),
    ("delay.b", "0"),
    ("delay.r_k", ""),
    ("delay.eta_ign", ""),
    ("delay.eta_min", ""),
    ("delay.tau", "0"),
    ("b.variant", "nicholson"),
    ("b.p", "2"),
    ("b.c", "0"),
    ("kernel.variant", "gaussian"),
    ("kernel.alpha", "0.1"),
    ("phi.preset", "smooth"),
    ("phi.amplitude", "1"),
    ("phi.mode", "1"),
    ("phi.csv", ""),
    ("phi.samples", "101"),
    ("solver.h", "0.001"),
    ("solver.mode", "etd1"),
    ("solver.macro_step", ""),
    ("solver.picard_tol", "1e-12"),
    ("solver.picard_max_iter", "200"),
    ("T", "5"),
    ("output.path", "trajectory.csv"),
    ("output.delta_list", "0"),
    ("output.probes", ""),
];

fn kind(key: &str) -> Kind {
    match key {
        "spectral.N" | "phi.mode" | "phi.samples" | "solver.picard_max_iter" => Kind::Int,
        "spectral.grid" => Kind::OptInt,
        "delay.eta_ign" | "delay.eta_min" | "solver.macro_step" => Kind::OptFloat,
        "delay.r_k" | "output.delta_list" | "output.probes" => Kind::FloatList,
        "phi.csv" | "output.path" => Kind::Text,
        "delay.variant" => Kind::Choice(&["point", "multi_point", "integral_of_p", "p_of_integral", "constant"]),
        "delay.map" => Kind::Choice(&["affine_norm", "mean_value"]),
        "b.variant" => Kind::Choice(&["nicholson", "linear", "zero", "tanh"]),
        "kernel.variant" => Kind::Choice(&["gaussian", "dirac"]),
        "phi.preset" => Kind::Choice(&["smooth", "mode", "csv"]),
        "solver.mode" => Kind::Choice(&["etd1", "etd2", "picard"]),
        _ => Kind::Float,
    }
}

fn parse_float(key: &str, raw: &str) -> Result<f64> {
    let s = raw.trim();
    let value = match s {
        "pi" => std::f64::consts::PI,
        "-pi" => -std::f64::consts::PI,
        _ => s
            .parse::<f64>()
            .map_err(|_| SddError::config(key, format!("expected a number, got `{raw}`")))?,
    };
    if !value.is_finite() {
        return Err(SddError::config(key, format!("value `{raw}` is not finite")));
    }
    Ok(value)
}

fn check_value(key: &str, raw: &str) -> Result<()> {
    let s = raw.trim();
    match kind(key) {
        Kind::Float => parse_float(key, s).map(|_| ()),
        Kind::OptFloat if s.is_empty() => Ok(()),
        Kind::OptFloat => parse_float(key, s).map(|_| ()),
        Kind::OptInt if s.is_empty() => Ok(()),
        Kind::Int | Kind::OptInt => s
            .parse::<usize>()
            .map(|_| ())
            .map_err(|_| SddError::config(key, format!("expected a non-negative integer, got `{raw}`"))),
        Kind::FloatList => split_list(s).try_for_each(|item| parse_float(key, item).map(|_| ())),
        Kind::Text => Ok(()),
        Kind::Choice(options) if options.contains(&s) => Ok(()),
        Kind::Choice(options) => {
            Err(SddError::config(key, format!("`{raw}` is not one of {}", options.join(", "))))
        }
    }
}

fn split_list(s: &str) -> impl Iterator<Item = &str> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty())
}

/// Maps a sweep parameter to its key: either a full key or an unambiguous
/// last component (`p` → `b.p`, `eta_ign` → `delay.eta_ign`).
pub fn resolve_key(name: &str) -> Result<&'static str> {
    if let Some(&(k, _)) = KEYS.iter().find(|(k, _)| *k == name) {
        return Ok(k);
    }
    let hits: Vec<&'static str> =
        KEYS.iter().map(|(k, _)| *k).filter(|k| k.rsplit('.').next() == Some(name)).collect();
    match hits.as_slice() {
        [one] => Ok(one),
        [] => Err(SddError::config(name, "unknown key")),
        _ => Err(SddError::config(name, format!("ambiguous key, candidates: {}", hits.join(", ")))),
    }
}

/// Bundled scenario files.
pub const PRESETS: &[(&str, &str)] = &[
    ("nicholson.cfg", include_str!("../presets/nicholson.cfg")),
    ("decay.cfg", include_str!("../presets/decay.cfg")),
    ("oracle.cfg", include_str!("../presets/oracle.cfg")),
];

pub fn preset(name: &str) -> Option<&'static str> {
    let stem = name.trim_end_matches(".cfg");
    PRESETS.iter().find(|(n, _)| n.trim_end_matches(".cfg") == stem).map(|(_, text)| *text)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    values: BTreeMap<&'static str, String>,
    /// Directory that relative paths (`phi.csv`) are resolved against.
    base_dir: Option<PathBuf>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self { values: KEYS.iter().map(|&(k, v)| (k, v.to_string())).collect(), base_dir: None }
    }
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = std::collections::BTreeSet::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| SddError::config(line, "expected `key = value`"))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(SddError::config(key, "given more than once"));
            }
            cfg.set(key, value.trim())?;
        }
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SddError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn preset(name: &str) -> Result<Self> {
        let text = preset(name).ok_or_else(|| SddError::invalid(format!("no bundled preset named `{name}`")))?;
        Self::parse(text)
    }

    /// Sets a key; the value is validated against the key's type.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let canonical = KEYS
            .iter()
            .map(|(k, _)| *k)
            .find(|k| *k == key)
            .ok_or_else(|| SddError::config(key, "unknown key"))?;
        check_value(canonical, value)?;
        self.values.insert(canonical, value.trim().to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn with_base_dir(mut self, dir: Option<PathBuf>) -> Self {
        self.base_dir = dir;
        self
    }

    /// Complete configuration text, one key per line in [`KEYS`] order.
    pub fn to_text(&self) -> String {
        KEYS.iter().map(|(k, _)| format!("{k} = {}\n", self.values[k])).collect()
    }

    fn raw(&self, key: &str) -> &str {
        &self.values[key]
    }

    fn float(&self, key: &str) -> Result<f64> {
        parse_float(key, self.raw(key))
    }

    fn opt_float(&self, key: &str) -> Result<Option<f64>> {
        let s = self.raw(key);
        if s.is_empty() {
            Ok(None)
        } else {
            parse_float(key, s).map(Some)
        }
    }

    fn int(&self, key: &str) -> Result<usize> {
        self.raw(key)
            .parse()
            .map_err(|_| SddError::config(key, format!("expected a non-negative integer, got `{}`", self.raw(key))))
    }

    fn list(&self, key: &str) -> Result<Vec<f64>> {
        split_list(self.raw(key)).map(|s| parse_float(key, s)).collect()
    }

    pub fn t_end(&self) -> Result<f64> {
        let t = self.float("T")?;
        if t <= 0.0 {
            return Err(SddError::config("T", format!("final time must be positive, got {t}")));
        }
        Ok(t)
    }

    pub fn output_path(&self) -> PathBuf {
        PathBuf::from(self.raw("output.path"))
    }

    pub fn columns(&self) -> Result<CsvColumns> {
        let deltas = self.list("output.delta_list")?;
        if let Some(bad) = deltas.iter().find(|d| !(0.0..=1.0).contains(*d)) {
            return Err(SddError::config("output.delta_list", format!("δ = {bad} outside [0, 1]")));
        }
        Ok(CsvColumns { deltas, probes: self.list("output.probes")? })
    }

    pub fn operator(&self) -> Result<SpectralOperator<f64>> {
        let length = self.float("domain.L")?;
        if length <= 0.0 {
            return Err(SddError::config("domain.L", format!("domain length must be positive, got {length}")));
        }
        let n = self.int("spectral.N")?;
        if n == 0 {
            return Err(SddError::config("spectral.N", "need at least one mode"));
        }
        let grid = match self.raw("spectral.grid") {
            "" => 4 * n,
            _ => self.int("spectral.grid")?,
        };
        if grid < 2 * n {
            return Err(SddError::config("spectral.grid", format!("grid {grid} must be at least 2·N = {}", 2 * n)));
        }
        SpectralOperator::dirichlet_laplacian_1d(length, n, grid).map_err(|e| SddError::config("spectral.grid", e.to_string()))
    }

    fn delay(&self, r: f64) -> Result<DelayFunctional<f64>> {
        let variant = self.raw("delay.variant");
        let eta_ign = self.opt_float("delay.eta_ign")?;
        if let Some(ign) = eta_ign {
            if !(ign > 0.0 && ign <= r) {
                return Err(SddError::config("delay.eta_ign", format!("must lie in (0, r = {r}], got {ign}")));
            }
        }
        let map = || -> Result<InnerMap<f64>> {
            InnerMap::from_name(self.raw("delay.map"), self.float("delay.a")?, self.float("delay.b")?)
                .map_err(|e| SddError::config("delay.map", e.to_string()))
        };
        let offsets = || -> Result<Vec<f64>> {
            let offsets = self.list("delay.r_k")?;
            if offsets.is_empty() {
                return Err(SddError::config("delay.r_k", format!("variant {variant} needs at least one offset")));
            }
            let floor = eta_ign.unwrap_or_else(|| offsets.iter().copied().fold(f64::INFINITY, f64::min));
            for &rk in &offsets {
                if rk < floor {
                    return Err(SddError::config(
                        "delay.r_k",
                        format!("offset {rk} lies inside the ignore zone (eta_ign = {floor})"),
                    ));
                }
                if rk > r {
                    return Err(SddError::config("delay.r_k", format!("offset {rk} exceeds the window r = {r}")));
                }
            }
            Ok(offsets)
        };
        let need_ign = || eta_ign.ok_or_else(|| SddError::config("delay.eta_ign", format!("variant {variant} needs eta_ign")));
        let eta = match variant {
            "point" => {
                let o = offsets()?;
                if o.len() != 1 {
                    return Err(SddError::config("delay.r_k", "point variant takes exactly one offset"));
                }
                DelayFunctional::point(map()?, o[0], eta_ign, r)
            }
            "multi_point" => {
                let m = map()?;
                DelayFunctional::multi_point(offsets()?.into_iter().map(|rk| (m, rk)).collect(), eta_ign, r)
            }
            "integral_of_p" => DelayFunctional::integral_of_p(map()?, need_ign()?, r),
            "p_of_integral" => DelayFunctional::p_of_integral(map()?, need_ign()?, r),
            _ => {
                let tau = self.float("delay.tau")?;
                DelayFunctional::constant(tau, r).map_err(|e| SddError::config("delay.tau", e.to_string()))
            }
        }
        .map_err(|e| match e {
            SddError::Config { .. } => e,
            other => SddError::config("delay.variant", other.to_string()),
        })?;
        match self.opt_float("delay.eta_min")? {
            Some(m) => eta.with_floor(m).map_err(|e| SddError::config("delay.eta_min", e.to_string())),
            None => Ok(eta),
        }
    }

    fn birth(&self) -> Result<BirthFunction<f64>> {
        Ok(match self.raw("b.variant") {
            "nicholson" => BirthFunction::Nicholson { p: self.float("b.p")? },
            "linear" => BirthFunction::Linear { c: self.float("b.c")? },
            "tanh" => BirthFunction::Tanh { c: self.float("b.c")? },
            _ => BirthFunction::Zero,
        })
    }

    fn kernel(&self) -> Result<Kernel<f64>> {
        match self.raw("kernel.variant") {
            "dirac" => Ok(Kernel::Dirac),
            _ => Kernel::gaussian(self.float("kernel.alpha")?).map_err(|e| SddError::config("kernel.alpha", e.to_string())),
        }
    }

    fn phi(&self, op: &SpectralOperator<f64>, r: f64) -> Result<InitialFunction<f64>> {
        let amp = self.float("phi.amplitude")?;
        let samples = self.int("phi.samples")?;
        if samples < 2 {
            return Err(SddError::config("phi.samples", "need at least two samples"));
        }
        let n = op.n_modes();
        match self.raw("phi.preset") {
            "mode" => {
                let k = self.int("phi.mode")?;
                if k == 0 || k > n {
                    return Err(SddError::config("phi.mode", format!("mode must lie in 1..={n}, got {k}")));
                }
                InitialFunction::constant(r, ModalVector::unit(n, k).scaled(amp))
            }
            "csv" => {
                let raw = self.raw("phi.csv");
                if raw.is_empty() {
                    return Err(SddError::config("phi.csv", "phi.preset = csv needs a file path"));
                }
                let path = match &self.base_dir {
                    Some(dir) if Path::new(raw).is_relative() => dir.join(raw),
                    _ => PathBuf::from(raw),
                };
                InitialFunction::from_csv_path(&path, r, op, samples)
                    .map(|p| p.scaled(amp))
                    .map_err(|e| SddError::config("phi.csv", e.to_string()))
            }
            _ => InitialFunction::from_fn(r, samples, |th| {
                let mut v = ModalVector::zeros(n);
                let shape = [1.0 + 0.5 * (3.0 * th).sin(), 0.3 * (2.0 * th).cos(), 0.1];
                for (k, s) in shape.iter().enumerate().take(n) {
                    v[k] = amp * s;
                }
                v
            }),
        }
    }

    pub fn solver_options(&self) -> Result<SolverOptions<f64>> {
        let h = self.float("solver.h")?;
        if h <= 0.0 {
            return Err(SddError::config("solver.h", format!("micro-step must be positive, got {h}")));
        }
        let mode: SolverMode = self.raw("solver.mode").parse()?;
        let mut opts = SolverOptions::new(h).with_mode(mode);
        opts.macro_step = self.opt_float("solver.macro_step")?;
        opts.picard_tol = self.float("solver.picard_tol")?;
        opts.picard_max_iter = self.int("solver.picard_max_iter")?;
        Ok(opts)
    }

    pub fn problem(&self) -> Result<ProblemSpec<f64>> {
        let op = self.operator()?;
        let r = self.float("r")?;
        if r <= 0.0 {
            return Err(SddError::config("r", format!("window must be positive, got {r}")));
        }
        let d = self.float("d")?;
        if d < 0.0 {
            return Err(SddError::config("d", format!("damping must be non-negative, got {d}")));
        }
        let delay = self.delay(r)?;
        let phi = self.phi(&op, r)?;
        ProblemSpec::new(op, d, delay, self.birth()?, self.kernel()?, phi)
            .map_err(|e| SddError::config("b.variant", e.to_string()))
    }

    pub fn build(&self) -> Result<(ProblemSpec<f64>, SolverOptions<f64>, f64)> {
        let spec = self.problem()?;
        let opts = self.solver_options()?;
        if let Some(m) = opts.macro_step {
            if !(m > 0.0 && m <= spec.delay.eta_ign()) {
                return Err(SddError::config(
                    "solver.macro_step",
                    format!("must lie in (0, eta_ign = {}], got {m}", spec.delay.eta_ign()),
                ));
            }
        }
        Ok((spec, opts, self.t_end()?))
    }
}
