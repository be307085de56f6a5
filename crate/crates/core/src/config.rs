//! Line-based experiment configuration.
//!
//! ```text
//! [experiment]
//! name = projective
//! seed = 42
//!
//! [parameters]
//! N = 10
//! k = 10
//! dt_micro = 1e-3
//! dt_macro = 0.1
//! ```
//!
//! Blank lines and `#` comments are ignored. Every experiment has its own
//! parameter schema; unknown keys are errors and omitted keys take their
//! defaults, which are echoed back with the results.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::patch::{LiftingScheme, WindSign};
use crate::pde::PdeSpec;
use crate::projective::CoarseStepConfig;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        if let Some(key) = &self.key {
            write!(f, "`{key}`: ")?;
        }
        f.write_str(&self.message)
    }
}

/// All problems found in a configuration, in line order.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ConfigError {
    pub issues: Vec<ConfigIssue>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lines: Vec<String> = self.issues.iter().map(|i| i.to_string()).collect();
        f.write_str(&lines.join("\n"))
    }
}

impl ConfigError {
    fn single(line: Option<usize>, key: Option<&str>, message: impl Into<String>) -> Self {
        Self {
            issues: vec![ConfigIssue {
                line,
                key: key.map(str::to_string),
                message: message.into(),
            }],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Projective,
    Patch,
    OrderDetect,
    Kp,
}

impl Experiment {
    pub const ALL: [Experiment; 4] = [Experiment::Projective, Experiment::Patch, Experiment::OrderDetect, Experiment::Kp];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Projective => "projective",
            Experiment::Patch => "patch",
            Experiment::OrderDetect => "order-detect",
            Experiment::Kp => "kp",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Drift {
    Zero,
    OrnsteinUhlenbeck,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectiveParams {
    pub ensemble_size: usize,
    pub micro_steps: usize,
    pub dt_micro: f64,
    pub dt_macro: f64,
    pub alpha: f64,
    pub drift: Drift,
    pub theta: f64,
    pub noise: f64,
    pub x0: f64,
    pub n_steps: usize,
    /// Width of the noise-law check in standard errors.
    pub n_se: f64,
    /// Relative tolerance of the suppressed-variance check.
    pub tolerance: f64,
    /// Relative tolerance of the comparisons with the consistent dynamics.
    pub reference_tolerance: f64,
    /// Whether the run should reproduce the consistent dynamics; `None` skips those checks.
    pub expect_consistent: Option<bool>,
}

impl ProjectiveParams {
    pub fn step_config(&self) -> crate::Result<CoarseStepConfig> {
        CoarseStepConfig::with_alpha(self.ensemble_size, self.micro_steps, self.dt_micro, self.dt_macro, self.alpha)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PdeName {
    Heat,
    Advection,
    Biharmonic,
}

impl PdeName {
    pub fn spec(&self) -> PdeSpec {
        match self {
            PdeName::Heat => PdeSpec::heat(),
            PdeName::Advection => PdeSpec::advection(),
            PdeName::Biharmonic => PdeSpec::biharmonic(),
        }
    }
}

impl FromStr for PdeName {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "heat" => Ok(PdeName::Heat),
            "advection" => Ok(PdeName::Advection),
            "biharmonic" => Ok(PdeName::Biharmonic),
            _ => Err(format!("unknown equation `{s}` (expected heat, advection or biharmonic)")),
        }
    }
}

impl fmt::Display for PdeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PdeName::Heat => "heat",
            PdeName::Advection => "advection",
            PdeName::Biharmonic => "biharmonic",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvolutionKind {
    Exact,
    Fd,
}

impl FromStr for EvolutionKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "exact" => Ok(EvolutionKind::Exact),
            "fd" => Ok(EvolutionKind::Fd),
            _ => Err(format!("unknown evolution `{s}` (expected exact or fd)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StabilityExpectation {
    Stable,
    Unstable,
    Marginal,
}

impl FromStr for StabilityExpectation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "stable" => Ok(Self::Stable),
            "unstable" => Ok(Self::Unstable),
            "marginal" => Ok(Self::Marginal),
            _ => Err(format!("unknown stability class `{s}`")),
        }
    }
}

fn parse_lifting(name: &str, wind: WindSign) -> Result<LiftingScheme, String> {
    match name {
        "central_d2" => Ok(LiftingScheme::CentralD2),
        "upwind_d2" => Ok(LiftingScheme::UpwindD2 { wind }),
        "central_d4" => Ok(LiftingScheme::CentralD4),
        _ => Err(format!("unknown lifting `{name}` (expected central_d2, upwind_d2 or central_d4)")),
    }
}

fn parse_wind(name: &str) -> Result<WindSign, String> {
    match name {
        "positive" => Ok(WindSign::Positive),
        "negative" => Ok(WindSign::Negative),
        _ => Err(format!("unknown wind `{name}` (expected positive or negative)")),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchParams {
    pub pde: PdeName,
    pub lifting: LiftingScheme,
    /// `Δt / Δx^p` with `p` the order of the equation.
    pub dt_ratio: f64,
    /// `δt / Δt`.
    pub dt_micro_fraction: f64,
    /// `h / Δx`.
    pub h_fraction: f64,
    pub alpha: f64,
    pub evolution: EvolutionKind,
    /// Micro cells per tooth width for the finite-difference path.
    pub micro_cells: usize,
    pub n_points: usize,
    pub probe_steps: usize,
    pub grids: Vec<usize>,
    pub t_final: f64,
    pub expect_stability: Option<StabilityExpectation>,
    pub growth_band: Option<(f64, f64)>,
    pub expect_order: Option<f64>,
    pub order_tolerance: f64,
    pub expect_error_decrease: bool,
    pub matrix_tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectTarget {
    Pde(PdeName),
    Adversarial,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderDetectParams {
    pub target: DetectTarget,
    pub d_max: usize,
    pub arity: usize,
    pub dt_micro: f64,
    pub h: f64,
    pub evolution: EvolutionKind,
    pub micro_cells: usize,
    pub n_base: usize,
    pub n_perturb: usize,
    pub stop_after: Option<usize>,
    pub threshold_factor: f64,
    pub threshold_floor: f64,
    pub budget: usize,
    pub expect_order: Option<usize>,
    pub expect_stopped_early: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KpParams {
    pub deltas: Vec<f64>,
    pub t_final: Vec<f64>,
    pub n_trajectories: usize,
    pub dim: usize,
    pub n_modes: usize,
    pub directions: usize,
    pub spectrum: f64,
    pub strength: f64,
    pub speed: f64,
    pub dt_max: f64,
    pub dt_factor: f64,
    pub samples: usize,
    pub halving_horizon: f64,
    pub phase_shift: Option<f64>,
    pub shift_tolerance: f64,
    pub ballistic_delta: Option<f64>,
    pub ballistic_band: (f64, f64),
    pub diffusive_delta: Option<f64>,
    pub diffusive_band: (f64, f64),
    pub reference_checks: bool,
    pub reference_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Params {
    Projective(ProjectiveParams),
    Patch(PatchParams),
    OrderDetect(OrderDetectParams),
    Kp(KpParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub params: Params,
    /// Every parameter with its resolved value, in schema order.
    pub resolved: Vec<(String, String)>,
}

impl ExperimentConfig {
    /// Canonical text of the configuration, defaults included. Parses back to an equal config.
    pub fn echo(&self) -> String {
        let mut out = String::from("[experiment]\n");
        out.push_str(&format!("name = {}\n", self.experiment.name()));
        out.push_str(&format!("seed = {}\n", self.seed));
        if let Some(dir) = &self.output_dir {
            out.push_str(&format!("output_dir = {}\n", dir.display()));
        }
        out.push_str("\n[parameters]\n");
        for (k, v) in &self.resolved {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }
}

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

/// Raw `[section] -> key -> value` map with line numbers.
fn tokenize(text: &str) -> Result<BTreeMap<String, BTreeMap<String, Entry>>, ConfigError> {
    let mut sections: BTreeMap<String, BTreeMap<String, Entry>> = BTreeMap::new();
    let mut current: Option<String> = None;
    let mut issues = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let Some(name) = rest.strip_suffix(']') else {
                issues.push(ConfigIssue {
                    line: Some(line),
                    key: None,
                    message: format!("malformed section header `{content}`"),
                });
                continue;
            };
            let name = name.trim().to_string();
            if name != "experiment" && name != "parameters" {
                issues.push(ConfigIssue {
                    line: Some(line),
                    key: None,
                    message: format!("unknown section `[{name}]` (expected [experiment] or [parameters])"),
                });
            }
            sections.entry(name.clone()).or_default();
            current = Some(name);
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            issues.push(ConfigIssue {
                line: Some(line),
                key: None,
                message: format!("expected `key = value`, got `{content}`"),
            });
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            issues.push(ConfigIssue {
                line: Some(line),
                key: None,
                message: "empty key".into(),
            });
            continue;
        }
        let Some(section) = &current else {
            issues.push(ConfigIssue {
                line: Some(line),
                key: Some(key.into()),
                message: "key appears before any [section] header".into(),
            });
            continue;
        };
        let entries = sections.entry(section.clone()).or_default();
        if let Some(prev) = entries.get(key) {
            issues.push(ConfigIssue {
                line: Some(line),
                key: Some(key.into()),
                message: format!("duplicate key (first set on line {})", prev.line),
            });
            continue;
        }
        entries.insert(
            key.to_string(),
            Entry {
                value: value.to_string(),
                line,
            },
        );
    }
    if issues.is_empty() {
        Ok(sections)
    } else {
        Err(ConfigError { issues })
    }
}

/// Typed extraction from one section, collecting every issue.
struct Fields {
    entries: BTreeMap<String, Entry>,
    resolved: Vec<(String, String)>,
    issues: Vec<ConfigIssue>,
}

impl Fields {
    fn new(entries: BTreeMap<String, Entry>) -> Self {
        Self {
            entries,
            resolved: Vec::new(),
            issues: Vec::new(),
        }
    }

    fn line_of(&self, key: &str) -> Option<usize> {
        self.entries.get(key).map(|e| e.line)
    }

    fn issue(&mut self, key: &str, message: impl Into<String>) {
        self.issues.push(ConfigIssue {
            line: self.line_of(key),
            key: Some(key.to_string()),
            message: message.into(),
        });
    }

    /// Raw text of `key`, its default, or `None` with an issue when required and missing.
    fn text(&mut self, key: &str, default: Option<&str>) -> Option<String> {
        let value = match self.entries.get(key) {
            Some(e) => e.value.clone(),
            None => match default {
                Some(d) => d.to_string(),
                None => {
                    self.issues.push(ConfigIssue {
                        line: None,
                        key: Some(key.to_string()),
                        message: "required key is missing".into(),
                    });
                    return None;
                }
            },
        };
        self.resolved.push((key.to_string(), value.clone()));
        Some(value)
    }

    fn parse_with<T>(&mut self, key: &str, default: Option<&str>, parse: impl Fn(&str) -> Result<T, String>) -> Option<T> {
        let text = self.text(key, default)?;
        match parse(&text) {
            Ok(v) => Some(v),
            Err(msg) => {
                self.issue(key, msg);
                None
            }
        }
    }

    fn get<T: FromStr>(&mut self, key: &str, default: Option<&str>) -> Option<T>
    where
        T::Err: fmt::Display,
    {
        self.parse_with(key, default, |s| s.parse::<T>().map_err(|e| format!("invalid value `{s}`: {e}")))
    }

    fn positive(&mut self, key: &str, default: Option<&str>) -> Option<f64> {
        let v: f64 = self.get(key, default)?;
        if v > 0.0 && v.is_finite() {
            Some(v)
        } else {
            self.issue(key, format!("must be positive and finite, got {v}"));
            None
        }
    }

    fn at_least(&mut self, key: &str, default: Option<&str>, min: usize) -> Option<usize> {
        let v: usize = self.get(key, default)?;
        if v >= min {
            Some(v)
        } else {
            self.issue(key, format!("must be at least {min}, got {v}"));
            None
        }
    }

    /// `none` maps to `None`.
    fn optional<T: FromStr>(&mut self, key: &str) -> Option<Option<T>>
    where
        T::Err: fmt::Display,
    {
        self.parse_with(key, Some("none"), |s| {
            if s == "none" {
                Ok(None)
            } else {
                s.parse::<T>().map(Some).map_err(|e| format!("invalid value `{s}`: {e}"))
            }
        })
    }

    fn list<T: FromStr>(&mut self, key: &str, default: Option<&str>) -> Option<Vec<T>>
    where
        T::Err: fmt::Display,
    {
        self.parse_with(key, default, |s| {
            s.split(',')
                .map(|item| {
                    let item = item.trim();
                    item.parse::<T>().map_err(|e| format!("invalid list item `{item}`: {e}"))
                })
                .collect()
        })
    }

    fn band(&mut self, key: &str, default: &str) -> Option<(f64, f64)> {
        let v: Vec<f64> = self.list(key, Some(default))?;
        match v.as_slice() {
            [lo, hi] if lo <= hi => Some((*lo, *hi)),
            _ => {
                self.issue(key, "expected `lo, hi` with lo <= hi");
                None
            }
        }
    }

    /// Errors for every key that no schema entry consumed.
    fn finish(mut self) -> (Vec<(String, String)>, Vec<ConfigIssue>) {
        let consumed: Vec<String> = self.resolved.iter().map(|(k, _)| k.clone()).collect();
        let mut unknown: Vec<(&String, &Entry)> = self.entries.iter().filter(|(k, _)| !consumed.contains(k)).collect();
        unknown.sort_by_key(|(_, e)| e.line);
        let extra: Vec<ConfigIssue> = unknown
            .into_iter()
            .map(|(k, e)| ConfigIssue {
                line: Some(e.line),
                key: Some(k.clone()),
                message: "unknown key".into(),
            })
            .collect();
        self.issues.extend(extra);
        (self.resolved, self.issues)
    }
}

fn parse_projective(f: &mut Fields) -> Option<ProjectiveParams> {
    let ensemble_size = f.at_least("N", None, 1);
    let micro_steps = f.at_least("k", None, 1);
    let dt_micro = f.positive("dt_micro", None);
    let dt_macro = f.positive("dt_macro", None);
    let alpha = f.get("alpha", Some("0"));
    let drift = f.parse_with("drift", Some("zero"), |s| match s {
        "zero" => Ok(Drift::Zero),
        "ou" => Ok(Drift::OrnsteinUhlenbeck),
        _ => Err(format!("unknown drift `{s}` (expected zero or ou)")),
    });
    let theta = f.positive("theta", Some("1"));
    let noise = f.positive("noise", Some("1"));
    let x0 = f.get("x0", Some("0"));
    let n_steps = f.at_least("n_steps", Some("10000"), 1);
    let n_se = f.positive("n_se", Some("3"));
    let tolerance = f.positive("tolerance", Some("0.15"));
    let reference_tolerance = f.positive("reference_tolerance", Some("0.1"));
    let expect_consistent = f.optional("expect_consistent");
    let params = ProjectiveParams {
        ensemble_size: ensemble_size?,
        micro_steps: micro_steps?,
        dt_micro: dt_micro?,
        dt_macro: dt_macro?,
        alpha: alpha?,
        drift: drift?,
        theta: theta?,
        noise: noise?,
        x0: x0?,
        n_steps: n_steps?,
        n_se: n_se?,
        tolerance: tolerance?,
        reference_tolerance: reference_tolerance?,
        expect_consistent: expect_consistent?,
    };
    if let Err(e) = params.step_config() {
        match e {
            crate::Error::InvalidParameter { name, reason } => f.issue(name, reason),
            other => f.issue("dt_macro", other.to_string()),
        }
        return None;
    }
    Some(params)
}

fn parse_patch(f: &mut Fields) -> Option<PatchParams> {
    let pde: Option<PdeName> = f.parse_with("pde", None, str::parse);
    let wind = f.parse_with("wind", Some("positive"), parse_wind);
    let lifting_name = f.text("lifting", Some("central_d2"));
    let lifting = match (lifting_name, wind) {
        (Some(name), Some(w)) => match parse_lifting(&name, w) {
            Ok(l) => Some(l),
            Err(msg) => {
                f.issue("lifting", msg);
                None
            }
        },
        _ => None,
    };
    let default_ratio = match pde {
        Some(PdeName::Heat) => "0.4",
        Some(PdeName::Advection) => "0.5",
        _ => "0.05",
    };
    let dt_ratio = f.positive("dt_ratio", Some(default_ratio));
    let dt_micro_fraction = f.positive("dt_micro_fraction", Some("1e-3"));
    let h_fraction = f.positive("h_fraction", Some("0.5"));
    let alpha = f.get("alpha", Some("0"));
    let evolution = f.parse_with("evolution", Some("exact"), str::parse);
    let micro_cells = f.at_least("micro_cells", Some("20"), 4);
    let n_points = f.at_least("n_points", Some("64"), 5);
    let probe_steps = f.at_least("probe_steps", Some("1000"), 10);
    let grids: Option<Vec<usize>> = f.list("grids", Some("32, 64, 128"));
    let t_final = f.positive("t_final", Some("0.5"));
    let expect_stability = f.optional("expect_stability");
    let growth_band: Option<Option<Vec<f64>>> = f.parse_with("growth_band", Some("none"), |s| {
        if s == "none" {
            return Ok(None);
        }
        let v: Vec<f64> = s
            .split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|e| format!("invalid band `{s}`: {e}")))
            .collect::<Result<_, _>>()?;
        if v.len() == 2 && v[0] <= v[1] {
            Ok(Some(v))
        } else {
            Err("expected `lo, hi` with lo <= hi".into())
        }
    });
    let expect_order = f.optional("expect_order");
    let order_tolerance = f.positive("order_tolerance", Some("0.3"));
    let expect_error_decrease = f.get("expect_error_decrease", Some("false"));
    let matrix_tolerance = f.positive("matrix_tolerance", Some("1e-12"));
    if let Some(g) = &grids {
        if g.len() < 3 || g.iter().any(|&n| n < 5) {
            f.issue("grids", "need at least three grid sizes of 5 or more points");
        }
    }
    if let Some(a) = alpha {
        if !(0.0..1.0).contains(&a) {
            f.issue("alpha", format!("must lie in [0, 1), got {a}"));
        }
    }
    if let Some(h) = h_fraction {
        if h >= 1.0 {
            f.issue("h_fraction", "teeth must be narrower than the macro spacing (h_fraction < 1)");
        }
    }
    if let Some(d) = dt_micro_fraction {
        if d > 1.0 {
            f.issue("dt_micro_fraction", "the micro window cannot exceed the macro step");
        }
    }
    Some(PatchParams {
        pde: pde?,
        lifting: lifting?,
        dt_ratio: dt_ratio?,
        dt_micro_fraction: dt_micro_fraction.filter(|&d| d <= 1.0)?,
        h_fraction: h_fraction.filter(|&h| h < 1.0)?,
        alpha: alpha.filter(|a| (0.0..1.0).contains(a))?,
        evolution: evolution?,
        micro_cells: micro_cells?,
        n_points: n_points?,
        probe_steps: probe_steps?,
        grids: grids.filter(|g| g.len() >= 3 && g.iter().all(|&n| n >= 5))?,
        t_final: t_final?,
        expect_stability: expect_stability?,
        growth_band: growth_band?.map(|v| (v[0], v[1])),
        expect_order: expect_order?,
        order_tolerance: order_tolerance?,
        expect_error_decrease: expect_error_decrease?,
        matrix_tolerance: matrix_tolerance?,
    })
}

fn parse_order_detect(f: &mut Fields) -> Option<OrderDetectParams> {
    let target = f.parse_with("target", None, |s| match s {
        "adversarial" => Ok(DetectTarget::Adversarial),
        other => other.parse().map(DetectTarget::Pde),
    });
    let d_max = f.at_least("d_max", Some("2"), 1);
    let arity = f.at_least("arity", Some("100"), 100);
    let dt_micro = f.positive("dt_micro", Some("1e-3"));
    let h = f.positive("h", Some("0.1"));
    let evolution = f.parse_with("evolution", Some("exact"), str::parse);
    let micro_cells = f.at_least("micro_cells", Some("20"), 4);
    let n_base = f.at_least("n_base", Some("8"), 1);
    let n_perturb = f.at_least("n_perturb", Some("64"), 2);
    let stop_after = f.optional("stop_after");
    let threshold_factor = f.positive("threshold_factor", Some("1e-6"));
    let threshold_floor = f.positive("threshold_floor", Some("1e-12"));
    let budget = f.at_least("budget", Some("10000000"), 1);
    let expect_order = f.optional("expect_order");
    let expect_stopped_early = f.optional("expect_stopped_early");
    if let Some(Some(0)) = stop_after {
        f.issue("stop_after", "must be at least 1");
    }
    Some(OrderDetectParams {
        target: target?,
        d_max: d_max?,
        arity: arity?,
        dt_micro: dt_micro?,
        h: h?,
        evolution: evolution?,
        micro_cells: micro_cells?,
        n_base: n_base?,
        n_perturb: n_perturb?,
        stop_after: stop_after.filter(|s| *s != Some(0))?,
        threshold_factor: threshold_factor?,
        threshold_floor: threshold_floor?,
        budget: budget?,
        expect_order: expect_order?,
        expect_stopped_early: expect_stopped_early?,
    })
}

fn parse_kp(f: &mut Fields) -> Option<KpParams> {
    let deltas: Option<Vec<f64>> = f.list("deltas", Some("1, 0.3, 0.1, 0.05"));
    let t_final: Option<Vec<f64>> = f.list("t_final", Some("0.5, 1, 1, 1"));
    let n_trajectories = f.at_least("n_trajectories", Some("24"), crate::kp::MIN_TRAJECTORIES);
    let dim = f.at_least("dim", Some("3"), 1);
    let n_modes = f.at_least("n_modes", Some("4"), 1);
    let directions = f.at_least("directions", Some("32"), 1);
    let spectrum = f.get("spectrum", Some("1"));
    let strength = f.positive("strength", Some("1"));
    let speed = f.positive("speed", Some("1"));
    let dt_max = f.positive("dt_max", Some("1e-4"));
    let dt_factor = f.positive("dt_factor", Some("0.016"));
    let samples = f.at_least("samples", Some("2000"), 100);
    let halving_horizon = f.positive("halving_horizon", Some("0.2"));
    let phase_shift = f.optional("phase_shift");
    let shift_tolerance = f.positive("shift_tolerance", Some("0.1"));
    let ballistic_delta = f.optional("ballistic_delta");
    let ballistic_band = f.band("ballistic_band", "1.7, 2.1");
    let diffusive_delta = f.optional("diffusive_delta");
    let diffusive_band = f.band("diffusive_band", "0.8, 1.2");
    let reference_checks = f.get("reference_checks", Some("true"));
    let reference_tolerance = f.positive("reference_tolerance", Some("0.1"));
    if let (Some(d), Some(t)) = (&deltas, &t_final) {
        if d.len() != t.len() {
            f.issue("t_final", format!("need one horizon per delta ({} deltas, {} horizons)", d.len(), t.len()));
        }
        if d.iter().chain(t).any(|v| !(*v > 0.0)) {
            f.issue("deltas", "deltas and horizons must be positive");
        }
    }
    if let (Some(dim), Some(dirs)) = (dim, directions) {
        if dim == 1 && dirs != 1 {
            f.issue("directions", "one-dimensional fields have a single direction per shell");
        }
    }
    for (key, v) in [("ballistic_delta", &ballistic_delta), ("diffusive_delta", &diffusive_delta)] {
        if let (Some(Some(x)), Some(d)) = (v, &deltas) {
            if !d.contains(x) {
                f.issue(key, format!("{x} is not one of the swept deltas"));
            }
        }
    }
    let ok = f.issues.is_empty();
    let params = KpParams {
        deltas: deltas?,
        t_final: t_final?,
        n_trajectories: n_trajectories?,
        dim: dim?,
        n_modes: n_modes?,
        directions: directions?,
        spectrum: spectrum?,
        strength: strength?,
        speed: speed?,
        dt_max: dt_max?,
        dt_factor: dt_factor?,
        samples: samples?,
        halving_horizon: halving_horizon?,
        phase_shift: phase_shift?,
        shift_tolerance: shift_tolerance?,
        ballistic_delta: ballistic_delta?,
        ballistic_band: ballistic_band?,
        diffusive_delta: diffusive_delta?,
        diffusive_band: diffusive_band?,
        reference_checks: reference_checks?,
        reference_tolerance: reference_tolerance?,
    };
    ok.then_some(params)
}

/// Parses and validates a configuration, applying defaults.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut sections = tokenize(text)?;
    let mut head = Fields::new(sections.remove("experiment").unwrap_or_default());
    let name = head.text("name", None);
    let experiment = match &name {
        Some(n) => match Experiment::from_name(n) {
            Some(e) => e,
            None => {
                return Err(ConfigError::single(
                    head.line_of("name"),
                    Some("name"),
                    format!("unknown experiment `{n}` (expected projective, patch, order-detect or kp)"),
                ))
            }
        },
        None => {
            return Err(ConfigError::single(None, Some("name"), "[experiment] must set `name`"));
        }
    };
    let seed = head.get("seed", Some("0"));
    let output_dir = head.entries.get("output_dir").map(|e| PathBuf::from(&e.value));
    if output_dir.is_some() {
        head.text("output_dir", None);
    }
    let (_, mut issues) = head.finish();

    let mut fields = Fields::new(sections.remove("parameters").unwrap_or_default());
    let params = match experiment {
        Experiment::Projective => parse_projective(&mut fields).map(Params::Projective),
        Experiment::Patch => parse_patch(&mut fields).map(Params::Patch),
        Experiment::OrderDetect => parse_order_detect(&mut fields).map(Params::OrderDetect),
        Experiment::Kp => parse_kp(&mut fields).map(Params::Kp),
    };
    let (resolved, param_issues) = fields.finish();
    issues.extend(param_issues);
    issues.sort_by_key(|i| i.line.unwrap_or(0));
    match (params, seed) {
        (Some(params), Some(seed)) if issues.is_empty() => Ok(ExperimentConfig {
            experiment,
            seed,
            output_dir,
            params,
            resolved,
        }),
        _ => {
            if issues.is_empty() {
                issues.push(ConfigIssue {
                    line: None,
                    key: None,
                    message: "invalid configuration".into(),
                });
            }
            Err(ConfigError { issues })
        }
    }
}
