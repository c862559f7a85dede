//! Scenario files: flat `key = value` lines with dotted sections.
//!
//! Frequencies are rad/μs unless suffixed with `MHz`, in which case they are
//! multiplied by 2π. See `docs/config.md` for the grammar.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use crate::frames::{FrameSpec, DEFAULT_TOLERANCE};
use crate::hamiltonians::{
    nmr_rotating, oscillating_qubit, oscillating_qubit_transition, tabulated, HamiltonianModel,
    ModelError,
};
use crate::spectral::{required_steps, TimeGrid, DEFAULT_POINTS_PER_PERIOD};

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub line: Option<usize>,
    pub field: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(0) => write!(f, "command line: {}: {}", self.field, self.message),
            Some(l) => write!(f, "line {l}: {}: {}", self.field, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    OscillatingQubit,
    OscillatingQubitTransition,
    NmrRotating,
    Tabulated,
}

impl ModelKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "oscillating_qubit" => Some(Self::OscillatingQubit),
            "oscillating_qubit_transition" => Some(Self::OscillatingQubitTransition),
            "nmr_rotating" => Some(Self::NmrRotating),
            "tabulated" => Some(Self::Tabulated),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::OscillatingQubit => "oscillating_qubit",
            Self::OscillatingQubitTransition => "oscillating_qubit_transition",
            Self::NmrRotating => "nmr_rotating",
            Self::Tabulated => "tabulated",
        }
    }

    fn required(self) -> &'static [&'static str] {
        match self {
            Self::OscillatingQubit | Self::OscillatingQubitTransition => &["omega0", "omega_t", "omega"],
            Self::NmrRotating => &["omega0", "omega_rf", "omega"],
            Self::Tabulated => &[],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameKind {
    Identity,
    RotatingZ,
    RotatingZHalf,
}

impl FrameKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "identity" => Some(Self::Identity),
            "rotating_z" => Some(Self::RotatingZ),
            "rotating_z_half" => Some(Self::RotatingZHalf),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameChoice {
    pub kind: FrameKind,
    /// Defaults to the model's drive frequency.
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub t0: f64,
    pub tau: f64,
    pub steps: Option<usize>,
    pub points_per_period: usize,
    pub override_resolution: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub parameter: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub model: ModelKind,
    /// Frequencies in rad/μs. `a` is folded into `omega` at parse time when
    /// `omega0` is known.
    pub params: BTreeMap<String, f64>,
    pub table: Option<PathBuf>,
    pub frame: Option<FrameChoice>,
    pub grid: GridSpec,
    pub initial_state: usize,
    pub levels: Option<(usize, usize)>,
    pub sweep: Option<SweepSpec>,
    pub output_dir: Option<PathBuf>,
    pub output_prefix: String,
    pub theorem_tolerance: f64,
}

pub const SWEEP_PARAMETERS: &[&str] = &["a", "omega", "omega0", "omega_t", "omega_rf", "tau"];
const FREQUENCY_KEYS: &[&str] = &["model.omega0", "model.omega_t", "model.omega", "model.omega_rf", "frame.rate"];
const KNOWN_KEYS: &[&str] = &[
    "model.name",
    "model.omega0",
    "model.omega_t",
    "model.omega",
    "model.omega_rf",
    "model.a",
    "model.table",
    "frame.kind",
    "frame.rate",
    "grid.t0",
    "grid.tau",
    "grid.steps",
    "grid.points_per_period",
    "grid.override_resolution",
    "initial.state",
    "levels.ground",
    "levels.excited",
    "sweep.parameter",
    "sweep.values",
    "output.dir",
    "output.prefix",
    "tolerance.theorem",
];

/// Parses a number, multiplying by 2π when suffixed with `MHz`.
pub fn parse_frequency(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let (num, factor) = match s.strip_suffix("MHz") {
        Some(rest) => (rest.trim(), 2.0 * PI),
        None => (s, 1.0),
    };
    let v: f64 = num.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if !v.is_finite() {
        return Err(format!("`{s}` is not finite"));
    }
    Ok(v * factor)
}

fn parse_plain(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("`{}` is not a number", s.trim()))?;
    if !v.is_finite() {
        return Err(format!("`{}` is not finite", s.trim()));
    }
    Ok(v)
}

struct Raw {
    entries: BTreeMap<String, (usize, String)>,
}

impl Raw {
    fn get(&self, key: &str) -> Option<(usize, &str)> {
        self.entries.get(key).map(|(l, v)| (*l, v.as_str()))
    }
}

fn lex(text: &str, diags: &mut Vec<Diagnostic>) -> Raw {
    let mut entries = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let n = idx + 1;
        let content = line.split('#').next().unwrap().trim();
        if content.is_empty() {
            continue;
        }
        let Some((k, v)) = content.split_once('=') else {
            diags.push(Diagnostic { line: Some(n), field: content.to_string(), message: "expected `key = value`".into() });
            continue;
        };
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        if !KNOWN_KEYS.contains(&k.as_str()) {
            diags.push(Diagnostic { line: Some(n), field: k, message: "unknown key".into() });
            continue;
        }
        if let Some((first, _)) = entries.get(&k) {
            diags.push(Diagnostic {
                line: Some(n),
                field: k.clone(),
                message: format!("duplicate key (first set on line {first})"),
            });
            continue;
        }
        entries.insert(k, (n, v));
    }
    Raw { entries }
}

/// Command-line settings that replace file entries before validation.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    /// Replaces `grid.points_per_period` and drops any `grid.steps`.
    pub points_per_period: Option<usize>,
    pub override_resolution: bool,
}

/// Parses and statically validates a scenario. Every violation found is
/// returned, not just the first.
pub fn parse_config(text: &str, base_dir: Option<&Path>) -> Result<ScenarioConfig, Vec<Diagnostic>> {
    parse_config_with(text, base_dir, Overrides::default())
}

pub fn parse_config_with(
    text: &str,
    base_dir: Option<&Path>,
    overrides: Overrides,
) -> Result<ScenarioConfig, Vec<Diagnostic>> {
    let mut d = Vec::new();
    let mut raw = lex(text, &mut d);
    if let Some(ppp) = overrides.points_per_period {
        raw.entries.remove("grid.steps");
        raw.entries.insert("grid.points_per_period".into(), (0, ppp.to_string()));
    }
    if overrides.override_resolution {
        raw.entries.insert("grid.override_resolution".into(), (0, "true".into()));
    }
    let diag = |d: &mut Vec<Diagnostic>, line: Option<usize>, field: &str, message: String| {
        d.push(Diagnostic { line, field: field.to_string(), message })
    };

    let model = match raw.get("model.name") {
        None => {
            diag(&mut d, None, "model.name", "missing".into());
            None
        }
        Some((l, v)) => {
            let k = ModelKind::parse(v);
            if k.is_none() {
                diag(
                    &mut d,
                    Some(l),
                    "model.name",
                    format!("unknown model `{v}` (expected oscillating_qubit, oscillating_qubit_transition, nmr_rotating or tabulated)"),
                );
            }
            k
        }
    };

    let mut params = BTreeMap::new();
    for key in ["model.omega0", "model.omega_t", "model.omega", "model.omega_rf", "model.a"] {
        if let Some((l, v)) = raw.get(key) {
            let parsed = if FREQUENCY_KEYS.contains(&key) { parse_frequency(v) } else { parse_plain(v) };
            match parsed {
                Ok(x) => {
                    params.insert(key.trim_start_matches("model.").to_string(), x);
                }
                Err(e) => diag(&mut d, Some(l), key, e),
            }
        }
    }
    let a_line = raw.get("model.a").map(|(l, _)| l);
    if let Some(a) = params.remove("a") {
        if params.contains_key("omega") {
            diag(&mut d, a_line, "model.a", "give either model.a or model.omega, not both".into());
        } else if let Some(&w0) = params.get("omega0") {
            params.insert("omega".into(), a * w0);
        }
        if a <= 0.0 {
            diag(&mut d, a_line, "model.a", format!("must be positive, got {a}"));
        }
    }

    let table = raw.get("model.table").map(|(_, v)| {
        let p = PathBuf::from(v);
        match base_dir {
            Some(b) if p.is_relative() => b.join(p),
            _ => p,
        }
    });

    let sweep = parse_sweep(&raw, &mut d);
    let sweeps = |name: &str| sweep.as_ref().map(|s| s.parameter == name || (name == "omega" && s.parameter == "a")).unwrap_or(false);

    if let Some(kind) = model {
        for p in kind.required() {
            if !params.contains_key(*p) && !sweeps(p) {
                let hint = if *p == "omega" { " (or model.a)" } else { "" };
                diag(&mut d, None, &format!("model.{p}"), format!("missing{hint}"));
            }
        }
        if kind == ModelKind::Tabulated && table.is_none() {
            diag(&mut d, None, "model.table", "missing (required by the tabulated model)".into());
        }
        if matches!(params.get("omega0"), Some(&x) if x == 0.0) {
            diag(&mut d, raw.get("model.omega0").map(|x| x.0), "model.omega0", "must be nonzero".into());
        }
    }
    if let Some(s) = &sweep {
        if s.parameter == "a" && !params.contains_key("omega0") {
            diag(&mut d, None, "sweep.parameter", "sweeping `a` requires model.omega0".into());
        }
    }

    let frame = match raw.get("frame.kind") {
        None => {
            if raw.get("frame.rate").is_some() {
                diag(&mut d, raw.get("frame.rate").map(|x| x.0), "frame.rate", "frame.rate without frame.kind".into());
            }
            None
        }
        Some((l, v)) => match FrameKind::parse(v) {
            None => {
                diag(&mut d, Some(l), "frame.kind", format!("unknown frame `{v}` (expected identity, rotating_z or rotating_z_half)"));
                None
            }
            Some(kind) => {
                let rate = match raw.get("frame.rate") {
                    None => None,
                    Some((l, v)) => match parse_frequency(v) {
                        Ok(x) => Some(x),
                        Err(e) => {
                            diag(&mut d, Some(l), "frame.rate", e);
                            None
                        }
                    },
                };
                if rate.is_none() && model == Some(ModelKind::Tabulated) && kind != FrameKind::Identity {
                    diag(&mut d, None, "frame.rate", "required for tabulated models".into());
                }
                Some(FrameChoice { kind, rate })
            }
        },
    };

    let num = |d: &mut Vec<Diagnostic>, key: &str| -> Option<f64> {
        raw.get(key).and_then(|(l, v)| match parse_plain(v) {
            Ok(x) => Some(x),
            Err(e) => {
                d.push(Diagnostic { line: Some(l), field: key.into(), message: e });
                None
            }
        })
    };
    let count = |d: &mut Vec<Diagnostic>, key: &str| -> Option<usize> {
        raw.get(key).and_then(|(l, v)| match v.parse::<usize>() {
            Ok(x) => Some(x),
            Err(_) => {
                d.push(Diagnostic { line: Some(l), field: key.into(), message: format!("`{v}` is not a nonnegative integer") });
                None
            }
        })
    };

    let t0 = num(&mut d, "grid.t0").unwrap_or(0.0);
    let tau = num(&mut d, "grid.tau");
    if tau.is_none() && raw.get("grid.tau").is_none() && !sweeps("tau") {
        diag(&mut d, None, "grid.tau", "missing".into());
    }
    let tau = tau.unwrap_or(f64::NAN);
    if tau.is_finite() && tau <= t0 {
        diag(&mut d, raw.get("grid.tau").map(|x| x.0), "grid.tau", format!("tau ({tau}) must exceed t0 ({t0})"));
    }
    let steps = count(&mut d, "grid.steps");
    if let Some(s) = steps {
        if s < 2 {
            diag(&mut d, raw.get("grid.steps").map(|x| x.0), "grid.steps", format!("must be at least 2, got {s}"));
        }
    }
    let points_per_period = count(&mut d, "grid.points_per_period").unwrap_or(DEFAULT_POINTS_PER_PERIOD);
    if points_per_period == 0 {
        diag(&mut d, raw.get("grid.points_per_period").map(|x| x.0), "grid.points_per_period", "must be positive".into());
    }
    let override_resolution = match raw.get("grid.override_resolution") {
        None => false,
        Some((l, v)) => match v {
            "true" => true,
            "false" => false,
            _ => {
                diag(&mut d, Some(l), "grid.override_resolution", format!("expected true or false, got `{v}`"));
                false
            }
        },
    };

    let initial_state = count(&mut d, "initial.state").unwrap_or(0);
    let levels = match (count(&mut d, "levels.ground"), count(&mut d, "levels.excited")) {
        (Some(g), Some(e)) => {
            if g == e {
                diag(&mut d, raw.get("levels.excited").map(|x| x.0), "levels.excited", "must differ from levels.ground".into());
            }
            Some((g, e))
        }
        (None, None) => None,
        _ => {
            diag(&mut d, None, "levels", "give both levels.ground and levels.excited".into());
            None
        }
    };

    let theorem_tolerance = num(&mut d, "tolerance.theorem").unwrap_or(DEFAULT_TOLERANCE);
    if !(theorem_tolerance > 0.0) {
        diag(&mut d, raw.get("tolerance.theorem").map(|x| x.0), "tolerance.theorem", "must be positive".into());
    }

    let output_dir = raw.get("output.dir").map(|(_, v)| PathBuf::from(v));
    let output_prefix = raw.get("output.prefix").map(|(_, v)| v.to_string()).unwrap_or_else(|| "run".into());
    if output_prefix.is_empty() || output_prefix.contains(['/', '\\']) {
        diag(&mut d, raw.get("output.prefix").map(|x| x.0), "output.prefix", "must be a plain file-name stem".into());
    }

    if !d.is_empty() {
        return Err(d);
    }
    let cfg = ScenarioConfig {
        model: model.unwrap(),
        params,
        table,
        frame,
        grid: GridSpec { t0, tau, steps, points_per_period, override_resolution },
        initial_state,
        levels,
        sweep,
        output_dir,
        output_prefix,
        theorem_tolerance,
    };
    let mut late = Vec::new();
    check_against_model(&cfg, &raw, &mut late);
    if late.is_empty() {
        Ok(cfg)
    } else {
        Err(late)
    }
}

fn parse_sweep(raw: &Raw, d: &mut Vec<Diagnostic>) -> Option<SweepSpec> {
    let param = raw.get("sweep.parameter");
    let values = raw.get("sweep.values");
    match (param, values) {
        (None, None) => None,
        (Some((l, _)), None) => {
            d.push(Diagnostic { line: Some(l), field: "sweep.values".into(), message: "missing".into() });
            None
        }
        (None, Some((l, _))) => {
            d.push(Diagnostic { line: Some(l), field: "sweep.parameter".into(), message: "missing".into() });
            None
        }
        (Some((lp, p)), Some((lv, v))) => {
            let mut ok = true;
            if !SWEEP_PARAMETERS.contains(&p) {
                d.push(Diagnostic {
                    line: Some(lp),
                    field: "sweep.parameter".into(),
                    message: format!("cannot sweep `{p}` (expected one of {})", SWEEP_PARAMETERS.join(", ")),
                });
                ok = false;
            }
            let is_freq = p.starts_with("omega");
            let mut values = Vec::new();
            for tok in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                let r = if is_freq { parse_frequency(tok) } else { parse_plain(tok) };
                match r {
                    Ok(x) => values.push(x),
                    Err(e) => {
                        d.push(Diagnostic { line: Some(lv), field: "sweep.values".into(), message: e });
                        ok = false;
                    }
                }
            }
            if values.is_empty() && ok {
                d.push(Diagnostic { line: Some(lv), field: "sweep.values".into(), message: "must be nonempty".into() });
                ok = false;
            }
            let mut sorted = values.clone();
            sorted.sort_by(f64::total_cmp);
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                d.push(Diagnostic { line: Some(lv), field: "sweep.values".into(), message: "values must be distinct".into() });
                ok = false;
            }
            if matches!(p, "a" | "tau") && values.iter().any(|&x| x <= 0.0) {
                d.push(Diagnostic { line: Some(lv), field: "sweep.values".into(), message: format!("`{p}` values must be positive") });
                ok = false;
            }
            ok.then(|| SweepSpec { parameter: p.to_string(), values })
        }
    }
}

/// Checks that need a constructed model: dimensions and the grid
/// resolution rule.
fn check_against_model(cfg: &ScenarioConfig, raw: &Raw, d: &mut Vec<Diagnostic>) {
    let points: Vec<Option<f64>> = match &cfg.sweep {
        Some(s) => s.values.iter().map(|&v| Some(v)).collect(),
        None => vec![None],
    };
    for value in points {
        let c = match value {
            Some(v) => cfg.with_sweep_value(v),
            None => cfg.clone(),
        };
        let model = match c.build_model() {
            Ok(m) => m,
            Err(e) => {
                d.push(Diagnostic { line: None, field: "model".into(), message: e.to_string() });
                return;
            }
        };
        if c.initial_state >= model.dim() {
            d.push(Diagnostic {
                line: raw.get("initial.state").map(|x| x.0),
                field: "initial.state".into(),
                message: format!("basis index {} out of range for dimension {}", c.initial_state, model.dim()),
            });
            return;
        }
        if let Some((g, e)) = c.levels {
            for (k, key) in [(g, "levels.ground"), (e, "levels.excited")] {
                if k >= model.dim() {
                    d.push(Diagnostic { line: raw.get(key).map(|x| x.0), field: key.into(), message: format!("{k} out of range for dimension {}", model.dim()) });
                }
            }
        } else if model.dim() > 2 {
            d.push(Diagnostic { line: None, field: "levels".into(), message: format!("dimension {} > 2 requires levels.ground and levels.excited", model.dim()) });
        }
        let max_frequency = c.scenario_max_frequency(&model);
        if let (Some(steps), false) = (c.grid.steps, c.grid.override_resolution) {
            let min = required_steps(c.grid.t0, c.grid.tau, max_frequency, DEFAULT_POINTS_PER_PERIOD);
            if steps < min {
                let at = value.map(|v| format!(" at {} = {v}", cfg.sweep.as_ref().unwrap().parameter)).unwrap_or_default();
                d.push(Diagnostic {
                    line: raw.get("grid.steps").map(|x| x.0),
                    field: "grid.steps".into(),
                    message: format!(
                        "{steps} steps violate the resolution rule{at} (40 points per period of {max_frequency:.6} rad/us); \
                         use at least {min} or set grid.override_resolution = true"
                    ),
                });
                return;
            }
        }
    }
}

impl ScenarioConfig {
    pub fn with_sweep_value(&self, value: f64) -> Self {
        let mut c = self.clone();
        if let Some(s) = &self.sweep {
            match s.parameter.as_str() {
                "a" => {
                    let w0 = c.params.get("omega0").copied().unwrap_or(f64::NAN);
                    c.params.insert("omega".into(), value * w0);
                }
                "tau" => c.grid.tau = value,
                p => {
                    c.params.insert(p.to_string(), value);
                }
            }
        }
        c
    }

    fn param(&self, key: &str) -> f64 {
        self.params.get(key).copied().unwrap_or(f64::NAN)
    }

    pub fn build_model(&self) -> Result<HamiltonianModel, ModelError> {
        match self.model {
            ModelKind::OscillatingQubit => oscillating_qubit(self.param("omega0"), self.param("omega_t"), self.param("omega")),
            ModelKind::OscillatingQubitTransition => {
                oscillating_qubit_transition(self.param("omega0"), self.param("omega_t"), self.param("omega"))
            }
            ModelKind::NmrRotating => nmr_rotating(self.param("omega0"), self.param("omega_rf"), self.param("omega")),
            ModelKind::Tabulated => {
                let path = self.table.as_ref().ok_or_else(|| ModelError::Table("no table path".into()))?;
                let text = std::fs::read_to_string(path)
                    .map_err(|e| ModelError::Table(format!("{}: {e}", path.display())))?;
                tabulated("tabulated", &text)
            }
        }
    }

    pub fn build_frame(&self, model: &HamiltonianModel) -> Option<FrameSpec> {
        let choice = self.frame.as_ref()?;
        let rate = choice.rate.or_else(|| model.param("omega")).unwrap_or(0.0);
        Some(match choice.kind {
            FrameKind::Identity => FrameSpec::identity(model.dim()),
            FrameKind::RotatingZ => FrameSpec::rotating_z(rate),
            FrameKind::RotatingZHalf => FrameSpec::rotating_z_half(rate),
        })
    }

    /// Fastest frequency among the model and, when present, its rotated form.
    pub fn scenario_max_frequency(&self, model: &HamiltonianModel) -> f64 {
        let frame_part = self.build_frame(model).map(|f| f.rate().abs() * f.spread()).unwrap_or(0.0);
        model.max_frequency() + frame_part
    }

    pub fn build_grid(&self, model: &HamiltonianModel) -> Result<TimeGrid, crate::spectral::SpectralError> {
        let g = match self.grid.steps {
            Some(s) => TimeGrid::new(self.grid.t0, self.grid.tau, s)?,
            None => TimeGrid::resolved(
                self.grid.t0,
                self.grid.tau,
                self.scenario_max_frequency(model),
                self.grid.points_per_period,
            )?,
        };
        Ok(if self.grid.override_resolution { g.overriding_resolution() } else { g })
    }
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, Vec<Diagnostic>> {
    load_config_with(path, Overrides::default())
}

pub fn load_config_with(path: &Path, overrides: Overrides) -> Result<ScenarioConfig, Vec<Diagnostic>> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        vec![Diagnostic { line: None, field: path.display().to_string(), message: format!("unreadable: {e}") }]
    })?;
    parse_config_with(&text, path.parent(), overrides)
}
