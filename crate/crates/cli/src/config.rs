//! Run configuration: the JSON schema, defaults and validation.
//!
//! Parsing is strict (unknown keys are errors). [`RawConfig`] mirrors the
//! file; [`Resolved`] is the fully defaulted form that every report echoes.

use std::path::Path;

use floquet_flow::bessel::MAX_ARGUMENT;
use floquet_flow::expansion::SeriesControls;
use floquet_flow::flow::{FlowConfig, GeneratorKind, TransformScheme};
use floquet_flow::oracle::{Scheme, DOUBLING_TOL, MAX_STEPS};
use floquet_flow::Boundary;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    ShakenBoseHubbard,
    DrivenTwoLevel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryName {
    Open,
    Periodic,
}

impl From<BoundaryName> for Boundary {
    fn from(b: BoundaryName) -> Self {
        match b {
            BoundaryName::Open => Boundary::Open,
            BoundaryName::Periodic => Boundary::Periodic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorName {
    DCommutator,
    Canonical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegratorName {
    ExponentialRk4,
    DormandPrince45,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformName {
    Midpoint,
    Magnus4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeName {
    Midpoint,
    CommutatorFreeMagnus4,
}

impl From<SchemeName> for Scheme {
    fn from(s: SchemeName) -> Self {
        match s {
            SchemeName::Midpoint => Scheme::Midpoint,
            SchemeName::CommutatorFreeMagnus4 => Scheme::CommutatorFreeMagnus4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
    Matrix,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub model: Option<ModelKind>,
    pub lattice: Option<RawLattice>,
    pub params: Option<RawParams>,
    #[serde(default)]
    pub floquet: RawFloquet,
    #[serde(default)]
    pub flow: FlowOverrides,
    #[serde(default)]
    pub series: RawSeries,
    #[serde(default)]
    pub oracle: RawOracle,
    pub sweep: Option<Sweep>,
    #[serde(default)]
    pub fig1: RawFig1,
    #[serde(default)]
    pub localize: RawLocalize,
    #[serde(default)]
    pub output: RawOutput,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawLattice {
    pub sites: usize,
    pub particles: usize,
    #[serde(default = "default_boundary")]
    pub boundary: BoundaryName,
}

fn default_boundary() -> BoundaryName {
    BoundaryName::Open
}

/// Shaken chain: `j`, `u`, `omega` and exactly one of `k_drive`, `x`.
/// Two-level system: `delta`, `amp`, `omega`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawParams {
    pub j: Option<f64>,
    pub u: Option<f64>,
    pub k_drive: Option<f64>,
    pub x: Option<f64>,
    pub omega: Option<f64>,
    pub delta: Option<f64>,
    pub amp: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawFloquet {
    pub cutoff: Option<usize>,
    pub buffer: Option<usize>,
}

/// Explicit flow settings. Anything left out follows the frequency-scaled
/// defaults of the chosen integrator at each sweep point.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowOverrides {
    pub generator: Option<GeneratorName>,
    pub integrator: Option<IntegratorName>,
    pub transform: Option<TransformName>,
    pub l_max: Option<f64>,
    pub initial_step: Option<f64>,
    pub max_step: Option<f64>,
    pub step_tol: Option<f64>,
    pub convergence_tol: Option<f64>,
    pub max_steps: Option<usize>,
    pub drift_stride: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSeries {
    pub m_max: Option<usize>,
    pub n_max: Option<usize>,
    pub term_tol: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawOracle {
    pub scheme: Option<SchemeName>,
    pub initial_steps: Option<usize>,
    pub doubling_tol: Option<f64>,
    pub max_steps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub name: String,
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    #[serde(default = "default_spacing")]
    pub spacing: Spacing,
}

fn default_spacing() -> Spacing {
    Spacing::Linear
}

impl Sweep {
    pub fn values(&self) -> Vec<f64> {
        let n = self.points;
        if n == 1 {
            return vec![self.start];
        }
        (0..n)
            .map(|i| {
                let t = i as f64 / (n - 1) as f64;
                match () {
                    _ if i == n - 1 => self.stop,
                    _ if self.spacing == Spacing::Log => self.start * (self.stop / self.start).powf(t),
                    _ => self.start + t * (self.stop - self.start),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawFig1 {
    pub x_min: Option<f64>,
    pub x_max: Option<f64>,
    pub points: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawLocalize {
    pub n_periods: Option<usize>,
    pub initial_state: Option<Vec<u32>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawOutput {
    pub directory: Option<String>,
    pub formats: Option<Vec<Format>>,
}

/// Model parameters at one point, with both `k_drive` and `x` filled in.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum PointModel {
    ShakenBoseHubbard {
        sites: usize,
        particles: usize,
        boundary: BoundaryName,
        j: f64,
        u: f64,
        k_drive: f64,
        x: f64,
        omega: f64,
    },
    DrivenTwoLevel {
        delta: f64,
        amp: f64,
        omega: f64,
    },
}

impl PointModel {
    pub fn omega(&self) -> f64 {
        match self {
            PointModel::ShakenBoseHubbard { omega, .. } | PointModel::DrivenTwoLevel { omega, .. } => *omega,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
enum DriveInput {
    KDrive,
    X,
}

/// Base model as written in the file; sweeps substitute one field.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSpec {
    pub base: PointModel,
    /// Which of `k_drive` / `x` stays fixed when another field is swept.
    #[serde(skip_serializing_if = "Option::is_none")]
    held: Option<DriveInput>,
}

impl ModelSpec {
    fn sweepable(&self) -> &'static [&'static str] {
        match self.base {
            PointModel::ShakenBoseHubbard { .. } => &["j", "u", "k_drive", "x", "omega"],
            PointModel::DrivenTwoLevel { .. } => &["delta", "amp", "omega"],
        }
    }

    pub fn at(&self, sweep: Option<(&str, f64)>) -> PointModel {
        let mut m = self.base.clone();
        let Some((name, v)) = sweep else { return m };
        match &mut m {
            PointModel::ShakenBoseHubbard {
                j,
                u,
                k_drive,
                x,
                omega,
                ..
            } => match name {
                "j" => *j = v,
                "u" => *u = v,
                "k_drive" => {
                    *k_drive = v;
                    *x = v / *omega;
                }
                "x" => {
                    *x = v;
                    *k_drive = v * *omega;
                }
                "omega" => {
                    *omega = v;
                    match self.held {
                        Some(DriveInput::KDrive) => *x = *k_drive / v,
                        _ => *k_drive = *x * v,
                    }
                }
                _ => unreachable!("sweep name validated"),
            },
            PointModel::DrivenTwoLevel { delta, amp, omega } => match name {
                "delta" => *delta = v,
                "amp" => *amp = v,
                "omega" => *omega = v,
                _ => unreachable!("sweep name validated"),
            },
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FloquetSettings {
    pub cutoff: usize,
    pub buffer: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesSettings {
    pub m_max: usize,
    pub n_max: usize,
    pub term_tol: f64,
}

impl SeriesSettings {
    pub fn controls(&self) -> SeriesControls {
        SeriesControls {
            m_max: self.m_max,
            n_max: self.n_max,
            term_tol: self.term_tol,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleSettings {
    pub scheme: SchemeName,
    pub initial_steps: usize,
    pub doubling_tol: f64,
    pub max_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Fig1Settings {
    pub x_min: f64,
    pub x_max: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalizeSettings {
    pub n_periods: usize,
    pub initial_state: Option<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputSettings {
    pub directory: String,
    pub formats: Vec<Format>,
}

impl OutputSettings {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

/// Complete, validated configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Resolved {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    pub floquet: FloquetSettings,
    pub flow: FlowOverrides,
    pub series: SeriesSettings,
    pub oracle: OracleSettings,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
    pub fig1: Fig1Settings,
    pub localize: LocalizeSettings,
    pub output: OutputSettings,
    /// Accepted for forward compatibility; every computation is
    /// deterministic.
    pub seed: Option<u64>,
}

pub const DEFAULT_CUTOFF: usize = 8;
pub const DEFAULT_SERIES_ORDER: usize = 4;
pub const DEFAULT_ORACLE_STEPS: usize = 128;

pub fn load(path: &Path) -> Result<RawConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.display().to_string(),
        source,
    })?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<RawConfig, ConfigError> {
    Ok(serde_json::from_str(text)?)
}

fn finite(name: &str, v: f64) -> Result<f64, ConfigError> {
    if v.is_finite() {
        Ok(v)
    } else {
        invalid(format!("{name} must be finite"))
    }
}

fn positive(name: &str, v: f64) -> Result<f64, ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        invalid(format!("{name} must be positive"))
    }
}

fn require(name: &str, v: Option<f64>) -> Result<f64, ConfigError> {
    match v {
        Some(v) => finite(name, v),
        None => invalid(format!("params.{name} is required for this model")),
    }
}

fn forbid(model: &str, names: &[(&str, Option<f64>)]) -> Result<(), ConfigError> {
    for (n, v) in names {
        if v.is_some() {
            return invalid(format!("params.{n} does not apply to {model}"));
        }
    }
    Ok(())
}

fn resolve_model(raw: &RawConfig) -> Result<Option<ModelSpec>, ConfigError> {
    let Some(kind) = raw.model else {
        if raw.params.is_some() || raw.lattice.is_some() {
            return invalid("params/lattice given without a model");
        }
        return Ok(None);
    };
    let p = raw.params.clone().unwrap_or_default();
    let omega = positive("params.omega", require("omega", p.omega)?)?;
    let spec = match kind {
        ModelKind::ShakenBoseHubbard => {
            forbid("shaken_bose_hubbard", &[("delta", p.delta), ("amp", p.amp)])?;
            let Some(l) = &raw.lattice else {
                return invalid("lattice is required for shaken_bose_hubbard");
            };
            if l.sites < 2 {
                return invalid("lattice.sites must be at least 2");
            }
            if l.particles < 1 {
                return invalid("lattice.particles must be at least 1");
            }
            if l.boundary == BoundaryName::Periodic && l.sites == 2 {
                return invalid("periodic boundary needs at least 3 sites");
            }
            let (k_drive, x, held) = match (p.k_drive, p.x) {
                (Some(k), None) => (finite("params.k_drive", k)?, k / omega, DriveInput::KDrive),
                (None, Some(x)) => (finite("params.x", x)? * omega, x, DriveInput::X),
                (None, None) => return invalid("one of params.k_drive, params.x is required"),
                (Some(_), Some(_)) => return invalid("give only one of params.k_drive, params.x"),
            };
            ModelSpec {
                base: PointModel::ShakenBoseHubbard {
                    sites: l.sites,
                    particles: l.particles,
                    boundary: l.boundary,
                    j: require("j", p.j)?,
                    u: require("u", p.u)?,
                    k_drive,
                    x,
                    omega,
                },
                held: Some(held),
            }
        }
        ModelKind::DrivenTwoLevel => {
            forbid(
                "driven_two_level",
                &[("j", p.j), ("u", p.u), ("k_drive", p.k_drive), ("x", p.x)],
            )?;
            if raw.lattice.is_some() {
                return invalid("lattice does not apply to driven_two_level");
            }
            ModelSpec {
                base: PointModel::DrivenTwoLevel {
                    delta: require("delta", p.delta)?,
                    amp: require("amp", p.amp)?,
                    omega,
                },
                held: None,
            }
        }
    };
    Ok(Some(spec))
}

fn resolve_sweep(raw: &RawConfig, model: Option<&ModelSpec>) -> Result<Option<Sweep>, ConfigError> {
    let Some(s) = &raw.sweep else { return Ok(None) };
    let Some(model) = model else {
        return invalid("sweep needs a model");
    };
    if !model.sweepable().contains(&s.name.as_str()) {
        return invalid(format!(
            "sweep.name {:?} is not a parameter of this model (expected one of {})",
            s.name,
            model.sweepable().join(", ")
        ));
    }
    if s.points == 0 {
        return invalid("sweep.points must be positive");
    }
    finite("sweep.start", s.start)?;
    finite("sweep.stop", s.stop)?;
    if s.spacing == Spacing::Log && !(s.start > 0.0 && s.stop > 0.0) {
        return invalid("log spacing needs positive sweep bounds");
    }
    if s.name == "omega" && !(s.start > 0.0 && s.stop > 0.0) {
        return invalid("swept omega must stay positive");
    }
    Ok(Some(s.clone()))
}

fn resolve_flow(f: &FlowOverrides) -> Result<FlowOverrides, ConfigError> {
    for (n, v) in [
        ("l_max", f.l_max),
        ("initial_step", f.initial_step),
        ("max_step", f.max_step),
        ("step_tol", f.step_tol),
        ("convergence_tol", f.convergence_tol),
    ] {
        if let Some(v) = v {
            positive(&format!("flow.{n}"), v)?;
        }
    }
    if f.max_steps == Some(0) || f.drift_stride == Some(0) {
        return invalid("flow step counts must be positive");
    }
    Ok(f.clone())
}

/// Validates `raw` and fills every default. `out` and `seed` come from the
/// command line and take precedence.
pub fn resolve(raw: &RawConfig, out: Option<&str>, seed: Option<u64>) -> Result<Resolved, ConfigError> {
    let model = resolve_model(raw)?;
    let sweep = resolve_sweep(raw, model.as_ref())?;

    let cutoff = raw.floquet.cutoff.unwrap_or(DEFAULT_CUTOFF);
    if cutoff < 1 {
        return invalid("floquet.cutoff must be at least 1");
    }
    let buffer = raw.floquet.buffer.unwrap_or((cutoff / 2).max(2));
    if buffer >= cutoff {
        return invalid(format!("floquet.buffer {buffer} must be below the cutoff {cutoff}"));
    }

    let defaults = SeriesControls::default();
    let series = SeriesSettings {
        m_max: raw.series.m_max.unwrap_or(defaults.m_max),
        n_max: raw.series.n_max.unwrap_or(DEFAULT_SERIES_ORDER),
        term_tol: raw.series.term_tol.unwrap_or(defaults.term_tol),
    };
    series
        .controls()
        .validate()
        .map_err(|e| ConfigError::Invalid(format!("series: {e}")))?;

    let oracle = OracleSettings {
        scheme: raw.oracle.scheme.unwrap_or(SchemeName::CommutatorFreeMagnus4),
        initial_steps: raw.oracle.initial_steps.unwrap_or(DEFAULT_ORACLE_STEPS),
        doubling_tol: raw.oracle.doubling_tol.unwrap_or(DOUBLING_TOL),
        max_steps: raw.oracle.max_steps.unwrap_or(MAX_STEPS),
    };
    if oracle.initial_steps < 64 {
        return invalid("oracle.initial_steps must be at least 64");
    }
    if oracle.max_steps < oracle.initial_steps {
        return invalid("oracle.max_steps is below oracle.initial_steps");
    }
    positive("oracle.doubling_tol", oracle.doubling_tol)?;

    let fig1 = Fig1Settings {
        x_min: raw.fig1.x_min.unwrap_or(0.0),
        x_max: raw.fig1.x_max.unwrap_or(6.0),
        points: raw.fig1.points.unwrap_or(601),
    };
    finite("fig1.x_min", fig1.x_min)?;
    finite("fig1.x_max", fig1.x_max)?;
    if fig1.x_min >= fig1.x_max {
        return invalid("fig1.x_min must be below fig1.x_max");
    }
    if fig1.x_min.abs().max(fig1.x_max.abs()) > MAX_ARGUMENT {
        return invalid(format!("fig1 range must lie within |x| <= {MAX_ARGUMENT}"));
    }
    if fig1.points < 2 {
        return invalid("fig1.points must be at least 2");
    }

    let localize = LocalizeSettings {
        n_periods: raw.localize.n_periods.unwrap_or(50),
        initial_state: raw.localize.initial_state.clone(),
    };

    let formats = raw
        .output
        .formats
        .clone()
        .unwrap_or(vec![Format::Csv, Format::Json, Format::Matrix]);
    if formats.is_empty() {
        return invalid("output.formats must not be empty");
    }
    let directory = out
        .map(str::to_string)
        .or_else(|| raw.output.directory.clone())
        .unwrap_or_else(|| "out".to_string());

    Ok(Resolved {
        model,
        floquet: FloquetSettings { cutoff, buffer },
        flow: resolve_flow(&raw.flow)?,
        series,
        oracle,
        sweep,
        fig1,
        localize,
        output: OutputSettings { directory, formats },
        seed,
    })
}

impl Resolved {
    /// Sweep points as `(value, model)`; a single unswept point otherwise.
    pub fn points(&self) -> Vec<(Option<f64>, PointModel)> {
        let Some(spec) = &self.model else { return Vec::new() };
        match &self.sweep {
            None => vec![(None, spec.at(None))],
            Some(s) => s
                .values()
                .into_iter()
                .map(|v| (Some(v), spec.at(Some((&s.name, v)))))
                .collect(),
        }
    }

    /// Flow settings at one point: integrator defaults for `omega`, then the
    /// explicit overrides.
    pub fn flow_config(&self, omega: f64) -> FlowConfig {
        let f = &self.flow;
        let m = self.floquet.cutoff;
        let mut c = match f.integrator {
            Some(IntegratorName::DormandPrince45) => FlowConfig::explicit(omega, m),
            _ => FlowConfig::for_frequency(omega, m),
        };
        c.buffer = self.floquet.buffer;
        if let Some(g) = f.generator {
            c.generator = match g {
                GeneratorName::DCommutator => GeneratorKind::DCommutator,
                GeneratorName::Canonical => GeneratorKind::Canonical,
            };
        }
        if let Some(t) = f.transform {
            c.transform = match t {
                TransformName::Midpoint => TransformScheme::Midpoint,
                TransformName::Magnus4 => TransformScheme::Magnus4,
            };
        }
        c.l_max = f.l_max.unwrap_or(c.l_max);
        c.initial_step = f.initial_step.unwrap_or(c.initial_step);
        c.max_step = f.max_step.unwrap_or(c.max_step);
        c.step_tol = f.step_tol.unwrap_or(c.step_tol);
        c.convergence_tol = f.convergence_tol.unwrap_or(c.convergence_tol);
        c.max_steps = f.max_steps.unwrap_or(c.max_steps);
        c.drift_stride = f.drift_stride.unwrap_or(c.drift_stride);
        c
    }
}

/// Serializable copy of a [`FlowConfig`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowEcho {
    pub generator: &'static str,
    pub integrator: &'static str,
    pub transform: &'static str,
    pub l_max: f64,
    pub initial_step: f64,
    pub max_step: f64,
    pub step_tol: f64,
    pub convergence_tol: f64,
    pub buffer: usize,
    pub max_steps: usize,
    pub drift_stride: usize,
}

impl From<&FlowConfig> for FlowEcho {
    fn from(c: &FlowConfig) -> Self {
        Self {
            generator: c.generator.name(),
            integrator: c.integrator.name(),
            transform: c.transform.name(),
            l_max: c.l_max,
            initial_step: c.initial_step,
            max_step: c.max_step,
            step_tol: c.step_tol,
            convergence_tol: c.convergence_tol,
            buffer: c.buffer,
            max_steps: c.max_steps,
            drift_stride: c.drift_stride,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use floquet_flow::flow::Integrator;

    fn shaken(extra: &str) -> String {
        format!(
            r#"{{"model":"shaken_bose_hubbard","lattice":{{"sites":3,"particles":2}},
                "params":{{"j":1,"u":1,"x":1,"omega":20}}{extra}}}"#
        )
    }

    #[test]
    fn defaults_are_filled() {
        let r = resolve(&parse(&shaken("")).unwrap(), None, None).unwrap();
        assert_eq!(r.floquet, FloquetSettings { cutoff: 8, buffer: 4 });
        assert_eq!(r.output.directory, "out");
        assert_eq!(r.series.n_max, DEFAULT_SERIES_ORDER);
        let pts = r.points();
        assert_eq!(pts.len(), 1);
        assert!(matches!(pts[0].1, PointModel::ShakenBoseHubbard { k_drive, .. } if k_drive == 20.0));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse(&shaken(r#","colour":"blue""#)).is_err());
        assert!(parse(r#"{"flow":{"stepsize":1}}"#).is_err());
        assert!(parse(r#"{"model":"spin_glass"}"#).is_err());
    }

    #[test]
    fn inconsistent_params_are_rejected() {
        let both = r#"{"model":"shaken_bose_hubbard","lattice":{"sites":3,"particles":2},
            "params":{"j":1,"u":1,"x":1,"k_drive":3,"omega":20}}"#;
        assert!(resolve(&parse(both).unwrap(), None, None).is_err());
        let wrong = r#"{"model":"driven_two_level","params":{"delta":1,"amp":1,"omega":5,"u":1}}"#;
        assert!(resolve(&parse(wrong).unwrap(), None, None).is_err());
        let bad_sweep = shaken(r#","sweep":{"name":"delta","start":1,"stop":2,"points":3}"#);
        assert!(resolve(&parse(&bad_sweep).unwrap(), None, None).is_err());
        let neg = r#"{"model":"driven_two_level","params":{"delta":1,"amp":1,"omega":-5}}"#;
        assert!(resolve(&parse(neg).unwrap(), None, None).is_err());
    }

    #[test]
    fn omega_sweep_holds_the_given_drive_quantity() {
        let s = shaken(r#","sweep":{"name":"omega","start":20,"stop":80,"points":3,"spacing":"log"}"#);
        let r = resolve(&parse(&s).unwrap(), None, None).unwrap();
        let pts = r.points();
        let ws: Vec<f64> = pts.iter().map(|p| p.1.omega()).collect();
        assert!((ws[1] - 40.0).abs() < 1e-12);
        for (_, m) in &pts {
            let PointModel::ShakenBoseHubbard { x, k_drive, omega, .. } = m else {
                panic!()
            };
            assert_eq!(*x, 1.0);
            assert!((k_drive - omega).abs() < 1e-12);
        }
        let k = s.replace(r#""x":1"#, r#""k_drive":20"#);
        let r = resolve(&parse(&k).unwrap(), None, None).unwrap();
        let PointModel::ShakenBoseHubbard { x, k_drive, .. } = r.points()[2].1 else {
            panic!()
        };
        assert_eq!(k_drive, 20.0);
        assert!((x - 0.25).abs() < 1e-12);
    }

    #[test]
    fn flow_overrides_apply_on_top_of_scaled_defaults() {
        let s = shaken(r#","flow":{"integrator":"dormand_prince45","step_tol":1e-9}"#);
        let r = resolve(&parse(&s).unwrap(), Some("elsewhere"), Some(7)).unwrap();
        let c = r.flow_config(20.0);
        assert_eq!(c.integrator, Integrator::DormandPrince45);
        assert_eq!(c.step_tol, 1e-9);
        assert_eq!(c.max_step, FlowConfig::explicit(20.0, 8).max_step);
        assert_eq!(r.output.directory, "elsewhere");
        assert_eq!(r.seed, Some(7));
    }

    #[test]
    fn fig1_range_is_checked() {
        assert!(resolve(&parse(r#"{"fig1":{"x_min":0,"x_max":40}}"#).unwrap(), None, None).is_err());
        assert!(resolve(&parse(r#"{"fig1":{"x_min":3,"x_max":1}}"#).unwrap(), None, None).is_err());
        assert!(resolve(&RawConfig::default(), None, None).is_ok());
    }
}
