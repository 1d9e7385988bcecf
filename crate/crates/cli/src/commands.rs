//! The four subcommands. Each returns its artifacts in memory; the caller
//! writes them once the whole run has finished.

use std::collections::BTreeMap;
use std::fmt::Display;

use floquet_flow::bessel::bessel_j;
use floquet_flow::expansion::{
    beta, h_eff0, h_eff1, h_eff_order1, h_eff_series_j, h_eff_series_u, DrivingParams, SeriesControls,
};
use floquet_flow::floquet::{build_floquet_operator, FloquetOperator};
use floquet_flow::flow::{extract_effective, run_flow, FlowConfig, FlowState};
use floquet_flow::linalg::max_abs;
use floquet_flow::matrix_io::write_matrix;
use floquet_flow::oracle::{
    compare_effective, effective_from_monodromy, propagate_period_with, stroboscopic_evolve, MonodromyEffective,
    PropagatorResult,
};
use floquet_flow::scenarios::{DrivenTwoLevel, ShakenLattice};
use floquet_flow::{CMatrix, EffectiveHamiltonian};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{FlowEcho, Format, OracleSettings, PointModel, Resolved};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Complete,
    /// Some requested computation failed; whatever was obtained is still
    /// reported.
    Incomplete,
}

#[derive(Debug)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    pub status: Status,
}

#[derive(Debug, thiserror::Error)]
pub enum CommandError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{0}")]
    Output(String),
}

fn msg(e: impl Display) -> String {
    e.to_string()
}

/// Shortest round-trip scientific form, or empty for missing values.
fn num(v: f64) -> String {
    format!("{v:e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn csv_table(header: &[&str], rows: &[Vec<String>]) -> Result<String, CommandError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(msg).map_err(CommandError::Output)?;
    for r in rows {
        w.write_record(r).map_err(msg).map_err(CommandError::Output)?;
    }
    let bytes = w.into_inner().map_err(msg).map_err(CommandError::Output)?;
    String::from_utf8(bytes).map_err(msg).map_err(CommandError::Output)
}

fn json<T: Serialize>(value: &T) -> Result<String, CommandError> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| CommandError::Output(e.to_string()))
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    command: &'static str,
    version: &'static str,
    config: &'a Resolved,
    complete: bool,
    #[serde(flatten)]
    body: T,
}

fn report<T: Serialize>(
    command: &'static str,
    config: &Resolved,
    complete: bool,
    body: T,
) -> Result<Artifact, CommandError> {
    let r = Report {
        command,
        version: env!("CARGO_PKG_VERSION"),
        config,
        complete,
        body,
    };
    Ok(Artifact {
        name: format!("{command}.json"),
        contents: json(&r)?,
    })
}

struct Outputs<'a> {
    config: &'a Resolved,
    artifacts: Vec<Artifact>,
}

impl<'a> Outputs<'a> {
    fn new(config: &'a Resolved) -> Self {
        Self {
            config,
            artifacts: Vec::new(),
        }
    }

    fn add(
        &mut self,
        format: Format,
        name: String,
        contents: impl FnOnce() -> Result<String, CommandError>,
    ) -> Result<(), CommandError> {
        if self.config.output.wants(format) {
            self.artifacts.push(Artifact {
                name,
                contents: contents()?,
            });
        }
        Ok(())
    }

    fn add_report<T: Serialize>(&mut self, command: &'static str, complete: bool, body: T) -> Result<(), CommandError> {
        if self.config.output.wants(Format::Json) {
            self.artifacts.push(report(command, self.config, complete, body)?);
        }
        Ok(())
    }

    fn finish(self, complete: bool) -> Outcome {
        Outcome {
            artifacts: self.artifacts,
            status: if complete { Status::Complete } else { Status::Incomplete },
        }
    }
}

/// Zero of `f` in `[a, b]` given a sign change, to about machine precision.
pub fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fm < 0.0) == (fa < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Zeros of a sampled curve: exact grid zeros plus one bisection per sign
/// change between neighbours.
pub fn locate_zeros(xs: &[f64], ys: &[f64], f: impl Fn(f64) -> f64) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 0..xs.len() {
        if ys[i] == 0.0 {
            out.push(xs[i]);
        } else if i + 1 < xs.len() && ys[i + 1] != 0.0 && (ys[i] < 0.0) != (ys[i + 1] < 0.0) {
            out.push(bisect(&f, xs[i], xs[i + 1]));
        }
    }
    out
}

#[derive(Serialize)]
struct Fig1Body {
    zeros: BTreeMap<&'static str, Vec<f64>>,
}

pub fn fig1(config: &Resolved) -> Result<Outcome, CommandError> {
    let s = config.fig1;
    let controls = config.series.controls();
    let xs: Vec<f64> = (0..s.points)
        .map(|i| s.x_min + (s.x_max - s.x_min) * i as f64 / (s.points - 1) as f64)
        .collect();
    let j0 = |x: f64| bessel_j(0, x).expect("range validated");
    let b = |x: f64| beta(x, &controls).expect("range validated").value;
    let j0s: Vec<f64> = xs.iter().map(|&x| j0(x)).collect();
    let bs: Vec<f64> = xs.iter().map(|&x| b(x)).collect();
    let mut zeros = BTreeMap::new();
    zeros.insert("J0", locate_zeros(&xs, &j0s, j0));
    zeros.insert("beta", locate_zeros(&xs, &bs, b));

    let mut out = Outputs::new(config);
    out.add(Format::Csv, "fig1.csv".into(), || {
        let rows: Vec<Vec<String>> = (0..xs.len())
            .map(|i| vec![num(xs[i]), num(j0s[i]), num(bs[i])])
            .collect();
        csv_table(&["x", "J0", "beta"], &rows)
    })?;
    out.add(Format::Csv, "fig1_zeros.csv".into(), || {
        let rows: Vec<Vec<String>> = zeros
            .iter()
            .flat_map(|(curve, zs)| zs.iter().map(move |z| vec![curve.to_string(), num(*z)]))
            .collect();
        csv_table(&["curve", "x"], &rows)
    })?;
    out.add_report("fig1", true, Fig1Body { zeros })?;
    Ok(out.finish(true))
}

fn lattice(model: &PointModel) -> Result<Option<ShakenLattice>, String> {
    match *model {
        PointModel::ShakenBoseHubbard {
            sites,
            particles,
            boundary,
            j,
            u,
            k_drive,
            omega,
            ..
        } => {
            let params = DrivingParams::new(j, u, k_drive, omega).map_err(msg)?;
            Ok(Some(
                ShakenLattice::new(sites, particles, boundary.into(), params).map_err(msg)?,
            ))
        }
        PointModel::DrivenTwoLevel { .. } => Ok(None),
    }
}

fn two_level(model: &PointModel) -> Option<DrivenTwoLevel> {
    match *model {
        PointModel::DrivenTwoLevel { delta, amp, omega } => Some(DrivenTwoLevel::new(delta, amp, omega)),
        PointModel::ShakenBoseHubbard { .. } => None,
    }
}

/// Exact one-period propagator. The shaken chain is propagated in the
/// co-moving frame, which has the same stroboscopic operator.
fn monodromy(model: &PointModel, settings: &OracleSettings) -> Result<PropagatorResult, String> {
    let run = |sampler: &dyn Fn(f64) -> CMatrix, period: f64| {
        propagate_period_with(
            sampler,
            period,
            settings.initial_steps,
            settings.scheme.into(),
            settings.doubling_tol,
            settings.max_steps,
        )
        .map_err(msg)
    };
    match lattice(model)? {
        Some(l) => run(&l.rotated_sampler(), l.period()),
        None => {
            let d = two_level(model).expect("two-level model");
            run(&d.sampler(), d.period())
        }
    }
}

fn floquet_operator(model: &PointModel, cutoff: usize) -> Result<FloquetOperator, String> {
    let fourier = match lattice(model)? {
        Some(l) => l.rotated_fourier(cutoff).map_err(msg)?,
        None => two_level(model).expect("two-level model").fourier().map_err(msg)?,
    };
    build_floquet_operator(&fourier, cutoff).map_err(msg)
}

#[derive(Debug, Clone, Serialize)]
pub struct FlowSummary {
    pub config: FlowEcho,
    pub converged: bool,
    pub l_end: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub relative_offdiag: f64,
    pub max_spectral_drift: f64,
    pub max_s_deviation: f64,
    pub transform_residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Extraction diagnostics, when extraction succeeded.
    pub metadata: BTreeMap<String, f64>,
}

fn flow_summary(state: &FlowState, config: &FlowConfig) -> FlowSummary {
    FlowSummary {
        config: config.into(),
        converged: state.converged,
        l_end: state.l,
        accepted_steps: state.accepted_steps,
        rejected_steps: state.rejected_steps,
        relative_offdiag: state.relative_offdiag(),
        max_spectral_drift: state.max_spectral_drift(),
        max_s_deviation: state.max_s_deviation(),
        transform_residual: state.transform_residual(),
        error: None,
        metadata: BTreeMap::new(),
    }
}

struct FlowRun {
    state: FlowState,
    summary: FlowSummary,
    effective: Result<EffectiveHamiltonian, String>,
}

fn flow(model: &PointModel, config: &Resolved) -> Result<FlowRun, String> {
    let fc = config.flow_config(model.omega());
    let op = floquet_operator(model, config.floquet.cutoff)?;
    let state = run_flow(&op, &fc).map_err(msg)?.into_state();
    let mut summary = flow_summary(&state, &fc);
    let effective = extract_effective(&state, fc.buffer, true).map_err(msg);
    match &effective {
        Ok(h) => summary.metadata = h.metadata.clone(),
        Err(e) => summary.error = Some(e.clone()),
    }
    Ok(FlowRun {
        state,
        summary,
        effective,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleSummary {
    pub scheme: &'static str,
    pub steps: usize,
    pub doubling_change: f64,
    pub unitarity_defect: f64,
    pub near_branch_cut: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodResult {
    pub method: &'static str,
    pub ok: bool,
    pub max_delta: Option<f64>,
    pub mean_delta: Option<f64>,
    pub operator_distance: Option<f64>,
    pub max_principal_angle: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn method_result(
    method: &'static str,
    h: Result<EffectiveHamiltonian, String>,
    reference: &MonodromyEffective,
    omega: f64,
) -> MethodResult {
    let r = h.and_then(|h| compare_effective(&h, reference, omega).map_err(msg));
    match r {
        Ok(r) => MethodResult {
            method,
            ok: true,
            max_delta: Some(r.max_delta),
            mean_delta: Some(r.mean_delta),
            operator_distance: Some(r.operator_distance),
            max_principal_angle: Some(r.max_principal_angle),
            error: None,
        },
        Err(e) => MethodResult {
            method,
            ok: false,
            max_delta: None,
            mean_delta: None,
            operator_distance: None,
            max_principal_angle: None,
            error: Some(e),
        },
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparePoint {
    pub index: usize,
    pub sweep_value: Option<f64>,
    pub model: PointModel,
    pub oracle: Option<OracleSummary>,
    pub methods: Vec<MethodResult>,
    pub flow: Option<FlowSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip)]
    pub flow_matrix: Option<CMatrix>,
}

impl ComparePoint {
    fn complete(&self) -> bool {
        self.error.is_none() && self.methods.iter().all(|m| m.ok)
    }
}

pub const EXPANSION_METHODS: [&str; 4] = ["expansion_order_0", "expansion_order_1", "series_U", "series_J"];

fn expansion(name: &str, lattice: &ShakenLattice, controls: &SeriesControls) -> Result<EffectiveHamiltonian, String> {
    let (p, ops) = (&lattice.params, &lattice.ops);
    match name {
        "expansion_order_0" => h_eff0(p, ops),
        "expansion_order_1" => h_eff_order1(p, ops, controls),
        "series_U" => h_eff_series_u(p, ops, controls),
        "series_J" => h_eff_series_j(p, ops, controls),
        _ => unreachable!("known expansion"),
    }
    .map_err(msg)
}

pub fn compare_point(index: usize, sweep_value: Option<f64>, model: PointModel, config: &Resolved) -> ComparePoint {
    let mut point = ComparePoint {
        index,
        sweep_value,
        model: model.clone(),
        oracle: None,
        methods: Vec::new(),
        flow: None,
        error: None,
        flow_matrix: None,
    };
    let omega = model.omega();
    let prepared = monodromy(&model, &config.oracle).and_then(|r| {
        let m = effective_from_monodromy(&r).map_err(msg)?;
        point.oracle = Some(OracleSummary {
            scheme: r.scheme.name(),
            steps: r.steps,
            doubling_change: r.doubling_change,
            unitarity_defect: r.unitarity_defect,
            near_branch_cut: m.near_branch_cut(),
        });
        Ok(m)
    });
    let reference = match prepared.and_then(|m| lattice(&model).map(|l| (m, l))) {
        Ok(v) => v,
        Err(e) => {
            point.error = Some(e);
            return point;
        }
    };
    let (reference, lat) = reference;
    if let Some(lat) = &lat {
        let controls = config.series.controls();
        for name in EXPANSION_METHODS {
            point
                .methods
                .push(method_result(name, expansion(name, lat, &controls), &reference, omega));
        }
    }
    match flow(&model, config) {
        Ok(run) => {
            point.flow_matrix = run.effective.as_ref().ok().map(|h| h.matrix.clone());
            point
                .methods
                .push(method_result("flow", run.effective, &reference, omega));
            point.flow = Some(run.summary);
        }
        Err(e) => point.methods.push(method_result("flow", Err(e), &reference, omega)),
    }
    point
}

/// Least-squares slope of `ln y` against `ln x` over the positive pairs.
pub fn log_log_slope(pairs: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = pairs
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

#[derive(Debug, Clone, Serialize)]
pub struct SlopeFit {
    pub method: &'static str,
    pub quantity: &'static str,
    pub slope: Option<f64>,
    pub points: usize,
}

fn omega_slopes(points: &[ComparePoint]) -> Vec<SlopeFit> {
    let mut names: Vec<&'static str> = Vec::new();
    for p in points {
        for m in &p.methods {
            if !names.contains(&m.method) {
                names.push(m.method);
            }
        }
    }
    let mut fits = Vec::new();
    for name in names {
        for (quantity, get) in [
            (
                "max_delta",
                (|m: &MethodResult| m.max_delta) as fn(&MethodResult) -> Option<f64>,
            ),
            ("operator_distance", |m: &MethodResult| m.operator_distance),
        ] {
            let pairs: Vec<(f64, f64)> = points
                .iter()
                .filter_map(|p| {
                    let m = p.methods.iter().find(|m| m.method == name)?;
                    Some((p.model.omega(), get(m)?))
                })
                .collect();
            fits.push(SlopeFit {
                method: name,
                quantity,
                slope: log_log_slope(&pairs),
                points: pairs.len(),
            });
        }
    }
    fits
}

fn run_points<T: Send>(config: &Resolved, f: impl Fn(usize, Option<f64>, PointModel) -> T + Sync) -> Vec<T> {
    let pts = config.points();
    pts.into_par_iter().enumerate().map(|(i, (v, m))| f(i, v, m)).collect()
}

#[derive(Serialize)]
struct CompareBody<'a> {
    points: &'a [ComparePoint],
    #[serde(skip_serializing_if = "Vec::is_empty")]
    omega_slopes: Vec<SlopeFit>,
}

pub fn compare(config: &Resolved) -> Result<Outcome, CommandError> {
    if config.model.is_none() {
        return Err(CommandError::Config("compare needs a model".into()));
    }
    let points = run_points(config, |i, v, m| compare_point(i, v, m, config));
    let complete = points.iter().all(ComparePoint::complete);
    let slopes = match &config.sweep {
        Some(s) if s.name == "omega" => omega_slopes(&points),
        _ => Vec::new(),
    };

    let mut out = Outputs::new(config);
    out.add(Format::Csv, "compare.csv".into(), || {
        let mut rows = Vec::new();
        for p in &points {
            if let Some(e) = &p.error {
                rows.push(vec![
                    p.index.to_string(),
                    opt(p.sweep_value),
                    num(p.model.omega()),
                    "monodromy".into(),
                    "failed".into(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    e.clone(),
                ]);
            }
            for m in &p.methods {
                rows.push(vec![
                    p.index.to_string(),
                    opt(p.sweep_value),
                    num(p.model.omega()),
                    m.method.into(),
                    if m.ok { "ok" } else { "failed" }.into(),
                    opt(m.max_delta),
                    opt(m.mean_delta),
                    opt(m.operator_distance),
                    opt(m.max_principal_angle),
                    m.error.clone().unwrap_or_default(),
                ]);
            }
        }
        csv_table(
            &[
                "index",
                "sweep_value",
                "omega",
                "method",
                "status",
                "max_delta",
                "mean_delta",
                "operator_distance",
                "max_principal_angle",
                "error",
            ],
            &rows,
        )
    })?;
    for p in &points {
        if let Some(m) = &p.flow_matrix {
            out.add(Format::Matrix, format!("compare_h_eff_{:03}.txt", p.index), || {
                Ok(write_matrix(m))
            })?;
        }
    }
    out.add_report(
        "compare",
        complete,
        CompareBody {
            points: &points,
            omega_slopes: slopes,
        },
    )?;
    Ok(out.finish(complete))
}

/// Round-robin filling from site 0: `(1, 1, 0, 0)` for two particles on
/// four sites.
pub fn default_initial_state(sites: usize, particles: usize) -> Vec<u32> {
    let mut occ = vec![0; sites];
    for p in 0..particles {
        occ[p % sites] += 1;
    }
    occ
}

#[derive(Debug, Clone, Serialize)]
pub struct LocalizePoint {
    pub index: usize,
    pub x: f64,
    pub model: PointModel,
    pub j_eff: Option<f64>,
    pub beta: Option<f64>,
    /// Largest matrix element of `H_eff⁽¹⁾`.
    pub h1_scale: Option<f64>,
    pub oracle: Option<OracleSummary>,
    /// `|⟨ψ₀|U_T^n|ψ₀⟩|²` for `n = 0..=n_periods`.
    pub return_probability: Vec<f64>,
    pub position_variance: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn localize_point(index: usize, x: f64, model: PointModel, config: &Resolved) -> LocalizePoint {
    let mut point = LocalizePoint {
        index,
        x,
        model: model.clone(),
        j_eff: None,
        beta: None,
        h1_scale: None,
        oracle: None,
        return_probability: Vec::new(),
        position_variance: Vec::new(),
        error: None,
    };
    let result = (|| -> Result<(), String> {
        let lat = lattice(&model)?.expect("localize validated the model");
        let controls = config.series.controls();
        point.j_eff = Some(lat.params.j_eff().map_err(msg)?);
        point.beta = Some(beta(lat.params.x(), &controls).map_err(msg)?.value);
        point.h1_scale = Some(max_abs(&h_eff1(&lat.params, &lat.ops, &controls).map_err(msg)?));
        let occupation = config
            .localize
            .initial_state
            .clone()
            .unwrap_or_else(|| default_initial_state(lat.basis.sites(), lat.basis.particles()));
        let k = lat.basis.require_index(&occupation).map_err(msg)?;
        let mut psi0 = vec![Complex64::new(0.0, 0.0); lat.dim()];
        psi0[k] = Complex64::new(1.0, 0.0);
        let r = monodromy(&model, &config.oracle)?;
        point.oracle = Some(OracleSummary {
            scheme: r.scheme.name(),
            steps: r.steps,
            doubling_change: r.doubling_change,
            unitarity_defect: r.unitarity_defect,
            near_branch_cut: false,
        });
        let series = stroboscopic_evolve(&r.u_t, &psi0, config.localize.n_periods, Some(&lat.basis)).map_err(msg)?;
        point.return_probability = series.return_probability;
        point.position_variance = series.position_variance;
        Ok(())
    })();
    point.error = result.err();
    point
}

#[derive(Serialize)]
struct LocalizeBody<'a> {
    points: &'a [LocalizePoint],
}

pub fn localize(config: &Resolved) -> Result<Outcome, CommandError> {
    let Some(spec) = &config.model else {
        return Err(CommandError::Config("localize needs a model".into()));
    };
    if !matches!(spec.base, PointModel::ShakenBoseHubbard { .. }) {
        return Err(CommandError::Config(
            "localize needs the shaken_bose_hubbard model".into(),
        ));
    }
    if config.sweep.as_ref().is_none_or(|s| s.name != "x") {
        return Err(CommandError::Config("localize needs a sweep over x".into()));
    }
    if let (Some(occ), PointModel::ShakenBoseHubbard { sites, particles, .. }) =
        (&config.localize.initial_state, &spec.base)
    {
        if occ.len() != *sites || occ.iter().sum::<u32>() as usize != *particles {
            return Err(CommandError::Config(format!(
                "localize.initial_state {occ:?} is not a state of {particles} particles on {sites} sites"
            )));
        }
    }
    let points = run_points(config, |i, v, m| localize_point(i, v.expect("swept"), m, config));
    let complete = points.iter().all(|p| p.error.is_none());

    let mut out = Outputs::new(config);
    out.add(Format::Csv, "localize.csv".into(), || {
        let rows: Vec<Vec<String>> = points
            .iter()
            .map(|p| {
                let last = p.return_probability.last().copied();
                let min = p.return_probability.iter().copied().reduce(f64::min);
                vec![
                    p.index.to_string(),
                    num(p.x),
                    opt(p.j_eff),
                    opt(p.j_eff.map(f64::abs)),
                    opt(p.beta),
                    opt(p.h1_scale),
                    opt(last),
                    opt(min),
                    p.error.clone().unwrap_or_default(),
                ]
            })
            .collect();
        csv_table(
            &[
                "index",
                "x",
                "j_eff",
                "abs_j_eff",
                "beta",
                "h1_scale",
                "return_probability",
                "min_return_probability",
                "error",
            ],
            &rows,
        )
    })?;
    out.add(Format::Csv, "localize_trace.csv".into(), || {
        let mut rows = Vec::new();
        for p in &points {
            for (n, (rp, var)) in p.return_probability.iter().zip(&p.position_variance).enumerate() {
                rows.push(vec![p.index.to_string(), num(p.x), n.to_string(), num(*rp), num(*var)]);
            }
        }
        csv_table(
            &["index", "x", "period", "return_probability", "position_variance"],
            &rows,
        )
    })?;
    out.add_report("localize", complete, LocalizeBody { points: &points })?;
    Ok(out.finish(complete))
}

#[derive(Serialize)]
struct FlowRunBody {
    model: PointModel,
    flow: Option<FlowSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

pub fn flow_run(config: &Resolved) -> Result<Outcome, CommandError> {
    if config.model.is_none() {
        return Err(CommandError::Config("flow-run needs a model".into()));
    }
    if config.sweep.is_some() {
        return Err(CommandError::Config(
            "flow-run takes a single point; remove the sweep".into(),
        ));
    }
    let (_, model) = config.points().remove(0);
    let mut out = Outputs::new(config);
    let (body, complete) = match flow(&model, config) {
        Ok(run) => {
            out.add(Format::Csv, "flow_trace.csv".into(), || {
                let rows: Vec<Vec<String>> = run
                    .state
                    .diagnostics
                    .iter()
                    .enumerate()
                    .map(|(i, d)| {
                        vec![
                            i.to_string(),
                            num(d.l),
                            num(d.offdiag_norm),
                            opt(d.spectral_drift),
                            num(d.s_deviation),
                            opt(d.transform_residual),
                        ]
                    })
                    .collect();
                csv_table(
                    &[
                        "step",
                        "l",
                        "offdiag_norm",
                        "spectral_drift",
                        "s_deviation",
                        "transform_residual",
                    ],
                    &rows,
                )
            })?;
            if let Ok(h) = &run.effective {
                out.add(Format::Matrix, "h_eff.txt".into(), || Ok(write_matrix(&h.matrix)))?;
            }
            let complete = run.effective.is_ok();
            (
                FlowRunBody {
                    model,
                    flow: Some(run.summary),
                    error: run.effective.err(),
                },
                complete,
            )
        }
        Err(e) => (
            FlowRunBody {
                model,
                flow: None,
                error: Some(e),
            },
            false,
        ),
    };
    out.add_report("flow_run", complete, body)?;
    Ok(out.finish(complete))
}
