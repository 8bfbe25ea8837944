//! Grid sweeps, residual reports and closed-form scans.
//!
//! A [`RunConfig`] names an immersion, a grid and the criteria to evaluate.
//! [`run_verify`] fans the grid out over a worker pool, collects per-point
//! records in grid order and reduces them sequentially, so aggregates do not
//! depend on the worker count.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ambient::AmbientModel;
use crate::catalog::{self, CatalogError, CatalogParams, CurveKind, FamilyParameters, MuSelector, DEFAULT_ODE_STEP};
use crate::criteria::{self, classification_identities, CriterionError, CriterionResidual, IdentityResiduals, Site};
use crate::family::{self, FamilyError, LegendreCurve, LegendreSample};
use crate::geometry::{FrameGauge, Immersion};
use crate::lagrangian::{self, HUmbilicalFit, LagrangianError, FIT_GATE};

/// Smallest per-axis count of a non-empty grid.
pub const MIN_AXIS_COUNT: usize = 4;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Family(#[from] FamilyError),
    #[error("evaluation failed at point {point:?}: {message}")]
    Point { point: Vec<f64>, message: String },
    #[error("worker pool: {0}")]
    Pool(String),
    #[error("cannot write {path}: {message}")]
    Output { path: String, message: String },
    #[error("report serialization: {0}")]
    Serialize(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Lagrangian, H-umbilical fit and PNMC defects.
    pub geometry: f64,
    /// Relative criterion residuals.
    pub criteria: f64,
    /// Classification identities.
    pub identities: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            geometry: 1e-8,
            criteria: 1e-6,
            identities: 1e-10,
        }
    }
}

/// Criteria to evaluate. `Auto` evaluates every registered criterion and
/// leaves those inapplicable on the whole grid out of the exit status.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "CriteriaSpec", into = "CriteriaSpec")]
pub enum CriteriaSelection {
    #[default]
    Auto,
    List(Vec<String>),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum CriteriaSpec {
    Keyword(String),
    List(Vec<String>),
}

impl TryFrom<CriteriaSpec> for CriteriaSelection {
    type Error = String;
    fn try_from(spec: CriteriaSpec) -> Result<Self, String> {
        match spec {
            CriteriaSpec::Keyword(k) if k == "auto" => Ok(CriteriaSelection::Auto),
            CriteriaSpec::Keyword(k) => CriteriaSelection::parse(&k),
            CriteriaSpec::List(l) => Ok(CriteriaSelection::List(l)),
        }
    }
}

impl From<CriteriaSelection> for CriteriaSpec {
    fn from(c: CriteriaSelection) -> Self {
        match c {
            CriteriaSelection::Auto => CriteriaSpec::Keyword("auto".into()),
            CriteriaSelection::List(l) => CriteriaSpec::List(l),
        }
    }
}

impl CriteriaSelection {
    /// `auto` or a comma-separated list of criterion names.
    pub fn parse(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s == "auto" {
            return Ok(CriteriaSelection::Auto);
        }
        let names: Vec<String> = s.split(',').map(|n| n.trim().to_string()).filter(|n| !n.is_empty()).collect();
        if names.is_empty() {
            return Err("empty criteria list".into());
        }
        Ok(CriteriaSelection::List(names))
    }

    pub fn names(&self) -> Vec<String> {
        match self {
            CriteriaSelection::Auto => criteria::names().into_iter().map(String::from).collect(),
            CriteriaSelection::List(l) => l.clone(),
        }
    }

    pub fn is_auto(&self) -> bool {
        matches!(self, CriteriaSelection::Auto)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!("unknown format `{other}`; expected json or csv")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Catalog key or immersion file path.
    pub immersion: String,
    pub m: usize,
    pub mu: MuSelector,
    pub curve: CurveKind,
    pub ode_step: f64,
    /// Per-axis counts; a single entry applies to every axis. `0` gives an
    /// empty grid.
    pub grid: Vec<usize>,
    pub tolerances: Tolerances,
    pub criteria: CriteriaSelection,
    pub output: Option<PathBuf>,
    pub format: ReportFormat,
    pub workers: usize,
    /// Seeds a random adapted-frame gauge per point.
    pub seed: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            immersion: "chen".into(),
            m: 2,
            mu: MuSelector::default(),
            curve: CurveKind::default(),
            ode_step: DEFAULT_ODE_STEP,
            grid: vec![8],
            tolerances: Tolerances::default(),
            criteria: CriteriaSelection::default(),
            output: None,
            format: ReportFormat::default(),
            workers: 1,
            seed: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, RunError> {
        toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn catalog_params(&self) -> CatalogParams {
        CatalogParams {
            m: self.m,
            mu: self.mu,
            curve: self.curve,
            ode_step: self.ode_step,
        }
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |s: String| Err(RunError::Config(s));
        for (name, t) in [
            ("geometry", self.tolerances.geometry),
            ("criteria", self.tolerances.criteria),
            ("identities", self.tolerances.identities),
        ] {
            if !(t > 0.0 && t.is_finite()) {
                return bad(format!("tolerance `{name}` must be positive, got {t}"));
            }
        }
        if self.grid.is_empty() {
            return bad("grid needs at least one count".into());
        }
        if let Some(c) = self.grid.iter().find(|&&c| c != 0 && c < MIN_AXIS_COUNT) {
            return bad(format!("grid count {c} is below {MIN_AXIS_COUNT} (use 0 for an empty grid)"));
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if !(self.ode_step > 0.0) {
            return bad(format!("ode_step must be positive, got {}", self.ode_step));
        }
        for name in self.criteria.names() {
            criteria::lookup(&name).map_err(|e| RunError::Config(e.to_string()))?;
        }
        Ok(())
    }

    fn axis_counts(&self, chart_dim: usize) -> Result<Vec<usize>, RunError> {
        match self.grid.len() {
            1 => Ok(vec![self.grid[0]; chart_dim]),
            n if n == chart_dim => Ok(self.grid.clone()),
            n => Err(RunError::Config(format!("grid has {n} counts for a {chart_dim}-dimensional chart"))),
        }
    }
}

/// Outcome of one criterion at one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum PointOutcome {
    Evaluated(CriterionResidual),
    Inapplicable { reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructureDefects {
    pub lagrangian: f64,
    /// Absent where no adapted frame exists.
    pub humbilical: Option<HUmbilicalFit>,
    /// Absent at minimal points.
    pub pnmc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub index: usize,
    pub point: Vec<f64>,
    pub residuals: BTreeMap<String, PointOutcome>,
    pub defects: StructureDefects,
    /// From the fitted `(λ, μ)` where the H-umbilical fit holds.
    pub identities: Option<IdentityResiduals>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub count: usize,
    pub max: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerdictStatus {
    Pass,
    Fail,
    Inapplicable,
    NoPoints,
}

impl fmt::Display for VerdictStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VerdictStatus::Pass => "pass",
            VerdictStatus::Fail => "fail",
            VerdictStatus::Inapplicable => "inapplicable",
            VerdictStatus::NoPoints => "no-points",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub status: VerdictStatus,
    pub max_value: Option<f64>,
    pub tolerance: f64,
    pub evaluated: usize,
    pub inapplicable: usize,
}

impl Verdict {
    /// Pass iff every point was evaluated and the maximum is within tolerance.
    fn from_values(values: &[Option<f64>], tolerance: f64) -> Verdict {
        let evaluated: Vec<f64> = values.iter().flatten().copied().collect();
        let inapplicable = values.len() - evaluated.len();
        let max_value = evaluated.iter().copied().reduce(f64::max);
        let status = if values.is_empty() {
            VerdictStatus::NoPoints
        } else if evaluated.is_empty() {
            VerdictStatus::Inapplicable
        } else if inapplicable == 0 && evaluated.iter().all(|v| *v <= tolerance) {
            VerdictStatus::Pass
        } else {
            VerdictStatus::Fail
        };
        Verdict {
            status,
            max_value,
            tolerance,
            evaluated: evaluated.len(),
            inapplicable,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub engine_version: String,
    pub timestamp_unix: u64,
}

impl Provenance {
    pub fn now() -> Self {
        Provenance {
            engine_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        }
    }
}

/// The closed-form parameters of a family member and their identities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySummary {
    pub lambda: f64,
    pub mu: f64,
    pub a: f64,
    pub identities: IdentityResiduals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub config: RunConfig,
    pub immersion: String,
    pub model: AmbientModel,
    pub grid: Vec<usize>,
    pub criteria: Vec<String>,
    pub records: Vec<PointRecord>,
    pub aggregates: BTreeMap<String, Aggregate>,
    /// Per criterion; these decide the exit status.
    pub verdicts: BTreeMap<String, Verdict>,
    /// Structure defects and identities; informational.
    pub checks: BTreeMap<String, Verdict>,
    pub family: Option<FamilySummary>,
    pub provenance: Provenance,
}

impl ResidualReport {
    /// True iff every selected criterion passes. Under automatic selection a
    /// criterion that is inapplicable on the whole grid is skipped.
    pub fn passed(&self) -> bool {
        let auto = self.config.criteria.is_auto();
        let mut any = false;
        for v in self.verdicts.values() {
            match v.status {
                VerdictStatus::Pass => any = true,
                VerdictStatus::Inapplicable if auto => {}
                _ => return false,
            }
        }
        any
    }
}

fn evaluate_point(
    imm: &Immersion,
    index: usize,
    point: &[f64],
    names: &[String],
    seed: Option<u64>,
) -> Result<PointRecord, RunError> {
    let fail = |message: String| RunError::Point {
        point: point.to_vec(),
        message,
    };
    let mut site = Site::new(imm, point).map_err(|e| fail(e.to_string()))?;
    if let Some(s) = seed {
        site = site.with_gauge(FrameGauge::random(imm.chart_dim(), s.wrapping_add(index as u64)));
    }

    let mut residuals = BTreeMap::new();
    for name in names {
        let c = criteria::lookup(name).map_err(|e| fail(e.to_string()))?;
        let outcome = match c.evaluate(&site) {
            Ok(r) => PointOutcome::Evaluated(r),
            Err(CriterionError::Inapplicable(reason)) => PointOutcome::Inapplicable { reason },
            Err(e) => return Err(fail(format!("{name}: {e}"))),
        };
        residuals.insert(name.clone(), outcome);
    }

    let lagrangian = lagrangian::lagrangian_defect_at(site.geometry());
    let humbilical = match site.scalars() {
        Ok(s) => Some(HUmbilicalFit::from_scalars(s)),
        Err(LagrangianError::MinimalPoint(_)) => match lagrangian::humbilical_fit(site.geometry(), site.gauge()) {
            Ok(fit) => Some(fit),
            Err(LagrangianError::Geometry(e)) => return Err(fail(e.to_string())),
            Err(_) => None,
        },
        Err(LagrangianError::Geometry(e)) => return Err(fail(e.to_string())),
        Err(_) => None,
    };
    let pnmc = match lagrangian::pnmc_defect(site.geometry()) {
        Ok(v) => Some(v),
        Err(LagrangianError::Geometry(e)) => return Err(fail(e.to_string())),
        Err(_) => None,
    };
    let epsilon = imm.target().epsilon();
    let identities = humbilical
        .filter(|f| f.fit_residual < FIT_GATE)
        .map(|f| classification_identities(imm.chart_dim(), f.lambda, f.mu, epsilon));

    Ok(PointRecord {
        index,
        point: point.to_vec(),
        residuals,
        defects: StructureDefects {
            lagrangian,
            humbilical,
            pnmc,
        },
        identities,
    })
}

#[derive(Default)]
struct Accumulator {
    series: BTreeMap<String, Vec<f64>>,
}

impl Accumulator {
    fn push(&mut self, key: String, v: f64) {
        self.series.entry(key).or_default().push(v);
    }

    fn finish(self) -> BTreeMap<String, Aggregate> {
        self.series
            .into_iter()
            .map(|(k, v)| {
                let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mean = v.iter().sum::<f64>() / v.len() as f64;
                (k, Aggregate { count: v.len(), max, mean })
            })
            .collect()
    }
}

fn aggregate(records: &[PointRecord]) -> BTreeMap<String, Aggregate> {
    let mut acc = Accumulator::default();
    for r in records {
        for (name, outcome) in &r.residuals {
            if let PointOutcome::Evaluated(res) = outcome {
                acc.push(format!("{name}.tangential"), res.tangential_norm);
                acc.push(format!("{name}.normal"), res.normal_norm);
                acc.push(format!("{name}.relative_tangential"), res.relative_tangential());
                acc.push(format!("{name}.relative_normal"), res.relative_normal());
                for (eq, v) in &res.per_equation {
                    if eq != "tangential" && eq != "normal" {
                        acc.push(format!("{name}.{eq}"), *v);
                    }
                }
            }
        }
        acc.push("defects.lagrangian".into(), r.defects.lagrangian);
        if let Some(f) = &r.defects.humbilical {
            acc.push("defects.humbilical_fit".into(), f.fit_residual);
        }
        if let Some(p) = r.defects.pnmc {
            acc.push("defects.pnmc".into(), p);
        }
        if let Some(id) = &r.identities {
            for (k, v) in id.to_map() {
                acc.push(format!("identities.{k}"), v);
            }
        }
    }
    acc.finish()
}

fn criterion_verdicts(records: &[PointRecord], names: &[String], tol: f64) -> BTreeMap<String, Verdict> {
    names
        .iter()
        .map(|name| {
            let values: Vec<Option<f64>> = records
                .iter()
                .map(|r| match r.residuals.get(name) {
                    Some(PointOutcome::Evaluated(res)) => Some(res.verdict_value()),
                    _ => None,
                })
                .collect();
            (name.clone(), Verdict::from_values(&values, tol))
        })
        .collect()
}

fn check_verdicts(records: &[PointRecord], tol: &Tolerances) -> BTreeMap<String, Verdict> {
    let collect = |f: &dyn Fn(&PointRecord) -> Option<f64>| records.iter().map(f).collect::<Vec<_>>();
    BTreeMap::from([
        ("lagrangian".to_string(), Verdict::from_values(&collect(&|r| Some(r.defects.lagrangian)), tol.geometry)),
        (
            "humbilical_fit".to_string(),
            Verdict::from_values(&collect(&|r| r.defects.humbilical.map(|f| f.fit_residual)), tol.geometry),
        ),
        ("pnmc".to_string(), Verdict::from_values(&collect(&|r| r.defects.pnmc), tol.geometry)),
        (
            "identities".to_string(),
            Verdict::from_values(&collect(&|r| r.identities.map(|i| i.max())), tol.identities),
        ),
    ])
}

fn family_summary(m: usize, p: FamilyParameters, epsilon: f64) -> FamilySummary {
    FamilySummary {
        lambda: p.lambda,
        mu: p.mu,
        a: family::mean_curvature_coefficient(m, p.lambda, p.mu),
        identities: classification_identities(m, p.lambda, p.mu, epsilon),
    }
}

/// Builds the immersion, sweeps the grid and assembles the report.
pub fn run_verify(config: &RunConfig) -> Result<ResidualReport, RunError> {
    config.validate()?;
    let built = catalog::build(&config.immersion, &config.catalog_params())?;
    let imm = &built.immersion;
    let counts = config.axis_counts(imm.chart_dim())?;
    let points = imm.domain().grid(&counts);
    let names = config.criteria.names();

    let eval = |(i, p): (usize, &Vec<f64>)| evaluate_point(imm, i, p, &names, config.seed);
    // a single worker stays on the calling thread; pool threads allocate
    // measurably slower
    let records: Vec<PointRecord> = if config.workers == 1 {
        points.iter().enumerate().map(eval).collect::<Result<_, _>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| RunError::Pool(e.to_string()))?;
        pool.install(|| points.par_iter().enumerate().map(eval).collect::<Result<_, _>>())?
    };

    let model = imm.target();
    Ok(ResidualReport {
        config: config.clone(),
        immersion: imm.name().to_string(),
        model,
        grid: counts,
        aggregates: aggregate(&records),
        verdicts: criterion_verdicts(&records, &names, config.tolerances.criteria),
        checks: check_verdicts(&records, &config.tolerances),
        family: built.parameters.map(|p| family_summary(imm.chart_dim(), p, model.epsilon())),
        criteria: names,
        records,
        provenance: Provenance::now(),
    })
}

fn csv_err(e: impl fmt::Display) -> RunError {
    RunError::Serialize(e.to_string())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Serializes the report: nested JSON, or one CSV row per grid point.
pub fn write_report<W: Write>(report: &ResidualReport, format: ReportFormat, mut out: W) -> Result<(), RunError> {
    match format {
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut out, report).map_err(csv_err)?;
            writeln!(out).map_err(csv_err)
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            let dim = report.grid.len();
            let mut header: Vec<String> = vec!["index".into()];
            header.extend((0..dim).map(|k| format!("x{k}")));
            for c in &report.criteria {
                for col in ["status", "tangential", "normal", "scale", "relative"] {
                    header.push(format!("{c}.{col}"));
                }
            }
            header.extend(["lagrangian_defect", "fit_residual", "lambda", "mu", "pnmc_defect", "identities_max"].map(String::from));
            w.write_record(&header).map_err(csv_err)?;
            for r in &report.records {
                let mut row: Vec<String> = vec![r.index.to_string()];
                row.extend(r.point.iter().map(f64::to_string));
                for c in &report.criteria {
                    match r.residuals.get(c) {
                        Some(PointOutcome::Evaluated(res)) => row.extend([
                            "evaluated".to_string(),
                            res.tangential_norm.to_string(),
                            res.normal_norm.to_string(),
                            res.scale.to_string(),
                            res.verdict_value().to_string(),
                        ]),
                        _ => row.extend(["inapplicable".to_string(), String::new(), String::new(), String::new(), String::new()]),
                    }
                }
                let fit = r.defects.humbilical;
                row.extend([
                    r.defects.lagrangian.to_string(),
                    opt(fit.map(|f| f.fit_residual)),
                    opt(fit.map(|f| f.lambda)),
                    opt(fit.map(|f| f.mu)),
                    opt(r.defects.pnmc),
                    opt(r.identities.map(|i| i.max())),
                ]);
                w.write_record(&row).map_err(csv_err)?;
            }
            w.flush().map_err(csv_err)
        }
    }
}

/// Writes the report to `path`.
pub fn emit_report(report: &ResidualReport, format: ReportFormat, path: &Path) -> Result<(), RunError> {
    let out_err = |e: std::io::Error| RunError::Output {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let file = std::fs::File::create(path).map_err(out_err)?;
    let mut buf = std::io::BufWriter::new(file);
    write_report(report, format, &mut buf)?;
    buf.flush().map_err(out_err)
}

/// One `(m, root)` row of the closed-form scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub m: usize,
    pub root_index: usize,
    pub mu: f64,
    pub lambda: f64,
    pub a: f64,
    pub res_516: f64,
    pub res_53pp: f64,
    pub res_lambda: f64,
    /// `pass` iff the identities hold and, when requested, the grid
    /// verification of the family member passes.
    pub verdict: String,
}

/// Evaluates every `μ` root for each `m`; with `verify` set, each row also
/// runs [`run_verify`] on the family member using that config's grid,
/// tolerances and workers.
pub fn run_scan(m_range: RangeInclusive<usize>, tolerances: &Tolerances, verify: Option<&RunConfig>) -> Result<Vec<ScanRow>, RunError> {
    let mut rows = Vec::new();
    for m in m_range {
        let roots = family::mu_roots(m)?;
        for (root_index, &mu) in roots.roots.iter().enumerate() {
            let lambda = family::lambda_from_mu(mu)?;
            let id = classification_identities(m, lambda, mu, 1.0);
            let mut pass = id.max() <= tolerances.identities;
            if let Some(base) = verify {
                let cfg = RunConfig {
                    immersion: "chen".into(),
                    m,
                    mu: MuSelector::Root(root_index),
                    ..base.clone()
                };
                pass &= run_verify(&cfg)?.passed();
            }
            rows.push(ScanRow {
                m,
                root_index,
                mu,
                lambda,
                a: family::mean_curvature_coefficient(m, lambda, mu),
                res_516: id.quadratic,
                res_53pp: id.trace,
                res_lambda: id.lambda.unwrap_or(0.0),
                verdict: if pass { "pass" } else { "fail" }.into(),
            });
        }
    }
    Ok(rows)
}

pub fn write_scan_csv<W: Write>(rows: &[ScanRow], out: W) -> Result<(), RunError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(["m", "root_index", "mu", "lambda", "a", "res_516", "res_53pp", "res_lambda", "verdict"])
        .map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)
}

/// Parameters of a Legendre-curve export.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegendreRequest {
    pub m: usize,
    pub mu: MuSelector,
    pub curve: LegendreSource,
    pub step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LegendreSource {
    /// Closed-form Chen curve.
    Closed,
    /// RK4 re-integration of the Chen curve.
    #[default]
    Ode,
    /// The non-biharmonic control curve.
    Generic,
}

impl std::str::FromStr for LegendreSource {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "closed" => Ok(LegendreSource::Closed),
            "ode" => Ok(LegendreSource::Ode),
            "generic" => Ok(LegendreSource::Generic),
            other => Err(format!("unknown curve `{other}`; expected closed, ode or generic")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegendreSummary {
    pub interval: (f64, f64),
    /// Input `μ`; absent for the generic curve.
    pub mu: Option<f64>,
    pub samples: usize,
    pub max_norm_defect: f64,
    pub max_speed_defect: f64,
    pub max_legendre_defect: f64,
    /// `sup |μ(x) − μ|`
    pub max_mu_error: Option<f64>,
    /// `sup |z_ode − z_closed|` over the samples.
    pub max_closed_form_error: Option<f64>,
}

/// Builds the requested curve and returns its per-sample diagnostics.
pub fn run_legendre(req: &LegendreRequest) -> Result<(Vec<LegendreSample>, LegendreSummary), RunError> {
    if !(req.step > 0.0) {
        return Err(RunError::Config(format!("step must be positive, got {}", req.step)));
    }
    let (curve, mu) = match req.curve {
        LegendreSource::Generic => (family::generic_curve(req.step)?, None),
        src => {
            let mu = req.mu.resolve(req.m)?;
            let curve = match src {
                LegendreSource::Closed => LegendreCurve::chen(mu)?,
                _ => family::chen_ode_curve(mu, req.step)?,
            };
            (curve, Some(mu))
        }
    };
    let samples = family::legendre_diagnostics(&curve)?;
    let sup = |f: &dyn Fn(&LegendreSample) -> f64| samples.iter().map(f).fold(0.0, f64::max);
    let max_closed_form_error = match (mu, curve.is_closed_form()) {
        (Some(mu), false) => {
            let closed = LegendreCurve::chen(mu)?;
            let mut worst = 0.0f64;
            for s in &samples {
                let (z, _) = closed.state(s.x)?;
                let d = [s.re_z1 - z[0].re, s.im_z1 - z[0].im, s.re_z2 - z[1].re, s.im_z2 - z[1].im];
                worst = worst.max(d.iter().map(|v| v * v).sum::<f64>().sqrt());
            }
            Some(worst)
        }
        _ => None,
    };
    let summary = LegendreSummary {
        interval: curve.interval(),
        mu,
        samples: samples.len(),
        max_norm_defect: sup(&|s| s.norm_defect),
        max_speed_defect: sup(&|s| s.speed_defect),
        max_legendre_defect: sup(&|s| s.legendre_defect),
        max_mu_error: mu.map(|mu| sup(&|s| (s.mu - mu).abs())),
        max_closed_form_error,
    };
    Ok((samples, summary))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(immersion: &str) -> RunConfig {
        RunConfig {
            immersion: immersion.into(),
            grid: vec![4],
            ..Default::default()
        }
    }

    #[test]
    fn config_defaults_and_toml() {
        let c = RunConfig::from_toml_str("immersion = \"circle\"\ngrid = [5]\ncriteria = \"split,spaceform\"\n[tolerances]\ncriteria = 1e-7\n").unwrap();
        assert_eq!(c.immersion, "circle");
        assert_eq!(c.tolerances.criteria, 1e-7);
        assert_eq!(c.tolerances.geometry, 1e-8);
        assert_eq!(c.criteria, CriteriaSelection::List(vec!["split".into(), "spaceform".into()]));
        let c = RunConfig::from_toml_str("criteria = [\"kahler\"]\nmu = { value = 1.5 }\n").unwrap();
        assert_eq!(c.criteria, CriteriaSelection::List(vec!["kahler".into()]));
        assert_eq!(c.mu, MuSelector::Value(1.5));
        assert!(RunConfig::from_toml_str("bogus = 1").is_err());
    }

    #[test]
    fn validation() {
        let ok = small("chen");
        assert!(ok.validate().is_ok());
        for bad in [
            RunConfig { grid: vec![3], ..ok.clone() },
            RunConfig { grid: vec![], ..ok.clone() },
            RunConfig { workers: 0, ..ok.clone() },
            RunConfig {
                tolerances: Tolerances { criteria: 0.0, ..Default::default() },
                ..ok.clone()
            },
            RunConfig {
                criteria: CriteriaSelection::List(vec!["nope".into()]),
                ..ok.clone()
            },
        ] {
            assert!(matches!(bad.validate(), Err(RunError::Config(_))), "{bad:?}");
        }
        let wrong_arity = RunConfig { grid: vec![4, 4, 4], ..ok };
        assert!(matches!(run_verify(&wrong_arity), Err(RunError::Config(_))));
    }

    #[test]
    fn chen_passes_and_circle_fails() {
        let r = run_verify(&small("chen")).unwrap();
        assert_eq!(r.records.len(), 16);
        assert!(r.passed(), "{:?}", r.verdicts);
        assert!(r.family.as_ref().unwrap().identities.max() < 1e-10);

        let r = run_verify(&small("circle")).unwrap();
        assert!(!r.passed());
        assert_eq!(r.verdicts["spaceform"].status, VerdictStatus::Fail);
        assert!((r.aggregates["spaceform.normal"].max - 1.0).abs() < 1e-9);
    }

    #[test]
    fn empty_grid_reports_no_points() {
        let r = run_verify(&RunConfig { grid: vec![0], ..small("chen") }).unwrap();
        assert!(r.records.is_empty());
        assert!(r.verdicts.values().all(|v| v.status == VerdictStatus::NoPoints));
        assert!(!r.passed());
    }

    #[test]
    fn explicit_inapplicable_criterion_fails_the_run() {
        let base = small("holomorphic-control");
        let r = run_verify(&base).unwrap();
        assert_eq!(r.verdicts["kahler"].status, VerdictStatus::Inapplicable);
        assert!(r.passed());
        let r = run_verify(&RunConfig {
            criteria: CriteriaSelection::List(vec!["kahler".into()]),
            ..base
        })
        .unwrap();
        assert!(!r.passed());
    }

    #[test]
    fn point_errors_carry_coordinates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cusp.toml");
        std::fs::write(
            &path,
            "target = \"flat\"\nm = 1\ncomponents = [\"x0^2\", \"x0^3\"]\n[[axes]]\nlo = -1.0\nhi = 1.0\nperiodic = false\n",
        )
        .unwrap();
        let cfg = RunConfig {
            immersion: path.to_str().unwrap().into(),
            m: 1,
            grid: vec![5],
            ..Default::default()
        };
        match run_verify(&cfg) {
            Err(RunError::Point { point, .. }) => assert_eq!(point, vec![0.0]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn csv_has_one_row_per_point() {
        let r = run_verify(&small("flat-plane")).unwrap();
        let mut buf = Vec::new();
        write_report(&r, ReportFormat::Csv, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 16);
        assert!(text.starts_with("index,x0,x1,split.status"));
    }

    #[test]
    fn scan_rows() {
        let rows = run_scan(2..=4, &Tolerances::default(), None).unwrap();
        assert_eq!(rows.len(), 12);
        assert!(rows.iter().all(|r| r.verdict == "pass"));
        let mut buf = Vec::new();
        write_scan_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "m,root_index,mu,lambda,a,res_516,res_53pp,res_lambda,verdict");
        assert_eq!(text.lines().count(), 13);
    }

    #[test]
    fn legendre_ode_tracks_closed_form() {
        let req = LegendreRequest {
            m: 2,
            mu: MuSelector::Root(0),
            curve: LegendreSource::Ode,
            step: 1e-3,
        };
        let (samples, summary) = run_legendre(&req).unwrap();
        assert_eq!(samples.len(), summary.samples);
        assert!(summary.max_closed_form_error.unwrap() < 1e-8, "{summary:?}");
        assert!(summary.max_mu_error.unwrap() < 1e-8);
        let (_, generic) = run_legendre(&LegendreRequest {
            curve: LegendreSource::Generic,
            ..req
        })
        .unwrap();
        assert!(generic.mu.is_none() && generic.max_closed_form_error.is_none());
    }
}
