use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use bilag_core::catalog::{self, CurveKind, MuSelector};
use bilag_core::criteria;
use bilag_core::family;
use bilag_core::runner::{
    self, CriteriaSelection, LegendreRequest, LegendreSource, ReportFormat, ResidualReport, RunConfig,
};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bilag", version, about = "Numerical biharmonicity checks for Lagrangian immersions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep a grid and evaluate the selected criteria.
    Verify(VerifyArgs),
    /// Tabulate the closed-form family parameters over a range of dimensions.
    Scan(ScanArgs),
    /// Solve or sample a Legendre curve and export its diagnostics as CSV.
    Legendre(LegendreArgs),
    /// List built-in immersions and criteria.
    Catalog,
}

#[derive(Args, Default)]
struct MuArgs {
    /// Index of the `μ` root (0-3).
    #[arg(long, conflicts_with = "mu")]
    mu_root: Option<usize>,
    /// Explicit `μ`.
    #[arg(long, allow_hyphen_values = true)]
    mu: Option<f64>,
}

impl MuArgs {
    fn selector(&self) -> Option<MuSelector> {
        self.mu.map(MuSelector::Value).or(self.mu_root.map(MuSelector::Root))
    }
}

#[derive(Args, Default)]
struct SweepArgs {
    /// Per-axis counts, comma separated; one value applies to every axis.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<usize>>,
    #[arg(long)]
    tol_geometry: Option<f64>,
    #[arg(long)]
    tol_criteria: Option<f64>,
    #[arg(long)]
    tol_identities: Option<f64>,
    /// `auto` or a comma-separated subset of the registered criteria.
    #[arg(long)]
    criteria: Option<String>,
    #[arg(long)]
    workers: Option<usize>,
    /// Seed for a random adapted-frame gauge per point.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct VerifyArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Catalog key or immersion file.
    #[arg(long)]
    immersion: Option<String>,
    #[arg(long)]
    m: Option<usize>,
    #[command(flatten)]
    mu: MuArgs,
    /// Legendre curve for `warped-from-ode`: biharmonic or generic.
    #[arg(long)]
    curve: Option<String>,
    #[command(flatten)]
    sweep: SweepArgs,
    /// Report path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    format: Option<ReportFormat>,
}

#[derive(Args)]
struct ScanArgs {
    /// Inclusive range `lo..hi`, or a single dimension.
    #[arg(long, default_value = "2..10")]
    m: String,
    /// Also run a grid verification of every family member.
    #[arg(long)]
    verify: bool,
    /// Base configuration for `--verify`.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    sweep: SweepArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LegendreArgs {
    #[arg(long, default_value_t = 2)]
    m: usize,
    #[command(flatten)]
    mu: MuArgs,
    /// closed, ode or generic.
    #[arg(long, default_value = "ode")]
    curve: LegendreSource,
    #[arg(long, default_value_t = catalog::DEFAULT_ODE_STEP)]
    step: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl SweepArgs {
    fn apply(&self, c: &mut RunConfig) -> Result<()> {
        if let Some(g) = &self.grid {
            c.grid = g.clone();
        }
        if let Some(t) = self.tol_geometry {
            c.tolerances.geometry = t;
        }
        if let Some(t) = self.tol_criteria {
            c.tolerances.criteria = t;
        }
        if let Some(t) = self.tol_identities {
            c.tolerances.identities = t;
        }
        if let Some(s) = &self.criteria {
            c.criteria = CriteriaSelection::parse(s).map_err(anyhow::Error::msg)?;
        }
        if let Some(w) = self.workers {
            c.workers = w;
        }
        if self.seed.is_some() {
            c.seed = self.seed;
        }
        Ok(())
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    Ok(match path {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    })
}

fn parse_curve(s: &str) -> Result<CurveKind> {
    match s {
        "biharmonic" => Ok(CurveKind::Biharmonic),
        "generic" => Ok(CurveKind::Generic),
        other => bail!("unknown curve `{other}`; expected biharmonic or generic"),
    }
}

fn parse_m_range(s: &str) -> Result<std::ops::RangeInclusive<usize>> {
    let (lo, hi) = match s.split_once("..") {
        Some((lo, hi)) => (lo, hi.trim_start_matches('=')),
        None => (s, s),
    };
    let lo: usize = lo.trim().parse().with_context(|| format!("bad range `{s}`"))?;
    let hi: usize = hi.trim().parse().with_context(|| format!("bad range `{s}`"))?;
    if lo < 2 || hi < lo {
        bail!("range `{s}` must satisfy 2 <= lo <= hi");
    }
    Ok(lo..=hi)
}

fn with_output<F>(out: Option<&Path>, f: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    match out {
        Some(p) => {
            let file = std::fs::File::create(p).with_context(|| format!("cannot write {}", p.display()))?;
            let mut w = io::BufWriter::new(file);
            f(&mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock)?;
            lock.flush()?;
        }
    }
    Ok(())
}

fn print_summary(report: &ResidualReport) {
    eprintln!("{} on {:?} grid ({} points)", report.immersion, report.grid, report.records.len());
    for (name, v) in report.verdicts.iter().chain(&report.checks) {
        let max = v.max_value.map(|x| format!("{x:.3e}")).unwrap_or_else(|| "-".into());
        eprintln!("  {name:<15} {:<12} max {max:<10} tol {:.0e}", v.status.to_string(), v.tolerance);
    }
    eprintln!("verdict: {}", if report.passed() { "pass" } else { "fail" });
}

fn verify(args: VerifyArgs) -> Result<bool> {
    let mut c = load_config(args.config.as_deref())?;
    if let Some(i) = args.immersion {
        c.immersion = i;
    }
    if let Some(m) = args.m {
        c.m = m;
    }
    if let Some(sel) = args.mu.selector() {
        c.mu = sel;
    }
    if let Some(curve) = &args.curve {
        c.curve = parse_curve(curve)?;
    }
    args.sweep.apply(&mut c)?;
    if args.out.is_some() {
        c.output = args.out;
    }
    if let Some(f) = args.format {
        c.format = f;
    }
    let report = runner::run_verify(&c)?;
    match &c.output {
        Some(p) => runner::emit_report(&report, c.format, p)?,
        None => with_output(None, |w| Ok(runner::write_report(&report, c.format, w)?))?,
    }
    print_summary(&report);
    Ok(report.passed())
}

fn scan(args: ScanArgs) -> Result<bool> {
    let range = parse_m_range(&args.m)?;
    let mut base = load_config(args.config.as_deref())?;
    args.sweep.apply(&mut base)?;
    base.validate()?;
    let rows = runner::run_scan(range, &base.tolerances, args.verify.then_some(&base))?;
    with_output(args.out.as_deref(), |w| Ok(runner::write_scan_csv(&rows, w)?))?;
    let failed = rows.iter().filter(|r| r.verdict != "pass").count();
    eprintln!("{} rows, {failed} failing", rows.len());
    Ok(failed == 0)
}

fn legendre(args: LegendreArgs) -> Result<bool> {
    let req = LegendreRequest {
        m: args.m,
        mu: args.mu.selector().unwrap_or_default(),
        curve: args.curve,
        step: args.step,
    };
    let (samples, summary) = runner::run_legendre(&req)?;
    with_output(args.out.as_deref(), |w| Ok(family::write_legendre_csv(&samples, w)?))?;
    eprintln!("{}", serde_json::to_string(&summary)?);
    Ok(true)
}

fn list_catalog() -> Result<bool> {
    let mut out = io::stdout().lock();
    writeln!(out, "immersions:")?;
    for f in catalog::factories() {
        let mu = if f.uses_mu() { " [mu]" } else { "" };
        writeln!(out, "  {:<27} {}{mu}", f.key(), f.summary())?;
    }
    writeln!(out, "criteria:")?;
    for c in criteria::registry() {
        writeln!(out, "  {:<27} {}", c.name(), c.summary())?;
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Verify(a) => verify(a),
        Command::Scan(a) => scan(a),
        Command::Legendre(a) => legendre(a),
        Command::Catalog => list_catalog(),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn m_ranges() {
        assert_eq!(parse_m_range("2..4").unwrap(), 2..=4);
        assert_eq!(parse_m_range("2..=4").unwrap(), 2..=4);
        assert_eq!(parse_m_range("3").unwrap(), 3..=3);
        assert!(parse_m_range("1..3").is_err());
        assert!(parse_m_range("4..2").is_err());
        assert!(parse_m_range("x").is_err());
    }

    #[test]
    fn flags_override_config() {
        let mut c = RunConfig {
            grid: vec![8],
            workers: 3,
            ..Default::default()
        };
        let s = SweepArgs {
            grid: Some(vec![5, 6]),
            tol_criteria: Some(1e-3),
            criteria: Some("split".into()),
            ..Default::default()
        };
        s.apply(&mut c).unwrap();
        assert_eq!(c.grid, vec![5, 6]);
        assert_eq!(c.tolerances.criteria, 1e-3);
        assert_eq!(c.workers, 3);
        assert_eq!(c.criteria, CriteriaSelection::List(vec!["split".into()]));
    }
}
