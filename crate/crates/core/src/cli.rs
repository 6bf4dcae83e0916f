//! Command-line front end: `analyze`, `compare` and `simulate`.
//!
//! Settings resolve as flag or `OOSR2_*` environment variable, then the
//! `--config` file, then the built-in defaults.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::data::{CiMethod, CsvTable, MseMethod, OutcomeColumn, RhoMethod, RunConfig, SeMethod};
use crate::error::Error;
use crate::inference::{analyze, compare_r2_across, compare_r2_within, Comparison, R2Report};
use crate::predictors::{PredictorKind, PredictorSpec};
use crate::sim::{parse_scenarios, run_scenario, write_diagnostics_csv, Manifest};

#[derive(Parser, Debug)]
#[command(name = "oosr2", version, about = "Out-of-sample R² with standard errors, intervals and tests")]
pub struct Cli {
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long, global = true, env = "OOSR2_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Estimate R² for one outcome of a CSV file.
    Analyze(AnalyzeArgs),
    /// Test the difference of two R² values.
    Compare(CompareArgs),
    /// Run Monte-Carlo scenarios from a scenario file.
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Table,
}

/// Estimation settings shared by `analyze` and `compare --within`.
#[derive(Args, Debug, Clone, Default)]
pub struct EstimationArgs {
    /// Prediction model: ols, enet or mean.
    #[arg(long, env = "OOSR2_MODEL")]
    pub model: Option<PredictorKind>,
    /// MSE estimator: cv or boot632.
    #[arg(long = "mse-method", env = "OOSR2_MSE_METHOD")]
    pub mse_method: Option<MseMethod>,
    #[arg(long, env = "OOSR2_FOLDS")]
    pub folds: Option<usize>,
    /// Repeated splits into folds.
    #[arg(long, env = "OOSR2_REPEATS")]
    pub repeats: Option<usize>,
    /// Bootstrap draws of the .632 estimator.
    #[arg(long, env = "OOSR2_BOOT")]
    pub boot: Option<usize>,
    /// Outer bootstrap draws for ρ, bootstrap SEs and intervals.
    #[arg(long = "boot-rho", env = "OOSR2_BOOT_RHO")]
    pub boot_rho: Option<usize>,
    /// Estimator of ρ: jackknife, npboot or pboot.
    #[arg(long, env = "OOSR2_RHO")]
    pub rho: Option<RhoMethod>,
    /// Standard error: delta or bootstrap.
    #[arg(long, env = "OOSR2_SE")]
    pub se: Option<SeMethod>,
    /// Interval: normal, percentile or bca.
    #[arg(long, env = "OOSR2_CI")]
    pub ci: Option<CiMethod>,
    #[arg(long, env = "OOSR2_ALPHA")]
    pub alpha: Option<f64>,
    #[arg(long, env = "OOSR2_SEED")]
    pub seed: Option<u64>,
    /// Nested CV for the MSE variance (true/false).
    #[arg(long, env = "OOSR2_NESTED")]
    pub nested: Option<bool>,
    /// Elastic-net mixing parameter.
    #[arg(long = "en-mixing", env = "OOSR2_EN_MIXING")]
    pub en_mixing: Option<f64>,
    /// Field delimiter of the CSV input.
    #[arg(long, env = "OOSR2_DELIMITER")]
    pub delimiter: Option<char>,
    /// Flat `key = value` settings file.
    #[arg(long, env = "OOSR2_CONFIG")]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    pub input: PathBuf,
    /// Outcome column, by header name or 0-based index.
    #[arg(long, env = "OOSR2_OUTCOME")]
    pub outcome: Option<String>,
    #[arg(long, value_enum, env = "OOSR2_FORMAT")]
    pub format: Option<Format>,
    #[command(flatten)]
    pub est: EstimationArgs,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// Two outcomes of one CSV file; the other columns are the predictors.
    #[arg(long, value_name = "CSV", conflicts_with = "across", required_unless_present = "across")]
    pub within: Option<PathBuf>,
    /// Two JSON reports written by `analyze --format json`.
    #[arg(long, num_args = 2, value_names = ["REPORT_A", "REPORT_B"])]
    pub across: Option<Vec<PathBuf>>,
    #[arg(long, requires = "within")]
    pub outcome: Option<String>,
    #[arg(long = "outcome-b", requires = "within")]
    pub outcome_b: Option<String>,
    #[arg(long, value_enum, env = "OOSR2_FORMAT")]
    pub format: Option<Format>,
    #[command(flatten)]
    pub est: EstimationArgs,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    pub scenarios: PathBuf,
    /// Diagnostics CSV (default: standard output).
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// JSON manifest of the resolved scenarios and oracle values.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

/// Settings after merging defaults, config file and flags.
#[derive(Clone, Debug, PartialEq)]
pub struct Resolved {
    pub run: RunConfig,
    pub spec: PredictorSpec,
    pub delimiter: u8,
    pub outcome: Option<String>,
    pub format: Format,
}

fn config_error(line: usize, key: &str, msg: impl std::fmt::Display) -> Error {
    Error::Ingest {
        row: line,
        column: key.to_string(),
        message: msg.to_string(),
    }
}

/// Parses a flat `key = value` file; `#` starts a comment.
pub fn parse_config_file(text: &str) -> crate::Result<BTreeMap<String, (usize, String)>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| config_error(i + 1, line, "expected key = value"))?;
        out.insert(k.trim().to_ascii_lowercase().replace('-', "_"), (i + 1, v.trim().to_string()));
    }
    Ok(out)
}

fn parse_field<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> crate::Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| config_error(line, key, format!("invalid value {v:?}: {e}")))
}

fn delimiter_byte(c: char) -> crate::Result<u8> {
    if c.is_ascii() {
        Ok(c as u8)
    } else {
        Err(Error::Config(format!("delimiter {c:?} is not a single ASCII character")))
    }
}

/// Merges defaults, the optional config file and the flags.
pub fn resolve(
    est: &EstimationArgs,
    outcome: Option<&str>,
    format: Option<Format>,
) -> anyhow::Result<Resolved> {
    let mut r = Resolved {
        run: RunConfig::default(),
        spec: PredictorSpec::ols(),
        delimiter: b',',
        outcome: None,
        format: Format::Json,
    };
    if let Some(path) = &est.config {
        let text = std::fs::read_to_string(path)
            .map_err(Error::from)
            .with_context(|| format!("reading {}", path.display()))?;
        for (key, (line, v)) in parse_config_file(&text)? {
            let (l, k, v) = (line, key.as_str(), v.as_str());
            match k {
                "model" => r.spec.kind = parse_field(l, k, v)?,
                "en_mixing" => r.spec.en_mixing = parse_field(l, k, v)?,
                "mse_method" => r.run.mse_method = parse_field(l, k, v)?,
                "folds" => r.run.cv_folds = parse_field(l, k, v)?,
                "repeats" => r.run.cv_repeats = parse_field(l, k, v)?,
                "boot" => r.run.n_boot_mse = parse_field(l, k, v)?,
                "boot_rho" => r.run.n_boot_rho = parse_field(l, k, v)?,
                "rho" => r.run.rho_method = parse_field(l, k, v)?,
                "se" => r.run.se_method = parse_field(l, k, v)?,
                "ci" => r.run.ci_method = parse_field(l, k, v)?,
                "alpha" => r.run.alpha = parse_field(l, k, v)?,
                "seed" => r.run.seed = parse_field(l, k, v)?,
                "nested" => r.run.nested_cv = parse_field(l, k, v)?,
                "delimiter" => {
                    r.delimiter = delimiter_byte(parse_field(l, k, v)?).map_err(|e| config_error(l, k, e))?
                }
                "outcome" => r.outcome = Some(v.to_string()),
                "format" => {
                    r.format = Format::from_str(v, true).map_err(|e| config_error(l, k, e))?
                }
                other => return Err(config_error(l, other, "unknown key").into()),
            }
        }
    }
    macro_rules! set {
        ($flag:expr, $target:expr) => {
            if let Some(v) = $flag.clone() {
                $target = v;
            }
        };
    }
    set!(est.model, r.spec.kind);
    set!(est.en_mixing, r.spec.en_mixing);
    set!(est.mse_method, r.run.mse_method);
    set!(est.folds, r.run.cv_folds);
    set!(est.repeats, r.run.cv_repeats);
    set!(est.boot, r.run.n_boot_mse);
    set!(est.boot_rho, r.run.n_boot_rho);
    set!(est.rho, r.run.rho_method);
    set!(est.se, r.run.se_method);
    set!(est.ci, r.run.ci_method);
    set!(est.alpha, r.run.alpha);
    set!(est.seed, r.run.seed);
    set!(est.nested, r.run.nested_cv);
    if let Some(c) = est.delimiter {
        r.delimiter = delimiter_byte(c)?;
    }
    if let Some(o) = outcome {
        r.outcome = Some(o.to_string());
    }
    set!(format, r.format);
    r.run.validate()?;
    r.spec.validate()?;
    Ok(r)
}

/// Scientific notation with a two-digit exponent, e.g. `8.06e-25`.
pub fn format_p(p: f64) -> String {
    if p == 0.0 {
        return "0.00e+00".into();
    }
    let s = format!("{p:.2e}");
    match s.split_once('e') {
        Some((m, e)) => {
            let exp: i32 = e.parse().unwrap_or(0);
            format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
        }
        None => s,
    }
}

#[derive(Serialize)]
struct ReportRow<'a> {
    n: usize,
    p: usize,
    model: String,
    estimator: &'a str,
    r2: f64,
    se: f64,
    se_method: String,
    rho_method: String,
    rho_hat: f64,
    rho_degenerate: bool,
    mse: f64,
    mse_variance: f64,
    mse_raw: f64,
    mst: f64,
    mst_variance: f64,
    ci_method: String,
    ci_lower: f64,
    ci_upper: f64,
    alpha: f64,
    z: Option<f64>,
    p_one_sided: f64,
    seed: u64,
}

fn report_row(r: &R2Report) -> ReportRow<'_> {
    ReportRow {
        n: r.n,
        p: r.p,
        model: r.model.kind.to_string(),
        estimator: "pooling",
        r2: r.r2,
        se: r.se,
        se_method: r.se_method.to_string(),
        rho_method: r.rho_method.to_string(),
        rho_hat: r.rho_hat,
        rho_degenerate: r.rho_degenerate,
        mse: r.mse.point,
        mse_variance: r.mse.variance,
        mse_raw: r.mse.raw_point,
        mst: r.mst.point,
        mst_variance: r.mst.variance,
        ci_method: r.ci.method.to_string(),
        ci_lower: r.ci.lower,
        ci_upper: r.ci.upper,
        alpha: r.ci.alpha,
        z: r.z,
        p_one_sided: r.p_one_sided,
        seed: r.config.seed,
    }
}

fn write_report(out: &mut dyn Write, label: &str, r: &R2Report, format: Format) -> anyhow::Result<()> {
    match format {
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(r)?)?,
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut *out);
            w.serialize(report_row(r))?;
            w.flush()?;
        }
        Format::Table => {
            writeln!(
                out,
                "{:<16} {:>5} {:>7} {:>6} {:>16} {:>10}",
                "outcome", "n", "R2", "SE", "CI", "p"
            )?;
            writeln!(out, "{}", table_line(label, r))?;
        }
    }
    Ok(())
}

fn table_line(label: &str, r: &R2Report) -> String {
    format!(
        "{:<16} {:>5} {:>7.2} {:>6.2} {:>16} {:>10}",
        label,
        r.n,
        r.r2,
        r.se,
        format!("({:.2}, {:.2})", r.ci.lower, r.ci.upper),
        format_p(r.p_one_sided)
    )
}

fn load_table(path: &Path, delimiter: u8) -> anyhow::Result<CsvTable> {
    CsvTable::read(path, delimiter).with_context(|| format!("reading {}", path.display()))
}

fn outcome_column(r: &Resolved) -> anyhow::Result<OutcomeColumn> {
    let name = r
        .outcome
        .as_deref()
        .ok_or_else(|| Error::Config("--outcome is required".into()))?;
    Ok(name.parse().expect("infallible"))
}

fn cmd_analyze(a: &AnalyzeArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let r = resolve(&a.est, a.outcome.as_deref(), a.format)?;
    let outcome = outcome_column(&r)?;
    let table = load_table(&a.input, r.delimiter)?;
    let d = table.dataset(&outcome, &[])?;
    let report = analyze(&d, &r.spec, &r.run)?;
    write_report(out, &outcome.to_string(), &report, r.format)
}

fn read_report(path: &Path) -> anyhow::Result<R2Report> {
    let text = std::fs::read_to_string(path)
        .map_err(Error::from)
        .with_context(|| format!("reading {}", path.display()))?;
    let report: R2Report = serde_json::from_str(&text)
        .map_err(|e| Error::Input(format!("{}: not an analysis report: {e}", path.display())))?;
    Ok(report)
}

#[derive(Serialize)]
struct AcrossOutput {
    r2_a: f64,
    se_a: f64,
    r2_b: f64,
    se_b: f64,
    #[serde(flatten)]
    comparison: Comparison,
}

fn comparison_cell(c: &Comparison) -> String {
    format!("{:.2} ({})", c.z, format_p(c.p_two_sided))
}

fn cmd_compare(a: &CompareArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let r = resolve(&a.est, a.outcome.as_deref(), a.format)?;
    if let Some(paths) = &a.across {
        let ra = read_report(&paths[0])?;
        let rb = read_report(&paths[1])?;
        let c = compare_r2_across(&ra, &rb)?;
        let o = AcrossOutput {
            r2_a: ra.r2,
            se_a: ra.se,
            r2_b: rb.r2,
            se_b: rb.se,
            comparison: c,
        };
        match r.format {
            Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&o)?)?,
            Format::Csv => {
                let mut w = csv::Writer::from_writer(&mut *out);
                w.serialize(&o)?;
                w.flush()?;
            }
            Format::Table => writeln!(out, "{}", comparison_cell(&c))?,
        }
        return Ok(());
    }
    let path = a.within.as_ref().ok_or_else(|| anyhow!(Error::Config("choose --within or --across".into())))?;
    let oa = outcome_column(&r)?;
    let ob: OutcomeColumn = a
        .outcome_b
        .as_deref()
        .ok_or_else(|| Error::Config("--outcome-b is required with --within".into()))?
        .parse()
        .expect("infallible");
    let table = load_table(path, r.delimiter)?;
    let ib = table.column_index(&ob)?;
    let ia = table.column_index(&oa)?;
    // an outcome compared with itself stays out of the predictors once
    let exclude = if ia == ib { vec![] } else { vec![ib] };
    let d = table.dataset(&oa, &exclude)?;
    let y_b = table.columns[ib].clone();
    let w = compare_r2_within(&d, &y_b, &r.spec, &r.run)?;
    match r.format {
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&w)?)?,
        Format::Csv => {
            #[derive(Serialize)]
            struct Row {
                r2_a: f64,
                se_a: f64,
                r2_b: f64,
                se_b: f64,
                corr_hat: f64,
                difference: f64,
                z: f64,
                p_two_sided: f64,
            }
            let mut wr = csv::Writer::from_writer(&mut *out);
            wr.serialize(Row {
                r2_a: w.report_a.r2,
                se_a: w.report_a.se,
                r2_b: w.report_b.r2,
                se_b: w.report_b.se,
                corr_hat: w.corr_hat,
                difference: w.comparison.difference,
                z: w.comparison.z,
                p_two_sided: w.comparison.p_two_sided,
            })?;
            wr.flush()?;
        }
        Format::Table => {
            writeln!(
                out,
                "{:<16} {:>5} {:>7} {:>6} {:>16} {:>10}",
                "outcome", "n", "R2", "SE", "CI", "p"
            )?;
            writeln!(out, "{}", table_line(&oa.to_string(), &w.report_a))?;
            writeln!(out, "{}", table_line(&ob.to_string(), &w.report_b))?;
            writeln!(out, "difference z (p): {}", comparison_cell(&w.comparison))?;
        }
    }
    Ok(())
}

fn cmd_simulate(a: &SimulateArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(&a.scenarios)
        .map_err(Error::from)
        .with_context(|| format!("reading {}", a.scenarios.display()))?;
    let scenarios = parse_scenarios(&text).with_context(|| format!("in {}", a.scenarios.display()))?;
    let mut diagnostics = Vec::new();
    let mut oracles = Vec::new();
    for sc in &scenarios {
        eprintln!("scenario {}: seed {}, {} instances", sc.name, sc.run.seed, sc.n_mc);
        let rep = run_scenario(sc, None)?;
        oracles.push(rep.oracle);
        diagnostics.extend(rep.diagnostics);
    }
    match &a.output {
        Some(path) => {
            let f = std::fs::File::create(path).map_err(Error::from)?;
            write_diagnostics_csv(&diagnostics, f)?;
        }
        None => write_diagnostics_csv(&diagnostics, &mut *out)?,
    }
    if let Some(path) = &a.manifest {
        let m = Manifest { scenarios, oracles };
        std::fs::write(path, serde_json::to_string_pretty(&m)? + "\n").map_err(Error::from)?;
    }
    Ok(())
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> anyhow::Result<()> {
    match &cli.command {
        Command::Analyze(a) => cmd_analyze(a, out),
        Command::Compare(a) => cmd_compare(a, out),
        Command::Simulate(a) => cmd_simulate(a, out),
    }
}

/// Parses `args` and runs the command, writing results to `out`.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> anyhow::Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    match cli.threads {
        Some(0) => Err(Error::Config("--threads must be at least 1".into()).into()),
        Some(t) => {
            let mut buf = Vec::new();
            let result = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()?
                .install(|| dispatch(&cli, &mut buf));
            out.write_all(&buf)?;
            result
        }
        None => dispatch(&cli, out),
    }
}

/// Exit status for an error returned by [`run`]: 2 for usage and input
/// problems, 3 for numerical failures.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if let Some(e) = err.downcast_ref::<Error>() {
        return e.exit_code();
    }
    if let Some(e) = err.downcast_ref::<clap::Error>() {
        return e.exit_code();
    }
    2
}
