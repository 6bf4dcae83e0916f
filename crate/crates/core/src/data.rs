//! Numeric containers, CSV ingestion and run configuration.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Outcome vector plus an index-aligned predictor matrix.
///
/// Datasets built through [`Dataset::new`] have at least three rows and only
/// finite entries. Subsets produced internally during resampling may be
/// smaller; they are never handed back to callers.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    y: Vec<f64>,
    x: DMatrix<f64>,
    feature_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(y: Vec<f64>, x: DMatrix<f64>, feature_names: Option<Vec<String>>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::Dimension(format!(
                "outcome has {} entries but predictor matrix has {} rows",
                y.len(),
                x.nrows()
            )));
        }
        if let Some(names) = &feature_names {
            if names.len() != x.ncols() {
                return Err(Error::Dimension(format!(
                    "{} feature names for {} predictor columns",
                    names.len(),
                    x.ncols()
                )));
            }
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("non-finite outcome at row {}", i + 1)));
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            let (r, c) = (i % x.nrows(), i / x.nrows());
            return Err(Error::Input(format!(
                "non-finite predictor at row {}, column {}",
                r + 1,
                c + 1
            )));
        }
        if y.len() < 3 {
            return Err(Error::TooSmall(y.len()));
        }
        Ok(Dataset {
            y,
            x,
            feature_names,
        })
    }

    /// Builds a dataset from row-major predictor rows.
    pub fn from_rows(y: Vec<f64>, rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::Dimension("ragged predictor rows".into()));
        }
        let x = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
        Dataset::new(y, x, None)
    }

    pub(crate) fn from_parts_unchecked(y: Vec<f64>, x: DMatrix<f64>) -> Self {
        debug_assert_eq!(y.len(), x.nrows());
        Dataset {
            y,
            x,
            feature_names: None,
        }
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    /// Rows selected by index; repeated indices produce repeated rows.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            y: rows.iter().map(|&i| self.y[i]).collect(),
            x: self.x.select_rows(rows.iter()),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Same predictors, new outcome.
    pub fn with_outcome(&self, y: Vec<f64>) -> Result<Dataset> {
        if y.len() != self.n() {
            return Err(Error::Dimension(format!(
                "replacement outcome has {} entries, expected {}",
                y.len(),
                self.n()
            )));
        }
        Ok(Dataset {
            y,
            x: self.x.clone(),
            feature_names: self.feature_names.clone(),
        })
    }
}

/// Per-column affine map recorded by [`center_scale`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transform {
    pub means: Vec<f64>,
    /// Divisor applied after centering; 1.0 for unscaled or zero-variance columns.
    pub scales: Vec<f64>,
    pub zero_variance: Vec<bool>,
}

impl Transform {
    pub fn identity(p: usize) -> Self {
        Transform {
            means: vec![0.0; p],
            scales: vec![1.0; p],
            zero_variance: vec![false; p],
        }
    }

    /// Learns column means (and sample standard deviations when `scale` is set).
    pub fn fit(x: &DMatrix<f64>, scale: bool) -> Self {
        let (n, p) = x.shape();
        let mut means = Vec::with_capacity(p);
        let mut scales = Vec::with_capacity(p);
        let mut zero_variance = Vec::with_capacity(p);
        for j in 0..p {
            let col = x.column(j);
            let m = col.iter().sum::<f64>() / n as f64;
            let ss: f64 = col.iter().map(|v| (v - m) * (v - m)).sum();
            let sd = if n > 1 { (ss / (n - 1) as f64).sqrt() } else { 0.0 };
            let degenerate = sd <= 1e-12 * (1.0 + m.abs());
            means.push(m);
            zero_variance.push(degenerate);
            scales.push(if scale && !degenerate { sd } else { 1.0 });
        }
        Transform {
            means,
            scales,
            zero_variance,
        }
    }

    pub fn p(&self) -> usize {
        self.means.len()
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.p() {
            return Err(Error::Dimension(format!(
                "expected {} predictor columns, got {}",
                self.p(),
                x.ncols()
            )));
        }
        let mut out = x.clone();
        for j in 0..self.p() {
            let (m, s, z) = (self.means[j], self.scales[j], self.zero_variance[j]);
            for v in out.column_mut(j).iter_mut() {
                *v = if z { 0.0 } else { (*v - m) / s };
            }
        }
        Ok(out)
    }
}

/// Mean-centers every predictor column and optionally scales it to unit
/// sample standard deviation. Zero-variance columns become all zeros and
/// are flagged, never scaled. The outcome is left untouched.
pub fn center_scale(d: &Dataset, scale_predictors: bool) -> (Dataset, Transform) {
    let t = Transform::fit(d.x(), scale_predictors);
    let x = t.apply(d.x()).expect("transform fitted on the same matrix");
    let out = Dataset {
        y: d.y.clone(),
        x,
        feature_names: d.feature_names.clone(),
    };
    (out, t)
}

/// Which CSV column holds the outcome.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OutcomeColumn {
    Name(String),
    Index(usize),
}

impl FromStr for OutcomeColumn {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => OutcomeColumn::Index(i),
            Err(_) => OutcomeColumn::Name(s.to_string()),
        })
    }
}

impl fmt::Display for OutcomeColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OutcomeColumn::Name(s) => write!(f, "{s}"),
            OutcomeColumn::Index(i) => write!(f, "{i}"),
        }
    }
}

/// Fully numeric CSV contents, column-wise.
#[derive(Clone, Debug)]
pub struct CsvTable {
    pub names: Vec<String>,
    pub has_header: bool,
    pub columns: Vec<Vec<f64>>,
}

impl CsvTable {
    /// Reads a numeric CSV. A first record containing any non-numeric cell
    /// is treated as the header; otherwise columns are named by position.
    pub fn read(path: impl AsRef<Path>, delimiter: u8) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())?;
        Self::from_reader(file, delimiter)
    }

    pub fn from_reader<R: std::io::Read>(reader: R, delimiter: u8) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .delimiter(delimiter)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut records = rdr.records();
        let first = match records.next() {
            Some(r) => r.map_err(|e| Error::Input(format!("malformed CSV: {e}")))?,
            None => return Err(Error::TooSmall(0)),
        };
        let has_header = first.iter().any(|c| c.parse::<f64>().is_err());
        let width = first.len();
        let names: Vec<String> = if has_header {
            first.iter().map(str::to_string).collect()
        } else {
            (0..width).map(|j| j.to_string()).collect()
        };
        let mut columns = vec![Vec::new(); width];
        let mut push_record = |rec: &csv::StringRecord, line: usize| -> Result<()> {
            if rec.len() != width {
                return Err(Error::Ingest {
                    row: line,
                    column: "-".into(),
                    message: format!("expected {width} fields, found {}", rec.len()),
                });
            }
            for (j, cell) in rec.iter().enumerate() {
                let v: f64 = cell.parse().map_err(|_| Error::Ingest {
                    row: line,
                    column: names[j].clone(),
                    message: format!("non-numeric value {cell:?}"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Ingest {
                        row: line,
                        column: names[j].clone(),
                        message: format!("non-finite value {cell:?}"),
                    });
                }
                columns[j].push(v);
            }
            Ok(())
        };
        if !has_header {
            push_record(&first, 1)?;
        }
        for (i, rec) in records.enumerate() {
            let rec = rec.map_err(|e| Error::Input(format!("malformed CSV: {e}")))?;
            push_record(&rec, i + 2)?;
        }
        Ok(CsvTable {
            names,
            has_header,
            columns,
        })
    }

    pub fn nrows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn column_index(&self, col: &OutcomeColumn) -> Result<usize> {
        match col {
            OutcomeColumn::Index(i) if *i < self.names.len() => Ok(*i),
            OutcomeColumn::Index(i) => {
                // a header may itself be numeric-looking; fall back to name lookup
                self.names
                    .iter()
                    .position(|n| n == &i.to_string())
                    .ok_or_else(|| Error::Input(format!("outcome column index {i} out of range")))
            }
            OutcomeColumn::Name(name) => self
                .names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::Input(format!("outcome column {name:?} not found"))),
        }
    }

    /// Dataset with `outcome` as y and every column not listed in
    /// `exclude` (nor the outcome itself) as predictors, in file order.
    pub fn dataset(&self, outcome: &OutcomeColumn, exclude: &[usize]) -> Result<Dataset> {
        let oi = self.column_index(outcome)?;
        let keep: Vec<usize> = (0..self.names.len())
            .filter(|j| *j != oi && !exclude.contains(j))
            .collect();
        let n = self.nrows();
        let x = DMatrix::from_fn(n, keep.len(), |i, j| self.columns[keep[j]][i]);
        let names = keep.iter().map(|&j| self.names[j].clone()).collect();
        Dataset::new(self.columns[oi].clone(), x, Some(names))
    }
}

/// Reads `path` and splits off the outcome column; all remaining columns
/// become predictors in file order.
pub fn load_csv(path: impl AsRef<Path>, outcome: &OutcomeColumn, delimiter: u8) -> Result<Dataset> {
    CsvTable::read(path, delimiter)?.dataset(outcome, &[])
}

/// Writes the outcome as the first column followed by the predictors, with
/// 17 significant digits so that [`load_csv`] recovers every value exactly.
pub fn write_csv(d: &Dataset, path: impl AsRef<Path>, outcome_name: &str) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut header = vec![outcome_name.to_string()];
    match d.feature_names() {
        Some(names) => header.extend(names.iter().cloned()),
        None => header.extend((0..d.p()).map(|j| format!("x{}", j + 1))),
    }
    writeln!(out, "{}", header.join(","))?;
    for i in 0..d.n() {
        let mut line = format!("{:.16e}", d.y()[i]);
        for j in 0..d.p() {
            line.push_str(&format!(",{:.16e}", d.x()[(i, j)]));
        }
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

macro_rules! string_enum {
    ($name:ident { $($variant:ident => [$($s:literal),+]),+ $(,)? }) => {
        impl FromStr for $name {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($($s)|+ => Ok($name::$variant),)+
                    other => Err(Error::Config(format!(
                        concat!("unknown ", stringify!($name), " {:?}"), other
                    ))),
                }
            }
        }
        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                let s = match self { $($name::$variant => [$($s),+][0],)+ };
                f.write_str(s)
            }
        }
    };
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MseMethod {
    Cv,
    Boot632,
}
string_enum!(MseMethod { Cv => ["cv"], Boot632 => ["boot632", ".632"] });

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhoMethod {
    NonparamBoot,
    ParamBoot,
    Jackknife,
}
string_enum!(RhoMethod {
    NonparamBoot => ["npboot", "nonparam_boot"],
    ParamBoot => ["pboot", "param_boot"],
    Jackknife => ["jackknife"],
});

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeMethod {
    Delta,
    Bootstrap,
}
string_enum!(SeMethod { Delta => ["delta"], Bootstrap => ["bootstrap"] });

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    Normal,
    Percentile,
    Bca,
}
string_enum!(CiMethod { Normal => ["normal"], Percentile => ["percentile"], Bca => ["bca"] });

/// Settings for one estimation run. Defaults follow the case-study setup:
/// 10-fold CV repeated 100 times, delta-method SE with jackknife ρ, α = 0.05.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub mse_method: MseMethod,
    pub cv_folds: usize,
    pub cv_repeats: usize,
    /// Inner bootstrap draws for the .632 estimator.
    pub n_boot_mse: usize,
    pub rho_method: RhoMethod,
    /// Outer bootstrap draws for ρ and bootstrap SE/intervals.
    pub n_boot_rho: usize,
    pub se_method: SeMethod,
    pub ci_method: CiMethod,
    pub alpha: f64,
    /// Nested CV for Var(MSE) and the training-size correction.
    pub nested_cv: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            mse_method: MseMethod::Cv,
            cv_folds: 10,
            cv_repeats: 100,
            n_boot_mse: 100,
            rho_method: RhoMethod::Jackknife,
            n_boot_rho: 50,
            se_method: SeMethod::Delta,
            ci_method: CiMethod::Normal,
            alpha: 0.05,
            nested_cv: true,
        }
    }
}

impl RunConfig {
    /// Checks settings that do not depend on the data.
    pub fn validate(&self) -> Result<()> {
        if self.cv_folds < 2 {
            return Err(Error::Config("folds must be at least 2".into()));
        }
        if self.nested_cv && self.mse_method == MseMethod::Cv && self.cv_folds < 3 {
            return Err(Error::Config("nested CV needs at least 3 folds".into()));
        }
        if self.cv_repeats < 1 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        if self.n_boot_mse < 1 {
            return Err(Error::Config("inner bootstrap count must be at least 1".into()));
        }
        if self.n_boot_rho < 2 {
            return Err(Error::Config("outer bootstrap count must be at least 2".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        Ok(())
    }

    /// Checks settings against a dataset of `n` rows.
    pub fn validate_for(&self, n: usize) -> Result<()> {
        self.validate()?;
        if self.mse_method == MseMethod::Cv && self.cv_folds > n {
            return Err(Error::Config(format!(
                "{} folds requested for {} samples",
                self.cv_folds, n
            )));
        }
        Ok(())
    }
}
