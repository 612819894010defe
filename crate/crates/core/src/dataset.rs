//! Year-indexed series and proxy tables: CSV ingest, window alignment,
//! standardization, and synthetic worlds with known ground truth.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{ReconError, Result};
use crate::nullmodels::ar1_path;
use crate::rng::substream;

/// Inclusive range of calendar years.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AnalysisWindow {
    pub first_year: i32,
    pub last_year: i32,
}

impl AnalysisWindow {
    pub fn new(first_year: i32, last_year: i32) -> Result<Self> {
        if first_year > last_year {
            return Err(ReconError::InvalidWindow {
                first: first_year,
                last: last_year,
            });
        }
        Ok(Self {
            first_year,
            last_year,
        })
    }

    pub fn len(&self) -> usize {
        (self.last_year - self.first_year + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, year: i32) -> bool {
        year >= self.first_year && year <= self.last_year
    }

    pub fn contains_window(&self, other: &AnalysisWindow) -> bool {
        self.contains(other.first_year) && self.contains(other.last_year)
    }

    pub fn years(&self) -> impl Iterator<Item = i32> {
        self.first_year..=self.last_year
    }

    /// Parses `first-last` or `first:last`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || ReconError::InvalidArgument(format!("cannot parse window {s:?}"));
        let sep = s[1..].find(['-', ':']).map(|i| i + 1).ok_or_else(bad)?;
        let first = s[..sep].trim().parse().map_err(|_| bad())?;
        let last = s[sep + 1..].trim().parse().map_err(|_| bad())?;
        Self::new(first, last)
    }
}

impl fmt::Display for AnalysisWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.first_year, self.last_year)
    }
}

/// Annual series with explicit missing cells.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    start_year: i32,
    values: Vec<Option<f64>>,
}

impl TimeSeries {
    pub fn new(start_year: i32, values: Vec<Option<f64>>) -> Result<Self> {
        if values.is_empty() {
            return Err(ReconError::InvalidArgument("empty time series".into()));
        }
        Ok(Self { start_year, values })
    }

    pub fn from_values(start_year: i32, values: Vec<f64>) -> Result<Self> {
        Self::new(start_year, values.into_iter().map(Some).collect())
    }

    pub fn start_year(&self) -> i32 {
        self.start_year
    }

    pub fn end_year(&self) -> i32 {
        self.start_year + self.values.len() as i32 - 1
    }

    pub fn span(&self) -> AnalysisWindow {
        AnalysisWindow {
            first_year: self.start_year,
            last_year: self.end_year(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn get(&self, year: i32) -> Option<f64> {
        let idx = year.checked_sub(self.start_year)?;
        if idx < 0 {
            return None;
        }
        self.values.get(idx as usize).copied().flatten()
    }

    pub fn has_missing(&self) -> bool {
        self.values.iter().any(Option::is_none)
    }

    /// Sub-series restricted to `window`.
    pub fn window(&self, window: &AnalysisWindow) -> Result<TimeSeries> {
        check_window(window, &self.span())?;
        let lo = (window.first_year - self.start_year) as usize;
        Ok(TimeSeries {
            start_year: window.first_year,
            values: self.values[lo..lo + window.len()].to_vec(),
        })
    }

    /// Values over `window`, failing on any missing cell.
    pub fn complete_values(&self, window: &AnalysisWindow) -> Result<Vec<f64>> {
        check_window(window, &self.span())?;
        window
            .years()
            .map(|year| {
                self.get(year).ok_or(ReconError::MissingValues {
                    count: 1,
                    column: "series".into(),
                    year,
                })
            })
            .collect()
    }

    /// All values, failing on any missing cell.
    pub fn dense(&self) -> Result<Vec<f64>> {
        self.complete_values(&self.span())
    }
}

fn check_window(window: &AnalysisWindow, span: &AnalysisWindow) -> Result<()> {
    if span.contains_window(window) {
        Ok(())
    } else {
        Err(ReconError::WindowOutOfRange {
            first: window.first_year,
            last: window.last_year,
            span_first: span.first_year,
            span_last: span.last_year,
        })
    }
}

/// Location and scale applied to a column, with the window they came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: f64,
    pub sd: f64,
    pub window: AnalysisWindow,
}

/// Years × series table sharing one annual index.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxyMatrix {
    start_year: i32,
    n_years: usize,
    names: Vec<String>,
    columns: Vec<Vec<Option<f64>>>,
    standardization: Option<Vec<Standardization>>,
}

impl ProxyMatrix {
    pub fn new(start_year: i32, names: Vec<String>, columns: Vec<Vec<Option<f64>>>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(ReconError::Shape(format!(
                "{} names for {} columns",
                names.len(),
                columns.len()
            )));
        }
        let n_years = columns.first().map_or(0, Vec::len);
        if n_years == 0 {
            return Err(ReconError::Shape("proxy matrix with no years".into()));
        }
        if let Some((name, col)) = names.iter().zip(&columns).find(|(_, c)| c.len() != n_years) {
            return Err(ReconError::Shape(format!(
                "column {name} has {} years, expected {n_years}",
                col.len()
            )));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = names.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(ReconError::Shape(format!("duplicate column name {dup}")));
        }
        Ok(Self {
            start_year,
            n_years,
            names,
            columns,
            standardization: None,
        })
    }

    /// Builds a complete matrix from a dense years × columns array.
    pub fn from_dense(start_year: i32, names: Vec<String>, data: &DMatrix<f64>) -> Result<Self> {
        let columns = (0..data.ncols())
            .map(|j| data.column(j).iter().map(|&v| Some(v)).collect())
            .collect();
        Self::new(start_year, names, columns)
    }

    pub fn from_series(names: Vec<String>, series: Vec<TimeSeries>) -> Result<Self> {
        let first = series
            .first()
            .ok_or_else(|| ReconError::Shape("no series".into()))?;
        let span = first.span();
        if let Some(s) = series.iter().find(|s| s.span() != span) {
            return Err(ReconError::Shape(format!(
                "series span {} differs from {span}",
                s.span()
            )));
        }
        Self::new(
            span.first_year,
            names,
            series.into_iter().map(|s| s.values).collect(),
        )
    }

    pub fn start_year(&self) -> i32 {
        self.start_year
    }

    pub fn end_year(&self) -> i32 {
        self.start_year + self.n_years as i32 - 1
    }

    pub fn span(&self) -> AnalysisWindow {
        AnalysisWindow {
            first_year: self.start_year,
            last_year: self.end_year(),
        }
    }

    pub fn n_years(&self) -> usize {
        self.n_years
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn standardization(&self) -> Option<&[Standardization]> {
        self.standardization.as_deref()
    }

    pub fn column_values(&self, j: usize) -> &[Option<f64>] {
        &self.columns[j]
    }

    pub fn column(&self, j: usize) -> TimeSeries {
        TimeSeries {
            start_year: self.start_year,
            values: self.columns[j].clone(),
        }
    }

    pub fn column_by_name(&self, name: &str) -> Result<TimeSeries> {
        let j = self
            .names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| ReconError::UnknownColumn(name.into()))?;
        Ok(self.column(j))
    }

    pub fn get(&self, year: i32, j: usize) -> Option<f64> {
        let idx = year - self.start_year;
        if idx < 0 || idx as usize >= self.n_years {
            return None;
        }
        self.columns[j][idx as usize]
    }

    /// Restricts every column to `window`.
    pub fn window(&self, window: &AnalysisWindow) -> Result<ProxyMatrix> {
        check_window(window, &self.span())?;
        let lo = (window.first_year - self.start_year) as usize;
        Ok(ProxyMatrix {
            start_year: window.first_year,
            n_years: window.len(),
            names: self.names.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| c[lo..lo + window.len()].to_vec())
                .collect(),
            standardization: self.standardization.clone(),
        })
    }

    fn first_missing(&self, window: &AnalysisWindow) -> Option<(usize, String, i32)> {
        let lo = (window.first_year - self.start_year) as usize;
        let mut count = 0;
        let mut first = None;
        for (name, col) in self.names.iter().zip(&self.columns) {
            for (i, v) in col[lo..lo + window.len()].iter().enumerate() {
                if v.is_none() {
                    count += 1;
                    if first.is_none() {
                        first = Some((name.clone(), window.first_year + i as i32));
                    }
                }
            }
        }
        first.map(|(n, y)| (count, n, y))
    }

    /// Dense years × columns array over `window`; fails on missing cells.
    pub fn dense(&self, window: &AnalysisWindow) -> Result<DMatrix<f64>> {
        check_window(window, &self.span())?;
        if let Some((count, column, year)) = self.first_missing(window) {
            return Err(ReconError::MissingValues {
                count,
                column,
                year,
            });
        }
        let lo = (window.first_year - self.start_year) as usize;
        Ok(DMatrix::from_fn(window.len(), self.n_cols(), |i, j| {
            self.columns[j][lo + i].unwrap()
        }))
    }

    pub fn dense_all(&self) -> Result<DMatrix<f64>> {
        self.dense(&self.span())
    }

    /// Keeps the columns at `keep`, in that order.
    pub fn select(&self, keep: &[usize]) -> ProxyMatrix {
        ProxyMatrix {
            start_year: self.start_year,
            n_years: self.n_years,
            names: keep.iter().map(|&j| self.names[j].clone()).collect(),
            columns: keep.iter().map(|&j| self.columns[j].clone()).collect(),
            standardization: self
                .standardization
                .as_ref()
                .map(|s| keep.iter().map(|&j| s[j]).collect()),
        }
    }
}

/// How `align` treats missing cells inside the window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MissingPolicy {
    RejectMissing,
    DropIncompleteColumns,
}

/// Output of [`align`]: the windowed matrix and any columns removed.
#[derive(Debug, Clone, PartialEq)]
pub struct Aligned {
    pub matrix: ProxyMatrix,
    pub dropped: Vec<String>,
}

/// Restricts `data` to `window` and enforces completeness per `policy`.
pub fn align(data: &ProxyMatrix, window: &AnalysisWindow, policy: MissingPolicy) -> Result<Aligned> {
    let windowed = data.window(window)?;
    match policy {
        MissingPolicy::RejectMissing => {
            if let Some((count, column, year)) = windowed.first_missing(window) {
                return Err(ReconError::MissingValues {
                    count,
                    column,
                    year,
                });
            }
            Ok(Aligned {
                matrix: windowed,
                dropped: Vec::new(),
            })
        }
        MissingPolicy::DropIncompleteColumns => {
            let (keep, drop): (Vec<usize>, Vec<usize>) = (0..windowed.n_cols())
                .partition(|&j| windowed.columns[j].iter().all(Option::is_some));
            Ok(Aligned {
                dropped: drop.iter().map(|&j| windowed.names[j].clone()).collect(),
                matrix: windowed.select(&keep),
            })
        }
    }
}

/// Centers and scales each column using mean and sample sd over `window`,
/// applied to the full column span.
pub fn standardize(data: &ProxyMatrix, window: &AnalysisWindow) -> Result<ProxyMatrix> {
    check_window(window, &data.span())?;
    if let Some((count, column, year)) = data.first_missing(window) {
        return Err(ReconError::MissingValues {
            count,
            column,
            year,
        });
    }
    let lo = (window.first_year - data.start_year) as usize;
    let mut columns = Vec::with_capacity(data.n_cols());
    let mut record = Vec::with_capacity(data.n_cols());
    for (name, col) in data.names.iter().zip(&data.columns) {
        let vals: Vec<f64> = col[lo..lo + window.len()].iter().map(|v| v.unwrap()).collect();
        let (mean, sd) = mean_sd(&vals);
        if !(sd > 0.0) || sd <= 1e-12 * mean.abs().max(1.0) {
            return Err(ReconError::ConstantColumn(name.clone()));
        }
        columns.push(col.iter().map(|v| v.map(|x| (x - mean) / sd)).collect());
        record.push(Standardization {
            mean,
            sd,
            window: *window,
        });
    }
    Ok(ProxyMatrix {
        start_year: data.start_year,
        n_years: data.n_years,
        names: data.names.clone(),
        columns,
        standardization: Some(record),
    })
}

/// Sample mean and sd (n − 1 denominator).
pub(crate) fn mean_sd(vals: &[f64]) -> (f64, f64) {
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    if vals.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = vals.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Removes the named columns, preserving the order of the rest.
pub fn drop_named<S: AsRef<str>>(data: &ProxyMatrix, names: &[S]) -> Result<ProxyMatrix> {
    let mut remove = HashSet::new();
    for name in names {
        let name = name.as_ref();
        let j = data
            .names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| ReconError::UnknownColumn(name.into()))?;
        remove.insert(j);
    }
    let keep: Vec<usize> = (0..data.n_cols()).filter(|j| !remove.contains(j)).collect();
    Ok(data.select(&keep))
}

/// On-disk CSV layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TableFormat {
    /// `year,<name1>,<name2>,...`
    Wide,
    /// `year,name,value`
    Long,
}

impl std::str::FromStr for TableFormat {
    type Err = ReconError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wide" => Ok(TableFormat::Wide),
            "long" => Ok(TableFormat::Long),
            _ => Err(ReconError::InvalidArgument(format!("unknown table format {s:?}"))),
        }
    }
}

fn parse_cell(path: &Path, line: usize, cell: &str) -> Result<Option<f64>> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(None);
    }
    cell.parse::<f64>().map(Some).map_err(|_| ReconError::Parse {
        path: path.into(),
        line,
        msg: format!("bad value {cell:?}"),
    })
}

fn parse_year(path: &Path, line: usize, cell: &str) -> Result<i32> {
    cell.trim().parse::<i32>().map_err(|_| ReconError::Parse {
        path: path.into(),
        line,
        msg: format!("bad year {cell:?}"),
    })
}

/// Reads a CSV table. Years absent from the file inside the covered span
/// become missing cells.
pub fn load_table(path: &Path, format: TableFormat) -> Result<ProxyMatrix> {
    let io_err = |e: &dyn fmt::Display| ReconError::Io {
        path: path.into(),
        msg: e.to_string(),
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| io_err(&e))?;
    let headers = reader.headers().map_err(|e| io_err(&e))?.clone();
    let csv_err = |e: csv::Error| {
        let line = e.position().map_or(0, |p| p.line() as usize);
        ReconError::Parse {
            path: path.into(),
            line,
            msg: e.to_string(),
        }
    };
    match format {
        TableFormat::Wide => {
            if headers.len() < 2 {
                return Err(ReconError::Parse {
                    path: path.into(),
                    line: 1,
                    msg: "wide table needs a year column and at least one series".into(),
                });
            }
            let names: Vec<String> = headers.iter().skip(1).map(|s| s.trim().to_string()).collect();
            let mut rows: Vec<(i32, Vec<Option<f64>>)> = Vec::new();
            for (i, rec) in reader.records().enumerate() {
                let rec = rec.map_err(csv_err)?;
                let line = i + 2;
                let year = parse_year(path, line, &rec[0])?;
                if let Some((prev, _)) = rows.last() {
                    if year == *prev {
                        return Err(ReconError::DuplicateYear { year, column: None });
                    }
                    if year < *prev {
                        if rows.iter().any(|(y, _)| *y == year) {
                            return Err(ReconError::DuplicateYear { year, column: None });
                        }
                        return Err(ReconError::NonMonotoneYears {
                            prev: *prev,
                            next: year,
                        });
                    }
                }
                let vals = rec
                    .iter()
                    .skip(1)
                    .map(|c| parse_cell(path, line, c))
                    .collect::<Result<Vec<_>>>()?;
                rows.push((year, vals));
            }
            let (first, last) = match (rows.first(), rows.last()) {
                (Some(f), Some(l)) => (f.0, l.0),
                _ => {
                    return Err(ReconError::Parse {
                        path: path.into(),
                        line: 2,
                        msg: "no data rows".into(),
                    })
                }
            };
            let n_years = (last - first + 1) as usize;
            let mut columns = vec![vec![None; n_years]; names.len()];
            for (year, vals) in rows {
                let i = (year - first) as usize;
                for (j, v) in vals.into_iter().enumerate() {
                    columns[j][i] = v;
                }
            }
            ProxyMatrix::new(first, names, columns)
        }
        TableFormat::Long => {
            if headers.len() != 3 {
                return Err(ReconError::Parse {
                    path: path.into(),
                    line: 1,
                    msg: "long table must have columns year,name,value".into(),
                });
            }
            let mut order: Vec<String> = Vec::new();
            let mut cells: BTreeMap<String, BTreeMap<i32, Option<f64>>> = BTreeMap::new();
            for (i, rec) in reader.records().enumerate() {
                let rec = rec.map_err(csv_err)?;
                let line = i + 2;
                let year = parse_year(path, line, &rec[0])?;
                let name = rec[1].trim().to_string();
                let value = parse_cell(path, line, &rec[2])?;
                let col = cells.entry(name.clone()).or_insert_with(|| {
                    order.push(name.clone());
                    BTreeMap::new()
                });
                if let Some(&prev) = col.keys().next_back() {
                    if year < prev && !col.contains_key(&year) {
                        return Err(ReconError::NonMonotoneYears { prev, next: year });
                    }
                }
                if col.insert(year, value).is_some() {
                    return Err(ReconError::DuplicateYear {
                        year,
                        column: Some(name),
                    });
                }
            }
            let first = cells.values().filter_map(|c| c.keys().next().copied()).min();
            let last = cells.values().filter_map(|c| c.keys().next_back().copied()).max();
            let (first, last) = match (first, last) {
                (Some(f), Some(l)) => (f, l),
                _ => {
                    return Err(ReconError::Parse {
                        path: path.into(),
                        line: 2,
                        msg: "no data rows".into(),
                    })
                }
            };
            let n_years = (last - first + 1) as usize;
            let columns = order
                .iter()
                .map(|name| {
                    let mut col = vec![None; n_years];
                    for (&year, &v) in &cells[name] {
                        col[(year - first) as usize] = v;
                    }
                    col
                })
                .collect();
            ProxyMatrix::new(first, order, columns)
        }
    }
}

/// Reads a single series: the named column, or the only column.
pub fn load_series(path: &Path, format: TableFormat, column: Option<&str>) -> Result<TimeSeries> {
    let table = load_table(path, format)?;
    match column {
        Some(name) => table.column_by_name(name),
        None if table.n_cols() == 1 => Ok(table.column(0)),
        None => Err(ReconError::Shape(format!(
            "{} has {} columns; name the series to load",
            path.display(),
            table.n_cols()
        ))),
    }
}

fn fmt_cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// Writes a table; finite values round-trip exactly through [`load_table`].
pub fn write_table(path: &Path, data: &ProxyMatrix, format: TableFormat) -> Result<()> {
    let io_err = |e: std::io::Error| ReconError::Io {
        path: path.into(),
        msg: e.to_string(),
    };
    let mut out = std::io::BufWriter::new(File::create(path).map_err(io_err)?);
    let mut buf = String::new();
    match format {
        TableFormat::Wide => {
            buf.push_str("year");
            for name in &data.names {
                buf.push(',');
                buf.push_str(&csv_quote(name));
            }
            buf.push('\n');
            for i in 0..data.n_years {
                buf.push_str(&(data.start_year + i as i32).to_string());
                for col in &data.columns {
                    buf.push(',');
                    buf.push_str(&fmt_cell(col[i]));
                }
                buf.push('\n');
            }
        }
        TableFormat::Long => {
            buf.push_str("year,name,value\n");
            for (name, col) in data.names.iter().zip(&data.columns) {
                for (i, v) in col.iter().enumerate() {
                    buf.push_str(&format!(
                        "{},{},{}\n",
                        data.start_year + i as i32,
                        csv_quote(name),
                        fmt_cell(*v)
                    ));
                }
            }
        }
    }
    out.write_all(buf.as_bytes()).map_err(io_err)?;
    out.flush().map_err(io_err)
}

pub fn write_series(path: &Path, name: &str, series: &TimeSeries) -> Result<()> {
    let m = ProxyMatrix::new(series.start_year, vec![name.into()], vec![series.values.clone()])?;
    write_table(path, &m, TableFormat::Wide)
}

fn csv_quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Parameters for a synthetic reconstruction problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticWorldConfig {
    pub n_years: usize,
    pub n_proxies: usize,
    /// Weight of temperature in each proxy, in [0, 1].
    pub signal: f64,
    pub proxy_ar: f64,
    pub temp_ar: f64,
    pub start_year: i32,
    /// Number of local temperature series; zero for none.
    pub n_local: usize,
    /// Weight of the global temperature in each local series.
    pub local_signal: f64,
    /// Marginal sd of the temperature series.
    pub temp_scale: f64,
}

impl Default for SyntheticWorldConfig {
    fn default() -> Self {
        Self {
            n_years: 149,
            n_proxies: 93,
            signal: 0.3,
            proxy_ar: 0.4,
            temp_ar: 0.6,
            start_year: 1850,
            n_local: 0,
            local_signal: 0.7,
            temp_scale: 1.0,
        }
    }
}

/// Ground truth plus observables generated from a [`SyntheticWorldConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWorld {
    pub temperature: TimeSeries,
    pub proxies: ProxyMatrix,
    pub local: Option<ProxyMatrix>,
}

impl SyntheticWorldConfig {
    pub fn generate(&self, seed: u64) -> Result<SyntheticWorld> {
        if self.n_years < 10 || self.n_proxies < 1 {
            return Err(ReconError::InvalidArgument(
                "synthetic world needs n_years >= 10 and n_proxies >= 1".into(),
            ));
        }
        for (what, v) in [("proxy_ar", self.proxy_ar), ("temp_ar", self.temp_ar)] {
            if !(0.0..1.0).contains(&v) {
                return Err(ReconError::InvalidArgument(format!("{what} must be in [0, 1)")));
            }
        }
        for (what, v) in [("signal", self.signal), ("local_signal", self.local_signal)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(ReconError::InvalidArgument(format!("{what} must be in [0, 1]")));
            }
        }
        let n = self.n_years;
        let temp_unit = unit_ar(&mut substream(seed, &[0]), self.temp_ar, n);
        let span = AnalysisWindow::new(self.start_year, self.start_year + n as i32 - 1)?;

        let mix = |stream: u64, j: usize, weight: f64, ar: f64| -> Vec<Option<f64>> {
            let noise = unit_ar(&mut substream(seed, &[stream, j as u64]), ar, n);
            temp_unit
                .iter()
                .zip(&noise)
                .map(|(t, e)| Some(weight * t + (1.0 - weight) * e))
                .collect()
        };

        let columns = (0..self.n_proxies)
            .map(|j| mix(1, j, self.signal, self.proxy_ar))
            .collect();
        let names = (0..self.n_proxies).map(|j| format!("proxy_{:03}", j + 1)).collect();
        let proxies = standardize(&ProxyMatrix::new(self.start_year, names, columns)?, &span)?;

        let local = if self.n_local > 0 {
            let columns = (0..self.n_local)
                .map(|j| mix(2, j, self.local_signal, self.temp_ar))
                .collect();
            let names = (0..self.n_local).map(|j| format!("local_{:04}", j + 1)).collect();
            Some(standardize(&ProxyMatrix::new(self.start_year, names, columns)?, &span)?)
        } else {
            None
        };

        let temperature = TimeSeries::from_values(
            self.start_year,
            temp_unit.iter().map(|t| t * self.temp_scale).collect(),
        )?;
        Ok(SyntheticWorld {
            temperature,
            proxies,
            local,
        })
    }
}

/// Stationary AR(1) path with unit marginal variance.
fn unit_ar(rng: &mut crate::rng::Rng, phi: f64, n: usize) -> Vec<f64> {
    let scale = (1.0 - phi * phi).sqrt();
    ar1_path(rng, phi, n, true).into_iter().map(|x| x * scale).collect()
}

/// Temperature (AR(`temp_ar`), unit marginal variance) and `n_proxies`
/// standardized proxies mixing it with independent AR(`proxy_ar`) noise.
pub fn gen_synthetic_world(
    n_years: usize,
    n_proxies: usize,
    signal: f64,
    proxy_ar: f64,
    temp_ar: f64,
    seed: u64,
) -> Result<(TimeSeries, ProxyMatrix)> {
    let world = SyntheticWorldConfig {
        n_years,
        n_proxies,
        signal,
        proxy_ar,
        temp_ar,
        ..Default::default()
    }
    .generate(seed)?;
    Ok((world.temperature, world.proxies))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp_csv(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_three_row_series() {
        let f = tmp_csv("year,cru\n2000,0.1\n2001,0.2\n2002,-0.3\n");
        let s = load_series(f.path(), TableFormat::Wide, None).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.start_year(), 2000);
        assert_eq!(s.get(2002), Some(-0.3));
    }

    #[test]
    fn duplicate_year_rejected() {
        let f = tmp_csv("year,a\n2000,1\n2001,2\n2001,3\n");
        assert!(matches!(
            load_table(f.path(), TableFormat::Wide),
            Err(ReconError::DuplicateYear { year: 2001, .. })
        ));
        let f = tmp_csv("year,name,value\n2000,a,1\n2001,a,2\n2001,a,3\n");
        assert!(matches!(
            load_table(f.path(), TableFormat::Long),
            Err(ReconError::DuplicateYear { year: 2001, .. })
        ));
    }

    #[test]
    fn non_monotone_years_rejected() {
        let f = tmp_csv("year,a\n2000,1\n2002,2\n2001,3\n");
        assert!(matches!(
            load_table(f.path(), TableFormat::Wide),
            Err(ReconError::NonMonotoneYears { prev: 2002, next: 2001 })
        ));
    }

    #[test]
    fn malformed_row_is_parse_error() {
        let f = tmp_csv("year,a,b\n2000,1,2\n2001,x,3\n");
        assert!(matches!(
            load_table(f.path(), TableFormat::Wide),
            Err(ReconError::Parse { line: 3, .. })
        ));
        let f = tmp_csv("year,a,b\n2000,1,2\n2001,3\n");
        assert!(matches!(load_table(f.path(), TableFormat::Wide), Err(ReconError::Parse { .. })));
    }

    #[test]
    fn empty_cells_and_gaps_are_missing() {
        let f = tmp_csv("year,a,b\n2000,1,\n2002,,4\n");
        let m = load_table(f.path(), TableFormat::Wide).unwrap();
        assert_eq!(m.n_years(), 3);
        assert_eq!(m.get(2000, 0), Some(1.0));
        assert_eq!(m.get(2000, 1), None);
        assert_eq!(m.get(2001, 0), None);
        assert_eq!(m.get(2002, 1), Some(4.0));
    }

    #[test]
    fn long_format_pivots() {
        let f = tmp_csv("year,name,value\n2000,b,\n2000,a,1\n2001,b,5\n2001,a,2\n");
        let m = load_table(f.path(), TableFormat::Long).unwrap();
        assert_eq!(m.names(), &["b".to_string(), "a".to_string()]);
        assert_eq!(m.get(2000, 0), None);
        assert_eq!(m.get(2001, 0), Some(5.0));
        assert_eq!(m.get(2000, 1), Some(1.0));
    }

    fn sample_matrix() -> ProxyMatrix {
        ProxyMatrix::new(
            1848,
            vec!["full".into(), "late".into(), "gappy".into()],
            vec![
                vec![Some(1.0), Some(2.0), Some(4.0), Some(3.0), Some(5.0)],
                vec![None, None, Some(1.0), Some(0.0), Some(2.0)],
                vec![Some(1.0), Some(1.0), Some(3.0), None, Some(2.0)],
            ],
        )
        .unwrap()
    }

    #[test]
    fn align_drops_incomplete_columns() {
        let m = sample_matrix();
        let w = AnalysisWindow::new(1850, 1852).unwrap();
        let out = align(&m, &w, MissingPolicy::DropIncompleteColumns).unwrap();
        assert_eq!(out.matrix.names(), &["full".to_string(), "late".to_string()]);
        assert_eq!(out.dropped, vec!["gappy".to_string()]);
        assert_eq!(out.matrix.n_years(), 3);
        assert!(align(&m, &w, MissingPolicy::RejectMissing).is_err());
    }

    #[test]
    fn align_window_out_of_range() {
        let m = sample_matrix();
        let w = AnalysisWindow::new(1800, 1852).unwrap();
        assert!(matches!(
            align(&m, &w, MissingPolicy::DropIncompleteColumns),
            Err(ReconError::WindowOutOfRange { .. })
        ));
    }

    #[test]
    fn standardize_small_column() {
        let m = ProxyMatrix::new(2000, vec!["a".into()], vec![vec![Some(1.0), Some(2.0), Some(3.0)]]).unwrap();
        let w = m.span();
        let s = standardize(&m, &w).unwrap();
        let v: Vec<f64> = s.column_values(0).iter().map(|x| x.unwrap()).collect();
        assert_eq!(v, vec![-1.0, 0.0, 1.0]);
        let rec = s.standardization().unwrap()[0];
        assert_eq!((rec.mean, rec.sd), (2.0, 1.0));
    }

    #[test]
    fn standardize_rejects_constant() {
        let m = ProxyMatrix::new(2000, vec!["c".into()], vec![vec![Some(4.0); 5]]).unwrap();
        assert!(matches!(standardize(&m, &m.span()), Err(ReconError::ConstantColumn(_))));
    }

    #[test]
    fn standardize_on_training_window_shifts_holdout() {
        let m = ProxyMatrix::new(
            2000,
            vec!["a".into()],
            vec![(0..10).map(|i| Some(i as f64)).collect()],
        )
        .unwrap();
        let s = standardize(&m, &AnalysisWindow::new(2000, 2004).unwrap()).unwrap();
        let hold: f64 = (2005..2010).map(|y| s.get(y, 0).unwrap()).sum::<f64>() / 5.0;
        assert!(hold > 1.0);
        let train: f64 = (2000..2005).map(|y| s.get(y, 0).unwrap()).sum::<f64>();
        assert!(train.abs() < 1e-12);
    }

    #[test]
    fn drop_named_preserves_order() {
        let m = sample_matrix();
        let out = drop_named(&m, &["late"]).unwrap();
        assert_eq!(out.names(), &["full".to_string(), "gappy".to_string()]);
        assert!(matches!(drop_named(&m, &["nope"]), Err(ReconError::UnknownColumn(_))));
    }

    #[test]
    fn synthetic_world_extremes() {
        let (t, p) = gen_synthetic_world(200, 3, 1.0, 0.5, 0.3, 11).unwrap();
        let tv = t.dense().unwrap();
        for j in 0..3 {
            let pv = p.column(j).dense().unwrap();
            assert!((crate::numerics::pearson(&tv, &pv) - 1.0).abs() < 1e-12);
        }
        assert!(gen_synthetic_world(5, 3, 0.5, 0.0, 0.0, 1).is_err());
    }

    #[test]
    fn window_parse() {
        assert_eq!(AnalysisWindow::parse("1850-1998").unwrap(), AnalysisWindow::new(1850, 1998).unwrap());
        assert_eq!(AnalysisWindow::parse("998:1998").unwrap().len(), 1001);
        assert!(AnalysisWindow::parse("1998-1850").is_err());
    }
}
