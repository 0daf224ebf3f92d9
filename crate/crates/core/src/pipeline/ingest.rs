//! Headered CSV input.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Datelike, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// A set of calendar months used to filter rows by their date.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Season {
    label: String,
    months: Vec<u32>,
}

impl Season {
    /// May to August.
    pub fn summer() -> Self {
        Self { label: "summer".into(), months: vec![5, 6, 7, 8] }
    }

    /// November to February.
    pub fn winter() -> Self {
        Self { label: "winter".into(), months: vec![11, 12, 1, 2] }
    }

    pub fn months(months: Vec<u32>) -> Result<Self> {
        if months.is_empty() || months.iter().any(|m| !(1..=12).contains(m)) {
            return Err(Error::Parameter(format!("months must be in 1..=12, got {months:?}")));
        }
        let label = format!("months:{}", months.iter().map(u32::to_string).collect::<Vec<_>>().join(","));
        Ok(Self { label, months })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.months.contains(&date.month())
    }
}

impl FromStr for Season {
    type Err = Error;

    /// `summer`, `winter` or `months:5,6,7`.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "summer" => Ok(Self::summer()),
            "winter" => Ok(Self::winter()),
            other => {
                let list = other
                    .strip_prefix("months:")
                    .ok_or_else(|| Error::Parameter(format!("unknown season '{s}'")))?;
                let months = list
                    .split(',')
                    .map(|m| m.trim().parse::<u32>().map_err(|_| Error::Parameter(format!("bad month '{m}'"))))
                    .collect::<Result<Vec<_>>>()?;
                Self::months(months)
            }
        }
    }
}

impl TryFrom<String> for Season {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Season> for String {
    fn from(s: Season) -> String {
        s.label
    }
}

impl fmt::Display for Season {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

/// Per-day reduction of sub-daily records (needs a date column).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    #[default]
    None,
    DailyMax,
    DailyMean,
}

impl FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "daily-max" => Ok(Self::DailyMax),
            "daily-mean" => Ok(Self::DailyMean),
            _ => Err(Error::Parameter(format!("unknown aggregation '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestOptions {
    pub delimiter: char,
    /// Columns to keep, in this order; all non-date columns when `None`.
    pub columns: Option<Vec<String>>,
    /// Drop incomplete rows instead of failing on them.
    pub drop_na: bool,
    pub date_column: Option<String>,
    pub season: Option<Season>,
    pub aggregation: Aggregation,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self { delimiter: ',', columns: None, drop_na: true, date_column: None, season: None, aggregation: Aggregation::None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub columns: Vec<String>,
    pub data: Matrix,
    pub season: Option<String>,
    pub dropped_rows: usize,
}

impl Dataset {
    pub fn new(columns: Vec<String>, data: Matrix) -> Result<Self> {
        if columns.len() != data.ncols() {
            return Err(Error::Shape { expected: data.ncols(), got: columns.len() });
        }
        check_unique(&columns)?;
        Ok(Self { columns, data, season: None, dropped_rows: 0 })
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.columns.iter().position(|c| c == name).ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        Ok(self.data.column(self.index_of(name)?))
    }
}

fn check_unique(columns: &[String]) -> Result<()> {
    let mut seen = HashSet::new();
    for c in columns {
        if !seen.insert(c) {
            return Err(Error::Data(format!("duplicate column '{c}'")));
        }
    }
    Ok(())
}

fn is_missing(cell: &str) -> bool {
    let c = cell.trim();
    c.is_empty() || c.eq_ignore_ascii_case("na") || c.eq_ignore_ascii_case("nan")
}

fn parse_date(cell: &str) -> Option<NaiveDate> {
    let c = cell.trim();
    if let Ok(d) = NaiveDate::parse_from_str(c, "%Y-%m-%d") {
        return Some(d);
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(c, fmt) {
            return Some(dt.date());
        }
    }
    DateTime::parse_from_rfc3339(c).ok().map(|dt| dt.date_naive())
}

pub fn ingest(path: impl AsRef<Path>, options: &IngestOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::from(e).context(format!("opening {}", path.display())))?;
    ingest_reader(file, options)
}

/// Parses a headered CSV. Row numbers in errors are 1-based file lines.
pub fn ingest_reader<R: Read>(reader: R, options: &IngestOptions) -> Result<Dataset> {
    if !options.delimiter.is_ascii() {
        return Err(Error::Parameter("delimiter must be a single ASCII character".into()));
    }
    let needs_date = options.season.is_some() || options.aggregation != Aggregation::None;
    if needs_date && options.date_column.is_none() {
        return Err(Error::Parameter("season filtering and aggregation need a date column".into()));
    }
    let mut rdr = csv::ReaderBuilder::new().delimiter(options.delimiter as u8).has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let find = |name: &str| header.iter().position(|h| h == name).ok_or_else(|| Error::UnknownColumn(name.to_string()));

    let date_idx = options.date_column.as_deref().map(find).transpose()?;
    let columns: Vec<String> = match &options.columns {
        Some(cols) => cols.clone(),
        None => header.iter().enumerate().filter(|(i, _)| Some(*i) != date_idx).map(|(_, h)| h.clone()).collect(),
    };
    if columns.is_empty() {
        return Err(Error::Data("no data columns selected".into()));
    }
    check_unique(&columns)?;
    let idx: Vec<usize> = columns.iter().map(|c| find(c)).collect::<Result<_>>()?;

    let mut values: Vec<f64> = Vec::new();
    let mut dates: Vec<NaiveDate> = Vec::new();
    let mut dropped = 0;
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let date = match date_idx {
            Some(di) => {
                let cell = record.get(di).unwrap_or("");
                let d = parse_date(cell).ok_or_else(|| Error::Ingest {
                    row: line,
                    column: header[di].clone(),
                    message: format!("cannot parse '{cell}' as an ISO-8601 date"),
                })?;
                Some(d)
            }
            None => None,
        };
        if let (Some(season), Some(d)) = (&options.season, date) {
            if !season.contains(d) {
                continue;
            }
        }
        let mut row = Vec::with_capacity(idx.len());
        let mut incomplete = false;
        for (&ci, name) in idx.iter().zip(&columns) {
            let cell = record.get(ci).unwrap_or("");
            if is_missing(cell) {
                if !options.drop_na {
                    return Err(Error::Ingest { row: line, column: name.clone(), message: "missing value".into() });
                }
                incomplete = true;
                continue;
            }
            let v: f64 = cell.trim().parse().map_err(|_| Error::Ingest {
                row: line,
                column: name.clone(),
                message: format!("non-numeric value '{cell}'"),
            })?;
            if !v.is_finite() {
                return Err(Error::Ingest { row: line, column: name.clone(), message: format!("non-finite value '{cell}'") });
            }
            row.push(v);
        }
        if incomplete {
            dropped += 1;
            continue;
        }
        values.extend(row);
        dates.extend(date);
    }

    let d = columns.len();
    if options.aggregation != Aggregation::None {
        values = aggregate(&values, &dates, d, options.aggregation);
    }
    let n = values.len() / d;
    if n < 2 {
        return Err(Error::Data(format!("at least 2 complete rows required, got {n}")));
    }
    Ok(Dataset {
        columns,
        data: Matrix::from_vec(n, d, values),
        season: options.season.as_ref().map(|s| s.label().to_string()),
        dropped_rows: dropped,
    })
}

fn aggregate(values: &[f64], dates: &[NaiveDate], d: usize, how: Aggregation) -> Vec<f64> {
    let mut days: BTreeMap<NaiveDate, (Vec<f64>, usize)> = BTreeMap::new();
    for (row, &date) in values.chunks_exact(d).zip(dates) {
        let init = match how {
            Aggregation::DailyMax => f64::NEG_INFINITY,
            _ => 0.0,
        };
        let acc = days.entry(date).or_insert_with(|| (vec![init; d], 0));
        for (a, &v) in acc.0.iter_mut().zip(row) {
            match how {
                Aggregation::DailyMax => *a = a.max(v),
                _ => *a += v,
            }
        }
        acc.1 += 1;
    }
    days.into_values()
        .flat_map(|(acc, count)| {
            acc.into_iter().map(move |a| if how == Aggregation::DailyMean { a / count as f64 } else { a })
        })
        .collect()
}
