//! Daily series CSV: `date,load,temperature,day_type`.

use std::fmt;
use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use dlstm_core::data::{DataError, DailyRecord, DayType};
use thiserror::Error;

pub const HEADER: [&str; 4] = ["date", "load", "temperature", "day_type"];

const EPOCH: NaiveDate = NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid date");

/// A run of consecutive missing dates, inclusive on both ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GapSpan {
    pub first: NaiveDate,
    pub last: NaiveDate,
}

impl fmt::Display for GapSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.first == self.last {
            write!(f, "{}", self.first)
        } else {
            write!(f, "{}..{}", self.first, self.last)
        }
    }
}

fn join_spans(spans: &[GapSpan]) -> String {
    spans.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("expected header `date,load,temperature,day_type`, found `{0}`")]
    Header(String),
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("line {line}: {source}")]
    Invalid { line: u64, source: DataError },
    #[error("line {line}: date {date} does not follow {previous}")]
    OutOfOrder { line: u64, date: NaiveDate, previous: NaiveDate },
    #[error("missing dates: {}", join_spans(.0))]
    Gaps(Vec<GapSpan>),
    #[error("series has no rows")]
    Empty,
}

pub fn day_number(date: NaiveDate) -> i64 {
    (date - EPOCH).num_days()
}

pub fn date_of(day: i64) -> NaiveDate {
    EPOCH + chrono::Duration::days(day)
}

/// Reads and validates a daily series. Rows must be strictly chronological;
/// missing dates are collected and reported together.
pub fn parse_series(path: &Path) -> Result<Vec<DailyRecord>, SeriesError> {
    let file = File::open(path).map_err(|source| SeriesError::Io { path: path.to_owned(), source })?;
    read_series(file)
}

pub fn read_series<R: io::Read>(input: R) -> Result<Vec<DailyRecord>, SeriesError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
    let header = reader
        .headers()
        .map_err(|e| SeriesError::Malformed { line: 1, message: e.to_string() })?
        .clone();
    if header.iter().ne(HEADER) {
        return Err(SeriesError::Header(header.iter().collect::<Vec<_>>().join(",")));
    }

    let mut records: Vec<DailyRecord> = Vec::new();
    let mut gaps = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| SeriesError::Malformed {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let malformed = |message: String| SeriesError::Malformed { line, message };

        let date = NaiveDate::parse_from_str(&row[0], "%Y-%m-%d")
            .map_err(|e| malformed(format!("bad date `{}`: {e}", &row[0])))?;
        let load: f64 = row[1].parse().map_err(|_| malformed(format!("bad load `{}`", &row[1])))?;
        let temperature: f64 =
            row[2].parse().map_err(|_| malformed(format!("bad temperature `{}`", &row[2])))?;
        let code: i64 = row[3].parse().map_err(|_| malformed(format!("bad day_type `{}`", &row[3])))?;

        let day_type = DayType::from_code(code).map_err(|source| SeriesError::Invalid { line, source })?;
        let day = day_number(date);
        let record =
            DailyRecord::new(day, load, temperature, day_type).map_err(|source| SeriesError::Invalid { line, source })?;

        if let Some(prev) = records.last() {
            if day <= prev.day {
                return Err(SeriesError::OutOfOrder { line, date, previous: date_of(prev.day) });
            }
            if day > prev.day + 1 {
                gaps.push(GapSpan { first: date_of(prev.day + 1), last: date_of(day - 1) });
            }
        }
        records.push(record);
    }
    if !gaps.is_empty() {
        return Err(SeriesError::Gaps(gaps));
    }
    if records.is_empty() {
        return Err(SeriesError::Empty);
    }
    Ok(records)
}

pub fn write_series<W: Write>(out: W, records: &[DailyRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for r in records {
        w.write_record([
            date_of(r.day).to_string(),
            r.load.to_string(),
            r.temperature.to_string(),
            r.day_type.code().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
