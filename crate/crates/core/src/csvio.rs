//! Small helpers shared by every CSV reader and writer in the crate.
//!
//! Floats are written with Rust's shortest round-trip formatting so that a
//! written table reloads bit-for-bit.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use crate::error::{Error, Result};

pub(crate) struct Table {
    pub path: PathBuf,
    pub headers: Vec<String>,
    pub rows: Vec<(u64, csv::StringRecord)>,
}

/// Reads a whole CSV file and checks that its header starts with `expected`.
pub(crate) fn read_table(path: &Path, expected: &[&str]) -> Result<Table> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?
        .clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::EmptyInput(path.to_path_buf()));
    }
    let got: Vec<&str> = headers.iter().collect();
    if got.len() < expected.len() || got[..expected.len()] != *expected {
        return Err(Error::parse(
            path,
            1,
            format!("expected header `{}`, found `{}`", expected.join(","), got.join(",")),
        ));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::parse(path, line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.iter().all(str::is_empty) {
            continue;
        }
        rows.push((line, record));
    }
    Ok(Table {
        path: path.to_path_buf(),
        headers: got.iter().map(|h| h.to_string()).collect(),
        rows,
    })
}

impl Table {
    pub fn field<'r>(&self, line: u64, record: &'r csv::StringRecord, idx: usize) -> Result<&'r str> {
        record
            .get(idx)
            .ok_or_else(|| Error::parse(&self.path, line, format!("missing column {}", idx + 1)))
    }

    pub fn f64(&self, line: u64, record: &csv::StringRecord, idx: usize) -> Result<f64> {
        let raw = self.field(line, record, idx)?;
        raw.parse::<f64>()
            .map_err(|_| Error::parse(&self.path, line, format!("invalid number `{raw}`")))
    }

    pub fn usize(&self, line: u64, record: &csv::StringRecord, idx: usize) -> Result<usize> {
        let raw = self.field(line, record, idx)?;
        raw.parse::<usize>()
            .map_err(|_| Error::parse(&self.path, line, format!("invalid count `{raw}`")))
    }

    pub fn i64(&self, line: u64, record: &csv::StringRecord, idx: usize) -> Result<i64> {
        let raw = self.field(line, record, idx)?;
        raw.parse::<i64>()
            .map_err(|_| Error::parse(&self.path, line, format!("invalid integer `{raw}`")))
    }

    pub fn date(&self, line: u64, record: &csv::StringRecord, idx: usize) -> Result<NaiveDate> {
        let raw = self.field(line, record, idx)?;
        parse_date(raw).ok_or_else(|| Error::parse(&self.path, line, format!("invalid date `{raw}`")))
    }

    pub fn flag(&self, line: u64, record: &csv::StringRecord, idx: usize) -> Result<bool> {
        match self.field(line, record, idx)? {
            "1" | "true" => Ok(true),
            "0" | "false" => Ok(false),
            other => Err(Error::parse(&self.path, line, format!("invalid flag `{other}`"))),
        }
    }
}

pub(crate) fn parse_date(raw: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(raw, "%Y-%m-%d").ok()
}

pub(crate) struct CsvOut {
    path: PathBuf,
    inner: csv::Writer<BufWriter<File>>,
}

impl CsvOut {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = CsvOut {
            path: path.to_path_buf(),
            inner: csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(BufWriter::new(file)),
        };
        out.row(header.iter().copied())?;
        Ok(out)
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.inner
            .write_record(fields)
            .map_err(|e| Error::io(&self.path, std::io::Error::other(e)))
    }

    pub fn finish(self) -> Result<()> {
        let path = self.path;
        let mut buf = self
            .inner
            .into_inner()
            .map_err(|e| Error::io(&path, std::io::Error::other(e.to_string())))?;
        buf.flush().map_err(|e| Error::io(&path, e))
    }
}

/// Shortest representation that parses back to the identical `f64`.
pub(crate) fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x}")
    }
}

pub(crate) fn fmt_flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

pub(crate) fn fmt_offset(offset: i64) -> String {
    if offset > 0 {
        format!("+{offset}")
    } else {
        offset.to_string()
    }
}

pub(crate) fn parse_offset(raw: &str) -> Option<i64> {
    raw.trim_start_matches('+').parse().ok()
}
