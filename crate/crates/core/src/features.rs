//! Event-attribution covariates and the standardized feature matrix fed to
//! the map.
//!
//! Column layout is fixed: `mAW`, `tCAR[-h..+h]`, `tAR[-h..+h]`, `rho`,
//! `omega`, `DWR`, `alpha`, `beta`. With the usual 11-day window that is 28
//! columns.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use chrono::{Datelike, Days, NaiveDate, Weekday};

use crate::csvio::{fmt_f64, fmt_flag, read_table, CsvOut};
use crate::error::{Error, Result};
use crate::event_study::EventStats;
use crate::ingest::{CovariateTables, Exclusion, ReturnsPanel, WindowIndex};
use crate::market_model::FitRecord;

/// Value of Ω when the announcement falls on the event day itself.
pub const SAME_DAY_OMEGA: f64 = 1.0;

pub fn column_names(half_window: usize) -> Vec<String> {
    let h = half_window as i64;
    let label = |o: i64| if o > 0 { format!("+{o}") } else { o.to_string() };
    let mut names = vec!["mAW".to_string()];
    names.extend((-h..=h).map(|o| format!("tCAR[{}]", label(o))));
    names.extend((-h..=h).map(|o| format!("tAR[{}]", label(o))));
    names.extend(["rho", "omega", "DWR", "alpha", "beta"].map(String::from));
    names
}

/// File-name friendly form of a column name: `tCAR[-5]` becomes `tcar_m5`.
pub fn column_slug(name: &str) -> String {
    name.to_ascii_lowercase()
        .replace("[+", "_p")
        .replace("[-", "_m")
        .replace('[', "_")
        .replace(']', "")
}

/// (W_market − W_fund) / W_market.
pub fn modified_active_weight(w_market: f64, w_fund: f64) -> Result<f64> {
    if w_market <= 0.0 {
        return Err(Error::ZeroMarketWeight(format!("w_market={w_market}")));
    }
    Ok((w_market - w_fund) / w_market)
}

fn is_weekday(d: NaiveDate) -> bool {
    !matches!(d.weekday(), Weekday::Sat | Weekday::Sun)
}

fn next_weekday(mut d: NaiveDate) -> NaiveDate {
    while !is_weekday(d) {
        d = d + Days::new(1);
    }
    d
}

/// Weekdays in the half-open interval (from, to].
fn weekdays_between(from: NaiveDate, to: NaiveDate) -> i64 {
    let mut n = 0;
    let mut d = from;
    while d < to {
        d = d + Days::new(1);
        n += i64::from(is_weekday(d));
    }
    n
}

/// Position of `date` on the business calendar. Dates that are not trading
/// days map to the next trading day; dates outside the calendar are placed by
/// counting weekdays past its ends.
pub fn calendar_position(date: NaiveDate, calendar: &[NaiveDate]) -> i64 {
    let (Some(&first), Some(&last)) = (calendar.first(), calendar.last()) else {
        return 0;
    };
    if date > last {
        return (calendar.len() - 1) as i64 + weekdays_between(last, next_weekday(date));
    }
    if date < first {
        let start = next_weekday(date);
        return if start >= first {
            0
        } else {
            -weekdays_between(start, first) + i64::from(!is_weekday(first))
        };
    }
    calendar.partition_point(|d| *d < date) as i64
}

/// Signed business-day count D_event − D_announce.
pub fn business_day_gap(event_date: NaiveDate, announce: NaiveDate, calendar: &[NaiveDate]) -> i64 {
    calendar_position(event_date, calendar) - calendar_position(announce, calendar)
}

/// Ω = tanh(1/d) with d the signed business-day gap; 0 without an
/// announcement and `same_day` when d = 0.
pub fn announcement_proximity(
    event_date: NaiveDate,
    announce: Option<NaiveDate>,
    calendar: &[NaiveDate],
    same_day: f64,
) -> f64 {
    match announce {
        None => 0.0,
        Some(a) => match business_day_gap(event_date, a, calendar) {
            0 => same_day,
            d => (1.0 / d as f64).tanh(),
        },
    }
}

/// First differences of a level series.
pub fn rate_changes(levels: &[f64]) -> Vec<f64> {
    levels.windows(2).map(|w| w[1] - w[0]).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub rho: f64,
    /// Set when either series has zero variance; `rho` is then 0.
    pub degenerate: bool,
}

/// Pearson correlation between security returns and rate changes.
pub fn rate_correlation(returns: &[f64], changes: &[f64]) -> Result<Correlation> {
    if returns.len() != changes.len() {
        return Err(Error::LengthMismatch {
            expected: returns.len(),
            found: changes.len(),
        });
    }
    if returns.len() < 3 {
        return Err(Error::InsufficientData {
            what: "observations for correlation",
            required: 3,
            available: returns.len(),
        });
    }
    let n = returns.len() as f64;
    let mr = returns.iter().sum::<f64>() / n;
    let mc = changes.iter().sum::<f64>() / n;
    let (mut srr, mut scc, mut src) = (0.0, 0.0, 0.0);
    for (&r, &c) in returns.iter().zip(changes) {
        let (dr, dc) = (r - mr, c - mc);
        srr += dr * dr;
        scc += dc * dc;
        src += dr * dc;
    }
    if srr == 0.0 || scc == 0.0 {
        return Ok(Correlation {
            rho: 0.0,
            degenerate: true,
        });
    }
    Ok(Correlation {
        rho: (src / (srr.sqrt() * scc.sqrt())).clamp(-1.0, 1.0),
        degenerate: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovariateRow {
    pub maw: f64,
    pub omega: f64,
    pub rho: f64,
}

/// Covariates for every ticker of `tickers`, plus exclusions and notes.
#[derive(Debug, Clone, Default)]
pub struct CovariateSet {
    pub rows: BTreeMap<String, CovariateRow>,
    pub excluded: Vec<Exclusion>,
    /// Tickers whose correlation was degenerate.
    pub degenerate_rho: Vec<String>,
    /// Calendar dates whose rate level was filled.
    pub filled_rate_dates: Vec<NaiveDate>,
}

pub fn compute_covariates<'a>(
    tickers: impl IntoIterator<Item = &'a String>,
    tables: &CovariateTables,
    panel: &ReturnsPanel,
    windows: &WindowIndex,
    same_day_omega: f64,
) -> Result<CovariateSet> {
    let calendar = panel.calendar();
    let event_date = calendar[windows.event_index];
    let est = windows.estimation_range.clone();
    if est.start == 0 {
        return Err(Error::InsufficientData {
            what: "rate history before the estimation window",
            required: 1,
            available: 0,
        });
    }
    let aligned = tables.rates_on_calendar(calendar)?;
    let changes = rate_changes(&aligned.levels[est.start - 1..est.end]);
    let mut set = CovariateSet {
        filled_rate_dates: aligned.filled,
        ..Default::default()
    };
    for ticker in tickers {
        let (Some(&wm), Some(&wf)) = (tables.market_weight.get(ticker), tables.fund_weight.get(ticker))
        else {
            log::warn!("{ticker}: no weights, excluded from the feature matrix");
            set.excluded.push(Exclusion::new(ticker.as_str(), "missing weights"));
            continue;
        };
        let maw = match modified_active_weight(wm, wf) {
            Ok(m) => m,
            Err(_) => {
                set.excluded.push(Exclusion::new(ticker.as_str(), "zero market weight"));
                continue;
            }
        };
        let i = panel
            .index_of(ticker)
            .ok_or_else(|| Error::UnknownTicker(ticker.clone()))?;
        let returns = panel
            .complete_slice(i, est.clone())
            .ok_or_else(|| Error::invalid(format!("{ticker}: incomplete estimation window")))?;
        let corr = rate_correlation(returns, &changes)?;
        if corr.degenerate {
            set.degenerate_rho.push(ticker.clone());
        }
        let omega = announcement_proximity(
            event_date,
            tables.announce_date.get(ticker).copied(),
            calendar,
            same_day_omega,
        );
        set.rows.insert(
            ticker.clone(),
            CovariateRow {
                maw,
                omega,
                rho: corr.rho,
            },
        );
    }
    Ok(set)
}

/// N×D feature matrix: raw values, z-scored values and the column moments.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub tickers: Vec<String>,
    pub column_names: Vec<String>,
    raw: Vec<f64>,
    values: Vec<f64>,
    pub column_means: Vec<f64>,
    pub column_stds: Vec<f64>,
    /// Columns with zero spread; their standardized values are all zero.
    pub constant: Vec<bool>,
}

impl FeatureMatrix {
    /// Standardizes `raw` (row-major, one row per ticker) column by column.
    pub fn from_raw(tickers: Vec<String>, column_names: Vec<String>, raw: Vec<f64>) -> Result<Self> {
        let d = column_names.len();
        if raw.len() != tickers.len() * d {
            return Err(Error::DimensionMismatch {
                expected: tickers.len() * d,
                found: raw.len(),
            });
        }
        if let Some(bad) = raw.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite feature value {bad}")));
        }
        let (means, stds, constant) = column_moments(&raw, tickers.len(), d);
        let mut values = raw.clone();
        for row in values.chunks_mut(d.max(1)) {
            for k in 0..d {
                row[k] = if constant[k] {
                    0.0
                } else {
                    (row[k] - means[k]) / stds[k]
                };
            }
        }
        Ok(FeatureMatrix {
            tickers,
            column_names,
            raw,
            values,
            column_means: means,
            column_stds: stds,
            constant,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.tickers.len()
    }

    pub fn n_cols(&self) -> usize {
        self.column_names.len()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.column_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    /// Standardized values, row-major.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.n_cols();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn raw_row(&self, i: usize) -> &[f64] {
        let d = self.n_cols();
        &self.raw[i * d..(i + 1) * d]
    }

    pub fn raw_column(&self, k: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|i| self.raw_row(i)[k]).collect()
    }

    /// Maps a standardized value of column `k` back to raw units.
    pub fn destandardize(&self, k: usize, z: f64) -> f64 {
        if self.constant[k] {
            self.column_means[k]
        } else {
            z * self.column_stds[k] + self.column_means[k]
        }
    }

    pub fn standardize(&self, k: usize, x: f64) -> f64 {
        if self.constant[k] {
            0.0
        } else {
            (x - self.column_means[k]) / self.column_stds[k]
        }
    }
}

fn column_moments(raw: &[f64], n: usize, d: usize) -> (Vec<f64>, Vec<f64>, Vec<bool>) {
    let mut means = vec![0.0; d];
    let mut stds = vec![0.0; d];
    let mut constant = vec![true; d];
    if n == 0 {
        return (means, stds, constant);
    }
    for k in 0..d {
        let col = (0..n).map(|i| raw[i * d + k]);
        let mean = col.clone().sum::<f64>() / n as f64;
        let ss: f64 = col.clone().map(|v| (v - mean).powi(2)).sum();
        let std = if n > 1 { (ss / (n - 1) as f64).sqrt() } else { 0.0 };
        let scale = col.fold(0.0f64, |m, v| m.max(v.abs()));
        means[k] = mean;
        stds[k] = std;
        constant[k] = !(std > 1e-12 * scale.max(f64::MIN_POSITIVE));
    }
    (means, stds, constant)
}

/// Builds the raw matrix in the fixed column order and standardizes it.
pub fn assemble_feature_matrix(
    stats: &[EventStats],
    fits: &BTreeMap<String, FitRecord>,
    covariates: &BTreeMap<String, CovariateRow>,
) -> Result<FeatureMatrix> {
    let mut missing: Vec<String> = Vec::new();
    for s in stats {
        if !fits.contains_key(&s.ticker) {
            missing.push(format!("{} (fit)", s.ticker));
        }
        if !covariates.contains_key(&s.ticker) {
            missing.push(format!("{} (covariates)", s.ticker));
        }
    }
    if !missing.is_empty() {
        return Err(Error::TickerMismatch { missing });
    }
    let half = stats.first().map_or(5, |s| s.half_window);
    if let Some(s) = stats.iter().find(|s| s.half_window != half) {
        return Err(Error::invalid(format!("{}: inconsistent event window", s.ticker)));
    }
    let names = column_names(half);
    let mut raw = Vec::with_capacity(stats.len() * names.len());
    for s in stats {
        let fit = &fits[&s.ticker];
        let cov = &covariates[&s.ticker];
        raw.push(cov.maw);
        raw.extend_from_slice(&s.t_car);
        raw.extend_from_slice(&s.t_ar);
        raw.push(cov.rho);
        raw.push(cov.omega);
        raw.push(fit.dw.unwrap_or(f64::NAN));
        raw.push(fit.alpha);
        raw.push(fit.beta);
    }
    let tickers = stats.iter().map(|s| s.ticker.clone()).collect();
    FeatureMatrix::from_raw(tickers, names, raw)
}

fn write_matrix(path: &Path, fm: &FeatureMatrix, raw: bool) -> Result<()> {
    let mut header = vec!["ticker"];
    header.extend(fm.column_names.iter().map(String::as_str));
    let mut out = CsvOut::create(path, &header)?;
    for (i, t) in fm.tickers.iter().enumerate() {
        let row = if raw { fm.raw_row(i) } else { fm.row(i) };
        let mut fields = vec![t.clone()];
        fields.extend(row.iter().map(|&v| fmt_f64(v)));
        out.row(fields)?;
    }
    out.finish()
}

pub fn write_features(dir: &Path, fm: &FeatureMatrix) -> Result<()> {
    write_matrix(&dir.join("features_raw.csv"), fm, true)?;
    write_matrix(&dir.join("features_std.csv"), fm, false)?;
    let mut out = CsvOut::create(&dir.join("feature_meta.csv"), &["column", "mean", "std", "constant_flag"])?;
    for k in 0..fm.n_cols() {
        out.row([
            fm.column_names[k].clone(),
            fmt_f64(fm.column_means[k]),
            fmt_f64(fm.column_stds[k]),
            fmt_flag(fm.constant[k]).to_string(),
        ])?;
    }
    out.finish()
}

fn read_matrix(path: &Path) -> Result<(Vec<String>, Vec<String>, Vec<f64>)> {
    let table = read_table(path, &["ticker"])?;
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let names: Vec<String> = reader
        .headers()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?
        .iter()
        .skip(1)
        .map(String::from)
        .collect();
    let mut tickers = Vec::new();
    let mut values = Vec::new();
    for (line, rec) in &table.rows {
        tickers.push(table.field(*line, rec, 0)?.to_string());
        for k in 0..names.len() {
            values.push(table.f64(*line, rec, k + 1)?);
        }
    }
    Ok((tickers, names, values))
}

/// Reloads the three files written by [`write_features`].
pub fn read_features(dir: &Path) -> Result<FeatureMatrix> {
    let (tickers, names, raw) = read_matrix(&dir.join("features_raw.csv"))?;
    let (std_tickers, std_names, values) = read_matrix(&dir.join("features_std.csv"))?;
    if std_tickers != tickers || std_names != names {
        return Err(Error::invalid("features_raw.csv and features_std.csv disagree"));
    }
    let meta_path = dir.join("feature_meta.csv");
    let meta = read_table(&meta_path, &["column", "mean", "std", "constant_flag"])?;
    let mut by_name: HashMap<String, (f64, f64, bool)> = HashMap::new();
    for (line, rec) in &meta.rows {
        by_name.insert(
            meta.field(*line, rec, 0)?.to_string(),
            (meta.f64(*line, rec, 1)?, meta.f64(*line, rec, 2)?, meta.flag(*line, rec, 3)?),
        );
    }
    let mut fm = FeatureMatrix {
        tickers,
        column_names: names.clone(),
        raw,
        values,
        column_means: vec![],
        column_stds: vec![],
        constant: vec![],
    };
    for name in &names {
        let (m, s, c) = by_name
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownColumn(name.clone()))?;
        fm.column_means.push(m);
        fm.column_stds.push(s);
        fm.constant.push(c);
    }
    Ok(fm)
}
