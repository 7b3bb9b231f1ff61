//! Loading prices, weights, announcements and rates; calendar and window
//! alignment.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::ops::{Range, RangeInclusive};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::csvio::{fmt_f64, read_table, CsvOut};
use crate::error::{Error, Result};

/// How daily returns are derived from consecutive closes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReturnKind {
    #[default]
    Simple,
    Log,
}

impl ReturnKind {
    fn apply(self, prev: f64, close: f64) -> f64 {
        match self {
            ReturnKind::Simple => close / prev - 1.0,
            ReturnKind::Log => (close / prev).ln(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriceObservation {
    pub date: NaiveDate,
    pub ticker: String,
    pub close: f64,
}

/// A security removed from the analysis, with the reason.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Exclusion {
    pub ticker: String,
    pub reason: String,
}

impl Exclusion {
    pub fn new(ticker: impl Into<String>, reason: impl Into<String>) -> Self {
        Exclusion {
            ticker: ticker.into(),
            reason: reason.into(),
        }
    }
}

/// Daily returns for N securities on a shared business-day calendar.
///
/// Cells without a return (first calendar day, or a missing close on either
/// side) are invalid and hold NaN.
#[derive(Debug, Clone)]
pub struct ReturnsPanel {
    tickers: Vec<String>,
    calendar: Vec<NaiveDate>,
    returns: Vec<f64>,
    valid: Vec<bool>,
}

impl ReturnsPanel {
    /// Builds a panel from row-major returns; `None` marks a missing cell.
    pub fn new(
        tickers: Vec<String>,
        calendar: Vec<NaiveDate>,
        rows: Vec<Vec<Option<f64>>>,
    ) -> Result<Self> {
        if calendar.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("calendar must be strictly increasing"));
        }
        let mut seen = HashSet::new();
        for t in &tickers {
            if !seen.insert(t.as_str()) {
                return Err(Error::Duplicate {
                    what: "ticker",
                    key: t.clone(),
                });
            }
        }
        if rows.len() != tickers.len() {
            return Err(Error::LengthMismatch {
                expected: tickers.len(),
                found: rows.len(),
            });
        }
        let n_days = calendar.len();
        let mut returns = Vec::with_capacity(tickers.len() * n_days);
        let mut valid = Vec::with_capacity(tickers.len() * n_days);
        for row in rows {
            if row.len() != n_days {
                return Err(Error::LengthMismatch {
                    expected: n_days,
                    found: row.len(),
                });
            }
            for cell in row {
                match cell {
                    Some(r) if r.is_finite() => {
                        returns.push(r);
                        valid.push(true);
                    }
                    Some(r) => return Err(Error::invalid(format!("non-finite return {r}"))),
                    None => {
                        returns.push(f64::NAN);
                        valid.push(false);
                    }
                }
            }
        }
        Ok(ReturnsPanel {
            tickers,
            calendar,
            returns,
            valid,
        })
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn calendar(&self) -> &[NaiveDate] {
        &self.calendar
    }

    pub fn n_securities(&self) -> usize {
        self.tickers.len()
    }

    pub fn n_days(&self) -> usize {
        self.calendar.len()
    }

    pub fn index_of(&self, ticker: &str) -> Option<usize> {
        self.tickers.iter().position(|t| t == ticker)
    }

    pub fn date_index(&self, date: NaiveDate) -> Option<usize> {
        self.calendar.binary_search(&date).ok()
    }

    /// Returns of security `i` over the whole calendar (NaN where invalid).
    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.n_days();
        &self.returns[i * n..(i + 1) * n]
    }

    pub fn valid_row(&self, i: usize) -> &[bool] {
        let n = self.n_days();
        &self.valid[i * n..(i + 1) * n]
    }

    pub fn get(&self, i: usize, t: usize) -> Option<f64> {
        let k = i * self.n_days() + t;
        self.valid[k].then_some(self.returns[k])
    }

    /// Slice of returns over `range` if every day in it is valid.
    pub fn complete_slice(&self, i: usize, range: Range<usize>) -> Option<&[f64]> {
        let valid = &self.valid_row(i)[range.clone()];
        valid.iter().all(|&v| v).then(|| &self.row(i)[range])
    }

    /// Writes `date,ticker,return` rows; missing cells have an empty return.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = CsvOut::create(path, &["date", "ticker", "return"])?;
        for (t, date) in self.calendar.iter().enumerate() {
            let date = date.to_string();
            for (i, ticker) in self.tickers.iter().enumerate() {
                let value = self.get(i, t).map(fmt_f64).unwrap_or_default();
                out.row([date.as_str(), ticker.as_str(), value.as_str()])?;
            }
        }
        out.finish()
    }

    /// Reads a panel written by [`ReturnsPanel::write_csv`].
    pub fn read_csv(path: &Path) -> Result<Self> {
        let table = read_table(path, &["date", "ticker", "return"])?;
        if table.rows.is_empty() {
            return Err(Error::EmptyInput(path.to_path_buf()));
        }
        let mut cells: BTreeMap<(String, NaiveDate), Option<f64>> = BTreeMap::new();
        let mut dates = BTreeSet::new();
        let mut tickers = BTreeSet::new();
        for (line, rec) in &table.rows {
            let date = table.date(*line, rec, 0)?;
            let ticker = table.field(*line, rec, 1)?.to_string();
            let raw = table.field(*line, rec, 2)?;
            let value = if raw.is_empty() {
                None
            } else {
                Some(table.f64(*line, rec, 2)?)
            };
            dates.insert(date);
            tickers.insert(ticker.clone());
            if cells.insert((ticker.clone(), date), value).is_some() {
                return Err(Error::DuplicateObservation { ticker, date });
            }
        }
        let calendar: Vec<NaiveDate> = dates.into_iter().collect();
        let tickers: Vec<String> = tickers.into_iter().collect();
        let rows = tickers
            .iter()
            .map(|tk| {
                calendar
                    .iter()
                    .map(|d| cells.get(&(tk.clone(), *d)).copied().flatten())
                    .collect()
            })
            .collect();
        ReturnsPanel::new(tickers, calendar, rows)
    }
}

impl PartialEq for ReturnsPanel {
    fn eq(&self, other: &Self) -> bool {
        self.tickers == other.tickers
            && self.calendar == other.calendar
            && self.valid == other.valid
            && self
                .returns
                .iter()
                .zip(&other.returns)
                .zip(&self.valid)
                .all(|((a, b), &v)| !v || a.to_bits() == b.to_bits())
    }
}

/// Result of loading prices: the panel plus what was dropped along the way.
#[derive(Debug, Clone)]
pub struct PanelLoad {
    pub panel: ReturnsPanel,
    pub excluded: Vec<Exclusion>,
    pub warnings: Vec<String>,
}

/// Builds returns from close observations. Securities whose price coverage
/// over the calendar is below `min_coverage` are dropped and reported.
pub fn panel_from_prices(
    observations: &[PriceObservation],
    min_coverage: f64,
    kind: ReturnKind,
) -> Result<PanelLoad> {
    if !(0.0..=1.0).contains(&min_coverage) {
        return Err(Error::invalid(format!(
            "min_coverage {min_coverage} outside [0, 1]"
        )));
    }
    let mut seen = HashSet::with_capacity(observations.len());
    for obs in observations {
        if !seen.insert((obs.ticker.as_str(), obs.date)) {
            return Err(Error::DuplicateObservation {
                ticker: obs.ticker.clone(),
                date: obs.date,
            });
        }
    }
    let calendar: Vec<NaiveDate> = observations
        .iter()
        .map(|o| o.date)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut closes: BTreeMap<&str, Vec<Option<f64>>> = BTreeMap::new();
    for obs in observations {
        let t = calendar.binary_search(&obs.date).expect("date in calendar");
        closes
            .entry(obs.ticker.as_str())
            .or_insert_with(|| vec![None; calendar.len()])[t] = Some(obs.close);
    }

    let mut tickers = Vec::new();
    let mut rows = Vec::new();
    let mut excluded = Vec::new();
    for (ticker, series) in closes {
        let present = series.iter().filter(|c| c.is_some()).count();
        let coverage = present as f64 / calendar.len() as f64;
        if coverage < min_coverage {
            excluded.push(Exclusion::new(
                ticker,
                format!("coverage {coverage:.3} below {min_coverage}"),
            ));
            continue;
        }
        let mut row = vec![None; calendar.len()];
        for t in 1..calendar.len() {
            if let (Some(prev), Some(close)) = (series[t - 1], series[t]) {
                row[t] = Some(kind.apply(prev, close));
            }
        }
        tickers.push(ticker.to_string());
        rows.push(row);
    }
    let panel = ReturnsPanel::new(tickers, calendar, rows)?;
    Ok(PanelLoad {
        panel,
        excluded,
        warnings: Vec::new(),
    })
}

/// Loads `date,ticker,close` prices. Rows with a non-positive close are
/// rejected with a warning.
pub fn load_returns_panel(path: &Path, min_coverage: f64) -> Result<PanelLoad> {
    load_returns_panel_with(path, min_coverage, ReturnKind::Simple)
}

pub fn load_returns_panel_with(path: &Path, min_coverage: f64, kind: ReturnKind) -> Result<PanelLoad> {
    let table = read_table(path, &["date", "ticker", "close"])?;
    let mut observations = Vec::with_capacity(table.rows.len());
    let mut warnings = Vec::new();
    for (line, rec) in &table.rows {
        let date = table.date(*line, rec, 0)?;
        let ticker = table.field(*line, rec, 1)?;
        if ticker.is_empty() {
            return Err(Error::parse(path, *line, "empty ticker"));
        }
        let close = table.f64(*line, rec, 2)?;
        if !(close > 0.0 && close.is_finite()) {
            let msg = format!("line {line}: rejected non-positive close {close} for {ticker}");
            log::warn!("{msg}");
            warnings.push(msg);
            continue;
        }
        observations.push(PriceObservation {
            date,
            ticker: ticker.to_string(),
            close,
        });
    }
    if observations.is_empty() {
        return Err(Error::EmptyInput(path.to_path_buf()));
    }
    let mut load = panel_from_prices(&observations, min_coverage, kind)?;
    load.warnings = warnings;
    Ok(load)
}

/// Writes the drop report, `ticker,reason`.
pub fn write_exclusions(path: &Path, excluded: &[Exclusion]) -> Result<()> {
    let mut out = CsvOut::create(path, &["ticker", "reason"])?;
    for e in excluded {
        out.row([e.ticker.as_str(), e.reason.as_str()])?;
    }
    out.finish()
}

pub fn read_exclusions(path: &Path) -> Result<Vec<Exclusion>> {
    let table = read_table(path, &["ticker", "reason"])?;
    table
        .rows
        .iter()
        .map(|(line, rec)| {
            Ok(Exclusion::new(
                table.field(*line, rec, 0)?,
                table.field(*line, rec, 1)?,
            ))
        })
        .collect()
}

/// Positions of the estimation and event windows on the panel calendar.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowIndex {
    pub event_index: usize,
    pub estimation_range: Range<usize>,
    pub half_window: usize,
}

impl WindowIndex {
    /// Window layout around `event_index`; `gap` business days separate the
    /// estimation window from the first event-window day.
    pub fn at(
        event_index: usize,
        calendar_len: usize,
        est_len: usize,
        half_window: usize,
        gap: usize,
    ) -> Result<Self> {
        if est_len == 0 {
            return Err(Error::invalid("estimation length must be positive"));
        }
        let required = est_len + half_window + gap;
        if event_index < required {
            return Err(Error::InsufficientData {
                what: "history before the event window",
                required,
                available: event_index,
            });
        }
        if event_index + half_window >= calendar_len {
            return Err(Error::InsufficientData {
                what: "days after the event",
                required: half_window,
                available: calendar_len.saturating_sub(event_index + 1),
            });
        }
        let est_end = event_index - half_window - gap;
        Ok(WindowIndex {
            event_index,
            estimation_range: est_end - est_len..est_end,
            half_window,
        })
    }

    pub fn est_len(&self) -> usize {
        self.estimation_range.len()
    }

    pub fn event_offsets(&self) -> RangeInclusive<i64> {
        let h = self.half_window as i64;
        -h..=h
    }

    pub fn event_len(&self) -> usize {
        2 * self.half_window + 1
    }

    pub fn event_range(&self) -> Range<usize> {
        self.event_index - self.half_window..self.event_index + self.half_window + 1
    }

    pub fn offset_index(&self, offset: i64) -> usize {
        (self.event_index as i64 + offset) as usize
    }
}

/// Locates `event_date` and lays out the windows with no gap.
pub fn align_windows(
    panel: &ReturnsPanel,
    event_date: NaiveDate,
    est_len: usize,
    half_window: usize,
) -> Result<WindowIndex> {
    align_windows_with_gap(panel, event_date, est_len, half_window, 0)
}

pub fn align_windows_with_gap(
    panel: &ReturnsPanel,
    event_date: NaiveDate,
    est_len: usize,
    half_window: usize,
    gap: usize,
) -> Result<WindowIndex> {
    let event_index = panel
        .date_index(event_date)
        .ok_or(Error::DateNotInCalendar(event_date))?;
    WindowIndex::at(event_index, panel.n_days(), est_len, half_window, gap)
}

/// Fund holdings, earnings announcements and short-rate levels.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CovariateTables {
    pub market_weight: BTreeMap<String, f64>,
    pub fund_weight: BTreeMap<String, f64>,
    pub announce_date: BTreeMap<String, NaiveDate>,
    pub rate_series: BTreeMap<NaiveDate, f64>,
}

/// Rate levels aligned to a calendar, with the dates that had to be filled.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedRates {
    pub levels: Vec<f64>,
    pub filled: Vec<NaiveDate>,
}

impl CovariateTables {
    /// Tickers that cannot enter the feature matrix because weights are missing.
    pub fn missing_weights<'a>(&self, tickers: impl IntoIterator<Item = &'a String>) -> Vec<Exclusion> {
        tickers
            .into_iter()
            .filter(|t| !self.market_weight.contains_key(*t) || !self.fund_weight.contains_key(*t))
            .map(|t| Exclusion::new(t.as_str(), "missing weights"))
            .collect()
    }

    /// Rate level on each calendar date, forward-filling gaps. Dates before the
    /// first quote take the first quote; both cases are reported in `filled`.
    pub fn rates_on_calendar(&self, calendar: &[NaiveDate]) -> Result<AlignedRates> {
        let first = self
            .rate_series
            .values()
            .next()
            .copied()
            .ok_or_else(|| Error::invalid("rate series is empty"))?;
        let mut levels = Vec::with_capacity(calendar.len());
        let mut filled = Vec::new();
        for &d in calendar {
            match self.rate_series.get(&d) {
                Some(&r) => levels.push(r),
                None => {
                    let r = self
                        .rate_series
                        .range(..d)
                        .next_back()
                        .map(|(_, &r)| r)
                        .unwrap_or(first);
                    levels.push(r);
                    filled.push(d);
                }
            }
        }
        Ok(AlignedRates { levels, filled })
    }
}

pub fn read_weights(path: &Path) -> Result<(BTreeMap<String, f64>, BTreeMap<String, f64>)> {
    let table = read_table(path, &["ticker", "w_market", "w_gpif"])?;
    let mut market = BTreeMap::new();
    let mut fund = BTreeMap::new();
    for (line, rec) in &table.rows {
        let ticker = table.field(*line, rec, 0)?.to_string();
        let wm = table.f64(*line, rec, 1)?;
        let wf = table.f64(*line, rec, 2)?;
        for w in [wm, wf] {
            if w < 0.0 || !w.is_finite() {
                return Err(Error::NegativeWeight { ticker, value: w });
            }
        }
        if market.insert(ticker.clone(), wm).is_some() {
            return Err(Error::Duplicate {
                what: "ticker",
                key: ticker,
            });
        }
        fund.insert(ticker, wf);
    }
    Ok((market, fund))
}

/// `ticker,announce_date`; an empty date means no announcement.
pub fn read_announcements(path: &Path) -> Result<BTreeMap<String, NaiveDate>> {
    let table = read_table(path, &["ticker", "announce_date"])?;
    let mut out = BTreeMap::new();
    let mut seen = HashSet::new();
    for (line, rec) in &table.rows {
        let ticker = table.field(*line, rec, 0)?.to_string();
        if !seen.insert(ticker.clone()) {
            return Err(Error::Duplicate {
                what: "ticker",
                key: ticker,
            });
        }
        if table.field(*line, rec, 1)?.is_empty() {
            continue;
        }
        out.insert(ticker, table.date(*line, rec, 1)?);
    }
    Ok(out)
}

pub fn read_rates(path: &Path) -> Result<BTreeMap<NaiveDate, f64>> {
    let table = read_table(path, &["date", "rate"])?;
    let mut out = BTreeMap::new();
    for (line, rec) in &table.rows {
        let date = table.date(*line, rec, 0)?;
        let rate = table.f64(*line, rec, 1)?;
        if out.insert(date, rate).is_some() {
            return Err(Error::Duplicate {
                what: "rate date",
                key: date.to_string(),
            });
        }
    }
    Ok(out)
}

pub fn load_covariates(weights: &Path, announcements: &Path, rates: &Path) -> Result<CovariateTables> {
    let (market_weight, fund_weight) = read_weights(weights)?;
    Ok(CovariateTables {
        market_weight,
        fund_weight,
        announce_date: read_announcements(announcements)?,
        rate_series: read_rates(rates)?,
    })
}
