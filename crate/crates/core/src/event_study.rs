//! Abnormal returns, cumulative abnormal returns, t-tests and the sorted
//! portfolio comparison.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::csvio::{fmt_f64, fmt_flag, fmt_offset, parse_offset, read_table, CsvOut};
use crate::error::{Error, Result};
use crate::ingest::{Exclusion, ReturnsPanel, WindowIndex};
use crate::market_model::{fit_market_model, FitSet, MarketModelFit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatKind {
    Ar,
    Car,
}

/// Per-security abnormal returns and test outcomes over the event window.
#[derive(Debug, Clone, PartialEq)]
pub struct EventStats {
    pub ticker: String,
    pub half_window: usize,
    pub ar: Vec<f64>,
    pub car: Vec<f64>,
    pub t_ar: Vec<f64>,
    pub t_car: Vec<f64>,
    pub detected_ar: Vec<bool>,
    pub detected_car: Vec<bool>,
}

impl EventStats {
    pub fn offsets(&self) -> impl Iterator<Item = i64> {
        let h = self.half_window as i64;
        -h..=h
    }

    /// Position of `offset` in the per-day vectors.
    pub fn slot(&self, offset: i64) -> Option<usize> {
        let k = offset + self.half_window as i64;
        (0..self.ar.len() as i64).contains(&k).then_some(k as usize)
    }

    pub fn t(&self, kind: StatKind) -> &[f64] {
        match kind {
            StatKind::Ar => &self.t_ar,
            StatKind::Car => &self.t_car,
        }
    }

    pub fn detected(&self, kind: StatKind) -> &[bool] {
        match kind {
            StatKind::Ar => &self.detected_ar,
            StatKind::Car => &self.detected_car,
        }
    }

    pub fn any_detected(&self) -> bool {
        self.detected_ar.iter().chain(&self.detected_car).any(|&d| d)
    }
}

/// Significance level and an optional explicit |t| threshold that overrides it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionRule {
    pub theta: f64,
    pub threshold_override: Option<f64>,
}

impl Default for DetectionRule {
    fn default() -> Self {
        DetectionRule {
            theta: 0.05,
            threshold_override: None,
        }
    }
}

impl DetectionRule {
    pub fn threshold(&self, dof: usize) -> Result<f64> {
        match self.threshold_override {
            Some(t) => Ok(t),
            None => critical_value(self.theta, dof),
        }
    }
}

/// Two-sided Student-t critical value: detection is |t| > the returned value.
pub fn critical_value(theta: f64, dof: usize) -> Result<f64> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::invalid(format!("significance level {theta} outside (0, 1]")));
    }
    if dof == 0 {
        return Err(Error::invalid("degrees of freedom must be positive"));
    }
    if theta == 1.0 {
        return Ok(0.0);
    }
    let p = 1.0 - theta / 2.0;
    if dof > LARGE_DOF {
        // statrs' beta inversion degrades past ~1e6 dof; use the expansion
        // around the normal quantile instead.
        let z = Normal::standard().inverse_cdf(p);
        let nu = dof as f64;
        let z3 = z.powi(3);
        let z5 = z.powi(5);
        return Ok(z + (z3 + z) / (4.0 * nu) + (5.0 * z5 + 16.0 * z3 + 3.0 * z) / (96.0 * nu * nu));
    }
    let dist = StudentsT::new(0.0, 1.0, dof as f64).map_err(|e| Error::invalid(e.to_string()))?;
    Ok(dist.inverse_cdf(p))
}

const LARGE_DOF: usize = 100_000;

/// AR(τ) = y(τ) − (α̂ + β̂·x(τ)).
pub fn abnormal_returns(fit: &MarketModelFit, y_event: &[f64], x_event: &[f64]) -> Result<Vec<f64>> {
    abnormal_returns_with(fit.alpha_hat, fit.beta_hat, y_event, x_event)
}

pub fn abnormal_returns_with(alpha: f64, beta: f64, y_event: &[f64], x_event: &[f64]) -> Result<Vec<f64>> {
    if y_event.len() != x_event.len() {
        return Err(Error::LengthMismatch {
            expected: x_event.len(),
            found: y_event.len(),
        });
    }
    Ok(y_event
        .iter()
        .zip(x_event)
        .map(|(&y, &x)| y - (alpha + beta * x))
        .collect())
}

/// Running sum of abnormal returns from the first event-window day.
pub fn cumulate(ar: &[f64]) -> Vec<f64> {
    ar.iter()
        .scan(0.0, |acc, &a| {
            *acc += a;
            Some(*acc)
        })
        .collect()
}

/// t_AR = AR/σ̂ and t_CAR = CAR/(σ̂·√L), L the number of accumulated days.
///
/// The CAR scaling assumes independent residuals.
pub fn t_statistics(ar: &[f64], sigma_hat: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(sigma_hat > 0.0 && sigma_hat.is_finite()) {
        return Err(Error::PerfectFit);
    }
    let t_ar = ar.iter().map(|a| a / sigma_hat).collect();
    let t_car = cumulate(ar)
        .iter()
        .enumerate()
        .map(|(k, c)| c / (sigma_hat * ((k + 1) as f64).sqrt()))
        .collect();
    Ok((t_ar, t_car))
}

/// Event statistics for one series given its fit and event-window returns.
pub fn event_stats(
    ticker: &str,
    fit: &MarketModelFit,
    y_event: &[f64],
    x_event: &[f64],
    rule: &DetectionRule,
) -> Result<EventStats> {
    if fit.perfect_fit {
        return Err(Error::PerfectFit);
    }
    let ar = abnormal_returns(fit, y_event, x_event)?;
    if ar.len() % 2 == 0 {
        return Err(Error::invalid("event window must have odd length"));
    }
    let (t_ar, t_car) = t_statistics(&ar, fit.sigma_hat)?;
    let crit = rule.threshold(fit.dof())?;
    Ok(EventStats {
        ticker: ticker.to_string(),
        half_window: ar.len() / 2,
        car: cumulate(&ar),
        detected_ar: t_ar.iter().map(|t: &f64| t.abs() > crit).collect(),
        detected_car: t_car.iter().map(|t: &f64| t.abs() > crit).collect(),
        ar,
        t_ar,
        t_car,
    })
}

/// Event statistics of every fitted security; perfect fits are skipped and
/// listed.
#[derive(Debug, Clone, PartialEq)]
pub struct SecurityStudy {
    pub stats: Vec<EventStats>,
    pub skipped: Vec<Exclusion>,
}

pub fn study_securities(
    panel: &ReturnsPanel,
    windows: &WindowIndex,
    fits: &FitSet,
    rule: &DetectionRule,
) -> Result<SecurityStudy> {
    let m = panel
        .index_of(&fits.market_ticker)
        .ok_or_else(|| Error::UnknownTicker(fits.market_ticker.clone()))?;
    let x = panel.complete_slice(m, windows.event_range()).ok_or_else(|| Error::MarketIncomplete {
        ticker: fits.market_ticker.clone(),
        reason: "missing return in event window".into(),
    })?;
    let entries: Vec<(&String, &MarketModelFit)> = fits.fits.iter().collect();
    let results: Vec<Result<std::result::Result<EventStats, Exclusion>>> = entries
        .par_iter()
        .map(|(ticker, fit)| {
            if fit.perfect_fit {
                return Ok(Err(Exclusion::new(ticker.as_str(), "perfect fit")));
            }
            let i = panel
                .index_of(ticker)
                .ok_or_else(|| Error::UnknownTicker(ticker.to_string()))?;
            let y = panel
                .complete_slice(i, windows.event_range())
                .ok_or_else(|| Error::invalid(format!("{ticker}: missing event-window return")))?;
            Ok(Ok(event_stats(ticker, fit, y, x, rule)?))
        })
        .collect();
    let mut study = SecurityStudy {
        stats: Vec::new(),
        skipped: Vec::new(),
    };
    for r in results {
        match r? {
            Ok(s) => study.stats.push(s),
            Err(e) => study.skipped.push(e),
        }
    }
    Ok(study)
}

/// Tickers ordered by modified active weight, descending, ties by ticker.
pub fn rank_by_weight(maw: &BTreeMap<String, f64>) -> Vec<String> {
    let mut entries: Vec<(&String, f64)> = maw.iter().map(|(t, &w)| (t, w)).collect();
    entries.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    entries.into_iter().map(|(t, _)| t.clone()).collect()
}

/// Splits the weight ranking into `q` contiguous groups whose sizes differ by
/// at most one (larger groups first).
pub fn build_sorted_portfolios(maw: &BTreeMap<String, f64>, q: usize) -> Result<Vec<Vec<String>>> {
    if q == 0 {
        return Err(Error::invalid("quantile count must be positive"));
    }
    if q > maw.len() {
        return Err(Error::invalid(format!(
            "quantile count {q} exceeds universe size {}",
            maw.len()
        )));
    }
    let ranked = rank_by_weight(maw);
    let (base, extra) = (ranked.len() / q, ranked.len() % q);
    let mut out = Vec::with_capacity(q);
    let mut start = 0;
    for p in 0..q {
        let size = base + usize::from(p < extra);
        out.push(ranked[start..start + size].to_vec());
        start += size;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioStudy {
    pub quantile_count: usize,
    pub memberships: Vec<Vec<String>>,
    /// `None` where the portfolio's market model fits exactly.
    pub portfolio_stats: Vec<Option<EventStats>>,
}

pub fn portfolio_label(p: usize) -> String {
    format!("P{:02}", p + 1)
}

/// Equal-weight portfolio series, market model re-estimated per portfolio.
pub fn portfolio_event_study(
    memberships: &[Vec<String>],
    panel: &ReturnsPanel,
    windows: &WindowIndex,
    market_ticker: &str,
    rule: &DetectionRule,
) -> Result<PortfolioStudy> {
    let m = panel
        .index_of(market_ticker)
        .ok_or_else(|| Error::UnknownTicker(market_ticker.to_string()))?;
    let span = windows.estimation_range.start..windows.event_range().end;
    let market = panel.complete_slice(m, span.clone()).ok_or_else(|| Error::MarketIncomplete {
        ticker: market_ticker.to_string(),
        reason: "missing return in analysis span".into(),
    })?;
    let est_len = windows.est_len();
    let event_start = windows.event_range().start - span.start;

    let mut portfolio_stats = Vec::with_capacity(memberships.len());
    for (p, members) in memberships.iter().enumerate() {
        if members.is_empty() {
            return Err(Error::EmptyPortfolio(p));
        }
        let mut series = vec![0.0; span.len()];
        for ticker in members {
            let i = panel
                .index_of(ticker)
                .ok_or_else(|| Error::UnknownTicker(ticker.clone()))?;
            let r = panel
                .complete_slice(i, span.clone())
                .ok_or_else(|| Error::invalid(format!("{ticker}: incomplete returns")))?;
            for (s, v) in series.iter_mut().zip(r) {
                *s += v;
            }
        }
        let k = members.len() as f64;
        series.iter_mut().for_each(|s| *s /= k);
        let fit = fit_market_model(&series[..est_len], &market[..est_len])?;
        let stats = if fit.perfect_fit {
            None
        } else {
            Some(event_stats(
                &portfolio_label(p),
                &fit,
                &series[event_start..],
                &market[event_start..],
                rule,
            )?)
        };
        portfolio_stats.push(stats);
    }
    Ok(PortfolioStudy {
        quantile_count: memberships.len(),
        memberships: memberships.to_vec(),
        portfolio_stats,
    })
}

/// Percentage of securities detected at each event offset.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionTable {
    pub offsets: Vec<i64>,
    pub pct_car: Vec<f64>,
    pub pct_ar: Vec<f64>,
    pub denominator: usize,
}

pub fn detection_percentages(stats: &[EventStats]) -> DetectionTable {
    let half = stats.first().map_or(0, |s| s.half_window);
    let len = 2 * half + 1;
    let mut car = vec![0usize; len];
    let mut ar = vec![0usize; len];
    for s in stats {
        for k in 0..len {
            car[k] += usize::from(s.detected_car[k]);
            ar[k] += usize::from(s.detected_ar[k]);
        }
    }
    let n = stats.len();
    let pct = |c: usize| if n == 0 { 0.0 } else { 100.0 * c as f64 / n as f64 };
    DetectionTable {
        offsets: (-(half as i64)..=half as i64).collect(),
        pct_car: car.into_iter().map(pct).collect(),
        pct_ar: ar.into_iter().map(pct).collect(),
        denominator: n,
    }
}

pub fn write_detection_table(path: &Path, table: &DetectionTable) -> Result<()> {
    let mut out = CsvOut::create(path, &["offset", "pct_car", "pct_ar", "n"])?;
    for k in 0..table.offsets.len() {
        out.row([
            fmt_offset(table.offsets[k]),
            fmt_f64(table.pct_car[k]),
            fmt_f64(table.pct_ar[k]),
            table.denominator.to_string(),
        ])?;
    }
    out.finish()
}

pub fn read_detection_table(path: &Path) -> Result<DetectionTable> {
    let table = read_table(path, &["offset", "pct_car", "pct_ar", "n"])?;
    let mut out = DetectionTable {
        offsets: vec![],
        pct_car: vec![],
        pct_ar: vec![],
        denominator: 0,
    };
    for (line, rec) in &table.rows {
        out.offsets.push(table.i64(*line, rec, 0)?);
        out.pct_car.push(table.f64(*line, rec, 1)?);
        out.pct_ar.push(table.f64(*line, rec, 2)?);
        out.denominator = table.usize(*line, rec, 3)?;
    }
    Ok(out)
}

/// Binary detection rows in a chosen order (weight rank or portfolio rank).
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionGrid {
    pub labels: Vec<String>,
    pub offsets: Vec<i64>,
    pub ar: Vec<Vec<bool>>,
    pub car: Vec<Vec<bool>>,
}

impl DetectionGrid {
    /// Rows for `order`; labels without statistics get all-zero rows.
    pub fn from_stats<'a>(
        order: &[String],
        half_window: usize,
        lookup: impl Fn(&str) -> Option<&'a EventStats>,
    ) -> Self {
        let len = 2 * half_window + 1;
        let mut grid = DetectionGrid {
            labels: order.to_vec(),
            offsets: (-(half_window as i64)..=half_window as i64).collect(),
            ar: Vec::with_capacity(order.len()),
            car: Vec::with_capacity(order.len()),
        };
        for label in order {
            match lookup(label) {
                Some(s) => {
                    grid.ar.push(s.detected_ar.clone());
                    grid.car.push(s.detected_car.clone());
                }
                None => {
                    grid.ar.push(vec![false; len]);
                    grid.car.push(vec![false; len]);
                }
            }
        }
        grid
    }

    pub fn for_portfolios(study: &PortfolioStudy, half_window: usize) -> Self {
        let labels: Vec<String> = (0..study.memberships.len()).map(portfolio_label).collect();
        DetectionGrid::from_stats(&labels, half_window, |l| {
            study
                .portfolio_stats
                .iter()
                .flatten()
                .find(|s| s.ticker == l)
        })
    }
}

pub fn write_detection_grid(path: &Path, grid: &DetectionGrid) -> Result<()> {
    let mut header = vec!["kind".to_string(), "rank".into(), "label".into()];
    header.extend(grid.offsets.iter().map(|&o| fmt_offset(o)));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut out = CsvOut::create(path, &header_refs)?;
    for (kind, rows) in [("car", &grid.car), ("ar", &grid.ar)] {
        for (rank, (label, row)) in grid.labels.iter().zip(rows).enumerate() {
            let mut fields = vec![kind.to_string(), (rank + 1).to_string(), label.clone()];
            fields.extend(row.iter().map(|&b| fmt_flag(b).to_string()));
            out.row(fields)?;
        }
    }
    out.finish()
}

pub fn read_detection_grid(path: &Path) -> Result<DetectionGrid> {
    let table = read_table(path, &["kind", "rank", "label"])?;
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?
        .clone();
    let offsets = headers
        .iter()
        .skip(3)
        .map(|h| parse_offset(h).ok_or_else(|| Error::parse(path, 1, format!("bad offset `{h}`"))))
        .collect::<Result<Vec<i64>>>()?;
    let mut grid = DetectionGrid {
        labels: vec![],
        offsets,
        ar: vec![],
        car: vec![],
    };
    for (line, rec) in &table.rows {
        let row = (0..grid.offsets.len())
            .map(|k| table.flag(*line, rec, 3 + k))
            .collect::<Result<Vec<bool>>>()?;
        match table.field(*line, rec, 0)? {
            "car" => {
                grid.labels.push(table.field(*line, rec, 2)?.to_string());
                grid.car.push(row);
            }
            "ar" => grid.ar.push(row),
            other => return Err(Error::parse(path, *line, format!("unknown kind `{other}`"))),
        }
    }
    Ok(grid)
}

pub fn write_event_stats(path: &Path, stats: &[EventStats]) -> Result<()> {
    let mut out = CsvOut::create(
        path,
        &["ticker", "offset", "ar", "car", "t_ar", "t_car", "det_ar", "det_car"],
    )?;
    for s in stats {
        for (k, offset) in s.offsets().enumerate() {
            out.row([
                s.ticker.clone(),
                fmt_offset(offset),
                fmt_f64(s.ar[k]),
                fmt_f64(s.car[k]),
                fmt_f64(s.t_ar[k]),
                fmt_f64(s.t_car[k]),
                fmt_flag(s.detected_ar[k]).to_string(),
                fmt_flag(s.detected_car[k]).to_string(),
            ])?;
        }
    }
    out.finish()
}

pub fn read_event_stats(path: &Path) -> Result<Vec<EventStats>> {
    let table = read_table(
        path,
        &["ticker", "offset", "ar", "car", "t_ar", "t_car", "det_ar", "det_car"],
    )?;
    let mut out: Vec<EventStats> = Vec::new();
    for (line, rec) in &table.rows {
        let ticker = table.field(*line, rec, 0)?;
        let offset = table.i64(*line, rec, 1)?;
        if out.last().is_none_or(|s| s.ticker != ticker) {
            if offset > 0 {
                return Err(Error::parse(path, *line, "event window must start at a non-positive offset"));
            }
            out.push(EventStats {
                ticker: ticker.to_string(),
                half_window: offset.unsigned_abs() as usize,
                ar: vec![],
                car: vec![],
                t_ar: vec![],
                t_car: vec![],
                detected_ar: vec![],
                detected_car: vec![],
            });
        }
        let s = out.last_mut().expect("pushed above");
        s.ar.push(table.f64(*line, rec, 2)?);
        s.car.push(table.f64(*line, rec, 3)?);
        s.t_ar.push(table.f64(*line, rec, 4)?);
        s.t_car.push(table.f64(*line, rec, 5)?);
        s.detected_ar.push(table.flag(*line, rec, 6)?);
        s.detected_car.push(table.flag(*line, rec, 7)?);
    }
    for s in &out {
        if s.ar.len() != 2 * s.half_window + 1 {
            return Err(Error::parse(path, 0, format!("{}: incomplete event window", s.ticker)));
        }
    }
    Ok(out)
}

pub fn write_memberships(path: &Path, memberships: &[Vec<String>]) -> Result<()> {
    let mut out = CsvOut::create(path, &["portfolio", "ticker"])?;
    for (p, members) in memberships.iter().enumerate() {
        let label = portfolio_label(p);
        for t in members {
            out.row([label.as_str(), t.as_str()])?;
        }
    }
    out.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn fit(alpha: f64, beta: f64, sigma: f64) -> MarketModelFit {
        MarketModelFit {
            alpha_hat: alpha,
            beta_hat: beta,
            residuals: vec![],
            sigma_hat: sigma,
            dw_ratio: Some(2.0),
            n_obs: 250,
            perfect_fit: sigma == 0.0,
        }
    }

    #[test]
    fn abnormal_return_cases() {
        let x = [0.01, -0.02, 0.003, 0.0, 0.05];
        let ar = abnormal_returns(&fit(0.0, 1.0, 0.01), &x, &x).unwrap();
        assert!(ar.iter().all(|&a| a == 0.0));
        let ar = abnormal_returns(&fit(0.002, 1.0, 0.01), &x, &x).unwrap();
        for a in ar {
            assert!((a + 0.002).abs() < 1e-15);
        }
        assert!(abnormal_returns(&fit(0.0, 1.0, 0.01), &x[..3], &x).is_err());
    }

    #[test]
    fn abnormal_returns_match_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..11).map(|_| rng.sample(StandardNormal)).collect();
        let y: Vec<f64> = (0..11).map(|_| rng.sample(StandardNormal)).collect();
        let (a, b) = (0.0013, 0.87);
        let ar = abnormal_returns_with(a, b, &y, &x).unwrap();
        for k in 0..11 {
            assert!((ar[k] - (y[k] - a - b * x[k])).abs() < 1e-15);
        }
    }

    #[test]
    fn t_statistic_cases() {
        let sigma = 0.02;
        let (t_ar, _) = t_statistics(&[2.0 * sigma, 0.0], sigma).unwrap();
        assert!((t_ar[0] - 2.0).abs() < 1e-15);
        let c = 0.013;
        let (_, t_car) = t_statistics(&[c; 4], sigma).unwrap();
        assert!((t_car[3] - 2.0 * c / sigma).abs() < 1e-12);
        let (t_ar, t_car) = t_statistics(&[0.0; 11], sigma).unwrap();
        assert!(t_ar.iter().chain(&t_car).all(|&t| t == 0.0));
        assert!(matches!(t_statistics(&[0.1], 0.0), Err(Error::PerfectFit)));
    }

    #[test]
    fn critical_value_cases() {
        assert!((critical_value(0.05, 248).unwrap() - 1.9696).abs() < 5e-4);
        assert!((critical_value(0.05, 10_000_000).unwrap() - 1.96).abs() < 5e-4);
        assert_eq!(critical_value(1.0, 10).unwrap(), 0.0);
        assert!(critical_value(0.0, 10).is_err());
        assert!(critical_value(0.05, 0).is_err());
    }

    #[test]
    fn sorted_portfolio_sizes_and_ties() {
        let maw: BTreeMap<String, f64> = (0..40).map(|k| (format!("T{k:02}"), k as f64)).collect();
        let p = build_sorted_portfolios(&maw, 20).unwrap();
        assert!(p.iter().all(|g| g.len() == 2));
        assert_eq!(p[0], vec!["T39", "T38"]);

        let maw: BTreeMap<String, f64> = (0..41).map(|k| (format!("T{k:02}"), k as f64)).collect();
        let p = build_sorted_portfolios(&maw, 20).unwrap();
        let sizes: Vec<usize> = p.iter().map(Vec::len).collect();
        assert_eq!(sizes.iter().sum::<usize>(), 41);
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);

        let maw: BTreeMap<String, f64> = [("B", 0.5), ("A", 0.5), ("C", 0.9)]
            .into_iter()
            .map(|(t, w)| (t.to_string(), w))
            .collect();
        assert_eq!(rank_by_weight(&maw), vec!["C", "A", "B"]);
        assert!(build_sorted_portfolios(&maw, 4).is_err());
    }

    #[test]
    fn detection_percentage_counting() {
        let mk = |d0: bool| EventStats {
            ticker: "x".into(),
            half_window: 1,
            ar: vec![0.0; 3],
            car: vec![0.0; 3],
            t_ar: vec![0.0; 3],
            t_car: vec![0.0; 3],
            detected_ar: vec![false, d0, false],
            detected_car: vec![false; 3],
        };
        let t = detection_percentages(&[mk(true), mk(true), mk(false), mk(false)]);
        assert_eq!(t.offsets, vec![-1, 0, 1]);
        assert_eq!(t.pct_ar, vec![0.0, 50.0, 0.0]);
        assert_eq!(t.pct_car, vec![0.0; 3]);
        assert_eq!(t.denominator, 4);
    }

    fn random_stats(rng: &mut ChaCha8Rng, rule: &DetectionRule) -> EventStats {
        let x: Vec<f64> = (0..11).map(|_| 0.01 * rng.sample::<f64, _>(StandardNormal)).collect();
        let y: Vec<f64> = x.iter().map(|v| v + 0.02 * rng.sample::<f64, _>(StandardNormal)).collect();
        let sigma = rng.random_range(0.005..0.03);
        event_stats("r", &fit(0.0005, 1.0, sigma), &y, &x, rule).unwrap()
    }

    proptest! {
        #[test]
        fn telescoping_and_monotone_detection(seed in 0u64..100_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let loose = random_stats(&mut rng, &DetectionRule { theta: 0.05, threshold_override: None });
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let strict = random_stats(&mut rng, &DetectionRule { theta: 0.01, threshold_override: None });
            prop_assert!((loose.car[10] - loose.ar.iter().sum::<f64>()).abs() < 1e-12);
            for k in 1..11 {
                prop_assert!((loose.car[k] - loose.car[k - 1] - loose.ar[k]).abs() < 1e-12);
            }
            for k in 0..11 {
                prop_assert!(!strict.detected_ar[k] || loose.detected_ar[k]);
                prop_assert!(!strict.detected_car[k] || loose.detected_car[k]);
            }
        }

        #[test]
        fn positive_rescaling_keeps_t_values(seed in 0u64..10_000, scale in 0.1f64..50.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..80).map(|_| 0.01 * rng.sample::<f64, _>(StandardNormal)).collect();
            let y: Vec<f64> = x.iter().map(|v| 0.9 * v + 0.01 * rng.sample::<f64, _>(StandardNormal)).collect();
            let ys: Vec<f64> = y.iter().map(|v| v * scale).collect();
            let xs: Vec<f64> = x.iter().map(|v| v * scale).collect();
            let rule = DetectionRule::default();
            let f0 = fit_market_model(&y[..69], &x[..69]).unwrap();
            let f1 = fit_market_model(&ys[..69], &xs[..69]).unwrap();
            let s0 = event_stats("a", &f0, &y[69..], &x[69..], &rule).unwrap();
            let s1 = event_stats("a", &f1, &ys[69..], &xs[69..], &rule).unwrap();
            for k in 0..11 {
                prop_assert!((s0.t_ar[k] - s1.t_ar[k]).abs() < 1e-9);
                prop_assert!((s0.t_car[k] - s1.t_car[k]).abs() < 1e-9);
            }
            prop_assert_eq!(s0.detected_ar, s1.detected_ar);
            prop_assert_eq!(s0.detected_car, s1.detected_car);
        }
    }

    #[test]
    fn csv_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rule = DetectionRule::default();
        let stats: Vec<EventStats> = (0..3)
            .map(|k| {
                let mut s = random_stats(&mut rng, &rule);
                s.ticker = format!("S{k}");
                s
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("event_stats.csv");
        write_event_stats(&p, &stats).unwrap();
        assert_eq!(read_event_stats(&p).unwrap(), stats);

        let table = detection_percentages(&stats);
        let p = dir.path().join("detection_table.csv");
        write_detection_table(&p, &table).unwrap();
        assert_eq!(read_detection_table(&p).unwrap(), table);

        let order = vec!["S2".to_string(), "S0".into(), "missing".into(), "S1".into()];
        let grid = DetectionGrid::from_stats(&order, 5, |t| stats.iter().find(|s| s.ticker == t));
        let p = dir.path().join("grid.csv");
        write_detection_grid(&p, &grid).unwrap();
        assert_eq!(read_detection_grid(&p).unwrap(), grid);
    }
}
