//! Seeded synthetic markets with injected event effects and known truth.
//!
//! Every security follows `r = α + β·r_m + ε` on a weekday calendar. Groups
//! of securities additionally receive earnings shocks around the event, rate
//! sensitivity, a single estimation-window spike, or a fixed fund weight.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::csvio::{fmt_f64, CsvOut};
use crate::error::{Error, Result};
use crate::ingest::{CovariateTables, PriceObservation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupKind {
    Earnings,
    Rate,
    Spike,
    FundWeight,
}

impl GroupKind {
    pub fn label(self) -> &'static str {
        match self {
            GroupKind::Earnings => "earnings",
            GroupKind::Rate => "rate",
            GroupKind::Spike => "spike",
            GroupKind::FundWeight => "fund-weight",
        }
    }

    /// Whether membership implies a genuine effect inside the event window.
    pub fn has_event_effect(self) -> bool {
        matches!(self, GroupKind::Earnings | GroupKind::Rate)
    }

    pub fn parse(label: &str) -> Option<Self> {
        [GroupKind::Earnings, GroupKind::Rate, GroupKind::Spike, GroupKind::FundWeight]
            .into_iter()
            .find(|k| k.label() == label)
    }
}

/// One injected effect.
///
/// `magnitude` is the earnings shock, the correlation of residual noise with
/// rate changes, the spike return, or the member mAW, by kind. `timing` is an
/// event offset: the rate decision day for rate groups, the spike day for
/// spike groups. Earnings members announce at a uniform offset in −2..=+2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub kind: GroupKind,
    pub fraction: f64,
    pub magnitude: f64,
    #[serde(default)]
    pub timing: Option<i64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NoiseKind {
    #[default]
    Gaussian,
    /// Student-t scaled to unit variance.
    StudentT { dof: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSpec {
    pub n_securities: usize,
    /// Calendar length; returns exist from the second day on.
    pub n_days: usize,
    pub event_index: usize,
    pub est_len: usize,
    pub half_window: usize,
    pub start_date: NaiveDate,
    pub market_ticker: String,
    pub market_mean: f64,
    pub market_sigma: f64,
    pub alpha_range: (f64, f64),
    pub beta_range: (f64, f64),
    pub noise_sigma: f64,
    pub noise: NoiseKind,
    pub rate_start: f64,
    /// Std of daily rate changes.
    pub rate_sigma: f64,
    /// Size of the rate change on a rate group's decision day, in `rate_sigma`.
    pub rate_shock: f64,
    pub maw_range: (f64, f64),
    pub groups: Vec<GroupSpec>,
    pub seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            n_securities: 500,
            n_days: 300,
            event_index: 280,
            est_len: 250,
            half_window: 5,
            start_date: NaiveDate::from_ymd_opt(2015, 6, 1).expect("valid date"),
            market_ticker: "MARKET".into(),
            market_mean: 0.0003,
            market_sigma: 0.01,
            alpha_range: (-0.0005, 0.0005),
            beta_range: (0.5, 1.5),
            noise_sigma: 0.01,
            noise: NoiseKind::Gaussian,
            rate_start: 0.001,
            rate_sigma: 0.0001,
            rate_shock: 6.0,
            maw_range: (-0.5, 0.5),
            groups: Vec::new(),
            seed: 0,
        }
    }
}

/// Default offset of the spike inside the estimation window.
fn default_spike_offset(spec: &ScenarioSpec) -> i64 {
    -((spec.half_window + spec.est_len / 2) as i64)
}

impl ScenarioSpec {
    /// Weekday calendar of the scenario.
    pub fn calendar(&self) -> Vec<NaiveDate> {
        weekday_calendar(self.start_date, self.n_days)
    }

    pub fn event_date(&self) -> Result<NaiveDate> {
        self.calendar()
            .get(self.event_index)
            .copied()
            .ok_or_else(|| Error::InfeasibleScenario(format!("event index {} past the calendar", self.event_index)))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InfeasibleScenario(m));
        if self.n_securities == 0 {
            return bad("no securities".into());
        }
        if self.est_len < 3 {
            return bad(format!("estimation length {} below 3", self.est_len));
        }
        // the first calendar day has no return
        let required = self.est_len + self.half_window + 1;
        if self.event_index < required {
            return bad(format!(
                "event index {} leaves fewer than {} prior days",
                self.event_index, required
            ));
        }
        if self.event_index + self.half_window >= self.n_days {
            return bad(format!("event window runs past day {}", self.n_days));
        }
        for (name, v) in [
            ("market_sigma", self.market_sigma),
            ("noise_sigma", self.noise_sigma),
            ("rate_sigma", self.rate_sigma),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} {v} must be non-negative"));
            }
        }
        if self.beta_range.0 > self.beta_range.1 || self.alpha_range.0 > self.alpha_range.1 || self.maw_range.0 > self.maw_range.1 {
            return bad("empty parameter range".into());
        }
        if self.maw_range.1 > 1.0 {
            return bad("mAW above 1 gives negative fund weights".into());
        }
        if let NoiseKind::StudentT { dof } = self.noise {
            if dof <= 2.0 {
                return bad(format!("t noise needs dof > 2, got {dof}"));
            }
        }
        let total: f64 = self.groups.iter().map(|g| g.fraction).sum();
        if total > 1.0 + 1e-12 || self.groups.iter().any(|g| !(g.fraction >= 0.0)) {
            return bad(format!("group fractions sum to {total}"));
        }
        let est_first = self.event_index - self.half_window - self.est_len;
        for g in &self.groups {
            match g.kind {
                GroupKind::Rate => {
                    if !(0.0..=1.0).contains(&g.magnitude) {
                        return bad(format!("rate correlation {} outside [0, 1]", g.magnitude));
                    }
                    let t = g.timing.unwrap_or(0);
                    if t.unsigned_abs() as usize > self.half_window {
                        return bad(format!("rate decision offset {t} outside the event window"));
                    }
                }
                GroupKind::Spike => {
                    let t = g.timing.unwrap_or_else(|| default_spike_offset(self));
                    let pos = self.event_index as i64 + t;
                    if pos < est_first as i64 || pos >= (self.event_index - self.half_window) as i64 {
                        return bad(format!("spike offset {t} outside the estimation window"));
                    }
                }
                GroupKind::FundWeight => {
                    if g.magnitude > 1.0 {
                        return bad(format!("fund-weight mAW {} must not exceed 1", g.magnitude));
                    }
                }
                GroupKind::Earnings => {}
            }
        }
        let rate_days: Vec<i64> = self
            .groups
            .iter()
            .filter(|g| g.kind == GroupKind::Rate)
            .map(|g| g.timing.unwrap_or(0))
            .collect();
        let spike_days: Vec<i64> = self
            .groups
            .iter()
            .filter(|g| g.kind == GroupKind::Spike)
            .map(|g| g.timing.unwrap_or_else(|| default_spike_offset(self)))
            .collect();
        if spike_days.windows(2).any(|w| w[0] != w[1]) {
            return bad("spike groups must share one spike day".into());
        }
        if rate_days.windows(2).any(|w| w[0] != w[1]) {
            return bad("rate groups must share one decision day".into());
        }
        Ok(())
    }
}

/// Injected effect of one security.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthRow {
    pub ticker: String,
    pub group: Option<GroupKind>,
    pub magnitude: f64,
    /// Event offset of the effect.
    pub timing: Option<i64>,
    pub alpha: f64,
    pub beta: f64,
    pub maw: f64,
}

/// A generated market with its input tables and truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub calendar: Vec<NaiveDate>,
    pub tickers: Vec<String>,
    /// Market returns per calendar day; NaN on the first day.
    pub market_returns: Vec<f64>,
    /// Security returns, one row per ticker.
    pub returns: Vec<Vec<f64>>,
    pub rate_levels: Vec<f64>,
    pub w_market: Vec<f64>,
    pub w_fund: Vec<f64>,
    pub announcements: Vec<Option<NaiveDate>>,
    pub truth: Vec<TruthRow>,
}

fn weekday_calendar(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut d = start;
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d += Duration::days(1);
    }
    out
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

struct Noise {
    kind: NoiseKind,
}

impl Noise {
    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self.kind {
            NoiseKind::Gaussian => rng.sample(StandardNormal),
            NoiseKind::StudentT { dof } => {
                let t = StudentT::new(dof).expect("validated dof");
                t.sample(rng) * ((dof - 2.0) / dof).sqrt()
            }
        }
    }
}

pub fn generate_scenario(spec: &ScenarioSpec) -> Result<Scenario> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n_securities;
    let days = spec.n_days;
    let ev = spec.event_index;
    let est = ev - spec.half_window - spec.est_len..ev - spec.half_window;
    let calendar = spec.calendar();
    let noise = Noise { kind: spec.noise };

    let mut market = vec![f64::NAN; days];
    for r in market.iter_mut().skip(1) {
        *r = spec.market_mean + spec.market_sigma * rng.sample::<f64, _>(StandardNormal);
    }
    let spike_group = spec.groups.iter().find(|g| g.kind == GroupKind::Spike);
    let spike_day = spike_group.map(|g| (ev as i64 + g.timing.unwrap_or_else(|| default_spike_offset(spec))) as usize);
    if let Some(p) = spike_day {
        // market return on the spike day equals the window mean exactly
        let others: f64 = est.clone().filter(|&t| t != p).map(|t| market[t]).sum();
        market[p] = others / (spec.est_len - 1) as f64;
    }

    let rate_day = spec
        .groups
        .iter()
        .find(|g| g.kind == GroupKind::Rate)
        .map(|g| (ev as i64 + g.timing.unwrap_or(0)) as usize);
    let mut rate_change = vec![0.0; days];
    for dr in rate_change.iter_mut().skip(1) {
        let z: f64 = rng.sample(StandardNormal);
        *dr = spec.rate_sigma * z;
    }
    if let Some(d) = rate_day {
        rate_change[d] = spec.rate_shock * spec.rate_sigma;
    }
    let mut rate_levels = vec![spec.rate_start; days];
    for t in 1..days {
        rate_levels[t] = rate_levels[t - 1] + rate_change[t];
    }

    let tickers: Vec<String> = (1..=n).map(|k| format!("S{k:04}")).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut membership: Vec<Option<usize>> = vec![None; n];
    let mut cursor = 0;
    for (g, group) in spec.groups.iter().enumerate() {
        let count = ((group.fraction * n as f64).round() as usize).min(n - cursor);
        for &k in &order[cursor..cursor + count] {
            membership[k] = Some(g);
        }
        cursor += count;
    }

    let mut returns = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    let mut w_market = Vec::with_capacity(n);
    let mut w_fund = Vec::with_capacity(n);
    let mut announcements = Vec::with_capacity(n);
    for k in 0..n {
        let alpha = uniform(&mut rng, spec.alpha_range);
        let beta = uniform(&mut rng, spec.beta_range);
        let mut maw = uniform(&mut rng, spec.maw_range);
        let size: f64 = rng.sample(StandardNormal);
        let far_gap = rng.random_range(40..=80usize);
        let near_offset = rng.random_range(-2..=2i64);
        let group = membership[k].map(|g| &spec.groups[g]);
        let mut row = vec![f64::NAN; days];
        let rate_load = match group {
            Some(g) if g.kind == GroupKind::Rate => g.magnitude,
            _ => 0.0,
        };
        let idio = (1.0 - rate_load * rate_load).sqrt();
        for t in 1..days {
            let e = noise.draw(&mut rng);
            let u = if spec.rate_sigma > 0.0 { rate_change[t] / spec.rate_sigma } else { 0.0 };
            row[t] = alpha + beta * market[t] + spec.noise_sigma * (rate_load * u + idio * e);
        }
        let mut announce = Some(calendar[ev.saturating_sub(far_gap)]);
        let mut timing = None;
        let mut magnitude = 0.0;
        if let Some(g) = group {
            magnitude = g.magnitude;
            match g.kind {
                GroupKind::Earnings => {
                    let d = (ev as i64 + near_offset) as usize;
                    row[d] += g.magnitude;
                    announce = Some(calendar[d]);
                    timing = Some(near_offset);
                }
                GroupKind::Rate => timing = Some(rate_day.expect("rate day") as i64 - ev as i64),
                GroupKind::Spike => {
                    let p = spike_day.expect("spike day");
                    row[p] += g.magnitude;
                    timing = Some(p as i64 - ev as i64);
                }
                GroupKind::FundWeight => maw = g.magnitude,
            }
        }
        let wm = size.exp();
        w_market.push(wm);
        w_fund.push(wm * (1.0 - maw));
        announcements.push(announce);
        returns.push(row);
        truth.push(TruthRow {
            ticker: tickers[k].clone(),
            group: group.map(|g| g.kind),
            magnitude,
            timing,
            alpha,
            beta,
            maw,
        });
    }
    let total: f64 = w_market.iter().sum();
    for k in 0..n {
        w_market[k] /= total;
        w_fund[k] /= total;
    }
    Ok(Scenario {
        spec: spec.clone(),
        calendar,
        tickers,
        market_returns: market,
        returns,
        rate_levels,
        w_market,
        w_fund,
        announcements,
        truth,
    })
}

fn closes(returns: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(returns.len());
    let mut p = 100.0;
    out.push(p);
    for r in &returns[1..] {
        p *= 1.0 + r;
        out.push(p);
    }
    out
}

impl Scenario {
    pub fn event_date(&self) -> NaiveDate {
        self.calendar[self.spec.event_index]
    }

    /// Closing prices starting at 100, market series first.
    pub fn price_observations(&self) -> Result<Vec<PriceObservation>> {
        let mut obs = Vec::with_capacity((self.tickers.len() + 1) * self.calendar.len());
        let series = std::iter::once((&self.spec.market_ticker, &self.market_returns)).chain(self.tickers.iter().zip(&self.returns));
        for (ticker, returns) in series {
            let prices = closes(returns);
            if let Some(p) = prices.iter().find(|p| !(**p > 0.0 && p.is_finite())) {
                return Err(Error::InfeasibleScenario(format!("{ticker}: non-positive price {p}")));
            }
            for (date, close) in self.calendar.iter().zip(prices) {
                obs.push(PriceObservation {
                    date: *date,
                    ticker: ticker.clone(),
                    close,
                });
            }
        }
        Ok(obs)
    }

    pub fn covariate_tables(&self) -> CovariateTables {
        CovariateTables {
            market_weight: self.tickers.iter().cloned().zip(self.w_market.iter().copied()).collect(),
            fund_weight: self.tickers.iter().cloned().zip(self.w_fund.iter().copied()).collect(),
            announce_date: self
                .tickers
                .iter()
                .zip(&self.announcements)
                .filter_map(|(t, a)| a.map(|d| (t.clone(), d)))
                .collect(),
            rate_series: self.calendar.iter().copied().zip(self.rate_levels.iter().copied()).collect(),
        }
    }

    /// Writes `prices.csv`, `weights.csv`, `announcements.csv`, `rates.csv`
    /// and `truth.csv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut out = CsvOut::create(&dir.join("prices.csv"), &["date", "ticker", "close"])?;
        for o in self.price_observations()? {
            out.row([o.date.to_string(), o.ticker, fmt_f64(o.close)])?;
        }
        out.finish()?;

        let mut out = CsvOut::create(&dir.join("weights.csv"), &["ticker", "w_market", "w_gpif"])?;
        for k in 0..self.tickers.len() {
            out.row([self.tickers[k].clone(), fmt_f64(self.w_market[k]), fmt_f64(self.w_fund[k])])?;
        }
        out.finish()?;

        let mut out = CsvOut::create(&dir.join("announcements.csv"), &["ticker", "announce_date"])?;
        for (t, a) in self.tickers.iter().zip(&self.announcements) {
            out.row([t.clone(), a.map(|d| d.to_string()).unwrap_or_default()])?;
        }
        out.finish()?;

        let mut out = CsvOut::create(&dir.join("rates.csv"), &["date", "rate"])?;
        for (d, r) in self.calendar.iter().zip(&self.rate_levels) {
            out.row([d.to_string(), fmt_f64(*r)])?;
        }
        out.finish()?;

        write_truth(&dir.join("truth.csv"), &self.truth)
    }
}

pub fn write_truth(path: &Path, truth: &[TruthRow]) -> Result<()> {
    let mut out = CsvOut::create(path, &["ticker", "group", "magnitude", "timing", "alpha", "beta", "maw"])?;
    for t in truth {
        out.row([
            t.ticker.clone(),
            t.group.map_or("none", GroupKind::label).to_string(),
            fmt_f64(t.magnitude),
            t.timing.map(|o| o.to_string()).unwrap_or_default(),
            fmt_f64(t.alpha),
            fmt_f64(t.beta),
            fmt_f64(t.maw),
        ])?;
    }
    out.finish()
}

pub fn read_truth(path: &Path) -> Result<Vec<TruthRow>> {
    let table = crate::csvio::read_table(path, &["ticker", "group", "magnitude", "timing", "alpha", "beta", "maw"])?;
    let mut rows = Vec::new();
    for (line, rec) in &table.rows {
        let label = table.field(*line, rec, 1)?;
        let group = if label == "none" {
            None
        } else {
            Some(GroupKind::parse(label).ok_or_else(|| Error::parse(path, *line, format!("unknown group `{label}`")))?)
        };
        let timing = match table.field(*line, rec, 3)? {
            "" => None,
            _ => Some(table.i64(*line, rec, 3)?),
        };
        rows.push(TruthRow {
            ticker: table.field(*line, rec, 0)?.to_string(),
            group,
            magnitude: table.f64(*line, rec, 2)?,
            timing,
            alpha: table.f64(*line, rec, 4)?,
            beta: table.f64(*line, rec, 5)?,
            maw: table.f64(*line, rec, 6)?,
        });
    }
    Ok(rows)
}

/// Detection counts for one group; `None` is the unaffected remainder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionRow {
    pub group: Option<GroupKind>,
    pub members: usize,
    pub true_positive: usize,
    pub false_positive: usize,
    pub false_negative: usize,
}

/// Detections of groups with a genuine event effect count as true
/// positives; detections of spike, fund-weight and unaffected securities
/// count as false positives. Securities absent from `detections` are ignored.
pub fn ground_truth_confusion(detections: &BTreeMap<String, bool>, truth: &[TruthRow]) -> Vec<ConfusionRow> {
    let mut rows: BTreeMap<Option<GroupKind>, ConfusionRow> = BTreeMap::new();
    for t in truth {
        let Some(&hit) = detections.get(&t.ticker) else {
            continue;
        };
        let row = rows.entry(t.group).or_insert(ConfusionRow {
            group: t.group,
            members: 0,
            true_positive: 0,
            false_positive: 0,
            false_negative: 0,
        });
        row.members += 1;
        let real = t.group.is_some_and(GroupKind::has_event_effect);
        match (real, hit) {
            (true, true) => row.true_positive += 1,
            (true, false) => row.false_negative += 1,
            (false, true) => row.false_positive += 1,
            (false, false) => {}
        }
    }
    rows.into_values().collect()
}

pub fn write_confusion(path: &Path, rows: &[ConfusionRow]) -> Result<()> {
    let mut out = CsvOut::create(path, &["group", "members", "true_positive", "false_positive", "false_negative"])?;
    for r in rows {
        out.row([
            r.group.map_or("none", GroupKind::label).to_string(),
            r.members.to_string(),
            r.true_positive.to_string(),
            r.false_positive.to_string(),
            r.false_negative.to_string(),
        ])?;
    }
    out.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{align_windows, panel_from_prices, ReturnKind};
    use crate::market_model::fit_all;

    fn small(groups: Vec<GroupSpec>) -> ScenarioSpec {
        ScenarioSpec {
            n_securities: 40,
            groups,
            seed: 3,
            ..ScenarioSpec::default()
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = small(vec![GroupSpec {
            kind: GroupKind::Earnings,
            fraction: 0.25,
            magnitude: 0.05,
            timing: None,
        }]);
        let a = generate_scenario(&spec).unwrap();
        let b = generate_scenario(&spec).unwrap();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
        let c = generate_scenario(&ScenarioSpec { seed: 4, ..spec }).unwrap();
        assert_ne!(a.returns, c.returns);
    }

    #[test]
    fn group_sizes_follow_fractions() {
        let spec = small(vec![
            GroupSpec {
                kind: GroupKind::Earnings,
                fraction: 0.15,
                magnitude: 0.05,
                timing: None,
            },
            GroupSpec {
                kind: GroupKind::Spike,
                fraction: 0.1,
                magnitude: 0.5,
                timing: None,
            },
        ]);
        let s = generate_scenario(&spec).unwrap();
        let count = |k| s.truth.iter().filter(|t| t.group == Some(k)).count();
        assert!((count(GroupKind::Earnings) as f64 - 6.0).abs() <= 1.0);
        assert!((count(GroupKind::Spike) as f64 - 4.0).abs() <= 1.0);
        for t in s.truth.iter().filter(|t| t.group == Some(GroupKind::Earnings)) {
            assert!((-2..=2).contains(&t.timing.unwrap()));
        }
    }

    #[test]
    fn infeasible_specs_rejected() {
        let over = small(vec![
            GroupSpec {
                kind: GroupKind::Earnings,
                fraction: 0.7,
                magnitude: 0.05,
                timing: None,
            },
            GroupSpec {
                kind: GroupKind::Rate,
                fraction: 0.4,
                magnitude: 0.5,
                timing: None,
            },
        ]);
        assert!(matches!(generate_scenario(&over), Err(Error::InfeasibleScenario(_))));
        let short = ScenarioSpec {
            event_index: 200,
            ..ScenarioSpec::default()
        };
        assert!(generate_scenario(&short).is_err());
        let late_spike = small(vec![GroupSpec {
            kind: GroupKind::Spike,
            fraction: 0.1,
            magnitude: 0.5,
            timing: Some(-2),
        }]);
        assert!(generate_scenario(&late_spike).is_err());
    }

    #[test]
    fn spike_day_market_equals_window_mean() {
        let spec = small(vec![GroupSpec {
            kind: GroupKind::Spike,
            fraction: 0.1,
            magnitude: 0.5,
            timing: Some(-100),
        }]);
        let s = generate_scenario(&spec).unwrap();
        let ev = spec.event_index;
        let est = ev - 5 - 250..ev - 5;
        let mean = est.clone().map(|t| s.market_returns[t]).sum::<f64>() / 250.0;
        assert!((s.market_returns[ev - 100] - mean).abs() < 1e-15);
    }

    #[test]
    fn noiseless_null_is_model_consistent() {
        let spec = ScenarioSpec {
            n_securities: 10,
            noise_sigma: 0.0,
            ..ScenarioSpec::default()
        };
        let s = generate_scenario(&spec).unwrap();
        let load = panel_from_prices(&s.price_observations().unwrap(), 1.0, ReturnKind::Simple).unwrap();
        let w = align_windows(&load.panel, s.event_date(), 250, 5).unwrap();
        let fits = fit_all(&load.panel, &w, "MARKET").unwrap();
        assert_eq!(fits.fits.len(), 10);
        for (t, fit) in &fits.fits {
            let truth = s.truth.iter().find(|r| &r.ticker == t).unwrap();
            assert!(fit.perfect_fit);
            assert!((fit.alpha_hat - truth.alpha).abs() < 1e-12);
            assert!((fit.beta_hat - truth.beta).abs() < 1e-10);
        }
    }

    #[test]
    fn confusion_counts() {
        let truth: Vec<TruthRow> = [None, Some(GroupKind::Spike), Some(GroupKind::Spike), Some(GroupKind::Earnings)]
            .into_iter()
            .enumerate()
            .map(|(k, g)| TruthRow {
                ticker: format!("T{k}"),
                group: g,
                magnitude: 0.0,
                timing: None,
                alpha: 0.0,
                beta: 1.0,
                maw: 0.0,
            })
            .collect();
        let det: BTreeMap<String, bool> = [("T0", false), ("T1", true), ("T2", true), ("T3", true)]
            .into_iter()
            .map(|(t, d)| (t.to_string(), d))
            .collect();
        let rows = ground_truth_confusion(&det, &truth);
        let spike = rows.iter().find(|r| r.group == Some(GroupKind::Spike)).unwrap();
        assert_eq!(spike.false_positive, 2);
        let earn = rows.iter().find(|r| r.group == Some(GroupKind::Earnings)).unwrap();
        assert_eq!((earn.true_positive, earn.false_positive), (1, 0));
        let none = rows.iter().find(|r| r.group.is_none()).unwrap();
        assert_eq!(none.false_positive, 0);
    }

    #[test]
    fn csv_bundle_loads_back() {
        let spec = small(vec![GroupSpec {
            kind: GroupKind::Rate,
            fraction: 0.2,
            magnitude: 0.8,
            timing: None,
        }]);
        let s = generate_scenario(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        s.write(dir.path()).unwrap();
        let tables = crate::ingest::load_covariates(
            &dir.path().join("weights.csv"),
            &dir.path().join("announcements.csv"),
            &dir.path().join("rates.csv"),
        )
        .unwrap();
        assert_eq!(tables, s.covariate_tables());
        assert_eq!(read_truth(&dir.path().join("truth.csv")).unwrap(), s.truth);
        let load = crate::ingest::load_returns_panel(&dir.path().join("prices.csv"), 1.0).unwrap();
        assert_eq!(load.panel.n_securities(), 41);
    }
}
