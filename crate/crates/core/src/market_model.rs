//! Single-factor market model estimated by ordinary least squares.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;

use crate::csvio::{fmt_f64, read_table, CsvOut};
use crate::error::{Error, Result};
use crate::ingest::{Exclusion, ReturnsPanel, WindowIndex};

/// Residual scale, relative to the largest absolute return, at or below which
/// a fit is treated as exact.
pub const PERFECT_FIT_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct MarketModelFit {
    pub alpha_hat: f64,
    pub beta_hat: f64,
    /// Residuals in time order over the estimation window.
    pub residuals: Vec<f64>,
    /// sqrt(SSR / (n - 2)).
    pub sigma_hat: f64,
    /// `None` for perfect fits, where the ratio is undefined.
    pub dw_ratio: Option<f64>,
    pub n_obs: usize,
    pub perfect_fit: bool,
}

impl MarketModelFit {
    /// Degrees of freedom left after estimating intercept and slope.
    pub fn dof(&self) -> usize {
        self.n_obs - 2
    }

    pub fn predict(&self, market_return: f64) -> f64 {
        self.alpha_hat + self.beta_hat * market_return
    }
}

/// Regresses `y` on `x` with an intercept using centered sums.
pub fn fit_market_model(y: &[f64], x: &[f64]) -> Result<MarketModelFit> {
    if y.len() != x.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::InsufficientData {
            what: "observations for the market model",
            required: 3,
            available: n,
        });
    }
    let nf = n as f64;
    let x_mean = x.iter().sum::<f64>() / nf;
    let y_mean = y.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (&xi, &yi) in x.iter().zip(y) {
        let dx = xi - x_mean;
        sxx += dx * dx;
        sxy += dx * (yi - y_mean);
    }
    let x_scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if sxx <= nf * (16.0 * f64::EPSILON * x_scale).powi(2) {
        return Err(Error::DegenerateRegressor);
    }
    let beta_hat = sxy / sxx;
    let alpha_hat = y_mean - beta_hat * x_mean;
    let residuals: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| yi - (alpha_hat + beta_hat * xi))
        .collect();
    let ssr: f64 = residuals.iter().map(|e| e * e).sum();
    let sigma_hat = (ssr / (nf - 2.0)).sqrt();
    let y_scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let perfect_fit = sigma_hat <= PERFECT_FIT_RTOL * y_scale;
    let dw_ratio = if perfect_fit {
        None
    } else {
        durbin_watson(&residuals).ok()
    };
    Ok(MarketModelFit {
        alpha_hat,
        beta_hat,
        residuals,
        sigma_hat,
        dw_ratio,
        n_obs: n,
        perfect_fit,
    })
}

/// Σ(e_t − e_{t−1})² / Σe_t².
pub fn durbin_watson(residuals: &[f64]) -> Result<f64> {
    if residuals.len() < 2 {
        return Err(Error::InsufficientData {
            what: "residuals for Durbin-Watson",
            required: 2,
            available: residuals.len(),
        });
    }
    let denom: f64 = residuals.iter().map(|e| e * e).sum();
    if denom == 0.0 {
        return Err(Error::UndefinedDurbinWatson);
    }
    let num: f64 = residuals.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    Ok(num / denom)
}

/// Market-model fits for every eligible security of a panel.
#[derive(Debug, Clone, PartialEq)]
pub struct FitSet {
    pub market_ticker: String,
    pub fits: BTreeMap<String, MarketModelFit>,
    pub excluded: Vec<Exclusion>,
}

/// Fits every security except the benchmark. Securities with a missing return
/// anywhere in the estimation or event window are excluded.
pub fn fit_all(panel: &ReturnsPanel, windows: &WindowIndex, market_ticker: &str) -> Result<FitSet> {
    let m = panel
        .index_of(market_ticker)
        .ok_or_else(|| Error::MarketIncomplete {
            ticker: market_ticker.to_string(),
            reason: "not in panel".into(),
        })?;
    let x = panel
        .complete_slice(m, windows.estimation_range.clone())
        .ok_or_else(|| Error::MarketIncomplete {
            ticker: market_ticker.to_string(),
            reason: "missing return in estimation window".into(),
        })?;
    if panel.complete_slice(m, windows.event_range()).is_none() {
        return Err(Error::MarketIncomplete {
            ticker: market_ticker.to_string(),
            reason: "missing return in event window".into(),
        });
    }

    let outcomes: Vec<Result<(String, std::result::Result<MarketModelFit, Exclusion>)>> = (0
        ..panel.n_securities())
        .into_par_iter()
        .filter(|&i| i != m)
        .map(|i| {
            let ticker = panel.tickers()[i].clone();
            let Some(y) = panel.complete_slice(i, windows.estimation_range.clone()) else {
                let ex = Exclusion::new(&ticker, "missing return in estimation window");
                return Ok((ticker, Err(ex)));
            };
            if panel.complete_slice(i, windows.event_range()).is_none() {
                let ex = Exclusion::new(&ticker, "missing return in event window");
                return Ok((ticker, Err(ex)));
            }
            let fit = fit_market_model(y, x)?;
            Ok((ticker, Ok(fit)))
        })
        .collect();

    let mut fits = BTreeMap::new();
    let mut excluded = Vec::new();
    for outcome in outcomes {
        match outcome? {
            (ticker, Ok(fit)) => {
                fits.insert(ticker, fit);
            }
            (_, Err(ex)) => excluded.push(ex),
        }
    }
    Ok(FitSet {
        market_ticker: market_ticker.to_string(),
        fits,
        excluded,
    })
}

/// One row of `fits.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct FitRecord {
    pub ticker: String,
    pub alpha: f64,
    pub beta: f64,
    pub sigma: f64,
    pub dw: Option<f64>,
    pub n: usize,
    pub perfect_fit: bool,
}

impl FitRecord {
    pub fn from_fit(ticker: &str, fit: &MarketModelFit) -> Self {
        FitRecord {
            ticker: ticker.to_string(),
            alpha: fit.alpha_hat,
            beta: fit.beta_hat,
            sigma: fit.sigma_hat,
            dw: fit.dw_ratio,
            n: fit.n_obs,
            perfect_fit: fit.perfect_fit,
        }
    }

    /// Residuals of this fit against the supplied estimation-window series.
    pub fn residuals(&self, y: &[f64], x: &[f64]) -> Vec<f64> {
        y.iter()
            .zip(x)
            .map(|(&yi, &xi)| yi - (self.alpha + self.beta * xi))
            .collect()
    }
}

pub fn write_fits(path: &Path, fits: &FitSet) -> Result<()> {
    let mut out = CsvOut::create(path, &["ticker", "alpha", "beta", "sigma", "dw", "n", "flags"])?;
    for (ticker, fit) in &fits.fits {
        let rec = FitRecord::from_fit(ticker, fit);
        out.row([
            rec.ticker.clone(),
            fmt_f64(rec.alpha),
            fmt_f64(rec.beta),
            fmt_f64(rec.sigma),
            rec.dw.map(fmt_f64).unwrap_or_default(),
            rec.n.to_string(),
            if rec.perfect_fit { "perfect_fit".into() } else { String::new() },
        ])?;
    }
    out.finish()
}

pub fn read_fits(path: &Path) -> Result<Vec<FitRecord>> {
    let table = read_table(path, &["ticker", "alpha", "beta", "sigma", "dw", "n", "flags"])?;
    table
        .rows
        .iter()
        .map(|(line, rec)| {
            let dw = match table.field(*line, rec, 4)? {
                "" => None,
                _ => Some(table.f64(*line, rec, 4)?),
            };
            Ok(FitRecord {
                ticker: table.field(*line, rec, 0)?.to_string(),
                alpha: table.f64(*line, rec, 1)?,
                beta: table.f64(*line, rec, 2)?,
                sigma: table.f64(*line, rec, 3)?,
                dw,
                n: table.usize(*line, rec, 5)?,
                perfect_fit: table.field(*line, rec, 6)?.split(';').any(|f| f == "perfect_fit"),
            })
        })
        .collect()
}
