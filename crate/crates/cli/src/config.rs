//! Run configuration read from TOML, with command-line overrides.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use eventsom::event_study::StatKind;
use eventsom::report::{Palette, Scaling};
use eventsom::som::SomParams;
use eventsom::synth::ScenarioSpec;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputPaths {
    pub prices: PathBuf,
    pub weights: PathBuf,
    pub announcements: PathBuf,
    pub rates: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignificanceSpec {
    pub kind: StatKindName,
    pub offset: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatKindName {
    Ar,
    Car,
}

impl From<StatKindName> for StatKind {
    fn from(k: StatKindName) -> Self {
        match k {
            StatKindName::Ar => StatKind::Ar,
            StatKindName::Car => StatKind::Car,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    pub name: String,
    pub cells: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// Feature columns drawn as component and empirical planes; empty means all.
    pub planes: Vec<String>,
    pub significance: Vec<SignificanceSpec>,
    pub bins: usize,
    pub palette: Palette,
    pub scaling: Scaling,
    pub regions: Vec<RegionSpec>,
    /// Securities whose cumulative residual paths are written.
    pub residual_tickers: Vec<String>,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            planes: Vec::new(),
            significance: vec![
                SignificanceSpec {
                    kind: StatKindName::Car,
                    offset: 5,
                },
                SignificanceSpec {
                    kind: StatKindName::Ar,
                    offset: 0,
                },
            ],
            bins: 10,
            palette: Palette::Viridis,
            scaling: Scaling::Quantile,
            regions: Vec::new(),
            residual_tickers: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub inputs: Option<InputPaths>,
    pub scenario: Option<ScenarioSpec>,
    /// Required with `inputs`; taken from the scenario calendar otherwise.
    pub event_date: Option<NaiveDate>,
    pub est_len: usize,
    pub half_window: usize,
    pub theta: f64,
    pub quantile_count: usize,
    pub min_coverage: f64,
    pub log_returns: bool,
    pub market_ticker: String,
    pub same_day_omega: f64,
    /// Overrides the scenario and map seeds when set.
    pub seed: Option<u64>,
    pub som: SomParams,
    pub report: ReportConfig,
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            inputs: None,
            scenario: None,
            event_date: None,
            est_len: 250,
            half_window: 5,
            theta: 0.05,
            quantile_count: 20,
            min_coverage: 0.9,
            log_returns: false,
            market_ticker: "MARKET".into(),
            same_day_omega: eventsom::features::SAME_DAY_OMEGA,
            seed: None,
            som: SomParams::default(),
            report: ReportConfig::default(),
            output: None,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub theta: Option<f64>,
}

impl RunConfig {
    /// Parses a config file; relative input and output paths resolve against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(inputs) = cfg.inputs.as_mut() {
            for p in [
                &mut inputs.prices,
                &mut inputs.weights,
                &mut inputs.announcements,
                &mut inputs.rates,
            ] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        if let Some(out) = cfg.output.as_mut() {
            if out.is_relative() {
                *out = base.join(&*out);
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(out) = &o.out {
            self.output = Some(out.clone());
        }
        if let Some(seed) = o.seed {
            self.seed = Some(seed);
        }
        if let Some(theta) = o.theta {
            self.theta = theta;
        }
    }

    /// Pushes shared settings into the scenario and map parameters.
    pub fn resolve(&mut self) {
        if let Some(seed) = self.seed {
            self.som.seed = seed;
            if let Some(s) = self.scenario.as_mut() {
                s.seed = seed;
            }
        }
        if let Some(s) = self.scenario.as_mut() {
            s.est_len = self.est_len;
            s.half_window = self.half_window;
            s.market_ticker = self.market_ticker.clone();
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |m: String| Err(CliError::Validation(m));
        match (&self.inputs, &self.scenario) {
            (Some(_), Some(_)) => return fail("give either [inputs] or [scenario], not both".into()),
            (None, None) => return fail("one of [inputs] or [scenario] is required".into()),
            (Some(_), None) if self.event_date.is_none() => {
                return fail("event_date is required with [inputs]".into())
            }
            _ => {}
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return fail(format!("theta {} outside (0, 1]", self.theta));
        }
        if self.est_len < 3 {
            return fail(format!("est_len {} below 3", self.est_len));
        }
        if self.quantile_count == 0 {
            return fail("quantile_count must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.min_coverage) {
            return fail(format!("min_coverage {} outside [0, 1]", self.min_coverage));
        }
        if self.report.bins < 2 {
            return fail(format!("report bins {} below 2", self.report.bins));
        }
        for s in &self.report.significance {
            if s.offset.unsigned_abs() as usize > self.half_window {
                return fail(format!("significance offset {} outside the event window", s.offset));
            }
        }
        let names = eventsom::features::column_names(self.half_window);
        for p in &self.report.planes {
            if !names.contains(p) {
                return fail(format!("unknown plane column `{p}`"));
            }
        }
        for r in &self.report.regions {
            if r.name.is_empty() || !r.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                return fail(format!("region name `{}` must be alphanumeric", r.name));
            }
            if let Some(&(i, j)) = r.cells.iter().find(|&&(i, j)| i >= self.som.rows || j >= self.som.cols) {
                return fail(format!("region {}: cell ({i}, {j}) outside the map", r.name));
            }
        }
        self.som.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        if let Some(s) = &self.scenario {
            s.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        }
        if self.output.is_none() {
            return fail("no output directory (set `output` or pass --out)".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_published_parameters() {
        let c = RunConfig::default();
        assert_eq!((c.est_len, c.half_window, c.theta, c.quantile_count), (250, 5, 0.05, 20));
        assert_eq!((c.som.rows, c.som.cols, c.som.lambda_init, c.som.iterations), (20, 20, 0.9, 2000));
        assert_eq!(c.som.xi_init, 0.001);
    }

    #[test]
    fn both_sources_rejected() {
        let text = r#"
            output = "out"
            event_date = "2016-07-29"
            [inputs]
            prices = "p.csv"
            weights = "w.csv"
            announcements = "a.csv"
            rates = "r.csv"
            [scenario]
            n_securities = 10
        "#;
        let c = RunConfig::parse(text).unwrap();
        assert!(matches!(c.validate(), Err(CliError::Validation(_))));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::parse("thetta = 0.1").is_err());
    }

    #[test]
    fn overrides_win() {
        let mut c = RunConfig::parse("theta = 0.1\nseed = 3\n[scenario]\nseed = 1").unwrap();
        c.apply(&Overrides {
            out: Some("x".into()),
            seed: Some(9),
            theta: Some(0.01),
        });
        c.resolve();
        assert_eq!(c.theta, 0.01);
        assert_eq!(c.scenario.as_ref().unwrap().seed, 9);
        assert_eq!(c.som.seed, 9);
        c.validate().unwrap();
    }
}
