//! Pipeline stages. Each stage reads earlier outputs from the output
//! directory, writes into a staging directory, and moves its files into place
//! only when it succeeds.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use eventsom::event_study::{
    build_sorted_portfolios, critical_value, detection_percentages, portfolio_event_study, rank_by_weight,
    read_event_stats, study_securities, write_detection_grid, write_detection_table, write_event_stats,
    write_memberships, DetectionGrid, DetectionRule, EventStats,
};
use eventsom::features::{
    assemble_feature_matrix, column_slug, compute_covariates, modified_active_weight, read_features, write_features,
};
use eventsom::ingest::{
    align_windows, load_covariates, load_returns_panel_with, write_exclusions, CovariateTables, Exclusion,
    PanelLoad, ReturnKind, WindowIndex,
};
use eventsom::market_model::{fit_all, read_fits, write_fits, FitRecord};
use eventsom::report::{
    component_plane, cumulative_residual_plot_data, empirical_plane, region_report, render_heatmap,
    significance_plane, write_plane, write_region_report, write_residual_path, HeatmapStyle,
};
use eventsom::som::{read_som, train, write_som};
use eventsom::synth::{generate_scenario, ground_truth_confusion, read_truth, write_confusion};

use crate::config::RunConfig;
use crate::summary::write_summary;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Generate,
    Study,
    Som,
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Generate => "generate",
            Stage::Study => "study",
            Stage::Som => "som",
            Stage::Report => "report",
        }
    }
}

pub const SUMMARY_FILE: &str = "run_summary.json";
const STAGING_DIR: &str = ".staging";
const SCENARIO_DIR: &str = "inputs";

/// Output directory plus the staging area of the running command.
struct Workspace {
    out: PathBuf,
    staging: PathBuf,
}

impl Workspace {
    /// Path of an earlier artifact, preferring one staged by this command.
    fn input(&self, name: &str, producer: Stage) -> Result<PathBuf, CliError> {
        for dir in [&self.staging, &self.out] {
            let p = dir.join(name);
            if p.is_file() {
                return Ok(p);
            }
        }
        Err(CliError::MissingArtifact {
            file: name.to_string(),
            stage: producer.name(),
        })
    }

    fn output(&self, name: &str) -> PathBuf {
        self.staging.join(name)
    }

    fn commit(&self) -> Result<(), CliError> {
        for rel in list_files(&self.staging)? {
            let dest = self.out.join(&rel);
            if let Some(parent) = dest.parent() {
                fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
            }
            fs::rename(self.staging.join(&rel), &dest).map_err(|e| CliError::io(&dest, e))?;
        }
        fs::remove_dir_all(&self.staging).map_err(|e| CliError::io(&self.staging, e))
    }
}

/// Relative paths of all files under `root`, sorted.
pub fn list_files(root: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    let mut stack = vec![PathBuf::new()];
    while let Some(rel) = stack.pop() {
        let dir = root.join(&rel);
        let entries = fs::read_dir(&dir).map_err(|e| CliError::io(&dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| CliError::io(&dir, e))?;
            let path = rel.join(entry.file_name());
            if entry.file_type().map_err(|e| CliError::io(&dir, e))?.is_dir() {
                stack.push(path);
            } else {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Runs `stages` in order against a validated config. On failure nothing
/// from this invocation is left behind.
pub fn execute(cfg: &RunConfig, stages: &[Stage]) -> Result<PathBuf, CliError> {
    let out = cfg
        .output
        .clone()
        .ok_or_else(|| CliError::Validation("no output directory".into()))?;
    let created = !out.exists();
    fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    let ws = Workspace {
        staging: out.join(STAGING_DIR),
        out: out.clone(),
    };
    if ws.staging.exists() {
        fs::remove_dir_all(&ws.staging).map_err(|e| CliError::io(&ws.staging, e))?;
    }
    fs::create_dir_all(&ws.staging).map_err(|e| CliError::io(&ws.staging, e))?;
    let result = stages
        .iter()
        .try_for_each(|&stage| run_stage(cfg, &ws, stage))
        .and_then(|_| ws.commit())
        .and_then(|_| write_summary(&out, cfg));
    if result.is_err() {
        let _ = fs::remove_dir_all(&ws.staging);
        if created {
            let _ = fs::remove_dir_all(&out);
        }
    }
    result.map(|_| out)
}

fn run_stage(cfg: &RunConfig, ws: &Workspace, stage: Stage) -> Result<(), CliError> {
    log::info!("stage {}", stage.name());
    match stage {
        Stage::Generate => generate(cfg, ws),
        Stage::Study => study(cfg, ws),
        Stage::Som => som(cfg, ws),
        Stage::Report => report(cfg, ws),
    }
}

fn generate(cfg: &RunConfig, ws: &Workspace) -> Result<(), CliError> {
    let spec = cfg
        .scenario
        .as_ref()
        .ok_or_else(|| CliError::Validation("`generate` needs a [scenario] section".into()))?;
    let scenario = generate_scenario(spec)?;
    scenario.write(&ws.output(SCENARIO_DIR))?;
    Ok(())
}

struct Inputs {
    prices: PathBuf,
    weights: PathBuf,
    announcements: PathBuf,
    rates: PathBuf,
}

fn inputs(cfg: &RunConfig, ws: &Workspace) -> Result<Inputs, CliError> {
    if let Some(p) = &cfg.inputs {
        return Ok(Inputs {
            prices: p.prices.clone(),
            weights: p.weights.clone(),
            announcements: p.announcements.clone(),
            rates: p.rates.clone(),
        });
    }
    let get = |f: &str| ws.input(&format!("{SCENARIO_DIR}/{f}"), Stage::Generate);
    Ok(Inputs {
        prices: get("prices.csv")?,
        weights: get("weights.csv")?,
        announcements: get("announcements.csv")?,
        rates: get("rates.csv")?,
    })
}

fn event_date(cfg: &RunConfig) -> Result<NaiveDate, CliError> {
    match (&cfg.event_date, &cfg.scenario) {
        (Some(d), _) => Ok(*d),
        (None, Some(s)) => Ok(s.event_date()?),
        (None, None) => Err(CliError::Validation("event_date is required".into())),
    }
}

struct Market {
    load: PanelLoad,
    tables: CovariateTables,
    windows: WindowIndex,
}

fn load_market(cfg: &RunConfig, inp: &Inputs) -> Result<Market, CliError> {
    let kind = if cfg.log_returns { ReturnKind::Log } else { ReturnKind::Simple };
    let load = load_returns_panel_with(&inp.prices, cfg.min_coverage, kind)?;
    for w in &load.warnings {
        log::warn!("{w}");
    }
    let tables = load_covariates(&inp.weights, &inp.announcements, &inp.rates)?;
    let windows = align_windows(&load.panel, event_date(cfg)?, cfg.est_len, cfg.half_window)?;
    Ok(Market { load, tables, windows })
}

fn rule(cfg: &RunConfig) -> DetectionRule {
    DetectionRule {
        theta: cfg.theta,
        threshold_override: None,
    }
}

fn study(cfg: &RunConfig, ws: &Workspace) -> Result<(), CliError> {
    let inp = inputs(cfg, ws)?;
    let m = load_market(cfg, &inp)?;
    let panel = &m.load.panel;
    let fits = fit_all(panel, &m.windows, &cfg.market_ticker)?;
    let study = study_securities(panel, &m.windows, &fits, &rule(cfg))?;

    let mut excluded: Vec<Exclusion> = m.load.excluded.clone();
    excluded.extend(fits.excluded.iter().cloned());
    excluded.extend(study.skipped.iter().cloned());
    let mut maw = BTreeMap::new();
    for s in &study.stats {
        let w = (m.tables.market_weight.get(&s.ticker), m.tables.fund_weight.get(&s.ticker));
        match w {
            (Some(&wm), Some(&wf)) => match modified_active_weight(wm, wf) {
                Ok(v) => {
                    maw.insert(s.ticker.clone(), v);
                }
                Err(_) => excluded.push(Exclusion::new(s.ticker.as_str(), "zero market weight")),
            },
            _ => excluded.push(Exclusion::new(s.ticker.as_str(), "missing weights")),
        }
    }
    let by_ticker: BTreeMap<&str, &EventStats> = study.stats.iter().map(|s| (s.ticker.as_str(), s)).collect();
    let order = rank_by_weight(&maw);
    let grid = DetectionGrid::from_stats(&order, cfg.half_window, |t| by_ticker.get(t).copied());
    let memberships = build_sorted_portfolios(&maw, cfg.quantile_count)?;
    let portfolios = portfolio_event_study(&memberships, panel, &m.windows, &cfg.market_ticker, &rule(cfg))?;

    write_exclusions(&ws.output("excluded.csv"), &excluded)?;
    write_fits(&ws.output("fits.csv"), &fits)?;
    write_event_stats(&ws.output("event_stats.csv"), &study.stats)?;
    write_detection_table(&ws.output("detection_table.csv"), &detection_percentages(&study.stats))?;
    write_detection_grid(&ws.output("detection_grid.csv"), &grid)?;
    write_memberships(&ws.output("portfolios.csv"), &memberships)?;
    let pstats: Vec<EventStats> = portfolios.portfolio_stats.iter().flatten().cloned().collect();
    write_event_stats(&ws.output("portfolio_event_stats.csv"), &pstats)?;
    write_detection_grid(
        &ws.output("detection_grid_portfolios.csv"),
        &DetectionGrid::for_portfolios(&portfolios, cfg.half_window),
    )?;
    Ok(())
}

fn fit_records(path: &Path) -> Result<BTreeMap<String, FitRecord>, CliError> {
    Ok(read_fits(path)?.into_iter().map(|f| (f.ticker.clone(), f)).collect())
}

fn som(cfg: &RunConfig, ws: &Workspace) -> Result<(), CliError> {
    let stats = read_event_stats(&ws.input("event_stats.csv", Stage::Study)?)?;
    let fits = fit_records(&ws.input("fits.csv", Stage::Study)?)?;
    let inp = inputs(cfg, ws)?;
    let m = load_market(cfg, &inp)?;
    let tickers: Vec<String> = stats.iter().map(|s| s.ticker.clone()).collect();
    let cov = compute_covariates(&tickers, &m.tables, &m.load.panel, &m.windows, cfg.same_day_omega)?;
    for t in &cov.degenerate_rho {
        log::warn!("{t}: rate correlation undefined, set to 0");
    }
    let kept: Vec<EventStats> = stats.into_iter().filter(|s| cov.rows.contains_key(&s.ticker)).collect();
    let fm = assemble_feature_matrix(&kept, &fits, &cov.rows)?;
    for (name, _) in fm.column_names.iter().zip(&fm.constant).filter(|(_, &c)| c) {
        log::warn!("feature column {name} is constant");
    }
    let map = train(&fm, &cfg.som)?;
    write_exclusions(&ws.output("feature_excluded.csv"), &cov.excluded)?;
    write_features(&ws.staging, &fm)?;
    write_som(&ws.staging, &map, &fm.column_names)?;
    Ok(())
}

fn report(cfg: &RunConfig, ws: &Workspace) -> Result<(), CliError> {
    // map files first so a missing map is reported before anything else
    for f in ["som_refs.csv", "som_labels.csv", "som_error.csv"] {
        ws.input(f, Stage::Som)?;
    }
    let som_dir = ws.input("som_refs.csv", Stage::Som)?.parent().map(Path::to_path_buf).unwrap_or_default();
    let (map, _) = read_som(&som_dir)?;
    let feat_dir = ws.input("features_raw.csv", Stage::Som)?.parent().map(Path::to_path_buf).unwrap_or_default();
    let fm = read_features(&feat_dir)?;
    let stats = read_event_stats(&ws.input("event_stats.csv", Stage::Study)?)?;
    let style = HeatmapStyle {
        bins: cfg.report.bins,
        palette: cfg.report.palette,
        scaling: cfg.report.scaling,
        ..HeatmapStyle::default()
    };
    let planes: Vec<String> = if cfg.report.planes.is_empty() {
        fm.column_names.clone()
    } else {
        cfg.report.planes.clone()
    };
    for name in &planes {
        let k = fm.column_index(name)?;
        let slug = column_slug(name);
        let comp = component_plane(&map, k, &fm)?;
        write_plane(&ws.output(&format!("planes/plane_component_{slug}.csv")), &comp)?;
        render_heatmap(&comp, &format!("{name} (reference vectors)"), &style, &ws.output(&format!("planes/plane_component_{slug}.svg")))?;
        let raw: BTreeMap<String, f64> = fm.tickers.iter().cloned().zip(fm.raw_column(k)).collect();
        let emp = empirical_plane(&map, &raw);
        write_plane(&ws.output(&format!("planes/plane_empirical_{slug}.csv")), &emp)?;
        render_heatmap(&emp, &format!("{name} (cell means)"), &style, &ws.output(&format!("planes/plane_empirical_{slug}.svg")))?;
    }
    let crit = critical_value(cfg.theta, cfg.est_len - 2)?;
    for s in &cfg.report.significance {
        let kind = s.kind.into();
        let grid = significance_plane(&map, &stats, s.offset, kind, crit)?;
        let label = match s.kind {
            crate::config::StatKindName::Ar => "ar",
            crate::config::StatKindName::Car => "car",
        };
        let slug = column_slug(&format!("{label}[{}]", offset_label(s.offset)));
        write_plane(&ws.output(&format!("planes/plane_significance_{slug}.csv")), &grid)?;
        let title = format!("share with |t_{}| above {crit:.4} at offset {}", label.to_uppercase(), offset_label(s.offset));
        render_heatmap(&grid, &title, &style, &ws.output(&format!("planes/plane_significance_{slug}.svg")))?;
    }
    for r in &cfg.report.regions {
        let rep = region_report(&map, &r.cells, &fm)?;
        write_region_report(&ws.output(&format!("regions/region_{}.csv", r.name)), &rep)?;
    }
    if !cfg.report.residual_tickers.is_empty() {
        let fits = fit_records(&ws.input("fits.csv", Stage::Study)?)?;
        let inp = inputs(cfg, ws)?;
        let m = load_market(cfg, &inp)?;
        for t in &cfg.report.residual_tickers {
            let fit = fits.get(t).ok_or_else(|| eventsom::Error::UnknownTicker(t.clone()))?;
            let path = cumulative_residual_plot_data(fit, &m.load.panel, &m.windows, &cfg.market_ticker)?;
            write_residual_path(&ws.output(&format!("residuals/residuals_{t}.csv")), &path)?;
        }
    }
    if cfg.scenario.is_some() {
        let truth = read_truth(&ws.input(&format!("{SCENARIO_DIR}/truth.csv"), Stage::Generate)?)?;
        let detections: BTreeMap<String, bool> = stats.iter().map(|s| (s.ticker.clone(), s.any_detected())).collect();
        write_confusion(&ws.output("confusion.csv"), &ground_truth_confusion(&detections, &truth))?;
    }
    Ok(())
}

fn offset_label(o: i64) -> String {
    if o > 0 {
        format!("+{o}")
    } else {
        o.to_string()
    }
}
