//! Planes over the trained map, SVG heat maps and per-region drill-downs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::csvio::{fmt_f64, read_table, CsvOut};
use crate::error::{Error, Result};
use crate::event_study::{cumulate, EventStats, StatKind};
use crate::features::FeatureMatrix;
use crate::ingest::{ReturnsPanel, WindowIndex};
use crate::market_model::FitRecord;
use crate::som::SomMap;

/// Scalar per map cell plus the number of securities mapped there.
#[derive(Debug, Clone, PartialEq)]
pub struct CellGrid {
    pub rows: usize,
    pub cols: usize,
    /// Row-major; NaN marks cells without a value.
    pub values: Vec<f64>,
    pub counts: Vec<usize>,
}

impl CellGrid {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn occupied(&self, cell: usize) -> bool {
        self.counts[cell] > 0
    }

    pub fn occupied_values(&self) -> Vec<f64> {
        (0..self.values.len())
            .filter(|&c| self.occupied(c))
            .map(|c| self.values[c])
            .collect()
    }
}

/// One reference-vector component in raw units.
pub fn component_plane(map: &SomMap, column: usize, meta: &FeatureMatrix) -> Result<CellGrid> {
    if column >= map.dim || column >= meta.n_cols() {
        return Err(Error::UnknownColumn(format!("index {column}")));
    }
    let values = (0..map.n_cells())
        .map(|c| meta.destandardize(column, map.reference(c)[column]))
        .collect();
    Ok(CellGrid {
        rows: map.rows,
        cols: map.cols,
        values,
        counts: map.counts(),
    })
}

/// Mean of a per-security value over the securities mapped to each cell.
/// Securities without a value are ignored.
pub fn empirical_plane(map: &SomMap, raw: &BTreeMap<String, f64>) -> CellGrid {
    let cells = map.n_cells();
    let mut sums = vec![0.0; cells];
    let mut counts = vec![0usize; cells];
    for (t, &c) in map.tickers.iter().zip(&map.labels) {
        if let Some(v) = raw.get(t) {
            sums[c] += v;
            counts[c] += 1;
        }
    }
    let values = sums
        .iter()
        .zip(&counts)
        .map(|(s, &n)| if n > 0 { s / n as f64 } else { f64::NAN })
        .collect();
    CellGrid {
        rows: map.rows,
        cols: map.cols,
        values,
        counts,
    }
}

/// Fraction of each cell's securities whose |t| exceeds `critical` for the
/// chosen statistic and event offset.
pub fn significance_plane(
    map: &SomMap,
    stats: &[EventStats],
    offset: i64,
    kind: StatKind,
    critical: f64,
) -> Result<CellGrid> {
    let by_ticker: BTreeMap<&str, &EventStats> = stats.iter().map(|s| (s.ticker.as_str(), s)).collect();
    let mut flagged = BTreeMap::new();
    for t in &map.tickers {
        let s = by_ticker.get(t.as_str()).ok_or_else(|| Error::UnknownTicker(t.clone()))?;
        let slot = s
            .slot(offset)
            .ok_or_else(|| Error::invalid(format!("offset {offset} outside the event window")))?;
        let hit = if s.t(kind)[slot].abs() > critical { 1.0 } else { 0.0 };
        flagged.insert(t.clone(), hit);
    }
    Ok(empirical_plane(map, &flagged))
}

/// Spearman rank correlation with average ranks for ties; `None` when either
/// side is constant or the lengths differ.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    pearson(&ra, &rb)
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&x, &y| v[x].total_cmp(&v[y]));
    let mut ranks = vec![0.0; v.len()];
    let mut k = 0;
    while k < idx.len() {
        let mut end = k + 1;
        while end < idx.len() && v[idx[end]] == v[idx[k]] {
            end += 1;
        }
        let r = (k + end + 1) as f64 / 2.0;
        for &p in &idx[k..end] {
            ranks[p] = r;
        }
        k = end;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        None
    } else {
        Some(sab / (saa * sbb).sqrt())
    }
}

/// How occupied-cell values are split into color classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scaling {
    #[default]
    Quantile,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Palette {
    #[default]
    Viridis,
    Diverging,
    Greys,
}

impl Palette {
    fn stops(self) -> &'static [(u8, u8, u8)] {
        match self {
            Palette::Viridis => &[(68, 1, 84), (59, 82, 139), (33, 145, 140), (94, 201, 98), (253, 231, 37)],
            Palette::Diverging => &[(33, 102, 172), (146, 197, 222), (247, 247, 247), (244, 165, 130), (178, 24, 43)],
            Palette::Greys => &[(240, 240, 240), (20, 20, 20)],
        }
    }

    /// Color at position `u` in [0, 1] along the ramp.
    pub fn color(self, u: f64) -> (u8, u8, u8) {
        let stops = self.stops();
        let pos = u.clamp(0.0, 1.0) * (stops.len() - 1) as f64;
        let k = (pos.floor() as usize).min(stops.len() - 2);
        let f = pos - k as f64;
        let mix = |a: u8, b: u8| (a as f64 + f * (b as f64 - a as f64)).round() as u8;
        let (a, b) = (stops[k], stops[k + 1]);
        (mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
    }
}

/// Class boundaries for a set of values: `bins + 1` edges from the minimum to
/// the maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct Binning {
    pub edges: Vec<f64>,
}

impl Binning {
    pub fn new(values: &[f64], bins: usize, scaling: Scaling) -> Result<Self> {
        if bins < 2 {
            return Err(Error::invalid(format!("bin count {bins} must be at least 2")));
        }
        let mut sorted: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        sorted.sort_by(f64::total_cmp);
        if sorted.is_empty() {
            return Ok(Binning { edges: vec![0.0; bins + 1] });
        }
        let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
        let edges = (0..=bins)
            .map(|k| {
                let p = k as f64 / bins as f64;
                match scaling {
                    Scaling::Quantile => quantile_sorted(&sorted, p),
                    Scaling::Linear => lo + p * (hi - lo),
                }
            })
            .collect();
        Ok(Binning { edges })
    }

    pub fn bins(&self) -> usize {
        self.edges.len() - 1
    }

    /// Number of interior edges strictly below `v`.
    pub fn bin_of(&self, v: f64) -> usize {
        self.edges[1..self.edges.len() - 1].iter().filter(|&&e| v > e).count()
    }

    /// Distinct classes actually in use; equal edges collapse classes.
    pub fn distinct_bins(&self, values: &[f64]) -> BTreeSet<usize> {
        values.iter().map(|&v| self.bin_of(v)).collect()
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let k = h.floor() as usize;
    if k + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    sorted[k] + (h - k as f64) * (sorted[k + 1] - sorted[k])
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapStyle {
    pub bins: usize,
    pub palette: Palette,
    pub scaling: Scaling,
    pub cell_px: usize,
}

impl Default for HeatmapStyle {
    fn default() -> Self {
        HeatmapStyle {
            bins: 10,
            palette: Palette::Viridis,
            scaling: Scaling::Quantile,
            cell_px: 24,
        }
    }
}

const EMPTY_FILL: &str = "#bdbdbd";

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn edge_label(v: f64) -> String {
    let s = format!("{v:.4}");
    if s == "-0.0000" {
        "0.0000".into()
    } else {
        s
    }
}

/// Self-contained SVG document of the grid. Rows run top to bottom, columns
/// left to right; unoccupied cells are gray.
pub fn heatmap_svg(grid: &CellGrid, title: &str, style: &HeatmapStyle) -> Result<String> {
    let occupied = grid.occupied_values();
    let binning = Binning::new(&occupied, style.bins, style.scaling)?;
    let used = binning.distinct_bins(&occupied);
    let top_bin = used.iter().copied().max().unwrap_or(0);
    let color_of = |b: usize| {
        let u = if top_bin == 0 { 0.0 } else { b as f64 / (binning.bins() - 1) as f64 };
        let (r, g, bl) = style.palette.color(u);
        format!("#{r:02x}{g:02x}{bl:02x}")
    };
    let px = style.cell_px;
    let margin = 10;
    let title_h = 24;
    let map_w = grid.cols * px;
    let map_h = grid.rows * px;
    let legend_x = margin + map_w + 20;
    let legend_w = 180;
    let legend_rows = binning.bins() + 1;
    let width = legend_x + legend_w + margin;
    let height = title_h + margin + map_h.max(legend_rows * 18) + margin;

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<title>{}</title>"#, escape(title));
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{width}" height="{height}" style="fill:#ffffff"/>"#);
    let _ = writeln!(s, r#"<text x="{margin}" y="16" style="font-size:13px">{}</text>"#, escape(title));
    let _ = writeln!(s, r#"<g id="cells" style="stroke:#ffffff;stroke-width:1">"#);
    for i in 0..grid.rows {
        for j in 0..grid.cols {
            let c = i * grid.cols + j;
            let fill = if grid.occupied(c) && grid.values[c].is_finite() {
                color_of(binning.bin_of(grid.values[c]))
            } else {
                EMPTY_FILL.to_string()
            };
            let _ = writeln!(
                s,
                r#"<rect x="{}" y="{}" width="{px}" height="{px}" style="fill:{fill}"><title>({i},{j}) n={} v={}</title></rect>"#,
                margin + j * px,
                title_h + i * px,
                grid.counts[c],
                if grid.values[c].is_finite() { edge_label(grid.values[c]) } else { "NA".into() }
            );
        }
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r#"<g id="legend">"#);
    for b in 0..binning.bins() {
        let y = title_h + b * 18;
        let fill = if used.contains(&b) || occupied.is_empty() { color_of(b) } else { "#ffffff".into() };
        let _ = writeln!(
            s,
            r#"<rect x="{legend_x}" y="{y}" width="14" height="14" style="fill:{fill};stroke:#666666;stroke-width:0.5"/>"#
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}">{} to {}</text>"#,
            legend_x + 20,
            y + 11,
            edge_label(binning.edges[b]),
            edge_label(binning.edges[b + 1])
        );
    }
    let y = title_h + binning.bins() * 18;
    let _ = writeln!(
        s,
        r#"<rect x="{legend_x}" y="{y}" width="14" height="14" style="fill:{EMPTY_FILL};stroke:#666666;stroke-width:0.5"/>"#
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}">no securities</text>"#, legend_x + 20, y + 11);
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, "</svg>");
    Ok(s)
}

pub fn render_heatmap(grid: &CellGrid, title: &str, style: &HeatmapStyle, out_path: &Path) -> Result<()> {
    let svg = heatmap_svg(grid, title, style)?;
    if let Some(parent) = out_path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(out_path, svg).map_err(|e| Error::io(out_path, e))
}

pub fn write_plane(path: &Path, grid: &CellGrid) -> Result<()> {
    let mut out = CsvOut::create(path, &["i", "j", "value", "count"])?;
    for c in 0..grid.values.len() {
        out.row([
            (c / grid.cols).to_string(),
            (c % grid.cols).to_string(),
            fmt_f64(grid.values[c]),
            grid.counts[c].to_string(),
        ])?;
    }
    out.finish()
}

pub fn read_plane(path: &Path) -> Result<CellGrid> {
    let table = read_table(path, &["i", "j", "value", "count"])?;
    let mut cells = Vec::new();
    for (line, rec) in &table.rows {
        let raw = table.field(*line, rec, 2)?;
        let value = if raw.is_empty() { f64::NAN } else { table.f64(*line, rec, 2)? };
        cells.push((table.usize(*line, rec, 0)?, table.usize(*line, rec, 1)?, value, table.usize(*line, rec, 3)?));
    }
    let rows = cells.iter().map(|c| c.0 + 1).max().unwrap_or(0);
    let cols = cells.iter().map(|c| c.1 + 1).max().unwrap_or(0);
    if cells.len() != rows * cols || cells.iter().enumerate().any(|(k, c)| c.0 * cols + c.1 != k) {
        return Err(Error::parse(path, 0, "cells must be listed row-major"));
    }
    Ok(CellGrid {
        rows,
        cols,
        values: cells.iter().map(|c| c.2).collect(),
        counts: cells.iter().map(|c| c.3).collect(),
    })
}

/// Securities in a set of cells with their raw features.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionReport {
    pub column_names: Vec<String>,
    /// (ticker, (i, j), raw feature row), ordered by cell then ticker.
    pub rows: Vec<(String, (usize, usize), Vec<f64>)>,
    /// Securities per selected cell, in selection order.
    pub cell_counts: Vec<((usize, usize), usize)>,
}

pub fn region_report(map: &SomMap, cells: &[(usize, usize)], features: &FeatureMatrix) -> Result<RegionReport> {
    let mut selected = BTreeSet::new();
    let mut cell_counts = Vec::new();
    let counts = map.counts();
    for &(i, j) in cells {
        if i >= map.rows || j >= map.cols {
            return Err(Error::CellOutOfRange {
                i,
                j,
                rows: map.rows,
                cols: map.cols,
            });
        }
        if selected.insert(map.cell(i, j)) {
            cell_counts.push(((i, j), counts[map.cell(i, j)]));
        }
    }
    let row_of: BTreeMap<&str, usize> = features.tickers.iter().enumerate().map(|(k, t)| (t.as_str(), k)).collect();
    let mut rows = Vec::new();
    for (t, &c) in map.tickers.iter().zip(&map.labels) {
        if !selected.contains(&c) {
            continue;
        }
        let k = *row_of.get(t.as_str()).ok_or_else(|| Error::UnknownTicker(t.clone()))?;
        rows.push((t.clone(), map.coords(c), features.raw_row(k).to_vec()));
    }
    rows.sort_by(|a, b| (a.1, &a.0).cmp(&(b.1, &b.0)));
    Ok(RegionReport {
        column_names: features.column_names.clone(),
        rows,
        cell_counts,
    })
}

pub fn write_region_report(path: &Path, report: &RegionReport) -> Result<()> {
    let mut header = vec!["ticker", "i", "j"];
    header.extend(report.column_names.iter().map(String::as_str));
    let mut out = CsvOut::create(path, &header)?;
    for (t, (i, j), values) in &report.rows {
        let mut fields = vec![t.clone(), i.to_string(), j.to_string()];
        fields.extend(values.iter().map(|&v| fmt_f64(v)));
        out.row(fields)?;
    }
    out.finish()
}

/// Running residual sum over the estimation window and running AR over the
/// event window of one security.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualPath {
    pub ticker: String,
    pub dates: Vec<NaiveDate>,
    /// Position relative to the event day.
    pub offsets: Vec<i64>,
    pub in_event_window: Vec<bool>,
    pub cumulative: Vec<f64>,
}

pub fn cumulative_residual_plot_data(
    fit: &FitRecord,
    panel: &ReturnsPanel,
    windows: &WindowIndex,
    market_ticker: &str,
) -> Result<ResidualPath> {
    let k = panel.index_of(&fit.ticker).ok_or_else(|| Error::UnknownTicker(fit.ticker.clone()))?;
    let m = panel
        .index_of(market_ticker)
        .ok_or_else(|| Error::UnknownTicker(market_ticker.to_string()))?;
    let est = windows.estimation_range.clone();
    let ev = windows.event_range();
    let slice = |i: usize, r: std::ops::Range<usize>| {
        panel.complete_slice(i, r).ok_or_else(|| Error::MarketIncomplete {
            ticker: panel.tickers()[i].clone(),
            reason: "missing return in plotted window".into(),
        })
    };
    let (y_est, x_est) = (slice(k, est.clone())?, slice(m, est.clone())?);
    let (y_ev, x_ev) = (slice(k, ev.clone())?, slice(m, ev.clone())?);
    let mut cumulative = cumulate(&fit.residuals(y_est, x_est));
    cumulative.extend(cumulate(&fit.residuals(y_ev, x_ev)));
    let positions: Vec<usize> = est.clone().chain(ev.clone()).collect();
    Ok(ResidualPath {
        ticker: fit.ticker.clone(),
        dates: positions.iter().map(|&p| panel.calendar()[p]).collect(),
        offsets: positions.iter().map(|&p| p as i64 - windows.event_index as i64).collect(),
        in_event_window: positions.iter().map(|p| ev.contains(p)).collect(),
        cumulative,
    })
}

pub fn write_residual_path(path: &Path, data: &ResidualPath) -> Result<()> {
    let mut out = CsvOut::create(path, &["date", "offset", "window", "cumulative"])?;
    for k in 0..data.dates.len() {
        out.row([
            data.dates[k].to_string(),
            data.offsets[k].to_string(),
            if data.in_event_window[k] { "event" } else { "estimation" }.to_string(),
            fmt_f64(data.cumulative[k]),
        ])?;
    }
    out.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::som::{train_data, SomParams};

    fn toy_map(rows: usize, cols: usize, refs: Vec<f64>, dim: usize, labels: Vec<usize>) -> SomMap {
        let n = labels.len();
        SomMap {
            rows,
            cols,
            dim,
            refs,
            tickers: (0..n).map(|k| format!("S{k}")).collect(),
            labels,
            distances: vec![0.0; n],
            error_history: vec![],
            degenerate: false,
        }
    }

    #[test]
    fn component_plane_destandardizes() {
        let fm = FeatureMatrix::from_raw(
            vec!["a".into(), "b".into(), "c".into()],
            vec!["mAW".into(), "rho".into()],
            vec![0.1, 1.0, 0.3, 2.0, 0.5, 6.0],
        )
        .unwrap();
        let map = toy_map(1, 2, vec![0.5, -1.0, -0.25, 2.0], 2, vec![0, 0, 1]);
        let plane = component_plane(&map, 0, &fm).unwrap();
        let (mean, std) = (0.3, 0.2);
        assert!((plane.values[0] - (0.5 * std + mean)).abs() < 1e-12);
        assert!((plane.values[1] - (-0.25 * std + mean)).abs() < 1e-12);
        assert_eq!(plane.counts, vec![2, 1]);
        for (c, &v) in plane.values.iter().enumerate() {
            assert!((fm.standardize(0, v) - map.reference(c)[0]).abs() < 1e-10);
        }
        assert!(matches!(component_plane(&map, 2, &fm), Err(Error::UnknownColumn(_))));
    }

    #[test]
    fn identical_inputs_give_constant_plane() {
        let raw = [0.4, -1.0].repeat(5);
        let fm = FeatureMatrix::from_raw((0..5).map(|k| format!("S{k}")).collect(), vec!["mAW".into(), "rho".into()], raw)
            .unwrap();
        let p = SomParams {
            rows: 3,
            cols: 3,
            iterations: 5,
            ..SomParams::default()
        };
        let map = crate::som::train(&fm, &p).unwrap();
        let plane = component_plane(&map, 1, &fm).unwrap();
        assert!(plane.values.iter().all(|&v| v == -1.0));
    }

    #[test]
    fn empirical_plane_means() {
        let map = toy_map(1, 3, vec![0.0; 3], 1, vec![0, 0, 1]);
        let raw: BTreeMap<String, f64> = [("S0", 1.0), ("S1", 3.0), ("S2", 7.0)]
            .into_iter()
            .map(|(t, v)| (t.to_string(), v))
            .collect();
        let plane = empirical_plane(&map, &raw);
        assert_eq!(plane.values[0], 2.0);
        assert_eq!(plane.values[1], 7.0);
        assert!(plane.values[2].is_nan() && !plane.occupied(2));
        assert_eq!(plane.counts.iter().sum::<usize>(), 3);
    }

    fn stats_with_t(ticker: &str, t: f64) -> EventStats {
        EventStats {
            ticker: ticker.into(),
            half_window: 0,
            ar: vec![0.0],
            car: vec![0.0],
            t_ar: vec![t],
            t_car: vec![t],
            detected_ar: vec![false],
            detected_car: vec![false],
        }
    }

    #[test]
    fn significance_fraction() {
        let map = toy_map(1, 2, vec![0.0; 2], 1, vec![0, 0, 1]);
        let stats = vec![stats_with_t("S0", 2.5), stats_with_t("S1", 0.3), stats_with_t("S2", -3.0)];
        let plane = significance_plane(&map, &stats, 0, StatKind::Car, 1.97).unwrap();
        assert_eq!(plane.values, vec![0.5, 1.0]);
        let none = significance_plane(&map, &stats, 0, StatKind::Ar, 10.0).unwrap();
        assert_eq!(none.values, vec![0.0, 0.0]);
        assert!(significance_plane(&map, &stats, 1, StatKind::Ar, 1.0).is_err());
    }

    #[test]
    fn quantile_extremes_and_monotone() {
        let values: Vec<f64> = (1..=100).map(f64::from).collect();
        let b = Binning::new(&values, 10, Scaling::Quantile).unwrap();
        assert_eq!(b.bin_of(1.0), 0);
        assert_eq!(b.bin_of(100.0), 9);
        let bins: Vec<usize> = values.iter().map(|&v| b.bin_of(v)).collect();
        assert!(bins.windows(2).all(|w| w[0] <= w[1]));
        let flat = Binning::new(&[3.0; 7], 10, Scaling::Quantile).unwrap();
        assert_eq!(flat.distinct_bins(&[3.0; 7]).len(), 1);
        assert!(Binning::new(&values, 1, Scaling::Linear).is_err());
    }

    #[test]
    fn spearman_cases() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 40.0]), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]), None);
        // ties: ranks (1.5, 1.5, 3) vs (1, 2, 3)
        let r = spearman(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((r - 0.75f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn svg_is_deterministic_and_grays_empty_cells() {
        let grid = CellGrid {
            rows: 2,
            cols: 2,
            values: vec![1.0, 2.0, f64::NAN, 4.0],
            counts: vec![1, 2, 0, 1],
        };
        let style = HeatmapStyle::default();
        let a = heatmap_svg(&grid, "mAW <plane>", &style).unwrap();
        let b = heatmap_svg(&grid, "mAW <plane>", &style).unwrap();
        assert_eq!(a, b);
        assert!(a.contains("&lt;plane&gt;"));
        assert_eq!(a.matches(EMPTY_FILL).count(), 2);
    }

    #[test]
    fn plane_round_trip() {
        let grid = CellGrid {
            rows: 2,
            cols: 3,
            values: vec![0.1, f64::NAN, -2.5e-9, 3.0, 1.0 / 3.0, 0.0],
            counts: vec![1, 0, 4, 2, 1, 1],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plane_x.csv");
        write_plane(&path, &grid).unwrap();
        let back = read_plane(&path).unwrap();
        assert_eq!(back.counts, grid.counts);
        for (a, b) in back.values.iter().zip(&grid.values) {
            assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
        }
    }

    #[test]
    fn region_partition() {
        let raw: Vec<f64> = (0..12).map(f64::from).collect();
        let tickers: Vec<String> = (0..6).map(|k| format!("S{k}")).collect();
        let fm = FeatureMatrix::from_raw(tickers.clone(), vec!["a".into(), "b".into()], raw).unwrap();
        let map = train_data(
            fm.values(),
            2,
            tickers,
            &SomParams {
                rows: 2,
                cols: 2,
                iterations: 10,
                ..SomParams::default()
            },
        )
        .unwrap();
        let all: Vec<(usize, usize)> = (0..2).flat_map(|i| (0..2).map(move |j| (i, j))).collect();
        let full = region_report(&map, &all, &fm).unwrap();
        let mut seen: Vec<&str> = full.rows.iter().map(|r| r.0.as_str()).collect();
        seen.sort();
        assert_eq!(seen, vec!["S0", "S1", "S2", "S3", "S4", "S5"]);
        let parts: usize = all.iter().map(|&c| region_report(&map, &[c], &fm).unwrap().rows.len()).sum();
        assert_eq!(parts, 6);
        assert!(region_report(&map, &[], &fm).unwrap().rows.is_empty());
        assert!(matches!(region_report(&map, &[(2, 0)], &fm), Err(Error::CellOutOfRange { .. })));
    }

    #[test]
    fn region_counts_hand_tally() {
        let fm = FeatureMatrix::from_raw(
            (0..4).map(|k| format!("S{k}")).collect(),
            vec!["a".into()],
            vec![1.0, 2.0, 3.0, 4.0],
        )
        .unwrap();
        let map = toy_map(2, 2, vec![0.0; 4], 1, vec![3, 0, 3, 3]);
        let r = region_report(&map, &[(1, 1), (0, 0), (1, 1)], &fm).unwrap();
        assert_eq!(r.cell_counts, vec![((1, 1), 3), ((0, 0), 1)]);
        assert_eq!(r.rows[0].0, "S1");
        assert_eq!(r.rows[1].2, vec![1.0]);
    }
}
