//! Batch-learning self-organizing map on a rectangular grid.
//!
//! Reference vectors start on the plane spanned by the two leading principal
//! axes of the data. Each epoch assigns every input to its best matching unit
//! (BMU), then moves every cell toward the mean of the inputs whose BMU lies
//! within a square (Chebyshev) neighborhood of that cell:
//!
//! ```text
//! w_new = w_old + λ(t) · (Σ_{x ∈ S} x / |S| − w_old)
//! ```
//!
//! Cells with an empty neighborhood keep their vector for that epoch. The
//! quantization error `e(t)` is the sum of Euclidean distances from each input
//! to its BMU after the update.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::csvio::{fmt_f64, read_table, CsvOut};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

/// Floor of the learning coefficient.
pub const MIN_LEARNING_RATE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SomParams {
    pub rows: usize,
    pub cols: usize,
    pub lambda_init: f64,
    /// Recorded initial neighborhood parameter; the radius follows `xi_start`.
    pub xi_init: f64,
    /// Radius at t = 0 of `max{1, round(xi_start · (1 − t/T))}`.
    pub xi_start: f64,
    pub iterations: usize,
    /// Recorded for provenance; training itself draws no random numbers.
    pub seed: u64,
}

impl Default for SomParams {
    fn default() -> Self {
        SomParams {
            rows: 20,
            cols: 20,
            lambda_init: 0.9,
            xi_init: 0.001,
            xi_start: 1.0,
            iterations: 2000,
            seed: 0,
        }
    }
}

impl SomParams {
    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::invalid("grid dimensions must be positive"));
        }
        if !(self.lambda_init > 0.0 && self.lambda_init <= 1.0) {
            return Err(Error::invalid(format!(
                "lambda_init {} outside (0, 1]",
                self.lambda_init
            )));
        }
        if self.iterations == 0 {
            return Err(Error::invalid("iteration count must be positive"));
        }
        if !(self.xi_start >= 0.0 && self.xi_start.is_finite()) {
            return Err(Error::invalid(format!("xi_start {} must be non-negative", self.xi_start)));
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.rows * self.cols
    }
}

/// Learning coefficient and integer neighborhood radius at iteration `t`
/// (1-based).
pub fn schedules(t: usize, params: &SomParams) -> (f64, usize) {
    let frac = t as f64 / params.iterations as f64;
    let lambda = (params.lambda_init * (1.0 - frac)).max(MIN_LEARNING_RATE);
    let radius = (params.xi_start * (1.0 - frac)).round().max(1.0);
    (lambda, radius as usize)
}

/// Principal-axis initialization details.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaInit {
    pub mean: Vec<f64>,
    pub axis1: Vec<f64>,
    pub axis2: Vec<f64>,
    pub sigma1: f64,
    pub sigma2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SomMap {
    pub rows: usize,
    pub cols: usize,
    pub dim: usize,
    /// Reference vectors, cell-major (`cell = i * cols + j`).
    pub refs: Vec<f64>,
    pub tickers: Vec<String>,
    /// BMU cell of each input row.
    pub labels: Vec<usize>,
    /// Distance from each input to its BMU.
    pub distances: Vec<f64>,
    pub error_history: Vec<f64>,
    /// Set when the data had fewer than two distinct vectors.
    pub degenerate: bool,
}

impl SomMap {
    pub fn n_cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn cell(&self, i: usize, j: usize) -> usize {
        i * self.cols + j
    }

    pub fn coords(&self, cell: usize) -> (usize, usize) {
        (cell / self.cols, cell % self.cols)
    }

    pub fn reference(&self, cell: usize) -> &[f64] {
        &self.refs[cell * self.dim..(cell + 1) * self.dim]
    }

    pub fn label_of(&self, ticker: &str) -> Option<(usize, usize)> {
        self.tickers
            .iter()
            .position(|t| t == ticker)
            .map(|k| self.coords(self.labels[k]))
    }

    /// Securities per cell.
    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_cells()];
        for &c in &self.labels {
            counts[c] += 1;
        }
        counts
    }

    /// BMU of `x` under the current reference vectors.
    pub fn best_matching_unit(&self, x: &[f64]) -> Result<(usize, usize)> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        Ok(self.coords(bmu(&self.refs, self.dim, x).0))
    }
}

pub fn best_matching_unit(x: &[f64], map: &SomMap) -> Result<(usize, usize)> {
    map.best_matching_unit(x)
}

#[inline]
fn dist2(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            let d = x[l] - y[l];
            acc[l] += d * d;
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += (x - y) * (x - y);
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Nearest cell by squared distance; ties go to the lowest cell index.
fn bmu(refs: &[f64], dim: usize, x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, w) in refs.chunks_exact(dim.max(1)).enumerate() {
        let d = dist2(w, x);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn assign(refs: &[f64], dim: usize, data: &[f64]) -> (Vec<usize>, Vec<f64>) {
    data.par_chunks_exact(dim.max(1))
        .map(|x| {
            let (c, d2) = bmu(refs, dim, x);
            (c, d2.sqrt())
        })
        .unzip()
}

fn check_data(data: &[f64], dim: usize) -> Result<usize> {
    if dim == 0 {
        return Err(Error::invalid("feature dimension must be positive"));
    }
    if !data.len().is_multiple_of(dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: data.len() % dim,
        });
    }
    let n = data.len() / dim;
    if n < 2 {
        return Err(Error::InsufficientData {
            what: "input vectors for the map",
            required: 2,
            available: n,
        });
    }
    if let Some(v) = data.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite input value {v}")));
    }
    Ok(n)
}

/// Mean, leading two principal directions and the spread along them.
pub fn principal_axes(data: &[f64], dim: usize) -> Result<PcaInit> {
    let n = check_data(data, dim)?;
    let mut mean = vec![0.0; dim];
    for x in data.chunks_exact(dim) {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    for x in data.chunks_exact(dim) {
        for a in 0..dim {
            let da = x[a] - mean[a];
            for b in a..dim {
                cov[(a, b)] += da * (x[b] - mean[b]);
            }
        }
    }
    for a in 0..dim {
        for b in a..dim {
            let v = cov[(a, b)] / (n - 1) as f64;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let axis = |k: usize| -> (Vec<f64>, f64) {
        let Some(&idx) = order.get(k) else {
            return (vec![0.0; dim], 0.0);
        };
        let mut v: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
        // orient so the largest-magnitude coordinate is positive
        let lead = v
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |(bi, bv), (i, &x)| if x.abs() > bv { (i, x.abs()) } else { (bi, bv) })
            .0;
        if v[lead] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        (v, eig.eigenvalues[idx].max(0.0).sqrt())
    };
    let (axis1, sigma1) = axis(0);
    let (axis2, sigma2) = axis(1);
    Ok(PcaInit {
        mean,
        axis1,
        axis2,
        sigma1,
        sigma2,
    })
}

fn distinct_rows(data: &[f64], dim: usize) -> bool {
    let first = &data[..dim];
    data.chunks_exact(dim).any(|x| x != first)
}

/// Reference vectors on the principal plane:
/// `w(i,j) = x̄ + 5σ₁b₁(i − I/2)/I + 5σ₂b₂(j − J/2)/J`, with cells indexed
/// from zero.
pub fn initialize(data: &[f64], dim: usize, tickers: Vec<String>, params: &SomParams) -> Result<SomMap> {
    params.validate()?;
    let n = check_data(data, dim)?;
    if tickers.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: tickers.len(),
        });
    }
    let pca = principal_axes(data, dim)?;
    let degenerate = !distinct_rows(data, dim);
    let (rows, cols) = (params.rows, params.cols);
    let mut refs = Vec::with_capacity(rows * cols * dim);
    for i in 0..rows {
        let u = (i as f64 - rows as f64 / 2.0) / rows as f64;
        for j in 0..cols {
            let v = (j as f64 - cols as f64 / 2.0) / cols as f64;
            for k in 0..dim {
                let w = if degenerate {
                    pca.mean[k]
                } else {
                    pca.mean[k] + 5.0 * pca.sigma1 * pca.axis1[k] * u + 5.0 * pca.sigma2 * pca.axis2[k] * v
                };
                refs.push(w);
            }
        }
    }
    let (labels, distances) = assign(&refs, dim, data);
    Ok(SomMap {
        rows,
        cols,
        dim,
        refs,
        tickers,
        labels,
        distances,
        error_history: Vec::new(),
        degenerate,
    })
}

pub fn initialize_map(q: &FeatureMatrix, params: &SomParams) -> Result<SomMap> {
    initialize(q.values(), q.n_cols(), q.tickers.clone(), params)
}

/// Sum over a clipped window of half-width `r` along one grid axis.
fn box_sum_axis(src: &[f64], dst: &mut [f64], rows: usize, cols: usize, width: usize, r: usize, along_rows: bool) {
    dst.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..rows {
        for j in 0..cols {
            let out = (i * cols + j) * width;
            let (lo, hi) = if along_rows {
                (i.saturating_sub(r), (i + r).min(rows - 1))
            } else {
                (j.saturating_sub(r), (j + r).min(cols - 1))
            };
            for s in lo..=hi {
                let cell = if along_rows { s * cols + j } else { i * cols + s };
                let src_row = &src[cell * width..(cell + 1) * width];
                for (d, v) in dst[out..out + width].iter_mut().zip(src_row) {
                    *d += v;
                }
            }
        }
    }
}

/// One batch update with BMUs taken from `map.labels`, followed by
/// reassignment under the new vectors. Returns e(t).
fn update(map: &mut SomMap, data: &[f64], lambda: f64, radius: usize) -> f64 {
    let (rows, cols, dim) = (map.rows, map.cols, map.dim);
    let cells = rows * cols;
    // per-cell sums with the count in the last slot
    let width = dim + 1;
    let mut sums = vec![0.0; cells * width];
    for (x, &c) in data.chunks_exact(dim).zip(&map.labels) {
        let slot = &mut sums[c * width..(c + 1) * width];
        for (s, v) in slot.iter_mut().zip(x) {
            *s += v;
        }
        slot[dim] += 1.0;
    }
    let mut tmp = vec![0.0; cells * width];
    box_sum_axis(&sums, &mut tmp, rows, cols, width, radius, false);
    box_sum_axis(&tmp, &mut sums, rows, cols, width, radius, true);
    for c in 0..cells {
        let slot = &sums[c * width..(c + 1) * width];
        let count = slot[dim];
        if count == 0.0 {
            continue;
        }
        let w = &mut map.refs[c * dim..(c + 1) * dim];
        for (wk, s) in w.iter_mut().zip(&slot[..dim]) {
            *wk += lambda * (s / count - *wk);
        }
    }
    let (labels, distances) = assign(&map.refs, dim, data);
    map.labels = labels;
    map.distances = distances;
    map.distances.iter().sum()
}

/// Runs epoch `t`: assigns BMUs under the current vectors, applies the batch
/// update with the scheduled coefficient and radius, and returns e(t).
pub fn batch_epoch(map: &mut SomMap, data: &[f64], t: usize, params: &SomParams) -> Result<f64> {
    check_data(data, map.dim)?;
    let (lambda, radius) = schedules(t, params);
    Ok(batch_epoch_with(map, data, lambda, radius))
}

/// [`batch_epoch`] with an explicit coefficient and radius.
pub fn batch_epoch_with(map: &mut SomMap, data: &[f64], lambda: f64, radius: usize) -> f64 {
    let (labels, distances) = assign(&map.refs, map.dim, data);
    map.labels = labels;
    map.distances = distances;
    update(map, data, lambda, radius)
}

/// Initializes and trains for `params.iterations` epochs.
pub fn train_data(data: &[f64], dim: usize, tickers: Vec<String>, params: &SomParams) -> Result<SomMap> {
    let mut map = initialize(data, dim, tickers, params)?;
    map.error_history.reserve(params.iterations);
    for t in 1..=params.iterations {
        let (lambda, radius) = schedules(t, params);
        // labels already hold the BMUs under the current vectors
        let e = update(&mut map, data, lambda, radius);
        map.error_history.push(e);
    }
    Ok(map)
}

pub fn train(q: &FeatureMatrix, params: &SomParams) -> Result<SomMap> {
    train_data(q.values(), q.n_cols(), q.tickers.clone(), params)
}

pub fn write_som(dir: &Path, map: &SomMap, column_names: &[String]) -> Result<()> {
    if column_names.len() != map.dim {
        return Err(Error::DimensionMismatch {
            expected: map.dim,
            found: column_names.len(),
        });
    }
    let mut header = vec!["i", "j"];
    header.extend(column_names.iter().map(String::as_str));
    let mut out = CsvOut::create(&dir.join("som_refs.csv"), &header)?;
    for c in 0..map.n_cells() {
        let (i, j) = map.coords(c);
        let mut fields = vec![i.to_string(), j.to_string()];
        fields.extend(map.reference(c).iter().map(|&v| fmt_f64(v)));
        out.row(fields)?;
    }
    out.finish()?;

    let mut out = CsvOut::create(&dir.join("som_labels.csv"), &["ticker", "i", "j", "distance"])?;
    for (k, t) in map.tickers.iter().enumerate() {
        let (i, j) = map.coords(map.labels[k]);
        out.row([t.clone(), i.to_string(), j.to_string(), fmt_f64(map.distances[k])])?;
    }
    out.finish()?;

    let mut out = CsvOut::create(&dir.join("som_error.csv"), &["t", "e"])?;
    for (t, e) in map.error_history.iter().enumerate() {
        out.row([(t + 1).to_string(), fmt_f64(*e)])?;
    }
    out.finish()
}

/// Reloads a map written by [`write_som`]; returns it with the column names.
pub fn read_som(dir: &Path) -> Result<(SomMap, Vec<String>)> {
    let refs_path = dir.join("som_refs.csv");
    let table = read_table(&refs_path, &["i", "j"])?;
    let names: Vec<String> = table.headers[2..].to_vec();
    let dim = names.len();
    let mut coords = Vec::new();
    let mut refs = Vec::new();
    for (line, rec) in &table.rows {
        coords.push((table.usize(*line, rec, 0)?, table.usize(*line, rec, 1)?));
        for k in 0..dim {
            refs.push(table.f64(*line, rec, 2 + k)?);
        }
    }
    let rows = coords.iter().map(|c| c.0 + 1).max().unwrap_or(0);
    let cols = coords.iter().map(|c| c.1 + 1).max().unwrap_or(0);
    let in_order = coords
        .iter()
        .enumerate()
        .all(|(c, &(i, j))| i * cols + j == c);
    if !in_order || coords.len() != rows * cols {
        return Err(Error::parse(&refs_path, 0, "cells must be listed row-major"));
    }

    let labels_path = dir.join("som_labels.csv");
    let table = read_table(&labels_path, &["ticker", "i", "j", "distance"])?;
    let mut map = SomMap {
        rows,
        cols,
        dim,
        refs,
        tickers: vec![],
        labels: vec![],
        distances: vec![],
        error_history: vec![],
        degenerate: false,
    };
    for (line, rec) in &table.rows {
        let (i, j) = (table.usize(*line, rec, 1)?, table.usize(*line, rec, 2)?);
        if i >= rows || j >= cols {
            return Err(Error::CellOutOfRange { i, j, rows, cols });
        }
        map.tickers.push(table.field(*line, rec, 0)?.to_string());
        map.labels.push(i * cols + j);
        map.distances.push(table.f64(*line, rec, 3)?);
    }
    let err_path = dir.join("som_error.csv");
    let table = read_table(&err_path, &["t", "e"])?;
    for (line, rec) in &table.rows {
        map.error_history.push(table.f64(*line, rec, 1)?);
    }
    Ok((map, names))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn params(rows: usize, cols: usize, iterations: usize) -> SomParams {
        SomParams {
            rows,
            cols,
            iterations,
            ..SomParams::default()
        }
    }

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|k| format!("x{k}")).collect()
    }

    #[test]
    fn schedule_values() {
        let p = SomParams::default();
        assert_eq!(schedules(1000, &p).0, 0.45);
        assert_eq!(schedules(2000, &p).0, 0.01);
        assert_eq!(schedules(2000, &p).1, 1);
        assert!((1..=2000).all(|t| schedules(t, &p).1 == 1));
        let lin = SomParams {
            xi_start: 10.0,
            ..SomParams::default()
        };
        assert_eq!(schedules(1, &lin).1, 10);
        assert_eq!(schedules(1000, &lin).1, 5);
        assert_eq!(schedules(1990, &lin).1, 1);
        for t in 1..=2000 {
            let (l, r) = schedules(t, &p);
            assert!((0.01..=0.9).contains(&l) && r >= 1);
        }
    }

    #[test]
    fn bmu_hand_cases() {
        let map = SomMap {
            rows: 1,
            cols: 2,
            dim: 2,
            refs: vec![0.0, 0.0, 1.0, 1.0],
            tickers: vec![],
            labels: vec![],
            distances: vec![],
            error_history: vec![],
            degenerate: false,
        };
        assert_eq!(best_matching_unit(&[0.9, 0.9], &map).unwrap(), (0, 1));
        assert_eq!(best_matching_unit(&[1.0, 1.0], &map).unwrap(), (0, 1));
        assert_eq!(best_matching_unit(&[0.5, 0.5], &map).unwrap(), (0, 0));
        assert!(matches!(
            best_matching_unit(&[0.5], &map),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn identical_inputs_degenerate() {
        let data = [1.5, -2.0].repeat(6);
        let map = train_data(&data, 2, names(6), &params(4, 4, 20)).unwrap();
        assert!(map.degenerate);
        assert!(map.refs.chunks(2).all(|w| w == [1.5, -2.0]));
        assert!(map.error_history.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn center_cell_is_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data: Vec<f64> = (0..300).map(|_| rng.sample(StandardNormal)).collect();
        let map = initialize(&data, 3, names(100), &params(6, 4, 1)).unwrap();
        let pca = principal_axes(&data, 3).unwrap();
        let center = map.reference(map.cell(3, 2));
        for k in 0..3 {
            assert!((center[k] - pca.mean[k]).abs() < 1e-15);
        }
    }

    /// Closed-form eigen-decomposition of a symmetric 2x2 matrix.
    fn eig2(a: f64, b: f64, d: f64) -> [(f64, [f64; 2]); 2] {
        let tr = a + d;
        let disc = ((a - d).powi(2) / 4.0 + b * b).sqrt();
        let (l1, l2) = (tr / 2.0 + disc, tr / 2.0 - disc);
        let vec_for = |l: f64| {
            let v = if b.abs() > 1e-300 { [l - d, b] } else if (l - a).abs() < (l - d).abs() { [1.0, 0.0] } else { [0.0, 1.0] };
            let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
            let mut v = [v[0] / n, v[1] / n];
            let lead = if v[0].abs() >= v[1].abs() { 0 } else { 1 };
            if v[lead] < 0.0 {
                v = [-v[0], -v[1]];
            }
            v
        };
        [(l1, vec_for(l1)), (l2, vec_for(l2))]
    }

    #[test]
    fn pca_matches_two_by_two_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut data = Vec::new();
        for _ in 0..500 {
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            data.push(3.0 * z1 + 1.0);
            data.push(1.2 * z1 + 0.5 * z2 - 2.0);
        }
        let n = 500.0;
        let mx = data.iter().step_by(2).sum::<f64>() / n;
        let my = data.iter().skip(1).step_by(2).sum::<f64>() / n;
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for p in data.chunks(2) {
            sxx += (p[0] - mx).powi(2);
            sxy += (p[0] - mx) * (p[1] - my);
            syy += (p[1] - my).powi(2);
        }
        let [(l1, v1), (l2, v2)] = eig2(sxx / (n - 1.0), sxy / (n - 1.0), syy / (n - 1.0));
        let pca = principal_axes(&data, 2).unwrap();
        assert!((pca.sigma1 - l1.sqrt()).abs() < 1e-8);
        assert!((pca.sigma2 - l2.sqrt()).abs() < 1e-8);
        for k in 0..2 {
            assert!((pca.axis1[k] - v1[k]).abs() < 1e-8);
            assert!((pca.axis2[k] - v2[k]).abs() < 1e-8);
        }
        // spread of the projections equals sigma
        let proj: Vec<f64> = data.chunks(2).map(|p| (p[0] - mx) * pca.axis1[0] + (p[1] - my) * pca.axis1[1]).collect();
        let var = proj.iter().map(|v| v * v).sum::<f64>() / (n - 1.0);
        assert!((var.sqrt() - pca.sigma1).abs() < 1e-8);
    }

    #[test]
    fn single_cell_full_step_jumps_to_mean() {
        let data = [0.0, 0.0, 2.0, 0.0, 4.0, 3.0];
        let mut map = initialize(&data, 2, names(3), &params(1, 1, 1)).unwrap();
        let e = batch_epoch_with(&mut map, &data, 1.0, 1);
        assert!((map.refs[0] - 2.0).abs() < 1e-15 && (map.refs[1] - 1.0).abs() < 1e-15);
        let expected: f64 = data.chunks(2).map(|p| ((p[0] - 2.0).powi(2) + (p[1] - 1.0).powi(2)).sqrt()).sum();
        assert!((e - expected).abs() < 1e-12);
    }

    #[test]
    fn fixed_point_is_no_op() {
        let data = [0.0, 5.0, 10.0];
        let mut map = initialize(&data, 1, names(3), &params(3, 1, 1)).unwrap();
        map.refs = data.to_vec();
        let e = batch_epoch_with(&mut map, &data, 0.7, 0);
        assert_eq!(map.refs, data.to_vec());
        assert_eq!(e, 0.0);
    }

    #[test]
    fn three_cell_hand_update() {
        // 3x1 grid, 1-D refs (0, 10, 20); inputs 1, 2 -> cell 0, 11 -> cell 1,
        // 19, 25 -> cell 2. Radius 1, lambda 0.5:
        // S0 = {1,2,11}: mean 14/3; S1 = all: mean 58/5; S2 = {11,19,25}: 55/3
        let data = [1.0, 2.0, 11.0, 19.0, 25.0];
        let mut map = initialize(&data, 1, names(5), &params(3, 1, 1)).unwrap();
        map.refs = vec![0.0, 10.0, 20.0];
        let e = batch_epoch_with(&mut map, &data, 0.5, 1);
        let w0 = 0.0 + 0.5 * (14.0 / 3.0 - 0.0);
        let w1 = 10.0 + 0.5 * (58.0 / 5.0 - 10.0);
        let w2 = 20.0 + 0.5 * (55.0 / 3.0 - 20.0);
        assert!((map.refs[0] - w0).abs() < 1e-12);
        assert!((map.refs[1] - w1).abs() < 1e-12);
        assert!((map.refs[2] - w2).abs() < 1e-12);
        // post-update BMUs: 1,2 -> w0=2.333; 11 -> w1=10.8; 19,25 -> w2=19.1667
        assert_eq!(map.labels, vec![0, 0, 1, 2, 2]);
        let expected = (1.0 - w0).abs() + (2.0 - w0).abs() + (11.0 - w1).abs() + (19.0 - w2).abs() + (25.0 - w2).abs();
        assert!((e - expected).abs() < 1e-12);
    }

    #[test]
    fn labels_consistent_and_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 60;
        let dim = 4;
        let data: Vec<f64> = (0..n * dim).map(|_| rng.sample(StandardNormal)).collect();
        let p = params(5, 5, 40);
        let map = train_data(&data, dim, names(n), &p).unwrap();
        for (k, x) in data.chunks(dim).enumerate() {
            let (i, j) = map.best_matching_unit(x).unwrap();
            assert_eq!(map.cell(i, j), map.labels[k]);
        }
        let perm: Vec<usize> = (0..n).rev().collect();
        let shuffled: Vec<f64> = perm.iter().flat_map(|&k| data[k * dim..(k + 1) * dim].to_vec()).collect();
        let other = train_data(&shuffled, dim, perm.iter().map(|k| format!("x{k}")).collect(), &p).unwrap();
        for (a, b) in map.refs.iter().zip(&other.refs) {
            assert!((a - b).abs() < 1e-9);
        }
        for (k, &orig) in perm.iter().enumerate() {
            assert_eq!(other.labels[k], map.labels[orig]);
        }
    }

    #[test]
    fn som_csv_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data: Vec<f64> = (0..90).map(|_| rng.sample(StandardNormal)).collect();
        let map = train_data(&data, 3, names(30), &params(3, 4, 5)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_som(dir.path(), &map, &names(3)).unwrap();
        let (back, cols) = read_som(dir.path()).unwrap();
        assert_eq!(cols, names(3));
        assert_eq!(back, map);
    }
}
