//! Fixtures shared by the benchmarks.

use eventsom::ingest::{align_windows, panel_from_prices, ReturnKind, ReturnsPanel, WindowIndex};
use eventsom::som::{initialize, SomMap, SomParams};
use eventsom::synth::{generate_scenario, ScenarioSpec};

pub struct StudyFixture {
    pub panel: ReturnsPanel,
    pub windows: WindowIndex,
    pub market_ticker: String,
}

/// A synthetic universe of `n` securities aligned on its event date.
pub fn study_fixture(n: usize, seed: u64) -> StudyFixture {
    let spec = ScenarioSpec {
        n_securities: n,
        seed,
        ..ScenarioSpec::default()
    };
    let scenario = generate_scenario(&spec).expect("scenario");
    let obs = scenario.price_observations().expect("prices");
    let panel = panel_from_prices(&obs, 0.9, ReturnKind::Simple).expect("panel").panel;
    let windows = align_windows(&panel, scenario.event_date(), spec.est_len, spec.half_window).expect("windows");
    StudyFixture {
        panel,
        windows,
        market_ticker: spec.market_ticker,
    }
}

/// Deterministic pseudo-random rows in [-1, 1), `n` by `dim`, row-major.
pub fn feature_cloud(n: usize, dim: usize, seed: u64) -> Vec<f64> {
    let mut state = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
    (0..n * dim)
        .map(|_| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 52) as f64 - 1.0
        })
        .collect()
}

pub fn initialized_map(data: &[f64], dim: usize, params: &SomParams) -> SomMap {
    let n = data.len() / dim;
    let tickers = (0..n).map(|i| format!("S{i:04}")).collect();
    initialize(data, dim, tickers, params).expect("map")
}
