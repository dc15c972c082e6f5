//! Unit-root tests (augmented Dickey-Fuller, KPSS) and the overall
//! stationarity summary of the confounders/simultaneous causes.
//!
//! p-values come from linear interpolation in the usual critical-value
//! tables, so they are only meaningful inside the tabulated range; the
//! `p_value_bracket` reports the two table levels that enclose the statistic.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::interp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Reject,
    FailToReject,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitRootResult {
    pub statistic: f64,
    pub lag_order: usize,
    /// Interpolated p-value, clamped to the table range.
    pub p_value: f64,
    pub p_value_bracket: (f64, f64),
    pub decision_at_005: Decision,
}

/// Deterministic terms of the ADF regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdfTrend {
    Constant,
    #[default]
    ConstantTrend,
}

const TABLE_SIZES: [f64; 6] = [25.0, 50.0, 100.0, 250.0, 500.0, 100_000.0];
const ADF_PROBS: [f64; 8] = [0.01, 0.025, 0.05, 0.10, 0.90, 0.95, 0.975, 0.99];

// Dickey-Fuller t distribution quantiles; rows are sample sizes, columns the
// probabilities in ADF_PROBS.
const ADF_TREND_TABLE: [[f64; 8]; 6] = [
    [-4.38, -3.95, -3.60, -3.24, -1.14, -0.80, -0.50, -0.15],
    [-4.15, -3.80, -3.50, -3.18, -1.19, -0.87, -0.58, -0.24],
    [-4.04, -3.73, -3.45, -3.15, -1.22, -0.90, -0.62, -0.28],
    [-3.99, -3.69, -3.43, -3.13, -1.23, -0.92, -0.64, -0.31],
    [-3.98, -3.68, -3.42, -3.13, -1.24, -0.93, -0.65, -0.32],
    [-3.96, -3.66, -3.41, -3.12, -1.25, -0.94, -0.66, -0.33],
];

#[allow(clippy::approx_constant)]
const ADF_CONSTANT_TABLE: [[f64; 8]; 6] = [
    [-3.75, -3.33, -3.00, -2.62, -0.37, 0.00, 0.34, 0.72],
    [-3.58, -3.22, -2.93, -2.60, -0.40, -0.03, 0.29, 0.66],
    [-3.51, -3.17, -2.89, -2.58, -0.42, -0.05, 0.26, 0.63],
    [-3.46, -3.14, -2.88, -2.57, -0.42, -0.06, 0.24, 0.62],
    [-3.44, -3.13, -2.87, -2.57, -0.43, -0.07, 0.24, 0.61],
    [-3.43, -3.12, -2.86, -2.57, -0.44, -0.07, 0.23, 0.60],
];

/// Level-stationarity critical values at 10%, 5%, 2.5% and 1%.
pub const KPSS_CRITICAL: [f64; 4] = [0.347, 0.463, 0.574, 0.739];
const KPSS_PROBS: [f64; 4] = [0.10, 0.05, 0.025, 0.01];

/// Bracket of table probabilities around a statistic, given table
/// quantiles sorted increasing with matching probabilities.
fn bracket(quantiles: &[f64], probs: &[f64], stat: f64) -> (f64, f64) {
    let lo_p = probs[0].min(probs[probs.len() - 1]);
    let hi_p = probs[0].max(probs[probs.len() - 1]);
    if stat < quantiles[0] {
        return if probs[0] <= lo_p { (0.0, lo_p) } else { (hi_p, 1.0) };
    }
    let last = quantiles.len() - 1;
    if stat > quantiles[last] {
        return if probs[last] >= hi_p { (hi_p, 1.0) } else { (0.0, lo_p) };
    }
    let i = quantiles
        .windows(2)
        .position(|w| stat >= w[0] && stat <= w[1])
        .unwrap();
    let (a, b) = (probs[i], probs[i + 1]);
    (a.min(b), a.max(b))
}

fn check_series(series: &[f64], needed: usize) -> Result<()> {
    if series.len() < needed {
        return Err(Error::TooShort {
            needed,
            got: series.len(),
        });
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("series contains non-finite values".into()));
    }
    let first = series[0];
    if series.iter().all(|&v| v == first) {
        return Err(Error::Degenerate("series has zero variance".into()));
    }
    Ok(())
}

pub fn default_adf_lag(n: usize) -> usize {
    ((n.saturating_sub(1)) as f64).cbrt().floor() as usize
}

pub fn default_kpss_lag(n: usize) -> usize {
    (3.0 * (n as f64).sqrt() / 13.0).floor() as usize
}

/// Minimum series length for an ADF test at `lag`.
pub fn adf_min_length(lag: usize) -> usize {
    3 * (lag + 2)
}

pub const KPSS_MIN_LENGTH: usize = 10;

/// Augmented Dickey-Fuller test of a unit root against stationarity
/// (around a trend by default). Rejection is evidence of stationarity.
pub fn adf_test(series: &[f64], lag_order: Option<usize>) -> Result<UnitRootResult> {
    adf_test_with(series, lag_order, AdfTrend::ConstantTrend)
}

pub fn adf_test_with(
    series: &[f64],
    lag_order: Option<usize>,
    trend: AdfTrend,
) -> Result<UnitRootResult> {
    let n = series.len();
    let lag = lag_order.unwrap_or_else(|| default_adf_lag(n));
    check_series(series, adf_min_length(lag).max(4))?;

    let diff: Vec<f64> = series.windows(2).map(|w| w[1] - w[0]).collect();
    let m = diff.len();
    let n_det = match trend {
        AdfTrend::Constant => 1,
        AdfTrend::ConstantTrend => 2,
    };
    let cols = n_det + 1 + lag;
    let rows = m - lag;
    if rows <= cols {
        return Err(Error::TooShort {
            needed: n + cols - rows + 1,
            got: n,
        });
    }
    let level_col = n_det;
    let design = DMatrix::from_fn(rows, cols, |r, c| {
        let t = r + lag;
        match c {
            0 => 1.0,
            1 if n_det == 2 => t as f64,
            c if c == level_col => series[t],
            c => diff[t - (c - level_col)],
        }
    });
    let target = DVector::from_fn(rows, |r, _| diff[r + lag]);

    let xtx = design.transpose() * &design;
    let inv = xtx
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("singular ADF regression".into()))?;
    let beta = &inv * design.transpose() * &target;
    let resid = &target - &design * &beta;
    let dof = (rows - cols) as f64;
    let s2 = resid.dot(&resid) / dof;
    let se = (s2 * inv[(level_col, level_col)]).sqrt();
    if !(se.is_finite() && se > 0.0) {
        return Err(Error::Degenerate("zero residual variance in ADF regression".into()));
    }
    let statistic = beta[level_col] / se;

    let table = match trend {
        AdfTrend::Constant => &ADF_CONSTANT_TABLE,
        AdfTrend::ConstantTrend => &ADF_TREND_TABLE,
    };
    let size = m as f64;
    let quantiles: Vec<f64> = (0..ADF_PROBS.len())
        .map(|j| {
            let col: Vec<f64> = table.iter().map(|row| row[j]).collect();
            interp(&TABLE_SIZES, &col, size)
        })
        .collect();
    let p_value = interp(&quantiles, &ADF_PROBS, statistic);
    let critical_5 = quantiles[2];
    Ok(UnitRootResult {
        statistic,
        lag_order: lag,
        p_value,
        p_value_bracket: bracket(&quantiles, &ADF_PROBS, statistic),
        decision_at_005: if statistic < critical_5 {
            Decision::Reject
        } else {
            Decision::FailToReject
        },
    })
}

/// KPSS test of level stationarity. Rejection is evidence of a unit root.
pub fn kpss_test(series: &[f64], lag_order: Option<usize>) -> Result<UnitRootResult> {
    check_series(series, KPSS_MIN_LENGTH)?;
    let n = series.len();
    let lag = lag_order.unwrap_or_else(|| default_kpss_lag(n));
    if lag >= n {
        return Err(Error::InvalidInput(format!(
            "KPSS lag {lag} must be below the series length {n}"
        )));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let e: Vec<f64> = series.iter().map(|v| v - mean).collect();

    let mut partial = 0.0;
    let mut eta = 0.0;
    for v in &e {
        partial += v;
        eta += partial * partial;
    }
    let nf = n as f64;
    eta /= nf * nf;

    let mut lrv: f64 = e.iter().map(|v| v * v).sum();
    for i in 1..=lag {
        let weight = 1.0 - i as f64 / (lag as f64 + 1.0);
        let gamma: f64 = e[i..].iter().zip(&e[..n - i]).map(|(a, b)| a * b).sum();
        lrv += 2.0 * weight * gamma;
    }
    lrv /= nf;
    if lrv <= 0.0 {
        return Err(Error::Degenerate("non-positive long-run variance".into()));
    }
    let statistic = eta / lrv;
    Ok(UnitRootResult {
        statistic,
        lag_order: lag,
        p_value: interp(&KPSS_CRITICAL, &KPSS_PROBS, statistic),
        p_value_bracket: bracket(&KPSS_CRITICAL, &KPSS_PROBS, statistic),
        decision_at_005: if statistic > KPSS_CRITICAL[1] {
            Decision::Reject
        } else {
            Decision::FailToReject
        },
    })
}

/// Key of a confounder/simultaneous-cause series: within-period week and
/// variable name.
pub type PanelKey = (usize, String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarityFlag {
    pub week: usize,
    pub variable: String,
    /// 1 if the series passed either test.
    pub flag: u8,
    pub adf: Option<UnitRootResult>,
    pub kpss: Option<UnitRootResult>,
    /// Whether the series was the week stratum or the variable's pooled column.
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CscStationaritySummary {
    pub per_variable_flags: Vec<StationarityFlag>,
    pub overall: f64,
}

/// Flags each series as stationary when ADF rejects a unit root or KPSS
/// fails to reject stationarity; a series on which only one test can be
/// computed is judged by that test alone.
pub fn csc_stationarity(panel: &BTreeMap<PanelKey, Vec<f64>>) -> Result<CscStationaritySummary> {
    csc_stationarity_labeled(panel.iter().map(|(k, v)| (k.clone(), v.clone(), "stratum".to_string())))
}

pub(crate) fn csc_stationarity_labeled(
    entries: impl IntoIterator<Item = (PanelKey, Vec<f64>, String)>,
) -> Result<CscStationaritySummary> {
    let mut flags = Vec::new();
    for ((week, variable), series, source) in entries {
        let adf = adf_test(&series, None).ok();
        let kpss = kpss_test(&series, None).ok();
        let pass = match (adf, kpss) {
            (None, None) => {
                log::warn!("stationarity of {variable} at week {week} could not be tested");
                continue;
            }
            (a, k) => {
                a.is_some_and(|r| r.decision_at_005 == Decision::Reject)
                    || k.is_some_and(|r| r.decision_at_005 == Decision::FailToReject)
            }
        };
        flags.push(StationarityFlag {
            week,
            variable,
            flag: u8::from(pass),
            adf,
            kpss,
            source,
        });
    }
    if flags.is_empty() {
        return Err(Error::InvalidInput("empty stationarity panel".into()));
    }
    let overall = flags.iter().map(|f| f64::from(f.flag)).sum::<f64>() / flags.len() as f64;
    Ok(CscStationaritySummary {
        per_variable_flags: flags,
        overall,
    })
}
