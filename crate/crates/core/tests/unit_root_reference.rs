//! ADF and KPSS statistics against values from an independent implementation
//! (statsmodels, cross-checked by a direct least-squares computation; see
//! `fixtures/gen_unit_root_reference.py`).

use apte::stationarity::{adf_test, default_adf_lag, default_kpss_lag, kpss_test};
use serde::Deserialize;

#[derive(Deserialize)]
struct Case {
    kind: String,
    adf_lag: usize,
    kpss_lag: usize,
    adf_statistic: f64,
    kpss_statistic: f64,
    series: Vec<f64>,
}

#[derive(Deserialize)]
struct Reference {
    cases: Vec<Case>,
}

fn cases() -> Vec<Case> {
    let r: Reference = serde_json::from_str(include_str!("fixtures/unit_root_reference.json")).unwrap();
    assert_eq!(r.cases.len(), 10);
    r.cases
}

#[test]
fn adf_statistics_match_to_three_decimals() {
    for (i, c) in cases().iter().enumerate() {
        let got = adf_test(&c.series, Some(c.adf_lag)).unwrap();
        assert_eq!(got.lag_order, c.adf_lag);
        assert!(
            (got.statistic - c.adf_statistic).abs() < 5e-4,
            "case {i} ({}): {} vs {}",
            c.kind,
            got.statistic,
            c.adf_statistic
        );
    }
}

#[test]
fn kpss_statistics_match_to_three_decimals() {
    for (i, c) in cases().iter().enumerate() {
        let got = kpss_test(&c.series, Some(c.kpss_lag)).unwrap();
        assert!(
            (got.statistic - c.kpss_statistic).abs() < 5e-4,
            "case {i} ({}): {} vs {}",
            c.kind,
            got.statistic,
            c.kpss_statistic
        );
    }
}

#[test]
fn fixture_lags_are_the_default_rules() {
    for c in cases() {
        assert_eq!(default_adf_lag(c.series.len()), c.adf_lag);
        assert_eq!(default_kpss_lag(c.series.len()), c.kpss_lag);
        assert_eq!(adf_test(&c.series, None).unwrap().lag_order, c.adf_lag);
    }
}

#[test]
fn random_walks_are_not_called_stationary_by_kpss() {
    let walks: Vec<Case> = cases().into_iter().filter(|c| c.kind == "walk").collect();
    assert!(!walks.is_empty());
    for c in walks {
        assert!(c.kpss_statistic > 0.463);
        assert!(kpss_test(&c.series, Some(c.kpss_lag)).unwrap().statistic > 0.463);
    }
}
