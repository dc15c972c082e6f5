//! Mean potential outcomes by g-formula marginalization of forest
//! predictions, the naive within-level estimator, positivity gating and the
//! APTE trajectory.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{CausalRoleMap, DesignMatrix, Feature, PeriodPlan, Role};
use crate::error::{Error, Result};
use crate::forest::Forest;
use crate::stationarity::{self, CscStationaritySummary, KPSS_MIN_LENGTH};

/// How within-period predictors (mediators) enter a prediction under the
/// treatment level a row did not receive. Rows keep their observed values
/// under their own level in every mode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MediatorHandling {
    /// Mediators are rebuilt forward under the target level: an outcome lag
    /// falling inside the period takes the row's own predicted potential
    /// outcome at that week plus the out-of-bag residual of a donor period
    /// observed under the target level; exposure lags take the donor's
    /// values. The prediction is averaged over donors.
    #[default]
    Sequential,
    /// Mediators are taken whole from each donor row observed at the same
    /// week under the target level, ignoring the row's own history.
    ConditionOnExposure,
    /// Mediators keep the row's observed values.
    HoldObserved,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Contrast {
    #[default]
    Difference,
    Ratio,
}

impl Contrast {
    pub fn apply(self, e1: f64, e0: f64) -> f64 {
        match self {
            Contrast::Difference => e1 - e0,
            Contrast::Ratio => e1 / e0,
        }
    }
}

/// Predicted potential outcomes of one design row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowPpo {
    pub series_week: usize,
    pub period: usize,
    pub week: usize,
    pub treatment: u8,
    pub observed: f64,
    /// `ppo[a]` is the prediction under treatment level `a`.
    pub ppo: [f64; 2],
}

/// Predicts each row's outcome under both treatment levels using the
/// features the forest was fitted on (`features`, in forest column order).
/// The forest must have been fitted on the design rows in order.
pub fn predict_pos(
    forest: &Forest,
    design: &DesignMatrix,
    features: &[Feature],
    handling: MediatorHandling,
) -> Result<Vec<RowPpo>> {
    if forest.trees.is_empty() {
        return Err(Error::Estimation("forest has no trees".into()));
    }
    if features.len() != forest.n_features() {
        return Err(Error::InvalidInput(format!(
            "{} features given for a forest fitted on {}",
            features.len(),
            forest.n_features()
        )));
    }
    let t_col = features
        .iter()
        .position(|&f| f == Feature::Treatment)
        .ok_or_else(|| Error::InvalidInput("treatment is not a model feature".into()))?;
    let x = design.project(features);
    for r in &x {
        forest.predict(r).map(|_| ())?;
    }
    let rows = &design.rows;
    let factual: Vec<f64> = x.par_iter().map(|v| forest.predict_unchecked(v)).collect();
    let residual = |s: usize| -> f64 {
        let fitted = forest
            .oob_predictions
            .get(s)
            .copied()
            .flatten()
            .filter(|_| forest.oob_predictions.len() == rows.len())
            .unwrap_or(factual[s]);
        rows[s].outcome - fitted
    };

    let max_week = rows.iter().map(|r| r.week).max().unwrap_or(0);
    let at: HashMap<(usize, usize), usize> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| ((r.period, r.week), i))
        .collect();
    // donor rows by (week, level)
    let mut pools: Vec<[Vec<usize>; 2]> = vec![[vec![], vec![]]; max_week + 1];
    for (i, r) in rows.iter().enumerate() {
        pools[r.week][r.treatment as usize].push(i);
    }
    let mediators: Vec<Vec<bool>> = (0..=max_week)
        .map(|w| {
            features
                .iter()
                .map(|&f| CausalRoleMap::role(f, w) == Some(Role::Mediator))
                .collect()
        })
        .collect();

    let mut ppo: Vec<[f64; 2]> = rows
        .iter()
        .zip(&factual)
        .map(|(r, &f)| {
            let mut p = [f64::NAN; 2];
            p[r.treatment as usize] = f;
            p
        })
        .collect();

    // weeks in increasing order, so earlier counterfactual weeks of a period
    // are available when its later weeks are rebuilt
    for week in 1..=max_week {
        let counterfactual = |i: usize| -> f64 {
            let a = 1 - rows[i].treatment;
            let mut v = x[i].clone();
            v[t_col] = f64::from(a);
            let pool = &pools[week][a as usize];
            let replace = &mediators[week];
            if handling == MediatorHandling::HoldObserved || pool.is_empty() || !replace.contains(&true) {
                return forest.predict_unchecked(&v);
            }
            let donors: Vec<Vec<f64>> = pool
                .iter()
                .map(|&s| {
                    let mut d = x[s].clone();
                    if handling == MediatorHandling::Sequential {
                        for (c, &f) in features.iter().enumerate() {
                            let Feature::OutcomeLag(k) = f else { continue };
                            if !replace[c] {
                                continue;
                            }
                            let own = at.get(&(rows[i].period, week - k)).map(|&q| ppo[q][a as usize]);
                            let res = at.get(&(rows[s].period, week - k)).map(|&q| residual(q));
                            if let (Some(own), Some(res)) = (own, res) {
                                d[c] = own + res;
                            }
                        }
                    }
                    d
                })
                .collect();
            forest.predict_over_donors(&v, replace, &donors)
        };
        let ids: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].week == week).collect();
        let values: Vec<f64> = ids.par_iter().map(|&i| counterfactual(i)).collect();
        for (&i, v) in ids.iter().zip(values) {
            ppo[i][1 - rows[i].treatment as usize] = v;
        }
    }

    Ok(rows
        .iter()
        .zip(ppo)
        .map(|(r, ppo)| RowPpo {
            series_week: r.series_week,
            period: r.period,
            week: r.week,
            treatment: r.treatment,
            observed: r.outcome,
            ppo,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoEstimate {
    pub week: usize,
    pub level: u8,
    pub mean_po: Option<f64>,
    pub n_rows_marginalized: usize,
    pub naive_mean_po: Option<f64>,
    pub n_rows_naive: usize,
    pub estimable: bool,
    pub reason: Option<String>,
}

/// Positivity: some period labeled `level` lasts at least `week` weeks.
pub fn positivity(plan: &PeriodPlan, level: u8, week: usize) -> bool {
    plan.max_length(level) >= week
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<(f64, usize)> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| (sum / n as f64, n))
}

/// Average of PPO(level) over every row at within-period `week`, whatever
/// treatment the row received; the naive estimate is filled in as well.
pub fn gformula_mean_po(ppos: &[RowPpo], plan: &PeriodPlan, week: usize, level: u8) -> PoEstimate {
    let mut est = naive_mean_po(ppos, plan, week, level);
    if !est.estimable {
        return est;
    }
    match mean_of(ppos.iter().filter(|r| r.week == week).map(|r| r.ppo[level as usize])) {
        Some((m, n)) => {
            est.mean_po = Some(m);
            est.n_rows_marginalized = n;
        }
        None => {
            est.estimable = false;
            est.reason = Some(format!("no design rows at week {week}"));
        }
    }
    est
}

/// Average of PPO(level) over rows at `week` that received `level`.
pub fn naive_mean_po(ppos: &[RowPpo], plan: &PeriodPlan, week: usize, level: u8) -> PoEstimate {
    let mut est = PoEstimate {
        week,
        level,
        mean_po: None,
        n_rows_marginalized: 0,
        naive_mean_po: None,
        n_rows_naive: 0,
        estimable: true,
        reason: None,
    };
    if !positivity(plan, level, week) {
        est.estimable = false;
        est.reason = Some(format!("no period with treatment {level} lasts {week} weeks"));
        return est;
    }
    if !ppos.iter().any(|r| r.week == week) {
        est.estimable = false;
        est.reason = Some(format!("no design rows at week {week}"));
        return est;
    }
    if let Some((m, n)) = mean_of(
        ppos.iter()
            .filter(|r| r.week == week && r.treatment == level)
            .map(|r| r.ppo[level as usize]),
    ) {
        est.naive_mean_po = Some(m);
        est.n_rows_naive = n;
    }
    est
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApteRow {
    pub week: usize,
    pub e1: Option<f64>,
    pub e0: Option<f64>,
    pub apte: Option<f64>,
    pub e1_naive: Option<f64>,
    pub e0_naive: Option<f64>,
    pub apte_naive: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApteTrajectory {
    pub rows: Vec<ApteRow>,
    /// Last week at which both levels are estimable.
    pub horizon: usize,
    pub contrast: Contrast,
}

/// Estimates for both levels at weeks 1..=max period length.
pub fn estimate_all(ppos: &[RowPpo], plan: &PeriodPlan) -> Vec<(PoEstimate, PoEstimate)> {
    let max_week = plan.periods.iter().map(|p| p.length).max().unwrap_or(0);
    (1..=max_week)
        .map(|j| (gformula_mean_po(ppos, plan, j, 1), gformula_mean_po(ppos, plan, j, 0)))
        .collect()
}

/// Combines per-week (level 1, level 0) estimates into contrasts, populated
/// only up to the horizon.
pub fn apte_trajectory(estimates: &[(PoEstimate, PoEstimate)], contrast: Contrast) -> Result<ApteTrajectory> {
    let horizon = estimates
        .iter()
        .take_while(|(e1, e0)| e1.estimable && e0.estimable)
        .count();
    if horizon == 0 {
        return Err(Error::NoEstimableHorizon);
    }
    let rows = estimates
        .iter()
        .map(|(e1, e0)| {
            let in_horizon = e1.week <= horizon;
            let both = |a: Option<f64>, b: Option<f64>| match (a, b) {
                (Some(a), Some(b)) if in_horizon => Some(contrast.apply(a, b)),
                _ => None,
            };
            ApteRow {
                week: e1.week,
                e1: e1.mean_po,
                e0: e0.mean_po,
                apte: both(e1.mean_po, e0.mean_po),
                e1_naive: e1.naive_mean_po,
                e0_naive: e0.naive_mean_po,
                apte_naive: both(e1.naive_mean_po, e0.naive_mean_po),
            }
        })
        .filter(|r| r.e1.is_some() || r.e0.is_some())
        .collect();
    Ok(ApteTrajectory {
        rows,
        horizon,
        contrast,
    })
}

/// Stationarity audit of every CSC predictor at each week up to `horizon`.
/// A week stratum is tested when it has at least the KPSS minimum length;
/// otherwise the predictor's pooled column stands in.
pub fn csc_audit(
    design: &DesignMatrix,
    roles: &CausalRoleMap,
    horizon: usize,
) -> Result<CscStationaritySummary> {
    let mut entries = Vec::new();
    for j in 1..=horizon {
        for f in roles.with_role(Role::Csc, j) {
            let stratum: Vec<f64> = design
                .rows
                .iter()
                .filter(|r| r.week == j)
                .map(|r| r.value(f))
                .collect();
            let (series, source) = if stratum.len() >= KPSS_MIN_LENGTH {
                (stratum, "week")
            } else {
                (design.rows.iter().map(|r| r.value(f)).collect(), "pooled")
            };
            entries.push(((j, f.to_string()), series, source.to_string()));
        }
    }
    stationarity::csc_stationarity_labeled(entries)
}
