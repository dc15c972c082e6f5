//! Treatment periods, exposure dichotomization, the lagged design matrix and
//! importance-based predictor selection.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::changepoint::Segmentation;
use crate::error::{Error, Result};
use crate::forest::{fit_forest, oob_mse, ForestParams, ImportanceTable};
use crate::seed::{self, stream};
use crate::series::WeeklySeries;
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Period {
    /// 1-based position of the first week within the analyzed series.
    pub start_week: usize,
    pub length: usize,
    pub mean_exposure: f64,
}

impl Period {
    pub fn end_week(&self) -> usize {
        self.start_week + self.length - 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodPlan {
    pub periods: Vec<Period>,
    /// One label per period (1 = high, 0 = low); empty until labeled.
    pub treatment_labels: Vec<u8>,
    /// Exposure cutoff behind the labels, if they came from one.
    pub threshold: Option<f64>,
    pub min_period_length: usize,
}

impl PeriodPlan {
    /// Periods of the given lengths tiling `exposure` from its first week.
    pub fn from_lengths(exposure: &[f64], lengths: &[usize]) -> Result<PeriodPlan> {
        if lengths.contains(&0) {
            return Err(Error::InvalidInput("period lengths must be positive".into()));
        }
        let total: usize = lengths.iter().sum();
        if total != exposure.len() {
            return Err(Error::InvalidInput(format!(
                "period lengths cover {total} weeks but the series has {}",
                exposure.len()
            )));
        }
        let mut start = 0;
        let periods = lengths
            .iter()
            .map(|&len| {
                let p = Period {
                    start_week: start + 1,
                    length: len,
                    mean_exposure: stats::mean(&exposure[start..start + len]),
                };
                start += len;
                p
            })
            .collect();
        Ok(PeriodPlan {
            periods,
            treatment_labels: Vec::new(),
            threshold: None,
            min_period_length: 1,
        })
    }

    pub fn total_weeks(&self) -> usize {
        self.periods.iter().map(|p| p.length).sum()
    }

    pub fn is_labeled(&self) -> bool {
        self.treatment_labels.len() == self.periods.len()
    }

    /// Labels every period 1 when its mean exposure is at least `threshold`.
    pub fn label(&self, threshold: f64) -> PeriodPlan {
        PeriodPlan {
            treatment_labels: self
                .periods
                .iter()
                .map(|p| u8::from(p.mean_exposure >= threshold))
                .collect(),
            threshold: Some(threshold),
            ..self.clone()
        }
    }

    /// Attaches externally known labels (for instance a randomized design).
    pub fn with_labels(&self, labels: Vec<u8>) -> Result<PeriodPlan> {
        if labels.len() != self.periods.len() {
            return Err(Error::InvalidInput(format!(
                "{} labels for {} periods",
                labels.len(),
                self.periods.len()
            )));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::InvalidInput("treatment labels must be 0 or 1".into()));
        }
        Ok(PeriodPlan {
            treatment_labels: labels,
            threshold: None,
            ..self.clone()
        })
    }

    /// Whether both treatment levels occur.
    pub fn has_both_levels(&self) -> bool {
        self.treatment_labels.contains(&0) && self.treatment_labels.contains(&1)
    }

    /// 0-based period index and 1-based week-in-period for series week `week` (1-based).
    pub fn locate(&self, week: usize) -> Option<(usize, usize)> {
        self.periods
            .iter()
            .position(|p| week >= p.start_week && week <= p.end_week())
            .map(|i| (i, week - self.periods[i].start_week + 1))
    }

    /// Longest observed period length among periods labeled `level`.
    pub fn max_length(&self, level: u8) -> usize {
        self.periods
            .iter()
            .zip(&self.treatment_labels)
            .filter(|(_, &l)| l == level)
            .map(|(p, _)| p.length)
            .max()
            .unwrap_or(0)
    }
}

/// Turns a segmentation of `exposure` into periods, folding segments shorter
/// than `min_length` into the neighbor whose mean is closer (the earlier
/// neighbor on ties) until none remain or a single period is left.
pub fn build_periods(exposure: &[f64], segmentation: &Segmentation, min_length: usize) -> Result<PeriodPlan> {
    if segmentation.changepoints.is_empty() {
        return Err(Error::InvalidInput("empty segmentation".into()));
    }
    if segmentation.changepoints.last() != Some(&exposure.len()) {
        return Err(Error::InvalidInput(format!(
            "segmentation ends at {} but the series has {} weeks",
            segmentation.changepoints.last().unwrap(),
            exposure.len()
        )));
    }
    let mut bounds: Vec<std::ops::Range<usize>> = segmentation.segments();
    let mean = |r: &std::ops::Range<usize>| stats::mean(&exposure[r.clone()]);
    while bounds.len() > 1 {
        let Some(i) = bounds.iter().position(|r| r.len() < min_length) else {
            break;
        };
        let own = mean(&bounds[i]);
        let into_left = match (i.checked_sub(1), bounds.get(i + 1)) {
            (Some(l), Some(r)) => (mean(&bounds[l]) - own).abs() <= (mean(r) - own).abs(),
            (Some(_), None) => true,
            _ => false,
        };
        let removed = bounds.remove(i);
        if into_left {
            bounds[i - 1].end = removed.end;
        } else {
            bounds[i].start = removed.start;
        }
    }
    let lengths: Vec<usize> = bounds.iter().map(|r| r.len()).collect();
    let mut plan = PeriodPlan::from_lengths(exposure, &lengths)?;
    plan.min_period_length = min_length;
    Ok(plan)
}

/// Sample quantiles (type 7) of the period mean exposures.
pub fn threshold_candidates(plan: &PeriodPlan, quantiles: &[f64]) -> Result<Vec<f64>> {
    if plan.periods.is_empty() {
        return Err(Error::InvalidInput("no periods".into()));
    }
    if let Some(q) = quantiles.iter().find(|q| !(0.0..=1.0).contains(*q)) {
        return Err(Error::Config(format!("quantile {q} outside [0, 1]")));
    }
    let means: Vec<f64> = plan.periods.iter().map(|p| p.mean_exposure).collect();
    Ok(quantiles.iter().map(|&q| stats::quantile(&means, q)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lags {
    pub outcome: usize,
    pub exposure: usize,
}

impl Default for Lags {
    fn default() -> Self {
        Lags {
            outcome: 12,
            exposure: 12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateEvaluation {
    pub threshold: f64,
    /// `None` when the candidate left a single treatment level.
    pub oob_mse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSelection {
    pub threshold: f64,
    pub evaluations: Vec<CandidateEvaluation>,
}

/// Labels the plan at each candidate, fits a forest on the full design and
/// keeps the candidate with the smallest OOB MSE (smaller threshold on ties).
///
/// Every candidate's forest uses the same seed, so candidates that induce the
/// same labeling score identically.
pub fn select_threshold(
    series: &WeeklySeries,
    plan: &PeriodPlan,
    candidates: &[f64],
    lags: Lags,
    params: &ForestParams,
) -> Result<ThresholdSelection> {
    if candidates.len() < 2 {
        return Err(Error::Config("at least two threshold candidates are required".into()));
    }
    let fit_params = ForestParams {
        seed: seed::derive(params.seed, &[stream::THRESHOLD]),
        ..*params
    };
    let evaluations: Vec<CandidateEvaluation> = candidates
        .par_iter()
        .map(|&threshold| {
            let labeled = plan.label(threshold);
            if !labeled.has_both_levels() {
                log::warn!("threshold {threshold} yields a single treatment level; skipped");
                return Ok(CandidateEvaluation {
                    threshold,
                    oob_mse: None,
                });
            }
            let design = build_design_matrix(series, &labeled, lags)?;
            let forest = fit_forest(&design.features(), &design.targets(), &design.feature_names(), &fit_params)?;
            Ok(CandidateEvaluation {
                threshold,
                oob_mse: Some(oob_mse(&forest, &design.targets())?),
            })
        })
        .collect::<Result<_>>()?;

    let best = evaluations
        .iter()
        .filter_map(|e| e.oob_mse.map(|m| (e.threshold, m)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.total_cmp(&b.0)))
        .ok_or_else(|| Error::Estimation("every threshold candidate yields a single treatment level".into()))?;
    Ok(ThresholdSelection {
        threshold: best.0,
        evaluations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Feature {
    Treatment,
    OutcomeLag(usize),
    ExposureLag(usize),
    Period,
    Week,
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Feature::Treatment => f.write_str("treatment"),
            Feature::OutcomeLag(k) => write!(f, "outcome_lag{k}"),
            Feature::ExposureLag(k) => write!(f, "exposure_lag{k}"),
            Feature::Period => f.write_str("period"),
            Feature::Week => f.write_str("week"),
        }
    }
}

impl FromStr for Feature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lag = |rest: &str| {
            rest.parse::<usize>()
                .ok()
                .filter(|&k| k > 0)
                .ok_or_else(|| Error::InvalidInput(format!("unknown feature '{s}'")))
        };
        match s {
            "treatment" => Ok(Feature::Treatment),
            "period" => Ok(Feature::Period),
            "week" => Ok(Feature::Week),
            _ => {
                if let Some(rest) = s.strip_prefix("outcome_lag") {
                    Ok(Feature::OutcomeLag(lag(rest)?))
                } else if let Some(rest) = s.strip_prefix("exposure_lag") {
                    Ok(Feature::ExposureLag(lag(rest)?))
                } else {
                    Err(Error::InvalidInput(format!("unknown feature '{s}'")))
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignRow {
    /// 1-based week within the analyzed series.
    pub series_week: usize,
    pub outcome: f64,
    pub treatment: u8,
    /// `outcome_lags[k - 1]` is the outcome k weeks earlier.
    pub outcome_lags: Vec<f64>,
    pub exposure_lags: Vec<f64>,
    /// 1-based period index.
    pub period: usize,
    /// 1-based week within the period.
    pub week: usize,
}

impl DesignRow {
    pub fn value(&self, feature: Feature) -> f64 {
        match feature {
            Feature::Treatment => f64::from(self.treatment),
            Feature::OutcomeLag(k) => self.outcome_lags[k - 1],
            Feature::ExposureLag(k) => self.exposure_lags[k - 1],
            Feature::Period => self.period as f64,
            Feature::Week => self.week as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    pub rows: Vec<DesignRow>,
    pub lags: Lags,
}

impl DesignMatrix {
    /// Full feature list: treatment, outcome lags, exposure lags, period, week.
    pub fn all_features(&self) -> Vec<Feature> {
        std::iter::once(Feature::Treatment)
            .chain((1..=self.lags.outcome).map(Feature::OutcomeLag))
            .chain((1..=self.lags.exposure).map(Feature::ExposureLag))
            .chain([Feature::Period, Feature::Week])
            .collect()
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.all_features().iter().map(ToString::to_string).collect()
    }

    pub fn features(&self) -> Vec<Vec<f64>> {
        self.project(&self.all_features())
    }

    pub fn project(&self, features: &[Feature]) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|r| features.iter().map(|&f| r.value(f)).collect())
            .collect()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.outcome).collect()
    }
}

/// One row per week whose full lag window lies inside the series; lags reach
/// across period boundaries.
pub fn build_design_matrix(series: &WeeklySeries, plan: &PeriodPlan, lags: Lags) -> Result<DesignMatrix> {
    let y = series.outcomes()?;
    let x = series.exposures()?;
    let n = y.len();
    let window = lags.outcome.max(lags.exposure);
    if n <= window {
        return Err(Error::TooShort {
            needed: window + 1,
            got: n,
        });
    }
    if plan.total_weeks() != n {
        return Err(Error::InvalidInput(format!(
            "period plan covers {} weeks but the series has {n}",
            plan.total_weeks()
        )));
    }
    if !plan.is_labeled() {
        return Err(Error::InvalidInput("period plan has no treatment labels".into()));
    }
    let rows = (window..n)
        .map(|i| {
            let week = i + 1;
            let (period, j) = plan.locate(week).expect("plan tiles the series");
            DesignRow {
                series_week: week,
                outcome: y[i],
                treatment: plan.treatment_labels[period],
                outcome_lags: (1..=lags.outcome).map(|k| y[i - k]).collect(),
                exposure_lags: (1..=lags.exposure).map(|k| x[i - k]).collect(),
                period: period + 1,
                week: j,
            }
        })
        .collect();
    Ok(DesignMatrix { rows, lags })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Confounder or simultaneous cause: marginalized without conditioning on treatment.
    Csc,
    /// Follows the period's treatment assignment: conditioned on treatment.
    Mediator,
    /// Within-period week: fixed at the week being estimated.
    Conditioning,
}

/// Causal role of every retained predictor other than treatment, as a
/// function of the within-period week.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalRoleMap {
    pub features: Vec<Feature>,
}

impl CausalRoleMap {
    pub fn new(features: &[Feature]) -> Self {
        CausalRoleMap {
            features: features
                .iter()
                .copied()
                .filter(|&f| f != Feature::Treatment)
                .collect(),
        }
    }

    /// Role of `feature` at within-period week `week` (1-based). A lag of k
    /// weeks precedes the period start exactly when k ≥ week.
    pub fn role(feature: Feature, week: usize) -> Option<Role> {
        match feature {
            Feature::Treatment => None,
            Feature::OutcomeLag(k) | Feature::ExposureLag(k) => {
                Some(if k >= week { Role::Csc } else { Role::Mediator })
            }
            Feature::Period => Some(Role::Csc),
            Feature::Week => Some(Role::Conditioning),
        }
    }

    /// Features of the map holding `role` at `week`.
    pub fn with_role(&self, role: Role, week: usize) -> Vec<Feature> {
        self.features
            .iter()
            .copied()
            .filter(|&f| Self::role(f, week) == Some(role))
            .collect()
    }

    /// (feature, week, role) triples for weeks 1..=max_week.
    pub fn table(&self, max_week: usize) -> Vec<(String, usize, Role)> {
        (1..=max_week)
            .flat_map(|j| {
                self.features
                    .iter()
                    .filter_map(move |&f| Self::role(f, j).map(|r| (f.to_string(), j, r)))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorSelection {
    /// Retained features in design order, treatment first.
    pub features: Vec<Feature>,
    pub roles: CausalRoleMap,
}

/// Keeps the `k` most important features plus treatment.
pub fn select_predictors(
    importances: &ImportanceTable,
    features: &[Feature],
    k: usize,
) -> Result<PredictorSelection> {
    if k == 0 {
        return Err(Error::Config("predictor count must be at least 1".into()));
    }
    if k > features.len() {
        return Err(Error::Config(format!(
            "cannot keep {k} of {} predictors",
            features.len()
        )));
    }
    if importances.entries.len() != features.len() {
        return Err(Error::InvalidInput(
            "importance table does not match the feature list".into(),
        ));
    }
    let mut keep = vec![false; features.len()];
    for i in importances.ranking().into_iter().take(k) {
        keep[i] = true;
    }
    let selected: Vec<Feature> = features
        .iter()
        .zip(&keep)
        .filter(|&(&f, &kept)| kept || f == Feature::Treatment)
        .map(|(&f, _)| f)
        .collect();
    let mut ordered = vec![Feature::Treatment];
    ordered.extend(selected.into_iter().filter(|&f| f != Feature::Treatment));
    Ok(PredictorSelection {
        roles: CausalRoleMap::new(&ordered),
        features: ordered,
    })
}

#[derive(Serialize, Deserialize)]
struct PeriodRecord {
    period: usize,
    start_week: usize,
    length: usize,
    mean_exposure: f64,
    treatment: Option<u8>,
}

pub fn write_periods_csv<W: Write>(plan: &PeriodPlan, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (i, p) in plan.periods.iter().enumerate() {
        w.serialize(PeriodRecord {
            period: i + 1,
            start_week: p.start_week,
            length: p.length,
            mean_exposure: p.mean_exposure,
            treatment: plan.treatment_labels.get(i).copied(),
        })?;
    }
    w.flush().map_err(|e| Error::io("periods", e))?;
    Ok(())
}

/// Reads a periods table; rows must tile consecutive weeks from week 1.
pub fn read_periods_csv<R: Read>(source: R) -> Result<PeriodPlan> {
    let mut periods = Vec::new();
    let mut labels = Vec::new();
    let mut next_start = 1;
    for (i, rec) in csv::Reader::from_reader(source).deserialize::<PeriodRecord>().enumerate() {
        let rec = rec?;
        let line = i + 2;
        if rec.start_week != next_start || rec.length == 0 {
            return Err(Error::Parse {
                line,
                message: format!("period {} does not continue at week {next_start}", rec.period),
            });
        }
        next_start += rec.length;
        periods.push(Period {
            start_week: rec.start_week,
            length: rec.length,
            mean_exposure: rec.mean_exposure,
        });
        labels.extend(rec.treatment);
    }
    if periods.is_empty() {
        return Err(Error::InvalidInput("periods table is empty".into()));
    }
    if !labels.is_empty() && labels.len() != periods.len() {
        return Err(Error::InvalidInput("treatment column is only partly filled".into()));
    }
    Ok(PeriodPlan {
        periods,
        treatment_labels: labels,
        threshold: None,
        min_period_length: 1,
    })
}

#[cfg(test)]
pub(crate) mod tests_support {
    use crate::series::{StartDay, WeeklyPoint, WeeklySeries};

    pub(crate) fn weekly(y: &[f64], x: &[f64]) -> WeeklySeries {
        WeeklySeries {
            points: y
                .iter()
                .zip(x)
                .enumerate()
                .map(|(i, (&y, &x))| WeeklyPoint {
                    week_index: i + 1,
                    outcome: Some(y),
                    exposure: Some(x),
                    imputed_outcome: false,
                    imputed_exposure: false,
                    days_recorded: 7,
                })
                .collect(),
            center: 0.0,
            start_day: StartDay::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::changepoint::Method;
    use crate::forest::Importance;
    use super::tests_support::weekly;
    use proptest::prelude::*;

    fn segmentation(ends: &[usize]) -> Segmentation {
        Segmentation {
            changepoints: ends.to_vec(),
            segment_means: vec![0.0; ends.len()],
            penalty_value: 0.0,
            method: Method::Pelt,
        }
    }

    #[test]
    fn two_segments_become_two_periods() {
        let x = [0.1, 0.1, 0.1, 0.1, 0.1, 0.9, 0.9, 0.9, 0.9, 0.9];
        let plan = build_periods(&x, &segmentation(&[5, 10]), 1).unwrap();
        assert_eq!(plan.periods.len(), 2);
        assert!((plan.periods[0].mean_exposure - 0.1).abs() < 1e-12);
        assert!((plan.periods[1].mean_exposure - 0.9).abs() < 1e-12);
        assert_eq!(plan.periods[1].start_week, 6);
    }

    #[test]
    fn short_segment_merges_toward_closer_mean() {
        let x = [0.2, 0.2, 0.25, 0.8, 0.8];
        let plan = build_periods(&x, &segmentation(&[2, 3, 5]), 2).unwrap();
        let lengths: Vec<usize> = plan.periods.iter().map(|p| p.length).collect();
        assert_eq!(lengths, vec![3, 2]);
        assert!((plan.periods[0].mean_exposure - 0.65 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn merge_tie_goes_to_earlier_neighbor() {
        let x = [0.2, 0.2, 0.5, 0.8, 0.8];
        let plan = build_periods(&x, &segmentation(&[2, 3, 5]), 2).unwrap();
        assert_eq!(plan.periods[0].length, 3);
    }

    #[test]
    fn empty_segmentation_rejected() {
        assert!(build_periods(&[0.1], &segmentation(&[]), 1).is_err());
    }

    #[test]
    fn label_extremes() {
        let x = [0.1, 0.1, 0.9, 0.9];
        let plan = build_periods(&x, &segmentation(&[2, 4]), 1).unwrap();
        assert_eq!(plan.label(0.0).treatment_labels, vec![1, 1]);
        assert_eq!(plan.label(1.01).treatment_labels, vec![0, 0]);
        assert_eq!(plan.label(0.5).treatment_labels, vec![0, 1]);
    }

    #[test]
    fn lag_window_indexing() {
        let y: Vec<f64> = (1..=20).map(f64::from).collect();
        let x = vec![0.5; 20];
        let plan = PeriodPlan::from_lengths(&x, &[20]).unwrap().label(0.0);
        let d = build_design_matrix(&weekly(&y, &x), &plan, Lags { outcome: 2, exposure: 0 }).unwrap();
        let week3 = &d.rows[0];
        assert_eq!(week3.series_week, 3);
        assert_eq!(week3.outcome_lags, vec![2.0, 1.0]);

        let d = build_design_matrix(&weekly(&y, &x), &plan, Lags { outcome: 3, exposure: 12 }).unwrap();
        assert_eq!(d.rows[0].series_week, 13);
        assert_eq!(d.feature_names().len(), 18);
    }

    #[test]
    fn lags_cross_period_boundaries() {
        let y: Vec<f64> = (1..=10).map(f64::from).collect();
        let x = [0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0];
        let plan = PeriodPlan::from_lengths(&x, &[5, 5]).unwrap().label(0.5);
        let d = build_design_matrix(&weekly(&y, &x), &plan, Lags { outcome: 2, exposure: 2 }).unwrap();
        let row = d.rows.iter().find(|r| r.series_week == 6).unwrap();
        assert_eq!((row.period, row.week, row.treatment), (2, 1, 1));
        assert_eq!(row.outcome_lags, vec![5.0, 4.0]);
        assert_eq!(row.exposure_lags, vec![0.0, 0.0]);
        assert_eq!(
            d.features()[row.series_week - 3],
            vec![1.0, 5.0, 4.0, 0.0, 0.0, 2.0, 1.0]
        );
    }

    #[test]
    fn lags_longer_than_series_rejected() {
        let plan = PeriodPlan::from_lengths(&[0.5; 5], &[5]).unwrap().label(0.0);
        let s = weekly(&[0.0; 5], &[0.5; 5]);
        assert!(build_design_matrix(&s, &plan, Lags { outcome: 5, exposure: 0 }).is_err());
    }

    fn importance(values: &[f64], names: &[Feature]) -> ImportanceTable {
        ImportanceTable {
            entries: names
                .iter()
                .zip(values)
                .map(|(n, &v)| Importance {
                    feature: n.to_string(),
                    mean_increase_mse: v,
                })
                .collect(),
        }
    }

    #[test]
    fn top_k_plus_treatment() {
        let d = DesignMatrix {
            rows: vec![],
            lags: Lags { outcome: 3, exposure: 12 },
        };
        let feats = d.all_features();
        let values: Vec<f64> = (0..18).map(|i| if i == 0 { -1.0 } else { i as f64 }).collect();
        let sel = select_predictors(&importance(&values, &feats), &feats, 9).unwrap();
        assert_eq!(sel.features.len(), 10);
        assert_eq!(sel.features[0], Feature::Treatment);
        assert!(!sel.roles.features.contains(&Feature::Treatment));
    }

    #[test]
    fn treatment_ranked_first_not_duplicated() {
        let feats = [Feature::Treatment, Feature::OutcomeLag(1), Feature::Week];
        let sel = select_predictors(&importance(&[9.0, 1.0, 2.0], &feats), &feats, 2).unwrap();
        assert_eq!(sel.features, vec![Feature::Treatment, Feature::Week]);
    }

    #[test]
    fn zero_predictors_rejected() {
        let feats = [Feature::Treatment];
        assert!(select_predictors(&importance(&[1.0], &feats), &feats, 0).is_err());
    }

    #[test]
    fn roles_follow_timing() {
        assert_eq!(CausalRoleMap::role(Feature::OutcomeLag(1), 1), Some(Role::Csc));
        assert_eq!(CausalRoleMap::role(Feature::OutcomeLag(1), 3), Some(Role::Mediator));
        assert_eq!(CausalRoleMap::role(Feature::ExposureLag(3), 3), Some(Role::Csc));
        assert_eq!(CausalRoleMap::role(Feature::Period, 40), Some(Role::Csc));
        assert_eq!(CausalRoleMap::role(Feature::Week, 2), Some(Role::Conditioning));
        assert_eq!(CausalRoleMap::role(Feature::Treatment, 1), None);
    }

    #[test]
    fn feature_names_round_trip() {
        for f in [
            Feature::Treatment,
            Feature::OutcomeLag(7),
            Feature::ExposureLag(12),
            Feature::Period,
            Feature::Week,
        ] {
            assert_eq!(f.to_string().parse::<Feature>().unwrap(), f);
        }
        assert!("outcome_lag0".parse::<Feature>().is_err());
    }

    #[test]
    fn periods_csv_round_trip() {
        let plan = PeriodPlan::from_lengths(&[0.0, 0.25, 1.0, 1.0], &[2, 2])
            .unwrap()
            .label(0.5);
        let mut buf = Vec::new();
        write_periods_csv(&plan, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("period,start_week,length,mean_exposure,treatment\n1,1,2,0.125,0\n"));
        let back = read_periods_csv(text.as_bytes()).unwrap();
        assert_eq!(back.periods, plan.periods);
        assert_eq!(back.treatment_labels, plan.treatment_labels);
    }

    #[test]
    fn identical_labelings_tie_to_smaller_threshold() {
        let n = 60;
        let x: Vec<f64> = (0..n).map(|i| if (i / 10) % 2 == 0 { 0.1 } else { 0.9 }).collect();
        let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| v + (i as f64 * 0.7).sin()).collect();
        let plan = PeriodPlan::from_lengths(&x, &[10; 6]).unwrap();
        let params = ForestParams {
            n_trees: 20,
            seed: 3,
            ..ForestParams::default()
        };
        let sel = select_threshold(&weekly(&y, &x), &plan, &[0.6, 0.4, 0.5], Lags { outcome: 2, exposure: 2 }, &params)
            .unwrap();
        let mses: Vec<f64> = sel.evaluations.iter().map(|e| e.oob_mse.unwrap()).collect();
        assert_eq!(mses[0], mses[1]);
        assert_eq!(mses[1], mses[2]);
        assert_eq!(sel.threshold, 0.4);
    }

    #[test]
    fn single_level_candidates_skipped() {
        let x: Vec<f64> = (0..40).map(|i| if i < 20 { 0.1 } else { 0.9 }).collect();
        let y: Vec<f64> = (0..40).map(|i| (i as f64).cos()).collect();
        let plan = PeriodPlan::from_lengths(&x, &[20, 20]).unwrap();
        let params = ForestParams {
            n_trees: 10,
            ..ForestParams::default()
        };
        let lags = Lags { outcome: 1, exposure: 1 };
        let sel = select_threshold(&weekly(&y, &x), &plan, &[0.95, 0.5], lags, &params).unwrap();
        assert_eq!(sel.evaluations[0].oob_mse, None);
        assert_eq!(sel.threshold, 0.5);
        assert!(select_threshold(&weekly(&y, &x), &plan, &[0.95, 0.0], lags, &params).is_err());
    }

    proptest! {
        #[test]
        fn plan_tiles_series(
            x in prop::collection::vec(0.0f64..1.0, 4..60),
            cuts in prop::collection::btree_set(1usize..59, 0..8),
            min_len in 1usize..6,
        ) {
            let n = x.len();
            let mut ends: Vec<usize> = cuts.into_iter().filter(|&c| c < n).collect();
            ends.push(n);
            let plan = build_periods(&x, &segmentation(&ends), min_len).unwrap();
            prop_assert_eq!(plan.total_weeks(), n);
            let mut next = 1;
            for p in &plan.periods {
                prop_assert_eq!(p.start_week, next);
                next += p.length;
                if plan.periods.len() > 1 {
                    prop_assert!(p.length >= min_len);
                }
            }
        }

        #[test]
        fn csc_iff_lag_precedes_period_start(k in 1usize..20, j in 1usize..40) {
            let role = CausalRoleMap::role(Feature::OutcomeLag(k), j).unwrap();
            // week j of a period starting at week s sits at s + j - 1; its lag k at s + j - 1 - k
            let precedes = (j as i64 - 1 - k as i64) < 0;
            prop_assert_eq!(role == Role::Csc, precedes);
        }
    }
}
