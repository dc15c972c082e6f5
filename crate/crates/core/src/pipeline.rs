//! End-to-end analysis: input → weekly series → periods → treatment →
//! outcome model → mean potential outcomes and APTE.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::changepoint::{self, Method, Segmentation};
use crate::config::RunConfig;
use crate::design::{self, Feature, PeriodPlan, PredictorSelection, ThresholdSelection};
use crate::error::{Error, Result};
use crate::estimator::{self, ApteTrajectory, PoEstimate, RowPpo};
use crate::forest::{self, Forest, ForestParams, ImportanceTable};
use crate::seed::{self, stream};
use crate::series::{self, Trim, WeeklySeries};
use crate::stationarity::CscStationaritySummary;

/// Everything an analysis produced, in pipeline order.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub config: RunConfig,
    pub trim: Trim,
    pub outcome_segmentation: Option<Segmentation>,
    /// 0-based range of the interpolated series that was analyzed.
    pub analyzed_range: Range<usize>,
    pub series: WeeklySeries,
    pub exposure_segmentation: Option<Segmentation>,
    pub plan: PeriodPlan,
    pub threshold_selection: Option<ThresholdSelection>,
    pub features: Vec<Feature>,
    pub screening_importance: ImportanceTable,
    pub screening_oob_mse: f64,
    pub selection: PredictorSelection,
    pub forest: Forest,
    pub final_oob_mse: f64,
    pub ppos: Vec<RowPpo>,
    pub estimates: Vec<(PoEstimate, PoEstimate)>,
    pub trajectory: ApteTrajectory,
    pub stationarity: Option<CscStationaritySummary>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Daily,
    Weekly,
}

/// Weekly exports start with a `week_index` column; anything else is daily.
pub fn detect_format(path: &Path) -> Result<InputFormat> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut header = String::new();
    BufReader::new(file)
        .read_line(&mut header)
        .map_err(|e| Error::io(path, e))?;
    let first = header.trim_start_matches('\u{feff}').split(',').next().unwrap_or("");
    Ok(if first.trim() == "week_index" {
        InputFormat::Weekly
    } else {
        InputFormat::Daily
    })
}

/// Reads the input file into an (un-imputed) weekly series.
pub fn load_series(path: &Path, config: &RunConfig) -> Result<WeeklySeries> {
    let format = detect_format(path)?;
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    match format {
        InputFormat::Weekly => series::read_weekly_csv(file),
        InputFormat::Daily => {
            let records = series::ingest_daily(file, &config.schema())?;
            series::to_weekly(&records, config.start_day)
        }
    }
}

/// Runs the analysis described by `config`, reading its input (and period
/// table, if any) from disk.
pub fn run(config: &RunConfig) -> Result<Analysis> {
    config.validate()?;
    let input = config
        .input
        .as_deref()
        .ok_or_else(|| Error::Config("no input file given".into()))?;
    let weekly = load_series(Path::new(input), config).map_err(|e| e.at("ingest"))?;
    let plan = match &config.periods {
        Some(p) => {
            let file = File::open(p).map_err(|e| Error::io(p, e))?;
            Some(design::read_periods_csv(file).map_err(|e| e.at("periods"))?)
        }
        None => None,
    };
    analyze(weekly, config, plan)
}

fn derived(params: &ForestParams, stream: u64, n_features: usize) -> ForestParams {
    ForestParams {
        seed: seed::derive(params.seed, &[stream]),
        mtry: params.mtry.map(|m| m.min(n_features)),
        ..*params
    }
}

/// Runs every stage after ingestion. A `given_plan` fixes the periods (and,
/// if labeled, the treatment) instead of inferring them.
pub fn analyze(weekly: WeeklySeries, config: &RunConfig, given_plan: Option<PeriodPlan>) -> Result<Analysis> {
    config.validate()?;
    let (imputed, trim) = series::interpolate_missing(&weekly).map_err(|e| e.at("interpolate"))?;
    let outcomes = imputed.outcomes().map_err(|e| e.at("interpolate"))?;

    let (outcome_segmentation, analyzed_range) = if given_plan.is_none() && config.restrict_stationary {
        let penalty = match config.outcome_penalty {
            Some(p) => p,
            None => changepoint::mbic_penalty(outcomes.len()).map_err(|e| e.at("outcome stationarity"))?,
        };
        let seg = changepoint::detect(&outcomes, penalty, config.outcome_method)
            .map_err(|e| e.at("outcome stationarity"))?;
        let range = seg.longest_segment();
        log::info!(
            "analyzing weeks {}..={} of {} (longest segment without a mean change)",
            range.start + 1,
            range.end,
            outcomes.len()
        );
        (Some(seg), range)
    } else {
        (None, 0..outcomes.len())
    };
    let series = imputed.slice(analyzed_range.clone());
    let exposure = series.exposures().map_err(|e| e.at("interpolate"))?;
    let params = config.forest_params();
    let lags = config.lags();

    let (plan, exposure_segmentation) = match given_plan {
        Some(plan) => {
            if plan.total_weeks() != series.len() {
                return Err(Error::InvalidInput(format!(
                    "period table covers {} weeks but the analyzed series has {}",
                    plan.total_weeks(),
                    series.len()
                ))
                .at("periods"));
            }
            (plan, None)
        }
        None => {
            let penalty = match config.exposure_penalty {
                Some(p) => p,
                None => changepoint::mbic_penalty(exposure.len()).map_err(|e| e.at("exposure segmentation"))?,
            };
            let seg = changepoint::detect(&exposure, penalty, Method::Pelt).map_err(|e| e.at("exposure segmentation"))?;
            let plan = design::build_periods(&exposure, &seg, config.min_period).map_err(|e| e.at("periods"))?;
            (plan, Some(seg))
        }
    };

    let (plan, threshold_selection) = if plan.is_labeled() {
        (plan, None)
    } else {
        let candidates = design::threshold_candidates(&plan, &config.quantiles).map_err(|e| e.at("threshold"))?;
        let n_features = 3 + lags.outcome + lags.exposure;
        let threshold_params = ForestParams {
            mtry: params.mtry.map(|m| m.min(n_features)),
            ..params
        };
        let sel = design::select_threshold(&series, &plan, &candidates, lags, &threshold_params)
            .map_err(|e| e.at("threshold"))?;
        log::info!("treatment threshold {}", sel.threshold);
        (plan.label(sel.threshold), Some(sel))
    };
    if !plan.has_both_levels() {
        return Err(Error::Estimation("only one treatment level is observed".into()).at("threshold"));
    }

    let design = design::build_design_matrix(&series, &plan, lags).map_err(|e| e.at("design"))?;
    let features = design.all_features();
    let names = design.feature_names();
    let x = design.features();
    let y = design.targets();
    let screening_params = derived(&params, stream::SCREENING, features.len());
    let screening = forest::fit_forest(&x, &y, &names, &screening_params).map_err(|e| e.at("screening forest"))?;
    let screening_oob_mse = forest::oob_mse(&screening, &y).map_err(|e| e.at("screening forest"))?;
    let screening_importance =
        forest::permutation_importance(&screening, &x, &y).map_err(|e| e.at("importance"))?;
    let k = config.top_k.min(features.len());
    let selection = design::select_predictors(&screening_importance, &features, k).map_err(|e| e.at("selection"))?;

    let xs = design.project(&selection.features);
    let selected_names: Vec<String> = selection.features.iter().map(ToString::to_string).collect();
    let final_params = ForestParams {
        mtry: Some(
            config
                .outcome_mtry
                .unwrap_or(selection.features.len())
                .min(selection.features.len()),
        ),
        always_split: selection
            .features
            .iter()
            .position(|&f| f == Feature::Treatment)
            .filter(|_| config.split_on_treatment),
        ..derived(&params, stream::FINAL, selection.features.len())
    };
    let forest = forest::fit_forest(&xs, &y, &selected_names, &final_params).map_err(|e| e.at("outcome model"))?;
    let final_oob_mse = forest::oob_mse(&forest, &y).map_err(|e| e.at("outcome model"))?;

    let ppos = estimator::predict_pos(&forest, &design, &selection.features, config.mediators)
        .map_err(|e| e.at("potential outcomes"))?;
    let estimates = estimator::estimate_all(&ppos, &plan);
    let trajectory = estimator::apte_trajectory(&estimates, config.contrast).map_err(|e| e.at("apte"))?;
    let stationarity = match estimator::csc_audit(&design, &selection.roles, trajectory.horizon) {
        Ok(s) => Some(s),
        Err(e) => {
            log::warn!("CSC stationarity audit unavailable: {e}");
            None
        }
    };

    Ok(Analysis {
        config: config.clone(),
        trim,
        outcome_segmentation,
        analyzed_range,
        series,
        exposure_segmentation,
        plan,
        threshold_selection,
        features,
        screening_importance,
        screening_oob_mse,
        selection,
        forest,
        final_oob_mse,
        ppos,
        estimates,
        trajectory,
        stationarity,
    })
}
