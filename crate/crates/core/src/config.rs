//! Run configuration: every knob of an analysis, stored as a flat TOML
//! document and embedded in each report.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::changepoint::Method;
use crate::design::Lags;
use crate::error::{Error, Result};
use crate::estimator::{Contrast, MediatorHandling};
use crate::forest::ForestParams;
use crate::series::{CsvSchema, StartDay};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Daily or weekly CSV to analyze.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
    /// Known period table; when set, exposure segmentation and the
    /// stationary-segment restriction are skipped.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub periods: Option<String>,
    pub out_dir: String,
    pub date_column: String,
    pub weight_column: String,
    pub activity_column: String,
    pub start_day: StartDay,
    pub lags_y: usize,
    pub lags_x: usize,
    pub quantiles: Vec<f64>,
    pub top_k: usize,
    pub n_trees: usize,
    /// Features tried per split by the screening and threshold forests;
    /// unset means a third of the candidates.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mtry: Option<usize>,
    /// Features tried per split by the outcome model; unset means every
    /// selected feature.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outcome_mtry: Option<usize>,
    pub min_node_size: usize,
    /// Offer the treatment as a split candidate at every node of the outcome
    /// model, in addition to the `mtry` sampled features.
    pub split_on_treatment: bool,
    pub restrict_stationary: bool,
    pub outcome_method: Method,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outcome_penalty: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exposure_penalty: Option<f64>,
    pub min_period: usize,
    pub mediators: MediatorHandling,
    pub contrast: Contrast,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let forest = ForestParams::default();
        let lags = Lags::default();
        let schema = CsvSchema::default();
        RunConfig {
            input: None,
            periods: None,
            out_dir: "apte-out".into(),
            date_column: schema.date,
            weight_column: schema.weight,
            activity_column: schema.activity,
            start_day: StartDay::default(),
            lags_y: lags.outcome,
            lags_x: lags.exposure,
            quantiles: vec![0.25, 0.5, 0.75],
            top_k: 9,
            n_trees: forest.n_trees,
            mtry: forest.mtry,
            outcome_mtry: None,
            min_node_size: forest.min_node_size,
            split_on_treatment: true,
            restrict_stationary: true,
            outcome_method: Method::Amoc,
            outcome_penalty: None,
            exposure_penalty: None,
            min_period: 1,
            mediators: MediatorHandling::default(),
            contrast: Contrast::default(),
            seed: 2018,
        }
    }
}

impl RunConfig {
    pub fn lags(&self) -> Lags {
        Lags {
            outcome: self.lags_y,
            exposure: self.lags_x,
        }
    }

    pub fn schema(&self) -> CsvSchema {
        CsvSchema {
            date: self.date_column.clone(),
            weight: self.weight_column.clone(),
            activity: self.activity_column.clone(),
        }
    }

    pub fn forest_params(&self) -> ForestParams {
        ForestParams {
            n_trees: self.n_trees,
            mtry: self.mtry,
            min_node_size: self.min_node_size,
            seed: self.seed,
            always_split: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.quantiles.len() < 2 {
            return bad("at least two threshold quantiles are required".into());
        }
        if let Some(q) = self.quantiles.iter().find(|q| !(0.0..=1.0).contains(*q)) {
            return bad(format!("quantile {q} outside [0, 1]"));
        }
        if self.top_k == 0 {
            return bad("top_k must be at least 1".into());
        }
        if self.n_trees == 0 {
            return bad("n_trees must be at least 1".into());
        }
        if self.min_node_size == 0 {
            return bad("min_node_size must be at least 1".into());
        }
        if self.mtry == Some(0) || self.outcome_mtry == Some(0) {
            return bad("mtry must be at least 1".into());
        }
        if self.min_period == 0 {
            return bad("min_period must be at least 1".into());
        }
        if self.seed > i64::MAX as u64 {
            return bad(format!("seed must be at most {}", i64::MAX));
        }
        for p in [self.outcome_penalty, self.exposure_penalty].into_iter().flatten() {
            if !(p >= 0.0 && p.is_finite()) {
                return bad(format!("penalty must be finite and non-negative, got {p}"));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}
