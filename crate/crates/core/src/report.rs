//! Report assembly and export: the per-week table (CSV, three decimals) and
//! the full-precision JSON document that also carries the run configuration,
//! diagnostics and per-row predictions for plotting.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::design::{PeriodPlan, Role, ThresholdSelection};
use crate::error::{Error, Result};
use crate::estimator::{ApteRow, Contrast, PoEstimate, RowPpo};
use crate::forest::ImportanceTable;
use crate::pipeline::Analysis;
use crate::series::{Trim, WeeklySeries};
use crate::stationarity::CscStationaritySummary;

pub const FORMAT: &str = "apte-report";
pub const FORMAT_VERSION: u32 = 1;
pub const CSV_HEADER: [&str; 7] = ["week", "E1", "E0", "APTE", "E1_naive", "E0_naive", "APTE_naive"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleEntry {
    pub feature: String,
    pub week: usize,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Grand mean (kg) subtracted from every daily weight.
    pub center: f64,
    pub trim: Trim,
    /// First and last analyzed week (1-based, after trimming).
    pub analyzed_weeks: (usize, usize),
    pub outcome_changepoints: Option<Vec<usize>>,
    pub exposure_changepoints: Option<Vec<usize>>,
    pub threshold_selection: Option<ThresholdSelection>,
    pub design_rows: usize,
    pub screening_oob_mse: f64,
    pub importances: ImportanceTable,
    pub selected_features: Vec<String>,
    pub final_oob_mse: f64,
    pub roles: Vec<RoleEntry>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApteReport {
    pub format: String,
    pub version: u32,
    pub generator: String,
    /// Configuration that reproduces this report.
    pub config: RunConfig,
    pub contrast: Contrast,
    pub horizon: usize,
    pub rows: Vec<ApteRow>,
    pub estimates: Vec<PoEstimate>,
    pub csc_stationarity: Option<CscStationaritySummary>,
    pub plan: Option<PeriodPlan>,
    /// Analyzed weekly series (centered outcome, imputation flags).
    pub series: Option<WeeklySeries>,
    pub diagnostics: Option<Diagnostics>,
    pub ppos: Vec<RowPpo>,
}

impl ApteReport {
    pub fn from_analysis(a: &Analysis) -> ApteReport {
        let notes = vec![
            "outcomes are centered once on the mean of every ingested daily weight, \
             not re-centered on the analyzed segment"
                .to_string(),
            format!("mediator handling: {:?}", a.config.mediators),
        ];
        ApteReport {
            format: FORMAT.into(),
            version: FORMAT_VERSION,
            generator: concat!("apte ", env!("CARGO_PKG_VERSION")).into(),
            config: a.config.clone(),
            contrast: a.trajectory.contrast,
            horizon: a.trajectory.horizon,
            rows: a.trajectory.rows.clone(),
            estimates: a
                .estimates
                .iter()
                .flat_map(|(e1, e0)| [e1.clone(), e0.clone()])
                .collect(),
            csc_stationarity: a.stationarity.clone(),
            plan: Some(a.plan.clone()),
            series: Some(a.series.clone()),
            diagnostics: Some(Diagnostics {
                center: a.series.center,
                trim: a.trim,
                analyzed_weeks: (a.analyzed_range.start + 1, a.analyzed_range.end),
                outcome_changepoints: a.outcome_segmentation.as_ref().map(|s| s.changepoints.clone()),
                exposure_changepoints: a.exposure_segmentation.as_ref().map(|s| s.changepoints.clone()),
                threshold_selection: a.threshold_selection.clone(),
                design_rows: a.ppos.len(),
                screening_oob_mse: a.screening_oob_mse,
                importances: a.screening_importance.clone(),
                selected_features: a.selection.features.iter().map(ToString::to_string).collect(),
                final_oob_mse: a.final_oob_mse,
                roles: a
                    .selection
                    .roles
                    .table(a.trajectory.horizon)
                    .into_iter()
                    .map(|(feature, week, role)| RoleEntry { feature, week, role })
                    .collect(),
                notes,
            }),
            ppos: a.ppos.clone(),
        }
    }

    /// A report holding only a per-week table (for instance a published one).
    pub fn from_rows(rows: Vec<ApteRow>) -> Result<ApteReport> {
        if rows.is_empty() {
            return Err(Error::InvalidInput("report table is empty".into()));
        }
        let horizon = rows
            .iter()
            .take_while(|r| r.e1.is_some() && r.e0.is_some())
            .count();
        Ok(ApteReport {
            format: FORMAT.into(),
            version: FORMAT_VERSION,
            generator: concat!("apte ", env!("CARGO_PKG_VERSION")).into(),
            config: RunConfig::default(),
            contrast: Contrast::Difference,
            horizon,
            rows,
            estimates: vec![],
            csc_stationarity: None,
            plan: None,
            series: None,
            diagnostics: None,
            ppos: vec![],
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<ApteReport> {
        let report: ApteReport = serde_json::from_str(text)?;
        if report.format != FORMAT || report.version != FORMAT_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported report document {} v{}",
                report.format, report.version
            )));
        }
        Ok(report)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_table_csv(&self.rows, out)
    }
}

/// Rounds to three decimals and drops trailing zeros ("-0.410" → "-0.41").
pub fn format_value(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    match s {
        "-0" | "" => "0".into(),
        other => other.into(),
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(format_value).unwrap_or_default()
}

pub fn write_table_csv<W: Write>(rows: &[ApteRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.week.to_string(),
            cell(r.e1),
            cell(r.e0),
            cell(r.apte),
            cell(r.e1_naive),
            cell(r.e0_naive),
            cell(r.apte_naive),
        ])?;
    }
    w.flush().map_err(|e| Error::io("report csv", e))?;
    Ok(())
}

/// Reads a per-week table with the report CSV header.
pub fn read_table_csv<R: Read>(source: R) -> Result<Vec<ApteRow>> {
    let mut reader = csv::Reader::from_reader(source);
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header != CSV_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {}", CSV_HEADER.join(",")),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec?;
        let num = |c: usize| -> Result<Option<f64>> {
            let raw = rec.get(c).unwrap_or("").trim();
            if raw.is_empty() {
                return Ok(None);
            }
            raw.parse().map(Some).map_err(|_| Error::Parse {
                line,
                message: format!("unparseable value '{raw}' in column {}", CSV_HEADER[c]),
            })
        };
        let week = rec.get(0).unwrap_or("").trim().parse().map_err(|_| Error::Parse {
            line,
            message: "unparseable week".into(),
        })?;
        rows.push(ApteRow {
            week,
            e1: num(1)?,
            e0: num(2)?,
            apte: num(3)?,
            e1_naive: num(4)?,
            e0_naive: num(5)?,
            apte_naive: num(6)?,
        });
    }
    Ok(rows)
}

/// Weeks whose printed contrast differs from the difference of its printed
/// mean potential outcomes by more than `tolerance`, as (week, column).
pub fn contrast_mismatches(rows: &[ApteRow], tolerance: f64) -> Vec<(usize, &'static str)> {
    let mut bad = Vec::new();
    for r in rows {
        for (name, e1, e0, c) in [
            ("APTE", r.e1, r.e0, r.apte),
            ("APTE_naive", r.e1_naive, r.e0_naive, r.apte_naive),
        ] {
            match (e1, e0, c) {
                (Some(a), Some(b), Some(c)) if (c - (a - b)).abs() <= tolerance => {}
                (_, _, None) => {}
                _ => bad.push((r.week, name)),
            }
        }
    }
    bad
}
