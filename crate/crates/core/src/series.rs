//! Daily self-tracking records, weekly aggregation and gap filling.
//!
//! The weekly outcome is the mean centered body weight of the week and the
//! exposure is the share of weighed days with any reported activity.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::{Datelike, Days, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DailyRecord {
    pub date: NaiveDate,
    pub weight: Option<f64>,
    pub activity: Option<bool>,
}

/// Column names used to read a daily CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub date: String,
    pub weight: String,
    pub activity: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            date: "date".into(),
            weight: "weight".into(),
            activity: "activity".into(),
        }
    }
}

/// Day of week on which every aggregation week begins.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StartDay(pub Weekday);

impl Default for StartDay {
    fn default() -> Self {
        StartDay(Weekday::Mon)
    }
}

impl fmt::Display for StartDay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.0 {
            Weekday::Mon => "monday",
            Weekday::Tue => "tuesday",
            Weekday::Wed => "wednesday",
            Weekday::Thu => "thursday",
            Weekday::Fri => "friday",
            Weekday::Sat => "saturday",
            Weekday::Sun => "sunday",
        };
        f.write_str(name)
    }
}

impl FromStr for StartDay {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.trim()
            .parse::<Weekday>()
            .map(StartDay)
            .map_err(|_| Error::Config(format!("unknown start day '{s}'")))
    }
}

impl Serialize for StartDay {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for StartDay {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeeklyPoint {
    /// 1-based ordinal of the week within the ingested data.
    pub week_index: usize,
    pub outcome: Option<f64>,
    pub exposure: Option<f64>,
    pub imputed_outcome: bool,
    pub imputed_exposure: bool,
    /// Daily records falling in this week, weighed or not.
    pub days_recorded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeeklySeries {
    pub points: Vec<WeeklyPoint>,
    /// Grand mean of every non-missing daily weight (kg).
    pub center: f64,
    pub start_day: StartDay,
}

impl WeeklySeries {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Outcomes of a fully imputed series.
    pub fn outcomes(&self) -> Result<Vec<f64>> {
        self.points
            .iter()
            .map(|p| {
                p.outcome.ok_or_else(|| {
                    Error::InvalidInput(format!("week {} has no outcome", p.week_index))
                })
            })
            .collect()
    }

    pub fn exposures(&self) -> Result<Vec<f64>> {
        self.points
            .iter()
            .map(|p| {
                p.exposure.ok_or_else(|| {
                    Error::InvalidInput(format!("week {} has no exposure", p.week_index))
                })
            })
            .collect()
    }

    /// Contiguous sub-series over `range` (0-based positions).
    pub fn slice(&self, range: std::ops::Range<usize>) -> WeeklySeries {
        WeeklySeries {
            points: self.points[range].to_vec(),
            center: self.center,
            start_day: self.start_day,
        }
    }
}

fn parse_weight(raw: &str, line: usize) -> Result<Option<f64>> {
    let raw = raw.trim();
    if raw.is_empty() || raw.eq_ignore_ascii_case("na") {
        return Ok(None);
    }
    let w: f64 = raw.parse().map_err(|_| Error::Parse {
        line,
        message: format!("unparseable weight '{raw}'"),
    })?;
    if !w.is_finite() || w <= 0.0 {
        return Err(Error::Parse {
            line,
            message: format!("weight must be finite and positive, got {raw}"),
        });
    }
    Ok(Some(w))
}

fn parse_activity(raw: &str, line: usize) -> Result<Option<bool>> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "" | "na" => Ok(None),
        "1" | "true" | "t" | "yes" | "y" => Ok(Some(true)),
        "0" | "false" | "f" | "no" | "n" => Ok(Some(false)),
        other => Err(Error::Parse {
            line,
            message: format!("unparseable activity '{other}'"),
        }),
    }
}

/// Reads daily records from CSV. The result is sorted by date.
pub fn ingest_daily<R: Read>(source: R, schema: &CsvSchema) -> Result<Vec<DailyRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::InvalidInput(format!("missing column '{name}'")))
    };
    let date_col = column(&schema.date)?;
    let weight_col = column(&schema.weight)?;
    let activity_col = column(&schema.activity)?;

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        // header is line 1
        let line = i + 2;
        let row = row?;
        let cell = |c: usize| row.get(c).unwrap_or("");
        let raw_date = cell(date_col).trim();
        let date = NaiveDate::parse_from_str(raw_date, "%Y-%m-%d").map_err(|_| Error::Parse {
            line,
            message: format!("unparseable date '{raw_date}'"),
        })?;
        records.push(DailyRecord {
            date,
            weight: parse_weight(cell(weight_col), line)?,
            activity: parse_activity(cell(activity_col), line)?,
        });
    }
    records.sort_by_key(|r| r.date);
    if let Some(dup) = records.windows(2).find(|w| w[0].date == w[1].date) {
        return Err(Error::DuplicateDate(dup[0].date));
    }
    Ok(records)
}

/// Writes daily records with the default schema.
pub fn write_daily<W: Write>(records: &[DailyRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["date", "weight", "activity"])?;
    for r in records {
        let weight = r.weight.map(|v| v.to_string()).unwrap_or_default();
        let activity = match r.activity {
            Some(true) => "1",
            Some(false) => "0",
            None => "",
        };
        w.write_record([r.date.format("%Y-%m-%d").to_string(), weight, activity.into()])?;
    }
    w.flush().map_err(|e| Error::io("daily csv", e))?;
    Ok(())
}

fn week_start(date: NaiveDate, start: Weekday) -> NaiveDate {
    let offset = (date.weekday().num_days_from_monday() + 7 - start.num_days_from_monday()) % 7;
    date - Days::new(u64::from(offset))
}

/// Aggregates daily records into calendar weeks beginning on `start_day`.
pub fn to_weekly(records: &[DailyRecord], start_day: StartDay) -> Result<WeeklySeries> {
    let weights: Vec<f64> = records.iter().filter_map(|r| r.weight).collect();
    if weights.is_empty() {
        return Err(Error::NoOutcomeData);
    }
    let center = weights.iter().sum::<f64>() / weights.len() as f64;

    let mut sorted = records.to_vec();
    sorted.sort_by_key(|r| r.date);
    let first = week_start(sorted[0].date, start_day.0);
    let last = sorted[sorted.len() - 1].date;
    let n_weeks = ((last - first).num_days() / 7 + 1) as usize;

    #[derive(Default, Clone)]
    struct Acc {
        sum: f64,
        weighed: usize,
        active: usize,
        days: usize,
    }
    let mut acc = vec![Acc::default(); n_weeks];
    for r in &sorted {
        let k = ((r.date - first).num_days() / 7) as usize;
        let a = &mut acc[k];
        a.days += 1;
        if let Some(w) = r.weight {
            a.sum += w - center;
            a.weighed += 1;
            if r.activity == Some(true) {
                a.active += 1;
            }
        }
    }

    let points = acc
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let (outcome, exposure) = if a.weighed > 0 {
                let d = a.weighed as f64;
                (Some(a.sum / d), Some(a.active as f64 / d))
            } else {
                (None, None)
            };
            WeeklyPoint {
                week_index: k + 1,
                outcome,
                exposure,
                imputed_outcome: false,
                imputed_exposure: false,
                days_recorded: a.days,
            }
        })
        .collect();

    Ok(WeeklySeries {
        points,
        center,
        start_day,
    })
}

/// Weeks dropped from either end because they could not be interpolated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Trim {
    pub leading: usize,
    pub trailing: usize,
}

fn interpolate_column(values: &mut [Option<f64>], flags: &mut [bool]) {
    let mut prev: Option<usize> = None;
    for i in 0..values.len() {
        if values[i].is_none() {
            continue;
        }
        if let Some(p) = prev {
            if i > p + 1 {
                let (a, b) = (values[p].unwrap(), values[i].unwrap());
                let span = (i - p) as f64;
                for (g, slot) in values.iter_mut().enumerate().take(i).skip(p + 1) {
                    let frac = (g - p) as f64 / span;
                    *slot = Some(a + (b - a) * frac);
                    flags[g] = true;
                }
            }
        }
        prev = Some(i);
    }
}

/// Trims leading/trailing incomplete weeks and linearly interpolates the
/// interior gaps of both outcome and exposure.
pub fn interpolate_missing(series: &WeeklySeries) -> Result<(WeeklySeries, Trim)> {
    let complete = |p: &WeeklyPoint| p.outcome.is_some() && p.exposure.is_some();
    let first = series
        .points
        .iter()
        .position(complete)
        .ok_or_else(|| Error::InvalidInput("every week is missing after trimming".into()))?;
    let last = series.points.iter().rposition(complete).unwrap();
    let trim = Trim {
        leading: first,
        trailing: series.points.len() - 1 - last,
    };
    if trim != Trim::default() {
        log::info!(
            "trimmed {} leading and {} trailing incomplete weeks",
            trim.leading,
            trim.trailing
        );
    }

    let mut points = series.points[first..=last].to_vec();
    let mut outcomes: Vec<_> = points.iter().map(|p| p.outcome).collect();
    let mut exposures: Vec<_> = points.iter().map(|p| p.exposure).collect();
    let mut out_flags: Vec<_> = points.iter().map(|p| p.imputed_outcome).collect();
    let mut exp_flags: Vec<_> = points.iter().map(|p| p.imputed_exposure).collect();
    interpolate_column(&mut outcomes, &mut out_flags);
    interpolate_column(&mut exposures, &mut exp_flags);

    for (i, p) in points.iter_mut().enumerate() {
        p.outcome = outcomes[i];
        p.exposure = exposures[i].map(|e| e.clamp(0.0, 1.0));
        p.imputed_outcome = out_flags[i];
        p.imputed_exposure = exp_flags[i];
    }
    Ok((
        WeeklySeries {
            points,
            center: series.center,
            start_day: series.start_day,
        },
        trim,
    ))
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

pub fn write_weekly_csv<W: Write>(series: &WeeklySeries, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "week_index",
        "outcome",
        "exposure",
        "imputed_outcome",
        "imputed_exposure",
    ])?;
    for p in &series.points {
        w.write_record([
            p.week_index.to_string(),
            p.outcome.map(|v| v.to_string()).unwrap_or_default(),
            p.exposure.map(|v| v.to_string()).unwrap_or_default(),
            flag(p.imputed_outcome).into(),
            flag(p.imputed_exposure).into(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("weekly csv", e))?;
    Ok(())
}

/// Reads a weekly export. Centering information is not part of the export,
/// so `center` is 0.
pub fn read_weekly_csv<R: Read>(source: R) -> Result<WeeklySeries> {
    let mut reader = csv::Reader::from_reader(source);
    let mut points = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row?;
        let get = |c: usize| row.get(c).unwrap_or("").trim();
        let num = |c: usize| -> Result<Option<f64>> {
            let raw = get(c);
            if raw.is_empty() {
                return Ok(None);
            }
            raw.parse().map(Some).map_err(|_| Error::Parse {
                line,
                message: format!("unparseable number '{raw}'"),
            })
        };
        let week_index = get(0).parse().map_err(|_| Error::Parse {
            line,
            message: format!("unparseable week index '{}'", get(0)),
        })?;
        let exposure = num(2)?;
        if let Some(e) = exposure {
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::Parse {
                    line,
                    message: format!("exposure {e} outside [0, 1]"),
                });
            }
        }
        points.push(WeeklyPoint {
            week_index,
            outcome: num(1)?,
            exposure,
            imputed_outcome: get(3) == "1",
            imputed_exposure: get(4) == "1",
            days_recorded: 7,
        });
    }
    Ok(WeeklySeries {
        points,
        center: 0.0,
        start_day: StartDay::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn day(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn rec(d: &str, w: Option<f64>, a: Option<bool>) -> DailyRecord {
        DailyRecord {
            date: day(d),
            weight: w,
            activity: a,
        }
    }

    fn weekly(outcomes: &[Option<f64>], exposures: &[Option<f64>]) -> WeeklySeries {
        WeeklySeries {
            points: outcomes
                .iter()
                .zip(exposures)
                .enumerate()
                .map(|(i, (o, e))| WeeklyPoint {
                    week_index: i + 1,
                    outcome: *o,
                    exposure: *e,
                    imputed_outcome: false,
                    imputed_exposure: false,
                    days_recorded: 7,
                })
                .collect(),
            center: 0.0,
            start_day: StartDay::default(),
        }
    }

    #[test]
    fn ingest_maps_fields_and_empty_cells() {
        let csv = "date,weight,activity\n2012-01-02,,\n2012-01-01,80.0,1\n";
        let recs = ingest_daily(csv.as_bytes(), &CsvSchema::default()).unwrap();
        assert_eq!(recs[0], rec("2012-01-01", Some(80.0), Some(true)));
        assert_eq!(recs[1], rec("2012-01-02", None, None));
    }

    #[test]
    fn ingest_rejects_duplicate_dates() {
        let csv = "date,weight,activity\n2012-01-01,80,1\n2012-01-01,81,0\n";
        let err = ingest_daily(csv.as_bytes(), &CsvSchema::default()).unwrap_err();
        assert!(err.to_string().contains("2012-01-01"), "{err}");
    }

    #[test]
    fn ingest_reports_line_of_bad_date() {
        let csv = "date,weight,activity\n2012-01-01,80,1\n01/02/2012,81,0\n";
        let err = ingest_daily(csv.as_bytes(), &CsvSchema::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn ingest_honours_column_mapping() {
        let csv = "pa,day,kg\nyes,2012-01-01,70.5\n";
        let schema = CsvSchema {
            date: "day".into(),
            weight: "kg".into(),
            activity: "pa".into(),
        };
        let recs = ingest_daily(csv.as_bytes(), &schema).unwrap();
        assert_eq!(recs[0], rec("2012-01-01", Some(70.5), Some(true)));
    }

    #[test]
    fn ingest_rejects_nonpositive_weight() {
        let csv = "date,weight,activity\n2012-01-01,-3,1\n";
        assert!(ingest_daily(csv.as_bytes(), &CsvSchema::default()).is_err());
    }

    #[test]
    fn symmetric_week_has_zero_outcome() {
        // 2012-01-02 is a Monday
        let recs = [
            rec("2012-01-02", Some(81.0), Some(true)),
            rec("2012-01-03", Some(79.0), Some(false)),
        ];
        let s = to_weekly(&recs, StartDay::default()).unwrap();
        assert_eq!(s.center, 80.0);
        assert_eq!(s.points.len(), 1);
        assert!(s.points[0].outcome.unwrap().abs() < 1e-12);
        assert_eq!(s.points[0].exposure, Some(0.5));
    }

    #[test]
    fn unweighed_week_is_missing() {
        let recs = [
            rec("2012-01-02", Some(80.0), Some(true)),
            rec("2012-01-10", None, Some(true)),
            rec("2012-01-16", Some(80.0), Some(false)),
        ];
        let s = to_weekly(&recs, StartDay::default()).unwrap();
        assert_eq!(s.points.len(), 3);
        assert_eq!(s.points[1].outcome, None);
        assert_eq!(s.points[1].exposure, None);
        assert_eq!(s.points[1].days_recorded, 1);
    }

    #[test]
    fn exposure_counts_active_weighed_days() {
        let recs: Vec<_> = (0..7)
            .map(|d| DailyRecord {
                date: day("2012-01-02") + Days::new(d),
                weight: Some(80.0),
                activity: Some(d < 3),
            })
            .collect();
        let s = to_weekly(&recs, StartDay::default()).unwrap();
        assert_eq!(s.points[0].exposure, Some(3.0 / 7.0));
    }

    #[test]
    fn activity_on_unweighed_days_is_ignored() {
        let recs = [
            rec("2012-01-02", Some(80.0), Some(false)),
            rec("2012-01-03", None, Some(true)),
        ];
        let s = to_weekly(&recs, StartDay::default()).unwrap();
        assert_eq!(s.points[0].exposure, Some(0.0));
    }

    #[test]
    fn no_weights_is_an_error() {
        let recs = [rec("2012-01-02", None, Some(true))];
        assert!(matches!(
            to_weekly(&recs, StartDay::default()),
            Err(Error::NoOutcomeData)
        ));
    }

    #[test]
    fn interpolates_midpoint() {
        let s = weekly(&[Some(1.0), None, Some(3.0)], &[Some(0.1); 3]);
        let (out, trim) = interpolate_missing(&s).unwrap();
        assert_eq!(trim, Trim::default());
        let o: Vec<_> = out.points.iter().map(|p| p.outcome.unwrap()).collect();
        assert_eq!(o, vec![1.0, 2.0, 3.0]);
        assert!(out.points[1].imputed_outcome);
        assert!(!out.points[0].imputed_outcome && !out.points[2].imputed_outcome);
    }

    #[test]
    fn interpolates_exposure_run() {
        // oracle: 0.0 + k * (0.9 - 0.0) / 3 for k = 1, 2
        let s = weekly(&[Some(0.0); 4], &[Some(0.0), None, None, Some(0.9)]);
        let (out, _) = interpolate_missing(&s).unwrap();
        let e: Vec<_> = out.points.iter().map(|p| p.exposure.unwrap()).collect();
        for (got, want) in e.iter().zip([0.0, 0.3, 0.6, 0.9]) {
            assert!((got - want).abs() < 1e-12, "{e:?}");
        }
    }

    #[test]
    fn complete_series_is_untouched() {
        let s = weekly(&[Some(1.0), Some(2.0)], &[Some(0.2), Some(0.4)]);
        let (out, _) = interpolate_missing(&s).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn trims_incomplete_ends() {
        let s = weekly(
            &[None, Some(1.0), Some(2.0), Some(3.0)],
            &[Some(0.1), Some(0.1), Some(0.2), None],
        );
        let (out, trim) = interpolate_missing(&s).unwrap();
        assert_eq!(trim, Trim { leading: 1, trailing: 1 });
        assert_eq!(out.points.len(), 2);
        assert_eq!(out.points[0].week_index, 2);
    }

    #[test]
    fn all_missing_is_an_error() {
        let s = weekly(&[None, None], &[None, None]);
        assert!(interpolate_missing(&s).is_err());
    }

    #[test]
    fn weekly_csv_round_trip() {
        let s = weekly(&[Some(1.5), None], &[Some(0.25), None]);
        let mut buf = Vec::new();
        write_weekly_csv(&s, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("week_index,outcome,exposure,imputed_outcome,imputed_exposure\n"));
        let back = read_weekly_csv(buf.as_slice()).unwrap();
        assert_eq!(back.points, s.points);
    }

    #[test]
    fn start_day_parses_and_prints() {
        let d: StartDay = "Sunday".parse().unwrap();
        assert_eq!(d.0, Weekday::Sun);
        assert_eq!(d.to_string(), "sunday");
        assert!("someday".parse::<StartDay>().is_err());
    }

    fn daily_strategy() -> impl Strategy<Value = Vec<DailyRecord>> {
        prop::collection::vec(
            (
                prop::option::weighted(0.8, 60.0f64..100.0),
                prop::option::weighted(0.9, any::<bool>()),
            ),
            1..60,
        )
        .prop_map(|cells| {
            cells
                .into_iter()
                .enumerate()
                .map(|(i, (w, a))| DailyRecord {
                    date: NaiveDate::from_ymd_opt(2013, 3, 1).unwrap() + Days::new(i as u64 * 2),
                    weight: w,
                    activity: a,
                })
                .collect()
        })
        .prop_filter("needs a weight", |r: &Vec<DailyRecord>| {
            r.iter().any(|d| d.weight.is_some())
        })
    }

    proptest! {
        #[test]
        fn weekly_is_order_invariant(recs in daily_strategy(), rot in 0usize..60) {
            let mut shuffled = recs.clone();
            let k = rot % shuffled.len();
            shuffled.rotate_left(k);
            shuffled.reverse();
            let a = to_weekly(&recs, StartDay::default()).unwrap();
            let b = to_weekly(&shuffled, StartDay::default()).unwrap();
            prop_assert_eq!(a.points.len(), b.points.len());
            for (p, q) in a.points.iter().zip(&b.points) {
                prop_assert_eq!(p.exposure, q.exposure);
                match (p.outcome, q.outcome) {
                    (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-9),
                    (x, y) => prop_assert_eq!(x, y),
                }
            }
        }

        #[test]
        fn start_day_preserves_day_count(recs in daily_strategy(), d in 0u8..7) {
            let start = StartDay(Weekday::try_from(d).unwrap());
            let s = to_weekly(&recs, start).unwrap();
            let covered: usize = s.points.iter().map(|p| p.days_recorded).sum();
            prop_assert_eq!(covered, recs.len());
        }

        #[test]
        fn centered_outcomes_match_center(recs in daily_strategy()) {
            let s = to_weekly(&recs, StartDay::default()).unwrap();
            let weights: Vec<f64> = recs.iter().filter_map(|r| r.weight).collect();
            let mean = weights.iter().sum::<f64>() / weights.len() as f64;
            prop_assert!((s.center - mean).abs() < 1e-9);
            // weighed-day-weighted mean of the weekly outcomes is zero
            let first = week_start(recs[0].date, Weekday::Mon);
            let mut weighed = vec![0usize; s.points.len()];
            for r in recs.iter().filter(|r| r.weight.is_some()) {
                weighed[((r.date - first).num_days() / 7) as usize] += 1;
            }
            let total: f64 = s.points.iter().zip(&weighed)
                .filter_map(|(p, &k)| p.outcome.map(|o| o * k as f64))
                .sum();
            prop_assert!(total.abs() < 1e-9 * weights.len() as f64);
        }

        #[test]
        fn interpolation_is_idempotent_and_bracketed(
            cells in prop::collection::vec(prop::option::weighted(0.6, -3.0f64..3.0), 2..40)
        ) {
            let mut cells = cells;
            cells[0] = Some(cells[0].unwrap_or(0.5));
            let n = cells.len();
            cells[n - 1] = Some(cells[n - 1].unwrap_or(-0.5));
            let exp: Vec<_> = cells.iter().map(|c| c.map(|v| (v + 3.0) / 6.0)).collect();
            let s = weekly(&cells, &exp);
            let (once, _) = interpolate_missing(&s).unwrap();
            let (twice, _) = interpolate_missing(&once).unwrap();
            prop_assert_eq!(&once, &twice);
            for (i, p) in once.points.iter().enumerate() {
                if cells[i].is_some() { continue; }
                let lo = (0..i).rev().find(|&k| cells[k].is_some()).unwrap();
                let hi = (i + 1..n).find(|&k| cells[k].is_some()).unwrap();
                let (a, b) = (cells[lo].unwrap(), cells[hi].unwrap());
                let v = p.outcome.unwrap();
                prop_assert!(v >= a.min(b) - 1e-12 && v <= a.max(b) + 1e-12);
            }
        }
    }
}
