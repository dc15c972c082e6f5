//! Standalone SVG charts of a report: the analyzed time series, the pancit
//! plot (observed outcomes and predicted potential outcomes against
//! within-period week) and the APTE trajectory.
//!
//! Output is plain text built with fixed numeric precision, so identical
//! reports render to identical bytes. Every data line carries
//! `data-series` and `data-values` attributes holding the plotted values.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::Contrast;
use crate::report::ApteReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlotKind {
    Timeseries,
    Pancit,
    Apte,
}

impl PlotKind {
    pub const ALL: [PlotKind; 3] = [PlotKind::Timeseries, PlotKind::Pancit, PlotKind::Apte];

    pub fn file_name(self) -> &'static str {
        match self {
            PlotKind::Timeseries => "timeseries.svg",
            PlotKind::Pancit => "pancit.svg",
            PlotKind::Apte => "apte.svg",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Style {
    pub high_color: String,
    pub low_color: String,
    pub dot_radius: f64,
    pub ppo_width: f64,
    pub ppo_opacity: f64,
    pub estimate_width: f64,
    pub naive_width: f64,
    pub naive_opacity: f64,
}

impl Default for Style {
    fn default() -> Self {
        Style {
            high_color: "#1f5f8b".into(),
            low_color: "#c0392b".into(),
            dot_radius: 2.5,
            ppo_width: 0.8,
            ppo_opacity: 0.45,
            estimate_width: 2.5,
            naive_width: 8.0,
            naive_opacity: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSpec {
    pub kind: PlotKind,
    pub width: u32,
    pub height: u32,
    pub style: Style,
}

impl PlotSpec {
    pub fn new(kind: PlotKind) -> Self {
        PlotSpec {
            kind,
            width: 800,
            height: 480,
            style: Style::default(),
        }
    }
}

pub fn render(layout: &PlotSpec, report: &ApteReport) -> Result<String> {
    match layout.kind {
        PlotKind::Timeseries => render_timeseries(layout, report),
        PlotKind::Pancit => render_pancit(layout, report),
        PlotKind::Apte => render_apte(layout, report),
    }
}

fn level_color(style: &Style, level: u8) -> &str {
    if level == 1 {
        &style.high_color
    } else {
        &style.low_color
    }
}

/// Outcome against series week, dots colored by the treatment of their
/// period, each period's predicted outcome under its own treatment as a thin
/// line and period boundaries as dashed verticals.
pub fn render_timeseries(layout: &PlotSpec, report: &ApteReport) -> Result<String> {
    let series = report
        .series
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("report holds no series to plot".into()))?;
    let points: Vec<(f64, f64, bool)> = series
        .points
        .iter()
        .enumerate()
        .filter_map(|(i, p)| p.outcome.map(|y| ((i + 1) as f64, y, p.imputed_outcome)))
        .collect();
    if points.is_empty() {
        return Err(Error::InvalidInput("series has no outcomes to plot".into()));
    }
    let plan = report.plan.as_ref();
    let level_of = |week: usize| -> Option<u8> {
        let plan = plan?;
        let (p, _) = plan.locate(week)?;
        plan.treatment_labels.get(p).copied()
    };
    let ys = points
        .iter()
        .map(|p| p.1)
        .chain(report.ppos.iter().map(|r| r.ppo[r.treatment as usize]));
    let mut c = Canvas::new(layout, (1.0, series.len().max(2) as f64), bounds(ys));
    c.frame("Weekly outcome", "week", "centered outcome");
    if let Some(plan) = plan {
        for period in plan.periods.iter().skip(1) {
            c.vline(period.start_week as f64 - 0.5, "period-boundary", "#999999", Some("3,3"));
        }
    }
    for (&p, rows) in group_by_period(report).iter() {
        let level = rows[0].treatment;
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .map(|r| (r.series_week as f64, r.ppo[level as usize]))
            .collect();
        let color = level_color(&layout.style, level).to_string();
        c.polyline(&format!("ppo-period-{p}"), &pts, &color, layout.style.ppo_width, layout.style.ppo_opacity);
    }
    for &(x, y, imputed) in &points {
        let color = level_of(x as usize).map_or("#555555", |l| level_color(&layout.style, l));
        let color = color.to_string();
        c.dot(x, y, layout.style.dot_radius, &color, imputed);
    }
    c.legend(&layout.style, &[]);
    Ok(c.finish())
}

/// Observed outcomes and per-period predicted outcomes against week within
/// period, with the estimated mean potential outcome per level drawn bold and
/// the naive means drawn wide and light underneath.
pub fn render_pancit(layout: &PlotSpec, report: &ApteReport) -> Result<String> {
    if report.rows.is_empty() {
        return Err(Error::InvalidInput("report has no estimable weeks to plot".into()));
    }
    let style = &layout.style;
    let max_week = report
        .rows
        .iter()
        .map(|r| r.week)
        .chain(report.ppos.iter().map(|r| r.week))
        .max()
        .unwrap_or(1);
    let means = |f: fn(&crate::estimator::ApteRow) -> Option<f64>| -> Vec<(f64, f64)> {
        report
            .rows
            .iter()
            .filter_map(|r| f(r).map(|v| (r.week as f64, v)))
            .collect()
    };
    let lines = [
        ("naive-po-high", means(|r| r.e1_naive), 1u8, true),
        ("naive-po-low", means(|r| r.e0_naive), 0, true),
        ("mean-po-high", means(|r| r.e1), 1, false),
        ("mean-po-low", means(|r| r.e0), 0, false),
    ];
    let ys = report
        .ppos
        .iter()
        .flat_map(|r| [r.observed, r.ppo[r.treatment as usize]])
        .chain(lines.iter().flat_map(|l| l.1.iter().map(|p| p.1)));
    let mut c = Canvas::new(layout, (1.0, max_week.max(2) as f64), bounds(ys));
    c.frame("Pancit plot", "week within period", "centered outcome");
    for (&p, rows) in group_by_period(report).iter() {
        let level = rows[0].treatment;
        let color = level_color(style, level).to_string();
        let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.week as f64, r.ppo[level as usize])).collect();
        c.polyline(&format!("ppo-period-{p}"), &pts, &color, style.ppo_width, style.ppo_opacity);
    }
    for r in &report.ppos {
        let color = level_color(style, r.treatment).to_string();
        c.dot(r.week as f64, r.observed, style.dot_radius, &color, false);
    }
    for (name, pts, level, naive) in &lines {
        if pts.is_empty() {
            continue;
        }
        let color = level_color(style, *level).to_string();
        let (w, o) = if *naive {
            (style.naive_width, style.naive_opacity)
        } else {
            (style.estimate_width, 1.0)
        };
        c.polyline(name, pts, &color, w, o);
    }
    c.legend(style, &[("correct", style.estimate_width, 1.0), ("naive", style.naive_width, style.naive_opacity)]);
    Ok(c.finish())
}

/// The APTE trajectory (dark, bold) and its naive counterpart (light, wide)
/// against within-period week, over a reference line at no effect.
pub fn render_apte(layout: &PlotSpec, report: &ApteReport) -> Result<String> {
    let apte: Vec<(f64, f64)> = report
        .rows
        .iter()
        .filter_map(|r| r.apte.map(|v| (r.week as f64, v)))
        .collect();
    if apte.is_empty() {
        return Err(Error::InvalidInput("report has no estimable weeks to plot".into()));
    }
    let naive: Vec<(f64, f64)> = report
        .rows
        .iter()
        .filter_map(|r| r.apte_naive.map(|v| (r.week as f64, v)))
        .collect();
    let reference = match report.contrast {
        Contrast::Difference => 0.0,
        Contrast::Ratio => 1.0,
    };
    let max_week = apte.iter().chain(&naive).map(|p| p.0).fold(2.0, f64::max);
    let ys = apte.iter().chain(&naive).map(|p| p.1).chain([reference]);
    let mut c = Canvas::new(layout, (1.0, max_week), bounds(ys));
    c.frame("Average period treatment effect", "week within period", "APTE");
    c.hline(reference, "reference", "#777777", Some("4,3"));
    let style = &layout.style;
    if !naive.is_empty() {
        c.polyline("apte-naive", &naive, "#9aa7b0", style.naive_width, style.naive_opacity);
    }
    c.polyline("apte", &apte, "#1a1a1a", style.estimate_width, 1.0);
    Ok(c.finish())
}

fn group_by_period(report: &ApteReport) -> BTreeMap<usize, Vec<&crate::estimator::RowPpo>> {
    let mut groups: BTreeMap<usize, Vec<_>> = BTreeMap::new();
    for r in &report.ppos {
        groups.entry(r.period).or_default().push(r);
    }
    groups
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (-1.0, 1.0);
    }
    if hi - lo < 1e-9 {
        return (lo - 1.0, hi + 1.0);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Tick step of 1, 2 or 5 times a power of ten giving about five ticks.
fn tick_step(span: f64) -> f64 {
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let frac = raw / mag;
    let nice = if frac < 1.5 {
        1.0
    } else if frac < 3.5 {
        2.0
    } else if frac < 7.5 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn tick_label(v: f64, step: f64) -> String {
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    let s = format!("{v:.decimals$}");
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        "0".into()
    } else {
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct Canvas {
    out: String,
    width: f64,
    height: f64,
    left: f64,
    right: f64,
    top: f64,
    bottom: f64,
    x: (f64, f64),
    y: (f64, f64),
}

impl Canvas {
    fn new(layout: &PlotSpec, x: (f64, f64), y: (f64, f64)) -> Canvas {
        let (width, height) = (layout.width as f64, layout.height as f64);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\" \
             font-family=\"sans-serif\" font-size=\"12\">",
            layout.width, layout.height, layout.width, layout.height
        );
        let _ = writeln!(out, "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>");
        Canvas {
            out,
            width,
            height,
            left: 64.0,
            right: 24.0,
            top: 40.0,
            bottom: 48.0,
            x,
            y,
        }
    }

    fn px(&self, x: f64) -> f64 {
        self.left + (x - self.x.0) / (self.x.1 - self.x.0) * (self.width - self.left - self.right)
    }

    fn py(&self, y: f64) -> f64 {
        self.height - self.bottom - (y - self.y.0) / (self.y.1 - self.y.0) * (self.height - self.top - self.bottom)
    }

    fn frame(&mut self, title: &str, xlabel: &str, ylabel: &str) {
        let (l, r) = (self.left, self.width - self.right);
        let (t, b) = (self.top, self.height - self.bottom);
        let _ = writeln!(
            self.out,
            "<text x=\"{:.2}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>",
            self.width / 2.0,
            escape(title)
        );
        let _ = writeln!(
            self.out,
            "<rect x=\"{l:.2}\" y=\"{t:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"#333333\"/>",
            r - l,
            b - t
        );
        let xstep = tick_step(self.x.1 - self.x.0).max(1.0);
        let mut v = (self.x.0 / xstep).ceil() * xstep;
        while v <= self.x.1 + 1e-9 {
            let px = self.px(v);
            let _ = writeln!(
                self.out,
                "<line x1=\"{px:.2}\" y1=\"{b:.2}\" x2=\"{px:.2}\" y2=\"{:.2}\" stroke=\"#333333\"/>\
                 <text x=\"{px:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
                b + 4.0,
                b + 17.0,
                tick_label(v, xstep)
            );
            v += xstep;
        }
        let ystep = tick_step(self.y.1 - self.y.0);
        let mut v = (self.y.0 / ystep).ceil() * ystep;
        while v <= self.y.1 + 1e-12 {
            let py = self.py(v);
            let _ = writeln!(
                self.out,
                "<line x1=\"{:.2}\" y1=\"{py:.2}\" x2=\"{l:.2}\" y2=\"{py:.2}\" stroke=\"#333333\"/>\
                 <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>",
                l - 4.0,
                l - 7.0,
                py + 4.0,
                tick_label(v, ystep)
            );
            v += ystep;
        }
        let _ = writeln!(
            self.out,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
            (l + r) / 2.0,
            self.height - 10.0,
            escape(xlabel)
        );
        let _ = writeln!(
            self.out,
            "<text transform=\"translate(16 {:.2}) rotate(-90)\" text-anchor=\"middle\">{}</text>",
            (t + b) / 2.0,
            escape(ylabel)
        );
    }

    fn polyline(&mut self, name: &str, pts: &[(f64, f64)], color: &str, width: f64, opacity: f64) {
        let coords: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", self.px(x), self.py(y)))
            .collect();
        let xs: Vec<String> = pts.iter().map(|p| p.0.to_string()).collect();
        let ys: Vec<String> = pts.iter().map(|p| p.1.to_string()).collect();
        let _ = writeln!(
            self.out,
            "<polyline data-series=\"{}\" data-x=\"{}\" data-values=\"{}\" points=\"{}\" fill=\"none\" \
             stroke=\"{color}\" stroke-width=\"{width}\" stroke-opacity=\"{opacity}\" \
             stroke-linejoin=\"round\" stroke-linecap=\"round\"/>",
            escape(name),
            xs.join(" "),
            ys.join(" "),
            coords.join(" ")
        );
    }

    fn dot(&mut self, x: f64, y: f64, r: f64, color: &str, hollow: bool) {
        let fill = if hollow { "none" } else { color };
        let _ = writeln!(
            self.out,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"{r}\" fill=\"{fill}\" stroke=\"{color}\"/>",
            self.px(x),
            self.py(y)
        );
    }

    fn hline(&mut self, y: f64, name: &str, color: &str, dash: Option<&str>) {
        let py = self.py(y);
        let dash = dash.map(|d| format!(" stroke-dasharray=\"{d}\"")).unwrap_or_default();
        let _ = writeln!(
            self.out,
            "<line data-series=\"{name}\" data-values=\"{y}\" x1=\"{:.2}\" y1=\"{py:.2}\" x2=\"{:.2}\" \
             y2=\"{py:.2}\" stroke=\"{color}\"{dash}/>",
            self.left,
            self.width - self.right
        );
    }

    fn vline(&mut self, x: f64, name: &str, color: &str, dash: Option<&str>) {
        let px = self.px(x);
        let dash = dash.map(|d| format!(" stroke-dasharray=\"{d}\"")).unwrap_or_default();
        let _ = writeln!(
            self.out,
            "<line data-series=\"{name}\" x1=\"{px:.2}\" y1=\"{:.2}\" x2=\"{px:.2}\" y2=\"{:.2}\" \
             stroke=\"{color}\" stroke-width=\"0.6\"{dash}/>",
            self.top,
            self.height - self.bottom
        );
    }

    /// Level colors, then one sample line per (label, width, opacity).
    fn legend(&mut self, style: &Style, lines: &[(&str, f64, f64)]) {
        let x = self.width - self.right - 150.0;
        let mut y = self.top + 14.0;
        for (label, color) in [("high activity", &style.high_color), ("low activity", &style.low_color)] {
            let _ = writeln!(
                self.out,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"{color}\"/>\
                 <text x=\"{:.2}\" y=\"{:.2}\">{label}</text>",
                x + 10.0,
                y - 4.0,
                x + 30.0,
                y
            );
            y += 16.0;
        }
        for (label, w, o) in lines {
            let _ = writeln!(
                self.out,
                "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#444444\" \
                 stroke-width=\"{w}\" stroke-opacity=\"{o}\"/><text x=\"{:.2}\" y=\"{:.2}\">{label}</text>",
                x,
                y - 4.0,
                x + 22.0,
                y - 4.0,
                x + 30.0,
                y
            );
            y += 16.0;
        }
    }

    fn finish(mut self) -> String {
        self.out.push_str("</svg>\n");
        self.out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{ApteRow, RowPpo};
    use crate::report::read_table_csv;

    fn published() -> ApteReport {
        let rows = read_table_csv(include_str!("../data/published_table.csv").as_bytes()).unwrap();
        ApteReport::from_rows(rows).unwrap()
    }

    fn series_values(svg: &str, name: &str) -> Option<Vec<f64>> {
        let key = format!("data-series=\"{name}\"");
        let line = svg.lines().find(|l| l.contains(&key))?;
        let start = line.find("data-values=\"")? + "data-values=\"".len();
        let end = start + line[start..].find('"')?;
        Some(line[start..end].split(' ').map(|v| v.parse().unwrap()).collect())
    }

    fn is_balanced_svg(svg: &str) -> bool {
        svg.starts_with("<svg xmlns=\"http://www.w3.org/2000/svg\"")
            && svg.trim_end().ends_with("</svg>")
            && svg.matches("<svg").count() == 1
    }

    #[test]
    fn apte_plot_values_equal_table() {
        let report = published();
        let svg = render_apte(&PlotSpec::new(PlotKind::Apte), &report).unwrap();
        assert!(is_balanced_svg(&svg));
        let plotted = series_values(&svg, "apte").unwrap();
        let table: Vec<f64> = report.rows.iter().filter_map(|r| r.apte).collect();
        assert_eq!(plotted, table);
        assert_eq!(plotted.len(), 12);
        assert_eq!((plotted[4], plotted[5]), (0.06, -0.003));
        assert!(plotted[4] > 0.0 && plotted[5] < 0.0);
        assert_eq!(series_values(&svg, "reference").unwrap(), vec![0.0]);
    }

    #[test]
    fn pancit_high_line_starts_at_table_value() {
        let svg = render_pancit(&PlotSpec::new(PlotKind::Pancit), &published()).unwrap();
        let high = series_values(&svg, "mean-po-high").unwrap();
        assert_eq!(high[0], -0.264);
        assert_eq!(high.len(), 44);
        assert_eq!(series_values(&svg, "mean-po-low").unwrap().len(), 12);
    }

    #[test]
    fn rendering_is_deterministic() {
        let report = published();
        for kind in [PlotKind::Pancit, PlotKind::Apte] {
            let layout = PlotSpec::new(kind);
            assert_eq!(render(&layout, &report).unwrap(), render(&layout, &report).unwrap());
        }
    }

    #[test]
    fn zero_apte_coincides_with_reference() {
        let rows = (1..=4)
            .map(|w| ApteRow {
                week: w,
                e1: Some(0.5),
                e0: Some(0.5),
                apte: Some(0.0),
                e1_naive: None,
                e0_naive: None,
                apte_naive: None,
            })
            .collect();
        let report = ApteReport::from_rows(rows).unwrap();
        let svg = render_apte(&PlotSpec::new(PlotKind::Apte), &report).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        let reference = svg.lines().find(|l| l.contains("data-series=\"reference\"")).unwrap();
        let y = reference.split("y1=\"").nth(1).unwrap().split('"').next().unwrap();
        let apte = svg.lines().find(|l| l.contains("data-series=\"apte\"")).unwrap();
        let pts = apte.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        assert!(pts.split(' ').all(|p| p.split(',').nth(1) == Some(y)));
    }

    #[test]
    fn single_constant_period_pancit() {
        let ppos: Vec<RowPpo> = (1..=5)
            .map(|w| RowPpo {
                series_week: w,
                period: 1,
                week: w,
                treatment: 1,
                observed: 0.7,
                ppo: [0.7, 0.7],
            })
            .collect();
        let rows = (1..=5)
            .map(|w| ApteRow {
                week: w,
                e1: Some(0.7),
                e0: None,
                apte: None,
                e1_naive: Some(0.7),
                e0_naive: None,
                apte_naive: None,
            })
            .collect();
        let mut report = ApteReport::from_rows(rows).unwrap();
        report.ppos = ppos;
        let svg = render_pancit(&PlotSpec::new(PlotKind::Pancit), &report).unwrap();
        assert_eq!(series_values(&svg, "ppo-period-1").unwrap(), vec![0.7; 5]);
        let ys: Vec<&str> = svg
            .lines()
            .filter(|l| l.starts_with("<circle cx") && l.contains("r=\"2.5\""))
            .map(|l| l.split("cy=\"").nth(1).unwrap().split('"').next().unwrap())
            .collect();
        assert_eq!(ys.len(), 5);
        assert!(ys.iter().all(|y| *y == ys[0]));
    }

    #[test]
    fn empty_report_rejected() {
        let mut report = published();
        report.rows.clear();
        assert!(render_pancit(&PlotSpec::new(PlotKind::Pancit), &report).is_err());
        assert!(render_apte(&PlotSpec::new(PlotKind::Apte), &report).is_err());
        assert!(render_timeseries(&PlotSpec::new(PlotKind::Timeseries), &report).is_err());
    }

    #[test]
    fn ticks() {
        assert_eq!(tick_step(1.0), 0.2);
        assert_eq!(tick_step(44.0), 10.0);
        assert_eq!(tick_label(-0.0000001, 0.1), "0");
        assert_eq!(tick_label(0.4, 0.2), "0.4");
    }
}
