//! Minimal SVG line and scatter charts for study reports.

use std::fmt::Write as _;

use crate::study::{Metric, StudyReport};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 55.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    /// Draw markers without connecting lines.
    pub scatter: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
    from: f64,
    to: f64,
}

impl Axis {
    fn new(values: impl Iterator<Item = f64>, log: bool, from: f64, to: f64) -> Self {
        let (mut lo, mut hi) = values
            .filter(|v| v.is_finite() && (!log || *v > 0.0))
            .map(|v| if log { v.log10() } else { v })
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if log {
            lo = lo.floor();
            hi = hi.ceil().max(lo + 1.0);
        } else {
            if lo > 0.0 && lo < 0.5 * hi {
                lo = 0.0;
            }
            if hi - lo < 1e-12 {
                hi = lo + 1.0;
            }
            let pad = 0.05 * (hi - lo);
            if lo != 0.0 {
                lo -= pad;
            }
            hi += pad;
        }
        Self { lo, hi, log, from, to }
    }

    fn map(&self, v: f64) -> Option<f64> {
        let t = if self.log {
            if v <= 0.0 {
                return None;
            }
            v.log10()
        } else {
            v
        };
        t.is_finite()
            .then(|| self.from + (t - self.lo) / (self.hi - self.lo) * (self.to - self.from))
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        if self.log {
            (self.lo as i32..=self.hi as i32)
                .map(|e| (10f64.powi(e), format!("1e{e}")))
                .collect()
        } else {
            let span = self.hi - self.lo;
            let raw = span / 5.0;
            let mag = 10f64.powf(raw.log10().floor());
            let step = [1.0, 2.0, 5.0, 10.0]
                .iter()
                .map(|m| m * mag)
                .find(|s| span / s <= 6.0)
                .unwrap_or(10.0 * mag);
            let start = (self.lo / step).ceil() * step;
            let mut out = Vec::new();
            let mut v = start;
            while v <= self.hi + 1e-9 * step {
                let label = if step >= 1.0 { format!("{v:.0}") } else { format!("{v}") };
                out.push((v, label));
                v += step;
            }
            out
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Chart {
    pub fn to_svg(&self) -> String {
        let plot_right = WIDTH - MARGIN_RIGHT;
        let plot_bottom = HEIGHT - MARGIN_BOTTOM;
        let xs = Axis::new(
            self.series.iter().flat_map(|s| s.points.iter().map(|p| p.0)),
            self.log_x,
            MARGIN_LEFT,
            plot_right,
        );
        let ys = Axis::new(
            self.series.iter().flat_map(|s| s.points.iter().map(|p| p.1)),
            self.log_y,
            plot_bottom,
            MARGIN_TOP,
        );
        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            (MARGIN_LEFT + plot_right) / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            svg,
            r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            plot_right - MARGIN_LEFT,
            plot_bottom - MARGIN_TOP
        );
        for (v, label) in xs.ticks() {
            if let Some(x) = xs.map(v) {
                let _ = writeln!(
                    svg,
                    r#"<line x1="{x:.1}" y1="{plot_bottom}" x2="{x:.1}" y2="{:.1}" stroke="black"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">{label}</text>"#,
                    plot_bottom + 5.0,
                    plot_bottom + 18.0
                );
            }
        }
        for (v, label) in ys.ticks() {
            if let Some(y) = ys.map(v) {
                let _ = writeln!(
                    svg,
                    r##"<line x1="{:.1}" y1="{y:.1}" x2="{plot_right}" y2="{y:.1}" stroke="#dddddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{label}</text>"##,
                    MARGIN_LEFT - 5.0,
                    MARGIN_LEFT - 8.0,
                    y + 4.0
                );
            }
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            (MARGIN_LEFT + plot_right) / 2.0,
            HEIGHT - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            svg,
            r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
            (MARGIN_TOP + plot_bottom) / 2.0,
            (MARGIN_TOP + plot_bottom) / 2.0,
            escape(&self.y_label)
        );
        for (k, s) in self.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let pts: Vec<(f64, f64)> = s
                .points
                .iter()
                .filter_map(|&(x, y)| Some((xs.map(x)?, ys.map(y)?)))
                .collect();
            if !s.scatter && pts.len() > 1 {
                let path: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
                let _ = writeln!(
                    svg,
                    r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                    path.join(" ")
                );
            }
            for (x, y) in &pts {
                let _ = writeln!(svg, r#"<circle cx="{x:.1}" cy="{y:.1}" r="3.5" fill="{color}"/>"#);
            }
            let ly = MARGIN_TOP + 10.0 + 18.0 * k as f64;
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.1}" cy="{ly:.1}" r="4" fill="{color}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
                plot_right + 15.0,
                plot_right + 25.0,
                ly + 4.0,
                escape(&s.name)
            );
        }
        svg.push_str("</svg>\n");
        svg
    }
}

/// One line per λ_T: the metric against λ_NT.
pub fn metric_chart(report: &StudyReport, estimator: &str, metric: Metric) -> Chart {
    let y_label = match metric {
        Metric::RelativeBias => "relative bias (%)",
        Metric::SignedBias => "bias (%)",
        Metric::Cv => "CV (%)",
        Metric::Failures => "failed replicates",
    };
    let table = report.table(estimator, metric);
    let series = report
        .grid
        .lambda_target
        .iter()
        .zip(table)
        .map(|(lt, row)| Series {
            name: format!("lambda_T = {lt:e}"),
            points: report
                .grid
                .lambda_nontarget
                .iter()
                .zip(row)
                .filter_map(|(&x, y)| y.map(|y| (x, y)))
                .collect(),
            scatter: false,
        })
        .collect();
    Chart {
        title: format!("{estimator}, scenario {}", report.grid.scenario),
        x_label: "lambda_NT".into(),
        y_label: y_label.into(),
        log_x: true,
        log_y: false,
        series,
    }
}

/// CV of λ̂_T against the expected target catch, one point per cell.
pub fn cv_vs_catch_chart(report: &StudyReport, estimator: &str) -> Chart {
    let points = report
        .cells
        .iter()
        .filter(|c| c.estimator == estimator)
        .filter_map(|c| c.cv_pct.map(|cv| (c.expected_catch, cv)))
        .collect();
    Chart {
        title: format!("{estimator}: CV against expected target catch"),
        x_label: "expected target catch".into(),
        y_label: "CV (%)".into(),
        log_x: true,
        log_y: true,
        series: vec![Series {
            name: estimator.to_string(),
            points,
            scatter: true,
        }],
    }
}
