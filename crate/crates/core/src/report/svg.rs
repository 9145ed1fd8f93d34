use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::report::metrics::TrialReport;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChartKind {
    AccuracyVsEpisode,
    AccuracyVsAcquired,
    AcquisitionsVsEpisode,
    /// Mean acquisitions per episode against the threshold θ.
    ThetaSweep,
}

impl ChartKind {
    /// The three per-run charts; the sweep chart needs reports at several θ.
    pub const RUN_CHARTS: [ChartKind; 3] = [
        ChartKind::AccuracyVsEpisode,
        ChartKind::AccuracyVsAcquired,
        ChartKind::AcquisitionsVsEpisode,
    ];

    pub fn file_name(self) -> &'static str {
        match self {
            ChartKind::AccuracyVsEpisode => "accuracy_vs_episode.svg",
            ChartKind::AccuracyVsAcquired => "accuracy_vs_acquired.svg",
            ChartKind::AcquisitionsVsEpisode => "acquisitions_vs_episode.svg",
            ChartKind::ThetaSweep => "theta_sweep.svg",
        }
    }

    fn labels(self) -> (&'static str, &'static str, &'static str) {
        match self {
            ChartKind::AccuracyVsEpisode => ("Test accuracy per episode", "episode", "test accuracy"),
            ChartKind::AccuracyVsAcquired => (
                "Test accuracy against acquired images",
                "images acquired",
                "test accuracy",
            ),
            ChartKind::AcquisitionsVsEpisode => ("Acquisitions per episode", "episode", "images acquired"),
            ChartKind::ThetaSweep => (
                "Influence of the acquisition threshold",
                "threshold θ (nats)",
                "mean acquisitions per episode",
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Series {
    label: String,
    points: Vec<(f64, f64)>,
    /// Drawn as a dashed horizontal reference line across the x range.
    reference: bool,
}

fn series_for(reports: &[TrialReport], kind: ChartKind) -> Vec<Series> {
    let mut out = Vec::new();
    match kind {
        ChartKind::ThetaSweep => {
            let mut ids: Vec<u8> = reports.iter().filter(|r| !r.is_baseline()).map(|r| r.strategy).collect();
            ids.sort_unstable();
            ids.dedup();
            for id in ids {
                let mut points: Vec<(f64, f64)> = reports
                    .iter()
                    .filter(|r| r.strategy == id && !r.is_baseline())
                    .map(|r| {
                        let n = r.episodes.len() as f64;
                        (r.theta, r.episodes.iter().map(|e| e.acquired_mean).sum::<f64>() / n)
                    })
                    .collect();
                points.sort_by(|a, b| a.0.total_cmp(&b.0));
                out.push(Series {
                    label: format!("strategy {id}"),
                    points,
                    reference: false,
                });
            }
        }
        _ => {
            for r in reports {
                let label = format!("strategy {}", r.strategy);
                if r.is_baseline() {
                    if kind != ChartKind::AcquisitionsVsEpisode {
                        out.push(Series {
                            label,
                            points: vec![(f64::NAN, r.episodes[0].accuracy_mean)],
                            reference: true,
                        });
                    }
                    continue;
                }
                let points = r
                    .episodes
                    .iter()
                    .map(|e| match kind {
                        ChartKind::AccuracyVsEpisode => (f64::from(e.episode), e.accuracy_mean),
                        ChartKind::AccuracyVsAcquired => (e.accumulated_mean, e.accuracy_mean),
                        _ => (f64::from(e.episode), e.acquired_mean),
                    })
                    .collect();
                out.push(Series {
                    label,
                    points,
                    reference: false,
                });
            }
        }
    }
    out
}

/// Roughly five round tick values covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= 6.0)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        let pad = if lo.abs() > 1e-9 { lo.abs() * 0.1 } else { 1.0 };
        return (lo - pad, hi + pad);
    }
    let pad = (hi - lo) * 0.05;
    (lo - pad, hi + pad)
}

fn render(kind: ChartKind, series: &[Series]) -> String {
    let (title, x_label, y_label) = kind.labels();
    let (x0, x1) = padded_range(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y0, y1) = padded_range(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        LEFT + pw / 2.0,
        escape(title)
    );

    let _ = writeln!(s, r##"<g stroke="#cccccc" stroke-width="1">"##);
    for t in ticks(x0, x1) {
        let _ = writeln!(s, r#"<line x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{2:.2}"/>"#, sx(t), TOP, TOP + ph);
    }
    for t in ticks(y0, y1) {
        let _ = writeln!(s, r#"<line x1="{1:.2}" y1="{0:.2}" x2="{2:.2}" y2="{0:.2}"/>"#, sy(t), LEFT, LEFT + pw);
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT:.2}" y="{TOP:.2}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="black"/>"#
    );
    for t in ticks(x0, x1) {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            sx(t),
            TOP + ph + 16.0,
            fmt_tick(t)
        );
    }
    for t in ticks(y0, y1) {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            sy(t) + 4.0,
            fmt_tick(t)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 18.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{0:.2}" text-anchor="middle" transform="rotate(-90 18 {0:.2})">{1}</text>"#,
        TOP + ph / 2.0,
        escape(y_label)
    );

    for (i, series) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if series.reference {
            let y = sy(series.points[0].1);
            let _ = writeln!(
                s,
                r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="1.5" stroke-dasharray="6 4"/>"#,
                LEFT,
                LEFT + pw
            );
        } else {
            let pts: Vec<String> = series
                .points
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                pts.join(" ")
            );
            for &(x, y) in &series.points {
                let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, sx(x), sy(y));
            }
        }
        let ly = TOP + 10.0 + 20.0 * i as f64;
        let lx = LEFT + pw + 14.0;
        let dash = if series.reference { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"{dash}/>"#,
            lx + 24.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 30.0,
            ly + 4.0,
            escape(&series.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Render one chart as an SVG document.
pub fn svg_chart(reports: &[TrialReport], kind: ChartKind) -> Result<String> {
    if reports.is_empty() {
        return Err(Error::invalid("nothing to plot: no reports"));
    }
    let series = series_for(reports, kind);
    if series.is_empty() {
        return Err(Error::invalid("nothing to plot: no episodic strategies in the reports"));
    }
    Ok(render(kind, &series))
}

pub fn emit_svg_chart(reports: &[TrialReport], kind: ChartKind, path: impl AsRef<Path>) -> Result<()> {
    let doc = svg_chart(reports, kind)?;
    let path = path.as_ref();
    fs::write(path, doc).map_err(|e| Error::io(path, e))
}
