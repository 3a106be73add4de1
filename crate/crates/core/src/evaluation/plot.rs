//! Self-contained SVG charts: learning curves per (metric, N) and per-emotion
//! bars.

use std::fmt::Write;

use super::metrics::{mean_se, Metric};
use super::report::{PerEmotionRow, SummaryRow};

const PANEL_W: f64 = 260.0;
const PANEL_H: f64 = 180.0;
const MARGIN: f64 = 48.0;
const PALETTE: [&str; 6] = ["#1b6ca8", "#d1495b", "#2e933c", "#edae49", "#6a4c93", "#00798c"];
const METRICS: [Metric; 3] = [Metric::Quality, Metric::Top1, Metric::Top2];

fn y_range(metric: Metric) -> (f64, f64) {
    match metric {
        Metric::Quality => (1.0, 7.0),
        _ => (0.0, 1.0),
    }
}

fn label(metric: Metric) -> &'static str {
    match metric {
        Metric::Quality => "Quality",
        Metric::Top1 => "Top-1",
        Metric::Top2 => "Top-2",
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Panel {
    x0: f64,
    y0: f64,
    xmax: f64,
    ylo: f64,
    yhi: f64,
}

impl Panel {
    fn px(&self, x: f64) -> f64 {
        self.x0 + if self.xmax > 0.0 { x / self.xmax * PANEL_W } else { 0.0 }
    }

    fn py(&self, y: f64) -> f64 {
        self.y0 + PANEL_H - (y.clamp(self.ylo, self.yhi) - self.ylo) / (self.yhi - self.ylo) * PANEL_H
    }

    fn frame(&self, svg: &mut String, title: &str, xticks: &[usize]) {
        let _ = writeln!(
            svg,
            r##"<rect x="{:.1}" y="{:.1}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="#444"/>"##,
            self.x0, self.y0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="13">{}</text>"#,
            self.x0 + PANEL_W / 2.0,
            self.y0 - 8.0,
            escape(title)
        );
        for i in 0..=4 {
            let v = self.ylo + (self.yhi - self.ylo) * i as f64 / 4.0;
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end" font-size="10">{}</text>"#,
                self.x0 - 4.0,
                self.py(v) + 3.0,
                fmt_tick(v)
            );
        }
        for &t in xticks {
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="10">{t}</text>"#,
                self.px(t as f64),
                self.y0 + PANEL_H + 14.0
            );
        }
    }

    fn hline(&self, svg: &mut String, y: f64) {
        let _ = writeln!(
            svg,
            r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#888" stroke-dasharray="4 3"/>"##,
            self.x0,
            self.py(y),
            self.x0 + PANEL_W,
            self.py(y)
        );
    }
}

fn fmt_tick(v: f64) -> String {
    if (v - v.round()).abs() < 1e-9 {
        format!("{}", v.round() as i64)
    } else {
        format!("{v:.2}")
    }
}

fn header(w: f64, h: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

fn legend(svg: &mut String, names: &[String], x: f64, y: f64) {
    for (i, name) in names.iter().enumerate() {
        let yy = y + 16.0 * i as f64;
        let c = PALETTE[i % PALETTE.len()];
        let _ = writeln!(svg, r#"<rect x="{x:.1}" y="{:.1}" width="12" height="12" fill="{c}"/>"#, yy - 10.0);
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{yy:.1}" font-size="12">{}</text>"#, x + 16.0, escape(name));
    }
}

fn distinct<T: PartialEq + Clone>(it: impl Iterator<Item = T>) -> Vec<T> {
    let mut out = Vec::new();
    for x in it {
        if !out.contains(&x) {
            out.push(x);
        }
    }
    out
}

/// Learning curves: one row per metric, one column per N, one line per
/// method, error bars of one standard error, chance as a dashed line.
pub fn learning_curves_svg(summary: &[SummaryRow]) -> String {
    let mut ns = distinct(summary.iter().map(|r| r.n));
    ns.sort_unstable();
    let methods = distinct(summary.iter().map(|r| r.method.clone()));
    let mut qcs = distinct(summary.iter().map(|r| r.query_count));
    qcs.sort_unstable();
    let xmax = qcs.last().copied().unwrap_or(0) as f64;
    let width = MARGIN + ns.len().max(1) as f64 * (PANEL_W + MARGIN) + 110.0;
    let height = MARGIN + METRICS.len() as f64 * (PANEL_H + MARGIN);
    let mut svg = header(width, height);
    for (row, metric) in METRICS.into_iter().enumerate() {
        for (col, &n) in ns.iter().enumerate() {
            let (ylo, yhi) = y_range(metric);
            let p = Panel {
                x0: MARGIN + col as f64 * (PANEL_W + MARGIN),
                y0: MARGIN + row as f64 * (PANEL_H + MARGIN),
                xmax,
                ylo,
                yhi,
            };
            p.frame(&mut svg, &format!("{} (N={n})", label(metric)), &qcs);
            p.hline(&mut svg, metric.chance(n));
            for (mi, m) in methods.iter().enumerate() {
                let c = PALETTE[mi % PALETTE.len()];
                let pts: Vec<(f64, f64, f64)> = summary
                    .iter()
                    .filter(|r| r.n == n && &r.method == m)
                    .map(|r| {
                        let (v, se) = r.get(metric);
                        (r.query_count as f64, v, se)
                    })
                    .collect();
                if pts.is_empty() {
                    continue;
                }
                let path: Vec<String> = pts.iter().map(|(x, y, _)| format!("{:.1},{:.1}", p.px(*x), p.py(*y))).collect();
                let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="2"/>"#, path.join(" "));
                for (x, y, se) in pts {
                    let _ = writeln!(
                        svg,
                        r#"<line x1="{0:.1}" y1="{1:.1}" x2="{0:.1}" y2="{2:.1}" stroke="{c}"/><circle cx="{0:.1}" cy="{3:.1}" r="3" fill="{c}"/>"#,
                        p.px(x),
                        p.py(y - se),
                        p.py(y + se),
                        p.py(y)
                    );
                }
            }
        }
    }
    legend(&mut svg, &methods, width - 100.0, MARGIN + 10.0);
    svg.push_str("</svg>\n");
    svg
}

/// Per-emotion bars at the last query count of each (method, N): mean across
/// seeds with one standard error, chance as a dashed line. Only the largest N
/// is drawn.
pub fn per_emotion_svg(rows: &[PerEmotionRow]) -> String {
    let n = rows.iter().map(|r| r.n).max().unwrap_or(0);
    let rows: Vec<&PerEmotionRow> = rows.iter().filter(|r| r.n == n).collect();
    let methods = distinct(rows.iter().map(|r| r.method.clone()));
    let emotions = distinct(rows.iter().map(|r| r.emotion.clone()));
    let width = MARGIN + METRICS.len() as f64 * (PANEL_W + MARGIN) + 110.0;
    let height = 2.0 * MARGIN + PANEL_H + 30.0;
    let mut svg = header(width, height);
    let slot = PANEL_W / emotions.len().max(1) as f64;
    let bar = slot * 0.8 / methods.len().max(1) as f64;
    for (col, metric) in METRICS.into_iter().enumerate() {
        let (ylo, yhi) = y_range(metric);
        let p = Panel { x0: MARGIN + col as f64 * (PANEL_W + MARGIN), y0: MARGIN, xmax: 1.0, ylo, yhi };
        p.frame(&mut svg, &format!("{} per emotion (N={n})", label(metric)), &[]);
        for (ei, e) in emotions.iter().enumerate() {
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="10">{}</text>"#,
                p.x0 + slot * (ei as f64 + 0.5),
                p.y0 + PANEL_H + 14.0,
                escape(e)
            );
            for (mi, m) in methods.iter().enumerate() {
                let last = rows.iter().filter(|r| &r.method == m).map(|r| r.query_count).max();
                let vals: Vec<f64> = rows
                    .iter()
                    .filter(|r| &r.method == m && &r.emotion == e && Some(r.query_count) == last)
                    .map(|r| match metric {
                        Metric::Quality => r.quality,
                        Metric::Top1 => r.top1,
                        Metric::Top2 => r.top2,
                    })
                    .collect();
                if vals.is_empty() {
                    continue;
                }
                let (v, se) = mean_se(&vals);
                let x = p.x0 + slot * ei as f64 + slot * 0.1 + bar * mi as f64;
                let c = PALETTE[mi % PALETTE.len()];
                let _ = writeln!(
                    svg,
                    r#"<rect x="{x:.1}" y="{:.1}" width="{bar:.1}" height="{:.1}" fill="{c}"/>"#,
                    p.py(v),
                    p.py(ylo) - p.py(v)
                );
                let _ = writeln!(
                    svg,
                    r##"<line x1="{0:.1}" y1="{1:.1}" x2="{0:.1}" y2="{2:.1}" stroke="#222"/>"##,
                    x + bar / 2.0,
                    p.py(v - se),
                    p.py(v + se)
                );
            }
        }
        p.hline(&mut svg, metric.chance(n));
    }
    legend(&mut svg, &methods, width - 100.0, MARGIN + 10.0);
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary_row(method: &str, n: usize, qc: usize, v: f64) -> SummaryRow {
        SummaryRow {
            method: method.into(),
            n,
            query_count: qc,
            seeds: 2,
            quality_mean: 1.0 + 6.0 * v,
            quality_se: 0.1,
            top1_mean: v,
            top1_se: 0.05,
            top2_mean: v,
            top2_se: 0.05,
            quality_chance: 4.0,
            top1_chance: 1.0 / n as f64,
            top2_chance: 2.0 / n as f64,
        }
    }

    #[test]
    fn curves_have_one_polyline_per_method_and_panel() {
        let rows: Vec<_> = ["ours", "sep"]
            .iter()
            .flat_map(|m| [2, 4].into_iter().flat_map(move |n| (0..3).map(move |k| summary_row(m, n, 20 * k, 0.3))))
            .collect();
        let svg = learning_curves_svg(&rows);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2 * 2 * 3);
        assert_eq!(svg.matches("stroke-dasharray").count(), 2 * 3);
        assert_eq!(svg, learning_curves_svg(&rows));
    }

    #[test]
    fn bars_cover_every_emotion_and_method() {
        let mut rows = Vec::new();
        for m in ["ours", "sep_all"] {
            for e in ["joy", "sadness"] {
                for seed in 0..2 {
                    rows.push(PerEmotionRow {
                        method: m.into(),
                        n: 2,
                        seed,
                        query_count: 80,
                        emotion: e.into(),
                        quality: 5.0,
                        top1: 0.5,
                        top2: 1.0,
                    });
                }
            }
        }
        let svg = per_emotion_svg(&rows);
        // bars, panel frames, legend swatches
        assert_eq!(svg.matches("<rect x=").count(), 3 * 2 * 2 + 3 + 2);
        assert!(svg.contains("sadness"));
    }
}
