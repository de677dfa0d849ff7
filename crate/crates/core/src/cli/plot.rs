//! Learning curves from metrics logs, as CSV and a two-panel SVG.

use std::fmt::Write as _;

use crate::train::EpochReport;

/// One labelled metrics log.
#[derive(Clone, Debug)]
pub struct Curve {
    pub label: String,
    pub reports: Vec<EpochReport>,
}

/// One row per epoch record, across all curves.
pub fn curves_csv(curves: &[Curve]) -> String {
    let mut out = String::from("label,epoch,train_loss,dev_loss,dev_error_rate\n");
    for c in curves {
        for r in &c.reports {
            let err = r.dev_error_rate.map(|e| e.to_string()).unwrap_or_default();
            writeln!(out, "{},{},{},{},{}", csv_field(&c.label), r.epoch, r.train_loss, r.dev_loss, err).expect("write to string");
        }
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];
const PANEL_W: f64 = 360.0;
const PANEL_H: f64 = 240.0;
const MARGIN: f64 = 50.0;

struct Panel<'a> {
    title: &'a str,
    x0: f64,
    series: Vec<Vec<(f64, f64)>>,
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

fn draw_panel(out: &mut String, p: &Panel<'_>) {
    let (x0, y0) = (p.x0 + MARGIN, MARGIN);
    let all = || p.series.iter().flatten();
    let (xmin, xmax) = range(all().map(|v| v.0));
    let (ymin, ymax) = range(all().map(|v| v.1));
    let sx = |x: f64| x0 + (x - xmin) / (xmax - xmin) * PANEL_W;
    let sy = |y: f64| y0 + PANEL_H - (y - ymin) / (ymax - ymin) * PANEL_H;
    let w = |out: &mut String, s: String| out.push_str(&s);
    w(out, format!("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", x0 + PANEL_W / 2.0, y0 - 12.0, p.title));
    w(out, format!(
        "<rect x=\"{x0}\" y=\"{y0}\" width=\"{PANEL_W}\" height=\"{PANEL_H}\" fill=\"none\" stroke=\"#444\"/>\n"
    ));
    for (v, y) in [(ymin, y0 + PANEL_H), (ymax, y0 + 4.0)] {
        w(out, format!("<text x=\"{}\" y=\"{y}\" text-anchor=\"end\" font-size=\"10\">{v:.3}</text>\n", x0 - 4.0));
    }
    for (v, x) in [(xmin, x0), (xmax, x0 + PANEL_W)] {
        w(out, format!(
            "<text x=\"{x}\" y=\"{}\" text-anchor=\"middle\" font-size=\"10\">{v}</text>\n",
            y0 + PANEL_H + 14.0
        ));
    }
    w(out, format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"11\">epoch</text>\n",
        x0 + PANEL_W / 2.0,
        y0 + PANEL_H + 30.0
    ));
    for (i, s) in p.series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = s.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        if pts.len() > 1 {
            w(out, format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
                pts.join(" ")
            ));
        }
        for &(x, y) in s {
            w(out, format!("<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"{color}\"/>\n", sx(x), sy(y)));
        }
    }
}

/// Dev error rate (left) and dev loss (right) against epoch, one labelled
/// series per curve.
pub fn curves_svg(curves: &[Curve]) -> String {
    let series = |f: &dyn Fn(&EpochReport) -> Option<f64>| -> Vec<Vec<(f64, f64)>> {
        curves
            .iter()
            .map(|c| c.reports.iter().filter_map(|r| f(r).map(|v| (r.epoch as f64, v))).collect())
            .collect()
    };
    let panels = [
        Panel {
            title: "dev error rate (%)",
            x0: 0.0,
            series: series(&|r| r.dev_error_rate),
        },
        Panel {
            title: "dev loss",
            x0: PANEL_W + 2.0 * MARGIN,
            series: series(&|r| Some(r.dev_loss)),
        },
    ];
    let width = 2.0 * (PANEL_W + 2.0 * MARGIN);
    let legend_y = PANEL_H + 2.0 * MARGIN;
    let height = legend_y + 16.0 * curves.len() as f64 + 10.0;
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    for p in &panels {
        draw_panel(&mut out, p);
    }
    for (i, c) in curves.iter().enumerate() {
        let y = legend_y + 16.0 * i as f64;
        let color = COLORS[i % COLORS.len()];
        out.push_str(&format!(
            "<line x1=\"{MARGIN}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"{color}\" stroke-width=\"2\"/>\n\
             <text x=\"{}\" y=\"{}\">{}</text>\n",
            MARGIN + 20.0,
            MARGIN + 26.0,
            y + 4.0,
            xml_escape(&c.label)
        ));
    }
    out.push_str("</svg>\n");
    out
}
