//! Static SVG interval-forest plots: one horizontal segment per interval
//! with a point marker at the estimate, panels side by side. Output is a
//! deterministic function of the inputs.

use crate::harness::IntervalReport;

#[derive(Debug, Clone)]
pub struct ForestRow {
    pub label: String,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

impl From<&IntervalReport> for ForestRow {
    fn from(r: &IntervalReport) -> Self {
        ForestRow {
            label: r.label.clone(),
            estimate: r.estimate,
            lower: r.lower,
            upper: r.upper,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ForestPanel {
    pub title: String,
    pub rows: Vec<ForestRow>,
}

const PANEL_WIDTH: f64 = 470.0;
const LABEL_WIDTH: f64 = 160.0;
const ROW_HEIGHT: f64 = 26.0;
const TOP: f64 = 46.0;
const BOTTOM: f64 = 40.0;
const GAP: f64 = 20.0;

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn c(v: f64) -> String {
    format!("{v:.2}")
}

/// Renders panels of labeled intervals into a standalone SVG document.
pub fn interval_forest_svg(panels: &[ForestPanel]) -> String {
    let max_rows = panels.iter().map(|p| p.rows.len()).max().unwrap_or(0);
    let height = TOP + max_rows as f64 * ROW_HEIGHT + BOTTOM;
    let width = panels.len() as f64 * (PANEL_WIDTH + GAP) + GAP;
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" \
         viewBox=\"0 0 {} {}\" font-family=\"monospace\" font-size=\"12\">\n",
        c(width),
        c(height),
        c(width),
        c(height)
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    for (pi, panel) in panels.iter().enumerate() {
        let x0 = GAP + pi as f64 * (PANEL_WIDTH + GAP);
        svg.push_str(&render_panel(panel, x0, height));
    }
    svg.push_str("</svg>\n");
    svg
}

fn render_panel(panel: &ForestPanel, x0: f64, height: f64) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "<text x=\"{}\" y=\"24\" font-weight=\"bold\">{}</text>\n",
        c(x0),
        esc(&panel.title)
    ));
    if panel.rows.is_empty() {
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" fill=\"#666\">(no intervals)</text>\n",
            c(x0),
            c(TOP + 10.0)
        ));
        return out;
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for r in &panel.rows {
        lo = lo.min(r.lower);
        hi = hi.max(r.upper);
    }
    if !(hi > lo) {
        let pad = lo.abs().max(1.0) * 0.1;
        lo -= pad;
        hi += pad;
    }
    let span = hi - lo;
    lo -= 0.08 * span;
    hi += 0.08 * span;
    let plot_x0 = x0 + LABEL_WIDTH;
    let plot_w = PANEL_WIDTH - LABEL_WIDTH;
    let sx = |v: f64| plot_x0 + (v - lo) / (hi - lo) * plot_w;
    let axis_y = height - BOTTOM + 8.0;

    // Zero reference line when zero is in range.
    if lo < 0.0 && hi > 0.0 {
        out.push_str(&format!(
            "<line x1=\"{x}\" y1=\"{}\" x2=\"{x}\" y2=\"{}\" stroke=\"#bbb\" \
             stroke-dasharray=\"4,3\"/>\n",
            c(TOP - 8.0),
            c(axis_y - 10.0),
            x = c(sx(0.0))
        ));
    }
    // Axis with five evenly spaced ticks.
    out.push_str(&format!(
        "<line x1=\"{}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"black\"/>\n",
        c(plot_x0),
        c(plot_x0 + plot_w),
        y = c(axis_y - 10.0)
    ));
    for i in 0..5 {
        let v = lo + (hi - lo) * i as f64 / 4.0;
        let x = sx(v);
        out.push_str(&format!(
            "<line x1=\"{x}\" y1=\"{}\" x2=\"{x}\" y2=\"{}\" stroke=\"black\"/>\n",
            c(axis_y - 10.0),
            c(axis_y - 5.0),
            x = c(x)
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            c(x),
            c(axis_y + 8.0),
            format_tick(v)
        ));
    }
    for (i, r) in panel.rows.iter().enumerate() {
        let y = TOP + (i as f64 + 0.5) * ROW_HEIGHT;
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" dominant-baseline=\"middle\">{}</text>\n",
            c(x0),
            c(y),
            esc(&r.label)
        ));
        out.push_str(&format!(
            "<line x1=\"{}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"black\" \
             stroke-width=\"1.5\"/>\n",
            c(sx(r.lower)),
            c(sx(r.upper)),
            y = c(y)
        ));
        for v in [r.lower, r.upper] {
            out.push_str(&format!(
                "<line x1=\"{x}\" y1=\"{}\" x2=\"{x}\" y2=\"{}\" stroke=\"black\" \
                 stroke-width=\"1.5\"/>\n",
                c(y - 5.0),
                c(y + 5.0),
                x = c(sx(v))
            ));
        }
        out.push_str(&format!(
            "<circle cx=\"{}\" cy=\"{}\" r=\"3.2\" fill=\"black\"/>\n",
            c(sx(r.estimate)),
            c(y)
        ));
    }
    out
}

fn format_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if a >= 1000.0 || a < 0.01 {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}
