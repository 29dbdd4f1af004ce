//! Minimal stacked line-plot renderer.

use std::fmt::Write as _;

pub struct Series {
    pub label: String,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub dashed: bool,
}

pub struct Panel {
    pub title: String,
    pub log_y: bool,
    pub series: Vec<Series>,
}

const WIDTH: f64 = 800.0;
const PANEL_HEIGHT: f64 = 300.0;
const MARGIN_L: f64 = 80.0;
const MARGIN_R: f64 = 160.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 40.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
/// Values are clamped to this floor before taking logarithms.
const LOG_FLOOR: f64 = 1e-300;

fn transform(y: f64, log: bool) -> f64 {
    if log {
        y.abs().max(LOG_FLOOR).log10()
    } else {
        y
    }
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-300 {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn render_panel(out: &mut String, panel: &Panel, top: f64) {
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = PANEL_HEIGHT - MARGIN_T - MARGIN_B;
    let (x0, x1) = bounds(panel.series.iter().flat_map(|s| s.xs.iter().copied()));
    let (y0, y1) = bounds(panel.series.iter().flat_map(|s| s.ys.iter().map(|&y| transform(y, panel.log_y))));
    let px = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * plot_w;
    let py = |y: f64| top + MARGIN_T + (1.0 - (y - y0) / (y1 - y0)) * plot_h;

    let _ = writeln!(
        out,
        r#"<rect x="{MARGIN_L}" y="{}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#,
        top + MARGIN_T
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="14" text-anchor="middle">{}</text>"#,
        MARGIN_L + plot_w / 2.0,
        top + MARGIN_T - 10.0,
        escape(&panel.title)
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        let ylabel = if panel.log_y { format!("1e{yv:.0}") } else { format!("{yv:.3e}") };
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">{xv:.3e}</text>"#,
            px(xv),
            top + PANEL_HEIGHT - MARGIN_B + 15.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end">{ylabel}</text>"#,
            MARGIN_L - 5.0,
            py(yv) + 4.0
        );
    }
    for (i, s) in panel.series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut pts = String::new();
        for (&x, &y) in s.xs.iter().zip(&s.ys) {
            let ty = transform(y, panel.log_y);
            if x.is_finite() && ty.is_finite() {
                let _ = write!(pts, "{:.2},{:.2} ", px(x), py(ty));
            }
        }
        let dash = if s.dashed { r#" stroke-dasharray="6,4""# } else { "" };
        let _ = writeln!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#, pts.trim_end());
        let ly = top + MARGIN_T + 15.0 + 18.0 * i as f64;
        let lx = WIDTH - MARGIN_R + 10.0;
        let _ = writeln!(out, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"{dash}/>"#, lx + 20.0);
        let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="12">{}</text>"#, lx + 25.0, ly + 4.0, escape(&s.label));
    }
}

pub fn render(panels: &[Panel]) -> String {
    let height = PANEL_HEIGHT * panels.len() as f64;
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{height}\" viewBox=\"0 0 {WIDTH} {height}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    for (i, p) in panels.iter().enumerate() {
        render_panel(&mut out, p, i as f64 * PANEL_HEIGHT);
    }
    out.push_str("</svg>\n");
    out
}
