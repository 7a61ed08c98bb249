//! Static SVG line charts.

use std::fmt::Write;

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 360.0;
const MARGIN_L: f64 = 78.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 34.0;
const MARGIN_B: f64 = 52.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Default)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Logarithmic y axis; non-positive values are dropped.
    pub log_y: bool,
    /// y grows downwards, for depth axes.
    pub invert_y: bool,
    pub series: Vec<Series>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Roughly five round tick values covering `[lo, hi]`.
fn linear_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= 6.0)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

/// Tick label with just enough digits to tell neighbours `step` apart.
fn fmt_tick(v: f64, step: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let step_exp = step.abs().log10().floor() as i32;
    let exp = v.abs().log10().floor() as i32;
    if (-3..5).contains(&exp) && step_exp >= -6 {
        format!("{v:.*}", (-step_exp).max(0) as usize)
    } else {
        format!("{v:.*e}", (exp - step_exp).max(0) as usize)
    }
}

fn tick_step(ticks: &[f64], span: f64) -> f64 {
    if ticks.len() > 1 {
        ticks[1] - ticks[0]
    } else {
        span
    }
}

fn range(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if lo > hi {
        return None;
    }
    if hi - lo <= 1e-12 * hi.abs().max(lo.abs()).max(1e-300) {
        let pad = if lo == 0.0 { 1.0 } else { 0.1 * lo.abs() };
        return Some((lo - pad, hi + pad));
    }
    Some((lo, hi))
}

fn panel(out: &mut String, chart: &Chart, x0: f64) {
    let tf = |v: f64| if chart.log_y { v.log10() } else { v };
    let series: Vec<Vec<(f64, f64)>> = chart
        .series
        .iter()
        .map(|s| {
            s.points
                .iter()
                .filter(|p| p.0.is_finite() && p.1.is_finite() && (!chart.log_y || p.1 > 0.0))
                .map(|&(x, y)| (x, tf(y)))
                .collect()
        })
        .collect();
    let (plot_w, plot_h) = (WIDTH - MARGIN_L - MARGIN_R, HEIGHT - MARGIN_T - MARGIN_B);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        x0 + MARGIN_L + plot_w / 2.0,
        escape(&chart.title)
    );
    let _ = writeln!(
        out,
        r##"<rect x="{:.1}" y="{MARGIN_T}" width="{plot_w:.1}" height="{plot_h:.1}" fill="none" stroke="#444"/>"##,
        x0 + MARGIN_L
    );
    let xr = range(series.iter().flatten().map(|p| p.0));
    let yr = range(series.iter().flatten().map(|p| p.1));
    let (Some((xlo, xhi)), Some((ylo, yhi))) = (xr, yr) else {
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="12">no data</text>"#,
            x0 + MARGIN_L + plot_w / 2.0,
            MARGIN_T + plot_h / 2.0
        );
        return;
    };
    let (ylo, yhi) = if chart.log_y {
        (ylo.floor(), yhi.ceil().max(ylo.floor() + 1.0))
    } else {
        (ylo, yhi)
    };
    let px = |x: f64| x0 + MARGIN_L + (x - xlo) / (xhi - xlo) * plot_w;
    let py = |y: f64| {
        let f = (y - ylo) / (yhi - ylo);
        if chart.invert_y {
            MARGIN_T + f * plot_h
        } else {
            MARGIN_T + (1.0 - f) * plot_h
        }
    };
    let xt = linear_ticks(xlo, xhi);
    let xstep = tick_step(&xt, xhi - xlo);
    for t in xt {
        let _ = writeln!(
            out,
            r##"<line x1="{x:.1}" y1="{y:.1}" x2="{x:.1}" y2="{y2:.1}" stroke="#444"/><text x="{x:.1}" y="{ty:.1}" text-anchor="middle" font-size="11">{}</text>"##,
            fmt_tick(t, xstep),
            x = px(t),
            y = MARGIN_T + plot_h,
            y2 = MARGIN_T + plot_h + 4.0,
            ty = MARGIN_T + plot_h + 17.0
        );
    }
    let y_ticks: Vec<(f64, String)> = if chart.log_y {
        let step = ((yhi - ylo) / 6.0).ceil().max(1.0);
        let mut v = Vec::new();
        let mut e = ylo;
        while e <= yhi + 1e-9 {
            v.push((e, format!("1e{}", e as i64)));
            e += step;
        }
        v
    } else {
        let yt = linear_ticks(ylo, yhi);
        let ystep = tick_step(&yt, yhi - ylo);
        yt.into_iter().map(|t| (t, fmt_tick(t, ystep))).collect()
    };
    for (t, label) in y_ticks {
        let _ = writeln!(
            out,
            r##"<line x1="{x1:.1}" y1="{y:.1}" x2="{x2:.1}" y2="{y:.1}" stroke="#444"/><text x="{tx:.1}" y="{ty:.1}" text-anchor="end" font-size="11">{label}</text>"##,
            x1 = x0 + MARGIN_L - 4.0,
            x2 = x0 + MARGIN_L,
            y = py(t),
            tx = x0 + MARGIN_L - 6.0,
            ty = py(t) + 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="12">{}</text>"#,
        x0 + MARGIN_L + plot_w / 2.0,
        HEIGHT - 10.0,
        escape(&chart.x_label)
    );
    let (lx, ly) = (x0 + 16.0, MARGIN_T + plot_h / 2.0);
    let _ = writeln!(
        out,
        r#"<text x="{lx:.1}" y="{ly:.1}" text-anchor="middle" font-size="12" transform="rotate(-90 {lx:.1} {ly:.1})">{}</text>"#,
        escape(&chart.y_label)
    );
    for (k, (pts, s)) in series.iter().zip(&chart.series).enumerate() {
        let color = COLORS[k % COLORS.len()];
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        if pts.len() == 1 {
            let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, px(pts[0].0), py(pts[0].1));
        } else if !pts.is_empty() {
            let _ = writeln!(
                out,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                path.join(" ")
            );
        }
        if chart.series.len() > 1 {
            let (tx, ty) = (x0 + MARGIN_L + plot_w - 8.0, MARGIN_T + 16.0 + 15.0 * k as f64);
            let _ = writeln!(
                out,
                r#"<text x="{tx:.1}" y="{ty:.1}" text-anchor="end" font-size="11" fill="{color}">{}</text>"#,
                escape(&s.label)
            );
        }
    }
}

/// Renders charts side by side into one SVG document.
pub fn render(charts: &[Chart]) -> String {
    let mut out = String::new();
    let total = WIDTH * charts.len().max(1) as f64;
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total:.0}" height="{HEIGHT:.0}" viewBox="0 0 {total:.0} {HEIGHT:.0}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (k, c) in charts.iter().enumerate() {
        panel(&mut out, c, k as f64 * WIDTH);
    }
    out.push_str("</svg>\n");
    out
}
