//! Minimal standalone SVG plots: stacked line panels and a heat map.

use std::fmt::Write;

const WIDTH: f64 = 860.0;
const PANEL_HEIGHT: f64 = 250.0;
const TITLE_HEIGHT: f64 = 40.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 180.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 50.0;

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub color: &'static str,
    pub dashed: bool,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>, color: &'static str) -> Self {
        Self {
            label: label.into(),
            points,
            color,
            dashed: false,
        }
    }

    pub fn dashed(mut self) -> Self {
        self.dashed = true;
        self
    }
}

pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

struct Frame {
    left: f64,
    top: f64,
    width: f64,
    height: f64,
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        self.left + (x - self.x.0) / (self.x.1 - self.x.0) * self.width
    }

    fn py(&self, y: f64) -> f64 {
        self.top + self.height - (y - self.y.0) / (self.y.1 - self.y.0) * self.height
    }
}

/// Panels stacked vertically under a common title.
pub fn line_figure(title: &str, panels: &[Panel]) -> String {
    let height = TITLE_HEIGHT + PANEL_HEIGHT * panels.len().max(1) as f64;
    let mut out = header(WIDTH, height);
    text(&mut out, WIDTH / 2.0, 26.0, "middle", 18.0, title);
    for (i, panel) in panels.iter().enumerate() {
        let top = TITLE_HEIGHT + PANEL_HEIGHT * i as f64;
        draw_panel(&mut out, panel, top);
    }
    out.push_str("</svg>\n");
    out
}

fn draw_panel(out: &mut String, panel: &Panel, top: f64) {
    let finite = |&(x, y): &(f64, f64)| x.is_finite() && y.is_finite();
    let points: Vec<(f64, f64)> = panel
        .series
        .iter()
        .flat_map(|s| s.points.iter().copied().filter(finite))
        .collect();
    let x = padded_range(points.iter().map(|p| p.0), false);
    let y = padded_range(points.iter().map(|p| p.1), true);
    let frame = Frame {
        left: MARGIN_LEFT,
        top: top + MARGIN_TOP,
        width: WIDTH - MARGIN_LEFT - MARGIN_RIGHT,
        height: PANEL_HEIGHT - MARGIN_TOP - MARGIN_BOTTOM,
        x,
        y,
    };
    text(out, frame.left, top + 20.0, "start", 14.0, &panel.title);
    axes(out, &frame, &panel.x_label, &panel.y_label);
    if points.is_empty() {
        text(
            out,
            frame.left + frame.width / 2.0,
            frame.top + frame.height / 2.0,
            "middle",
            13.0,
            "no data",
        );
    }
    for s in &panel.series {
        let mut path = String::new();
        for &(px, py) in s.points.iter().filter(|p| finite(p)) {
            let _ = write!(path, "{:.2},{:.2} ", frame.px(px), frame.py(py));
        }
        if !path.is_empty() {
            let dash = if s.dashed {
                r#" stroke-dasharray="6,4""#
            } else {
                ""
            };
            let _ = writeln!(
                out,
                r#"<polyline fill="none" stroke="{}" stroke-width="1.5"{dash} points="{}"/>"#,
                s.color,
                path.trim_end()
            );
        }
    }
    // legend
    let lx = frame.left + frame.width + 15.0;
    for (k, s) in panel.series.iter().enumerate() {
        let ly = frame.top + 12.0 + 20.0 * k as f64;
        let dash = if s.dashed {
            r#" stroke-dasharray="6,4""#
        } else {
            ""
        };
        let _ = writeln!(
            out,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{}" stroke-width="2"{dash}/>"#,
            lx + 28.0,
            s.color
        );
        text(out, lx + 34.0, ly + 4.0, "start", 12.0, &s.label);
    }
}

fn axes(out: &mut String, frame: &Frame, x_label: &str, y_label: &str) {
    let _ = writeln!(
        out,
        r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        frame.left, frame.top, frame.width, frame.height
    );
    for t in ticks(frame.x.0, frame.x.1) {
        let px = frame.px(t.0);
        let bottom = frame.top + frame.height;
        let _ = writeln!(
            out,
            r#"<line x1="{px:.2}" y1="{bottom:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/>"#,
            bottom + 5.0
        );
        text(out, px, bottom + 18.0, "middle", 11.0, &t.1);
    }
    for t in ticks(frame.y.0, frame.y.1) {
        let py = frame.py(t.0);
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="black"/>"#,
            frame.left - 5.0,
            frame.left
        );
        text(out, frame.left - 8.0, py + 4.0, "end", 11.0, &t.1);
    }
    text(
        out,
        frame.left + frame.width / 2.0,
        frame.top + frame.height + 38.0,
        "middle",
        12.0,
        x_label,
    );
    let cx = frame.left - 58.0;
    let cy = frame.top + frame.height / 2.0;
    let _ = writeln!(
        out,
        r#"<text x="{cx:.2}" y="{cy:.2}" text-anchor="middle" font-size="12" transform="rotate(-90 {cx:.2} {cy:.2})">{}</text>"#,
        escape(y_label)
    );
}

/// A `rows x cols` grid of values in `[0, 1]`; `None` cells are left blank.
pub fn heat_map(
    title: &str,
    x_label: &str,
    x_values: &[String],
    y_label: &str,
    y_values: &[String],
    value: impl Fn(usize, usize) -> Option<f64>,
) -> String {
    let cell_w = if x_values.is_empty() {
        0.0
    } else {
        480.0 / x_values.len() as f64
    };
    let cell_h = if y_values.is_empty() {
        0.0
    } else {
        320.0 / y_values.len() as f64
    };
    let (left, top) = (MARGIN_LEFT, TITLE_HEIGHT + MARGIN_TOP);
    let (plot_w, plot_h) = (480.0, 320.0);
    let mut out = header(WIDTH, top + plot_h + MARGIN_BOTTOM + 20.0);
    text(&mut out, WIDTH / 2.0, 26.0, "middle", 18.0, title);
    if x_values.is_empty() || y_values.is_empty() {
        text(
            &mut out,
            left + plot_w / 2.0,
            top + plot_h / 2.0,
            "middle",
            13.0,
            "no data",
        );
    }
    for (j, ylab) in y_values.iter().enumerate() {
        // first y value at the bottom
        let y = top + plot_h - cell_h * (j + 1) as f64;
        for (i, _) in x_values.iter().enumerate() {
            let x = left + cell_w * i as f64;
            let Some(v) = value(i, j) else { continue };
            let _ = writeln!(
                out,
                r#"<rect x="{x:.2}" y="{y:.2}" width="{cell_w:.2}" height="{cell_h:.2}" fill="{}" stroke="white"/>"#,
                color_scale(v)
            );
            let ink = if v > 0.6 { "black" } else { "white" };
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="11" fill="{ink}">{v:.3}</text>"#,
                x + cell_w / 2.0,
                y + cell_h / 2.0 + 4.0
            );
        }
        text(
            &mut out,
            left - 8.0,
            y + cell_h / 2.0 + 4.0,
            "end",
            11.0,
            ylab,
        );
    }
    for (i, xlab) in x_values.iter().enumerate() {
        let x = left + cell_w * (i as f64 + 0.5);
        text(&mut out, x, top + plot_h + 18.0, "middle", 11.0, xlab);
    }
    let _ = writeln!(
        out,
        r#"<rect x="{left:.2}" y="{top:.2}" width="{plot_w:.2}" height="{plot_h:.2}" fill="none" stroke="black"/>"#
    );
    text(
        &mut out,
        left + plot_w / 2.0,
        top + plot_h + 40.0,
        "middle",
        12.0,
        x_label,
    );
    let (cx, cy) = (left - 50.0, top + plot_h / 2.0);
    let _ = writeln!(
        out,
        r#"<text x="{cx:.2}" y="{cy:.2}" text-anchor="middle" font-size="12" transform="rotate(-90 {cx:.2} {cy:.2})">{}</text>"#,
        escape(y_label)
    );
    // color bar
    let bx = left + plot_w + 40.0;
    let steps = 20;
    for k in 0..steps {
        let v = k as f64 / (steps - 1) as f64;
        let y = top + plot_h - plot_h / steps as f64 * (k + 1) as f64;
        let _ = writeln!(
            out,
            r#"<rect x="{bx:.2}" y="{y:.2}" width="20.00" height="{:.2}" fill="{}"/>"#,
            plot_h / steps as f64,
            color_scale(v)
        );
    }
    text(&mut out, bx + 26.0, top + plot_h, "start", 11.0, "0");
    text(&mut out, bx + 26.0, top + 10.0, "start", 11.0, "1");
    text(
        &mut out,
        bx + 10.0,
        top - 8.0,
        "middle",
        11.0,
        "probability",
    );
    out.push_str("</svg>\n");
    out
}

fn header(width: f64, height: f64) -> String {
    format!(
        concat!(
            r#"<?xml version="1.0" encoding="UTF-8"?>"#,
            "\n",
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}" font-family="sans-serif">"#,
            "\n",
            r#"<rect width="100%" height="100%" fill="white"/>"#,
            "\n"
        ),
        w = width,
        h = height
    )
}

fn text(out: &mut String, x: f64, y: f64, anchor: &str, size: f64, body: &str) {
    let _ = writeln!(
        out,
        r#"<text x="{x:.2}" y="{y:.2}" text-anchor="{anchor}" font-size="{size:.0}">{}</text>"#,
        escape(body)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Data range with a little headroom; degenerate or empty ranges widen to a unit span.
fn padded_range(values: impl Iterator<Item = f64>, pad: bool) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo <= f64::EPSILON * lo.abs().max(1.0) {
        let half = if lo == 0.0 { 1.0 } else { 0.5 * lo.abs() };
        return (lo - half, hi + half);
    }
    if pad {
        let m = 0.05 * (hi - lo);
        (lo - m, hi + m)
    } else {
        (lo, hi)
    }
}

/// Round-number ticks inside `[lo, hi]` with their labels.
fn ticks(lo: f64, hi: f64) -> Vec<(f64, String)> {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .into_iter()
        .map(|m| m * mag)
        .find(|&s| s >= raw)
        .unwrap_or(10.0 * mag);
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last)
        .map(|k| {
            let v = k as f64 * step;
            let v = if v == 0.0 { 0.0 } else { v };
            (v, format!("{v:.decimals$}"))
        })
        .collect()
}

/// Dark blue at 0 through teal to yellow at 1.
fn color_scale(v: f64) -> String {
    let stops = [
        (0.0, [68.0, 1.0, 84.0]),
        (0.5, [33.0, 145.0, 140.0]),
        (1.0, [253.0, 231.0, 37.0]),
    ];
    let v = if v.is_finite() {
        v.clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (a, b) = if v <= 0.5 {
        (stops[0], stops[1])
    } else {
        (stops[1], stops[2])
    };
    let f = (v - a.0) / (b.0 - a.0);
    let c: Vec<u8> = (0..3)
        .map(|i| (a.1[i] + f * (b.1[i] - a.1[i])).round() as u8)
        .collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}
