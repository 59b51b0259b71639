//! Minimal SVG line and scatter plots.

use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SvgError {
    #[error("nothing to plot")]
    Empty,
    #[error("non-finite coordinate in layer {0:?}")]
    NonFinite(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Glyph {
    Positive,
    Negative,
    Dot,
}

impl Glyph {
    fn class(self) -> &'static str {
        match self {
            Glyph::Positive => "pos",
            Glyph::Negative => "neg",
            Glyph::Dot => "dot",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Line { label: String, points: Vec<(f64, f64)> },
    Points { label: String, glyph: Glyph, points: Vec<(f64, f64)> },
}

impl Layer {
    fn points(&self) -> &[(f64, f64)] {
        match self {
            Layer::Line { points, .. } | Layer::Points { points, .. } => points,
        }
    }

    fn label(&self) -> &str {
        match self {
            Layer::Line { label, .. } | Layer::Points { label, .. } => label,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub layers: Vec<Layer>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Style {
    pub width: f64,
    pub height: f64,
    pub margin: f64,
    /// Embedded as a comment when set; off by default so output is reproducible.
    pub timestamp: Option<String>,
}

impl Default for Style {
    fn default() -> Self {
        Self { width: 800.0, height: 500.0, margin: 60.0, timestamp: None }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        "0".into()
    } else if x.abs() >= 1e4 || x.abs() < 1e-3 {
        format!("{x:.3e}")
    } else {
        format!("{x:.4}").trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

pub fn render_svg(plot: &Plot, style: &Style) -> Result<String, SvgError> {
    let all: Vec<(f64, f64)> = plot.layers.iter().flat_map(|l| l.points().iter().copied()).collect();
    if all.is_empty() {
        return Err(SvgError::Empty);
    }
    for l in &plot.layers {
        if l.points().iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(SvgError::NonFinite(l.label().to_string()));
        }
    }
    let (mut x0, mut x1, mut y0, mut y1) = all.iter().fold(
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
        |(a, b, c, d), &(x, y)| (a.min(x), b.max(x), c.min(y), d.max(y)),
    );
    if x1 - x0 <= 0.0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 - y0 <= 0.0 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let (w, h, m) = (style.width, style.height, style.margin);
    let sx = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let sy = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    if let Some(ts) = &style.timestamp {
        let _ = writeln!(s, "<!-- generated {} -->", escape(ts).replace("--", "- -"));
    }
    let _ = writeln!(
        s,
        "<style>.line{{fill:none;stroke-width:1.5}}.pos{{fill:#c0392b}}.neg{{fill:#2471a3}}.dot{{fill:#444}}.axis{{stroke:#000}}text{{font:12px sans-serif}}</style>"
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle">{}</text>"#, w / 2.0, escape(&plot.title));
    let _ = writeln!(s, r#"<line class="axis" x1="{m}" y1="{}" x2="{}" y2="{}"/>"#, h - m, w - m, h - m);
    let _ = writeln!(s, r#"<line class="axis" x1="{m}" y1="{m}" x2="{m}" y2="{}"/>"#, h - m);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, w / 2.0, h - 15.0, escape(&plot.x_label));
    let _ = writeln!(
        s,
        r#"<text x="15" y="{}" transform="rotate(-90 15 {})" text-anchor="middle">{}</text>"#,
        h / 2.0,
        h / 2.0,
        escape(&plot.y_label)
    );
    for (v, anchor, x, y) in [
        (x0, "start", m, h - m + 15.0),
        (x1, "end", w - m, h - m + 15.0),
        (y0, "end", m - 5.0, h - m),
        (y1, "end", m - 5.0, m + 4.0),
    ] {
        let _ = writeln!(s, r#"<text x="{x}" y="{y}" text-anchor="{anchor}">{}</text>"#, fmt_num(v));
    }
    let palette = ["#000000", "#c0392b", "#2471a3", "#1e8449", "#7d3c98"];
    let mut lines = 0;
    for layer in &plot.layers {
        match layer {
            Layer::Line { label, points } => {
                let colour = palette[lines % palette.len()];
                lines += 1;
                let d: Vec<String> = points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
                let _ = writeln!(
                    s,
                    r#"<polyline class="line" stroke="{colour}" points="{}"><title>{}</title></polyline>"#,
                    d.join(" "),
                    escape(label)
                );
            }
            Layer::Points { label, glyph, points } => {
                let _ = writeln!(s, r#"<g class="{}"><title>{}</title>"#, glyph.class(), escape(label));
                for &(x, y) in points {
                    let _ = writeln!(s, r#"<circle class="{}" cx="{:.2}" cy="{:.2}" r="2.5"/>"#, glyph.class(), sx(x), sy(y));
                }
                s.push_str("</g>\n");
            }
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}
