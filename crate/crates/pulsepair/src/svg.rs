//! Minimal deterministic SVG scatter/line plots for the report figures.
//!
//! Everything is rendered with fixed-precision coordinates so a given
//! dataset always produces byte-identical output.

use std::fmt::Write as _;

const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 16.0;
const MARGIN_TOP: f64 = 34.0;
const MARGIN_BOTTOM: f64 = 46.0;

/// One drawable layer.
#[derive(Debug, Clone)]
pub enum Layer {
    /// Points in data coordinates with a radius in pixels and a CSS color.
    Scatter {
        points: Vec<(f64, f64)>,
        radius: f64,
        color: String,
    },
    /// Connected line in data coordinates.
    Line { points: Vec<(f64, f64)>, color: String },
    /// Horizontal reference line at a data y value.
    HLine { y: f64, color: String, dashed: bool },
    /// Vertical bars from y=0, bar width in data units.
    Bars {
        points: Vec<(f64, f64)>,
        width: f64,
        color: String,
    },
}

/// A single-panel plot.
#[derive(Debug, Clone)]
pub struct Plot {
    pub width: f64,
    pub height: f64,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub layers: Vec<Layer>,
    /// Text block rendered to the right of the title, one line each.
    pub annotations: Vec<String>,
}

impl Plot {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Plot {
            width: 900.0,
            height: 480.0,
            title: title.to_string(),
            x_label: x_label.to_string(),
            y_label: y_label.to_string(),
            x_range: (0.0, 1.0),
            y_range: (0.0, 1.0),
            layers: Vec::new(),
            annotations: Vec::new(),
        }
    }

    /// Set ranges from the data in all layers, with small padding. Falls
    /// back to unit ranges when there are no finite points.
    pub fn autoscale(&mut self) {
        let mut x = (f64::INFINITY, f64::NEG_INFINITY);
        let mut y = (f64::INFINITY, f64::NEG_INFINITY);
        let mut any = false;
        let mut pending_hlines = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Scatter { points, .. } | Layer::Line { points, .. } => {
                    for &(px, py) in points {
                        if px.is_finite() && py.is_finite() {
                            any = true;
                            x.0 = x.0.min(px);
                            x.1 = x.1.max(px);
                            y.0 = y.0.min(py);
                            y.1 = y.1.max(py);
                        }
                    }
                }
                Layer::Bars { points, .. } => {
                    for &(px, py) in points {
                        if px.is_finite() && py.is_finite() {
                            any = true;
                            x.0 = x.0.min(px);
                            x.1 = x.1.max(px);
                            y.0 = y.0.min(py.min(0.0));
                            y.1 = y.1.max(py.max(0.0));
                        }
                    }
                }
                Layer::HLine { y: hy, .. } => {
                    if hy.is_finite() {
                        pending_hlines.push(*hy);
                    }
                }
            }
        }
        for hy in pending_hlines {
            y.0 = y.0.min(hy);
            y.1 = y.1.max(hy);
        }
        if !any {
            self.x_range = (0.0, 1.0);
            self.y_range = (0.0, 1.0);
            return;
        }
        let pad = |lo: f64, hi: f64| {
            let span = (hi - lo).abs();
            if span < 1e-12 {
                (lo - 0.5, hi + 0.5)
            } else {
                (lo - 0.04 * span, hi + 0.04 * span)
            }
        };
        self.x_range = pad(x.0, x.1);
        self.y_range = pad(y.0, y.1);
    }

    fn to_px(&self, x: f64, y: f64) -> (f64, f64) {
        let plot_w = self.width - MARGIN_LEFT - MARGIN_RIGHT;
        let plot_h = self.height - MARGIN_TOP - MARGIN_BOTTOM;
        let fx = (x - self.x_range.0) / (self.x_range.1 - self.x_range.0);
        let fy = (y - self.y_range.0) / (self.y_range.1 - self.y_range.0);
        (MARGIN_LEFT + fx * plot_w, MARGIN_TOP + (1.0 - fy) * plot_h)
    }

    /// Render the plot to SVG text.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let w = self.width;
        let h = self.height;
        writeln!(
            s,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\">"
        )
        .unwrap();
        writeln!(s, "<rect width=\"{w:.0}\" height=\"{h:.0}\" fill=\"white\"/>").unwrap();
        writeln!(
            s,
            "<text x=\"{MARGIN_LEFT:.0}\" y=\"20\" font-family=\"monospace\" font-size=\"14\">{}</text>",
            escape(&self.title)
        )
        .unwrap();

        // frame
        let (x0, y1) = self.to_px(self.x_range.0, self.y_range.0);
        let (x1, y0) = self.to_px(self.x_range.1, self.y_range.1);
        writeln!(
            s,
            "<rect x=\"{x0:.2}\" y=\"{y0:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"black\"/>",
            x1 - x0,
            y1 - y0
        )
        .unwrap();

        // ticks
        for i in 0..=8 {
            let xv = self.x_range.0 + (self.x_range.1 - self.x_range.0) * i as f64 / 8.0;
            let (px, _) = self.to_px(xv, self.y_range.0);
            writeln!(s, "<line x1=\"{px:.2}\" y1=\"{y1:.2}\" x2=\"{px:.2}\" y2=\"{:.2}\" stroke=\"black\"/>", y1 + 4.0).unwrap();
            writeln!(
                s,
                "<text x=\"{px:.2}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"10\" text-anchor=\"middle\">{}</text>",
                y1 + 16.0,
                tick_label(xv)
            )
            .unwrap();
        }
        for i in 0..=6 {
            let yv = self.y_range.0 + (self.y_range.1 - self.y_range.0) * i as f64 / 6.0;
            let (_, py) = self.to_px(self.x_range.0, yv);
            writeln!(s, "<line x1=\"{:.2}\" y1=\"{py:.2}\" x2=\"{x0:.2}\" y2=\"{py:.2}\" stroke=\"black\"/>", x0 - 4.0).unwrap();
            writeln!(
                s,
                "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"10\" text-anchor=\"end\">{}</text>",
                x0 - 6.0,
                py + 3.0,
                tick_label(yv)
            )
            .unwrap();
        }
        writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"12\" text-anchor=\"middle\">{}</text>",
            (x0 + x1) / 2.0,
            h - 10.0,
            escape(&self.x_label)
        )
        .unwrap();
        writeln!(
            s,
            "<text x=\"14\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 {:.2})\">{}</text>",
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0,
            escape(&self.y_label)
        )
        .unwrap();

        // layers, clipped to the frame
        writeln!(
            s,
            "<clipPath id=\"frame\"><rect x=\"{x0:.2}\" y=\"{y0:.2}\" width=\"{:.2}\" height=\"{:.2}\"/></clipPath>",
            x1 - x0,
            y1 - y0
        )
        .unwrap();
        writeln!(s, "<g clip-path=\"url(#frame)\">").unwrap();
        for layer in &self.layers {
            match layer {
                Layer::Scatter { points, radius, color } => {
                    for &(px, py) in points {
                        if !px.is_finite() || !py.is_finite() {
                            continue;
                        }
                        let (cx, cy) = self.to_px(px, py);
                        writeln!(
                            s,
                            "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"{radius:.1}\" fill=\"{color}\" fill-opacity=\"0.75\"/>"
                        )
                        .unwrap();
                    }
                }
                Layer::Line { points, color } => {
                    let coords: Vec<String> = points
                        .iter()
                        .filter(|(px, py)| px.is_finite() && py.is_finite())
                        .map(|&(px, py)| {
                            let (cx, cy) = self.to_px(px, py);
                            format!("{cx:.2},{cy:.2}")
                        })
                        .collect();
                    writeln!(
                        s,
                        "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.2\"/>",
                        coords.join(" ")
                    )
                    .unwrap();
                }
                Layer::HLine { y, color, dashed } => {
                    let (_, py) = self.to_px(self.x_range.0, *y);
                    let dash = if *dashed { " stroke-dasharray=\"6 4\"" } else { "" };
                    writeln!(
                        s,
                        "<line x1=\"{x0:.2}\" y1=\"{py:.2}\" x2=\"{x1:.2}\" y2=\"{py:.2}\" stroke=\"{color}\"{dash}/>"
                    )
                    .unwrap();
                }
                Layer::Bars { points, width, color } => {
                    for &(px, py) in points {
                        if !px.is_finite() || !py.is_finite() {
                            continue;
                        }
                        let (cx0, cy) = self.to_px(px - width / 2.0, py);
                        let (cx1, cy0) = self.to_px(px + width / 2.0, 0.0);
                        let top = cy.min(cy0);
                        let bh = (cy - cy0).abs();
                        writeln!(
                            s,
                            "<rect x=\"{cx0:.2}\" y=\"{top:.2}\" width=\"{:.2}\" height=\"{bh:.2}\" fill=\"{color}\"/>",
                            cx1 - cx0
                        )
                        .unwrap();
                    }
                }
            }
        }
        writeln!(s, "</g>").unwrap();

        // parameter block
        for (i, line) in self.annotations.iter().enumerate() {
            writeln!(
                s,
                "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"9\">{}</text>",
                x1 - 290.0,
                y0 + 12.0 + 11.0 * i as f64,
                escape(line)
            )
            .unwrap();
        }
        writeln!(s, "</svg>").unwrap();
        s
    }
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if a >= 10000.0 || a < 0.001 {
        format!("{v:.2e}")
    } else if a >= 100.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
