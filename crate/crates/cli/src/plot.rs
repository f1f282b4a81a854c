//! Minimal static SVG plotting: lines, points, vertical markers, log axes.
//!
//! Deliberately small; figures are diagnostic artifacts written next to the
//! data, not an interactive UI.

use crate::error::CliResult;
use crate::formats::atomic_write;
use std::path::Path;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 78.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 56.0;

#[derive(Debug, Clone, Copy)]
pub struct AxisScale {
    min: f64,
    max: f64,
    log: bool,
}

impl AxisScale {
    fn map(&self, v: f64, lo_px: f64, hi_px: f64) -> f64 {
        let (v, min, max) = if self.log {
            (v.max(1e-300).log10(), self.min.log10(), self.max.log10())
        } else {
            (v, self.min, self.max)
        };
        let t = if max > min { (v - min) / (max - min) } else { 0.5 };
        lo_px + t.clamp(0.0, 1.0) * (hi_px - lo_px)
    }

    fn ticks(&self) -> Vec<f64> {
        if self.log {
            let lo = self.min.max(1e-300).log10().ceil() as i32;
            let hi = self.max.max(1e-300).log10().floor() as i32;
            return (lo..=hi).map(|d| 10f64.powi(d)).collect();
        }
        let span = (self.max - self.min).abs().max(1e-300);
        let raw = span / 5.0;
        let mag = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 5.0, 10.0]
            .iter()
            .map(|m| m * mag)
            .find(|s| span / s <= 6.0)
            .unwrap_or(mag);
        let first = (self.min / step).ceil() * step;
        let mut ticks = Vec::new();
        let mut v = first;
        while v <= self.max + 0.5 * step {
            ticks.push(v);
            v += step;
        }
        ticks
    }
}

pub struct SvgPlot {
    title: String,
    x_label: String,
    y_label: String,
    x: AxisScale,
    y: AxisScale,
    body: String,
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (1e-3..1e5).contains(&a) {
        let s = format!("{v:.4}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        s.to_string()
    } else {
        format!("{v:.1e}")
    }
}

impl SvgPlot {
    pub fn new(
        title: &str,
        x_label: &str,
        x_range: (f64, f64),
        x_log: bool,
        y_label: &str,
        y_range: (f64, f64),
        y_log: bool,
    ) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            x: AxisScale {
                min: x_range.0,
                max: x_range.1,
                log: x_log,
            },
            y: AxisScale {
                min: y_range.0,
                max: y_range.1,
                log: y_log,
            },
            body: String::new(),
        }
    }

    /// Range helper padding the data extent by 5%.
    pub fn padded_range(values: impl Iterator<Item = f64>, log: bool) -> (f64, f64) {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for v in values {
            if v.is_finite() && (!log || v > 0.0) {
                min = min.min(v);
                max = max.max(v);
            }
        }
        if !min.is_finite() || !max.is_finite() {
            return (0.0, 1.0);
        }
        if log {
            (min / 1.5, max * 1.5)
        } else {
            let pad = 0.05 * (max - min).max(1e-300);
            (min - pad, max + pad)
        }
    }

    fn px(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.x.map(x, MARGIN_LEFT, WIDTH - MARGIN_RIGHT),
            self.y.map(y, HEIGHT - MARGIN_BOTTOM, MARGIN_TOP),
        )
    }

    pub fn polyline(&mut self, points: &[(f64, f64)], color: &str, width: f64) {
        if points.is_empty() {
            return;
        }
        let coords: Vec<String> = points
            .iter()
            .map(|&(x, y)| {
                let (px, py) = self.px(x, y);
                format!("{px:.2},{py:.2}")
            })
            .collect();
        self.body.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"{width}\" points=\"{}\"/>\n",
            coords.join(" ")
        ));
    }

    pub fn scatter(&mut self, points: &[(f64, f64)], color: &str, radius: f64) {
        for &(x, y) in points {
            let (px, py) = self.px(x, y);
            self.body.push_str(&format!(
                "<circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"{radius}\" fill=\"{color}\"/>\n"
            ));
        }
    }

    pub fn vline(&mut self, x: f64, color: &str) {
        let (px, _) = self.px(x, self.y.min);
        self.body.push_str(&format!(
            "<line x1=\"{px:.2}\" y1=\"{MARGIN_TOP}\" x2=\"{px:.2}\" y2=\"{}\" \
             stroke=\"{color}\" stroke-dasharray=\"5,4\" stroke-width=\"1\"/>\n",
            HEIGHT - MARGIN_BOTTOM
        ));
    }

    pub fn annotate(&mut self, x: f64, y: f64, text: &str) {
        let (px, py) = self.px(x, y);
        self.body.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" fill=\"#333\">{}</text>\n",
            px + 4.0,
            py - 4.0,
            xml_escape(text)
        ));
    }

    pub fn render(&self) -> String {
        let mut svg = String::new();
        svg.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
             viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
        ));
        svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
        // Frame.
        svg.push_str(&format!(
            "<rect x=\"{MARGIN_LEFT}\" y=\"{MARGIN_TOP}\" width=\"{}\" height=\"{}\" \
             fill=\"none\" stroke=\"#444\"/>\n",
            WIDTH - MARGIN_LEFT - MARGIN_RIGHT,
            HEIGHT - MARGIN_TOP - MARGIN_BOTTOM
        ));
        // Ticks and grid.
        for t in self.x.ticks() {
            let (px, _) = self.px(t, self.y.min);
            svg.push_str(&format!(
                "<line x1=\"{px:.2}\" y1=\"{MARGIN_TOP}\" x2=\"{px:.2}\" y2=\"{}\" \
                 stroke=\"#ddd\" stroke-width=\"0.7\"/>\n",
                HEIGHT - MARGIN_BOTTOM
            ));
            svg.push_str(&format!(
                "<text x=\"{px:.2}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\" \
                 fill=\"#222\">{}</text>\n",
                HEIGHT - MARGIN_BOTTOM + 16.0,
                fmt_tick(t)
            ));
        }
        for t in self.y.ticks() {
            let (_, py) = self.px(self.x.min, t);
            svg.push_str(&format!(
                "<line x1=\"{MARGIN_LEFT}\" y1=\"{py:.2}\" x2=\"{}\" y2=\"{py:.2}\" \
                 stroke=\"#ddd\" stroke-width=\"0.7\"/>\n",
                WIDTH - MARGIN_RIGHT
            ));
            svg.push_str(&format!(
                "<text x=\"{}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"end\" \
                 fill=\"#222\">{}</text>\n",
                MARGIN_LEFT - 6.0,
                py + 4.0,
                fmt_tick(t)
            ));
        }
        // Labels and title.
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\" fill=\"#000\">{}</text>\n",
            0.5 * WIDTH,
            HEIGHT - 12.0,
            xml_escape(&self.x_label)
        ));
        svg.push_str(&format!(
            "<text x=\"16\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\" fill=\"#000\" \
             transform=\"rotate(-90 16 {})\">{}</text>\n",
            0.5 * HEIGHT,
            0.5 * HEIGHT,
            xml_escape(&self.y_label)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"24\" font-size=\"15\" text-anchor=\"middle\" fill=\"#000\">{}</text>\n",
            0.5 * WIDTH,
            xml_escape(&self.title)
        ));
        svg.push_str(&self.body);
        svg.push_str("</svg>\n");
        svg
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        atomic_write(path, self.render().as_bytes())
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
