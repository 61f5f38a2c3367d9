//! Minimal SVG line plots: a grid of panels, each holding one or more
//! polylines over the 30 samples of an epoch.
//!
//! Output is a pure function of the figure: fixed viewBox, fixed number
//! formatting, no timestamps, so identical inputs give identical bytes.

use std::fmt::Write as _;

/// Y range used for every epoch plot: the data range [-1, 1] plus a margin.
pub const EPOCH_Y_RANGE: (f64, f64) = (-1.1, 1.1);

const PANEL_W: f64 = 160.0;
const PANEL_H: f64 = 120.0;
const GAP: f64 = 12.0;
const TITLE_H: f64 = 16.0;
const CAPTION_H: f64 = 22.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stroke {
    Solid,
    Dashed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub values: Vec<f64>,
    pub color: &'static str,
    pub stroke: Stroke,
}

impl Series {
    pub fn solid(label: impl Into<String>, values: &[f64], color: &'static str) -> Self {
        Series {
            label: label.into(),
            values: values.to_vec(),
            color,
            stroke: Stroke::Solid,
        }
    }

    pub fn dashed(label: impl Into<String>, values: &[f64], color: &'static str) -> Self {
        Series {
            stroke: Stroke::Dashed,
            ..Series::solid(label, values, color)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub title: String,
    pub series: Vec<Series>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvgFigure {
    pub caption: String,
    pub columns: usize,
    pub y_range: (f64, f64),
    pub panels: Vec<Panel>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

impl SvgFigure {
    pub fn new(caption: impl Into<String>, columns: usize) -> Self {
        SvgFigure {
            caption: caption.into(),
            columns: columns.max(1),
            y_range: EPOCH_Y_RANGE,
            panels: Vec::new(),
        }
    }

    pub fn panel(mut self, title: impl Into<String>, series: Vec<Series>) -> Self {
        self.panels.push(Panel {
            title: title.into(),
            series,
        });
        self
    }

    fn size(&self) -> (f64, f64) {
        let cols = self.columns.min(self.panels.len().max(1));
        let rows = self.panels.len().div_ceil(self.columns).max(1);
        let w = GAP + cols as f64 * (PANEL_W + GAP);
        let h = CAPTION_H + rows as f64 * (TITLE_H + PANEL_H + GAP);
        (w, h)
    }

    pub fn render(&self) -> String {
        let (w, h) = self.size();
        let (y_lo, y_hi) = self.y_range;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {w:.0} {h:.0}" width="{w:.0}" height="{h:.0}" font-family="sans-serif" font-size="10">"#
        );
        let _ = writeln!(s, r#"<rect x="0" y="0" width="{w:.0}" height="{h:.0}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{GAP:.0}" y="15" font-size="12">{}</text>"#,
            escape(&self.caption)
        );
        for (i, panel) in self.panels.iter().enumerate() {
            let x0 = GAP + (i % self.columns) as f64 * (PANEL_W + GAP);
            let top = CAPTION_H + (i / self.columns) as f64 * (TITLE_H + PANEL_H + GAP);
            let y0 = top + TITLE_H;
            let _ = writeln!(s, r#"<g>"#);
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
                x0,
                top + 11.0,
                escape(&panel.title)
            );
            let _ = writeln!(
                s,
                r##"<rect x="{x0:.2}" y="{y0:.2}" width="{PANEL_W:.0}" height="{PANEL_H:.0}" fill="none" stroke="#999"/>"##
            );
            let map_y = |v: f64| y0 + (y_hi - v.clamp(y_lo, y_hi)) / (y_hi - y_lo) * PANEL_H;
            if y_lo < 0.0 && y_hi > 0.0 {
                let zy = map_y(0.0);
                let _ = writeln!(
                    s,
                    r##"<line x1="{x0:.2}" y1="{zy:.2}" x2="{:.2}" y2="{zy:.2}" stroke="#ddd"/>"##,
                    x0 + PANEL_W
                );
            }
            for series in &panel.series {
                let n = series.values.len();
                if n == 0 {
                    continue;
                }
                let step = if n > 1 { PANEL_W / (n - 1) as f64 } else { 0.0 };
                let points: Vec<String> = series
                    .values
                    .iter()
                    .enumerate()
                    .map(|(k, &v)| format!("{:.2},{:.2}", x0 + k as f64 * step, map_y(v)))
                    .collect();
                let dash = match series.stroke {
                    Stroke::Solid => "",
                    Stroke::Dashed => r#" stroke-dasharray="4 3""#,
                };
                let _ = writeln!(
                    s,
                    r#"<polyline fill="none" stroke="{}" stroke-width="1.5"{dash} points="{}"><title>{}</title></polyline>"#,
                    series.color,
                    points.join(" "),
                    escape(&series.label)
                );
            }
            let _ = writeln!(s, "</g>");
        }
        s.push_str("</svg>\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_is_deterministic_and_well_formed() {
        let fig = SvgFigure::new("a < b", 2)
            .panel("one", vec![Series::solid("x", &[0.0, 1.0, -1.0], "black")])
            .panel("two", vec![Series::dashed("y", &[2.0, -2.0], "red")]);
        let a = fig.render();
        assert_eq!(a, fig.clone().render());
        assert!(a.starts_with("<svg"));
        assert!(a.trim_end().ends_with("</svg>"));
        assert_eq!(a.matches("<polyline").count(), 2);
        assert!(a.contains("a &lt; b"));
        assert!(a.contains("stroke-dasharray"));
    }

    #[test]
    fn values_map_into_panel_and_clamp() {
        let fig = SvgFigure::new("", 1).panel("p", vec![Series::solid("s", &[1.1, -1.1, 5.0], "black")]);
        let out = fig.render();
        let top = CAPTION_H + TITLE_H;
        let bottom = top + PANEL_H;
        let expected = format!(
            "points=\"{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}\"",
            GAP,
            top,
            GAP + PANEL_W / 2.0,
            bottom,
            GAP + PANEL_W,
            top
        );
        assert!(out.contains(&expected), "{out}");
    }

    #[test]
    fn grid_layout_size() {
        let mut fig = SvgFigure::new("", 2);
        for i in 0..4 {
            fig = fig.panel(format!("{i}"), vec![]);
        }
        let (w, h) = fig.size();
        assert_eq!(w, GAP + 2.0 * (PANEL_W + GAP));
        assert_eq!(h, CAPTION_H + 2.0 * (TITLE_H + PANEL_H + GAP));
    }
}
