//! Deterministic JSON and simple SVG plots.
//!
//! JSON objects are emitted with sorted keys and every float in `{:.16e}`
//! form (17 significant digits), so identical inputs give byte-identical
//! files.

use std::fmt::Write as _;
use std::io;

use serde::Serialize;
use serde_json::ser::{CompactFormatter, Formatter};
use serde_json::Value;

struct Canonical;

impl Formatter for Canonical {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }

    fn begin_string<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        CompactFormatter.begin_string(writer)
    }
}

/// Serializes through a [`Value`] (which sorts object keys) with canonical
/// float formatting. Non-finite floats become `null`.
pub fn to_json<S: Serialize>(value: &S) -> String {
    let v = serde_json::to_value(value).expect("report types serialize");
    value_to_string(&v)
}

pub fn value_to_string(v: &Value) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Canonical);
    v.serialize(&mut ser).expect("writing to memory");
    let mut s = String::from_utf8(buf).expect("serde_json writes UTF-8");
    s.push('\n');
    s
}

#[derive(Debug, Clone)]
pub struct Polyline {
    pub points: Vec<[f64; 2]>,
    pub closed: bool,
    pub class: String,
}

/// Line segments, points and polylines on a fixed-style canvas. Bounds are
/// fitted to the content.
#[derive(Debug, Clone, Default)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub lines: Vec<Polyline>,
    pub segments: Vec<([f64; 2], [f64; 2])>,
    pub markers: Vec<([f64; 2], String)>,
}

const SIZE: f64 = 600.0;
const MARGIN: f64 = 40.0;

impl Plot {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            ..Self::default()
        }
    }

    fn bounds(&self) -> [f64; 4] {
        let pts = self
            .lines
            .iter()
            .flat_map(|l| l.points.iter().copied())
            .chain(self.segments.iter().flat_map(|(a, b)| [*a, *b]))
            .chain(self.markers.iter().map(|m| m.0))
            .filter(|p| p[0].is_finite() && p[1].is_finite());
        let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
        for p in pts {
            b = [b[0].min(p[0]), b[1].min(p[1]), b[2].max(p[0]), b[3].max(p[1])];
        }
        if !b[0].is_finite() {
            return [-1.0, -1.0, 1.0, 1.0];
        }
        let span = (b[2] - b[0]).max(b[3] - b[1]).max(1e-9);
        let (cx, cy) = (0.5 * (b[0] + b[2]), 0.5 * (b[1] + b[3]));
        let h = 0.55 * span;
        [cx - h, cy - h, cx + h, cy + h]
    }

    pub fn to_svg(&self) -> String {
        let [x0, y0, x1, y1] = self.bounds();
        let inner = SIZE - 2.0 * MARGIN;
        let map = |p: [f64; 2]| -> (f64, f64) {
            (
                MARGIN + (p[0] - x0) / (x1 - x0) * inner,
                SIZE - MARGIN - (p[1] - y0) / (y1 - y0) * inner,
            )
        };
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
        );
        s.push_str(concat!(
            "<style>",
            "text{font:12px sans-serif}",
            ".frame{fill:none;stroke:#999}",
            ".curve{fill:none;stroke:#1f4e9c;stroke-width:1.5}",
            ".curve1{fill:none;stroke:#b2361f;stroke-width:1.5}",
            ".curve2{fill:none;stroke:#2b8a3e;stroke-width:1.5}",
            ".seg{stroke:#444;stroke-width:1}",
            ".event{fill:#e8a400;stroke:#000}",
            ".singular{fill:#b2361f}",
            "</style>\n"
        ));
        let _ = writeln!(
            s,
            r#"<rect class="frame" x="{MARGIN}" y="{MARGIN}" width="{inner}" height="{inner}"/>"#
        );
        let _ = writeln!(s, r#"<text x="{MARGIN}" y="24">{}</text>"#, escape(&self.title));
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}">{}</text>"#,
            SIZE / 2.0,
            SIZE - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="8" y="{}">{}</text>"#,
            SIZE / 2.0,
            escape(&self.y_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="{MARGIN}" y="{}">[{x0:.3}, {x1:.3}] x [{y0:.3}, {y1:.3}]</text>"#,
            SIZE - 24.0
        );
        for l in &self.lines {
            let pts: Vec<String> = l
                .points
                .iter()
                .map(|&p| {
                    let (x, y) = map(p);
                    format!("{x:.2},{y:.2}")
                })
                .collect();
            let tag = if l.closed { "polygon" } else { "polyline" };
            let _ = writeln!(s, r#"<{tag} class="{}" points="{}"/>"#, l.class, pts.join(" "));
        }
        for (a, b) in &self.segments {
            let ((ax, ay), (bx, by)) = (map(*a), map(*b));
            let _ = writeln!(
                s,
                r#"<line class="seg" x1="{ax:.2}" y1="{ay:.2}" x2="{bx:.2}" y2="{by:.2}"/>"#
            );
        }
        for (p, class) in &self.markers {
            let (x, y) = map(*p);
            let _ = writeln!(s, r#"<circle class="{class}" cx="{x:.2}" cy="{y:.2}" r="4"/>"#);
        }
        s.push_str("</svg>\n");
        s
    }
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn keys_sorted_and_floats_fixed() {
        let v = json!({"b": 1.0, "a": [0.1, -0.25], "c": 3});
        assert_eq!(
            value_to_string(&v),
            "{\"a\":[1.0000000000000001e-1,-2.5000000000000000e-1],\"b\":1.0000000000000000e0,\"c\":3}\n"
        );
    }

    #[test]
    fn floats_round_trip() {
        let x = std::f64::consts::PI / 7.0;
        let s = value_to_string(&json!(x));
        let back: f64 = s.trim().parse().unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn svg_contains_shapes() {
        let mut p = Plot::new("t", "x", "y");
        p.lines.push(Polyline {
            points: vec![[0.0, 0.0], [1.0, 1.0]],
            closed: false,
            class: "curve".into(),
        });
        p.markers.push(([0.5, 0.5], "event".into()));
        let svg = p.to_svg();
        assert!(svg.contains("<polyline") && svg.contains("<circle"));
    }
}
