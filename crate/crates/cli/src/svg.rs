//! Static SVG plots of tables, orbits and continuation steps.
//!
//! Output is plain text with fixed number formatting, so identical inputs
//! give byte-identical files.

use std::fmt::Write;

use graze::geometry::{BilliardTable, Vec2};

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

/// A drawing in table coordinates; `y` points up.
pub struct Plot {
    min: Vec2,
    max: Vec2,
    body: String,
}

impl Plot {
    /// Canvas covering every disk of `table` and the points in `extra`.
    pub fn new(table: &BilliardTable, extra: &[Vec2]) -> Self {
        let mut min = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut max = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        let pad = 1.5;
        for &c in table.centers() {
            min = Vec2::new(min.x.min(c.x - pad), min.y.min(c.y - pad));
            max = Vec2::new(max.x.max(c.x + pad), max.y.max(c.y + pad));
        }
        for &p in extra {
            min = Vec2::new(min.x.min(p.x - 0.5), min.y.min(p.y - 0.5));
            max = Vec2::new(max.x.max(p.x + 0.5), max.y.max(p.y + 0.5));
        }
        Self {
            min,
            max,
            body: String::new(),
        }
    }

    fn stroke(&self) -> f64 {
        (self.max.x - self.min.x).max(self.max.y - self.min.y) / 400.0
    }

    pub fn disks(&mut self, table: &BilliardTable, highlight: Option<usize>) -> &mut Self {
        let w = self.stroke();
        for (i, &c) in table.centers().iter().enumerate() {
            let fill = if Some(i) == highlight {
                "#f4c7c3"
            } else {
                "#dddddd"
            };
            let _ = writeln!(
                self.body,
                r##"<circle cx="{:.5}" cy="{:.5}" r="1" fill="{fill}" stroke="#444" stroke-width="{w:.4}"/>"##,
                c.x, -c.y
            );
            let _ = writeln!(
                self.body,
                r#"<text x="{:.5}" y="{:.5}" font-size="0.5" text-anchor="middle" dominant-baseline="central">{}</text>"#,
                c.x,
                -c.y,
                escape(&table.label(i))
            );
        }
        self
    }

    pub fn polyline(&mut self, pts: &[Vec2], closed: bool, color: &str, dashed: bool) -> &mut Self {
        let w = self.stroke() * 1.5;
        let tag = if closed { "polygon" } else { "polyline" };
        let dash = if dashed {
            format!(r#" stroke-dasharray="{:.4} {:.4}""#, 4.0 * w, 3.0 * w)
        } else {
            String::new()
        };
        let coords: Vec<String> = pts
            .iter()
            .map(|p| format!("{:.5},{:.5}", p.x, -p.y))
            .collect();
        let _ = writeln!(
            self.body,
            r#"<{tag} points="{}" fill="none" stroke="{color}" stroke-width="{w:.4}"{dash}/>"#,
            coords.join(" ")
        );
        self
    }

    pub fn marker(&mut self, p: Vec2, label: &str, color: &str) -> &mut Self {
        let r = self.stroke() * 4.0;
        let _ = writeln!(
            self.body,
            r#"<circle cx="{:.5}" cy="{:.5}" r="{r:.4}" fill="{color}"/>"#,
            p.x, -p.y
        );
        let _ = writeln!(
            self.body,
            r#"<text x="{:.5}" y="{:.5}" font-size="0.35" fill="{color}">{}</text>"#,
            p.x + 2.0 * r,
            -p.y - 2.0 * r,
            escape(label)
        );
        self
    }

    pub fn caption(&mut self, text: &str) -> &mut Self {
        let _ = writeln!(
            self.body,
            r#"<text x="{:.5}" y="{:.5}" font-size="0.4">{}</text>"#,
            self.min.x + 0.2,
            -self.max.y + 0.5,
            escape(text)
        );
        self
    }

    pub fn finish(&self) -> String {
        let (w, h) = (self.max.x - self.min.x, self.max.y - self.min.y);
        let px = 800.0;
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"{:.5} {:.5} {w:.5} {h:.5}\" width=\"{px:.0}\" height=\"{:.0}\">\n\
             <rect x=\"{:.5}\" y=\"{:.5}\" width=\"{w:.5}\" height=\"{h:.5}\" fill=\"white\"/>\n{}</svg>\n",
            self.min.x,
            -self.max.y,
            px * h / w,
            self.min.x,
            -self.max.y,
            self.body
        )
    }
}

pub fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_closed_orbit() {
        let t = BilliardTable::new(vec![Vec2::ZERO, Vec2::new(4.0, 0.0)]).unwrap();
        let svg = Plot::new(&t, &[])
            .disks(&t, Some(0))
            .polyline(
                &[Vec2::new(1.0, 0.0), Vec2::new(3.0, 0.0)],
                true,
                color(0),
                false,
            )
            .finish();
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<circle").count(), 2);
        assert!(svg.contains(r#"points="1.00000,-0.00000 3.00000,-0.00000""#));
    }
}
