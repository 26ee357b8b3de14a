//! Static top-down renders: room outlines, ground-truth cameras and aligned
//! estimates, one panel per cluster.

use std::fmt::Write;

use panograph::{Pose2, Vec2};

const PANEL: f64 = 320.0;
const PAD: f64 = 24.0;
const COLUMNS: usize = 3;
const HEADING_PX: f64 = 14.0;

pub struct Estimate {
    pub label: String,
    pub color: &'static str,
    /// Poses already aligned into the world frame.
    pub poses: Vec<Pose2>,
}

pub struct Panel {
    pub title: String,
    pub rooms: Vec<Vec<Vec2>>,
    pub truth: Vec<Pose2>,
    pub estimates: Vec<Estimate>,
}

struct Frame {
    min: Vec2,
    scale: f64,
    ox: f64,
    oy: f64,
}

impl Frame {
    fn fit(panel: &Panel, ox: f64, oy: f64) -> Frame {
        let pts = panel
            .rooms
            .iter()
            .flatten()
            .copied()
            .chain(panel.truth.iter().map(Pose2::translation))
            .chain(
                panel
                    .estimates
                    .iter()
                    .flat_map(|e| e.poses.iter().map(Pose2::translation)),
            );
        let (mut min, mut max) = (Vec2::repeat(f64::INFINITY), Vec2::repeat(f64::NEG_INFINITY));
        for p in pts {
            min = min.inf(&p);
            max = max.sup(&p);
        }
        if !min.x.is_finite() {
            min = Vec2::zeros();
            max = Vec2::new(1.0, 1.0);
        }
        let extent = (max - min).max().max(1e-6);
        Frame {
            min,
            scale: (PANEL - 2.0 * PAD) / extent,
            ox,
            oy,
        }
    }

    fn map(&self, p: Vec2) -> (f64, f64) {
        let x = self.ox + PAD + (p.x - self.min.x) * self.scale;
        let y = self.oy + PANEL - PAD - (p.y - self.min.y) * self.scale;
        (x, y)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn camera(out: &mut String, f: &Frame, pose: &Pose2, color: &str, radius: f64) {
    let (x, y) = f.map(pose.translation());
    let th = pose.theta();
    let (hx, hy) = (x + HEADING_PX * th.cos(), y - HEADING_PX * th.sin());
    let _ = writeln!(
        out,
        r#"<circle cx="{x:.2}" cy="{y:.2}" r="{radius}" fill="none" stroke="{color}" stroke-width="1.5"/>"#
    );
    let _ = writeln!(
        out,
        r#"<line x1="{x:.2}" y1="{y:.2}" x2="{hx:.2}" y2="{hy:.2}" stroke="{color}" stroke-width="1.5"/>"#
    );
}

pub fn render(panels: &[Panel]) -> String {
    let cols = panels.len().clamp(1, COLUMNS);
    let rows = panels.len().div_ceil(COLUMNS).max(1);
    let (w, h) = (cols as f64 * PANEL, rows as f64 * PANEL + 20.0);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);

    let mut legend_x = 8.0;
    let mut legend = vec![("ground truth".to_string(), "black")];
    if let Some(p) = panels.first() {
        legend.extend(p.estimates.iter().map(|e| (e.label.clone(), e.color)));
    }
    for (label, color) in legend {
        let _ = writeln!(
            out,
            r#"<text x="{legend_x}" y="{:.0}" font-family="sans-serif" font-size="12" fill="{color}">{}</text>"#,
            h - 6.0,
            escape(&label)
        );
        legend_x += 110.0;
    }

    for (k, panel) in panels.iter().enumerate() {
        let ox = (k % COLUMNS) as f64 * PANEL;
        let oy = (k / COLUMNS) as f64 * PANEL;
        let f = Frame::fit(panel, ox, oy);
        let _ = writeln!(out, "<g>");
        let _ = writeln!(
            out,
            r##"<rect x="{ox}" y="{oy}" width="{PANEL}" height="{PANEL}" fill="none" stroke="#ddd"/>"##
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.0}" y="{:.0}" font-family="sans-serif" font-size="11">{}</text>"#,
            ox + 6.0,
            oy + 14.0,
            escape(&panel.title)
        );
        for room in &panel.rooms {
            let pts: Vec<String> = room
                .iter()
                .map(|&v| {
                    let (x, y) = f.map(v);
                    format!("{x:.2},{y:.2}")
                })
                .collect();
            let _ = writeln!(
                out,
                r##"<polygon points="{}" fill="#f4f1ea" stroke="#555" stroke-width="1.5"/>"##,
                pts.join(" ")
            );
        }
        for p in &panel.truth {
            camera(&mut out, &f, p, "black", 5.0);
        }
        for e in &panel.estimates {
            for p in &e.poses {
                camera(&mut out, &f, p, e.color, 3.5);
            }
        }
        let _ = writeln!(out, "</g>");
    }
    out.push_str("</svg>\n");
    out
}
