//! Static top-down SVG of a scene with flown trajectories.

use std::fmt::Write;

use crate::geometry::{ObstacleShape, Vec2};
use crate::scene::Scene;

/// Pixels per meter.
const SCALE: f64 = 40.0;
const MARGIN: f64 = 20.0;

struct Frame {
    min: Vec2,
    height: f64,
}

impl Frame {
    /// Scene meters to SVG pixels, y pointing up.
    fn px(&self, p: Vec2) -> (f64, f64) {
        (
            MARGIN + (p.x - self.min.x) * SCALE,
            MARGIN + (self.height - (p.y - self.min.y)) * SCALE,
        )
    }

    fn points(&self, ps: &[Vec2]) -> String {
        ps.iter()
            .map(|&p| {
                let (x, y) = self.px(p);
                format!("{x:.2},{y:.2}")
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Renders bounds, obstacles, the dashed start-goal route, one polyline per
/// trajectory and start/goal markers.
pub fn render_svg(scene: &Scene, trajectories: &[Vec<Vec2>]) -> String {
    let b = scene.bounds;
    let f = Frame {
        min: b.min,
        height: b.height(),
    };
    let w = b.width() * SCALE + 2.0 * MARGIN;
    let h = b.height() * SCALE + 2.0 * MARGIN;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}">"#
    );
    let _ = writeln!(s, "<title>{}</title>", scene.name);
    let _ = writeln!(
        s,
        r##"<rect x="{MARGIN}" y="{MARGIN}" width="{:.2}" height="{:.2}" fill="#fafafa" stroke="#333"/>"##,
        b.width() * SCALE,
        b.height() * SCALE
    );
    for o in &scene.obstacles {
        match o {
            ObstacleShape::Disc { center, radius } => {
                let (x, y) = f.px(*center);
                let _ = writeln!(
                    s,
                    r##"<circle cx="{x:.2}" cy="{y:.2}" r="{:.2}" fill="#9a9a9a"/>"##,
                    radius * SCALE
                );
            }
            other => {
                let vs = other.vertices().unwrap_or_default();
                let _ = writeln!(s, r##"<polygon points="{}" fill="#9a9a9a"/>"##, f.points(&vs));
            }
        }
    }
    let (sx, sy) = f.px(scene.start);
    let (gx, gy) = f.px(scene.goal);
    let _ = writeln!(
        s,
        r##"<line x1="{sx:.2}" y1="{sy:.2}" x2="{gx:.2}" y2="{gy:.2}" stroke="#444" stroke-dasharray="6 4"/>"##
    );
    for t in trajectories {
        let _ = writeln!(
            s,
            r##"<polyline points="{}" fill="none" stroke="#7b2cbf" stroke-width="2"/>"##,
            f.points(t)
        );
    }
    let _ = writeln!(s, r##"<circle cx="{sx:.2}" cy="{sy:.2}" r="5" fill="#2a9d8f"/>"##);
    let _ = writeln!(s, r##"<circle cx="{gx:.2}" cy="{gy:.2}" r="5" fill="#e63946"/>"##);
    s.push_str("</svg>\n");
    s
}
