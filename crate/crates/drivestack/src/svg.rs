//! Overhead SVG plot of a simulation trace.

use std::fmt::Write;

use drivestack_core::simulator::SimTrace;
use drivestack_core::Vec2;

const SIZE: f64 = 800.0;
const PAD: f64 = 20.0;

struct View {
    min: Vec2,
    scale: f64,
    height: f64,
}

impl View {
    fn map(&self, p: Vec2) -> (f64, f64) {
        (PAD + (p.x - self.min.x) * self.scale, self.height - PAD - (p.y - self.min.y) * self.scale)
    }

    fn polyline(&self, pts: impl IntoIterator<Item = Vec2>) -> String {
        let mut s = String::new();
        for p in pts {
            let (x, y) = self.map(p);
            let _ = write!(s, "{x:.2},{y:.2} ");
        }
        s.trim_end().to_string()
    }
}

/// Corridor edges, ego path, obstacle paths and the predicted modes of the
/// first step.
pub fn render_svg(trace: &SimTrace) -> String {
    let c = &trace.header.corridor;
    let half = 0.5 * c.width();
    let len = c.length();
    let samples: Vec<f64> = (0..=200).map(|i| len * i as f64 / 200.0).collect();
    let left: Vec<Vec2> = samples.iter().map(|&s| c.point_at(s, half)).collect();
    let right: Vec<Vec2> = samples.iter().map(|&s| c.point_at(s, -half)).collect();
    let ego: Vec<Vec2> = trace
        .records
        .iter()
        .map(|r| r.ego.position())
        .chain(std::iter::once(trace.header.final_ego.position()))
        .collect();

    let all = left.iter().chain(&right).chain(&ego);
    let (mut min, mut max) = (Vec2::new(f64::INFINITY, f64::INFINITY), Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
    for p in all {
        min = Vec2::new(min.x.min(p.x), min.y.min(p.y));
        max = Vec2::new(max.x.max(p.x), max.y.max(p.y));
    }
    let span = (max.x - min.x).max(max.y - min.y).max(1.0);
    let scale = (SIZE - 2.0 * PAD) / span;
    let height = (max.y - min.y) * scale + 2.0 * PAD;
    let v = View { min, scale, height };

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{height:.0}" viewBox="0 0 {SIZE} {height:.2}">"#
    );
    let _ = writeln!(out, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    for edge in [&left, &right] {
        let _ = writeln!(
            out,
            r##"<polyline points="{}" fill="none" stroke="#555555" stroke-width="1.5"/>"##,
            v.polyline(edge.iter().copied())
        );
    }
    if let Some(first) = trace.records.first() {
        for m in &first.predicted {
            let _ = writeln!(
                out,
                r##"<polyline points="{}" fill="none" stroke="#e69f00" stroke-dasharray="4 3" stroke-opacity="{:.2}"/>"##,
                v.polyline(m.points.iter().map(|&(x, y)| Vec2::new(x, y))),
                0.3 + 0.7 * m.weight
            );
        }
    }
    let mut ids: Vec<&str> = trace
        .records
        .iter()
        .flat_map(|r| r.ground_truth.iter().map(|o| o.id.as_str()))
        .collect();
    ids.sort_unstable();
    ids.dedup();
    for id in ids {
        let path = trace
            .records
            .iter()
            .filter_map(|r| r.ground_truth.iter().find(|o| o.id == id).map(|o| o.state.position()));
        let _ = writeln!(
            out,
            r##"<polyline points="{}" fill="none" stroke="#d55e00" stroke-width="2"><title>{id}</title></polyline>"##,
            v.polyline(path)
        );
    }
    let _ = writeln!(
        out,
        r##"<polyline points="{}" fill="none" stroke="#0072b2" stroke-width="2.5"><title>ego</title></polyline>"##,
        v.polyline(ego)
    );
    out.push_str("</svg>\n");
    out
}
