//! Top-down SVG of one panorama's scene.
//!
//! Output is a pure function of its inputs: fixed precision, no timestamps,
//! element order follows input order.

use std::fmt::Write as _;

use crate::ingest::PanoramaMeta;
use crate::projection::{LocalScene, LocalXY, SweepAngle};
use crate::raytrace::VisibilityInterval;

const MAP_SIZE: f64 = 600.0;
const BAND_TOP: f64 = 620.0;
const BAND_HEIGHT: f64 = 28.0;

fn hue(key: &str) -> u32 {
    // FNV-1a, stable across platforms and runs.
    let mut h: u32 = 0x811c_9dc5;
    for b in key.bytes() {
        h ^= b as u32;
        h = h.wrapping_mul(0x0100_0193);
    }
    h % 360
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Canvas {
    centre: f64,
    scale: f64,
}

impl Canvas {
    fn point(&self, p: LocalXY) -> (f64, f64) {
        (self.centre + p.x * self.scale, self.centre - p.y * self.scale)
    }

    fn on_circle(&self, theta: f64, r: f64) -> (f64, f64) {
        self.point(SweepAngle::new(theta).direction() * r)
    }
}

fn arc_path(c: &Canvas, lo: f64, hi: f64, r: f64) -> String {
    let mut sweep = (hi - lo).rem_euclid(360.0);
    let rpx = r * c.scale;
    if sweep == 0.0 {
        // Single-sample interval: a short radial tick.
        let (x0, y0) = c.on_circle(lo, r * 0.9);
        let (x1, y1) = c.on_circle(lo, r);
        return format!("M {x0:.3} {y0:.3} L {x1:.3} {y1:.3}");
    }
    let (x0, y0) = c.on_circle(lo, r);
    if sweep >= 359.999 {
        sweep = 359.999;
    }
    // Clockwise on the map is the positive SVG sweep direction (y points down).
    if sweep > 180.0 {
        let mid = lo + sweep / 2.0;
        let (xm, ym) = c.on_circle(mid, r);
        let (x1, y1) = c.on_circle(lo + sweep, r);
        format!(
            "M {x0:.3} {y0:.3} A {rpx:.3} {rpx:.3} 0 0 1 {xm:.3} {ym:.3} A {rpx:.3} {rpx:.3} 0 0 1 {x1:.3} {y1:.3}"
        )
    } else {
        let (x1, y1) = c.on_circle(hi, r);
        format!("M {x0:.3} {y0:.3} A {rpx:.3} {rpx:.3} 0 0 1 {x1:.3} {y1:.3}")
    }
}

/// Renders footprints, the camera, the radius-R circle and one arc per
/// visibility interval. With `meta` given and at least one interval, a strip
/// below the map shows the intervals on the panorama's pixel axis.
pub fn render_svg(
    scene: &LocalScene,
    meta: Option<&PanoramaMeta>,
    intervals: &[VisibilityInterval],
    metadata_json: Option<&str>,
) -> String {
    let c = Canvas {
        centre: MAP_SIZE / 2.0,
        scale: (MAP_SIZE / 2.0 - 20.0) / scene.radius_m,
    };
    let show_band = meta.is_some() && !intervals.is_empty();
    let height = if show_band { BAND_TOP + BAND_HEIGHT + 12.0 } else { MAP_SIZE };
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{MAP_SIZE}" height="{height}" viewBox="0 0 {MAP_SIZE} {height}">"#
    );
    if let Some(json) = metadata_json {
        let _ = writeln!(s, "<metadata>{}</metadata>", escape(json));
    }
    s.push_str("<style>.footprint{stroke:#333;stroke-width:1;fill-opacity:0.45}.fov{fill:none;stroke:#888;stroke-dasharray:4 3}.camera{fill:#d00}.arc{fill:none;stroke-width:4}.band-axis{fill:#eee;stroke:#999}</style>\n");

    for b in &scene.buildings {
        let pts: Vec<String> = b
            .ring
            .iter()
            .map(|&p| {
                let (x, y) = c.point(p);
                format!("{x:.3},{y:.3}")
            })
            .collect();
        let _ = writeln!(
            s,
            r#"<polygon class="footprint" data-building="{}" data-category="{}" fill="hsl({},55%,60%)" points="{}"/>"#,
            escape(&b.building_id),
            b.category,
            hue(&format!("cat{}", b.category)),
            pts.join(" ")
        );
    }

    let _ = writeln!(
        s,
        r#"<circle class="fov" cx="{0:.3}" cy="{0:.3}" r="{1:.3}"/>"#,
        c.centre,
        scene.radius_m * c.scale
    );
    let _ = writeln!(s, r#"<circle class="camera" cx="{0:.3}" cy="{0:.3}" r="4"/>"#, c.centre);

    for iv in intervals {
        let _ = writeln!(
            s,
            r#"<path class="arc" data-building="{}" stroke="hsl({},65%,40%)" d="{}"/>"#,
            escape(&iv.building_id),
            hue(&iv.building_id),
            arc_path(&c, iv.angle_lo, iv.angle_hi, scene.radius_m * 0.97)
        );
    }

    if let (true, Some(meta)) = (show_band, meta) {
        let width = meta.width as f64;
        let k = MAP_SIZE / width;
        let _ = writeln!(s, r#"<g class="band-strip">"#);
        let _ = writeln!(
            s,
            r#"<rect class="band-axis" x="0" y="{BAND_TOP}" width="{MAP_SIZE}" height="{BAND_HEIGHT}"/>"#
        );
        for iv in intervals {
            let Some(span) = iv.pixel_span(width) else { continue };
            let pieces = if span.end() > width {
                vec![(span.start, width - span.start), (0.0, span.end() - width)]
            } else {
                vec![(span.start, span.len)]
            };
            for (x, w) in pieces {
                let _ = writeln!(
                    s,
                    r#"<rect class="band" data-building="{}" fill="hsl({},65%,40%)" x="{:.3}" y="{BAND_TOP}" width="{:.3}" height="{BAND_HEIGHT}"/>"#,
                    escape(&iv.building_id),
                    hue(&iv.building_id),
                    x * k,
                    (w * k).max(0.5)
                );
            }
        }
        s.push_str("</g>\n");
    }
    s.push_str("</svg>\n");
    s
}
