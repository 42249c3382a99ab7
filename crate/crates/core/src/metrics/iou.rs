use super::MetricsError;
use crate::pixel::{BoxXywh, PixelSpan};

/// Intersection over union of two arcs on a circle of circumference `width`.
pub fn iou_1d(a: &PixelSpan, b: &PixelSpan, width: f64) -> Result<f64, MetricsError> {
    let inter = a.overlap(b, width);
    let union = a.len + b.len - inter;
    if !(union > 0.0) {
        return Err(MetricsError::DegenerateUnion);
    }
    Ok((inter / union).clamp(0.0, 1.0))
}

/// Rectangle IoU. With `wrap_width` set, the horizontal overlap is measured
/// on the panorama circle so seam-crossing boxes compare correctly.
pub fn iou_2d(a: &BoxXywh, b: &BoxXywh, wrap_width: Option<f64>) -> f64 {
    let ix = match wrap_width {
        Some(w) => a.x_span(w).overlap(&b.x_span(w), w),
        None => ((a.x + a.w).min(b.x + b.w) - a.x.max(b.x)).max(0.0),
    };
    let iy = ((a.y + a.h).min(b.y + b.h) - a.y.max(b.y)).max(0.0);
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union > 0.0 {
        (inter / union).clamp(0.0, 1.0)
    } else {
        0.0
    }
}
