//! Pixel-domain primitives on the horizontally wrapping panorama axis.
//!
//! An equirectangular panorama is periodic in x with period `width`. Spans
//! and boxes may cross the seam at `x = width`; all overlap arithmetic here
//! unrolls onto a shared linear domain before measuring.

use serde::{Deserialize, Serialize};

/// Reduces `value` into the half-open range `[0, period)`.
///
/// `f64::rem_euclid` can return exactly `period` for tiny negative inputs;
/// that case folds back to zero.
pub fn wrap_to(value: f64, period: f64) -> f64 {
    let r = value.rem_euclid(period);
    if r >= period {
        0.0
    } else {
        r
    }
}

/// A closed arc `[start, start + len]` on a circle of circumference `width`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelSpan {
    /// Left edge, normalized into `[0, width)`.
    pub start: f64,
    /// Arc length in pixels, in `[0, width]`.
    pub len: f64,
}

impl PixelSpan {
    pub fn new(start: f64, len: f64, width: f64) -> Self {
        Self {
            start: wrap_to(start, width),
            len: len.clamp(0.0, width),
        }
    }

    /// Span running from `lo` rightwards to `hi`, crossing the seam when `hi < lo`.
    pub fn from_endpoints(lo: f64, hi: f64, width: f64) -> Self {
        let lo = wrap_to(lo, width);
        let hi = wrap_to(hi, width);
        Self {
            start: lo,
            len: wrap_to(hi - lo, width),
        }
    }

    pub fn end(&self) -> f64 {
        self.start + self.len
    }

    /// Strict containment `start < x < start + len` on the circle.
    pub fn contains_strict(&self, x: f64, width: f64) -> bool {
        let offset = wrap_to(x - self.start, width);
        offset > 0.0 && offset < self.len
    }

    /// Length of the arc intersection with `other`.
    pub fn overlap(&self, other: &PixelSpan, width: f64) -> f64 {
        // Both starts lie in [0, width) and both lengths are <= width, so the
        // shifts -1, 0, +1 cover every way the two arcs can meet.
        let mut total = 0.0;
        for k in [-1.0, 0.0, 1.0] {
            let b0 = other.start + k * width;
            let lo = self.start.max(b0);
            let hi = self.end().min(b0 + other.len);
            if hi > lo {
                total += hi - lo;
            }
        }
        total.min(self.len.min(other.len))
    }
}

/// Axis-aligned box in pixels, top-left origin. `x + w` may exceed the
/// panorama width for boxes that cross the horizontal seam.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxXywh {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoxXywh {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    /// Horizontal midpoint, wrapped into `[0, width)`.
    pub fn mid_x(&self, width: f64) -> f64 {
        wrap_to(self.x + self.w / 2.0, width)
    }

    pub fn x_span(&self, width: f64) -> PixelSpan {
        PixelSpan::new(self.x, self.w, width)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_folds_negative_zero_edge() {
        assert_eq!(wrap_to(-1e-300, 360.0), 0.0);
        assert_eq!(wrap_to(360.0, 360.0), 0.0);
        assert_eq!(wrap_to(-10.0, 360.0), 350.0);
    }

    #[test]
    fn seam_crossing_overlap() {
        let w = 2048.0;
        let a = PixelSpan::from_endpoints(2000.0, 100.0, w);
        assert_eq!(a.len, 148.0);
        let b = PixelSpan::new(0.0, 100.0, w);
        assert_eq!(a.overlap(&b, w), 100.0);
        assert_eq!(b.overlap(&a, w), 100.0);
        assert!(a.contains_strict(10.0, w));
        assert!(a.contains_strict(2040.0, w));
        assert!(!a.contains_strict(1000.0, w));
        assert!(!a.contains_strict(2000.0, w));
    }

    #[test]
    fn full_circle_overlap_is_bounded() {
        let w = 100.0;
        let full = PixelSpan::new(30.0, 100.0, w);
        let part = PixelSpan::new(90.0, 20.0, w);
        assert_eq!(full.overlap(&part, w), 20.0);
    }
}
