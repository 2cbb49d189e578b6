//! Axis-aligned boxes.
//!
//! Two representations are used. [`BBox`] is corner form `[x1, y1, x2, y2]`
//! and is what manifests, detections and evaluation records store, in pixels.
//! [`CenterBox`] is `[cx, cy, w, h]` normalized by the image size and is what
//! the matching cost and loss operate on. [`CenterBox::from_pixels`] and
//! [`CenterBox::to_pixels`] are the only conversions between the two.

use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};

/// Corner-form box. Serialized as `[x1, y1, x2, y2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    /// Builds a box, rejecting non-finite coordinates and zero or negative extent.
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let b = BBox { x1, y1, x2, y2 };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.x1.is_finite() && self.y1.is_finite() && self.x2.is_finite() && self.y2.is_finite();
        if !finite {
            return Err(validation!("box {:?} has non-finite coordinates", self.to_array()));
        }
        if !(self.x1 < self.x2 && self.y1 < self.y2) {
            return Err(validation!("box {:?} requires x1 < x2 and y1 < y2", self.to_array()));
        }
        Ok(())
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) * 0.5, (self.y1 + self.y2) * 0.5)
    }

    /// Euclidean distance between the two box centers.
    pub fn center_distance(&self, other: &BBox) -> f64 {
        let (ax, ay) = self.center();
        let (bx, by) = other.center();
        libm::hypot(ax - bx, ay - by)
    }

    /// Squared center distance. Exact on integer-valued centers, so equal
    /// distances compare equal.
    pub fn center_distance_sq(&self, other: &BBox) -> f64 {
        let (ax, ay) = self.center();
        let (bx, by) = other.center();
        (ax - bx) * (ax - bx) + (ay - by) * (ay - by)
    }

    /// True when the box lies inside `[0, width] x [0, height]`.
    pub fn within(&self, width: f64, height: f64) -> bool {
        self.x1 >= 0.0 && self.y1 >= 0.0 && self.x2 <= width && self.y2 <= height
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.x2.min(other.x2) - self.x1.max(other.x1);
        let h = self.y2.min(other.y2) - self.y1.max(other.y1);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    fn hull(&self, other: &BBox) -> BBox {
        BBox {
            x1: self.x1.min(other.x1),
            y1: self.y1.min(other.y1),
            x2: self.x2.max(other.x2),
            y2: self.y2.max(other.y2),
        }
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = crate::Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.to_array()
    }
}

impl core::fmt::Display for BBox {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "[{}, {}, {}, {}]", self.x1, self.y1, self.x2, self.y2)
    }
}

/// Normalized center-form box. Serialized as `[cx, cy, w, h]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct CenterBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl CenterBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        let b = CenterBox { cx, cy, w, h };
        if !(cx.is_finite() && cy.is_finite() && w.is_finite() && h.is_finite()) {
            return Err(validation!("center box {:?} has non-finite values", b.to_array()));
        }
        if !(w > 0.0 && h > 0.0) {
            return Err(validation!("center box {:?} requires w > 0 and h > 0", b.to_array()));
        }
        Ok(b)
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.cx, self.cy, self.w, self.h]
    }

    /// True when every coordinate lies in `[0, 1]`.
    pub fn is_normalized(&self) -> bool {
        self.to_array().iter().all(|v| (0.0..=1.0).contains(v))
    }

    /// Converts a pixel corner box of an image of `width x height` pixels into
    /// normalized center form.
    pub fn from_pixels(b: &BBox, width: f64, height: f64) -> Result<Self> {
        if !(width > 0.0 && height > 0.0) {
            return Err(validation!("image size {}x{} must be positive", width, height));
        }
        CenterBox::new(
            (b.x1 + b.x2) * 0.5 / width,
            (b.y1 + b.y2) * 0.5 / height,
            b.width() / width,
            b.height() / height,
        )
    }

    /// Inverse of [`CenterBox::from_pixels`].
    pub fn to_pixels(&self, width: f64, height: f64) -> BBox {
        let c = self.corners();
        BBox { x1: c.x1 * width, y1: c.y1 * height, x2: c.x2 * width, y2: c.y2 * height }
    }

    /// Corner form in the same (normalized) units.
    pub fn corners(&self) -> BBox {
        BBox {
            x1: self.cx - 0.5 * self.w,
            y1: self.cy - 0.5 * self.h,
            x2: self.cx + 0.5 * self.w,
            y2: self.cy + 0.5 * self.h,
        }
    }

    /// Sum of absolute coordinate differences in `(cx, cy, w, h)`.
    pub fn l1(&self, other: &CenterBox) -> f64 {
        (self.cx - other.cx).abs() + (self.cy - other.cy).abs() + (self.w - other.w).abs() + (self.h - other.h).abs()
    }
}

impl TryFrom<[f64; 4]> for CenterBox {
    type Error = crate::Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        CenterBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<CenterBox> for [f64; 4] {
    fn from(b: CenterBox) -> Self {
        b.to_array()
    }
}

/// Intersection over union. Returns 0 when the union is empty.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Generalized IoU: `IoU - (hull - union) / hull`, in `(-1, 1]`.
///
/// Boxes with zero area (after clamping negative extents) are rejected.
pub fn giou(a: &BBox, b: &BBox) -> Result<f64> {
    for bx in [a, b] {
        if !bx.area().is_finite() || bx.area() <= 0.0 {
            return Err(crate::error::argument!("degenerate box {} in giou", bx));
        }
    }
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    let hull = a.hull(b).area();
    Ok(inter / union - (hull - union) / hull)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn rejects_inverted_and_nan_boxes() {
        assert!(BBox::new(1.0, 0.0, 1.0, 2.0).is_err());
        assert!(BBox::new(0.0, 3.0, 1.0, 2.0).is_err());
        assert!(BBox::new(f64::NAN, 0.0, 1.0, 1.0).is_err());
        assert!(CenterBox::new(0.5, 0.5, 0.0, 0.1).is_err());
    }

    #[test]
    fn giou_identical_is_one() {
        let a = bx(3.0, 4.0, 10.0, 12.0);
        assert_eq!(giou(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn giou_disjoint_unit_boxes() {
        // IoU 0, hull 3, union 2 => -(3 - 2) / 3
        let g = giou(&bx(0.0, 0.0, 1.0, 1.0), &bx(2.0, 0.0, 3.0, 1.0)).unwrap();
        assert!((g - (-1.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn giou_nested_quarter() {
        let g = giou(&bx(0.0, 0.0, 2.0, 2.0), &bx(0.5, 0.5, 1.5, 1.5)).unwrap();
        assert!((g - 0.25).abs() < 1e-12);
    }

    #[test]
    fn giou_rejects_degenerate() {
        let flat = BBox { x1: 0.0, y1: 0.0, x2: 1.0, y2: 0.0 };
        assert!(matches!(giou(&flat, &bx(0.0, 0.0, 1.0, 1.0)), Err(crate::Error::Argument(_))));
    }

    #[test]
    fn pixel_round_trip() {
        let b = bx(10.0, 20.0, 110.0, 70.0);
        let c = CenterBox::from_pixels(&b, 200.0, 100.0).unwrap();
        assert_eq!(c.to_array(), [0.3, 0.45, 0.5, 0.5]);
        let back = c.to_pixels(200.0, 100.0);
        for (x, y) in back.to_array().iter().zip(b.to_array()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn serde_uses_corner_arrays() {
        let b: BBox = serde_json::from_str("[1, 2, 3, 4]").unwrap();
        assert_eq!(b, bx(1.0, 2.0, 3.0, 4.0));
        assert_eq!(serde_json::to_string(&b).unwrap(), "[1.0,2.0,3.0,4.0]");
        assert!(serde_json::from_str::<BBox>("[3, 2, 1, 4]").is_err());
    }
}
