//! Exact axis-aligned bounding-box arithmetic.
//!
//! Boxes live in normalized center format `(cx, cy, w, h)` over the unit
//! square, the same representation the label file format uses. Coordinates
//! are snapped to the canonical 1e-6 grid (the label format's 6-decimal
//! fixed point) at construction; on that grid, flips and 90-degree rotations
//! are bit-exact involutions instead of accumulating floating-point drift.
//! Corner pixel form is derived on demand.

use crate::error::{DetlabError, Result};

/// Resolution of the canonical coordinate grid (6-decimal fixed point).
pub const COORD_GRID: f64 = 1e-6;

/// Default fraction of a box's area that must survive clipping for the box
/// to be kept; boxes nearly rotated or pasted out of frame are dropped
/// rather than kept as slivers.
pub const DEFAULT_MIN_VISIBLE_AREA: f64 = 0.1;

// Edge-containment tolerance: half a grid step of slack plus rounding noise.
const EDGE_TOL: f64 = 5.001e-7;

/// Snap a coordinate to the canonical 1e-6 grid.
#[inline]
pub fn snap(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

/// Axis-aligned box in normalized center format.
///
/// Invariants: `w > 0`, `h > 0`, and the box lies inside the unit square
/// (up to grid tolerance). Zero-area boxes are rejected at construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
}

impl BBox {
    /// Build a box, snapping coordinates to the canonical grid and
    /// validating the invariants.
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        let (cx, cy, w, h) = (snap(cx), snap(cy), snap(w), snap(h));
        let invalid = |reason: &str| DetlabError::InvalidBBox {
            cx,
            cy,
            w,
            h,
            reason: reason.to_string(),
        };
        if !(cx.is_finite() && cy.is_finite() && w.is_finite() && h.is_finite()) {
            return Err(invalid("non-finite coordinate"));
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(invalid("zero or negative extent"));
        }
        if cx - w / 2.0 < -EDGE_TOL
            || cx + w / 2.0 > 1.0 + EDGE_TOL
            || cy - h / 2.0 < -EDGE_TOL
            || cy + h / 2.0 > 1.0 + EDGE_TOL
        {
            return Err(invalid("box extends outside the unit square"));
        }
        Ok(BBox { cx, cy, w, h })
    }

    /// Build a box from normalized corner coordinates.
    pub fn from_corners(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        BBox::new(
            (x_min + x_max) / 2.0,
            (y_min + y_max) / 2.0,
            x_max - x_min,
            y_max - y_min,
        )
    }

    pub fn cx(&self) -> f64 {
        self.cx
    }

    pub fn cy(&self) -> f64 {
        self.cy
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Normalized corner coordinates `(x_min, y_min, x_max, y_max)`.
    pub fn corners(&self) -> (f64, f64, f64, f64) {
        (
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.cx + self.w / 2.0,
            self.cy + self.h / 2.0,
        )
    }

    /// Normalized area.
    pub fn area(&self) -> f64 {
        self.w * self.h
    }
}

/// Pixel dimensions of an image canvas.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CanvasSize {
    width: u32,
    height: u32,
}

impl CanvasSize {
    pub fn new(width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(DetlabError::InvalidCanvas { width, height });
        }
        Ok(CanvasSize { width, height })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Canvas with width and height exchanged (after a 90-degree rotation).
    pub fn transposed(&self) -> CanvasSize {
        CanvasSize {
            width: self.height,
            height: self.width,
        }
    }
}

/// Geometric transform of an image canvas and the boxes on it.
///
/// `RotateArbitrary` angles are in degrees, counted clockwise in screen
/// orientation (x right, y down), and must lie in `[0, 360)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GeomTransform {
    HorizontalFlip,
    VerticalFlip,
    Rotate90Cw,
    Rotate180,
    Rotate270Cw,
    RotateArbitrary(f64),
}

impl GeomTransform {
    /// Whether the transform swaps canvas width and height.
    pub fn swaps_canvas(&self) -> bool {
        matches!(self, GeomTransform::Rotate90Cw | GeomTransform::Rotate270Cw)
    }

    pub fn validate(&self) -> Result<()> {
        if let GeomTransform::RotateArbitrary(angle) = self {
            if !(*angle >= 0.0 && *angle < 360.0) {
                return Err(DetlabError::Config(format!(
                    "rotation angle {angle} outside [0, 360)"
                )));
            }
        }
        Ok(())
    }
}

/// Intersection-over-union of two boxes.
///
/// Returns 0 for disjoint boxes; boxes that merely touch along an edge have
/// zero intersection area and therefore IoU 0.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let (ax0, ay0, ax1, ay1) = a.corners();
    let (bx0, by0, bx1, by1) = b.corners();
    let iw = (ax1.min(bx1) - ax0.max(bx0)).max(0.0);
    let ih = (ay1.min(by1) - ay0.max(by0)).max(0.0);
    let inter = iw * ih;
    if inter <= 0.0 {
        return 0.0;
    }
    // Areas from the same corner differences as the intersection, so that
    // identical boxes yield exactly 1.
    let area_a = (ax1 - ax0) * (ay1 - ay0);
    let area_b = (bx1 - bx0) * (by1 - by0);
    let union = area_a + area_b - inter;
    inter / union
}

/// Pixel-space corner box `(x_min, y_min, x_max, y_max)` in continuous
/// pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

/// Convert a normalized box to continuous pixel corners.
pub fn to_pixel(b: &BBox, canvas: CanvasSize) -> PixelBox {
    let (x0, y0, x1, y1) = b.corners();
    let w = canvas.width() as f64;
    let h = canvas.height() as f64;
    PixelBox {
        x_min: x0 * w,
        y_min: y0 * h,
        x_max: x1 * w,
        y_max: y1 * h,
    }
}

/// Convert pixel corners back to a normalized box. Inverse of [`to_pixel`]
/// up to floating-point tolerance (exact on the canonical grid).
pub fn to_normalized(p: &PixelBox, canvas: CanvasSize) -> Result<BBox> {
    let w = canvas.width() as f64;
    let h = canvas.height() as f64;
    BBox::from_corners(p.x_min / w, p.y_min / h, p.x_max / w, p.y_max / h)
}

/// Integer pixel rectangle, end-exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelRect {
    pub x0: i64,
    pub y0: i64,
    pub x1: i64,
    pub y1: i64,
}

impl PixelRect {
    pub fn width(&self) -> i64 {
        (self.x1 - self.x0).max(0)
    }

    pub fn height(&self) -> i64 {
        (self.y1 - self.y0).max(0)
    }

    pub fn is_empty(&self) -> bool {
        self.width() == 0 || self.height() == 0
    }
}

/// Integer pixel rectangle covered by a box: corners rounded to the nearest
/// pixel boundary, clamped to the canvas.
pub fn pixel_rect(b: &BBox, canvas: CanvasSize) -> PixelRect {
    let p = to_pixel(b, canvas);
    let w = canvas.width() as i64;
    let h = canvas.height() as i64;
    PixelRect {
        x0: (p.x_min.round() as i64).clamp(0, w),
        y0: (p.y_min.round() as i64).clamp(0, h),
        x1: (p.x_max.round() as i64).clamp(0, w),
        y1: (p.y_max.round() as i64).clamp(0, h),
    }
}

/// Transform a box under `t` on the given canvas.
///
/// Flips and 90-degree-multiple rotations map the box exactly (90-degree
/// rotations land on the transposed canvas). Arbitrary-angle rotation takes
/// the axis-aligned bounding box of the four corners rotated about the
/// canvas center, then clips with [`DEFAULT_MIN_VISIBLE_AREA`]; `None` means
/// the box was clipped away.
pub fn transform_box(b: &BBox, t: GeomTransform, canvas: CanvasSize) -> Option<BBox> {
    match t {
        GeomTransform::HorizontalFlip => Some(BBox {
            cx: snap(1.0 - b.cx),
            ..*b
        }),
        GeomTransform::VerticalFlip => Some(BBox {
            cy: snap(1.0 - b.cy),
            ..*b
        }),
        GeomTransform::Rotate180 => Some(BBox {
            cx: snap(1.0 - b.cx),
            cy: snap(1.0 - b.cy),
            ..*b
        }),
        // (x, y) -> (1 - y, x) on the transposed canvas.
        GeomTransform::Rotate90Cw => Some(BBox {
            cx: snap(1.0 - b.cy),
            cy: b.cx,
            w: b.h,
            h: b.w,
        }),
        // (x, y) -> (y, 1 - x) on the transposed canvas.
        GeomTransform::Rotate270Cw => Some(BBox {
            cx: b.cy,
            cy: snap(1.0 - b.cx),
            w: b.h,
            h: b.w,
        }),
        GeomTransform::RotateArbitrary(angle) => {
            let p = to_pixel(b, canvas);
            let (w, h) = (canvas.width() as f64, canvas.height() as f64);
            let (ccx, ccy) = (w / 2.0, h / 2.0);
            let rad = angle.to_radians();
            let (sin, cos) = (rad.sin(), rad.cos());
            let corners = [
                (p.x_min, p.y_min),
                (p.x_max, p.y_min),
                (p.x_min, p.y_max),
                (p.x_max, p.y_max),
            ];
            let mut x0 = f64::INFINITY;
            let mut y0 = f64::INFINITY;
            let mut x1 = f64::NEG_INFINITY;
            let mut y1 = f64::NEG_INFINITY;
            for (px, py) in corners {
                // Clockwise rotation in screen orientation (y down).
                let dx = px - ccx;
                let dy = py - ccy;
                let rx = ccx + dx * cos - dy * sin;
                let ry = ccy + dx * sin + dy * cos;
                x0 = x0.min(rx);
                y0 = y0.min(ry);
                x1 = x1.max(rx);
                y1 = y1.max(ry);
            }
            let unclipped = RawBox {
                x_min: x0 / w,
                y_min: y0 / h,
                x_max: x1 / w,
                y_max: y1 / h,
            };
            clip_raw(&unclipped, DEFAULT_MIN_VISIBLE_AREA)
        }
    }
}

/// An un-validated box in normalized corner form; may extend outside the
/// unit square. Input to [`clip_box`]-style operations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl RawBox {
    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        RawBox {
            x_min: cx - w / 2.0,
            y_min: cy - h / 2.0,
            x_max: cx + w / 2.0,
            y_max: cy + h / 2.0,
        }
    }
}

/// Intersect a (possibly out-of-frame) box with the unit square. Returns
/// `None` when the remaining area is below `min_visible_area_fraction`
/// times the original area.
pub fn clip_box(b: &RawBox, min_visible_area_fraction: f64) -> Option<BBox> {
    clip_raw(b, min_visible_area_fraction)
}

fn clip_raw(b: &RawBox, min_visible: f64) -> Option<BBox> {
    let orig_area = (b.x_max - b.x_min).max(0.0) * (b.y_max - b.y_min).max(0.0);
    if orig_area <= 0.0 {
        return None;
    }
    let x0 = b.x_min.clamp(0.0, 1.0);
    let y0 = b.y_min.clamp(0.0, 1.0);
    let x1 = b.x_max.clamp(0.0, 1.0);
    let y1 = b.y_max.clamp(0.0, 1.0);
    let area = (x1 - x0).max(0.0) * (y1 - y0).max(0.0);
    if area <= 0.0 || area < min_visible * orig_area {
        return None;
    }
    BBox::from_corners(x0, y0, x1, y1).ok()
}
