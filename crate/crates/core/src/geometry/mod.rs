//! Planar primitives shared by the knowledge base, the engine and the
//! synthetic scene generator: points, boxes, homographies and polygons.
//!
//! Everything here is generic over [`Scalar`]; the rest of the crate uses the
//! `f64` aliases exported at the crate root.

mod derived;
mod polygon;

pub use derived::{
    clear_line_of_sight, distance_at, frame_to_scene_time, near, scene_time_to_frame, scene_to_view,
    view_to_scene, DerivedPredicateConfig,
};
pub use polygon::{
    convex_hull, convex_intersection_area, is_convex, is_simple, point_in_polygon,
    point_segment_distance, polygon_area, polygon_iou, segment_hits_polygon,
};

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::GeometryError;

/// Smallest |det| or |w| accepted before a projective map is called degenerate.
pub const DEGENERATE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Point2<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Self) -> T {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Linear blend `self + (other - self) * s`.
    pub fn lerp(&self, other: &Self, s: T) -> Self {
        Self::new(self.x + (other.x - self.x) * s, self.y + (other.y - self.y) * s)
    }
}

/// Axis-aligned box given by two diagonal corners, `x1 < x2` and `y1 < y2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox<T> {
    pub x1: T,
    pub y1: T,
    pub x2: T,
    pub y2: T,
}

impl<T: Scalar> BBox<T> {
    pub fn new(x1: T, y1: T, x2: T, y2: T) -> Result<Self, GeometryError> {
        if !(x1 < x2 && y1 < y2) {
            return Err(GeometryError::BadBox(format!(
                "corners ({x1}, {y1}) ({x2}, {y2}) are not strictly ordered"
            )));
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    /// Box of the given half extents around a center.
    pub fn centered(center: Point2<T>, half_w: T, half_h: T) -> Result<Self, GeometryError> {
        Self::new(center.x - half_w, center.y - half_h, center.x + half_w, center.y + half_h)
    }

    pub fn width(&self) -> T {
        self.x2 - self.x1
    }

    pub fn height(&self) -> T {
        self.y2 - self.y1
    }

    pub fn area(&self) -> T {
        self.width() * self.height()
    }

    pub fn center(&self) -> Point2<T> {
        let two = T::lit(2.0);
        Point2::new((self.x1 + self.x2) / two, (self.y1 + self.y2) / two)
    }

    /// Closed containment.
    pub fn contains(&self, p: &Point2<T>) -> bool {
        p.x >= self.x1 && p.x <= self.x2 && p.y >= self.y1 && p.y <= self.y2
    }

    /// Corner-wise linear interpolation.
    pub fn lerp(&self, other: &Self, s: T) -> Self {
        let mix = |a: T, b: T| a + (b - a) * s;
        Self {
            x1: mix(self.x1, other.x1),
            y1: mix(self.y1, other.y1),
            x2: mix(self.x2, other.x2),
            y2: mix(self.y2, other.y2),
        }
    }

    /// Counter-clockwise corner ring.
    pub fn to_polygon(&self) -> Vec<Point2<T>> {
        vec![
            Point2::new(self.x1, self.y1),
            Point2::new(self.x2, self.y1),
            Point2::new(self.x2, self.y2),
            Point2::new(self.x1, self.y2),
        ]
    }
}

/// Intersection area over union area of two boxes, in `[0, 1]`.
pub fn bbox_iou<T: Scalar>(a: &BBox<T>, b: &BBox<T>) -> T {
    let iw = a.x2.min(b.x2) - a.x1.max(b.x1);
    let ih = a.y2.min(b.y2) - a.y1.max(b.y1);
    if iw <= T::zero() || ih <= T::zero() {
        return T::zero();
    }
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= T::zero() {
        return T::zero();
    }
    (inter / union).min(T::one())
}

/// Row-major 3x3 projective transform acting on homogeneous column vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Homography<T> {
    pub m: [[T; 3]; 3],
}

impl<T: Scalar> Homography<T> {
    pub fn new(m: [[T; 3]; 3]) -> Result<Self, GeometryError> {
        let h = Self { m };
        let det = h.determinant();
        if !(det.abs() > T::lit(DEGENERATE_EPS)) {
            return Err(GeometryError::Singular(det.to_f64_lossy()));
        }
        Ok(h)
    }

    pub fn from_row_major(v: &[T]) -> Result<Self, GeometryError> {
        if v.len() != 9 {
            return Err(GeometryError::BadMatrix(v.len()));
        }
        Self::new([[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]])
    }

    pub fn identity() -> Self {
        let (o, z) = (T::one(), T::zero());
        Self { m: [[o, z, z], [z, o, z], [z, z, o]] }
    }

    pub fn scaling(sx: T, sy: T) -> Self {
        let z = T::zero();
        Self { m: [[sx, z, z], [z, sy, z], [z, z, T::one()]] }
    }

    pub fn translation(tx: T, ty: T) -> Self {
        let (o, z) = (T::one(), T::zero());
        Self { m: [[o, z, tx], [z, o, ty], [z, z, o]] }
    }

    pub fn row_major(&self) -> [T; 9] {
        let m = &self.m;
        [m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2]]
    }

    pub fn determinant(&self) -> T {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn inverse(&self) -> Result<Self, GeometryError> {
        let m = &self.m;
        let det = self.determinant();
        if !(det.abs() > T::lit(DEGENERATE_EPS)) {
            return Err(GeometryError::Singular(det.to_f64_lossy()));
        }
        let cof = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
        let adj = [
            [cof(1, 2, 1, 2), -cof(0, 2, 1, 2), cof(0, 1, 1, 2)],
            [-cof(1, 2, 0, 2), cof(0, 2, 0, 2), -cof(0, 1, 0, 2)],
            [cof(1, 2, 0, 1), -cof(0, 2, 0, 1), cof(0, 1, 0, 1)],
        ];
        let mut out = [[T::zero(); 3]; 3];
        for (r, row) in adj.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                out[r][c] = *v / det;
            }
        }
        Ok(Self { m: out })
    }

    pub fn compose(&self, then: &Self) -> Self {
        // then * self
        let mut out = [[T::zero(); 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                out[r][c] = (0..3).fold(T::zero(), |acc, k| acc + then.m[r][k] * self.m[k][c]);
            }
        }
        Self { m: out }
    }

    /// Homogeneous transform followed by the perspective divide.
    pub fn apply(&self, p: &Point2<T>) -> Result<Point2<T>, GeometryError> {
        let m = &self.m;
        let x = m[0][0] * p.x + m[0][1] * p.y + m[0][2];
        let y = m[1][0] * p.x + m[1][1] * p.y + m[1][2];
        let w = m[2][0] * p.x + m[2][1] * p.y + m[2][2];
        if !(w.abs() >= T::lit(DEGENERATE_EPS)) {
            return Err(GeometryError::Degenerate(w.to_f64_lossy()));
        }
        Ok(Point2::new(x / w, y / w))
    }
}
