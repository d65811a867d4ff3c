use std::cmp::Ordering;

use super::Point2;
use crate::scalar::Scalar;

fn cross<T: Scalar>(o: &Point2<T>, a: &Point2<T>, b: &Point2<T>) -> T {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn lex<T: Scalar>(a: &Point2<T>, b: &Point2<T>) -> Ordering {
    a.x.partial_cmp(&b.x)
        .unwrap_or(Ordering::Equal)
        .then(a.y.partial_cmp(&b.y).unwrap_or(Ordering::Equal))
}

/// Signed shoelace area (positive for counter-clockwise rings).
pub fn signed_area<T: Scalar>(poly: &[Point2<T>]) -> T {
    let n = poly.len();
    if n < 3 {
        return T::zero();
    }
    let mut acc = T::zero();
    for i in 0..n {
        let (a, b) = (&poly[i], &poly[(i + 1) % n]);
        acc = acc + (a.x * b.y - b.x * a.y);
    }
    acc / T::lit(2.0)
}

pub fn polygon_area<T: Scalar>(poly: &[Point2<T>]) -> T {
    signed_area(poly).abs()
}

/// Even-odd ray casting; boundary points may land on either side.
pub fn point_in_polygon<T: Scalar>(p: &Point2<T>, poly: &[Point2<T>]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (&poly[i], &poly[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x_cross = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
            if p.x < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Euclidean distance from `p` to the closed segment `ab`.
///
/// The endpoints are put in lexicographic order first so the result is
/// bit-identical for `ab` and `ba`.
pub fn point_segment_distance<T: Scalar>(p: &Point2<T>, a: &Point2<T>, b: &Point2<T>) -> T {
    let (a, b) = if lex(a, b) == Ordering::Greater { (b, a) } else { (a, b) };
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let len2 = dx * dx + dy * dy;
    if len2 <= T::zero() {
        return p.distance(a);
    }
    let s = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).max(T::zero()).min(T::one());
    p.distance(&Point2::new(a.x + dx * s, a.y + dy * s))
}

fn on_segment<T: Scalar>(a: &Point2<T>, b: &Point2<T>, p: &Point2<T>) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Closed segment intersection test.
pub fn segments_intersect<T: Scalar>(p1: &Point2<T>, p2: &Point2<T>, q1: &Point2<T>, q2: &Point2<T>) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    let z = T::zero();
    if ((d1 > z && d2 < z) || (d1 < z && d2 > z)) && ((d3 > z && d4 < z) || (d3 < z && d4 > z)) {
        return true;
    }
    (d1 == z && on_segment(q1, q2, p1))
        || (d2 == z && on_segment(q1, q2, p2))
        || (d3 == z && on_segment(p1, p2, q1))
        || (d4 == z && on_segment(p1, p2, q2))
}

/// Whether the segment `ab` touches the polygon (crosses an edge or lies inside it).
///
/// Endpoint order is canonicalised, so the answer is symmetric in `a`, `b`.
pub fn segment_hits_polygon<T: Scalar>(a: &Point2<T>, b: &Point2<T>, poly: &[Point2<T>]) -> bool {
    let (a, b) = if lex(a, b) == Ordering::Greater { (b, a) } else { (a, b) };
    let n = poly.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        if segments_intersect(a, b, &poly[i], &poly[(i + 1) % n]) {
            return true;
        }
    }
    point_in_polygon(&a.lerp(b, T::lit(0.5)), poly)
}

/// Andrew's monotone chain; counter-clockwise, no repeated or collinear points.
pub fn convex_hull<T: Scalar>(points: &[Point2<T>]) -> Vec<Point2<T>> {
    let mut pts: Vec<Point2<T>> = points.to_vec();
    pts.sort_by(lex);
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<Point2<T>> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= T::zero() {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<Point2<T>> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= T::zero() {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

pub fn is_convex<T: Scalar>(poly: &[Point2<T>]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    let mut sign = 0i8;
    for i in 0..n {
        let c = cross(&poly[i], &poly[(i + 1) % n], &poly[(i + 2) % n]);
        let s = if c > T::zero() {
            1
        } else if c < T::zero() {
            -1
        } else {
            0
        };
        if s != 0 {
            if sign != 0 && s != sign {
                return false;
            }
            sign = s;
        }
    }
    sign != 0
}

/// Non-adjacent edges never meet and the ring has nonzero area.
pub fn is_simple<T: Scalar>(poly: &[Point2<T>]) -> bool {
    let n = poly.len();
    if n < 3 || polygon_area(poly) <= T::zero() {
        return false;
    }
    for i in 0..n {
        let (a1, a2) = (&poly[i], &poly[(i + 1) % n]);
        if a1 == a2 {
            return false;
        }
        for j in (i + 1)..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            if segments_intersect(a1, a2, &poly[j], &poly[(j + 1) % n]) {
                return false;
            }
        }
    }
    true
}

fn ccw<T: Scalar>(poly: &[Point2<T>]) -> Vec<Point2<T>> {
    let mut v = poly.to_vec();
    if signed_area(&v) < T::zero() {
        v.reverse();
    }
    v
}

/// Sutherland-Hodgman clip of one convex polygon by another; returns the overlap area.
pub fn convex_intersection_area<T: Scalar>(subject: &[Point2<T>], clip: &[Point2<T>]) -> T {
    let clip = ccw(clip);
    let mut output = ccw(subject);
    let n = clip.len();
    for i in 0..n {
        if output.is_empty() {
            break;
        }
        let (c1, c2) = (clip[i], clip[(i + 1) % n]);
        let input = std::mem::take(&mut output);
        let inside = |p: &Point2<T>| cross(&c1, &c2, p) >= T::zero();
        let intersect = |p: &Point2<T>, q: &Point2<T>| {
            let a1 = cross(&c1, &c2, p);
            let a2 = cross(&c1, &c2, q);
            p.lerp(q, a1 / (a1 - a2))
        };
        for k in 0..input.len() {
            let cur = input[k];
            let prev = input[(k + input.len() - 1) % input.len()];
            match (inside(&cur), inside(&prev)) {
                (true, true) => output.push(cur),
                (true, false) => {
                    output.push(intersect(&prev, &cur));
                    output.push(cur);
                }
                (false, true) => output.push(intersect(&prev, &cur)),
                (false, false) => {}
            }
        }
    }
    polygon_area(&output)
}

/// Raster cells per axis used when either polygon is non-convex.
const RASTER_CELLS: usize = 400;

/// Area intersection-over-union of two simple polygons.
///
/// Exact for convex inputs; non-convex inputs fall back to a midpoint raster
/// over the joint bounding box.
pub fn polygon_iou<T: Scalar>(a: &[Point2<T>], b: &[Point2<T>]) -> T {
    let (area_a, area_b) = (polygon_area(a), polygon_area(b));
    if area_a <= T::zero() || area_b <= T::zero() {
        return T::zero();
    }
    let inter = if is_convex(a) && is_convex(b) {
        convex_intersection_area(a, b)
    } else {
        raster_intersection_area(a, b)
    };
    let union = area_a + area_b - inter;
    if union <= T::zero() {
        return T::zero();
    }
    (inter / union).max(T::zero()).min(T::one())
}

fn raster_intersection_area<T: Scalar>(a: &[Point2<T>], b: &[Point2<T>]) -> T {
    let all = a.iter().chain(b.iter());
    let (mut x0, mut y0, mut x1, mut y1) = (T::infinity(), T::infinity(), T::neg_infinity(), T::neg_infinity());
    for p in all {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    let cells = T::lit(RASTER_CELLS as f64);
    let (dx, dy) = ((x1 - x0) / cells, (y1 - y0) / cells);
    let half = T::lit(0.5);
    let mut hits = 0usize;
    for i in 0..RASTER_CELLS {
        for j in 0..RASTER_CELLS {
            let p = Point2::new(
                x0 + dx * (T::lit(i as f64) + half),
                y0 + dy * (T::lit(j as f64) + half),
            );
            if point_in_polygon(&p, a) && point_in_polygon(&p, b) {
                hits += 1;
            }
        }
    }
    T::lit(hits as f64) * dx * dy
}
