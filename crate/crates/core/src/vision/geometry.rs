//! Computational geometry for melt-pool masks: minimum enclosing circle,
//! convex hull, and the per-frame descriptor set.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

use super::Mask;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Point {
        Point { x, y }
    }

    pub fn dist(&self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    pub center: Point,
    pub radius: f64,
}

impl Circle {
    fn from_diameter(a: Point, b: Point) -> Circle {
        let center = Point::new((a.x + b.x) / 2.0, (a.y + b.y) / 2.0);
        Circle {
            center,
            radius: center.dist(a).max(center.dist(b)),
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        self.center.dist(p) <= self.radius + 1e-10
    }
}

/// Circumcircle of three points; None when collinear. Coordinates are
/// re-centered before the determinant for numerical stability.
fn circumcircle(a: Point, b: Point, c: Point) -> Option<Circle> {
    let ox = (a.x.min(b.x).min(c.x) + a.x.max(b.x).max(c.x)) / 2.0;
    let oy = (a.y.min(b.y).min(c.y) + a.y.max(b.y).max(c.y)) / 2.0;
    let (ax, ay) = (a.x - ox, a.y - oy);
    let (bx, by) = (b.x - ox, b.y - oy);
    let (cx, cy) = (c.x - ox, c.y - oy);
    let d = 2.0 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by));
    if d == 0.0 {
        return None;
    }
    let x = ox
        + ((ax * ax + ay * ay) * (by - cy)
            + (bx * bx + by * by) * (cy - ay)
            + (cx * cx + cy * cy) * (ay - by))
            / d;
    let y = oy
        + ((ax * ax + ay * ay) * (cx - bx)
            + (bx * bx + by * by) * (ax - cx)
            + (cx * cx + cy * cy) * (bx - ax))
            / d;
    let center = Point::new(x, y);
    let radius = center.dist(a).max(center.dist(b)).max(center.dist(c));
    Some(Circle { center, radius })
}

/// Smallest circle containing all points, expected O(n) after a
/// deterministic seeded shuffle (move-to-front elimination).
pub fn min_enclosing_circle(points: &[Point]) -> Result<Circle> {
    if points.is_empty() {
        return Err(Error::InvalidInput(
            "minimum enclosing circle needs at least 1 point".into(),
        ));
    }
    let mut pts = points.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(0x4d45_4331);
    pts.shuffle(&mut rng);

    let mut circle: Option<Circle> = None;
    for i in 0..pts.len() {
        let p = pts[i];
        if circle.map_or(true, |c| !c.contains(p)) {
            circle = Some(circle_with_boundary_point(&pts[..=i], p));
        }
    }
    Ok(circle.unwrap())
}

fn circle_with_boundary_point(pts: &[Point], p: Point) -> Circle {
    let mut circle = Circle {
        center: p,
        radius: 0.0,
    };
    for (j, &q) in pts.iter().enumerate() {
        if circle.contains(q) {
            continue;
        }
        circle = if circle.radius == 0.0 {
            Circle::from_diameter(p, q)
        } else {
            circle_with_boundary_pair(&pts[..=j], p, q)
        };
    }
    circle
}

fn circle_with_boundary_pair(pts: &[Point], p: Point, q: Point) -> Circle {
    let base = Circle::from_diameter(p, q);
    let mut left: Option<Circle> = None;
    let mut right: Option<Circle> = None;
    for &r in pts {
        if base.contains(r) {
            continue;
        }
        let side = cross(p, q, r);
        let Some(c) = circumcircle(p, q, r) else {
            continue;
        };
        let center_side = cross(p, q, c.center);
        if side > 0.0 {
            if left.map_or(true, |l| center_side > cross(p, q, l.center)) {
                left = Some(c);
            }
        } else if side < 0.0 && right.map_or(true, |r| center_side < cross(p, q, r.center)) {
            right = Some(c);
        }
    }
    match (left, right) {
        (None, None) => base,
        (Some(l), None) => l,
        (None, Some(r)) => r,
        (Some(l), Some(r)) => {
            if l.radius <= r.radius {
                l
            } else {
                r
            }
        }
    }
}

/// Convex hull with its shoelace area. Fewer than 3 distinct non-collinear
/// points produce a flagged degenerate hull with zero area.
#[derive(Debug, Clone)]
pub struct Hull {
    /// Counter-clockwise vertex list (empty or partial when degenerate).
    pub vertices: Vec<Point>,
    pub area: f64,
    pub degenerate: bool,
}

/// Monotone-chain convex hull.
pub fn convex_hull(points: &[Point]) -> Hull {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup_by(|a, b| a.x == b.x && a.y == b.y);
    if pts.len() < 3 {
        return Hull {
            vertices: pts,
            area: 0.0,
            degenerate: true,
        };
    }
    let mut lower: Vec<Point> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    if lower.len() < 3 {
        return Hull {
            vertices: lower,
            area: 0.0,
            degenerate: true,
        };
    }
    let mut twice_area = 0.0;
    for i in 0..lower.len() {
        let a = lower[i];
        let b = lower[(i + 1) % lower.len()];
        twice_area += a.x * b.y - b.x * a.y;
    }
    Hull {
        area: twice_area.abs() / 2.0,
        vertices: lower,
        degenerate: false,
    }
}

/// Geometric descriptors of one segmented melt pool. Invalid frames carry
/// zeroed fields and are excluded from layer aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct MeltPoolGeometry {
    pub contour_area_um2: f64,
    pub circle_radius_um: f64,
    pub circle_area_um2: f64,
    pub core2circle_ratio: f64,
    pub convexity: f64,
    pub bbox_length_um: f64,
    pub bbox_width_um: f64,
    pub valid: bool,
}

impl MeltPoolGeometry {
    pub fn invalid() -> MeltPoolGeometry {
        MeltPoolGeometry {
            contour_area_um2: 0.0,
            circle_radius_um: 0.0,
            circle_area_um2: 0.0,
            core2circle_ratio: 0.0,
            convexity: 0.0,
            bbox_length_um: 0.0,
            bbox_width_um: 0.0,
            valid: false,
        }
    }
}

/// Corners of foreground pixels that touch background or the frame edge.
/// Hull and circle extremes always lie on these, so interior pixels can be
/// skipped wholesale.
fn boundary_corners(mask: &Mask) -> Vec<Point> {
    let (w, h) = (mask.width as isize, mask.height as isize);
    let at = |x: isize, y: isize| -> bool {
        x >= 0 && y >= 0 && x < w && y < h && mask.data[(y * w + x) as usize]
    };
    let mut corners: Vec<Point> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !at(x, y) {
                continue;
            }
            let mut is_boundary = false;
            'scan: for dy in -1..=1isize {
                for dx in -1..=1isize {
                    if (dx != 0 || dy != 0) && !at(x + dx, y + dy) {
                        is_boundary = true;
                        break 'scan;
                    }
                }
            }
            if is_boundary {
                let (xf, yf) = (x as f64, y as f64);
                corners.push(Point::new(xf, yf));
                corners.push(Point::new(xf + 1.0, yf));
                corners.push(Point::new(xf, yf + 1.0));
                corners.push(Point::new(xf + 1.0, yf + 1.0));
            }
        }
    }
    corners.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    corners.dedup_by(|a, b| a.x == b.x && a.y == b.y);
    corners
}

/// Compute the descriptor set for one mask.
///
/// The contour area is the foreground pixel count. Hull and circle run over
/// the corners of boundary pixels, i.e. over the union of pixel squares, so
/// both enclose the counted area and the two ratios stay in (0, 1]. The
/// oriented box takes its axes from the pixel-center covariance and its
/// extents from corner projections. Masks covering more than half the frame
/// cannot be a melt pool and are marked invalid.
pub fn melt_pool_geometry(mask: &Mask, pixel_size_um: f64) -> MeltPoolGeometry {
    debug_assert!(pixel_size_um > 0.0);
    let count = mask.foreground_count();
    if count < 3 || 2 * count > mask.width * mask.height {
        return MeltPoolGeometry::invalid();
    }

    let corners = boundary_corners(mask);
    let hull = convex_hull(&corners);
    if hull.degenerate || !(hull.area > 0.0) {
        return MeltPoolGeometry::invalid();
    }
    let circle = match min_enclosing_circle(&hull.vertices) {
        Ok(c) => c,
        Err(_) => return MeltPoolGeometry::invalid(),
    };

    // Principal axes from the pixel-center covariance.
    let n = count as f64;
    let mut sx = 0.0;
    let mut sy = 0.0;
    for (i, &fg) in mask.data.iter().enumerate() {
        if fg {
            sx += (i % mask.width) as f64 + 0.5;
            sy += (i / mask.width) as f64 + 0.5;
        }
    }
    let (mx, my) = (sx / n, sy / n);
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (i, &fg) in mask.data.iter().enumerate() {
        if fg {
            let dx = (i % mask.width) as f64 + 0.5 - mx;
            let dy = (i / mask.width) as f64 + 0.5 - my;
            sxx += dx * dx;
            syy += dy * dy;
            sxy += dx * dy;
        }
    }
    let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let (ct, st) = (theta.cos(), theta.sin());
    let mut min_u = f64::INFINITY;
    let mut max_u = f64::NEG_INFINITY;
    let mut min_v = f64::INFINITY;
    let mut max_v = f64::NEG_INFINITY;
    for p in &hull.vertices {
        let u = p.x * ct + p.y * st;
        let v = -p.x * st + p.y * ct;
        min_u = min_u.min(u);
        max_u = max_u.max(u);
        min_v = min_v.min(v);
        max_v = max_v.max(v);
    }
    let (e1, e2) = (max_u - min_u, max_v - min_v);

    let ps2 = pixel_size_um * pixel_size_um;
    let contour_area_um2 = count as f64 * ps2;
    let circle_radius_um = circle.radius * pixel_size_um;
    let circle_area_um2 = std::f64::consts::PI * circle_radius_um * circle_radius_um;
    let convex_area_um2 = hull.area * ps2;
    MeltPoolGeometry {
        contour_area_um2,
        circle_radius_um,
        circle_area_um2,
        core2circle_ratio: contour_area_um2 / circle_area_um2,
        convexity: contour_area_um2 / convex_area_um2,
        bbox_length_um: e1.max(e2) * pixel_size_um,
        bbox_width_um: e1.min(e2) * pixel_size_um,
        valid: true,
    }
}
