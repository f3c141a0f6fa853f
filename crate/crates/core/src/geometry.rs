//! Planar primitives and bounded Voronoi tessellation of a rectangle.
//!
//! Cells are bounded with the reflection technique: every agent is mirrored
//! across the four walls and the Voronoi cell of each original site is taken
//! in the extended point set. Each raw cell is then clipped against the
//! rectangle so that floating-point overshoot never leaves the region.

use std::cmp::Ordering;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance (m) for containment and coincidence tests.
pub const GEOMETRY_TOL: f64 = 1e-9;

/// Polygons with area below this (m²) are degenerate.
pub const MIN_POLYGON_AREA: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    #[inline]
    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 2-D cross product.
    #[inline]
    pub fn cross(self, other: Point) -> f64 {
        self.x * other.y - self.y * other.x
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn distance(self, other: Point) -> f64 {
        (self - other).norm()
    }

    /// Orders by x, then y.
    pub fn lexicographic_cmp(&self, other: &Point) -> Ordering {
        self.x
            .total_cmp(&other.x)
            .then_with(|| self.y.total_cmp(&other.y))
    }
}

impl Add for Point {
    type Output = Point;
    #[inline]
    fn add(self, rhs: Point) -> Point {
        Point::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point {
    type Output = Point;
    #[inline]
    fn sub(self, rhs: Point) -> Point {
        Point::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    #[inline]
    fn mul(self, rhs: f64) -> Point {
        Point::new(self.x * rhs, self.y * rhs)
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Point::new(x, y)
    }
}

/// Axis-aligned rectangle `[x_min, x_max] × [y_min, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Region {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        let finite = [x_min, x_max, y_min, y_max].iter().all(|v| v.is_finite());
        if !finite || x_min >= x_max || y_min >= y_max {
            return Err(Error::InvalidRegion {
                x_min,
                x_max,
                y_min,
                y_max,
            });
        }
        Ok(Self {
            x_min,
            x_max,
            y_min,
            y_max,
        })
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> Point {
        Point::new(
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.y_min + self.y_max),
        )
    }

    /// Corners in counterclockwise order starting at `(x_min, y_min)`.
    pub fn corners(&self) -> [Point; 4] {
        [
            Point::new(self.x_min, self.y_min),
            Point::new(self.x_max, self.y_min),
            Point::new(self.x_max, self.y_max),
            Point::new(self.x_min, self.y_max),
        ]
    }

    pub fn strictly_contains(&self, p: Point) -> bool {
        p.x > self.x_min && p.x < self.x_max && p.y > self.y_min && p.y < self.y_max
    }

    pub fn contains_with_tol(&self, p: Point, tol: f64) -> bool {
        p.x >= self.x_min - tol
            && p.x <= self.x_max + tol
            && p.y >= self.y_min - tol
            && p.y <= self.y_max + tol
    }

    pub fn to_polygon(&self) -> Polygon {
        Polygon {
            vertices: self.corners().to_vec(),
        }
    }
}

/// Counterclockwise polygon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    vertices: Vec<Point>,
}

impl Polygon {
    /// Builds a polygon from vertices already in counterclockwise order.
    pub fn new(vertices: Vec<Point>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::DegeneratePolygon(format!(
                "{} vertices, need at least 3",
                vertices.len()
            )));
        }
        if let Some(p) = vertices.iter().find(|p| !p.is_finite()) {
            return Err(Error::NonFinitePoint { x: p.x, y: p.y });
        }
        let signed = signed_area(&vertices);
        if signed < MIN_POLYGON_AREA {
            return Err(Error::DegeneratePolygon(format!(
                "signed area {signed:e} (clockwise or collinear)"
            )));
        }
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// True when `p` is inside or within `tol` of this convex polygon.
    pub fn contains_convex(&self, p: Point, tol: f64) -> bool {
        self.edges().all(|(a, b)| {
            let edge = b - a;
            let len = edge.norm();
            len == 0.0 || edge.cross(p - a) / len >= -tol
        })
    }

    /// Smallest cross product of consecutive edges, normalised by edge lengths.
    pub fn min_turn(&self) -> f64 {
        let n = self.vertices.len();
        (0..n)
            .map(|i| {
                let a = self.vertices[i];
                let b = self.vertices[(i + 1) % n];
                let c = self.vertices[(i + 2) % n];
                let (e1, e2) = (b - a, c - b);
                e1.cross(e2) / (e1.norm() * e2.norm()).max(f64::MIN_POSITIVE)
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn bounding_box(&self) -> (Point, Point) {
        let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in &self.vertices {
            lo.x = lo.x.min(v.x);
            lo.y = lo.y.min(v.y);
            hi.x = hi.x.max(v.x);
            hi.y = hi.y.max(v.y);
        }
        (lo, hi)
    }
}

/// Index-aligned bounded Voronoi cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tessellation {
    pub cells: Vec<Polygon>,
}

fn signed_area(vertices: &[Point]) -> f64 {
    let n = vertices.len();
    let mut twice = 0.0;
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        twice += a.x * b.y - b.x * a.y;
    }
    0.5 * twice
}

/// Shoelace area.
pub fn polygon_area(poly: &Polygon) -> Result<f64> {
    let area = signed_area(poly.vertices()).abs();
    if area < MIN_POLYGON_AREA {
        return Err(Error::DegeneratePolygon(format!("area {area:e}")));
    }
    Ok(area)
}

/// Area-weighted centroid of a uniform-density polygon.
pub fn polygon_centroid_uniform(poly: &Polygon) -> Result<Point> {
    let v = poly.vertices();
    let n = v.len();
    // Shift to the first vertex to limit cancellation for far-off polygons.
    let origin = v[0];
    let (mut twice_area, mut cx, mut cy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let a = v[i] - origin;
        let b = v[(i + 1) % n] - origin;
        let w = a.cross(b);
        twice_area += w;
        cx += (a.x + b.x) * w;
        cy += (a.y + b.y) * w;
    }
    if 0.5 * twice_area.abs() < MIN_POLYGON_AREA {
        return Err(Error::DegeneratePolygon(format!(
            "area {:e}",
            0.5 * twice_area.abs()
        )));
    }
    let scale = 1.0 / (3.0 * twice_area);
    Ok(Point::new(origin.x + cx * scale, origin.y + cy * scale))
}

/// Orders the vertices of a convex polygon counterclockwise about their mean,
/// starting at the lexicographically smallest vertex.
pub fn canonicalize_ccw(vertices: &[Point]) -> Result<Polygon> {
    if let Some(p) = vertices.iter().find(|p| !p.is_finite()) {
        return Err(Error::NonFinitePoint { x: p.x, y: p.y });
    }
    let scale = vertices
        .iter()
        .map(|p| p.x.abs().max(p.y.abs()))
        .fold(1.0, f64::max);
    let merge_tol = 1e-12 * scale;

    let mut unique: Vec<Point> = Vec::with_capacity(vertices.len());
    for &p in vertices {
        if !unique.iter().any(|q| (p - *q).norm() <= merge_tol) {
            unique.push(p);
        }
    }
    if unique.len() < 3 {
        return Err(Error::DegeneratePolygon(format!(
            "{} distinct vertices",
            unique.len()
        )));
    }

    let n = unique.len() as f64;
    let mean = unique.iter().fold(Point::ORIGIN, |acc, &p| acc + p) * (1.0 / n);
    unique.sort_by(|a, b| {
        let ta = (a.y - mean.y).atan2(a.x - mean.x);
        let tb = (b.y - mean.y).atan2(b.x - mean.x);
        ta.total_cmp(&tb)
    });
    let start = unique
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a.lexicographic_cmp(b))
        .map(|(i, _)| i)
        .unwrap_or(0);
    unique.rotate_left(start);

    // Drop vertices that lie on the segment between their neighbours.
    let mut i = 0;
    while unique.len() > 3 && i < unique.len() {
        let m = unique.len();
        let prev = unique[(i + m - 1) % m];
        let cur = unique[i];
        let next = unique[(i + 1) % m];
        let e1 = cur - prev;
        let e2 = next - cur;
        let denom = (e1.norm() * e2.norm()).max(f64::MIN_POSITIVE);
        if (e1.cross(e2) / denom).abs() < 1e-12 && e1.dot(e2) > 0.0 {
            unique.remove(i);
            if i == 0 {
                let s = unique
                    .iter()
                    .enumerate()
                    .min_by(|(_, a), (_, b)| a.lexicographic_cmp(b))
                    .map(|(k, _)| k)
                    .unwrap_or(0);
                unique.rotate_left(s);
            }
        } else {
            i += 1;
        }
    }

    Polygon::new(unique)
}

/// Mirror images of every position across the four walls, in blocks
/// `[left.., right.., bottom.., top..]`, each index-aligned with the input.
pub fn reflect_points(positions: &[Point], region: &Region) -> Result<Vec<Point>> {
    check_inside(positions, region)?;
    let mut out = Vec::with_capacity(4 * positions.len());
    out.extend(
        positions
            .iter()
            .map(|p| Point::new(2.0 * region.x_min - p.x, p.y)),
    );
    out.extend(
        positions
            .iter()
            .map(|p| Point::new(2.0 * region.x_max - p.x, p.y)),
    );
    out.extend(
        positions
            .iter()
            .map(|p| Point::new(p.x, 2.0 * region.y_min - p.y)),
    );
    out.extend(
        positions
            .iter()
            .map(|p| Point::new(p.x, 2.0 * region.y_max - p.y)),
    );
    Ok(out)
}

fn check_inside(positions: &[Point], region: &Region) -> Result<()> {
    for (index, &p) in positions.iter().enumerate() {
        if !p.is_finite() {
            return Err(Error::NonFinitePoint { x: p.x, y: p.y });
        }
        if !region.strictly_contains(p) {
            return Err(Error::PositionOutsideRegion { index, position: p });
        }
    }
    Ok(())
}

/// Rejects positions that coincide within [`GEOMETRY_TOL`].
pub fn check_distinct(positions: &[Point]) -> Result<()> {
    for i in 0..positions.len() {
        for j in (i + 1)..positions.len() {
            if positions[i].distance(positions[j]) <= GEOMETRY_TOL {
                return Err(Error::DuplicateAgents {
                    first: i,
                    second: j,
                    tolerance: GEOMETRY_TOL,
                });
            }
        }
    }
    Ok(())
}

/// Keeps the part of `poly` where `(q - origin) · normal <= 0`.
fn clip_halfplane(poly: &[Point], origin: Point, normal: Point, out: &mut Vec<Point>) {
    out.clear();
    let n = poly.len();
    if n == 0 {
        return;
    }
    let side = |p: Point| (p - origin).dot(normal);
    let mut prev = poly[n - 1];
    let mut prev_side = side(prev);
    for &cur in poly {
        let cur_side = side(cur);
        let prev_in = prev_side <= 0.0;
        let cur_in = cur_side <= 0.0;
        if cur_in != prev_in {
            let t = prev_side / (prev_side - cur_side);
            out.push(prev + (cur - prev) * t);
        }
        if cur_in {
            out.push(cur);
        }
        prev = cur;
        prev_side = cur_side;
    }
}

/// Clips a convex polygon to an axis-aligned rectangle, snapping the result
/// onto the walls.
fn clip_to_region(poly: &[Point], region: &Region) -> Vec<Point> {
    let walls = [
        (Point::new(region.x_min, 0.0), Point::new(-1.0, 0.0)),
        (Point::new(region.x_max, 0.0), Point::new(1.0, 0.0)),
        (Point::new(0.0, region.y_min), Point::new(0.0, -1.0)),
        (Point::new(0.0, region.y_max), Point::new(0.0, 1.0)),
    ];
    let mut current = poly.to_vec();
    let mut scratch = Vec::with_capacity(poly.len() + 4);
    for (origin, normal) in walls {
        clip_halfplane(&current, origin, normal, &mut scratch);
        std::mem::swap(&mut current, &mut scratch);
    }
    for p in &mut current {
        p.x = p.x.clamp(region.x_min, region.x_max);
        p.y = p.y.clamp(region.y_min, region.y_max);
    }
    current
}

/// Voronoi cells of the original sites in the reflected point set, each
/// clipped to `region` and returned in canonical counterclockwise order.
pub fn bounded_voronoi(positions: &[Point], region: &Region) -> Result<Tessellation> {
    if positions.is_empty() {
        return Err(Error::InvalidParameter(
            "bounded_voronoi needs at least one position".into(),
        ));
    }
    let reflections = reflect_points(positions, region)?;
    check_distinct(positions)?;

    if positions.len() == 1 {
        return Ok(Tessellation {
            cells: vec![region.to_polygon()],
        });
    }

    let sites: Vec<Point> = positions.iter().chain(&reflections).copied().collect();

    // Every raw cell lies inside the region grown by its own size on each side.
    let (w, h) = (region.width(), region.height());
    let outer = [
        Point::new(region.x_min - w, region.y_min - h),
        Point::new(region.x_max + w, region.y_min - h),
        Point::new(region.x_max + w, region.y_max + h),
        Point::new(region.x_min - w, region.y_max + h),
    ];

    let mut cells = Vec::with_capacity(positions.len());
    let mut current = Vec::with_capacity(16);
    let mut scratch = Vec::with_capacity(16);
    for (i, &p) in positions.iter().enumerate() {
        current.clear();
        current.extend_from_slice(&outer);
        for (j, &s) in sites.iter().enumerate() {
            if j == i {
                continue;
            }
            let mid = (p + s) * 0.5;
            clip_halfplane(&current, mid, s - p, &mut scratch);
            std::mem::swap(&mut current, &mut scratch);
        }
        let clipped = clip_to_region(&current, region);
        let cell = canonicalize_ccw(&clipped).map_err(|e| {
            Error::DegeneratePolygon(format!("cell of agent {i} at ({}, {}): {e}", p.x, p.y))
        })?;
        cells.push(cell);
    }
    Ok(Tessellation { cells })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square() -> Polygon {
        Polygon::new(vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ])
        .unwrap()
    }

    #[test]
    fn reflections_follow_wall_formulas() {
        let region = Region::new(0.0, 4.0, 0.0, 4.0).unwrap();
        let r = reflect_points(&[Point::new(1.0, 2.0)], &region).unwrap();
        assert_eq!(r[0], Point::new(-1.0, 2.0));

        let unit = Region::new(0.0, 1.0, 0.0, 1.0).unwrap();
        let r = reflect_points(&[Point::new(0.5, 0.5)], &unit).unwrap();
        assert_eq!(
            r,
            vec![
                Point::new(-0.5, 0.5),
                Point::new(1.5, 0.5),
                Point::new(0.5, -0.5),
                Point::new(0.5, 1.5)
            ]
        );

        let sarasota = Region::new(-225.0, 325.0, -225.0, 225.0).unwrap();
        let r = reflect_points(&[Point::new(-220.0, -140.0)], &sarasota).unwrap();
        assert_eq!(r[1], Point::new(870.0, -140.0));
    }

    #[test]
    fn reflections_are_block_ordered() {
        let region = Region::new(0.0, 10.0, 0.0, 10.0).unwrap();
        let pts = [
            Point::new(1.0, 2.0),
            Point::new(3.0, 4.0),
            Point::new(5.0, 6.0),
        ];
        let r = reflect_points(&pts, &region).unwrap();
        assert_eq!(r.len(), 12);
        assert_eq!(r[1], Point::new(-3.0, 4.0));
        assert_eq!(r[4], Point::new(17.0, 4.0));
        assert_eq!(r[8], Point::new(5.0, -6.0));
        assert_eq!(r[11], Point::new(5.0, 14.0));
    }

    #[test]
    fn boundary_agent_is_rejected() {
        let region = Region::new(0.0, 1.0, 0.0, 1.0).unwrap();
        let err = reflect_points(&[Point::new(0.0, 0.5)], &region).unwrap_err();
        assert!(matches!(err, Error::PositionOutsideRegion { index: 0, .. }));
        let err =
            bounded_voronoi(&[Point::new(0.5, 0.5), Point::new(2.0, 0.5)], &region).unwrap_err();
        assert!(matches!(err, Error::PositionOutsideRegion { index: 1, .. }));
    }

    #[test]
    fn duplicates_are_rejected() {
        let region = Region::new(0.0, 1.0, 0.0, 1.0).unwrap();
        let p = Point::new(0.3, 0.3);
        let err = bounded_voronoi(&[p, Point::new(0.7, 0.7), p], &region).unwrap_err();
        assert_eq!(
            err,
            Error::DuplicateAgents {
                first: 0,
                second: 2,
                tolerance: GEOMETRY_TOL
            }
        );
    }

    #[test]
    fn invalid_region_rejected() {
        assert!(Region::new(1.0, 1.0, 0.0, 1.0).is_err());
        assert!(Region::new(0.0, 1.0, 2.0, 1.0).is_err());
        assert!(Region::new(0.0, f64::NAN, 0.0, 1.0).is_err());
    }

    #[test]
    fn single_agent_gets_whole_region() {
        let region = Region::new(-2.0, 3.0, -1.0, 4.0).unwrap();
        let t = bounded_voronoi(&[Point::new(0.1, 0.2)], &region).unwrap();
        assert_eq!(t.cells.len(), 1);
        assert_eq!(t.cells[0].vertices(), &region.corners());
    }

    #[test]
    fn two_agents_split_at_bisector() {
        let region = Region::new(-2.0, 2.0, -1.0, 1.0).unwrap();
        let t = bounded_voronoi(&[Point::new(-1.0, 0.0), Point::new(1.0, 0.0)], &region).unwrap();
        let left = t.cells[0].vertices();
        let right = t.cells[1].vertices();
        let approx = |a: &[Point], b: &[Point]| {
            a.len() == b.len() && a.iter().zip(b).all(|(p, q)| p.distance(*q) < 1e-12)
        };
        assert!(approx(
            left,
            &[
                Point::new(-2.0, -1.0),
                Point::new(0.0, -1.0),
                Point::new(0.0, 1.0),
                Point::new(-2.0, 1.0)
            ]
        ));
        assert!(approx(
            right,
            &[
                Point::new(0.0, -1.0),
                Point::new(2.0, -1.0),
                Point::new(2.0, 1.0),
                Point::new(0.0, 1.0)
            ]
        ));
        assert!((polygon_area(&t.cells[0]).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn shoelace_examples() {
        assert_eq!(polygon_area(&unit_square()).unwrap(), 1.0);
        let tri = Polygon::new(vec![
            Point::new(0.0, 0.0),
            Point::new(2.0, 0.0),
            Point::new(0.0, 2.0),
        ])
        .unwrap();
        assert_eq!(polygon_area(&tri).unwrap(), 2.0);
        let sarasota = Region::new(-225.0, 325.0, -225.0, 225.0).unwrap();
        assert_eq!(polygon_area(&sarasota.to_polygon()).unwrap(), 247_500.0);
    }

    #[test]
    fn uniform_centroids() {
        let c = polygon_centroid_uniform(&unit_square()).unwrap();
        assert!(c.distance(Point::new(0.5, 0.5)) < 1e-15);
        let tri = Polygon::new(vec![
            Point::new(0.0, 0.0),
            Point::new(3.0, 0.0),
            Point::new(0.0, 3.0),
        ])
        .unwrap();
        let c = polygon_centroid_uniform(&tri).unwrap();
        assert!(c.distance(Point::new(1.0, 1.0)) < 1e-14);
        // regular hexagon about (5, -2)
        let hex: Vec<Point> = (0..6)
            .map(|k| {
                let t = std::f64::consts::PI / 3.0 * k as f64;
                Point::new(5.0 + 2.0 * t.cos(), -2.0 + 2.0 * t.sin())
            })
            .collect();
        let c = polygon_centroid_uniform(&Polygon::new(hex).unwrap()).unwrap();
        assert!(c.distance(Point::new(5.0, -2.0)) < 1e-12);
    }

    #[test]
    fn degenerate_polygons() {
        assert!(Polygon::new(vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0)]).is_err());
        let collinear = [
            Point::new(0.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(2.0, 2.0),
        ];
        assert!(matches!(
            canonicalize_ccw(&collinear),
            Err(Error::DegeneratePolygon(_))
        ));
        // clockwise input is not a valid polygon
        assert!(Polygon::new(vec![
            Point::new(0.0, 0.0),
            Point::new(0.0, 1.0),
            Point::new(1.0, 0.0)
        ])
        .is_err());
    }

    #[test]
    fn canonical_order_of_shuffled_square() {
        let shuffled = [
            Point::new(1.0, 1.0),
            Point::new(0.0, 0.0),
            Point::new(0.0, 1.0),
            Point::new(1.0, 0.0),
        ];
        let p = canonicalize_ccw(&shuffled).unwrap();
        assert_eq!(p.vertices(), unit_square().vertices());
    }

    #[test]
    fn canonical_rotation_of_ccw_triangle() {
        let tri = [
            Point::new(2.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 0.5),
        ];
        let p = canonicalize_ccw(&tri).unwrap();
        assert_eq!(
            p.vertices(),
            &[
                Point::new(0.0, 0.5),
                Point::new(2.0, 0.0),
                Point::new(1.0, 1.0)
            ]
        );
    }

    #[test]
    fn canonical_order_matches_atan2_sort_on_circle() {
        let angles = [0.3_f64, 2.9, 4.4, 1.1, 5.7, 3.6];
        let pts: Vec<Point> = angles
            .iter()
            .map(|t| Point::new(1.0 + t.cos(), 2.0 + t.sin()))
            .collect();
        let p = canonicalize_ccw(&pts).unwrap();

        // oracle: sort by angle about the circle centre, rotate to lexicographic min
        let mut expected = pts.clone();
        expected.sort_by(|a, b| {
            (a.y - 2.0)
                .atan2(a.x - 1.0)
                .total_cmp(&(b.y - 2.0).atan2(b.x - 1.0))
        });
        let start = (0..expected.len())
            .min_by(|&i, &j| expected[i].lexicographic_cmp(&expected[j]))
            .unwrap();
        expected.rotate_left(start);
        assert_eq!(p.vertices(), expected.as_slice());
    }

    #[test]
    fn four_symmetric_agents_get_equal_quadrants() {
        let region = Region::new(-1.0, 1.0, -1.0, 1.0).unwrap();
        let pts = [
            Point::new(-0.5, -0.5),
            Point::new(0.5, -0.5),
            Point::new(0.5, 0.5),
            Point::new(-0.5, 0.5),
        ];
        let t = bounded_voronoi(&pts, &region).unwrap();

        // brute-force nearest-site classification on a 1000 × 1000 grid
        let res = 1000;
        let mut counts = [0usize; 4];
        for ix in 0..res {
            for iy in 0..res {
                let q = Point::new(
                    -1.0 + 2.0 * (ix as f64 + 0.5) / res as f64,
                    -1.0 + 2.0 * (iy as f64 + 0.5) / res as f64,
                );
                let nearest = (0..4)
                    .min_by(|&a, &b| q.distance(pts[a]).total_cmp(&q.distance(pts[b])))
                    .unwrap();
                counts[nearest] += 1;
            }
        }
        for (cell, count) in t.cells.iter().zip(counts) {
            let oracle = 4.0 * count as f64 / (res * res) as f64;
            let area = polygon_area(cell).unwrap();
            assert!((area - oracle).abs() / oracle < 5e-3, "{area} vs {oracle}");
            assert!((area - 1.0).abs() < 1e-12);
        }
    }
}
