use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

/// A point of R^d, d <= 3. Coordinates beyond the ambient dimension are kept at zero,
/// so distances never need to know `d`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point(pub [f64; 3]);

impl Point {
    pub const ORIGIN: Point = Point([0.0; 3]);

    /// Builds a point from 1 to 3 coordinates.
    pub fn new(coords: &[f64]) -> Point {
        assert!(
            !coords.is_empty() && coords.len() <= 3,
            "point dimension must be 1..=3"
        );
        let mut c = [0.0; 3];
        c[..coords.len()].copy_from_slice(coords);
        Point(c)
    }

    pub fn xy(x: f64, y: f64) -> Point {
        Point([x, y, 0.0])
    }

    pub fn coords(&self, dim: usize) -> &[f64] {
        &self.0[..dim]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    pub fn dist2(&self, other: &Point) -> f64 {
        let dx = self.0[0] - other.0[0];
        let dy = self.0[1] - other.0[1];
        let dz = self.0[2] - other.0[2];
        dx * dx + dy * dy + dz * dz
    }

    pub fn dist(&self, other: &Point) -> f64 {
        self.dist2(other).sqrt()
    }

    pub fn norm(&self) -> f64 {
        self.dist(&Point::ORIGIN)
    }

    pub fn dot(&self, other: &Point) -> f64 {
        self.0[0] * other.0[0] + self.0[1] * other.0[1] + self.0[2] * other.0[2]
    }

    /// Closest point to `self` on the segment `[a, b]`.
    pub fn project_on_segment(&self, a: &Point, b: &Point) -> Point {
        let ab = *b - *a;
        let len2 = ab.dot(&ab);
        if len2 == 0.0 {
            return *a;
        }
        let t = ((*self - *a).dot(&ab) / len2).clamp(0.0, 1.0);
        *a + ab * t
    }

    /// Exact-equality key; `-0.0` and `0.0` map to the same key.
    pub(crate) fn bit_key(&self) -> [u64; 3] {
        self.0.map(|c| if c == 0.0 { 0u64 } else { c.to_bits() })
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point(self.0.map(|c| c * s))
    }
}

/// Diameter of a point set (quadratic scan).
pub fn diameter(pts: &[Point]) -> f64 {
    let mut best = 0.0f64;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            best = best.max(pts[i].dist2(&pts[j]));
        }
    }
    best.sqrt()
}
