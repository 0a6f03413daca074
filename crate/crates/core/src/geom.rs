//! Points, trap arrays, and the rectangular state space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist2(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn dist(&self, other: &Point) -> f64 {
        self.dist2(other).sqrt()
    }
}

/// Fixed detector locations. Trap indices are 0-based in code; the file
/// formats use 1-based ids.
#[derive(Debug, Clone, PartialEq)]
pub struct TrapArray {
    locations: Vec<Point>,
}

impl TrapArray {
    pub fn new(locations: Vec<Point>) -> Result<Self> {
        if locations.is_empty() {
            return Err(Error::invalid("trap array must contain at least one trap"));
        }
        for p in &locations {
            if !p.x.is_finite() || !p.y.is_finite() {
                return Err(Error::invalid("trap coordinates must be finite"));
            }
        }
        Ok(TrapArray { locations })
    }

    /// Square grid of `side x side` traps with the given spacing, lower-left
    /// corner at the origin, row-major order.
    pub fn grid(side: usize, spacing: f64) -> Result<Self> {
        if side == 0 {
            return Err(Error::invalid("trap grid side must be >= 1"));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::invalid(format!("trap spacing must be positive, got {spacing}")));
        }
        let mut locations = Vec::with_capacity(side * side);
        for iy in 0..side {
            for ix in 0..side {
                locations.push(Point::new(ix as f64 * spacing, iy as f64 * spacing));
            }
        }
        Ok(TrapArray { locations })
    }

    /// Square grid with unit spacing.
    pub fn unit_grid(side: usize) -> Result<Self> {
        Self::grid(side, 1.0)
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn get(&self, j: usize) -> Point {
        self.locations[j]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Point> {
        self.locations.iter()
    }

    pub fn as_slice(&self) -> &[Point] {
        &self.locations
    }
}

/// Axis-aligned rectangle on which activity centers live.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateSpace {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
}

impl StateSpace {
    pub fn new(xmin: f64, xmax: f64, ymin: f64, ymax: f64) -> Result<Self> {
        if !(xmin < xmax && ymin < ymax) {
            return Err(Error::invalid(format!(
                "degenerate state space: [{xmin}, {xmax}] x [{ymin}, {ymax}]"
            )));
        }
        Ok(StateSpace { xmin, xmax, ymin, ymax })
    }

    /// Bounding box of the traps expanded by `buffer` on every side. Every
    /// trap then lies strictly inside the rectangle.
    pub fn buffered(traps: &TrapArray, buffer: f64) -> Result<Self> {
        if !(buffer > 0.0) {
            return Err(Error::invalid(format!("buffer must be positive, got {buffer}")));
        }
        let mut xmin = f64::INFINITY;
        let mut xmax = f64::NEG_INFINITY;
        let mut ymin = f64::INFINITY;
        let mut ymax = f64::NEG_INFINITY;
        for p in traps.iter() {
            xmin = xmin.min(p.x);
            xmax = xmax.max(p.x);
            ymin = ymin.min(p.y);
            ymax = ymax.max(p.y);
        }
        StateSpace::new(xmin - buffer, xmax + buffer, ymin - buffer, ymax + buffer)
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.xmin && p.x <= self.xmax && p.y >= self.ymin && p.y <= self.ymax
    }

    pub fn area(&self) -> f64 {
        (self.xmax - self.xmin) * (self.ymax - self.ymin)
    }

    pub fn diagonal(&self) -> f64 {
        let dx = self.xmax - self.xmin;
        let dy = self.ymax - self.ymin;
        (dx * dx + dy * dy).sqrt()
    }

    pub fn sample_uniform<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let x = rng.random_range(self.xmin..=self.xmax);
        let y = rng.random_range(self.ymin..=self.ymax);
        Point::new(x, y)
    }
}
