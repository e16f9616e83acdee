use serde::{Deserialize, Serialize};

/// Largest supported spatial dimension.
pub const MAX_DIM: usize = 3;

/// Fixed-size point; components past the active dimension are zero.
pub type Point = [f64; MAX_DIM];

pub fn point(coords: &[f64]) -> Point {
    assert!(coords.len() <= MAX_DIM, "at most {MAX_DIM} coordinates");
    let mut p = [0.0; MAX_DIM];
    p[..coords.len()].copy_from_slice(coords);
    p
}

/// Axis-aligned closed box `[lo, hi]` in `dim` dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub dim: usize,
    pub lo: Point,
    pub hi: Point,
}

impl Rect {
    pub fn new(lo: &[f64], hi: &[f64]) -> Rect {
        assert_eq!(lo.len(), hi.len());
        Rect {
            dim: lo.len(),
            lo: point(lo),
            hi: point(hi),
        }
    }

    pub fn cube(dim: usize, side: f64) -> Rect {
        let mut hi = [0.0; MAX_DIM];
        hi[..dim].fill(side);
        Rect {
            dim,
            lo: [0.0; MAX_DIM],
            hi,
        }
    }

    pub fn centered(center: &[f64], width: f64) -> Rect {
        let dim = center.len();
        let mut r = Rect {
            dim,
            lo: [0.0; MAX_DIM],
            hi: [0.0; MAX_DIM],
        };
        for a in 0..dim {
            r.lo[a] = center[a] - 0.5 * width;
            r.hi[a] = center[a] + 0.5 * width;
        }
        r
    }

    pub fn center(&self) -> Point {
        let mut c = [0.0; MAX_DIM];
        for a in 0..self.dim {
            c[a] = 0.5 * (self.lo[a] + self.hi[a]);
        }
        c
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim)
            .map(|a| (self.hi[a] - self.lo[a]).max(0.0))
            .product()
    }

    /// Intersection with positive volume, if any.
    pub fn intersect(&self, other: &Rect) -> Option<Rect> {
        let mut r = *self;
        for a in 0..self.dim {
            r.lo[a] = self.lo[a].max(other.lo[a]);
            r.hi[a] = self.hi[a].min(other.hi[a]);
            if r.hi[a] <= r.lo[a] {
                return None;
            }
        }
        Some(r)
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        (0..self.dim).all(|a| other.lo[a] >= self.lo[a] && other.hi[a] <= self.hi[a])
    }

    /// All `2^dim` corners, ordered by bit pattern (bit `a` set means `hi` on axis `a`).
    pub fn corners(&self) -> Vec<Point> {
        (0..1usize << self.dim)
            .map(|mask| {
                let mut p = [0.0; MAX_DIM];
                for a in 0..self.dim {
                    p[a] = if mask >> a & 1 == 1 {
                        self.hi[a]
                    } else {
                        self.lo[a]
                    };
                }
                p
            })
            .collect()
    }

    /// Clamp a point into the box.
    pub fn clamp(&self, p: &Point) -> Point {
        let mut q = [0.0; MAX_DIM];
        for a in 0..self.dim {
            q[a] = p[a].clamp(self.lo[a], self.hi[a]);
        }
        q
    }
}
