use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Uniform bucket grid over a set of points, used to enumerate pairs within a
/// radius without scanning every pair.
#[derive(Debug)]
pub struct SpatialGrid {
    cell: f64,
    cols: usize,
    rows: usize,
    buckets: Vec<Vec<usize>>,
}

impl SpatialGrid {
    /// `cell` should be at least the largest query radius.
    pub fn build(points: impl IntoIterator<Item = Point>, width: f64, height: f64, cell: f64) -> Self {
        let cell = cell.max(1e-6);
        let cols = ((width / cell).ceil() as usize).max(1);
        let rows = ((height / cell).ceil() as usize).max(1);
        let mut buckets = vec![Vec::new(); cols * rows];
        for (i, p) in points.into_iter().enumerate() {
            let (cx, cy) = Self::cell_of(p, cell, cols, rows);
            buckets[cy * cols + cx].push(i);
        }
        Self { cell, cols, rows, buckets }
    }

    fn cell_of(p: Point, cell: f64, cols: usize, rows: usize) -> (usize, usize) {
        let cx = ((p.x / cell).floor().max(0.0) as usize).min(cols - 1);
        let cy = ((p.y / cell).floor().max(0.0) as usize).min(rows - 1);
        (cx, cy)
    }

    /// Indices of all points in cells that may lie within `radius` of `p`,
    /// in ascending order. Callers still test the exact distance.
    pub fn candidates(&self, p: Point, radius: f64) -> Vec<usize> {
        let span = (radius / self.cell).ceil() as isize;
        let (cx, cy) = Self::cell_of(p, self.cell, self.cols, self.rows);
        let mut out = Vec::new();
        for dy in -span..=span {
            let y = cy as isize + dy;
            if y < 0 || y >= self.rows as isize {
                continue;
            }
            for dx in -span..=span {
                let x = cx as isize + dx;
                if x < 0 || x >= self.cols as isize {
                    continue;
                }
                out.extend_from_slice(&self.buckets[y as usize * self.cols + x as usize]);
            }
        }
        out.sort_unstable();
        out
    }
}

/// All index pairs `(a, b)` with `a < b` and distance at most `radius`,
/// sorted. Sweeps along x, so it needs no grid allocation.
pub fn pairs_within(points: &[Point], radius: f64) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].x.total_cmp(&points[b].x).then(a.cmp(&b)));
    let mut out = Vec::new();
    for (i, &a) in order.iter().enumerate() {
        for &b in &order[i + 1..] {
            if points[b].x - points[a].x > radius {
                break;
            }
            if points[a].distance(&points[b]) <= radius {
                out.push((a.min(b), a.max(b)));
            }
        }
    }
    out.sort_unstable();
    out
}
