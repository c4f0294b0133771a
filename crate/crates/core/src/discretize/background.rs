use crate::error::{QceError, Result};
use crate::geometry::{CellShape, Dim, Point, Polygon, Rect};

/// Uniform background grid: one node at the center of every cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Background {
    pub dim: Dim,
    pub rect: Rect,
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
}

/// A background cell addressed by quadtree level and integer position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QuadCell {
    pub level: u32,
    pub i: i64,
    pub j: i64,
}

pub fn generate_background(dim: Dim, rect: Rect, h: f64) -> Result<Background> {
    if !(h > 0.0) {
        return Err(QceError::InvalidArgument(format!("spacing must be positive, got {h}")));
    }
    let count = |len: f64, axis: &str| -> Result<usize> {
        let n = len / h;
        let r = n.round();
        if r < 1.0 || (n - r).abs() > 1e-9 * n.max(1.0) {
            return Err(QceError::GridMismatch(format!(
                "{axis} extent {len} is not a whole number of cells of size {h}"
            )));
        }
        Ok(r as usize)
    };
    let nx = count(rect.width(), "x")?;
    let ny = match dim {
        Dim::One => 1,
        Dim::Two => count(rect.height(), "y")?,
    };
    Ok(Background { dim, rect, h, nx, ny })
}

impl Background {
    pub fn cell_count(&self) -> usize {
        self.nx * self.ny
    }

    /// Level-0 cells in row-major order.
    pub fn root_cells(&self) -> Vec<QuadCell> {
        let mut out = Vec::with_capacity(self.cell_count());
        for j in 0..self.ny as i64 {
            for i in 0..self.nx as i64 {
                out.push(QuadCell { level: 0, i, j });
            }
        }
        out
    }

    pub fn cell_size(&self, level: u32) -> f64 {
        self.h / f64::from(1u32 << level)
    }

    /// Grid line coordinates at level 0 (used for outer boundary pieces).
    pub fn grid_lines(&self) -> (Vec<f64>, Vec<f64>) {
        let xs = (0..=self.nx).map(|i| self.x_at(0, i as i64)).collect();
        let ys = match self.dim {
            Dim::One => vec![0.0],
            Dim::Two => (0..=self.ny).map(|j| self.y_at(0, j as i64)).collect(),
        };
        (xs, ys)
    }

    fn x_at(&self, level: u32, i: i64) -> f64 {
        if level == 0 && i as usize == self.nx {
            return self.rect.hi.x;
        }
        self.rect.lo.x + i as f64 * self.cell_size(level)
    }

    fn y_at(&self, level: u32, j: i64) -> f64 {
        if level == 0 && j as usize == self.ny {
            return self.rect.hi.y;
        }
        self.rect.lo.y + j as f64 * self.cell_size(level)
    }

    /// Corner coordinates `(x0, x1, y0, y1)`; children share parent vertices exactly.
    pub fn bounds(&self, c: &QuadCell) -> (f64, f64, f64, f64) {
        let scale = 1i64 << c.level;
        let coord = |k: i64, n: usize, lo: f64, hi: f64| {
            if k == n as i64 * scale {
                hi
            } else {
                lo + k as f64 * self.cell_size(c.level)
            }
        };
        let x0 = coord(c.i, self.nx, self.rect.lo.x, self.rect.hi.x);
        let x1 = coord(c.i + 1, self.nx, self.rect.lo.x, self.rect.hi.x);
        match self.dim {
            Dim::One => (x0, x1, 0.0, 0.0),
            Dim::Two => {
                let y0 = coord(c.j, self.ny, self.rect.lo.y, self.rect.hi.y);
                let y1 = coord(c.j + 1, self.ny, self.rect.lo.y, self.rect.hi.y);
                (x0, x1, y0, y1)
            }
        }
    }

    pub fn center(&self, c: &QuadCell) -> Point {
        let (x0, x1, y0, y1) = self.bounds(c);
        Point::new(0.5 * (x0 + x1), 0.5 * (y0 + y1))
    }

    pub fn shape(&self, c: &QuadCell) -> CellShape {
        let (x0, x1, y0, y1) = self.bounds(c);
        match self.dim {
            Dim::One => CellShape::Interval { lo: x0, hi: x1 },
            Dim::Two => CellShape::Polygon(
                Polygon::new(vec![
                    Point::new(x0, y0),
                    Point::new(x1, y0),
                    Point::new(x1, y1),
                    Point::new(x0, y1),
                ])
                .expect("axis-aligned cell"),
            ),
        }
    }

    pub fn children(&self, c: &QuadCell) -> Vec<QuadCell> {
        let l = c.level + 1;
        match self.dim {
            Dim::One => vec![
                QuadCell { level: l, i: 2 * c.i, j: 0 },
                QuadCell { level: l, i: 2 * c.i + 1, j: 0 },
            ],
            Dim::Two => vec![
                QuadCell { level: l, i: 2 * c.i, j: 2 * c.j },
                QuadCell { level: l, i: 2 * c.i + 1, j: 2 * c.j },
                QuadCell { level: l, i: 2 * c.i + 1, j: 2 * c.j + 1 },
                QuadCell { level: l, i: 2 * c.i, j: 2 * c.j + 1 },
            ],
        }
    }
}
