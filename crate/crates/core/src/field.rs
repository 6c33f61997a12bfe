//! The bilinear interpolant of a [`ScalarGrid`] and its critical points.
//!
//! Cell `(i, j)` spans `[i, i+1] x [j, j+1]` in image coordinates, with `x`
//! growing along a row and `y` growing down the rows. Inside a cell the
//! field is `a + b*u + c*v + d*u*v` in local coordinates `(u, v)`.

use std::cmp::Ordering;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::ScalarGrid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellCoefficients {
    pub cell: (usize, usize),
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl CellCoefficients {
    #[inline]
    pub fn eval_local(&self, u: f64, v: f64) -> f64 {
        self.a + self.b * u + self.c * v + self.d * u * v
    }

    /// Local position and value of the hyperbolic centre, if `d != 0`.
    pub fn center(&self) -> Option<(f64, f64, f64)> {
        if self.d == 0.0 {
            return None;
        }
        let u = -self.c / self.d;
        let v = -self.b / self.d;
        Some((u, v, self.a - self.b * self.c / self.d))
    }

    /// The saddle strictly inside the cell, if there is one.
    pub fn interior_saddle(&self) -> Option<(f64, f64, f64)> {
        self.center()
            .filter(|&(u, v, _)| u > 0.0 && u < 1.0 && v > 0.0 && v < 1.0)
    }
}

/// Read-only view of a grid as a continuous function.
#[derive(Debug, Clone, Copy)]
pub struct BilinearField<'a> {
    grid: &'a ScalarGrid,
}

impl<'a> BilinearField<'a> {
    pub fn new(grid: &'a ScalarGrid) -> Self {
        Self { grid }
    }

    pub fn grid(&self) -> &'a ScalarGrid {
        self.grid
    }

    pub fn cells_x(&self) -> usize {
        self.grid.width() - 1
    }

    pub fn cells_y(&self) -> usize {
        self.grid.height() - 1
    }

    /// Coefficients of cell `(i, j)` without bounds checking beyond the
    /// underlying slice access.
    #[inline]
    pub fn coefficients(&self, i: usize, j: usize) -> CellCoefficients {
        let g = self.grid;
        let f00 = g.get(i, j);
        let f10 = g.get(i + 1, j);
        let f01 = g.get(i, j + 1);
        let f11 = g.get(i + 1, j + 1);
        CellCoefficients {
            cell: (i, j),
            a: f00,
            b: f10 - f00,
            c: f01 - f00,
            d: f11 - f10 - f01 + f00,
        }
    }

    pub fn cell_coefficients(&self, i: usize, j: usize) -> Result<CellCoefficients> {
        if i >= self.cells_x() || j >= self.cells_y() {
            return Err(Error::CellOutOfRange(i, j));
        }
        Ok(self.coefficients(i, j))
    }

    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        let (w, h) = (self.grid.width() as f64, self.grid.height() as f64);
        if !(x >= 0.0 && x <= w - 1.0 && y >= 0.0 && y <= h - 1.0) {
            return Err(Error::OutOfDomain(x, y));
        }
        Ok(self.eval_unchecked(x, y))
    }

    #[inline]
    pub fn eval_unchecked(&self, x: f64, y: f64) -> f64 {
        let i = (x.floor() as usize).min(self.cells_x() - 1);
        let j = (y.floor() as usize).min(self.cells_y() - 1);
        self.coefficients(i, j)
            .eval_local(x - i as f64, y - j as f64)
    }

    /// All cell-interior saddles, sorted by [`TotalOrder`].
    pub fn find_cell_saddles(&self) -> Vec<CriticalPoint> {
        let mut out = Vec::new();
        for j in 0..self.cells_y() {
            for i in 0..self.cells_x() {
                if let Some((u, v, value)) = self.coefficients(i, j).interior_saddle() {
                    out.push(CriticalPoint {
                        id: 0,
                        x: i as f64 + u,
                        y: j as f64 + v,
                        value,
                        kind: CriticalKind::Saddle,
                        origin: Origin::CellInterior,
                    });
                }
            }
        }
        finish(out)
    }

    /// Classifies grid vertices by the lower/upper runs of their edge
    /// neighbours. Regular vertices are omitted.
    pub fn classify_vertices(&self) -> Vec<CriticalPoint> {
        let g = self.grid;
        let (w, h) = (g.width(), g.height());
        let mut out = Vec::new();
        for j in 0..h {
            for i in 0..w {
                let key = SampleKey::vertex(g, i, j);
                // Cyclic neighbour order: east, south, west, north.
                let around = [
                    (i + 1 < w).then(|| (i + 1, j)),
                    (j + 1 < h).then(|| (i, j + 1)),
                    i.checked_sub(1).map(|ii| (ii, j)),
                    j.checked_sub(1).map(|jj| (i, jj)),
                ];
                let (lower, upper) = link_runs(&around, |(ni, nj)| {
                    TotalOrder.less(&SampleKey::vertex(g, ni, nj), &key)
                });
                let kind = match (lower, upper) {
                    (0, _) => CriticalKind::Minimum,
                    (_, 0) => CriticalKind::Maximum,
                    (1, 1) => continue,
                    _ => CriticalKind::Saddle,
                };
                out.push(CriticalPoint {
                    id: 0,
                    x: i as f64,
                    y: j as f64,
                    value: key.value,
                    kind,
                    origin: Origin::GridVertex,
                });
            }
        }
        finish(out)
    }
}

/// Counts maximal runs of lower and upper neighbours around a vertex.
/// Missing neighbours break the cycle into a path.
fn link_runs(
    around: &[Option<(usize, usize)>; 4],
    is_lower: impl Fn((usize, usize)) -> bool,
) -> (usize, usize) {
    let start = around.iter().position(Option::is_none);
    let seq: Vec<bool> = match start {
        None => around.iter().map(|n| is_lower(n.unwrap())).collect(),
        Some(s) => (1..=4)
            .filter_map(|k| around[(s + k) % 4])
            .map(&is_lower)
            .collect(),
    };
    if seq.is_empty() {
        return (0, 0);
    }
    let cyclic = start.is_none();
    let mut lower = 0;
    let mut upper = 0;
    for k in 0..seq.len() {
        let starts_run = if k == 0 {
            !cyclic || seq[seq.len() - 1] != seq[0]
        } else {
            seq[k - 1] != seq[k]
        };
        if starts_run {
            if seq[k] {
                lower += 1;
            } else {
                upper += 1;
            }
        }
    }
    if cyclic && lower == 0 && upper == 0 {
        // Constant sign all the way around.
        if seq[0] {
            lower = 1;
        } else {
            upper = 1;
        }
    }
    (lower, upper)
}

fn finish(mut points: Vec<CriticalPoint>) -> Vec<CriticalPoint> {
    points.sort_by(|a, b| TotalOrder.cmp(&a.key(), &b.key()));
    for (id, p) in points.iter_mut().enumerate() {
        p.id = id;
    }
    points
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Origin {
    GridVertex,
    CellInterior,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CriticalKind {
    Minimum,
    Maximum,
    Saddle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalPoint {
    pub id: usize,
    pub x: f64,
    pub y: f64,
    pub value: f64,
    pub kind: CriticalKind,
    pub origin: Origin,
}

impl CriticalPoint {
    pub fn key(&self) -> SampleKey {
        SampleKey {
            value: self.value,
            x: self.x,
            y: self.y,
            origin: self.origin,
        }
    }
}

/// Everything the total order looks at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleKey {
    pub value: f64,
    pub x: f64,
    pub y: f64,
    pub origin: Origin,
}

impl SampleKey {
    #[inline]
    pub fn vertex(grid: &ScalarGrid, i: usize, j: usize) -> Self {
        Self {
            value: grid.get(i, j),
            x: i as f64,
            y: j as f64,
            origin: Origin::GridVertex,
        }
    }
}

/// Symbolic perturbation: samples compare by `(value, y, x, origin)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct TotalOrder;

impl TotalOrder {
    #[inline]
    pub fn cmp(&self, a: &SampleKey, b: &SampleKey) -> Ordering {
        a.value
            .total_cmp(&b.value)
            .then(a.y.total_cmp(&b.y))
            .then(a.x.total_cmp(&b.x))
            .then(a.origin.cmp(&b.origin))
    }

    #[inline]
    pub fn less(&self, a: &SampleKey, b: &SampleKey) -> bool {
        self.cmp(a, b) == Ordering::Less
    }
}
