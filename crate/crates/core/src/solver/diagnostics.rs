//! Field diagnostics: bilinear sampling, rotational symmetry and cuts.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{Grid, GridState};

/// Bilinear interpolation of cell-centred data at `p`, clamped to the hull
/// of the cell centres.
pub fn bilinear(grid: &Grid, data: &[f64], p: [f64; 2]) -> f64 {
    let axis = |x: f64, min: f64, h: f64, n: usize| -> (usize, usize, f64) {
        if n == 1 {
            return (0, 0, 0.0);
        }
        let f = ((x - min) / h - 0.5).clamp(0.0, (n - 1) as f64);
        let i = (f.floor() as usize).min(n - 2);
        (i, i + 1, f - i as f64)
    };
    let (i0, i1, tx) = axis(p[0], grid.x_min, grid.dx(), grid.nx);
    let (j0, j1, ty) = axis(p[1], grid.y_min, grid.dy(), grid.ny);
    let v = |i: usize, j: usize| data[grid.index(i, j)];
    (1.0 - ty) * ((1.0 - tx) * v(i0, j0) + tx * v(i1, j0)) + ty * ((1.0 - tx) * v(i0, j1) + tx * v(i1, j1))
}

/// Deviation of the density from its rotations by multiples of `π/8` about
/// the domain centre.
///
/// Only cells whose centre lies in the disc inscribed in the hull of cell
/// centres are compared, so every rotated point is interpolated, not
/// extrapolated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymmetryReport {
    /// Worst rotation of `‖ρ∘R − ρ‖₂ / ‖ρ‖₂` over the disc.
    pub l2: f64,
    /// `max |ρ∘R − ρ|` over rotations and cells, relative to `max ρ`.
    pub max: f64,
}

pub fn symmetry_report(state: &GridState) -> SymmetryReport {
    let grid = &state.grid;
    let d = state.densities();
    let peak = d.iter().fold(0.0f64, |a, b| a.max(*b));
    if peak <= 0.0 {
        return SymmetryReport { l2: 0.0, max: 0.0 };
    }
    let c = grid.domain_center();
    let radius = (0.5 * (grid.x_max - grid.x_min) - 0.5 * grid.dx()).min(0.5 * (grid.y_max - grid.y_min) - 0.5 * grid.dy());
    let rot: Vec<(f64, f64)> = (1..16).map(|k| (k as f64 * PI / 8.0).sin_cos()).collect();
    let mut norm2 = 0.0;
    let mut dev2 = vec![0.0; rot.len()];
    let mut worst = 0.0f64;
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let p = grid.center(i, j);
            let (rx, ry) = (p[0] - c[0], p[1] - c[1]);
            if rx.hypot(ry) > radius {
                continue;
            }
            let v = d[grid.index(i, j)];
            norm2 += v * v;
            for (acc, &(s, co)) in dev2.iter_mut().zip(&rot) {
                let q = [c[0] + co * rx - s * ry, c[1] + s * rx + co * ry];
                let e = bilinear(grid, &d, q) - v;
                *acc += e * e;
                worst = worst.max(e.abs());
            }
        }
    }
    let l2 = if norm2 > 0.0 { dev2.iter().fold(0.0f64, |a, b| a.max(*b)).sqrt() / norm2.sqrt() } else { 0.0 };
    SymmetryReport { l2, max: worst / peak }
}

/// Rotational symmetry error: the `l2` entry of [`symmetry_report`].
pub fn symmetry_error(state: &GridState) -> f64 {
    symmetry_report(state).l2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CutKind {
    /// The row of cells through the domain centre (the upper one when the
    /// centre lies on a cell edge).
    Horizontal,
    /// Cells along the diagonal from the lower-left to the upper-right corner.
    Diagonal,
}

impl CutKind {
    pub fn name(self) -> &'static str {
        match self {
            CutKind::Horizontal => "horizontal",
            CutKind::Diagonal => "diagonal",
        }
    }
}

/// One cell of a cut, with the arc length of its centre measured from the
/// start of the cut line.
#[derive(Debug, Clone, PartialEq)]
pub struct CutRow {
    pub s: f64,
    pub x: f64,
    pub y: f64,
    pub values: Vec<f64>,
}

pub fn cut(state: &GridState, kind: CutKind) -> Vec<CutRow> {
    let g = &state.grid;
    let row = |i: usize, j: usize, s: f64| {
        let [x, y] = g.center(i, j);
        CutRow { s, x, y, values: state.cell(i, j).to_vec() }
    };
    match kind {
        CutKind::Horizontal => {
            let j = (((g.domain_center()[1] - g.y_min) / g.dy()).floor() as usize).min(g.ny - 1);
            (0..g.nx).map(|i| row(i, j, g.center(i, j)[0] - g.x_min)).collect()
        }
        CutKind::Diagonal => {
            let n = g.nx.max(g.ny);
            let mut out: Vec<CutRow> = Vec::with_capacity(n);
            for k in 0..n {
                let t = (k as f64 + 0.5) / n as f64;
                let i = ((t * g.nx as f64).floor() as usize).min(g.nx - 1);
                let j = ((t * g.ny as f64).floor() as usize).min(g.ny - 1);
                if out.last().is_some_and(|r| r.x == g.center(i, j)[0] && r.y == g.center(i, j)[1]) {
                    continue;
                }
                let [x, y] = g.center(i, j);
                out.push(row(i, j, (x - g.x_min).hypot(y - g.y_min)));
            }
            out
        }
    }
}
