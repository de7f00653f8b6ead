//! Boundary and initial distributions and their moments.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sphere::{basis_eval_projected, gauss_legendre, isotropic_moments, BasisKind, QuadratureRule};

use super::{Grid, GridState};

/// Angular Gaussian `amplitude · exp(−((μ − μ₀)² + Δφ²) / (2σ²))` entering
/// through the part `[from, to]` of a side. `Δφ` is the azimuth difference
/// wrapped into `(−π, π]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamSpec {
    pub from: f64,
    pub to: f64,
    pub amplitude: f64,
    #[serde(default)]
    pub mu: f64,
    pub azimuth: f64,
    pub sigma2: f64,
}

impl BeamSpec {
    pub fn psi(&self, mu: f64, azimuth: f64) -> f64 {
        let mut d = (azimuth - self.azimuth).rem_euclid(2.0 * PI);
        if d > PI {
            d -= 2.0 * PI;
        }
        let m = mu - self.mu;
        self.amplitude * (-(m * m + d * d) / (2.0 * self.sigma2)).exp()
    }
}

/// Inflow distribution on one side: an isotropic background value plus
/// beams on sub-intervals.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SideSpec {
    /// Value of the isotropic distribution outside the beams.
    pub background: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub beams: Vec<BeamSpec>,
}

impl SideSpec {
    pub fn isotropic(value: f64) -> Self {
        Self { background: value, beams: Vec::new() }
    }
}

/// Boundary data for the four sides, or periodic wrapping per axis.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BoundarySpec {
    #[serde(default)]
    pub periodic_x: bool,
    #[serde(default)]
    pub periodic_y: bool,
    pub left: SideSpec,
    pub right: SideSpec,
    pub bottom: SideSpec,
    pub top: SideSpec,
}

impl BoundarySpec {
    pub fn isotropic(value: f64) -> Self {
        let s = SideSpec::isotropic(value);
        Self { periodic_x: false, periodic_y: false, left: s.clone(), right: s.clone(), bottom: s.clone(), top: s }
    }

    pub fn periodic() -> Self {
        Self { periodic_x: true, periodic_y: true, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, s) in [("left", &self.left), ("right", &self.right), ("bottom", &self.bottom), ("top", &self.top)] {
            if !(s.background >= 0.0) {
                return Err(Error::Config(format!("{name} background must be nonnegative")));
            }
            for b in &s.beams {
                if !(b.to > b.from) || !(b.amplitude >= 0.0) || !(b.sigma2 > 0.0) || !(b.mu.abs() <= 1.0) {
                    return Err(Error::Config(format!("invalid beam on the {name} side: {b:?}")));
                }
            }
        }
        Ok(())
    }
}

/// Moments of one beam distribution.
pub fn beam_moments(kind: BasisKind, beam: &BeamSpec, quad: &QuadratureRule) -> Vec<f64> {
    let mut m = vec![0.0; kind.len()];
    for node in &quad.nodes {
        let p = node.weight * beam.psi(node.dir.mu(), node.dir.azimuth());
        if p == 0.0 {
            continue;
        }
        for (m, b) in m.iter_mut().zip(basis_eval_projected(kind, node.omega, node.quadrant)) {
            *m += p * b;
        }
    }
    m
}

/// Ghost moments for the boundary segment `[a, b]`: the beams and the
/// background, weighted by the fraction of the segment each one covers.
pub fn side_ghost_moments(kind: BasisKind, side: &SideSpec, beams: &[Vec<f64>], a: f64, b: f64) -> Vec<f64> {
    let len = b - a;
    let mut rest = 1.0;
    let mut m = vec![0.0; kind.len()];
    for (spec, bm) in side.beams.iter().zip(beams) {
        let frac = ((b.min(spec.to) - a.max(spec.from)) / len).max(0.0);
        if frac > 0.0 {
            rest -= frac;
            for (m, v) in m.iter_mut().zip(bm) {
                *m += frac * v;
            }
        }
    }
    let iso = isotropic_moments(kind, 4.0 * PI * side.background);
    for (m, v) in m.iter_mut().zip(iso) {
        *m += rest.max(0.0) * v;
    }
    m
}

/// Isotropic initial distributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialCondition {
    /// `ψ ≡ value`.
    Uniform { value: f64 },
    /// `ψ = max(exp(−|x − c|²/(2σ²)) / (8πσ²), floor)`.
    Gaussian { sigma: f64, floor: f64, center: [f64; 2] },
}

impl InitialCondition {
    pub fn validate(&self) -> Result<()> {
        match *self {
            InitialCondition::Uniform { value } if value > 0.0 => Ok(()),
            InitialCondition::Gaussian { sigma, floor, .. } if sigma > 0.0 && floor > 0.0 => Ok(()),
            _ => Err(Error::Config(format!("initial condition needs positive parameters: {self:?}"))),
        }
    }

    /// Value of `ψ` at a point.
    pub fn psi(&self, p: [f64; 2]) -> f64 {
        match *self {
            InitialCondition::Uniform { value } => value,
            InitialCondition::Gaussian { sigma, floor, center } => {
                let r2 = (p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2);
                ((-r2 / (2.0 * sigma * sigma)).exp() / (8.0 * PI * sigma * sigma)).max(floor)
            }
        }
    }

    /// Cell averages of the moments, from a 4×4 Gauss rule per cell.
    pub fn build(&self, grid: Grid, kind: BasisKind) -> Result<GridState> {
        self.validate()?;
        let (p, w) = gauss_legendre(4);
        let (dx, dy) = (grid.dx(), grid.dy());
        let mut values = Vec::with_capacity(grid.cells() * kind.len());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let [cx, cy] = grid.center(i, j);
                let mut avg = 0.0;
                for (a, wa) in p.iter().zip(&w) {
                    for (b, wb) in p.iter().zip(&w) {
                        avg += 0.25 * wa * wb * self.psi([cx + 0.5 * dx * a, cy + 0.5 * dy * b]);
                    }
                }
                values.extend(isotropic_moments(kind, 4.0 * PI * avg));
            }
        }
        Ok(GridState { grid, kind, time: 0.0, values })
    }
}
