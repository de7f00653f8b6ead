//! Finite-volume solver for the closed moment system on a rectangular grid.
//!
//! Cells hold moment vectors of one basis kind. Each stage evaluates the
//! closure in every cell, assembles upwind (kinetic) or Lax-Friedrichs face
//! fluxes, adds absorption, emission and scattering, and limits the result
//! back into the realizable set. Time integration is Heun's SSP-RK2.

mod bc;
mod closure;
mod diagnostics;

pub use bc::{beam_moments, side_ghost_moments, BeamSpec, BoundarySpec, InitialCondition, SideSpec};
pub use closure::{CellEval, ClosureEngine};
pub use diagnostics::{bilinear, cut, symmetry_error, symmetry_report, CutKind, CutRow, SymmetryReport};

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::entropy::{DualSettings, QM1Table};
use crate::error::{Error, Result};
use crate::moments::{is_realizable_slice, limit_slice, Axis, SignFilter, DENSITY_FLOOR};
use crate::sphere::{basis_integral, quadrature, BasisKind, Region};

/// Closure of the Laplace-Beltrami moments for mixed bases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LbVariant {
    /// `S u` from the linear ansatz.
    Polynomial,
    /// Meridian traces of a nonnegative ansatz.
    Tabulated,
}

/// Moment model used by a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ClosureChoice {
    #[serde(rename = "p1")]
    P1Linear,
    #[serde(rename = "m1")]
    M1Entropy,
    #[serde(rename = "mm1")]
    MM1Entropy { lb: LbVariant },
    #[serde(rename = "mk1")]
    MK1 { lb: LbVariant },
    #[serde(rename = "qk1")]
    QK1AdvectionOnly,
}

impl ClosureChoice {
    pub fn basis(self) -> BasisKind {
        match self {
            ClosureChoice::P1Linear | ClosureChoice::M1Entropy => BasisKind::Full1,
            ClosureChoice::MM1Entropy { .. } | ClosureChoice::MK1 { .. } => BasisKind::Mixed1,
            ClosureChoice::QK1AdvectionOnly => BasisKind::QuarterSet1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ClosureChoice::P1Linear => "p1",
            ClosureChoice::M1Entropy => "m1",
            ClosureChoice::MM1Entropy { .. } => "mm1",
            ClosureChoice::MK1 { .. } => "mk1",
            ClosureChoice::QK1AdvectionOnly => "qk1",
        }
    }

    pub fn is_entropy(self) -> bool {
        matches!(self, ClosureChoice::M1Entropy | ClosureChoice::MM1Entropy { .. })
    }

    pub fn needs_table(self) -> bool {
        matches!(self, ClosureChoice::MK1 { lb: LbVariant::Tabulated })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FluxScheme {
    Kinetic,
    LaxFriedrichs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reconstruction {
    FirstOrder,
    /// Piecewise-linear states with monotonized-central slopes, dropped to
    /// first order in any cell whose face states are not realizable.
    Muscl,
}

/// Scattering and absorption opacities and an isotropic emission density.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ProblemCoefficients {
    pub sigma_s: f64,
    pub sigma_a: f64,
    /// Value of the isotropic source distribution `Q`.
    pub source: f64,
}

impl ProblemCoefficients {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("sigma_s", self.sigma_s), ("sigma_a", self.sigma_a), ("source", self.source)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite and nonnegative, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    pub closure: ClosureChoice,
    pub flux: FluxScheme,
    pub reconstruction: Reconstruction,
    pub cfl: f64,
    pub coefficients: ProblemCoefficients,
    /// Gauss-Legendre points per quadrant in the polar angle and azimuth for
    /// entropy closures.
    pub quadrature: [usize; 2],
    pub dual: DualSettings,
    /// Cap on meridian traces relative to the density.
    pub trace_cap: f64,
    /// Rate scale of the scattering term used in the time step bound.
    pub lb_dt_rate: f64,
    /// Relative margin kept by the limiter when it rescales first moments.
    pub limiter_eps: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            closure: ClosureChoice::MK1 { lb: LbVariant::Polynomial },
            flux: FluxScheme::Kinetic,
            reconstruction: Reconstruction::FirstOrder,
            cfl: 0.45,
            coefficients: ProblemCoefficients::default(),
            quadrature: [10, 10],
            dual: DualSettings::default(),
            trace_cap: crate::collision::DEFAULT_TRACE_CAP,
            lb_dt_rate: 4.0,
            limiter_eps: 0.0,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::Config(format!("cfl must lie in (0, 1], got {}", self.cfl)));
        }
        self.coefficients.validate()?;
        if self.closure == ClosureChoice::QK1AdvectionOnly && self.coefficients.sigma_s > 0.0 {
            return Err(Error::Config(
                "the qk1 closure is advection-only and requires sigma_s = 0 (no scattering closure exists for quarter moments)"
                    .into(),
            ));
        }
        if self.quadrature[0] < 2 || self.quadrature[1] < 2 {
            return Err(Error::Config("quadrature sizes must be at least 2".into()));
        }
        if !(self.trace_cap > 0.0) {
            return Err(Error::Config("trace_cap must be positive".into()));
        }
        if !(self.lb_dt_rate > 0.0) {
            return Err(Error::Config("lb_dt_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.limiter_eps) {
            return Err(Error::Config("limiter_eps must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Uniform rectangular grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Grid {
    pub fn new(x: [f64; 2], y: [f64; 2], nx: usize, ny: usize) -> Result<Self> {
        let g = Self { x_min: x[0], x_max: x[1], y_min: y[0], y_max: y[1], nx, ny };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::Config(format!("grid must have cells, got {} x {}", self.nx, self.ny)));
        }
        if !(self.x_max > self.x_min && self.y_max > self.y_min) {
            return Err(Error::Config("domain bounds must be increasing".into()));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        (self.y_max - self.y_min) / self.ny as f64
    }

    pub fn cells(&self) -> usize {
        self.nx * self.ny
    }

    /// Row-major index, `x` fastest.
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn center(&self, i: usize, j: usize) -> [f64; 2] {
        [self.x_min + (i as f64 + 0.5) * self.dx(), self.y_min + (j as f64 + 0.5) * self.dy()]
    }

    pub fn domain_center(&self) -> [f64; 2] {
        [0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max)]
    }
}

/// Moment field on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridState {
    pub grid: Grid,
    pub kind: BasisKind,
    pub time: f64,
    /// `kind.len()` values per cell, cells in row-major order.
    pub values: Vec<f64>,
}

impl GridState {
    pub fn uniform(grid: Grid, kind: BasisKind, cell: &[f64]) -> Self {
        let values = (0..grid.cells()).flat_map(|_| cell.iter().copied()).collect();
        Self { grid, kind, time: 0.0, values }
    }

    pub fn cell(&self, i: usize, j: usize) -> &[f64] {
        let n = self.kind.len();
        let c = self.grid.index(i, j);
        &self.values[c * n..(c + 1) * n]
    }

    pub fn cell_mut(&mut self, i: usize, j: usize) -> &mut [f64] {
        let n = self.kind.len();
        let c = self.grid.index(i, j);
        &mut self.values[c * n..(c + 1) * n]
    }

    /// Zeroth moment per cell.
    pub fn densities(&self) -> Vec<f64> {
        let idx = mass_indices(self.kind);
        self.values.chunks(self.kind.len()).map(|v| idx.iter().map(|&k| v[k]).sum()).collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.densities().iter().sum::<f64>() * self.grid.dx() * self.grid.dy()
    }
}

/// Components of a basis that carry particle number.
pub fn mass_indices(kind: BasisKind) -> Vec<usize> {
    kind.components()
        .iter()
        .enumerate()
        .filter(|(_, c)| c.ix == 0 && c.iy == 0)
        .map(|(k, _)| k)
        .collect()
}

/// Largest stable time step: `cfl · min(Δx, Δy)` for unit wave speed, and
/// `cfl / (σs · rate)` when scattering is active.
pub fn cfl_dt(grid: &Grid, cfl: f64, sigma_s: f64, lb_dt_rate: f64) -> Result<f64> {
    if !(cfl > 0.0 && cfl <= 1.0) {
        return Err(Error::InvalidArgument(format!("cfl must lie in (0, 1], got {cfl}")));
    }
    let mut dt = cfl * grid.dx().min(grid.dy());
    if sigma_s > 0.0 {
        dt = dt.min(cfl / (sigma_s * lb_dt_rate));
    }
    Ok(dt)
}

/// Flux across a face with `ul` on the low side and `ur` on the high side.
pub fn numerical_flux(
    engine: &ClosureEngine,
    ul: &[f64],
    ur: &[f64],
    axis: Axis,
    scheme: FluxScheme,
) -> Result<Vec<f64>> {
    let kind = engine.kind();
    for u in [ul, ur] {
        if u.len() != kind.len() || !is_realizable_slice(kind, u, 1e-10) {
            return Err(Error::NotRealizable(format!("{u:?}")));
        }
    }
    let (el, _) = engine.eval(ul, None, false)?;
    let (er, _) = engine.eval(ur, None, false)?;
    let mut a = vec![0.0; kind.len()];
    let mut b = vec![0.0; kind.len()];
    contribution(kind, scheme, &el, ul, axis, true, &mut a);
    contribution(kind, scheme, &er, ur, axis, false, &mut b);
    Ok(a.iter().zip(&b).map(|(x, y)| x + y).collect())
}

/// One side's share of a face flux. `low` is true for the state below the
/// face (west or south of it).
fn contribution(kind: BasisKind, scheme: FluxScheme, e: &CellEval, u: &[f64], axis: Axis, low: bool, out: &mut [f64]) {
    let mut f = Vec::with_capacity(kind.len());
    match scheme {
        FluxScheme::Kinetic => {
            let filter = if low { SignFilter::PositiveOnly } else { SignFilter::NegativeOnly };
            e.qm.flux_into(kind, axis, filter, &mut f);
            out.copy_from_slice(&f);
        }
        FluxScheme::LaxFriedrichs => {
            e.qm.flux_into(kind, axis, SignFilter::All, &mut f);
            let s = if low { 0.5 } else { -0.5 };
            for ((o, f), u) in out.iter_mut().zip(&f).zip(u) {
                *o = 0.5 * f + s * u;
            }
        }
    }
}

/// Summary of one time step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepReport {
    pub step: usize,
    pub time: f64,
    pub dt: f64,
    pub mass: f64,
    /// Mass that left through the boundary during the step.
    pub boundary_outflow: f64,
    /// Mass added by absorption and emission during the step.
    pub source_mass: f64,
    /// Mass added by the limiter's density floor.
    pub limiter_mass: f64,
    /// `|Δmass − (source − outflow + limiter)|`.
    pub mass_defect: f64,
    pub limiter_activations: usize,
    /// Cells that failed the realizability test (slack 1e-10) before limiting.
    pub violations: usize,
    /// Cells that still fail after limiting.
    pub post_violations: usize,
    pub min_density: f64,
    pub trace_caps: usize,
}

/// Closure state reused across stages: the last input and its result,
/// and the last multipliers as a warm start.
#[derive(Debug, Clone, Default)]
struct CellCache {
    alpha: Option<Vec<f64>>,
    input: Vec<f64>,
    eval: Option<CellEval>,
}

/// Cache slots per cell: the average and the four face states.
const CACHE_SLOTS: usize = 5;

impl CellCache {
    fn eval(&mut self, engine: &ClosureEngine, u: &[f64], with_lb: bool) -> Result<CellEval> {
        if let Some(e) = &self.eval {
            if self.input == u && (!with_lb || e.has_lb) {
                return Ok(e.clone());
            }
        }
        let (e, a) = engine.eval(u, self.alpha.as_deref(), with_lb)?;
        if a.is_some() {
            self.alpha = a;
        }
        self.input = u.to_vec();
        self.eval = Some(e.clone());
        Ok(e)
    }
}

/// Ghost-cell shares of the boundary faces.
#[derive(Debug, Clone)]
struct Ghosts {
    /// Low-side share at `x_min`, one per row.
    left: Vec<f64>,
    /// High-side share at `x_max`.
    right: Vec<f64>,
    bottom: Vec<f64>,
    top: Vec<f64>,
    /// Ghost states themselves, for reconstruction slopes.
    left_state: Vec<f64>,
    right_state: Vec<f64>,
    bottom_state: Vec<f64>,
    top_state: Vec<f64>,
}

pub struct Solver {
    settings: SolverSettings,
    engine: ClosureEngine,
    boundary: BoundarySpec,
    state: GridState,
    ghosts: Ghosts,
    cache: Vec<CellCache>,
    mass_idx: Vec<usize>,
    source_moments: Vec<f64>,
    steps: usize,
    // Scratch buffers: face shares (E, W, N, S) and scattering moments.
    shares: Vec<f64>,
    lb: Vec<f64>,
}

impl Solver {
    pub fn new(
        grid: Grid,
        settings: SolverSettings,
        boundary: BoundarySpec,
        initial: &InitialCondition,
        table: Option<Arc<QM1Table>>,
    ) -> Result<Self> {
        let state = initial.build(grid, settings.closure.basis())?;
        Self::with_state(state, settings, boundary, table)
    }

    pub fn with_state(
        state: GridState,
        settings: SolverSettings,
        boundary: BoundarySpec,
        table: Option<Arc<QM1Table>>,
    ) -> Result<Self> {
        settings.validate()?;
        state.grid.validate()?;
        boundary.validate()?;
        let kind = settings.closure.basis();
        if state.kind != kind {
            return Err(Error::KindMismatch { expected: kind.name(), got: state.kind.name() });
        }
        if state.values.len() != state.grid.cells() * kind.len() {
            return Err(Error::InvalidArgument("state length does not match the grid".into()));
        }
        let quad = quadrature(Region::FullSphere, settings.quadrature[0], settings.quadrature[1])?;
        let engine = ClosureEngine::new(settings.closure, &quad, settings.dual, table, settings.trace_cap)?;
        let ghosts = build_ghosts(&state.grid, &engine, &boundary, settings.flux)?;
        let n = kind.len();
        let cells = state.grid.cells();
        let q = settings.coefficients.source;
        Ok(Self {
            mass_idx: mass_indices(kind),
            source_moments: basis_integral(kind).into_iter().map(|b| q * b).collect(),
            cache: vec![CellCache::default(); CACHE_SLOTS * cells],
            shares: vec![0.0; cells * 4 * n],
            lb: vec![0.0; cells * n],
            settings,
            engine,
            boundary,
            state,
            ghosts,
            steps: 0,
        })
    }

    pub fn state(&self) -> &GridState {
        &self.state
    }

    pub fn settings(&self) -> &SolverSettings {
        &self.settings
    }

    pub fn boundary(&self) -> &BoundarySpec {
        &self.boundary
    }

    pub fn engine(&self) -> &ClosureEngine {
        &self.engine
    }

    pub fn cfl_dt(&self) -> f64 {
        let s = &self.settings;
        cfl_dt(&self.state.grid, s.cfl, s.coefficients.sigma_s, s.lb_dt_rate).expect("settings were validated")
    }

    fn mass_of(&self, v: &[f64]) -> f64 {
        let n = self.engine.kind().len();
        let total: f64 = v.chunks(n).map(|c| self.mass_idx.iter().map(|&k| c[k]).sum::<f64>()).sum();
        total * self.state.grid.dx() * self.state.grid.dy()
    }

    /// Advances by `dt` with Heun's method.
    pub fn step(&mut self, dt: f64) -> Result<StepReport> {
        if !(dt > 0.0) || dt > self.cfl_dt() * (1.0 + 1e-12) {
            return Err(Error::InvalidArgument(format!("time step {dt} exceeds the stable bound {}", self.cfl_dt())));
        }
        let kind = self.engine.kind();
        let u0 = self.state.values.clone();
        let mass0 = self.mass_of(&u0);
        let mut report = StepReport { step: self.steps + 1, dt, ..StepReport::default() };

        let mut r0 = vec![0.0; u0.len()];
        let (out0, caps0) = self.rhs(&u0, &mut r0)?;
        let mut u1: Vec<f64> = u0.iter().zip(&r0).map(|(u, r)| u + dt * r).collect();
        let lim1 = self.limit(&mut u1, &mut report);

        let mut r1 = vec![0.0; u0.len()];
        let (out1, caps1) = self.rhs(&u1, &mut r1)?;
        let mut u2: Vec<f64> = u1.iter().zip(&r1).map(|(u, r)| u + dt * r).collect();
        let lim2 = self.limit(&mut u2, &mut report);

        let mut next: Vec<f64> = u0.iter().zip(&u2).map(|(a, b)| 0.5 * a + 0.5 * b).collect();
        let lim3 = self.limit(&mut next, &mut report);

        let sa = self.settings.coefficients.sigma_a;
        let grid = self.state.grid;
        let area = (grid.x_max - grid.x_min) * (grid.y_max - grid.y_min);
        let emission: f64 = self.mass_idx.iter().map(|&k| self.source_moments[k]).sum::<f64>() * area;
        let mass1 = self.mass_of(&u1);
        report.boundary_outflow = 0.5 * dt * (out0 + out1);
        report.source_mass = 0.5 * dt * (2.0 * emission - sa * (mass0 + mass1));
        report.limiter_mass = 0.5 * (lim1 + lim2) + lim3;
        report.mass = self.mass_of(&next);
        let predicted = mass0 - report.boundary_outflow + report.source_mass + report.limiter_mass;
        report.mass_defect = (report.mass - predicted).abs();
        report.trace_caps = caps0 + caps1;

        for v in next.chunks(kind.len()) {
            if !is_realizable_slice(kind, v, 1e-10) {
                report.post_violations += 1;
            }
        }
        self.state.values = next;
        self.state.time += dt;
        self.steps += 1;
        report.time = self.state.time;
        report.min_density = self.state.densities().into_iter().fold(f64::INFINITY, f64::min);
        Ok(report)
    }

    /// Steps to `t_final`, shortening the last step to land on it.
    pub fn run_until<F: FnMut(&Solver, &StepReport)>(&mut self, t_final: f64, mut observe: F) -> Result<Vec<StepReport>> {
        let dt = self.cfl_dt();
        let mut reports = Vec::new();
        while self.state.time < t_final * (1.0 - 1e-14) {
            let h = dt.min(t_final - self.state.time);
            let r = self.step(h)?;
            observe(self, &r);
            reports.push(r);
        }
        Ok(reports)
    }

    /// Applies the limiter to every cell and returns the mass it added.
    fn limit(&self, v: &mut [f64], report: &mut StepReport) -> f64 {
        let kind = self.engine.kind();
        let eps = self.settings.limiter_eps;
        let before = self.mass_of(v);
        let flags: Vec<(bool, bool)> = v
            .par_chunks_mut(kind.len())
            .map(|c| {
                let bad = !is_realizable_slice(kind, c, 1e-10);
                let changed = limit_slice(kind, c, eps);
                (bad, changed)
            })
            .collect();
        for (bad, changed) in flags {
            report.violations += bad as usize;
            report.limiter_activations += changed as usize;
        }
        self.mass_of(v) - before
    }

    /// Right-hand side of the semi-discrete system. Returns the mass
    /// outflow rate through the boundary and the number of capped traces.
    fn rhs(&mut self, values: &[f64], out: &mut [f64]) -> Result<(f64, usize)> {
        let kind = self.engine.kind();
        let n = kind.len();
        let grid = self.state.grid;
        let (nx, ny) = (grid.nx, grid.ny);
        let scheme = self.settings.flux;
        let with_lb = self.settings.coefficients.sigma_s > 0.0;
        let engine = &self.engine;
        let muscl = self.settings.reconstruction == Reconstruction::Muscl;
        let faces = if muscl { Some(self.face_states(values)) } else { None };
        let cell_err = |c: usize, e: Error| Error::Cell { ix: c % nx, iy: c / nx, source: Box::new(e) };

        let results: Vec<Result<bool>> = self
            .shares
            .par_chunks_mut(4 * n)
            .zip(self.lb.par_chunks_mut(n))
            .zip(self.cache.par_chunks_mut(CACHE_SLOTS))
            .enumerate()
            .map(|(c, ((share, lb), cache))| {
                let u = &values[c * n..(c + 1) * n];
                let mut capped = false;
                let mut lb_done = false;
                if with_lb {
                    if let Some((v, cap)) = engine.direct_lb(u).map_err(|e| cell_err(c, e))? {
                        lb[..n.min(5)].copy_from_slice(&v[..n.min(5)]);
                        capped = cap;
                        lb_done = true;
                    }
                }
                let sides = [(Axis::X, true), (Axis::X, false), (Axis::Y, true), (Axis::Y, false)];
                match &faces {
                    None => {
                        let eval = cache[0].eval(engine, u, with_lb && !lb_done).map_err(|e| cell_err(c, e))?;
                        for (k, (axis, low)) in sides.into_iter().enumerate() {
                            contribution(kind, scheme, &eval, u, axis, low, &mut share[k * n..(k + 1) * n]);
                        }
                        if with_lb && !lb_done {
                            lb[..n.min(5)].copy_from_slice(&eval.lb[..n.min(5)]);
                            capped = eval.capped;
                        }
                    }
                    Some(f) => {
                        for (k, (axis, low)) in sides.into_iter().enumerate() {
                            let uf = &f[(4 * c + k) * n..(4 * c + k + 1) * n];
                            let eval = cache[1 + k].eval(engine, uf, false).map_err(|e| cell_err(c, e))?;
                            contribution(kind, scheme, &eval, uf, axis, low, &mut share[k * n..(k + 1) * n]);
                        }
                        if with_lb && !lb_done {
                            let eval = cache[0].eval(engine, u, true).map_err(|e| cell_err(c, e))?;
                            lb[..n.min(5)].copy_from_slice(&eval.lb[..n.min(5)]);
                            capped = eval.capped;
                        }
                    }
                }
                Ok(capped)
            })
            .collect();
        let mut caps = 0;
        for r in results {
            caps += r? as usize;
        }

        let dx = grid.dx();
        let dy = grid.dy();
        let c = self.settings.coefficients;
        let sh = &self.shares;
        let g = &self.ghosts;
        let (px, py) = (self.boundary.periodic_x, self.boundary.periodic_y);
        let share = |cell: usize, face: usize| &sh[(4 * cell + face) * n..(4 * cell + face + 1) * n];
        out.par_chunks_mut(n).enumerate().for_each(|(cell, o)| {
            let (i, j) = (cell % nx, cell / nx);
            let east_r = if i + 1 < nx {
                share(cell + 1, 1)
            } else if px {
                share(cell + 1 - nx, 1)
            } else {
                &g.right[j * n..(j + 1) * n]
            };
            let west_l = if i > 0 {
                share(cell - 1, 0)
            } else if px {
                share(cell + nx - 1, 0)
            } else {
                &g.left[j * n..(j + 1) * n]
            };
            let north_r = if j + 1 < ny {
                share(cell + nx, 3)
            } else if py {
                share(i, 3)
            } else {
                &g.top[i * n..(i + 1) * n]
            };
            let south_l = if j > 0 {
                share(cell - nx, 2)
            } else if py {
                share((ny - 1) * nx + i, 2)
            } else {
                &g.bottom[i * n..(i + 1) * n]
            };
            let (e, w, nn, s) = (share(cell, 0), share(cell, 1), share(cell, 2), share(cell, 3));
            let u = &values[cell * n..(cell + 1) * n];
            let lb = &self.lb[cell * n..(cell + 1) * n];
            for k in 0..n {
                let fe = e[k] + east_r[k];
                let fw = west_l[k] + w[k];
                let fn_ = nn[k] + north_r[k];
                let fs = south_l[k] + s[k];
                let mut r = -(fe - fw) / dx - (fn_ - fs) / dy - c.sigma_a * u[k] + self.source_moments[k];
                if c.sigma_s > 0.0 {
                    r += 0.5 * c.sigma_s * lb[k];
                }
                o[k] = r;
            }
        });

        // Mass leaving through non-periodic sides.
        let mut outflow = 0.0;
        let mass_flux = |a: &[f64], b: &[f64]| self.mass_idx.iter().map(|&k| a[k] + b[k]).sum::<f64>();
        if !px {
            for j in 0..ny {
                let first = grid.index(0, j);
                let last = grid.index(nx - 1, j);
                outflow -= mass_flux(&g.left[j * n..(j + 1) * n], share(first, 1)) * dy;
                outflow += mass_flux(share(last, 0), &g.right[j * n..(j + 1) * n]) * dy;
            }
        }
        if !py {
            for i in 0..nx {
                let first = grid.index(i, 0);
                let last = grid.index(i, ny - 1);
                outflow -= mass_flux(&g.bottom[i * n..(i + 1) * n], share(first, 3)) * dx;
                outflow += mass_flux(share(last, 2), &g.top[i * n..(i + 1) * n]) * dx;
            }
        }
        Ok((outflow, caps))
    }
}

impl Solver {
    /// East, west, north and south face states of every cell from limited
    /// linear reconstruction. A cell whose face states would not be
    /// realizable keeps its average on all faces of that direction.
    fn face_states(&self, values: &[f64]) -> Vec<f64> {
        let kind = self.engine.kind();
        let n = kind.len();
        let grid = self.state.grid;
        let (nx, ny) = (grid.nx, grid.ny);
        let g = &self.ghosts;
        let (px, py) = (self.boundary.periodic_x, self.boundary.periodic_y);
        let mass_idx = &self.mass_idx;
        let cell = |k: usize| &values[k * n..(k + 1) * n];
        let mut faces = vec![0.0; 4 * n * grid.cells()];
        faces.par_chunks_mut(4 * n).enumerate().for_each(|(c, f)| {
            let (i, j) = (c % nx, c / nx);
            let u = cell(c);
            let west = if i > 0 {
                cell(c - 1)
            } else if px {
                cell(c + nx - 1)
            } else {
                &g.left_state[j * n..(j + 1) * n]
            };
            let east = if i + 1 < nx {
                cell(c + 1)
            } else if px {
                cell(c + 1 - nx)
            } else {
                &g.right_state[j * n..(j + 1) * n]
            };
            let south = if j > 0 {
                cell(c - nx)
            } else if py {
                cell(c + (ny - 1) * nx)
            } else {
                &g.bottom_state[i * n..(i + 1) * n]
            };
            let north = if j + 1 < ny {
                cell(c + nx)
            } else if py {
                cell(i)
            } else {
                &g.top_state[i * n..(i + 1) * n]
            };
            let ok = |v: &[f64]| {
                mass_idx.iter().all(|&k| v[k] >= DENSITY_FLOOR) && is_realizable_slice(kind, v, 0.0)
            };
            for (d, lo, hi) in [(0, west, east), (1, south, north)] {
                let (plus, minus) = f[2 * d * n..(2 * d + 2) * n].split_at_mut(n);
                for k in 0..n {
                    let s = mc_slope(u[k] - lo[k], hi[k] - u[k]);
                    plus[k] = u[k] + 0.5 * s;
                    minus[k] = u[k] - 0.5 * s;
                }
                if !ok(plus) || !ok(minus) {
                    plus.copy_from_slice(u);
                    minus.copy_from_slice(u);
                }
            }
        });
        faces
    }
}

fn mc_slope(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else {
        a.signum() * (2.0 * a.abs()).min(2.0 * b.abs()).min(0.5 * (a + b).abs())
    }
}

fn build_ghosts(grid: &Grid, engine: &ClosureEngine, bc: &BoundarySpec, scheme: FluxScheme) -> Result<Ghosts> {
    let kind = engine.kind();
    let n = kind.len();
    let quad = quadrature(Region::FullSphere, 80, 80)?;
    let dx = grid.dx();
    let dy = grid.dy();
    let side = |spec: &SideSpec, count: usize, start: f64, h: f64, axis: Axis, low: bool, periodic: bool| -> Result<(Vec<f64>, Vec<f64>)> {
        let mut shares = vec![0.0; count * n];
        let mut states = vec![0.0; count * n];
        if periodic {
            return Ok((shares, states));
        }
        let beams: Vec<Vec<f64>> = spec.beams.iter().map(|b| beam_moments(kind, b, &quad)).collect();
        for k in 0..count {
            let a = start + k as f64 * h;
            let u = side_ghost_moments(kind, spec, &beams, a, a + h);
            let (e, _) = engine.eval(&u, None, false).map_err(|e| {
                Error::Config(format!("boundary state {u:?} cannot be closed: {e}"))
            })?;
            contribution(kind, scheme, &e, &u, axis, low, &mut shares[k * n..(k + 1) * n]);
            states[k * n..(k + 1) * n].copy_from_slice(&u);
        }
        Ok((shares, states))
    };
    let (left, left_state) = side(&bc.left, grid.ny, grid.y_min, dy, Axis::X, true, bc.periodic_x)?;
    let (right, right_state) = side(&bc.right, grid.ny, grid.y_min, dy, Axis::X, false, bc.periodic_x)?;
    let (bottom, bottom_state) = side(&bc.bottom, grid.nx, grid.x_min, dx, Axis::Y, true, bc.periodic_y)?;
    let (top, top_state) = side(&bc.top, grid.nx, grid.x_min, dx, Axis::Y, false, bc.periodic_y)?;
    Ok(Ghosts { left, right, bottom, top, left_state, right_state, bottom_state, top_state })
}
