//! Run configuration, benchmark presets and run orchestration.
//!
//! Configurations are TOML documents with the sections `domain`, `time`,
//! `model`, `coefficients`, `initial`, `boundary`, `numerics` and `output`.
//! [`RunConfig::with_override`] edits single entries by dotted path, for
//! example `domain.nx = 50` or `model.closure.kind = "m1"`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::entropy::{qm1_tabulate, DualSettings, QM1Table, TableSettings};
use crate::error::{Error, Result};
use crate::output::{write_cut, write_field, write_mass_history, Summary};
use crate::solver::{
    cut, symmetry_error, BeamSpec, BoundarySpec, ClosureChoice, CutKind, FluxScheme, Grid, InitialCondition, LbVariant,
    ProblemCoefficients, Reconstruction, SideSpec, Solver, SolverSettings, StepReport,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub nx: usize,
    pub ny: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub t_final: f64,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
}

fn default_cfl() -> f64 {
    0.45
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub closure: ClosureChoice,
    #[serde(default = "default_flux")]
    pub flux: FluxScheme,
    #[serde(default = "default_reconstruction")]
    pub reconstruction: Reconstruction,
}

fn default_flux() -> FluxScheme {
    FluxScheme::Kinetic
}

fn default_reconstruction() -> Reconstruction {
    Reconstruction::FirstOrder
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsSection {
    /// Gauss points per quadrant (polar, azimuthal) for entropy closures.
    pub quadrature: [usize; 2],
    pub entropy_tol: f64,
    pub entropy_max_iter: usize,
    /// QM1 table file; built and written there when missing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table_path: Option<PathBuf>,
    pub table_resolution: usize,
    pub trace_cap: f64,
    pub lb_dt_rate: f64,
    pub limiter_eps: f64,
}

impl Default for NumericsSection {
    fn default() -> Self {
        let s = SolverSettings::default();
        let d = DualSettings::default();
        Self {
            quadrature: s.quadrature,
            entropy_tol: d.tol,
            entropy_max_iter: d.max_iter,
            table_path: None,
            table_resolution: TableSettings::default().resolution,
            trace_cap: s.trace_cap,
            lb_dt_rate: s.lb_dt_rate,
            limiter_eps: s.limiter_eps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Time between field snapshots; 0 writes only the final field.
    #[serde(default)]
    pub snapshot_interval: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainSection,
    pub time: TimeSection,
    pub model: ModelSection,
    #[serde(default)]
    pub coefficients: ProblemCoefficients,
    pub initial: InitialCondition,
    pub boundary: BoundarySpec,
    #[serde(default)]
    pub numerics: NumericsSection,
    pub output: OutputSection,
}

pub const PRESETS: [&str; 3] = ["linesource", "twobeams", "twobeams-rotated"];

impl RunConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let model = ModelSection {
            closure: ClosureChoice::MK1 { lb: LbVariant::Tabulated },
            flux: FluxScheme::Kinetic,
            reconstruction: Reconstruction::FirstOrder,
        };
        let output = OutputSection { dir: PathBuf::from(format!("out-{name}")), snapshot_interval: 0.0 };
        match name {
            "linesource" => Ok(Self {
                domain: DomainSection { x: [-0.5, 0.5], y: [-0.5, 0.5], nx: 100, ny: 100 },
                time: TimeSection { t_final: 0.45, cfl: default_cfl() },
                model,
                coefficients: ProblemCoefficients { sigma_s: 1.0, sigma_a: 0.0, source: 0.0 },
                initial: InitialCondition::Gaussian { sigma: 0.03, floor: 1e-4, center: [0.0, 0.0] },
                boundary: BoundarySpec::isotropic(1e-4),
                numerics: NumericsSection::default(),
                output,
            }),
            "twobeams" | "twobeams-rotated" => {
                let amplitude = 100.0 / (4.0 * PI);
                let vacuum = 1e-4 / (4.0 * PI);
                let beam = |from: f64, azimuth: f64| BeamSpec { from, to: from + 0.1, amplitude, mu: 0.0, azimuth, sigma2: 0.05 };
                let mut boundary = BoundarySpec::isotropic(vacuum);
                if name == "twobeams" {
                    boundary.left = SideSpec { background: vacuum, beams: vec![beam(0.45, 0.0)] };
                    boundary.bottom = SideSpec { background: vacuum, beams: vec![beam(0.45, FRAC_PI_2)] };
                } else {
                    boundary.left = SideSpec { background: vacuum, beams: vec![beam(0.0, FRAC_PI_4), beam(0.9, -FRAC_PI_4)] };
                }
                Ok(Self {
                    domain: DomainSection { x: [0.0, 1.0], y: [0.0, 1.0], nx: 100, ny: 100 },
                    time: TimeSection { t_final: 1.2, cfl: default_cfl() },
                    model,
                    coefficients: ProblemCoefficients::default(),
                    initial: InitialCondition::Uniform { value: vacuum },
                    boundary,
                    numerics: NumericsSection::default(),
                    output,
                })
            }
            _ => Err(Error::Config(format!("unknown preset '{name}' (expected one of {})", PRESETS.join(", ")))),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    /// Sets `key` (a dotted path) to `value`, parsed as a TOML value or
    /// taken as a string when it does not parse.
    pub fn with_override(&self, key: &str, value: &str) -> Result<Self> {
        let mut root = toml::Value::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(value.to_string()));
        let parts: Vec<&str> = key.split('.').map(str::trim).collect();
        if parts.iter().any(|p| p.is_empty()) {
            return Err(Error::Config(format!("invalid override key '{key}'")));
        }
        let mut node = &mut root;
        for p in &parts[..parts.len() - 1] {
            let table = node.as_table_mut().ok_or_else(|| Error::Config(format!("'{key}' does not name a table entry")))?;
            node = table.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        }
        node.as_table_mut()
            .ok_or_else(|| Error::Config(format!("'{key}' does not name a table entry")))?
            .insert(parts[parts.len() - 1].to_string(), parsed);
        let c: Self = root.try_into().map_err(|e: toml::de::Error| Error::Config(format!("override {key}: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.domain.x, self.domain.y, self.domain.nx, self.domain.ny)
    }

    pub fn solver_settings(&self) -> SolverSettings {
        let n = &self.numerics;
        SolverSettings {
            closure: self.model.closure,
            flux: self.model.flux,
            reconstruction: self.model.reconstruction,
            cfl: self.time.cfl,
            coefficients: self.coefficients,
            quadrature: n.quadrature,
            dual: DualSettings { tol: n.entropy_tol, max_iter: n.entropy_max_iter, ..DualSettings::default() },
            trace_cap: n.trace_cap,
            lb_dt_rate: n.lb_dt_rate,
            limiter_eps: n.limiter_eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        if !(self.time.t_final > 0.0 && self.time.t_final.is_finite()) {
            return Err(Error::Config(format!("t_final must be positive, got {}", self.time.t_final)));
        }
        self.solver_settings().validate()?;
        self.initial.validate()?;
        self.boundary.validate()?;
        if !(self.numerics.entropy_tol > 0.0) || self.numerics.entropy_max_iter == 0 {
            return Err(Error::Config("entropy_tol and entropy_max_iter must be positive".into()));
        }
        if self.numerics.table_resolution < 16 {
            return Err(Error::Config("table_resolution must be at least 16".into()));
        }
        if !(self.output.snapshot_interval >= 0.0) {
            return Err(Error::Config("snapshot_interval must be nonnegative".into()));
        }
        Ok(())
    }

    /// Loads the QM1 table from `table_path`, or builds it (and writes it
    /// there when a path is set). `None` when the closure needs no table.
    pub fn table(&self) -> Result<Option<Arc<QM1Table>>> {
        if !self.model.closure.needs_table() {
            return Ok(None);
        }
        let n = &self.numerics;
        if let Some(p) = &n.table_path {
            if p.exists() {
                let t = QM1Table::read(BufReader::new(File::open(p)?))?;
                if t.resolution == n.table_resolution {
                    return Ok(Some(Arc::new(t)));
                }
                log::warn!("table {} has resolution {}, rebuilding at {}", p.display(), t.resolution, n.table_resolution);
            }
        }
        log::info!("tabulating QM1 at resolution {}", n.table_resolution);
        let t = qm1_tabulate(TableSettings { resolution: n.table_resolution, ..TableSettings::default() })?;
        if let Some(p) = &n.table_path {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            t.write(BufWriter::new(File::create(p)?))?;
        }
        Ok(Some(Arc::new(t)))
    }

    pub fn build_solver(&self) -> Result<Solver> {
        self.validate()?;
        let table = self.table()?;
        Solver::new(self.grid()?, self.solver_settings(), self.boundary.clone(), &self.initial, table)
    }
}

/// Result of [`run`].
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: Summary,
    pub reports: Vec<StepReport>,
    pub files: Vec<PathBuf>,
}

/// Runs a configuration and writes fields, cuts, the mass history, the
/// summary and the configuration into `output.dir`.
pub fn run(config: &RunConfig) -> Result<RunOutcome> {
    let start = Instant::now();
    let mut solver = config.build_solver()?;
    let dir = &config.output.dir;
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let closure = config.model.closure.name().to_string();
    let write_snapshot = |s: &Solver, name: String, files: &mut Vec<PathBuf>| -> Result<()> {
        let p = dir.join(name);
        write_field(BufWriter::new(File::create(&p)?), s.state(), &[("closure", closure.clone())])?;
        files.push(p);
        Ok(())
    };

    let mass_initial = solver.state().total_mass();
    let interval = config.output.snapshot_interval;
    let t_final = config.time.t_final;
    let mut reports = Vec::new();
    let mut k = 0usize;
    if interval > 0.0 {
        write_snapshot(&solver, format!("field_{k:04}.txt"), &mut files)?;
    }
    loop {
        let target = if interval > 0.0 { ((k + 1) as f64 * interval).min(t_final) } else { t_final };
        let r = solver.run_until(target, |s, r| {
            log::debug!("step {} t = {:.6} mass = {:.12e} activations = {}", r.step, s.state().time, r.mass, r.limiter_activations)
        })?;
        reports.extend(r);
        k += 1;
        if target >= t_final {
            break;
        }
        write_snapshot(&solver, format!("field_{k:04}.txt"), &mut files)?;
    }
    write_snapshot(&solver, "field_final.txt".into(), &mut files)?;

    let state = solver.state();
    let kind = state.kind;
    for c in [CutKind::Horizontal, CutKind::Diagonal] {
        let p = dir.join(format!("cut_{}.txt", c.name()));
        write_cut(BufWriter::new(File::create(&p)?), kind, state.time, c.name(), &cut(state, c))?;
        files.push(p);
    }
    let p = dir.join("mass_history.txt");
    write_mass_history(BufWriter::new(File::create(&p)?), mass_initial, &reports)?;
    files.push(p);
    let p = dir.join("config.toml");
    fs::write(&p, config.to_toml()?)?;
    files.push(p);

    let densities = state.densities();
    let summary = Summary {
        mass_initial,
        mass_final: state.total_mass(),
        min_u00: reports.iter().map(|r| r.min_density).fold(densities.iter().copied().fold(f64::INFINITY, f64::min), f64::min),
        limiter_activations: reports.iter().map(|r| r.limiter_activations).sum(),
        symmetry_error: symmetry_error(state),
        wall_seconds: start.elapsed().as_secs_f64(),
        extra: vec![
            ("closure".into(), closure.clone()),
            ("steps".into(), reports.len().to_string()),
            ("t_final".into(), format!("{:e}", state.time)),
            ("max_mass_defect".into(), format!("{:e}", reports.iter().map(|r| r.mass_defect).fold(0.0, f64::max))),
            ("realizability_violations".into(), reports.iter().map(|r| r.post_violations).sum::<usize>().to_string()),
            ("trace_caps".into(), reports.iter().map(|r| r.trace_caps).sum::<usize>().to_string()),
        ],
    };
    let p = dir.join("summary.txt");
    let mut w = BufWriter::new(File::create(&p)?);
    summary.write(&mut w)?;
    drop(w);
    files.push(p);
    Ok(RunOutcome { summary, reports, files })
}
