//! Plain-text writers and readers for fields, cuts, summaries and mass
//! histories.
//!
//! Field files start with `# key = value` metadata lines, then a header row
//! of column names and one whitespace-separated row per cell:
//!
//! ```text
//! # kind = mixed1
//! # nx = 2
//! ...
//! x y u00 u10_xp u10_xm u01_yp u01_ym
//! 2.5e-1 2.5e-1 1.2566370614359172e0 ...
//! ```

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::moments::{realizability_margin, DENSITY_FLOOR};
use crate::solver::{CutRow, Grid, GridState, StepReport};
use crate::sphere::{BasisKind, Quadrant};

/// Slack of the realizability audit.
pub const CHECK_SLACK: f64 = 1e-10;

pub fn parse_kind(name: &str) -> Result<BasisKind> {
    let mut all = vec![BasisKind::Full1, BasisKind::Mixed1, BasisKind::QuarterSet1];
    all.extend(Quadrant::ALL.iter().map(|q| BasisKind::Quarter1(*q)));
    all.into_iter()
        .find(|k| k.name() == name)
        .ok_or_else(|| Error::Parse { line: 0, msg: format!("unknown basis kind '{name}'") })
}

/// Writes a field with its grid metadata. `extra` adds metadata lines.
pub fn write_field<W: Write>(mut w: W, state: &GridState, extra: &[(&str, String)]) -> Result<()> {
    let g = &state.grid;
    writeln!(w, "# kind = {}", state.kind.name())?;
    writeln!(w, "# time = {:e}", state.time)?;
    writeln!(w, "# nx = {}", g.nx)?;
    writeln!(w, "# ny = {}", g.ny)?;
    writeln!(w, "# x_min = {:e}", g.x_min)?;
    writeln!(w, "# x_max = {:e}", g.x_max)?;
    writeln!(w, "# y_min = {:e}", g.y_min)?;
    writeln!(w, "# y_max = {:e}", g.y_max)?;
    for (k, v) in extra {
        writeln!(w, "# {k} = {v}")?;
    }
    writeln!(w, "x y {}", state.kind.component_labels().join(" "))?;
    let mut line = String::new();
    for j in 0..g.ny {
        for i in 0..g.nx {
            let [x, y] = g.center(i, j);
            line.clear();
            push_row(&mut line, [x, y].iter().chain(state.cell(i, j)));
            writeln!(w, "{line}")?;
        }
    }
    Ok(())
}

fn push_row<'a>(line: &mut String, values: impl Iterator<Item = &'a f64>) {
    use std::fmt::Write as _;
    for (k, v) in values.enumerate() {
        if k > 0 {
            line.push(' ');
        }
        let _ = write!(line, "{v:e}");
    }
}

/// Cut rows with an arc-length column in front of the cell centre.
pub fn write_cut<W: Write>(mut w: W, kind: BasisKind, time: f64, name: &str, rows: &[CutRow]) -> Result<()> {
    writeln!(w, "# kind = {}", kind.name())?;
    writeln!(w, "# time = {time:e}")?;
    writeln!(w, "# cut = {name}")?;
    writeln!(w, "s x y {}", kind.component_labels().join(" "))?;
    let mut line = String::new();
    for r in rows {
        line.clear();
        push_row(&mut line, [r.s, r.x, r.y].iter().chain(&r.values));
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// A parsed table file: metadata, column names and numeric rows.
#[derive(Debug, Clone, PartialEq)]
pub struct TableFile {
    pub meta: BTreeMap<String, String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl TableFile {
    pub fn parse<R: BufRead>(r: R) -> Result<Self> {
        let mut meta = BTreeMap::new();
        let mut columns: Option<Vec<String>> = None;
        let mut rows = Vec::new();
        for (k, line) in r.lines().enumerate() {
            let line = line?;
            let n = k + 1;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            if let Some(m) = t.strip_prefix('#') {
                let (key, value) = m
                    .split_once('=')
                    .ok_or_else(|| Error::Parse { line: n, msg: "metadata line needs `key = value`".into() })?;
                meta.insert(key.trim().to_string(), value.trim().to_string());
                continue;
            }
            match &columns {
                None => columns = Some(t.split_whitespace().map(str::to_string).collect()),
                Some(c) => {
                    let row = t
                        .split_whitespace()
                        .map(|s| s.parse::<f64>().map_err(|e| Error::Parse { line: n, msg: format!("'{s}': {e}") }))
                        .collect::<Result<Vec<f64>>>()?;
                    if row.len() != c.len() {
                        return Err(Error::Parse {
                            line: n,
                            msg: format!("expected {} values, found {}", c.len(), row.len()),
                        });
                    }
                    rows.push(row);
                }
            }
        }
        let columns = columns.ok_or_else(|| Error::Parse { line: 0, msg: "no header row".into() })?;
        Ok(Self { meta, columns, rows })
    }

    pub fn meta_value<T: std::str::FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.meta.get(key).ok_or_else(|| Error::Parse { line: 0, msg: format!("missing metadata '{key}'") })?;
        v.parse().map_err(|e| Error::Parse { line: 0, msg: format!("metadata '{key}': {e}") })
    }

    pub fn kind(&self) -> Result<BasisKind> {
        parse_kind(&self.meta_value::<String>("kind")?)
    }

    /// Rebuilds the grid state of a field file.
    pub fn to_state(&self) -> Result<GridState> {
        let kind = self.kind()?;
        let grid = Grid::new(
            [self.meta_value("x_min")?, self.meta_value("x_max")?],
            [self.meta_value("y_min")?, self.meta_value("y_max")?],
            self.meta_value("nx")?,
            self.meta_value("ny")?,
        )
        .map_err(|e| Error::Parse { line: 0, msg: e.to_string() })?;
        if self.columns.len() != kind.len() + 2 {
            return Err(Error::Parse { line: 0, msg: format!("{} columns for kind {}", self.columns.len(), kind.name()) });
        }
        if self.rows.len() != grid.cells() {
            return Err(Error::Parse { line: 0, msg: format!("{} rows for {} cells", self.rows.len(), grid.cells()) });
        }
        let values = self.rows.iter().flat_map(|r| r[2..].iter().copied()).collect();
        Ok(GridState { grid, kind, time: self.meta_value("time")?, values })
    }
}

/// One cell that fails the audit or is among the closest to failing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellMargin {
    pub ix: usize,
    pub iy: usize,
    pub x: f64,
    pub y: f64,
    /// Realizability margin; negative outside the realizable set.
    pub margin: f64,
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealizabilityReport {
    pub cells: usize,
    pub violations: usize,
    pub below_floor: usize,
    /// Cells sorted by margin, worst first.
    pub worst: Vec<CellMargin>,
}

impl RealizabilityReport {
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "cells = {}", self.cells)?;
        writeln!(w, "violations = {}", self.violations)?;
        writeln!(w, "below_floor = {}", self.below_floor)?;
        for c in &self.worst {
            writeln!(w, "cell ({}, {}) at ({:e}, {:e}): margin {:e}, u00 {:e}", c.ix, c.iy, c.x, c.y, c.margin, c.density)?;
        }
        Ok(())
    }
}

/// Audits every cell of a field with slack [`CHECK_SLACK`], listing up to
/// `keep` cells with the smallest margins.
pub fn check_realizability(state: &GridState, keep: usize) -> RealizabilityReport {
    let g = &state.grid;
    let idx = crate::solver::mass_indices(state.kind);
    let mut cells = Vec::with_capacity(g.cells());
    for j in 0..g.ny {
        for i in 0..g.nx {
            let v = state.cell(i, j);
            let [x, y] = g.center(i, j);
            let density = idx.iter().map(|&k| v[k]).sum();
            cells.push(CellMargin { ix: i, iy: j, x, y, margin: realizability_margin(state.kind, v), density });
        }
    }
    let violations = cells.iter().filter(|c| !(c.margin >= -CHECK_SLACK)).count();
    let below_floor = cells.iter().filter(|c| !(c.density >= DENSITY_FLOOR * (1.0 - 1e-12))).count();
    cells.sort_by(|a, b| a.margin.total_cmp(&b.margin));
    cells.truncate(keep);
    RealizabilityReport { cells: g.cells(), violations, below_floor, worst: cells }
}

/// Run summary with fixed keys.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub mass_initial: f64,
    pub mass_final: f64,
    pub min_u00: f64,
    pub limiter_activations: usize,
    pub symmetry_error: f64,
    pub wall_seconds: f64,
    /// Additional `key = value` lines after the fixed ones.
    pub extra: Vec<(String, String)>,
}

impl Summary {
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "mass_initial = {:e}", self.mass_initial)?;
        writeln!(w, "mass_final = {:e}", self.mass_final)?;
        writeln!(w, "min_u00 = {:e}", self.min_u00)?;
        writeln!(w, "limiter_activations = {}", self.limiter_activations)?;
        writeln!(w, "symmetry_error = {:e}", self.symmetry_error)?;
        writeln!(w, "wall_seconds = {:.3}", self.wall_seconds)?;
        for (k, v) in &self.extra {
            writeln!(w, "{k} = {v}")?;
        }
        Ok(())
    }
}

/// Parses `key = value` lines, ignoring blanks and `#` comments.
pub fn parse_key_values<R: BufRead>(r: R) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (k, line) in r.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let (key, value) =
            t.split_once('=').ok_or_else(|| Error::Parse { line: k + 1, msg: "expected `key = value`".into() })?;
        out.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(out)
}

/// Per-step mass balance table.
pub fn write_mass_history<W: Write>(mut w: W, mass_initial: f64, reports: &[StepReport]) -> Result<()> {
    writeln!(w, "step time dt mass boundary_outflow source_mass limiter_mass mass_defect limiter_activations")?;
    writeln!(w, "0 0e0 0e0 {mass_initial:e} 0e0 0e0 0e0 0e0 0")?;
    for r in reports {
        writeln!(
            w,
            "{} {:e} {:e} {:e} {:e} {:e} {:e} {:e} {}",
            r.step,
            r.time,
            r.dt,
            r.mass,
            r.boundary_outflow,
            r.source_mass,
            r.limiter_mass,
            r.mass_defect,
            r.limiter_activations
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::isotropic_moments;

    fn state() -> GridState {
        let grid = Grid::new([0.0, 1.0], [0.0, 2.0], 3, 2).unwrap();
        let mut s = GridState::uniform(grid, BasisKind::Mixed1, &isotropic_moments(BasisKind::Mixed1, 1.0));
        s.time = 0.125;
        s.cell_mut(1, 1)[1] = 0.1 + 1.0 / 3.0;
        s
    }

    #[test]
    fn field_round_trip_is_exact() {
        let s = state();
        let mut buf = Vec::new();
        write_field(&mut buf, &s, &[("closure", "mk1".into())]).unwrap();
        let f = TableFile::parse(&buf[..]).unwrap();
        assert_eq!(f.meta["closure"], "mk1");
        assert_eq!(f.columns[..3], ["x", "y", "u00"]);
        assert_eq!(f.to_state().unwrap(), s);
    }

    #[test]
    fn audit_locates_corruption() {
        let mut s = state();
        assert_eq!(check_realizability(&s, 3).violations, 0);
        s.cell_mut(2, 0)[2] = 0.5;
        let r = check_realizability(&s, 3);
        assert_eq!((r.violations, r.worst[0].ix, r.worst[0].iy), (1, 2, 0));
    }

    #[test]
    fn malformed_input_is_rejected() {
        assert!(matches!(TableFile::parse(&b""[..]), Err(Error::Parse { .. })));
        assert!(TableFile::parse(&b"x y\n1 2 3\n"[..]).is_err());
        assert!(TableFile::parse(&b"x y\n1 z\n"[..]).is_err());
    }

    #[test]
    fn summary_keys() {
        let s = Summary {
            mass_initial: 1.0,
            mass_final: 0.5,
            min_u00: 1e-4,
            limiter_activations: 3,
            symmetry_error: 0.01,
            wall_seconds: 2.0,
            extra: vec![("steps".into(), "7".into())],
        };
        let mut buf = Vec::new();
        s.write(&mut buf).unwrap();
        let kv = parse_key_values(&buf[..]).unwrap();
        for k in ["mass_initial", "mass_final", "min_u00", "limiter_activations", "symmetry_error", "wall_seconds", "steps"] {
            assert!(kv.contains_key(k), "{k}");
        }
        assert_eq!(kv["limiter_activations"], "3");
    }
}
