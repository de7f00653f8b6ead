//! Tabulation of the quarter-moment entropy closure on the `PP` quadrant.
//!
//! Nodes sit on a cell-centred polar grid in the normalized first moment,
//! `ρ = (i + 1/2)/N` and `β = (j + 1/2)/N · π/2`, so no node lies on the
//! realizability boundary. Each node stores the multipliers, the normalized
//! second moments and the logarithms of the two edge traces
//! `∫_0^π ψ(θ, edge) dθ` used by the Laplace-Beltrami treatment.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::moments::MomentVec;
use crate::sphere::{gauss_legendre, quadrature, BasisKind, Quadrant, Region};

use super::{DualSettings, EntropySolver};

const FORMAT_VERSION: u32 = 1;
const HEADER: &str = "# mixmom qm1 table";
/// Normalized first-moment norm beyond which lookups report boundary proximity.
pub const BOUNDARY_NORM: f64 = 0.995;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableSettings {
    pub resolution: usize,
    pub n_mu: usize,
    pub n_phi: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for TableSettings {
    fn default() -> Self {
        Self { resolution: 128, n_mu: 40, n_phi: 40, tol: 1e-9, max_iter: 200 }
    }
}

/// Data stored at one table node, in `PP` orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QM1Node {
    /// False when the dual solve failed and the node was copied from a neighbour.
    pub valid: bool,
    pub alpha: [f64; 3],
    /// Normalized `(u20, u11, u02)`.
    pub second: [f64; 3],
    /// `ln ∫ψ dθ` along the edge `Ωy = 0`.
    pub ln_trace_x: f64,
    /// `ln ∫ψ dθ` along the edge `Ωx = 0`.
    pub ln_trace_y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QM1Table {
    pub resolution: usize,
    pub n_mu: usize,
    pub n_phi: usize,
    pub tol: f64,
    /// Row-major in `β`: node `(i, j)` is at `j * resolution + i`.
    pub nodes: Vec<QM1Node>,
}

/// Interpolated closure data for a normalized quarter moment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QM1Lookup {
    pub u20: f64,
    pub u11: f64,
    pub u02: f64,
    /// `∫ψ dθ` along the quadrant edge on the x-axis (`Ωy = 0`).
    pub trace_x: f64,
    /// `∫ψ dθ` along the quadrant edge on the y-axis (`Ωx = 0`).
    pub trace_y: f64,
    pub near_boundary: bool,
}

impl QM1Table {
    pub fn rho(&self, i: usize) -> f64 {
        (i as f64 + 0.5) / self.resolution as f64
    }

    pub fn beta(&self, j: usize) -> f64 {
        (j as f64 + 0.5) / self.resolution as f64 * FRAC_PI_2
    }

    pub fn node(&self, i: usize, j: usize) -> &QM1Node {
        &self.nodes[j * self.resolution + i]
    }

    pub fn invalid_count(&self) -> usize {
        self.nodes.iter().filter(|n| !n.valid).count()
    }

    /// Interpolated second moments and traces at the normalized moment
    /// `phi` of quadrant `q`.
    ///
    /// Outside the node range in `ρ` the second moments of the nearest ring
    /// are used and the traces are extrapolated. Toward the
    /// quadrant axes the moments that vanish there (`u11` and the second
    /// moment across the axis) are interpolated linearly to zero.
    pub fn lookup(&self, phi: [f64; 2], q: Quadrant) -> Result<QM1Lookup> {
        let (sx, sy) = q.signs();
        if !(sx * phi[0] >= -1e-12 && sy * phi[1] >= -1e-12) {
            return Err(Error::OutOfQuadrant(phi));
        }
        let (x, y) = ((sx * phi[0]).max(0.0), (sy * phi[1]).max(0.0));
        let rho = x.hypot(y);
        if rho > 1.0 + 1e-12 {
            return Err(Error::NotRealizable(format!("|φ| = {rho} exceeds 1")));
        }
        let beta = if rho == 0.0 { PI / 4.0 } else { y.atan2(x) };
        let n = self.resolution;
        let nf = n as f64;

        let raw = rho * nf - 0.5;
        let fi = raw.clamp(0.0, nf - 1.0);
        let i0 = (fi.floor() as usize).min(n - 2);
        let ti = fi - i0 as f64;
        // Past the last ring the log-traces continue linearly in −ln(1 − ρ),
        // so they diverge or vanish at the unit circle like the exact closure.
        let beyond = if raw > nf - 1.0 {
            let s = |r: f64| -(1.0 - r).ln();
            let (sa, sb) = (s(self.rho(n - 2)), s(self.rho(n - 1)));
            Some(if rho >= 1.0 { f64::INFINITY } else { (s(rho) - sb) / (sb - sa) })
        } else {
            None
        };

        let fj = beta / FRAC_PI_2 * nf - 0.5;
        let interp = |j: usize| -> [f64; 5] {
            let a = self.node(i0, j);
            let b = self.node(i0 + 1, j);
            let mix = |u: f64, v: f64| (1.0 - ti) * u + ti * v;
            let log_mix = |u: f64, v: f64| match beyond {
                Some(e) => extrapolate(u, v, e),
                None => mix(u, v),
            };
            [
                mix(a.second[0], b.second[0]),
                mix(a.second[1], b.second[1]),
                mix(a.second[2], b.second[2]),
                log_mix(a.ln_trace_x, b.ln_trace_x),
                log_mix(a.ln_trace_y, b.ln_trace_y),
            ]
        };
        // Between the last column and the quadrant edge the trace on that
        // edge's meridian grows like 1/β, so its logarithm continues
        // linearly in −ln β and diverges on the edge itself.
        let edge = |near: [f64; 5], next: [f64; 5], k: usize, b: f64, b0: f64, b1: f64, j0: usize, j1: usize| -> f64 {
            if b == 0.0 {
                let ring = |j: usize| {
                    let nd = self.node(i0 + 1, j);
                    [nd.ln_trace_x, nd.ln_trace_y][k - 3]
                };
                return extrapolate(ring(j1), ring(j0), f64::INFINITY);
            }
            if near[k].is_infinite() {
                return near[k];
            }
            extrapolate(next[k], near[k], (b0.ln() - b.ln()) / (b1.ln() - b0.ln()).abs())
        };
        let v = if fj < 0.0 {
            // Between the x-axis (β = 0) and the first column.
            let s = (fj + 0.5) / 0.5;
            let (c, d) = (interp(0), interp(1));
            [c[0], s * c[1], s * c[2], edge(c, d, 3, beta, self.beta(0), self.beta(1), 0, 1), c[4]]
        } else if fj > nf - 1.0 {
            let s = (nf - 0.5 - fj) / 0.5;
            let (c, d) = (interp(n - 1), interp(n - 2));
            let gap = |b: f64| FRAC_PI_2 - b;
            [s * c[0], s * c[1], c[2], c[3], edge(c, d, 4, gap(beta), gap(self.beta(n - 1)), gap(self.beta(n - 2)), n - 1, n - 2)]
        } else {
            let j0 = (fj.floor() as usize).min(n - 2);
            let tj = fj - j0 as f64;
            let (a, b) = (interp(j0), interp(j0 + 1));
            let mut out = [0.0; 5];
            for k in 0..5 {
                out[k] = (1.0 - tj) * a[k] + tj * b[k];
            }
            out
        };
        Ok(QM1Lookup {
            u20: v[0],
            u11: sx * sy * v[1],
            u02: v[2],
            trace_x: v[3].exp(),
            trace_y: v[4].exp(),
            near_boundary: rho > BOUNDARY_NORM,
        })
    }

    /// Writes the table in its versioned text format.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let mut s = String::new();
        writeln!(s, "{HEADER}").unwrap();
        writeln!(s, "version {FORMAT_VERSION}").unwrap();
        writeln!(s, "resolution {}", self.resolution).unwrap();
        writeln!(s, "quadrature {} {}", self.n_mu, self.n_phi).unwrap();
        writeln!(s, "tolerance {:e}", self.tol).unwrap();
        writeln!(s, "# i j valid alpha0 alpha1 alpha2 u20 u11 u02 ln_trace_x ln_trace_y").unwrap();
        for j in 0..self.resolution {
            for i in 0..self.resolution {
                let nd = self.node(i, j);
                writeln!(
                    s,
                    "{i} {j} {} {:e} {:e} {:e} {:e} {:e} {:e} {:e} {:e}",
                    u8::from(nd.valid),
                    nd.alpha[0],
                    nd.alpha[1],
                    nd.alpha[2],
                    nd.second[0],
                    nd.second[1],
                    nd.second[2],
                    nd.ln_trace_x,
                    nd.ln_trace_y
                )
                .unwrap();
            }
        }
        w.write_all(s.as_bytes())?;
        Ok(())
    }

    /// Reads a table written by [`QM1Table::write`].
    pub fn read<R: Read>(r: R) -> Result<Self> {
        let reader = BufReader::new(r);
        let mut lines = reader.lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, String)> {
            loop {
                match lines.next() {
                    Some((k, line)) => {
                        let line = line?;
                        let t = line.trim();
                        if t.is_empty() || (t.starts_with('#') && k > 0) {
                            continue;
                        }
                        return Ok((k + 1, t.to_string()));
                    }
                    None => return Err(Error::Parse { line: 0, msg: format!("missing {what}") }),
                }
            }
        };
        let (l, first) = next("header")?;
        if first != HEADER {
            return Err(Error::Parse { line: l, msg: "not a qm1 table".into() });
        }
        let field = |line: (usize, String), key: &str| -> Result<(usize, Vec<String>)> {
            let mut parts = line.1.split_whitespace();
            if parts.next() != Some(key) {
                return Err(Error::Parse { line: line.0, msg: format!("expected `{key}`") });
            }
            Ok((line.0, parts.map(str::to_string).collect()))
        };
        let num = |l: usize, s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|e| Error::Parse { line: l, msg: format!("{s}: {e}") })
        };
        let int = |l: usize, s: &str| -> Result<usize> {
            s.parse::<usize>().map_err(|e| Error::Parse { line: l, msg: format!("{s}: {e}") })
        };
        let (l, v) = field(next("version")?, "version")?;
        if v.len() != 1 || int(l, &v[0])? != FORMAT_VERSION as usize {
            return Err(Error::Parse { line: l, msg: format!("unsupported version {v:?}") });
        }
        let (l, v) = field(next("resolution")?, "resolution")?;
        let resolution = int(l, v.first().map(String::as_str).unwrap_or(""))?;
        if resolution < 2 {
            return Err(Error::Parse { line: l, msg: "resolution must be at least 2".into() });
        }
        let (l, v) = field(next("quadrature")?, "quadrature")?;
        if v.len() != 2 {
            return Err(Error::Parse { line: l, msg: "expected two quadrature sizes".into() });
        }
        let (n_mu, n_phi) = (int(l, &v[0])?, int(l, &v[1])?);
        let (l, v) = field(next("tolerance")?, "tolerance")?;
        let tol = num(l, v.first().map(String::as_str).unwrap_or(""))?;

        let mut nodes = vec![None; resolution * resolution];
        for _ in 0..resolution * resolution {
            let (l, line) = next("node rows")?;
            let p: Vec<&str> = line.split_whitespace().collect();
            if p.len() != 11 {
                return Err(Error::Parse { line: l, msg: format!("expected 11 columns, got {}", p.len()) });
            }
            let (i, j) = (int(l, p[0])?, int(l, p[1])?);
            if i >= resolution || j >= resolution {
                return Err(Error::Parse { line: l, msg: format!("node ({i}, {j}) out of range") });
            }
            let f: Vec<f64> = p[3..].iter().map(|s| num(l, s)).collect::<Result<_>>()?;
            nodes[j * resolution + i] = Some(QM1Node {
                valid: p[2] == "1",
                alpha: [f[0], f[1], f[2]],
                second: [f[3], f[4], f[5]],
                ln_trace_x: f[6],
                ln_trace_y: f[7],
            });
        }
        let nodes = nodes
            .into_iter()
            .enumerate()
            .map(|(k, n)| n.ok_or(Error::Parse { line: 0, msg: format!("node {k} missing") }))
            .collect::<Result<_>>()?;
        Ok(Self { resolution, n_mu, n_phi, tol, nodes })
    }
}

/// `b + e·(b − a)`, with an infinite `e` giving the limit.
fn extrapolate(a: f64, b: f64, e: f64) -> f64 {
    let d = b - a;
    if e.is_infinite() {
        if d > 0.0 {
            f64::INFINITY
        } else if d < 0.0 {
            f64::NEG_INFINITY
        } else {
            b
        }
    } else {
        b + e * d
    }
}

/// `ln Σ w exp(e)` without overflow or underflow.
fn log_sum_exp(terms: impl Iterator<Item = (f64, f64)>) -> f64 {
    let terms: Vec<(f64, f64)> = terms.collect();
    let m = terms.iter().map(|t| t.1).fold(f64::NEG_INFINITY, f64::max);
    m + terms.iter().map(|(w, e)| w * (e - m).exp()).sum::<f64>().ln()
}

/// Solves the quarter-moment entropy dual on every node.
pub fn qm1_tabulate(settings: TableSettings) -> Result<QM1Table> {
    let n = settings.resolution;
    if n < 16 {
        return Err(Error::InvalidArgument(format!("table resolution must be at least 16, got {n}")));
    }
    let quad = quadrature(Region::Quadrant(Quadrant::PP), settings.n_mu, settings.n_phi)?;
    let dual = DualSettings { tol: settings.tol, max_iter: settings.max_iter, max_norm: 1.0, min_component: 0.0 };
    let solver = EntropySolver::new(BasisKind::Quarter1(Quadrant::PP), &quad, dual)?;
    // Edge traces use a finer 1D rule: the ansatz is cheap to evaluate there.
    let (tp, tw) = gauss_legendre(4 * settings.n_mu);
    let polar: Vec<(f64, f64)> =
        tp.iter().zip(&tw).map(|(t, w)| (FRAC_PI_2 * (t + 1.0), FRAC_PI_2 * w)).collect();

    let template = QM1Table { resolution: n, n_mu: settings.n_mu, n_phi: settings.n_phi, tol: settings.tol, nodes: vec![] };
    let columns: Vec<Vec<Option<QM1Node>>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let beta = template.beta(j);
            let solve = |i: usize, start: Option<&[f64]>| -> Option<QM1Node> {
                let rho = template.rho(i);
                let u = MomentVec::new(BasisKind::Quarter1(Quadrant::PP), vec![1.0, rho * beta.cos(), rho * beta.sin()])
                    .ok()?;
                let sol = solver.solve(&u, start).ok()?;
                let a = &sol.alpha.alpha;
                let m = solver.quadrant_moments(a).0[0];
                let ln_tx = log_sum_exp(polar.iter().map(|(t, w)| (*w, a[0] + a[1] * t.sin())));
                let ln_ty = log_sum_exp(polar.iter().map(|(t, w)| (*w, a[0] + a[2] * t.sin())));
                Some(QM1Node {
                    valid: true,
                    alpha: [a[0], a[1], a[2]],
                    second: [m[3] / m[0], m[4] / m[0], m[5] / m[0]],
                    ln_trace_x: ln_tx,
                    ln_trace_y: ln_ty,
                })
            };
            // March outward from the ring nearest the isotropic norm.
            let i0 = ((std::f64::consts::FRAC_1_SQRT_2 * n as f64 - 0.5).round() as usize).min(n - 1);
            let mut col = vec![None; n];
            col[i0] = solve(i0, None);
            for range in [(i0 + 1..n).collect::<Vec<_>>(), (0..i0).rev().collect()] {
                let mut last = col[i0].map(|nd: QM1Node| nd.alpha);
                for i in range {
                    let r = solve(i, last.as_ref().map(|a| &a[..])).or_else(|| solve(i, None));
                    if let Some(nd) = r {
                        last = Some(nd.alpha);
                    }
                    col[i] = r;
                }
            }
            col
        })
        .collect();

    let mut nodes = Vec::with_capacity(n * n);
    for (j, col) in columns.iter().enumerate() {
        for i in 0..n {
            let node = match col[i] {
                Some(nd) => nd,
                None => fill_from_neighbour(&columns, i, j)
                    .ok_or(Error::NonConvergence { iterations: settings.max_iter, residual: f64::NAN })?,
            };
            nodes.push(node);
        }
    }
    let table = QM1Table { nodes, ..template };
    log::info!("tabulated {}x{} quarter-moment nodes, {} filled from neighbours", n, n, table.invalid_count());
    Ok(table)
}

/// Nearest valid node in the same column, else in the nearest column.
fn fill_from_neighbour(columns: &[Vec<Option<QM1Node>>], i: usize, j: usize) -> Option<QM1Node> {
    let n = columns.len();
    for dj in 0..n {
        for jj in [j.checked_sub(dj), Some(j + dj)].into_iter().flatten() {
            if jj >= n {
                continue;
            }
            let col = &columns[jj];
            for di in 0..n {
                for ii in [i.checked_sub(di), Some(i + di)].into_iter().flatten() {
                    if let Some(Some(nd)) = col.get(ii) {
                        return Some(QM1Node { valid: false, ..*nd });
                    }
                }
            }
        }
    }
    None
}

/// Smallest angle in degrees between `phi` and an eigenvector of the
/// tabulated second moment.
pub fn qm1_eigen_deviation(table: &QM1Table, phi: [f64; 2]) -> Result<f64> {
    let q = Quadrant::of_point(phi);
    let l = table.lookup(phi, q)?;
    let axis = 0.5 * (2.0 * l.u11).atan2(l.u20 - l.u02);
    let dir = phi[1].atan2(phi[0]);
    let d = (dir - axis).rem_euclid(FRAC_PI_2);
    Ok(d.min(FRAC_PI_2 - d).to_degrees())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> QM1Table {
        qm1_tabulate(TableSettings { resolution: 16, n_mu: 16, n_phi: 16, ..TableSettings::default() }).unwrap()
    }

    #[test]
    fn rejects_small_resolution() {
        assert!(qm1_tabulate(TableSettings { resolution: 8, ..TableSettings::default() }).is_err());
    }

    #[test]
    fn lookup_symmetry_and_flags() {
        let t = small();
        let a = t.lookup([0.3, 0.6], Quadrant::PP).unwrap();
        let b = t.lookup([0.6, 0.3], Quadrant::PP).unwrap();
        assert!((a.u20 - b.u02).abs() < 1e-8 && (a.u02 - b.u20).abs() < 1e-8);
        assert!((a.trace_x - b.trace_y).abs() < 1e-6 * a.trace_x);
        assert!(!a.near_boundary);
        assert!(t.lookup([0.8, 0.597], Quadrant::PP).unwrap().near_boundary);
        let m = t.lookup([-0.3, 0.6], Quadrant::MP).unwrap();
        assert!((m.u11 + a.u11).abs() < 1e-15);
        assert!(matches!(t.lookup([-0.3, 0.6], Quadrant::PP), Err(Error::OutOfQuadrant(_))));
    }

    #[test]
    fn edge_traces_diverge() {
        let t = small();
        let col = t.lookup([0.5 * t.beta(0).cos(), 0.5 * t.beta(0).sin()], Quadrant::PP).unwrap();
        let close = t.lookup([0.5, 0.5 * 1e-3], Quadrant::PP).unwrap();
        let on = t.lookup([0.5, 0.0], Quadrant::PP).unwrap();
        assert!(close.trace_x > 10.0 * col.trace_x && close.trace_x.is_finite());
        assert!(on.trace_x.is_infinite() && (on.trace_y - close.trace_y).abs() < 1e-3 * close.trace_y);
        let beam = t.lookup([0.0, 1.0], Quadrant::MP).unwrap();
        assert!(beam.trace_y.is_infinite());
    }

    #[test]
    fn round_trip_through_text() {
        let t = small();
        let mut buf = Vec::new();
        t.write(&mut buf).unwrap();
        let back = QM1Table::read(&buf[..]).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn malformed_files_rejected() {
        assert!(QM1Table::read(&b""[..]).is_err());
        assert!(QM1Table::read(&b"# mixmom qm1 table\nversion 9\n"[..]).is_err());
    }

    #[test]
    fn axis_deviation_vanishes() {
        let t = small();
        assert!(qm1_eigen_deviation(&t, [0.0, 0.5]).unwrap() < 1e-9);
        assert!(qm1_eigen_deviation(&t, [0.4, 0.0]).unwrap() < 1e-9);
    }
}
