//! Moments of the Laplace-Beltrami operator for the full, mixed and quarter
//! bases.
//!
//! For the mixed basis, `L(Ωx 1_{Sx±})` is `−2 Ωx 1_{Sx±}` plus line masses
//! `±δ(φ − π/2)/sin θ` and `±δ(φ − 3π/2)/sin θ` on the meridians where the
//! indicator switches. Pairing with an ansatz `ψ` therefore needs the
//! meridian traces `T_k = ∫_0^π ψ(θ, kπ/2) dθ`; where `ψ` jumps across a
//! meridian the mean of the two one-sided traces is used.

use std::f64::consts::PI;

use crate::entropy::QM1Table;
use crate::error::Result;
use crate::moments::{quadrant_projection, GammaPair, MomentVec, NormalizedMixed1};
use crate::sphere::{BasisKind, QuadratureRule, Quadrant};

/// Default cap on a meridian trace, relative to the density.
pub const DEFAULT_TRACE_CAP: f64 = 1e6;

/// The four constants of the polynomial mixed-moment operator.
pub fn lb_constants() -> [f64; 4] {
    let d = (2.0 * PI - 4.0) * (PI - 4.0);
    [
        -3.0 / (PI - 4.0) - 1.0,
        3.0 * PI * (PI - 3.0) / d,
        -3.0 * PI / d - 1.5,
        3.0 * PI / d - 0.5,
    ]
}

/// Matrix of the mixed-moment operator under the linear ansatz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LBMatrixMM1 {
    pub s: [[f64; 5]; 5],
}

impl Default for LBMatrixMM1 {
    fn default() -> Self {
        let [s0, s1, s2, s3] = lb_constants();
        Self {
            s: [
                [0.0; 5],
                [s0, s3, s2, s1, -s1],
                [-s0, s2, s3, -s1, s1],
                [s0, s1, -s1, s3, s2],
                [-s0, -s1, s1, s2, s3],
            ],
        }
    }
}

impl LBMatrixMM1 {
    pub fn apply(&self, u: &[f64]) -> [f64; 5] {
        let mut out = [0.0; 5];
        for (o, row) in out.iter_mut().zip(&self.s) {
            *o = row.iter().zip(u).map(|(a, b)| a * b).sum();
        }
        out
    }
}

/// Laplace-Beltrami moment of `Ωx^ix Ωy^iy` for full moments. `u(i, j)`
/// returns the full moment of `Ωx^i Ωy^j`.
pub fn lb_full_moment(ix: u32, iy: u32, u: &dyn Fn(u32, u32) -> f64) -> f64 {
    let k = (ix + iy) as f64;
    let mut v = -k * (k + 1.0) * u(ix, iy);
    if ix >= 2 {
        v += (ix * (ix - 1)) as f64 * u(ix - 2, iy);
    }
    if iy >= 2 {
        v += (iy * (iy - 1)) as f64 * u(ix, iy - 2);
    }
    v
}

/// `S u` for a mixed vector.
pub fn lb_mixed_polynomial(u: &MomentVec) -> Result<[f64; 5]> {
    u.expect_kind(BasisKind::Mixed1)?;
    Ok(LBMatrixMM1::default().apply(u.values()))
}

/// Mixed-moment operator given the meridian traces `T_0..T_3` at azimuths
/// `0, π/2, π, 3π/2`.
pub fn lb_mixed_from_traces(u: &[f64], t: [f64; 4]) -> [f64; 5] {
    let ty = t[1] + t[3];
    let tx = t[0] + t[2];
    [0.0, -2.0 * u[1] + ty, -2.0 * u[2] - ty, -2.0 * u[3] + tx, -2.0 * u[4] - tx]
}

/// Result of the tabulated treatment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbTabulated {
    pub value: [f64; 5],
    pub traces: [f64; 4],
    /// Some trace hit the cap.
    pub capped: bool,
    /// Some quadrant projection lies close to the unit circle.
    pub near_boundary: bool,
}

/// Meridian traces of the mixed ansatz built from tabulated quarter
/// distributions, and whether any quadrant was near the boundary.
pub fn mixed_traces_from_table(u: &[f64], table: &QM1Table, gammas: GammaPair) -> Result<([f64; 4], bool)> {
    let u00 = u[0];
    if u00 <= 0.0 {
        return Ok(([0.0; 4], false));
    }
    let phi = NormalizedMixed1 { phi: [u[1] / u00, u[2] / u00, u[3] / u00, u[4] / u00] };
    let w = gammas.quadrant_weights();
    let proj = quadrant_projection(&phi);
    let mut tx = [0.0; 4];
    let mut ty = [0.0; 4];
    let mut near = false;
    for q in Quadrant::ALL {
        let i = q.index();
        if w[i] == 0.0 {
            continue;
        }
        let l = table.lookup(proj[i], q)?;
        near |= l.near_boundary;
        tx[i] = u00 * w[i] * l.trace_x;
        ty[i] = u00 * w[i] * l.trace_y;
    }
    let (pp, mp, mm, pm) = (0, 1, 2, 3);
    Ok((
        [
            0.5 * (tx[pp] + tx[pm]),
            0.5 * (ty[pp] + ty[mp]),
            0.5 * (tx[mp] + tx[mm]),
            0.5 * (ty[mm] + ty[pm]),
        ],
        near,
    ))
}

fn cap_traces(t: &mut [f64; 4], limit: f64) -> bool {
    let mut capped = false;
    for v in t.iter_mut() {
        if !(*v <= limit) {
            *v = limit;
            capped = true;
        }
    }
    capped
}

/// Mixed-moment operator with the ansatz replaced by the convex combination
/// of tabulated quarter-moment entropy distributions. Traces above
/// `cap · u00` are clamped.
pub fn lb_mixed_tabulated(u: &MomentVec, table: &QM1Table, gammas: GammaPair, cap: f64) -> Result<LbTabulated> {
    u.expect_kind(BasisKind::Mixed1)?;
    let v = u.values();
    let (mut traces, near_boundary) = mixed_traces_from_table(v, table, gammas)?;
    let capped = cap_traces(&mut traces, cap * v[0]);
    if capped {
        log::debug!("meridian trace capped at {:e} for state {:?}", cap * v[0], v);
    }
    Ok(LbTabulated { value: lb_mixed_from_traces(v, traces), traces, capped, near_boundary })
}

/// Mixed-moment operator for traces computed elsewhere, with the cap applied.
pub fn lb_mixed_capped(u: &[f64], mut traces: [f64; 4], cap: f64) -> ([f64; 5], bool) {
    let capped = cap_traces(&mut traces, cap * u[0]);
    (lb_mixed_from_traces(u, traces), capped)
}

/// Zeroth moments of `Lψ` on each quadrant for a piecewise-smooth `ψ`.
///
/// `dphi[q](θ, φ)` is the azimuthal derivative of the piece on quadrant `q`
/// evaluated on the closed quadrant. On each quadrant the integral of `Lψ`
/// reduces to the normal derivative across the two bounding meridians,
/// `∫_0^π (∂φψ(θ, φ_end) − ∂φψ(θ, φ_start)) / sin θ dθ`. The total vanishes
/// exactly when the one-sided derivatives agree on every meridian.
pub fn quarter_lb_defect(dphi: [&dyn Fn(f64, f64) -> f64; 4], quad: &QuadratureRule) -> ([f64; 4], f64) {
    let mut per = [0.0; 4];
    for q in Quadrant::ALL {
        let a = q.azimuth_start();
        let b = a + PI / 2.0;
        let f = dphi[q.index()];
        per[q.index()] = quad.integrate_polar(|t| (f(t, b) - f(t, a)) / t.sin());
    }
    (per, per.iter().sum())
}
