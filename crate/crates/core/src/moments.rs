//! Moment vectors, first-order realizability, realizing atomic distributions
//! and the limiter that pushes solver states back into the realizable set.

use crate::error::{Error, Result};
use crate::sphere::{basis_eval_projected, BasisKind, Quadrant};

/// Smallest density the limiter lets a cell reach.
pub const DENSITY_FLOOR: f64 = 1e-10;

/// Moments of some angular distribution against the basis `kind`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentVec {
    kind: BasisKind,
    values: Vec<f64>,
}

impl MomentVec {
    pub fn new(kind: BasisKind, values: Vec<f64>) -> Result<Self> {
        if values.len() != kind.len() {
            return Err(Error::InvalidArgument(format!(
                "{} needs {} components, got {}",
                kind.name(),
                kind.len(),
                values.len()
            )));
        }
        Ok(Self { kind, values })
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Total density. For `QuarterSet1` this sums the four quarter densities.
    pub fn density(&self) -> f64 {
        match self.kind {
            BasisKind::QuarterSet1 => (0..4).map(|q| self.values[3 * q]).sum(),
            _ => self.values[0],
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { kind: self.kind, values: self.values.iter().map(|v| v * s).collect() }
    }

    pub(crate) fn expect_kind(&self, kind: BasisKind) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(Error::KindMismatch { expected: kind.name(), got: self.kind.name() })
        }
    }
}

/// First moments of a `Mixed1` vector divided by the density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedMixed1 {
    /// (φx+, φx−, φy+, φy−)
    pub phi: [f64; 4],
}

impl NormalizedMixed1 {
    pub fn from_moments(u: &MomentVec) -> Result<Self> {
        u.expect_kind(BasisKind::Mixed1)?;
        let v = u.values();
        if v[0] <= 0.0 {
            return Err(Error::NotRealizable(format!("density {} is not positive", v[0])));
        }
        Ok(Self { phi: [v[1] / v[0], v[2] / v[0], v[3] / v[0], v[4] / v[0]] })
    }

    /// `(φx+ − φx−, φy+ − φy−)`.
    pub fn spread(&self) -> [f64; 2] {
        [self.phi[0] - self.phi[1], self.phi[2] - self.phi[3]]
    }

    pub fn has_valid_signs(&self) -> bool {
        self.phi[0] >= 0.0 && self.phi[1] <= 0.0 && self.phi[2] >= 0.0 && self.phi[3] <= 0.0
    }
}

/// One Dirac atom on the projected unit disk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub weight: f64,
    pub omega: [f64; 2],
    /// Quadrant the atom is counted in when it sits on a quadrant boundary.
    pub tag: Option<Quadrant>,
}

impl Atom {
    pub fn quadrant(&self) -> Quadrant {
        self.tag.unwrap_or_else(|| Quadrant::of_point(self.omega))
    }
}

/// A nonnegative combination of Dirac atoms.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AtomicDistribution {
    pub atoms: Vec<Atom>,
}

impl AtomicDistribution {
    pub fn new(atoms: Vec<Atom>) -> Self {
        Self { atoms }
    }

    pub fn push(&mut self, weight: f64, omega: [f64; 2], tag: Option<Quadrant>) {
        self.atoms.push(Atom { weight, omega, tag });
    }

    pub fn total_weight(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    /// Checks weights, disk membership and tags up to `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        for (k, a) in self.atoms.iter().enumerate() {
            if !(a.weight >= -tol) {
                return Err(Error::InvalidArgument(format!("atom {k} has weight {}", a.weight)));
            }
            let r = a.omega[0].hypot(a.omega[1]);
            if !(r <= 1.0 + tol) {
                return Err(Error::InvalidArgument(format!("atom {k} lies outside the disk (|ω| = {r})")));
            }
            if let Some(q) = a.tag {
                let (sx, sy) = q.signs();
                if sx * a.omega[0] < -tol || sy * a.omega[1] < -tol {
                    return Err(Error::InvalidArgument(format!(
                        "atom {k} at {:?} is outside its tagged quadrant {}",
                        a.omega,
                        q.name()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Per-quadrant moments up to second order.
    pub fn quadrant_moments(&self) -> QuadrantMoments {
        let mut m = QuadrantMoments::default();
        for a in &self.atoms {
            let [x, y] = a.omega;
            let row = &mut m.0[a.quadrant().index()];
            let w = a.weight;
            row[0] += w;
            row[1] += w * x;
            row[2] += w * y;
            row[3] += w * x * x;
            row[4] += w * x * y;
            row[5] += w * y * y;
        }
        m
    }
}

/// Convex-combination coefficients of the mixed realizing distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaPair {
    pub gamma1: f64,
    pub gamma2: f64,
}

impl GammaPair {
    /// Weights of the quadrants PP, MP, MM, PM in the mixed ansatz.
    pub fn quadrant_weights(&self) -> [f64; 4] {
        let (g1, g2) = (self.gamma1, self.gamma2);
        [g2 * g1, (1.0 - g2) * g1, (1.0 - g2) * (1.0 - g1), g2 * (1.0 - g1)]
    }
}

/// Moments `⟨Ωx^i Ωy^j⟩_q` for `i + j ≤ 2`, per quadrant.
///
/// Row order PP, MP, MM, PM; column order 00, 10, 01, 20, 11, 02.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct QuadrantMoments(pub [[f64; 6]; 4]);

/// Column of `Ωx^ix Ωy^iy` in a [`QuadrantMoments`] row.
pub fn qm_index(ix: u32, iy: u32) -> usize {
    match (ix, iy) {
        (0, 0) => 0,
        (1, 0) => 1,
        (0, 1) => 2,
        (2, 0) => 3,
        (1, 1) => 4,
        (0, 2) => 5,
        _ => panic!("quadrant moments only hold orders up to 2, got ({ix}, {iy})"),
    }
}

/// Axis of a flux.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
}

/// Restricts a flux to directions moving toward `+axis` or `−axis`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SignFilter {
    All,
    PositiveOnly,
    NegativeOnly,
}

impl QuadrantMoments {
    pub fn scaled(&self, s: f64) -> Self {
        let mut out = *self;
        for row in &mut out.0 {
            for v in row.iter_mut() {
                *v *= s;
            }
        }
        out
    }

    pub fn add_scaled(&mut self, other: &QuadrantMoments, s: f64) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += s * y;
            }
        }
    }

    /// Reflects moments computed for one quadrant into the quadrant `to`,
    /// given a row for `PP` orientation (nonnegative first moments).
    pub fn reflect_row(row: [f64; 6], to: Quadrant) -> [f64; 6] {
        let (sx, sy) = to.signs();
        [row[0], sx * row[1], sy * row[2], row[3], sx * sy * row[4], row[5]]
    }

    /// Moments of the basis `kind`.
    pub fn moments(&self, kind: BasisKind) -> Vec<f64> {
        kind.components()
            .iter()
            .map(|c| c.support.quadrants().map(|q| self.0[q.index()][qm_index(c.ix, c.iy)]).sum())
            .collect()
    }

    /// `⟨Ω_axis b ψ⟩`, optionally restricted to one direction of travel.
    ///
    /// The restriction is exact because every quadrant lies on one side of
    /// both coordinate axes.
    pub fn flux(&self, kind: BasisKind, axis: Axis, filter: SignFilter) -> Vec<f64> {
        let mut out = Vec::with_capacity(kind.len());
        self.flux_into(kind, axis, filter, &mut out);
        out
    }

    pub fn flux_into(&self, kind: BasisKind, axis: Axis, filter: SignFilter, out: &mut Vec<f64>) {
        out.clear();
        for c in kind.components() {
            let mut s = 0.0;
            for q in c.support.quadrants() {
                let (sx, sy) = q.signs();
                let dir = match axis {
                    Axis::X => sx,
                    Axis::Y => sy,
                };
                let keep = match filter {
                    SignFilter::All => true,
                    SignFilter::PositiveOnly => dir > 0.0,
                    SignFilter::NegativeOnly => dir < 0.0,
                };
                if keep {
                    let (ix, iy) = match axis {
                        Axis::X => (c.ix + 1, c.iy),
                        Axis::Y => (c.ix, c.iy + 1),
                    };
                    s += self.0[q.index()][qm_index(ix, iy)];
                }
            }
            out.push(s);
        }
    }
}

/// `Σ w_k (Ω_axis filtered) b(ω_k)` over the atoms.
pub fn flux_from_atoms(a: &AtomicDistribution, kind: BasisKind, axis: Axis, filter: SignFilter) -> Vec<f64> {
    let mut out = vec![0.0; kind.len()];
    for atom in &a.atoms {
        let v = match axis {
            Axis::X => atom.omega[0],
            Axis::Y => atom.omega[1],
        };
        let v = match filter {
            SignFilter::All => v,
            SignFilter::PositiveOnly => v.max(0.0),
            SignFilter::NegativeOnly => v.min(0.0),
        };
        if v == 0.0 {
            continue;
        }
        let b = basis_eval_projected(kind, atom.omega, atom.quadrant());
        for (o, bi) in out.iter_mut().zip(b) {
            *o += atom.weight * v * bi;
        }
    }
    out
}

/// `Σ w_k b(ω_k)`, resolving boundary atoms by their tags.
pub fn moments_of_atomic(a: &AtomicDistribution, kind: BasisKind) -> MomentVec {
    let mut values = vec![0.0; kind.len()];
    for atom in &a.atoms {
        let b = basis_eval_projected(kind, atom.omega, atom.quadrant());
        for (v, bi) in values.iter_mut().zip(b) {
            *v += atom.weight * bi;
        }
    }
    MomentVec { kind, values }
}

fn full1_ok(v: &[f64], slack: f64) -> bool {
    v[0] >= 0.0 && v[1].hypot(v[2]) <= v[0] + slack
}

fn quarter1_ok(v: &[f64], q: Quadrant, slack: f64) -> bool {
    let (sx, sy) = q.signs();
    full1_ok(v, slack) && sx * v[1] >= -slack && sy * v[2] >= -slack
}

fn mixed1_ok(v: &[f64], slack: f64) -> bool {
    v[0] >= 0.0
        && v[1] >= -slack
        && v[2] <= slack
        && v[3] >= -slack
        && v[4] <= slack
        && (v[1] - v[2]).hypot(v[3] - v[4]) <= v[0] + slack
}

/// `‖u₁‖ ≤ u₀`.
pub fn is_realizable_full1(u: &MomentVec) -> bool {
    u.kind == BasisKind::Full1 && full1_ok(&u.values, 0.0)
}

/// `‖u₁‖ ≤ u₀` plus the sign pattern of the quadrant.
pub fn is_realizable_quarter1(u: &MomentVec) -> bool {
    match u.kind {
        BasisKind::Quarter1(q) => quarter1_ok(&u.values, q, 0.0),
        _ => false,
    }
}

/// Necessary and sufficient first-order condition for mixed moments.
pub fn is_realizable_mixed1(u: &MomentVec, slack: f64) -> bool {
    u.kind == BasisKind::Mixed1 && mixed1_ok(&u.values, slack)
}

/// Realizability test of any first-order kind, with an absolute slack.
pub fn is_realizable(u: &MomentVec, slack: f64) -> bool {
    is_realizable_slice(u.kind, &u.values, slack)
}

pub(crate) fn is_realizable_slice(kind: BasisKind, v: &[f64], slack: f64) -> bool {
    match kind {
        BasisKind::Full1 => full1_ok(v, slack),
        BasisKind::Quarter1(q) => quarter1_ok(v, q, slack),
        BasisKind::Mixed1 => mixed1_ok(v, slack),
        BasisKind::QuarterSet1 => {
            Quadrant::ALL.iter().all(|q| quarter1_ok(&v[3 * q.index()..3 * q.index() + 3], *q, slack))
        }
    }
}

/// How far a vector is inside (positive) or outside (negative) the
/// realizable set, as the smallest constraint margin.
pub fn realizability_margin(kind: BasisKind, v: &[f64]) -> f64 {
    let quarter = |v: &[f64], q: Quadrant| {
        let (sx, sy) = q.signs();
        (v[0] - v[1].hypot(v[2])).min(sx * v[1]).min(sy * v[2])
    };
    match kind {
        BasisKind::Full1 => v[0] - v[1].hypot(v[2]),
        BasisKind::Quarter1(q) => quarter(v, q),
        BasisKind::Mixed1 => (v[0] - (v[1] - v[2]).hypot(v[3] - v[4]))
            .min(v[1])
            .min(-v[2])
            .min(v[3])
            .min(-v[4]),
        BasisKind::QuarterSet1 => Quadrant::ALL
            .iter()
            .map(|q| quarter(&v[3 * q.index()..3 * q.index() + 3], *q))
            .fold(f64::INFINITY, f64::min),
    }
}

pub fn mm_norm(phi: &NormalizedMixed1) -> f64 {
    let [a, b] = phi.spread();
    a.hypot(b)
}

fn ratio_or_half(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.5
    } else {
        (num / den).clamp(0.0, 1.0)
    }
}

/// `γ₁ = φy+/(φy+ − φy−)`, `γ₂ = φx+/(φx+ − φx−)`, with `1/2` for `0/0`.
pub fn gamma_interpolation(phi: &NormalizedMixed1) -> GammaPair {
    let [dx, dy] = phi.spread();
    GammaPair { gamma1: ratio_or_half(phi.phi[2], dy), gamma2: ratio_or_half(phi.phi[0], dx) }
}

/// Normalized quarter moments `(i·(φx+ − φx−), j·(φy+ − φy−))` of the four
/// quadrants, in the order PP, MP, MM, PM.
pub fn quadrant_projection(phi: &NormalizedMixed1) -> [[f64; 2]; 4] {
    let [dx, dy] = phi.spread();
    Quadrant::ALL.map(|q| {
        let (sx, sy) = q.signs();
        [sx * dx, sy * dy]
    })
}

/// Single atom carrying a realizable quarter-moment vector.
pub fn realize_quarter1(u: &MomentVec) -> Result<AtomicDistribution> {
    let BasisKind::Quarter1(q) = u.kind else {
        return Err(Error::KindMismatch { expected: "quarter1".into(), got: u.kind.name() });
    };
    if !is_realizable_quarter1(u) {
        return Err(Error::NotRealizable(format!("{:?}", u.values)));
    }
    let v = &u.values;
    let omega = if v[0] > 0.0 { [v[1] / v[0], v[2] / v[0]] } else { [0.0, 0.0] };
    Ok(AtomicDistribution::new(vec![Atom { weight: v[0], omega, tag: Some(q) }]))
}

/// Four atoms, one per quadrant, reproducing a realizable mixed vector.
pub fn realize_mixed1(u: &MomentVec) -> Result<AtomicDistribution> {
    u.expect_kind(BasisKind::Mixed1)?;
    if !is_realizable_mixed1(u, 0.0) {
        return Err(Error::NotRealizable(format!("{:?}", u.values)));
    }
    let u00 = u.values[0];
    if u00 == 0.0 {
        return Ok(AtomicDistribution::default());
    }
    let phi = NormalizedMixed1::from_moments(u)?;
    let w = gamma_interpolation(&phi).quadrant_weights();
    let p = quadrant_projection(&phi);
    Ok(AtomicDistribution::new(
        Quadrant::ALL
            .iter()
            .map(|q| Atom { weight: u00 * w[q.index()], omega: p[q.index()], tag: Some(*q) })
            .collect(),
    ))
}

/// Pushes `u` into the realizable set.
///
/// Returns the limited vector; see [`limit_slice`] for the rules.
pub fn limit_to_realizable(u: &MomentVec, eps: f64) -> MomentVec {
    let mut values = u.values.clone();
    limit_slice(u.kind, &mut values, eps);
    MomentVec { kind: u.kind, values }
}

fn scale_first_moments(first: &mut [f64], norm_of: impl Fn(&[f64]) -> f64, target: f64) -> bool {
    let norm = norm_of(first);
    if norm <= target {
        return false;
    }
    let mut theta = target / norm;
    let orig: Vec<f64> = first.to_vec();
    loop {
        for (f, o) in first.iter_mut().zip(&orig) {
            *f = o * theta;
        }
        if norm_of(first) <= target {
            break;
        }
        theta *= 1.0 - f64::EPSILON;
    }
    true
}

/// In-place limiter. The density is floored at [`DENSITY_FLOOR`], wrongly
/// signed half or quarter moments are set to zero, and first moments whose
/// norm exceeds `(1 − eps)·u00` are scaled back onto that radius. Returns
/// whether anything changed.
pub fn limit_slice(kind: BasisKind, v: &mut [f64], eps: f64) -> bool {
    match kind {
        BasisKind::Full1 => limit_block(v, None, eps),
        BasisKind::Quarter1(q) => limit_block(v, Some(q), eps),
        BasisKind::QuarterSet1 => {
            let mut changed = false;
            for q in Quadrant::ALL {
                changed |= limit_block(&mut v[3 * q.index()..3 * q.index() + 3], Some(q), eps);
            }
            changed
        }
        BasisKind::Mixed1 => {
            let mut changed = floor_density(&mut v[0]);
            for (i, sign) in [(1, 1.0), (2, -1.0), (3, 1.0), (4, -1.0)] {
                if !(sign * v[i] >= 0.0) {
                    v[i] = 0.0;
                    changed = true;
                }
            }
            let target = (1.0 - eps) * v[0];
            changed |= scale_first_moments(&mut v[1..5], |f| (f[0] - f[1]).hypot(f[2] - f[3]), target);
            changed
        }
    }
}

fn floor_density(u00: &mut f64) -> bool {
    if !(*u00 >= DENSITY_FLOOR) {
        *u00 = DENSITY_FLOOR;
        true
    } else {
        false
    }
}

fn limit_block(v: &mut [f64], q: Option<Quadrant>, eps: f64) -> bool {
    let mut changed = floor_density(&mut v[0]);
    let (sx, sy) = q.map(|q| q.signs()).unwrap_or((0.0, 0.0));
    for (i, s) in [(1, sx), (2, sy)] {
        let bad = if q.is_some() { !(s * v[i] >= 0.0) } else { !v[i].is_finite() };
        if bad {
            v[i] = 0.0;
            changed = true;
        }
    }
    let target = (1.0 - eps) * v[0];
    changed |= scale_first_moments(&mut v[1..3], |f| f[0].hypot(f[1]), target);
    changed
}
