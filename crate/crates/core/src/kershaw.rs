//! Kershaw closures: the analytic quarter-moment closure QK1, its four-atom
//! realizing distribution, and the mixed-moment closure MK1 built from it.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::DMatrix;

use crate::entropy::QM1Table;
use crate::error::{Error, Result};
use crate::moments::{
    gamma_interpolation, quadrant_projection, realize_mixed1, Atom, AtomicDistribution, Axis, MomentVec,
    NormalizedMixed1, QuadrantMoments, SignFilter,
};
use crate::sphere::{BasisKind, Quadrant};

/// Tolerance for inputs sitting on the quadrant edges or the unit circle.
const EDGE_TOL: f64 = 1e-12;

/// `γ` at the isotropic quarter state `(1/2, 1/2)`.
pub fn gamma_iso() -> f64 {
    -(2.0 * PI - 3.0 * PI * SQRT_2 + 4.0) / (3.0 * PI * (SQRT_2 - 1.0))
}

/// Interpolation weight between the lower and upper eigenvalue bounds,
/// linear in the norm of the first moment.
pub fn qk1_gamma(norm_phi: f64) -> f64 {
    1.0 - SQRT_2 * (1.0 - gamma_iso()) * norm_phi
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KershawCoefficients {
    pub alpha1: f64,
    pub alpha2: f64,
    pub gamma: f64,
    /// `alpha1 + alpha2`, the eigenvalue belonging to `φ`
    pub lambda: f64,
}

/// Symmetric 2×2 tensor `[[xx, xy], [xy, yy]]`.
pub type Tensor2 = [[f64; 2]; 2];

/// Validates `phi` against quadrant `q` and returns `(|φx|, |φy|, ‖φ‖)`
/// with the norm clamped to 1.
fn reduce_to_pp(phi: [f64; 2], q: Quadrant) -> Result<(f64, f64, f64)> {
    if !phi[0].is_finite() || !phi[1].is_finite() {
        return Err(Error::InvalidArgument(format!("non-finite first moment {phi:?}")));
    }
    let (sx, sy) = q.signs();
    if sx * phi[0] < -EDGE_TOL || sy * phi[1] < -EDGE_TOL {
        return Err(Error::OutOfQuadrant(phi));
    }
    let (x, y) = ((sx * phi[0]).max(0.0), (sy * phi[1]).max(0.0));
    let n = x.hypot(y);
    if n > 1.0 + EDGE_TOL {
        return Err(Error::NotRealizable(format!("|φ| = {n} exceeds 1")));
    }
    Ok((x, y, n.min(1.0)))
}

fn coefficients_pp(x: f64, y: f64, n: f64) -> KershawCoefficients {
    let gamma = qk1_gamma(n);
    let alpha1 = x * y * (8.0 / 3.0 - 16.0 / (3.0 * PI)) * (1.0 - n * n);
    let lambda = gamma * n * n + (1.0 - gamma) * n;
    KershawCoefficients { alpha1, alpha2: lambda - alpha1, gamma, lambda }
}

/// Coefficients of the closure `α₁ I + α₂ φφᵀ/‖φ‖²`.
pub fn qk1_coefficients(phi: [f64; 2], q: Quadrant) -> Result<KershawCoefficients> {
    let (x, y, n) = reduce_to_pp(phi, q)?;
    Ok(coefficients_pp(x, y, n))
}

/// Normalized second moment of the QK1 closure on quadrant `q`.
///
/// At `φ = 0` every realizing distribution is concentrated at the pole and
/// the tensor is zero; this is also the limit of the formula.
pub fn qk1_second_moment(phi: [f64; 2], q: Quadrant) -> Result<Tensor2> {
    let (x, y, n) = reduce_to_pp(phi, q)?;
    let (sx, sy) = q.signs();
    Ok(second_moment_pp(x, y, n, sx * sy))
}

fn second_moment_pp(x: f64, y: f64, n: f64, off_sign: f64) -> Tensor2 {
    if n == 0.0 {
        return [[0.0; 2]; 2];
    }
    let k = coefficients_pp(x, y, n);
    let s = k.alpha2 / (n * n);
    let xy = off_sign * s * x * y;
    [[k.alpha1 + s * x * x, xy], [xy, k.alpha1 + s * y * y]]
}

/// The four-atom realizing distribution of QK1, in the orientation of the
/// quadrant it was built for. Index `[ι][0]` is `+`, `[ι][1]` is `−`;
/// `ι = 0` is the transverse pair, `ι = 1` the pair along `φ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KershawAtoms {
    pub c: [[f64; 2]; 2],
    pub d: [[f64; 2]; 2],
    pub v: [[f64; 2]; 2],
    pub lambda_bar: [f64; 2],
    /// Upper bounds on the displacements from the quadrant and disk constraints.
    pub d_max: [[f64; 2]; 2],
}

impl KershawAtoms {
    /// Residuals of the three moment equations (sum of weights, balance,
    /// second-moment) as their maximum absolute value.
    pub fn equation_residual(&self) -> f64 {
        let sum: f64 = self.c.iter().flatten().sum();
        let mut r = (sum - 1.0).abs();
        for i in 0..2 {
            let [cp, cm] = self.c[i];
            let [dp, dm] = self.d[i];
            r = r.max((cp * dp - cm * dm).abs());
            r = r.max((cp * dp * dp + cm * dm * dm - self.lambda_bar[i]).abs());
        }
        r
    }

    /// Smallest slack of the sign and displacement constraints (negative
    /// when violated).
    pub fn constraint_slack(&self) -> f64 {
        let mut s = f64::INFINITY;
        for i in 0..2 {
            for j in 0..2 {
                s = s.min(self.c[i][j]).min(self.d[i][j]).min(self.d_max[i][j] - self.d[i][j]);
            }
        }
        s
    }
}

/// QK1 realizing distribution with the coefficient set when the generic
/// four-atom construction applies.
#[derive(Debug, Clone, PartialEq)]
pub struct Qk1Realization {
    pub coefficients: Option<KershawAtoms>,
    pub atoms: AtomicDistribution,
}

/// Atoms of unit total weight realizing `(1, φ, qk1_second_moment(φ))`.
///
/// On a quadrant axis the transverse pair is dropped; on the unit circle or
/// at `φ = 0` a single atom at `φ` remains.
pub fn qk1_atoms(phi: [f64; 2], q: Quadrant) -> Result<Qk1Realization> {
    let (x, y, n) = reduce_to_pp(phi, q)?;
    let (sx, sy) = q.signs();
    let to_q = |p: [f64; 2]| [sx * p[0], sy * p[1]];
    let single = |p: [f64; 2]| Qk1Realization {
        coefficients: None,
        atoms: AtomicDistribution::new(vec![Atom { weight: 1.0, omega: to_q(p), tag: Some(q) }]),
    };
    if n == 0.0 {
        return Ok(single([0.0, 0.0]));
    }
    if n >= 1.0 {
        return Ok(single([x / n, y / n]));
    }

    let k = coefficients_pp(x, y, n);
    let gamma = k.gamma;
    let lambda_bar = [k.alpha1, (1.0 - gamma) * (n - n * n)];
    let v = [[-y / n, x / n], [x / n, y / n]];
    let rim = (1.0 - n * n).sqrt();

    let mut c = [[0.0; 2]; 2];
    let mut d = [[0.0; 2]; 2];
    let mut d_max = [[0.0; 2]; 2];
    let on_axis = x == 0.0 || y == 0.0 || lambda_bar[0] <= 0.0;

    d_max[1] = [1.0 - n, n];
    d[1][1] = n;
    if on_axis {
        d[1][0] = lambda_bar[1] / n;
    } else {
        d_max[0] = [(x / y * n).min(rim), (y / x * n).min(rim)];
        d[0][1] = d_max[0][1];
        d[0][0] = 2.0 * lambda_bar[0] / d[0][1];
        c[0] = weights(lambda_bar[0], d[0]);
        d[1][0] = 2.0 * lambda_bar[1] / d[1][1];
    }
    c[1] = weights(lambda_bar[1], d[1]);

    let mut atoms = AtomicDistribution::default();
    for i in 0..2 {
        for (j, sign) in [1.0, -1.0].into_iter().enumerate() {
            if c[i][j] == 0.0 && i == 0 && on_axis {
                continue;
            }
            let p = [x + sign * d[i][j] * v[i][0], y + sign * d[i][j] * v[i][1]];
            // Atoms that land on an edge up to rounding are snapped onto it.
            let p = [p[0].max(0.0), p[1].max(0.0)];
            atoms.push(c[i][j], to_q(p), Some(q));
        }
    }
    let v_q = [to_q(v[0]), to_q(v[1])];
    Ok(Qk1Realization {
        coefficients: Some(KershawAtoms { c, d, v: v_q, lambda_bar, d_max }),
        atoms,
    })
}

fn weights(lambda_bar: f64, d: [f64; 2]) -> [f64; 2] {
    let s = d[0] + d[1];
    [lambda_bar / (d[0] * s), lambda_bar / (d[1] * s)]
}

/// Which nonnegative quarter distribution feeds the mixed closure.
#[derive(Debug, Clone, Copy)]
pub enum QuarterEngine<'a> {
    /// Four-atom QK1 distributions.
    Kershaw,
    /// Tabulated quarter-moment minimum-entropy distributions.
    Table(&'a QM1Table),
}

/// Second moments of a mixed closure, grouped by the half-spaces the mixed
/// fluxes need.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixedSecondMoments {
    pub u20_xp: f64,
    pub u20_xm: f64,
    pub u02_yp: f64,
    pub u02_ym: f64,
    /// `u11` on the quadrants PP, MP, MM, PM
    pub u11: [f64; 4],
    pub quadrants: QuadrantMoments,
}

impl From<QuadrantMoments> for MixedSecondMoments {
    fn from(m: QuadrantMoments) -> Self {
        let r = &m.0;
        Self {
            u20_xp: r[0][3] + r[3][3],
            u20_xm: r[1][3] + r[2][3],
            u02_yp: r[0][5] + r[1][5],
            u02_ym: r[2][5] + r[3][5],
            u11: [r[0][4], r[1][4], r[2][4], r[3][4]],
            quadrants: m,
        }
    }
}

/// The 16-atom MK1 distribution: QK1 atoms at each quadrant projection,
/// weighted by the mixed convex coefficients.
pub fn mk1_atoms(u: &MomentVec) -> Result<AtomicDistribution> {
    let base = realize_mixed1(u)?;
    let mut out = AtomicDistribution::default();
    for a in &base.atoms {
        let q = a.tag.expect("mixed realization tags every atom");
        for atom in qk1_atoms(a.omega, q)?.atoms.atoms {
            out.push(a.weight * atom.weight, atom.omega, atom.tag);
        }
    }
    Ok(out)
}

/// Second moments of the MK1 closure as moments of its realizing
/// distribution.
pub fn mk1_closure(u: &MomentVec, engine: QuarterEngine<'_>) -> Result<MixedSecondMoments> {
    match engine {
        QuarterEngine::Kershaw => Ok(mk1_atoms(u)?.quadrant_moments().into()),
        QuarterEngine::Table(_) => Ok(mixed_quadrant_moments(u.values(), engine)?.into()),
    }
}

/// Per-quadrant moments of the mixed distribution assembled from quarter
/// closures, without building atoms. `u` is a `Mixed1` vector that must be
/// realizable up to rounding.
pub fn mixed_quadrant_moments(u: &[f64], engine: QuarterEngine<'_>) -> Result<QuadrantMoments> {
    let u00 = u[0];
    let mut out = QuadrantMoments::default();
    if u00 <= 0.0 {
        return Ok(out);
    }
    let phi = NormalizedMixed1 { phi: [u[1] / u00, u[2] / u00, u[3] / u00, u[4] / u00] };
    let w = gamma_interpolation(&phi).quadrant_weights();
    let proj = quadrant_projection(&phi);
    for q in Quadrant::ALL {
        let i = q.index();
        let p = proj[i];
        let t = match engine {
            QuarterEngine::Kershaw => qk1_second_moment(p, q)?,
            QuarterEngine::Table(table) => {
                let l = table.lookup(p, q)?;
                [[l.u20, l.u11], [l.u11, l.u02]]
            }
        };
        let m = u00 * w[i];
        out.0[i] = [m, m * p[0], m * p[1], m * t[0][0], m * t[0][1], m * t[1][1]];
    }
    Ok(out)
}

/// Flux of a single QK1 quarter state `(u0, u10, u01)` along `axis`.
pub fn qk1_flux(u: [f64; 3], q: Quadrant, axis: Axis) -> Result<[f64; 3]> {
    if u[0] <= 0.0 {
        return Err(Error::NotRealizable(format!("density {} is not positive", u[0])));
    }
    let t = qk1_second_moment([u[1] / u[0], u[2] / u[0]], q)?;
    Ok(match axis {
        Axis::X => [u[1], u[0] * t[0][0], u[0] * t[0][1]],
        Axis::Y => [u[2], u[0] * t[0][1], u[0] * t[1][1]],
    })
}

/// Flux of the MK1 closure along `axis`.
pub fn mk1_flux(u: &[f64], axis: Axis) -> Result<Vec<f64>> {
    Ok(mixed_quadrant_moments(u, QuarterEngine::Kershaw)?.flux(BasisKind::Mixed1, axis, SignFilter::All))
}

/// Central finite-difference Jacobian with relative step `rel_step`.
pub fn fd_jacobian<F>(f: F, u: &[f64], rel_step: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let n = u.len();
    let scale = u.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let h = rel_step * scale;
    let mut jac = DMatrix::zeros(n, n);
    let mut up = u.to_vec();
    for j in 0..n {
        up[j] = u[j] + h;
        let fp = f(&up)?;
        up[j] = u[j] - h;
        let fm = f(&up)?;
        up[j] = u[j];
        for i in 0..n {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// Largest `|Im λ| / (1 + |Re λ|)` over the eigenvalues of `m`.
pub fn max_relative_imaginary(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues().iter().map(|z| z.im.abs() / (1.0 + z.re.abs())).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::moments_of_atomic;
    use std::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn gamma_examples() {
        assert!((qk1_gamma(FRAC_1_SQRT_2) - gamma_iso()).abs() < 1e-15);
        assert!((gamma_iso() - 0.7801).abs() < 5e-5);
        assert_eq!(qk1_gamma(0.0), 1.0);
        assert!((qk1_gamma(1.0) - 0.6890).abs() < 5e-5);
    }

    #[test]
    fn isotropic_second_moment() {
        let t = qk1_second_moment([0.5, 0.5], Quadrant::PP).unwrap();
        let off = 2.0 / (3.0 * PI);
        assert!((t[0][0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((t[1][1] - 1.0 / 3.0).abs() < 1e-15);
        assert!((t[0][1] - off).abs() < 1e-15);
        let t = qk1_second_moment([-0.5, 0.5], Quadrant::MP).unwrap();
        assert!((t[0][1] + off).abs() < 1e-15);
    }

    #[test]
    fn boundary_and_axis_tensors() {
        let s = FRAC_1_SQRT_2;
        let t = qk1_second_moment([s, s], Quadrant::PP).unwrap();
        for v in t.iter().flatten() {
            assert!((v - 0.5).abs() < 1e-15);
        }
        let p = 0.6;
        let t = qk1_second_moment([0.0, p], Quadrant::PP).unwrap();
        let g = qk1_gamma(p);
        let lambda = g * p * p + (1.0 - g) * p;
        assert_eq!(t[0][0], 0.0);
        assert_eq!(t[0][1], 0.0);
        assert!((t[1][1] - lambda).abs() < 1e-15);
        assert!(t[1][1] <= p && t[1][1] >= p * p);
        assert_eq!(qk1_second_moment([0.0, 0.0], Quadrant::MM).unwrap(), [[0.0; 2]; 2]);
    }

    #[test]
    fn invalid_inputs() {
        assert!(matches!(qk1_second_moment([-0.2, 0.3], Quadrant::PP), Err(Error::OutOfQuadrant(_))));
        assert!(qk1_second_moment([0.9, 0.9], Quadrant::PP).is_err());
    }

    #[test]
    fn isotropic_atoms_match_closed_form() {
        let r = qk1_atoms([0.5, 0.5], Quadrant::PP).unwrap();
        let k = r.coefficients.unwrap();
        let n = FRAC_1_SQRT_2;
        let closed = 2.0 * SQRT_2 * (4.0 - PI) * (SQRT_2 + 1.0) / (3.0 * PI) * (n - n * n);
        assert!((k.d[1][0] - closed).abs() < 1e-12);
        assert!((closed - 0.1288).abs() < 5e-5);
    }

    fn check_realization(phi: [f64; 2], q: Quadrant) {
        let r = qk1_atoms(phi, q).unwrap();
        r.atoms.validate(1e-12).unwrap();
        let m = r.atoms.quadrant_moments().0[q.index()];
        let t = qk1_second_moment(phi, q).unwrap();
        let expected = [1.0, phi[0], phi[1], t[0][0], t[0][1], t[1][1]];
        for (a, b) in m.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{phi:?} {q:?}: {m:?} vs {expected:?}");
        }
        if let Some(k) = r.coefficients {
            assert!(k.equation_residual() < 1e-12);
            assert!(k.constraint_slack() > -1e-12);
        }
    }

    #[test]
    fn atoms_reproduce_moments() {
        for q in Quadrant::ALL {
            let (sx, sy) = q.signs();
            for &(x, y) in &[(0.4, 0.6), (0.01, 0.9), (0.7, 0.0), (0.0, 0.3), (1e-9, 1e-9), (0.999, 0.01)] {
                check_realization([sx * x, sy * y], q);
            }
        }
    }

    #[test]
    fn degenerate_atom_sets() {
        let r = qk1_atoms([0.0, 0.0], Quadrant::PP).unwrap();
        assert_eq!(r.atoms.atoms.len(), 1);
        let r = qk1_atoms([0.6, 0.8], Quadrant::PP).unwrap();
        assert_eq!(r.atoms.atoms.len(), 1);
        let r = qk1_atoms([0.5, 0.0], Quadrant::PP).unwrap();
        assert_eq!(r.atoms.atoms.len(), 2);
    }

    #[test]
    fn mk1_isotropic_interpolation() {
        let u = MomentVec::new(BasisKind::Mixed1, vec![2.0, 0.5, -0.5, 0.5, -0.5]).unwrap();
        let m = mk1_closure(&u, QuarterEngine::Kershaw).unwrap();
        assert!((m.u20_xp + m.u20_xm - 2.0 / 3.0).abs() < 1e-14);
        assert!((m.u02_yp + m.u02_ym - 2.0 / 3.0).abs() < 1e-14);
        assert!((m.u20_xp - 1.0 / 3.0).abs() < 1e-14);
        assert!((m.u11[0] - 2.0 * 0.25 * 2.0 / (3.0 * PI)).abs() < 1e-14);
    }

    #[test]
    fn mk1_beam() {
        let u = MomentVec::new(BasisKind::Mixed1, vec![1.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        let m = mk1_closure(&u, QuarterEngine::Kershaw).unwrap();
        assert!((m.u20_xp - 1.0).abs() < 1e-14);
        assert!(m.u11.iter().all(|v| v.abs() < 1e-14));
        assert!(m.u02_yp.abs() < 1e-14 && m.u20_xm.abs() < 1e-14);
    }

    #[test]
    fn mk1_fast_path_matches_atoms() {
        let u = MomentVec::new(BasisKind::Mixed1, vec![1.5, 0.4, -0.2, 0.1, -0.5]).unwrap();
        let a = mk1_atoms(&u).unwrap();
        let fast = mixed_quadrant_moments(u.values(), QuarterEngine::Kershaw).unwrap();
        let slow = a.quadrant_moments();
        for (r1, r2) in fast.0.iter().zip(&slow.0) {
            for (x, y) in r1.iter().zip(r2) {
                assert!((x - y).abs() < 1e-13);
            }
        }
        let back = moments_of_atomic(&a, BasisKind::Mixed1);
        for (x, y) in back.values().iter().zip(u.values()) {
            assert!((x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn homogeneity() {
        let v = [1.0, 0.3, -0.2, 0.25, -0.1];
        let f1 = mk1_flux(&v, Axis::X).unwrap();
        let f3 = mk1_flux(&v.map(|x| 3.0 * x), Axis::X).unwrap();
        for (a, b) in f1.iter().zip(&f3) {
            assert!((3.0 * a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn qk1_jacobian_is_real_at_sample() {
        let u = [1.0, 0.3, 0.5];
        let f = |v: &[f64]| qk1_flux([v[0], v[1], v[2]], Quadrant::PP, Axis::X).map(|a| a.to_vec());
        let j = fd_jacobian(f, &u, 1e-6).unwrap();
        assert!(max_relative_imaginary(&j) <= 1e-7);
    }
}
