//! Minimum-entropy closures under the Maxwell-Boltzmann entropy, the linear
//! closure, and the tabulated quarter-moment entropy closure.

mod dual;
mod table;

pub use dual::{isotropic_target, DualEval, DualSettings, DualSolution, EntropySolver, MAX_EXPONENT};
pub use table::{qm1_eigen_deviation, qm1_tabulate, QM1Lookup, QM1Node, QM1Table, TableSettings};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::moments::{qm_index, Axis, MomentVec, QuadrantMoments, SignFilter};
use crate::sphere::{gram_matrix, monomial_integral, BasisKind, QuadratureRule, Quadrant};

/// Lagrange multipliers of an exponential ansatz `exp(bᵀα)`, or the
/// coefficients of a linear ansatz `bᵀα`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierVec {
    pub kind: BasisKind,
    pub alpha: Vec<f64>,
}

/// `⟨exp(bᵀα)⟩ − uᵀα` with gradient and Hessian, integrated on `quad`.
pub fn dual_objective(alpha: &MultiplierVec, u: &MomentVec, quad: &QuadratureRule) -> Result<DualEval> {
    u.expect_kind(alpha.kind)?;
    EntropySolver::new(alpha.kind, quad, DualSettings::default())?.objective(&alpha.alpha, u.values())
}

/// Newton solve of the dual problem with Armijo backtracking.
pub fn solve_dual(
    u: &MomentVec,
    alpha0: &MultiplierVec,
    tol: f64,
    max_iter: usize,
    quad: &QuadratureRule,
) -> Result<MultiplierVec> {
    let settings = DualSettings { tol, max_iter, ..DualSettings::default() };
    let solver = EntropySolver::new(u.kind(), quad, settings)?;
    u.expect_kind(alpha0.kind)?;
    Ok(solver.solve(u, Some(&alpha0.alpha))?.alpha)
}

/// `(⟨Ωx b ψ⟩, ⟨Ωy b ψ⟩)` for `ψ = exp(bᵀα)`.
pub fn closure_flux_entropy(alpha: &MultiplierVec, quad: &QuadratureRule) -> Result<(Vec<f64>, Vec<f64>)> {
    let solver = EntropySolver::new(alpha.kind, quad, DualSettings::default())?;
    let m = solver.quadrant_moments(&alpha.alpha);
    Ok((m.flux(alpha.kind, Axis::X, SignFilter::All), m.flux(alpha.kind, Axis::Y, SignFilter::All)))
}

/// The linear ansatz `ψ = bᵀα` with `⟨b bᵀ⟩ α = u`.
#[derive(Debug, Clone)]
pub struct LinearClosure {
    kind: BasisKind,
    gram_inv: DMatrix<f64>,
    /// Maps multipliers to per-quadrant moments (24 rows).
    to_quadrant: DMatrix<f64>,
}

impl LinearClosure {
    pub fn new(kind: BasisKind) -> Result<Self> {
        let g = gram_matrix(kind);
        let n = g.nrows();
        let gram_inv = g
            .try_inverse()
            .ok_or_else(|| Error::InvalidArgument(format!("gram matrix of {} is singular", kind.name())))?;
        let comps = kind.components();
        let monos = [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)];
        let mut to_quadrant = DMatrix::zeros(24, n);
        for q in Quadrant::ALL {
            for &(mx, my) in &monos {
                let row = 6 * q.index() + qm_index(mx, my);
                for (k, c) in comps.iter().enumerate() {
                    if c.support.contains(q) {
                        to_quadrant[(row, k)] = monomial_integral(c.ix + mx, c.iy + my, q.mask());
                    }
                }
            }
        }
        Ok(Self { kind, gram_inv, to_quadrant })
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    /// Coefficients of the linear ansatz.
    pub fn coefficients(&self, u: &[f64]) -> Vec<f64> {
        (&self.gram_inv * DVector::from_column_slice(u)).iter().copied().collect()
    }

    pub fn quadrant_moments(&self, u: &[f64]) -> QuadrantMoments {
        let a = &self.gram_inv * DVector::from_column_slice(u);
        let m = &self.to_quadrant * a;
        let mut out = QuadrantMoments::default();
        for q in 0..4 {
            for j in 0..6 {
                out.0[q][j] = m[6 * q + j];
            }
        }
        out
    }

    /// Value of the ansatz at a projected direction.
    pub fn ansatz(&self, u: &[f64], omega: [f64; 2], quadrant: Quadrant) -> f64 {
        let a = self.coefficients(u);
        self.kind
            .components()
            .iter()
            .zip(&a)
            .map(|(c, a)| a * c.eval(omega, quadrant))
            .sum()
    }
}

/// Coefficients `α` solving `⟨b bᵀ⟩ α = u`. The induced `bᵀα` may be negative.
pub fn linear_closure(u: &MomentVec) -> Result<MultiplierVec> {
    let lc = LinearClosure::new(u.kind())?;
    Ok(MultiplierVec { kind: u.kind(), alpha: lc.coefficients(u.values()) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::{quadrature, Region};
    use std::f64::consts::PI;

    #[test]
    fn linear_isotropic() {
        let u = MomentVec::new(BasisKind::Full1, vec![1.0, 0.0, 0.0]).unwrap();
        let a = linear_closure(&u).unwrap();
        assert!((a.alpha[0] - 1.0 / (4.0 * PI)).abs() < 1e-15);
        assert!(a.alpha[1].abs() < 1e-15 && a.alpha[2].abs() < 1e-15);
    }

    #[test]
    fn linear_second_moments() {
        let lc = LinearClosure::new(BasisKind::Full1).unwrap();
        for u in [[1.0, 0.0, 0.0], [2.0, 0.5, -0.3]] {
            let m = lc.quadrant_moments(&u);
            let u20: f64 = m.0.iter().map(|r| r[3]).sum();
            let u11: f64 = m.0.iter().map(|r| r[4]).sum();
            assert!((u20 - u[0] / 3.0).abs() < 1e-14);
            assert!(u11.abs() < 1e-14);
        }
    }

    #[test]
    fn linear_mixed_beam_goes_negative() {
        let lc = LinearClosure::new(BasisKind::Mixed1).unwrap();
        let u = [1.0, 1.0, 0.0, 0.0, 0.0];
        let q = quadrature(Region::FullSphere, 10, 10).unwrap();
        let min = q.nodes.iter().map(|n| lc.ansatz(&u, n.omega, n.quadrant)).fold(f64::INFINITY, f64::min);
        assert!(min < 0.0);
        let back = lc.quadrant_moments(&u).moments(BasisKind::Mixed1);
        for (a, b) in back.iter().zip(u) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn entropy_isotropic_flux() {
        let q = quadrature(Region::FullSphere, 20, 20).unwrap();
        let solver = EntropySolver::new(BasisKind::Full1, &q, DualSettings::default()).unwrap();
        let alpha = MultiplierVec { kind: BasisKind::Full1, alpha: solver.isotropic_alpha(2.0) };
        let (fx, fy) = closure_flux_entropy(&alpha, &q).unwrap();
        assert!(fx[0].abs() < 1e-13 && (fx[1] - 2.0 / 3.0).abs() < 1e-12 && fx[2].abs() < 1e-13);
        assert!(fy[0].abs() < 1e-13 && fy[1].abs() < 1e-13 && (fy[2] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn entropy_flux_reflection() {
        let q = quadrature(Region::FullSphere, 20, 20).unwrap();
        let a = MultiplierVec { kind: BasisKind::Mixed1, alpha: vec![-2.0, 0.7, 0.3, -0.4, 0.2] };
        let r = MultiplierVec { kind: BasisKind::Mixed1, alpha: vec![-2.0, -0.3, -0.7, -0.4, 0.2] };
        let (fa, _) = closure_flux_entropy(&a, &q).unwrap();
        let (fr, _) = closure_flux_entropy(&r, &q).unwrap();
        assert!((fa[0] + fr[0]).abs() < 1e-12);
        assert!((fa[1] - fr[2]).abs() < 1e-12);
        assert!((fa[2] - fr[1]).abs() < 1e-12);
        assert!((fa[3] + fr[3]).abs() < 1e-12);
        assert!((fa[4] + fr[4]).abs() < 1e-12);
    }
}
