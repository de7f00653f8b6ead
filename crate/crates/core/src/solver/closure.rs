//! Per-cell closure evaluation: second moments by quadrant and the
//! Laplace-Beltrami moments.

use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use crate::collision::{lb_mixed_capped, lb_mixed_tabulated, LBMatrixMM1};
use crate::entropy::{DualSettings, EntropySolver, LinearClosure, QM1Table};
use crate::error::{Error, Result};
use crate::kershaw::{mixed_quadrant_moments, qk1_second_moment, QuarterEngine};
use crate::moments::{gamma_interpolation, MomentVec, NormalizedMixed1, QuadrantMoments};
use crate::sphere::{BasisKind, QuadratureRule, Quadrant};

use super::{ClosureChoice, LbVariant};

/// Closure output for one state.
#[derive(Debug, Clone, PartialEq)]
pub struct CellEval {
    pub qm: QuadrantMoments,
    /// Laplace-Beltrami moments in basis order (unused entries are zero).
    pub lb: [f64; 5],
    /// A meridian trace hit the cap.
    pub capped: bool,
    /// `lb` was computed.
    pub has_lb: bool,
}

/// Evaluates a [`ClosureChoice`] on single moment vectors.
#[derive(Debug, Clone)]
pub struct ClosureEngine {
    choice: ClosureChoice,
    kind: BasisKind,
    linear: Option<LinearClosure>,
    entropy: Option<EntropySolver>,
    table: Option<Arc<QM1Table>>,
    trace_cap: f64,
    lb_matrix: LBMatrixMM1,
}

impl ClosureEngine {
    pub fn new(
        choice: ClosureChoice,
        quad: &QuadratureRule,
        dual: DualSettings,
        table: Option<Arc<QM1Table>>,
        trace_cap: f64,
    ) -> Result<Self> {
        let kind = choice.basis();
        if choice.needs_table() && table.is_none() {
            return Err(Error::Config("mk1 with the tabulated scattering closure needs a QM1 table".into()));
        }
        Ok(Self {
            choice,
            kind,
            linear: match choice {
                ClosureChoice::P1Linear => Some(LinearClosure::new(kind)?),
                _ => None,
            },
            entropy: if choice.is_entropy() { Some(EntropySolver::new(kind, quad, dual)?) } else { None },
            table,
            trace_cap,
            lb_matrix: LBMatrixMM1::default(),
        })
    }

    pub fn choice(&self) -> ClosureChoice {
        self.choice
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    /// Laplace-Beltrami moments for closures that do not need the ansatz,
    /// with the cap flag. `None` when the ansatz is required.
    pub fn direct_lb(&self, u: &[f64]) -> Result<Option<([f64; 5], bool)>> {
        let mut lb = [0.0; 5];
        match self.choice {
            ClosureChoice::P1Linear | ClosureChoice::M1Entropy => full_lb(u, &mut lb),
            ClosureChoice::MM1Entropy { lb: LbVariant::Polynomial } | ClosureChoice::MK1 { lb: LbVariant::Polynomial } => {
                lb = self.lb_matrix.apply(u)
            }
            ClosureChoice::MK1 { lb: LbVariant::Tabulated } => {
                let table = self.table.as_ref().expect("checked at construction");
                let mv = MomentVec::new(BasisKind::Mixed1, u.to_vec())?;
                let g = gamma_interpolation(&NormalizedMixed1::from_moments(&mv)?);
                let t = lb_mixed_tabulated(&mv, table, g, self.trace_cap)?;
                return Ok(Some((t.value, t.capped)));
            }
            ClosureChoice::MM1Entropy { lb: LbVariant::Tabulated } | ClosureChoice::QK1AdvectionOnly => return Ok(None),
        }
        Ok(Some((lb, false)))
    }

    /// Closes `u`. Entropy closures start Newton from `warm` and return the
    /// new multipliers.
    pub fn eval(&self, u: &[f64], warm: Option<&[f64]>, with_lb: bool) -> Result<(CellEval, Option<Vec<f64>>)> {
        let mut lb = [0.0; 5];
        let mut capped = false;
        let mut alpha = None;
        let qm = match self.choice {
            ClosureChoice::P1Linear => {
                full_lb(u, &mut lb);
                self.linear.as_ref().expect("built for p1").quadrant_moments(u)
            }
            ClosureChoice::M1Entropy | ClosureChoice::MM1Entropy { .. } => {
                let solver = self.entropy.as_ref().expect("built for entropy closures");
                let sol = solver.solve(&MomentVec::new(self.kind, u.to_vec())?, warm)?;
                let a = sol.alpha.alpha;
                if with_lb {
                    match self.choice {
                        ClosureChoice::MM1Entropy { lb: LbVariant::Tabulated } => {
                            let (v, c) = lb_mixed_capped(u, entropy_traces(solver, &a), self.trace_cap);
                            lb = v;
                            capped = c;
                        }
                        ClosureChoice::MM1Entropy { lb: LbVariant::Polynomial } => lb = self.lb_matrix.apply(u),
                        _ => full_lb(u, &mut lb),
                    }
                }
                let qm = solver.quadrant_moments(&a);
                alpha = Some(a);
                qm
            }
            ClosureChoice::MK1 { lb: variant } => {
                if with_lb {
                    match variant {
                        LbVariant::Polynomial => lb = self.lb_matrix.apply(u),
                        LbVariant::Tabulated => {
                            let table = self.table.as_ref().expect("checked at construction");
                            let mv = MomentVec::new(BasisKind::Mixed1, u.to_vec())?;
                            let g = gamma_interpolation(&NormalizedMixed1::from_moments(&mv)?);
                            let t = lb_mixed_tabulated(&mv, table, g, self.trace_cap)?;
                            lb = t.value;
                            capped = t.capped;
                        }
                    }
                }
                mixed_quadrant_moments(u, QuarterEngine::Kershaw)?
            }
            ClosureChoice::QK1AdvectionOnly => quarter_set_moments(u)?,
        };
        Ok((CellEval { qm, lb, capped, has_lb: with_lb }, alpha))
    }
}

/// Degree-one spherical harmonics are eigenfunctions with eigenvalue −2.
fn full_lb(u: &[f64], lb: &mut [f64; 5]) {
    lb[0] = 0.0;
    lb[1] = -2.0 * u[1];
    lb[2] = -2.0 * u[2];
}

/// Meridian traces `T_0..T_3` of a mixed exponential ansatz, averaging the
/// one-sided values where the ansatz jumps.
fn entropy_traces(solver: &EntropySolver, alpha: &[f64]) -> [f64; 4] {
    use Quadrant::*;
    let sides = [(PP, PM), (PP, MP), (MP, MM), (MM, PM)];
    let mut t = [0.0; 4];
    for (k, (a, b)) in sides.into_iter().enumerate() {
        let phi = k as f64 * FRAC_PI_2;
        t[k] = 0.5 * (solver.meridian_trace(alpha, phi, a) + solver.meridian_trace(alpha, phi, b));
    }
    t
}

/// Per-quadrant moments of four independent QK1 closures.
fn quarter_set_moments(u: &[f64]) -> Result<QuadrantMoments> {
    let mut out = QuadrantMoments::default();
    for q in Quadrant::ALL {
        let i = q.index();
        let b = &u[3 * i..3 * i + 3];
        if b[0] <= 0.0 {
            continue;
        }
        let phi = [b[1] / b[0], b[2] / b[0]];
        let t = qk1_second_moment(phi, q)?;
        out.0[i] = [b[0], b[1], b[2], b[0] * t[0][0], b[0] * t[0][1], b[0] * t[1][1]];
    }
    Ok(out)
}
