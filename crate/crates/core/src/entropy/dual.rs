//! Newton solver for the dual of the Maxwell-Boltzmann entropy problem.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::moments::{MomentVec, QuadrantMoments};
use crate::sphere::{basis_eval_projected, isotropic_moments, BasisKind, QuadratureRule, Quadrant};

use super::MultiplierVec;

const MAXD: usize = 5;
/// Largest exponent accepted before reporting a bounded-domain error.
pub const MAX_EXPONENT: f64 = 700.0;

/// Settings of the dual solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualSettings {
    pub tol: f64,
    pub max_iter: usize,
    /// Normalized first moments beyond this norm are blended toward the
    /// isotropic point before solving.
    pub max_norm: f64,
    /// Minimum magnitude of each normalized half or quarter first moment
    /// after blending.
    pub min_component: f64,
}

impl Default for DualSettings {
    fn default() -> Self {
        Self { tol: 1e-9, max_iter: 200, max_norm: 0.98, min_component: 1e-3 }
    }
}

/// Outcome of a successful solve.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub alpha: MultiplierVec,
    pub iterations: usize,
    /// Weight `r` of the isotropic point in the solved moments (0 when no
    /// regularization was needed).
    pub blend: f64,
}

/// Value, gradient and Hessian of the dual objective.
#[derive(Debug, Clone, PartialEq)]
pub struct DualEval {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

/// Precomputed basis values on the support of a basis kind.
#[derive(Debug, Clone)]
pub struct EntropySolver {
    kind: BasisKind,
    n: usize,
    weights: Vec<f64>,
    basis: Vec<[f64; MAXD]>,
    omega: Vec<[f64; 2]>,
    quadrant: Vec<Quadrant>,
    polar: Vec<(f64, f64)>,
    settings: DualSettings,
    iso: [f64; MAXD],
    /// Radius of the largest disc about the origin inside the convex hull of
    /// the projected nodes (restricted to the quadrant for quarter bases).
    reach: f64,
}

impl EntropySolver {
    /// Builds a solver for `kind` from a full-sphere rule. Nodes outside the
    /// support of the basis are dropped.
    pub fn new(kind: BasisKind, quad: &QuadratureRule, settings: DualSettings) -> Result<Self> {
        if kind == BasisKind::QuarterSet1 {
            return Err(Error::InvalidArgument("no entropy closure for stacked quarter bases".into()));
        }
        let n = kind.len();
        let support = kind.support();
        let mut s = Self {
            kind,
            n,
            weights: Vec::new(),
            basis: Vec::new(),
            omega: Vec::new(),
            quadrant: Vec::new(),
            polar: quad.polar.clone(),
            settings,
            iso: [0.0; MAXD],
            reach: 1.0,
        };
        for node in &quad.nodes {
            if !support.contains(node.quadrant) {
                continue;
            }
            let b = basis_eval_projected(kind, node.omega, node.quadrant);
            let mut arr = [0.0; MAXD];
            arr[..n].copy_from_slice(&b);
            s.weights.push(node.weight);
            s.basis.push(arr);
            s.omega.push(node.omega);
            s.quadrant.push(node.quadrant);
        }
        if s.weights.is_empty() {
            return Err(Error::InvalidArgument("quadrature has no nodes on the basis support".into()));
        }
        // Moments of the constant density on the support, normalized.
        let mut iso = [0.0; MAXD];
        let mass: f64 = s.weights.iter().sum();
        for (w, b) in s.weights.iter().zip(&s.basis) {
            for k in 0..n {
                iso[k] += w * b[k] / mass;
            }
        }
        s.iso = iso;
        s.reach = s.hull_reach();
        Ok(s)
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn settings(&self) -> DualSettings {
        self.settings
    }

    /// Largest normalized first-moment length representable in every
    /// direction on this rule; `max_norm` is relative to it.
    pub fn reach(&self) -> f64 {
        self.reach
    }

    /// Multipliers of the constant density with total mass `u00`.
    pub fn isotropic_alpha(&self, u00: f64) -> Vec<f64> {
        let mass: f64 = self.weights.iter().sum();
        let mut a = vec![0.0; self.n];
        a[0] = (u00 / mass).ln();
        a
    }

    fn exponent(&self, b: &[f64; MAXD], alpha: &[f64; MAXD]) -> f64 {
        let mut s = 0.0;
        for k in 0..self.n {
            s += b[k] * alpha[k];
        }
        s
    }

    /// Objective value only; `None` when an exponent leaves the safe range.
    fn value(&self, alpha: &[f64; MAXD], u: &[f64; MAXD]) -> Option<f64> {
        let mut v = 0.0;
        for (w, b) in self.weights.iter().zip(&self.basis) {
            let e = self.exponent(b, alpha);
            if e > MAX_EXPONENT {
                return None;
            }
            v += w * e.exp();
        }
        for k in 0..self.n {
            v -= u[k] * alpha[k];
        }
        Some(v)
    }

    /// Value, gradient and packed Hessian.
    fn eval(&self, alpha: &[f64; MAXD], u: &[f64; MAXD]) -> Result<(f64, [f64; MAXD], [[f64; MAXD]; MAXD])> {
        let n = self.n;
        let mut v = 0.0;
        let mut g = [0.0; MAXD];
        let mut h = [[0.0; MAXD]; MAXD];
        let mut max_e = f64::NEG_INFINITY;
        for (w, b) in self.weights.iter().zip(&self.basis) {
            let e = self.exponent(b, alpha);
            max_e = max_e.max(e);
            if e > MAX_EXPONENT {
                return Err(Error::BoundedDomain(e));
            }
            let p = w * e.exp();
            v += p;
            for i in 0..n {
                let pb = p * b[i];
                g[i] += pb;
                for j in 0..=i {
                    h[i][j] += pb * b[j];
                }
            }
        }
        if !max_e.is_finite() {
            return Err(Error::BoundedDomain(max_e));
        }
        for i in 0..n {
            v -= u[i] * alpha[i];
            g[i] -= u[i];
            for j in 0..i {
                h[j][i] = h[i][j];
            }
        }
        Ok((v, g, h))
    }

    /// Dual objective at `alpha` for moments `u`.
    pub fn objective(&self, alpha: &[f64], u: &[f64]) -> Result<DualEval> {
        let (a, uu) = (self.pack(alpha)?, self.pack(u)?);
        let (v, g, h) = self.eval(&a, &uu)?;
        let n = self.n;
        Ok(DualEval {
            value: v,
            gradient: DVector::from_fn(n, |i, _| g[i]),
            hessian: DMatrix::from_fn(n, n, |i, j| h[i][j]),
        })
    }

    fn pack(&self, v: &[f64]) -> Result<[f64; MAXD]> {
        if v.len() != self.n {
            return Err(Error::InvalidArgument(format!("expected {} values, got {}", self.n, v.len())));
        }
        let mut a = [0.0; MAXD];
        a[..self.n].copy_from_slice(v);
        Ok(a)
    }

    /// Distance from the origin to the convex hull boundary of the projected
    /// nodes. Normalized first moments are only representable on the rule
    /// inside this radius, so the blend threshold is scaled by it. Quarter
    /// bases keep the unscaled threshold.
    fn hull_reach(&self) -> f64 {
        if matches!(self.kind, BasisKind::Quarter1(_)) {
            return 1.0;
        }
        let mut pts: Vec<[f64; 2]> = self.omega.clone();
        pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
        let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
        // Andrew's monotone chain.
        let mut hull: Vec<[f64; 2]> = Vec::with_capacity(pts.len());
        for pass in 0..2 {
            let start = hull.len();
            let iter: Box<dyn Iterator<Item = &[f64; 2]>> =
                if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
            for &p in iter {
                while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                    hull.pop();
                }
                hull.push(p);
            }
            hull.pop();
        }
        if hull.len() < 3 {
            return 0.0;
        }
        (0..hull.len())
            .map(|k| {
                let (a, b) = (hull[k], hull[(k + 1) % hull.len()]);
                cross(a, b, [0.0, 0.0]) / (b[0] - a[0]).hypot(b[1] - a[1])
            })
            .fold(f64::INFINITY, f64::min)
            .clamp(0.0, 1.0)
    }

    /// Normalized moments after the near-boundary blend, and the blend weight.
    pub fn regularize(&self, u_hat: &[f64]) -> (Vec<f64>, f64) {
        let n = self.n;
        let blend = |r: f64| -> Vec<f64> { (0..n).map(|k| (1.0 - r) * u_hat[k] + r * self.iso[k]).collect() };
        if self.inside_margin(u_hat) {
            return (u_hat.to_vec(), 0.0);
        }
        // The margins hold at r = 1, so bisect on the smallest admissible r.
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.inside_margin(&blend(mid)) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        (blend(hi), hi)
    }

    fn inside_margin(&self, v: &[f64]) -> bool {
        let s = DualSettings { max_norm: self.settings.max_norm * self.reach, ..self.settings };
        match self.kind {
            BasisKind::Full1 => v[1].hypot(v[2]) <= s.max_norm,
            BasisKind::Quarter1(q) => {
                let (sx, sy) = q.signs();
                v[1].hypot(v[2]) <= s.max_norm && sx * v[1] >= s.min_component && sy * v[2] >= s.min_component
            }
            BasisKind::Mixed1 => {
                (v[1] - v[2]).hypot(v[3] - v[4]) <= s.max_norm
                    && v[1] >= s.min_component
                    && -v[2] >= s.min_component
                    && v[3] >= s.min_component
                    && -v[4] >= s.min_component
            }
            BasisKind::QuarterSet1 => false,
        }
    }

    /// Solves the dual for `u`, starting from `alpha0` when given.
    pub fn solve(&self, u: &MomentVec, alpha0: Option<&[f64]>) -> Result<DualSolution> {
        u.expect_kind(self.kind)?;
        let v = u.values();
        let u00 = v[0];
        if !(u00 > 0.0) || !crate::moments::is_realizable(u, 1e-12 * u00) {
            return Err(Error::NotRealizable(format!("{v:?}")));
        }
        let u_hat: Vec<f64> = v.iter().map(|x| x / u00).collect();
        let (target, blend) = self.regularize(&u_hat);
        let shift = u00.ln();
        let start = alpha0.map(|a| {
            let mut a = a.to_vec();
            a[0] -= shift;
            a
        });
        let t = self.pack(&target)?;
        let result = match start {
            Some(a) if a.iter().all(|x| x.is_finite()) => match self.newton(&t, self.pack(&a)?) {
                Ok(r) => Ok(r),
                Err(_) => self.newton(&t, self.pack(&self.isotropic_alpha(1.0))?),
            },
            _ => self.newton(&t, self.pack(&self.isotropic_alpha(1.0))?),
        };
        let (mut alpha, iterations) = result?;
        alpha[0] += shift;
        Ok(DualSolution {
            alpha: MultiplierVec { kind: self.kind, alpha: alpha[..self.n].to_vec() },
            iterations,
            blend,
        })
    }

    fn newton(&self, u: &[f64; MAXD], mut alpha: [f64; MAXD]) -> Result<([f64; MAXD], usize)> {
        let n = self.n;
        let s = self.settings;
        let mut residual = f64::INFINITY;
        for iter in 0..=s.max_iter {
            let (f, g, h) = self.eval(&alpha, u)?;
            residual = norm(&g[..n]);
            if residual <= s.tol {
                return Ok((alpha, iter));
            }
            if iter == s.max_iter {
                break;
            }
            let dir = cholesky_solve(&h, &g, n)
                .ok_or(Error::NonConvergence { iterations: iter, residual })?;
            let slope: f64 = (0..n).map(|k| -g[k] * dir[k]).sum();
            // Once the Newton decrement is below the rounding level of the
            // objective, Armijo cannot discriminate; take the full step.
            if -slope <= 1e-12 * (1.0 + f.abs()) {
                for k in 0..n {
                    alpha[k] -= dir[k];
                }
                continue;
            }
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..=40 {
                let mut trial = alpha;
                for k in 0..n {
                    trial[k] -= t * dir[k];
                }
                if let Some(ft) = self.value(&trial, u) {
                    if ft <= f + 1e-4 * t * slope {
                        alpha = trial;
                        accepted = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !accepted {
                // No descent is representable in floating point; accept the
                // iterate if the gradient is already tiny relative to the scale.
                if residual <= 1e3 * s.tol {
                    return Ok((alpha, iter));
                }
                return Err(Error::NonConvergence { iterations: iter, residual });
            }
        }
        Err(Error::NonConvergence { iterations: s.max_iter, residual })
    }

    /// Density of the ansatz at a projected direction.
    pub fn ansatz(&self, alpha: &[f64], omega: [f64; 2], quadrant: Quadrant) -> f64 {
        if !self.kind.support().contains(quadrant) {
            return 0.0;
        }
        let b = basis_eval_projected(self.kind, omega, quadrant);
        b.iter().zip(alpha).map(|(b, a)| b * a).sum::<f64>().exp()
    }

    /// Moments `⟨b exp(bᵀα)⟩` on the solver's quadrature.
    pub fn moments(&self, alpha: &[f64]) -> Vec<f64> {
        let a = self.pack(alpha).expect("multiplier length matches the basis");
        let mut m = vec![0.0; self.n];
        for (w, b) in self.weights.iter().zip(&self.basis) {
            let p = w * self.exponent(b, &a).exp();
            for k in 0..self.n {
                m[k] += p * b[k];
            }
        }
        m
    }

    /// Per-quadrant moments up to order two of the ansatz.
    pub fn quadrant_moments(&self, alpha: &[f64]) -> QuadrantMoments {
        let a = self.pack(alpha).expect("multiplier length matches the basis");
        let mut m = QuadrantMoments::default();
        for i in 0..self.weights.len() {
            let p = self.weights[i] * self.exponent(&self.basis[i], &a).exp();
            let [x, y] = self.omega[i];
            let row = &mut m.0[self.quadrant[i].index()];
            row[0] += p;
            row[1] += p * x;
            row[2] += p * y;
            row[3] += p * x * x;
            row[4] += p * x * y;
            row[5] += p * y * y;
        }
        m
    }

    /// `∫_0^π ψ(θ, azimuth) dθ` along a meridian, with the basis evaluated
    /// as seen from quadrant `side`.
    pub fn meridian_trace(&self, alpha: &[f64], azimuth: f64, side: Quadrant) -> f64 {
        let (s, c) = azimuth.sin_cos();
        self.polar
            .iter()
            .map(|(theta, w)| {
                let st = theta.sin();
                w * self.ansatz(alpha, [st * c, st * s], side)
            })
            .sum()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solves `H x = g` for a symmetric positive definite `H` of size `n`.
fn cholesky_solve(h: &[[f64; MAXD]; MAXD], g: &[f64; MAXD], n: usize) -> Option<[f64; MAXD]> {
    let mut l = [[0.0; MAXD]; MAXD];
    for i in 0..n {
        for j in 0..=i {
            let mut s = h[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    let mut y = [0.0; MAXD];
    for i in 0..n {
        let mut s = g[i];
        for k in 0..i {
            s -= l[i][k] * y[k];
        }
        y[i] = s / l[i][i];
    }
    let mut x = [0.0; MAXD];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k][i] * x[k];
        }
        x[i] = s / l[i][i];
    }
    Some(x)
}

/// Moments of the constant density of total mass `u00` for `kind`, using
/// the closed-form integrals (quarter bases are normalized on their quadrant).
pub fn isotropic_target(kind: BasisKind, u00: f64) -> Vec<f64> {
    match kind {
        BasisKind::Quarter1(q) => {
            let (sx, sy) = q.signs();
            vec![u00, 0.5 * sx * u00, 0.5 * sy * u00]
        }
        _ => isotropic_moments(kind, u00),
    }
}
