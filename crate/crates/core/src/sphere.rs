//! Angular geometry on the unit sphere reduced to the projected (Ωx, Ωy) plane.
//!
//! Directions are parametrized by the cosine of the polar angle `mu` and the
//! azimuth. Quarter-spaces are azimuthal quadrants; every basis used in this
//! crate is a list of monomials `Ωx^ix Ωy^iy` multiplied by the indicator of a
//! union of quadrants, which makes all sphere integrals sums of closed-form
//! quadrant integrals.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::DMatrix;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// A direction on the unit sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction {
    mu: f64,
    azimuth: f64,
}

impl Direction {
    /// Builds a direction, wrapping the azimuth into `[0, 2π)`.
    pub fn new(mu: f64, azimuth: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&mu) || !azimuth.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "direction needs mu in [-1, 1] and finite azimuth, got ({mu}, {azimuth})"
            )));
        }
        let mut azimuth = azimuth.rem_euclid(2.0 * PI);
        if azimuth >= 2.0 * PI {
            azimuth = 0.0;
        }
        Ok(Self { mu, azimuth })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn azimuth(&self) -> f64 {
        self.azimuth
    }

    /// Quadrant under the half-open azimuth convention `[a, b)`.
    pub fn quadrant(&self) -> Quadrant {
        Quadrant::of_azimuth(self.azimuth)
    }
}

/// Projected components `(Ωx, Ωy)` of a direction.
pub fn omega_project(d: Direction) -> (f64, f64) {
    let s = (1.0 - d.mu * d.mu).max(0.0).sqrt();
    let (sin, cos) = d.azimuth.sin_cos();
    (s * cos, s * sin)
}

/// Azimuthal quadrants. The letters give the signs of (Ωx, Ωy).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Quadrant {
    /// azimuth in [0, π/2]
    PP,
    /// azimuth in [π/2, π]
    MP,
    /// azimuth in [π, 3π/2]
    MM,
    /// azimuth in [3π/2, 2π]
    PM,
}

impl Quadrant {
    pub const ALL: [Quadrant; 4] = [Quadrant::PP, Quadrant::MP, Quadrant::MM, Quadrant::PM];

    pub fn index(self) -> usize {
        match self {
            Quadrant::PP => 0,
            Quadrant::MP => 1,
            Quadrant::MM => 2,
            Quadrant::PM => 3,
        }
    }

    /// Signs of (Ωx, Ωy) inside the quadrant.
    pub fn signs(self) -> (f64, f64) {
        match self {
            Quadrant::PP => (1.0, 1.0),
            Quadrant::MP => (-1.0, 1.0),
            Quadrant::MM => (-1.0, -1.0),
            Quadrant::PM => (1.0, -1.0),
        }
    }

    pub fn from_signs(x_positive: bool, y_positive: bool) -> Self {
        match (x_positive, y_positive) {
            (true, true) => Quadrant::PP,
            (false, true) => Quadrant::MP,
            (false, false) => Quadrant::MM,
            (true, false) => Quadrant::PM,
        }
    }

    /// Azimuth interval `[start, start + π/2]`.
    pub fn azimuth_start(self) -> f64 {
        self.index() as f64 * FRAC_PI_2
    }

    pub fn of_azimuth(azimuth: f64) -> Self {
        let k = (azimuth.rem_euclid(2.0 * PI) / FRAC_PI_2).floor() as i64;
        Quadrant::ALL[k.clamp(0, 3) as usize]
    }

    /// Quadrant of a projected point under the half-open azimuth convention.
    /// The origin (a pole) is assigned to `PP`.
    pub fn of_point(omega: [f64; 2]) -> Self {
        let [x, y] = omega;
        if x > 0.0 && y >= 0.0 {
            Quadrant::PP
        } else if x <= 0.0 && y > 0.0 {
            Quadrant::MP
        } else if x < 0.0 && y <= 0.0 {
            Quadrant::MM
        } else if x >= 0.0 && y < 0.0 {
            Quadrant::PM
        } else {
            Quadrant::PP
        }
    }

    /// True when the point lies in the closed quadrant.
    pub fn contains_closed(self, omega: [f64; 2]) -> bool {
        let (sx, sy) = self.signs();
        sx * omega[0] >= 0.0 && sy * omega[1] >= 0.0
    }

    pub fn mask(self) -> QuadrantMask {
        QuadrantMask(1 << self.index())
    }

    pub fn name(self) -> &'static str {
        match self {
            Quadrant::PP => "PP",
            Quadrant::MP => "MP",
            Quadrant::MM => "MM",
            Quadrant::PM => "PM",
        }
    }
}

/// A union of quadrants as a bit set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QuadrantMask(pub u8);

impl QuadrantMask {
    pub const NONE: QuadrantMask = QuadrantMask(0);
    pub const ALL: QuadrantMask = QuadrantMask(0b1111);

    pub fn contains(self, q: Quadrant) -> bool {
        self.0 & (1 << q.index()) != 0
    }

    pub fn intersect(self, other: QuadrantMask) -> QuadrantMask {
        QuadrantMask(self.0 & other.0)
    }

    pub fn quadrants(self) -> impl Iterator<Item = Quadrant> {
        Quadrant::ALL.into_iter().filter(move |q| self.contains(*q))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HalfSpace {
    /// Ωx ≥ 0: quadrants PP and PM
    Xp,
    /// Ωx ≤ 0: quadrants MP and MM
    Xm,
    /// Ωy ≥ 0: quadrants PP and MP
    Yp,
    /// Ωy ≤ 0: quadrants MM and PM
    Ym,
}

impl HalfSpace {
    pub fn mask(self) -> QuadrantMask {
        match self {
            HalfSpace::Xp => QuadrantMask(0b1001),
            HalfSpace::Xm => QuadrantMask(0b0110),
            HalfSpace::Yp => QuadrantMask(0b0011),
            HalfSpace::Ym => QuadrantMask(0b1100),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    FullSphere,
    Quadrant(Quadrant),
    HalfSpace(HalfSpace),
}

impl Region {
    pub fn mask(self) -> QuadrantMask {
        match self {
            Region::FullSphere => QuadrantMask::ALL,
            Region::Quadrant(q) => q.mask(),
            Region::HalfSpace(h) => h.mask(),
        }
    }

    /// Surface measure of the region.
    pub fn area(self) -> f64 {
        PI * self.mask().quadrants().count() as f64
    }
}

/// One basis function: `Ωx^ix Ωy^iy` times the indicator of `support`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BasisComponent {
    pub ix: u32,
    pub iy: u32,
    pub support: QuadrantMask,
}

impl BasisComponent {
    const fn new(ix: u32, iy: u32, support: u8) -> Self {
        Self { ix, iy, support: QuadrantMask(support) }
    }

    pub fn eval(&self, omega: [f64; 2], quadrant: Quadrant) -> f64 {
        if self.support.contains(quadrant) {
            omega[0].powi(self.ix as i32) * omega[1].powi(self.iy as i32)
        } else {
            0.0
        }
    }
}

const FULL1: [BasisComponent; 3] = [
    BasisComponent::new(0, 0, 0b1111),
    BasisComponent::new(1, 0, 0b1111),
    BasisComponent::new(0, 1, 0b1111),
];

const MIXED1: [BasisComponent; 5] = [
    BasisComponent::new(0, 0, 0b1111),
    BasisComponent::new(1, 0, 0b1001),
    BasisComponent::new(1, 0, 0b0110),
    BasisComponent::new(0, 1, 0b0011),
    BasisComponent::new(0, 1, 0b1100),
];

/// Angular bases of order one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BasisKind {
    /// (1, Ωx, Ωy)
    Full1,
    /// (1, Ωx, Ωy) restricted to one quadrant
    Quarter1(Quadrant),
    /// (1, Ωx 1_{Sx+}, Ωx 1_{Sx−}, Ωy 1_{Sy+}, Ωy 1_{Sy−})
    Mixed1,
    /// The four `Quarter1` bases stacked in the order PP, MP, MM, PM (12 components).
    QuarterSet1,
}

impl BasisKind {
    pub fn len(self) -> usize {
        match self {
            BasisKind::Full1 | BasisKind::Quarter1(_) => 3,
            BasisKind::Mixed1 => 5,
            BasisKind::QuarterSet1 => 12,
        }
    }

    pub fn components(self) -> Vec<BasisComponent> {
        match self {
            BasisKind::Full1 => FULL1.to_vec(),
            BasisKind::Mixed1 => MIXED1.to_vec(),
            BasisKind::Quarter1(q) => quarter_components(q).to_vec(),
            BasisKind::QuarterSet1 => Quadrant::ALL.iter().flat_map(|q| quarter_components(*q)).collect(),
        }
    }

    /// Quadrants on which the basis is not identically zero.
    pub fn support(self) -> QuadrantMask {
        match self {
            BasisKind::Quarter1(q) => q.mask(),
            _ => QuadrantMask::ALL,
        }
    }

    pub fn name(self) -> String {
        match self {
            BasisKind::Full1 => "full1".into(),
            BasisKind::Quarter1(q) => format!("quarter1-{}", q.name()),
            BasisKind::Mixed1 => "mixed1".into(),
            BasisKind::QuarterSet1 => "quarterset1".into(),
        }
    }

    /// Column labels used by the field writers.
    pub fn component_labels(self) -> Vec<String> {
        match self {
            BasisKind::Full1 => vec!["u00".into(), "u10".into(), "u01".into()],
            BasisKind::Quarter1(q) => {
                let n = q.name();
                vec![format!("u00_{n}"), format!("u10_{n}"), format!("u01_{n}")]
            }
            BasisKind::Mixed1 => vec![
                "u00".into(),
                "u10_xp".into(),
                "u10_xm".into(),
                "u01_yp".into(),
                "u01_ym".into(),
            ],
            BasisKind::QuarterSet1 => Quadrant::ALL
                .iter()
                .flat_map(|q| BasisKind::Quarter1(*q).component_labels())
                .collect(),
        }
    }
}

fn quarter_components(q: Quadrant) -> [BasisComponent; 3] {
    let m = q.mask().0;
    [BasisComponent::new(0, 0, m), BasisComponent::new(1, 0, m), BasisComponent::new(0, 1, m)]
}

/// Basis values at a direction. `tag` overrides the half-open quadrant
/// assignment for directions lying on a quadrant boundary.
pub fn basis_eval(kind: BasisKind, d: Direction, tag: Option<Quadrant>) -> Vec<f64> {
    let (x, y) = omega_project(d);
    basis_eval_projected(kind, [x, y], tag.unwrap_or_else(|| d.quadrant()))
}

/// Basis values at a projected point assigned to `quadrant`.
pub fn basis_eval_projected(kind: BasisKind, omega: [f64; 2], quadrant: Quadrant) -> Vec<f64> {
    kind.components().iter().map(|c| c.eval(omega, quadrant)).collect()
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, refined by Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// A node of a sphere quadrature, with the quadrant it was generated for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadNode {
    pub dir: Direction,
    pub omega: [f64; 2],
    pub quadrant: Quadrant,
    pub weight: f64,
}

/// Tensor-product rule built quadrant by quadrant.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<QuadNode>,
    pub region: Region,
    pub n_polar: usize,
    pub n_azimuth: usize,
    /// Gauss-Legendre rule in the polar angle on `[0, π]` (angle, weight).
    pub polar: Vec<(f64, f64)>,
}

impl QuadratureRule {
    pub fn total_weight(&self) -> f64 {
        self.nodes.iter().map(|n| n.weight).sum()
    }

    /// Integral of `f(Ωx, Ωy, quadrant)` over the rule's region.
    pub fn integrate<F: Fn([f64; 2], Quadrant) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().map(|n| n.weight * f(n.omega, n.quadrant)).sum()
    }

    /// Integral of `g(θ)` over the polar angle, `∫_0^π g dθ`.
    pub fn integrate_polar<F: Fn(f64) -> f64>(&self, g: F) -> f64 {
        self.polar.iter().map(|(t, w)| w * g(*t)).sum()
    }
}

/// Tensor-product Gauss-Legendre rule over `region`.
///
/// The polar direction uses Gauss-Legendre points in the polar angle
/// `θ = arccos μ` with the Jacobian `sin θ` folded into the weights; odd
/// powers of `√(1-μ²)` are then integrated to machine precision, which a
/// rule in `μ` cannot do.
pub fn quadrature(region: Region, n_mu: usize, n_phi: usize) -> Result<QuadratureRule> {
    if n_mu < 2 || n_phi < 2 {
        return Err(Error::InvalidArgument(format!(
            "quadrature sizes must be at least 2, got {n_mu} x {n_phi}"
        )));
    }
    let (tp, tw) = gauss_legendre(n_mu);
    let (ap, aw) = gauss_legendre(n_phi);
    let polar: Vec<(f64, f64)> =
        tp.iter().zip(&tw).map(|(t, w)| (FRAC_PI_2 * (t + 1.0), FRAC_PI_2 * w)).collect();

    let mut nodes = Vec::with_capacity(4 * n_mu * n_phi);
    for q in region.mask().quadrants() {
        let start = q.azimuth_start();
        for &(theta, wt) in &polar {
            let (sin_t, mu) = theta.sin_cos();
            for (a, wa) in ap.iter().zip(&aw) {
                let phi = start + 0.25 * PI * (a + 1.0);
                let (s, c) = phi.sin_cos();
                nodes.push(QuadNode {
                    dir: Direction { mu, azimuth: phi },
                    omega: [sin_t * c, sin_t * s],
                    quadrant: q,
                    weight: wt * sin_t * 0.25 * PI * wa,
                });
            }
        }
    }
    Ok(QuadratureRule { nodes, region, n_polar: n_mu, n_azimuth: n_phi, polar })
}

fn beta(a: f64, b: f64) -> f64 {
    (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)).exp()
}

/// `∫_q Ωx^ix Ωy^iy dΩ` in closed form (beta functions).
pub fn quarter_monomial_integral(ix: u32, iy: u32, q: Quadrant) -> f64 {
    let k = (ix + iy) as f64;
    let magnitude =
        0.5 * beta(0.5, 1.0 + 0.5 * k) * beta((ix as f64 + 1.0) / 2.0, (iy as f64 + 1.0) / 2.0);
    let (sx, sy) = q.signs();
    magnitude * sx.powi(ix as i32) * sy.powi(iy as i32)
}

/// `∫_h Ωx^k dΩ` for `Xp`/`Xm` and `∫_h Ωy^k dΩ` for `Yp`/`Ym`.
pub fn half_monomial_integral(k: u32, h: HalfSpace) -> f64 {
    let base = 2.0 * PI / (k as f64 + 1.0);
    match h {
        HalfSpace::Xp | HalfSpace::Yp => base,
        HalfSpace::Xm | HalfSpace::Ym => base * (-1.0f64).powi(k as i32),
    }
}

/// `∫ Ωx^ix Ωy^iy` over the union of quadrants in `mask`.
pub fn monomial_integral(ix: u32, iy: u32, mask: QuadrantMask) -> f64 {
    mask.quadrants().map(|q| quarter_monomial_integral(ix, iy, q)).sum()
}

/// `⟨b bᵀ⟩` over the sphere.
pub fn gram_matrix(kind: BasisKind) -> DMatrix<f64> {
    let comps = kind.components();
    let n = comps.len();
    DMatrix::from_fn(n, n, |i, j| {
        let (a, b) = (comps[i], comps[j]);
        monomial_integral(a.ix + b.ix, a.iy + b.iy, a.support.intersect(b.support))
    })
}

/// `⟨b⟩`: moments of the constant distribution `ψ ≡ 1`.
pub fn basis_integral(kind: BasisKind) -> Vec<f64> {
    kind.components().iter().map(|c| monomial_integral(c.ix, c.iy, c.support)).collect()
}

/// Moments of the isotropic distribution with total density `u00`.
pub fn isotropic_moments(kind: BasisKind, u00: f64) -> Vec<f64> {
    let area = Region::FullSphere.area();
    basis_integral(kind).into_iter().map(|v| u00 * v / area).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4};

    #[test]
    fn projection_examples() {
        let (x, y) = omega_project(Direction::new(0.0, 0.0).unwrap());
        assert!((x - 1.0).abs() < 1e-15 && y.abs() < 1e-15);
        let (x, y) = omega_project(Direction::new(1.0, 2.3).unwrap());
        assert!(x.abs() < 1e-15 && y.abs() < 1e-15);
        let (x, y) = omega_project(Direction::new(0.0, FRAC_PI_4).unwrap());
        assert!((x - FRAC_1_SQRT_2).abs() < 1e-15 && (y - FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn invalid_direction_rejected() {
        assert!(Direction::new(1.5, 0.0).is_err());
        assert!(Direction::new(0.0, f64::NAN).is_err());
        let d = Direction::new(0.0, -FRAC_PI_2).unwrap();
        assert!((d.azimuth() - 1.5 * PI).abs() < 1e-15);
    }

    #[test]
    fn basis_examples() {
        let eq = Direction::new(0.0, 0.0).unwrap();
        assert_eq!(basis_eval(BasisKind::Mixed1, eq, None), vec![1.0, 1.0, 0.0, 0.0, 0.0]);
        let pole = Direction::new(1.0, 0.7).unwrap();
        let b = basis_eval(BasisKind::Full1, pole, None);
        assert_eq!(b[0], 1.0);
        assert!(b[1].abs() < 1e-15 && b[2].abs() < 1e-15);
        let outside = Direction::new(0.0, 0.75 * PI).unwrap();
        assert_eq!(basis_eval(BasisKind::Quarter1(Quadrant::PP), outside, None), vec![0.0; 3]);
    }

    #[test]
    fn boundary_tag_overrides_half_open_rule() {
        // azimuth π/2 belongs to MP under the half-open convention
        let d = Direction::new(0.0, FRAC_PI_2).unwrap();
        assert_eq!(d.quadrant(), Quadrant::MP);
        let untagged = basis_eval(BasisKind::Quarter1(Quadrant::PP), d, None);
        assert_eq!(untagged, vec![0.0; 3]);
        let tagged = basis_eval(BasisKind::Quarter1(Quadrant::PP), d, Some(Quadrant::PP));
        assert_eq!(tagged[0], 1.0);
        assert!((tagged[2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn point_quadrants_are_a_partition() {
        assert_eq!(Quadrant::of_point([1.0, 0.0]), Quadrant::PP);
        assert_eq!(Quadrant::of_point([0.0, 1.0]), Quadrant::MP);
        assert_eq!(Quadrant::of_point([-1.0, 0.0]), Quadrant::MM);
        assert_eq!(Quadrant::of_point([0.0, -1.0]), Quadrant::PM);
        assert_eq!(Quadrant::of_point([0.0, 0.0]), Quadrant::PP);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(7);
        let s: f64 = w.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
        let i12: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(12)).sum();
        assert!((i12 - 2.0 / 13.0).abs() < 1e-14);
    }

    #[test]
    fn quadrature_weights_match_areas() {
        let full = quadrature(Region::FullSphere, 40, 40).unwrap();
        assert!((full.total_weight() - 4.0 * PI).abs() < 1e-12);
        let pp = quadrature(Region::Quadrant(Quadrant::PP), 40, 40).unwrap();
        assert!((pp.total_weight() - PI).abs() < 1e-12);
        let half = quadrature(Region::HalfSpace(HalfSpace::Ym), 10, 10).unwrap();
        assert!((half.total_weight() - 2.0 * PI).abs() < 1e-12);
        let ox = pp.integrate(|o, _| o[0]);
        assert!((ox - FRAC_PI_2).abs() < 1e-12);
        assert!(quadrature(Region::FullSphere, 1, 40).is_err());
    }

    #[test]
    fn quarter_integral_examples() {
        assert!((quarter_monomial_integral(0, 0, Quadrant::PP) - PI).abs() < 1e-14);
        assert!((quarter_monomial_integral(1, 0, Quadrant::PP) - FRAC_PI_2).abs() < 1e-14);
        assert!((quarter_monomial_integral(1, 1, Quadrant::PP) - 2.0 / 3.0).abs() < 1e-14);
        assert!((quarter_monomial_integral(1, 1, Quadrant::MP) + 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn half_integral_examples() {
        assert!((half_monomial_integral(1, HalfSpace::Xp) - PI).abs() < 1e-15);
        assert!((half_monomial_integral(1, HalfSpace::Xm) + PI).abs() < 1e-15);
        assert!((half_monomial_integral(2, HalfSpace::Yp) - 2.0 * PI / 3.0).abs() < 1e-15);
    }

    #[test]
    fn half_integral_is_sum_of_quarters() {
        for k in 0..8 {
            let sum = quarter_monomial_integral(k, 0, Quadrant::PP)
                + quarter_monomial_integral(k, 0, Quadrant::PM);
            assert!((half_monomial_integral(k, HalfSpace::Xp) - sum).abs() < 1e-13, "k = {k}");
            let sum = quarter_monomial_integral(0, k, Quadrant::MM)
                + quarter_monomial_integral(0, k, Quadrant::PM);
            assert!((half_monomial_integral(k, HalfSpace::Ym) - sum).abs() < 1e-13, "k = {k}");
        }
    }

    #[test]
    fn full_sphere_odd_monomials_vanish() {
        for ix in 0..6 {
            for iy in 0..6 {
                let v = monomial_integral(ix, iy, QuadrantMask::ALL);
                if ix % 2 == 1 || iy % 2 == 1 {
                    assert!(v.abs() < 1e-13);
                } else {
                    assert!(v > 0.0);
                }
            }
        }
    }

    #[test]
    fn gram_examples() {
        let g = gram_matrix(BasisKind::Full1);
        assert!((g[(0, 0)] - 4.0 * PI).abs() < 1e-13);
        assert!((g[(1, 1)] - 4.0 * PI / 3.0).abs() < 1e-13);
        assert!((g[(2, 2)] - 4.0 * PI / 3.0).abs() < 1e-13);
        assert!(g[(0, 1)].abs() < 1e-13 && g[(1, 2)].abs() < 1e-13);
        let m = gram_matrix(BasisKind::Mixed1);
        assert!((m[(0, 0)] - 4.0 * PI).abs() < 1e-13);
        assert_eq!(m[(1, 2)], 0.0);
    }

    #[test]
    fn gram_matrices_are_spd() {
        for kind in [
            BasisKind::Full1,
            BasisKind::Mixed1,
            BasisKind::Quarter1(Quadrant::MM),
            BasisKind::QuarterSet1,
        ] {
            let g = gram_matrix(kind);
            assert!((&g - g.transpose()).norm() < 1e-13);
            let ev = g.symmetric_eigenvalues();
            assert!(ev.min() > 0.0, "{kind:?}: {ev}");
        }
    }

    #[test]
    fn isotropic_mixed_moments() {
        let iso = isotropic_moments(BasisKind::Mixed1, 1.0);
        let expected = [1.0, 0.25, -0.25, 0.25, -0.25];
        for (a, b) in iso.iter().zip(expected) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
