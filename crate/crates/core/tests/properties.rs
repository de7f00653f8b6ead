//! Property tests of the invariants of each module.

use std::f64::consts::PI;

use mixmom::collision::{lb_full_moment, lb_mixed_from_traces, lb_mixed_polynomial};
use mixmom::entropy::{DualSettings, EntropySolver};
use mixmom::kershaw::{mixed_quadrant_moments, qk1_atoms, qk1_flux, qk1_second_moment, QuarterEngine};
use mixmom::moments::*;
use mixmom::sphere::*;
use proptest::prelude::*;

fn quadrant() -> impl Strategy<Value = Quadrant> {
    prop::sample::select(Quadrant::ALL.to_vec())
}

/// A direction in the unit disk, uniform in area.
fn disk_point() -> impl Strategy<Value = [f64; 2]> {
    (0.0..1.0f64, 0.0..2.0 * PI).prop_map(|(r2, a)| {
        let r = r2.sqrt();
        [r * a.cos(), r * a.sin()]
    })
}

/// A normalized first moment strictly inside quadrant `q`.
fn interior_phi(max_norm: f64) -> impl Strategy<Value = ([f64; 2], Quadrant)> {
    (0.01..max_norm, 0.02..(PI / 2.0 - 0.02), quadrant()).prop_map(|(r, a, q)| {
        let (sx, sy) = q.signs();
        ([sx * r * a.cos(), sy * r * a.sin()], q)
    })
}

/// A realizable Mixed1 vector: signed half moments with spread norm ≤ u00.
fn mixed_vector(max_norm: f64) -> impl Strategy<Value = Vec<f64>> {
    (0.1..10.0f64, 0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64, 0.0..max_norm).prop_map(
        |(u00, a, b, c, d, n)| {
            // Split the spreads between the two half spaces, then scale the
            // spread vector to the requested norm.
            let (sx, sy) = (a.max(1e-3), b.max(1e-3));
            let len = sx.hypot(sy);
            let (sx, sy) = (n * sx / len, n * sy / len);
            vec![u00, u00 * c * sx, -u00 * (1.0 - c) * sx, u00 * d * sy, -u00 * (1.0 - d) * sy]
        },
    )
}

/// An interior Mixed1 vector with mm_norm ≤ `max_norm`, blended towards isotropy.
fn interior_mixed(max_norm: f64) -> impl Strategy<Value = Vec<f64>> {
    (mixed_vector(1.0), 0.0..1.0f64).prop_filter_map("outside the requested norm", move |(w, s)| {
        let iso = [1.0, 0.25, -0.25, 0.25, -0.25];
        let v: Vec<f64> = w.iter().zip(iso).map(|(x, i)| (1.0 - s) * i * w[0] + s * x).collect();
        let u = MomentVec::new(BasisKind::Mixed1, v.clone()).ok()?;
        (mm_norm(&NormalizedMixed1::from_moments(&u).ok()?) <= max_norm).then_some(v)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn quadrature_integrates_quarter_polynomials(q in quadrant(), coef in prop::collection::vec(-1.0..1.0f64, 28)) {
        let rule = quadrature(Region::Quadrant(q), 40, 40).unwrap();
        let mut exponents = Vec::new();
        for k in 0..=6u32 {
            for ix in 0..=k {
                exponents.push((ix, k - ix));
            }
        }
        let p = |w: [f64; 2]| exponents.iter().zip(&coef).map(|(&(i, j), c)| c * w[0].powi(i as i32) * w[1].powi(j as i32)).sum::<f64>();
        let exact: f64 = exponents.iter().zip(&coef).map(|(&(i, j), c)| c * quarter_monomial_integral(i, j, q)).sum();
        prop_assert!((rule.integrate(|w, _| p(w)) - exact).abs() < 1e-10);
    }

    #[test]
    fn atomic_moments_are_realizable(points in prop::collection::vec((0.0..1.0f64, disk_point()), 1..10)) {
        let mut a = AtomicDistribution::default();
        for (w, p) in &points {
            a.push(*w, *p, None);
        }
        for kind in [BasisKind::Full1, BasisKind::Mixed1, BasisKind::QuarterSet1] {
            prop_assert!(is_realizable(&moments_of_atomic(&a, kind), 1e-12), "{kind:?}");
        }
        for q in Quadrant::ALL {
            let mut only = AtomicDistribution::default();
            for atom in a.atoms.iter().filter(|atom| atom.quadrant() == q) {
                only.push(atom.weight, atom.omega, None);
            }
            prop_assert!(is_realizable(&moments_of_atomic(&only, BasisKind::Quarter1(q)), 1e-12));
        }
    }

    #[test]
    fn mixed_vectors_round_trip_through_atoms(v in mixed_vector(1.0)) {
        let u = MomentVec::new(BasisKind::Mixed1, v.clone()).unwrap();
        prop_assume!(is_realizable_mixed1(&u, 0.0));
        let atoms = realize_mixed1(&u).unwrap();
        prop_assert!(atoms.validate(1e-12).is_ok());
        prop_assert!(atoms.atoms.iter().all(|a| a.weight >= 0.0));
        let back = moments_of_atomic(&atoms, BasisKind::Mixed1);
        for (a, b) in back.values().iter().zip(&v) {
            prop_assert!((a - b).abs() <= 1e-12 * v[0], "{:?} vs {v:?}", back.values());
        }
    }

    #[test]
    fn projections_share_the_mixed_norm(v in mixed_vector(1.0)) {
        let u = MomentVec::new(BasisKind::Mixed1, v).unwrap();
        let phi = NormalizedMixed1::from_moments(&u).unwrap();
        let n = mm_norm(&phi);
        for (k, p) in quadrant_projection(&phi).iter().enumerate() {
            prop_assert!((p[0].hypot(p[1]) - n).abs() < 1e-14);
            let (sx, sy) = Quadrant::ALL[k].signs();
            prop_assert!(sx * p[0] >= 0.0 && sy * p[1] >= 0.0);
        }
    }

    #[test]
    fn limiter_is_idempotent(v in prop::collection::vec(-2.0..2.0f64, 12), eps in 0.0..0.1f64) {
        for kind in [BasisKind::Full1, BasisKind::Quarter1(Quadrant::MP), BasisKind::Mixed1, BasisKind::QuarterSet1] {
            let u = MomentVec::new(kind, v[..kind.len()].to_vec()).unwrap();
            let once = limit_to_realizable(&u, eps);
            prop_assert!(is_realizable(&once, 0.0), "{kind:?}: {:?}", once.values());
            prop_assert!(once.density() >= DENSITY_FLOOR);
            prop_assert_eq!(limit_to_realizable(&once, eps), once);
        }
    }

    #[test]
    fn limiter_keeps_vectors_inside_the_margin(v in mixed_vector(0.9), eps in 0.0..0.1f64) {
        let u = MomentVec::new(BasisKind::Mixed1, v).unwrap();
        prop_assert_eq!(limit_to_realizable(&u, eps), u);
    }

    #[test]
    fn qk1_second_moment_bounds((phi, q) in interior_phi(0.999)) {
        let t = qk1_second_moment(phi, q).unwrap();
        let n = phi[0].hypot(phi[1]);
        // φ is an eigenvector; its eigenvalue lies in [‖φ‖², ‖φ‖].
        let u = [phi[0] / n, phi[1] / n];
        let lambda = u[0] * (t[0][0] * u[0] + t[0][1] * u[1]) + u[1] * (t[1][0] * u[0] + t[1][1] * u[1]);
        prop_assert!(lambda >= n * n - 1e-12 && lambda <= n + 1e-12, "{lambda} for norm {n}");
        // T − φφᵀ is positive semidefinite.
        let (a, b, d) = (t[0][0] - phi[0] * phi[0], t[0][1] - phi[0] * phi[1], t[1][1] - phi[1] * phi[1]);
        prop_assert!(a >= -1e-12 && d >= -1e-12 && a * d - b * b >= -1e-12);
        let r = qk1_atoms(phi, q).unwrap();
        if let Some(c) = r.coefficients {
            prop_assert!(c.equation_residual() < 1e-12 && c.constraint_slack() >= -1e-12);
        }
        let m = moments_of_atomic(&r.atoms, BasisKind::Quarter1(q));
        prop_assert!((m.values()[1] - phi[0]).abs() < 1e-12 && (m.values()[2] - phi[1]).abs() < 1e-12);
    }

    #[test]
    fn closures_are_homogeneous(v in interior_mixed(0.9), (phi, q) in interior_phi(0.95), c in 0.01..100.0f64) {
        let base = mixed_quadrant_moments(&v, QuarterEngine::Kershaw).unwrap();
        let scaled: Vec<f64> = v.iter().map(|x| c * x).collect();
        let m = mixed_quadrant_moments(&scaled, QuarterEngine::Kershaw).unwrap();
        for (a, b) in m.0.iter().flatten().zip(base.0.iter().flatten()) {
            prop_assert!((a - c * b).abs() <= 1e-12 * c * v[0]);
        }
        let u = [2.0, 2.0 * phi[0], 2.0 * phi[1]];
        for axis in [Axis::X, Axis::Y] {
            let f = qk1_flux(u, q, axis).unwrap();
            let g = qk1_flux([c * u[0], c * u[1], c * u[2]], q, axis).unwrap();
            for (a, b) in g.iter().zip(&f) {
                prop_assert!((a - c * b).abs() <= 1e-12 * c * u[0]);
            }
        }
    }

    #[test]
    fn polynomial_scattering_conserves_mass(v in prop::collection::vec(-5.0..5.0f64, 5), t in prop::collection::vec(0.0..5.0f64, 4)) {
        let u = MomentVec::new(BasisKind::Mixed1, v.clone()).unwrap();
        prop_assert_eq!(lb_mixed_polynomial(&u).unwrap()[0], 0.0);
        prop_assert_eq!(lb_mixed_from_traces(&v, [t[0], t[1], t[2], t[3]])[0], 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dual_derivatives_match_finite_differences(a in prop::collection::vec(-1.5..1.5f64, 5), pick in 0usize..3) {
        let kind = [BasisKind::Full1, BasisKind::Mixed1, BasisKind::Quarter1(Quadrant::PM)][pick];
        let region = if pick == 2 { Region::Quadrant(Quadrant::PM) } else { Region::FullSphere };
        let s = EntropySolver::new(kind, &quadrature(region, 20, 20).unwrap(), DualSettings::default()).unwrap();
        let n = kind.len();
        let alpha = &a[..n];
        let u = s.moments(&s.isotropic_alpha(1.3));
        let e = s.objective(alpha, &u).unwrap();
        let h = 1e-5;
        for k in 0..n {
            let mut p = alpha.to_vec();
            let mut m = alpha.to_vec();
            p[k] += h;
            m[k] -= h;
            let (ep, em) = (s.objective(&p, &u).unwrap(), s.objective(&m, &u).unwrap());
            let g = (ep.value - em.value) / (2.0 * h);
            prop_assert!((g - e.gradient[k]).abs() < 1e-6 * (1.0 + g.abs()), "gradient {k}: {g} vs {}", e.gradient[k]);
            for j in 0..n {
                let hj = (ep.gradient[j] - em.gradient[j]) / (2.0 * h);
                prop_assert!((hj - e.hessian[(j, k)]).abs() < 1e-5 * (1.0 + hj.abs()));
            }
        }
    }

    #[test]
    fn dual_solves_round_trip(v in interior_mixed(0.95), full in disk_point()) {
        let quad = quadrature(Region::FullSphere, 40, 40).unwrap();
        let full_v = vec![3.0, 3.0 * 0.95 * full[0], 3.0 * 0.95 * full[1]];
        for (kind, v) in [(BasisKind::Mixed1, v), (BasisKind::Full1, full_v)] {
            let s = EntropySolver::new(kind, &quad, DualSettings::default()).unwrap();
            let sol = s.solve(&MomentVec::new(kind, v.clone()).unwrap(), None).unwrap();
            prop_assert_eq!(sol.blend, 0.0);
            let m = s.moments(&sol.alpha.alpha);
            for (a, b) in m.iter().zip(&v) {
                prop_assert!((a - b).abs() <= 1e-9 * v[0], "{kind:?}: {m:?} vs {v:?}");
            }
            // Entropy closures are homogeneous: scaling u shifts α₀ by ln c.
            let c = 7.5;
            let scaled: Vec<f64> = v.iter().map(|x| c * x).collect();
            let sc = s.solve(&MomentVec::new(kind, scaled).unwrap(), None).unwrap();
            let (qa, qb) = (s.quadrant_moments(&sc.alpha.alpha), s.quadrant_moments(&sol.alpha.alpha));
            for (a, b) in qa.0.iter().flatten().zip(qb.0.iter().flatten()) {
                prop_assert!((a - c * b).abs() <= 1e-8 * c * v[0]);
            }
        }
    }

    #[test]
    fn warm_starts_converge_quickly(v in interior_mixed(0.9), d in prop::collection::vec(-1.0..1.0f64, 5)) {
        let quad = quadrature(Region::FullSphere, 20, 20).unwrap();
        let s = EntropySolver::new(BasisKind::Mixed1, &quad, DualSettings::default()).unwrap();
        let sol = s.solve(&MomentVec::new(BasisKind::Mixed1, v.clone()).unwrap(), None).unwrap();
        let mut w: Vec<f64> = v.iter().zip(&d).map(|(x, e)| x + 1e-3 * v[0] * e).collect();
        limit_slice(BasisKind::Mixed1, &mut w, 0.0);
        let next = s.solve(&MomentVec::new(BasisKind::Mixed1, w).unwrap(), Some(&sol.alpha.alpha)).unwrap();
        prop_assert!(next.iterations <= 5, "{} iterations", next.iterations);
    }

    #[test]
    fn full_scattering_moments_match_the_exponential_oracle(a in prop::collection::vec(-2.0..2.0f64, 3), ix in 0u32..4, iy in 0u32..4) {
        // For ψ = exp(a·Ω), Δψ = ψ (|a|² − (a·Ω)² − 2 a·Ω).
        let quad = quadrature(Region::FullSphere, 40, 40).unwrap();
        let nodes: Vec<(f64, [f64; 3])> = quad.nodes.iter().map(|n| (n.weight, [n.omega[0], n.omega[1], n.dir.mu()])).collect();
        let dot = |o: &[f64; 3]| a[0] * o[0] + a[1] * o[1] + a[2] * o[2];
        let a2 = a.iter().map(|x| x * x).sum::<f64>();
        let moment = |i: u32, j: u32| nodes.iter().map(|(w, o)| w * o[0].powi(i as i32) * o[1].powi(j as i32) * dot(o).exp()).sum::<f64>();
        let direct: f64 = nodes
            .iter()
            .map(|(w, o)| {
                let t = dot(o);
                w * o[0].powi(ix as i32) * o[1].powi(iy as i32) * t.exp() * (a2 - t * t - 2.0 * t)
            })
            .sum();
        let via = lb_full_moment(ix, iy, &moment);
        prop_assert!((direct - via).abs() < 1e-9 * (1.0 + direct.abs()), "{direct} vs {via}");
    }
}
