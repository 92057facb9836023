use std::sync::OnceLock;

use nlsp_core::calibration::{dilate, Calibration};
use nlsp_core::evolve::{Direction, Dynamics};
use nlsp_core::functionals::evaluate;
use nlsp_core::manifold::{chart_point, project_to_z, ZetaBasis};
use nlsp_core::modulation::{decompose_unchecked, reconstruct};
use nlsp_core::potential::{ground_eigenpair, Potential, SampledPotential};
use nlsp_core::{Complex64, RadialField, RadialGrid};
use proptest::prelude::*;

/// Up to three complex Gaussian bumps.
fn bumps() -> impl Strategy<Value = Vec<(f64, f64, f64, f64)>> {
    prop::collection::vec((-2.0..2.0f64, -2.0..2.0f64, 0.0..6.0f64, 0.5..3.0f64), 1..4)
}

fn field(g: RadialGrid, b: &[(f64, f64, f64, f64)]) -> RadialField {
    RadialField::from_fn(g, |r| {
        b.iter()
            .map(|&(a, c, r0, w)| Complex64::new(a, c) * (-((r - r0) / w).powi(2)).exp())
            .sum()
    })
}

fn small_grid() -> RadialGrid {
    RadialGrid::new(512, 20.0).unwrap()
}

struct Fixture {
    dy: Dynamics,
    basis: ZetaBasis,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let cal = Calibration {
            n_points: 512,
            r_max: 30.0,
            ..Calibration::default()
        };
        let dy = cal.dynamics().unwrap();
        let basis = ZetaBasis::new(&dy.pencil, 4, 10.0).unwrap();
        Fixture { dy, basis }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn laplacian_is_symmetric_and_nonpositive(a in bumps(), b in bumps()) {
        let g = small_grid();
        let (f, h) = (field(g, &a), field(g, &b));
        let lhs = f.laplacian().inner(&h);
        let rhs = f.inner(&h.laplacian());
        prop_assert!((lhs - rhs).abs() <= 1e-10 * f.h1_norm() * h.h1_norm());
        prop_assert!(-f.laplacian().inner(&f) >= -1e-12 * f.h1_norm_sq());
    }

    #[test]
    fn norms_are_finite_and_nonnegative(a in bumps()) {
        let f = field(small_grid(), &a);
        for n in [f.l2_norm(), f.l4_norm(), f.h1_norm(), f.hdot_half_proxy(), f.h1_omega_norm(100.0)] {
            prop_assert!(n.is_finite() && n >= 0.0);
        }
    }

    #[test]
    fn functional_identities(a in bumps(), omega in 1.0..1e4f64) {
        let g = small_grid();
        let f = field(g, &a);
        let sp = SampledPotential::new(&Potential::default(), g, Some(omega));
        let v = evaluate(&f, &sp);
        prop_assert!(v.mass >= 0.0 && v.kinetic >= 0.0 && v.quartic >= 0.0);
        prop_assert_eq!(v.energy, v.kinetic - v.quartic + v.potential);
        prop_assert_eq!(v.free_energy, v.kinetic - v.quartic);
    }

    #[test]
    fn k2_is_the_scaling_derivative(a in bumps()) {
        let g = RadialGrid::new(4096, 20.0).unwrap();
        let f = field(g, &a);
        let sp = SampledPotential::new(&Potential::default(), g, Some(1.0));
        let d = 1e-4;
        let e = |l: f64| evaluate(&dilate(&f, l).unwrap(), &sp).energy;
        let fd = (e(1.0 + d) - e(1.0 - d)) / (2.0 * d);
        let k2 = evaluate(&f, &sp).k2;
        prop_assert!((fd - k2).abs() <= 1e-5 * (1.0 + f.h1_norm().powi(4)), "fd {} k2 {}", fd, k2);
    }

    #[test]
    fn dilation_preserves_mass(a in bumps(), l in 0.7..1.4f64) {
        let g = RadialGrid::new(2048, 40.0).unwrap();
        let f = field(g, &a);
        let m = f.l2_norm_sq();
        prop_assert!((dilate(&f, l).unwrap().l2_norm_sq() - m).abs() <= 1e-6 * m);
    }

    #[test]
    fn rayleigh_bound_with_ground_energy(a in bumps()) {
        let g = small_grid();
        let gs = ground_eigenpair(&Potential::default(), g).unwrap();
        let f = field(g, &a);
        let sp = SampledPotential::new(&Potential::default(), g, Some(1.0));
        let h = -f.laplacian().inner(&f) + sp.expectation(&f);
        prop_assert!(h >= gs.energy * f.l2_norm_sq() - 1e-10 * f.l2_norm_sq());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn decomposition_reconstructs_and_is_gauge_covariant(a in bumps(), size in 1e-3..0.1f64, sigma in -3.0..3.0f64) {
        let fx = fixture();
        let p = &fx.dy.pencil;
        let v = field(p.grid, &a);
        let u = p.q.add(&v.scale(size / v.h1_norm())).rotate(0.4);
        let d = decompose_unchecked(&u, p);
        let back = reconstruct(d.theta, &d.v, &p.q);
        prop_assert!(back.sub(&u).h1_norm() <= 1e-9 * u.h1_norm());
        // zeta carries no g_+- or kernel component
        let pz = p.project(&d.zeta);
        let zn = d.zeta.h1_norm().max(1e-300);
        prop_assert!(pz.lambda_plus.abs() <= 1e-9 * zn && pz.lambda_minus.abs() <= 1e-9 * zn);
        prop_assert!(pz.kernel.abs() <= 1e-9 * zn.max(size));
        let e = decompose_unchecked(&u.rotate(sigma), p);
        let dt = (e.theta - d.theta - sigma).rem_euclid(std::f64::consts::TAU);
        prop_assert!(dt.min(std::f64::consts::TAU - dt) <= 1e-10);
        prop_assert!((e.b_plus() - d.b_plus()).abs() <= 1e-10);
        prop_assert!((e.b_minus() - d.b_minus()).abs() <= 1e-10);
        prop_assert!(e.zeta.sub(&d.zeta).h1_norm() <= 1e-10);
    }

    #[test]
    fn projection_to_z_is_idempotent(a in bumps()) {
        let fx = fixture();
        let p = &fx.dy.pencil;
        let f = field(p.grid, &a);
        let z = project_to_z(p, &f);
        let zz = project_to_z(p, &z);
        prop_assert!(zz.sub(&z).h1_norm() <= 1e-10 * f.h1_norm());
        let pr = p.project(&z);
        let scale = f.h1_norm();
        prop_assert!(pr.lambda_plus.abs() <= 1e-10 * scale && pr.lambda_minus.abs() <= 1e-10 * scale);
        prop_assert!(pr.kernel.abs() <= 1e-10 * scale);
    }

    #[test]
    fn chart_coordinates_are_recovered(bp in -0.01..0.01f64, bm in -0.01..0.01f64, c in prop::collection::vec(-0.01..0.01f64, 4)) {
        let fx = fixture();
        let p = &fx.dy.pencil;
        let z = fx.basis.combine(&c, p);
        let pr = p.project(&chart_point(p, bp, bm, &z).sub(&p.q));
        prop_assert!((pr.lambda_plus - bp).abs() <= 1e-10);
        prop_assert!((pr.lambda_minus - bm).abs() <= 1e-10);
    }

    #[test]
    fn conjugation_swaps_stable_and_unstable_coordinates(bp in -0.01..0.01f64, bm in -0.01..0.01f64, c in prop::collection::vec(-0.01..0.01f64, 4)) {
        let fx = fixture();
        let p = &fx.dy.pencil;
        let z = fx.basis.combine(&c, p);
        let u = chart_point(p, bp, bm, &z);
        let pr = p.project(&u.conj().sub(&p.q));
        prop_assert!((pr.lambda_plus - bm).abs() <= 1e-10);
        prop_assert!((pr.lambda_minus - bp).abs() <= 1e-10);
    }

    #[test]
    fn diagnostics_are_gauge_invariant(a in bumps(), sigma in -3.0..3.0f64) {
        let fx = fixture();
        let p = &fx.dy.pencil;
        let v = field(p.grid, &a);
        let u = p.q.add(&v.scale(0.05 / v.h1_norm()));
        let s0 = fx.dy.sample(0.0, &u);
        let s1 = fx.dy.sample(0.0, &u.rotate(sigma));
        for (x, y) in [
            (s0.mass, s1.mass),
            (s0.action, s1.action),
            (s0.l4, s1.l4),
            (s0.grad, s1.grad),
            (s0.k2, s1.k2),
            (s0.d0, s1.d0),
            (s0.energy_norm, s1.energy_norm),
            (s0.b_plus, s1.b_plus),
            (s0.b_minus, s1.b_minus),
            (s0.virial, s1.virial),
        ] {
            prop_assert!((x - y).abs() <= 1e-10 * x.abs().max(1.0), "{} vs {}", x, y);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn backward_run_is_forward_run_of_the_conjugate(bp in -1e-3..1e-3f64, bm in -1e-3..1e-3f64) {
        let fx = fixture();
        let mut dy: Dynamics = fx.dy.clone();
        dy.detect.horizon = 1.0;
        let u = chart_point(&dy.pencil, bp, bm, &RadialField::zeros(dy.pencil.grid));
        let back = dy.classify_direction(&u, Direction::Backward);
        let fwd = dy.classify_direction(&u.conj(), Direction::Forward);
        prop_assert_eq!(back.verdict.verdict, fwd.verdict.verdict);
        prop_assert_eq!(back.samples.len(), fwd.samples.len());
        for (a, b) in back.samples.iter().zip(&fwd.samples) {
            prop_assert_eq!(a.mass, b.mass);
            prop_assert_eq!(a.grad, b.grad);
            prop_assert_eq!(a.k2, b.k2);
        }
    }
}
