//! Quick invariant suite behind `nlsp check`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calibration::Calibration;
use crate::error::Result;
use crate::evolve::{evolve, Direction, StepConfig};
use crate::functionals::evaluate;
use crate::grid::{RadialField, RadialGrid};
use crate::linearization::Pencil;
use crate::manifold::ZetaBasis;
use crate::modulation::{decompose_unchecked, dist0};
use crate::solitons::compute_q;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckOutcome {
    fn new(name: &str, value: f64, tolerance: f64) -> Self {
        CheckOutcome {
            name: name.to_string(),
            value,
            tolerance,
            passed: value.is_finite() && value <= tolerance,
        }
    }
}

/// Random perturbation mixing the unstable pair, kernel directions, zeta modes and a bump.
pub fn random_perturbation(rng: &mut ChaCha8Rng, pencil: &Pencil, basis: &ZetaBasis, size: f64) -> RadialField {
    let g = pencil.grid;
    let mut v = pencil.g1.scale(rng.gen_range(-1.0..1.0)).add(&pencil.g2.mul_i().scale(rng.gen_range(-1.0..1.0)));
    v = v.axpy(rng.gen_range(-0.3..0.3), &pencil.q).add(&pencil.q_prime.mul_i().scale(rng.gen_range(-0.3..0.3)));
    for m in &basis.modes {
        v = v.axpy(rng.gen_range(-1.0..1.0), m);
    }
    let r0: f64 = rng.gen_range(0.0..5.0);
    let w: f64 = rng.gen_range(0.5..2.5);
    let (a, b): (f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let bump = RadialField::from_fn(g, |r| {
        let e = (-((r - r0) / w).powi(2)).exp();
        num_complex::Complex64::new(a * e, b * e)
    });
    v = v.add(&bump);
    let n = v.h1_norm();
    v.scale(size / n)
}

/// A(e^{i theta}(Q + v)) - A(Q) - <L v|v>/2 + C(v), relative to ||v||_{H1}^2.
pub fn expansion_defect(pencil: &Pencil, theta: f64, v: &RadialField) -> f64 {
    let a_q = evaluate(&pencil.q, &pencil.potential).action;
    let u = pencil.q.add(v).rotate(theta);
    let a = evaluate(&u, &pencil.potential).action;
    let rhs = 0.5 * pencil.quadratic_form(v) - pencil.cubic_remainder(v);
    (a - a_q - rhs).abs() / v.h1_norm_sq()
}

pub fn invariant_suite(cal: &Calibration, seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();

    let q = compute_q(RadialGrid::new(8192, 30.0)?)?;
    let f = q.functionals;
    out.push(CheckOutcome::new("pohozaev E0 = M", (f.free_energy / f.mass - 1.0).abs(), 1e-4));
    out.push(CheckOutcome::new("pohozaev H0 = 3M", (f.kinetic / (3.0 * f.mass) - 1.0).abs(), 1e-4));
    out.push(CheckOutcome::new("pohozaev G = 2M", (f.quartic / (2.0 * f.mass) - 1.0).abs(), 1e-4));
    out.push(CheckOutcome::new("pohozaev K2 = 0", (f.k2 / f.mass).abs(), 1e-4));

    let dy = cal.dynamics()?;
    let p = &dy.pencil;
    let pair = p.g_plus().mul_i().inner(&p.g_minus()) * p.alpha;
    out.push(CheckOutcome::new("alpha <i g+|g-> = 2", (pair - 2.0).abs(), 1e-8));
    let q_re = p.q.reduced_re();
    let lm = RadialField::from_reduced_real(p.grid, &p.apply_lminus(&q_re));
    out.push(CheckOutcome::new("L- Q = 0", lm.l2_norm() / p.q.l2_norm(), 1e-8));
    let lp = RadialField::from_reduced_real(p.grid, &p.apply_lplus(&p.q_prime.reduced_re())).add(&p.q);
    out.push(CheckOutcome::new("L+ Q' = -Q", lp.l2_norm() / p.q.l2_norm(), 1e-8));
    out.push(CheckOutcome::new("eigen residual", p.eig_residual, 1e-8));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let basis = ZetaBasis::new(p, 4, 10.0)?;
    let mut worst: f64 = 0.0;
    let mut worst_gauge: f64 = 0.0;
    for _ in 0..50 {
        let size = 10f64.powf(rng.gen_range(-2.0..0.0));
        let v = random_perturbation(&mut rng, p, &basis, size);
        let theta = rng.gen_range(-3.0..3.0);
        worst = worst.max(expansion_defect(p, theta, &v));
        let u = p.q.add(&v);
        let d1 = decompose_unchecked(&u, p);
        let d2 = decompose_unchecked(&u.rotate(0.7), p);
        let dth = (d2.theta - d1.theta - 0.7).rem_euclid(std::f64::consts::TAU);
        let dth = dth.min(std::f64::consts::TAU - dth);
        worst_gauge = worst_gauge
            .max(dth)
            .max((d1.b_plus() - d2.b_plus()).abs())
            .max((d1.b_minus() - d2.b_minus()).abs());
    }
    out.push(CheckOutcome::new("energy expansion identity", worst, 1e-8));
    out.push(CheckOutcome::new("decomposition gauge covariance", worst_gauge, 1e-10));

    let closed = StepConfig {
        sponge_fraction: 0.0,
        ..cal.step
    };
    let u0 = p.q.axpy(1e-3, &p.g_plus());
    let f0 = evaluate(&u0, &p.potential);
    let u1 = evolve(&u0, &p.potential, closed, 1.0)?;
    let f1 = evaluate(&u1, &p.potential);
    out.push(CheckOutcome::new("mass drift over unit time", ((f1.mass - f0.mass) / f0.mass).abs(), 1e-6));
    out.push(CheckOutcome::new("energy drift over unit time", ((f1.energy - f0.energy) / f0.energy).abs(), 1e-6));
    let us = evolve(&p.q, &p.potential, closed, 1.0)?;
    out.push(CheckOutcome::new("soliton stays on its orbit", dist0(&us, &p.q), 1e-6));

    let rep = dy.ejection_probe(&p.q.axpy(1e-4, &p.g_plus()), Direction::Forward)?;
    out.push(CheckOutcome::new("ejection rate / alpha - 1", (rep.growth_rate / p.alpha - 1.0).abs(), 0.05));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perturbations_have_the_requested_size_and_satisfy_the_expansion() {
        let cal = Calibration {
            n_points: 512,
            r_max: 30.0,
            ..Calibration::default()
        };
        let dy = cal.dynamics().unwrap();
        let p = &dy.pencil;
        let basis = ZetaBasis::new(p, 4, 10.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for size in [0.01, 0.1, 1.0] {
            let v = random_perturbation(&mut rng, p, &basis, size);
            assert!((v.h1_norm() / size - 1.0).abs() < 1e-12);
            assert!(expansion_defect(p, 0.3, &v) < 1e-8);
        }
    }
}
