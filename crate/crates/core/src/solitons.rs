//! Ground state Q of -Lap Q + Q = Q^3, the excited solitons Q_omega of
//! -Lap Q + V^omega Q + Q = Q^3 near Q, and the small ground-state branch.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{evaluate, Functionals};
use crate::grid::{RadialField, RadialGrid};
use crate::linalg::{Tridiag, TridiagLu};
use crate::potential::{ground_eigenpair, GroundState, Potential, SampledPotential};

/// Q(0) from the shooting oracle (RK4, two step sizes agree to 1e-10).
pub const Q_CENTER: f64 = 4.337_387_679_9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shot {
    /// Q crossed zero: initial value too large.
    Over,
    /// Q turned upward while positive: initial value too small.
    Under,
    Undecided,
}

fn shoot(a: f64, ds: f64, r_end: f64, mut visit: impl FnMut(f64, f64)) -> Shot {
    let rhs = |r: f64, q: f64, p: f64| -> (f64, f64) { (p, q * q * q * -1.0 + q - 2.0 * p / r) };
    // series start: Q = a + b r^2 with 6 b = a - a^3
    let b = (a - a * a * a) / 6.0;
    let mut r = ds;
    let mut q = a + b * r * r;
    let mut p = 2.0 * b * r;
    visit(0.0, a);
    visit(r, q);
    while r < r_end {
        let (k1q, k1p) = rhs(r, q, p);
        let (k2q, k2p) = rhs(r + 0.5 * ds, q + 0.5 * ds * k1q, p + 0.5 * ds * k1p);
        let (k3q, k3p) = rhs(r + 0.5 * ds, q + 0.5 * ds * k2q, p + 0.5 * ds * k2p);
        let (k4q, k4p) = rhs(r + ds, q + ds * k3q, p + ds * k3p);
        q += ds / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q);
        p += ds / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
        r += ds;
        visit(r, q);
        if q < 0.0 {
            return Shot::Over;
        }
        if p > 0.0 {
            return Shot::Under;
        }
    }
    Shot::Undecided
}

/// Bisection on Q(0) for the positive decaying solution, RK4 with step `ds`.
pub fn shoot_q_center(ds: f64) -> Result<f64> {
    let (mut lo, mut hi) = (2.0, 6.0);
    if shoot(lo, ds, 40.0, |_, _| {}) != Shot::Under || shoot(hi, ds, 40.0, |_, _| {}) != Shot::Over {
        return Err(Error::BisectionFailed("shooting bracket".into()));
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        match shoot(mid, ds, 40.0, |_, _| {}) {
            Shot::Over => hi = mid,
            Shot::Under => lo = mid,
            Shot::Undecided => return Ok(mid),
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Shooting profile sampled on the grid, with the unreliable far field
/// replaced by the decaying tail A e^{-r} / r.
fn shooting_guess(grid: RadialGrid, a: f64) -> Vec<f64> {
    let ds = 1e-3;
    let mut rs = Vec::new();
    let mut qs = Vec::new();
    shoot(a, ds, 30.0, |r, q| {
        rs.push(r);
        qs.push(q);
    });
    // cut where Q is still clearly positive and decreasing
    let cut = qs.iter().position(|&q| q < 1e-3).unwrap_or(qs.len() - 1);
    let (rc, qc) = (rs[cut], qs[cut]);
    let amp = qc * rc * rc.exp();
    grid.interior_nodes()
        .iter()
        .map(|&r| {
            let q = if r < rc {
                let k = ((r / ds) as usize).min(cut - 1);
                let t = (r - rs[k]) / ds;
                qs[k] * (1.0 - t) + qs[k + 1] * t
            } else {
                amp * (-r).exp() / r
            };
            q * r
        })
        .collect()
}

/// Linearized operators around a real profile, in reduced variables.
#[derive(Debug, Clone)]
pub struct LinearPair {
    pub grid: RadialGrid,
    pub plus: Tridiag<f64>,
    pub minus: Tridiag<f64>,
}

impl LinearPair {
    /// L_+ = -Lap + 1 + V - 3 Q^2 and L_- = -Lap + 1 + V - Q^2.
    pub fn new(grid: RadialGrid, v: &[f64], q: &[f64]) -> Self {
        let h = grid.spacing();
        let m = grid.interior();
        let off = -1.0 / (h * h);
        let mut sub = vec![off; m];
        sub[0] = 0.0;
        let mut sup = vec![off; m];
        sup[m - 1] = 0.0;
        let base: Vec<f64> = (0..m).map(|i| 2.0 / (h * h) + 1.0 + v[i]).collect();
        let plus = base.iter().zip(q).map(|(b, q)| b - 3.0 * q * q).collect();
        let minus = base.iter().zip(q).map(|(b, q)| b - q * q).collect();
        LinearPair {
            grid,
            plus: Tridiag::new(sub.clone(), plus, sup.clone()),
            minus: Tridiag::new(sub, minus, sup),
        }
    }
}

/// Newton on -Lap w + (1 + V) w - w^3 / r^2 = 0 in reduced variables.
fn newton_polish(grid: RadialGrid, v: &[f64], w: &mut [f64], tol: f64, max_iter: usize) -> Result<(f64, usize)> {
    let rs = grid.interior_nodes();
    let mut res = f64::INFINITY;
    for it in 0..max_iter {
        let q: Vec<f64> = w.iter().zip(&rs).map(|(w, r)| w / r).collect();
        let ops = LinearPair::new(grid, v, &q);
        // residual F = L_- w (since L_- w = -D2 w + (1+V) w - q^2 w)
        let f = ops.minus.apply(w);
        res = (grid.reduced_weight() * f.iter().map(|x| x * x).sum::<f64>()).sqrt();
        if res < tol {
            return Ok((res, it));
        }
        let dw = ops.plus.factor().solve(&f);
        for (wi, d) in w.iter_mut().zip(&dw) {
            *wi -= d;
        }
        if !res.is_finite() {
            break;
        }
        // on fine grids the residual floor is roundoff in the second difference
        let step = dw.iter().fold(0.0f64, |a, d| a.max(d.abs()));
        let size = w.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        if step <= 1e-9 * size {
            let q: Vec<f64> = w.iter().zip(&rs).map(|(w, r)| w / r).collect();
            let f = LinearPair::new(grid, v, &q).minus.apply(w);
            res = (grid.reduced_weight() * f.iter().map(|x| x * x).sum::<f64>()).sqrt();
            return Ok((res, it + 1));
        }
    }
    if res < tol * 100.0 {
        return Ok((res, max_iter));
    }
    Err(Error::NotConverged {
        what: "soliton Newton",
        iterations: max_iter,
        residual: res,
    })
}

/// A soliton profile of the rescaled problem together with its omega-derivative
/// direction Q' = -L_+^{-1} Q.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Soliton {
    /// None for the free ground state (omega = infinity).
    pub omega: Option<f64>,
    pub q: RadialField,
    pub q_prime: RadialField,
    pub residual: f64,
    pub iterations: usize,
    pub contraction_ratio: f64,
    pub functionals: Functionals,
}

impl Soliton {
    pub fn sampled_potential(&self, pot: &Potential) -> SampledPotential {
        SampledPotential::new(pot, self.q.grid(), self.omega)
    }

    pub fn q_reduced(&self) -> Vec<f64> {
        self.q.reduced_re()
    }

    pub fn linear_pair(&self, pot: &Potential) -> LinearPair {
        let sp = self.sampled_potential(pot);
        LinearPair::new(self.q.grid(), &sp.v, &self.q.re())
    }
}

fn finish(grid: RadialGrid, sp: &SampledPotential, w: Vec<f64>, residual: f64, iterations: usize, ratio: f64) -> Soliton {
    let q = RadialField::from_reduced_real(grid, &w);
    let ops = LinearPair::new(grid, &sp.v, &q.re());
    let qp = ops.plus.factor().solve(&w);
    let q_prime = RadialField::from_reduced_real(grid, &qp).scale(-1.0);
    let functionals = evaluate(&q, sp);
    Soliton {
        omega: sp.omega,
        q,
        q_prime,
        residual,
        iterations,
        contraction_ratio: ratio,
        functionals,
    }
}

/// Ground state Q of the free equation on the grid.
pub fn compute_q(grid: RadialGrid) -> Result<Soliton> {
    let a = shoot_q_center(1e-3)?;
    let mut w = shooting_guess(grid, a);
    let sp = SampledPotential::new(&Potential::Zero, grid, None);
    let (res, it) = newton_polish(grid, &sp.v, &mut w, 1e-12, 40)?;
    if w.iter().any(|x| *x < 0.0) {
        return Err(Error::NotConverged {
            what: "positive ground state",
            iterations: it,
            residual: res,
        });
    }
    Ok(finish(grid, &sp, w, res, it, 0.0))
}

/// Excited soliton Q_omega = Q + v_omega by the contraction
/// v <- L_+^{-1}(3 Q v^2 + v^3 - V^omega (Q + v)), then a Newton polish.
pub fn excited_soliton(pot: &Potential, q: &Soliton, omega: f64) -> Result<Soliton> {
    if !(omega.is_finite() && omega > 0.0) {
        return Err(Error::BadInput(format!("omega must be positive, got {omega}")));
    }
    pot.validate()?;
    let grid = q.q.grid();
    let sp = SampledPotential::new(pot, grid, Some(omega));
    let rs = grid.interior_nodes();
    let qw = q.q_reduced();
    let zero = vec![0.0; grid.interior()];
    let free = LinearPair::new(grid, &zero, &q.q.re());
    let lu: TridiagLu<f64> = free.plus.factor();
    let h1 = |d: &[f64]| RadialField::from_reduced_real(grid, d).h1_norm();
    let mut v = vec![0.0; grid.interior()];
    let mut prev_step = f64::INFINITY;
    let mut ratio: f64 = 0.0;
    let mut growth = 0;
    let mut iterations = 0;
    for it in 1..=500 {
        iterations = it;
        let rhs: Vec<f64> = (0..v.len())
            .map(|i| {
                let r = rs[i];
                let (qi, vi) = (qw[i] / r, v[i] / r);
                (3.0 * qi * vi * vi + vi * vi * vi - sp.v[i] * (qi + vi)) * r
            })
            .collect();
        let nv = lu.solve(&rhs);
        let diff: Vec<f64> = nv.iter().zip(&v).map(|(a, b)| a - b).collect();
        let step = h1(&diff);
        v = nv;
        if !step.is_finite() {
            return Err(Error::ContractionDiverged { omega });
        }
        if prev_step.is_finite() && prev_step > 0.0 {
            let rt = step / prev_step;
            if it > 2 {
                ratio = ratio.max(rt);
            }
            if rt >= 1.0 {
                growth += 1;
                if growth >= 5 {
                    return Err(Error::ContractionDiverged { omega });
                }
            } else {
                growth = 0;
            }
        }
        prev_step = step;
        if step < 1e-12 {
            break;
        }
    }
    if prev_step >= 1e-9 {
        return Err(Error::ContractionDiverged { omega });
    }
    let mut w: Vec<f64> = qw.iter().zip(&v).map(|(a, b)| a + b).collect();
    let (res, _) = newton_polish(grid, &sp.v, &mut w, 1e-12, 10)?;
    Ok(finish(grid, &sp, w, res, iterations, ratio))
}

/// Largest omega in a descending scan for which the contraction converges.
pub fn contraction_threshold(pot: &Potential, q: &Soliton, omegas: &[f64]) -> Option<f64> {
    let mut sorted = omegas.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut last_ok = None;
    for om in sorted {
        match excited_soliton(pot, q, om) {
            Ok(_) => last_ok = Some(om),
            Err(_) => break,
        }
    }
    last_ok
}

/// One point of the small-amplitude branch Phi[z] = z phi0 + gamma.
#[derive(Debug, Clone)]
pub struct BranchPoint {
    pub z: Complex64,
    pub phi: RadialField,
    pub big_omega: f64,
    pub iterations: usize,
}

/// Solves (H + Omega) Phi = |Phi|^2 Phi with Phi = z phi0 + gamma, gamma orthogonal
/// to phi0, by alternating the projected equation for Omega with a solve for gamma.
pub fn ground_branch(pot: &Potential, grid: RadialGrid, z: Complex64) -> Result<BranchPoint> {
    let gs = ground_eigenpair(pot, grid)?;
    ground_branch_with(pot, &gs, z)
}

pub fn ground_branch_with(pot: &Potential, gs: &GroundState, z: Complex64) -> Result<BranchPoint> {
    let grid = gs.phi.grid();
    let a = z.norm();
    if a == 0.0 {
        return Ok(BranchPoint {
            z,
            phi: RadialField::zeros(grid),
            big_omega: -gs.energy,
            iterations: 0,
        });
    }
    let sp = SampledPotential::new(pot, grid, Some(1.0));
    let rs = grid.interior_nodes();
    let p0 = gs.phi.reduced_re();
    let wq = grid.reduced_weight();
    let dotw = |x: &[f64], y: &[f64]| wq * x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
    let mut gamma = vec![0.0; p0.len()];
    let mut prev = f64::INFINITY;
    let h = grid.spacing();
    for it in 1..=400 {
        let phi: Vec<f64> = p0.iter().zip(&gamma).map(|(p, g)| a * p + g).collect();
        let cube: Vec<f64> = phi.iter().zip(&rs).map(|(w, r)| w * w * w / (r * r)).collect();
        let big_omega = -gs.energy + dotw(&cube, &p0) / a;
        let c = dotw(&cube, &p0);
        let rhs: Vec<f64> = cube.iter().zip(&p0).map(|(x, p)| x - c * p).collect();
        let m = rhs.len();
        let mut sub = vec![-1.0 / (h * h); m];
        sub[0] = 0.0;
        let mut sup = vec![-1.0 / (h * h); m];
        sup[m - 1] = 0.0;
        let diag = (0..m).map(|i| 2.0 / (h * h) + sp.v[i] + big_omega).collect();
        let mut ng = Tridiag::new(sub, diag, sup).factor().solve(&rhs);
        let c = dotw(&ng, &p0);
        for (g, p) in ng.iter_mut().zip(&p0) {
            *g -= c * p;
        }
        let d: Vec<f64> = ng.iter().zip(&gamma).map(|(x, y)| x - y).collect();
        let step = RadialField::from_reduced_real(grid, &d).h1_norm();
        gamma = ng;
        if !step.is_finite() || (it > 5 && step > prev) || big_omega <= 0.0 {
            return Err(Error::AmplitudeTooLarge(a));
        }
        prev = step;
        if step < 1e-12 {
            let phi: Vec<f64> = p0.iter().zip(&gamma).map(|(p, g)| a * p + g).collect();
            let phase = Complex64::from_polar(1.0, z.arg());
            let f = RadialField::from_reduced_real(grid, &phi).scale_complex(phase);
            return Ok(BranchPoint {
                z,
                phi: f,
                big_omega,
                iterations: it,
            });
        }
    }
    Err(Error::AmplitudeTooLarge(a))
}

/// Largest amplitude (by bisection over [0, upper]) for which the branch converges.
pub fn branch_threshold(pot: &Potential, gs: &GroundState, upper: f64) -> f64 {
    let ok = |a: f64| ground_branch_with(pot, gs, Complex64::new(a, 0.0)).is_ok();
    if ok(upper) {
        return upper;
    }
    let (mut lo, mut hi) = (0.0, upper);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Energy curve sample at omega: mu = omega^{-1/2} M, E1 = omega^{1/2} E^omega,
/// and finite-difference derivatives dE1/dmu and d^2E1/dmu^2.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CurvePoint {
    pub omega: f64,
    pub mu: f64,
    pub e1: f64,
    pub de1: f64,
    pub d2e1: f64,
    /// -d omega / d mu, an independent route to the second derivative
    pub d2e1_alt: f64,
}

pub fn energy_curves(pot: &Potential, q: &Soliton, omegas: &[f64], eta: f64) -> Result<Vec<CurvePoint>> {
    let mut out = Vec::new();
    for &om in omegas {
        let pts: Vec<(f64, f64, f64)> = [-1.0, 0.0, 1.0]
            .iter()
            .map(|&s| {
                let o = om * (s * eta).exp();
                let sol = excited_soliton(pot, q, o)?;
                let f = sol.functionals;
                Ok((o, f.mass / o.sqrt(), f.energy * o.sqrt()))
            })
            .collect::<Result<_>>()?;
        let (o0, m0, e0) = pts[0];
        let (_, m1, e1) = pts[1];
        let (o2, m2, e2) = pts[2];
        let de1 = (e2 - e0) / (m2 - m0);
        // three-point second derivative on a nonuniform mesh
        let ha = m1 - m0;
        let hb = m2 - m1;
        let d2 = 2.0 * (e0 * hb - e1 * (ha + hb) + e2 * ha) / (ha * hb * (ha + hb));
        let dmu_domega = (m2 - m0) / (o2 - o0);
        out.push(CurvePoint {
            omega: om,
            mu: m1,
            e1,
            de1,
            d2e1: d2,
            d2e1_alt: -1.0 / dmu_domega,
        });
    }
    Ok(out)
}
