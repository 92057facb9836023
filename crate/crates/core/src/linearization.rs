//! The linearized operator around Q_omega: L v = L_+ v1 + i L_- v2, its unstable
//! eigenpair i L g_+ = alpha g_+, the spectral projections and the energy norm.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{RadialField, RadialGrid};
use crate::linalg::{sturm_count, BandLu, Tridiag, TridiagLu};
use crate::potential::{Potential, SampledPotential};
use crate::solitons::{compute_q, LinearPair, Soliton};

/// alpha for the free ground state on a coarse grid, from a dense
/// eigen-decomposition of L_-^{1/2} L_+ L_-^{1/2}.
pub fn coarse_alpha_seed() -> Result<f64> {
    let grid = RadialGrid::new(400, 20.0)?;
    let q = compute_q(grid)?;
    let ops = q.linear_pair(&Potential::Zero);
    let dense = |t: &Tridiag<f64>| {
        let m = t.len();
        let mut a = DMatrix::zeros(m, m);
        for i in 0..m {
            a[(i, i)] = t.diag[i];
            if i + 1 < m {
                a[(i, i + 1)] = t.sup[i];
                a[(i + 1, i)] = t.sup[i];
            }
        }
        a
    };
    let lm = SymmetricEigen::new(dense(&ops.minus));
    let sq = lm.eigenvalues.map(|x| x.max(0.0).sqrt());
    let root = &lm.eigenvectors * DMatrix::from_diagonal(&sq) * lm.eigenvectors.transpose();
    let prod = &root * dense(&ops.plus) * &root;
    let sym = (&prod + prod.transpose()) * 0.5;
    let ev = SymmetricEigen::new(sym).eigenvalues;
    let min = ev.iter().cloned().fold(f64::INFINITY, f64::min);
    if min >= 0.0 {
        return Err(Error::EigenNotIsolated("no negative direction in L_- L_+".into()));
    }
    Ok((-min).sqrt())
}

#[derive(Debug, Clone, Copy)]
pub struct Projection {
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    /// lambda_+ + lambda_- = -alpha <v1|g2>
    pub lambda1: f64,
    /// lambda_+ - lambda_- = -alpha <v2|g1>
    pub lambda2: f64,
    /// <iQ'|v>
    pub kernel: f64,
}

/// Linearization data at one omega (None = free ground state).
#[derive(Debug, Clone)]
pub struct Pencil {
    pub omega: Option<f64>,
    pub grid: RadialGrid,
    pub alpha: f64,
    pub g1: RadialField,
    pub g2: RadialField,
    pub q: RadialField,
    pub q_prime: RadialField,
    pub potential: SampledPotential,
    pub eig_residual: f64,
    ops: LinearPair,
    lplus: TridiagLu<f64>,
    lminus: TridiagLu<f64>,
}

impl Pencil {
    /// Builds the pencil, seeding the eigen-solve with (alpha, g) if given,
    /// else from the coarse dense seed.
    pub fn build(pot: &Potential, sol: &Soliton, seed: Option<(f64, &RadialField, &RadialField)>) -> Result<Pencil> {
        let grid = sol.q.grid();
        let sp = sol.sampled_potential(pot);
        let ops = sol.linear_pair(pot);
        let m = grid.interior();
        let h = grid.spacing();
        // spectral certificate: one negative direction of L_+, L_- >= 0
        let tol = 1e-9;
        let od: Vec<f64> = vec![-1.0 / (h * h); m - 1];
        let neg_plus = sturm_count(&ops.plus.diag, &od, -tol);
        let neg_minus = sturm_count(&ops.minus.diag, &od, -tol);
        if neg_plus != 1 || neg_minus != 0 {
            return Err(Error::EigenNotIsolated(format!(
                "L_+ has {neg_plus} negative eigenvalues, L_- has {neg_minus}"
            )));
        }
        let (mut alpha, mut x1, mut x2) = match seed {
            Some((a, g1, g2)) => (a, g1.reduced_re(), g2.reduced_re()),
            None => {
                let a = coarse_alpha_seed()?;
                let qw = sol.q.reduced_re();
                (a, qw.iter().map(|x| x * 0.1).collect(), qw)
            }
        };
        let wq = grid.reduced_weight();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let mut residual = f64::INFINITY;
        let scale = 4.0 / (h * h);
        for outer in 0..8 {
            let s = alpha;
            let lu = squared_pencil_lu(&ops, s);
            for _ in 0..6 {
                let b1 = &x1;
                let b2 = &x2;
                let lp_b1 = ops.plus.apply(b1);
                let rhs: Vec<f64> = (0..m).map(|i| -s * b2[i] - lp_b1[i]).collect();
                let y2 = lu.solve(&rhs);
                let lm_y2 = ops.minus.apply(&y2);
                let y1: Vec<f64> = (0..m).map(|i| -(b1[i] + lm_y2[i]) / s).collect();
                let n = (dot(&y1, &y1) + dot(&y2, &y2)).sqrt();
                x1 = y1.iter().map(|v| v / n).collect();
                x2 = y2.iter().map(|v| v / n).collect();
            }
            let lp1 = ops.plus.apply(&x1);
            let lm2 = ops.minus.apply(&x2);
            let nn = dot(&x1, &x1) + dot(&x2, &x2);
            alpha = (dot(&lp1, &x2) - dot(&lm2, &x1)) / nn;
            let r1: f64 = (0..m).map(|i| (-lm2[i] - alpha * x1[i]).powi(2)).sum();
            let r2: f64 = (0..m).map(|i| (lp1[i] - alpha * x2[i]).powi(2)).sum();
            residual = ((r1 + r2) / nn).sqrt() / scale;
            if residual < 1e-13 && outer > 0 {
                break;
            }
        }
        if !(residual < 1e-10) || !(alpha > 0.0) {
            return Err(Error::NotConverged {
                what: "unstable eigenpair",
                iterations: 8,
                residual,
            });
        }
        // normalization alpha <i g_+|g_-> = 2, i.e. <g1|g2> = -1/alpha
        let c = wq * dot(&x1, &x2);
        if c >= 0.0 {
            return Err(Error::EigenNotIsolated(format!("<g1|g2> = {c:e} is not negative")));
        }
        let mut k = (-1.0 / (alpha * c)).sqrt();
        let qw = sol.q.reduced_re();
        if dot(&qw, &x2) < 0.0 {
            k = -k;
        }
        let g1 = RadialField::from_reduced_real(grid, &x1.iter().map(|v| v * k).collect::<Vec<_>>());
        let g2 = RadialField::from_reduced_real(grid, &x2.iter().map(|v| v * k).collect::<Vec<_>>());
        let lplus = ops.plus.factor();
        let lminus = ops.minus.factor();
        Ok(Pencil {
            omega: sol.omega,
            grid,
            alpha,
            g1,
            g2,
            q: sol.q.clone(),
            q_prime: sol.q_prime.clone(),
            potential: sp,
            eig_residual: residual,
            ops,
            lplus,
            lminus,
        })
    }

    pub fn g_plus(&self) -> RadialField {
        let re = self.g1.re();
        let im = self.g2.re();
        RadialField::from_parts(self.grid, &re, &im)
    }

    pub fn g_minus(&self) -> RadialField {
        self.g_plus().conj()
    }

    pub fn apply_lplus(&self, f: &[f64]) -> Vec<f64> {
        self.ops.plus.apply(f)
    }

    pub fn apply_lminus(&self, f: &[f64]) -> Vec<f64> {
        self.ops.minus.apply(f)
    }

    /// L v = L_+ v1 + i L_- v2.
    pub fn apply(&self, v: &RadialField) -> RadialField {
        let a = self.ops.plus.apply(&v.reduced_re());
        let b = self.ops.minus.apply(&v.reduced_im());
        let w: Vec<Complex64> = a.into_iter().zip(b).map(|(x, y)| Complex64::new(x, y)).collect();
        RadialField::from_reduced(self.grid, &w)
    }

    /// <L v | v>
    pub fn quadratic_form(&self, v: &RadialField) -> f64 {
        let a = v.reduced_re();
        let b = v.reduced_im();
        let la = self.ops.plus.apply(&a);
        let lb = self.ops.minus.apply(&b);
        let s: f64 = la.iter().zip(&a).map(|(x, y)| x * y).sum::<f64>()
            + lb.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>();
        self.grid.reduced_weight() * s
    }

    /// Solves L_+ u = f for real f.
    pub fn solve_lplus(&self, f: &RadialField) -> RadialField {
        let u = self.lplus.solve(&f.reduced_re());
        RadialField::from_reduced_real(self.grid, &u)
    }

    /// Solves L_- u = f for real f orthogonal to Q, returning u orthogonal to Q.
    pub fn solve_lminus_perp(&self, f: &RadialField) -> Result<RadialField> {
        let qw = self.q.reduced_re();
        let qq: f64 = qw.iter().map(|x| x * x).sum();
        let b = f.reduced_re();
        let bq: f64 = b.iter().zip(&qw).map(|(x, y)| x * y).sum::<f64>();
        let bn: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        if bq.abs() > 1e-8 * bn * qq.sqrt() {
            return Err(Error::BadInput("right-hand side is not orthogonal to Q".into()));
        }
        let project = |x: &mut Vec<f64>| {
            let c: f64 = x.iter().zip(&qw).map(|(a, b)| a * b).sum::<f64>() / qq;
            for (a, q) in x.iter_mut().zip(&qw) {
                *a -= c * q;
            }
        };
        let mut rhs = b.clone();
        project(&mut rhs);
        let mut u = self.lminus.solve(&rhs);
        project(&mut u);
        // one refinement step on the complement of Q
        let lu = self.ops.minus.apply(&u);
        let mut r: Vec<f64> = rhs.iter().zip(&lu).map(|(a, b)| a - b).collect();
        project(&mut r);
        let mut du = self.lminus.solve(&r);
        project(&mut du);
        for (a, d) in u.iter_mut().zip(&du) {
            *a += d;
        }
        Ok(RadialField::from_reduced_real(self.grid, &u))
    }

    pub fn project(&self, v: &RadialField) -> Projection {
        let v1 = RadialField::from_real(self.grid, &v.re());
        let v2 = RadialField::from_real(self.grid, &v.im());
        let lambda1 = -self.alpha * v1.inner(&self.g2);
        let lambda2 = -self.alpha * v2.inner(&self.g1);
        // <iQ'|v> = Re int i Q' conj(v) = <Q'|v2>
        let kernel = self.q_prime.inner(&v2);
        Projection {
            lambda_plus: 0.5 * (lambda1 + lambda2),
            lambda_minus: 0.5 * (lambda1 - lambda2),
            lambda1,
            lambda2,
            kernel,
        }
    }

    /// zeta = v - lambda_+ g_+ - lambda_- g_-
    pub fn continuous_part(&self, v: &RadialField, p: &Projection) -> RadialField {
        v.axpy(-p.lambda_plus, &self.g_plus()).axpy(-p.lambda_minus, &self.g_minus())
    }

    /// ||v||_omega^2 = lambda_+^2 + lambda_-^2 + <iQ'|v>^2/2 + <L zeta|zeta>/2.
    pub fn energy_norm_sq(&self, v: &RadialField) -> Result<f64> {
        let p = self.project(v);
        let z = self.continuous_part(v, &p);
        let qf = self.quadratic_form(&z);
        if qf < -1e-8 * v.h1_norm_sq().max(1e-300) {
            return Err(Error::NegativeQuadraticForm(qf));
        }
        Ok(p.lambda_plus.powi(2) + p.lambda_minus.powi(2) + 0.5 * p.kernel.powi(2) + 0.5 * qf.max(0.0))
    }

    pub fn energy_norm(&self, v: &RadialField) -> Result<f64> {
        Ok(self.energy_norm_sq(v)?.sqrt())
    }

    /// Quartic remainder C(v) = <|v|^2 v|Q> + G(v).
    pub fn cubic_remainder(&self, v: &RadialField) -> f64 {
        let cub = v.map(|z| z * z.norm_sqr());
        cub.inner(&self.q) + 0.25 * v.l4_norm().powi(4)
    }

    /// (2 V + r V_r) Q, the scaling derivative of the potential applied to Q.
    pub fn potential_scaling_term(&self) -> RadialField {
        let w: Vec<f64> = (0..self.grid.interior())
            .map(|i| (2.0 * self.potential.v[i] + self.potential.r_vr[i]) * self.q.value(i).re)
            .collect();
        RadialField::from_real(self.grid, &w)
    }
}

/// LU of L_+ L_- + s^2 (pentadiagonal, partial pivoting).
fn squared_pencil_lu(ops: &LinearPair, s: f64) -> BandLu {
    let m = ops.plus.len();
    let (p, n) = (&ops.plus, &ops.minus);
    let at = |t: &Tridiag<f64>, i: usize, j: usize| -> f64 {
        if i == j {
            t.diag[i]
        } else if j + 1 == i {
            t.sub[i]
        } else if i + 1 == j {
            t.sup[i]
        } else {
            0.0
        }
    };
    BandLu::factor(m, 2, 2, |i, j| {
        let lo = i.saturating_sub(1).max(j.saturating_sub(1));
        let hi = (i + 1).min(j + 1).min(m - 1);
        let mut s2 = if i == j { s * s } else { 0.0 };
        for k in lo..=hi {
            s2 += at(p, i, k) * at(n, k, j);
        }
        s2
    })
}

/// P_c v = v - phi0 (v|phi0) for the ground state of -Lap + V.
pub fn pc_ground(phi0: &RadialField, v: &RadialField) -> RadialField {
    let c = v.pairing(phi0);
    v.zip_map(phi0, |a, b| a - b * c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coarse_seed_is_near_alpha() {
        let a = coarse_alpha_seed().unwrap();
        assert!((a - 5.5).abs() < 0.2, "{a}");
    }

    #[test]
    fn free_pencil_normalization_and_signs() {
        let g = RadialGrid::new(1024, 25.0).unwrap();
        let q = compute_q(g).unwrap();
        let p = Pencil::build(&Potential::Zero, &q, None).unwrap();
        let gp = p.g_plus();
        let gm = p.g_minus();
        let norm = p.alpha * gp.mul_i().inner(&gm);
        assert!((norm - 2.0).abs() < 1e-10);
        assert!(p.q.inner(&p.g2) > 0.0);
        assert!(p.q.inner(&p.g1).abs() < 1e-8);
        let pr = p.project(&gp);
        assert!((pr.lambda_plus - 1.0).abs() < 1e-10 && pr.lambda_minus.abs() < 1e-10);
        assert!((p.energy_norm_sq(&gp).unwrap() - 1.0).abs() < 1e-8);
    }
}
