//! Localized virial identities. For P_F(u) = Im int F(r) u conj(u_r) dx,
//!
//!   d/dt P_F = 2 int F' |u_r|^2 - 1/2 int (Lap D) |u|^2 - 1/2 int D |u|^4 - int F V_r |u|^2
//!
//! with D = F' + 2F/r. F = r gives d/dt P = 2 K2.

use serde::{Deserialize, Serialize};

use crate::grid::{RadialField, FOUR_PI};
use crate::potential::SampledPotential;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum VirialWeight {
    /// F = r
    Plain,
    /// F = m phi(r/m), phi(s) = s on [0,1], constant 3/2 beyond 2.
    BlowUp { m: f64 },
    /// F = r / (1 + r/m)
    Scatter { m: f64 },
}

/// Septic smooth step p(t) and its antiderivative and derivatives on [0,1].
fn glue(t: f64) -> (f64, f64, f64, f64) {
    let t = t.clamp(0.0, 1.0);
    let t2 = t * t;
    let t3 = t2 * t;
    let t4 = t3 * t;
    let p = t4 * (35.0 - 84.0 * t + 70.0 * t2 - 20.0 * t3);
    let big_p = t4 * t * (7.0 - 14.0 * t + 10.0 * t2 - 2.5 * t3);
    let dp = t3 * (140.0 - 420.0 * t + 420.0 * t2 - 140.0 * t3);
    let ddp = t2 * (420.0 - 1680.0 * t + 2100.0 * t2 - 840.0 * t3);
    (big_p, p, dp, ddp)
}

impl VirialWeight {
    /// (F, F', D, Lap D) at radius r.
    pub fn profile(&self, r: f64) -> (f64, f64, f64, f64) {
        match *self {
            VirialWeight::Plain => (r, 1.0, 3.0, 0.0),
            VirialWeight::BlowUp { m } => {
                let s = r / m;
                if s <= 1.0 {
                    return (r, 1.0, 3.0, 0.0);
                }
                let (big_p, p, dp, ddp) = glue(s - 1.0);
                let f = s.min(2.0) - big_p;
                let f1 = 1.0 - p;
                let f2 = -dp;
                let f3 = -ddp;
                let d = f1 + 2.0 * f / s;
                let ds = f2 + 2.0 * f1 / s - 2.0 * f / (s * s);
                let dss = f3 + 2.0 * f2 / s - 4.0 * f1 / (s * s) + 4.0 * f / (s * s * s);
                (m * f, f1, d, (dss + 2.0 * ds / s) / (m * m))
            }
            VirialWeight::Scatter { m } => {
                let s = r / m;
                let psi = 1.0 / (1.0 + s);
                let ds = -2.0 * psi.powi(3) - 2.0 * psi * psi;
                let dss = 6.0 * psi.powi(4) + 4.0 * psi.powi(3);
                (r * psi, psi * psi, psi * psi + 2.0 * psi, (dss + 2.0 * ds / s) / (m * m))
            }
        }
    }
}

/// Nodal radial derivative u_r = (w' - w/r)/r from centred differences of w = r u.
fn radial_derivative(u: &RadialField) -> Vec<num_complex::Complex64> {
    let g = u.grid();
    let w = u.reduced();
    let h = g.spacing();
    let m = w.len();
    (0..m)
        .map(|i| {
            let r = g.node(i);
            let l = if i > 0 { w[i - 1] } else { Default::default() };
            let rr = if i + 1 < m { w[i + 1] } else { Default::default() };
            ((rr - l) / (2.0 * h) - w[i] / r) / r
        })
        .collect()
}

pub fn momentum(u: &RadialField, weight: VirialWeight) -> f64 {
    let g = u.grid();
    let ur = radial_derivative(u);
    let mut s = 0.0;
    for (i, d) in ur.iter().enumerate() {
        let r = g.node(i);
        let (f, ..) = weight.profile(r);
        s += f * (u.value(i) * d.conj()).im * r * r;
    }
    FOUR_PI * g.spacing() * s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VirialRhs {
    pub total: f64,
    pub gradient: f64,
    pub bilaplacian: f64,
    pub quartic: f64,
    pub potential: f64,
}

pub fn rhs(u: &RadialField, pot: &SampledPotential, weight: VirialWeight) -> VirialRhs {
    let g = u.grid();
    let ur = radial_derivative(u);
    let (mut a, mut b, mut c, mut d) = (0.0, 0.0, 0.0, 0.0);
    for (i, du) in ur.iter().enumerate() {
        let r = g.node(i);
        let (f, f1, dd, lap_d) = weight.profile(r);
        let rho = u.value(i).norm_sqr();
        let r2 = r * r;
        a += 2.0 * f1 * du.norm_sqr() * r2;
        b += -0.5 * lap_d * rho * r2;
        c += -0.5 * dd * rho * rho * r2;
        // F V_r = (F/r) (r V_r)
        d += -(f / r) * pot.r_vr[i] * rho * r2;
    }
    let k = FOUR_PI * g.spacing();
    let (a, b, c, d) = (k * a, k * b, k * c, k * d);
    VirialRhs {
        total: a + b + c + d,
        gradient: a,
        bilaplacian: b,
        quartic: c,
        potential: d,
    }
}

/// Right side of the blow-up identity in the form
/// 2 K2(u) - <|u_r|^2 | 2 f0> + <|u/r|^2 | f1> + <|u|^4 | f2> + 2 <f0 r V_r>(u).
/// With `literal_f0` the potential weight is 1 - phi'(r/m), otherwise 1 - phi(s)/s,
/// which is what the identity actually requires.
pub fn blowup_rhs_split(u: &RadialField, pot: &SampledPotential, m: f64, literal_f0: bool) -> f64 {
    let g = u.grid();
    let wt = VirialWeight::BlowUp { m };
    let ur = radial_derivative(u);
    let k2 = crate::functionals::evaluate(u, pot).k2;
    let mut s = 0.0;
    for (i, du) in ur.iter().enumerate() {
        let r = g.node(i);
        let (f, f1p, dd, lap_d) = wt.profile(r);
        let sr = r / m;
        let f0 = 1.0 - f1p;
        let f1 = -0.5 * sr * sr * m * m * lap_d;
        let f2 = 1.5 - 0.5 * dd;
        let fv = if literal_f0 { f0 } else { 1.0 - f / r };
        let rho = u.value(i).norm_sqr();
        s += (-2.0 * f0 * du.norm_sqr() + f1 * rho / (r * r) + f2 * rho * rho + fv * pot.r_vr[i] * rho) * r * r;
    }
    2.0 * k2 + FOUR_PI * g.spacing() * s
}

/// Right side of the scattering identity in the form
/// 2 K2(psi_m u) + <|u/m|^2 | f3> - <|u|^4 | f4> - 2 m^{-1} <r (r V_r)>(psi_m u).
pub fn scatter_rhs_split(u: &RadialField, pot: &SampledPotential, m: f64) -> f64 {
    let g = u.grid();
    let vals: Vec<_> = (0..g.n_points())
        .map(|i| u.value(i) / (1.0 + g.node(i) / m))
        .collect();
    let psi_u = RadialField::from_values(g, vals).expect("finite field");
    let k2 = crate::functionals::evaluate(&psi_u, pot).k2;
    let mut s = 0.0;
    for i in 0..g.interior() {
        let r = g.node(i);
        let sr = r / m;
        let p = 1.0 / (1.0 + sr);
        let f3 = p.powi(4);
        let f4 = p.powi(4) * sr * (sr * sr + 3.5 * sr + 4.0);
        let rho = u.value(i).norm_sqr();
        let prho = psi_u.value(i).norm_sqr();
        s += (f3 * rho / (m * m) - f4 * rho * rho - r * pot.r_vr[i] * prho / m) * r * r;
    }
    2.0 * k2 + FOUR_PI * g.spacing() * s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_are_smooth_at_the_junctions() {
        let w = VirialWeight::BlowUp { m: 2.0 };
        for r in [2.0, 4.0] {
            let a = w.profile(r - 1e-7);
            let b = w.profile(r + 1e-7);
            assert!((a.0 - b.0).abs() < 1e-6 && (a.1 - b.1).abs() < 1e-6 && (a.2 - b.2).abs() < 1e-5);
        }
        let (f, f1, ..) = w.profile(10.0);
        assert!((f - 3.0).abs() < 1e-12 && f1.abs() < 1e-12);
    }

    #[test]
    fn lap_d_matches_finite_differences() {
        for w in [VirialWeight::BlowUp { m: 1.5 }, VirialWeight::Scatter { m: 2.0 }] {
            for r in [0.7, 2.2, 2.9, 5.0] {
                let d = |x: f64| w.profile(x).2;
                let e = 1e-4;
                let fd = (d(r + e) - 2.0 * d(r) + d(r - e)) / (e * e) + (d(r + e) - d(r - e)) / e / r;
                assert!((fd - w.profile(r).3).abs() < 1e-5, "{r} {fd} {}", w.profile(r).3);
            }
        }
    }
}
