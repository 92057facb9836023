//! Modulation coordinates e^{i theta}(Q_omega + v) near the soliton orbit, the
//! phase equation, the distances d0, d1, d and the sign functional.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::{Stepper, StepConfig};
use crate::functionals::evaluate;
use crate::grid::RadialField;
use crate::linearization::{Pencil, Projection};

/// Small constants of the dynamics near the excited state, fixed by calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThresholdConfig {
    pub delta_x: f64,
    pub delta_e: f64,
    pub delta_v: f64,
    pub delta_i: f64,
    pub delta_d: f64,
    pub delta_m: f64,
    pub delta_star: f64,
    pub c_x: f64,
    pub c_star: f64,
    pub eps_s: f64,
    pub omega_star: f64,
    pub omega_star2: f64,
    /// Dichotomy constant.
    pub c_d: f64,
    /// (delta, eps_V(delta), kappa_V(delta)) on an increasing delta grid.
    pub eps_v_table: Vec<(f64, f64, f64)>,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        ThresholdConfig {
            delta_x: 0.3,
            delta_e: 0.1,
            delta_v: 0.05,
            delta_i: 0.1,
            delta_d: 1.0,
            delta_m: 0.1,
            delta_star: 0.02,
            c_x: 0.1,
            c_star: 0.1,
            eps_s: 0.02,
            omega_star: 30.0,
            omega_star2: 100.0,
            c_d: 2.0,
            eps_v_table: Vec::new(),
        }
    }
}

impl ThresholdConfig {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.delta_x,
            self.delta_e,
            self.delta_v,
            self.delta_i,
            self.delta_d,
            self.delta_m,
            self.delta_star,
            self.c_x,
            self.c_star,
            self.eps_s,
        ];
        if all.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::BadInput("thresholds must be positive".into()));
        }
        if !(self.delta_star <= self.delta_i && self.delta_i <= self.delta_e && self.delta_e <= self.delta_d / 2.0) {
            return Err(Error::BadInput("need delta_* <= delta_I <= delta_E <= delta_D / 2".into()));
        }
        if !(self.delta_v < self.delta_x / 2.0) {
            return Err(Error::BadInput("need delta_V < delta_X / 2".into()));
        }
        Ok(())
    }

    /// eps_V(delta) by linear interpolation in the table (clamped).
    pub fn eps_v(&self, delta: f64) -> Option<f64> {
        interp(&self.eps_v_table, delta, |e| e.1)
    }

    pub fn kappa_v(&self, delta: f64) -> Option<f64> {
        interp(&self.eps_v_table, delta, |e| e.2)
    }
}

fn interp(t: &[(f64, f64, f64)], x: f64, pick: impl Fn(&(f64, f64, f64)) -> f64) -> Option<f64> {
    let first = t.first()?;
    if x <= first.0 {
        return Some(pick(first));
    }
    for w in t.windows(2) {
        if x <= w[1].0 {
            let s = (x - w[0].0) / (w[1].0 - w[0].0);
            return Some(pick(&w[0]) * (1.0 - s) + pick(&w[1]) * s);
        }
    }
    t.last().map(pick)
}

/// Smooth bump: 1 on |t| <= 1, 0 on |t| >= 2.
pub fn chi(t: f64) -> f64 {
    let x = 2.0 - t.abs();
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let a = (-1.0 / x).exp();
    let b = (-1.0 / (1.0 - x)).exp();
    a / (a + b)
}

/// int chi over the real line.
pub fn chi_mass() -> f64 {
    // 2 from the plateau plus two symmetric transition layers of mass 1/2 each
    3.0
}

#[derive(Debug, Clone)]
pub struct Decomposition {
    pub theta: f64,
    pub v: RadialField,
    pub projection: Projection,
    pub zeta: RadialField,
    /// ||v||_omega
    pub energy_norm: f64,
}

impl Decomposition {
    pub fn b_plus(&self) -> f64 {
        self.projection.lambda_plus
    }

    pub fn b_minus(&self) -> f64 {
        self.projection.lambda_minus
    }

    pub fn b1(&self) -> f64 {
        self.projection.lambda1
    }
}

/// Phase for which e^{-i theta} phi - Q is orthogonal to i Q' with minimal H1 size.
pub fn modulation_phase(phi: &RadialField, pencil: &Pencil) -> f64 {
    let c = phi.pairing(&pencil.q_prime);
    let t0 = c.arg();
    let cand = [t0, t0 + std::f64::consts::PI];
    let size = |t: f64| phi.rotate(-t).sub(&pencil.q).h1_norm_sq();
    let best = if size(cand[0]) <= size(cand[1]) { cand[0] } else { cand[1] };
    wrap(best)
}

fn wrap(t: f64) -> f64 {
    let tau = 2.0 * std::f64::consts::PI;
    let r = t.rem_euclid(tau);
    if r > std::f64::consts::PI {
        r - tau
    } else {
        r
    }
}

pub fn decompose(phi: &RadialField, pencil: &Pencil, cfg: &ThresholdConfig) -> Result<Decomposition> {
    let d0 = dist0(phi, &pencil.q);
    if d0 >= cfg.delta_d {
        return Err(Error::TooFarFromOrbit(d0));
    }
    Ok(decompose_unchecked(phi, pencil))
}

/// Decomposition without the chart-size check.
pub fn decompose_unchecked(phi: &RadialField, pencil: &Pencil) -> Decomposition {
    let theta = modulation_phase(phi, pencil);
    let v = phi.rotate(-theta).sub(&pencil.q);
    let projection = pencil.project(&v);
    let zeta = pencil.continuous_part(&v, &projection);
    let qf = pencil.quadratic_form(&zeta).max(0.0);
    let en = projection.lambda_plus.powi(2)
        + projection.lambda_minus.powi(2)
        + 0.5 * projection.kernel.powi(2)
        + 0.5 * qf;
    Decomposition {
        theta,
        v,
        projection,
        zeta,
        energy_norm: en.sqrt(),
    }
}

pub fn reconstruct(theta: f64, v: &RadialField, q: &RadialField) -> RadialField {
    q.add(v).rotate(theta)
}

/// m(v) from 0 = <Q + v|Q'> m + <v|Q> + <N(v)|Q'>, N(v) = 2Q|v|^2 + Q v^2 + |v|^2 v.
pub fn phase_rate(v: &RadialField, pencil: &Pencil) -> Result<f64> {
    let q = &pencil.q;
    let qp = &pencil.q_prime;
    let denom = q.add(v).inner(qp);
    let mq = 0.5 * q.l2_norm_sq();
    if denom.abs() < 1e-8 * mq {
        return Err(Error::DegenerateDenominator(denom));
    }
    let n = q.zip_map(v, |qq, vv| qq * (2.0 * vv.norm_sqr()) + qq * vv * vv + vv * vv.norm_sqr());
    Ok(-(v.inner(q) + n.inner(qp)) / denom)
}

/// d0 = min over theta of ||phi - e^{i theta} Q||_{H1} (closed form in theta).
pub fn dist0(phi: &RadialField, q: &RadialField) -> f64 {
    let re = RadialField::from_real(phi.grid(), &phi.re());
    let im = RadialField::from_real(phi.grid(), &phi.im());
    let c = Complex64::new(re.h1_inner(q), im.h1_inner(q));
    phi.sub(&q.rotate(c.arg())).h1_norm()
}

/// Golden-section search over the phase, an independent route to d0.
pub fn dist0_golden(phi: &RadialField, q: &RadialField) -> f64 {
    let f = |t: f64| phi.sub(&q.rotate(t)).h1_norm();
    let n = 64;
    let tau = 2.0 * std::f64::consts::PI;
    let mut best = (f64::INFINITY, 0.0);
    for k in 0..n {
        let t = tau * k as f64 / n as f64;
        let v = f(t);
        if v < best.0 {
            best = (v, t);
        }
    }
    let gr = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (best.1 - tau / n as f64, best.1 + tau / n as f64);
    for _ in 0..80 {
        let c = b - gr * (b - a);
        let d = a + gr * (b - a);
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    f(0.5 * (a + b))
}

/// d1^2 = (alpha / int chi) int chi(alpha t) ||v(t)||_omega^2 dt, evolving phi over
/// |t| <= 2 / alpha. Returns (d1, propagation_ok).
pub fn dist1(phi: &RadialField, pencil: &Pencil, step: StepConfig) -> (f64, bool) {
    let alpha = pencil.alpha;
    let t_half = 2.0 / alpha;
    let n = 16; // Simpson intervals per side
    let dt = t_half / n as f64;
    let mut samples = vec![0.0; 2 * n + 1];
    for (dir, sign) in [(1.0, 1usize), (-1.0, 0usize)] {
        let mut st = Stepper::new(phi.grid(), &pencil.potential, step);
        let mut w = if dir > 0.0 { phi.reduced() } else { phi.conj().reduced() };
        for k in 0..=n {
            if k > 0 && st.advance(&mut w, dt).is_err() {
                return (dist0(phi, &pencil.q), false);
            }
            let f = RadialField::from_reduced(phi.grid(), &w);
            let f = if dir > 0.0 { f } else { f.conj() };
            let e = decompose_unchecked(&f, pencil).energy_norm;
            let idx = if sign == 1 { n + k } else { n - k };
            samples[idx] = e * e;
        }
    }
    let h = dt;
    let mut s = 0.0;
    for (i, v) in samples.iter().enumerate() {
        let t = -t_half + i as f64 * h;
        let w = if i == 0 || i == 2 * n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * chi(alpha * t) * v;
    }
    s *= h / 3.0;
    ((alpha * s / chi_mass()).sqrt(), true)
}

/// Blend d = chi(d0/delta_E) d1 + (1 - chi(d0/delta_E)) d0.
pub fn blend(d0: f64, d1: f64, delta_e: f64) -> f64 {
    let c = chi(d0 / delta_e);
    c * d1 + (1.0 - c) * d0
}

pub fn dist(phi: &RadialField, pencil: &Pencil, step: StepConfig, cfg: &ThresholdConfig) -> f64 {
    let d0 = dist0(phi, &pencil.q);
    if d0 >= 2.0 * cfg.delta_e {
        return d0;
    }
    let (d1, _) = dist1(phi, pencil, step);
    blend(d0, d1, cfg.delta_e)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignCase {
    SmallMass,
    NearSoliton,
    Virial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignValue {
    pub sign: i8,
    pub case: SignCase,
}

/// Sigma_omega(phi) given its distance d (computed by the caller, usually via `dist`).
pub fn sign_functional_with_distance(
    phi: &RadialField,
    omega: f64,
    pencil: &Pencil,
    cfg: &ThresholdConfig,
    d: f64,
) -> Result<SignValue> {
    let fq = evaluate(&pencil.q, &pencil.potential);
    let f = evaluate(phi, &pencil.potential);
    let excess = f.action - fq.action;
    let bound = (cfg.eps_s * cfg.eps_s).min(cfg.c_x * d * d);
    if !(excess < bound) {
        return Err(Error::SignUndefined(format!("action excess {excess:e} >= {bound:e}")));
    }
    let mq = fq.mass;
    let c_s = cfg.c_d.max(2.0 + 1.0 / (mq * fq.kinetic));
    let c_m = 2.0 * (1.0 + cfg.c_d) * fq.action;
    let mut verdicts: Vec<SignValue> = Vec::new();
    if c_s * f.mass * f.kinetic <= 1.0 {
        verdicts.push(SignValue { sign: 1, case: SignCase::SmallMass });
    }
    if d < 2.0 * cfg.delta_v {
        let dec = decompose_unchecked(phi, pencil);
        let s = if dec.b1() >= 0.0 { 1 } else { -1 };
        verdicts.push(SignValue { sign: s, case: SignCase::NearSoliton });
    }
    if let Some(ev) = cfg.eps_v(d) {
        if excess < ev * ev && f.mass + omega * f.kinetic > c_m {
            let s = if f.k2 >= 0.0 { 1 } else { -1 };
            verdicts.push(SignValue { sign: s, case: SignCase::Virial });
        }
    }
    match verdicts.first() {
        None => Err(Error::SignUndefined("no case applies".into())),
        Some(first) => {
            if verdicts.iter().any(|v| v.sign != first.sign) {
                return Err(Error::SignUndefined(format!("cases disagree: {verdicts:?}")));
            }
            Ok(*first)
        }
    }
}

pub fn sign_functional(
    phi: &RadialField,
    omega: f64,
    pencil: &Pencil,
    step: StepConfig,
    cfg: &ThresholdConfig,
) -> Result<SignValue> {
    let d = dist(phi, pencil, step, cfg);
    sign_functional_with_distance(phi, omega, pencil, cfg, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chi_shape() {
        assert_eq!(chi(0.5), 1.0);
        assert_eq!(chi(-2.5), 0.0);
        assert!((chi(1.5) - 0.5).abs() < 1e-12);
        let n = 40000;
        let h = 6.0 / n as f64;
        let m: f64 = (0..n).map(|k| chi(-3.0 + (k as f64 + 0.5) * h) * h).sum();
        assert!((m - chi_mass()).abs() < 1e-9);
    }
}
