//! Radial potentials, their rescalings V^omega(r) = omega^{-1} V(omega^{-1/2} r),
//! the ground eigenpair of -Lap + V, and an admissibility report.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{RadialField, RadialGrid, FOUR_PI};
use crate::linalg::{sturm_count, tridiag_eigenvalue, Tridiag};

/// Calibrated Gaussian depth (width 1): midpoint of the one-bound-state window.
pub const DEFAULT_GAUSSIAN_DEPTH: f64 = 10.31;
pub const DEFAULT_GAUSSIAN_WIDTH: f64 = 1.0;

/// Core exponent of the singular-core family. Close to 3/2 so that the
/// soliton correction decays at the slowest admissible rate.
pub const DEFAULT_CORE_EXPONENT: f64 = 1.45;
pub const DEFAULT_CORE_WIDTH: f64 = 30.0;
/// Calibrated singular-core depth: midpoint of its one-bound-state window.
pub const DEFAULT_CORE_DEPTH: f64 = 0.385;

/// Eigenvalues above this count as continuum.
const BOUND_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Potential {
    Zero,
    /// V = -depth exp(-r^2 / width^2)
    Gaussian { depth: f64, width: f64 },
    /// V = -depth r^{-exponent} exp(-r^2 / width^2)
    SingularCore { depth: f64, width: f64, exponent: f64 },
    /// Tabulated V on increasing radii, cubic interpolation, power-law tail.
    Table { r: Vec<f64>, v: Vec<f64> },
}

impl Default for Potential {
    fn default() -> Self {
        Potential::Gaussian {
            depth: DEFAULT_GAUSSIAN_DEPTH,
            width: DEFAULT_GAUSSIAN_WIDTH,
        }
    }
}

impl Potential {
    pub fn default_singular_core() -> Self {
        Potential::SingularCore {
            depth: DEFAULT_CORE_DEPTH,
            width: DEFAULT_CORE_WIDTH,
            exponent: DEFAULT_CORE_EXPONENT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::NotAdmissible(m));
        match self {
            Potential::Zero => Ok(()),
            Potential::Gaussian { depth, width } => {
                if !(depth.is_finite() && width.is_finite() && *width > 0.0) {
                    return bad(format!("gaussian depth {depth}, width {width}"));
                }
                Ok(())
            }
            Potential::SingularCore { depth, width, exponent } => {
                if !(depth.is_finite() && width.is_finite() && *width > 0.0) {
                    return bad(format!("singular-core depth {depth}, width {width}"));
                }
                if !(0.0..1.5).contains(exponent) {
                    return bad(format!("core exponent {exponent} must lie in [0, 3/2)"));
                }
                Ok(())
            }
            Potential::Table { r, v } => {
                if r.len() < 4 || r.len() != v.len() {
                    return bad("table needs at least 4 (r, V) pairs of equal length".into());
                }
                if r[0] <= 0.0 || r.windows(2).any(|w| w[1] <= w[0]) {
                    return bad("table radii must be positive and increasing".into());
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFinite("potential table"));
                }
                Ok(())
            }
        }
    }

    /// Returns (V, r V_r, r^2 V_rr) at radius r > 0.
    pub fn eval(&self, r: f64) -> (f64, f64, f64) {
        match self {
            Potential::Zero => (0.0, 0.0, 0.0),
            Potential::Gaussian { depth, width } => {
                let x = r * r / (width * width);
                let v = -depth * (-x).exp();
                let rvr = -2.0 * x * v;
                let r2vrr = v * (-2.0 * x + 4.0 * x * x);
                (v, rvr, r2vrr)
            }
            Potential::SingularCore { depth, width, exponent } => {
                let x = r * r / (width * width);
                let v = -depth * r.powf(-exponent) * (-x).exp();
                let rvr = v * (-exponent - 2.0 * x);
                let r2vrr = rvr * (-exponent - 2.0 * x - 1.0) - 4.0 * x * v;
                (v, rvr, r2vrr)
            }
            Potential::Table { r: rs, v: vs } => {
                let f = |x: f64| table_value(rs, vs, x);
                let d = 1e-4 * r.max(1e-3);
                let (fm, f0, fp) = (f(r - d), f(r), f(r + d));
                let vr = (fp - fm) / (2.0 * d);
                let vrr = (fp - 2.0 * f0 + fm) / (d * d);
                (f0, r * vr, r * r * vrr)
            }
        }
    }

    pub fn value(&self, r: f64) -> f64 {
        self.eval(r).0
    }

    /// Local log-slope p = -d ln|V| / d ln r, used for tail bounds.
    fn tail_exponent(&self, r: f64) -> f64 {
        let (v, rvr, _) = self.eval(r);
        if v == 0.0 {
            f64::INFINITY
        } else {
            -rvr / v
        }
    }

    /// Radius beyond which the potential is treated as tail.
    pub fn natural_extent(&self) -> f64 {
        match self {
            Potential::Zero => 1.0,
            Potential::Gaussian { width, .. } | Potential::SingularCore { width, .. } => 8.0 * width,
            Potential::Table { r, .. } => *r.last().unwrap(),
        }
    }
}

/// Lagrange cubic through the table, power-law extrapolation past its end.
fn table_value(rs: &[f64], vs: &[f64], x: f64) -> f64 {
    let n = rs.len();
    if x >= rs[n - 1] {
        let p = -((vs[n - 1].abs().max(1e-300)).ln() - (vs[n - 2].abs().max(1e-300)).ln())
            / (rs[n - 1].ln() - rs[n - 2].ln());
        return vs[n - 1] * (x / rs[n - 1]).powf(-p);
    }
    if x <= rs[0] {
        return vs[0];
    }
    let k = rs.partition_point(|&r| r <= x).saturating_sub(1);
    let i0 = k.saturating_sub(1).min(n - 4);
    let mut s = 0.0;
    for a in i0..i0 + 4 {
        let mut l = 1.0;
        for b in i0..i0 + 4 {
            if a != b {
                l *= (x - rs[b]) / (rs[a] - rs[b]);
            }
        }
        s += l * vs[a];
    }
    s
}

/// A potential sampled at the interior nodes, optionally rescaled by omega.
/// `omega = None` means the omega -> infinity limit (zero potential).
#[derive(Debug, Clone)]
pub struct SampledPotential {
    pub omega: Option<f64>,
    pub v: Vec<f64>,
    pub r_vr: Vec<f64>,
    pub r2_vrr: Vec<f64>,
}

impl SampledPotential {
    pub fn new(pot: &Potential, grid: RadialGrid, omega: Option<f64>) -> Self {
        let m = grid.interior();
        let (mut v, mut r_vr, mut r2_vrr) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
        if let Some(om) = omega {
            let s = om.powf(-0.5);
            for i in 0..m {
                let (a, b, c) = pot.eval(s * grid.node(i));
                v[i] = a / om;
                r_vr[i] = b / om;
                r2_vrr[i] = c / om;
            }
        }
        SampledPotential { omega, v, r_vr, r2_vrr }
    }

    pub fn is_zero(&self) -> bool {
        self.v.iter().all(|x| *x == 0.0)
    }

    /// <V f | f> / 2 style weighted pairing helpers use the reduced weight.
    pub fn expectation(&self, f: &RadialField) -> f64 {
        weighted_pairing(&self.v, f)
    }

    pub fn expectation_r_vr(&self, f: &RadialField) -> f64 {
        weighted_pairing(&self.r_vr, f)
    }

    pub fn expectation_r2_vrr(&self, f: &RadialField) -> f64 {
        weighted_pairing(&self.r2_vrr, f)
    }
}

/// int W |f|^2 for a nodal weight W.
pub fn weighted_pairing(wt: &[f64], f: &RadialField) -> f64 {
    let g = f.grid();
    let mut s = 0.0;
    for (i, w) in wt.iter().enumerate() {
        let r = g.node(i);
        s += w * f.value(i).norm_sqr() * r * r;
    }
    g.reduced_weight() * s
}

/// Matrix of -Lap + V in the reduced variables (symmetric tridiagonal).
pub fn schrodinger_matrix(grid: RadialGrid, v: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let h = grid.spacing();
    let diag = v.iter().map(|x| 2.0 / (h * h) + x).collect();
    let off = vec![-1.0 / (h * h); grid.interior() - 1];
    (diag, off)
}

#[derive(Debug, Clone)]
pub struct GroundState {
    pub energy: f64,
    /// Positive, L2-normalized eigenfunction.
    pub phi: RadialField,
    pub second_eigenvalue: f64,
    pub residual: f64,
}

/// Lowest eigenpair of -Lap + V on the grid, requiring exactly one bound state.
pub fn ground_eigenpair(pot: &Potential, grid: RadialGrid) -> Result<GroundState> {
    pot.validate()?;
    let sp = SampledPotential::new(pot, grid, Some(1.0));
    let (diag, off) = schrodinger_matrix(grid, &sp.v);
    let e0 = tridiag_eigenvalue(&diag, &off, 0);
    let e1 = tridiag_eigenvalue(&diag, &off, 1);
    if e0 >= -BOUND_TOL {
        return Err(Error::NoBoundState(e0));
    }
    if e1 < -BOUND_TOL {
        return Err(Error::MultipleBoundStates(e1));
    }
    let (phi_w, energy, residual) = inverse_iteration(&diag, &off, e0)?;
    let mut phi = RadialField::from_reduced_real(grid, &phi_w);
    let nrm = phi.l2_norm();
    let sign = if phi.value(0).re < 0.0 { -1.0 } else { 1.0 };
    phi = phi.scale(sign / nrm);
    Ok(GroundState {
        energy,
        phi,
        second_eigenvalue: e1,
        residual,
    })
}

/// Eigenvector of a symmetric tridiagonal for an accurately known eigenvalue.
pub(crate) fn inverse_iteration(diag: &[f64], off: &[f64], e: f64) -> Result<(Vec<f64>, f64, f64)> {
    let m = diag.len();
    let scale = diag.iter().fold(0.0f64, |a, d| a.max(d.abs())) + 2.0 * off.first().map_or(0.0, |o| o.abs());
    let shift = e - 1e-10 * scale.max(1.0) * 1e-3;
    let mut sub = vec![0.0; m];
    let mut sup = vec![0.0; m];
    sub[1..].copy_from_slice(off);
    sup[..m - 1].copy_from_slice(off);
    let t = Tridiag::new(sub.clone(), diag.iter().map(|d| d - shift).collect(), sup.clone());
    let lu = t.factor();
    let a = Tridiag::new(sub, diag.to_vec(), sup);
    let mut x = vec![1.0; m];
    let mut lam = e;
    let mut res = f64::INFINITY;
    for _ in 0..20 {
        let mut y = lu.solve(&x);
        let n = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        y.iter_mut().for_each(|v| *v /= n);
        x = y;
        let ax = a.apply(&x);
        lam = x.iter().zip(&ax).map(|(p, q)| p * q).sum();
        res = ax.iter().zip(&x).map(|(p, q)| (p - lam * q).powi(2)).sum::<f64>().sqrt();
        if res < 1e-10 * lam.abs().max(1.0) {
            return Ok((x, lam, res));
        }
    }
    if res < 1e-7 {
        return Ok((x, lam, res));
    }
    Err(Error::NotConverged {
        what: "inverse iteration",
        iterations: 20,
        residual: res,
    })
}

/// Number of eigenvalues of -Lap + V below `-BOUND_TOL` on the grid.
pub fn bound_state_count(pot: &Potential, grid: RadialGrid) -> usize {
    let sp = SampledPotential::new(pot, grid, Some(1.0));
    let (diag, off) = schrodinger_matrix(grid, &sp.v);
    sturm_count(&diag, &off, -BOUND_TOL)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub radial: bool,
    pub l2_norm: f64,
    pub l2_tail_bound: f64,
    pub l2_ok: bool,
    /// int |V| / |x| dx
    pub weighted_l1: f64,
    pub weighted_l1_ok: bool,
    /// sup of |r V_r| and |r^2 V_rr| beyond the natural extent
    pub derivative_tail_sup: f64,
    pub derivative_ok: bool,
    pub tail_exponent: f64,
    pub bound_states: usize,
    pub ground_energy: Option<f64>,
    pub one_bound_state: bool,
    /// No threshold resonance: assumed, not verified numerically.
    pub no_resonance_assumed: bool,
    pub admissible: bool,
}

pub fn admissibility_report(pot: &Potential, grid: RadialGrid) -> Result<AdmissibilityReport> {
    pot.validate()?;
    let big_r = pot.natural_extent();
    let p = pot.tail_exponent(big_r);
    let n = 200_000;
    // r = R t^2 tames integrable singularities at the origin
    let (mut l2, mut wl1) = (0.0, 0.0);
    for k in 0..n {
        let t = (k as f64 + 0.5) / n as f64;
        let r = big_r * t * t;
        let dr = 2.0 * big_r * t / n as f64;
        let v = pot.value(r);
        l2 += v * v * r * r * dr;
        wl1 += v.abs() * r * dr;
    }
    l2 *= FOUR_PI;
    wl1 *= FOUR_PI;
    let vr = pot.value(big_r).abs();
    let l2_tail = if p > 1.5 { FOUR_PI * vr * vr * big_r.powi(3) / (2.0 * p - 3.0) } else { f64::INFINITY };
    let l1_tail = if p > 2.0 { FOUR_PI * vr * big_r.powi(2) / (p - 2.0) } else { f64::INFINITY };
    let mut dsup: f64 = 0.0;
    for k in 0..200 {
        let r = big_r * (1.0 + k as f64 * 0.05);
        let (_, a, b) = pot.eval(r);
        dsup = dsup.max(a.abs()).max(b.abs());
    }
    let count = bound_state_count(pot, grid);
    let ground_energy = if count >= 1 {
        let sp = SampledPotential::new(pot, grid, Some(1.0));
        let (d, o) = schrodinger_matrix(grid, &sp.v);
        Some(tridiag_eigenvalue(&d, &o, 0))
    } else {
        None
    };
    let l2_ok = l2_tail.is_finite() && l2.is_finite();
    let weighted_l1_ok = l1_tail.is_finite() && wl1.is_finite();
    let derivative_ok = p > 0.0 && dsup.is_finite();
    let one = count == 1;
    Ok(AdmissibilityReport {
        radial: true,
        l2_norm: (l2 + if l2_tail.is_finite() { l2_tail } else { 0.0 }).sqrt(),
        l2_tail_bound: l2_tail,
        l2_ok,
        weighted_l1: wl1 + if l1_tail.is_finite() { l1_tail } else { 0.0 },
        weighted_l1_ok,
        derivative_tail_sup: dsup,
        derivative_ok,
        tail_exponent: p,
        bound_states: count,
        ground_energy,
        one_bound_state: one,
        no_resonance_assumed: true,
        admissible: l2_ok && weighted_l1_ok && derivative_ok && one,
    })
}

/// Depth window (lo, hi) of a one-parameter family in which exactly one
/// bound state exists. `make` maps depth to a potential.
pub fn depth_window(make: impl Fn(f64) -> Potential, grid: RadialGrid, upper: f64) -> Result<(f64, f64)> {
    let first = |k: usize| -> Result<f64> {
        let (mut lo, mut hi) = (0.0, upper);
        if bound_state_count(&make(hi), grid) < k {
            return Err(Error::BadInput(format!("no {k}-th bound state below depth {upper}")));
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if bound_state_count(&make(mid), grid) >= k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    };
    Ok((first(1)?, first(2)?))
}
