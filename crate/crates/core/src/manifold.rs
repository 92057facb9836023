//! Center-stable graph b_+ = G(b_-, zeta) by bisection on the exit sign,
//! its intersection with the conjugate graph, and the nine-class explorer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::{Classification, Control, Direction, Dynamics, Verdict};
use crate::grid::RadialField;
use crate::linalg::tridiag_eigenvalue;
use crate::linearization::Pencil;
use crate::potential::inverse_iteration;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ManifoldConfig {
    /// Final bracket width for G.
    pub tol: f64,
    /// Initial bracket (-delta_plus, delta_plus) for b_+.
    pub delta_plus: f64,
    pub zeta_dim: usize,
    /// Dirichlet radius of the box on which the zeta modes are computed.
    pub zeta_radius: f64,
    pub intersection_tol: f64,
    pub intersection_max_iter: usize,
    /// Offset of the explorer samples from the intersection point.
    pub explorer_offset: f64,
    /// A trial staying below delta_X for this many 1/alpha counts as confined.
    pub confine_window_alpha: f64,
}

impl Default for ManifoldConfig {
    fn default() -> Self {
        ManifoldConfig {
            tol: 1e-11,
            delta_plus: 0.005,
            zeta_dim: 4,
            zeta_radius: 10.0,
            intersection_tol: 1e-9,
            intersection_max_iter: 20,
            explorer_offset: 1e-3,
            confine_window_alpha: 50.0,
        }
    }
}

/// Projects f onto Z: removes the g_+ and g_- components and the iQ' pairing
/// (through iQ, which has no g_+- components).
pub fn project_to_z(pencil: &Pencil, f: &RadialField) -> RadialField {
    let p = pencil.project(f);
    let z = pencil.continuous_part(f, &p);
    let k = pencil.q_prime.inner(&RadialField::from_real(pencil.grid, &z.im()));
    let c = k / pencil.q_prime.inner(&pencil.q);
    z.sub(&pencil.q.mul_i().scale(c))
}

/// ||zeta||_omega for zeta in Z.
pub fn zeta_norm(pencil: &Pencil, z: &RadialField) -> f64 {
    (0.5 * pencil.quadratic_form(z).max(0.0)).sqrt()
}

/// Finite frame of Z: lowest L_- modes on a ball (skipping the near-kernel one),
/// each used as a real and an imaginary direction, projected and normalized.
#[derive(Debug, Clone)]
pub struct ZetaBasis {
    pub modes: Vec<RadialField>,
}

impl ZetaBasis {
    pub fn new(pencil: &Pencil, dim: usize, radius: f64) -> Result<Self> {
        let g = pencil.grid;
        let k = (0..g.interior()).take_while(|&i| g.node(i) < radius).count();
        if k < 8 {
            return Err(Error::InvalidGrid("zeta radius too small for the grid".into()));
        }
        let h = g.spacing();
        let v = &pencil.potential.v;
        let diag: Vec<f64> = (0..k)
            .map(|i| 2.0 / (h * h) + 1.0 + v[i] - pencil.q.value(i).re.powi(2))
            .collect();
        let off = vec![-1.0 / (h * h); k - 1];
        let n_real = dim.div_ceil(2);
        let mut modes = Vec::with_capacity(dim);
        for j in 1..=n_real {
            let e = tridiag_eigenvalue(&diag, &off, j);
            let (w, _, _) = inverse_iteration(&diag, &off, e)?;
            let mut full = vec![0.0; g.interior()];
            full[..k].copy_from_slice(&w);
            let m = RadialField::from_reduced_real(g, &full);
            for f in [m.clone(), m.mul_i()] {
                if modes.len() < dim {
                    let z = project_to_z(pencil, &f);
                    let n = zeta_norm(pencil, &z);
                    modes.push(z.scale(1.0 / n));
                }
            }
        }
        Ok(ZetaBasis { modes })
    }

    pub fn dim(&self) -> usize {
        self.modes.len()
    }

    pub fn combine(&self, coeffs: &[f64], pencil: &Pencil) -> RadialField {
        let mut z = RadialField::zeros(pencil.grid);
        for (c, m) in coeffs.iter().zip(&self.modes) {
            z = z.axpy(*c, m);
        }
        z
    }
}

/// Q + b_+ g_+ + b_- g_- + zeta (theta = 0).
pub fn chart_point(pencil: &Pencil, b_plus: f64, b_minus: f64, zeta: &RadialField) -> RadialField {
    pencil.q.axpy(b_plus, &pencil.g_plus()).axpy(b_minus, &pencil.g_minus()).add(zeta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TrialOutcome {
    /// Reached d = delta_X; sign of b_1 there and the exit time.
    Ejected { sign: i8, t_exit: f64 },
    /// Stayed below delta_X over the trapping window.
    Confined,
    Horizon,
}

/// Forward run of one bisection trial.
pub fn trial(dy: &Dynamics, u0: &RadialField, confine_window_alpha: f64) -> TrialOutcome {
    let dx = dy.thresholds.delta_x;
    let win = ((confine_window_alpha / dy.alpha()) / dy.detect.sample_interval).ceil() as usize;
    let mut out = TrialOutcome::Horizon;
    dy.run(u0, Direction::Forward, dy.detect.horizon, |s| {
        let last = s.last().unwrap();
        if last.d >= dx {
            let sign = if last.b1.is_finite() && last.b1 < 0.0 { -1 } else { 1 };
            out = TrialOutcome::Ejected { sign, t_exit: last.t };
            return Control::Stop;
        }
        if s.len() > win && s[s.len() - 1 - win..].iter().all(|x| x.d < dx) {
            out = TrialOutcome::Confined;
            return Control::Stop;
        }
        Control::Continue
    });
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldSample {
    pub lambda_minus: f64,
    pub zeta_coeffs: Vec<f64>,
    pub zeta_norm: f64,
    pub g_value: f64,
    pub bracket_width: f64,
    pub iterations: usize,
    /// A trial inside the bracket was certified confined and taken as G.
    pub confined_hit: bool,
    /// Exit times of the final bracket ends (b_- side, b_+ side).
    pub lo_exit: f64,
    pub hi_exit: f64,
}

/// Bisection for G(lambda_-, zeta): trials below G exit with b_1 < 0, above with b_1 > 0.
pub fn bisect_g(
    dy: &Dynamics,
    lambda_minus: f64,
    zeta: &RadialField,
    zeta_coeffs: &[f64],
    cfg: &ManifoldConfig,
) -> Result<ManifoldSample> {
    bisect_g_within(dy, lambda_minus, zeta, zeta_coeffs, cfg, -cfg.delta_plus, cfg.delta_plus)
}

/// Bisection for G started from the bracket (lo, hi) instead of the default one.
pub fn bisect_g_within(
    dy: &Dynamics,
    lambda_minus: f64,
    zeta: &RadialField,
    zeta_coeffs: &[f64],
    cfg: &ManifoldConfig,
    lo: f64,
    hi: f64,
) -> Result<ManifoldSample> {
    let pencil = &dy.pencil;
    let (mut lo, mut hi) = (lo, hi);
    let outcome = |b: f64| trial(dy, &chart_point(pencil, b, lambda_minus, zeta), cfg.confine_window_alpha);
    let (lo_exit, hi_exit) = match (outcome(lo), outcome(hi)) {
        (TrialOutcome::Ejected { sign: -1, t_exit: a }, TrialOutcome::Ejected { sign: 1, t_exit: b }) => (a, b),
        (TrialOutcome::Ejected { sign: a, .. }, TrialOutcome::Ejected { sign: b, .. }) if a == b => {
            return Err(Error::BracketFailure(a))
        }
        _ => return Err(Error::HorizonExhausted { lo, hi }),
    };
    let mut lo_exit = lo_exit;
    let mut hi_exit = hi_exit;
    let mut it = 0;
    let zn = zeta_norm(pencil, zeta);
    while hi - lo > cfg.tol {
        assert!(lo < hi);
        let mid = 0.5 * (lo + hi);
        let width = hi - lo;
        match outcome(mid) {
            TrialOutcome::Ejected { sign, t_exit } => {
                if sign < 0 {
                    lo = mid;
                    lo_exit = t_exit;
                } else {
                    hi = mid;
                    hi_exit = t_exit;
                }
            }
            TrialOutcome::Confined => {
                return Ok(ManifoldSample {
                    lambda_minus,
                    zeta_coeffs: zeta_coeffs.to_vec(),
                    zeta_norm: zn,
                    g_value: mid,
                    bracket_width: width,
                    iterations: it + 1,
                    confined_hit: true,
                    lo_exit,
                    hi_exit,
                })
            }
            TrialOutcome::Horizon => return Err(Error::HorizonExhausted { lo, hi }),
        }
        debug_assert!(((hi - lo) - 0.5 * width).abs() <= 1e-15 * width.max(1e-300) + f64::EPSILON * cfg.delta_plus);
        it += 1;
    }
    Ok(ManifoldSample {
        lambda_minus,
        zeta_coeffs: zeta_coeffs.to_vec(),
        zeta_norm: zn,
        g_value: 0.5 * (lo + hi),
        bracket_width: hi - lo,
        iterations: it,
        confined_hit: false,
        lo_exit,
        hi_exit,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intersection {
    pub b_plus: f64,
    pub b_minus: f64,
    pub iterations: usize,
    pub last_change: f64,
}

/// Fixed point of b_+ = G(b_-, zeta), b_- = G(b_+, conj zeta).
pub fn intersection_point(dy: &Dynamics, zeta: &RadialField, coeffs: &[f64], cfg: &ManifoldConfig) -> Result<Intersection> {
    let zc = zeta.conj();
    let (mut bp, mut bm) = (0.0, 0.0);
    let mut change = f64::INFINITY;
    for it in 1..=cfg.intersection_max_iter {
        let nbp = bisect_g(dy, bm, zeta, coeffs, cfg)?.g_value;
        let nbm = bisect_g(dy, nbp, &zc, coeffs, cfg)?.g_value;
        let c = (nbp - bp).abs().max((nbm - bm).abs());
        if it > 2 && c > change {
            return Err(Error::IterationDiverged(c));
        }
        change = c;
        bp = nbp;
        bm = nbm;
        if change <= cfg.intersection_tol {
            return Ok(Intersection {
                b_plus: bp,
                b_minus: bm,
                iterations: it,
                last_change: change,
            });
        }
    }
    Err(Error::IterationDiverged(change))
}

fn expected(s: i8) -> Verdict {
    match s {
        1 => Verdict::ScatterPhi,
        -1 => Verdict::BlowUp,
        _ => Verdict::TrappedPsi,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CatalogEntry {
    /// Signs of (b_+ - G, b_- - G) offsets.
    pub quadrant: (i8, i8),
    pub b_plus: f64,
    pub b_minus: f64,
    pub expected: (Verdict, Verdict),
    pub classification: Classification,
    /// Both verdicts definite and equal to the expected pair.
    pub witnessed: bool,
    /// A definite verdict contradicting the expected one.
    pub misclassified: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Catalog {
    pub omega: f64,
    pub intersection: Intersection,
    pub offset: f64,
    pub entries: Vec<CatalogEntry>,
}

impl Catalog {
    pub fn witnessed(&self) -> usize {
        self.entries.iter().filter(|e| e.witnessed).count()
    }

    pub fn misclassified(&self) -> usize {
        self.entries.iter().filter(|e| e.misclassified).count()
    }
}

/// Classifies data around the intersection point in all nine offset classes.
/// Offsets that are zero are realized on the graph itself by bisection.
pub fn nine_class_explorer(dy: &Dynamics, zeta: &RadialField, coeffs: &[f64], cfg: &ManifoldConfig) -> Result<Catalog> {
    let x = intersection_point(dy, zeta, coeffs, cfg)?;
    let eta = cfg.explorer_offset;
    let zc = zeta.conj();
    let mut entries = Vec::with_capacity(9);
    for sp in [1i8, 0, -1] {
        for sm in [1i8, 0, -1] {
            let (bp, bm) = match (sp, sm) {
                (0, 0) => (x.b_plus, x.b_minus),
                (0, _) => {
                    let bm = x.b_minus + sm as f64 * eta;
                    (bisect_g(dy, bm, zeta, coeffs, cfg)?.g_value, bm)
                }
                (_, 0) => {
                    let bp = x.b_plus + sp as f64 * eta;
                    (bp, bisect_g(dy, bp, &zc, coeffs, cfg)?.g_value)
                }
                _ => (x.b_plus + sp as f64 * eta, x.b_minus + sm as f64 * eta),
            };
            let u0 = chart_point(&dy.pencil, bp, bm, zeta);
            let (c, _) = dy.classify(&u0);
            let exp = (expected(sp), expected(sm));
            let got = c.pair();
            let bad = |g: Verdict, e: Verdict| g != Verdict::Undetermined && g != e;
            entries.push(CatalogEntry {
                quadrant: (sp, sm),
                b_plus: bp,
                b_minus: bm,
                expected: exp,
                witnessed: got == exp,
                misclassified: bad(got.0, exp.0) || bad(got.1, exp.1),
                classification: c,
            });
        }
    }
    Ok(Catalog {
        omega: dy.omega,
        intersection: x,
        offset: eta,
        entries,
    })
}
