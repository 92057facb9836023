//! Persisted run constants: thresholds, detector and integrator settings, and
//! the sampler behind the eps_V / kappa_V table.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::{DetectorConfig, Dynamics, StepConfig};
use crate::functionals::evaluate;
use crate::grid::{RadialField, RadialGrid};
use crate::linearization::Pencil;
use crate::manifold::{ManifoldConfig, ZetaBasis};
use crate::modulation::{dist0, ThresholdConfig};
use crate::potential::Potential;
use crate::solitons::{compute_q, excited_soliton};

/// Environment variable naming the calibration file.
pub const CALIBRATION_ENV: &str = "NLSP_CALIBRATION";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Calibration {
    /// Frequency used for dynamics.
    pub omega: f64,
    pub n_points: usize,
    pub r_max: f64,
    pub potential: Potential,
    pub thresholds: ThresholdConfig,
    pub detector: DetectorConfig,
    pub step: StepConfig,
    pub manifold: ManifoldConfig,
}

impl Default for Calibration {
    fn default() -> Self {
        Calibration {
            omega: 100.0,
            n_points: 1024,
            r_max: 40.0,
            potential: Potential::default(),
            thresholds: ThresholdConfig::default(),
            detector: DetectorConfig::default(),
            step: StepConfig::default(),
            manifold: ManifoldConfig::default(),
        }
    }
}

impl Calibration {
    pub fn grid(&self) -> Result<RadialGrid> {
        RadialGrid::new(self.n_points, self.r_max)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        self.potential.validate()?;
        self.thresholds.validate()?;
        if !(self.omega.is_finite() && self.omega > 0.0) {
            return Err(Error::BadInput(format!("omega must be positive, got {}", self.omega)));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)?;
        let c: Calibration = serde_json::from_str(&s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Path from the environment, if set.
    pub fn env_path() -> Option<PathBuf> {
        std::env::var_os(CALIBRATION_ENV).map(PathBuf::from)
    }

    /// Loads the file named by the environment, or the defaults.
    pub fn from_env() -> Result<Self> {
        match Self::env_path() {
            Some(p) => Self::load(&p),
            None => Ok(Self::default()),
        }
    }

    /// Q, Q_omega and the linearization at omega, wrapped for trajectories.
    pub fn dynamics(&self) -> Result<Dynamics> {
        let g = self.grid()?;
        let q = compute_q(g)?;
        let p0 = Pencil::build(&Potential::Zero, &q, None)?;
        let s = excited_soliton(&self.potential, &q, self.omega)?;
        let p = Pencil::build(&self.potential, &s, Some((p0.alpha, &p0.g1, &p0.g2)))?;
        Ok(Dynamics::new(self.omega, p, self.step, self.detector, self.thresholds.clone()))
    }
}

/// Mass preserving dilation l^{3/2} f(l x).
pub fn dilate(f: &RadialField, l: f64) -> Result<RadialField> {
    Ok(f.rescale(l.powi(-2))?.scale(l.sqrt()))
}

/// Scale l with K2(l^{3/2} f(l x)) = 0, by bisection on [lo, hi].
pub fn virial_scale(f: &RadialField, pencil: &Pencil, lo: f64, hi: f64) -> Option<f64> {
    let k2 = |l: f64| dilate(f, l).map(|g| evaluate(&g, &pencil.potential).k2).unwrap_or(f64::NAN);
    let (mut a, mut b) = (lo, hi);
    let (ka, kb) = (k2(a), k2(b));
    if !(ka > 0.0 && kb < 0.0) {
        return None;
    }
    for _ in 0..60 {
        let m = (a * b).sqrt();
        if k2(m) > 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    Some((a * b).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VirialSample {
    pub d0: f64,
    pub action_excess: f64,
    pub k2: f64,
    /// Sample lies on K2 = 0.
    pub on_constraint: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsVCalibration {
    /// (delta, eps_V, kappa_V)
    pub table: Vec<(f64, f64, f64)>,
    /// Number of constraint samples with d0 >= delta, per row.
    pub support: Vec<usize>,
    pub samples: Vec<VirialSample>,
}

/// Random perturbation direction of unit H1 size: unstable pair, zeta frame and a bump.
fn random_direction(rng: &mut ChaCha8Rng, pencil: &Pencil, basis: &ZetaBasis) -> RadialField {
    let g = pencil.grid;
    let mut v = pencil
        .g_plus()
        .scale(rng.gen_range(-1.0..1.0))
        .axpy(rng.gen_range(-1.0..1.0), &pencil.g_minus());
    for m in &basis.modes {
        v = v.axpy(rng.gen_range(-1.0..1.0), m);
    }
    let r0: f64 = rng.gen_range(0.0..6.0);
    let w: f64 = rng.gen_range(0.5..3.0);
    let ph: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let amp: f64 = rng.gen_range(0.0..2.0);
    let bump = RadialField::from_fn(g, |r| Complex64::from_polar(amp * (-((r - r0) / w).powi(2)).exp(), ph));
    v = v.add(&bump);
    let n = v.h1_norm();
    v.scale(1.0 / n)
}

/// eps_V(delta)^2 = min of A - A(Q*) over K2 = 0 with d0 >= delta, halved; kappa_V(delta) =
/// min |K2| over samples with d0 >= delta and excess below eps_V^2. Constraint points are
/// dilations of Q + s v; unconstrained points are nearby dilations. Q* is Q dilated onto K2 = 0.
pub fn calibrate_eps_v(pencil: &Pencil, deltas: &[f64], n_samples: usize, seed: u64) -> Result<EpsVCalibration> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let basis = ZetaBasis::new(pencil, 6, 10.0)?;
    // reference: Q_omega dilated onto the discrete K2 = 0 surface (the discrete
    // Q_omega misses it by O(h^2))
    let l_q = virial_scale(&pencil.q, pencil, 0.5, 2.0).ok_or(Error::NotAdmissible("no virial scale for Q".into()))?;
    let a_q = evaluate(&dilate(&pencil.q, l_q)?, &pencil.potential).action;
    let mut samples = Vec::with_capacity(n_samples * 5);
    for _ in 0..n_samples {
        let dir = random_direction(&mut rng, pencil, &basis);
        let s = 10f64.powf(rng.gen_range(-2.5..0.3));
        let phi = pencil.q.axpy(s, &dir);
        let Some(l) = virial_scale(&phi, pencil, 0.3, 3.0) else { continue };
        for (k, dl) in [0.0, -0.04, -0.01, 0.01, 0.04].iter().enumerate() {
            let f = dilate(&phi, l * (1.0 + dl))?;
            let fu = evaluate(&f, &pencil.potential);
            samples.push(VirialSample {
                d0: dist0(&f, &pencil.q),
                action_excess: fu.action - a_q,
                k2: if k == 0 { 0.0 } else { fu.k2 },
                on_constraint: k == 0,
            });
        }
    }
    let mut table = Vec::with_capacity(deltas.len());
    let mut support = Vec::with_capacity(deltas.len());
    for &d in deltas {
        let on: Vec<&VirialSample> = samples.iter().filter(|x| x.on_constraint && x.d0 >= d).collect();
        support.push(on.len());
        let Some(min_ex) = on.iter().map(|x| x.action_excess).min_by(f64::total_cmp) else {
            continue;
        };
        if min_ex <= 0.0 {
            table.push((d, f64::NAN, f64::NAN));
            continue;
        }
        let eps = (0.5 * min_ex).sqrt();
        let kappa = samples
            .iter()
            .filter(|x| !x.on_constraint && x.d0 >= d && x.action_excess < eps * eps)
            .map(|x| x.k2.abs())
            .min_by(f64::total_cmp)
            .unwrap_or(f64::NAN);
        table.push((d, eps, kappa));
    }
    // both functions are increasing; take the nondecreasing lower envelope
    for i in (0..table.len().saturating_sub(1)).rev() {
        let next = table[i + 1];
        let row = &mut table[i];
        if next.1.is_finite() {
            row.1 = row.1.min(next.1);
        }
        if next.2.is_finite() {
            row.2 = row.2.min(next.2);
        }
    }
    Ok(EpsVCalibration { table, support, samples })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_roundtrip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cal.json");
        let mut c = Calibration::default();
        c.thresholds.delta_star = 0.015;
        c.save(&path).unwrap();
        assert_eq!(Calibration::load(&path).unwrap(), c);
        c.omega = -1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn virial_scale_undoes_a_dilation_of_q() {
        let q = compute_q(RadialGrid::new(2048, 30.0).unwrap()).unwrap();
        let p = Pencil::build(&Potential::Zero, &q, None).unwrap();
        let f = dilate(&q.q, 1.2).unwrap();
        let l = virial_scale(&f, &p, 0.5, 2.0).unwrap();
        assert!((1.2 * l - 1.0).abs() < 1e-3, "{l}");
        assert!(virial_scale(&f, &p, 0.5, 0.6).is_none());
    }
}
