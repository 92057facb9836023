use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{RadialField, RadialGrid};
use crate::linalg::{Tridiag, TridiagLu};
use crate::potential::SampledPotential;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StepConfig {
    /// Base time step.
    pub dt: f64,
    /// Steps never exceed cfl / max|u|^2.
    pub cfl: f64,
    /// Below this step size the run is declared collapsed.
    pub dt_floor: f64,
    /// Relative tolerance of the implicit fixed point.
    pub fixed_point_tol: f64,
    pub fixed_point_max_iter: usize,
    /// Maximum relative mass change of one step before the sponge acts.
    pub mass_tol: f64,
    /// Absorbing layer: fraction of the grid and damping strength.
    pub sponge_fraction: f64,
    pub sponge_strength: f64,
}

impl Default for StepConfig {
    fn default() -> Self {
        StepConfig {
            dt: 2e-3,
            cfl: 0.05,
            dt_floor: 1e-9,
            fixed_point_tol: 1e-13,
            fixed_point_max_iter: 60,
            mass_tol: 1e-8,
            sponge_fraction: 0.1,
            sponge_strength: 5.0,
        }
    }
}

/// Stateful stepper with a factorisation cache keyed by the step size.
#[derive(Debug, Clone)]
pub struct Stepper {
    pub grid: RadialGrid,
    pub config: StepConfig,
    v: Vec<f64>,
    r: Vec<f64>,
    sponge: Vec<f64>,
    cached: Option<(f64, TridiagLu<Complex64>)>,
    /// (dt, state before, state after) of the last accepted step, for the predictor
    last: Option<(f64, Vec<Complex64>, Vec<Complex64>)>,
    pub steps_taken: usize,
    pub rejections: usize,
}

impl Stepper {
    pub fn new(grid: RadialGrid, pot: &SampledPotential, config: StepConfig) -> Self {
        let r = grid.interior_nodes();
        let edge = (1.0 - config.sponge_fraction) * grid.r_max();
        let width = config.sponge_fraction * grid.r_max();
        let sponge = r
            .iter()
            .map(|&x| {
                if config.sponge_fraction > 0.0 && x > edge {
                    let y = (x - edge) / width;
                    config.sponge_strength * y * y
                } else {
                    0.0
                }
            })
            .collect();
        Stepper {
            grid,
            config,
            v: pot.v.clone(),
            r,
            sponge,
            cached: None,
            last: None,
            steps_taken: 0,
            rejections: 0,
        }
    }

    /// Step size allowed for the current state.
    pub fn admissible_dt(&self, w: &[Complex64]) -> f64 {
        let amp = w
            .iter()
            .zip(&self.r)
            .fold(0.0f64, |m, (z, r)| m.max(z.norm_sqr() / (r * r)));
        self.config.dt.min(self.config.cfl / amp.max(1e-300))
    }

    fn factor(&mut self, dt: f64) -> &TridiagLu<Complex64> {
        let stale = match &self.cached {
            Some((d, _)) => *d != dt,
            None => true,
        };
        if stale {
            let h = self.grid.spacing();
            let m = self.grid.interior();
            let c = Complex64::new(-0.5 * dt / (h * h), 0.0);
            let mut sub = vec![c; m];
            sub[0] = Complex64::default();
            let mut sup = vec![c; m];
            sup[m - 1] = Complex64::default();
            // i - dt/2 (D2 - V)
            let diag = self
                .v
                .iter()
                .map(|v| Complex64::new(dt / (h * h) + 0.5 * dt * v, 1.0))
                .collect();
            self.cached = Some((dt, Tridiag::new(sub, diag, sup).factor()));
        }
        &self.cached.as_ref().unwrap().1
    }

    /// One implicit step of size dt on reduced variables, without the sponge.
    /// Returns the number of fixed-point iterations.
    pub fn try_step(&mut self, w: &mut [Complex64], dt: f64) -> Result<usize> {
        let h = self.grid.spacing();
        let m = w.len();
        // explicit part (i + dt/2 (D2 - V)) w
        let mut base = vec![Complex64::default(); m];
        for i in 0..m {
            let l = if i > 0 { w[i - 1] } else { Complex64::default() };
            let rr = if i + 1 < m { w[i + 1] } else { Complex64::default() };
            let b = (l + rr - w[i] * 2.0) / (h * h) - w[i] * self.v[i];
            base[i] = Complex64::new(0.0, 1.0) * w[i] + b * (0.5 * dt);
        }
        let amp0: Vec<f64> = w.iter().zip(&self.r).map(|(z, r)| z.norm_sqr() / (r * r)).collect();
        let tol = self.config.fixed_point_tol;
        let max_iter = self.config.fixed_point_max_iter;
        self.factor(dt);
        let lu = &self.cached.as_ref().unwrap().1;
        // continuing the previous step with the same dt: extrapolate linearly
        let mut next: Vec<Complex64> = match &self.last {
            Some((d, before, after)) if *d == dt && after.as_slice() == &w[..] => {
                after.iter().zip(before).map(|(a, b)| a * 2.0 - b).collect()
            }
            _ => w.to_vec(),
        };
        let mut rhs = vec![Complex64::default(); m];
        let scale = w.iter().fold(0.0f64, |a, z| a.max(z.norm())).max(1e-300);
        for it in 1..=max_iter {
            for i in 0..m {
                let a1 = next[i].norm_sqr() / (self.r[i] * self.r[i]);
                rhs[i] = base[i] + (next[i] + w[i]) * (0.25 * dt * (a1 + amp0[i]));
            }
            lu.solve_in_place(&mut rhs);
            let diff = rhs
                .iter()
                .zip(&next)
                .fold(0.0f64, |a, (x, y)| a.max((x - y).norm()));
            std::mem::swap(&mut next, &mut rhs);
            if !diff.is_finite() {
                return Err(Error::StepRejected("non-finite iterate".into()));
            }
            if diff <= tol * scale {
                let m0: f64 = w.iter().map(|z| z.norm_sqr()).sum();
                let m1: f64 = next.iter().map(|z| z.norm_sqr()).sum();
                if (m1 - m0).abs() > self.config.mass_tol * m0.max(1e-300) {
                    return Err(Error::StepRejected(format!("mass jump {:e}", (m1 - m0) / m0)));
                }
                let before = w.to_vec();
                w.copy_from_slice(&next);
                self.last = Some((dt, before, next));
                return Ok(it);
            }
        }
        Err(Error::StepRejected("fixed point did not converge".into()))
    }

    fn absorb(&self, w: &mut [Complex64], dt: f64) {
        for (z, s) in w.iter_mut().zip(&self.sponge) {
            if *s > 0.0 {
                *z *= (-dt * s).exp();
            }
        }
    }

    /// Advances by at most `dt_max`, halving on rejection. Returns the step used.
    pub fn step(&mut self, w: &mut [Complex64], dt_max: f64) -> Result<f64> {
        let admissible = self.admissible_dt(w);
        let mut dt = admissible.min(dt_max);
        // a short final step towards a target time is not a collapse
        let floor = self.config.dt_floor.min(dt);
        loop {
            if admissible < self.config.dt_floor || dt < floor {
                return Err(Error::StepRejected(format!("step size collapsed below {:e}", self.config.dt_floor)));
            }
            match self.try_step(w, dt) {
                Ok(_) => {
                    self.absorb(w, dt);
                    if let Some(l) = self.last.as_mut() {
                        l.2.copy_from_slice(w);
                    }
                    self.steps_taken += 1;
                    return Ok(dt);
                }
                Err(Error::StepRejected(_)) => {
                    self.rejections += 1;
                    dt *= 0.5;
                }
                Err(e) => return Err(e),
            }
        }
    }

    /// Advances exactly to `t_end - t` (no-op if not positive).
    pub fn advance(&mut self, w: &mut [Complex64], duration: f64) -> Result<()> {
        let mut t = 0.0;
        while t < duration * (1.0 - 1e-14) {
            let d = self.step(w, duration - t)?;
            t += d;
        }
        Ok(())
    }
}

/// Evolves `u0` for `duration` (negative means backward in time, by conjugation).
pub fn evolve(u0: &RadialField, pot: &SampledPotential, config: StepConfig, duration: f64) -> Result<RadialField> {
    let grid = u0.grid();
    let mut st = Stepper::new(grid, pot, config);
    let back = duration < 0.0;
    let mut w = if back { u0.conj().reduced() } else { u0.reduced() };
    st.advance(&mut w, duration.abs())?;
    let out = RadialField::from_reduced(grid, &w);
    Ok(if back { out.conj() } else { out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::evaluate;
    use crate::potential::Potential;

    #[test]
    fn conserves_mass_and_energy_without_sponge() {
        let g = RadialGrid::new(512, 20.0).unwrap();
        let sp = SampledPotential::new(&Potential::default(), g, Some(4.0));
        let u = RadialField::from_fn(g, |r| Complex64::new(1.5 * (-r * r / 2.0).exp(), 0.3 * (-r * r).exp()));
        let cfg = StepConfig {
            sponge_fraction: 0.0,
            ..StepConfig::default()
        };
        let out = evolve(&u, &sp, cfg, 0.5).unwrap();
        let (a, b) = (evaluate(&u, &sp), evaluate(&out, &sp));
        assert!((a.mass - b.mass).abs() < 1e-11 * a.mass);
        assert!((a.energy - b.energy).abs() < 1e-9 * a.energy.abs().max(1.0));
    }

    #[test]
    fn backward_undoes_forward() {
        let g = RadialGrid::new(256, 15.0).unwrap();
        let sp = SampledPotential::new(&Potential::Zero, g, None);
        let u = RadialField::from_real_fn(g, |r| (-r * r / 3.0).exp());
        let cfg = StepConfig {
            sponge_fraction: 0.0,
            ..StepConfig::default()
        };
        let f = evolve(&u, &sp, cfg, 0.3).unwrap();
        let b = evolve(&f, &sp, cfg, -0.3).unwrap();
        assert!(b.sub(&u).l2_norm() < 1e-9);
    }
}
