use serde::{Deserialize, Serialize};

use super::stepper::{StepConfig, Stepper};
use super::virial::{momentum, VirialWeight};
use crate::error::{Error, Result};
use crate::functionals::evaluate;
use crate::grid::RadialField;
use crate::linearization::Pencil;
use crate::modulation::{blend, chi, chi_mass, decompose_unchecked, dist0, ThresholdConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// Maximal rescaled time per direction.
    pub horizon: f64,
    pub sample_interval: f64,
    /// Blow-up: ||grad u|| beyond this multiple of max(||grad u0||, ||grad Q_omega||) with K2 < 0.
    pub blowup_gradient_factor: f64,
    /// Scattering: ||u||_4 below this multiple of sqrt(M(u)) over the window.
    pub scatter_l4_factor: f64,
    pub scatter_window: f64,
    /// Radius of the core region whose H1 mass must decay when scattering.
    pub core_radius: f64,
    /// Trapping: d stays below this over a window of `trap_window_alpha / alpha`.
    pub trap_delta: f64,
    pub trap_window_alpha: f64,
    /// Cut-off radius of the virial monitor recorded along trajectories.
    pub virial_radius: f64,
    /// Keep a field snapshot every this many samples (0 = none).
    pub snapshot_every: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            horizon: 30.0,
            sample_interval: 0.02,
            blowup_gradient_factor: 4.0,
            scatter_l4_factor: 0.25,
            scatter_window: 1.0,
            core_radius: 5.0,
            trap_delta: 0.15,
            trap_window_alpha: 20.0,
            virial_radius: 10.0,
            snapshot_every: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    ScatterPhi,
    BlowUp,
    TrappedPsi,
    Undetermined,
}

impl Verdict {
    pub fn symbol(&self) -> &'static str {
        match self {
            Verdict::ScatterPhi => "S",
            Verdict::BlowUp => "B",
            Verdict::TrappedPsi => "T",
            Verdict::Undetermined => "?",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub detector: String,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionalVerdict {
    pub verdict: Verdict,
    pub evidence: Option<Evidence>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub forward: DirectionalVerdict,
    pub backward: DirectionalVerdict,
}

impl Classification {
    pub fn pair(&self) -> (Verdict, Verdict) {
        (self.forward.verdict, self.backward.verdict)
    }
}

/// One diagnostic sample along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub mass: f64,
    pub action: f64,
    pub l4: f64,
    pub grad: f64,
    pub k2: f64,
    pub d0: f64,
    /// ||v||_omega when the chart applies, else NaN
    pub energy_norm: f64,
    /// online distance: blend of d0 and ||v||_omega
    pub d: f64,
    pub b_plus: f64,
    pub b_minus: f64,
    pub b1: f64,
    pub zeta_norm: f64,
    pub core_h1: f64,
    pub virial: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub direction: Direction,
    pub samples: Vec<Sample>,
    pub snapshots: Vec<(f64, RadialField)>,
    pub verdict: DirectionalVerdict,
    pub steps: usize,
    pub rejections: usize,
}

impl TrajectoryRecord {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    /// d along the record with d1 realised as the chi-average of ||v||_omega^2
    /// over |t' - t| <= 2/alpha (NaN where the window leaves the record).
    pub fn smoothed_distance(&self, alpha: f64, delta_e: f64) -> Vec<f64> {
        let s = &self.samples;
        let n = s.len();
        let mut out = vec![f64::NAN; n];
        if n < 3 {
            return out;
        }
        let dt = s[1].t - s[0].t;
        let half = (2.0 / alpha / dt).ceil() as usize;
        for k in 0..n {
            if s[k].d0 >= 2.0 * delta_e {
                out[k] = s[k].d0;
                continue;
            }
            if k < half || k + half >= n {
                continue;
            }
            let mut acc = 0.0;
            let mut ok = true;
            for j in k - half..=k + half {
                let e = s[j].energy_norm;
                if !e.is_finite() {
                    ok = false;
                    break;
                }
                let w = if j == k - half || j == k + half { 0.5 } else { 1.0 };
                acc += w * chi(alpha * (s[j].t - s[k].t)) * e * e;
            }
            if ok {
                let d1 = (alpha * acc * dt / chi_mass()).sqrt();
                out[k] = blend(s[k].d0, d1, delta_e);
            }
        }
        out
    }
}

/// Everything a trajectory needs: the linearization at omega plus configuration.
#[derive(Debug, Clone)]
pub struct Dynamics {
    pub omega: f64,
    pub pencil: Pencil,
    pub step: StepConfig,
    pub detect: DetectorConfig,
    pub thresholds: ThresholdConfig,
    q_grad: f64,
    q_action: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

impl Dynamics {
    pub fn new(omega: f64, pencil: Pencil, step: StepConfig, detect: DetectorConfig, thresholds: ThresholdConfig) -> Self {
        let q_grad = pencil.q.grad_norm_sq().sqrt();
        let q_action = evaluate(&pencil.q, &pencil.potential).action;
        Dynamics {
            omega,
            pencil,
            step,
            detect,
            thresholds,
            q_grad,
            q_action,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.pencil.alpha
    }

    /// A^omega(u) - A^omega(Q_omega)
    pub fn action_excess(&self, u: &RadialField) -> f64 {
        evaluate(u, &self.pencil.potential).action - self.q_action
    }

    pub fn sample(&self, t: f64, u: &RadialField) -> Sample {
        let f = evaluate(u, &self.pencil.potential);
        let d0 = dist0(u, &self.pencil.q);
        let (en, bp, bm, b1, zn) = if d0 < self.thresholds.delta_d {
            let dec = decompose_unchecked(u, &self.pencil);
            let qf = self.pencil.quadratic_form(&dec.zeta).max(0.0);
            (dec.energy_norm, dec.b_plus(), dec.b_minus(), dec.b1(), (0.5 * qf).sqrt())
        } else {
            (f64::NAN, f64::NAN, f64::NAN, f64::NAN, f64::NAN)
        };
        let d = if en.is_finite() { blend(d0, en, self.thresholds.delta_e) } else { d0 };
        let g = u.grid();
        let rc = self.detect.core_radius;
        let core = RadialField::from_fn(g, |r| if r <= rc { num_complex::Complex64::new(1.0, 0.0) } else { Default::default() });
        let cu = u.zip_map(&core, |a, b| a * b);
        Sample {
            t,
            mass: f.mass,
            action: f.action,
            l4: u.l4_norm(),
            grad: u.grad_norm_sq().sqrt(),
            k2: f.k2,
            d0,
            energy_norm: en,
            d,
            b_plus: bp,
            b_minus: bm,
            b1,
            zeta_norm: zn,
            core_h1: cu.l2_norm_sq().sqrt() + core_grad(u, rc),
            virial: momentum(u, VirialWeight::Scatter { m: self.detect.virial_radius }),
        }
    }

    /// Integrates in the given direction, sampling every `sample_interval`, until
    /// `control` says stop or the horizon is reached. Step collapse ends the run
    /// with `collapsed = true`.
    pub fn run(
        &self,
        u0: &RadialField,
        direction: Direction,
        horizon: f64,
        mut control: impl FnMut(&[Sample]) -> Control,
    ) -> (TrajectoryRecord, bool, RadialField) {
        let g = u0.grid();
        let start = match direction {
            Direction::Forward => u0.clone(),
            Direction::Backward => u0.conj(),
        };
        let mut st = Stepper::new(g, &self.pencil.potential, self.step);
        let mut w = start.reduced();
        let mut samples = vec![self.sample(0.0, &start)];
        let mut snapshots = Vec::new();
        let mut collapsed = false;
        let mut t = 0.0;
        let dt_s = self.detect.sample_interval;
        let mut k = 0usize;
        let mut current = start;
        if control(&samples) == Control::Continue {
            while t < horizon - 1e-12 {
                if st.advance(&mut w, dt_s).is_err() {
                    collapsed = true;
                    break;
                }
                t += dt_s;
                k += 1;
                current = RadialField::from_reduced(g, &w);
                samples.push(self.sample(t, &current));
                if self.detect.snapshot_every > 0 && k % self.detect.snapshot_every == 0 {
                    snapshots.push((t, current.clone()));
                }
                if control(&samples) == Control::Stop {
                    break;
                }
            }
        }
        let out = match direction {
            Direction::Forward => current,
            Direction::Backward => current.conj(),
        };
        let rec = TrajectoryRecord {
            direction,
            samples,
            snapshots,
            verdict: DirectionalVerdict {
                verdict: Verdict::Undetermined,
                evidence: None,
            },
            steps: st.steps_taken,
            rejections: st.rejections,
        };
        (rec, collapsed, out)
    }

    /// Verdict detectors applied to the samples so far.
    pub fn detect_verdict(&self, s: &[Sample]) -> Option<DirectionalVerdict> {
        let last = s.last()?;
        let ev = |name: &str| {
            Some(Evidence {
                detector: name.to_string(),
                time: last.t,
            })
        };
        if last.grad > self.detect.blowup_gradient_factor * s[0].grad.max(self.q_grad) && last.k2 < 0.0 {
            return Some(DirectionalVerdict {
                verdict: Verdict::BlowUp,
                evidence: ev("gradient growth with negative K2"),
            });
        }
        let dt = self.detect.sample_interval;
        let wt = ((self.detect.trap_window_alpha / self.alpha()) / dt).ceil() as usize;
        if s.len() > wt && s[s.len() - 1 - wt..].iter().all(|x| x.d < self.detect.trap_delta) {
            return Some(DirectionalVerdict {
                verdict: Verdict::TrappedPsi,
                evidence: ev("distance below trapping threshold over window"),
            });
        }
        let ws = (self.detect.scatter_window / dt).ceil() as usize;
        if s.len() > ws {
            let win = &s[s.len() - 1 - ws..];
            let small = win.iter().all(|x| x.l4 < self.detect.scatter_l4_factor * x.mass.sqrt());
            let l4_falls = win.last().unwrap().l4 <= win[0].l4;
            let core_falls = win.last().unwrap().core_h1 < win[0].core_h1;
            let far = win.iter().all(|x| x.d > self.detect.trap_delta);
            if small && l4_falls && core_falls && far {
                return Some(DirectionalVerdict {
                    verdict: Verdict::ScatterPhi,
                    evidence: ev("L4 small and decaying, core H1 decaying"),
                });
            }
        }
        None
    }

    pub fn classify_direction(&self, u0: &RadialField, direction: Direction) -> TrajectoryRecord {
        let mut verdict = None;
        let (mut rec, collapsed, _) = self.run(u0, direction, self.detect.horizon, |s| {
            if let Some(v) = self.detect_verdict(s) {
                verdict = Some(v);
                Control::Stop
            } else {
                Control::Continue
            }
        });
        rec.verdict = match verdict {
            Some(v) => v,
            None if collapsed => DirectionalVerdict {
                verdict: Verdict::BlowUp,
                evidence: Some(Evidence {
                    detector: "time step collapse".into(),
                    time: rec.samples.last().map_or(0.0, |s| s.t),
                }),
            },
            None => DirectionalVerdict {
                verdict: Verdict::Undetermined,
                evidence: None,
            },
        };
        rec
    }

    pub fn classify(&self, u0: &RadialField) -> (Classification, [TrajectoryRecord; 2]) {
        let f = self.classify_direction(u0, Direction::Forward);
        let b = self.classify_direction(u0, Direction::Backward);
        (
            Classification {
                forward: f.verdict.clone(),
                backward: b.verdict.clone(),
            },
            [f, b],
        )
    }

    /// Evolves until the distance reaches delta_X and fits the exponential rate
    /// of ||v(t)||_omega over the part of the run below `fit_ceiling * delta_X`.
    pub fn ejection_probe(&self, u0: &RadialField, direction: Direction) -> Result<EjectionReport> {
        let dx = self.thresholds.delta_x;
        let (rec, _, _) = self.run(u0, direction, self.detect.horizon, |s| {
            if s.last().unwrap().d >= dx {
                Control::Stop
            } else {
                Control::Continue
            }
        });
        let last = *rec.samples.last().unwrap();
        if last.d < dx {
            return Err(Error::NoEjection(last.t));
        }
        let ceiling = 0.1 * dx;
        let floor = 3.0 * rec.samples[0].energy_norm.max(1e-300);
        let pts: Vec<(f64, f64)> = rec
            .samples
            .iter()
            .filter(|s| s.energy_norm.is_finite() && s.energy_norm <= ceiling && s.energy_norm >= floor)
            .map(|s| (s.t, s.energy_norm.ln()))
            .collect();
        let (rate, r2) = linear_fit(&pts).ok_or(Error::NoEjection(last.t))?;
        let sigma = if last.b1 >= 0.0 { 1 } else { -1 };
        Ok(EjectionReport {
            growth_rate: rate,
            fit_r2: r2,
            fit_points: pts.len(),
            sigma,
            t_exit: last.t,
            k2_exit: last.k2,
            record: rec,
        })
    }

    /// Counts maximal intervals with d < delta along the smoothed distance,
    /// falling back to the instantaneous one where the window does not fit.
    pub fn one_pass_probe(&self, u0: &RadialField, delta: f64, horizon: f64) -> OnePassReport {
        let (rec, collapsed, _) = self.run(u0, Direction::Forward, horizon, |s| {
            let l = s.last().unwrap();
            if l.grad > self.detect.blowup_gradient_factor * s[0].grad.max(self.q_grad) && l.k2 < 0.0 {
                Control::Stop
            } else {
                Control::Continue
            }
        });
        let d = rec.smoothed_distance(self.alpha(), self.thresholds.delta_e);
        let mut intervals = 0;
        let mut inside = false;
        let mut first_exit: Option<f64> = None;
        let mut reentry: Option<f64> = None;
        for (s, dv) in rec.samples.iter().zip(&d) {
            // the smoothing window is truncated near both ends of the record
            let dv = if dv.is_finite() { *dv } else { s.d };
            if !dv.is_finite() {
                continue;
            }
            let now = dv < delta;
            if now && !inside {
                intervals += 1;
                if first_exit.is_some() && reentry.is_none() {
                    reentry = Some(s.t);
                }
            }
            if !now && inside && first_exit.is_none() {
                first_exit = Some(s.t);
            }
            inside = now;
        }
        OnePassReport {
            intervals,
            first_exit,
            reentry,
            collapsed,
            final_time: rec.samples.last().map_or(0.0, |s| s.t),
            action_excess: self.action_excess(u0),
        }
    }
}

fn core_grad(u: &RadialField, rc: f64) -> f64 {
    let g = u.grid();
    let w = u.reduced();
    let h = g.spacing();
    let mut s = 0.0;
    let mut prev = num_complex::Complex64::default();
    for (i, wi) in w.iter().enumerate() {
        if g.node(i) > rc {
            break;
        }
        s += (wi - prev).norm_sqr();
        prev = *wi;
    }
    (crate::grid::FOUR_PI * s / h).sqrt()
}

/// Least squares slope of y on x, with the coefficient of determination.
pub fn linear_fit(pts: &[(f64, f64)]) -> Option<(f64, f64)> {
    let n = pts.len() as f64;
    if pts.len() < 3 {
        return None;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some((slope, r2))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EjectionReport {
    pub growth_rate: f64,
    pub fit_r2: f64,
    pub fit_points: usize,
    pub sigma: i8,
    pub t_exit: f64,
    pub k2_exit: f64,
    pub record: TrajectoryRecord,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OnePassReport {
    pub intervals: usize,
    pub first_exit: Option<f64>,
    pub reentry: Option<f64>,
    pub collapsed: bool,
    pub final_time: f64,
    pub action_excess: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(t: f64, d0: f64, e: f64) -> Sample {
        Sample {
            t,
            mass: 1.0,
            action: 0.0,
            l4: 0.0,
            grad: 0.0,
            k2: 0.0,
            d0,
            energy_norm: e,
            d: d0,
            b_plus: 0.0,
            b_minus: 0.0,
            b1: 0.0,
            zeta_norm: 0.0,
            core_h1: 0.0,
            virial: 0.0,
        }
    }

    fn record(d0: f64, e: f64) -> TrajectoryRecord {
        TrajectoryRecord {
            direction: Direction::Forward,
            samples: (0..200).map(|k| sample(0.02 * k as f64, d0, e)).collect(),
            snapshots: Vec::new(),
            verdict: DirectionalVerdict {
                verdict: Verdict::Undetermined,
                evidence: None,
            },
            steps: 0,
            rejections: 0,
        }
    }

    #[test]
    fn linear_fit_recovers_a_line() {
        let pts: Vec<(f64, f64)> = (0..10).map(|k| (k as f64, 3.0 * k as f64 - 1.0)).collect();
        let (s, r2) = linear_fit(&pts).unwrap();
        assert!((s - 3.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
        assert!(linear_fit(&pts[..2]).is_none());
    }

    #[test]
    fn smoothed_distance_of_a_constant_norm() {
        let alpha = 5.0;
        let d = record(0.01, 0.01).smoothed_distance(alpha, 0.1);
        let half = (2.0 / alpha / 0.02_f64).ceil() as usize;
        assert!(d[..half].iter().all(|x| x.is_nan()));
        assert!(d[200 - half..].iter().all(|x| x.is_nan()));
        for x in &d[half..200 - half] {
            assert!((x - 0.01).abs() < 1e-8, "{x}");
        }
        // far from the orbit only d0 matters
        let far = record(0.5, f64::NAN).smoothed_distance(alpha, 0.1);
        assert!(far.iter().all(|x| *x == 0.5));
    }

    #[test]
    fn verdict_symbols_are_distinct() {
        let s: Vec<_> = [Verdict::ScatterPhi, Verdict::BlowUp, Verdict::TrappedPsi, Verdict::Undetermined]
            .iter()
            .map(|v| v.symbol())
            .collect();
        for i in 0..s.len() {
            for j in 0..i {
                assert_ne!(s[i], s[j]);
            }
        }
    }
}
