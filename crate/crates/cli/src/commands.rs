use std::fmt::Write as _;

use anyhow::{bail, Context, Result};
use nlsp_core::calibration::{calibrate_eps_v, Calibration};
use nlsp_core::checks::invariant_suite;
use nlsp_core::evolve::{Direction, Dynamics};
use nlsp_core::grid::{RadialField, RadialGrid};
use nlsp_core::linearization::Pencil;
use nlsp_core::manifold::{bisect_g, chart_point, nine_class_explorer, ManifoldSample, ZetaBasis};
use nlsp_core::potential::Potential;
use nlsp_core::solitons::{compute_q, energy_curves, excited_soliton, Soliton};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

use crate::config::{parse_list, parse_omegas, RunConfig};
use crate::output::{samples_csv, Output};
use crate::{Cli, Command, InitialData};

/// Ok(false) means an invariant or gate failed.
pub fn run(cli: &Cli, cfg: &RunConfig) -> Result<bool> {
    let mut out = Output::new(&cli.out)?;
    let (name, ok, summary) = match &cli.command {
        Command::Soliton { omega } => ("soliton", true, soliton(cfg, *omega, &mut out)?),
        Command::Spectrum { omega } => ("spectrum", true, spectrum(cfg, *omega, &mut out)?),
        Command::Evolve { data, duration } => ("evolve", true, evolve(cfg, data, *duration, &mut out)?),
        Command::Classify { data, horizon } => ("classify", true, classify(cfg, data, *horizon, &mut out)?),
        Command::Manifold {
            lambda_minus,
            zeta,
            random,
        } => ("manifold", true, manifold(cfg, lambda_minus, zeta, *random, &mut out)?),
        Command::Nineclass { zeta } => {
            let (ok, s) = nineclass(cfg, zeta, &mut out)?;
            ("nineclass", ok, s)
        }
        Command::Calibrate { samples, deltas } => ("calibrate", true, calibrate(cfg, *samples, deltas, &mut out)?),
        Command::Curves { omega, per_decade } => ("curves", true, curves(cfg, omega, *per_decade, &mut out)?),
        Command::Check => {
            let (ok, s) = check(cfg, &mut out)?;
            ("check", ok, s)
        }
    };
    out.finish(name, cfg, if ok { "ok" } else { "failed" }, summary)?;
    Ok(ok)
}

fn static_grid(cfg: &RunConfig) -> Result<RadialGrid> {
    Ok(RadialGrid::new(cfg.run.static_n_points, cfg.run.static_r_max)?)
}

fn static_pencil(cfg: &RunConfig, omega: f64) -> Result<(Soliton, Soliton, Pencil, Pencil)> {
    let g = static_grid(cfg)?;
    let q = compute_q(g)?;
    let p0 = Pencil::build(&Potential::Zero, &q, None)?;
    let s = excited_soliton(&cfg.calibration.potential, &q, omega)?;
    let p = Pencil::build(&cfg.calibration.potential, &s, Some((p0.alpha, &p0.g1, &p0.g2)))?;
    Ok((q, s, p0, p))
}

fn soliton(cfg: &RunConfig, omega: Option<f64>, out: &mut Output) -> Result<serde_json::Value> {
    let omega = omega.unwrap_or(cfg.calibration.omega);
    let g = static_grid(cfg)?;
    let q = compute_q(g)?;
    let s = excited_soliton(&cfg.calibration.potential, &q, omega)?;
    q.q.write_csv(&out.path("q.csv"))?;
    s.q.write_csv(&out.path("q_omega.csv"))?;
    s.q.write_binary(&out.path("q_omega.bin"))?;
    let dq = s.q.sub(&q.q).h1_norm();
    let summary = json!({
        "omega": omega,
        "Q": q.functionals,
        "Q_omega": s.functionals,
        "residual": s.residual,
        "iterations": s.iterations,
        "contraction_ratio": s.contraction_ratio,
        "h1_distance_to_Q": dq,
    });
    out.json("soliton.json", &summary)?;
    println!("omega {omega}: ||Q_omega - Q||_H1 = {dq:.6e}, residual {:.2e}", s.residual);
    Ok(summary)
}

fn spectrum(cfg: &RunConfig, omega: Option<f64>, out: &mut Output) -> Result<serde_json::Value> {
    let omega = omega.unwrap_or(cfg.calibration.omega);
    let (_, _, p0, p) = static_pencil(cfg, omega)?;
    p.g1.write_csv(&out.path("g1.csv"))?;
    p.g2.write_csv(&out.path("g2.csv"))?;
    let summary = json!({
        "omega": omega,
        "alpha": p.alpha,
        "alpha_free": p0.alpha,
        "eig_residual": p.eig_residual,
        "alpha_i_gplus_gminus": p.alpha * p.g_plus().mul_i().inner(&p.g_minus()),
        "q_g2": p.q.inner(&p.g2),
    });
    out.json("spectrum.json", &summary)?;
    println!("omega {omega}: alpha = {:.12}, free alpha = {:.12}", p.alpha, p0.alpha);
    Ok(summary)
}

fn initial_data(dy: &Dynamics, data: &InitialData, zeta_radius: f64) -> Result<RadialField> {
    if let Some(p) = &data.input {
        let f = RadialField::read_binary(p).with_context(|| format!("reading {}", p.display()))?;
        if f.grid() != dy.pencil.grid {
            bail!("input grid does not match the calibration grid");
        }
        return Ok(f);
    }
    let coeffs = parse_list(&data.zeta)?;
    let zeta = if coeffs.is_empty() {
        RadialField::zeros(dy.pencil.grid)
    } else {
        let b = ZetaBasis::new(&dy.pencil, coeffs.len(), zeta_radius)?;
        b.combine(&coeffs, &dy.pencil)
    };
    Ok(chart_point(&dy.pencil, data.b_plus, data.b_minus, &zeta))
}

fn evolve(cfg: &RunConfig, data: &InitialData, duration: f64, out: &mut Output) -> Result<serde_json::Value> {
    let dy = cfg.calibration.dynamics()?;
    let u0 = initial_data(&dy, data, cfg.calibration.manifold.zeta_radius)?;
    let dir = if duration < 0.0 { Direction::Backward } else { Direction::Forward };
    let (rec, collapsed, last) = dy.run(&u0, dir, duration.abs(), |_| nlsp_core::evolve::Control::Continue);
    out.text("diagnostics.csv", &samples_csv(&rec.samples))?;
    last.write_binary(&out.path("final.bin"))?;
    let end = rec.samples.last().copied();
    println!(
        "evolved to t = {:.3} ({} steps, collapsed: {collapsed})",
        end.map_or(0.0, |s| s.t),
        rec.steps
    );
    Ok(json!({ "steps": rec.steps, "rejections": rec.rejections, "collapsed": collapsed, "final": end }))
}

fn classify(cfg: &RunConfig, data: &InitialData, horizon: Option<f64>, out: &mut Output) -> Result<serde_json::Value> {
    let mut cal = cfg.calibration.clone();
    if let Some(h) = horizon {
        cal.detector.horizon = h;
    }
    let dy = cal.dynamics()?;
    let u0 = initial_data(&dy, data, cfg.calibration.manifold.zeta_radius)?;
    let (c, recs) = dy.classify(&u0);
    out.text("forward.csv", &samples_csv(&recs[0].samples))?;
    out.text("backward.csv", &samples_csv(&recs[1].samples))?;
    out.json("classification.json", &c)?;
    println!("forward {:?}, backward {:?}", c.forward.verdict, c.backward.verdict);
    Ok(serde_json::to_value(&c)?)
}

fn log_slope(pts: &[(f64, f64)]) -> Option<f64> {
    let l: Vec<(f64, f64)> = pts
        .iter()
        .filter(|p| p.0 > 0.0 && p.1 != 0.0)
        .map(|p| (p.0.ln(), p.1.abs().ln()))
        .collect();
    nlsp_core::evolve::linear_fit(&l).map(|f| f.0)
}

fn manifold(cfg: &RunConfig, lambdas: &str, zeta: &str, random: usize, out: &mut Output) -> Result<serde_json::Value> {
    let dy = cfg.calibration.dynamics()?;
    let mcfg = cfg.calibration.manifold;
    let basis = ZetaBasis::new(&dy.pencil, mcfg.zeta_dim, mcfg.zeta_radius)?;
    let coeffs = parse_list(zeta)?;
    let mut jobs: Vec<(f64, Vec<f64>)> = parse_list(lambdas)?.into_iter().map(|l| (l, coeffs.clone())).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..random {
        let l = rng.gen_range(-4e-3..4e-3);
        let c: Vec<f64> = (0..basis.dim()).map(|_| rng.gen_range(-2e-3..2e-3)).collect();
        jobs.push((l, c));
    }
    let results: Vec<std::result::Result<ManifoldSample, String>> = jobs
        .par_iter()
        .map(|(l, c)| {
            let z = if c.is_empty() {
                RadialField::zeros(dy.pencil.grid)
            } else {
                basis.combine(c, &dy.pencil)
            };
            bisect_g(&dy, *l, &z, c, &mcfg).map_err(|e| e.to_string())
        })
        .collect();
    let mut csv = String::from("lambda_minus,zeta_norm,g_value,bracket_width,iterations,confined_hit\n");
    let mut ok = Vec::new();
    for (r, (l, _)) in results.iter().zip(&jobs) {
        match r {
            Ok(s) => {
                let _ = writeln!(
                    csv,
                    "{:.10e},{:.10e},{:.12e},{:.3e},{},{}",
                    s.lambda_minus, s.zeta_norm, s.g_value, s.bracket_width, s.iterations, s.confined_hit
                );
                ok.push(s.clone());
            }
            Err(e) => eprintln!("lambda_- = {l}: {e}"),
        }
    }
    out.text("samples.csv", &csv)?;
    out.json("samples.json", &results)?;
    let pure: Vec<(f64, f64)> = ok
        .iter()
        .filter(|s| s.zeta_norm == 0.0)
        .map(|s| (s.lambda_minus.abs(), s.g_value))
        .collect();
    let slope = log_slope(&pure);
    let c_fit = ok
        .iter()
        .map(|s| s.g_value.abs() / (s.lambda_minus.powi(2) + s.zeta_norm.powi(2)))
        .filter(|x| x.is_finite())
        .fold(0.0f64, f64::max);
    println!("{} samples, quadratic slope {:?}, C = {c_fit:.4}", ok.len(), slope);
    Ok(json!({ "samples": ok.len(), "failed": results.len() - ok.len(), "slope": slope, "c_fit": c_fit }))
}

fn nineclass(cfg: &RunConfig, zeta: &str, out: &mut Output) -> Result<(bool, serde_json::Value)> {
    let dy = cfg.calibration.dynamics()?;
    let mcfg = cfg.calibration.manifold;
    let coeffs = parse_list(zeta)?;
    let basis = ZetaBasis::new(&dy.pencil, coeffs.len().max(1), mcfg.zeta_radius)?;
    let z = if coeffs.is_empty() {
        RadialField::zeros(dy.pencil.grid)
    } else {
        basis.combine(&coeffs, &dy.pencil)
    };
    let cat = nine_class_explorer(&dy, &z, &coeffs, &mcfg)?;
    for e in &cat.entries {
        let name = format!("data/quadrant_{}_{}.bin", e.quadrant.0, e.quadrant.1);
        chart_point(&dy.pencil, e.b_plus, e.b_minus, &z).write_binary(&out.path(&name))?;
        println!(
            "({:+},{:+}) -> {} {}{}",
            e.quadrant.0,
            e.quadrant.1,
            e.classification.forward.verdict.symbol(),
            e.classification.backward.verdict.symbol(),
            if e.misclassified { "  MISCLASSIFIED" } else { "" }
        );
    }
    out.json("catalog.json", &cat)?;
    let ok = cat.misclassified() == 0 && cat.witnessed() >= 7;
    println!("{} of 9 classes witnessed", cat.witnessed());
    Ok((ok, json!({ "witnessed": cat.witnessed(), "misclassified": cat.misclassified() })))
}

fn calibrate(cfg: &RunConfig, samples: usize, deltas: &str, out: &mut Output) -> Result<serde_json::Value> {
    let dy = cfg.calibration.dynamics()?;
    let deltas = parse_list(deltas)?;
    let r = calibrate_eps_v(&dy.pencil, &deltas, samples, cfg.seed)?;
    let mut cal: Calibration = cfg.calibration.clone();
    cal.thresholds.eps_v_table = r.table.iter().copied().filter(|x| x.1.is_finite() && x.2.is_finite()).collect();
    cal.save(&out.path("calibration.json"))?;
    let mut csv = String::from("d0,action_excess,k2,on_constraint\n");
    for s in &r.samples {
        let _ = writeln!(csv, "{:.10e},{:.10e},{:.10e},{}", s.d0, s.action_excess, s.k2, s.on_constraint);
    }
    out.text("eps_v_samples.csv", &csv)?;
    for (d, e, k) in &r.table {
        println!("delta {d:<8} eps_V {e:.6e} kappa_V {k:.6e}");
    }
    Ok(json!({ "table": r.table, "support": r.support }))
}

fn curves(cfg: &RunConfig, omega: &str, per_decade: usize, out: &mut Output) -> Result<serde_json::Value> {
    let omegas = parse_omegas(omega, per_decade)?;
    let q = compute_q(static_grid(cfg)?)?;
    let pts = energy_curves(&cfg.calibration.potential, &q, &omegas, 0.02)?;
    let mq = q.functionals.mass;
    let e0 = q.functionals.free_energy;
    let mut csv = String::from("omega,mu,e1,de1,d2e1,d2e1_alt,mu_e1_over_mq2_minus_1,mu_e1_over_mq_e0q_minus_1,de1_plus_omega_rel,mu3_d2e1_over_2mq2_minus_1\n");
    for p in &pts {
        let _ = writeln!(
            csv,
            "{:.6e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.6e},{:.6e},{:.6e},{:.6e}",
            p.omega,
            p.mu,
            p.e1,
            p.de1,
            p.d2e1,
            p.d2e1_alt,
            p.mu * p.e1 / (mq * mq) - 1.0,
            p.mu * p.e1 / (mq * e0) - 1.0,
            (p.de1 + p.omega) / p.omega,
            p.mu.powi(3) * p.d2e1 / (2.0 * mq * mq) - 1.0
        );
    }
    out.text("curves.csv", &csv)?;
    println!("{} points written", pts.len());
    Ok(json!({ "points": pts.len() }))
}

fn check(cfg: &RunConfig, out: &mut Output) -> Result<(bool, serde_json::Value)> {
    let res = invariant_suite(&cfg.calibration, cfg.seed)?;
    for c in &res {
        println!(
            "{} {:<36} {:.3e} (tol {:.0e})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.tolerance
        );
    }
    out.json("checks.json", &res)?;
    let ok = res.iter().all(|c| c.passed);
    Ok((ok, json!({ "passed": res.iter().filter(|c| c.passed).count(), "total": res.len() })))
}
