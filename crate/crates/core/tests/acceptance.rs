//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero
//! if any fails. Criterion numbers given as arguments select a subset:
//! `cargo test --release --test acceptance -- 7 8`.

use std::time::Instant;

use nlsp_core::calibration::Calibration;
use nlsp_core::checks::{expansion_defect, random_perturbation};
use nlsp_core::evolve::virial::{blowup_rhs_split, momentum, rhs, scatter_rhs_split, VirialWeight};
use nlsp_core::evolve::{linear_fit, Direction, Dynamics, StepConfig, Stepper, Verdict};
use nlsp_core::linearization::Pencil;
use nlsp_core::manifold::{bisect_g, bisect_g_within, chart_point, nine_class_explorer, trial, zeta_norm, TrialOutcome, ZetaBasis};
use nlsp_core::modulation::decompose_unchecked;
use nlsp_core::potential::{Potential, SampledPotential};
use nlsp_core::solitons::{compute_q, energy_curves, excited_soliton, Soliton};
use nlsp_core::{Complex64, RadialField, RadialGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(bool, String), Box<dyn std::error::Error>>;

struct Criterion {
    id: u32,
    name: &'static str,
    run: fn() -> Outcome,
}

fn main() {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let all = [
        Criterion { id: 1, name: "Pohozaev identities", run: pohozaev },
        Criterion { id: 2, name: "excited branch asymptotics", run: branch_asymptotics },
        Criterion { id: 3, name: "E1 derivatives", run: e1_derivatives },
        Criterion { id: 4, name: "eigen-structure and coercivity", run: eigen_structure },
        Criterion { id: 5, name: "energy expansion identity", run: energy_expansion },
        Criterion { id: 6, name: "ejection rate", run: ejection_rate },
        Criterion { id: 7, name: "virial identities", run: virial_identities },
        Criterion { id: 8, name: "manifold bisection", run: manifold_bisection },
        Criterion { id: 9, name: "classification smoke matrix", run: nine_classes },
        Criterion { id: 10, name: "one-pass probe", run: one_pass },
    ];
    let mut lines = Vec::new();
    for c in all.iter().filter(|c| selected.is_empty() || selected.contains(&c.id)) {
        println!("--- [{}] {}", c.id, c.name);
        let t = Instant::now();
        let (ok, detail) = match (c.run)() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        let line = format!(
            "{} [{}] {} ({:.1} s): {}",
            if ok { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            t.elapsed().as_secs_f64(),
            detail
        );
        println!("{line}");
        lines.push((ok, line));
    }
    println!("=== acceptance summary");
    for (_, l) in &lines {
        println!("{l}");
    }
    let failed = lines.iter().filter(|(ok, _)| !ok).count();
    println!("{} passed, {} failed", lines.len() - failed, failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

/// Slope of ln|y| against ln x.
fn loglog_slope(pts: &[(f64, f64)]) -> f64 {
    let l: Vec<(f64, f64)> = pts.iter().map(|(x, y)| (x.ln(), y.abs().ln())).collect();
    linear_fit(&l).map_or(f64::NAN, |f| f.0)
}

fn pohozaev() -> Outcome {
    let q = compute_q(RadialGrid::new(131072, 30.0)?)?;
    let f = q.functionals;
    let devs = [
        ("E0/M-1", f.free_energy / f.mass - 1.0),
        ("H0/3M-1", f.kinetic / (3.0 * f.mass) - 1.0),
        ("G/2M-1", f.quartic / (2.0 * f.mass) - 1.0),
        ("K2/M", f.k2 / f.mass),
    ];
    let ok = devs.iter().all(|(_, d)| d.abs() <= 1e-6);
    let detail = devs.iter().map(|(n, d)| format!("{n} {d:.2e}")).collect::<Vec<_>>().join(", ");
    Ok((ok, detail))
}

const OMEGAS: [f64; 5] = [1e2, 1e3, 1e4, 1e5, 1e6];

fn branch_grid() -> Result<RadialGrid, nlsp_core::Error> {
    RadialGrid::new(8192, 30.0)
}

/// (omega, ||Q_omega - Q||_H1, alpha_omega - alpha) along the branch.
fn branch_rates(pot: &Potential, q: &Soliton) -> Result<Vec<(f64, f64, f64)>, nlsp_core::Error> {
    let p0 = Pencil::build(&Potential::Zero, q, None)?;
    OMEGAS
        .iter()
        .map(|&om| {
            let s = excited_soliton(pot, q, om)?;
            let p = Pencil::build(pot, &s, Some((p0.alpha, &p0.g1, &p0.g2)))?;
            Ok((om, s.q.sub(&q.q).h1_norm(), p.alpha - p0.alpha))
        })
        .collect()
}

fn branch_asymptotics() -> Outcome {
    let q = compute_q(branch_grid()?)?;
    let (mq, e0) = (q.functionals.mass, q.functionals.free_energy);
    let report = |pot: &Potential, label: &str| -> Result<(f64, f64, f64), nlsp_core::Error> {
        let rates = branch_rates(pot, &q)?;
        let curves = energy_curves(pot, &q, &OMEGAS, 0.02)?;
        println!("{label}: omega, |Q_w - Q|_H1, alpha_w - alpha, mu, mu E1/(M E0) - 1");
        for ((om, dq, da), c) in rates.iter().zip(&curves) {
            println!("  {om:8.0e} {dq:.4e} {da:+.4e} {:.5e} {:+.4e}", c.mu, c.mu * c.e1 / (mq * e0) - 1.0);
        }
        let s_dq = loglog_slope(&rates.iter().map(|r| (r.0, r.1)).collect::<Vec<_>>());
        let s_da = loglog_slope(&rates.iter().map(|r| (r.0, r.2)).collect::<Vec<_>>());
        let s_e = loglog_slope(&curves.iter().map(|c| (c.mu, c.mu * c.e1 / (mq * e0) - 1.0)).collect::<Vec<_>>());
        println!("  slopes: Q {s_dq:.4}, alpha {s_da:.4}, energy {s_e:.4}");
        Ok((s_dq, s_da, s_e))
    };
    let (g_dq, g_da, g_e) = report(&Potential::default(), "gaussian well (information only)")?;
    let (s_dq, s_da, s_e) = report(&Potential::default_singular_core(), "singular core")?;
    let ok = (s_dq + 0.25).abs() <= 0.1 && (s_da + 0.25).abs() <= 0.1 && (s_e - 0.5).abs() <= 0.15;
    Ok((
        ok,
        format!(
            "singular core slopes Q {s_dq:.3}, alpha {s_da:.3}, mu E1 {s_e:.3}; gaussian {g_dq:.3}, {g_da:.3}, {g_e:.3}"
        ),
    ))
}

fn e1_derivatives() -> Outcome {
    let q = compute_q(branch_grid()?)?;
    let mq = q.functionals.mass;
    let curves = energy_curves(&Potential::default_singular_core(), &q, &OMEGAS, 0.02)?;
    let mut worst_d1: f64 = 0.0;
    let mut d2 = Vec::new();
    println!("omega, mu, |E1' + omega|/omega, mu^3 E1''/(2 M^2) - 1");
    for c in &curves {
        let r1 = ((c.de1 + c.omega) / c.omega).abs();
        let r2 = c.mu.powi(3) * c.d2e1 / (2.0 * mq * mq) - 1.0;
        println!("  {:8.0e} {:.5e} {r1:.3e} {r2:+.4e}", c.omega, c.mu);
        worst_d1 = worst_d1.max(r1);
        d2.push(r2.abs());
    }
    let decreasing = d2.windows(2).all(|w| w[1] < w[0]);
    let shrink = d2[d2.len() - 1] / d2[0];
    let ok = worst_d1 <= 1e-3 && decreasing && shrink <= 0.25;
    Ok((
        ok,
        format!("max |E1'+w|/w {worst_d1:.2e}; second derivative deviation {:.2e} -> {:.2e}, monotone {decreasing}", d2[0], d2[d2.len() - 1]),
    ))
}

/// Smallest C >= 1 with A + C B >= N / C.
fn coercivity_constant(a: f64, b: f64, n: f64) -> f64 {
    let c = if b > 0.0 {
        (-a + (a * a + 4.0 * b * n).sqrt()) / (2.0 * b)
    } else if a > 0.0 {
        n / a
    } else {
        f64::INFINITY
    };
    c.max(1.0)
}

fn eigen_structure() -> Outcome {
    let cal = Calibration::from_env()?;
    let g = cal.grid()?;
    let q = compute_q(g)?;
    let p0 = Pencil::build(&Potential::Zero, &q, None)?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    let mut per_omega = Vec::new();
    let omegas = [1e2, 1e3, 1e4];
    for (k, &om) in omegas.iter().enumerate() {
        let s = excited_soliton(&cal.potential, &q, om)?;
        let p = Pencil::build(&cal.potential, &s, Some((p0.alpha, &p0.g1, &p0.g2)))?;
        let pair = (p.alpha * p.g_plus().mul_i().inner(&p.g_minus()) - 2.0).abs();
        let lm = RadialField::from_reduced_real(g, &p.apply_lminus(&p.q.reduced_re())).l2_norm() / p.q.l2_norm();
        let lp = RadialField::from_reduced_real(g, &p.apply_lplus(&p.q_prime.reduced_re())).add(&p.q).l2_norm()
            / p.q.l2_norm();
        worst = worst.max(pair).max(lm).max(lp).max(p.eig_residual);
        let basis = ZetaBasis::new(&p, 4, 10.0)?;
        let count = if k == 0 { 334 } else { 333 };
        let mut c_max: f64 = 1.0;
        for _ in 0..count {
            let v = random_perturbation(&mut rng, &p, &basis, 1.0);
            let a = p.quadratic_form(&v);
            let b = RadialField::from_real(g, &v.re()).inner(&p.g2).powi(2)
                + RadialField::from_real(g, &v.im()).inner(&p.q_prime).powi(2);
            c_max = c_max.max(coercivity_constant(a, b, v.h1_norm_sq()));
        }
        println!(
            "  omega {om:.0e}: alpha {:.6}, |alpha<ig+|g->-2| {pair:.2e}, |L-Q| {lm:.2e}, |L+Q'+Q| {lp:.2e}, fitted C {c_max:.4}",
            p.alpha
        );
        per_omega.push(c_max);
    }
    let c = per_omega.iter().cloned().fold(1.0, f64::max);
    let c_min = per_omega.iter().cloned().fold(f64::INFINITY, f64::min);
    let uniform = c.is_finite() && c / c_min <= 2.0;
    let ok = worst <= 1e-8 && uniform;
    Ok((ok, format!("worst identity residual {worst:.2e}; uniform C {c:.4} over 1000 fields (spread {:.3})", c / c_min)))
}

fn energy_expansion() -> Outcome {
    let cal = Calibration::from_env()?;
    let dy = cal.dynamics()?;
    let p = &dy.pencil;
    let basis = ZetaBasis::new(p, 4, 10.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let size = 10f64.powf(rng.gen_range(-2.0..0.0));
        let v = random_perturbation(&mut rng, p, &basis, size);
        let theta = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        worst = worst.max(expansion_defect(p, theta, &v));
    }
    Ok((worst <= 1e-8, format!("max defect / |v|^2 {worst:.2e} over 1000 samples")))
}

fn ejection_rate() -> Outcome {
    let dy = Calibration::from_env()?.dynamics()?;
    let p = &dy.pencil;
    let mut ok = true;
    let mut worst: f64 = 0.0;
    for eps in [1e-5, 1e-4, 1e-3, -1e-5, -1e-4, -1e-3] {
        let rep = dy.ejection_probe(&p.q.axpy(eps, &p.g_plus()), Direction::Forward)?;
        let rel = rep.growth_rate / p.alpha - 1.0;
        let sign = if eps > 0.0 { 1 } else { -1 };
        let consistent = rep.sigma == sign && rep.k2_exit.signum() as i8 == rep.sigma;
        println!(
            "  eps {eps:+.0e}: rate {:.5} (rel {rel:+.2e}, r2 {:.6}, {} pts), sigma {:+}, K2 at exit {:+.4}",
            rep.growth_rate, rep.fit_r2, rep.fit_points, rep.sigma, rep.k2_exit
        );
        worst = worst.max(rel.abs());
        ok &= rel.abs() <= 0.05 && consistent;
    }
    Ok((ok, format!("alpha {:.5}, worst relative rate error {worst:.2e}", p.alpha)))
}

fn virial_identities() -> Outcome {
    let pot = Potential::default();
    let m = 1.5;
    let levels = [(512usize, 4e-3), (1024, 2e-3), (2048, 1e-3), (4096, 5e-4), (8192, 2.5e-4)];
    let mut rows = Vec::new();
    println!("  n, dt, |fd - blow-up rhs|, |fd - scatter rhs|, |fd - general form| (b, s), plain f0 weight");
    for (n, dt) in levels {
        let g = RadialGrid::new(n, 20.0)?;
        let sp = SampledPotential::new(&pot, g, Some(1.0));
        let u0 = RadialField::from_fn(g, |r| Complex64::from_polar(0.6 * (-r * r / 4.0).exp(), 0.1 * r * r));
        let cfg = StepConfig { dt, sponge_fraction: 0.0, ..Default::default() };
        let mut st = Stepper::new(g, &sp, cfg);
        let mut w = u0.reduced();
        st.advance(&mut w, 0.3 - dt)?;
        let mut vals = Vec::new();
        let mut mid = None;
        for k in 0..3 {
            let u = RadialField::from_reduced(g, &w);
            vals.push((momentum(&u, VirialWeight::BlowUp { m }), momentum(&u, VirialWeight::Scatter { m })));
            if k == 1 {
                mid = Some(u);
            }
            if k < 2 {
                st.advance(&mut w, dt)?;
            }
        }
        let u = mid.unwrap();
        let fd_b = (vals[2].0 - vals[0].0) / (2.0 * dt);
        let fd_s = (vals[2].1 - vals[0].1) / (2.0 * dt);
        let eb = (fd_b - blowup_rhs_split(&u, &sp, m, false)).abs();
        let es = (fd_s - scatter_rhs_split(&u, &sp, m)).abs();
        let gb = (fd_b - rhs(&u, &sp, VirialWeight::BlowUp { m }).total).abs();
        let gs = (fd_s - rhs(&u, &sp, VirialWeight::Scatter { m }).total).abs();
        let plain = (fd_b - blowup_rhs_split(&u, &sp, m, true)).abs();
        println!("  {n:5} {dt:.1e} {eb:.3e} {es:.3e} {gb:.3e} {gs:.3e} {plain:.3e}");
        rows.push((g.spacing(), eb, es, plain));
    }
    let order = |f: fn(&(f64, f64, f64, f64)) -> f64| loglog_slope(&rows.iter().map(|r| (r.0, f(r))).collect::<Vec<_>>());
    let ob = order(|r| r.1);
    let os = order(|r| r.2);
    let steady = rows.windows(2).all(|w| w[1].1 < w[0].1 / 3.0 && w[1].2 < w[0].2 / 3.0);
    let ok = (ob - 2.0).abs() <= 0.2 && (os - 2.0).abs() <= 0.2 && steady;
    Ok((
        ok,
        format!(
            "observed order blow-up {ob:.3}, scatter {os:.3}; plain f0 weight stalls at {:.3e}",
            rows.last().unwrap().3
        ),
    ))
}

/// Unit vector in R^d with Gaussian entries.
fn random_direction(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..d)
        .map(|_| {
            let (a, b): (f64, f64) = (rng.gen_range(f64::EPSILON..1.0), rng.gen_range(0.0..1.0));
            (-2.0 * a.ln()).sqrt() * (std::f64::consts::TAU * b).cos()
        })
        .collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn manifold_bisection() -> Outcome {
    let cal = Calibration::from_env()?;
    let dy = cal.dynamics()?;
    let p = &dy.pencil;
    let cfg = cal.manifold;
    let basis = ZetaBasis::new(p, cfg.zeta_dim, cfg.zeta_radius)?;
    let zero = RadialField::zeros(p.grid);
    let g00 = bisect_g(&dy, 0.0, &zero, &[], &cfg)?;
    println!("  G(0,0) = {:.3e} (bracket {:.1e})", g00.g_value, g00.bracket_width);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let radii = [1e-3, 2e-3, 4e-3, 8e-3, 1.6e-2];
    let mut opposite = 0;
    let mut total = 0;
    let mut bound: f64 = 0.0;
    // per-direction centering for the pooled log-log slope
    let mut centred = Vec::new();
    for dir in 0..10 {
        let e = random_direction(&mut rng, 1 + basis.dim());
        let mut pts = Vec::new();
        let mut prev: Option<f64> = None;
        for &s in &radii {
            let lm = s * e[0];
            let coeffs: Vec<f64> = e[1..].iter().map(|c| s * c).collect();
            let zeta = basis.combine(&coeffs, p);
            let size = (lm * lm + zeta_norm(p, &zeta).powi(2)).sqrt();
            // start from the quadratic prediction, widening to the default bracket if it misses
            let (centre, half) = match prev {
                Some(g) => (4.0 * g, (2.0 * g.abs()).max(1e-8)),
                None => (0.0, size * size),
            };
            let smp = match bisect_g_within(&dy, lm, &zeta, &coeffs, &cfg, centre - half, centre + half) {
                Ok(smp) => smp,
                Err(_) => bisect_g(&dy, lm, &zeta, &coeffs, &cfg)?,
            };
            prev = Some(smp.g_value);
            let off = 10.0 * cfg.tol;
            let above = trial(&dy, &chart_point(p, smp.g_value + off, lm, &zeta), cfg.confine_window_alpha);
            let below = trial(&dy, &chart_point(p, smp.g_value - off, lm, &zeta), cfg.confine_window_alpha);
            let opp = matches!(above, TrialOutcome::Ejected { sign: 1, .. }) && matches!(below, TrialOutcome::Ejected { sign: -1, .. });
            total += 1;
            opposite += opp as usize;
            bound = bound.max(smp.g_value.abs() / (size * size));
            println!(
                "  dir {dir} |(l-, zeta)| {size:.3e}: G {:+.4e}, G/size^2 {:+.4}, {} iterations, opposite ejections {opp}",
                smp.g_value,
                smp.g_value / (size * size),
                smp.iterations
            );
            pts.push((size.ln(), smp.g_value.abs().ln()));
        }
        let (mx, my) = mean(&pts);
        centred.extend(pts.iter().map(|(x, y)| (x - mx, y - my)));
    }
    let slope = linear_fit(&centred).map_or(f64::NAN, |f| f.0);
    let ok = g00.g_value.abs() <= cfg.tol && (slope - 2.0).abs() <= 0.2 && opposite == total;
    Ok((
        ok,
        format!(
            "G(0,0) {:.1e}, pooled slope {slope:.3}, |G| <= {bound:.3} |(l-, zeta)|^2, opposite ejections {opposite}/{total}",
            g00.g_value
        ),
    ))
}

fn mean(p: &[(f64, f64)]) -> (f64, f64) {
    let n = p.len() as f64;
    (p.iter().map(|x| x.0).sum::<f64>() / n, p.iter().map(|x| x.1).sum::<f64>() / n)
}

fn nine_classes() -> Outcome {
    let cal = Calibration::from_env()?;
    let dy = cal.dynamics()?;
    let p = &dy.pencil;
    let (soliton, _) = dy.classify(&p.q);
    println!("  soliton: {:?}", soliton.pair());
    let basis = ZetaBasis::new(p, cal.manifold.zeta_dim, cal.manifold.zeta_radius)?;
    let coeffs = [2e-3, 0.0, 1e-3, 0.0];
    let zeta = basis.combine(&coeffs, p);
    let cat = nine_class_explorer(&dy, &zeta, &coeffs, &cal.manifold)?;
    println!("  intersection b+ {:.3e}, b- {:.3e}", cat.intersection.b_plus, cat.intersection.b_minus);
    for e in &cat.entries {
        println!(
            "  {:?}: b+ {:+.4e} b- {:+.4e} expected {:?} got {:?}{}",
            e.quadrant,
            e.b_plus,
            e.b_minus,
            e.expected,
            e.classification.pair(),
            if e.misclassified { " MISCLASSIFIED" } else { "" }
        );
    }
    let got = |q: (i8, i8)| cat.entries.iter().find(|e| e.quadrant == q).map(|e| e.classification.pair());
    let trapped = soliton.pair() == (Verdict::TrappedPsi, Verdict::TrappedPsi);
    let pp = got((1, 1)) == Some((Verdict::ScatterPhi, Verdict::ScatterPhi));
    let mm = got((-1, -1)) == Some((Verdict::BlowUp, Verdict::BlowUp));
    let ok = trapped && pp && mm && cat.witnessed() >= 7 && cat.misclassified() == 0;
    Ok((
        ok,
        format!(
            "soliton trapped/trapped {trapped}, (+,+) {pp}, (-,-) {mm}, witnessed {}/9, misclassified {}",
            cat.witnessed(),
            cat.misclassified()
        ),
    ))
}

fn one_pass_sample(dy: &Dynamics, basis: &ZetaBasis, rng: &mut ChaCha8Rng, incoming: bool) -> RadialField {
    let p = &dy.pencil;
    let ds = dy.thresholds.delta_star;
    let cap = dy.thresholds.c_x * ds * ds;
    loop {
        let (kp, kz) = if incoming { (0.02, 0.2) } else { (1.0, 1.0) };
        let bp = rng.gen_range(-1.0..1.0) * kp;
        let bm = rng.gen_range(-1.0..1.0);
        let coeffs: Vec<f64> = (0..basis.dim()).map(|_| rng.gen_range(-0.5..0.5) * kz).collect();
        let zeta = basis.combine(&coeffs, p);
        let norm = decompose_unchecked(&chart_point(p, bp, bm, &zeta), p).energy_norm;
        let s = rng.gen_range(0.1..3.0) * ds / norm;
        let u0 = chart_point(p, s * bp, s * bm, &zeta.scale(s));
        if dy.action_excess(&u0) < cap {
            return u0;
        }
    }
}

fn one_pass() -> Outcome {
    let cal = Calibration::from_env()?;
    let dy = cal.dynamics()?;
    let basis = ZetaBasis::new(&dy.pencil, cal.manifold.zeta_dim, cal.manifold.zeta_radius)?;
    let ds = dy.thresholds.delta_star;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (mut entered, mut exited, mut violations) = (0, 0, 0);
    for k in 0..200 {
        let u0 = one_pass_sample(&dy, &basis, &mut rng, k % 2 == 1);
        let rep = dy.one_pass_probe(&u0, ds, 12.0);
        entered += (rep.intervals > 0) as usize;
        exited += rep.first_exit.is_some() as usize;
        if rep.reentry.is_some() {
            violations += 1;
            let path = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join(format!("one_pass_counterexample_{k}.json"));
            let dump = serde_json::json!({ "sample": k, "report": rep, "initial_data": u0 });
            std::fs::write(&path, serde_json::to_string(&dump)?)?;
            println!("  sample {k}: re-entry at t = {:?}, dumped to {}", rep.reentry, path.display());
        }
    }
    Ok((
        violations == 0,
        format!("200 samples: {entered} inside the tube at some time, {exited} exits, {violations} re-entries"),
    ))
}
