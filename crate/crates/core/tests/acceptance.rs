//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sebrake_core::fbl::ControllerConfig;
use sebrake_core::linear_control::{
    eigenvalues, integrator_chain, observer_deriv, pole_mismatch, pole_place_controller, pole_place_observer,
    real_poles, ObserverGains, Poles,
};
use sebrake_core::metrics::StepMetrics;
use sebrake_core::normal_form::{inverse_m, jacobian_m, normal_coords};
use sebrake_core::oracle::{lie_oracle, sample_envelope_states, DEFAULT_H_STEP};
use sebrake_core::plant::{BrakeState, PlantParams};
use sebrake_core::sim::{rk4_step, robustness_sweep, run_closed_loop, run_excitation, ControllerKind, Scenario};

const SEED: u64 = 20_240_917;
const STATES: usize = 200;
const MARGIN: f64 = 0.02;

type Criterion = (&'static str, Option<Duration>, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let mut o = f();
    let took = start.elapsed();
    o.detail = format!("{} [{:.3} s]", o.detail, took.as_secs_f64());
    if let Some(limit) = limit {
        if took > limit {
            o.pass = false;
            o.detail.push_str(&format!(" exceeds {:.0} s budget", limit.as_secs_f64()));
        }
    }
    o
}

fn relative_degree() -> Outcome {
    let p = PlantParams::default();
    let (mut vanish, mut b_rel) = (0.0_f64, 0.0_f64);
    for s in sample_envelope_states(&p, STATES, SEED, MARGIN) {
        let r = match lie_oracle(&s, 0.0, &p, DEFAULT_H_STEP) {
            Ok(r) => r,
            Err(e) => return outcome(false, format!("oracle failed: {e}")),
        };
        let (g0, g1) = r.scaled_vanishing_terms();
        vanish = vanish.max(g0).max(g1);
        b_rel = b_rel.max(r.rel.b);
    }
    outcome(
        vanish < 1e-8 && b_rel < 1e-5,
        format!("max scaled |Lg h|,|Lg Lf h| = {vanish:.2e} (< 1e-8); max rel err of b = {b_rel:.2e} (< 1e-5)"),
    )
}

fn closed_forms() -> Outcome {
    let p = PlantParams::default();
    let mut worst = [0.0_f64; 5];
    let mut cases = [0usize; 2];
    for s in sample_envelope_states(&p, STATES, SEED ^ 0x5a5a, MARGIN) {
        let r = match lie_oracle(&s, 0.0, &p, DEFAULT_H_STEP) {
            Ok(r) => r,
            Err(e) => return outcome(false, format!("oracle failed: {e}")),
        };
        cases[(s.x_v < 0.0) as usize] += 1;
        for (w, e) in worst.iter_mut().zip([r.rel.z2, r.rel.z3, r.rel.a, r.rel.b, r.rel.q]) {
            *w = w.max(e);
        }
    }
    let max = worst.iter().copied().fold(0.0, f64::max);
    outcome(
        max < 1e-5 && cases.iter().all(|&c| c > 0),
        format!(
            "max rel err z2 {:.1e}, z3 {:.1e}, a {:.1e}, b {:.1e}, q {:.1e} (< 1e-5); states A/B = {}/{}",
            worst[0], worst[1], worst[2], worst[3], worst[4], cases[0], cases[1]
        ),
    )
}

fn exact_linearization() -> Outcome {
    let p = PlantParams::default();
    let dt = 1e-4;
    let amp = 60.0;
    let nu = |t: f64| amp * (std::f64::consts::PI * t).sin();
    let run = match run_excitation(&p, BrakeState::new(p.p_lp, 27.0, 0.0, 0.0), 2.0, dt, f64::INFINITY, nu) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("excitation run failed: {e}")),
    };
    // Five-point third difference over a 1 ms spacing keeps roundoff well below
    // the tolerance.
    let m = 10;
    let h = m as f64 * dt;
    let mut worst = 0.0_f64;
    for k in 2 * m..run.len() - 2 * m {
        let y = |j: isize| run[(k as isize + j * m as isize) as usize].y;
        let d3 = (y(2) - 2.0 * y(1) + 2.0 * y(-1) - y(-2)) / (2.0 * h * h * h);
        worst = worst.max((d3 - run[k].nu).abs());
    }
    let rel = worst / amp;
    outcome(rel < 1e-3, format!("max |y''' - nu| / max|nu| = {rel:.2e} (< 1e-3)"))
}

fn describe_failures(ms: &[StepMetrics], ok: impl Fn(&StepMetrics) -> bool) -> String {
    let bad: Vec<String> = ms.iter().filter(|m| !ok(m)).map(|m| m.segment.to_string()).collect();
    if bad.is_empty() {
        String::new()
    } else {
        format!("; failing segments {}", bad.join(","))
    }
}

fn tracking_quality() -> Outcome {
    let sc = Scenario::default();
    let tr = run_closed_loop(&sc, &PlantParams::default(), &ControllerConfig::default(), ControllerKind::Fbl);
    let ms = match tr.and_then(|t| t.all_metrics()) {
        Ok(m) => m,
        Err(e) => return outcome(false, format!("run failed: {e}")),
    };
    let ok = |m: &StepMetrics| {
        m.settled() && m.overshoot <= 1.0 && m.zero_crossings_of_dy <= 1 && m.steady_state_error < 0.1
    };
    let max_os = ms.iter().map(|m| m.overshoot).fold(0.0, f64::max);
    let max_zc = ms.iter().map(|m| m.zero_crossings_of_dy).max().unwrap_or(0);
    let max_err = ms.iter().map(|m| m.steady_state_error).fold(0.0, f64::max);
    outcome(
        ms.iter().all(ok),
        format!(
            "{} segments; max overshoot {max_os:.3}% (<= 1), max zero crossings {max_zc} (<= 1), max terminal error {max_err:.2e} bar (< 0.1){}",
            ms.len(),
            describe_failures(&ms, ok)
        ),
    )
}

fn baseline_contrast() -> Outcome {
    let sc = Scenario::default();
    let p = PlantParams::default();
    let run = |kind, gain: f64| {
        let cfg = ControllerConfig { baseline_gain: gain, ..ControllerConfig::default() };
        run_closed_loop(&sc, &p, &cfg, kind).and_then(|t| t.all_metrics())
    };
    let fbl = match run(ControllerKind::Fbl, 0.1) {
        Ok(m) => m,
        Err(e) => return outcome(false, format!("fbl run failed: {e}")),
    };
    let Some(target) = fbl[1].rise_time else {
        return outcome(false, "fbl 27->59 rise time undefined".into());
    };
    // Rise time falls monotonically with the proportional gain; bisect in log space.
    let rise = |g: f64| run(ControllerKind::Baseline, g).ok().and_then(|m| m[1].rise_time);
    let (mut lo, mut hi) = (1e-3_f64, 10.0_f64);
    for _ in 0..40 {
        let mid = (lo * hi).sqrt();
        match rise(mid) {
            Some(r) if r < target => hi = mid,
            _ => lo = mid,
        }
    }
    let gain = (lo * hi).sqrt();
    let base = match run(ControllerKind::Baseline, gain) {
        Ok(m) => m,
        Err(e) => return outcome(false, format!("baseline run failed: {e}")),
    };
    let Some(base_rise) = base[1].rise_time else {
        return outcome(false, format!("baseline rise time undefined at gain {gain:.4}"));
    };
    let ratio = base_rise / target;
    let base_zc = base.iter().map(|m| m.zero_crossings_of_dy).max().unwrap_or(0);
    let fbl_zc = fbl.iter().map(|m| m.zero_crossings_of_dy).max().unwrap_or(0);
    outcome(
        (ratio - 1.0).abs() <= 0.2 && base_zc >= 3 && fbl_zc <= 1,
        format!(
            "baseline gain {gain:.4}: rise {base_rise:.4} s vs fbl {target:.4} s (ratio {ratio:.3}); baseline max zero crossings {base_zc} (>= 3), fbl max {fbl_zc} (<= 1)"
        ),
    )
}

fn observer_convergence() -> Outcome {
    let poles = real_poles([-40.0; 3]);
    let gains: ObserverGains = match pole_place_observer(&poles) {
        Ok(g) => g,
        Err(e) => return outcome(false, format!("observer design failed: {e}")),
    };
    // Linear chain z''' = nu with nu = 0; observer started with error (0, 10, 100).
    let a = integrator_chain();
    let deriv = |_t: f64, x: &[f64; 6]| -> sebrake_core::Result<[f64; 6]> {
        let dz = a * nalgebra::Vector3::new(x[0], x[1], x[2]);
        let dzh = observer_deriv(&[x[3], x[4], x[5]], 0.0, x[0], &gains);
        Ok([dz[0], dz[1], dz[2], dzh[0], dzh[1], dzh[2]])
    };
    let z0 = [27.0, 0.0, 0.0];
    let e0 = [0.0, 10.0, 100.0];
    let mut x = [z0[0], z0[1], z0[2], z0[0] - e0[0], z0[1] - e0[1], z0[2] - e0[2]];
    let dt = 1e-4;
    let horizon: f64 = 5.0 / 40.0;
    let steps = (horizon / dt).round() as usize;
    let norm = |x: &[f64; 6]| ((x[0] - x[3]).powi(2) + (x[1] - x[4]).powi(2) + (x[2] - x[5]).powi(2)).sqrt();
    let n0 = norm(&x);
    let mut peak: f64 = n0;
    for i in 0..steps {
        x = match rk4_step(deriv, &x, i as f64 * dt, dt) {
            Ok(v) => v,
            Err(e) => return outcome(false, format!("integration failed: {e}")),
        };
        peak = peak.max(norm(&x));
    }
    let shrink = n0 / norm(&x);
    outcome(
        shrink >= 100.0,
        format!("||e|| shrinks {shrink:.2}x by t = {horizon} s (>= 100x); transient peak {:.2}x initial", peak / n0),
    )
}

fn robustness() -> Outcome {
    let sc = Scenario::default();
    let rows = robustness_sweep(
        &sc,
        &PlantParams::default(),
        &ControllerConfig::default(),
        ControllerKind::Fbl,
        &[0.9, 0.95, 1.05, 1.1],
    );
    let mut pass = true;
    let mut parts = Vec::new();
    for row in &rows {
        match &row.outcome {
            Ok(ms) => {
                let os = ms.iter().map(|m| m.overshoot).fold(0.0, f64::max);
                let settled = ms.iter().all(StepMetrics::settled);
                pass &= settled && os <= 5.0;
                parts.push(format!("{:.2}: max os {os:.2}%{}", row.factor, if settled { "" } else { " UNSETTLED" }));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("{:.2}: {e}", row.factor));
            }
        }
    }
    outcome(pass, format!("{} (all settled, <= 5%)", parts.join("; ")))
}

fn random_poles(rng: &mut ChaCha8Rng) -> Poles {
    let re = |rng: &mut ChaCha8Rng| -rng.gen_range(0.5..100.0);
    if rng.gen_bool(0.5) {
        real_poles([re(rng), re(rng), re(rng)])
    } else {
        let (sigma, omega) = (re(rng), rng.gen_range(0.1..100.0));
        [Complex64::new(re(rng), 0.0), Complex64::new(sigma, omega), Complex64::new(sigma, -omega)]
    }
}

fn pole_placement() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst = 0.0_f64;
    for _ in 0..50 {
        let poles = random_poles(&mut rng);
        let (c, o) = match (pole_place_controller(&poles), pole_place_observer(&poles)) {
            (Ok(c), Ok(o)) => (c, o),
            _ => return outcome(false, format!("design rejected {poles:?}")),
        };
        worst = worst
            .max(pole_mismatch(&poles, &eigenvalues(&c.closed_loop())))
            .max(pole_mismatch(&poles, &eigenvalues(&o.closed_loop())));
    }
    outcome(worst < 1e-9, format!("50 triples, max eigenvalue mismatch {worst:.2e} (< 1e-9)"))
}

fn bijectivity() -> Outcome {
    let p = PlantParams::default();
    let (mut worst, mut min_det) = (0.0_f64, f64::INFINITY);
    for s in sample_envelope_states(&p, STATES, SEED ^ 0xbeef, MARGIN) {
        let result = normal_coords(&s, &p).and_then(|nc| {
            let back = inverse_m(nc.eta, nc.z(), sebrake_core::plant::regime_of(s.x_v), &p)?;
            let (_, det) = jacobian_m(&s, &p)?;
            Ok((back, det))
        });
        let (back, det) = match result {
            Ok(v) => v,
            Err(e) => return outcome(false, format!("transform failed at {s:?}: {e}")),
        };
        for (a, b) in s.to_array().iter().zip(back.to_array()) {
            worst = worst.max((a - b).abs() / a.abs().max(1e-300));
        }
        min_det = min_det.min(det.abs());
    }
    outcome(
        worst < 1e-9 && min_det > 0.0,
        format!("max rel round-trip error {worst:.2e} (< 1e-9); min |det| {min_det:.3e} (> 0)"),
    )
}

fn determinism() -> Outcome {
    let p = PlantParams::default();
    let cfg = ControllerConfig::default();
    let sc = Scenario::default();
    let run = |sc: &Scenario| run_closed_loop(sc, &p, &cfg, ControllerKind::Fbl);
    let (a, b) = match (run(&sc), run(&sc)) {
        (Ok(a), Ok(b)) => (a, b),
        _ => return outcome(false, "nominal run failed".into()),
    };
    let identical = a.rows.len() == b.rows.len()
        && a.rows
            .iter()
            .zip(&b.rows)
            .all(|(x, y)| x.p_sup.to_bits() == y.p_sup.to_bits() && x.u.to_bits() == y.u.to_bits() && x == y);
    let half = Scenario { dt: sc.dt / 2.0, ..sc.clone() };
    let fine = match run(&half) {
        Ok(t) => t,
        Err(e) => return outcome(false, format!("half-step run failed: {e}")),
    };
    let delta = (fine.last().p_sup - a.last().p_sup).abs();
    outcome(
        identical && delta < 1e-6,
        format!("reruns bit-identical: {identical}; |final p_sup(dt/2) - p_sup(dt)| = {delta:.2e} bar (< 1e-6)"),
    )
}

fn main() -> ExitCode {
    let secs = |s| Some(Duration::from_secs(s));
    let criteria: [Criterion; 10] = [
        ("relative degree certification", secs(5), relative_degree),
        ("closed forms vs numeric oracle", secs(10), closed_forms),
        ("exact linearization", secs(2), exact_linearization),
        ("tracking quality", secs(10), tracking_quality),
        ("baseline contrast", None, baseline_contrast),
        ("observer convergence", secs(1), observer_convergence),
        ("robustness sweep", None, robustness),
        ("pole placement exactness", secs(1), pole_placement),
        ("transform bijectivity", None, bijectivity),
        ("determinism and step convergence", None, determinism),
    ];
    let mut failed = 0;
    for (i, (name, limit, f)) in criteria.into_iter().enumerate() {
        let o = timed(limit, f);
        failed += !o.pass as usize;
        println!("{} {:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    println!("{} of 10 criteria passed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
