//! Acceptance suite. Every test prints one `PASS name: ...` or `FAIL name: ...` line to stdout
//! (written past the harness capture) and then asserts the same condition.
use hokdv_core::dynamics::{closed_loop_nonlinear, conservation_drift, simulate, FeedbackMode, Forcing, SimOptions};
use hokdv_core::estimates::{
    check_gap, hj_identity_suite, l4_ratio_trend, strichartz_plateau, strichartz_sum, EnsembleOptions,
};
use hokdv_core::feedback::{
    build_l_lambda, closed_loop_linear_simulate, decay_rate_estimate, deviation_norms, energy_balance_check, fit_decay,
    Assembly,
};
use hokdv_core::moment::{
    refine_from_report, synthesize_control, verify_reach, ExpSumForcing, MomentSystem, ReachOptions,
};
use hokdv_core::pipeline::{
    controlled_terminal, global_control_experiment, picard_local_control, GlobalOptions, PicardOptions,
};
use hokdv_core::profile::ControlProfile;
use hokdv_core::spectral::{c64, mean_value, propagate};
use hokdv_core::FourierField;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::io::Write;
use std::time::Instant;

fn report(name: &str, ok: bool, detail: String) {
    let line = format!("{} {name}: {detail}\n", if ok { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    assert!(ok, "{name}: {detail}");
}

fn cos_x(j: u32, n: usize, amp: f64) -> FourierField {
    FourierField::trig(j, n, &[(1, amp, 0.0)]).unwrap()
}

/// Random real field with mean coefficient `c0` and total L2 norm `norm`.
fn with_mean(j: u32, n: usize, active: usize, c0: f64, norm: f64, rng: &mut ChaCha8Rng) -> FourierField {
    let mut u = FourierField::random_modes(j, n, active, 0.0, (norm * norm - c0 * c0).sqrt(), rng).unwrap();
    u.set(0, c64(c0, 0.0));
    u
}

#[test]
fn gap_condition() {
    let start = Instant::now();
    let reports: Vec<_> = (1..=5).map(|j| check_gap(j, 10_000).unwrap()).collect();
    let secs = start.elapsed().as_secs_f64();
    let ok = reports.iter().all(|r| r.holds && r.counterexample.is_none()) && secs < 1.0;
    let checked: usize = reports.iter().map(|r| r.checked).sum();
    report("gap_condition", ok, format!("j=1..5, |k|<=1e4, {checked} cases, {secs:.3}s"));
}

#[test]
fn hj_identity_suite_holds() {
    let start = Instant::now();
    let reps: Vec<_> = (1..=5).map(|j| hj_identity_suite(j, 10_000, 100 + j as u64).unwrap()).collect();
    let secs = start.elapsed().as_secs_f64();
    let worst = reps.iter().flat_map(|r| r.checks.iter().map(|c| c.max_rel_err)).fold(0.0, f64::max);
    let ok = reps.iter().all(|r| r.passed()) && worst <= 1e-9 && secs < 10.0;
    report("hj_identities", ok, format!("1e4 trials per j, worst rel err {worst:.2e}, {secs:.2}s"));
}

#[test]
fn propagator_unitarity_and_group_law() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut unit, mut group) = (0.0f64, 0.0f64);
    for i in 0..1000 {
        let j = 1 + (i % 5) as u32;
        let u = FourierField::random_mean_zero(j, 128, 0.0, 1.0, &mut rng).unwrap();
        let t = rng.random_range(-10_240i32..=10_240) as f64 / 1024.0;
        let s = rng.random_range(-10_240i32..=10_240) as f64 / 1024.0;
        unit = unit.max((propagate(&u, t).l2_norm() - 1.0).abs());
        group = group.max(propagate(&u, t + s).max_abs_diff(&propagate(&propagate(&u, s), t)));
    }
    let ok = unit <= 1e-12 && group <= 1e-12;
    report("unitarity_group_law", ok, format!("1e3 fields, N=128, unitarity {unit:.2e}, group law {group:.2e}"));
}

#[test]
fn conservation_laws() {
    let mut ok = true;
    let mut detail = Vec::new();
    for j in [1u32, 2] {
        let u0 = cos_x(j, 32, 1.0);
        let run = |dt: f64| {
            let tr = simulate(&u0, 10.0, &Forcing::none(), SimOptions::new(dt).stride(100)).unwrap();
            conservation_drift(&tr)
        };
        let d = run(1e-3);
        // order check where the drift sits above the rounding floor
        let (c, f) = (run(1e-2), run(5e-3));
        let (re, rh) = (c.energy_rel / f.energy_rel, c.hamiltonian_rel / f.hamiltonian_rel);
        let pass = d.mass_abs == 0.0 && d.energy_rel <= 1e-8 && d.hamiltonian_rel <= 1e-6 && re >= 8.0 && rh >= 8.0;
        ok &= pass;
        detail.push(format!(
            "j={j}: M {:.0e} E {:.2e} H {:.2e}, halving E x{re:.1} H x{rh:.1}",
            d.mass_abs, d.energy_rel, d.hamiltonian_rel
        ));
    }
    report("conservation", ok, detail.join("; "));
}

#[test]
fn linear_exact_control() {
    let profile = ControlProfile::half_circle_bump();
    let mut ok = true;
    let mut detail = Vec::new();
    for j in [1u32, 2] {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(40 + j as u64);
        let u0 = with_mean(j, 16, 16, 0.03, 0.1, &mut rng);
        let u1 = with_mean(j, 16, 16, 0.03, 0.1, &mut rng);
        let system = MomentSystem::new(j, 1.0, 16).unwrap();
        let signal = synthesize_control(&u0, &u1, &profile, &system, 0.0).unwrap().signal;
        let opts = ReachOptions::default();
        let raw = verify_reach(&u0, &u1, &signal, &system, &profile, &opts).unwrap();
        let (_, refined) = refine_from_report(&u0, &u1, &signal, &system, &profile, &opts, &raw).unwrap();
        let secs = start.elapsed().as_secs_f64();
        let bio = system.biorthogonality_residual();
        let scale = u1.l2_norm();
        let pass =
            raw.residual_l2 <= 1e-3 * scale && refined.residual_l2 <= 1e-6 * scale && bio <= 1e-10 && secs < 30.0;
        ok &= pass;
        detail.push(format!(
            "j={j}: raw {:.2e}, refined {:.2e} (rel), biorth {bio:.1e}, {secs:.1}s",
            raw.residual_l2 / scale,
            refined.residual_l2 / scale
        ));
    }
    report("linear_control", ok, detail.join("; "));
}

#[test]
fn control_mean_invariance() {
    let profile = ControlProfile::half_circle_bump();
    let (j, n) = (1u32, 16usize);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let u0 = with_mean(j, n, n, 0.05, 0.1, &mut rng);
    let u1 = with_mean(j, n, n, 0.05, 0.1, &mut rng);
    let system = MomentSystem::new(j, 1.0, n).unwrap();
    let signal = synthesize_control(&u0, &u1, &profile, &system, 0.0).unwrap().signal;
    let forcing = Forcing::exp_sum(ExpSumForcing::from_signal(&signal, &system, &profile, n).unwrap());
    let m0 = mean_value(&u0);
    let mut worst = 0.0f64;
    let mut terminal_gap = 0.0;
    for nonlinear in [false, true] {
        let mut opts = SimOptions::new(1e-3);
        opts.nonlinear = nonlinear;
        let tr = simulate(&u0, 1.0, &forcing, opts).unwrap();
        worst = tr.states.iter().map(|u| (mean_value(u) - m0).abs()).fold(worst, f64::max);
        if !nonlinear {
            let reach = verify_reach(&u0, &u1, &signal, &system, &profile, &ReachOptions::default()).unwrap();
            terminal_gap = tr.last().minus(&reach.terminal).l2_norm();
        }
    }
    let ok = worst <= 1e-12 && terminal_gap <= 1e-10;
    report(
        "control_mean_invariance",
        ok,
        format!(
            "max |[u(t)] - [u0]| {worst:.1e} (linear and nonlinear), stepper vs quadrature terminal {terminal_gap:.1e}"
        ),
    );
}

#[test]
fn feedback_decay_rate() {
    let profile = ControlProfile::half_circle_bump();
    let mut ok = true;
    let mut detail = Vec::new();
    for j in [1u32, 2] {
        for lambda in [0.25, 0.5, 1.0] {
            let start = Instant::now();
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let u0 = FourierField::random_mean_zero(j, 64, 1.0, 1.0, &mut rng).unwrap();
            let gain = build_l_lambda(&profile, j, 64, lambda, Assembly::Exact).unwrap();
            let tr = closed_loop_linear_simulate(&u0, &gain, 20.0, 0.02).unwrap();
            let fit = decay_rate_estimate(&tr).unwrap();
            let abscissa = gain.spectral_abscissa().unwrap();
            let secs = start.elapsed().as_secs_f64();
            let rel = (fit.gamma + abscissa).abs() / abscissa.abs();
            let pass = fit.gamma >= 0.9 * lambda && fit.r2 >= 0.99 && rel <= 0.05 && secs < 60.0;
            ok &= pass;
            detail.push(format!(
                "j={j} l={lambda}: g {:.3} r2 {:.4} abs {:.3} ({:.1}%)",
                fit.gamma,
                fit.r2,
                -abscissa,
                100.0 * rel
            ));
        }
    }
    report("feedback_decay", ok, detail.join("; "));
}

#[test]
fn energy_identity() {
    let profile = ControlProfile::half_circle_bump();
    let u0 = cos_x(1, 64, 1.0 / PI.sqrt());
    let e0 = u0.l2_norm().powi(2);
    let mut ok = true;
    let mut detail = Vec::new();
    for nonlinear in [false, true] {
        let defect = |dt: f64| {
            let mut opts = SimOptions::new(dt);
            opts.nonlinear = nonlinear;
            let tr = closed_loop_nonlinear(&u0, &profile, FeedbackMode::SimpleDamping, 5.0, opts).unwrap();
            energy_balance_check(&tr, &profile).unwrap() / e0
        };
        let (a, b) = (defect(1e-3), defect(5e-4));
        ok &= a <= 1e-6 && a / b >= 8.0;
        detail.push(format!("{}: {a:.2e} -> {b:.2e} (x{:.1})", if nonlinear { "nonlinear" } else { "linear" }, a / b));
    }
    report("energy_identity", ok, detail.join("; "));
}

#[test]
fn nonlinear_stabilization() {
    let profile = ControlProfile::half_circle_bump();
    let mut u0 = cos_x(1, 32, 1.0 / PI.sqrt());
    u0.set(0, c64(0.2 * (2.0 * PI).sqrt(), 0.0));
    let tr = closed_loop_nonlinear(&u0, &profile, FeedbackMode::SimpleDamping, 40.0, SimOptions::new(0.01).stride(10))
        .unwrap();
    let dev = deviation_norms(&tr);
    // envelope: maxima over 8 consecutive windows of length 5
    let per = (dev.len() - 1) / 8;
    let env: Vec<f64> = (0..8).map(|w| dev[w * per + 1..=(w + 1) * per].iter().cloned().fold(0.0, f64::max)).collect();
    let strictly = env.windows(2).all(|w| w[1] < w[0]);
    let fit = fit_decay(&tr.times, &dev).unwrap();
    let ok = (dev[0] - 1.0).abs() < 1e-12 && strictly && fit.gamma > 0.0 && fit.r2 >= 0.95;
    report(
        "nonlinear_stabilization",
        ok,
        format!("envelope strictly decreasing {strictly}, slope {:.4}, r2 {:.4}", -fit.gamma, fit.r2),
    );
}

#[test]
fn picard_local_control_converges() {
    let profile = ControlProfile::half_circle_bump();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let u0 = FourierField::random_mean_zero(1, 16, 1.0, 0.01, &mut rng).unwrap();
    let u1 = FourierField::random_mean_zero(1, 16, 1.0, 0.01, &mut rng).unwrap();
    let system = MomentSystem::new(1, 1.0, 16).unwrap();
    let opts = PicardOptions { tol: 1e-8, max_iter: 10, dt: 1e-3, ..PicardOptions::default() };
    let rep = picard_local_control(&u0, &u1, &profile, &system, &opts).unwrap();
    let recheck =
        controlled_terminal(&u0, &rep.final_control, &system, &profile, 1e-3, true).unwrap().minus(&u1).l2_norm();
    let ratio = rep.residual_history.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max);
    let ok = rep.converged && rep.iterations <= 10 && recheck <= 1e-8 && ratio <= 0.9;
    report(
        "picard_local_control",
        ok,
        format!(
            "{} iterations, residuals {:?}, worst ratio {ratio:.3}, re-check {recheck:.2e}",
            rep.iterations, rep.residual_history
        ),
    );
}

#[test]
fn global_control_pipeline() {
    let start = Instant::now();
    let profile = ControlProfile::half_circle_bump();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let u0 = FourierField::random_modes(1, 16, 16, 1.0, 1.0, &mut rng).unwrap();
    let u1 = FourierField::random_modes(1, 16, 16, 1.0, 1.0, &mut rng).unwrap();
    let rep = global_control_experiment(&u0, &u1, &profile, &GlobalOptions::default()).unwrap();
    let reversal = rep.reversal_defect;
    let secs = start.elapsed().as_secs_f64();
    let ok = rep.verification_residual <= 1e-4 && reversal <= 1e-10 && secs < 300.0;
    report(
        "global_control",
        ok,
        format!(
            "verification {:.2e}, reversal {reversal:.1e}, phases {:.1}/{:.1}, {secs:.0}s",
            rep.verification_residual, rep.phase1_time, rep.phase2_time
        ),
    );
}

#[test]
fn strichartz_counting_bound() {
    let mut ok = true;
    let mut detail = Vec::new();
    for (j, b, tau_max) in [(1u32, 0.4, 1e3), (2, 0.35, 2e4)] {
        let p = strichartz_plateau(j, b, 200, tau_max, 201).unwrap();
        let sets = [&p.base, &p.doubled].iter().all(|r| r.max_set_a <= 3 && r.max_omega <= 3);
        ok &= p.admissible && p.growth <= 0.01 && sets;
        detail.push(format!(
            "j={j} b={b}: sup {:.4} -> {:.4} ({:+.2}%), sets<=3 {sets}",
            p.base.sup,
            p.doubled.sup,
            100.0 * p.growth
        ));
    }
    let spot = strichartz_sum(1, 0.5, 0.0, 4, 100).unwrap().value;
    let err = (spot - 1.0 / 257f64.sqrt()).abs();
    ok &= err <= 1e-12;
    detail.push(format!("spot error {err:.1e}"));
    report("strichartz_counting", ok, detail.join("; "));
}

#[test]
fn l4_ratio_trend_brackets_threshold() {
    let trend = l4_ratio_trend(1, &[16, 32, 64], &[0.4, 0.26], &EnsembleOptions::default()).unwrap();
    let var = trend.variation(0);
    let ok = var <= 0.2 && trend.increasing(1);
    report(
        "l4_ratio_trend",
        ok,
        format!(
            "b=0.4 max {:?} (variation {:.1}%), b=0.26 max {:?}",
            trend.max_ratio[0],
            100.0 * var,
            trend.max_ratio[1]
        ),
    );
}
