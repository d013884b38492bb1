//! Subcommand bodies. Each returns verdicts, a JSON payload and the tables to write.
use crate::config::*;
use crate::CliError;
use hokdv_core::dynamics::{closed_loop_nonlinear, conservation_drift, simulate, FeedbackMode, Forcing, SimOptions};
use hokdv_core::estimates::{
    check_gap, hj_identity_suite, l4_ratio_trend, strichartz_plateau, strichartz_sum, EnsembleOptions,
};
use hokdv_core::feedback::{
    build_l_lambda, closed_loop_linear_simulate, damping_spectral_abscissa, decay_rate_estimate, gain_power,
    running_energy_defect, Assembly,
};
use hokdv_core::moment::{refine_from_report, synthesize_control, verify_reach, MomentSystem, ReachOptions};
use hokdv_core::pipeline::{global_control_experiment, GlobalOptions, PicardOptions};
use hokdv_core::profile::ControlProfile;
use hokdv_core::spectral::{c64, conserved_quantities, mean_value, propagate, sobolev_norm};
use hokdv_core::trajectory::Trajectory;
use hokdv_core::{io, FourierField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    fn new(name: &str, header: &[&str], rows: Vec<Vec<f64>>) -> Self {
        Table { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows }
    }
}

#[derive(Default)]
pub struct Outcome {
    pub verdicts: BTreeMap<String, bool>,
    pub results: Value,
    pub tables: Vec<Table>,
    pub fields: Vec<(String, FourierField)>,
}

impl Outcome {
    fn check(&mut self, name: impl Into<String>, ok: bool) {
        self.verdicts.insert(name.into(), ok);
    }
}

pub fn parse_profile(spec: &str) -> Result<ControlProfile, CliError> {
    match spec {
        "bump" => Ok(ControlProfile::half_circle_bump()),
        "constant" => Ok(ControlProfile::constant()),
        s if s.starts_with("bump:") => {
            let parts: Vec<&str> = s.split(':').collect();
            let num = |x: &str| {
                x.parse::<f64>().map_err(|_| CliError::Usage(format!("field 'profile': bad number '{x}' in '{s}'")))
            };
            if parts.len() != 3 {
                return Err(CliError::Usage(format!("field 'profile': expected bump:START:LEN, got '{s}'")));
            }
            Ok(ControlProfile::bump(num(parts[1])?, num(parts[2])?)?)
        }
        path => Ok(io::read_profile(Path::new(path))?),
    }
}

fn mean_coeff(mean: f64) -> num_complex::Complex64 {
    c64(mean * (2.0 * PI).sqrt(), 0.0)
}

fn initial_field(
    kind: &Option<String>,
    file: &Option<std::path::PathBuf>,
    j: u32,
    n: usize,
    norm: f64,
    decay: f64,
    seed: Option<u64>,
) -> Result<FourierField, CliError> {
    if let Some(path) = file {
        let u = io::read_field(path)?;
        if u.order_j() != j || u.trunc_n() != n {
            return Err(CliError::Usage(format!(
                "{}: field has j={}, N={}, config asks for j={j}, N={n}",
                path.display(),
                u.order_j(),
                u.trunc_n()
            )));
        }
        return Ok(u);
    }
    match kind.as_deref() {
        Some("random") => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.expect("checked at resolve"));
            Ok(FourierField::random_mean_zero(j, n, decay, norm, &mut rng)?)
        }
        _ => Ok(FourierField::trig(j, n, &[(1, norm / PI.sqrt(), 0.0)])?),
    }
}

fn end_states(
    files: (&Option<std::path::PathBuf>, &Option<std::path::PathBuf>),
    j: u32,
    n: usize,
    active: usize,
    decay: f64,
    norm: f64,
    mean: f64,
    seed: Option<u64>,
) -> Result<(FourierField, FourierField), CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(0));
    let mut random = || -> Result<FourierField, CliError> {
        let mut u = FourierField::random_modes(j, n, active, decay, norm, &mut rng)?;
        u.set(0, mean_coeff(mean));
        Ok(u)
    };
    let u0 = match files.0 {
        Some(p) => io::read_field(p)?,
        None => random()?,
    };
    let u1 = match files.1 {
        Some(p) => io::read_field(p)?,
        None => random()?,
    };
    for (name, u) in [("u0", &u0), ("u1", &u1)] {
        if u.order_j() != j || u.trunc_n() != n {
            return Err(CliError::Usage(format!(
                "{name}: field has j={}, N={}, expected j={j}, N={n}",
                u.order_j(),
                u.trunc_n()
            )));
        }
    }
    Ok((u0, u1))
}

// ------------------------------------------------------------------ simulate

pub fn simulate_cmd(c: &SimulateConfig) -> Result<Outcome, CliError> {
    let (j, n, t_end, dt) = (c.j.unwrap(), c.n.unwrap(), c.t_final.unwrap(), c.dt.unwrap());
    let u0 = initial_field(&c.u0, &c.u0_file, j, n, c.norm.unwrap(), c.decay.unwrap(), c.seed)?;
    let (steps, h) = hokdv_core::dynamics::uniform_steps(t_end, dt);
    let stride = c.stride.unwrap_or((steps / 1000).max(1));
    let mut opts = SimOptions::new(dt).stride(stride);
    if c.nonlinear == Some(0) {
        opts = opts.linear();
    }
    let tr = simulate(&u0, t_end, &Forcing::none(), opts)?;
    let drift = conservation_drift(&tr);
    let s = c.sobolev_s.unwrap();
    let save = c.save_modes.unwrap() as i64;

    let mut header = vec!["t".to_string()];
    for k in 0..=save {
        header.push(format!("re_{k}"));
        header.push(format!("im_{k}"));
    }
    header.extend(["l2", "hs", "M", "E", "H"].map(String::from));
    let rows = tr
        .times
        .iter()
        .zip(&tr.states)
        .map(|(t, u)| {
            let mut r = vec![*t];
            for k in 0..=save {
                r.push(u.get(k).re);
                r.push(u.get(k).im);
            }
            let q = conserved_quantities(u);
            r.extend([u.l2_norm(), sobolev_norm(u, s), q.mass, q.energy, q.hamiltonian]);
            r
        })
        .collect();

    let mut out = Outcome::default();
    out.check("finite", tr.last().is_finite());
    out.check("mass_conserved", drift.mass_abs <= 1e-12 * conserved_quantities(&u0).mass.abs().max(1.0));
    out.check("energy_drift", drift.energy_rel <= c.energy_tol.unwrap());
    out.results = json!({
        "steps": steps,
        "dt_used": h,
        "drifts": {"mass_abs": drift.mass_abs, "energy_rel": drift.energy_rel, "hamiltonian_rel": drift.hamiltonian_rel},
        "final_l2": tr.last().l2_norm(),
        "final_hs": sobolev_norm(tr.last(), s),
    });
    out.tables.push(Table { name: "trajectory".into(), header, rows });
    out.fields.push(("final_state".into(), tr.last().clone()));
    Ok(out)
}

// ------------------------------------------------------------------ control

pub fn control_cmd(c: &ControlConfig) -> Result<Outcome, CliError> {
    let (j, n, n_c, t_end) = (c.j.unwrap(), c.n.unwrap(), c.modes.unwrap(), c.t_final.unwrap());
    let s = c.sobolev_s.unwrap();
    let profile = parse_profile(c.profile.as_ref().unwrap())?;
    let (u0, u1) = end_states((&c.u0_file, &c.u1_file), j, n, n_c, 0.0, c.norm.unwrap(), c.mean.unwrap(), c.seed)?;
    let system = MomentSystem::new(j, t_end, n_c)?;
    let synthesis = synthesize_control(&u0, &u1, &profile, &system, s)?;
    let opts = ReachOptions { sobolev_s: s, ..ReachOptions::default() };
    let raw = verify_reach(&u0, &u1, &synthesis.signal, &system, &profile, &opts)?;
    let (signal, rep) = if c.refine == Some(1) {
        refine_from_report(&u0, &u1, &synthesis.signal, &system, &profile, &opts, &raw)?
    } else {
        (synthesis.signal.clone(), raw.clone())
    };
    let control_norm = hokdv_core::moment::control_norm(&signal, &system, &profile, s);
    let bio = system.biorthogonality_residual();
    let scale = u1.l2_norm().max(f64::MIN_POSITIVE);
    let mean_drift = (mean_value(&rep.terminal) - mean_value(&u0)).abs();

    let mut out = Outcome::default();
    out.check("residual", rep.residual_l2 <= c.tol.unwrap() * scale);
    out.check("biorthogonality", bio <= 1e-10);
    out.check("mean_invariant", mean_drift <= 1e-12);
    out.results = json!({
        "residual_l2": rep.residual_l2,
        "residual_hs": rep.residual_hs,
        "unrefined_residual_l2": raw.residual_l2,
        "control_norm": control_norm,
        "gram_cond": system.cond_estimate,
        "biorthogonality_residual": bio,
        "mean_drift": mean_drift,
        "panels": rep.panels,
        "warnings": synthesis.warnings,
    });
    out.tables.push(Table::new("path", &["t", "deviation"], rep.path.iter().map(|(t, d)| vec![*t, *d]).collect()));
    out.fields.push(("terminal".into(), rep.terminal));
    Ok(out)
}

// ------------------------------------------------------------------ stabilize

fn running_gain_defect(tr: &Trajectory, power: &[f64]) -> Vec<f64> {
    let e0 = tr.first().l2_norm().powi(2);
    let mut acc = 0.0;
    (0..tr.len())
        .map(|i| {
            if i > 0 {
                acc += 0.5 * (tr.times[i] - tr.times[i - 1]) * (power[i] + power[i - 1]);
            }
            (tr.states[i].l2_norm().powi(2) - e0 + 2.0 * acc).abs()
        })
        .collect()
}

pub fn stabilize_cmd(c: &StabilizeConfig) -> Result<Outcome, CliError> {
    let (j, n, lambda, t_end, dt) = (c.j.unwrap(), c.n.unwrap(), c.lambda.unwrap(), c.t_final.unwrap(), c.dt.unwrap());
    let nonlinear = c.nonlinear == Some(1);
    let profile = parse_profile(c.profile.as_ref().unwrap())?;
    let u0 = initial_field(&c.u0, &c.u0_file, j, n, c.norm.unwrap(), 1.0, c.seed)?;

    let (tr, abscissa, defect) = if lambda > 0.0 {
        let gain = build_l_lambda(&profile, j, n, lambda, Assembly::Exact)?;
        let tr = if nonlinear {
            closed_loop_nonlinear(&u0, &profile, FeedbackMode::Gain(lambda), t_end, SimOptions::new(dt))?
        } else {
            closed_loop_linear_simulate(&u0, &gain, t_end, dt)?
        };
        let defect = running_gain_defect(&tr, &gain_power(&tr, &gain));
        (tr, gain.spectral_abscissa()?, defect)
    } else {
        let mut opts = SimOptions::new(dt);
        if !nonlinear {
            opts = opts.linear();
        }
        let tr = closed_loop_nonlinear(&u0, &profile, FeedbackMode::SimpleDamping, t_end, opts)?;
        let defect = running_energy_defect(&tr, &profile);
        (tr, damping_spectral_abscissa(&profile, j, n)?, defect)
    };
    let fit = decay_rate_estimate(&tr)?;
    let s = c.sobolev_s.unwrap();
    let c0 = u0.get(0);
    let rows = (0..tr.len())
        .map(|i| {
            let mut dev = tr.states[i].clone();
            dev.set(0, dev.get(0) - c0);
            vec![tr.times[i], dev.l2_norm(), sobolev_norm(&dev, s), defect[i]]
        })
        .collect();

    let mut out = Outcome::default();
    out.check("decaying", fit.gamma > 0.0);
    out.check("fit_quality", fit.r2 >= c.r2_min.unwrap());
    if lambda > 0.0 && !nonlinear {
        out.check("rate_at_least_0.9_lambda", fit.gamma >= 0.9 * lambda);
        out.check("rate_matches_abscissa", (fit.gamma + abscissa).abs() <= 0.05 * abscissa.abs());
    }
    let e0 = u0.l2_norm().powi(2).max(f64::MIN_POSITIVE);
    out.results = json!({
        "gamma_fit": fit.gamma,
        "r2": fit.r2,
        "fit_samples": fit.samples,
        "fit_truncated": fit.truncated,
        "spectral_abscissa": abscissa,
        "max_energy_defect_rel": defect.iter().cloned().fold(0.0, f64::max) / e0,
        "final_deviation": deviation_of(tr.last(), c0),
    });
    out.tables.push(Table::new("stabilize", &["t", "l2_norm", "hs_norm", "energy_defect_running"], rows));
    Ok(out)
}

fn deviation_of(u: &FourierField, c0: num_complex::Complex64) -> f64 {
    let mut d = u.clone();
    d.set(0, d.get(0) - c0);
    d.l2_norm()
}

// ------------------------------------------------------------------ global-control

pub fn global_cmd(c: &GlobalConfig) -> Result<Outcome, CliError> {
    let (j, n) = (c.j.unwrap(), c.n.unwrap());
    let profile = parse_profile(c.profile.as_ref().unwrap())?;
    let (u0, u1) = end_states((&c.u0_file, &c.u1_file), j, n, n, 1.0, c.norm.unwrap(), c.mean.unwrap(), c.seed)?;
    let opts = GlobalOptions {
        dt: c.dt.unwrap(),
        stabilize_tol: c.stabilize_tol.unwrap(),
        t_local: c.t_local.unwrap(),
        max_phase_time: c.max_phase_time.unwrap(),
        tracking_lambda: c.tracking_lambda.unwrap(),
        picard: PicardOptions {
            tol: c.picard_tol.unwrap(),
            max_iter: c.picard_max_iter.unwrap(),
            dt: c.dt.unwrap(),
            ..PicardOptions::default()
        },
    };
    let rep = global_control_experiment(&u0, &u1, &profile, &opts)?;
    let mut out = Outcome::default();
    out.check("verification_residual", rep.verification_residual <= c.tol.unwrap());
    out.check("reversal_round_trip", rep.reversal_defect <= c.reversal_tol.unwrap());
    out.check("picard_converged", rep.picard.converged);
    out.results = json!({
        "mean": rep.mean,
        "phase1_time": rep.phase1_time,
        "phase2_time": rep.phase2_time,
        "t_local": rep.t_local,
        "total_time": rep.total_time(),
        "picard_iterations": rep.picard.iterations,
        "picard_residuals": rep.picard.residual_history,
        "picard_worst_ratio": rep.picard.worst_ratio(),
        "above_smallness_gate": rep.picard.above_smallness_gate,
        "verification_residual": rep.verification_residual,
        "open_loop_residual": rep.open_loop_residual,
        "reversal_defect": rep.reversal_defect,
    });
    out.tables.push(Table::new(
        "picard",
        &["iteration", "residual"],
        rep.picard.residual_history.iter().enumerate().map(|(i, r)| vec![i as f64, *r]).collect(),
    ));
    out.fields.push(("terminal".into(), rep.terminal));
    Ok(out)
}

// ------------------------------------------------------------------ verify-lemmas

/// Largest defects of ||W(t)u|| = ||u|| and W(t+s) = W(t)W(s) over random fields and dyadic times.
fn propagator_defects(orders: &[u32], n: usize, fields: usize, seed: u64) -> Result<(f64, f64), CliError> {
    let per: Vec<Result<(f64, f64), CliError>> = (0..fields)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64 + 1);
            let j = orders[i % orders.len()];
            let u = FourierField::random_mean_zero(j, n, 0.0, 1.0, &mut rng)?;
            let t = rng.random_range(-10_240i32..=10_240) as f64 / 1024.0;
            let s = rng.random_range(-10_240i32..=10_240) as f64 / 1024.0;
            let wt = propagate(&u, t);
            let unit = (wt.l2_norm() - u.l2_norm()).abs() / u.l2_norm();
            let group = propagate(&u, t + s).max_abs_diff(&propagate(&propagate(&u, s), t)) / u.l2_norm();
            Ok((unit, group))
        })
        .collect();
    let mut worst = (0.0f64, 0.0f64);
    for r in per {
        let (a, b) = r?;
        worst = (worst.0.max(a), worst.1.max(b));
    }
    Ok(worst)
}

pub fn lemmas_cmd(c: &LemmasConfig) -> Result<Outcome, CliError> {
    let orders = c.orders.clone().unwrap();
    let (k_max, trials, seed) = (c.k_max.unwrap(), c.trials.unwrap(), c.seed.unwrap());
    let gaps = orders.iter().map(|&j| check_gap(j, k_max)).collect::<Result<Vec<_>, _>>()?;
    let hjs = orders
        .par_iter()
        .map(|&j| hj_identity_suite(j, trials, seed.wrapping_add(j as u64)))
        .collect::<Result<Vec<_>, _>>()?;

    let mut out = Outcome::default();
    for g in &gaps {
        out.check(format!("gap_j{}", g.j), g.holds);
    }
    for h in &hjs {
        out.check(format!("hj_identities_j{}", h.j), h.passed());
    }
    let mut prop = Value::Null;
    if c.fields.unwrap() > 0 {
        let (unit, group) = propagator_defects(&orders, c.n.unwrap(), c.fields.unwrap(), seed)?;
        out.check("unitarity", unit <= 1e-12);
        out.check("group_law", group <= 1e-12);
        prop = json!({"unitarity_defect": unit, "group_law_defect": group});
    }
    out.results = json!({"gap": gaps, "hj": hjs, "propagator": prop});
    out.tables.push(Table::new(
        "gap",
        &["j", "k_max", "checked", "holds", "min_ratio"],
        gaps.iter()
            .map(|g| vec![g.j as f64, g.k_max as f64, g.checked as f64, g.holds as u8 as f64, g.min_ratio])
            .collect(),
    ));
    out.tables.push(Table::new(
        "hj_checks",
        &["j", "check", "failures", "max_rel_err"],
        hjs.iter()
            .flat_map(|h| {
                h.checks
                    .iter()
                    .enumerate()
                    .map(|(i, ch)| vec![h.j as f64, i as f64, ch.failures as f64, ch.max_rel_err])
                    .collect::<Vec<_>>()
            })
            .collect(),
    ));
    Ok(out)
}

// ------------------------------------------------------------------ strichartz

pub fn strichartz_cmd(c: &StrichartzConfig) -> Result<Outcome, CliError> {
    let (j, b) = (c.j.unwrap(), c.b.unwrap());
    let plateau = strichartz_plateau(j, b, c.k_max.unwrap(), c.tau_max.unwrap(), c.far_points.unwrap())?;
    let spot = strichartz_sum(1, 0.5, 0.0, 4, 100)?;
    let mut out = Outcome::default();
    let sets = [&plateau.base, &plateau.doubled].iter().all(|r| r.max_set_a <= 3 && r.max_omega <= 3);
    out.check("exceptional_sets_at_most_3", sets);
    out.check("spot_value", (spot.value - 1.0 / 257f64.sqrt()).abs() <= 1e-12);
    if plateau.admissible {
        out.check("plateau", plateau.growth <= c.plateau_tol.unwrap());
    }
    let mut l4 = Value::Null;
    if c.l4 == Some(1) {
        let bs = c.bs.clone().unwrap();
        let opts = EnsembleOptions { seed: c.seed.unwrap(), ..EnsembleOptions::default() };
        let trend = l4_ratio_trend(j, c.ns.as_ref().unwrap(), &bs, &opts)?;
        for (bi, &bv) in bs.iter().enumerate() {
            if hokdv_core::estimates::b_above_threshold(j, bv) {
                out.check(format!("l4_bounded_b{bv}"), trend.variation(bi) <= c.l4_variation.unwrap());
            } else {
                out.check(format!("l4_increasing_b{bv}"), trend.increasing(bi));
            }
        }
        let mut rows = Vec::new();
        for (bi, &bv) in bs.iter().enumerate() {
            for (ni, &n) in trend.ns.iter().enumerate() {
                rows.push(vec![bv, n as f64, trend.max_ratio[bi][ni]]);
            }
        }
        out.tables.push(Table::new("l4_trend", &["b", "N", "max_ratio"], rows));
        l4 = serde_json::to_value(&trend).map_err(|e| CliError::Numeric(e.to_string()))?;
    }
    let thr = hokdv_core::estimates::b_threshold(j);
    out.results = json!({
        "threshold": format!("{}/{}", thr.numer(), thr.denom()),
        "admissible": plateau.admissible,
        "sup_base": plateau.base.sup,
        "sup_doubled": plateau.doubled.sup,
        "growth": plateau.growth,
        "argmax": {"tau": plateau.base.argmax_tau, "k": plateau.base.argmax_k},
        "max_set_a": plateau.base.max_set_a.max(plateau.doubled.max_set_a),
        "max_omega": plateau.base.max_omega.max(plateau.doubled.max_omega),
        "cells": plateau.base.cells + plateau.doubled.cells,
        "spot_value": spot.value,
        "l4": l4,
    });
    out.tables.push(Table::new(
        "scan",
        &["tau", "k", "M"],
        plateau.base.rows.iter().map(|r| vec![r.tau, r.k as f64, r.m]).collect(),
    ));
    Ok(out)
}
