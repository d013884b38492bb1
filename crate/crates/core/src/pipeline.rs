//! Local exact control by fixed-point iteration, and the global damping / local control /
//! reversed damping construction.
use crate::dynamics::{reversal_round_trip, simulate, Forcing, SimOptions, Stepper};
use crate::error::{Error, Result};
use crate::moment::{refine_control, synthesize_control, ControlSignal, ExpSumForcing, MomentSystem, ReachOptions};
use crate::profile::{galerkin_matrix, ControlProfile};
use crate::spectral::{mean_value, FourierField};
use nalgebra::DVector;
use num_complex::Complex64;
use std::sync::Arc;

pub const DEFAULT_SMALLNESS: f64 = 0.05;

#[derive(Clone, Copy, Debug)]
pub struct PicardOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub dt: f64,
    /// Smallness gate on ||u0||, ||u1|| (L2); above it the loop still runs but is flagged.
    pub smallness: f64,
    pub refine: bool,
}

impl Default for PicardOptions {
    fn default() -> Self {
        PicardOptions { tol: 1e-8, max_iter: 10, dt: 1e-3, smallness: DEFAULT_SMALLNESS, refine: false }
    }
}

#[derive(Clone, Debug)]
pub struct PicardReport {
    /// Number of corrections applied after the first synthesis.
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub final_control: ControlSignal,
    pub converged: bool,
    pub above_smallness_gate: bool,
    pub terminal: FourierField,
}

impl PicardReport {
    /// Largest ratio between successive residuals from the second one on.
    pub fn worst_ratio(&self) -> Option<f64> {
        let h = &self.residual_history;
        (h.len() >= 3).then(|| h[1..].windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max))
    }
}

fn control_forcing(
    signal: &ControlSignal,
    system: &MomentSystem,
    profile: &ControlProfile,
    n: usize,
) -> Result<Forcing> {
    Ok(Forcing::exp_sum(ExpSumForcing::from_signal(signal, system, profile, n)?))
}

/// Terminal state of the controlled run (nonlinear or linear).
pub fn controlled_terminal(
    u0: &FourierField,
    signal: &ControlSignal,
    system: &MomentSystem,
    profile: &ControlProfile,
    dt: f64,
    nonlinear: bool,
) -> Result<FourierField> {
    let f = control_forcing(signal, system, profile, u0.trunc_n())?;
    let mut opts = SimOptions::new(dt).stride(usize::MAX);
    opts.nonlinear = nonlinear;
    Ok(simulate(u0, system.horizon_t, &f, opts)?.last().clone())
}

/// Iterates h_{n+1} = Phi(u0, u1 + omega_n); omega_n is the gap between the linear and the
/// nonlinear terminal states under h_n, both from the same time stepping.
pub fn picard_local_control(
    u0: &FourierField,
    u1: &FourierField,
    profile: &ControlProfile,
    system: &MomentSystem,
    opts: &PicardOptions,
) -> Result<PicardReport> {
    let above = u0.l2_norm().max(u1.l2_norm()) > opts.smallness;
    let reach = ReachOptions::default();
    let mut target = u1.clone();
    let mut history = Vec::new();
    let mut it = 0;
    loop {
        let mut signal = synthesize_control(u0, &target, profile, system, 0.0)?.signal;
        if opts.refine {
            signal = refine_control(u0, &target, &signal, system, profile, &reach)?;
        }
        let terminal = controlled_terminal(u0, &signal, system, profile, opts.dt, true)?;
        let r = terminal.minus(u1).l2_norm();
        history.push(r);
        let converged = r <= opts.tol;
        if converged || it >= opts.max_iter || !r.is_finite() {
            return Ok(PicardReport {
                iterations: it,
                residual_history: history,
                final_control: signal,
                converged,
                above_smallness_gate: above,
                terminal,
            });
        }
        let linear = controlled_terminal(u0, &signal, system, profile, opts.dt, false)?;
        let omega = linear.minus(&terminal);
        target = u1.plus(&omega);
        it += 1;
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GlobalOptions {
    pub dt: f64,
    pub stabilize_tol: f64,
    pub t_local: f64,
    /// Cap on each damping phase.
    pub max_phase_time: f64,
    /// Decay rate of the gain that holds the return phase on the reference path.
    pub tracking_lambda: f64,
    pub picard: PicardOptions,
}

impl Default for GlobalOptions {
    fn default() -> Self {
        GlobalOptions {
            dt: 1e-3,
            stabilize_tol: 0.01,
            t_local: 1.0,
            max_phase_time: 5000.0,
            tracking_lambda: 1.0,
            picard: PicardOptions::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct GlobalReport {
    pub mean: f64,
    pub phase1_time: f64,
    pub phase2_time: f64,
    pub t_local: f64,
    pub tilde_u0: FourierField,
    pub tilde_u1: FourierField,
    pub picard: PicardReport,
    /// ||u(T) - u1|| of the single forward run under the concatenated control.
    pub verification_residual: f64,
    /// Same, with the return phase driven open loop (+G G* u, no reference).
    pub open_loop_residual: f64,
    pub reversal_defect: f64,
    pub terminal: FourierField,
}

impl GlobalReport {
    pub fn total_time(&self) -> f64 {
        self.phase1_time + self.t_local + self.phase2_time
    }
}

fn deviation(u: &FourierField, c0: Complex64) -> f64 {
    let mut s: f64 = u.coeffs().iter().map(|c| c.norm_sqr()).sum();
    s += (u.get(0) - c0).norm_sqr() - u.get(0).norm_sqr();
    s.max(0.0).sqrt()
}

fn phase<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Phase { phase: name.into(), source: Box::new(e) })
}

/// Damped run with a fixed step until ||u - [u]|| <= tol; keeps the states at multiples of
/// `checkpoint` steps (step 0 always).
fn damp_until(
    u0: &FourierField,
    profile: &ControlProfile,
    h: f64,
    tol: f64,
    max_time: f64,
    even_steps: bool,
    checkpoint: usize,
) -> Result<(FourierField, usize, Vec<FourierField>)> {
    let mut stepper = damping_stepper(u0, profile)?;
    let c0 = u0.get(0);
    let mut u = u0.clone();
    let mut kept = vec![u.clone()];
    let mut steps = 0usize;
    while deviation(&u, c0) > tol || (even_steps && steps % 2 == 1) {
        if steps as f64 * h > max_time {
            return Err(Error::Accuracy(format!(
                "deviation {:.3e} still above {tol:.1e} after t = {max_time}",
                deviation(&u, c0)
            )));
        }
        u = stepper.step(&u, steps as f64 * h, h)?;
        steps += 1;
        if steps % checkpoint == 0 {
            kept.push(u.clone());
        }
    }
    Ok((u, steps, kept))
}

fn damping_stepper(u0: &FourierField, profile: &ControlProfile) -> Result<Stepper> {
    Stepper::new(u0.order_j(), u0.trunc_n(), true, Forcing::simple_damping(profile, u0.trunc_n()))
}

/// States of a damped run recomputed chunk by chunk from checkpoints, so that the run can be
/// read backwards without storing every step.
struct CheckpointedPath {
    stepper: Stepper,
    h: f64,
    chunk: usize,
    checkpoints: Vec<FourierField>,
    cached: Option<(usize, Vec<FourierField>)>,
}

impl CheckpointedPath {
    fn state(&mut self, idx: usize) -> Result<FourierField> {
        let c = idx / self.chunk;
        if self.cached.as_ref().map(|(id, _)| *id) != Some(c) {
            let mut u = self.checkpoints[c].clone();
            let mut states = Vec::with_capacity(self.chunk + 1);
            states.push(u.clone());
            for s in 0..self.chunk {
                u = self.stepper.step(&u, (c * self.chunk + s) as f64 * self.h, self.h)?;
                states.push(u.clone());
            }
            self.cached = Some((c, states));
        }
        Ok(self.cached.as_ref().expect("filled above").1[idx % self.chunk].clone())
    }
}

const CHECKPOINT: usize = 2048;

/// Damp u0 to a neighbourhood of its mean, steer locally, then follow the time reversal of a
/// damped run from u1 (reflected profile) back up to u1. Verified by one forward run.
pub fn global_control_experiment(
    u0: &FourierField,
    u1: &FourierField,
    profile: &ControlProfile,
    opts: &GlobalOptions,
) -> Result<GlobalReport> {
    let (m0, m1) = (mean_value(u0), mean_value(u1));
    if (m0 - m1).abs() > 1e-12 * m0.abs().max(1.0) {
        return Err(Error::InvalidArgument(format!("means differ: [u0] = {m0}, [u1] = {m1}")));
    }
    let (j, n) = (u0.order_j(), u0.trunc_n());
    let h = opts.dt;

    // phase 1: damping from u0
    let (tilde_u0, steps1, _) =
        phase("damping", damp_until(u0, profile, h, opts.stabilize_tol, opts.max_phase_time, false, usize::MAX))?;

    // phase 2: damping from R u1 with the reflected profile, stored on the half-step grid
    let reflected = profile.reflect();
    let (w_end, steps2_half, w_path) = phase(
        "backward damping",
        damp_until(&u1.reflect(), &reflected, 0.5 * h, opts.stabilize_tol, opts.max_phase_time, true, CHECKPOINT),
    )?;
    let tilde_u1 = w_end.reflect();
    let steps2 = steps2_half / 2;

    // phase 3: local exact control tilde_u0 -> tilde_u1
    let system = phase("local control", MomentSystem::new(j, opts.t_local, n))?;
    let picard = phase("local control", picard_local_control(&tilde_u0, &tilde_u1, profile, &system, &opts.picard))?;

    // phase 4: one forward run under the concatenated control
    let s_full = galerkin_matrix(profile, n);
    let mut mid = u0.clone();
    let mut st = phase("verification", Stepper::new(j, n, true, Forcing::simple_damping(profile, n)))?;
    for s in 0..steps1 {
        mid = phase("verification", st.step(&mid, s as f64 * h, h))?;
    }
    let after_local = phase(
        "verification",
        controlled_terminal(&mid, &picard.final_control, &system, profile, opts.picard.dt, true),
    )?;
    // reference v(t) = R w(T2 - t) on the half-step grid; f = G G* v - K (u - v)
    let gain = phase(
        "verification",
        crate::feedback::build_l_lambda(profile, j, n, opts.tracking_lambda, crate::feedback::Assembly::Exact),
    )?;
    let k_full = Forcing::gain(&gain).damping.expect("gain forcing has a matrix");
    let lift = &s_full + &k_full;
    let path = std::sync::Mutex::new(CheckpointedPath {
        stepper: phase("verification", damping_stepper(u1, &reflected))?,
        h: 0.5 * h,
        chunk: CHECKPOINT,
        checkpoints: w_path,
        cached: None,
    });
    let half = 0.5 * h;
    let source: crate::dynamics::Source = Arc::new(move |t: f64| {
        let k = (t / half).round() as usize;
        let w = path
            .lock()
            .expect("reference path lock")
            .state(steps2_half.saturating_sub(k))
            .expect("replay of a completed damped run");
        (&lift * DVector::from_column_slice(w.reflect().coeffs())).iter().cloned().collect()
    });
    let tracking = Forcing { damping: Some(k_full), source: Some(source), ..Forcing::default() };
    let mut st = phase("verification", Stepper::new(j, n, true, tracking))?;
    let mut u = after_local.clone();
    for s in 0..steps2 {
        u = phase("verification", st.step(&u, s as f64 * h, h))?;
    }
    let verification_residual = u.minus(u1).l2_norm();

    let anti = Forcing { damping: Some(-s_full), ..Forcing::default() };
    let mut st = phase("verification", Stepper::new(j, n, true, anti))?;
    let mut v = after_local;
    for s in 0..steps2 {
        v = match st.step(&v, s as f64 * h, h) {
            Ok(x) => x,
            Err(_) => break,
        };
    }
    let open_loop_residual = v.minus(u1).l2_norm();

    let reversal_defect = phase("reversal check", reversal_round_trip(&tilde_u1, opts.t_local, opts.picard.dt))?;
    Ok(GlobalReport {
        mean: m0,
        phase1_time: steps1 as f64 * h,
        phase2_time: steps2 as f64 * h,
        t_local: opts.t_local,
        tilde_u0,
        tilde_u1,
        picard,
        verification_residual,
        open_loop_residual,
        reversal_defect,
        terminal: u,
    })
}
