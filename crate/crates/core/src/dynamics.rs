//! Forced nonlinear flow u_t = Au - u u_x + f by a Lawson (integrating-factor) RK4 scheme.
//!
//! Forcing pieces: an exponential sum (moment controls) entered exactly through a particular
//! solution, a linear feedback -D u, and an arbitrary time-indexed source s(t).
use crate::error::{Error, Result};
use crate::feedback::FeedbackGain;
use crate::fft;
use crate::moment::ExpSumForcing;
use crate::profile::{galerkin_matrix, ControlProfile};
use crate::spectral::{c64, cis_phase, conserved_quantities, mode_powers, FourierField};
use crate::trajectory::Trajectory;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::sync::Arc;

pub type Source = Arc<dyn Fn(f64) -> Vec<Complex64> + Send + Sync>;

#[derive(Clone, Default)]
pub struct Forcing {
    pub exp_sum: Option<ExpSumForcing>,
    /// f contains -D u.
    pub damping: Option<DMatrix<Complex64>>,
    pub source: Option<Source>,
}

impl std::fmt::Debug for Forcing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Forcing")
            .field("exp_sum", &self.exp_sum.as_ref().map(|e| e.freqs.len()))
            .field("damping", &self.damping.as_ref().map(|d| d.nrows()))
            .field("source", &self.source.is_some())
            .finish()
    }
}

impl Forcing {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn exp_sum(e: ExpSumForcing) -> Self {
        Forcing { exp_sum: Some(e), ..Self::default() }
    }

    /// f = -G G* u.
    pub fn simple_damping(profile: &ControlProfile, n: usize) -> Self {
        Forcing { damping: Some(galerkin_matrix(profile, n)), ..Self::default() }
    }

    /// f = -K_lambda (u - [u]).
    pub fn gain(gain: &FeedbackGain) -> Self {
        let n = gain.n;
        let idx = |i: usize| if i < n { i } else { i + 1 };
        let mut d = DMatrix::zeros(2 * n + 1, 2 * n + 1);
        for r in 0..2 * n {
            for c in 0..2 * n {
                d[(idx(r), idx(c))] = gain.k_matrix[(r, c)];
            }
        }
        Forcing { damping: Some(d), ..Self::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FeedbackMode {
    SimpleDamping,
    Gain(f64),
}

/// y(t) = sum_l b_{ml} e^{i l^p t} + r_m t e^{i m^p t} solves y' = Ay + F exactly.
#[derive(Clone, Debug)]
struct Particular {
    freqs: Vec<i128>,
    b: DMatrix<Complex64>,
    resonant: Vec<Complex64>,
    powers: Vec<i128>,
}

impl Particular {
    fn new(f: &ExpSumForcing, powers: &[i128]) -> Self {
        let rows = powers.len();
        let mut b = DMatrix::zeros(rows, f.freqs.len());
        let mut resonant = vec![Complex64::default(); rows];
        for (m, &pm) in powers.iter().enumerate() {
            for (l, &pl) in f.freqs.iter().enumerate() {
                let a = f.amps[(m, l)];
                if pl == pm {
                    resonant[m] += a;
                } else {
                    b[(m, l)] = a / c64(0.0, (pl - pm) as f64);
                }
            }
        }
        Particular { freqs: f.freqs.clone(), b, resonant, powers: powers.to_vec() }
    }

    fn eval(&self, t: f64) -> Vec<Complex64> {
        let e = DVector::from_iterator(self.freqs.len(), self.freqs.iter().map(|&p| cis_phase(t, p)));
        let mut y: Vec<Complex64> = (&self.b * e).iter().cloned().collect();
        for (m, r) in self.resonant.iter().enumerate() {
            if *r != Complex64::default() {
                y[m] += r * t * cis_phase(t, self.powers[m]);
            }
        }
        y
    }
}

/// -(1/2) d_x (u^2), exact on |k| <= N (zero-padded collocation).
pub fn nonlinear_term(c: &[Complex64]) -> Vec<Complex64> {
    let n = (c.len() - 1) / 2;
    let m = fft::pow2_at_least(3 * n + 1);
    let mut g = fft::to_grid(c, m);
    for v in g.iter_mut() {
        *v = *v * *v;
    }
    let mut sq = fft::from_grid(g, n);
    for (i, v) in sq.iter_mut().enumerate() {
        let k = i as f64 - n as f64;
        *v *= c64(0.0, -0.5 * k);
    }
    sq
}

/// out -= d * u, column by column.
pub fn sub_matvec(d: &DMatrix<Complex64>, u: &[Complex64], out: &mut [Complex64]) {
    let rows = d.nrows();
    for (col, uc) in d.as_slice().chunks_exact(rows).zip(u) {
        if *uc == Complex64::default() {
            continue;
        }
        for (o, a) in out.iter_mut().zip(col) {
            *o -= a * uc;
        }
    }
}

pub struct Stepper {
    j: u32,
    n: usize,
    nonlinear: bool,
    forcing: Forcing,
    powers: Vec<i128>,
    particular: Option<Particular>,
    cache: Option<(f64, Vec<Complex64>, Vec<Complex64>)>,
}

impl Stepper {
    pub fn new(j: u32, n: usize, nonlinear: bool, forcing: Forcing) -> Result<Self> {
        crate::spectral::check_order(j, n)?;
        let powers = mode_powers(j, n);
        if let Some(d) = &forcing.damping {
            if d.nrows() != 2 * n + 1 || d.ncols() != 2 * n + 1 {
                return Err(Error::InvalidArgument("damping matrix does not match the truncation".into()));
            }
        }
        let particular = match &forcing.exp_sum {
            Some(e) if e.n != n => {
                return Err(Error::InvalidArgument(format!("forcing truncation {} != state truncation {n}", e.n)))
            }
            Some(e) if !e.is_zero() => Some(Particular::new(e, &powers)),
            _ => None,
        };
        Ok(Stepper { j, n, nonlinear, forcing, powers, particular, cache: None })
    }

    fn particular_at(&self, t: f64) -> Option<Vec<Complex64>> {
        self.particular.as_ref().map(|p| p.eval(t))
    }

    /// Right-hand side for w = u - y(t): N(y + w) - D(y + w) + s(t).
    fn rhs(&self, w: &[Complex64], t: f64) -> Vec<Complex64> {
        let u: Vec<Complex64> = match self.particular_at(t) {
            Some(y) => w.iter().zip(&y).map(|(a, b)| a + b).collect(),
            None => w.to_vec(),
        };
        let mut out = if self.nonlinear { nonlinear_term(&u) } else { vec![Complex64::default(); u.len()] };
        if let Some(d) = &self.forcing.damping {
            sub_matvec(d, &u, &mut out);
        }
        if let Some(s) = &self.forcing.source {
            for (o, v) in out.iter_mut().zip(s(t)) {
                *o += v;
            }
        }
        out
    }

    fn factors(&mut self, h: f64) -> (Vec<Complex64>, Vec<Complex64>) {
        match self.cache.take() {
            Some((ch, full, half)) if ch == h => (full, half),
            _ => (
                self.powers.iter().map(|&p| cis_phase(h, p)).collect(),
                self.powers.iter().map(|&p| cis_phase(0.5 * h, p)).collect(),
            ),
        }
    }

    /// One step from time t to t + h.
    pub fn step(&mut self, u: &FourierField, t: f64, h: f64) -> Result<FourierField> {
        if u.trunc_n() != self.n || u.order_j() != self.j {
            return Err(Error::InvalidArgument("state does not match the stepper truncation".into()));
        }
        let (e1, e2) = self.factors(h);
        let mut w: Vec<Complex64> = u.coeffs().to_vec();
        if let Some(y) = self.particular_at(t) {
            for (a, b) in w.iter_mut().zip(&y) {
                *a -= b;
            }
        }
        let dim = w.len();
        let k1 = self.rhs(&w, t);
        let a2: Vec<Complex64> = (0..dim).map(|i| e2[i] * (w[i] + 0.5 * h * k1[i])).collect();
        let k2 = self.rhs(&a2, t + 0.5 * h);
        let a3: Vec<Complex64> = (0..dim).map(|i| e2[i] * w[i] + 0.5 * h * k2[i]).collect();
        let k3 = self.rhs(&a3, t + 0.5 * h);
        let a4: Vec<Complex64> = (0..dim).map(|i| e1[i] * w[i] + h * e2[i] * k3[i]).collect();
        let k4 = self.rhs(&a4, t + h);
        let mut next: Vec<Complex64> = (0..dim)
            .map(|i| e1[i] * w[i] + h / 6.0 * (e1[i] * k1[i] + 2.0 * e2[i] * (k2[i] + k3[i]) + k4[i]))
            .collect();
        if let Some(y) = self.particular_at(t + h) {
            for (a, b) in next.iter_mut().zip(&y) {
                *a += b;
            }
        }
        self.cache = Some((h, e1, e2));
        if next.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::BlowUp { time: t + h });
        }
        FourierField::new_complex(self.j, self.n, next)
    }
}

/// Single step helper for callers that do not keep a stepper.
pub fn nonlinear_step(u: &FourierField, t: f64, dt: f64, forcing: &Forcing) -> Result<FourierField> {
    Stepper::new(u.order_j(), u.trunc_n(), true, forcing.clone())?.step(u, t, dt)
}

#[derive(Clone, Copy, Debug)]
pub struct SimOptions {
    pub dt: f64,
    /// Keep every `stride`-th state (the terminal state is always kept).
    pub stride: usize,
    pub nonlinear: bool,
}

impl SimOptions {
    pub fn new(dt: f64) -> Self {
        SimOptions { dt, stride: 1, nonlinear: true }
    }

    pub fn stride(mut self, stride: usize) -> Self {
        self.stride = stride.max(1);
        self
    }

    pub fn linear(mut self) -> Self {
        self.nonlinear = false;
        self
    }
}

/// Number of uniform steps and their size so that the run ends exactly at `t_end`.
pub fn uniform_steps(t_end: f64, dt: f64) -> (usize, f64) {
    let steps = (t_end / dt - 1e-9).ceil().max(1.0) as usize;
    (steps, t_end / steps as f64)
}

/// Forced simulation on [0, T]; the step is shrunk so an integer number of steps lands on T.
pub fn simulate(u0: &FourierField, t_end: f64, forcing: &Forcing, opts: SimOptions) -> Result<Trajectory> {
    if !(t_end > 0.0) || !(opts.dt > 0.0) {
        return Err(Error::InvalidArgument(format!("need T > 0 and dt > 0, got T={t_end}, dt={}", opts.dt)));
    }
    let mut stepper = Stepper::new(u0.order_j(), u0.trunc_n(), opts.nonlinear, forcing.clone())?;
    let (steps, h) = uniform_steps(t_end, opts.dt);
    let mut tr = Trajectory::new(0.0, u0.clone());
    let mut u = u0.clone();
    for s in 0..steps {
        let t = s as f64 * h;
        u = stepper.step(&u, t, h)?;
        if (s + 1) % opts.stride == 0 || s + 1 == steps {
            let tn = if s + 1 == steps { t_end } else { (s + 1) as f64 * h };
            tr.push(tn, u.clone());
        }
    }
    Ok(tr)
}

/// Nonlinear closed loop with f = -G G* u or f = -K_lambda (u - [u]).
pub fn closed_loop_nonlinear(
    u0: &FourierField,
    profile: &ControlProfile,
    mode: FeedbackMode,
    t_end: f64,
    opts: SimOptions,
) -> Result<Trajectory> {
    let forcing = match mode {
        FeedbackMode::SimpleDamping => Forcing::simple_damping(profile, u0.trunc_n()),
        FeedbackMode::Gain(lambda) => Forcing::gain(&crate::feedback::build_l_lambda(
            profile,
            u0.order_j(),
            u0.trunc_n(),
            lambda,
            crate::feedback::Assembly::Exact,
        )?),
    };
    simulate(u0, t_end, &forcing, opts)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Drift {
    pub mass_abs: f64,
    pub energy_rel: f64,
    pub hamiltonian_rel: f64,
}

/// Largest deviation of M, E, H from their initial values along the trajectory.
pub fn conservation_drift(tr: &Trajectory) -> Drift {
    let c0 = conserved_quantities(tr.first());
    let mut d = Drift { mass_abs: 0.0, energy_rel: 0.0, hamiltonian_rel: 0.0 };
    let escale = c0.energy.abs().max(1e-300);
    let hscale = c0.hamiltonian.abs().max(1e-300);
    for u in &tr.states {
        let c = conserved_quantities(u);
        d.mass_abs = d.mass_abs.max((c.mass - c0.mass).abs());
        d.energy_rel = d.energy_rel.max((c.energy - c0.energy).abs() / escale);
        d.hamiltonian_rel = d.hamiltonian_rel.max((c.hamiltonian - c0.hamiltonian).abs() / hscale);
    }
    d
}

/// v(t) = R u(T - t) with R the reflection x -> -x.
pub fn reverse_trajectory(tr: &Trajectory) -> Trajectory {
    let t_end = tr.final_time();
    let t0 = tr.times[0];
    let mut out = Trajectory::default();
    for (t, u) in tr.times.iter().zip(&tr.states).rev() {
        out.times.push(t_end - t + t0);
        out.states.push(u.reflect());
    }
    out
}

/// Round trip: run u0 forward for T, reflect, run forward again; compare with R u0.
pub fn reversal_round_trip(u0: &FourierField, t_end: f64, dt: f64) -> Result<f64> {
    let opts = SimOptions::new(dt).stride(usize::MAX);
    let fwd = simulate(u0, t_end, &Forcing::none(), opts)?;
    let back = simulate(&fwd.last().reflect(), t_end, &Forcing::none(), opts)?;
    Ok(back.last().max_abs_diff(&u0.reflect()))
}

/// Result of the Duhamel tail quadrature.
#[derive(Clone, Debug)]
pub struct DuhamelTail {
    pub omega: FourierField,
    /// Change of the result when every second snapshot is dropped.
    pub thinning_change: f64,
}

const GAUSS4: usize = 4;

fn lagrange_weights(xs: &[f64], x: f64) -> Vec<f64> {
    (0..xs.len())
        .map(|i| xs.iter().enumerate().filter(|&(k, _)| k != i).map(|(_, &xk)| (x - xk) / (xs[i] - xk)).product())
        .collect()
}

fn duhamel_quadrature(tr: &Trajectory, t_end: f64) -> Result<FourierField> {
    let u0 = tr.first();
    let (j, n) = (u0.order_j(), u0.trunc_n());
    let powers = mode_powers(j, n);
    if tr.len() < 4 {
        return Err(Error::Accuracy("Duhamel tail needs at least four snapshots".into()));
    }
    // interaction frame v = W(-t) u is slowly varying
    let v: Vec<Vec<Complex64>> = tr
        .times
        .iter()
        .zip(&tr.states)
        .map(|(&t, u)| u.coeffs().iter().zip(&powers).map(|(c, &p)| c * cis_phase(-t, p)).collect())
        .collect();
    let rule = crate::quad::gauss_legendre(GAUSS4);
    let mut acc = vec![Complex64::default(); 2 * n + 1];
    let last = tr.len() - 1;
    for i in 0..last {
        let (a, b) = (tr.times[i], tr.times[i + 1]);
        if a >= t_end {
            break;
        }
        let b = b.min(t_end);
        let s = i.saturating_sub(1).min(last.saturating_sub(3));
        let xs = &tr.times[s..s + 4];
        for (tau, w) in crate::quad::gauss_on(a, b, &rule) {
            let lw = lagrange_weights(xs, tau);
            let u: Vec<Complex64> = (0..2 * n + 1)
                .map(|m| {
                    let vm: Complex64 = (0..4).map(|q| v[s + q][m] * lw[q]).sum();
                    vm * cis_phase(tau, powers[m])
                })
                .collect();
            // u u_x = -(nonlinear_term)
            let nl = nonlinear_term(&u);
            for m in 0..2 * n + 1 {
                acc[m] -= nl[m] * cis_phase(t_end - tau, powers[m]) * w;
            }
        }
    }
    FourierField::new_complex(j, n, acc)
}

/// omega(T, u) = int_0^T W(T - tau)(u u_x)(tau) dtau from stored snapshots; four Gauss nodes per
/// snapshot interval on a cubic interpolant of W(-tau)u(tau); checked against the thinned trajectory.
pub fn duhamel_nonlinear_tail(tr: &Trajectory, t_end: f64, tol: f64) -> Result<DuhamelTail> {
    tr.validate()?;
    if t_end > tr.final_time() * (1.0 + 1e-12) {
        return Err(Error::InvalidArgument(format!("trajectory ends at {} < T = {t_end}", tr.final_time())));
    }
    let omega = duhamel_quadrature(tr, t_end)?;
    let coarse = duhamel_quadrature(&tr.thinned(2), t_end)?;
    let change = coarse.max_abs_diff(&omega);
    if change > tol * omega.l2_norm().max(1.0) {
        return Err(Error::Accuracy(format!(
            "Duhamel quadrature changes by {change:.3e} on thinning; store snapshots more densely"
        )));
    }
    Ok(DuhamelTail { omega, thinning_change: change })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moment::{synthesize_control, verify_reach, MomentSystem, ReachOptions};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rest_and_constants() {
        let z = FourierField::zeros(1, 8).unwrap();
        assert_eq!(nonlinear_step(&z, 0.0, 0.01, &Forcing::none()).unwrap(), z);
        let c = FourierField::constant(2, 8, 1.7).unwrap();
        let tr = simulate(&c, 1.0, &Forcing::none(), SimOptions::new(0.01)).unwrap();
        assert!(tr.states.iter().all(|u| u.max_abs_diff(&c) < 1e-15));
        let p = ControlProfile::half_circle_bump();
        let tr = closed_loop_nonlinear(&c, &p, FeedbackMode::SimpleDamping, 1.0, SimOptions::new(0.01)).unwrap();
        assert!(tr.last().max_abs_diff(&c) < 1e-15);
    }

    #[test]
    fn nonlinear_term_matches_grid_derivative() {
        let u = FourierField::trig(1, 8, &[(1, 1.0, 0.3), (3, -0.2, 0.5)]).unwrap();
        let nl = nonlinear_term(u.coeffs());
        let uu = crate::spectral::multiply(&u, &crate::spectral::derivative(&u));
        let expect: Vec<Complex64> = uu.coeffs().iter().map(|c| -c).collect();
        for (a, b) in nl.iter().zip(&expect) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn free_flow_conservation_and_order() {
        let u0 = FourierField::trig(1, 32, &[(1, 1.0, 0.0)]).unwrap();
        let drift = |dt: f64| {
            let tr = simulate(&u0, 2.0, &Forcing::none(), SimOptions::new(dt).stride(10)).unwrap();
            conservation_drift(&tr)
        };
        let (a, b) = (drift(0.02), drift(0.01));
        assert_eq!(a.mass_abs, 0.0);
        assert!(b.energy_rel < 1e-8 && b.hamiltonian_rel < 1e-6, "{b:?}");
        assert!(a.energy_rel / b.energy_rel > 8.0, "{a:?} {b:?}");
    }

    #[test]
    fn linear_forced_run_matches_verify_reach() {
        let p = ControlProfile::half_circle_bump();
        let sys = MomentSystem::new(1, 1.0, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u0 = FourierField::random_mean_zero(1, 6, 0.0, 0.1, &mut rng).unwrap();
        let u1 = FourierField::random_mean_zero(1, 6, 0.0, 0.1, &mut rng).unwrap();
        let syn = synthesize_control(&u0, &u1, &p, &sys, 0.0).unwrap();
        let rep = verify_reach(&u0, &u1, &syn.signal, &sys, &p, &ReachOptions::default()).unwrap();
        let f = ExpSumForcing::from_signal(&syn.signal, &sys, &p, 6).unwrap();
        let tr = simulate(&u0, 1.0, &Forcing::exp_sum(f), SimOptions::new(0.01).linear()).unwrap();
        assert!(tr.last().max_abs_diff(&rep.terminal) < 1e-10);
        // nonlinear run keeps the mean
        let tr = simulate(
            &u0,
            1.0,
            &Forcing::exp_sum(ExpSumForcing::from_signal(&syn.signal, &sys, &p, 6).unwrap()),
            SimOptions::new(0.01),
        )
        .unwrap();
        for u in &tr.states {
            assert!((crate::spectral::mean_value(u) - crate::spectral::mean_value(&u0)).abs() <= 1e-12);
        }
    }

    #[test]
    fn damping_energy_identity() {
        let p = ControlProfile::half_circle_bump();
        let u0 = FourierField::trig(1, 16, &[(1, 1.0, 0.0), (2, 0.5, 0.0)]).unwrap();
        let defect = |dt: f64| {
            let tr = closed_loop_nonlinear(&u0, &p, FeedbackMode::SimpleDamping, 2.0, SimOptions::new(dt)).unwrap();
            crate::feedback::energy_balance_check(&tr, &p).unwrap()
        };
        let (a, b) = (defect(0.002), defect(0.001));
        assert!(b <= 1e-6 * u0.l2_norm().powi(2), "{b}");
        assert!(a / b >= 8.0, "{a} {b}");
    }

    #[test]
    fn reversal_round_trip_is_tight() {
        let u0 = FourierField::trig(1, 16, &[(1, 0.3, 0.1), (2, 0.1, 0.0)]).unwrap();
        assert!(reversal_round_trip(&u0, 1.0, 1e-3).unwrap() < 1e-10);
        let tr = simulate(&u0, 0.5, &Forcing::none(), SimOptions::new(1e-3).stride(50)).unwrap();
        let rev = reverse_trajectory(&tr);
        let back = simulate(&rev.first().clone(), 0.5, &Forcing::none(), SimOptions::new(1e-3).stride(50)).unwrap();
        for (a, b) in back.states.iter().zip(&rev.states) {
            assert!(a.max_abs_diff(b) < 1e-10);
        }
    }

    #[test]
    fn duhamel_tail_examples() {
        let z = FourierField::zeros(1, 8).unwrap();
        let tr = simulate(&z, 1.0, &Forcing::none(), SimOptions::new(0.01)).unwrap();
        assert_eq!(duhamel_nonlinear_tail(&tr, 1.0, 1e-6).unwrap().omega.l2_norm(), 0.0);
        let c = FourierField::constant(1, 8, 2.0).unwrap();
        let tr = simulate(&c, 1.0, &Forcing::none(), SimOptions::new(0.01)).unwrap();
        assert!(duhamel_nonlinear_tail(&tr, 1.0, 1e-6).unwrap().omega.l2_norm() < 1e-14);
        // free linear flow of cos x: brute-force fine-grid oracle
        let u0 = FourierField::trig(1, 8, &[(1, 1.0, 0.0)]).unwrap();
        let tr = simulate(&u0, 1.0, &Forcing::none(), SimOptions::new(0.01).linear()).unwrap();
        let tail = duhamel_nonlinear_tail(&tr, 1.0, 1e-6).unwrap();
        let steps = 20000;
        let h = 1.0 / steps as f64;
        let mut oracle = vec![Complex64::default(); 17];
        let powers = mode_powers(1, 8);
        for s in 0..=steps {
            let tau = s as f64 * h;
            let w = if s == 0 || s == steps { 0.5 } else { 1.0 } * h;
            let u = crate::spectral::propagate(&u0, tau);
            let nl = nonlinear_term(u.coeffs());
            for m in 0..17 {
                oracle[m] -= nl[m] * cis_phase(1.0 - tau, powers[m]) * w;
            }
        }
        let oracle = FourierField::new_complex(1, 8, oracle).unwrap();
        assert!(tail.omega.max_abs_diff(&oracle) < 1e-8, "{}", tail.omega.max_abs_diff(&oracle));
        let coarse = tr.thinned(50);
        assert!(matches!(duhamel_nonlinear_tail(&coarse, 1.0, 1e-10), Err(Error::Accuracy(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn damped_mean_is_invariant(seed in any::<u64>(), mean in -1.0f64..1.0) {
            let p = ControlProfile::half_circle_bump();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut u0 = FourierField::random_mean_zero(1, 12, 1.0, 0.5, &mut rng).unwrap();
            u0.set(0, c64(mean * (2.0 * std::f64::consts::PI).sqrt(), 0.0));
            for mode in [FeedbackMode::SimpleDamping, FeedbackMode::Gain(0.5)] {
                let tr = closed_loop_nonlinear(&u0, &p, mode, 1.0, SimOptions::new(0.005)).unwrap();
                for u in &tr.states {
                    prop_assert!((crate::spectral::mean_value(u) - mean).abs() <= 1e-10);
                }
                let norms = crate::feedback::deviation_norms(&tr);
                if mode == FeedbackMode::SimpleDamping {
                    prop_assert!(norms.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9)));
                }
            }
        }
    }
}
