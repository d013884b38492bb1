//! Feedback laws K_lambda = G G* L_lambda^{-1} and closed-loop linear runs.
use crate::error::{Error, Result};
use crate::profile::{galerkin_matrix, ControlProfile};
use crate::quad;
use crate::spectral::{c64, cis_phase, mode_powers, FourierField};
use crate::trajectory::Trajectory;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub const DEFAULT_QUAD_NODES: usize = 64;
pub const MAX_QUAD_NODES: usize = 4096;
const QUAD_TOL: f64 = 1e-10;

/// How L_lambda is assembled.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Assembly {
    /// Entry-wise closed form of the tau integral.
    Exact,
    /// Gauss-Legendre in tau, nodes doubled until entries settle.
    Gauss { nodes: usize },
}

#[derive(Clone, Debug)]
pub struct FeedbackGain {
    pub lambda: f64,
    pub j: u32,
    pub n: usize,
    /// Rows and columns indexed by k = -N..-1, 1..N.
    pub l_matrix: DMatrix<Complex64>,
    pub k_matrix: DMatrix<Complex64>,
    /// Restriction of G G* to the mean-zero modes.
    pub s_matrix: DMatrix<Complex64>,
    /// Nodes used when assembled by quadrature.
    pub quad_nodes: Option<usize>,
}

/// Mean-zero mode list -N..-1, 1..N.
pub fn mean_zero_modes(n: usize) -> Vec<i64> {
    let n = n as i64;
    (-n..=n).filter(|&k| k != 0).collect()
}

fn drop_mean(full: &DMatrix<Complex64>, n: usize) -> DMatrix<Complex64> {
    let skip = |i: usize| if i < n { i } else { i + 1 };
    DMatrix::from_fn(2 * n, 2 * n, |r, c| full[(skip(r), skip(c))])
}

/// (e^z - 1)/z, with a series near the origin.
pub fn phi1(z: Complex64) -> Complex64 {
    if z.norm() < 0.5 {
        let mut term = c64(1.0, 0.0);
        let mut sum = term;
        for m in 2..=20 {
            term *= z / m as f64;
            sum += term;
        }
        sum
    } else {
        (z.exp() - 1.0) / z
    }
}

fn exact_l(s: &DMatrix<Complex64>, powers: &[i128], lambda: f64) -> DMatrix<Complex64> {
    DMatrix::from_fn(s.nrows(), s.ncols(), |m, k| {
        let d = powers[k] - powers[m];
        // e^z with z = -2 lambda + i d, phase reduced exactly
        let z = c64(-2.0 * lambda, d as f64);
        let val = if z.norm() < 0.5 { phi1(z) } else { (cis_phase(1.0, d) * (-2.0 * lambda).exp() - 1.0) / z };
        s[(m, k)] * val
    })
}

fn gauss_l(s: &DMatrix<Complex64>, powers: &[i128], lambda: f64, nodes: usize) -> DMatrix<Complex64> {
    let rule = quad::gauss_legendre(nodes);
    let dim = s.nrows();
    let mut out = DMatrix::zeros(dim, dim);
    for (tau, w) in quad::gauss_on(0.0, 1.0, &rule) {
        let e: Vec<Complex64> = powers.iter().map(|&p| cis_phase(tau, p)).collect();
        let wt = w * (-2.0 * lambda * tau).exp();
        for k in 0..dim {
            for m in 0..dim {
                out[(m, k)] += s[(m, k)] * e[m].conj() * e[k] * wt;
            }
        }
    }
    out
}

fn max_entry_diff(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// L_lambda = int_0^1 e^{-2 lambda tau} W(-tau) G G* W(tau) dtau on the mean-zero modes.
pub fn build_l_lambda(
    profile: &ControlProfile,
    j: u32,
    n: usize,
    lambda: f64,
    assembly: Assembly,
) -> Result<FeedbackGain> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda = {lambda} must be nonnegative")));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("truncation N must be positive".into()));
    }
    crate::spectral::check_order(j, n)?;
    let s = drop_mean(&galerkin_matrix(profile, n), n);
    let powers: Vec<i128> =
        mean_zero_modes(n).iter().map(|&k| crate::spectral::dispersion_power(j, k)).collect::<Result<_>>()?;
    let dim = 2 * n;
    let (l, quad_nodes) = if lambda == 0.0 {
        (DMatrix::identity(dim, dim), None)
    } else {
        match assembly {
            Assembly::Exact => (exact_l(&s, &powers, lambda), None),
            Assembly::Gauss { nodes } => {
                let omega = 2.0 * powers.iter().map(|p| p.unsigned_abs()).max().unwrap_or(0) as f64;
                if 0.5 * omega + 16.0 > MAX_QUAD_NODES as f64 {
                    return Err(Error::Accuracy(format!(
                        "tau integrand oscillates at {omega:.3e}; needs more than {MAX_QUAD_NODES} nodes, reduce N or use the exact assembly"
                    )));
                }
                let mut nodes = nodes.max(1);
                let mut prev = gauss_l(&s, &powers, lambda, nodes);
                loop {
                    let next_nodes = 2 * nodes;
                    if next_nodes > MAX_QUAD_NODES {
                        return Err(Error::Accuracy(format!(
                            "L_lambda quadrature not converged at {nodes} nodes; increase quad_nodes"
                        )));
                    }
                    let next = gauss_l(&s, &powers, lambda, next_nodes);
                    let change = max_entry_diff(&prev, &next);
                    prev = next;
                    nodes = next_nodes;
                    if change <= QUAD_TOL {
                        break;
                    }
                }
                (prev, Some(nodes))
            }
        }
    };
    let l = hermitize(l);
    let k = if lambda == 0.0 {
        s.clone()
    } else {
        let chol = l.clone().cholesky().ok_or_else(|| Error::Invariant("L_lambda is not positive definite".into()))?;
        // K = S L^{-1}  <=>  K^H = L^{-1} S
        chol.solve(&s).adjoint()
    };
    Ok(FeedbackGain { lambda, j, n, l_matrix: l, k_matrix: k, s_matrix: s, quad_nodes })
}

fn hermitize(mut m: DMatrix<Complex64>) -> DMatrix<Complex64> {
    let dim = m.nrows();
    for i in 0..dim {
        for k in 0..i {
            let avg = 0.5 * (m[(i, k)] + m[(k, i)].conj());
            m[(i, k)] = avg;
            m[(k, i)] = avg.conj();
        }
        m[(i, i)] = c64(m[(i, i)].re, 0.0);
    }
    m
}

fn mean_zero_vector(u: &FourierField) -> DVector<Complex64> {
    let n = u.trunc_n();
    let c = u.coeffs();
    DVector::from_iterator(2 * n, c[..n].iter().chain(&c[n + 1..]).cloned())
}

fn field_from_mean_zero(j: u32, n: usize, mean: Complex64, v: &DVector<Complex64>) -> FourierField {
    let mut c = Vec::with_capacity(2 * n + 1);
    c.extend(v.iter().take(n));
    c.push(mean);
    c.extend(v.iter().skip(n));
    FourierField::new_complex(j, n, c).expect("finite field")
}

impl FeedbackGain {
    fn check(&self, u: &FourierField) -> Result<()> {
        if u.trunc_n() != self.n || u.order_j() != self.j {
            return Err(Error::InvalidArgument(format!(
                "field (j={}, N={}) does not match gain (j={}, N={})",
                u.order_j(),
                u.trunc_n(),
                self.j,
                self.n
            )));
        }
        Ok(())
    }

    /// G G* L^{-1} (u - [u]), mean-zero.
    pub fn apply(&self, u: &FourierField) -> Result<FourierField> {
        self.check(u)?;
        let v = mean_zero_vector(u);
        let y = &self.k_matrix * v;
        Ok(field_from_mean_zero(self.j, self.n, Complex64::default(), &y))
    }

    /// A - K on the mean-zero modes.
    pub fn generator(&self) -> DMatrix<Complex64> {
        let powers: Vec<i128> = mean_zero_modes(self.n)
            .iter()
            .map(|&k| crate::spectral::dispersion_power(self.j, k).expect("checked at build"))
            .collect();
        let mut m = -&self.k_matrix;
        for (i, p) in powers.iter().enumerate() {
            m[(i, i)] += c64(0.0, *p as f64);
        }
        m
    }

    /// Eigenvalues of A - K from a complex Schur form.
    pub fn closed_loop_spectrum(&self) -> Result<Vec<Complex64>> {
        schur_eigenvalues(self.generator())
    }

    /// max Re spec(A - K).
    pub fn spectral_abscissa(&self) -> Result<f64> {
        Ok(self.closed_loop_spectrum()?.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
    }

    /// Smallest eigenvalue of L.
    pub fn l_min_eigenvalue(&self) -> f64 {
        self.l_matrix.clone().symmetric_eigen().eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn l_hermitian_defect(&self) -> f64 {
        max_entry_diff(&self.l_matrix, &self.l_matrix.adjoint())
    }
}

fn schur_eigenvalues(m: DMatrix<Complex64>) -> Result<Vec<Complex64>> {
    let schur = nalgebra::linalg::Schur::try_new(m, 1e-15, 100_000)
        .ok_or_else(|| Error::Accuracy("Schur iteration did not converge".into()))?;
    let (_, t) = schur.unpack();
    Ok((0..t.nrows()).map(|i| t[(i, i)]).collect())
}

/// max Re spec(A - G G*) on the mean-zero modes (simple damping).
pub fn damping_spectral_abscissa(profile: &ControlProfile, j: u32, n: usize) -> Result<f64> {
    crate::spectral::check_order(j, n)?;
    let full = galerkin_matrix(profile, n);
    let modes = mean_zero_modes(n);
    let idx: Vec<usize> = modes.iter().map(|&k| (k + n as i64) as usize).collect();
    let mut m = DMatrix::from_fn(idx.len(), idx.len(), |a, b| -full[(idx[a], idx[b])]);
    for (i, &k) in modes.iter().enumerate() {
        m[(i, i)] += c64(0.0, crate::spectral::dispersion_power(j, k)? as f64);
    }
    Ok(schur_eigenvalues(m)?.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
}

/// Re (u - [u], K (u - [u])) at every state: the rate at which the gain removes energy.
pub fn gain_power(tr: &Trajectory, gain: &FeedbackGain) -> Vec<f64> {
    tr.states
        .iter()
        .map(|u| {
            let v = mean_zero_vector(u);
            (v.adjoint() * &gain.k_matrix * &v)[(0, 0)].re
        })
        .collect()
}

/// u_t = (A - K) u on the truncated space by a matrix exponential per step; samples every step.
/// The step is shrunk so that an integer number of steps ends exactly at `t_end`.
pub fn closed_loop_linear_simulate(u0: &FourierField, gain: &FeedbackGain, t_end: f64, dt: f64) -> Result<Trajectory> {
    gain.check(u0)?;
    if !(dt > 0.0) || !(t_end > 0.0) {
        return Err(Error::InvalidArgument(format!("need dt > 0 and T > 0, got dt={dt}, T={t_end}")));
    }
    let steps = (t_end / dt - 1e-9).ceil().max(1.0) as usize;
    let h = t_end / steps as f64;
    let prop = (gain.generator() * c64(h, 0.0)).exp();
    let mean = u0.get(0);
    let mut v = mean_zero_vector(u0);
    let mut tr = Trajectory::new(0.0, u0.clone());
    for step in 1..=steps {
        v = &prop * v;
        let t = if step == steps { t_end } else { step as f64 * h };
        tr.push(t, field_from_mean_zero(gain.j, gain.n, mean, &v));
    }
    Ok(tr)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayFit {
    pub gamma: f64,
    pub r2: f64,
    /// Samples used in the fit.
    pub samples: usize,
    /// Set when samples at the rounding floor were dropped.
    pub truncated: bool,
}

/// ||u(t) - [u0]||_{L2} with [u0] the initial mean.
pub fn deviation_norms(tr: &Trajectory) -> Vec<f64> {
    let c0 = tr.first().get(0);
    tr.states
        .iter()
        .map(|u| {
            let mut s: f64 = u.coeffs().iter().map(|c| c.norm_sqr()).sum();
            s += (u.get(0) - c0).norm_sqr() - u.get(0).norm_sqr();
            s.max(0.0).sqrt()
        })
        .collect()
}

/// Least-squares slope of log ||u(t) - [u0]|| over the trailing half: returns gamma = -slope.
pub fn decay_rate_estimate(tr: &Trajectory) -> Result<DecayFit> {
    if tr.len() < 10 {
        return Err(Error::InvalidArgument(format!("need at least 10 samples, got {}", tr.len())));
    }
    let norms = deviation_norms(tr);
    fit_decay(&tr.times, &norms)
}

/// Log-linear fit over the trailing half of (t, y).
pub fn fit_decay(times: &[f64], norms: &[f64]) -> Result<DecayFit> {
    let peak = norms.iter().cloned().fold(0.0, f64::max);
    if peak == 0.0 {
        return Ok(DecayFit { gamma: 0.0, r2: 1.0, samples: norms.len(), truncated: false });
    }
    let floor = (peak * 1e-12).max(1e-300);
    let usable = norms.iter().position(|&y| !(y > floor)).unwrap_or(norms.len());
    let truncated = usable < norms.len();
    let t_mid = 0.5 * (times[0] + times[usable.max(1) - 1]);
    let pts: Vec<(f64, f64)> =
        times[..usable].iter().zip(&norms[..usable]).filter(|(t, _)| **t >= t_mid).map(|(t, y)| (*t, y.ln())).collect();
    if pts.len() < 3 {
        return Err(Error::Accuracy("too few samples above the rounding floor for a decay fit".into()));
    }
    let n = pts.len() as f64;
    let (mt, my) = pts.iter().fold((0.0, 0.0), |(a, b), (t, y)| (a + t / n, b + y / n));
    let (mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0);
    for (t, y) in &pts {
        stt += (t - mt) * (t - mt);
        sty += (t - mt) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sty / stt;
    let ss_res: f64 = pts.iter().map(|(t, y)| (y - my - slope * (t - mt)).powi(2)).sum();
    let r2 = if syy <= 1e-30 * n { 1.0 } else { 1.0 - ss_res / syy };
    Ok(DecayFit { gamma: -slope, r2, samples: pts.len(), truncated })
}

/// ||G u||^2 for every state of a trajectory.
pub fn control_energy_density(tr: &Trajectory, profile: &ControlProfile) -> Vec<f64> {
    let n = tr.first().trunc_n();
    let s = galerkin_matrix(profile, n);
    tr.states
        .iter()
        .map(|u| {
            let v = DVector::from_column_slice(u.coeffs());
            (v.adjoint() * &s * &v)[(0, 0)].re
        })
        .collect()
}

/// | ||u(T)||^2 - ||u0||^2 + 2 int_0^T ||G u||^2 dt | for a simple-damping run (h = -G* u),
/// with Simpson in time on the stored samples.
pub fn energy_balance_check(tr: &Trajectory, profile: &ControlProfile) -> Result<f64> {
    let h = tr
        .uniform_step()
        .ok_or_else(|| Error::InvalidArgument("energy balance needs uniformly spaced samples".into()))?;
    let dens = control_energy_density(tr, profile);
    let integral = quad::simpson(&dens, h);
    Ok((tr.last().l2_norm().powi(2) - tr.first().l2_norm().powi(2) + 2.0 * integral).abs())
}

/// Running version of the balance defect at every sample (trapezoid on the prefix).
pub fn running_energy_defect(tr: &Trajectory, profile: &ControlProfile) -> Vec<f64> {
    let dens = control_energy_density(tr, profile);
    let e0 = tr.first().l2_norm().powi(2);
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(tr.len());
    for i in 0..tr.len() {
        if i > 0 {
            acc += 0.5 * (tr.times[i] - tr.times[i - 1]) * (dens[i] + dens[i - 1]);
        }
        out.push((tr.states[i].l2_norm().powi(2) - e0 + 2.0 * acc).abs());
    }
    out
}

/// Mode powers for the mean-zero list, used by callers that build their own generators.
pub fn mean_zero_powers(j: u32, n: usize) -> Vec<i128> {
    let all = mode_powers(j, n);
    all[..n].iter().chain(&all[n + 1..]).cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn damping_abscissa_is_lambda_zero_gain() {
        let p = ControlProfile::half_circle_bump();
        for j in 1..=2 {
            let g = build_l_lambda(&p, j, 6, 0.0, Assembly::Exact).unwrap();
            let a = damping_spectral_abscissa(&p, j, 6).unwrap();
            assert!((a - g.spectral_abscissa().unwrap()).abs() < 1e-12);
            assert!(a < 0.0);
        }
    }

    #[test]
    fn l_lambda_examples() {
        let p = ControlProfile::half_circle_bump();
        let g = build_l_lambda(&p, 1, 8, 0.0, Assembly::Exact).unwrap();
        assert_eq!(g.l_matrix, DMatrix::identity(16, 16));
        assert!(max_entry_diff(&g.k_matrix, &g.s_matrix) == 0.0);
        let c = ControlProfile::constant();
        for lambda in [0.1, 0.5, 2.0] {
            let g = build_l_lambda(&c, 2, 6, lambda, Assembly::Exact).unwrap();
            let v = (1.0 - (-2.0 * lambda).exp()) / (2.0 * lambda) / (4.0 * PI * PI);
            let expect = DMatrix::<Complex64>::identity(12, 12) * c64(v, 0.0);
            assert!(max_entry_diff(&g.l_matrix, &expect) < 1e-15);
        }
        assert!(build_l_lambda(&p, 1, 8, -1.0, Assembly::Exact).is_err());
    }

    #[test]
    fn exact_assembly_matches_quadrature() {
        let p = ControlProfile::half_circle_bump();
        for (j, n, lambda) in [(1, 4, 0.5), (1, 6, 1.0), (2, 3, 0.25)] {
            let exact = build_l_lambda(&p, j, n, lambda, Assembly::Exact).unwrap();
            let gl = build_l_lambda(&p, j, n, lambda, Assembly::Gauss { nodes: DEFAULT_QUAD_NODES }).unwrap();
            assert!(gl.quad_nodes.unwrap() >= DEFAULT_QUAD_NODES);
            assert!(max_entry_diff(&exact.l_matrix, &gl.l_matrix) < 1e-10);
            assert!(exact.l_hermitian_defect() <= 1e-12);
            assert!(exact.l_min_eigenvalue() > 0.0);
        }
        let too_big = build_l_lambda(&p, 2, 64, 0.5, Assembly::Gauss { nodes: 64 });
        assert!(matches!(too_big, Err(Error::Accuracy(_))));
    }

    #[test]
    fn apply_examples() {
        let c = ControlProfile::constant();
        let g = build_l_lambda(&c, 1, 4, 0.0, Assembly::Exact).unwrap();
        let phi = FourierField::basis(1, 4, 1).unwrap();
        let out = g.apply(&phi).unwrap();
        assert!(out.max_abs_diff(&phi.scaled(1.0 / (4.0 * PI * PI))) < 1e-15);
        let k = FourierField::constant(1, 4, 3.0).unwrap();
        assert_eq!(g.apply(&k).unwrap().l2_norm(), 0.0);
        let p = ControlProfile::half_circle_bump();
        let g = build_l_lambda(&p, 1, 8, 0.0, Assembly::Exact).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = FourierField::random_mean_zero(1, 8, 0.0, 1.0, &mut rng).unwrap();
        // K_0 u = G G u via the multiplication route
        let gu = crate::profile::apply_g_to(&p, &u, 8 + p.n_g()).unwrap();
        let ggu = crate::profile::apply_g_to(&p, &gu, 8).unwrap();
        assert!(g.apply(&u).unwrap().max_abs_diff(&ggu) < 1e-12);
        assert!(g.apply(&FourierField::zeros(1, 6).unwrap()).is_err());
    }

    #[test]
    fn closed_loop_constant_and_energy() {
        let p = ControlProfile::half_circle_bump();
        let g = build_l_lambda(&p, 1, 16, 0.0, Assembly::Exact).unwrap();
        let c = FourierField::constant(1, 16, 0.7).unwrap();
        let tr = closed_loop_linear_simulate(&c, &g, 1.0, 0.1).unwrap();
        assert!(tr.states.iter().all(|u| u.max_abs_diff(&c) < 1e-15));
        // smooth data: the density ||Gu||^2 oscillates at k^3 - m^3 for the excited modes
        let u0 = FourierField::trig(1, 16, &[(1, 1.0, 0.0), (2, 0.5, 0.0)]).unwrap();
        let tr = closed_loop_linear_simulate(&u0, &g, 2.0, 0.01).unwrap();
        let norms = tr.l2_norms();
        assert!(norms.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-13)));
        assert!((tr.final_time() - 2.0).abs() < 1e-15);
        let e = |dt: f64| {
            let tr = closed_loop_linear_simulate(&u0, &g, 2.0, dt).unwrap();
            energy_balance_check(&tr, &p).unwrap()
        };
        let (e1, e2) = (e(0.002), e(0.001));
        assert!(e2 < 1e-8 && e1 / e2 > 8.0, "{e1} {e2}");
        let zero = Trajectory {
            times: (0..11).map(|i| i as f64).collect(),
            states: vec![FourierField::zeros(1, 4).unwrap(); 11],
            forcing_log: None,
        };
        assert_eq!(energy_balance_check(&zero, &p).unwrap(), 0.0);
    }

    #[test]
    fn decay_fit_examples() {
        let phi = FourierField::basis(1, 2, 1).unwrap();
        let times: Vec<f64> = (0..50).map(|i| 0.1 * i as f64).collect();
        let tr = Trajectory {
            states: times.iter().map(|t| phi.scaled((-t).exp())).collect(),
            times: times.clone(),
            forcing_log: None,
        };
        let fit = decay_rate_estimate(&tr).unwrap();
        assert!((fit.gamma - 1.0).abs() < 1e-6 && fit.r2 > 1.0 - 1e-12);
        let tr = Trajectory { states: vec![phi.clone(); 50], times, forcing_log: None };
        let fit = decay_rate_estimate(&tr).unwrap();
        assert!(fit.gamma.abs() < 1e-12);
        let short = Trajectory::new(0.0, phi);
        assert!(decay_rate_estimate(&short).is_err());
    }

    #[test]
    fn closed_loop_rate_matches_spectrum() {
        let p = ControlProfile::half_circle_bump();
        let g = build_l_lambda(&p, 1, 16, 0.5, Assembly::Exact).unwrap();
        let abscissa = g.spectral_abscissa().unwrap();
        assert!(abscissa < 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u0 = FourierField::random_mean_zero(1, 16, 0.0, 1.0, &mut rng).unwrap();
        let tr = closed_loop_linear_simulate(&u0, &g, 40.0, 0.05).unwrap();
        let fit = decay_rate_estimate(&tr).unwrap();
        assert!(fit.gamma >= 0.45, "{fit:?}");
        assert!((fit.gamma + abscissa).abs() <= 0.05 * abscissa.abs(), "{fit:?} vs {abscissa}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn l_lambda_positive_hermitian(lambda in 0.01f64..5.0, start in 0.0f64..6.0, len in 0.5f64..6.0, n in 1usize..24) {
            let p = ControlProfile::bump(start, len).unwrap();
            let g = build_l_lambda(&p, 1, n, lambda, Assembly::Exact).unwrap();
            prop_assert!(g.l_hermitian_defect() <= 1e-12);
            prop_assert!(g.l_min_eigenvalue() > 0.0);
            prop_assert!(g.spectral_abscissa().unwrap() < 0.0);
        }
    }
}
