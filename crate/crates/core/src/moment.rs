//! Exact controllability of the linear flow by the biorthogonal moment method.
//!
//! With p_k(t) = e^{i k^{2j+1} t} on L2(0,T) and its dual family q_k, the control
//! h(t,x) = sum_k h_k q_k(t) (G phi_k)(x), h_k = (e^{-lambda_k T} u1_k - u0_k)/beta_k,
//! steers u0 to u1 for u_t = Au + G h.
use crate::error::{Error, Result};
use crate::profile::{beta, coupling_matrix, coupling_support, galerkin_matrix, ControlProfile};
use crate::quad;
use crate::spectral::{c64, cis_phase, dispersion_power, mean_value, sobolev_norm, FourierField};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub const DEFAULT_COND_THRESHOLD: f64 = 1e12;
pub const GAUSS_NODES: usize = 32;
/// Largest (frequency x panel length) allowed in the Gauss panels.
const BETA_FLOOR: f64 = 1e-15;

/// K = {k : 1 <= |k| <= n_c}, ascending.
pub fn mode_set(n_c: usize) -> Vec<i64> {
    let n = n_c as i64;
    (-n..=n).filter(|&k| k != 0).collect()
}

/// int_0^T e^{i d t} dt in closed form.
pub fn exp_moment(t: f64, d: i128) -> Complex64 {
    if d == 0 {
        return c64(t, 0.0);
    }
    // (e^{i theta} - 1)/(i d) with e^{i theta} - 1 = 2i sin(theta/2) e^{i theta/2}
    let half = cis_phase(0.5 * t, d);
    half * (2.0 * half.im / d as f64)
}

/// Gram entries (m,k) = int_0^T p_k conj(p_m) dt.
pub fn gram_matrix(j: u32, t: f64, modes: &[i64]) -> Result<DMatrix<Complex64>> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("horizon T = {t} must be positive")));
    }
    if modes.contains(&0) {
        return Err(Error::InvalidArgument("mode set must exclude k = 0".into()));
    }
    let powers = modes.iter().map(|&k| dispersion_power(j, k)).collect::<Result<Vec<_>>>()?;
    let mut g = DMatrix::zeros(modes.len(), modes.len());
    for (a, &pm) in powers.iter().enumerate() {
        for (b, &pk) in powers.iter().enumerate() {
            let d = pk.checked_sub(pm).ok_or_else(|| Error::Range("dispersion difference overflows".into()))?;
            g[(a, b)] = exp_moment(t, d);
        }
    }
    Ok(g)
}

/// Dual coefficients C with q_j = sum_m C_{jm} p_m and int q_j conj(p_k) = delta_{jk},
/// i.e. C = (Gram^T)^{-1}; also returns the condition number of the Gram matrix.
pub fn dual_basis(gram: &DMatrix<Complex64>, threshold: f64) -> Result<(DMatrix<Complex64>, f64)> {
    let eig = gram.clone().symmetric_eigen();
    let (lo, hi) = eig.eigenvalues.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(cond <= threshold) {
        return Err(Error::IllPosedHorizon { cond, threshold });
    }
    let inv = gram.transpose().try_inverse().ok_or(Error::IllPosedHorizon { cond, threshold })?;
    Ok((inv, cond))
}

/// max_{j,k} |int q_j conj(p_k) - delta_{jk}| from the closed-form Gram.
pub fn biorthogonality_residual(gram: &DMatrix<Complex64>, dual: &DMatrix<Complex64>) -> f64 {
    let prod = dual * gram.transpose();
    let mut worst = 0.0f64;
    for r in 0..prod.nrows() {
        for c in 0..prod.ncols() {
            let target = if r == c { 1.0 } else { 0.0 };
            worst = worst.max((prod[(r, c)] - target).norm());
        }
    }
    worst
}

#[derive(Clone, Debug)]
pub struct MomentSystem {
    pub j: u32,
    pub horizon_t: f64,
    pub modes: Vec<i64>,
    pub powers: Vec<i128>,
    pub gram: DMatrix<Complex64>,
    pub dual_coeffs: DMatrix<Complex64>,
    pub cond_estimate: f64,
}

impl MomentSystem {
    pub fn new(j: u32, horizon_t: f64, n_c: usize) -> Result<Self> {
        Self::with_threshold(j, horizon_t, &mode_set(n_c), DEFAULT_COND_THRESHOLD)
    }

    pub fn with_threshold(j: u32, horizon_t: f64, modes: &[i64], threshold: f64) -> Result<Self> {
        let gram = gram_matrix(j, horizon_t, modes)?;
        let (dual_coeffs, cond_estimate) = dual_basis(&gram, threshold)?;
        let powers = modes.iter().map(|&k| dispersion_power(j, k)).collect::<Result<Vec<_>>>()?;
        Ok(MomentSystem { j, horizon_t, modes: modes.to_vec(), powers, gram, dual_coeffs, cond_estimate })
    }

    /// Replace the dual family (used to study perturbed or truncated constructions).
    pub fn with_dual(mut self, dual_coeffs: DMatrix<Complex64>) -> Self {
        self.dual_coeffs = dual_coeffs;
        self
    }

    /// Dual family built from the Gram diagonal only, q_k = p_k / T.
    pub fn diagonal_dual(&self) -> DMatrix<Complex64> {
        DMatrix::from_diagonal(&DVector::from_element(self.modes.len(), c64(1.0 / self.horizon_t, 0.0)))
    }

    pub fn n_c(&self) -> usize {
        self.modes.iter().map(|k| k.unsigned_abs() as usize).max().unwrap_or(0)
    }

    pub fn biorthogonality_residual(&self) -> f64 {
        biorthogonality_residual(&self.gram, &self.dual_coeffs)
    }

    pub fn index_of(&self, k: i64) -> Option<usize> {
        self.modes.iter().position(|&m| m == k)
    }

    /// p_l(t) for l in the mode set.
    pub fn exponentials(&self, t: f64) -> DVector<Complex64> {
        DVector::from_iterator(self.powers.len(), self.powers.iter().map(|&p| cis_phase(t, p)))
    }

    /// q_k(t) for k in the mode set.
    pub fn dual_values(&self, t: f64) -> DVector<Complex64> {
        &self.dual_coeffs * self.exponentials(t)
    }
}

/// Coefficients h_k aligned with `MomentSystem::modes`.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlSignal {
    pub h_coeffs: Vec<Complex64>,
}

impl ControlSignal {
    pub fn zero(system: &MomentSystem) -> Self {
        ControlSignal { h_coeffs: vec![Complex64::default(); system.modes.len()] }
    }

    pub fn scaled(&self, s: f64) -> Self {
        ControlSignal { h_coeffs: self.h_coeffs.iter().map(|h| h * s).collect() }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.h_coeffs.iter().zip(&other.h_coeffs).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// max_k |h_{-k} - conj(h_k)|.
    pub fn pairing_defect(&self, system: &MomentSystem) -> f64 {
        system
            .modes
            .iter()
            .enumerate()
            .filter_map(|(i, &k)| system.index_of(-k).map(|r| (self.h_coeffs[i] - self.h_coeffs[r].conj()).norm()))
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug)]
pub struct Synthesis {
    pub signal: ControlSignal,
    /// ||h||_{L2(0,T;H^s)}
    pub control_norm: f64,
    pub warnings: Vec<String>,
}

/// The moment formula h_k = (e^{-lambda_k T} u1_k - u0_k)/beta_k.
pub fn synthesize_control(
    u0: &FourierField,
    u1: &FourierField,
    profile: &ControlProfile,
    system: &MomentSystem,
    s: f64,
) -> Result<Synthesis> {
    let (m0, m1) = (mean_value(u0), mean_value(u1));
    if (m0 - m1).abs() > 1e-12 * m0.abs().max(m1.abs()).max(1.0) {
        return Err(Error::InvalidArgument(format!("means differ: [u0] = {m0}, [u1] = {m1}")));
    }
    let mut warnings = Vec::new();
    for (name, u) in [("u0", u0), ("u1", u1)] {
        let outside: f64 = u
            .modes()
            .filter(|&k| k != 0 && system.index_of(k).is_none())
            .map(|k| u.get(k).norm_sqr())
            .sum::<f64>()
            .sqrt();
        if outside > 0.0 {
            warnings.push(format!("{name} has L2 mass {outside:.3e} outside the mode set"));
        }
    }
    let mut h = Vec::with_capacity(system.modes.len());
    for (&k, &p) in system.modes.iter().zip(&system.powers) {
        let b = beta(profile, k)?;
        if b < BETA_FLOOR {
            return Err(Error::DegenerateProfile { k, value: b });
        }
        h.push((cis_phase(-system.horizon_t, p) * u1.get(k) - u0.get(k)) / b);
    }
    let signal = ControlSignal { h_coeffs: h };
    let control_norm = control_norm(&signal, system, profile, s);
    Ok(Synthesis { signal, control_norm, warnings })
}

/// H^s-weighted Gram of G phi_k: W_{ab} = sum_n <n>^{2s} G_{k_a,n} conj(G_{k_b,n}).
fn weighted_coupling_gram(system: &MomentSystem, profile: &ControlProfile, s: f64) -> DMatrix<Complex64> {
    let lo = system.modes.iter().map(|&k| coupling_support(profile, k).0).min().unwrap_or(0);
    let hi = system.modes.iter().map(|&k| coupling_support(profile, k).1).max().unwrap_or(0);
    let rows = (hi - lo + 1) as usize;
    let gam = DMatrix::from_fn(rows, system.modes.len(), |r, c| {
        let n = lo + r as i64;
        coupling_matrix(profile, system.modes[c], n) * (1.0 + (n * n) as f64).powf(0.5 * s)
    });
    gam.transpose() * gam.map(|z| z.conj())
}

/// ||h||_{L2(0,T;H^s)} in closed form: int q_a conj(q_b) = conj(C_{ba}).
pub fn control_norm(signal: &ControlSignal, system: &MomentSystem, profile: &ControlProfile, s: f64) -> f64 {
    let w = weighted_coupling_gram(system, profile, s);
    let c = &system.dual_coeffs;
    let h = &signal.h_coeffs;
    let mut acc = Complex64::default();
    for a in 0..h.len() {
        for b in 0..h.len() {
            acc += h[a] * h[b].conj() * c[(b, a)].conj() * w[(a, b)];
        }
    }
    acc.re.max(0.0).sqrt()
}

/// sup ||h||_{L2(0,T;H^s)} / (||u0||_{H^s} + ||u1||_{H^s}) over data supported in the mode set.
pub fn control_bound(system: &MomentSystem, profile: &ControlProfile, s: f64) -> Result<f64> {
    let w = weighted_coupling_gram(system, profile, s);
    let c = &system.dual_coeffs;
    let dim = system.modes.len();
    let mut scale = Vec::with_capacity(dim);
    for &k in &system.modes {
        scale.push(1.0 / (beta(profile, k)? * (1.0 + (k * k) as f64).powf(0.5 * s)));
    }
    let m = DMatrix::from_fn(dim, dim, |a, b| scale[a] * scale[b] * c[(b, a)].conj() * w[(a, b)]);
    let herm = (&m + m.adjoint()) * c64(0.5, 0.0);
    let top = herm.symmetric_eigen().eigenvalues.iter().cloned().fold(0.0, f64::max);
    Ok(top.sqrt())
}

/// h(t, .) = sum_k h_k q_k(t) G phi_k, truncated to |n| <= n_out.
pub fn evaluate_control(
    signal: &ControlSignal,
    system: &MomentSystem,
    profile: &ControlProfile,
    t: f64,
    n_out: usize,
) -> Result<FourierField> {
    if !(0.0..=system.horizon_t).contains(&t) {
        return Err(Error::InvalidArgument(format!("t = {t} outside [0, {}]", system.horizon_t)));
    }
    let q = system.dual_values(t);
    let mut out = FourierField::zeros(system.j, n_out)?;
    let n = n_out as i64;
    for (i, &k) in system.modes.iter().enumerate() {
        let w = signal.h_coeffs[i] * q[i];
        for m in -n..=n {
            let v = out.get(m) + w * coupling_matrix(profile, k, m);
            out.set(m, v);
        }
    }
    Ok(out)
}

/// Forcing with coefficients F_m(t) = sum_l a_{ml} e^{i l^{2j+1} t}, m = -n..=n.
#[derive(Clone, Debug)]
pub struct ExpSumForcing {
    pub j: u32,
    pub n: usize,
    pub freqs: Vec<i128>,
    pub amps: DMatrix<Complex64>,
}

impl ExpSumForcing {
    pub fn zero(j: u32, n: usize) -> Self {
        ExpSumForcing { j, n, freqs: Vec::new(), amps: DMatrix::zeros(2 * n + 1, 0) }
    }

    pub fn eval(&self, t: f64) -> Vec<Complex64> {
        let e = DVector::from_iterator(self.freqs.len(), self.freqs.iter().map(|&p| cis_phase(t, p)));
        (&self.amps * e).iter().cloned().collect()
    }

    pub fn is_zero(&self) -> bool {
        self.freqs.is_empty() || self.amps.iter().all(|a| a.norm() == 0.0)
    }

    /// The forcing of c * self.
    pub fn scaled(&self, c: f64) -> Self {
        ExpSumForcing { amps: &self.amps * c64(c, 0.0), ..self.clone() }
    }

    /// Forcing G h on the truncation |m| <= n for a moment control signal.
    pub fn from_signal(
        signal: &ControlSignal,
        system: &MomentSystem,
        profile: &ControlProfile,
        n: usize,
    ) -> Result<Self> {
        if n < system.n_c() {
            return Err(Error::InvalidArgument(format!("state truncation {n} below mode set {}", system.n_c())));
        }
        let s = galerkin_matrix(profile, n);
        let cols: Vec<usize> = system.modes.iter().map(|&k| (k + n as i64) as usize).collect();
        let dim = system.modes.len();
        let sk = DMatrix::from_fn(2 * n + 1, dim, |r, c| s[(r, cols[c])] * signal.h_coeffs[c]);
        let amps = sk * &system.dual_coeffs;
        Ok(ExpSumForcing { j: system.j, n, freqs: system.powers.clone(), amps })
    }
}

/// Phase tables for Gauss panels of fixed length: e^{i w (a + offset_i)} for many w.
struct PanelPhases {
    base: Vec<Complex64>,
    step: Vec<Complex64>,
    offsets: Vec<Vec<Complex64>>,
    freqs: Vec<i128>,
    panel: f64,
    count: usize,
}

impl PanelPhases {
    fn new(freqs: &[i128], panel: f64, nodes: &[f64]) -> Self {
        let offsets =
            freqs.iter().map(|&p| nodes.iter().map(|&x| cis_phase(0.5 * panel * (1.0 + x), p)).collect()).collect();
        PanelPhases {
            base: vec![c64(1.0, 0.0); freqs.len()],
            step: freqs.iter().map(|&p| cis_phase(panel, p)).collect(),
            offsets,
            freqs: freqs.to_vec(),
            panel,
            count: 0,
        }
    }

    /// Move to the next panel; re-anchor from exact phases periodically.
    fn advance(&mut self) {
        self.count += 1;
        if self.count % 512 == 0 {
            let a = self.count as f64 * self.panel;
            for (b, &p) in self.base.iter_mut().zip(&self.freqs) {
                *b = cis_phase(a, p);
            }
        } else {
            for (b, s) in self.base.iter_mut().zip(&self.step) {
                *b *= s;
            }
        }
    }

    fn at(&self, f: usize, node: usize) -> Complex64 {
        self.base[f] * self.offsets[f][node]
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ReachOptions {
    pub sobolev_s: f64,
    /// Upper bound on the Gauss panel length.
    pub max_panel: f64,
    pub nodes: usize,
    pub path_samples: usize,
}

impl Default for ReachOptions {
    fn default() -> Self {
        ReachOptions { sobolev_s: 0.0, max_panel: 0.05, nodes: GAUSS_NODES, path_samples: 200 }
    }
}

#[derive(Clone, Debug)]
pub struct ReachReport {
    pub residual_l2: f64,
    pub residual_hs: f64,
    pub terminal: FourierField,
    /// (t, ||u(t) - W(t - T) u1||)
    pub path: Vec<(f64, f64)>,
    pub panels: usize,
}

/// Largest phase w*H a Gauss-Legendre panel with `nodes` points integrates e^{iws} over to
/// about machine precision.
pub fn panel_phase(nodes: usize) -> f64 {
    const TABLE: [(usize, f64); 4] = [(8, 4.0), (16, 16.0), (24, 34.0), (32, 56.0)];
    if nodes < 8 {
        return 4.0 * (nodes as f64 / 8.0).powi(2);
    }
    if nodes >= 32 {
        return 56.0 * nodes as f64 / 32.0;
    }
    let i = TABLE.iter().rposition(|&(q, _)| q <= nodes).expect("nodes >= 8");
    let (q0, p0) = TABLE[i];
    let (q1, p1) = TABLE[i + 1];
    p0 + (p1 - p0) * (nodes - q0) as f64 / (q1 - q0) as f64
}

fn panel_layout(forcing: &ExpSumForcing, t_end: f64, opts: &ReachOptions) -> (usize, f64) {
    let n = forcing.n as i64;
    let pmax = dispersion_power(forcing.j, n).expect("validated truncation");
    let fmax = forcing.freqs.iter().map(|p| p.abs()).max().unwrap_or(0);
    let omega = (pmax + fmax) as f64;
    let mut h = opts.max_panel.min(t_end);
    if omega > 0.0 {
        h = h.min(panel_phase(opts.nodes) / omega);
    }
    let panels = (t_end / h).ceil().max(1.0) as usize;
    (panels, t_end / panels as f64)
}

/// Integrate u' = Au + F(t) on [0, T]: exact linear flow, Gauss-Legendre panels for the
/// Duhamel integral of the forcing.
pub fn integrate_forced_linear(
    u0: &FourierField,
    forcing: &ExpSumForcing,
    t_end: f64,
    opts: &ReachOptions,
    target: Option<&FourierField>,
) -> (FourierField, Vec<(f64, f64)>, usize) {
    let n = u0.trunc_n();
    assert_eq!(forcing.n, n, "forcing truncation must match the state");
    let rule = quad::gauss_legendre(opts.nodes);
    let (panels, h) = panel_layout(forcing, t_end, opts);
    let state_powers: Vec<i128> = u0.powers().iter().map(|p| -p).collect();
    let mut fp = PanelPhases::new(&forcing.freqs, h, &rule.0);
    let mut sp = PanelPhases::new(&state_powers, h, &rule.0);
    let mut acc = vec![Complex64::default(); 2 * n + 1];
    let pulled_target: Option<Vec<Complex64>> =
        target.map(|u1| u1.coeffs().iter().zip(u1.powers()).map(|(c, p)| c * cis_phase(-t_end, p)).collect());
    let stride = (panels / opts.path_samples.max(1)).max(1);
    let mut path = Vec::new();
    let record = |acc: &[Complex64], t: f64, path: &mut Vec<(f64, f64)>| {
        if let Some(tg) = &pulled_target {
            let d: f64 =
                acc.iter().zip(u0.coeffs()).zip(tg).map(|((a, u), g)| (u + a - g).norm_sqr()).sum::<f64>().sqrt();
            path.push((t, d));
        }
    };
    record(&acc, 0.0, &mut path);
    let nf = forcing.freqs.len();
    let mut fv = vec![Complex64::default(); 2 * n + 1];
    for panel in 0..panels {
        for (node, &w) in rule.1.iter().enumerate() {
            let w = 0.5 * h * w;
            fv.iter_mut().for_each(|v| *v = Complex64::default());
            for f in 0..nf {
                let e = fp.at(f, node);
                for (v, a) in fv.iter_mut().zip(forcing.amps.column(f).iter()) {
                    *v += a * e;
                }
            }
            for (m, a) in acc.iter_mut().enumerate() {
                *a += fv[m] * sp.at(m, node) * w;
            }
        }
        fp.advance();
        sp.advance();
        if (panel + 1) % stride == 0 || panel + 1 == panels {
            record(&acc, (panel + 1) as f64 * h, &mut path);
        }
    }
    let coeffs: Vec<Complex64> =
        u0.coeffs().iter().zip(&acc).zip(u0.powers()).map(|((u, a), p)| (u + a) * cis_phase(t_end, p)).collect();
    let terminal = FourierField::new_complex(u0.order_j(), n, coeffs).expect("finite state");
    (terminal, path, panels)
}

/// Forward simulation of the controlled linear flow and terminal residual against u1.
pub fn verify_reach(
    u0: &FourierField,
    u1: &FourierField,
    signal: &ControlSignal,
    system: &MomentSystem,
    profile: &ControlProfile,
    opts: &ReachOptions,
) -> Result<ReachReport> {
    let forcing = ExpSumForcing::from_signal(signal, system, profile, u0.trunc_n())?;
    let (terminal, path, panels) = integrate_forced_linear(u0, &forcing, system.horizon_t, opts, Some(u1));
    let diff = terminal.minus(u1);
    Ok(ReachReport {
        residual_l2: diff.l2_norm(),
        residual_hs: sobolev_norm(&diff, opts.sobolev_s),
        terminal,
        path,
        panels,
    })
}

/// Terminal-state response B (columns: unit change of h_k), by the same Gauss panels.
pub fn input_to_state(
    system: &MomentSystem,
    profile: &ControlProfile,
    n: usize,
    opts: &ReachOptions,
) -> Result<DMatrix<Complex64>> {
    let t_end = system.horizon_t;
    let probe = ExpSumForcing { j: system.j, n, freqs: system.powers.clone(), amps: DMatrix::zeros(2 * n + 1, 0) };
    let rule = quad::gauss_legendre(opts.nodes);
    let (panels, h) = panel_layout(&probe, t_end, opts);
    let state_powers: Vec<i128> = crate::spectral::mode_powers(system.j, n).iter().map(|p| -p).collect();
    let mut fp = PanelPhases::new(&system.powers, h, &rule.0);
    let mut sp = PanelPhases::new(&state_powers, h, &rule.0);
    let dim = system.modes.len();
    // J_{ml} = int e^{i(l^p - m^p)s} ds
    let mut jm = DMatrix::<Complex64>::zeros(2 * n + 1, dim);
    let mut el = vec![Complex64::default(); dim];
    for _ in 0..panels {
        for (node, &w) in rule.1.iter().enumerate() {
            let w = 0.5 * h * w;
            for (l, v) in el.iter_mut().enumerate() {
                *v = fp.at(l, node) * w;
            }
            for l in 0..dim {
                let col = jm.column_mut(l);
                let el_l = el[l];
                for (m, x) in col.into_iter().enumerate() {
                    *x += sp.at(m, node) * el_l;
                }
            }
        }
        fp.advance();
        sp.advance();
    }
    // I_{mk} = sum_l C_{kl} J_{ml}
    let i_mk = &jm * system.dual_coeffs.transpose();
    let s = galerkin_matrix(profile, n);
    let powers = crate::spectral::mode_powers(system.j, n);
    Ok(DMatrix::from_fn(2 * n + 1, dim, |m, c| {
        let k = (system.modes[c] + n as i64) as usize;
        cis_phase(t_end, powers[m]) * s[(m, k)] * i_mk[(m, c)]
    }))
}

/// One least-squares correction of the coefficients against the integrated input-to-state map.
pub fn refine_control(
    u0: &FourierField,
    u1: &FourierField,
    signal: &ControlSignal,
    system: &MomentSystem,
    profile: &ControlProfile,
    opts: &ReachOptions,
) -> Result<ControlSignal> {
    let report = verify_reach(u0, u1, signal, system, profile, opts)?;
    Ok(refine_from_report(u0, u1, signal, system, profile, opts, &report)?.0)
}

/// `refine_control` given the verification of `signal`; also returns the verification of the
/// signal it hands back.
pub fn refine_from_report(
    u0: &FourierField,
    u1: &FourierField,
    signal: &ControlSignal,
    system: &MomentSystem,
    profile: &ControlProfile,
    opts: &ReachOptions,
    report: &ReachReport,
) -> Result<(ControlSignal, ReachReport)> {
    let n = u0.trunc_n();
    let r = u1.minus(&report.terminal);
    let scale = u1.l2_norm().max(u0.l2_norm()).max(1e-300);
    let dead: Vec<i64> =
        r.modes().filter(|&k| system.index_of(k).is_none() && r.get(k).norm() > 1e-10 * scale).collect();
    if !dead.is_empty() {
        return Err(Error::Unreachable(dead));
    }
    let b = input_to_state(system, profile, n, opts)?;
    let svd = b.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let tol = 1e-12 * smax;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    if rank < system.modes.len() {
        let v_t = svd.v_t.as_ref().expect("v_t");
        let mut dead = Vec::new();
        for (i, &s) in svd.singular_values.iter().enumerate() {
            if s <= tol {
                let row = v_t.row(i);
                let (arg, _) =
                    row.iter().enumerate().fold(
                        (0, 0.0),
                        |acc, (c, z)| {
                            if z.norm() > acc.1 {
                                (c, z.norm())
                            } else {
                                acc
                            }
                        },
                    );
                dead.push(system.modes[arg]);
            }
        }
        dead.sort_unstable();
        dead.dedup();
        return Err(Error::Unreachable(dead));
    }
    let rhs = DVector::from_column_slice(r.coeffs());
    let delta = svd.solve(&rhs, tol).map_err(|e| Error::Invariant(e.to_string()))?;
    let mut h: Vec<Complex64> = signal.h_coeffs.iter().zip(delta.iter()).map(|(a, d)| a + d).collect();
    // restore the exact Hermitian pairing h_{-k} = conj(h_k)
    for i in 0..h.len() {
        if let Some(r) = system.index_of(-system.modes[i]) {
            if r > i {
                let avg = 0.5 * (h[i] + h[r].conj());
                h[i] = avg;
                h[r] = avg.conj();
            }
        }
    }
    let refined = ControlSignal { h_coeffs: h };
    let after = verify_reach(u0, u1, &refined, system, profile, opts)?;
    if after.residual_l2 <= report.residual_l2 {
        Ok((refined, after))
    } else {
        Ok((signal.clone(), report.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn gram_examples() {
        let g = gram_matrix(1, PI, &[-1, 1]).unwrap();
        assert!((g[(0, 0)].re - PI).abs() < 1e-15 && (g[(1, 1)].re - PI).abs() < 1e-15);
        assert!(g[(0, 1)].norm() < 1e-15 && g[(1, 0)].norm() < 1e-15);
        let g = gram_matrix(1, 1.0, &[-1, 1]).unwrap();
        // (m,k) = (1,-1): Delta = (-1)^3 - 1 = -2; (m,k) = (-1,1): Delta = 2
        let expect = (c64(0.0, 2.0).exp() - 1.0) / c64(0.0, 2.0);
        assert!((g[(0, 1)] - expect).norm() < 1e-15);
        assert!((g[(1, 0)] - expect.conj()).norm() < 1e-15);
        let g = gram_matrix(2, 0.7, &mode_set(3)).unwrap();
        for i in 0..6 {
            assert!((g[(i, i)] - c64(0.7, 0.0)).norm() < 1e-15);
        }
        assert!(gram_matrix(1, 0.0, &[1]).is_err());
        assert!(gram_matrix(1, 1.0, &[0, 1]).is_err());
        assert!(matches!(gram_matrix(5, 1.0, &[1 << 40]), Err(Error::Range(_))));
    }

    #[test]
    fn gram_against_quadrature() {
        let modes = mode_set(4);
        let t = 1.3;
        let g = gram_matrix(1, t, &modes).unwrap();
        let rule = quad::gauss_legendre(16);
        let panels = 400;
        for (a, &m) in modes.iter().enumerate() {
            for (b, &k) in modes.iter().enumerate() {
                let d = (k.pow(3) - m.pow(3)) as f64;
                let mut q = Complex64::default();
                for p in 0..panels {
                    let (lo, hi) = (p as f64 * t / panels as f64, (p + 1) as f64 * t / panels as f64);
                    for (x, w) in quad::gauss_on(lo, hi, &rule) {
                        q += c64(0.0, d * x).exp() * w;
                    }
                }
                assert!((q - g[(a, b)]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn dual_examples() {
        let g = gram_matrix(1, PI, &[-1, 1]).unwrap();
        let (c, cond) = dual_basis(&g, DEFAULT_COND_THRESHOLD).unwrap();
        assert!((c[(0, 0)].re - 1.0 / PI).abs() < 1e-15 && c[(0, 1)].norm() < 1e-15);
        assert!((cond - 1.0).abs() < 1e-12);
        let g1 = DMatrix::from_element(1, 1, c64(2.5, 0.0));
        let (c, _) = dual_basis(&g1, DEFAULT_COND_THRESHOLD).unwrap();
        assert!((c[(0, 0)].re - 0.4).abs() < 1e-16);
        let sys = MomentSystem::new(1, 1.0, 16).unwrap();
        assert!(sys.biorthogonality_residual() <= 1e-10);
        // a very short horizon with many modes is rejected
        let bad = MomentSystem::with_threshold(1, 1e-3, &mode_set(16), 1e6);
        assert!(matches!(bad, Err(Error::IllPosedHorizon { .. })));
    }

    #[test]
    fn dual_family_is_biorthogonal_by_quadrature() {
        let sys = MomentSystem::new(1, 1.0, 3).unwrap();
        let rule = quad::gauss_legendre(16);
        let panels = 200;
        let dim = sys.modes.len();
        let mut acc = DMatrix::<Complex64>::zeros(dim, dim);
        for p in 0..panels {
            let (lo, hi) = (p as f64 / panels as f64, (p + 1) as f64 / panels as f64);
            for (x, w) in quad::gauss_on(lo, hi, &rule) {
                let q = sys.dual_values(x);
                let e = sys.exponentials(x);
                for a in 0..dim {
                    for b in 0..dim {
                        acc[(a, b)] += q[a] * e[b].conj() * w;
                    }
                }
            }
        }
        for a in 0..dim {
            for b in 0..dim {
                let t = if a == b { 1.0 } else { 0.0 };
                assert!((acc[(a, b)] - t).norm() < 1e-11);
            }
        }
    }

    fn two_mode_target(eps: f64, n: usize) -> FourierField {
        let mut u1 = FourierField::zeros(1, n).unwrap();
        u1.set(1, c64(eps, 0.0));
        u1.set(-1, c64(eps, 0.0));
        u1
    }

    #[test]
    fn constant_profile_control_reaches_target() {
        let p = ControlProfile::constant();
        let sys = MomentSystem::new(1, PI, 1).unwrap();
        let u0 = FourierField::zeros(1, 1).unwrap();
        let eps = 0.01;
        let u1 = two_mode_target(eps, 1);
        let syn = synthesize_control(&u0, &u1, &p, &sys, 0.0).unwrap();
        // h_{+-1} = 4 pi^2 eps e^{-+ i pi}
        for (i, &k) in sys.modes.iter().enumerate() {
            let expect = c64(0.0, -(k as f64) * PI).exp() * (4.0 * PI * PI * eps);
            assert!((syn.signal.h_coeffs[i] - expect).norm() < 1e-12);
        }
        let rep = verify_reach(&u0, &u1, &syn.signal, &sys, &p, &ReachOptions::default()).unwrap();
        assert!(rep.residual_l2 <= 1e-8 * u1.l2_norm(), "{}", rep.residual_l2);
        let zero = synthesize_control(&u0, &u0, &p, &sys, 0.0).unwrap();
        assert!(zero.signal.h_coeffs.iter().all(|h| h.norm() == 0.0));
        let rep = verify_reach(&u0, &u0, &zero.signal, &sys, &p, &ReachOptions::default()).unwrap();
        assert_eq!(rep.residual_l2, 0.0);
    }

    fn random_pair(seed: u64, j: u32, n: usize, norm: f64) -> (FourierField, FourierField) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut u0 = FourierField::random_mean_zero(j, n, 0.0, norm, &mut rng).unwrap();
        let mut u1 = FourierField::random_mean_zero(j, n, 0.0, norm, &mut rng).unwrap();
        u0.set(0, c64(0.2, 0.0));
        u1.set(0, c64(0.2, 0.0));
        (u0, u1)
    }

    #[test]
    fn bump_control_small_case_and_refinement() {
        let p = ControlProfile::half_circle_bump();
        let sys = MomentSystem::new(1, 1.0, 6).unwrap();
        let (u0, u1) = random_pair(7, 1, 6, 0.1);
        let opts = ReachOptions::default();
        let syn = synthesize_control(&u0, &u1, &p, &sys, 0.0).unwrap();
        assert!(syn.warnings.is_empty());
        assert!(syn.signal.pairing_defect(&sys) < 1e-12 * syn.control_norm);
        let rep = verify_reach(&u0, &u1, &syn.signal, &sys, &p, &opts).unwrap();
        assert!(rep.residual_l2 < 1e-9 * u1.l2_norm(), "{}", rep.residual_l2);
        // exact signal is a fixed point of the refinement
        let refined = refine_control(&u0, &u1, &syn.signal, &sys, &p, &opts).unwrap();
        let scale = syn.signal.h_coeffs.iter().map(|h| h.norm()).fold(0.0, f64::max);
        assert!(refined.max_abs_diff(&syn.signal) < 1e-9 * scale);

        // a polluted dual family: worse residual, repaired by one refinement
        let polluted = sys.clone().with_dual(sys.diagonal_dual());
        let bad = synthesize_control(&u0, &u1, &p, &polluted, 0.0).unwrap();
        let bad_rep = verify_reach(&u0, &u1, &bad.signal, &polluted, &p, &opts).unwrap();
        assert!(bad_rep.residual_l2 > rep.residual_l2);
        let fixed = refine_control(&u0, &u1, &bad.signal, &polluted, &p, &opts).unwrap();
        let fixed_rep = verify_reach(&u0, &u1, &fixed, &polluted, &p, &opts).unwrap();
        assert!(fixed_rep.residual_l2 * 10.0 <= bad_rep.residual_l2);
        assert!(fixed_rep.residual_l2 < 1e-8 * u1.l2_norm());

        // half of the dual family dropped: strictly larger residual
        let mut half = sys.dual_coeffs.clone();
        for (i, &k) in sys.modes.iter().enumerate() {
            if k.abs() > 3 {
                half.row_mut(i).fill(Complex64::default());
            }
        }
        let trunc = sys.clone().with_dual(half);
        let rep_t = verify_reach(&u0, &u1, &syn.signal, &trunc, &p, &opts).unwrap();
        assert!(rep_t.residual_l2 > rep.residual_l2);
    }

    #[test]
    fn leakage_outside_mode_set_is_unreachable() {
        let p = ControlProfile::half_circle_bump();
        let sys = MomentSystem::new(1, 1.0, 3).unwrap();
        let (u0, mut u1) = random_pair(3, 1, 5, 0.1);
        let mut u0 = u0;
        for k in 4..=5 {
            u0.set(k, Complex64::default());
            u0.set(-k, Complex64::default());
        }
        u1.set(5, c64(0.05, 0.0));
        u1.set(-5, c64(0.05, 0.0));
        let syn = synthesize_control(&u0, &u1, &p, &sys, 0.0).unwrap();
        assert!(!syn.warnings.is_empty());
        match refine_control(&u0, &u1, &syn.signal, &sys, &p, &ReachOptions::default()) {
            Err(Error::Unreachable(modes)) => {
                assert!(modes.contains(&5) && modes.contains(&-5));
            }
            other => panic!("expected unreachable modes, got {other:?}"),
        }
    }

    #[test]
    fn evaluate_control_examples() {
        let p = ControlProfile::half_circle_bump();
        let sys = MomentSystem::new(1, 1.0, 4).unwrap();
        let z = evaluate_control(&ControlSignal::zero(&sys), &sys, &p, 0.3, 8).unwrap();
        assert_eq!(z.l2_norm(), 0.0);
        assert!(evaluate_control(&ControlSignal::zero(&sys), &sys, &p, 1.5, 8).is_err());
        let mut single = ControlSignal::zero(&sys);
        let i1 = sys.index_of(1).unwrap();
        single.h_coeffs[i1] = c64(0.7, -0.2);
        let f = evaluate_control(&single, &sys, &p, 0.0, 8).unwrap();
        let q = sys.dual_values(0.0)[i1];
        let gphi = crate::profile::apply_g_to(&p, &FourierField::basis(1, 4, 1).unwrap(), 8).unwrap();
        let w = single.h_coeffs[i1] * q;
        let expect: Vec<Complex64> = gphi.coeffs().iter().map(|c| c * w).collect();
        let expect = FourierField::new_complex(1, 8, expect).unwrap();
        assert!(f.max_abs_diff(&expect) < 1e-14);
        let (u0, u1) = random_pair(11, 1, 4, 0.1);
        let syn = synthesize_control(&u0, &u1, &p, &sys, 0.0).unwrap();
        for t in [0.0, 0.31, 0.77, 1.0] {
            let h = evaluate_control(&syn.signal, &sys, &p, t, 12).unwrap();
            assert!(h.hermitian_defect() <= 1e-10 * h.l2_norm().max(1.0));
            assert!(mean_value(&h).abs() < 1e-15);
        }
    }

    #[test]
    fn control_norm_matches_quadrature() {
        let p = ControlProfile::half_circle_bump();
        let sys = MomentSystem::new(1, 1.0, 3).unwrap();
        let (u0, u1) = random_pair(5, 1, 3, 0.1);
        let s = 1.0;
        let syn = synthesize_control(&u0, &u1, &p, &sys, s).unwrap();
        let n_out = 3 + p.n_g();
        let rule = quad::gauss_legendre(16);
        let panels = 400;
        let mut acc = 0.0;
        for k in 0..panels {
            let (lo, hi) = (k as f64 / panels as f64, (k + 1) as f64 / panels as f64);
            for (x, w) in quad::gauss_on(lo, hi, &rule) {
                let h = evaluate_control(&syn.signal, &sys, &p, x, n_out).unwrap();
                acc += w * sobolev_norm(&h, s).powi(2);
            }
        }
        assert!((acc.sqrt() - syn.control_norm).abs() < 1e-9 * syn.control_norm);
    }

    #[test]
    fn control_bound_decreases_with_horizon() {
        let p = ControlProfile::half_circle_bump();
        let mut last = f64::INFINITY;
        for t in [0.5, 1.0, 2.0, 4.0] {
            let sys = MomentSystem::new(1, t, 4).unwrap();
            let c = control_bound(&sys, &p, 0.0).unwrap();
            assert!(c <= last * (1.0 + 1e-9), "T={t}: {c} > {last}");
            last = c;
        }
    }

    #[test]
    fn mean_mismatch_is_rejected() {
        let p = ControlProfile::half_circle_bump();
        let sys = MomentSystem::new(1, 1.0, 2).unwrap();
        let u0 = FourierField::constant(1, 2, 1.0).unwrap();
        let u1 = FourierField::constant(1, 2, 2.0).unwrap();
        assert!(matches!(synthesize_control(&u0, &u1, &p, &sys, 0.0), Err(Error::InvalidArgument(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn synthesis_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let p = ControlProfile::half_circle_bump();
            let sys = MomentSystem::new(2, 0.8, 3).unwrap();
            let (u0, u1) = random_pair(seed, 2, 3, 0.1);
            let (v0, v1) = random_pair(seed ^ 0x55, 2, 3, 0.1);
            let h = |x0: &FourierField, x1: &FourierField| synthesize_control(x0, x1, &p, &sys, 0.0).unwrap().signal;
            let combo = h(&u0.scaled(a).plus(&v0.scaled(b)), &u1.scaled(a).plus(&v1.scaled(b)));
            let parts = h(&u0, &u1).h_coeffs.iter().zip(h(&v0, &v1).h_coeffs.iter()).map(|(x, y)| x * a + y * b).collect();
            let scale = combo.h_coeffs.iter().map(|z| z.norm()).fold(1.0, f64::max);
            let other = ControlSignal { h_coeffs: parts };
            prop_assert!(combo.max_abs_diff(&other) <= 1e-12 * scale);
        }

        #[test]
        fn controlled_mean_is_invariant(seed in any::<u64>()) {
            let p = ControlProfile::bump(0.5, 2.0).unwrap();
            let sys = MomentSystem::new(1, 1.0, 3).unwrap();
            let (u0, u1) = random_pair(seed, 1, 3, 0.1);
            let syn = synthesize_control(&u0, &u1, &p, &sys, 0.0).unwrap();
            let rep = verify_reach(&u0, &u1, &syn.signal, &sys, &p, &ReachOptions::default()).unwrap();
            prop_assert!((mean_value(&rep.terminal) - mean_value(&u0)).abs() <= 1e-12);
        }
    }
}
