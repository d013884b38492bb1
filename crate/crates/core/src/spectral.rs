//! Fourier fields on the circle, the dispersion symbol and the free group W(t).
//!
//! Basis: phi_k(x) = e^{ikx}/sqrt(2pi), coefficient u_k = (1/sqrt(2pi)) int e^{-ikx} u dx.
use crate::error::{Error, Result};
use crate::fft;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;

pub const MAX_ORDER: u32 = 5;
pub const MAX_TRUNC: usize = 4096;

pub fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// k^{2j+1} in exact integer arithmetic.
pub fn dispersion_power(j: u32, k: i64) -> Result<i128> {
    (k as i128).checked_pow(2 * j + 1).ok_or_else(|| Error::Range(format!("{k}^{} overflows 128 bits", 2 * j + 1)))
}

/// lambda_k = i k^{2j+1}.
pub fn dispersion_eigenvalue(j: u32, k: i64) -> Result<Complex64> {
    Ok(c64(0.0, dispersion_power(j, k)? as f64))
}

/// |(k+1)^{2j+1} - k^{2j+1}|.
pub fn eigenvalue_gap(j: u32, k: i64) -> Result<u128> {
    let a = dispersion_power(j, k + 1)?;
    let b = dispersion_power(j, k)?;
    a.checked_sub(b).map(|d| d.unsigned_abs()).ok_or_else(|| Error::Range(format!("gap at k={k} overflows")))
}

const TWO_PI_1: f64 = 6.283185307179586;
const TWO_PI_2: f64 = 2.4492935982947064e-16;
const TWO_PI_3: f64 = -5.989539619436679e-33;

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// (hi, lo) - (bh, bl) in double-double.
fn dd_sub(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    let (s, e) = two_sum(a.0, -b.0);
    let e = e + (a.1 - b.1);
    two_sum(s, e)
}

/// x mod 2pi into [-pi, pi], with 2pi carried to ~160 bits.
fn reduce_2pi(x: f64) -> f64 {
    let mut r = (x, 0.0);
    for _ in 0..4 {
        if r.0.abs() <= PI {
            break;
        }
        let n = (r.0 / TWO_PI_1).round();
        r = dd_sub(r, two_prod(n, TWO_PI_1));
        r = dd_sub(r, two_prod(n, TWO_PI_2));
        r = dd_sub(r, (n * TWO_PI_3, 0.0));
    }
    r.0 + r.1
}

/// t * kp reduced modulo 2pi, accurate to a few ulps of 2pi even when t*kp is huge.
pub fn phase(t: f64, kp: i128) -> f64 {
    if kp == 0 || t == 0.0 {
        return 0.0;
    }
    let mut rest = kp;
    let mut acc = 0.0;
    for _ in 0..3 {
        if rest == 0 {
            break;
        }
        let part = rest as f64;
        rest -= part as i128;
        let (p, e) = two_prod(t, part);
        acc += reduce_2pi(p) + reduce_2pi(e);
    }
    reduce_2pi(acc)
}

/// e^{i t kp}.
pub fn cis_phase(t: f64, kp: i128) -> Complex64 {
    let th = phase(t, kp);
    c64(th.cos(), th.sin())
}

pub fn check_order(j: u32, n: usize) -> Result<()> {
    if j == 0 || j > MAX_ORDER {
        return Err(Error::Range(format!("order j={j} outside 1..={MAX_ORDER}")));
    }
    if n > MAX_TRUNC {
        return Err(Error::Range(format!("truncation N={n} above {MAX_TRUNC}")));
    }
    dispersion_power(j, n as i64).map(|_| ())
}

/// Truncated Fourier coefficient vector, index i <-> mode k = i - N.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierField {
    order_j: u32,
    trunc_n: usize,
    coeffs: Vec<Complex64>,
}

impl FourierField {
    pub fn zeros(j: u32, n: usize) -> Result<Self> {
        check_order(j, n)?;
        Ok(FourierField { order_j: j, trunc_n: n, coeffs: vec![Complex64::new(0.0, 0.0); 2 * n + 1] })
    }

    /// Real field; rejects coefficient vectors that break Hermitian symmetry.
    pub fn new(j: u32, n: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        let f = Self::new_complex(j, n, coeffs)?;
        let scale = f.l2_norm().max(1e-300);
        if f.hermitian_defect() > 1e-12 * scale {
            return Err(Error::InvalidArgument("coefficients are not Hermitian symmetric".into()));
        }
        Ok(f)
    }

    /// Complex-valued field (basis functions, adjoint tests); no symmetry check.
    pub fn new_complex(j: u32, n: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        check_order(j, n)?;
        if coeffs.len() != 2 * n + 1 {
            return Err(Error::InvalidArgument(format!("expected {} coefficients, got {}", 2 * n + 1, coeffs.len())));
        }
        if coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::InvalidArgument("non-finite coefficient".into()));
        }
        Ok(FourierField { order_j: j, trunc_n: n, coeffs })
    }

    /// phi_k.
    pub fn basis(j: u32, n: usize, k: i64) -> Result<Self> {
        let mut f = Self::zeros(j, n)?;
        if k.unsigned_abs() as usize > n {
            return Err(Error::InvalidArgument(format!("mode {k} outside |k| <= {n}")));
        }
        f.set(k, c64(1.0, 0.0));
        Ok(f)
    }

    /// u == c.
    pub fn constant(j: u32, n: usize, c: f64) -> Result<Self> {
        let mut f = Self::zeros(j, n)?;
        f.set(0, c64(c * (2.0 * PI).sqrt(), 0.0));
        Ok(f)
    }

    /// sum_k a_k cos(kx) + b_k sin(kx) for (k, a_k, b_k).
    pub fn trig(j: u32, n: usize, terms: &[(i64, f64, f64)]) -> Result<Self> {
        let mut f = Self::zeros(j, n)?;
        let s = (2.0 * PI).sqrt();
        for &(k, a, b) in terms {
            if k == 0 {
                f.add(0, c64(a * s, 0.0));
                continue;
            }
            let k = k.abs();
            if k as usize > n {
                return Err(Error::InvalidArgument(format!("mode {k} outside |k| <= {n}")));
            }
            // cos kx = sqrt(2pi)/2 (phi_k + phi_-k), sin kx = sqrt(2pi)/(2i) (phi_k - phi_-k)
            let ck = c64(a, -b) * (s / 2.0);
            f.add(k, ck);
            f.add(-k, ck.conj());
        }
        Ok(f)
    }

    /// Random real field with zero mean and coefficients ~ <k>^{-decay} Gaussian, scaled to L2 norm `norm`.
    pub fn random_mean_zero<R: Rng>(j: u32, n: usize, decay: f64, norm: f64, rng: &mut R) -> Result<Self> {
        Self::random_modes(j, n, n, decay, norm, rng)
    }

    /// Same as `random_mean_zero` but only modes 1 <= |k| <= active are excited.
    pub fn random_modes<R: Rng>(j: u32, n: usize, active: usize, decay: f64, norm: f64, rng: &mut R) -> Result<Self> {
        let mut f = Self::zeros(j, n)?;
        for k in 1..=active.min(n) as i64 {
            let w = (1.0 + (k * k) as f64).powf(-decay / 2.0);
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            let c = c64(re, im) * w;
            f.set(k, c);
            f.set(-k, c.conj());
        }
        let l2 = f.l2_norm();
        if l2 > 0.0 {
            f.scale_mut(norm / l2);
        }
        Ok(f)
    }

    pub fn order_j(&self) -> u32 {
        self.order_j
    }

    pub fn trunc_n(&self) -> usize {
        self.trunc_n
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    /// Modes k = -N..=N.
    pub fn modes(&self) -> impl Iterator<Item = i64> {
        let n = self.trunc_n as i64;
        -n..=n
    }

    fn idx(&self, k: i64) -> Option<usize> {
        let n = self.trunc_n as i64;
        (k.abs() <= n).then(|| (k + n) as usize)
    }

    /// Coefficient of phi_k; zero outside the truncation.
    pub fn get(&self, k: i64) -> Complex64 {
        self.idx(k).map(|i| self.coeffs[i]).unwrap_or_default()
    }

    pub fn set(&mut self, k: i64, v: Complex64) {
        let i = self.idx(k).expect("mode outside truncation");
        self.coeffs[i] = v;
    }

    fn add(&mut self, k: i64, v: Complex64) {
        let i = self.idx(k).expect("mode outside truncation");
        self.coeffs[i] += v;
    }

    pub fn scale_mut(&mut self, s: f64) {
        for c in &mut self.coeffs {
            *c *= s;
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut f = self.clone();
        f.scale_mut(s);
        f
    }

    fn assert_compatible(&self, other: &Self) {
        assert_eq!((self.order_j, self.trunc_n), (other.order_j, other.trunc_n), "incompatible fields");
    }

    pub fn plus(&self, other: &Self) -> Self {
        self.assert_compatible(other);
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect();
        FourierField { coeffs, ..*self }
    }

    pub fn minus(&self, other: &Self) -> Self {
        self.assert_compatible(other);
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect();
        FourierField { coeffs, ..*self }
    }

    /// Same function re-expressed with a different truncation (extra modes zero, missing modes dropped).
    pub fn retruncate(&self, n: usize) -> Result<Self> {
        let mut f = Self::zeros(self.order_j, n)?;
        let m = n.min(self.trunc_n) as i64;
        for k in -m..=m {
            f.set(k, self.get(k));
        }
        Ok(f)
    }

    /// (u, v) = int u conj(v).
    pub fn inner(&self, other: &Self) -> Complex64 {
        self.assert_compatible(other);
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b.conj()).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.assert_compatible(other);
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// max_k |u_{-k} - conj(u_k)|.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.trunc_n as i64;
        (0..=n).map(|k| (self.get(-k) - self.get(k).conj()).norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// Symmetrize to the nearest real field.
    pub fn realify(&mut self) {
        let n = self.trunc_n as i64;
        for k in 0..=n {
            let a = 0.5 * (self.get(k) + self.get(-k).conj());
            self.set(k, a);
            self.set(-k, a.conj());
        }
        let z = self.get(0);
        self.set(0, c64(z.re, 0.0));
    }

    /// Reflection x -> -x: u_k -> u_{-k}.
    pub fn reflect(&self) -> Self {
        let mut coeffs = self.coeffs.clone();
        coeffs.reverse();
        FourierField { coeffs, ..*self }
    }

    /// Remove the mean mode.
    pub fn mean_free(&self) -> Self {
        let mut f = self.clone();
        f.set(0, Complex64::default());
        f
    }

    /// Dispersion powers k^{2j+1} for k = -N..=N.
    pub fn powers(&self) -> Vec<i128> {
        mode_powers(self.order_j, self.trunc_n)
    }
}

/// k^{2j+1} for k = -n..=n (range already validated by the field constructors).
pub fn mode_powers(j: u32, n: usize) -> Vec<i128> {
    let n = n as i64;
    (-n..=n).map(|k| (k as i128).pow(2 * j + 1)).collect()
}

/// W(t) u: u_k -> e^{i t k^{2j+1}} u_k.
pub fn propagate(u: &FourierField, t: f64) -> FourierField {
    let mut out = u.clone();
    for (c, kp) in out.coeffs.iter_mut().zip(u.powers()) {
        *c *= cis_phase(t, kp);
    }
    out
}

/// (sum_k <k>^{2s} |u_k|^2)^{1/2}, <k> = (1+k^2)^{1/2}.
pub fn sobolev_norm(u: &FourierField, s: f64) -> f64 {
    u.modes().zip(u.coeffs()).map(|(k, c)| (1.0 + (k * k) as f64).powf(s) * c.norm_sqr()).sum::<f64>().sqrt()
}

/// [u] = (1/2pi) int u = u_0/sqrt(2pi).
pub fn mean_value(u: &FourierField) -> f64 {
    u.get(0).re / (2.0 * PI).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Conserved {
    pub mass: f64,
    pub energy: f64,
    pub hamiltonian: f64,
}

/// M = int u, E = int u^2, H = int (d^j u)^2/2 - u^3/6.
pub fn conserved_quantities(u: &FourierField) -> Conserved {
    let j = u.order_j() as i32;
    let mass = u.get(0).re * (2.0 * PI).sqrt();
    let energy = u.coeffs().iter().map(|c| c.norm_sqr()).sum::<f64>();
    let grad = 0.5 * u.modes().zip(u.coeffs()).map(|(k, c)| (k as f64).powi(2 * j) * c.norm_sqr()).sum::<f64>();
    // u^3 has bandwidth 3N; its mean is alias-free on M > 3N points
    let m = fft::pow2_at_least(3 * u.trunc_n() + 1);
    let vals = fft::to_grid(u.coeffs(), m);
    let cubic = vals.iter().map(|v| v.re.powi(3)).sum::<f64>() * 2.0 * PI / m as f64;
    Conserved { mass, energy, hamiltonian: grad - cubic / 6.0 }
}

/// Collocation grid x_m = 2 pi m / M.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridSpec {
    num_points: usize,
}

impl GridSpec {
    pub fn new(num_points: usize) -> Result<Self> {
        if num_points < 2 || !num_points.is_power_of_two() {
            return Err(Error::InvalidArgument(format!("grid size {num_points} is not a power of two >= 2")));
        }
        Ok(GridSpec { num_points })
    }

    /// Power-of-two grid with M >= 2(2N+1), safe for quadratic products.
    pub fn dealiased(n: usize) -> Self {
        GridSpec { num_points: fft::pow2_at_least(2 * (2 * n + 1)) }
    }

    pub fn num_points(&self) -> usize {
        self.num_points
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.num_points).map(|m| 2.0 * PI * m as f64 / self.num_points as f64).collect()
    }
}

/// u(x_m) on the grid.
pub fn synthesize(u: &FourierField, grid: &GridSpec) -> Result<Vec<f64>> {
    let needed = 2 * u.trunc_n() + 1;
    if grid.num_points < needed {
        return Err(Error::Aliasing { grid: grid.num_points, needed });
    }
    Ok(fft::to_grid(u.coeffs(), grid.num_points).into_iter().map(|v| v.re).collect())
}

/// Coefficients |k| <= N from real grid samples.
pub fn analyze(samples: &[f64], j: u32, n: usize) -> Result<FourierField> {
    let needed = 2 * n + 1;
    if samples.len() < needed {
        return Err(Error::Aliasing { grid: samples.len(), needed });
    }
    let vals = samples.iter().map(|&x| c64(x, 0.0)).collect();
    let mut f = FourierField::new_complex(j, n, fft::from_grid(vals, n))?;
    if samples.len() == 2 * n {
        // the Nyquist mode of an even grid is not separable; keep the field real
        f.realify();
    }
    Ok(f)
}

/// Exact truncated product u*v (dealiased collocation).
pub fn multiply(u: &FourierField, v: &FourierField) -> FourierField {
    u.assert_compatible(v);
    let coeffs = fft::product(u.coeffs(), v.coeffs(), u.trunc_n());
    FourierField { coeffs, ..*u }
}

/// d/dx.
pub fn derivative(u: &FourierField) -> FourierField {
    let mut out = u.clone();
    for (c, k) in out.coeffs.iter_mut().zip(u.modes()) {
        *c *= c64(0.0, k as f64);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn eigenvalues_and_gaps() {
        assert_eq!(dispersion_eigenvalue(1, 0).unwrap(), c64(0.0, 0.0));
        assert_eq!(dispersion_eigenvalue(1, 2).unwrap(), c64(0.0, 8.0));
        assert_eq!(dispersion_eigenvalue(2, 3).unwrap(), c64(0.0, 243.0));
        assert_eq!(dispersion_power(1, -2).unwrap(), -8);
        assert_eq!(eigenvalue_gap(1, 1).unwrap(), 7);
        assert_eq!(eigenvalue_gap(2, 3).unwrap(), 781);
        assert_eq!(eigenvalue_gap(1, 0).unwrap(), 1);
        assert!(matches!(dispersion_power(5, 1 << 20), Err(Error::Range(_))));
        assert!(matches!(eigenvalue_gap(5, i64::MAX / 2), Err(Error::Range(_))));
    }

    #[test]
    fn phase_reduction_matches_direct() {
        for &(t, kp) in &[(0.3, 7i128), (2.0, 1_000_003), (-1.25, 123_456_789_012), (1e-3, -98765)] {
            let direct = (t * kp as f64).rem_euclid(2.0 * PI);
            let ours = phase(t, kp).rem_euclid(2.0 * PI);
            let d = (direct - ours).abs();
            assert!(d.min(2.0 * PI - d) < 1e-6 * (t * kp as f64).abs().max(1.0) * 1e-9 + 1e-12);
        }
        // linearity in kp of the reduced phase, far beyond where t*kp as f64 keeps any digits
        for &(t, base) in &[(0.731, 1i128 << 70), (-3.3, 987_654_321_987_654_321_987i128)] {
            for q in [2i128, 3, 7] {
                let lhs = phase(t, q * base);
                let rhs = reduce_2pi(q as f64 * phase(t, base));
                let d = (lhs - rhs).rem_euclid(2.0 * PI);
                assert!(d.min(2.0 * PI - d) < 1e-13, "q={q} d={d}");
            }
        }
    }

    #[test]
    fn propagate_examples() {
        let p1 = FourierField::basis(1, 4, 1).unwrap();
        assert!(propagate(&p1, 2.0 * PI).max_abs_diff(&p1) < 1e-14);
        let p2 = FourierField::basis(1, 4, 2).unwrap();
        assert!(propagate(&p2, PI).max_abs_diff(&p2) < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = FourierField::random_mean_zero(2, 8, 1.0, 1.0, &mut rng).unwrap();
        assert_eq!(propagate(&u, 0.0), u);
        let v = propagate(&u, 0.77);
        assert!(v.hermitian_defect() < 1e-15);
    }

    #[test]
    fn norms_and_means() {
        let p1 = FourierField::basis(1, 3, 1).unwrap();
        assert!((sobolev_norm(&p1, 0.0) - 1.0).abs() < 1e-15);
        assert!((sobolev_norm(&p1, 1.0) - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(sobolev_norm(&FourierField::zeros(1, 3).unwrap(), 2.5), 0.0);
        assert_eq!(mean_value(&FourierField::zeros(1, 3).unwrap()), 0.0);
        assert!((mean_value(&FourierField::constant(1, 3, 1.0).unwrap()) - 1.0).abs() < 1e-15);
        let cosx = FourierField::trig(1, 3, &[(1, 1.0, 0.0)]).unwrap();
        assert_eq!(mean_value(&cosx), 0.0);
    }

    fn quad_oracle(f: impl Fn(f64) -> f64) -> f64 {
        // periodic trapezoid on a fine grid, independent of the spectral code
        let m = 1 << 14;
        (0..m).map(|i| f(2.0 * PI * i as f64 / m as f64)).sum::<f64>() * 2.0 * PI / m as f64
    }

    #[test]
    fn conserved_examples() {
        let cosx = FourierField::trig(1, 5, &[(1, 1.0, 0.0)]).unwrap();
        let q = conserved_quantities(&cosx);
        assert!(q.mass.abs() < 1e-15);
        assert!((q.energy - PI).abs() < 1e-13);
        assert!((q.hamiltonian - PI / 2.0).abs() < 1e-13);
        assert!((q.energy - quad_oracle(|x| x.cos().powi(2))).abs() < 1e-12);
        let h_oracle = quad_oracle(|x| 0.5 * x.sin().powi(2) - x.cos().powi(3) / 6.0);
        assert!((q.hamiltonian - h_oracle).abs() < 1e-12);

        assert_eq!(
            conserved_quantities(&FourierField::zeros(2, 4).unwrap()),
            Conserved { mass: 0.0, energy: 0.0, hamiltonian: 0.0 }
        );
        let c = 0.7;
        let q = conserved_quantities(&FourierField::constant(1, 4, c).unwrap());
        assert!((q.mass - 2.0 * PI * c).abs() < 1e-13);
        assert!((q.energy - 2.0 * PI * c * c).abs() < 1e-13);
        assert!((q.hamiltonian + 2.0 * PI / 6.0 * c.powi(3)).abs() < 1e-13);

        // mixed field against quadrature, j = 2 gradient term
        let u = FourierField::trig(2, 6, &[(0, 0.2, 0.0), (1, 0.5, -0.3), (3, 0.1, 0.4)]).unwrap();
        let q = conserved_quantities(&u);
        let f = |x: f64| 0.2 + 0.5 * x.cos() - 0.3 * x.sin() + 0.1 * (3.0 * x).cos() + 0.4 * (3.0 * x).sin();
        let fxx = |x: f64| -0.5 * x.cos() + 0.3 * x.sin() - 0.9 * (3.0 * x).cos() - 3.6 * (3.0 * x).sin();
        assert!((q.mass - quad_oracle(f)).abs() < 1e-12);
        assert!((q.energy - quad_oracle(|x| f(x).powi(2))).abs() < 1e-12);
        let h = quad_oracle(|x| 0.5 * fxx(x).powi(2) - f(x).powi(3) / 6.0);
        assert!((q.hamiltonian - h).abs() < 1e-12);
    }

    #[test]
    fn synthesis_round_trip() {
        let g = GridSpec::new(64).unwrap();
        let one = FourierField::constant(1, 8, 1.0).unwrap();
        for v in synthesize(&one, &g).unwrap() {
            assert!((v - 1.0).abs() < 1e-14);
        }
        let samples: Vec<f64> = g.points().iter().map(|x| x.cos()).collect();
        let f = analyze(&samples, 1, 8).unwrap();
        let expect = (2.0 * PI).sqrt() / 2.0;
        assert!((f.get(1).re - expect).abs() < 1e-14 && (f.get(-1).re - expect).abs() < 1e-14);
        assert!(f.get(2).norm() < 1e-14);
        let small = GridSpec::new(16).unwrap();
        assert!(matches!(synthesize(&one, &small), Err(Error::Aliasing { .. })));
        assert!(GridSpec::new(24).is_err());
        assert!(GridSpec::dealiased(8).num_points() >= 34);
    }

    #[test]
    fn multiply_matches_trig_identity() {
        let c = FourierField::trig(1, 6, &[(1, 1.0, 0.0)]).unwrap();
        let s = FourierField::trig(1, 6, &[(2, 0.0, 1.0)]).unwrap();
        // cos x sin 2x = (sin 3x + sin x)/2
        let p = multiply(&c, &s);
        let e = FourierField::trig(1, 6, &[(3, 0.0, 0.5), (1, 0.0, 0.5)]).unwrap();
        assert!(p.max_abs_diff(&e) < 1e-14);
        let d = derivative(&c);
        let e = FourierField::trig(1, 6, &[(1, 0.0, -1.0)]).unwrap();
        assert!(d.max_abs_diff(&e) < 1e-15);
    }

    #[test]
    fn constructor_validation() {
        assert!(FourierField::zeros(0, 4).is_err());
        assert!(FourierField::zeros(6, 4).is_err());
        assert!(FourierField::zeros(1, 5000).is_err());
        assert!(FourierField::zeros(5, 4096).is_err());
        assert!(FourierField::new(1, 1, vec![c64(0.0, 0.0); 2]).is_err());
        assert!(FourierField::new(1, 1, vec![c64(1.0, 0.0), c64(0.0, 0.0), c64(0.0, 0.0)]).is_err());
    }

    fn field_strategy() -> impl Strategy<Value = FourierField> {
        (1u32..=3, 1usize..24, any::<u64>()).prop_map(|(j, n, seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut u = FourierField::random_mean_zero(j, n, 0.5, 1.0, &mut rng).unwrap();
            u.set(0, c64(rand::Rng::random_range(&mut rng, -1.0..1.0), 0.0));
            u
        })
    }

    proptest! {
        #[test]
        fn unitarity(u in field_strategy(), t in -50.0f64..50.0) {
            let v = propagate(&u, t);
            prop_assert!((sobolev_norm(&v, 0.0) - sobolev_norm(&u, 0.0)).abs() <= 1e-12 * u.l2_norm());
            prop_assert_eq!(v.get(0), u.get(0));
            let (a, b) = (conserved_quantities(&u), conserved_quantities(&v));
            prop_assert_eq!(a.mass, b.mass);
            prop_assert!((a.energy - b.energy).abs() <= 1e-13 * a.energy.max(1.0));
        }

        #[test]
        fn group_law_dyadic(u in field_strategy(), a in -4096i32..4096, b in -4096i32..4096) {
            let (t, s) = (a as f64 / 256.0, b as f64 / 256.0);
            let lhs = propagate(&propagate(&u, t), s);
            let rhs = propagate(&u, t + s);
            prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-12 * u.l2_norm());
        }

        #[test]
        fn synth_analyze_round_trip(u in field_strategy()) {
            let g = GridSpec::dealiased(u.trunc_n());
            let back = analyze(&synthesize(&u, &g).unwrap(), u.order_j(), u.trunc_n()).unwrap();
            prop_assert!(back.max_abs_diff(&u) <= 1e-12 * u.l2_norm().max(1.0));
        }

        #[test]
        fn gap_condition(j in 1u32..=5, k in 2i64..2000) {
            prop_assume!(k >= j as i64 + 1);
            let g = eigenvalue_gap(j, k).unwrap();
            prop_assert!(g >= (k * k) as u128);
            prop_assert!(eigenvalue_gap(j, k + 1).unwrap() > g);
            let gneg = eigenvalue_gap(j, -k).unwrap();
            prop_assert!(gneg >= (k * k) as u128);
        }
    }
}
