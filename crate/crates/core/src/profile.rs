//! The localized mean-preserving control operator G h = g (h - int g h).
use crate::error::{Error, Result};
use crate::fft;
use crate::spectral::{c64, FourierField};
use nalgebra::DMatrix;
use num_complex::Complex64;
use std::f64::consts::PI;

/// Coefficients of g below this (relative to g_0) are dropped.
const COEFF_TOL: f64 = 1e-14;
pub const MAX_PROFILE_MODES: usize = 4096;
pub const DEFAULT_POWER: u32 = 4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Shape {
    Constant,
    /// c (1 - cos(2 pi (x - a)/L))^power on (a, a + L).
    RaisedCosine {
        power: u32,
    },
}

impl Shape {
    pub fn tag(&self) -> &'static str {
        match self {
            Shape::Constant => "constant",
            Shape::RaisedCosine { .. } => "raised_cosine",
        }
    }
}

#[derive(Clone, Debug)]
pub struct ControlProfile {
    shape: Shape,
    omega_start: f64,
    omega_len: f64,
    /// normalization constant c (raised cosine) or 1/2pi (constant)
    amplitude: f64,
    /// g_n for n = -n_g..=n_g
    g_coeffs: Vec<Complex64>,
    tail_l2: f64,
}

/// Fourier coefficients of (1 - cos t)^p = sum_{m=-p}^{p} e_m e^{imt}.
fn raised_cosine_series(p: u32) -> Vec<f64> {
    let mut e = vec![1.0];
    for _ in 0..p {
        let mut next = vec![0.0; e.len() + 2];
        for (i, &v) in e.iter().enumerate() {
            next[i] += -0.5 * v;
            next[i + 1] += v;
            next[i + 2] += -0.5 * v;
        }
        e = next;
    }
    e
}

/// int_0^L e^{i w y} dy without cancellation at small w.
fn exp_integral(w: f64, len: f64) -> Complex64 {
    let h = 0.5 * w * len;
    let sinc = if h.abs() < 1e-8 { 1.0 - h * h / 6.0 } else { h.sin() / h };
    c64(h.cos(), h.sin()) * (len * sinc)
}

impl ControlProfile {
    pub fn build(omega_start: f64, omega_len: f64, shape: Shape) -> Result<Self> {
        if !(omega_len > 0.0) || omega_len > 2.0 * PI + 1e-12 || !omega_start.is_finite() {
            return Err(Error::InvalidArgument(format!("support length {omega_len} not in (0, 2pi]")));
        }
        let omega_start = omega_start.rem_euclid(2.0 * PI);
        match shape {
            Shape::Constant => {
                let g0 = c64(1.0 / (2.0 * PI).sqrt(), 0.0);
                Ok(ControlProfile {
                    shape,
                    omega_start: 0.0,
                    omega_len: 2.0 * PI,
                    amplitude: 1.0 / (2.0 * PI),
                    g_coeffs: vec![g0],
                    tail_l2: 0.0,
                })
            }
            Shape::RaisedCosine { power } => {
                if power == 0 || power > 32 {
                    return Err(Error::InvalidArgument(format!("raised-cosine power {power} not in 1..=32")));
                }
                let e = raised_cosine_series(power);
                let p = power as i64;
                let e0 = e[power as usize];
                let amplitude = 1.0 / (omega_len * e0);
                let pref = amplitude / (2.0 * PI).sqrt();
                let coeff = |n: i64| -> Complex64 {
                    let mut s = Complex64::default();
                    for m in -p..=p {
                        let w = 2.0 * PI * m as f64 / omega_len - n as f64;
                        s += e[(m + p) as usize] * exp_integral(w, omega_len);
                    }
                    s * pref * c64(0.0, -(n as f64) * omega_start).exp()
                };
                let all: Vec<Complex64> = (0..=MAX_PROFILE_MODES as i64).map(coeff).collect();
                let g0 = all[0].norm();
                let ng = (0..=MAX_PROFILE_MODES).rev().find(|&n| all[n].norm() > COEFF_TOL * g0).unwrap_or(0);
                let tail_l2 = (2.0 * all[ng + 1..].iter().map(|c| c.norm_sqr()).sum::<f64>()).sqrt();
                let mut g_coeffs = Vec::with_capacity(2 * ng + 1);
                for n in -(ng as i64)..=ng as i64 {
                    let c = all[n.unsigned_abs() as usize];
                    g_coeffs.push(if n < 0 { c.conj() } else { c });
                }
                // exact mean: int g = 1
                g_coeffs[ng] = c64(1.0 / (2.0 * PI).sqrt(), 0.0);
                Ok(ControlProfile { shape, omega_start, omega_len, amplitude, g_coeffs, tail_l2 })
            }
        }
    }

    pub fn constant() -> Self {
        Self::build(0.0, 2.0 * PI, Shape::Constant).expect("constant profile")
    }

    /// Default bump: raised cosine of power 4 on (a, a + L).
    pub fn bump(omega_start: f64, omega_len: f64) -> Result<Self> {
        Self::build(omega_start, omega_len, Shape::RaisedCosine { power: DEFAULT_POWER })
    }

    /// Bump on the half circle (0, pi).
    pub fn half_circle_bump() -> Self {
        Self::bump(0.0, PI).expect("half circle bump")
    }

    pub fn from_coeffs(omega_start: f64, omega_len: f64, shape: Shape, g_coeffs: Vec<Complex64>) -> Result<Self> {
        if g_coeffs.len() % 2 == 0 {
            return Err(Error::InvalidArgument("profile needs an odd number of coefficients".into()));
        }
        let ng = g_coeffs.len() / 2;
        let norm = g_coeffs[ng].re * (2.0 * PI).sqrt();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidArgument(format!("profile integral {norm} differs from 1")));
        }
        Ok(ControlProfile { shape, omega_start, omega_len, amplitude: f64::NAN, g_coeffs, tail_l2: 0.0 })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn omega(&self) -> (f64, f64) {
        (self.omega_start, self.omega_len)
    }

    pub fn n_g(&self) -> usize {
        self.g_coeffs.len() / 2
    }

    pub fn g_coeffs(&self) -> &[Complex64] {
        &self.g_coeffs
    }

    /// l2 norm of the discarded coefficient tail.
    pub fn tail_l2(&self) -> f64 {
        self.tail_l2
    }

    pub fn g(&self, n: i64) -> Complex64 {
        let ng = self.n_g() as i64;
        if n.abs() > ng {
            Complex64::default()
        } else {
            self.g_coeffs[(n + ng) as usize]
        }
    }

    /// Closed-form g(x).
    pub fn eval(&self, x: f64) -> f64 {
        match self.shape {
            Shape::Constant => 1.0 / (2.0 * PI),
            Shape::RaisedCosine { power } => {
                let y = (x - self.omega_start).rem_euclid(2.0 * PI);
                if y >= self.omega_len {
                    0.0
                } else {
                    self.amplitude * (1.0 - (2.0 * PI * y / self.omega_len).cos()).powi(power as i32)
                }
            }
        }
    }

    /// g(x) from the stored coefficient series on M points.
    pub fn series_on_grid(&self, m: usize) -> Vec<f64> {
        let m = m.max(2 * self.n_g() + 1);
        fft::to_grid(&self.g_coeffs, m).into_iter().map(|v| v.re).collect()
    }

    /// int g = sqrt(2pi) g_0.
    pub fn norm_check(&self) -> f64 {
        self.g(0).re * (2.0 * PI).sqrt()
    }

    /// (1/2pi) int g^2.
    pub fn mean_square(&self) -> f64 {
        self.g_coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>() / (2.0 * PI)
    }

    /// Profile reflected through x -> -x.
    pub fn reflect(&self) -> Self {
        let mut g_coeffs = self.g_coeffs.clone();
        g_coeffs.reverse();
        ControlProfile {
            omega_start: (-self.omega_start - self.omega_len).rem_euclid(2.0 * PI),
            g_coeffs,
            ..self.clone()
        }
    }

    /// Checks nonnegativity of the stored series on a grid, returns the minimum value.
    pub fn min_on_grid(&self, m: usize) -> f64 {
        self.series_on_grid(m).into_iter().fold(f64::INFINITY, f64::min)
    }
}

/// int g h = sum_n g_n h_{-n}.
fn pairing(profile: &ControlProfile, h: &[Complex64]) -> Complex64 {
    let n = (h.len() - 1) / 2;
    let m = n.min(profile.n_g()) as i64;
    (-m..=m).map(|k| profile.g(k) * h[(n as i64 - k) as usize]).sum()
}

/// P_{n_out} G h computed by collocation (exact for the stored g).
pub fn apply_g_to(profile: &ControlProfile, h: &FourierField, n_out: usize) -> Result<FourierField> {
    let c = pairing(profile, h.coeffs());
    let mut out = fft::product(profile.g_coeffs(), h.coeffs(), n_out);
    let n = n_out as i64;
    for (i, v) in out.iter_mut().enumerate() {
        *v -= c * profile.g(i as i64 - n);
    }
    out[n_out] = Complex64::default();
    FourierField::new_complex(h.order_j(), n_out, out)
}

/// G h truncated to the truncation of h.
pub fn apply_g(profile: &ControlProfile, h: &FourierField) -> FourierField {
    apply_g_to(profile, h, h.trunc_n()).expect("same truncation")
}

/// G*; G is symmetric in L2.
pub fn apply_g_adjoint(profile: &ControlProfile, v: &FourierField) -> FourierField {
    apply_g(profile, v)
}

/// (G phi_j, phi_n) = g_{n-j}/sqrt(2pi) - g_{-j} g_n.
pub fn coupling_matrix(profile: &ControlProfile, j: i64, n: i64) -> Complex64 {
    if j == 0 {
        // G annihilates constants: g_0 = 1/sqrt(2pi)
        return Complex64::default();
    }
    profile.g(n - j) / (2.0 * PI).sqrt() - profile.g(-j) * profile.g(n)
}

/// Range of n where G phi_k can be nonzero.
pub fn coupling_support(profile: &ControlProfile, k: i64) -> (i64, i64) {
    let ng = profile.n_g() as i64;
    ((-ng).min(k - ng), ng.max(k + ng))
}

/// beta_k = ||G phi_k||^2 = sum_n |G_{k,n}|^2.
pub fn beta(profile: &ControlProfile, k: i64) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidArgument("beta_0: the mean mode is not controlled".into()));
    }
    let (lo, hi) = coupling_support(profile, k);
    Ok((lo..=hi).map(|n| coupling_matrix(profile, k, n).norm_sqr()).sum())
}

/// Columns: G phi_k for k = -n..=n, rows: modes -(n+n_g)..=(n+n_g).
pub fn coupling_block(profile: &ControlProfile, n: usize) -> DMatrix<Complex64> {
    let width = (n + profile.n_g()) as i64;
    let rows = 2 * width as usize + 1;
    let cols = 2 * n + 1;
    DMatrix::from_fn(rows, cols, |r, c| coupling_matrix(profile, c as i64 - n as i64, r as i64 - width))
}

/// S_{mk} = (G phi_k, G phi_m) for |m|, |k| <= n: the matrix of P G G* P.
pub fn galerkin_matrix(profile: &ControlProfile, n: usize) -> DMatrix<Complex64> {
    let gam = coupling_block(profile, n);
    let mut s = gam.adjoint() * &gam;
    let dim = s.nrows();
    for i in 0..dim {
        for k in 0..i {
            let avg = 0.5 * (s[(i, k)] + s[(k, i)].conj());
            s[(i, k)] = avg;
            s[(k, i)] = avg.conj();
        }
        s[(i, i)] = c64(s[(i, i)].re, 0.0);
    }
    s
}
