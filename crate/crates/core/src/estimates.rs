//! Numerical checks of the elementary and harmonic-analysis estimates: eigenvalue gap,
//! the h_j polynomial identities, the resonance counting sum M and empirical L^4 / X^{0,b} ratios.
use crate::error::{Error, Result};
use crate::fft;
use crate::spectral::{check_order, dispersion_power, eigenvalue_gap};
use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::{BigRational, Ratio};
use num_traits::Signed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

// ---------------------------------------------------------------- gap

#[derive(Clone, Debug, Serialize)]
pub struct GapReport {
    pub j: u32,
    pub k_max: i64,
    pub checked: usize,
    pub holds: bool,
    pub counterexample: Option<i64>,
    /// min over checked k of |lambda_{k+1} - lambda_k| / k^2
    pub min_ratio: f64,
}

fn gap_big(j: u32, k: i64) -> BigInt {
    let p = 2 * j + 1;
    (BigInt::from(k + 1).pow(p) - BigInt::from(k).pow(p)).abs()
}

/// Exhaustive check of |lambda_{k+1} - lambda_k| >= k^2 for j+1 <= |k| <= k_max.
/// Exact: 128-bit arithmetic with a big-integer fallback where that overflows.
pub fn check_gap(j: u32, k_max: i64) -> Result<GapReport> {
    check_order(j, 0)?;
    let k0 = j as i64 + 1;
    if k_max < k0 {
        return Err(Error::InvalidArgument(format!("k_max = {k_max} below j+1 = {k0}")));
    }
    let mut rep = GapReport { j, k_max, checked: 0, holds: true, counterexample: None, min_ratio: f64::INFINITY };
    for a in k0..=k_max {
        for k in [a, -a] {
            let k2 = (k as i128 * k as i128) as u128;
            let (ok, ratio) = match eigenvalue_gap(j, k) {
                Ok(g) => (g >= k2, g as f64 / k2 as f64),
                Err(_) => {
                    let g = gap_big(j, k);
                    let ok = g >= BigInt::from(k2);
                    let r = num_traits::ToPrimitive::to_f64(&g).unwrap_or(f64::INFINITY) / k2 as f64;
                    (ok, r)
                }
            };
            rep.checked += 1;
            rep.min_ratio = rep.min_ratio.min(ratio);
            if !ok && rep.holds {
                rep.holds = false;
                rep.counterexample = Some(k);
            }
        }
    }
    Ok(rep)
}

// ---------------------------------------------------------------- h_j

/// h_j(x) = x^{2j+1} + (c - x)^{2j+1}.
pub fn hj_eval(j: u32, c: f64, x: f64) -> f64 {
    let p = 2 * j as i32 + 1;
    x.powi(p) + (c - x).powi(p)
}

fn binom(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Even expansion about c/2: sum_n C(2j+1, 2n) h_{j-n}(c/2) (x - c/2)^{2n}; returns (value, sum of |terms|).
pub fn hj_even_expansion(j: u32, c: f64, x: f64) -> (f64, f64) {
    let y = x - c / 2.0;
    let mut v = 0.0;
    let mut a = 0.0;
    for n in 0..=j {
        let t = binom(2 * j + 1, 2 * n) * hj_eval(j - n, c, c / 2.0) * y.powi(2 * n as i32);
        v += t;
        a += t.abs();
    }
    (v, a)
}

/// Factored form around the pair of points c/2 +- alpha; returns (value, scale).
pub fn hj_factored(j: u32, c: f64, x: f64, alpha: f64) -> (f64, f64) {
    let y = x - c / 2.0;
    let mut inner = 0.0;
    let mut inner_abs = 0.0;
    let mut tail = 0.0;
    for n in 0..=j {
        let w = binom(2 * j + 1, 2 * n) * hj_eval(j - n, c, c / 2.0);
        tail += w * alpha.powi(2 * n as i32);
        if n >= 1 {
            for l in 0..n {
                let t = w * y.powi((2 * n - 2 - 2 * l) as i32) * alpha.powi(2 * l as i32);
                inner += t;
                inner_abs += t.abs();
            }
        }
    }
    let pre = (y + alpha) * (y - alpha);
    (pre * inner + tail, (pre * inner_abs).abs().max(tail.abs()))
}

/// (y+a)(y-a) sum_{l<n} y^{2n-2-2l} a^{2l} + a^{2n}; returns (value, scale).
pub fn square_difference_form(n: u32, y: f64, a: f64) -> (f64, f64) {
    let mut s = 0.0;
    let mut sa = 0.0;
    for l in 0..n {
        let t = y.powi((2 * n - 2 - 2 * l) as i32) * a.powi(2 * l as i32);
        s += t;
        sa += t.abs();
    }
    let pre = (y + a) * (y - a);
    let tail = a.powi(2 * n as i32);
    (pre * s + tail, (pre * sa).abs().max(tail))
}

#[derive(Clone, Debug, Serialize)]
pub struct HjCheck {
    pub name: String,
    pub failures: usize,
    pub max_rel_err: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct HjReport {
    pub j: u32,
    pub trials: usize,
    pub tolerance: f64,
    pub checks: Vec<HjCheck>,
}

impl HjReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.failures == 0)
    }
}

pub const HJ_TOL: f64 = 1e-9;

pub const HJ_CHECKS: [&str; 8] = [
    "symmetry",
    "positivity",
    "critical_point",
    "convexity",
    "unique_minimum",
    "even_expansion",
    "factored_form",
    "square_difference",
];

/// Random-trial suite for the eight properties of h_j. Errors are relative to the largest
/// term magnitude in each identity.
pub fn hj_identity_suite(j: u32, trials: usize, seed: u64) -> Result<HjReport> {
    check_order(j, 0)?;
    let p = 2 * j as i32 + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut err = [0.0f64; 8];
    let mut fails = [0usize; 8];
    let mut record = |i: usize, e: f64, bad: bool| {
        err[i] = err[i].max(e);
        if bad || !(e <= HJ_TOL) {
            fails[i] += 1;
        }
    };
    for _ in 0..trials {
        let c = 10f64.powf(rng.random_range(-1.0..1.0));
        let y = c * rng.random_range(-2.0..2.0);
        let alpha = c * rng.random_range(0.0..2.0);
        let x = c / 2.0 + y;
        let h = hj_eval(j, c, x);
        let big = x.abs().powi(p).max((c - x).abs().powi(p));

        let hm = hj_eval(j, c, c / 2.0 - y);
        record(0, (h - hm).abs() / big, false);

        record(1, 0.0, !(h > 0.0));

        let d1 = (2 * j + 1) as f64 * ((c / 2.0).powi(2 * j as i32) - (c - c / 2.0).powi(2 * j as i32));
        record(2, d1.abs() / (p as f64 * c.powi(2 * j as i32)), false);

        let d2 = (p * (p - 1)) as f64 * (x.powi(p - 2) + (c - x).powi(p - 2));
        let d2_alt = (p * (p - 1)) as f64 * hj_eval(j - 1, c, x);
        let scale2 = (p * (p - 1)) as f64 * x.abs().powi(p - 2).max((c - x).abs().powi(p - 2)).max(1e-300);
        record(3, (d2 - d2_alt).abs() / scale2, !(d2 > 0.0));

        let hmin = hj_eval(j, c, c / 2.0);
        let strict = y.abs() > 1e-3 * c;
        record(4, 0.0, strict && !(h > hmin) || (!strict && h < hmin - HJ_TOL * big));

        let (ev, ea) = hj_even_expansion(j, c, x);
        record(5, (ev - h).abs() / ea.max(big), false);

        let (fv, fa) = hj_factored(j, c, x, alpha);
        record(6, (fv - h).abs() / fa.max(big), false);

        let mut e8 = 0.0f64;
        for n in 1..=j {
            let (sv, sa) = square_difference_form(n, y, alpha);
            let lhs = y.powi(2 * n as i32);
            e8 = e8.max((sv - lhs).abs() / sa.max(lhs).max(1e-300));
        }
        record(7, e8, false);
    }
    let checks = HJ_CHECKS
        .iter()
        .enumerate()
        .map(|(i, n)| HjCheck { name: n.to_string(), failures: fails[i], max_rel_err: err[i] })
        .collect();
    Ok(HjReport { j, trials, tolerance: HJ_TOL, checks })
}

// ---------------------------------------------------------------- counting sum M

/// (j+1) / (2(2j+1)) as an exact rational.
pub fn b_threshold(j: u32) -> Ratio<i64> {
    Ratio::new(j as i64 + 1, 2 * (2 * j as i64 + 1))
}

/// Exact comparison b > (j+1)/(2(2j+1)) on the binary value of b.
pub fn b_above_threshold(j: u32, b: f64) -> bool {
    let th = b_threshold(j);
    match BigRational::from_float(b) {
        Some(r) => r > BigRational::new(BigInt::from(*th.numer()), BigInt::from(*th.denom())),
        None => false,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StrichartzSum {
    pub value: f64,
    pub terms: usize,
    /// admissible k1 with |k1 - k/2| <= 1
    pub set_a: usize,
    /// admissible k1 with |k1 - k/2 + alpha| <= 1
    pub omega_plus: usize,
    /// admissible k1 with |k1 - k/2 - alpha| <= 1
    pub omega_minus: usize,
    /// positive root of h_j(k/2 + alpha) = tau when h_j(k/2) < tau
    pub alpha: Option<f64>,
}

fn validate_b(b: f64) -> Result<()> {
    if !(b.is_finite() && 4.0 * b > 1.0) {
        return Err(Error::InvalidArgument(format!("b = {b} must exceed 1/4")));
    }
    Ok(())
}

/// alpha > 0 with h_j(k/2 + alpha) = tau, if the minimum h_j(k/2) lies below tau.
pub fn resonance_offset(j: u32, k: f64, tau: f64) -> Option<f64> {
    let h = |a: f64| hj_eval(j, k, k / 2.0 + a);
    if !(h(0.0) < tau) {
        return None;
    }
    let mut hi = 1.0f64.max(k);
    while h(hi) < tau {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if h(mid) < tau {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

fn bracket_weight(y: f64, expo: f64) -> f64 {
    (1.0 + y * y).powf(0.5 * expo)
}

fn sum_with_table(
    j: u32,
    b: f64,
    tau: f64,
    k: i64,
    k1_lo: i64,
    k1_hi: i64,
    pw: &dyn Fn(i64) -> Result<i128>,
) -> Result<StrichartzSum> {
    let expo = 1.0 - 4.0 * b;
    let alpha = resonance_offset(j, k as f64, tau);
    let half = k as f64 / 2.0;
    let mut out = StrichartzSum { value: 0.0, terms: 0, set_a: 0, omega_plus: 0, omega_minus: 0, alpha };
    for k1 in k1_lo..=k1_hi {
        let r = pw(k1)?
            .checked_add(pw(k - k1)?)
            .ok_or_else(|| Error::Range(format!("resonance value at k={k}, k1={k1} overflows")))?;
        out.value += bracket_weight(tau - r as f64, expo);
        out.terms += 1;
        if (2 * k1 - k).abs() <= 2 {
            out.set_a += 1;
        }
        if let Some(a) = alpha {
            let d = k1 as f64 - half;
            if (d + a).abs() <= 1.0 {
                out.omega_plus += 1;
            }
            if (d - a).abs() <= 1.0 {
                out.omega_minus += 1;
            }
        }
    }
    Ok(out)
}

/// sum over k1 > 1, k - k1 > 1, |k1| <= k1_max of <tau - k1^{2j+1} - (k-k1)^{2j+1}>^{1-4b}.
pub fn strichartz_sum(j: u32, b: f64, tau: f64, k: i64, k1_max: i64) -> Result<StrichartzSum> {
    check_order(j, 0)?;
    validate_b(b)?;
    if k <= 1 {
        return Err(Error::InvalidArgument(format!("k = {k} must exceed 1")));
    }
    if !tau.is_finite() {
        return Err(Error::InvalidArgument("tau must be finite".into()));
    }
    let lo = 2.max(-k1_max);
    let hi = (k - 2).min(k1_max);
    sum_with_table(j, b, tau, k, lo, hi, &|m| dispersion_power(j, m))
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanRow {
    pub tau: f64,
    pub k: i64,
    pub m: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanResult {
    pub j: u32,
    pub b: f64,
    pub k_max: i64,
    pub sup: f64,
    pub argmax_tau: f64,
    pub argmax_k: i64,
    pub max_set_a: usize,
    pub max_omega: usize,
    pub cells: usize,
    /// per tau: the maximizing k and its sum
    pub rows: Vec<ScanRow>,
}

/// Grid for tau in [-tau_max, tau_max]: all resonance values k1^{2j+1} + (k-k1)^{2j+1} in range
/// (k <= k_max) plus `far_points` uniform points.
pub fn resonance_tau_grid(j: u32, k_max: i64, tau_max: f64, far_points: usize) -> Result<Vec<f64>> {
    check_order(j, 0)?;
    let mut g = Vec::new();
    'outer: for k in 4..=k_max {
        let mut first = true;
        for k1 in (2..=k / 2).rev() {
            let v = dispersion_power(j, k1)? + dispersion_power(j, k - k1)?;
            if v as f64 > tau_max {
                if first {
                    break 'outer;
                }
                break;
            }
            first = false;
            g.push(v as f64);
        }
    }
    if far_points >= 2 {
        for i in 0..far_points {
            g.push(-tau_max + 2.0 * tau_max * i as f64 / (far_points - 1) as f64);
        }
    }
    g.sort_by(|a, b| a.partial_cmp(b).unwrap());
    g.dedup();
    Ok(g)
}

/// max of strichartz_sum over tau in the grid and 2 <= k <= k_max. Parallel over tau with an
/// ordered reduction, so the result does not depend on the thread count.
pub fn sup_m_scan(j: u32, b: f64, tau_grid: &[f64], k_max: i64) -> Result<ScanResult> {
    check_order(j, 0)?;
    validate_b(b)?;
    if k_max < 2 {
        return Err(Error::InvalidArgument(format!("k_max = {k_max} must be at least 2")));
    }
    let table: Vec<i128> = (0..=k_max).map(|m| dispersion_power(j, m)).collect::<Result<_>>()?;
    let pw = |m: i64| -> Result<i128> { Ok(table[m as usize]) };
    let per_tau: Vec<Result<(ScanRow, usize, usize, usize)>> = tau_grid
        .par_iter()
        .map(|&tau| {
            let mut best = ScanRow { tau, k: 2, m: 0.0 };
            let (mut sa, mut so, mut cells) = (0, 0, 0);
            for k in 2..=k_max {
                let s = sum_with_table(j, b, tau, k, 2, k - 2, &pw)?;
                cells += 1;
                sa = sa.max(s.set_a);
                so = so.max(s.omega_plus).max(s.omega_minus);
                if s.value > best.m {
                    best = ScanRow { tau, k, m: s.value };
                }
            }
            Ok((best, sa, so, cells))
        })
        .collect();
    let mut res = ScanResult {
        j,
        b,
        k_max,
        sup: 0.0,
        argmax_tau: f64::NAN,
        argmax_k: 0,
        max_set_a: 0,
        max_omega: 0,
        cells: 0,
        rows: Vec::with_capacity(tau_grid.len()),
    };
    for r in per_tau {
        let (row, sa, so, cells) = r?;
        res.max_set_a = res.max_set_a.max(sa);
        res.max_omega = res.max_omega.max(so);
        res.cells += cells;
        if row.m > res.sup {
            res.sup = row.m;
            res.argmax_tau = row.tau;
            res.argmax_k = row.k;
        }
        res.rows.push(row);
    }
    Ok(res)
}

#[derive(Clone, Debug, Serialize)]
pub struct Plateau {
    pub base: ScanResult,
    pub doubled: ScanResult,
    /// doubled.sup / base.sup - 1
    pub growth: f64,
    pub admissible: bool,
}

/// Runs the scan on (k_max, tau_max) and on the doubled domain.
pub fn strichartz_plateau(j: u32, b: f64, k_max: i64, tau_max: f64, far_points: usize) -> Result<Plateau> {
    let g1 = resonance_tau_grid(j, k_max, tau_max, far_points)?;
    let g2 = resonance_tau_grid(j, 2 * k_max, 2.0 * tau_max, 2 * far_points - 1)?;
    let base = sup_m_scan(j, b, &g1, k_max)?;
    let doubled = sup_m_scan(j, b, &g2, 2 * k_max)?;
    let growth = doubled.sup / base.sup - 1.0;
    Ok(Plateau { base, doubled, growth, admissible: b_above_threshold(j, b) })
}

// ---------------------------------------------------------------- space-time samples

/// Contiguous run of lattice values for one spatial mode: tau_i = (start + i) * dtau.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub start: i64,
    pub values: Vec<Complex64>,
}

/// Space-time Fourier data f~(tau, k) on the lattice dtau * Z (symmetric about 0), modes
/// k = -n..n, each mode holding one contiguous segment. The physical function is
/// f(t,x) = sum_k sum_i dtau f~(tau_i,k) e^{i tau_i t} e^{ikx} / (2 pi), periodic in t with
/// period 2 pi / dtau.
#[derive(Clone, Debug, PartialEq)]
pub struct SpaceTimeSample {
    pub j: u32,
    pub n: usize,
    pub dtau: f64,
    pub segments: Vec<Segment>,
}

/// Largest admissible dtau is max(1, k_max^{2j+1}) / TAU_RESOLUTION.
pub const TAU_RESOLUTION: f64 = 8.0;

impl SpaceTimeSample {
    pub fn new(j: u32, n: usize, dtau: f64, segments: Vec<Segment>) -> Result<Self> {
        check_order(j, n)?;
        if !(dtau > 0.0 && dtau.is_finite()) {
            return Err(Error::InvalidArgument(format!("dtau = {dtau} must be positive")));
        }
        if segments.len() != 2 * n + 1 {
            return Err(Error::InvalidArgument(format!("{} segments for {} modes", segments.len(), 2 * n + 1)));
        }
        if segments.iter().flat_map(|s| &s.values).any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::InvalidArgument("non-finite sample value".into()));
        }
        Ok(Self { j, n, dtau, segments })
    }

    pub fn zeros(j: u32, n: usize, dtau: f64) -> Result<Self> {
        Self::new(j, n, dtau, vec![Segment { start: 0, values: vec![] }; 2 * n + 1])
    }

    /// Samples f(tau, k) on the lattice window `window(k) = (start, len)`.
    pub fn from_fn(
        j: u32,
        n: usize,
        dtau: f64,
        window: impl Fn(i64) -> (i64, usize),
        f: impl Fn(f64, i64) -> Complex64,
    ) -> Result<Self> {
        let segs = (-(n as i64)..=n as i64)
            .map(|k| {
                let (start, len) = window(k);
                Segment { start, values: (0..len).map(|i| f((start + i as i64) as f64 * dtau, k)).collect() }
            })
            .collect();
        Self::new(j, n, dtau, segs)
    }

    pub fn mode(&self, idx: usize) -> i64 {
        idx as i64 - self.n as i64
    }

    fn active(&self) -> impl Iterator<Item = (i64, &Segment)> {
        self.segments.iter().enumerate().filter(|(_, s)| !s.values.is_empty()).map(|(i, s)| (self.mode(i), s))
    }

    /// (min, max) lattice index over all stored values.
    pub fn lattice_range(&self) -> Option<(i64, i64)> {
        self.active().fold(None, |acc, (_, s)| {
            let (a, b) = (s.start, s.start + s.values.len() as i64 - 1);
            Some(match acc {
                None => (a, b),
                Some((lo, hi)) => (lo.min(a), hi.max(b)),
            })
        })
    }

    /// Number of temporal samples needed to represent the data without aliasing.
    pub fn m_t(&self) -> usize {
        self.lattice_range().map_or(0, |(a, b)| (b - a + 1) as usize)
    }

    pub fn t_span(&self) -> f64 {
        2.0 * PI / self.dtau
    }

    /// sum_k int |f~|^2 dtau = ||f||^2_{L^2} over one period.
    pub fn l2_norm_sq(&self) -> f64 {
        self.dtau * self.segments.iter().flat_map(|s| &s.values).map(|v| v.norm_sqr()).sum::<f64>()
    }

    fn k_max(&self) -> i64 {
        self.active().map(|(k, _)| k.abs()).max().unwrap_or(0)
    }
}

/// Raised cosine window (1 + cos(pi t))/2 on [-1, 1].
pub fn raised_cosine(t: f64) -> f64 {
    if t.abs() >= 1.0 {
        0.0
    } else {
        0.5 * (1.0 + (PI * t).cos())
    }
}

fn sinc_part(s: f64) -> f64 {
    if s.abs() < 1e-6 {
        1.0 - s * s / 6.0
    } else {
        s.sin() / s
    }
}

/// Unitary time transform (1/sqrt(2pi)) int eta(t) e^{-i sigma t} dt of the raised cosine.
pub fn raised_cosine_hat(sigma: f64) -> f64 {
    (sinc_part(sigma) + 0.5 * (sinc_part(sigma - PI) + sinc_part(sigma + PI))) / (2.0 * PI).sqrt()
}

/// eta(t) e^{i tau0 t} e^{i k0 x} / sqrt(2pi) with the raised cosine eta, sampled on
/// |tau - tau0| <= half_width.
pub fn windowed_tone(j: u32, n: usize, k0: i64, tau0: f64, dtau: f64, half_width: f64) -> Result<SpaceTimeSample> {
    if k0.unsigned_abs() as usize > n {
        return Err(Error::InvalidArgument(format!("mode {k0} outside truncation {n}")));
    }
    if dtau >= PI {
        return Err(Error::InvalidArgument("dtau must be below pi to hold a window of length 2".into()));
    }
    let lo = ((tau0 - half_width) / dtau).floor() as i64;
    let hi = ((tau0 + half_width) / dtau).ceil() as i64;
    SpaceTimeSample::from_fn(
        j,
        n,
        dtau,
        |k| {
            if k == k0 {
                (lo, (hi - lo + 1) as usize)
            } else {
                (0, 0)
            }
        },
        |tau, _| Complex64::new(raised_cosine_hat(tau - tau0), 0.0),
    )
}

/// (sum_k <k>^{2s} int <tau - k^{2j+1}>^{2b} |f~|^2 dtau)^{1/2}, lattice trapezoid in tau.
pub fn discrete_xsb_norm(sample: &SpaceTimeSample, s: f64, b: f64) -> Result<f64> {
    if sample.lattice_range().is_none() {
        return Ok(0.0);
    }
    let km = sample.k_max();
    let scale = (dispersion_power(sample.j, km)? as f64).max(1.0);
    if sample.dtau > scale / TAU_RESOLUTION {
        return Err(Error::Accuracy(format!("tau spacing {} too coarse for k_max^{{2j+1}} = {scale}", sample.dtau)));
    }
    let mut acc = 0.0;
    for (k, seg) in sample.active() {
        let kp = dispersion_power(sample.j, k)? as f64;
        let wk = (1.0 + (k * k) as f64).powf(s);
        let mut m = 0.0;
        for (i, v) in seg.values.iter().enumerate() {
            let tau = (seg.start + i as i64) as f64 * sample.dtau;
            m += bracket_weight(tau - kp, 2.0 * b) * v.norm_sqr();
        }
        acc += wk * m;
    }
    Ok((acc * sample.dtau).sqrt())
}

/// Largest physical grid (time x space points) l4_norm will evaluate directly.
pub const MAX_PHYSICAL_GRID: usize = 1 << 22;

fn physical_grid_dims(sample: &SpaceTimeSample) -> Option<(usize, usize, i64)> {
    let (lo, hi) = sample.lattice_range()?;
    let l = fft::pow2_at_least(2 * (hi - lo) as usize + 1);
    let m = fft::pow2_at_least(4 * sample.n + 1);
    Some((l, m, lo))
}

/// Physical values on the (period x circle) grid plus the cell area.
fn physical_values(sample: &SpaceTimeSample, l: usize, m: usize) -> (Vec<Complex64>, f64) {
    let mut g = vec![Complex64::new(0.0, 0.0); l * m];
    for (k, seg) in sample.active() {
        let col = k.rem_euclid(m as i64) as usize;
        for (i, v) in seg.values.iter().enumerate() {
            let row = (seg.start + i as i64).rem_euclid(l as i64) as usize;
            g[row * m + col] += v;
        }
    }
    let row_plan = fft::plan(m, true);
    for r in g.chunks_mut(m) {
        row_plan.process(r);
    }
    let col_plan = fft::plan(l, true);
    let mut buf = vec![Complex64::new(0.0, 0.0); l];
    for c in 0..m {
        for r in 0..l {
            buf[r] = g[r * m + c];
        }
        col_plan.process(&mut buf);
        for r in 0..l {
            g[r * m + c] = buf[r];
        }
    }
    let s = sample.dtau / (2.0 * PI);
    for v in g.iter_mut() {
        *v *= s;
    }
    let cell = (sample.t_span() / l as f64) * (2.0 * PI / m as f64);
    (g, cell)
}

/// ||f||_{L^4} by quadrature on a physical grid fine enough to integrate |f|^4 exactly
/// (for the periodized data).
pub fn l4_norm_quadrature(sample: &SpaceTimeSample) -> Result<f64> {
    let Some((l, m, _)) = physical_grid_dims(sample) else {
        return Ok(0.0);
    };
    if l * m > 4 * MAX_PHYSICAL_GRID {
        return Err(Error::Accuracy(format!("physical grid {l} x {m} too large")));
    }
    let (g, cell) = physical_values(sample, l, m);
    let s: f64 = g.iter().map(|v| v.norm_sqr() * v.norm_sqr()).sum();
    Ok((s * cell).powf(0.25))
}

/// Relative mismatch between the physical-grid L^2 norm and the lattice Parseval sum.
pub fn parseval_defect(sample: &SpaceTimeSample) -> Result<f64> {
    let Some((l, m, _)) = physical_grid_dims(sample) else {
        return Ok(0.0);
    };
    if l * m > 4 * MAX_PHYSICAL_GRID {
        return Err(Error::Accuracy(format!("physical grid {l} x {m} too large")));
    }
    let (g, cell) = physical_values(sample, l, m);
    let phys: f64 = g.iter().map(|v| v.norm_sqr()).sum::<f64>() * cell;
    let spec = sample.l2_norm_sq();
    Ok(if spec == 0.0 { phys } else { (phys - spec).abs() / spec })
}

/// ||f||_{L^4} = ||f^2||_{L^2}^{1/2} with f^2 formed by lattice convolution of the segments.
pub fn l4_norm_lattice(sample: &SpaceTimeSample) -> Result<f64> {
    let act: Vec<(i64, &Segment)> = sample.active().collect();
    if act.is_empty() {
        return Ok(0.0);
    }
    let maxlen = act.iter().map(|(_, s)| s.values.len()).max().unwrap();
    let lc = fft::pow2_at_least(2 * maxlen - 1);
    let fwd = fft::plan(lc, false);
    let spectra: Vec<Vec<Complex64>> = act
        .iter()
        .map(|(_, s)| {
            let mut b = s.values.clone();
            b.resize(lc, Complex64::new(0.0, 0.0));
            fwd.process(&mut b);
            b
        })
        .collect();
    let kmin = act.first().unwrap().0;
    let kmax = act.last().unwrap().0;
    let index_of = |k: i64| act.binary_search_by_key(&k, |(kk, _)| *kk).ok();
    let totals: Vec<f64> = (2 * kmin..=2 * kmax)
        .into_par_iter()
        .map(|mm| {
            // unordered pairs a <= b with a + b = mm, grouped by block offset
            let mut pairs: Vec<(i64, usize, usize, f64)> = Vec::new();
            for (ia, &(a, sa)) in act.iter().enumerate() {
                let b = mm - a;
                if b < a {
                    continue;
                }
                if let Some(ib) = index_of(b) {
                    let w = if a == b { 1.0 } else { 2.0 };
                    pairs.push((sa.start + act[ib].1.start, ia, ib, w));
                }
            }
            pairs.sort_by_key(|p| p.0);
            let inv = fft::plan(lc, true);
            let mut blocks: Vec<(i64, Vec<Complex64>)> = Vec::new();
            let mut i = 0;
            while i < pairs.len() {
                let off = pairs[i].0;
                let mut acc = vec![Complex64::new(0.0, 0.0); lc];
                let mut len = 0;
                while i < pairs.len() && pairs[i].0 == off {
                    let (_, ia, ib, w) = pairs[i];
                    for (z, (x, y)) in acc.iter_mut().zip(spectra[ia].iter().zip(&spectra[ib])) {
                        *z += x * y * w;
                    }
                    len = len.max(act[ia].1.values.len() + act[ib].1.values.len() - 1);
                    i += 1;
                }
                inv.process(&mut acc);
                acc.truncate(len);
                for v in acc.iter_mut() {
                    *v /= lc as f64;
                }
                blocks.push((off, acc));
            }
            merged_energy(&blocks)
        })
        .collect();
    let total: f64 = totals.iter().sum();
    let d = sample.dtau;
    Ok((total * d * d * d / (4.0 * PI * PI)).powf(0.25))
}

/// sum |c|^2 of the superposition of blocks sorted by offset.
fn merged_energy(blocks: &[(i64, Vec<Complex64>)]) -> f64 {
    let mut total = 0.0;
    let mut cur_start = 0i64;
    let mut cur: Vec<Complex64> = Vec::new();
    for (off, vals) in blocks {
        let cur_end = cur_start + cur.len() as i64;
        if cur.is_empty() || *off >= cur_end {
            total += cur.iter().map(|v| v.norm_sqr()).sum::<f64>();
            cur_start = *off;
            cur = vals.clone();
            continue;
        }
        let rel = (*off - cur_start) as usize;
        if rel + vals.len() > cur.len() {
            cur.resize(rel + vals.len(), Complex64::new(0.0, 0.0));
        }
        for (c, v) in cur[rel..].iter_mut().zip(vals) {
            *c += v;
        }
    }
    total + cur.iter().map(|v| v.norm_sqr()).sum::<f64>()
}

/// ||f||_{L^4(period x circle)}: physical-grid quadrature when the grid is affordable,
/// otherwise the equivalent lattice convolution.
pub fn l4_norm(sample: &SpaceTimeSample) -> Result<f64> {
    match physical_grid_dims(sample) {
        None => Ok(0.0),
        Some((l, m, _)) if l * m <= MAX_PHYSICAL_GRID => l4_norm_quadrature(sample),
        Some(_) => l4_norm_lattice(sample),
    }
}

// ---------------------------------------------------------------- L^4 ensembles

#[derive(Clone, Debug, Serialize)]
pub struct EnsembleOptions {
    /// members concentrated near the characteristic tau = k^{2j+1}
    pub free_members: usize,
    /// tau-width of the free packets
    pub free_width: f64,
    /// time-localized members of tau-width kappa N^{2j+1}, per kappa
    pub coherent_members: usize,
    pub kappas: Vec<f64>,
    pub seed: u64,
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        Self { free_members: 8, free_width: 4.0, coherent_members: 2, kappas: vec![0.05, 0.2, 1.0], seed: 7 }
    }
}

fn member_rng(seed: u64, n: usize, member: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(((n as u64) << 32) | member as u64);
    r
}

/// Mode amplitudes 1 + (g1 + i g2)/sqrt 2, g Gaussian.
fn gaussian_amplitudes(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
    (0..2 * n + 1)
        .map(|_| {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            Complex64::new(1.0 + a / 2f64.sqrt(), b / 2f64.sqrt())
        })
        .collect()
}

/// f~(tau,k) = a_k exp(-(tau - k^{2j+1})^2 / (2 w^2)) on the unit lattice.
pub fn free_packet(j: u32, n: usize, amps: &[Complex64], width: f64) -> Result<SpaceTimeSample> {
    let half = (10.0 * width).ceil() as i64;
    let pw: Vec<i64> = (-(n as i64)..=n as i64)
        .map(|k| dispersion_power(j, k).and_then(|v| i64::try_from(v).map_err(|_| Error::Range("k^p".into()))))
        .collect::<Result<_>>()?;
    SpaceTimeSample::from_fn(
        j,
        n,
        1.0,
        |k| (pw[(k + n as i64) as usize] - half, (2 * half + 1) as usize),
        |tau, k| {
            let d = tau - pw[(k + n as i64) as usize] as f64;
            amps[(k + n as i64) as usize] * (-(d * d) / (2.0 * width * width)).exp()
        },
    )
}

/// f~(tau,k) = a_k exp(-tau^2 / (2 W^2)), a single time-localized burst of width 1/W.
pub fn coherent_packet(j: u32, n: usize, amps: &[Complex64], width: f64) -> Result<SpaceTimeSample> {
    let dtau = width / 16.0;
    SpaceTimeSample::from_fn(
        j,
        n,
        dtau,
        |_| (-128, 257),
        |tau, k| amps[(k + n as i64) as usize] * (-(tau * tau) / (2.0 * width * width)).exp(),
    )
}

#[derive(Clone, Debug, Serialize)]
pub struct EnsembleResult {
    pub n: usize,
    pub labels: Vec<String>,
    pub l4: Vec<f64>,
    /// ratios[bi][member] = ||f||_{L^4} / ||f||_{X^{0,b}}
    pub ratios: Vec<Vec<f64>>,
    pub max_ratio: Vec<f64>,
}

/// L^4 / X^{0,b} ratios of a seeded ensemble at truncation n, for each b.
pub fn l4_ratio_ensemble(j: u32, n: usize, bs: &[f64], opts: &EnsembleOptions) -> Result<EnsembleResult> {
    check_order(j, n)?;
    let np = dispersion_power(j, n as i64)? as f64;
    let mut specs: Vec<(String, bool, f64, usize)> = Vec::new();
    for i in 0..opts.free_members {
        specs.push((format!("free{i}"), false, opts.free_width, i));
    }
    for (ki, &kappa) in opts.kappas.iter().enumerate() {
        for i in 0..opts.coherent_members {
            specs.push((format!("burst{kappa}-{i}"), true, kappa * np, 1000 + 100 * ki + i));
        }
    }
    let rows: Vec<Result<(f64, Vec<f64>)>> = specs
        .par_iter()
        .map(|(_, coherent, w, id)| {
            let mut rng = member_rng(opts.seed, n, *id);
            let amps = gaussian_amplitudes(&mut rng, n);
            let smp = if *coherent { coherent_packet(j, n, &amps, *w)? } else { free_packet(j, n, &amps, *w)? };
            let l4 = l4_norm(&smp)?;
            let r = bs.iter().map(|&b| Ok(l4 / discrete_xsb_norm(&smp, 0.0, b)?)).collect::<Result<Vec<f64>>>()?;
            Ok((l4, r))
        })
        .collect();
    let mut l4 = Vec::new();
    let mut ratios = vec![Vec::new(); bs.len()];
    for r in rows {
        let (a, rs) = r?;
        l4.push(a);
        for (bi, v) in rs.into_iter().enumerate() {
            ratios[bi].push(v);
        }
    }
    let max_ratio = ratios.iter().map(|v| v.iter().cloned().fold(0.0, f64::max)).collect();
    Ok(EnsembleResult { n, labels: specs.into_iter().map(|s| s.0).collect(), l4, ratios, max_ratio })
}

#[derive(Clone, Debug, Serialize)]
pub struct L4Trend {
    pub j: u32,
    pub ns: Vec<usize>,
    pub bs: Vec<f64>,
    /// max_ratio[bi][ni]
    pub max_ratio: Vec<Vec<f64>>,
}

impl L4Trend {
    /// (max - min) / min of the ensemble maximum across N.
    pub fn variation(&self, bi: usize) -> f64 {
        let v = &self.max_ratio[bi];
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(0.0, f64::max);
        (hi - lo) / lo
    }

    pub fn increasing(&self, bi: usize) -> bool {
        self.max_ratio[bi].windows(2).all(|w| w[1] > w[0])
    }
}

pub fn l4_ratio_trend(j: u32, ns: &[usize], bs: &[f64], opts: &EnsembleOptions) -> Result<L4Trend> {
    let mut max_ratio = vec![Vec::new(); bs.len()];
    for &n in ns {
        let e = l4_ratio_ensemble(j, n, bs, opts)?;
        for (bi, v) in e.max_ratio.into_iter().enumerate() {
            max_ratio[bi].push(v);
        }
    }
    Ok(L4Trend { j, ns: ns.to_vec(), bs: bs.to_vec(), max_ratio })
}
