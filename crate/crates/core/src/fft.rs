//! Cached FFT plans and band-limited collocation helpers.
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

thread_local! {
    static PLANS: RefCell<(FftPlanner<f64>, HashMap<(usize, bool), Arc<dyn Fft<f64>>>)> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

pub fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANS.with(|p| {
        let mut p = p.borrow_mut();
        let (planner, cache) = &mut *p;
        cache
            .entry((len, inverse))
            .or_insert_with(|| if inverse { planner.plan_fft_inverse(len) } else { planner.plan_fft_forward(len) })
            .clone()
    })
}

/// Smallest power of two that is at least `n`.
pub fn pow2_at_least(n: usize) -> usize {
    n.max(2).next_power_of_two()
}

/// Values u(x_m), x_m = 2 pi m / M, of u = sum_k c_k e^{ikx}/sqrt(2pi), c indexed k = -n..n.
pub fn to_grid(c: &[Complex64], m: usize) -> Vec<Complex64> {
    let n = (c.len() - 1) / 2;
    debug_assert!(m > 2 * n);
    let s = 1.0 / (2.0 * PI).sqrt();
    let mut buf = vec![Complex64::new(0.0, 0.0); m];
    for (i, &v) in c.iter().enumerate() {
        let k = i as i64 - n as i64;
        buf[k.rem_euclid(m as i64) as usize] = v * s;
    }
    plan(m, true).process(&mut buf);
    buf
}

/// Coefficients k = -n..n from M grid values (exact for band-limited data with M > 2n).
pub fn from_grid(mut vals: Vec<Complex64>, n: usize) -> Vec<Complex64> {
    let m = vals.len();
    plan(m, false).process(&mut vals);
    let s = (2.0 * PI).sqrt() / m as f64;
    (0..=2 * n)
        .map(|i| {
            let k = i as i64 - n as i64;
            vals[k.rem_euclid(m as i64) as usize] * s
        })
        .collect()
}

/// Exact truncated product: coefficients |k| <= n_out of a*b.
pub fn product(a: &[Complex64], b: &[Complex64], n_out: usize) -> Vec<Complex64> {
    let na = (a.len() - 1) / 2;
    let nb = (b.len() - 1) / 2;
    let m = pow2_at_least((na + nb + n_out + 1).max(2 * na.max(nb).max(n_out) + 1));
    let ga = to_grid(a, m);
    let gb = to_grid(b, m);
    let prod: Vec<Complex64> = ga.iter().zip(&gb).map(|(x, y)| x * y).collect();
    from_grid(prod, n_out)
}
