//! Per-subcommand parameter records. Each record is both a set of clap flags and a TOML
//! document; flags override file values, then defaults fill the rest and ranges are checked.
use crate::CliError;
use clap::Args;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Flags shared by every subcommand.
#[derive(Args, Clone, Debug)]
pub struct Common {
    /// TOML file with the parameter record (keys as in the long flags, `-` replaced by `_`).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Parent of the per-run output directory.
    #[arg(long, default_value = "runs")]
    pub outdir: PathBuf,
}

pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

macro_rules! overlay {
    ($flags:expr, $file:expr; $($f:ident),* $(,)?) => {
        $( if $flags.$f.is_none() { $flags.$f = $file.$f.clone(); } )*
    };
}

macro_rules! defaults {
    ($c:expr; $($f:ident = $v:expr),* $(,)?) => {
        $( if $c.$f.is_none() { $c.$f = Some($v.into()); } )*
    };
}

fn field_err(name: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Usage(format!("field '{name}': {msg}"))
}

fn positive(name: &str, v: Option<f64>) -> Result<(), CliError> {
    match v {
        Some(x) if !(x > 0.0 && x.is_finite()) => Err(field_err(name, format!("must be positive and finite, got {x}"))),
        _ => Ok(()),
    }
}

fn nonneg(name: &str, v: Option<f64>) -> Result<(), CliError> {
    match v {
        Some(x) if !(x >= 0.0 && x.is_finite()) => Err(field_err(name, format!("must be nonnegative, got {x}"))),
        _ => Ok(()),
    }
}

fn order(v: Option<u32>) -> Result<(), CliError> {
    match v {
        Some(j) if !(1..=5).contains(&j) => Err(field_err("j", format!("must lie in 1..=5, got {j}"))),
        _ => Ok(()),
    }
}

fn int_range(name: &str, v: Option<usize>, lo: usize, hi: usize) -> Result<(), CliError> {
    match v {
        Some(x) if x < lo || x > hi => Err(field_err(name, format!("must lie in {lo}..={hi}, got {x}"))),
        _ => Ok(()),
    }
}

fn required<T: Clone>(name: &str, v: &Option<T>) -> Result<T, CliError> {
    v.clone().ok_or_else(|| field_err(name, "required"))
}

fn initial(name: &str, v: &Option<String>) -> Result<(), CliError> {
    match v.as_deref() {
        Some("cos" | "random") | None => Ok(()),
        Some(other) => Err(field_err(name, format!("expected 'cos' or 'random', got '{other}'"))),
    }
}

// ------------------------------------------------------------------ simulate

#[derive(Args, Serialize, Deserialize, Default, Clone, Debug)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub j: Option<u32>,
    /// Truncation: modes |k| <= N.
    #[arg(long = "N")]
    #[serde(rename = "N", skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[arg(long = "T")]
    #[serde(rename = "T", skip_serializing_if = "Option::is_none")]
    pub t_final: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// Keep every stride-th step in the trajectory table.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,
    /// 1 = u u_x included, 0 = linear flow.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nonlinear: Option<u8>,
    /// 'cos' or 'random' (ignored when u0_file is set).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u0: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u0_file: Option<PathBuf>,
    /// L2 norm of random data.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub norm: Option<f64>,
    /// Spectral decay exponent of random data.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decay: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Largest |k| written to the trajectory table (modes 0..=save_modes).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub save_modes: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sobolev_s: Option<f64>,
    /// Relative energy drift allowed by the verdict.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy_tol: Option<f64>,
}

impl SimulateConfig {
    pub fn resolve(mut self, file: Self) -> Result<Self, CliError> {
        overlay!(self, file; j, n, t_final, dt, stride, nonlinear, u0, u0_file, norm, decay, seed, save_modes, sobolev_s, energy_tol);
        defaults!(self; j = 1u32, n = 32usize, t_final = 10.0, dt = 1e-3, nonlinear = 1u8, u0 = "cos",
            norm = 1.0, decay = 1.0, save_modes = 4usize, sobolev_s = 1.0, energy_tol = 1e-8);
        order(self.j)?;
        int_range("N", self.n, 1, 4096)?;
        positive("T", self.t_final)?;
        positive("dt", self.dt)?;
        int_range("stride", self.stride, 1, usize::MAX)?;
        int_range("nonlinear", self.nonlinear.map(usize::from), 0, 1)?;
        initial("u0", &self.u0)?;
        positive("norm", self.norm)?;
        nonneg("decay", self.decay)?;
        int_range("save_modes", self.save_modes, 0, self.n.unwrap())?;
        positive("energy_tol", self.energy_tol)?;
        if self.u0_file.is_none() && self.u0.as_deref() == Some("random") {
            required("seed", &self.seed)?;
        }
        Ok(self)
    }
}

// ------------------------------------------------------------------ control

#[derive(Args, Serialize, Deserialize, Default, Clone, Debug)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub j: Option<u32>,
    /// State truncation (defaults to `modes`).
    #[arg(long = "N")]
    #[serde(rename = "N", skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Controlled modes +-1..+-modes.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub modes: Option<usize>,
    #[arg(long = "T")]
    #[serde(rename = "T", skip_serializing_if = "Option::is_none")]
    pub t_final: Option<f64>,
    /// 'bump', 'constant', 'bump:START:LEN' or a profile CSV.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profile: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u0_file: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u1_file: Option<PathBuf>,
    /// L2 norm of random end states.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub norm: Option<f64>,
    /// Common mean of random end states.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sobolev_s: Option<f64>,
    /// 1 = one least-squares correction pass.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refine: Option<u8>,
    /// Relative residual allowed (default 1e-3, or 1e-6 with refine).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
}

impl ControlConfig {
    pub fn resolve(mut self, file: Self) -> Result<Self, CliError> {
        overlay!(self, file; j, n, modes, t_final, profile, u0_file, u1_file, norm, mean, seed, sobolev_s, refine, tol);
        defaults!(self; j = 1u32, modes = 16usize, t_final = 1.0, profile = "bump", norm = 0.1, mean = 0.0,
            sobolev_s = 0.0, refine = 0u8);
        if self.n.is_none() {
            self.n = self.modes;
        }
        if self.tol.is_none() {
            self.tol = Some(if self.refine == Some(1) { 1e-6 } else { 1e-3 });
        }
        order(self.j)?;
        int_range("modes", self.modes, 1, 256)?;
        int_range("N", self.n, self.modes.unwrap(), 4096)?;
        positive("T", self.t_final)?;
        positive("norm", self.norm)?;
        if !self.mean.unwrap().is_finite() {
            return Err(field_err("mean", "must be finite"));
        }
        int_range("refine", self.refine.map(usize::from), 0, 1)?;
        positive("tol", self.tol)?;
        if self.u0_file.is_none() || self.u1_file.is_none() {
            required("seed", &self.seed)?;
        }
        Ok(self)
    }
}

// ------------------------------------------------------------------ stabilize

#[derive(Args, Serialize, Deserialize, Default, Clone, Debug)]
#[serde(deny_unknown_fields)]
pub struct StabilizeConfig {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub j: Option<u32>,
    #[arg(long = "N")]
    #[serde(rename = "N", skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Target decay rate of the gain; 0 selects simple damping f = -G G* u.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profile: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u0: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u0_file: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub norm: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long = "T")]
    #[serde(rename = "T", skip_serializing_if = "Option::is_none")]
    pub t_final: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// 1 = nonlinear closed loop.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nonlinear: Option<u8>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sobolev_s: Option<f64>,
    /// Minimum R^2 of the log-linear fit.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r2_min: Option<f64>,
}

impl StabilizeConfig {
    pub fn resolve(mut self, file: Self) -> Result<Self, CliError> {
        overlay!(self, file; j, n, lambda, profile, u0, u0_file, norm, seed, t_final, dt, nonlinear, sobolev_s, r2_min);
        defaults!(self; j = 1u32, n = 64usize, lambda = 0.5, profile = "bump", u0 = "random", norm = 1.0,
            t_final = 20.0, dt = 0.02, nonlinear = 0u8, sobolev_s = 1.0);
        if self.r2_min.is_none() {
            self.r2_min = Some(if self.nonlinear == Some(1) || self.lambda == Some(0.0) { 0.95 } else { 0.99 });
        }
        order(self.j)?;
        int_range("N", self.n, 1, 512)?;
        nonneg("lambda", self.lambda)?;
        initial("u0", &self.u0)?;
        positive("norm", self.norm)?;
        positive("T", self.t_final)?;
        positive("dt", self.dt)?;
        int_range("nonlinear", self.nonlinear.map(usize::from), 0, 1)?;
        match self.r2_min {
            Some(r) if !(0.0..=1.0).contains(&r) => {
                return Err(field_err("r2_min", format!("must lie in [0, 1], got {r}")))
            }
            _ => {}
        }
        if self.u0_file.is_none() && self.u0.as_deref() == Some("random") {
            required("seed", &self.seed)?;
        }
        Ok(self)
    }
}

// ------------------------------------------------------------------ global-control

#[derive(Args, Serialize, Deserialize, Default, Clone, Debug)]
#[serde(deny_unknown_fields)]
pub struct GlobalConfig {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub j: Option<u32>,
    #[arg(long = "N")]
    #[serde(rename = "N", skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profile: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u0_file: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u1_file: Option<PathBuf>,
    /// L2 norm of the mean-free part of random end states.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub norm: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// Deviation from the mean at which damping hands over to local control.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stabilize_tol: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_local: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_phase_time: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tracking_lambda: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub picard_tol: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub picard_max_iter: Option<usize>,
    /// Verification residual allowed.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reversal_tol: Option<f64>,
}

impl GlobalConfig {
    pub fn resolve(mut self, file: Self) -> Result<Self, CliError> {
        overlay!(self, file; j, n, profile, u0_file, u1_file, norm, mean, seed, dt, stabilize_tol, t_local,
            max_phase_time, tracking_lambda, picard_tol, picard_max_iter, tol, reversal_tol);
        defaults!(self; j = 1u32, n = 16usize, profile = "bump", norm = 1.0, mean = 0.0, dt = 1e-3,
            stabilize_tol = 0.01, t_local = 1.0, max_phase_time = 5000.0, tracking_lambda = 1.0,
            picard_tol = 1e-8, picard_max_iter = 10usize, tol = 1e-4, reversal_tol = 1e-10);
        order(self.j)?;
        int_range("N", self.n, 1, 256)?;
        positive("norm", self.norm)?;
        if !self.mean.unwrap().is_finite() {
            return Err(field_err("mean", "must be finite"));
        }
        positive("dt", self.dt)?;
        positive("stabilize_tol", self.stabilize_tol)?;
        positive("t_local", self.t_local)?;
        positive("max_phase_time", self.max_phase_time)?;
        nonneg("tracking_lambda", self.tracking_lambda)?;
        positive("picard_tol", self.picard_tol)?;
        int_range("picard_max_iter", self.picard_max_iter, 1, 1000)?;
        positive("tol", self.tol)?;
        positive("reversal_tol", self.reversal_tol)?;
        if self.u0_file.is_none() || self.u1_file.is_none() {
            required("seed", &self.seed)?;
        }
        Ok(self)
    }
}

// ------------------------------------------------------------------ verify-lemmas

#[derive(Args, Serialize, Deserialize, Default, Clone, Debug)]
#[serde(deny_unknown_fields)]
pub struct LemmasConfig {
    /// Orders checked, e.g. --orders 1,2,3.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub orders: Option<Vec<u32>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_max: Option<i64>,
    /// Random trials per order for the polynomial identities.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    /// Random fields for the unitarity and group-law checks.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fields: Option<usize>,
    #[arg(long = "N")]
    #[serde(rename = "N", skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl LemmasConfig {
    pub fn resolve(mut self, file: Self) -> Result<Self, CliError> {
        overlay!(self, file; orders, k_max, trials, fields, n, seed);
        defaults!(self; orders = vec![1u32, 2, 3, 4, 5], k_max = 10_000i64, trials = 10_000usize,
            fields = 1000usize, n = 128usize);
        let orders = self.orders.as_ref().unwrap();
        if orders.is_empty() {
            return Err(field_err("orders", "must not be empty"));
        }
        for &j in orders {
            order(Some(j)).map_err(|_| field_err("orders", format!("order {j} outside 1..=5")))?;
        }
        match self.k_max {
            Some(k) if !(1..=100_000_000).contains(&k) => {
                return Err(field_err("k_max", format!("must lie in 1..=1e8, got {k}")))
            }
            _ => {}
        }
        int_range("trials", self.trials, 1, 10_000_000)?;
        int_range("fields", self.fields, 0, 1_000_000)?;
        int_range("N", self.n, 1, 4096)?;
        required("seed", &self.seed)?;
        Ok(self)
    }
}

// ------------------------------------------------------------------ strichartz

#[derive(Args, Serialize, Deserialize, Default, Clone, Debug)]
#[serde(deny_unknown_fields)]
pub struct StrichartzConfig {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub j: Option<u32>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_max: Option<i64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_max: Option<f64>,
    /// Uniform points added to the resonance grid.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub far_points: Option<usize>,
    /// Allowed growth of sup M when the domain is doubled.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plateau_tol: Option<f64>,
    /// 1 = also run the L4 / X^{0,b} ensemble trend.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l4: Option<u8>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ns: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bs: Option<Vec<f64>>,
    /// Allowed relative variation of the admissible-b maximum ratio across N.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l4_variation: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl StrichartzConfig {
    pub fn resolve(mut self, file: Self) -> Result<Self, CliError> {
        overlay!(self, file; j, b, k_max, tau_max, far_points, plateau_tol, l4, ns, bs, l4_variation, seed);
        defaults!(self; j = 1u32, b = 0.4, k_max = 200i64, tau_max = 1000.0, far_points = 201usize,
            plateau_tol = 0.01, l4 = 0u8, ns = vec![16usize, 32, 64], bs = vec![0.4, 0.26], l4_variation = 0.2);
        order(self.j)?;
        let b = self.b.unwrap();
        if !(b > 0.25 && b < 1.0) {
            return Err(field_err("b", format!("must lie in (1/4, 1), got {b}")));
        }
        match self.k_max {
            Some(k) if !(1..=100_000).contains(&k) => {
                return Err(field_err("k_max", format!("must lie in 1..=100000, got {k}")))
            }
            _ => {}
        }
        positive("tau_max", self.tau_max)?;
        int_range("far_points", self.far_points, 2, 1_000_000)?;
        positive("plateau_tol", self.plateau_tol)?;
        int_range("l4", self.l4.map(usize::from), 0, 1)?;
        positive("l4_variation", self.l4_variation)?;
        if self.l4 == Some(1) {
            let ns = self.ns.as_ref().unwrap();
            if ns.len() < 2 || ns.iter().any(|&n| n == 0 || n > 256) {
                return Err(field_err("ns", "need at least two truncations in 1..=256"));
            }
            let bs = self.bs.as_ref().unwrap();
            if bs.is_empty() || bs.iter().any(|&b| !(b > 0.25 && b < 1.0)) {
                return Err(field_err("bs", "need values in (1/4, 1)"));
            }
            required("seed", &self.seed)?;
        }
        Ok(self)
    }
}
