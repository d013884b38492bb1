use crate::error::{Error, Result};
use crate::spectral::FourierField;

/// Sampled solution path; `forcing_log[i]` is the forcing applied at `times[i]` when recorded.
#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<FourierField>,
    pub forcing_log: Option<Vec<FourierField>>,
}

impl Trajectory {
    pub fn new(t0: f64, u0: FourierField) -> Self {
        Trajectory { times: vec![t0], states: vec![u0], forcing_log: None }
    }

    pub fn push(&mut self, t: f64, u: FourierField) {
        debug_assert!(self.times.last().is_none_or(|&last| t > last));
        self.times.push(t);
        self.states.push(u);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn first(&self) -> &FourierField {
        &self.states[0]
    }

    pub fn last(&self) -> &FourierField {
        self.states.last().expect("non-empty trajectory")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("non-empty trajectory")
    }

    /// Uniform spacing of the sample times, if they are uniform.
    pub fn uniform_step(&self) -> Option<f64> {
        if self.times.len() < 2 {
            return None;
        }
        let h = (self.final_time() - self.times[0]) / (self.times.len() - 1) as f64;
        let ok = self.times.windows(2).all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h.abs().max(1e-300));
        ok.then_some(h)
    }

    /// Checks strictly increasing times and a common (j, N).
    pub fn validate(&self) -> Result<()> {
        if self.times.len() != self.states.len() {
            return Err(Error::Invariant("times and states differ in length".into()));
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Invariant("trajectory times not strictly increasing".into()));
        }
        if let Some(u) = self.states.first() {
            if self.states.iter().any(|v| v.order_j() != u.order_j() || v.trunc_n() != u.trunc_n()) {
                return Err(Error::Invariant("trajectory states differ in (j, N)".into()));
            }
        }
        Ok(())
    }

    /// Keeps every `stride`-th sample plus the last one.
    pub fn thinned(&self, stride: usize) -> Self {
        let stride = stride.max(1);
        let last = self.len() - 1;
        let keep: Vec<usize> = (0..self.len()).filter(|i| i % stride == 0 || *i == last).collect();
        Trajectory {
            times: keep.iter().map(|&i| self.times[i]).collect(),
            states: keep.iter().map(|&i| self.states[i].clone()).collect(),
            forcing_log: self.forcing_log.as_ref().map(|f| keep.iter().map(|&i| f[i].clone()).collect()),
        }
    }

    pub fn l2_norms(&self) -> Vec<f64> {
        self.states.iter().map(|u| u.l2_norm()).collect()
    }
}
