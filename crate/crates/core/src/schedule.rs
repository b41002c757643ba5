//! Discrete variance-preserving noise schedule and the posterior time sequence.
//!
//! Timesteps are 1-based at the interface: `t` in `1..=steps` reads
//! `alpha_bar[t - 1]`. Timestep `0` is the clean endpoint with `alpha_bar = 1`.

use crate::error::{Error, Result};

pub const DEFAULT_STEPS: usize = 1000;
pub const DEFAULT_BETA_START: f64 = 1e-4;
pub const DEFAULT_BETA_END: f64 = 0.02;

/// Linear-beta DDPM schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    beta_start: f64,
    beta_end: f64,
    alpha_bar: Vec<f64>,
}

/// Builds the DDPM schedule `alpha_bar[t] = prod_{s<=t} (1 - beta_s)` with
/// `beta_s` linearly spaced over `[beta_start, beta_end]`.
pub fn build_ddpm_schedule(steps: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule> {
    if steps < 2 {
        return Err(Error::InvalidRange {
            name: "schedule.steps",
            reason: format!("need at least 2 steps, got {steps}"),
        });
    }
    let ordered = beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0;
    if !ordered || !beta_start.is_finite() || !beta_end.is_finite() {
        return Err(Error::InvalidRange {
            name: "schedule.beta",
            reason: format!("need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}"),
        });
    }
    let span = (steps - 1) as f64;
    let mut alpha_bar = Vec::with_capacity(steps);
    let mut acc = 1.0;
    for s in 0..steps {
        let beta = beta_start + (beta_end - beta_start) * (s as f64 / span);
        acc *= 1.0 - beta;
        alpha_bar.push(acc);
    }
    Ok(NoiseSchedule {
        beta_start,
        beta_end,
        alpha_bar,
    })
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        build_ddpm_schedule(DEFAULT_STEPS, DEFAULT_BETA_START, DEFAULT_BETA_END)
            .expect("default schedule parameters are valid")
    }
}

impl NoiseSchedule {
    pub fn num_train_timesteps(&self) -> usize {
        self.alpha_bar.len()
    }

    pub fn beta_start(&self) -> f64 {
        self.beta_start
    }

    pub fn beta_end(&self) -> f64 {
        self.beta_end
    }

    /// The 0-based cumulative product array.
    pub fn alpha_bar_table(&self) -> &[f64] {
        &self.alpha_bar
    }

    pub fn check(&self, t: usize) -> Result<()> {
        if t <= self.alpha_bar.len() {
            Ok(())
        } else {
            Err(Error::InvalidTimestep {
                t,
                steps: self.alpha_bar.len(),
            })
        }
    }

    /// `alpha_bar` at 1-based timestep `t`; `t = 0` gives 1.
    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        self.check(t)?;
        Ok(if t == 0 { 1.0 } else { self.alpha_bar[t - 1] })
    }

    /// Signal coefficient squared, `alpha(t)^2 = alpha_bar`.
    pub fn alpha_sq(&self, t: usize) -> Result<f64> {
        self.alpha_bar(t)
    }

    /// Noise variance `sigma(t)^2 = 1 - alpha_bar`.
    pub fn sigma_sq(&self, t: usize) -> Result<f64> {
        Ok(1.0 - self.alpha_bar(t)?)
    }

    pub fn alpha(&self, t: usize) -> Result<f64> {
        Ok(self.alpha_bar(t)?.sqrt())
    }

    pub fn sigma(&self, t: usize) -> Result<f64> {
        Ok(self.sigma_sq(t)?.sqrt())
    }
}

/// Outer posterior-sampler timesteps plus the number of inner solver steps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeSequence {
    taus: Vec<usize>,
    inner_steps: usize,
}

impl TimeSequence {
    pub fn new(taus: Vec<usize>, inner_steps: usize) -> Result<Self> {
        if taus.len() < 2 {
            return Err(Error::InvalidRange {
                name: "posterior.taus",
                reason: "need at least two timesteps".into(),
            });
        }
        if taus.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::InvalidRange {
                name: "posterior.taus",
                reason: format!("must be strictly decreasing, got {taus:?}"),
            });
        }
        if *taus.last().unwrap() < 1 {
            return Err(Error::InvalidRange {
                name: "posterior.taus",
                reason: "last timestep must be >= 1".into(),
            });
        }
        if inner_steps == 0 {
            return Err(Error::InvalidRange {
                name: "posterior.n",
                reason: "inner solver steps must be positive".into(),
            });
        }
        Ok(Self { taus, inner_steps })
    }

    pub fn taus(&self) -> &[usize] {
        &self.taus
    }

    pub fn inner_steps(&self) -> usize {
        self.inner_steps
    }

    /// Number of outer iterations, one fewer than the number of taus.
    pub fn outer_iters(&self) -> usize {
        self.taus.len() - 1
    }

    pub fn validate_against(&self, schedule: &NoiseSchedule) -> Result<()> {
        schedule.check(self.taus[0])
    }
}

/// The default schedule `[501, 401, 301, 201, 101, 1]` with one inner step.
pub fn default_posterior_sequence() -> TimeSequence {
    TimeSequence::new(vec![501, 401, 301, 201, 101, 1], 1).expect("default taus are valid")
}

impl Default for TimeSequence {
    fn default() -> Self {
        default_posterior_sequence()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_entry_is_single_factor() {
        let s = build_ddpm_schedule(1000, 1e-4, 0.02).unwrap();
        assert_eq!(s.alpha_bar(1).unwrap(), 1.0 - 1e-4);
    }

    #[test]
    fn two_step_constant_ramp() {
        let s = build_ddpm_schedule(2, 0.5, 0.5).unwrap();
        assert_eq!(s.alpha_bar_table(), &[0.5, 0.25]);
    }

    #[test]
    fn rejects_bad_ranges() {
        assert!(build_ddpm_schedule(1, 1e-4, 0.02).is_err());
        assert!(build_ddpm_schedule(10, 0.0, 0.02).is_err());
        assert!(build_ddpm_schedule(10, 0.03, 0.02).is_err());
        assert!(build_ddpm_schedule(10, 1e-4, 1.0).is_err());
        assert!(build_ddpm_schedule(10, f64::NAN, 0.02).is_err());
    }

    #[test]
    fn timestep_bounds() {
        let s = NoiseSchedule::default();
        assert_eq!(s.alpha_bar(0).unwrap(), 1.0);
        assert!(s.alpha_bar(1000).is_ok());
        assert!(matches!(s.alpha_bar(1001), Err(Error::InvalidTimestep { .. })));
    }

    #[test]
    fn default_sequence() {
        let seq = default_posterior_sequence();
        assert_eq!(seq.taus(), &[501, 401, 301, 201, 101, 1]);
        assert_eq!(seq.inner_steps(), 1);
        assert_eq!(seq.taus().len(), 6);
        assert_eq!(seq.outer_iters(), 5);
    }

    #[test]
    fn sequence_validation() {
        assert!(TimeSequence::new(vec![5, 5, 1], 1).is_err());
        assert!(TimeSequence::new(vec![5, 0], 1).is_err());
        assert!(TimeSequence::new(vec![5, 1], 0).is_err());
        let long = TimeSequence::new(vec![2000, 1], 1).unwrap();
        assert!(long.validate_against(&NoiseSchedule::default()).is_err());
    }

    #[test]
    fn variance_form_is_exact() {
        let s = NoiseSchedule::default();
        for t in 0..=1000 {
            assert_eq!(s.alpha_sq(t).unwrap() + s.sigma_sq(t).unwrap(), 1.0);
        }
    }
}
