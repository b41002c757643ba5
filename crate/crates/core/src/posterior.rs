//! Measurement-anchored Langevin refinement of solver estimates.
//!
//! Given a solver estimate `z0_hat` (the anchor), a reference latent `z_in`
//! and a measurement `y`, each step applies
//!
//! ```text
//! z <- (1 - w) z + w z_in - h_k [ (z - z0_hat) / sigma_t^2 + A'(z)^T (A(z) - y) / m^2 ] + sqrt(2 h_k) eps
//! ```
//!
//! with the step size decayed multiplicatively as
//! `h_{k+1} = (1 - 0.99 (k + 1) / T) h_k`.

use log::warn;
use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::measurement::{Measurement, MeasurementOperator};
use crate::rng::standard_normals;
use crate::schedule::NoiseSchedule;
use crate::score::{ConditionLabel, GaussianMixtureScore};
use crate::signal::Signal;
use crate::solver::{consistency_estimate, consistency_vjp, SolverParams};

/// Final per-step decay factor reached at `k = T`.
pub const DECAY_FLOOR: f64 = 0.01;

/// Upper end of the recommended injection-weight range.
pub const INJECT_WARN_LIMIT: f64 = 0.2;

/// All knobs of the posterior sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorConfig {
    /// Outer posterior iterations `N`.
    pub outer_iters: usize,
    /// Inner solver steps `n`.
    pub inner_solver_steps: usize,
    /// Langevin steps `T` per outer iteration.
    pub langevin_steps: usize,
    /// Initial step size `h`.
    pub step_size: f64,
    /// Injection weight `w`.
    pub inject_weight: f64,
    /// Data-term scale `m`.
    pub data_scale: f64,
    /// Mask keep probability `f`.
    pub keep_probability: f64,
    pub seed: u64,
    /// Apply the step-size decay law (off gives constant `h`).
    pub decay: bool,
    /// Run the Langevin optimizer at all (off skips straight to re-noising).
    pub optimize: bool,
    /// Re-noise with the VP mean `sqrt(abar) z`; off uses the unscaled mean.
    pub renoise_scaled: bool,
}

impl Default for PosteriorConfig {
    fn default() -> Self {
        Self {
            outer_iters: 5,
            inner_solver_steps: 1,
            langevin_steps: 100,
            step_size: 1e-5,
            inject_weight: 0.1,
            data_scale: 0.01,
            keep_probability: 0.5,
            seed: 0,
            decay: true,
            optimize: true,
            renoise_scaled: true,
        }
    }
}

impl PosteriorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidRange {
                    name,
                    reason: format!("must be positive, got {v}"),
                })
            }
        };
        positive("posterior.h", self.step_size)?;
        positive("posterior.m", self.data_scale)?;
        check_inject_weight(self.inject_weight)?;
        if self.outer_iters == 0 || self.inner_solver_steps == 0 || self.langevin_steps == 0 {
            return Err(Error::InvalidRange {
                name: "posterior.N/n/T",
                reason: "iteration counts must be positive".into(),
            });
        }
        if !(0.0..=1.0).contains(&self.keep_probability) {
            return Err(Error::InvalidRange {
                name: "posterior.f",
                reason: format!("must lie in [0, 1], got {}", self.keep_probability),
            });
        }
        Ok(())
    }
}

fn check_inject_weight(w: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::InvalidRange {
            name: "posterior.w",
            reason: format!("injection weight must lie in [0, 1], got {w}"),
        });
    }
    if w > INJECT_WARN_LIMIT {
        warn!("injection weight w = {w} is outside the recommended range [0, {INJECT_WARN_LIMIT}]");
    }
    Ok(())
}

/// `(1 - w) z_hat + w z_in`, evaluated as `z_hat + w (z_in - z_hat)` so that
/// `w = 0` and `z_hat = z_in` both return `z_hat` exactly.
pub fn weighted_inject(z_hat: &Signal, z_in: &Signal, w: f64) -> Result<Signal> {
    check_inject_weight(w)?;
    blend(z_hat, z_in, w)
}

fn blend(z: &Signal, reference: &Signal, w: f64) -> Result<Signal> {
    z.lincomb(1.0, &reference.sub(z)?, w)
}

/// One application of the decay law: `(1 - 0.99 k / T) h_prev`.
pub fn step_size_decay(k: usize, total: usize, h_prev: f64) -> Result<f64> {
    if k > total || total == 0 {
        return Err(Error::InvalidRange {
            name: "step_size_decay.k",
            reason: format!("step index {k} exceeds total {total}"),
        });
    }
    Ok((1.0 + (k as f64 / total as f64) * (DECAY_FLOOR - 1.0)) * h_prev)
}

/// Running step sizes `h_0 .. h_T` produced by repeated decay.
pub fn step_size_schedule(h0: f64, total: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(total + 1);
    out.push(h0);
    let mut h = h0;
    for k in 1..=total {
        h = step_size_decay(k, total, h)?;
        out.push(h);
    }
    Ok(out)
}

/// State of one Langevin chain.
#[derive(Debug, Clone, PartialEq)]
pub struct LangevinState {
    pub iterate: Signal,
    pub anchor: Signal,
    pub reference: Signal,
    pub step_index: usize,
    pub current_h: f64,
}

impl LangevinState {
    /// Starts a chain at the anchor with step size `h0`.
    pub fn new(anchor: Signal, reference: Signal, h0: f64) -> Result<Self> {
        check_dim(anchor.len(), reference.len())?;
        if !(h0 > 0.0) {
            return Err(Error::InvalidRange {
                name: "posterior.h",
                reason: format!("must be positive, got {h0}"),
            });
        }
        Ok(Self {
            iterate: anchor.clone(),
            anchor,
            reference,
            step_index: 0,
            current_h: h0,
        })
    }
}

/// Energy `||z - anchor||^2 / (2 sigma_t^2) + ||A(z) - y||^2 / (2 m^2)`.
pub fn langevin_energy(
    z: &Signal,
    anchor: &Signal,
    op: &MeasurementOperator,
    y: &Measurement,
    sigma_t: f64,
    data_scale: f64,
) -> Result<f64> {
    let prior = z.sub(anchor)?.norm_sq() / (2.0 * sigma_t * sigma_t);
    Ok(prior + op.misfit(z, y)? / (data_scale * data_scale))
}

/// Gradient of [`langevin_energy`].
pub fn langevin_energy_gradient(
    z: &Signal,
    anchor: &Signal,
    op: &MeasurementOperator,
    y: &Measurement,
    sigma_t: f64,
    data_scale: f64,
) -> Result<Signal> {
    let data = op.residual_gradient(z, y)?;
    z.sub(anchor)?
        .lincomb(1.0 / (sigma_t * sigma_t), &data, 1.0 / (data_scale * data_scale))
}

/// One Langevin step with an explicit standard-normal draw `noise`.
pub fn langevin_step_with_noise(
    state: &LangevinState,
    op: &MeasurementOperator,
    y: &Measurement,
    sigma_t: f64,
    cfg: &PosteriorConfig,
    noise: &Signal,
) -> Result<LangevinState> {
    if !(sigma_t > 0.0) {
        return Err(Error::InvalidRange {
            name: "sigma_t",
            reason: format!("must be positive, got {sigma_t}"),
        });
    }
    check_dim(state.iterate.len(), noise.len())?;
    let w = cfg.inject_weight;
    let h = state.current_h;
    let grad = langevin_energy_gradient(&state.iterate, &state.anchor, op, y, sigma_t, cfg.data_scale)?;
    let blended = blend(&state.iterate, &state.reference, w)?;
    let iterate = blended
        .lincomb(1.0, &grad, -h)?
        .lincomb(1.0, noise, (2.0 * h).sqrt())?;
    let step_index = state.step_index + 1;
    let current_h = if cfg.decay {
        step_size_decay(step_index, cfg.langevin_steps, h)?
    } else {
        h
    };
    Ok(LangevinState {
        iterate,
        anchor: state.anchor.clone(),
        reference: state.reference.clone(),
        step_index,
        current_h,
    })
}

/// One Langevin step drawing its noise from `rng`.
pub fn langevin_step<R: Rng + ?Sized>(
    state: &LangevinState,
    op: &MeasurementOperator,
    y: &Measurement,
    sigma_t: f64,
    cfg: &PosteriorConfig,
    rng: &mut R,
) -> Result<LangevinState> {
    let noise = Signal::new(standard_normals(rng, state.iterate.len()));
    langevin_step_with_noise(state, op, y, sigma_t, cfg, &noise)
}

/// Per-step record of a Langevin pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LangevinTrace {
    /// Step size used at each step.
    pub step_sizes: Vec<f64>,
    /// Energy of the iterate before each step, then after the last one.
    pub energies: Vec<f64>,
    /// Iterates after each step.
    pub iterates: Vec<Signal>,
}

/// Runs `cfg.langevin_steps` steps from `state`, aborting on a non-finite
/// iterate. `tau` only labels the diagnostic.
pub fn run_langevin<R: Rng + ?Sized>(
    mut state: LangevinState,
    op: &MeasurementOperator,
    y: &Measurement,
    sigma_t: f64,
    cfg: &PosteriorConfig,
    tau: usize,
    rng: &mut R,
) -> Result<(LangevinState, LangevinTrace)> {
    let energy = |s: &LangevinState| {
        langevin_energy(&s.iterate, &s.anchor, op, y, sigma_t, cfg.data_scale)
    };
    let mut trace = LangevinTrace {
        step_sizes: Vec::with_capacity(cfg.langevin_steps),
        energies: vec![energy(&state)?],
        iterates: Vec::with_capacity(cfg.langevin_steps),
    };
    for _ in 0..cfg.langevin_steps {
        trace.step_sizes.push(state.current_h);
        state = langevin_step(&state, op, y, sigma_t, cfg, rng)?;
        if !state.iterate.is_finite() {
            return Err(Error::NonFinite {
                step: state.step_index,
                tau,
            });
        }
        trace.energies.push(energy(&state)?);
        trace.iterates.push(state.iterate.clone());
    }
    Ok((state, trace))
}

/// Gradient-descent baseline on `z_t`:
/// `solver_prev - eta grad_{z_t} ||y - A(z0_hat(z_t))||^2`, differentiating
/// through the oracle's consistency estimate.
#[allow(clippy::too_many_arguments)]
pub fn dps_step(
    z_t: &Signal,
    t: usize,
    cond: ConditionLabel,
    model: &GaussianMixtureScore,
    params: SolverParams,
    schedule: &NoiseSchedule,
    op: &MeasurementOperator,
    y: &Measurement,
    eta: f64,
    solver_prev: &Signal,
) -> Result<Signal> {
    check_dim(z_t.len(), solver_prev.len())?;
    let z0_hat = consistency_estimate(z_t, t, cond, model, params, schedule)?;
    let r = op.residual_gradient(&z0_hat, y)?;
    let grad = consistency_vjp(z_t, t, cond, model, params, schedule, &r)?.scale(2.0);
    solver_prev.lincomb(1.0, &grad, -eta)
}

/// Re-noises an optimized estimate to `tau_prev`.
///
/// With `scaled` the mean is `sqrt(abar) z0_opt` (VP kernel); otherwise the
/// mean is `z0_opt` itself. The noise variance is `1 - abar` either way.
pub fn renoise<R: Rng + ?Sized>(
    z0_opt: &Signal,
    tau_prev: usize,
    schedule: &NoiseSchedule,
    scaled: bool,
    rng: &mut R,
) -> Result<Signal> {
    let mean_scale = if scaled { schedule.alpha(tau_prev)? } else { 1.0 };
    let sigma = schedule.sigma(tau_prev)?;
    let noise = Signal::new(standard_normals(rng, z0_opt.len()));
    z0_opt.lincomb(mean_scale, &noise, sigma)
}
