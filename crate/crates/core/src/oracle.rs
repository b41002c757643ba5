//! Closed-form and brute-force references for checking the sampler.
//!
//! Nothing here is used by the sampling path itself.

use crate::error::{check_dim, Error, Result};
use crate::measurement::{MaskOperator, Measurement};
use crate::schedule::NoiseSchedule;
use crate::score::{ConditionLabel, GaussianMixtureScore};
use crate::signal::Signal;

/// Diagonal Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosterior {
    pub mean: Signal,
    pub diag_covariance: Signal,
}

/// Exact posterior for a diagonal Gaussian prior observed through a mask with
/// Gaussian noise `mask.noise_sigma()`.
pub fn conjugate_posterior(
    prior_mean: &Signal,
    prior_var: &Signal,
    mask: &MaskOperator,
    y: &Measurement,
) -> Result<GaussianPosterior> {
    let sigma = mask.noise_sigma();
    if !(sigma > 0.0) {
        return Err(Error::InvalidRange {
            name: "measurement.sigma",
            reason: "conjugate posterior needs positive measurement noise".into(),
        });
    }
    product_with_measurement(prior_mean, prior_var, mask, y, sigma)
}

/// Stationary law of the Langevin chain with `w = 0`: the product of
/// `N(anchor, sigma_t^2 I)` with `N(y; P z, m^2 I)`.
pub fn product_of_gaussians(
    anchor: &Signal,
    sigma_t: f64,
    mask: &MaskOperator,
    y: &Measurement,
    m: f64,
) -> Result<GaussianPosterior> {
    let var = Signal::filled(anchor.len(), sigma_t * sigma_t);
    product_with_measurement(anchor, &var, mask, y, m)
}

fn product_with_measurement(
    mean: &Signal,
    var: &Signal,
    mask: &MaskOperator,
    y: &Measurement,
    noise: f64,
) -> Result<GaussianPosterior> {
    check_dim(mean.len(), var.len())?;
    check_dim(mask.dimension(), mean.len())?;
    check_dim(mask.kept_indices().len(), y.values.len())?;
    if var.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidRange {
            name: "prior variance",
            reason: "must be positive".into(),
        });
    }
    let mut post_mean = mean.as_slice().to_vec();
    let mut post_var = var.as_slice().to_vec();
    let noise_prec = 1.0 / (noise * noise);
    for (&i, &yi) in mask.kept_indices().iter().zip(&y.values) {
        let prior_prec = 1.0 / var[i];
        let prec = noise_prec + prior_prec;
        post_mean[i] = (yi * noise_prec + mean[i] * prior_prec) / prec;
        post_var[i] = 1.0 / prec;
    }
    Ok(GaussianPosterior {
        mean: Signal::new(post_mean).shaped_like(mean),
        diag_covariance: Signal::new(post_var).shaped_like(mean),
    })
}

/// Uniform trapezoid grid used by [`brute_force_tweedie`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Default for QuadratureGrid {
    fn default() -> Self {
        Self {
            lo: -8.0,
            hi: 8.0,
            points: 2001,
        }
    }
}

impl QuadratureGrid {
    fn nodes(&self) -> Vec<(f64, f64)> {
        let step = (self.hi - self.lo) / (self.points - 1) as f64;
        (0..self.points)
            .map(|i| {
                let w = if i == 0 || i + 1 == self.points { 0.5 } else { 1.0 };
                (self.lo + i as f64 * step, w * step)
            })
            .collect()
    }
}

pub const MAX_QUADRATURE_DIM: usize = 3;

/// `E[z0 | z_t]` by tensor-product trapezoid quadrature over the prior.
///
/// Each mixture component is a diagonal Gaussian and the forward kernel is
/// isotropic, so the tensor-product rule for one component is exactly the
/// product of 1D trapezoid sums; the mixture is then combined in log space.
pub fn brute_force_tweedie(
    model: &GaussianMixtureScore,
    schedule: &NoiseSchedule,
    z: &Signal,
    t: usize,
    cond: ConditionLabel,
    grid: QuadratureGrid,
) -> Result<Signal> {
    let d = model.dimension();
    if d > MAX_QUADRATURE_DIM {
        return Err(Error::QuadratureDimension {
            dim: d,
            max: MAX_QUADRATURE_DIM,
        });
    }
    check_dim(d, z.len())?;
    if grid.points < 2 || !(grid.hi > grid.lo) {
        return Err(Error::InvalidRange {
            name: "quadrature grid",
            reason: "need at least two points on a non-empty interval".into(),
        });
    }
    let abar = schedule.alpha_bar(t)?;
    let (a, noise_var) = (abar.sqrt(), 1.0 - abar);
    let nodes = grid.nodes();

    let picked: Vec<_> = model
        .components()
        .iter()
        .filter(|c| match cond {
            ConditionLabel::Unconditional => true,
            ConditionLabel::Label(k) => c.label == k,
        })
        .collect();
    if picked.is_empty() {
        if let ConditionLabel::Label(k) = cond {
            return Err(Error::UnknownLabel(k));
        }
    }

    // Per component: log evidence and per-coordinate first moments.
    let mut log_evidence = Vec::with_capacity(picked.len());
    let mut moments = Vec::with_capacity(picked.len());
    for comp in &picked {
        let mut log_z = comp.weight.ln();
        let mut means = vec![0.0; d];
        for i in 0..d {
            let (mu, v) = (comp.mean[i], comp.variance[i]);
            let log_f: Vec<f64> = nodes
                .iter()
                .map(|&(x, _)| {
                    let prior = -0.5 * (x - mu).powi(2) / v - 0.5 * (2.0 * std::f64::consts::PI * v).ln();
                    let like = if noise_var > 0.0 {
                        -0.5 * (z[i] - a * x).powi(2) / noise_var
                            - 0.5 * (2.0 * std::f64::consts::PI * noise_var).ln()
                    } else {
                        0.0
                    };
                    prior + like
                })
                .collect();
            let max = log_f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let (mut s0, mut s1) = (0.0, 0.0);
            for (&(x, w), lf) in nodes.iter().zip(&log_f) {
                let e = w * (lf - max).exp();
                s0 += e;
                s1 += e * x;
            }
            log_z += max + s0.ln();
            means[i] = s1 / s0;
        }
        log_evidence.push(log_z);
        moments.push(means);
    }
    let max = log_evidence.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_evidence.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut out = vec![0.0; d];
    for (w, m) in weights.iter().zip(&moments) {
        for i in 0..d {
            out[i] += w / total * m[i];
        }
    }
    Ok(Signal::new(out).shaped_like(z))
}
