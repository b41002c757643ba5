//! Analytic epsilon/score oracles for diagonal Gaussian mixtures.
//!
//! For a prior `p(z0) = sum_k pi_k N(mu_k, diag v_k)` the VP forward kernel
//! `z_t = sqrt(abar) z0 + sqrt(1 - abar) eps` gives the noised marginal
//! `p_t(z) = sum_k pi_k N(z; sqrt(abar) mu_k, abar v_k + 1 - abar)`, so the
//! Bayes-optimal noise prediction is `eps(z, t) = -sqrt(1 - abar) grad log p_t(z)`.

use crate::error::{check_dim, Error, Result};
use crate::schedule::NoiseSchedule;
use crate::signal::Signal;

/// Conditioning label standing in for a text prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConditionLabel {
    Unconditional,
    Label(u32),
}

impl std::fmt::Display for ConditionLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConditionLabel::Unconditional => write!(f, "uncond"),
            ConditionLabel::Label(k) => write!(f, "{k}"),
        }
    }
}

/// One diagonal Gaussian component.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub weight: f64,
    pub label: u32,
}

/// Label-conditioned Gaussian mixture prior with closed-form scores.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixtureScore {
    components: Vec<Component>,
    dimension: usize,
}

/// Per-component moments of the noised marginal at one timestep.
struct NoisedComponent<'a> {
    comp: &'a Component,
    log_weight: f64,
    /// `abar v + 1 - abar`
    var: Vec<f64>,
}

impl GaussianMixtureScore {
    pub fn new(components: Vec<Component>) -> Result<Self> {
        let dimension = components
            .first()
            .map(|c| c.mean.len())
            .ok_or_else(|| Error::InvalidRange {
                name: "model.components",
                reason: "mixture needs at least one component".into(),
            })?;
        if dimension == 0 {
            return Err(Error::InvalidRange {
                name: "model.dim",
                reason: "dimension must be positive".into(),
            });
        }
        for c in &components {
            check_dim(dimension, c.mean.len())?;
            check_dim(dimension, c.variance.len())?;
            if c.variance.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(Error::InvalidRange {
                    name: "model.variance",
                    reason: "variances must be positive and finite".into(),
                });
            }
            if !(c.weight > 0.0) || !c.weight.is_finite() {
                return Err(Error::InvalidRange {
                    name: "model.weight",
                    reason: format!("weights must be positive, got {}", c.weight),
                });
            }
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidRange {
                name: "model.weight",
                reason: format!("weights must sum to 1, got {total}"),
            });
        }
        Ok(Self {
            components,
            dimension,
        })
    }

    /// Isotropic single-component prior `N(mean, variance I)` with label 0.
    pub fn isotropic(mean: Vec<f64>, variance: f64) -> Result<Self> {
        let d = mean.len();
        Self::new(vec![Component {
            mean,
            variance: vec![variance; d],
            weight: 1.0,
            label: 0,
        }])
    }

    /// Standard normal prior of the given dimension.
    pub fn standard_normal(dimension: usize) -> Result<Self> {
        Self::isotropic(vec![0.0; dimension], 1.0)
    }

    /// Equal-weight two-label mixture with isotropic components at
    /// `mean0 * 1` (label 0) and `mean1 * 1` (label 1).
    pub fn two_label(dimension: usize, mean0: f64, mean1: f64, variance: f64) -> Result<Self> {
        Self::new(vec![
            Component {
                mean: vec![mean0; dimension],
                variance: vec![variance; dimension],
                weight: 0.5,
                label: 0,
            },
            Component {
                mean: vec![mean1; dimension],
                variance: vec![variance; dimension],
                weight: 0.5,
                label: 1,
            },
        ])
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn labels(&self) -> Vec<u32> {
        let mut labels: Vec<u32> = self.components.iter().map(|c| c.label).collect();
        labels.sort_unstable();
        labels.dedup();
        labels
    }

    /// Components selected by `cond`.
    fn selected(&self, cond: ConditionLabel) -> Result<Vec<&Component>> {
        let picked: Vec<&Component> = match cond {
            ConditionLabel::Unconditional => self.components.iter().collect(),
            ConditionLabel::Label(k) => self.components.iter().filter(|c| c.label == k).collect(),
        };
        match (picked.is_empty(), cond) {
            (true, ConditionLabel::Label(k)) => Err(Error::UnknownLabel(k)),
            _ => Ok(picked),
        }
    }

    fn noised<'a>(&'a self, abar: f64, cond: ConditionLabel) -> Result<Vec<NoisedComponent<'a>>> {
        let picked = self.selected(cond)?;
        let total: f64 = picked.iter().map(|c| c.weight).sum();
        Ok(picked
            .into_iter()
            .map(|comp| NoisedComponent {
                comp,
                log_weight: (comp.weight / total).ln(),
                var: comp.variance.iter().map(|v| abar * v + (1.0 - abar)).collect(),
            })
            .collect())
    }

    /// Log-density of each selected component at `z` (including its weight),
    /// returned alongside the components.
    fn component_logs<'a>(
        &'a self,
        z: &Signal,
        abar: f64,
        cond: ConditionLabel,
    ) -> Result<(Vec<NoisedComponent<'a>>, Vec<f64>)> {
        check_dim(self.dimension, z.len())?;
        let parts = self.noised(abar, cond)?;
        let scale = abar.sqrt();
        let ln_2pi = (2.0 * std::f64::consts::PI).ln();
        let logs = parts
            .iter()
            .map(|p| {
                let quad: f64 = z
                    .iter()
                    .zip(&p.comp.mean)
                    .zip(&p.var)
                    .map(|((zi, mi), vi)| {
                        let r = zi - scale * mi;
                        r * r / vi + vi.ln() + ln_2pi
                    })
                    .sum();
                p.log_weight - 0.5 * quad
            })
            .collect();
        Ok((parts, logs))
    }

    /// Posterior responsibilities, computed with max-subtraction.
    fn responsibilities(logs: &[f64]) -> Vec<f64> {
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = w.iter().sum();
        w.into_iter().map(|x| x / total).collect()
    }

    /// `log p_t(z)` of the noised marginal.
    pub fn log_density(
        &self,
        schedule: &NoiseSchedule,
        z: &Signal,
        t: usize,
        cond: ConditionLabel,
    ) -> Result<f64> {
        let abar = schedule.alpha_bar(t)?;
        let (_, logs) = self.component_logs(z, abar, cond)?;
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Ok(max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln())
    }

    /// `grad log p_t(z)`.
    pub fn score(
        &self,
        schedule: &NoiseSchedule,
        z: &Signal,
        t: usize,
        cond: ConditionLabel,
    ) -> Result<Signal> {
        let abar = schedule.alpha_bar(t)?;
        let (parts, logs) = self.component_logs(z, abar, cond)?;
        let resp = Self::responsibilities(&logs);
        let scale = abar.sqrt();
        let mut out = vec![0.0; self.dimension];
        for (p, r) in parts.iter().zip(&resp) {
            for (i, o) in out.iter_mut().enumerate() {
                *o -= r * (z[i] - scale * p.comp.mean[i]) / p.var[i];
            }
        }
        Ok(Signal::new(out).shaped_like(z))
    }

    /// Bayes-optimal noise prediction `-sqrt(1 - abar) grad log p_t(z)`.
    pub fn epsilon(
        &self,
        schedule: &NoiseSchedule,
        z: &Signal,
        t: usize,
        cond: ConditionLabel,
    ) -> Result<Signal> {
        let sigma = schedule.sigma(t)?;
        Ok(self.score(schedule, z, t, cond)?.scale(-sigma))
    }

    /// Classifier-free-guided epsilon for `label` at the given guidance scale.
    pub fn guided_epsilon(
        &self,
        schedule: &NoiseSchedule,
        z: &Signal,
        t: usize,
        cond: ConditionLabel,
        guidance: f64,
    ) -> Result<Signal> {
        let eps_c = self.epsilon(schedule, z, t, cond)?;
        if guidance == 0.0 {
            return Ok(eps_c);
        }
        let eps_u = self.epsilon(schedule, z, t, ConditionLabel::Unconditional)?;
        cfg_combine(&eps_c, &eps_u, guidance)
    }

    /// Hessian of `log p_t` applied to `v`.
    ///
    /// For the mixture, `H = sum_k r_k (g_k g_k^T - D_k^{-1}) - g g^T` where
    /// `g_k` is the component score and `g = sum_k r_k g_k`.
    pub fn score_hessian_apply(
        &self,
        schedule: &NoiseSchedule,
        z: &Signal,
        t: usize,
        cond: ConditionLabel,
        v: &Signal,
    ) -> Result<Signal> {
        check_dim(self.dimension, v.len())?;
        let abar = schedule.alpha_bar(t)?;
        let (parts, logs) = self.component_logs(z, abar, cond)?;
        let resp = Self::responsibilities(&logs);
        let scale = abar.sqrt();
        let d = self.dimension;
        let mut out = vec![0.0; d];
        let mut g_bar = vec![0.0; d];
        for (p, r) in parts.iter().zip(&resp) {
            let g: Vec<f64> = (0..d)
                .map(|i| -(z[i] - scale * p.comp.mean[i]) / p.var[i])
                .collect();
            let gv: f64 = g.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
            for i in 0..d {
                out[i] += r * (g[i] * gv - v[i] / p.var[i]);
                g_bar[i] += r * g[i];
            }
        }
        let gbv: f64 = g_bar.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
        for i in 0..d {
            out[i] -= g_bar[i] * gbv;
        }
        Ok(Signal::new(out).shaped_like(z))
    }
}

/// Classifier-free guidance: `(g + 1) eps_cond - g eps_uncond`, evaluated as
/// `eps_cond + g (eps_cond - eps_uncond)` so both identities hold bit-exactly.
pub fn cfg_combine(eps_cond: &Signal, eps_uncond: &Signal, guidance: f64) -> Result<Signal> {
    if !(guidance >= 0.0) || !guidance.is_finite() {
        return Err(Error::InvalidRange {
            name: "solver.guidance",
            reason: format!("guidance must be non-negative, got {guidance}"),
        });
    }
    let diff = eps_cond.sub(eps_uncond)?;
    eps_cond.lincomb(1.0, &diff, guidance)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sched() -> NoiseSchedule {
        NoiseSchedule::default()
    }

    #[test]
    fn standard_normal_epsilon_is_scaled_input() {
        let s = sched();
        let model = GaussianMixtureScore::standard_normal(3).unwrap();
        let z = Signal::new(vec![0.3, -1.2, 2.0]);
        for t in [1, 250, 501, 1000] {
            let eps = model.epsilon(&s, &z, t, ConditionLabel::Unconditional).unwrap();
            let sig = s.sigma(t).unwrap();
            for i in 0..3 {
                assert!((eps[i] - sig * z[i]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn point_mass_limit_recovers_noise() {
        let s = sched();
        let mu = vec![1.5, -0.5];
        let model = GaussianMixtureScore::isotropic(mu.clone(), 1e-12).unwrap();
        let z = Signal::new(vec![0.9, 0.1]);
        let t = 501;
        let eps = model.epsilon(&s, &z, t, ConditionLabel::Label(0)).unwrap();
        let (a, sg) = (s.alpha(t).unwrap(), s.sigma(t).unwrap());
        for i in 0..2 {
            let expect = (z[i] - a * mu[i]) / sg;
            assert!((eps[i] - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn unknown_label_and_dimension_errors() {
        let s = sched();
        let model = GaussianMixtureScore::two_label(2, -2.0, 2.0, 0.25).unwrap();
        let z = Signal::new(vec![0.0, 0.0]);
        assert_eq!(
            model.epsilon(&s, &z, 10, ConditionLabel::Label(7)),
            Err(Error::UnknownLabel(7))
        );
        assert!(matches!(
            model.epsilon(&s, &Signal::zeros(3), 10, ConditionLabel::Unconditional),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn mixture_validation() {
        let bad_weight = GaussianMixtureScore::new(vec![Component {
            mean: vec![0.0],
            variance: vec![1.0],
            weight: 0.7,
            label: 0,
        }]);
        assert!(bad_weight.is_err());
        let bad_var = GaussianMixtureScore::isotropic(vec![0.0], 0.0);
        assert!(bad_var.is_err());
        assert!(GaussianMixtureScore::new(vec![]).is_err());
    }

    #[test]
    fn shared_label_conditioning_is_exact() {
        let s = sched();
        let model = GaussianMixtureScore::new(vec![
            Component {
                mean: vec![-1.0, 0.5],
                variance: vec![0.3, 0.8],
                weight: 0.25,
                label: 4,
            },
            Component {
                mean: vec![2.0, -0.5],
                variance: vec![0.5, 0.2],
                weight: 0.75,
                label: 4,
            },
        ])
        .unwrap();
        let z = Signal::new(vec![0.4, -0.9]);
        let c = model.epsilon(&s, &z, 300, ConditionLabel::Label(4)).unwrap();
        let u = model.epsilon(&s, &z, 300, ConditionLabel::Unconditional).unwrap();
        assert_eq!(c, u);
    }

    #[test]
    fn small_t_does_not_underflow() {
        let s = sched();
        let model = GaussianMixtureScore::two_label(4, -2.0, 2.0, 0.01).unwrap();
        let z = Signal::filled(4, 30.0);
        let eps = model.epsilon(&s, &z, 1, ConditionLabel::Unconditional).unwrap();
        assert!(eps.is_finite());
    }

    #[test]
    fn cfg_identities() {
        let c = Signal::new(vec![1.0, 0.0]);
        let u = Signal::new(vec![0.0, 1.0]);
        assert_eq!(cfg_combine(&c, &u, 0.0).unwrap(), c);
        assert_eq!(cfg_combine(&c, &u, 2.0).unwrap().as_slice(), &[3.0, -2.0]);
        assert_eq!(cfg_combine(&c, &c, 7.5).unwrap(), c);
        assert!(cfg_combine(&c, &u, -1.0).is_err());
        assert!(cfg_combine(&c, &Signal::zeros(3), 1.0).is_err());
    }
}
