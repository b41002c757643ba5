//! Forward kernel and deterministic estimators of the clean latent.

use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::rng::standard_normals;
use crate::schedule::NoiseSchedule;
use crate::score::{ConditionLabel, GaussianMixtureScore};
use crate::signal::Signal;

/// Skip/output coefficients of the consistency function plus the CFG scale
/// used when querying the oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverParams {
    pub c_skip: f64,
    pub c_out: f64,
    pub guidance: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            c_skip: 0.0,
            c_out: 1.0,
            guidance: 0.0,
        }
    }
}

/// Samples `sqrt(abar_t) z0 + sqrt(1 - abar_t) eps`, `eps ~ N(0, I)`.
pub fn forward_noise<R: Rng + ?Sized>(
    z0: &Signal,
    t: usize,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<Signal> {
    let (a, s) = (schedule.alpha(t)?, schedule.sigma(t)?);
    let noise = Signal::new(standard_normals(rng, z0.len()));
    z0.lincomb(a, &noise, s)
}

/// `(z_t - sqrt(1 - abar_t) eps) / sqrt(abar_t)`, evaluated in the affine form
/// `r z_t - (sigma_t r) eps` with `r = 1 / sqrt(abar_t)`.
pub fn predict_x0(z_t: &Signal, eps: &Signal, t: usize, schedule: &NoiseSchedule) -> Result<Signal> {
    let abar = schedule.alpha_bar(t)?;
    if abar <= 0.0 {
        return Err(Error::DegenerateAlpha(t));
    }
    let r = 1.0 / abar.sqrt();
    let c = (1.0 - abar).sqrt() * r;
    check_dim(z_t.len(), eps.len())?;
    let data = z_t.iter().zip(eps.iter()).map(|(z, e)| r * z - c * e).collect();
    Ok(Signal::new(data).shaped_like(z_t))
}

/// DDIM update between two noise levels given by their `alpha_bar` values:
/// `sqrt(abar_prev) x0_hat + sqrt(1 - abar_prev) eps`, written as
/// `r z + (sigma_prev - sigma r) eps` with `r = sqrt(abar_prev / abar)`.
pub fn ddim_update(z_t: &Signal, eps: &Signal, abar: f64, abar_prev: f64) -> Result<Signal> {
    if abar <= 0.0 {
        return Err(Error::InvalidRange {
            name: "alpha_bar",
            reason: "must be positive".into(),
        });
    }
    check_dim(z_t.len(), eps.len())?;
    let r = abar_prev.sqrt() / abar.sqrt();
    let c = (1.0 - abar_prev).sqrt() - (1.0 - abar).sqrt() * r;
    let data = z_t.iter().zip(eps.iter()).map(|(z, e)| r * z + c * e).collect();
    Ok(Signal::new(data).shaped_like(z_t))
}

/// One deterministic DDIM step from `t` to `t_prev < t`.
pub fn ddim_step(
    z_t: &Signal,
    eps: &Signal,
    t: usize,
    t_prev: usize,
    schedule: &NoiseSchedule,
) -> Result<Signal> {
    schedule.check(t)?;
    schedule.check(t_prev)?;
    if t_prev >= t {
        return Err(Error::TimestepOrder { t, t_prev });
    }
    let abar = schedule.alpha_bar(t)?;
    if abar <= 0.0 {
        return Err(Error::DegenerateAlpha(t));
    }
    ddim_update(z_t, eps, abar, schedule.alpha_bar(t_prev)?)
}

/// Runs DDIM with unit steps from `t_start` down to `t_end` using the oracle.
pub fn ddim_sample(
    z: &Signal,
    t_start: usize,
    t_end: usize,
    cond: ConditionLabel,
    model: &GaussianMixtureScore,
    params: SolverParams,
    schedule: &NoiseSchedule,
) -> Result<Signal> {
    let mut z = z.clone();
    let mut t = t_start;
    while t > t_end {
        let eps = model.guided_epsilon(schedule, &z, t, cond, params.guidance)?;
        z = ddim_step(&z, &eps, t, t - 1, schedule)?;
        t -= 1;
    }
    Ok(z)
}

/// Consistency function `c_skip z + c_out (z - sigma_t eps(z, t)) / alpha_t`
/// with `alpha_t = sqrt(abar_t)` and `sigma_t = sqrt(1 - abar_t)`.
pub fn consistency_estimate(
    z: &Signal,
    t: usize,
    cond: ConditionLabel,
    model: &GaussianMixtureScore,
    params: SolverParams,
    schedule: &NoiseSchedule,
) -> Result<Signal> {
    let eps = model.guided_epsilon(schedule, z, t, cond, params.guidance)?;
    let x0 = predict_x0(z, &eps, t, schedule)?;
    z.lincomb(params.c_skip, &x0, params.c_out)
}

/// Vector-Jacobian product of [`consistency_estimate`] with respect to `z`.
///
/// Without guidance the estimate is `c_skip z + c_out (z + sigma^2 s(z)) / alpha`
/// whose Jacobian `c_skip I + c_out (I + sigma^2 H) / alpha` is symmetric.
pub fn consistency_vjp(
    z: &Signal,
    t: usize,
    cond: ConditionLabel,
    model: &GaussianMixtureScore,
    params: SolverParams,
    schedule: &NoiseSchedule,
    v: &Signal,
) -> Result<Signal> {
    let (abar, sigma_sq) = (schedule.alpha_bar(t)?, schedule.sigma_sq(t)?);
    if abar <= 0.0 {
        return Err(Error::DegenerateAlpha(t));
    }
    let hv = |c: ConditionLabel| model.score_hessian_apply(schedule, z, t, c, v);
    let hv = if params.guidance == 0.0 {
        hv(cond)?
    } else {
        let g = params.guidance;
        hv(cond)?.lincomb(g + 1.0, &hv(ConditionLabel::Unconditional)?, -g)?
    };
    let inner = v.lincomb(1.0, &hv, sigma_sq)?;
    v.lincomb(params.c_skip, &inner, params.c_out / abar.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sched() -> NoiseSchedule {
        NoiseSchedule::default()
    }

    #[test]
    fn forward_noise_at_clean_endpoint_is_identity() {
        let s = sched();
        let z0 = Signal::new(vec![1.0, -2.0, 3.5]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(forward_noise(&z0, 0, &s, &mut rng).unwrap(), z0);
        assert!(forward_noise(&z0, 1001, &s, &mut rng).is_err());
    }

    #[test]
    fn forward_noise_variance() {
        let s = sched();
        let t = 300;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let z0 = Signal::zeros(1);
        let n = 100_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| forward_noise(&z0, t, &s, &mut rng).unwrap()[0])
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        let target = s.sigma_sq(t).unwrap();
        assert!((var / target - 1.0).abs() < 0.02, "var {var} target {target}");
    }

    #[test]
    fn predict_x0_reductions() {
        let s = sched();
        let z = Signal::new(vec![0.4, -1.0]);
        assert_eq!(predict_x0(&z, &Signal::new(vec![9.0, 9.0]), 0, &s).unwrap(), z);
        let t = 200;
        let out = predict_x0(&z, &Signal::zeros(2), t, &s).unwrap();
        let a = s.alpha(t).unwrap();
        for i in 0..2 {
            assert!((out[i] - z[i] / a).abs() < 1e-15);
        }
        assert!(predict_x0(&z, &Signal::zeros(3), t, &s).is_err());
    }

    #[test]
    fn predict_x0_conjugate_posterior_mean() {
        let s = sched();
        let t = 501;
        let z = Signal::new(vec![1.3, -0.2, 0.7]);
        let eps = z.scale(s.sigma(t).unwrap());
        let out = predict_x0(&z, &eps, t, &s).unwrap();
        let a = s.alpha(t).unwrap();
        for i in 0..3 {
            assert!((out[i] - a * z[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn ddim_identity_when_alpha_bars_match() {
        let z = Signal::new(vec![0.5, 2.0, -7.25]);
        let eps = Signal::new(vec![-0.3, 0.9, 1e3]);
        for abar in [0.9999, 0.5, 0.0778, 1e-3] {
            assert_eq!(ddim_update(&z, &eps, abar, abar).unwrap(), z);
        }
    }

    #[test]
    fn ddim_to_clean_end_is_predict_x0() {
        let s = sched();
        let z = Signal::new(vec![0.5, 2.0]);
        let eps = Signal::new(vec![-0.3, 0.9]);
        for t in [1, 77, 501, 1000] {
            assert_eq!(
                ddim_step(&z, &eps, t, 0, &s).unwrap(),
                predict_x0(&z, &eps, t, &s).unwrap()
            );
        }
    }

    #[test]
    fn ddim_zero_prediction_rescales() {
        let s = sched();
        let (t, tp) = (400, 350);
        let z = Signal::new(vec![1.0, -3.0]);
        let eps = z.scale(1.0 / s.sigma(t).unwrap());
        let out = ddim_step(&z, &eps, t, tp, &s).unwrap();
        let k = s.sigma(tp).unwrap() / s.sigma(t).unwrap();
        for i in 0..2 {
            assert!((out[i] - k * z[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn ddim_rejects_bad_order() {
        let s = sched();
        let z = Signal::zeros(2);
        assert!(matches!(
            ddim_step(&z, &z, 100, 100, &s),
            Err(Error::TimestepOrder { .. })
        ));
        assert!(ddim_step(&z, &z, 1001, 3, &s).is_err());
    }

    #[test]
    fn consistency_coefficients() {
        let s = sched();
        let model = GaussianMixtureScore::two_label(3, -1.0, 2.0, 0.4).unwrap();
        let z = Signal::new(vec![0.2, 0.1, -0.6]);
        let cond = ConditionLabel::Label(1);
        let skip = SolverParams {
            c_skip: 1.0,
            c_out: 0.0,
            guidance: 0.0,
        };
        assert_eq!(consistency_estimate(&z, 301, cond, &model, skip, &s).unwrap(), z);

        let est = consistency_estimate(&z, 301, cond, &model, SolverParams::default(), &s).unwrap();
        let eps = model.epsilon(&s, &z, 301, cond).unwrap();
        let direct = predict_x0(&z, &eps, 301, &s).unwrap();
        assert_eq!(est, direct);
    }

    #[test]
    fn consistency_standard_normal_is_posterior_mean() {
        let s = sched();
        let model = GaussianMixtureScore::standard_normal(2).unwrap();
        let z = Signal::new(vec![1.1, -0.8]);
        for t in [1, 101, 501, 900] {
            let est = consistency_estimate(
                &z,
                t,
                ConditionLabel::Unconditional,
                &model,
                SolverParams::default(),
                &s,
            )
            .unwrap();
            let a = s.alpha(t).unwrap();
            for i in 0..2 {
                assert!((est[i] - a * z[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn vjp_matches_finite_differences() {
        let s = sched();
        let model = GaussianMixtureScore::two_label(3, -1.0, 1.5, 0.3).unwrap();
        let z = Signal::new(vec![0.3, -0.4, 0.8]);
        let v = Signal::new(vec![0.7, -1.1, 0.25]);
        let t = 350;
        for params in [
            SolverParams::default(),
            SolverParams {
                c_skip: 0.3,
                c_out: 0.6,
                guidance: 2.0,
            },
        ] {
            let cond = ConditionLabel::Label(1);
            let jv = consistency_vjp(&z, t, cond, &model, params, &s, &v).unwrap();
            let h = 1e-5;
            for j in 0..3 {
                let mut zp = z.clone().into_vec();
                let mut zm = z.clone().into_vec();
                zp[j] += h;
                zm[j] -= h;
                let fp = consistency_estimate(&zp.into(), t, cond, &model, params, &s).unwrap();
                let fm = consistency_estimate(&zm.into(), t, cond, &model, params, &s).unwrap();
                // (J^T v)_j = sum_i v_i dF_i/dz_j
                let fd: f64 = (0..3).map(|i| v[i] * (fp[i] - fm[i]) / (2.0 * h)).sum();
                assert!((fd - jv[j]).abs() < 1e-6 * fd.abs().max(1.0), "{fd} vs {}", jv[j]);
            }
        }
    }
}
