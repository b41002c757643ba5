use postsolve::measurement::{dft2, FourierMagnitudeOperator, MaskOperator, Measurement, MeasurementOperator, OperatorKind};
use postsolve::metrics::{mse, psnr};
use postsolve::posterior::{
    langevin_energy, langevin_step_with_noise, renoise, step_size_decay, step_size_schedule, weighted_inject,
    LangevinState, PosteriorConfig,
};
use postsolve::schedule::{build_ddpm_schedule, NoiseSchedule};
use postsolve::score::{cfg_combine, ConditionLabel, GaussianMixtureScore};
use postsolve::solver::ddim_step;
use postsolve::Signal;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

fn vec_of(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, len)
}

proptest! {
    #[test]
    fn schedule_is_monotone(steps in 2usize..1500, start in 1e-5f64..0.01, span in 0.0f64..0.05) {
        let s = build_ddpm_schedule(steps, start, start + span).unwrap();
        let t = s.alpha_bar_table();
        prop_assert!(t.windows(2).all(|w| w[1] < w[0]));
        prop_assert!(t.iter().all(|&a| a > 0.0 && a <= 1.0));
        for k in 0..=steps {
            prop_assert_eq!(s.alpha_sq(k).unwrap() + s.sigma_sq(k).unwrap(), 1.0);
        }
    }

    #[test]
    fn ddim_step_is_affine(z1 in vec_of(6), z2 in vec_of(6), eps in vec_of(6), lam in -2.0f64..2.0, t in 2usize..1000) {
        let s = NoiseSchedule::default();
        let (z1, z2, eps) = (Signal::new(z1), Signal::new(z2), Signal::new(eps));
        let mix = z1.lincomb(lam, &z2, 1.0 - lam).unwrap();
        let lhs = ddim_step(&mix, &eps, t, t / 2, &s).unwrap();
        let rhs = ddim_step(&z1, &eps, t, t / 2, &s).unwrap()
            .lincomb(lam, &ddim_step(&z2, &eps, t, t / 2, &s).unwrap(), 1.0 - lam).unwrap();
        for (a, b) in lhs.iter().zip(rhs.iter()) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn mask_projections(flags in prop::collection::vec(any::<bool>(), 1..40), z in vec_of(40)) {
        let d = flags.len();
        let kept: Vec<usize> = (0..d).filter(|&i| flags[i]).collect();
        prop_assume!(!kept.is_empty());
        let mask = MaskOperator::new(kept.clone(), d, 0.0).unwrap();
        let y: Vec<f64> = (0..kept.len()).map(|i| i as f64 - 0.5).collect();
        prop_assert_eq!(mask.apply(&Signal::new(mask.adjoint(&y).unwrap())).unwrap(), y);
        let z = Signal::new(z[..d].to_vec());
        let proj = Signal::new(mask.adjoint(&mask.apply(&z).unwrap()).unwrap());
        let again = Signal::new(mask.adjoint(&mask.apply(&proj).unwrap()).unwrap());
        prop_assert_eq!(&proj, &again);
        for i in 0..d {
            prop_assert_eq!(proj[i], if flags[i] { z[i] } else { 0.0 });
        }
    }

    #[test]
    fn parseval(rows in 1usize..17, cols in 1usize..17, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let re = postsolve::rng::standard_normals(&mut rng, rows * cols);
        let im = postsolve::rng::standard_normals(&mut rng, rows * cols);
        let mut buf: Vec<Complex64> = re.iter().zip(&im).map(|(a, b)| Complex64::new(*a, *b)).collect();
        let orig = buf.clone();
        let before: f64 = buf.iter().map(|v| v.norm_sqr()).sum();
        dft2(&mut buf, rows, cols, false);
        let after: f64 = buf.iter().map(|v| v.norm_sqr()).sum();
        prop_assert!((after.sqrt() - before.sqrt()).abs() <= 1e-9 * before.sqrt());
        dft2(&mut buf, rows, cols, true);
        for (a, b) in buf.iter().zip(&orig) {
            prop_assert!((a - b).norm() <= 1e-12 * (1.0 + b.norm()));
        }
    }

    #[test]
    fn fourier_gradient_directional(seed in any::<u64>(), rows in 2usize..6, cols in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = rows * cols;
        let op = MeasurementOperator::from(FourierMagnitudeOperator::new(rows, cols, 2, 8, 0.0).unwrap());
        let y = Measurement { values: postsolve::rng::standard_normals(&mut rng, d).iter().map(|v| v.abs()).collect(), operator: OperatorKind::FourierMagnitude };
        let z = Signal::new(postsolve::rng::standard_normals(&mut rng, d));
        let delta = Signal::new(postsolve::rng::standard_normals(&mut rng, d));
        let g = op.residual_gradient(&z, &y).unwrap();
        let h = 1e-6;
        let fd = (op.misfit(&z.lincomb(1.0, &delta, h).unwrap(), &y).unwrap()
            - op.misfit(&z.lincomb(1.0, &delta, -h).unwrap(), &y).unwrap()) / (2.0 * h);
        let scale = g.norm_sq().sqrt() * delta.norm_sq().sqrt();
        prop_assert!((g.dot(&delta).unwrap() - fd).abs() <= 1e-5 * scale.max(1e-12));
    }

    #[test]
    fn noiseless_langevin_descends(seed in any::<u64>(), frac in 0.05f64..0.99, sigma_t in 0.05f64..1.0, m in 0.01f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let op = MeasurementOperator::from(MaskOperator::new(vec![0, 3, 4], 6, m).unwrap());
        let y = Measurement { values: postsolve::rng::standard_normals(&mut rng, 3), operator: OperatorKind::Mask };
        let lip = 1.0 / (sigma_t * sigma_t) + 1.0 / (m * m);
        let cfg = PosteriorConfig { step_size: frac / lip, inject_weight: 0.0, data_scale: m, langevin_steps: 20, ..PosteriorConfig::default() };
        let anchor = Signal::new(postsolve::rng::standard_normals(&mut rng, 6));
        let mut state = LangevinState::new(anchor.clone(), anchor.clone(), cfg.step_size).unwrap();
        state.iterate = Signal::new(postsolve::rng::standard_normals(&mut rng, 6));
        let zero = Signal::zeros(6);
        for _ in 0..cfg.langevin_steps {
            let before = langevin_energy(&state.iterate, &anchor, &op, &y, sigma_t, m).unwrap();
            state = langevin_step_with_noise(&state, &op, &y, sigma_t, &cfg, &zero).unwrap();
            let after = langevin_energy(&state.iterate, &anchor, &op, &y, sigma_t, m).unwrap();
            prop_assert!(after <= before * (1.0 + 1e-12));
        }
    }

    #[test]
    fn decay_schedule_endpoints(total in 1usize..500, h0 in 1e-8f64..1.0) {
        prop_assert_eq!(step_size_decay(0, total, h0).unwrap(), h0);
        prop_assert!((step_size_decay(total, total, h0).unwrap() / h0 - 0.01).abs() < 1e-15);
        prop_assert!(step_size_decay(total + 1, total, h0).is_err());
        let hs = step_size_schedule(h0, total).unwrap();
        prop_assert!(hs.windows(2).all(|w| w[1] < w[0] && w[1] > 0.0));
    }

    #[test]
    fn inject_fixed_point_and_shift(a in vec_of(5), b in vec_of(5), w in 0.0f64..0.2, seed in any::<u64>(), tau in 1usize..1000) {
        let (a, b) = (Signal::new(a), Signal::new(b));
        prop_assert_eq!(weighted_inject(&a, &a, w).unwrap(), a.clone());
        // Same noise: injecting shifts the re-noised mean by sqrt(abar) w (b - a).
        let s = NoiseSchedule::default();
        let mixed = weighted_inject(&a, &b, w).unwrap();
        let r1 = renoise(&mixed, tau, &s, true, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let r0 = renoise(&a, tau, &s, true, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let alpha = s.alpha(tau).unwrap();
        for i in 0..5 {
            let expect = alpha * w * (b[i] - a[i]);
            prop_assert!((r1[i] - r0[i] - expect).abs() <= 1e-12 * (1.0 + r1[i].abs()));
        }
    }

    #[test]
    fn metric_orderings(a in vec_of(16), b in vec_of(16), k in 1.0f64..4.0) {
        let (a, b) = (Signal::new(a), Signal::new(b));
        let e = mse(&a, &b).unwrap();
        prop_assert!(e >= 0.0);
        prop_assert_eq!(e, mse(&b, &a).unwrap());
        prop_assume!(e > 0.0);
        let far = a.lincomb(1.0, &b.sub(&a).unwrap(), k).unwrap();
        prop_assert!(psnr(&a, &far, 1.0).unwrap() <= psnr(&a, &b, 1.0).unwrap());
    }

    #[test]
    fn cfg_bias_grows_with_guidance(z in vec_of(3), t in 1usize..1000, g in 0.0f64..10.0, dg in 0.0f64..10.0) {
        let s = NoiseSchedule::default();
        let model = GaussianMixtureScore::two_label(3, -2.0, 2.0, 0.3).unwrap();
        let z = Signal::new(z);
        let c = model.epsilon(&s, &z, t, ConditionLabel::Label(0)).unwrap();
        let u = model.epsilon(&s, &z, t, ConditionLabel::Unconditional).unwrap();
        let bias = |g: f64| cfg_combine(&c, &u, g).unwrap().sub(&c).unwrap().norm_sq();
        prop_assert!(bias(g + dg) >= bias(g));
    }
}
