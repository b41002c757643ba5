//! One measurement-anchored Langevin pass against the exact Gaussian product.
//!
//! With `w = 0` and constant step size the chain samples the product of the
//! anchor Gaussian and the measurement likelihood; the long-run average is
//! compared with that product's mean.

use postsolve::measurement::{measure, MaskOperator, MeasurementOperator};
use postsolve::oracle::product_of_gaussians;
use postsolve::posterior::{langevin_step, run_langevin, LangevinState, PosteriorConfig};
use postsolve::Signal;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> postsolve::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let truth = Signal::new(vec![1.0, -0.5, 0.25, 2.0]);
    let anchor = Signal::new(vec![0.0, 0.0, 0.0, 0.0]);
    let mask = MaskOperator::new(vec![0, 2], 4, 0.1)?;
    let op: MeasurementOperator = mask.clone().into();
    let y = measure(&op, &truth, &mut rng)?;

    // Default knobs: decayed step, w = 0.1.
    let cfg = PosteriorConfig::default();
    let state = LangevinState::new(anchor.clone(), truth.clone(), cfg.step_size)?;
    let (end, trace) = run_langevin(state, &op, &y, 0.5, &cfg, 501, &mut rng)?;
    println!("energy {:.3} -> {:.3}", trace.energies[0], trace.energies[cfg.langevin_steps]);
    println!("last h {:.3e}", trace.step_sizes[cfg.langevin_steps - 1]);
    println!("iterate {:?}", end.iterate.as_slice());

    // Sampling regime: w = 0, constant step.
    let (sigma_t, m) = (1.0, 1.0);
    let cfg = PosteriorConfig {
        step_size: 1e-2,
        inject_weight: 0.0,
        data_scale: m,
        decay: false,
        ..PosteriorConfig::default()
    };
    let mut state = LangevinState::new(anchor.clone(), anchor.clone(), cfg.step_size)?;
    let (burn, steps) = (2_000, 200_000);
    let mut sum = [0.0; 4];
    for k in 0..burn + steps {
        state = langevin_step(&state, &op, &y, sigma_t, &cfg, &mut rng)?;
        if k >= burn {
            sum.iter_mut().zip(state.iterate.iter()).for_each(|(s, v)| *s += v);
        }
    }
    let exact = product_of_gaussians(&anchor, sigma_t, &mask, &y, m)?;
    let est: Vec<f64> = sum.iter().map(|s| s / steps as f64).collect();
    println!("chain mean {est:.3?}");
    println!("exact mean {:.3?}", exact.mean.as_slice());
    Ok(())
}
