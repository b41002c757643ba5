//! Deterministic DDIM sampling from t = 501 down to the clean endpoint.

use postsolve::schedule::build_ddpm_schedule;
use postsolve::score::{ConditionLabel, GaussianMixtureScore};
use postsolve::solver::{consistency_estimate, ddim_sample, forward_noise, SolverParams};
use postsolve::Signal;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> postsolve::Result<()> {
    let schedule = build_ddpm_schedule(1000, 1e-4, 0.02)?;
    let model = GaussianMixtureScore::two_label(4, -2.0, 2.0, 0.25)?;
    let params = SolverParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);

    let source = Signal::new(vec![-2.1, -1.7, -2.4, -1.9]);
    let z = forward_noise(&source, 501, &schedule, &mut rng)?;
    println!("noised      {:?}", z.as_slice());
    for label in [0, 1] {
        let cond = ConditionLabel::Label(label);
        let ddim = ddim_sample(&z, 501, 0, cond, &model, params, &schedule)?;
        let one_step = consistency_estimate(&z, 501, cond, &model, params, &schedule)?;
        println!("label {label} ddim     {:?}", ddim.as_slice());
        println!("label {label} one-step {:?}", one_step.as_slice());
    }
    Ok(())
}
