//! The analytic mixture oracle: epsilon, score and guided epsilon.
//!
//! Guidance pushes the prediction away from the unconditional one; the
//! Tweedie estimate is checked against brute-force quadrature.

use postsolve::oracle::{brute_force_tweedie, QuadratureGrid};
use postsolve::schedule::build_ddpm_schedule;
use postsolve::score::{ConditionLabel, GaussianMixtureScore};
use postsolve::solver::{consistency_estimate, SolverParams};
use postsolve::Signal;

fn main() -> postsolve::Result<()> {
    let schedule = build_ddpm_schedule(1000, 1e-4, 0.02)?;
    let model = GaussianMixtureScore::two_label(2, -2.0, 2.0, 0.25)?;
    let z = Signal::new(vec![0.3, -0.4]);
    let t = 501;
    let cond = ConditionLabel::Label(1);

    println!("score       {:?}", model.score(&schedule, &z, t, cond)?.as_slice());
    for g in [0.0, 1.0, 3.0, 7.5] {
        let eps = model.guided_epsilon(&schedule, &z, t, cond, g)?;
        println!("eps (g={g:<3}) {:?}", eps.as_slice());
    }

    let x0 = consistency_estimate(&z, t, cond, &model, SolverParams::default(), &schedule)?;
    let quad = brute_force_tweedie(&model, &schedule, &z, t, cond, QuadratureGrid::default())?;
    println!("x0 analytic {:?}", x0.as_slice());
    println!("x0 quadrature {:?}", quad.as_slice());
    Ok(())
}
