//! Runs the built-in verification suites and the conjugate-posterior oracle.

use postsolve::measurement::{measure, MaskOperator, MeasurementOperator};
use postsolve::oracle::conjugate_posterior;
use postsolve::verify::{all_passed, run_suite, SUITES};
use postsolve::Signal;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> postsolve::Result<()> {
    for suite in SUITES.iter().filter(|s| **s != "posterior") {
        let checks = run_suite(suite)?;
        println!("{suite}: {}", if all_passed(&checks) { "ok" } else { "FAILED" });
        for c in checks.iter().filter(|c| !c.passed || !c.gating) {
            println!("  {c}");
        }
    }

    let mask = MaskOperator::new(vec![1, 3], 4, 0.1)?;
    let truth = Signal::new(vec![0.2, 1.0, -0.3, -1.0]);
    let y = measure(&MeasurementOperator::from(mask.clone()), &truth, &mut ChaCha8Rng::seed_from_u64(2))?;
    let post = conjugate_posterior(&Signal::zeros(4), &Signal::filled(4, 1.0), &mask, &y)?;
    println!("posterior mean {:.3?}", post.mean.as_slice());
    println!("posterior var  {:.3?}", post.diag_covariance.as_slice());
    Ok(())
}
