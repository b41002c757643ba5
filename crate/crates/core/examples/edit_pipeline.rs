//! Editing a label-0 source toward label 1 under a random half mask.

use postsolve::pipeline::{edit, RunSpec};
use postsolve::schedule::build_ddpm_schedule;
use postsolve::score::GaussianMixtureScore;
use postsolve::Signal;

fn main() -> postsolve::Result<()> {
    let schedule = build_ddpm_schedule(1000, 1e-4, 0.02)?;
    let model = GaussianMixtureScore::two_label(8, -2.0, 2.0, 0.25)?;
    let source = Signal::new(vec![-2.2, -1.6, -2.0, -2.5, -1.8, -2.1, -1.9, -2.3]);

    for w in [0.1, 0.0] {
        let mut spec = RunSpec::edit(source.clone(), 0, 1).with_seed(42);
        spec.posterior.inject_weight = w;
        let record = edit(&spec, &model, &schedule)?;
        println!("w = {w}: kept {:?}", record.kept_indices.as_deref().unwrap_or(&[]));
        for s in &record.snapshots {
            println!(
                "  tau {:>3}  pre mse {:>8.4}  post mse {:>8.4}",
                s.tau, s.pre_mse, s.post_mse
            );
        }
        println!("  output {:.2?}", record.output.as_slice());
        println!("  measured mse {:.3e}", record.measured_mse.unwrap_or(f64::NAN));
    }
    Ok(())
}
