//! Reconstruction from a masked measurement and from Fourier magnitudes,
//! writing the record document and trajectory log to stdout.

use postsolve::pipeline::{reconstruct, OperatorSpec, RunSpec};
use postsolve::schedule::build_ddpm_schedule;
use postsolve::score::GaussianMixtureScore;
use postsolve::Signal;

fn main() -> postsolve::Result<()> {
    let schedule = build_ddpm_schedule(1000, 1e-4, 0.02)?;
    let model = GaussianMixtureScore::isotropic(vec![0.5; 16], 0.1)?;
    let source = Signal::with_shape((0..16).map(|i| 0.5 + 0.3 * (i as f64).cos()).collect(), 4, 4)?;

    let spec = RunSpec::reconstruct(source.clone(), 0).with_seed(1);
    let record = reconstruct(&spec, &model, &schedule)?;
    print!("{}", record.to_document());
    println!("first trajectory rows:");
    for line in record.trajectory_csv().lines().take(4) {
        println!("  {line}");
    }

    let mut spec = RunSpec::reconstruct(source, 0).with_seed(1);
    spec.operator = OperatorSpec::FourierMagnitude { keep: 4, of: 8, sigma: 0.01 };
    let record = reconstruct(&spec, &model, &schedule)?;
    println!("fourier: mse {:.4} psnr {:.2}", record.metrics.mse, record.metrics.psnr);
    Ok(())
}
