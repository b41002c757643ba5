//! Mask and Fourier-magnitude operators with their residual gradients.

use postsolve::measurement::{measure, sample_mask, FourierMagnitudeOperator, MeasurementOperator};
use postsolve::rng::{SeedStreams, Stage};
use postsolve::Signal;

fn main() -> postsolve::Result<()> {
    let streams = SeedStreams::new(11);
    let z = Signal::with_shape((0..16).map(|i| (i as f64 * 0.4).sin()).collect(), 4, 4)?;

    let mask = sample_mask(z.len(), 0.5, 0.01, &mut streams.stream(Stage::Mask))?;
    println!("kept indices {:?}", mask.kept_indices());
    let op: MeasurementOperator = mask.into();
    let y = measure(&op, &z, &mut streams.stream(Stage::Measurement))?;
    println!("mask y       {:?}", y.values);
    let zero = Signal::zeros(z.len());
    println!("misfit at 0  {:.4}", op.misfit(&zero, &y)?);

    let fourier = FourierMagnitudeOperator::new(4, 4, 2, 8, 0.0)?;
    println!("fourier keeps {:?}", fourier.selected_indices());
    let op: MeasurementOperator = fourier.into();
    let y = measure(&op, &z, &mut streams.stream(Stage::Measurement))?;
    let m: Vec<String> = y.values.iter().map(|v| format!("{v:.3}")).collect();
    println!("|F P z|      [{}]", m.join(", "));
    let g = op.residual_gradient(&z.scale(0.5), &y)?;
    println!("grad norm at z/2 {:.4}", g.norm_sq().sqrt());
    Ok(())
}
