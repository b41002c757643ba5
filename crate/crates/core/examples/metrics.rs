//! MSE, PSNR and SSIM of progressively noisier copies of an image.

use postsolve::metrics::MetricReport;
use postsolve::rng::standard_normals;
use postsolve::Signal;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> postsolve::Result<()> {
    let (rows, cols) = (16, 16);
    let clean: Vec<f64> = (0..rows * cols)
        .map(|i| 0.5 + 0.4 * ((i % cols) as f64 / 3.0).sin() * ((i / cols) as f64 / 5.0).cos())
        .collect();
    let reference = Signal::with_shape(clean.clone(), rows, cols)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let noise = standard_normals(&mut rng, rows * cols);
    for level in [0.0, 0.01, 0.05, 0.2] {
        let data = clean.iter().zip(&noise).map(|(c, n)| c + level * n).collect();
        let noisy = Signal::with_shape(data, rows, cols)?;
        let r = MetricReport::compute(&noisy, &reference, 1.0)?;
        println!(
            "noise {level:<5} mse {:.3e} psnr {:>6.2} ssim {:.4}",
            r.mse,
            r.psnr,
            r.ssim.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
