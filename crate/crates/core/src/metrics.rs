//! Reconstruction quality measures.

use crate::error::{check_dim, Error, Result};
use crate::signal::Signal;

pub const DEFAULT_SSIM_WINDOW: usize = 7;

/// Mean squared error.
pub fn mse(a: &Signal, b: &Signal) -> Result<f64> {
    check_dim(a.len(), b.len())?;
    if a.is_empty() {
        return Err(Error::InvalidRange {
            name: "signal",
            reason: "empty".into(),
        });
    }
    let s: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum();
    Ok(s / a.len() as f64)
}

/// Peak signal-to-noise ratio in dB. Identical inputs give `f64::INFINITY`.
pub fn psnr(a: &Signal, b: &Signal, peak: f64) -> Result<f64> {
    if !(peak > 0.0) {
        return Err(Error::InvalidRange {
            name: "peak",
            reason: "must be positive".into(),
        });
    }
    let e = mse(a, b)?;
    if e == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / e).log10())
}

/// Mean structural similarity over all fully contained square box windows.
pub fn ssim(a: &Signal, b: &Signal, peak: f64, window: usize) -> Result<f64> {
    check_dim(a.len(), b.len())?;
    let (rows, cols) = a.require_shape()?;
    if b.shape() != Some((rows, cols)) {
        return Err(Error::ShapeMismatch);
    }
    if window == 0 || window > rows || window > cols {
        return Err(Error::InvalidRange {
            name: "ssim window",
            reason: format!("{window} does not fit in {rows}x{cols}"),
        });
    }
    let c1 = (0.01 * peak).powi(2);
    let c2 = (0.03 * peak).powi(2);
    let n = (window * window) as f64;
    let (x, y) = (a.as_slice(), b.as_slice());
    let mut total = 0.0;
    let mut count = 0usize;
    for r0 in 0..=rows - window {
        for c0 in 0..=cols - window {
            let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for r in r0..r0 + window {
                for c in c0..c0 + window {
                    let (u, v) = (x[r * cols + c], y[r * cols + c]);
                    sx += u;
                    sy += v;
                    sxx += u * u;
                    syy += v * v;
                    sxy += u * v;
                }
            }
            let (mx, my) = (sx / n, sy / n);
            let vx = sxx / n - mx * mx;
            let vy = syy / n - my * my;
            let cov = sxy / n - mx * my;
            total += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Summary numbers for one output against a reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub mse: f64,
    pub psnr: f64,
    pub ssim: Option<f64>,
}

impl MetricReport {
    /// SSIM is only reported for shaped signals large enough for the window.
    pub fn compute(output: &Signal, reference: &Signal, peak: f64) -> Result<Self> {
        let ssim = match output.shape() {
            Some((r, c)) if r >= DEFAULT_SSIM_WINDOW && c >= DEFAULT_SSIM_WINDOW => {
                Some(ssim(output, reference, peak, DEFAULT_SSIM_WINDOW)?)
            }
            _ => None,
        };
        Ok(Self {
            mse: mse(output, reference)?,
            psnr: psnr(output, reference, peak)?,
            ssim,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_small_case() {
        let a = Signal::new(vec![0.0, 0.0]);
        let b = Signal::new(vec![3.0, 4.0]);
        assert_eq!(mse(&a, &b).unwrap(), 12.5);
        assert!(mse(&a, &Signal::zeros(3)).is_err());
    }

    #[test]
    fn psnr_values() {
        let a = Signal::zeros(4);
        let b = Signal::filled(4, 0.1);
        assert!((psnr(&a, &b, 1.0).unwrap() - 20.0).abs() < 1e-12);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn ssim_identity_and_shape() {
        let data: Vec<f64> = (0..100).map(|i| ((i * 37) % 11) as f64 / 10.0).collect();
        let a = Signal::with_shape(data, 10, 10).unwrap();
        assert!((ssim(&a, &a, 1.0, 7).unwrap() - 1.0).abs() < 1e-12);
        let flat = Signal::new(vec![0.0; 100]);
        assert!(matches!(ssim(&flat, &flat, 1.0, 7), Err(Error::ShapeMismatch)));
        assert!(ssim(&a, &a, 1.0, 11).is_err());
    }

    #[test]
    fn ssim_against_direct_statistics() {
        let x: Vec<f64> = (0..9).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = (0..9).map(|i| 0.8 - i as f64 * 0.05).collect();
        let a = Signal::with_shape(x.clone(), 3, 3).unwrap();
        let b = Signal::with_shape(y.clone(), 3, 3).unwrap();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (mx, my) = (mean(&x), mean(&y));
        let vx = x.iter().map(|u| (u - mx).powi(2)).sum::<f64>() / 9.0;
        let vy = y.iter().map(|u| (u - my).powi(2)).sum::<f64>() / 9.0;
        let cov = x.iter().zip(&y).map(|(u, v)| (u - mx) * (v - my)).sum::<f64>() / 9.0;
        let (c1, c2) = (1e-4, 9e-4);
        let expect = (2.0 * mx * my + c1) * (2.0 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        assert!((ssim(&a, &b, 1.0, 3).unwrap() - expect).abs() < 1e-12);
    }
}
