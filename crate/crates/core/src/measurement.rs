//! Forward measurement operators and data-fit gradients.
//!
//! Two operators are supported: a random coordinate mask `y = P z + n` and
//! the Fourier-magnitude map `y = |F P z| + n`, where `P` keeps a strided
//! fraction `k / n` of the lattice and `F` is the unitary 2D DFT.

use std::fmt;

use rand::Rng;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{check_dim, Error, Result};
use crate::rng::standard_normals;
use crate::signal::Signal;

pub const DEFAULT_NOISE_SIGMA: f64 = 0.01;

/// Coordinate-selection operator whose rows are elementary unit vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskOperator {
    kept: Vec<usize>,
    dimension: usize,
    noise_sigma: f64,
}

impl MaskOperator {
    /// Builds a mask from explicit indices; they are sorted, and duplicates
    /// or out-of-range entries are rejected.
    pub fn new(mut kept: Vec<usize>, dimension: usize, noise_sigma: f64) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidRange {
                name: "mask.dimension",
                reason: "must be positive".into(),
            });
        }
        check_sigma(noise_sigma)?;
        kept.sort_unstable();
        if kept.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidRange {
                name: "mask.kept",
                reason: "duplicate index".into(),
            });
        }
        if let Some(&last) = kept.last() {
            if last >= dimension {
                return Err(Error::InvalidRange {
                    name: "mask.kept",
                    reason: format!("index {last} out of range for dimension {dimension}"),
                });
            }
        }
        Ok(Self {
            kept,
            dimension,
            noise_sigma,
        })
    }

    pub fn identity(dimension: usize, noise_sigma: f64) -> Result<Self> {
        Self::new((0..dimension).collect(), dimension, noise_sigma)
    }

    pub fn kept_indices(&self) -> &[usize] {
        &self.kept
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn with_noise_sigma(&self, noise_sigma: f64) -> Result<Self> {
        check_sigma(noise_sigma)?;
        Ok(Self {
            noise_sigma,
            ..self.clone()
        })
    }

    /// Boolean membership of each coordinate.
    pub fn kept_flags(&self) -> Vec<bool> {
        let mut flags = vec![false; self.dimension];
        for &i in &self.kept {
            flags[i] = true;
        }
        flags
    }

    /// `P z`.
    pub fn apply(&self, z: &Signal) -> Result<Vec<f64>> {
        check_dim(self.dimension, z.len())?;
        Ok(self.kept.iter().map(|&i| z[i]).collect())
    }

    /// `P^T y`.
    pub fn adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.kept.len(), y.len())?;
        let mut out = vec![0.0; self.dimension];
        for (&i, &v) in self.kept.iter().zip(y) {
            out[i] = v;
        }
        Ok(out)
    }

    /// Dense `P` as rows of 0/1 entries.
    pub fn matrix(&self) -> Vec<Vec<f64>> {
        self.kept
            .iter()
            .map(|&i| {
                let mut row = vec![0.0; self.dimension];
                row[i] = 1.0;
                row
            })
            .collect()
    }
}

/// Keeps each of `dimension` indices independently with `keep_probability`.
///
/// An empty draw is resampled; after 64 empty draws (or immediately when the
/// probability is zero) a single uniformly drawn index is kept instead.
pub fn sample_mask<R: Rng + ?Sized>(
    dimension: usize,
    keep_probability: f64,
    noise_sigma: f64,
    rng: &mut R,
) -> Result<MaskOperator> {
    if !(0.0..=1.0).contains(&keep_probability) {
        return Err(Error::InvalidRange {
            name: "posterior.f",
            reason: format!("keep probability must be in [0, 1], got {keep_probability}"),
        });
    }
    if dimension == 0 {
        return Err(Error::InvalidRange {
            name: "mask.dimension",
            reason: "must be positive".into(),
        });
    }
    if keep_probability > 0.0 {
        for _ in 0..64 {
            let kept: Vec<usize> = (0..dimension)
                .filter(|_| rng.random::<f64>() < keep_probability)
                .collect();
            if !kept.is_empty() {
                return MaskOperator::new(kept, dimension, noise_sigma);
            }
        }
    }
    let only = rng.random_range(0..dimension);
    MaskOperator::new(vec![only], dimension, noise_sigma)
}

/// `|F P z|` with `P` a strided `k / n` coordinate selection on an
/// `rows x cols` lattice and `F` the unitary 2D DFT.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierMagnitudeOperator {
    rows: usize,
    cols: usize,
    keep: usize,
    of: usize,
    noise_sigma: f64,
    selected: Vec<usize>,
}

impl FourierMagnitudeOperator {
    pub fn new(rows: usize, cols: usize, keep: usize, of: usize, noise_sigma: f64) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidRange {
                name: "measurement.grid",
                reason: "rows and cols must be positive".into(),
            });
        }
        if keep == 0 || of == 0 || keep > of {
            return Err(Error::InvalidRange {
                name: "measurement.oversample",
                reason: format!("need 0 < k <= n, got k = {keep}, n = {of}"),
            });
        }
        check_sigma(noise_sigma)?;
        let d = rows * cols;
        let count = (d * keep).div_ceil(of);
        let selected = (0..count).map(|j| j * d / count).collect();
        Ok(Self {
            rows,
            cols,
            keep,
            of,
            noise_sigma,
            selected,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn oversample(&self) -> (usize, usize) {
        (self.keep, self.of)
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn dimension(&self) -> usize {
        self.rows * self.cols
    }

    /// Lattice indices retained before the transform.
    pub fn selected_indices(&self) -> &[usize] {
        &self.selected
    }

    fn project(&self, z: &Signal) -> Result<Vec<Complex64>> {
        check_dim(self.dimension(), z.len())?;
        let mut buf = vec![Complex64::new(0.0, 0.0); self.dimension()];
        for &i in &self.selected {
            buf[i] = Complex64::new(z[i], 0.0);
        }
        Ok(buf)
    }

    /// Complex spectrum `F P z`.
    pub fn spectrum(&self, z: &Signal) -> Result<Vec<Complex64>> {
        let mut buf = self.project(z)?;
        dft2(&mut buf, self.rows, self.cols, false);
        Ok(buf)
    }

    /// Noise-free magnitudes `|F P z|`.
    pub fn apply(&self, z: &Signal) -> Result<Vec<f64>> {
        Ok(self.spectrum(z)?.iter().map(|c| c.norm()).collect())
    }

    /// Gradient of `0.5 || |F P z| - y ||^2`.
    ///
    /// With `u = F P z` and `a = |u|`, the gradient is
    /// `P^T Re(F^H [(a - y) u / a])`; entries with `a = 0` contribute the
    /// zero subgradient.
    pub fn residual_gradient(&self, z: &Signal, y: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dimension(), y.len())?;
        let mut u = self.spectrum(z)?;
        for (c, &target) in u.iter_mut().zip(y) {
            let a = c.norm();
            *c = if a > 0.0 {
                *c * ((a - target) / a)
            } else {
                Complex64::new(0.0, 0.0)
            };
        }
        dft2(&mut u, self.rows, self.cols, true);
        let mut out = vec![0.0; self.dimension()];
        for &i in &self.selected {
            out[i] = u[i].re;
        }
        Ok(out)
    }
}

/// In-place unitary 2D DFT over a row-major `rows x cols` buffer
/// (`1 / sqrt(rows cols)` scaling in both directions).
pub fn dft2(buf: &mut [Complex64], rows: usize, cols: usize, inverse: bool) {
    assert_eq!(buf.len(), rows * cols, "buffer does not match the lattice");
    let mut planner = FftPlanner::<f64>::new();
    let plan = |n: usize, planner: &mut FftPlanner<f64>| {
        if inverse {
            planner.plan_fft_inverse(n)
        } else {
            planner.plan_fft_forward(n)
        }
    };
    let row_fft = plan(cols, &mut planner);
    for row in buf.chunks_exact_mut(cols) {
        row_fft.process(row);
    }
    let col_fft = plan(rows, &mut planner);
    let mut column = vec![Complex64::new(0.0, 0.0); rows];
    for c in 0..cols {
        for r in 0..rows {
            column[r] = buf[r * cols + c];
        }
        col_fft.process(&mut column);
        for r in 0..rows {
            buf[r * cols + c] = column[r];
        }
    }
    let scale = 1.0 / ((rows * cols) as f64).sqrt();
    for v in buf.iter_mut() {
        *v *= scale;
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma >= 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidRange {
            name: "measurement.sigma",
            reason: format!("noise sigma must be non-negative, got {sigma}"),
        })
    }
}

/// Forward operator used by the sampler.
#[derive(Debug, Clone, PartialEq)]
pub enum MeasurementOperator {
    Mask(MaskOperator),
    FourierMagnitude(FourierMagnitudeOperator),
}

/// Kind tag carried by a [`Measurement`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    Mask,
    FourierMagnitude,
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OperatorKind::Mask => f.write_str("mask"),
            OperatorKind::FourierMagnitude => f.write_str("fourier"),
        }
    }
}

/// Observed measurement `y` together with the kind of operator that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub values: Vec<f64>,
    pub operator: OperatorKind,
}

impl From<MaskOperator> for MeasurementOperator {
    fn from(op: MaskOperator) -> Self {
        MeasurementOperator::Mask(op)
    }
}

impl From<FourierMagnitudeOperator> for MeasurementOperator {
    fn from(op: FourierMagnitudeOperator) -> Self {
        MeasurementOperator::FourierMagnitude(op)
    }
}

impl MeasurementOperator {
    pub fn kind(&self) -> OperatorKind {
        match self {
            MeasurementOperator::Mask(_) => OperatorKind::Mask,
            MeasurementOperator::FourierMagnitude(_) => OperatorKind::FourierMagnitude,
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            MeasurementOperator::Mask(m) => m.dimension(),
            MeasurementOperator::FourierMagnitude(f) => f.dimension(),
        }
    }

    pub fn output_dimension(&self) -> usize {
        match self {
            MeasurementOperator::Mask(m) => m.kept_indices().len(),
            MeasurementOperator::FourierMagnitude(f) => f.dimension(),
        }
    }

    pub fn noise_sigma(&self) -> f64 {
        match self {
            MeasurementOperator::Mask(m) => m.noise_sigma(),
            MeasurementOperator::FourierMagnitude(f) => f.noise_sigma(),
        }
    }

    pub fn as_mask(&self) -> Option<&MaskOperator> {
        match self {
            MeasurementOperator::Mask(m) => Some(m),
            MeasurementOperator::FourierMagnitude(_) => None,
        }
    }

    /// Noise-free forward map `A(z)`.
    pub fn forward(&self, z: &Signal) -> Result<Vec<f64>> {
        match self {
            MeasurementOperator::Mask(m) => m.apply(z),
            MeasurementOperator::FourierMagnitude(f) => f.apply(z),
        }
    }

    fn check_measurement(&self, y: &Measurement) -> Result<()> {
        if y.operator != self.kind() {
            return Err(Error::OperatorMode(format!(
                "measurement from a {} operator used with a {} operator",
                y.operator,
                self.kind()
            )));
        }
        check_dim(self.output_dimension(), y.values.len())
    }

    /// Gradient of `0.5 ||A(z) - y||^2`.
    pub fn residual_gradient(&self, z: &Signal, y: &Measurement) -> Result<Signal> {
        self.check_measurement(y)?;
        let g = match self {
            MeasurementOperator::Mask(m) => {
                let pz = m.apply(z)?;
                let r: Vec<f64> = pz.iter().zip(&y.values).map(|(a, b)| a - b).collect();
                m.adjoint(&r)?
            }
            MeasurementOperator::FourierMagnitude(f) => f.residual_gradient(z, &y.values)?,
        };
        Ok(Signal::new(g).shaped_like(z))
    }

    /// `0.5 ||A(z) - y||^2`.
    pub fn misfit(&self, z: &Signal, y: &Measurement) -> Result<f64> {
        self.check_measurement(y)?;
        let az = self.forward(z)?;
        Ok(0.5 * az.iter().zip(&y.values).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
    }
}

/// Synthesizes `y = A(z0) + sigma n`, `n ~ N(0, I)`.
pub fn measure<R: Rng + ?Sized>(
    op: &MeasurementOperator,
    z0: &Signal,
    rng: &mut R,
) -> Result<Measurement> {
    let clean = op.forward(z0)?;
    let sigma = op.noise_sigma();
    let noise = standard_normals(rng, clean.len());
    let values = clean.iter().zip(noise).map(|(c, n)| c + sigma * n).collect();
    Ok(Measurement {
        values,
        operator: op.kind(),
    })
}
