//! End-to-end editing and reconstruction runs.
//!
//! The codec is the identity, so the sampler works on the source signal
//! directly. Each run draws every random quantity from per-stage streams of
//! one seed, so identical specs give bit-identical records.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{check_dim, Error, Result};
use crate::measurement::{
    measure, sample_mask, FourierMagnitudeOperator, MaskOperator, Measurement, MeasurementOperator,
};
use crate::metrics::{mse, MetricReport};
use crate::posterior::{langevin_energy, renoise, run_langevin, LangevinState, PosteriorConfig};
use crate::rng::{standard_normals, SeedStreams, Stage};
use crate::schedule::{NoiseSchedule, TimeSequence};
use crate::score::{ConditionLabel, GaussianMixtureScore};
use crate::signal::Signal;
use crate::solver::{consistency_estimate, forward_noise, SolverParams};

/// Inner solver timestep used when the config does not override it.
pub const DEFAULT_SOLVER_TIMESTEP: usize = 501;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Edit,
    Reconstruct,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Edit => "edit",
            Mode::Reconstruct => "reconstruct",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "edit" => Ok(Mode::Edit),
            "reconstruct" => Ok(Mode::Reconstruct),
            other => Err(Error::Record(format!("unknown mode `{other}`"))),
        }
    }
}

/// How the measurement operator is obtained for a run.
#[derive(Debug, Clone, PartialEq)]
pub enum OperatorSpec {
    /// Random mask keeping each coordinate with `posterior.keep_probability`,
    /// drawn from the run's mask stream.
    RandomMask { sigma: f64 },
    /// A fixed, caller-supplied mask.
    Mask(MaskOperator),
    /// Fourier magnitude on the source lattice (a `1 x d` row if unshaped).
    FourierMagnitude { keep: usize, of: usize, sigma: f64 },
}

/// Everything needed to execute one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub mode: Mode,
    pub source: Signal,
    pub source_label: ConditionLabel,
    pub target_label: ConditionLabel,
    pub operator: OperatorSpec,
    pub posterior: PosteriorConfig,
    pub solver: SolverParams,
    /// Noise level `t_j` of the inner solver loop.
    pub solver_timestep: usize,
    pub times: TimeSequence,
    /// Peak value for PSNR/SSIM.
    pub peak: f64,
    /// Configuration echo copied into the record header.
    pub echo: Vec<(String, String)>,
}

impl RunSpec {
    /// Editing spec with the default times and a random half mask.
    pub fn edit(source: Signal, source_label: u32, target_label: u32) -> Self {
        Self {
            mode: Mode::Edit,
            source,
            source_label: ConditionLabel::Label(source_label),
            target_label: ConditionLabel::Label(target_label),
            operator: OperatorSpec::RandomMask {
                sigma: crate::measurement::DEFAULT_NOISE_SIGMA,
            },
            posterior: PosteriorConfig::default(),
            solver: SolverParams::default(),
            solver_timestep: DEFAULT_SOLVER_TIMESTEP,
            times: TimeSequence::default(),
            peak: 1.0,
            echo: Vec::new(),
        }
    }

    /// Reconstruction spec; source and target label coincide.
    pub fn reconstruct(source: Signal, label: u32) -> Self {
        Self {
            mode: Mode::Reconstruct,
            target_label: ConditionLabel::Label(label),
            ..Self::edit(source, label, label)
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.posterior.seed = seed;
        self
    }

    pub fn validate(&self, model: &GaussianMixtureScore, schedule: &NoiseSchedule) -> Result<()> {
        self.posterior.validate()?;
        self.times.validate_against(schedule)?;
        schedule.check(self.solver_timestep)?;
        check_dim(model.dimension(), self.source.len())?;
        if !self.source.is_finite() {
            return Err(Error::Config("source signal is not finite".into()));
        }
        if self.times.outer_iters() != self.posterior.outer_iters {
            return Err(Error::Config(format!(
                "posterior.N = {} but the time sequence has {} outer iterations",
                self.posterior.outer_iters,
                self.times.outer_iters()
            )));
        }
        if self.times.inner_steps() != self.posterior.inner_solver_steps {
            return Err(Error::Config(format!(
                "posterior.n = {} but the time sequence uses {} inner steps",
                self.posterior.inner_solver_steps,
                self.times.inner_steps()
            )));
        }
        if self.mode == Mode::Reconstruct && self.source_label != self.target_label {
            return Err(Error::Config(
                "reconstruction requires the target label to equal the source label".into(),
            ));
        }
        if self.mode == Mode::Edit && matches!(self.operator, OperatorSpec::FourierMagnitude { .. }) {
            return Err(Error::OperatorMode(
                "the Fourier-magnitude operator is reconstruction-only; editing needs a mask".into(),
            ));
        }
        if !(self.peak > 0.0) {
            return Err(Error::Config("peak must be positive".into()));
        }
        Ok(())
    }
}

/// One outer iteration of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub tau: usize,
    /// Solver estimate before the Langevin pass.
    pub pre: Signal,
    /// Langevin output `z0^(T)` (equal to `pre` when the optimizer is off).
    pub post: Signal,
    pub pre_mse: f64,
    pub post_mse: f64,
    pub energy_first: f64,
    pub energy_last: f64,
}

/// One Langevin step of the trajectory log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub step: usize,
    pub tau: usize,
    pub k: usize,
    pub h: f64,
    pub energy: f64,
    pub mse_to_source: f64,
}

/// Result of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub mode: Mode,
    pub seed: u64,
    pub snapshots: Vec<Snapshot>,
    pub output: Signal,
    /// Kept indices when the operator is a mask.
    pub kept_indices: Option<Vec<usize>>,
    pub metrics: MetricReport,
    /// MSE over measured coordinates (masks only).
    pub measured_mse: Option<f64>,
    pub trajectory: Vec<TrajectoryRow>,
    pub config_echo: Vec<(String, String)>,
}

/// Edits `spec.source` toward the target label. Fails unless `spec.mode` is [`Mode::Edit`].
pub fn edit(spec: &RunSpec, model: &GaussianMixtureScore, schedule: &NoiseSchedule) -> Result<RunRecord> {
    if spec.mode != Mode::Edit {
        return Err(Error::Config("edit called with a reconstruction spec".into()));
    }
    run(spec, model, schedule)
}

/// Runs reconstruction from pure noise. Fails unless `spec.mode` is
/// [`Mode::Reconstruct`].
pub fn reconstruct(
    spec: &RunSpec,
    model: &GaussianMixtureScore,
    schedule: &NoiseSchedule,
) -> Result<RunRecord> {
    if spec.mode != Mode::Reconstruct {
        return Err(Error::Config("reconstruct called with an editing spec".into()));
    }
    run(spec, model, schedule)
}

/// Dispatches on `spec.mode`.
pub fn run(spec: &RunSpec, model: &GaussianMixtureScore, schedule: &NoiseSchedule) -> Result<RunRecord> {
    spec.validate(model, schedule)?;
    let streams = SeedStreams::new(spec.posterior.seed);
    let mut mask_rng = streams.stream(Stage::Mask);
    let mut meas_rng = streams.stream(Stage::Measurement);
    let mut init_rng = streams.stream(Stage::Init);
    let mut fwd_rng = streams.stream(Stage::ForwardNoise);
    let mut lang_rng = streams.stream(Stage::Langevin);
    let mut renoise_rng = streams.stream(Stage::Renoise);

    let source = &spec.source;
    let op = build_operator(spec, &mut mask_rng)?;
    let y = measure(&op, source, &mut meas_rng)?;
    let cfg = &spec.posterior;
    let taus = spec.times.taus();
    let cond = spec.target_label;

    let mut z0 = match spec.mode {
        Mode::Edit => source.clone(),
        Mode::Reconstruct => {
            let z = Signal::new(standard_normals(&mut init_rng, source.len())).shaped_like(source);
            consistency_estimate(&z, taus[0], spec.source_label, model, spec.solver, schedule)?
        }
    };

    let mut snapshots = Vec::with_capacity(cfg.outer_iters);
    let mut trajectory = Vec::new();
    for i in 0..cfg.outer_iters {
        let tau = taus[i];
        if spec.mode == Mode::Edit {
            for _ in 0..cfg.inner_solver_steps {
                let z_t = forward_noise(&z0, spec.solver_timestep, schedule, &mut fwd_rng)?;
                z0 = consistency_estimate(&z_t, spec.solver_timestep, cond, model, spec.solver, schedule)?;
            }
        }
        let sigma_t = schedule.sigma(tau)?;
        let pre = z0.clone();
        let (post, energy_first, energy_last) = if cfg.optimize {
            let state = LangevinState::new(pre.clone(), source.clone(), cfg.step_size)?;
            let (state, trace) = run_langevin(state, &op, &y, sigma_t, cfg, tau, &mut lang_rng)?;
            let base = trajectory.len();
            for k in 0..=trace.iterates.len() {
                let z = if k == 0 { &pre } else { &trace.iterates[k - 1] };
                trajectory.push(TrajectoryRow {
                    step: base + k,
                    tau,
                    k,
                    h: trace.step_sizes.get(k).copied().unwrap_or(state.current_h),
                    energy: trace.energies[k],
                    mse_to_source: mse(z, source)?,
                });
            }
            let first = trace.energies[0];
            let last = *trace.energies.last().unwrap_or(&first);
            (state.iterate, first, last)
        } else {
            let e = langevin_energy(&pre, &pre, &op, &y, sigma_t, cfg.data_scale)?;
            (pre.clone(), e, e)
        };
        let z_next = renoise(&post, taus[i + 1], schedule, cfg.renoise_scaled, &mut renoise_rng)?;
        z0 = consistency_estimate(&z_next, taus[i + 1], cond, model, spec.solver, schedule)?;
        if !z0.is_finite() {
            return Err(Error::NonFinite {
                step: 0,
                tau: taus[i + 1],
            });
        }
        snapshots.push(Snapshot {
            tau,
            pre_mse: mse(&pre, source)?,
            post_mse: mse(&post, source)?,
            pre,
            post,
            energy_first,
            energy_last,
        });
    }

    let output = z0;
    let metrics = MetricReport::compute(&output, source, spec.peak)?;
    let (kept_indices, measured_mse) = match op.as_mask() {
        Some(mask) => {
            let diff = mask.apply(&output.sub(source)?)?;
            let m = diff.iter().map(|d| d * d).sum::<f64>() / diff.len() as f64;
            (Some(mask.kept_indices().to_vec()), Some(m))
        }
        None => (None, None),
    };
    Ok(RunRecord {
        mode: spec.mode,
        seed: cfg.seed,
        snapshots,
        output,
        kept_indices,
        metrics,
        measured_mse,
        trajectory,
        config_echo: spec.echo.clone(),
    })
}

/// Builds the run's operator, drawing a random mask from `rng` if requested.
pub fn build_operator<R: rand::Rng + ?Sized>(spec: &RunSpec, rng: &mut R) -> Result<MeasurementOperator> {
    let d = spec.source.len();
    Ok(match &spec.operator {
        OperatorSpec::RandomMask { sigma } => {
            sample_mask(d, spec.posterior.keep_probability, *sigma, rng)?.into()
        }
        OperatorSpec::Mask(mask) => {
            check_dim(mask.dimension(), d)?;
            mask.clone().into()
        }
        OperatorSpec::FourierMagnitude { keep, of, sigma } => {
            let (rows, cols) = spec.source.shape().unwrap_or((1, d));
            FourierMagnitudeOperator::new(rows, cols, *keep, *of, *sigma)?.into()
        }
    })
}

/// Re-measures `record.output` with a run's measurement, for residual checks.
pub fn output_residual(
    spec: &RunSpec,
    record: &RunRecord,
) -> Result<f64> {
    let streams = SeedStreams::new(spec.posterior.seed);
    let op = build_operator(spec, &mut streams.stream(Stage::Mask))?;
    let y: Measurement = measure(&op, &spec.source, &mut streams.stream(Stage::Measurement))?;
    Ok((2.0 * op.misfit(&record.output, &y)?).sqrt())
}

fn fmt_list<T: std::fmt::Display>(items: impl IntoIterator<Item = T>, sep: &str) -> String {
    items
        .into_iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(sep)
}

impl RunRecord {
    /// Text form: `key=value` header lines, one comma-separated line per
    /// outer iteration (`tau,pre_mse,post_mse,energy_first,energy_last`), then
    /// the output signal as comma-separated reals.
    pub fn to_document(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "mode={}", self.mode);
        let _ = writeln!(out, "seed={}", self.seed);
        let shape = match self.output.shape() {
            Some((r, c)) => format!("{r}x{c}"),
            None => "none".into(),
        };
        let _ = writeln!(out, "shape={shape}");
        if let Some(kept) = &self.kept_indices {
            let _ = writeln!(out, "kept_indices={}", fmt_list(kept, " "));
        }
        let _ = writeln!(out, "metric.mse={}", self.metrics.mse);
        let _ = writeln!(out, "metric.psnr={}", self.metrics.psnr);
        if let Some(s) = self.metrics.ssim {
            let _ = writeln!(out, "metric.ssim={s}");
        }
        if let Some(m) = self.measured_mse {
            let _ = writeln!(out, "metric.measured_mse={m}");
        }
        for (k, v) in &self.config_echo {
            let _ = writeln!(out, "{k}={v}");
        }
        for s in &self.snapshots {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                s.tau, s.pre_mse, s.post_mse, s.energy_first, s.energy_last
            );
        }
        let _ = writeln!(out, "{}", fmt_list(self.output.iter(), ","));
        out
    }

    /// Trajectory CSV with header `step,tau,k,h,energy,mse_to_source`.
    pub fn trajectory_csv(&self) -> String {
        let mut out = String::from("step,tau,k,h,energy,mse_to_source\n");
        for r in &self.trajectory {
            let _ = writeln!(out, "{},{},{},{},{},{}", r.step, r.tau, r.k, r.h, r.energy, r.mse_to_source);
        }
        out
    }
}

/// Parsed form of [`RunRecord::to_document`].
#[derive(Debug, Clone, PartialEq)]
pub struct RecordDocument {
    pub header: Vec<(String, String)>,
    /// `(tau, pre_mse, post_mse, energy_first, energy_last)` per outer iteration.
    pub iterations: Vec<(usize, f64, f64, f64, f64)>,
    pub output: Signal,
}

impl RecordDocument {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.header.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Header entries that belong to the configuration echo.
    pub fn config_entries(&self) -> Vec<(String, String)> {
        self.header
            .iter()
            .filter(|(k, _)| {
                !matches!(k.as_str(), "mode" | "seed" | "shape" | "kept_indices") && !k.starts_with("metric.")
            })
            .cloned()
            .collect()
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Record(format!("bad number `{s}`")))
}

/// Parses a run-record document.
pub fn parse_record_document(text: &str) -> Result<RecordDocument> {
    let mut header = Vec::new();
    let mut rows = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        if rows.is_empty() {
            if let Some((k, v)) = line.split_once('=') {
                header.push((k.to_string(), v.to_string()));
                continue;
            }
        }
        rows.push(line);
    }
    let signal_line = rows.pop().ok_or_else(|| Error::Record("missing output signal".into()))?;
    let data = signal_line
        .split(',')
        .map(parse_f64)
        .collect::<Result<Vec<_>>>()?;
    let mut iterations = Vec::with_capacity(rows.len());
    for row in rows {
        let f: Vec<&str> = row.split(',').collect();
        if f.len() != 5 {
            return Err(Error::Record(format!("iteration line needs 5 fields: `{row}`")));
        }
        let tau = f[0]
            .trim()
            .parse()
            .map_err(|_| Error::Record(format!("bad tau `{}`", f[0])))?;
        iterations.push((tau, parse_f64(f[1])?, parse_f64(f[2])?, parse_f64(f[3])?, parse_f64(f[4])?));
    }
    let shape = header.iter().find(|(k, _)| k == "shape").map(|(_, v)| v.clone());
    let output = match shape.as_deref() {
        None | Some("none") => Signal::new(data),
        Some(s) => {
            let (r, c) = s
                .split_once('x')
                .ok_or_else(|| Error::Record(format!("bad shape `{s}`")))?;
            let r = r.parse().map_err(|_| Error::Record(format!("bad shape `{s}`")))?;
            let c = c.parse().map_err(|_| Error::Record(format!("bad shape `{s}`")))?;
            Signal::with_shape(data, r, c)?
        }
    };
    Ok(RecordDocument {
        header,
        iterations,
        output,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::conjugate_posterior;

    fn two_label() -> GaussianMixtureScore {
        GaussianMixtureScore::two_label(8, -2.0, 2.0, 0.25).unwrap()
    }

    #[test]
    fn record_round_trips_through_text() {
        let model = two_label();
        let schedule = NoiseSchedule::default();
        let mut spec = RunSpec::edit(Signal::filled(8, -2.0), 0, 1).with_seed(3);
        spec.echo = vec![("posterior.w".into(), "0.1".into())];
        let rec = edit(&spec, &model, &schedule).unwrap();
        assert_eq!(rec.snapshots.len(), 5);
        let doc = parse_record_document(&rec.to_document()).unwrap();
        assert_eq!(doc.output, rec.output);
        assert_eq!(doc.iterations.len(), 5);
        assert_eq!(doc.iterations[0].0, 501);
        assert_eq!(doc.iterations[1].2, rec.snapshots[1].post_mse);
        assert_eq!(doc.config_entries(), spec.echo);
        assert_eq!(doc.get("seed"), Some("3"));
    }

    #[test]
    fn identical_specs_are_bit_identical() {
        let model = two_label();
        let schedule = NoiseSchedule::default();
        let spec = RunSpec::edit(Signal::filled(8, -2.0), 0, 1).with_seed(11);
        let a = edit(&spec, &model, &schedule).unwrap();
        let b = edit(&spec, &model, &schedule).unwrap();
        assert_eq!(a.to_document(), b.to_document());
        assert_eq!(a.trajectory_csv(), b.trajectory_csv());
        let c = edit(&spec.clone().with_seed(12), &model, &schedule).unwrap();
        assert_ne!(a.output, c.output);
    }

    #[test]
    fn mode_and_operator_checks() {
        let model = two_label();
        let schedule = NoiseSchedule::default();
        let mut spec = RunSpec::edit(Signal::filled(8, -2.0), 0, 1);
        spec.operator = OperatorSpec::FourierMagnitude {
            keep: 2,
            of: 8,
            sigma: 0.01,
        };
        assert!(matches!(edit(&spec, &model, &schedule), Err(Error::OperatorMode(_))));
        let mut spec = RunSpec::reconstruct(Signal::filled(8, -2.0), 0);
        spec.target_label = ConditionLabel::Label(1);
        assert!(matches!(reconstruct(&spec, &model, &schedule), Err(Error::Config(_))));
        let spec = RunSpec::reconstruct(Signal::filled(8, -2.0), 0);
        assert!(edit(&spec, &model, &schedule).is_err());
        let mut spec = RunSpec::edit(Signal::filled(8, -2.0), 0, 1);
        spec.posterior.outer_iters = 4;
        assert!(edit(&spec, &model, &schedule).is_err());
    }

    #[test]
    fn full_injection_keeps_source() {
        let model = two_label();
        let schedule = NoiseSchedule::default();
        let source = Signal::filled(8, -2.0);
        let mut spec = RunSpec::edit(source.clone(), 0, 1);
        spec.posterior.inject_weight = 1.0;
        spec.posterior.langevin_steps = 1;
        spec.posterior.step_size = 1e-16;
        let rec = edit(&spec, &model, &schedule).unwrap();
        for s in &rec.snapshots {
            for (a, b) in s.post.iter().zip(source.iter()) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn reconstruction_close_to_conjugate_mean() {
        let mu: Vec<f64> = (0..8).map(|i| i as f64 * 0.25 - 1.0).collect();
        let model = GaussianMixtureScore::isotropic(mu.clone(), 0.1).unwrap();
        let schedule = NoiseSchedule::default();
        let source = Signal::new(mu.iter().map(|m| m + 0.2).collect());
        let mask = MaskOperator::identity(8, 0.01).unwrap();
        let mut spec = RunSpec::reconstruct(source.clone(), 0).with_seed(5);
        spec.operator = OperatorSpec::Mask(mask.clone());
        let rec = reconstruct(&spec, &model, &schedule).unwrap();
        let y = measure(
            &MeasurementOperator::from(mask.clone()),
            &source,
            &mut SeedStreams::new(5).stream(Stage::Measurement),
        )
        .unwrap();
        let post = conjugate_posterior(&Signal::new(mu), &Signal::filled(8, 0.1), &mask, &y).unwrap();
        for i in 0..8 {
            assert!((rec.output[i] - post.mean[i]).abs() < 0.1, "{i}: {} vs {}", rec.output[i], post.mean[i]);
        }
        assert!(rec.metrics.mse < 1e-2);
    }

    #[test]
    fn optimizer_off_leaves_estimates_untouched() {
        let model = two_label();
        let schedule = NoiseSchedule::default();
        let mut spec = RunSpec::edit(Signal::filled(8, -2.0), 0, 1);
        spec.posterior.optimize = false;
        let rec = edit(&spec, &model, &schedule).unwrap();
        assert!(rec.trajectory.is_empty());
        for s in &rec.snapshots {
            assert_eq!(s.pre, s.post);
        }
    }

    #[test]
    fn bad_documents_are_rejected() {
        assert!(parse_record_document("").is_err());
        assert!(parse_record_document("mode=edit\n1,2,3\n0.5").is_err());
        assert!(parse_record_document("mode=edit\nabc").is_err());
    }
}
