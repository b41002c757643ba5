//! Flat `key = value` run configuration.
//!
//! Keys are dotted (`posterior.T`, `schedule.beta_end`, ...). Every key has a
//! default listed in [`KEYS`]; unknown keys are rejected. Environment
//! variables `POSTSOLVE_<SECTION>_<name>` override file values, e.g.
//! `POSTSOLVE_POSTERIOR_T=50` or `POSTSOLVE_SCHEDULE_beta_end=0.012`. The
//! name part is matched exactly first, then case-insensitively when that is
//! unambiguous (`posterior.N` and `posterior.n` differ only by case).

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;

use crate::error::{Error, Result};
use crate::measurement::MaskOperator;
use crate::pipeline::{Mode, OperatorSpec, RunSpec};
use crate::posterior::PosteriorConfig;
use crate::rng::standard_normals;
use crate::schedule::{build_ddpm_schedule, NoiseSchedule, TimeSequence};
use crate::score::{Component, ConditionLabel, GaussianMixtureScore};
use crate::signal::Signal;
use crate::solver::SolverParams;

pub const ENV_PREFIX: &str = "POSTSOLVE_";

/// `(key, default, description)` for every fixed key.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("schedule.steps", "1000", "number of training timesteps"),
    ("schedule.beta_start", "0.0001", "first beta of the linear ramp"),
    ("schedule.beta_end", "0.02", "last beta of the linear ramp"),
    ("solver.c_skip", "0", "skip coefficient of the consistency function"),
    ("solver.c_out", "1", "output coefficient of the consistency function"),
    ("solver.timestep", "501", "inner solver noise level t_j"),
    ("solver.guidance", "0", "classifier-free guidance scale"),
    ("measurement.kind", "mask", "mask | fourier"),
    ("measurement.sigma", "0.01", "measurement noise standard deviation"),
    ("measurement.kept", "", "explicit kept indices; empty draws a random mask"),
    ("measurement.oversample_keep", "2", "Fourier oversampling numerator k"),
    ("measurement.oversample_of", "8", "Fourier oversampling denominator n"),
    ("posterior.N", "5", "outer posterior iterations"),
    ("posterior.n", "1", "inner solver steps"),
    ("posterior.T", "100", "Langevin steps per outer iteration"),
    ("posterior.h", "0.00001", "initial Langevin step size"),
    ("posterior.w", "0.1", "injection weight"),
    ("posterior.m", "0.01", "data-term scale"),
    ("posterior.f", "0.5", "mask keep probability"),
    ("posterior.seed", "0", "run seed"),
    ("posterior.taus", "501,401,301,201,101,1", "outer time sequence (N + 1 entries)"),
    ("posterior.decay", "true", "apply the step-size decay law"),
    ("posterior.optimize", "true", "run the Langevin optimizer"),
    ("posterior.renoise_scaled", "true", "re-noise around sqrt(abar) z0"),
    ("model.kind", "two_label", "two_label | gaussian | mixture"),
    ("model.dim", "8", "signal dimension"),
    ("model.rows", "0", "lattice rows (0 = unshaped)"),
    ("model.mean0", "-2", "label-0 mean (gaussian: the mean)"),
    ("model.mean1", "2", "label-1 mean"),
    ("model.var", "0.25", "per-coordinate component variance"),
    ("run.source", "sample", "sample | mean | comma-separated values"),
    ("run.source_seed", "0", "seed for drawing the source signal"),
    ("run.source_label", "0", "label of the source (c_ini)"),
    ("run.target_label", "1", "edit target label (c_tgt)"),
    ("run.peak", "1", "peak value for PSNR/SSIM"),
    ("run.sweep_w", "0,0.1,0.2,0.5", "sweep grid over w"),
    ("run.sweep_f", "0.5,1", "sweep grid over f"),
    ("run.sweep_T", "50,100", "sweep grid over T"),
];

const COMPONENT_FIELDS: &[&str] = &["mean", "var", "weight", "label"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasurementKind {
    Mask,
    Fourier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    TwoLabel,
    Gaussian,
    Mixture,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SourceSpec {
    Sample,
    Mean,
    Values(Vec<f64>),
}

/// Mixture component given as `model.component.<i>.*`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentSpec {
    pub mean: Vec<f64>,
    /// One entry broadcasts to every coordinate.
    pub var: Vec<f64>,
    pub weight: f64,
    pub label: u32,
}

/// Effective configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub schedule_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub solver: SolverParams,
    pub solver_timestep: usize,
    pub measurement_kind: MeasurementKind,
    pub measurement_sigma: f64,
    pub measurement_kept: Option<Vec<usize>>,
    pub oversample_keep: usize,
    pub oversample_of: usize,
    pub posterior: PosteriorConfig,
    pub taus: Vec<usize>,
    pub model_kind: ModelKind,
    pub model_dim: usize,
    pub model_rows: usize,
    pub mean0: f64,
    pub mean1: f64,
    pub model_var: f64,
    pub components: Vec<ComponentSpec>,
    pub source: SourceSpec,
    pub source_seed: u64,
    pub source_label: u32,
    pub target_label: u32,
    pub peak: f64,
    pub sweep_w: Vec<f64>,
    pub sweep_f: Vec<f64>,
    pub sweep_t: Vec<usize>,
}

impl Default for Config {
    fn default() -> Self {
        Self::from_entries(Vec::<(String, String)>::new()).expect("built-in defaults parse")
    }
}

fn is_component_key(key: &str) -> bool {
    let mut parts = key.split('.');
    matches!(
        (parts.next(), parts.next(), parts.next(), parts.next(), parts.next()),
        (Some("model"), Some("component"), Some(i), Some(field), None)
            if i.parse::<usize>().is_ok() && COMPONENT_FIELDS.contains(&field)
    )
}

fn is_known(key: &str) -> bool {
    KEYS.iter().any(|(k, _, _)| *k == key) || is_component_key(key)
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_entries(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Maps `POSTSOLVE_*` variables to config keys.
pub fn env_entries<I>(vars: I) -> Result<Vec<(String, String)>>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut out = Vec::new();
    for (name, value) in vars {
        let Some(rest) = name.strip_prefix(ENV_PREFIX) else {
            continue;
        };
        let (section, field) = rest
            .split_once('_')
            .ok_or_else(|| Error::Config(format!("environment variable {name} has no key part")))?;
        let key = format!("{}.{}", section.to_ascii_lowercase(), field);
        let resolved = if is_known(&key) {
            key
        } else {
            let lower = key.to_ascii_lowercase();
            let hits: Vec<&str> = KEYS
                .iter()
                .map(|(k, _, _)| *k)
                .filter(|k| k.to_ascii_lowercase() == lower)
                .collect();
            match hits.as_slice() {
                [one] => one.to_string(),
                [] => return Err(Error::Config(format!("unknown key `{key}` (from {name})"))),
                _ => return Err(Error::Config(format!("ambiguous key `{key}` (from {name})"))),
            }
        };
        out.push((resolved, value));
    }
    Ok(out)
}

struct Values(BTreeMap<String, String>);

impl Values {
    fn raw(&self, key: &str) -> &str {
        self.0.get(key).map(String::as_str).unwrap_or("")
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.raw(key);
        v.parse()
            .map_err(|_| Error::Config(format!("{key}: cannot parse `{v}`")))
    }

    fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Vec<T>> {
        parse_list(key, self.raw(key))
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::Config(format!("{key}: cannot parse `{}`", s.trim())))
        })
        .collect()
}

fn join<T: std::fmt::Display>(items: &[T]) -> String {
    items.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

impl Config {
    /// Builds a configuration from defaults overlaid with `entries` (later
    /// entries win).
    pub fn from_entries<I>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut map: BTreeMap<String, String> =
            KEYS.iter().map(|(k, d, _)| (k.to_string(), d.to_string())).collect();
        for (k, v) in entries {
            if !is_known(&k) {
                return Err(Error::Config(format!("unknown key `{k}`")));
            }
            map.insert(k, v);
        }
        let v = Values(map);

        let measurement_kind = match v.raw("measurement.kind") {
            "mask" => MeasurementKind::Mask,
            "fourier" => MeasurementKind::Fourier,
            other => return Err(Error::Config(format!("measurement.kind: unknown `{other}`"))),
        };
        let model_kind = match v.raw("model.kind") {
            "two_label" => ModelKind::TwoLabel,
            "gaussian" => ModelKind::Gaussian,
            "mixture" => ModelKind::Mixture,
            other => return Err(Error::Config(format!("model.kind: unknown `{other}`"))),
        };
        let source = match v.raw("run.source") {
            "sample" => SourceSpec::Sample,
            "mean" => SourceSpec::Mean,
            other => SourceSpec::Values(parse_list("run.source", other)?),
        };
        let kept: Vec<usize> = v.list("measurement.kept")?;

        let mut components: BTreeMap<usize, BTreeMap<String, String>> = BTreeMap::new();
        for (k, val) in &v.0 {
            if is_component_key(k) {
                let mut parts = k.split('.').skip(2);
                let i: usize = parts.next().unwrap_or("0").parse().unwrap_or(0);
                let field = parts.next().unwrap_or("").to_string();
                components.entry(i).or_default().insert(field, val.clone());
            }
        }
        let components = components
            .into_iter()
            .map(|(i, fields)| {
                let get = |f: &str| {
                    fields
                        .get(f)
                        .cloned()
                        .ok_or_else(|| Error::Config(format!("model.component.{i}.{f} missing")))
                };
                let key = |f: &str| format!("model.component.{i}.{f}");
                Ok(ComponentSpec {
                    mean: parse_list(&key("mean"), &get("mean")?)?,
                    var: parse_list(&key("var"), &get("var")?)?,
                    weight: get("weight")?
                        .parse()
                        .map_err(|_| Error::Config(format!("{}: bad number", key("weight"))))?,
                    label: get("label")?
                        .parse()
                        .map_err(|_| Error::Config(format!("{}: bad label", key("label"))))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let taus: Vec<usize> = v.list("posterior.taus")?;
        let cfg = Config {
            schedule_steps: v.parse("schedule.steps")?,
            beta_start: v.parse("schedule.beta_start")?,
            beta_end: v.parse("schedule.beta_end")?,
            solver: SolverParams {
                c_skip: v.parse("solver.c_skip")?,
                c_out: v.parse("solver.c_out")?,
                guidance: v.parse("solver.guidance")?,
            },
            solver_timestep: v.parse("solver.timestep")?,
            measurement_kind,
            measurement_sigma: v.parse("measurement.sigma")?,
            measurement_kept: (!kept.is_empty()).then_some(kept),
            oversample_keep: v.parse("measurement.oversample_keep")?,
            oversample_of: v.parse("measurement.oversample_of")?,
            posterior: PosteriorConfig {
                outer_iters: v.parse("posterior.N")?,
                inner_solver_steps: v.parse("posterior.n")?,
                langevin_steps: v.parse("posterior.T")?,
                step_size: v.parse("posterior.h")?,
                inject_weight: v.parse("posterior.w")?,
                data_scale: v.parse("posterior.m")?,
                keep_probability: v.parse("posterior.f")?,
                seed: v.parse("posterior.seed")?,
                decay: v.parse("posterior.decay")?,
                optimize: v.parse("posterior.optimize")?,
                renoise_scaled: v.parse("posterior.renoise_scaled")?,
            },
            taus,
            model_kind,
            model_dim: v.parse("model.dim")?,
            model_rows: v.parse("model.rows")?,
            mean0: v.parse("model.mean0")?,
            mean1: v.parse("model.mean1")?,
            model_var: v.parse("model.var")?,
            components,
            source,
            source_seed: v.parse("run.source_seed")?,
            source_label: v.parse("run.source_label")?,
            target_label: v.parse("run.target_label")?,
            peak: v.parse("run.peak")?,
            sweep_w: v.list("run.sweep_w")?,
            sweep_f: v.list("run.sweep_f")?,
            sweep_t: v.list("run.sweep_T")?,
        };
        cfg.posterior.validate()?;
        if cfg.taus.len() != cfg.posterior.outer_iters + 1 {
            return Err(Error::Config(format!(
                "posterior.taus has {} entries but posterior.N = {} needs {}",
                cfg.taus.len(),
                cfg.posterior.outer_iters,
                cfg.posterior.outer_iters + 1
            )));
        }
        if cfg.model_dim == 0 {
            return Err(Error::Config("model.dim must be positive".into()));
        }
        if cfg.model_rows > 0 && !cfg.model_dim.is_multiple_of(cfg.model_rows) {
            return Err(Error::Config("model.rows must divide model.dim".into()));
        }
        Ok(cfg)
    }

    /// Defaults overlaid with `text` (config-file syntax).
    pub fn parse(text: &str) -> Result<Self> {
        Self::from_entries(parse_entries(text)?)
    }

    /// Reads a file (if given) and applies `POSTSOLVE_*` overrides from the
    /// process environment.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut entries = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                parse_entries(&text)?
            }
            None => Vec::new(),
        };
        entries.extend(env_entries(std::env::vars())?);
        Self::from_entries(entries)
    }

    /// Every effective key with its value, in a form [`Config::from_entries`]
    /// parses back to an equal configuration.
    pub fn echo(&self) -> Vec<(String, String)> {
        let p = &self.posterior;
        let mut out: Vec<(String, String)> = vec![
            ("schedule.steps".into(), self.schedule_steps.to_string()),
            ("schedule.beta_start".into(), self.beta_start.to_string()),
            ("schedule.beta_end".into(), self.beta_end.to_string()),
            ("solver.c_skip".into(), self.solver.c_skip.to_string()),
            ("solver.c_out".into(), self.solver.c_out.to_string()),
            ("solver.timestep".into(), self.solver_timestep.to_string()),
            ("solver.guidance".into(), self.solver.guidance.to_string()),
            (
                "measurement.kind".into(),
                match self.measurement_kind {
                    MeasurementKind::Mask => "mask",
                    MeasurementKind::Fourier => "fourier",
                }
                .into(),
            ),
            ("measurement.sigma".into(), self.measurement_sigma.to_string()),
            (
                "measurement.kept".into(),
                self.measurement_kept.as_deref().map(join).unwrap_or_default(),
            ),
            ("measurement.oversample_keep".into(), self.oversample_keep.to_string()),
            ("measurement.oversample_of".into(), self.oversample_of.to_string()),
            ("posterior.N".into(), p.outer_iters.to_string()),
            ("posterior.n".into(), p.inner_solver_steps.to_string()),
            ("posterior.T".into(), p.langevin_steps.to_string()),
            ("posterior.h".into(), p.step_size.to_string()),
            ("posterior.w".into(), p.inject_weight.to_string()),
            ("posterior.m".into(), p.data_scale.to_string()),
            ("posterior.f".into(), p.keep_probability.to_string()),
            ("posterior.seed".into(), p.seed.to_string()),
            ("posterior.taus".into(), join(&self.taus)),
            ("posterior.decay".into(), p.decay.to_string()),
            ("posterior.optimize".into(), p.optimize.to_string()),
            ("posterior.renoise_scaled".into(), p.renoise_scaled.to_string()),
            (
                "model.kind".into(),
                match self.model_kind {
                    ModelKind::TwoLabel => "two_label",
                    ModelKind::Gaussian => "gaussian",
                    ModelKind::Mixture => "mixture",
                }
                .into(),
            ),
            ("model.dim".into(), self.model_dim.to_string()),
            ("model.rows".into(), self.model_rows.to_string()),
            ("model.mean0".into(), self.mean0.to_string()),
            ("model.mean1".into(), self.mean1.to_string()),
            ("model.var".into(), self.model_var.to_string()),
        ];
        for (i, c) in self.components.iter().enumerate() {
            out.push((format!("model.component.{i}.mean"), join(&c.mean)));
            out.push((format!("model.component.{i}.var"), join(&c.var)));
            out.push((format!("model.component.{i}.weight"), c.weight.to_string()));
            out.push((format!("model.component.{i}.label"), c.label.to_string()));
        }
        out.extend([
            (
                "run.source".into(),
                match &self.source {
                    SourceSpec::Sample => "sample".into(),
                    SourceSpec::Mean => "mean".into(),
                    SourceSpec::Values(v) => join(v),
                },
            ),
            ("run.source_seed".into(), self.source_seed.to_string()),
            ("run.source_label".into(), self.source_label.to_string()),
            ("run.target_label".into(), self.target_label.to_string()),
            ("run.peak".into(), self.peak.to_string()),
            ("run.sweep_w".into(), join(&self.sweep_w)),
            ("run.sweep_f".into(), join(&self.sweep_f)),
            ("run.sweep_T".into(), join(&self.sweep_t)),
        ]);
        out
    }

    /// Echo in config-file syntax.
    pub fn to_text(&self) -> String {
        self.echo().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        build_ddpm_schedule(self.schedule_steps, self.beta_start, self.beta_end)
    }

    pub fn model(&self) -> Result<GaussianMixtureScore> {
        let d = self.model_dim;
        match self.model_kind {
            ModelKind::TwoLabel => GaussianMixtureScore::two_label(d, self.mean0, self.mean1, self.model_var),
            ModelKind::Gaussian => GaussianMixtureScore::isotropic(vec![self.mean0; d], self.model_var),
            ModelKind::Mixture => {
                if self.components.is_empty() {
                    return Err(Error::Config("model.kind = mixture needs model.component.* keys".into()));
                }
                let comps = self
                    .components
                    .iter()
                    .map(|c| Component {
                        mean: c.mean.clone(),
                        variance: if c.var.len() == 1 { vec![c.var[0]; d] } else { c.var.clone() },
                        weight: c.weight,
                        label: c.label,
                    })
                    .collect();
                GaussianMixtureScore::new(comps)
            }
        }
    }

    fn shape(&self, data: Vec<f64>) -> Result<Signal> {
        if self.model_rows == 0 {
            Ok(Signal::new(data))
        } else {
            Signal::with_shape(data, self.model_rows, self.model_dim / self.model_rows)
        }
    }

    /// The source signal: explicit values, the source-label mean, or a draw
    /// from the source-label components seeded by `run.source_seed`.
    pub fn source_signal(&self, model: &GaussianMixtureScore) -> Result<Signal> {
        let comps: Vec<&Component> = model
            .components()
            .iter()
            .filter(|c| c.label == self.source_label)
            .collect();
        let data = match &self.source {
            SourceSpec::Values(v) => v.clone(),
            SourceSpec::Mean | SourceSpec::Sample if comps.is_empty() => {
                return Err(Error::UnknownLabel(self.source_label))
            }
            SourceSpec::Mean => {
                let total: f64 = comps.iter().map(|c| c.weight).sum();
                (0..model.dimension())
                    .map(|i| comps.iter().map(|c| c.weight * c.mean[i]).sum::<f64>() / total)
                    .collect()
            }
            SourceSpec::Sample => {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(self.source_seed);
                let total: f64 = comps.iter().map(|c| c.weight).sum();
                let u: f64 = rand::Rng::random::<f64>(&mut rng) * total;
                let mut acc = 0.0;
                let mut pick = comps[comps.len() - 1];
                for c in &comps {
                    acc += c.weight;
                    if u < acc {
                        pick = c;
                        break;
                    }
                }
                let n = standard_normals(&mut rng, model.dimension());
                pick.mean
                    .iter()
                    .zip(&pick.variance)
                    .zip(n)
                    .map(|((m, v), e)| m + v.sqrt() * e)
                    .collect()
            }
        };
        if data.len() != model.dimension() {
            return Err(Error::DimensionMismatch {
                expected: model.dimension(),
                actual: data.len(),
            });
        }
        self.shape(data)
    }

    /// Assembles a run spec; `mode` decides edit vs reconstruct.
    pub fn run_spec(&self, mode: Mode, model: &GaussianMixtureScore) -> Result<RunSpec> {
        let source = self.source_signal(model)?;
        let operator = match (self.measurement_kind, &self.measurement_kept) {
            (MeasurementKind::Fourier, _) => OperatorSpec::FourierMagnitude {
                keep: self.oversample_keep,
                of: self.oversample_of,
                sigma: self.measurement_sigma,
            },
            (MeasurementKind::Mask, Some(kept)) => {
                OperatorSpec::Mask(MaskOperator::new(kept.clone(), source.len(), self.measurement_sigma)?)
            }
            (MeasurementKind::Mask, None) => OperatorSpec::RandomMask {
                sigma: self.measurement_sigma,
            },
        };
        let target = match mode {
            Mode::Edit => self.target_label,
            Mode::Reconstruct => self.source_label,
        };
        Ok(RunSpec {
            mode,
            source,
            source_label: ConditionLabel::Label(self.source_label),
            target_label: ConditionLabel::Label(target),
            operator,
            posterior: self.posterior.clone(),
            solver: self.solver,
            solver_timestep: self.solver_timestep,
            times: TimeSequence::new(self.taus.clone(), self.posterior.inner_solver_steps)?,
            peak: self.peak,
            echo: self.echo(),
        })
    }

    /// The `(w, f, T)` grid of a sweep, as modified copies of `self`.
    pub fn sweep_grid(&self) -> Vec<Config> {
        let mut out = Vec::new();
        for &w in &self.sweep_w {
            for &f in &self.sweep_f {
                for &t in &self.sweep_t {
                    let mut c = self.clone();
                    c.posterior.inject_weight = w;
                    c.posterior.keep_probability = f;
                    c.posterior.langevin_steps = t;
                    out.push(c);
                }
            }
        }
        out
    }
}
