use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use postsolve::config::Config;
use postsolve::pipeline::{run, Mode, RunRecord};
use postsolve::verify::{all_passed, run_suite};

#[derive(Parser)]
#[command(name = "postsolve", version, about = "Langevin posterior sampling over diffusion-solver estimates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Edit the source toward the target label.
    Edit(RunArgs),
    /// Reconstruct the source from its measurement.
    Reconstruct(RunArgs),
    /// Run a verification suite.
    Verify {
        /// schedule, score, solver, measurement, posterior, pipeline, metrics or all
        suite: String,
    },
    /// Grid over run.sweep_w x run.sweep_f x run.sweep_T (edit mode).
    Sweep(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides posterior.seed; batch runs use seed, seed + 1, ...
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    runs: u64,
}

fn write_atomic(path: &Path, contents: &str) -> anyhow::Result<()> {
    let name = path.file_name().context("output path has no file name")?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))?;
    Ok(())
}

fn load(args: &RunArgs) -> anyhow::Result<Config> {
    let mut cfg = Config::load(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.posterior.seed = seed;
    }
    if args.runs == 0 {
        bail!("--runs must be at least 1");
    }
    Ok(cfg)
}

fn batch(cfg: &Config, mode: Mode, runs: u64) -> anyhow::Result<Vec<RunRecord>> {
    let model = cfg.model()?;
    let schedule = cfg.schedule()?;
    let base = cfg.run_spec(mode, &model)?;
    (0..runs)
        .into_par_iter()
        .map(|i| {
            let spec = base.clone().with_seed(cfg.posterior.seed.wrapping_add(i));
            let mut spec = spec;
            if let Some(entry) = spec.echo.iter_mut().find(|(k, _)| k == "posterior.seed") {
                entry.1 = spec.posterior.seed.to_string();
            }
            Ok(run(&spec, &model, &schedule)?)
        })
        .collect()
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n.max(1) as f64
}

fn summary_line(r: &RunRecord) -> String {
    let mut line = format!("seed={} mse={} psnr={}", r.seed, r.metrics.mse, r.metrics.psnr);
    if let Some(m) = r.measured_mse {
        line.push_str(&format!(" measured_mse={m}"));
    }
    if let Some(s) = r.metrics.ssim {
        line.push_str(&format!(" ssim={s}"));
    }
    line
}

fn aggregate_line(records: &[RunRecord]) -> String {
    let mut line = format!(
        "aggregate runs={} mean_mse={} mean_psnr={}",
        records.len(),
        mean(records.iter().map(|r| r.metrics.mse)),
        mean(records.iter().map(|r| r.metrics.psnr)),
    );
    if records.iter().all(|r| r.measured_mse.is_some()) {
        line.push_str(&format!(
            " mean_measured_mse={}",
            mean(records.iter().filter_map(|r| r.measured_mse))
        ));
    }
    line
}

fn run_mode(args: &RunArgs, mode: Mode) -> anyhow::Result<()> {
    let cfg = load(args)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let records = batch(&cfg, mode, args.runs)?;
    let mut summary = String::new();
    for r in &records {
        write_atomic(&args.out.join(format!("{mode}-{}.txt", r.seed)), &r.to_document())?;
        write_atomic(&args.out.join(format!("{mode}-{}-trajectory.csv", r.seed)), &r.trajectory_csv())?;
        let line = summary_line(r);
        println!("{line}");
        summary.push_str(&line);
        summary.push('\n');
    }
    if records.len() > 1 {
        let line = aggregate_line(&records);
        println!("{line}");
        summary.push_str(&line);
        summary.push('\n');
    }
    write_atomic(&args.out.join(format!("{mode}-summary.txt")), &summary)
}

fn sweep(args: &RunArgs) -> anyhow::Result<()> {
    let cfg = load(args)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut csv = String::from("w,f,T,runs,mean_mse,mean_measured_mse,mean_psnr\n");
    for point in cfg.sweep_grid() {
        let records = batch(&point, Mode::Edit, args.runs)?;
        let p = &point.posterior;
        let row = format!(
            "{},{},{},{},{},{},{}",
            p.inject_weight,
            p.keep_probability,
            p.langevin_steps,
            records.len(),
            mean(records.iter().map(|r| r.metrics.mse)),
            mean(records.iter().filter_map(|r| r.measured_mse)),
            mean(records.iter().map(|r| r.metrics.psnr)),
        );
        println!("{row}");
        csv.push_str(&row);
        csv.push('\n');
    }
    write_atomic(&args.out.join("sweep.csv"), &csv)
}

fn verify(suite: &str) -> anyhow::Result<bool> {
    let checks = run_suite(suite)?;
    for c in &checks {
        println!("{c}");
    }
    Ok(all_passed(&checks))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Edit(a) => run_mode(a, Mode::Edit).map(|_| true),
        Command::Reconstruct(a) => run_mode(a, Mode::Reconstruct).map(|_| true),
        Command::Sweep(a) => sweep(a).map(|_| true),
        Command::Verify { suite } => verify(suite),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
