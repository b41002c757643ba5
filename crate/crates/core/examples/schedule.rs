//! Noise schedule and the posterior time sequence.

use postsolve::schedule::{build_ddpm_schedule, default_posterior_sequence};

fn main() -> postsolve::Result<()> {
    let schedule = build_ddpm_schedule(1000, 1e-4, 0.02)?;
    println!("{:>5} {:>12} {:>12} {:>12}", "t", "alpha_bar", "alpha", "sigma");
    for t in [0, 1, 101, 201, 301, 401, 501, 750, 1000] {
        println!(
            "{t:>5} {:>12.6e} {:>12.6} {:>12.6}",
            schedule.alpha_bar(t)?,
            schedule.alpha(t)?,
            schedule.sigma(t)?
        );
    }
    let seq = default_posterior_sequence();
    println!("outer taus {:?}, inner steps {}", seq.taus(), seq.inner_steps());
    Ok(())
}
