// Exit probability by a finite horizon, by plain Monte Carlo and by
// importance sampling along the minimum action path.

use rarepath::model::{builtin_model, Domain};
use rarepath::path::{mam_relax, FinalCondition, MamOptions};
use rarepath::sampling::{is_exit_probability, mc_exit_probability, BiasSchedule, ExitMode, SampleConfig};
use rarepath::Result;

pub fn run() -> Result<()> {
    let (t_f, d) = (4.0, 0.103);
    let m = builtin_model("cubic_well", &[("d".to_string(), d)].into())?.into_diffusion()?;
    let dom = Domain::interval(f64::NEG_INFINITY, 0.5);
    let cfg = SampleConfig { mode: ExitMode::FirstPassage, ..SampleConfig::new(t_f, 1e-3, 4000, 21) };

    let plain = mc_exit_probability(&m, &[-0.5], &dom, &cfg)?;
    println!("plain MC: {} of {} paths escape", plain.hit_count, plain.n);

    // control u = σᵀλ along the finite-time minimizer
    let path = mam_relax(&m, &[-0.5], &[0.5], &FinalCondition::Fixed, t_f, &MamOptions::default())?;
    let bias = BiasSchedule::from_path(&path.path, &m)?;
    let est = is_exit_probability(&m, &[-0.5], &dom, &bias, &cfg)?;
    println!(
        "importance sampling: p = {:.3e} ± {:.1e} (cv {:.3}, {} hits)",
        est.p_hat, est.std_error, est.cv, est.hit_count
    );
    println!("large deviation estimate exp(-S/D) = {:.3e}", (-path.action / d).exp());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
