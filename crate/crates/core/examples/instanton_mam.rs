// Finite-time minimum action paths in the cubic well: the instanton for a
// long horizon, and the action as the horizon shrinks.

use rarepath::model::builtin_model;
use rarepath::path::{finite_time_action_sweep, mam_relax, FinalCondition, MamOptions};
use rarepath::Result;

pub fn run() -> Result<()> {
    let m = builtin_model("cubic_well", &[("d".to_string(), 0.1)].into())?.into_diffusion()?;
    let opts = MamOptions::default();
    let t_f = 8.0;
    let r = mam_relax(&m, &[-0.5], &[0.5], &FinalCondition::Fixed, t_f, &opts)?;
    println!("T = {t_f}: action {:.6} (two barrier heights = 1) in {} steps", r.action, r.iterations);

    // the long-horizon minimizer is a time-shifted ½ tanh(3t/2)
    let t_mid = r.path.crossing(0, 0.0).expect("path crosses the origin");
    let mut err: f64 = 0.0;
    for (t, x) in r.path.grid.iter().zip(&r.path.nodes) {
        err = err.max((x[0] - 0.5 * (1.5 * (t - t_mid)).tanh()).abs());
    }
    println!("max distance to the shifted instanton {err:.2e}");

    let sweep = finite_time_action_sweep(&m, &[-0.5], &[0.5], &[0.5, 1.0, 2.0, 4.0, 8.0], &opts)?;
    for p in &sweep.points {
        println!("T = {:3.1}  S_T = {:.6}", p.t_f, p.action);
    }
    println!("monotone in T: {}", sweep.monotone);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
