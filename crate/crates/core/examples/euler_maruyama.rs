// Euler–Maruyama paths in the cubic well, and an ensemble whose result
// does not depend on the number of workers.

use rarepath::model::{builtin_model, Domain, Params};
use rarepath::sde::{euler_maruyama, mean_exit_time_mc, SimConfig};
use rarepath::Result;

pub fn run() -> Result<()> {
    let p: Params = [("d".to_string(), 0.25)].into();
    let m = builtin_model("cubic_well", &p)?.into_diffusion()?;

    let traj = euler_maruyama(&m, &[-0.5], &SimConfig::new(1e-3, 5.0, 7, 1))?;
    for k in (0..traj.len()).step_by(1000) {
        println!("t = {:4.1}  x = {:+.4}", traj.times[k], traj.state(k)[0]);
    }

    // exit through x = 1: one seed per path, so any worker count gives the same numbers
    let dom = Domain::interval(f64::NEG_INFINITY, 1.0);
    let one = mean_exit_time_mc(&m, &[-0.5], &dom, &SimConfig::new(1e-3, 1e4, 3, 200))?;
    let four = mean_exit_time_mc(&m, &[-0.5], &dom, &SimConfig { workers: 4, ..SimConfig::new(1e-3, 1e4, 3, 200) })?;
    println!("\nmean exit time {:.2} ± {:.2} over {} paths", one.mean, one.std_error, one.n);
    assert_eq!(one.mean.to_bits(), four.mean.to_bits());
    println!("identical with 4 workers");
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
