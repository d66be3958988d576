// Mean escape time from the cubic well three ways: Monte Carlo, the 1D
// generator equation, and the Kramers formula with its exact quadrature.

use rarepath::model::{builtin_model, Domain};
use rarepath::sde::{dynkin_solve_1d, escape_time_quadrature, kramers_mte, mean_exit_time_mc, Boundary, SimConfig};
use rarepath::Result;

pub fn run() -> Result<()> {
    let d = 0.25;
    let m = builtin_model("cubic_well", &[("d".to_string(), d)].into())?.into_diffusion()?;
    let pot = m.potential.clone().expect("cubic well is a potential model");

    let mc = mean_exit_time_mc(&m, &[pot.x_min], &Domain::interval(f64::NEG_INFINITY, 1.0), &SimConfig::new(1e-3, 1e5, 11, 400))?;
    let bvp = dynkin_solve_1d(&m, Boundary::reflecting(-2.0), Boundary::absorbing(1.0), 2000)?;
    let quad = escape_time_quadrature(&pot, d, -2.0, 0.45, 1.0)?;
    let kr = kramers_mte(&pot, d)?;

    println!("D = {d}, barrier {:.3}", pot.barrier());
    println!("Monte Carlo      {:8.2} ± {:.2}", mc.mean, mc.std_error);
    println!("generator BVP    {:8.2}", bvp.at(pot.x_min));
    println!("quadrature       {:8.2}", quad);
    println!("Kramers          {:8.2}", kr);

    // at smaller D the Kramers limit takes over
    for d in [0.2, 0.1, 0.05] {
        let q = escape_time_quadrature(&pot, d, -2.0, 0.45, 1.0)?;
        println!("D = {d:<4}  ln τ quadrature {:7.3}  Kramers {:7.3}", q.ln(), kramers_mte(&pot, d)?.ln());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
