// Geometric minimum action paths: the cubic well quasipotential, and the
// laser soliton jumping between neighbouring trapping sites.

use rarepath::model::builtin_model;
use rarepath::path::{gmam, quasipotential, GmamOptions};
use rarepath::Result;

pub fn run() -> Result<()> {
    let cubic = builtin_model("cubic_well", &[("d".to_string(), 0.1)].into())?.into_diffusion()?;
    let q = quasipotential(&cubic, &[-0.5], &[0.5], 400)?;
    println!("cubic well: quasipotential {:.6}", q.action);

    let opts = GmamOptions { grid_n: 200, ..Default::default() };
    for omega in [0.5, 2.0, 5.0] {
        let m = builtin_model("laser3d", &[("omega".to_string(), omega)].into())?.into_diffusion()?;
        let from = m.equilibrium("plus_0").expect("site 0").state.clone();
        let to = m.equilibrium("plus_1").expect("site 1").state.clone();
        let r = gmam(&m, &from, &to, &opts)?;
        let t = r.transit_time().unwrap_or(f64::NAN);
        println!(
            "ω = {omega}: action {:.5e}, {} iterations, converged {}, time on path {t:.1}",
            r.action, r.iterations, r.converged
        );
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
