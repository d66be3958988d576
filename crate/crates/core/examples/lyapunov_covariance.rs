// Stationary covariance of the linearized laser soliton dynamics about the
// stable state, checked against a long simulation.

use rarepath::linalg::{lyapunov_residual, spectral_abscissa};
use rarepath::model::laser::{laser_linearization, laser_stationary_covariance, lyapunov_source, LaserParams};
use rarepath::model::builtin_model;
use rarepath::sde::{euler_maruyama, SimConfig};
use rarepath::Result;

pub fn run() -> Result<()> {
    let noise = 1e-4;
    let model = builtin_model("laser3d", &[("d".to_string(), noise)].into())?.into_diffusion()?;
    let lp = LaserParams::from_params(&model.params)?;
    let x0 = model.equilibrium("plus_0").expect("stable soliton").state.clone();

    let m = laser_linearization(&lp, x0[0], 0);
    let sigma = laser_stationary_covariance(&lp, noise, 0)?;
    let q = lyapunov_source(&x0, noise);
    println!("spectral abscissa {:.4}", spectral_abscissa(&m));
    println!("Lyapunov residual {:.2e}", lyapunov_residual(&m, &sigma, &q));
    println!("Σ = {sigma:.3e}");

    // time average of (x - x0)(x - x0)^T along one long path
    let traj = euler_maruyama(&model, &x0, &SimConfig::new(1e-2, 4000.0, 5, 1))?;
    let burn = traj.len() / 10;
    let mut c = [[0.0; 3]; 3];
    for k in burn..traj.len() {
        let x = traj.state(k);
        for i in 0..3 {
            for j in 0..3 {
                c[i][j] += (x[i] - x0[i]) * (x[j] - x0[j]);
            }
        }
    }
    let n = (traj.len() - burn) as f64;
    for (i, row) in c.iter().enumerate() {
        println!("var x{} simulated {:.3e}  linear {:.3e}", i + 1, row[i] / n, sigma[(i, i)]);
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
