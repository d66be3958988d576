// Tail of the soliton position in a filtered transmission line, by
// importance sampling with one bias path per target.

use rarepath::model::builtin_model;
use rarepath::path::MamOptions;
use rarepath::sampling::{soliton_position_tail, SampleConfig};
use rarepath::Result;

pub fn run() -> Result<()> {
    let m = builtin_model("filter3d", &Default::default())?.into_diffusion()?;
    let cfg = SampleConfig::new(10.0, 1e-2, 2000, 4);
    let targets = [-6.0, -4.0, -2.0, 2.0, 4.0, 6.0];
    let tail = soliton_position_tail(&m, &targets, &cfg, &MamOptions { grid_n: 200, ..Default::default() })?;
    println!("  ξ_f     P(beyond)       se        S/D");
    for p in &tail {
        println!("{:+5.1}  {:.4e}  {:.2e}  {:7.3}", p.xi_f, p.p_hat, p.se, p.action / m.noise_intensity);
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
