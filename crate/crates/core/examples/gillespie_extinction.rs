// Gillespie simulation of the SIS epidemic, and mean extinction times from
// simulation, the exact birth–death sum and the WKB formula.

use rarepath::model::{builtin_model, Params};
use rarepath::ssa::{extinction_time_ensemble, gillespie, single_step_mte, EnsembleConfig};
use rarepath::wkb::mte_topology_a;
use rarepath::Result;

pub fn run() -> Result<()> {
    let mut p: Params = [("r0".to_string(), 1.5), ("k".to_string(), 60.0)].into();
    let m = builtin_model("sis", &p)?.into_jump()?;
    let n0 = m.population(&m.equilibrium("endemic").expect("endemic state").state);

    let traj = gillespie(&m, &n0, 50.0, 1)?;
    println!("{} events, time-averaged infected {:.1} (endemic level {})", traj.fired.len(), traj.time_average(0, 10.0), n0[0]);

    println!("\n  K   ln τ ssa         exact    wkb");
    for k in [30.0, 45.0, 60.0] {
        p.insert("k".into(), k);
        let m = builtin_model("sis", &p)?.into_jump()?;
        let n0 = m.population(&m.equilibrium("endemic").expect("endemic state").state);
        let e = extinction_time_ensemble(&m, &n0, &EnsembleConfig::new(1000, 2))?;
        let exact = single_step_mte(&m, n0[0])?;
        let wkb = mte_topology_a(&m)?;
        // delta method: se(ln τ) ≈ se(τ) / τ
        println!("{k:4} {:7.3} ± {:.3} {:8.3} {:7.3}", e.ln_mean, e.std_error / e.mean, exact.ln(), wkb.ln_tau);
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
