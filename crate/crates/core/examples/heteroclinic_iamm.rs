// Newton solution of Hamilton's equations for the extinction paths of the
// SIS and Allee models, compared with the closed-form momentum.

use rarepath::model::builtin_model;
use rarepath::path::{iamm, IammOptions, PhasePoint};
use rarepath::wkb::{build_hamiltonian, lambda_opt_single_step, mte_topology_a, mte_topology_b};
use rarepath::Result;

pub fn run() -> Result<()> {
    let sis = builtin_model("sis", &[("r0".to_string(), 1.5), ("k".to_string(), 100.0)].into())?.into_jump()?;
    let ham = build_hamiltonian(&sis);
    let lam = lambda_opt_single_step(&sis)?;
    let x1 = sis.equilibrium("endemic").expect("endemic").state.clone();
    // the path ends at the fluctuational extinct state (0, λ_opt(0))
    let r = iamm(&ham, &PhasePoint::rest(x1), &PhasePoint::new(vec![0.0], vec![(lam.lambda)(0.0)]), &IammOptions::default())?;
    let m = r.path.momenta.as_ref().expect("phase-space path");
    let mut err: f64 = 0.0;
    for (x, l) in r.path.nodes.iter().zip(m) {
        if x[0] > lam.domain.0 && x[0] < lam.domain.1 {
            err = err.max((l[0] - (lam.lambda)(x[0])).abs());
        }
    }
    println!("SIS: action {:.7} (closed form {:.7}), sup |λ - λ_opt| {err:.1e}", r.action, mte_topology_a(&sis)?.s_opt);

    let allee = builtin_model("allee", &[("k".to_string(), 100.0)].into())?.into_jump()?;
    let ham = build_hamiltonian(&allee);
    let cap = allee.equilibrium("capacity").expect("capacity").state.clone();
    let thr = allee.equilibrium("threshold").expect("threshold").state.clone();
    // |H| on the computed path scales with the squared step, hence the fine grid
    let r = iamm(&ham, &PhasePoint::rest(cap), &PhasePoint::rest(thr), &IammOptions { grid_n: 16_000, ..Default::default() })?;
    println!(
        "Allee: action {:.7} (closed form {:.7}), max |H| {:.1e}",
        r.action,
        mte_topology_b(&allee)?.s_opt,
        r.max_abs_hamiltonian.unwrap_or(f64::NAN)
    );
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
