// WKB asymptotics of extinction: the optimal momentum λ_opt(x), the action
// and the prefactor, for a threshold-free and a threshold (Allee) model.

use rarepath::model::builtin_model;
use rarepath::wkb::{action_along_path, build_hamiltonian, lambda_opt_single_step, mte_topology_a, mte_topology_b};
use rarepath::hamiltonian::Hamiltonian;
use rarepath::Result;

pub fn run() -> Result<()> {
    let sis = builtin_model("sis", &[("r0".to_string(), 1.5), ("k".to_string(), 100.0)].into())?.into_jump()?;
    let path = lambda_opt_single_step(&sis)?;
    let h = build_hamiltonian(&sis);
    let x_end = sis.equilibrium("endemic").expect("endemic").state[0];
    println!("SIS: λ_opt(x) = -ln(R0 (1 - x)), H along it:");
    for x in [0.05, 0.15, 0.25] {
        let l = (path.lambda)(x);
        println!("  x = {x:.2}  λ = {l:+.5}  H = {:+.1e}", h.h(&[x], &[l]));
    }
    let r = mte_topology_a(&sis)?;
    println!("  action {:.7} (from the path: {:.7})", r.s_opt, action_along_path(&path, x_end, 0.0)?.abs());
    println!("  prefactor {:.4}, ln τ at K = 100: {:.3}", r.prefactor, r.ln_tau);

    let allee = builtin_model("allee", &[("k".to_string(), 100.0)].into())?.into_jump()?;
    let r = mte_topology_b(&allee)?;
    println!("\nAllee: action {:.7}, prefactor {:.4}, ln τ at K = 100: {:.3}", r.s_opt, r.prefactor, r.ln_tau);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
