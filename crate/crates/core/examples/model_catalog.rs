// Builtin models, their parameter schemas and equilibria, and a model
// defined from scratch.

use std::sync::Arc;

use rarepath::model::catalog::{resolve_params, MODEL_NAMES};
use rarepath::model::{builtin_model, param_schema, DiffusionModel, Equilibrium, Model, Params, Stability};
use rarepath::Result;

pub fn run() -> Result<()> {
    for name in MODEL_NAMES {
        let keys: Vec<String> = param_schema(name)?
            .iter()
            .map(|s| match s.default {
                Some(v) => format!("{}={v}", s.key),
                None => format!("{} ({})", s.key, s.help),
            })
            .collect();
        println!("{name:<13} {}", keys.join(", "));
    }

    // required parameters have to be supplied
    let given: Params = [("r0".to_string(), 1.5), ("k".to_string(), 100.0)].into();
    println!("\nsis resolved: {:?}", resolve_params("sis", &given)?);
    match builtin_model("sis", &Params::new()) {
        Err(e) => println!("without r0: {e} (exit code {})", e.exit_code()),
        Ok(_) => unreachable!(),
    }

    let Model::Jump(sis) = builtin_model("sis", &given)? else { unreachable!() };
    for e in &sis.equilibria {
        println!("  {:<10} x = {:?} {:?}", e.label, e.state, e.stability);
    }

    // a diffusion model from closures: dx = (x - x³) dt + dη
    let mut m = DiffusionModel::new(
        "bistable",
        1,
        1,
        0.1,
        Arc::new(|x, out| out[0] = x[0] - x[0].powi(3)),
        Arc::new(|_, out| out[0] = 1.0),
    );
    m.additive_noise = true;
    m.equilibria = vec![
        Equilibrium::new("left", vec![-1.0], Stability::Stable),
        Equilibrium::new("top", vec![0.0], Stability::Saddle),
        Equilibrium::new("right", vec![1.0], Stability::Stable),
    ];
    println!("\ncustom: f(0.5) = {:?}, Df(1) = {:.6}", m.drift(&[0.5]), m.drift_jacobian(&[1.0])[(0, 0)]);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
