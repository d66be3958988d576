//! Finite-time minimum action by relaxation in an artificial time.

use nalgebra::DVector;

use super::{inverse_tensor, linear_nodes, midpoint, ActionReport, DiscretizedPath, Parameterization};
use crate::error::{Error, Result};
use crate::hamiltonian::{DiffusionHamiltonian, Hamiltonian};
use crate::linalg::Banded;
use crate::model::DiffusionModel;

#[derive(Debug, Clone)]
pub enum FinalCondition {
    Fixed,
    /// `free[i]` leaves coordinate `i` of the final node unconstrained
    /// (natural condition `λ_i = 0`).
    Free(Vec<bool>),
}

#[derive(Debug, Clone)]
pub struct MamOptions {
    pub grid_n: usize,
    pub max_steps: usize,
    /// Stop when `max |δS/δx_k| / h`, relative to `max(1, max |λ|)`, falls
    /// below this.
    pub tol: f64,
    pub initial: Option<Vec<Vec<f64>>>,
}

impl Default for MamOptions {
    fn default() -> Self {
        Self {
            grid_n: 400,
            max_steps: 200_000,
            tol: 1e-8,
            initial: None,
        }
    }
}

struct Segments {
    action: f64,
    lambda: Vec<DVector<f64>>,
    hx: Vec<Vec<f64>>,
    /// Diagonal of a⁻¹ at each midpoint, for the preconditioner.
    metric: Vec<Vec<f64>>,
}

fn evaluate(model: &DiffusionModel, nodes: &[Vec<f64>], h: f64) -> Result<Segments> {
    let d = model.dim;
    let ham = DiffusionHamiltonian::new(model);
    let n = nodes.len() - 1;
    let mut seg = Segments {
        action: 0.0,
        lambda: Vec::with_capacity(n),
        hx: Vec::with_capacity(n),
        metric: Vec::with_capacity(n),
    };
    let mut f = vec![0.0; d];
    for k in 0..n {
        let xm = midpoint(&nodes[k], &nodes[k + 1]);
        model.drift_into(&xm, &mut f);
        let r = DVector::from_iterator(d, (0..d).map(|i| (nodes[k + 1][i] - nodes[k][i]) / h - f[i]));
        let ainv = inverse_tensor(model, &xm)?;
        let lam = &ainv * &r;
        seg.action += 0.5 * h * r.dot(&lam);
        let mut hx = vec![0.0; d];
        ham.h_x(&xm, lam.as_slice(), &mut hx);
        seg.hx.push(hx);
        seg.metric.push((0..d).map(|i| ainv[(i, i)]).collect());
        seg.lambda.push(lam);
    }
    if !seg.action.is_finite() {
        return Err(Error::BlowUp { step: 0 });
    }
    Ok(seg)
}

/// `∂S_h/∂x_k` for every node; entries for fixed coordinates are zeroed.
fn gradient(seg: &Segments, h: f64, d: usize, free: &[bool]) -> Vec<Vec<f64>> {
    let n = seg.lambda.len();
    let mut g = vec![vec![0.0; d]; n + 1];
    for k in 1..n {
        for i in 0..d {
            g[k][i] = seg.lambda[k - 1][i] - seg.lambda[k][i] - 0.5 * h * (seg.hx[k - 1][i] + seg.hx[k][i]);
        }
    }
    for i in 0..d {
        if free[i] {
            g[n][i] = seg.lambda[n - 1][i] - 0.5 * h * seg.hx[n - 1][i];
        }
    }
    g
}

fn residual(seg: &Segments, g: &[Vec<f64>], h: f64) -> f64 {
    let scale = seg.lambda.iter().flat_map(|l| l.iter()).fold(1.0f64, |m, v| m.max(v.abs()));
    g.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())) / (h * scale)
}

/// Minimizes the discretized action between `x_i` and `x_f` over a fixed
/// horizon `t_f`.
///
/// Each step solves `(∇²S + μ M) δ = -∇S`, where `M` is the diagonal of the
/// metric-weighted second difference. With `μ` large this is preconditioned
/// descent in an artificial time; `μ` shrinks on success, so near the
/// minimum the steps become Newton steps. Plain descent creeps along the
/// almost free time-translation mode of long horizons, Newton does not.
pub fn mam_relax(
    model: &DiffusionModel,
    x_i: &[f64],
    x_f: &[f64],
    final_condition: &FinalCondition,
    t_f: f64,
    opts: &MamOptions,
) -> Result<ActionReport> {
    let d = model.dim;
    if x_i.len() != d || x_f.len() != d {
        return Err(Error::invalid("x", format!("endpoints must have dimension {d}")));
    }
    if !(t_f > 0.0 && t_f.is_finite()) {
        return Err(Error::invalid("t_f", "must be positive and finite"));
    }
    if opts.grid_n < 2 {
        return Err(Error::invalid("grid_n", "must be at least 2"));
    }
    let n = opts.grid_n;
    let h = t_f / n as f64;
    let free = match final_condition {
        FinalCondition::Fixed => vec![false; d],
        FinalCondition::Free(mask) if mask.len() == d => mask.clone(),
        FinalCondition::Free(_) => return Err(Error::invalid("free", "mask length must match dim")),
    };
    let mut nodes = match &opts.initial {
        Some(init) if init.len() == n + 1 => init.clone(),
        Some(_) => return Err(Error::invalid("initial", format!("need {} nodes", n + 1))),
        None => linear_nodes(x_i, x_f, n),
    };
    nodes[0] = x_i.to_vec();
    for i in 0..d {
        if !free[i] {
            nodes[n][i] = x_f[i];
        }
    }

    let mut seg = evaluate(model, &nodes, h)?;
    let mut g = gradient(&seg, h, d, &free);
    let mut res = residual(&seg, &g, h);
    let mut hess = if res >= opts.tol { Some(hessian(model, &nodes, h, &free)?) } else { None };
    let mut mu = 1.0;
    let mut iterations = 0;
    while res >= opts.tol && iterations < opts.max_steps {
        iterations += 1;
        let hm = hess.as_ref().expect("hessian of the current iterate");
        let unknowns = n * d;
        let mut lhs = Banded::zeros(unknowns, 2 * d - 1, 2 * d - 1);
        let mut rhs = vec![0.0; unknowns];
        for k in 1..=n {
            for i in 0..d {
                let r = (k - 1) * d + i;
                if k == n && !free[i] {
                    lhs.add(r, r, 1.0);
                    continue;
                }
                rhs[r] = -g[k][i];
                // damping scaled by the metric second difference keeps large-μ steps
                // close to preconditioned descent
                let c0 = seg.metric[k - 1][i] / h;
                let c1 = if k < n { seg.metric[k][i] / h } else { 0.0 };
                lhs.add(r, r, mu * (c0 + c1));
                for c in r.saturating_sub(2 * d - 1)..(r + 2 * d).min(unknowns) {
                    let v = hm.get(r, c);
                    if v != 0.0 {
                        lhs.add(r, c, v);
                    }
                }
            }
        }
        let trial = match lhs.solve(&mut rhs) {
            Ok(()) => {
                let mut trial = nodes.clone();
                for k in 1..=n {
                    for i in 0..d {
                        trial[k][i] += rhs[(k - 1) * d + i];
                    }
                }
                Some(trial)
            }
            Err(_) => None,
        };
        match trial.map(|t| (evaluate(model, &t, h), t)) {
            Some((Ok(t), x)) if t.action <= seg.action * (1.0 + 1e-14) + 1e-300 => {
                g = gradient(&t, h, d, &free);
                nodes = x;
                seg = t;
                res = residual(&seg, &g, h);
                if res >= opts.tol {
                    hess = Some(hessian(model, &nodes, h, &free)?);
                }
                mu = (mu / 3.0).max(1e-12);
            }
            _ => {
                mu *= 4.0;
                if mu > 1e12 {
                    break;
                }
            }
        }
    }
    let converged = res < opts.tol;
    if !converged {
        log::warn!("mam_relax stopped after {iterations} steps with residual {res:.3e}");
    }

    let momenta = node_momenta(&seg.lambda);
    let grid: Vec<f64> = (0..=n).map(|k| k as f64 * h).collect();
    Ok(ActionReport {
        action: seg.action,
        path: DiscretizedPath {
            parameterization: Parameterization::Time,
            grid,
            nodes,
            momenta: Some(momenta),
            times: None,
        },
        residual: res,
        iterations,
        converged,
        max_abs_hamiltonian: None,
    })
}

/// Banded Hessian of the discrete action over nodes `1..=n`, by central
/// differences of the analytic gradient. Nodes three apart do not interact,
/// so `3d` perturbation pairs recover every entry.
fn hessian(model: &DiffusionModel, nodes: &[Vec<f64>], h: f64, free: &[bool]) -> Result<Banded> {
    let d = model.dim;
    let n = nodes.len() - 1;
    let unknowns = n * d;
    let mut out = Banded::zeros(unknowns, 2 * d - 1, 2 * d - 1);
    let scale = nodes.iter().flatten().fold(1.0f64, |m, v| m.max(v.abs()));
    let eps = 1e-6 * scale;
    let mut work = nodes.to_vec();
    for color in 0..3 {
        for i in 0..d {
            let touched: Vec<usize> = (1..=n).filter(|k| k % 3 == color && (*k < n || free[i])).collect();
            if touched.is_empty() {
                continue;
            }
            let side = |sign: f64, work: &mut Vec<Vec<f64>>| -> Result<Vec<Vec<f64>>> {
                for &k in &touched {
                    work[k][i] = nodes[k][i] + sign * eps;
                }
                let seg = evaluate(model, work, h)?;
                Ok(gradient(&seg, h, d, free))
            };
            let gp = side(1.0, &mut work)?;
            let gm = side(-1.0, &mut work)?;
            for &k in &touched {
                work[k][i] = nodes[k][i];
                let col = (k - 1) * d + i;
                for kk in k.saturating_sub(1).max(1)..=(k + 1).min(n) {
                    for j in 0..d {
                        let v = (gp[kk][j] - gm[kk][j]) / (2.0 * eps);
                        if v != 0.0 {
                            out.add((kk - 1) * d + j, col, v);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Node momenta from segment values: interior nodes average their two
/// neighbours, end nodes take the adjacent segment.
pub(crate) fn node_momenta(lambda: &[DVector<f64>]) -> Vec<Vec<f64>> {
    let n = lambda.len();
    (0..=n)
        .map(|k| {
            if k == 0 {
                lambda[0].as_slice().to_vec()
            } else if k == n {
                lambda[n - 1].as_slice().to_vec()
            } else {
                lambda[k - 1].iter().zip(lambda[k].iter()).map(|(a, b)| 0.5 * (a + b)).collect()
            }
        })
        .collect()
}
