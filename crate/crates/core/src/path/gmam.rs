//! Geometric minimum action: infinite-time paths parameterized by arclength.
//!
//! The time-minimized action of a curve `φ` is
//! `S = ∫ (|φ'|_a |f|_a - ⟨φ', f⟩_a) dα` with `|v|_a² = vᵀa⁻¹v`, which for
//! `a = I` is `2∫|φ'||f| sin²(θ/2) dα`. Its local minimizer over the
//! momentum constraint `H = 0` is `λ̂ = (|f|_a/|φ'|_a) a⁻¹φ' - a⁻¹f`.

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;

use super::mam::node_momenta;
use super::{inverse_tensor, linear_nodes, midpoint, ActionReport, DiscretizedPath, Parameterization};
use crate::error::{Error, Result};
use crate::hamiltonian::{DiffusionHamiltonian, Hamiltonian};
use crate::linalg::Banded;
use crate::model::DiffusionModel;
use crate::stats::sample_rng;

#[derive(Debug, Clone)]
pub struct GmamOptions {
    pub grid_n: usize,
    pub max_iter: usize,
    /// Relative action change regarded as stagnation.
    pub tol: f64,
    pub initial: Option<Vec<Vec<f64>>>,
}

impl Default for GmamOptions {
    fn default() -> Self {
        Self {
            grid_n: 400,
            max_iter: 20_000,
            tol: 1e-10,
            initial: None,
        }
    }
}

struct Segments {
    action: f64,
    lambda: Vec<DVector<f64>>,
    /// Physical time spent on each segment, `|Δφ|_a / |f|_a`.
    dt: Vec<f64>,
    hx: Vec<Vec<f64>>,
    weight: Vec<Vec<f64>>,
}

fn evaluate(model: &DiffusionModel, nodes: &[Vec<f64>]) -> Result<Segments> {
    let d = model.dim;
    let ham = DiffusionHamiltonian::new(model);
    let n = nodes.len() - 1;
    let mut seg = Segments {
        action: 0.0,
        lambda: Vec::with_capacity(n),
        dt: Vec::with_capacity(n),
        hx: Vec::with_capacity(n),
        weight: Vec::with_capacity(n),
    };
    let mut f = vec![0.0; d];
    for k in 0..n {
        let xm = midpoint(&nodes[k], &nodes[k + 1]);
        model.drift_into(&xm, &mut f);
        let ainv = inverse_tensor(model, &xm)?;
        let v = DVector::from_iterator(d, (0..d).map(|i| nodes[k + 1][i] - nodes[k][i]));
        let fv = DVector::from_column_slice(&f);
        let ainv_v = &ainv * &v;
        let ainv_f = &ainv * &fv;
        let vn = v.dot(&ainv_v).sqrt();
        let fnorm = fv.dot(&ainv_f).sqrt();
        seg.action += vn * fnorm - v.dot(&ainv_f);
        let (lam, dt) = if vn > 0.0 && fnorm > 0.0 {
            (ainv_v * (fnorm / vn) - ainv_f, vn / fnorm)
        } else {
            (DVector::zeros(d), if vn > 0.0 { f64::INFINITY } else { 0.0 })
        };
        let mut hx = vec![0.0; d];
        if dt.is_finite() && dt > 0.0 {
            ham.h_x(&xm, lam.as_slice(), &mut hx);
            hx.iter_mut().for_each(|h| *h *= dt);
        }
        let w = if vn > 0.0 { fnorm / vn } else { 0.0 };
        seg.weight.push((0..d).map(|i| w * ainv[(i, i)]).collect());
        seg.lambda.push(lam);
        seg.dt.push(dt);
        seg.hx.push(hx);
    }
    if !seg.action.is_finite() {
        return Err(Error::BlowUp { step: 0 });
    }
    Ok(seg)
}

/// `∂S/∂φ_k` at interior nodes.
fn gradient(seg: &Segments, d: usize) -> Vec<Vec<f64>> {
    let n = seg.lambda.len();
    let mut g = vec![vec![0.0; d]; n + 1];
    for k in 1..n {
        g[k] = (0..d)
            .map(|i| seg.lambda[k - 1][i] - seg.lambda[k][i] - 0.5 * (seg.hx[k - 1][i] + seg.hx[k][i]))
            .collect();
    }
    g
}

/// Banded Hessian over the interior nodes by 3-colour central differences
/// of the gradient. It is singular along the tangent (the action does not
/// see how nodes are spread), which the damping absorbs.
fn hessian(model: &DiffusionModel, nodes: &[Vec<f64>]) -> Result<Banded> {
    let d = model.dim;
    let n = nodes.len() - 1;
    let unknowns = (n - 1) * d;
    let mut out = Banded::zeros(unknowns, 2 * d - 1, 2 * d - 1);
    let scale = nodes.iter().flatten().fold(1.0f64, |m, v| m.max(v.abs()));
    let eps = 1e-6 * scale;
    let mut work = nodes.to_vec();
    for color in 0..3 {
        for i in 0..d {
            let touched: Vec<usize> = (1..n).filter(|k| k % 3 == color).collect();
            let mut side = |sign: f64| -> Result<Vec<Vec<f64>>> {
                for &k in &touched {
                    work[k][i] = nodes[k][i] + sign * eps;
                }
                Ok(gradient(&evaluate(model, &work)?, d))
            };
            let gp = side(1.0)?;
            let gm = side(-1.0)?;
            for &k in &touched {
                work[k][i] = nodes[k][i];
                let col = (k - 1) * d + i;
                for kk in (k - 1).max(1)..=(k + 1).min(n - 1) {
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

/// Gradient at interior nodes with the tangential part removed.
fn normal_gradient(seg: &Segments, nodes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = seg.lambda.len();
    let d = nodes[0].len();
    let mut g = gradient(seg, d);
    for k in 1..n {
        let gk = &mut g[k];
        let t: Vec<f64> = (0..d).map(|i| nodes[k + 1][i] - nodes[k - 1][i]).collect();
        let tt: f64 = t.iter().map(|v| v * v).sum();
        if tt > 0.0 {
            let c = gk.iter().zip(&t).map(|(a, b)| a * b).sum::<f64>() / tt;
            gk.iter_mut().zip(&t).for_each(|(a, b)| *a -= c * b);
        }
    }
    g
}

/// Redistributes nodes to equal Euclidean arclength.
pub(crate) fn reparameterize(nodes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = nodes.len() - 1;
    let mut s = vec![0.0; n + 1];
    for k in 1..=n {
        let l: f64 = nodes[k].iter().zip(&nodes[k - 1]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        s[k] = s[k - 1] + l;
    }
    let total = s[n];
    if total == 0.0 {
        return nodes.to_vec();
    }
    let d = nodes[0].len();
    let mut out = Vec::with_capacity(n + 1);
    let mut j = 1;
    for k in 0..=n {
        let target = total * k as f64 / n as f64;
        while j < n && s[j] < target {
            j += 1;
        }
        let span = s[j] - s[j - 1];
        let w = if span > 0.0 { ((target - s[j - 1]) / span).clamp(0.0, 1.0) } else { 0.0 };
        out.push((0..d).map(|i| nodes[j - 1][i] + w * (nodes[j][i] - nodes[j - 1][i])).collect());
    }
    out[0] = nodes[0].clone();
    out[n] = nodes[n].clone();
    out
}

/// Minimizes the geometric action between `x_from` and `x_to`.
///
/// Physical time is rebuilt from `dt = |Δφ|_a / |f|_a` on each segment; the
/// clock is zero at the first node. An endpoint that is an equilibrium is
/// only reached in infinite time, so the first and last segment times are
/// midpoint estimates.
pub fn gmam(model: &DiffusionModel, x_from: &[f64], x_to: &[f64], opts: &GmamOptions) -> Result<ActionReport> {
    let d = model.dim;
    if x_from.len() != d || x_to.len() != d {
        return Err(Error::invalid("x", format!("endpoints must have dimension {d}")));
    }
    if opts.grid_n < 2 {
        return Err(Error::invalid("grid_n", "must be at least 2"));
    }
    let f0 = model.drift(x_from);
    let f0n = f0.iter().map(|v| v * v).sum::<f64>().sqrt();
    if f0n > 1e-8 {
        log::warn!("gmam start point is not an equilibrium (|f| = {f0n:.3e}); the infinite-time premise does not hold");
    }
    let n = opts.grid_n;
    let mut nodes = match &opts.initial {
        Some(init) if init.len() == n + 1 => reparameterize(init),
        Some(_) => return Err(Error::invalid("initial", format!("need {} nodes", n + 1))),
        None => linear_nodes(x_from, x_to, n),
    };
    nodes[0] = x_from.to_vec();
    nodes[n] = x_to.to_vec();

    let mut seg = evaluate(model, &nodes)?;
    let mut hess: Option<Banded> = None;
    let mut mu = 1.0;
    let mut iterations = 0;
    let mut quiet = 0;
    let mut res = 0.0;
    // -gᵀδ / S for the first step tried at each new point
    let mut predicted = f64::INFINITY;
    while iterations < opts.max_iter && d > 1 {
        iterations += 1;
        let g = normal_gradient(&seg, &nodes);
        res = g.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())) * n as f64;
        let fresh = hess.is_none();
        if fresh {
            hess = Some(hessian(model, &nodes)?);
        }
        let hm = hess.as_ref().expect("just computed");
        let unknowns = (n - 1) * d;
        let mut lhs = Banded::zeros(unknowns, 2 * d - 1, 2 * d - 1);
        let mut rhs = vec![0.0; unknowns];
        for i in 0..d {
            let wmax = seg.weight.iter().map(|w| w[i]).fold(0.0, f64::max);
            let wmax = if wmax > 0.0 { wmax } else { 1.0 };
            let c: Vec<f64> = seg.weight.iter().map(|w| w[i].max(1e-3 * wmax) * n as f64).collect();
            for k in 1..n {
                let r = (k - 1) * d + i;
                rhs[r] = -g[k][i];
                lhs.add(r, r, mu * (c[k - 1] + c[k]));
            }
        }
        for r in 0..unknowns {
            for c in r.saturating_sub(2 * d - 1)..(r + 2 * d).min(unknowns) {
                let v = hm.get(r, c);
                if v != 0.0 {
                    lhs.add(r, c, v);
                }
            }
        }
        let mut trial = nodes.clone();
        if lhs.solve(&mut rhs).is_ok() {
            for k in 1..n {
                // moves along the curve only redistribute nodes, which the
                // reparameterization undoes anyway
                let step = &mut rhs[(k - 1) * d..k * d];
                let t: Vec<f64> = (0..d).map(|i| nodes[k + 1][i] - nodes[k - 1][i]).collect();
                let tt: f64 = t.iter().map(|v| v * v).sum();
                if tt > 0.0 {
                    let c = step.iter().zip(&t).map(|(a, b)| a * b).sum::<f64>() / tt;
                    step.iter_mut().zip(&t).for_each(|(a, b)| *a -= c * b);
                }
                for i in 0..d {
                    trial[k][i] += step[i];
                }
            }
            if fresh {
                let gd: f64 = (1..n).map(|k| (0..d).map(|i| g[k][i] * rhs[(k - 1) * d + i]).sum::<f64>()).sum();
                predicted = -gd / seg.action.abs().max(1e-300);
            }
        }
        let trial = reparameterize(&trial);
        match evaluate(model, &trial) {
            Ok(t) if t.action <= seg.action => {
                let change = (seg.action - t.action).abs() / seg.action.abs().max(1e-300);
                nodes = trial;
                seg = t;
                hess = None;
                mu = (mu / 3.0).max(1e-12);
                quiet = if change < opts.tol { quiet + 1 } else { 0 };
                if quiet >= 20 {
                    break;
                }
            }
            _ => {
                mu *= 4.0;
                if mu > 1e12 {
                    break;
                }
            }
        }
    }
    // a damping blow-up is either roundoff (the undamped step promised a
    // negligible decrease) or a kink in the action, e.g. the curve pinned on
    // an intermediate equilibrium
    let converged = d == 1 || quiet >= 20 || (mu > 1e12 && predicted < 1e-8);
    if !converged {
        log::warn!("gmam stopped after {iterations} iterations, normal gradient {res:.3e}, predicted relative decrease {predicted:.3e}");
    }

    let mut times = vec![0.0; n + 1];
    for k in 0..n {
        times[k + 1] = times[k] + seg.dt[k];
    }
    let momenta = node_momenta(&seg.lambda);
    let ham = DiffusionHamiltonian::new(model);
    let max_h = (1..n)
        .map(|k| ham.h(&nodes[k], &momenta[k]).abs())
        .fold(0.0, f64::max);
    Ok(ActionReport {
        action: seg.action,
        path: DiscretizedPath {
            parameterization: Parameterization::Arclength,
            grid: (0..=n).map(|k| k as f64 / n as f64).collect(),
            nodes,
            momenta: Some(momenta),
            times: times.iter().all(|t| t.is_finite()).then_some(times),
        },
        residual: res,
        iterations,
        converged,
        max_abs_hamiltonian: Some(max_h),
    })
}

/// Runs `gmam` from the straight line and `starts - 1` randomly bent initial
/// curves; returns the lowest-action converged result plus every action.
pub fn gmam_multistart(
    model: &DiffusionModel,
    x_from: &[f64],
    x_to: &[f64],
    opts: &GmamOptions,
    starts: usize,
    seed: u64,
) -> Result<(ActionReport, Vec<f64>)> {
    let n = opts.grid_n;
    let d = model.dim;
    let span: f64 = x_from.iter().zip(x_to).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt().max(1e-3);
    let results: Vec<Result<ActionReport>> = (0..starts.max(1))
        .into_par_iter()
        .map(|j| {
            let mut o = opts.clone();
            if j > 0 {
                let mut rng = sample_rng(seed, j as u64);
                let amp: Vec<f64> = (0..d).map(|_| rng.random_range(-0.3..0.3) * span).collect();
                let mode = rng.random_range(1..=3) as f64;
                let mut init = linear_nodes(x_from, x_to, n);
                for (k, x) in init.iter_mut().enumerate() {
                    let bump = (std::f64::consts::PI * mode * k as f64 / n as f64).sin();
                    x.iter_mut().zip(&amp).for_each(|(xi, a)| *xi += a * bump);
                }
                o.initial = Some(init);
            }
            gmam(model, x_from, x_to, &o)
        })
        .collect();
    let mut actions = Vec::new();
    let mut best: Option<ActionReport> = None;
    for r in results {
        let r = r?;
        actions.push(r.action);
        let better = best.as_ref().is_none_or(|b| (r.converged && !b.converged) || (r.converged == b.converged && r.action < b.action));
        if better {
            best = Some(r);
        }
    }
    Ok((best.expect("at least one start"), actions))
}

#[cfg(test)]
mod tests {
    use super::super::tests::cubic;
    use super::super::{action_functional, quasipotential};
    use super::*;
    use crate::model::{builtin_model, Params};

    #[test]
    fn cubic_instanton() {
        let m = cubic();
        let r = gmam(&m, &[-0.5], &[0.5], &GmamOptions { grid_n: 2000, ..Default::default() }).unwrap();
        assert!((r.action - 1.0).abs() < 1e-3, "{}", r.action);
        let t0 = r.path.crossing(0, 0.0).unwrap();
        let t = r.path.times.as_ref().unwrap();
        let tc = crate::path::interp(&r.path.grid, t0, |k| t[k]);
        let err = (1..r.path.len() - 1)
            .map(|k| (r.path.nodes[k][0] - 0.5 * (1.5 * (t[k] - tc)).tanh()).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-3, "{err}");
        let s = action_functional(&r.path, &m).unwrap();
        assert!((s - r.action).abs() < 1e-4);
    }

    #[test]
    fn uphill_path_is_time_reversed_descent() {
        // ẋ = +U'(x) = -f(x) along the reconstructed clock
        let m = cubic();
        let r = gmam(&m, &[-0.5], &[0.5], &GmamOptions { grid_n: 1000, ..Default::default() }).unwrap();
        let t = r.path.times.as_ref().unwrap();
        for k in 100..900 {
            let v = (r.path.nodes[k + 1][0] - r.path.nodes[k][0]) / (t[k + 1] - t[k]);
            let xm = 0.5 * (r.path.nodes[k + 1][0] + r.path.nodes[k][0]);
            assert!((v + m.drift(&[xm])[0]).abs() < 1e-3);
        }
    }

    #[test]
    fn downhill_costs_nothing() {
        let r = gmam(&cubic(), &[0.5], &[0.0], &GmamOptions::default()).unwrap();
        assert!(r.action.abs() < 1e-12, "{}", r.action);
    }

    #[test]
    fn quasipotential_spot_value() {
        let r = quasipotential(&cubic(), &[-0.25], &[0.25], 2000).unwrap();
        assert!((r.action - 11.0 / 16.0).abs() < 1e-4, "{}", r.action);
        let tt = r.transit_time().unwrap();
        assert!((tt - 4.0 / 3.0 * 0.5f64.atanh()).abs() < 1e-3, "{tt}");
        let z = quasipotential(&cubic(), &[-0.25], &[-0.25], 50).unwrap();
        assert_eq!(z.action, 0.0);
    }

    #[test]
    fn bent_start_relaxes_to_the_symmetric_path() {
        // isotropic ou in 2D: the minimizer is the straight line, Q = |x|²
        let ou = crate::model::DiffusionModel::new(
            "ou2",
            2,
            2,
            1.0,
            std::sync::Arc::new(|x: &[f64], out: &mut [f64]| {
                out[0] = -x[0];
                out[1] = -x[1];
            }),
            std::sync::Arc::new(|_: &[f64], out: &mut [f64]| {
                out.copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
            }),
        );
        let (best, actions) = gmam_multistart(&ou, &[0.0, 0.0], &[1.0, 0.5], &GmamOptions { grid_n: 200, ..Default::default() }, 4, 3).unwrap();
        assert_eq!(actions.len(), 4);
        assert!((best.action - 1.25).abs() < 1e-3, "{}", best.action);
        for a in actions {
            assert!((a - 1.25).abs() < 5e-3, "{a}");
        }
        let dev = best.path.nodes.iter().map(|x| (x[1] - 0.5 * x[0]).abs()).fold(0.0, f64::max);
        assert!(dev < 1e-3, "{dev}");
    }

    #[test]
    fn arclength_spacing_is_uniform() {
        let m = builtin_model("laser3d", &Params::new()).unwrap().into_diffusion().unwrap();
        let a = m.equilibrium("plus_0").unwrap().state.clone();
        let b = m.equilibrium("plus_1").unwrap().state.clone();
        let r = gmam(&m, &a, &b, &GmamOptions { grid_n: 100, max_iter: 3000, ..Default::default() }).unwrap();
        let l: Vec<f64> = r
            .path
            .nodes
            .windows(2)
            .map(|w| w[0].iter().zip(&w[1]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
            .collect();
        let mean = l.iter().sum::<f64>() / l.len() as f64;
        assert!(l.iter().all(|v| (v / mean - 1.0).abs() < 0.01));
    }
}
