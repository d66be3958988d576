//! Newton solver for Hamilton's equations on a truncated time interval.

use serde::Serialize;

use super::{ActionReport, DiscretizedPath, Parameterization};
use crate::error::{Error, Result};
use crate::hamiltonian::Hamiltonian;
use crate::linalg::Banded;

/// A point `(x, λ)` of phase space.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhasePoint {
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl PhasePoint {
    pub fn new(x: Vec<f64>, lambda: Vec<f64>) -> Self {
        Self { x, lambda }
    }

    /// `(x, 0)`: an equilibrium of the deterministic flow.
    pub fn rest(x: Vec<f64>) -> Self {
        let d = x.len();
        Self { x, lambda: vec![0.0; d] }
    }
}

#[derive(Debug, Clone)]
pub struct IammOptions {
    pub grid_n: usize,
    /// Half-length of the time window `[-T_ε, T_ε]`.
    pub t_eps: Option<f64>,
    /// Explicit, strictly increasing time grid; overrides `grid_n` and `t_eps`.
    pub times: Option<Vec<f64>>,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for IammOptions {
    fn default() -> Self {
        Self {
            grid_n: 4000,
            t_eps: None,
            times: None,
            tol: 1e-10,
            max_iter: 100,
        }
    }
}

/// `ln(10⁶) / |μ_min|` with `μ_min` the slowest nonzero linear rate of
/// Hamilton's equations at either endpoint.
pub fn default_t_eps(ham: &dyn Hamiltonian, a: &PhasePoint, b: &PhasePoint) -> Result<f64> {
    let mut slowest = f64::INFINITY;
    for e in [a, b] {
        let eig = ham.phase_jacobian(&e.x, &e.lambda).complex_eigenvalues();
        for z in eig.iter() {
            if z.re.abs() > 1e-9 {
                slowest = slowest.min(z.re.abs());
            }
        }
    }
    if !slowest.is_finite() {
        return Err(Error::Precondition("endpoints are not hyperbolic".into()));
    }
    Ok(1e6f64.ln() / slowest)
}

/// Which endpoint coordinate is pinned: `x_i` when the endpoint momentum
/// `λ_i` vanishes, `λ_i` otherwise (that coordinate of `x` is then invariant
/// and only reached asymptotically).
fn pins(p: &PhasePoint) -> Vec<(usize, f64)> {
    let d = p.x.len();
    (0..d)
        .map(|i| if p.lambda[i] == 0.0 { (i, p.x[i]) } else { (d + i, p.lambda[i]) })
        .collect()
}

/// Start pins fill rows `0..d`, cell `k` fills rows `d + w k .. d + w (k + 1)`
/// and the end pins take the last `d` rows, which keeps the Jacobian banded.
fn residual_vector(ham: &dyn Hamiltonian, z: &[f64], t: &[f64], pa: &[(usize, f64)], pb: &[(usize, f64)], out: &mut [f64]) {
    let d = pa.len();
    let w = 2 * d;
    let n = t.len() - 1;
    let mut g = vec![0.0; w];
    let mut zm = vec![0.0; w];
    for (r, &(c, v)) in pa.iter().enumerate() {
        out[r] = z[c] - v;
    }
    for k in 0..n {
        let h = t[k + 1] - t[k];
        for r in 0..w {
            zm[r] = 0.5 * (z[k * w + r] + z[(k + 1) * w + r]);
        }
        ham.phase_flow(&zm, &mut g);
        for r in 0..w {
            out[d + k * w + r] = (z[(k + 1) * w + r] - z[k * w + r]) / h - g[r];
        }
    }
    for (r, &(c, v)) in pb.iter().enumerate() {
        out[d + n * w + r] = z[n * w + c] - v;
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

struct Newton {
    z: Vec<f64>,
    res: f64,
    iterations: usize,
}

fn newton(
    ham: &dyn Hamiltonian,
    t: &[f64],
    pa: &[(usize, f64)],
    pb: &[(usize, f64)],
    mut z: Vec<f64>,
    opts: &IammOptions,
) -> Result<Newton> {
    let d = pa.len();
    let w = 2 * d;
    let n = t.len() - 1;
    let len = w * (n + 1);
    let mut f = vec![0.0; len];
    residual_vector(ham, &z, t, pa, pb, &mut f);
    let mut res = max_abs(&f);
    let mut iterations = 0;
    let mut zm = vec![0.0; w];
    let mut trial = vec![0.0; len];
    let mut ft = vec![0.0; len];
    while res >= opts.tol && iterations < opts.max_iter {
        iterations += 1;
        let mut jac = Banded::zeros(len, 2 * w, 2 * w);
        for (r, &(c, _)) in pa.iter().enumerate() {
            jac.add(r, c, 1.0);
        }
        for (r, &(c, _)) in pb.iter().enumerate() {
            jac.add(d + n * w + r, n * w + c, 1.0);
        }
        for k in 0..n {
            let h = t[k + 1] - t[k];
            for r in 0..w {
                zm[r] = 0.5 * (z[k * w + r] + z[(k + 1) * w + r]);
            }
            let pj = ham.phase_jacobian(&zm[..d], &zm[d..]);
            for r in 0..w {
                let row = d + k * w + r;
                jac.add(row, (k + 1) * w + r, 1.0 / h);
                jac.add(row, k * w + r, -1.0 / h);
                for c in 0..w {
                    jac.add(row, k * w + c, -0.5 * pj[(r, c)]);
                    jac.add(row, (k + 1) * w + c, -0.5 * pj[(r, c)]);
                }
            }
        }
        let mut step: Vec<f64> = f.iter().map(|v| -v).collect();
        jac.solve_refined(&mut step)
            .map_err(|_| Error::SingularJacobian { iteration: iterations })?;
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..=30 {
            for i in 0..len {
                trial[i] = z[i] + alpha * step[i];
            }
            residual_vector(ham, &trial, t, pa, pb, &mut ft);
            let rt = max_abs(&ft);
            if rt.is_finite() && rt < res {
                accepted = true;
                res = rt;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Err(Error::NewtonDivergence { residual: res });
        }
        std::mem::swap(&mut z, &mut trial);
        std::mem::swap(&mut f, &mut ft);
    }
    Ok(Newton { z, res, iterations })
}

/// Resamples a packed solution onto a new grid, holding end values outside
/// the old window.
fn resample(z: &[f64], t_old: &[f64], t_new: &[f64], w: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(w * t_new.len());
    for &s in t_new {
        for r in 0..w {
            out.push(super::interp(t_old, s, |k| z[k * w + r]));
        }
    }
    out
}

/// Solves `ẋ = ∂H/∂λ`, `λ̇ = -∂H/∂x` by damped Newton with a banded LU.
///
/// Derivatives are centred on cell midpoints (the box scheme), which has no
/// odd-even decoupled modes. Pinning every phase coordinate at both ends with
/// node-centred differences over-determines the continuous problem and lets
/// such a spurious mode absorb the extra conditions.
///
/// Time translation is almost free on a long window, so Newton from a poor
/// guess creeps along it. Without an explicit grid the window is therefore
/// grown in stages from 40% of `T_ε`, each stage starting from the last.
pub fn iamm(ham: &dyn Hamiltonian, a: &PhasePoint, b: &PhasePoint, opts: &IammOptions) -> Result<ActionReport> {
    let d = ham.dim();
    for p in [a, b] {
        if p.x.len() != d || p.lambda.len() != d {
            return Err(Error::invalid("endpoints", format!("phase points must have dimension {d}")));
        }
        let mut v = vec![0.0; 2 * d];
        ham.phase_flow(&p.x.iter().chain(&p.lambda).copied().collect::<Vec<_>>(), &mut v);
        if max_abs(&v) > 1e-8 {
            log::warn!("iamm endpoint {:?} is not an equilibrium of Hamilton's equations", p);
        }
    }
    let stages: Vec<Vec<f64>> = match &opts.times {
        Some(t) => {
            if t.len() < 3 || t.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::invalid("times", "need at least 3 strictly increasing values"));
            }
            vec![t.clone()]
        }
        None => {
            let te = match opts.t_eps {
                Some(v) => v,
                None if a == b => 1.0,
                None => default_t_eps(ham, a, b)?,
            };
            if !(te > 0.0) {
                return Err(Error::invalid("t_eps", "must be positive"));
            }
            let n = opts.grid_n.max(2);
            [0.4, 0.55, 0.7, 0.85, 1.0]
                .iter()
                .map(|frac| {
                    let m = ((n as f64 * frac).round() as usize).max(2);
                    let half = te * frac;
                    (0..=m).map(|k| -half + 2.0 * half * k as f64 / m as f64).collect()
                })
                .collect()
        }
    };
    let w = 2 * d;
    let pa = pins(a);
    let pb = pins(b);
    let first = &stages[0];
    let n0 = first.len() - 1;
    let mut z = Vec::with_capacity(w * (n0 + 1));
    for k in 0..=n0 {
        let s = k as f64 / n0 as f64;
        z.extend((0..d).map(|r| a.x[r] + s * (b.x[r] - a.x[r])));
        z.extend((0..d).map(|r| a.lambda[r] + s * (b.lambda[r] - a.lambda[r])));
    }
    let mut iterations = 0;
    let mut res = f64::INFINITY;
    let mut prev: Option<&Vec<f64>> = None;
    let last = stages.len() - 1;
    for (i, t) in stages.iter().enumerate() {
        if let Some(tp) = prev {
            z = resample(&z, tp, t, w);
        }
        // intermediate windows only need to land near the connection
        let stage_opts = IammOptions {
            tol: if i == last { opts.tol } else { opts.tol.max(1e-6) },
            ..opts.clone()
        };
        let sol = newton(ham, t, &pa, &pb, z, &stage_opts)?;
        z = sol.z;
        res = sol.res;
        iterations += sol.iterations;
        prev = Some(t);
    }
    let t = stages.last().expect("one stage").clone();
    let n = t.len() - 1;
    let converged = res < opts.tol;
    if !converged {
        log::warn!("iamm stopped after {iterations} iterations with residual {res:.3e}");
    }

    let nodes: Vec<Vec<f64>> = (0..=n).map(|k| z[k * w..k * w + d].to_vec()).collect();
    let momenta: Vec<Vec<f64>> = (0..=n).map(|k| z[k * w + d..(k + 1) * w].to_vec()).collect();
    let hs: Vec<f64> = (0..=n).map(|k| ham.h(&nodes[k], &momenta[k])).collect();
    let mut action = 0.0;
    for k in 0..n {
        let dx: f64 = (0..d)
            .map(|r| 0.5 * (momenta[k][r] + momenta[k + 1][r]) * (nodes[k + 1][r] - nodes[k][r]))
            .sum();
        action += dx - 0.5 * (hs[k] + hs[k + 1]) * (t[k + 1] - t[k]);
    }
    let max_h = hs[1..n].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(ActionReport {
        action,
        path: DiscretizedPath {
            parameterization: Parameterization::Time,
            grid: t,
            nodes,
            momenta: Some(momenta),
            times: None,
        },
        residual: res,
        iterations,
        converged,
        max_abs_hamiltonian: Some(max_h),
    })
}

#[cfg(test)]
mod tests {
    use super::super::tests::cubic;
    use super::*;
    use crate::hamiltonian::DiffusionHamiltonian;
    use crate::model::{builtin_model, JumpModel, Params};
    use crate::wkb::{build_hamiltonian, lambda_opt_single_step};

    fn jump(name: &str, p: &[(&str, f64)]) -> JumpModel {
        let p: Params = p.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        builtin_model(name, &p).unwrap().into_jump().unwrap()
    }

    #[test]
    fn cubic_instanton_in_phase_space() {
        let m = cubic();
        let ham = DiffusionHamiltonian::new(&m);
        let a = PhasePoint::rest(vec![-0.5]);
        let b = PhasePoint::rest(vec![0.5]);
        let r = iamm(&ham, &a, &b, &IammOptions::default()).unwrap();
        assert!(r.converged, "{}", r.residual);
        assert!((r.action - 1.0).abs() < 1e-3, "{}", r.action);
        let t0 = r.path.crossing(0, 0.0).unwrap();
        let err = r
            .path
            .nodes
            .iter()
            .zip(&r.path.grid)
            .map(|(x, t)| (x[0] - 0.5 * (1.5 * (t - t0)).tanh()).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn sis_momentum_matches_closed_form() {
        let m = jump("sis", &[("r0", 1.5), ("k", 100.0)]);
        let ham = build_hamiltonian(&m);
        let exact = lambda_opt_single_step(&m).unwrap();
        let a = PhasePoint::rest(vec![1.0 / 3.0]);
        let b = PhasePoint::new(vec![0.0], vec![(exact.lambda)(0.0)]);
        let r = iamm(&ham, &a, &b, &IammOptions::default()).unwrap();
        assert!(r.converged);
        let err = r
            .path
            .nodes
            .iter()
            .zip(r.path.momenta.as_ref().unwrap())
            .map(|(x, l)| (l[0] - (exact.lambda)(x[0])).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-4, "{err}");
        let s_opt = 1.5f64.ln() - 1.0 + 1.0 / 1.5;
        assert!((r.action - s_opt).abs() < 1e-4, "{}", r.action);
        assert!(r.max_abs_hamiltonian.unwrap() < 1e-8, "{:?}", r.max_abs_hamiltonian);
    }

    #[test]
    fn allee_threshold_connection() {
        let m = jump("allee", &[("k", 100.0)]);
        let ham = build_hamiltonian(&m);
        let x1 = m.equilibrium("threshold").unwrap().state[0];
        let x2 = m.equilibrium("capacity").unwrap().state[0];
        // the window is long (slowest rate ≈ 0.14), so |H| ~ h² needs a fine grid
        let opts = IammOptions { grid_n: 16_000, ..Default::default() };
        let r = iamm(&ham, &PhasePoint::rest(vec![x2]), &PhasePoint::rest(vec![x1]), &opts).unwrap();
        assert!(r.converged);
        assert!(r.residual < 1e-10);
        assert!(r.max_abs_hamiltonian.unwrap() < 1e-8, "{:?}", r.max_abs_hamiltonian);
        assert!((r.action - 0.088_451_390_339_376_68).abs() < 1e-4, "{}", r.action);
    }

    #[test]
    fn equal_endpoints_are_trivial() {
        let m = cubic();
        let ham = DiffusionHamiltonian::new(&m);
        let a = PhasePoint::rest(vec![-0.5]);
        let r = iamm(&ham, &a, &a, &IammOptions { grid_n: 50, ..Default::default() }).unwrap();
        assert!(r.converged && r.iterations <= 1);
        assert_eq!(r.action, 0.0);
    }

    #[test]
    fn window_from_slowest_rate() {
        let m = cubic();
        let ham = DiffusionHamiltonian::new(&m);
        // rates ±3 at both ends
        let t = default_t_eps(&ham, &PhasePoint::rest(vec![-0.5]), &PhasePoint::rest(vec![0.5])).unwrap();
        assert!((t - 1e6f64.ln() / 3.0).abs() < 1e-6);
    }
}
