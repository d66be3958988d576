//! Optimal paths and actions for diffusions.
//!
//! Everything here works with the noise-free action
//! `S = ½∫(ẋ - f)ᵀ a⁻¹ (ẋ - f) dt`, so probabilities scale like `exp(-S/D)`.

mod gmam;
mod iamm;
mod mam;
mod shooting;

pub use gmam::{gmam, gmam_multistart, GmamOptions};
pub use iamm::{default_t_eps, iamm, IammOptions, PhasePoint};
pub use mam::{mam_relax, FinalCondition, MamOptions};
pub use shooting::shoot_1d;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::spd_inverse;
use crate::model::DiffusionModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Parameterization {
    Time,
    Arclength,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiscretizedPath {
    pub parameterization: Parameterization,
    /// Times, or arclength fractions in `[0, 1]`.
    pub grid: Vec<f64>,
    pub nodes: Vec<Vec<f64>>,
    pub momenta: Option<Vec<Vec<f64>>>,
    /// Physical time at each node, reconstructed for arclength paths.
    pub times: Option<Vec<f64>>,
}

impl DiscretizedPath {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.nodes.first().map_or(0, Vec::len)
    }

    pub fn steps(&self) -> Vec<f64> {
        self.grid.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Physical time of each node, whatever the parameterization.
    pub fn physical_times(&self) -> Option<&[f64]> {
        match self.parameterization {
            Parameterization::Time => Some(&self.grid),
            Parameterization::Arclength => self.times.as_deref(),
        }
    }

    /// Copy of the path on its physical time grid.
    pub fn time_parameterized(&self) -> Result<DiscretizedPath> {
        let times = self
            .physical_times()
            .ok_or_else(|| Error::Precondition("path has no time reconstruction".into()))?;
        Ok(DiscretizedPath {
            parameterization: Parameterization::Time,
            grid: times.to_vec(),
            nodes: self.nodes.clone(),
            momenta: self.momenta.clone(),
            times: None,
        })
    }

    /// Linear interpolation of coordinate `i` at grid value `s`, clamped.
    pub fn coordinate_at(&self, i: usize, s: f64) -> f64 {
        interp(&self.grid, s, |k| self.nodes[k][i])
    }

    /// The grid value at which coordinate `i` first crosses `level`.
    pub fn crossing(&self, i: usize, level: f64) -> Option<f64> {
        for k in 1..self.len() {
            let (a, b) = (self.nodes[k - 1][i] - level, self.nodes[k][i] - level);
            if a == 0.0 {
                return Some(self.grid[k - 1]);
            }
            if a * b < 0.0 || b == 0.0 {
                let w = a / (a - b);
                return Some(self.grid[k - 1] + w * (self.grid[k] - self.grid[k - 1]));
            }
        }
        None
    }
}

pub(crate) fn interp(grid: &[f64], s: f64, value: impl Fn(usize) -> f64) -> f64 {
    let n = grid.len();
    if s <= grid[0] {
        return value(0);
    }
    if s >= grid[n - 1] {
        return value(n - 1);
    }
    let k = grid.partition_point(|&g| g <= s).clamp(1, n - 1);
    let w = (s - grid[k - 1]) / (grid[k] - grid[k - 1]);
    (1.0 - w) * value(k - 1) + w * value(k)
}

#[derive(Debug, Clone, Serialize)]
pub struct ActionReport {
    pub action: f64,
    pub path: DiscretizedPath,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `max |H(x_k, λ_k)|` over interior nodes, when momenta are known.
    pub max_abs_hamiltonian: Option<f64>,
}

impl ActionReport {
    /// Physical time between the first and last node.
    pub fn transit_time(&self) -> Option<f64> {
        self.path
            .physical_times()
            .map(|t| t[t.len() - 1] - t[0])
    }
}

/// `a(x)⁻¹`, failing on a singular diffusion tensor.
pub(crate) fn inverse_tensor(model: &DiffusionModel, x: &[f64]) -> Result<DMatrix<f64>> {
    let a = model.diffusion_tensor(x);
    spd_inverse(&a).ok_or_else(|| Error::DegenerateDiffusion { x: x.to_vec() })
}

pub(crate) fn midpoint(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(p, q)| 0.5 * (p + q)).collect()
}

/// Composite midpoint rule for `½∫(ẋ - f)ᵀa⁻¹(ẋ - f)dt` on a time grid.
pub fn action_functional(path: &DiscretizedPath, model: &DiffusionModel) -> Result<f64> {
    let times = path
        .physical_times()
        .ok_or_else(|| Error::Precondition("action needs a time-parameterized path".into()))?;
    let mut s = 0.0;
    for k in 0..path.len().saturating_sub(1) {
        let h = times[k + 1] - times[k];
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Precondition(format!("non-increasing time grid at node {k}")));
        }
        let xm = midpoint(&path.nodes[k], &path.nodes[k + 1]);
        let f = model.drift(&xm);
        let r = DVector::from_iterator(
            model.dim,
            (0..model.dim).map(|i| (path.nodes[k + 1][i] - path.nodes[k][i]) / h - f[i]),
        );
        let ainv = inverse_tensor(model, &xm)?;
        s += 0.5 * h * r.dot(&(&ainv * &r));
    }
    Ok(s)
}

/// Uniform linear interpolant with `n` intervals.
pub(crate) fn linear_nodes(from: &[f64], to: &[f64], n: usize) -> Vec<Vec<f64>> {
    (0..=n)
        .map(|k| {
            let w = k as f64 / n as f64;
            from.iter().zip(to).map(|(a, b)| a + w * (b - a)).collect()
        })
        .collect()
}

/// Minimum action over the travel time; the geometric method supplies it.
pub fn quasipotential(model: &DiffusionModel, x_from: &[f64], x_to: &[f64], grid_n: usize) -> Result<ActionReport> {
    gmam(model, x_from, x_to, &GmamOptions { grid_n, ..Default::default() })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub t_f: f64,
    pub action: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub points: Vec<SweepPoint>,
    /// Every member converged and the actions do not increase with `t_f`.
    pub monotone: bool,
    pub all_converged: bool,
}

/// Finite-time actions for several horizons, solved in parallel.
///
/// Members share one step, about the longest horizon over `opts.grid_n` and
/// dividing the shortest horizon exactly. With a shared step a shorter
/// discrete path padded by rest at the endpoints is admissible for a longer
/// horizon, so when horizons are multiples of the shortest the discrete
/// actions inherit the monotonicity of the exact ones instead of drifting
/// with `h`.
pub fn finite_time_action_sweep(
    model: &DiffusionModel,
    x_i: &[f64],
    x_f: &[f64],
    t_fs: &[f64],
    opts: &MamOptions,
) -> Result<SweepReport> {
    if t_fs.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(Error::invalid("t_f", "every horizon must be positive and finite"));
    }
    let longest = t_fs.iter().copied().fold(0.0, f64::max);
    let shortest = t_fs.iter().copied().fold(f64::INFINITY, f64::min);
    let h = shortest / (opts.grid_n as f64 * shortest / longest).ceil().max(1.0);
    let reports: Vec<Result<ActionReport>> = t_fs
        .par_iter()
        .map(|&t_f| {
            let member = MamOptions {
                grid_n: ((t_f / h).round() as usize).max(2),
                initial: None,
                ..opts.clone()
            };
            mam_relax(model, x_i, x_f, &FinalCondition::Fixed, t_f, &member)
        })
        .collect();
    let mut points = Vec::with_capacity(t_fs.len());
    for (t_f, r) in t_fs.iter().zip(reports) {
        let r = r?;
        if !r.converged {
            log::warn!("sweep member t_f = {t_f} did not converge (residual {:.2e})", r.residual);
        }
        points.push(SweepPoint {
            t_f: *t_f,
            action: r.action,
            converged: r.converged,
        });
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].t_f.total_cmp(&points[b].t_f));
    let monotone = order
        .windows(2)
        .all(|w| points[w[1]].action <= points[w[0]].action + 1e-9);
    let all_converged = points.iter().all(|p| p.converged);
    Ok(SweepReport {
        points,
        monotone,
        all_converged,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::model::{builtin_model, Params};

    pub(crate) fn cubic() -> DiffusionModel {
        builtin_model("cubic_well", &Params::new())
            .unwrap()
            .into_diffusion()
            .unwrap()
    }

    fn time_path(ts: Vec<f64>, xs: impl Fn(f64) -> f64) -> DiscretizedPath {
        DiscretizedPath {
            parameterization: Parameterization::Time,
            nodes: ts.iter().map(|&t| vec![xs(t)]).collect(),
            grid: ts,
            momenta: None,
            times: None,
        }
    }

    #[test]
    fn deterministic_path_costs_nothing() {
        let m = builtin_model("ou", &Params::new()).unwrap().into_diffusion().unwrap();
        let ts: Vec<f64> = (0..=2000).map(|k| k as f64 * 0.005).collect();
        let p = time_path(ts, |t: f64| 2.0 * (-t).exp());
        assert!(action_functional(&p, &m).unwrap() < 1e-6);
    }

    #[test]
    fn tanh_instanton_has_unit_action() {
        let ts: Vec<f64> = (0..=4000).map(|k| -12.0 + k as f64 * 24.0 / 4000.0).collect();
        let p = time_path(ts, |t: f64| 0.5 * (1.5 * t).tanh());
        let s = action_functional(&p, &cubic()).unwrap();
        assert!((s - 1.0).abs() < 1e-3, "{s}");
    }

    #[test]
    fn straight_line_matches_hand_quadrature() {
        // x = -1/4 + t/2 on [0, 1]: ½∫(5/4 - 3x²)² dt = 0.706640625
        let ts: Vec<f64> = (0..=400).map(|k| k as f64 / 400.0).collect();
        let p = time_path(ts, |t| -0.25 + 0.5 * t);
        let s = action_functional(&p, &cubic()).unwrap();
        assert!((s - 0.706_640_625).abs() < 1e-5, "{s}");
    }

    #[test]
    fn crossing_interpolates() {
        let p = time_path(vec![0.0, 1.0, 2.0], |t| t - 0.5);
        assert!((p.crossing(0, 0.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((p.coordinate_at(0, 1.5) - 1.0).abs() < 1e-15);
    }
}
