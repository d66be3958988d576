//! Diffusion and jump model abstractions plus the builtin catalog.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

pub mod catalog;
pub mod laser;

pub use catalog::{builtin_model, param_schema, ParamSpec};

/// Vector-valued evaluator writing into the output slice.
pub type Field = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type ScalarField = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type Predicate = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;
pub type Params = BTreeMap<String, f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Stable,
    Saddle,
    Unstable,
}

impl fmt::Display for Stability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stability::Stable => "stable",
            Stability::Saddle => "saddle",
            Stability::Unstable => "unstable",
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Equilibrium {
    pub label: String,
    pub state: Vec<f64>,
    pub stability: Stability,
}

impl Equilibrium {
    pub fn new(label: &str, state: Vec<f64>, stability: Stability) -> Self {
        Self {
            label: label.to_string(),
            state,
            stability,
        }
    }
}

/// Region Ω that a path stays in until it exits.
#[derive(Clone)]
pub enum Domain {
    /// Open box `lo < x < hi` componentwise; infinite bounds allowed.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Predicate(Predicate),
}

impl fmt::Debug for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::Box { lo, hi } => write!(f, "Box {{ lo: {lo:?}, hi: {hi:?} }}"),
            Domain::Predicate(_) => f.write_str("Predicate(..)"),
        }
    }
}

impl Domain {
    pub fn interval(lo: f64, hi: f64) -> Self {
        Domain::Box {
            lo: vec![lo],
            hi: vec![hi],
        }
    }

    /// Whole space in `dim` dimensions.
    pub fn everywhere(dim: usize) -> Self {
        Domain::Box {
            lo: vec![f64::NEG_INFINITY; dim],
            hi: vec![f64::INFINITY; dim],
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Domain::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(v, (l, h))| v > l && v < h),
            Domain::Predicate(p) => p(x),
        }
    }

    /// Fraction of the step `from -> to` at which the path first leaves the
    /// domain, assuming linear motion. Predicate domains report the full step.
    pub fn crossing_fraction(&self, from: &[f64], to: &[f64]) -> f64 {
        match self {
            Domain::Box { lo, hi } => {
                let mut frac: f64 = 1.0;
                for i in 0..from.len() {
                    let dx = to[i] - from[i];
                    if to[i] >= hi[i] && dx > 0.0 {
                        frac = frac.min((hi[i] - from[i]) / dx);
                    }
                    if to[i] <= lo[i] && dx < 0.0 {
                        frac = frac.min((lo[i] - from[i]) / dx);
                    }
                }
                frac.clamp(0.0, 1.0)
            }
            Domain::Predicate(_) => 1.0,
        }
    }
}

/// One-dimensional gradient system `dx = -U'(x) dt + dη`.
#[derive(Clone)]
pub struct PotentialModel {
    pub u: ScalarFn,
    pub du: ScalarFn,
    pub d2u: ScalarFn,
    pub x_min: f64,
    pub x_max: f64,
}

impl fmt::Debug for PotentialModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PotentialModel")
            .field("x_min", &self.x_min)
            .field("x_max", &self.x_max)
            .field("barrier", &self.barrier())
            .finish()
    }
}

impl PotentialModel {
    /// ΔU = U(x_max) - U(x_min).
    pub fn barrier(&self) -> f64 {
        (self.u)(self.x_max) - (self.u)(self.x_min)
    }

    /// Diffusion model with drift `-U'` and unit noise coefficient.
    pub fn to_diffusion(&self, name: &str, noise_intensity: f64) -> DiffusionModel {
        let du = self.du.clone();
        let d2u = self.d2u.clone();
        let mut model = DiffusionModel::new(
            name,
            1,
            1,
            noise_intensity,
            Arc::new(move |x, out| out[0] = -du(x[0])),
            Arc::new(|_, out| out[0] = 1.0),
        );
        model.jacobian = Some(Arc::new(move |x, out| out[0] = -d2u(x[0])));
        model.additive_noise = true;
        model.equilibria = vec![
            Equilibrium::new("stable", vec![self.x_min], Stability::Stable),
            Equilibrium::new("saddle", vec![self.x_max], Stability::Saddle),
        ];
        model.potential = Some(self.clone());
        model
    }
}

/// Continuous-noise system `dx = f(x) dt + σ(x) dη` with `E[dη dη^T] = D I dt`.
#[derive(Clone)]
pub struct DiffusionModel {
    pub name: String,
    pub dim: usize,
    pub noise_dim: usize,
    pub noise_intensity: f64,
    drift: Field,
    /// σ(x) in row-major `dim × noise_dim` layout.
    diffusion: Field,
    /// Optional analytic Jacobian of the drift, row-major `dim × dim`.
    pub jacobian: Option<Field>,
    /// σ does not depend on the state.
    pub additive_noise: bool,
    pub nondegenerate: bool,
    pub domain: Option<Domain>,
    pub equilibria: Vec<Equilibrium>,
    pub potential: Option<PotentialModel>,
    pub params: Params,
}

impl fmt::Debug for DiffusionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffusionModel")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("noise_dim", &self.noise_dim)
            .field("noise_intensity", &self.noise_intensity)
            .field("equilibria", &self.equilibria)
            .field("params", &self.params)
            .finish()
    }
}

impl DiffusionModel {
    pub fn new(
        name: &str,
        dim: usize,
        noise_dim: usize,
        noise_intensity: f64,
        drift: Field,
        diffusion: Field,
    ) -> Self {
        Self {
            name: name.to_string(),
            dim,
            noise_dim,
            noise_intensity,
            drift,
            diffusion,
            jacobian: None,
            additive_noise: false,
            nondegenerate: true,
            domain: None,
            equilibria: Vec::new(),
            potential: None,
            params: Params::new(),
        }
    }

    pub fn with_noise_intensity(&self, d: f64) -> Self {
        let mut m = self.clone();
        m.noise_intensity = d;
        m
    }

    pub fn with_domain(mut self, domain: Domain) -> Self {
        self.domain = Some(domain);
        self
    }

    #[inline]
    pub fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        (self.drift)(x, out)
    }

    pub fn drift(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        (self.drift)(x, &mut out);
        out
    }

    #[inline]
    pub fn sigma_into(&self, x: &[f64], out: &mut [f64]) {
        (self.diffusion)(x, out)
    }

    pub fn sigma(&self, x: &[f64]) -> DMatrix<f64> {
        let mut out = vec![0.0; self.dim * self.noise_dim];
        (self.diffusion)(x, &mut out);
        DMatrix::from_row_slice(self.dim, self.noise_dim, &out)
    }

    /// a(x) = σ(x) σ(x)^T.
    pub fn diffusion_tensor(&self, x: &[f64]) -> DMatrix<f64> {
        let s = self.sigma(x);
        &s * s.transpose()
    }

    /// Drift Jacobian; analytic when supplied, central differences otherwise.
    pub fn drift_jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.dim;
        if let Some(j) = &self.jacobian {
            let mut out = vec![0.0; d * d];
            j(x, &mut out);
            return DMatrix::from_row_slice(d, d, &out);
        }
        let mut jac = DMatrix::zeros(d, d);
        let mut xp = x.to_vec();
        let mut fp = vec![0.0; d];
        let mut fm = vec![0.0; d];
        for k in 0..d {
            let h = 1e-6 * x[k].abs().max(1.0);
            xp[k] = x[k] + h;
            self.drift_into(&xp, &mut fp);
            xp[k] = x[k] - h;
            self.drift_into(&xp, &mut fm);
            xp[k] = x[k];
            for i in 0..d {
                jac[(i, k)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        jac
    }

    pub fn equilibrium(&self, label: &str) -> Option<&Equilibrium> {
        self.equilibria.iter().find(|e| e.label == label)
    }

    /// First equilibrium with the given stability tag.
    pub fn first_with(&self, stability: Stability) -> Option<&Equilibrium> {
        self.equilibria.iter().find(|e| e.stability == stability)
    }
}

/// One reaction channel of a master equation.
#[derive(Clone)]
pub struct Reaction {
    pub label: String,
    pub increment: Vec<i64>,
    /// Exact transition rate W_r(X) on integer populations.
    pub rate: Arc<dyn Fn(&[i64]) -> f64 + Send + Sync>,
    /// Leading scaled rate w_r(x) with x = X / K.
    pub w: ScalarField,
    /// Gradient of w_r.
    pub w_grad: Field,
    /// First correction u_r(x) in W_r(Kx) = K w_r(x) + u_r(x) + O(1/K).
    pub u: Option<ScalarField>,
}

/// Master-equation system built from reaction channels.
#[derive(Clone)]
pub struct JumpModel {
    pub name: String,
    pub dim: usize,
    pub system_size: f64,
    pub reactions: Vec<Reaction>,
    pub absorbing_states: Vec<Vec<i64>>,
    /// Equilibria of the scaled mean-field dynamics.
    pub equilibria: Vec<Equilibrium>,
    pub params: Params,
}

impl fmt::Debug for JumpModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("JumpModel")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("system_size", &self.system_size)
            .field(
                "reactions",
                &self.reactions.iter().map(|r| &r.label).collect::<Vec<_>>(),
            )
            .field("equilibria", &self.equilibria)
            .finish()
    }
}

impl JumpModel {
    pub fn is_absorbing(&self, state: &[i64]) -> bool {
        self.absorbing_states.iter().any(|a| a.as_slice() == state)
    }

    /// Exact rates at an integer state, in declared order.
    pub fn propensities_into(&self, state: &[i64], out: &mut [f64]) {
        for (o, r) in out.iter_mut().zip(&self.reactions) {
            *o = (r.rate)(state);
        }
    }

    /// Mean-field velocity Σ_r r w_r(x).
    pub fn mean_field(&self, x: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for r in &self.reactions {
            let w = (r.w)(x);
            for (vi, &ri) in v.iter_mut().zip(&r.increment) {
                *vi += ri as f64 * w;
            }
        }
        v
    }

    /// Integer population nearest to `K x`.
    pub fn population(&self, x: &[f64]) -> Vec<i64> {
        x.iter()
            .map(|v| (v * self.system_size).round() as i64)
            .collect()
    }

    pub fn equilibrium(&self, label: &str) -> Option<&Equilibrium> {
        self.equilibria.iter().find(|e| e.label == label)
    }

    /// Single-step 1D model: increments exactly {+1, -1}. Returns the
    /// indices of the birth and death channels.
    pub fn single_step_channels(&self) -> Option<(usize, usize)> {
        if self.dim != 1 || self.reactions.len() != 2 {
            return None;
        }
        let up = self.reactions.iter().position(|r| r.increment == [1])?;
        let down = self.reactions.iter().position(|r| r.increment == [-1])?;
        Some((up, down))
    }
}

/// Either kind of builtin model.
#[derive(Debug, Clone)]
pub enum Model {
    Diffusion(DiffusionModel),
    Jump(JumpModel),
}

impl Model {
    pub fn name(&self) -> &str {
        match self {
            Model::Diffusion(m) => &m.name,
            Model::Jump(m) => &m.name,
        }
    }

    pub fn into_diffusion(self) -> crate::Result<DiffusionModel> {
        match self {
            Model::Diffusion(m) => Ok(m),
            Model::Jump(m) => Err(crate::Error::Precondition(format!(
                "`{}` is a jump model; a diffusion model is required",
                m.name
            ))),
        }
    }

    pub fn into_jump(self) -> crate::Result<JumpModel> {
        match self {
            Model::Jump(m) => Ok(m),
            Model::Diffusion(m) => Err(crate::Error::Precondition(format!(
                "`{}` is a diffusion model; a jump model is required",
                m.name
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_crossing_fraction() {
        let d = Domain::interval(-1.0, 1.0);
        assert!(d.contains(&[0.5]));
        assert!(!d.contains(&[1.0]));
        assert!((d.crossing_fraction(&[0.5], &[1.5]) - 0.5).abs() < 1e-15);
        assert!((d.crossing_fraction(&[-0.5], &[-1.5]) - 0.5).abs() < 1e-15);
    }
}
