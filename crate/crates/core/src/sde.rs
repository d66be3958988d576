//! Euler–Maruyama simulation, first-exit ensembles, and the 1D exit-time
//! oracles (generator boundary value problem, Kramers, escape quadrature).

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::thomas;
use crate::model::{DiffusionModel, Domain, PotentialModel};
use crate::quadrature;
use crate::stats::{par_collect, sample_rng, EnsembleSummary};

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SimConfig {
    pub dt: f64,
    pub t_max: f64,
    pub seed: u64,
    pub n_samples: usize,
    pub workers: usize,
}

impl SimConfig {
    pub fn new(dt: f64, t_max: f64, seed: u64, n_samples: usize) -> Self {
        Self {
            dt,
            t_max,
            seed,
            n_samples,
            workers: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::invalid("dt", "must be positive"));
        }
        if !(self.t_max > self.dt) {
            return Err(Error::invalid("t_max", "must exceed dt"));
        }
        if self.n_samples == 0 {
            return Err(Error::invalid("samples", "must be at least 1"));
        }
        Ok(())
    }
}

/// Fixed-step Euler–Maruyama kernel with reusable buffers.
pub(crate) struct Integrator<'a> {
    model: &'a DiffusionModel,
    f: Vec<f64>,
    s: Vec<f64>,
    pub dt: f64,
    pub sqrt_ddt: f64,
}

impl<'a> Integrator<'a> {
    pub fn new(model: &'a DiffusionModel, dt: f64) -> Self {
        let mut s = vec![0.0; model.dim * model.noise_dim];
        if model.additive_noise {
            model.sigma_into(&vec![0.0; model.dim], &mut s);
        }
        Self {
            model,
            f: vec![0.0; model.dim],
            s,
            dt,
            sqrt_ddt: (model.noise_intensity * dt).sqrt(),
        }
    }

    /// Noise increments Δη ~ N(0, D Δt I).
    #[inline]
    pub fn draw<R: Rng>(&self, rng: &mut R, deta: &mut [f64]) {
        for v in deta.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v = self.sqrt_ddt * z;
        }
    }

    /// `x ← x + f(x) Δt + σ(x) Δη`.
    #[inline]
    pub fn step(&mut self, x: &mut [f64], deta: &[f64]) {
        let m = self.model;
        m.drift_into(x, &mut self.f);
        if !m.additive_noise {
            m.sigma_into(x, &mut self.s);
        }
        let nd = m.noise_dim;
        for i in 0..m.dim {
            let mut acc = self.f[i] * self.dt;
            let row = &self.s[i * nd..(i + 1) * nd];
            for j in 0..nd {
                acc += row[j] * deta[j];
            }
            x[i] += acc;
        }
    }

    pub fn model(&self) -> &DiffusionModel {
        self.model
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub dim: usize,
    pub times: Vec<f64>,
    /// Row-major `times.len() × dim`.
    pub states: Vec<f64>,
}

impl Trajectory {
    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// One Euler–Maruyama path on `[0, t_max]` from `x0`, using sample stream 0.
pub fn euler_maruyama(model: &DiffusionModel, x0: &[f64], cfg: &SimConfig) -> Result<Trajectory> {
    cfg.validate()?;
    check_state(model, x0)?;
    let mut rng = sample_rng(cfg.seed, 0);
    let steps = (cfg.t_max / cfg.dt).round() as usize;
    let mut integ = Integrator::new(model, cfg.dt);
    let mut x = x0.to_vec();
    let mut deta = vec![0.0; model.noise_dim];
    let mut traj = Trajectory {
        dim: model.dim,
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity((steps + 1) * model.dim),
    };
    traj.times.push(0.0);
    traj.states.extend_from_slice(&x);
    for n in 0..steps {
        integ.draw(&mut rng, &mut deta);
        integ.step(&mut x, &deta);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { step: n + 1 });
        }
        traj.times.push((n + 1) as f64 * cfg.dt);
        traj.states.extend_from_slice(&x);
    }
    Ok(traj)
}

fn check_state(model: &DiffusionModel, x0: &[f64]) -> Result<()> {
    if x0.len() != model.dim {
        return Err(Error::invalid(
            "x0",
            format!("expected {} components, got {}", model.dim, x0.len()),
        ));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("x0", "must be finite"));
    }
    Ok(())
}

/// First exit time from `domain`, linearly interpolated inside the crossing
/// step; `None` when the path is still inside at `t_max`.
pub(crate) fn first_exit<R: Rng>(
    integ: &mut Integrator<'_>,
    x0: &[f64],
    domain: &Domain,
    t_max: f64,
    rng: &mut R,
) -> Result<Option<f64>> {
    let dim = x0.len();
    let mut x = x0.to_vec();
    let mut prev = x0.to_vec();
    let mut deta = vec![0.0; integ.model().noise_dim];
    let dt = integ.dt;
    let max_steps = (t_max / dt).ceil() as usize;
    for n in 0..max_steps {
        prev[..dim].copy_from_slice(&x);
        integ.draw(rng, &mut deta);
        integ.step(&mut x, &deta);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { step: n + 1 });
        }
        if !domain.contains(&x) {
            let frac = domain.crossing_fraction(&prev, &x);
            return Ok(Some((n as f64 + frac) * dt));
        }
    }
    Ok(None)
}

/// Monte Carlo mean first exit time from `domain` starting at `x0`.
pub fn mean_exit_time_mc(
    model: &DiffusionModel,
    x0: &[f64],
    domain: &Domain,
    cfg: &SimConfig,
) -> Result<EnsembleSummary> {
    cfg.validate()?;
    check_state(model, x0)?;
    if !domain.contains(x0) {
        return Err(Error::Precondition("x0 must lie inside the domain".into()));
    }
    let results = par_collect(cfg.n_samples, cfg.workers, |i| {
        let mut rng = sample_rng(cfg.seed, i as u64);
        let mut integ = Integrator::new(model, cfg.dt);
        first_exit(&mut integ, x0, domain, cfg.t_max, &mut rng)
    });
    let mut times = Vec::with_capacity(cfg.n_samples);
    let mut censored = 0;
    for r in results {
        match r? {
            Some(t) => times.push(t),
            None => censored += 1,
        }
    }
    if times.is_empty() {
        return Err(Error::AllCensored { n: cfg.n_samples });
    }
    if censored > 0 {
        log::warn!("{censored} of {} paths censored at t_max = {}", cfg.n_samples, cfg.t_max);
    }
    Ok(EnsembleSummary::from_values(&times, censored, cfg.seed, cfg.workers))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryKind {
    Absorbing,
    Reflecting,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Boundary {
    pub x: f64,
    pub kind: BoundaryKind,
}

impl Boundary {
    pub fn absorbing(x: f64) -> Self {
        Self {
            x,
            kind: BoundaryKind::Absorbing,
        }
    }

    pub fn reflecting(x: f64) -> Self {
        Self {
            x,
            kind: BoundaryKind::Reflecting,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DynkinSolution {
    pub grid: Vec<f64>,
    pub tau: Vec<f64>,
}

impl DynkinSolution {
    /// Linear interpolation of τ at `y`.
    pub fn at(&self, y: f64) -> f64 {
        let g = &self.grid;
        let n = g.len() - 1;
        let h = (g[n] - g[0]) / n as f64;
        let s = ((y - g[0]) / h).clamp(0.0, n as f64);
        let k = (s.floor() as usize).min(n - 1);
        let w = s - k as f64;
        self.tau[k] * (1.0 - w) + self.tau[k + 1] * w
    }
}

/// Mean exit time on an interval from `f τ' + (D/2) a(x) τ'' = -1` with
/// second-order central differences on `grid_n` uniform cells.
pub fn dynkin_solve_1d(
    model: &DiffusionModel,
    left: Boundary,
    right: Boundary,
    grid_n: usize,
) -> Result<DynkinSolution> {
    if model.dim != 1 {
        return Err(Error::Precondition("generator solver is one-dimensional".into()));
    }
    if !(right.x > left.x) || grid_n < 2 {
        return Err(Error::invalid("domain", "need left < right and at least 2 cells"));
    }
    if left.kind == BoundaryKind::Reflecting && right.kind == BoundaryKind::Reflecting {
        return Err(Error::Precondition("at least one boundary must absorb".into()));
    }
    let h = (right.x - left.x) / grid_n as f64;
    let grid: Vec<f64> = (0..=grid_n).map(|k| left.x + k as f64 * h).collect();
    let n = grid_n + 1;
    let (mut sub, mut diag, mut sup, mut rhs) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![-1.0; n]);
    let half_d = 0.5 * model.noise_intensity;
    for (k, &x) in grid.iter().enumerate() {
        let a = model.diffusion_tensor(&[x])[(0, 0)];
        if !(a > 0.0) {
            return Err(Error::DegenerateDiffusion { x: vec![x] });
        }
        let f = model.drift(&[x])[0];
        let c2 = half_d * a / (h * h);
        let c1 = f / (2.0 * h);
        sub[k] = c2 - c1;
        diag[k] = -2.0 * c2;
        sup[k] = c2 + c1;
    }
    for (idx, b) in [(0usize, left), (n - 1, right)] {
        match b.kind {
            BoundaryKind::Absorbing => {
                sub[idx] = 0.0;
                sup[idx] = 0.0;
                diag[idx] = 1.0;
                rhs[idx] = 0.0;
            }
            // ghost node mirrors the neighbour so τ' = 0
            BoundaryKind::Reflecting => {
                if idx == 0 {
                    sup[0] += sub[0];
                    sub[0] = 0.0;
                } else {
                    sub[idx] += sup[idx];
                    sup[idx] = 0.0;
                }
            }
        }
    }
    let tau = thomas(&sub, &diag, &sup, &rhs)?;
    Ok(DynkinSolution { grid, tau })
}

/// Kramers' escape time `2π / √(U''(x_min) |U''(x_max)|) · exp(2ΔU/D)`.
pub fn kramers_mte(pot: &PotentialModel, d: f64) -> Result<f64> {
    let k_min = (pot.d2u)(pot.x_min);
    let k_max = (pot.d2u)(pot.x_max);
    if !(k_min > 0.0) || !(k_max < 0.0) {
        return Err(Error::Precondition(format!(
            "curvature signs wrong: U''(x_min) = {k_min}, U''(x_max) = {k_max}"
        )));
    }
    if !(d > 0.0) {
        return Err(Error::invalid("d", "must be positive"));
    }
    let du = pot.barrier();
    if du / d < 3.0 {
        log::warn!("barrier to noise ratio {:.3} is below 3; the Kramers limit is not accurate", du / d);
    }
    let prefactor = 2.0 * std::f64::consts::PI / (k_min * k_max.abs()).sqrt();
    Ok(prefactor * (2.0 * du / d).exp())
}

/// Escape time `(2/D) ∫_{x1}^{x2} e^{-2U/D} dx ∫_{x_min}^{A} e^{2U/D} dx`.
pub fn escape_time_quadrature(pot: &PotentialModel, d: f64, x1: f64, x2: f64, a: f64) -> Result<f64> {
    if !(x1 < pot.x_min && pot.x_min < x2 && x2 < pot.x_max && pot.x_max < a) {
        return Err(Error::Precondition(
            "need x1 < x_min < x2 < x_max < A".into(),
        ));
    }
    if !(d > 0.0) {
        return Err(Error::invalid("d", "must be positive"));
    }
    let u_min = (pot.u)(pot.x_min);
    let u_max = (pot.u)(pot.x_max);
    let u = pot.u.clone();
    // both integrands are scaled to peak near 1; the barrier factor is restored below
    let tol = quadrature::Tolerance {
        abs: 1e-13,
        rel: 1e-12,
        max_intervals: 4000,
    };
    let inner = quadrature::integrate(|x| (-2.0 * (u(x) - u_min) / d).exp(), x1, x2, tol)?;
    let outer = quadrature::integrate(|x| (2.0 * (u(x) - u_max) / d).exp(), pot.x_min, a, tol)?;
    Ok(2.0 / d * inner * outer * (2.0 * (u_max - u_min) / d).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_model, catalog::cubic_well_potential, Params};
    use std::sync::Arc;

    fn brownian(d: f64) -> DiffusionModel {
        let mut m = DiffusionModel::new(
            "bm",
            1,
            1,
            d,
            Arc::new(|_, out| out[0] = 0.0),
            Arc::new(|_, out| out[0] = 1.0),
        );
        m.additive_noise = true;
        m
    }

    fn ou(d: f64) -> DiffusionModel {
        let mut p = Params::new();
        p.insert("d".into(), d);
        builtin_model("ou", &p).unwrap().into_diffusion().unwrap()
    }

    #[test]
    fn deterministic_step() {
        let m = ou(1.0).with_noise_intensity(0.0);
        let cfg = SimConfig::new(0.1, 0.1 + 1e-12, 1, 1);
        let cfg = SimConfig { t_max: 0.1, ..cfg };
        // t_max must exceed dt
        assert!(cfg.validate().is_err());
        let cfg = SimConfig::new(0.1, 0.2, 1, 1);
        let tr = euler_maruyama(&m, &[1.0], &cfg).unwrap();
        assert!((tr.state(1)[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn brownian_variance_scales_with_time() {
        let d = 0.7;
        let m = brownian(d);
        let n = 10_000;
        let t = 2.0;
        let mut rng = sample_rng(11, 0);
        let mut integ = Integrator::new(&m, 0.05);
        let mut deta = [0.0];
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            let mut x = [0.0];
            for _ in 0..40 {
                integ.draw(&mut rng, &mut deta);
                integ.step(&mut x, &deta);
            }
            v.push(x[0]);
        }
        let s = EnsembleSummary::from_values(&v.iter().map(|x| x * x).collect::<Vec<_>>(), 0, 0, 1);
        assert!((s.mean - d * t).abs() < 3.0 * s.std_error, "{} {}", s.mean, s.std_error);
    }

    #[test]
    fn ou_stationary_variance() {
        let m = ou(1.0);
        let cfg = SimConfig::new(0.01, 4000.0, 5, 1);
        let tr = euler_maruyama(&m, &[0.0], &cfg).unwrap();
        // batch means over blocks much longer than the correlation time
        let xs: Vec<f64> = tr.states[10_000..].iter().map(|x| x * x).collect();
        let blocks: Vec<f64> = xs
            .chunks(10_000)
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect();
        let s = EnsembleSummary::from_values(&blocks, 0, 0, 1);
        // Euler–Maruyama's stationary variance is D / (2 - dt)
        let target = 1.0 / (2.0 - 0.01);
        assert!((s.mean - target).abs() < 3.0 * s.std_error, "{} ± {}", s.mean, s.std_error);
        assert!((s.mean - 0.5).abs() < 0.03);
    }

    #[test]
    fn weak_order_one() {
        let m = ou(1.0);
        let target = (-1.0f64).exp();
        let mean_at = |dt: f64| {
            let steps = (1.0 / dt).round() as usize;
            let v: Vec<f64> = (0..40_000u64)
                .map(|i| {
                    let mut rng = sample_rng(3, i);
                    let mut integ = Integrator::new(&m, dt);
                    let mut x = [1.0];
                    let mut deta = [0.0];
                    for _ in 0..steps {
                        integ.draw(&mut rng, &mut deta);
                        integ.step(&mut x, &deta);
                    }
                    x[0]
                })
                .collect();
            EnsembleSummary::from_values(&v, 0, 0, 1).mean
        };
        let e1 = (mean_at(0.2) - target).abs();
        let e2 = (mean_at(0.1) - target).abs();
        let ratio = e1 / e2;
        assert!((1.4..2.8).contains(&ratio), "{e1} {e2}");
    }

    #[test]
    fn reproducible_bitwise_across_workers() {
        let m = ou(1.0);
        let dom = Domain::interval(-1.0, 1.0);
        let cfg = SimConfig::new(0.01, 100.0, 42, 300);
        let a = mean_exit_time_mc(&m, &[0.0], &dom, &cfg).unwrap();
        let b = mean_exit_time_mc(&m, &[0.0], &dom, &cfg).unwrap();
        let c = mean_exit_time_mc(&m, &[0.0], &dom, &SimConfig { workers: 3, ..cfg }).unwrap();
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.mean.to_bits(), c.mean.to_bits());
    }

    #[test]
    fn pure_diffusion_exit_time() {
        let d = 1.0;
        let m = brownian(d);
        let dom = Domain::interval(0.0, 1.0);
        let cfg = SimConfig::new(1e-4, 50.0, 9, 4000);
        let s = mean_exit_time_mc(&m, &[0.3], &dom, &cfg).unwrap();
        let exact = 0.3 * 0.7 / d;
        assert!((s.mean - exact).abs() < 3.0 * s.std_error + 2e-3, "{} vs {exact}", s.mean);
    }

    #[test]
    fn all_censored_is_an_error() {
        let m = ou(0.01);
        let dom = Domain::interval(-1.0, 1.0);
        let cfg = SimConfig::new(0.01, 0.5, 1, 10);
        assert!(matches!(
            mean_exit_time_mc(&m, &[0.0], &dom, &cfg),
            Err(Error::AllCensored { n: 10 })
        ));
    }

    #[test]
    fn dynkin_closed_forms() {
        let m = brownian(1.0);
        let sol = dynkin_solve_1d(&m, Boundary::absorbing(0.0), Boundary::absorbing(1.0), 1000).unwrap();
        let err = sol
            .grid
            .iter()
            .zip(&sol.tau)
            .map(|(y, t)| (t - y * (1.0 - y)).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-6, "{err}");
        let m2 = brownian(2.0);
        let sol = dynkin_solve_1d(&m2, Boundary::absorbing(0.0), Boundary::absorbing(1.0), 1000).unwrap();
        assert!((sol.at(0.5) - 0.125).abs() < 1e-9);
        // reflecting at 0: τ(y) = (L² - y²)/D
        let sol = dynkin_solve_1d(&m, Boundary::reflecting(0.0), Boundary::absorbing(1.0), 1000).unwrap();
        assert!((sol.at(0.0) - 1.0).abs() < 1e-5);
    }

    #[test]
    fn kramers_prefactor_and_slope() {
        let pot = cubic_well_potential();
        let pre = kramers_mte(&pot, 1e6).unwrap() / (1.0f64 / 1e6).exp();
        assert!((pre - 2.0 * std::f64::consts::PI / 3.0).abs() < 1e-12);
        let (a, b) = (kramers_mte(&pot, 0.2).unwrap(), kramers_mte(&pot, 0.1).unwrap());
        let slope = (b.ln() - a.ln()) / (2.0 / 0.1 - 2.0 / 0.2);
        assert!((slope - 0.5).abs() < 1e-12);
        let mut flipped = pot.clone();
        std::mem::swap(&mut flipped.x_min, &mut flipped.x_max);
        assert!(kramers_mte(&flipped, 0.1).is_err());
    }

    #[test]
    fn quadrature_approaches_kramers() {
        let pot = cubic_well_potential();
        let r = |d: f64| {
            escape_time_quadrature(&pot, d, -2.0, 0.45, 1.0).unwrap() / kramers_mte(&pot, d).unwrap()
        };
        let (r1, r05) = (r(0.1), r(0.05));
        assert!((0.9..=1.1).contains(&r1), "{r1}");
        assert!((r05 - 1.0).abs() < (r1 - 1.0).abs());
        let t1 = escape_time_quadrature(&pot, 0.1, -2.0, 0.45, 1.0).unwrap();
        let t2 = escape_time_quadrature(&pot, 0.1, -2.0, 0.45, 2.0).unwrap();
        assert!(((t2 - t1) / t1).abs() < 0.01);
        // independent scipy evaluation of the same integrals
        let t = escape_time_quadrature(&pot, 0.25, -2.0, 0.45, 1.0).unwrap();
        assert!((t - 125.691_830_761_286_17).abs() < 1e-8, "{t}");
    }
}
