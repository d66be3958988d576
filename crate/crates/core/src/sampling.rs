//! Exit probabilities by plain and importance-sampled Monte Carlo.
//!
//! The biased dynamics are `dx = f dt + σ (b dt + dη)`, with a deterministic
//! control `b(t)`. Each path carries the likelihood ratio `p/p̃` of its noise
//! increments in log form, so the estimator `(1/n) Σ I·l` stays unbiased for
//! any bounded control. A zero control leaves every draw and every weight
//! untouched and reproduces the plain estimator exactly.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{DiffusionModel, Domain, Stability};
use crate::path::{mam_relax, DiscretizedPath, FinalCondition, MamOptions};
use crate::sde::Integrator;
use crate::stats::{par_collect, sample_rng};

/// What counts as a rare event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitMode {
    /// `x(t_f)` lies outside the domain.
    Terminal,
    /// The path leaves the domain at some time in `[0, t_f]`; it is stopped
    /// there, together with its weight.
    FirstPassage,
}

/// Piecewise-linear control `b(t)` on elapsed time, zero after the last knot.
#[derive(Debug, Clone, Serialize)]
pub struct BiasSchedule {
    pub times: Vec<f64>,
    /// One noise-dimensional vector per knot.
    pub controls: Vec<Vec<f64>>,
}

impl BiasSchedule {
    pub fn zero(noise_dim: usize) -> Self {
        Self {
            times: vec![0.0],
            controls: vec![vec![0.0; noise_dim]],
        }
    }

    /// Constant control over `[0, t_end]`.
    pub fn constant(b: Vec<f64>, t_end: f64) -> Self {
        Self {
            times: vec![0.0, t_end],
            controls: vec![b.clone(), b],
        }
    }

    /// `b = σ(x)ᵀ λ` along a path with momenta, on its physical time grid
    /// shifted to start at zero.
    pub fn from_path(path: &DiscretizedPath, model: &DiffusionModel) -> Result<Self> {
        let times = path
            .physical_times()
            .ok_or_else(|| Error::Precondition("bias path has no time grid".into()))?;
        let momenta = path
            .momenta
            .as_ref()
            .ok_or_else(|| Error::Precondition("bias path has no momenta".into()))?;
        if path.dim() != model.dim {
            return Err(Error::invalid("bias_path", format!("path dimension {} does not match model dimension {}", path.dim(), model.dim)));
        }
        let t0 = times[0];
        let controls = path
            .nodes
            .iter()
            .zip(momenta)
            .map(|(x, l)| {
                let s = model.sigma(x);
                (0..model.noise_dim)
                    .map(|j| (0..model.dim).map(|i| s[(i, j)] * l[i]).sum())
                    .collect()
            })
            .collect();
        let sched = Self {
            times: times.iter().map(|t| t - t0).collect(),
            controls,
        };
        sched.validate(model.noise_dim)?;
        Ok(sched)
    }

    pub fn validate(&self, noise_dim: usize) -> Result<()> {
        if self.times.is_empty() || self.times.len() != self.controls.len() {
            return Err(Error::invalid("bias", "need one control per knot"));
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("bias", "knot times must increase strictly"));
        }
        if self.controls.iter().any(|b| b.len() != noise_dim) {
            return Err(Error::invalid("bias", format!("controls must have {noise_dim} components")));
        }
        if self.controls.iter().flatten().chain(&self.times).any(|v| !v.is_finite()) {
            return Err(Error::invalid("bias", "must be finite"));
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.controls.iter().flatten().all(|v| *v == 0.0)
    }

    /// Control at elapsed time `t`.
    pub fn at(&self, t: f64, out: &mut [f64]) {
        let n = self.times.len();
        if t < self.times[0] || t > self.times[n - 1] || n == 1 {
            let inside = n == 1 && t == self.times[0];
            for (j, o) in out.iter_mut().enumerate() {
                *o = if inside { self.controls[0][j] } else { 0.0 };
            }
            return;
        }
        let k = self.times.partition_point(|&s| s <= t).clamp(1, n - 1);
        let w = (t - self.times[k - 1]) / (self.times[k] - self.times[k - 1]);
        for (j, o) in out.iter_mut().enumerate() {
            *o = (1.0 - w) * self.controls[k - 1][j] + w * self.controls[k][j];
        }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ISEstimate {
    pub p_hat: f64,
    /// `ln p_hat`, finite even when `p_hat` underflows.
    pub ln_p_hat: f64,
    /// Variance of the estimator, `(mean(I l²) - p_hat²) / n`.
    pub variance: f64,
    pub std_error: f64,
    pub cv: f64,
    pub n: usize,
    /// Number of paths with `I = 1`, irrespective of weight.
    pub hit_count: usize,
}

impl ISEstimate {
    /// Estimate from the log-weights of the hitting paths.
    fn from_log_weights(log_w: &[f64], n: usize) -> Self {
        let hit_count = log_w.len();
        if hit_count == 0 {
            return Self {
                p_hat: 0.0,
                ln_p_hat: f64::NEG_INFINITY,
                variance: 0.0,
                std_error: 0.0,
                cv: f64::INFINITY,
                n,
                hit_count,
            };
        }
        // shifted sums; with all weights equal to one the shift is zero and the
        // sums are plain counts
        let m = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let s1: f64 = log_w.iter().map(|l| (l - m).exp()).sum();
        let s2: f64 = log_w.iter().map(|l| (2.0 * (l - m)).exp()).sum();
        let nf = n as f64;
        let scale = m.exp();
        let p_hat = scale * s1 / nf;
        let ln_p_hat = m + (s1 / nf).ln();
        // relative variance survives underflow of the absolute one
        let rel = ((s2 / nf) / ((s1 / nf) * (s1 / nf)) - 1.0).max(0.0) / nf;
        let variance = (scale * scale * s2 / nf - p_hat * p_hat).max(0.0) / nf;
        let cv = rel.sqrt();
        Self {
            p_hat,
            ln_p_hat,
            variance,
            std_error: variance.sqrt(),
            cv,
            n,
            hit_count,
        }
    }

    pub fn log10_p_hat(&self) -> f64 {
        self.ln_p_hat / std::f64::consts::LN_10
    }
}

/// Sampler settings shared by the plain and biased estimators.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SampleConfig {
    pub t_f: f64,
    pub dt: f64,
    pub n: usize,
    pub seed: u64,
    pub workers: usize,
    pub mode: ExitMode,
}

impl SampleConfig {
    pub fn new(t_f: f64, dt: f64, n: usize, seed: u64) -> Self {
        Self {
            t_f,
            dt,
            n,
            seed,
            workers: 1,
            mode: ExitMode::Terminal,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("n", "must be at least 1"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid("dt", "must be positive"));
        }
        if !(self.t_f >= self.dt && self.t_f.is_finite()) {
            return Err(Error::invalid("t_f", "must be at least dt"));
        }
        Ok(())
    }
}

/// One biased path: `Some(log l)` when it hits.
fn weighted_path<R: Rng>(
    integ: &mut Integrator<'_>,
    x0: &[f64],
    domain: &Domain,
    bias: &BiasSchedule,
    cfg: &SampleConfig,
    rng: &mut R,
) -> Result<Option<f64>> {
    let m = integ.model();
    let (d, nd) = (m.noise_intensity, m.noise_dim);
    let biased = !bias.is_zero();
    let mut x = x0.to_vec();
    let mut deta = vec![0.0; nd];
    let mut b = vec![0.0; nd];
    let mut log_w = 0.0;
    let dt = cfg.dt;
    let steps = (cfg.t_f / dt).round() as usize;
    for n in 0..steps {
        integ.draw(rng, &mut deta);
        if biased {
            bias.at((n as f64 + 0.5) * dt, &mut b);
            // deta becomes the realized biased increment Δη̃ = Δη + b Δt
            let mut bb = 0.0;
            let mut b_eta = 0.0;
            for j in 0..nd {
                deta[j] += b[j] * dt;
                bb += b[j] * b[j];
                b_eta += b[j] * deta[j];
            }
            log_w += -b_eta / d + bb * dt / (2.0 * d);
        }
        integ.step(&mut x, &deta);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { step: n + 1 });
        }
        if cfg.mode == ExitMode::FirstPassage && !domain.contains(&x) {
            return Ok(Some(log_w));
        }
    }
    Ok(match cfg.mode {
        ExitMode::Terminal if !domain.contains(&x) => Some(log_w),
        _ => None,
    })
}

fn check_start(model: &DiffusionModel, x0: &[f64], domain: &Domain) -> Result<()> {
    if x0.len() != model.dim || x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("x0", format!("need {} finite components", model.dim)));
    }
    if !(model.noise_intensity > 0.0) {
        return Err(Error::invalid("d", "noise intensity must be positive"));
    }
    if !domain.contains(x0) {
        log::warn!("x0 starts outside the domain");
    }
    Ok(())
}

/// Importance-sampled probability of leaving `domain` by `t_f`.
pub fn is_exit_probability(
    model: &DiffusionModel,
    x0: &[f64],
    domain: &Domain,
    bias: &BiasSchedule,
    cfg: &SampleConfig,
) -> Result<ISEstimate> {
    cfg.validate()?;
    check_start(model, x0, domain)?;
    bias.validate(model.noise_dim)?;
    let results = par_collect(cfg.n, cfg.workers, |i| {
        let mut rng = sample_rng(cfg.seed, i as u64);
        let mut integ = Integrator::new(model, cfg.dt);
        weighted_path(&mut integ, x0, domain, bias, cfg, &mut rng)
    });
    let mut log_w = Vec::new();
    for r in results {
        if let Some(l) = r? {
            log_w.push(l);
        }
    }
    if log_w.iter().any(|l| !l.is_finite()) {
        return Err(Error::NotConverged("non-finite log-weight".into()));
    }
    Ok(ISEstimate::from_log_weights(&log_w, cfg.n))
}

/// Plain Monte Carlo: the same sampler with no control.
pub fn mc_exit_probability(model: &DiffusionModel, x0: &[f64], domain: &Domain, cfg: &SampleConfig) -> Result<ISEstimate> {
    is_exit_probability(model, x0, domain, &BiasSchedule::zero(model.noise_dim), cfg)
}

#[derive(Debug, Clone, Serialize)]
pub struct TailPoint {
    pub xi_f: f64,
    pub p_hat: f64,
    pub se: f64,
    pub ln_p_hat: f64,
    /// Finite-time action of the bias path.
    pub action: f64,
}

/// `P(Ξ(t_f) beyond ξ_f)` on the far side of zero, for each target, in a
/// soliton model with state `(A, Ω, Ξ)` started at rest.
///
/// Each target gets its own bias path: the finite-time minimizer reaching
/// `Ξ = ξ_f` at `t_f` with `A` and `Ω` free at the end.
pub fn soliton_position_tail(
    model: &DiffusionModel,
    xi_targets: &[f64],
    cfg: &SampleConfig,
    mam: &MamOptions,
) -> Result<Vec<TailPoint>> {
    if model.dim != 3 {
        return Err(Error::Precondition("soliton tail needs a (A, Ω, Ξ) model".into()));
    }
    let rest = model
        .first_with(Stability::Stable)
        .ok_or_else(|| Error::Precondition("model has no stable rest state".into()))?
        .state
        .clone();
    let tail_cfg = SampleConfig {
        mode: ExitMode::Terminal,
        ..*cfg
    };
    let mut out = Vec::with_capacity(xi_targets.len());
    for &xi_f in xi_targets {
        if !xi_f.is_finite() {
            return Err(Error::invalid("xi_f", "must be finite"));
        }
        let target = vec![rest[0], rest[1], rest[2] + xi_f];
        let (bias, action) = if xi_f == 0.0 {
            (BiasSchedule::zero(model.noise_dim), 0.0)
        } else {
            let r = mam_relax(model, &rest, &target, &FinalCondition::Free(vec![true, true, false]), cfg.t_f, mam)?;
            if !r.converged {
                return Err(Error::NotConverged(format!("bias path for ξ_f = {xi_f} (residual {:.2e})", r.residual)));
            }
            (BiasSchedule::from_path(&r.path, model)?, r.action)
        };
        let level = rest[2] + xi_f;
        let upper = xi_f >= 0.0;
        let domain = Domain::Predicate(std::sync::Arc::new(move |x: &[f64]| if upper { x[2] < level } else { x[2] > level }));
        let est = is_exit_probability(model, &rest, &domain, &bias, &tail_cfg)?;
        out.push(TailPoint {
            xi_f,
            p_hat: est.p_hat,
            se: est.std_error,
            ln_p_hat: est.ln_p_hat,
            action,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::model::{builtin_model, Params};
    use crate::path::tests::cubic;
    use crate::stats::normal_cdf;

    fn brownian(d: f64) -> DiffusionModel {
        let mut m = DiffusionModel::new("brownian", 1, 1, d, Arc::new(|_, out| out[0] = 0.0), Arc::new(|_, out| out[0] = 1.0));
        m.additive_noise = true;
        m
    }

    fn below(c: f64) -> Domain {
        Domain::interval(f64::NEG_INFINITY, c)
    }

    #[test]
    fn whole_space_is_never_left() {
        let est = mc_exit_probability(&brownian(1.0), &[0.0], &Domain::everywhere(1), &SampleConfig::new(1.0, 0.01, 500, 1)).unwrap();
        assert_eq!((est.p_hat, est.hit_count), (0.0, 0));
    }

    #[test]
    fn plain_estimate_matches_gaussian_tail() {
        // P(W(1) > 1.28) with D = 1
        let c = 1.28;
        let exact = normal_cdf(-c);
        let est = mc_exit_probability(&brownian(1.0), &[0.0], &below(c), &SampleConfig::new(1.0, 0.01, 20_000, 7)).unwrap();
        assert!((est.p_hat - exact).abs() < 3.0 * est.std_error, "{} vs {exact}", est.p_hat);
        let p = est.p_hat;
        assert!((est.variance - p * (1.0 - p) / 20_000.0).abs() < 1e-15);
    }

    #[test]
    fn even_odds_have_unit_cv_over_root_n() {
        let n = 10_000;
        let est = mc_exit_probability(&brownian(1.0), &[0.0], &below(0.0), &SampleConfig::new(1.0, 0.01, n, 3)).unwrap();
        assert!((est.cv * (n as f64).sqrt() - 1.0).abs() < 0.05, "{}", est.cv);
    }

    #[test]
    fn zero_control_reproduces_plain_bits() {
        let m = cubic().with_noise_intensity(0.2);
        // past the barrier the drift runs off to infinity, so stop at the top
        let cfg = SampleConfig {
            mode: ExitMode::FirstPassage,
            ..SampleConfig::new(2.0, 0.005, 3000, 11)
        };
        let dom = below(0.5);
        let plain = mc_exit_probability(&m, &[-0.5], &dom, &cfg).unwrap();
        let zeros = BiasSchedule {
            times: vec![0.0, 1.0, 2.0],
            controls: vec![vec![0.0]; 3],
        };
        let biased = is_exit_probability(&m, &[-0.5], &dom, &zeros, &cfg).unwrap();
        assert!(plain.hit_count > 0);
        assert_eq!(plain, biased);
    }

    #[test]
    fn constant_shift_is_unbiased_and_cheaper() {
        // P(W(1) > 3) = 1.35e-3; shift the mean onto the boundary
        let c = 3.0;
        let exact = normal_cdf(-c);
        let n = 10_000;
        let cfg = SampleConfig::new(1.0, 0.01, n, 5);
        let est = is_exit_probability(&brownian(1.0), &[0.0], &below(c), &BiasSchedule::constant(vec![c], 1.0), &cfg).unwrap();
        assert!((est.p_hat - exact).abs() < 3.0 * est.std_error, "{} vs {exact}", est.p_hat);
        assert!(est.variance < exact * (1.0 - exact) / n as f64 / 10.0);
    }

    #[test]
    fn underflowing_probabilities_stay_finite_in_logs() {
        // z = 45: P ≈ e^{-1017}, far below the smallest double
        let z: f64 = 45.0;
        let ln_exact = -z * z / 2.0 - (z * (2.0 * std::f64::consts::PI).sqrt()).ln() - 1.0 / (z * z);
        let cfg = SampleConfig::new(1.0, 0.01, 4000, 9);
        let est = is_exit_probability(&brownian(1.0), &[0.0], &below(z), &BiasSchedule::constant(vec![z], 1.0), &cfg).unwrap();
        assert_eq!(est.p_hat, 0.0);
        assert!(est.ln_p_hat.is_finite() && est.cv.is_finite());
        assert!((est.ln_p_hat - ln_exact).abs() < 0.2, "{} vs {ln_exact}", est.ln_p_hat);
    }

    #[test]
    fn schedule_interpolates_and_vanishes_after_the_end() {
        let s = BiasSchedule {
            times: vec![0.0, 1.0],
            controls: vec![vec![0.0, 2.0], vec![1.0, 0.0]],
        };
        let mut b = [0.0; 2];
        s.at(0.25, &mut b);
        assert_eq!(b, [0.25, 1.5]);
        s.at(1.5, &mut b);
        assert_eq!(b, [0.0, 0.0]);
        assert!(BiasSchedule {
            times: vec![0.0, 0.0],
            controls: vec![vec![0.0]; 2]
        }
        .validate(1)
        .is_err());
    }

    #[test]
    fn control_from_path_is_sigma_transpose_lambda() {
        let m = builtin_model("filter3d", &Params::new()).unwrap().into_diffusion().unwrap();
        let x = vec![1.0, 0.1, 0.5];
        let l = vec![0.3, -0.2, 0.7];
        let path = DiscretizedPath {
            parameterization: crate::path::Parameterization::Time,
            grid: vec![2.0, 3.0],
            nodes: vec![x.clone(), x.clone()],
            momenta: Some(vec![l.clone(), l.clone()]),
            times: None,
        };
        let s = BiasSchedule::from_path(&path, &m).unwrap();
        assert_eq!(s.times, vec![0.0, 1.0]);
        let b = m.sigma(&x).transpose() * nalgebra::DVector::from_vec(l);
        for j in 0..3 {
            assert!((s.controls[0][j] - b[j]).abs() < 1e-15);
        }
    }

    #[test]
    fn first_passage_counts_excursions_that_return() {
        // reflection principle: P(max W > c) = 2 P(W(1) > c)
        let c = 1.0;
        let cfg = SampleConfig {
            mode: ExitMode::FirstPassage,
            ..SampleConfig::new(1.0, 1e-4, 4000, 2)
        };
        let est = mc_exit_probability(&brownian(1.0), &[0.0], &below(c), &cfg).unwrap();
        let exact = 2.0 * normal_cdf(-c);
        // discrete monitoring misses a little, about 0.58 √dt in the level
        let corrected = 2.0 * normal_cdf(-(c + 0.5826 * 1e-2));
        assert!((est.p_hat - corrected).abs() < 3.0 * est.std_error, "{} vs {exact}", est.p_hat);
    }
}
