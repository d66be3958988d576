//! Exact stochastic simulation of master equations.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::JumpModel;
use crate::stats::{par_collect, sample_rng, EnsembleSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    Absorbed,
    TimeLimit,
}

#[derive(Debug, Clone, Serialize)]
pub struct JumpTrajectory {
    pub dim: usize,
    pub times: Vec<f64>,
    /// Row-major `times.len() × dim`.
    pub states: Vec<i64>,
    /// Index of the reaction fired to reach each state after the first.
    pub fired: Vec<usize>,
    pub terminal: Terminal,
    /// Time the simulation stopped (absorption time or `t_max`).
    pub end_time: f64,
}

impl JumpTrajectory {
    pub fn state(&self, k: usize) -> &[i64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Time-weighted mean of one coordinate over `[t_from, end_time]`.
    pub fn time_average(&self, coord: usize, t_from: f64) -> f64 {
        let mut acc = 0.0;
        let mut span = 0.0;
        for k in 0..self.times.len() {
            let t0 = self.times[k].max(t_from);
            let t1 = if k + 1 < self.times.len() {
                self.times[k + 1]
            } else {
                self.end_time
            };
            if t1 > t0 {
                acc += self.state(k)[coord] as f64 * (t1 - t0);
                span += t1 - t0;
            }
        }
        acc / span
    }

    /// Checks that consecutive states differ by the fired reaction's increment.
    pub fn is_consistent(&self, model: &JumpModel) -> bool {
        let strictly_increasing = self.times.windows(2).all(|w| w[1] > w[0]);
        strictly_increasing
            && (1..self.len()).all(|k| {
                let inc = &model.reactions[self.fired[k - 1]].increment;
                self.state(k)
                    .iter()
                    .zip(self.state(k - 1))
                    .zip(inc)
                    .all(|((a, b), r)| a - b == *r)
            })
    }
}

/// Reusable buffers for one simulation.
struct Sim<'a> {
    model: &'a JumpModel,
    a: Vec<f64>,
}

impl<'a> Sim<'a> {
    fn new(model: &'a JumpModel) -> Self {
        Self {
            model,
            a: vec![0.0; model.reactions.len()],
        }
    }

    /// One event: returns `(waiting time, reaction index)`, or `None` if the
    /// state is absorbing.
    #[inline]
    fn next<R: Rng>(&mut self, x: &[i64], rng: &mut R) -> Result<Option<(f64, usize)>> {
        self.model.propensities_into(x, &mut self.a);
        let a0: f64 = self.a.iter().sum();
        if a0 <= 0.0 {
            if self.model.is_absorbing(x) {
                return Ok(None);
            }
            return Err(Error::FrozenState { state: x.to_vec() });
        }
        // r1 in (0, 1] keeps ln(1/r1) finite
        let r1 = 1.0 - rng.random::<f64>();
        let r2: f64 = rng.random::<f64>();
        let tau = (1.0 / a0) * (1.0 / r1).ln();
        let target = r2 * a0;
        let mut cum = 0.0;
        let mut chosen = self.a.len() - 1;
        for (i, &ai) in self.a.iter().enumerate() {
            cum += ai;
            if target < cum {
                chosen = i;
                break;
            }
        }
        // guard against rounding landing on a zero-rate channel
        while self.a[chosen] == 0.0 {
            chosen -= 1;
        }
        Ok(Some((tau, chosen)))
    }

    #[inline]
    fn apply(&self, x: &mut [i64], r: usize) {
        for (xi, d) in x.iter_mut().zip(&self.model.reactions[r].increment) {
            *xi += d;
        }
    }
}

fn check_start(model: &JumpModel, x0: &[i64]) -> Result<()> {
    if x0.len() != model.dim {
        return Err(Error::invalid("x0", format!("expected {} components", model.dim)));
    }
    if x0.iter().any(|v| *v < 0) {
        return Err(Error::invalid("x0", "populations must be nonnegative"));
    }
    Ok(())
}

/// Recorded Gillespie trajectory from `x0`, stopping at absorption or `t_max`.
pub fn gillespie(model: &JumpModel, x0: &[i64], t_max: f64, seed: u64) -> Result<JumpTrajectory> {
    check_start(model, x0)?;
    let mut rng = sample_rng(seed, 0);
    let mut sim = Sim::new(model);
    let mut x = x0.to_vec();
    let mut t = 0.0;
    let mut traj = JumpTrajectory {
        dim: model.dim,
        times: vec![0.0],
        states: x.clone(),
        fired: Vec::new(),
        terminal: Terminal::TimeLimit,
        end_time: t_max,
    };
    loop {
        match sim.next(&x, &mut rng)? {
            None => {
                traj.terminal = Terminal::Absorbed;
                traj.end_time = t;
                break;
            }
            Some((tau, r)) => {
                if t + tau > t_max {
                    break;
                }
                t += tau;
                sim.apply(&mut x, r);
                traj.times.push(t);
                traj.states.extend_from_slice(&x);
                traj.fired.push(r);
            }
        }
    }
    Ok(traj)
}

/// Absorption time of one unrecorded run, `None` if still alive at `t_max`.
fn absorption_time<R: Rng>(
    model: &JumpModel,
    x0: &[i64],
    t_max: f64,
    rng: &mut R,
) -> Result<Option<f64>> {
    if let Some((up, down)) = model.single_step_channels() {
        if model.absorbing_states == [vec![0]] && t_max == f64::INFINITY {
            return absorption_time_birth_death(model, up, down, x0[0], rng).map(Some);
        }
    }
    absorption_time_generic(model, x0, t_max, rng)
}

/// Exact absorption time of a scalar birth–death chain absorbing at 0.
///
/// Runs the embedded jump chain only, counting visits `V_n`, then draws the
/// time spent in each state as one `Gamma(V_n, 1/a0(n))` variate: the sum of
/// `V_n` independent holding times. Same law as the event loop at a few ns per
/// event instead of one logarithm each, which is what makes K in the hundreds
/// affordable. Without a time limit only, since the running clock is never
/// known.
fn absorption_time_birth_death<R: Rng>(
    model: &JumpModel,
    up: usize,
    down: usize,
    x0: i64,
    rng: &mut R,
) -> Result<f64> {
    let (w_up, w_down) = (&model.reactions[up].rate, &model.reactions[down].rate);
    // per population: P(step up), total rate
    // P(step up) as a 53-bit threshold: u < p for u = k/2^53 iff k < ceil(p 2^53)
    let mut p_up: Vec<u64> = Vec::new();
    let mut total: Vec<f64> = Vec::new();
    let grow = |p_up: &mut Vec<u64>, total: &mut Vec<f64>, upto: usize| {
        for n in p_up.len()..=upto {
            let s = [n as i64];
            let (a, b) = (w_up(&s), w_down(&s));
            let p = if a + b > 0.0 { a / (a + b) } else { 0.0 };
            p_up.push((p * (1u64 << 53) as f64).ceil() as u64);
            total.push(a + b);
        }
    };
    let mut x = x0 as usize;
    grow(&mut p_up, &mut total, 2 * x + 16);
    let mut visits = vec![0u64; p_up.len()];
    while x != 0 {
        if x >= p_up.len() {
            grow(&mut p_up, &mut total, 2 * x);
            visits.resize(p_up.len(), 0);
        }
        if total[x] <= 0.0 {
            return Err(Error::FrozenState { state: vec![x as i64] });
        }
        visits[x] += 1;
        x = x + 2 * (((rng.next_u64() >> 11) < p_up[x]) as usize) - 1;
    }
    let mut t = 0.0;
    for (n, &v) in visits.iter().enumerate() {
        if v > 0 {
            let g = Gamma::new(v as f64, 1.0 / total[n]).map_err(|e| Error::Precondition(e.to_string()))?;
            t += g.sample(rng);
        }
    }
    Ok(t)
}

fn absorption_time_generic<R: Rng>(
    model: &JumpModel,
    x0: &[i64],
    t_max: f64,
    rng: &mut R,
) -> Result<Option<f64>> {
    let mut sim = Sim::new(model);
    let mut x = x0.to_vec();
    let mut t = 0.0;
    loop {
        match sim.next(&x, rng)? {
            None => return Ok(Some(t)),
            Some((tau, r)) => {
                t += tau;
                if t > t_max {
                    return Ok(None);
                }
                sim.apply(&mut x, r);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EnsembleConfig {
    pub n_samples: usize,
    pub seed: u64,
    pub workers: usize,
    pub t_max: f64,
}

impl EnsembleConfig {
    pub fn new(n_samples: usize, seed: u64) -> Self {
        Self {
            n_samples,
            seed,
            workers: 1,
            t_max: f64::INFINITY,
        }
    }
}

/// Mean time to absorption over independent runs.
pub fn extinction_time_ensemble(
    model: &JumpModel,
    x0: &[i64],
    cfg: &EnsembleConfig,
) -> Result<EnsembleSummary> {
    check_start(model, x0)?;
    if cfg.n_samples == 0 {
        return Err(Error::invalid("samples", "must be at least 1"));
    }
    if model.absorbing_states.is_empty() {
        return Err(Error::Precondition("model declares no absorbing state".into()));
    }
    let results = par_collect(cfg.n_samples, cfg.workers, |i| {
        let mut rng = sample_rng(cfg.seed, i as u64);
        absorption_time(model, x0, cfg.t_max, &mut rng)
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
    Ok(EnsembleSummary::from_values(&times, censored, cfg.seed, cfg.workers))
}

/// Exact mean absorption time at 0 for a one-dimensional birth–death chain
/// with birth rates `b(n)` and death rates `d(n)` on `0..=n_max`, started at `n0`.
/// Uses the standard first-passage sum, evaluated in log space.
pub fn birth_death_mte(b: impl Fn(i64) -> f64, d: impl Fn(i64) -> f64, n0: i64, n_max: i64) -> f64 {
    // T(n0) = Σ_{k=1}^{n0} Σ_{j=k}^{n_max} (1/d(j)) Π_{m=k}^{j-1} b(m)/d(m)
    let mut total = 0.0;
    for k in 1..=n0 {
        let mut log_prod = 0.0f64;
        let mut inner = 0.0;
        for j in k..=n_max {
            if j > k {
                let (bm, dm) = (b(j - 1), d(j - 1));
                if bm <= 0.0 {
                    break;
                }
                log_prod += (bm / dm).ln();
            }
            inner += (log_prod - d(j).ln()).exp();
        }
        total += inner;
    }
    total
}

/// Exact mean absorption time of a single-step catalog model from `n0`.
/// Unbounded chains are truncated at `max(4K, n0 + 100)`, far past where
/// the birth/death ratio product matters.
pub fn single_step_mte(model: &JumpModel, n0: i64) -> Result<f64> {
    let (up, down) = model
        .single_step_channels()
        .ok_or_else(|| Error::Precondition("not a single-step process".into()))?;
    if model.absorbing_states != [vec![0]] {
        return Err(Error::Precondition("chain must absorb at 0 only".into()));
    }
    let rate = |r: usize, n: i64| (model.reactions[r].rate)(&[n]);
    let n_max = ((4.0 * model.system_size) as i64).max(n0 + 100);
    Ok(birth_death_mte(|n| rate(up, n), |n| rate(down, n), n0, n_max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_model, Params, Reaction};
    use std::sync::Arc;

    fn pure_death(mu: f64) -> JumpModel {
        JumpModel {
            name: "death".into(),
            dim: 1,
            system_size: 1.0,
            reactions: vec![Reaction {
                label: "death".into(),
                increment: vec![-1],
                rate: Arc::new(move |s| mu * s[0] as f64),
                w: Arc::new(move |x| mu * x[0]),
                w_grad: Arc::new(move |_, g| g[0] = mu),
                u: None,
            }],
            absorbing_states: vec![vec![0]],
            equilibria: vec![],
            params: Params::new(),
        }
    }

    fn sis(r0: f64, k: f64) -> JumpModel {
        let p: Params = [("r0".to_string(), r0), ("k".to_string(), k)].into();
        builtin_model("sis", &p).unwrap().into_jump().unwrap()
    }

    #[test]
    fn single_exponential() {
        let m = pure_death(1.0);
        let s = extinction_time_ensemble(&m, &[1], &EnsembleConfig::new(10_000, 1)).unwrap();
        assert!((s.mean - 1.0).abs() < 3.0 * s.std_error, "{:?}", s);
    }

    #[test]
    fn pure_death_harmonic_sum() {
        let m = pure_death(0.5);
        let n = 6;
        let s = extinction_time_ensemble(&m, &[n], &EnsembleConfig::new(10_000, 2)).unwrap();
        let exact: f64 = (1..=n).map(|k| 1.0 / (0.5 * k as f64)).sum();
        assert!((s.mean - exact).abs() < 3.0 * s.std_error);
        let oracle = birth_death_mte(|_| 0.0, |k| 0.5 * k as f64, n, n);
        assert!((oracle - exact).abs() < 1e-12);
    }

    #[test]
    fn trajectory_is_valid() {
        let m = sis(1.5, 50.0);
        let tr = gillespie(&m, &[17], 200.0, 4).unwrap();
        assert!(tr.len() > 100);
        assert!(tr.is_consistent(&m));
    }

    #[test]
    fn subcritical_sis_dies_fast() {
        let m = sis(0.5, 100.0);
        let s = extinction_time_ensemble(&m, &[50], &EnsembleConfig::new(2000, 3)).unwrap();
        let exact = birth_death_mte(|i| 0.5 * i as f64 * (100 - i) as f64 / 100.0, |i| i as f64, 50, 100);
        assert!((s.mean - exact).abs() < 3.0 * s.std_error);
        assert!(s.mean < 20.0);
    }

    #[test]
    fn frozen_state_is_flagged() {
        let mut m = pure_death(1.0);
        m.absorbing_states.clear();
        assert!(matches!(gillespie(&m, &[0], 1.0, 1), Err(Error::FrozenState { .. })));
    }

    #[test]
    fn std_error_halves_with_quadrupled_samples() {
        let m = pure_death(1.0);
        let a = extinction_time_ensemble(&m, &[3], &EnsembleConfig::new(4000, 5)).unwrap();
        let b = extinction_time_ensemble(&m, &[3], &EnsembleConfig::new(8000, 6)).unwrap();
        let ratio = b.std_error / a.std_error;
        assert!((ratio - 0.5f64.sqrt()).abs() < 0.2 * 0.5f64.sqrt(), "{ratio}");
    }

    #[test]
    fn aggregated_chain_matches_event_loop() {
        // same law: both means agree with the exact first-passage sum
        let m = sis(1.4, 40.0);
        let exact = birth_death_mte(|n| 1.4 * n as f64 * (40 - n) as f64 / 40.0, |n| n as f64, 13, 40);
        let n = 4000;
        let (mut fast, mut slow) = (Vec::new(), Vec::new());
        for i in 0..n {
            fast.push(absorption_time(&m, &[13], f64::INFINITY, &mut sample_rng(3, i)).unwrap().unwrap());
            slow.push(absorption_time_generic(&m, &[13], f64::INFINITY, &mut sample_rng(3, i)).unwrap().unwrap());
        }
        for v in [&fast, &slow] {
            let s = EnsembleSummary::from_values(v, 0, 3, 1);
            assert!((s.mean - exact).abs() < 4.0 * s.std_error, "{} vs {exact} ± {}", s.mean, s.std_error);
        }
        // and the second moment: exponential-like tails give variance ≈ mean²
        let var = |v: &[f64]| EnsembleSummary::from_values(v, 0, 3, 1).variance;
        let ratio = var(&fast) / var(&slow);
        assert!((ratio - 1.0).abs() < 0.15, "{ratio}");
    }

    #[test]
    fn exact_mte_from_model() {
        let m = sis(1.5, 50.0);
        let t = single_step_mte(&m, 17).unwrap();
        // independent first-passage sum in double precision
        assert!((t.ln() - 4.640_168_744_170_901).abs() < 1e-9, "{}", t.ln());
    }

    #[test]
    fn finite_horizon_uses_event_loop() {
        let m = sis(1.4, 40.0);
        let a = absorption_time(&m, &[13], 50.0, &mut sample_rng(5, 0)).unwrap();
        let b = absorption_time_generic(&m, &[13], 50.0, &mut sample_rng(5, 0)).unwrap();
        assert_eq!(a.map(f64::to_bits), b.map(f64::to_bits));
    }

    #[test]
    fn workers_do_not_change_results() {
        let m = sis(1.2, 30.0);
        let base = EnsembleConfig::new(200, 8);
        let a = extinction_time_ensemble(&m, &[6], &base).unwrap();
        let b = extinction_time_ensemble(&m, &[6], &EnsembleConfig { workers: 4, ..base }).unwrap();
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
    }

    #[test]
    fn small_k_difference_matches_exact_chain() {
        // At K = 10 and 20 the exact difference is 0.956 while 10 S_opt = 0.721;
        // the asymptotic slope is not reached yet, so the exact chain is the oracle.
        let r0: f64 = 1.5;
        let mte = |k: i64| {
            let kf = k as f64;
            let start = ((1.0 - 1.0 / r0) * kf).round() as i64;
            birth_death_mte(|i| r0 * i as f64 * (kf - i as f64) / kf, |i| i as f64, start, k)
        };
        assert!((mte(10) - 5.975_397_773_458_334).abs() < 1e-9);
        assert!((mte(20) - 15.542_938_927_844_816).abs() < 1e-9);
        let t10 = extinction_time_ensemble(&sis(r0, 10.0), &[3], &EnsembleConfig::new(20_000, 1)).unwrap();
        let t20 = extinction_time_ensemble(&sis(r0, 20.0), &[7], &EnsembleConfig::new(20_000, 2)).unwrap();
        assert!((t10.mean - mte(10)).abs() < 3.0 * t10.std_error);
        assert!((t20.mean - mte(20)).abs() < 3.0 * t20.std_error);
        let diff = t20.ln_mean - t10.ln_mean;
        let exact = (mte(20) / mte(10)).ln();
        let se = (t10.cv.powi(2) + t20.cv.powi(2)).sqrt();
        assert!((diff - exact).abs() < 3.0 * se, "{diff} vs {exact}");
    }
}
