//! Data behind each reproduced figure: numeric tables plus a flat summary.
//!
//! Every figure runs from documented defaults; [`FigureOptions`] overrides
//! the swept values, sample counts and model parameters.

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::hamiltonian::Hamiltonian;
use crate::io::Table;
use crate::linalg::{lyapunov_residual, spectral_abscissa};
use crate::model::laser::{laser_amplitudes, laser_linearization, laser_stationary_covariance, lyapunov_source, LaserParams};
use crate::model::{builtin_model, Domain, JumpModel, Params};
use crate::path::{finite_time_action_sweep, gmam, iamm, GmamOptions, IammOptions, MamOptions, PhasePoint};
use crate::sampling::{soliton_position_tail, SampleConfig};
use crate::sde::{kramers_mte, mean_exit_time_mc, SimConfig};
use crate::ssa::{extinction_time_ensemble, single_step_mte, EnsembleConfig};
use crate::stats::fit_line;
use crate::wkb::{self, action_along_path, build_hamiltonian, lambda_opt_single_step, MteReport};

pub const FIGURES: [&str; 8] = ["fig4", "fig5d", "fig6a", "fig8", "fig9", "fig10", "fig11", "fig14"];

#[derive(Debug, Clone)]
pub struct Figure {
    pub name: String,
    /// `(file stem, table)`.
    pub tables: Vec<(String, Table)>,
    pub summary: Map<String, Value>,
}

impl Figure {
    fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            tables: Vec::new(),
            summary: Map::new(),
        }
    }

    fn table(&mut self, stem: &str, header: &[&str], rows: Vec<Vec<f64>>) {
        self.tables.push((
            stem.to_string(),
            Table {
                header: header.iter().map(|h| h.to_string()).collect(),
                rows,
            },
        ));
    }

    fn put(&mut self, key: &str, v: impl Into<Value>) {
        self.summary.insert(key.to_string(), v.into());
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.summary.get(key)?.as_f64()
    }

    pub fn get_bool(&self, key: &str) -> Option<bool> {
        self.summary.get(key)?.as_bool()
    }

    pub fn table_named(&self, stem: &str) -> Option<&Table> {
        self.tables.iter().find(|(s, _)| s == stem).map(|(_, t)| t)
    }
}

#[derive(Debug, Clone)]
pub struct FigureOptions {
    pub seed: u64,
    pub workers: usize,
    /// Model parameter overrides.
    pub params: Params,
    /// Parameter swept along the horizontal axis, when the figure allows a choice.
    pub vary: Option<String>,
    pub values: Option<Vec<f64>>,
    /// One count for every point, or one per swept value.
    pub samples: Option<Vec<usize>>,
    pub dt: Option<f64>,
    pub grid_n: Option<usize>,
    pub t_f: Option<f64>,
}

impl Default for FigureOptions {
    fn default() -> Self {
        Self {
            seed: 1,
            workers: 1,
            params: Params::new(),
            vary: None,
            values: None,
            samples: None,
            dt: None,
            grid_n: None,
            t_f: None,
        }
    }
}

impl FigureOptions {
    fn samples_for(&self, k: usize, count: usize, default: &[usize]) -> Result<usize> {
        let s = self.samples.as_deref().unwrap_or(default);
        match s.len() {
            1 => Ok(s[0]),
            n if n == count => Ok(s[k]),
            n => Err(Error::invalid("samples", format!("give 1 or {count} counts, got {n}"))),
        }
    }

    fn params_with(&self, defaults: &[(&str, f64)]) -> Params {
        let mut p = self.params.clone();
        for (k, v) in defaults {
            p.entry(k.to_string()).or_insert(*v);
        }
        p
    }
}

pub fn figure(name: &str, opts: &FigureOptions) -> Result<Figure> {
    match name {
        "fig4" => fig4(opts),
        "fig5d" => fig5d(opts),
        "fig6a" => fig6a(opts),
        "fig8" => fig8(opts),
        "fig9" => fig9(opts),
        "fig10" => fig10(opts),
        "fig11" => fig11(opts),
        "fig14" => fig14(opts),
        other => Err(Error::invalid("figure", format!("unknown figure `{other}`; one of {}", FIGURES.join(", ")))),
    }
}

/// `n` points from `a` to `b`, evenly spaced in log.
pub fn log_space(a: f64, b: f64, n: usize) -> Vec<f64> {
    let (la, lb) = (a.ln(), b.ln());
    (0..n)
        .map(|k| {
            if k == 0 {
                a
            } else if k + 1 == n {
                b
            } else {
                (la + (lb - la) * k as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

/// Mean escape time over the cubic barrier against 2/D, with the OLS line.
/// Each path starts in the well and exits at x = 1, past the barrier top.
pub fn fig4(opts: &FigureOptions) -> Result<Figure> {
    let ds = opts.values.clone().unwrap_or_else(|| vec![0.4, 0.3, 0.25, 0.2, 0.15]);
    let dt = opts.dt.unwrap_or(1e-3);
    let base = builtin_model("cubic_well", &opts.params)?.into_diffusion()?;
    let pot = base.potential.clone().expect("cubic well has a potential");
    let domain = Domain::interval(f64::NEG_INFINITY, 1.0);
    let mut rows = Vec::new();
    for (k, &d) in ds.iter().enumerate() {
        let n = opts.samples_for(k, ds.len(), &[2000])?;
        let model = base.with_noise_intensity(d);
        let kramers = kramers_mte(&pot, d)?;
        let cfg = SimConfig {
            workers: opts.workers,
            ..SimConfig::new(dt, 200.0 * kramers, opts.seed.wrapping_add(k as u64), n)
        };
        let s = mean_exit_time_mc(&model, &[pot.x_min], &domain, &cfg)?;
        rows.push(vec![2.0 / d, s.ln_mean, s.cv, kramers.ln(), s.n_censored as f64]);
    }
    let xs: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    let fit = fit_line(&xs, &ys)?;
    let mut f = Figure::new("fig4");
    f.table("fig4", &["two_over_d", "ln_tau", "ln_tau_se", "ln_tau_kramers", "n_censored"], rows);
    f.put("slope", fit.slope);
    f.put("intercept", fit.intercept);
    f.put("r2", fit.r2);
    f.put("slope_se", fit.slope_se);
    f.put("barrier", pot.barrier());
    f.put("kramers_intercept", (2.0 * std::f64::consts::PI / ((pot.d2u)(pot.x_min) * (pot.d2u)(pot.x_max).abs()).sqrt()).ln());
    f.put("dt", dt);
    Ok(f)
}

/// Finite-time minimum action across the cubic barrier against the horizon.
pub fn fig5d(opts: &FigureOptions) -> Result<Figure> {
    let t_fs = opts.values.clone().unwrap_or_else(|| vec![0.5, 1.0, 2.0, 4.0, 8.0]);
    let model = builtin_model("cubic_well", &opts.params)?.into_diffusion()?;
    let mam = MamOptions {
        grid_n: opts.grid_n.unwrap_or(400),
        ..Default::default()
    };
    let r = finite_time_action_sweep(&model, &[-0.5], &[0.5], &t_fs, &mam)?;
    let mut f = Figure::new("fig5d");
    let rows = r.points.iter().map(|p| vec![p.t_f, p.action, p.converged as u8 as f64]).collect();
    f.table("fig5d", &["t_f", "action", "converged"], rows);
    f.put("monotone", r.monotone);
    f.put("all_converged", r.all_converged);
    f.put("quasipotential", 1.0);
    Ok(f)
}

/// Phase-slip action of the modulated laser against one parameter, plus the
/// stationary covariance at the base point.
pub fn fig6a(opts: &FigureOptions) -> Result<Figure> {
    let vary = opts.vary.clone().unwrap_or_else(|| "omega".into());
    let values = opts.values.clone().unwrap_or_else(|| log_space(0.1, 10.0, 15));
    let base = opts.params.clone();
    let resolved = crate::model::catalog::resolve_params("laser3d", &base)?;
    if !resolved.contains_key(&vary) || vary == "d" {
        return Err(Error::invalid("vary", format!("`{vary}` is not a laser coefficient")));
    }
    let gm = GmamOptions {
        grid_n: opts.grid_n.unwrap_or(200),
        ..Default::default()
    };
    let mut rows = Vec::new();
    for &v in &values {
        let mut p = base.clone();
        p.insert(vary.clone(), v);
        let model = builtin_model("laser3d", &p)?.into_diffusion()?;
        let from = equilibrium_state(&model.equilibria, "plus_0")?;
        let to = equilibrium_state(&model.equilibria, "plus_1")?;
        let r = gmam(&model, &from, &to, &gm)?;
        if !r.converged {
            log::warn!("{vary} = {v}: gmam stopped at {} iterations", r.iterations);
        }
        rows.push(vec![v, r.action, r.converged as u8 as f64, r.iterations as f64]);
    }
    let actions: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    let (imax, peak) = actions
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |a, (i, s)| if s > a.1 { (i, s) } else { a });
    let n = actions.len();
    let mut f = Figure::new("fig6a");
    f.put("vary", vary.clone());
    f.put("peak_action", peak);
    f.put("peak_at", values[imax]);
    f.put("interior_max", imax > 0 && imax + 1 < n);
    f.put("first_over_peak", actions[0] / peak);
    f.put("last_over_peak", actions[n - 1] / peak);
    f.put("all_converged", rows.iter().all(|r| r[2] == 1.0));
    f.table("fig6a", &[vary.as_str(), "action", "converged", "iterations"], rows);

    // covariance of the linearized noise about the trapped state
    let lp = LaserParams::from_params(&resolved)?;
    let noise = resolved["d"];
    let (a0, _) = laser_amplitudes(&lp)?;
    let m = laser_linearization(&lp, a0, 0);
    let q = lyapunov_source(&[a0, 0.0, 0.0], noise);
    let s = laser_stationary_covariance(&lp, noise, 0)?;
    let asym = (&s - s.transpose()).abs().max();
    let min_eig = s.clone().symmetric_eigenvalues().min();
    f.put("covariance", json!(s.row_iter().map(|r| r.iter().copied().collect::<Vec<f64>>()).collect::<Vec<_>>()));
    f.put("covariance_asymmetry", asym);
    f.put("covariance_min_eigenvalue", min_eig);
    f.put("lyapunov_residual", lyapunov_residual(&m, &s, &q));
    f.put("spectral_abscissa", spectral_abscissa(&m));
    Ok(f)
}

fn equilibrium_state(eqs: &[crate::model::Equilibrium], label: &str) -> Result<Vec<f64>> {
    eqs.iter()
        .find(|e| e.label == label)
        .map(|e| e.state.clone())
        .ok_or_else(|| Error::Precondition(format!("no equilibrium `{label}`")))
}

/// Analytic zero-energy momentum next to the numeric phase-space path.
fn wkb_figure(name: &str, model: &JumpModel, from: PhasePoint, to: PhasePoint, grid_n: usize) -> Result<Figure> {
    let exact = lambda_opt_single_step(model)?;
    let ham = build_hamiltonian(model);
    let r = iamm(&ham, &from, &to, &IammOptions { grid_n, ..Default::default() })?;
    let path = &r.path;
    let momenta = path.momenta.as_ref().expect("iamm returns momenta");
    let (lo, hi) = exact.domain;
    let mut sup = 0.0f64;
    for (x, l) in path.nodes.iter().zip(momenta) {
        if x[0] > lo && x[0] < hi {
            sup = sup.max((l[0] - (exact.lambda)(x[0])).abs());
        }
    }
    let a = from.x[0].min(to.x[0]);
    let b = from.x[0].max(to.x[0]);
    let m = 400;
    let mut h_res = 0.0f64;
    let mut rows = Vec::with_capacity(m + 1);
    for k in 0..=m {
        let x = a + (b - a) * k as f64 / m as f64;
        let x = x.clamp(lo.max(a) + 1e-12, hi.min(b) - 1e-12);
        let l = (exact.lambda)(x);
        let h = ham.h(&[x], &[l]);
        h_res = h_res.max(h.abs());
        rows.push(vec![x, l, h]);
    }
    let s_opt = action_along_path(&exact, from.x[0], to.x[0])?;
    let mut f = Figure::new(name);
    f.table(&format!("{name}_analytic"), &["x", "lambda_opt", "hamiltonian"], rows);
    let prows = path
        .grid
        .iter()
        .zip(&path.nodes)
        .zip(momenta)
        .map(|((t, x), l)| vec![*t, x[0], l[0]])
        .collect();
    f.table(&format!("{name}_path"), &["t", "x1", "lambda1"], prows);
    f.put("s_opt", s_opt);
    f.put("iamm_action", r.action);
    f.put("iamm_converged", r.converged);
    f.put("iamm_max_abs_hamiltonian", r.max_abs_hamiltonian.unwrap_or(f64::NAN));
    f.put("lambda_sup_error", sup);
    f.put("analytic_max_abs_hamiltonian", h_res);
    Ok(f)
}

/// SIS optimal path from the endemic state to the fluctuational extinct state.
pub fn fig8(opts: &FigureOptions) -> Result<Figure> {
    let model = builtin_model("sis", &opts.params_with(&[("r0", 1.5), ("k", 100.0)]))?.into_jump()?;
    let endemic = equilibrium_state(&model.equilibria, "endemic")?;
    let exact = lambda_opt_single_step(&model)?;
    let to = PhasePoint::new(vec![0.0], vec![(exact.lambda)(0.0)]);
    let mut f = wkb_figure("fig8", &model, PhasePoint::rest(endemic), to, opts.grid_n.unwrap_or(4000))?;
    f.put("lambda_f", (exact.lambda)(0.0));
    Ok(f)
}

/// Allee optimal path from the carrying capacity to the threshold.
pub fn fig9(opts: &FigureOptions) -> Result<Figure> {
    let model = builtin_model("allee", &opts.params)?.into_jump()?;
    let cap = equilibrium_state(&model.equilibria, "capacity")?;
    let thr = equilibrium_state(&model.equilibria, "threshold")?;
    let mut f = wkb_figure("fig9", &model, PhasePoint::rest(cap.clone()), PhasePoint::rest(thr.clone()), opts.grid_n.unwrap_or(16_000))?;
    f.put("x_threshold", thr[0]);
    f.put("x_capacity", cap[0]);
    Ok(f)
}

struct MteRow {
    value: f64,
    ln_ssa: f64,
    ln_se: f64,
    ln_wkb: f64,
    ln_exact: f64,
    n: usize,
}

fn mte_rows(
    name: &str,
    values: &[f64],
    opts: &FigureOptions,
    default_samples: &[usize],
    build: impl Fn(f64) -> Result<(JumpModel, i64)>,
    wkb: impl Fn(&JumpModel) -> Result<MteReport>,
) -> Result<Vec<MteRow>> {
    let mut out = Vec::new();
    for (k, &v) in values.iter().enumerate() {
        let (model, n0) = build(v)?;
        let n = opts.samples_for(k, values.len(), default_samples)?;
        let cfg = EnsembleConfig {
            workers: opts.workers,
            ..EnsembleConfig::new(n, opts.seed.wrapping_add(k as u64))
        };
        let started = std::time::Instant::now();
        let s = extinction_time_ensemble(&model, &[n0], &cfg)?;
        log::info!("{name}: value {v}, {n} runs in {:.1?}", started.elapsed());
        out.push(MteRow {
            value: v,
            ln_ssa: s.ln_mean,
            ln_se: s.cv,
            ln_wkb: wkb(&model)?.ln_tau,
            ln_exact: single_step_mte(&model, n0)?.ln(),
            n: s.n,
        });
    }
    Ok(out)
}

fn mte_figure(name: &str, vary: &str, rows: Vec<MteRow>, s_opt: Option<f64>) -> Result<Figure> {
    let mut f = Figure::new(name);
    f.put("vary", vary);
    if vary == "k" {
        let xs: Vec<f64> = rows.iter().map(|r| r.value).collect();
        let slope = |ys: Vec<f64>| fit_line(&xs, &ys).map(|l| l.slope);
        f.put("slope_ssa", slope(rows.iter().map(|r| r.ln_ssa).collect())?);
        f.put("slope_wkb", slope(rows.iter().map(|r| r.ln_wkb).collect())?);
        f.put("slope_exact", slope(rows.iter().map(|r| r.ln_exact).collect())?);
        if let Some(s) = s_opt {
            f.put("s_opt", s);
        }
    }
    let worst = rows.iter().map(|r| (r.ln_ssa - r.ln_wkb).abs()).fold(0.0, f64::max);
    f.put("max_abs_ln_gap_ssa_wkb", worst);
    let table = rows
        .iter()
        .map(|r| vec![r.value, r.ln_ssa, r.ln_se, r.ln_wkb, r.ln_exact, r.n as f64])
        .collect();
    f.table(name, &[vary, "ln_tau_ssa", "ln_tau_se", "ln_tau_wkb", "ln_tau_exact", "samples"], table);
    Ok(f)
}

/// SIS mean extinction time: simulation, WKB and the exact chain, against
/// R0 at fixed K (default) or against K at fixed R0.
pub fn fig10(opts: &FigureOptions) -> Result<Figure> {
    let vary = opts.vary.clone().unwrap_or_else(|| "r0".into());
    let base = opts.params_with(&[("r0", 1.5), ("k", 100.0)]);
    let (values, samples): (Vec<f64>, Vec<usize>) = match vary.as_str() {
        "r0" => (vec![1.1, 1.2, 1.3, 1.4, 1.5, 1.6, 1.7], vec![200]),
        "k" => (vec![50.0, 100.0, 150.0, 200.0], vec![2000, 1000, 1000, 200]),
        other => return Err(Error::invalid("vary", format!("`{other}`: use r0 or k"))),
    };
    let values = opts.values.clone().unwrap_or(values);
    let rows = mte_rows(
        "fig10",
        &values,
        opts,
        &samples,
        |v| {
            let mut p = base.clone();
            p.insert(vary.clone(), v);
            let m = builtin_model("sis", &p)?.into_jump()?;
            let x = equilibrium_state(&m.equilibria, "endemic")?[0];
            let n0 = (m.system_size * x).round() as i64;
            Ok((m, n0))
        },
        wkb::mte_topology_a,
    )?;
    let s_opt = builtin_model("sis", &base)?.into_jump().and_then(|m| wkb::mte_topology_a(&m)).ok().map(|r| r.s_opt);
    mte_figure("fig10", &vary, rows, s_opt)
}

/// Allee mean extinction time against K, started at ⌈K x₂⌉.
pub fn fig11(opts: &FigureOptions) -> Result<Figure> {
    let values = opts.values.clone().unwrap_or_else(|| vec![50.0, 100.0, 150.0]);
    let base = opts.params.clone();
    let rows = mte_rows(
        "fig11",
        &values,
        opts,
        &[400, 100, 16],
        |k| {
            let mut p = base.clone();
            p.insert("k".into(), k);
            let m = builtin_model("allee", &p)?.into_jump()?;
            let x2 = equilibrium_state(&m.equilibria, "capacity")?[0];
            Ok((m, (k * x2).ceil() as i64))
        },
        wkb::mte_topology_b,
    )?;
    let s_opt = builtin_model("allee", &base)?.into_jump().and_then(|m| wkb::mte_topology_b(&m)).ok().map(|r| r.s_opt);
    mte_figure("fig11", "k", rows, s_opt)
}

/// Tail probabilities of the soliton position after `t_f`, each target with
/// its own optimal-path bias, and the density they imply.
pub fn fig14(opts: &FigureOptions) -> Result<Figure> {
    let targets = opts
        .values
        .clone()
        .unwrap_or_else(|| (-6..=6).map(|k| k as f64).collect());
    let model = builtin_model("filter3d", &opts.params)?.into_diffusion()?;
    let n = opts.samples_for(0, 1, &[10_000])?;
    let cfg = SampleConfig {
        workers: opts.workers,
        ..SampleConfig::new(opts.t_f.unwrap_or(10.0), opts.dt.unwrap_or(1e-2), n, opts.seed)
    };
    let mam = MamOptions {
        grid_n: opts.grid_n.unwrap_or(200),
        ..Default::default()
    };
    let tail = soliton_position_tail(&model, &targets, &cfg, &mam)?;
    let mut f = Figure::new("fig14");
    f.table(
        "fig14_tail",
        &["xi_f", "p_hat", "se", "ln_p_hat", "action"],
        tail.iter().map(|p| vec![p.xi_f, p.p_hat, p.se, p.ln_p_hat, p.action]).collect(),
    );
    // density from differences of the tail on each side of the mode
    let mut sorted = tail.clone();
    sorted.sort_by(|a, b| a.xi_f.total_cmp(&b.xi_f));
    let mut pdf = Vec::new();
    for w in sorted.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let dx = b.xi_f - a.xi_f;
        let mid = 0.5 * (a.xi_f + b.xi_f);
        let dens = if a.xi_f >= 0.0 {
            (a.p_hat - b.p_hat) / dx
        } else if b.xi_f <= 0.0 {
            (b.p_hat - a.p_hat) / dx
        } else {
            continue;
        };
        pdf.push(vec![mid, dens]);
    }
    f.table("fig14_pdf", &["xi", "pdf"], pdf);
    f.put("t_f", cfg.t_f);
    f.put("samples", n as f64);
    f.put("min_p_hat", tail.iter().map(|p| p.p_hat).fold(f64::INFINITY, f64::min));
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_space_hits_endpoints() {
        let v = log_space(0.1, 10.0, 15);
        assert_eq!(v.len(), 15);
        assert_eq!((v[0], v[14]), (0.1, 10.0));
        assert!((v[7] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_figure_is_a_validation_error() {
        let e = figure("fig99", &FigureOptions::default()).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn sample_counts_per_point() {
        let o = FigureOptions {
            samples: Some(vec![5, 6]),
            ..Default::default()
        };
        assert_eq!(o.samples_for(1, 2, &[1]).unwrap(), 6);
        assert!(o.samples_for(1, 3, &[1]).is_err());
        assert_eq!(FigureOptions::default().samples_for(2, 3, &[7]).unwrap(), 7);
    }

    #[test]
    fn fig5d_is_monotone() {
        let f = fig5d(&FigureOptions::default()).unwrap();
        assert_eq!(f.get_bool("monotone"), Some(true));
        let t = f.table_named("fig5d").unwrap();
        assert_eq!(t.rows.len(), 5);
    }

    #[test]
    fn fig8_momentum_matches() {
        let f = fig8(&FigureOptions::default()).unwrap();
        assert!(f.get_f64("lambda_sup_error").unwrap() < 1e-4);
        assert!(f.get_f64("analytic_max_abs_hamiltonian").unwrap() < 1e-12);
        assert!((f.get_f64("lambda_f").unwrap() + 1.5f64.ln()).abs() < 1e-12);
    }
}
