//! WKB Hamiltonian of a master equation, closed-form optimal paths for
//! single-step processes, and the mean-time-to-extinction formulas.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use nalgebra::DMatrix;

use crate::hamiltonian::Hamiltonian;
use crate::model::{JumpModel, ScalarFn, Stability};
use crate::quadrature::{self, Tolerance};

/// Endpoint offset for log-singular integrands.
pub const LOG_EPS: f64 = 1e-8;

/// `H(x, λ) = Σ_r w_r(x) (e^{r·λ} - 1)`.
#[derive(Debug, Clone)]
pub struct WkbHamiltonian {
    pub model: JumpModel,
}

pub fn build_hamiltonian(model: &JumpModel) -> WkbHamiltonian {
    WkbHamiltonian {
        model: model.clone(),
    }
}

fn dot(r: &[i64], p: &[f64]) -> f64 {
    r.iter().zip(p).map(|(a, b)| *a as f64 * b).sum()
}

impl Hamiltonian for WkbHamiltonian {
    fn dim(&self) -> usize {
        self.model.dim
    }

    fn h(&self, x: &[f64], p: &[f64]) -> f64 {
        self.model
            .reactions
            .iter()
            .map(|r| (r.w)(x) * dot(&r.increment, p).exp_m1())
            .sum()
    }

    fn h_x(&self, x: &[f64], p: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let mut g = vec![0.0; self.model.dim];
        for r in &self.model.reactions {
            (r.w_grad)(x, &mut g);
            let e = dot(&r.increment, p).exp_m1();
            for (o, gi) in out.iter_mut().zip(&g) {
                *o += gi * e;
            }
        }
    }

    fn h_p(&self, x: &[f64], p: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for r in &self.model.reactions {
            let we = (r.w)(x) * dot(&r.increment, p).exp();
            for (o, ri) in out.iter_mut().zip(&r.increment) {
                *o += *ri as f64 * we;
            }
        }
    }

    /// Analytic except for `∂²w/∂x²`, which differences the analytic gradient.
    fn phase_jacobian(&self, x: &[f64], p: &[f64]) -> DMatrix<f64> {
        let d = self.model.dim;
        let mut jac = DMatrix::zeros(2 * d, 2 * d);
        let mut g = vec![0.0; d];
        let (mut gp, mut gm) = (vec![0.0; d], vec![0.0; d]);
        let mut xs = x.to_vec();
        for r in &self.model.reactions {
            let e = dot(&r.increment, p).exp();
            let w = (r.w)(x);
            (r.w_grad)(x, &mut g);
            for i in 0..d {
                let ri = r.increment[i] as f64;
                for j in 0..d {
                    let rj = r.increment[j] as f64;
                    // ∂H_p/∂x and ∂H_p/∂λ
                    jac[(i, j)] += ri * g[j] * e;
                    jac[(i, d + j)] += ri * rj * w * e;
                    // -∂H_x/∂λ
                    jac[(d + i, d + j)] -= g[i] * rj * e;
                }
            }
            for j in 0..d {
                let h = 1e-4 * x[j].abs().max(1.0);
                xs[j] = x[j] + h;
                (r.w_grad)(&xs, &mut gp);
                xs[j] = x[j] - h;
                (r.w_grad)(&xs, &mut gm);
                xs[j] = x[j];
                for i in 0..d {
                    jac[(d + i, j)] -= (gp[i] - gm[i]) / (2.0 * h) * (e - 1.0);
                }
            }
        }
        jac
    }
}

/// Zero-energy momentum `λ_opt(x)` of a single-step process.
#[derive(Clone)]
pub struct OptimalPathAnalytic {
    pub lambda: ScalarFn,
    /// Open interval where the closed form is valid.
    pub domain: (f64, f64),
    /// `d λ_opt / dx`.
    pub lambda_prime: ScalarFn,
}

impl std::fmt::Debug for OptimalPathAnalytic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OptimalPathAnalytic")
            .field("domain", &self.domain)
            .finish()
    }
}

/// `λ_opt(x) = -ln(w₊(x) / w₋(x))`, with hand-written closed forms for the
/// catalog models.
pub fn lambda_opt_single_step(model: &JumpModel) -> Result<OptimalPathAnalytic> {
    let (up, down) = model.single_step_channels().ok_or_else(|| {
        Error::NoClosedForm("not a single-step process; use the path solvers".into())
    })?;
    let wp = model.reactions[up].w.clone();
    let wm = model.reactions[down].w.clone();
    let gp = model.reactions[up].w_grad.clone();
    let gm = model.reactions[down].w_grad.clone();
    let lambda_prime: ScalarFn = Arc::new(move |x| {
        let (mut a, mut b) = ([0.0], [0.0]);
        gp(&[x], &mut a);
        gm(&[x], &mut b);
        -(a[0] / wp(&[x]) - b[0] / wm(&[x]))
    });
    let p = &model.params;
    let (lambda, domain): (ScalarFn, (f64, f64)) = match model.name.as_str() {
        "sis" => {
            let r0 = p["r0"];
            (Arc::new(move |i| -(r0 * (1.0 - i)).ln()), (0.0, 1.0))
        }
        "allee" => {
            let (mu, alpha, sc) = (p["mu"], p["alpha"], p["sigma_c"]);
            (
                Arc::new(move |x| ((6.0 * mu + sc * x * x) / (3.0 * alpha * x)).ln()),
                (0.0, f64::INFINITY),
            )
        }
        _ => {
            let wp = model.reactions[up].w.clone();
            let wm = model.reactions[down].w.clone();
            (
                Arc::new(move |x| -(wp(&[x]) / wm(&[x])).ln()),
                (f64::NEG_INFINITY, f64::INFINITY),
            )
        }
    };
    Ok(OptimalPathAnalytic {
        lambda,
        domain,
        lambda_prime,
    })
}

/// `∫_{x_from}^{x_to} λ_opt(x) dx` to absolute tolerance 1e-10, with
/// logarithmic endpoint singularities handled by an offset plus correction.
pub fn action_along_path(path: &OptimalPathAnalytic, x_from: f64, x_to: f64) -> Result<f64> {
    let lam = path.lambda.clone();
    quadrature::integrate_log_endpoints(move |x| lam(x), x_from, x_to, LOG_EPS, Tolerance::default())
}

#[derive(Debug, Clone, Serialize)]
pub struct MteReport {
    /// Exponential rate: ln τ ≈ K · s_opt + ln(prefactor).
    pub s_opt: f64,
    pub prefactor: f64,
    pub correction_integral: f64,
    pub ln_tau: f64,
    pub tau: f64,
    pub system_size: f64,
}

impl MteReport {
    fn new(s_opt: f64, prefactor: f64, correction_integral: f64, k: f64) -> Self {
        let ln_tau = prefactor.ln() + k * s_opt;
        Self {
            s_opt,
            prefactor,
            correction_integral,
            ln_tau,
            tau: ln_tau.exp(),
            system_size: k,
        }
    }
}

struct SingleStep {
    wp: crate::model::ScalarField,
    wm: crate::model::ScalarField,
    up: crate::model::ScalarField,
    um: crate::model::ScalarField,
}

fn single_step(model: &JumpModel) -> Result<SingleStep> {
    let (up, down) = model.single_step_channels().ok_or_else(|| {
        Error::NoClosedForm("MTE formulas need a single-step process".into())
    })?;
    let u_of = |i: usize| {
        model.reactions[i]
            .u
            .clone()
            .ok_or_else(|| Error::Precondition(format!("reaction `{}` has no u_r", model.reactions[i].label)))
    };
    Ok(SingleStep {
        wp: model.reactions[up].w.clone(),
        wm: model.reactions[down].w.clone(),
        up: u_of(up)?,
        um: u_of(down)?,
    })
}

fn correction(s: &SingleStep, a: f64, b: f64) -> Result<f64> {
    let (wp, wm, up, um) = (s.wp.clone(), s.wm.clone(), s.up.clone(), s.um.clone());
    quadrature::integrate_default(
        move |x| up(&[x]) / wp(&[x]) - um(&[x]) / wm(&[x]),
        a,
        b,
    )
}

fn log_ratio_integral(s: &SingleStep, a: f64, b: f64) -> Result<f64> {
    let (wp, wm) = (s.wp.clone(), s.wm.clone());
    quadrature::integrate_log_endpoints(
        move |x| (wp(&[x]) / wm(&[x])).ln(),
        a,
        b,
        LOG_EPS,
        Tolerance::default(),
    )
}

/// MTE for a repelling extinct state `x0 = 0` and attracting endemic state `x1`.
pub fn mte_topology_a(model: &JumpModel) -> Result<MteReport> {
    let s = single_step(model)?;
    let x0 = 0.0;
    let x1 = model
        .equilibria
        .iter()
        .find(|e| e.stability == Stability::Stable && e.state[0] > 0.0)
        .ok_or_else(|| Error::Precondition("no attracting endemic state".into()))?
        .state[0];
    let (iu, idn) = model.single_step_channels().expect("checked");
    let (mut gp, mut gm) = ([0.0], [0.0]);
    (model.reactions[iu].w_grad)(&[0.0], &mut gp);
    (model.reactions[idn].w_grad)(&[0.0], &mut gm);
    let r = gp[0] / gm[0];
    if !(r > 1.0) {
        return Err(Error::Precondition(format!(
            "R = w+'(0)/w-'(0) = {r} must exceed 1"
        )));
    }
    if r < 1.2 {
        log::warn!("R = {r:.4} is close to 1: the quasi-stationary assumption behind the MTE breaks down");
    }
    let path = lambda_opt_single_step(model)?;
    let lp = (path.lambda_prime)(x1);
    if !(lp > 0.0) {
        return Err(Error::Precondition("λ'_opt(x1) must be positive".into()));
    }
    let k = model.system_size;
    let corr = correction(&s, x0, x1)?;
    let s_opt = log_ratio_integral(&s, x0, x1)?;
    let prefactor =
        (2.0 * PI * r).sqrt() * corr.exp() / ((r - 1.0) * (s.wp)(&[x1]) * (k * lp).sqrt());
    Ok(MteReport::new(s_opt, prefactor, corr, k))
}

/// MTE with an Allee threshold `x1` between extinction and the stable state `x2`.
pub fn mte_topology_b(model: &JumpModel) -> Result<MteReport> {
    let s = single_step(model)?;
    let interior = |st: Stability| {
        model
            .equilibria
            .iter()
            .find(|e| e.stability == st && e.state[0] > 0.0)
            .map(|e| e.state[0])
    };
    let x1 = interior(Stability::Unstable)
        .ok_or_else(|| Error::Precondition("no interior threshold state".into()))?;
    let x2 = interior(Stability::Stable)
        .ok_or_else(|| Error::Precondition("no interior stable state".into()))?;
    if !(0.0 < x1 && x1 < x2) {
        return Err(Error::Precondition("need 0 < x1 < x2".into()));
    }
    let path = lambda_opt_single_step(model)?;
    let (l1, l2) = ((path.lambda_prime)(x1), (path.lambda_prime)(x2));
    let k = model.system_size;
    let corr = correction(&s, x1, x2)?;
    // ∫_{x2}^{x1} ln(w-/w+) = ∫_{x1}^{x2} ln(w+/w-)
    let s_opt = log_ratio_integral(&s, x1, x2)?;
    let prefactor = 2.0 * PI * corr.exp() / ((s.wp)(&[x2]) * (l1.abs() * l2).sqrt());
    Ok(MteReport::new(s_opt, prefactor, corr, k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_model, Params};
    use proptest::prelude::*;

    fn sis(r0: f64, k: f64) -> JumpModel {
        let p: Params = [("r0".to_string(), r0), ("k".to_string(), k)].into();
        builtin_model("sis", &p).unwrap().into_jump().unwrap()
    }

    fn allee(k: f64) -> JumpModel {
        let p: Params = [("k".to_string(), k)].into();
        builtin_model("allee", &p).unwrap().into_jump().unwrap()
    }

    #[test]
    fn sis_hamiltonian_form() {
        let h = build_hamiltonian(&sis(1.5, 100.0));
        for &(i, l) in &[(0.2, 0.3), (0.7, -1.1), (0.01, 2.0)] {
            let want = 1.5 * (1.0 - i) * i * (f64::exp(l) - 1.0) + i * (f64::exp(-l) - 1.0);
            assert!((h.h(&[i], &[l]) - want).abs() < 1e-14);
        }
    }

    #[test]
    fn allee_capacity_is_fixed_point() {
        let m = allee(100.0);
        let x2 = m.equilibrium("capacity").unwrap().state[0];
        let mut v = [0.0];
        build_hamiltonian(&m).h_p(&[x2], &[0.0], &mut v);
        assert!(v[0].abs() < 1e-15);
    }

    #[test]
    fn sis_lambda_endpoints() {
        let path = lambda_opt_single_step(&sis(1.5, 100.0)).unwrap();
        assert!(((path.lambda)(0.0) + 1.5f64.ln()).abs() < 1e-15);
        assert!((path.lambda)(1.0 / 3.0).abs() < 1e-15);
        let a = lambda_opt_single_step(&allee(100.0)).unwrap();
        for x in [0.346_887_112_6, 1.153_112_887_4] {
            assert!((a.lambda)(x).abs() < 1e-9);
        }
    }

    #[test]
    fn sis_action_closed_form() {
        for r0 in [1.5f64, 2.0, 3.0] {
            let m = sis(r0, 100.0);
            let path = lambda_opt_single_step(&m).unwrap();
            let s = action_along_path(&path, 1.0 - 1.0 / r0, 0.0).unwrap();
            let exact = r0.ln() - 1.0 + 1.0 / r0;
            assert!((s - exact).abs() < 1e-10, "{r0}: {s} vs {exact}");
        }
        let s = action_along_path(&lambda_opt_single_step(&sis(1.5, 10.0)).unwrap(), 1.0 / 3.0, 0.0).unwrap();
        assert!((s - 0.072_131_8).abs() < 1e-7);
        let m = sis(1.0, 100.0);
        let s = action_along_path(&lambda_opt_single_step(&m).unwrap(), 0.0, 0.0).unwrap();
        assert_eq!(s, 0.0);
    }

    #[test]
    fn allee_action_value() {
        let m = allee(100.0);
        let path = lambda_opt_single_step(&m).unwrap();
        let s = action_along_path(&path, 1.153_112_887_4, 0.346_887_112_6).unwrap();
        assert!((s - 0.088_451_390_339_376_68).abs() < 1e-9, "{s}");
    }

    #[test]
    fn non_single_step_has_no_closed_form() {
        let mut m = sis(1.5, 100.0);
        m.reactions[0].increment = vec![2];
        assert!(matches!(lambda_opt_single_step(&m), Err(Error::NoClosedForm(_))));
    }

    #[test]
    fn sis_mte_matches_closed_form() {
        let m = sis(1.5, 100.0);
        let rep = mte_topology_a(&m).unwrap();
        let s_opt = 1.5f64.ln() - 1.0 + 1.0 / 1.5;
        let b = 1.5 / 0.25 * (2.0 * PI / 100.0).sqrt();
        assert!((rep.s_opt - s_opt).abs() < 1e-10, "{} {}", rep.s_opt, s_opt);
        assert!((rep.prefactor - b).abs() < 1e-10);
        assert!((rep.tau / 2.04e3 - 1.0).abs() < 0.01, "{}", rep.tau);
        let doubled = mte_topology_a(&sis(1.5, 200.0)).unwrap();
        let gain = doubled.ln_tau - rep.ln_tau;
        assert!((gain - 100.0 * s_opt).abs() < 0.05 * 100.0 * s_opt);
        assert!(mte_topology_a(&sis(0.9, 100.0)).is_err());
    }

    #[test]
    fn allee_mte_regression() {
        let rep = mte_topology_b(&allee(100.0)).unwrap();
        assert!((rep.correction_integral - 0.600_610_509_989_847_3).abs() < 1e-9);
        assert!((rep.prefactor - 13.517_032_555_207_319).abs() < 1e-7);
        assert!((rep.tau - 93_815.9).abs() < 1.0, "{}", rep.tau);
        let r150 = mte_topology_b(&allee(150.0)).unwrap();
        assert!((r150.tau / 7.815_809_598e6 - 1.0).abs() < 1e-8);
        let gain = mte_topology_b(&allee(200.0)).unwrap().ln_tau - rep.ln_tau;
        assert!((gain - 100.0 * rep.s_opt).abs() < 0.1 * 100.0 * rep.s_opt);
    }

    #[test]
    fn time_rescaling_scales_mte() {
        let c = 3.0;
        let mut m = allee(100.0);
        for r in &mut m.reactions {
            let (w, g, u) = (r.w.clone(), r.w_grad.clone(), r.u.clone().unwrap());
            r.w = Arc::new(move |x| c * w(x));
            r.w_grad = Arc::new(move |x, out| {
                g(x, out);
                out[0] *= c;
            });
            r.u = Some(Arc::new(move |x| c * u(x)));
        }
        m.name = "scaled".into();
        let base = mte_topology_b(&allee(100.0)).unwrap().tau;
        let scaled = mte_topology_b(&m).unwrap().tau;
        assert!((scaled * c / base - 1.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn zero_energy_on_closed_forms(t in 0.001f64..0.999) {
            let m = sis(1.5, 100.0);
            let h = build_hamiltonian(&m);
            let path = lambda_opt_single_step(&m).unwrap();
            let i = t;
            prop_assert!(h.h(&[i], &[(path.lambda)(i)]).abs() < 1e-12);
            let a = allee(100.0);
            let ha = build_hamiltonian(&a);
            let pa = lambda_opt_single_step(&a).unwrap();
            let x = 2.0 * t;
            prop_assert!(ha.h(&[x], &[(pa.lambda)(x)]).abs() < 1e-12);
        }

        #[test]
        fn closed_form_equals_rate_ratio(t in 0.001f64..0.999) {
            for m in [sis(1.5, 100.0), allee(100.0)] {
                let path = lambda_opt_single_step(&m).unwrap();
                let x = [t];
                let direct = -((m.reactions[0].w)(&x) / (m.reactions[1].w)(&x)).ln();
                prop_assert!(((path.lambda)(t) - direct).abs() < 1e-13);
            }
        }

        #[test]
        fn mean_field_from_hamiltonian(t in 0.0f64..1.5) {
            for m in [sis(1.5, 100.0), allee(100.0)] {
                let mut v = [0.0];
                build_hamiltonian(&m).h_p(&[t], &[0.0], &mut v);
                prop_assert!((v[0] - m.mean_field(&[t])[0]).abs() < 1e-14);
                prop_assert_eq!(build_hamiltonian(&m).h(&[t], &[0.0]), 0.0);
            }
        }
    }
}
