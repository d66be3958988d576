//! Builtin example systems and their parameter schemas.

use std::sync::Arc;

use super::laser::{self, LaserParams};
use super::{
    DiffusionModel, Domain, Equilibrium, JumpModel, Model, Params, PotentialModel, Reaction,
    Stability,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct ParamSpec {
    pub key: &'static str,
    /// `None` marks a required parameter.
    pub default: Option<f64>,
    pub help: &'static str,
}

const fn p(key: &'static str, default: Option<f64>, help: &'static str) -> ParamSpec {
    ParamSpec { key, default, help }
}

pub const MODEL_NAMES: [&str; 7] = [
    "cubic_well",
    "quartic_well",
    "ou",
    "sis",
    "allee",
    "laser3d",
    "filter3d",
];

const CUBIC: &[ParamSpec] = &[p("d", Some(0.25), "noise intensity D")];
const QUARTIC: &[ParamSpec] = &[p("d", Some(0.25), "noise intensity D")];
const OU: &[ParamSpec] = &[p("d", Some(1.0), "noise intensity D")];
const SIS: &[ParamSpec] = &[
    p("r0", None, "basic reproductive number"),
    p("k", None, "population size"),
];
const ALLEE: &[ParamSpec] = &[
    p("mu", Some(0.2), "linear death rate"),
    p("alpha", Some(1.5), "pairwise birth rate"),
    p("sigma_c", Some(3.0), "three-body overcrowding death rate"),
    p("k", Some(100.0), "system size"),
];
// Chosen so the phase-slip action over ω has an interior maximum.
const LASER: &[ParamSpec] = &[
    p("c0", Some(0.5), "modulation amplitude"),
    p("c1", Some(0.1), "linear loss"),
    p("c2", Some(0.2), "spectral filtering"),
    p("d1", Some(0.5), "nonlinear gain"),
    p("d2", Some(0.1), "gain saturation"),
    p("omega", Some(1.9), "modulation inverse width"),
    p("d", Some(0.01), "noise intensity D"),
];
const FILTER: &[ParamSpec] = &[
    p("c2", Some(0.2), "spectral filtering"),
    p("c1", None, "linear gain (negative); defaults to -c2/3"),
    p("d", Some(0.01), "noise intensity D"),
];

/// Parameter schema of a builtin model.
pub fn param_schema(name: &str) -> Result<&'static [ParamSpec]> {
    Ok(match name {
        "cubic_well" => CUBIC,
        "quartic_well" => QUARTIC,
        "ou" => OU,
        "sis" => SIS,
        "allee" => ALLEE,
        "laser3d" => LASER,
        "filter3d" => FILTER,
        other => return Err(Error::UnknownModel(other.to_string())),
    })
}

/// Fills defaults, rejects unknown keys and reports missing required ones.
pub fn resolve_params(name: &str, given: &Params) -> Result<Params> {
    let schema = param_schema(name)?;
    for key in given.keys() {
        if !schema.iter().any(|s| s.key == key) {
            return Err(Error::invalid(
                format!("params.{key}"),
                format!("not a parameter of `{name}`"),
            ));
        }
    }
    let mut out = Params::new();
    for spec in schema {
        match given.get(spec.key).copied().or(spec.default) {
            Some(v) if v.is_finite() => {
                out.insert(spec.key.to_string(), v);
            }
            Some(_) => {
                return Err(Error::invalid(format!("params.{}", spec.key), "must be finite"))
            }
            None if name == "filter3d" && spec.key == "c1" => {}
            None => {
                return Err(Error::MissingParameter {
                    model: name.to_string(),
                    field: spec.key.to_string(),
                })
            }
        }
    }
    Ok(out)
}

fn positive(params: &Params, key: &str) -> Result<f64> {
    let v = params[key];
    if v > 0.0 {
        Ok(v)
    } else {
        Err(Error::invalid(format!("params.{key}"), "must be positive"))
    }
}

/// Builds a catalog model from a (possibly partial) parameter map.
pub fn builtin_model(name: &str, given: &Params) -> Result<Model> {
    let params = resolve_params(name, given)?;
    let mut model = match name {
        "cubic_well" => Model::Diffusion(cubic_well_potential().to_diffusion(name, positive(&params, "d")?)),
        "quartic_well" => {
            Model::Diffusion(quartic_well_potential().to_diffusion(name, positive(&params, "d")?))
        }
        "ou" => {
            let pot = PotentialModel {
                u: Arc::new(|x| 0.5 * x * x),
                du: Arc::new(|x| x),
                d2u: Arc::new(|_| 1.0),
                x_min: 0.0,
                x_max: f64::INFINITY,
            };
            let mut m = pot.to_diffusion(name, positive(&params, "d")?);
            m.equilibria = vec![Equilibrium::new("stable", vec![0.0], Stability::Stable)];
            m.potential = None;
            Model::Diffusion(m)
        }
        "sis" => Model::Jump(sis(positive(&params, "r0")?, positive(&params, "k")?)?),
        "allee" => Model::Jump(allee(
            positive(&params, "mu")?,
            positive(&params, "alpha")?,
            positive(&params, "sigma_c")?,
            positive(&params, "k")?,
        )?),
        "laser3d" => Model::Diffusion(laser3d(&params)?),
        "filter3d" => Model::Diffusion(filter3d(&params)?),
        other => return Err(Error::UnknownModel(other.to_string())),
    };
    match &mut model {
        Model::Diffusion(m) => m.params = params,
        Model::Jump(m) => m.params = params,
    }
    Ok(model)
}

/// U(x) = -x³ + 3x/4: well at -1/2, barrier top at +1/2, ΔU = 1/2.
pub fn cubic_well_potential() -> PotentialModel {
    PotentialModel {
        u: Arc::new(|x| -x * x * x + 0.75 * x),
        du: Arc::new(|x| -3.0 * x * x + 0.75),
        d2u: Arc::new(|x| -6.0 * x),
        x_min: -0.5,
        x_max: 0.5,
    }
}

/// U(x) = x⁴/4 - x²/2: wells at ±1, barrier 1/4 at the origin.
pub fn quartic_well_potential() -> PotentialModel {
    PotentialModel {
        u: Arc::new(|x| 0.25 * x.powi(4) - 0.5 * x * x),
        du: Arc::new(|x| x.powi(3) - x),
        d2u: Arc::new(|x| 3.0 * x * x - 1.0),
        x_min: -1.0,
        x_max: 0.0,
    }
}

fn sis(r0: f64, k: f64) -> Result<JumpModel> {
    if k < 1.0 {
        return Err(Error::invalid("params.k", "population size must be at least 1"));
    }
    let infect = Reaction {
        label: "infection".into(),
        increment: vec![1],
        rate: Arc::new(move |s| {
            let i = s[0] as f64;
            r0 * i * (k - i) / k
        }),
        w: Arc::new(move |x| r0 * (1.0 - x[0]) * x[0]),
        w_grad: Arc::new(move |x, g| g[0] = r0 * (1.0 - 2.0 * x[0])),
        u: Some(Arc::new(|_| 0.0)),
    };
    let recover = Reaction {
        label: "recovery".into(),
        increment: vec![-1],
        rate: Arc::new(|s| s[0] as f64),
        w: Arc::new(|x| x[0]),
        w_grad: Arc::new(|_, g| g[0] = 1.0),
        u: Some(Arc::new(|_| 0.0)),
    };
    let mut equilibria = vec![Equilibrium::new(
        "extinct",
        vec![0.0],
        if r0 > 1.0 {
            Stability::Unstable
        } else {
            Stability::Stable
        },
    )];
    if r0 > 1.0 {
        equilibria.push(Equilibrium::new(
            "endemic",
            vec![1.0 - 1.0 / r0],
            Stability::Stable,
        ));
    }
    Ok(JumpModel {
        name: "sis".into(),
        dim: 1,
        system_size: k,
        reactions: vec![infect, recover],
        absorbing_states: vec![vec![0]],
        equilibria,
        params: Params::new(),
    })
}

/// Interior fixed points of the Allee mean field.
pub fn allee_fixed_points(mu: f64, alpha: f64, sigma_c: f64) -> Result<(f64, f64)> {
    let disc = 9.0 * alpha * alpha - 24.0 * sigma_c * mu;
    if disc < 0.0 {
        return Err(Error::invalid(
            "params",
            "9 alpha^2 - 24 sigma_c mu < 0: no interior fixed points",
        ));
    }
    let r = disc.sqrt();
    Ok((
        (3.0 * alpha - r) / (2.0 * sigma_c),
        (3.0 * alpha + r) / (2.0 * sigma_c),
    ))
}

fn allee(mu: f64, alpha: f64, sigma_c: f64, k: f64) -> Result<JumpModel> {
    let (x1, x2) = allee_fixed_points(mu, alpha, sigma_c)?;
    let birth = Reaction {
        label: "birth".into(),
        increment: vec![1],
        rate: Arc::new(move |s| {
            let n = s[0] as f64;
            alpha * n * (n - 1.0) / (2.0 * k)
        }),
        w: Arc::new(move |x| 0.5 * alpha * x[0] * x[0]),
        w_grad: Arc::new(move |x, g| g[0] = alpha * x[0]),
        u: Some(Arc::new(move |x| -0.5 * alpha * x[0])),
    };
    let death = Reaction {
        label: "death".into(),
        increment: vec![-1],
        rate: Arc::new(move |s| {
            let n = s[0] as f64;
            mu * n + sigma_c * n * (n - 1.0) * (n - 2.0) / (6.0 * k * k)
        }),
        w: Arc::new(move |x| mu * x[0] + sigma_c * x[0].powi(3) / 6.0),
        w_grad: Arc::new(move |x, g| g[0] = mu + 0.5 * sigma_c * x[0] * x[0]),
        u: Some(Arc::new(move |x| -0.5 * sigma_c * x[0] * x[0])),
    };
    Ok(JumpModel {
        name: "allee".into(),
        dim: 1,
        system_size: k,
        reactions: vec![birth, death],
        absorbing_states: vec![vec![0]],
        equilibria: vec![
            Equilibrium::new("extinct", vec![0.0], Stability::Stable),
            Equilibrium::new("threshold", vec![x1], Stability::Unstable),
            Equilibrium::new("capacity", vec![x2], Stability::Stable),
        ],
        params: Params::new(),
    })
}

fn laser3d(params: &Params) -> Result<DiffusionModel> {
    let lp = LaserParams::from_params(params)?;
    let noise = positive(params, "d")?;
    let equilibria = laser::laser_equilibria(&lp, &[0, 1])?;
    let mut m = DiffusionModel::new(
        "laser3d",
        3,
        3,
        noise,
        Arc::new(move |x, out| laser::laser_drift(&lp, x, out)),
        Arc::new(laser::soliton_sigma),
    );
    m.equilibria = equilibria;
    m.domain = Some(amplitude_positive());
    Ok(m)
}

fn filter3d(params: &Params) -> Result<DiffusionModel> {
    let c2 = positive(params, "c2")?;
    let c1 = params.get("c1").copied().unwrap_or(-c2 / 3.0);
    if c1 >= 0.0 {
        return Err(Error::invalid("params.c1", "compensatory gain requires c1 < 0"));
    }
    let noise = positive(params, "d")?;
    let a_eq = (-3.0 * c1 / c2).sqrt();
    let mut m = DiffusionModel::new(
        "filter3d",
        3,
        3,
        noise,
        Arc::new(move |x, out| laser::filter_drift(c1, c2, x, out)),
        Arc::new(laser::soliton_sigma),
    );
    m.equilibria = vec![Equilibrium::new(
        "pulse",
        vec![a_eq, 0.0, 0.0],
        Stability::Stable,
    )];
    m.domain = Some(amplitude_positive());
    Ok(m)
}

fn amplitude_positive() -> Domain {
    Domain::Box {
        lo: vec![0.0, f64::NEG_INFINITY, f64::NEG_INFINITY],
        hi: vec![f64::INFINITY; 3],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(pairs: &[(&str, f64)]) -> Params {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn cubic_well_equilibria_and_barrier() {
        let m = builtin_model("cubic_well", &Params::new())
            .unwrap()
            .into_diffusion()
            .unwrap();
        assert_eq!(m.equilibrium("stable").unwrap().state, vec![-0.5]);
        assert_eq!(m.equilibrium("saddle").unwrap().state, vec![0.5]);
        assert!((m.potential.unwrap().barrier() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn sis_endemic_state() {
        let m = builtin_model("sis", &params(&[("r0", 1.5), ("k", 100.0)]))
            .unwrap()
            .into_jump()
            .unwrap();
        let e = m.equilibrium("endemic").unwrap().state[0];
        assert!((e - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn sis_requires_r0() {
        let err = builtin_model("sis", &params(&[("k", 100.0)])).unwrap_err();
        assert!(err.to_string().contains("r0"), "{err}");
        assert_eq!(err.exit_code(), 2);
        assert!(builtin_model("sis", &params(&[("r0", 1.5), ("k", 10.0), ("q", 1.0)])).is_err());
        assert!(builtin_model("nope", &Params::new()).is_err());
    }

    #[test]
    fn allee_fixed_points_match() {
        let (x1, x2) = allee_fixed_points(0.2, 1.5, 3.0).unwrap();
        assert!((x1 - 0.346_887_112_6).abs() < 1e-9);
        assert!((x2 - 1.153_112_887_4).abs() < 1e-9);
        let err = builtin_model("allee", &params(&[("mu", 1.0)])).unwrap_err();
        assert!(err.to_string().contains("no interior fixed points"));
    }

    #[test]
    fn absorbing_zero_has_no_outflow() {
        for m in [
            builtin_model("sis", &params(&[("r0", 1.5), ("k", 50.0)])),
            builtin_model("allee", &Params::new()),
        ] {
            let m = m.unwrap().into_jump().unwrap();
            let mut a = vec![0.0; m.reactions.len()];
            m.propensities_into(&[0], &mut a);
            assert!(a.iter().all(|&v| v == 0.0));
            assert!(m.is_absorbing(&[0]));
        }
    }

    #[test]
    fn filter_pulse_is_fixed() {
        let m = builtin_model("filter3d", &Params::new())
            .unwrap()
            .into_diffusion()
            .unwrap();
        let f = m.drift(&[1.0, 0.0, 0.0]);
        assert!(f.iter().all(|v| v.abs() < 1e-15));
    }

    proptest! {
        #[test]
        fn potential_drift_matches_gradient(x in -2.0f64..2.0) {
            for pot in [cubic_well_potential(), quartic_well_potential()] {
                let m = pot.to_diffusion("w", 1.0);
                let h = 1e-5;
                let fd = ((pot.u)(x + h) - (pot.u)(x - h)) / (2.0 * h);
                prop_assert!((m.drift(&[x])[0] + fd).abs() < 1e-6);
            }
        }

        #[test]
        fn sis_mean_field(i in 0.0f64..1.0, r0 in 0.5f64..4.0) {
            let m = builtin_model("sis", &params(&[("r0", r0), ("k", 100.0)])).unwrap().into_jump().unwrap();
            let v = m.mean_field(&[i])[0];
            prop_assert!((v - (r0 * (1.0 - i) * i - i)).abs() < 1e-14);
        }

        #[test]
        fn allee_mean_field(x in 0.0f64..2.0) {
            let m = builtin_model("allee", &Params::new()).unwrap().into_jump().unwrap();
            let v = m.mean_field(&[x])[0];
            prop_assert!((v - (1.5 * x * x / 2.0 - 0.2 * x - 3.0 * x.powi(3) / 6.0)).abs() < 1e-14);
        }

        #[test]
        fn scaled_rates_reconstruct_exact(n in 0i64..=200) {
            // W(Kx) = K w(x) + u(x) + O(1/K)
            for m in [
                builtin_model("sis", &params(&[("r0", 1.5), ("k", 200.0)])).unwrap().into_jump().unwrap(),
                builtin_model("allee", &params(&[("k", 200.0)])).unwrap().into_jump().unwrap(),
            ] {
                let k = m.system_size;
                let x = [n as f64 / k];
                for r in &m.reactions {
                    let exact = (r.rate)(&[n]);
                    prop_assert!(exact >= 0.0);
                    let approx = k * (r.w)(&x) + r.u.as_ref().map_or(0.0, |u| u(&x));
                    prop_assert!((exact - approx).abs() <= 1.0 * x[0] + 1e-9, "{} n={n}", r.label);
                }
            }
        }
    }
}
