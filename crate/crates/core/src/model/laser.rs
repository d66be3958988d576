//! Reduced soliton models: the actively modulated laser and the filtered
//! transmission line. State is `(A, Ω, Ξ)`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::Serialize;

use super::{Equilibrium, Params, Stability};
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LaserParams {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub d1: f64,
    pub d2: f64,
    pub omega: f64,
}

impl LaserParams {
    pub fn from_params(p: &Params) -> Result<Self> {
        let get = |k: &str| {
            p.get(k)
                .copied()
                .ok_or_else(|| Error::MissingParameter {
                    model: "laser3d".into(),
                    field: k.into(),
                })
        };
        Ok(Self {
            c0: get("c0")?,
            c1: get("c1")?,
            c2: get("c2")?,
            d1: get("d1")?,
            d2: get("d2")?,
            omega: get("omega")?,
        })
    }

    pub fn with_omega(self, omega: f64) -> Self {
        Self { omega, ..self }
    }
}

/// `z / sinh z`, continuous through 0.
fn z_csch(z: f64) -> f64 {
    if z.abs() < 1e-8 {
        1.0 - z * z / 6.0
    } else {
        z / z.sinh()
    }
}

/// `z coth z`, continuous through 0.
fn z_coth(z: f64) -> f64 {
    if z.abs() < 1e-8 {
        1.0 + z * z / 3.0
    } else {
        z / z.tanh()
    }
}

/// Amplitude of the trapping force: π c0 ω² csch(πω/2A) / (2A³).
fn trap_strength(p: &LaserParams, a: f64) -> f64 {
    // ω csch(πω/2A) = (2A/π) z csch z with z = πω/2A
    let z = PI * p.omega / (2.0 * a);
    PI * p.c0 * p.omega * (2.0 * a / PI) * z_csch(z) / (2.0 * a.powi(3))
}

pub fn laser_drift(p: &LaserParams, x: &[f64], out: &mut [f64]) {
    let (a, om, xi) = (x[0], x[1], x[2]);
    out[0] = -2.0 * p.c1 * a + (4.0 / 3.0 * p.d1 - 2.0 / 3.0 * p.c2) * a.powi(3)
        - 16.0 / 15.0 * p.d2 * a.powi(5)
        - 2.0 * p.c2 * a * om * om;
    out[1] = -4.0 / 3.0 * p.c2 * a * a * om - trap_strength(p, a) * (p.omega * xi).sin();
    out[2] = om;
}

/// Filtered line with compensatory gain: no modulation, no nonlinear gain.
pub fn filter_drift(c1: f64, c2: f64, x: &[f64], out: &mut [f64]) {
    let (a, om) = (x[0], x[1]);
    out[0] = -2.0 * c1 * a - 2.0 / 3.0 * c2 * a.powi(3) - 2.0 * c2 * a * om * om;
    out[1] = -4.0 / 3.0 * c2 * a * a * om;
    out[2] = om;
}

/// Shared noise coefficient σ(x), row-major 3×3.
pub fn soliton_sigma(x: &[f64], out: &mut [f64]) {
    let (a, xi) = (x[0], x[2]);
    let ra = a.sqrt();
    out.fill(0.0);
    out[0] = ra;
    out[4] = (a / 3.0).sqrt();
    out[6] = -xi / ra;
    out[8] = (PI * PI / (12.0 * a.powi(3)) + xi * xi / a).sqrt();
}

/// Both nontrivial amplitudes `(A0+, A0-)`.
pub fn laser_amplitudes(p: &LaserParams) -> Result<(f64, f64)> {
    let b = 2.0 * p.d1 - p.c2;
    let disc = b * b - 96.0 / 5.0 * p.c1 * p.d2;
    if disc < 0.0 {
        return Err(Error::Precondition(
            "negative discriminant: no nontrivial laser equilibria".into(),
        ));
    }
    if p.d2 <= 0.0 {
        return Err(Error::invalid("d2", "must be positive"));
    }
    let scale = 5.0 / (16.0 * p.d2);
    let plus = scale * (b + disc.sqrt());
    let minus = scale * (b - disc.sqrt());
    if plus <= 0.0 {
        return Err(Error::Precondition("no positive amplitude root".into()));
    }
    Ok((plus.sqrt(), minus.max(0.0).sqrt()))
}

/// Equilibria `(A0±, 0, nπ/ω)` for each `n` in `ns`.
pub fn laser_equilibria(p: &LaserParams, ns: &[i64]) -> Result<Vec<Equilibrium>> {
    let (ap, am) = laser_amplitudes(p)?;
    let mut out = Vec::new();
    for &n in ns {
        let xi = if p.omega == 0.0 {
            0.0
        } else {
            n as f64 * PI / p.omega
        };
        let tag = if n % 2 == 0 {
            Stability::Stable
        } else {
            Stability::Saddle
        };
        out.push(Equilibrium::new(&format!("plus_{n}"), vec![ap, 0.0, xi], tag));
        if am > 0.0 {
            out.push(Equilibrium::new(
                &format!("minus_{n}"),
                vec![am, 0.0, xi],
                Stability::Saddle,
            ));
        }
    }
    Ok(out)
}

/// Linearization about `(A0, 0, nπ/ω)` in the closed form.
pub fn laser_linearization(p: &LaserParams, a0: f64, n: i64) -> DMatrix<f64> {
    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
    let mut m = DMatrix::zeros(3, 3);
    m[(0, 0)] = 8.0 * p.c1 - 4.0 / 3.0 * (2.0 * p.d1 - p.c2) * a0 * a0;
    m[(1, 1)] = -4.0 / 3.0 * p.c2 * a0 * a0;
    m[(1, 2)] = -sign * p.omega * trap_strength(p, a0);
    m[(2, 1)] = 1.0;
    m
}

/// Stationary covariance of the linearized dynamics about the `A0+`
/// equilibrium with index `n`, from `M Σ + Σ M^T + D σσ^T = 0`.
pub fn laser_stationary_covariance(p: &LaserParams, noise: f64, n: i64) -> Result<DMatrix<f64>> {
    let (a0, _) = laser_amplitudes(p)?;
    let xi = if p.omega == 0.0 {
        0.0
    } else {
        n as f64 * PI / p.omega
    };
    let m = laser_linearization(p, a0, n);
    let q = lyapunov_source(&[a0, 0.0, xi], noise);
    linalg::lyapunov(&m, &q)
}

/// `D σ(x) σ(x)^T` for the soliton noise.
pub fn lyapunov_source(x: &[f64], noise: f64) -> DMatrix<f64> {
    let mut s = [0.0; 9];
    soliton_sigma(x, &mut s);
    let s = DMatrix::from_row_slice(3, 3, &s);
    &s * s.transpose() * noise
}

/// Deterministic part of the slaved phase velocity. The bare `-Ξ` term is
/// kept exactly as the reduction states it, even though its units differ
/// from the other terms.
pub fn laser_phase_drift(state: &[f64], p: &LaserParams) -> Result<f64> {
    let (a, om, xi) = (state[0], state[1], state[2]);
    if !(a > 0.0) {
        return Err(Error::invalid("A", "amplitude must be positive"));
    }
    let z = PI * p.omega / (2.0 * a);
    // π ω c0 csch(z) / A³ = 2 c0 (z csch z) / A²
    let lead = 2.0 * p.c0 * z_csch(z) / (a * a);
    // (πω / 2A²) coth z = (z coth z) / A
    let bracket = 1.0 + z_coth(z) / a;
    Ok(-lead * (p.omega * xi).cos() * bracket - xi + 0.5 * (a * a - om * om))
}
