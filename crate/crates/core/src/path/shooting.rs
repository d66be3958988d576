//! Shooting on the initial momentum for 1D finite-time problems.
//!
//! Only a cross-check for the relaxation solvers: the map from initial
//! momentum to final position is exponentially sensitive for long horizons.

use super::{ActionReport, DiscretizedPath, Parameterization};
use crate::error::{Error, Result};
use crate::hamiltonian::Hamiltonian;

fn flow(ham: &dyn Hamiltonian, z: [f64; 2]) -> [f64; 2] {
    let (mut hp, mut hx) = ([0.0], [0.0]);
    ham.h_p(&[z[0]], &[z[1]], &mut hp);
    ham.h_x(&[z[0]], &[z[1]], &mut hx);
    [hp[0], -hx[0]]
}

fn integrate(ham: &dyn Hamiltonian, x0: f64, l0: f64, t_f: f64, steps: usize) -> Vec<[f64; 2]> {
    let h = t_f / steps as f64;
    let mut z = [x0, l0];
    let mut out = Vec::with_capacity(steps + 1);
    out.push(z);
    let add = |z: [f64; 2], k: [f64; 2], s: f64| [z[0] + s * k[0], z[1] + s * k[1]];
    for _ in 0..steps {
        let k1 = flow(ham, z);
        let k2 = flow(ham, add(z, k1, h / 2.0));
        let k3 = flow(ham, add(z, k2, h / 2.0));
        let k4 = flow(ham, add(z, k3, h));
        z = [
            z[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            z[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ];
        out.push(z);
    }
    out
}

/// Finds `λ(0)` in `[l_lo, l_hi]` so that the RK4 flow of Hamilton's
/// equations lands on `x_f` at `t_f`, by bisection on the miss distance.
pub fn shoot_1d(
    ham: &dyn Hamiltonian,
    x_i: f64,
    x_f: f64,
    t_f: f64,
    bracket: (f64, f64),
    steps: usize,
) -> Result<ActionReport> {
    if ham.dim() != 1 {
        return Err(Error::Precondition("shooting harness is one-dimensional".into()));
    }
    // a trajectory that blows up has overshot
    let miss = |l0: f64| {
        let z = integrate(ham, x_i, l0, t_f, steps);
        let m = z[steps][0] - x_f;
        if m.is_finite() { m } else { f64::INFINITY }
    };
    let (mut lo, mut hi) = bracket;
    let (mut mlo, mhi) = (miss(lo), miss(hi));
    if !(mlo * mhi < 0.0) {
        return Err(Error::Precondition("momentum bracket does not straddle the target".into()));
    }
    let mut iterations = 0;
    while hi - lo > 1e-14 * lo.abs().max(hi.abs()).max(1.0) && iterations < 200 {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        let mm = miss(mid);
        if (mm < 0.0) == (mlo < 0.0) {
            lo = mid;
            mlo = mm;
        } else {
            hi = mid;
        }
    }
    let l0 = 0.5 * (lo + hi);
    let z = integrate(ham, x_i, l0, t_f, steps);
    let h = t_f / steps as f64;
    // S = ∫ (λ ẋ - H) dt, with H conserved along the flow
    let energy = ham.h(&[z[0][0]], &[z[0][1]]);
    let mut action = -energy * t_f;
    for k in 0..steps {
        action += 0.5 * (z[k][1] + z[k + 1][1]) * (z[k + 1][0] - z[k][0]);
    }
    Ok(ActionReport {
        action,
        path: DiscretizedPath {
            parameterization: Parameterization::Time,
            grid: (0..=steps).map(|k| k as f64 * h).collect(),
            nodes: z.iter().map(|p| vec![p[0]]).collect(),
            momenta: Some(z.iter().map(|p| vec![p[1]]).collect()),
            times: None,
        },
        residual: (z[steps][0] - x_f).abs(),
        iterations,
        converged: (z[steps][0] - x_f).abs() < 1e-8,
        max_abs_hamiltonian: Some(energy.abs()),
    })
}

#[cfg(test)]
mod tests {
    use super::super::tests::cubic;
    use super::super::{mam_relax, FinalCondition, MamOptions};
    use super::*;
    use crate::hamiltonian::DiffusionHamiltonian;

    #[test]
    fn agrees_with_relaxation() {
        let m = cubic();
        let ham = DiffusionHamiltonian::new(&m);
        let shot = shoot_1d(&ham, -0.5, 0.5, 2.0, (0.0, 2.0), 4000).unwrap();
        assert!(shot.converged);
        let mam = mam_relax(&m, &[-0.5], &[0.5], &FinalCondition::Fixed, 2.0, &MamOptions { grid_n: 800, ..Default::default() })
            .unwrap();
        assert!((shot.action - mam.action).abs() < 1e-4, "{} {}", shot.action, mam.action);
        let dev = shot
            .path
            .nodes
            .iter()
            .zip(&shot.path.grid)
            .map(|(x, t)| (x[0] - mam.path.coordinate_at(0, *t)).abs())
            .fold(0.0, f64::max);
        assert!(dev < 1e-3, "{dev}");
    }

    #[test]
    fn bad_bracket_is_rejected() {
        let m = cubic();
        let ham = DiffusionHamiltonian::new(&m);
        assert!(shoot_1d(&ham, -0.5, 0.5, 2.0, (-1.0, -0.5), 100).is_err());
    }
}
