//! Hamiltonians consumed by the boundary-value solvers.

use nalgebra::DMatrix;

use crate::model::DiffusionModel;

/// `H(x, p)` with first partial derivatives.
pub trait Hamiltonian: Sync {
    fn dim(&self) -> usize;
    fn h(&self, x: &[f64], p: &[f64]) -> f64;
    fn h_x(&self, x: &[f64], p: &[f64], out: &mut [f64]);
    fn h_p(&self, x: &[f64], p: &[f64], out: &mut [f64]);

    /// Jacobian of `(H_p, -H_x)` with respect to `(x, p)`. The default takes
    /// central differences of the first partials.
    fn phase_jacobian(&self, x: &[f64], p: &[f64]) -> DMatrix<f64> {
        let d = self.dim();
        let mut jac = DMatrix::zeros(2 * d, 2 * d);
        let mut z: Vec<f64> = x.iter().chain(p).copied().collect();
        let (mut a, mut b) = (vec![0.0; 2 * d], vec![0.0; 2 * d]);
        for c in 0..2 * d {
            let h = 1e-6 * z[c].abs().max(1.0);
            let z0 = z[c];
            z[c] = z0 + h;
            self.phase_flow(&z, &mut a);
            z[c] = z0 - h;
            self.phase_flow(&z, &mut b);
            z[c] = z0;
            for r in 0..2 * d {
                jac[(r, c)] = (a[r] - b[r]) / (2.0 * h);
            }
        }
        jac
    }

    /// `(H_p, -H_x)` at the phase point `z = (x, p)`.
    fn phase_flow(&self, z: &[f64], out: &mut [f64]) {
        let d = self.dim();
        let (x, p) = z.split_at(d);
        let (hp, hx) = out.split_at_mut(d);
        self.h_p(x, p, hp);
        self.h_x(x, p, hx);
        hx.iter_mut().for_each(|v| *v = -*v);
    }
}

/// `H = ½ pᵀ a(x) p + pᵀ f(x)` for a diffusion with small noise.
pub struct DiffusionHamiltonian<'a> {
    pub model: &'a DiffusionModel,
}

impl<'a> DiffusionHamiltonian<'a> {
    pub fn new(model: &'a DiffusionModel) -> Self {
        Self { model }
    }

    fn quad(&self, x: &[f64], p: &[f64]) -> f64 {
        let a = self.model.diffusion_tensor(x);
        let d = self.model.dim;
        let mut q = 0.0;
        for i in 0..d {
            for j in 0..d {
                q += p[i] * a[(i, j)] * p[j];
            }
        }
        0.5 * q
    }
}

impl Hamiltonian for DiffusionHamiltonian<'_> {
    fn dim(&self) -> usize {
        self.model.dim
    }

    fn h(&self, x: &[f64], p: &[f64]) -> f64 {
        let f = self.model.drift(x);
        self.quad(x, p) + p.iter().zip(&f).map(|(a, b)| a * b).sum::<f64>()
    }

    fn h_x(&self, x: &[f64], p: &[f64], out: &mut [f64]) {
        let d = self.model.dim;
        let jac = self.model.drift_jacobian(x);
        for j in 0..d {
            out[j] = (0..d).map(|i| p[i] * jac[(i, j)]).sum();
        }
        if !self.model.additive_noise {
            let mut xp = x.to_vec();
            for j in 0..d {
                let h = 1e-5 * x[j].abs().max(1.0);
                xp[j] = x[j] + h;
                let up = self.quad(&xp, p);
                xp[j] = x[j] - h;
                let um = self.quad(&xp, p);
                xp[j] = x[j];
                out[j] += (up - um) / (2.0 * h);
            }
        }
    }

    fn h_p(&self, x: &[f64], p: &[f64], out: &mut [f64]) {
        let a = self.model.diffusion_tensor(x);
        self.model.drift_into(x, out);
        let d = self.model.dim;
        for i in 0..d {
            for j in 0..d {
                out[i] += a[(i, j)] * p[j];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_model, Params};

    #[test]
    fn partials_match_differences() {
        let m = builtin_model("filter3d", &Params::new())
            .unwrap()
            .into_diffusion()
            .unwrap();
        let ham = DiffusionHamiltonian::new(&m);
        let x = [1.1, 0.2, -0.3];
        let p = [0.3, -0.5, 0.7];
        let (mut hx, mut hp) = ([0.0; 3], [0.0; 3]);
        ham.h_x(&x, &p, &mut hx);
        ham.h_p(&x, &p, &mut hp);
        for k in 0..3 {
            let e = 1e-6;
            let mut a = x;
            let mut b = x;
            a[k] += e;
            b[k] -= e;
            let fd = (ham.h(&a, &p) - ham.h(&b, &p)) / (2.0 * e);
            assert!((fd - hx[k]).abs() < 1e-6, "x{k}");
            let mut a = p;
            let mut b = p;
            a[k] += e;
            b[k] -= e;
            let fd = (ham.h(&x, &a) - ham.h(&x, &b)) / (2.0 * e);
            assert!((fd - hp[k]).abs() < 1e-6, "p{k}");
        }
        assert_eq!(ham.h(&x, &[0.0; 3]), 0.0);
    }
}
