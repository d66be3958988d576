//! Adaptive Gauss–Kronrod (7/15 point) quadrature with global bisection.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            abs: 1e-10,
            rel: 1e-12,
            max_intervals: 4000,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (j, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = half * x;
        let pair = f(center - dx) + f(center + dx);
        kronrod += w * pair;
        // odd Kronrod nodes are the Gauss nodes
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    Segment {
        a,
        b,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}

/// Integrates `f` over `[a, b]` (either orientation) to the requested tolerance.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if b < a {
        return integrate(f, b, a, tol).map(|v| -v);
    }
    let mut segments = vec![kronrod(&f, a, b)];
    loop {
        let total: f64 = segments.iter().map(|s| s.value).sum();
        let error: f64 = segments.iter().map(|s| s.error).sum();
        if !total.is_finite() || !error.is_finite() {
            return Err(Error::Quadrature {
                a,
                b,
                estimate: f64::NAN,
            });
        }
        if error <= tol.abs.max(tol.rel * total.abs()) {
            return Ok(total);
        }
        if segments.len() >= tol.max_intervals {
            return Err(Error::Quadrature { a, b, estimate: error });
        }
        let (worst, _) = segments
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .expect("nonempty");
        let s = segments.swap_remove(worst);
        let mid = 0.5 * (s.a + s.b);
        if mid <= s.a || mid >= s.b {
            return Err(Error::Quadrature { a, b, estimate: error });
        }
        segments.push(kronrod(&f, s.a, mid));
        segments.push(kronrod(&f, mid, s.b));
    }
}

/// Integrates with the default tolerance (absolute 1e-10).
pub fn integrate_default<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> Result<f64> {
    integrate(f, a, b, Tolerance::default())
}

/// Integrates a function that may be logarithmically singular at either
/// endpoint. A non-finite endpoint value is replaced by the integral up to an
/// `eps` offset plus the exact integral of `c + s ln|x - x_end|` over the gap.
pub fn integrate_log_endpoints<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    eps: f64,
    tol: Tolerance,
) -> Result<f64> {
    if b < a {
        return integrate_log_endpoints(f, b, a, eps, tol).map(|v| -v);
    }
    // Near a singular endpoint the integrand is modelled as c + s·ln(distance),
    // with s fitted from two offset samples. Removable 0/0 limits give s ≈ 0.
    let tail = |base: f64, dir: f64| {
        let f1 = f(base + dir * eps);
        let s = (f(base + dir * 2.0 * eps) - f1) / std::f64::consts::LN_2;
        eps * (f1 - s)
    };
    let mut lo = a;
    let mut hi = b;
    let mut correction = 0.0;
    if !f(a).is_finite() {
        lo = a + eps;
        correction += tail(a, 1.0);
    }
    if !f(b).is_finite() {
        hi = b - eps;
        correction += tail(b, -1.0);
    }
    Ok(integrate(f, lo, hi, tol)? + correction)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let v = integrate_default(|x| 3.0 * x * x - 0.75, -0.5, 0.5).unwrap();
        assert!((v - (0.25 - 0.75)).abs() < 1e-14);
    }

    #[test]
    fn reversed_limits_flip_sign() {
        let fwd = integrate_default(f64::exp, 0.0, 1.0).unwrap();
        let rev = integrate_default(f64::exp, 1.0, 0.0).unwrap();
        assert!((fwd + rev).abs() < 1e-15);
        assert!((fwd - (std::f64::consts::E - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn sharp_peak() {
        let d = 0.01;
        let v = integrate_default(|x: f64| (-x * x / d).exp(), -3.0, 3.0).unwrap();
        assert!((v - (std::f64::consts::PI * d).sqrt()).abs() < 1e-10);
    }

    #[test]
    fn log_singularity_correction() {
        // ∫_0^1 -ln x dx = 1
        let v = integrate_log_endpoints(|x: f64| -x.ln(), 0.0, 1.0, 1e-8, Tolerance::default())
            .unwrap();
        assert!((v - 1.0).abs() < 1e-9, "{v}");
        // ∫_0^1 3 ln x dx = -3 at the upper end too
        let v = integrate_log_endpoints(|x: f64| 3.0 * (1.0 - x).ln(), 0.0, 1.0, 1e-8, Tolerance::default())
            .unwrap();
        assert!((v + 3.0).abs() < 1e-9, "{v}");
    }

    #[test]
    fn removable_endpoint_is_not_corrected() {
        // sin(x)/x is 0/0 at the origin
        let v = integrate_log_endpoints(|x: f64| x.sin() / x, 0.0, 1.0, 1e-8, Tolerance::default())
            .unwrap();
        assert!((v - 0.946_083_070_367_183_0).abs() < 1e-12, "{v}");
    }
}
