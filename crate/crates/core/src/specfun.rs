//! Complex log-Gamma, real-order Bessel J and Wright's generalized Bessel series.

use crate::quadrature::C64;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Clone, Copy, Error, PartialEq)]
pub enum SpecfunError {
    #[error("log-Gamma pole at nonpositive integer {0}")]
    PoleAtNonpositiveInteger(f64),
}

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;
const LN_PI: f64 = 1.144_729_885_849_400_2;
const STIRLING_MIN: f64 = 10.0;

// B_{2k} / (2k (2k-1)) for k = 1..10
const STIRLING: [f64; 10] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360360.0,
    1.0 / 156.0,
    -3617.0 / 122400.0,
    43867.0 / 244188.0,
    -174611.0 / 125400.0,
];

fn is_pole(z: C64) -> bool {
    z.im == 0.0 && z.re <= 0.0 && z.re == z.re.round()
}

fn stirling(z: C64) -> C64 {
    let zi = z.inv();
    let zi2 = zi * zi;
    let mut series = C64::new(0.0, 0.0);
    let mut p = zi;
    for c in STIRLING {
        series += p * c;
        p *= zi2;
    }
    (z - 0.5) * z.ln() - z + HALF_LN_2PI + series
}

/// Principal branch on Re z >= 1/2, by upward shift into the Stirling region.
fn log_gamma_right(z: C64) -> C64 {
    if z.norm() >= STIRLING_MIN {
        return stirling(z);
    }
    let n = (STIRLING_MIN - z.re).ceil().max(0.0) as usize;
    let mut acc = C64::new(0.0, 0.0);
    for k in 0..n {
        acc += (z + k as f64).ln();
    }
    stirling(z + n as f64) - acc
}

/// `log Γ(z)` on the closed upper half-plane with `Re z < 1/2`. The log-sine
/// `-iπz + log(1 - e^{2πiz}) - log(2i) + iπ` is analytic for `Im z > 0`, and
/// with it the reflection formula lands on the principal branch exactly.
fn log_gamma_reflected_upper(z: C64) -> C64 {
    let l1g = log_gamma_right(1.0 - z);
    if z.im == 0.0 {
        // limit from above: arg Γ(x) = -π ceil(-x)
        let s = (PI * z.re).sin().abs().ln();
        return C64::new(LN_PI - s - l1g.re, -PI * (-z.re).ceil());
    }
    let e = (C64::new(0.0, 2.0 * PI) * z).exp();
    let log_sin = C64::new(0.0, -PI) * z + (1.0 - e).ln() - C64::new(2.0f64.ln(), 0.5 * PI) + C64::new(0.0, PI);
    LN_PI - log_sin - l1g
}

/// Principal branch of `log Γ(z)`, analytic off `(-∞, 0]`.
pub fn log_gamma(z: C64) -> Result<C64, SpecfunError> {
    if is_pole(z) {
        return Err(SpecfunError::PoleAtNonpositiveInteger(z.re));
    }
    if z.re >= 0.5 {
        return Ok(log_gamma_right(z));
    }
    if z.im >= 0.0 {
        Ok(log_gamma_reflected_upper(z))
    } else {
        Ok(log_gamma_reflected_upper(z.conj()).conj())
    }
}

/// `log Γ(z)` for callers that already excluded the poles.
pub(crate) fn lgamma(z: C64) -> C64 {
    match log_gamma(z) {
        Ok(v) => v,
        Err(_) => C64::new(f64::INFINITY, 0.0),
    }
}

/// `1/Γ(x)` for real `x`, zero at the poles.
pub fn rgamma(x: f64) -> f64 {
    if x <= 0.0 && x == x.round() {
        return 0.0;
    }
    (-lgamma(C64::new(x, 0.0))).exp().re
}

/// `Γ(x)` for real `x` away from the poles.
pub fn gamma(x: f64) -> f64 {
    lgamma(C64::new(x, 0.0)).exp().re
}

/// `J_ν(x)` by its power series; any real order, `x >= 0`.
pub fn bessel_j(nu: f64, x: f64) -> f64 {
    if nu < 0.0 && nu == nu.round() {
        let n = -nu;
        let s = if (n as i64) % 2 == 0 { 1.0 } else { -1.0 };
        return s * bessel_j(n, x);
    }
    if x == 0.0 {
        return if nu == 0.0 {
            1.0
        } else if nu > 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
    }
    let h = 0.5 * x;
    let q = h * h;
    let mut term = (nu * h.ln()).exp() * rgamma(nu + 1.0);
    let mut sum = term;
    let mut k = 0.0;
    loop {
        k += 1.0;
        term *= -q / (k * (k + nu));
        sum += term;
        if k > h && term.abs() < 1e-17 * sum.abs().max(1e-300) {
            break;
        }
        if k > 500.0 {
            break;
        }
    }
    sum
}

/// `J_ν'(x) = (J_{ν-1}(x) - J_{ν+1}(x))/2`.
pub fn bessel_j_prime(nu: f64, x: f64) -> f64 {
    0.5 * (bessel_j(nu - 1.0, x) - bessel_j(nu + 1.0, x))
}

/// Wright's generalized Bessel function `Σ (-x)^k / (k! Γ(ak+b))`, `a > 0`.
pub fn wright_bessel(a: f64, b: f64, x: f64) -> f64 {
    assert!(a > 0.0, "wright_bessel needs a > 0");
    let mut sum = rgamma(b);
    if x == 0.0 {
        return sum;
    }
    let lx = x.abs().ln();
    let sign_step = if x > 0.0 { -1.0 } else { 1.0 };
    let mut sign = 1.0;
    let mut log_fact = 0.0;
    let mut prev = f64::INFINITY;
    for k in 1..2000 {
        let kf = k as f64;
        sign *= sign_step;
        log_fact += kf.ln();
        let t = a * kf + b;
        let term = if t <= 0.0 && t == t.round() {
            0.0
        } else {
            let lg = lgamma(C64::new(t, 0.0));
            let mag = (kf * lx - log_fact - lg.re).exp();
            // sign of Γ(t) for negative t comes from the imaginary part
            let gsign = if (lg.im / PI).round() as i64 % 2 == 0 { 1.0 } else { -1.0 };
            sign * mag * gsign
        };
        sum += term;
        let m = term.abs();
        if m < 1e-16 * (sum.abs() + 1.0) && m <= prev {
            break;
        }
        prev = m;
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_gamma_examples() {
        assert!(log_gamma(C64::new(1.0, 0.0)).unwrap().norm() < 1e-15);
        let v = log_gamma(C64::new(0.5, 0.0)).unwrap();
        assert!((v.re - 0.5 * PI.ln()).abs() < 1e-14 && v.im.abs() < 1e-15);
        assert!(matches!(log_gamma(C64::new(-3.0, 0.0)), Err(SpecfunError::PoleAtNonpositiveInteger(_))));
        assert!(log_gamma(C64::new(0.0, 0.0)).is_err());
    }

    #[test]
    fn negative_real_axis_sign() {
        // Γ(-1/2) = -2√π
        let g = log_gamma(C64::new(-0.5, 0.0)).unwrap().exp();
        assert!((g.re + 2.0 * PI.sqrt()).abs() < 1e-13, "{g}");
        assert!((gamma(-1.5) - 4.0 * PI.sqrt() / 3.0).abs() < 1e-13);
        assert_eq!(rgamma(-2.0), 0.0);
    }

    #[test]
    fn large_imaginary_part() {
        // |Γ(1/2 + iy)|^2 = π / cosh(πy)
        for y in [10.0, 100.0, 500.0] {
            let l = log_gamma(C64::new(0.5, y)).unwrap();
            let want = 0.5 * (PI.ln() - (PI * y - (2.0f64).ln() + (1.0 + (-2.0 * PI * y).exp()).ln()));
            assert!((l.re - want).abs() < 1e-12 * want.abs().max(1.0), "{y}: {} vs {want}", l.re);
        }
    }

    #[test]
    fn far_left_half_plane() {
        // reference values from mpmath.loggamma
        let v = log_gamma(C64::new(-40.7, 3.0)).unwrap();
        assert!((v - C64::new(-120.39536264585158, -118.27558246341466)).norm() < 1e-11, "{v}");
        let v = log_gamma(C64::new(-5.2, -0.01)).unwrap();
        assert!((v - C64::new(-3.457593312254134, 18.788939297250535)).norm() < 1e-12, "{v}");
        assert!(log_gamma(C64::new(-4.5e15, 2.0e7)).unwrap().re.is_finite());
    }

    #[test]
    fn bessel_examples() {
        assert_eq!(bessel_j(0.0, 0.0), 1.0);
        assert_eq!(bessel_j(2.0, 0.0), 0.0);
        assert!((bessel_j(-1.0, 1.0) + bessel_j(1.0, 1.0)).abs() < 1e-16);
        // J_{1/2}(x) = sqrt(2/(πx)) sin x
        let x: f64 = 3.0;
        assert!((bessel_j(0.5, x) - (2.0 / (PI * x)).sqrt() * x.sin()).abs() < 1e-14);
    }

    #[test]
    fn wright_reduces_to_reciprocal_gamma_at_zero() {
        assert!((wright_bessel(1.0, 1.0, 0.0) - 1.0).abs() < 1e-16);
        assert!((wright_bessel(2.0, 3.0, 0.0) - 0.5).abs() < 1e-16);
    }
}
