use biokernel::specfun::{bessel_j, log_gamma, wright_bessel};
use biokernel::C64;
use proptest::prelude::*;
use std::f64::consts::PI;

/// Γ(z) for Re z > 0 as ∫ e^{zs - e^s} ds, trapezoid on a long s-interval.
fn gamma_by_integral(z: C64) -> C64 {
    let (a, b, n) = (-40.0 / z.re.min(1.0), 6.0, 200_000);
    let h = (b - a) / n as f64;
    let mut acc = C64::new(0.0, 0.0);
    for k in 0..=n {
        let s = a + h * k as f64;
        let wgt = if k == 0 || k == n { 0.5 } else { 1.0 };
        acc += (z * s - s.exp()).exp() * wgt;
    }
    acc * h
}

/// J_n(x) = (1/π) ∫_0^π cos(nτ - x sin τ) dτ, periodic trapezoid.
fn bessel_by_integral(n: f64, x: f64) -> f64 {
    let m = 200;
    let h = PI / m as f64;
    let mut acc = 0.0;
    for k in 0..=m {
        let t = h * k as f64;
        let wgt = if k == 0 || k == m { 0.5 } else { 1.0 };
        acc += wgt * (n * t - x * t.sin()).cos();
    }
    acc * h / PI
}

#[test]
fn gamma_one_plus_i() {
    let z = C64::new(1.0, 1.0);
    let g = log_gamma(z).unwrap().exp();
    let oracle = gamma_by_integral(z);
    assert!((g - oracle).norm() < 1e-12, "{g} vs {oracle}");
    assert!((g.re - 0.4980156681).abs() < 1e-10);
    assert!((g.im + 0.1549498283).abs() < 1e-10);
}

#[test]
fn log_gamma_half() {
    let v = log_gamma(C64::new(0.5, 0.0)).unwrap();
    assert!((v.re - 0.5723649429).abs() < 1e-10);
}

#[test]
fn gamma_against_integral_oracle() {
    for z in [C64::new(0.3, 2.0), C64::new(2.5, -1.5), C64::new(7.0, 4.0), C64::new(1.2, 0.0)] {
        let g = log_gamma(z).unwrap().exp();
        let o = gamma_by_integral(z);
        assert!((g - o).norm() < 1e-12 * o.norm().max(1.0), "{z}: {g} vs {o}");
    }
}

#[test]
fn bessel_examples() {
    assert_eq!(bessel_j(0.0, 0.0), 1.0);
    for (n, x, frozen) in [(0.0, 1.0, 0.7651976866), (1.0, 1.0, 0.4400505857), (0.0, 2.0, 0.2238907791)] {
        let j = bessel_j(n, x);
        assert!((j - bessel_by_integral(n, x)).abs() < 1e-13);
        assert!((j - frozen).abs() < 1e-10);
    }
    for x in [5.0, 12.0, 20.0] {
        for n in [0.0, 1.0, 3.0] {
            let e = (bessel_j(n, x) - bessel_by_integral(n, x)).abs();
            // the alternating series loses digits to cancellation near x = 20
            let tol = if x > 12.0 { 5e-9 } else { 1e-11 };
            assert!(e < tol, "J_{n}({x}): {e}");
        }
    }
}

#[test]
fn wright_examples() {
    assert_eq!(wright_bessel(1.0, 1.0, 0.0), 1.0);
    assert!((wright_bessel(1.0, 1.0, 1.0) - 0.2238907791).abs() < 1e-10);
    // a=2, b=1, x=1: plain partial sums at two depths
    let partial = |terms: usize| {
        let mut s = 0.0;
        let mut fact = 1.0;
        for k in 0..terms {
            if k > 0 {
                fact *= k as f64;
            }
            let g: f64 = log_gamma(C64::new(2.0 * k as f64 + 1.0, 0.0)).unwrap().re.exp();
            s += (-1.0f64).powi(k as i32) / (fact * g);
        }
        s
    };
    let (p20, p40) = (partial(20), partial(40));
    assert!((p20 - p40).abs() < 1e-12);
    assert!((wright_bessel(2.0, 1.0, 1.0) - p40).abs() < 1e-13);
}

#[test]
fn bessel_wronskian() {
    let nu = 1.0 / 3.0;
    let h = 1e-5;
    let d = |n: f64, x: f64| (bessel_j(n, x + h) - bessel_j(n, x - h)) / (2.0 * h);
    for x in [1.0, 2.0, 5.0] {
        let w = bessel_j(nu, x) * d(-nu, x) - d(nu, x) * bessel_j(-nu, x);
        let want = -2.0 * (nu * PI).sin() / (PI * x);
        assert!((w - want).abs() < 1e-6, "x={x}: {w} vs {want}");
    }
}

#[test]
fn wright_reduces_to_bessel() {
    for nu in [0.0, 1.0, 2.0] {
        for x in [0.5f64, 1.0, 4.0] {
            let lhs = wright_bessel(1.0, nu + 1.0, x);
            let rhs = x.powf(-nu / 2.0) * bessel_j(nu, 2.0 * x.sqrt());
            assert!((lhs - rhs).abs() < 1e-10, "nu={nu} x={x}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn log_gamma_recurrence(re in 0.1f64..50.0, im in -50.0f64..50.0) {
        let z = C64::new(re, im);
        let d = log_gamma(z + 1.0).unwrap() - log_gamma(z).unwrap() - z.ln();
        prop_assert!(d.norm() < 1e-11, "{z}: {d}");
    }

    #[test]
    fn gamma_reflection(r in 0.0f64..19.9, phi in 0.0f64..(2.0 * PI)) {
        let z = C64::from_polar(r, phi);
        prop_assume!((z.re - z.re.round()).abs() > 1e-3 || z.im.abs() > 1e-3);
        let g = log_gamma(z).unwrap() + log_gamma(1.0 - z).unwrap();
        let s = (z * PI).sin() / PI;
        let prod = g.exp() * s;
        prop_assert!((prod - 1.0).norm() < 1e-10, "{z}: {prod}");
    }

    #[test]
    fn log_gamma_is_principal_on_real_axis(x in 0.05f64..150.0) {
        prop_assert!(log_gamma(C64::new(x, 0.0)).unwrap().im.abs() < 1e-12);
    }
}
