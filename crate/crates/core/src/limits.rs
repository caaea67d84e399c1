//! Hard-edge limit kernels: the perturbed Bessel kernel and the
//! Muttalib-Borodin type limit, with their oracles and finite-N scans.

use crate::double::{choose_line, eval_by_sign, Term};
use crate::kernels::{mb_residue_abscissa, mb_residue_sum, mb_residue_term, KernelError, KernelValue, MbResidueForm};
use crate::quadrature::{ClosedCircleContour, Contour, HankelRayContour, Inverted, QuadError, QuadratureSettings, Reversed, C64};
use crate::specfun::{bessel_j, bessel_j_prime, lgamma};
use crate::wcatalog::{WError, WFunction};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

fn log_w(w: &WFunction, z: C64) -> Result<C64, KernelError> {
    match w.log_eval(z) {
        Ok(l) if l.re == f64::NEG_INFINITY => Err(KernelError::ZeroW(z)),
        Ok(l) => Ok(l),
        Err(WError::AtPoleOrZero(p)) => Err(KernelError::ZeroW(p)),
        Err(e) => Err(e.into()),
    }
}

fn no_decay_to_violation(e: KernelError, what: &str) -> KernelError {
    match e {
        KernelError::Quad(QuadError::NoDecay) => KernelError::DecayViolation(what.to_string()),
        e => e,
    }
}

/// `c_minus/(5r)` for `r > 0` with a finite `c_minus`, otherwise `-1`.
pub fn pbessel_default_c(w: &WFunction, r: f64) -> Result<f64, KernelError> {
    let s = w.strip()?;
    Ok(if r > 0.0 && s.c_minus.is_finite() { s.c_minus / (5.0 * r) } else { -1.0 })
}

/// Shared evaluator for the pBessel kernel (`n = None`) and the exactly
/// rescaled finite-N pLUE kernel `(1/4N) K_N(x/4N, x'/4N; r/4N)` (`n = Some(N)`).
/// With `ε = 1/(8N)` the latter has the integrand
/// `((ε-s)/(ε-t))^ν W(rt+rε)/W(rs+rε) ((t+ε)/(t-ε))^N ((s-ε)/(s+ε))^N e^{x's-xt}/(t-s)`
/// times `e^{-(x-x')ε}`; `ε -> 0` gives the pBessel integrand.
fn pbessel_family(
    nu: f64,
    r: f64,
    w: &WFunction,
    n: Option<usize>,
    points: &[(f64, f64)],
    c: f64,
    settings: &QuadratureSettings,
) -> Result<Vec<KernelValue>, KernelError> {
    w.validate()?;
    if !(nu >= 0.0) || !(r >= 0.0) {
        return Err(KernelError::InvalidSpec(format!("need nu >= 0 and r >= 0, got nu = {nu}, r = {r}")));
    }
    let strip = w.strip()?;
    if !strip.contains(0.0) {
        return Err(KernelError::InvalidSpec("the strip of W must contain 0".into()));
    }
    let lo = if r > 0.0 { strip.c_minus / r } else { f64::NEG_INFINITY };
    if !(c < 0.0 && c > lo) {
        return Err(KernelError::InvalidPlan(format!("need {lo} < c < 0, got c = {c}")));
    }
    let eps = n.map_or(0.0, |n| 0.125 / n as f64);
    let nf = n.map_or(0.0, |n| n as f64);
    if eps >= 2.0 * c.abs() / 3.0 {
        return Err(KernelError::InvalidPlan(format!("c = {c} too close to 0 for N = {nf}")));
    }
    let e = C64::new(eps, 0.0);
    let expo = |z: C64| -> C64 {
        match n {
            None => 0.25 / z,
            Some(_) => ((z + e).ln() - (z - e).ln()) * nf,
        }
    };
    let log_a = |s: C64| -> Result<C64, KernelError> { Ok((e - s).ln() * nu - log_w(w, s * r + r * eps)? - expo(s)) };
    let log_b = |t: C64| -> Result<C64, KernelError> { Ok(w.log_eval_continued(t * r + r * eps)? - (e - t).ln() * nu + expo(t)) };

    // s runs over the image under 1/w of a line (or right-bent hyperbola)
    // through Re w = 3/(2c); the straight line is the circle through 0 with
    // centre c/3.
    let a = 1.5 / c;
    let s_probe = |wz: C64| {
        let l = log_a(wz.inv()).ok()? - 2.0 * wz.ln();
        (!l.re.is_nan()).then_some(l)
    };
    let h = choose_line(s_probe, 0.0, a, a.abs(), 0.5).map_err(|e| no_decay_to_violation(e, "s-integrand"))?;
    let u = Inverted(h);
    let t_probe = |t: C64| {
        let l = log_b(t).ok()?;
        (!l.re.is_nan()).then_some(l)
    };
    let integer_nu = nu == nu.round();
    let vals = eval_by_sign(
        &u,
        || vec![Term { coef: C64::new(1.0, 0.0), log_a: &log_a, log_b: &log_b }],
        None,
        points,
        settings,
        |x| -> Result<Box<dyn Contour>, KernelError> {
            if r == 0.0 && x == 0.0 {
                // no decay on the line; close it clockwise around 0 and Σ
                if !integer_nu {
                    return Err(KernelError::Quad(QuadError::NoDecay));
                }
                return Ok(Box::new(Reversed(ClosedCircleContour::new(C64::new(0.0, 0.0), c.abs()))));
            }
            Ok(Box::new(choose_line(t_probe, x, c, c.abs(), 0.5)?))
        },
    )?;
    Ok(vals.into_iter().zip(points).map(|(v, (x, xp))| if eps > 0.0 { v.scaled(C64::new((-(x - xp) * eps).exp(), 0.0)) } else { v }).collect())
}

#[allow(clippy::too_many_arguments)]
pub fn pbessel_eval(nu: f64, r: f64, w: &WFunction, x: f64, xp: f64, c: f64, settings: &QuadratureSettings) -> Result<KernelValue, KernelError> {
    Ok(pbessel_family(nu, r, w, None, &[(x, xp)], c, settings)?[0])
}

pub fn pbessel_eval_batch(
    nu: f64,
    r: f64,
    w: &WFunction,
    points: &[(f64, f64)],
    c: f64,
    settings: &QuadratureSettings,
) -> Result<Vec<KernelValue>, KernelError> {
    pbessel_family(nu, r, w, None, points, c, settings)
}

/// `(1/4N) K_N^{pLUE}(x/4N, x'/4N; τ = r/4N)`, evaluated in the rescaled
/// variables so that it stays well conditioned for large `N`.
#[allow(clippy::too_many_arguments)]
pub fn plue_scaled_eval_batch(
    nu: f64,
    n: usize,
    w: &WFunction,
    r: f64,
    points: &[(f64, f64)],
    c: f64,
    settings: &QuadratureSettings,
) -> Result<Vec<KernelValue>, KernelError> {
    if n == 0 {
        return Err(KernelError::InvalidSpec("N must be at least 1".into()));
    }
    pbessel_family(nu, r, w, Some(n), points, c, settings)
}

/// Hard-edge Bessel kernel `[J_ν(√x)√y J_ν'(√y) - √x J_ν'(√x) J_ν(√y)] / (2(x-y))`,
/// with `[J_ν(√x)² - J_{ν+1}(√x) J_{ν-1}(√x)]/4` on the diagonal.
pub fn bessel_oracle(nu: f64, x: f64, y: f64) -> f64 {
    // fixed argument order keeps K(x, y) == K(y, x) bit for bit
    let (x, y) = if x <= y { (x, y) } else { (y, x) };
    let (sx, sy) = (x.sqrt(), y.sqrt());
    if (x - y).abs() <= 1e-9 * (1.0 + y.abs()) {
        let m = 0.5 * (x + y);
        let s = m.sqrt();
        let j = bessel_j(nu, s);
        return 0.25 * (j * j - bessel_j(nu + 1.0, s) * bessel_j(nu - 1.0, s));
    }
    (bessel_j(nu, sx) * sy * bessel_j_prime(nu, sy) - sx * bessel_j_prime(nu, sx) * bessel_j(nu, sy)) / (2.0 * (x - y))
}

/// Conjugation factor `(x/x')^{ν/2}` between the pBessel kernel at `r = 0` and
/// the symmetric `bessel_oracle`.
pub fn pbessel_gauge(nu: f64, x: f64, xp: f64) -> f64 {
    if nu == 0.0 {
        1.0
    } else {
        (x / xp).powf(0.5 * nu)
    }
}

/// Line abscissa for the MB limit: `η` when `W` is analytic there.
pub fn mb_limit_abscissa(theta: f64, eta: f64, w: &WFunction) -> Result<f64, KernelError> {
    Ok(mb_residue_abscissa(theta, eta, &w.strip()?))
}

fn check_mb(theta: f64, eta: f64, w: &WFunction) -> Result<(), KernelError> {
    w.validate()?;
    if !(theta > 0.0) || !(eta > -theta) {
        return Err(KernelError::InvalidSpec(format!("need theta > 0 and eta > -theta, got {theta}, {eta}")));
    }
    Ok(())
}

/// Loop around `[θ+η, R]` with standoff `δ = min(θ/4, 1/2)` (less if the line
/// would come too close) and `R` where the u-integrand has fallen by `1e-18`
/// relative to its peak, for `y'` up to `yp_max`.
pub fn mb_default_loop(theta: f64, eta: f64, w: &WFunction, yp_max: f64) -> Result<HankelRayContour, KernelError> {
    check_mb(theta, eta, w)?;
    let c = mb_limit_abscissa(theta, eta, w)?;
    let start = theta + eta;
    let delta = (0.25 * theta).min(0.5).min(0.5 * (start - c));
    let lyp = yp_max.max(1.0).ln();
    let env = |re: f64| -> f64 {
        let u = C64::new(re, delta);
        match log_w(w, u) {
            Ok(lw) => (lgamma(1.0 - (u - eta) / theta) - lw).re + re * lyp,
            Err(_) => f64::INFINITY,
        }
    };
    let mut peak = env(start - delta);
    let mut re = start;
    while re < start + 5000.0 {
        let e = env(re);
        if e.is_infinite() && e > 0.0 {
            return Err(KernelError::DecayViolation(format!("u-integrand unbounded at Re u = {re}")));
        }
        peak = peak.max(e);
        if re > start + 1.0 && e < peak + (1e-18f64).ln() {
            return Ok(HankelRayContour::new(start, delta, re));
        }
        re += 0.25;
    }
    Err(KernelError::DecayViolation("u-integrand does not decay along the loop".into()))
}

/// `𝕂^{θ,η}(y, y')` at many points, u on `hankel`, v on a line at
/// `mb_limit_abscissa` (bent where that speeds up the decay).
pub fn mb_limit_eval_batch(
    theta: f64,
    eta: f64,
    w: &WFunction,
    points: &[(f64, f64)],
    hankel: &HankelRayContour,
    settings: &QuadratureSettings,
) -> Result<Vec<KernelValue>, KernelError> {
    check_mb(theta, eta, w)?;
    hankel.validate()?;
    let c = mb_limit_abscissa(theta, eta, w)?;
    if hankel.ray_start > theta + eta || hankel.ray_start - hankel.standoff <= c {
        return Err(KernelError::InvalidPlan(format!("loop must start at or left of {} and stay right of the line at {c}", theta + eta)));
    }
    if let Some((y, yp)) = points.iter().find(|(y, yp)| !(*y > 0.0 && *yp > 0.0)) {
        return Err(KernelError::InvalidSpec(format!("need y, y' > 0, got ({y}, {yp})")));
    }
    let log_a = |u: C64| -> Result<C64, KernelError> { Ok(lgamma(1.0 - (u - eta) / theta) - log_w(w, u)?) };
    let log_b = |v: C64| -> Result<C64, KernelError> { Ok(w.log_eval_continued(v)? - lgamma(1.0 - (v - eta) / theta)) };
    let probe = |v: C64| {
        let l = w.log_eval_continued(v).ok()? - lgamma(1.0 - (v - eta) / theta);
        (!l.re.is_nan()).then_some(l)
    };
    check_line_decay(theta, eta, w, c)?;
    let logs: Vec<(f64, f64)> = points.iter().map(|(y, yp)| (y.ln(), yp.ln())).collect();
    let vals = eval_by_sign(
        hankel,
        || vec![Term { coef: C64::new(1.0, 0.0), log_a: &log_a, log_b: &log_b }],
        None,
        &logs,
        settings,
        |x| choose_line(probe, x, c, 1.0, 0.5).map_err(|e| no_decay_to_violation(e, "v-integrand of the MB limit")),
    )?;
    Ok(vals.into_iter().zip(points).map(|(v, (y, _))| v.scaled(C64::new(1.0 / y, 0.0))).collect())
}

/// Samples `|W(v)/Γ(1-(v-η)/θ)| / |v - θ - η|` on the line `c + iℝ`; it must
/// decrease between heights 10 and 160.
fn check_line_decay(theta: f64, eta: f64, w: &WFunction, c: f64) -> Result<(), KernelError> {
    let u0 = theta + eta;
    let mag = |t: f64| -> f64 {
        let v = C64::new(c, t);
        match w.log_eval_continued(v) {
            Ok(l) => (l - lgamma(1.0 - (v - eta) / theta) - (v - u0).ln()).re,
            Err(_) => f64::INFINITY,
        }
    };
    let samples: Vec<f64> = [10.0, 20.0, 40.0, 80.0, 160.0].iter().flat_map(|&t| [mag(t), mag(-t)]).collect();
    let grows = samples.chunks(2).zip(samples.chunks(2).skip(1)).any(|(a, b)| b[0] > a[0] + 1e-9 || b[1] > a[1] + 1e-9);
    if grows {
        return Err(KernelError::DecayViolation(format!("W(v)/Γ(1-(v-η)/θ) grows along {c} + iℝ for θ = {theta}")));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn mb_limit_eval(
    theta: f64,
    eta: f64,
    w: &WFunction,
    y: f64,
    yp: f64,
    hankel: &HankelRayContour,
    settings: &QuadratureSettings,
) -> Result<KernelValue, KernelError> {
    Ok(mb_limit_eval_batch(theta, eta, w, &[(y, yp)], hankel, settings)?[0])
}

/// Partial sum of the residue series of the MB limit up to `k_max`. The last
/// two terms must be below `1e-12` of the sum.
#[allow(clippy::too_many_arguments)]
pub fn mb_limit_residue_series(
    theta: f64,
    eta: f64,
    w: &WFunction,
    y: f64,
    yp: f64,
    k_max: usize,
    settings: &QuadratureSettings,
) -> Result<KernelValue, KernelError> {
    check_mb(theta, eta, w)?;
    if !(y > 0.0 && yp > 0.0) || k_max == 0 {
        return Err(KernelError::InvalidSpec(format!("need y, y' > 0 and k_max >= 1, got ({y}, {yp}), {k_max}")));
    }
    let mut sum = C64::new(0.0, 0.0);
    let mut err = 0.0;
    let mut tail = [0.0f64; 2];
    for k in 1..=k_max {
        let (t, e) = mb_residue_term(theta, eta, w, MbResidueForm::Limit, y, yp, k, settings)?;
        sum += t;
        err += e;
        tail = [tail[1], t.norm()];
    }
    let last = tail[0].max(tail[1]);
    if last > 1e-12 * sum.norm() && last > settings.abs_tol {
        return Err(KernelError::SeriesNotConverged { k_max, last, sum: sum.norm() });
    }
    Ok(KernelValue { value: sum, error_estimate: err + last, nodes_used: 0 })
}

/// `mb_limit_residue_series` with `k_max` doubled from 16 until it converges.
pub fn mb_limit_residue_series_auto(theta: f64, eta: f64, w: &WFunction, y: f64, yp: f64, settings: &QuadratureSettings) -> Result<KernelValue, KernelError> {
    let mut k = 16;
    loop {
        match mb_limit_residue_series(theta, eta, w, y, yp, k, settings) {
            Err(KernelError::SeriesNotConverged { .. }) if k < 1024 => k *= 2,
            r => return r,
        }
    }
}

/// `N^{-1/θ} K_N^{MB}(y N^{-1/θ}, y' N^{-1/θ})` from the rescaled residue sum.
#[allow(clippy::too_many_arguments)]
pub fn mb_scaled_kernel(theta: f64, eta: f64, n: usize, w: &WFunction, y: f64, yp: f64, settings: &QuadratureSettings) -> Result<KernelValue, KernelError> {
    check_mb(theta, eta, w)?;
    if n == 0 {
        return Err(KernelError::InvalidSpec("N must be at least 1".into()));
    }
    mb_residue_sum(theta, eta, w, MbResidueForm::Scaled(n), y, yp, settings)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub sup_error: f64,
    pub ratio_to_previous: Option<f64>,
}

/// For each `N`: `sup |prefactor(N) finite(N, scaled grid) - limit(grid)|`, with
/// the ratio to the previous row.
pub fn convergence_scan<F, L, S, P>(finite: F, limit: L, scaling: S, prefactor: P, n_list: &[usize], grid: &[(f64, f64)]) -> Result<Vec<ScanRow>, KernelError>
where
    F: Fn(usize, &[(f64, f64)]) -> Result<Vec<C64>, KernelError> + Sync,
    L: Fn(&[(f64, f64)]) -> Result<Vec<C64>, KernelError>,
    S: Fn(usize, f64) -> f64 + Sync,
    P: Fn(usize) -> f64 + Sync,
{
    let lim = limit(grid)?;
    let errs: Vec<f64> = n_list
        .par_iter()
        .map(|&n| {
            let scaled: Vec<(f64, f64)> = grid.iter().map(|(x, xp)| (scaling(n, *x), scaling(n, *xp))).collect();
            let f = finite(n, &scaled)?;
            Ok(f.iter().zip(&lim).map(|(a, b)| (a * prefactor(n) - b).norm()).fold(0.0, f64::max))
        })
        .collect::<Result<_, KernelError>>()?;
    Ok(n_list.iter().enumerate().map(|(i, &n)| ScanRow { n, sup_error: errs[i], ratio_to_previous: (i > 0).then(|| errs[i] / errs[i - 1]) }).collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum PluePrefactor {
    /// `1/(4N)`
    #[default]
    Quarter,
    /// `1/N`
    One,
}

impl PluePrefactor {
    pub fn value(self, n: usize) -> f64 {
        match self {
            PluePrefactor::Quarter => 0.25 / n as f64,
            PluePrefactor::One => 1.0 / n as f64,
        }
    }
}

/// pLUE at `τ = r/4N` and coordinates `x/4N` against pBessel. `limit` picks
/// the reference: `None` for `pbessel_eval`, or the Bessel oracle when `r = 0`.
#[allow(clippy::too_many_arguments)]
pub fn plue_pbessel_scan(
    nu: f64,
    r: f64,
    w: &WFunction,
    n_list: &[usize],
    grid: &[(f64, f64)],
    prefactor: PluePrefactor,
    use_bessel_oracle: bool,
    settings: &QuadratureSettings,
) -> Result<Vec<ScanRow>, KernelError> {
    let c = pbessel_default_c(w, r)?;
    let finite = |n: usize, pts: &[(f64, f64)]| -> Result<Vec<C64>, KernelError> {
        let m = 4.0 * n as f64;
        let unscaled: Vec<(f64, f64)> = pts.iter().map(|(x, xp)| (x * m, xp * m)).collect();
        // raw K_N = 4N times the rescaled value
        Ok(plue_scaled_eval_batch(nu, n, w, r, &unscaled, c, settings)?.into_iter().map(|v| v.value * m).collect())
    };
    let limit = |pts: &[(f64, f64)]| -> Result<Vec<C64>, KernelError> {
        if use_bessel_oracle {
            Ok(pts.iter().map(|(x, xp)| C64::new(pbessel_gauge(nu, *x, *xp) * bessel_oracle(nu, *x, *xp), 0.0)).collect())
        } else {
            Ok(pbessel_eval_batch(nu, r, w, pts, c, settings)?.into_iter().map(|v| v.value).collect())
        }
    };
    convergence_scan(finite, limit, |n, x| x / (4.0 * n as f64), |n| prefactor.value(n), n_list, grid)
}

/// MB kernel at coordinates `y N^{-1/θ}` with prefactor `N^{-1/θ}` against the
/// residue series of the limit.
pub fn mb_limit_scan(
    theta: f64,
    eta: f64,
    w: &WFunction,
    n_list: &[usize],
    grid: &[(f64, f64)],
    settings: &QuadratureSettings,
) -> Result<Vec<ScanRow>, KernelError> {
    let finite = |n: usize, pts: &[(f64, f64)]| -> Result<Vec<C64>, KernelError> {
        let s = (n as f64).powf(1.0 / theta);
        // raw K_N(Y, Y') = N^{1/θ} times the rescaled kernel at (Y N^{1/θ}, Y' N^{1/θ})
        pts.iter().map(|(y, yp)| Ok(mb_scaled_kernel(theta, eta, n, w, y * s, yp * s, settings)?.value * s)).collect()
    };
    let limit = |pts: &[(f64, f64)]| -> Result<Vec<C64>, KernelError> {
        pts.iter().map(|(y, yp)| Ok(mb_limit_residue_series_auto(theta, eta, w, *y, *yp, settings)?.value)).collect()
    };
    convergence_scan(finite, limit, |n, y| y / (n as f64).powf(1.0 / theta), |n| (n as f64).powf(-1.0 / theta), n_list, grid)
}
