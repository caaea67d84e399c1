//! Finite-N objects: partition functions, the biorthogonal system and the
//! double contour kernels (additive, multiplicative, fully confluent,
//! perturbed LUE and Muttalib-Borodin type).
//!
//! Kernels follow the orientation `K(x, x') = Σ_k φ_k(x') ψ_k(x)`.

use crate::double::{choose_line, eval_by_sign, line_integral, PoleSubtraction, Term};
use crate::quadrature::{ClosedCircleContour, QuadError, QuadratureSettings, C64};
use crate::specfun::lgamma;
use crate::wcatalog::{de_norm, ser_norm, AnalyticStrip, WError, WFunction};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum KernelError {
    #[error(transparent)]
    W(#[from] WError),
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error("no room for a vertical line beside the u-contour: {0}")]
    NoRoom(String),
    #[error("W vanishes at {0}")]
    ZeroW(C64),
    #[error("biorthogonal functions need distinct sources")]
    ConfluentSources,
    #[error("contour meets a branch cut: {0}")]
    BranchCutHit(String),
    #[error("invalid ensemble: {0}")]
    InvalidSpec(String),
    #[error("invalid contour plan: {0}")]
    InvalidPlan(String),
    #[error("integrand does not decay: {0}")]
    DecayViolation(String),
    #[error("series not converged after {k_max} terms (last term {last:e}, partial sum {sum:e})")]
    SeriesNotConverged { k_max: usize, last: f64, sum: f64 },
}

impl From<crate::specfun::SpecfunError> for KernelError {
    fn from(e: crate::specfun::SpecfunError) -> Self {
        KernelError::InvalidSpec(e.to_string())
    }
}

/// Kernel value with the quadrature error estimate and node count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelValue {
    pub value: C64,
    pub error_estimate: f64,
    pub nodes_used: usize,
}

impl KernelValue {
    pub fn scaled(self, f: C64) -> Self {
        Self { value: self.value * f, error_estimate: self.error_estimate * f.norm(), nodes_used: self.nodes_used }
    }
}

fn one() -> usize {
    1
}

/// A source point `b` of multiplicity `mult`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Source {
    #[serde(serialize_with = "ser_norm", deserialize_with = "de_norm")]
    pub b: C64,
    #[serde(default = "one")]
    pub mult: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    #[serde(rename = "W")]
    pub w: WFunction,
    pub sources: Vec<Source>,
}

impl EnsembleSpec {
    pub fn new(w: WFunction, sources: Vec<Source>) -> Self {
        Self { w, sources }
    }

    /// Real sources of multiplicity one.
    pub fn distinct(w: WFunction, a: &[f64]) -> Self {
        Self::new(w, a.iter().map(|&b| Source { b: C64::new(b, 0.0), mult: 1 }).collect())
    }

    /// A single real source of multiplicity `n`.
    pub fn confluent(w: WFunction, b: f64, n: usize) -> Self {
        Self::new(w, vec![Source { b: C64::new(b, 0.0), mult: n }])
    }

    pub fn n(&self) -> usize {
        self.sources.iter().map(|s| s.mult).sum()
    }

    /// Sources `a_1, ..., a_N` with repetitions.
    pub fn points(&self) -> Vec<C64> {
        self.sources.iter().flat_map(|s| std::iter::repeat_n(s.b, s.mult)).collect()
    }

    pub fn is_distinct(&self) -> bool {
        let p = self.points();
        p.iter().enumerate().all(|(i, a)| p[i + 1..].iter().all(|b| a != b))
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        self.w.validate()?;
        if self.sources.is_empty() || self.n() == 0 {
            return Err(KernelError::InvalidSpec("need at least one source".into()));
        }
        let strip = self.w.strip()?;
        for s in &self.sources {
            if s.mult == 0 {
                return Err(KernelError::InvalidSpec("source multiplicity must be at least 1".into()));
            }
            if !strip.contains(s.b.re) {
                return Err(KernelError::W(WError::OutsideStrip(s.b)));
            }
        }
        Ok(())
    }

    /// `∏_j (z - a_j)` as a direct product.
    pub fn source_poly(&self, z: C64) -> C64 {
        self.sources.iter().map(|s| (z - s.b).powi(s.mult as i32)).product()
    }
}

/// Σ (the circle around the sources), the abscissa of the vertical line and,
/// when the line crosses Σ, the half-height of the crossing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContourPlan {
    pub sigma: ClosedCircleContour,
    pub c: f64,
    #[serde(default)]
    pub sine_correction_alpha: Option<f64>,
}

impl ContourPlan {
    /// Plan with the sine correction filled in from the geometry.
    pub fn with_line(sigma: ClosedCircleContour, c: f64) -> Self {
        Self { sigma, c, sine_correction_alpha: crossing_alpha(&sigma, c) }
    }

    /// Checks enclosure, strip containment and the crossing geometry.
    pub fn validate_for(&self, spec: &EnsembleSpec) -> Result<(), KernelError> {
        self.sigma.validate()?;
        let strip = spec.w.strip()?;
        let (ctr, r) = (self.sigma.center, self.sigma.radius);
        for a in spec.points() {
            if (a - ctr).norm() >= r {
                return Err(KernelError::InvalidPlan(format!("source {a} is not inside Σ")));
            }
        }
        if !(strip.contains(ctr.re - r) && strip.contains(ctr.re + r)) {
            return Err(KernelError::InvalidPlan("Σ leaves the analyticity strip of W".into()));
        }
        if !strip.contains(self.c) {
            return Err(KernelError::InvalidPlan(format!("line abscissa {} outside the strip", self.c)));
        }
        self.check_crossing()
    }

    fn check_crossing(&self) -> Result<(), KernelError> {
        match (crossing_alpha(&self.sigma, self.c), self.sine_correction_alpha) {
            (None, None) => Ok(()),
            (Some(a), Some(b)) if self.sigma.center.im.abs() < 1e-12 && (a - b).abs() <= 1e-9 * (1.0 + a) => Ok(()),
            (Some(a), _) => Err(KernelError::InvalidPlan(format!(
                "line crosses Σ at half-height {a}; sine_correction_alpha must equal it and Σ must be centred on the real axis"
            ))),
            (None, Some(_)) => Err(KernelError::InvalidPlan("sine_correction_alpha set but the line misses Σ".into())),
        }
    }
}

fn crossing_alpha(sigma: &ClosedCircleContour, c: f64) -> Option<f64> {
    let dx = c - sigma.center.re;
    (dx.abs() < sigma.radius).then(|| (sigma.radius * sigma.radius - dx * dx).sqrt())
}

/// `e^{c(x'-x)} sin(α(x-x'))/(π(x-x'))`, with the series near the diagonal.
pub fn sine_term(alpha: f64, c: f64, x: f64, xp: f64) -> f64 {
    let d = x - xp;
    let sinc = if d.abs() < 1e-6 {
        let ad = alpha * d;
        alpha * (1.0 - ad * ad / 6.0) / std::f64::consts::PI
    } else {
        (alpha * d).sin() / (std::f64::consts::PI * d)
    };
    (c * (xp - x)).exp() * sinc
}

const GAP: f64 = 0.05;

/// Circle around the sources and a line beside it. The line goes right of Σ;
/// the left side is used only when the right is blocked and `c_minus` is finite.
pub fn default_contour_plan(spec: &EnsembleSpec) -> Result<ContourPlan, KernelError> {
    match contour_plan_on_side(spec, LineSide::Right) {
        Err(KernelError::NoRoom(m)) => {
            if spec.w.strip()?.c_minus.is_finite() {
                contour_plan_on_side(spec, LineSide::Left)
            } else {
                Err(KernelError::NoRoom(m))
            }
        }
        r => r,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineSide {
    Left,
    Right,
}

/// Circle centred at the mean of the sources with the line on the given side:
/// midway to the strip edge when that edge is finite, one margin away otherwise.
pub fn contour_plan_on_side(spec: &EnsembleSpec, side: LineSide) -> Result<ContourPlan, KernelError> {
    spec.validate()?;
    let strip = spec.w.strip()?;
    let pts: Vec<C64> = spec.sources.iter().map(|s| s.b).collect();
    let center = pts.iter().sum::<C64>() / pts.len() as f64;
    let reach = pts.iter().map(|p| (p - center).norm()).fold(0.0, f64::max);
    let margin = 0.25 * (strip.c_plus - strip.c_minus).min(2.0);
    let room_left = center.re - strip.c_minus;
    let room_right = strip.c_plus - center.re;
    let (near, far) = match side {
        LineSide::Right => (room_right, room_left),
        LineSide::Left => (room_left, room_right),
    };
    let r = (reach + margin).min(near - 2.0 * GAP).min(far - GAP);
    if r < reach + GAP {
        return Err(KernelError::NoRoom(format!(
            "sources span [{}, {}] of the strip ({}, {})",
            center.re - reach,
            center.re + reach,
            strip.c_minus,
            strip.c_plus
        )));
    }
    let c = match side {
        LineSide::Right if strip.c_plus.is_finite() => 0.5 * (center.re + r + strip.c_plus),
        LineSide::Right => center.re + r + margin,
        LineSide::Left if strip.c_minus.is_finite() => 0.5 * (center.re - r + strip.c_minus),
        LineSide::Left => center.re - r - margin,
    };
    Ok(ContourPlan { sigma: ClosedCircleContour::new(center, r), c, sine_correction_alpha: None })
}

fn log_w(w: &WFunction, z: C64) -> Result<C64, KernelError> {
    match w.log_eval(z) {
        Ok(l) if l.re == f64::NEG_INFINITY => Err(KernelError::ZeroW(z)),
        Ok(l) => Ok(l),
        Err(WError::AtPoleOrZero(p)) => Err(KernelError::ZeroW(p)),
        Err(e) => Err(e.into()),
    }
}

fn ln_factorial(n: usize) -> f64 {
    lgamma(C64::new(n as f64 + 1.0, 0.0)).re
}

/// `Z_N = N! ∏ W(a_j)` for distinct sources.
pub fn partition_function(spec: &EnsembleSpec) -> Result<C64, KernelError> {
    spec.validate()?;
    if !spec.is_distinct() {
        return Err(KernelError::ConfluentSources);
    }
    let mut l = C64::new(ln_factorial(spec.n()), 0.0);
    for a in spec.points() {
        l += log_w(&spec.w, a)?;
    }
    Ok(l.exp())
}

/// `N! ∏(N_j - 1)! ∏_{j<k} (b_k - b_j)^{N_j N_k} ∏ W(b_j)^{N_j}`.
pub fn partition_confluent(spec: &EnsembleSpec) -> Result<C64, KernelError> {
    spec.validate()?;
    let s = &spec.sources;
    let mut z = C64::new(ln_factorial(spec.n()), 0.0).exp();
    for (j, sj) in s.iter().enumerate() {
        z *= ln_factorial(sj.mult - 1).exp();
        z *= (log_w(&spec.w, sj.b)? * sj.mult as f64).exp();
        for sk in &s[j + 1..] {
            z *= (sk.b - sj.b).powi((sj.mult * sk.mult) as i32);
        }
    }
    Ok(z)
}

/// `φ_n(x) = e^{a_n x}`, `n` counted from 0 over the sources with repetition.
pub fn phi_eval(spec: &EnsembleSpec, n: usize, x: f64) -> Result<C64, KernelError> {
    let p = spec.points();
    let a = p.get(n).ok_or_else(|| KernelError::InvalidSpec(format!("index {n} out of range for N = {}", p.len())))?;
    Ok((a * x).exp())
}

/// `ψ_m(x) = (1/W̃'(a_m)) (1/2πi)∫ W(v) ∏_{j≠m}(v - a_j) e^{-xv} dv` over the
/// plan's line; `m` counted from 0.
pub fn psi_eval(spec: &EnsembleSpec, m: usize, x: f64, plan: &ContourPlan, settings: &QuadratureSettings) -> Result<C64, KernelError> {
    spec.validate()?;
    if !spec.is_distinct() {
        return Err(KernelError::ConfluentSources);
    }
    let p = spec.points();
    let am = *p.get(m).ok_or_else(|| KernelError::InvalidSpec(format!("index {m} out of range for N = {}", p.len())))?;
    if !spec.w.strip()?.contains(plan.c) {
        return Err(KernelError::InvalidPlan(format!("line abscissa {} outside the strip", plan.c)));
    }
    let others: Vec<C64> = p.iter().enumerate().filter(|(j, _)| *j != m).map(|(_, a)| *a).collect();
    let deriv_log = log_w(&spec.w, am)? + others.iter().map(|a| am - a).product::<C64>().ln();
    let log_f = |v: C64| {
        let l = spec.w.log_eval_continued(v).ok()? + others.iter().map(|a| v - a).product::<C64>().ln() - v * x;
        (!l.re.is_nan()).then_some(l)
    };
    let strip = spec.w.strip()?;
    let c = descent_abscissa(|c| spec.w.log_eval(C64::new(c, 0.0)).map(|l| l.re - x * c).unwrap_or(f64::INFINITY), &strip, plan.c, x);
    let r = line_integral(log_f, c, 1.0 + c.abs(), 0.6, settings)?;
    Ok(r.value * (-deriv_log).exp())
}

/// Minimizer of a real envelope over the strip, found on a grid and refined by
/// golden section. The integrand of ψ has no poles, so its line may sit there.
pub(crate) fn descent_abscissa<F: Fn(f64) -> f64>(env: F, strip: &AnalyticStrip, fallback: f64, x: f64) -> f64 {
    let span = 20.0 + x.abs() + fallback.abs();
    let pad = 0.02 * (strip.c_plus - strip.c_minus).min(1.0);
    let lo = if strip.c_minus.is_finite() { strip.c_minus + pad } else { fallback.min(x) - span };
    let hi = if strip.c_plus.is_finite() { strip.c_plus - pad } else { fallback.max(x) + span };
    if !(lo < hi) {
        return fallback;
    }
    let n = 400;
    let h = (hi - lo) / n as f64;
    let (mut best, mut bv) = (fallback, env(fallback));
    for k in 0..=n {
        let c = lo + k as f64 * h;
        let v = env(c);
        if v < bv {
            (best, bv) = (c, v);
        }
    }
    let (mut a, mut b) = ((best - h).max(lo), (best + h).min(hi));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let c1 = b - g * (b - a);
        let c2 = a + g * (b - a);
        if env(c1) < env(c2) {
            b = c2;
        } else {
            a = c1;
        }
    }
    let m = 0.5 * (a + b);
    if env(m) <= bv {
        m
    } else {
        best
    }
}

fn line_scale(sigma: &ClosedCircleContour) -> f64 {
    sigma.radius.max(0.5)
}

fn pole_window(sigma: &ClosedCircleContour) -> PoleSubtraction {
    PoleSubtraction { center: sigma.center, window: 3.0 * sigma.radius }
}

/// Kernel at many points. When the line crosses Σ the pole at `u = v` is
/// removed inside the u-sum; the removed residue integrates to the plan's sine
/// term, so the values returned are the sine-corrected kernel.
pub fn kernel_eval_batch(
    spec: &EnsembleSpec,
    points: &[(f64, f64)],
    plan: &ContourPlan,
    settings: &QuadratureSettings,
) -> Result<Vec<KernelValue>, KernelError> {
    spec.validate()?;
    plan.validate_for(spec)?;
    let w = &spec.w;
    let log_a = |u: C64| -> Result<C64, KernelError> { Ok(-log_w(w, u)? - spec.source_poly(u).ln()) };
    let log_b = |v: C64| -> Result<C64, KernelError> { Ok(w.log_eval_continued(v)? + spec.source_poly(v).ln()) };
    let probe = |v: C64| w.log_eval_continued(v).ok().map(|l| l + spec.source_poly(v).ln());
    let sigma = plan.sigma;
    eval_by_sign(
        &sigma,
        || vec![Term { coef: C64::new(1.0, 0.0), log_a: &log_a, log_b: &log_b }],
        Some(pole_window(&sigma)),
        points,
        settings,
        |x| choose_line(probe, x, plan.c, line_scale(&sigma), 0.5),
    )
}

pub fn kernel_eval(spec: &EnsembleSpec, x: f64, xp: f64, plan: &ContourPlan, settings: &QuadratureSettings) -> Result<KernelValue, KernelError> {
    Ok(kernel_eval_batch(spec, &[(x, xp)], plan, settings)?[0])
}

/// Splits points by the sign of `x` and evaluates each part with its own plan.
fn split_by_sign<P>(points: &[(f64, f64)], mut eval: P) -> Result<Vec<KernelValue>, KernelError>
where
    P: FnMut(bool, &[(f64, f64)]) -> Result<Vec<KernelValue>, KernelError>,
{
    let mut out: Vec<Option<KernelValue>> = vec![None; points.len()];
    for negative in [true, false] {
        let idx: Vec<usize> = (0..points.len()).filter(|&i| (points[i].0 < 0.0) == negative).collect();
        if idx.is_empty() {
            continue;
        }
        let pts: Vec<(f64, f64)> = idx.iter().map(|&i| points[i]).collect();
        for (k, v) in eval(negative, &pts)?.into_iter().enumerate() {
            out[idx[k]] = Some(v);
        }
    }
    Ok(out.into_iter().map(|v| v.expect("every point evaluated")).collect())
}

/// Kernel with the line placed where `e^{-xv}` decays: left of Σ for `x < 0`,
/// right of it otherwise, falling back to the other side when there is no room.
pub fn kernel_eval_batch_auto(spec: &EnsembleSpec, points: &[(f64, f64)], settings: &QuadratureSettings) -> Result<Vec<KernelValue>, KernelError> {
    let left = contour_plan_on_side(spec, LineSide::Left);
    let right = contour_plan_on_side(spec, LineSide::Right);
    split_by_sign(points, |negative, pts| {
        let (first, second) = if negative { (&left, &right) } else { (&right, &left) };
        let plan = first.as_ref().or(second.as_ref()).map_err(Clone::clone)?;
        kernel_eval_batch(spec, pts, plan, settings)
    })
}

/// The `((v/u)^N - 1)` form for a single source at 0. The integrand has no pole
/// at `u = v`, so the line is taken through the centre of `contour`.
pub fn kernel_fully_confluent_batch(
    spec: &EnsembleSpec,
    points: &[(f64, f64)],
    contour: &ClosedCircleContour,
    settings: &QuadratureSettings,
) -> Result<Vec<KernelValue>, KernelError> {
    spec.validate()?;
    contour.validate()?;
    if spec.sources.len() != 1 || spec.sources[0].b != C64::new(0.0, 0.0) {
        return Err(KernelError::InvalidSpec("fully confluent form needs a single source at 0".into()));
    }
    if contour.center.norm() >= contour.radius {
        return Err(KernelError::InvalidPlan("contour must enclose 0".into()));
    }
    let strip = spec.w.strip()?;
    let c = contour.center.re;
    if !(strip.contains(c - contour.radius) && strip.contains(c + contour.radius)) {
        return Err(KernelError::InvalidPlan("contour leaves the analyticity strip of W".into()));
    }
    let n = spec.n() as f64;
    let w = &spec.w;
    let la1 = |u: C64| -> Result<C64, KernelError> { Ok(-log_w(w, u)? - u.ln() * n) };
    let lb1 = |v: C64| -> Result<C64, KernelError> { Ok(w.log_eval_continued(v)? + v.ln() * n) };
    let la2 = |u: C64| -> Result<C64, KernelError> { Ok(-log_w(w, u)?) };
    let lb2 = |v: C64| -> Result<C64, KernelError> { Ok(w.log_eval_continued(v)?) };
    let probe = |v: C64| w.log_eval_continued(v).ok().map(|l| l + v.ln() * n);
    eval_by_sign(
        contour,
        || vec![Term { coef: C64::new(1.0, 0.0), log_a: &la1, log_b: &lb1 }, Term { coef: C64::new(-1.0, 0.0), log_a: &la2, log_b: &lb2 }],
        None,
        points,
        settings,
        |x| choose_line(probe, x, c, line_scale(contour), 0.5),
    )
}

pub fn kernel_fully_confluent(
    spec: &EnsembleSpec,
    x: f64,
    xp: f64,
    contour: &ClosedCircleContour,
    settings: &QuadratureSettings,
) -> Result<KernelValue, KernelError> {
    Ok(kernel_fully_confluent_batch(spec, &[(x, xp)], contour, settings)?[0])
}

/// `K̃(y, y') = (1/y) K(log y, log y')` at many points.
pub fn multiplicative_kernel_eval_batch(
    spec: &EnsembleSpec,
    points: &[(f64, f64)],
    plan: &ContourPlan,
    settings: &QuadratureSettings,
) -> Result<Vec<KernelValue>, KernelError> {
    if let Some((y, yp)) = points.iter().find(|(y, yp)| !(*y > 0.0 && *yp > 0.0)) {
        return Err(KernelError::InvalidSpec(format!("multiplicative kernel needs y, y' > 0, got ({y}, {yp})")));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|(y, yp)| (y.ln(), yp.ln())).collect();
    let k = kernel_eval_batch(spec, &logs, plan, settings)?;
    Ok(k.into_iter().zip(points).map(|(v, (y, _))| v.scaled(C64::new(1.0 / y, 0.0))).collect())
}

/// `multiplicative_kernel_eval_batch` with per-sign line placement in `log y`.
pub fn multiplicative_kernel_eval_batch_auto(
    spec: &EnsembleSpec,
    points: &[(f64, f64)],
    settings: &QuadratureSettings,
) -> Result<Vec<KernelValue>, KernelError> {
    if let Some((y, yp)) = points.iter().find(|(y, yp)| !(*y > 0.0 && *yp > 0.0)) {
        return Err(KernelError::InvalidSpec(format!("multiplicative kernel needs y, y' > 0, got ({y}, {yp})")));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|(y, yp)| (y.ln(), yp.ln())).collect();
    let k = kernel_eval_batch_auto(spec, &logs, settings)?;
    Ok(k.into_iter().zip(points).map(|(v, (y, _))| v.scaled(C64::new(1.0 / y, 0.0))).collect())
}

pub fn multiplicative_kernel_eval(spec: &EnsembleSpec, y: f64, yp: f64, plan: &ContourPlan, settings: &QuadratureSettings) -> Result<KernelValue, KernelError> {
    Ok(multiplicative_kernel_eval_batch(spec, &[(y, yp)], plan, settings)?[0])
}

/// Parameters of the LUE kernel perturbed by `τ` times a W-ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlueParams {
    pub nu: f64,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "W")]
    pub w: WFunction,
    pub tau: f64,
}

impl PlueParams {
    pub fn validate(&self) -> Result<(), KernelError> {
        self.w.validate()?;
        if !(self.nu >= 0.0) || self.n == 0 || !(self.tau > 0.0) {
            return Err(KernelError::InvalidSpec(format!("pLUE needs nu >= 0, N >= 1, tau > 0; got nu = {}, N = {}, tau = {}", self.nu, self.n, self.tau)));
        }
        Ok(())
    }

    fn scaled_strip(&self) -> Result<AnalyticStrip, KernelError> {
        let s = self.w.strip()?;
        Ok(AnalyticStrip { c_minus: s.c_minus / self.tau, c_plus: (s.c_plus / self.tau).min(1.0) })
    }

    fn check_plan(&self, plan: &ContourPlan) -> Result<(), KernelError> {
        let sg = &plan.sigma;
        sg.validate()?;
        if sg.center.norm() >= sg.radius {
            return Err(KernelError::InvalidPlan("Σ must enclose 0".into()));
        }
        // distance from the centre to the ray [1, ∞)
        let d = if sg.center.re >= 1.0 { sg.center.im.abs() } else { (sg.center - 1.0).norm() };
        if d <= sg.radius {
            return Err(KernelError::BranchCutHit(format!("Σ meets [1, ∞) (distance {d} <= radius {})", sg.radius)));
        }
        let strip = self.scaled_strip()?;
        if !strip.contains(sg.center.re - sg.radius) {
            return Err(KernelError::InvalidPlan("τΣ leaves the analyticity strip of W".into()));
        }
        if !strip.contains(plan.c) {
            return Err(KernelError::InvalidPlan(format!("line abscissa {} must lie in ({}, {})", plan.c, strip.c_minus, strip.c_plus)));
        }
        plan.check_crossing()
    }
}

/// Default pLUE plan: Σ the circle `|u| = 1/2`, line at `c = 3/4` (inside
/// `(c_minus/τ, 1)` because `c_minus < 0`).
pub fn plue_default_plan() -> ContourPlan {
    ContourPlan { sigma: ClosedCircleContour::new(C64::new(0.0, 0.0), 0.5), c: 0.75, sine_correction_alpha: None }
}

/// pLUE plan with the line left of Σ (`c < 0`) when the strip of `W(τ·)`
/// allows it, otherwise the default plan.
pub fn plue_plan_left(params: &PlueParams) -> Result<ContourPlan, KernelError> {
    let lo = params.scaled_strip()?.c_minus;
    if lo >= -0.5 - 2.0 * GAP {
        return Ok(plue_default_plan());
    }
    let c = (0.5 * (lo - 0.5)).max(-0.75);
    Ok(ContourPlan { c, ..plue_default_plan() })
}

/// pLUE kernel with the line left of Σ for `x < 0` and right of it otherwise.
pub fn plue_kernel_eval_batch_auto(params: &PlueParams, points: &[(f64, f64)], settings: &QuadratureSettings) -> Result<Vec<KernelValue>, KernelError> {
    params.validate()?;
    let left = plue_plan_left(params)?;
    let right = plue_default_plan();
    split_by_sign(points, |negative, pts| plue_kernel_eval_batch(params, pts, if negative { &left } else { &right }, settings))
}

pub fn plue_kernel_eval_batch(
    params: &PlueParams,
    points: &[(f64, f64)],
    plan: &ContourPlan,
    settings: &QuadratureSettings,
) -> Result<Vec<KernelValue>, KernelError> {
    params.validate()?;
    params.check_plan(plan)?;
    let (n, m, tau, w) = (params.n as f64, params.n as f64 + params.nu, params.tau, &params.w);
    let log_a = |u: C64| -> Result<C64, KernelError> { Ok((1.0 - u).ln() * m - u.ln() * n - log_w(w, u * tau)?) };
    let log_b = |v: C64| -> Result<C64, KernelError> { Ok(v.ln() * n - (1.0 - v).ln() * m + w.log_eval_continued(v * tau)?) };
    let probe = |v: C64| w.log_eval_continued(v * tau).ok().map(|l| l + v.ln() * n - (1.0 - v).ln() * m);
    let sigma = plan.sigma;
    eval_by_sign(
        &sigma,
        || vec![Term { coef: C64::new(1.0, 0.0), log_a: &log_a, log_b: &log_b }],
        Some(pole_window(&sigma)),
        points,
        settings,
        |x| choose_line(probe, x, plan.c, line_scale(&sigma), 0.5),
    )
}

#[allow(clippy::too_many_arguments)]
pub fn plue_kernel_eval(
    nu: f64,
    n: usize,
    w: &WFunction,
    tau: f64,
    x: f64,
    xp: f64,
    plan: &ContourPlan,
    settings: &QuadratureSettings,
) -> Result<KernelValue, KernelError> {
    let p = PlueParams { nu, n, w: w.clone(), tau };
    Ok(plue_kernel_eval_batch(&p, &[(x, xp)], plan, settings)?[0])
}

/// Muttalib-Borodin type parameters: sources `θj + η`, `j = 1..N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MbParams {
    pub theta: f64,
    pub eta: f64,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "W")]
    pub w: WFunction,
}

impl MbParams {
    pub fn validate(&self) -> Result<(), KernelError> {
        self.w.validate()?;
        if !(self.theta > 0.0) || !(self.eta > -self.theta) || self.n == 0 {
            return Err(KernelError::InvalidSpec(format!(
                "MB needs theta > 0, eta > -theta, N >= 1; got theta = {}, eta = {}, N = {}",
                self.theta, self.eta, self.n
            )));
        }
        Ok(())
    }

    pub fn spec(&self) -> EnsembleSpec {
        let a: Vec<f64> = (1..=self.n).map(|j| self.theta * j as f64 + self.eta).collect();
        EnsembleSpec::distinct(self.w.clone(), &a)
    }

    pub fn u_k(&self, k: usize) -> f64 {
        self.theta * k as f64 + self.eta
    }
}

/// Circle around `θ+η, ..., Nθ+η` with the line left of it, at `η` when `W`
/// allows it.
pub fn mb_contour_plan(params: &MbParams) -> Result<ContourPlan, KernelError> {
    params.validate()?;
    let strip = params.w.strip()?;
    let (t, e, n) = (params.theta, params.eta, params.n as f64);
    let center = C64::new(0.5 * (n + 1.0) * t + e, 0.0);
    let radius = 0.5 * (n - 1.0) * t + 0.25 * t;
    let left = center.re - radius;
    let c = if strip.contains(e) && e < left { e } else { 0.5 * (strip.c_minus.max(left - 1.0) + left) };
    if !(strip.contains(c) && c < left) {
        return Err(KernelError::NoRoom(format!("no line between c_minus = {} and Σ at {left}", strip.c_minus)));
    }
    Ok(ContourPlan { sigma: ClosedCircleContour::new(center, radius), c, sine_correction_alpha: None })
}

pub fn mb_kernel_eval_batch(
    params: &MbParams,
    points: &[(f64, f64)],
    plan: &ContourPlan,
    settings: &QuadratureSettings,
) -> Result<Vec<KernelValue>, KernelError> {
    params.validate()?;
    multiplicative_kernel_eval_batch(&params.spec(), points, plan, settings)
}

#[allow(clippy::too_many_arguments)]
pub fn mb_kernel_eval(
    theta: f64,
    eta: f64,
    n: usize,
    w: &WFunction,
    y: f64,
    yp: f64,
    plan: &ContourPlan,
    settings: &QuadratureSettings,
) -> Result<KernelValue, KernelError> {
    let p = MbParams { theta, eta, n, w: w.clone() };
    Ok(mb_kernel_eval_batch(&p, &[(y, yp)], plan, settings)?[0])
}

/// How the residue sum at the poles `u_k = kθ + η` is normalized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum MbResidueForm {
    /// `K_N(y, y')` itself
    Finite(usize),
    /// `N^{-1/θ} K_N(y N^{-1/θ}, y' N^{-1/θ})`
    Scaled(usize),
    /// the `N → ∞` limit of the scaled form
    Limit,
}

/// Abscissa for the v-integrals of the residue sums: `η` when `W` is analytic
/// there, otherwise a point between `c_minus` and `θ + η`.
pub(crate) fn mb_residue_abscissa(theta: f64, eta: f64, strip: &AnalyticStrip) -> f64 {
    if strip.contains(eta) {
        return eta;
    }
    let hi = theta + eta;
    if strip.c_minus < hi {
        strip.c_minus + 0.5 * (hi - strip.c_minus).min(1.0)
    } else {
        strip.c_minus + 0.5
    }
}

/// Term `k` (from 1) of the residue sum, with its quadrature error.
pub(crate) fn mb_residue_term(
    theta: f64,
    eta: f64,
    w: &WFunction,
    form: MbResidueForm,
    y: f64,
    yp: f64,
    k: usize,
    settings: &QuadratureSettings,
) -> Result<(C64, f64), KernelError> {
    let uk = theta * k as f64 + eta;
    let kf = k as f64;
    let sign = if k.is_multiple_of(2) { 1.0 } else { -1.0 };
    // θ(-1)^k/(k-1)! · (y')^{u_k}/W(u_k) · normalization
    let mut log_pre = C64::new(theta.ln() - ln_factorial(k - 1) + uk * yp.ln(), 0.0) - log_w(w, C64::new(uk, 0.0))?;
    let big_n = match form {
        MbResidueForm::Finite(n) => {
            log_pre -= ln_factorial(n - k);
            Some(n as f64)
        }
        MbResidueForm::Scaled(n) => {
            log_pre += ln_factorial(n) - ln_factorial(n - k) - kf * (n as f64).ln();
            Some(n as f64)
        }
        MbResidueForm::Limit => None,
    };
    let ly = y.ln();
    let log_f = |v: C64| -> Option<C64> {
        let z = (v - eta) / theta;
        let mut l = w.log_eval_continued(v).ok()? - lgamma(1.0 - z) - (v + 1.0) * ly - (v - uk).ln();
        if let Some(nn) = big_n {
            l += lgamma(nn + 1.0 - z);
            if matches!(form, MbResidueForm::Scaled(_)) {
                l += z * nn.ln() - ln_factorial(nn as usize);
            }
        }
        if l.re.is_nan() {
            None
        } else {
            Some(l)
        }
    };
    let c = mb_residue_abscissa(theta, eta, &w.strip()?);
    let r = line_integral(log_f, c, 1.0, 0.5, settings)?;
    let pre = log_pre.exp() * sign;
    Ok((pre * r.value, pre.norm() * r.error_estimate))
}

/// `K_N^{MB}(y, y')` as the finite sum over the residues at `u_k`.
#[allow(clippy::too_many_arguments)]
pub fn mb_kernel_residue_sum(
    theta: f64,
    eta: f64,
    n: usize,
    w: &WFunction,
    y: f64,
    yp: f64,
    settings: &QuadratureSettings,
) -> Result<KernelValue, KernelError> {
    MbParams { theta, eta, n, w: w.clone() }.validate()?;
    mb_residue_sum(theta, eta, w, MbResidueForm::Finite(n), y, yp, settings)
}

pub(crate) fn mb_residue_sum(
    theta: f64,
    eta: f64,
    w: &WFunction,
    form: MbResidueForm,
    y: f64,
    yp: f64,
    settings: &QuadratureSettings,
) -> Result<KernelValue, KernelError> {
    if !(y > 0.0 && yp > 0.0) {
        return Err(KernelError::InvalidSpec(format!("need y, y' > 0, got ({y}, {yp})")));
    }
    let n = match form {
        MbResidueForm::Finite(n) | MbResidueForm::Scaled(n) => n,
        MbResidueForm::Limit => return Err(KernelError::InvalidSpec("limit series has no finite length".into())),
    };
    let mut sum = C64::new(0.0, 0.0);
    let mut err = 0.0;
    for k in 1..=n {
        let (t, e) = mb_residue_term(theta, eta, w, form, y, yp, k, settings)?;
        sum += t;
        err += e;
    }
    Ok(KernelValue { value: sum, error_estimate: err, nodes_used: 0 })
}

/// Terms `|term_k|`, `k = 1..N`, of the finite residue sum.
pub fn mb_residue_term_magnitudes(params: &MbParams, y: f64, yp: f64, settings: &QuadratureSettings) -> Result<Vec<f64>, KernelError> {
    params.validate()?;
    (1..=params.n).map(|k| Ok(mb_residue_term(params.theta, params.eta, &params.w, MbResidueForm::Finite(params.n), y, yp, k, settings)?.0.norm())).collect()
}

/// A finite-N kernel family as written in config files. Without an explicit
/// plan the line side is chosen per point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelModel {
    Additive {
        spec: EnsembleSpec,
        #[serde(default)]
        plan: Option<ContourPlan>,
    },
    Multiplicative {
        spec: EnsembleSpec,
        #[serde(default)]
        plan: Option<ContourPlan>,
    },
    Plue {
        params: PlueParams,
        #[serde(default)]
        plan: Option<ContourPlan>,
    },
    Mb {
        params: MbParams,
        #[serde(default)]
        plan: Option<ContourPlan>,
    },
}

impl KernelModel {
    pub fn n(&self) -> usize {
        match self {
            KernelModel::Additive { spec, .. } | KernelModel::Multiplicative { spec, .. } => spec.n(),
            KernelModel::Plue { params, .. } => params.n,
            KernelModel::Mb { params, .. } => params.n,
        }
    }

    /// Whether the kernel lives on `(0, ∞)` rather than on the real line.
    pub fn is_multiplicative(&self) -> bool {
        matches!(self, KernelModel::Multiplicative { .. } | KernelModel::Mb { .. })
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        match self {
            KernelModel::Additive { spec, .. } | KernelModel::Multiplicative { spec, .. } => spec.validate(),
            KernelModel::Plue { params, .. } => params.validate(),
            KernelModel::Mb { params, .. } => params.validate(),
        }
    }

    pub fn eval_batch(&self, points: &[(f64, f64)], settings: &QuadratureSettings) -> Result<Vec<KernelValue>, KernelError> {
        match self {
            KernelModel::Additive { spec, plan: Some(p) } => kernel_eval_batch(spec, points, p, settings),
            KernelModel::Additive { spec, plan: None } => kernel_eval_batch_auto(spec, points, settings),
            KernelModel::Multiplicative { spec, plan: Some(p) } => multiplicative_kernel_eval_batch(spec, points, p, settings),
            KernelModel::Multiplicative { spec, plan: None } => multiplicative_kernel_eval_batch_auto(spec, points, settings),
            KernelModel::Plue { params, plan: Some(p) } => plue_kernel_eval_batch(params, points, p, settings),
            KernelModel::Plue { params, plan: None } => plue_kernel_eval_batch_auto(params, points, settings),
            KernelModel::Mb { params, plan: Some(p) } => mb_kernel_eval_batch(params, points, p, settings),
            KernelModel::Mb { params, plan: None } => {
                params.validate()?;
                multiplicative_kernel_eval_batch_auto(&params.spec(), points, settings)
            }
        }
    }
}
