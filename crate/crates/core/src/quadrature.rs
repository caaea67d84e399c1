//! Contours and trapezoidal quadrature for contour integrals `(1/2πi)∫ f(z) dz`.
//!
//! Every contour hands out node sets `(z, weight)` at a refinement level; the
//! weight already contains `dz/(2πi)` and the step size, so an integral is the
//! plain sum `Σ w·f(z)`. Level `k` uses `2^k` times the base node count.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

pub type C64 = Complex64;

const TWO_PI_I: C64 = C64::new(0.0, 2.0 * PI);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSettings {
    /// relative tolerance of the doubling test, in (0, 1)
    pub rel_tol: f64,
    /// absolute tolerance of the doubling test
    pub abs_tol: f64,
    /// cap on nodes per contour (per leg for Hankel loops)
    pub max_nodes: usize,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        Self { rel_tol: 1e-11, abs_tol: 1e-13, max_nodes: 1 << 17 }
    }
}

impl QuadratureSettings {
    pub fn new(rel_tol: f64, abs_tol: f64, max_nodes: usize) -> Result<Self, QuadError> {
        let s = Self { rel_tol, abs_tol, max_nodes };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), QuadError> {
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(QuadError::InvalidSettings(format!("rel_tol {} not in (0,1)", self.rel_tol)));
        }
        if !(self.abs_tol > 0.0) {
            return Err(QuadError::InvalidSettings(format!("abs_tol {} not positive", self.abs_tol)));
        }
        if self.max_nodes < 64 {
            return Err(QuadError::InvalidSettings(format!("max_nodes {} < 64", self.max_nodes)));
        }
        Ok(())
    }

    pub(crate) fn tol_for(&self, value: C64) -> f64 {
        self.abs_tol.max(self.rel_tol * value.norm())
    }

    /// Same settings with both tolerances scaled by `f`.
    pub fn tightened(&self, f: f64) -> Self {
        Self { rel_tol: (self.rel_tol * f).max(1e-15), abs_tol: (self.abs_tol * f).max(1e-300), max_nodes: self.max_nodes }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureResult {
    pub value: C64,
    pub error_estimate: f64,
    pub nodes_used: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum QuadError {
    #[error("quadrature did not converge within max_nodes (best {:?}, error estimate {:e})", best.value, best.error_estimate)]
    NonConvergence { best: QuadratureResult },
    #[error("invalid contour: {0}")]
    InvalidContour(String),
    #[error("invalid quadrature settings: {0}")]
    InvalidSettings(String),
    #[error("integrand modulus {magnitude:e} at the truncation point exceeds abs_tol {abs_tol:e}")]
    TailTooFat { magnitude: f64, abs_tol: f64 },
    #[error("decay bound never drops below the tolerance for T <= 1e6")]
    NoDecay,
}

/// Quadrature node: the sum `Σ w·f(z)` approximates `(1/2πi)∫ f(z) dz`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub z: C64,
    pub w: C64,
}

/// A contour together with a nested family of quadrature rules.
pub trait Contour: Sync {
    fn nodes(&self, level: u32) -> Vec<Node>;

    /// Apply Richardson extrapolation across levels (trapezoid with corners).
    fn romberg(&self) -> bool {
        false
    }
}

impl<T: Contour + ?Sized> Contour for &T {
    fn nodes(&self, level: u32) -> Vec<Node> {
        (**self).nodes(level)
    }
    fn romberg(&self) -> bool {
        (**self).romberg()
    }
}

impl<T: Contour + ?Sized> Contour for Box<T> {
    fn nodes(&self, level: u32) -> Vec<Node> {
        (**self).nodes(level)
    }
    fn romberg(&self) -> bool {
        (**self).romberg()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedCircleContour {
    pub center: C64,
    pub radius: f64,
    /// base node count, at least 8
    pub nodes: usize,
    /// fixed phase of the first node; `None` puts nodes at half a spacing from
    /// angle 0 on every level, so the point `center + radius` is never sampled
    pub node_phase_offset: Option<f64>,
}

impl ClosedCircleContour {
    pub fn new(center: C64, radius: f64) -> Self {
        Self { center, radius, nodes: 32, node_phase_offset: None }
    }

    pub fn validate(&self) -> Result<(), QuadError> {
        if !(self.radius > 0.0) || !self.radius.is_finite() {
            return Err(QuadError::InvalidContour(format!("circle radius {} must be positive", self.radius)));
        }
        if self.nodes < 8 {
            return Err(QuadError::InvalidContour(format!("circle needs at least 8 nodes, got {}", self.nodes)));
        }
        if let Some(p) = self.node_phase_offset {
            if !(0.0..2.0 * PI).contains(&p) {
                return Err(QuadError::InvalidContour(format!("phase offset {p} outside [0, 2π)")));
            }
        }
        Ok(())
    }

    pub fn point(&self, theta: f64) -> C64 {
        self.center + C64::from_polar(self.radius, theta)
    }
}

impl Contour for ClosedCircleContour {
    fn nodes(&self, level: u32) -> Vec<Node> {
        let n = self.nodes << level;
        let h = 2.0 * PI / n as f64;
        let off = self.node_phase_offset.unwrap_or(0.5 * h);
        (0..n)
            .map(|j| {
                let e = C64::from_polar(self.radius, off + h * j as f64);
                Node { z: self.center + e, w: e / n as f64 }
            })
            .collect()
    }
}

/// The segment `c - iT .. c + iT`, traversed upward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerticalLineContour {
    pub c: f64,
    pub half_length: f64,
    /// base interval count, at least 16
    pub nodes: usize,
}

impl VerticalLineContour {
    pub fn new(c: f64, half_length: f64) -> Self {
        Self { c, half_length, nodes: 64 }
    }

    pub fn validate(&self) -> Result<(), QuadError> {
        if !(self.half_length > 0.0) || !self.half_length.is_finite() {
            return Err(QuadError::InvalidContour(format!("half length {} must be positive", self.half_length)));
        }
        if self.nodes < 16 {
            return Err(QuadError::InvalidContour(format!("line needs at least 16 nodes, got {}", self.nodes)));
        }
        Ok(())
    }
}

impl Contour for VerticalLineContour {
    fn nodes(&self, level: u32) -> Vec<Node> {
        let n = self.nodes << level;
        let t = self.half_length;
        let h = 2.0 * t / n as f64;
        (0..=n)
            .map(|j| {
                let y = -t + h * j as f64;
                let end = if j == 0 || j == n { 0.5 } else { 1.0 };
                Node { z: C64::new(self.c, y), w: C64::new(end * h / (2.0 * PI), 0.0) }
            })
            .collect()
    }
}

/// Capped loop around the ray `[ray_start, reach]`: three straight legs with the
/// left cap at `ray_start - standoff`, oriented positively around the ray.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HankelRayContour {
    pub ray_start: f64,
    pub standoff: f64,
    pub reach: f64,
    pub nodes_per_leg: usize,
}

impl HankelRayContour {
    pub fn new(ray_start: f64, standoff: f64, reach: f64) -> Self {
        Self { ray_start, standoff, reach, nodes_per_leg: 32 }
    }

    pub fn validate(&self) -> Result<(), QuadError> {
        if !(self.standoff > 0.0) {
            return Err(QuadError::InvalidContour(format!("standoff {} must be positive", self.standoff)));
        }
        if !(self.reach > self.ray_start) || !self.reach.is_finite() {
            return Err(QuadError::InvalidContour(format!("reach {} must exceed ray start {}", self.reach, self.ray_start)));
        }
        if self.nodes_per_leg < 2 {
            return Err(QuadError::InvalidContour("need at least 2 nodes per leg".into()));
        }
        Ok(())
    }

    /// Corner points in traversal order: `R+iδ, s-δ+iδ, s-δ-iδ, R-iδ`.
    pub fn corners(&self) -> [C64; 4] {
        let d = self.standoff;
        let left = self.ray_start - d;
        [C64::new(self.reach, d), C64::new(left, d), C64::new(left, -d), C64::new(self.reach, -d)]
    }
}

fn segment_nodes(a: C64, b: C64, n: usize, out: &mut Vec<Node>) {
    let dz = (b - a) / n as f64;
    let w = dz / TWO_PI_I;
    for j in 0..=n {
        let end = if j == 0 || j == n { 0.5 } else { 1.0 };
        out.push(Node { z: a + dz * j as f64, w: w * end });
    }
}

impl Contour for HankelRayContour {
    fn nodes(&self, level: u32) -> Vec<Node> {
        let n = self.nodes_per_leg << level;
        let c = self.corners();
        let mut out = Vec::with_capacity(3 * n + 3);
        for k in 0..3 {
            segment_nodes(c[k], c[k + 1], n, &mut out);
        }
        out
    }

    fn romberg(&self) -> bool {
        true
    }
}

/// Hyperbola `c + slope·scale·(cosh σ - 1) + i·scale·sinh σ`, `|σ| <= sigma_max`,
/// traversed upward. With `slope = 0` it is the vertical line `c + iℝ` with
/// sinh-graded nodes; a positive slope bends both ends to the right.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperbolaContour {
    pub c: f64,
    pub slope: f64,
    pub scale: f64,
    pub sigma_max: f64,
    pub nodes: usize,
}

impl HyperbolaContour {
    pub fn new(c: f64, slope: f64, scale: f64) -> Self {
        Self { c, slope, scale, sigma_max: 6.0, nodes: 64 }
    }

    pub fn point(&self, sigma: f64) -> C64 {
        C64::new(self.c + self.slope * self.scale * (sigma.cosh() - 1.0), self.scale * sigma.sinh())
    }

    pub fn derivative(&self, sigma: f64) -> C64 {
        C64::new(self.slope * self.scale * sigma.sinh(), self.scale * sigma.cosh())
    }

    pub fn with_sigma_max(mut self, sigma_max: f64) -> Self {
        self.sigma_max = sigma_max;
        self
    }
}

impl Contour for HyperbolaContour {
    fn nodes(&self, level: u32) -> Vec<Node> {
        let n = self.nodes << level;
        let h = 2.0 * self.sigma_max / n as f64;
        (0..=n)
            .map(|j| {
                let s = -self.sigma_max + h * j as f64;
                let end = if j == 0 || j == n { 0.5 } else { 1.0 };
                Node { z: self.point(s), w: self.derivative(s) * (end * h) / TWO_PI_I }
            })
            .collect()
    }
}

/// Image of a contour under `z -> 1/z`.
#[derive(Debug, Clone, Copy)]
pub struct Inverted<C>(pub C);

impl<C: Contour> Contour for Inverted<C> {
    fn nodes(&self, level: u32) -> Vec<Node> {
        self.0
            .nodes(level)
            .into_iter()
            .map(|n| {
                let s = n.z.inv();
                Node { z: s, w: -n.w * s * s }
            })
            .collect()
    }
    fn romberg(&self) -> bool {
        self.0.romberg()
    }
}

/// Image of a contour under `z -> scale·z + shift`.
#[derive(Debug, Clone, Copy)]
pub struct Affine<C> {
    pub inner: C,
    pub scale: C64,
    pub shift: C64,
}

impl<C: Contour> Contour for Affine<C> {
    fn nodes(&self, level: u32) -> Vec<Node> {
        self.inner.nodes(level).into_iter().map(|n| Node { z: self.scale * n.z + self.shift, w: self.scale * n.w }).collect()
    }
    fn romberg(&self) -> bool {
        self.inner.romberg()
    }
}

/// The same contour traversed backwards.
#[derive(Debug, Clone, Copy)]
pub struct Reversed<C>(pub C);

impl<C: Contour> Contour for Reversed<C> {
    fn nodes(&self, level: u32) -> Vec<Node> {
        self.0.nodes(level).into_iter().map(|n| Node { z: n.z, w: -n.w }).collect()
    }
    fn romberg(&self) -> bool {
        self.0.romberg()
    }
}

fn node_sum<F>(f: &F, nodes: &[Node]) -> C64
where
    F: Fn(C64) -> C64 + Sync,
{
    if nodes.len() >= 512 {
        nodes.par_iter().map(|n| n.w * f(n.z)).sum()
    } else {
        nodes.iter().map(|n| n.w * f(n.z)).sum()
    }
}

/// Generic doubling loop with the Cauchy stopping rule, plus Romberg
/// extrapolation when the contour asks for it.
pub fn integrate<F, K>(f: F, contour: &K, settings: &QuadratureSettings) -> Result<QuadratureResult, QuadError>
where
    F: Fn(C64) -> C64 + Sync,
    K: Contour + ?Sized,
{
    settings.validate()?;
    let romberg = contour.romberg();
    let mut table: Vec<Vec<C64>> = Vec::new();
    let mut prev: Option<C64> = None;
    let mut best = QuadratureResult { value: C64::new(0.0, 0.0), error_estimate: f64::INFINITY, nodes_used: 0, converged: false };
    let mut used = 0usize;
    for level in 0..40u32 {
        let nodes = contour.nodes(level);
        let per_leg = if romberg { nodes.len() / 3 } else { nodes.len() };
        if per_leg > settings.max_nodes && level > 0 {
            return Err(QuadError::NonConvergence { best });
        }
        used += nodes.len();
        let raw = node_sum(&f, &nodes);
        let value = if romberg {
            let mut row = vec![raw];
            if let Some(last) = table.last() {
                let mut p4 = 1.0;
                for (m, prev_val) in last.iter().enumerate() {
                    p4 *= 4.0;
                    let r = row[m] + (row[m] - prev_val) / (p4 - 1.0);
                    row.push(r);
                }
            }
            let v = *row.last().unwrap();
            table.push(row);
            v
        } else {
            raw
        };
        if let Some(p) = prev {
            let err = (value - p).norm();
            best = QuadratureResult { value, error_estimate: err, nodes_used: used, converged: false };
            if err <= settings.tol_for(value) {
                best.converged = true;
                return Ok(best);
            }
        }
        if !value.re.is_finite() || !value.im.is_finite() {
            return Err(QuadError::NonConvergence { best });
        }
        prev = Some(value);
    }
    Err(QuadError::NonConvergence { best })
}

/// `(1/2πi)∮ f(z) dz` over a positively oriented circle.
pub fn integrate_closed<F>(f: F, contour: &ClosedCircleContour, settings: &QuadratureSettings) -> Result<QuadratureResult, QuadError>
where
    F: Fn(C64) -> C64 + Sync,
{
    contour.validate()?;
    integrate(f, contour, settings)
}

/// `(1/2πi)∫ f(z) dz` over the segment `c-iT .. c+iT`.
pub fn integrate_vertical<F>(f: F, line: &VerticalLineContour, settings: &QuadratureSettings) -> Result<QuadratureResult, QuadError>
where
    F: Fn(C64) -> C64 + Sync,
{
    line.validate()?;
    let top = f(C64::new(line.c, line.half_length)).norm();
    let bottom = f(C64::new(line.c, -line.half_length)).norm();
    let magnitude = top.max(bottom);
    if !(magnitude <= settings.abs_tol) {
        return Err(QuadError::TailTooFat { magnitude, abs_tol: settings.abs_tol });
    }
    integrate(f, line, settings)
}

/// `(1/2πi)∮ f(u) du` over the capped loop around `[ray_start, reach]`.
pub fn integrate_hankel<F>(f: F, hankel: &HankelRayContour, settings: &QuadratureSettings) -> Result<QuadratureResult, QuadError>
where
    F: Fn(C64) -> C64 + Sync,
{
    hankel.validate()?;
    let c = hankel.corners();
    let magnitude = f(c[0]).norm().max(f(c[3]).norm());
    if !(magnitude <= settings.abs_tol) {
        return Err(QuadError::TailTooFat { magnitude, abs_tol: settings.abs_tol });
    }
    integrate(f, hankel, settings)
}

/// The quadrature rule a contour uses at `level`, flattened into one node list.
/// For Romberg contours the Richardson table over levels `0..=level` is folded
/// into the weights, so the rule reproduces what `integrate` would report.
pub fn rule<K: Contour + ?Sized>(contour: &K, level: u32) -> Vec<Node> {
    if !contour.romberg() {
        return contour.nodes(level);
    }
    let depth = level as usize;
    // coef[i][j]: weight of trapezoid level i in table entry R(level, j)
    let mut table: Vec<Vec<Vec<f64>>> = Vec::new();
    for i in 0..=depth {
        let mut row: Vec<Vec<f64>> = Vec::new();
        let mut e = vec![0.0; depth + 1];
        e[i] = 1.0;
        row.push(e);
        if i > 0 {
            let mut p4 = 1.0;
            for j in 1..=i {
                p4 *= 4.0;
                let cur = &row[j - 1];
                let prev = &table[i - 1][j - 1];
                let next: Vec<f64> = cur.iter().zip(prev).map(|(a, b)| a + (a - b) / (p4 - 1.0)).collect();
                row.push(next);
            }
        }
        table.push(row);
    }
    let coef = table[depth].last().unwrap().clone();
    let mut out = Vec::new();
    for (i, c) in coef.iter().enumerate() {
        if *c != 0.0 {
            out.extend(contour.nodes(i as u32).into_iter().map(|n| Node { z: n.z, w: n.w * *c }));
        }
    }
    out
}

/// Gauss-Legendre nodes and weights on `[a, b]`.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pm = if n == 0 { 0.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((mid + half * x, half * w));
    }
    out.reverse();
    out
}

/// Composite Gauss-Legendre rule: `panels` equal panels of `order` nodes.
pub fn composite_gauss(a: f64, b: f64, panels: usize, order: usize) -> Vec<(f64, f64)> {
    let h = (b - a) / panels as f64;
    let base = gauss_legendre(order, 0.0, h);
    let mut out = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let x0 = a + h * p as f64;
        out.extend(base.iter().map(|(x, w)| (x0 + x, *w)));
    }
    out
}

/// Ratio of the geometric truncation grid.
pub const TRUNCATION_GRID_RATIO: f64 = 1.02;

/// Smallest grid point `T` with `decay_bound(T)·(1+T) < abs_tol/10`; the grid is
/// `0.01·1.02^k` up to `10^6`.
pub fn choose_truncation<B>(decay_bound: B, abs_tol: f64) -> Result<f64, QuadError>
where
    B: Fn(f64) -> f64,
{
    let target = abs_tol / 10.0;
    let mut t = 0.01;
    while t <= 1e6 {
        if decay_bound(t) * (1.0 + t) < target {
            return Ok(t);
        }
        t *= TRUNCATION_GRID_RATIO;
    }
    Err(QuadError::NoDecay)
}

/// Truncation for a sinh-graded hyperbola: the smallest `σ_max` beyond which the
/// sampled `log |f(z(σ)) z'(σ)|` stays below `log_tol` on both ends.
pub fn choose_sigma_max<L>(log_envelope: L, log_tol: f64) -> Result<f64, QuadError>
where
    L: Fn(f64) -> f64,
{
    const STEP: f64 = 0.125;
    const TOP: f64 = 40.0;
    let steps = (TOP / STEP) as usize;
    let mut last_bad = None;
    for k in 0..=steps {
        let s = k as f64 * STEP;
        let e = log_envelope(s).max(log_envelope(-s));
        if !(e < log_tol) {
            last_bad = Some(s);
        }
    }
    match last_bad {
        None => Ok(1.0),
        Some(s) if s + 2.0 * STEP >= TOP => Err(QuadError::NoDecay),
        Some(s) => Ok((s + 2.0 * STEP).max(1.0)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tight() -> QuadratureSettings {
        QuadratureSettings { rel_tol: 1e-13, abs_tol: 1e-14, max_nodes: 1 << 16 }
    }

    #[test]
    fn romberg_rule_matches_integrate() {
        let h = HankelRayContour::new(1.0, 0.5, 30.0);
        let f = |u: C64| (-(u - 2.0) * (u - 2.0) / 9.0).exp() / (u - 2.0);
        let r = integrate_hankel(f, &h, &tight()).unwrap();
        let nodes = rule(&h, 6);
        let v: C64 = nodes.iter().map(|n| n.w * f(n.z)).sum();
        assert!((v - r.value).norm() < 1e-11, "{v} vs {}", r.value);
    }

    #[test]
    fn gauss_legendre_polynomials() {
        let g = gauss_legendre(10, -1.0, 2.0);
        let s: f64 = g.iter().map(|(x, w)| w * x.powi(19)).sum();
        let exact = (2f64.powi(20) - 1.0) / 20.0;
        assert!((s - exact).abs() < 1e-9 * exact);
        let c = composite_gauss(0.0, std::f64::consts::PI, 7, 12);
        let s: f64 = c.iter().map(|(x, w)| w * x.sin()).sum();
        assert!((s - 2.0).abs() < 1e-14);
    }

    #[test]
    fn circle_residue_examples() {
        let c = ClosedCircleContour::new(C64::new(0.0, 0.0), 1.0);
        let r = integrate_closed(|z| z.inv(), &c, &tight()).unwrap();
        assert!((r.value - 1.0).norm() < 1e-13);
        let r = integrate_closed(|_| C64::new(1.0, 0.0), &c, &tight()).unwrap();
        assert!(r.value.norm() < 1e-13);
        let r = integrate_closed(|z| z.exp() / (z * z), &c, &tight()).unwrap();
        assert!((r.value - 1.0).norm() < 1e-13);
    }

    #[test]
    fn invalid_circle() {
        let mut c = ClosedCircleContour::new(C64::new(0.0, 0.0), 0.0);
        assert!(matches!(integrate_closed(|z| z, &c, &tight()), Err(QuadError::InvalidContour(_))));
        c.radius = 1.0;
        c.nodes = 4;
        assert!(matches!(integrate_closed(|z| z, &c, &tight()), Err(QuadError::InvalidContour(_))));
    }

    #[test]
    fn default_phase_never_hits_angle_zero() {
        let c = ClosedCircleContour::new(C64::new(-1.0, 0.0), 1.0);
        for level in 0..8 {
            for n in c.nodes(level) {
                assert!(n.z.norm() > 1e-6);
            }
        }
    }

    #[test]
    fn nonconvergence_reports_best() {
        let c = ClosedCircleContour::new(C64::new(0.0, 0.0), 1.0);
        let s = QuadratureSettings { rel_tol: 1e-14, abs_tol: 1e-300, max_nodes: 64 };
        // essential singularity close to the contour
        match integrate_closed(|z| (1.0 / (z - 1.001)).exp(), &c, &s) {
            Err(QuadError::NonConvergence { best }) => assert!(!best.converged),
            other => panic!("expected NonConvergence, got {other:?}"),
        }
    }

    #[test]
    fn vertical_gaussian_examples() {
        let line = VerticalLineContour::new(0.0, 12.0);
        let r = integrate_vertical(|z| (z * z / 2.0).exp(), &line, &tight()).unwrap();
        assert!((r.value.re - 0.398_942_280_401_432_7).abs() < 1e-12);
        let r = integrate_vertical(|z| (z * z / 2.0 - z).exp(), &line, &tight()).unwrap();
        let want = (-0.5f64).exp() / (2.0 * PI).sqrt();
        assert!((r.value - want).norm() < 1e-12);
        let r = integrate_vertical(|z| z * (z * z / 2.0).exp(), &line, &tight()).unwrap();
        assert!(r.value.norm() < 1e-13);
    }

    #[test]
    fn vertical_tail_too_fat() {
        let line = VerticalLineContour::new(0.0, 2.0);
        let r = integrate_vertical(|z| (z * z / 2.0).exp(), &line, &tight());
        assert!(matches!(r, Err(QuadError::TailTooFat { .. })));
    }

    #[test]
    fn hankel_examples() {
        let s = QuadratureSettings { rel_tol: 1e-12, abs_tol: 1e-13, max_nodes: 1 << 16 };
        let h = HankelRayContour::new(1.0, 0.5, 40.0);
        let r = integrate_hankel(|u| 1.0 / (u - 2.0) * (-(u - 2.0) * (u - 2.0) / 50.0).exp(), &h, &s).unwrap();
        assert!((r.value - 1.0).norm() < 1e-10, "{:?}", r);
        let r = integrate_hankel(|u| 1.0 / (u + 5.0) * (-u * u / 50.0).exp(), &h, &s).unwrap();
        assert!(r.value.norm() < 1e-10);
    }

    #[test]
    fn hyperbola_matches_vertical() {
        let s = tight();
        let h = HyperbolaContour::new(0.0, 0.0, 1.0).with_sigma_max(4.0);
        let r = integrate(|z| (z * z / 2.0).exp(), &h, &s).unwrap();
        assert!((r.value.re - 0.398_942_280_401_432_7).abs() < 1e-12);
        // bent right: e^{-z}/(z+1) has its only pole to the left, so the value
        // is the inverse transform of 1/(z+1)... at x = 1, which is e^{-1}
        let h = HyperbolaContour::new(0.0, 0.5, 1.0).with_sigma_max(5.0);
        let r = integrate(|z| (-2.0 * z).exp() / (z + 1.0), &h, &s).unwrap();
        assert!(r.value.norm() < 1e-11, "{:?}", r.value);
        let h = HyperbolaContour::new(0.0, -0.5, 1.0).with_sigma_max(5.0);
        let r = integrate(|z| (2.0 * z).exp() / (z + 1.0), &h, &s).unwrap();
        assert!((r.value - (-2.0f64).exp()).norm() < 1e-11, "{:?}", r.value);
    }

    #[test]
    fn inverted_circle_is_a_line() {
        // the circle centred at -1/3 with radius 1/3 passes through 0 and maps to
        // Re w = -3/2 under w = 1/s; bending the line to the right keeps the
        // value and makes e^{-1/(2s)} = e^{-w/2} decay
        let s = tight();
        let f = |z: C64| (z + 1.0 / 3.0).inv() * (-(0.5 / z)).exp();
        let bent = Inverted(HyperbolaContour::new(-1.5, 1.0, 1.5).with_sigma_max(6.0));
        let r = integrate(f, &bent, &s).unwrap();
        let c = ClosedCircleContour::new(C64::new(0.0, 0.0), 0.5);
        let full = integrate_closed(f, &c, &s).unwrap();
        assert!((r.value - full.value).norm() < 1e-10, "{:?} vs {:?}", r.value, full.value);
    }

    #[test]
    fn hankel_open_end_is_checked() {
        let h = HankelRayContour::new(1.0, 0.5, 40.0);
        let r = integrate_hankel(|u| 1.0 / (u - 2.0), &h, &tight());
        assert!(matches!(r, Err(QuadError::TailTooFat { .. })));
    }

    #[test]
    fn truncation_examples() {
        let t = choose_truncation(|t| (-t * t / 2.0).exp(), 1e-10).unwrap();
        assert!(t > 7.0 && t < 7.6, "{t}");
        let t = choose_truncation(|t| (-2.0 * t).exp(), 1e-8).unwrap();
        assert!(t > 11.4 && t < 11.9, "{t}");
        assert_eq!(choose_truncation(|_| 1.0, 1e-8), Err(QuadError::NoDecay));
    }
}
