//! Catalogue of W-functions: two-sided Laplace (Fourier at `-iz`) or Mellin
//! transforms of the weight, with their analyticity strips.

use crate::quadrature::{
    choose_sigma_max, choose_truncation, integrate, integrate_vertical, HyperbolaContour, QuadError, QuadratureResult, QuadratureSettings, VerticalLineContour,
    C64,
};
use crate::specfun::{lgamma, log_gamma};
use crate::verify::VerificationReport;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum WError {
    #[error("point {0} lies outside the analyticity strip")]
    OutsideStrip(C64),
    #[error("W has a pole or zero at {0}")]
    AtPoleOrZero(C64),
    #[error("strips do not intersect")]
    EmptyStrip,
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error(transparent)]
    Quad(#[from] QuadError),
}

/// Open vertical strip `c_minus < Re z < c_plus`; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticStrip {
    pub c_minus: f64,
    pub c_plus: f64,
}

impl AnalyticStrip {
    pub const FULL: AnalyticStrip = AnalyticStrip { c_minus: f64::NEG_INFINITY, c_plus: f64::INFINITY };

    pub fn contains(&self, re: f64) -> bool {
        self.c_minus < re && re < self.c_plus
    }

    pub fn intersect(&self, other: &AnalyticStrip) -> Result<AnalyticStrip, WError> {
        let s = AnalyticStrip { c_minus: self.c_minus.max(other.c_minus), c_plus: self.c_plus.min(other.c_plus) };
        if s.c_minus < s.c_plus {
            Ok(s)
        } else {
            Err(WError::EmptyStrip)
        }
    }

    /// A comfortable abscissa inside the strip: 0 when the strip holds it with
    /// room to spare, otherwise a point away from both edges.
    pub fn interior_point(&self) -> f64 {
        let (a, b) = (self.c_minus, self.c_plus);
        if a < -0.25 && b > 0.25 {
            return 0.0;
        }
        match (a.is_finite(), b.is_finite()) {
            (true, true) => 0.5 * (a + b),
            (true, false) => a + 0.5,
            (false, true) => b - 0.5,
            (false, false) => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", content = "params", deny_unknown_fields)]
pub enum WKind {
    /// `e^{τz²/2 + γz}`
    Gaussian {
        tau: f64,
        gamma: f64,
    },
    /// `Γ(N+ν) (1-z)^{-(N+ν)}`, the transform of `x^{N+ν-1} e^{-x}` on `x > 0`.
    RationalLUE {
        #[serde(rename = "N")]
        n: u32,
        nu: f64,
    },
    /// `Γ(ν+z)`, the Mellin transform of `y^ν e^{-y}`.
    GammaLUEstar {
        nu: f64,
    },
    /// `B(μ+z, ν+1)`, the Mellin transform of `y^μ (1-y)^ν` on `(0,1)`.
    BetaJUE {
        mu: f64,
        nu: f64,
    },
    /// `B(β+z, γ+1-z)`, the Mellin transform of `y^β (1+y)^{-β-γ-1}`.
    BetaCLUE {
        beta: f64,
        gamma: f64,
    },
    /// `e^{τz²/2 + γz} Π e^{-b z}/(1 - b z)`
    PolyaProduct {
        tau: f64,
        gamma: f64,
        b: Vec<f64>,
    },
    Product {
        left: Box<WFunction>,
        right: Box<WFunction>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WFunction {
    #[serde(flatten)]
    pub kind: WKind,
    #[serde(default = "unit", serialize_with = "ser_norm", deserialize_with = "de_norm")]
    pub normalization: C64,
}

fn unit() -> C64 {
    C64::new(1.0, 0.0)
}

pub(crate) fn ser_norm<S: Serializer>(c: &C64, s: S) -> Result<S::Ok, S::Error> {
    if c.im == 0.0 {
        s.serialize_f64(c.re)
    } else {
        [c.re, c.im].serialize(s)
    }
}

pub(crate) fn de_norm<'de, D: Deserializer<'de>>(d: D) -> Result<C64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Norm {
        Real(f64),
        Pair([f64; 2]),
    }
    Ok(match Norm::deserialize(d)? {
        Norm::Real(r) => C64::new(r, 0.0),
        Norm::Pair([r, i]) => C64::new(r, i),
    })
}

impl WFunction {
    pub fn new(kind: WKind) -> Self {
        Self { kind, normalization: unit() }
    }

    pub fn with_normalization(mut self, c: C64) -> Self {
        self.normalization = c;
        self
    }

    pub fn gaussian(tau: f64, gamma: f64) -> Self {
        Self::new(WKind::Gaussian { tau, gamma })
    }

    /// `√(2π) e^{z²/2}`, the transform of `e^{-x²/2}`.
    pub fn canonical_gaussian() -> Self {
        Self::gaussian(1.0, 0.0).with_normalization(C64::new((2.0 * std::f64::consts::PI).sqrt(), 0.0))
    }

    /// The constant function 1.
    pub fn one() -> Self {
        Self::gaussian(0.0, 0.0)
    }

    pub fn rational_lue(n: u32, nu: f64) -> Self {
        Self::new(WKind::RationalLUE { n, nu })
    }

    pub fn gamma_lue_star(nu: f64) -> Self {
        Self::new(WKind::GammaLUEstar { nu })
    }

    pub fn beta_jue(mu: f64, nu: f64) -> Self {
        Self::new(WKind::BetaJUE { mu, nu })
    }

    pub fn beta_clue(beta: f64, gamma: f64) -> Self {
        Self::new(WKind::BetaCLUE { beta, gamma })
    }

    pub fn polya(tau: f64, gamma: f64, b: Vec<f64>) -> Self {
        Self::new(WKind::PolyaProduct { tau, gamma, b })
    }

    pub fn validate(&self) -> Result<(), WError> {
        let bad = |m: &str| Err(WError::InvalidParameters(m.to_string()));
        if self.normalization == C64::new(0.0, 0.0) || !self.normalization.is_finite() {
            return bad("normalization must be finite and nonzero");
        }
        match &self.kind {
            WKind::Gaussian { tau, gamma } => {
                if !(*tau >= 0.0) || !gamma.is_finite() {
                    return bad("Gaussian needs tau >= 0");
                }
            }
            WKind::RationalLUE { n, nu } => {
                if *n == 0 || !(*nu >= 0.0) {
                    return bad("RationalLUE needs N >= 1 and nu >= 0");
                }
            }
            WKind::GammaLUEstar { nu } => {
                if !(*nu > -1.0) {
                    return bad("GammaLUEstar needs nu > -1");
                }
            }
            WKind::BetaJUE { mu, nu } => {
                if !(*mu > -1.0 && *nu > -1.0) {
                    return bad("BetaJUE needs mu > -1 and nu > -1");
                }
            }
            WKind::BetaCLUE { beta, gamma } => {
                if !(*beta > -1.0 && *gamma > -1.0) {
                    return bad("BetaCLUE needs beta > -1 and gamma > -1");
                }
            }
            WKind::PolyaProduct { tau, gamma, b } => {
                if !(*tau >= 0.0) || !gamma.is_finite() {
                    return bad("PolyaProduct needs tau >= 0");
                }
                if b.iter().any(|x| *x == 0.0 || !x.is_finite()) {
                    return bad("PolyaProduct b-values must be finite and nonzero");
                }
                if !(tau + b.iter().map(|x| x * x).sum::<f64>() > 0.0) {
                    return bad("PolyaProduct needs tau + sum b^2 > 0");
                }
            }
            WKind::Product { left, right } => {
                left.validate()?;
                right.validate()?;
                left.strip()?.intersect(&right.strip()?)?;
            }
        }
        Ok(())
    }

    /// Maximal open strip of analyticity (and non-vanishing) around the real
    /// segment where the transform converges.
    pub fn strip(&self) -> Result<AnalyticStrip, WError> {
        let s = |a: f64, b: f64| AnalyticStrip { c_minus: a, c_plus: b };
        Ok(match &self.kind {
            WKind::Gaussian { .. } => AnalyticStrip::FULL,
            WKind::RationalLUE { .. } => s(f64::NEG_INFINITY, 1.0),
            WKind::GammaLUEstar { nu } => s(-nu, f64::INFINITY),
            WKind::BetaJUE { mu, .. } => s(-mu, f64::INFINITY),
            WKind::BetaCLUE { beta, gamma } => s(-beta, gamma + 1.0),
            WKind::PolyaProduct { b, .. } => {
                let lo = b.iter().filter(|x| **x < 0.0).map(|x| 1.0 / x).fold(f64::NEG_INFINITY, f64::max);
                let hi = b.iter().filter(|x| **x > 0.0).map(|x| 1.0 / x).fold(f64::INFINITY, f64::min);
                s(lo, hi)
            }
            WKind::Product { left, right } => left.strip()?.intersect(&right.strip()?)?,
        })
    }

    /// `log W(z)` for `z` strictly inside the strip.
    pub fn log_eval(&self, z: C64) -> Result<C64, WError> {
        if !self.strip()?.contains(z.re) {
            return Err(WError::OutsideStrip(z));
        }
        self.log_eval_continued(z)
    }

    /// `log W(z)` by analytic continuation: no strip check, only the poles and
    /// zeros of the closed form are rejected. The imaginary part is only
    /// meaningful modulo `2π` once outside the strip.
    pub fn log_eval_continued(&self, z: C64) -> Result<C64, WError> {
        let lg = |a: C64| log_gamma(a).map_err(|_| WError::AtPoleOrZero(z));
        let v = match &self.kind {
            WKind::Gaussian { tau, gamma } => z * z * (0.5 * tau) + z * *gamma,
            WKind::RationalLUE { n, nu } => {
                let p = *n as f64 + nu;
                let one_minus = 1.0 - z;
                if one_minus.norm() == 0.0 {
                    return Err(WError::AtPoleOrZero(z));
                }
                lgamma(C64::new(p, 0.0)) - one_minus.ln() * p
            }
            WKind::GammaLUEstar { nu } => lg(z + *nu)?,
            WKind::BetaJUE { mu, nu } => {
                let a = z + *mu;
                let tail = a + (nu + 1.0);
                let den = log_gamma(tail).unwrap_or(C64::new(f64::INFINITY, 0.0));
                if den.re.is_infinite() {
                    return Err(WError::AtPoleOrZero(z));
                }
                lg(a)? + lgamma(C64::new(nu + 1.0, 0.0)) - den
            }
            WKind::BetaCLUE { beta, gamma } => lg(z + *beta)? + lg(gamma + 1.0 - z)? - lgamma(C64::new(beta + gamma + 1.0, 0.0)),
            WKind::PolyaProduct { tau, gamma, b } => {
                let mut acc = z * z * (0.5 * tau) + z * *gamma;
                for bj in b {
                    let f = 1.0 - z * *bj;
                    if f.norm() == 0.0 {
                        return Err(WError::AtPoleOrZero(z));
                    }
                    acc += -z * *bj - f.ln();
                }
                acc
            }
            WKind::Product { left, right } => left.log_eval_continued(z)? + right.log_eval_continued(z)?,
        };
        Ok(v + self.normalization.ln())
    }

    /// `W(z)` inside the strip.
    pub fn eval(&self, z: C64) -> Result<C64, WError> {
        self.log_eval(z).map(|l| l.exp())
    }
}

/// `log W(z)`; see [`WFunction::log_eval`].
pub fn w_log_eval(w: &WFunction, z: C64) -> Result<C64, WError> {
    w.log_eval(z)
}

pub fn w_strip(w: &WFunction) -> Result<AnalyticStrip, WError> {
    w.strip()
}

/// Above this height a straight truncated line is considered too long and a
/// sinh-graded (possibly bent) contour is used instead.
const MAX_STRAIGHT_T: f64 = 80.0;

/// `(1/2πi)∫ f` over an upward contour through `c` that is equivalent to
/// `c + iℝ`. `log_f` returns `log f`. `bend` is the slope tried when the
/// straight line does not decay fast enough (0 disables bending); bending is
/// valid as long as `f` has no singularities off the real axis.
pub(crate) fn integrate_upward<L>(log_f: L, c: f64, bend: f64, scale: f64, settings: &QuadratureSettings) -> Result<QuadratureResult, QuadError>
where
    L: Fn(C64) -> C64 + Sync,
{
    let f = |z: C64| {
        let l = log_f(z);
        if l.re == f64::NEG_INFINITY {
            C64::new(0.0, 0.0)
        } else {
            l.exp()
        }
    };
    let env = |t: f64| log_f(C64::new(c, t)).re.exp().max(log_f(C64::new(c, -t)).re.exp());
    // sup over [t, 4t] keeps the bound monotone for integrands with bumps
    let bound = |t: f64| (0..=8).map(|k| env(t * (1.0 + 3.0 * k as f64 / 8.0))).fold(0.0, f64::max);
    if let Ok(t) = choose_truncation(bound, settings.abs_tol) {
        if t <= MAX_STRAIGHT_T {
            let t = t.max(1.0);
            let line = VerticalLineContour::new(c, t);
            return integrate_vertical(f, &line, settings);
        }
    }
    // every catalogue W has real poles only, so either bend is admissible;
    // keep the one whose envelope dies fastest
    let log_tol = (settings.abs_tol / 10.0).ln();
    let mut best: Option<(f64, HyperbolaContour)> = None;
    for slope in [bend, -bend, 0.0] {
        let h = HyperbolaContour::new(c, slope, scale);
        let envelope = |s: f64| log_f(h.point(s)).re + h.derivative(s).norm().ln();
        if let Ok(sm) = choose_sigma_max(envelope, log_tol) {
            if best.as_ref().is_none_or(|(b, _)| sm < *b) {
                best = Some((sm, h.with_sigma_max(sm)));
            }
        }
    }
    if let Some((_, h)) = best {
        return integrate(f, &h, settings);
    }
    Err(QuadError::TailTooFat { magnitude: f64::INFINITY, abs_tol: settings.abs_tol })
}

/// `w(x) = (1/2πi)∫_{c+iℝ} e^{-xz} W(z) dz`.
pub fn w_inverse_transform(w: &WFunction, x: f64, c: f64, settings: &QuadratureSettings) -> Result<C64, WError> {
    if !w.strip()?.contains(c) {
        return Err(WError::OutsideStrip(C64::new(c, 0.0)));
    }
    let log_f = |z: C64| match w.log_eval_continued(z) {
        Ok(l) => l - z * x,
        Err(_) => C64::new(f64::NEG_INFINITY, 0.0),
    };
    let bend = if x > 0.0 {
        0.6
    } else if x < 0.0 {
        -0.6
    } else {
        0.0
    };
    Ok(integrate_upward(log_f, c, bend, 1.0 + c.abs(), settings)?.value)
}

/// `w̃(y) = (1/2πi)∫ y^z W(-z) dz` over `-c + iℝ`, which equals `w(log y)`.
pub fn w_mellin_inverse(w: &WFunction, y: f64, settings: &QuadratureSettings) -> Result<C64, WError> {
    if !(y > 0.0) {
        return Err(WError::PreconditionViolated("Mellin inverse needs y > 0".into()));
    }
    let c = w.strip()?.interior_point();
    let ly = y.ln();
    let log_f = |z: C64| match w.log_eval_continued(-z) {
        Ok(l) => l + z * ly,
        Err(_) => C64::new(f64::NEG_INFINITY, 0.0),
    };
    // y^z decays to the left for y > 1
    let bend = if ly > 0.0 {
        -0.6
    } else if ly < 0.0 {
        0.6
    } else {
        0.0
    };
    Ok(integrate_upward(log_f, -c, bend, 1.0 + c.abs(), settings)?.value)
}

/// Samples `|z^{N-1} W(z)|` at `z = c + it` for the given heights. Passes when
/// every sample is at most ten times the sample at the smallest height and the
/// two largest heights show a decrease.
pub fn polya_decay_check(w: &WFunction, n: usize, c: f64, heights: &[f64]) -> Result<VerificationReport, WError> {
    let (tau, b) = match &w.kind {
        WKind::PolyaProduct { tau, b, .. } => (*tau, b),
        _ => return Err(WError::PreconditionViolated("polya_decay_check needs a PolyaProduct".into())),
    };
    w.validate()?;
    if !(tau > 0.0) && b.len() < n {
        return Err(WError::PreconditionViolated(format!("tau = 0 with {} nonzero b-values, fewer than N = {n}", b.len())));
    }
    if heights.len() < 2 {
        return Err(WError::PreconditionViolated("need at least two heights".into()));
    }
    let mut hs = heights.to_vec();
    hs.sort_by(f64::total_cmp);
    let mut mags = Vec::with_capacity(hs.len());
    for t in &hs {
        let z = C64::new(c, *t);
        let l = w.log_eval(z)? + z.ln() * (n as f64 - 1.0);
        mags.push(l.re.exp());
    }
    let first = mags[0];
    let growth = mags.iter().map(|m| m / (10.0 * first)).fold(0.0, f64::max);
    let k = mags.len();
    let trend = mags[k - 1] / mags[k - 2];
    let discrepancy = growth.max(trend);
    Ok(VerificationReport::new("polya_decay", discrepancy, 1.0, format!("samples {mags:?} at heights {hs:?}")))
}

/// The product `W1·W2`, i.e. the transform of the convolution `w1 * w2`.
pub fn convolve(w1: &WFunction, w2: &WFunction) -> Result<WFunction, WError> {
    w1.strip()?.intersect(&w2.strip()?)?;
    Ok(WFunction::new(WKind::Product { left: Box::new(w1.clone()), right: Box::new(w2.clone()) }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_eval_examples() {
        let g = WFunction::gaussian(1.0, 0.0);
        assert!((g.log_eval(C64::new(2.0, 0.0)).unwrap() - 2.0).norm() < 1e-15);
        let l = WFunction::rational_lue(2, 0.0);
        assert!(l.log_eval(C64::new(0.0, 0.0)).unwrap().norm() < 1e-15);
        let p = WFunction::polya(0.0, 0.0, vec![-1.0, -1.0]);
        let v = p.eval(C64::new(1.0, 0.0)).unwrap();
        assert!((v.re - (std::f64::consts::E / 2.0).powi(2)).abs() < 1e-14);
    }

    #[test]
    fn strips() {
        let p = WFunction::polya(0.0, 0.0, vec![-1.0, -0.5]);
        assert_eq!(p.strip().unwrap(), AnalyticStrip { c_minus: -1.0, c_plus: f64::INFINITY });
        let l = WFunction::rational_lue(3, 1.5);
        assert_eq!(l.strip().unwrap().c_plus, 1.0);
        let prod = convolve(&WFunction::canonical_gaussian(), &l).unwrap();
        assert_eq!(prod.strip().unwrap(), AnalyticStrip { c_minus: f64::NEG_INFINITY, c_plus: 1.0 });
        let a = WFunction::polya(0.0, 0.0, vec![0.5]);
        assert_eq!(a.strip().unwrap().c_plus, 2.0);
        assert!(convolve(&a, &WFunction::polya(0.0, 0.0, vec![-0.4])).is_ok());
        let far = WFunction::beta_clue(-3.5, 0.0);
        assert_eq!(convolve(&far, &WFunction::rational_lue(1, 0.0)).unwrap_err(), WError::EmptyStrip);
    }

    #[test]
    fn outside_strip_is_rejected() {
        let l = WFunction::rational_lue(2, 0.0);
        assert_eq!(l.log_eval(C64::new(1.0, 3.0)), Err(WError::OutsideStrip(C64::new(1.0, 3.0))));
        assert!(l.log_eval(C64::new(0.999, 3.0)).is_ok());
    }

    #[test]
    fn json_round_trip() {
        let w = convolve(&WFunction::canonical_gaussian(), &WFunction::polya(0.5, 0.1, vec![-1.0, 2.0])).unwrap();
        let s = serde_json::to_string(&w).unwrap();
        let back: WFunction = serde_json::from_str(&s).unwrap();
        assert_eq!(w, back);
        let lue: WFunction = serde_json::from_str(r#"{"variant":"RationalLUE","params":{"N":3,"nu":0.5}}"#).unwrap();
        assert_eq!(lue, WFunction::rational_lue(3, 0.5));
        let c: WFunction = serde_json::from_str(r#"{"variant":"Gaussian","params":{"tau":1,"gamma":0},"normalization":[0,2]}"#).unwrap();
        assert_eq!(c.normalization, C64::new(0.0, 2.0));
    }

    #[test]
    fn parameter_validation() {
        assert!(WFunction::polya(0.0, 0.0, vec![]).validate().is_err());
        assert!(WFunction::polya(0.0, 0.0, vec![0.0, 1.0]).validate().is_err());
        assert!(WFunction::rational_lue(0, 0.0).validate().is_err());
        assert!(WFunction::gamma_lue_star(-1.0).validate().is_err());
        assert!(WFunction::canonical_gaussian().with_normalization(C64::new(0.0, 0.0)).validate().is_err());
    }
}
