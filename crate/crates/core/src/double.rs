//! Batched quadrature of separable double contour integrals
//!
//! `Σ_t coef_t ∮ du/2πi ∫ dv/2πi A_t(u) B_t(v) e^{x'u - xv} / (v - u)`
//!
//! over a u-contour and a v-contour, at many points `(x, x')` at once. For each
//! distinct `x` the inner sums `G(u_i) = Σ_j w_j B(v_j) e^{-x v_j}/(v_j - u_i)`
//! are shared by every `x'`. Both rules are refined in lockstep until two
//! consecutive levels agree.

use crate::kernels::{KernelError, KernelValue};
use crate::quadrature::{choose_sigma_max, rule, Contour, HyperbolaContour, Node, QuadError, QuadratureResult, QuadratureSettings, C64};
use rayon::prelude::*;
use std::collections::HashMap;

pub(crate) type LogFn<'a> = dyn Fn(C64) -> Result<C64, KernelError> + Sync + 'a;

/// One separable piece `coef · A(u) B(v)`, given through `log A` and `log B`.
pub(crate) struct Term<'a> {
    pub coef: C64,
    pub log_a: &'a LogFn<'a>,
    pub log_b: &'a LogFn<'a>,
}

/// Removes the pole at `u = v` for v-nodes within `window` of `center`. Only
/// valid when `Σ_t coef_t A_t(z) B_t(z) = 1`, so the residue is `e^{(x'-x)v}`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PoleSubtraction {
    pub center: C64,
    pub window: f64,
}

pub(crate) struct DoubleIntegral<'a> {
    pub u: &'a dyn Contour,
    pub v: &'a dyn Contour,
    pub terms: Vec<Term<'a>>,
    pub subtract: Option<PoleSubtraction>,
}

const MAX_LEVEL: u32 = 14;

fn rule_len(c: &dyn Contour, level: u32) -> usize {
    c.nodes(level).len()
}
const MAX_NODES_PER_CONTOUR: usize = 1 << 14;
// starting level for both rules; one level below it is the first comparison
const MIN_LEVEL: u32 = 2;
const ROUNDOFF: f64 = 1e-15;

struct Scaled {
    nodes: Vec<C64>,
    // w · e^{log f} split into a mantissa and a real log scale per node
    logs: Vec<C64>,
    w: Vec<C64>,
}

fn eval_logs(nodes: &[Node], f: &LogFn<'_>) -> Result<Scaled, KernelError> {
    let logs = nodes.par_iter().map(|n| f(n.z)).collect::<Result<Vec<_>, _>>()?;
    Ok(Scaled { nodes: nodes.iter().map(|n| n.z).collect(), logs, w: nodes.iter().map(|n| n.w).collect() })
}

fn max_re(it: impl Iterator<Item = f64>) -> f64 {
    let m = it.fold(f64::NEG_INFINITY, f64::max);
    if m.is_finite() {
        m
    } else {
        0.0
    }
}

impl DoubleIntegral<'_> {
    /// Refines the u- and v-rules separately: at levels `(lu, lv)` the changes
    /// from `(lu-1, lv)` and `(lu, lv-1)` estimate the two error components,
    /// and only the rule whose component is too large is refined.
    pub fn eval(&self, points: &[(f64, f64)], settings: &QuadratureSettings) -> Result<Vec<KernelValue>, KernelError> {
        settings.validate()?;
        let n = points.len();
        let cap = settings.max_nodes.min(MAX_NODES_PER_CONTOUR);
        let mut out: Vec<Option<KernelValue>> = vec![None; n];
        let mut best = vec![(C64::new(0.0, 0.0), f64::INFINITY, 0usize); n];
        let mut cache: HashMap<(u32, u32), Vec<Option<(C64, f64)>>> = HashMap::new();
        let mut rules: HashMap<(bool, u32), Vec<Node>> = HashMap::new();
        let (mut lu, mut lv) = (MIN_LEVEL, MIN_LEVEL);
        loop {
            let pending: Vec<usize> = (0..n).filter(|&i| out[i].is_none()).collect();
            if pending.is_empty() {
                break;
            }
            for key in [(lu, lv), (lu - 1, lv), (lu, lv - 1)] {
                for (is_u, l) in [(true, key.0), (false, key.1)] {
                    rules.entry((is_u, l)).or_insert_with(|| if is_u { rule(self.u, l) } else { rule(self.v, l) });
                }
                let row = cache.entry(key).or_insert_with(|| vec![None; n]);
                let missing: Vec<usize> = pending.iter().copied().filter(|&i| row[i].is_none()).collect();
                if !missing.is_empty() {
                    let vals = self.level_values(&rules[&(true, key.0)], &rules[&(false, key.1)], points, &missing)?;
                    for (k, &i) in missing.iter().enumerate() {
                        row[i] = Some(vals[k]);
                    }
                }
            }
            let used = rules[&(true, lu)].len() + rules[&(false, lv)].len();
            let (mut grow_u, mut grow_v) = (false, false);
            for &i in &pending {
                let (s, abs) = cache[&(lu, lv)][i].expect("computed above");
                if !(s.re.is_finite() && s.im.is_finite()) {
                    return Err(non_convergence(best[i]));
                }
                let eu = (s - cache[&(lu - 1, lv)][i].expect("computed above").0).norm();
                let ev = (s - cache[&(lu, lv - 1)][i].expect("computed above").0).norm();
                let floor = ROUNDOFF * abs;
                let tol = settings.tol_for(s).max(8.0 * floor);
                let err = eu.max(ev);
                best[i] = (s, err, used);
                if err <= tol {
                    out[i] = Some(KernelValue { value: s, error_estimate: err.max(floor), nodes_used: used });
                } else {
                    grow_u |= eu > 0.5 * tol;
                    grow_v |= ev > 0.5 * tol;
                }
            }
            if !(grow_u || grow_v) {
                grow_u = true;
                grow_v = true;
            }
            let nu = if grow_u { lu + 1 } else { lu };
            let nv = if grow_v { lv + 1 } else { lv };
            if nu > MAX_LEVEL || nv > MAX_LEVEL || rule_len(self.u, nu) > cap || rule_len(self.v, nv) > cap {
                break;
            }
            // drop rows that cannot be needed again
            cache.retain(|&(a, b), _| a + 1 >= nu && b + 1 >= nv);
            (lu, lv) = (nu, nv);
        }
        out.into_iter().enumerate().map(|(i, v)| v.ok_or_else(|| non_convergence(best[i]))).collect()
    }

    /// Value and absolute-term sum at one level for the pending points.
    fn level_values(&self, un: &[Node], vn: &[Node], points: &[(f64, f64)], pending: &[usize]) -> Result<Vec<(C64, f64)>, KernelError> {
        let us: Vec<C64> = un.iter().map(|n| n.z).collect();
        let mut acc = vec![(C64::new(0.0, 0.0), 0.0); pending.len()];
        // distinct x values among pending points
        let mut xs: Vec<f64> = pending.iter().map(|&i| points[i].0).collect();
        xs.sort_by(|a, b| a.total_cmp(b));
        xs.dedup();
        for term in &self.terms {
            let a = eval_logs(un, term.log_a)?;
            let b = eval_logs(vn, term.log_b)?;
            for &x in &xs {
                let lb: Vec<C64> = b.logs.iter().zip(&b.nodes).map(|(l, v)| l - v * x).collect();
                let mb = max_re(lb.iter().map(|l| l.re));
                let bw: Vec<C64> = lb.iter().zip(&b.w).map(|(l, w)| w * (l - mb).exp()).collect();
                let (g, gabs): (Vec<C64>, Vec<f64>) = us
                    .par_iter()
                    .map(|&u| {
                        let mut s = C64::new(0.0, 0.0);
                        let mut sa = 0.0;
                        for (v, w) in b.nodes.iter().zip(&bw) {
                            let r = (v - u).inv();
                            s += w * r;
                            sa += w.norm() * r.norm();
                        }
                        (s, sa)
                    })
                    .unzip();
                let res: Vec<(usize, C64, f64)> = pending
                    .par_iter()
                    .enumerate()
                    .filter(|(_, &i)| points[i].0 == x)
                    .map(|(k, &i)| {
                        let xp = points[i].1;
                        let la: Vec<C64> = a.logs.iter().zip(&us).map(|(l, u)| l + u * xp).collect();
                        let ma = max_re(la.iter().map(|l| l.re));
                        let mut s = C64::new(0.0, 0.0);
                        let mut sa = 0.0;
                        for ((l, w), (gi, ga)) in la.iter().zip(&a.w).zip(g.iter().zip(&gabs)) {
                            let t = w * (l - ma).exp();
                            s += t * gi;
                            sa += t.norm() * ga;
                        }
                        let scale = (ma + mb).exp();
                        (k, term.coef * s * scale, term.coef.norm() * sa * scale)
                    })
                    .collect();
                for (k, s, sa) in res {
                    acc[k].0 += s;
                    acc[k].1 += sa;
                }
            }
        }
        if let Some(sub) = self.subtract {
            let near: Vec<&Node> = vn.iter().filter(|n| (n.z - sub.center).norm() < sub.window).collect();
            // D(v) = Σ_i w_i/(v - u_i), the discrete -1_{inside}
            let d: Vec<(C64, f64)> = near
                .par_iter()
                .map(|v| {
                    let mut s = C64::new(0.0, 0.0);
                    let mut sa = 0.0;
                    for n in un {
                        let r = (v.z - n.z).inv();
                        s += n.w * r;
                        sa += n.w.norm() * r.norm();
                    }
                    (s, sa)
                })
                .collect();
            for (k, &i) in pending.iter().enumerate() {
                let (x, xp) = points[i];
                let mut s = C64::new(0.0, 0.0);
                let mut sa = 0.0;
                for (v, (dv, da)) in near.iter().zip(&d) {
                    let t = v.w * (v.z * (xp - x)).exp();
                    s += t * dv;
                    sa += t.norm() * da;
                }
                acc[k].0 -= s;
                acc[k].1 += sa;
            }
        }
        Ok(acc)
    }
}

fn non_convergence((value, err, used): (C64, f64, usize)) -> KernelError {
    KernelError::Quad(QuadError::NonConvergence { best: QuadratureResult { value, error_estimate: err, nodes_used: used, converged: false } })
}

/// Relative size below which the v-integrand tail is dropped.
const TAIL_REL: f64 = 1e-17;

/// Picks a v-contour through `c` for the integrand `e^{log_g(v) - x v}`:
/// the straight line or a hyperbola bent by `±bend`, whichever needs the
/// shortest parameter range. Every candidate crosses the real axis only at
/// `c`, so with real singularities they are all admissible.
pub(crate) fn choose_line<F>(log_g: F, x: f64, c: f64, scale: f64, bend: f64) -> Result<HyperbolaContour, KernelError>
where
    F: Fn(C64) -> Option<C64>,
{
    let mut best: Option<(f64, HyperbolaContour)> = None;
    for slope in [0.0, bend, -bend] {
        let h = HyperbolaContour::new(c, slope, scale);
        let env = |s: f64| match log_g(h.point(s)) {
            Some(l) => (l - h.point(s) * x).re + h.derivative(s).norm().ln(),
            None => f64::NEG_INFINITY,
        };
        let peak = (-320..=320).map(|k| env(k as f64 * 0.125)).filter(|e| !e.is_nan()).fold(f64::NEG_INFINITY, f64::max);
        if !peak.is_finite() {
            continue;
        }
        let envelope = |s: f64| {
            let e = env(s);
            if e.is_nan() {
                f64::INFINITY
            } else {
                e
            }
        };
        if let Ok(sm) = choose_sigma_max(envelope, peak + TAIL_REL.ln()) {
            if best.as_ref().is_none_or(|(b, _)| sm < *b) {
                best = Some((sm, h.with_sigma_max(sm)));
            }
        }
    }
    best.map(|(_, h)| h).ok_or(KernelError::Quad(QuadError::NoDecay))
}

/// Splits points by the sign of `x` and by octave of `|x|`, builds one
/// v-contour per group from the smallest `|x|` in it, and evaluates each group.
pub(crate) fn eval_by_sign<'a, M, V>(
    u: &'a dyn Contour,
    terms: impl Fn() -> Vec<Term<'a>>,
    subtract: Option<PoleSubtraction>,
    points: &[(f64, f64)],
    settings: &QuadratureSettings,
    make_v: M,
) -> Result<Vec<KernelValue>, KernelError>
where
    M: Fn(f64) -> Result<V, KernelError>,
    V: Contour,
{
    let key = |x: f64| -> (i8, i32) {
        let b = if x.abs() < 0.5 { 0 } else { (x.abs() / 0.5).log2().floor() as i32 + 1 };
        (sgn(x) as i8, b)
    };
    let mut groups: Vec<((i8, i32), Vec<usize>)> = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let k = key(p.0);
        match groups.iter_mut().find(|(g, _)| *g == k) {
            Some((_, v)) => v.push(i),
            None => groups.push((k, vec![i])),
        }
    }
    let mut out: Vec<Option<KernelValue>> = vec![None; points.len()];
    for (_, idx) in groups {
        let rep = idx.iter().map(|&i| points[i].0).fold(f64::INFINITY, |a, b| if b.abs() < a.abs() { b } else { a });
        let v = make_v(rep)?;
        let di = DoubleIntegral { u, v: &v, terms: terms(), subtract };
        let pts: Vec<(f64, f64)> = idx.iter().map(|&i| points[i]).collect();
        for (k, val) in di.eval(&pts, settings)?.into_iter().enumerate() {
            out[idx[k]] = Some(val);
        }
    }
    Ok(out.into_iter().map(|v| v.expect("every point belongs to a group")).collect())
}

fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `(1/2πi) ∫ e^{log_f(v)} dv` upward through `c`, on the contour `choose_line` picks.
pub(crate) fn line_integral<F>(log_f: F, c: f64, scale: f64, bend: f64, settings: &QuadratureSettings) -> Result<QuadratureResult, KernelError>
where
    F: Fn(C64) -> Option<C64> + Sync,
{
    let h = choose_line(&log_f, 0.0, c, scale, bend)?;
    Ok(crate::quadrature::integrate(
        |z| match log_f(z) {
            Some(l) => l.exp(),
            None => C64::new(0.0, 0.0),
        },
        &h,
        settings,
    )?)
}
