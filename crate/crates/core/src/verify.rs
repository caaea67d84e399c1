//! Named verification checks with pass/fail reports.

use crate::double::line_integral;
use crate::kernels::{default_contour_plan, descent_abscissa, partition_function, phi_eval, psi_eval, EnsembleSpec, KernelError, KernelModel};
use crate::limits::{mb_limit_scan, plue_pbessel_scan, PluePrefactor, ScanRow};
use crate::quadrature::{composite_gauss, QuadratureSettings, C64};
use crate::wcatalog::{w_inverse_transform, WFunction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub check_name: String,
    pub discrepancy: f64,
    pub tolerance: f64,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub details: String,
}

impl VerificationReport {
    pub fn new(name: &str, discrepancy: f64, tolerance: f64, details: String) -> Self {
        Self { check_name: name.to_string(), discrepancy, tolerance, passed: discrepancy <= tolerance, details }
    }

    /// `{check_name, discrepancy, tolerance, passed}` on one line.
    pub fn json_line(&self) -> String {
        serde_json::json!({
            "check_name": self.check_name,
            "discrepancy": self.discrepancy,
            "tolerance": self.tolerance,
            "passed": self.passed,
        })
        .to_string()
    }
}

/// Composite Gauss-Legendre grid on `[a, b]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadGrid {
    pub a: f64,
    pub b: f64,
    pub panels: usize,
    pub order: usize,
}

impl QuadGrid {
    pub fn new(a: f64, b: f64, panels: usize, order: usize) -> Self {
        Self { a, b, panels, order }
    }

    pub fn nodes(&self) -> Vec<(f64, f64)> {
        composite_gauss(self.a, self.b, self.panels.max(1), self.order.max(1))
    }
}

/// Determinant by LU with partial pivoting.
pub fn det(mut m: Vec<Vec<C64>>) -> C64 {
    let n = m.len();
    let mut d = C64::new(1.0, 0.0);
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| m[i][k].norm().total_cmp(&m[j][k].norm())).unwrap();
        if m[p][k].norm() == 0.0 {
            return C64::new(0.0, 0.0);
        }
        if p != k {
            m.swap(p, k);
            d = -d;
        }
        d *= m[k][k];
        for i in k + 1..n {
            let f = m[i][k] / m[k][k];
            for j in k..n {
                let t = m[k][j];
                m[i][j] -= f * t;
            }
        }
    }
    d
}

/// `(-∂)^k w(x) = (1/2πi)∫ v^k W(v) e^{-xv} dv`, on a line through the
/// minimum of `|W(c) e^{-xc}|`.
pub fn weight_derivative(w: &WFunction, k: usize, x: f64, settings: &QuadratureSettings) -> Result<f64, KernelError> {
    let strip = w.strip()?;
    let env = |c: f64| w.log_eval(C64::new(c, 0.0)).map(|l| l.re - x * c).unwrap_or(f64::INFINITY);
    let c = descent_abscissa(env, &strip, strip.interior_point(), x);
    let log_f = |v: C64| {
        let mut l = w.log_eval_continued(v).ok()? - v * x;
        if k > 0 {
            l += v.ln() * k as f64;
        }
        (!l.re.is_nan()).then_some(l)
    };
    Ok(line_integral(log_f, c, 1.0 + c.abs(), 0.6, settings)?.value.re)
}

fn vandermonde(a: &[f64]) -> f64 {
    let mut d = 1.0;
    for j in 0..a.len() {
        for k in j + 1..a.len() {
            d *= a[k] - a[j];
        }
    }
    d
}

fn real_sources(spec: &EnsembleSpec) -> Result<Vec<f64>, KernelError> {
    spec.validate()?;
    if !spec.is_distinct() {
        return Err(KernelError::ConfluentSources);
    }
    let p = spec.points();
    if p.iter().any(|a| a.im != 0.0) {
        return Err(KernelError::InvalidSpec("direct quadrature needs real sources".into()));
    }
    Ok(p.iter().map(|a| a.re).collect())
}

/// `det[e^{a_j x_k}]/Δ(a) · det[(-∂)^{k-1} w(x_j)]`, with `d[j][k]` holding
/// `(-∂)^k w(x_j)`.
fn unnormalized_density(a: &[f64], x: &[f64], d: &[&[f64]]) -> f64 {
    let n = a.len();
    let e: Vec<Vec<C64>> = (0..n).map(|j| (0..n).map(|k| C64::new((a[j] * x[k]).exp(), 0.0)).collect()).collect();
    let w: Vec<Vec<C64>> = (0..n).map(|j| (0..n).map(|k| C64::new(d[j][k], 0.0)).collect()).collect();
    det(e).re / vandermonde(a) * det(w).re
}

/// Max entry of `|G - I|` for `G_km = ∫ φ_k ψ_m`.
pub fn check_biorthogonality_with<P, Q>(n: usize, grid: &QuadGrid, phi: P, psi: Q, tolerance: f64) -> Result<VerificationReport, KernelError>
where
    P: Fn(usize, f64) -> Result<C64, KernelError>,
    Q: Fn(usize, f64) -> Result<C64, KernelError>,
{
    let nodes = grid.nodes();
    let mut worst = 0.0f64;
    let mut at = (0, 0);
    for m in 0..n {
        let ps: Vec<C64> = nodes.iter().map(|(x, _)| psi(m, *x)).collect::<Result<_, _>>()?;
        for k in 0..n {
            let mut g = C64::new(0.0, 0.0);
            for ((x, w), p) in nodes.iter().zip(&ps) {
                g += phi(k, *x)? * p * w;
            }
            let d = (g - if k == m { 1.0 } else { 0.0 }).norm();
            if d > worst {
                worst = d;
                at = (k, m);
            }
        }
    }
    Ok(VerificationReport::new("biorthogonality", worst, tolerance, format!("N = {n}, worst entry G[{}][{}]", at.0, at.1)))
}

pub fn check_biorthogonality(spec: &EnsembleSpec, grid: &QuadGrid, tolerance: f64, settings: &QuadratureSettings) -> Result<VerificationReport, KernelError> {
    spec.validate()?;
    let plan = default_contour_plan(spec)?;
    check_biorthogonality_with(spec.n(), grid, |k, x| phi_eval(spec, k, x), |m, x| psi_eval(spec, m, x, &plan, settings), tolerance)
}

/// `max |∫K(x,t)K(t,x')dt - K(x,x')|` over the points; `kernel` evaluates a batch.
pub fn check_reproducing_with<K>(kernel: K, points: &[(f64, f64)], grid: &QuadGrid, tolerance: f64) -> Result<VerificationReport, KernelError>
where
    K: Fn(&[(f64, f64)]) -> Result<Vec<C64>, KernelError>,
{
    let nodes = grid.nodes();
    let m = nodes.len();
    let mut batch = Vec::with_capacity(points.len() * (2 * m + 1));
    for (x, xp) in points {
        batch.extend(nodes.iter().map(|(t, _)| (*x, *t)));
        batch.extend(nodes.iter().map(|(t, _)| (*t, *xp)));
        batch.push((*x, *xp));
    }
    let k = kernel(&batch)?;
    let mut worst = 0.0f64;
    for chunk in k.chunks(2 * m + 1) {
        let conv: C64 = (0..m).map(|j| chunk[j] * chunk[m + j] * nodes[j].1).sum();
        let d = (conv - chunk[2 * m]).norm();
        worst = worst.max(if d.is_nan() { f64::MAX } else { d });
    }
    Ok(VerificationReport::new("reproducing", worst, tolerance, format!("{} points, {m} nodes", points.len())))
}

pub fn check_reproducing(
    model: &KernelModel,
    points: &[(f64, f64)],
    grid: &QuadGrid,
    tolerance: f64,
    settings: &QuadratureSettings,
) -> Result<VerificationReport, KernelError> {
    model.validate()?;
    check_reproducing_with(|p| Ok(model.eval_batch(p, settings)?.into_iter().map(|v| v.value).collect()), points, grid, tolerance)
}

/// `|∫K(x,x)dx - N|`.
pub fn check_trace_with<K>(kernel: K, n: usize, grid: &QuadGrid, tolerance: f64) -> Result<VerificationReport, KernelError>
where
    K: Fn(&[(f64, f64)]) -> Result<Vec<C64>, KernelError>,
{
    let nodes = grid.nodes();
    let pts: Vec<(f64, f64)> = nodes.iter().map(|(x, _)| (*x, *x)).collect();
    let k = kernel(&pts)?;
    let tr: C64 = k.iter().zip(&nodes).map(|(v, (_, w))| v * w).sum();
    Ok(VerificationReport::new("trace", (tr - n as f64).norm(), tolerance, format!("trace = {tr}, N = {n}")))
}

pub fn check_trace(model: &KernelModel, grid: &QuadGrid, tolerance: f64, settings: &QuadratureSettings) -> Result<VerificationReport, KernelError> {
    model.validate()?;
    check_trace_with(|p| Ok(model.eval_batch(p, settings)?.into_iter().map(|v| v.value).collect()), model.n(), grid, tolerance)
}

/// Relative gap between the tensor-product quadrature of the unnormalized
/// density over `grid^N` and `partition_function`.
pub fn check_partition(spec: &EnsembleSpec, grid: &QuadGrid, tolerance: f64, settings: &QuadratureSettings) -> Result<VerificationReport, KernelError> {
    let a = real_sources(spec)?;
    let n = a.len();
    if n > 3 {
        return Err(KernelError::InvalidSpec(format!("direct partition quadrature supports N <= 3, got {n}")));
    }
    let nodes = grid.nodes();
    let m = nodes.len();
    // d[i][k] = (-∂)^k w at node i
    let d: Vec<Vec<f64>> =
        nodes.iter().map(|(x, _)| (0..n).map(|k| weight_derivative(&spec.w, k, *x, settings)).collect::<Result<_, _>>()).collect::<Result<_, _>>()?;
    let mut idx = vec![0usize; n];
    let mut total = 0.0;
    loop {
        let x: Vec<f64> = idx.iter().map(|&i| nodes[i].0).collect();
        let rows: Vec<&[f64]> = idx.iter().map(|&i| d[i].as_slice()).collect();
        let wt: f64 = idx.iter().map(|&i| nodes[i].1).product();
        total += wt * unnormalized_density(&a, &x, &rows);
        let mut p = 0;
        while p < n {
            idx[p] += 1;
            if idx[p] < m {
                break;
            }
            idx[p] = 0;
            p += 1;
        }
        if p == n {
            break;
        }
    }
    let z = partition_function(spec)?;
    let rel = (C64::new(total, 0.0) - z).norm() / z.norm();
    Ok(VerificationReport::new("partition", rel, tolerance, format!("quadrature {total}, closed form {z}")))
}

/// Max relative gap between `(1/2!)det[K(x_i,x_j)]` and the explicit N = 2
/// density at the points.
pub fn check_density_vs_kernel_with<K>(
    spec: &EnsembleSpec,
    points: &[(f64, f64)],
    kernel: K,
    tolerance: f64,
    settings: &QuadratureSettings,
) -> Result<VerificationReport, KernelError>
where
    K: Fn(&[(f64, f64)]) -> Result<Vec<C64>, KernelError>,
{
    let a = real_sources(spec)?;
    if a.len() != 2 {
        return Err(KernelError::InvalidSpec(format!("density check needs N = 2, got {}", a.len())));
    }
    let z = partition_function(spec)?;
    let mut batch = Vec::with_capacity(4 * points.len());
    for (x1, x2) in points {
        batch.extend([(*x1, *x1), (*x1, *x2), (*x2, *x1), (*x2, *x2)]);
    }
    let k = kernel(&batch)?;
    let mut worst = 0.0f64;
    for ((x1, x2), q) in points.iter().zip(k.chunks(4)) {
        let from_kernel = 0.5 * (q[0] * q[3] - q[1] * q[2]);
        let d1 = [weight_derivative(&spec.w, 0, *x1, settings)?, weight_derivative(&spec.w, 1, *x1, settings)?];
        let d2 = [weight_derivative(&spec.w, 0, *x2, settings)?, weight_derivative(&spec.w, 1, *x2, settings)?];
        let explicit = unnormalized_density(&a, &[*x1, *x2], &[&d1, &d2]) / z;
        let rel = (from_kernel - explicit).norm() / explicit.norm();
        worst = worst.max(if rel.is_nan() { f64::MAX } else { rel });
    }
    Ok(VerificationReport::new("density_vs_kernel", worst, tolerance, format!("{} points", points.len())))
}

pub fn check_density_vs_kernel(
    spec: &EnsembleSpec,
    points: &[(f64, f64)],
    tolerance: f64,
    settings: &QuadratureSettings,
) -> Result<VerificationReport, KernelError> {
    let model = KernelModel::Additive { spec: spec.clone(), plan: None };
    check_density_vs_kernel_with(spec, points, |p| Ok(model.eval_batch(p, settings)?.into_iter().map(|v| v.value).collect()), tolerance, settings)
}

/// Max relative gap between `∫e^{xz} w(x) dx` on the grid and `W(z)`.
pub fn check_fourier_roundtrip(
    w: &WFunction,
    c: f64,
    grid: &QuadGrid,
    z: &[f64],
    tolerance: f64,
    settings: &QuadratureSettings,
) -> Result<VerificationReport, KernelError> {
    let nodes = grid.nodes();
    let wx: Vec<C64> = nodes.iter().map(|(x, _)| w_inverse_transform(w, *x, c, settings)).collect::<Result<_, _>>()?;
    let mut worst = 0.0f64;
    for &zz in z {
        let back: C64 = nodes.iter().zip(&wx).map(|((x, wt), v)| v * (wt * (x * zz).exp())).sum();
        let want = w.eval(C64::new(zz, 0.0))?;
        worst = worst.max((back - want).norm() / want.norm());
    }
    Ok(VerificationReport::new("fourier_roundtrip", worst, tolerance, format!("{} strip points", z.len())))
}

/// A convergence scan toward one of the two limit kernels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum LimitScan {
    /// pLUE at `τ = r/4N` against pBessel, or against the Bessel oracle.
    Plue {
        nu: f64,
        r: f64,
        #[serde(rename = "W")]
        w: WFunction,
        #[serde(rename = "N_list")]
        n_list: Vec<usize>,
        /// Tensor grid values for `x` and `x'`.
        grid: Vec<f64>,
        #[serde(default)]
        prefactor: PluePrefactor,
        #[serde(default)]
        bessel_oracle: bool,
    },
    /// MB kernel against the MB limit.
    Mb {
        theta: f64,
        eta: f64,
        #[serde(rename = "W")]
        w: WFunction,
        #[serde(rename = "N_list")]
        n_list: Vec<usize>,
        grid: Vec<f64>,
    },
}

fn tensor(v: &[f64]) -> Vec<(f64, f64)> {
    v.iter().flat_map(|a| v.iter().map(move |b| (*a, *b))).collect()
}

impl LimitScan {
    pub fn run(&self, settings: &QuadratureSettings) -> Result<Vec<ScanRow>, KernelError> {
        match self {
            LimitScan::Plue { nu, r, w, n_list, grid, prefactor, bessel_oracle } => {
                plue_pbessel_scan(*nu, *r, w, n_list, &tensor(grid), *prefactor, *bessel_oracle, settings)
            }
            LimitScan::Mb { theta, eta, w, n_list, grid } => mb_limit_scan(*theta, *eta, w, n_list, &tensor(grid), settings),
        }
    }
}

/// Passes when the sup errors decrease strictly and the last one is within
/// `bound`. A non-monotone scan reports twice the bound.
pub fn check_limit_rows(rows: &[ScanRow], bound: f64) -> VerificationReport {
    let monotone = rows.windows(2).all(|w| w[1].sup_error < w[0].sup_error);
    let last = rows.last().map_or(f64::MAX, |r| r.sup_error);
    let errs: Vec<String> = rows.iter().map(|r| format!("N={}: {:.3e}", r.n, r.sup_error)).collect();
    let disc = if monotone { last } else { last.max(2.0 * bound) };
    let tag = if monotone { "" } else { " (not monotone)" };
    VerificationReport::new("limit", disc, bound, format!("{}{tag}", errs.join(", ")))
}

pub fn check_limit(scan: &LimitScan, bound: f64, settings: &QuadratureSettings) -> Result<VerificationReport, KernelError> {
    Ok(check_limit_rows(&scan.run(settings)?, bound))
}

fn tol_biorth() -> f64 {
    1e-8
}
fn tol_quad() -> f64 {
    1e-6
}
fn tol_partition() -> f64 {
    1e-3
}
fn tol_limit() -> f64 {
    1e-2
}

/// One check with its fixture and tolerance, as read from a suite file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case", deny_unknown_fields)]
pub enum Check {
    Biorthogonality {
        spec: EnsembleSpec,
        grid: QuadGrid,
        #[serde(default = "tol_biorth")]
        tolerance: f64,
    },
    Reproducing {
        model: KernelModel,
        points: Vec<(f64, f64)>,
        grid: QuadGrid,
        #[serde(default = "tol_quad")]
        tolerance: f64,
    },
    Trace {
        model: KernelModel,
        grid: QuadGrid,
        #[serde(default = "tol_quad")]
        tolerance: f64,
    },
    Partition {
        spec: EnsembleSpec,
        grid: QuadGrid,
        #[serde(default = "tol_partition")]
        tolerance: f64,
    },
    DensityVsKernel {
        spec: EnsembleSpec,
        points: Vec<(f64, f64)>,
        #[serde(default = "tol_quad")]
        tolerance: f64,
    },
    FourierRoundtrip {
        #[serde(rename = "W")]
        w: WFunction,
        c: f64,
        grid: QuadGrid,
        z: Vec<f64>,
        #[serde(default = "tol_quad")]
        tolerance: f64,
    },
    Limit {
        scan: LimitScan,
        #[serde(default = "tol_limit")]
        tolerance: f64,
    },
}

impl Check {
    pub fn run(&self, settings: &QuadratureSettings) -> Result<VerificationReport, KernelError> {
        match self {
            Check::Biorthogonality { spec, grid, tolerance } => check_biorthogonality(spec, grid, *tolerance, settings),
            Check::Reproducing { model, points, grid, tolerance } => check_reproducing(model, points, grid, *tolerance, settings),
            Check::Trace { model, grid, tolerance } => check_trace(model, grid, *tolerance, settings),
            Check::Partition { spec, grid, tolerance } => check_partition(spec, grid, *tolerance, settings),
            Check::DensityVsKernel { spec, points, tolerance } => check_density_vs_kernel(spec, points, *tolerance, settings),
            Check::FourierRoundtrip { w, c, grid, z, tolerance } => check_fourier_roundtrip(w, *c, grid, z, *tolerance, settings),
            Check::Limit { scan, tolerance } => check_limit(scan, *tolerance, settings),
        }
    }
}

/// Points drawn uniformly from `[lo, hi]²` with a fixed seed.
pub fn fixture_points(seed: u64, count: usize, lo: f64, hi: f64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| (rng.random_range(lo..hi), rng.random_range(lo..hi))).collect()
}

fn gaussian(a: &[f64]) -> EnsembleSpec {
    EnsembleSpec::distinct(WFunction::canonical_gaussian(), a)
}

/// Suites shipped with the crate: `gue`, `lue`, `limits`.
pub fn builtin_suite(name: &str) -> Option<Vec<Check>> {
    let g_line = QuadGrid::new(-13.0, 13.0, 26, 16);
    match name {
        "gue" => Some(vec![
            Check::Biorthogonality { spec: gaussian(&[0.0, 0.5, -0.5]), grid: QuadGrid::new(-13.0, 13.0, 26, 20), tolerance: 1e-8 },
            Check::Biorthogonality { spec: gaussian(&[0.0]), grid: QuadGrid::new(-13.0, 13.0, 26, 20), tolerance: 1e-8 },
            Check::Reproducing {
                model: KernelModel::Additive { spec: gaussian(&[0.3, -0.2, 0.6, -0.7]), plan: None },
                points: fixture_points(11, 5, -2.0, 2.0),
                grid: g_line,
                tolerance: 1e-6,
            },
            Check::Trace {
                model: KernelModel::Additive { spec: EnsembleSpec::confluent(WFunction::canonical_gaussian(), 0.0, 3), plan: None },
                grid: g_line,
                tolerance: 1e-6,
            },
            Check::Trace { model: KernelModel::Additive { spec: gaussian(&[0.0]), plan: None }, grid: g_line, tolerance: 1e-6 },
            Check::Partition { spec: gaussian(&[0.0]), grid: QuadGrid::new(-10.0, 10.0, 12, 10), tolerance: 1e-3 },
            Check::Partition { spec: gaussian(&[0.3, -0.2]), grid: QuadGrid::new(-10.0, 10.0, 12, 10), tolerance: 1e-3 },
            Check::Partition { spec: gaussian(&[0.4, -0.3, 0.1]), grid: QuadGrid::new(-10.0, 10.0, 12, 10), tolerance: 1e-3 },
            Check::DensityVsKernel { spec: gaussian(&[0.3, -0.2]), points: fixture_points(12, 5, -2.0, 2.0), tolerance: 1e-6 },
            Check::FourierRoundtrip {
                w: WFunction::canonical_gaussian(),
                c: 0.0,
                grid: QuadGrid::new(-14.0, 14.0, 28, 16),
                z: vec![-1.0, -0.4, 0.0, 0.5, 1.1],
                tolerance: 1e-6,
            },
        ]),
        "lue" => {
            let lue_star = EnsembleSpec::distinct(WFunction::gamma_lue_star(1.0), &[1.0, 2.0]);
            Some(vec![
                Check::Biorthogonality {
                    spec: EnsembleSpec::distinct(WFunction::rational_lue(3, 1.0), &[0.0, -0.5, 0.3]),
                    grid: QuadGrid::new(0.0, 80.0, 80, 16),
                    tolerance: 1e-8,
                },
                Check::Trace {
                    model: KernelModel::Multiplicative { spec: lue_star.clone(), plan: None },
                    grid: QuadGrid::new(0.0, 60.0, 40, 12),
                    tolerance: 1e-6,
                },
                Check::Reproducing {
                    model: KernelModel::Multiplicative { spec: lue_star, plan: None },
                    points: fixture_points(13, 5, 0.2, 4.0),
                    grid: QuadGrid::new(0.0, 60.0, 40, 12),
                    tolerance: 1e-6,
                },
                Check::FourierRoundtrip {
                    w: WFunction::rational_lue(2, 0.0),
                    c: 0.3,
                    grid: QuadGrid::new(0.0, 50.0, 50, 16),
                    z: vec![-1.0, -0.5, 0.0, 0.25],
                    tolerance: 1e-6,
                },
            ])
        }
        "limits" => Some(vec![
            Check::Limit {
                scan: LimitScan::Plue {
                    nu: 0.0,
                    r: 1.0,
                    w: WFunction::gaussian(1.0, 0.0),
                    n_list: vec![16, 32, 64],
                    grid: vec![0.25, 0.5, 1.0, 2.0],
                    prefactor: PluePrefactor::Quarter,
                    bessel_oracle: false,
                },
                tolerance: 1e-2,
            },
            Check::Limit {
                scan: LimitScan::Mb { theta: 2.0, eta: 0.0, w: WFunction::gamma_lue_star(1.0), n_list: vec![8, 16, 32], grid: vec![0.5, 1.0, 2.0] },
                tolerance: 1e-2,
            },
        ]),
        _ => None,
    }
}

pub const BUILTIN_SUITES: [&str; 3] = ["gue", "lue", "limits"];
