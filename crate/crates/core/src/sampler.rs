//! Monte Carlo eigenvalue samples of GUE with external source and of LUE.

use crate::verify::VerificationReport;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SamplerError {
    #[error("invalid sampler input: {0}")]
    Invalid(String),
    #[error("kernel CDF decreases on the grid near x = {at}; refine the grid")]
    GridTooCoarse { at: f64 },
}

/// Sorted eigenvalues of each draw.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSamples {
    pub n: usize,
    pub draws: Vec<Vec<f64>>,
}

impl EigenSamples {
    pub fn all(&self) -> Vec<f64> {
        self.draws.iter().flatten().copied().collect()
    }

    /// CSV with columns `draw_index,eigenvalue_rank,value`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "draw_index,eigenvalue_rank,value")?;
        for (i, d) in self.draws.iter().enumerate() {
            for (r, v) in d.iter().enumerate() {
                writeln!(out, "{i},{r},{v:.16e}")?;
            }
        }
        Ok(())
    }
}

/// Generator for one draw, keyed by seed and draw index.
fn draw_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Eigenvalues of a real symmetric matrix (row-major, `n×n`) in ascending
/// order, by Householder tridiagonalization and implicit QL.
pub fn symmetric_eigenvalues(mut a: Vec<f64>, n: usize) -> Vec<f64> {
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    // Householder reduction to tridiagonal form
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = 0.0;
        if l > 0 {
            let scale: f64 = (0..=l).map(|k| a[i * n + k].abs()).sum();
            if scale == 0.0 {
                e[i] = a[i * n + l];
            } else {
                for k in 0..=l {
                    a[i * n + k] /= scale;
                    h += a[i * n + k] * a[i * n + k];
                }
                let f = a[i * n + l];
                let g = if f >= 0.0 { -h.sqrt() } else { h.sqrt() };
                e[i] = scale * g;
                h -= f * g;
                a[i * n + l] = f - g;
                let mut f = 0.0;
                for j in 0..=l {
                    let mut g = 0.0;
                    for k in 0..=j {
                        g += a[j * n + k] * a[i * n + k];
                    }
                    for k in j + 1..=l {
                        g += a[k * n + j] * a[i * n + k];
                    }
                    e[j] = g / h;
                    f += e[j] * a[i * n + j];
                }
                let hh = f / (h + h);
                for j in 0..=l {
                    let f = a[i * n + j];
                    let g = e[j] - hh * f;
                    e[j] = g;
                    for k in 0..=j {
                        a[j * n + k] -= f * e[k] + g * a[i * n + k];
                    }
                }
            }
        } else {
            e[i] = a[i * n + l];
        }
        d[i] = h;
    }
    for i in 0..n {
        d[i] = a[i * n + i];
    }
    // implicit QL with Wilkinson shifts
    for i in 1..n {
        e[i - 1] = e[i];
    }
    if n > 0 {
        e[n - 1] = 0.0;
    }
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                break;
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut deflated = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    d.sort_by(f64::total_cmp);
    d
}

/// Eigenvalues of the Hermitian matrix `re + i·im` (row-major): the real
/// `2n×2n` embedding `[[re, -im], [im, re]]` repeats each one twice.
pub fn hermitian_eigenvalues(re: &[f64], im: &[f64], n: usize) -> Vec<f64> {
    let m = 2 * n;
    let mut a = vec![0.0; m * m];
    for i in 0..n {
        for j in 0..n {
            let (r, s) = (re[i * n + j], im[i * n + j]);
            a[i * m + j] = r;
            a[(i + n) * m + j + n] = r;
            a[i * m + j + n] = -s;
            a[(i + n) * m + j] = s;
        }
    }
    symmetric_eigenvalues(a, m).into_iter().step_by(2).collect()
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn gue_draw(n: usize, a: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut re = vec![0.0; n * n];
    let mut im = vec![0.0; n * n];
    let h = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..n {
        re[i * n + i] = normal(rng) + a[i];
        for j in i + 1..n {
            let (x, y) = (h * normal(rng), h * normal(rng));
            re[i * n + j] = x;
            re[j * n + i] = x;
            im[i * n + j] = y;
            im[j * n + i] = -y;
        }
    }
    hermitian_eigenvalues(&re, &im, n)
}

fn lue_draw(n: usize, nu: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let cols = n + nu;
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let g: Vec<(f64, f64)> = (0..n * cols).map(|_| (h * normal(rng), h * normal(rng))).collect();
    let mut re = vec![0.0; n * n];
    let mut im = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            // (G G*)_{ij} = Σ_k G_ik conj(G_jk)
            let (mut sr, mut si) = (0.0, 0.0);
            for k in 0..cols {
                let (ar, ai) = g[i * cols + k];
                let (br, bi) = g[j * cols + k];
                sr += ar * br + ai * bi;
                si += ai * br - ar * bi;
            }
            re[i * n + j] = sr;
            im[i * n + j] = si;
        }
    }
    hermitian_eigenvalues(&re, &im, n)
}

/// Eigenvalues of `M + diag(a)` with `M` drawn from the density `∝ e^{-Tr M²/2}`.
pub fn sample_gue_source(n: usize, a: &[f64], count: usize, seed: u64) -> Result<EigenSamples, SamplerError> {
    if count == 0 || n == 0 || a.len() != n {
        return Err(SamplerError::Invalid(format!("need count >= 1 and N = len(a) >= 1; got count = {count}, N = {n}, len(a) = {}", a.len())));
    }
    let draws = (0..count).into_par_iter().map(|i| gue_draw(n, a, &mut draw_rng(seed, i as u64))).collect();
    Ok(EigenSamples { n, draws })
}

/// Eigenvalues of `G G*` with `G` an `N×(N+ν)` complex Gaussian matrix.
pub fn sample_lue(n: usize, nu: usize, count: usize, seed: u64) -> Result<EigenSamples, SamplerError> {
    if count == 0 || n == 0 {
        return Err(SamplerError::Invalid(format!("need count >= 1 and N >= 1; got count = {count}, N = {n}")));
    }
    let draws = (0..count).into_par_iter().map(|i| lue_draw(n, nu, &mut draw_rng(seed, i as u64))).collect();
    Ok(EigenSamples { n, draws })
}

/// Sup-gap tolerance for `count` draws: 0.02 at 10⁵, scaling like `count^{-1/2}`.
pub fn default_tolerance(count: usize) -> f64 {
    0.02 * (1e5 / count.max(1) as f64).sqrt()
}

/// Sup gap on the grid between the empirical CDF of `samples` and the CDF of
/// `K(x,x)/N` accumulated by the trapezoid rule from `grid[0]`.
pub fn empirical_vs_kernel(samples: &[f64], n: usize, grid: &[f64], diag: &[f64], tolerance: f64) -> Result<VerificationReport, SamplerError> {
    if samples.is_empty() || grid.len() < 2 || grid.len() != diag.len() || n == 0 {
        return Err(SamplerError::Invalid("need samples, N >= 1 and a grid of at least two points matching the kernel values".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(SamplerError::Invalid("grid must be strictly increasing".into()));
    }
    let mut cdf = vec![0.0; grid.len()];
    for i in 1..grid.len() {
        let inc = 0.5 * (diag[i] + diag[i - 1]) * (grid[i] - grid[i - 1]) / n as f64;
        if inc < -1e-12 {
            return Err(SamplerError::GridTooCoarse { at: grid[i] });
        }
        cdf[i] = cdf[i - 1] + inc;
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() as f64;
    let mut worst = 0.0f64;
    let mut at = grid[0];
    for (x, f) in grid.iter().zip(&cdf) {
        let emp = s.partition_point(|v| v <= x) as f64 / m;
        let gap = (emp - f).abs();
        if gap > worst {
            worst = gap;
            at = *x;
        }
    }
    Ok(VerificationReport::new("empirical_vs_kernel", worst, tolerance, format!("{} eigenvalues, worst at x = {at}", samples.len())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigenvalues_of_known_matrices() {
        let a = vec![2.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.0, 1.0, 2.0];
        let ev = symmetric_eigenvalues(a, 3);
        let s = 2f64.sqrt();
        for (g, w) in ev.iter().zip([2.0 - s, 2.0, 2.0 + s]) {
            assert!((g - w).abs() < 1e-13, "{ev:?}");
        }
        // [[1, i], [-i, 1]] has eigenvalues 0 and 2
        let ev = hermitian_eigenvalues(&[1.0, 0.0, 0.0, 1.0], &[0.0, 1.0, -1.0, 0.0], 2);
        assert!(ev[0].abs() < 1e-14 && (ev[1] - 2.0).abs() < 1e-14, "{ev:?}");
        assert_eq!(symmetric_eigenvalues(vec![5.0], 1), vec![5.0]);
    }

    #[test]
    fn random_matrix_trace_and_frobenius() {
        let mut rng = draw_rng(3, 0);
        for n in [2usize, 5, 8] {
            let mut a = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..=i {
                    let v = normal(&mut rng);
                    a[i * n + j] = v;
                    a[j * n + i] = v;
                }
            }
            let tr: f64 = (0..n).map(|i| a[i * n + i]).sum();
            let fro: f64 = a.iter().map(|v| v * v).sum();
            let ev = symmetric_eigenvalues(a, n);
            assert!((ev.iter().sum::<f64>() - tr).abs() < 1e-12);
            assert!((ev.iter().map(|v| v * v).sum::<f64>() - fro).abs() < 1e-11);
            assert!(ev.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
