use biokernel::kernels::{default_contour_plan, phi_eval, psi_eval, EnsembleSpec, KernelModel};
use biokernel::limits::{PluePrefactor, ScanRow};
use biokernel::quadrature::QuadratureSettings;
use biokernel::verify::*;
use biokernel::wcatalog::WFunction;
use biokernel::C64;

fn settings() -> QuadratureSettings {
    QuadratureSettings::default()
}

fn gaussian(a: &[f64]) -> EnsembleSpec {
    EnsembleSpec::distinct(WFunction::canonical_gaussian(), a)
}

fn line() -> QuadGrid {
    QuadGrid::new(-13.0, 13.0, 26, 16)
}

fn scaled(model: &KernelModel, f: f64) -> impl Fn(&[(f64, f64)]) -> Result<Vec<C64>, biokernel::kernels::KernelError> + '_ {
    move |p| Ok(model.eval_batch(p, &settings())?.into_iter().map(|v| v.value * f).collect())
}

#[test]
fn report_invariant_and_json() {
    let r = VerificationReport::new("x", 1e-9, 1e-8, String::new());
    assert!(r.passed);
    assert!(!VerificationReport::new("x", 2e-8, 1e-8, String::new()).passed);
    let v: serde_json::Value = serde_json::from_str(&r.json_line()).unwrap();
    let keys: Vec<&str> = v.as_object().unwrap().keys().map(|s| s.as_str()).collect();
    assert_eq!(keys.len(), 4);
    for k in ["check_name", "discrepancy", "tolerance", "passed"] {
        assert!(keys.contains(&k));
    }
}

#[test]
fn det_small_matrices() {
    let c = |x: f64| C64::new(x, 0.0);
    assert_eq!(det(vec![vec![c(3.0)]]), c(3.0));
    assert!((det(vec![vec![c(1.0), c(2.0)], vec![c(3.0), c(4.0)]]) - c(-2.0)).norm() < 1e-15);
    let m = vec![vec![c(0.0), c(1.0), c(2.0)], vec![c(1.0), c(0.0), c(3.0)], vec![c(4.0), c(-3.0), c(8.0)]];
    assert!((det(m) - c(-2.0)).norm() < 1e-14);
}

#[test]
fn weight_derivatives_are_hermite() {
    // (-∂)^k e^{-x²/2} = He_k(x) e^{-x²/2}
    let w = WFunction::canonical_gaussian();
    for x in [-3.0, -0.4, 0.0, 1.7, 6.0] {
        let g = (-0.5f64 * x * x).exp();
        let he = [1.0, x, x * x - 1.0];
        for (k, h) in he.iter().enumerate() {
            let d = weight_derivative(&w, k, x, &settings()).unwrap();
            assert!((d - h * g).abs() < 1e-12 * (1.0 + g), "k={k} x={x}: {d} vs {}", h * g);
        }
    }
}

#[test]
fn biorthogonality() {
    let r = check_biorthogonality(&gaussian(&[0.0, 0.5, -0.5]), &line(), 1e-8, &settings()).unwrap();
    assert!(r.passed, "{r:?}");
    let r = check_biorthogonality(&gaussian(&[0.0]), &line(), 1e-8, &settings()).unwrap();
    assert!(r.passed, "{r:?}");
    // swapping ψ_0 and ψ_1 moves the ones off the diagonal
    let spec = gaussian(&[0.0, 0.5, -0.5]);
    let plan = default_contour_plan(&spec).unwrap();
    let swap = [1, 0, 2];
    let r = check_biorthogonality_with(3, &line(), |k, x| phi_eval(&spec, k, x), |m, x| psi_eval(&spec, swap[m], x, &plan, &settings()), 1e-8).unwrap();
    assert!(!r.passed && r.discrepancy > 0.5, "{r:?}");
}

#[test]
fn reproducing() {
    let model = KernelModel::Additive { spec: gaussian(&[0.3, -0.2, 0.6, -0.7]), plan: None };
    let pts = fixture_points(11, 5, -2.0, 2.0);
    let r = check_reproducing(&model, &pts, &line(), 1e-6, &settings()).unwrap();
    assert!(r.passed, "{r:?}");
    let one = KernelModel::Additive { spec: gaussian(&[0.0]), plan: None };
    assert!(check_reproducing(&one, &pts, &line(), 1e-6, &settings()).unwrap().passed);
    let r = check_reproducing_with(scaled(&model, 1.01), &pts, &line(), 1e-6).unwrap();
    assert!(!r.passed, "{r:?}");
}

#[test]
fn trace() {
    let gue = KernelModel::Additive { spec: EnsembleSpec::confluent(WFunction::canonical_gaussian(), 0.0, 3), plan: None };
    assert!(check_trace(&gue, &line(), 1e-6, &settings()).unwrap().passed);
    let one = KernelModel::Additive { spec: gaussian(&[0.0]), plan: None };
    let r = check_trace(&one, &line(), 1e-6, &settings()).unwrap();
    assert!(r.passed, "{r:?}");
    let r = check_trace_with(scaled(&gue, 1.01), 3, &line(), 1e-6).unwrap();
    assert!(!r.passed && (r.discrepancy - 0.03).abs() < 1e-6, "{r:?}");
}

#[test]
fn partition() {
    let box_grid = QuadGrid::new(-10.0, 10.0, 12, 10);
    for a in [vec![0.0], vec![0.3, -0.2], vec![0.4, -0.3, 0.1]] {
        let r = check_partition(&gaussian(&a), &box_grid, 1e-3, &settings()).unwrap();
        assert!(r.passed, "{a:?}: {r:?}");
    }
    // a box that cuts off the weight
    let r = check_partition(&gaussian(&[0.3, -0.2]), &QuadGrid::new(-1.0, 1.0, 4, 10), 1e-3, &settings()).unwrap();
    assert!(!r.passed, "{r:?}");
    assert!(check_partition(&gaussian(&[0.0, 0.1, 0.2, 0.3]), &box_grid, 1e-3, &settings()).is_err());
    assert!(check_partition(&EnsembleSpec::confluent(WFunction::canonical_gaussian(), 0.0, 2), &box_grid, 1e-3, &settings()).is_err());
}

#[test]
fn density_vs_kernel() {
    let spec = gaussian(&[0.3, -0.2]);
    let pts = fixture_points(12, 5, -2.0, 2.0);
    let r = check_density_vs_kernel(&spec, &pts, 1e-6, &settings()).unwrap();
    assert!(r.passed, "{r:?}");
    let model = KernelModel::Additive { spec: spec.clone(), plan: None };
    let r = check_density_vs_kernel_with(&spec, &pts, scaled(&model, 1.01), 1e-6, &settings()).unwrap();
    assert!(!r.passed, "{r:?}");
    assert!(check_density_vs_kernel(&gaussian(&[0.0]), &pts, 1e-6, &settings()).is_err());
}

#[test]
fn fourier_roundtrip() {
    let g = WFunction::canonical_gaussian();
    let zs = [-1.0, -0.4, 0.0, 0.5, 1.1];
    let r = check_fourier_roundtrip(&g, 0.0, &QuadGrid::new(-14.0, 14.0, 28, 16), &zs, 1e-6, &settings()).unwrap();
    assert!(r.passed, "{r:?}");
    let r = check_fourier_roundtrip(&g, 0.0, &QuadGrid::new(-14.0, 14.0, 28, 16), &[0.0], 1e-6, &settings()).unwrap();
    assert!(r.passed, "{r:?}");
    let r = check_fourier_roundtrip(&g, 0.0, &QuadGrid::new(-1.0, 1.0, 4, 16), &zs, 1e-6, &settings()).unwrap();
    assert!(!r.passed, "{r:?}");
}

#[test]
fn limit_rows() {
    let row = |n, e| ScanRow { n, sup_error: e, ratio_to_previous: None };
    assert!(check_limit_rows(&[row(1, 0.1), row(2, 0.05), row(4, 0.009)], 1e-2).passed);
    assert!(check_limit_rows(&[row(1, 0.1)], 0.2).passed);
    let r = check_limit_rows(&[row(1, 0.004), row(2, 0.005), row(4, 0.003)], 1e-2);
    assert!(!r.passed && r.details.contains("not monotone"));
    assert!(!check_limit_rows(&[row(1, 0.1), row(2, 0.05)], 1e-2).passed);
}

#[test]
fn limit_scan_prefactors() {
    let scan = |prefactor| LimitScan::Plue {
        nu: 0.0,
        r: 1.0,
        w: WFunction::gaussian(1.0, 0.0),
        n_list: vec![16, 32, 64],
        grid: vec![0.25, 0.5, 1.0, 2.0],
        prefactor,
        bessel_oracle: false,
    };
    assert!(check_limit(&scan(PluePrefactor::Quarter), 1e-2, &settings()).unwrap().passed);
    assert!(!check_limit(&scan(PluePrefactor::One), 1e-2, &settings()).unwrap().passed);
}

#[test]
fn checks_are_deterministic_and_serializable() {
    let suite = builtin_suite("gue").unwrap();
    let text = serde_json::to_string(&suite).unwrap();
    let back: Vec<Check> = serde_json::from_str(&text).unwrap();
    assert_eq!(back, suite);
    let c = &suite[8];
    assert_eq!(c.run(&settings()).unwrap(), c.run(&settings()).unwrap());
    assert!(builtin_suite("nope").is_none());
    let bad = r#"[{"check": "trace", "model": {"kind": "additive", "spec": {"W": {"variant": "Gaussian"}, "sources": []}}, "grid": {"a": 0, "b": 1, "panels": 1, "order": 1}, "tol": 1}]"#;
    assert!(serde_json::from_str::<Vec<Check>>(bad).is_err());
}
