use super::*;
use crate::numerics::matmul;

fn oracle_mse(w: &Matrix, w_hat: &Matrix, x: &Matrix) -> f64 {
    let mut total = 0.0;
    for i in 0..w.rows() {
        for c in 0..x.cols() {
            let a: f64 = (0..w.cols()).map(|k| w.get(i, k) as f64 * x.get(k, c) as f64).sum();
            let b: f64 = (0..w.cols()).map(|k| w_hat.get(i, k) as f64 * x.get(k, c) as f64).sum();
            total += (a - b) * (a - b);
        }
    }
    total / (w.rows() * x.cols()) as f64
}

#[test]
fn activation_error_cases() {
    let w = Matrix::from_rows(&[&[1.0]]).unwrap();
    let z = Matrix::from_rows(&[&[0.0]]).unwrap();
    let x = Matrix::from_rows(&[&[2.0, -2.0]]).unwrap();
    assert_eq!(activation_error(&w, &z, &x).unwrap(), 4.0);
    assert_eq!(activation_error(&w, &w, &x).unwrap(), 0.0);

    let mut rng = Rng::new(3);
    let a = gaussian_matrix(&mut rng, 7, 9);
    let b = gaussian_matrix(&mut rng, 7, 9);
    let x = gaussian_matrix(&mut rng, 9, 11);
    let (got, want) = (activation_error(&a, &b, &x).unwrap(), oracle_mse(&a, &b, &x));
    assert!((got - want).abs() <= 1e-9 * want);
    assert_eq!(activation_error(&a, &a, &x).unwrap(), 0.0);

    assert_eq!(activation_error(&a, &x, &x).unwrap_err().code(), "DIMENSION_MISMATCH");
    assert_eq!(activation_error(&a, &b, &a).unwrap_err().code(), "DIMENSION_MISMATCH");
}

#[test]
fn bins() {
    assert_eq!(layer_bins(32).unwrap(), [0..11, 11..22, 22..32]);
    assert_eq!(layer_bins(3).unwrap(), [0..1, 1..2, 2..3]);
    assert_eq!(layer_bins(64).unwrap(), [0..22, 22..44, 44..64]);
    assert!(layer_bins(2).is_err());
    for n in 3..200 {
        let [a, b, c] = layer_bins(n).unwrap();
        assert_eq!((a.start, a.end, b.end, c.end), (0, b.start, c.start, n));
        assert!(!a.is_empty() && !b.is_empty() && !c.is_empty());
    }
    assert_eq!(layer_bin_label(32, 10).unwrap(), "low");
    assert_eq!(layer_bin_label(32, 11).unwrap(), "medium");
    assert_eq!(layer_bin_label(32, 31).unwrap(), "high");
    assert!(layer_bin_label(32, 32).is_err());
}

#[test]
fn outlier_selection() {
    let w = Matrix::from_fn(2, 100, |i, j| {
        let s = if i == 0 { 1.0 } else { -1.0 };
        if j == 7 {
            10.0 * s
        } else {
            0.1 * s
        }
    })
    .unwrap();
    assert_eq!(outlier_columns(&w, 0.01).unwrap(), vec![7]);
    assert_eq!(
        outlier_columns(&Matrix::from_fn(3, 10, |_, _| 1.0).unwrap(), 0.01).unwrap(),
        vec![0]
    );
    assert_eq!(
        outlier_columns(&Matrix::from_fn(3, 10, |_, _| 1.0).unwrap(), 0.3).unwrap(),
        vec![0, 1, 2]
    );
    assert!(outlier_columns(&w, 0.0).is_err());
    assert!(outlier_columns(&w, 1.5).is_err());

    for seed in 0..20 {
        let m = gaussian_matrix(&mut Rng::new(seed), 4, 50);
        let mut scored: Vec<(f64, usize)> = (0..50)
            .map(|c| ((0..4).map(|r| (m.get(r, c) as f64).abs()).sum(), c))
            .collect();
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let mut want: Vec<usize> = scored[..5].iter().map(|p| p.1).collect();
        want.sort();
        assert_eq!(outlier_columns(&m, 0.1).unwrap(), want);
    }
}

#[test]
fn outlier_scope_masks_columns() {
    let mut rng = Rng::new(4);
    let w = gaussian_matrix(&mut rng, 5, 6);
    let w_hat = gaussian_matrix(&mut rng, 5, 6);
    let x = gaussian_matrix(&mut rng, 6, 8);
    let cols = [1, 4];
    let mask = |m: &Matrix| Matrix::from_fn(5, 6, |i, j| if cols.contains(&j) { m.get(i, j) } else { 0.0 }).unwrap();
    let got = outlier_activation_error(&w, &w_hat, &x, &cols).unwrap();
    let want = oracle_mse(&mask(&w), &mask(&w_hat), &x);
    assert!((got - want).abs() <= 1e-9 * want);
    assert!(outlier_activation_error(&w, &w_hat, &x, &[6]).is_err());
}

#[test]
fn generator_recovers_spectrum() {
    // decay 10 leaves two effective directions with σ₁/σ₀ = 2^-10
    let d = synth_longtail_delta(&mut Rng::new(1), 40, 30, 10.0, 0.0).unwrap();
    let svd = thin_svd(&d, 3).unwrap();
    let ratio = svd.sigma[1] / svd.sigma[0];
    assert!((ratio / 2f64.powi(-10) - 1.0).abs() < 1e-3, "ratio {ratio}");
    // unit RMS entries
    let rms = (crate::numerics::fro_norm(&d).powi(2) / 1200.0).sqrt();
    assert!((rms - 1.0).abs() < 1e-4);
}

#[test]
fn generator_long_tail_and_determinism() {
    let d = synth_longtail_delta(&mut Rng::new(1), 256, 256, 0.8, 0.01).unwrap();
    let svd = thin_svd(&d, 101).unwrap();
    assert!(svd.sigma.windows(2).all(|w| w[1] <= w[0]));
    assert!(svd.sigma[100] / svd.sigma[0] < 0.05);

    let a = synth_longtail_delta(&mut Rng::new(2), 20, 16, 1.0, 0.1).unwrap();
    let b = synth_longtail_delta(&mut Rng::new(2), 20, 16, 1.0, 0.1).unwrap();
    let c = synth_longtail_delta(&mut Rng::new(3), 20, 16, 1.0, 0.1).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(synth_longtail_delta(&mut Rng::new(2), 4, 4, 0.0, 0.0).is_err());
}

#[test]
fn zero_delta_all_methods_zero() {
    let delta = Matrix::zeros(256, 256).unwrap();
    let x = gaussian_matrix(&mut Rng::new(0), 256, 32);
    for r in compare_methods(&delta, &x, 1.0 / 16.0).unwrap() {
        assert_eq!(r.mse_all, 0.0, "{}", r.method.label());
        assert_eq!(r.mse_outliers, 0.0);
    }
}

#[test]
fn equal_budget_fairness() {
    let case = SyntheticCase::new(11, 256, 256, 1.0, 0.01, 64).unwrap();
    for r in compare_methods(&case.delta, &case.x, 1.0 / 16.0).unwrap() {
        let used = r.code_bits as f64 / r.budget_bits;
        assert!((0.97..=1.0).contains(&used), "{} uses {used}", r.method.label());
    }
}

#[test]
fn ordering_on_long_tail_instance() {
    let case = SyntheticCase::suite(7, 256).unwrap();
    assert_eq!(case.decay, 1.2);
    let res = compare_methods(&case.delta, &case.x, 1.0 / 16.0).unwrap();
    let mse = |m: Method| res.iter().find(|r| r.method == m).unwrap().mse_all;
    let triple = mse(Method::Triple);
    assert!(triple <= mse(Method::Single3));
    assert!(triple <= mse(Method::LowRank16).min(mse(Method::Sign1Bit)));
    assert!(mse(Method::Single3) <= mse(Method::Sign1Bit));
    // At this decay the leading pair holds most of the energy and 3-bit
    // factors lose more of it than truncation to 8 exact ranks does.
    assert!(mse(Method::Single3) > mse(Method::LowRank16));
}

#[test]
fn schedules_capped_at_matrix_rank() {
    let case = SyntheticCase::new(4, 128, 32, 1.0, 0.01, 64).unwrap();
    let res = compare_methods(&case.delta, &case.x, 0.5).unwrap();
    for r in &res {
        assert!(r.code_bits as f64 <= r.budget_bits, "{r:?}");
    }
    let mse = |m| res.iter().find(|r| r.method == m).unwrap().mse_all;
    assert!(mse(Method::Triple) < mse(Method::Sign1Bit));
}

#[test]
fn rank_one_favours_low_rank() {
    let mut rng = Rng::new(9);
    let u = gaussian_matrix(&mut rng, 256, 1);
    let v = gaussian_matrix(&mut rng, 1, 256);
    let delta = matmul(&u, &v).unwrap();
    let x = gaussian_matrix(&mut rng, 256, 64);
    let res = compare_methods(&delta, &x, 1.0 / 16.0).unwrap();
    let low = res.iter().find(|r| r.method == Method::LowRank16).unwrap().mse_all;
    let scale = activation_error(&delta, &Matrix::zeros(256, 256).unwrap(), &x).unwrap();
    assert!(low / scale < 1e-5, "low-rank relative error {}", low / scale);
    for r in &res {
        assert!(low <= r.mse_all, "{} beat low-rank", r.method.label());
    }
}

#[test]
fn report_formats() {
    let case = SyntheticCase::new(1, 64, 64, 1.0, 0.01, 32).unwrap();
    let opts = CompareOptions {
        methods: vec![Method::LowRank16, Method::Sign1Bit],
        ..CompareOptions::default()
    };
    let res = compare_methods_with(&case.delta, &case.x, 0.25, &opts).unwrap();
    let mut report = ErrorReport::new();
    report.extend_results(&res, "attn.q", "low").unwrap();
    assert_eq!(report.rows.len(), 4);
    let csv = report.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "method,param_kind,layer_bin,scope,mse");
    assert!(lines[1].starts_with("low-rank-16,attn.q,low,all,"));
    assert!(lines[2].starts_with("low-rank-16,attn.q,low,outliers,"));
    assert!(!csv.contains('\r'));
    let parsed: f64 = lines[1].rsplit(',').next().unwrap().parse().unwrap();
    assert_eq!(parsed, res[0].mse_all);

    let table = report.to_table();
    assert!(table.lines().next().unwrap().starts_with("method"));
    assert_eq!(table.lines().count(), 5);
    assert_eq!(report.mean(Method::Sign1Bit, Scope::All), Some(res[1].mse_all));
    assert!(report
        .push(ReportRow {
            method: "x".into(),
            param_kind: "y".into(),
            layer_bin: "z".into(),
            scope: Scope::All,
            mse: f64::NAN
        })
        .is_err());
}

mod props {
    use super::*;
    use crate::numerics::Rng;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn outlier_count_and_nonnegative(seed in 0u64..1000, rows in 1usize..6, cols in 1usize..80, frac in 0.001f64..1.0) {
            let mut rng = Rng::new(seed);
            let w = gaussian_matrix(&mut rng, rows, cols);
            let w_hat = gaussian_matrix(&mut rng, rows, cols);
            let x = gaussian_matrix(&mut rng, cols, 3);
            let picked = outlier_columns(&w, frac).unwrap();
            prop_assert_eq!(picked.len(), ((frac * cols as f64 + 1e-9).floor() as usize).max(1).min(cols));
            prop_assert!(picked.windows(2).all(|p| p[0] < p[1]));
            prop_assert!(outlier_activation_error(&w, &w_hat, &x, &picked).unwrap() >= 0.0);
            prop_assert_eq!(activation_error(&w, &w, &x).unwrap(), 0.0);
        }
    }
}
