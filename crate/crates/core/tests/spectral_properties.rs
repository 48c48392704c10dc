use proptest::prelude::*;
use shks_core::spectral::{SpectralField, TorusGrid};

fn grid_strategy() -> impl Strategy<Value = TorusGrid> {
    prop_oneof![
        (2usize..=32).prop_map(|h| TorusGrid::new(1, 2 * h).unwrap()),
        (2usize..=8).prop_map(|h| TorusGrid::new(2, 2 * h).unwrap()),
    ]
}

fn grid_and_values() -> impl Strategy<Value = (TorusGrid, Vec<f64>)> {
    grid_strategy().prop_flat_map(|g| {
        let n = g.len();
        (Just(g), prop::collection::vec(-10.0f64..10.0, n))
    })
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn round_trip_reproduces_samples((g, v) in grid_and_values()) {
        let back = SpectralField::forward_transform(&g, &v).unwrap().inverse_transform().unwrap();
        let scale = max_abs(&v).max(1.0);
        for (a, b) in v.iter().zip(&back) {
            prop_assert!((a - b).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn forward_transform_is_hermitian((g, v) in grid_and_values()) {
        let f = SpectralField::forward_transform(&g, &v).unwrap();
        prop_assert_eq!(f.hermitian_defect().0, 0.0);
    }

    #[test]
    fn parseval((g, v) in grid_and_values()) {
        // Oracle: the grid mean of u².
        let f = SpectralField::forward_transform(&g, &v).unwrap();
        let direct = v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64;
        let spectral = f.sobolev_norm_squared(0.0);
        prop_assert!((direct - spectral).abs() <= 1e-12 * direct.max(1.0));
    }

    #[test]
    fn bessel_multipliers_compose((g, v) in grid_and_values(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let f = SpectralField::forward_transform(&g, &v).unwrap();
        let two_step = f.bessel_multiplier(a).bessel_multiplier(b);
        let one_step = f.bessel_multiplier(a + b);
        let scale = one_step.max_abs_coeff().max(two_step.max_abs_coeff()).max(1e-300);
        prop_assert!(two_step.max_coeff_diff(&one_step) <= 1e-12 * scale);
    }

    #[test]
    fn sobolev_norm_equals_l2_of_bessel_potential((g, v) in grid_and_values(), s in -2.0f64..3.0) {
        let f = SpectralField::forward_transform(&g, &v).unwrap();
        let a = f.sobolev_norm(s);
        let b = f.bessel_multiplier(s).sobolev_norm(0.0);
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-300));
    }

    #[test]
    fn projection_is_idempotent_and_contracting((g, v) in grid_and_values(), n_frac in 0.0f64..1.0, s in 0.0f64..3.0) {
        let f = SpectralField::forward_transform(&g, &v).unwrap();
        let n = 1 + ((g.points() / 2 - 1) as f64 * n_frac) as usize;
        let p = f.galerkin_project(n).unwrap();
        let pp = p.galerkin_project(n).unwrap();
        prop_assert_eq!(p.max_coeff_diff(&pp), 0.0);
        prop_assert!(p.sobolev_norm(s) <= f.sobolev_norm(s) * (1.0 + 1e-14));
        prop_assert_eq!(p.hermitian_defect().0, 0.0);
        for (i, c) in p.coeffs().iter().enumerate() {
            if g.k_max_abs(i) > n as i64 {
                prop_assert_eq!(c.norm(), 0.0);
            }
        }
    }

    #[test]
    fn operators_preserve_real_data((g, v) in grid_and_values()) {
        let f = SpectralField::forward_transform(&g, &v).unwrap();
        for h in f.gradient().iter().chain([f.dealias(), f.bessel_multiplier(-2.0)].iter()) {
            let (defect, _) = h.hermitian_defect();
            prop_assert!(defect <= 1e-14 * f.max_abs_coeff().max(1.0));
            prop_assert!(h.inverse_transform().is_ok());
        }
    }
}

#[test]
fn gradient_matches_finite_differences_at_second_order() {
    // Oracle: centred differences of an analytic periodic profile, error ~ h².
    let profile = |x: f64| (x.sin()).exp();
    let mut errs = Vec::new();
    for m in [32usize, 64, 128] {
        let g = TorusGrid::new(1, m).unwrap();
        let f = SpectralField::from_fn(&g, |x| profile(x[0])).unwrap();
        let spectral = f.partial(0).inverse_transform().unwrap();
        let h = g.spacing();
        let err = (0..m)
            .map(|j| {
                let x = j as f64 * h;
                let fd = (profile(x + h) - profile(x - h)) / (2.0 * h);
                (fd - spectral[j]).abs()
            })
            .fold(0.0, f64::max);
        errs.push(err);
    }
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!((3.6..4.4).contains(&ratio), "ratio {ratio}, errors {errs:?}");
    }
}

#[test]
fn inverse_matches_naive_dft() {
    let g = TorusGrid::new(2, 8).unwrap();
    let v: Vec<f64> = (0..g.len()).map(|i| ((i * 37 % 11) as f64 - 5.0) / 3.0).collect();
    let f = SpectralField::forward_transform(&g, &v).unwrap();
    let back = f.inverse_transform().unwrap();
    for (j, b) in back.iter().enumerate() {
        let x = g.coordinates(j);
        let mut sum = 0.0;
        for (i, c) in f.coeffs().iter().enumerate() {
            let k = g.wavevector(i);
            let phase: f64 = k.iter().zip(&x).map(|(k, x)| *k as f64 * x).sum();
            sum += c.re * phase.cos() - c.im * phase.sin();
        }
        assert!((sum - b).abs() < 1e-10);
    }
}
