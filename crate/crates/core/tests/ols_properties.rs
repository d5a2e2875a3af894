mod common;

use common::{centered, dot, random_instance};
use proptest::prelude::*;
use vif_ancova::estimators::{ancova_estimator, unadjusted_estimator};
use vif_ancova::ols::{fwl_residualize, least_squares, r_squared_z_given_x, vif};
use vif_ancova::{Assignment, DesignMatrix};

fn full_design(z: &[f64], x: &DesignMatrix) -> DesignMatrix {
    let mut cols = vec![vec![1.0; z.len()], z.to_vec()];
    cols.extend(x.columns().map(|c| c.to_vec()));
    DesignMatrix::from_columns(&cols).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn fwl_coefficient_matches_full_fit(seed in any::<u64>(), n in 10usize..=60, k in 1usize..=4) {
        let inst = random_instance(seed, n, k);
        let z = inst.assignment.indicator();
        let fit = least_squares(&full_design(&z, &inst.x), &inst.y).unwrap();
        let res = fwl_residualize(&z, &inst.x).unwrap();
        let fwl = dot(&res, &inst.y) / dot(&res, &res);
        prop_assert!((fit.coefficients[1] - fwl).abs() <= 1e-9 * fwl.abs().max(1.0));
    }

    #[test]
    fn vif_is_at_least_one_and_dual_to_r_squared(seed in any::<u64>(), n in 10usize..=60, k in 1usize..=4) {
        let inst = random_instance(seed, n, k);
        let z = inst.assignment.indicator();
        let v = vif(&z, &inst.x).unwrap();
        let r2 = r_squared_z_given_x(&z, &inst.x).unwrap();
        prop_assert!(v >= 1.0 - 1e-12);
        prop_assert!((v * (1.0 - r2) - 1.0).abs() <= 1e-9);
        prop_assert!((v - 1.0 / (1.0 - r2)).abs() <= 1e-9 * v);
    }

    #[test]
    fn residuals_are_orthogonal_to_the_design(seed in any::<u64>(), n in 10usize..=60, k in 1usize..=4) {
        let inst = random_instance(seed, n, k);
        let design = full_design(&inst.assignment.indicator(), &inst.x);
        let fit = least_squares(&design, &inst.y).unwrap();
        let rnorm = dot(&fit.residuals, &fit.residuals).sqrt();
        for col in design.columns() {
            let cnorm = dot(col, col).sqrt();
            prop_assert!(dot(col, &fit.residuals).abs() <= 1e-8 * cnorm * rnorm.max(f64::MIN_POSITIVE));
        }
        for i in 0..n {
            prop_assert!((inst.y[i] - fit.fitted[i] - fit.residuals[i]).abs() <= 1e-10);
        }
        prop_assert!((fit.rss - rnorm * rnorm).abs() <= 1e-10 * fit.rss.max(1.0));
        prop_assert_eq!(fit.dof, n - k - 2);
    }

    #[test]
    fn orthogonal_covariates_leave_the_estimate_unchanged(seed in any::<u64>(), n in 10usize..=60, k in 1usize..=3) {
        let inst = random_instance(seed, n, k);
        let a = &inst.assignment;
        // Removing arm means makes every column centred and orthogonal to z.
        let cols: Vec<Vec<f64>> = inst.x.columns().map(|c| {
            let m1 = (0..n).filter(|&i| a.is_treated(i)).map(|i| c[i]).sum::<f64>() / a.n1() as f64;
            let m0 = (0..n).filter(|&i| !a.is_treated(i)).map(|i| c[i]).sum::<f64>() / a.n0() as f64;
            (0..n).map(|i| c[i] - if a.is_treated(i) { m1 } else { m0 }).collect()
        }).collect();
        let x = DesignMatrix::from_columns(&cols).unwrap();
        let adjusted = ancova_estimator(&inst.y, a, &x).unwrap().tau_hat;
        let unadjusted = unadjusted_estimator(&inst.y, a).unwrap().tau_hat;
        prop_assert!((adjusted - unadjusted).abs() <= 1e-9);
        let z = a.indicator();
        let res = fwl_residualize(&z, &x).unwrap();
        let zc = centered(&z);
        for (r, c) in res.iter().zip(&zc) {
            prop_assert!((r - c).abs() <= 1e-10);
        }
        prop_assert!((vif(&z, &x).unwrap() - 1.0).abs() <= 1e-9);
    }
}

#[test]
fn hand_instance_has_vif_two() {
    let z = [1.0, 1.0, 0.0, 0.0];
    let x = DesignMatrix::column_vector(&[1.0, 0.0, 0.0, -1.0]).unwrap();
    assert!((vif(&z, &x).unwrap() - 2.0).abs() <= 1e-10);
    assert!((r_squared_z_given_x(&z, &x).unwrap() - 0.5).abs() <= 1e-12);
    let res = fwl_residualize(&z, &x).unwrap();
    for (r, want) in res.iter().zip([0.0, 0.5, -0.5, 0.0]) {
        assert!((r - want).abs() <= 1e-12);
    }
    let a = Assignment::from_indicator(&z).unwrap();
    assert_eq!(a.n1(), 2);
}
