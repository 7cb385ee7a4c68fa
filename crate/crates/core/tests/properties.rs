use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use srht::detector::{detection_criterion, srht, standardize};
use srht::eval::{auc, power_at_fpr, roc};
use srht::linalg::{apply_spectral, eigh, sample_covariance, DataMatrix};
use srht::mp_kernel::{lw_curve, semicircle_kernel};
use srht::shrinkage::{lw_comparator, ridge_shrinker};

fn matrix(p: usize, n: usize) -> impl Strategy<Value = DataMatrix> {
    proptest::collection::vec(-3.0f64..3.0, p * n)
        .prop_map(move |v| DataMatrix::new(DMatrix::from_vec(p, n, v)).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn spectral_roundtrip(x in matrix(4, 12), f in proptest::collection::vec(0.1f64..5.0, 4)) {
        let spec = eigh(&sample_covariance(&x), 12).unwrap();
        let m = apply_spectral(&spec, &f).unwrap();
        let back = eigh(&m, 12).unwrap();
        let mut want = f.clone();
        want.sort_by(f64::total_cmp);
        for (a, b) in back.eigenvalues.iter().zip(&want) {
            prop_assert!((a - b).abs() < 1e-9 * b.max(1.0));
        }
    }

    #[test]
    fn srht_depends_on_difference_only(
        x in matrix(5, 20),
        y in proptest::collection::vec(-3.0f64..3.0, 5),
        shift in proptest::collection::vec(-10.0f64..10.0, 5),
    ) {
        let m = DVector::from_vec(shift);
        let y = DVector::from_vec(y);
        let spec = eigh(&sample_covariance(&x), 20).unwrap();
        let curve = lw_curve(spec.eigenvalues(), 5, 20).unwrap();
        let f = ridge_shrinker(spec.eigenvalues(), 0.5).unwrap();
        let t = srht(&y, &x.mean(), &spec, &f).unwrap();

        let mut shifted = x.values().clone();
        for mut c in shifted.column_iter_mut() {
            c += &m;
        }
        let xs = DataMatrix::new(shifted).unwrap();
        let ys = &y + &m;
        let spec_s = eigh(&sample_covariance(&xs), 20).unwrap();
        let curve_s = lw_curve(spec_s.eigenvalues(), 5, 20).unwrap();
        let fs = ridge_shrinker(spec_s.eigenvalues(), 0.5).unwrap();
        let ts = srht(&ys, &xs.mean(), &spec_s, &fs).unwrap();
        prop_assert!((t - ts).abs() < 1e-8 * t.max(1.0));

        let z = standardize(t, &f.values, &curve, 5).unwrap().z;
        let zs = standardize(ts, &fs.values, &curve_s, 5).unwrap().z;
        prop_assert!((z - zs).abs() < 1e-7 * z.abs().max(1.0));
    }

    #[test]
    fn lw_scale_equivariance(x in matrix(6, 30), c in 0.1f64..20.0) {
        let spec = eigh(&sample_covariance(&x), 30).unwrap();
        let l = spec.eigenvalues();
        let lc: Vec<f64> = l.iter().map(|v| v * c).collect();
        let a = lw_curve(l, 6, 30).unwrap();
        let b = lw_curve(&lc, 6, 30).unwrap();
        for (d, dc) in a.d_tilde.iter().zip(&b.d_tilde) {
            prop_assert!((dc - c * d).abs() < 1e-9 * (c * d).max(1e-12));
        }
        let inv = lw_comparator(&a).unwrap();
        prop_assert!(inv.values.iter().all(|v| *v > 0.0 && v.is_finite()));
    }

    #[test]
    fn criterion_is_degree_zero(x in matrix(6, 30), b in 0.01f64..10.0, c in 0.01f64..100.0) {
        let spec = eigh(&sample_covariance(&x), 30).unwrap();
        let curve = lw_curve(spec.eigenvalues(), 6, 30).unwrap();
        let f = ridge_shrinker(spec.eigenvalues(), b).unwrap();
        let fc: Vec<f64> = f.values.iter().map(|v| v * c).collect();
        let h = vec![1.0; 6];
        let u = detection_criterion(&f.values, &h, &curve).unwrap().u;
        let uc = detection_criterion(&fc, &h, &curve).unwrap().u;
        prop_assert!((u - uc).abs() < 1e-12 * u.abs());
    }

    #[test]
    fn kernel_odd_symmetry(x in -10.0f64..10.0) {
        let (k, big_k) = semicircle_kernel(x);
        let (km, big_km) = semicircle_kernel(-x);
        prop_assert_eq!(k, km);
        prop_assert_eq!(big_k, -big_km);
        prop_assert!(k >= 0.0);
    }

    #[test]
    fn roc_invariants(
        h0 in proptest::collection::vec(-5i32..5, 1..30),
        h1 in proptest::collection::vec(-5i32..5, 1..30),
    ) {
        let a: Vec<f64> = h0.iter().map(|&v| v as f64 * 0.5).collect();
        let b: Vec<f64> = h1.iter().map(|&v| v as f64 * 0.5).collect();
        let c = roc(&a, &b).unwrap();
        for w in c.points.windows(2) {
            prop_assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
            prop_assert!(w[1].threshold < w[0].threshold);
        }
        let r = auc(&c);
        prop_assert!((0.0..=1.0).contains(&r));
        prop_assert!((r + auc(&roc(&b, &a).unwrap()) - 1.0).abs() < 1e-12);
        let mut prev = 0.0;
        for k in 1..100 {
            let v = power_at_fpr(&c, k as f64 / 100.0);
            prop_assert!(v >= prev - 1e-15);
            prev = v;
        }
    }
}
