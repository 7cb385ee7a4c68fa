use std::path::PathBuf;

use nalgebra::DVector;

use srht::detector::{mu_tilde, VarianceOperator};
use srht::eval::{roc_csv, roc_for, roc_svg};
use srht::linalg::{apply_spectral, eigh, sample_covariance, DataMatrix, Spectrum, SymMat};
use srht::methods::{build_scorer, Fit, Method, MethodSettings};
use srht::mp_kernel::{identity_mp_oracle, lw_curve, LwCurve};
use srht::rng::{substream, Role};
use srht::rss::RssExperimentConfig;
use srht::shrinkage::{
    hbar_values, hotelling_shrinker, lappw_search, lw_comparator, proposed_shrinker,
    tyler_estimator, PriorSpec,
};
use srht::sim::{make_covariance, ComponentDist, Experiment, ExperimentConfig, Population};

fn training(pop: &Population, n: usize, seed: u64) -> DataMatrix {
    pop.training(n, ComponentDist::Gaussian, &mut substream(seed, 0, Role::Training))
        .unwrap()
}

fn fit(x: &DataMatrix) -> (Spectrum, LwCurve) {
    let spec = eigh(&sample_covariance(x), x.n()).unwrap();
    let curve = lw_curve(spec.eigenvalues(), x.p(), x.n()).unwrap();
    (spec, curve)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn identity_data_reductions() {
    let pop = Population::new(SymMat::identity(200)).unwrap();
    let (_, curve) = fit(&training(&pop, 1000, 1));
    let h = hbar_values(&PriorSpec::covariance_matched(), &curve).unwrap();
    assert!(mean(&h.iter().map(|v| (v - 1.0).abs()).collect::<Vec<_>>()) <= 0.1);
    let lw = lw_comparator(&curve).unwrap();
    assert!(mean(&lw.values.iter().map(|v| (v - 1.0).abs()).collect::<Vec<_>>()) <= 0.1);

    let oracle = identity_mp_oracle(0.2).unwrap();
    assert!((curve.d_at(1.0) - oracle.delta(1.0)).abs() <= 0.05);
}

#[test]
fn proposed_is_bounded() {
    for (sigma, seed) in [(SymMat::identity(200), 2u64), (make_covariance(200, 1e4, 3).unwrap(), 4)] {
        let pop = Population::new(sigma).unwrap();
        let (_, curve) = fit(&training(&pop, 1000, seed));
        let cap = 10.0 * curve.d_tilde.iter().map(|d| 1.0 / d).fold(0.0, f64::max);
        for prior in [PriorSpec::identity(), PriorSpec::covariance_matched()] {
            let (f, _) = proposed_shrinker(&curve, &prior).unwrap();
            let top = f.values.iter().copied().fold(0.0, f64::max);
            // the covariance-matched curve is on the scale of d̃·(1/d̃)² = 1/d̃
            assert!(top <= cap, "{top} > {cap}");
            assert!(f.values.iter().all(|v| *v >= 0.0 && v.is_finite()));
        }
    }
}

#[test]
fn mu_tilde_tracks_true_mean() {
    let pop = Population::new(make_covariance(200, 100.0, 5).unwrap()).unwrap();
    let (spec, curve) = fit(&training(&pop, 1000, 6));
    let f = hotelling_shrinker(spec.eigenvalues()).unwrap();
    let est = mu_tilde(&f.values, &curve.d_tilde).unwrap();
    let truth: f64 = (0..200)
        .map(|i| {
            let u = spec.eigenvectors.column(i);
            f.values[i] * (u.transpose() * pop.sigma.values() * u)[(0, 0)]
        })
        .sum::<f64>()
        / 200.0;
    assert!((est - truth).abs() / truth <= 1000f64.powf(-1.0 / 6.0), "{est} vs {truth}");
}

#[test]
fn lappw_resolution_is_adequate() {
    let pop = Population::new(SymMat::identity(200)).unwrap();
    let (_, curve) = fit(&training(&pop, 1000, 7));
    let op = VarianceOperator::new(&curve);
    let prior = PriorSpec::identity();
    let h = hbar_values(&prior, &curve).unwrap();
    let coarse = lappw_search(&curve, &op, &h, 10_000).unwrap();
    let fine = lappw_search(&curve, &op, &h, 100_000).unwrap();
    assert!(coarse.criterion >= 0.98 * fine.criterion);
}

#[test]
fn tyler_spd_below_sample_size() {
    let pop = Population::new(SymMat::identity(30)).unwrap();
    let x = training(&pop, 20, 8);
    let t = tyler_estimator(&x, 0.1, 1e-8, 500).unwrap();
    assert!((t.scatter.trace() - 30.0).abs() < 1e-10);
    assert!(eigh(&t.scatter, 20).unwrap().eigenvalues[0] > 0.0);
    assert_eq!(t.scatter.values(), &t.scatter.values().transpose());
}

#[test]
fn signal_separation_tracks_criterion() {
    // γ⁴ = 2p puts the expected shift of T̃² at exactly Ũ null standard deviations
    let p = 200;
    let n = 1000;
    let pop = Population::new(SymMat::identity(p)).unwrap();
    let gamma = (2.0 * p as f64).powf(0.25);
    let prior = PriorSpec::identity();
    let settings = MethodSettings::default();
    let mut diffs = Vec::new();
    let mut us = Vec::new();
    for t in 0..100u64 {
        let x = pop.training(n, ComponentDist::Gaussian, &mut substream(30, t, Role::Training)).unwrap();
        let fitd = Fit::new(&x).unwrap();
        let curve = fitd.curve().unwrap();
        let (f, _) = proposed_shrinker(curve, &prior).unwrap();
        let op = VarianceOperator::new(curve);
        us.push(op.criterion(&f.values, &hbar_values(&prior, curve).unwrap()).unwrap().u);
        let s = build_scorer(Method::Proposed, &x, &fitd, &settings, None).unwrap();
        let mut r0 = substream(30, t, Role::TestH0);
        let mut r1 = substream(30, t, Role::TestH1);
        let mut d = 0.0;
        for _ in 0..10 {
            let y0 = pop.test_vector(&prior, gamma, false, ComponentDist::Gaussian, &mut r0);
            let y1 = pop.test_vector(&prior, gamma, true, ComponentDist::Gaussian, &mut r1);
            d += s.score(&y1).unwrap().0 - s.score(&y0).unwrap().0;
        }
        diffs.push(d / 10.0);
    }
    assert!(mean(&diffs) >= 0.8 * mean(&us), "{} vs {}", mean(&diffs), mean(&us));
}

#[test]
fn hotelling_matches_direct_inverse_for_small_p() {
    let pop = Population::new(make_covariance(50, 10.0, 9).unwrap()).unwrap();
    let x = training(&pop, 2000, 10);
    let fitd = Fit::new(&x).unwrap();
    let s = build_scorer(Method::Hotelling, &x, &fitd, &MethodSettings::default(), None).unwrap();
    let y = DVector::from_fn(50, |i, _| (i as f64 * 0.3).cos());
    let v = &y - x.mean();
    let sinv = sample_covariance(&x).values().clone().try_inverse().unwrap();
    let direct = (v.transpose() * sinv * &v)[(0, 0)];
    assert!((s.score(&y).unwrap().1 - direct).abs() < 1e-8 * direct);
    let m = apply_spectral(&fitd.spectrum, hotelling_shrinker(fitd.spectrum.eigenvalues()).unwrap()).unwrap();
    let sinv2 = sample_covariance(&x).values().clone().try_inverse().unwrap();
    assert!((m.values() - &sinv2).amax() < 1e-8 * sinv2.amax());
}

#[test]
fn condition_number_equals_kappa() {
    for kappa in [10.0, 1e2, 1e4] {
        let ev = eigh(&make_covariance(100, kappa, 11).unwrap(), 200).unwrap().eigenvalues;
        assert!((ev[99] / ev[0] / kappa - 1.0).abs() < 1e-8);
    }
}

#[test]
fn svg_is_well_formed_and_stable() {
    let a = roc_for("proposed", &[0.0, 0.5, 1.0], &[0.7, 2.0]).unwrap();
    let b = roc_for("lw", &[0.1, 0.2], &[0.15, 0.3, 0.9]).unwrap();
    let curves = vec![a, b];
    for log in [false, true] {
        let svg = roc_svg(&curves, log);
        roxmltree::Document::parse(&svg).unwrap();
        assert_eq!(svg, roc_svg(&curves, log));
    }
    let total: usize = curves.iter().map(|c| c.points.len()).sum();
    assert_eq!(roc_csv(&curves).lines().count(), 1 + total);
}

fn shipped_configs() -> Vec<PathBuf> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    v.sort();
    v
}

#[test]
fn shipped_configs_give_finite_null_scores() {
    let mut seen = 0;
    for path in shipped_configs() {
        let text = std::fs::read_to_string(&path).unwrap();
        if path.file_name().unwrap() == "rss.toml" {
            RssExperimentConfig::from_toml(&text).unwrap();
            continue;
        }
        let mut cfg = ExperimentConfig::from_toml(&text).unwrap();
        cfg.trials = 3;
        cfg.lappw_grid_points = 300;
        cfg.calibration.pilot_trials = 3;
        let exp = Experiment::prepare(&cfg).unwrap();
        for t in exp.run(None).unwrap() {
            assert!(t.failures.is_empty(), "{path:?}: {:?}", t.failures);
            for ms in &t.scores {
                let z: Vec<f64> = ms.h0.iter().map(|s| s.0).collect();
                assert!(z.iter().all(|v| v.is_finite()), "{path:?} {}", ms.method);
            }
        }
        seen += 1;
    }
    assert!(seen >= 3);
}
