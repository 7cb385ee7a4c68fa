//! Synthetic Monte-Carlo experiments: covariance models, sub-Gaussian
//! sampling, signal injection and score emission.

use std::fs;
use std::path::Path;

use log::{info, warn};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::TailConstants;
use crate::error::{Error, Result};
use crate::eval::{evaluate_to_dir, power_at_fpr, roc, write_scores, ScoreRecord};
use crate::linalg::{inverse_spd, sqrt_psd, DataMatrix, SymMat};
use crate::methods::{build_scorer, Fit, Method, MethodSettings};
use crate::rng::{substream, Role};
use crate::shrinkage::{PriorMode, PriorSpec, TylerSettings, LAPPW_DEFAULT_GRID_POINTS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ComponentDist {
    #[default]
    Uniform,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceModel {
    /// Piecewise log-linear spectrum with condition number `kappa`.
    #[default]
    PiecewiseLogLinear,
    /// Uniform[0,1] bulk plus a rank-40 component, each in a random basis.
    Standard,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSettings {
    #[serde(default = "CalibrationSettings::default_pilot_trials")]
    pub pilot_trials: usize,
    #[serde(default = "CalibrationSettings::default_target_power")]
    pub target_power: f64,
    #[serde(default = "CalibrationSettings::default_fpr")]
    pub fpr: f64,
}

impl CalibrationSettings {
    fn default_pilot_trials() -> usize {
        20
    }
    fn default_target_power() -> f64 {
        0.5
    }
    fn default_fpr() -> f64 {
        0.1
    }
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        Self {
            pilot_trials: 20,
            target_power: 0.5,
            fpr: 0.1,
        }
    }
}

fn default_kappa() -> f64 {
    100.0
}
fn default_trials() -> usize {
    100
}
fn default_tests() -> usize {
    50
}
fn default_lappw_grid() -> usize {
    LAPPW_DEFAULT_GRID_POINTS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub p: usize,
    pub n: usize,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    /// Signal norm; calibrated against the oracle detector when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub prior: PriorSpec,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_tests")]
    pub tests_per_trial_h0: usize,
    #[serde(default = "default_tests")]
    pub tests_per_trial_h1: usize,
    #[serde(default)]
    pub component_dist: ComponentDist,
    #[serde(default)]
    pub covariance: CovarianceModel,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "Method::default_comparison")]
    pub methods: Vec<Method>,
    #[serde(default = "default_lappw_grid")]
    pub lappw_grid_points: usize,
    #[serde(default)]
    pub tyler: TylerSettings,
    #[serde(default)]
    pub calibration: CalibrationSettings,
    #[serde(default)]
    pub tail: TailConstants,
}

impl ExperimentConfig {
    pub fn new(p: usize, n: usize) -> Self {
        Self {
            p,
            n,
            kappa: default_kappa(),
            gamma: None,
            prior: PriorSpec::identity(),
            trials: default_trials(),
            tests_per_trial_h0: default_tests(),
            tests_per_trial_h1: default_tests(),
            component_dist: ComponentDist::Uniform,
            covariance: CovarianceModel::PiecewiseLogLinear,
            seed: 0,
            methods: Method::default_comparison(),
            lappw_grid_points: LAPPW_DEFAULT_GRID_POINTS,
            tyler: TylerSettings::default(),
            calibration: CalibrationSettings::default(),
            tail: TailConstants::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.n < 3 || self.p == 0 {
            return Err(Error::Config(format!("need p >= 1 and n >= 3, got p = {}, n = {}", self.p, self.n)));
        }
        if !(self.kappa >= 1.0) {
            return Err(Error::Config(format!("kappa must be >= 1, got {}", self.kappa)));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0) || !g.is_finite() {
                return Err(Error::Config(format!("gamma must be positive, got {g}")));
            }
        }
        if self.tests_per_trial_h0 == 0 || self.tests_per_trial_h1 == 0 {
            return Err(Error::Config("tests per trial must be positive".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods selected".into()));
        }
        if self.p >= self.n && self.methods.iter().any(|m| m.is_spectral()) {
            return Err(Error::Config(format!(
                "spectral methods need p < n, got p = {}, n = {}",
                self.p, self.n
            )));
        }
        if self.covariance == CovarianceModel::PiecewiseLogLinear && self.p < 42 {
            return Err(Error::Config(format!(
                "the piecewise log-linear spectrum needs p >= 42, got {}",
                self.p
            )));
        }
        if self.covariance == CovarianceModel::Standard && self.p < 40 {
            return Err(Error::Config("the standard covariance needs p >= 40".into()));
        }
        if !(self.calibration.fpr > 0.0 && self.calibration.fpr < 1.0)
            || !(self.calibration.target_power > 0.0 && self.calibration.target_power < 1.0)
            || self.calibration.pilot_trials == 0
        {
            return Err(Error::Config("invalid calibration settings".into()));
        }
        Ok(())
    }

    pub fn method_settings(&self) -> MethodSettings {
        MethodSettings {
            prior: self.prior,
            lappw_grid_points: self.lappw_grid_points,
            tyler: self.tyler,
        }
    }
}

/// Eigenvalues `{κ^(i/40)}ᵢ₌₁..₄₀ ∪ {10^((i−1)/(40(p−41)))}ᵢ₌₁..ₚ₋₄₀`, ascending.
pub fn piecewise_eigenvalues(p: usize, kappa: f64) -> Result<Vec<f64>> {
    if p < 42 {
        return Err(Error::Config(format!(
            "the piecewise spectrum needs p >= 42 (got {p}); supply an explicit eigenvalue list instead"
        )));
    }
    if !(kappa >= 1.0) {
        return Err(Error::Domain(format!("kappa must be >= 1, got {kappa}")));
    }
    let mut ev: Vec<f64> = (1..=40).map(|i| kappa.powf(i as f64 / 40.0)).collect();
    let denom = 40.0 * (p - 41) as f64;
    ev.extend((1..=p - 40).map(|i| 10f64.powf((i - 1) as f64 / denom)));
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Haar-distributed orthogonal matrix from the QR factorization of a
/// Gaussian matrix with the signs of `R`'s diagonal folded into `Q`.
pub fn haar_orthogonal(p: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(p, p, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..p {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

fn rotate(q: &DMatrix<f64>, ev: &[f64]) -> SymMat {
    let d = DMatrix::from_diagonal(&DVector::from_column_slice(ev));
    SymMat::symmetrized(q * d * q.transpose())
}

pub fn make_covariance(p: usize, kappa: f64, seed: u64) -> Result<SymMat> {
    let ev = piecewise_eigenvalues(p, kappa)?;
    let mut rng = substream(seed, 0, Role::Covariance);
    Ok(rotate(&haar_orthogonal(p, &mut rng), &ev))
}

/// Uniform[0,1] eigenvalues in one random basis plus a rank-40 component
/// with eigenvalues `10^((40−j)/10)`, `j = 0..39`, in an independent one.
pub fn make_standard_covariance(p: usize, seed: u64) -> Result<SymMat> {
    if p < 40 {
        return Err(Error::Config(format!("the standard covariance needs p >= 40, got {p}")));
    }
    let mut rng = substream(seed, 0, Role::Covariance);
    let unif = Uniform::new(0.0, 1.0).expect("valid range");
    let bulk: Vec<f64> = (0..p).map(|_| unif.sample(&mut rng)).collect();
    let q1 = haar_orthogonal(p, &mut rng);
    let q2 = haar_orthogonal(p, &mut rng);
    let mut spikes = vec![0.0; p];
    for (j, s) in spikes.iter_mut().take(40).enumerate() {
        *s = 10f64.powf((40 - j) as f64 / 10.0);
    }
    let a = rotate(&q1, &bulk).into_inner();
    let b = rotate(&q2, &spikes).into_inner();
    Ok(SymMat::symmetrized(a + b))
}

pub fn population_covariance(cfg: &ExperimentConfig) -> Result<SymMat> {
    match cfg.covariance {
        CovarianceModel::PiecewiseLogLinear => make_covariance(cfg.p, cfg.kappa, cfg.seed),
        CovarianceModel::Standard => make_standard_covariance(cfg.p, cfg.seed),
        CovarianceModel::Identity => Ok(SymMat::identity(cfg.p)),
    }
}

fn component(dist: ComponentDist, rng: &mut impl Rng) -> f64 {
    match dist {
        ComponentDist::Gaussian => StandardNormal.sample(rng),
        ComponentDist::Uniform => {
            let r = 3f64.sqrt();
            rng.random_range(-r..=r)
        }
    }
}

pub fn components(p: usize, n: usize, dist: ComponentDist, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(p, n, |_, _| component(dist, rng))
}

/// Population quantities reused by every trial.
#[derive(Debug, Clone)]
pub struct Population {
    pub sigma: SymMat,
    pub sigma_half: SymMat,
}

impl Population {
    pub fn new(sigma: SymMat) -> Result<Self> {
        // reject non-PD input before taking the root
        inverse_spd(&sigma)?;
        let sigma_half = sqrt_psd(&sigma)?;
        Ok(Self { sigma, sigma_half })
    }

    pub fn p(&self) -> usize {
        self.sigma.p()
    }

    pub fn training(&self, n: usize, dist: ComponentDist, rng: &mut impl Rng) -> Result<DataMatrix> {
        DataMatrix::new(self.sigma_half.values() * components(self.p(), n, dist, rng))
    }

    pub fn noise(&self, dist: ComponentDist, rng: &mut impl Rng) -> DVector<f64> {
        let z = components(self.p(), 1, dist, rng);
        (self.sigma_half.values() * z).column(0).into_owned()
    }

    /// Unit direction `z/‖z‖` with `z ∼ N(0, Ω)`.
    pub fn signal_direction(&self, prior: &PriorSpec, rng: &mut impl Rng) -> DVector<f64> {
        let g = DVector::from_fn(self.p(), |_, _| StandardNormal.sample(rng));
        let z = match prior.mode {
            PriorMode::Identity => g,
            PriorMode::CovarianceMatched => self.sigma_half.values() * g,
        };
        let norm = z.norm();
        z / norm
    }

    pub fn test_vector(
        &self,
        prior: &PriorSpec,
        gamma: f64,
        h1: bool,
        dist: ComponentDist,
        rng: &mut impl Rng,
    ) -> DVector<f64> {
        let noise = self.noise(dist, rng);
        if h1 {
            noise + self.signal_direction(prior, rng) * gamma
        } else {
            noise
        }
    }
}

pub fn sample_training(sigma: &SymMat, n: usize, dist: ComponentDist, seed: u64) -> Result<DataMatrix> {
    let pop = Population::new(sigma.clone())?;
    pop.training(n, dist, &mut substream(seed, 0, Role::Training))
}

pub fn sample_test(sigma: &SymMat, prior: &PriorSpec, gamma: f64, h1: bool, seed: u64) -> Result<DVector<f64>> {
    if h1 && !(gamma > 0.0) {
        return Err(Error::Domain(format!("H1 test vectors need gamma > 0, got {gamma}")));
    }
    let pop = Population::new(sigma.clone())?;
    let role = if h1 { Role::TestH1 } else { Role::TestH0 };
    Ok(pop.test_vector(prior, gamma, h1, ComponentDist::Gaussian, &mut substream(seed, 0, role)))
}

#[derive(Debug, Clone)]
pub struct MethodScores {
    pub method: Method,
    /// `(z, raw)` per test vector.
    pub h0: Vec<(f64, f64)>,
    pub h1: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct TrialOutput {
    pub trial_index: usize,
    pub scores: Vec<MethodScores>,
    pub failures: Vec<(Method, String)>,
}

fn trial_data(cfg: &ExperimentConfig, pop: &Population, gamma: f64, t: usize) -> Result<(DataMatrix, Vec<DVector<f64>>, Vec<DVector<f64>>)> {
    let seed = cfg.seed;
    let x = pop.training(cfg.n, cfg.component_dist, &mut substream(seed, t as u64, Role::Training))?;
    let mut r0 = substream(seed, t as u64, Role::TestH0);
    let h0 = (0..cfg.tests_per_trial_h0)
        .map(|_| pop.test_vector(&cfg.prior, gamma, false, cfg.component_dist, &mut r0))
        .collect();
    let mut r1 = substream(seed, t as u64, Role::TestH1);
    let h1 = (0..cfg.tests_per_trial_h1)
        .map(|_| pop.test_vector(&cfg.prior, gamma, true, cfg.component_dist, &mut r1))
        .collect();
    Ok((x, h0, h1))
}

pub fn score_all(
    methods: &[Method],
    x: &DataMatrix,
    settings: &MethodSettings,
    sigma_true: Option<&SymMat>,
    sets: &[&[DVector<f64>]],
) -> Result<(Vec<(Method, Vec<Vec<(f64, f64)>>)>, Vec<(Method, String)>)> {
    let fit = Fit::new(x)?;
    let mut ok = Vec::new();
    let mut failures = Vec::new();
    for &m in methods {
        let fitted = build_scorer(m, x, &fit, settings, sigma_true).and_then(|s| {
            sets.iter()
                .map(|set| set.iter().map(|y| s.score(y)).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()
        });
        match fitted {
            Ok(v) => ok.push((m, v)),
            Err(e) => failures.push((m, e.to_string())),
        }
    }
    Ok((ok, failures))
}

fn run_trial(cfg: &ExperimentConfig, pop: &Population, gamma: f64, t: usize) -> Result<TrialOutput> {
    let (x, h0, h1) = trial_data(cfg, pop, gamma, t)?;
    let (ok, failures) = score_all(&cfg.methods, &x, &cfg.method_settings(), Some(&pop.sigma), &[&h0, &h1])?;
    for (m, e) in &failures {
        warn!("trial {t}: method {m} skipped: {e}");
    }
    let scores = ok
        .into_iter()
        .map(|(method, mut v)| {
            let h1 = v.pop().expect("two sets");
            let h0 = v.pop().expect("two sets");
            MethodScores { method, h0, h1 }
        })
        .collect();
    Ok(TrialOutput {
        trial_index: t,
        scores,
        failures,
    })
}

pub(crate) fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        if t == 0 {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        b = b.num_threads(t);
    }
    b.build().map_err(|e| Error::Config(e.to_string()))
}

/// Signal norm at which the true-covariance Mahalanobis detector reaches the
/// target power. Pilot data are fixed across candidate values so the
/// bisection sees a monotone response.
pub fn calibrate_gamma(cfg: &ExperimentConfig, pop: &Population) -> Result<f64> {
    let cal = &cfg.calibration;
    let m = inverse_spd(&pop.sigma)?.into_inner();
    // per test vector: (e'Me, e'Md, d'Md) so T(γ) = a + 2γb + γ²c
    let mut h0 = Vec::new();
    let mut h1 = Vec::new();
    for t in 0..cal.pilot_trials {
        let mut rng = substream(cfg.seed, t as u64, Role::Calibration);
        let x = pop.training(cfg.n, cfg.component_dist, &mut rng)?;
        let xbar = x.mean();
        for _ in 0..cfg.tests_per_trial_h0 {
            let e = pop.noise(cfg.component_dist, &mut rng) - &xbar;
            h0.push(e.dot(&(&m * &e)));
        }
        for _ in 0..cfg.tests_per_trial_h1 {
            let e = pop.noise(cfg.component_dist, &mut rng) - &xbar;
            let d = pop.signal_direction(&cfg.prior, &mut rng);
            let md = &m * &d;
            h1.push((e.dot(&(&m * &e)), e.dot(&md), d.dot(&md)));
        }
    }
    let power = |gamma: f64| -> Result<f64> {
        let s1: Vec<f64> = h1.iter().map(|(a, b, c)| a + 2.0 * gamma * b + gamma * gamma * c).collect();
        Ok(power_at_fpr(&roc(&h0, &s1)?, cal.fpr))
    };
    let mut lo = 1e-6 * pop.sigma.trace().sqrt();
    let mut hi = pop.sigma.trace().sqrt();
    let mut expand = 0;
    while power(hi)? < cal.target_power {
        hi *= 2.0;
        expand += 1;
        if expand > 60 {
            return Err(Error::Numeric("gamma calibration failed to bracket the target power".into()));
        }
    }
    if power(lo)? >= cal.target_power {
        return Ok(lo);
    }
    for _ in 0..100 {
        let mid = (lo * hi).sqrt();
        if power(mid)? >= cal.target_power {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi / lo - 1.0 < 1e-10 {
            break;
        }
    }
    Ok(hi)
}

/// Resolved experiment: the configuration with its signal norm fixed.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub cfg: ExperimentConfig,
    pub population: Population,
    pub gamma: f64,
    pub gamma_calibrated: bool,
}

impl Experiment {
    pub fn prepare(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let population = Population::new(population_covariance(cfg)?)?;
        let (gamma, gamma_calibrated) = match cfg.gamma {
            Some(g) => (g, false),
            None => {
                let g = calibrate_gamma(cfg, &population)?;
                info!("calibrated gamma = {g}");
                (g, true)
            }
        };
        let mut cfg = cfg.clone();
        cfg.gamma = Some(gamma);
        Ok(Self {
            cfg,
            population,
            gamma,
            gamma_calibrated,
        })
    }

    pub fn run(&self, threads: Option<usize>) -> Result<Vec<TrialOutput>> {
        let pool = thread_pool(threads)?;
        pool.install(|| {
            (0..self.cfg.trials)
                .into_par_iter()
                .map(|t| run_trial(&self.cfg, &self.population, self.gamma, t))
                .collect()
        })
    }
}

pub fn run_trials(cfg: &ExperimentConfig) -> Result<Vec<TrialOutput>> {
    Experiment::prepare(cfg)?.run(None)
}

pub fn score_records(outputs: &[TrialOutput]) -> Vec<ScoreRecord> {
    let mut out = Vec::new();
    for t in outputs {
        for ms in &t.scores {
            for (label, set) in [(0u8, &ms.h0), (1u8, &ms.h1)] {
                for &(z, raw) in set {
                    out.push(ScoreRecord {
                        trial: t.trial_index,
                        method: ms.method.name().to_string(),
                        label_h1: label,
                        score_z: z,
                        score_raw: raw,
                    });
                }
            }
        }
    }
    out
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    package: &'a str,
    version: &'a str,
    seed: u64,
    gamma: f64,
    gamma_calibrated: bool,
    trials: usize,
    methods: Vec<&'a str>,
    skipped: Vec<String>,
}

/// Runs the experiment and writes `scores.csv`, `config_echo.toml`,
/// `manifest.json`, `roc.csv`, `summary.csv` and ROC plots into `out`.
pub fn simulate_to_dir(cfg: &ExperimentConfig, out: &Path, threads: Option<usize>) -> Result<Vec<ScoreRecord>> {
    let exp = Experiment::prepare(cfg)?;
    let outputs = exp.run(threads)?;
    let records = score_records(&outputs);
    if records.is_empty() {
        return Err(Error::Numeric("every method failed in every trial".into()));
    }
    fs::create_dir_all(out)?;
    write_scores(&records, &out.join("scores.csv"))?;
    fs::write(out.join("config_echo.toml"), exp.cfg.to_toml()?)?;
    let manifest = Manifest {
        package: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        seed: exp.cfg.seed,
        gamma: exp.gamma,
        gamma_calibrated: exp.gamma_calibrated,
        trials: exp.cfg.trials,
        methods: exp.cfg.methods.iter().map(|m| m.name()).collect(),
        skipped: outputs
            .iter()
            .flat_map(|t| t.failures.iter().map(move |(m, e)| format!("trial {}: {m}: {e}", t.trial_index)))
            .collect(),
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Numeric(e.to_string()))?;
    fs::write(out.join("manifest.json"), json + "\n")?;
    evaluate_to_dir(&records, out)?;
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{eigh, sample_covariance};

    #[test]
    fn piecewise_spectrum_extremes() {
        let ev = piecewise_eigenvalues(200, 100.0).unwrap();
        assert_eq!(ev.len(), 200);
        assert!((ev[199] - 100.0).abs() < 1e-12);
        assert_eq!(ev[0], 1.0);
        let ev1 = piecewise_eigenvalues(200, 1.0).unwrap();
        assert!((ev1[199] / ev1[0] - 10f64.powf(1.0 / 40.0)).abs() < 1e-12);
        assert!(matches!(piecewise_eigenvalues(41, 10.0), Err(Error::Config(_))));
    }

    #[test]
    fn covariance_roundtrip() {
        let sigma = make_covariance(60, 1e4, 3).unwrap();
        let spec = eigh(&sigma, 100).unwrap();
        let expect = piecewise_eigenvalues(60, 1e4).unwrap();
        for (a, b) in spec.eigenvalues.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-8 * b.max(1.0));
        }
        assert!((spec.eigenvalues[59] / spec.eigenvalues[0] - 1e4).abs() < 1e-6);
    }

    #[test]
    fn component_moments_and_support() {
        let mut rng = substream(1, 0, Role::Training);
        for dist in [ComponentDist::Uniform, ComponentDist::Gaussian] {
            let z = components(1, 100_000, dist, &mut rng);
            let mean = z.mean();
            let var = z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 1e5;
            assert!((0.97..=1.03).contains(&var), "{dist:?}: {var}");
            if dist == ComponentDist::Uniform {
                assert!(z.iter().all(|v| v.abs() <= 3f64.sqrt()));
            }
        }
    }

    #[test]
    fn identity_training_lln() {
        let x = sample_training(&SymMat::identity(50), 5000, ComponentDist::Uniform, 4).unwrap();
        let s = sample_covariance(&x);
        assert!((s.values() - DMatrix::identity(50, 50)).amax() <= 0.1);
    }

    #[test]
    fn signal_norm_and_isotropy() {
        let pop = Population::new(make_covariance(50, 10.0, 5).unwrap()).unwrap();
        let prior = PriorSpec::identity();
        let mut rng = substream(5, 0, Role::TestH1);
        let mut mean = DVector::zeros(50);
        for _ in 0..10_000 {
            let d = pop.signal_direction(&prior, &mut rng);
            assert!(((d.norm() * 2.5) - 2.5).abs() < 1e-12);
            mean += d;
        }
        assert!((mean / 1e4).norm() <= 0.05);
        assert!(sample_test(&pop.sigma, &prior, 0.0, true, 1).is_err());
    }

    #[test]
    fn config_toml_roundtrip() {
        let text = "p = 50\nn = 100\nkappa = 10.0\ntrials = 2\nseed = 9\nmethods = [\"proposed\", \"cq\"]\n\n[prior]\nmode = \"covariance_matched\"\n\n[tail]\nmode = \"hanson_wright\"\nc = 0.25\nC = 1.5\n";
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(cfg.prior.mode, PriorMode::CovarianceMatched);
        assert_eq!(cfg.tail.big_c, 1.5);
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert!(matches!(ExperimentConfig::from_toml("p = 50\nn = 100\nbogus = 1"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::from_toml("p = 50\nn = 40"), Err(Error::Config(_))));
    }

    #[test]
    fn identity_method_reduces_to_euclidean() {
        let mut cfg = ExperimentConfig::new(50, 100);
        cfg.trials = 1;
        cfg.gamma = Some(1.0);
        cfg.tests_per_trial_h0 = 3;
        cfg.tests_per_trial_h1 = 3;
        cfg.methods = vec![Method::Identity];
        let exp = Experiment::prepare(&cfg).unwrap();
        let out = exp.run(Some(1)).unwrap();
        let (x, h0, _) = trial_data(&exp.cfg, &exp.population, 1.0, 0).unwrap();
        for (y, (_, raw)) in h0.iter().zip(&out[0].scores[0].h0) {
            assert!((raw - (y - x.mean()).norm_squared()).abs() < 1e-9 * raw);
        }
    }

    #[test]
    fn calibration_hits_target() {
        let mut cfg = ExperimentConfig::new(50, 100);
        cfg.kappa = 10.0;
        let pop = Population::new(population_covariance(&cfg).unwrap()).unwrap();
        let g = calibrate_gamma(&cfg, &pop).unwrap();
        assert!(g > 0.0 && g.is_finite());
    }
}
