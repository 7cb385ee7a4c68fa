//! The shrinkage-regularized Hotelling statistic, its empirical
//! standardization, the detection criterion and tail bounds.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{DataMatrix, Spectrum};
use crate::mp_kernel::{bandwidth, semicircle_kernel, LwCurve, DEFAULT_BANDWIDTH_EXPONENT};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionScore {
    pub t2: f64,
    pub mu_tilde: f64,
    pub sigma_tilde: f64,
    /// Null standard deviation of `t2`, `σ̃·√(2p)`.
    pub scale: f64,
    pub z: f64,
    pub p: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriterionValue {
    pub u: f64,
    pub numerator: f64,
    pub sigma_tilde: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TailMode {
    #[default]
    GaussianExact,
    HansonWright,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailConstants {
    #[serde(default)]
    pub mode: TailMode,
    #[serde(default = "TailConstants::default_c")]
    pub c: f64,
    #[serde(rename = "C", default = "TailConstants::default_big_c")]
    pub big_c: f64,
}

impl TailConstants {
    fn default_c() -> f64 {
        0.125
    }
    fn default_big_c() -> f64 {
        1.0
    }
}

impl Default for TailConstants {
    fn default() -> Self {
        Self {
            mode: TailMode::GaussianExact,
            c: 0.125,
            big_c: 1.0,
        }
    }
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::Dimension(format!("{what} has length {got}, expected {want}")));
    }
    Ok(())
}

/// `T̃² = (y − x̄)' f(S) (y − x̄)` computed in the eigenbasis.
pub fn srht(y: &DVector<f64>, xbar: &DVector<f64>, spec: &Spectrum, curve: impl AsRef<[f64]>) -> Result<f64> {
    let f = curve.as_ref();
    let p = spec.p();
    check_len("test vector", y.len(), p)?;
    check_len("mean vector", xbar.len(), p)?;
    check_len("curve", f.len(), p)?;
    let v = spec.project(&(y - xbar))?;
    Ok(v.iter().zip(f).map(|(vi, fi)| fi * vi * vi).sum())
}

/// `μ̃ = p⁻¹ Σ f(λᵢ) d̃(λᵢ)`.
pub fn mu_tilde(f_vals: &[f64], d_vals: &[f64]) -> Result<f64> {
    check_len("d values", d_vals.len(), f_vals.len())?;
    if f_vals.is_empty() {
        return Err(Error::Dimension("empty curve".into()));
    }
    Ok(f_vals.iter().zip(d_vals).map(|(f, d)| f * d).sum::<f64>() / f_vals.len() as f64)
}

/// `Γ̃f(λᵢ) = f(λᵢ) − (π/n) Σⱼ (f(λⱼ) − f(λᵢ)) d̃(λⱼ) K_j(λᵢ)`.
pub fn gamma_tilde(f_vals: &[f64], lambda: &[f64], d_vals: &[f64], n: usize, i: usize) -> Result<f64> {
    let p = f_vals.len();
    check_len("lambda", lambda.len(), p)?;
    check_len("d values", d_vals.len(), p)?;
    if i >= p {
        return Err(Error::Dimension(format!("index {i} out of range for p = {p}")));
    }
    let delta = bandwidth(n, DEFAULT_BANDWIDTH_EXPONENT)?;
    let x = lambda[i];
    let mut acc = 0.0;
    for j in 0..p {
        let h = delta * lambda[j];
        let (_, big_k) = semicircle_kernel((x - lambda[j]) / h);
        acc += (f_vals[j] - f_vals[i]) * d_vals[j] * big_k / h;
    }
    Ok(f_vals[i] - PI / n as f64 * acc)
}

/// Precomputed kernel weights `Wᵢⱼ = d̃ⱼ K_j(λᵢ)` so that `Γ̃f` and `σ̃²` cost
/// one matrix-vector product per curve.
#[derive(Debug, Clone)]
pub struct VarianceOperator {
    weights: DMatrix<f64>,
    row_sums: Vec<f64>,
    lambda: Vec<f64>,
    d_tilde: Vec<f64>,
    n: usize,
}

impl VarianceOperator {
    pub fn new(curve: &LwCurve) -> Self {
        let p = curve.p();
        let est = curve.estimator();
        let weights = DMatrix::from_fn(p, p, |i, j| curve.d_tilde[j] * est.hilbert_kernel(j, curve.lambda[i]));
        let row_sums = (0..p).map(|i| weights.row(i).sum()).collect();
        Self {
            weights,
            row_sums,
            lambda: curve.lambda.clone(),
            d_tilde: curve.d_tilde.clone(),
            n: curve.n,
        }
    }

    pub fn p(&self) -> usize {
        self.lambda.len()
    }

    pub fn gamma(&self, f: &[f64]) -> Result<Vec<f64>> {
        check_len("curve", f.len(), self.p())?;
        let fv = DVector::from_column_slice(f);
        let wf = &self.weights * fv;
        let c = PI / self.n as f64;
        Ok((0..self.p())
            .map(|i| f[i] - c * (wf[i] - f[i] * self.row_sums[i]))
            .collect())
    }

    pub fn sigma2(&self, f: &[f64]) -> Result<f64> {
        let g = self.gamma(f)?;
        Ok(g.iter()
            .zip(&self.lambda)
            .zip(&self.d_tilde)
            .map(|((g, l), d)| g * g * l * d)
            .sum::<f64>()
            / self.p() as f64)
    }

    pub fn criterion(&self, f: &[f64], hbar: &[f64]) -> Result<CriterionValue> {
        check_len("prior weights", hbar.len(), self.p())?;
        let s2 = self.sigma2(f)?;
        if !(s2 > 0.0) || !s2.is_finite() {
            return Err(Error::Degenerate(format!("σ̃² = {s2}; the criterion is undefined")));
        }
        let sigma_tilde = s2.sqrt();
        let numerator = hbar.iter().zip(f).map(|(h, f)| h * f).sum::<f64>() / self.p() as f64;
        Ok(CriterionValue {
            u: numerator / sigma_tilde,
            numerator,
            sigma_tilde,
        })
    }

    pub fn mu(&self, f: &[f64]) -> Result<f64> {
        mu_tilde(f, &self.d_tilde)
    }
}

/// `σ̃² = p⁻¹ Σ [Γ̃f(λᵢ)]² λᵢ d̃(λᵢ)`.
pub fn sigma_tilde2(f_vals: &[f64], curve: &LwCurve) -> Result<f64> {
    let p = curve.p();
    check_len("curve", f_vals.len(), p)?;
    let est = curve.estimator();
    let c = PI / curve.n as f64;
    let mut total = 0.0;
    for i in 0..p {
        let x = curve.lambda[i];
        let acc: f64 = (0..p)
            .map(|j| (f_vals[j] - f_vals[i]) * curve.d_tilde[j] * est.hilbert_kernel(j, x))
            .sum();
        let g = f_vals[i] - c * acc;
        total += g * g * x * curve.d_tilde[i];
    }
    Ok(total / p as f64)
}

fn score_from(t2: f64, mu: f64, s2: f64, p: usize) -> Result<DetectionScore> {
    if !(s2 > 0.0) || !s2.is_finite() {
        return Err(Error::Degenerate(format!("σ̃² = {s2}; cannot standardize")));
    }
    let sigma_tilde = s2.sqrt();
    // a Gaussian quadratic form z'Az has variance 2·tr(A²)
    let scale = sigma_tilde * (2.0 * p as f64).sqrt();
    Ok(DetectionScore {
        t2,
        mu_tilde: mu,
        sigma_tilde,
        scale,
        z: (t2 - mu * p as f64) / scale,
        p,
    })
}

pub fn standardize(t2: f64, f_vals: &[f64], curve: &LwCurve, p: usize) -> Result<DetectionScore> {
    check_len("curve", f_vals.len(), curve.p())?;
    let mu = mu_tilde(f_vals, &curve.d_tilde)?;
    let s2 = sigma_tilde2(f_vals, curve)?;
    score_from(t2, mu, s2, p)
}

/// `Ũ(f) = [p⁻¹ Σ h̄(λᵢ) f(λᵢ)] / σ̃(f)`.
pub fn detection_criterion(f_vals: &[f64], hbar_vals: &[f64], curve: &LwCurve) -> Result<CriterionValue> {
    check_len("prior weights", hbar_vals.len(), f_vals.len())?;
    let s2 = sigma_tilde2(f_vals, curve)?;
    if !(s2 > 0.0) || !s2.is_finite() {
        return Err(Error::Degenerate(format!("σ̃² = {s2}; the criterion is undefined")));
    }
    let sigma_tilde = s2.sqrt();
    let numerator = hbar_vals.iter().zip(f_vals).map(|(h, f)| h * f).sum::<f64>() / f_vals.len() as f64;
    Ok(CriterionValue {
        u: numerator / sigma_tilde,
        numerator,
        sigma_tilde,
    })
}

fn erfc(x: f64) -> f64 {
    statrs::function::erf::erfc(x)
}

/// Upper-tail probability bound for the standardized statistic at threshold `τ`.
pub fn significance_bound(tau: f64, tc: &TailConstants) -> f64 {
    match tc.mode {
        TailMode::GaussianExact => 0.5 * erfc(tau / std::f64::consts::SQRT_2),
        TailMode::HansonWright => 2.0 * (-tc.c * tau * tau / tc.big_c.powi(4)).exp(),
    }
}

/// Lower bound on power, `1 − 2exp(−c (u − τ)₊² / C⁴)`. May be negative.
pub fn power_bound(u: f64, tau: f64, tc: &TailConstants) -> f64 {
    let gap = (u - tau).max(0.0);
    1.0 - 2.0 * (-tc.c * gap * gap / tc.big_c.powi(4)).exp()
}

pub fn power_bound_clamped(u: f64, tau: f64, tc: &TailConstants) -> f64 {
    power_bound(u, tau, tc).max(0.0)
}

/// Standardization of a fixed spectral curve, computed once per fit.
#[derive(Debug, Clone, Copy)]
pub struct Standardizer {
    pub mu_tilde: f64,
    pub sigma2: f64,
    pub p: usize,
}

impl Standardizer {
    pub fn new(f_vals: &[f64], op: &VarianceOperator) -> Result<Self> {
        let mu_tilde = op.mu(f_vals)?;
        let sigma2 = op.sigma2(f_vals)?;
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::Degenerate(format!("σ̃² = {sigma2}; cannot standardize")));
        }
        Ok(Self {
            mu_tilde,
            sigma2,
            p: op.p(),
        })
    }

    pub fn score(&self, t2: f64) -> Result<DetectionScore> {
        score_from(t2, self.mu_tilde, self.sigma2, self.p)
    }
}

/// Two-sample mean-difference statistic with the second sample the single
/// test vector.
#[derive(Debug, Clone)]
pub struct CqStatistic {
    xbar: DVector<f64>,
    cross: f64,
    trace_s: f64,
    scale: f64,
}

impl CqStatistic {
    pub fn fit(x: &DataMatrix) -> Result<Self> {
        let n = x.n();
        if n < 3 {
            return Err(Error::Input("the CQ statistic needs n >= 3".into()));
        }
        let nf = n as f64;
        let xbar = x.mean();
        let sq_norms: f64 = x.values().column_iter().map(|c| c.norm_squared()).sum();
        let cross = (nf * nf * xbar.norm_squared() - sq_norms) / (nf * (nf - 1.0));

        let centered = x.centered();
        // tr(S) and tr(S²) through the n×n Gram matrix
        let gram = centered.transpose() * &centered / (nf - 1.0);
        let trace_s = gram.trace();
        let trace_s2 = gram.norm_squared();
        let tr_sigma2 = (nf - 1.0) * (nf - 1.0) / ((nf - 2.0) * (nf + 1.0))
            * (trace_s2 - trace_s * trace_s / (nf - 1.0));
        if !(tr_sigma2 > 0.0) {
            return Err(Error::Degenerate(format!(
                "estimated tr(Σ²) = {tr_sigma2} is not positive"
            )));
        }
        let scale = (2.0 * tr_sigma2 * (1.0 + 2.0 / nf)).sqrt();
        Ok(Self {
            xbar,
            cross,
            trace_s,
            scale,
        })
    }

    /// Returns `(z, raw)`.
    pub fn score(&self, y: &DVector<f64>) -> Result<(f64, f64)> {
        check_len("test vector", y.len(), self.xbar.len())?;
        let raw = y.norm_squared() - 2.0 * self.xbar.dot(y) + self.cross;
        Ok(((raw - self.trace_s) / self.scale, raw))
    }
}
