//! Precision shrinkage curves: the proposed detection-optimal shrinker, its
//! limiting oracle, and the comparator estimators.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::detector::{detection_criterion, VarianceOperator};
use crate::error::{Error, Result};
use crate::linalg::{DataMatrix, SymMat};
use crate::mp_kernel::{denominator_floor, pv_hilbert, shrinkage_ratio, DensityOracle, LwCurve, Tabulated};

/// Precision eigenvalues `f(λᵢ)` aligned with the sample spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct ShrinkageCurve {
    pub values: Vec<f64>,
    pub label: String,
}

impl ShrinkageCurve {
    pub fn new(values: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Numeric(format!(
                "shrinkage values must be finite and nonnegative, found {bad}"
            )));
        }
        Ok(Self {
            values,
            label: label.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// CSV with header `lambda,value,label`.
    pub fn to_csv(&self, lambda: &[f64]) -> Result<String> {
        if lambda.len() != self.len() {
            return Err(Error::Dimension(format!(
                "{} eigenvalues for a curve of length {}",
                lambda.len(),
                self.len()
            )));
        }
        let mut out = String::from("lambda,value,label\n");
        for (l, v) in lambda.iter().zip(&self.values) {
            let _ = writeln!(out, "{l},{v},{}", self.label);
        }
        Ok(out)
    }
}

impl AsRef<[f64]> for ShrinkageCurve {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PriorMode {
    /// Isotropic signal prior, `Ω ∝ I`.
    #[default]
    Identity,
    /// Signal prior matched to the population covariance, `Ω ∝ Σ`.
    CovarianceMatched,
}

impl std::str::FromStr for PriorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Self::Identity),
            "covariance_matched" => Ok(Self::CovarianceMatched),
            other => Err(Error::Config(format!("unsupported prior mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    pub mode: PriorMode,
    #[serde(default = "default_scale")]
    pub scale: f64,
}

fn default_scale() -> f64 {
    1.0
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self::identity()
    }
}

impl PriorSpec {
    pub fn identity() -> Self {
        Self {
            mode: PriorMode::Identity,
            scale: 1.0,
        }
    }

    pub fn covariance_matched() -> Self {
        Self {
            mode: PriorMode::CovarianceMatched,
            scale: 1.0,
        }
    }
}

/// Prior weights `h̄ₙ(λᵢ)`.
pub fn hbar_values(prior: &PriorSpec, curve: &LwCurve) -> Result<Vec<f64>> {
    if !(prior.scale > 0.0) || !prior.scale.is_finite() {
        return Err(Error::Config(format!(
            "prior scale must be positive, got {}",
            prior.scale
        )));
    }
    Ok(match prior.mode {
        PriorMode::Identity => vec![prior.scale; curve.p()],
        PriorMode::CovarianceMatched => curve.d_tilde.iter().map(|d| d * prior.scale).collect(),
    })
}

/// Intermediate vectors of the proposed shrinker, all evaluated at the `λᵢ`.
#[derive(Debug, Clone)]
pub struct ProposedShrinkIntermediates {
    pub hbar: Vec<f64>,
    /// Kernel estimate of the Hilbert transform of the prior density.
    pub h_n: Vec<f64>,
    pub g_n: Vec<f64>,
    pub gbar_n: Vec<f64>,
    pub xi_n: Vec<f64>,
    pub eta_n: Vec<f64>,
    /// Values before the positive-part clip.
    pub unclipped: Vec<f64>,
}

pub fn proposed_shrinker(
    curve: &LwCurve,
    prior: &PriorSpec,
) -> Result<(ShrinkageCurve, ProposedShrinkIntermediates)> {
    let hbar = hbar_values(prior, curve)?;
    proposed_shrinker_with_weights(curve, &hbar)
}

/// Proposed shrinker for explicit prior weights `h̄ₙ(λᵢ)`.
pub fn proposed_shrinker_with_weights(
    curve: &LwCurve,
    hbar: &[f64],
) -> Result<(ShrinkageCurve, ProposedShrinkIntermediates)> {
    let p = curve.p();
    if hbar.len() != p {
        return Err(Error::Dimension(format!(
            "{} prior weights for p = {p}",
            hbar.len()
        )));
    }
    if curve.phi_n >= 1.0 {
        return Err(Error::Regime("proposed shrinker needs p < n".into()));
    }
    let est = curve.estimator();
    let phi = curve.phi_n;
    let lambda = &curve.lambda;

    let h_n: Vec<f64> = lambda.iter().map(|&x| est.weighted_hilbert(hbar, x)).collect();
    let g_n: Vec<f64> = lambda
        .iter()
        .zip(&curve.hw_tilde)
        .map(|(&x, &hw)| 1.0 - phi - phi * PI * x * hw)
        .collect();
    let gbar_n: Vec<f64> = lambda.iter().map(|&x| -phi * PI * x).collect();

    let mut xi_n = Vec::with_capacity(p);
    let mut eta_n = Vec::with_capacity(p);
    for i in 0..p {
        let x = lambda[i];
        let scale = curve.d_tilde[i] * x;
        if !(scale > denominator_floor(x)) {
            return Err(Error::Numeric(format!(
                "d̃·λ = {scale:e} underflows the floor at λ = {x}"
            )));
        }
        let (g, gb, h, hh) = (g_n[i], gbar_n[i], hbar[i], h_n[i]);
        xi_n.push((g * g * h + g * gb * hh) / scale);
        eta_n.push((gb * gb * hh + gb * g * h) / scale);
    }

    let unclipped: Vec<f64> = lambda
        .iter()
        .zip(&xi_n)
        .map(|(&x, &xi)| xi - est.weighted_hilbert(&eta_n, x))
        .collect();
    let values = unclipped.iter().map(|v| v.max(0.0)).collect();

    Ok((
        ShrinkageCurve::new(values, "proposed")?,
        ProposedShrinkIntermediates {
            hbar: hbar.to_vec(),
            h_n,
            g_n,
            gbar_n,
            xi_n,
            eta_n,
            unclipped,
        },
    ))
}

/// Tabulated limiting optimal shrinker `f*` for a density oracle and prior
/// weight function `h̄`. Every Hilbert transform is a principal-value
/// quadrature on a uniform grid over the support.
#[derive(Debug, Clone)]
pub struct FStarOracle {
    oracle: DensityOracle,
    hbar_table: Tabulated,
    h_table: Tabulated,
    u_table: Tabulated,
}

pub const FSTAR_GRID_POINTS: usize = 4001;

impl FStarOracle {
    pub fn new(
        oracle: &DensityOracle,
        hbar: impl Fn(f64) -> f64,
        grid_points: usize,
    ) -> Result<Self> {
        let (a, b) = oracle.support;
        let phi = oracle.phi;
        let hbar_table = Tabulated::from_fn(a, b, grid_points, &hbar);
        let h_table = Tabulated::from_fn(a, b, grid_points, |x| hbar(x) * oracle.w(x));

        let n = grid_points;
        let mut u = vec![0.0; n];
        for (k, slot) in u.iter_mut().enumerate().take(n - 1).skip(1) {
            let x = h_table.node(k);
            let w = oracle.w(x);
            if w == 0.0 {
                continue;
            }
            let big_h = pv_hilbert(&h_table, x)?;
            let hw = oracle.hw(x);
            let g = 1.0 - phi - phi * PI * x * hw;
            let gb = -phi * PI * x;
            let delta = shrinkage_ratio(phi, x, w, hw);
            *slot = w * (gb * gb * big_h + gb * g * hbar_table.values[k]) / (x * delta);
        }
        let u_table = Tabulated {
            start: a,
            step: h_table.step,
            values: u,
        };
        Ok(Self {
            oracle: oracle.clone(),
            hbar_table,
            h_table,
            u_table,
        })
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        let (a, b) = self.oracle.support;
        if !(x > a && x < b) {
            return Err(Error::Domain(format!(
                "f* is only defined inside the support ({a}, {b}), got {x}"
            )));
        }
        let phi = self.oracle.phi;
        let w = self.oracle.w(x);
        let hw = self.oracle.hw(x);
        let g = 1.0 - phi - phi * PI * x * hw;
        let gb = -phi * PI * x;
        let delta = shrinkage_ratio(phi, x, w, hw);
        let hbar = self.hbar_table.interp(x);
        let big_h = pv_hilbert(&self.h_table, x)?;
        let first = (g * g * hbar + g * gb * big_h) / (x * delta);
        Ok(first - pv_hilbert(&self.u_table, x)?)
    }
}

/// Single evaluation of `f*`; build an [`FStarOracle`] for repeated use.
pub fn fstar_oracle(oracle: &DensityOracle, hbar: impl Fn(f64) -> f64, x: f64) -> Result<f64> {
    FStarOracle::new(oracle, hbar, FSTAR_GRID_POINTS)?.eval(x)
}

/// Nonlinear Ledoit–Wolf precision: `1/d̃ₙ(λᵢ)`.
pub fn lw_comparator(curve: &LwCurve) -> Result<ShrinkageCurve> {
    let values = curve
        .d_tilde
        .iter()
        .zip(&curve.lambda)
        .map(|(&d, &x)| 1.0 / d.max(denominator_floor(x)))
        .collect();
    ShrinkageCurve::new(values, "lw")
}

/// Ridge precision `1/(λᵢ + b)`.
pub fn ridge_shrinker(lambda: &[f64], b: f64) -> Result<ShrinkageCurve> {
    if !(b > 0.0) || !b.is_finite() {
        return Err(Error::Domain(format!("ridge offset must be positive, got {b}")));
    }
    if lambda.iter().any(|&l| !(l + b > 0.0)) {
        return Err(Error::Domain("ridge offset does not make every λ + b positive".into()));
    }
    ShrinkageCurve::new(lambda.iter().map(|&l| 1.0 / (l + b)).collect(), "lappw")
}

pub const LAPPW_DEFAULT_GRID_POINTS: usize = 10_000;

/// Outcome of the LAPPW ridge search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RidgeSelection {
    pub b: f64,
    pub criterion: f64,
}

/// Ridge offset maximizing the empirical detection criterion over a log grid
/// on `[mean(λ), 20·max(λ)]`. Ties go to the smaller offset.
pub fn lappw_select_b(curve: &LwCurve, prior: &PriorSpec, grid_points: usize) -> Result<f64> {
    let op = VarianceOperator::new(curve);
    let hbar = hbar_values(prior, curve)?;
    Ok(lappw_search(curve, &op, &hbar, grid_points)?.b)
}

pub fn lappw_grid(lambda: &[f64], grid_points: usize) -> Result<Vec<f64>> {
    if grid_points < 2 {
        return Err(Error::Config(format!(
            "LAPPW grid needs at least 2 points, got {grid_points}"
        )));
    }
    let lo = lambda.iter().sum::<f64>() / lambda.len() as f64;
    let hi = 20.0 * lambda.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (llo, lhi) = (lo.ln(), hi.ln());
    Ok((0..grid_points)
        .map(|k| {
            if k == grid_points - 1 {
                hi
            } else if k == 0 {
                lo
            } else {
                (llo + (lhi - llo) * k as f64 / (grid_points - 1) as f64).exp()
            }
        })
        .collect())
}

pub fn lappw_search(
    curve: &LwCurve,
    op: &VarianceOperator,
    hbar: &[f64],
    grid_points: usize,
) -> Result<RidgeSelection> {
    let grid = lappw_grid(&curve.lambda, grid_points)?;
    let mut best: Option<RidgeSelection> = None;
    let mut f = vec![0.0; curve.p()];
    for &b in &grid {
        for (slot, &l) in f.iter_mut().zip(&curve.lambda) {
            *slot = 1.0 / (l + b);
        }
        let u = op.criterion(&f, hbar)?.u;
        if best.is_none_or(|cur| u > cur.criterion) {
            best = Some(RidgeSelection { b, criterion: u });
        }
    }
    Ok(best.expect("grid is nonempty"))
}

/// Convenience wrapper returning the selected ridge curve.
pub fn lappw_shrinker(curve: &LwCurve, prior: &PriorSpec, grid_points: usize) -> Result<ShrinkageCurve> {
    let b = lappw_select_b(curve, prior, grid_points)?;
    ridge_shrinker(&curve.lambda, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TylerSettings {
    #[serde(default = "TylerSettings::default_rho")]
    pub rho: f64,
    #[serde(default = "TylerSettings::default_tol")]
    pub tol: f64,
    #[serde(default = "TylerSettings::default_max_iter")]
    pub max_iter: usize,
}

impl TylerSettings {
    fn default_rho() -> f64 {
        0.1
    }
    fn default_tol() -> f64 {
        1e-8
    }
    fn default_max_iter() -> usize {
        500
    }
}

impl Default for TylerSettings {
    fn default() -> Self {
        Self {
            rho: 0.1,
            tol: 1e-8,
            max_iter: 500,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TylerEstimate {
    pub scatter: SymMat,
    pub iterations: usize,
    /// Relative Frobenius change of the final iteration.
    pub residual: f64,
}

/// Regularized Tyler M-estimator of scatter, trace-normalized to `p`.
pub fn tyler_estimator(x: &DataMatrix, rho: f64, tol: f64, max_iter: usize) -> Result<TylerEstimate> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::Domain(format!("Tyler rho must lie in [0, 1), got {rho}")));
    }
    let p = x.p();
    let n = x.n();
    let centered = x.centered();
    let mut sigma = DMatrix::<f64>::identity(p, p);
    let mut residual = f64::INFINITY;
    for iter in 1..=max_iter {
        let chol = nalgebra::Cholesky::new(sigma.clone())
            .ok_or_else(|| Error::Numeric("Tyler iterate lost positive definiteness".into()))?;
        let whitened = chol
            .l()
            .solve_lower_triangular(&centered)
            .ok_or_else(|| Error::Numeric("triangular solve failed".into()))?;
        let mut weighted = centered.clone();
        for (i, mut col) in weighted.column_iter_mut().enumerate() {
            let d = whitened.column(i).norm_squared();
            if !(d > 0.0) {
                return Err(Error::Input(format!(
                    "sample {i} vanishes after centering; Tyler weights are undefined"
                )));
            }
            col /= d;
        }
        let mut next = (&weighted * centered.transpose()) * ((1.0 - rho) * p as f64 / n as f64);
        for k in 0..p {
            next[(k, k)] += rho;
        }
        next = (&next + next.transpose()) * 0.5;
        next *= p as f64 / next.trace();
        residual = (&next - &sigma).norm() / sigma.norm();
        sigma = next;
        if residual <= tol {
            return Ok(TylerEstimate {
                scatter: SymMat::symmetrized(sigma),
                iterations: iter,
                residual,
            });
        }
    }
    Err(Error::Convergence {
        iterations: max_iter,
        residual,
    })
}

/// `f ≡ 1`, the plain Euclidean detector.
pub fn identity_shrinker(p: usize) -> ShrinkageCurve {
    ShrinkageCurve {
        values: vec![1.0; p],
        label: "identity".into(),
    }
}

/// Inverse sample eigenvalues (classical Hotelling's T²).
pub fn hotelling_shrinker(lambda: &[f64]) -> Result<ShrinkageCurve> {
    let lmax = lambda.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let floor = 1e-10 * lmax;
    if let Some(bad) = lambda.iter().find(|&&l| !(l > floor)) {
        return Err(Error::Regime(format!(
            "sample covariance is near-singular (eigenvalue {bad:e} <= {floor:e}); Hotelling's T² needs p < n"
        )));
    }
    ShrinkageCurve::new(lambda.iter().map(|l| 1.0 / l).collect(), "hotelling")
}

/// Criterion `Ũₙ(f)` for a curve under a prior; shorthand used by comparisons.
pub fn criterion_for(curve: &LwCurve, f: &ShrinkageCurve, prior: &PriorSpec) -> Result<f64> {
    let hbar = hbar_values(prior, curve)?;
    Ok(detection_criterion(&f.values, &hbar, curve)?.u)
}
