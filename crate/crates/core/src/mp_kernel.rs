//! Kernel estimates of the Marčenko–Pastur density and its Hilbert transform,
//! the Ledoit–Wolf shrinkage curve built from them, and quadrature oracles
//! for the limiting quantities.
//!
//! The Hilbert transform convention throughout is
//! `𝓗f(x) = π⁻¹ p.v.∫ f(t)/(t − x) dt`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Exponent of the bandwidth `Δ = n^exponent`.
pub const DEFAULT_BANDWIDTH_EXPONENT: f64 = -1.0 / 3.0;

/// Relative floor on the shrinkage denominator, applied as `1e-12·max(1, x²)`.
pub const DENOMINATOR_FLOOR: f64 = 1e-12;

/// Grid resolution used by [`identity_mp_oracle`] for its quadratures.
pub const ORACLE_GRID_POINTS: usize = 20_001;

/// Semicircle kernel `k` and its Hilbert transform `K`.
pub fn semicircle_kernel(x: f64) -> (f64, f64) {
    let k = (4.0 - x * x).max(0.0).sqrt() / (2.0 * PI);
    let tail = if x == 0.0 {
        0.0
    } else {
        x.signum() * (x * x - 4.0).max(0.0).sqrt()
    };
    let big_k = (-x + tail) / (2.0 * PI);
    (k, big_k)
}

pub fn bandwidth(n: usize, exponent: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::Domain(format!("bandwidth needs n >= 2, got {n}")));
    }
    let delta = (n as f64).powf(exponent);
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!(
            "bandwidth n^{exponent} = {delta} is outside (0, 1)"
        )));
    }
    Ok(delta)
}

/// `1e-12·max(1, x²)`.
pub fn denominator_floor(x: f64) -> f64 {
    DENOMINATOR_FLOOR * (x * x).max(1.0)
}

/// `x / ([1 − φ − πφx·hw]² + π²φ²x²w²)` with the floored denominator.
pub fn shrinkage_ratio(phi: f64, x: f64, w: f64, hw: f64) -> f64 {
    let g = 1.0 - phi - PI * phi * x * hw;
    let big_g = PI * phi * x * w;
    x / (g * g + big_g * big_g).max(denominator_floor(x))
}

/// Sum of scaled semicircle kernels centred at the sample eigenvalues, with
/// the bandwidth proportional to each eigenvalue.
#[derive(Debug, Clone)]
pub struct KernelEstimator {
    lambda: Vec<f64>,
    delta: f64,
}

impl KernelEstimator {
    pub fn new(lambda: &[f64], n: usize) -> Result<Self> {
        Self::with_exponent(lambda, n, DEFAULT_BANDWIDTH_EXPONENT)
    }

    pub fn with_exponent(lambda: &[f64], n: usize, exponent: f64) -> Result<Self> {
        if lambda.is_empty() {
            return Err(Error::Dimension("empty spectrum".into()));
        }
        if let Some(bad) = lambda.iter().find(|&&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::Domain(format!(
                "kernel estimates need positive eigenvalues, found {bad}"
            )));
        }
        Ok(Self {
            lambda: lambda.to_vec(),
            delta: bandwidth(n, exponent)?,
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn p(&self) -> usize {
        self.lambda.len()
    }

    /// `(k_i(x), K_i(x))` for the kernel centred at eigenvalue `i`.
    pub fn kernel_pair(&self, i: usize, x: f64) -> (f64, f64) {
        let s = self.delta * self.lambda[i];
        let (k, big_k) = semicircle_kernel((x - self.lambda[i]) / s);
        (k / s, big_k / s)
    }

    /// `K_i(x)`.
    pub fn hilbert_kernel(&self, i: usize, x: f64) -> f64 {
        self.kernel_pair(i, x).1
    }

    pub fn density(&self, x: f64) -> f64 {
        let total: f64 = (0..self.p()).map(|i| self.kernel_pair(i, x).0).sum();
        total / self.p() as f64
    }

    pub fn hilbert(&self, x: f64) -> f64 {
        let total: f64 = (0..self.p()).map(|i| self.hilbert_kernel(i, x)).sum();
        total / self.p() as f64
    }

    /// `p⁻¹ Σ weightsᵢ K_i(x)`.
    pub fn weighted_hilbert(&self, weights: &[f64], x: f64) -> f64 {
        debug_assert_eq!(weights.len(), self.p());
        let total: f64 = weights
            .iter()
            .enumerate()
            .map(|(i, &wt)| wt * self.hilbert_kernel(i, x))
            .sum();
        total / self.p() as f64
    }

    /// Smallest interval outside which every kernel vanishes.
    pub fn support(&self) -> (f64, f64) {
        let lo = self.lambda.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.lambda.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo * (1.0 - 2.0 * self.delta), hi * (1.0 + 2.0 * self.delta))
    }
}

pub fn density_estimate(lambda: &[f64], n: usize, x: f64) -> Result<f64> {
    Ok(KernelEstimator::new(lambda, n)?.density(x))
}

pub fn hilbert_estimate(lambda: &[f64], n: usize, x: f64) -> Result<f64> {
    Ok(KernelEstimator::new(lambda, n)?.hilbert(x))
}

/// Kernel estimates and the Ledoit–Wolf shrinkage values at each sample eigenvalue.
#[derive(Debug, Clone)]
pub struct LwCurve {
    pub lambda: Vec<f64>,
    pub w_tilde: Vec<f64>,
    pub hw_tilde: Vec<f64>,
    pub d_tilde: Vec<f64>,
    pub phi_n: f64,
    pub n: usize,
    estimator: KernelEstimator,
}

impl LwCurve {
    pub fn p(&self) -> usize {
        self.lambda.len()
    }

    pub fn estimator(&self) -> &KernelEstimator {
        &self.estimator
    }

    /// The shrinkage formula evaluated at an arbitrary point.
    pub fn d_at(&self, x: f64) -> f64 {
        shrinkage_ratio(
            self.phi_n,
            x,
            self.estimator.density(x),
            self.estimator.hilbert(x),
        )
    }

    /// CSV with header `lambda,w_tilde,hw_tilde,d_tilde`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda,w_tilde,hw_tilde,d_tilde\n");
        for i in 0..self.p() {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                self.lambda[i], self.w_tilde[i], self.hw_tilde[i], self.d_tilde[i]
            );
        }
        out
    }
}

pub fn lw_curve(lambda: &[f64], p: usize, n: usize) -> Result<LwCurve> {
    lw_curve_with_exponent(lambda, p, n, DEFAULT_BANDWIDTH_EXPONENT)
}

pub fn lw_curve_with_exponent(
    lambda: &[f64],
    p: usize,
    n: usize,
    exponent: f64,
) -> Result<LwCurve> {
    if lambda.len() != p {
        return Err(Error::Dimension(format!(
            "{} eigenvalues supplied for p = {p}",
            lambda.len()
        )));
    }
    if p >= n {
        return Err(Error::Regime(format!(
            "shrinkage curve needs p < n, got p = {p}, n = {n}"
        )));
    }
    let estimator = KernelEstimator::with_exponent(lambda, n, exponent)?;
    let phi_n = p as f64 / n as f64;
    let w_tilde: Vec<f64> = lambda.iter().map(|&x| estimator.density(x)).collect();
    let hw_tilde: Vec<f64> = lambda.iter().map(|&x| estimator.hilbert(x)).collect();
    let d_tilde = lambda
        .iter()
        .zip(w_tilde.iter().zip(&hw_tilde))
        .map(|(&x, (&w, &hw))| shrinkage_ratio(phi_n, x, w, hw))
        .collect();
    Ok(LwCurve {
        lambda: lambda.to_vec(),
        w_tilde,
        hw_tilde,
        d_tilde,
        phi_n,
        n,
        estimator,
    })
}

/// A function tabulated on a uniform grid `start + i·step`.
#[derive(Debug, Clone)]
pub struct Tabulated {
    pub start: f64,
    pub step: f64,
    pub values: Vec<f64>,
}

impl Tabulated {
    pub fn from_fn(start: f64, end: f64, points: usize, f: impl Fn(f64) -> f64) -> Self {
        assert!(points >= 3 && end > start);
        let step = (end - start) / (points - 1) as f64;
        let values = (0..points).map(|i| f(start + i as f64 * step)).collect();
        Self {
            start,
            step,
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn node(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    pub fn end(&self) -> f64 {
        self.node(self.len() - 1)
    }

    /// Linear interpolation; zero outside the grid.
    pub fn interp(&self, x: f64) -> f64 {
        if x < self.start || x > self.end() {
            return 0.0;
        }
        let u = (x - self.start) / self.step;
        let i = (u.floor() as usize).min(self.len() - 2);
        let frac = u - i as f64;
        self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
    }

    /// Trapezoid integral over the grid span.
    pub fn integral(&self) -> f64 {
        let n = self.len();
        let inner: f64 = self.values[1..n - 1].iter().sum();
        self.step * (inner + 0.5 * (self.values[0] + self.values[n - 1]))
    }
}

/// Principal-value Hilbert transform of a tabulated function at `x`, which
/// must lie strictly inside the grid span. The function is taken to vanish
/// outside the grid.
///
/// The singularity is subtracted, `p.v.∫ f/(t−x) = ∫ (f(t)−f(x))/(t−x) dt +
/// f(x)·ln((b−x)/(x−a))`, and the regular part is integrated with the
/// trapezoid rule. At a grid node the removable value is the central
/// difference, which makes the rule equivalent to symmetric exclusion of
/// the two straddling points.
pub fn pv_hilbert(f: &Tabulated, x: f64) -> Result<f64> {
    let (a, b) = (f.start, f.end());
    if !(x > a && x < b) {
        return Err(Error::Domain(format!(
            "principal value needs x strictly inside [{a}, {b}], got {x}"
        )));
    }
    let fx = f.interp(x);
    let n = f.len();
    let h = f.step;
    let mut sum = 0.0;
    for j in 0..n {
        let t = f.node(j);
        let dt = t - x;
        let g = if dt.abs() <= 1e-9 * h {
            let lo = j.saturating_sub(1);
            let hi = (j + 1).min(n - 1);
            (f.values[hi] - f.values[lo]) / (f.node(hi) - f.node(lo))
        } else {
            (f.values[j] - fx) / dt
        };
        let weight = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
        sum += weight * g;
    }
    let regular = sum * h;
    Ok((regular + fx * ((b - x) / (x - a)).ln()) / PI)
}

/// Limiting Marčenko–Pastur quantities for a known population model.
#[derive(Clone)]
pub struct DensityOracle {
    pub phi: f64,
    pub support: (f64, f64),
    w: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    w_table: Tabulated,
}

impl std::fmt::Debug for DensityOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DensityOracle")
            .field("phi", &self.phi)
            .field("support", &self.support)
            .field("grid_points", &self.w_table.len())
            .finish()
    }
}

impl DensityOracle {
    pub fn from_density(
        phi: f64,
        support: (f64, f64),
        grid_points: usize,
        w: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        check_phi(phi)?;
        let (a, b) = support;
        if !(b > a) {
            return Err(Error::Domain(format!("empty support [{a}, {b}]")));
        }
        let w_table = Tabulated::from_fn(a, b, grid_points, |x| w(x));
        Ok(Self {
            phi,
            support,
            w: Arc::new(w),
            w_table,
        })
    }

    pub fn w(&self, x: f64) -> f64 {
        let (a, b) = self.support;
        if x <= a || x >= b {
            0.0
        } else {
            (self.w)(x)
        }
    }

    /// `𝓗w(x)`: principal value inside the support, ordinary quadrature outside.
    pub fn hw(&self, x: f64) -> f64 {
        let (a, b) = self.support;
        if x > a && x < b {
            pv_hilbert(&self.w_table, x).expect("x is inside the grid")
        } else {
            let t = &self.w_table;
            let shifted = Tabulated {
                start: t.start,
                step: t.step,
                values: (0..t.len())
                    .map(|i| t.values[i] / (t.node(i) - x))
                    .collect(),
            };
            shifted.integral() / PI
        }
    }

    pub fn delta(&self, x: f64) -> f64 {
        shrinkage_ratio(self.phi, x, self.w(x), self.hw(x))
    }

    pub fn w_table(&self) -> &Tabulated {
        &self.w_table
    }

    pub fn mass(&self) -> f64 {
        self.w_table.integral()
    }
}

fn check_phi(phi: f64) -> Result<()> {
    if phi > 0.0 && phi < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "aspect ratio phi must lie in (0, 1), got {phi}"
        )))
    }
}

/// Marčenko–Pastur law for identity population covariance.
pub fn identity_mp_oracle(phi: f64) -> Result<DensityOracle> {
    identity_mp_oracle_with_grid(phi, ORACLE_GRID_POINTS)
}

pub fn identity_mp_oracle_with_grid(phi: f64, grid_points: usize) -> Result<DensityOracle> {
    check_phi(phi)?;
    let a = (1.0 - phi.sqrt()).powi(2);
    let b = (1.0 + phi.sqrt()).powi(2);
    DensityOracle::from_density(phi, (a, b), grid_points, move |x| {
        if x <= a || x >= b {
            0.0
        } else {
            ((x - a) * (b - x)).sqrt() / (2.0 * PI * phi * x)
        }
    })
}

/// Ledoit–Péché shrinkage function `δ(x)` of the oracle.
pub fn delta_curve(oracle: &DensityOracle, x: f64) -> f64 {
    oracle.delta(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    const INV_PI: f64 = 1.0 / PI;

    #[test]
    fn kernel_closed_form_values() {
        let (k, big_k) = semicircle_kernel(0.0);
        assert!((k - INV_PI).abs() < 1e-15);
        assert_eq!(big_k, 0.0);

        let (k, big_k) = semicircle_kernel(2.0);
        assert_eq!(k, 0.0);
        assert!((big_k + INV_PI).abs() < 1e-15);

        let (k, big_k) = semicircle_kernel(3.0);
        assert_eq!(k, 0.0);
        assert!((big_k - (-3.0 + 5f64.sqrt()) / (2.0 * PI)).abs() < 1e-15);
        assert!((big_k + 0.1215836).abs() < 1e-7);
    }

    #[test]
    fn kernel_is_odd_and_supported() {
        for &x in &[0.1, 0.7, 1.9, 2.0, 2.5, 7.0] {
            let (kp, big_kp) = semicircle_kernel(x);
            let (km, big_km) = semicircle_kernel(-x);
            assert_eq!(kp, km);
            assert_eq!(big_kp, -big_km);
            assert!(kp >= 0.0);
        }
        assert_eq!(semicircle_kernel(2.01).0, 0.0);
    }

    #[test]
    fn single_eigenvalue_estimates() {
        let lambda = [1.0];
        let w = density_estimate(&lambda, 1000, 1.0).unwrap();
        // Δ = 1000^(-1/3) = 0.1 up to rounding
        assert!((w - 10.0 * INV_PI).abs() < 1e-10);
        assert!((w - 3.1831).abs() < 1e-4);
        assert_eq!(hilbert_estimate(&lambda, 1000, 1.0).unwrap(), 0.0);
        let delta = bandwidth(1000, DEFAULT_BANDWIDTH_EXPONENT).unwrap();
        let hw = hilbert_estimate(&lambda, 1000, 1.0 + 3.0 * delta).unwrap();
        assert!((hw - semicircle_kernel(3.0).1 / delta).abs() < 1e-10);
        assert!((hw + 1.2157).abs() < 1e-3);
    }

    #[test]
    fn density_vanishes_outside_support() {
        let lambda = [0.5, 1.0, 2.0];
        let est = KernelEstimator::new(&lambda, 1000).unwrap();
        let (lo, hi) = est.support();
        assert_eq!(est.density(lo - 1e-9), 0.0);
        assert_eq!(est.density(hi + 1e-9), 0.0);
        assert_eq!(est.density(10.0), 0.0);
    }

    #[test]
    fn estimates_reject_nonpositive_eigenvalues() {
        assert!(matches!(
            density_estimate(&[1.0, 0.0], 100, 1.0),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            hilbert_estimate(&[-1.0], 100, 1.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn lw_single_eigenvalue() {
        let curve = lw_curve(&[1.0], 1, 1000).unwrap();
        let phi: f64 = 0.001;
        let w = 10.0 * INV_PI;
        let expect = 1.0 / ((1.0 - phi).powi(2) + phi * phi * PI * PI * w * w);
        assert!((curve.d_tilde[0] - expect).abs() < 1e-9);
        assert!((curve.d_tilde[0] - 1.0019).abs() < 1e-4);
    }

    #[test]
    fn lw_rejects_wide_data() {
        assert!(matches!(
            lw_curve(&[1.0, 2.0], 2, 2),
            Err(Error::Regime(_))
        ));
    }

    #[test]
    fn lw_csv_header() {
        let curve = lw_curve(&[1.0, 2.0], 2, 100).unwrap();
        let csv = curve.to_csv();
        assert!(csv.starts_with("lambda,w_tilde,hw_tilde,d_tilde\n"));
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn pv_of_semicircle_matches_closed_form() {
        let table = Tabulated::from_fn(-2.0, 2.0, 40_001, |t| semicircle_kernel(t).0);
        for &x in &[0.0, 1.0, 1.5] {
            let pv = pv_hilbert(&table, x).unwrap();
            assert!(
                (pv - semicircle_kernel(x).1).abs() < 1e-3,
                "x = {x}: {pv} vs {}",
                semicircle_kernel(x).1
            );
        }
    }

    #[test]
    fn pv_of_even_function_vanishes() {
        let table = Tabulated::from_fn(-1.0, 3.0, 4001, |t| (-(t - 1.0) * (t - 1.0)).exp());
        assert!(pv_hilbert(&table, 1.0).unwrap().abs() < 1e-6);
    }

    #[test]
    fn pv_rejects_points_outside() {
        let table = Tabulated::from_fn(0.0, 1.0, 11, |t| t);
        assert!(pv_hilbert(&table, 0.0).is_err());
        assert!(pv_hilbert(&table, 1.5).is_err());
    }

    #[test]
    fn identity_oracle_support_and_density() {
        let oracle = identity_mp_oracle(0.2).unwrap();
        let (a, b) = oracle.support;
        assert!((a - 0.30557).abs() < 1e-5);
        assert!((b - 2.09443).abs() < 1e-5);
        let expect = (0.69443f64 * 1.09443).sqrt() / (0.4 * PI);
        assert!((oracle.w(1.0) - expect).abs() < 1e-4);
        assert!((oracle.w(1.0) - 0.6937).abs() < 1e-4);
        assert!((oracle.mass() - 1.0).abs() < 1e-6);
        assert!(identity_mp_oracle(1.0).is_err());
        assert!(identity_mp_oracle(0.0).is_err());
    }

    #[test]
    fn identity_oracle_delta_is_one() {
        let oracle = identity_mp_oracle(0.2).unwrap();
        let (a, b) = oracle.support;
        for i in 1..20 {
            let x = a + (b - a) * i as f64 / 20.0;
            assert!((delta_curve(&oracle, x) - 1.0).abs() < 2e-2, "x = {x}");
        }
    }

    #[test]
    fn delta_outside_support_drops_density_term() {
        let oracle = identity_mp_oracle(0.2).unwrap();
        let x = 3.0;
        let phi = oracle.phi;
        let expect = x / (1.0 - phi - PI * phi * x * oracle.hw(x)).powi(2);
        assert!((delta_curve(&oracle, x) - expect).abs() < 1e-12);
    }
}
