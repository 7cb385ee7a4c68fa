//! Detector methods and their fitted scorers: fit once on a reference
//! sample, then score many test vectors.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::detector::{CqStatistic, Standardizer, VarianceOperator};
use crate::error::{Error, Result};
use crate::linalg::{eigh, inverse_spd, sample_covariance, DataMatrix, Spectrum, SymMat};
use crate::mp_kernel::{lw_curve, LwCurve};
use crate::shrinkage::{
    hbar_values, hotelling_shrinker, identity_shrinker, lappw_search, lw_comparator,
    proposed_shrinker_with_weights, ridge_shrinker, tyler_estimator, PriorSpec, ShrinkageCurve,
    TylerSettings, LAPPW_DEFAULT_GRID_POINTS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Proposed,
    Lw,
    Lappw,
    Tyler,
    Cq,
    Hotelling,
    Identity,
    /// Mahalanobis detector with the true covariance; simulation only.
    Oracle,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Proposed,
        Method::Lw,
        Method::Lappw,
        Method::Tyler,
        Method::Cq,
        Method::Hotelling,
        Method::Identity,
        Method::Oracle,
    ];

    /// Methods that are functions of the sample eigenvalues.
    pub fn is_spectral(self) -> bool {
        matches!(
            self,
            Method::Proposed | Method::Lw | Method::Lappw | Method::Hotelling | Method::Identity
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::Lw => "lw",
            Method::Lappw => "lappw",
            Method::Tyler => "tyler",
            Method::Cq => "cq",
            Method::Hotelling => "hotelling",
            Method::Identity => "identity",
            Method::Oracle => "oracle",
        }
    }

    pub fn default_comparison() -> Vec<Method> {
        vec![
            Method::Proposed,
            Method::Lw,
            Method::Lappw,
            Method::Tyler,
            Method::Cq,
            Method::Hotelling,
            Method::Identity,
        ]
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodSettings {
    pub prior: PriorSpec,
    pub lappw_grid_points: usize,
    pub tyler: TylerSettings,
}

impl Default for MethodSettings {
    fn default() -> Self {
        Self {
            prior: PriorSpec::identity(),
            lappw_grid_points: LAPPW_DEFAULT_GRID_POINTS,
            tyler: TylerSettings::default(),
        }
    }
}

/// Spectral summary of a reference sample shared by all methods.
#[derive(Debug, Clone)]
pub struct Fit {
    pub xbar: DVector<f64>,
    pub s: SymMat,
    pub spectrum: Spectrum,
    /// Present only when `p < n`.
    pub curve: Option<LwCurve>,
    pub op: Option<VarianceOperator>,
}

impl Fit {
    pub fn new(x: &DataMatrix) -> Result<Self> {
        let s = sample_covariance(x);
        let spectrum = eigh(&s, x.n())?;
        let (curve, op) = if x.p() < x.n() && spectrum.eigenvalues[0] > 0.0 {
            let c = lw_curve(spectrum.eigenvalues(), x.p(), x.n())?;
            let op = VarianceOperator::new(&c);
            (Some(c), Some(op))
        } else {
            (None, None)
        };
        Ok(Self {
            xbar: x.mean(),
            s,
            spectrum,
            curve,
            op,
        })
    }

    pub fn curve(&self) -> Result<&LwCurve> {
        self.curve
            .as_ref()
            .ok_or_else(|| Error::Regime("spectral shrinkage needs p < n and a nonsingular S".into()))
    }

    fn op(&self) -> Result<&VarianceOperator> {
        self.op
            .as_ref()
            .ok_or_else(|| Error::Regime("spectral standardization needs p < n".into()))
    }

    pub fn p(&self) -> usize {
        self.xbar.len()
    }

    /// Shrinkage curve of a spectral method.
    pub fn shrinkage(&self, method: Method, settings: &MethodSettings) -> Result<ShrinkageCurve> {
        let lambda = self.spectrum.eigenvalues();
        match method {
            Method::Proposed => {
                let curve = self.curve()?;
                let hbar = hbar_values(&settings.prior, curve)?;
                Ok(proposed_shrinker_with_weights(curve, &hbar)?.0)
            }
            Method::Lw => lw_comparator(self.curve()?),
            Method::Lappw => {
                let curve = self.curve()?;
                let hbar = hbar_values(&settings.prior, curve)?;
                let sel = lappw_search(curve, self.op()?, &hbar, settings.lappw_grid_points)?;
                ridge_shrinker(lambda, sel.b)
            }
            Method::Hotelling => hotelling_shrinker(lambda),
            Method::Identity => Ok(identity_shrinker(self.p())),
            other => Err(Error::Config(format!("'{other}' is not a spectral shrinker"))),
        }
    }
}

/// A fitted detector.
#[derive(Debug, Clone)]
pub enum Scorer {
    Spectral {
        xbar: DVector<f64>,
        /// Transposed eigenvectors.
        ut: DMatrix<f64>,
        f: Vec<f64>,
        standardizer: Standardizer,
    },
    /// Quadratic form in a fixed matrix with plug-in centering and scale.
    Quadratic {
        xbar: DVector<f64>,
        m: DMatrix<f64>,
        center: f64,
        scale: f64,
    },
    Cq(CqStatistic),
}

impl Scorer {
    /// Returns `(z, raw)`.
    pub fn score(&self, y: &DVector<f64>) -> Result<(f64, f64)> {
        match self {
            Scorer::Spectral {
                xbar,
                ut,
                f,
                standardizer,
            } => {
                if y.len() != xbar.len() {
                    return Err(Error::Dimension(format!(
                        "test vector has length {}, expected {}",
                        y.len(),
                        xbar.len()
                    )));
                }
                let v = ut * (y - xbar);
                let t2: f64 = v.iter().zip(f).map(|(vi, fi)| fi * vi * vi).sum();
                Ok((standardizer.score(t2)?.z, t2))
            }
            Scorer::Quadratic {
                xbar,
                m,
                center,
                scale,
            } => {
                if y.len() != xbar.len() {
                    return Err(Error::Dimension(format!(
                        "test vector has length {}, expected {}",
                        y.len(),
                        xbar.len()
                    )));
                }
                let v = y - xbar;
                let t2 = v.dot(&(m * &v));
                Ok(((t2 - center) / scale, t2))
            }
            Scorer::Cq(cq) => cq.score(y),
        }
    }
}

/// Plug-in centering and scale of `(y − x̄)'M(y − x̄)` under the null, with
/// `Σ` replaced by `cov`.
fn plug_in_quadratic(xbar: DVector<f64>, m: DMatrix<f64>, cov: &DMatrix<f64>, n: usize) -> Result<Scorer> {
    let ms = &m * cov;
    let k = 1.0 + 1.0 / n as f64;
    let center = k * ms.trace();
    let tr2 = (&ms * &ms).trace();
    if !(tr2 > 0.0) {
        return Err(Error::Degenerate(format!("plug-in variance {tr2} is not positive")));
    }
    Ok(Scorer::Quadratic {
        xbar,
        m,
        center,
        scale: k * (2.0 * tr2).sqrt(),
    })
}

pub fn build_scorer(
    method: Method,
    x: &DataMatrix,
    fit: &Fit,
    settings: &MethodSettings,
    sigma_true: Option<&SymMat>,
) -> Result<Scorer> {
    match method {
        Method::Cq => Ok(Scorer::Cq(CqStatistic::fit(x)?)),
        Method::Tyler => {
            let t = tyler_estimator(x, settings.tyler.rho, settings.tyler.tol, settings.tyler.max_iter)?;
            let m = inverse_spd(&t.scatter)?.into_inner();
            plug_in_quadratic(fit.xbar.clone(), m, fit.s.values(), x.n())
        }
        Method::Oracle => {
            let sigma = sigma_true
                .ok_or_else(|| Error::Config("the oracle method needs the true covariance".into()))?;
            let m = inverse_spd(sigma)?.into_inner();
            plug_in_quadratic(fit.xbar.clone(), m, sigma.values(), x.n())
        }
        spectral => {
            let f = fit.shrinkage(spectral, settings)?;
            let standardizer = Standardizer::new(&f.values, fit.op()?)?;
            Ok(Scorer::Spectral {
                xbar: fit.xbar.clone(),
                ut: fit.spectrum.eigenvectors.transpose(),
                f: f.values,
                standardizer,
            })
        }
    }
}
