//! Dense symmetric linear algebra: sample covariance, eigendecomposition,
//! spectral functions and quadratic forms.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Reference observations, one sample per column (`p × n`).
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 {
            return Err(Error::Dimension("data matrix needs p >= 1".into()));
        }
        if values.ncols() < 2 {
            return Err(Error::Dimension(format!(
                "data matrix needs n >= 2 samples, got {}",
                values.ncols()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("data matrix has non-finite entries".into()));
        }
        Ok(Self { values })
    }

    pub fn from_columns(columns: &[DVector<f64>]) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::Dimension("no columns".into()));
        }
        Self::new(DMatrix::from_columns(columns))
    }

    pub fn p(&self) -> usize {
        self.values.nrows()
    }

    pub fn n(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn mean(&self) -> DVector<f64> {
        self.values.column_mean()
    }

    /// Columns with the sample mean removed.
    pub fn centered(&self) -> DMatrix<f64> {
        let mean = self.mean();
        let mut c = self.values.clone();
        for mut col in c.column_iter_mut() {
            col -= &mean;
        }
        c
    }
}

/// A symmetric `p × p` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMat {
    values: DMatrix<f64>,
}

impl SymMat {
    /// Validates squareness, finiteness and symmetry (relative tolerance 1e-12)
    /// and then stores the exact symmetric part `(M + M')/2`.
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if !values.is_square() {
            return Err(Error::Dimension(format!(
                "expected a square matrix, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("matrix has non-finite entries".into()));
        }
        let scale = values.amax().max(1.0);
        let asym = (&values - values.transpose()).amax();
        if asym > 1e-12 * scale {
            return Err(Error::Input(format!(
                "matrix is not symmetric (max asymmetry {asym:e})"
            )));
        }
        Ok(Self::symmetrized(values))
    }

    pub(crate) fn symmetrized(values: DMatrix<f64>) -> Self {
        let t = values.transpose();
        Self {
            values: (values + t) * 0.5,
        }
    }

    pub fn identity(p: usize) -> Self {
        Self {
            values: DMatrix::identity(p, p),
        }
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        Self {
            values: DMatrix::from_diagonal(&DVector::from_column_slice(d)),
        }
    }

    pub fn p(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.values
    }

    pub fn trace(&self) -> f64 {
        self.values.trace()
    }
}

/// Eigen-pairs of a symmetric matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigenvalues: DVector<f64>,
    /// Orthonormal eigenvectors stored as columns, matched to `eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
    /// Sample size behind the decomposed matrix.
    pub n: usize,
}

impl Spectrum {
    pub fn p(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        self.eigenvalues.as_slice()
    }

    /// Coordinates of `v` in the eigenbasis, `U'v`.
    pub fn project(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.p() {
            return Err(Error::Dimension(format!(
                "vector has length {}, spectrum has p = {}",
                v.len(),
                self.p()
            )));
        }
        Ok(self.eigenvectors.tr_mul(v))
    }
}

/// Bessel-corrected sample covariance `(n-1)⁻¹ Σ (xᵢ-x̄)(xᵢ-x̄)'`.
pub fn sample_covariance(x: &DataMatrix) -> SymMat {
    let c = x.centered();
    let s = &c * c.transpose() / ((x.n() - 1) as f64);
    SymMat::symmetrized(s)
}

/// Symmetric eigendecomposition with ascending eigenvalues. Each eigenvector
/// is sign-normalized so its largest-magnitude component is positive.
pub fn eigh(s: &SymMat, n: usize) -> Result<Spectrum> {
    let p = s.p();
    let m = SymMat::symmetrized(s.values().clone()).into_inner();
    let eig = SymmetricEigen::try_new(m, f64::EPSILON, 10_000 * p.max(1)).ok_or_else(|| {
        Error::Numeric(format!(
            "symmetric eigensolver did not converge (p = {p}, max |entry| = {:e}, trace = {:e})",
            s.values().amax(),
            s.trace()
        ))
    })?;

    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let mut values = DVector::zeros(p);
    let mut vectors = DMatrix::zeros(p, p);
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = eig.eigenvalues[src];
        let mut col = eig.eigenvectors.column(src).clone_owned();
        let lead = col.iter().fold(0.0_f64, |best, &v| {
            if v.abs() > best.abs() {
                v
            } else {
                best
            }
        });
        if lead < 0.0 {
            col.neg_mut();
        }
        vectors.set_column(dst, &col);
    }
    Ok(Spectrum {
        eigenvalues: values,
        eigenvectors: vectors,
        n,
    })
}

/// `Σ cᵢ uᵢuᵢ'` for curve values `c` aligned with the spectrum.
pub fn apply_spectral(spec: &Spectrum, curve: impl AsRef<[f64]>) -> Result<SymMat> {
    let c = curve.as_ref();
    if c.len() != spec.p() {
        return Err(Error::Dimension(format!(
            "curve has {} values, spectrum has p = {}",
            c.len(),
            spec.p()
        )));
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("curve has non-finite values".into()));
    }
    let u = &spec.eigenvectors;
    let mut scaled = u.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= c[j];
    }
    Ok(SymMat::symmetrized(scaled * u.transpose()))
}

/// `v' M v`.
pub fn quadratic_form(m: &SymMat, v: &DVector<f64>) -> Result<f64> {
    if v.len() != m.p() {
        return Err(Error::Dimension(format!(
            "vector has length {}, matrix is {}x{}",
            v.len(),
            m.p(),
            m.p()
        )));
    }
    Ok(v.dot(&(m.values() * v)))
}

/// Principal square root of a positive definite matrix via its spectrum.
pub fn sqrt_psd(m: &SymMat) -> Result<SymMat> {
    let spec = eigh(m, 0)?;
    let lmin = spec.eigenvalues[0];
    if lmin <= 0.0 {
        return Err(Error::Input(format!(
            "matrix is not positive definite (smallest eigenvalue {lmin:e})"
        )));
    }
    let roots: Vec<f64> = spec.eigenvalues.iter().map(|v| v.sqrt()).collect();
    apply_spectral(&spec, roots)
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn inverse_spd(m: &SymMat) -> Result<SymMat> {
    let chol = nalgebra::Cholesky::new(m.values().clone())
        .ok_or_else(|| Error::Numeric("matrix is not positive definite".into()))?;
    Ok(SymMat::symmetrized(chol.inverse()))
}
