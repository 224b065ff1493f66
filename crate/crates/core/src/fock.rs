//! Truncated Fock-space substrate: dimensions, state vectors, density
//! operators, ladder operators and the matrix exponential.
//!
//! Every state keeps track of its *leakage*, the population sitting in the
//! two highest retained levels. A leakage far above machine precision means
//! the truncation is too tight for the computation at hand.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub(crate) const NORM_TOL: f64 = 1e-10;

/// Number of retained Fock levels, indices `0..dim`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize)]
pub struct FockDim(usize);

impl FockDim {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidDimension(dim));
        }
        Ok(FockDim(dim))
    }

    pub fn get(self) -> usize {
        self.0
    }
}

fn tail_population(populations: impl DoubleEndedIterator<Item = f64>) -> f64 {
    populations.rev().take(2).sum()
}

/// Normalized pure state in a truncated Fock space.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amplitudes: CVector,
    leakage: f64,
}

impl StateVector {
    /// Normalizes `amplitudes` and records the leakage.
    pub fn from_amplitudes(amplitudes: CVector) -> Result<Self> {
        FockDim::new(amplitudes.len())?;
        if amplitudes.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::NonFinite("state amplitudes"));
        }
        let norm = amplitudes.norm();
        if norm == 0.0 {
            return Err(Error::Domain("zero state vector".into()));
        }
        let amplitudes = amplitudes.unscale(norm);
        let leakage = tail_population(amplitudes.iter().map(|c| c.norm_sqr()));
        Ok(StateVector { amplitudes, leakage })
    }

    /// Fock state `|n>`.
    pub fn basis(dim: FockDim, n: usize) -> Result<Self> {
        if n >= dim.get() {
            return Err(Error::Domain(format!("level {n} outside dimension {}", dim.get())));
        }
        let mut v = CVector::zeros(dim.get());
        v[n] = C64::new(1.0, 0.0);
        Self::from_amplitudes(v)
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn leakage(&self) -> f64 {
        self.leakage
    }

    /// `<n>` in this state.
    pub fn mean_photon_number(&self) -> f64 {
        self.amplitudes.iter().enumerate().map(|(n, c)| n as f64 * c.norm_sqr()).sum()
    }

    pub fn to_density(&self) -> DensityOperator {
        let m = &self.amplitudes * self.amplitudes.adjoint();
        DensityOperator { matrix: m }
    }
}

/// Hermitian, unit-trace, positive semidefinite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    matrix: CMatrix,
}

impl DensityOperator {
    /// Validates trace, Hermiticity and positivity (all within 1e-10).
    pub fn new(matrix: CMatrix) -> Result<Self> {
        let dim = matrix.nrows();
        if matrix.ncols() != dim {
            return Err(Error::Shape(format!("{}x{} density matrix", dim, matrix.ncols())));
        }
        FockDim::new(dim)?;
        if matrix.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::NonFinite("density matrix"));
        }
        let herm = (&matrix - matrix.adjoint()).iter().map(|c| c.norm()).fold(0.0, f64::max);
        if herm > NORM_TOL {
            return Err(Error::Domain(format!("density matrix not Hermitian ({herm:.2e})")));
        }
        let trace = matrix.trace();
        if (trace - C64::new(1.0, 0.0)).norm() > NORM_TOL {
            return Err(Error::Domain(format!("density matrix trace {trace} != 1")));
        }
        let rho = DensityOperator { matrix };
        let min = rho.eigen().0.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < -NORM_TOL {
            return Err(Error::Domain(format!("density matrix has eigenvalue {min:.3e}")));
        }
        Ok(rho)
    }

    /// Skips validation; for matrices that are PSD by construction.
    pub(crate) fn from_matrix_unchecked(matrix: CMatrix) -> Self {
        DensityOperator { matrix }
    }

    pub fn diagonal(populations: &[f64]) -> Result<Self> {
        let total: f64 = populations.iter().sum();
        if populations.iter().any(|p| !(*p >= 0.0)) || total <= 0.0 {
            return Err(Error::Domain("populations must be non-negative".into()));
        }
        let d = DVector::from_iterator(populations.len(), populations.iter().map(|p| C64::new(p / total, 0.0)));
        Self::new(CMatrix::from_diagonal(&d))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn leakage(&self) -> f64 {
        tail_population((0..self.dim()).map(|n| self.matrix[(n, n)].re))
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    pub fn mean_photon_number(&self) -> f64 {
        (0..self.dim()).map(|n| n as f64 * self.matrix[(n, n)].re).sum()
    }

    /// Ascending eigenvalues and the matching eigenvectors (columns).
    pub fn eigen(&self) -> (Vec<f64>, CMatrix) {
        let hermitian = (&self.matrix + self.matrix.adjoint()).scale(0.5);
        let eig = SymmetricEigen::new(hermitian);
        let mut order: Vec<usize> = (0..self.dim()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = CMatrix::from_fn(self.dim(), self.dim(), |r, c| eig.eigenvectors[(r, order[c])]);
        (values, vectors)
    }

    /// `<psi|rho|psi>`.
    pub fn expectation_projector(&self, psi: &StateVector) -> Result<f64> {
        check_dims(self.dim(), psi.dim())?;
        let v = &self.matrix * psi.amplitudes();
        Ok(psi.amplitudes().dotc(&v).re)
    }
}

/// Dense operator on the truncated space.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    matrix: CMatrix,
}

impl Operator {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::Shape(format!("{}x{} operator", matrix.nrows(), matrix.ncols())));
        }
        Ok(Operator { matrix })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn adjoint(&self) -> Operator {
        Operator { matrix: self.matrix.adjoint() }
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        (&self.matrix - self.matrix.adjoint()).iter().all(|c| c.norm() <= tol)
    }

    pub fn apply(&self, psi: &StateVector) -> Result<CVector> {
        check_dims(self.dim(), psi.dim())?;
        Ok(&self.matrix * psi.amplitudes())
    }

    /// Largest entry of `|(U U^dag - I)|` on the lowest `levels` levels.
    pub fn unitarity_defect(&self, levels: usize) -> f64 {
        let prod = &self.matrix * self.matrix.adjoint();
        let k = levels.min(self.dim());
        let mut worst: f64 = 0.0;
        for r in 0..k {
            for c in 0..k {
                let target = if r == c { 1.0 } else { 0.0 };
                worst = worst.max((prod[(r, c)] - C64::new(target, 0.0)).norm());
            }
        }
        worst
    }
}

pub(crate) fn check_dims(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!("dimension {a} vs {b}")));
    }
    Ok(())
}

/// Annihilation and creation operators, `a[n-1, n] = sqrt(n)`.
pub fn make_ladder(dim: usize) -> Result<(Operator, Operator)> {
    let dim = FockDim::new(dim)?.get();
    let mut a = CMatrix::zeros(dim, dim);
    for n in 1..dim {
        a[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    let create = a.adjoint();
    Ok((Operator { matrix: a }, Operator { matrix: create }))
}

pub fn number_operator(dim: usize) -> Result<Operator> {
    let dim = FockDim::new(dim)?.get();
    let d = DVector::from_iterator(dim, (0..dim).map(|n| C64::new(n as f64, 0.0)));
    Ok(Operator { matrix: CMatrix::from_diagonal(&d) })
}

/// Matrix exponential (Pade scaling and squaring).
pub fn mat_exp(op: &Operator) -> Result<Operator> {
    if op.matrix.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::NonFinite("mat_exp input"));
    }
    let out = op.matrix.exp();
    if out.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::NonFinite("mat_exp output"));
    }
    Ok(Operator { matrix: out })
}

/// `<psi|chi>`.
pub fn overlap(psi: &StateVector, chi: &StateVector) -> Result<C64> {
    check_dims(psi.dim(), chi.dim())?;
    Ok(psi.amplitudes().dotc(chi.amplitudes()))
}

/// `|<psi|chi>|^2`.
pub fn fidelity(psi: &StateVector, chi: &StateVector) -> Result<f64> {
    Ok(overlap(psi, chi)?.norm_sqr())
}
