//! Vectorization operators, structural matrices and Hermitian roots.
//!
//! `vec` is column-major throughout. `vecs` stacks the lower triangle column
//! by column, so `[[1,2],[2,3]]` becomes `[1,2,3]`; `ovec`/`ovecs` drop the
//! leading element of `vec`/`vecs`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{MatrixField, Scalar};

/// Relative asymmetry above which a matrix is rejected as non-Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Eigenvalues at or below `PD_TOL * λ_max` fail the positive-definite check.
pub const PD_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VecMode {
    Vec,
    Vecs,
    Ovec,
    Ovecs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Constraint {
    TopLeftUnit,
    TraceN,
}

pub fn asymmetry<T: Scalar>(a: &DMatrix<T>) -> f64 {
    let norm = a.norm();
    if norm == 0.0 {
        return 0.0;
    }
    (a - a.adjoint()).norm() / norm
}

pub fn check_hermitian<T: Scalar>(a: &DMatrix<T>) -> Result<()> {
    if !a.is_square() {
        return Err(Error::Dimension(format!("expected a square matrix, got {}x{}", a.nrows(), a.ncols())));
    }
    let asym = asymmetry(a);
    if asym > HERMITIAN_TOL || !asym.is_finite() {
        return Err(Error::NotHermitian(asym));
    }
    Ok(())
}

/// `(A + Aᴴ)/2`; diagonal imaginary parts cancel exactly.
pub fn hermitize<T: Scalar>(a: &DMatrix<T>) -> DMatrix<T> {
    (a + a.adjoint()).unscale(2.0)
}

pub fn vectorize<T: Scalar>(a: &DMatrix<T>, mode: VecMode) -> Result<DVector<T>> {
    if !a.is_square() {
        return Err(Error::Dimension(format!("expected a square matrix, got {}x{}", a.nrows(), a.ncols())));
    }
    let n = a.nrows();
    let full = match mode {
        VecMode::Vec | VecMode::Ovec => DVector::from_column_slice(a.as_slice()),
        VecMode::Vecs | VecMode::Ovecs => {
            check_hermitian(a)?;
            let mut out = Vec::with_capacity(n * (n + 1) / 2);
            for j in 0..n {
                for i in j..n {
                    out.push(a[(i, j)]);
                }
            }
            DVector::from_vec(out)
        }
    };
    Ok(match mode {
        VecMode::Ovec | VecMode::Ovecs => full.rows(1, full.len() - 1).into_owned(),
        _ => full,
    })
}

fn dim_from_ovec_len(len: usize) -> Result<usize> {
    let n = ((len + 1) as f64).sqrt().round() as usize;
    if n >= 2 && n * n == len + 1 {
        Ok(n)
    } else {
        Err(Error::InvalidLength(len))
    }
}

fn dim_from_ovecs_len(len: usize) -> Result<usize> {
    let n = (((8 * (len + 1) + 1) as f64).sqrt().round() as usize).saturating_sub(1) / 2;
    if n >= 2 && n * (n + 1) / 2 == len + 1 {
        Ok(n)
    } else {
        Err(Error::InvalidLength(len))
    }
}

/// Rebuilds an N×N matrix from `ovec`, pinning the top-left entry to 1 and
/// Hermitizing. Positive definiteness is not checked here.
pub fn matrix_from_ovec<T: Scalar>(v: &DVector<T>) -> Result<DMatrix<T>> {
    let n = dim_from_ovec_len(v.len())?;
    let mut data = Vec::with_capacity(n * n);
    data.push(T::one());
    data.extend(v.iter().copied());
    let a = DMatrix::from_vec(n, n, data);
    let mut h = hermitize(&a);
    h[(0, 0)] = T::one();
    Ok(h)
}

/// Rebuilds a symmetric/Hermitian matrix with unit top-left entry from the
/// lower-triangular `ovecs` stack.
pub fn matrix_from_ovecs<T: Scalar>(v: &DVector<T>) -> Result<DMatrix<T>> {
    let n = dim_from_ovecs_len(v.len())?;
    let mut a = DMatrix::<T>::zeros(n, n);
    let mut it = std::iter::once(T::one()).chain(v.iter().copied());
    for j in 0..n {
        for i in j..n {
            let x = it.next().expect("length checked");
            if i == j {
                a[(i, i)] = T::from_real(x.real());
            } else {
                a[(i, j)] = x;
                a[(j, i)] = x.conjugate();
            }
        }
    }
    Ok(a)
}

/// Shape parameters of a unit-top-left matrix: `ovecs` (real) or `ovec` (complex).
pub fn shape_params<T: Scalar>(v: &DMatrix<T>) -> Result<DVector<T>> {
    match T::FIELD {
        MatrixField::Real => vectorize(v, VecMode::Ovecs),
        MatrixField::Complex => vectorize(v, VecMode::Ovec),
    }
}

pub fn shape_from_params<T: Scalar>(p: &DVector<T>) -> Result<DMatrix<T>> {
    match T::FIELD {
        MatrixField::Real => matrix_from_ovecs(p),
        MatrixField::Complex => matrix_from_ovec(p),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructuralMatrices {
    pub n: usize,
    pub field: MatrixField,
    /// `(N(N+1)/2 − 1) × N²`: duplication matrix transposed, first row removed.
    pub m_n: DMatrix<f64>,
    /// `(N² − 1) × N²`: rows `e₂ … e_{N²}` of the identity.
    pub p: DMatrix<f64>,
    /// `I − vec(I)vec(I)ᵀ/N`.
    pub proj_perp: DMatrix<f64>,
}

impl StructuralMatrices {
    /// The reduction matrix for this field (`M_N` or `P`).
    pub fn reduction(&self) -> &DMatrix<f64> {
        match self.field {
            MatrixField::Real => &self.m_n,
            MatrixField::Complex => &self.p,
        }
    }
}

pub fn build_structural(n: usize, field: MatrixField) -> Result<StructuralMatrices> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("dimension must be at least 2, got {n}")));
    }
    Ok(StructuralMatrices { n, field, m_n: m_matrix(n), p: p_matrix(n), proj_perp: proj_perp(n) })
}

fn m_matrix(n: usize) -> DMatrix<f64> {
    let rows = n * (n + 1) / 2 - 1;
    let mut m = DMatrix::zeros(rows, n * n);
    let mut row = 0;
    for j in 0..n {
        for i in j..n {
            if i == 0 && j == 0 {
                continue;
            }
            m[(row, i + j * n)] = 1.0;
            m[(row, j + i * n)] = 1.0;
            row += 1;
        }
    }
    m
}

fn p_matrix(n: usize) -> DMatrix<f64> {
    let n2 = n * n;
    DMatrix::from_fn(n2 - 1, n2, |i, j| if j == i + 1 { 1.0 } else { 0.0 })
}

fn proj_perp(n: usize) -> DMatrix<f64> {
    let n2 = n * n;
    let inv_n = 1.0 / n as f64;
    DMatrix::from_fn(n2, n2, |i, j| {
        let diag_i = i % (n + 1) == 0;
        let diag_j = j % (n + 1) == 0;
        let id = if i == j { 1.0 } else { 0.0 };
        id - if diag_i && diag_j { inv_n } else { 0.0 }
    })
}

/// Eigendecomposition based power of a Hermitian PD matrix.
pub fn herm_power<T: Scalar>(v: &DMatrix<T>, exponent: f64) -> Result<DMatrix<T>> {
    check_hermitian(v)?;
    let eig = hermitize(v).symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || !(min > PD_TOL * max) || !max.is_finite() {
        return Err(Error::NotPositiveDefinite { eigenvalue: min });
    }
    let q = &eig.eigenvectors;
    let mut scaled = q.clone();
    for (j, lam) in eig.eigenvalues.iter().enumerate() {
        let f = lam.powf(exponent);
        scaled.column_mut(j).scale_mut(f);
    }
    Ok(hermitize(&(scaled * q.adjoint())))
}

/// True when Hermitian within tolerance and all eigenvalues exceed
/// `PD_TOL · λ_max`.
pub fn is_positive_definite<T: Scalar>(v: &DMatrix<T>) -> bool {
    if check_hermitian(v).is_err() {
        return false;
    }
    if v.iter().any(|x| !x.is_finite()) {
        return false;
    }
    let eig = hermitize(v).symmetric_eigenvalues();
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    max > 0.0 && min > PD_TOL * max
}

/// Score-compression matrix: `M_N (S⊗S) Π⊥` for real data and
/// `P (Sᵀ⊗S) Π⊥` for complex data, with `S = V₁^{-1/2}`.
pub fn build_compression<T: Scalar>(v1: &ShapeMatrix<T>) -> Result<DMatrix<T>> {
    let v = v1.matrix();
    let n = v.nrows();
    let s = herm_power(v, -0.5)?;
    let vinv = herm_power(v, -1.0)?;
    // (Sᵀ⊗S)Π⊥ = Sᵀ⊗S − vec(V⁻¹)vec(I)ᵀ/N since (Sᵀ⊗S)vec(I) = vec(S S)
    let mut kron = s.transpose().kronecker(&s);
    let vec_vinv: Vec<T> = vinv.as_slice().to_vec();
    let inv_n = 1.0 / n as f64;
    for d in 0..n {
        let col = d * (n + 1);
        for (i, w) in vec_vinv.iter().enumerate() {
            kron[(i, col)] -= w.scale(inv_n);
        }
    }
    let reduction = build_structural(n, T::FIELD)?.reduction().map(|x| T::from_real(x));
    Ok(reduction * kron)
}

/// A symmetric/Hermitian PD matrix carrying its normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeMatrix<T: Scalar> {
    matrix: DMatrix<T>,
    constraint: Constraint,
}

impl<T: Scalar> ShapeMatrix<T> {
    /// Validates Hermitian symmetry, positive definiteness and the
    /// constraint; the stored matrix is exactly Hermitian.
    pub fn new(matrix: DMatrix<T>, constraint: Constraint) -> Result<Self> {
        check_hermitian(&matrix)?;
        let n = matrix.nrows();
        if n < 2 {
            return Err(Error::Dimension(format!("shape matrices need N >= 2, got {n}")));
        }
        let mut matrix = hermitize(&matrix);
        if !is_positive_definite(&matrix) {
            let min = matrix.symmetric_eigenvalues().min();
            return Err(Error::NotPositiveDefinite { eigenvalue: min });
        }
        match constraint {
            Constraint::TopLeftUnit => {
                if matrix[(0, 0)] != T::one() {
                    return Err(Error::ConstraintMismatch(format!(
                        "top-left entry is {:?}, expected exactly 1",
                        matrix[(0, 0)]
                    )));
                }
            }
            Constraint::TraceN => {
                let tr = matrix.trace().real();
                if (tr - n as f64).abs() > 1e-12 * n as f64 {
                    return Err(Error::ConstraintMismatch(format!("trace is {tr}, expected {n}")));
                }
            }
        }
        matrix[(0, 0)] = T::from_real(matrix[(0, 0)].real());
        Ok(Self { matrix, constraint })
    }

    /// Rescales an arbitrary scatter matrix to satisfy `constraint`.
    pub fn from_scatter(scatter: &DMatrix<T>, constraint: Constraint) -> Result<Self> {
        check_hermitian(scatter)?;
        let h = hermitize(scatter);
        Self::new(rescale(&h, constraint)?, constraint)
    }

    pub fn identity(n: usize, constraint: Constraint) -> Self {
        Self { matrix: DMatrix::identity(n, n), constraint }
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<T> {
        self.matrix
    }

    pub fn constraint(&self) -> Constraint {
        self.constraint
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn renormalize(&self, target: Constraint) -> Self {
        let matrix = rescale(&self.matrix, target).expect("PD matrices rescale");
        Self { matrix, constraint: target }
    }
}

fn rescale<T: Scalar>(m: &DMatrix<T>, target: Constraint) -> Result<DMatrix<T>> {
    let n = m.nrows();
    match target {
        Constraint::TopLeftUnit => {
            let d = m[(0, 0)].real();
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { eigenvalue: d });
            }
            let mut out = m.map(|x| x.unscale(d));
            out[(0, 0)] = T::one();
            Ok(out)
        }
        Constraint::TraceN => {
            let tr = m.trace().real();
            if !(tr > 0.0) || !tr.is_finite() {
                return Err(Error::NotPositiveDefinite { eigenvalue: tr });
            }
            Ok(m.map(|x| x.scale(n as f64).unscale(tr)))
        }
    }
}
