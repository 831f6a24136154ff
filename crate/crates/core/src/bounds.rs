//! Semiparametric efficiency benchmarks for shape: `α`, the efficient
//! shape information and the constrained bound in either normalization.

use nalgebra::DMatrix;

use crate::elliptical::DensityGenerator;
use crate::error::{Error, Result};
use crate::field::{MatrixField, Scalar};
use crate::matops::{build_compression, vectorize, Constraint, ShapeMatrix, VecMode};
use crate::quad::integrate;

const QUAD_REL_TOL: f64 = 1e-10;
const TAIL_CUTOFF: f64 = 1e-10;
const CLOSED_FORM_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct BoundReport<T: Scalar> {
    pub alpha0: f64,
    pub sfim: DMatrix<T>,
    pub cscrb: DMatrix<T>,
    /// Frobenius norm of `cscrb` (per observation; divide by `L` for plots).
    pub epsilon: f64,
    pub coordinates: Constraint,
}

/// Closed-form `α` for the built-in generator families.
pub fn alpha0_closed_form(gen: &DensityGenerator) -> Option<f64> {
    use crate::elliptical::GeneratorKind::*;
    let n = gen.dim() as f64;
    Some(match (gen.kind(), gen.field()) {
        (Gaussian, MatrixField::Real) => 0.5,
        (Gaussian, MatrixField::Complex) => 1.0,
        (GeneralizedGaussian { shape: s }, MatrixField::Real) => (n + 2.0 * s) / (2.0 * (n + 2.0)),
        (GeneralizedGaussian { shape: s }, MatrixField::Complex) => (n + s) / (n + 1.0),
        (StudentT { dof }, MatrixField::Real) => (n + dof) / (2.0 * (n + dof + 2.0)),
        (StudentT { dof }, MatrixField::Complex) => (2.0 * n + dof) / (2.0 * n + dof + 2.0),
    })
}

/// `E{Q²ψ(Q)²}` by adaptive quadrature over `(0, quantile(1 − 1e-10))`.
pub fn expected_squared_score(gen: &DensityGenerator) -> Result<f64> {
    let law = gen.law();
    let integrand = |q: f64| {
        if q <= 0.0 {
            return 0.0;
        }
        let w = q * gen.psi(q);
        w * w * law.pdf(q)
    };
    let cuts = [1e-6, 1e-2, 0.1, 0.5, 0.9, 0.99, 1e-4, 1e-7, TAIL_CUTOFF];
    let mut points = vec![0.0];
    for (i, &p) in cuts.iter().enumerate() {
        let u = if i < 6 { p } else { 1.0 - p };
        points.push(law.quantile(u)?);
    }
    let mut total = 0.0;
    for w in points.windows(2) {
        total += integrate(integrand, w[0], w[1], QUAD_REL_TOL, 0.0)?;
    }
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::Quadrature(format!("second moment of the score is {total}")));
    }
    Ok(total)
}

pub fn alpha0_quadrature(gen: &DensityGenerator) -> Result<f64> {
    let n = gen.dim() as f64;
    let m2 = expected_squared_score(gen)?;
    Ok(match gen.field() {
        MatrixField::Real => 2.0 * m2 / (n * (n + 2.0)),
        MatrixField::Complex => m2 / (n * (n + 1.0)),
    })
}

/// `α` via quadrature, replaced by the closed form when one exists (after
/// checking that both agree to 1e-6 relative).
pub fn alpha0(gen: &DensityGenerator) -> Result<f64> {
    let quad = alpha0_quadrature(gen)?;
    match alpha0_closed_form(gen) {
        Some(exact) => {
            if ((quad - exact) / exact).abs() > CLOSED_FORM_TOL {
                return Err(Error::Quadrature(format!("quadrature {quad} disagrees with closed form {exact}")));
            }
            Ok(exact)
        }
        None => Ok(quad),
    }
}

fn check_generator<T: Scalar>(v1: &ShapeMatrix<T>, gen: &DensityGenerator) -> Result<()> {
    if gen.field() != T::FIELD || gen.dim() != v1.dim() {
        return Err(Error::InvalidParameter("generator does not match the shape matrix".into()));
    }
    if v1.constraint() != Constraint::TopLeftUnit {
        return Err(Error::ConstraintMismatch("the efficient information is defined at unit top-left".into()));
    }
    Ok(())
}

/// `α · C Cᴴ`.
pub fn sfim_shape<T: Scalar>(v1: &ShapeMatrix<T>, gen: &DensityGenerator) -> Result<DMatrix<T>> {
    check_generator(v1, gen)?;
    let a = alpha0(gen)?;
    let c = build_compression(v1)?;
    Ok((&c * c.adjoint()).scale(a))
}

/// Jacobian of `V ↦ N V / tr V` from unit-top-left parameters (`ovec`
/// complex, `ovecs` real) to the full vectorization (`vec` complex, `vecs`
/// real).
pub fn trace_jacobian<T: Scalar>(v: &DMatrix<T>) -> Result<DMatrix<T>> {
    let n = v.nrows();
    let nf = n as f64;
    let tr = v.trace().real();
    let (full, diag_flags): (nalgebra::DVector<T>, Vec<bool>) = match T::FIELD {
        MatrixField::Complex => (
            vectorize(v, VecMode::Vec)?,
            (0..n * n).map(|k| k % (n + 1) == 0).collect(),
        ),
        MatrixField::Real => {
            let mut flags = Vec::new();
            for j in 0..n {
                for i in j..n {
                    flags.push(i == j);
                }
            }
            (vectorize(v, VecMode::Vecs)?, flags)
        }
    };
    let m = full.len();
    let p = m - 1;
    let mut j = DMatrix::<T>::zeros(m, p);
    for k in 0..p {
        j[(k + 1, k)] = T::from_real(nf / tr);
        if diag_flags[k + 1] {
            for i in 0..m {
                j[(i, k)] -= full[i].scale(nf / (tr * tr));
            }
        }
    }
    Ok(j)
}

pub fn cscrb<T: Scalar>(v1: &ShapeMatrix<T>, gen: &DensityGenerator, coordinates: Constraint) -> Result<BoundReport<T>> {
    check_generator(v1, gen)?;
    let alpha = alpha0(gen)?;
    let c = build_compression(v1)?;
    let sfim = (&c * c.adjoint()).scale(alpha);
    let inv = sfim
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("efficient shape information".into()))?
        .inverse();
    let bound = match coordinates {
        Constraint::TopLeftUnit => inv,
        Constraint::TraceN => {
            let j = trace_jacobian(v1.matrix())?;
            let b = &j * inv * j.adjoint();
            (&b + b.adjoint()).unscale(2.0)
        }
    };
    let epsilon = bound.norm();
    Ok(BoundReport { alpha0: alpha, sfim, cscrb: bound, epsilon, coordinates })
}
