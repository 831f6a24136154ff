//! Performance indices: `ς`, breakdown ratio and empirical influence.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::field::{MatrixField, Scalar};
use crate::matops::{herm_power, vectorize, ShapeMatrix, VecMode};

/// Value reported for an estimator that failed on contaminated data.
pub const BP_CAP: f64 = 1e16;

pub const CSV_HEADER: &str = "scenario,estimator,coordinate,metric,value,stderr,runs,failures";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub scenario: String,
    pub estimator: String,
    pub coordinate: String,
    pub metric: String,
    pub value: f64,
    pub stderr: f64,
    pub runs: usize,
    pub failures: usize,
}

impl MetricRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{:e},{:e},{},{}",
            self.scenario, self.estimator, self.coordinate, self.metric, self.value, self.stderr, self.runs, self.failures
        )
    }
}

pub fn write_csv<W: Write>(rows: &[MetricRow], mut w: W) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for row in rows {
        writeln!(w, "{}", row.csv_line())?;
    }
    Ok(())
}

pub fn to_csv_string(rows: &[MetricRow]) -> String {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("CSV is ASCII")
}

fn error_vec<T: Scalar>(v: &ShapeMatrix<T>, v0: &ShapeMatrix<T>) -> Result<DVector<T>> {
    if v.dim() != v0.dim() {
        return Err(Error::Dimension(format!("estimate is {}x{}, reference {}x{}", v.dim(), v.dim(), v0.dim(), v0.dim())));
    }
    if v.constraint() != v0.constraint() {
        return Err(Error::ConstraintMismatch(format!("{:?} estimate vs {:?} reference", v.constraint(), v0.constraint())));
    }
    let mode = match T::FIELD {
        MatrixField::Real => VecMode::Vecs,
        MatrixField::Complex => VecMode::Vec,
    };
    vectorize(&(v.matrix() - v0.matrix()), mode)
}

/// `ς = ‖(1/R) Σ e_r e_rᴴ‖_F` with `e_r = vec(V̂_r − V₀)` (`vecs` for real).
pub fn mse_index<T: Scalar>(estimates: &[ShapeMatrix<T>], v0: &ShapeMatrix<T>) -> Result<f64> {
    mse_index_with_se(estimates, v0).map(|(v, _)| v)
}

/// `ς` and its delta-method standard error. The per-replicate influence
/// is `c_r = e_rᴴ M e_r / ς`, with `M` the empirical error covariance.
pub fn mse_index_with_se<T: Scalar>(estimates: &[ShapeMatrix<T>], v0: &ShapeMatrix<T>) -> Result<(f64, f64)> {
    if estimates.len() < 2 {
        return Err(Error::InvalidParameter("the MSE index needs at least two estimates".into()));
    }
    let errs = estimates.iter().map(|v| error_vec(v, v0)).collect::<Result<Vec<_>>>()?;
    let p = errs[0].len();
    let r = errs.len() as f64;
    let mut m = DMatrix::<T>::zeros(p, p);
    for e in &errs {
        m += e * e.adjoint();
    }
    m.unscale_mut(r);
    let value = m.norm();
    if value == 0.0 {
        return Ok((0.0, 0.0));
    }
    let c: Vec<f64> = errs.iter().map(|e| (e.adjoint() * &m * e)[(0, 0)].real() / value).collect();
    Ok((value, mean_and_se(&c).1))
}

/// Sample mean and `sd/√n` (zero for a single value).
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// `max{λ₁, 1/λ_N}` of `V̂(Z)^{-1/2} V̂(Z_ε) V̂(Z)^{-1/2}`.
pub fn bp_value<T: Scalar>(clean: &ShapeMatrix<T>, contaminated: &ShapeMatrix<T>) -> Result<f64> {
    if clean.dim() != contaminated.dim() {
        return Err(Error::Dimension("shape matrices differ in size".into()));
    }
    if clean.constraint() != contaminated.constraint() {
        return Err(Error::ConstraintMismatch("breakdown ratio needs a common normalization".into()));
    }
    if clean.matrix() == contaminated.matrix() {
        return Ok(1.0);
    }
    let w = herm_power(clean.matrix(), -0.5)?;
    let m = &w * contaminated.matrix() * &w;
    let m = (&m + m.adjoint()).unscale(2.0);
    let eig = m.symmetric_eigenvalues();
    let hi = eig.max();
    let lo = eig.min();
    if !(lo > 0.0) {
        return Ok(BP_CAP);
    }
    Ok(hi.max(1.0 / lo).min(BP_CAP))
}

/// `(L+1)‖V̂(Z) − V̂(Z, z̃)‖_F`, `L` the clean sample size.
pub fn eif_value<T: Scalar>(clean: &ShapeMatrix<T>, with_outlier: &ShapeMatrix<T>, l: usize) -> Result<f64> {
    if clean.dim() != with_outlier.dim() {
        return Err(Error::Dimension("shape matrices differ in size".into()));
    }
    if clean.constraint() != with_outlier.constraint() {
        return Err(Error::ConstraintMismatch("influence needs a common normalization".into()));
    }
    Ok(((l + 1) as f64 * (clean.matrix() - with_outlier.matrix()).norm()).min(BP_CAP))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matops::Constraint;

    fn shape(m: DMatrix<f64>) -> ShapeMatrix<f64> {
        ShapeMatrix::new(m, Constraint::TraceN).unwrap()
    }

    #[test]
    fn zero_error_gives_zero_index() {
        let v0 = ShapeMatrix::<f64>::identity(3, Constraint::TraceN);
        assert_eq!(mse_index_with_se(&[v0.clone(), v0.clone()], &v0).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn two_sample_off_diagonal_deviation() {
        let d = 0.1;
        let v0 = ShapeMatrix::<f64>::identity(2, Constraint::TraceN);
        let mk = |s: f64| shape(DMatrix::from_row_slice(2, 2, &[1.0, s * d, s * d, 1.0]));
        let v = mse_index(&[mk(1.0), mk(-1.0)], &v0).unwrap();
        // vecs keeps the (2,1) entry once: ς = δ²
        assert!((v - d * d).abs() < 1e-15);
    }

    #[test]
    fn constraint_mismatch_is_an_error() {
        let v0 = ShapeMatrix::<f64>::identity(2, Constraint::TraceN);
        let v1 = ShapeMatrix::<f64>::identity(2, Constraint::TopLeftUnit);
        assert!(mse_index(&[v1.clone(), v1], &v0).is_err());
    }

    #[test]
    fn bp_of_identical_and_scaled_pairs() {
        let a = shape(DMatrix::from_row_slice(2, 2, &[1.5, 0.2, 0.2, 0.5]));
        assert_eq!(bp_value(&a, &a).unwrap(), 1.0);
        let b = shape(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]));
        let c = shape(DMatrix::from_row_slice(2, 2, &[1.6, 0.0, 0.0, 0.4]));
        assert!((bp_value(&b, &c).unwrap() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn csv_formatting() {
        let row = MetricRow {
            scenario: "mse-vs-l".into(),
            estimator: "tyler".into(),
            coordinate: "L=128".into(),
            metric: "varsigma".into(),
            value: 0.5,
            stderr: 0.0,
            runs: 3,
            failures: 1,
        };
        assert_eq!(row.csv_line(), "mse-vs-l,tyler,L=128,varsigma,5e-1,0e0,3,1");
        assert!(to_csv_string(&[row]).starts_with(CSV_HEADER));
    }
}
