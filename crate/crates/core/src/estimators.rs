//! Preliminary estimators of location and shape: sample covariance, the
//! joint Tyler fixed point and Huber's M-estimator.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::elliptical::{max_modulus, stable_norm, Dataset};
use crate::error::{Error, Result};
use crate::field::{MatrixField, Scalar};
use crate::matops::{is_positive_definite, Constraint, ShapeMatrix};
use crate::scores::gamma_quantile;
use crate::special::gamma_pq;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 500;

#[derive(Debug, Clone, PartialEq)]
pub struct PreliminaryEstimate<T: Scalar> {
    pub location: DVector<T>,
    /// Always `TopLeftUnit`.
    pub shape: ShapeMatrix<T>,
    pub iterations: usize,
    pub converged: bool,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Preliminary {
    Scm,
    Tyler,
    Huber { q: f64 },
}

impl Preliminary {
    pub fn run<T: Scalar>(&self, data: &Dataset<T>) -> Result<PreliminaryEstimate<T>> {
        match *self {
            Preliminary::Scm => scm(data),
            Preliminary::Tyler => tyler_joint(data, DEFAULT_TOL, DEFAULT_MAX_ITER),
            Preliminary::Huber { q } => huber(data, q, DEFAULT_TOL, DEFAULT_MAX_ITER),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Preliminary::Scm => "scm".into(),
            Preliminary::Tyler => "tyler".into(),
            Preliminary::Huber { q } => format!("huber(q={q})"),
        }
    }
}

fn require_more_samples<T: Scalar>(data: &Dataset<T>) -> Result<()> {
    if data.len() <= data.dim() {
        return Err(Error::InvalidParameter(format!(
            "need more samples than dimensions (L={}, N={})",
            data.len(),
            data.dim()
        )));
    }
    Ok(())
}

fn to_shape<T: Scalar>(scatter: &DMatrix<T>) -> Result<ShapeMatrix<T>> {
    if !is_positive_definite(scatter) {
        return Err(Error::Singular("scatter estimate is not positive definite".into()));
    }
    ShapeMatrix::from_scatter(scatter, Constraint::TopLeftUnit)
}

/// Sample mean and sample covariance normalized to a unit top-left entry.
pub fn scm<T: Scalar>(data: &Dataset<T>) -> Result<PreliminaryEstimate<T>> {
    require_more_samples(data)?;
    let z = data.samples();
    let l = z.ncols();
    // the normalized shape is scale-free, so work on data scaled to O(1)
    let m = z.iter().map(|x| x.modulus()).fold(0.0, f64::max);
    let zs = z.unscale(m);
    let mean_s = zs.column_mean();
    let mut centered = zs.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean_s;
    }
    let cov = (&centered * centered.adjoint()).unscale((l - 1) as f64);
    let shape = to_shape(&cov)?;
    Ok(PreliminaryEstimate { location: z.column_mean(), shape, iterations: 0, converged: true, residual: 0.0 })
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let k = values.len();
    if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}

/// Coordinate-wise median (real and imaginary parts separately).
pub fn coordinate_median<T: Scalar>(z: &DMatrix<T>) -> DVector<T> {
    DVector::from_fn(z.nrows(), |i, _| {
        let mut re: Vec<f64> = z.row(i).iter().map(|x| x.re()).collect();
        let mut im: Vec<f64> = z.row(i).iter().map(|x| x.im()).collect();
        T::from_parts(median(&mut re), median(&mut im))
    })
}

#[derive(Debug, Clone, Copy)]
enum Weighting {
    Tyler,
    Huber { c: f64, c2: f64, beta: f64 },
}

/// Huber tuning constants `(c², β)` from the Gaussian `Q` law.
pub fn huber_constants(q: f64, dim: usize, field: MatrixField) -> Result<(f64, f64)> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidParameter(format!("Huber q must lie in (0,1), got {q}")));
    }
    let n = dim as f64;
    let (c2, tail_mass) = match field {
        MatrixField::Real => {
            let c2 = 2.0 * gamma_quantile(n / 2.0, q);
            (c2, n * gamma_pq(n / 2.0 + 1.0, c2 / 2.0).0 + c2 * gamma_pq(n / 2.0, c2 / 2.0).1)
        }
        MatrixField::Complex => {
            let c2 = gamma_quantile(n, q);
            (c2, n * gamma_pq(n + 1.0, c2).0 + c2 * gamma_pq(n, c2).1)
        }
    };
    Ok((c2, tail_mass / n))
}

/// Joint Tyler location/shape fixed point.
pub fn tyler_joint<T: Scalar>(data: &Dataset<T>, tol: f64, max_iter: usize) -> Result<PreliminaryEstimate<T>> {
    m_estimate(data, Weighting::Tyler, tol, max_iter)
}

/// Huber M-estimator of location and scatter with tuning quantile `q`.
pub fn huber<T: Scalar>(data: &Dataset<T>, q: f64, tol: f64, max_iter: usize) -> Result<PreliminaryEstimate<T>> {
    let (c2, beta) = huber_constants(q, data.dim(), T::FIELD)?;
    m_estimate(data, Weighting::Huber { c: c2.sqrt(), c2, beta }, tol, max_iter)
}

fn m_estimate<T: Scalar>(
    data: &Dataset<T>,
    weighting: Weighting,
    tol: f64,
    max_iter: usize,
) -> Result<PreliminaryEstimate<T>> {
    require_more_samples(data)?;
    if !(tol > 0.0) || max_iter == 0 {
        return Err(Error::InvalidParameter("tolerance and iteration budget must be positive".into()));
    }
    let z = data.samples();
    let n = z.nrows();
    let mut mu = coordinate_median(z);
    let mut sigma = DMatrix::<T>::identity(n, n);
    if let Weighting::Huber { .. } = weighting {
        let mut sq: Vec<f64> = z
            .column_iter()
            .map(|c| {
                let s = stable_norm(&(c - &mu));
                s * s
            })
            .collect();
        let s = median(&mut sq) / n as f64;
        if s > 0.0 && s.is_finite() {
            sigma = sigma.scale(s);
        }
    }

    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        let chol = sigma
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Singular("scatter iterate lost positive definiteness".into()))?;
        let lower = chol.l();
        let mut acc = DMatrix::<T>::zeros(n, n);
        let mut loc_num = DVector::<T>::zeros(n);
        let mut loc_den = 0.0;
        let mut used = 0usize;
        let mut radii = Vec::with_capacity(z.ncols());
        for col in z.column_iter() {
            let d = col - &mu;
            let m = max_modulus(&d);
            if m == 0.0 {
                continue;
            }
            let ds = d.unscale(m);
            let y = lower
                .solve_lower_triangular(&ds)
                .ok_or_else(|| Error::Singular("triangular solve failed".into()))?;
            let ny = stable_norm(&y);
            if ny == 0.0 {
                continue;
            }
            let r = m * ny;
            // d / r without forming d
            let dir = ds.unscale(ny);
            let (shape_w, loc_w) = match weighting {
                Weighting::Tyler => (1.0, 1.0 / r),
                Weighting::Huber { c, c2, beta } => ((r * r).min(c2) / beta, (c / r).min(1.0)),
            };
            acc += (&dir * dir.adjoint()).scale(shape_w);
            match weighting {
                Weighting::Tyler => loc_num += &dir,
                Weighting::Huber { c, .. } => loc_num += dir.scale(r.min(c)),
            }
            loc_den += loc_w;
            used += 1;
            radii.push(r);
        }
        if used <= n {
            return Err(Error::Singular(format!("only {used} observations differ from the location iterate")));
        }
        let new_sigma = match weighting {
            Weighting::Tyler => {
                let s = acc.scale(n as f64 / used as f64);
                let s11 = s[(0, 0)].real();
                let mut s = s.unscale(s11);
                s[(0, 0)] = T::one();
                s
            }
            Weighting::Huber { .. } => acc.unscale(used as f64),
        };
        let step = if loc_den > 0.0 && loc_den.is_finite() { loc_num.unscale(loc_den) } else { DVector::zeros(n) };

        let shape_disp = {
            let a = sigma.unscale(sigma[(0, 0)].real());
            let b = new_sigma.unscale(new_sigma[(0, 0)].real());
            (&b - &a).norm() / a.norm()
        };
        let loc_disp = {
            let med = median(&mut radii);
            match lower.solve_lower_triangular(&step) {
                Some(w) if med > 0.0 && med.is_finite() => stable_norm(&w) / med,
                _ => 0.0,
            }
        };
        residual = shape_disp.max(loc_disp);
        if !residual.is_finite() || new_sigma.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("M-estimator iterate".into()));
        }
        sigma = new_sigma;
        mu += step;
        if residual < tol {
            let shape = to_shape(&sigma)?;
            return Ok(PreliminaryEstimate { location: mu, shape, iterations: it, converged: true, residual });
        }
    }
    Err(Error::NoConvergence { iterations: max_iter, residual })
}

pub fn renormalize<T: Scalar>(v: &ShapeMatrix<T>, target: Constraint) -> ShapeMatrix<T> {
    v.renormalize(target)
}
