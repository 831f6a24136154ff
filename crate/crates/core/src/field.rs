//! Scalar field abstraction shared by the real (RES) and complex (CES) paths.
//!
//! Every matrix routine in the crate is generic over [`Scalar`], which is
//! implemented for `f64` and [`Complex64`]. Mixing fields in a single call is
//! therefore rejected at compile time; [`MatrixField`] is the runtime tag used
//! by serialization and by the experiment harness to dispatch.

use nalgebra::ComplexField;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixField {
    Real,
    Complex,
}

impl MatrixField {
    /// `N̄` in the modular-variate laws: `N/2` for real data, `N` for complex.
    pub fn effective_dim(self, n: usize) -> f64 {
        match self {
            MatrixField::Real => n as f64 / 2.0,
            MatrixField::Complex => n as f64,
        }
    }

    /// Number of free shape parameters once the top-left entry is pinned.
    pub fn shape_params(self, n: usize) -> usize {
        match self {
            MatrixField::Real => n * (n + 1) / 2 - 1,
            MatrixField::Complex => n * n - 1,
        }
    }
}

impl fmt::Display for MatrixField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatrixField::Real => f.write_str("real"),
            MatrixField::Complex => f.write_str("complex"),
        }
    }
}

impl std::str::FromStr for MatrixField {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "real" => Ok(MatrixField::Real),
            "complex" => Ok(MatrixField::Complex),
            other => Err(crate::Error::Parse(format!("unknown field '{other}'"))),
        }
    }
}

pub trait Scalar: ComplexField<RealField = f64> + Copy + Send + Sync + fmt::Debug + 'static {
    const FIELD: MatrixField;

    /// Standard normal draw: `N(0,1)` for reals, circular `CN(0,1)` (unit
    /// second moment) for complex.
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    fn from_parts(re: f64, im: f64) -> Self;

    fn re(self) -> f64;

    fn im(self) -> f64;
}

impl Scalar for f64 {
    const FIELD: MatrixField = MatrixField::Real;

    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }

    fn from_parts(re: f64, _im: f64) -> Self {
        re
    }

    fn re(self) -> f64 {
        self
    }

    fn im(self) -> f64 {
        0.0
    }
}

impl Scalar for Complex64 {
    const FIELD: MatrixField = MatrixField::Complex;

    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    }

    fn from_parts(re: f64, im: f64) -> Self {
        Complex64::new(re, im)
    }

    fn re(self) -> f64 {
        self.re
    }

    fn im(self) -> f64 {
        self.im
    }
}
