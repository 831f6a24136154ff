//! Rank-based one-step estimation of shape matrices for real and complex
//! elliptically symmetric data.
//!
//! The crate covers the full pipeline: density generators and samplers
//! ([`elliptical`]), score functions ([`scores`]), preliminary M-estimators
//! ([`estimators`]), the R-estimator itself ([`restimator`]), efficiency
//! bounds ([`bounds`]) and a Monte Carlo harness ([`harness`]).
//!
//! ```
//! use nalgebra::{DMatrix, DVector};
//! use num_complex::Complex64;
//! use rankshape::prelude::*;
//!
//! let gen = make_generator(GeneratorKind::GeneralizedGaussian { shape: 0.5 }, 3, MatrixField::Complex, 4.0)?;
//! let data = sample_es::<Complex64>(&gen, &DVector::zeros(3), &DMatrix::identity(3, 3), 200, 7)?;
//! let cfg = REstimatorConfig::van_der_waerden(3, MatrixField::Complex);
//! let report = r_estimate(&data, &cfg)?;
//! assert_eq!(report.shape.matrix()[(0, 0)], Complex64::new(1.0, 0.0));
//! # Ok::<(), rankshape::Error>(())
//! ```

pub mod bounds;
pub mod elliptical;
pub mod error;
pub mod estimators;
pub mod field;
pub mod harness;
pub mod matops;
pub mod quad;
pub mod restimator;
pub mod scores;
pub mod special;

pub use error::{Error, Result};
pub use field::{MatrixField, Scalar};

pub mod prelude {
    pub use crate::bounds::{alpha0, cscrb, sfim_shape, BoundReport};
    pub use crate::elliptical::{
        make_generator, q_u_stats, sample_contaminated, sample_es, Dataset, DensityGenerator, GeneratorKind,
        ModularVariateLaw,
    };
    pub use crate::estimators::{huber, renormalize, scm, tyler_joint, Preliminary, PreliminaryEstimate};
    pub use crate::field::{MatrixField, Scalar};
    pub use crate::matops::{Constraint, ShapeMatrix};
    pub use crate::restimator::{clairvoyant_estimate, r_estimate, REstimateReport, REstimatorConfig};
    pub use crate::scores::{score_from_generator, ScoreFunction};
}
