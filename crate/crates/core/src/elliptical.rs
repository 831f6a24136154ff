//! Elliptical model: density generators, the law of the 2nd-order modular
//! variate `Q`, sampling through the stochastic representation and the
//! outlier/contamination generators.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{MatrixField, Scalar};
use crate::matops::herm_power;
use crate::scores::{gamma_quantile, QuantileFunction};
use crate::special::ln_gamma;

/// Stream ids used with the same seed so that clean draws do not depend on
/// the contamination level.
pub const STREAM_CLEAN: u64 = 0;
pub const STREAM_FLAGS: u64 = 1;
pub const STREAM_OUTLIERS: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum GeneratorKind {
    Gaussian,
    GeneralizedGaussian { shape: f64 },
    StudentT { dof: f64 },
}

/// A density generator `g` (real) or `h` (complex) with an explicit scale.
///
/// Scale conventions: Gaussian `exp(-t/(2c))` real and `exp(-t/c)` complex;
/// generalized Gaussian `exp(-t^s/b)`; t `(1+t/(νc))^{-(N+ν)/2}` real and
/// `(1+2t/(νc))^{-(2N+ν)/2}` complex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGenerator {
    kind: GeneratorKind,
    field: MatrixField,
    dim: usize,
    scale: f64,
}

/// Law of `Q = (x-μ)ᴴΣ⁻¹(x-μ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModularVariateLaw {
    /// `Q ~ Gamma(shape, scale)`.
    Gamma { shape: f64, scale: f64 },
    /// `Q^s / b ~ Gamma(shape, 1)`.
    PowerGamma { shape: f64, b: f64, s: f64 },
    /// `Q / scale ~ F(d1, d2)`.
    ScaledF { d1: f64, d2: f64, scale: f64 },
}

impl ModularVariateLaw {
    pub fn cdf(&self, q: f64) -> f64 {
        self.cdf_sf(q).0
    }

    pub fn sf(&self, q: f64) -> f64 {
        self.cdf_sf(q).1
    }

    fn cdf_sf(&self, q: f64) -> (f64, f64) {
        match *self {
            Self::Gamma { shape, scale } => QuantileFunction::Gamma { shape, scale }.cdf_sf(q),
            Self::PowerGamma { shape, b, s } => {
                QuantileFunction::Gamma { shape, scale: 1.0 }.cdf_sf(q.powf(s) / b)
            }
            Self::ScaledF { d1, d2, scale } => QuantileFunction::FisherF { d1, d2 }.cdf_sf(q / scale),
        }
    }

    pub fn pdf(&self, q: f64) -> f64 {
        if q <= 0.0 {
            return 0.0;
        }
        match *self {
            Self::Gamma { shape, scale } => QuantileFunction::Gamma { shape, scale }.pdf(q),
            Self::PowerGamma { shape, b, s } => {
                let w = q.powf(s) / b;
                // pdf of W times |dW/dq|, assembled in logs
                ((shape - 1.0) * w.ln() - w - ln_gamma(shape) + s.ln() + (s - 1.0) * q.ln() - b.ln()).exp()
            }
            Self::ScaledF { d1, d2, scale } => QuantileFunction::FisherF { d1, d2 }.pdf(q / scale) / scale,
        }
    }

    pub fn quantile(&self, u: f64) -> Result<f64> {
        match *self {
            Self::Gamma { shape, scale } => QuantileFunction::Gamma { shape, scale }.quantile(u),
            Self::PowerGamma { shape, b, s } => {
                QuantileFunction::Gamma { shape, scale: 1.0 }.quantile(u)?;
                Ok((b * gamma_quantile(shape, u)).powf(1.0 / s))
            }
            Self::ScaledF { d1, d2, scale } => Ok(scale * QuantileFunction::FisherF { d1, d2 }.quantile(u)?),
        }
    }

    /// `E{Q}` (infinite for t laws with dof ≤ 2).
    pub fn mean(&self) -> f64 {
        match *self {
            Self::Gamma { shape, scale } => shape * scale,
            Self::PowerGamma { shape, b, s } => {
                (b.ln() / s + ln_gamma(shape + 1.0 / s) - ln_gamma(shape)).exp()
            }
            Self::ScaledF { d1, d2, scale } => scale * QuantileFunction::FisherF { d1, d2 }.mean(),
        }
    }
}

pub fn make_generator(kind: GeneratorKind, dim: usize, field: MatrixField, power: f64) -> Result<DensityGenerator> {
    if !(power > 0.0 && power.is_finite()) {
        return Err(Error::InvalidParameter(format!("power must be positive, got {power}")));
    }
    validate_kind(kind, dim)?;
    let n = dim as f64;
    let nbar = field.effective_dim(dim);
    let scale = match kind {
        GeneratorKind::Gaussian => power,
        GeneratorKind::GeneralizedGaussian { shape: s } => {
            // E{Q} = b^{1/s} Γ((N̄+1)/s) / Γ(N̄/s) = Nσ²
            (s * ((n * power).ln() + ln_gamma(nbar / s) - ln_gamma((nbar + 1.0) / s))).exp()
        }
        GeneratorKind::StudentT { dof } => {
            if dof <= 2.0 {
                return Err(Error::InvalidParameter(format!(
                    "t generator with dof {dof} <= 2 has no finite power; use DensityGenerator::with_scale"
                )));
            }
            power * (dof - 2.0) / dof
        }
    };
    Ok(DensityGenerator { kind, field, dim, scale })
}

fn validate_kind(kind: GeneratorKind, dim: usize) -> Result<()> {
    if dim == 0 {
        return Err(Error::InvalidParameter("dimension must be positive".into()));
    }
    match kind {
        GeneratorKind::Gaussian => Ok(()),
        GeneratorKind::GeneralizedGaussian { shape } if shape > 0.0 && shape.is_finite() => Ok(()),
        GeneratorKind::StudentT { dof } if dof > 0.0 && dof.is_finite() => Ok(()),
        other => Err(Error::InvalidParameter(format!("invalid generator parameters {other:?}"))),
    }
}

impl DensityGenerator {
    /// Generator with an explicit scale parameter (`c` for Gaussian and t,
    /// `b` for generalized Gaussian).
    pub fn with_scale(kind: GeneratorKind, dim: usize, field: MatrixField, scale: f64) -> Result<Self> {
        validate_kind(kind, dim)?;
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidParameter(format!("scale must be positive, got {scale}")));
        }
        Ok(Self { kind, field, dim, scale })
    }

    pub fn kind(&self) -> GeneratorKind {
        self.kind
    }

    pub fn field(&self) -> MatrixField {
        self.field
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// `E{Q}/N`.
    pub fn power(&self) -> f64 {
        self.law().mean() / self.dim as f64
    }

    /// `ln g(t)` up to an additive constant.
    pub fn ln_g(&self, t: f64) -> f64 {
        let n = self.dim as f64;
        let c = self.scale;
        match (self.kind, self.field) {
            (GeneratorKind::Gaussian, MatrixField::Real) => -t / (2.0 * c),
            (GeneratorKind::Gaussian, MatrixField::Complex) => -t / c,
            (GeneratorKind::GeneralizedGaussian { shape }, _) => -t.powf(shape) / c,
            (GeneratorKind::StudentT { dof }, MatrixField::Real) => -0.5 * (dof + n) * (t / (dof * c)).ln_1p(),
            (GeneratorKind::StudentT { dof }, MatrixField::Complex) => {
                -0.5 * (2.0 * n + dof) * (2.0 * t / (dof * c)).ln_1p()
            }
        }
    }

    /// `ψ(t) = d ln g(t) / dt`.
    pub fn psi(&self, t: f64) -> f64 {
        let n = self.dim as f64;
        let c = self.scale;
        match (self.kind, self.field) {
            (GeneratorKind::Gaussian, MatrixField::Real) => -1.0 / (2.0 * c),
            (GeneratorKind::Gaussian, MatrixField::Complex) => -1.0 / c,
            (GeneratorKind::GeneralizedGaussian { shape }, _) => -shape * t.powf(shape - 1.0) / c,
            (GeneratorKind::StudentT { dof }, MatrixField::Real) => -(dof + n) / (2.0 * (dof * c + t)),
            (GeneratorKind::StudentT { dof }, MatrixField::Complex) => -(2.0 * n + dof) / (dof * c + 2.0 * t),
        }
    }

    pub fn law(&self) -> ModularVariateLaw {
        let nbar = self.field.effective_dim(self.dim);
        let n = self.dim as f64;
        match (self.kind, self.field) {
            (GeneratorKind::Gaussian, MatrixField::Real) => ModularVariateLaw::Gamma { shape: nbar, scale: 2.0 * self.scale },
            (GeneratorKind::Gaussian, MatrixField::Complex) => ModularVariateLaw::Gamma { shape: nbar, scale: self.scale },
            (GeneratorKind::GeneralizedGaussian { shape }, _) => {
                ModularVariateLaw::PowerGamma { shape: nbar / shape, b: self.scale, s: shape }
            }
            (GeneratorKind::StudentT { dof }, _) => {
                ModularVariateLaw::ScaledF { d1: 2.0 * nbar, d2: dof, scale: self.scale * n }
            }
        }
    }

    pub fn describe(&self) -> String {
        let kind = match self.kind {
            GeneratorKind::Gaussian => "gaussian".to_string(),
            GeneratorKind::GeneralizedGaussian { shape } => format!("gg(s={shape})"),
            GeneratorKind::StudentT { dof } => format!("t(dof={dof})"),
        };
        format!("{} {kind} N={} scale={}", self.field, self.dim, self.scale)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMeta<T: Scalar> {
    pub generator: Option<DensityGenerator>,
    pub mu: Option<DVector<T>>,
    pub sigma: Option<DMatrix<T>>,
    pub contamination: f64,
    pub outlier_shape: Option<f64>,
    pub seed: Option<u64>,
    pub outlier_flags: Vec<bool>,
}

impl<T: Scalar> DatasetMeta<T> {
    fn external(l: usize) -> Self {
        Self {
            generator: None,
            mu: None,
            sigma: None,
            contamination: 0.0,
            outlier_shape: None,
            seed: None,
            outlier_flags: vec![false; l],
        }
    }
}

/// `L` observations of dimension `N`, stored as the columns of an N×L matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T: Scalar> {
    samples: DMatrix<T>,
    meta: DatasetMeta<T>,
}

impl<T: Scalar> Dataset<T> {
    pub fn from_samples(samples: DMatrix<T>) -> Result<Self> {
        let l = samples.ncols();
        Self::with_meta(samples, DatasetMeta::external(l))
    }

    pub fn with_meta(samples: DMatrix<T>, meta: DatasetMeta<T>) -> Result<Self> {
        if samples.ncols() == 0 || samples.nrows() == 0 {
            return Err(Error::Dimension("a dataset needs at least one non-empty observation".into()));
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("dataset samples".into()));
        }
        if meta.outlier_flags.len() != samples.ncols() {
            return Err(Error::Dimension("one contamination flag per sample required".into()));
        }
        Ok(Self { samples, meta })
    }

    pub fn samples(&self) -> &DMatrix<T> {
        &self.samples
    }

    pub fn meta(&self) -> &DatasetMeta<T> {
        &self.meta
    }

    pub fn dim(&self) -> usize {
        self.samples.nrows()
    }

    pub fn len(&self) -> usize {
        self.samples.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.ncols() == 0
    }

    /// Multiplies every sample by `c` (location and scatter metadata follow).
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let mut meta = self.meta.clone();
        meta.mu = meta.mu.map(|m| m.scale(c));
        meta.sigma = meta.sigma.map(|s| s.scale(c * c));
        Self::with_meta(self.samples.scale(c), meta)
    }

    /// `A z_l + b` for every sample.
    pub fn affine(&self, a: &DMatrix<T>, b: &DVector<T>) -> Result<Self> {
        if a.ncols() != self.dim() || b.len() != a.nrows() {
            return Err(Error::Dimension("affine map does not match the data dimension".into()));
        }
        let mut out = a * &self.samples;
        for mut col in out.column_iter_mut() {
            col += b;
        }
        let mut meta = self.meta.clone();
        meta.mu = meta.mu.map(|m| a * m + b);
        meta.sigma = meta.sigma.map(|s| a * s * a.adjoint());
        Self::with_meta(out, meta)
    }

    /// Appends one observation (flagged as an outlier).
    pub fn with_extra(&self, x: &DVector<T>) -> Result<Self> {
        if x.len() != self.dim() {
            return Err(Error::Dimension("extra observation has the wrong dimension".into()));
        }
        let l = self.len();
        let mut samples = self.samples.clone().resize_horizontally(l + 1, T::zero());
        samples.set_column(l, x);
        let mut meta = self.meta.clone();
        meta.outlier_flags.push(true);
        Self::with_meta(samples, meta)
    }

    /// CSV with header `x1,..,xN` (real) or `x1_re,x1_im,..` (complex).
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.dim();
        let header: Vec<String> = (1..=n)
            .flat_map(|i| match T::FIELD {
                MatrixField::Real => vec![format!("x{i}")],
                MatrixField::Complex => vec![format!("x{i}_re"), format!("x{i}_im")],
            })
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for col in self.samples.column_iter() {
            let fields: Vec<String> = col
                .iter()
                .flat_map(|x| match T::FIELD {
                    MatrixField::Real => vec![format!("{:e}", x.re())],
                    MatrixField::Complex => vec![format!("{:e}", x.re()), format!("{:e}", x.im())],
                })
                .collect();
            writeln!(w, "{}", fields.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty CSV".into()))??;
        let width = header.split(',').count();
        let per = match T::FIELD {
            MatrixField::Real => 1,
            MatrixField::Complex => 2,
        };
        if width % per != 0 {
            return Err(Error::Parse(format!("{width} columns cannot hold {} data", T::FIELD)));
        }
        let n = width / per;
        let mut data = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("row {}: {e}", lineno + 2)))?;
            if vals.len() != width {
                return Err(Error::Parse(format!("row {} has {} fields, expected {width}", lineno + 2, vals.len())));
            }
            for i in 0..n {
                data.push(match T::FIELD {
                    MatrixField::Real => T::from_parts(vals[i], 0.0),
                    MatrixField::Complex => T::from_parts(vals[2 * i], vals[2 * i + 1]),
                });
            }
        }
        let l = data.len() / n.max(1);
        Self::from_samples(DMatrix::from_vec(n, l, data))
    }
}

/// Largest modulus in a vector.
pub(crate) fn max_modulus<T: Scalar>(v: &DVector<T>) -> f64 {
    v.iter().map(|x| x.modulus()).fold(0.0, f64::max)
}

/// Euclidean norm computed without intermediate overflow.
pub(crate) fn stable_norm<T: Scalar>(v: &DVector<T>) -> f64 {
    let m = max_modulus(v);
    if m == 0.0 || !m.is_finite() {
        return m;
    }
    m * v.unscale(m).norm()
}

/// Precomputed `V^{-1/2}` for repeated `(Q, u)` evaluations.
#[derive(Debug, Clone)]
pub struct Whitener<T: Scalar> {
    inv_sqrt: DMatrix<T>,
}

/// Radial part `r = √Q` and direction `u` of one observation.
#[derive(Debug, Clone)]
pub struct Radial<T: Scalar> {
    pub r: f64,
    pub u: DVector<T>,
}

impl<T: Scalar> Whitener<T> {
    pub fn new(v: &DMatrix<T>) -> Result<Self> {
        Ok(Self { inv_sqrt: herm_power(v, -0.5)? })
    }

    pub fn inv_sqrt(&self) -> &DMatrix<T> {
        &self.inv_sqrt
    }

    /// `r = ‖V^{-1/2}(x-μ)‖` and `u = V^{-1/2}(x-μ)/r`; `r` may be infinite
    /// for extreme outliers while `u` stays a unit vector.
    pub fn radial(&self, d: &DVector<T>) -> Option<Radial<T>> {
        let m = max_modulus(d);
        if m == 0.0 {
            return None;
        }
        let y = &self.inv_sqrt * d.unscale(m);
        let ny = stable_norm(&y);
        if ny == 0.0 {
            return None;
        }
        Some(Radial { r: m * ny, u: y.unscale(ny) })
    }
}

/// `Q = (x-μ)ᴴV⁻¹(x-μ)` and `u = Q^{-1/2}V^{-1/2}(x-μ)`.
pub fn q_u_stats<T: Scalar>(x: &DVector<T>, mu: &DVector<T>, v: &DMatrix<T>) -> Result<(f64, DVector<T>)> {
    if x.len() != mu.len() || v.nrows() != x.len() {
        return Err(Error::Dimension("observation, location and shape sizes differ".into()));
    }
    let w = Whitener::new(v)?;
    match w.radial(&(x - mu)) {
        Some(rad) => Ok((rad.r * rad.r, rad.u)),
        None => Err(Error::DegenerateObservation { index: 0 }),
    }
}

fn open_uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Uniform draw on the real or complex unit sphere of `T^n`.
pub fn sample_unit_sphere<T: Scalar, R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<T> {
    loop {
        let g = DVector::<T>::from_fn(n, |_, _| T::standard_normal(rng));
        let norm = g.norm();
        if norm > 0.0 {
            return g.unscale(norm);
        }
    }
}

fn check_model<T: Scalar>(gen: &DensityGenerator, mu: &DVector<T>, sigma: &DMatrix<T>) -> Result<DMatrix<T>> {
    if gen.field() != T::FIELD {
        return Err(Error::InvalidParameter(format!(
            "generator field {} does not match data field {}",
            gen.field(),
            T::FIELD
        )));
    }
    if mu.len() != gen.dim() || sigma.nrows() != gen.dim() || sigma.ncols() != gen.dim() {
        return Err(Error::Dimension(format!("model dimension must be {}", gen.dim())));
    }
    herm_power(sigma, 0.5)
}

fn draw_clean<T: Scalar>(
    gen: &DensityGenerator,
    law: &ModularVariateLaw,
    mu: &DVector<T>,
    root: &DMatrix<T>,
    rng: &mut ChaCha8Rng,
) -> Result<DVector<T>> {
    let u = sample_unit_sphere::<T, _>(gen.dim(), rng);
    let q = law.quantile(open_uniform(rng))?;
    Ok(mu + (root * u).scale(q.sqrt()))
}

/// `L` draws of `μ + √Q Σ^{1/2} u`, deterministic given `seed`.
pub fn sample_es<T: Scalar>(
    gen: &DensityGenerator,
    mu: &DVector<T>,
    sigma: &DMatrix<T>,
    l: usize,
    seed: u64,
) -> Result<Dataset<T>> {
    sample_contaminated(gen, mu, sigma, l, 0.0, 1.0, seed)
}

/// Outlier `τ⁻¹u` with `τ ~ Gamma(ρ, 1/ρ)` and `u` uniform on the sphere.
pub fn sample_outlier<T: Scalar, R: Rng + ?Sized>(rho: f64, n: usize, rng: &mut R) -> Result<DVector<T>> {
    let tau = sample_tau(rho, rng)?;
    Ok(sample_unit_sphere::<T, _>(n, rng).unscale(tau))
}

/// Seeded convenience wrapper around [`sample_outlier`].
pub fn sample_outlier_seeded<T: Scalar>(rho: f64, n: usize, seed: u64) -> Result<DVector<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_OUTLIERS);
    sample_outlier(rho, n, &mut rng)
}

pub(crate) fn sample_tau<R: Rng + ?Sized>(rho: f64, rng: &mut R) -> Result<f64> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::InvalidParameter(format!("outlier shape must be positive, got {rho}")));
    }
    let g = Gamma::new(rho, 1.0 / rho).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    // tiny shapes underflow to zero; keep the outlier finite
    Ok(g.sample(rng).max(f64::MIN_POSITIVE))
}

/// Clean ES draws replaced independently with probability `ε` by
/// `μ + τ⁻¹u` outliers.
pub fn sample_contaminated<T: Scalar>(
    gen: &DensityGenerator,
    mu: &DVector<T>,
    sigma: &DMatrix<T>,
    l: usize,
    eps: f64,
    rho: f64,
    seed: u64,
) -> Result<Dataset<T>> {
    if !(0.0..=0.5).contains(&eps) {
        return Err(Error::InvalidParameter(format!("contamination {eps} outside [0, 1/2]")));
    }
    if l == 0 {
        return Err(Error::InvalidParameter("sample size must be positive".into()));
    }
    let root = check_model(gen, mu, sigma)?;
    let law = gen.law();
    let mut clean_rng = ChaCha8Rng::seed_from_u64(seed);
    clean_rng.set_stream(STREAM_CLEAN);
    let mut flag_rng = ChaCha8Rng::seed_from_u64(seed);
    flag_rng.set_stream(STREAM_FLAGS);
    let mut out_rng = ChaCha8Rng::seed_from_u64(seed);
    out_rng.set_stream(STREAM_OUTLIERS);

    let n = gen.dim();
    let mut samples = DMatrix::<T>::zeros(n, l);
    let mut flags = Vec::with_capacity(l);
    for j in 0..l {
        let clean = draw_clean(gen, &law, mu, &root, &mut clean_rng)?;
        let flagged = eps > 0.0 && flag_rng.random::<f64>() < eps;
        let x = if flagged { mu + sample_outlier::<T, _>(rho, n, &mut out_rng)? } else { clean };
        samples.set_column(j, &x);
        flags.push(flagged);
    }
    let meta = DatasetMeta {
        generator: Some(gen.clone()),
        mu: Some(mu.clone()),
        sigma: Some(sigma.clone()),
        contamination: eps,
        outlier_shape: (eps > 0.0).then_some(rho),
        seed: Some(seed),
        outlier_flags: flags,
    };
    Dataset::with_meta(samples, meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn gaussian_power_and_laws() {
        let g = make_generator(GeneratorKind::Gaussian, 8, MatrixField::Real, 1.0).unwrap();
        assert!((g.law().mean() - 8.0).abs() < 1e-12);
        let gc = make_generator(GeneratorKind::Gaussian, 3, MatrixField::Complex, 1.0).unwrap();
        assert_eq!(gc.law(), ModularVariateLaw::Gamma { shape: 3.0, scale: 1.0 });
    }

    #[test]
    fn gg_unit_shape_is_gaussian() {
        let gg = make_generator(GeneratorKind::GeneralizedGaussian { shape: 1.0 }, 4, MatrixField::Complex, 2.0).unwrap();
        let ga = make_generator(GeneratorKind::Gaussian, 4, MatrixField::Complex, 2.0).unwrap();
        for q in [0.5, 3.0, 8.0, 20.0] {
            assert!((gg.law().cdf(q) - ga.law().cdf(q)).abs() < 1e-12);
            assert!((gg.psi(q) - ga.psi(q)).abs() < 1e-12);
        }
    }

    #[test]
    fn power_constraint_holds_in_closed_form() {
        for field in [MatrixField::Real, MatrixField::Complex] {
            for kind in [
                GeneratorKind::Gaussian,
                GeneratorKind::GeneralizedGaussian { shape: 0.3 },
                GeneratorKind::GeneralizedGaussian { shape: 2.0 },
                GeneratorKind::StudentT { dof: 5.0 },
            ] {
                let g = make_generator(kind, 5, field, 4.0).unwrap();
                assert!((g.power() - 4.0).abs() < 1e-10, "{kind:?} {field}");
            }
        }
    }

    #[test]
    fn invalid_parameters() {
        assert!(make_generator(GeneratorKind::GeneralizedGaussian { shape: 0.0 }, 3, MatrixField::Real, 1.0).is_err());
        assert!(make_generator(GeneratorKind::StudentT { dof: -1.0 }, 3, MatrixField::Real, 1.0).is_err());
        assert!(make_generator(GeneratorKind::StudentT { dof: 2.0 }, 3, MatrixField::Real, 1.0).is_err());
        assert!(make_generator(GeneratorKind::Gaussian, 3, MatrixField::Real, 0.0).is_err());
        assert!(DensityGenerator::with_scale(GeneratorKind::StudentT { dof: 1.0 }, 3, MatrixField::Real, 1.0).is_ok());
    }

    #[test]
    fn q_u_basic() {
        let mu = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let x = &mu + DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let (q, u) = q_u_stats(&x, &mu, &DMatrix::identity(3, 3)).unwrap();
        assert_eq!(q, 1.0);
        assert_eq!(u.as_slice(), &[1.0, 0.0, 0.0]);
        assert!(matches!(q_u_stats(&mu, &mu, &DMatrix::identity(3, 3)), Err(Error::DegenerateObservation { .. })));
    }

    #[test]
    fn outlier_norm_is_inverse_tau() {
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        let x: DVector<Complex64> = sample_outlier(0.5, 4, &mut a).unwrap();
        let tau = sample_tau(0.5, &mut b).unwrap();
        assert!((x.norm() * tau - 1.0).abs() < 1e-14);
    }

    #[test]
    fn csv_round_trip() {
        let g = make_generator(GeneratorKind::StudentT { dof: 3.0 }, 3, MatrixField::Complex, 1.0).unwrap();
        let d = sample_es::<Complex64>(&g, &DVector::zeros(3), &DMatrix::identity(3, 3), 20, 4).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let back = Dataset::<Complex64>::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.samples(), d.samples());
    }
}
