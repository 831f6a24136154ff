//! TOML experiment specification.
//!
//! ```toml
//! spec_version = 1
//! scenario = "mse-vs-l"          # mse-vs-param | bp-curve | eif-curve | alpha-sweep
//! field = "complex"
//! dimension = 8
//! runs = 1000
//! seed = 42
//! l_grid = [128, 512, 2048]
//!
//! [generator]
//! family = "gg"                  # gaussian | gg | t
//! shape = 0.5
//! power = 4.0
//!
//! [sigma]
//! kind = "toeplitz"              # identity | toeplitz | file
//! rho_abs = 0.8
//! rho_phase = 0.2                # fraction of a full turn
//!
//! [[estimators]]
//! kind = "tyler"
//!
//! [[estimators]]
//! kind = "r"
//! score = "vdw"                  # vdw | t<nu> | true
//! preliminary = "tyler"          # tyler | scm | huber:<q>
//! upsilon = 0.01
//! ```

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::elliptical::{make_generator, DensityGenerator, GeneratorKind};
use crate::error::{Error, Result};
use crate::estimators::Preliminary;
use crate::field::{MatrixField, Scalar};
use crate::restimator::DEFAULT_PERTURBATION_SCALE;
use crate::scores::{score_from_generator, ScoreFunction};

pub const SPEC_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    MseVsL,
    MseVsParam,
    BpCurve,
    EifCurve,
    AlphaSweep,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::MseVsL => "mse-vs-l",
            Scenario::MseVsParam => "mse-vs-param",
            Scenario::BpCurve => "bp-curve",
            Scenario::EifCurve => "eif-curve",
            Scenario::AlphaSweep => "alpha-sweep",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gaussian,
    Gg,
    T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub family: Family,
    /// Generalized Gaussian shape `s`.
    #[serde(default)]
    pub shape: Option<f64>,
    /// Student-t degrees of freedom.
    #[serde(default)]
    pub dof: Option<f64>,
    /// `E{Q}/N`; defaults to 4 for complex and 1 for real data.
    #[serde(default)]
    pub power: Option<f64>,
    /// Explicit scale parameter; overrides `power`.
    #[serde(default)]
    pub scale: Option<f64>,
}

impl GeneratorSpec {
    pub fn kind(&self) -> Result<GeneratorKind> {
        match self.family {
            Family::Gaussian => Ok(GeneratorKind::Gaussian),
            Family::Gg => self
                .shape
                .map(|shape| GeneratorKind::GeneralizedGaussian { shape })
                .ok_or_else(|| Error::Parse("generator family 'gg' needs 'shape'".into())),
            Family::T => self
                .dof
                .map(|dof| GeneratorKind::StudentT { dof })
                .ok_or_else(|| Error::Parse("generator family 't' needs 'dof'".into())),
        }
    }

    pub fn with_param(&self, value: f64) -> Self {
        let mut out = self.clone();
        match self.family {
            Family::Gg => out.shape = Some(value),
            Family::T => out.dof = Some(value),
            Family::Gaussian => {}
        }
        out
    }

    pub fn build(&self, dim: usize, field: MatrixField) -> Result<DensityGenerator> {
        let kind = self.kind()?;
        match self.scale {
            Some(scale) => DensityGenerator::with_scale(kind, dim, field, scale),
            None => {
                let default = match field {
                    MatrixField::Complex => 4.0,
                    MatrixField::Real => 1.0,
                };
                make_generator(kind, dim, field, self.power.unwrap_or(default))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SigmaSpec {
    #[default]
    Identity,
    /// Hermitian Toeplitz with first column `[1, ρ, …, ρ^{N−1}]`,
    /// `ρ = rho_abs · exp(j 2π rho_phase)`.
    Toeplitz {
        rho_abs: f64,
        #[serde(default)]
        rho_phase: f64,
    },
    /// CSV of matrix rows; complex entries as `re,im` pairs.
    File { path: PathBuf },
}

impl SigmaSpec {
    pub fn build<T: Scalar>(&self, dim: usize, base_dir: Option<&Path>) -> Result<DMatrix<T>> {
        match self {
            SigmaSpec::Identity => Ok(DMatrix::identity(dim, dim)),
            SigmaSpec::Toeplitz { rho_abs, rho_phase } => toeplitz(dim, *rho_abs, *rho_phase),
            SigmaSpec::File { path } => {
                let full = match base_dir {
                    Some(dir) if path.is_relative() => dir.join(path),
                    _ => path.clone(),
                };
                let text = std::fs::read_to_string(&full)?;
                matrix_from_csv(&text, dim)
            }
        }
    }
}

pub fn toeplitz<T: Scalar>(dim: usize, rho_abs: f64, rho_phase: f64) -> Result<DMatrix<T>> {
    if !(0.0..1.0).contains(&rho_abs) {
        return Err(Error::InvalidParameter(format!("|rho| must lie in [0,1), got {rho_abs}")));
    }
    let angle = 2.0 * std::f64::consts::PI * rho_phase;
    let (re, im) = (rho_abs * angle.cos(), rho_abs * angle.sin());
    if T::FIELD == MatrixField::Real && im.abs() > 1e-12 * rho_abs.max(1e-300) {
        return Err(Error::InvalidParameter("a real Toeplitz matrix needs a real rho (phase 0 or 0.5)".into()));
    }
    let rho = T::from_parts(re, im);
    let mut m = DMatrix::<T>::identity(dim, dim);
    for i in 0..dim {
        for j in 0..i {
            let p = rho.powi((i - j) as i32);
            m[(i, j)] = p;
            m[(j, i)] = p.conjugate();
        }
    }
    Ok(m)
}

fn matrix_from_csv<T: Scalar>(text: &str, dim: usize) -> Result<DMatrix<T>> {
    let per = match T::FIELD {
        MatrixField::Real => 1,
        MatrixField::Complex => 2,
    };
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split(',').map(|v| v.trim().parse::<f64>()).collect::<std::result::Result<Vec<_>, _>>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Parse(format!("sigma file: {e}")))?;
    if rows.len() != dim || rows.iter().any(|r| r.len() != per * dim) {
        return Err(Error::Parse(format!("sigma file must hold a {dim}x{dim} {} matrix", T::FIELD)));
    }
    Ok(DMatrix::from_fn(dim, dim, |i, j| match T::FIELD {
        MatrixField::Real => T::from_parts(rows[i][j], 0.0),
        MatrixField::Complex => T::from_parts(rows[i][2 * j], rows[i][2 * j + 1]),
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EstimatorSpec {
    Scm,
    Tyler,
    Huber {
        q: f64,
    },
    R {
        #[serde(default = "default_score")]
        score: String,
        #[serde(default = "default_preliminary")]
        preliminary: String,
        #[serde(default = "default_upsilon")]
        upsilon: f64,
    },
}

fn default_score() -> String {
    "vdw".into()
}

fn default_preliminary() -> String {
    "tyler".into()
}

fn default_upsilon() -> f64 {
    DEFAULT_PERTURBATION_SCALE
}

/// Score specification parsed from `vdw`, `t<nu>` or `true`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScoreChoice {
    VanDerWaerden,
    StudentT(f64),
    TrueGenerator,
}

impl ScoreChoice {
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "vdw" => Ok(ScoreChoice::VanDerWaerden),
            "true" => Ok(ScoreChoice::TrueGenerator),
            _ => s
                .strip_prefix('t')
                .and_then(|nu| nu.parse::<f64>().ok())
                .filter(|nu| *nu > 0.0)
                .map(ScoreChoice::StudentT)
                .ok_or_else(|| Error::Parse(format!("unknown score '{s}' (expected vdw, t<nu> or true)"))),
        }
    }

    pub fn build(&self, gen: &DensityGenerator) -> Result<ScoreFunction> {
        match *self {
            ScoreChoice::VanDerWaerden => Ok(ScoreFunction::van_der_waerden(gen.dim(), gen.field())),
            ScoreChoice::StudentT(nu) => ScoreFunction::student_t(nu, gen.dim(), gen.field()),
            ScoreChoice::TrueGenerator => Ok(score_from_generator(gen)),
        }
    }

    pub fn label(&self) -> String {
        match self {
            ScoreChoice::VanDerWaerden => "vdw".into(),
            ScoreChoice::StudentT(nu) => format!("t{nu}"),
            ScoreChoice::TrueGenerator => "true".into(),
        }
    }
}

pub fn parse_preliminary(s: &str) -> Result<Preliminary> {
    let s = s.trim().to_ascii_lowercase();
    match s.as_str() {
        "tyler" => Ok(Preliminary::Tyler),
        "scm" => Ok(Preliminary::Scm),
        _ => s
            .strip_prefix("huber:")
            .and_then(|q| q.parse::<f64>().ok())
            .filter(|q| *q > 0.0 && *q < 1.0)
            .map(|q| Preliminary::Huber { q })
            .ok_or_else(|| Error::Parse(format!("unknown preliminary '{s}' (expected tyler, scm or huber:<q>)"))),
    }
}

impl EstimatorSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            EstimatorSpec::Huber { q } if !(*q > 0.0 && *q < 1.0) => {
                Err(Error::Parse(format!("Huber q must lie in (0,1), got {q}")))
            }
            EstimatorSpec::R { score, preliminary, upsilon } => {
                ScoreChoice::parse(score)?;
                parse_preliminary(preliminary)?;
                if !(*upsilon > 0.0) {
                    return Err(Error::Parse(format!("upsilon must be positive, got {upsilon}")));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Identifier used in the CSV `estimator` column.
    pub fn id(&self) -> String {
        match self {
            EstimatorSpec::Scm => "scm".into(),
            EstimatorSpec::Tyler => "tyler".into(),
            EstimatorSpec::Huber { q } => format!("huber(q={q})"),
            EstimatorSpec::R { score, preliminary, upsilon } => {
                let score = ScoreChoice::parse(score).map(|s| s.label()).unwrap_or_else(|_| score.clone());
                let pre = parse_preliminary(preliminary).map(|p| p.label()).unwrap_or_else(|_| preliminary.clone());
                if *upsilon == DEFAULT_PERTURBATION_SCALE {
                    format!("r-{score}/{pre}")
                } else {
                    format!("r-{score}/{pre}(upsilon={upsilon})")
                }
            }
        }
    }

    /// The preliminary estimator this entry needs (itself for M-estimators).
    pub fn preliminary(&self) -> Result<Preliminary> {
        match self {
            EstimatorSpec::Scm => Ok(Preliminary::Scm),
            EstimatorSpec::Tyler => Ok(Preliminary::Tyler),
            EstimatorSpec::Huber { q } => Ok(Preliminary::Huber { q: *q }),
            EstimatorSpec::R { preliminary, .. } => parse_preliminary(preliminary),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParameter {
    GgShape,
    TDof,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamGrid {
    pub name: SweepParameter,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub spec_version: u32,
    pub scenario: Scenario,
    pub field: MatrixField,
    /// `N`; for `alpha-sweep` the first entry of `dimension_grid` is used
    /// when this is omitted.
    #[serde(default)]
    pub dimension: Option<usize>,
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
    pub generator: GeneratorSpec,
    #[serde(default)]
    pub sigma: SigmaSpec,
    pub estimators: Vec<EstimatorSpec>,
    /// Fixed sample size `L` (mse-vs-param, bp-curve, eif-curve).
    #[serde(default)]
    pub samples: Option<usize>,
    /// `L = samples_per_dim · N` when `samples` is absent.
    #[serde(default)]
    pub samples_per_dim: Option<usize>,
    #[serde(default)]
    pub l_grid: Vec<usize>,
    #[serde(default)]
    pub param: Option<ParamGrid>,
    #[serde(default)]
    pub epsilon_grid: Vec<f64>,
    /// Outlier shape `ϱ` for bp-curve.
    #[serde(default)]
    pub outlier_shape: Option<f64>,
    /// Outlier shapes `ϱ` for eif-curve.
    #[serde(default)]
    pub outlier_shapes: Vec<f64>,
    #[serde(default)]
    pub upsilon_grid: Vec<f64>,
    #[serde(default)]
    pub dimension_grid: Vec<usize>,
    /// Emit the bound floor `ε/L` rows in MSE sweeps.
    #[serde(default = "default_true")]
    pub include_bound: bool,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn default_true() -> bool {
    true
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut spec = Self::from_toml(&text)?;
        spec.base_dir = path.parent().map(Path::to_path_buf);
        Ok(spec)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn dim(&self) -> Result<usize> {
        self.dimension
            .or_else(|| self.dimension_grid.first().copied())
            .ok_or_else(|| Error::Parse("'dimension' is required".into()))
    }

    /// Sample size for fixed-L scenarios at dimension `n`.
    pub fn sample_size(&self, n: usize) -> Result<usize> {
        match (self.samples, self.samples_per_dim) {
            (Some(l), _) => Ok(l),
            (None, Some(k)) => Ok(k * n),
            (None, None) => Err(Error::Parse(format!("scenario {} needs 'samples' or 'samples_per_dim'", self.scenario.name()))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.spec_version != SPEC_VERSION {
            return Err(Error::Parse(format!("unsupported spec_version {} (expected {SPEC_VERSION})", self.spec_version)));
        }
        if self.runs == 0 || self.runs >= 1 << 32 {
            return Err(Error::Parse("runs must be in [1, 2^32)".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::Parse("at least one estimator is required".into()));
        }
        for e in &self.estimators {
            e.validate()?;
        }
        self.generator.kind()?;
        let need = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Parse(format!("scenario {} needs {what}", self.scenario.name())))
            }
        };
        match self.scenario {
            Scenario::MseVsL => {
                self.dim()?;
                need(!self.l_grid.is_empty(), "a non-empty 'l_grid'")?;
            }
            Scenario::MseVsParam => {
                self.dim()?;
                self.sample_size(self.dim()?)?;
                need(self.param.as_ref().is_some_and(|p| !p.values.is_empty()), "a [param] grid")?;
                if let Some(p) = &self.param {
                    let expected = match p.name {
                        SweepParameter::GgShape => Family::Gg,
                        SweepParameter::TDof => Family::T,
                    };
                    need(self.generator.family == expected, "a generator family matching the swept parameter")?;
                }
            }
            Scenario::BpCurve => {
                self.sample_size(self.dim()?)?;
                need(!self.epsilon_grid.is_empty(), "a non-empty 'epsilon_grid'")?;
                need(self.epsilon_grid.iter().all(|e| (0.0..=0.5).contains(e)), "epsilon values in [0, 1/2]")?;
                need(self.outlier_shape.is_some_and(|r| r > 0.0), "a positive 'outlier_shape'")?;
            }
            Scenario::EifCurve => {
                self.dim()?;
                need(!self.outlier_shapes.is_empty(), "a non-empty 'outlier_shapes'")?;
                need(self.outlier_shapes.iter().all(|r| *r > 0.0), "positive outlier shapes")?;
            }
            Scenario::AlphaSweep => {
                need(!self.upsilon_grid.is_empty(), "a non-empty 'upsilon_grid'")?;
                need(self.upsilon_grid.iter().all(|u| *u > 0.0), "positive upsilon values")?;
                let dims = self.alpha_dimensions()?;
                for n in dims {
                    self.sample_size(n)?;
                }
            }
        }
        Ok(())
    }

    pub fn alpha_dimensions(&self) -> Result<Vec<usize>> {
        if !self.dimension_grid.is_empty() {
            Ok(self.dimension_grid.clone())
        } else {
            Ok(vec![self.dim()?])
        }
    }
}
