//! Ranks, the rank-based central sequence, the perturbation estimate of `α`
//! and the one-step R-estimator of shape.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::bounds::alpha0;
use crate::elliptical::{Dataset, DensityGenerator, Whitener};
use crate::error::{Error, Result};
use crate::estimators::{Preliminary, PreliminaryEstimate};
use crate::field::Scalar;
use crate::matops::{
    build_compression, check_hermitian, is_positive_definite, shape_from_params, shape_params, Constraint,
    ShapeMatrix,
};
use crate::scores::ScoreFunction;

pub const DEFAULT_PERTURBATION_SCALE: f64 = 0.01;
/// Maximum number of correction halvings before falling back to the
/// preliminary estimate.
pub const MAX_HALVINGS: usize = 60;

/// 1-based ranks; ties are broken by original position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct RankVector(Vec<usize>);

impl RankVector {
    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn compute_ranks(values: &[f64]) -> Result<RankVector> {
    if values.is_empty() {
        return Err(Error::InvalidParameter("cannot rank an empty vector".into()));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("rank input".into()));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0; values.len()];
    for (pos, &idx) in order.iter().enumerate() {
        ranks[idx] = pos + 1;
    }
    Ok(RankVector(ranks))
}

#[derive(Debug, Clone)]
pub struct REstimatorConfig<T: Scalar> {
    pub score: ScoreFunction,
    pub preliminary: Preliminary,
    pub perturbation_scale: f64,
    pub perturbation_seed: u64,
    pub fixed_h0: Option<DMatrix<T>>,
}

impl<T: Scalar> REstimatorConfig<T> {
    pub fn new(score: ScoreFunction) -> Self {
        Self {
            score,
            preliminary: Preliminary::Tyler,
            perturbation_scale: DEFAULT_PERTURBATION_SCALE,
            perturbation_seed: 0,
            fixed_h0: None,
        }
    }

    /// Van der Waerden score with Tyler preliminary and default `υ`.
    pub fn van_der_waerden(dim: usize, field: crate::MatrixField) -> Self {
        Self::new(ScoreFunction::van_der_waerden(dim, field))
    }

    fn perturbation(&self, n: usize) -> Result<DMatrix<T>> {
        match &self.fixed_h0 {
            Some(h) => {
                if h.nrows() != n || h.ncols() != n {
                    return Err(Error::Dimension(format!("fixed H0 must be {n}x{n}")));
                }
                check_hermitian(h)?;
                if h[(0, 0)] != T::zero() {
                    return Err(Error::InvalidParameter("fixed H0 must have a zero top-left entry".into()));
                }
                Ok(h.clone())
            }
            None => gen_perturbation(n, self.perturbation_scale, self.perturbation_seed),
        }
    }
}

#[derive(Debug, Clone)]
pub struct REstimateReport<T: Scalar> {
    pub shape: ShapeMatrix<T>,
    pub alpha_hat: f64,
    pub preliminary: PreliminaryEstimate<T>,
    pub ranks: RankVector,
    pub correction_norm: f64,
    pub pd_repaired: bool,
    pub perturbation_seed: u64,
}

fn matrix_json<T: Scalar>(m: &DMatrix<T>) -> serde_json::Value {
    let rows = |f: fn(T) -> f64| -> Vec<Vec<f64>> {
        (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| f(m[(i, j)])).collect()).collect()
    };
    json!({ "re": rows(T::re), "im": rows(T::im) })
}

impl<T: Scalar> REstimateReport<T> {
    pub fn to_json(&self) -> serde_json::Value {
        let loc = &self.preliminary.location;
        json!({
            "field": T::FIELD,
            "dimension": self.shape.dim(),
            "shape": matrix_json(self.shape.matrix()),
            "shape_trace_n": matrix_json(self.shape.renormalize(Constraint::TraceN).matrix()),
            "alpha_hat": self.alpha_hat,
            "correction_norm": self.correction_norm,
            "pd_repaired": self.pd_repaired,
            "perturbation_seed": self.perturbation_seed,
            "ranks": self.ranks,
            "preliminary": {
                "location": {
                    "re": loc.iter().map(|x| x.re()).collect::<Vec<_>>(),
                    "im": loc.iter().map(|x| x.im()).collect::<Vec<_>>(),
                },
                "shape": matrix_json(self.preliminary.shape.matrix()),
                "iterations": self.preliminary.iterations,
                "converged": self.preliminary.converged,
                "residual": self.preliminary.residual,
            },
        })
    }
}

/// Hermitian perturbation `(G + Gᴴ)/2` with `G₁₁ = 0` and i.i.d. (circular)
/// normal entries of variance `υ²`.
pub fn gen_perturbation<T: Scalar>(n: usize, upsilon: f64, seed: u64) -> Result<DMatrix<T>> {
    if !(upsilon > 0.0 && upsilon.is_finite()) {
        return Err(Error::InvalidParameter(format!("perturbation scale must be positive, got {upsilon}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = DMatrix::<T>::from_fn(n, n, |_, _| T::standard_normal(&mut rng).scale(upsilon));
    g[(0, 0)] = T::zero();
    let mut h = (&g + g.adjoint()).unscale(2.0);
    h[(0, 0)] = T::zero();
    Ok(h)
}

struct Whitened<T: Scalar> {
    radii: Vec<f64>,
    dirs: Vec<DVector<T>>,
}

fn whiten_all<T: Scalar>(data: &Dataset<T>, mu: &DVector<T>, v: &DMatrix<T>) -> Result<Whitened<T>> {
    if mu.len() != data.dim() || v.nrows() != data.dim() {
        return Err(Error::Dimension("location/shape do not match the data dimension".into()));
    }
    let w = Whitener::new(v)?;
    let mut radii = Vec::with_capacity(data.len());
    let mut dirs = Vec::with_capacity(data.len());
    for (index, col) in data.samples().column_iter().enumerate() {
        let rad = w.radial(&(col - mu)).ok_or(Error::DegenerateObservation { index })?;
        radii.push(rad.r);
        dirs.push(rad.u);
    }
    Ok(Whitened { radii, dirs })
}

fn weighted_outer<T: Scalar>(dirs: &[DVector<T>], weights: impl Iterator<Item = f64>) -> DMatrix<T> {
    let n = dirs[0].len();
    let mut acc = DMatrix::<T>::zeros(n, n);
    for (u, w) in dirs.iter().zip(weights) {
        acc += (u * u.adjoint()).scale(w);
    }
    acc
}

fn compress<T: Scalar>(c: &DMatrix<T>, m: &DMatrix<T>) -> DVector<T> {
    c * DVector::from_column_slice(m.as_slice())
}

/// `C · Σ_l K(r_l/(L+1)) vec(u_l u_lᴴ)` plus the ranks it used.
fn score_sum<T: Scalar>(
    data: &Dataset<T>,
    mu: &DVector<T>,
    v1: &ShapeMatrix<T>,
    table: &[f64],
) -> Result<(DVector<T>, DMatrix<T>, RankVector)> {
    if table.len() != data.len() {
        return Err(Error::Dimension(format!("score table has {} entries for L={}", table.len(), data.len())));
    }
    let wh = whiten_all(data, mu, v1.matrix())?;
    let ranks = compute_ranks(&wh.radii)?;
    let s = weighted_outer(&wh.dirs, ranks.as_slice().iter().map(|&r| table[r - 1]));
    let c = build_compression(v1)?;
    Ok((compress(&c, &s), c, ranks))
}

fn check_score<T: Scalar>(data: &Dataset<T>, k: &ScoreFunction) -> Result<()> {
    if k.field() != T::FIELD || k.dim() != data.dim() {
        return Err(Error::InvalidParameter(format!(
            "score built for {} N={} applied to {} N={}",
            k.field(),
            k.dim(),
            T::FIELD,
            data.dim()
        )));
    }
    if data.len() < 2 {
        return Err(Error::InvalidParameter("the central sequence needs L >= 2".into()));
    }
    Ok(())
}

/// Rank-based approximation of the efficient central sequence.
pub fn central_sequence<T: Scalar>(
    data: &Dataset<T>,
    mu: &DVector<T>,
    v1: &ShapeMatrix<T>,
    k: &ScoreFunction,
) -> Result<DVector<T>> {
    check_score(data, k)?;
    let table = k.rank_scores(data.len())?;
    central_sequence_with_table(data, mu, v1, &table)
}

pub fn central_sequence_with_table<T: Scalar>(
    data: &Dataset<T>,
    mu: &DVector<T>,
    v1: &ShapeMatrix<T>,
    table: &[f64],
) -> Result<DVector<T>> {
    let (cs, _, _) = score_sum(data, mu, v1, table)?;
    Ok(cs.unscale((data.len() as f64).sqrt()))
}

/// Perturbation estimate `α̂ = ‖Δ̃(V₁ + L^{-1/2}H⁰) − Δ̃(V₁)‖ / ‖C Cᴴ params(H⁰)‖`.
pub fn estimate_alpha<T: Scalar>(
    data: &Dataset<T>,
    mu: &DVector<T>,
    v1: &ShapeMatrix<T>,
    k: &ScoreFunction,
    h0: &DMatrix<T>,
) -> Result<f64> {
    check_score(data, k)?;
    let table = k.rank_scores(data.len())?;
    let (cs, c, _) = score_sum(data, mu, v1, &table)?;
    alpha_from_parts(data, mu, v1, &table, h0, &cs, &c)
}

fn alpha_from_parts<T: Scalar>(
    data: &Dataset<T>,
    mu: &DVector<T>,
    v1: &ShapeMatrix<T>,
    table: &[f64],
    h0: &DMatrix<T>,
    cs: &DVector<T>,
    c: &DMatrix<T>,
) -> Result<f64> {
    let n = v1.dim();
    if h0.nrows() != n || h0.ncols() != n {
        return Err(Error::Dimension(format!("H0 must be {n}x{n}")));
    }
    let sqrt_l = (data.len() as f64).sqrt();
    let perturbed = v1.matrix() + h0.unscale(sqrt_l);
    if !is_positive_definite(&perturbed) {
        return Err(Error::PerturbationNotPositiveDefinite);
    }
    let vp = ShapeMatrix::new(perturbed, Constraint::TopLeftUnit)
        .map_err(|_| Error::PerturbationNotPositiveDefinite)?;
    let (cs_p, _, _) = score_sum(data, mu, &vp, table)?;
    let num = (cs_p - cs).unscale(sqrt_l).norm();
    let gram = c * c.adjoint();
    let den = (gram * shape_params(h0)?).norm();
    if !(den > 0.0) {
        return Err(Error::ZeroPerturbation);
    }
    let alpha = num / den;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::NonFinite(format!("alpha estimate {alpha}")));
    }
    Ok(alpha)
}

/// Applies `params(V₁) + δ` and halves `δ` until the result is PD.
fn one_step<T: Scalar>(
    v1: &ShapeMatrix<T>,
    c: &DMatrix<T>,
    cs: &DVector<T>,
    denom: f64,
) -> Result<(ShapeMatrix<T>, f64, bool)> {
    let gram = c * c.adjoint();
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Singular("Gram matrix of the compression matrix".into()))?;
    let delta = chol.solve(cs).unscale(denom);
    if delta.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("one-step correction".into()));
    }
    let base = shape_params(v1.matrix())?;
    let mut step = delta;
    for halvings in 0..=MAX_HALVINGS {
        let candidate = shape_from_params(&(&base + &step))?;
        if is_positive_definite(&candidate) {
            let shape = ShapeMatrix::new(candidate, Constraint::TopLeftUnit)?;
            return Ok((shape, step.norm(), halvings > 0));
        }
        step.unscale_mut(2.0);
    }
    Ok((v1.clone(), 0.0, true))
}

pub fn r_estimate<T: Scalar>(data: &Dataset<T>, cfg: &REstimatorConfig<T>) -> Result<REstimateReport<T>> {
    check_score(data, &cfg.score)?;
    if data.len() <= data.dim() {
        return Err(Error::InvalidParameter("R-estimation needs L > N".into()));
    }
    let prelim = cfg.preliminary.run(data)?;
    let table = cfg.score.rank_scores(data.len())?;
    r_estimate_prepared(data, cfg, prelim, &table)
}

/// R-estimate from an already computed preliminary estimate and score
/// table `K(r/(L+1))`, `r = 1..L`.
pub fn r_estimate_prepared<T: Scalar>(
    data: &Dataset<T>,
    cfg: &REstimatorConfig<T>,
    prelim: PreliminaryEstimate<T>,
    table: &[f64],
) -> Result<REstimateReport<T>> {
    check_score(data, &cfg.score)?;
    let h0 = cfg.perturbation(data.dim())?;
    let mu = &prelim.location;
    let v1 = &prelim.shape;
    let (cs, c, ranks) = score_sum(data, mu, v1, table)?;
    let alpha_hat = alpha_from_parts(data, mu, v1, table, &h0, &cs, &c)?;
    let (shape, correction_norm, pd_repaired) = one_step(v1, &c, &cs, data.len() as f64 * alpha_hat)?;
    Ok(REstimateReport {
        shape,
        alpha_hat,
        preliminary: prelim,
        ranks,
        correction_norm,
        pd_repaired,
        perturbation_seed: cfg.perturbation_seed,
    })
}

/// Infeasible one-step estimator using the true generator: weights
/// `−Q̂ψ(Q̂)` and the exact `α`. The generator scale must refer to the
/// unit-top-left shape (i.e. `Σ₁₁ = 1`).
pub fn clairvoyant_estimate<T: Scalar>(
    data: &Dataset<T>,
    gen_true: &DensityGenerator,
    preliminary: &PreliminaryEstimate<T>,
) -> Result<REstimateReport<T>> {
    if gen_true.field() != T::FIELD || gen_true.dim() != data.dim() {
        return Err(Error::InvalidParameter("generator does not match the data".into()));
    }
    let alpha = alpha0(gen_true)?;
    let v1 = &preliminary.shape;
    let wh = whiten_all(data, &preliminary.location, v1.matrix())?;
    let ranks = compute_ranks(&wh.radii)?;
    let weights = wh.radii.iter().map(|&r| {
        let q = r * r;
        -q * gen_true.psi(q)
    });
    let s = weighted_outer(&wh.dirs, weights);
    let c = build_compression(v1)?;
    let cs = compress(&c, &s);
    let (shape, correction_norm, pd_repaired) = one_step(v1, &c, &cs, data.len() as f64 * alpha)?;
    Ok(REstimateReport {
        shape,
        alpha_hat: alpha,
        preliminary: preliminary.clone(),
        ranks,
        correction_norm,
        pd_repaired,
        perturbation_seed: 0,
    })
}
