//! Score functions on `(0,1)` and the quantile functions behind them.
//!
//! Ranks are mapped to `r/(L+1)` before evaluation, so every score is only
//! ever evaluated strictly inside the unit interval.

use crate::elliptical::DensityGenerator;
use crate::error::{Error, Result};
use crate::field::MatrixField;
use crate::special::{
    beta_reg_pair, gamma_pq, invert_monotone, ln_beta, ln_gamma, normal_quantile_approx,
};

const QUANTILE_TOL: f64 = 1e-13;

/// Continuous distributions on the positive half-line used by the scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QuantileFunction {
    ChiSquare { dof: f64 },
    Gamma { shape: f64, scale: f64 },
    FisherF { d1: f64, d2: f64 },
    Beta { a: f64, b: f64 },
}

impl QuantileFunction {
    pub fn chi_square(dof: f64) -> Result<Self> {
        positive("chi-square dof", dof)?;
        Ok(Self::ChiSquare { dof })
    }

    pub fn gamma(shape: f64, scale: f64) -> Result<Self> {
        positive("gamma shape", shape)?;
        positive("gamma scale", scale)?;
        Ok(Self::Gamma { shape, scale })
    }

    pub fn fisher_f(d1: f64, d2: f64) -> Result<Self> {
        positive("F d1", d1)?;
        positive("F d2", d2)?;
        Ok(Self::FisherF { d1, d2 })
    }

    pub fn beta(a: f64, b: f64) -> Result<Self> {
        positive("beta a", a)?;
        positive("beta b", b)?;
        Ok(Self::Beta { a, b })
    }

    /// `(shape, scale)` of the gamma law; chi-square is Gamma(dof/2, 2).
    fn as_gamma(&self) -> Option<(f64, f64)> {
        match *self {
            Self::ChiSquare { dof } => Some((dof / 2.0, 2.0)),
            Self::Gamma { shape, scale } => Some((shape, scale)),
            _ => None,
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.cdf_sf(x).0
    }

    /// `(cdf(x), 1 - cdf(x))`, each accurate in its own tail.
    pub fn cdf_sf(&self, x: f64) -> (f64, f64) {
        if x <= 0.0 {
            return (0.0, 1.0);
        }
        if let Some((k, theta)) = self.as_gamma() {
            return gamma_pq(k, x / theta);
        }
        match *self {
            Self::FisherF { d1, d2 } => {
                let y = d1 * x / (d1 * x + d2);
                let w = d2 / (d1 * x + d2);
                if y < 0.5 {
                    beta_reg_pair(d1 / 2.0, d2 / 2.0, y)
                } else {
                    let (q, p) = beta_reg_pair(d2 / 2.0, d1 / 2.0, w);
                    (p, q)
                }
            }
            Self::Beta { a, b } => beta_reg_pair(a, b, x),
            _ => unreachable!(),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if let Some((k, theta)) = self.as_gamma() {
            let z = x / theta;
            return ((k - 1.0) * z.ln() - z - ln_gamma(k)).exp() / theta;
        }
        match *self {
            Self::FisherF { d1, d2 } => {
                let ln = 0.5 * d1 * (d1 / d2).ln() + (0.5 * d1 - 1.0) * x.ln()
                    - 0.5 * (d1 + d2) * (d1 * x / d2).ln_1p()
                    - ln_beta(d1 / 2.0, d2 / 2.0);
                ln.exp()
            }
            Self::Beta { a, b } => {
                if x >= 1.0 {
                    return 0.0;
                }
                ((a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - ln_beta(a, b)).exp()
            }
            _ => unreachable!(),
        }
    }

    pub fn mean(&self) -> f64 {
        if let Some((k, theta)) = self.as_gamma() {
            return k * theta;
        }
        match *self {
            Self::FisherF { d2, .. } if d2 > 2.0 => d2 / (d2 - 2.0),
            Self::FisherF { .. } => f64::INFINITY,
            Self::Beta { a, b } => a / (a + b),
            _ => unreachable!(),
        }
    }

    pub fn quantile(&self, u: f64) -> Result<f64> {
        check_unit(u)?;
        if let Some((k, theta)) = self.as_gamma() {
            return Ok(theta * gamma_quantile(k, u));
        }
        match *self {
            Self::FisherF { d1, d2 } => {
                let (y, w) = beta_quantile_pair(d1 / 2.0, d2 / 2.0, u);
                Ok(d2 * y / (d1 * w))
            }
            Self::Beta { a, b } => Ok(beta_quantile_pair(a, b, u).0),
            _ => unreachable!(),
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")))
    }
}

fn check_unit(u: f64) -> Result<()> {
    if u > 0.0 && u < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("argument {u} outside (0,1)")))
    }
}

/// Quantile of Gamma(k, 1).
pub(crate) fn gamma_quantile(k: f64, u: f64) -> f64 {
    // Wilson-Hilferty seed, with the small-x power law as fallback
    let z = normal_quantile_approx(u);
    let c = 1.0 / (9.0 * k);
    let wh = k * (1.0 - c + z * c.sqrt()).powi(3);
    let small = (u * (ln_gamma(k + 1.0)).exp()).powf(1.0 / k);
    let x0 = if wh > 0.0 && u > 0.05 { wh } else { small.min(wh.max(small)) };
    let ln_norm = ln_gamma(k);
    let lower = u <= 0.5;
    let target = if lower { u } else { 1.0 - u };
    invert_monotone(
        |x| {
            let (p, q) = gamma_pq(k, x);
            if lower {
                p - target
            } else {
                target - q
            }
        },
        |x| ((k - 1.0) * x.ln() - x - ln_norm).exp(),
        x0,
        0.0,
        f64::INFINITY,
        QUANTILE_TOL,
    )
}

/// Quantile `y` of Beta(a, b) together with `1 - y`, the latter solved
/// directly in the upper tail so that it keeps full relative precision.
pub(crate) fn beta_quantile_pair(a: f64, b: f64, u: f64) -> (f64, f64) {
    // solve for whichever of y, 1 - y is below one half
    if beta_reg_pair(a, b, 0.5).0 >= u {
        let y = beta_lower_quantile(a, b, u);
        (y, 1.0 - y)
    } else {
        let w = beta_lower_quantile(b, a, 1.0 - u);
        (1.0 - w, w)
    }
}

fn beta_lower_quantile(a: f64, b: f64, u: f64) -> f64 {
    let ln_b = ln_beta(a, b);
    let mean = a / (a + b);
    let small = (u * a * ln_b.exp()).powf(1.0 / a);
    let x0 = if small.is_finite() && small < mean { small } else { mean };
    invert_monotone(
        |x| beta_reg_pair(a, b, x).0 - u,
        |x| ((a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - ln_b).exp(),
        x0,
        0.0,
        1.0,
        QUANTILE_TOL,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScoreKind {
    /// Gaussian-derived score.
    VanDerWaerden,
    /// Student-t derived score with `nu` degrees of freedom.
    StudentT { nu: f64 },
    /// `K(u) = -P⁻¹(u) ψ(P⁻¹(u))` built from an assumed density generator.
    FromGenerator(DensityGenerator),
}

/// A score function `K: (0,1) -> R⁺`, optionally multiplied by a positive
/// constant (the R-estimate is invariant to that constant).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreFunction {
    kind: ScoreKind,
    field: MatrixField,
    dim: usize,
    multiplier: f64,
}

impl ScoreFunction {
    pub fn van_der_waerden(dim: usize, field: MatrixField) -> Self {
        Self { kind: ScoreKind::VanDerWaerden, field, dim, multiplier: 1.0 }
    }

    pub fn student_t(nu: f64, dim: usize, field: MatrixField) -> Result<Self> {
        positive("t score dof", nu)?;
        Ok(Self { kind: ScoreKind::StudentT { nu }, field, dim, multiplier: 1.0 })
    }

    pub fn kind(&self) -> &ScoreKind {
        &self.kind
    }

    pub fn field(&self) -> MatrixField {
        self.field
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Returns `c·K`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        positive("score multiplier", c)?;
        Ok(Self { multiplier: self.multiplier * c, ..self.clone() })
    }

    pub fn eval(&self, u: f64) -> Result<f64> {
        check_unit(u)?;
        let n = self.dim as f64;
        let value = match (&self.kind, self.field) {
            (ScoreKind::VanDerWaerden, MatrixField::Real) => {
                QuantileFunction::ChiSquare { dof: n }.quantile(u)? / 2.0
            }
            (ScoreKind::VanDerWaerden, MatrixField::Complex) => gamma_quantile(n, u),
            // N(N+ν)F/(2(ν+NF)) rewritten through the beta variable NF/(ν+NF)
            (ScoreKind::StudentT { nu }, MatrixField::Real) => {
                0.5 * (n + nu) * beta_quantile_pair(n / 2.0, nu / 2.0, u).0
            }
            (ScoreKind::StudentT { nu }, MatrixField::Complex) => {
                0.5 * (2.0 * n + nu) * beta_quantile_pair(n, nu / 2.0, u).0
            }
            (ScoreKind::FromGenerator(gen), _) => {
                let q = gen.law().quantile(u)?;
                -q * gen.psi(q)
            }
        };
        Ok(self.multiplier * value)
    }

    /// `K(r/(L+1))` for `r = 1..=L`.
    pub fn rank_scores(&self, l: usize) -> Result<Vec<f64>> {
        let denom = (l + 1) as f64;
        (1..=l).map(|r| self.eval(r as f64 / denom)).collect()
    }
}

pub fn score_from_generator(gen: &DensityGenerator) -> ScoreFunction {
    ScoreFunction {
        kind: ScoreKind::FromGenerator(gen.clone()),
        field: gen.field(),
        dim: gen.dim(),
        multiplier: 1.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elliptical::{make_generator, GeneratorKind};

    const DECILES: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

    #[test]
    fn analytic_quantiles() {
        let g = QuantileFunction::gamma(1.0, 1.0).unwrap();
        assert!((g.quantile(1.0 - (-1f64).exp()).unwrap() - 1.0).abs() < 1e-12);
        let c = QuantileFunction::chi_square(2.0).unwrap();
        assert!((c.quantile(0.5).unwrap() - 2.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn quantile_round_trips() {
        let families = [
            QuantileFunction::chi_square(3.0).unwrap(),
            QuantileFunction::chi_square(16.0).unwrap(),
            QuantileFunction::gamma(0.3, 2.0).unwrap(),
            QuantileFunction::gamma(80.0, 0.5).unwrap(),
            QuantileFunction::fisher_f(8.0, 5.0).unwrap(),
            QuantileFunction::fisher_f(16.0, 0.1).unwrap(),
            QuantileFunction::fisher_f(4.0, 1e6).unwrap(),
            QuantileFunction::beta(4.0, 0.5).unwrap(),
        ];
        for f in families {
            for &u in DECILES.iter().chain([0.01, 0.99].iter()) {
                let x = f.quantile(u).unwrap();
                assert!((f.cdf(x) - u).abs() < 1e-9, "{f:?} u={u} x={x} cdf={}", f.cdf(x));
            }
        }
    }

    #[test]
    fn beta_upper_tail_keeps_precision() {
        // y is within 1e-11 of one here; its complement must still invert
        for u in [0.3, 0.7, 0.99] {
            let (y, w) = beta_quantile_pair(4.0, 0.05, u);
            assert!(y > 0.999);
            let (_, q) = beta_reg_pair(0.05, 4.0, w);
            assert!((q - u).abs() < 1e-9);
        }
    }

    #[test]
    fn endpoints_are_rejected() {
        let k = ScoreFunction::van_der_waerden(3, MatrixField::Complex);
        assert!(k.eval(0.0).is_err());
        assert!(k.eval(1.0).is_err());
        assert!(QuantileFunction::gamma(2.0, 1.0).unwrap().quantile(1.5).is_err());
    }

    #[test]
    fn complex_vdw_dimension_one_is_exponential() {
        let k = ScoreFunction::van_der_waerden(1, MatrixField::Complex);
        for u in DECILES {
            assert!((k.eval(u).unwrap() + (1.0 - u).ln()).abs() < 1e-12);
        }
        assert!((k.eval(1.0 - (-1f64).exp()).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn t_score_matches_fisher_form() {
        for (field, d1_factor, n) in [(MatrixField::Real, 1.0, 4usize), (MatrixField::Complex, 2.0, 4)] {
            for nu in [0.1, 1.0, 5.0] {
                let k = ScoreFunction::student_t(nu, n, field).unwrap();
                let nn = n as f64;
                let f = QuantileFunction::fisher_f(d1_factor * nn, nu).unwrap();
                for u in DECILES {
                    let x = f.quantile(u).unwrap();
                    let expected = match field {
                        MatrixField::Real => nn * (nn + nu) * x / (2.0 * (nu + nn * x)),
                        MatrixField::Complex => nn * (2.0 * nn + nu) * x / (nu + 2.0 * nn * x),
                    };
                    let got = k.eval(u).unwrap();
                    assert!((got - expected).abs() < 1e-9 * expected.max(1.0), "{field} nu={nu} u={u}");
                }
            }
        }
    }

    #[test]
    fn t_score_tends_to_vdw() {
        for field in [MatrixField::Real, MatrixField::Complex] {
            let vdw = ScoreFunction::van_der_waerden(4, field);
            let mut prev = f64::INFINITY;
            for nu in [10.0, 1e3, 1e6] {
                let t = ScoreFunction::student_t(nu, 4, field).unwrap();
                let sup = DECILES
                    .iter()
                    .map(|&u| (t.eval(u).unwrap() - vdw.eval(u).unwrap()).abs())
                    .fold(0.0, f64::max);
                assert!(sup < prev);
                prev = sup;
            }
            assert!(prev < 1e-3);
        }
    }

    #[test]
    fn scores_are_monotone() {
        let scores = vec![
            ScoreFunction::van_der_waerden(4, MatrixField::Real),
            ScoreFunction::van_der_waerden(8, MatrixField::Complex),
            ScoreFunction::student_t(0.1, 8, MatrixField::Complex).unwrap(),
            ScoreFunction::student_t(5.0, 3, MatrixField::Real).unwrap(),
            score_from_generator(
                &make_generator(GeneratorKind::GeneralizedGaussian { shape: 0.5 }, 4, MatrixField::Complex, 4.0)
                    .unwrap(),
            ),
        ];
        for k in scores {
            let mut prev = -1.0;
            for i in 0..1000 {
                let u = 1e-6 + (1.0 - 2e-6) * i as f64 / 999.0;
                let v = k.eval(u).unwrap();
                assert!(v >= 0.0 && v.is_finite());
                assert!(v >= prev, "{:?} not monotone at {u}", k.kind());
                prev = v;
            }
        }
    }

    #[test]
    fn generator_scores_match_closed_forms() {
        let real_gauss = make_generator(GeneratorKind::Gaussian, 5, MatrixField::Real, 2.5).unwrap();
        let cplx_gauss = make_generator(GeneratorKind::Gaussian, 5, MatrixField::Complex, 4.0).unwrap();
        let cplx_t = make_generator(GeneratorKind::StudentT { dof: 5.0 }, 4, MatrixField::Complex, 1.0).unwrap();
        let pairs = [
            (score_from_generator(&real_gauss), ScoreFunction::van_der_waerden(5, MatrixField::Real)),
            (score_from_generator(&cplx_gauss), ScoreFunction::van_der_waerden(5, MatrixField::Complex)),
            (score_from_generator(&cplx_t), ScoreFunction::student_t(5.0, 4, MatrixField::Complex).unwrap()),
        ];
        for (from_gen, closed) in pairs {
            for u in DECILES {
                let a = from_gen.eval(u).unwrap();
                let b = closed.eval(u).unwrap();
                assert!((a - b).abs() < 1e-10 * b.max(1.0), "{:?} u={u}: {a} vs {b}", closed.kind());
            }
        }
    }

    #[test]
    fn generator_score_consistency_identity() {
        let gen = make_generator(GeneratorKind::GeneralizedGaussian { shape: 0.7 }, 3, MatrixField::Real, 1.5).unwrap();
        let k = score_from_generator(&gen);
        for q in [0.5, 1.0, 5.0] {
            let u = gen.law().cdf(q);
            let lhs = k.eval(u).unwrap();
            let rhs = -q * gen.psi(q);
            assert!((lhs - rhs).abs() < 1e-8 * rhs.abs().max(1.0));
        }
    }

    #[test]
    fn multiplier_scales_output() {
        let k = ScoreFunction::student_t(1.0, 4, MatrixField::Complex).unwrap();
        let k3 = k.scaled(3.0).unwrap();
        for u in DECILES {
            assert_eq!(k3.eval(u).unwrap(), 3.0 * k.eval(u).unwrap());
        }
        assert!(k.scaled(0.0).is_err());
    }
}
