mod common;

use common::{rng, toeplitz_c};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;
use rankshape::bounds::alpha0;
use rankshape::elliptical::{make_generator, q_u_stats, sample_es, Dataset, GeneratorKind};
use rankshape::estimators::{tyler_joint, Preliminary, DEFAULT_MAX_ITER, DEFAULT_TOL};
use rankshape::matops::{build_compression, shape_params, Constraint, ShapeMatrix};
use rankshape::restimator::*;
use rankshape::scores::ScoreFunction;
use rankshape::{Error, MatrixField, Scalar};

fn data<T: Scalar>(kind: GeneratorKind, n: usize, l: usize, sigma: &DMatrix<T>, seed: u64) -> Dataset<T> {
    let power = if T::FIELD == MatrixField::Complex { 4.0 } else { 1.0 };
    let gen = make_generator(kind, n, T::FIELD, power).unwrap();
    sample_es(&gen, &DVector::zeros(n), sigma, l, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn ranks_match_pairwise_counting(values in prop::collection::vec(-1e3f64..1e3, 1..60)) {
        let ranks = compute_ranks(&values).unwrap();
        for (i, &r) in ranks.as_slice().iter().enumerate() {
            let below = values.iter().enumerate().filter(|&(j, &v)| v < values[i] || (v == values[i] && j < i)).count();
            prop_assert_eq!(r, below + 1);
        }
        let l = values.len();
        prop_assert_eq!(ranks.as_slice().iter().sum::<usize>(), l * (l + 1) / 2);
    }
}

#[test]
fn central_sequence_dimensions_and_scale_invariance() {
    let d = data::<Complex64>(GeneratorKind::Gaussian, 4, 50, &DMatrix::identity(4, 4), 1);
    let mu = DVector::from_element(4, Complex64::new(0.1, 0.0));
    let v1 = ShapeMatrix::identity(4, Constraint::TopLeftUnit);
    let k = ScoreFunction::van_der_waerden(4, MatrixField::Complex);
    let cs = central_sequence(&d, &mu, &v1, &k).unwrap();
    assert_eq!(cs.len(), 15);
    let zero = DVector::zeros(4);
    let at_zero = central_sequence(&d, &zero, &v1, &k).unwrap();
    for c in [0.5, 64.0, 3.1] {
        let scaled = central_sequence(&d.scaled(c).unwrap(), &zero, &v1, &k).unwrap();
        if c.log2().fract() == 0.0 {
            assert_eq!(scaled, at_zero);
        } else {
            assert!((scaled - &at_zero).norm() < 1e-12);
        }
        let moved: Vec<_> = d.samples().column_iter().map(|col| &mu + (col - &mu).scale(c)).collect();
        let moved = Dataset::from_samples(DMatrix::from_columns(&moved)).unwrap();
        assert!((central_sequence(&moved, &mu, &v1, &k).unwrap() - &cs).norm() < 1e-12);
    }
    let real = data::<f64>(GeneratorKind::Gaussian, 4, 50, &DMatrix::identity(4, 4), 1);
    let kr = ScoreFunction::van_der_waerden(4, MatrixField::Real);
    let cs = central_sequence(&real, &DVector::zeros(4), &ShapeMatrix::identity(4, Constraint::TopLeftUnit), &kr).unwrap();
    assert_eq!(cs.len(), 9);
}

#[test]
fn central_sequence_is_centred_at_the_truth() {
    let runs = 10_000;
    let sigma = toeplitz_c(3, Complex64::new(0.4, 0.2));
    let v1 = ShapeMatrix::from_scatter(&sigma, Constraint::TopLeftUnit).unwrap();
    let k = ScoreFunction::van_der_waerden(3, MatrixField::Complex);
    let draws: Vec<DVector<Complex64>> = (0..runs)
        .map(|i| {
            let d = data::<Complex64>(GeneratorKind::Gaussian, 3, 100, &sigma, 1000 + i);
            central_sequence(&d, &DVector::zeros(3), &v1, &k).unwrap()
        })
        .collect();
    let mean = draws.iter().fold(DVector::zeros(8), |a, x| a + x).unscale(runs as f64);
    let var: f64 = draws.iter().map(|x| (x - &mean).norm_squared()).sum::<f64>() / (runs - 1) as f64;
    assert!(mean.norm() < 4.0 * (var / runs as f64).sqrt(), "{} vs {}", mean.norm(), (var / runs as f64).sqrt());
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn alpha_median<T: Scalar>(seed0: u64) -> f64 {
    let n = 4;
    let v1 = ShapeMatrix::<T>::identity(n, Constraint::TopLeftUnit);
    let k = ScoreFunction::van_der_waerden(n, T::FIELD);
    median(
        (0..200)
            .map(|i| {
                let d = data::<T>(GeneratorKind::Gaussian, n, 2048, &DMatrix::identity(n, n), seed0 + i);
                let h0 = gen_perturbation::<T>(n, DEFAULT_PERTURBATION_SCALE, seed0 + 7 * i).unwrap();
                estimate_alpha(&d, &DVector::zeros(n), &v1, &k, &h0).unwrap()
            })
            .collect(),
    )
}

#[test]
fn alpha_estimates_concentrate_on_gaussian_values() {
    let c = alpha_median::<Complex64>(500);
    assert!((0.8..=1.2).contains(&c), "complex median {c}");
    let r = alpha_median::<f64>(900);
    assert!((0.4..=0.6).contains(&r), "real median {r}");
}

#[test]
fn alpha_is_homogeneous_in_the_score() {
    let d = data::<Complex64>(GeneratorKind::StudentT { dof: 3.0 }, 4, 300, &DMatrix::identity(4, 4), 3);
    let pre = tyler_joint(&d, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    let k = ScoreFunction::student_t(1.0, 4, MatrixField::Complex).unwrap();
    let h0 = gen_perturbation::<Complex64>(4, 0.01, 9).unwrap();
    let a = estimate_alpha(&d, &pre.location, &pre.shape, &k, &h0).unwrap();
    let a4 = estimate_alpha(&d, &pre.location, &pre.shape, &k.scaled(4.0).unwrap(), &h0).unwrap();
    assert_eq!(a4, 4.0 * a);
    let a3 = estimate_alpha(&d, &pre.location, &pre.shape, &k.scaled(3.0).unwrap(), &h0).unwrap();
    assert!((a3 / (3.0 * a) - 1.0).abs() < 1e-12);
}

#[test]
fn r_estimate_invariances_hold_bitwise() {
    let sigma = toeplitz_c(4, Complex64::from_polar(0.8, 0.4 * std::f64::consts::PI));
    for seed in 0..10 {
        let d = data::<Complex64>(GeneratorKind::GeneralizedGaussian { shape: 0.5 }, 4, 64, &sigma, seed);
        let mut cfg = REstimatorConfig::<Complex64>::van_der_waerden(4, MatrixField::Complex);
        cfg.perturbation_seed = seed + 100;
        let base = r_estimate(&d, &cfg).unwrap();
        assert_eq!(r_estimate(&d.scaled(0.125).unwrap(), &cfg).unwrap().shape, base.shape);
        let mut hom = cfg.clone();
        hom.score = cfg.score.scaled(16.0).unwrap();
        let scaled = r_estimate(&d, &hom).unwrap();
        assert_eq!(scaled.shape, base.shape);
        assert_eq!(scaled.alpha_hat, 16.0 * base.alpha_hat);
        let odd = r_estimate(&d.scaled(3.3).unwrap(), &cfg).unwrap();
        assert!((odd.shape.matrix() - base.shape.matrix()).norm() < 1e-10);
    }
}

#[test]
fn r_estimate_output_structure() {
    for seed in 0..10 {
        let d = data::<f64>(GeneratorKind::StudentT { dof: 3.0 }, 3, 40, &DMatrix::identity(3, 3), seed);
        for pre in [Preliminary::Tyler, Preliminary::Scm, Preliminary::Huber { q: 0.5 }] {
            let mut cfg = REstimatorConfig::<f64>::new(ScoreFunction::student_t(1.0, 3, MatrixField::Real).unwrap());
            cfg.preliminary = pre;
            let rep = r_estimate(&d, &cfg).unwrap();
            let m = rep.shape.matrix();
            assert_eq!(m[(0, 0)], 1.0);
            assert_eq!(m, &m.transpose());
            assert!(rep.alpha_hat > 0.0 && rep.alpha_hat.is_finite());
            assert_eq!(rep.ranks.len(), 40);
        }
    }
}

#[test]
fn fixed_perturbation_reproduces_and_validates() {
    let d = data::<Complex64>(GeneratorKind::Gaussian, 3, 100, &DMatrix::identity(3, 3), 4);
    let mut cfg = REstimatorConfig::<Complex64>::van_der_waerden(3, MatrixField::Complex);
    cfg.perturbation_seed = 42;
    let a = r_estimate(&d, &cfg).unwrap();
    cfg.fixed_h0 = Some(gen_perturbation(3, DEFAULT_PERTURBATION_SCALE, 42).unwrap());
    let b = r_estimate(&d, &cfg).unwrap();
    assert_eq!(a.shape, b.shape);

    cfg.fixed_h0 = Some(DMatrix::zeros(3, 3));
    assert!(matches!(r_estimate(&d, &cfg), Err(Error::ZeroPerturbation)));
    cfg.fixed_h0 = Some(DMatrix::identity(3, 3));
    assert!(r_estimate(&d, &cfg).is_err());
    cfg.fixed_h0 = None;
    cfg.perturbation_scale = 100.0;
    let any_not_pd = (0..20).any(|s| {
        cfg.perturbation_seed = s;
        matches!(r_estimate(&d, &cfg), Err(Error::PerturbationNotPositiveDefinite))
    });
    assert!(any_not_pd);
}

#[test]
fn perturbation_entry_spread() {
    let draws = 100_000;
    let ups = 0.2;
    let (mut off_r, mut diag_r, mut off_c, mut diag_c) = (0.0, 0.0, 0.0, 0.0);
    let mut r = rng(1);
    for _ in 0..draws {
        let seed: u64 = r.random();
        let hr = gen_perturbation::<f64>(3, ups, seed).unwrap();
        let hc = gen_perturbation::<Complex64>(3, ups, seed).unwrap();
        off_r += hr[(2, 1)] * hr[(2, 1)];
        diag_r += hr[(1, 1)] * hr[(1, 1)];
        off_c += hc[(2, 1)].norm_sqr();
        diag_c += hc[(1, 1)].norm_sqr();
    }
    let sd = |s: f64| (s / draws as f64).sqrt();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    for (got, want) in [(sd(off_r), ups * h), (sd(diag_r), ups), (sd(off_c), ups * h), (sd(diag_c), ups * h)] {
        assert!((got / want - 1.0).abs() < 0.03, "{got} vs {want}");
    }
}

#[test]
fn clairvoyant_uses_true_weights_and_alpha() {
    let n = 3;
    let gen = make_generator(GeneratorKind::Gaussian, n, MatrixField::Real, 1.0).unwrap();
    let d = sample_es::<f64>(&gen, &DVector::zeros(n), &DMatrix::identity(n, n), 400, 8).unwrap();
    let pre = tyler_joint(&d, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    let rep = clairvoyant_estimate(&d, &gen, &pre).unwrap();

    // one-step update rebuilt from Q/2 weights and α = 1/2
    let v = pre.shape.matrix();
    let mut s = DMatrix::<f64>::zeros(n, n);
    for col in d.samples().column_iter() {
        let (q, u) = q_u_stats(&col.into_owned(), &pre.location, v).unwrap();
        s += (&u * u.transpose()).scale(q / 2.0);
    }
    let c = build_compression(&pre.shape).unwrap();
    let gram = &c * c.transpose();
    let rhs = &c * DVector::from_column_slice(s.as_slice());
    let step = gram.try_inverse().unwrap() * rhs / (400.0 * alpha0(&gen).unwrap());
    let want = shape_params(v).unwrap() + step;
    assert!((shape_params(rep.shape.matrix()).unwrap() - want).norm() < 1e-10);
    assert_eq!(rep.alpha_hat, 0.5);
}

#[test]
fn report_serializes_to_json() {
    let d = data::<Complex64>(GeneratorKind::Gaussian, 3, 60, &DMatrix::identity(3, 3), 2);
    let rep = r_estimate(&d, &REstimatorConfig::van_der_waerden(3, MatrixField::Complex)).unwrap();
    let j = rep.to_json();
    assert_eq!(j["shape"]["re"][0][0], 1.0);
    assert_eq!(j["shape"]["im"].as_array().unwrap().len(), 3);
    assert_eq!(j["ranks"].as_array().unwrap().len(), 60);
    assert!(j["alpha_hat"].as_f64().unwrap() > 0.0);
}
