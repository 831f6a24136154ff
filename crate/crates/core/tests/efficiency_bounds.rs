mod common;

use common::{random_pd, rng};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rankshape::bounds::*;
use rankshape::elliptical::{make_generator, GeneratorKind};
use rankshape::matops::{vectorize, Constraint, ShapeMatrix, VecMode};
use rankshape::{MatrixField, Scalar};

fn full_vec<T: Scalar>(m: &DMatrix<T>) -> DVector<T> {
    let mode = if T::FIELD == MatrixField::Real { VecMode::Vecs } else { VecMode::Vec };
    vectorize(m, mode).unwrap()
}

/// Matrix with full-vector coordinate `k` moved by `h`; in the real case the
/// symmetric partner moves too.
fn bump<T: Scalar>(v: &DMatrix<T>, k: usize, h: f64) -> DMatrix<T> {
    let n = v.nrows();
    let mut out = v.clone();
    let (i, j) = match T::FIELD {
        MatrixField::Complex => (k % n, k / n),
        MatrixField::Real => {
            let mut idx = 0;
            let mut found = (0, 0);
            'outer: for j in 0..n {
                for i in j..n {
                    if idx == k {
                        found = (i, j);
                        break 'outer;
                    }
                    idx += 1;
                }
            }
            found
        }
    };
    out[(i, j)] += T::from_real(h);
    if T::FIELD == MatrixField::Real && i != j {
        out[(j, i)] += T::from_real(h);
    }
    out
}

fn rescale<T: Scalar>(v: &DMatrix<T>) -> DMatrix<T> {
    let tr = v.trace();
    v.map(|x| x * T::from_real(v.nrows() as f64) / tr)
}

fn fd_jacobian_error<T: Scalar>(n: usize, seed: u64) -> f64 {
    let v = ShapeMatrix::from_scatter(&random_pd::<T>(n, &mut rng(seed)), Constraint::TopLeftUnit).unwrap().into_matrix();
    let j = trace_jacobian(&v).unwrap();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for k in 0..j.ncols() {
        let plus = full_vec(&rescale(&bump(&v, k + 1, h)));
        let minus = full_vec(&rescale(&bump(&v, k + 1, -h)));
        let fd = (plus - minus).unscale(2.0 * h);
        worst = (fd - j.column(k)).iter().fold(worst, |w, x| w.max(x.modulus()));
    }
    worst
}

#[test]
fn trace_jacobian_matches_finite_differences() {
    for seed in 0..10 {
        assert!(fd_jacobian_error::<Complex64>(4, seed) < 1e-6);
        assert!(fd_jacobian_error::<f64>(4, seed) < 1e-6);
    }
}

#[test]
fn alpha_closed_forms_agree_with_quadrature() {
    for n in [2, 4, 8] {
        let rg = make_generator(GeneratorKind::Gaussian, n, MatrixField::Real, 1.0).unwrap();
        assert_eq!(alpha0(&rg).unwrap(), 0.5);
        let cg = make_generator(GeneratorKind::Gaussian, n, MatrixField::Complex, 4.0).unwrap();
        assert_eq!(alpha0(&cg).unwrap(), 1.0);
        for s in [0.5, 1.0, 2.0] {
            let g = make_generator(GeneratorKind::GeneralizedGaussian { shape: s }, n, MatrixField::Complex, 4.0).unwrap();
            let want = (n as f64 + s) / (n as f64 + 1.0);
            assert!((alpha0_quadrature(&g).unwrap() / want - 1.0).abs() < 1e-6);
        }
    }
}

#[test]
fn sfim_is_pd_and_scales_with_alpha() {
    let mut r = rng(3);
    for _ in 0..5 {
        let v1 = ShapeMatrix::from_scatter(&random_pd::<Complex64>(5, &mut r), Constraint::TopLeftUnit).unwrap();
        let gauss = make_generator(GeneratorKind::Gaussian, 5, MatrixField::Complex, 4.0).unwrap();
        let gg = make_generator(GeneratorKind::GeneralizedGaussian { shape: 0.3 }, 5, MatrixField::Complex, 4.0).unwrap();
        let a = sfim_shape(&v1, &gauss).unwrap();
        let b = sfim_shape(&v1, &gg).unwrap();
        assert!(a.clone().symmetric_eigenvalues().min() > 0.0);
        assert!((b - a.scale(5.3 / 6.0)).norm() < 1e-12 * a.norm());
        let rv = ShapeMatrix::from_scatter(&random_pd::<f64>(5, &mut r), Constraint::TopLeftUnit).unwrap();
        let rg = make_generator(GeneratorKind::StudentT { dof: 4.0 }, 5, MatrixField::Real, 1.0).unwrap();
        assert!(sfim_shape(&rv, &rg).unwrap().symmetric_eigenvalues().min() > 0.0);
    }
}

#[test]
fn identity_sfim_is_the_compression_gram() {
    let v1 = ShapeMatrix::<Complex64>::identity(3, Constraint::TopLeftUnit);
    let g = make_generator(GeneratorKind::Gaussian, 3, MatrixField::Complex, 4.0).unwrap();
    let c = rankshape::matops::build_compression(&v1).unwrap();
    assert!((sfim_shape(&v1, &g).unwrap() - &c * c.adjoint()).norm() < 1e-14);
}

#[test]
fn bounds_in_both_coordinates() {
    let mut r = rng(9);
    let v1 = ShapeMatrix::from_scatter(&random_pd::<Complex64>(4, &mut r), Constraint::TopLeftUnit).unwrap();
    let g = make_generator(GeneratorKind::GeneralizedGaussian { shape: 0.5 }, 4, MatrixField::Complex, 4.0).unwrap();
    let tlu = cscrb(&v1, &g, Constraint::TopLeftUnit).unwrap();
    let p = tlu.cscrb.nrows();
    assert!((&tlu.cscrb * &tlu.sfim - DMatrix::<Complex64>::identity(p, p)).norm() < 1e-8);
    assert!(tlu.cscrb.clone().symmetric_eigenvalues().min() > 0.0);
    assert!(tlu.epsilon > 0.0);

    let tn = cscrb(&v1, &g, Constraint::TraceN).unwrap();
    assert_eq!(tn.cscrb, tn.cscrb.adjoint());
    // the trace constraint removes exactly the vec(I) direction
    let eig = tn.cscrb.clone().symmetric_eigenvalues();
    let max = eig.max();
    assert_eq!(eig.iter().filter(|&&e| e.abs() <= 1e-12 * max).count(), 1);
    assert!(eig.iter().all(|&e| e > -1e-12 * max));
    let vec_i = DVector::from_column_slice(DMatrix::<Complex64>::identity(4, 4).as_slice());
    assert!((&tn.cscrb * vec_i).norm() < 1e-10 * max);
}

#[test]
fn bounds_reject_mismatched_inputs() {
    let v = ShapeMatrix::<Complex64>::identity(3, Constraint::TraceN);
    let g = make_generator(GeneratorKind::Gaussian, 3, MatrixField::Complex, 4.0).unwrap();
    assert!(cscrb(&v, &g, Constraint::TraceN).is_err());
    let v = ShapeMatrix::<Complex64>::identity(3, Constraint::TopLeftUnit);
    let g4 = make_generator(GeneratorKind::Gaussian, 4, MatrixField::Complex, 4.0).unwrap();
    assert!(sfim_shape(&v, &g4).is_err());
    let gr = make_generator(GeneratorKind::Gaussian, 3, MatrixField::Real, 1.0).unwrap();
    assert!(sfim_shape(&v, &gr).is_err());
}
