//! Special functions: log-gamma, regularized incomplete gamma and beta, and a
//! safeguarded Newton inverter for monotone cdfs.

use std::f64::consts::PI;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

const EPS: f64 = 1e-16;
const FPMIN: f64 = 1e-300;

pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        (PI / (PI * x).sin()).abs().ln() - ln_gamma(1.0 - x)
    } else {
        let x = x - 1.0;
        let mut acc = LANCZOS[0];
        let t = x + LANCZOS_G + 0.5;
        for (i, c) in LANCZOS.iter().enumerate().skip(1) {
            acc += c / (x + i as f64);
        }
        0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
    }
}

pub fn gamma(x: f64) -> f64 {
    if x < 0.5 {
        PI / ((PI * x).sin() * gamma(1.0 - x))
    } else {
        ln_gamma(x).exp()
    }
}

/// Regularized lower and upper incomplete gamma functions `(P(a,x), Q(a,x))`.
pub fn gamma_pq(a: f64, x: f64) -> (f64, f64) {
    if x <= 0.0 {
        return (0.0, 1.0);
    }
    if x.is_infinite() {
        return (1.0, 0.0);
    }
    let prefix = (-x + a * x.ln() - ln_gamma(a)).exp();
    if x < a + 1.0 {
        let mut ap = a;
        let mut del = 1.0 / a;
        let mut sum = del;
        for _ in 0..100_000 {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if del.abs() < sum.abs() * EPS {
                break;
            }
        }
        let p = (sum * prefix).min(1.0);
        (p, 1.0 - p)
    } else {
        // modified Lentz continued fraction for Q
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / FPMIN;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..100_000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < FPMIN {
                d = FPMIN;
            }
            c = b + an / c;
            if c.abs() < FPMIN {
                c = FPMIN;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < EPS {
                break;
            }
        }
        let q = (prefix * h).min(1.0);
        (1.0 - q, q)
    }
}

pub fn gamma_p(a: f64, x: f64) -> f64 {
    gamma_pq(a, x).0
}

pub fn gamma_q(a: f64, x: f64) -> f64 {
    gamma_pq(a, x).1
}

pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..200_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `(I_x(a,b), 1 - I_x(a,b))`, both computed
/// without cancellation in their respective tails.
pub fn beta_reg_pair(a: f64, b: f64, x: f64) -> (f64, f64) {
    if x <= 0.0 {
        return (0.0, 1.0);
    }
    if x >= 1.0 {
        return (1.0, 0.0);
    }
    let ln_front = -ln_beta(a, b) + a * x.ln() + b * (-x).ln_1p();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        let p = (front * beta_cf(a, b, x) / a).min(1.0);
        (p, 1.0 - p)
    } else {
        let q = (front * beta_cf(b, a, 1.0 - x) / b).min(1.0);
        (1.0 - q, q)
    }
}

pub fn beta_reg(a: f64, b: f64, x: f64) -> f64 {
    beta_reg_pair(a, b, x).0
}

/// Standard normal quantile (Acklam's rational approximation, ~1e-9
/// relative). Used only to seed Newton iterations.
pub fn normal_quantile_approx(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    let p_low = 0.02425;
    if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

/// Solves `F(x) = target` for a continuous increasing function on
/// `(lo, hi)` by Newton steps safeguarded with bisection.
///
/// `residual(x)` must return `F(x) - target` (computed in whichever tail is
/// accurate) and `slope(x)` its derivative. `hi` may be `f64::INFINITY`; the
/// bracket is then expanded geometrically from `x0`.
pub(crate) fn invert_monotone(
    residual: impl Fn(f64) -> f64,
    slope: impl Fn(f64) -> f64,
    x0: f64,
    mut lo: f64,
    mut hi: f64,
    rel_tol: f64,
) -> f64 {
    if hi.is_infinite() {
        let mut probe = x0.max(lo + 1.0).max(1.0);
        while residual(probe) < 0.0 {
            lo = probe;
            probe *= 2.0;
            if probe > 1e300 {
                return probe;
            }
        }
        hi = probe;
    }
    let mut x = if x0 > lo && x0 < hi { x0 } else { bisect_point(lo, hi) };
    for _ in 0..400 {
        let f = residual(x);
        if f == 0.0 {
            return x;
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let d = slope(x);
        let mut next = if d > 0.0 && d.is_finite() { x - f / d } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = bisect_point(lo, hi);
        }
        if (next - x).abs() <= rel_tol * x.abs().max(f64::MIN_POSITIVE) {
            return next;
        }
        if (hi - lo) <= rel_tol * 0.5 * hi.abs() {
            return next;
        }
        x = next;
    }
    x
}

fn bisect_point(lo: f64, hi: f64) -> f64 {
    if lo > 0.0 && hi / lo > 8.0 {
        (lo * hi).sqrt()
    } else if lo <= 0.0 && hi > 1.0 {
        // bracket touching zero: shrink towards zero geometrically
        hi * 0.5 + lo.max(0.0) * 0.5
    } else {
        0.5 * (lo + hi)
    }
}
