//! Log-space tail probabilities.
//!
//! Significance decisions compare natural-log p-values against `ln(alpha)`,
//! so tails have to stay finite long after the p-value itself underflows.

use statrs::function::beta::ln_beta;
use statrs::function::gamma::ln_gamma;

const EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;
const MAX_ITER: usize = 10_000;

/// `ln(1 - exp(x))` for `x <= 0`.
fn ln_one_minus_exp(x: f64) -> f64 {
    if x > -std::f64::consts::LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

/// Natural log of the regularized upper incomplete gamma function `Q(a, x)`.
pub fn ln_gamma_q(a: f64, x: f64) -> f64 {
    assert!(a > 0.0, "shape must be positive");
    if x <= 0.0 {
        return 0.0;
    }
    let ln_prefix = -x + a * x.ln() - ln_gamma(a);
    if x < a + 1.0 {
        // Series for P, then Q = 1 - P.
        let mut ap = a;
        let mut del = 1.0 / a;
        let mut sum = del;
        for _ in 0..MAX_ITER {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if del.abs() < sum.abs() * EPS {
                break;
            }
        }
        ln_one_minus_exp((ln_prefix + sum.ln()).min(0.0))
    } else {
        // Modified Lentz evaluation of the continued fraction for Q.
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < EPS {
                break;
            }
        }
        (ln_prefix + h.ln()).min(0.0)
    }
}

/// `ln P(X > x)` for `X ~ chi-square(dof)`.
pub fn ln_chi2_sf(x: f64, dof: f64) -> f64 {
    ln_gamma_q(dof / 2.0, x / 2.0)
}

/// `ln P(|Z| > z)` for standard normal `Z`.
///
/// Uses `Z^2 ~ chi-square(1)`, which keeps the whole range on one
/// continued fraction.
pub fn ln_normal_two_sided(z: f64) -> f64 {
    ln_gamma_q(0.5, z * z / 2.0)
}

/// Continued fraction for the incomplete beta function.
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
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

/// `ln I_x(a, b)`, with `y = 1 - x` passed separately to keep precision
/// when `x` is close to one.
pub fn ln_beta_reg(a: f64, b: f64, x: f64, y: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if y <= 0.0 {
        return 0.0;
    }
    let ln_front = a * x.ln() + b * y.ln() - ln_beta(a, b);
    if x < (a + 1.0) / (a + b + 2.0) {
        (ln_front + beta_cf(a, b, x).ln() - a.ln()).min(0.0)
    } else {
        let ln_comp = ln_front + beta_cf(b, a, y).ln() - b.ln();
        ln_one_minus_exp(ln_comp.min(0.0))
    }
}

/// `ln P(|T| > t)` for Student-t with `dof` degrees of freedom.
pub fn ln_student_t_two_sided(t: f64, dof: f64) -> f64 {
    let t2 = t * t;
    let denom = dof + t2;
    ln_beta_reg(dof / 2.0, 0.5, dof / denom, t2 / denom)
}
