use super::gamma::log_gamma;
use crate::error::{domain, Result};

/// Regularized incomplete beta function I_x(a, b).
pub fn reg_inc_beta(x: f64, a: f64, b: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return domain(format!("reg_inc_beta requires x in [0,1], got {x}"));
    }
    reg_inc_beta_split(x, 1.0 - x, a, b)
}

/// I_x(a, b) given both `x` and `y = 1 - x`, so callers that know `y` more
/// accurately than `1 - x` (for example `cos²φ` next to `sin²φ`) do not lose
/// digits to cancellation.
pub fn reg_inc_beta_split(x: f64, y: f64, a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) || !a.is_finite() || !b.is_finite() {
        return domain(format!("reg_inc_beta requires a, b > 0, got a={a}, b={b}"));
    }
    if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) || ((x + y) - 1.0).abs() > 1e-12 {
        return domain(format!("reg_inc_beta requires x in [0,1] and y = 1 - x, got x={x}, y={y}"));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if y == 0.0 {
        return Ok(1.0);
    }
    let ln_beta = log_gamma(a)? + log_gamma(b)? - log_gamma(a + b)?;
    let front = (a * x.ln() + b * y.ln() - ln_beta).exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        Ok((front * cont_frac(x, a, b)? / a).clamp(0.0, 1.0))
    } else {
        Ok((1.0 - front * cont_frac(y, b, a)? / b).clamp(0.0, 1.0))
    }
}

/// Modified Lentz evaluation of the incomplete-beta continued fraction.
fn cont_frac(x: f64, a: f64, b: f64) -> Result<f64> {
    const TINY: f64 = 1e-300;
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
    for m in 1..20_000 {
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
        if (del - 1.0).abs() < 1e-16 {
            return Ok(h);
        }
    }
    Err(crate::Error::NumericalFailure(format!(
        "incomplete beta continued fraction did not converge (x={x}, a={a}, b={b})"
    )))
}
