use std::sync::OnceLock;

use super::gamma::log_gamma;
use crate::error::{domain, Error, Result};

/// Order ν ≥ 0 of a modified Bessel function of the first kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesselOrder(f64);

impl BesselOrder {
    pub fn new(nu: f64) -> Result<Self> {
        if nu.is_finite() && nu >= 0.0 {
            Ok(BesselOrder(nu))
        } else {
            domain(format!("Bessel order must be finite and >= 0, got {nu}"))
        }
    }

    pub fn nu(self) -> f64 {
        self.0
    }
}

/// Below this value of s = √(ν² + λ²) the power series is used.
const SERIES_LIMIT: f64 = 25.0;

/// ln I_ν(λ) for λ > 0.
///
/// Small arguments use the power series summed in scaled form. Otherwise the
/// Debye uniform expansion is evaluated in the variable s = √(ν² + λ²):
///
/// ln I_ν(λ) = s + ν ln(λ / (ν + s)) − ½ ln(2πs) + ln Σ_k P_k(ν/s) s^{−k},
///
/// where P_k(p) = u_k(p)/p^k are the Debye polynomials with the common factor
/// removed. This form stays regular as ν → 0, where it reduces to the Hankel
/// large-argument expansion.
pub fn log_bessel_i(nu: BesselOrder, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) || lambda.is_nan() {
        return domain(format!("log_bessel_i requires lambda > 0, got {lambda}"));
    }
    if lambda.is_infinite() {
        return Ok(f64::INFINITY);
    }
    let nu = nu.0;
    let s = nu.hypot(lambda);
    if s < SERIES_LIMIT {
        series(nu, lambda)
    } else {
        Ok(debye(nu, lambda, s))
    }
}

/// ln I_ν(λ) − λ, without the cancellation of subtracting λ afterwards when
/// λ is huge.
pub fn log_bessel_i_scaled(nu: BesselOrder, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return domain(format!("log_bessel_i_scaled requires finite lambda > 0, got {lambda}"));
    }
    let nu = nu.0;
    let s = nu.hypot(lambda);
    if s < SERIES_LIMIT {
        return Ok(series(nu, lambda)? - lambda);
    }
    // s − λ = ν² / (s + λ)
    Ok(nu * nu / (s + lambda) + debye_tail(nu, lambda, s))
}

fn series(nu: f64, x: f64) -> Result<f64> {
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut tail = 0.0;
    for k in 1..1000 {
        let k = k as f64;
        term *= q / (k * (nu + k));
        tail += term;
        if term < 1e-17 * (1.0 + tail) {
            let head = if nu > 0.0 { nu * (0.5 * x).ln() - log_gamma(nu + 1.0)? } else { 0.0 };
            return Ok(head + tail.ln_1p());
        }
    }
    Err(Error::NumericalFailure(format!("Bessel series did not converge (nu={nu}, x={x})")))
}

fn debye(nu: f64, x: f64, s: f64) -> f64 {
    s + debye_tail(nu, x, s)
}

/// Debye expansion without its leading s.
fn debye_tail(nu: f64, x: f64, s: f64) -> f64 {
    let sum = debye_sum(nu / s, s);
    nu_log_term(nu, x, s) - 0.5 * (2.0 * std::f64::consts::PI * s).ln() + sum.ln()
}

/// ν ln(x / (ν + s)) with s = √(ν² + x²), accurate when ν ≪ x.
fn nu_log_term(nu: f64, x: f64, s: f64) -> f64 {
    if nu == 0.0 {
        return 0.0;
    }
    // (ν + s − x)/x = (ν + ν²/(s + x))/x
    let d = (nu + nu * nu / (s + x)) / x;
    -nu * d.ln_1p()
}

/// Σ_k P_k(p) s^{−k} over all stored polynomials. For s above the series
/// limit the last term is below 1e-15 relative, so no early exit is needed
/// (an early exit on a small term can be fooled by a root of some P_k).
fn debye_sum(p: f64, s: f64) -> f64 {
    let mut sum = 0.0;
    for poly in debye_polys().iter().rev() {
        sum = sum / s + horner(poly, p);
    }
    sum
}

/// I_{ν+1}/I_ν from the difference of two Debye expansions, with every
/// difference rewritten so that nothing cancels. Used for very large λ where
/// the continued fraction would need millions of terms.
fn debye_ratio(nu: f64, x: f64) -> f64 {
    let s0 = nu.hypot(x);
    let s1 = (nu + 1.0).hypot(x);
    let ds = (2.0 * nu + 1.0) / (s0 + s1);
    let log = ds + nu_log_term(nu + 1.0, x, s1) - nu_log_term(nu, x, s0) - 0.5 * (ds / s0).ln_1p()
        + (debye_sum((nu + 1.0) / s1, s1) / debye_sum(nu / s0, s0)).ln();
    log.exp()
}

fn horner(c: &[f64], p: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * p + a)
}

/// P_k(p) = u_k(p) / p^k for k = 0..=K, from the recurrence
/// u_{k+1} = ½p²(1−p²)u_k' + ⅛∫₀^p (1−5t²)u_k(t) dt.
fn debye_polys() -> &'static Vec<Vec<f64>> {
    static POLYS: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
    POLYS.get_or_init(|| {
        const K: usize = 16;
        let mut u: Vec<Vec<f64>> = vec![vec![1.0]];
        for k in 0..K {
            let cur = &u[k];
            let mut next = vec![0.0; cur.len() + 3];
            for (i, &c) in cur.iter().enumerate() {
                if i > 0 {
                    // ½(p² − p⁴)·i·c·p^{i−1}
                    next[i + 1] += 0.5 * i as f64 * c;
                    next[i + 3] -= 0.5 * i as f64 * c;
                }
                next[i + 1] += 0.125 * c / (i + 1) as f64;
                next[i + 3] -= 0.625 * c / (i + 3) as f64;
            }
            u.push(next);
        }
        u.into_iter().enumerate().map(|(k, c)| c[k..].to_vec()).collect()
    })
}

/// Above this λ the ratio comes from the uniform expansion instead of the
/// continued fraction.
const CF_LIMIT: f64 = 1e7;

/// I_{ν+1}(λ) / I_ν(λ) by backward evaluation of the continued fraction
/// r_j = λ / (2(ν+j+1) + λ r_{j+1}).
///
/// The tail is seeded with the Amos-type estimate and the depth is doubled
/// until two successive evaluations agree to rounding.
pub fn bessel_ratio(nu: BesselOrder, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return domain(format!("bessel_ratio requires finite lambda > 0, got {lambda}"));
    }
    let nu = nu.0;
    if lambda > CF_LIMIT {
        return Ok(debye_ratio(nu, lambda));
    }
    let eval = |depth: usize| {
        let top = nu + depth as f64 + 1.0;
        let mut r = lambda / (top + top.hypot(lambda));
        for j in (0..depth).rev() {
            r = lambda / (2.0 * (nu + j as f64 + 1.0) + lambda * r);
        }
        r
    };
    let mut depth = 16usize;
    let mut prev = eval(depth);
    while depth < 1 << 24 {
        depth *= 2;
        let cur = eval(depth);
        if (cur - prev).abs() <= 1e-16 * cur {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(Error::NumericalFailure(format!("Bessel ratio did not converge (nu={nu}, lambda={lambda})")))
}
