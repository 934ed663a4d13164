//! Jackson-type quantities: the concentration Λ(σ), the prefix length
//! N(λ, ε), Rogers' covering constant Φ(m) and cap-covering bounds.
//!
//! N is astronomically large in every interesting regime, so all sizes are
//! carried as natural logs and reported in log₁₀ as well.

use serde::{Deserialize, Serialize};
use std::f64::consts::{LN_10, PI};

use crate::error::{domain, Result};
use crate::kernel::vmf_log_peak;
use crate::specialfn::reg_inc_beta_split;

/// Smoothness data of a target: Lipschitz constant `l` (geodesic metric),
/// harmonic-component bound `c_h`, Ragozin constant `c_r` and sup norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessSpec {
    pub l: f64,
    pub c_h: f64,
    pub c_r: f64,
    pub f_sup: f64,
}

impl SmoothnessSpec {
    pub fn new(l: f64, c_h: f64, c_r: f64, f_sup: f64) -> Result<Self> {
        let s = SmoothnessSpec { l, c_h, c_r, f_sup };
        s.validate()?;
        Ok(s)
    }

    /// Defaults for the two constants that cannot be computed for a concrete
    /// target: C_R = 1 and C_H = ‖f‖∞ (or 1 when ‖f‖∞ = 0).
    pub fn with_defaults(l: f64, f_sup: f64) -> Result<Self> {
        Self::new(l, if f_sup > 0.0 { f_sup } else { 1.0 }, 1.0, f_sup)
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        // L = 0 is allowed: constant targets
        if !(self.l.is_finite() && self.l >= 0.0 && pos(self.c_h) && pos(self.c_r))
            || !(self.f_sup.is_finite() && self.f_sup >= 0.0)
        {
            return domain(format!("invalid smoothness constants {self:?}"));
        }
        Ok(())
    }
}

/// Whether the covering-number restriction m ≥ 8 is enforced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DimensionMode {
    #[default]
    Strict,
    Permissive,
}

/// A bound value plus flags describing how it was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Flagged {
    pub value: f64,
    pub ln_value: f64,
    /// `value` overflowed to +inf; use `ln_value`.
    pub overflow: bool,
    /// Computed for m < 8 in permissive mode, outside the range of the covering bounds.
    pub permissive: bool,
}

impl Flagged {
    fn from_ln(ln_value: f64, permissive: bool) -> Self {
        let value = ln_value.exp();
        Flagged { value, ln_value, overflow: value.is_infinite(), permissive }
    }

    pub fn log10(&self) -> f64 {
        self.ln_value / LN_10
    }
}

fn check_dim(m: usize, mode: DimensionMode) -> Result<bool> {
    match mode {
        DimensionMode::Strict if m < 8 => domain(format!("m = {m} < 8 requires permissive mode")),
        DimensionMode::Permissive if m < 2 => domain(format!("m = {m} < 2 is not supported")),
        _ => Ok(m < 8),
    }
}

/// ln of 1 − e^{z} for z ≤ 0, accurate for tiny |z| and given ln|z|.
fn ln_one_minus_exp(z: f64, ln_abs_z: f64) -> f64 {
    if z > -1e-8 {
        ln_abs_z + z / 2.0
    } else {
        (-z.exp_m1()).ln()
    }
}

/// Λ(σ) = (8LC_R + (m+1)σ)(1−a)^e / (σ(1 − (1−a)^{2e})) with
/// a = σ²/(8LC_HC_R + 2σC_H) and e = σ/(4LC_R + σ), in log form.
pub fn lambda_for_accuracy(sigma: f64, spec: &SmoothnessSpec, m: usize, mode: DimensionMode) -> Result<Flagged> {
    let permissive = check_dim(m, mode)?;
    spec.validate()?;
    if !(sigma > 0.0) || !sigma.is_finite() {
        return domain(format!("Lambda requires sigma > 0, got {sigma}"));
    }
    let SmoothnessSpec { l, c_h, c_r, .. } = *spec;
    let ln_sigma = sigma.ln();
    let a_den = 8.0 * l * c_h * c_r + 2.0 * sigma * c_h;
    let a = sigma * sigma / a_den;
    if a >= 1.0 {
        return domain(format!("sigma = {sigma} too large: (1 - a) must be positive"));
    }
    let ln_a = 2.0 * ln_sigma - a_den.ln();
    // ln(−ln(1−a))
    let la = if a < 1e-8 { ln_a + a / 2.0 } else { (-(-a).ln_1p()).ln() };
    let ln_e = ln_sigma - (4.0 * l * c_r + sigma).ln();
    let e_log1ma = -(ln_e + la).exp(); // e·ln(1−a)
    let ln_z = 2f64.ln() + ln_e + la;
    let ln_den = ln_sigma + ln_one_minus_exp(2.0 * e_log1ma, ln_z);
    let ln_num = (8.0 * l * c_r + (m as f64 + 1.0) * sigma).ln() + e_log1ma;
    Ok(Flagged::from_ln(ln_num - ln_den, permissive))
}

/// Leading small-σ behaviour 128 L³C_H C_R³ / σ⁴ of Λ.
pub fn lambda_leading_term(sigma: f64, spec: &SmoothnessSpec) -> f64 {
    128.0 * spec.l.powi(3) * spec.c_h * spec.c_r.powi(3) / sigma.powi(4)
}

/// Φ(m) = e((m+1) ln(m+1) + (m+1) ln ln(m+1) + 5(m+1)).
pub fn phi(m: usize) -> Result<f64> {
    check_dim(m, DimensionMode::Strict)?;
    Ok(phi_unchecked(m))
}

fn phi_unchecked(m: usize) -> f64 {
    let m1 = m as f64 + 1.0;
    std::f64::consts::E * (m1 * m1.ln() + m1 * m1.ln().ln() + 5.0 * m1)
}

/// N(λ, ε) = Φ(m)·(3π(L + λ‖f‖∞) c_{m+1}(λ) e^λ / ε)^{2(m+1)}.
pub fn prefix_length_bound(
    lambda: f64,
    epsilon: f64,
    spec: &SmoothnessSpec,
    m: usize,
    mode: DimensionMode,
) -> Result<Flagged> {
    let permissive = check_dim(m, mode)?;
    spec.validate()?;
    if !(epsilon > 0.0) || !(lambda > 0.0) {
        return domain(format!("N(lambda, eps) requires positive arguments, got {lambda}, {epsilon}"));
    }
    let inner = (3.0 * PI).ln() + (spec.l + lambda * spec.f_sup).ln() + vmf_log_peak(m, lambda)? - epsilon.ln();
    Ok(Flagged::from_ln(phi_unchecked(m).ln() + 2.0 * (m as f64 + 1.0) * inner, permissive))
}

/// Cap-covering sandwich for caps of "height" δ (angular radius arccos(1−δ)):
/// lower = 2 / I_{δ(2−δ)}(m/2, 1/2), upper = Φ(m) / (δ(2−δ))^{(m+1)/2}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoveringBounds {
    pub lower: f64,
    pub upper: f64,
}

pub fn covering_bounds(m: usize, delta: f64) -> Result<CoveringBounds> {
    check_dim(m, DimensionMode::Strict)?;
    covering_bounds_any(m, delta)
}

pub(crate) fn covering_bounds_any(m: usize, delta: f64) -> Result<CoveringBounds> {
    if !(delta > 0.0 && delta < 1.0) {
        return domain(format!("covering bounds require delta in (0,1), got {delta}"));
    }
    let s = delta * (2.0 - delta);
    let lower = 2.0 / reg_inc_beta_split(s, (1.0 - delta) * (1.0 - delta), m as f64 / 2.0, 0.5)?;
    let upper = phi_unchecked(m) / s.powf((m as f64 + 1.0) / 2.0);
    Ok(CoveringBounds { lower, upper })
}

/// Parameters for the normalized (softmax) head at accuracy ε.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedHeadParameters {
    /// Argument passed to Λ: 2εL / (2L + ‖f‖∞).
    pub sigma: f64,
    pub lambda: Flagged,
    /// N(λ, ε/√(m+1)).
    pub n: Flagged,
}

pub fn normalized_head_parameters(
    epsilon: f64,
    spec: &SmoothnessSpec,
    m: usize,
    mode: DimensionMode,
) -> Result<NormalizedHeadParameters> {
    spec.validate()?;
    if !(epsilon > 0.0 && epsilon < 2.0 * spec.f_sup) {
        return domain(format!("need 0 < eps < 2 sup|f| = {}, got {epsilon}", 2.0 * spec.f_sup));
    }
    let sigma = 2.0 * epsilon * spec.l / (2.0 * spec.l + spec.f_sup);
    let lambda = lambda_for_accuracy(sigma, spec, m, mode)?;
    let n = prefix_length_bound(lambda.value, epsilon / (m as f64 + 1.0).sqrt(), spec, m, mode)?;
    Ok(NormalizedHeadParameters { sigma, lambda, n })
}
