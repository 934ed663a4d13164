//! Sequence-to-sequence maps through a single scalar: every coordinate of a
//! sequence is packed into Cantor-set ternary digits, summed into one number
//! R, and each output position is a function G_i of R alone.

mod build;

pub use build::{build_seq2seq_transformer, cube_to_sphere, sphere_to_cube, BuildMode, Seq2SeqStack};

use std::fmt;
use std::sync::Arc;

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Longest ternary expansion a double resolves to a quarter of its last digit.
pub const FLOAT_TERNARY_DIGITS: usize = 30;
/// Cap on the exact integer representation of R.
pub const EXACT_TERNARY_DIGITS: usize = 1 << 20;
pub const MAX_DIGITS: usize = 40;

/// How many binary digits of each coordinate are kept, and where ψ places
/// them: digit j goes to ternary position stride·(j−1)+1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DigitConfig {
    pub digits: usize,
    /// Dyadic rationals use their terminating binary expansion (1/2 = 0.1000…);
    /// otherwise the non-terminating one (1/2 = 0.0111…).
    pub terminating: bool,
    #[serde(default = "one")]
    pub stride: usize,
}

fn one() -> usize {
    1
}

impl DigitConfig {
    pub fn new(digits: usize) -> Result<Self> {
        let c = DigitConfig { digits, terminating: true, stride: 1 };
        c.validate()?;
        Ok(c)
    }

    pub fn with_stride(self, stride: usize) -> Result<Self> {
        let c = DigitConfig { stride, ..self };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.digits < 1 || self.digits > MAX_DIGITS {
            return domain(format!("digits must be in 1..={MAX_DIGITS}, got {}", self.digits));
        }
        if self.stride < 1 {
            return domain("stride must be >= 1");
        }
        Ok(())
    }

    /// Ternary positions spanned by one ψ value.
    fn span(&self) -> usize {
        self.stride * (self.digits - 1) + 1
    }
}

/// T elements of [0,1]^{m+1}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSample {
    pub t: usize,
    pub m: usize,
    pub elements: Vec<Vec<f64>>,
}

impl SequenceSample {
    pub fn new(m: usize, elements: Vec<Vec<f64>>) -> Result<Self> {
        if elements.is_empty() {
            return domain("sequence must be nonempty");
        }
        for e in &elements {
            if e.len() != m + 1 {
                return Err(Error::DimensionMismatch { expected: m + 1, got: e.len() });
            }
            if e.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return domain(format!("coordinates must lie in [0,1], got {e:?}"));
            }
        }
        Ok(SequenceSample { t: elements.len(), m, elements })
    }

    fn coords(&self) -> impl Iterator<Item = f64> + '_ {
        self.elements.iter().flatten().copied()
    }
}

/// The kept binary digits of x as an integer: floor(x·2^n), with x = 1 mapped
/// to the all-ones expansion and ties resolved per the configuration.
fn truncate_bits(x: f64, cfg: &DigitConfig) -> Result<u64> {
    if !(0.0..=1.0).contains(&x) {
        return domain(format!("psi is defined on [0,1], got {x}"));
    }
    let n = cfg.digits as i32;
    let scaled = x * 2f64.powi(n);
    let top = (1u64 << cfg.digits) - 1;
    let b = if cfg.terminating || x == 0.0 { scaled.floor() } else { scaled.ceil() - 1.0 };
    Ok((b.max(0.0) as u64).min(top))
}

fn bits_to_x(bits: u64, digits: usize) -> f64 {
    bits as f64 / 2f64.powi(digits as i32)
}

/// Truncation of x to the kept digits, the value ψ actually encodes.
pub fn truncate(x: f64, cfg: &DigitConfig) -> Result<f64> {
    Ok(bits_to_x(truncate_bits(x, cfg)?, cfg.digits))
}

fn ratio(num: &BigUint, len: usize) -> f64 {
    let den = BigUint::from(3u32).pow(len as u32);
    num.to_f64().unwrap_or(f64::INFINITY) / den.to_f64().unwrap_or(f64::INFINITY)
}

/// ψ(x) = Σ_j 2a_j 3^{−(stride·(j−1)+1)} over the kept binary digits a_j of x.
/// Non-decreasing in x.
pub fn psi_encode(x: f64, cfg: &DigitConfig) -> Result<f64> {
    cfg.validate()?;
    let bits = truncate_bits(x, cfg)?;
    let len = cfg.span();
    let mut tern = vec![0u8; len];
    for j in 0..cfg.digits {
        if bits >> (cfg.digits - 1 - j) & 1 == 1 {
            tern[cfg.stride * j] = 2;
        }
    }
    Ok(ratio(&BigUint::from_radix_be(&tern, 3).unwrap(), len))
}

/// Ternary digits (most significant first, length `len`) of the integer
/// nearest c·3^len, rejecting values more than a quarter digit off.
fn ternary_digits(c: f64, len: usize) -> Result<Vec<u8>> {
    if len > FLOAT_TERNARY_DIGITS {
        return Err(Error::PrecisionBudgetExceeded(format!(
            "{len} ternary digits exceed the {FLOAT_TERNARY_DIGITS} a double resolves"
        )));
    }
    if !(0.0..=1.0).contains(&c) {
        return Err(Error::Encoding(format!("{c} is outside [0,1]")));
    }
    let scaled = c * 3f64.powi(len as i32);
    let k = scaled.round();
    if (scaled - k).abs() > 0.25 {
        return Err(Error::Encoding(format!("{c} is not a {len}-digit ternary value")));
    }
    let mut out = vec![0u8; len];
    let mut k = k as u64;
    for d in out.iter_mut().rev() {
        *d = (k % 3) as u8;
        k /= 3;
    }
    if k != 0 {
        return Err(Error::Encoding(format!("{c} overflows {len} ternary digits")));
    }
    Ok(out)
}

/// Inverse of [`psi_encode`]: the truncated x whose code is `c`.
pub fn psi_decode(c: f64, cfg: &DigitConfig) -> Result<f64> {
    cfg.validate()?;
    let tern = ternary_digits(c, cfg.span())?;
    let mut bits = 0u64;
    for (p, &d) in tern.iter().enumerate() {
        match (d, p % cfg.stride == 0) {
            (0, _) => {}
            (2, true) => bits |= 1 << (cfg.digits - 1 - p / cfg.stride),
            _ => return Err(Error::Encoding(format!("ternary digit {d} at position {} of {c}", p + 1))),
        }
    }
    Ok(bits_to_x(bits, cfg.digits))
}

/// R held exactly as mantissa / 3^len.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregatedR {
    pub mantissa: BigUint,
    pub len: usize,
}

impl AggregatedR {
    pub fn to_f64(&self) -> f64 {
        ratio(&self.mantissa, self.len)
    }

    /// Ternary digits after the point, most significant first.
    pub fn ternary_digits(&self) -> Vec<u8> {
        let mut d = if self.mantissa.is_zero() { vec![] } else { self.mantissa.to_radix_be(3) };
        let mut out = vec![0u8; self.len.saturating_sub(d.len())];
        out.append(&mut d);
        out
    }

    pub fn ternary_string(&self) -> String {
        self.ternary_digits().iter().map(|d| char::from(b'0' + d)).collect()
    }

    /// Reads an R that was computed in floating point. Errors if `r` is not
    /// within a quarter digit of a `len`-digit ternary value.
    pub fn from_f64(r: f64, len: usize) -> Result<Self> {
        let d = ternary_digits(r, len)?;
        Ok(AggregatedR { mantissa: BigUint::from_radix_be(&d, 3).unwrap_or_default(), len })
    }

    /// The `len`-digit value with digits in {0, 2} nearest to `r`.
    pub fn nearest_cantor(r: f64, len: usize) -> Result<Self> {
        if len > FLOAT_TERNARY_DIGITS {
            return Err(Error::PrecisionBudgetExceeded(format!("{len} ternary digits")));
        }
        let mut rem = r.clamp(0.0, 1.0) * 3f64.powi(len as i32);
        let mut d = vec![0u8; len];
        for (p, dp) in d.iter_mut().enumerate() {
            let block = 3f64.powi((len - 1 - p) as i32);
            // midpoint between the largest tail under digit 0 and the
            // smallest under digit 2
            if rem >= (3.0 * block - 1.0) / 2.0 {
                *dp = 2;
                rem -= 2.0 * block;
            }
        }
        Ok(AggregatedR { mantissa: BigUint::from_radix_be(&d, 3).unwrap_or_default(), len })
    }
}

impl fmt::Display for AggregatedR {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0.{} (base 3)", self.ternary_string())
    }
}

/// R = 3 Σ_i 3^{−(i−1)(m+1)} Σ_p 3^{−p} ψ(x_{i,p}) with ψ at stride T(m+1),
/// so digit j of coordinate q = (i−1)(m+1)+p lands at position q + T(m+1)(j−1)
/// and no two digits collide. `cfg.stride` is ignored here.
pub fn aggregate_r(s: &SequenceSample, cfg: &DigitConfig) -> Result<AggregatedR> {
    cfg.validate()?;
    let d = s.t * (s.m + 1);
    let len = d * cfg.digits;
    if len > EXACT_TERNARY_DIGITS {
        return Err(Error::PrecisionBudgetExceeded(format!("{len} ternary digits")));
    }
    let mut tern = vec![0u8; len];
    for (q, x) in s.coords().enumerate() {
        let bits = truncate_bits(x, cfg)?;
        for j in 0..cfg.digits {
            if bits >> (cfg.digits - 1 - j) & 1 == 1 {
                tern[q + d * j] = 2;
            }
        }
    }
    Ok(AggregatedR { mantissa: BigUint::from_radix_be(&tern, 3).unwrap_or_default(), len })
}

/// Exact inverse of [`aggregate_r`] up to per-coordinate truncation.
pub fn decode_sequence(r: &AggregatedR, t: usize, m: usize, cfg: &DigitConfig) -> Result<SequenceSample> {
    cfg.validate()?;
    let d = t * (m + 1);
    if d == 0 || r.len != d * cfg.digits {
        return Err(Error::Encoding(format!(
            "R has {} digits, T = {t}, m = {m} with {} digits each needs {}",
            r.len,
            cfg.digits,
            d * cfg.digits
        )));
    }
    let tern = r.ternary_digits();
    if tern.len() != r.len {
        return Err(Error::Encoding("mantissa overflows its digit count".into()));
    }
    let mut bits = vec![0u64; d];
    for (pos, &digit) in tern.iter().enumerate() {
        let (q, j) = (pos % d, pos / d);
        match digit {
            0 => {}
            2 => bits[q] |= 1 << (cfg.digits - 1 - j),
            _ => return Err(Error::Encoding(format!("ternary digit 1 at position {}", pos + 1))),
        }
    }
    let elements = bits.chunks(m + 1).map(|c| c.iter().map(|&b| bits_to_x(b, cfg.digits)).collect()).collect();
    SequenceSample::new(m, elements)
}

pub type SeqFn = Arc<dyn Fn(&SequenceSample) -> Vec<Vec<f64>> + Send + Sync>;

/// A map from sequences to per-position outputs of width `out_dim`, with a
/// bound on the absolute value of every output coordinate.
#[derive(Clone)]
pub struct SeqFunction {
    pub name: String,
    pub out_dim: usize,
    pub bound: f64,
    pub lipschitz: f64,
    f: SeqFn,
}

impl fmt::Debug for SeqFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SeqFunction({}, out {})", self.name, self.out_dim)
    }
}

impl SeqFunction {
    pub fn new(
        name: &str,
        out_dim: usize,
        bound: f64,
        lipschitz: f64,
        f: impl Fn(&SequenceSample) -> Vec<Vec<f64>> + Send + Sync + 'static,
    ) -> Self {
        SeqFunction { name: name.into(), out_dim, bound, lipschitz, f: Arc::new(f) }
    }

    pub fn eval(&self, s: &SequenceSample) -> Result<Vec<Vec<f64>>> {
        let out = (self.f)(s);
        if out.len() != s.t || out.iter().any(|o| o.len() != self.out_dim) {
            return Err(Error::DimensionMismatch { expected: self.out_dim, got: out.first().map_or(0, |o| o.len()) });
        }
        Ok(out)
    }

    /// (x_1, …, x_T) ↦ (x_1, …, x_T).
    pub fn identity(m: usize) -> Self {
        Self::new("identity", m + 1, 1.0, 1.0, |s| s.elements.clone())
    }

    /// Every position receives the mean of all elements.
    pub fn mean(m: usize) -> Self {
        Self::new("mean", m + 1, 1.0, 1.0, move |s| {
            let mut acc = vec![0.0; m + 1];
            for e in &s.elements {
                acc.iter_mut().zip(e).for_each(|(a, v)| *a += v);
            }
            acc.iter_mut().for_each(|a| *a /= s.t as f64);
            vec![acc; s.t]
        })
    }

    /// Position i receives the mean of elements 1..=i.
    pub fn causal_mean(m: usize) -> Self {
        Self::new("causal-mean", m + 1, 1.0, 1.0, move |s| {
            let mut acc = vec![0.0; m + 1];
            s.elements
                .iter()
                .enumerate()
                .map(|(i, e)| {
                    acc.iter_mut().zip(e).for_each(|(a, v)| *a += v);
                    acc.iter().map(|a| a / (i + 1) as f64).collect()
                })
                .collect()
        })
    }

    pub fn builtin(name: &str, m: usize) -> Result<Self> {
        match name {
            "identity" => Ok(Self::identity(m)),
            "mean" => Ok(Self::mean(m)),
            "causal-mean" => Ok(Self::causal_mean(m)),
            _ => domain(format!("unknown sequence function {name:?}; known: identity, mean, causal-mean")),
        }
    }
}

/// G_i(R) = [f(decode(R))]_i for every i: f applied to the digit-truncated
/// inputs, computed through the aggregated scalar.
pub fn reference_seq2seq(f: &SeqFunction, s: &SequenceSample, cfg: &DigitConfig) -> Result<Vec<Vec<f64>>> {
    let r = aggregate_r(s, cfg)?;
    f.eval(&decode_sequence(&r, s.t, s.m, cfg)?)
}
