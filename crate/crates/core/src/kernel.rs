//! von Mises-Fisher kernels K(t) = c_{m+1}(λ)·exp(λt) on S^m.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::linalg::dot;
use crate::rng;
use crate::specialfn::{bessel_ratio, gegenbauer, log_bessel_i, log_bessel_i_scaled, BesselOrder};
use crate::sphere::{gaussian_direction, log_surface_area, SpherePoint};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VmfKernel {
    pub m: usize,
    pub lambda: f64,
    /// ln c_{m+1}(λ)
    pub log_normalizer: f64,
}

impl VmfKernel {
    pub fn new(m: usize, lambda: f64) -> Result<Self> {
        Ok(VmfKernel { m, lambda, log_normalizer: vmf_log_normalizer(m, lambda)? })
    }

    /// ln K(t) = ln c + λt.
    pub fn log_eval(&self, t: f64) -> Result<f64> {
        if !(-1.0..=1.0).contains(&t) {
            return domain(format!("kernel argument must lie in [-1,1], got {t}"));
        }
        Ok(self.log_normalizer + self.lambda * t)
    }

    /// K(t); saturates to +inf beyond the exp range, use [`Self::log_eval`] there.
    pub fn eval(&self, t: f64) -> Result<f64> {
        Ok(self.log_eval(t)?.exp())
    }
}

/// ln c_{m+1}(λ) = ln w_m + (h−1) ln λ − h ln 2π − ln I_{h−1}(λ), h = (m+1)/2.
pub fn vmf_log_normalizer(m: usize, lambda: f64) -> Result<f64> {
    if m < 1 {
        return domain("vMF kernel requires m >= 1");
    }
    if !(lambda > 0.0) {
        return domain(format!("vMF kernel requires lambda > 0, got {lambda}"));
    }
    let h = (m as f64 + 1.0) / 2.0;
    let nu = h - 1.0;
    let pow = if nu > 0.0 { nu * lambda.ln() } else { 0.0 };
    Ok(log_surface_area(m)? + pow
        - h * (2.0 * std::f64::consts::PI).ln()
        - log_bessel_i(BesselOrder::new(nu)?, lambda)?)
}

/// ln c_{m+1}(λ) + λ = ln K(1), the kernel's peak, accurate for any λ.
pub fn vmf_log_peak(m: usize, lambda: f64) -> Result<f64> {
    if m < 1 {
        return domain("vMF kernel requires m >= 1");
    }
    if !(lambda > 0.0) {
        return domain(format!("vMF kernel requires lambda > 0, got {lambda}"));
    }
    let h = (m as f64 + 1.0) / 2.0;
    let nu = h - 1.0;
    let pow = if nu > 0.0 { nu * lambda.ln() } else { 0.0 };
    Ok(log_surface_area(m)? + pow
        - h * (2.0 * std::f64::consts::PI).ln()
        - log_bessel_i_scaled(BesselOrder::new(nu)?, lambda)?)
}

/// (w_{m−1}/w_m)·∫_{−1}^{1} K(t)(1−t²)^{(m−2)/2} dt, which equals 1.
///
/// Integrated in the angle θ = arccos t, where the integrand is
/// exp(ln c + λ cos θ + (m−1) ln sin θ). The log integrand is shifted by its
/// maximum and the interval is cut into panels around the peak.
pub fn kernel_norm(m: usize, lambda: f64) -> Result<f64> {
    weighted_integral(m, lambda, |_| 1.0)
}

/// a_k^m by direct quadrature of the Gegenbauer expansion coefficient.
/// Independent of the Bessel-ratio route in [`kernel_eigenvalue`].
pub fn kernel_eigenvalue_quadrature(m: usize, k: usize, lambda: f64) -> Result<f64> {
    let alpha = (m as f64 - 1.0) / 2.0;
    let q1 = gegenbauer(k, alpha, 1.0)?;
    weighted_integral(m, lambda, |t| gegenbauer(k, alpha, t).unwrap_or(f64::NAN) / q1)
}

fn weighted_integral(m: usize, lambda: f64, g: impl Fn(f64) -> f64) -> Result<f64> {
    if m < 2 {
        return domain("kernel_norm requires m >= 2");
    }
    let kern = VmfKernel::new(m, lambda)?;
    let lw = log_surface_area(m - 1)? - log_surface_area(m)?;
    let mm1 = (m - 1) as f64;
    let log_f = |th: f64| kern.log_normalizer + lambda * th.cos() + mm1 * th.sin().ln() + lw;
    // stationary point of λ cos θ + (m−1) ln sin θ
    let c = (-(mm1) + (mm1 * mm1 + 4.0 * lambda * lambda).sqrt()) / (2.0 * lambda);
    let peak = c.clamp(-1.0, 1.0).acos();
    let shift = log_f(peak);
    let width = (2.0 / (lambda + mm1).sqrt()).min(std::f64::consts::PI / 8.0);
    let mut cuts = vec![0.0];
    for j in -8i32..=8 {
        let p = peak + j as f64 * width;
        if p > *cuts.last().unwrap() && p < std::f64::consts::PI {
            cuts.push(p);
        }
    }
    cuts.push(std::f64::consts::PI);
    let mut total = 0.0;
    let mut err = 0.0;
    for w in cuts.windows(2) {
        let out = quadrature::double_exponential::integrate(
            |th| {
                let v = (log_f(th) - shift).exp();
                if v == 0.0 {
                    0.0
                } else {
                    v * g(th.cos())
                }
            },
            w[0],
            w[1],
            1e-15,
        );
        total += out.integral;
        err += out.error_estimate;
    }
    if !total.is_finite() || err > 1e-10 * total.abs().max(1e-300) {
        return Err(Error::NumericalFailure(format!(
            "kernel quadrature did not converge (m={m}, lambda={lambda}, error {err:e})"
        )));
    }
    Ok(total * shift.exp())
}

/// a_k^m = I_{ν+k}(λ)/I_ν(λ) with ν = (m−1)/2, as a product of k ratios.
pub fn kernel_eigenvalue(m: usize, k: usize, lambda: f64) -> Result<f64> {
    if m < 2 {
        return domain("kernel_eigenvalue requires m >= 2");
    }
    if !(lambda > 0.0) {
        return domain(format!("kernel_eigenvalue requires lambda > 0, got {lambda}"));
    }
    let nu = (m as f64 - 1.0) / 2.0;
    let mut a = 1.0;
    for j in 0..k {
        a *= bessel_ratio(BesselOrder::new(nu + j as f64)?, lambda)?;
    }
    Ok(a)
}

/// Lower bound (λ / ((ν+k) + √(λ² + (ν+k)²)))^k on a_k^m.
pub fn eigenvalue_lower_bound(m: usize, k: usize, lambda: f64) -> f64 {
    let v = (m as f64 - 1.0) / 2.0 + k as f64;
    (lambda / (v + lambda.hypot(v))).powi(k as i32)
}

/// Monte-Carlo estimate of (K*f)(x) = (1/w_m)∫ K(⟨x,y⟩) f(y) dw_m(y).
#[derive(Debug, Clone, PartialEq)]
pub struct ConvolutionEstimate {
    pub value: Vec<f64>,
    pub std_error: Vec<f64>,
}

pub fn convolve_vmf<F>(
    f: F,
    kern: &VmfKernel,
    x: &SpherePoint,
    n_samples: usize,
    seed: u64,
) -> Result<ConvolutionEstimate>
where
    F: Fn(&SpherePoint) -> Vec<f64> + Sync,
{
    if n_samples < 100 {
        return domain("convolve_vmf requires at least 100 samples");
    }
    crate::error::check_dim(kern.m + 1, x.coords().len())?;
    let dim = f(x).len();
    let chunks = n_samples.div_ceil(rng::CHUNK);
    let partial: Vec<(Vec<f64>, Vec<f64>)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut r = rng::rng(rng::child(seed, c as u64));
            let len = rng::CHUNK.min(n_samples - c * rng::CHUNK);
            let mut s1 = vec![0.0; dim];
            let mut s2 = vec![0.0; dim];
            for _ in 0..len {
                let y = gaussian_direction(kern.m, &mut r);
                let t = dot(x.coords(), y.coords()).clamp(-1.0, 1.0);
                let k = (kern.log_normalizer + kern.lambda * t).exp();
                for (i, v) in f(&y).into_iter().enumerate() {
                    let z = k * v;
                    s1[i] += z;
                    s2[i] += z * z;
                }
            }
            (s1, s2)
        })
        .collect();
    let n = n_samples as f64;
    let mut s1 = vec![0.0; dim];
    let mut s2 = vec![0.0; dim];
    for (a, b) in partial {
        for i in 0..dim {
            s1[i] += a[i];
            s2[i] += b[i];
        }
    }
    let value: Vec<f64> = s1.iter().map(|s| s / n).collect();
    let std_error =
        s2.iter().zip(&value).map(|(s, mu)| ((s / n - mu * mu).max(0.0) * n / (n - 1.0) / n).sqrt()).collect();
    Ok(ConvolutionEstimate { value, std_error })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::uniform_sphere_sample;

    #[test]
    fn log_peak_for_any_lambda() {
        for m in [2, 8] {
            for l in [0.5, 5.0, 30.0, 100.0, 700.0] {
                let direct = vmf_log_normalizer(m, l).unwrap() + l;
                assert!(
                    (vmf_log_peak(m, l).unwrap() - direct).abs() < 1e-10 * (1.0 + direct.abs()),
                    "m={m} lambda={l}"
                );
            }
            // K(1) → w_m (λ/2π)^{m/2} as λ → ∞
            for l in [1e12, 1e18, 1e24] {
                let h = m as f64 / 2.0;
                let limit = log_surface_area(m).unwrap() + h * (l / (2.0 * std::f64::consts::PI)).ln();
                assert!((vmf_log_peak(m, l).unwrap() - limit).abs() < 1e-9, "m={m} lambda={l}");
            }
        }
    }

    #[test]
    fn normalizer_closed_forms() {
        for &l in &[0.5, 1.0, 5.0, 20.0] {
            let c = vmf_log_normalizer(2, l).unwrap();
            let closed = l.ln() - (l.sinh()).ln();
            assert!((c - closed).abs() < 1e-12, "lambda={l}");
        }
        assert!(vmf_log_normalizer(2, 1e-9).unwrap().abs() < 1e-12);
        assert!((vmf_log_normalizer(2, 20.0).unwrap() + 16.311_120_545_886_063_693).abs() < 1e-10);
        assert!((vmf_log_normalizer(8, 100.0).unwrap() + 85.479_835_562_609_999_639).abs() < 1e-9);
        assert!((vmf_log_normalizer(16, 10.0).unwrap() + 2.601_842_008_707_445_595_8).abs() < 1e-9);
        assert!(vmf_log_normalizer(2, 0.0).is_err());
    }

    #[test]
    fn kernel_values() {
        let k = VmfKernel::new(2, 1.0).unwrap();
        assert!((k.eval(0.0).unwrap() - 1.0 / 1f64.sinh()).abs() < 1e-14);
        assert!((k.eval(1.0).unwrap() - 1f64.exp() / 1f64.sinh()).abs() < 1e-13);
        assert!(k.eval(1.1).is_err());
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=100 {
            let v = k.eval(-1.0 + 0.02 * i as f64).unwrap();
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn norm_is_one() {
        for &m in &[2, 3, 8, 16] {
            for &l in &[1.0, 10.0, 100.0, 5000.0] {
                let n = kernel_norm(m, l).unwrap();
                assert!((n - 1.0).abs() < 1e-8, "m={m} lambda={l}: {n}");
            }
        }
    }

    #[test]
    fn eigenvalues() {
        assert_eq!(kernel_eigenvalue(8, 0, 3.0).unwrap(), 1.0);
        let a1 = kernel_eigenvalue(2, 1, 1.0).unwrap();
        assert!((a1 - (1.0 / 1f64.tanh() - 1.0)).abs() < 1e-12);
        let a = kernel_eigenvalue(8, 3, 10.0).unwrap();
        assert!(a <= 1.0 && a >= eigenvalue_lower_bound(8, 3, 10.0));
    }

    #[test]
    fn gegenbauer_quadrature_matches_bessel_ratios() {
        for k in 0..=4 {
            for &l in &[1.0, 5.0, 20.0] {
                let q = kernel_eigenvalue_quadrature(2, k, l).unwrap();
                let b = kernel_eigenvalue(2, k, l).unwrap();
                assert!((q - b).abs() < 1e-6, "k={k} lambda={l}: {q} vs {b}");
            }
        }
    }

    #[test]
    fn convolution_of_constant_and_linear() {
        let kern = VmfKernel::new(2, 10.0).unwrap();
        let x = SpherePoint::new(vec![1.0, 0.0, 0.0]).unwrap();
        let c = convolve_vmf(|_| vec![2.5], &kern, &x, 200_000, 1).unwrap();
        assert!((c.value[0] - 2.5).abs() <= 3.0 * c.std_error[0]);
        let c = convolve_vmf(|y| vec![y.coords()[0]], &kern, &x, 200_000, 2).unwrap();
        let want = 1.0 / 10f64.tanh() - 0.1;
        assert!((c.value[0] - want).abs() <= 3.0 * c.std_error[0], "{:?} vs {want}", c);
        let again = convolve_vmf(|y| vec![y.coords()[0]], &kern, &x, 200_000, 2).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn sharp_kernel_reproduces_smooth_bump() {
        let kern = VmfKernel::new(2, 200.0).unwrap();
        let bump = |y: &SpherePoint| vec![(y.coords()[2] - 1.0).exp()];
        for x in uniform_sphere_sample(2, 3, 8).unwrap() {
            let c = convolve_vmf(bump, &kern, &x, 400_000, 3).unwrap();
            let fx = bump(&x)[0];
            assert!((c.value[0] - fx).abs() < 0.02 + 3.0 * c.std_error[0]);
        }
    }
}
