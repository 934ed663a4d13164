//! Attention heads on the sphere: the core head Σ exp(λ⟨x,p^α⟩)p^β, its
//! softmax-normalised split form, and the classical head over prefix plus
//! input tokens. The universal head embeds the split head exactly into a
//! classical one.

mod artifact;
mod stack;
mod universal;

pub use artifact::{export_prefix, import_prefix, PrefixArtifact};
pub use stack::{transformer_eval, transformer_trace, Layer, MapFn, Stage, TransformerStack};
pub use universal::{
    assemble_prefix_tokens, build_universal_head, default_m, lift, project, AttentionHeadParams, PrefixTokens,
};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, domain, Result};
use crate::linalg::{dot, log_sum_exp};
use crate::sphere::SpherePoint;

/// Control data (p^α_k, p^β_k) of a head with concentration λ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlPoints {
    pub m: usize,
    pub lambda: f64,
    pub items: Vec<(SpherePoint, Vec<f64>)>,
}

impl ControlPoints {
    /// Validates dimensions: every p^α on S^m, every p^β of one common length.
    pub fn new(m: usize, lambda: f64, items: Vec<(SpherePoint, Vec<f64>)>) -> Result<Self> {
        if items.is_empty() {
            return domain("control points must be nonempty");
        }
        if !(lambda > 0.0) || !lambda.is_finite() {
            return domain(format!("lambda must be positive and finite, got {lambda}"));
        }
        let out = items[0].1.len();
        if out == 0 {
            return domain("p_beta must be nonempty");
        }
        for (a, b) in &items {
            check_dim(m + 1, a.coords().len())?;
            check_dim(out, b.len())?;
        }
        Ok(ControlPoints { m, lambda, items })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn out_dim(&self) -> usize {
        self.items[0].1.len()
    }

    /// Logits λ⟨x, p^α_k⟩.
    pub fn logits(&self, x: &SpherePoint) -> Result<Vec<f64>> {
        check_dim(self.m + 1, x.coords().len())?;
        Ok(self.items.iter().map(|(a, _)| self.lambda * dot(x.coords(), a.coords())).collect())
    }

    pub fn max_beta_norm(&self) -> f64 {
        self.items.iter().map(|(_, b)| crate::linalg::norm(b)).fold(0.0, f64::max)
    }
}

/// Signed log magnitude of each output component of the core head.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedLog {
    pub sign: f64,
    pub ln_abs: f64,
}

impl SignedLog {
    pub fn value(&self) -> f64 {
        self.sign * self.ln_abs.exp()
    }
}

/// Core head in signed-log form: positive and negative contributions of each
/// component are accumulated separately with log-sum-exp, then combined.
pub fn core_head_log(cp: &ControlPoints, x: &SpherePoint) -> Result<Vec<SignedLog>> {
    let logits = cp.logits(x)?;
    let mut out = Vec::with_capacity(cp.out_dim());
    let mut pos = Vec::with_capacity(cp.len());
    let mut neg = Vec::with_capacity(cp.len());
    for i in 0..cp.out_dim() {
        pos.clear();
        neg.clear();
        for (l, (_, b)) in logits.iter().zip(&cp.items) {
            let v = b[i];
            if v > 0.0 {
                pos.push(l + v.ln());
            } else if v < 0.0 {
                neg.push(l + (-v).ln());
            }
        }
        let (lp, ln) = (log_sum_exp(&pos), log_sum_exp(&neg));
        out.push(if lp == f64::NEG_INFINITY && ln == f64::NEG_INFINITY {
            SignedLog { sign: 0.0, ln_abs: f64::NEG_INFINITY }
        } else if lp >= ln {
            SignedLog { sign: 1.0, ln_abs: lp + (-(ln - lp).exp()).ln_1p() }
        } else {
            SignedLog { sign: -1.0, ln_abs: ln + (-(lp - ln).exp()).ln_1p() }
        });
    }
    Ok(out)
}

/// Σ_k exp(λ⟨x, p^α_k⟩) p^β_k. Saturates to ±inf beyond the exp range; use
/// [`core_head_log`] for large λ.
pub fn core_head(cp: &ControlPoints, x: &SpherePoint) -> Result<Vec<f64>> {
    Ok(core_head_log(cp, x)?.iter().map(SignedLog::value).collect())
}

/// Softmax weights of the split head.
pub fn split_weights(cp: &ControlPoints, x: &SpherePoint) -> Result<Vec<f64>> {
    let logits = cp.logits(x)?;
    let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = logits.iter().map(|l| (l - mx).exp()).collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    Ok(w)
}

/// Softmax-weighted average of the p^β with logits λ⟨x, p^α⟩.
///
/// Accumulated as offsets from the heaviest item's p^β, so identical values
/// come out exactly.
pub fn split_head(cp: &ControlPoints, x: &SpherePoint) -> Result<Vec<f64>> {
    let w = split_weights(cp, x)?;
    let anchor = w.iter().enumerate().fold(0, |best, (k, v)| if *v > w[best] { k } else { best });
    let base = &cp.items[anchor].1;
    let mut out = base.clone();
    for (wk, (_, b)) in w.iter().zip(&cp.items) {
        for ((o, v), b0) in out.iter_mut().zip(b).zip(base) {
            *o += wk * (v - b0);
        }
    }
    Ok(out)
}

/// ln Σ_k exp(λ⟨x, p^α_k⟩), the split head's log denominator.
pub fn log_denominator(cp: &ControlPoints, x: &SpherePoint) -> Result<f64> {
    Ok(log_sum_exp(&cp.logits(x)?))
}

/// The classical head: output k attends over all prefix tokens and all inputs
/// with logits x_kᵀ H p_i and x_kᵀ H x_j and values W_V p_i, W_V x_j.
pub fn classical_head(
    inputs: &[Vec<f64>],
    prefix: &PrefixTokens,
    params: &AttentionHeadParams,
) -> Result<Vec<Vec<f64>>> {
    use rayon::prelude::*;
    let d = params.d;
    check_dim(d, prefix.d)?;
    if prefix.tokens.is_empty() {
        return domain("prefix must be nonempty");
    }
    for v in inputs.iter().chain(&prefix.tokens) {
        check_dim(d, v.len())?;
    }
    let keys: Vec<&Vec<f64>> = prefix.tokens.iter().chain(inputs.iter()).collect();
    let values: Vec<Vec<f64>> = keys.iter().map(|k| params.w_v.mul_vec(k)).collect::<Result<_>>()?;
    let hk: Vec<Vec<f64>> = keys.iter().map(|k| params.h.mul_vec(k)).collect::<Result<_>>()?;
    inputs
        .par_iter()
        .map(|x| {
            let logits: Vec<f64> = hk.iter().map(|k| dot(x, k)).collect();
            let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut out = vec![0.0; d];
            let mut z = 0.0;
            for (l, v) in logits.iter().zip(&values) {
                let w = (l - mx).exp();
                z += w;
                if w != 0.0 {
                    for (o, vi) in out.iter_mut().zip(v) {
                        *o += w * vi;
                    }
                }
            }
            out.iter_mut().for_each(|o| *o /= z);
            Ok(out)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::{project_to_sphere, uniform_sphere_sample};

    fn random_cp(m: usize, n: usize, lambda: f64, seed: u64) -> ControlPoints {
        let a = uniform_sphere_sample(m, n, seed).unwrap();
        let b = uniform_sphere_sample(m, n, seed + 1).unwrap();
        ControlPoints::new(m, lambda, a.into_iter().zip(b.into_iter().map(|p| p.into_coords())).collect()).unwrap()
    }

    #[test]
    fn core_head_examples() {
        let x = project_to_sphere(&[1.0, 2.0, 3.0]).unwrap();
        let v = vec![0.5, -2.0, 3.0];
        let cp = ControlPoints::new(2, 2.0, vec![(x.clone(), v.clone())]).unwrap();
        let out = core_head(&cp, &x).unwrap();
        for (o, vi) in out.iter().zip(&v) {
            assert!((o - 2f64.exp() * vi).abs() < 1e-13);
        }
        let perp = project_to_sphere(&[2.0, -1.0, 0.0]).unwrap();
        let cp = ControlPoints::new(2, 2.0, vec![(perp, v.clone())]).unwrap();
        let out = core_head(&cp, &x).unwrap();
        for (o, vi) in out.iter().zip(&v) {
            assert!((o - vi).abs() < 1e-13);
        }
        assert!(ControlPoints::new(2, 1.0, vec![]).is_err());
    }

    #[test]
    fn core_equals_split_times_denominator() {
        let cp = random_cp(3, 50, 7.0, 1);
        for x in uniform_sphere_sample(3, 20, 9).unwrap() {
            let core = core_head(&cp, &x).unwrap();
            let split = split_head(&cp, &x).unwrap();
            let z = log_denominator(&cp, &x).unwrap().exp();
            for (c, s) in core.iter().zip(&split) {
                assert!((c - s * z).abs() <= 1e-12 * z * cp.max_beta_norm());
            }
        }
    }

    #[test]
    fn split_head_properties() {
        let x = uniform_sphere_sample(2, 1, 3).unwrap().remove(0);
        let a = uniform_sphere_sample(2, 10, 4).unwrap();
        let cp = ControlPoints::new(2, 30.0, a.into_iter().map(|p| (p, vec![1.25, -0.5])).collect()).unwrap();
        assert_eq!(split_head(&cp, &x).unwrap(), vec![1.25, -0.5]);
        let single = ControlPoints::new(2, 3.0, vec![(x.clone(), vec![0.1, 0.2, 0.3])]).unwrap();
        assert_eq!(split_head(&single, &x).unwrap(), vec![0.1, 0.2, 0.3]);
        let cp = random_cp(2, 40, 12.0, 5);
        let w = split_weights(&cp, &x).unwrap();
        assert!(w.iter().all(|&v| v >= 0.0));
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn heads_finite_at_large_lambda() {
        let cp = random_cp(4, 64, 5000.0, 8);
        for x in uniform_sphere_sample(4, 10, 2).unwrap() {
            assert!(split_head(&cp, &x).unwrap().iter().all(|v| v.is_finite()));
            assert!(core_head_log(&cp, &x).unwrap().iter().all(|v| v.ln_abs.is_finite()));
            let tok = assemble_prefix_tokens(&cp, default_m(cp.lambda, cp.len()), true).unwrap();
            let head = build_universal_head(4, tok.m_const, true).unwrap();
            let out = classical_head(&[lift(&x, true)], &tok, &head).unwrap();
            assert!(out[0].iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn classical_head_symmetries() {
        let cp = random_cp(2, 30, 5.0, 6);
        let tok = assemble_prefix_tokens(&cp, -40.0, true).unwrap();
        let head = build_universal_head(2, -40.0, true).unwrap();
        let xs: Vec<Vec<f64>> = uniform_sphere_sample(2, 3, 7).unwrap().iter().map(|x| lift(x, true)).collect();
        let out = classical_head(&xs, &tok, &head).unwrap();
        let mut rev = tok.clone();
        rev.tokens.reverse();
        let out2 = classical_head(&xs, &rev, &head).unwrap();
        for (a, b) in out.iter().flatten().zip(out2.iter().flatten()) {
            assert!((a - b).abs() < 1e-14);
        }
        let dup = vec![xs[0].clone(), xs[0].clone()];
        let o = classical_head(&dup, &tok, &head).unwrap();
        assert_eq!(o[0], o[1]);
        assert!(classical_head(&[vec![1.0; 3]], &tok, &head).is_err());
    }

    #[test]
    fn classical_matches_split_for_single_input() {
        let cp = random_cp(4, 128, 32.0, 10);
        for &aug in &[false, true] {
            let mm = default_m(32.0, 128);
            let tok = assemble_prefix_tokens(&cp, mm, aug).unwrap();
            let head = build_universal_head(4, mm, aug).unwrap();
            for x in uniform_sphere_sample(4, 25, 11).unwrap() {
                let c = project(&classical_head(&[lift(&x, aug)], &tok, &head).unwrap()[0]).unwrap();
                let s = split_head(&cp, &x).unwrap();
                let tol = cp.max_beta_norm() * (mm + 32.0).exp() * 2.0 / 128.0 + 1e-14;
                for (a, b) in c.iter().zip(&s) {
                    assert!((a - b).abs() <= tol);
                }
            }
        }
    }
}
