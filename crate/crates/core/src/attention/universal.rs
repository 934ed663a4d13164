//! The universal head: fixed H and W_V under which a classical head with
//! prefix tokens p_k = (0, λp^α_k, p^β_k) computes the split head exactly up
//! to the self-attention term, whose weight vanishes as M → −∞.
//!
//! Token layout is three blocks of width m+1: input, attention key, value.
//! The augmented variant appends one constant coordinate (1 for inputs, 0 for
//! prefix tokens) and moves M onto it, so every input–input logit equals M
//! regardless of the inputs' mutual angles.

use serde::{Deserialize, Serialize};

use super::ControlPoints;
use crate::error::{check_dim, domain, Result};
use crate::linalg::Matrix;
use crate::sphere::SpherePoint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionHeadParams {
    pub d: usize,
    pub h: Matrix,
    pub w_v: Matrix,
}

impl AttentionHeadParams {
    pub fn new(h: Matrix, w_v: Matrix) -> Result<Self> {
        let d = h.rows;
        check_dim(d, h.cols)?;
        check_dim(d, w_v.rows)?;
        check_dim(d, w_v.cols)?;
        if !h.is_finite() || !w_v.is_finite() {
            return domain("head matrices must be finite");
        }
        Ok(AttentionHeadParams { d, h, w_v })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefixTokens {
    pub d: usize,
    /// Sphere dimension of the head's inputs.
    pub m: usize,
    pub lambda: f64,
    pub tokens: Vec<Vec<f64>>,
    /// Self-attention suppression constant M < 0.
    pub m_const: f64,
    pub augmented: bool,
}

impl PrefixTokens {
    pub fn new(d: usize, m: usize, lambda: f64, tokens: Vec<Vec<f64>>, m_const: f64, augmented: bool) -> Result<Self> {
        if tokens.is_empty() {
            return domain("prefix must contain at least one token");
        }
        if !(m_const < 0.0) {
            return domain(format!("M must be negative, got {m_const}"));
        }
        for t in &tokens {
            check_dim(d, t.len())?;
        }
        Ok(PrefixTokens { d, m, lambda, tokens, m_const, augmented })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// M = −(λ + 30 + ln N): the self term's weight is at most e^{−30} of the
/// smallest possible prefix mass N·e^{−λ}.
pub fn default_m(lambda: f64, n: usize) -> f64 {
    -(lambda + 30.0 + (n as f64).ln())
}

pub fn embed_dim(m: usize, augmented: bool) -> usize {
    3 * (m + 1) + augmented as usize
}

/// Π: x ↦ (x, 0, 0) (plus a trailing 1 when augmented).
pub fn lift(x: &SpherePoint, augmented: bool) -> Vec<f64> {
    let k = x.coords().len();
    let mut v = vec![0.0; 3 * k + augmented as usize];
    v[..k].copy_from_slice(x.coords());
    if augmented {
        v[3 * k] = 1.0;
    }
    v
}

/// Π⁻¹: reads the first block of a 3(m+1) or 3(m+1)+1 dimensional vector.
pub fn project(y: &[f64]) -> Result<Vec<f64>> {
    let k = y.len() / 3;
    if k == 0 || (y.len() % 3 != 0 && y.len() % 3 != 1) {
        return domain(format!("vector of length {} is not a lifted embedding", y.len()));
    }
    Ok(y[..k].to_vec())
}

pub fn build_universal_head(m: usize, m_const: f64, augmented: bool) -> Result<AttentionHeadParams> {
    if !(m_const < 0.0) {
        return domain(format!("M must be negative, got {m_const}"));
    }
    let k = m + 1;
    let d = embed_dim(m, augmented);
    let mut h = Matrix::zeros(d, d);
    let mut w = Matrix::zeros(d, d);
    for i in 0..k {
        if !augmented {
            h[(i, i)] = m_const;
        }
        h[(i, k + i)] = 1.0;
        w[(i, 2 * k + i)] = 1.0;
    }
    if augmented {
        h[(d - 1, d - 1)] = m_const;
    }
    AttentionHeadParams::new(h, w)
}

pub fn assemble_prefix_tokens(cp: &ControlPoints, m_const: f64, augmented: bool) -> Result<PrefixTokens> {
    let k = cp.m + 1;
    check_dim(k, cp.out_dim())?;
    let d = embed_dim(cp.m, augmented);
    let tokens = cp
        .items
        .iter()
        .map(|(a, b)| {
            let mut t = vec![0.0; d];
            for i in 0..k {
                t[k + i] = cp.lambda * a.coords()[i];
                t[2 * k + i] = b[i];
            }
            t
        })
        .collect();
    PrefixTokens::new(d, cp.m, cp.lambda, tokens, m_const, augmented)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dot, norm};
    use crate::sphere::uniform_sphere_sample;

    fn cp(m: usize, n: usize, lambda: f64) -> ControlPoints {
        let a = uniform_sphere_sample(m, n, 1).unwrap();
        let b = uniform_sphere_sample(m, n, 2).unwrap();
        ControlPoints::new(m, lambda, a.into_iter().zip(b.into_iter().map(|p| p.into_coords())).collect()).unwrap()
    }

    #[test]
    fn lift_and_project() {
        for x in uniform_sphere_sample(3, 5, 4).unwrap() {
            let l = lift(&x, false);
            assert_eq!(l.len(), 12);
            assert_eq!(project(&l).unwrap(), x.coords());
            assert!((norm(&l) - 1.0).abs() < 1e-15);
            let a = lift(&x, true);
            assert_eq!(a.len(), 13);
            assert_eq!(a[12], 1.0);
            assert_eq!(project(&a).unwrap(), x.coords());
        }
        assert!(project(&[1.0]).is_err());
    }

    #[test]
    fn block_algebra() {
        for &aug in &[false, true] {
            let c = cp(2, 6, 4.5);
            let head = build_universal_head(2, -20.0, aug).unwrap();
            let tok = assemble_prefix_tokens(&c, -20.0, aug).unwrap();
            assert_eq!(tok.len(), 6);
            for x in uniform_sphere_sample(2, 4, 5).unwrap() {
                let lx = lift(&x, aug);
                assert!(head.w_v.mul_vec(&lx).unwrap().iter().all(|&v| v == 0.0));
                for ((a, b), p) in c.items.iter().zip(&tok.tokens) {
                    let wv = head.w_v.mul_vec(p).unwrap();
                    assert_eq!(&wv[..3], &b[..]);
                    assert!(wv[3..].iter().all(|&v| v == 0.0));
                    let logit = head.h.bilinear(&lx, p).unwrap();
                    assert!((logit - 4.5 * dot(x.coords(), a.coords())).abs() < 1e-13);
                    assert!((norm(&p[3..6]) - 4.5).abs() < 1e-13);
                }
                let y = uniform_sphere_sample(2, 1, 77).unwrap().remove(0);
                let cross = head.h.bilinear(&lx, &lift(&y, aug)).unwrap();
                if aug {
                    assert_eq!(cross, -20.0);
                } else {
                    assert!((cross + 20.0 * dot(x.coords(), y.coords())).abs() < 1e-13);
                }
            }
        }
        assert!(build_universal_head(2, 1.0, true).is_err());
    }

    #[test]
    fn token_norm_grows_with_lambda() {
        let mut prev = 0.0;
        for l in [1.0, 2.0, 8.0, 64.0] {
            let t = assemble_prefix_tokens(&cp(2, 4, l), -1.0, true).unwrap();
            let n = norm(&t.tokens[0][3..6]);
            assert!(n > prev);
            prev = n;
        }
    }
}
