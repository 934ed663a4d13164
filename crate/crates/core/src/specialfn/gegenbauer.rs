use crate::error::{domain, Result};

/// Gegenbauer polynomial C_k^α(t) by the three-term recurrence
/// k·C_k = 2t(k+α−1)·C_{k−1} − (k+2α−2)·C_{k−2}.
pub fn gegenbauer(k: usize, alpha: f64, t: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return domain(format!("gegenbauer requires alpha > 0, got {alpha}"));
    }
    if !(-1.0..=1.0).contains(&t) {
        return domain(format!("gegenbauer requires t in [-1,1], got {t}"));
    }
    let (mut prev, mut cur) = (1.0, 2.0 * alpha * t);
    if k == 0 {
        return Ok(prev);
    }
    for n in 2..=k {
        let n = n as f64;
        let next = (2.0 * t * (n + alpha - 1.0) * cur - (n + 2.0 * alpha - 2.0) * prev) / n;
        prev = cur;
        cur = next;
    }
    Ok(cur)
}
