//! Geometry of the unit sphere S^m ⊂ R^{m+1}.

mod partition;

pub use partition::{equal_area_partition, random_voronoi_partition, Cell, Partition};

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{check_dim, domain, Error, Result};
use crate::linalg::{dot, norm};
use crate::rng;
use crate::specialfn::{log_gamma, reg_inc_beta_split};

/// Unit vector in R^{m+1}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SpherePoint {
    coords: Vec<f64>,
}

impl SpherePoint {
    /// Wraps `coords`, which must already have unit norm (within 1e-12).
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return domain(format!("a sphere point needs at least 2 coordinates, got {}", coords.len()));
        }
        let n = norm(&coords);
        if !n.is_finite() || (n - 1.0).abs() > 1e-12 {
            return domain(format!("coordinates have norm {n}, expected 1"));
        }
        Ok(SpherePoint { coords })
    }

    pub(crate) fn from_unit(coords: Vec<f64>) -> Self {
        debug_assert!((norm(&coords) - 1.0).abs() < 1e-9);
        SpherePoint { coords }
    }

    /// North pole (0, …, 0, 1) of S^m.
    pub fn pole(m: usize) -> Self {
        let mut c = vec![0.0; m + 1];
        c[m] = 1.0;
        SpherePoint { coords: c }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    /// Dimension m of the sphere the point lies on.
    pub fn m(&self) -> usize {
        self.coords.len() - 1
    }

    pub fn dot(&self, other: &SpherePoint) -> Result<f64> {
        check_dim(self.coords.len(), other.coords.len())?;
        Ok(dot(&self.coords, &other.coords))
    }
}

impl TryFrom<Vec<f64>> for SpherePoint {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        SpherePoint::new(v)
    }
}

impl From<SpherePoint> for Vec<f64> {
    fn from(p: SpherePoint) -> Vec<f64> {
        p.coords
    }
}

pub fn project_to_sphere(v: &[f64]) -> Result<SpherePoint> {
    if v.len() < 2 {
        return domain(format!("need at least 2 coordinates, got {}", v.len()));
    }
    let n = norm(v);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::DegenerateInput(format!("cannot normalise a vector of norm {n}")));
    }
    let mut c: Vec<f64> = v.iter().map(|x| x / n).collect();
    // one refinement step keeps the norm within a couple of ulps of 1
    let n2 = norm(&c);
    c.iter_mut().for_each(|x| *x /= n2);
    Ok(SpherePoint { coords: c })
}

pub fn geodesic_distance(x: &SpherePoint, y: &SpherePoint) -> Result<f64> {
    Ok(x.dot(y)?.clamp(-1.0, 1.0).acos())
}

pub fn log_surface_area(m: usize) -> Result<f64> {
    if m < 1 {
        return domain("surface_area requires m >= 1");
    }
    let h = (m as f64 + 1.0) / 2.0;
    Ok(2f64.ln() + h * PI.ln() - log_gamma(h)?)
}

/// w_m = 2π^{(m+1)/2} / Γ((m+1)/2).
pub fn surface_area(m: usize) -> Result<f64> {
    Ok(log_surface_area(m)?.exp())
}

/// Area of the cap {y : ⟨y, pole⟩ ≥ 1 − δ} for δ ∈ (0, 1].
pub fn cap_area(m: usize, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta <= 1.0) {
        return domain(format!("cap_area requires delta in (0,1], got {delta}"));
    }
    let x = delta * (2.0 - delta);
    let y = (1.0 - delta) * (1.0 - delta);
    Ok(0.5 * surface_area(m)? * reg_inc_beta_split(x, y, m as f64 / 2.0, 0.5)?)
}

/// Area of a cap of geodesic radius θ ∈ [0, π].
pub fn cap_area_angle(m: usize, theta: f64) -> Result<f64> {
    if !(0.0..=PI).contains(&theta) {
        return domain(format!("cap angle must lie in [0, pi], got {theta}"));
    }
    let w = surface_area(m)?;
    let half = |t: f64| -> Result<f64> {
        let (s, c) = t.sin_cos();
        Ok(0.5 * w * reg_inc_beta_split(s * s, c * c, m as f64 / 2.0, 0.5)?)
    };
    if theta <= PI / 2.0 {
        half(theta)
    } else {
        Ok(w - half(PI - theta)?)
    }
}

/// Geodesic radius of the cap with the given area.
pub fn cap_radius_for_area(m: usize, area: f64) -> Result<f64> {
    let w = surface_area(m)?;
    if !(0.0..=w * (1.0 + 1e-12)).contains(&area) {
        return domain(format!("cap area {area} outside [0, {w}]"));
    }
    let (mut lo, mut hi) = (0.0, PI);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if cap_area_angle(m, mid)? < area {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `count` i.i.d. uniform points on S^m by normalising Gaussian vectors.
///
/// Points are produced in fixed-size chunks with their own derived seeds, so
/// the output does not depend on the thread count and the first `n` points of
/// a longer run equal a run of length `n`.
pub fn uniform_sphere_sample(m: usize, count: usize, seed: u64) -> Result<Vec<SpherePoint>> {
    if m < 1 {
        return domain("uniform_sphere_sample requires m >= 1");
    }
    if count < 1 {
        return domain("uniform_sphere_sample requires count >= 1");
    }
    let chunks = count.div_ceil(rng::CHUNK);
    let out: Vec<Vec<SpherePoint>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut r = rng::rng(rng::child(seed, c as u64));
            let len = rng::CHUNK.min(count - c * rng::CHUNK);
            (0..len).map(|_| gaussian_direction(m, &mut r)).collect()
        })
        .collect();
    Ok(out.into_iter().flatten().collect())
}

pub(crate) fn gaussian_direction(m: usize, r: &mut rng::Rng) -> SpherePoint {
    loop {
        let v: Vec<f64> = (0..=m).map(|_| StandardNormal.sample(r)).collect();
        if let Ok(p) = project_to_sphere(&v) {
            return p;
        }
    }
}

/// Stereographic projection from the north pole: y_i = x_i / (1 − x_{m+1}).
pub fn stereographic(x: &SpherePoint) -> Result<Vec<f64>> {
    let c = x.coords();
    let last = c[c.len() - 1];
    let denom = 1.0 - last;
    if denom <= 0.0 {
        return Err(Error::PoleSingularity);
    }
    Ok(c[..c.len() - 1].iter().map(|v| v / denom).collect())
}

/// Inverse stereographic map R^m → S^m \ {north pole}.
pub fn stereographic_inverse(y: &[f64]) -> Result<SpherePoint> {
    if y.is_empty() {
        return domain("stereographic_inverse needs at least one coordinate");
    }
    if y.iter().any(|v| !v.is_finite()) {
        return domain("stereographic_inverse needs finite coordinates");
    }
    let s = dot(y, y);
    let mut c: Vec<f64> = y.iter().map(|v| 2.0 * v / (s + 1.0)).collect();
    c.push((s - 1.0) / (s + 1.0));
    project_to_sphere(&c)
}
